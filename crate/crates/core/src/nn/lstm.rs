//! Fused bidirectional LSTM with hand-written backpropagation through time.
//!
//! Gate order follows the common `i, f, g, o` layout; per direction the weights are
//! `w_ih [4H, In]`, `w_hh [4H, H]` and a single bias `b [4H]`.

use crate::nn::gemm::{gemm, MatMut, MatRef};
use crate::nn::graph::{Backward, BackwardCtx, Graph, Var};
use crate::nn::kernels::{gemm_acc, lstm_cell};
use crate::nn::ops::col_sums;
use crate::nn::tensor::Tensor;

/// Parameter handles of one LSTM direction.
#[derive(Debug, Clone, Copy)]
pub struct LstmDir {
    pub w_ih: Var,
    pub w_hh: Var,
    pub b: Var,
}

struct BiLstmOp {
    n: usize,
    l: usize,
    inp: usize,
    h: usize,
    /// Per direction, time-major `[L, N, *]`: activated gates, cell state, `tanh(c)`, hidden.
    gates: [Vec<f32>; 2],
    cells: [Vec<f32>; 2],
    tanh_cells: [Vec<f32>; 2],
    hidden: [Vec<f32>; 2],
}

fn time(d: usize, l: usize, s: usize) -> usize {
    if d == 0 {
        s
    } else {
        l - 1 - s
    }
}

/// `[N, L, C]` to `[L, N, C]` and back.
fn swap_outer(src: &[f32], a: usize, b: usize, c: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; src.len()];
    for i in 0..a {
        for j in 0..b {
            out[(j * a + i) * c..(j * a + i + 1) * c]
                .copy_from_slice(&src[(i * b + j) * c..(i * b + j + 1) * c]);
        }
    }
    out
}

impl Backward for BiLstmOp {
    fn backward(&self, c: &BackwardCtx) -> Vec<Option<Tensor>> {
        let (n, l, inp, h) = (self.n, self.l, self.inp, self.h);
        let g4 = 4 * h;
        let blk = n * g4;
        let x = c.inputs[0].data();
        let gout = c.grad.data();
        let mut dx = c.needs(0).then(|| vec![0.0f32; n * l * inp]);
        let mut grads: Vec<Option<Tensor>> = vec![None; 7];
        for d in 0..2 {
            let (w_ih, w_hh) = (c.inputs[1 + 3 * d].data(), c.inputs[2 + 3 * d].data());
            let (acts, cells, tcs) = (&self.gates[d], &self.cells[d], &self.tanh_cells[d]);
            let mut dg = vec![0.0f32; l * blk];
            let mut dh_next = vec![0.0f32; n * h];
            let mut dc_next = vec![0.0f32; n * h];
            for s in (0..l).rev() {
                let t = time(d, l, s);
                let tp = (s > 0).then(|| time(d, l, s - 1));
                for b in 0..n {
                    let row = t * n + b;
                    let a = &acts[row * g4..(row + 1) * g4];
                    let dgr = &mut dg[row * g4..(row + 1) * g4];
                    let go = &gout[(b * l + t) * 2 * h + d * h..][..h];
                    for j in 0..h {
                        let dh = go[j] + dh_next[b * h + j];
                        let tc = tcs[row * h + j];
                        let (i, f, gg, o) = (a[j], a[h + j], a[2 * h + j], a[3 * h + j]);
                        let c_prev = tp.map_or(0.0, |tp| cells[(tp * n + b) * h + j]);
                        let dc = dh * o * (1.0 - tc * tc) + dc_next[b * h + j];
                        dc_next[b * h + j] = dc * f;
                        dgr[j] = dc * gg * i * (1.0 - i);
                        dgr[h + j] = dc * c_prev * f * (1.0 - f);
                        dgr[2 * h + j] = dc * i * (1.0 - gg * gg);
                        dgr[3 * h + j] = dh * tc * o * (1.0 - o);
                    }
                }
                if s > 0 {
                    dh_next.fill(0.0);
                    gemm_acc(n, g4, h, &dg[t * blk..(t + 1) * blk], w_hh, &mut dh_next);
                }
            }
            if c.needs(2 + 3 * d) && l > 1 {
                // Steps with a predecessor pair with the previous hidden block: contiguous in time-major order.
                let (dg_part, h_part) = if d == 0 {
                    (&dg[blk..], &self.hidden[d][..(l - 1) * n * h])
                } else {
                    (&dg[..(l - 1) * blk], &self.hidden[d][n * h..])
                };
                let mut dw = vec![0.0f32; g4 * h];
                gemm(
                    g4,
                    (l - 1) * n,
                    h,
                    1.0,
                    MatRef::rm(dg_part, g4, true),
                    MatRef::rm(h_part, h, false),
                    0.0,
                    MatMut::rm(&mut dw, h),
                );
                grads[2 + 3 * d] = Some(Tensor::from_vec(&[g4, h], dw));
            } else if c.needs(2 + 3 * d) {
                grads[2 + 3 * d] = Some(Tensor::zeros(&[g4, h]));
            }
            if c.needs(3 + 3 * d) {
                grads[3 + 3 * d] = Some(Tensor::from_vec(&[g4], col_sums(&dg, g4)));
            }
            let dgb = swap_outer(&dg, l, n, g4);
            if let Some(dx) = dx.as_mut() {
                gemm(
                    n * l,
                    g4,
                    inp,
                    1.0,
                    MatRef::rm(&dgb, g4, false),
                    MatRef::rm(w_ih, inp, false),
                    1.0,
                    MatMut::rm(dx, inp),
                );
            }
            if c.needs(1 + 3 * d) {
                let mut dw = vec![0.0f32; g4 * inp];
                gemm(
                    g4,
                    n * l,
                    inp,
                    1.0,
                    MatRef::rm(&dgb, g4, true),
                    MatRef::rm(x, inp, false),
                    0.0,
                    MatMut::rm(&mut dw, inp),
                );
                grads[1 + 3 * d] = Some(Tensor::from_vec(&[g4, inp], dw));
            }
        }
        grads[0] = dx.map(|d| Tensor::from_vec(c.inputs[0].shape(), d));
        grads
    }
}

impl Graph {
    /// Bidirectional LSTM over `[N, L, In]`, zero initial state, output `[N, L, 2H]` with the
    /// forward direction in the first `H` channels.
    pub fn bilstm(&mut self, x: Var, fwd: LstmDir, bwd: LstmDir) -> Var {
        let xs = self.shape(x).to_vec();
        assert_eq!(xs.len(), 3, "bilstm expects [N, L, In]");
        let (n, l, inp) = (xs[0], xs[1], xs[2]);
        let h = self.shape(fwd.w_hh)[1];
        let g4 = 4 * h;
        for dir in [fwd, bwd] {
            assert_eq!(self.shape(dir.w_ih), &[g4, inp], "w_ih shape");
            assert_eq!(self.shape(dir.w_hh), &[g4, h], "w_hh shape");
            assert_eq!(self.shape(dir.b), &[g4], "bias shape");
        }
        let blk = n * g4;
        let mut out = vec![0.0f32; n * l * 2 * h];
        let mut st: [[Vec<f32>; 2]; 4] = Default::default();
        let xd = self.value(x).data();
        for (d, dir) in [fwd, bwd].iter().enumerate() {
            let (w_ih, w_hh, bias) = (
                self.value(dir.w_ih).data(),
                self.value(dir.w_hh).data(),
                self.value(dir.b).data(),
            );
            let mut proj = vec![0.0f32; n * l * g4];
            for row in proj.chunks_exact_mut(g4) {
                row.copy_from_slice(bias);
            }
            gemm(
                n * l,
                inp,
                g4,
                1.0,
                MatRef::rm(xd, inp, false),
                MatRef::rm(w_ih, inp, true),
                1.0,
                MatMut::rm(&mut proj, g4),
            );
            let mut a = swap_outer(&proj, n, l, g4);
            drop(proj);
            let mut w_t = vec![0.0f32; h * g4];
            for r in 0..g4 {
                for k in 0..h {
                    w_t[k * g4 + r] = w_hh[r * h + k];
                }
            }
            let (mut cs, mut tcs, mut hs) = (
                vec![0.0f32; l * n * h],
                vec![0.0f32; l * n * h],
                vec![0.0f32; l * n * h],
            );
            for s in 0..l {
                let t = time(d, l, s);
                let cur = t * n * h..(t + 1) * n * h;
                let gates = &mut a[t * blk..(t + 1) * blk];
                let prev = (s > 0).then(|| time(d, l, s - 1) * n * h);
                if let Some(p) = prev {
                    gemm_acc(n, h, g4, &hs[p..p + n * h], &w_t, gates);
                }
                let c_prev = prev.map(|p| cs[p..p + n * h].to_vec());
                lstm_cell(
                    h,
                    gates,
                    c_prev.as_deref(),
                    &mut cs[cur.clone()],
                    &mut tcs[cur.clone()],
                    &mut hs[cur],
                );
            }
            for b in 0..n {
                for t in 0..l {
                    out[(b * l + t) * 2 * h + d * h..][..h]
                        .copy_from_slice(&hs[(t * n + b) * h..][..h]);
                }
            }
            st[0][d] = a;
            st[1][d] = cs;
            st[2][d] = tcs;
            st[3][d] = hs;
        }
        let [gates, cells, tanh_cells, hidden] = st;
        let op = BiLstmOp {
            n,
            l,
            inp,
            h,
            gates,
            cells,
            tanh_cells,
            hidden,
        };
        self.push(
            Tensor::from_vec(&[n, l, 2 * h], out),
            &[x, fwd.w_ih, fwd.w_hh, fwd.b, bwd.w_ih, bwd.w_hh, bwd.b],
            op,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ops::sigmoid_f32;
    use crate::nn::testutil::{check_grads, rand_tensor};

    /// Unfused reference cell built from graph primitives on scalars.
    fn reference(x: &Tensor, p: &[Tensor], h: usize) -> Vec<f32> {
        let (n, l, inp) = (x.dim(0), x.dim(1), x.dim(2));
        let mut out = vec![0.0f32; n * l * 2 * h];
        for d in 0..2 {
            let (w_ih, w_hh, b) = (p[3 * d].data(), p[3 * d + 1].data(), p[3 * d + 2].data());
            for bi in 0..n {
                let mut hs = vec![0.0f32; h];
                let mut cs = vec![0.0f32; h];
                let order: Vec<usize> = if d == 0 {
                    (0..l).collect()
                } else {
                    (0..l).rev().collect()
                };
                for t in order {
                    let xt = &x.data()[(bi * l + t) * inp..(bi * l + t + 1) * inp];
                    let pre: Vec<f32> = (0..4 * h)
                        .map(|r| {
                            b[r] + (0..inp).map(|k| w_ih[r * inp + k] * xt[k]).sum::<f32>()
                                + (0..h).map(|k| w_hh[r * h + k] * hs[k]).sum::<f32>()
                        })
                        .collect();
                    for j in 0..h {
                        let i = sigmoid_f32(pre[j]);
                        let f = sigmoid_f32(pre[h + j]);
                        let g = pre[2 * h + j].tanh();
                        let o = sigmoid_f32(pre[3 * h + j]);
                        cs[j] = f * cs[j] + i * g;
                        hs[j] = o * cs[j].tanh();
                        out[(bi * l + t) * 2 * h + d * h + j] = hs[j];
                    }
                }
            }
        }
        out
    }

    fn params(inp: usize, h: usize, seed: u64) -> Vec<Tensor> {
        (0..2)
            .flat_map(|d| {
                vec![
                    rand_tensor(&[4 * h, inp], seed + 3 * d).map(|v| v * 0.5),
                    rand_tensor(&[4 * h, h], seed + 3 * d + 1).map(|v| v * 0.5),
                    rand_tensor(&[4 * h], seed + 3 * d + 2).map(|v| v * 0.5),
                ]
            })
            .collect()
    }

    #[test]
    fn matches_reference_cell() {
        let x = rand_tensor(&[2, 5, 3], 1);
        let p = params(3, 4, 10);
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let pv: Vec<Var> = p.iter().map(|t| g.constant(t.clone())).collect();
        let y = g.bilstm(
            xv,
            LstmDir {
                w_ih: pv[0],
                w_hh: pv[1],
                b: pv[2],
            },
            LstmDir {
                w_ih: pv[3],
                w_hh: pv[4],
                b: pv[5],
            },
        );
        let want = reference(&x, &p, 4);
        for (a, b) in g.value(y).data().iter().zip(&want) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn grads_match_finite_differences() {
        let mut inputs = vec![rand_tensor(&[2, 4, 3], 2)];
        inputs.extend(params(3, 2, 20));
        check_grads(inputs, |g, v| {
            g.bilstm(
                v[0],
                LstmDir {
                    w_ih: v[1],
                    w_hh: v[2],
                    b: v[3],
                },
                LstmDir {
                    w_ih: v[4],
                    w_hh: v[5],
                    b: v[6],
                },
            )
        });
    }
}
