//! Elementwise, shape and dense ops.

use crate::nn::gemm::{gemm, MatMut, MatRef};
use crate::nn::graph::{Backward, BackwardCtx, Graph, Var};
use crate::nn::tensor::Tensor;

struct FnBackward<F>(F);

impl<F: Fn(&BackwardCtx) -> Vec<Option<Tensor>>> Backward for FnBackward<F> {
    fn backward(&self, ctx: &BackwardCtx) -> Vec<Option<Tensor>> {
        (self.0)(ctx)
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f32, f32) -> f32) -> Tensor {
    assert_eq!(a.shape(), b.shape(), "elementwise shape mismatch");
    Tensor::from_vec(
        a.shape(),
        a.data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| f(*x, *y))
            .collect(),
    )
}

pub(crate) fn sigmoid_f32(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Row-major strides of `shape`.
fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

pub(crate) fn permute_tensor(t: &Tensor, perm: &[usize]) -> Tensor {
    let shape = t.shape();
    let nd = shape.len();
    assert_eq!(perm.len(), nd, "permutation rank");
    let mut seen = vec![false; nd];
    for &p in perm {
        assert!(p < nd && !seen[p], "invalid permutation {perm:?}");
        seen[p] = true;
    }
    let src_strides = strides(shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let st: Vec<usize> = perm.iter().map(|&p| src_strides[p]).collect();
    let src = t.data();
    let mut out = Vec::with_capacity(src.len());
    if !src.is_empty() {
        let last = out_shape[nd - 1];
        let ls = st[nd - 1];
        let mut idx = vec![0usize; nd];
        let mut off = 0usize;
        'outer: loop {
            out.extend((0..last).map(|j| src[off + j * ls]));
            let mut d = nd - 1;
            loop {
                if d == 0 {
                    break 'outer;
                }
                d -= 1;
                idx[d] += 1;
                off += st[d];
                if idx[d] < out_shape[d] {
                    break;
                }
                off -= st[d] * out_shape[d];
                idx[d] = 0;
            }
        }
    }
    Tensor::from_vec(&out_shape, out)
}

/// Column sums of a `[rows, cols]` row-major buffer.
pub(crate) fn col_sums(data: &[f32], cols: usize) -> Vec<f32> {
    let mut s = vec![0.0f32; cols];
    for row in data.chunks_exact(cols) {
        for (a, b) in s.iter_mut().zip(row) {
            *a += b;
        }
    }
    s
}

impl Graph {
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = zip_map(self.value(a), self.value(b), |x, y| x + y);
        self.push(
            v,
            &[a, b],
            FnBackward(|c: &BackwardCtx| {
                vec![
                    c.needs(0).then(|| c.grad.clone()),
                    c.needs(1).then(|| c.grad.clone()),
                ]
            }),
        )
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = zip_map(self.value(a), self.value(b), |x, y| x - y);
        self.push(
            v,
            &[a, b],
            FnBackward(|c: &BackwardCtx| {
                vec![
                    c.needs(0).then(|| c.grad.clone()),
                    c.needs(1).then(|| c.grad.map(|g| -g)),
                ]
            }),
        )
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = zip_map(self.value(a), self.value(b), |x, y| x * y);
        self.push(
            v,
            &[a, b],
            FnBackward(|c: &BackwardCtx| {
                vec![
                    c.needs(0)
                        .then(|| zip_map(c.grad, c.inputs[1], |g, y| g * y)),
                    c.needs(1)
                        .then(|| zip_map(c.grad, c.inputs[0], |g, x| g * x)),
                ]
            }),
        )
    }

    pub fn scale(&mut self, a: Var, k: f32) -> Var {
        let v = self.value(a).map(|x| x * k);
        self.push(
            v,
            &[a],
            FnBackward(move |c: &BackwardCtx| vec![Some(c.grad.map(|g| g * k))]),
        )
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid_f32);
        self.push(
            v,
            &[a],
            FnBackward(|c: &BackwardCtx| {
                vec![Some(zip_map(c.grad, c.output, |g, y| g * y * (1.0 - y)))]
            }),
        )
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f32::tanh);
        self.push(
            v,
            &[a],
            FnBackward(|c: &BackwardCtx| {
                vec![Some(zip_map(c.grad, c.output, |g, y| g * (1.0 - y * y)))]
            }),
        )
    }

    /// PReLU with a single learnable slope `alpha` of shape `[1]`.
    pub fn prelu(&mut self, x: Var, alpha: Var) -> Var {
        let a = self.value(alpha).item();
        let v = self.value(x).map(|v| if v > 0.0 { v } else { a * v });
        self.push(
            v,
            &[x, alpha],
            FnBackward(|c: &BackwardCtx| {
                let a = c.inputs[1].item();
                let dx = c
                    .needs(0)
                    .then(|| zip_map(c.grad, c.inputs[0], |g, x| if x > 0.0 { g } else { a * g }));
                let da = c.needs(1).then(|| {
                    let s: f32 = c
                        .grad
                        .data()
                        .iter()
                        .zip(c.inputs[0].data())
                        .filter(|(_, x)| **x <= 0.0)
                        .map(|(g, x)| g * x)
                        .sum();
                    Tensor::scalar(s)
                });
                vec![dx, da]
            }),
        )
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: f32 = self.value(a).data().iter().sum();
        self.push(
            Tensor::scalar(s),
            &[a],
            FnBackward(|c: &BackwardCtx| {
                vec![Some(Tensor::full(c.inputs[0].shape(), c.grad.item()))]
            }),
        )
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let v = self.value(a).clone().reshaped(shape);
        self.push(
            v,
            &[a],
            FnBackward(|c: &BackwardCtx| vec![Some(c.grad.clone().reshaped(c.inputs[0].shape()))]),
        )
    }

    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Var {
        let v = permute_tensor(self.value(a), perm);
        let mut inv = vec![0; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        self.push(
            v,
            &[a],
            FnBackward(move |c: &BackwardCtx| vec![Some(permute_tensor(c.grad, &inv))]),
        )
    }

    /// Concatenates along the last dimension; leading dimensions must agree.
    pub fn concat_last(&mut self, parts: &[Var]) -> Var {
        let lead = self.shape(parts[0])[..self.shape(parts[0]).len() - 1].to_vec();
        let widths: Vec<usize> = parts
            .iter()
            .map(|p| {
                let s = self.shape(*p);
                assert_eq!(&s[..s.len() - 1], &lead[..], "concat leading dims");
                s[s.len() - 1]
            })
            .collect();
        let total: usize = widths.iter().sum();
        let rows: usize = lead.iter().product();
        let mut out = vec![0.0f32; rows * total];
        let mut off = 0;
        for (p, w) in parts.iter().zip(&widths) {
            let src = self.value(*p).data();
            for r in 0..rows {
                out[r * total + off..r * total + off + w].copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            off += w;
        }
        let mut shape = lead;
        shape.push(total);
        self.push(
            Tensor::from_vec(&shape, out),
            parts,
            FnBackward(move |c: &BackwardCtx| {
                let g = c.grad.data();
                let mut off = 0;
                widths
                    .iter()
                    .enumerate()
                    .map(|(i, &w)| {
                        let r = c.needs(i).then(|| {
                            let mut d = Vec::with_capacity(rows * w);
                            for r in 0..rows {
                                d.extend_from_slice(&g[r * total + off..r * total + off + w]);
                            }
                            Tensor::from_vec(c.inputs[i].shape(), d)
                        });
                        off += w;
                        r
                    })
                    .collect()
            }),
        )
    }

    /// Adds `b` (shape `[C]`) to every row of `x` (last dim `C`).
    pub fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let cols = self.value(x).last_dim();
        assert_eq!(self.value(b).len(), cols, "bias width");
        let mut v = self.value(x).clone();
        let bias = self.value(b).data().to_vec();
        for row in v.data_mut().chunks_exact_mut(cols) {
            for (a, bb) in row.iter_mut().zip(&bias) {
                *a += bb;
            }
        }
        self.push(
            v,
            &[x, b],
            FnBackward(move |c: &BackwardCtx| {
                vec![
                    c.needs(0).then(|| c.grad.clone()),
                    c.needs(1).then(|| {
                        Tensor::from_vec(c.inputs[1].shape(), col_sums(c.grad.data(), cols))
                    }),
                ]
            }),
        )
    }

    /// `y = x W^T (+ b)` over the last dimension; `w` is `[out, in]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let xs = self.shape(x).to_vec();
        let (out_dim, in_dim) = (self.shape(w)[0], self.shape(w)[1]);
        assert_eq!(xs[xs.len() - 1], in_dim, "linear input width");
        let rows = self.value(x).rows();
        let mut y = vec![0.0f32; rows * out_dim];
        gemm(
            rows,
            in_dim,
            out_dim,
            1.0,
            MatRef::rm(self.value(x).data(), in_dim, false),
            MatRef::rm(self.value(w).data(), in_dim, true),
            0.0,
            MatMut::rm(&mut y, out_dim),
        );
        let mut shape = xs;
        *shape.last_mut().unwrap() = out_dim;
        let y = self.push(
            Tensor::from_vec(&shape, y),
            &[x, w],
            FnBackward(move |c: &BackwardCtx| {
                let g = c.grad.data();
                let dx = c.needs(0).then(|| {
                    let mut d = vec![0.0f32; rows * in_dim];
                    gemm(
                        rows,
                        out_dim,
                        in_dim,
                        1.0,
                        MatRef::rm(g, out_dim, false),
                        MatRef::rm(c.inputs[1].data(), in_dim, false),
                        0.0,
                        MatMut::rm(&mut d, in_dim),
                    );
                    Tensor::from_vec(c.inputs[0].shape(), d)
                });
                let dw = c.needs(1).then(|| {
                    let mut d = vec![0.0f32; out_dim * in_dim];
                    gemm(
                        out_dim,
                        rows,
                        in_dim,
                        1.0,
                        MatRef::rm(g, out_dim, true),
                        MatRef::rm(c.inputs[0].data(), in_dim, false),
                        0.0,
                        MatMut::rm(&mut d, in_dim),
                    );
                    Tensor::from_vec(&[out_dim, in_dim], d)
                });
                vec![dx, dw]
            }),
        );
        match b {
            Some(b) => self.add_bias(y, b),
            None => y,
        }
    }

    /// Batched product of `a [G, M, K]` with `b [G, K, N]` (or `b [G, N, K]` when `trans_b`).
    pub fn bmm(&mut self, a: Var, b: Var, trans_b: bool) -> Var {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        assert!(
            sa.len() == 3 && sb.len() == 3 && sa[0] == sb[0],
            "bmm shapes {sa:?} {sb:?}"
        );
        let (g, m, k) = (sa[0], sa[1], sa[2]);
        let n = if trans_b { sb[1] } else { sb[2] };
        assert_eq!(if trans_b { sb[2] } else { sb[1] }, k, "bmm inner dims");
        let mut out = vec![0.0f32; g * m * n];
        for i in 0..g {
            gemm(
                m,
                k,
                n,
                1.0,
                MatRef::rm(&self.value(a).data()[i * m * k..(i + 1) * m * k], k, false),
                MatRef::rm(
                    &self.value(b).data()[i * k * n..(i + 1) * k * n],
                    if trans_b { k } else { n },
                    trans_b,
                ),
                0.0,
                MatMut::rm(&mut out[i * m * n..(i + 1) * m * n], n),
            );
        }
        self.push(
            Tensor::from_vec(&[g, m, n], out),
            &[a, b],
            FnBackward(move |c: &BackwardCtx| {
                let gd = c.grad.data();
                let (ad, bd) = (c.inputs[0].data(), c.inputs[1].data());
                let da = c.needs(0).then(|| {
                    let mut d = vec![0.0f32; g * m * k];
                    for i in 0..g {
                        // dA = dC B^T
                        gemm(
                            m,
                            n,
                            k,
                            1.0,
                            MatRef::rm(&gd[i * m * n..(i + 1) * m * n], n, false),
                            MatRef::rm(
                                &bd[i * k * n..(i + 1) * k * n],
                                if trans_b { k } else { n },
                                !trans_b,
                            ),
                            0.0,
                            MatMut::rm(&mut d[i * m * k..(i + 1) * m * k], k),
                        );
                    }
                    Tensor::from_vec(&[g, m, k], d)
                });
                let db = c.needs(1).then(|| {
                    let mut d = vec![0.0f32; g * k * n];
                    for i in 0..g {
                        let ga = MatRef::rm(&gd[i * m * n..(i + 1) * m * n], n, false);
                        let aa = MatRef::rm(&ad[i * m * k..(i + 1) * m * k], k, false);
                        let dst = &mut d[i * k * n..(i + 1) * k * n];
                        if trans_b {
                            // dB[N, K] = dC^T A
                            gemm(
                                n,
                                m,
                                k,
                                1.0,
                                MatRef::rm(&gd[i * m * n..(i + 1) * m * n], n, true),
                                aa,
                                0.0,
                                MatMut::rm(dst, k),
                            );
                        } else {
                            // dB[K, N] = A^T dC
                            gemm(
                                k,
                                m,
                                n,
                                1.0,
                                MatRef::rm(&ad[i * m * k..(i + 1) * m * k], k, true),
                                ga,
                                0.0,
                                MatMut::rm(dst, n),
                            );
                        }
                    }
                    Tensor::from_vec(c.inputs[1].shape(), d)
                });
                vec![da, db]
            }),
        )
    }

    pub fn softmax_last(&mut self, x: Var) -> Var {
        let cols = self.value(x).last_dim();
        let mut v = self.value(x).clone();
        for row in v.data_mut().chunks_exact_mut(cols) {
            let m = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            let mut s = 0.0;
            for a in row.iter_mut() {
                *a = (*a - m).exp();
                s += *a;
            }
            row.iter_mut().for_each(|a| *a /= s);
        }
        self.push(
            v,
            &[x],
            FnBackward(move |c: &BackwardCtx| {
                let mut d = c.grad.clone();
                for (dr, yr) in d
                    .data_mut()
                    .chunks_exact_mut(cols)
                    .zip(c.output.data().chunks_exact(cols))
                {
                    let dot: f32 = dr.iter().zip(yr).map(|(g, y)| g * y).sum();
                    for (g, y) in dr.iter_mut().zip(yr) {
                        *g = y * (*g - dot);
                    }
                }
                vec![Some(d)]
            }),
        )
    }

    /// Sliding windows over dim 1: `[N, L, C] -> [N, L-k+1, k*C]`.
    pub fn unfold_seq(&mut self, x: Var, k: usize) -> Var {
        let s = self.shape(x).to_vec();
        assert!(
            s.len() == 3 && s[1] >= k && k >= 1,
            "unfold_seq shape {s:?} kernel {k}"
        );
        let (n, l, ch) = (s[0], s[1], s[2]);
        let lo = l - k + 1;
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(n * lo * k * ch);
        for b in 0..n {
            for p in 0..lo {
                out.extend_from_slice(&src[(b * l + p) * ch..(b * l + p + k) * ch]);
            }
        }
        self.push(
            Tensor::from_vec(&[n, lo, k * ch], out),
            &[x],
            FnBackward(move |c: &BackwardCtx| vec![Some(fold_data(c.grad.data(), n, lo, k, ch))]),
        )
    }

    /// Overlap-add adjoint of [`Graph::unfold_seq`]: `[N, L', k*C] -> [N, L'+k-1, C]`.
    pub fn fold_seq(&mut self, x: Var, k: usize) -> Var {
        let s = self.shape(x).to_vec();
        assert!(
            s.len() == 3 && s[2].is_multiple_of(k),
            "fold_seq shape {s:?} kernel {k}"
        );
        let (n, lo, ch) = (s[0], s[1], s[2] / k);
        let v = fold_data(self.value(x).data(), n, lo, k, ch);
        self.push(
            v,
            &[x],
            FnBackward(move |c: &BackwardCtx| {
                let l = lo + k - 1;
                let g = c.grad.data();
                let mut out = Vec::with_capacity(n * lo * k * ch);
                for b in 0..n {
                    for p in 0..lo {
                        out.extend_from_slice(&g[(b * l + p) * ch..(b * l + p + k) * ch]);
                    }
                }
                vec![Some(Tensor::from_vec(&[n, lo, k * ch], out))]
            }),
        )
    }

    /// Splits off `len` channels starting at `start` along the last dimension.
    pub fn slice_last(&mut self, x: Var, start: usize, len: usize) -> Var {
        let s = self.shape(x).to_vec();
        let w = s[s.len() - 1];
        assert!(start + len <= w, "slice_last out of range");
        let rows = self.value(x).rows();
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&src[r * w + start..r * w + start + len]);
        }
        let mut shape = s;
        *shape.last_mut().unwrap() = len;
        self.push(
            Tensor::from_vec(&shape, out),
            &[x],
            FnBackward(move |c: &BackwardCtx| {
                let mut d = Tensor::zeros(c.inputs[0].shape());
                let g = c.grad.data();
                for (r, row) in d.data_mut().chunks_exact_mut(w).enumerate() {
                    row[start..start + len].copy_from_slice(&g[r * len..(r + 1) * len]);
                }
                vec![Some(d)]
            }),
        )
    }
}

fn fold_data(src: &[f32], n: usize, lo: usize, k: usize, ch: usize) -> Tensor {
    let l = lo + k - 1;
    let mut out = vec![0.0f32; n * l * ch];
    for b in 0..n {
        for p in 0..lo {
            let row = &src[(b * lo + p) * k * ch..(b * lo + p + 1) * k * ch];
            let dst = &mut out[(b * l + p) * ch..(b * l + p + k) * ch];
            for (d, s) in dst.iter_mut().zip(row) {
                *d += s;
            }
        }
    }
    Tensor::from_vec(&[n, l, ch], out)
}
