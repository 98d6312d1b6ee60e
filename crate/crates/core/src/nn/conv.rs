//! 2-D convolution on channel-last maps and the complex front-end ops.

use crate::nn::gemm::{gemm, MatMut, MatRef};
use crate::nn::graph::{Backward, BackwardCtx, Graph, Var};
use crate::nn::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub pad: (usize, usize),
}

impl Conv2dSpec {
    /// Stride 1 with "same" padding for odd kernels.
    pub fn same(kt: usize, kf: usize) -> Self {
        Self {
            kernel: (kt, kf),
            stride: (1, 1),
            pad: (kt / 2, kf / 2),
        }
    }

    pub fn out_dims(&self, t: usize, f: usize) -> (usize, usize) {
        (
            (t + 2 * self.pad.0 - self.kernel.0) / self.stride.0 + 1,
            (f + 2 * self.pad.1 - self.kernel.1) / self.stride.1 + 1,
        )
    }
}

struct Geometry {
    b: usize,
    t: usize,
    f: usize,
    cin: usize,
    to: usize,
    fo: usize,
    spec: Conv2dSpec,
}

impl Geometry {
    fn k(&self) -> usize {
        self.spec.kernel.0 * self.spec.kernel.1 * self.cin
    }

    /// Source offset within one item for each (output position, kernel tap), or `None` in the padding.
    fn for_each_tap(&self, mut visit: impl FnMut(usize, usize, Option<usize>)) {
        let (kt, kf) = self.spec.kernel;
        for ot in 0..self.to {
            for of in 0..self.fo {
                let row = ot * self.fo + of;
                for i in 0..kt {
                    let st = (ot * self.spec.stride.0 + i) as isize - self.spec.pad.0 as isize;
                    for j in 0..kf {
                        let sf = (of * self.spec.stride.1 + j) as isize - self.spec.pad.1 as isize;
                        let tap = i * kf + j;
                        let src = (st >= 0
                            && (st as usize) < self.t
                            && sf >= 0
                            && (sf as usize) < self.f)
                            .then(|| (st as usize * self.f + sf as usize) * self.cin);
                        visit(row, tap, src);
                    }
                }
            }
        }
    }

    fn im2col(&self, item: &[f32], cols: &mut [f32]) {
        let (k, cin) = (self.k(), self.cin);
        let ntap = self.spec.kernel.0 * self.spec.kernel.1;
        self.for_each_tap(|row, tap, src| {
            let dst = &mut cols[row * k + tap * cin..row * k + tap * cin + cin];
            match src {
                Some(s) => dst.copy_from_slice(&item[s..s + cin]),
                None => dst.fill(0.0),
            }
            debug_assert!(tap < ntap);
        });
    }

    fn col2im(&self, cols: &[f32], item: &mut [f32]) {
        let (k, cin) = (self.k(), self.cin);
        self.for_each_tap(|row, tap, src| {
            if let Some(s) = src {
                let from = &cols[row * k + tap * cin..row * k + tap * cin + cin];
                for (d, v) in item[s..s + cin].iter_mut().zip(from) {
                    *d += v;
                }
            }
        });
    }
}

struct Conv2dOp {
    geo: Geometry,
    cout: usize,
}

impl Backward for Conv2dOp {
    fn backward(&self, c: &BackwardCtx) -> Vec<Option<Tensor>> {
        let geo = &self.geo;
        let (k, cout) = (geo.k(), self.cout);
        let rows = geo.to * geo.fo;
        let (x, w, g) = (c.inputs[0].data(), c.inputs[1].data(), c.grad.data());
        let item_in = geo.t * geo.f * geo.cin;
        let mut cols = vec![0.0f32; rows * k];
        let mut dcols = vec![0.0f32; rows * k];
        let mut dw = vec![0.0f32; cout * k];
        let mut dx = c.needs(0).then(|| vec![0.0f32; x.len()]);
        for b in 0..geo.b {
            let gb = &g[b * rows * cout..(b + 1) * rows * cout];
            if c.needs(1) {
                geo.im2col(&x[b * item_in..(b + 1) * item_in], &mut cols);
                gemm(
                    cout,
                    rows,
                    k,
                    1.0,
                    MatRef::rm(gb, cout, true),
                    MatRef::rm(&cols, k, false),
                    1.0,
                    MatMut::rm(&mut dw, k),
                );
            }
            if let Some(dx) = dx.as_mut() {
                gemm(
                    rows,
                    cout,
                    k,
                    1.0,
                    MatRef::rm(gb, cout, false),
                    MatRef::rm(w, k, false),
                    0.0,
                    MatMut::rm(&mut dcols, k),
                );
                geo.col2im(&dcols, &mut dx[b * item_in..(b + 1) * item_in]);
            }
        }
        let db = c
            .needs(2)
            .then(|| Tensor::from_vec(&[cout], crate::nn::ops::col_sums(g, cout)));
        vec![
            dx.map(|d| Tensor::from_vec(c.inputs[0].shape(), d)),
            c.needs(1)
                .then(|| Tensor::from_vec(c.inputs[1].shape(), dw)),
            db,
        ]
    }
}

struct ComplexConvOp {
    b: usize,
    t: usize,
    f: usize,
    cout: usize,
    k: usize,
}

impl ComplexConvOp {
    fn src(&self, t: usize, i: usize) -> Option<usize> {
        let s = (t + i) as isize - (self.k / 2) as isize;
        (s >= 0 && (s as usize) < self.t).then_some(s as usize)
    }
}

impl Backward for ComplexConvOp {
    fn backward(&self, c: &BackwardCtx) -> Vec<Option<Tensor>> {
        let (x, wr, wi, g) = (
            c.inputs[0].data(),
            c.inputs[1].data(),
            c.inputs[2].data(),
            c.grad.data(),
        );
        let (co, k) = (self.cout, self.k);
        let mut dx = vec![0.0f32; x.len()];
        let mut dwr = vec![0.0f32; co * k];
        let mut dwi = vec![0.0f32; co * k];
        let mut dbr = vec![0.0f32; co];
        let mut dbi = vec![0.0f32; co];
        for b in 0..self.b {
            for t in 0..self.t {
                for f in 0..self.f {
                    let o = ((b * self.t + t) * self.f + f) * 2 * co;
                    for ch in 0..co {
                        let (gre, gim) = (g[o + ch], g[o + co + ch]);
                        dbr[ch] += gre;
                        dbi[ch] += gim;
                        for i in 0..k {
                            let Some(s) = self.src(t, i) else { continue };
                            let xi = ((b * self.t + s) * self.f + f) * 2;
                            let (xr, xm) = (x[xi], x[xi + 1]);
                            let (a, bb) = (wr[ch * k + i], wi[ch * k + i]);
                            // re = a xr - bb xm ; im = a xm + bb xr
                            dwr[ch * k + i] += gre * xr + gim * xm;
                            dwi[ch * k + i] += -gre * xm + gim * xr;
                            dx[xi] += gre * a + gim * bb;
                            dx[xi + 1] += -gre * bb + gim * a;
                        }
                    }
                }
            }
        }
        vec![
            c.needs(0)
                .then(|| Tensor::from_vec(c.inputs[0].shape(), dx)),
            c.needs(1).then(|| Tensor::from_vec(&[co, k], dwr)),
            c.needs(2).then(|| Tensor::from_vec(&[co, k], dwi)),
            c.needs(3).then(|| Tensor::from_vec(&[co], dbr)),
            c.needs(4).then(|| Tensor::from_vec(&[co], dbi)),
        ]
    }
}

struct CompressOp {
    channels: usize,
    alpha: f32,
    eps: f32,
}

impl Backward for CompressOp {
    fn backward(&self, c: &BackwardCtx) -> Vec<Option<Tensor>> {
        let (z, g) = (c.inputs[0].data(), c.grad.data());
        let ch = self.channels;
        let a1 = self.alpha - 1.0;
        let mut dz = vec![0.0f32; z.len()];
        for (p, (zr, gr)) in z
            .chunks_exact(2 * ch)
            .zip(g.chunks_exact(2 * ch))
            .enumerate()
        {
            for j in 0..ch {
                let (re, im) = (zr[j], zr[ch + j]);
                let (gre, gim) = (gr[j], gr[ch + j]);
                let r2 = re * re + im * im + self.eps;
                let s = r2.powf(0.5 * a1);
                let q = a1 * s / r2;
                dz[p * 2 * ch + j] = gre * (s + q * re * re) + gim * q * re * im;
                dz[p * 2 * ch + ch + j] = gim * (s + q * im * im) + gre * q * re * im;
            }
        }
        vec![Some(Tensor::from_vec(c.inputs[0].shape(), dz))]
    }
}

impl Graph {
    /// `x [B, T, F, Cin]`, `w [Cout, kt, kf, Cin]`, `b [Cout]` → `[B, T', F', Cout]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, spec: Conv2dSpec) -> Var {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        assert!(xs.len() == 4 && ws.len() == 4, "conv2d ranks {xs:?} {ws:?}");
        assert_eq!(
            (ws[1], ws[2], ws[3]),
            (spec.kernel.0, spec.kernel.1, xs[3]),
            "conv2d weight shape"
        );
        let (to, fo) = spec.out_dims(xs[1], xs[2]);
        let geo = Geometry {
            b: xs[0],
            t: xs[1],
            f: xs[2],
            cin: xs[3],
            to,
            fo,
            spec,
        };
        let (k, cout, rows) = (geo.k(), ws[0], to * fo);
        let item_in = geo.t * geo.f * geo.cin;
        let mut out = vec![0.0f32; geo.b * rows * cout];
        let mut cols = vec![0.0f32; rows * k];
        let (xd, wd, bd) = (
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
        );
        for bi in 0..geo.b {
            geo.im2col(&xd[bi * item_in..(bi + 1) * item_in], &mut cols);
            let ob = &mut out[bi * rows * cout..(bi + 1) * rows * cout];
            for row in ob.chunks_exact_mut(cout) {
                row.copy_from_slice(bd);
            }
            gemm(
                rows,
                k,
                cout,
                1.0,
                MatRef::rm(&cols, k, false),
                MatRef::rm(wd, k, true),
                1.0,
                MatMut::rm(ob, cout),
            );
        }
        let v = Tensor::from_vec(&[geo.b, to, fo, cout], out);
        self.push(v, &[x, w, b], Conv2dOp { geo, cout })
    }

    /// Complex convolution along time with frequency kernel 1 on raw RI input `x [B, T, F, 2]`.
    /// Weights `wr, wi [C, k]`, biases `br, bi [C]`; output `[B, T, F, 2C]` as `[re_0.., im_0..]`.
    pub fn complex_conv_time(&mut self, x: Var, wr: Var, wi: Var, br: Var, bi: Var) -> Var {
        let xs = self.shape(x).to_vec();
        assert!(
            xs.len() == 4 && xs[3] == 2,
            "complex_conv_time input {xs:?}"
        );
        let (co, k) = (self.shape(wr)[0], self.shape(wr)[1]);
        let op = ComplexConvOp {
            b: xs[0],
            t: xs[1],
            f: xs[2],
            cout: co,
            k,
        };
        let (xd, a, bb, r0, i0) = (
            self.value(x).data(),
            self.value(wr).data(),
            self.value(wi).data(),
            self.value(br).data(),
            self.value(bi).data(),
        );
        let mut out = vec![0.0f32; xs[0] * xs[1] * xs[2] * 2 * co];
        for b in 0..op.b {
            for t in 0..op.t {
                for f in 0..op.f {
                    let o = ((b * op.t + t) * op.f + f) * 2 * co;
                    for ch in 0..co {
                        let (mut re, mut im) = (r0[ch], i0[ch]);
                        for i in 0..k {
                            let Some(s) = op.src(t, i) else { continue };
                            let xi = ((b * op.t + s) * op.f + f) * 2;
                            let (xr, xm) = (xd[xi], xd[xi + 1]);
                            re += a[ch * k + i] * xr - bb[ch * k + i] * xm;
                            im += a[ch * k + i] * xm + bb[ch * k + i] * xr;
                        }
                        out[o + ch] = re;
                        out[o + co + ch] = im;
                    }
                }
            }
        }
        let v = Tensor::from_vec(&[xs[0], xs[1], xs[2], 2 * co], out);
        self.push(v, &[x, wr, wi, br, bi], op)
    }

    /// Rescales each complex pair `(z[c], z[C + c])` to magnitude `(|z|^2 + eps)^(alpha/2)`, keeping its phase.
    pub fn complex_compress(&mut self, z: Var, alpha: f32, eps: f32) -> Var {
        let w = self.value(z).last_dim();
        assert!(
            w.is_multiple_of(2),
            "complex_compress expects [re.., im..] channels"
        );
        let ch = w / 2;
        let mut v = self.value(z).clone();
        for row in v.data_mut().chunks_exact_mut(w) {
            for j in 0..ch {
                let (re, im) = (row[j], row[ch + j]);
                let s = (re * re + im * im + eps).powf(0.5 * (alpha - 1.0));
                row[j] = re * s;
                row[ch + j] = im * s;
            }
        }
        self.push(
            v,
            &[z],
            CompressOp {
                channels: ch,
                alpha,
                eps,
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::{check_grads, rand_tensor};

    #[test]
    fn conv2d_matches_direct_sum() {
        let spec = Conv2dSpec {
            kernel: (3, 3),
            stride: (1, 2),
            pad: (1, 1),
        };
        let x = rand_tensor(&[2, 4, 7, 3], 1);
        let w = rand_tensor(&[5, 3, 3, 3], 2);
        let b = rand_tensor(&[5], 3);
        let mut g = Graph::new();
        let (xv, wv, bv) = (
            g.constant(x.clone()),
            g.constant(w.clone()),
            g.constant(b.clone()),
        );
        let y = g.conv2d(xv, wv, bv, spec);
        assert_eq!(g.shape(y), &[2, 4, 4, 5]);
        let yd = g.value(y).data();
        for bi in 0..2 {
            for ot in 0..4 {
                for of in 0..4 {
                    for co in 0..5 {
                        let mut acc = b.data()[co] as f64;
                        for i in 0..3 {
                            for j in 0..3 {
                                let st = ot as isize + i as isize - 1;
                                let sf = (of * 2) as isize + j as isize - 1;
                                if !(0..4).contains(&st) || !(0..7).contains(&sf) {
                                    continue;
                                }
                                for ci in 0..3 {
                                    acc += (x.data()
                                        [((bi * 4 + st as usize) * 7 + sf as usize) * 3 + ci]
                                        * w.data()[((co * 3 + i) * 3 + j) * 3 + ci])
                                        as f64;
                                }
                            }
                        }
                        let got = yd[((bi * 4 + ot) * 4 + of) * 5 + co] as f64;
                        assert!((got - acc).abs() < 1e-4, "{got} vs {acc}");
                    }
                }
            }
        }
    }

    #[test]
    fn conv2d_grads() {
        let spec = Conv2dSpec {
            kernel: (3, 3),
            stride: (1, 2),
            pad: (1, 1),
        };
        check_grads(
            vec![
                rand_tensor(&[2, 3, 5, 2], 4),
                rand_tensor(&[3, 3, 3, 2], 5),
                rand_tensor(&[3], 6),
            ],
            |g, v| g.conv2d(v[0], v[1], v[2], spec),
        );
    }

    #[test]
    fn complex_conv_matches_complex_arithmetic() {
        let x = rand_tensor(&[1, 5, 2, 2], 7);
        let (wr, wi) = (rand_tensor(&[2, 3], 8), rand_tensor(&[2, 3], 9));
        let (br, bi) = (rand_tensor(&[2], 10), rand_tensor(&[2], 11));
        let mut g = Graph::new();
        let vars: Vec<Var> = [&x, &wr, &wi, &br, &bi]
            .iter()
            .map(|t| g.constant((*t).clone()))
            .collect();
        let y = g.complex_conv_time(vars[0], vars[1], vars[2], vars[3], vars[4]);
        let yd = g.value(y).data();
        use realfft::num_complex::Complex32;
        for t in 0..5usize {
            for f in 0..2 {
                for ch in 0..2 {
                    let mut acc = Complex32::new(br.data()[ch], bi.data()[ch]);
                    for i in 0..3usize {
                        let s = t as isize + i as isize - 1;
                        if !(0..5).contains(&s) {
                            continue;
                        }
                        let xi = (s as usize * 2 + f) * 2;
                        let z = Complex32::new(x.data()[xi], x.data()[xi + 1]);
                        acc += Complex32::new(wr.data()[ch * 3 + i], wi.data()[ch * 3 + i]) * z;
                    }
                    let o = (t * 2 + f) * 4;
                    assert!(
                        (yd[o + ch] - acc.re).abs() < 1e-5
                            && (yd[o + 2 + ch] - acc.im).abs() < 1e-5
                    );
                }
            }
        }
    }

    #[test]
    fn complex_ops_grads() {
        check_grads(
            vec![
                rand_tensor(&[1, 4, 2, 2], 12),
                rand_tensor(&[2, 3], 13),
                rand_tensor(&[2, 3], 14),
                rand_tensor(&[2], 15),
                rand_tensor(&[2], 16),
            ],
            |g, v| g.complex_conv_time(v[0], v[1], v[2], v[3], v[4]),
        );
        check_grads(vec![rand_tensor(&[3, 4], 17)], |g, v| {
            g.complex_compress(v[0], 0.5, 1e-6)
        });
    }

    #[test]
    fn complex_compress_keeps_phase() {
        let mut g = Graph::new();
        let z = g.constant(Tensor::from_vec(&[1, 2], vec![3.0, 4.0]));
        let y = g.complex_compress(z, 0.5, 0.0);
        let d = g.value(y).data();
        let mag = (d[0] * d[0] + d[1] * d[1]).sqrt();
        assert!((mag - 5f32.sqrt()).abs() < 1e-5);
        assert!((d[1] / d[0] - 4.0 / 3.0).abs() < 1e-5);
    }
}
