//! Small dense kernels for recurrent steps: contiguous accumulate-GEMM and slice-wise
//! sigmoid/tanh with a branch-free exponential. Each kernel has an AVX2/FMA build selected at
//! runtime and a portable fallback with identical arithmetic.

#[cfg(target_arch = "x86_64")]
fn has_avx2() -> bool {
    std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma")
}

macro_rules! multiversion {
    ($(#[$m:meta])* $vis:vis fn $name:ident($($arg:ident: $ty:ty),* $(,)?) $body:block) => {
        $(#[$m])*
        $vis fn $name($($arg: $ty),*) {
            #[inline(always)]
            fn inner($($arg: $ty),*) $body
            #[cfg(target_arch = "x86_64")]
            {
                #[target_feature(enable = "avx2,fma")]
                unsafe fn wide($($arg: $ty),*) {
                    inner($($arg),*)
                }
                if has_avx2() {
                    // SAFETY: the CPU reports AVX2 and FMA, the only features `wide` enables.
                    return unsafe { wide($($arg),*) };
                }
            }
            inner($($arg),*)
        }
    };
}

const MAGIC: f32 = 12_582_912.0;

/// `e^x` within a few ulp on `[-87, 88]`, clamped outside; vectorizes (no libm call).
#[inline(always)]
pub(crate) fn exp_approx(x: f32) -> f32 {
    let x = x.clamp(-87.0, 88.0);
    let t = x * std::f32::consts::LOG2_E + MAGIC;
    let n = t - MAGIC;
    let r = x - n * 0.693_359_4 + n * 2.121_944_4e-4;
    let p = ((((1.987_569_1e-4 * r + 1.398_199_9e-3) * r + 8.333_452e-3) * r + 4.166_579_6e-2) * r
        + 0.166_666_65)
        * r
        + 0.5;
    let y = p * r * r + r + 1.0;
    let k = (t.to_bits() as i32).wrapping_sub(MAGIC.to_bits() as i32);
    y * f32::from_bits((k.wrapping_add(127) << 23) as u32)
}

#[inline(always)]
pub(crate) fn sigmoid_approx(x: f32) -> f32 {
    1.0 / (1.0 + exp_approx(-x))
}

#[inline(always)]
pub(crate) fn tanh_approx(x: f32) -> f32 {
    1.0 - 2.0 / (exp_approx(2.0 * x) + 1.0)
}

const LANES: usize = 32;

multiversion! {
    /// `c[m x n] += a[m x k] * b[k x n]`, all row-major and contiguous.
    pub(crate) fn gemm_acc(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
        assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n, "gemm_acc operand too small");
        let full = n / LANES * LANES;
        for (ci, ai) in c.chunks_exact_mut(n).zip(a.chunks_exact(k)).take(m) {
            // Accumulate a register-sized strip of the output row across all of `k`.
            for j0 in (0..full).step_by(LANES) {
                let mut acc = [0.0f32; LANES];
                acc.copy_from_slice(&ci[j0..j0 + LANES]);
                for (p, &av) in ai.iter().enumerate() {
                    let bp = &b[p * n + j0..p * n + j0 + LANES];
                    for l in 0..LANES {
                        acc[l] += av * bp[l];
                    }
                }
                ci[j0..j0 + LANES].copy_from_slice(&acc);
            }
            for (p, &av) in ai.iter().enumerate() {
                for (cv, bv) in ci[full..].iter_mut().zip(&b[p * n + full..(p + 1) * n]) {
                    *cv += av * bv;
                }
            }
        }
    }
}

multiversion! {
    /// One LSTM cell update over `[N, 4H]` pre-activations in gate order i, f, g, o. Gates are
    /// activated in place; writes `c`, `tanh(c)` and `h` rows of width `H`.
    pub(crate) fn lstm_cell(h: usize, gates: &mut [f32], c_prev: Option<&[f32]>, c: &mut [f32], tc: &mut [f32], hs: &mut [f32]) {
        for (row, g) in gates.chunks_exact_mut(4 * h).enumerate() {
            let (if_, go) = g.split_at_mut(2 * h);
            let (gg, o) = go.split_at_mut(h);
            for v in if_.iter_mut() {
                *v = sigmoid_approx(*v);
            }
            for v in o.iter_mut() {
                *v = sigmoid_approx(*v);
            }
            for v in gg.iter_mut() {
                *v = tanh_approx(*v);
            }
            let (i, f) = if_.split_at(h);
            let r = row * h..(row + 1) * h;
            let cr = &mut c[r.clone()];
            match c_prev {
                Some(p) => {
                    for (((cv, &cp), (&fv, &iv)), &gv) in cr.iter_mut().zip(&p[r.clone()]).zip(f.iter().zip(i)).zip(gg.iter()) {
                        *cv = fv * cp + iv * gv;
                    }
                }
                None => {
                    for ((cv, &iv), &gv) in cr.iter_mut().zip(i).zip(gg.iter()) {
                        *cv = iv * gv;
                    }
                }
            }
            let tr = &mut tc[r.clone()];
            for (t, &cv) in tr.iter_mut().zip(cr.iter()) {
                *t = tanh_approx(cv);
            }
            for ((hv, &t), &ov) in hs[r].iter_mut().zip(tr.iter()).zip(o.iter()) {
                *hv = ov * t;
            }
        }
    }
}
