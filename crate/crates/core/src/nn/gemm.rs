//! Bounds-checked strided wrapper over `matrixmultiply::sgemm`.

/// Read-only strided matrix view into a slice.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a> {
    pub data: &'a [f32],
    pub offset: usize,
    pub rs: usize,
    pub cs: usize,
}

pub(crate) struct MatMut<'a> {
    pub data: &'a mut [f32],
    pub offset: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a> MatRef<'a> {
    /// Contiguous row-major `[rows, cols]` view; `trans` reads it as its transpose.
    pub fn rm(data: &'a [f32], cols: usize, trans: bool) -> Self {
        if trans {
            Self {
                data,
                offset: 0,
                rs: 1,
                cs: cols,
            }
        } else {
            Self {
                data,
                offset: 0,
                rs: cols,
                cs: 1,
            }
        }
    }
}

impl<'a> MatMut<'a> {
    pub fn rm(data: &'a mut [f32], cols: usize) -> Self {
        Self {
            data,
            offset: 0,
            rs: cols,
            cs: 1,
        }
    }
}

fn check(len: usize, offset: usize, rs: usize, cs: usize, rows: usize, cols: usize) {
    let last = offset + (rows - 1) * rs + (cols - 1) * cs;
    assert!(
        last < len,
        "gemm view out of bounds: last index {last}, len {len}"
    );
}

/// `C = alpha * A * B + beta * C` with A `[m, k]`, B `[k, n]`, C `[m, n]`.
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f32,
    a: MatRef,
    b: MatRef,
    beta: f32,
    c: MatMut,
) {
    if m == 0 || n == 0 {
        return;
    }
    check(c.data.len(), c.offset, c.rs, c.cs, m, n);
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                let v = &mut c.data[c.offset + i * c.rs + j * c.cs];
                *v = if beta == 0.0 { 0.0 } else { beta * *v };
            }
        }
        return;
    }
    check(a.data.len(), a.offset, a.rs, a.cs, m, k);
    check(b.data.len(), b.offset, b.rs, b.cs, k, n);
    // SAFETY: every index touched is bounds-checked above, and `c` is a unique borrow disjoint from `a` and `b`.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr().add(a.offset),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr().add(b.offset),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.data.as_mut_ptr().add(c.offset),
            c.rs as isize,
            c.cs as isize,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f32], b: &[f32]) -> Vec<f32> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                c[i * n + j] = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
            }
        }
        c
    }

    #[test]
    fn matches_naive_product() {
        let (m, k, n) = (5, 7, 3);
        let a: Vec<f32> = (0..m * k).map(|i| (i as f32 * 0.37).sin()).collect();
        let b: Vec<f32> = (0..k * n).map(|i| (i as f32 * 0.11).cos()).collect();
        let mut c = vec![1.0; m * n];
        gemm(
            m,
            k,
            n,
            1.0,
            MatRef::rm(&a, k, false),
            MatRef::rm(&b, n, false),
            0.0,
            MatMut::rm(&mut c, n),
        );
        let want = naive(m, k, n, &a, &b);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - y).abs() < 1e-5);
        }
    }

    #[test]
    fn transposed_views_and_accumulate() {
        let (m, k, n) = (4, 6, 2);
        let at: Vec<f32> = (0..k * m).map(|i| i as f32 * 0.1).collect();
        let b: Vec<f32> = (0..k * n).map(|i| 1.0 - i as f32 * 0.05).collect();
        let mut a = vec![0.0; m * k];
        for i in 0..m {
            for p in 0..k {
                a[i * k + p] = at[p * m + i];
            }
        }
        let mut c = vec![2.0; m * n];
        gemm(
            m,
            k,
            n,
            1.0,
            MatRef::rm(&at, m, true),
            MatRef::rm(&b, n, false),
            1.0,
            MatMut::rm(&mut c, n),
        );
        let want = naive(m, k, n, &a, &b);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - (y + 2.0)).abs() < 1e-5);
        }
    }
}
