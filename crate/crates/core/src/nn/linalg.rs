//! Matrix kernels and 1-D convolution primitives.
//!
//! Everything here uses a fixed summation order and no fused multiply-add,
//! so results are bit-reproducible across runs and x86-64 machines.

use super::tensor::Scalar;

/// `c[m×n] += a[m×k] · b[k×n]`, all row-major.
pub fn gemm_nn<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// `c[m×n] += aᵀ · b` where `a` is stored `k×m`.
pub fn gemm_tn<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    for p in 0..k {
        let brow = &b[p * n..(p + 1) * n];
        let acol = &a[p * m..(p + 1) * m];
        for (i, &av) in acol.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// Dot product with eight interleaved partial sums combined in a fixed
/// order, so it vectorizes without giving up reproducibility.
pub fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    let n = x.len().min(y.len());
    let mut acc = [T::zero(); 8];
    let (xc, yc) = (x[..n].chunks_exact(8), y[..n].chunks_exact(8));
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (a, b) in xc.zip(yc) {
        for l in 0..8 {
            acc[l] += a[l] * b[l];
        }
    }
    for (l, (a, b)) in xr.iter().zip(yr).enumerate() {
        acc[l] += *a * *b;
    }
    ((acc[0] + acc[4]) + (acc[2] + acc[6])) + ((acc[1] + acc[5]) + (acc[3] + acc[7]))
}

/// `c[m×n] += a · bᵀ` where `b` is stored `n×k`.
pub fn gemm_nt<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            c[i * n + j] += dot(arow, &b[j * k..(j + 1) * k]);
        }
    }
}

/// Geometry of a strided, zero-padded 1-D cross-correlation mapping
/// `[in_channels, in_len]` to `[out_channels, out_len]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_len: usize,
    pub out_len: usize,
}

impl ConvGeom {
    /// Output length for a forward convolution, `None` when it would be < 1.
    pub fn conv_out_len(in_len: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
        let padded = in_len + 2 * padding;
        if stride == 0 || padded < kernel {
            return None;
        }
        Some((padded - kernel) / stride + 1)
    }

    /// Output length for a transposed convolution, `None` when it would be < 1.
    pub fn transpose_out_len(in_len: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
        if in_len == 0 {
            return None;
        }
        let full = (in_len - 1) * stride + kernel;
        if full <= 2 * padding {
            return None;
        }
        Some(full - 2 * padding)
    }

    fn col_rows(&self) -> usize {
        self.in_channels * self.kernel
    }

    /// Output positions `o` whose tap `t` lands inside the input.
    fn valid_range(&self, t: usize) -> std::ops::Range<usize> {
        // pos = o*stride + t - padding must lie in [0, in_len)
        let lo = self.padding.saturating_sub(t).div_ceil(self.stride);
        let hi = if self.in_len + self.padding > t {
            ((self.in_len + self.padding - t - 1) / self.stride + 1).min(self.out_len)
        } else {
            0
        };
        lo.min(hi)..hi
    }

    fn im2col<T: Scalar>(&self, x: &[T], cols: &mut Vec<T>) {
        let rows = self.col_rows();
        cols.resize(rows * self.out_len, T::zero());
        for ci in 0..self.in_channels {
            let xrow = &x[ci * self.in_len..(ci + 1) * self.in_len];
            for t in 0..self.kernel {
                let crow = &mut cols[(ci * self.kernel + t) * self.out_len..][..self.out_len];
                let r = self.valid_range(t);
                crow[..r.start].fill(T::zero());
                crow[r.end..].fill(T::zero());
                if r.is_empty() {
                    continue;
                }
                let first = r.start * self.stride + t - self.padding;
                if self.stride == 1 {
                    crow[r.clone()].copy_from_slice(&xrow[first..first + r.len()]);
                } else {
                    for (k, cv) in crow[r].iter_mut().enumerate() {
                        *cv = xrow[first + k * self.stride];
                    }
                }
            }
        }
    }

    fn col2im_add<T: Scalar>(&self, cols: &[T], x: &mut [T]) {
        for ci in 0..self.in_channels {
            let xrow = &mut x[ci * self.in_len..(ci + 1) * self.in_len];
            for t in 0..self.kernel {
                let crow = &cols[(ci * self.kernel + t) * self.out_len..][..self.out_len];
                let r = self.valid_range(t);
                if r.is_empty() {
                    continue;
                }
                let first = r.start * self.stride + t - self.padding;
                for (k, &cv) in crow[r].iter().enumerate() {
                    xrow[first + k * self.stride] += cv;
                }
            }
        }
    }

    /// `y += W ⋆ x` for one example. `w` is `[out_channels, in_channels, kernel]`.
    pub fn forward_add<T: Scalar>(&self, x: &[T], w: &[T], y: &mut [T], cols: &mut Vec<T>) {
        self.im2col(x, cols);
        gemm_nn(self.out_channels, self.col_rows(), self.out_len, w, cols, y);
    }

    /// `dx += Wᵀ dy` for one example: the exact adjoint of [`Self::forward_add`].
    pub fn backward_input_add<T: Scalar>(&self, dy: &[T], w: &[T], dx: &mut [T], cols: &mut Vec<T>) {
        cols.clear();
        cols.resize(self.col_rows() * self.out_len, T::zero());
        gemm_tn(self.col_rows(), self.out_channels, self.out_len, w, dy, cols);
        self.col2im_add(cols, dx);
    }

    /// `dw += dy · colsᵀ(x)` for one example.
    pub fn backward_weight_add<T: Scalar>(
        &self,
        x: &[T],
        dy: &[T],
        dw: &mut [T],
        cols: &mut Vec<T>,
    ) {
        self.im2col(x, cols);
        gemm_nt(self.out_channels, self.out_len, self.col_rows(), dy, cols, dw);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_variants_agree_with_loops() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| i as f64 * 0.5 - 2.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64).sin()).collect();
        let mut naive = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    naive[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        let mut c = vec![0.0; m * n];
        gemm_nn(m, k, n, &a, &b, &mut c);
        for (x, y) in c.iter().zip(&naive) {
            assert!((x - y).abs() < 1e-12);
        }

        let mut at = vec![0.0; k * m];
        for i in 0..m {
            for p in 0..k {
                at[p * m + i] = a[i * k + p];
            }
        }
        let mut c = vec![0.0; m * n];
        gemm_tn(m, k, n, &at, &b, &mut c);
        for (x, y) in c.iter().zip(&naive) {
            assert!((x - y).abs() < 1e-12);
        }

        let mut bt = vec![0.0; n * k];
        for p in 0..k {
            for j in 0..n {
                bt[j * k + p] = b[p * n + j];
            }
        }
        let mut c = vec![0.0; m * n];
        gemm_nt(m, k, n, &a, &bt, &mut c);
        for (x, y) in c.iter().zip(&naive) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn length_formulas() {
        assert_eq!(ConvGeom::conv_out_len(3, 2, 1, 0), Some(2));
        assert_eq!(ConvGeom::conv_out_len(4096, 24, 4, 10), Some(1024));
        assert_eq!(ConvGeom::conv_out_len(1, 3, 1, 0), None);
        assert_eq!(ConvGeom::transpose_out_len(4, 4, 2, 1), Some(8));
        assert_eq!(ConvGeom::transpose_out_len(1024, 24, 4, 10), Some(4096));
    }
}
