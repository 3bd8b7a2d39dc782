//! Row-column 2-D FFT on row-major buffers.
//!
//! The forward transform leaves its output transposed. Pointwise spectral
//! products only need every spectrum in the same layout, and the inverse
//! transform restores row-major order.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Fft2 {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    scratch_len: usize,
}

impl Fft2 {
    pub(crate) fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        let row_fwd = planner.plan_fft_forward(width);
        let col_fwd = planner.plan_fft_forward(height);
        let row_inv = planner.plan_fft_inverse(width);
        let col_inv = planner.plan_fft_inverse(height);
        let scratch_len = [&row_fwd, &col_fwd, &row_inv, &col_inv]
            .iter()
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Fft2 {
            width,
            height,
            row_fwd,
            col_fwd,
            row_inv,
            col_inv,
            scratch_len,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.width * self.height
    }

    fn scratch(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.scratch_len.max(self.len())]
    }

    /// Unnormalized forward transform. `buf` is row-major `height × width` on
    /// entry and column-major (transposed) on exit.
    pub(crate) fn forward(&self, buf: &mut Vec<Complex64>) {
        let mut scratch = self.scratch();
        self.row_fwd
            .process_with_scratch(buf, &mut scratch[..self.scratch_len]);
        transpose(buf, &mut scratch, self.width, self.height);
        std::mem::swap(buf, &mut scratch);
        let mut scratch = self.scratch();
        self.col_fwd
            .process_with_scratch(buf, &mut scratch[..self.scratch_len]);
    }

    /// Unnormalized inverse of [`Fft2::forward`], returning to row-major.
    pub(crate) fn inverse(&self, buf: &mut Vec<Complex64>) {
        let mut scratch = self.scratch();
        self.col_inv
            .process_with_scratch(buf, &mut scratch[..self.scratch_len]);
        transpose(buf, &mut scratch, self.height, self.width);
        std::mem::swap(buf, &mut scratch);
        let mut scratch = self.scratch();
        self.row_inv
            .process_with_scratch(buf, &mut scratch[..self.scratch_len]);
    }
}

/// `src` is `rows × cols` row-major (`cols` contiguous); writes `cols × rows`.
fn transpose(src: &[Complex64], dst: &mut [Complex64], cols: usize, rows: usize) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_non_square() {
        let (w, h) = (6, 4);
        let fft = Fft2::new(w, h);
        let orig: Vec<Complex64> = (0..w * h)
            .map(|i| Complex64::new(i as f64 * 0.5 - 3.0, (i % 5) as f64))
            .collect();
        let mut buf = orig.clone();
        fft.forward(&mut buf);
        fft.inverse(&mut buf);
        for (a, b) in buf.iter().zip(&orig) {
            assert!((a / (w * h) as f64 - b).norm() < 1e-12);
        }
    }

    #[test]
    fn dc_component() {
        let fft = Fft2::new(3, 5);
        let mut buf: Vec<Complex64> = (0..15).map(|i| Complex64::new(i as f64, 0.0)).collect();
        fft.forward(&mut buf);
        assert!((buf[0].re - 105.0).abs() < 1e-12);
    }
}
