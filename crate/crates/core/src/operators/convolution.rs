//! Periodic convolution with a PSF, evaluated through 2-D FFTs.

use rustfft::num_complex::Complex64;

use super::fft2::Fft2;
use super::{adjoint_of_ones, ForwardOperator, Psf};
use crate::image::Dims;
use crate::{Error, Result};

/// Circular convolution `Hx = k ⊛ x` on a fixed grid. The adjoint is circular
/// correlation with the same kernel.
pub struct ConvolutionOperator {
    dims: Dims,
    fft: Fft2,
    /// Kernel spectrum divided by the number of pixels.
    spectrum: Vec<Complex64>,
    column_sums: Vec<f64>,
}

impl std::fmt::Debug for ConvolutionOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConvolutionOperator")
            .field("dims", &self.dims)
            .finish_non_exhaustive()
    }
}

/// Builds the periodic convolution operator for `psf` on a `dims` grid.
///
/// The PSF may be smaller than the grid; its declared center lands on pixel
/// `(0, 0)` of the wrapped kernel so a centered delta is the identity.
pub fn convolution_operator(psf: &Psf, dims: Dims) -> Result<ConvolutionOperator> {
    let pd = psf.dims();
    if pd.width > dims.width || pd.height > dims.height {
        return Err(Error::DimensionMismatch(format!(
            "PSF {pd} is larger than the image grid {dims}"
        )));
    }
    let (cx, cy) = psf.center();
    let mut kernel = vec![Complex64::new(0.0, 0.0); dims.len()];
    for py in 0..pd.height {
        let ky = (py + dims.height - cy) % dims.height;
        for px in 0..pd.width {
            let kx = (px + dims.width - cx) % dims.width;
            kernel[dims.index(kx, ky)].re += psf.image().get(px, py);
        }
    }
    let fft = Fft2::new(dims.width, dims.height);
    fft.forward(&mut kernel);
    let norm = 1.0 / dims.len() as f64;
    kernel.iter_mut().for_each(|c| *c *= norm);

    let mut op = ConvolutionOperator {
        dims,
        fft,
        spectrum: kernel,
        column_sums: Vec::new(),
    };
    op.column_sums = adjoint_of_ones(&op)?;
    Ok(op)
}

impl ConvolutionOperator {
    fn filter(&self, input: &[f64], out: &mut [f64], conjugate: bool) {
        assert_eq!(input.len(), self.dims.len(), "input length");
        assert_eq!(out.len(), self.dims.len(), "output length");
        let mut buf: Vec<Complex64> = input.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.forward(&mut buf);
        if conjugate {
            buf.iter_mut()
                .zip(&self.spectrum)
                .for_each(|(b, k)| *b *= k.conj());
        } else {
            buf.iter_mut().zip(&self.spectrum).for_each(|(b, k)| *b *= k);
        }
        self.fft.inverse(&mut buf);
        out.iter_mut().zip(&buf).for_each(|(o, c)| *o = c.re);
    }
}

impl ForwardOperator for ConvolutionOperator {
    fn input_dims(&self) -> Dims {
        self.dims
    }

    fn output_dims(&self) -> Dims {
        self.dims
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        self.filter(x, out, false);
    }

    fn apply_adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        self.filter(y, out, true);
    }

    fn column_sums(&self) -> &[f64] {
        &self.column_sums
    }
}
