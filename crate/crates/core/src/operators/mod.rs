//! Linear forward models `H` for `y = Hx + b`.
//!
//! Every operator maps an object image to a data image and exposes its adjoint
//! and the column sums `Hᵀ1` that normalize the EM update.

mod convolution;
mod dense;
mod fft2;
mod psf;

pub use convolution::{convolution_operator, ConvolutionOperator};
pub use dense::{dense_operator, DenseOperator};
pub use psf::{count_noise_psf, gaussian_psf, Psf};

use crate::image::{Dims, Image};
use crate::{Error, Result};

/// A linear map with nonnegative entries.
///
/// `apply_into` and `apply_adjoint_into` panic when slice lengths disagree
/// with the declared dimensions; the `Image`-level wrappers check first.
pub trait ForwardOperator: Send + Sync {
    fn input_dims(&self) -> Dims;

    fn output_dims(&self) -> Dims;

    fn apply_into(&self, x: &[f64], out: &mut [f64]);

    fn apply_adjoint_into(&self, y: &[f64], out: &mut [f64]);

    /// `Hᵀ1`, strictly positive.
    fn column_sums(&self) -> &[f64];

    fn apply(&self, x: &Image) -> Result<Image> {
        check_dims("object", self.input_dims(), x.dims())?;
        let mut out = vec![0.0; self.output_dims().len()];
        self.apply_into(x.values(), &mut out);
        Image::new(self.output_dims(), out)
    }

    fn apply_adjoint(&self, y: &Image) -> Result<Image> {
        check_dims("data", self.output_dims(), y.dims())?;
        let mut out = vec![0.0; self.input_dims().len()];
        self.apply_adjoint_into(y.values(), &mut out);
        Image::new(self.input_dims(), out)
    }
}

pub(crate) fn check_dims(role: &str, expected: Dims, actual: Dims) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch(format!(
            "{role} image is {actual}, operator expects {expected}"
        )));
    }
    Ok(())
}

/// Computes `Hᵀ1` through the adjoint and checks strict positivity.
pub(crate) fn adjoint_of_ones(op: &dyn ForwardOperator) -> Result<Vec<f64>> {
    let ones = vec![1.0; op.output_dims().len()];
    let mut sums = vec![0.0; op.input_dims().len()];
    op.apply_adjoint_into(&ones, &mut sums);
    if let Some(j) = sums.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::domain(format!(
            "column {j} of the operator sums to {}, EM needs Hᵀ1 > 0",
            sums[j]
        )));
    }
    Ok(sums)
}
