use super::{adjoint_of_ones, ForwardOperator};
use crate::image::Dims;
use crate::{Error, Result};

/// Explicit `M × N` matrix with nonnegative entries, stored row-major.
///
/// Used for small exact instances and as an oracle for the FFT path.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
    input_dims: Dims,
    output_dims: Dims,
    column_sums: Vec<f64>,
}

/// Builds a dense operator from `rows` rows of equal length. Object and data
/// spaces are flat (`N × 1` and `M × 1`); see [`DenseOperator::with_dims`].
pub fn dense_operator(rows: &[Vec<f64>]) -> Result<DenseOperator> {
    let m = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    if m == 0 || n == 0 {
        return Err(Error::domain("dense operator needs at least one entry"));
    }
    if let Some(r) = rows.iter().position(|r| r.len() != n) {
        return Err(Error::DimensionMismatch(format!(
            "row {r} has {} entries, expected {n}",
            rows[r].len()
        )));
    }
    let entries: Vec<f64> = rows.iter().flatten().copied().collect();
    if let Some(i) = entries.iter().position(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::domain(format!(
            "matrix entry ({}, {}) = {} is not a finite nonnegative number",
            i / n,
            i % n,
            entries[i]
        )));
    }
    let mut op = DenseOperator {
        rows: m,
        cols: n,
        entries,
        input_dims: Dims::new(n, 1),
        output_dims: Dims::new(m, 1),
        column_sums: Vec::new(),
    };
    op.column_sums = adjoint_of_ones(&op)?;
    Ok(op)
}

impl DenseOperator {
    /// Reinterprets object and data spaces as 2-D grids.
    pub fn with_dims(mut self, input: Dims, output: Dims) -> Result<Self> {
        if input.len() != self.cols || output.len() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "{input} -> {output} does not match a {}x{} matrix",
                self.rows, self.cols
            )));
        }
        self.input_dims = input;
        self.output_dims = output;
        Ok(self)
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.cols + col]
    }

    /// True when every entry is strictly positive.
    pub fn is_strictly_positive(&self) -> bool {
        self.entries.iter().all(|&v| v > 0.0)
    }
}

impl ForwardOperator for DenseOperator {
    fn input_dims(&self) -> Dims {
        self.input_dims
    }

    fn output_dims(&self) -> Dims {
        self.output_dims
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "input length");
        assert_eq!(out.len(), self.rows, "output length");
        for (o, row) in out.iter_mut().zip(self.entries.chunks_exact(self.cols)) {
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    fn apply_adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        assert_eq!(y.len(), self.rows, "input length");
        assert_eq!(out.len(), self.cols, "output length");
        out.fill(0.0);
        for (&yi, row) in y.iter().zip(self.entries.chunks_exact(self.cols)) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * yi;
            }
        }
    }

    fn column_sums(&self) -> &[f64] {
        &self.column_sums
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image;

    #[test]
    fn identity_matrix() {
        let op = dense_operator(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let x = Image::new(Dims::new(2, 1), vec![3.0, -4.0]).unwrap();
        assert_eq!(op.apply(&x).unwrap(), x);
    }

    #[test]
    fn averaging_matrix() {
        let op = dense_operator(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let x = Image::new(Dims::new(2, 1), vec![1.0, 1.0]).unwrap();
        assert_eq!(op.apply(&x).unwrap().values(), &[1.0, 1.0]);
        assert!(op.is_strictly_positive());
    }

    #[test]
    fn zero_column_rejected() {
        assert!(dense_operator(&[vec![1.0, 0.0], vec![2.0, 0.0]]).is_err());
    }

    #[test]
    fn negative_or_ragged_rejected() {
        assert!(dense_operator(&[vec![1.0, -0.1]]).is_err());
        assert!(dense_operator(&[vec![1.0, 1.0], vec![1.0]]).is_err());
        assert!(dense_operator(&[]).is_err());
    }

    #[test]
    fn with_dims_checks_shape() {
        let op = dense_operator(&vec![vec![1.0; 4]; 6]).unwrap();
        assert!(op.clone().with_dims(Dims::new(2, 2), Dims::new(3, 2)).is_ok());
        assert!(op.with_dims(Dims::new(4, 1), Dims::new(5, 1)).is_err());
    }
}
