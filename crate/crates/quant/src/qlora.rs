//! Low-rank adapter math over a quantized base matrix.
//!
//! Forward: Y = X·dequant(W) + X·L1·L2 where L1 is (in, r) and L2 is
//! (r, out). Only the adapter factors receive gradients; for an upstream
//! gradient dY these are dL1 = Xᵀ·(dY·L2ᵀ) and dL2 = (X·L1)ᵀ·dY.

use crate::nf4::{double_dequant, QuantizedTensor};
use ndarray::Array2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QloraError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("adapter rank must be at least 1")]
    ZeroRank,
}

/// A rank-r adapter pair attached to one base matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    pub l1: Array2<f64>,
    pub l2: Array2<f64>,
    pub rank: usize,
    pub target_layer: String,
}

impl LoraAdapter {
    pub fn new(l1: Array2<f64>, l2: Array2<f64>, target_layer: &str) -> Result<Self, QloraError> {
        let rank = l1.ncols();
        if rank == 0 {
            return Err(QloraError::ZeroRank);
        }
        if l2.nrows() != rank {
            return Err(QloraError::DimensionMismatch(format!(
                "L1 is {}x{} but L2 is {}x{}",
                l1.nrows(),
                l1.ncols(),
                l2.nrows(),
                l2.ncols()
            )));
        }
        Ok(LoraAdapter { l1, l2, rank, target_layer: target_layer.to_string() })
    }

    /// An all-zero adapter of the given shape.
    pub fn zeros(input_dim: usize, output_dim: usize, rank: usize, target_layer: &str) -> Result<Self, QloraError> {
        LoraAdapter::new(
            Array2::zeros((input_dim, rank)),
            Array2::zeros((rank, output_dim)),
            target_layer,
        )
    }
}

fn check_dims(x: &Array2<f64>, base: &QuantizedTensor, adapter: &LoraAdapter) -> Result<(), QloraError> {
    if x.ncols() != base.rows {
        return Err(QloraError::DimensionMismatch(format!(
            "input has {} columns but the base matrix has {} rows",
            x.ncols(),
            base.rows
        )));
    }
    if adapter.l1.nrows() != base.rows || adapter.l2.ncols() != base.cols {
        return Err(QloraError::DimensionMismatch(format!(
            "adapter maps {}->{} but the base matrix is {}x{}",
            adapter.l1.nrows(),
            adapter.l2.ncols(),
            base.rows,
            base.cols
        )));
    }
    Ok(())
}

/// Y = X·dequant(base) + X·L1·L2.
pub fn qlora_forward(
    x: &Array2<f64>,
    base: &QuantizedTensor,
    adapter: &LoraAdapter,
) -> Result<Array2<f64>, QloraError> {
    check_dims(x, base, adapter)?;
    let w = double_dequant(base);
    Ok(x.dot(&w) + x.dot(&adapter.l1).dot(&adapter.l2))
}

/// Gradients of the adapter factors for an upstream gradient `dy`.
pub fn adapter_gradients(
    x: &Array2<f64>,
    adapter: &LoraAdapter,
    dy: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<f64>), QloraError> {
    if x.nrows() != dy.nrows() || dy.ncols() != adapter.l2.ncols() {
        return Err(QloraError::DimensionMismatch(format!(
            "upstream gradient is {}x{}, expected {}x{}",
            dy.nrows(),
            dy.ncols(),
            x.nrows(),
            adapter.l2.ncols()
        )));
    }
    if x.ncols() != adapter.l1.nrows() {
        return Err(QloraError::DimensionMismatch(format!(
            "input has {} columns but L1 has {} rows",
            x.ncols(),
            adapter.l1.nrows()
        )));
    }
    let d_l1 = x.t().dot(&dy.dot(&adapter.l2.t()));
    let d_l2 = x.dot(&adapter.l1).t().dot(dy);
    Ok((d_l1, d_l2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nf4::quantize_nf4;
    use ndarray::arr2;

    #[test]
    fn zero_rank_rejected() {
        let err = LoraAdapter::new(Array2::zeros((4, 0)), Array2::zeros((0, 3)), "layer");
        assert!(matches!(err, Err(QloraError::ZeroRank)));
    }

    #[test]
    fn mismatched_factors_rejected() {
        let err = LoraAdapter::new(Array2::zeros((4, 2)), Array2::zeros((3, 5)), "layer");
        assert!(matches!(err, Err(QloraError::DimensionMismatch(_))));
    }

    #[test]
    fn forward_shape_checks() {
        let base = quantize_nf4(&Array2::zeros((4, 3))).unwrap();
        let adapter = LoraAdapter::zeros(4, 3, 2, "layer").unwrap();
        let bad_x = Array2::zeros((2, 5));
        assert!(matches!(
            qlora_forward(&bad_x, &base, &adapter),
            Err(QloraError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn zero_adapter_is_plain_dequant_matmul() {
        let w = arr2(&[[0.5, -0.25], [1.0, 0.75], [-0.5, 0.0]]);
        let base = quantize_nf4(&w).unwrap();
        let adapter = LoraAdapter::zeros(3, 2, 2, "layer").unwrap();
        let x = arr2(&[[1.0, 2.0, 3.0], [0.0, -1.0, 0.5]]);
        let y = qlora_forward(&x, &base, &adapter).unwrap();
        let expected = x.dot(&double_dequant(&base));
        assert_eq!(y, expected);
    }

    #[test]
    fn gradients_have_factor_shapes() {
        let adapter = LoraAdapter::zeros(3, 2, 4, "layer").unwrap();
        let x = Array2::ones((5, 3));
        let dy = Array2::ones((5, 2));
        let (d1, d2) = adapter_gradients(&x, &adapter, &dy).unwrap();
        assert_eq!(d1.dim(), (3, 4));
        assert_eq!(d2.dim(), (4, 2));
    }
}
