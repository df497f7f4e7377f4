//! Per-event normal-flow head: an MLP over encoding rows, its losses,
//! augmentations and training loop.

pub mod augment;
pub mod loss;
pub mod mlp;
pub mod train;

use ndarray::Array2;
use thiserror::Error;

use crate::veckm::Encoding;
use crate::Vec2;

pub use augment::{augment, AugmentParams, AugmentationConfig};
pub use loss::{
    angular_loss, baseline_norm_direction_loss, motion_field_loss, radial_loss, LossError, LossKind,
};
pub use mlp::{Adam, Layer, Mlp};
pub use train::{train, EpochLog, NormalFlowModel, TrainConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HeadError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("training set has no usable events")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl HeadError {
    pub fn class(&self) -> &'static str {
        match self {
            HeadError::ShapeMismatch { .. } => "ShapeMismatch",
            HeadError::EmptyDataset => "EmptyDataset",
            HeadError::InvalidConfig(_) => "InvalidConfig",
        }
    }
}

/// Writes the network input for one interleaved encoding row: real parts,
/// then imaginary parts, scaled by `√d` so entries are of order one.
pub fn encoding_input(row: &[f64], out: &mut [f32]) {
    let d = row.len() / 2;
    debug_assert_eq!(out.len(), row.len());
    let scale = (d as f64).sqrt();
    for (m, pair) in row.chunks_exact(2).enumerate() {
        out[m] = (pair[0] * scale) as f32;
        out[d + m] = (pair[1] * scale) as f32;
    }
}

/// Network inputs for rows `range` of an encoding.
pub fn encoding_inputs(enc: &Encoding, range: std::ops::Range<usize>) -> Array2<f32> {
    let width = 2 * enc.dim();
    let mut x = Array2::zeros((range.len(), width));
    for (mut out, k) in x.rows_mut().into_iter().zip(range) {
        encoding_input(enc.row(k), out.as_slice_mut().expect("standard layout"));
    }
    x
}

/// Prediction for a single interleaved encoding row.
pub fn forward(row: &[f64], net: &Mlp) -> Result<Vec2, HeadError> {
    if row.len() != net.input_dim() {
        return Err(HeadError::ShapeMismatch {
            expected: net.input_dim(),
            got: row.len(),
        });
    }
    let mut x = Array2::zeros((1, row.len()));
    encoding_input(row, x.as_slice_mut().expect("standard layout"));
    let out = net.forward(x.view())?;
    Ok(Vec2::new(out[[0, 0]] as f64, out[[0, 1]] as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_predicts_zero_flow() {
        let net = Mlp::zeros(8, &[4, 4, 4], 2);
        let row: Vec<f64> = (0..8).map(|i| i as f64 * 0.1 - 0.3).collect();
        assert_eq!(forward(&row, &net).unwrap(), Vec2::zeros());
    }

    #[test]
    fn forward_is_bitwise_reproducible() {
        let net = Mlp::new(8, &[16, 16, 16], 2, 77);
        let row: Vec<f64> = (0..8).map(|i| (i as f64).cos() / 2.0).collect();
        let a = forward(&row, &net).unwrap();
        let b = forward(&row, &net.clone()).unwrap();
        assert_eq!(a.x.to_bits(), b.x.to_bits());
        assert_eq!(a.y.to_bits(), b.y.to_bits());
    }

    #[test]
    fn wrong_row_length_is_rejected() {
        let net = Mlp::zeros(8, &[4], 2);
        assert!(matches!(forward(&[0.0; 6], &net), Err(HeadError::ShapeMismatch { expected: 8, got: 6 })));
    }

    #[test]
    fn input_layout_is_real_then_imag() {
        let row = [1.0, 2.0, 3.0, 4.0];
        let mut out = [0.0f32; 4];
        encoding_input(&row, &mut out);
        let s = 2f32.sqrt();
        for (got, want) in out.iter().zip([s, 3.0 * s, 2.0 * s, 4.0 * s]) {
            assert!((got - want).abs() < 1e-6);
        }
    }
}
