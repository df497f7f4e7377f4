//! Per-event training losses and their analytic gradients with respect to
//! the prediction.

use thiserror::Error;

use crate::Vec2;

/// Norms below this make a sample's direction undefined.
pub const DEGENERATE_NORM: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum LossError {
    #[error("degenerate sample: direction undefined")]
    DegenerateSample,
}

/// Which objective a head is trained with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    /// Radial plus angular motion-field loss.
    #[default]
    MotionField,
    /// Norm plus direction regression of the full optical flow.
    NormDirection,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::MotionField => "motion-field",
            LossKind::NormDirection => "norm-direction",
        }
    }

    /// Loss and gradient for one sample.
    pub fn eval(&self, u: &Vec2, n: &Vec2, eps: f64) -> Result<(f64, Vec2), LossError> {
        match self {
            LossKind::MotionField => motion_field_loss_grad(u, n, eps),
            LossKind::NormDirection => baseline_loss_grad(u, n, eps),
        }
    }
}

/// Squared log ratio between the prediction's distance to `u/2` and the
/// radius of the circle with diameter `u`.
pub fn radial_loss(u: &Vec2, n: &Vec2, eps: f64) -> f64 {
    let d = n - u / 2.0;
    ((eps + d.norm()) / (eps + (u / 2.0).norm())).ln().powi(2)
}

pub fn radial_grad(u: &Vec2, n: &Vec2, eps: f64) -> Vec2 {
    let d = n - u / 2.0;
    let dn = d.norm();
    if dn == 0.0 {
        return Vec2::zeros();
    }
    let ratio = ((eps + dn) / (eps + (u / 2.0).norm())).ln();
    d * (2.0 * ratio / ((eps + dn) * dn))
}

/// Negative cosine between `n − u/2` and `u`.
pub fn angular_loss(u: &Vec2, n: &Vec2) -> Result<f64, LossError> {
    let d = n - u / 2.0;
    let (un, dn) = (u.norm(), d.norm());
    if un < DEGENERATE_NORM || dn < DEGENERATE_NORM {
        return Err(LossError::DegenerateSample);
    }
    Ok((-(d.dot(u)) / (dn * un)).clamp(-1.0, 1.0))
}

/// Gradient of the negative cosine `−cos(a, u)` with respect to `a`.
fn neg_cos_grad(a: &Vec2, u: &Vec2) -> Vec2 {
    let (an, un) = (a.norm(), u.norm());
    -(u - a * (a.dot(u) / (an * an))) / (an * un)
}

pub fn angular_grad(u: &Vec2, n: &Vec2) -> Result<Vec2, LossError> {
    angular_loss(u, n)?;
    Ok(neg_cos_grad(&(n - u / 2.0), u))
}

pub fn motion_field_loss(u: &Vec2, n: &Vec2, eps: f64) -> Result<f64, LossError> {
    Ok(radial_loss(u, n, eps) + angular_loss(u, n)?)
}

pub fn motion_field_loss_grad(u: &Vec2, n: &Vec2, eps: f64) -> Result<(f64, Vec2), LossError> {
    let loss = motion_field_loss(u, n, eps)?;
    Ok((loss, radial_grad(u, n, eps) + angular_grad(u, n)?))
}

/// Squared log ratio of norms plus negative cosine between `u` and the
/// predicted full flow `v`.
pub fn baseline_norm_direction_loss(u: &Vec2, v: &Vec2, eps: f64) -> Result<f64, LossError> {
    let (un, vn) = (u.norm(), v.norm());
    if un < DEGENERATE_NORM || vn < DEGENERATE_NORM {
        return Err(LossError::DegenerateSample);
    }
    let l1 = ((eps + un) / (eps + vn)).ln().powi(2);
    let l2 = (-(u.dot(v)) / (un * vn)).clamp(-1.0, 1.0);
    Ok(l1 + l2)
}

pub fn baseline_loss_grad(u: &Vec2, v: &Vec2, eps: f64) -> Result<(f64, Vec2), LossError> {
    let loss = baseline_norm_direction_loss(u, v, eps)?;
    let (un, vn) = (u.norm(), v.norm());
    let ratio = ((eps + un) / (eps + vn)).ln();
    let g1 = v * (-2.0 * ratio / ((eps + vn) * vn));
    Ok((loss, g1 + neg_cos_grad(v, u)))
}
