//! Rotation-ensemble inference with circular-spread uncertainty.
//!
//! The input cloud is rotated by `K` evenly spaced angles, each copy is
//! predicted independently, and the predictions are rotated back. A
//! rotation-equivariant predictor would agree with itself exactly; the
//! angular spread of the de-rotated predictions measures how far it is from
//! that ideal at each event.

use thiserror::Error;

use crate::event_model::EventCloud;
use crate::flow_head::augment::{rotate_cloud, rotate_vec};
use crate::flow_head::NormalFlowModel;
use crate::Vec2;

/// Ensemble members shorter than this have no usable direction.
pub const MIN_MEMBER_NORM: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UqError {
    #[error("need at least 2 directional samples, got {0}")]
    TooFewSamples(usize),
    #[error("invalid ensemble configuration: {0}")]
    InvalidConfig(String),
}

impl UqError {
    pub fn class(&self) -> &'static str {
        match self {
            UqError::TooFewSamples(_) => "TooFewSamples",
            UqError::InvalidConfig(_) => "InvalidConfig",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleConfig {
    /// Number of rotated copies. `1` disables the ensemble: plain prediction,
    /// `sigma = 0`, always valid.
    pub k: usize,
    /// Largest circular standard deviation still considered valid.
    pub threshold: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { k: 5, threshold: 0.3 }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<(), UqError> {
        if self.k == 0 {
            return Err(UqError::InvalidConfig("ensemble size must be at least 1".into()));
        }
        if !(self.threshold > 0.0) {
            return Err(UqError::InvalidConfig("threshold must be positive".into()));
        }
        Ok(())
    }

    pub fn angles(&self) -> Vec<f64> {
        (0..self.k)
            .map(|j| std::f64::consts::TAU * j as f64 / self.k as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalFlowPrediction {
    pub flow: Vec2,
    pub sigma: f64,
    pub valid: bool,
}

impl NormalFlowPrediction {
    /// Placeholder for events that were never predicted.
    pub fn missing() -> Self {
        Self {
            flow: Vec2::zeros(),
            sigma: f64::INFINITY,
            valid: false,
        }
    }
}

/// Anything that maps events of a cloud to flow vectors.
pub trait FlowPredictor: Sync {
    /// Predictions for events `rows` of `cloud`, aligned with `rows`.
    fn predict(&self, cloud: &EventCloud, rows: &[usize]) -> Vec<Vec2>;
}

impl FlowPredictor for NormalFlowModel {
    fn predict(&self, cloud: &EventCloud, rows: &[usize]) -> Vec<Vec2> {
        NormalFlowModel::predict(self, cloud, rows)
    }
}

/// De-rotated predictions of every ensemble member: `out[i][j]` is member
/// `j`'s prediction for event `rows[i]`.
pub fn ensemble_predict<P: FlowPredictor + ?Sized>(
    predictor: &P,
    cloud: &EventCloud,
    rows: &[usize],
    cfg: &EnsembleConfig,
) -> Vec<Vec<Vec2>> {
    let mut out = vec![Vec::with_capacity(cfg.k); rows.len()];
    for theta in cfg.angles() {
        let preds = if theta == 0.0 {
            predictor.predict(cloud, rows)
        } else {
            predictor.predict(&rotate_cloud(cloud, theta), rows)
        };
        for (slot, p) in out.iter_mut().zip(preds) {
            slot.push(rotate_vec(&p, -theta));
        }
    }
    out
}

/// `sqrt(−2 ln R̄)` with `R̄` the mean resultant length; `+∞` when `R̄ = 0`.
///
/// `1 − R̄²` is accumulated from pairwise half-angle sines rather than by
/// subtracting from one, so nearly identical angles give a spread of the
/// order of their differences instead of rounding noise.
pub fn circular_std(angles: &[f64]) -> Result<f64, UqError> {
    let n = angles.len();
    if n < 2 {
        return Err(UqError::TooFewSamples(n));
    }
    let mut pairs = 0.0;
    for (i, a) in angles.iter().enumerate() {
        for b in &angles[i + 1..] {
            pairs += (0.5 * (a - b)).sin().powi(2);
        }
    }
    let deficit = 4.0 * pairs / (n * n) as f64;
    if deficit >= 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok((-(-deficit).ln_1p()).sqrt())
}

/// Polar average of ensemble members: circular-mean direction, arithmetic
/// mean magnitude, and circular spread as uncertainty.
pub fn aggregate(members: &[Vec2], cfg: &EnsembleConfig) -> Result<NormalFlowPrediction, UqError> {
    let angles: Vec<f64> = members
        .iter()
        .filter(|m| m.norm() >= MIN_MEMBER_NORM)
        .map(|m| m.y.atan2(m.x))
        .collect();
    let sigma = circular_std(&angles)?;
    let (s, c) = angles
        .iter()
        .fold((0.0, 0.0), |(s, c), a| (s + a.sin(), c + a.cos()));
    let direction = s.atan2(c);
    let magnitude = members.iter().map(|m| m.norm()).sum::<f64>() / members.len() as f64;
    Ok(NormalFlowPrediction {
        flow: Vec2::new(direction.cos(), direction.sin()) * magnitude,
        sigma,
        valid: sigma <= cfg.threshold,
    })
}

/// Ensemble inference with per-event uncertainty and validity mask.
pub fn predict_with_uncertainty<P: FlowPredictor + ?Sized>(
    predictor: &P,
    cloud: &EventCloud,
    rows: &[usize],
    cfg: &EnsembleConfig,
) -> Result<Vec<NormalFlowPrediction>, UqError> {
    cfg.validate()?;
    if cfg.k == 1 {
        return Ok(predictor
            .predict(cloud, rows)
            .into_iter()
            .map(|flow| NormalFlowPrediction {
                flow,
                sigma: 0.0,
                valid: true,
            })
            .collect());
    }
    Ok(ensemble_predict(predictor, cloud, rows, cfg)
        .iter()
        .map(|m| aggregate(m, cfg).unwrap_or_else(|_| NormalFlowPrediction::missing()))
        .collect())
}
