//! End-to-end glue: slice-wise ensemble inference over long recordings and
//! windowed egomotion estimation from the resulting predictions.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::egomotion::{
    build_problem, solve_negative_depth, solve_svm, EgoError, NegDepthConfig, NormalFlowObs, SvmConfig,
    TranslationEstimate,
};
use crate::event_model::EventCloud;
use crate::io::EgoRow;
use crate::uq::{predict_with_uncertainty, EnsembleConfig, FlowPredictor, NormalFlowPrediction, UqError};
use crate::veckm::MAX_EVENTS_PER_SLICE;
use crate::{Vec2, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceConfig {
    /// Slice length, seconds.
    pub slice: f64,
    /// Extra time on both sides of a slice used as neighborhood context.
    pub margin: f64,
    pub max_events: usize,
    pub ensemble: EnsembleConfig,
    pub seed: u64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            slice: 0.02,
            margin: 0.02,
            max_events: MAX_EVENTS_PER_SLICE,
            ensemble: EnsembleConfig::default(),
            seed: 0,
        }
    }
}

/// Half-open time slices `[t0 + k·slice, t0 + (k+1)·slice)` covering the
/// cloud, as index ranges.
pub fn slice_ranges(cloud: &EventCloud, slice: f64) -> Vec<std::ops::Range<usize>> {
    let t0 = cloud.start_time();
    let mut out = Vec::new();
    let mut start = 0;
    let mut k = 1u64;
    while start < cloud.len() {
        let end = cloud.events().partition_point(|e| e.t < t0 + k as f64 * slice);
        if end > start {
            out.push(start..end);
            start = end;
        }
        k += 1;
    }
    out
}

/// Predicts every event of `cloud`, one slice at a time. Slices with more
/// than `max_events` events are uniformly subsampled; events left out are
/// returned as invalid with zero flow.
pub fn infer_cloud<P: FlowPredictor + ?Sized>(
    predictor: &P,
    cloud: &EventCloud,
    cfg: &InferenceConfig,
) -> Result<Vec<NormalFlowPrediction>, UqError> {
    cfg.ensemble.validate()?;
    let mut out = vec![NormalFlowPrediction::missing(); cloud.len()];
    let events = cloud.events();
    for (k, core) in slice_ranges(cloud, cfg.slice).into_iter().enumerate() {
        let (t_lo, t_hi) = (events[core.start].t, events[core.end - 1].t);
        let ctx = cloud.time_range(t_lo - cfg.margin, t_hi + cfg.margin);
        let ctx = ctx.start.min(core.start)..ctx.end.max(core.end);

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let (ids, rows): (Vec<usize>, Vec<usize>) = if core.len() > cfg.max_events {
            // Keep exactly `max_events` of the slice and the same fraction
            // of the surrounding context.
            let mut keep: Vec<usize> = index::sample(&mut rng, core.len(), cfg.max_events)
                .into_iter()
                .map(|i| core.start + i)
                .collect();
            let frac = cfg.max_events as f64 / core.len() as f64;
            for side in [ctx.start..core.start, core.end..ctx.end] {
                let n = ((side.len() as f64) * frac).round() as usize;
                keep.extend(index::sample(&mut rng, side.len(), n).into_iter().map(|i| side.start + i));
            }
            keep.sort_unstable();
            let rows = keep
                .iter()
                .enumerate()
                .filter(|(_, &g)| core.contains(&g))
                .map(|(l, _)| l)
                .collect();
            (keep, rows)
        } else {
            let ids: Vec<usize> = ctx.clone().collect();
            let rows = (core.start - ctx.start..core.end - ctx.start).collect();
            (ids, rows)
        };
        let local = EventCloud::new(ids.iter().map(|&i| events[i]).collect()).expect("subset of a valid cloud");
        let preds = predict_with_uncertainty(predictor, &local, &rows, &cfg.ensemble)?;
        for (&r, p) in rows.iter().zip(preds) {
            out[ids[r]] = p;
        }
    }
    Ok(out)
}

/// Time-weighted mean angular velocity over `[t0, t1]`, treating the samples
/// as a piecewise-linear signal held constant beyond its ends.
pub fn imu_mean(samples: &[(f64, Vec3)], t0: f64, t1: f64) -> Vec3 {
    assert!(!samples.is_empty(), "no IMU samples");
    let at = |t: f64| -> Vec3 {
        let i = samples.partition_point(|s| s.0 <= t);
        if i == 0 {
            samples[0].1
        } else if i == samples.len() {
            samples[i - 1].1
        } else {
            let (ta, wa) = samples[i - 1];
            let (tb, wb) = samples[i];
            if tb > ta {
                wa + (wb - wa) * ((t - ta) / (tb - ta))
            } else {
                wb
            }
        }
    };
    if !(t1 > t0) {
        return at(t0);
    }
    let mut knots = vec![t0];
    knots.extend(samples.iter().map(|s| s.0).filter(|&t| t > t0 && t < t1));
    knots.push(t1);
    let mut acc = Vec3::zeros();
    for w in knots.windows(2) {
        acc += (at(w[0]) + at(w[1])) * (0.5 * (w[1] - w[0]));
    }
    acc / (t1 - t0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Solver {
    Svm(SvmConfig),
    NegativeDepth(NegDepthConfig),
}

impl Solver {
    pub fn solve(&self, obs: &[NormalFlowObs], omega0: Vec3) -> Result<TranslationEstimate, EgoError> {
        match self {
            Solver::Svm(cfg) => solve_svm(&build_problem(obs, omega0)?, cfg),
            Solver::NegativeDepth(cfg) => solve_negative_depth(obs, omega0, cfg),
        }
    }
}

/// Result of one egomotion window: an estimate or the reason there is none.
pub type WindowResult = (f64, f64, Result<TranslationEstimate, EgoError>);

/// Solves for the translation direction in consecutive windows of length
/// `window`, using only valid predictions. `omega` gives the rotation to
/// remove in each window.
pub fn egomotion_windows(
    positions: &[Vec2],
    times: &[f64],
    preds: &[NormalFlowPrediction],
    window: f64,
    omega: impl Fn(f64, f64) -> Vec3,
    solver: &Solver,
) -> Vec<WindowResult> {
    assert_eq!(positions.len(), preds.len());
    assert_eq!(times.len(), preds.len());
    if times.is_empty() {
        return Vec::new();
    }
    let t0 = times.iter().copied().fold(f64::INFINITY, f64::min);
    let t_end = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n_windows = (((t_end - t0) / window).floor() as usize + 1).max(1);
    let mut buckets: Vec<Vec<NormalFlowObs>> = vec![Vec::new(); n_windows];
    for ((x, t), p) in positions.iter().zip(times).zip(preds) {
        if !p.valid {
            continue;
        }
        let w = (((t - t0) / window).floor() as usize).min(n_windows - 1);
        if let Some(o) = NormalFlowObs::from_flow(*x, p.flow) {
            buckets[w].push(o);
        }
    }
    buckets
        .iter()
        .enumerate()
        .map(|(w, obs)| {
            let (a, b) = (t0 + w as f64 * window, t0 + (w + 1) as f64 * window);
            (a, b, solver.solve(obs, omega(a, b)))
        })
        .collect()
}

/// Keeps the successful windows as output rows.
pub fn ego_rows(results: &[WindowResult]) -> Vec<EgoRow> {
    results
        .iter()
        .filter_map(|(a, b, r)| {
            r.as_ref().ok().map(|est| EgoRow {
                t_start: *a,
                t_end: *b,
                v: est.v,
                inlier_fraction: est.inlier_fraction,
            })
        })
        .collect()
}
