//! Normal-flow and egomotion evaluation metrics.

use thiserror::Error;

use crate::{Vec2, Vec3};

/// Predictions shorter than this carry no direction and are masked.
pub const MIN_PREDICTION_NORM: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("prediction has zero magnitude")]
    ZeroPrediction,
    #[error("no unmasked samples to evaluate")]
    EmptyInput,
    #[error("length mismatch: {0} estimates vs {1} references")]
    LengthMismatch(usize, usize),
}

impl MetricsError {
    pub fn class(&self) -> &'static str {
        match self {
            MetricsError::ZeroPrediction => "ZeroPrediction",
            MetricsError::EmptyInput => "EmptyInput",
            MetricsError::LengthMismatch(..) => "LengthMismatch",
        }
    }
}

/// Projection endpoint error `|u·n̂/‖n̂‖ − ‖n̂‖|` of a prediction `n` against
/// the true optical flow `u`.
pub fn pee(u: &Vec2, n: &Vec2) -> Result<f64, MetricsError> {
    let norm = n.norm();
    if norm < MIN_PREDICTION_NORM {
        return Err(MetricsError::ZeroPrediction);
    }
    Ok((u.dot(n) / norm - norm).abs())
}

/// Percentage of pairs `(u, n̂)` whose dot product is positive.
pub fn pos_pct(pairs: &[(Vec2, Vec2)]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let pos = pairs.iter().filter(|(u, n)| u.dot(n) > 0.0).count();
    Ok(100.0 * pos as f64 / pairs.len() as f64)
}

/// RMS translation error after scaling each unit estimate by the true speed.
pub fn rms_velocity(estimates: &[Vec3], gt: &[Vec3]) -> Result<f64, MetricsError> {
    if estimates.len() != gt.len() {
        return Err(MetricsError::LengthMismatch(estimates.len(), gt.len()));
    }
    if gt.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let sum: f64 = estimates
        .iter()
        .zip(gt)
        .map(|(e, v)| {
            let dir = if e.norm() > 0.0 { e.normalize() } else { *e };
            (dir * v.norm() - v).norm_squared()
        })
        .sum();
    Ok((sum / gt.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowEvalReport {
    pub pee_mean: f64,
    pub pos_pct: f64,
    pub n_evaluated: usize,
    pub n_masked: usize,
}

/// Evaluates predictions against true optical flow. Events with
/// `include[i] == false` are skipped entirely; zero predictions among the
/// rest are masked and counted.
pub fn evaluate_flow(
    gt: &[Vec2],
    pred: &[Vec2],
    include: Option<&[bool]>,
) -> Result<FlowEvalReport, MetricsError> {
    if gt.len() != pred.len() {
        return Err(MetricsError::LengthMismatch(pred.len(), gt.len()));
    }
    if let Some(mask) = include {
        if mask.len() != gt.len() {
            return Err(MetricsError::LengthMismatch(mask.len(), gt.len()));
        }
    }
    let mut sum = 0.0;
    let mut pos = 0usize;
    let mut n = 0usize;
    let mut masked = 0usize;
    for (i, (u, p)) in gt.iter().zip(pred).enumerate() {
        if include.is_some_and(|m| !m[i]) {
            continue;
        }
        match pee(u, p) {
            Ok(e) => {
                sum += e;
                n += 1;
                if u.dot(p) > 0.0 {
                    pos += 1;
                }
            }
            Err(_) => masked += 1,
        }
    }
    if n == 0 {
        return Err(MetricsError::EmptyInput);
    }
    Ok(FlowEvalReport {
        pee_mean: sum / n as f64,
        pos_pct: 100.0 * pos as f64 / n as f64,
        n_evaluated: n,
        n_masked: masked,
    })
}

/// Per-window reports plus their unweighted mean. `windows` are index ranges
/// into the event arrays; windows without evaluable events are skipped.
pub fn evaluate_windows(
    gt: &[Vec2],
    pred: &[Vec2],
    include: Option<&[bool]>,
    windows: &[std::ops::Range<usize>],
) -> Result<(FlowEvalReport, Vec<(usize, FlowEvalReport)>), MetricsError> {
    if gt.len() != pred.len() {
        return Err(MetricsError::LengthMismatch(pred.len(), gt.len()));
    }
    let mut per = Vec::new();
    for (w, r) in windows.iter().enumerate() {
        let mask = include.map(|m| &m[r.clone()]);
        if let Ok(rep) = evaluate_flow(&gt[r.clone()], &pred[r.clone()], mask) {
            per.push((w, rep));
        }
    }
    if per.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let k = per.len() as f64;
    let total = FlowEvalReport {
        pee_mean: per.iter().map(|(_, r)| r.pee_mean).sum::<f64>() / k,
        pos_pct: per.iter().map(|(_, r)| r.pos_pct).sum::<f64>() / k,
        n_evaluated: per.iter().map(|(_, r)| r.n_evaluated).sum(),
        n_masked: per.iter().map(|(_, r)| r.n_masked).sum(),
    };
    Ok((total, per))
}

/// Ranks with ties sharing their average rank (1-based).
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = 0.5 * (i + j) as f64 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(MetricsError::EmptyInput);
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (va * vb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pee_examples() {
        let u = Vec2::new(1.0, 0.0);
        assert_eq!(pee(&u, &u).unwrap(), 0.0);
        assert!(pee(&u, &Vec2::new(0.5, 0.5)).unwrap() < 1e-15);
        assert!((pee(&Vec2::new(2.0, 0.0), &Vec2::new(0.5, 0.0)).unwrap() - 1.5).abs() < 1e-15);
        assert_eq!(pee(&u, &Vec2::zeros()), Err(MetricsError::ZeroPrediction));
    }

    #[test]
    fn pos_pct_examples() {
        let u = Vec2::new(1.0, 2.0);
        assert_eq!(pos_pct(&[(u, u), (u, u)]).unwrap(), 100.0);
        assert_eq!(pos_pct(&[(u, -u)]).unwrap(), 0.0);
        let pairs = [(u, u), (u, u), (u, -u), (u, u)];
        assert_eq!(pos_pct(&pairs).unwrap(), 75.0);
        assert_eq!(pos_pct(&[]), Err(MetricsError::EmptyInput));
    }

    #[test]
    fn rms_examples() {
        let v = Vec3::new(1.0, 0.0, 0.0);
        assert_eq!(rms_velocity(&[v], &[v]).unwrap(), 0.0);
        let single = rms_velocity(&[Vec3::new(0.0, 1.0, 0.0)], &[v]).unwrap();
        assert!((single - 2f64.sqrt()).abs() < 1e-12);
        let two = rms_velocity(&[v, Vec3::new(0.0, 3.0, 0.0)], &[v, v]).unwrap();
        assert!((two - 1.0).abs() < 1e-12);
        assert_eq!(rms_velocity(&[v], &[]), Err(MetricsError::LengthMismatch(1, 0)));
    }

    #[test]
    fn on_circle_has_zero_pee() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let u = Vec2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let n = u / 2.0 + Vec2::new(phi.cos(), phi.sin()) * (u.norm() / 2.0);
            if n.norm() < 1e-6 {
                continue;
            }
            assert!(n.dot(&(u - n)).abs() < 1e-9);
            assert!(pee(&u, &n).unwrap() < 1e-9);
        }
    }

    #[test]
    fn evaluate_masks_zero_predictions() {
        let gt = vec![Vec2::new(1.0, 0.0); 4];
        let pred = vec![Vec2::new(1.0, 0.0), Vec2::zeros(), Vec2::new(2.0, 0.0), Vec2::new(-1.0, 0.0)];
        let r = evaluate_flow(&gt, &pred, None).unwrap();
        assert_eq!(r.n_evaluated, 3);
        assert_eq!(r.n_masked, 1);
        assert!((r.pee_mean - (0.0 + 1.0 + 2.0) / 3.0).abs() < 1e-12);
        assert!((r.pos_pct - 200.0 / 3.0).abs() < 1e-12);
        let only = evaluate_flow(&gt, &pred, Some(&[true, false, false, false])).unwrap();
        assert_eq!((only.n_evaluated, only.n_masked), (1, 0));
    }

    #[test]
    fn window_mean_is_unweighted() {
        let gt = vec![Vec2::new(1.0, 0.0); 4];
        let pred = vec![Vec2::new(1.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(3.0, 0.0)];
        let (total, per) = evaluate_windows(&gt, &pred, None, &[0..3, 3..4]).unwrap();
        assert_eq!(per.len(), 2);
        assert!((total.pee_mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_basics() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&a, &[10.0, 20.0, 30.0, 40.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&a, &[4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(average_ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }

    proptest! {
        #[test]
        fn pee_rotation_invariant(ux in -3.0..3.0f64, uy in -3.0..3.0f64,
                                  nx in -3.0..3.0f64, ny in -3.0..3.0f64,
                                  theta in 0.0..std::f64::consts::TAU) {
            let n = Vec2::new(nx, ny);
            prop_assume!(n.norm() > 1e-3);
            let u = Vec2::new(ux, uy);
            let r = nalgebra::Rotation2::new(theta);
            let a = pee(&u, &n).unwrap();
            let b = pee(&(r * u), &(r * n)).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn pos_pct_scale_invariant(ux in -3.0..3.0f64, uy in -3.0..3.0f64,
                                   nx in -3.0..3.0f64, ny in -3.0..3.0f64,
                                   s in 0.01..100.0f64) {
            let (u, n) = (Vec2::new(ux, uy), Vec2::new(nx, ny));
            let base = pos_pct(&[(u, n)]).unwrap();
            prop_assert_eq!(base, pos_pct(&[(u * s, n)]).unwrap());
            prop_assert_eq!(base, pos_pct(&[(u, n * s)]).unwrap());
        }
    }
}
