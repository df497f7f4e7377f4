//! Translation direction from normal flow and a known rotation.
//!
//! With the rotational flow `B_x Ω` removed, the remaining normal-flow
//! magnitude `n_x` equals `(g_xᵀ A_x V) / Z_x`. Positive depth fixes the sign
//! of `g_xᵀ A_x V` to that of `n_x`, so recovering `V` is a linear
//! classification problem through the origin. [`solve_svm`] solves it as a
//! soft-margin linear SVM; [`solve_negative_depth`] is the older approach of
//! minimizing the total negative depth on the unit sphere.

use nalgebra::Matrix2x3;
use thiserror::Error;

use crate::{Vec2, Vec3};

/// Derotated magnitudes at or below this are dropped: their sign is noise.
pub const MIN_DEROTATED: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum EgoError {
    #[error("insufficient data: {0} usable observations, need at least 3")]
    InsufficientData(usize),
    #[error("degenerate geometry: constraint matrix has rank {0}")]
    DegenerateGeometry(usize),
    #[error("solver returned a zero vector")]
    ZeroSolution,
}

impl EgoError {
    pub fn class(&self) -> &'static str {
        match self {
            EgoError::InsufficientData(_) => "InsufficientData",
            EgoError::DegenerateGeometry(_) => "DegenerateGeometry",
            EgoError::ZeroSolution => "ZeroSolution",
        }
    }
}

/// Translational motion-field matrix: `u_trans = A_x V / Z`.
pub fn matrix_a(x: Vec2) -> Matrix2x3<f64> {
    Matrix2x3::new(-1.0, 0.0, x.x, 0.0, -1.0, x.y)
}

/// Rotational motion-field matrix: `u_rot = B_x Ω`.
pub fn matrix_b(x: Vec2) -> Matrix2x3<f64> {
    let (px, py) = (x.x, x.y);
    Matrix2x3::new(px * py, -(px * px + 1.0), py, py * py + 1.0, -px * py, -px)
}

/// One normal-flow measurement: pixel `x`, unit direction `g`, magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalFlowObs {
    pub x: Vec2,
    pub g: Vec2,
    pub mag: f64,
}

impl NormalFlowObs {
    /// Splits a normal-flow vector into direction and magnitude. `None` for
    /// a zero vector.
    pub fn from_flow(x: Vec2, n: Vec2) -> Option<Self> {
        let mag = n.norm();
        (mag > 0.0 && mag.is_finite()).then(|| Self { x, g: n / mag, mag })
    }

    /// Constraint row `g_xᵀ A_x`.
    pub fn constraint(&self) -> Vec3 {
        (self.g.transpose() * matrix_a(self.x)).transpose()
    }

    /// Depth-positivity product `ρ_x(V) = n_x (g_xᵀ A_x V)`.
    pub fn rho(&self, omega0: &Vec3, v: &Vec3) -> f64 {
        derotate(self, omega0) * self.constraint().dot(v)
    }
}

/// Normal-flow magnitude with the rotational component removed:
/// `n_x = |n̂_x| − g_xᵀ B_x Ω₀`.
pub fn derotate(obs: &NormalFlowObs, omega0: &Vec3) -> f64 {
    obs.mag - (obs.g.transpose() * matrix_b(obs.x) * omega0)[0]
}

/// Sign-classification problem built from observations, already doubled
/// through the origin: rows `q_i, −q_i` with labels `s_i, −s_i`.
#[derive(Debug, Clone)]
pub struct EgoProblem {
    pub rows: Vec<Vec3>,
    pub labels: Vec<f64>,
    /// Derotated magnitudes of the kept observations (undoubled).
    pub derotated: Vec<f64>,
    pub omega0: Vec3,
}

impl EgoProblem {
    /// Number of observations before doubling.
    pub fn observations(&self) -> usize {
        self.rows.len() / 2
    }

    /// Fraction of observations whose constraint `ρ > 0` holds for `v`.
    pub fn satisfied_fraction(&self, v: &Vec3) -> f64 {
        let p = self.observations();
        let ok = (0..p).filter(|&i| self.labels[i] * self.rows[i].dot(v) > 0.0).count();
        ok as f64 / p as f64
    }
}

/// Constraint rows and derotated magnitudes of the usable observations.
fn usable(observations: &[NormalFlowObs], omega0: &Vec3) -> (Vec<Vec3>, Vec<f64>) {
    observations
        .iter()
        .filter_map(|o| {
            let n = derotate(o, omega0);
            (n.abs() > MIN_DEROTATED && n.is_finite()).then(|| (o.constraint(), n))
        })
        .unzip()
}

fn rank(rows: &[Vec3]) -> usize {
    let gram = rows.iter().fold(nalgebra::Matrix3::zeros(), |acc, q| acc + q * q.transpose());
    let mut ev: Vec<f64> = gram.symmetric_eigen().eigenvalues.iter().map(|e| e.max(0.0)).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if ev[0] == 0.0 {
        return 0;
    }
    // Eigenvalues of the Gram matrix are squared singular values; a relative
    // cut of 1e-18 on them is 1e-9 on the singular values, which is below
    // the rounding floor of the eigensolver. Use 1e-12 on the values instead.
    ev.iter().filter(|&&e| e > 1e-12 * ev[0]).count()
}

/// Builds the doubled classification problem of the derotated observations.
pub fn build_problem(observations: &[NormalFlowObs], omega0: Vec3) -> Result<EgoProblem, EgoError> {
    let (q, r) = usable(observations, &omega0);
    if q.len() < 3 {
        return Err(EgoError::InsufficientData(q.len()));
    }
    let rk = rank(&q);
    if rk < 2 {
        return Err(EgoError::DegenerateGeometry(rk));
    }
    let signs: Vec<f64> = r.iter().map(|v| v.signum()).collect();
    let rows = q.iter().copied().chain(q.iter().map(|v| -v)).collect();
    let labels = signs.iter().copied().chain(signs.iter().map(|s| -s)).collect();
    Ok(EgoProblem {
        rows,
        labels,
        derotated: r,
        omega0,
    })
}

/// Unit translation direction and the fraction of observations with `ρ > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TranslationEstimate {
    pub v: Vec3,
    pub inlier_fraction: f64,
}

/// Linear SVM without intercept, solved in the dual by cyclic coordinate
/// descent (the L1-loss dual of Hsieh et al., without shrinking).
///
/// Exact normal flow gives separable data with a very thin margin, so the
/// regularization has to be small for the solution to approach the
/// max-margin direction; a soft margin with large `λ` trades angle for
/// slack on the rows nearest the decision boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    pub lambda: f64,
    pub max_epochs: usize,
    /// Stop once the spread of projected dual gradients over an epoch falls
    /// below this.
    pub tol: f64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-7,
            max_epochs: 20_000,
            tol: 1e-6,
        }
    }
}

/// Minimizes `(λ/2)|w|² + (1/m) Σ max(0, 1 − s_i q_i·w)` and returns the
/// normalized weight vector.
pub fn solve_svm(prob: &EgoProblem, cfg: &SvmConfig) -> Result<TranslationEstimate, EgoError> {
    let m = prob.rows.len();
    let c = 1.0 / (cfg.lambda * m as f64);
    let diag: Vec<f64> = prob.rows.iter().map(|q| q.norm_squared()).collect();
    let mut alpha = vec![0.0; m];
    let mut w = Vec3::zeros();
    for _ in 0..cfg.max_epochs {
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..m {
            if diag[i] == 0.0 {
                continue;
            }
            let (q, s) = (prob.rows[i], prob.labels[i]);
            let g = s * q.dot(&w) - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= c {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / diag[i]).clamp(0.0, c);
                w += q * (s * (alpha[i] - old));
            }
        }
        if pg_max - pg_min < cfg.tol {
            break;
        }
    }
    let norm = w.norm();
    if !(norm >= 1e-12) {
        return Err(EgoError::ZeroSolution);
    }
    let v = w / norm;
    Ok(TranslationEstimate {
        v,
        inlier_fraction: prob.satisfied_fraction(&v),
    })
}

/// Projected subgradient descent on the unit sphere, restarted from the 26
/// directions of the 3x3x3 lattice around the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegDepthConfig {
    pub iterations: usize,
    /// Initial geodesic step, radians; decays as `1/√k`.
    pub step: f64,
}

impl Default for NegDepthConfig {
    fn default() -> Self {
        Self {
            iterations: 400,
            step: 0.3,
        }
    }
}

/// The 26 unit start directions (faces, edges and corners of a cube).
pub fn lattice_directions() -> Vec<Vec3> {
    let mut dirs = Vec::with_capacity(26);
    for x in -1i32..=1 {
        for y in -1i32..=1 {
            for z in -1i32..=1 {
                if (x, y, z) != (0, 0, 0) {
                    dirs.push(Vec3::new(x as f64, y as f64, z as f64).normalize());
                }
            }
        }
    }
    dirs
}

/// Mean negative depth penalty `(1/p) Σ max(0, −ρ_x(V))` over observations.
pub fn negative_depth_loss(observations: &[NormalFlowObs], omega0: &Vec3, v: &Vec3) -> f64 {
    let (q, r) = usable(observations, omega0);
    loss_and_grad(&q, &r, v).0
}

fn loss_and_grad(q: &[Vec3], r: &[f64], v: &Vec3) -> (f64, Vec3) {
    let mut loss = 0.0;
    let mut grad = Vec3::zeros();
    for (q, &n) in q.iter().zip(r) {
        let rho = n * q.dot(v);
        if rho < 0.0 {
            loss -= rho;
            grad -= q * n;
        }
    }
    let p = q.len().max(1) as f64;
    (loss / p, grad / p)
}

/// Baseline: direction on the unit sphere minimizing the total negative
/// depth penalty.
pub fn solve_negative_depth(
    observations: &[NormalFlowObs],
    omega0: Vec3,
    cfg: &NegDepthConfig,
) -> Result<TranslationEstimate, EgoError> {
    let (q, r) = usable(observations, &omega0);
    if q.len() < 3 {
        return Err(EgoError::InsufficientData(q.len()));
    }
    let mut best: Option<(f64, Vec3)> = None;
    for start in lattice_directions() {
        let mut v = start;
        let mut local = (f64::INFINITY, v);
        for k in 1..=cfg.iterations {
            let (loss, grad) = loss_and_grad(&q, &r, &v);
            if loss < local.0 {
                local = (loss, v);
            }
            if loss == 0.0 {
                break;
            }
            let tangent = grad - v * grad.dot(&v);
            let tn = tangent.norm();
            if tn < 1e-15 {
                break;
            }
            let step = cfg.step / (k as f64).sqrt();
            v = (v - tangent * (step / tn)).normalize();
        }
        let (loss, _) = loss_and_grad(&q, &r, &v);
        if loss < local.0 {
            local = (loss, v);
        }
        if best.is_none_or(|(b, _)| local.0 < b) {
            best = Some(local);
        }
    }
    let (_, v) = best.expect("lattice is non-empty");
    let ok = q.iter().zip(&r).filter(|(q, &n)| n * q.dot(&v) > 0.0).count();
    Ok(TranslationEstimate {
        v,
        inlier_fraction: ok as f64 / q.len() as f64,
    })
}

/// Angle between two directions, degrees.
pub fn angle_deg(a: &Vec3, b: &Vec3) -> f64 {
    let c = a.dot(b) / (a.norm() * b.norm());
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene_sim::{motion_field, random_unit, RigidMotion};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Observations of the exact normal flow of random short edges.
    fn exact_obs(m: &RigidMotion, p: usize, seed: u64) -> Vec<NormalFlowObs> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        while out.len() < p {
            let x = Vec2::new(rng.random_range(-0.6..0.6), rng.random_range(-0.45..0.45));
            let z = rng.random_range(1.0..5.0);
            let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let g = Vec2::new(theta.cos(), theta.sin());
            let u = motion_field(x, z, m).unwrap();
            if let Some(o) = NormalFlowObs::from_flow(x, g * u.dot(&g)) {
                out.push(o);
            }
        }
        out
    }

    #[test]
    fn matrices_at_origin() {
        let a = matrix_a(Vec2::zeros());
        let b = matrix_b(Vec2::zeros());
        assert_eq!(a, Matrix2x3::new(-1.0, 0.0, 0.0, 0.0, -1.0, 0.0));
        assert_eq!(b, Matrix2x3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0));
        assert_eq!(b * Vec3::new(0.0, 0.0, 1.0), Vec2::zeros());
        let x = Vec2::new(0.31, -0.27);
        assert_eq!(matrix_a(x) * Vec3::new(0.0, 0.0, 1.0), x);
    }

    #[test]
    fn derotation_examples() {
        let o = NormalFlowObs {
            x: Vec2::zeros(),
            g: Vec2::new(1.0, 0.0),
            mag: 1.0,
        };
        assert_eq!(derotate(&o, &Vec3::zeros()), 1.0);
        assert_eq!(derotate(&o, &Vec3::new(0.0, 1.0, 0.0)), 2.0);

        let spin = RigidMotion::new(Vec3::zeros(), Vec3::new(0.3, -0.5, 0.8));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x = Vec2::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6));
            let u = motion_field(x, 2.0, &spin).unwrap();
            let theta: f64 = rng.random_range(0.0..6.28);
            let g = Vec2::new(theta.cos(), theta.sin());
            let Some(o) = NormalFlowObs::from_flow(x, g * u.dot(&g)) else {
                continue;
            };
            assert!(derotate(&o, &spin.omega).abs() < 1e-9);
        }
    }

    #[test]
    fn problem_doubling_and_errors() {
        let m = RigidMotion::new(Vec3::new(0.0, 0.0, 1.0), Vec3::zeros());
        let obs = exact_obs(&m, 4, 2);
        let prob = build_problem(&obs, Vec3::zeros()).unwrap();
        assert_eq!(prob.rows.len(), 8);
        for i in 0..4 {
            assert_eq!(prob.rows[i + 4], -prob.rows[i]);
            assert_eq!(prob.labels[i + 4], -prob.labels[i]);
        }

        let same = vec![
            NormalFlowObs {
                x: Vec2::new(0.1, 0.2),
                g: Vec2::new(0.6, 0.8),
                mag: 0.5,
            };
            5
        ];
        assert!(matches!(build_problem(&same, Vec3::zeros()), Err(EgoError::DegenerateGeometry(1))));
        assert!(matches!(build_problem(&obs[..2], Vec3::zeros()), Err(EgoError::InsufficientData(2))));
        assert!(matches!(
            solve_negative_depth(&[], Vec3::zeros(), &NegDepthConfig::default()),
            Err(EgoError::InsufficientData(0))
        ));
    }

    #[test]
    fn exact_data_satisfies_depth_positivity() {
        let m = RigidMotion::new(Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.2, -0.1, 0.3));
        let obs = exact_obs(&m, 300, 4);
        let prob = build_problem(&obs, m.omega).unwrap();
        for i in 0..prob.observations() {
            assert!(prob.labels[i] * prob.rows[i].dot(&m.v) > 0.0);
        }
        for o in &obs {
            assert!(o.rho(&m.omega, &m.v) >= 0.0);
        }
    }

    #[test]
    fn svm_recovers_forward_motion() {
        let m = RigidMotion::new(Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.2, -0.1, 0.3));
        let obs = exact_obs(&m, 2000, 7);
        let est = solve_svm(&build_problem(&obs, m.omega).unwrap(), &SvmConfig::default()).unwrap();
        assert!((est.v.norm() - 1.0).abs() < 1e-9);
        assert!(angle_deg(&est.v, &m.v) < 1.0, "error {}", angle_deg(&est.v, &m.v));
        assert!(est.inlier_fraction > 0.99, "{}", est.inlier_fraction);
    }

    #[test]
    fn svm_ignores_magnitude_scale() {
        let m = RigidMotion::new(Vec3::new(0.4, 0.1, 0.9).normalize(), Vec3::new(0.2, -0.1, 0.3));
        let obs = exact_obs(&m, 150, 8);
        let scaled: Vec<NormalFlowObs> = obs.iter().map(|o| NormalFlowObs { mag: o.mag * 10.0, ..*o }).collect();
        let a = solve_svm(&build_problem(&obs, m.omega).unwrap(), &SvmConfig::default()).unwrap();
        let b = solve_svm(&build_problem(&scaled, m.omega * 10.0).unwrap(), &SvmConfig::default()).unwrap();
        assert_eq!(a.v, b.v);
    }

    #[test]
    fn svm_is_deterministic_and_doubling_is_neutral() {
        let m = RigidMotion::new(Vec3::new(-0.5, 0.3, 0.8).normalize(), Vec3::zeros());
        let obs = exact_obs(&m, 120, 9);
        let prob = build_problem(&obs, m.omega).unwrap();
        let a = solve_svm(&prob, &SvmConfig::default()).unwrap();
        let b = solve_svm(&prob, &SvmConfig::default()).unwrap();
        assert_eq!(a, b);

        // The undoubled half has the same hinge terms, so the same optimum.
        let p = prob.observations();
        let half = EgoProblem {
            rows: prob.rows[..p].to_vec(),
            labels: prob.labels[..p].to_vec(),
            ..prob.clone()
        };
        let h = solve_svm(&half, &SvmConfig::default()).unwrap();
        assert!(angle_deg(&h.v, &a.v) < 1e-2, "{}", angle_deg(&h.v, &a.v));
    }

    #[test]
    fn negative_depth_on_exact_data() {
        let m = RigidMotion::new(Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.1, 0.2, -0.2));
        let obs = exact_obs(&m, 300, 12);
        let est = solve_negative_depth(&obs, m.omega, &NegDepthConfig::default()).unwrap();
        assert_eq!(negative_depth_loss(&obs, &m.omega, &est.v), 0.0);
        assert!(angle_deg(&est.v, &m.v) < 2.0, "error {}", angle_deg(&est.v, &m.v));
        assert_eq!(negative_depth_loss(&obs, &m.omega, &m.v), 0.0);
        assert!(negative_depth_loss(&obs, &m.omega, &-m.v) > 0.0);
    }

    #[test]
    fn lattice_has_26_unit_directions() {
        let d = lattice_directions();
        assert_eq!(d.len(), 26);
        assert!(d.iter().all(|v| (v.norm() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn svm_random_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for seed in 0..10 {
            let m = RigidMotion::new(random_unit(&mut rng), random_unit(&mut rng) * 0.3);
            let obs = exact_obs(&m, 2000, seed);
            let est = solve_svm(&build_problem(&obs, m.omega).unwrap(), &SvmConfig::default()).unwrap();
            assert!(angle_deg(&est.v, &m.v) < 5.0);
        }
    }
}
