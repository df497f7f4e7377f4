//! Synthetic edge scenes with exact ground truth.
//!
//! A scene is a set of straight segments, each at constant depth. Segment
//! endpoints are transported along the instantaneous motion field with Euler
//! steps of at most 1 ms; at every step each segment is resampled at jittered
//! arclength positions and one event is emitted per sample. Resampling (rather
//! than tracking material points) keeps the aperture ambiguity of straight
//! edges intact: only where segments meet does the event cloud reveal the
//! full flow.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::egomotion::{matrix_a, matrix_b};
use crate::event_model::{Event, EventCloud, LabeledCloud};
use crate::{Vec2, Vec3};

/// Upper bound on the Euler step, seconds.
pub const MAX_STEP: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("non-positive depth {0}")]
    NonPositiveDepth(f64),
    #[error("scene has no edges")]
    EmptyScene,
    #[error("invalid edge {index}: {reason}")]
    InvalidEdge { index: usize, reason: String },
    #[error("invalid window [{0}, {1}]")]
    InvalidWindow(f64, f64),
}

impl SimError {
    pub fn class(&self) -> &'static str {
        match self {
            SimError::NonPositiveDepth(_) => "NonPositiveDepth",
            SimError::EmptyScene => "EmptyScene",
            SimError::InvalidEdge { .. } => "InvalidEdge",
            SimError::InvalidWindow(..) => "InvalidWindow",
        }
    }
}

/// Camera translation `v` (direction, or m/s when scaled) and angular
/// velocity `omega` (rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidMotion {
    pub v: Vec3,
    pub omega: Vec3,
}

impl RigidMotion {
    pub fn new(v: Vec3, omega: Vec3) -> Self {
        Self { v, omega }
    }

    pub fn still() -> Self {
        Self::new(Vec3::zeros(), Vec3::zeros())
    }

    /// The same motion seen by a camera rolled by `theta` about its optical
    /// axis (counter-clockwise in the image plane).
    pub fn rotated_about_axis(&self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        let rot = |w: &Vec3| Vec3::new(c * w.x - s * w.y, s * w.x + c * w.y, w.z);
        Self::new(rot(&self.v), rot(&self.omega))
    }
}

/// Straight segment in normalized image coordinates at constant depth.
/// `density` is the number of events emitted per unit length per step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneEdge {
    pub p0: Vec2,
    pub p1: Vec2,
    pub depth: f64,
    pub density: f64,
}

impl SceneEdge {
    pub fn new(p0: Vec2, p1: Vec2, depth: f64, density: f64) -> Self {
        Self {
            p0,
            p1,
            depth,
            density,
        }
    }

    pub fn validate(&self, index: usize) -> Result<(), SimError> {
        if !(self.depth > 0.0) {
            return Err(SimError::NonPositiveDepth(self.depth));
        }
        let finite = [self.p0.x, self.p0.y, self.p1.x, self.p1.y, self.depth, self.density]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(SimError::InvalidEdge {
                index,
                reason: "non-finite value".into(),
            });
        }
        if self.p0 == self.p1 {
            return Err(SimError::InvalidEdge {
                index,
                reason: "zero length".into(),
            });
        }
        if !(self.density > 0.0) {
            return Err(SimError::InvalidEdge {
                index,
                reason: "density must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Simulation time window. `slice` is the processing slice length consumers
/// should cut the output into.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimWindow {
    pub t_start: f64,
    pub t_end: f64,
    pub slice: f64,
}

impl SimWindow {
    pub fn new(t_start: f64, t_end: f64) -> Self {
        Self {
            t_start,
            t_end,
            slice: 0.02,
        }
    }
}

/// Simulated events with per-event ground truth, all aligned with
/// `cloud.events()`.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub cloud: EventCloud,
    /// Optical flow at the emission point.
    pub flow: Vec<Vec2>,
    /// Projection of the optical flow on the edge normal.
    pub normal_flow: Vec<Vec2>,
    pub depth: Vec<f64>,
}

impl SimOutput {
    pub fn labeled(&self) -> LabeledCloud {
        LabeledCloud {
            cloud: self.cloud.clone(),
            flow: self.flow.clone(),
        }
    }
}

/// Instantaneous motion field at `x` for a point at depth `depth`:
/// `(1/Z) A_x V + B_x Ω`.
pub fn motion_field(x: Vec2, depth: f64, m: &RigidMotion) -> Result<Vec2, SimError> {
    if !(depth > 0.0) {
        return Err(SimError::NonPositiveDepth(depth));
    }
    Ok((matrix_a(x) * m.v) / depth + matrix_b(x) * m.omega)
}

/// Normal flow of an edge with unit direction `edge_dir` moving with optical
/// flow `u`: the projection of `u` onto the edge normal.
pub fn gt_normal_flow(u: Vec2, edge_dir: Vec2) -> Vec2 {
    debug_assert!((edge_dir.norm() - 1.0).abs() < 1e-9);
    let normal = Vec2::new(-edge_dir.y, edge_dir.x);
    normal * u.dot(&normal)
}

/// Generates events for `edges` under motion `m` over `window`.
/// Deterministic given `seed`.
pub fn simulate(
    edges: &[SceneEdge],
    m: &RigidMotion,
    window: &SimWindow,
    seed: u64,
) -> Result<SimOutput, SimError> {
    if edges.is_empty() {
        return Err(SimError::EmptyScene);
    }
    for (i, e) in edges.iter().enumerate() {
        e.validate(i)?;
    }
    let duration = window.t_end - window.t_start;
    if !(duration > 0.0) || !(window.t_start >= 0.0) || !duration.is_finite() {
        return Err(SimError::InvalidWindow(window.t_start, window.t_end));
    }
    let steps = ((duration / MAX_STEP) - 1e-9).ceil().max(1.0) as usize;
    let h = duration / steps as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    let mut flow = Vec::new();
    let mut normal_flow = Vec::new();
    let mut depth = Vec::new();

    for edge in edges {
        let samples = ((edge.p1 - edge.p0).norm() * edge.density).round().max(1.0) as usize;
        let (mut p0, mut p1) = (edge.p0, edge.p1);
        for step in 0..steps {
            let t_step = window.t_start + step as f64 * h;
            let span = p1 - p0;
            let len = span.norm();
            if len < 1e-12 || !len.is_finite() {
                break;
            }
            let dir = span / len;
            for j in 0..samples {
                let s = (j as f64 + rng.random::<f64>()) / samples as f64;
                let t = t_step + rng.random::<f64>() * h;
                let p = p0 + span * s;
                let u = motion_field(p, edge.depth, m)?;
                let n = gt_normal_flow(u, dir);
                let polarity = if u.dot(&Vec2::new(-dir.y, dir.x)) >= 0.0 { 1 } else { -1 };
                events.push(Event::new(t, p.x, p.y, polarity));
                flow.push(u);
                normal_flow.push(n);
                depth.push(edge.depth);
            }
            p0 += motion_field(p0, edge.depth, m)? * h;
            p1 += motion_field(p1, edge.depth, m)? * h;
        }
    }

    let (cloud, perm) =
        EventCloud::from_unsorted(events).map_err(|_| SimError::EmptyScene)?;
    Ok(SimOutput {
        cloud,
        flow: perm.iter().map(|&i| flow[i]).collect(),
        normal_flow: perm.iter().map(|&i| normal_flow[i]).collect(),
        depth: perm.iter().map(|&i| depth[i]).collect(),
    })
}

/// Random scenes of polylines (corners where segments meet) under a random
/// rigid motion whose typical flow magnitude is drawn log-uniformly.
#[derive(Debug, Clone)]
pub struct SceneGenerator {
    /// Inclusive range of polylines per scene.
    pub polylines: (usize, usize),
    /// Inclusive range of segments per polyline.
    pub segments: (usize, usize),
    pub segment_length: (f64, f64),
    /// Polylines start inside `[-extent, extent]^2`.
    pub extent: f64,
    pub depth: (f64, f64),
    pub density: f64,
    /// Range of the typical flow magnitude, normalized px/s.
    pub flow_scale: (f64, f64),
}

impl Default for SceneGenerator {
    fn default() -> Self {
        Self {
            polylines: (3, 6),
            segments: (1, 3),
            segment_length: (0.08, 0.3),
            extent: 0.6,
            depth: (1.0, 4.0),
            density: 100.0,
            flow_scale: (0.02, 1.5),
        }
    }
}

impl SceneGenerator {
    pub fn generate(&self, seed: u64) -> (Vec<SceneEdge>, RigidMotion) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        let polylines = rng.random_range(self.polylines.0..=self.polylines.1);
        for _ in 0..polylines {
            let depth = rng.random_range(self.depth.0..=self.depth.1);
            let segments = rng.random_range(self.segments.0..=self.segments.1);
            let mut p = Vec2::new(
                rng.random_range(-self.extent..=self.extent),
                rng.random_range(-self.extent..=self.extent),
            );
            let mut heading = rng.random_range(0.0..std::f64::consts::TAU);
            for _ in 0..segments {
                let len = rng.random_range(self.segment_length.0..=self.segment_length.1);
                let q = p + Vec2::new(heading.cos(), heading.sin()) * len;
                edges.push(SceneEdge::new(p, q, depth, self.density));
                p = q;
                // Turn by 40..140 degrees either way so corners are distinct.
                let turn = rng.random_range(0.7..2.45) * if rng.random::<bool>() { 1.0 } else { -1.0 };
                heading += turn;
            }
        }

        let (lo, hi) = self.flow_scale;
        let scale = (rng.random_range(lo.ln()..=hi.ln())).exp();
        let z_ref = (self.depth.0 * self.depth.1).sqrt();
        let v_dir = random_unit(&mut rng);
        let w_dir = random_unit(&mut rng);
        let rot_share = rng.random_range(0.0..0.6);
        let motion = RigidMotion::new(
            v_dir * scale * z_ref * (1.0 - rot_share),
            w_dir * scale * rot_share,
        );
        (edges, motion)
    }
}

/// Uniform direction on the unit sphere.
pub fn random_unit<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rot2(p: Vec2, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * p.x - s * p.y, s * p.x + c * p.y)
    }

    #[test]
    fn motion_field_examples() {
        let fwd = RigidMotion::new(Vec3::new(0.0, 0.0, 1.0), Vec3::zeros());
        let u = motion_field(Vec2::new(0.1, 0.2), 1.0, &fwd).unwrap();
        assert!((u - Vec2::new(0.1, 0.2)).norm() < 1e-15);

        let roll = RigidMotion::new(Vec3::zeros(), Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(motion_field(Vec2::zeros(), 1.0, &roll).unwrap(), Vec2::zeros());

        let pitch = RigidMotion::new(Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(motion_field(Vec2::zeros(), 3.0, &pitch).unwrap(), Vec2::new(0.0, 1.0));

        assert!(matches!(
            motion_field(Vec2::zeros(), 0.0, &fwd),
            Err(SimError::NonPositiveDepth(_))
        ));
    }

    #[test]
    fn normal_flow_examples() {
        assert_eq!(gt_normal_flow(Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)), Vec2::new(1.0, 0.0));
        assert_eq!(gt_normal_flow(Vec2::new(1.0, 0.0), Vec2::new(1.0, 0.0)).norm(), 0.0);
        let diag = Vec2::new(1.0, 1.0).normalize();
        let anti = Vec2::new(1.0, -1.0).normalize();
        assert!(gt_normal_flow(Vec2::new(1.0, 1.0), diag).norm() < 1e-15);
        assert!((gt_normal_flow(Vec2::new(1.0, 1.0), anti) - Vec2::new(1.0, 1.0)).norm() < 1e-15);
    }

    fn scene() -> Vec<SceneEdge> {
        vec![
            SceneEdge::new(Vec2::new(-0.3, 0.1), Vec2::new(0.2, 0.15), 2.0, 60.0),
            SceneEdge::new(Vec2::new(0.2, 0.15), Vec2::new(0.25, -0.3), 2.0, 60.0),
            SceneEdge::new(Vec2::new(-0.4, -0.4), Vec2::new(-0.1, -0.2), 1.3, 60.0),
        ]
    }

    #[test]
    fn static_scene_has_zero_flow() {
        let edges = vec![SceneEdge::new(Vec2::new(-0.2, 0.0), Vec2::new(0.2, 0.0), 1.0, 50.0)];
        let out = simulate(&edges, &RigidMotion::still(), &SimWindow::new(0.0, 0.02), 1).unwrap();
        assert!(out.cloud.len() > 0);
        assert!(out.flow.iter().all(|u| u.norm() == 0.0));
        assert!(out.normal_flow.iter().all(|n| n.norm() == 0.0));
    }

    #[test]
    fn translational_flow_scales_with_inverse_depth() {
        let m = RigidMotion::new(Vec3::new(1.0, 0.0, 0.0), Vec3::zeros());
        let w = SimWindow::new(0.0, 0.03);
        let edge = |z| vec![SceneEdge::new(Vec2::new(-0.1, -0.2), Vec2::new(0.1, 0.3), z, 40.0)];
        let near = simulate(&edge(1.0), &m, &w, 3).unwrap();
        let far = simulate(&edge(2.0), &m, &w, 3).unwrap();
        assert_eq!(near.cloud.len(), far.cloud.len());
        for (a, b) in near.flow.iter().zip(&far.flow) {
            assert_eq!(*a, *b * 2.0);
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let m = RigidMotion::new(Vec3::new(0.3, -0.2, 1.0), Vec3::new(0.1, 0.2, -0.3));
        let w = SimWindow::new(0.0, 0.05);
        let a = simulate(&scene(), &m, &w, 42).unwrap();
        let b = simulate(&scene(), &m, &w, 42).unwrap();
        assert_eq!(a.cloud, b.cloud);
        assert_eq!(a.flow, b.flow);
        assert_eq!(a.normal_flow, b.normal_flow);
        assert_eq!(a.depth, b.depth);
        let c = simulate(&scene(), &m, &w, 43).unwrap();
        assert_ne!(a.cloud, c.cloud);
    }

    #[test]
    fn ground_truth_is_consistent() {
        let m = RigidMotion::new(Vec3::new(0.3, -0.2, 1.0), Vec3::new(0.4, 0.2, -0.3));
        let out = simulate(&scene(), &m, &SimWindow::new(0.1, 0.2), 9).unwrap();
        for (((e, u), n), z) in out.cloud.iter().zip(&out.flow).zip(&out.normal_flow).zip(&out.depth) {
            assert!(n.dot(&(u - n)).abs() < 1e-12);
            let expect = motion_field(e.position(), *z, &m).unwrap();
            assert!((expect - u).norm() < 1e-9);
            assert!(e.t >= 0.1 && e.t < 0.2);
        }
    }

    #[test]
    fn rolling_the_scene_rotates_the_flow() {
        let m = RigidMotion::new(Vec3::new(0.3, -0.2, 0.8), Vec3::new(0.4, 0.2, -0.3));
        let w = SimWindow::new(0.0, 0.04);
        let base = simulate(&scene(), &m, &w, 5).unwrap();
        for theta in [0.3, 1.7, -2.4] {
            let rolled: Vec<SceneEdge> = scene()
                .iter()
                .map(|e| SceneEdge::new(rot2(e.p0, theta), rot2(e.p1, theta), e.depth, e.density))
                .collect();
            let out = simulate(&rolled, &m.rotated_about_axis(theta), &w, 5).unwrap();
            assert_eq!(out.cloud.len(), base.cloud.len());
            for (i, (a, b)) in base.cloud.iter().zip(out.cloud.iter()).enumerate() {
                assert_eq!(a.t, b.t);
                assert!((rot2(a.position(), theta) - b.position()).norm() < 1e-9);
                assert!((rot2(base.flow[i], theta) - out.flow[i]).norm() < 1e-9);
                assert!((rot2(base.normal_flow[i], theta) - out.normal_flow[i]).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_bad_scenes() {
        let w = SimWindow::new(0.0, 0.01);
        let m = RigidMotion::still();
        assert!(matches!(simulate(&[], &m, &w, 0), Err(SimError::EmptyScene)));
        let bad = [SceneEdge::new(Vec2::zeros(), Vec2::new(0.1, 0.0), -1.0, 10.0)];
        assert!(matches!(simulate(&bad, &m, &w, 0), Err(SimError::NonPositiveDepth(_))));
        let degenerate = [SceneEdge::new(Vec2::zeros(), Vec2::zeros(), 1.0, 10.0)];
        assert!(matches!(simulate(&degenerate, &m, &w, 0), Err(SimError::InvalidEdge { .. })));
    }

    #[test]
    fn generator_is_deterministic_and_has_corners() {
        let g = SceneGenerator::default();
        let (a, ma) = g.generate(17);
        let (b, mb) = g.generate(17);
        assert_eq!(a, b);
        assert_eq!(ma, mb);
        let g = SceneGenerator {
            segments: (3, 3),
            ..SceneGenerator::default()
        };
        let (edges, _) = g.generate(3);
        assert!(edges.windows(2).any(|w| w[0].p1 == w[1].p0));
    }
}
