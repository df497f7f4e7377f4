//! Events, event clouds and the dataset-style flow preprocessing.
//!
//! All downstream math works in normalized camera coordinates (focal length
//! 1, no distortion). [`CameraModel`] and [`FlowFrameStack`] exist to turn
//! frame-based flow in raw distorted pixels into per-event flow in those
//! coordinates.

use std::ops::Range;

use thiserror::Error;

use crate::Vec2;

const UNDISTORT_MAX_ITERS: usize = 20;
const UNDISTORT_STEP_TOL: f64 = 1e-10;
const UNDISTORT_MAX_RESIDUAL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EventError {
    #[error("undistortion did not converge (residual {residual:.3e})")]
    NonConvergence { residual: f64 },
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid event cloud: {0}")]
    InvalidCloud(String),
    #[error("invalid flow stack: {0}")]
    InvalidStack(String),
}

impl EventError {
    pub fn class(&self) -> &'static str {
        match self {
            EventError::NonConvergence { .. } => "NonConvergence",
            EventError::OutOfRange(_) => "OutOfRange",
            EventError::InvalidCamera(_) => "InvalidCamera",
            EventError::InvalidCloud(_) => "InvalidCloud",
            EventError::InvalidStack(_) => "InvalidStack",
        }
    }
}

/// A single event. `x`, `y` are normalized camera coordinates unless a
/// function says it takes raw pixels. Polarity is carried through files but
/// never used by the math.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub polarity: i8,
}

impl Event {
    pub fn new(t: f64, x: f64, y: f64, polarity: i8) -> Self {
        Self { t, x, y, polarity }
    }

    #[inline]
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    fn is_valid(&self) -> bool {
        self.t.is_finite() && self.t >= 0.0 && self.x.is_finite() && self.y.is_finite()
    }
}

/// Non-empty sequence of events, nondecreasing in time.
#[derive(Debug, Clone, PartialEq)]
pub struct EventCloud {
    events: Vec<Event>,
}

impl EventCloud {
    /// Wraps events that are already sorted by time.
    pub fn new(events: Vec<Event>) -> Result<Self, EventError> {
        if events.is_empty() {
            return Err(EventError::InvalidCloud("no events".into()));
        }
        if let Some(i) = events.iter().position(|e| !e.is_valid()) {
            return Err(EventError::InvalidCloud(format!(
                "event {i} has a non-finite coordinate or negative timestamp"
            )));
        }
        if let Some(i) = events.windows(2).position(|w| w[1].t < w[0].t) {
            return Err(EventError::InvalidCloud(format!(
                "timestamps decrease at event {}",
                i + 1
            )));
        }
        Ok(Self { events })
    }

    /// Sorts by time (stable) and wraps. Returns the permutation applied, so
    /// that per-event labels can follow: `sorted[i] = input[perm[i]]`.
    pub fn from_unsorted(mut events: Vec<Event>) -> Result<(Self, Vec<usize>), EventError> {
        let mut perm: Vec<usize> = (0..events.len()).collect();
        perm.sort_by(|&a, &b| events[a].t.total_cmp(&events[b].t));
        let sorted: Vec<Event> = perm.iter().map(|&i| events[i]).collect();
        events.clear();
        Ok((Self::new(sorted)?, perm))
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    /// Always false; kept for API symmetry with slices.
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Event> {
        self.events.iter()
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn start_time(&self) -> f64 {
        self.events[0].t
    }

    pub fn end_time(&self) -> f64 {
        self.events[self.events.len() - 1].t
    }

    /// Index range of events with `t0 <= t < t1`.
    pub fn time_range(&self, t0: f64, t1: f64) -> Range<usize> {
        let lo = self.events.partition_point(|e| e.t < t0);
        let hi = self.events.partition_point(|e| e.t < t1);
        lo..hi.max(lo)
    }

    /// Sub-cloud of the given indices, which must be strictly increasing.
    pub fn select(&self, indices: &[usize]) -> Result<EventCloud, EventError> {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        EventCloud::new(indices.iter().map(|&i| self.events[i]).collect())
    }

    /// Applies `f` to every event. The result is re-validated; `f` must keep
    /// the time order.
    pub fn map_events(&self, f: impl Fn(&Event) -> Event) -> Result<EventCloud, EventError> {
        EventCloud::new(self.events.iter().map(f).collect())
    }
}

impl<'a> IntoIterator for &'a EventCloud {
    type Item = &'a Event;
    type IntoIter = std::slice::Iter<'a, Event>;

    fn into_iter(self) -> Self::IntoIter {
        self.events.iter()
    }
}

/// Per-event optical flow, normalized px/s.
pub type PerEventFlow = Vec2;

/// Event cloud with one ground-truth optical flow vector per event.
#[derive(Debug, Clone)]
pub struct LabeledCloud {
    pub cloud: EventCloud,
    pub flow: Vec<PerEventFlow>,
}

impl LabeledCloud {
    pub fn new(cloud: EventCloud, flow: Vec<PerEventFlow>) -> Result<Self, EventError> {
        if cloud.len() != flow.len() {
            return Err(EventError::InvalidCloud(format!(
                "{} events but {} flow vectors",
                cloud.len(),
                flow.len()
            )));
        }
        Ok(Self { cloud, flow })
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }
}

/// Pinhole intrinsics with Brown-Conrady distortion (3 radial, 2 tangential).
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub p1: f64,
    pub p2: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraModel {
    /// Distortion-free camera.
    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Self {
        Self {
            fx,
            fy,
            cx,
            cy,
            k1: 0.0,
            k2: 0.0,
            k3: 0.0,
            p1: 0.0,
            p2: 0.0,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<(), EventError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(EventError::InvalidCamera(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(EventError::InvalidCamera("image size must be positive".into()));
        }
        let coeffs = [self.cx, self.cy, self.k1, self.k2, self.k3, self.p1, self.p2];
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(EventError::InvalidCamera("non-finite parameter".into()));
        }
        Ok(())
    }

    /// Applies lens distortion to an ideal normalized point.
    pub fn distort(&self, p: Vec2) -> Vec2 {
        let (x, y) = (p.x, p.y);
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        Vec2::new(
            x * radial + 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x),
            y * radial + self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y,
        )
    }

    /// Jacobian of [`CameraModel::distort`] at `p`.
    fn distort_jacobian(&self, p: Vec2) -> nalgebra::Matrix2<f64> {
        let (x, y) = (p.x, p.y);
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        // d(radial)/d(r2)
        let dr = self.k1 + r2 * (2.0 * self.k2 + 3.0 * self.k3 * r2);
        let dxx = radial + 2.0 * x * x * dr + 2.0 * self.p1 * y + 6.0 * self.p2 * x;
        let dxy = 2.0 * x * y * dr + 2.0 * self.p1 * x + 2.0 * self.p2 * y;
        let dyy = radial + 2.0 * y * y * dr + 6.0 * self.p1 * y + 2.0 * self.p2 * x;
        nalgebra::Matrix2::new(dxx, dxy, dxy, dyy)
    }

    /// Ideal normalized point to raw pixel.
    pub fn project(&self, p: Vec2) -> Vec2 {
        let d = self.distort(p);
        Vec2::new(self.fx * d.x + self.cx, self.fy * d.y + self.cy)
    }

    /// Raw pixel to ideal normalized coordinates, inverting the distortion
    /// with Newton iterations.
    pub fn undistort_normalize(&self, px: Vec2) -> Result<Vec2, EventError> {
        if !(px.x.is_finite() && px.y.is_finite()) {
            return Err(EventError::OutOfRange(format!("non-finite pixel ({}, {})", px.x, px.y)));
        }
        let target = Vec2::new((px.x - self.cx) / self.fx, (px.y - self.cy) / self.fy);
        let mut p = target;
        for _ in 0..UNDISTORT_MAX_ITERS {
            let residual = self.distort(p) - target;
            let Some(inv) = self.distort_jacobian(p).try_inverse() else {
                break;
            };
            let step = inv * residual;
            p -= step;
            if !(p.x.is_finite() && p.y.is_finite()) {
                break;
            }
            if step.norm() < UNDISTORT_STEP_TOL {
                break;
            }
        }
        let residual = (self.distort(p) - target).norm();
        // A root where the distortion map folds back lies outside the
        // calibrated field of view and is not the physical preimage.
        let r2 = p.norm_squared();
        let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        let unfolded = radial > 0.0 && self.distort_jacobian(p).determinant() > 0.0;
        if residual.is_finite() && residual <= UNDISTORT_MAX_RESIDUAL && unfolded {
            Ok(p)
        } else {
            Err(EventError::NonConvergence {
                residual: if residual.is_finite() { residual } else { f64::INFINITY },
            })
        }
    }
}

/// Frame-based flow (raw pixel displacement per frame interval) at a series
/// of timestamps, each frame a `width x height` row-major grid.
#[derive(Debug, Clone)]
pub struct FlowFrameStack {
    timestamps: Vec<f64>,
    width: u32,
    height: u32,
    grids: Vec<Vec<Vec2>>,
}

impl FlowFrameStack {
    pub fn new(
        timestamps: Vec<f64>,
        width: u32,
        height: u32,
        grids: Vec<Vec<Vec2>>,
    ) -> Result<Self, EventError> {
        if timestamps.len() < 2 {
            return Err(EventError::InvalidStack("need at least two timestamps".into()));
        }
        if timestamps.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(EventError::InvalidStack("timestamps must strictly increase".into()));
        }
        if grids.len() != timestamps.len() {
            return Err(EventError::InvalidStack(format!(
                "{} timestamps but {} grids",
                timestamps.len(),
                grids.len()
            )));
        }
        let cells = width as usize * height as usize;
        if cells == 0 || grids.iter().any(|g| g.len() != cells) {
            return Err(EventError::InvalidStack(format!(
                "every grid must hold {width}x{height} vectors"
            )));
        }
        Ok(Self {
            timestamps,
            width,
            height,
            grids,
        })
    }

    /// Combines forward and backward flow frames as ½(forward − backward).
    pub fn from_forward_backward(
        timestamps: Vec<f64>,
        width: u32,
        height: u32,
        forward: Vec<Vec<Vec2>>,
        backward: Vec<Vec<Vec2>>,
    ) -> Result<Self, EventError> {
        if forward.len() != backward.len() {
            return Err(EventError::InvalidStack(
                "forward and backward stacks differ in length".into(),
            ));
        }
        let grids = forward
            .into_iter()
            .zip(backward)
            .map(|(f, b)| {
                if f.len() != b.len() {
                    return Err(EventError::InvalidStack(
                        "forward and backward grids differ in size".into(),
                    ));
                }
                Ok(f.iter().zip(&b).map(|(f, b)| 0.5 * (f - b)).collect())
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(timestamps, width, height, grids)
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Indices `(i, i + 1)` of the frames bracketing `t`.
    fn bracket(&self, t: f64) -> Result<(usize, usize), EventError> {
        let ts = &self.timestamps;
        let last = ts.len() - 1;
        if !(t >= ts[0] && t <= ts[last]) {
            return Err(EventError::OutOfRange(format!(
                "t={t} outside flow stack [{}, {}]",
                ts[0], ts[last]
            )));
        }
        let j = ts.partition_point(|&s| s <= t);
        let i = (j.max(1) - 1).min(last - 1);
        Ok((i, i + 1))
    }

    fn cell(&self, x: f64, y: f64) -> Result<usize, EventError> {
        let col = x.round();
        let row = y.round();
        if !(col >= 0.0 && col < self.width as f64 && row >= 0.0 && row < self.height as f64) {
            return Err(EventError::OutOfRange(format!(
                "pixel ({x}, {y}) outside {}x{} grid",
                self.width, self.height
            )));
        }
        Ok(row as usize * self.width as usize + col as usize)
    }
}

/// Flow displacement at an event given in raw pixels: linear in time
/// between the bracketing frames, nearest grid cell in space.
pub fn interpolate_flow(stack: &FlowFrameStack, e: &Event) -> Result<Vec2, EventError> {
    let (i0, i1) = stack.bracket(e.t)?;
    let cell = stack.cell(e.x, e.y)?;
    let (t0, t1) = (stack.timestamps[i0], stack.timestamps[i1]);
    let w1 = (e.t - t0) / (t1 - t0);
    let w0 = (t1 - e.t) / (t1 - t0);
    Ok(stack.grids[i1][cell] * w1 + stack.grids[i0][cell] * w0)
}

/// Per-event optical flow in normalized px/s for an event given in raw
/// pixels: undistort the start point and the displaced end point, divide by
/// the frame interval.
pub fn per_event_flow(
    stack: &FlowFrameStack,
    cam: &CameraModel,
    e: &Event,
) -> Result<PerEventFlow, EventError> {
    if stack.width != cam.width || stack.height != cam.height {
        return Err(EventError::InvalidStack(format!(
            "flow grid {}x{} does not match camera {}x{}",
            stack.width, stack.height, cam.width, cam.height
        )));
    }
    let (i0, i1) = stack.bracket(e.t)?;
    let disp = interpolate_flow(stack, e)?;
    let px = e.position();
    let start = cam.undistort_normalize(px)?;
    let end = cam.undistort_normalize(px + disp)?;
    Ok((end - start) / (stack.timestamps[i1] - stack.timestamps[i0]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn distorted_cam() -> CameraModel {
        CameraModel {
            fx: 600.0,
            fy: 590.0,
            cx: 322.5,
            cy: 241.0,
            k1: -0.2,
            k2: 0.0,
            k3: 0.0,
            p1: 0.01,
            p2: 0.0,
            width: 640,
            height: 480,
        }
    }

    /// Brown-Conrady forward projection written out independently of
    /// `CameraModel::distort`.
    fn forward_oracle(cam: &CameraModel, x: f64, y: f64) -> (f64, f64) {
        let r2 = x.powi(2) + y.powi(2);
        let r4 = r2 * r2;
        let r6 = r4 * r2;
        let radial = 1.0 + cam.k1 * r2 + cam.k2 * r4 + cam.k3 * r6;
        let xd = x * radial + 2.0 * cam.p1 * x * y + cam.p2 * (r2 + 2.0 * x.powi(2));
        let yd = y * radial + cam.p1 * (r2 + 2.0 * y.powi(2)) + 2.0 * cam.p2 * x * y;
        (cam.fx * xd + cam.cx, cam.fy * yd + cam.cy)
    }

    #[test]
    fn principal_point_maps_to_origin() {
        let cam = distorted_cam();
        let p = cam.undistort_normalize(Vec2::new(cam.cx, cam.cy)).unwrap();
        assert_eq!(p, Vec2::zeros());
    }

    #[test]
    fn identity_camera_is_identity() {
        let cam = CameraModel::pinhole(1.0, 1.0, 0.0, 0.0, 10, 10);
        let p = cam.undistort_normalize(Vec2::new(0.3, -0.2)).unwrap();
        assert!((p - Vec2::new(0.3, -0.2)).norm() < 1e-15);
    }

    #[test]
    fn undistort_round_trip_inside_image() {
        let cam = distorted_cam();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let px = Vec2::new(
                rng.random_range(0.0..cam.width as f64),
                rng.random_range(0.0..cam.height as f64),
            );
            let p = cam.undistort_normalize(px).unwrap();
            let (u, v) = forward_oracle(&cam, p.x, p.y);
            assert!(
                (u - px.x).abs() < 1e-9 && (v - px.y).abs() < 1e-9,
                "round trip failed at {px:?}: ({u}, {v})"
            );
        }
    }

    #[test]
    fn undistort_round_trip_strong_coefficients() {
        for (k1, k2, p1, p2) in [(0.3, 0.05, -0.01, 0.004), (-0.3, 0.08, 0.002, -0.006)] {
            let cam = CameraModel {
                k1,
                k2,
                p1,
                p2,
                ..distorted_cam()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            for _ in 0..500 {
                let px = Vec2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
                let p = cam.undistort_normalize(px).unwrap();
                let (u, v) = forward_oracle(&cam, p.x, p.y);
                assert!((u - px.x).abs() < 1e-9 && (v - px.y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn undistort_reports_non_convergence() {
        // Far outside the field of view the strongly barrel-distorted model
        // folds over and has no inverse.
        let cam = CameraModel {
            k1: -0.5,
            ..distorted_cam()
        };
        for px in [Vec2::new(1e5, 1e5), Vec2::new(cam.cx + 0.8 * cam.fx, cam.cy + 0.6 * cam.fy)] {
            let err = cam.undistort_normalize(px).unwrap_err();
            assert!(matches!(err, EventError::NonConvergence { .. }), "{px:?}");
        }
    }

    fn constant_stack(v0: Vec2, v1: Vec2, ts: [f64; 2]) -> FlowFrameStack {
        FlowFrameStack::new(ts.to_vec(), 4, 3, vec![vec![v0; 12], vec![v1; 12]]).unwrap()
    }

    #[test]
    fn interpolation_examples() {
        let stack = constant_stack(Vec2::new(2.0, 0.0), Vec2::new(4.0, 0.0), [0.0, 0.1]);
        let at = |t| interpolate_flow(&stack, &Event::new(t, 1.0, 1.0, 1)).unwrap();
        assert_eq!(at(0.0), Vec2::new(2.0, 0.0));
        assert_eq!(at(0.1), Vec2::new(4.0, 0.0));
        assert!((at(0.05) - Vec2::new(3.0, 0.0)).norm() < 1e-12);

        let flat = constant_stack(Vec2::new(1.0, 1.0), Vec2::new(1.0, 1.0), [0.0, 0.1]);
        for t in [0.0, 0.013, 0.05, 0.0999] {
            let u = interpolate_flow(&flat, &Event::new(t, 2.0, 2.0, 1)).unwrap();
            assert!((u - Vec2::new(1.0, 1.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn interpolation_is_affine_in_time() {
        let ts = vec![0.0, 0.03, 0.07];
        let grids: Vec<Vec<Vec2>> = (0..3)
            .map(|k| (0..12).map(|c| Vec2::new(c as f64 * 0.5 - k as f64, (k * k) as f64 + 0.25)).collect())
            .collect();
        let stack = FlowFrameStack::new(ts, 4, 3, grids).unwrap();
        let f = |t: f64| interpolate_flow(&stack, &Event::new(t, 2.0, 1.0, 1)).unwrap();
        for (a, b, c) in [(0.03, 0.041, 0.07), (0.0, 0.017, 0.029)] {
            let (fa, fb, fc) = (f(a), f(b), f(c));
            let s = (b - a) / (c - a);
            let lin = fa + (fc - fa) * s;
            assert!((fb - lin).norm() < 1e-12);
        }
    }

    #[test]
    fn interpolation_out_of_range() {
        let stack = constant_stack(Vec2::new(1.0, 0.0), Vec2::new(1.0, 0.0), [0.0, 0.1]);
        for e in [
            Event::new(0.2, 1.0, 1.0, 1),
            Event::new(0.05, 4.0, 1.0, 1),
            Event::new(0.05, 1.0, -0.6, 1),
        ] {
            assert!(matches!(interpolate_flow(&stack, &e), Err(EventError::OutOfRange(_))));
        }
    }

    #[test]
    fn per_event_flow_examples() {
        let cam = CameraModel::pinhole(1.0, 1.0, 0.0, 0.0, 4, 3);
        let zero = constant_stack(Vec2::zeros(), Vec2::zeros(), [0.0, 0.05]);
        let e = Event::new(0.01, 1.0, 2.0, 1);
        assert_eq!(per_event_flow(&zero, &cam, &e).unwrap(), Vec2::zeros());

        let shift = constant_stack(Vec2::new(0.1, 0.0), Vec2::new(0.1, 0.0), [0.0, 0.05]);
        let u = per_event_flow(&shift, &cam, &e).unwrap();
        assert!((u - Vec2::new(2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn forward_backward_average() {
        let fwd = vec![vec![Vec2::new(2.0, 0.0); 12]; 2];
        let bwd = vec![vec![Vec2::new(-2.0, 0.0); 12]; 2];
        let stack = FlowFrameStack::from_forward_backward(vec![0.0, 0.1], 4, 3, fwd, bwd).unwrap();
        let u = interpolate_flow(&stack, &Event::new(0.04, 0.0, 0.0, 1)).unwrap();
        assert!((u - Vec2::new(2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn per_event_flow_independent_of_frame_interval() {
        // Constant velocity field seen through a linear (distortion-free)
        // camera: displacement per frame scales with the interval.
        let cam = CameraModel::pinhole(200.0, 180.0, 2.0, 1.0, 4, 3);
        let vel_px = Vec2::new(30.0, -12.0);
        let mut flows = Vec::new();
        for dt in [0.05, 0.02, 0.0125] {
            let ts: Vec<f64> = (0..4).map(|k| k as f64 * dt).collect();
            let grids = vec![vec![vel_px * dt; 12]; 4];
            let stack = FlowFrameStack::new(ts, 4, 3, grids).unwrap();
            let e = Event::new(1.5 * dt, 1.0, 1.0, 1);
            flows.push(per_event_flow(&stack, &cam, &e).unwrap());
        }
        for f in &flows[1..] {
            assert!((f - flows[0]).norm() < 1e-9);
        }
        assert!((flows[0] - Vec2::new(30.0 / 200.0, -12.0 / 180.0)).norm() < 1e-9);
    }

    #[test]
    fn cloud_validation() {
        assert!(EventCloud::new(vec![]).is_err());
        let unsorted = vec![Event::new(0.2, 0.0, 0.0, 1), Event::new(0.1, 0.0, 0.0, 1)];
        assert!(EventCloud::new(unsorted.clone()).is_err());
        let (cloud, perm) = EventCloud::from_unsorted(unsorted).unwrap();
        assert_eq!(perm, vec![1, 0]);
        assert_eq!(cloud.start_time(), 0.1);
        assert!(EventCloud::new(vec![Event::new(-1.0, 0.0, 0.0, 1)]).is_err());
        assert!(EventCloud::new(vec![Event::new(0.0, f64::NAN, 0.0, 1)]).is_err());
    }

    #[test]
    fn camera_validation() {
        let mut cam = distorted_cam();
        assert!(cam.validate().is_ok());
        cam.fx = 0.0;
        assert!(cam.validate().is_err());
    }
}
