//! Training-time augmentation: rotation, scaling and subsampling of a
//! labeled event cloud.
//!
//! Rotations act by right-multiplication on row vectors: a spatial point or
//! flow `(x, y)` becomes `(x, y) R(θ) = (x cos θ + y sin θ, −x sin θ + y cos θ)`.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::event_model::{Event, EventCloud};
use crate::Vec2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentationConfig {
    pub rotation: bool,
    pub scale_range: (f64, f64),
    pub sample_range: (f64, f64),
    /// Scale timestamps together with positions, so that velocities (and
    /// therefore the flow labels) are unchanged by the scaling. When false
    /// only `x, y` are scaled.
    pub scale_time: bool,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            rotation: true,
            scale_range: (0.75, 1.25),
            sample_range: (0.5, 1.0),
            scale_time: true,
        }
    }
}

impl AugmentationConfig {
    pub fn none() -> Self {
        Self {
            rotation: false,
            scale_range: (1.0, 1.0),
            sample_range: (1.0, 1.0),
            scale_time: true,
        }
    }
}

/// One concrete draw of augmentation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub theta: f64,
    pub alpha: f64,
    pub fraction: f64,
}

impl AugmentParams {
    pub fn identity() -> Self {
        Self {
            theta: 0.0,
            alpha: 1.0,
            fraction: 1.0,
        }
    }

    pub fn sample<R: Rng>(cfg: &AugmentationConfig, rng: &mut R) -> Self {
        let draw = |rng: &mut R, (lo, hi): (f64, f64)| if hi > lo { rng.random_range(lo..hi) } else { lo };
        let theta = if cfg.rotation {
            rng.random_range(0.0..std::f64::consts::TAU)
        } else {
            0.0
        };
        let alpha = draw(rng, cfg.scale_range);
        let fraction = draw(rng, cfg.sample_range);
        Self { theta, alpha, fraction }
    }
}

#[inline]
pub fn rotate_vec(v: &Vec2, theta: f64) -> Vec2 {
    let (s, c) = theta.sin_cos();
    Vec2::new(v.x * c + v.y * s, -v.x * s + v.y * c)
}

#[inline]
pub fn rotate_event(e: &Event, theta: f64) -> Event {
    let p = rotate_vec(&e.position(), theta);
    Event::new(e.t, p.x, p.y, e.polarity)
}

/// Rotates every event of the cloud; time order is unaffected.
pub fn rotate_cloud(cloud: &EventCloud, theta: f64) -> EventCloud {
    cloud
        .map_events(|e| rotate_event(e, theta))
        .expect("rotation preserves validity")
}

/// Applies `p` to a cloud and its per-event flows. Returns the augmented
/// pair plus the indices of the surviving source events.
pub fn apply(
    cloud: &EventCloud,
    flows: &[Vec2],
    p: &AugmentParams,
    scale_time: bool,
    seed: u64,
) -> (EventCloud, Vec<Vec2>, Vec<usize>) {
    assert_eq!(cloud.len(), flows.len(), "flows must align with events");
    let t0 = cloud.start_time();
    let n = cloud.len();
    let keep_n = ((p.fraction * n as f64).round() as usize).clamp(1, n);
    let kept = if keep_n == n {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut k = index::sample(&mut rng, n, keep_n).into_vec();
        k.sort_unstable();
        k
    };
    let events: Vec<Event> = kept
        .iter()
        .map(|&i| {
            let e = rotate_event(&cloud.events()[i], p.theta);
            let t = if scale_time && p.alpha != 1.0 { t0 + p.alpha * (e.t - t0) } else { e.t };
            Event::new(t, p.alpha * e.x, p.alpha * e.y, e.polarity)
        })
        .collect();
    let flows = kept.iter().map(|&i| rotate_vec(&flows[i], p.theta)).collect();
    let cloud = EventCloud::new(events).expect("augmentation preserves order and validity");
    (cloud, flows, kept)
}

/// Draws parameters from `cfg` and applies them, deterministically in `seed`.
pub fn augment(
    cloud: &EventCloud,
    flows: &[Vec2],
    cfg: &AugmentationConfig,
    seed: u64,
) -> (EventCloud, Vec<Vec2>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = AugmentParams::sample(cfg, &mut rng);
    let sub_seed = rng.random();
    let (c, f, _) = apply(cloud, flows, &p, cfg.scale_time, sub_seed);
    (c, f)
}
