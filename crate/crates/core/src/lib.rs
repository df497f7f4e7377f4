//! Per-event normal flow estimation from raw event clouds.
//!
//! The crate covers the whole pipeline:
//!
//! * [`event_model`]: events, camera model, flow-frame preprocessing.
//! * [`scene_sim`]: synthetic edge scenes with exact ground-truth flow.
//! * [`veckm`]: ellipsoidal neighborhoods and the random-feature local encoding.
//! * [`flow_head`]: the MLP head, the motion-field loss, augmentation and training.
//! * [`uq`]: rotation-ensemble inference with circular-std uncertainty.
//! * [`egomotion`]: translation direction from normal flow (max-margin and negative-depth).
//! * [`metrics`]: PEE, %Pos and RMS velocity error.
//! * [`io`]: the on-disk formats used by the CLI.
//! * [`pipeline`]: slice-wise inference and windowed egomotion over whole recordings.

pub mod egomotion;
pub mod event_model;
pub mod flow_head;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod scene_sim;
pub mod uq;
pub mod veckm;

mod error;

pub use error::Error;

/// 2D vector in normalized image coordinates (or normalized px/s for flows).
pub type Vec2 = nalgebra::Vector2<f64>;
/// 3D vector (translation direction, angular velocity).
pub type Vec3 = nalgebra::Vector3<f64>;
