//! Mini-batch training of the flow head on labeled event clouds.

use ndarray::Array2;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::augment::{self, AugmentParams, AugmentationConfig};
use super::loss::{LossKind, DEGENERATE_NORM};
use super::mlp::{Adam, Mlp};
use super::{encoding_inputs, HeadError};
use crate::event_model::{EventCloud, LabeledCloud};
use crate::metrics;
use crate::veckm::{Encoding, LocalEncoder, NeighborhoodSpec, RandomProjection};
use crate::Vec2;

/// Rows per forward pass at inference time.
const INFER_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epsilon: f64,
    pub learning_rate: f32,
    /// Maximum number of events contributing to one step.
    pub batch: usize,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub seed: u64,
    /// Flow norms over whose logarithm step anchors are drawn uniformly.
    pub log_norm_range: (f64, f64),
    pub hidden: Vec<usize>,
    /// Length of the time slice supervised per step, seconds.
    pub slice: f64,
    pub spec: NeighborhoodSpec,
    pub dim: usize,
    pub sigma2: f64,
    pub projection_seed: u64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            learning_rate: 1e-3,
            batch: 2048,
            epochs: 10,
            steps_per_epoch: 100,
            seed: 0,
            log_norm_range: (0.01, 3.0),
            hidden: vec![256, 256, 256],
            slice: 0.02,
            spec: NeighborhoodSpec::default(),
            dim: RandomProjection::DEFAULT_DIM,
            sigma2: RandomProjection::DEFAULT_SIGMA2,
            projection_seed: 0,
            loss: LossKind::MotionField,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), HeadError> {
        let bad = |m: &str| Err(HeadError::InvalidConfig(m.to_string()));
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.batch == 0 || self.steps_per_epoch == 0 {
            return bad("batch and steps per epoch must be positive");
        }
        let (lo, hi) = self.log_norm_range;
        if !(lo > 0.0 && hi > lo) {
            return bad("log-norm range must satisfy 0 < lo < hi");
        }
        if !(self.slice > 0.0) || !self.spec.is_valid() {
            return bad("slice and neighborhood radii must be positive");
        }
        if self.dim == 0 || !(self.sigma2 > 0.0) {
            return bad("projection dimension and variance must be positive");
        }
        Ok(())
    }
}

/// Trained head together with the encoder it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalFlowModel {
    pub spec: NeighborhoodSpec,
    projection: RandomProjection,
    mlp: Mlp,
}

impl NormalFlowModel {
    pub fn new(spec: NeighborhoodSpec, projection: RandomProjection, mlp: Mlp) -> Result<Self, HeadError> {
        if mlp.input_dim() != 2 * projection.dim() {
            return Err(HeadError::ShapeMismatch {
                expected: 2 * projection.dim(),
                got: mlp.input_dim(),
            });
        }
        if mlp.output_dim() != 2 {
            return Err(HeadError::ShapeMismatch {
                expected: 2,
                got: mlp.output_dim(),
            });
        }
        Ok(Self { spec, projection, mlp })
    }

    pub fn projection(&self) -> &RandomProjection {
        &self.projection
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn into_parts(self) -> (NeighborhoodSpec, RandomProjection, Mlp) {
        (self.spec, self.projection, self.mlp)
    }

    /// Predictions for every row of an encoding.
    pub fn predict_encoding(&self, enc: &Encoding) -> Result<Vec<Vec2>, HeadError> {
        if enc.dim() != self.projection.dim() {
            return Err(HeadError::ShapeMismatch {
                expected: self.projection.dim(),
                got: enc.dim(),
            });
        }
        let mut out = Vec::with_capacity(enc.n_rows());
        let mut start = 0;
        while start < enc.n_rows() {
            let end = (start + INFER_CHUNK).min(enc.n_rows());
            let y = self.mlp.forward(encoding_inputs(enc, start..end).view())?;
            out.extend(y.rows().into_iter().map(|r| Vec2::new(r[0] as f64, r[1] as f64)));
            start = end;
        }
        Ok(out)
    }

    /// Predictions for events `rows` of `cloud`, with the whole cloud as
    /// neighborhood context. Output is aligned with `rows`.
    pub fn predict(&self, cloud: &EventCloud, rows: &[usize]) -> Vec<Vec2> {
        let encoder = LocalEncoder::new(cloud, &self.spec, &self.projection);
        let mut rank = vec![u32::MAX; cloud.len()];
        for (r, &e) in encoder.cell_order().iter().enumerate() {
            rank[e as usize] = r as u32;
        }
        // Encode in cell order for locality, then scatter back.
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by_key(|&i| rank[rows[i]]);
        let mut out = vec![Vec2::zeros(); rows.len()];
        for chunk in order.chunks(INFER_CHUNK) {
            let ids: Vec<usize> = chunk.iter().map(|&i| rows[i]).collect();
            let enc = encoder.encode_rows(&ids);
            let pred = self.predict_encoding(&enc).expect("encoder matches the head");
            for (&i, p) in chunk.iter().zip(pred) {
                out[i] = p;
            }
        }
        out
    }
}

/// Per-epoch training summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_pee: f64,
}

/// Flat index of all events with usable flow, sorted by `ln ‖u‖`.
struct AnchorIndex {
    entries: Vec<(f64, u32, u32)>,
}

impl AnchorIndex {
    fn new(data: &[LabeledCloud]) -> Self {
        let mut entries: Vec<(f64, u32, u32)> = data
            .iter()
            .enumerate()
            .flat_map(|(c, lc)| {
                lc.flow.iter().enumerate().filter_map(move |(i, u)| {
                    let n = u.norm();
                    (n >= DEGENERATE_NORM).then_some((n.ln(), c as u32, i as u32))
                })
            })
            .collect();
        entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        Self { entries }
    }

    /// Event whose log-norm is closest to `target`.
    fn nearest(&self, target: f64) -> (usize, usize) {
        let pos = self.entries.partition_point(|e| e.0 < target);
        let pick = if pos == 0 {
            0
        } else if pos == self.entries.len() || target - self.entries[pos - 1].0 <= self.entries[pos].0 - target {
            pos - 1
        } else {
            pos
        };
        let (_, c, i) = self.entries[pick];
        (c as usize, i as usize)
    }
}

/// One step's supervised rows: encoding inputs and their target flows.
struct Batch {
    inputs: Array2<f32>,
    targets: Vec<Vec2>,
}

fn make_batch(
    data: &[LabeledCloud],
    anchors: &AnchorIndex,
    cfg: &TrainConfig,
    aug: &AugmentationConfig,
    projection: &RandomProjection,
    rng: &mut ChaCha8Rng,
) -> Option<Batch> {
    let (lo, hi) = cfg.log_norm_range;
    let target = rng.random_range(lo.ln()..hi.ln());
    let (c, i) = anchors.nearest(target);
    let lc = &data[c];
    let ta = lc.cloud.events()[i].t;
    let half = cfg.slice / 2.0;
    let ctx = lc.cloud.time_range(ta - half - cfg.spec.dt, ta + half + cfg.spec.dt);
    let core = lc.cloud.time_range(ta - half, ta + half);
    let cloud = EventCloud::new(lc.cloud.events()[ctx.clone()].to_vec()).ok()?;
    let flows = &lc.flow[ctx.clone()];

    let params = AugmentParams::sample(aug, rng);
    let (cloud, flows, kept) = augment::apply(&cloud, flows, &params, aug.scale_time, rng.random());
    let mut rows: Vec<usize> = kept
        .iter()
        .enumerate()
        .filter(|&(j, &src)| core.contains(&(src + ctx.start)) && flows[j].norm() >= DEGENERATE_NORM)
        .map(|(j, _)| j)
        .collect();
    if rows.is_empty() {
        return None;
    }
    if rows.len() > cfg.batch {
        let mut pick = index::sample(rng, rows.len(), cfg.batch).into_vec();
        pick.sort_unstable();
        rows = pick.into_iter().map(|p| rows[p]).collect();
    }
    let enc = LocalEncoder::new(&cloud, &cfg.spec, projection).encode_rows(&rows);
    Some(Batch {
        inputs: encoding_inputs(&enc, 0..rows.len()),
        targets: rows.iter().map(|&j| flows[j]).collect(),
    })
}

/// Trains a head from scratch. `on_epoch` is called after every epoch.
pub fn train(
    data: &[LabeledCloud],
    cfg: &TrainConfig,
    aug: &AugmentationConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<(NormalFlowModel, Vec<EpochLog>), HeadError> {
    cfg.validate()?;
    let anchors = AnchorIndex::new(data);
    if anchors.entries.is_empty() {
        return Err(HeadError::EmptyDataset);
    }
    let projection = RandomProjection::new(cfg.dim, cfg.sigma2, cfg.projection_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mlp = Mlp::new(2 * cfg.dim, &cfg.hidden, 2, rng.random());
    let mut opt = Adam::new(&mlp, cfg.learning_rate);
    let mut logs = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let (mut loss_sum, mut pee_sum, mut steps) = (0.0, 0.0, 0usize);
        for _ in 0..cfg.steps_per_epoch {
            let Some(batch) = make_batch(data, &anchors, cfg, aug, &projection, &mut rng) else {
                continue;
            };
            let (out, inputs) = mlp.forward_train(batch.inputs.view())?;
            let mut grad = Array2::<f32>::zeros(out.raw_dim());
            let (mut l_sum, mut used) = (0.0, 0usize);
            let (mut p_sum, mut p_n) = (0.0, 0usize);
            for (k, u) in batch.targets.iter().enumerate() {
                let n = Vec2::new(out[[k, 0]] as f64, out[[k, 1]] as f64);
                if let Ok(e) = metrics::pee(u, &n) {
                    p_sum += e;
                    p_n += 1;
                }
                if let Ok((l, g)) = cfg.loss.eval(u, &n, cfg.epsilon) {
                    l_sum += l;
                    used += 1;
                    grad[[k, 0]] = g.x as f32;
                    grad[[k, 1]] = g.y as f32;
                }
            }
            if used == 0 {
                continue;
            }
            grad /= used as f32;
            let grads = mlp.backward(&inputs, grad);
            opt.step(&mut mlp, &grads);
            loss_sum += l_sum / used as f64;
            pee_sum += if p_n > 0 { p_sum / p_n as f64 } else { 0.0 };
            steps += 1;
        }
        let denom = steps.max(1) as f64;
        let log = EpochLog {
            epoch: epoch + 1,
            mean_loss: loss_sum / denom,
            mean_pee: pee_sum / denom,
        };
        log::info!(
            "epoch {} loss {:.5} pee {:.5} ({} steps)",
            log.epoch,
            log.mean_loss,
            log.mean_pee,
            steps
        );
        on_epoch(&log);
        logs.push(log);
    }
    if !mlp.is_finite() {
        return Err(HeadError::InvalidConfig("training diverged to non-finite weights".into()));
    }
    Ok((NormalFlowModel::new(cfg.spec, projection, mlp)?, logs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene_sim::{simulate, RigidMotion, SceneEdge, SimWindow};
    use crate::Vec3;

    fn edge_dataset() -> Vec<LabeledCloud> {
        let edges = [SceneEdge::new(Vec2::new(-0.2, -0.1), Vec2::new(0.2, 0.1), 2.0, 150.0)];
        let motion = RigidMotion::new(Vec3::new(0.5, -0.3, 0.0), Vec3::zeros());
        let out = simulate(&edges, &motion, &SimWindow::new(0.0, 0.1), 3).unwrap();
        vec![out.labeled()]
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            batch: 256,
            epochs: 5,
            steps_per_epoch: 8,
            dim: 64,
            hidden: vec![64, 64],
            seed: 5,
            projection_seed: 1,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn training_is_reproducible() {
        let data = edge_dataset();
        let cfg = TrainConfig {
            epochs: 1,
            ..small_config()
        };
        let aug = AugmentationConfig::default();
        let (a, la) = train(&data, &cfg, &aug, |_| {}).unwrap();
        let (b, lb) = train(&data, &cfg, &aug, |_| {}).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
    }

    #[test]
    fn loss_decreases_on_single_edge() {
        let data = edge_dataset();
        let aug = AugmentationConfig::none();
        let mut seen = Vec::new();
        let (_, logs) = train(&data, &small_config(), &aug, |l| seen.push(l.epoch)).unwrap();
        assert_eq!(seen, vec![1, 2, 3, 4, 5]);
        for w in logs.windows(2) {
            assert!(w[1].mean_loss < w[0].mean_loss, "{logs:?}");
        }
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let still = simulate(
            &[SceneEdge::new(Vec2::new(0.0, 0.0), Vec2::new(0.1, 0.0), 1.0, 50.0)],
            &RigidMotion::still(),
            &SimWindow::new(0.0, 0.01),
            0,
        )
        .unwrap();
        let err = train(&[still.labeled()], &small_config(), &AugmentationConfig::none(), |_| {});
        assert_eq!(err.unwrap_err(), HeadError::EmptyDataset);
    }

    #[test]
    fn model_rejects_mismatched_head() {
        let proj = RandomProjection::new(16, 25.0, 0);
        let mlp = Mlp::zeros(30, &[8], 2);
        assert!(NormalFlowModel::new(NeighborhoodSpec::default(), proj, mlp).is_err());
    }

    #[test]
    fn chunked_prediction_matches_full_encoding() {
        let data = edge_dataset();
        let proj = RandomProjection::new(32, 25.0, 2);
        let model = NormalFlowModel::new(NeighborhoodSpec::default(), proj.clone(), Mlp::new(64, &[16], 2, 1)).unwrap();
        let cloud = &data[0].cloud;
        let rows: Vec<usize> = (0..cloud.len()).rev().step_by(3).collect();
        let got = model.predict(cloud, &rows);
        let enc = crate::veckm::encode_rows(cloud, &model.spec, &proj, &rows);
        let want = model.predict_encoding(&enc).unwrap();
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).norm() < 1e-5);
        }
    }
}
