//! Local event-cloud encoding with complex random features.
//!
//! Every event `k` is summarized by the kernel-mixture embedding of its
//! ellipsoidal neighborhood,
//!
//! ```text
//! G[k, m] = normalize( Σ_{j ∈ N(k)} exp(i X_j·A_m) / exp(i X_k·A_m) )
//! ```
//!
//! where `X` are δ-normalized `(t, x, y)` coordinates and `A` is a fixed
//! Gaussian `3 x d` matrix. The sum over neighbors is a sparse
//! adjacency-times-features product, so no neighborhood is ever gathered
//! into a padded `(N, K, 3)` tensor.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::event_model::{Event, EventCloud};

/// Events per slice above which the slice is uniformly subsampled.
pub const MAX_EVENTS_PER_SLICE: usize = 80_000;

/// Radii of the ellipsoidal neighborhood: seconds, normalized pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborhoodSpec {
    pub dt: f64,
    pub dx: f64,
    pub dy: f64,
}

impl Default for NeighborhoodSpec {
    fn default() -> Self {
        Self {
            dt: 0.02,
            dx: 0.02,
            dy: 0.02,
        }
    }
}

impl NeighborhoodSpec {
    pub fn new(dt: f64, dx: f64, dy: f64) -> Self {
        Self { dt, dx, dy }
    }

    pub fn is_valid(&self) -> bool {
        [self.dt, self.dx, self.dy].iter().all(|v| *v > 0.0 && v.is_finite())
    }

    /// Squared δ-scaled distance between two events. Neighbors have `< 1`.
    #[inline]
    pub fn scaled_dist2(&self, a: &Event, b: &Event) -> f64 {
        let t = (a.t - b.t) / self.dt;
        let x = (a.x - b.x) / self.dx;
        let y = (a.y - b.y) / self.dy;
        t * t + x * x + y * y
    }
}

/// The fixed Gaussian matrix `A` (3 x d), reproducible from its seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomProjection {
    dim: usize,
    sigma2: f64,
    seed: u64,
    /// Row-major: `weights[r * dim + m]`, rows are (t, x, y).
    weights: Vec<f64>,
}

impl RandomProjection {
    pub const DEFAULT_DIM: usize = 384;
    pub const DEFAULT_SIGMA2: f64 = 25.0;

    pub fn new(dim: usize, sigma2: f64, seed: u64) -> Self {
        assert!(dim > 0, "feature dimension must be positive");
        assert!(sigma2 > 0.0, "variance must be positive");
        let normal = Normal::new(0.0, sigma2.sqrt()).expect("finite variance");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..3 * dim).map(|_| normal.sample(&mut rng)).collect();
        Self {
            dim,
            sigma2,
            seed,
            weights,
        }
    }

    pub fn with_seed(seed: u64) -> Self {
        Self::new(Self::DEFAULT_DIM, Self::DEFAULT_SIGMA2, seed)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Column `m` of `A`.
    pub fn column(&self, m: usize) -> [f64; 3] {
        [
            self.weights[m],
            self.weights[self.dim + m],
            self.weights[2 * self.dim + m],
        ]
    }

    /// Writes `exp(i p·A)` interleaved as `(re, im)` pairs into `out`
    /// (length `2 d`).
    #[inline]
    pub fn features(&self, p: [f64; 3], out: &mut [f64]) {
        let d = self.dim;
        let (wt, rest) = self.weights.split_at(d);
        let (wx, wy) = rest.split_at(d);
        for (m, pair) in out.chunks_exact_mut(2).enumerate() {
            let phase = p[0] * wt[m] + p[1] * wx[m] + p[2] * wy[m];
            let (s, c) = phase.sin_cos();
            pair[0] = c;
            pair[1] = s;
        }
    }
}

/// Symmetric boolean adjacency in compressed-row form. Each row lists its
/// neighbors in increasing index order and includes the event itself.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    offsets: Vec<usize>,
    indices: Vec<u32>,
    spec: NeighborhoodSpec,
}

impl Adjacency {
    pub fn n_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, k: usize) -> &[u32] {
        &self.indices[self.offsets[k]..self.offsets[k + 1]]
    }

    pub fn contains(&self, j: usize, k: usize) -> bool {
        self.row(j).binary_search(&(k as u32)).is_ok()
    }

    pub fn spec(&self) -> &NeighborhoodSpec {
        &self.spec
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n_rows()).all(|j| self.row(j).iter().all(|&k| self.contains(k as usize, j)))
    }
}

/// Spatial hash of the cloud on a grid of `δx x δy` cells; within a cell
/// events are time-sorted, so a neighbor query is nine binary-searched time
/// windows followed by the exact ellipsoid test.
struct CellIndex {
    /// Event ids ordered by (cell row, cell column, t).
    order: Vec<u32>,
    /// Unique cells in `order`, as (row, column).
    cells: Vec<(i64, i64)>,
    /// `order[starts[c]..starts[c + 1]]` are the events of `cells[c]`.
    starts: Vec<usize>,
    cell_of: Vec<(i64, i64)>,
    origin: (f64, f64),
    size: (f64, f64),
}

impl CellIndex {
    fn new(cloud: &EventCloud, spec: &NeighborhoodSpec) -> Self {
        let events = cloud.events();
        let x0 = events.iter().map(|e| e.x).fold(f64::INFINITY, f64::min);
        let y0 = events.iter().map(|e| e.y).fold(f64::INFINITY, f64::min);
        // Cells a hair larger than the radii so that rounding can never put
        // two neighbors more than one cell apart.
        let size = (spec.dx * (1.0 + 1e-9), spec.dy * (1.0 + 1e-9));
        let key = |e: &Event| {
            (
                ((e.y - y0) / size.1).floor() as i64,
                ((e.x - x0) / size.0).floor() as i64,
            )
        };
        let cell_of: Vec<(i64, i64)> = events.iter().map(key).collect();
        let mut order: Vec<u32> = (0..events.len() as u32).collect();
        // Stable sort: events are already time-sorted, so ties keep t order.
        order.sort_by_key(|&i| cell_of[i as usize]);
        let mut cells = Vec::new();
        let mut starts = Vec::new();
        for (pos, &i) in order.iter().enumerate() {
            let c = cell_of[i as usize];
            if cells.last() != Some(&c) {
                cells.push(c);
                starts.push(pos);
            }
        }
        starts.push(order.len());
        Self {
            order,
            cells,
            starts,
            cell_of,
            origin: (x0, y0),
            size,
        }
    }

    /// Appends the neighbors of event `k` (unsorted) to `out`.
    fn neighbors(&self, cloud: &EventCloud, spec: &NeighborhoodSpec, k: usize, out: &mut Vec<u32>) {
        let events = cloud.events();
        let ek = &events[k];
        let (cy, cx) = self.cell_of[k];
        let slack = spec.dt * (1.0 + 1e-9);
        let (t_lo, t_hi) = (ek.t - slack, ek.t + slack);
        for ny in cy - 1..=cy + 1 {
            for nx in cx - 1..=cx + 1 {
                let Ok(c) = self.cells.binary_search(&(ny, nx)) else {
                    continue;
                };
                let members = &self.order[self.starts[c]..self.starts[c + 1]];
                let lo = members.partition_point(|&j| events[j as usize].t < t_lo);
                let hi = members.partition_point(|&j| events[j as usize].t <= t_hi);
                for &j in &members[lo..hi] {
                    if spec.scaled_dist2(&events[j as usize], ek) < 1.0 {
                        out.push(j);
                    }
                }
            }
        }
        debug_assert!(self.origin.0.is_finite() && self.size.0 > 0.0);
    }
}

/// Exact ellipsoidal-ball adjacency of the cloud.
pub fn build_adjacency(cloud: &EventCloud, spec: &NeighborhoodSpec) -> Adjacency {
    assert!(spec.is_valid(), "neighborhood radii must be positive");
    let index = CellIndex::new(cloud, spec);
    let rows: Vec<Vec<u32>> = (0..cloud.len())
        .into_par_iter()
        .map_init(Vec::new, |buf, k| {
            buf.clear();
            index.neighbors(cloud, spec, k, buf);
            let mut row = buf.clone();
            row.sort_unstable();
            row
        })
        .collect();
    let mut offsets = Vec::with_capacity(rows.len() + 1);
    offsets.push(0);
    let mut indices = Vec::with_capacity(rows.iter().map(Vec::len).sum());
    for row in rows {
        indices.extend_from_slice(&row);
        offsets.push(indices.len());
    }
    Adjacency {
        offsets,
        indices,
        spec: *spec,
    }
}

/// Per-event encodings, `n x d` complex stored as interleaved `(re, im)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    dim: usize,
    data: Vec<f64>,
    neighbor_counts: Vec<u32>,
}

impl Encoding {
    pub fn n_rows(&self) -> usize {
        self.neighbor_counts.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row `k` as interleaved `(re, im)` pairs.
    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * 2 * self.dim..(k + 1) * 2 * self.dim]
    }

    pub fn neighbor_count(&self, k: usize) -> u32 {
        self.neighbor_counts[k]
    }

    pub fn neighbor_counts(&self) -> &[u32] {
        &self.neighbor_counts
    }

    pub fn as_interleaved(&self) -> &[f64] {
        &self.data
    }

    /// Reassembles an encoding from interleaved rows (e.g. a file dump).
    pub fn from_parts(dim: usize, data: Vec<f64>, neighbor_counts: Vec<u32>) -> Option<Self> {
        (dim > 0 && data.len() == neighbor_counts.len() * 2 * dim).then_some(Self {
            dim,
            data,
            neighbor_counts,
        })
    }
}

/// δ-normalized coordinates relative to the cloud's bounding-box center.
/// The encoding is translation invariant, so the reference point only keeps
/// phases small.
struct Normalizer {
    center: [f64; 3],
    scale: [f64; 3],
}

impl Normalizer {
    fn new(cloud: &EventCloud, spec: &NeighborhoodSpec) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for e in cloud {
            for (i, v) in [e.t, e.x, e.y].into_iter().enumerate() {
                lo[i] = lo[i].min(v);
                hi[i] = hi[i].max(v);
            }
        }
        Self {
            center: [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2])],
            scale: [spec.dt, spec.dx, spec.dy],
        }
    }

    #[inline]
    fn apply(&self, e: &Event) -> [f64; 3] {
        [
            (e.t - self.center[0]) / self.scale[0],
            (e.x - self.center[1]) / self.scale[1],
            (e.y - self.center[2]) / self.scale[2],
        ]
    }
}

/// `out = normalize(conj(own) ⊙ Σ neighbors)`, all interleaved complex.
#[inline]
fn finish_row(sum: &[f64], own: &[f64], out: &mut [f64]) {
    let mut norm2 = 0.0;
    for ((o, s), a) in out.chunks_exact_mut(2).zip(sum.chunks_exact(2)).zip(own.chunks_exact(2)) {
        // s * conj(a)
        let re = s[0] * a[0] + s[1] * a[1];
        let im = s[1] * a[0] - s[0] * a[1];
        o[0] = re;
        o[1] = im;
        norm2 += re * re + im * im;
    }
    let inv = if norm2 > 0.0 { 1.0 / norm2.sqrt() } else { 0.0 };
    for v in out.iter_mut() {
        *v *= inv;
    }
}

#[inline]
fn add_into(acc: &mut [f64], row: &[f64]) {
    for (a, r) in acc.iter_mut().zip(row) {
        *a += r;
    }
}

/// Encodes every event of the cloud. `adj` must have been built from the
/// same cloud.
pub fn encode(cloud: &EventCloud, adj: &Adjacency, proj: &RandomProjection) -> Encoding {
    assert_eq!(adj.n_rows(), cloud.len(), "adjacency does not match the cloud");
    let n = cloud.len();
    let width = 2 * proj.dim();
    let spec = adj.spec();
    let norm = Normalizer::new(cloud, spec);

    // Process events cell by cell so that the feature rows of a cell's
    // neighbors stay in cache across consecutive rows.
    let order = CellIndex::new(cloud, spec).order;
    let mut slot = vec![0u32; n];
    for (s, &e) in order.iter().enumerate() {
        slot[e as usize] = s as u32;
    }
    let mut feats = vec![0.0; n * width];
    feats
        .par_chunks_mut(width)
        .zip(order.par_iter())
        .with_min_len(64)
        .for_each(|(row, &e)| proj.features(norm.apply(&cloud.events()[e as usize]), row));

    let mut data = vec![0.0; n * width];
    let mut targets: Vec<Option<&mut [f64]>> = data.chunks_mut(width).map(Some).collect();
    let rows: Vec<(u32, &mut [f64])> = order
        .iter()
        .map(|&e| (e, targets[e as usize].take().expect("order is a permutation")))
        .collect();
    rows.into_par_iter().with_min_len(64).for_each_init(
        || vec![0.0; width],
        |sum, (e, out)| {
            sum.fill(0.0);
            for &j in adj.row(e as usize) {
                let s = slot[j as usize] as usize;
                add_into(sum, &feats[s * width..(s + 1) * width]);
            }
            let own = slot[e as usize] as usize;
            finish_row(sum, &feats[own * width..(own + 1) * width], out);
        },
    );
    let neighbor_counts = (0..n).map(|k| adj.row(k).len() as u32).collect();
    Encoding {
        dim: proj.dim(),
        data,
        neighbor_counts,
    }
}

/// Encodes only the events `rows` (output row `i` is event `rows[i]`), using
/// the whole cloud as neighborhood context.
pub fn encode_rows(
    cloud: &EventCloud,
    spec: &NeighborhoodSpec,
    proj: &RandomProjection,
    rows: &[usize],
) -> Encoding {
    LocalEncoder::new(cloud, spec, proj).encode_rows(rows)
}

/// Precomputed per-event features and spatial index of one cloud, for
/// encoding arbitrary subsets of rows in several passes.
pub struct LocalEncoder<'a> {
    cloud: &'a EventCloud,
    spec: NeighborhoodSpec,
    dim: usize,
    index: CellIndex,
    /// `slot[e]` is the position of event `e` in cell order.
    slot: Vec<u32>,
    /// Features in cell order, `2 d` values per event.
    feats: Vec<f64>,
}

impl<'a> LocalEncoder<'a> {
    pub fn new(cloud: &'a EventCloud, spec: &NeighborhoodSpec, proj: &RandomProjection) -> Self {
        assert!(spec.is_valid(), "neighborhood radii must be positive");
        let width = 2 * proj.dim();
        let index = CellIndex::new(cloud, spec);
        let norm = Normalizer::new(cloud, spec);
        let mut slot = vec![0u32; cloud.len()];
        for (s, &e) in index.order.iter().enumerate() {
            slot[e as usize] = s as u32;
        }
        let mut feats = vec![0.0; cloud.len() * width];
        feats
            .par_chunks_mut(width)
            .zip(index.order.par_iter())
            .with_min_len(64)
            .for_each(|(row, &e)| proj.features(norm.apply(&cloud.events()[e as usize]), row));
        Self {
            cloud,
            spec: *spec,
            dim: proj.dim(),
            index,
            slot,
            feats,
        }
    }

    /// Event indices ordered cell by cell; encoding rows in this order keeps
    /// memory access local.
    pub fn cell_order(&self) -> &[u32] {
        &self.index.order
    }

    pub fn encode_rows(&self, rows: &[usize]) -> Encoding {
        let width = 2 * self.dim;
        let mut data = vec![0.0; rows.len() * width];
        let counts: Vec<u32> = data
            .par_chunks_mut(width)
            .zip(rows.par_iter())
            .with_min_len(16)
            .map_init(
                || (vec![0.0; width], Vec::new()),
                |(sum, list), (out, &k)| {
                    list.clear();
                    self.index.neighbors(self.cloud, &self.spec, k, list);
                    sum.fill(0.0);
                    for &j in list.iter() {
                        let s = self.slot[j as usize] as usize;
                        add_into(sum, &self.feats[s * width..(s + 1) * width]);
                    }
                    let own = self.slot[k] as usize;
                    finish_row(sum, &self.feats[own * width..(own + 1) * width], out);
                    list.len() as u32
                },
            )
            .collect();
        Encoding {
            dim: self.dim,
            data,
            neighbor_counts: counts,
        }
    }
}

/// Encoding of a neighborhood given directly as δ-normalized offsets from
/// its center event. Interleaved `(re, im)`, unit norm.
pub fn encode_offsets(offsets: &[[f64; 3]], proj: &RandomProjection) -> Vec<f64> {
    let width = 2 * proj.dim();
    let mut sum = vec![0.0; width];
    let mut f = vec![0.0; width];
    for &p in offsets {
        proj.features(p, &mut f);
        add_into(&mut sum, &f);
    }
    let one: Vec<f64> = (0..width).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect();
    let mut out = vec![0.0; width];
    finish_row(&sum, &one, &mut out);
    out
}

/// Kernel-mixture density implied by an encoding row, evaluated at
/// δ-normalized relative positions: `Re(Σ_m conj(exp(i p·A_m)) G_m) / d`.
pub fn reconstruct_density(row: &[f64], proj: &RandomProjection, points: &[[f64; 3]]) -> Vec<f64> {
    assert_eq!(row.len(), 2 * proj.dim(), "row does not match projection");
    let mut f = vec![0.0; row.len()];
    points
        .iter()
        .map(|&p| {
            proj.features(p, &mut f);
            let dot: f64 = f
                .chunks_exact(2)
                .zip(row.chunks_exact(2))
                .map(|(a, g)| a[0] * g[0] + a[1] * g[1])
                .sum();
            dot / proj.dim() as f64
        })
        .collect()
}

/// Uniform subsample of at most `max` events, indices in increasing order.
pub fn subsample_indices(n: usize, max: usize, seed: u64) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, n, max).into_vec();
    picked.sort_unstable();
    picked
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_cloud(n: usize, seed: u64, t_span: f64, xy_span: f64) -> EventCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let events = (0..n)
            .map(|_| {
                Event::new(
                    rng.random_range(0.0..t_span),
                    rng.random_range(-xy_span..xy_span),
                    rng.random_range(-xy_span..xy_span),
                    1,
                )
            })
            .collect();
        EventCloud::from_unsorted(events).unwrap().0
    }

    fn brute_force(cloud: &EventCloud, spec: &NeighborhoodSpec) -> Vec<Vec<u32>> {
        let ev = cloud.events();
        (0..ev.len())
            .map(|k| {
                (0..ev.len() as u32)
                    .filter(|&j| {
                        let a = (ev[j as usize].t - ev[k].t) / spec.dt;
                        let b = (ev[j as usize].x - ev[k].x) / spec.dx;
                        let c = (ev[j as usize].y - ev[k].y) / spec.dy;
                        a * a + b * b + c * c < 1.0
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn open_ball_boundary() {
        let spec = NeighborhoodSpec::default();
        let cloud = EventCloud::new(vec![
            Event::new(0.0, 0.0, 0.0, 1),
            Event::new(spec.dt, 0.0, 0.0, 1),
        ])
        .unwrap();
        let adj = build_adjacency(&cloud, &spec);
        assert_eq!(adj.row(0), &[0]);
        assert_eq!(adj.row(1), &[1]);

        let near = EventCloud::new(vec![
            Event::new(0.0, 0.0, 0.0, 1),
            Event::new(spec.dt / 2.0, 0.0, 0.0, 1),
        ])
        .unwrap();
        let adj = build_adjacency(&near, &spec);
        assert_eq!(adj.row(0), &[0, 1]);
        assert_eq!(adj.row(1), &[0, 1]);
    }

    #[test]
    fn adjacency_matches_brute_force() {
        let spec = NeighborhoodSpec::default();
        for seed in 0..5 {
            let cloud = random_cloud(500, seed, 0.06, 0.08);
            let adj = build_adjacency(&cloud, &spec);
            let oracle = brute_force(&cloud, &spec);
            for (k, row) in oracle.iter().enumerate() {
                assert_eq!(adj.row(k), row.as_slice(), "row {k}");
            }
            assert!(adj.is_symmetric());
            assert!((0..cloud.len()).all(|k| adj.contains(k, k)));
        }
    }

    #[test]
    fn singleton_row_is_uniform() {
        let proj = RandomProjection::new(64, 25.0, 1);
        let cloud = EventCloud::new(vec![
            Event::new(0.0, 0.0, 0.0, 1),
            Event::new(0.5, 1.0, 1.0, 1),
        ])
        .unwrap();
        let spec = NeighborhoodSpec::default();
        let g = encode(&cloud, &build_adjacency(&cloud, &spec), &proj);
        let expect = 1.0 / (64f64).sqrt();
        for k in 0..2 {
            for pair in g.row(k).chunks(2) {
                assert!((pair[0] - expect).abs() < 1e-15);
                assert!(pair[1].abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rows_have_unit_norm() {
        let proj = RandomProjection::new(96, 25.0, 3);
        let spec = NeighborhoodSpec::default();
        let cloud = random_cloud(400, 7, 0.04, 0.05);
        let g = encode(&cloud, &build_adjacency(&cloud, &spec), &proj);
        for k in 0..g.n_rows() {
            let n2: f64 = g.row(k).iter().map(|v| v * v).sum();
            assert!((n2 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn translation_invariance() {
        let proj = RandomProjection::new(128, 25.0, 5);
        let spec = NeighborhoodSpec::default();
        let cloud = random_cloud(600, 2, 0.08, 0.1);
        let g = encode(&cloud, &build_adjacency(&cloud, &spec), &proj);
        let shifted = cloud
            .map_events(|e| Event::new(e.t + 0.731, e.x - 0.42, e.y + 0.3, e.polarity))
            .unwrap();
        let h = encode(&shifted, &build_adjacency(&shifted, &spec), &proj);
        let max = g.as_interleaved().iter().zip(h.as_interleaved()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(max < 1e-12, "max deviation {max}");
    }

    #[test]
    fn encode_rows_matches_full_encoding() {
        let proj = RandomProjection::new(64, 25.0, 8);
        let spec = NeighborhoodSpec::default();
        let cloud = random_cloud(700, 4, 0.05, 0.08);
        let full = encode(&cloud, &build_adjacency(&cloud, &spec), &proj);
        let rows = [5usize, 600, 17, 17, 333];
        let part = encode_rows(&cloud, &spec, &proj, &rows);
        for (i, &k) in rows.iter().enumerate() {
            assert_eq!(part.neighbor_count(i), full.neighbor_count(k));
            for (a, b) in part.row(i).iter().zip(full.row(k)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projection_is_reproducible() {
        let a = RandomProjection::with_seed(99);
        let b = RandomProjection::with_seed(99);
        assert_eq!(a, b);
        assert_eq!(a.dim(), 384);
        let var = a.weights.iter().map(|w| w * w).sum::<f64>() / a.weights.len() as f64;
        assert!((var - 25.0).abs() < 3.0, "sample variance {var}");
        assert_ne!(a, RandomProjection::with_seed(100));
    }

    #[test]
    fn density_of_singleton_peaks_at_origin() {
        let proj = RandomProjection::with_seed(3);
        let row = encode_offsets(&[[0.0, 0.0, 0.0]], &proj);
        let grid: Vec<[f64; 3]> = (-10..=10)
            .flat_map(|i| (-10..=10).map(move |j| [0.0, i as f64 * 0.1, j as f64 * 0.1]))
            .collect();
        let dens = reconstruct_density(&row, &proj, &grid);
        let (best, _) = dens.iter().enumerate().fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        assert_eq!(grid[best], [0.0, 0.0, 0.0]);
    }

    #[test]
    fn subsample_is_sorted_and_bounded() {
        let idx = subsample_indices(1000, 100, 4);
        assert_eq!(idx.len(), 100);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(subsample_indices(10, 100, 4), (0..10).collect::<Vec<_>>());
        assert_eq!(idx, subsample_indices(1000, 100, 4));
    }
}
