//! Readers and writers for every file the pipeline consumes or produces.
//!
//! Binary formats are little-endian. Text output uses Rust's shortest
//! round-trip float formatting, so identical values always produce identical
//! bytes.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::event_model::{CameraModel, Event, EventCloud};
use crate::flow_head::{Layer, Mlp, NormalFlowModel};
use crate::scene_sim::{SceneEdge, SimOutput};
use crate::uq::NormalFlowPrediction;
use crate::veckm::{Encoding, NeighborhoodSpec, RandomProjection};
use crate::{Vec2, Vec3};

const EVT_MAGIC: &[u8; 4] = b"EVT1";
const VKM_MAGIC: &[u8; 4] = b"VKM1";
const NFM_MAGIC: &[u8; 4] = b"NFM1";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: u64, msg: String },
    #[error("{path}: not a {expected} file")]
    BadMagic { path: PathBuf, expected: &'static str },
    #[error("{path}: {msg}")]
    Invalid { path: PathBuf, msg: String },
}

impl FormatError {
    pub fn class(&self) -> &'static str {
        match self {
            FormatError::Io { .. } => "Io",
            FormatError::Parse { .. } => "Parse",
            FormatError::BadMagic { .. } => "BadMagic",
            FormatError::Invalid { .. } => "InvalidFile",
        }
    }
}

type Result<T> = std::result::Result<T, FormatError>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn invalid(path: &Path, msg: impl Into<String>) -> FormatError {
    FormatError::Invalid {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> FormatError {
    FormatError::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

/// Writes a whole file through `body`, mapping I/O failures to `path`.
fn write_with(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    body(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

struct LeReader<'a, R: Read> {
    inner: R,
    path: &'a Path,
}

impl<R: Read> LeReader<'_, R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner.read_exact(&mut b).map_err(|e| {
            if e.kind() == io::ErrorKind::UnexpectedEof {
                invalid(self.path, "file is truncated")
            } else {
                io_err(self.path)(e)
            }
        })?;
        Ok(b)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn i8(&mut self) -> Result<i8> {
        Ok(i8::from_le_bytes(self.bytes()?))
    }
    fn f32_vec(&mut self, n: usize) -> Result<Vec<f32>> {
        let mut raw = vec![0u8; n * 4];
        self.inner.read_exact(&mut raw).map_err(|_| invalid(self.path, "file is truncated"))?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

/// Header-checked CSV records with their 1-based line numbers.
fn csv_records(path: &Path, expected: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(open(path)?);
    let headers = rdr.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(parse_err(path, 1, format!("expected header `{}`", expected.join(","))));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push((line, rec));
    }
    Ok(out)
}

fn field_f64(path: &Path, line: u64, rec: &csv::StringRecord, i: usize) -> Result<f64> {
    let s = rec.get(i).unwrap_or("");
    s.parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("column {} is not a number: `{s}`", i + 1)))
}

fn fields_f64<const N: usize>(path: &Path, line: u64, rec: &csv::StringRecord) -> Result<[f64; N]> {
    let mut out = [0.0; N];
    for (i, v) in out.iter_mut().enumerate() {
        *v = field_f64(path, line, rec, i)?;
    }
    Ok(out)
}

fn to_cloud(path: &Path, events: Vec<Event>) -> Result<EventCloud> {
    EventCloud::from_unsorted(events)
        .map(|(c, _)| c)
        .map_err(|e| invalid(path, e.to_string()))
}

// ---- events -------------------------------------------------------------

/// Reads an `EVT1` binary or a `t,x,y,p` CSV event file. Events are sorted
/// by time if the file is not.
pub fn read_events(path: &Path) -> Result<EventCloud> {
    let mut head = [0u8; 4];
    let n = open(path)?.read(&mut head).map_err(io_err(path))?;
    if n == 4 && &head == EVT_MAGIC {
        read_events_bin(path)
    } else {
        read_events_csv(path)
    }
}

fn read_events_bin(path: &Path) -> Result<EventCloud> {
    let mut r = LeReader { inner: open(path)?, path };
    r.bytes::<4>()?;
    let count = r.u64()? as usize;
    let mut events = Vec::with_capacity(count.min(1 << 24));
    for _ in 0..count {
        let t = r.f64()?;
        let x = r.f32()? as f64;
        let y = r.f32()? as f64;
        let p = r.i8()?;
        events.push(Event::new(t, x, y, p));
    }
    to_cloud(path, events)
}

fn read_events_csv(path: &Path) -> Result<EventCloud> {
    let mut events = Vec::new();
    for (line, rec) in csv_records(path, &["t", "x", "y", "p"])? {
        let [t, x, y, p] = fields_f64::<4>(path, line, &rec)?;
        events.push(Event::new(t, x, y, if p < 0.0 { -1 } else { 1 }));
    }
    if events.is_empty() {
        return Err(invalid(path, "no events"));
    }
    to_cloud(path, events)
}

/// Writes the `EVT1` binary format. Positions are stored as `f32`.
pub fn write_events(path: &Path, cloud: &EventCloud) -> Result<()> {
    write_with(path, |w| {
        w.write_all(EVT_MAGIC)?;
        w.write_all(&(cloud.len() as u64).to_le_bytes())?;
        for e in cloud {
            w.write_all(&e.t.to_le_bytes())?;
            w.write_all(&(e.x as f32).to_le_bytes())?;
            w.write_all(&(e.y as f32).to_le_bytes())?;
            w.write_all(&e.polarity.to_le_bytes())?;
        }
        Ok(())
    })
}

pub fn write_events_csv(path: &Path, cloud: &EventCloud) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "t,x,y,p")?;
        for e in cloud {
            writeln!(w, "{},{},{},{}", e.t, e.x, e.y, e.polarity)?;
        }
        Ok(())
    })
}

// ---- per-event flow -----------------------------------------------------

pub fn write_flow(path: &Path, cloud: &EventCloud, flow: &[Vec2]) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "t,x,y,ux,uy")?;
        for (e, u) in cloud.iter().zip(flow) {
            writeln!(w, "{},{},{},{},{}", e.t, e.x, e.y, u.x, u.y)?;
        }
        Ok(())
    })
}

/// Reads a `t,x,y,ux,uy` file as events (polarity +1) with their flow.
pub fn read_flow(path: &Path) -> Result<(Vec<Event>, Vec<Vec2>)> {
    let mut events = Vec::new();
    let mut flow = Vec::new();
    for (line, rec) in csv_records(path, &["t", "x", "y", "ux", "uy"])? {
        let [t, x, y, ux, uy] = fields_f64::<5>(path, line, &rec)?;
        events.push(Event::new(t, x, y, 1));
        flow.push(Vec2::new(ux, uy));
    }
    Ok((events, flow))
}

// ---- camera ---------------------------------------------------------------

pub fn read_camera(path: &Path) -> Result<CameraModel> {
    let mut cam = CameraModel::pinhole(1.0, 1.0, 0.0, 0.0, 0, 0);
    let mut seen = std::collections::BTreeSet::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let ln = i as u64 + 1;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| parse_err(path, ln, "expected key=value"))?;
        let (k, v) = (k.trim(), v.trim());
        let num: f64 = v
            .parse()
            .map_err(|_| parse_err(path, ln, format!("value of `{k}` is not a number")))?;
        match k {
            "fx" => cam.fx = num,
            "fy" => cam.fy = num,
            "cx" => cam.cx = num,
            "cy" => cam.cy = num,
            "k1" => cam.k1 = num,
            "k2" => cam.k2 = num,
            "k3" => cam.k3 = num,
            "p1" => cam.p1 = num,
            "p2" => cam.p2 = num,
            "width" | "height" => {
                if num < 0.0 || num.fract() != 0.0 || num > u32::MAX as f64 {
                    return Err(parse_err(path, ln, format!("`{k}` must be a non-negative integer")));
                }
                if k == "width" {
                    cam.width = num as u32;
                } else {
                    cam.height = num as u32;
                }
            }
            _ => return Err(parse_err(path, ln, format!("unknown key `{k}`"))),
        }
        seen.insert(k.to_string());
    }
    for key in ["fx", "fy", "cx", "cy", "width", "height"] {
        if !seen.contains(key) {
            return Err(invalid(path, format!("missing key `{key}`")));
        }
    }
    cam.validate().map_err(|e| invalid(path, e.to_string()))?;
    Ok(cam)
}

pub fn write_camera(path: &Path, cam: &CameraModel) -> Result<()> {
    write_with(path, |w| {
        for (k, v) in [
            ("fx", cam.fx),
            ("fy", cam.fy),
            ("cx", cam.cx),
            ("cy", cam.cy),
            ("k1", cam.k1),
            ("k2", cam.k2),
            ("k3", cam.k3),
            ("p1", cam.p1),
            ("p2", cam.p2),
        ] {
            writeln!(w, "{k}={v}")?;
        }
        writeln!(w, "width={}", cam.width)?;
        writeln!(w, "height={}", cam.height)
    })
}

// ---- scene ----------------------------------------------------------------

/// One edge per line: `x0 y0 x1 y1 depth density`. Blank lines and `#`
/// comments are ignored.
pub fn read_scene(path: &Path) -> Result<Vec<SceneEdge>> {
    let mut edges = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let ln = i as u64 + 1;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let nums: Vec<f64> = body
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err(path, ln, "expected six numbers"))?;
        let [x0, y0, x1, y1, depth, density] = nums[..] else {
            return Err(parse_err(path, ln, format!("expected six numbers, found {}", nums.len())));
        };
        let edge = SceneEdge::new(Vec2::new(x0, y0), Vec2::new(x1, y1), depth, density);
        edge.validate(edges.len())
            .map_err(|e| parse_err(path, ln, e.to_string()))?;
        edges.push(edge);
    }
    if edges.is_empty() {
        return Err(invalid(path, "scene has no edges"));
    }
    Ok(edges)
}

pub fn write_scene(path: &Path, edges: &[SceneEdge]) -> Result<()> {
    write_with(path, |w| {
        for e in edges {
            writeln!(w, "{} {} {} {} {} {}", e.p0.x, e.p0.y, e.p1.x, e.p1.y, e.depth, e.density)?;
        }
        Ok(())
    })
}

// ---- ground truth sidecar ------------------------------------------------

/// Ground truth as stored in the simulator sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub events: Vec<Event>,
    pub flow: Vec<Vec2>,
    pub normal_flow: Vec<Vec2>,
    pub depth: Vec<f64>,
}

pub fn write_ground_truth(path: &Path, sim: &SimOutput) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "t,x,y,ux,uy,nx,ny,Z")?;
        for (((e, u), n), z) in sim.cloud.iter().zip(&sim.flow).zip(&sim.normal_flow).zip(&sim.depth) {
            writeln!(w, "{},{},{},{},{},{},{},{}", e.t, e.x, e.y, u.x, u.y, n.x, n.y, z)?;
        }
        Ok(())
    })
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    let mut gt = GroundTruth {
        events: Vec::new(),
        flow: Vec::new(),
        normal_flow: Vec::new(),
        depth: Vec::new(),
    };
    for (line, rec) in csv_records(path, &["t", "x", "y", "ux", "uy", "nx", "ny", "Z"])? {
        let [t, x, y, ux, uy, nx, ny, z] = fields_f64::<8>(path, line, &rec)?;
        gt.events.push(Event::new(t, x, y, 1));
        gt.flow.push(Vec2::new(ux, uy));
        gt.normal_flow.push(Vec2::new(nx, ny));
        gt.depth.push(z);
    }
    Ok(gt)
}

// ---- encodings -------------------------------------------------------------

pub fn write_encoding(path: &Path, enc: &Encoding) -> Result<()> {
    write_with(path, |w| {
        w.write_all(VKM_MAGIC)?;
        w.write_all(&(enc.n_rows() as u64).to_le_bytes())?;
        w.write_all(&(enc.dim() as u32).to_le_bytes())?;
        for v in enc.as_interleaved() {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        Ok(())
    })
}

/// Reads an encoding dump. Neighbor counts are not stored and read as zero.
pub fn read_encoding(path: &Path) -> Result<Encoding> {
    let mut r = LeReader { inner: open(path)?, path };
    if &r.bytes::<4>()? != VKM_MAGIC {
        return Err(FormatError::BadMagic {
            path: path.to_path_buf(),
            expected: "VKM1",
        });
    }
    let n = r.u64()? as usize;
    let d = r.u32()? as usize;
    let data = r.f32_vec(n * d * 2)?.into_iter().map(f64::from).collect();
    Encoding::from_parts(d, data, vec![0; n]).ok_or_else(|| invalid(path, "zero feature dimension"))
}

// ---- model -----------------------------------------------------------------

/// Writes the head and the projection seed. The projection variance is not
/// part of the format; models are always built with the default variance.
pub fn write_model(path: &Path, model: &NormalFlowModel) -> Result<()> {
    let proj = model.projection();
    write_with(path, |w| {
        w.write_all(NFM_MAGIC)?;
        w.write_all(&(proj.dim() as u32).to_le_bytes())?;
        w.write_all(&proj.seed().to_le_bytes())?;
        let layers = model.mlp().layers();
        w.write_all(&(layers.len() as u32).to_le_bytes())?;
        for l in layers {
            w.write_all(&(l.out_dim() as u32).to_le_bytes())?;
            w.write_all(&(l.in_dim() as u32).to_le_bytes())?;
            for v in l.weight.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
            for v in l.bias.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    })
}

pub fn read_model(path: &Path, spec: NeighborhoodSpec) -> Result<NormalFlowModel> {
    let mut r = LeReader { inner: open(path)?, path };
    if &r.bytes::<4>()? != NFM_MAGIC {
        return Err(FormatError::BadMagic {
            path: path.to_path_buf(),
            expected: "NFM1",
        });
    }
    let d = r.u32()? as usize;
    let seed = r.u64()?;
    let count = r.u32()? as usize;
    if d == 0 || count == 0 || count > 64 {
        return Err(invalid(path, "implausible model header"));
    }
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        if rows == 0 || cols == 0 || rows.saturating_mul(cols) > 1 << 28 {
            return Err(invalid(path, "implausible layer shape"));
        }
        let weight = Array2::from_shape_vec((rows, cols), r.f32_vec(rows * cols)?)
            .expect("length matches shape");
        let bias = Array1::from(r.f32_vec(rows)?);
        layers.push(Layer { weight, bias });
    }
    let mlp = Mlp::from_layers(layers).map_err(|e| invalid(path, e.to_string()))?;
    let proj = RandomProjection::new(d, RandomProjection::DEFAULT_SIGMA2, seed);
    NormalFlowModel::new(spec, proj, mlp).map_err(|e| invalid(path, e.to_string()))
}

// ---- predictions -----------------------------------------------------------

pub fn write_predictions(path: &Path, cloud: &EventCloud, preds: &[NormalFlowPrediction]) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "t,x,y,nx,ny,sigma,valid")?;
        for (e, p) in cloud.iter().zip(preds) {
            let sigma = if p.sigma.is_infinite() {
                "inf".to_string()
            } else {
                p.sigma.to_string()
            };
            writeln!(w, "{},{},{},{},{},{},{}", e.t, e.x, e.y, p.flow.x, p.flow.y, sigma, p.valid)?;
        }
        Ok(())
    })
}

pub fn read_predictions(path: &Path) -> Result<(Vec<Event>, Vec<NormalFlowPrediction>)> {
    let mut events = Vec::new();
    let mut preds = Vec::new();
    for (line, rec) in csv_records(path, &["t", "x", "y", "nx", "ny", "sigma", "valid"])? {
        let [t, x, y, nx, ny, sigma] = fields_f64::<6>(path, line, &rec)?;
        let valid = match rec.get(6).unwrap_or("") {
            "true" | "1" => true,
            "false" | "0" => false,
            other => return Err(parse_err(path, line, format!("valid must be true/false, got `{other}`"))),
        };
        events.push(Event::new(t, x, y, 1));
        preds.push(NormalFlowPrediction {
            flow: Vec2::new(nx, ny),
            sigma,
            valid,
        });
    }
    Ok((events, preds))
}

// ---- IMU and egomotion -----------------------------------------------------

/// Angular-velocity samples `(t, ω)` sorted by time.
pub fn read_imu(path: &Path) -> Result<Vec<(f64, Vec3)>> {
    let mut out = Vec::new();
    for (line, rec) in csv_records(path, &["t", "wx", "wy", "wz"])? {
        let [t, wx, wy, wz] = fields_f64::<4>(path, line, &rec)?;
        out.push((t, Vec3::new(wx, wy, wz)));
    }
    if out.is_empty() {
        return Err(invalid(path, "no IMU samples"));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

pub fn write_imu(path: &Path, samples: &[(f64, Vec3)]) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "t,wx,wy,wz")?;
        for (t, o) in samples {
            writeln!(w, "{},{},{},{}", t, o.x, o.y, o.z)?;
        }
        Ok(())
    })
}

/// One estimated translation direction per time window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoRow {
    pub t_start: f64,
    pub t_end: f64,
    pub v: Vec3,
    pub inlier_fraction: f64,
}

pub fn write_egomotion(path: &Path, rows: &[EgoRow]) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "t_start,t_end,vx,vy,vz,inlier_fraction")?;
        for r in rows {
            writeln!(w, "{},{},{},{},{},{}", r.t_start, r.t_end, r.v.x, r.v.y, r.v.z, r.inlier_fraction)?;
        }
        Ok(())
    })
}

pub fn read_egomotion(path: &Path) -> Result<Vec<EgoRow>> {
    csv_records(path, &["t_start", "t_end", "vx", "vy", "vz", "inlier_fraction"])?
        .into_iter()
        .map(|(line, rec)| {
            let [t0, t1, vx, vy, vz, f] = fields_f64::<6>(path, line, &rec)?;
            Ok(EgoRow {
                t_start: t0,
                t_end: t1,
                v: Vec3::new(vx, vy, vz),
                inlier_fraction: f,
            })
        })
        .collect()
}
