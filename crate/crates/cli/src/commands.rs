use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use evflow::egomotion::{NegDepthConfig, SvmConfig};
use evflow::event_model::{EventCloud, LabeledCloud};
use evflow::flow_head::{train, AugmentationConfig, LossKind, TrainConfig};
use evflow::io::{self, FormatError};
use evflow::metrics::{self, FlowEvalReport};
use evflow::pipeline::{ego_rows, egomotion_windows, imu_mean, infer_cloud, InferenceConfig, Solver};
use evflow::scene_sim::{simulate, RigidMotion, SceneGenerator, SimWindow};
use evflow::uq::{EnsembleConfig, NormalFlowPrediction};
use evflow::veckm::{build_adjacency, encode, NeighborhoodSpec, RandomProjection};
use evflow::{Vec2, Vec3};
use thiserror::Error;

use crate::args::*;
use crate::plot::{self, Extent};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] evflow::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{0}: no predictions to plot")]
    EmptyPredictions(PathBuf),
}

impl CliError {
    pub fn class(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.class(),
            CliError::Usage(_) => "Usage",
            CliError::EmptyPredictions(_) => "EmptyPredictions",
        }
    }

    /// 2 for usage and file problems, 1 for failures of the computation.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_io() => 2,
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

macro_rules! impl_from_core {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Core(e.into())
            }
        }
    )*};
}
impl_from_core!(
    FormatError,
    evflow::event_model::EventError,
    evflow::scene_sim::SimError,
    evflow::flow_head::HeadError,
    evflow::uq::UqError,
    evflow::egomotion::EgoError,
    evflow::metrics::MetricsError
);

type Result<T> = std::result::Result<T, CliError>;

fn write_io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| {
        FormatError::Io {
            path: path.to_path_buf(),
            source,
        }
        .into()
    }
}

fn spec_of(n: &NeighborhoodArgs) -> Result<NeighborhoodSpec> {
    let spec = NeighborhoodSpec {
        dt: n.dt,
        dx: n.dx,
        dy: n.dy,
    };
    if !spec.is_valid() {
        return Err(CliError::Usage("--dt, --dx and --dy must be positive".into()));
    }
    Ok(spec)
}

// ---- simulate ---------------------------------------------------------------

pub fn simulate_cmd(a: &SimulateArgs) -> Result<()> {
    let (edges, motion) = match &a.scene {
        Some(path) => (io::read_scene(path)?, RigidMotion::still()),
        None => SceneGenerator::default().generate(a.seed),
    };
    let motion = RigidMotion::new(
        a.v.map_or(motion.v, |t| t.0),
        a.w.map_or(motion.omega, |t| t.0),
    );
    let window = SimWindow::new(a.t0, a.t0 + a.t);
    let sim = simulate(&edges, &motion, &window, a.seed)?;
    io::write_events(&a.out, &sim.cloud)?;
    io::write_ground_truth(&a.gt, &sim)?;
    if let Some(path) = &a.imu {
        io::write_imu(path, &[(window.t_start, motion.omega), (window.t_end, motion.omega)])?;
    }
    if let Some(path) = &a.save_scene {
        io::write_scene(path, &edges)?;
    }
    println!(
        "events={} edges={} v={} w={}",
        sim.cloud.len(),
        edges.len(),
        Triple(motion.v),
        Triple(motion.omega)
    );
    Ok(())
}

// ---- train ------------------------------------------------------------------

/// Reads a ground-truth sidecar or a plain flow file as labeled events.
pub fn read_labeled(path: &Path) -> Result<LabeledCloud> {
    let head = fs::read_to_string(path).map_err(write_io_err(path))?;
    let first = head.lines().next().unwrap_or("").replace(' ', "");
    let (events, flow) = if first.starts_with("t,x,y,ux,uy,nx") {
        let gt = io::read_ground_truth(path)?;
        (gt.events, gt.flow)
    } else {
        io::read_flow(path)?
    };
    if events.is_empty() {
        return Err(FormatError::Invalid {
            path: path.to_path_buf(),
            msg: "no events".into(),
        }
        .into());
    }
    let (cloud, perm) = EventCloud::from_unsorted(events)?;
    let flow = perm.iter().map(|&i| flow[i]).collect();
    Ok(LabeledCloud::new(cloud, flow)?)
}

pub fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    Ok(TrainConfig {
        epsilon: a.eps,
        learning_rate: a.lr,
        batch: a.batch,
        epochs: a.epochs,
        steps_per_epoch: a.steps,
        seed: a.seed,
        spec: spec_of(&a.nbhd)?,
        dim: a.dim,
        projection_seed: a.projection_seed,
        loss: match a.loss {
            LossArg::MotionField => LossKind::MotionField,
            LossArg::NormDirection => LossKind::NormDirection,
        },
        ..TrainConfig::default()
    })
}

pub fn train_cmd(a: &TrainArgs) -> Result<()> {
    let cfg = train_config(a)?;
    let data = a.gt.iter().map(|p| read_labeled(p)).collect::<Result<Vec<_>>>()?;
    let aug = if a.no_augment {
        AugmentationConfig::none()
    } else {
        AugmentationConfig::default()
    };
    let (model, logs) = train(&data, &cfg, &aug, |_| {})?;
    if let Some(path) = &a.log {
        let mut text = String::from("epoch,mean_loss,mean_pee_train\n");
        for l in &logs {
            text.push_str(&format!("{},{},{}\n", l.epoch, l.mean_loss, l.mean_pee));
        }
        fs::write(path, text).map_err(write_io_err(path))?;
    }
    io::write_model(&a.out, &model)?;
    if let Some(last) = logs.last() {
        println!("epochs={} loss={:.6} pee_train={:.6}", last.epoch, last.mean_loss, last.mean_pee);
    }
    Ok(())
}

// ---- infer / encode ---------------------------------------------------------

fn read_cloud(events: &Path, camera: Option<&Path>) -> Result<EventCloud> {
    let cloud = io::read_events(events)?;
    let Some(cam_path) = camera else {
        return Ok(cloud);
    };
    let cam = io::read_camera(cam_path)?;
    cam.validate()?;
    let mut out = Vec::with_capacity(cloud.len());
    for e in cloud.iter() {
        let p = cam.undistort_normalize(Vec2::new(e.x, e.y))?;
        out.push(evflow::event_model::Event::new(e.t, p.x, p.y, e.polarity));
    }
    Ok(EventCloud::new(out)?)
}

pub fn inference_config(a: &InferArgs) -> InferenceConfig {
    InferenceConfig {
        slice: a.slice,
        margin: a.nbhd.dt,
        max_events: a.max_events,
        ensemble: EnsembleConfig {
            k: a.ensembles,
            threshold: a.unc_thresh,
        },
        seed: a.seed,
    }
}

pub fn infer_cmd(a: &InferArgs) -> Result<()> {
    let spec = spec_of(&a.nbhd)?;
    if !(a.slice > 0.0) || a.max_events == 0 {
        return Err(CliError::Usage("--slice and --max-events must be positive".into()));
    }
    let cloud = read_cloud(&a.events, a.camera.as_deref())?;
    let model = io::read_model(&a.model, spec)?;
    let preds = infer_cloud(&model, &cloud, &inference_config(a))?;
    io::write_predictions(&a.out, &cloud, &preds)?;
    let valid = preds.iter().filter(|p| p.valid).count();
    println!("events={} valid={}", cloud.len(), valid);
    Ok(())
}

pub fn encode_cmd(a: &EncodeArgs) -> Result<()> {
    let spec = spec_of(&a.nbhd)?;
    if a.dim == 0 || !(a.sigma2 > 0.0) {
        return Err(CliError::Usage("--dim and --sigma2 must be positive".into()));
    }
    let cloud = io::read_events(&a.events)?;
    let proj = RandomProjection::new(a.dim, a.sigma2, a.projection_seed);
    let adj = build_adjacency(&cloud, &spec);
    let enc = encode(&cloud, &adj, &proj);
    io::write_encoding(&a.out, &enc)?;
    println!("events={} dim={} neighbors={}", cloud.len(), a.dim, adj.nnz());
    Ok(())
}

// ---- eval-flow ----------------------------------------------------------------

fn report_line(r: &FlowEvalReport) -> String {
    format!(
        "PEE={:.6} PosPct={:.4} n={} masked={}",
        r.pee_mean, r.pos_pct, r.n_evaluated, r.n_masked
    )
}

pub fn eval_flow_cmd(a: &EvalFlowArgs) -> Result<()> {
    let gt = io::read_ground_truth(&a.gt)?;
    let preds: Vec<NormalFlowPrediction> = if a.use_gt_normal {
        gt.normal_flow
            .iter()
            .map(|&flow| NormalFlowPrediction {
                flow,
                sigma: 0.0,
                valid: true,
            })
            .collect()
    } else {
        let (events, preds) = io::read_predictions(&a.pred)?;
        if events.len() != gt.events.len() {
            return Err(CliError::Usage(format!(
                "{} has {} rows but {} has {}",
                a.pred.display(),
                events.len(),
                a.gt.display(),
                gt.events.len()
            )));
        }
        if let Some(i) = events.iter().zip(&gt.events).position(|(p, g)| p.t != g.t) {
            return Err(CliError::Usage(format!(
                "row {} of {} does not match the ground truth timestamp",
                i + 2,
                a.pred.display()
            )));
        }
        preds
    };
    let flows: Vec<Vec2> = preds.iter().map(|p| p.flow).collect();
    let valid: Vec<bool> = preds.iter().map(|p| p.valid).collect();

    let all = metrics::evaluate_flow(&gt.flow, &flows, None)?;
    println!("{}", report_line(&all));
    match metrics::evaluate_flow(&gt.flow, &flows, Some(&valid)) {
        Ok(r) => println!("valid {}", report_line(&r)),
        Err(_) => println!("valid n=0"),
    }

    if let Some(path) = &a.windows {
        if !(a.window > 0.0) {
            return Err(CliError::Usage("--window must be positive".into()));
        }
        let times: Vec<f64> = gt.events.iter().map(|e| e.t).collect();
        let ranges = time_windows(&times, a.window);
        let (_, per) = metrics::evaluate_windows(&gt.flow, &flows, None, &ranges)?;
        let mut text = String::from("t_start,t_end,pee,pos_pct,n,masked\n");
        for (w, r) in per {
            let (s, e) = (times[ranges[w].start], times[ranges[w].end - 1]);
            text.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s, e, r.pee_mean, r.pos_pct, r.n_evaluated, r.n_masked
            ));
        }
        fs::write(path, text).map_err(write_io_err(path))?;
    }
    Ok(())
}

/// Consecutive index ranges of time-sorted samples, one per window.
fn time_windows(times: &[f64], window: f64) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let Some(&t0) = times.first() else {
        return out;
    };
    let mut start = 0;
    while start < times.len() {
        let k = ((times[start] - t0) / window).floor() + 1.0;
        let limit = t0 + k * window;
        let end = start + times[start..].partition_point(|&t| t < limit);
        out.push(start..end.max(start + 1));
        start = end.max(start + 1);
    }
    out
}

// ---- egomotion --------------------------------------------------------------

pub fn solver_of(a: &EgomotionArgs) -> Result<Solver> {
    Ok(match a.solver {
        SolverArg::Svm => {
            if !(a.lambda > 0.0) {
                return Err(CliError::Usage("--lambda must be positive".into()));
            }
            Solver::Svm(SvmConfig {
                lambda: a.lambda,
                ..SvmConfig::default()
            })
        }
        SolverArg::Negdepth => Solver::NegativeDepth(NegDepthConfig::default()),
    })
}

pub fn egomotion_cmd(a: &EgomotionArgs) -> Result<()> {
    if !(a.window > 0.0) {
        return Err(CliError::Usage("--window must be positive".into()));
    }
    let solver = solver_of(a)?;
    let (events, preds) = io::read_predictions(&a.pred)?;
    let imu = a.imu.as_deref().map(io::read_imu).transpose()?;
    let constant = a.omega.map(|t| t.0);
    if imu.is_none() && constant.is_none() {
        log::warn!("no --imu or --omega given; assuming zero rotation");
    }
    let omega = |t0: f64, t1: f64| -> Vec3 {
        match (&imu, constant) {
            (Some(samples), _) => imu_mean(samples, t0, t1),
            (None, Some(w)) => w,
            (None, None) => Vec3::zeros(),
        }
    };
    let positions: Vec<Vec2> = events.iter().map(|e| e.position()).collect();
    let times: Vec<f64> = events.iter().map(|e| e.t).collect();
    let results = egomotion_windows(&positions, &times, &preds, a.window, omega, &solver);
    for (t0, t1, r) in &results {
        if let Err(e) = r {
            log::warn!("window [{t0}, {t1}): {e}");
        }
    }
    let mut rows = ego_rows(&results);
    if rows.is_empty() {
        return Err(match results.into_iter().find_map(|(_, _, r)| r.err()) {
            Some(e) => e.into(),
            None => CliError::Usage(format!("{}: no predictions", a.pred.display())),
        });
    }
    let failed = results.len() - rows.len();
    if let Some(Triple(v_gt)) = a.scale_gt {
        let units: Vec<Vec3> = rows.iter().map(|r| r.v).collect();
        let rms = metrics::rms_velocity(&units, &vec![v_gt; units.len()])?;
        for r in &mut rows {
            r.v *= v_gt.norm();
        }
        println!("windows={} failed={} RMS={:.6}", rows.len(), failed, rms);
    } else {
        println!("windows={} failed={}", rows.len(), failed);
    }
    io::write_egomotion(&a.out, &rows)?;
    Ok(())
}

// ---- plot -------------------------------------------------------------------

pub fn plot_cmd(a: &PlotArgs) -> Result<()> {
    if a.width == 0 || a.height == 0 {
        return Err(CliError::Usage("--width and --height must be positive".into()));
    }
    let (events, preds) = io::read_predictions(&a.pred)?;
    if events.is_empty() {
        return Err(CliError::EmptyPredictions(a.pred.clone()));
    }
    let extent = match &a.extent {
        Some(v) => Extent {
            x_min: v[0],
            x_max: v[1],
            y_min: v[2],
            y_max: v[3],
        },
        None => Extent::of(&events),
    };
    if !extent.is_valid() {
        return Err(CliError::Usage("--extent must be xmin,xmax,ymin,ymax with min < max".into()));
    }
    let img = plot::render(&events, &preds, &extent, a.width, a.height);
    plot::write_ppm(&a.out, &img, a.width, a.height).map_err(write_io_err(&a.out))?;
    Ok(())
}

// ---- --print-config -----------------------------------------------------------

fn show<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), |x| x.to_string())
}

fn path_opt(p: &Option<PathBuf>) -> String {
    show(&p.as_ref().map(|p| p.display().to_string()))
}

/// Effective settings of a subcommand as `key=value` pairs.
pub fn config_lines(cmd: &Command) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    let mut kv = |k: &str, v: String| out.push((k.to_string(), v));
    let nbhd = |kv: &mut dyn FnMut(&str, String), n: &NeighborhoodArgs| {
        kv("dt", n.dt.to_string());
        kv("dx", n.dx.to_string());
        kv("dy", n.dy.to_string());
    };
    match cmd {
        Command::Simulate(a) => {
            kv("command", "simulate".into());
            kv("scene", path_opt(&a.scene));
            kv("v", show(&a.v));
            kv("w", show(&a.w));
            kv("t0", a.t0.to_string());
            kv("t", a.t.to_string());
            kv("seed", a.seed.to_string());
            kv("out", a.out.display().to_string());
            kv("gt", a.gt.display().to_string());
            kv("imu", path_opt(&a.imu));
            kv("save_scene", path_opt(&a.save_scene));
        }
        Command::Train(a) => {
            kv("command", "train".into());
            let files: Vec<String> = a.gt.iter().map(|p| p.display().to_string()).collect();
            kv("gt", files.join(","));
            kv("out", a.out.display().to_string());
            kv("log", path_opt(&a.log));
            kv("epochs", a.epochs.to_string());
            kv("steps", a.steps.to_string());
            kv("batch", a.batch.to_string());
            kv("lr", a.lr.to_string());
            kv("eps", a.eps.to_string());
            kv("dim", a.dim.to_string());
            kv("sigma2", RandomProjection::DEFAULT_SIGMA2.to_string());
            nbhd(&mut kv, &a.nbhd);
            kv("loss", format!("{:?}", a.loss).to_lowercase());
            kv("augment", (!a.no_augment).to_string());
            let aug = AugmentationConfig::default();
            kv("augment_scale", format!("{},{}", aug.scale_range.0, aug.scale_range.1));
            kv("augment_sample", format!("{},{}", aug.sample_range.0, aug.sample_range.1));
            let d = TrainConfig::default();
            kv("log_norm_range", format!("{},{}", d.log_norm_range.0, d.log_norm_range.1));
            kv("hidden", d.hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(","));
            kv("slice", d.slice.to_string());
            kv("seed", a.seed.to_string());
            kv("projection_seed", a.projection_seed.to_string());
        }
        Command::Infer(a) => {
            kv("command", "infer".into());
            kv("events", a.events.display().to_string());
            kv("model", a.model.display().to_string());
            kv("camera", path_opt(&a.camera));
            kv("out", a.out.display().to_string());
            kv("ensembles", a.ensembles.to_string());
            kv("unc_thresh", a.unc_thresh.to_string());
            kv("slice", a.slice.to_string());
            kv("context_margin", a.nbhd.dt.to_string());
            kv("max_events", a.max_events.to_string());
            nbhd(&mut kv, &a.nbhd);
            kv("seed", a.seed.to_string());
        }
        Command::Encode(a) => {
            kv("command", "encode".into());
            kv("events", a.events.display().to_string());
            kv("out", a.out.display().to_string());
            kv("dim", a.dim.to_string());
            kv("sigma2", a.sigma2.to_string());
            kv("projection_seed", a.projection_seed.to_string());
            nbhd(&mut kv, &a.nbhd);
        }
        Command::EvalFlow(a) => {
            kv("command", "eval-flow".into());
            kv("pred", a.pred.display().to_string());
            kv("gt", a.gt.display().to_string());
            kv("use_gt_normal", a.use_gt_normal.to_string());
            kv("windows", path_opt(&a.windows));
            kv("window", a.window.to_string());
        }
        Command::Egomotion(a) => {
            kv("command", "egomotion".into());
            kv("pred", a.pred.display().to_string());
            kv("imu", path_opt(&a.imu));
            kv("omega", show(&a.omega));
            kv("solver", format!("{:?}", a.solver).to_lowercase());
            kv("window", a.window.to_string());
            kv("lambda", a.lambda.to_string());
            let svm = SvmConfig::default();
            kv("svm_max_epochs", svm.max_epochs.to_string());
            kv("svm_tol", svm.tol.to_string());
            let nd = NegDepthConfig::default();
            kv("negdepth_iterations", nd.iterations.to_string());
            kv("negdepth_step", nd.step.to_string());
            kv("out", a.out.display().to_string());
            kv("scale_gt", show(&a.scale_gt));
        }
        Command::Plot(a) => {
            kv("command", "plot".into());
            kv("pred", a.pred.display().to_string());
            kv("out", a.out.display().to_string());
            kv("width", a.width.to_string());
            kv("height", a.height.to_string());
            let ext = a.extent.as_ref().map(|v| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","));
            kv("extent", ext.unwrap_or_else(|| "auto".into()));
        }
    }
    out
}

pub fn print_config(cmd: &Command) {
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    for (k, v) in config_lines(cmd) {
        let _ = writeln!(w, "{k}={v}");
    }
}

pub fn run(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Simulate(a) => simulate_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Infer(a) => infer_cmd(a),
        Command::Encode(a) => encode_cmd(a),
        Command::EvalFlow(a) => eval_flow_cmd(a),
        Command::Egomotion(a) => egomotion_cmd(a),
        Command::Plot(a) => plot_cmd(a),
    }
}
