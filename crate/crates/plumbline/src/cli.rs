//! The `plumbline` binary: every pipeline stage as a subcommand, for
//! scripted reproduction of the whole evaluation protocol.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (missing or
//! malformed files, bad streams), 3 numeric failure.

use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::calibnet::{forward, init_params, load_checkpoint, save_checkpoint, NetDims};
use crate::error::Error;
use crate::evalkit::{
    assume_upright, direction_density, gate_diagnostics_with, render_gate_table,
    render_summary_table, render_tilt_table, summarize, tilt_breakdown, tilt_edges_30,
    GateFrame, UprightFrame,
};
use crate::geom3::angle_deg;
use crate::ingest;
use crate::labels::{build_sequence, LabelConfig};
use crate::losses::grad_check;
use crate::mahony::{run_sequence, AccelSign, MahonyGains};
use crate::procrustes::{solve_procrustes, PairedDirections};
use crate::trainer::{
    make_synth, parse_mixture, read_dataset, train_loop, write_dataset, write_history, LrStep,
    RunConfig, SynthSample,
};

#[derive(Parser)]
#[command(
    name = "plumbline",
    about = "Gravity-direction calibration toolkit",
    version,
    disable_help_subcommand = true
)]
struct Cli {
    /// Worker threads for data-parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn recording directories into labeled sequence CSVs.
    Extract(ExtractArgs),
    /// Run the attitude filter over an IMU stream.
    Mahony(MahonyArgs),
    /// Fit the body-to-camera rotation from paired directions.
    Align(AlignArgs),
    /// Generate the synthetic feature dataset.
    Synth(SynthArgs),
    /// Train the calibration network.
    Train(TrainArgs),
    /// Evaluate a checkpoint against a dataset.
    Eval(EvalArgs),
    /// Per-tilt-bin error breakdown.
    TiltReport(TiltReportArgs),
    /// Mean gate value binned by prior error and non-gravity ratio.
    GateDiag(GateDiagArgs),
    /// Sequence statistics: counts, tilt histogram, direction density.
    Stats(StatsArgs),
    /// Precompute the undistort+resize remap table.
    Remap(RemapArgs),
    /// Check reverse-mode gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct FilterOpts {
    /// Proportional gain of the attitude filter.
    #[arg(long, default_value_t = 0.5)]
    kp: f64,
    /// Integral gain of the attitude filter.
    #[arg(long, default_value_t = 0.01)]
    ki: f64,
    /// Accelerometer polarity: `up` (specific force) or `down`.
    #[arg(long, default_value = "up")]
    accel_sign: String,
}

impl FilterOpts {
    fn gains(&self) -> Result<MahonyGains, Error> {
        let mut gains = MahonyGains::new(self.kp, self.ki)?;
        gains.accel_sign = match self.accel_sign.as_str() {
            "up" => AccelSign::UpPositive,
            "down" => AccelSign::DownPositive,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "accel-sign must be up or down, got '{other}'"
                )))
            }
        };
        Ok(gains)
    }
}

#[derive(Args)]
struct ExtractArgs {
    /// Recording directories (odometry.csv, imu.csv, camera_matrix.csv).
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    /// Output directory for `<id>.csv` and `<id>.json`.
    #[arg(long)]
    out_dir: PathBuf,
    /// Odometry column order, e.g. `t,skip,x,y,z,qx,qy,qz,qw`.
    #[arg(long)]
    column_map: Option<String>,
    /// Fit one rotation over all recordings instead of per sequence.
    #[arg(long)]
    global_fit: bool,
    /// Accelerometer window half-width per frame, seconds.
    #[arg(long, default_value_t = 0.05)]
    accel_window: f64,
    /// Filter warm-up span flagged in the sidecar, seconds.
    #[arg(long, default_value_t = 1.0)]
    burn_in: f64,
    #[command(flatten)]
    filter: FilterOpts,
}

#[derive(Args)]
struct MahonyArgs {
    /// IMU CSV file.
    #[arg(long)]
    imu: PathBuf,
    /// Input layout: `stray` (t, accel, gyro) or `euroc` (ns, gyro, accel).
    #[arg(long, default_value = "stray")]
    format: String,
    /// Emit estimates at this rate across the stream span, Hz.
    #[arg(long, default_value_t = 30.0)]
    rate: f64,
    /// Output CSV (t, gx, gy, gz).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    filter: FilterOpts,
}

#[derive(Args)]
struct AlignArgs {
    /// Paired directions CSV: gcam xyz, gimu xyz per row.
    #[arg(long)]
    pairs: PathBuf,
    /// Output JSON with the rotation and residual.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConfigOpts {
    /// Plain-text `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Inline overrides, `--set key=value` (repeatable). Any config
    /// key works; the common ones also exist as direct flags below.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,

    // Direct flag forms of the config keys.
    #[arg(long)]
    c: Option<usize>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_val: Option<usize>,
    #[arg(long)]
    feature_noise_sigma: Option<f64>,
    #[arg(long)]
    distractor_dims: Option<usize>,
    #[arg(long)]
    feature_scale: Option<f64>,
    #[arg(long)]
    offset_scale: Option<f64>,
    #[arg(long)]
    lr_heads: Option<f64>,
    #[arg(long)]
    lr_backbone_slots: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    eps_adam: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    grad_clip: Option<String>,
    #[arg(long)]
    lambda_delta: Option<f64>,
    #[arg(long)]
    lambda_tau: Option<f64>,
    #[arg(long)]
    lambda_img: Option<f64>,
    #[arg(long)]
    h_prior: Option<usize>,
    #[arg(long)]
    h_head: Option<usize>,
    #[arg(long)]
    h_img: Option<usize>,
}

impl ConfigOpts {
    fn build(&self) -> Result<RunConfig, Error> {
        let mut rc = RunConfig::default();
        if let Some(path) = &self.config {
            rc.load_file(path)?;
        }
        macro_rules! flag {
            ($field:ident) => {
                if let Some(v) = &self.$field {
                    rc.apply(stringify!($field), &v.to_string())?;
                }
            };
        }
        flag!(c);
        flag!(n_train);
        flag!(n_val);
        flag!(feature_noise_sigma);
        flag!(distractor_dims);
        flag!(feature_scale);
        flag!(offset_scale);
        flag!(lr_heads);
        flag!(lr_backbone_slots);
        flag!(epochs);
        flag!(batch);
        flag!(beta1);
        flag!(beta2);
        flag!(eps_adam);
        flag!(seed);
        flag!(grad_clip);
        flag!(lambda_delta);
        flag!(lambda_tau);
        flag!(lambda_img);
        flag!(h_prior);
        flag!(h_head);
        flag!(h_img);
        for kv in &self.sets {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("--set needs key=value, got '{kv}'")))?;
            rc.apply(k.trim(), v.trim())?;
        }
        Ok(rc)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for train.csv and val.csv.
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    config: ConfigOpts,
    /// Drift mixture override, `w:mean:std,...`.
    #[arg(long)]
    mixture: Option<String>,
    /// Dataset seed override.
    #[arg(long)]
    data_seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory holding train.csv and val.csv.
    #[arg(long)]
    data_dir: PathBuf,
    /// Output checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch history CSV.
    #[arg(long)]
    history: Option<PathBuf>,
    /// Parameter initialization seed.
    #[arg(long, default_value_t = 0)]
    init_seed: u64,
    /// Cosine schedule stepping: `epoch` or `iter`.
    #[arg(long)]
    lr_step: Option<String>,
    #[command(flatten)]
    config: ConfigOpts,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint file.
    #[arg(long)]
    model: PathBuf,
    /// Dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// Convention of the assume-upright constant.
    #[arg(long, default_value = "arkit")]
    upright_frame: String,
    /// Machine-readable output.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct TiltReportArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Which output to report: fused, img, corr, or prior.
    #[arg(long, default_value = "fused")]
    method: String,
    /// Comma-separated bin edges over [0, 180].
    #[arg(long)]
    edges: Option<String>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct GateDiagArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Prior-error bin thresholds, degrees.
    #[arg(long)]
    prior_edges: Option<String>,
    /// Non-gravity-ratio bin thresholds.
    #[arg(long)]
    ratio_edges: Option<String>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct StatsArgs {
    /// Labeled sequence CSVs.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Tilt histogram edges, degrees.
    #[arg(long, default_value = "0,60,120,180")]
    edges: String,
    /// Optional direction-density CSV over an S2 grid.
    #[arg(long)]
    density: Option<PathBuf>,
    /// Density grid size as TILTxAZIMUTH.
    #[arg(long, default_value = "18x36")]
    density_bins: String,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct RemapArgs {
    /// Intrinsics CSV (camera_matrix.csv layout).
    #[arg(long)]
    intrinsics: PathBuf,
    /// Output table path.
    #[arg(long)]
    out: PathBuf,
    /// Output size as WIDTHxHEIGHT.
    #[arg(long, default_value = "224x224")]
    out_size: String,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    configs: usize,
    #[arg(long)]
    json: bool,
}

/// Run the CLI; returns the process exit code.
pub fn run<I: IntoIterator<Item = String>>(args: I) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };

    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("warning: thread pool already initialized: {e}");
        }
    }

    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_) => 1,
        Error::NoConvergence { .. }
        | Error::DegenerateVector { .. }
        | Error::InsufficientPairs { .. }
        | Error::NumericCheckFailed(_) => 3,
        _ => 2,
    }
}

fn dispatch(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Extract(args) => cmd_extract(args),
        Command::Mahony(args) => cmd_mahony(args),
        Command::Align(args) => cmd_align(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::TiltReport(args) => cmd_tilt_report(args),
        Command::GateDiag(args) => cmd_gate_diag(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Remap(args) => cmd_remap(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    }
}

fn parse_edge_list(s: &str) -> Result<Vec<f64>, Error> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("bad edge '{t}'")))
        })
        .collect()
}

fn parse_size(s: &str) -> Result<(u32, u32), Error> {
    let (w, h) = s
        .split_once('x')
        .ok_or_else(|| Error::InvalidConfig(format!("size must be WxH, got '{s}'")))?;
    Ok((
        w.trim().parse().map_err(|_| Error::InvalidConfig(format!("bad width '{w}'")))?,
        h.trim().parse().map_err(|_| Error::InvalidConfig(format!("bad height '{h}'")))?,
    ))
}

fn cmd_extract(args: ExtractArgs) -> Result<(), Error> {
    let gains = args.filter.gains()?;
    let columns = match &args.column_map {
        Some(spec) => spec.parse()?,
        None => ingest::OdometryColumns::default(),
    };
    let label_cfg = LabelConfig { accel_window: args.accel_window, burn_in: args.burn_in };
    std::fs::create_dir_all(&args.out_dir)?;

    let recordings: Vec<(String, ingest::StrayRecording)> = args
        .dirs
        .iter()
        .map(|dir| {
            let id = dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "sequence".into());
            ingest::read_stray_with(dir, &columns).map(|rec| (id, rec))
        })
        .collect::<Result<_, _>>()?;

    let mut records = Vec::new();
    for (id, rec) in &recordings {
        records.push(build_sequence(id, &rec.odometry, &rec.imu, gains, &label_cfg)?);
    }

    if args.global_fit && records.len() > 1 {
        // Ablation mode: one rotation fitted over every sequence. The
        // per-sequence filters already produced the pairs; refit from
        // the pooled label/prior pairs by re-running the alignment on
        // the raw estimates.
        let mut g_cam = Vec::new();
        let mut g_imu = Vec::new();
        for ((_, rec), record) in recordings.iter().zip(&records) {
            let frame_times: Vec<f64> = record.frames.iter().map(|f| f.t).collect();
            let estimates = run_sequence(&rec.imu, &frame_times, gains)?;
            for (frame, est) in record.frames.iter().zip(&estimates) {
                g_cam.push(frame.g_gt);
                g_imu.push(est.g_imu);
            }
        }
        let pooled = solve_procrustes(&PairedDirections::new(g_cam, g_imu)?)?;
        for ((_, rec), record) in recordings.iter().zip(records.iter_mut()) {
            let frame_times: Vec<f64> = record.frames.iter().map(|f| f.t).collect();
            let estimates = run_sequence(&rec.imu, &frame_times, gains)?;
            record.alignment = pooled;
            for (frame, est) in record.frames.iter_mut().zip(&estimates) {
                frame.g_prior = pooled.r.apply_unit(est.g_imu);
                frame.prior_error_deg = angle_deg(frame.g_prior, frame.g_gt);
            }
        }
    }

    for record in &records {
        let csv = args.out_dir.join(format!("{}.csv", record.id));
        let json = args.out_dir.join(format!("{}.json", record.id));
        ingest::write_sequence_csv(&csv, record)?;
        ingest::write_sequence_sidecar(&json, record)?;
        println!(
            "{}: {} frames ({} dropped), alignment residual {:.3} deg ({:?})",
            record.id,
            record.frames.len(),
            record.dropped_frames,
            record.alignment.residual_rms_deg,
            record.alignment.condition_flag,
        );
    }
    Ok(())
}

fn cmd_mahony(args: MahonyArgs) -> Result<(), Error> {
    let imu = match args.format.as_str() {
        "stray" => ingest::read_stray_imu_csv(&args.imu)?,
        "euroc" => ingest::read_euroc_imu_csv(&args.imu)?,
        other => {
            return Err(Error::InvalidConfig(format!(
                "format must be stray or euroc, got '{other}'"
            )))
        }
    };
    if args.rate <= 0.0 {
        return Err(Error::InvalidConfig("rate must be positive".into()));
    }
    let first = imu.first().ok_or(Error::EmptyStream)?.t;
    let last = imu.last().unwrap().t;
    let n = ((last - first) * args.rate).floor() as usize + 1;
    let frames: Vec<f64> = (0..n).map(|i| first + i as f64 / args.rate).collect();

    let estimates = run_sequence(&imu, &frames, args.filter.gains()?)?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(&args.out)?);
    use std::io::Write;
    writeln!(w, "t,gx,gy,gz")?;
    for e in &estimates {
        writeln!(w, "{},{},{},{}", e.t, e.g_imu.x, e.g_imu.y, e.g_imu.z)?;
    }
    w.flush()?;
    println!("{} estimates -> {}", estimates.len(), args.out.display());
    Ok(())
}

fn cmd_align(args: AlignArgs) -> Result<(), Error> {
    let pairs = ingest::read_pairs_csv(&args.pairs)?;
    let result = solve_procrustes(&pairs)?;
    #[derive(serde::Serialize)]
    struct AlignOut<'a> {
        n_pairs: usize,
        #[serde(flatten)]
        result: &'a crate::procrustes::AlignmentResult,
    }
    let out = AlignOut { n_pairs: pairs.len(), result: &result };
    let file = std::fs::File::create(&args.out)?;
    serde_json::to_writer_pretty(file, &out)
        .map_err(|e| Error::InvalidConfig(format!("json write failed: {e}")))?;
    println!(
        "rotation fitted over {} pairs, residual {:.4} deg ({:?})",
        pairs.len(),
        result.residual_rms_deg,
        result.condition_flag
    );
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), Error> {
    let mut rc = args.config.build()?;
    if let Some(m) = &args.mixture {
        rc.synth.0.drift_mixture = parse_mixture(m)?;
    }
    if let Some(seed) = args.data_seed {
        rc.synth.0.seed = seed;
    }
    let (train, val) = make_synth(&rc.synth.0)?;
    std::fs::create_dir_all(&args.out_dir)?;
    write_dataset(&args.out_dir.join("train.csv"), &train)?;
    write_dataset(&args.out_dir.join("val.csv"), &val)?;
    println!(
        "wrote {} train / {} val samples (C = {}) to {}",
        train.len(),
        val.len(),
        rc.synth.0.c,
        args.out_dir.display()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), Error> {
    let mut rc = args.config.build()?;
    if let Some(step) = &args.lr_step {
        rc.train.lr_step = match step.as_str() {
            "epoch" => LrStep::Epoch,
            "iter" => LrStep::Iter,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "lr-step must be epoch or iter, got '{other}'"
                )))
            }
        };
    }
    let train = read_dataset(&args.data_dir.join("train.csv"))?;
    let val = read_dataset(&args.data_dir.join("val.csv"))?;
    let c = train.first().map(|s| s.f.len()).ok_or(Error::EmptyBatch)?;
    let dims = NetDims {
        c,
        h_prior: rc.dims.h_prior.unwrap_or(NetDims::default().h_prior),
        h_head: rc.dims.h_head.unwrap_or(NetDims::default().h_head),
        h_img: rc.dims.h_img.unwrap_or(NetDims::default().h_img),
        ..NetDims::default()
    };
    let params = init_params(dims, args.init_seed)?;
    let (trained, history) = train_loop(params, &train, &val, &rc.weights, &rc.train)?;
    save_checkpoint(&args.out, &trained)?;
    if let Some(path) = &args.history {
        write_history(path, &history)?;
    }
    if let Some(last) = history.last() {
        println!(
            "epoch {}: val pred {:.2} deg, corr {:.2}, img {:.2}, prior {:.2}",
            last.epoch,
            last.val_angles.pred_deg,
            last.val_angles.corr_deg,
            last.val_angles.img_deg,
            last.val_angles.prior_deg
        );
    }
    println!("checkpoint -> {}", args.out.display());
    Ok(())
}

/// Forward a dataset through a checkpoint, collecting per-frame
/// outputs.
fn forward_dataset(
    model: &Path,
    data: &Path,
) -> Result<(Vec<SynthSample>, Vec<crate::calibnet::ForwardOutput>), Error> {
    let params = load_checkpoint(model)?;
    let samples = read_dataset(data)?;
    if samples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let outputs = samples
        .iter()
        .map(|s| forward(&params, &s.f, s.g_prior).map(|(out, _)| out))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((samples, outputs))
}

fn cmd_eval(args: EvalArgs) -> Result<(), Error> {
    let upright = match args.upright_frame.as_str() {
        "arkit" => UprightFrame::Arkit,
        "euroc" => UprightFrame::Euroc,
        other => {
            return Err(Error::InvalidConfig(format!(
                "upright-frame must be arkit or euroc, got '{other}'"
            )))
        }
    };
    let (samples, outputs) = forward_dataset(&args.model, &args.data)?;

    let upright_preds = assume_upright(samples.len(), upright);
    let collect = |f: &dyn Fn(usize) -> f64| -> Vec<f64> {
        (0..samples.len()).map(f).collect()
    };
    let rows = vec![
        (
            "assume-upright",
            summarize(&collect(&|i| angle_deg(upright_preds[i], samples[i].g_star)))?,
        ),
        ("prior", summarize(&collect(&|i| samples[i].prior_error_deg))?),
        (
            "corrected",
            summarize(&collect(&|i| angle_deg(outputs[i].g_corr, samples[i].g_star)))?,
        ),
        (
            "image-only",
            summarize(&collect(&|i| angle_deg(outputs[i].g_img, samples[i].g_star)))?,
        ),
        (
            "fused",
            summarize(&collect(&|i| angle_deg(outputs[i].g_pred, samples[i].g_star)))?,
        ),
    ];

    if args.json {
        let map: serde_json::Value = rows
            .iter()
            .map(|(name, s)| (name.to_string(), serde_json::to_value(s).unwrap()))
            .collect::<serde_json::Map<String, serde_json::Value>>()
            .into();
        println!("{}", serde_json::to_string_pretty(&map).unwrap());
    } else {
        print!("{}", render_summary_table(&rows));
    }
    Ok(())
}

fn cmd_tilt_report(args: TiltReportArgs) -> Result<(), Error> {
    let (samples, outputs) = forward_dataset(&args.model, &args.data)?;
    let frames: Vec<_> = samples
        .iter()
        .zip(&outputs)
        .map(|(s, out)| {
            let pred = match args.method.as_str() {
                "fused" => out.g_pred,
                "img" => out.g_img,
                "corr" => out.g_corr,
                "prior" => s.g_prior,
                _ => out.g_pred,
            };
            (pred, s.g_star)
        })
        .collect();
    if !["fused", "img", "corr", "prior"].contains(&args.method.as_str()) {
        return Err(Error::InvalidConfig(format!(
            "method must be fused|img|corr|prior, got '{}'",
            args.method
        )));
    }
    let edges = match &args.edges {
        Some(s) => parse_edge_list(s)?,
        None => tilt_edges_30(),
    };
    let report = tilt_breakdown(&frames, &edges)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).unwrap());
    } else {
        print!("{}", render_tilt_table(&report));
    }
    Ok(())
}

fn cmd_gate_diag(args: GateDiagArgs) -> Result<(), Error> {
    let (samples, outputs) = forward_dataset(&args.model, &args.data)?;
    let frames: Vec<GateFrame> = samples
        .iter()
        .zip(&outputs)
        .map(|(s, out)| GateFrame {
            tau: out.tau,
            prior_error_deg: s.prior_error_deg,
            nongravity_ratio: s.nongravity_ratio,
        })
        .collect();
    let prior_edges = match &args.prior_edges {
        Some(s) => parse_edge_list(s)?,
        None => crate::evalkit::prior_error_thresholds(),
    };
    let ratio_edges = match &args.ratio_edges {
        Some(s) => parse_edge_list(s)?,
        None => crate::evalkit::nongravity_thresholds(),
    };
    let (by_err, by_ratio) = gate_diagnostics_with(&frames, &prior_edges, &ratio_edges)?;
    if args.json {
        let out = serde_json::json!({
            "by_prior_error": by_err,
            "by_nongravity_ratio": by_ratio,
        });
        println!("{}", serde_json::to_string_pretty(&out).unwrap());
    } else {
        print!("{}", render_gate_table(&by_err, "prior error (deg)"));
        println!();
        print!("{}", render_gate_table(&by_ratio, "non-gravity ratio"));
    }
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<(), Error> {
    let edges = parse_edge_list(&args.edges)?;
    let mut all_tilts: Vec<f64> = Vec::new();
    let mut all_dirs = Vec::new();
    let mut per_file = Vec::new();
    for path in &args.files {
        let frames = ingest::read_sequence_csv(path)?;
        per_file.push((path.display().to_string(), frames.len()));
        for f in &frames {
            all_tilts.push(f.tilt_deg);
            all_dirs.push(f.g_gt);
        }
    }
    if all_tilts.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n_bins = edges.len() - 1;
    let mut counts = vec![0usize; n_bins];
    for &t in &all_tilts {
        let mut idx = n_bins - 1;
        for i in 0..n_bins {
            if t < edges[i + 1] {
                idx = i;
                break;
            }
        }
        counts[idx] += 1;
    }

    if let Some(density_path) = &args.density {
        let (tb, ab) = parse_size(&args.density_bins)?;
        let grid = direction_density(&all_dirs, tb as usize, ab as usize)?;
        let mut w = std::io::BufWriter::new(std::fs::File::create(density_path)?);
        use std::io::Write;
        writeln!(w, "tilt_bin,azimuth_bin,count")?;
        for ti in 0..grid.tilt_bins {
            for ai in 0..grid.azimuth_bins {
                writeln!(w, "{},{},{}", ti, ai, grid.counts[ti * grid.azimuth_bins + ai])?;
            }
        }
        w.flush()?;
    }

    if args.json {
        let out = serde_json::json!({
            "sequences": per_file.iter().map(|(p, n)| serde_json::json!({"file": p, "frames": n})).collect::<Vec<_>>(),
            "total_frames": all_tilts.len(),
            "tilt_edges": edges,
            "tilt_counts": counts,
        });
        println!("{}", serde_json::to_string_pretty(&out).unwrap());
    } else {
        println!("{:<40} {:>8}", "sequence", "frames");
        for (p, n) in &per_file {
            println!("{p:<40} {n:>8}");
        }
        println!("{:<40} {:>8}", "total", all_tilts.len());
        println!();
        println!("{:<14} {:>8} {:>8}", "tilt bin", "count", "ratio");
        for i in 0..n_bins {
            println!(
                "{:<14} {:>8} {:>7.2}%",
                format!("{:.0}-{:.0} deg", edges[i], edges[i + 1]),
                counts[i],
                100.0 * counts[i] as f64 / all_tilts.len() as f64
            );
        }
    }
    Ok(())
}

fn cmd_remap(args: RemapArgs) -> Result<(), Error> {
    let intr = ingest::read_intrinsics_csv(&args.intrinsics)?;
    let out_size = parse_size(&args.out_size)?;
    let table = ingest::build_remap_table(&intr, out_size)?;
    ingest::write_remap(&args.out, &table)?;
    println!(
        "remap table {}x{} ({} -> {}) -> {}",
        table.out_width,
        table.out_height,
        format_args!("{}x{}", intr.width, intr.height),
        args.out_size,
        args.out.display()
    );
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<(), Error> {
    let report = grad_check(args.seed, args.configs)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).unwrap());
    } else {
        println!(
            "{} configs, {} parameters, max relative error {:.3e} (threshold {:.0e})",
            report.configs, report.params_checked, report.max_rel_err, report.threshold
        );
    }
    if !report.passed() {
        return Err(Error::NumericCheckFailed(format!(
            "max relative error {:.3e} exceeds {:.0e}",
            report.max_rel_err, report.threshold
        )));
    }
    Ok(())
}
