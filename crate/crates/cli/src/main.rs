//! Command-line driver: process frames through any method combination,
//! synthesize oracle scenes, benchmark the seven combinations, tune the
//! Kalman noise parameters, and export per-frame intermediates for plotting.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors. All
//! randomness flows from explicit `--seed` flags.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use radarpipe::ingest::{
    load_frames, synthesize_scene, write_frames, FileFormat, FrameSet, SceneConfig, Trajectory,
};
use radarpipe::pipeline::{benchmark, run_pipeline, FrameIntermediates, PipelineConfig};
use radarpipe::selection::scores_to_csv;
use radarpipe::tracking::steps_to_csv;
use radarpipe::tuning::{default_kf_bounds, tune_kf, BoConfig};
use radarpipe::MethodSet;

#[derive(Parser)]
#[command(
    name = "radarpipe",
    version,
    about = "Sparse radar point-cloud preprocessing pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a method combination over a frame file
    Process(ProcessArgs),
    /// Generate a synthetic scene with oracle ground truth
    Synth(SynthArgs),
    /// Time all seven method combinations
    Bench(BenchArgs),
    /// Tune the Kalman noise parameters by Bayesian optimization
    Tune(TuneArgs),
    /// Export one frame's intermediates as CSV for plotting
    Inspect(InspectArgs),
}

/// Stage parameters shared by every data-processing subcommand. Every flag
/// can also come from a `key=value` config file; explicit flags win.
#[derive(Args, Clone, Default)]
struct PipelineFlags {
    /// Config file with one key=value per line ('#' starts a comment)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Segments per frame (default 5)
    #[arg(long)]
    segments: Option<usize>,
    /// Null-removal L2 threshold in meters (default 0.001)
    #[arg(long)]
    null_threshold: Option<f64>,
    /// DBSCAN neighborhood radius (default 0.4)
    #[arg(long)]
    eps: Option<f64>,
    /// DBSCAN core-point neighborhood size (default 6)
    #[arg(long)]
    min_samples: Option<usize>,
    /// Vertical weight on the clustering metric (default 0.25)
    #[arg(long)]
    alpha: Option<f64>,
    /// Kalman process-noise scale (default 29.41)
    #[arg(long)]
    q: Option<f64>,
    /// Kalman measurement-noise scale (default 0.081)
    #[arg(long)]
    r: Option<f64>,
    /// Kalman initial covariance scale (default 14.64)
    #[arg(long)]
    p0: Option<f64>,
    /// Kalman gating distance in meters (default 2.0)
    #[arg(long)]
    gate: Option<f64>,
    /// Kalman time step per segment (default 1.0)
    #[arg(long)]
    dt: Option<f64>,
    /// Grid cell size for the standalone hg/km+hg proxies (default 0.5)
    #[arg(long)]
    grid_cell: Option<f64>,
    /// Worker cap: 1 = serial (default), 0 = machine parallelism
    #[arg(long)]
    threads: Option<usize>,
    /// Expected points per frame; inferred from the file when omitted
    #[arg(long)]
    frame_size: Option<usize>,
}

#[derive(Args)]
struct ProcessArgs {
    /// Input frame file (.jsonl or .csv)
    #[arg(long)]
    input: PathBuf,
    /// Output frame file; a report lands next to it as <output>.report.json
    #[arg(long)]
    output: PathBuf,
    /// Comma list over {ds,hg,km}, e.g. "ds,hg"
    #[arg(long)]
    methods: Option<String>,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

#[derive(Args)]
struct SynthArgs {
    /// Output frame file; ground truth lands next to it as <output>.truth.jsonl
    #[arg(long)]
    output: PathBuf,
    /// Ground-truth output path override
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Number of frames
    #[arg(long, default_value_t = 10)]
    frames: usize,
    /// Points per frame including padding
    #[arg(long, default_value_t = 1100)]
    frame_size: usize,
    /// Human returns per frame: a single count or an inclusive "LO..HI" range
    #[arg(long, default_value = "60..300")]
    human: String,
    /// Diffuse clutter returns per frame
    #[arg(long, default_value_t = 60)]
    clutter: usize,
    /// Dense clutter objects (each forms a persistent cluster)
    #[arg(long, default_value_t = 0)]
    blobs: usize,
    /// Returns per clutter object per frame
    #[arg(long, default_value_t = 60)]
    blob_points: usize,
    /// Make clutter objects visible only on part of each frame's timeline
    #[arg(long)]
    transient_clutter: bool,
    /// Body motion: stationary, linear, or sinusoidal
    #[arg(long, default_value = "linear")]
    trajectory: String,
    /// Body speed in meters per frame
    #[arg(long, default_value_t = 0.05)]
    speed: f64,
    /// Gaussian spread of human returns in meters
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    /// Omit ground-truth keypoints from the frames
    #[arg(long)]
    no_keypoints: bool,
    /// RNG seed; identical seeds give byte-identical outputs
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// Input frame file
    #[arg(long)]
    input: PathBuf,
    /// Repetitions per method set (at least 3)
    #[arg(long, default_value_t = 5)]
    reps: usize,
    /// Output CSV path; stdout when omitted
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

#[derive(Args)]
struct TuneArgs {
    /// Input frame file
    #[arg(long)]
    input: PathBuf,
    /// Total objective evaluations, space-filling ones included
    #[arg(long, default_value_t = 30)]
    iterations: usize,
    /// Space-filling evaluations before the surrogate starts
    #[arg(long, default_value_t = 5)]
    initial_samples: usize,
    /// Frames sampled for the objective
    #[arg(long, default_value_t = 32)]
    sample_frames: usize,
    /// Search box for q as "LO,HI"
    #[arg(long, default_value = "0.01,100")]
    q_bounds: String,
    /// Search box for r as "LO,HI"
    #[arg(long, default_value = "0.001,10")]
    r_bounds: String,
    /// Search box for p0 as "LO,HI"
    #[arg(long, default_value = "0.01,100")]
    p0_bounds: String,
    /// Trace CSV output path
    #[arg(long, default_value = "bo_trace.csv")]
    trace: PathBuf,
    /// Best-parameters JSON output path
    #[arg(long, default_value = "bo_best.json")]
    best: PathBuf,
    /// RNG seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InspectWhat {
    Segments,
    Clusters,
    Costs,
    Tracks,
    Scores,
}

#[derive(Args)]
struct InspectArgs {
    /// Input frame file
    #[arg(long)]
    input: PathBuf,
    /// Frame to inspect
    #[arg(long)]
    frame_id: u64,
    /// Which intermediate to export
    #[arg(long, value_enum)]
    what: InspectWhat,
    /// Directory for the CSV output
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Method combination driving the intermediates
    #[arg(long)]
    methods: Option<String>,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

enum CliError {
    Usage(String),
    Data(String),
}

impl From<radarpipe::Error> for CliError {
    fn from(e: radarpipe::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

type CliResult = Result<(), CliError>;

fn main() {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Command::Process(args) => cmd_process(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Tune(args) => cmd_tune(args),
        Command::Inspect(args) => cmd_inspect(args),
    };
    match result {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            std::process::exit(1);
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
    }
}

fn cmd_process(args: ProcessArgs) -> CliResult {
    let (config, frame_size, file_methods) = resolve_pipeline(&args.pipeline)?;
    let methods = resolve_methods(args.methods.as_deref(), file_methods, MethodSet::FULL)?;
    let config = PipelineConfig { methods, ..config };

    let set = load_input(&args.input, frame_size)?;
    let (processed, report) = run_pipeline(&set, &config)?;
    write_frames(&processed, &args.output, FileFormat::from_path(&args.output))?;

    let report_path = PathBuf::from(format!("{}.report.json", args.output.display()));
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&report_path, json)
        .map_err(|e| CliError::Data(format!("{}: {e}", report_path.display())))?;
    println!(
        "processed {} frames with {}; mean retained points {:.1}",
        report.frames_processed, report.methods, report.mean_retained_points
    );
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> CliResult {
    let human = parse_range(&args.human)
        .map_err(|e| CliError::Usage(format!("--human: {e}")))?;
    let trajectory: Trajectory = args
        .trajectory
        .parse()
        .map_err(|e: String| CliError::Usage(format!("--trajectory: {e}")))?;
    let config = SceneConfig {
        num_frames: args.frames,
        frame_size: args.frame_size,
        human_points: human,
        clutter_points: args.clutter,
        clutter_blobs: args.blobs,
        blob_points: args.blob_points,
        transient_clutter: args.transient_clutter,
        trajectory,
        speed: args.speed,
        noise_sigma: args.noise,
        with_keypoints: !args.no_keypoints,
        seed: args.seed,
    };
    let (set, truth) = synthesize_scene(&config)?;
    write_frames(&set, &args.output, FileFormat::from_path(&args.output))?;
    let truth_path = args
        .truth
        .unwrap_or_else(|| args.output.with_extension("truth.jsonl"));
    truth.write_jsonl(&truth_path)?;
    println!(
        "wrote {} frames to {} (truth: {})",
        set.len(),
        args.output.display(),
        truth_path.display()
    );
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> CliResult {
    if args.reps < 3 {
        return Err(CliError::Usage(format!(
            "--reps must be at least 3, got {}",
            args.reps
        )));
    }
    let (config, frame_size, _) = resolve_pipeline(&args.pipeline)?;
    let set = load_input(&args.input, frame_size)?;
    let table = benchmark(&set, &MethodSet::ALL_COMBINATIONS, args.reps, &config)?;
    let csv = table.to_csv();
    match &args.output {
        Some(path) => fs::write(path, csv)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_tune(args: TuneArgs) -> CliResult {
    let (config, frame_size, _) = resolve_pipeline(&args.pipeline)?;
    let mut bounds = default_kf_bounds();
    for (i, (flag, text)) in [
        ("--q-bounds", &args.q_bounds),
        ("--r-bounds", &args.r_bounds),
        ("--p0-bounds", &args.p0_bounds),
    ]
    .into_iter()
    .enumerate()
    {
        bounds[i] = parse_bounds(text).map_err(|e| CliError::Usage(format!("{flag}: {e}")))?;
    }
    let bo_config = BoConfig {
        iterations: args.iterations,
        initial_samples: args.initial_samples,
        ..BoConfig::new(bounds, args.seed)
    };

    let set = load_input(&args.input, frame_size)?;
    let (trace, best) = tune_kf(
        &set,
        &config.kalman,
        &config.segmentation,
        &config.dbscan,
        &bo_config,
        args.sample_frames,
    )?;

    fs::write(&args.trace, trace.to_csv(&["q", "r", "p0"]))
        .map_err(|e| CliError::Data(format!("{}: {e}", args.trace.display())))?;
    let best_json = serde_json::json!({
        "q": best.q,
        "r": best.r,
        "p0": best.p0,
        "gate": best.gate,
        "dt": best.dt,
        "objective": trace.best_value,
    });
    fs::write(
        &args.best,
        serde_json::to_string_pretty(&best_json).expect("params serialize"),
    )
    .map_err(|e| CliError::Data(format!("{}: {e}", args.best.display())))?;
    println!(
        "best objective {:.6} at q={:.4} r={:.4} p0={:.4}",
        trace.best_value, best.q, best.r, best.p0
    );
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> CliResult {
    let (config, frame_size, file_methods) = resolve_pipeline(&args.pipeline)?;
    let methods = resolve_methods(args.methods.as_deref(), file_methods, MethodSet::FULL)?;
    let set = load_input(&args.input, frame_size)?;
    let frame = set
        .frames
        .iter()
        .find(|f| f.frame_id == args.frame_id)
        .ok_or_else(|| CliError::Data(format!("frame {} not found in input", args.frame_id)))?;

    let single = FrameSet {
        frames: vec![frame.clone()],
        meta: set.meta.clone(),
    };
    let config = PipelineConfig {
        methods,
        emit_intermediates: true,
        threads: 1,
        ..config
    };
    let (_, report) = run_pipeline(&single, &config)?;
    let outputs = report
        .per_frame_outputs
        .expect("intermediates were requested");
    let frame_out = &outputs[0];

    fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.out_dir.display())))?;
    let written = export_intermediates(frame_out, args.what, &args.out_dir)?;
    for path in written {
        println!("{}", path.display());
    }
    Ok(())
}

fn export_intermediates(
    frame: &FrameIntermediates,
    what: InspectWhat,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    let mut write = |name: String, contents: String| -> Result<(), CliError> {
        let path = out_dir.join(name);
        fs::write(&path, contents)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        written.push(path);
        Ok(())
    };

    match what {
        InspectWhat::Segments => {
            let mut csv = String::from("segment_index,point_index,x,y,z\n");
            for segment in &frame.segments {
                for (p, idx) in segment.points.iter().zip(&segment.indices) {
                    csv.push_str(&format!(
                        "{},{},{},{},{}\n",
                        segment.segment_index, idx, p.x, p.y, p.z
                    ));
                }
            }
            write(format!("frame_{}_segments.csv", frame.frame_id), csv)?;
        }
        InspectWhat::Clusters => {
            let mut csv = String::from("segment_index,point_index,x,y,z,label\n");
            for (segment, labeling) in frame.segments.iter().zip(&frame.labelings) {
                for ((p, idx), label) in segment
                    .points
                    .iter()
                    .zip(&segment.indices)
                    .zip(&labeling.labels)
                {
                    csv.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        segment.segment_index, idx, p.x, p.y, p.z, label
                    ));
                }
            }
            write(format!("frame_{}_clusters.csv", frame.frame_id), csv)?;
        }
        InspectWhat::Costs => {
            for (t, matrix) in frame.cost_matrices.iter().enumerate() {
                write(
                    format!("frame_{}_costs_{}_{}.csv", frame.frame_id, t, t + 1),
                    matrix.to_csv(),
                )?;
            }
        }
        InspectWhat::Tracks => {
            let mut csv = String::from(
                "track_id,segment_index,points,centroid_x,centroid_y,centroid_z\n",
            );
            for track in &frame.tracks {
                for node in &track.nodes {
                    let c = node.cluster.centroid;
                    csv.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        track.track_id,
                        node.segment_index,
                        node.cluster.len(),
                        c.x,
                        c.y,
                        c.z
                    ));
                }
            }
            write(format!("frame_{}_tracks.csv", frame.frame_id), csv)?;
            for (track, steps) in frame.tracks.iter().zip(&frame.steps) {
                if !steps.is_empty() {
                    write(
                        format!("frame_{}_track_{}_steps.csv", frame.frame_id, track.track_id),
                        steps_to_csv(steps),
                    )?;
                }
            }
        }
        InspectWhat::Scores => {
            write(
                format!("frame_{}_scores.csv", frame.frame_id),
                scores_to_csv(&frame.scores, &frame.selected_track_ids),
            )?;
        }
    }
    Ok(written)
}

fn load_input(path: &Path, frame_size: Option<usize>) -> Result<FrameSet, CliError> {
    Ok(load_frames(path, FileFormat::from_path(path), frame_size)?)
}

fn resolve_methods(
    flag: Option<&str>,
    from_file: Option<MethodSet>,
    default: MethodSet,
) -> Result<MethodSet, CliError> {
    match flag {
        Some(text) => MethodSet::parse(text).map_err(CliError::Usage),
        None => Ok(from_file.unwrap_or(default)),
    }
}

/// Merges the config file (when given) under the explicit flags and returns
/// the pipeline configuration, the expected frame size, and any method set
/// the file named.
fn resolve_pipeline(
    flags: &PipelineFlags,
) -> Result<(PipelineConfig, Option<usize>, Option<MethodSet>), CliError> {
    let file = match &flags.config {
        Some(path) => read_config_file(path)?,
        None => HashMap::new(),
    };

    let mut config = PipelineConfig::default();
    let mut frame_size = flags.frame_size;
    let mut methods = None;

    for (key, value) in &file {
        match key.as_str() {
            "segments" => config.segmentation.num_segments = parse_key(key, value)?,
            "null_threshold" => config.segmentation.null_threshold = parse_key(key, value)?,
            "eps" => config.dbscan.eps = parse_key(key, value)?,
            "min_samples" => config.dbscan.min_samples = parse_key(key, value)?,
            "alpha" => config.dbscan.alpha = parse_key(key, value)?,
            "q" => config.kalman.q = parse_key(key, value)?,
            "r" => config.kalman.r = parse_key(key, value)?,
            "p0" => config.kalman.p0 = parse_key(key, value)?,
            "gate" => config.kalman.gate = parse_key(key, value)?,
            "dt" => config.kalman.dt = parse_key(key, value)?,
            "grid_cell" => config.grid_cell = parse_key(key, value)?,
            "threads" => config.threads = parse_key(key, value)?,
            "frame_size" => {
                if frame_size.is_none() {
                    frame_size = Some(parse_key(key, value)?);
                }
            }
            "methods" => {
                methods = Some(MethodSet::parse(value).map_err(CliError::Usage)?);
            }
            other => {
                return Err(CliError::Usage(format!(
                    "unknown config key \"{other}\" in {}",
                    flags.config.as_ref().unwrap().display()
                )))
            }
        }
    }

    // Explicit flags override file entries.
    if let Some(v) = flags.segments {
        config.segmentation.num_segments = v;
    }
    if let Some(v) = flags.null_threshold {
        config.segmentation.null_threshold = v;
    }
    if let Some(v) = flags.eps {
        config.dbscan.eps = v;
    }
    if let Some(v) = flags.min_samples {
        config.dbscan.min_samples = v;
    }
    if let Some(v) = flags.alpha {
        config.dbscan.alpha = v;
    }
    if let Some(v) = flags.q {
        config.kalman.q = v;
    }
    if let Some(v) = flags.r {
        config.kalman.r = v;
    }
    if let Some(v) = flags.p0 {
        config.kalman.p0 = v;
    }
    if let Some(v) = flags.gate {
        config.kalman.gate = v;
    }
    if let Some(v) = flags.dt {
        config.kalman.dt = v;
    }
    if let Some(v) = flags.grid_cell {
        config.grid_cell = v;
    }
    if let Some(v) = flags.threads {
        config.threads = v;
    }

    Ok((config, frame_size, methods))
}

fn parse_key<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| CliError::Usage(format!("config key \"{key}\": {e}")))
}

fn read_config_file(path: &Path) -> Result<HashMap<String, String>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut map = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Usage(format!(
                "{}:{}: expected key=value, got \"{raw}\"",
                path.display(),
                i + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Parses "N" or an inclusive "LO..HI" range.
fn parse_range(text: &str) -> Result<(usize, usize), String> {
    if let Some((lo, hi)) = text.split_once("..") {
        let lo = lo.trim().parse().map_err(|e| format!("bad low bound: {e}"))?;
        let hi = hi
            .trim_start_matches('=')
            .trim()
            .parse()
            .map_err(|e| format!("bad high bound: {e}"))?;
        Ok((lo, hi))
    } else {
        let n = text.trim().parse().map_err(|e| format!("bad count: {e}"))?;
        Ok((n, n))
    }
}

/// Parses "LO,HI".
fn parse_bounds(text: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = text
        .split_once(',')
        .ok_or_else(|| format!("expected LO,HI, got \"{text}\""))?;
    let lo = lo.trim().parse().map_err(|e| format!("bad low bound: {e}"))?;
    let hi = hi.trim().parse().map_err(|e| format!("bad high bound: {e}"))?;
    Ok((lo, hi))
}
