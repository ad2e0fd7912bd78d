//! `pedlink` command-line surface.
//!
//! Exit codes: 0 success, 1 infeasible or empty result, 2 usage, format or
//! input error. Errors go to stderr as `pedlink: error[<code>]: <message>`;
//! stdout carries only the JSON or summary lines each command declares.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::codec::{decode_sequence, encode_sequence, QualityLevel};
use crate::detector::{scenario_profile, DegradationDetector, Detector, DetectorProfile, FileDetector};
use crate::eval::{find_threshold, read_sweep_csv, run_sweep, write_sweep_csv, MatchRule, SweepOptions, SweepRecord, DEFAULT_MATCH_IOU};
use crate::exec::Execution;
use crate::frameio::{read_annotations, read_detections, read_y4m, write_annotations, write_y4m, Fps};
use crate::link::{simulate_stream, AdaptivePolicy, ControllerPolicy, LinkConfig, DEFAULT_STEP};
use crate::metrics::{average_psnr, required_bandwidth, PsnrDb};
use crate::synth::{scene, SceneConfig};
use crate::{Error, Result};

pub const DEFAULT_GRID: &str = "0,10,20,30,33,35,37,40,50,51";

#[derive(Debug, Parser)]
#[command(name = "pedlink", version, about = "Compression vs. pedestrian-detection accuracy toolkit")]
pub struct Cli {
    /// Seed for every stochastic component.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode a Y4M video at one quality level.
    Compress(CompressArgs),
    /// Evaluate detection accuracy and bandwidth over a quality grid.
    Sweep(SweepArgs),
    /// Pick the cheapest sweep row meeting an accuracy floor.
    Threshold(ThresholdArgs),
    /// Simulate streaming a video over a capacity-limited link.
    Stream(StreamArgs),
    /// Generate a synthetic video with ground truth.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct CompressArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub crf: u8,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the decoded video.
    #[arg(long)]
    pub decoded: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["detections", "profile"])))]
pub struct SweepArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Replay detections from a JSONL file.
    #[arg(long)]
    pub detections: Option<PathBuf>,
    /// Simulated detector: `scenario1`, `scenario2` or a profile JSON path.
    #[arg(long)]
    pub profile: Option<String>,
    #[arg(long, default_value = DEFAULT_GRID)]
    pub grid: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Count frames with unmatched detections as correct.
    #[arg(long)]
    pub allow_fp: bool,
    #[arg(long, default_value_t = DEFAULT_MATCH_IOU)]
    pub match_iou: f64,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    #[arg(long)]
    pub sweep: PathBuf,
    #[arg(long)]
    pub floor: f64,
}

#[derive(Debug, Args)]
pub struct StreamArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub capacity_mbps: f64,
    /// `fixed:<crf>` or `adaptive:<psnr floor dB>`.
    #[arg(long)]
    pub policy: String,
    #[arg(long)]
    pub budget_s: f64,
    #[arg(long)]
    pub queue_limit_bits: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_STEP)]
    pub step_up: u8,
    #[arg(long, default_value_t = DEFAULT_STEP)]
    pub step_down: u8,
    /// Profile used for the accuracy estimate.
    #[arg(long, default_value = "scenario1")]
    pub profile: String,
    /// Per-frame trace CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    pub frames: usize,
    #[arg(long, default_value_t = 160)]
    pub width: u32,
    #[arg(long, default_value_t = 96)]
    pub height: u32,
    #[arg(long, default_value_t = 10)]
    pub fps: u32,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Infeasible(_) | Error::EmptyInput(_) => 1,
        _ => 2,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(&cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "pedlink: error[{}]: {e}", e.code());
            exit_code(&e)
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn emit(out: &mut dyn Write, line: &str) -> Result<()> {
    writeln!(out, "{line}").map_err(Error::from)
}

pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Compress(a) => cmd_compress(a, out),
        Command::Sweep(a) => cmd_sweep(a, cli.seed, out, err),
        Command::Threshold(a) => cmd_threshold(a, out),
        Command::Stream(a) => cmd_stream(a, cli.seed, out),
        Command::Synth(a) => cmd_synth(a, cli.seed, out),
    }
}

#[derive(Serialize)]
struct CompressSummary {
    size_bits: u64,
    avg_psnr_db: PsnrDb,
    bandwidth_mbps: f64,
}

fn cmd_compress(a: &CompressArgs, out: &mut dyn Write) -> Result<i32> {
    let seq = read_y4m(&read_file(&a.input)?)?;
    let q = QualityLevel::new(a.crf)?;
    let encoded = encode_sequence(&seq, q)?;
    let decoded = decode_sequence(&encoded.frames, seq.fps(), Execution::default())?;
    let avg = average_psnr(&seq, &decoded)?;
    let bw = required_bandwidth(encoded.total_size_bits, seq.duration_s())?;
    write_file(&a.out, &encoded.to_bytes())?;
    if let Some(path) = &a.decoded {
        write_file(path, &write_y4m(&decoded))?;
    }
    let summary = CompressSummary {
        size_bits: encoded.total_size_bits,
        avg_psnr_db: avg.value,
        bandwidth_mbps: bw.bandwidth_mbps,
    };
    emit(out, &serde_json::to_string(&summary).expect("summary serializes"))?;
    Ok(0)
}

/// Parses a comma-separated crf list, returning sorted unique levels and
/// whether duplicates were dropped.
pub fn parse_grid(grid: &str) -> Result<(Vec<QualityLevel>, bool)> {
    let mut levels = Vec::new();
    for part in grid.split(',') {
        let part = part.trim();
        let crf: u8 = part
            .parse()
            .map_err(|_| Error::Config(format!("grid entry `{part}` is not a crf")))?;
        levels.push(QualityLevel::new(crf)?);
    }
    let n = levels.len();
    levels.sort();
    levels.dedup();
    Ok((levels.clone(), levels.len() != n))
}

/// Built-in scenario name or a profile JSON file.
pub fn load_profile(spec: &str) -> Result<DetectorProfile> {
    match spec {
        "scenario1" | "scenario2" => scenario_profile(spec),
        path => DetectorProfile::from_json(&read_file(Path::new(path))?),
    }
}

fn cmd_sweep(a: &SweepArgs, seed: u64, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let seq = read_y4m(&read_file(&a.input)?)?;
    if seq.is_empty() {
        return Err(Error::EmptyInput("input video has no frames"));
    }
    let gt = read_annotations(&read_file(&a.gt)?)?;
    let (grid, had_duplicates) = parse_grid(&a.grid)?;
    if had_duplicates {
        writeln!(err, "pedlink: warning: duplicate grid entries removed")?;
    }
    let detector: Box<dyn Detector> = match (&a.detections, &a.profile) {
        (Some(path), _) => Box::new(FileDetector::new(&read_detections(&read_file(path)?)?)?),
        (None, Some(spec)) => {
            let mut profile = load_profile(spec)?;
            profile.seed = seed;
            Box::new(DegradationDetector::new(profile, &gt, seq.width(), seq.height())?)
        }
        (None, None) => return Err(Error::Config("need --detections or --profile".into())),
    };
    let opts = SweepOptions {
        rule: MatchRule {
            match_iou: a.match_iou,
            allow_fp: a.allow_fp,
        },
        exec: Execution::default(),
    };
    let records = run_sweep(&seq, &gt, detector.as_ref(), &grid, opts)?;
    write_file(&a.out, write_sweep_csv(&records).as_bytes())?;
    for r in &records {
        emit(
            out,
            &format!(
                "crf={} avg_psnr_db={} accuracy_percent={:.6} bandwidth_mbps={:.6}",
                r.crf,
                r.avg_psnr.to_fixed(),
                r.accuracy.accuracy_percent,
                r.bandwidth.bandwidth_mbps
            ),
        )?;
    }
    Ok(0)
}

#[derive(Serialize)]
pub struct ThresholdSummary {
    pub crf: QualityLevel,
    pub avg_psnr_db: PsnrDb,
    pub accuracy_percent: f64,
    pub correct_frames: usize,
    pub total_frames: usize,
    pub size_bits: u64,
    pub duration_s: f64,
    pub bandwidth_mbps: f64,
    /// Crf of the highest-bandwidth row, the reduction reference.
    pub reference_crf: QualityLevel,
    pub reference_bandwidth_mbps: f64,
    /// `reference_bandwidth / bandwidth`; null when the selected row is free.
    pub reduction_factor: Option<f64>,
}

pub fn threshold_summary(records: &[SweepRecord], floor: f64) -> Result<ThresholdSummary> {
    let chosen = find_threshold(records, floor)?;
    let reference = records
        .iter()
        .max_by(|a, b| a.bandwidth.bandwidth_mbps.total_cmp(&b.bandwidth.bandwidth_mbps))
        .expect("find_threshold rejects empty input");
    let bw = chosen.bandwidth.bandwidth_mbps;
    Ok(ThresholdSummary {
        crf: chosen.crf,
        avg_psnr_db: chosen.avg_psnr,
        accuracy_percent: chosen.accuracy.accuracy_percent,
        correct_frames: chosen.accuracy.correct_frames,
        total_frames: chosen.accuracy.total_frames,
        size_bits: chosen.bandwidth.size_bits,
        duration_s: chosen.bandwidth.duration_s,
        bandwidth_mbps: bw,
        reference_crf: reference.crf,
        reference_bandwidth_mbps: reference.bandwidth.bandwidth_mbps,
        reduction_factor: (bw > 0.0).then(|| reference.bandwidth.bandwidth_mbps / bw),
    })
}

fn cmd_threshold(a: &ThresholdArgs, out: &mut dyn Write) -> Result<i32> {
    let text = String::from_utf8(read_file(&a.sweep)?).map_err(|_| Error::Schema {
        line: 0,
        msg: "sweep CSV is not UTF-8".into(),
    })?;
    let records = read_sweep_csv(&text)?;
    let summary = threshold_summary(&records, a.floor)?;
    emit(out, &serde_json::to_string(&summary).expect("summary serializes"))?;
    Ok(0)
}

pub fn parse_policy(spec: &str, step_up: u8, step_down: u8) -> Result<ControllerPolicy> {
    let bad = || Error::Config(format!("policy `{spec}` is not fixed:<crf> or adaptive:<floor>"));
    let (kind, value) = spec.split_once(':').ok_or_else(bad)?;
    match kind {
        "fixed" => {
            let crf: u8 = value.parse().map_err(|_| bad())?;
            Ok(ControllerPolicy::Fixed(QualityLevel::new(crf)?))
        }
        "adaptive" => {
            let floor: f64 = value.parse().map_err(|_| bad())?;
            if !floor.is_finite() {
                return Err(bad());
            }
            Ok(ControllerPolicy::Adaptive(AdaptivePolicy {
                step_up,
                step_down,
                ..AdaptivePolicy::with_floor(floor)
            }))
        }
        _ => Err(bad()),
    }
}

fn cmd_stream(a: &StreamArgs, _seed: u64, out: &mut dyn Write) -> Result<i32> {
    let policy = parse_policy(&a.policy, a.step_up, a.step_down)?;
    let profile = load_profile(&a.profile)?;
    let seq = read_y4m(&read_file(&a.input)?)?;
    let cfg = LinkConfig::new(a.capacity_mbps, seq.fps().as_f64(), a.queue_limit_bits, a.budget_s)?;
    let report = simulate_stream(&seq, &cfg, policy, Some(&profile))?;
    if let Some(path) = &a.trace {
        write_file(path, report.trace_csv().as_bytes())?;
    }
    emit(out, &report.to_json())?;
    Ok(0)
}

fn cmd_synth(a: &SynthArgs, seed: u64, out: &mut dyn Write) -> Result<i32> {
    let cfg = SceneConfig {
        width: a.width,
        height: a.height,
        frames: a.frames,
        fps: Fps::new(a.fps, 1)?,
        seed,
    };
    let (seq, gt) = scene(&cfg)?;
    write_file(&a.out, &write_y4m(&seq))?;
    write_file(&a.gt, &write_annotations(&gt))?;
    emit(out, &format!("{{\"frames\":{},\"width\":{},\"height\":{}}}", seq.len(), seq.width(), seq.height()))?;
    Ok(0)
}
