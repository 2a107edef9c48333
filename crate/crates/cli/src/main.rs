//! `pts`: synthesize benchmark sequences, run the tracker, and evaluate.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use pts_core::data::{
    format_predictions, format_results, load_config, load_sequence, parse_groundtruth, parse_predictions,
    parse_results, record_from_results, GROUNDTRUTH_FILE, PREDICTIONS_FILE, RESULTS_FILE,
};
use pts_core::metrics::{summarize_after, SummaryReport};
use pts_core::pipeline::{SequenceRunner, TrackerConfig, TrackerMode};
use pts_core::synth::{self, ScenarioSpec};

const SUMMARY_FILE: &str = "summary.json";

#[derive(Parser)]
#[command(name = "pts", version, about = "Prediction-driven single-object tracker")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed for synthetic sequence generation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Tracker configuration file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Number of sequences processed in parallel.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic sequence with ground truth and point matches.
    Synth(SynthArgs),
    /// Track one or more sequence directories.
    Track(TrackArgs),
    /// Score results against ground truth.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Built-in scenario name (see --list).
    #[arg(long, conflicts_with = "spec", required_unless_present_any = ["spec", "list"])]
    scenario: Option<String>,
    /// Scenario spec file (JSON).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output directory.
    #[arg(long, required_unless_present = "list")]
    out: Option<PathBuf>,
    /// Print the built-in scenario names and exit.
    #[arg(long)]
    list: bool,
}

#[derive(Args)]
struct TrackArgs {
    /// Sequence directories; results are written into each.
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    /// Overrides the mode from the config file.
    #[arg(long)]
    mode: Option<TrackerMode>,
}

#[derive(Args)]
struct EvalArgs {
    /// Sequence directories holding ground truth.
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    /// Results file, for a single sequence. Defaults to `<dir>/results.txt`.
    #[arg(long)]
    results: Option<PathBuf>,
    /// Frames excluded from the prediction errors.
    #[arg(long, default_value_t = 0)]
    burn_in: usize,
}

/// Errors that map to exit status 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Per-sequence failures that have already been printed.
#[derive(Debug)]
struct Reported(usize);

impl std::fmt::Display for Reported {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} sequence(s) failed", self.0)
    }
}

impl std::error::Error for Reported {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !e.is::<Reported>() {
                eprintln!("error: {e:#}");
            }
            if e.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&cli.global, a),
        Command::Track(a) => cmd_track(&cli.global, a),
        Command::Eval(a) => cmd_eval(&cli.global, a),
    }
}

fn cmd_synth(g: &Global, a: SynthArgs) -> Result<()> {
    if a.list {
        for (name, _) in synth::standard_suite() {
            println!("{name}");
        }
        return Ok(());
    }
    let spec: ScenarioSpec = match (&a.scenario, &a.spec) {
        (Some(name), _) => synth::scenario(name).ok_or_else(|| {
            let known: Vec<_> = synth::standard_suite().into_iter().map(|(n, _)| n).collect();
            UsageError(format!("unknown scenario `{name}` (known: {})", known.join(", ")))
        })?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            synth::parse_spec(&text).with_context(|| format!("in {}", path.display()))?
        }
        (None, None) => unreachable!("clap requires --scenario or --spec"),
    };
    let out = a.out.expect("clap requires --out");
    let (frames, truth) = synth::generate(&spec, g.seed)?;
    synth::write_sequence(&out, &frames, &truth).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {} frames to {}", frames.len(), out.display());
    Ok(())
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| anyhow!("thread pool: {e}"))
}

fn cmd_track(g: &Global, a: TrackArgs) -> Result<()> {
    let mut cfg = match &g.config {
        Some(p) => load_config(p).with_context(|| format!("loading {}", p.display()))?,
        None => TrackerConfig::default(),
    };
    if let Some(m) = a.mode {
        cfg = cfg.with_mode(m);
    }
    let outcomes: Vec<Result<()>> = pool(g.jobs)?.install(|| {
        a.dirs
            .par_iter()
            .map(|d| track_dir(d, &cfg).with_context(|| format!("tracking {}", d.display())))
            .collect()
    });
    let mut failed = 0;
    for (dir, r) in a.dirs.iter().zip(outcomes) {
        match r {
            Ok(()) => println!("{}: {} -> {}", dir.display(), cfg.mode, dir.join(RESULTS_FILE).display()),
            Err(e) => {
                eprintln!("error: {e:#}");
                failed += 1;
            }
        }
    }
    finish(failed)
}

fn track_dir(dir: &Path, cfg: &TrackerConfig) -> Result<()> {
    let seq = load_sequence(dir)?;
    if seq.is_empty() {
        return Err(anyhow!("no frames in {}", dir.display()));
    }
    let mut runner = SequenceRunner::new(cfg.clone())?;
    for t in 0..seq.len() {
        let frame = seq.load_frame(t)?;
        let matches = seq.load_matches(t)?;
        runner.push(&frame, &seq.groundtruth[t], &matches)?;
    }
    let record = runner.finish();
    fs::write(dir.join(RESULTS_FILE), format_results(&record))?;
    fs::write(dir.join(PREDICTIONS_FILE), format_predictions(&record))?;
    Ok(())
}

fn cmd_eval(g: &Global, a: EvalArgs) -> Result<()> {
    if a.results.is_some() && a.dirs.len() > 1 {
        return Err(UsageError("--results needs exactly one sequence directory".into()).into());
    }
    let outcomes: Vec<Result<SummaryReport>> = pool(g.jobs)?.install(|| {
        a.dirs
            .par_iter()
            .map(|d| eval_dir(d, a.results.as_deref(), a.burn_in).with_context(|| format!("evaluating {}", d.display())))
            .collect()
    });
    let mut failed = 0;
    for (dir, r) in a.dirs.iter().zip(outcomes) {
        match r {
            Ok(report) => println!("{}: {}", dir.display(), serde_json::to_string(&report)?),
            Err(e) => {
                eprintln!("error: {e:#}");
                failed += 1;
            }
        }
    }
    finish(failed)
}

fn finish(failed: usize) -> Result<()> {
    if failed > 0 {
        Err(Reported(failed).into())
    } else {
        Ok(())
    }
}

fn eval_dir(dir: &Path, results: Option<&Path>, burn_in: usize) -> Result<SummaryReport> {
    let gt_path = dir.join(GROUNDTRUTH_FILE);
    let gt = parse_groundtruth(&fs::read_to_string(&gt_path).with_context(|| format!("reading {}", gt_path.display()))?)?;
    let results_path = results.map_or_else(|| dir.join(RESULTS_FILE), Path::to_path_buf);
    let lines = parse_results(
        &fs::read_to_string(&results_path).with_context(|| format!("reading {}", results_path.display()))?,
    )?;
    // Predictions live next to the results they belong to.
    let pred_path = results_path.with_file_name(PREDICTIONS_FILE);
    let preds = if pred_path.is_file() {
        Some(parse_predictions(&fs::read_to_string(&pred_path)?)?)
    } else {
        None
    };
    let record = record_from_results(&lines, preds.as_deref())?;
    let mut report = summarize_after(&record, &gt, burn_in)?;
    if preds.is_none() {
        report.mean_position_error = None;
        report.mean_velocity_error = None;
    }
    let out = results_path.with_file_name(SUMMARY_FILE);
    fs::write(&out, serde_json::to_string_pretty(&report)?).with_context(|| format!("writing {}", out.display()))?;
    Ok(report)
}
