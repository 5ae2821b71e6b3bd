//! Subcommands of the `gauss-bandit` binary.
//!
//! Every command writes its normal output to `out` and diagnostics to `err`
//! and returns the process exit code, so they can be driven from tests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::checks::{format_table, run_checks, CheckScope};
use crate::config::{parse_config, ExperimentConfig};
use crate::harness::{aggregate_regret, fit_rate, trace_record, Experiment, HarnessError, RegretAggregate, RegretTrace};
use crate::records::{read_records, JsonlSink, RecordKind, RecordSink};

pub const EXIT_OK: i32 = 0;
/// A check failed, or a rate fit disagrees with the expected slope.
pub const EXIT_FAILED: i32 = 1;
/// Bad config, bad inputs, or output that would be overwritten.
pub const EXIT_USAGE: i32 = 2;
/// An episode stopped on a non-finite cost or iterate.
pub const EXIT_ABORT: i32 = 3;

/// Environment variable naming the default output directory of `run`.
pub const OUT_DIR_VAR: &str = "GAUSS_BANDIT_OUT";
pub const DEFAULT_OUT_DIR: &str = "results";
pub const RESULTS_FILE: &str = "results.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";

/// Half-width around the expected slope accepted by `rate`.
pub const RATE_TOLERANCE: f64 = 0.15;

#[derive(Debug, Parser)]
#[command(name = "gauss-bandit", version, about = "Bandit online convex optimization with Gaussian smoothing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every seed of an experiment config and write results.jsonl and summary.csv.
    Run {
        config: PathBuf,
        /// Output directory [default: $GAUSS_BANDIT_OUT, else ./results].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Concurrent episodes (0 = one per core).
        #[arg(long, default_value_t = 0)]
        parallelism: usize,
        /// Replace existing results in the output directory.
        #[arg(long)]
        force: bool,
    },
    /// Run the built-in verification suites.
    Check {
        #[arg(value_enum, default_value = "all")]
        scope: CheckScope,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit the decay rate of mean R/T from trace records.
    Rate {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Expected slope; exit 1 unless the 95% interval meets expected +/- 0.15.
        #[arg(long, allow_hyphen_values = true)]
        expected: Option<f64>,
        /// Smallest checkpoint used in the fit.
        #[arg(long, default_value_t = 1024)]
        min_t: u64,
        /// Write the plot CSV here instead of standard output.
        #[arg(long)]
        plot_out: Option<PathBuf>,
    },
}

pub fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match cli.command {
        Command::Run { config, out: dir, parallelism, force } => {
            let dir = dir.unwrap_or_else(default_out_dir);
            cmd_run(&config, &dir, parallelism, force, out, err)
        }
        Command::Check { scope, seed } => cmd_check(scope, seed, out, err),
        Command::Rate { inputs, expected, min_t, plot_out } => {
            cmd_rate(&inputs, expected, min_t, plot_out.as_deref(), out, err)
        }
    }
}

pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// Summary CSV: one row per checkpoint.
pub fn summary_csv(config: &ExperimentConfig, aggregate: &RegretAggregate) -> String {
    let mut s = String::from("T_checkpoint,mean_R_over_T,se,n,mode,a,b\n");
    for p in &aggregate.points {
        let se = p.se.map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{},{},{},{},{},{}\n", p.t, p.mean, se, config.n, config.mode, config.a, config.b));
    }
    s
}

pub fn cmd_run(
    config_path: &Path,
    out_dir: &Path,
    parallelism: usize,
    force: bool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let text = match fs::read_to_string(config_path) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "cannot read {}: {e}", config_path.display());
            return EXIT_USAGE;
        }
    };
    let config = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(err, "{}: {e}", config_path.display());
            return EXIT_USAGE;
        }
    };
    let results = out_dir.join(RESULTS_FILE);
    let summary = out_dir.join(SUMMARY_FILE);
    if !force && (results.exists() || summary.exists()) {
        let _ = writeln!(err, "{} already holds results; pass --force to replace them", out_dir.display());
        return EXIT_USAGE;
    }
    let experiment = match Experiment::prepare(&config) {
        Ok(e) => e,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            return EXIT_USAGE;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(parallelism).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "cannot start worker pool: {e}");
            return EXIT_USAGE;
        }
    };
    let seeds: Vec<u64> = config.episode_seeds().collect();
    let outcomes: Vec<Result<RegretTrace, HarnessError>> =
        pool.install(|| seeds.par_iter().map(|&s| experiment.run_episode(s)).collect());

    let io = |e: std::io::Error| e.to_string();
    let written = fs::create_dir_all(out_dir)
        .map_err(io)
        .and_then(|_| if results.exists() { fs::remove_file(&results).map_err(io) } else { Ok(()) })
        .and_then(|_| JsonlSink::open(&results).map_err(|e| e.to_string()));
    let mut sink = match written {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "cannot write {}: {e}", results.display());
            return EXIT_USAGE;
        }
    };
    let mut traces = Vec::with_capacity(outcomes.len());
    let mut aborted = 0;
    for outcome in outcomes {
        let trace = match outcome {
            Ok(t) => t,
            Err(HarnessError::Aborted { trace, source }) => {
                let _ = writeln!(err, "seed {}: {source}", trace.seed);
                aborted += 1;
                *trace
            }
            Err(e) => {
                let _ = writeln!(err, "{e}");
                return EXIT_USAGE;
            }
        };
        if let Err(e) = trace_record(&config, &trace).map_err(|e| e.to_string()).and_then(|r| sink.append(&r).map_err(|e| e.to_string())) {
            let _ = writeln!(err, "{e}");
            return EXIT_USAGE;
        }
        traces.push(trace);
    }
    let aggregate = aggregate_regret(&traces).expect("at least one seed with a single config");
    if let Err(e) = fs::write(&summary, summary_csv(&config, &aggregate)) {
        let _ = writeln!(err, "cannot write {}: {e}", summary.display());
        return EXIT_USAGE;
    }
    if let Some(last) = aggregate.points.last() {
        let _ = writeln!(
            out,
            "{} episodes, config {}; mean R/T at T={}: {}",
            traces.len(),
            &aggregate.config_hash[..12],
            last.t,
            last.mean
        );
    }
    if aborted > 0 {
        let _ = writeln!(err, "{aborted} episode(s) aborted");
        return EXIT_ABORT;
    }
    EXIT_OK
}

pub fn cmd_check(scope: CheckScope, seed: u64, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let rows = run_checks(scope, seed);
    let _ = write!(out, "{}", format_table(&rows));
    let failed: Vec<_> = rows.iter().filter(|r| !r.passed).collect();
    if failed.is_empty() {
        return EXIT_OK;
    }
    for r in failed {
        let _ = writeln!(err, "failed: {} / {}: {}", r.suite, r.property, r.detail);
    }
    EXIT_FAILED
}

/// Trace records of the given JSONL files, checked to share one config.
pub fn load_traces(inputs: &[PathBuf]) -> Result<Vec<RegretTrace>, String> {
    let mut traces = Vec::new();
    for path in inputs {
        for rec in read_records(path).map_err(|e| e.to_string())? {
            if rec.record_kind != RecordKind::Trace {
                continue;
            }
            let trace = rec
                .payload
                .get("trace")
                .cloned()
                .ok_or_else(|| format!("{}: trace record without a trace payload", path.display()))
                .and_then(|v| serde_json::from_value::<RegretTrace>(v).map_err(|e| format!("{}: {e}", path.display())))?;
            traces.push(trace);
        }
    }
    if traces.is_empty() {
        return Err("no trace records in the inputs".into());
    }
    Ok(traces)
}

pub fn cmd_rate(
    inputs: &[PathBuf],
    expected: Option<f64>,
    min_t: u64,
    plot_out: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let traces = match load_traces(inputs) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            return EXIT_USAGE;
        }
    };
    let aggregate = match aggregate_regret(&traces) {
        Ok(a) => a,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            return EXIT_USAGE;
        }
    };
    let window = aggregate.window(min_t, u64::MAX);
    let fit = match fit_rate(&window) {
        Ok(f) => f,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            return EXIT_USAGE;
        }
    };
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(&fit).expect("fit serializes"));
    if !fit.excluded.is_empty() {
        let _ = writeln!(err, "excluded checkpoints with non-positive mean: {:?}", fit.excluded);
    }
    let mut plot = String::from("log_T,log_mean,se\n");
    for p in window.iter().filter(|p| p.mean > 0.0) {
        let se = p.se.map(|v| v.to_string()).unwrap_or_default();
        plot.push_str(&format!("{},{},{}\n", (p.t as f64).ln(), p.mean.ln(), se));
    }
    match plot_out {
        Some(path) => {
            if let Err(e) = fs::write(path, &plot) {
                let _ = writeln!(err, "cannot write {}: {e}", path.display());
                return EXIT_USAGE;
            }
        }
        None => {
            let _ = write!(out, "{plot}");
        }
    }
    match expected {
        Some(slope) if !fit.consistent_with(slope, RATE_TOLERANCE) => {
            let _ = writeln!(
                err,
                "slope interval [{:.4}, {:.4}] misses {slope} +/- {RATE_TOLERANCE}",
                fit.ci_95.0, fit.ci_95.1
            );
            EXIT_FAILED
        }
        _ => EXIT_OK,
    }
}
