//! Command-line front end: parse a polynomial incidence map, run the
//! curvature nondegeneracy analysis, and emit a versioned JSON report with
//! CSV sidecars for the sweep series.
//!
//! Exit codes: 0 nondegenerate, 2 degenerate, 3 inconclusive, 1 error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use radonq::pipeline::{analyze, parse_point, run_knapp_only, run_testing_only, run_vfields_corpus};
use radonq::report::{AnalysisConfig, Report, SCHEMA_VERSION};

#[derive(Parser)]
#[command(
    name = "radonq",
    version,
    about = "Decides curvature nondegeneracy of polynomial Radon-like transforms and corroborates the verdict numerically"
)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: extract Q, decide, report exponents and diagnostics.
    Analyze,
    /// Knapp blowup harness only (runs the verdict to obtain a witness).
    Knapp,
    /// Testing-integral estimator only.
    Testing,
    /// Vector-field construction identities on the reference corpus.
    Vfields,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Input file: polynomial map in text or JSON form.
    #[arg(long, global = true, env = "RADONQ_INPUT")]
    input: Option<PathBuf>,

    /// Base point as "x1,..,xn;t1,..,td1"; defaults to the origin.
    #[arg(long, global = true, env = "RADONQ_POINT")]
    point: Option<String>,

    /// RNG seed; required so every run is reproducible.
    #[arg(long, global = true, env = "RADONQ_SEED")]
    seed: Option<u64>,

    /// Orthonormal basis triples sampled by the verdict search.
    #[arg(long, global = true, env = "RADONQ_SAMPLES", default_value_t = 200)]
    samples: usize,

    /// Largest tau in the Knapp sweep grid (integers 0..=tau-max).
    #[arg(long = "tau-max", global = true, env = "RADONQ_TAU_MAX", default_value_t = 6.0)]
    tau_max: f64,

    /// Monte Carlo samples per Knapp scale.
    #[arg(long = "mc-samples", global = true, env = "RADONQ_MC_SAMPLES", default_value_t = 100_000)]
    mc_samples: usize,

    /// Hill-climb iterations in the smoothed degeneracy search.
    #[arg(long = "optimizer-iters", global = true, env = "RADONQ_OPTIMIZER_ITERS", default_value_t = 60)]
    optimizer_iters: usize,

    /// Relative coefficient floor for diagram membership.
    #[arg(long = "eps-coef", global = true, env = "RADONQ_EPS_COEF", default_value_t = 1e-9)]
    eps_coef: f64,

    /// Trace of D1 pinned for the least-decaying direction report.
    #[arg(long = "trace-target", global = true, env = "RADONQ_TRACE_TARGET", default_value_t = 0.1)]
    trace_target: f64,

    /// Run the Knapp incidence-ratio harness.
    #[arg(long = "with-harness", global = true, env = "RADONQ_WITH_HARNESS")]
    with_harness: bool,

    /// Run the testing-integral estimator.
    #[arg(long = "with-testing", global = true, env = "RADONQ_WITH_TESTING")]
    with_testing: bool,

    /// Run the vector-field identity checks.
    #[arg(long = "with-vfields", global = true, env = "RADONQ_WITH_VFIELDS")]
    with_vfields: bool,

    /// Report path; stdout when absent. CSV sidecars land next to it.
    #[arg(long, global = true, env = "RADONQ_OUT")]
    out: Option<PathBuf>,

    /// Worker threads (0 = library default). Results are identical at any
    /// thread count.
    #[arg(long, global = true, env = "RADONQ_THREADS", default_value_t = 0)]
    threads: usize,
}

impl CommonArgs {
    fn to_config(&self) -> Result<AnalysisConfig, String> {
        let seed = self.seed.ok_or("--seed is required (or set RADONQ_SEED)")?;
        Ok(AnalysisConfig {
            seed,
            samples: self.samples,
            optimizer_iters: self.optimizer_iters,
            eps_coef: self.eps_coef,
            mc_samples: self.mc_samples,
            tau_max: self.tau_max,
            trace_target: self.trace_target,
            with_harness: self.with_harness,
            with_testing: self.with_testing,
            with_vfields: self.with_vfields,
        })
    }

    fn read_input(&self) -> Result<String, String> {
        let path = self
            .input
            .as_ref()
            .ok_or("--input is required (or set RADONQ_INPUT)")?;
        fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<i32, String> {
    if cli.common.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.common.threads)
            .build_global()
            .map_err(|e| e.to_string())?;
    }

    // Standalone vfields run needs no input map.
    if matches!(cli.command, Some(Command::Vfields)) {
        let cfg = cli.common.to_config()?;
        let vf = run_vfields_corpus().map_err(|e| e.to_string())?;
        let fragment = vfields_fragment(&cfg, &vf);
        emit(&cli.common.out, &fragment, None)?;
        return Ok(0);
    }

    let text = cli.common.read_input()?;
    let cfg = cli.common.to_config()?;
    let point = match &cli.common.point {
        Some(s) => Some(parse_point(s).map_err(|e| e.to_string())?),
        None => None,
    };

    let outcome = match cli.command {
        Some(Command::Knapp) => run_knapp_only(&text, point, &cfg),
        Some(Command::Testing) => run_testing_only(&text, point, &cfg),
        Some(Command::Analyze) | None => analyze(&text, point, &cfg),
        Some(Command::Vfields) => unreachable!("handled above"),
    }
    .map_err(|e| e.to_string())?;

    emit(&cli.common.out, &outcome.report.to_json(), Some(&outcome.report))?;
    Ok(outcome.exit_code)
}

/// Partial report: the vfields schema fragment under the usual envelope.
fn vfields_fragment(cfg: &AnalysisConfig, vf: &radonq::vfields::VfReport) -> String {
    #[derive(serde::Serialize)]
    struct Fragment<'a> {
        schema_version: u32,
        config: &'a AnalysisConfig,
        vfields: &'a radonq::vfields::VfReport,
    }
    let mut s = serde_json::to_string_pretty(&Fragment {
        schema_version: SCHEMA_VERSION,
        config: cfg,
        vfields: vf,
    })
    .expect("fragment serializes");
    s.push('\n');
    s
}

fn emit(out: &Option<PathBuf>, json: &str, report: Option<&Report>) -> Result<(), String> {
    match out {
        None => {
            print!("{json}");
            Ok(())
        }
        Some(path) => {
            atomic_write(path, json.as_bytes())?;
            if let Some(report) = report {
                write_sidecars(path, report)?;
            }
            Ok(())
        }
    }
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), String> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)
            .map_err(|e| format!("cannot create {}: {e}", tmp.display()))?;
        f.write_all(bytes).map_err(|e| e.to_string())?;
        f.sync_all().map_err(|e| e.to_string())?;
    }
    fs::rename(&tmp, path).map_err(|e| format!("cannot move report into place: {e}"))
}

fn write_sidecars(report_path: &Path, report: &Report) -> Result<(), String> {
    let stem = report_path.with_extension("");
    if let Some(h) = &report.harness {
        let mut csv = String::from("tau,value,stderr\n");
        for ((t, r), se) in h
            .series
            .taus
            .iter()
            .zip(&h.series.ratios)
            .zip(&h.series.stderrs)
        {
            csv.push_str(&format!("{t},{r},{se}\n"));
        }
        let path = PathBuf::from(format!("{}.knapp.csv", stem.display()));
        atomic_write(&path, csv.as_bytes())?;
    }
    if let Some(t) = &report.testing {
        for sweep in &t.sweeps {
            let mut csv = String::from("tau,value,stderr\n");
            for (tau, v) in sweep.taus.iter().zip(&sweep.values) {
                csv.push_str(&format!("{tau},{v},0\n"));
            }
            let suffix = if sweep.rho == 0.0 {
                "testing.csv".to_string()
            } else {
                format!("testing_rho{}.csv", sweep.rho)
            };
            let path = PathBuf::from(format!("{}.{suffix}", stem.display()));
            atomic_write(&path, csv.as_bytes())?;
        }
    }
    Ok(())
}
