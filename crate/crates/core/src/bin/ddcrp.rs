//! `ddcrp` command-line interface.
//!
//! Any `--dotted.key value` (or `--dotted.key=value`) argument overrides the
//! matching key of the TOML configuration. On failure the first stderr line
//! is a JSON object `{"error": kind, "code": exit_code, "message": ...}`.

use clap::{Args, Parser, Subcommand};
use ddcrp::harness::config::{DataConfig, RunConfig};
use ddcrp::harness::{self, data, presets};
use ddcrp::{Error, Result};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ddcrp", version, about = "Distance-dependent CRP clustering with Gibbs and reversible-jump MCMC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Source {
    /// TOML run configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled preset: poisson-overlapping or old-faithful.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory (default: $DDCRP_OUTPUT_DIR, else ./ddcrp-out).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a simulated dataset as CSV.
    Simulate {
        #[command(flatten)]
        source: Source,
        /// Destination file; standard output if omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the configured sampler and write traces and a report.
    Fit {
        #[command(flatten)]
        source: Source,
    },
    /// Grid-search proposal standard deviations by ESJD of K.
    Tune {
        #[command(flatten)]
        source: Source,
    },
    /// Posterior predictive draws at new covariate values.
    Predict {
        #[command(flatten)]
        source: Source,
        /// Directory of a previous fit (sequential mode); fits afresh if
        /// omitted.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Recompute the report of stored traces under a matching config.
    Diagnose {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Compare the K posteriors of two stored runs.
    Compare { a: PathBuf, b: PathBuf },
}

const CLAP_FLAGS: [&str; 8] = ["config", "preset", "out", "output", "trace", "help", "version", "h"];

/// Short flags that stand for dotted keys.
fn alias(name: &str) -> String {
    match name {
        "iterations" | "burn_in" | "thinning" | "init" => format!("sampler.{name}"),
        "burn-in" => "sampler.burn_in".into(),
        other => other.to_string(),
    }
}

type Overrides = Vec<(String, String)>;

/// Split configuration overrides from the arguments clap understands.
fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Overrides)> {
    let mut keep = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let Some(flag) = a.strip_prefix("--") else {
            keep.push(a);
            continue;
        };
        let (name, inline) = match flag.split_once('=') {
            Some((n, v)) => (n.to_string(), Some(v.to_string())),
            None => (flag.to_string(), None),
        };
        if name.is_empty() || CLAP_FLAGS.contains(&name.as_str()) {
            keep.push(a);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it
                .next()
                .ok_or_else(|| Error::Config(format!("override --{name} needs a value")))?,
        };
        overrides.push((alias(&name), value));
    }
    Ok((keep, overrides))
}

fn load_config(source: &Source, overrides: &[(String, String)]) -> Result<RunConfig> {
    let text = match (&source.config, &source.preset) {
        (Some(p), None) => std::fs::read_to_string(p)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?,
        (None, Some(name)) => presets::toml(name)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown preset '{name}' (available: {})",
                    presets::NAMES.join(", ")
                ))
            })?
            .to_string(),
        _ => return Err(Error::Config("give exactly one of --config or --preset".into())),
    };
    let mut cfg = RunConfig::from_toml_with_overrides(&text, overrides)?;
    if let Some(out) = &source.out {
        cfg.output.dir = Some(out.clone());
    }
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn run(command: Command, overrides: &[(String, String)]) -> Result<()> {
    match command {
        Command::Simulate { source, output } => {
            let cfg = load_config(&source, overrides)?;
            let DataConfig::Simulate(sc) = &cfg.data else {
                return Err(Error::Config("simulate needs data.source = \"simulate\"".into()));
            };
            let ds = data::simulate_poisson_dataset(sc, &mut data::substream(cfg.seed, "data"))?;
            match output {
                Some(p) => data::write_dataset(&ds, std::fs::File::create(p)?)?,
                None => data::write_dataset(&ds, std::io::stdout().lock())?,
            }
        }
        Command::Fit { source } => {
            let cfg = load_config(&source, overrides)?;
            let dir = cfg.output_dir();
            let out = harness::fit_to_dir(&cfg, &dir)?;
            let r = &out.report;
            println!(
                "k_mode={} p_k_mode={:.4} chains={} samples={} out={}",
                r.k_mode,
                r.k_posterior[&r.k_mode],
                r.chains.len(),
                r.chains.iter().map(|c| c.samples).sum::<usize>(),
                dir.display()
            );
            for w in &r.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::Tune { source } => {
            let cfg = load_config(&source, overrides)?;
            let dir = cfg.output_dir();
            let r = harness::tune_to_dir(&cfg, &dir)?;
            let show = |v: Option<f64>| v.map_or("-".to_string(), |x| x.to_string());
            println!(
                "best sigma_b={} sigma_r={} esjd_k={} out={}",
                show(r.best.sigma_b),
                show(r.best.sigma_r),
                show(r.best.esjd_k),
                dir.display()
            );
        }
        Command::Predict { source, trace } => {
            let cfg = load_config(&source, overrides)?;
            let dir = cfg.output_dir();
            let rep = harness::predict_to_dir(&cfg, trace.as_deref(), &dir)?;
            print_json(&rep)?;
        }
        Command::Diagnose { source, trace } => {
            let cfg = load_config(&source, overrides)?;
            let rep = harness::diagnose(&cfg, &trace)?;
            print_json(&rep)?;
            for w in &rep.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::Compare { a, b } => {
            print_json(&harness::compare(Path::new(&a), Path::new(&b))?)?;
        }
    }
    Ok(())
}

fn fail(e: &Error) -> ExitCode {
    let line = serde_json::json!({
        "error": e.kind(),
        "code": e.exit_code(),
        "message": e.to_string(),
    });
    eprintln!("{line}");
    eprintln!("ddcrp: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let (args, overrides) = match split_overrides(std::env::args().collect()) {
        Ok(v) => v,
        Err(e) => return fail(&e),
    };
    let cli = Cli::parse_from(args);
    match run(cli.command, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
