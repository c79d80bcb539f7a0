use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use thz_hybrid::harness::{self, gainmap::degree_grid, BenchSpec, ExperimentSpec, SweepAxis};
use thz_hybrid::solver::SolverOptions;
use thz_hybrid::{Error, SystemConfig};

#[derive(Parser)]
#[command(name = "thz-sim", version, about = "Hybrid precoding experiments for wideband THz MIMO-OFDM links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Key-value config file with SystemConfig field names; omitted keys keep
    /// the subcommand's defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's rng_seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep one parameter and record the rate of every scheme per seed.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated: AlterOptFC, AlterOptPC, DSWB, FullyDigital, DirectQuantSVD.
        #[arg(long, default_value = "AlterOptFC,AlterOptPC,DSWB,FullyDigital,DirectQuantSVD")]
        schemes: String,
        /// snr_db, bandwidth, n_t or bits.
        #[arg(long, default_value = "snr_db")]
        axis: String,
        #[arg(long, default_value = "0,10,20", allow_hyphen_values = true)]
        values: String,
        #[arg(long, default_value_t = 10)]
        trials: usize,
    },
    /// Angle-by-subcarrier gain table for a narrowband-designed beam.
    Gainmap {
        #[command(flatten)]
        common: Common,
        /// Beam direction in degrees.
        #[arg(long, default_value_t = 45.0)]
        target: f64,
        /// Comma-separated angles in degrees (default: -90 to 90 in 1 degree steps).
        #[arg(long, allow_hyphen_values = true)]
        values: Option<String>,
    },
    /// Time the solvers per outer iteration and fit growth rates.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "AlterOptFC,AlterOptPC,DSWB")]
        schemes: String,
        /// Only n_t is supported.
        #[arg(long, default_value = "n_t")]
        axis: String,
        #[arg(long, default_value = "16,32,64")]
        values: String,
        /// Resolutions for the dynamic-subarray timing.
        #[arg(long, default_value = "1,2,3,4")]
        bits: String,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Run the randomized invariant suite.
    Validate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        ops: usize,
        /// Optional JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(common: &Common, default: SystemConfig) -> anyhow::Result<SystemConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            default.overlay_toml_str(&text)?
        }
        None => default,
    };
    if let Some(seed) = common.seed {
        cfg.rng_seed = seed;
    }
    Ok(cfg)
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Sweep { common, schemes, axis, values, trials } => {
            let base = load_config(&common, SystemConfig::desk())?;
            let spec = ExperimentSpec::new(
                base,
                axis.parse::<SweepAxis>()?,
                harness::parse_values(&values)?,
                harness::parse_schemes(&schemes)?,
                trials,
            );
            let result = harness::run_experiment(&spec)?;
            harness::write_experiment(&common.out, &spec, &result)?;
            let failed = result.rows.iter().filter(|r| r.error.is_some()).count();
            println!("{}", json!({ "rows": result.rows.len(), "failed_rows": failed, "out": common.out }));
        }
        Command::Gainmap { common, target, values } => {
            let cfg = load_config(&common, harness::beam_squint_config())?;
            cfg.validate()?;
            let angles = match values {
                Some(v) => harness::parse_values(&v)?,
                None => degree_grid(),
            };
            let opts = SolverOptions { rel_tol: 0.0, max_iters: 20, ..Default::default() };
            let f = harness::beam_squint_vector(&cfg, target, &opts)?;
            harness::write_gain_map(&common.out, &harness::gain_map(&cfg, &f, &angles))?;
            let summary = harness::squint_summary(&cfg, &f, &angles, target);
            println!("{}", serde_json::to_string(&summary)?);
        }
        Command::Bench { common, schemes, axis, values, bits, repeats, threads } => {
            if axis.parse::<SweepAxis>()? != SweepAxis::NT {
                bail!(Error::Config("bench sweeps n_t only".into()));
            }
            let base = load_config(&common, SystemConfig::desk())?;
            let n_t_values = harness::parse_values(&values)?.into_iter().map(|v| v as usize).collect();
            let bits_values = harness::parse_values(&bits)?.into_iter().map(|v| v as u32).collect();
            let spec = BenchSpec {
                ds_n_t: base.n_t.max(64),
                base,
                n_t_values,
                schemes: harness::parse_schemes(&schemes)?,
                bits_values,
                repeats,
                threads,
            };
            let report = harness::benchmark_scaling(&spec)?;
            write_json(&common.out, &json!({ "spec": spec, "report": report }))?;
            println!("{}", json!({ "all_pass": report.all_pass(), "slopes": report.slopes, "ds_bits_fit": report.ds_bits_fit }));
        }
        Command::Validate { seed, ops, out } => {
            let report = harness::run_invariant_suite(ops, seed);
            if let Some(path) = out {
                write_json(&path, &serde_json::to_value(&report)?)?;
            }
            println!(
                "{}",
                json!({ "operations": report.operations, "violations": report.violation_count(), "solver_errors": report.solver_errors.len() })
            );
            if report.violation_count() > 0 {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::Toml(_)) => "config",
        Some(Error::Numerics(_)) => "numerics",
        Some(Error::Invariant(_)) => "invariant",
        Some(Error::RankDeficient { .. }) => "rank_deficient",
        Some(Error::StructureMismatch { .. }) => "structure_mismatch",
        Some(Error::Io(_)) => "io",
        Some(Error::Csv(_) | Error::Json(_)) => "serialization",
        Some(_) => "error",
        None if err.downcast_ref::<std::io::Error>().is_some() => "io",
        None => "error",
    }
}

/// The error chain joined with ": ", skipping causes already quoted by the
/// message above them.
fn error_message(err: &anyhow::Error) -> String {
    let mut message = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !message.contains(&text) {
            if !message.is_empty() {
                message.push_str(": ");
            }
            message.push_str(&text);
        }
    }
    message
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("{}", json!({ "error": { "kind": error_kind(&err), "message": error_message(&err) } }));
            ExitCode::from(2)
        }
    }
}
