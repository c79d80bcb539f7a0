//! Experiment runner: seeded sweeps over one system parameter, result tables,
//! and the gain-map, scaling and invariant studies built on top of them.

pub mod bench;
pub mod gainmap;
pub mod validate;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{direct_quant_svd, fully_digital};
use crate::channel::{generate_channel, ChannelRealization};
use crate::config::{Structure, SystemConfig};
use crate::error::{Error, Result};
use crate::evalcore::{average_rate, spectral_efficiency, HybridPrecoder};
use crate::numerics::ComplexMatrix;
use crate::rng::{stream, Stream};
use crate::solver::{ds::solve_ds, fc::solve_fc, pc::solve_pc, Solution, SolverOptions};

pub use bench::{benchmark_scaling, BenchSpec, ScalingReport};
pub use gainmap::{beam_squint_config, beam_squint_vector, gain_map, squint_summary, write_gain_map, GainMapRow, SquintSummary};
pub use validate::{invariant_violations, run_invariant_suite, InvariantReport, Violation, ViolationKind};

/// Version string written into run metadata.
pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Rows re-evaluated from their stored precoders in every run.
pub const SPOT_CHECKS: usize = 5;
const SPOT_CHECK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scheme {
    AlterOptFC,
    AlterOptPC,
    DSWB,
    FullyDigital,
    DirectQuantSVD,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Self::AlterOptFC, Self::AlterOptPC, Self::DSWB, Self::FullyDigital, Self::DirectQuantSVD];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::AlterOptFC => "AlterOptFC",
            Scheme::AlterOptPC => "AlterOptPC",
            Scheme::DSWB => "DSWB",
            Scheme::FullyDigital => "FullyDigital",
            Scheme::DirectQuantSVD => "DirectQuantSVD",
        }
    }

    /// Analog structure the scheme's config is evaluated under.
    pub fn structure(self) -> Structure {
        match self {
            Scheme::AlterOptPC => Structure::PartiallyConnected,
            Scheme::DSWB => Structure::DynamicSubarray,
            _ => Structure::FullyConnected,
        }
    }

    /// Runs the scheme on `channel`, whose config must already carry
    /// [`Scheme::structure`].
    pub fn solve(self, channel: &ChannelRealization, opts: &SolverOptions) -> Result<SchemeOutput> {
        Ok(match self {
            Scheme::AlterOptFC => SchemeOutput::Hybrid(solve_fc(channel, opts)?),
            Scheme::AlterOptPC => SchemeOutput::Hybrid(solve_pc(channel, opts)?),
            Scheme::DSWB => SchemeOutput::Hybrid(solve_ds(channel, opts)?),
            Scheme::DirectQuantSVD => SchemeOutput::Hybrid(direct_quant_svd(channel)?),
            Scheme::FullyDigital => {
                let start = std::time::Instant::now();
                let fd = fully_digital(channel)?;
                SchemeOutput::Digital { precoders: fd.precoders, rate: fd.rate.average, wall_time: start.elapsed().as_secs_f64() }
            }
        })
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(&key))
            .ok_or_else(|| Error::Config(format!("unknown scheme {s:?}")))
    }
}

/// Parses a comma-separated scheme list.
pub fn parse_schemes(list: &str) -> Result<Vec<Scheme>> {
    list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect()
}

pub enum SchemeOutput {
    Hybrid(Solution),
    Digital { precoders: Vec<ComplexMatrix>, rate: f64, wall_time: f64 },
}

impl SchemeOutput {
    pub fn rate(&self) -> f64 {
        match self {
            SchemeOutput::Hybrid(s) => s.rate(),
            SchemeOutput::Digital { rate, .. } => *rate,
        }
    }

    pub fn precoder(&self) -> Option<&HybridPrecoder> {
        match self {
            SchemeOutput::Hybrid(s) => Some(&s.precoder),
            SchemeOutput::Digital { .. } => None,
        }
    }

    /// Rate recomputed from the stored precoders.
    pub fn recompute_rate(&self, channel: &ChannelRealization) -> Result<f64> {
        match self {
            SchemeOutput::Hybrid(s) => Ok(spectral_efficiency(channel, &s.precoder)?.average),
            SchemeOutput::Digital { precoders, .. } => {
                let n_t = channel.config.n_t;
                Ok(average_rate(channel, &ComplexMatrix::identity(n_t, n_t), precoders)?.average)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    SnrDb,
    Bandwidth,
    NT,
    Bits,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::SnrDb => "snr_db",
            SweepAxis::Bandwidth => "bandwidth",
            SweepAxis::NT => "n_t",
            SweepAxis::Bits => "bits",
        }
    }

    /// `base` with this axis set to `value`. SNR is in dB with the noise
    /// power pinned to 1; bandwidth is in Hz.
    pub fn apply(self, base: &SystemConfig, value: f64) -> Result<SystemConfig> {
        let integral = |what: &str| -> Result<u64> {
            if value >= 0.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
                Ok(value as u64)
            } else {
                Err(Error::Config(format!("{what} sweep value must be a non-negative integer, got {value}")))
            }
        };
        let mut cfg = base.clone();
        match self {
            SweepAxis::SnrDb => {
                cfg.sigma2_n = 1.0;
                cfg = cfg.with_snr_db(value);
            }
            SweepAxis::Bandwidth => cfg.bandwidth = value,
            SweepAxis::NT => cfg.n_t = integral("n_t")? as usize,
            SweepAxis::Bits => cfg.bits = integral("bits")? as u32,
        }
        Ok(cfg)
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SweepAxis::SnrDb, SweepAxis::Bandwidth, SweepAxis::NT, SweepAxis::Bits]
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown sweep axis {s:?} (expected snr_db, bandwidth, n_t or bits)")))
    }
}

/// Parses a comma-separated list of numbers.
pub fn parse_values(list: &str) -> Result<Vec<f64>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| Error::Config(format!("bad sweep value {s:?}"))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub base: SystemConfig,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub schemes: Vec<Scheme>,
    /// Seeds `base.rng_seed .. base.rng_seed + trials`.
    pub trials: usize,
    #[serde(skip)]
    pub solver: SolverOptions,
}

impl ExperimentSpec {
    pub fn new(base: SystemConfig, axis: SweepAxis, values: Vec<f64>, schemes: Vec<Scheme>, trials: usize) -> Self {
        Self { base, axis, values, schemes, trials, solver: SolverOptions::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep values must be non-empty".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) || self.values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("sweep values must be finite, sorted and distinct".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("at least one scheme is required".into()));
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.trials as u64).map(|t| self.base.rng_seed.wrapping_add(t)).collect()
    }
}

/// One (scheme, sweep value, seed) outcome. Failed runs keep `avg_rate`
/// empty and carry the error text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scheme: Scheme,
    pub sweep_value: f64,
    pub seed: u64,
    pub avg_rate: Option<f64>,
    pub iterations: usize,
    pub wall_time: f64,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scheme: Scheme,
    pub sweep_value: f64,
    pub trials_ok: usize,
    pub mean_rate: Option<f64>,
    pub std_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotCheck {
    pub scheme: Scheme,
    pub sweep_value: f64,
    pub seed: u64,
    pub stored: f64,
    pub recomputed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    pub spot_checks: Vec<SpotCheck>,
}

/// Every (value, seed, scheme) combination, in sweep order.
fn job_count(spec: &ExperimentSpec) -> usize {
    spec.values.len() * spec.trials * spec.schemes.len()
}

fn spot_check_indices(spec: &ExperimentSpec) -> Vec<usize> {
    use rand::seq::index::sample;
    let total = job_count(spec);
    let mut rng = stream(spec.base.rng_seed, Stream::SpotCheck);
    let mut picked = sample(&mut rng, total, SPOT_CHECKS.min(total)).into_vec();
    picked.sort_unstable();
    picked
}

fn run_point(
    spec: &ExperimentSpec,
    value: f64,
    seed: u64,
    first_job: usize,
    checks: &[usize],
) -> Vec<(ResultRow, Option<Result<SpotCheck>>)> {
    let failed = |scheme: Scheme, err: &Error| ResultRow {
        scheme,
        sweep_value: value,
        seed,
        avg_rate: None,
        iterations: 0,
        wall_time: 0.0,
        converged: false,
        error: Some(err.to_string()),
    };
    let channel = spec.axis.apply(&spec.base, value).map(|c| c.with_seed(seed)).and_then(|c| {
        c.validate()?;
        generate_channel(&c)
    });
    let channel = match channel {
        Ok(ch) => ch,
        Err(e) => return spec.schemes.iter().map(|&s| (failed(s, &e), None)).collect(),
    };
    spec.schemes
        .iter()
        .enumerate()
        .map(|(j, &scheme)| {
            let cfg = channel.config.clone().with_structure(scheme.structure());
            let outcome = cfg.validate().and_then(|_| {
                let ch = ChannelRealization { config: cfg, ..channel.clone() };
                let out = scheme.solve(&ch, &spec.solver)?;
                Ok((ch, out))
            });
            match outcome {
                Err(e) => (failed(scheme, &e), None),
                Ok((ch, out)) => {
                    let (iterations, wall_time, converged) = match &out {
                        SchemeOutput::Hybrid(s) => (s.report.iterations_run, s.report.wall_time, s.report.converged),
                        SchemeOutput::Digital { wall_time, .. } => (0, *wall_time, true),
                    };
                    let rate = out.rate();
                    let check = checks.binary_search(&(first_job + j)).is_ok().then(|| {
                        out.recompute_rate(&ch).map(|recomputed| SpotCheck {
                            scheme,
                            sweep_value: value,
                            seed,
                            stored: rate,
                            recomputed,
                        })
                    });
                    let row = ResultRow {
                        scheme,
                        sweep_value: value,
                        seed,
                        avg_rate: Some(rate),
                        iterations,
                        wall_time,
                        converged,
                        error: None,
                    };
                    (row, check)
                }
            }
        })
        .collect()
}

fn summarize(spec: &ExperimentSpec, rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for &value in &spec.values {
        let mut schemes = spec.schemes.clone();
        schemes.sort();
        schemes.dedup();
        for scheme in schemes {
            let rates: Vec<f64> =
                rows.iter().filter(|r| r.scheme == scheme && r.sweep_value == value).filter_map(|r| r.avg_rate).collect();
            let n = rates.len();
            let mean = (n > 0).then(|| crate::numerics::pairwise_mean(&rates));
            let std_err = mean.filter(|_| n > 1).map(|m| {
                let var = rates.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            });
            out.push(SummaryRow { scheme, sweep_value: value, trials_ok: n, mean_rate: mean, std_err });
        }
    }
    out
}

/// Runs every scheme on every (sweep value, seed) pair. Per-run failures are
/// recorded in their rows; a spot-check mismatch between a stored rate and
/// its recomputation fails the whole run.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let checks = spot_check_indices(spec);
    let points: Vec<(usize, f64, u64)> = spec
        .values
        .iter()
        .flat_map(|&v| spec.seeds().into_iter().map(move |s| (v, s)))
        .enumerate()
        .map(|(i, (v, s))| (i * spec.schemes.len(), v, s))
        .collect();
    let outcomes = crate::par::map_slice(&points, |&(first, v, s)| run_point(spec, v, s, first, &checks));
    let mut rows = Vec::with_capacity(job_count(spec));
    let mut spot_checks = Vec::new();
    for (row, check) in outcomes.into_iter().flatten() {
        if let Some(check) = check {
            let check = check?;
            if (check.stored - check.recomputed).abs() > SPOT_CHECK_TOL {
                return Err(Error::Invariant(format!(
                    "{} at {}={} seed {}: stored rate {} but recomputed {}",
                    check.scheme,
                    spec.axis.name(),
                    check.sweep_value,
                    check.seed,
                    check.stored,
                    check.recomputed
                )));
            }
            spot_checks.push(check);
        }
        rows.push(row);
    }
    rows.sort_by(|a, b| a.sweep_value.total_cmp(&b.sweep_value).then(a.scheme.cmp(&b.scheme)).then(a.seed.cmp(&b.seed)));
    let summary = summarize(spec, &rows);
    Ok(ExperimentResult { rows, summary, spot_checks })
}

#[derive(Serialize)]
struct RateRecord<'a> {
    scheme: &'a str,
    sweep_value: f64,
    seed: u64,
    avg_rate: Option<f64>,
    iterations: usize,
    converged: bool,
    error: Option<&'a str>,
}

#[derive(Serialize)]
struct TimingRecord<'a> {
    scheme: &'a str,
    sweep_value: f64,
    seed: u64,
    wall_time: f64,
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    version: &'a str,
    axis: &'a str,
    spec: &'a ExperimentSpec,
    seeds: Vec<u64>,
    spot_checks: &'a [SpotCheck],
    failed_rows: usize,
}

/// Writes the result tables into `dir`:
///
/// * `results.csv`: one row per run, without timings, so identical specs
///   give byte-identical files;
/// * `timing.csv`: wall-clock seconds per run;
/// * `summary.csv`: mean rate and standard error per scheme and sweep value;
/// * `run.json`: the spec echo, seed list and spot checks.
pub fn write_experiment(dir: &Path, spec: &ExperimentSpec, result: &ExperimentResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut rates = csv::Writer::from_path(dir.join("results.csv"))?;
    let mut timing = csv::Writer::from_path(dir.join("timing.csv"))?;
    for r in &result.rows {
        rates.serialize(RateRecord {
            scheme: r.scheme.name(),
            sweep_value: r.sweep_value,
            seed: r.seed,
            avg_rate: r.avg_rate,
            iterations: r.iterations,
            converged: r.converged,
            error: r.error.as_deref(),
        })?;
        timing.serialize(TimingRecord {
            scheme: r.scheme.name(),
            sweep_value: r.sweep_value,
            seed: r.seed,
            wall_time: r.wall_time,
        })?;
    }
    rates.flush()?;
    timing.flush()?;
    let mut summary = csv::Writer::from_path(dir.join("summary.csv"))?;
    for s in &result.summary {
        summary.serialize(s)?;
    }
    summary.flush()?;
    let meta = RunMetadata {
        version: VERSION,
        axis: spec.axis.name(),
        spec,
        seeds: spec.seeds(),
        spot_checks: &result.spot_checks,
        failed_rows: result.rows.iter().filter(|r| r.error.is_some()).count(),
    };
    fs::write(dir.join("run.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(schemes: Vec<Scheme>, axis: SweepAxis, values: Vec<f64>, trials: usize) -> ExperimentSpec {
        ExperimentSpec::new(SystemConfig::desk(), axis, values, schemes, trials)
    }

    #[test]
    fn parses_names() {
        assert_eq!(
            parse_schemes("AlterOptFC, ds-wb,fullydigital").unwrap(),
            vec![Scheme::AlterOptFC, Scheme::DSWB, Scheme::FullyDigital]
        );
        assert!(parse_schemes("AlterOptXX").is_err());
        assert_eq!("N_T".parse::<SweepAxis>().unwrap(), SweepAxis::NT);
        assert_eq!(parse_values("0, 10,20").unwrap(), vec![0.0, 10.0, 20.0]);
    }

    #[test]
    fn axis_application() {
        let base = SystemConfig::desk();
        let c = SweepAxis::SnrDb.apply(&base, 20.0).unwrap();
        assert!((c.p_t - 100.0).abs() < 1e-9 && c.sigma2_n == 1.0);
        assert_eq!(SweepAxis::NT.apply(&base, 32.0).unwrap().n_t, 32);
        assert_eq!(SweepAxis::Bits.apply(&base, 5.0).unwrap().bits, 5);
        assert!(SweepAxis::Bits.apply(&base, 2.5).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(small(vec![Scheme::FullyDigital], SweepAxis::SnrDb, vec![], 1).validate().is_err());
        assert!(small(vec![Scheme::FullyDigital], SweepAxis::SnrDb, vec![10.0, 0.0], 1).validate().is_err());
        assert!(small(vec![Scheme::FullyDigital], SweepAxis::SnrDb, vec![0.0], 0).validate().is_err());
    }

    #[test]
    fn one_row_per_value_for_single_trial() {
        let spec = small(vec![Scheme::FullyDigital], SweepAxis::SnrDb, vec![0.0, 10.0, 20.0], 1);
        let res = run_experiment(&spec).unwrap();
        assert_eq!(res.rows.len(), 3);
        let rates: Vec<f64> = res.rows.iter().map(|r| r.avg_rate.unwrap()).collect();
        assert!(rates[0] < rates[1] && rates[1] < rates[2]);
        assert_eq!(res.spot_checks.len(), 3);
    }

    #[test]
    fn mismatched_structure_is_recorded_per_row() {
        let base = SystemConfig { n_rf_t: 3, n_rf_r: 3, ..SystemConfig::desk() };
        let spec = ExperimentSpec::new(base, SweepAxis::SnrDb, vec![10.0], vec![Scheme::AlterOptPC, Scheme::FullyDigital], 2);
        let res = run_experiment(&spec).unwrap();
        assert_eq!(res.rows.len(), 4);
        assert!(res.rows.iter().filter(|r| r.scheme == Scheme::AlterOptPC).all(|r| r.error.is_some() && r.avg_rate.is_none()));
        assert!(res.rows.iter().filter(|r| r.scheme == Scheme::FullyDigital).all(|r| r.avg_rate.is_some()));
        let pc = res.summary.iter().find(|s| s.scheme == Scheme::AlterOptPC).unwrap();
        assert_eq!(pc.trials_ok, 0);
        assert!(pc.mean_rate.is_none());
    }

    #[test]
    fn rows_are_sorted_and_written() {
        let spec = small(vec![Scheme::DSWB, Scheme::AlterOptFC], SweepAxis::Bits, vec![1.0, 3.0], 2);
        let res = run_experiment(&spec).unwrap();
        let keys: Vec<(f64, Scheme, u64)> = res.rows.iter().map(|r| (r.sweep_value, r.scheme, r.seed)).collect();
        let mut sorted = keys.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        assert_eq!(keys, sorted);
        let dir = tempfile::tempdir().unwrap();
        write_experiment(dir.path(), &spec, &res).unwrap();
        let text = fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert!(text.starts_with("scheme,sweep_value,seed,avg_rate,iterations,converged,error\n"));
        assert_eq!(text.lines().count(), 9);
        for f in ["timing.csv", "summary.csv", "run.json"] {
            assert!(dir.path().join(f).exists());
        }
    }
}
