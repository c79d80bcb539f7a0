//! Wall-clock scaling of the alternating solvers.

use serde::Serialize;

use super::Scheme;
use crate::channel::generate_channel;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::solver::SolverOptions;

/// Predicted growth exponent in `N_t` for every alternating solver.
pub const PREDICTED_EXPONENT: f64 = 2.0;
pub const FC_SLOPE_BAND: (f64, f64) = (1.6, 2.6);
pub const PC_SLOPE_MARGIN: f64 = 0.3;
pub const DS_BITS_MIN_R2: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchSpec {
    pub base: SystemConfig,
    pub n_t_values: Vec<usize>,
    pub schemes: Vec<Scheme>,
    /// Resolutions for the dynamic-subarray timing at `ds_n_t` antennas.
    pub bits_values: Vec<u32>,
    pub ds_n_t: usize,
    /// Seeds per point; the median over all their timed iterations is kept.
    pub repeats: usize,
    /// Worker threads for the measurement (1 keeps timings comparable).
    pub threads: usize,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            base: SystemConfig::desk(),
            n_t_values: vec![16, 32, 64],
            schemes: vec![Scheme::AlterOptFC, Scheme::AlterOptPC, Scheme::DSWB],
            bits_values: vec![1, 2, 3, 4],
            ds_n_t: 64,
            repeats: 5,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingPoint {
    pub scheme: Scheme,
    pub n_t: usize,
    pub bits: u32,
    pub seconds_per_iteration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    pub scheme: Scheme,
    pub slope: f64,
    pub predicted: f64,
    /// `None` when no band is defined for the scheme.
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub points: Vec<TimingPoint>,
    pub slopes: Vec<SlopeFit>,
    /// Dynamic-subarray time per iteration against `2^b`.
    pub ds_bits_fit: Option<LinearFit>,
    pub ds_bits_pass: Option<bool>,
}

impl ScalingReport {
    /// True when every defined check passed.
    pub fn all_pass(&self) -> bool {
        self.slopes.iter().all(|s| s.pass != Some(false)) && self.ds_bits_pass != Some(false)
    }
}

/// Ordinary least squares `y = a + b x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r_squared = if sxx > 0.0 && syy > 0.0 { sxy * sxy / (sxx * syy) } else { 0.0 };
    LinearFit { intercept: my - slope * mx, slope, r_squared }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn time_point(spec: &BenchSpec, scheme: Scheme, cfg: &SystemConfig) -> Result<f64> {
    let opts = SolverOptions { rel_tol: 0.0, max_iters: 3, ..Default::default() };
    let mut times = Vec::with_capacity(spec.repeats);
    // The first solve warms caches and the allocator and is not timed.
    for r in 0..=spec.repeats.max(1) {
        let cfg = cfg.clone().with_seed(spec.base.rng_seed + r.max(1) as u64 - 1).with_structure(scheme.structure());
        cfg.validate()?;
        let ch = generate_channel(&cfg)?;
        let out = scheme.solve(&ch, &opts)?;
        let super::SchemeOutput::Hybrid(sol) = out else {
            return Err(Error::Config(format!("{scheme} has no outer iterations to time")));
        };
        if r > 0 {
            times.extend_from_slice(&sol.report.iteration_times);
        }
    }
    Ok(median(times))
}

/// Times each scheme per outer iteration over the `N_t` grid and the
/// dynamic-subarray solver over the resolution grid, then fits growth rates.
pub fn benchmark_scaling(spec: &BenchSpec) -> Result<ScalingReport> {
    if spec.n_t_values.len() < 2 {
        return Err(Error::Config("benchmark needs at least two N_t values".into()));
    }
    crate::par::with_threads(spec.threads, || {
        let mut points = Vec::new();
        let mut slopes = Vec::new();
        for &scheme in &spec.schemes {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for &n_t in &spec.n_t_values {
                let cfg = SystemConfig { n_t, ..spec.base.clone() };
                let t = time_point(spec, scheme, &cfg)?;
                points.push(TimingPoint { scheme, n_t, bits: cfg.bits, seconds_per_iteration: t });
                xs.push((n_t as f64).ln());
                ys.push(t.ln());
            }
            slopes.push(SlopeFit { scheme, slope: linear_fit(&xs, &ys).slope, predicted: PREDICTED_EXPONENT, pass: None });
        }
        let fc = slopes.iter().find(|s| s.scheme == Scheme::AlterOptFC).map(|s| s.slope);
        for s in slopes.iter_mut() {
            s.pass = match (s.scheme, fc) {
                (Scheme::AlterOptFC, _) => Some((FC_SLOPE_BAND.0..=FC_SLOPE_BAND.1).contains(&s.slope)),
                (Scheme::AlterOptPC, Some(fc)) => Some(s.slope <= fc + PC_SLOPE_MARGIN),
                _ => None,
            };
        }
        let (mut ds_bits_fit, mut ds_bits_pass) = (None, None);
        if spec.schemes.contains(&Scheme::DSWB) && spec.bits_values.len() >= 2 {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for &bits in &spec.bits_values {
                let cfg = SystemConfig { n_t: spec.ds_n_t, bits, ..spec.base.clone() };
                let t = time_point(spec, Scheme::DSWB, &cfg)?;
                points.push(TimingPoint { scheme: Scheme::DSWB, n_t: spec.ds_n_t, bits, seconds_per_iteration: t });
                xs.push(f64::from(1u32 << bits));
                ys.push(t);
            }
            let fit = linear_fit(&xs, &ys);
            ds_bits_pass = Some(fit.slope > 0.0 && fit.r_squared >= DS_BITS_MIN_R2);
            ds_bits_fit = Some(fit);
        }
        Ok(ScalingReport { points, slopes, ds_bits_fit, ds_bits_pass })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_known_lines() {
        let f = linear_fit(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]);
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12 && (f.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn tiny_benchmark_runs() {
        let spec = BenchSpec {
            base: SystemConfig { subcarriers: 2, ..SystemConfig::desk() },
            n_t_values: vec![8, 16],
            bits_values: vec![1, 2],
            ds_n_t: 8,
            repeats: 1,
            ..Default::default()
        };
        let report = benchmark_scaling(&spec).unwrap();
        assert_eq!(report.slopes.len(), 3);
        assert_eq!(report.points.len(), 3 * 2 + 2);
        assert!(report.ds_bits_fit.is_some());
    }
}
