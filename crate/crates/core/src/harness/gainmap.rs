//! Angle-by-subcarrier gain tables for a frequency-flat analog beam.

use std::path::Path;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::baselines::narrowband_iterative;
use crate::channel::{array_gain_map, line_of_sight, subcarrier_frequencies};
use crate::config::{Structure, SystemConfig};
use crate::error::Result;
use crate::solver::SolverOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainMapRow {
    pub angle_deg: f64,
    /// 1-based, matching the subcarrier frequency formula.
    pub subcarrier_index: usize,
    pub frequency_hz: f64,
    pub gain: f64,
}

/// The beam-squint study setup: 128 antennas, one RF chain, 128 subcarriers,
/// 3-bit shifters, 300 GHz carrier with 30 GHz bandwidth.
pub fn beam_squint_config() -> SystemConfig {
    SystemConfig {
        n_t: 128,
        n_r: 4,
        n_rf_t: 1,
        n_rf_r: 1,
        n_s: 1,
        subcarriers: 128,
        bits: 3,
        f_c: 300e9,
        bandwidth: 30e9,
        structure: Structure::FullyConnected,
        ..SystemConfig::desk()
    }
}

/// Narrowband design toward `target_deg` on a line-of-sight carrier channel,
/// then quantized to the config's codebook. Uses the first RF chain.
pub fn beam_squint_vector(config: &SystemConfig, target_deg: f64, opts: &SolverOptions) -> Result<DVector<Complex64>> {
    let theta = target_deg.to_radians();
    let h = line_of_sight(config.n_r, config.n_t, theta, theta);
    let nb = narrowband_iterative(&h, config, opts)?;
    Ok(nb.quantized(config.bits).column(0).clone_owned())
}

/// Gain rows in angle-major order.
pub fn gain_map(config: &SystemConfig, f_rf: &DVector<Complex64>, angles_deg: &[f64]) -> Vec<GainMapRow> {
    let radians: Vec<f64> = angles_deg.iter().map(|a| a.to_radians()).collect();
    let freqs = subcarrier_frequencies(config);
    let gains = array_gain_map(config, f_rf, &radians);
    angles_deg
        .iter()
        .zip(gains)
        .flat_map(|(&angle_deg, row)| {
            let freqs = &freqs;
            row.into_iter().enumerate().map(move |(k, gain)| GainMapRow {
                angle_deg,
                subcarrier_index: k + 1,
                frequency_hz: freqs[k],
                gain,
            })
        })
        .collect()
}

/// Writes rows as CSV with header `angle_deg,subcarrier_index,frequency_hz,gain`.
pub fn write_gain_map(path: &Path, rows: &[GainMapRow]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Headline numbers of a gain map.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SquintSummary {
    pub target_deg: f64,
    /// 1-based index of the subcarrier closest to the carrier.
    pub center_index: usize,
    pub center_gain: f64,
    pub first_edge_gain: f64,
    pub last_edge_gain: f64,
    /// Larger edge gain over the center gain, all at the target angle.
    pub edge_ratio: f64,
    /// Grid angle of maximum gain, per subcarrier.
    pub peak_angles_deg: Vec<f64>,
    /// Whether the peak angles move in one direction across the band.
    pub peak_monotone: bool,
}

pub fn squint_summary(config: &SystemConfig, f_rf: &DVector<Complex64>, angles_deg: &[f64], target_deg: f64) -> SquintSummary {
    let freqs = subcarrier_frequencies(config);
    let center = (0..freqs.len())
        .min_by(|&a, &b| (freqs[a] - config.f_c).abs().total_cmp(&(freqs[b] - config.f_c).abs()))
        .expect("at least one subcarrier");
    let at_target = &array_gain_map(config, f_rf, &[target_deg.to_radians()])[0];
    let radians: Vec<f64> = angles_deg.iter().map(|a| a.to_radians()).collect();
    let map = array_gain_map(config, f_rf, &radians);
    let peak_angles_deg: Vec<f64> = (0..freqs.len())
        .map(|k| {
            let best = (0..angles_deg.len())
                .max_by(|&a, &b| map[a][k].total_cmp(&map[b][k]).then(b.cmp(&a)))
                .expect("at least one angle");
            angles_deg[best]
        })
        .collect();
    let non_increasing = peak_angles_deg.windows(2).all(|w| w[1] <= w[0]);
    let non_decreasing = peak_angles_deg.windows(2).all(|w| w[1] >= w[0]);
    let (first, last) = (at_target[0], at_target[freqs.len() - 1]);
    SquintSummary {
        target_deg,
        center_index: center + 1,
        center_gain: at_target[center],
        first_edge_gain: first,
        last_edge_gain: last,
        edge_ratio: first.max(last) / at_target[center],
        peak_angles_deg,
        peak_monotone: non_increasing || non_decreasing,
    }
}

/// Integer-degree grid `-90..=90`.
pub fn degree_grid() -> Vec<f64> {
    (-90..=90).map(f64::from).collect()
}
