//! Frequency-selective clustered channel with beam squint.
//!
//! Each path contributes `gamma * g * exp(-j 2 pi tau f_k) a_r(psi_r) a_t(psi_t)^H`
//! where the normalized angles scale with `f_k / f_c`. Antenna spacing is
//! half a wavelength at the carrier, so the array phase progression is
//! `pi * psi` per element.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::numerics::{ComplexMatrix, ZERO};
use crate::rng::{stream, Stream};

/// Half-width of the angular support for cluster means and rays.
pub const ANGLE_LIMIT: f64 = PI / 3.0;
/// Standard deviation of the intra-cluster angular spread (10 degrees).
pub const ANGLE_SPREAD: f64 = 10.0 * PI / 180.0;
/// Upper bound of the uniform path delay.
pub const MAX_DELAY: f64 = 1e-9;

/// One propagation path (ray).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub cluster: usize,
    /// Actual departure angle (radians).
    pub aod: f64,
    /// Actual arrival angle (radians).
    pub aoa: f64,
    /// Delay in seconds.
    pub delay: f64,
    /// Complex gain per subcarrier.
    pub gains: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    pub clusters: usize,
    pub rays_per_cluster: Vec<usize>,
    pub rays: Vec<Ray>,
}

impl PathSet {
    pub fn total_rays(&self) -> usize {
        self.rays.len()
    }

    /// Power normalizer `sqrt(N_t N_r / L)` with `L` the total path count.
    pub fn gamma(&self, n_t: usize, n_r: usize) -> f64 {
        ((n_t * n_r) as f64 / self.total_rays() as f64).sqrt()
    }

    /// Delay phasor `exp(-j 2 pi tau f)`.
    pub fn delay_phasor(delay: f64, freq: f64) -> Complex64 {
        Complex64::from_polar(1.0, -2.0 * PI * delay * freq)
    }
}

/// Channel matrices `H[k]` (each `N_r x N_t`) plus the paths that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub config: SystemConfig,
    pub paths: PathSet,
    pub gamma: f64,
    pub per_subcarrier: Vec<ComplexMatrix>,
}

/// `f_k = f_c - B/2 + (B/K)(k - 1/2)` for 1-based `k`.
pub fn subcarrier_frequency(config: &SystemConfig, k: usize) -> Result<f64> {
    let kk = config.subcarriers;
    if k == 0 || k > kk {
        return Err(Error::OutOfRange { index: k, max: kk });
    }
    Ok(config.f_c - config.bandwidth / 2.0 + config.bandwidth / kk as f64 * (k as f64 - 0.5))
}

/// All subcarrier frequencies in ascending order.
pub fn subcarrier_frequencies(config: &SystemConfig) -> Vec<f64> {
    (1..=config.subcarriers).map(|k| subcarrier_frequency(config, k).expect("k in range")).collect()
}

/// `(f_k / f_c) sin(angle)`.
pub fn normalized_angle(actual_angle: f64, f_k: f64, f_c: f64) -> f64 {
    f_k / f_c * actual_angle.sin()
}

/// ULA steering vector: entry `i` is `exp(j pi i psi) / sqrt(n)`.
pub fn array_response(n: usize, normalized: f64) -> DVector<Complex64> {
    let scale = 1.0 / (n as f64).sqrt();
    DVector::from_fn(n, |i, _| Complex64::from_polar(scale, PI * i as f64 * normalized))
}

/// Transmit steering vector.
pub fn array_response_tx(n_t: usize, normalized: f64) -> DVector<Complex64> {
    array_response(n_t, normalized)
}

fn laplacian(rng: &mut impl Rng, scale: f64) -> f64 {
    let u: f64 = rng.random_range(-0.5..0.5);
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

fn complex_gaussian(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draws a path set following the clustered model: 1-3 clusters, 3-5 rays
/// each, Laplacian intra-cluster spread, uniform delays and i.i.d. CN(0,1)
/// gains per subcarrier.
pub fn draw_paths(config: &SystemConfig) -> PathSet {
    let mut rng = stream(config.rng_seed, Stream::Channel);
    let clusters = rng.random_range(1..=3usize);
    let spread = ANGLE_SPREAD / std::f64::consts::SQRT_2;
    let mut rays_per_cluster = Vec::with_capacity(clusters);
    let mut rays = Vec::new();
    for cluster in 0..clusters {
        let n_ray = rng.random_range(3..=5usize);
        rays_per_cluster.push(n_ray);
        let mean_aod = rng.random_range(-ANGLE_LIMIT..=ANGLE_LIMIT);
        let mean_aoa = rng.random_range(-ANGLE_LIMIT..=ANGLE_LIMIT);
        for _ in 0..n_ray {
            let aod = (mean_aod + laplacian(&mut rng, spread)).clamp(-ANGLE_LIMIT, ANGLE_LIMIT);
            let aoa = (mean_aoa + laplacian(&mut rng, spread)).clamp(-ANGLE_LIMIT, ANGLE_LIMIT);
            let delay = rng.random_range(0.0..MAX_DELAY);
            let gains = (0..config.subcarriers).map(|_| complex_gaussian(&mut rng)).collect();
            rays.push(Ray { cluster, aod, aoa, delay, gains });
        }
    }
    PathSet { clusters, rays_per_cluster, rays }
}

/// Generates a channel realization; deterministic in `config.rng_seed`.
pub fn generate_channel(config: &SystemConfig) -> Result<ChannelRealization> {
    config.validate()?;
    ChannelRealization::from_paths(config.clone(), draw_paths(config))
}

impl ChannelRealization {
    /// Assembles `H[k]` from an explicit path set.
    pub fn from_paths(config: SystemConfig, paths: PathSet) -> Result<Self> {
        config.validate()?;
        if paths.rays.is_empty() {
            return Err(Error::Config("path set has no rays".into()));
        }
        if let Some(r) = paths.rays.iter().find(|r| r.gains.len() != config.subcarriers) {
            return Err(Error::Config(format!("ray has {} gains, expected {}", r.gains.len(), config.subcarriers)));
        }
        let gamma = paths.gamma(config.n_t, config.n_r);
        let freqs = subcarrier_frequencies(&config);
        let per_subcarrier = crate::par::map_indexed(freqs.len(), |k| {
            let f_k = freqs[k];
            let mut h = ComplexMatrix::zeros(config.n_r, config.n_t);
            for ray in &paths.rays {
                let a_r = array_response(config.n_r, normalized_angle(ray.aoa, f_k, config.f_c));
                let a_t = array_response(config.n_t, normalized_angle(ray.aod, f_k, config.f_c));
                let coeff = ray.gains[k] * PathSet::delay_phasor(ray.delay, f_k) * gamma;
                h.ger(coeff, &a_r, &a_t.conjugate(), Complex64::new(1.0, 0.0));
            }
            h
        });
        Ok(Self { config, paths, gamma, per_subcarrier })
    }

    /// A channel from explicit matrices (no path metadata).
    pub fn from_matrices(config: SystemConfig, per_subcarrier: Vec<ComplexMatrix>) -> Result<Self> {
        config.validate()?;
        if per_subcarrier.len() != config.subcarriers || per_subcarrier.iter().any(|h| h.shape() != (config.n_r, config.n_t)) {
            return Err(Error::Config("channel matrix dimensions do not match config".into()));
        }
        Ok(Self {
            config,
            paths: PathSet { clusters: 0, rays_per_cluster: Vec::new(), rays: Vec::new() },
            gamma: 1.0,
            per_subcarrier,
        })
    }

    pub fn subcarriers(&self) -> usize {
        self.per_subcarrier.len()
    }

    /// `H[k]^H H[k]` for every subcarrier.
    pub fn gram(&self) -> Vec<ComplexMatrix> {
        crate::par::map_slice(&self.per_subcarrier, |h| h.adjoint() * h)
    }

    /// `(1/K) sum_k H[k]`.
    pub fn average(&self) -> ComplexMatrix {
        let mut acc = ComplexMatrix::zeros(self.config.n_r, self.config.n_t);
        for h in &self.per_subcarrier {
            acc += h;
        }
        acc.scale(1.0 / self.subcarriers() as f64)
    }

    /// Copy of this channel with every matrix replaced by `f(k, H[k])`.
    pub fn map_matrices(&self, f: impl Fn(usize, &ComplexMatrix) -> ComplexMatrix) -> Self {
        let mut out = self.clone();
        for (k, h) in out.per_subcarrier.iter_mut().enumerate() {
            *h = f(k, h);
        }
        out
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), &ChannelFile::from(self))?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let parsed: ChannelFile = serde_json::from_reader(std::io::BufReader::new(file))?;
        parsed.try_into()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(&ChannelFile::from(self))?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str::<ChannelFile>(s)?.try_into()
    }
}

/// Format tag written into every channel dump.
pub const CHANNEL_FORMAT: &str = "thz-hybrid/channel/v1";

/// On-disk channel representation. Matrices are stored row-major as separate
/// real and imaginary arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelFile {
    pub format: String,
    pub config: SystemConfig,
    pub seed: u64,
    pub gamma: f64,
    pub paths: PathSet,
    pub subcarriers: Vec<MatrixRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl From<&ComplexMatrix> for MatrixRecord {
    fn from(m: &ComplexMatrix) -> Self {
        let (rows, cols) = m.shape();
        let mut re = Vec::with_capacity(rows * cols);
        let mut im = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                re.push(m[(i, j)].re);
                im.push(m[(i, j)].im);
            }
        }
        Self { rows, cols, re, im }
    }
}

impl TryFrom<&MatrixRecord> for ComplexMatrix {
    type Error = Error;

    fn try_from(r: &MatrixRecord) -> Result<Self> {
        let n = r.rows * r.cols;
        if r.re.len() != n || r.im.len() != n {
            return Err(Error::Config(format!(
                "matrix record {}x{} has {} real / {} imaginary entries",
                r.rows,
                r.cols,
                r.re.len(),
                r.im.len()
            )));
        }
        Ok(ComplexMatrix::from_fn(r.rows, r.cols, |i, j| Complex64::new(r.re[i * r.cols + j], r.im[i * r.cols + j])))
    }
}

impl From<&ChannelRealization> for ChannelFile {
    fn from(ch: &ChannelRealization) -> Self {
        Self {
            format: CHANNEL_FORMAT.to_string(),
            config: ch.config.clone(),
            seed: ch.config.rng_seed,
            gamma: ch.gamma,
            paths: ch.paths.clone(),
            subcarriers: ch.per_subcarrier.iter().map(MatrixRecord::from).collect(),
        }
    }
}

impl TryFrom<ChannelFile> for ChannelRealization {
    type Error = Error;

    fn try_from(f: ChannelFile) -> Result<Self> {
        if f.format != CHANNEL_FORMAT {
            return Err(Error::Config(format!("unknown channel format {:?}", f.format)));
        }
        f.config.validate()?;
        let per_subcarrier = f.subcarriers.iter().map(ComplexMatrix::try_from).collect::<Result<Vec<_>>>()?;
        if per_subcarrier.len() != f.config.subcarriers
            || per_subcarrier.iter().any(|h| h.shape() != (f.config.n_r, f.config.n_t))
        {
            return Err(Error::Config("channel matrix dimensions do not match config".into()));
        }
        Ok(Self { config: f.config, paths: f.paths, gamma: f.gamma, per_subcarrier })
    }
}

/// Angular gain of a frequency-flat analog vector across subcarriers.
///
/// Entry `(a, k)` is `|a_t(psi(angle_a, f_k))^H f_rf| / ||f_rf||`, so a beam
/// matched at its own frequency scores exactly 1.
pub fn array_gain_map(config: &SystemConfig, f_rf: &DVector<Complex64>, angles: &[f64]) -> Vec<Vec<f64>> {
    let freqs = subcarrier_frequencies(config);
    let n_t = f_rf.len();
    let norm = f_rf.norm();
    crate::par::map_slice(angles, |&theta| {
        freqs
            .iter()
            .map(|&f_k| {
                if norm == 0.0 {
                    return 0.0;
                }
                let a = array_response(n_t, normalized_angle(theta, f_k, config.f_c));
                a.dotc(f_rf).norm() / norm
            })
            .collect()
    })
}

/// A single-path channel at the carrier with departure angle `aod`, used for
/// narrowband beam design.
pub fn line_of_sight(n_r: usize, n_t: usize, aod: f64, aoa: f64) -> ComplexMatrix {
    let a_r = array_response(n_r, aoa.sin());
    let a_t = array_response(n_t, aod.sin());
    let mut h = ComplexMatrix::zeros(n_r, n_t);
    let gamma = ((n_t * n_r) as f64).sqrt();
    h.ger(Complex64::new(gamma, 0.0), &a_r, &a_t.conjugate(), ZERO);
    h
}
