use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Analog network topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Structure {
    FullyConnected,
    PartiallyConnected,
    DynamicSubarray,
}

impl Structure {
    pub fn name(self) -> &'static str {
        match self {
            Structure::FullyConnected => "FullyConnected",
            Structure::PartiallyConnected => "PartiallyConnected",
            Structure::DynamicSubarray => "DynamicSubarray",
        }
    }
}

/// Scalar system parameters. Serialized field names follow the usual
/// notation (`N_t`, `P_t`, ...) so config files read like a parameter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Carrier frequency in Hz.
    pub f_c: f64,
    /// Bandwidth in Hz.
    #[serde(rename = "B")]
    pub bandwidth: f64,
    #[serde(rename = "K")]
    pub subcarriers: usize,
    #[serde(rename = "N_t")]
    pub n_t: usize,
    #[serde(rename = "N_r")]
    pub n_r: usize,
    #[serde(rename = "N_rf_t")]
    pub n_rf_t: usize,
    #[serde(rename = "N_rf_r")]
    pub n_rf_r: usize,
    #[serde(rename = "N_s")]
    pub n_s: usize,
    /// Per-stream transmit power (linear).
    #[serde(rename = "P_t")]
    pub p_t: f64,
    /// Per-subcarrier noise power (linear).
    pub sigma2_n: f64,
    /// Phase-shifter resolution in bits.
    pub bits: u32,
    pub structure: Structure,
    pub rng_seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl SystemConfig {
    /// Desk-scale defaults: 300 GHz carrier, 30 GHz bandwidth, 16x8 antennas,
    /// 4 RF chains, 2 streams, 8 subcarriers, 3-bit shifters, 10 dB SNR.
    pub fn desk() -> Self {
        Self {
            f_c: 300e9,
            bandwidth: 30e9,
            subcarriers: 8,
            n_t: 16,
            n_r: 8,
            n_rf_t: 4,
            n_rf_r: 4,
            n_s: 2,
            p_t: 10.0,
            sigma2_n: 1.0,
            bits: 3,
            structure: Structure::FullyConnected,
            rng_seed: 0,
        }
    }

    /// `P_t / sigma^2_n`.
    pub fn snr_linear(&self) -> f64 {
        self.p_t / self.sigma2_n
    }

    /// Sets `P_t` so that `P_t / sigma^2_n` equals `snr_db`.
    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.p_t = 10f64.powf(snr_db / 10.0) * self.sigma2_n;
        self
    }

    pub fn with_structure(mut self, structure: Structure) -> Self {
        self.structure = structure;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.f_c > 0.0 && self.f_c.is_finite()) {
            return fail(format!("f_c must be positive, got {}", self.f_c));
        }
        if !(self.bandwidth >= 0.0 && self.bandwidth < 2.0 * self.f_c) {
            return fail(format!("B must satisfy 0 <= B < 2 f_c, got {}", self.bandwidth));
        }
        if self.subcarriers == 0 {
            return fail("K must be at least 1".into());
        }
        if self.n_t == 0 || self.n_r == 0 {
            return fail("antenna counts must be positive".into());
        }
        if self.n_rf_t == 0 || self.n_rf_t > self.n_t {
            return fail(format!("need 1 <= N_rf_t <= N_t, got N_rf_t={} N_t={}", self.n_rf_t, self.n_t));
        }
        if self.n_rf_r == 0 || self.n_rf_r > self.n_r {
            return fail(format!("need 1 <= N_rf_r <= N_r, got N_rf_r={} N_r={}", self.n_rf_r, self.n_r));
        }
        if self.n_s == 0 || self.n_s > self.n_rf_t.min(self.n_rf_r) {
            return fail(format!(
                "need 1 <= N_s <= min(N_rf_t, N_rf_r), got N_s={} N_rf_t={} N_rf_r={}",
                self.n_s, self.n_rf_t, self.n_rf_r
            ));
        }
        if !(self.p_t > 0.0 && self.p_t.is_finite()) || !(self.sigma2_n > 0.0 && self.sigma2_n.is_finite()) {
            return fail("P_t and sigma2_n must be positive and finite".into());
        }
        if self.bits == 0 || self.bits > 16 {
            return fail(format!("bits must be in 1..=16, got {}", self.bits));
        }
        if self.structure == Structure::PartiallyConnected && !self.n_t.is_multiple_of(self.n_rf_t) {
            return fail(format!(
                "partially-connected structure needs N_rf_t | N_t, got N_t={} N_rf_t={}",
                self.n_t, self.n_rf_t
            ));
        }
        Ok(())
    }

    /// Parses the key-value config file format.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: SystemConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies the keys present in a config file on top of `self`; absent
    /// keys keep their current values.
    pub fn overlay_toml_str(&self, s: &str) -> Result<Self> {
        let overrides: toml::Table = toml::from_str(s)?;
        let mut table = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        table.extend(overrides);
        let cfg: SystemConfig = table.try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_is_valid() {
        SystemConfig::desk().validate().unwrap();
    }

    #[test]
    fn rejects_bad_configs() {
        let base = SystemConfig::desk();
        let cases = [
            SystemConfig { n_s: 5, ..base.clone() },
            SystemConfig { n_rf_t: 17, ..base.clone() },
            SystemConfig { subcarriers: 0, ..base.clone() },
            SystemConfig { bits: 0, ..base.clone() },
            SystemConfig { bandwidth: 700e9, ..base.clone() },
            SystemConfig { n_rf_t: 3, n_s: 2, structure: Structure::PartiallyConnected, ..base.clone() },
        ];
        for cfg in cases {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn snr_conversion() {
        let cfg = SystemConfig::desk().with_snr_db(20.0);
        assert!((cfg.p_t - 100.0).abs() < 1e-12);
        assert!((cfg.snr_linear() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn parses_key_value_file() {
        let text = r#"
f_c = 300e9
B = 30e9
K = 8
N_t = 16
N_r = 8
N_rf_t = 4
N_rf_r = 4
N_s = 2
P_t = 10.0
sigma2_n = 1.0
bits = 3
structure = "PartiallyConnected"
rng_seed = 7
"#;
        let cfg = SystemConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.structure, Structure::PartiallyConnected);
        assert_eq!(cfg.rng_seed, 7);
        assert_eq!(cfg.n_t, 16);
        assert!(SystemConfig::from_toml_str("N_q = 3").is_err());
        let cfg = SystemConfig::desk().overlay_toml_str("N_t = 8\nbits = 2").unwrap();
        assert_eq!((cfg.n_t, cfg.bits, cfg.subcarriers), (8, 2, SystemConfig::desk().subcarriers));
        assert!(SystemConfig::desk().overlay_toml_str("N_q = 3").is_err());
    }
}
