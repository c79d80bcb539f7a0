use serde::{Deserialize, Serialize};

use super::codebook::PhaseCodebook;
use crate::config::{Structure, SystemConfig};
use crate::constants::{ENTRY_TOL, POWER_TOL};
use crate::error::{Error, Result};
use crate::numerics::{frobenius_sq, ComplexMatrix};

/// Frequency-flat analog matrix plus per-subcarrier digital matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridPrecoder {
    /// `N_t x N_rf` analog precoder.
    pub f_rf: ComplexMatrix,
    /// `K` digital precoders, each `N_rf x N_s`.
    pub f_bb: Vec<ComplexMatrix>,
    pub structure: Structure,
}

/// Rows of the fixed subarray served by RF chain `chain` (0-based).
pub fn subarray_rows(n_t: usize, n_rf: usize, chain: usize) -> std::ops::Range<usize> {
    let block = n_t / n_rf;
    chain * block..(chain + 1) * block
}

impl HybridPrecoder {
    /// `||F_RF F_BB[k]||_F^2` per subcarrier.
    pub fn transmit_power(&self) -> Vec<f64> {
        self.f_bb.iter().map(|b| frobenius_sq(&(&self.f_rf * b))).collect()
    }

    /// Number of nonzero analog entries (phase shifters in use).
    pub fn active_shifters(&self) -> usize {
        self.f_rf.iter().filter(|z| z.norm() > 0.0).count()
    }

    /// Checks every structural and power invariant against `config`.
    pub fn check(&self, config: &SystemConfig) -> Result<()> {
        let fail = |msg: String| Err(Error::Invariant(msg));
        let (n_t, n_rf) = (config.n_t, config.n_rf_t);
        if self.f_rf.shape() != (n_t, n_rf) {
            return fail(format!("F_RF is {:?}, expected ({n_t}, {n_rf})", self.f_rf.shape()));
        }
        if self.f_bb.len() != config.subcarriers {
            return fail(format!("{} digital precoders for K={}", self.f_bb.len(), config.subcarriers));
        }
        if let Some((k, b)) = self.f_bb.iter().enumerate().find(|(_, b)| b.shape() != (n_rf, config.n_s)) {
            return fail(format!("F_BB[{k}] is {:?}, expected ({n_rf}, {})", b.shape(), config.n_s));
        }
        if self.f_rf.iter().chain(self.f_bb.iter().flat_map(|b| b.iter())).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return fail("non-finite precoder entry".into());
        }
        let codebook = PhaseCodebook::new(config.bits);
        let modulus = 1.0 / (n_t as f64).sqrt();
        let check_entry = |i: usize, j: usize| -> Result<()> {
            let z = self.f_rf[(i, j)];
            if (z.norm() - modulus).abs() > ENTRY_TOL {
                return fail(format!("F_RF[{i},{j}] has modulus {:.6e}, expected {modulus:.6e}", z.norm()));
            }
            if !codebook.contains(z.arg(), ENTRY_TOL) {
                return fail(format!("F_RF[{i},{j}] phase {:.6} is not a {}-bit codebook phase", z.arg(), config.bits));
            }
            Ok(())
        };
        match self.structure {
            Structure::FullyConnected => {
                for i in 0..n_t {
                    for j in 0..n_rf {
                        check_entry(i, j)?;
                    }
                }
            }
            Structure::PartiallyConnected => {
                if n_t % n_rf != 0 {
                    return fail(format!("N_rf={n_rf} does not divide N_t={n_t}"));
                }
                for j in 0..n_rf {
                    let rows = subarray_rows(n_t, n_rf, j);
                    for i in 0..n_t {
                        if rows.contains(&i) {
                            check_entry(i, j)?;
                        } else if self.f_rf[(i, j)].norm() != 0.0 {
                            return fail(format!("F_RF[{i},{j}] is outside the block diagonal but nonzero"));
                        }
                    }
                }
            }
            Structure::DynamicSubarray => {
                for i in 0..n_t {
                    let nz: Vec<usize> = (0..n_rf).filter(|&j| self.f_rf[(i, j)].norm() != 0.0).collect();
                    if nz.len() > 1 {
                        return fail(format!("F_RF row {i} has {} nonzero entries", nz.len()));
                    }
                    for j in nz {
                        check_entry(i, j)?;
                    }
                }
            }
        }
        let target = config.n_s as f64 * config.p_t;
        for (k, p) in self.transmit_power().into_iter().enumerate() {
            if (p - target).abs() > POWER_TOL * target.max(1.0) {
                return fail(format!("subcarrier {k} transmits {p:.12e}, expected {target:.12e}"));
            }
        }
        Ok(())
    }
}
