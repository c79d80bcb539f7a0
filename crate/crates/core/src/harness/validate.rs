//! Randomized invariant suite over the solvers.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;

use super::Scheme;
use crate::channel::generate_channel;
use crate::config::{Structure, SystemConfig};
use crate::evalcore::{subarray_rows, HybridPrecoder, PhaseCodebook};
use crate::rng::{stream, Stream};
use crate::solver::SolverOptions;

const TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ViolationKind {
    Shape,
    NonFinite,
    Modulus,
    Codebook,
    BlockDiagonal,
    RowNorm,
    Power,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

/// Every invariant violation of `p` under `config`, without stopping at the
/// first one.
pub fn invariant_violations(p: &HybridPrecoder, config: &SystemConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |kind, detail: String| out.push(Violation { kind, detail });
    let (n_t, n_rf) = (config.n_t, config.n_rf_t);
    if p.f_rf.shape() != (n_t, n_rf)
        || p.f_bb.len() != config.subcarriers
        || p.f_bb.iter().any(|b| b.shape() != (n_rf, config.n_s))
    {
        push(ViolationKind::Shape, format!("F_RF {:?}, {} digital blocks", p.f_rf.shape(), p.f_bb.len()));
        return out;
    }
    if p.f_rf.iter().chain(p.f_bb.iter().flatten()).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        push(ViolationKind::NonFinite, "non-finite entry".into());
        return out;
    }
    let codebook = PhaseCodebook::new(config.bits);
    let modulus = 1.0 / (n_t as f64).sqrt();
    for i in 0..n_t {
        let mut nonzero = 0;
        for j in 0..n_rf {
            let z = p.f_rf[(i, j)];
            let allowed = match p.structure {
                Structure::FullyConnected | Structure::DynamicSubarray => true,
                Structure::PartiallyConnected => n_t % n_rf == 0 && subarray_rows(n_t, n_rf, j).contains(&i),
            };
            if z.norm() == 0.0 {
                if matches!(p.structure, Structure::FullyConnected) || (p.structure == Structure::PartiallyConnected && allowed) {
                    push(ViolationKind::Modulus, format!("F_RF[{i},{j}] is zero"));
                }
                continue;
            }
            nonzero += 1;
            if !allowed {
                push(ViolationKind::BlockDiagonal, format!("F_RF[{i},{j}] outside its block"));
            }
            if (z.norm() - modulus).abs() > TOL {
                push(ViolationKind::Modulus, format!("|F_RF[{i},{j}]| = {}", z.norm()));
            }
            if !codebook.contains(z.arg(), TOL) {
                push(ViolationKind::Codebook, format!("arg F_RF[{i},{j}] = {}", z.arg()));
            }
        }
        if p.structure == Structure::DynamicSubarray && nonzero > 1 {
            push(ViolationKind::RowNorm, format!("row {i} has {nonzero} connections"));
        }
    }
    let target = config.n_s as f64 * config.p_t;
    for (k, power) in p.transmit_power().into_iter().enumerate() {
        if (power - target).abs() > TOL * target.max(1.0) {
            push(ViolationKind::Power, format!("subcarrier {k}: {power} vs {target}"));
        }
    }
    out
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct InvariantReport {
    pub operations: usize,
    pub per_scheme: BTreeMap<String, usize>,
    pub violations_by_kind: BTreeMap<String, usize>,
    /// First few violations, for diagnosis.
    pub examples: Vec<(usize, Scheme, Violation)>,
    /// Operations whose solver returned an error instead of a precoder.
    pub solver_errors: Vec<(usize, Scheme, String)>,
}

impl InvariantReport {
    pub fn violation_count(&self) -> usize {
        self.violations_by_kind.values().sum()
    }
}

const HYBRID: [Scheme; 4] = [Scheme::AlterOptFC, Scheme::AlterOptPC, Scheme::DSWB, Scheme::DirectQuantSVD];

/// A random small configuration for operation `op`.
fn random_case(seed: u64, op: usize) -> (SystemConfig, Scheme) {
    let mut rng = stream(seed.wrapping_add(op as u64), Stream::Validate);
    let n_rf = rng.random_range(1..=3);
    let n_t = n_rf * rng.random_range(1..=4);
    let n_r = rng.random_range(1..=4);
    let n_rf_r = n_rf.min(n_r);
    let n_s = rng.random_range(1..=n_rf.min(n_rf_r));
    let cfg = SystemConfig {
        n_t,
        n_r,
        n_rf_t: n_rf,
        n_rf_r,
        n_s,
        subcarriers: rng.random_range(1..=4),
        bits: rng.random_range(1..=4),
        rng_seed: rng.random(),
        ..SystemConfig::desk()
    }
    .with_snr_db(rng.random_range(-10.0..30.0));
    let scheme = HYBRID[rng.random_range(0..HYBRID.len())];
    (cfg.with_structure(scheme.structure()), scheme)
}

/// Runs `operations` random solves (small configs, every hybrid scheme) and
/// checks each returned precoder.
pub fn run_invariant_suite(operations: usize, seed: u64) -> InvariantReport {
    let opts = SolverOptions { max_iters: 3, ..Default::default() };
    let outcomes = crate::par::map_indexed(operations, |op| {
        let (cfg, scheme) = random_case(seed, op);
        let result = generate_channel(&cfg).and_then(|ch| scheme.solve(&ch, &opts));
        let found = result.map(|out| invariant_violations(out.precoder().expect("hybrid scheme"), &cfg));
        (op, scheme, found)
    });
    let mut report = InvariantReport { operations, ..Default::default() };
    for (op, scheme, found) in outcomes {
        *report.per_scheme.entry(scheme.name().to_string()).or_default() += 1;
        match found {
            Err(e) => report.solver_errors.push((op, scheme, e.to_string())),
            Ok(violations) => {
                for v in violations {
                    *report.violations_by_kind.entry(format!("{:?}", v.kind)).or_default() += 1;
                    if report.examples.len() < 10 {
                        report.examples.push((op, scheme, v));
                    }
                }
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ComplexMatrix;
    use num_complex::Complex64;

    #[test]
    fn detects_each_kind() {
        let cfg = SystemConfig { n_t: 4, n_r: 2, n_rf_t: 2, n_rf_r: 2, n_s: 1, subcarriers: 1, bits: 2, ..SystemConfig::desk() };
        let m = 0.5;
        let good_rf =
            ComplexMatrix::from_fn(4, 2, |i, j| if i / 2 == j { Complex64::new(m, 0.0) } else { Complex64::new(0.0, 0.0) });
        let f_bb = ComplexMatrix::from_fn(2, 1, |_, _| Complex64::new((cfg.p_t / 2.0 / 2.0 / 0.25).sqrt() * 0.5, 0.0));
        let mut p = HybridPrecoder { f_rf: good_rf, f_bb: vec![f_bb], structure: Structure::PartiallyConnected };
        let scale = (cfg.p_t / p.transmit_power()[0]).sqrt();
        p.f_bb[0] = p.f_bb[0].scale(scale);
        assert!(invariant_violations(&p, &cfg).is_empty());

        let kinds = |p: &HybridPrecoder| invariant_violations(p, &cfg).into_iter().map(|v| v.kind).collect::<Vec<_>>();
        let mut q = p.clone();
        q.f_rf[(0, 1)] = Complex64::new(m, 0.0);
        assert!(kinds(&q).contains(&ViolationKind::BlockDiagonal));
        q.structure = Structure::DynamicSubarray;
        assert!(kinds(&q).contains(&ViolationKind::RowNorm));
        let mut q = p.clone();
        q.f_rf[(1, 0)] = Complex64::from_polar(m, 0.3);
        assert!(kinds(&q).contains(&ViolationKind::Codebook));
        q.f_rf[(1, 0)] = Complex64::new(0.7, 0.0);
        assert!(kinds(&q).contains(&ViolationKind::Modulus));
        let mut q = p.clone();
        q.f_bb[0] = q.f_bb[0].scale(2.0);
        assert_eq!(kinds(&q), vec![ViolationKind::Power]);
    }

    #[test]
    fn small_suite_is_clean() {
        let report = run_invariant_suite(200, 1);
        assert_eq!(report.violation_count(), 0, "{:?}", report.examples);
        assert_eq!(report.per_scheme.values().sum::<usize>(), 200);
    }
}
