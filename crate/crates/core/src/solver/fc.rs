//! Fully-connected structure: element-wise phase coordinate descent.
//!
//! With the digital precoders fixed, the objective per subcarrier is
//! `log2|Q| + log2|Q^{-1} + rho F^H Hhat F|` with `Q = F_BB F_BB^H + alpha I`.
//! Splitting off analog column `m` by a block determinant leaves a scalar
//! Schur complement `s_k(f_m)` that is quadratic in `f_m`; each element of
//! `f_m` is then set to the phase that maximizes `sum_k log s_k` to first
//! order.

use nalgebra::DVector;
use num_complex::Complex64;

use super::{run_alternating, Solution, SolverFlags, SolverOptions};
use crate::channel::ChannelRealization;
use crate::config::{Structure, SystemConfig};
use crate::error::{Error, Result, ResultExt};
use crate::evalcore::{analog_whitener, default_alpha, regularized_gram, update_digital, PhaseCodebook};
use crate::numerics::{
    cholesky, drop_column, hermitian_part, inverse_hermitian, logdet_hermitian, pairwise_mean, ComplexMatrix, ZERO,
};
use crate::rng::{stream, Stream};

/// Random codebook phases with modulus `1/sqrt(N_t)`.
pub fn init_fc(config: &SystemConfig, codebook: &PhaseCodebook, seed: u64) -> ComplexMatrix {
    use rand::Rng;
    let mut rng = stream(seed, Stream::FullyConnectedInit);
    let modulus = 1.0 / (config.n_t as f64).sqrt();
    let mut f = ComplexMatrix::zeros(config.n_t, config.n_rf_t);
    // Small arrays with coarse codebooks can draw dependent columns; redraw
    // from the same stream until the columns are independent.
    for _ in 0..INIT_ATTEMPTS {
        // Column-major fill keeps the draw order independent of matrix layout.
        for j in 0..config.n_rf_t {
            for i in 0..config.n_t {
                f[(i, j)] = codebook.element(rng.random_range(0..codebook.len()), modulus);
            }
        }
        if analog_whitener(&f).is_ok() {
            break;
        }
    }
    f
}

const INIT_ATTEMPTS: usize = 256;

/// Per-subcarrier terms of the column-`m` decomposition.
///
/// The terms are formed from `N^{-1} = L (I + rho L^H E L)^{-1} L^H`, where
/// `Q = L L^H` and `E` is `F^H Hhat F` with row and column `m` zeroed, so `N`
/// is `Q^{-1} + rho E`. This avoids inverting the badly conditioned `C`
/// directly: `D = 1 / N^{-1}[m,m]`, `C^{-1} q_{\m,m} = -N^{-1}[\m,m] D` and
/// `C^{-1}` is the Schur complement of `N^{-1}` on the remaining block.
#[derive(Debug, Clone)]
pub struct SubcarrierTerms {
    /// `Q = F_BB F_BB^H + alpha I`.
    pub q: ComplexMatrix,
    /// Inverse of `C = [Q^{-1}]_{\m,\m} + rho F_{\m}^H Hhat F_{\m}`.
    pub c_inv: ComplexMatrix,
    /// `log2 |C|`.
    pub logdet_c: f64,
    /// `log2 |Q|`.
    pub logdet_q: f64,
    /// `Hhat F_{\m} C^{-1} [Q^{-1}]_{\m,m}`.
    pub h_em: DVector<Complex64>,
    /// `Hhat - rho Hhat F_{\m} C^{-1} F_{\m}^H Hhat`.
    pub g: ComplexMatrix,
    /// `[Q^{-1}]_{m,m} - [Q^{-1}]_{m,\m} C^{-1} [Q^{-1}]_{\m,m}`.
    pub d: f64,
    /// `G f_m`, kept current as elements change.
    gf: DVector<Complex64>,
    /// The Schur complement `s = D - 2 rho Re(f^H h_em) + rho f^H G f`.
    schur: f64,
}

/// Workspace for coordinate updates of one analog column.
#[derive(Debug, Clone)]
pub struct FcWorkspace {
    pub column: usize,
    pub rho: f64,
    /// Current value of the column being optimized.
    pub f: DVector<Complex64>,
    pub terms: Vec<SubcarrierTerms>,
}

/// Phase chosen for one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseChoice {
    pub phase: f64,
    /// The complex argument was exactly zero and phase 0 was used.
    pub zero_argument: bool,
}

impl SubcarrierTerms {
    fn schur_of(&self, f: &DVector<Complex64>, gf: &DVector<Complex64>, rho: f64) -> f64 {
        self.d - 2.0 * rho * f.dotc(&self.h_em).re + rho * f.dotc(gf).re
    }

    fn build(h: &ComplexMatrix, f_rf: &ComplexMatrix, f_bb: &ComplexMatrix, m: usize, rho: f64) -> Result<Self> {
        let n_rf = f_rf.ncols();
        let rest: Vec<usize> = (0..n_rf).filter(|&j| j != m).collect();
        let q = regularized_gram(f_bb, default_alpha(f_bb));
        let l = cholesky(&q)?;
        let logdet_q: f64 = (0..n_rf).map(|i| 2.0 * l[(i, i)].re.log2()).sum();
        let hf_all = h * f_rf;
        let mut e = hermitian_part(&(f_rf.adjoint() * &hf_all));
        for j in 0..n_rf {
            e[(m, j)] = ZERO;
            e[(j, m)] = ZERO;
        }
        let inner = hermitian_part(&(l.adjoint() * &e * &l).scale(rho)) + ComplexMatrix::identity(n_rf, n_rf);
        let inner_inv = inverse_hermitian(&inner)?;
        let n_inv = hermitian_part(&(&l * inner_inv * l.adjoint()));
        let n_mm = n_inv[(m, m)].re;
        let d = 1.0 / n_mm;
        let logdet_inner = logdet_hermitian(&inner)?;
        // |N| = |C| D and |N^{-1}| = |Q| / |inner|.
        let logdet_c = logdet_inner - logdet_q + n_mm.log2();
        let (c_inv, h_em, g) = if rest.is_empty() {
            (ComplexMatrix::zeros(0, 0), DVector::zeros(f_rf.nrows()), h.clone())
        } else {
            let n_rm = DVector::from_fn(rest.len(), |a, _| n_inv[(rest[a], m)]);
            let c_inv = hermitian_part(&ComplexMatrix::from_fn(rest.len(), rest.len(), |a, b| {
                n_inv[(rest[a], rest[b])] - n_rm[a] * n_rm[b].conj() * d
            }));
            let hf = drop_column(&hf_all, m);
            let h_em = (&hf * &n_rm).scale(-d);
            let g = hermitian_part(&(h - (&hf * &c_inv * hf.adjoint()).scale(rho)));
            (c_inv, h_em, g)
        };
        let f = f_rf.column(m).clone_owned();
        let gf = &g * &f;
        let mut t = SubcarrierTerms { q, c_inv, logdet_c, logdet_q, h_em, g, d, gf, schur: 0.0 };
        t.schur = t.schur_of(&f, &t.gf, rho);
        Ok(t)
    }
}

impl FcWorkspace {
    /// Builds the decomposition for column `m` from `Hhat[k] = H[k]^H H[k]`.
    pub fn build(hhat: &[ComplexMatrix], f_rf: &ComplexMatrix, f_bb: &[ComplexMatrix], m: usize, rho: f64) -> Result<Self> {
        let terms = crate::par::try_map_indexed(hhat.len(), |k| {
            SubcarrierTerms::build(&hhat[k], f_rf, &f_bb[k], m, rho).context_with(|| format!("column {m} workspace, k={k}"))
        })?;
        Ok(Self { column: m, rho, f: f_rf.column(m).clone_owned(), terms })
    }

    /// Convenience constructor from a channel.
    pub fn from_channel(channel: &ChannelRealization, f_rf: &ComplexMatrix, f_bb: &[ComplexMatrix], m: usize) -> Result<Self> {
        Self::build(&channel.gram(), f_rf, f_bb, m, channel.config.snr_linear())
    }

    /// Determinant argument `M[k]` (the scalar Schur complement), kept
    /// current by [`FcWorkspace::set_element`].
    pub fn schur(&self, k: usize) -> f64 {
        self.terms[k].schur
    }

    /// The Schur complement for subcarrier `k` if column `m` were `f`,
    /// evaluated from the full quadratic form.
    pub fn schur_at(&self, k: usize, f: &DVector<Complex64>) -> f64 {
        let t = &self.terms[k];
        t.schur_of(f, &(&t.g * f), self.rho)
    }

    /// `mean_k (log2|Q| + log2|C| + log2 M)`, which equals the decoupled
    /// objective at the current column value.
    pub fn objective(&self) -> f64 {
        let per: Vec<f64> = self.terms.iter().map(|t| t.logdet_q + t.logdet_c + t.schur.log2()).collect();
        pairwise_mean(&per)
    }

    /// Maximizer over the phase of element `n` of `sum_k s_k / M[k]` with
    /// `M[k]` held at its current value: the argument of
    /// `sum_k z_k / M[k]` where `z_k = sum_{l != n} G[n,l] f_l - h_em[n]`.
    pub fn optimal_continuous_phase(&self, n: usize) -> PhaseChoice {
        let mut acc = ZERO;
        for t in &self.terms {
            let z = t.gf[n] - t.g[(n, n)] * self.f[n] - t.h_em[n];
            acc += z / t.schur;
        }
        if acc == ZERO {
            PhaseChoice { phase: 0.0, zero_argument: true }
        } else {
            PhaseChoice { phase: acc.arg().rem_euclid(std::f64::consts::TAU), zero_argument: false }
        }
    }

    /// Sets element `n` of the column and refreshes `G f` and `M[k]` with a
    /// rank-one update.
    pub fn set_element(&mut self, n: usize, value: Complex64) {
        let delta = value - self.f[n];
        self.f[n] = value;
        let rho = self.rho;
        for t in &mut self.terms {
            t.gf.axpy(delta, &t.g.column(n), ONE_C);
            t.schur = t.schur_of(&self.f, &t.gf, rho);
        }
    }

    /// Recomputes `G f` and `M[k]` from scratch.
    pub fn refresh(&mut self) {
        for t in &mut self.terms {
            t.gf = &t.g * &self.f;
            t.schur = t.schur_of(&self.f, &t.gf, self.rho);
        }
    }
}

const ONE_C: Complex64 = Complex64::new(1.0, 0.0);

/// One pass over the analog columns, updating only the rows listed in
/// `active[m]` for column `m`. The digital precoders are refreshed after
/// every column. A column update that leaves `F_RF` singular is rolled back.
pub(crate) fn coordinate_sweep(
    channel: &ChannelRealization,
    hhat: &[ComplexMatrix],
    f_rf: &mut ComplexMatrix,
    f_bb: &mut Vec<ComplexMatrix>,
    active: &[Vec<usize>],
    opts: &SolverOptions,
    flags: &mut SolverFlags,
) -> Result<()> {
    let cfg = &channel.config;
    let codebook = PhaseCodebook::new(cfg.bits);
    let modulus = 1.0 / (cfg.n_t as f64).sqrt();
    let rho = cfg.snr_linear();
    for (m, rows) in active.iter().enumerate() {
        let mut ws = FcWorkspace::build(hhat, f_rf, f_bb, m, rho)?;
        let previous = f_rf.column(m).clone_owned();
        for &n in rows {
            let choice = ws.optimal_continuous_phase(n);
            if choice.zero_argument {
                flags.zero_argument_phases += 1;
            }
            let value = if opts.quantize {
                codebook.element(codebook.quantize_index(choice.phase), modulus)
            } else {
                Complex64::from_polar(modulus, choice.phase)
            };
            ws.set_element(n, value);
        }
        f_rf.set_column(m, &ws.f);
        match update_digital(channel, f_rf) {
            Ok(b) => *f_bb = b,
            Err(Error::RankDeficient { .. }) => {
                f_rf.set_column(m, &previous);
                flags.rejected_columns += 1;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

/// Fully-connected solve from a random codebook initialization.
pub fn solve_fc(channel: &ChannelRealization, opts: &SolverOptions) -> Result<Solution> {
    let cfg = &channel.config;
    let init = init_fc(cfg, &PhaseCodebook::new(cfg.bits), cfg.rng_seed);
    solve_fc_from(channel, init, opts)
}

/// Fully-connected solve from a given analog matrix.
pub fn solve_fc_from(channel: &ChannelRealization, init: ComplexMatrix, opts: &SolverOptions) -> Result<Solution> {
    let cfg = &channel.config;
    let hhat = channel.gram();
    let active: Vec<Vec<usize>> = vec![(0..cfg.n_t).collect(); cfg.n_rf_t];
    run_alternating(channel, Structure::FullyConnected, init, opts, SolverFlags::default(), |f_rf, f_bb, flags| {
        coordinate_sweep(channel, &hhat, f_rf, f_bb, &active, opts, flags)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate_channel;
    use crate::evalcore::{average_rate, decoupled_rate};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small(n_t: usize, n_rf: usize, n_s: usize, k: usize, bits: u32, seed: u64) -> SystemConfig {
        SystemConfig {
            n_t,
            n_r: n_t.max(2),
            n_rf_t: n_rf,
            n_rf_r: n_rf,
            n_s,
            subcarriers: k,
            bits,
            rng_seed: seed,
            ..SystemConfig::desk()
        }
    }

    fn setup(cfg: &SystemConfig) -> (ChannelRealization, ComplexMatrix, Vec<ComplexMatrix>) {
        let ch = generate_channel(cfg).unwrap();
        let f_rf = init_fc(cfg, &PhaseCodebook::new(cfg.bits), cfg.rng_seed);
        let f_bb = update_digital(&ch, &f_rf).unwrap();
        (ch, f_rf, f_bb)
    }

    #[test]
    fn init_respects_codebook_and_modulus() {
        let cfg = small(4, 2, 1, 2, 1, 9);
        let cb = PhaseCodebook::new(1);
        let f = init_fc(&cfg, &cb, 9);
        assert_eq!(f.len(), 8);
        for z in f.iter() {
            assert!((z.norm() - 0.5).abs() < 1e-15);
            assert!(cb.contains(z.arg(), 1e-12));
        }
        assert_eq!(f, init_fc(&cfg, &cb, 9));
        assert_ne!(f, init_fc(&cfg, &cb, 10));
    }

    #[test]
    fn zero_channel_reduces_to_q_algebra() {
        let cfg = small(4, 2, 1, 1, 2, 1);
        let ch = ChannelRealization::from_matrices(cfg.clone(), vec![ComplexMatrix::zeros(cfg.n_r, 4)]).unwrap();
        let f_rf = init_fc(&cfg, &PhaseCodebook::new(2), 1);
        let f_bb = update_digital(&ch, &f_rf).unwrap();
        for m in 0..2 {
            let ws = FcWorkspace::from_channel(&ch, &f_rf, &f_bb, m).unwrap();
            let t = &ws.terms[0];
            assert!(t.g.iter().all(|z| *z == ZERO));
            assert!(t.h_em.iter().all(|z| *z == ZERO));
            // The Schur complement of Q^{-1} is 1 / Q[m,m].
            assert!((t.d * t.q[(m, m)].re - 1.0).abs() < 1e-6, "{}", t.d * t.q[(m, m)].re);
            assert_eq!(ws.schur(0), t.d);
            assert!(ws.objective().abs() < 1e-6);
        }
    }

    #[test]
    fn block_determinant_identity() {
        for seed in 0..10 {
            let cfg = small(6, 3, 2, 2, 3, seed);
            let (ch, f_rf, f_bb) = setup(&cfg);
            let ws = FcWorkspace::from_channel(&ch, &f_rf, &f_bb, (seed % 3) as usize).unwrap();
            let per_k: f64 = (0..2)
                .map(|k| {
                    let single = ChannelRealization::from_matrices(
                        SystemConfig { subcarriers: 1, ..cfg.clone() },
                        vec![ch.per_subcarrier[k].clone()],
                    )
                    .unwrap();
                    decoupled_rate(&single, &f_rf, &f_bb[k..k + 1], default_alpha(&f_bb[k])).unwrap()
                })
                .sum::<f64>()
                / 2.0;
            let got = ws.objective();
            assert!((got - per_k).abs() < 1e-8, "seed {seed}: {got} vs {per_k}");
        }
    }

    #[test]
    fn symmetric_columns_give_identical_terms() {
        let cfg = small(4, 2, 2, 1, 2, 3);
        let ch = generate_channel(&cfg).unwrap();
        let col = init_fc(&small(4, 1, 1, 1, 2, 3), &PhaseCodebook::new(2), 3).column(0).clone_owned();
        let mut f_rf = ComplexMatrix::zeros(4, 2);
        f_rf.set_column(0, &col);
        f_rf.set_column(1, &col);
        // Identical columns are singular for the digital update, so use a symmetric F_BB directly.
        let f_bb = vec![ComplexMatrix::from_fn(2, 2, |i, j| Complex64::new(if i == j { 1.0 } else { 0.3 }, 0.0))];
        let a = FcWorkspace::from_channel(&ch, &f_rf, &f_bb, 0).unwrap();
        let b = FcWorkspace::from_channel(&ch, &f_rf, &f_bb, 1).unwrap();
        assert!((a.terms[0].d - b.terms[0].d).abs() < 1e-9 * a.terms[0].d.abs().max(1.0));
        assert!((a.schur(0) - b.schur(0)).abs() < 1e-9 * a.schur(0).abs().max(1.0));
    }

    #[test]
    fn phase_examples() {
        let cfg = small(2, 1, 1, 1, 3, 0);
        let ch = ChannelRealization::from_matrices(cfg.clone(), vec![ComplexMatrix::identity(cfg.n_r, 2)]).unwrap();
        let f_rf = ComplexMatrix::from_element(2, 1, Complex64::new(0.5f64.sqrt(), 0.0));
        let f_bb = update_digital(&ch, &f_rf).unwrap();
        let mut ws = FcWorkspace::from_channel(&ch, &f_rf, &f_bb, 0).unwrap();
        // With N_rf = 1 the argument for element 0 is G[0,1] f_1 / M.
        ws.terms[0].g = ComplexMatrix::from_row_slice(2, 2, &[ZERO, Complex64::new(2.0, 0.0), Complex64::new(2.0, 0.0), ZERO]);
        ws.refresh();
        assert!(ws.optimal_continuous_phase(0).phase.abs() < 1e-15);
        ws.terms[0].g[(0, 1)] = Complex64::new(0.0, 2.0);
        ws.refresh();
        assert!((ws.optimal_continuous_phase(0).phase - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        ws.terms[0].g[(0, 1)] = ZERO;
        ws.refresh();
        let c = ws.optimal_continuous_phase(0);
        assert!(c.zero_argument && c.phase == 0.0);
    }

    #[test]
    fn incremental_schur_matches_recomputation() {
        let cfg = SystemConfig::desk().with_seed(11);
        let (ch, f_rf, f_bb) = setup(&cfg);
        let mut ws = FcWorkspace::from_channel(&ch, &f_rf, &f_bb, 2).unwrap();
        let cb = PhaseCodebook::new(cfg.bits);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..40 {
            let n = rng.random_range(0..cfg.n_t);
            ws.set_element(n, cb.element(rng.random_range(0..cb.len()), 0.25));
        }
        let incremental: Vec<f64> = (0..cfg.subcarriers).map(|k| ws.schur(k)).collect();
        ws.refresh();
        for (k, s) in incremental.iter().enumerate() {
            assert!((s - ws.schur(k)).abs() <= 1e-8 * ws.schur(k).abs().max(1.0), "k={k}");
            assert!(ws.schur(k) > 0.0);
        }
    }

    /// Rescales `F_RF F_BB` to orthonormal columns times `sqrt(P_t)` while
    /// keeping its column space, i.e. the equal-power version of `f_bb`.
    fn equal_power(f_rf: &ComplexMatrix, f_bb: &ComplexMatrix, cfg: &SystemConfig) -> ComplexMatrix {
        let s = crate::numerics::svd(&(f_rf * f_bb)).unwrap();
        let target = &s.u * s.v.adjoint();
        let w = crate::evalcore::analog_whitener(f_rf).unwrap();
        let bb = &w * &w * f_rf.adjoint() * target;
        let p = crate::numerics::frobenius_sq(&(f_rf * &bb)).sqrt();
        bb.scale((cfg.n_s as f64 * cfg.p_t).sqrt() / p)
    }

    #[test]
    fn digital_refresh_beats_every_equal_power_precoder() {
        // The refresh is optimal among equal-power stream allocations. A stale
        // F_BB with unequal stream powers can still score higher, so the
        // comparison is against its equal-power version.
        for seed in 0..5 {
            let cfg = SystemConfig::desk().with_seed(seed);
            let (ch, mut f_rf, mut f_bb) = setup(&cfg);
            let hhat = ch.gram();
            let cb = PhaseCodebook::new(cfg.bits);
            for m in 0..cfg.n_rf_t {
                let mut ws = FcWorkspace::build(&hhat, &f_rf, &f_bb, m, cfg.snr_linear()).unwrap();
                for n in 0..cfg.n_t {
                    let p = ws.optimal_continuous_phase(n).phase;
                    ws.set_element(n, cb.element(cb.quantize_index(p), 0.25));
                }
                f_rf.set_column(m, &ws.f);
                let stale: Vec<_> = f_bb.iter().map(|b| equal_power(&f_rf, b, &cfg)).collect();
                let before = average_rate(&ch, &f_rf, &stale).unwrap().average;
                f_bb = update_digital(&ch, &f_rf).unwrap();
                let after = average_rate(&ch, &f_rf, &f_bb).unwrap().average;
                assert!(after >= before - 1e-9, "seed {seed} m {m}: {before} -> {after}");
            }
        }
    }

    #[test]
    fn desk_solve_meets_invariants() {
        let cfg = SystemConfig::desk().with_seed(2);
        let ch = generate_channel(&cfg).unwrap();
        let sol = solve_fc(&ch, &SolverOptions::default()).unwrap();
        sol.precoder.check(&cfg).unwrap();
        let se = crate::evalcore::spectral_efficiency(&ch, &sol.precoder).unwrap().average;
        assert!((se - sol.rate()).abs() < 1e-9);
    }

    #[test]
    fn relaxation_dominates_quantized() {
        let cfg = SystemConfig::desk().with_seed(4);
        let ch = generate_channel(&cfg).unwrap();
        let q = solve_fc(&ch, &SolverOptions::default()).unwrap().rate();
        let r = solve_fc(&ch, &SolverOptions { quantize: false, ..Default::default() }).unwrap().rate();
        assert!(r >= q - 1e-6, "{r} < {q}");
    }

    #[test]
    fn column_phase_rotation_is_compensated() {
        let cfg = SystemConfig::desk().with_seed(6);
        let (ch, f_rf, f_bb) = setup(&cfg);
        let rot = Complex64::from_polar(1.0, 0.77);
        let mut f2 = f_rf.clone();
        f2.column_mut(1).iter_mut().for_each(|z| *z *= rot);
        let b2: Vec<_> = f_bb
            .iter()
            .map(|b| {
                let mut b = b.clone();
                b.row_mut(1).iter_mut().for_each(|z| *z *= rot.conj());
                b
            })
            .collect();
        let a = average_rate(&ch, &f_rf, &f_bb).unwrap().average;
        let b = average_rate(&ch, &f2, &b2).unwrap().average;
        assert!((a - b).abs() < 1e-9);
    }
}
