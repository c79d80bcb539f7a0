//! Dynamic subarrays: every antenna connects to at most one RF chain through
//! one phase shifter, chosen per channel realization.
//!
//! The analog matrix is written `F_RF = S F_D`, where `S` is a binary row
//! selection over a block-diagonal phase dictionary `F_D`. Rows of `S` are
//! optimized one at a time by exhaustive search over the `N_rf 2^b + 1`
//! candidate rows, with the digital precoders held fixed during a sweep.

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;

use super::{run_alternating, Solution, SolverFlags, SolverOptions};
use crate::channel::ChannelRealization;
use crate::config::{Structure, SystemConfig};
use crate::error::{Result, ResultExt};
use crate::evalcore::{default_alpha, regularized_gram, update_digital, PhaseCodebook};
use crate::numerics::{hermitian_part, inverse_hermitian, logdet_hermitian, pairwise_mean, ComplexMatrix, ZERO};
use crate::rng::{stream, Stream};

/// A candidate row of `S`: `Some(c)` selects dictionary column
/// `c = chain * 2^b + phase`, `None` disconnects the antenna.
pub type Candidate = Option<usize>;

/// Binary selection matrix stored as one optional dictionary column per antenna.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionState {
    pub rows: Vec<Candidate>,
    pub n_rf: usize,
    pub bits: u32,
}

impl SelectionState {
    pub fn empty(n_t: usize, n_rf: usize, bits: u32) -> Self {
        Self { rows: vec![None; n_t], n_rf, bits }
    }

    pub fn phases(&self) -> usize {
        1 << self.bits
    }

    pub fn dictionary_len(&self) -> usize {
        self.n_rf * self.phases()
    }

    pub fn chain_of(&self, row: usize) -> Option<usize> {
        self.rows[row].map(|c| c / self.phases())
    }

    /// Antennas attached to each RF chain.
    pub fn chain_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_rf];
        for i in 0..self.rows.len() {
            if let Some(r) = self.chain_of(i) {
                counts[r] += 1;
            }
        }
        counts
    }

    /// The explicit `N_t x N_rf 2^b` binary matrix.
    pub fn selection_matrix(&self) -> DMatrix<u8> {
        let mut s = DMatrix::zeros(self.rows.len(), self.dictionary_len());
        for (i, c) in self.rows.iter().enumerate() {
            if let Some(c) = c {
                s[(i, *c)] = 1;
            }
        }
        s
    }
}

/// Block-diagonal phase dictionary: block `r` is the column
/// `[e^{j B(1)}, ..., e^{j B(2^b)}]^T / sqrt(N_t)` placed in column `r`.
pub fn dictionary(n_t: usize, n_rf: usize, bits: u32) -> ComplexMatrix {
    let codebook = PhaseCodebook::new(bits);
    let phases = codebook.len();
    let modulus = 1.0 / (n_t as f64).sqrt();
    ComplexMatrix::from_fn(n_rf * phases, n_rf, |c, r| if c / phases == r { codebook.element(c % phases, modulus) } else { ZERO })
}

/// Row `i` of `S F_D` for a candidate.
fn candidate_row(candidate: Candidate, n_rf: usize, codebook: &PhaseCodebook, modulus: f64) -> DVector<Complex64> {
    let mut row = DVector::zeros(n_rf);
    if let Some(c) = candidate {
        row[c / codebook.len()] = codebook.element(c % codebook.len(), modulus);
    }
    row
}

/// `F_RF = S F_D`, built directly from the selected dictionary columns.
pub fn expand_selection(state: &SelectionState) -> ComplexMatrix {
    let n_t = state.rows.len();
    let codebook = PhaseCodebook::new(state.bits);
    let modulus = 1.0 / (n_t as f64).sqrt();
    let mut f = ComplexMatrix::zeros(n_t, state.n_rf);
    for (i, &c) in state.rows.iter().enumerate() {
        f.set_row(i, &candidate_row(c, state.n_rf, &codebook, modulus).transpose());
    }
    f
}

/// All one-hot rows in dictionary order followed by the all-zero row.
pub fn row_candidates(config: &SystemConfig) -> Vec<Candidate> {
    (0..config.n_rf_t << config.bits).map(Some).chain(std::iter::once(None)).collect()
}

/// Random one-hot rows, redrawn until every RF chain has an antenna.
pub fn init_selection(config: &SystemConfig, seed: u64) -> SelectionState {
    use rand::Rng;
    let mut rng = stream(seed, Stream::DynamicInit);
    let mut state = SelectionState::empty(config.n_t, config.n_rf_t, config.bits);
    let len = state.dictionary_len();
    for _ in 0..64 {
        for row in state.rows.iter_mut() {
            *row = Some(rng.random_range(0..len));
        }
        if state.chain_counts().iter().all(|&c| c > 0) {
            return state;
        }
    }
    // Only reachable when N_t is close to N_rf: move antennas from crowded
    // chains onto the empty ones, keeping their phase.
    let phases = state.phases();
    for r in 0..state.n_rf {
        if state.chain_counts()[r] > 0 {
            continue;
        }
        let counts = state.chain_counts();
        let donor = (0..config.n_t)
            .find(|&i| state.chain_of(i).is_some_and(|c| counts[c] > 1))
            .expect("N_rf <= N_t leaves a chain with two antennas");
        let phase = state.rows[donor].expect("donor is connected") % phases;
        state.rows[donor] = Some(r * phases + phase);
    }
    state
}

/// Per-subcarrier accumulators for the row recursion.
#[derive(Debug, Clone)]
pub struct DsTerms {
    /// `Q = F_BB F_BB^H + alpha I`.
    pub q: ComplexMatrix,
    /// `D_i = Q^{-1} + rho F_{<i}^H Hhat_{<i,<i} F_{<i}`.
    pub d: ComplexMatrix,
    /// `D_i^{-1}`, tracked by Woodbury updates starting from `Q`.
    pub p: ComplexMatrix,
}

/// Row-search workspace for one sweep.
#[derive(Debug, Clone)]
pub struct DsWorkspace<'a> {
    pub hhat: &'a [ComplexMatrix],
    pub rho: f64,
    pub codebook: PhaseCodebook,
    pub modulus: f64,
    pub n_rf: usize,
    pub terms: Vec<DsTerms>,
}

/// Quantities shared by every candidate of one row.
#[derive(Debug, Clone)]
pub struct RowContext {
    pub row: usize,
    /// Per subcarrier: `w = sum_{p<i} Hhat[i,p] F_RF[p,:]` (as a column).
    w: Vec<DVector<Complex64>>,
    /// Per subcarrier: `P w^H`.
    u: Vec<DVector<Complex64>>,
    /// Per subcarrier: `w P w^H`.
    wpw: Vec<f64>,
    /// Per subcarrier: `Hhat[i,i] / N_t`.
    a: Vec<f64>,
}

impl<'a> DsWorkspace<'a> {
    pub fn new(hhat: &'a [ComplexMatrix], f_bb: &[ComplexMatrix], rho: f64, n_t: usize, bits: u32) -> Result<Self> {
        let n_rf = f_bb[0].nrows();
        let terms = crate::par::try_map_indexed(hhat.len(), |k| -> Result<DsTerms> {
            let q = regularized_gram(&f_bb[k], default_alpha(&f_bb[k]));
            let d = inverse_hermitian(&q).context_with(|| format!("Q[{k}] inverse"))?;
            Ok(DsTerms { p: q.clone(), q, d })
        })?;
        Ok(Self { hhat, rho, codebook: PhaseCodebook::new(bits), modulus: 1.0 / (n_t as f64).sqrt(), n_rf, terms })
    }

    /// Prepares row `i` given the current rows `0..i` of `f_rf`.
    pub fn prepare(&self, f_rf: &ComplexMatrix, i: usize) -> RowContext {
        let k_len = self.terms.len();
        let mut ctx = RowContext {
            row: i,
            w: Vec::with_capacity(k_len),
            u: Vec::with_capacity(k_len),
            wpw: Vec::with_capacity(k_len),
            a: Vec::with_capacity(k_len),
        };
        for (k, t) in self.terms.iter().enumerate() {
            let h = &self.hhat[k];
            // Row vector Hhat[i, 0..i] F_RF[0..i, :] stored as its conjugate-free transpose.
            let mut w: DVector<Complex64> = DVector::zeros(self.n_rf);
            for p in 0..i {
                let hip = h[(i, p)];
                if hip != ZERO {
                    for r in 0..self.n_rf {
                        w[r] += hip * f_rf[(p, r)];
                    }
                }
            }
            let w_h = w.map(|z| z.conj());
            let u = &t.p * &w_h;
            ctx.wpw.push(w_h.dotc(&u).re);
            ctx.u.push(u);
            ctx.w.push(w);
            ctx.a.push(h[(i, i)].re * self.modulus * self.modulus);
        }
        ctx
    }

    /// `M` and `A^H P A` of the rank-two increment for subcarrier `k`.
    fn small_factors(&self, ctx: &RowContext, k: usize, chain: usize, y: Complex64) -> (Matrix2<Complex64>, Matrix2<Complex64>) {
        let t = &self.terms[k];
        let u_r = ctx.u[k][chain];
        let g2 = Matrix2::new(t.p[(chain, chain)], u_r, u_r.conj(), Complex64::new(ctx.wpw[k], 0.0));
        let m = Matrix2::new(Complex64::new(ctx.a[k], 0.0), y.conj(), y, ZERO);
        (m, g2)
    }

    /// `(1/K) sum_k log2 |E_i[k]|` with `E_i = I + rho D_i^{-1} T_i(candidate)`.
    pub fn score(&self, ctx: &RowContext, candidate: Candidate) -> f64 {
        let Some(c) = candidate else { return 0.0 };
        let phases = self.codebook.len();
        let (chain, y) = (c / phases, self.codebook.element(c % phases, self.modulus));
        let per: Vec<f64> = (0..self.terms.len())
            .map(|k| {
                let (m, g2) = self.small_factors(ctx, k, chain, y);
                let x = Matrix2::identity() + (m * g2).scale(self.rho);
                let det = x[(0, 0)] * x[(1, 1)] - x[(0, 1)] * x[(1, 0)];
                det.re.max(f64::MIN_POSITIVE).log2()
            })
            .collect();
        pairwise_mean(&per)
    }

    /// Scores every candidate in `row_candidates` order.
    pub fn score_all(&self, ctx: &RowContext, candidates: &[Candidate]) -> Vec<f64> {
        candidates.iter().map(|&c| self.score(ctx, c)).collect()
    }

    /// Folds the chosen row into `D` and `D^{-1}`.
    pub fn commit(&mut self, ctx: &RowContext, candidate: Candidate) {
        let Some(c) = candidate else { return };
        let phases = self.codebook.len();
        let (chain, y) = (c / phases, self.codebook.element(c % phases, self.modulus));
        let rho = self.rho;
        let n_rf = self.n_rf;
        for k in 0..self.terms.len() {
            let (m, g2) = self.small_factors(ctx, k, chain, y);
            let t = &mut self.terms[k];
            // A = [e_chain, w^H]; D += rho A M A^H.
            let mut a_mat = ComplexMatrix::zeros(n_rf, 2);
            a_mat[(chain, 0)] = Complex64::new(1.0, 0.0);
            for r in 0..n_rf {
                a_mat[(r, 1)] = ctx.w[k][r].conj();
            }
            let m_dyn = ComplexMatrix::from_fn(2, 2, |i, j| m[(i, j)]);
            t.d = hermitian_part(&(&t.d + (&a_mat * &m_dyn * a_mat.adjoint()).scale(rho)));
            // D^{-1} -= rho (P A) (I + rho M A^H P A)^{-1} M (P A)^H.
            let core =
                (Matrix2::identity() + (m * g2).scale(rho)).try_inverse().map(|inv| inv * m).unwrap_or_else(Matrix2::zeros);
            let core_dyn = ComplexMatrix::from_fn(2, 2, |i, j| core[(i, j)]);
            let pa = &t.p * &a_mat;
            t.p = hermitian_part(&(&t.p - (&pa * core_dyn * pa.adjoint()).scale(rho)));
        }
    }
}

/// Picks the best-scoring candidate: ties (within a relative `1e-12`) go to
/// the incumbent, then to the lowest candidate index.
pub fn choose_candidate(candidates: &[Candidate], scores: &[f64], incumbent: Candidate) -> Candidate {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * best.abs().max(1.0);
    let tied: Vec<usize> = (0..scores.len()).filter(|&j| best - scores[j] <= tol).collect();
    if let Some(&j) = tied.iter().find(|&&j| candidates[j] == incumbent) {
        return candidates[j];
    }
    candidates[tied[0]]
}

/// `(1/K) sum_k log2 |Q^{-1} + rho F^H Hhat F|` for fixed `Q` under single-row
/// changes of `F`, each evaluated as a rank-2 update of the current value.
struct RowMoves<'a> {
    hhat: &'a [ComplexMatrix],
    /// `Q^{-1} + rho F^H Hhat F` per subcarrier.
    base: Vec<ComplexMatrix>,
    /// `F^H Hhat` per subcarrier; column `i` is `F^H Hhat e_i`.
    projected: Vec<ComplexMatrix>,
    rho: f64,
}

impl<'a> RowMoves<'a> {
    fn new(q_inv: &[ComplexMatrix], hhat: &'a [ComplexMatrix], f_rf: &ComplexMatrix, rho: f64) -> Self {
        let projected: Vec<ComplexMatrix> = hhat.iter().map(|h| f_rf.adjoint() * h).collect();
        let base = projected.iter().zip(q_inv).map(|(g, qi)| qi + (g * f_rf).scale(rho)).collect();
        Self { hhat, base, projected, rho }
    }

    /// Objective after adding `delta` (transposed) to row `i` of `F`.
    fn value(&self, i: usize, delta: &DVector<Complex64>) -> Result<f64> {
        let u = delta.conjugate();
        let per = (0..self.hhat.len())
            .map(|k| {
                let g = self.projected[k].column(i);
                let h_ii = self.hhat[k][(i, i)];
                let change = &u * g.adjoint() + g * delta.transpose() + (&u * delta.transpose()) * h_ii;
                Ok(logdet_hermitian(&hermitian_part(&(&self.base[k] + change.scale(self.rho))))?)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(pairwise_mean(&per))
    }
}

/// `(1/K) sum_k log2 |Q^{-1} + rho F^H Hhat F|` for fixed `Q`.
#[cfg(test)]
fn fraction_two(q_inv: &[ComplexMatrix], hhat: &[ComplexMatrix], f_rf: &ComplexMatrix, rho: f64) -> Result<f64> {
    let per = (0..hhat.len())
        .map(|k| {
            let a = f_rf.adjoint() * &hhat[k] * f_rf;
            Ok(logdet_hermitian(&hermitian_part(&(&q_inv[k] + a.scale(rho))))?)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(pairwise_mean(&per))
}

/// Gives every RF chain without antennas the (antenna, phase) pair that
/// maximizes the objective, drawing antennas only from chains that keep at
/// least one. Returns the number of chains repaired.
pub fn repair_empty_chains(
    state: &mut SelectionState,
    hhat: &[ComplexMatrix],
    f_bb: &[ComplexMatrix],
    rho: f64,
) -> Result<usize> {
    let mut repaired = 0;
    let phases = state.phases();
    let mut q_inv: Option<Vec<ComplexMatrix>> = None;
    for r in 0..state.n_rf {
        if state.chain_counts()[r] > 0 {
            continue;
        }
        if q_inv.is_none() {
            q_inv = Some(
                f_bb.iter()
                    .map(|b| inverse_hermitian(&regularized_gram(b, default_alpha(b))))
                    .collect::<std::result::Result<Vec<_>, _>>()?,
            );
        }
        let q_inv = q_inv.as_ref().expect("set above");
        let counts = state.chain_counts();
        let f_rf = expand_selection(state);
        let moves = RowMoves::new(q_inv, hhat, &f_rf, rho);
        let codebook = PhaseCodebook::new(state.bits);
        let modulus = 1.0 / (state.rows.len() as f64).sqrt();
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..state.rows.len() {
            if state.chain_of(i).is_some_and(|c| counts[c] < 2) {
                continue;
            }
            for p in 0..phases {
                let new_row = candidate_row(Some(r * phases + p), state.n_rf, &codebook, modulus);
                let delta = new_row - f_rf.row(i).transpose();
                let value = moves.value(i, &delta)?;
                if best.is_none_or(|(b, _, _)| value > b) {
                    best = Some((value, i, p));
                }
            }
        }
        let (_, i, p) = best.expect("some antenna is always movable when N_rf <= N_t");
        state.rows[i] = Some(r * phases + p);
        repaired += 1;
    }
    Ok(repaired)
}

/// One ascending sweep over the antenna rows with `f_bb` fixed, followed by
/// the empty-chain repair and the digital refresh.
pub(crate) fn row_sweep(
    channel: &ChannelRealization,
    hhat: &[ComplexMatrix],
    state: &mut SelectionState,
    f_bb: &mut Vec<ComplexMatrix>,
    flags: &mut SolverFlags,
) -> Result<ComplexMatrix> {
    let cfg = &channel.config;
    let rho = cfg.snr_linear();
    let candidates = row_candidates(cfg);
    let mut f_rf = expand_selection(state);
    let mut ws = DsWorkspace::new(hhat, f_bb, rho, cfg.n_t, cfg.bits)?;
    for i in 0..cfg.n_t {
        let ctx = ws.prepare(&f_rf, i);
        let scores = ws.score_all(&ctx, &candidates);
        let choice = choose_candidate(&candidates, &scores, state.rows[i]);
        state.rows[i] = choice;
        f_rf.set_row(i, &candidate_row(choice, cfg.n_rf_t, &ws.codebook, ws.modulus).transpose());
        ws.commit(&ctx, choice);
    }
    flags.repaired_columns += repair_empty_chains(state, hhat, f_bb, rho)?;
    let f_rf = expand_selection(state);
    *f_bb = update_digital(channel, &f_rf)?;
    Ok(f_rf)
}

/// Dynamic-subarray solve from a random selection.
pub fn solve_ds(channel: &ChannelRealization, opts: &SolverOptions) -> Result<Solution> {
    let cfg = &channel.config;
    solve_ds_from(channel, init_selection(cfg, cfg.rng_seed), opts)
}

/// Dynamic-subarray solve from a given selection (which must use every chain).
pub fn solve_ds_from(channel: &ChannelRealization, init: SelectionState, opts: &SolverOptions) -> Result<Solution> {
    let hhat = channel.gram();
    let mut state = init;
    let f_rf = expand_selection(&state);
    run_alternating(channel, Structure::DynamicSubarray, f_rf, opts, SolverFlags::default(), |f_rf, f_bb, flags| {
        *f_rf = row_sweep(channel, &hhat, &mut state, f_bb, flags)?;
        Ok(())
    })
}

/// `Q^{-1} + rho F_{<i}^H Hhat_{<i,<i} F_{<i}` from scratch, for checking the recursion.
pub fn d_from_scratch(
    hhat: &ComplexMatrix,
    q: &ComplexMatrix,
    f_rf: &ComplexMatrix,
    rows: usize,
    rho: f64,
) -> Result<ComplexMatrix> {
    let q_inv = inverse_hermitian(q)?;
    let f = f_rf.rows(0, rows).clone_owned();
    let h = hhat.view((0, 0), (rows, rows)).clone_owned();
    Ok(hermitian_part(&(q_inv + (f.adjoint() * h * f).scale(rho))))
}
