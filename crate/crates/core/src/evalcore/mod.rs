//! Shared precoding machinery: codebook, digital precoder update and the
//! spectral-efficiency objective.

mod codebook;
mod precoder;

pub use codebook::{angular_distance, quantize_phase, PhaseCodebook};
pub use precoder::{subarray_rows, HybridPrecoder};

use crate::channel::ChannelRealization;
use crate::constants::ALPHA_SCALE;
use crate::error::{Error, Result, ResultExt};
use crate::numerics::{
    frobenius_sq, hermitian_inv_sqrt, hermitian_part, inverse_hermitian, logdet_hermitian, pairwise_mean, right_singular_basis,
    ComplexMatrix, HermitianRankError,
};

/// Rate averaged over subcarriers plus the per-subcarrier terms.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub average: f64,
    pub per_subcarrier: Vec<f64>,
}

/// Checks `F_RF` has full column rank and returns `(F_RF^H F_RF)^{-1/2}`.
pub fn analog_whitener(f_rf: &ComplexMatrix) -> Result<ComplexMatrix> {
    for j in 0..f_rf.ncols() {
        if f_rf.column(j).iter().all(|z| z.norm() == 0.0) {
            return Err(Error::RankDeficient { column: j });
        }
    }
    let gram = f_rf.adjoint() * f_rf;
    hermitian_inv_sqrt(&gram).map_err(|e| match e {
        HermitianRankError::Deficient { column } => Error::RankDeficient { column },
        HermitianRankError::NonConvergence => Error::Numerics(crate::numerics::NumericsError::NonConvergence {
            op: "hermitian eigendecomposition",
            iterations: 10_000,
        }),
    })
}

/// Optimal digital precoders for a fixed analog matrix.
///
/// Per subcarrier the effective channel `H[k] F_RF (F_RF^H F_RF)^{-1/2}` is
/// decomposed; its top `N_s` right singular vectors, mapped back through the
/// whitener, are scaled so `||F_RF F_BB[k]||_F^2 = N_s P_t`.
pub fn update_digital(channel: &ChannelRealization, f_rf: &ComplexMatrix) -> Result<Vec<ComplexMatrix>> {
    let cfg = &channel.config;
    let whitener = analog_whitener(f_rf)?;
    let target = (cfg.n_s as f64 * cfg.p_t).sqrt();
    let projected = f_rf * &whitener;
    crate::par::try_map_indexed(channel.subcarriers(), |k| {
        let h_eff = &channel.per_subcarrier[k] * &projected;
        let (_, v) = right_singular_basis(&h_eff).context_with(|| format!("effective channel SVD, k={k}"))?;
        let f_bb = &whitener * v.columns(0, cfg.n_s);
        let power = frobenius_sq(&(f_rf * &f_bb)).sqrt();
        Ok(f_bb.scale(target / power))
    })
}

/// `log2 det(I + snr * X^H X)` with `X = H F_RF F_BB`, which equals the
/// `N_r`-dimensional determinant by Sylvester's identity.
pub fn subcarrier_rate(h: &ComplexMatrix, f_rf: &ComplexMatrix, f_bb: &ComplexMatrix, snr: f64) -> Result<f64> {
    let x = h * (f_rf * f_bb);
    let n = x.ncols();
    let gram = hermitian_part(&(x.adjoint() * &x).scale(snr)) + ComplexMatrix::identity(n, n);
    Ok(logdet_hermitian(&gram)?)
}

/// Average achievable rate without checking structure invariants.
pub fn average_rate(channel: &ChannelRealization, f_rf: &ComplexMatrix, f_bb: &[ComplexMatrix]) -> Result<RateReport> {
    let snr = channel.config.snr_linear();
    let per_subcarrier = crate::par::try_map_indexed(channel.subcarriers(), |k| {
        subcarrier_rate(&channel.per_subcarrier[k], f_rf, &f_bb[k], snr).context_with(|| format!("rate, k={k}"))
    })?;
    Ok(RateReport { average: pairwise_mean(&per_subcarrier), per_subcarrier })
}

/// Average spectral efficiency of a precoder whose invariants hold.
pub fn spectral_efficiency(channel: &ChannelRealization, precoder: &HybridPrecoder) -> Result<RateReport> {
    let cfg = channel.config.clone().with_structure(precoder.structure);
    precoder.check(&cfg)?;
    average_rate(channel, &precoder.f_rf, &precoder.f_bb)
}

/// Regulariser for `F_BB F_BB^H`: a fixed fraction of its trace.
pub fn default_alpha(f_bb: &ComplexMatrix) -> f64 {
    ALPHA_SCALE * frobenius_sq(f_bb).max(f64::MIN_POSITIVE)
}

/// `Q = F_BB F_BB^H + alpha I`.
pub fn regularized_gram(f_bb: &ComplexMatrix, alpha: f64) -> ComplexMatrix {
    let n = f_bb.nrows();
    hermitian_part(&(f_bb * f_bb.adjoint())) + ComplexMatrix::identity(n, n).scale(alpha)
}

/// The decoupled form `log2|Q| + log2|Q^{-1} + snr F_RF^H H^H H F_RF|`
/// averaged over subcarriers, with a fixed `alpha`.
pub fn decoupled_rate(channel: &ChannelRealization, f_rf: &ComplexMatrix, f_bb: &[ComplexMatrix], alpha: f64) -> Result<f64> {
    let snr = channel.config.snr_linear();
    let per = crate::par::try_map_indexed(channel.subcarriers(), |k| -> Result<f64> {
        let q = regularized_gram(&f_bb[k], alpha);
        let q_inv = inverse_hermitian(&q).context_with(|| format!("Q[{k}] inverse"))?;
        let hf = &channel.per_subcarrier[k] * f_rf;
        let second = q_inv + (hf.adjoint() * &hf).scale(snr);
        Ok(logdet_hermitian(&q)? + logdet_hermitian(&hermitian_part(&second))?)
    })?;
    Ok(pairwise_mean(&per))
}
