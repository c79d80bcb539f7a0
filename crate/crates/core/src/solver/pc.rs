//! Partially-connected structure: each RF chain drives a fixed contiguous
//! block of antennas, so only the block-diagonal entries are tunable.

use std::ops::Range;

use super::fc::coordinate_sweep;
use super::{run_alternating, Solution, SolverFlags, SolverOptions};
use crate::channel::ChannelRealization;
use crate::config::{Structure, SystemConfig};
use crate::error::{Error, Result};
use crate::evalcore::{subarray_rows, PhaseCodebook};
use crate::numerics::{right_singular_basis, ComplexMatrix};
use crate::rng::{stream, Stream};

/// Contiguous antenna blocks, one per RF chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubarrayLayout {
    pub block_size: usize,
    pub chains: usize,
}

impl SubarrayLayout {
    pub fn new(config: &SystemConfig) -> Result<Self> {
        if !config.n_t.is_multiple_of(config.n_rf_t) {
            return Err(Error::StructureMismatch { scheme: "AlterOptPC", required: "N_rf_t dividing N_t" });
        }
        Ok(Self { block_size: config.n_t / config.n_rf_t, chains: config.n_rf_t })
    }

    /// 0-based antenna rows of chain `i`.
    pub fn rows(&self, chain: usize) -> Range<usize> {
        subarray_rows(self.block_size * self.chains, self.chains, chain)
    }
}

/// Initial block-diagonal analog matrix from the subcarrier-averaged channel:
/// block `i` takes the quantized phases of the leading right singular vector
/// of the `H_avg` columns belonging to subarray `i`. Returns the matrix and
/// the number of all-zero blocks that fell back to random phases.
pub fn init_pc(channel: &ChannelRealization) -> Result<(ComplexMatrix, usize)> {
    use rand::Rng;
    let cfg = &channel.config;
    let layout = SubarrayLayout::new(cfg)?;
    let codebook = PhaseCodebook::new(cfg.bits);
    let modulus = 1.0 / (cfg.n_t as f64).sqrt();
    let h_avg = channel.average();
    let mut fallback_rng = stream(cfg.rng_seed, Stream::PartialFallback);
    let mut f = ComplexMatrix::zeros(cfg.n_t, cfg.n_rf_t);
    let mut fallbacks = 0;
    for i in 0..layout.chains {
        let rows = layout.rows(i);
        let block = h_avg.columns(rows.start, layout.block_size).clone_owned();
        if block.iter().all(|z| z.norm() == 0.0) {
            fallbacks += 1;
            for r in rows {
                f[(r, i)] = codebook.element(fallback_rng.random_range(0..codebook.len()), modulus);
            }
            continue;
        }
        let (_, v) = right_singular_basis(&block)?;
        for (j, r) in rows.enumerate() {
            f[(r, i)] = codebook.element(codebook.quantize_index(v[(j, 0)].arg()), modulus);
        }
    }
    Ok((f, fallbacks))
}

/// Partially-connected solve from the averaged-channel initialization.
pub fn solve_pc(channel: &ChannelRealization, opts: &SolverOptions) -> Result<Solution> {
    let (init, fallbacks) = init_pc(channel)?;
    solve_pc_inner(channel, init, opts, SolverFlags { fallback_blocks: fallbacks, ..Default::default() })
}

/// Partially-connected solve from a given block-diagonal analog matrix.
pub fn solve_pc_from(channel: &ChannelRealization, init: ComplexMatrix, opts: &SolverOptions) -> Result<Solution> {
    solve_pc_inner(channel, init, opts, SolverFlags::default())
}

fn solve_pc_inner(
    channel: &ChannelRealization,
    init: ComplexMatrix,
    opts: &SolverOptions,
    flags: SolverFlags,
) -> Result<Solution> {
    let layout = SubarrayLayout::new(&channel.config)?;
    let hhat = channel.gram();
    let active: Vec<Vec<usize>> = (0..layout.chains).map(|i| layout.rows(i).collect()).collect();
    run_alternating(channel, Structure::PartiallyConnected, init, opts, flags, |f_rf, f_bb, flags| {
        coordinate_sweep(channel, &hhat, f_rf, f_bb, &active, opts, flags)
    })
}
