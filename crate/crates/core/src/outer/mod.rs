//! Outer precoders `E_k`: block diagonal over the head, middle and tail
//! transmit blocks of the equivalent channel.

pub mod allocation;
pub mod chains;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dof::Regime;
use crate::inner::{BlockSizes, EquivalentChannel, Part};
use crate::linalg::{block_diag, max_abs, numerical_rank, CMatrix, LinalgError};
use crate::rng::{complex_gaussian_matrix, substream, Tag};

pub use allocation::{allocate_symbols, predicted_z, AllocationError, Branch, ChainGroup, MiddleLayout, SymbolAllocation};
use chains::{build_alignment_chains, build_independent_chains, closed_loop, loop_residual, ChainError, ChainSolution, PMatrices};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OuterError {
    #[error(transparent)]
    Allocation(#[from] AllocationError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("precoder of user {user} has rank {rank} < {cols} columns")]
    RankDeficient { user: usize, rank: usize, cols: usize },
    #[error("allocation {needed} does not fit the {available}-column {part} block")]
    BlockTooSmall { part: &'static str, needed: u32, available: usize },
    #[error("{0:?} precoders need the {1:?} regime")]
    WrongRegime(Branch, Regime),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Where a middle column of `E_k` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MiddleTag {
    Random,
    /// Column `column` of slot `slot` in the chain of group `group` that
    /// starts at transmitter `origin`.
    Chain { group: usize, origin: usize, slot: usize, column: usize },
    Loop { column: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecoderSet {
    /// `E_k`, `M × d` with `d = dh + dm + dt`, in the oriented frame.
    #[serde(with = "crate::io::matrix_triple")]
    pub e: [CMatrix; 3],
    pub alloc: SymbolAllocation,
    pub tx_blocks: BlockSizes,
    pub middle_tags: [Vec<MiddleTag>; 3],
    /// Worst relative mismatch over all alignment relations (0 without chains).
    pub alignment_residual: f64,
    /// Measured null dimension of each chain group's constraint matrix.
    pub chain_null_dims: Vec<usize>,
}

impl PrecoderSet {
    /// Largest entry of `E_k` outside its diagonal blocks.
    pub fn off_block_max(&self, k: usize) -> f64 {
        let cols = BlockSizes::new(self.alloc.dh as usize, self.alloc.dm as usize, self.alloc.dt as usize);
        let mut worst = 0.0f64;
        for rp in Part::ALL {
            for cp in Part::ALL {
                if rp == cp {
                    continue;
                }
                let (r0, rl) = self.tx_blocks.range(rp);
                let (c0, cl) = cols.range(cp);
                worst = worst.max(max_abs(&self.e[k].view((r0, c0), (rl, cl)).into_owned()));
            }
        }
        worst
    }
}

fn random_block(rows: usize, cols: usize, seed: u64, k: usize, tag: &str, attempt: usize) -> CMatrix {
    let mut rng = substream(seed, &["outer".into(), Tag::from(k), tag.into(), Tag::from(attempt)]);
    complex_gaussian_matrix(rows, cols, &mut rng)
}

fn check_fit(part: &'static str, needed: u32, available: usize) -> Result<(), OuterError> {
    if needed as usize > available {
        return Err(OuterError::BlockTooSmall { part, needed, available });
    }
    Ok(())
}

fn full_column_rank(e: &CMatrix) -> Result<bool, LinalgError> {
    Ok(e.ncols() == 0 || numerical_rank(e, None)? == e.ncols())
}

/// Assembles `E_k` from random head/tail blocks and the given middle blocks,
/// redrawing the random blocks once if the result is rank deficient.
fn assemble(
    alloc: &SymbolAllocation,
    tx: BlockSizes,
    seed: u64,
    middle: [CMatrix; 3],
    middle_random: bool,
) -> Result<[CMatrix; 3], OuterError> {
    let mut out: Vec<CMatrix> = Vec::with_capacity(3);
    for (k, mid) in middle.into_iter().enumerate() {
        let mut built = None;
        for attempt in 0..2 {
            let head = random_block(tx.head, alloc.dh as usize, seed, k, "head", attempt);
            let tail = random_block(tx.tail, alloc.dt as usize, seed, k, "tail", attempt);
            let mid = if middle_random && attempt > 0 {
                random_block(tx.middle, alloc.dm as usize, seed, k, "middle", attempt)
            } else {
                mid.clone()
            };
            let e = block_diag(&[&head, &mid, &tail]);
            if full_column_rank(&e)? {
                built = Some(e);
                break;
            }
        }
        let e = built.ok_or_else(|| OuterError::RankDeficient {
            user: k,
            rank: 0,
            cols: alloc.total() as usize,
        })?;
        out.push(e);
    }
    Ok(out.try_into().expect("three users"))
}

fn check_sizes(alloc: &SymbolAllocation, tx: BlockSizes) -> Result<(), OuterError> {
    check_fit("head", alloc.dh, tx.head)?;
    check_fit("middle", alloc.dm, tx.middle)?;
    check_fit("tail", alloc.dt, tx.tail)
}

/// Low regime: every block is random.
pub fn build_low(alloc: &SymbolAllocation, tx_blocks: BlockSizes, seed: u64) -> Result<PrecoderSet, OuterError> {
    if !matches!(alloc.branch, Branch::LowFull | Branch::LowDirectLimited) {
        return Err(OuterError::WrongRegime(alloc.branch, Regime::Low));
    }
    check_sizes(alloc, tx_blocks)?;
    let middle = std::array::from_fn(|k| random_block(tx_blocks.middle, alloc.dm as usize, seed, k, "middle", 0));
    let e = assemble(alloc, tx_blocks, seed, middle, true)?;
    let tags = std::array::from_fn(|_| vec![MiddleTag::Random; alloc.dm as usize]);
    Ok(PrecoderSet {
        e,
        alloc: alloc.clone(),
        tx_blocks,
        middle_tags: tags,
        alignment_residual: 0.0,
        chain_null_dims: Vec::new(),
    })
}

/// Solutions for every chain group; a group of length one has nothing to
/// align and is drawn at random.
fn solve_groups(pm: &PMatrices, groups: &[ChainGroup], seed: u64) -> Result<Vec<ChainSolution>, OuterError> {
    let mut sols: Vec<ChainSolution> = Vec::with_capacity(groups.len());
    for (g, group) in groups.iter().enumerate() {
        let (len, dim) = (group.len as usize, group.dim as usize);
        let mt = pm[0][1].ncols();
        let sol = if len == 1 {
            let stacked = std::array::from_fn(|origin| {
                let mut rng = substream(seed, &["outer".into(), "chain".into(), Tag::from(g), Tag::from(origin)]);
                complex_gaussian_matrix(mt, dim, &mut rng)
            });
            ChainSolution { len, dim, slot_rows: mt, null_dim: mt, stacked }
        } else if g == 0 {
            build_alignment_chains(pm, len, dim)?
        } else {
            build_independent_chains(pm, len, dim, &sols[0])?
        };
        sols.push(sol);
    }
    Ok(sols)
}

/// Middle block of user `u`: chain by chain, slot by slot, so that keeping
/// a prefix keeps whole chains first.
fn chain_middle(u: usize, groups: &[ChainGroup], sols: &[ChainSolution], mt: usize) -> (CMatrix, Vec<MiddleTag>) {
    let mut cols: Vec<CMatrix> = Vec::new();
    let mut tags = Vec::new();
    for (g, (group, sol)) in groups.iter().zip(sols).enumerate() {
        let mut taken = 0;
        'chains: for c in 0..sol.dim {
            for j in 0..sol.len {
                if taken == group.kept as usize {
                    break 'chains;
                }
                let origin = (u + j) % 3;
                cols.push(sol.slot(origin, j).columns(c, 1).into_owned());
                tags.push(MiddleTag::Chain { group: g, origin, slot: j, column: c });
                taken += 1;
            }
        }
    }
    let refs: Vec<&CMatrix> = cols.iter().collect();
    let m = if refs.is_empty() { CMatrix::zeros(mt, 0) } else { crate::linalg::hcat(&refs) };
    (m, tags)
}

/// High regime: random head/tail blocks and a branch-specific middle block.
pub fn build_high(alloc: &SymbolAllocation, eq: &EquivalentChannel, seed: u64) -> Result<PrecoderSet, OuterError> {
    if eq.regime != Regime::High {
        return Err(OuterError::WrongRegime(alloc.branch, Regime::High));
    }
    let (_, tx) = eq.oriented_blocks();
    check_sizes(alloc, tx)?;
    let pm = eq.p_matrices();
    let dm = alloc.dm as usize;
    let mut residual = 0.0f64;
    let mut null_dims = Vec::new();
    let (middle, tags, random): ([CMatrix; 3], [Vec<MiddleTag>; 3], bool) = match &alloc.middle {
        MiddleLayout::Empty => (std::array::from_fn(|_| CMatrix::zeros(tx.middle, 0)), Default::default(), false),
        MiddleLayout::Random { .. } => (
            std::array::from_fn(|k| random_block(tx.middle, dm, seed, k, "middle", 0)),
            std::array::from_fn(|_| vec![MiddleTag::Random; dm]),
            true,
        ),
        MiddleLayout::Chains { groups } => {
            let sols = solve_groups(&pm, groups, seed)?;
            for s in &sols {
                residual = residual.max(s.residual(&pm));
                null_dims.push(s.null_dim);
            }
            let mut mids: Vec<CMatrix> = Vec::new();
            let mut tags: Vec<Vec<MiddleTag>> = Vec::new();
            for u in 0..3 {
                let (m, t) = chain_middle(u, groups, &sols, tx.middle);
                mids.push(m);
                tags.push(t);
            }
            (mids.try_into().expect("three"), tags.try_into().expect("three"), false)
        }
        MiddleLayout::ClosedLoop { kept, .. } => {
            let e = closed_loop(&pm, *kept as usize)?;
            residual = loop_residual(&pm, &e)?;
            let tags = std::array::from_fn(|_| (0..*kept as usize).map(|column| MiddleTag::Loop { column }).collect());
            (e, tags, false)
        }
    };
    for (k, m) in middle.iter().enumerate() {
        if m.ncols() != dm {
            return Err(OuterError::RankDeficient { user: k, rank: m.ncols(), cols: dm });
        }
    }
    let e = assemble(alloc, tx, seed, middle, random)?;
    Ok(PrecoderSet {
        e,
        alloc: alloc.clone(),
        tx_blocks: tx,
        middle_tags: tags,
        alignment_residual: residual,
        chain_null_dims: null_dims,
    })
}

/// Dispatches on the regime of the equivalent channel.
pub fn build(alloc: &SymbolAllocation, eq: &EquivalentChannel, seed: u64) -> Result<PrecoderSet, OuterError> {
    match eq.regime {
        Regime::Low => build_low(alloc, eq.oriented_blocks().1, seed),
        Regime::High => build_high(alloc, eq, seed),
    }
}
