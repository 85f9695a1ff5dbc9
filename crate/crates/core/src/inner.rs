//! Invertible changes of basis `R_k`, `T_k` that turn the rank-deficient
//! network into a partially connected full-rank one.
//!
//! The constructions assume `mt <= mr`. For `mt > mr` they run on the
//! reciprocal network and the results are transposed back: the original
//! `R_k` is the reciprocal `T_k` transposed and vice versa. Everything that
//! talks about head/middle/tail blocks (patterns, cross blocks, outer
//! precoders) does so in this oriented frame.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelError, ChannelSet, Grid};
use crate::dof::Regime;
use crate::linalg::{
    complement_within, intersect_subspaces, left_null_space_basis, max_abs, null_space_basis, numerical_rank,
    singular_values, spectral_norm, vcat, hcat, CMatrix, LinalgError, SubspaceBasis,
};
use crate::outer::chains::PMatrices;
use crate::rng::{complex_gaussian_matrix, substream, Tag};

/// Smallest-to-largest singular value ratio below which a transform counts
/// as singular.
pub const INVERTIBILITY_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InnerError {
    #[error("channel set rejected: {0}")]
    Channel(#[from] ChannelError),
    #[error("user {user}: block {block} has dimension {got}, expected {expected} (non-generic channel?)")]
    Dimension { block: &'static str, user: usize, expected: usize, got: usize },
    #[error("user {user}: {which} is singular (condition ratio {ratio:.3e})")]
    Singular { which: &'static str, user: usize, ratio: f64 },
    #[error("{0} construction does not apply to these parameters")]
    WrongRegime(&'static str),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Part {
    Head,
    Middle,
    Tail,
}

impl Part {
    pub const ALL: [Part; 3] = [Part::Head, Part::Middle, Part::Tail];

    pub fn name(&self) -> &'static str {
        match self {
            Part::Head => "head",
            Part::Middle => "middle",
            Part::Tail => "tail",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSizes {
    pub head: usize,
    pub middle: usize,
    pub tail: usize,
}

impl BlockSizes {
    pub fn new(head: usize, middle: usize, tail: usize) -> Self {
        Self { head, middle, tail }
    }

    pub fn total(&self) -> usize {
        self.head + self.middle + self.tail
    }

    /// `(offset, length)` of a part.
    pub fn range(&self, part: Part) -> (usize, usize) {
        match part {
            Part::Head => (0, self.head),
            Part::Middle => (self.head, self.middle),
            Part::Tail => (self.head + self.middle, self.tail),
        }
    }

    pub fn size(&self, part: Part) -> usize {
        self.range(part).1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerTransforms {
    /// Receiver transforms, `mr × mr`.
    #[serde(with = "crate::io::matrix_triple")]
    pub r: [CMatrix; 3],
    /// Transmitter transforms, `mt × mt`.
    #[serde(with = "crate::io::matrix_triple")]
    pub t: [CMatrix; 3],
    pub rx_blocks: BlockSizes,
    pub tx_blocks: BlockSizes,
    pub regime: Regime,
    /// Built on the reciprocal network because `mt > mr`.
    pub reciprocal_applied: bool,
}

impl InnerTransforms {
    fn transposed(&self, reciprocal_applied: bool) -> Self {
        Self {
            r: std::array::from_fn(|k| self.t[k].transpose()),
            t: std::array::from_fn(|k| self.r[k].transpose()),
            rx_blocks: self.tx_blocks,
            tx_blocks: self.rx_blocks,
            regime: self.regime,
            reciprocal_applied,
        }
    }

    /// The transforms of the network with `mt <= mr` they were built on.
    pub fn oriented(&self) -> Self {
        if self.reciprocal_applied {
            self.transposed(false)
        } else {
            self.clone()
        }
    }

    /// Worst `σ_min / σ_max` over all six transforms.
    pub fn worst_condition_ratio(&self) -> f64 {
        self.r.iter().chain(self.t.iter()).map(condition_ratio).fold(f64::INFINITY, f64::min)
    }
}

fn condition_ratio(m: &CMatrix) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if hi > 0.0 => lo / hi,
        (None, None) => 1.0,
        _ => 0.0,
    }
}

fn check_invertible(m: &CMatrix, which: &'static str, user: usize) -> Result<(), InnerError> {
    let ratio = condition_ratio(m);
    if ratio > INVERTIBILITY_TOL {
        Ok(())
    } else {
        Err(InnerError::Singular { which, user, ratio })
    }
}

fn expect_dim(b: &SubspaceBasis, block: &'static str, user: usize, expected: usize) -> Result<(), InnerError> {
    if b.dim() != expected {
        return Err(InnerError::Dimension { block, user, expected, got: b.dim() });
    }
    Ok(())
}

/// Orthogonal complement of a span.
fn complement(b: &SubspaceBasis) -> Result<SubspaceBasis, LinalgError> {
    if b.is_empty() {
        return Ok(SubspaceBasis::full(b.ambient_dim()));
    }
    null_space_basis(&b.vectors().adjoint(), None)
}

/// Basis vectors as rows `w^H`, so that `w^H a = 0` reads `rows * a = 0`.
fn as_rows(b: &SubspaceBasis) -> CMatrix {
    b.vectors().adjoint()
}

fn next(k: usize) -> usize {
    (k + 1) % 3
}

fn prev(k: usize) -> usize {
    (k + 2) % 3
}

fn with_reciprocity(
    cs: &ChannelSet,
    f: impl Fn(&ChannelSet) -> Result<InnerTransforms, InnerError>,
) -> Result<InnerTransforms, InnerError> {
    if cs.params.mt > cs.params.mr {
        Ok(f(&cs.reciprocal())?.transposed(true))
    } else {
        f(cs)
    }
}

/// Dispatches on the regime; `D_t = 0` gives identity transforms.
pub fn build(cs: &ChannelSet) -> Result<InnerTransforms, InnerError> {
    with_reciprocity(cs, |cs| {
        cs.check()?;
        let p = &cs.params;
        if p.dt() == 0 {
            Ok(identity(cs))
        } else if p.dt() <= p.m() {
            build_low_oriented(cs)
        } else {
            build_high_oriented(cs)
        }
    })
}

pub fn build_low(cs: &ChannelSet) -> Result<InnerTransforms, InnerError> {
    with_reciprocity(cs, |cs| {
        if cs.params.dt() > cs.params.m() {
            return Err(InnerError::WrongRegime("low-interference"));
        }
        build_low_oriented(cs)
    })
}

pub fn build_high(cs: &ChannelSet) -> Result<InnerTransforms, InnerError> {
    with_reciprocity(cs, |cs| {
        if cs.params.dt() <= cs.params.m() {
            return Err(InnerError::WrongRegime("high-interference"));
        }
        build_high_oriented(cs)
    })
}

fn identity(cs: &ChannelSet) -> InnerTransforms {
    let (m, n) = (cs.params.mt as usize, cs.params.mr as usize);
    InnerTransforms {
        r: std::array::from_fn(|_| CMatrix::identity(n, n)),
        t: std::array::from_fn(|_| CMatrix::identity(m, m)),
        rx_blocks: BlockSizes::new(0, n, 0),
        tx_blocks: BlockSizes::new(0, m, 0),
        regime: Regime::Low,
        reciprocal_applied: false,
    }
}

fn build_low_oriented(cs: &ChannelSet) -> Result<InnerTransforms, InnerError> {
    let p = &cs.params;
    let (m, n) = (p.mt as usize, p.mr as usize);
    let (d1, d2, dt) = (p.d1 as usize, p.d2 as usize, p.dt() as usize);
    let h = &cs.h;
    let mut r: Vec<CMatrix> = Vec::with_capacity(3);
    let mut t: Vec<CMatrix> = Vec::with_capacity(3);
    for k in 0..3 {
        // Receiver side: the middle rows reject both interferers, the head
        // rows reject transmitter k+1 only and the tail rows k-1 only.
        let uc = left_null_space_basis(&hcat(&[&h[k][next(k)], &h[k][prev(k)]]), None)?;
        expect_dim(&uc, "U^c", k, n - dt)?;
        let outside_uc = complement(&uc)?;
        let u_next = intersect_subspaces(&left_null_space_basis(&h[k][next(k)], None)?, &outside_uc)?;
        expect_dim(&u_next, "U_k(k+1)", k, d2)?;
        let u_prev = intersect_subspaces(&left_null_space_basis(&h[k][prev(k)], None)?, &outside_uc)?;
        expect_dim(&u_prev, "U_k(k-1)", k, d1)?;
        let rk = vcat(&[&as_rows(&u_next), &as_rows(&uc), &as_rows(&u_prev)]);
        check_invertible(&rk, "R_k", k)?;
        r.push(rk);

        // Transmitter side, mirrored: the middle columns are invisible to
        // both unintended receivers.
        let g = null_space_basis(&vcat(&[&h[prev(k)][k], &h[next(k)][k]]), None)?;
        expect_dim(&g, "G_k", k, m - dt)?;
        let outside_g = complement(&g)?;
        let v_prev = intersect_subspaces(&null_space_basis(&h[prev(k)][k], None)?, &outside_g)?;
        expect_dim(&v_prev, "V_(k-1)k", k, d2)?;
        let v_next = intersect_subspaces(&null_space_basis(&h[next(k)][k], None)?, &outside_g)?;
        expect_dim(&v_next, "V_(k+1)k", k, d1)?;
        let tk = hcat(&[v_prev.vectors(), g.vectors(), v_next.vectors()]);
        check_invertible(&tk, "T_k", k)?;
        t.push(tk);
    }
    Ok(InnerTransforms {
        r: r.try_into().expect("three users"),
        t: t.try_into().expect("three users"),
        rx_blocks: BlockSizes::new(d2, n - dt, d1),
        tx_blocks: BlockSizes::new(d2, m - dt, d1),
        regime: Regime::Low,
        reciprocal_applied: false,
    })
}

fn build_high_oriented(cs: &ChannelSet) -> Result<InnerTransforms, InnerError> {
    let p = &cs.params;
    let (m, n) = (p.mt as usize, p.mr as usize);
    let (d1, d2, dt) = (p.d1 as usize, p.d2 as usize, p.dt() as usize);
    let h = &cs.h;
    let seed = cs.provenance.seed();

    let mut u_next_rows: Vec<CMatrix> = Vec::with_capacity(3);
    let mut u_prev_rows: Vec<CMatrix> = Vec::with_capacity(3);
    let mut r: Vec<CMatrix> = Vec::with_capacity(3);
    for k in 0..3 {
        let l_next = left_null_space_basis(&h[k][next(k)], None)?;
        let l_prev = left_null_space_basis(&h[k][prev(k)], None)?;
        let both = intersect_subspaces(&l_next, &l_prev)?;
        expect_dim(&both, "N(H_k(k+1)) ∩ N(H_k(k-1))", k, n.saturating_sub(dt))?;
        let u_next = complement_within(&l_next, &both)?;
        if u_next.dim() < m - d1 {
            return Err(InnerError::Dimension { block: "U_k(k+1)", user: k, expected: m - d1, got: u_next.dim() });
        }
        let u_prev = complement_within(&l_prev, &both)?;
        if u_prev.dim() < m - d2 {
            return Err(InnerError::Dimension { block: "U_k(k-1)", user: k, expected: m - d2, got: u_prev.dim() });
        }
        let u_next = as_rows(&u_next.truncate(m - d1));
        let u_prev = as_rows(&u_prev.truncate(m - d2));
        let mut rng = substream(seed, &["inner".into(), "J".into(), Tag::from(k)]);
        let j = complex_gaussian_matrix(n + dt - 2 * m, n, &mut rng);
        let rk = vcat(&[&u_next, &j, &u_prev]);
        check_invertible(&rk, "R_k", k)?;
        r.push(rk);
        u_next_rows.push(u_next);
        u_prev_rows.push(u_prev);
    }

    let mut t: Vec<CMatrix> = Vec::with_capacity(3);
    for k in 0..3 {
        let v_prev = null_space_basis(&h[prev(k)][k], None)?;
        expect_dim(&v_prev, "V_(k-1)k", k, m - d1)?;
        let v_next = null_space_basis(&h[next(k)][k], None)?;
        expect_dim(&v_next, "V_(k+1)k", k, m - d2)?;
        // Middle columns must not leak into the tail rows of receiver k-1
        // nor the head rows of receiver k+1.
        let constraint = vcat(&[&(&u_prev_rows[prev(k)] * &h[prev(k)][k]), &(&u_next_rows[next(k)] * &h[next(k)][k])]);
        let q = null_space_basis(&constraint, None)?;
        expect_dim(&q, "Q_k", k, dt - m)?;
        let tk = hcat(&[v_prev.vectors(), q.vectors(), v_next.vectors()]);
        check_invertible(&tk, "T_k", k)?;
        t.push(tk);
    }
    Ok(InnerTransforms {
        r: r.try_into().expect("three users"),
        t: t.try_into().expect("three users"),
        rx_blocks: BlockSizes::new(m - d1, n + dt - 2 * m, m - d2),
        tx_blocks: BlockSizes::new(m - d1, dt - m, m - d2),
        regime: Regime::High,
        reciprocal_applied: false,
    })
}

/// All nine transformed links `R_k H_ki T_i`, in the original frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalentChannel {
    pub blocks: Grid<CMatrix>,
    /// `σ_max(R_k) σ_max(H_ki) σ_max(T_i)`, the reference for zero tests.
    pub scale: Grid<f64>,
    pub rx_blocks: BlockSizes,
    pub tx_blocks: BlockSizes,
    pub regime: Regime,
    pub reciprocal_applied: bool,
}

impl EquivalentChannel {
    /// Transformed link from transmitter `i` to receiver `k` of the
    /// oriented network.
    pub fn oriented_link(&self, k: usize, i: usize) -> CMatrix {
        if self.reciprocal_applied {
            self.blocks[i][k].transpose()
        } else {
            self.blocks[k][i].clone()
        }
    }

    pub fn oriented_scale(&self, k: usize, i: usize) -> f64 {
        if self.reciprocal_applied {
            self.scale[i][k]
        } else {
            self.scale[k][i]
        }
    }

    /// `(rx, tx)` block sizes of the oriented network.
    pub fn oriented_blocks(&self) -> (BlockSizes, BlockSizes) {
        if self.reciprocal_applied {
            (self.tx_blocks, self.rx_blocks)
        } else {
            (self.rx_blocks, self.tx_blocks)
        }
    }

    /// Sub-block `(rx part, tx part)` of the oriented link `(k, i)`.
    pub fn sub(&self, k: usize, i: usize, rx: Part, tx: Part) -> CMatrix {
        let (rb, tb) = self.oriented_blocks();
        let (r0, rl) = rb.range(rx);
        let (c0, cl) = tb.range(tx);
        self.oriented_link(k, i).view((r0, c0), (rl, cl)).into_owned()
    }

    /// `H̃_kh`: head of receiver `k` from the head of transmitter `k-1`.
    pub fn h_head(&self, k: usize) -> CMatrix {
        self.sub(k, prev(k), Part::Head, Part::Head)
    }

    /// `H̃_kt`: tail of receiver `k` from the tail of transmitter `k+1`.
    pub fn h_tail(&self, k: usize) -> CMatrix {
        self.sub(k, next(k), Part::Tail, Part::Tail)
    }

    /// `P_ki`, middle to middle, for `i = k ± 1`.
    pub fn p(&self, k: usize, i: usize) -> CMatrix {
        self.sub(k, i, Part::Middle, Part::Middle)
    }

    pub fn p_matrices(&self) -> PMatrices {
        let (rb, tb) = self.oriented_blocks();
        std::array::from_fn(|k| {
            std::array::from_fn(|i| if i == k { CMatrix::zeros(rb.middle, tb.middle) } else { self.p(k, i) })
        })
    }
}

pub fn equivalent_channel(cs: &ChannelSet, it: &InnerTransforms) -> EquivalentChannel {
    let r_norm: [f64; 3] = std::array::from_fn(|k| spectral_norm(&it.r[k]));
    let t_norm: [f64; 3] = std::array::from_fn(|k| spectral_norm(&it.t[k]));
    EquivalentChannel {
        blocks: std::array::from_fn(|k| std::array::from_fn(|i| &it.r[k] * &cs.h[k][i] * &it.t[i])),
        scale: std::array::from_fn(|k| std::array::from_fn(|i| r_norm[k] * spectral_norm(&cs.h[k][i]) * t_norm[i])),
        rx_blocks: it.rx_blocks,
        tx_blocks: it.tx_blocks,
        regime: it.regime,
        reciprocal_applied: it.reciprocal_applied,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Zero,
    NonZero,
    FullRank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternCheck {
    pub rx: usize,
    pub tx: usize,
    pub rx_part: Part,
    pub tx_part: Part,
    pub kind: CheckKind,
    /// Relative residual for zero/nonzero checks, `σ_min/σ_max` for rank checks.
    pub measured: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternReport {
    pub checks: Vec<PatternCheck>,
    pub pass: bool,
}

impl PatternReport {
    pub fn worst_zero_residual(&self) -> f64 {
        self.checks.iter().filter(|c| c.kind == CheckKind::Zero).map(|c| c.measured).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> impl Iterator<Item = &PatternCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Cross-link blocks allowed to be nonzero, as `(tx offset, rx part, tx part)`
/// where offset 1 means transmitter `k+1` and 2 means `k-1`.
fn allowed_blocks(regime: Regime) -> &'static [(usize, Part, Part)] {
    use Part::*;
    match regime {
        Regime::Low => &[(1, Tail, Tail), (2, Head, Head)],
        Regime::High => &[
            (1, Middle, Middle),
            (1, Middle, Tail),
            (1, Tail, Tail),
            (2, Head, Head),
            (2, Middle, Head),
            (2, Middle, Middle),
        ],
    }
}

/// Checks the cross-link block pattern of the oriented network: every
/// block outside the allowed set is zero (relative to the link scale), the
/// diagonal head/tail blocks are invertible and the `P` blocks have full
/// column rank.
pub fn verify_pattern(eq: &EquivalentChannel, tol: f64) -> PatternReport {
    let mut checks = Vec::new();
    let allowed = allowed_blocks(eq.regime);
    for k in 0..3 {
        for offset in [1, 2] {
            let i = (k + offset) % 3;
            let scale = eq.oriented_scale(k, i);
            for rx_part in Part::ALL {
                for tx_part in Part::ALL {
                    let block = eq.sub(k, i, rx_part, tx_part);
                    if block.is_empty() {
                        continue;
                    }
                    let residual = max_abs(&block);
                    let relative = if scale > 0.0 { residual / scale } else { residual };
                    let is_allowed = allowed.contains(&(offset, rx_part, tx_part));
                    let full_rank_needed = is_allowed && (rx_part == tx_part);
                    let (kind, measured, pass) = if !is_allowed {
                        (CheckKind::Zero, relative, relative <= tol)
                    } else if full_rank_needed {
                        let rank = numerical_rank(&block, None).unwrap_or(0);
                        let full = block.nrows().min(block.ncols());
                        (CheckKind::FullRank, condition_ratio(&block), rank == full)
                    } else {
                        (CheckKind::NonZero, relative, relative > tol)
                    };
                    checks.push(PatternCheck { rx: k, tx: i, rx_part, tx_part, kind, measured, pass });
                }
            }
        }
    }
    let pass = checks.iter().all(|c| c.pass);
    PatternReport { checks, pass }
}
