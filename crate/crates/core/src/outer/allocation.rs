//! Splitting the per-user streams between the head, middle and tail blocks.
//!
//! The split is first computed on exact rationals (a [`RationalPlan`]) so the
//! extension factor can be read off its denominators, then turned into
//! integer block sizes once the parameters have been scaled.

use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dof::{d_star, rat, BindingTerm, ChainLength, DerivedParams, Regime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    LowFull,
    LowDirectLimited,
    HighHalfN,
    HighP1,
    HighChainN,
    HighChainM,
    /// `M = N` and `D_t > 3M/2`: the chain closes into a loop over all three users.
    HighClosedLoop,
}

impl Branch {
    /// Branches on which the scheme leaves no spare receive dimension.
    pub fn is_tight(&self) -> bool {
        matches!(
            self,
            Branch::LowFull | Branch::HighHalfN | Branch::HighChainN | Branch::HighChainM | Branch::HighClosedLoop
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AllocationError {
    #[error("{what} = {value} is not an integer; scale the parameters by {q} first")]
    NotIntegral { what: &'static str, value: String, q: u32 },
}

/// One family of alignment chains: for every origin transmitter, `dim`
/// column chains of `len` slots each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainGroup {
    pub len: u32,
    pub dim: u32,
    /// Middle columns per user actually used from this group (at most `len * dim`).
    pub kept: u32,
}

impl ChainGroup {
    pub fn full_columns(&self) -> u32 {
        self.len * self.dim
    }

    /// Interference dimensions saved per receiver by the kept columns.
    ///
    /// Columns are kept chain by chain, so `kept / len` chains are complete
    /// and one more is cut after `kept % len` slots.
    pub fn aligned(&self) -> u32 {
        if self.len == 0 {
            return 0;
        }
        let full = self.kept / self.len;
        let rem = self.kept % self.len;
        full * (self.len - 1) + rem.saturating_sub(1)
    }
}

/// How the middle block of every `E_k` is produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MiddleLayout {
    Empty,
    Random { cols: u32 },
    Chains { groups: Vec<ChainGroup> },
    ClosedLoop { dim: u32, kept: u32 },
}

impl MiddleLayout {
    pub fn columns(&self) -> u32 {
        match self {
            MiddleLayout::Empty => 0,
            MiddleLayout::Random { cols } => *cols,
            MiddleLayout::Chains { groups } => groups.iter().map(|g| g.kept).sum(),
            MiddleLayout::ClosedLoop { kept, .. } => *kept,
        }
    }

    pub fn aligned(&self) -> u32 {
        match self {
            MiddleLayout::Chains { groups } => groups.iter().map(ChainGroup::aligned).sum(),
            MiddleLayout::ClosedLoop { kept, .. } => *kept,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanMiddle {
    Empty,
    Random,
    /// `(len, dim)` per chain group.
    Chains(Vec<(u32, BigRational)>),
    ClosedLoop(BigRational),
}

/// Block sizes on exact rationals, before spatial extension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalPlan {
    pub branch: Branch,
    /// The direct-link rank caps the value below what interference allows.
    pub direct_limited: bool,
    pub dh: BigRational,
    pub dm: BigRational,
    pub dt: BigRational,
    pub middle: PlanMiddle,
}

impl RationalPlan {
    /// Every quantity that must become an integer after scaling.
    pub fn exact_quantities(&self) -> Vec<BigRational> {
        let mut out = vec![self.dh.clone(), self.dm.clone(), self.dt.clone()];
        match &self.middle {
            PlanMiddle::Chains(groups) => out.extend(groups.iter().map(|(_, d)| d.clone())),
            PlanMiddle::ClosedLoop(d) => out.push(d.clone()),
            _ => {}
        }
        out
    }
}

/// Removes `excess` streams: tail first, then head, then middle.
fn reduce(dh: &mut BigRational, dm: &mut BigRational, dt: &mut BigRational, excess: BigRational) {
    let mut left = excess;
    for block in [dt, dh, dm] {
        let take = if *block < left { block.clone() } else { left.clone() };
        *block -= &take;
        left -= take;
    }
    debug_assert!(left.is_zero());
}

fn min(a: BigRational, b: BigRational) -> BigRational {
    if a < b {
        a
    } else {
        b
    }
}

/// Branch and rational block sizes for the given parameters.
pub fn plan(derived: &DerivedParams) -> RationalPlan {
    let m = rat(derived.m.into());
    let n = rat(derived.n.into());
    let dt_sum = rat(derived.dt.into());
    let d1 = rat(derived.params.d1.into());
    let d2 = rat(derived.params.d2.into());
    let two = rat(2);
    let dbar = derived.dbar.clone();

    if derived.regime == Regime::Low {
        let half = (&n - &m + &dt_sum) / &two;
        let mut dh = min(d2, half.clone());
        let mut dm = &m - &dt_sum;
        let mut dt = &half - &dh;
        let limit = (&n + &m - &dt_sum) / &two;
        let direct_limited = dbar < limit;
        if direct_limited {
            reduce(&mut dh, &mut dm, &mut dt, &limit - &dbar);
        }
        let middle = if dm.is_zero() { PlanMiddle::Empty } else { PlanMiddle::Random };
        let branch = if direct_limited { Branch::LowDirectLimited } else { Branch::LowFull };
        return RationalPlan { branch, direct_limited, dh, dm, dt, middle };
    }

    let limit = derived.interference_limit();
    let direct_limited = dbar < limit;
    let outer = &two * &m - &dt_sum;
    let branch = match derived.p {
        ChainLength::Unbounded => {
            if &dt_sum * &two <= &m * rat(3) {
                Branch::HighHalfN
            } else {
                Branch::HighClosedLoop
            }
        }
        ChainLength::Finite(p) => {
            let binding = crate::dof::evaluate(&m, &n, &(&m + &n + rat(1)), &dt_sum).binding;
            match binding {
                BindingTerm::HalfN => Branch::HighHalfN,
                _ if p == 1 => Branch::HighP1,
                BindingTerm::ChainM => Branch::HighChainM,
                _ => Branch::HighChainN,
            }
        }
        ChainLength::NotApplicable => unreachable!("high regime always has a chain length"),
    };

    let (mut dh, mut dm, mut dt, middle) = match branch {
        Branch::HighHalfN => {
            let dh = min(&m - &d1, &n / &two);
            let dt = &n / &two - &dh;
            (dh, rat(0), dt, PlanMiddle::Empty)
        }
        _ => {
            let dm = &limit - &outer;
            let middle = match branch {
                Branch::HighP1 => PlanMiddle::Random,
                Branch::HighClosedLoop => PlanMiddle::ClosedLoop(dm.clone()),
                Branch::HighChainN => {
                    let p = derived.p.finite().expect("finite chain");
                    let pr = rat(p.into());
                    let r = (&n - rat(4) * &m + &two * &dt_sum) / (&two * &pr + rat(1));
                    PlanMiddle::Chains(vec![(p, r)])
                }
                Branch::HighChainM => {
                    let p = derived.p.finite().expect("finite chain");
                    let pr = rat(p.into());
                    let r_prime = &dt_sum - (&pr - rat(1)) * &n + (&pr - &two) * &m;
                    let r_hat = d_star(p, &m, &n) - &dt_sum;
                    PlanMiddle::Chains(vec![(p, r_prime), (p - 1, r_hat)])
                }
                _ => unreachable!(),
            };
            (&m - &d1, dm, &m - &d2, middle)
        }
    };
    if direct_limited {
        reduce(&mut dh, &mut dm, &mut dt, &limit - &dbar);
    }
    let middle = if dm.is_zero() && middle == PlanMiddle::Random { PlanMiddle::Empty } else { middle };
    RationalPlan { branch, direct_limited, dh, dm, dt, middle }
}

/// Integer stream counts for a scaled parameter point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolAllocation {
    pub dh: u32,
    pub dm: u32,
    pub dt: u32,
    pub branch: Branch,
    pub direct_limited: bool,
    pub p: ChainLength,
    pub middle: MiddleLayout,
}

impl SymbolAllocation {
    pub fn total(&self) -> u32 {
        self.dh + self.dm + self.dt
    }

    /// Chain dimension `r` (ChainN).
    pub fn r(&self) -> Option<u32> {
        match (&self.middle, self.branch) {
            (MiddleLayout::Chains { groups }, Branch::HighChainN) => Some(groups[0].dim),
            _ => None,
        }
    }

    /// `(r', r̂)` (ChainM).
    pub fn r_prime_hat(&self) -> Option<(u32, u32)> {
        match (&self.middle, self.branch) {
            (MiddleLayout::Chains { groups }, Branch::HighChainM) => Some((groups[0].dim, groups[1].dim)),
            _ => None,
        }
    }
}

fn to_count(what: &'static str, v: &BigRational, q: u32) -> Result<u32, AllocationError> {
    if !v.is_integer() {
        return Err(AllocationError::NotIntegral { what, value: crate::dof::format_ratio(v), q });
    }
    Ok(v.to_integer().to_u32().expect("block size is a small nonnegative integer"))
}

/// Integer allocation. Fails if the parameters still need spatial extension.
pub fn allocate_symbols(derived: &DerivedParams) -> Result<SymbolAllocation, AllocationError> {
    let plan = plan(derived);
    let q = crate::dof::spatial_extension_factor(derived);
    to_count("dbar", &derived.dbar, q)?;
    let dh = to_count("dh", &plan.dh, q)?;
    let dm = to_count("dm", &plan.dm, q)?;
    let dt = to_count("dt", &plan.dt, q)?;
    let middle = match &plan.middle {
        PlanMiddle::Empty => MiddleLayout::Empty,
        PlanMiddle::Random => MiddleLayout::Random { cols: dm },
        PlanMiddle::ClosedLoop(d) => MiddleLayout::ClosedLoop { dim: to_count("loop dimension", d, q)?, kept: dm },
        PlanMiddle::Chains(groups) => {
            let mut left = dm;
            let mut out = Vec::with_capacity(groups.len());
            for (len, dim) in groups {
                let dim = to_count("chain dimension", dim, q)?;
                let kept = left.min(len * dim);
                left -= kept;
                out.push(ChainGroup { len: *len, dim, kept });
            }
            debug_assert_eq!(left, 0);
            MiddleLayout::Chains { groups: out }
        }
    };
    Ok(SymbolAllocation { dh, dm, dt, branch: plan.branch, direct_limited: plan.direct_limited, p: derived.p, middle })
}

/// Interference dimensions the scheme leaves at every receiver.
pub fn predicted_z(derived: &DerivedParams, alloc: &SymbolAllocation) -> u32 {
    match derived.regime {
        Regime::Low => alloc.dh + alloc.dt,
        Regime::High => alloc.dh + alloc.dt + 2 * alloc.dm - alloc.middle.aligned(),
    }
}

/// Least common multiple of the denominators of `values`.
pub(crate) fn denominator_lcm<'a>(values: impl IntoIterator<Item = &'a BigRational>) -> num_bigint::BigInt {
    values.into_iter().fold(num_bigint::BigInt::from(1), |acc, x| acc.lcm(x.denom()))
}
