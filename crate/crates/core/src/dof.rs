//! Network parameters and the exact per-user DoF value.
//!
//! All quantities that select a branch of the scheme or a block size are kept
//! as exact rationals; floating point only appears once matrices are built.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::outer::allocation;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParamsError {
    #[error("antenna counts must be positive (mt={mt}, mr={mr})")]
    NoAntennas { mt: u32, mr: u32 },
    #[error("rank {name}={value} exceeds min(mt, mr)={limit}")]
    RankTooLarge { name: &'static str, value: u32, limit: u32 },
    #[error("scale factor must be at least 1")]
    ZeroScale,
}

/// The tuple `(M_T, M_R, D_0, D_1, D_2)`.
///
/// `d1` is the rank of every link from transmitter `k+1` to receiver `k`,
/// `d2` the rank of every link from transmitter `k-1` to receiver `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SystemParams {
    pub mt: u32,
    pub mr: u32,
    pub d0: u32,
    pub d1: u32,
    pub d2: u32,
}

impl SystemParams {
    pub fn new(mt: u32, mr: u32, d0: u32, d1: u32, d2: u32) -> Result<Self, ParamsError> {
        let p = Self { mt, mr, d0, d1, d2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        if self.mt == 0 || self.mr == 0 {
            return Err(ParamsError::NoAntennas { mt: self.mt, mr: self.mr });
        }
        let limit = self.m();
        for (name, value) in [("d0", self.d0), ("d1", self.d1), ("d2", self.d2)] {
            if value > limit {
                return Err(ParamsError::RankTooLarge { name, value, limit });
            }
        }
        Ok(())
    }

    pub fn m(&self) -> u32 {
        self.mt.min(self.mr)
    }

    pub fn n(&self) -> u32 {
        self.mt.max(self.mr)
    }

    pub fn dt(&self) -> u32 {
        self.d1 + self.d2
    }

    /// Parameters of the network with transmitters and receivers swapped.
    ///
    /// The reciprocal link from transmitter `k+1` to receiver `k` is the
    /// transpose of the original link from transmitter `k` to receiver
    /// `k+1`, so `d1` and `d2` trade places.
    pub fn reciprocal(&self) -> Self {
        Self { mt: self.mr, mr: self.mt, d0: self.d0, d1: self.d2, d2: self.d1 }
    }

    pub fn scale(&self, q: u32) -> Result<Self, ParamsError> {
        if q == 0 {
            return Err(ParamsError::ZeroScale);
        }
        Ok(Self {
            mt: self.mt * q,
            mr: self.mr * q,
            d0: self.d0 * q,
            d1: self.d1 * q,
            d2: self.d2 * q,
        })
    }
}

/// Multiplies all five parameters by `q`.
pub fn scale(params: &SystemParams, q: u32) -> Result<SystemParams, ParamsError> {
    params.scale(q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `D_t <= M`: zero forcing alone suffices.
    Low,
    /// `M < D_t <= 2M`: alignment is needed in general.
    High,
}

/// Length `p` of the subspace alignment chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainLength {
    /// Low-interference regime, no chains.
    NotApplicable,
    Finite(u32),
    /// `M = N` with `D_t > M`; the chain closes on itself.
    Unbounded,
}

impl ChainLength {
    pub fn finite(&self) -> Option<u32> {
        match self {
            ChainLength::Finite(p) => Some(*p),
            _ => None,
        }
    }
}

/// Which argument of the min attains the DoF value. Ties resolve to the
/// earliest variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BindingTerm {
    DirectRank,
    LowFormula,
    HalfN,
    ChainM,
    ChainN,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivedParams {
    pub params: SystemParams,
    pub m: u32,
    pub n: u32,
    pub dt: u32,
    pub regime: Regime,
    pub p: ChainLength,
    pub dbar: BigRational,
    pub binding: BindingTerm,
}

impl DerivedParams {
    /// The DoF value the interfering links alone allow (`D_0` ignored).
    pub fn interference_limit(&self) -> BigRational {
        let inf = rat(self.m as i64 + self.n as i64 + 1);
        evaluate(&rat(self.m.into()), &rat(self.n.into()), &inf, &rat(self.dt.into())).value
    }

    /// `D★ = pN - (2p² - 3p + 2) M / (2p - 1)` for finite `p`.
    pub fn d_star(&self) -> Option<BigRational> {
        self.p.finite().map(|p| d_star(p, &rat(self.m.into()), &rat(self.n.into())))
    }
}

pub(crate) fn rat(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

pub(crate) fn d_star(p: u32, m: &BigRational, n: &BigRational) -> BigRational {
    let p = rat(p.into());
    let two = rat(2);
    let coeff = (&two * &p * &p - rat(3) * &p + &two) / (&two * &p - rat(1));
    &p * n - coeff * m
}

/// Result of evaluating the DoF formula on (possibly fractional) inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormulaValue {
    pub value: BigRational,
    pub binding: BindingTerm,
    pub p: ChainLength,
}

/// Evaluates the per-user DoF formula on rational `(M, N, D_0, D_t)`.
///
/// The formula is homogeneous of degree one, so fractional inputs are the
/// same as integral inputs scaled down by a common factor.
pub fn evaluate(m: &BigRational, n: &BigRational, d0: &BigRational, dt: &BigRational) -> FormulaValue {
    let two = rat(2);
    let mut candidates: Vec<(BindingTerm, BigRational)> = vec![(BindingTerm::DirectRank, d0.clone())];
    let p = if dt <= m {
        candidates.push((BindingTerm::LowFormula, (n + m - dt) / &two));
        ChainLength::NotApplicable
    } else if n == m {
        candidates.push((BindingTerm::HalfN, n / &two));
        candidates.push((BindingTerm::ChainM, m / &two));
        candidates.push((BindingTerm::ChainN, n / &two));
        ChainLength::Unbounded
    } else {
        let p_int = ((dt - m) / (n - m)).ceil().to_integer();
        let p = rat_from_big(&p_int);
        candidates.push((BindingTerm::HalfN, n / &two));
        candidates.push((BindingTerm::ChainM, &p * m / (&two * &p - rat(1))));
        candidates.push((BindingTerm::ChainN, (&p * n + &two * m - dt) / (&two * &p + rat(1))));
        ChainLength::Finite(p_int.to_u32().expect("chain length fits in u32"))
    };
    let (binding, value) = candidates
        .into_iter()
        .reduce(|best, cand| if cand.1 < best.1 { cand } else { best })
        .expect("at least one candidate");
    FormulaValue { value, binding, p }
}

fn rat_from_big(v: &BigInt) -> BigRational {
    BigRational::from_integer(v.clone())
}

/// Classifies the regime and evaluates the DoF value exactly.
pub fn derive(params: &SystemParams) -> Result<DerivedParams, ParamsError> {
    params.validate()?;
    let (m, n, dt) = (params.m(), params.n(), params.dt());
    let v = evaluate(&rat(m.into()), &rat(n.into()), &rat(params.d0.into()), &rat(dt.into()));
    Ok(DerivedParams {
        params: *params,
        m,
        n,
        dt,
        regime: if dt <= m { Regime::Low } else { Regime::High },
        p: v.p,
        dbar: v.value,
        binding: v.binding,
    })
}

/// Smallest `q` making the DoF value and every block size of the scheme
/// integral: the LCM of their denominators.
pub fn spatial_extension_factor(derived: &DerivedParams) -> u32 {
    let plan = allocation::plan(derived);
    let quantities = plan.exact_quantities();
    let q = allocation::denominator_lcm(quantities.iter().chain(std::iter::once(&derived.dbar)));
    q.to_u32().expect("extension factor fits in u32")
}

/// Renders a rational as `a` or `a/b`.
pub fn format_ratio(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Decimal rendering with `sig` significant digits, round-half-even,
/// trailing zeros trimmed. Never uses exponent notation.
pub fn format_decimal(r: &BigRational, sig: u32) -> String {
    if r.is_zero() {
        return "0".to_string();
    }
    let negative = r.is_negative();
    let x = r.abs();
    let ten = BigInt::from(10);
    // Find e with 10^(sig-1) <= x * 10^e < 10^sig.
    let lower = BigRational::from_integer(ten.pow(sig - 1));
    let upper = BigRational::from_integer(ten.pow(sig));
    let mut e: i64 = 0;
    let scaled = |e: i64| -> BigRational {
        if e >= 0 {
            &x * BigRational::from_integer(ten.pow(e as u32))
        } else {
            &x / BigRational::from_integer(ten.pow((-e) as u32))
        }
    };
    let mut s = scaled(e);
    while s < lower {
        e += 1;
        s = scaled(e);
    }
    while s >= upper {
        e -= 1;
        s = scaled(e);
    }
    let floor = s.floor().to_integer();
    let frac = &s - BigRational::from_integer(floor.clone());
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let mut digits = if frac > half || (frac == half && floor.is_odd()) { floor + 1 } else { floor };
    if digits == ten.pow(sig) {
        digits /= &ten;
        e -= 1;
    }
    let mut text = digits.to_string();
    // Place the decimal point: value = digits * 10^-e.
    let out = if e <= 0 {
        text.extend(std::iter::repeat_n('0', (-e) as usize));
        text
    } else {
        let e = e as usize;
        if text.len() <= e {
            let pad = "0".repeat(e - text.len());
            format!("0.{pad}{text}")
        } else {
            let (int, frac) = text.split_at(text.len() - e);
            format!("{int}.{frac}")
        }
    };
    let out = if out.contains('.') {
        out.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        out
    };
    if negative {
        format!("-{out}")
    } else {
        out
    }
}

/// Serializable summary of [`DerivedParams`] used by the command line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DofSummary {
    pub params: SystemParams,
    pub m: u32,
    pub n: u32,
    pub dt: u32,
    pub regime: Regime,
    pub p: ChainLength,
    pub dbar: String,
    pub dbar_decimal: String,
    pub binding: BindingTerm,
    pub extension_factor: u32,
}

impl From<&DerivedParams> for DofSummary {
    fn from(d: &DerivedParams) -> Self {
        Self {
            params: d.params,
            m: d.m,
            n: d.n,
            dt: d.dt,
            regime: d.regime,
            p: d.p,
            dbar: format_ratio(&d.dbar),
            dbar_decimal: format_decimal(&d.dbar, 12),
            binding: d.binding,
            extension_factor: spatial_extension_factor(d),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frac(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    fn dbar(t: (u32, u32, u32, u32, u32)) -> BigRational {
        derive(&SystemParams::new(t.0, t.1, t.2, t.3, t.4).unwrap()).unwrap().dbar
    }

    #[test]
    fn worked_example_value() {
        let d = derive(&SystemParams::new(2, 4, 2, 1, 1).unwrap()).unwrap();
        assert_eq!(d.dbar, rat(2));
        assert_eq!(d.regime, Regime::Low);
    }

    #[test]
    fn square_full_rank_is_half_cake() {
        let d = derive(&SystemParams::new(4, 4, 4, 4, 4).unwrap()).unwrap();
        assert_eq!(d.dbar, rat(2));
        assert_eq!(d.p, ChainLength::Unbounded);
        assert_eq!(d.binding, BindingTerm::HalfN);
    }

    #[test]
    fn full_rank_two_by_three() {
        let d = derive(&SystemParams::new(2, 3, 2, 2, 2).unwrap()).unwrap();
        assert_eq!(d.dbar, frac(6, 5));
        assert_eq!(d.p, ChainLength::Finite(2));
        assert_eq!(d.binding, BindingTerm::ChainN);
    }

    #[test]
    fn half_n_branch() {
        let d = derive(&SystemParams::new(3, 4, 3, 2, 2).unwrap()).unwrap();
        assert_eq!(d.dbar, rat(2));
        assert_eq!(d.binding, BindingTerm::HalfN);
        assert_eq!(d.p, ChainLength::Finite(1));
    }

    #[test]
    fn chain_m_branch() {
        let d = derive(&SystemParams::new(4, 7, 4, 4, 4).unwrap()).unwrap();
        assert_eq!(d.dbar, frac(8, 3));
        assert_eq!(d.binding, BindingTerm::ChainM);
        assert_eq!(d.p, ChainLength::Finite(2));
        assert_eq!(d.d_star().unwrap(), frac(26, 3));
    }

    #[test]
    fn no_interference_gives_direct_rank() {
        for (mt, mr, d0) in [(2, 4, 1), (3, 3, 3), (5, 2, 2)] {
            assert_eq!(dbar((mt, mr, d0, 0, 0)), rat(d0.into()));
        }
    }

    #[test]
    fn extension_factors() {
        let q = |t: (u32, u32, u32, u32, u32)| {
            spatial_extension_factor(&derive(&SystemParams::new(t.0, t.1, t.2, t.3, t.4).unwrap()).unwrap())
        };
        assert_eq!(q((2, 4, 2, 1, 1)), 1);
        assert_eq!(q((2, 3, 2, 2, 2)), 5);
        assert_eq!(q((4, 7, 4, 4, 4)), 3);
        assert_eq!(q((4, 6, 4, 3, 3)), 3);
    }

    #[test]
    fn scaling_examples() {
        let p = SystemParams::new(2, 3, 2, 2, 2).unwrap();
        let s = scale(&p, 5).unwrap();
        assert_eq!(s, SystemParams::new(10, 15, 10, 10, 10).unwrap());
        assert_eq!(derive(&s).unwrap().dbar, rat(6));
        assert_eq!(scale(&SystemParams::new(2, 4, 2, 1, 1).unwrap(), 1).unwrap(), SystemParams::new(2, 4, 2, 1, 1).unwrap());
        let s = scale(&SystemParams::new(4, 7, 4, 4, 4).unwrap(), 3).unwrap();
        assert_eq!(s, SystemParams::new(12, 21, 12, 12, 12).unwrap());
        assert_eq!(derive(&s).unwrap().dbar, rat(8));
        assert_eq!(scale(&p, 0), Err(ParamsError::ZeroScale));
    }

    #[test]
    fn invalid_params() {
        assert!(matches!(SystemParams::new(4, 4, 4, 9, 1), Err(ParamsError::RankTooLarge { name: "d1", .. })));
        assert!(matches!(SystemParams::new(0, 4, 0, 0, 0), Err(ParamsError::NoAntennas { .. })));
    }

    #[test]
    fn decimal_rendering() {
        assert_eq!(format_decimal(&frac(1, 2), 12), "0.5");
        assert_eq!(format_decimal(&frac(6, 5), 12), "1.2");
        assert_eq!(format_decimal(&frac(2, 3), 12), "0.666666666667");
        assert_eq!(format_decimal(&frac(1, 3), 12), "0.333333333333");
        assert_eq!(format_decimal(&rat(21), 12), "21");
        assert_eq!(format_decimal(&frac(1, 800), 12), "0.00125");
        // exact tie at the 12th digit rounds to even
        assert_eq!(format_decimal(&frac(1_000_000_000_005, 10_000_000_000_000), 12), "0.1");
        assert_eq!(format_decimal(&frac(1_000_000_000_015, 10_000_000_000_000), 12), "0.100000000002");
        assert_eq!(format_ratio(&frac(6, 5)), "6/5");
        assert_eq!(format_ratio(&rat(2)), "2");
    }
}
