//! Dimension counting, zero-forcing decoders and end-to-end trials.
//!
//! Decodability is judged by ranks: receiver `k` sees `Z_k` interference
//! dimensions and can decode iff `d + Z_k <= N` and the desired columns
//! stay independent of the interference. The oriented frame (`mt <= mr`) is
//! used for all counting; the noiseless end-to-end check runs on the
//! original network, using the transposed scheme when it was built on the
//! reciprocal one.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{apply_channel, ChannelError, gen_generic, gen_ula, ChannelSet, UlaGeometry};
use crate::dof::{derive, format_ratio, spatial_extension_factor, SystemParams};
use crate::exec::Executor;
use crate::inner::{self, equivalent_channel, verify_pattern, EquivalentChannel, InnerTransforms};
use crate::linalg::{
    default_tol, hcat, left_null_space_basis, max_abs, numerical_rank, spectral_norm, tol_relative_to, CMatrix,
    LinalgError,
};
use crate::outer::{self, allocate_symbols, Branch, PrecoderSet};
use crate::rng::{derive_seed, substream, unit_circle_symbol, Tag};

pub use crate::outer::allocation::predicted_z;

/// Relative threshold for blocks and residuals that must vanish.
pub const ZERO_TOL: f64 = 1e-9;
/// Largest acceptable noiseless symbol error.
pub const DECODE_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("receiver {0} cannot separate its streams from the interference")]
    NotDecodable(usize),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    /// Rank threshold relative to the strongest direction a receiver sees;
    /// `None` uses the linear-algebra default.
    pub rank_tol: Option<f64>,
    pub zero_tol: f64,
    pub decode_tol: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { rank_tol: None, zero_tol: ZERO_TOL, decode_tol: DECODE_TOL }
    }
}

/// Per receiver, the desired signal space `R_k H_kk T_k E_k` and the
/// interference `[R_k H_k(k+1) T_(k+1) E_(k+1) | R_k H_k(k-1) T_(k-1) E_(k-1)]`,
/// in the oriented frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveLinks {
    pub desired: [CMatrix; 3],
    pub interference: [CMatrix; 3],
}

pub fn effective_links(cs: &ChannelSet, it: &InnerTransforms, ps: &PrecoderSet) -> EffectiveLinks {
    effective_links_from(&equivalent_channel(cs, it), ps)
}

pub fn effective_links_from(eq: &EquivalentChannel, ps: &PrecoderSet) -> EffectiveLinks {
    EffectiveLinks {
        desired: std::array::from_fn(|k| eq.oriented_link(k, k) * &ps.e[k]),
        interference: std::array::from_fn(|k| {
            let (a, b) = ((k + 1) % 3, (k + 2) % 3);
            hcat(&[&(eq.oriented_link(k, a) * &ps.e[a]), &(eq.oriented_link(k, b) * &ps.e[b])])
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceiverVerdict {
    pub z: usize,
    pub total_rank: usize,
    pub decodable: bool,
}

/// Largest singular value of everything receiver `k` sees, and the rank
/// threshold relative to it. Interference is ranked against this scale, so
/// numerically vanishing interference has rank 0.
pub fn receiver_scale(links: &EffectiveLinks, k: usize, tol: Option<f64>) -> (f64, f64) {
    let all = hcat(&[&links.desired[k], &links.interference[k]]);
    (spectral_norm(&all), tol.unwrap_or_else(|| default_tol(all.nrows(), all.ncols())))
}

pub fn decodability(links: &EffectiveLinks, dbar: usize, tol: Option<f64>) -> Result<[ReceiverVerdict; 3], LinalgError> {
    let mut out = [ReceiverVerdict { z: 0, total_rank: 0, decodable: false }; 3];
    for k in 0..3 {
        let n = links.desired[k].nrows();
        let (reference, base) = receiver_scale(links, k, tol);
        let z = numerical_rank(&links.interference[k], tol_relative_to(&links.interference[k], reference, Some(base)))?;
        let total = numerical_rank(&hcat(&[&links.desired[k], &links.interference[k]]), Some(base))?;
        out[k] = ReceiverVerdict { z, total_rank: total, decodable: z + dbar <= n && total == dbar + z };
    }
    Ok(out)
}

/// `W = (Bᴴ D)⁺ Bᴴ` where the columns of `B` span the complement of the
/// interference; then `W D = I` and `W` annihilates the interference.
pub fn zero_forcing_decoder(links: &EffectiveLinks, k: usize, tol: Option<f64>) -> Result<CMatrix, VerifyError> {
    let desired = &links.desired[k];
    let dbar = desired.ncols();
    let verdict = decodability(links, dbar, tol)?[k];
    if !verdict.decodable {
        return Err(VerifyError::NotDecodable(k));
    }
    if dbar == 0 {
        return Ok(CMatrix::zeros(0, desired.nrows()));
    }
    let interference = &links.interference[k];
    let b = if interference.ncols() == 0 {
        CMatrix::identity(desired.nrows(), desired.nrows())
    } else {
        // Cut at the measured rank so numerically aligned directions are
        // treated as the interference they are.
        let (reference, base) = receiver_scale(links, k, tol);
        let basis = left_null_space_basis(interference, tol_relative_to(interference, reference, Some(base)))?;
        if basis.dim() + verdict.z != desired.nrows() {
            return Err(VerifyError::NotDecodable(k));
        }
        basis.into_vectors()
    };
    let bh = b.adjoint();
    let restricted = &bh * desired;
    let pinv = restricted.pseudo_inverse(0.0).map_err(|_| VerifyError::NotDecodable(k))?;
    Ok(pinv * bh)
}

/// Where the channels of a trial come from.
#[derive(Debug, Clone)]
pub enum ChannelSource {
    Generic,
    /// Random ray geometry with the given element spacing.
    Ula { delta: f64 },
    /// The same channel set for every trial, used as is.
    Fixed(Arc<ChannelSet>),
}

impl ChannelSource {
    pub fn name(&self) -> &'static str {
        match self {
            ChannelSource::Generic => "generic",
            ChannelSource::Ula { .. } => "ula",
            ChannelSource::Fixed(_) => "fixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiverReport {
    pub z_measured: usize,
    pub z_predicted: usize,
    pub rank_total: usize,
    pub decodable: bool,
    /// Relative size of what the decoder lets through from the interference.
    pub interference_residual: f64,
    /// `max |ŝ - s|` over the streams of this receiver.
    pub decode_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub seed: u64,
    pub q: u32,
    pub streams_per_user: usize,
    pub receive_dims: usize,
    pub branch: Option<Branch>,
    pub direct_limited: bool,
    pub receivers: Vec<ReceiverReport>,
    pub pattern_pass: bool,
    pub worst_zero_residual: f64,
    pub alignment_residual: f64,
    pub worst_condition_ratio: f64,
    pub error: Option<String>,
    pub pass: bool,
}

impl TrialReport {
    fn failed(seed: u64, q: u32, error: String) -> Self {
        Self {
            seed,
            q,
            streams_per_user: 0,
            receive_dims: 0,
            branch: None,
            direct_limited: false,
            receivers: Vec::new(),
            pattern_pass: false,
            worst_zero_residual: f64::NAN,
            alignment_residual: f64::NAN,
            worst_condition_ratio: f64::NAN,
            error: Some(error),
            pass: false,
        }
    }

    /// Why the trial failed, if it did.
    pub fn failure_reason(&self) -> Option<String> {
        if self.pass {
            return None;
        }
        if let Some(e) = &self.error {
            return Some(e.clone());
        }
        if !self.pattern_pass {
            return Some("equivalent channel pattern check failed".into());
        }
        for (k, r) in self.receivers.iter().enumerate() {
            if !r.decodable {
                return Some(format!("receiver {k} not decodable (Z={}, rank={})", r.z_measured, r.rank_total));
            }
            if r.z_measured != r.z_predicted {
                return Some(format!("receiver {k}: Z={} but {} predicted", r.z_measured, r.z_predicted));
            }
        }
        Some("residual above tolerance".into())
    }
}

/// Everything built for one channel realization.
#[derive(Debug, Clone)]
pub struct Scheme {
    pub inner: InnerTransforms,
    pub equivalent: EquivalentChannel,
    pub precoders: PrecoderSet,
    pub links: EffectiveLinks,
}

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error(transparent)]
    Params(#[from] crate::dof::ParamsError),
    #[error(transparent)]
    Allocation(#[from] crate::outer::AllocationError),
    #[error("inner transforms: {0}")]
    Inner(#[from] inner::InnerError),
    #[error("outer precoders: {0}")]
    Outer(#[from] outer::OuterError),
}

/// Inner transforms, precoders and effective links for `cs`.
pub fn build_scheme(cs: &ChannelSet, seed: u64) -> Result<Scheme, SchemeError> {
    let derived = derive(&cs.params)?;
    let alloc = allocate_symbols(&derived)?;
    let it = inner::build(cs)?;
    let eq = equivalent_channel(cs, &it);
    let ps = outer::build(&alloc, &eq, seed)?;
    let links = effective_links_from(&eq, &ps);
    Ok(Scheme { inner: it, equivalent: eq, precoders: ps, links })
}

/// Runs the whole pipeline on given channels (no scaling).
pub fn run_trial(cs: &ChannelSet, seed: u64, opts: &VerifyOptions) -> TrialReport {
    let q = 1;
    let scheme = match build_scheme(cs, seed) {
        Ok(s) => s,
        Err(e) => return TrialReport::failed(seed, q, e.to_string()),
    };
    match evaluate(cs, &scheme, seed, opts) {
        Ok(r) => r,
        Err(e) => TrialReport::failed(seed, q, e.to_string()),
    }
}

fn relative(a: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        a / scale
    } else {
        a
    }
}

fn evaluate(cs: &ChannelSet, scheme: &Scheme, seed: u64, opts: &VerifyOptions) -> Result<TrialReport, VerifyError> {
    let derived = derive(&cs.params).expect("validated while building");
    let ps = &scheme.precoders;
    let alloc = &ps.alloc;
    let dbar = alloc.total() as usize;
    let n = scheme.links.desired[0].nrows();
    let z_pred = predicted_z(&derived, alloc) as usize;
    let pattern = verify_pattern(&scheme.equivalent, opts.zero_tol);
    let verdicts = decodability(&scheme.links, dbar, opts.rank_tol)?;

    let mut decoders: Vec<Option<CMatrix>> = Vec::with_capacity(3);
    for k in 0..3 {
        decoders.push(zero_forcing_decoder(&scheme.links, k, opts.rank_tol).ok());
    }

    // Noiseless transmission over the original network.
    let oriented = scheme.inner.oriented();
    let mut rng = substream(seed, &["symbols".into()]);
    let symbols: [CMatrix; 3] = std::array::from_fn(|_| CMatrix::from_fn(dbar, 1, |_, _| unit_circle_symbol(&mut rng)));
    let mut decode_error = [f64::INFINITY; 3];
    let mut leak = [f64::INFINITY; 3];
    if decoders.iter().all(Option::is_some) {
        let w: Vec<&CMatrix> = decoders.iter().map(|d| d.as_ref().unwrap()).collect();
        // Oriented-frame precoders V_k = T_k E_k and decoders U_k = W_k R_k.
        let v: Vec<CMatrix> = (0..3).map(|k| &oriented.t[k] * &ps.e[k]).collect();
        let u: Vec<CMatrix> = (0..3).map(|k| w[k] * &oriented.r[k]).collect();
        let (tx, rx): (Vec<CMatrix>, Vec<CMatrix>) = if scheme.inner.reciprocal_applied {
            (u.iter().map(|m| m.transpose()).collect(), v.iter().map(|m| m.transpose()).collect())
        } else {
            (v, u)
        };
        let x: [CMatrix; 3] = std::array::from_fn(|k| &tx[k] * &symbols[k]);
        let y = apply_channel(cs, &x, 0.0, seed)?;
        for k in 0..3 {
            let est = &rx[k] * &y[k];
            decode_error[k] = max_abs(&(est - &symbols[k]));
            let wi = w[k] * &scheme.links.interference[k];
            let (reference, _) = receiver_scale(&scheme.links, k, opts.rank_tol);
            leak[k] = relative(max_abs(&wi), spectral_norm(w[k]) * reference);
        }
    }

    let receivers: Vec<ReceiverReport> = (0..3)
        .map(|k| ReceiverReport {
            z_measured: verdicts[k].z,
            z_predicted: z_pred,
            rank_total: verdicts[k].total_rank,
            decodable: verdicts[k].decodable,
            interference_residual: leak[k],
            decode_error: decode_error[k],
        })
        .collect();
    let tight_ok = !alloc.branch.is_tight() || alloc.direct_limited || receivers.iter().all(|r| r.z_measured + dbar == n);
    let pass = pattern.pass
        && tight_ok
        && ps.alignment_residual <= opts.zero_tol
        && receivers.iter().all(|r| {
            r.decodable
                && r.z_measured == r.z_predicted
                && r.decode_error <= opts.decode_tol
                && r.interference_residual <= opts.zero_tol
        });
    Ok(TrialReport {
        seed,
        q: 1,
        streams_per_user: dbar,
        receive_dims: n,
        branch: Some(alloc.branch),
        direct_limited: alloc.direct_limited,
        receivers,
        pattern_pass: pattern.pass,
        worst_zero_residual: pattern.worst_zero_residual(),
        alignment_residual: ps.alignment_residual,
        worst_condition_ratio: scheme.inner.worst_condition_ratio(),
        error: None,
        pass,
    })
}

/// Draws channels for `params` (after spatial extension) and runs one trial.
pub fn end_to_end_trial(params: &SystemParams, source: &ChannelSource, seed: u64, opts: &VerifyOptions) -> TrialReport {
    let (cs, q) = match source {
        ChannelSource::Fixed(cs) => ((**cs).clone(), 1),
        _ => {
            let derived = match derive(params) {
                Ok(d) => d,
                Err(e) => return TrialReport::failed(seed, 0, e.to_string()),
            };
            let q = spatial_extension_factor(&derived);
            let scaled = params.scale(q).expect("q >= 1");
            let cs = match source {
                ChannelSource::Generic => gen_generic(&scaled, seed),
                ChannelSource::Ula { delta } => {
                    let geometry = UlaGeometry::random(&scaled, *delta, seed);
                    match gen_ula(&scaled, &geometry, seed) {
                        Ok(cs) => cs,
                        Err(e) => return TrialReport::failed(seed, q, e.to_string()),
                    }
                }
                ChannelSource::Fixed(_) => unreachable!(),
            };
            (cs, q)
        }
    };
    let mut report = run_trial(&cs, seed, opts);
    report.q = q;
    report
}

/// Seed of trial `t` of a run started with `seed`.
pub fn trial_seed(seed: u64, t: usize) -> u64 {
    derive_seed(seed, &["trial".into(), Tag::from(t)])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub seed: u64,
    pub reason: String,
}

/// Aggregate over independent trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub version: String,
    pub params: SystemParams,
    pub provenance: String,
    pub seed: u64,
    pub trials: usize,
    pub passed: usize,
    pub pass_rate: f64,
    pub pass: bool,
    pub dbar: String,
    pub q: u32,
    pub streams_per_user: usize,
    pub receive_dims: usize,
    pub branch: Option<Branch>,
    pub direct_limited: bool,
    /// `Z_k` per receiver of the first trial that got that far.
    pub z_measured: Vec<usize>,
    pub z_predicted: Option<usize>,
    pub worst_decode_error: f64,
    pub worst_interference_residual: f64,
    pub worst_zero_residual: f64,
    pub worst_alignment_residual: f64,
    pub failures: Vec<TrialFailure>,
}

/// Failures listed individually in a report; the rest are only counted.
pub const MAX_LISTED_FAILURES: usize = 20;

fn worst(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, |acc, v| if v.is_nan() || acc.is_nan() { f64::NAN } else { acc.max(v) })
}

pub fn aggregate(params: &SystemParams, source: &ChannelSource, seed: u64, reports: &[TrialReport]) -> VerificationReport {
    let passed = reports.iter().filter(|r| r.pass).count();
    let built: Vec<&TrialReport> = reports.iter().filter(|r| r.error.is_none()).collect();
    let first = built.first();
    let failures = reports
        .iter()
        .enumerate()
        .filter_map(|(t, r)| r.failure_reason().map(|reason| TrialFailure { trial: t, seed: r.seed, reason }))
        .take(MAX_LISTED_FAILURES)
        .collect();
    let dbar = derive(params).map(|d| format_ratio(&d.dbar)).unwrap_or_else(|_| "invalid".into());
    let all_receivers = || built.iter().flat_map(|r| r.receivers.iter());
    VerificationReport {
        version: crate::VERSION.to_string(),
        params: *params,
        provenance: source.name().to_string(),
        seed,
        trials: reports.len(),
        passed,
        pass_rate: if reports.is_empty() { 0.0 } else { passed as f64 / reports.len() as f64 },
        pass: !reports.is_empty() && passed == reports.len(),
        dbar,
        q: reports.first().map(|r| r.q).unwrap_or(0),
        streams_per_user: first.map(|r| r.streams_per_user).unwrap_or(0),
        receive_dims: first.map(|r| r.receive_dims).unwrap_or(0),
        branch: first.and_then(|r| r.branch),
        direct_limited: first.map(|r| r.direct_limited).unwrap_or(false),
        z_measured: first.map(|r| r.receivers.iter().map(|x| x.z_measured).collect()).unwrap_or_default(),
        z_predicted: first.and_then(|r| r.receivers.first().map(|x| x.z_predicted)),
        worst_decode_error: worst(all_receivers().map(|r| r.decode_error)),
        worst_interference_residual: worst(all_receivers().map(|r| r.interference_residual)),
        worst_zero_residual: worst(built.iter().map(|r| r.worst_zero_residual)),
        worst_alignment_residual: worst(built.iter().map(|r| r.alignment_residual)),
        failures,
    }
}

/// Independent trials with seeds derived from `seed`; the report does not
/// depend on the executor.
pub fn monte_carlo(
    params: &SystemParams,
    source: &ChannelSource,
    trials: usize,
    seed: u64,
    opts: &VerifyOptions,
    executor: Executor,
) -> VerificationReport {
    let reports = executor.map(trials, |t| end_to_end_trial(params, source, trial_seed(seed, t), opts));
    aggregate(params, source, seed, &reports)
}
