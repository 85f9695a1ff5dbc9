//! Subspace alignment chains on the middle blocks of the equivalent channel.
//!
//! A chain originating at transmitter `i` has its slot `j` at transmitter
//! `i - j` (mod 3). Consecutive slots `j`, `j+1` are seen as interference by
//! receiver `i - j + 1`, and the chain forces their images there to coincide:
//! `P[rx][t_j] G_j = P[rx][t_{j+1}] G_{j+1}`.

use nalgebra::Schur;
use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{
    complement_within, intersect_subspaces, max_abs, null_space_basis, spectral_norm, CMatrix, LinalgError,
    SubspaceBasis,
};

/// Middle-block cross matrices `P[rx][tx]` (only `tx = rx ± 1` are used).
pub type PMatrices = [[CMatrix; 3]; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("chain of length {len} needs {requested} null dimensions but only {available} exist")]
    Infeasible { len: u32, requested: usize, available: i64 },
    #[error("closed-loop alignment needs invertible square middle blocks")]
    SingularLoop,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Transmitter holding slot `j` of the chain started at `origin`.
pub fn slot_transmitter(origin: usize, j: usize) -> usize {
    (origin + 3 - j % 3) % 3
}

/// Receiver where slots `j` and `j+1` meet.
pub fn link_receiver(origin: usize, j: usize) -> usize {
    (slot_transmitter(origin, j) + 1) % 3
}

/// The stacked constraint matrix `A` of one chain: `(len-1)Ñ × len·M̃`,
/// block-bidiagonal with `+P` and `-P` blocks.
pub fn alignment_matrix(pm: &PMatrices, origin: usize, len: usize) -> CMatrix {
    let (nt, mt) = middle_shape(pm);
    let mut a = CMatrix::zeros(len.saturating_sub(1) * nt, len * mt);
    for j in 0..len.saturating_sub(1) {
        let rx = link_receiver(origin, j);
        let left = &pm[rx][slot_transmitter(origin, j)];
        let right = &pm[rx][slot_transmitter(origin, j + 1)];
        a.view_mut((j * nt, j * mt), (nt, mt)).copy_from(left);
        a.view_mut((j * nt, (j + 1) * mt), (nt, mt)).copy_from(&(-right));
    }
    a
}

fn middle_shape(pm: &PMatrices) -> (usize, usize) {
    pm[0][1].shape()
}

/// Solutions `G` (stacked `len·M̃ × dim`) for each of the three origins.
#[derive(Debug, Clone)]
pub struct ChainSolution {
    pub len: usize,
    pub dim: usize,
    pub slot_rows: usize,
    pub null_dim: usize,
    pub stacked: [CMatrix; 3],
}

impl ChainSolution {
    /// Rows of `G` for slot `j` of the chain from `origin`.
    pub fn slot(&self, origin: usize, j: usize) -> CMatrix {
        self.stacked[origin].rows(j * self.slot_rows, self.slot_rows).into_owned()
    }

    /// Worst relative mismatch `|P G_j - P G_{j+1}|` over all links.
    pub fn residual(&self, pm: &PMatrices) -> f64 {
        let scale = pm.iter().flatten().map(spectral_norm).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for origin in 0..3 {
            for j in 0..self.len.saturating_sub(1) {
                let rx = link_receiver(origin, j);
                let a = &pm[rx][slot_transmitter(origin, j)] * self.slot(origin, j);
                let b = &pm[rx][slot_transmitter(origin, j + 1)] * self.slot(origin, j + 1);
                worst = worst.max(max_abs(&(a - b)) / scale);
            }
        }
        worst
    }
}

/// Measured `dim N(A)` for a chain of length `len`.
pub fn null_dimension(pm: &PMatrices, len: usize) -> Result<usize, LinalgError> {
    Ok(null_space_basis(&alignment_matrix(pm, 0, len), None)?.dim())
}

/// Chains of length `len` and dimension `dim` from all three origins.
pub fn build_alignment_chains(pm: &PMatrices, len: usize, dim: usize) -> Result<ChainSolution, ChainError> {
    let (_, mt) = middle_shape(pm);
    let mut null_dim = usize::MAX;
    let mut stacked: Vec<CMatrix> = Vec::with_capacity(3);
    for origin in 0..3 {
        let basis = null_space_basis(&alignment_matrix(pm, origin, len), None)?;
        null_dim = null_dim.min(basis.dim());
        if dim > basis.dim() {
            let (nt, _) = middle_shape(pm);
            let predicted = (len * mt) as i64 - (len as i64 - 1) * nt as i64;
            return Err(ChainError::Infeasible { len: len as u32, requested: dim, available: predicted });
        }
        stacked.push(basis.vectors().columns(0, dim).into_owned());
    }
    let stacked: [CMatrix; 3] = stacked.try_into().expect("three origins");
    Ok(ChainSolution { len, dim, slot_rows: mt, null_dim, stacked })
}

/// Chains of length `len` whose solution avoids the span of the leading
/// `len` slots of `outer` (a longer chain family on the same matrices).
pub fn build_independent_chains(
    pm: &PMatrices,
    len: usize,
    dim: usize,
    outer: &ChainSolution,
) -> Result<ChainSolution, ChainError> {
    let (nt, mt) = middle_shape(pm);
    let mut stacked: Vec<CMatrix> = Vec::with_capacity(3);
    let mut null_dim = usize::MAX;
    for origin in 0..3 {
        let nullspace = null_space_basis(&alignment_matrix(pm, origin, len), None)?;
        null_dim = null_dim.min(nullspace.dim());
        let leading = outer.stacked[origin].rows(0, len * mt).into_owned();
        let used = SubspaceBasis::span_of(&leading, None)?;
        // Project onto the null space first so round-off in the longer
        // solution does not trip the containment check.
        let used = intersect_subspaces(&nullspace, &used)?;
        let free = complement_within(&nullspace, &used)?;
        if dim > free.dim() {
            let predicted = (len * mt) as i64 - (len as i64 - 1) * nt as i64 - outer.dim as i64;
            return Err(ChainError::Infeasible { len: len as u32, requested: dim, available: predicted });
        }
        stacked.push(free.vectors().columns(0, dim).into_owned());
    }
    let stacked: [CMatrix; 3] = stacked.try_into().expect("three origins");
    Ok(ChainSolution { len, dim, slot_rows: mt, null_dim, stacked })
}

/// Closed loop for square middle blocks: orthonormal `E_0, E_1, E_2` with
/// `span(P[1][2] E_2) = span(P[1][0] E_0)`, `span(P[0][1] E_1) = span(P[0][2] E_2)`
/// and `span(P[2][0] E_0) = span(P[2][1] E_1)`.
///
/// `E_0` spans an invariant subspace of the loop map, taken from the
/// leading Schur vectors. The other two are re-orthonormalized, which keeps
/// the spans and the precoders well conditioned.
pub fn closed_loop(pm: &PMatrices, dim: usize) -> Result<[CMatrix; 3], ChainError> {
    let inv = |m: &CMatrix| -> Result<CMatrix, ChainError> {
        if !m.is_square() {
            return Err(ChainError::SingularLoop);
        }
        m.clone().try_inverse().ok_or(ChainError::SingularLoop)
    };
    let step2 = inv(&pm[1][2])? * &pm[1][0];
    let step1 = inv(&pm[0][1])? * &pm[0][2];
    let back0 = inv(&pm[2][0])? * &pm[2][1];
    let loop_map = &back0 * &step1 * &step2;
    let mut e0 = dominant_invariant(loop_map, dim)?;
    let around = |e0: &CMatrix| -> Result<[CMatrix; 3], ChainError> {
        let e2 = orthonormal(&(&step2 * e0), dim)?;
        let e1 = orthonormal(&(&step1 * &e2), dim)?;
        Ok([e0.clone(), e1, e2])
    };
    // Subspace iteration around the loop polishes the Schur estimate.
    let mut best = around(&e0)?;
    let mut best_res = loop_residual(pm, &best)?;
    for _ in 0..REFINE_STEPS {
        if best_res < REFINE_TARGET {
            break;
        }
        e0 = orthonormal(&(&back0 * &best[1]), dim)?;
        let cand = around(&e0)?;
        let res = loop_residual(pm, &cand)?;
        if res < best_res {
            best = cand;
            best_res = res;
        }
    }
    Ok(best)
}

const REFINE_STEPS: usize = 40;
const REFINE_TARGET: f64 = 1e-14;

/// Orthonormal basis of the invariant subspace of the `dim` eigenvalues of
/// largest modulus.
fn dominant_invariant(x: CMatrix, dim: usize) -> Result<CMatrix, ChainError> {
    let n = x.nrows();
    let (q, t) = Schur::new(x).unpack();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| t[(b, b)].norm().total_cmp(&t[(a, a)].norm()));
    let mut y = CMatrix::zeros(n, dim);
    for (c, &j) in order.iter().take(dim).enumerate() {
        let lambda = t[(j, j)];
        y[(j, c)] = Complex64::new(1.0, 0.0);
        for i in (0..j).rev() {
            let mut acc = Complex64::new(0.0, 0.0);
            for l in i + 1..=j {
                acc += t[(i, l)] * y[(l, c)];
            }
            let mut d = t[(i, i)] - lambda;
            if d.norm() < f64::EPSILON * t[(j, j)].norm().max(1.0) {
                d = Complex64::new(f64::EPSILON, 0.0);
            }
            y[(i, c)] = -acc / d;
        }
    }
    orthonormal(&(q * y), dim)
}

fn orthonormal(a: &CMatrix, dim: usize) -> Result<CMatrix, ChainError> {
    let b = SubspaceBasis::span_of(a, None)?;
    if b.dim() != dim {
        return Err(ChainError::SingularLoop);
    }
    Ok(b.into_vectors())
}

/// Worst span mismatch over the three receivers of a closed loop.
pub fn loop_residual(pm: &PMatrices, e: &[CMatrix; 3]) -> Result<f64, LinalgError> {
    let mut worst = 0.0f64;
    for rx in 0..3 {
        let (a, b) = ((rx + 1) % 3, (rx + 2) % 3);
        worst = worst.max(span_mismatch(&(&pm[rx][a] * &e[a]), &(&pm[rx][b] * &e[b]))?);
    }
    Ok(worst)
}

/// Largest relative distance of the columns of `b` from `span(a)`.
pub fn span_mismatch(a: &CMatrix, b: &CMatrix) -> Result<f64, LinalgError> {
    if b.ncols() == 0 {
        return Ok(0.0);
    }
    let basis = SubspaceBasis::span_of(a, None)?;
    Ok(basis.containment_residual(b) / spectral_norm(b).max(f64::MIN_POSITIVE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_gaussian_matrix, substream};

    fn random_p(nt: usize, mt: usize, seed: u64) -> PMatrices {
        let mut rng = substream(seed, &["p".into()]);
        std::array::from_fn(|_| std::array::from_fn(|_| complex_gaussian_matrix(nt, mt, &mut rng)))
    }

    #[test]
    fn schedule() {
        assert_eq!((0..4).map(|j| slot_transmitter(0, j)).collect::<Vec<_>>(), vec![0, 2, 1, 0]);
        assert_eq!(link_receiver(0, 0), 1);
        assert_eq!(link_receiver(1, 1), 1);
    }

    #[test]
    fn p2_chain_dimensions() {
        // scaled (2,3,2,2,2) by 5: M̃ = 10, Ñ = 15
        let pm = random_p(15, 10, 3);
        assert_eq!(alignment_matrix(&pm, 0, 2).shape(), (15, 20));
        assert_eq!(null_dimension(&pm, 2).unwrap(), 5);
        let sol = build_alignment_chains(&pm, 2, 3).unwrap();
        assert!(sol.residual(&pm) < 1e-9);
    }

    #[test]
    fn infeasible_chain() {
        // (12,18,·,9,9) with p = 3: M̃ = 6, Ñ = 12, A is 24×18
        let pm = random_p(12, 6, 5);
        assert_eq!(alignment_matrix(&pm, 0, 3).shape(), (24, 18));
        let err = build_alignment_chains(&pm, 3, 1).unwrap_err();
        assert_eq!(err, ChainError::Infeasible { len: 3, requested: 1, available: -6 });
    }

    #[test]
    fn loop_aligns() {
        let pm = random_p(4, 4, 9);
        let e = closed_loop(&pm, 2).unwrap();
        assert!(loop_residual(&pm, &e).unwrap() < 1e-9);
    }
}
