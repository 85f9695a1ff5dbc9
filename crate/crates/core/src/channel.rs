//! Channel matrices of the 3-user network and how to draw them.
//!
//! `h[k][i]` is the `mr × mt` matrix from transmitter `i` to receiver `k`.
//! Users are 0-based here and all user arithmetic is mod 3, so `h[k][(k+1)%3]`
//! has rank `d1` and `h[k][(k+2)%3]` rank `d2`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dof::SystemParams;
use crate::linalg::{numerical_rank, CMatrix, LinalgError};
use crate::rng::{complex_gaussian_matrix, substream, Tag};

pub type Grid<T> = [[T; 3]; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("link ({k},{i}) has {expected} paths but {aoa} arrival and {aod} departure angles")]
    MissingAngles { k: usize, i: usize, expected: u32, aoa: usize, aod: usize },
    #[error("element spacing must be positive, got {0}")]
    BadSpacing(f64),
    #[error("link ({k},{i}) is {rows}x{cols}, expected {mr}x{mt}")]
    Shape { k: usize, i: usize, rows: usize, cols: usize, mr: usize, mt: usize },
    #[error("link ({k},{i}) has rank {measured}, metadata says {expected}")]
    RankMismatch { k: usize, i: usize, expected: u32, measured: usize },
    #[error("transmit vector {i} has length {len}, expected {mt}")]
    InputLength { i: usize, len: usize, mt: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Rank prescribed for link `(k, i)`.
pub fn link_rank(params: &SystemParams, k: usize, i: usize) -> u32 {
    match (i + 3 - k) % 3 {
        0 => params.d0,
        1 => params.d1,
        _ => params.d2,
    }
}

/// Ray-model geometry of a uniform linear array network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UlaGeometry {
    /// Element spacing in wavelengths.
    pub delta: f64,
    pub paths: Grid<u32>,
    /// Angles of arrival, one per path.
    pub aoa: Grid<Vec<f64>>,
    /// Angles of departure, one per path.
    pub aod: Grid<Vec<f64>>,
}

impl UlaGeometry {
    /// Path counts following the rank pattern, angles uniform on `[0, 2π)`.
    pub fn random(params: &SystemParams, delta: f64, seed: u64) -> Self {
        let paths: Grid<u32> = std::array::from_fn(|k| std::array::from_fn(|i| link_rank(params, k, i)));
        let mut aoa: Grid<Vec<f64>> = Default::default();
        let mut aod: Grid<Vec<f64>> = Default::default();
        for k in 0..3 {
            for i in 0..3 {
                let mut rng = substream(seed, &["ula".into(), Tag::from(k), Tag::from(i)]);
                for _ in 0..paths[k][i] {
                    aoa[k][i].push(rng.random_range(0.0..2.0 * PI));
                    aod[k][i].push(rng.random_range(0.0..2.0 * PI));
                }
            }
        }
        Self { delta, paths, aoa, aod }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.delta > 0.0) {
            return Err(ChannelError::BadSpacing(self.delta));
        }
        for k in 0..3 {
            for i in 0..3 {
                let l = self.paths[k][i] as usize;
                let (aoa, aod) = (self.aoa[k][i].len(), self.aod[k][i].len());
                if aoa < l || aod < l {
                    return Err(ChannelError::MissingAngles { k, i, expected: l as u32, aoa, aod });
                }
            }
        }
        Ok(())
    }
}

/// Where a channel set came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Generic { seed: u64 },
    Ula { geometry: UlaGeometry, seed: u64 },
}

impl Provenance {
    pub fn seed(&self) -> u64 {
        match self {
            Provenance::Generic { seed } | Provenance::Ula { seed, .. } => *seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    pub params: SystemParams,
    pub provenance: Provenance,
    #[serde(with = "crate::io::matrix_grid")]
    pub h: Grid<CMatrix>,
}

impl ChannelSet {
    /// The network with the roles of transmitters and receivers swapped:
    /// `h'[k][i] = h[i][k]ᵀ`.
    pub fn reciprocal(&self) -> Self {
        let h = std::array::from_fn(|k| std::array::from_fn(|i| self.h[i][k].transpose()));
        Self { params: self.params.reciprocal(), provenance: self.provenance.clone(), h }
    }

    /// Checks shapes and that every link has its prescribed rank.
    pub fn check(&self) -> Result<(), ChannelError> {
        let (mr, mt) = (self.params.mr as usize, self.params.mt as usize);
        for k in 0..3 {
            for i in 0..3 {
                let m = &self.h[k][i];
                if m.shape() != (mr, mt) {
                    return Err(ChannelError::Shape { k, i, rows: m.nrows(), cols: m.ncols(), mr, mt });
                }
                let expected = link_rank(&self.params, k, i);
                let measured = numerical_rank(m, None)?;
                if measured != expected as usize {
                    return Err(ChannelError::RankMismatch { k, i, expected, measured });
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("channel sets always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Each link is `B C` with `B` (`mr × D`) and `C` (`D × mt`) standard complex
/// Gaussian, drawn from the substream `(seed, "chan", k, i)`.
pub fn gen_generic(params: &SystemParams, seed: u64) -> ChannelSet {
    let (mr, mt) = (params.mr as usize, params.mt as usize);
    let h = std::array::from_fn(|k| {
        std::array::from_fn(|i| {
            let d = link_rank(params, k, i) as usize;
            let mut rng = substream(seed, &["chan".into(), Tag::from(k), Tag::from(i)]);
            let b = complex_gaussian_matrix(mr, d, &mut rng);
            let c = complex_gaussian_matrix(d, mt, &mut rng);
            b * c
        })
    });
    ChannelSet { params: *params, provenance: Provenance::Generic { seed }, h }
}

/// Array response `[1, e^{i2πΔ sinθ}, …, e^{i2πΔ(n-1) sinθ}]ᵀ`.
pub fn steering_vector(angle: f64, n_elems: usize, delta: f64) -> CMatrix {
    let step = 2.0 * PI * delta * angle.sin();
    CMatrix::from_fn(n_elems, 1, |j, _| Complex64::from_polar(1.0, step * j as f64))
}

/// `H_ki = (1/√L) Σ_l a_R(φ_l) a_T(θ_l)^H`; links with no paths are zero.
pub fn gen_ula(params: &SystemParams, geometry: &UlaGeometry, seed: u64) -> Result<ChannelSet, ChannelError> {
    geometry.validate()?;
    let (mr, mt) = (params.mr as usize, params.mt as usize);
    let mut h: Grid<CMatrix> = std::array::from_fn(|_| std::array::from_fn(|_| CMatrix::zeros(mr, mt)));
    for k in 0..3 {
        for i in 0..3 {
            let l = geometry.paths[k][i] as usize;
            if l == 0 {
                continue;
            }
            let norm = 1.0 / (l as f64).sqrt();
            for p in 0..l {
                let a_r = steering_vector(geometry.aoa[k][i][p], mr, geometry.delta);
                let a_t = steering_vector(geometry.aod[k][i][p], mt, geometry.delta);
                h[k][i] += (a_r * a_t.adjoint()) * Complex64::from(norm);
            }
        }
    }
    Ok(ChannelSet { params: *params, provenance: Provenance::Ula { geometry: geometry.clone(), seed }, h })
}

/// `y_k = Σ_i H_ki x_i + n_k`. Each `x_i` is `mt × s` (one column per use);
/// the noise has per-entry standard deviation `noise_std`.
pub fn apply_channel(cs: &ChannelSet, x: &[CMatrix; 3], noise_std: f64, seed: u64) -> Result<[CMatrix; 3], ChannelError> {
    let mt = cs.params.mt as usize;
    for (i, xi) in x.iter().enumerate() {
        if xi.nrows() != mt {
            return Err(ChannelError::InputLength { i, len: xi.nrows(), mt });
        }
    }
    let uses = x[0].ncols();
    let mut out: Vec<CMatrix> = Vec::with_capacity(3);
    for k in 0..3 {
        let mut y = CMatrix::zeros(cs.params.mr as usize, uses);
        for i in 0..3 {
            y += &cs.h[k][i] * &x[i];
        }
        if noise_std > 0.0 {
            let mut rng = substream(seed, &["noise".into(), Tag::from(k)]);
            y += complex_gaussian_matrix(y.nrows(), y.ncols(), &mut rng) * Complex64::from(noise_std);
        }
        out.push(y);
    }
    Ok(out.try_into().expect("three receivers"))
}
