//! JSON encoding of complex matrices: `{"rows", "cols", "entries"}` with
//! entries as `[re, im]` pairs in row-major order.

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::linalg::CMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<[f64; 2]>,
}

impl From<&CMatrix> for MatrixJson {
    fn from(m: &CMatrix) -> Self {
        let mut entries = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let z = m[(r, c)];
                entries.push([z.re, z.im]);
            }
        }
        Self { rows: m.nrows(), cols: m.ncols(), entries }
    }
}

impl TryFrom<MatrixJson> for CMatrix {
    type Error = String;

    fn try_from(j: MatrixJson) -> Result<Self, Self::Error> {
        if j.entries.len() != j.rows * j.cols {
            return Err(format!("{}x{} matrix with {} entries", j.rows, j.cols, j.entries.len()));
        }
        if j.entries.iter().flatten().any(|v| !v.is_finite()) {
            return Err("non-finite matrix entry".to_string());
        }
        Ok(CMatrix::from_row_iterator(j.rows, j.cols, j.entries.iter().map(|&[re, im]| Complex64::new(re, im))))
    }
}

/// `#[serde(with = "crate::io::matrix")]` adapter.
pub mod matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &CMatrix, s: S) -> Result<S::Ok, S::Error> {
        MatrixJson::from(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMatrix, D::Error> {
        let j = MatrixJson::deserialize(d)?;
        CMatrix::try_from(j).map_err(serde::de::Error::custom)
    }
}

/// Adapter for `[[CMatrix; 3]; 3]`.
pub mod matrix_grid {
    use super::*;

    pub fn serialize<S: Serializer>(g: &[[CMatrix; 3]; 3], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<MatrixJson>> = g.iter().map(|r| r.iter().map(MatrixJson::from).collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[[CMatrix; 3]; 3], D::Error> {
        use serde::de::Error;
        let rows: Vec<Vec<MatrixJson>> = Vec::deserialize(d)?;
        if rows.len() != 3 || rows.iter().any(|r| r.len() != 3) {
            return Err(D::Error::custom("expected a 3x3 grid of matrices"));
        }
        let mut out: [[CMatrix; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| CMatrix::zeros(0, 0)));
        for (k, row) in rows.into_iter().enumerate() {
            for (i, m) in row.into_iter().enumerate() {
                out[k][i] = CMatrix::try_from(m).map_err(D::Error::custom)?;
            }
        }
        Ok(out)
    }
}

/// Adapter for `[CMatrix; 3]`.
pub mod matrix_triple {
    use super::*;

    pub fn serialize<S: Serializer>(g: &[CMatrix; 3], s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<MatrixJson> = g.iter().map(MatrixJson::from).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[CMatrix; 3], D::Error> {
        use serde::de::Error;
        let v: Vec<MatrixJson> = Vec::deserialize(d)?;
        let v: Vec<CMatrix> = v.into_iter().map(CMatrix::try_from).collect::<Result<_, _>>().map_err(D::Error::custom)?;
        v.try_into().map_err(|_| D::Error::custom("expected three matrices"))
    }
}
