use serde::{Deserialize, Serialize};

use super::{CMatrix, C64};
use crate::error::{Error, Result};

/// On-disk matrix layout: `{"rows": r, "cols": c, "entries": [[re, im], ...]}`,
/// entries row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<[f64; 2]>,
}

impl From<&CMatrix> for MatrixFile {
    fn from(m: &CMatrix) -> Self {
        Self {
            rows: m.rows(),
            cols: m.cols(),
            entries: m.data().iter().map(|z| [z.re, z.im]).collect(),
        }
    }
}

impl TryFrom<MatrixFile> for CMatrix {
    type Error = Error;

    fn try_from(f: MatrixFile) -> Result<Self> {
        CMatrix::new(
            f.rows,
            f.cols,
            f.entries.into_iter().map(|[re, im]| C64::new(re, im)).collect(),
        )
    }
}

impl Serialize for CMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for CMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = MatrixFile::deserialize(d)?;
        CMatrix::try_from(f).map_err(serde::de::Error::custom)
    }
}

pub fn matrix_from_json(text: &str) -> Result<CMatrix> {
    let f: MatrixFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    f.try_into()
}

pub fn matrix_to_json(m: &CMatrix) -> String {
    serde_json::to_string(&MatrixFile::from(m)).expect("matrix serialization")
}
