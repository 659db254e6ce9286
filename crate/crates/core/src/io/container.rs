//! GMXB1 model container.
//!
//! Layout: the magic bytes `GMXB1`, a little-endian `u32` header length, a
//! JSON header listing every array as `{name, shape, offset}`, then the
//! row-major little-endian `f64` payloads. Offsets are in bytes from the
//! start of the payload section.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MixtureModel;

pub const MAGIC: &[u8; 5] = b"GMXB1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    arrays: Vec<ArrayEntry>,
}

struct Writer {
    entries: Vec<ArrayEntry>,
    payload: Vec<u8>,
}

impl Writer {
    fn push(&mut self, name: String, shape: Vec<usize>, values: impl Iterator<Item = f64>) {
        let offset = self.payload.len();
        for v in values {
            self.payload.extend_from_slice(&v.to_le_bytes());
        }
        self.entries.push(ArrayEntry {
            name,
            shape,
            offset,
        });
    }
}

fn row_major(m: &DMatrix<f64>) -> impl Iterator<Item = f64> + '_ {
    (0..m.nrows()).flat_map(move |i| (0..m.ncols()).map(move |j| m[(i, j)]))
}

pub fn model_to_bytes(model: &MixtureModel) -> Vec<u8> {
    let (l, n) = (model.components(), model.dim());
    let mut w = Writer {
        entries: Vec::new(),
        payload: Vec::new(),
    };
    w.push("weights".into(), vec![l], model.weights().iter().copied());
    w.push(
        "means".into(),
        vec![l, n],
        model.means().iter().flat_map(|m| m.iter().copied()),
    );
    w.push(
        "covariances".into(),
        vec![l, n, n],
        model.covariances().iter().flat_map(row_major),
    );
    if let Some(factors) = model.factors() {
        for (i, b) in factors.iter().enumerate() {
            w.push(
                format!("factors/{i}"),
                vec![b.nrows(), b.ncols()],
                row_major(b),
            );
        }
    }
    let header = serde_json::to_vec(&Header { arrays: w.entries }).expect("header serializes");
    let mut out = Vec::with_capacity(MAGIC.len() + 4 + header.len() + w.payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&w.payload);
    out
}

struct Reader<'a> {
    header: Header,
    payload: &'a [u8],
}

impl Reader<'_> {
    fn array(&self, name: &str) -> Result<Option<(&[usize], Vec<f64>)>> {
        let Some(entry) = self.header.arrays.iter().find(|e| e.name == name) else {
            return Ok(None);
        };
        let count: usize = entry.shape.iter().product();
        let end = entry.offset + 8 * count;
        let bytes = self.payload.get(entry.offset..end).ok_or_else(|| {
            Error::Format(format!("array {name} runs past the end of the payload"))
        })?;
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Some((&entry.shape, values)))
    }

    fn required(&self, name: &str, rank: usize) -> Result<(Vec<usize>, Vec<f64>)> {
        let (shape, values) = self
            .array(name)?
            .ok_or_else(|| Error::Format(format!("missing array {name}")))?;
        if shape.len() != rank {
            return Err(Error::Format(format!(
                "array {name} has rank {}, expected {rank}",
                shape.len()
            )));
        }
        Ok((shape.to_vec(), values))
    }
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<MixtureModel> {
    if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Format("missing GMXB1 magic".into()));
    }
    let len = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
    let header_bytes = bytes
        .get(9..9 + len)
        .ok_or_else(|| Error::Format("header length exceeds file size".into()))?;
    let header: Header = serde_json::from_slice(header_bytes)?;
    let reader = Reader {
        header,
        payload: &bytes[9 + len..],
    };

    let (shape, weights) = reader.required("weights", 1)?;
    let l = shape[0];
    let (shape, means) = reader.required("means", 2)?;
    if shape[0] != l {
        return Err(Error::Format(
            "means disagree with weights on the component count".into(),
        ));
    }
    let n = shape[1];
    let (shape, covs) = reader.required("covariances", 3)?;
    if shape != [l, n, n] {
        return Err(Error::Format(format!(
            "covariances have shape {shape:?}, expected [{l}, {n}, {n}]"
        )));
    }
    let means = means
        .chunks(n.max(1))
        .take(l)
        .map(|c| DVector::from_row_slice(&c[..n]))
        .collect();
    let covariances = (0..l)
        .map(|i| DMatrix::from_row_slice(n, n, &covs[i * n * n..(i + 1) * n * n]))
        .collect();
    let mut factors = Vec::new();
    for i in 0..l {
        match reader.array(&format!("factors/{i}"))? {
            Some((shape, values)) if shape.len() == 2 => {
                factors.push(DMatrix::from_row_slice(shape[0], shape[1], &values));
            }
            Some(_) => {
                return Err(Error::Format(format!(
                    "factors/{i} must be two-dimensional"
                )))
            }
            None => break,
        }
    }
    let factors = match factors.len() {
        0 => None,
        k if k == l => Some(factors),
        k => {
            return Err(Error::Format(format!(
                "found {k} factor arrays for {l} components"
            )))
        }
    };
    MixtureModel::from_parts(DVector::from_vec(weights), means, covariances, factors)
}

pub fn save_model(path: impl AsRef<Path>, model: &MixtureModel) -> Result<()> {
    std::fs::write(path, model_to_bytes(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MixtureModel> {
    model_from_bytes(&std::fs::read(path)?)
}
