//! Self-describing binary tensors and CSV export.
//!
//! Layout (little-endian):
//!
//! ```text
//! "RSKD" | u16 version | u8 dtype (1 = f64) | u8 rank | u64 dims[rank]
//!        | u32 meta_len | meta (UTF-8 JSON, may be empty)
//!        | f64 payload[∏dims] (row-major) | u32 CRC32 of all preceding bytes
//! ```
//!
//! Datasets, Gram matrices and readout models all use this container; the
//! JSON block carries whatever scalars belong with the tensor.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use reskit_core::{Mode, RidgeModel, TimeSeries};
use serde::{Deserialize, Serialize};

use crate::ks::{Dataset, KsConfig};

pub const MAGIC: &[u8; 4] = b"RSKD";
pub const VERSION: u16 = 1;
const DTYPE_F64: u8 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic bytes")]
    Magic,
    #[error("unsupported format version {0}")]
    Version(u16),
    #[error("unsupported dtype tag {0}")]
    Dtype(u8),
    #[error("file truncated: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("checksum mismatch")]
    Checksum,
    #[error("trailing bytes after checksum")]
    Trailing,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("bad metadata: {0}")]
    Meta(String),
}

/// A row-major `f64` tensor with a JSON side block.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub meta: String,
}

impl Tensor {
    pub fn from_matrix(a: ArrayView2<'_, f64>, meta: String) -> Self {
        Self {
            shape: vec![a.nrows(), a.ncols()],
            data: a.iter().copied().collect(),
            meta,
        }
    }

    pub fn to_matrix(&self) -> Result<Array2<f64>, FormatError> {
        match self.shape[..] {
            [r, c] => Array2::from_shape_vec((r, c), self.data.clone()).map_err(|e| FormatError::Shape(e.to_string())),
            _ => Err(FormatError::Shape(format!("expected rank 2, found rank {}", self.shape.len()))),
        }
    }
}

pub fn encode(t: &Tensor) -> Result<Vec<u8>, FormatError> {
    let count: usize = t.shape.iter().product();
    if count != t.data.len() {
        return Err(FormatError::Shape(format!("shape {:?} holds {count} values, got {}", t.shape, t.data.len())));
    }
    let rank = u8::try_from(t.shape.len()).map_err(|_| FormatError::Shape("rank above 255".into()))?;
    let meta_len = u32::try_from(t.meta.len()).map_err(|_| FormatError::Meta("metadata too large".into()))?;
    let mut out = Vec::with_capacity(16 + 8 * t.shape.len() + t.meta.len() + 8 * count + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(DTYPE_F64);
    out.push(rank);
    for &d in &t.shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    out.extend_from_slice(&meta_len.to_le_bytes());
    out.extend_from_slice(t.meta.as_bytes());
    for v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(FormatError::Truncated {
            needed: self.pos.saturating_add(n),
            found: self.buf.len(),
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], FormatError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

/// Decodes and validates magic, version, dtype, lengths, checksum and finiteness.
pub fn decode(bytes: &[u8]) -> Result<Tensor, FormatError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(FormatError::Magic);
    }
    let version = u16::from_le_bytes(r.array()?);
    if version != VERSION {
        return Err(FormatError::Version(version));
    }
    let [dtype] = r.array()?;
    if dtype != DTYPE_F64 {
        return Err(FormatError::Dtype(dtype));
    }
    let [rank] = r.array()?;
    let mut shape = Vec::with_capacity(rank as usize);
    for _ in 0..rank {
        let d = u64::from_le_bytes(r.array()?);
        shape.push(usize::try_from(d).map_err(|_| FormatError::Shape("dimension overflows usize".into()))?);
    }
    let meta_len = u32::from_le_bytes(r.array()?) as usize;
    let meta = std::str::from_utf8(r.take(meta_len)?)
        .map_err(|e| FormatError::Meta(e.to_string()))?
        .to_string();
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| FormatError::Shape("element count overflows".into()))?;
    let payload_len = count.checked_mul(8).ok_or_else(|| FormatError::Shape("payload overflows".into()))?;
    let payload = r.take(payload_len)?;
    let body_end = r.pos;
    let crc = u32::from_le_bytes(r.array()?);
    if r.pos != bytes.len() {
        return Err(FormatError::Trailing);
    }
    if crc32fast::hash(&bytes[..body_end]) != crc {
        return Err(FormatError::Checksum);
    }
    let mut data = Vec::with_capacity(count);
    for (k, chunk) in payload.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().expect("8-byte chunks"));
        if !v.is_finite() {
            return Err(FormatError::NonFinite(k));
        }
        data.push(v);
    }
    Ok(Tensor { shape, data, meta })
}

pub fn save_tensor(t: &Tensor, path: &Path) -> Result<(), FormatError> {
    fs::write(path, encode(t)?)?;
    Ok(())
}

pub fn load_tensor(path: &Path) -> Result<Tensor, FormatError> {
    decode(&fs::read(path)?)
}

#[derive(Serialize, Deserialize)]
struct DatasetMeta {
    kind: String,
    dt: f64,
    lyapunov: Option<f64>,
    config: KsConfig,
    generator: String,
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<(), FormatError> {
    let meta = DatasetMeta {
        kind: "dataset".into(),
        dt: ds.series.dt,
        lyapunov: ds.lyapunov,
        config: ds.config.clone(),
        generator: ds.generator.clone(),
    };
    let meta = serde_json::to_string(&meta).map_err(|e| FormatError::Meta(e.to_string()))?;
    save_tensor(&Tensor::from_matrix(ds.series.view(), meta), path)
}

pub fn load_dataset(path: &Path) -> Result<Dataset, FormatError> {
    let t = load_tensor(path)?;
    let meta: DatasetMeta = serde_json::from_str(&t.meta).map_err(|e| FormatError::Meta(e.to_string()))?;
    if meta.kind != "dataset" {
        return Err(FormatError::Meta(format!("expected a dataset, found {}", meta.kind)));
    }
    let data = t.to_matrix()?;
    if data.nrows() == 0 {
        return Err(FormatError::Shape("dataset has no rows".into()));
    }
    Ok(Dataset {
        series: TimeSeries::new(data, meta.dt),
        lyapunov: meta.lyapunov,
        config: meta.config,
        generator: meta.generator,
    })
}

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    kind: String,
    mode: String,
    alpha: f64,
    alpha_used: f64,
    r: f64,
}

pub fn save_model(m: &RidgeModel, path: &Path) -> Result<(), FormatError> {
    let meta = ModelMeta {
        kind: "model".into(),
        mode: match m.mode {
            Mode::Primal => "primal".into(),
            Mode::Dual => "dual".into(),
        },
        alpha: m.alpha,
        alpha_used: m.alpha_used,
        r: m.r,
    };
    let meta = serde_json::to_string(&meta).map_err(|e| FormatError::Meta(e.to_string()))?;
    save_tensor(&Tensor::from_matrix(m.weights.view(), meta), path)
}

pub fn load_model(path: &Path) -> Result<RidgeModel, FormatError> {
    let t = load_tensor(path)?;
    let meta: ModelMeta = serde_json::from_str(&t.meta).map_err(|e| FormatError::Meta(e.to_string()))?;
    let mode = match (meta.kind.as_str(), meta.mode.as_str()) {
        ("model", "primal") => Mode::Primal,
        ("model", "dual") => Mode::Dual,
        (k, m) => return Err(FormatError::Meta(format!("unexpected {k}/{m}"))),
    };
    Ok(RidgeModel {
        mode,
        weights: t.to_matrix()?,
        alpha: meta.alpha,
        alpha_used: meta.alpha_used,
        r: meta.r,
    })
}

/// Gram matrices carry no scalars beyond their shape.
pub fn save_gram(g: ArrayView2<'_, f64>, path: &Path) -> Result<(), FormatError> {
    save_tensor(&Tensor::from_matrix(g, r#"{"kind":"gram"}"#.into()), path)
}

pub fn load_gram(path: &Path) -> Result<Array2<f64>, FormatError> {
    load_tensor(path)?.to_matrix()
}

/// CSV with header `t,x0,...,x{d-1}`; `t` is the sample index and values
/// use the shortest representation that parses back to the same bits.
pub fn write_series_csv<W: Write>(series: ArrayView2<'_, f64>, mut w: W) -> io::Result<()> {
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((0..series.ncols()).map(|k| format!("x{k}")))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for (t, row) in series.rows().into_iter().enumerate() {
        write!(w, "{t}")?;
        for v in row {
            write!(w, ",{v:?}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn export_csv(ds: &Dataset, path: &Path) -> io::Result<()> {
    let f = io::BufWriter::new(fs::File::create(path)?);
    write_series_csv(ds.series.view(), f)
}

/// Parses the CSV written by [`write_series_csv`].
pub fn read_series_csv(text: &str) -> Result<Array2<f64>, FormatError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| FormatError::Shape("empty CSV".into()))?;
    let d = header.split(',').count().saturating_sub(1);
    let mut data = Vec::new();
    let mut rows = 0;
    for line in lines.filter(|l| !l.is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 1 {
            return Err(FormatError::Shape(format!("row {rows} has {} fields", fields.len())));
        }
        for f in &fields[1..] {
            data.push(f.parse::<f64>().map_err(|e| FormatError::Shape(e.to_string()))?);
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, d), data).map_err(|e| FormatError::Shape(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Tensor {
        Tensor {
            shape: vec![2, 3],
            data: vec![1.0, -2.5, 3.25e-300, 0.1, 7.0, -0.0],
            meta: "{}".into(),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let t = sample();
        let back = decode(&encode(&t).unwrap()).unwrap();
        assert_eq!(back, t);
        assert!(back.data.iter().zip(&t.data).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = encode(&sample()).unwrap();
        for cut in [0, 3, 10, bytes.len() - 1] {
            assert!(matches!(decode(&bytes[..cut]), Err(FormatError::Truncated { .. })), "cut {cut}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(FormatError::Magic)));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode(&bad), Err(FormatError::Version(9))));
        let mut bad = bytes.clone();
        let k = bad.len() - 10;
        bad[k] ^= 1;
        assert!(matches!(decode(&bad), Err(FormatError::Checksum)));
        let mut long = bytes;
        long.push(0);
        assert!(decode(&long).is_err());
    }

    #[test]
    fn non_finite_payload_is_rejected() {
        let mut t = sample();
        t.data[4] = f64::NAN;
        assert!(matches!(decode(&encode(&t).unwrap()), Err(FormatError::NonFinite(4))));
    }

    #[test]
    fn csv_header_and_values() {
        let a = ndarray::arr2(&[[0.1, 1.0 / 3.0], [-2.0, 1e-17], [5.0, 6.5]]);
        let mut out = Vec::new();
        write_series_csv(a.view(), &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("t,x0,x1\n0,"));
        let back = read_series_csv(&text).unwrap();
        assert!(back.iter().zip(a.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
