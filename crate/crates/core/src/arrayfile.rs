//! Binary array + JSON sidecar.
//!
//! `<stem>.bin` holds the raw little-endian values in row-major order, complex
//! values as interleaved (re, im). `<stem>.json` describes them:
//!
//! ```json
//! { "format": "bicoh-array", "version": 1, "dtype": "f64", "complex": true,
//!   "shape": [n1, n2], "axes": [...], "endianness": "little",
//!   "provenance": "<sha256 of the run configuration>",
//!   "mask": "<base64, one bit per element, LSB first, 1 = valid>", "meta": {...} }
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use num_complex::Complex64;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT: &str = "bicoh-array";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coords {
    Uniform { start: f64, step: f64, len: usize },
    Explicit { values: Vec<f64> },
}

impl Coords {
    /// Uniform when `start + i·step` reproduces every value bit for bit.
    pub fn from_values(values: &[f64]) -> Self {
        if values.len() >= 2 {
            let start = values[0];
            let step = values[1] - values[0];
            if values.iter().enumerate().all(|(i, &v)| start + i as f64 * step == v) {
                return Coords::Uniform { start, step, len: values.len() };
            }
        }
        Coords::Explicit { values: values.to_vec() }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            Coords::Uniform { start, step, len } => (0..*len).map(|i| start + i as f64 * step).collect(),
            Coords::Explicit { values } => values.clone(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Coords::Uniform { len, .. } => *len,
            Coords::Explicit { values } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Axis {
    pub name: String,
    pub unit: String,
    pub coords: Coords,
}

impl Axis {
    pub fn new(name: &str, unit: &str, values: &[f64]) -> Self {
        Axis { name: name.into(), unit: unit.into(), coords: Coords::from_values(values) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Header {
    pub format: String,
    pub version: u32,
    pub dtype: Dtype,
    pub complex: bool,
    pub shape: Vec<usize>,
    pub axes: Vec<Axis>,
    pub endianness: String,
    #[serde(default)]
    pub provenance: Option<String>,
    #[serde(default)]
    pub mask: Option<String>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Data {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

impl Data {
    pub fn len(&self) -> usize {
        match self {
            Data::Real(v) => v.len(),
            Data::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArrayFile {
    pub header: Header,
    pub data: Data,
}

impl ArrayFile {
    pub fn new(data: Data, axes: Vec<Axis>, dtype: Dtype) -> Result<Self> {
        let shape: Vec<usize> = axes.iter().map(|a| a.coords.len()).collect();
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Format(format!("{} values do not fill shape {shape:?}", data.len())));
        }
        Ok(ArrayFile {
            header: Header {
                format: FORMAT.into(),
                version: VERSION,
                dtype,
                complex: matches!(data, Data::Complex(_)),
                shape,
                axes,
                endianness: "little".into(),
                provenance: None,
                mask: None,
                meta: serde_json::Value::Null,
            },
            data,
        })
    }

    pub fn with_mask(mut self, valid: &[bool]) -> Result<Self> {
        if valid.len() != self.data.len() {
            return Err(Error::Format("mask length differs from the element count".into()));
        }
        let mut bytes = vec![0u8; valid.len().div_ceil(8)];
        for (i, &v) in valid.iter().enumerate() {
            if v {
                bytes[i / 8] |= 1 << (i % 8);
            }
        }
        self.header.mask = Some(B64.encode(bytes));
        Ok(self)
    }

    pub fn with_provenance(mut self, hash: String) -> Self {
        self.header.provenance = Some(hash);
        self
    }

    pub fn with_meta(mut self, meta: serde_json::Value) -> Self {
        self.header.meta = meta;
        self
    }

    pub fn mask(&self) -> Result<Option<Vec<bool>>> {
        let Some(text) = &self.header.mask else { return Ok(None) };
        let bytes = B64.decode(text).map_err(|e| Error::Format(format!("mask: {e}")))?;
        let n = self.data.len();
        if bytes.len() != n.div_ceil(8) {
            return Err(Error::Format("mask length differs from the element count".into()));
        }
        Ok(Some((0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect()))
    }

    pub fn axis_values(&self, i: usize) -> Vec<f64> {
        self.header.axes[i].coords.values()
    }

    fn payload(&self) -> Vec<u8> {
        let scalars: Vec<f64> = match &self.data {
            Data::Real(v) => v.clone(),
            Data::Complex(v) => v.iter().flat_map(|c| [c.re, c.im]).collect(),
        };
        let mut out = Vec::with_capacity(scalars.len() * self.header.dtype.size());
        for s in scalars {
            match self.header.dtype {
                Dtype::F64 => out.extend_from_slice(&s.to_le_bytes()),
                Dtype::F32 => out.extend_from_slice(&(s as f32).to_le_bytes()),
            }
        }
        out
    }

    /// Writes `<stem>.bin` and `<stem>.json`, each through a temporary file
    /// and a rename.
    pub fn write(&self, stem: &Path) -> Result<()> {
        let (bin, json) = paths(stem);
        atomic_write(&bin, &self.payload())?;
        let mut text = serde_json::to_string_pretty(&self.header)?;
        text.push('\n');
        atomic_write(&json, text.as_bytes())
    }

    pub fn read(stem: &Path) -> Result<Self> {
        let (bin, json) = paths(stem);
        let header: Header = serde_json::from_str(&fs::read_to_string(&json)?)?;
        if header.format != FORMAT {
            return Err(Error::Format(format!("unknown format {:?}", header.format)));
        }
        if header.endianness != "little" {
            return Err(Error::Format("only little-endian payloads are supported".into()));
        }
        let bytes = fs::read(&bin)?;
        let count: usize = header.shape.iter().product();
        let width = if header.complex { 2 } else { 1 };
        let expected = count * header.dtype.size() * width;
        if bytes.len() != expected {
            return Err(Error::Format(format!("payload has {} bytes, header implies {expected}", bytes.len())));
        }
        let scalars: Vec<f64> = match header.dtype {
            Dtype::F64 => bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect(),
            Dtype::F32 => bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64).collect(),
        };
        let data = if header.complex {
            Data::Complex(scalars.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect())
        } else {
            Data::Real(scalars)
        };
        Ok(ArrayFile { header, data })
    }
}

/// `<stem>.bin` and `<stem>.json`; a trailing `.bin` or `.json` on the stem is dropped.
pub fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    let base = match stem.extension().and_then(|e| e.to_str()) {
        Some("bin") | Some("json") => stem.with_extension(""),
        _ => stem.to_path_buf(),
    };
    let with = |ext: &str| {
        let mut s = base.clone().into_os_string();
        s.push(".");
        s.push(ext);
        PathBuf::from(s)
    };
    (with("bin"), with("json"))
}

pub fn exists(stem: &Path) -> bool {
    let (bin, json) = paths(stem);
    bin.is_file() && json.is_file()
}

pub(crate) fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_round_trip_with_mask() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("grid");
        let data: Vec<Complex64> = (0..6).map(|i| Complex64::new(i as f64 / 3.0, -(i as f64).sqrt())).collect();
        let axes = vec![Axis::new("omega1", "Hz", &[0.0, 0.5]), Axis::new("omega2", "Hz", &[0.0, 0.1, 0.7])];
        let valid = [true, false, true, true, false, true];
        let f = ArrayFile::new(Data::Complex(data), axes, Dtype::F64)
            .unwrap()
            .with_mask(&valid)
            .unwrap()
            .with_provenance("abc".into());
        f.write(&stem).unwrap();
        let g = ArrayFile::read(&stem).unwrap();
        assert_eq!(f, g);
        assert_eq!(g.mask().unwrap().unwrap(), valid);
        assert!(matches!(g.header.axes[0].coords, Coords::Uniform { .. }));
        assert!(matches!(g.header.axes[1].coords, Coords::Explicit { .. }));
        assert_eq!(std::fs::metadata(dir.path().join("grid.bin")).unwrap().len(), 6 * 8 * 2);
    }

    #[test]
    fn f32_payload_size() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("x.bin");
        let f = ArrayFile::new(Data::Real(vec![1.5; 10]), vec![Axis::new("t", "s", &[0.0; 10])], Dtype::F32).unwrap();
        f.write(&stem).unwrap();
        assert_eq!(std::fs::metadata(dir.path().join("x.bin")).unwrap().len(), 40);
        assert_eq!(ArrayFile::read(&dir.path().join("x")).unwrap().data, Data::Real(vec![1.5; 10]));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("y");
        let f = ArrayFile::new(Data::Real(vec![1.0; 4]), vec![Axis::new("t", "s", &[0.0, 1.0, 2.0, 3.0])], Dtype::F64).unwrap();
        f.write(&stem).unwrap();
        std::fs::write(dir.path().join("y.bin"), [0u8; 7]).unwrap();
        assert!(matches!(ArrayFile::read(&stem), Err(Error::Format(_))));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        assert!(ArrayFile::new(Data::Real(vec![1.0; 3]), vec![Axis::new("t", "s", &[0.0, 1.0])], Dtype::F64).is_err());
    }
}
