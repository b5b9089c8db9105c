//! Dense vector collections and labeled query sets.
//!
//! Two on-disk layouts are understood for collections, both little-endian:
//!
//! * `fvecs`: repeated `[i32 dim][dim x f32]` records, as used by most ANN
//!   benchmark suites.
//! * raw: `[b"NSMVEC01"][u32 dim][u64 count][dim * count x f32]`.
//!
//! Query sets are a UTF-8 TSV (`label<TAB>f1,f2,...`) or an fvecs file paired
//! with a line-aligned label file.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const RAW_MAGIC: &[u8; 8] = b"NSMVEC01";
const RAW_HEADER_LEN: usize = 8 + 4 + 8;

/// Rows with an L2 norm this close to 1 are left untouched by [`normalize`].
///
/// Rescaling a row rounds each f32 component by at most 2^-24 relative, so a
/// freshly normalized row always lands inside this band.
const UNIT_NORM_SLACK: f64 = 2e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Metric {
    #[default]
    Cosine,
    InnerProduct,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Cosine => write!(f, "cosine"),
            Metric::InnerProduct => write!(f, "inner-product"),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" | "cos" => Ok(Metric::Cosine),
            "inner-product" | "ip" | "dot" => Ok(Metric::InnerProduct),
            other => Err(Error::param(format!(
                "unknown metric {other:?}; expected cosine or inner-product"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollectionFormat {
    Fvecs,
    Raw,
}

impl FromStr for CollectionFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fvecs" => Ok(CollectionFormat::Fvecs),
            "raw" | "raw-f32" => Ok(CollectionFormat::Raw),
            other => Err(Error::param(format!("unknown collection format {other:?}"))),
        }
    }
}

/// Immutable row-major matrix of f32 vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorCollection {
    dim: usize,
    count: usize,
    data: Vec<f32>,
    metric: Metric,
    normalized: bool,
}

impl VectorCollection {
    /// Wraps a flat row-major buffer. Rejects ragged lengths and non-finite values.
    pub fn new(dim: usize, data: Vec<f32>, metric: Metric) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dimension must be positive"));
        }
        if data.len() % dim != 0 {
            return Err(Error::format(format!(
                "buffer of {} floats is not a multiple of dim {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "row {} component {} is not finite",
                pos / dim,
                pos % dim
            )));
        }
        let count = data.len() / dim;
        Ok(Self {
            dim,
            count,
            data,
            metric,
            normalized: false,
        })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R], metric: Metric) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or(Error::EmptyCollection)?;
        let mut data = Vec::with_capacity(dim * rows.len());
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::format(format!(
                    "row {i} has dimension {} but row 0 has {dim}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data, metric)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.metric = metric;
        self
    }

    pub(crate) fn mark_normalized(mut self) -> Self {
        self.normalized = true;
        self
    }

    /// Returns a collection holding the given rows, in order.
    pub fn select(&self, ids: &[usize]) -> Self {
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for &i in ids {
            data.extend_from_slice(self.row(i));
        }
        Self {
            dim: self.dim,
            count: ids.len(),
            data,
            metric: self.metric,
            normalized: self.normalized,
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Guesses the layout from the leading magic bytes.
pub fn detect_format(path: &Path) -> Result<CollectionFormat> {
    let bytes = read_file(path)?;
    Ok(if bytes.starts_with(RAW_MAGIC) {
        CollectionFormat::Raw
    } else {
        CollectionFormat::Fvecs
    })
}

/// Loads a collection. The metric defaults to cosine; call [`normalize`] before
/// indexing a cosine collection.
pub fn load_collection(path: &Path, format: CollectionFormat) -> Result<VectorCollection> {
    let bytes = read_file(path)?;
    let parsed = match format {
        CollectionFormat::Fvecs => parse_fvecs(&bytes),
        CollectionFormat::Raw => parse_raw(&bytes),
    };
    parsed.map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_fvecs(bytes: &[u8]) -> Result<VectorCollection> {
    if bytes.is_empty() {
        return Err(Error::EmptyCollection);
    }
    let mut dim = None;
    let mut data = Vec::new();
    let mut offset = 0;
    let mut row = 0;
    while offset < bytes.len() {
        let header = bytes
            .get(offset..offset + 4)
            .ok_or_else(|| Error::format(format!("truncated dimension header at row {row}")))?;
        let d = i32::from_le_bytes(header.try_into().unwrap());
        if d <= 0 {
            return Err(Error::format(format!("row {row} declares dimension {d}")));
        }
        let d = d as usize;
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(Error::format(format!(
                    "row {row} declares dimension {d} but earlier rows have {expected}"
                )))
            }
            _ => {}
        }
        offset += 4;
        let body = bytes
            .get(offset..offset + 4 * d)
            .ok_or_else(|| Error::format(format!("row {row} is truncated")))?;
        data.extend(
            body.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap())),
        );
        offset += 4 * d;
        row += 1;
    }
    VectorCollection::new(dim.unwrap(), data, Metric::Cosine)
}

pub fn parse_raw(bytes: &[u8]) -> Result<VectorCollection> {
    if bytes.is_empty() {
        return Err(Error::EmptyCollection);
    }
    if bytes.len() < RAW_HEADER_LEN || &bytes[..8] != RAW_MAGIC {
        return Err(Error::format("missing NSMVEC01 header"));
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    if dim == 0 {
        return Err(Error::format("header declares dimension 0"));
    }
    if count == 0 {
        return Err(Error::EmptyCollection);
    }
    let expected = (dim as u64)
        .checked_mul(count)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format("header size overflows"))?;
    let body = &bytes[RAW_HEADER_LEN..];
    if body.len() as u64 != expected {
        return Err(Error::format(format!(
            "header declares {count} x {dim} floats ({expected} bytes) but body has {} bytes",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    VectorCollection::new(dim, data, Metric::Cosine)
}

pub fn encode_fvecs(c: &VectorCollection) -> Vec<u8> {
    let mut out = Vec::with_capacity(c.len() * (4 + 4 * c.dim()));
    for row in c.rows() {
        out.extend_from_slice(&(c.dim() as i32).to_le_bytes());
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn encode_raw(c: &VectorCollection) -> Vec<u8> {
    let mut out = Vec::with_capacity(RAW_HEADER_LEN + 4 * c.as_slice().len());
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&(c.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(c.len() as u64).to_le_bytes());
    for v in c.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn save_collection(c: &VectorCollection, path: &Path, format: CollectionFormat) -> Result<()> {
    let bytes = match format {
        CollectionFormat::Fvecs => encode_fvecs(c),
        CollectionFormat::Raw => encode_raw(c),
    };
    write_file(path, &bytes)
}

/// Scales every row to unit L2 norm.
///
/// Rows already within [`UNIT_NORM_SLACK`] of unit length are copied as-is,
/// which makes the operation idempotent bit for bit.
pub fn normalize(c: &VectorCollection) -> Result<VectorCollection> {
    let mut data = Vec::with_capacity(c.data.len());
    for (i, row) in c.rows().enumerate() {
        let norm = row.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::DegenerateVector { row: i });
        }
        if (norm - 1.0).abs() <= UNIT_NORM_SLACK {
            data.extend_from_slice(row);
        } else {
            data.extend(row.iter().map(|&v| (v as f64 / norm) as f32));
        }
    }
    Ok(VectorCollection {
        dim: c.dim,
        count: c.count,
        data,
        metric: c.metric,
        normalized: true,
    })
}

/// Case folding used for every label join in the crate.
pub fn fold_label(label: &str) -> String {
    label.to_lowercase()
}

/// Ordered (label, vector) pairs to be scored against a collection.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledQuerySet {
    labels: Vec<String>,
    vectors: VectorCollection,
}

impl LabeledQuerySet {
    pub fn new(labels: Vec<String>, vectors: VectorCollection) -> Result<Self> {
        if labels.len() != vectors.len() {
            return Err(Error::data(format!(
                "{} labels for {} vectors",
                labels.len(),
                vectors.len()
            )));
        }
        let mut seen = HashSet::with_capacity(labels.len());
        for l in &labels {
            if !seen.insert(fold_label(l)) {
                return Err(Error::data(format!("duplicate label {l:?}")));
            }
        }
        Ok(Self { labels, vectors })
    }

    pub fn empty(dim: usize, metric: Metric) -> Self {
        Self {
            labels: Vec::new(),
            vectors: VectorCollection {
                dim,
                count: 0,
                data: Vec::new(),
                metric,
                normalized: true,
            },
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn vectors(&self) -> &VectorCollection {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.dim()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.labels
            .iter()
            .map(String::as_str)
            .zip(self.vectors.rows())
    }

    pub fn normalized(&self) -> Result<Self> {
        Ok(Self {
            labels: self.labels.clone(),
            vectors: normalize(&self.vectors)?,
        })
    }
}

/// Parses the query TSV.
///
/// The first line is a header starting with `label`; an optional second field
/// `dim=<d>` declares the vector dimensionality. Without it the first record
/// fixes the dimension.
pub fn parse_queries(text: &str) -> Result<LabeledQuerySet> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::format("query file has no header line"))?;
    let mut header_fields = header.trim_end_matches('\r').split('\t');
    if header_fields.next() != Some("label") {
        return Err(Error::format(format!(
            "query header must start with `label`, found {header:?}"
        )));
    }
    let mut declared = match header_fields.next() {
        Some(field) => {
            let d = field
                .strip_prefix("dim=")
                .unwrap_or(field)
                .parse::<usize>()
                .map_err(|_| Error::format(format!("bad dimension declaration {field:?}")))?;
            if d == 0 {
                return Err(Error::format("declared dimension is 0"));
            }
            Some(d)
        }
        None => None,
    };

    let mut labels = Vec::new();
    let mut data = Vec::new();
    for (lineno, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let (label, values) = line.split_once('\t').ok_or_else(|| {
            Error::format(format!("line {}: expected label<TAB>vector", lineno + 1))
        })?;
        let start = data.len();
        for v in values.split(',') {
            let x = v.trim().parse::<f32>().map_err(|_| {
                Error::format(format!("line {}: cannot parse {v:?} as a float", lineno + 1))
            })?;
            data.push(x);
        }
        let d = data.len() - start;
        match declared {
            None => declared = Some(d),
            Some(expected) if expected != d => {
                return Err(Error::format(format!(
                    "line {}: vector has {d} components, expected {expected}",
                    lineno + 1
                )))
            }
            _ => {}
        }
        labels.push(label.to_string());
    }
    let dim = declared.ok_or_else(|| Error::format("query file declares no dimension and has no records"))?;
    if labels.is_empty() {
        return Ok(LabeledQuerySet::empty(dim, Metric::Cosine));
    }
    LabeledQuerySet::new(labels, VectorCollection::new(dim, data, Metric::Cosine)?)
}

pub fn load_queries(path: &Path) -> Result<LabeledQuerySet> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|_| Error::data(format!("{}: not valid UTF-8", path.display())))?;
    parse_queries(&text).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Loads an fvecs file plus a label file holding one label per line.
pub fn load_queries_binary(vectors: &Path, labels: &Path) -> Result<LabeledQuerySet> {
    let c = load_collection(vectors, CollectionFormat::Fvecs)?;
    let text = String::from_utf8(read_file(labels)?)
        .map_err(|_| Error::data(format!("{}: not valid UTF-8", labels.display())))?;
    let labels: Vec<String> = text
        .lines()
        .map(|l| l.trim_end_matches('\r').to_string())
        .collect();
    LabeledQuerySet::new(labels, c)
}

pub fn format_queries(q: &LabeledQuerySet) -> String {
    let mut out = format!("label\tdim={}\n", q.dim());
    for (label, v) in q.iter() {
        out.push_str(label);
        out.push('\t');
        for (i, x) in v.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            // `{}` on f32 prints the shortest string that parses back to the same bits.
            out.push_str(&x.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn save_queries(q: &LabeledQuerySet, path: &Path) -> Result<()> {
    write_file(path, format_queries(q).as_bytes())
}
