//! Dataset ingestion: CSV (header row required) or raw-tensor files,
//! optional standardization, deterministic seeded splits, and a normalized
//! cache with a payload checksum.

use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataFormat {
    #[serde(rename = "csv")]
    Csv,
    #[serde(rename = "raw-tensor")]
    RawTensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "classification")]
    Classification,
    #[serde(rename = "regression")]
    Regression,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub source: PathBuf,
    pub format: DataFormat,
    /// Feature column names (CSV) or indices-as-strings (raw tensor);
    /// `None` takes every non-label column.
    #[serde(default)]
    pub feature_columns: Option<Vec<String>>,
    /// Label column name (CSV) or index-as-string (raw tensor).
    pub label_column: String,
    pub task: TaskKind,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default)]
    pub test_fraction: f64,
    #[serde(default)]
    pub standardize: bool,
}

fn default_val_fraction() -> f64 {
    0.10
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    /// Train/val/test must be pairwise disjoint.
    pub fn check_disjoint(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for (name, ids) in
            [("train", &self.train), ("val", &self.val), ("test", &self.test)]
        {
            for &i in ids {
                if !seen.insert(i) {
                    return Err(Error::Data(format!(
                        "row {i} appears in multiple splits (found again in {name})"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Array1<f64>,
    pub n_classes: Option<usize>,
    pub feature_names: Vec<String>,
    pub norm_mean: Vec<f64>,
    pub norm_std: Vec<f64>,
    pub splits: Splits,
    pub task: TaskKind,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.features.dim().0
    }

    pub fn n_features(&self) -> usize {
        self.features.dim().1
    }

    fn subset(&self, ids: &[usize]) -> (Array2<f64>, Array1<f64>) {
        let mut x = Array2::zeros((ids.len(), self.n_features()));
        let mut y = Array1::zeros(ids.len());
        for (r, &i) in ids.iter().enumerate() {
            x.row_mut(r).assign(&self.features.row(i));
            y[r] = self.labels[i];
        }
        (x, y)
    }

    pub fn train_xy(&self) -> (Array2<f64>, Array1<f64>) {
        self.subset(&self.splits.train)
    }

    pub fn val_xy(&self) -> (Array2<f64>, Array1<f64>) {
        self.subset(&self.splits.val)
    }

    pub fn test_xy(&self) -> (Array2<f64>, Array1<f64>) {
        self.subset(&self.splits.test)
    }
}

/// Seeded disjoint split of `0..n`.
pub fn split_indices(n: usize, val_fraction: f64, test_fraction: f64, seed: u64) -> Splits {
    let mut ids: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n_val = (n as f64 * val_fraction) as usize;
    let n_test = (n as f64 * test_fraction) as usize;
    let val = ids[..n_val].to_vec();
    let test = ids[n_val..n_val + n_test].to_vec();
    let train = ids[n_val + n_test..].to_vec();
    Splits { train, val, test }
}

fn parse_csv(path: &Path, spec: &DatasetSpec) -> Result<(Array2<f64>, Vec<f64>, Vec<String>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Data(format!("bad header row: {e}")))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    let label_idx = headers
        .iter()
        .position(|h| h == &spec.label_column)
        .ok_or_else(|| Error::Data(format!("label column '{}' not found", spec.label_column)))?;
    let feature_idx: Vec<usize> = match &spec.feature_columns {
        None => (0..headers.len()).filter(|&i| i != label_idx).collect(),
        Some(names) => names
            .iter()
            .map(|n| {
                headers
                    .iter()
                    .position(|h| h == n)
                    .ok_or_else(|| Error::Data(format!("feature column '{n}' not found")))
            })
            .collect::<Result<_>>()?,
    };
    let mut rows: Vec<f64> = Vec::new();
    let mut labels: Vec<f64> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Data(format!("malformed row: {e}")))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let get = |i: usize| -> Result<f64> {
            let raw = rec
                .get(i)
                .ok_or_else(|| Error::Data(format!("line {line}: missing column {i}")))?;
            if raw.trim().is_empty() {
                return Err(Error::Data(format!(
                    "line {line}: empty value in column '{}'",
                    headers[i]
                )));
            }
            raw.trim().parse::<f64>().map_err(|_| {
                Error::Data(format!("line {line}: '{raw}' in column '{}' is not a number", headers[i]))
            })
        };
        for &i in &feature_idx {
            rows.push(get(i)?);
        }
        labels.push(get(label_idx)?);
    }
    let n = labels.len();
    let d = feature_idx.len();
    let names = feature_idx.iter().map(|&i| headers[i].clone()).collect();
    let x = Array2::from_shape_vec((n, d), rows)
        .map_err(|e| Error::Data(format!("ragged csv: {e}")))?;
    Ok((x, labels, names))
}

const TENSOR_MAGIC: &[u8; 4] = b"LFTD";

/// Write a raw-tensor file: magic "LFTD", u16 version, u32 ndim, u32 dims,
/// f32 little-endian payload.
pub fn write_tensor_f32(path: &Path, dims: &[usize], data: &[f32]) -> Result<()> {
    if dims.iter().product::<usize>() != data.len() {
        return Err(Error::Data("tensor payload does not match dims".into()));
    }
    let mut out = Vec::new();
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    super::atomic_write(path, &out)
}

pub fn read_tensor_f32(path: &Path) -> Result<(Vec<usize>, Vec<f32>)> {
    let buf = std::fs::read(path)?;
    if buf.len() < 10 || &buf[..4] != TENSOR_MAGIC {
        return Err(Error::Format("not a LFTD tensor file".into()));
    }
    let version = u16::from_le_bytes(buf[4..6].try_into().unwrap());
    if version != 1 {
        return Err(Error::Format(format!("unsupported LFTD version {version}")));
    }
    let ndim = u32::from_le_bytes(buf[6..10].try_into().unwrap()) as usize;
    let mut pos = 10;
    let mut dims = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        if pos + 4 > buf.len() {
            return Err(Error::Format("truncated LFTD header".into()));
        }
        dims.push(u32::from_le_bytes(buf[pos..pos + 4].try_into().unwrap()) as usize);
        pos += 4;
    }
    let count: usize = dims.iter().product();
    if buf.len() != pos + count * 4 {
        return Err(Error::Format("LFTD payload size mismatch".into()));
    }
    let data = buf[pos..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((dims, data))
}

fn parse_raw_tensor(
    path: &Path,
    spec: &DatasetSpec,
) -> Result<(Array2<f64>, Vec<f64>, Vec<String>)> {
    let (dims, data) = read_tensor_f32(path)?;
    if dims.len() != 2 {
        return Err(Error::Data(format!(
            "raw-tensor dataset must be 2-D (rows, columns), got {dims:?}"
        )));
    }
    let (n, c) = (dims[0], dims[1]);
    let label_idx: usize = spec
        .label_column
        .parse()
        .map_err(|_| Error::Data("raw-tensor label column must be an index".into()))?;
    if label_idx >= c {
        return Err(Error::Data(format!("label index {label_idx} out of {c} columns")));
    }
    let feature_idx: Vec<usize> = match &spec.feature_columns {
        None => (0..c).filter(|&i| i != label_idx).collect(),
        Some(names) => names
            .iter()
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|_| Error::Data("raw-tensor feature columns must be indices".into()))
            })
            .collect::<Result<_>>()?,
    };
    let mut x = Array2::zeros((n, feature_idx.len()));
    let mut labels = Vec::with_capacity(n);
    for r in 0..n {
        for (fc, &i) in feature_idx.iter().enumerate() {
            x[[r, fc]] = data[r * c + i] as f64;
        }
        labels.push(data[r * c + label_idx] as f64);
    }
    let names = feature_idx.iter().map(|i| format!("c{i}")).collect();
    Ok((x, labels, names))
}

/// Parse, split, optionally standardize (statistics from the train split).
pub fn ingest(spec: &DatasetSpec) -> Result<Dataset> {
    let (mut x, labels, names) = match spec.format {
        DataFormat::Csv => parse_csv(&spec.source, spec)?,
        DataFormat::RawTensor => parse_raw_tensor(&spec.source, spec)?,
    };
    let n = x.dim().0;
    if n == 0 {
        return Err(Error::Data("dataset is empty".into()));
    }
    let n_classes = match spec.task {
        TaskKind::Regression => None,
        TaskKind::Classification => {
            let mut max = 0usize;
            for &l in &labels {
                if l.fract() != 0.0 || l < 0.0 {
                    return Err(Error::Data(format!(
                        "classification label {l} is not a class index"
                    )));
                }
                max = max.max(l as usize);
            }
            let k = max + 1;
            if k > 1024 {
                return Err(Error::Data(format!("label cardinality {k} looks wrong")));
            }
            Some(k)
        }
    };
    let splits = split_indices(n, spec.val_fraction, spec.test_fraction, spec.split_seed);
    splits.check_disjoint()?;

    let d = x.dim().1;
    let (mut mean, mut std) = (vec![0.0; d], vec![1.0; d]);
    if spec.standardize {
        let train = &splits.train;
        if train.is_empty() {
            return Err(Error::Data("no training rows left after splitting".into()));
        }
        for f in 0..d {
            let m = train.iter().map(|&r| x[[r, f]]).sum::<f64>() / train.len() as f64;
            let v = train.iter().map(|&r| (x[[r, f]] - m).powi(2)).sum::<f64>()
                / train.len() as f64;
            mean[f] = m;
            std[f] = if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 };
        }
        for r in 0..n {
            for f in 0..d {
                x[[r, f]] = (x[[r, f]] - mean[f]) / std[f];
            }
        }
    }

    Ok(Dataset {
        features: x,
        labels: Array1::from_vec(labels),
        n_classes,
        feature_names: names,
        norm_mean: mean,
        norm_std: std,
        splits,
        task: spec.task,
    })
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    spec: DatasetSpec,
    feature_names: Vec<String>,
    n_classes: Option<usize>,
    norm_mean: Vec<f64>,
    norm_std: Vec<f64>,
    splits: Splits,
    rows: usize,
    cols: usize,
    /// base64 f64 LE: features row-major, then labels.
    payload: String,
    sha256: String,
}

/// Persist the normalized dataset with a payload checksum.
pub fn save_cache(ds: &Dataset, spec: &DatasetSpec, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity((ds.features.len() + ds.labels.len()) * 8);
    for v in ds.features.iter().chain(ds.labels.iter()) {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let digest = hex::encode(Sha256::digest(&bytes));
    let cache = CacheFile {
        spec: spec.clone(),
        feature_names: ds.feature_names.clone(),
        n_classes: ds.n_classes,
        norm_mean: ds.norm_mean.clone(),
        norm_std: ds.norm_std.clone(),
        splits: ds.splits.clone(),
        rows: ds.n_rows(),
        cols: ds.n_features(),
        payload: B64.encode(&bytes),
        sha256: digest,
    };
    super::atomic_write(path, serde_json::to_string_pretty(&cache)?.as_bytes())
}

pub fn load_cache(path: &Path) -> Result<Dataset> {
    let cache: CacheFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let bytes = B64
        .decode(&cache.payload)
        .map_err(|e| Error::Format(format!("bad cache payload: {e}")))?;
    if hex::encode(Sha256::digest(&bytes)) != cache.sha256 {
        return Err(Error::Format("cache checksum mismatch".into()));
    }
    let expect = (cache.rows * cache.cols + cache.rows) * 8;
    if bytes.len() != expect {
        return Err(Error::Format("cache payload size mismatch".into()));
    }
    let vals: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let (feat, lab) = vals.split_at(cache.rows * cache.cols);
    Ok(Dataset {
        features: Array2::from_shape_vec((cache.rows, cache.cols), feat.to_vec()).unwrap(),
        labels: Array1::from_vec(lab.to_vec()),
        n_classes: cache.n_classes,
        feature_names: cache.feature_names,
        norm_mean: cache.norm_mean,
        norm_std: cache.norm_std,
        splits: cache.splits,
        task: cache.spec.task,
    })
}

mod hex {
    pub fn encode(bytes: impl AsRef<[u8]>) -> String {
        bytes.as_ref().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_spec(path: &Path) -> DatasetSpec {
        DatasetSpec {
            source: path.to_path_buf(),
            format: DataFormat::Csv,
            feature_columns: None,
            label_column: "y".into(),
            task: TaskKind::Classification,
            split_seed: 7,
            val_fraction: 0.1,
            test_fraction: 0.0,
            standardize: false,
        }
    }

    #[test]
    fn ten_rows_split_nine_one_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ten.csv");
        let mut text = String::from("a,b,y\n");
        for i in 0..10 {
            text.push_str(&format!("{},{},{}\n", i, i * 2, i % 2));
        }
        std::fs::write(&path, &text).unwrap();
        let ds1 = ingest(&csv_spec(&path)).unwrap();
        assert_eq!(ds1.splits.train.len(), 9);
        assert_eq!(ds1.splits.val.len(), 1);
        let ds2 = ingest(&csv_spec(&path)).unwrap();
        assert_eq!(ds1.splits, ds2.splits);
    }

    #[test]
    fn raw_tensor_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.lftd");
        let data: Vec<f32> = (0..12).map(|v| v as f32 * 0.5).collect();
        write_tensor_f32(&path, &[3, 4], &data).unwrap();
        let (dims, back) = read_tensor_f32(&path).unwrap();
        assert_eq!(dims, vec![3, 4]);
        assert_eq!(back, data);
    }

    #[test]
    fn overlapping_split_fails_the_invariant() {
        let s = Splits { train: vec![0, 1, 2], val: vec![2], test: vec![] };
        assert!(s.check_disjoint().is_err());
        let s = Splits { train: vec![0, 1], val: vec![2], test: vec![3] };
        assert!(s.check_disjoint().is_ok());
    }

    #[test]
    fn malformed_rows_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,y\n1.0,0\noops,1\n").unwrap();
        let err = ingest(&csv_spec(&path)).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn cache_roundtrips_and_detects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "a,y\n1,0\n2,1\n3,0\n4,1\n5,0\n6,1\n7,0\n8,1\n9,0\n10,1\n")
            .unwrap();
        let mut spec = csv_spec(&path);
        spec.standardize = true;
        let ds = ingest(&spec).unwrap();
        let cpath = dir.path().join("cache.json");
        save_cache(&ds, &spec, &cpath).unwrap();
        let back = load_cache(&cpath).unwrap();
        assert_eq!(back.features, ds.features);
        assert_eq!(back.splits, ds.splits);

        let mut raw: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&cpath).unwrap()).unwrap();
        raw["sha256"] = serde_json::Value::String("00".repeat(32));
        std::fs::write(&cpath, serde_json::to_string(&raw).unwrap()).unwrap();
        assert!(load_cache(&cpath).is_err());
    }
}
