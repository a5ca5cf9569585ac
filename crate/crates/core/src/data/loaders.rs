use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::nn::Tensor;

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;
const CIFAR_SIDE: usize = 32;
const CIFAR_RECORD: usize = 1 + 3 * CIFAR_SIDE * CIFAR_SIDE;

/// Reads a file, transparently inflating gzip content.
fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    // An unreadable input is a data problem, not a failure of the run directory.
    let raw = fs::read(path).map_err(|e| Error::load(path, None, format!("cannot read: {e}")))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::load(path, None, format!("gzip: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::load(path, Some(at as u64), "truncated header"))
}

/// Loads an IDX image/label file pair (MNIST family), optionally gzipped.
/// Pixel values are kept as raw bytes (0-255).
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let img = read_maybe_gz(images)?;
    let magic = be_u32(&img, 0, images)?;
    if magic != IDX_IMAGES {
        return Err(Error::load(images, Some(0), format!("bad magic {magic:#010x}, expected {IDX_IMAGES:#010x}")));
    }
    let n = be_u32(&img, 4, images)? as usize;
    let rows = be_u32(&img, 8, images)? as usize;
    let cols = be_u32(&img, 12, images)? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::load(images, Some(8), "zero image dimension"));
    }
    let body = &img[16..];
    if body.len() != n * rows * cols {
        return Err(Error::load(
            images,
            Some(16),
            format!("expected {} pixel bytes, found {}", n * rows * cols, body.len()),
        ));
    }

    let lab = read_maybe_gz(labels)?;
    let magic = be_u32(&lab, 0, labels)?;
    if magic != IDX_LABELS {
        return Err(Error::load(labels, Some(0), format!("bad magic {magic:#010x}, expected {IDX_LABELS:#010x}")));
    }
    let m = be_u32(&lab, 4, labels)? as usize;
    if m != n {
        return Err(Error::load(labels, Some(4), format!("{m} labels for {n} images")));
    }
    let lbody = &lab[8..];
    if lbody.len() != n {
        return Err(Error::load(labels, Some(8), format!("expected {n} label bytes, found {}", lbody.len())));
    }
    if n == 0 {
        return Err(Error::load(images, Some(4), "no instances"));
    }
    let labels_vec: Vec<usize> = lbody.iter().map(|&b| b as usize).collect();
    let classes = labels_vec.iter().max().unwrap() + 1;
    let features = Tensor::new(vec![n, rows, cols, 1], body.iter().map(|&b| b as f64).collect())?;
    Dataset::new(features, labels_vec, classes)
}

/// Loads one CIFAR-10 binary batch (label byte + planar RGB per record)
/// into `(n, 32, 32, 3)` raw byte values.
pub fn load_cifar_batch(path: &Path) -> Result<Dataset> {
    let raw = read_maybe_gz(path)?;
    if raw.is_empty() {
        return Err(Error::load(path, Some(0), "no instances"));
    }
    if raw.len() % CIFAR_RECORD != 0 {
        let off = (raw.len() / CIFAR_RECORD * CIFAR_RECORD) as u64;
        return Err(Error::load(path, Some(off), "truncated record"));
    }
    let n = raw.len() / CIFAR_RECORD;
    let plane = CIFAR_SIDE * CIFAR_SIDE;
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * 3 * plane);
    for (i, rec) in raw.chunks_exact(CIFAR_RECORD).enumerate() {
        if rec[0] >= 10 {
            return Err(Error::load(path, Some((i * CIFAR_RECORD) as u64), format!("label {} out of range", rec[0])));
        }
        labels.push(rec[0] as usize);
        for p in 0..plane {
            for ch in 0..3 {
                data.push(rec[1 + ch * plane + p] as f64);
            }
        }
    }
    let features = Tensor::new(vec![n, CIFAR_SIDE, CIFAR_SIDE, 3], data)?;
    Dataset::new(features, labels, 10)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub label_column: String,
    /// Feature columns in order; all non-label columns when absent.
    #[serde(default)]
    pub feature_columns: Option<Vec<String>>,
    /// Known class names, in index order. When absent the sorted distinct
    /// label values define the classes.
    #[serde(default)]
    pub classes: Option<Vec<String>>,
}

struct Table {
    header: Vec<String>,
    rows: Vec<(u64, Vec<String>)>,
}

fn read_table(path: &Path) -> Result<Table> {
    let text = String::from_utf8(read_maybe_gz(path)?).map_err(|_| Error::load(path, None, "not valid UTF-8"))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, head) = lines.next().ok_or_else(|| Error::load(path, Some(0), "no instances"))?;
    let header: Vec<String> = head.split(',').map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (i, line) in lines {
        let cells: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
        if cells.len() != header.len() {
            return Err(Error::load(
                path,
                Some(i as u64 + 1),
                format!("ragged row: {} cells, header has {}", cells.len(), header.len()),
            ));
        }
        rows.push((i as u64 + 1, cells));
    }
    if rows.is_empty() {
        return Err(Error::load(path, Some(1), "no instances"));
    }
    Ok(Table { header, rows })
}

fn column(header: &[String], name: &str, path: &Path) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::load(path, Some(0), format!("missing column '{name}'")))
}

fn class_index(values: &[&str], declared: Option<&Vec<String>>, path: &Path, lines: &[u64]) -> Result<(Vec<usize>, Vec<String>)> {
    let names: Vec<String> = match declared {
        Some(c) => c.clone(),
        None => {
            let mut distinct: Vec<&str> = values.to_vec();
            distinct.sort_by(|a, b| match (a.parse::<i64>(), b.parse::<i64>()) {
                (Ok(x), Ok(y)) => x.cmp(&y),
                _ => a.cmp(b),
            });
            distinct.dedup();
            distinct.into_iter().map(String::from).collect()
        }
    };
    let lookup: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let labels = values
        .iter()
        .zip(lines)
        .map(|(v, line)| {
            lookup
                .get(v)
                .copied()
                .ok_or_else(|| Error::load(path, Some(*line), format!("unknown label '{v}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((labels, names))
}

/// Loads a headered CSV where every row is one instance. Features become a
/// `(rows, feature_columns, 1)` tensor.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let table = read_table(path)?;
    let label_col = column(&table.header, &schema.label_column, path)?;
    let feature_cols: Vec<usize> = match &schema.feature_columns {
        Some(cols) => cols.iter().map(|c| column(&table.header, c, path)).collect::<Result<_>>()?,
        None => (0..table.header.len()).filter(|&c| c != label_col).collect(),
    };
    if feature_cols.is_empty() {
        return Err(Error::load(path, Some(0), "no feature columns"));
    }
    let mut data = Vec::with_capacity(table.rows.len() * feature_cols.len());
    for (line, cells) in &table.rows {
        for &c in &feature_cols {
            let v: f64 = cells[c]
                .parse()
                .map_err(|_| Error::load(path, Some(*line), format!("column '{}': '{}' is not a number", table.header[c], cells[c])))?;
            data.push(v);
        }
    }
    let values: Vec<&str> = table.rows.iter().map(|(_, r)| r[label_col].as_str()).collect();
    let lines: Vec<u64> = table.rows.iter().map(|(l, _)| *l).collect();
    let (labels, names) = class_index(&values, schema.classes.as_ref(), path, &lines)?;
    let n = table.rows.len();
    let features = Tensor::new(vec![n, feature_cols.len(), 1], data)?;
    let mut ds = Dataset::new(features, labels, names.len())?;
    ds.channel_names = Some(feature_cols.iter().map(|&c| table.header[c].clone()).collect());
    Ok(ds)
}

/// A multichannel time series with optional per-timestep labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    /// `(length, channels)`; missing samples are NaN until cleaned.
    pub values: Tensor,
    pub labels: Option<Vec<usize>>,
    pub channel_names: Vec<String>,
    pub class_names: Vec<String>,
}

/// Loads a headered CSV where rows are timesteps and columns channels.
/// Empty cells and `NaN` are read as missing.
pub fn load_series_csv(path: &Path, schema: &CsvSchema) -> Result<Series> {
    let table = read_table(path)?;
    let label_col = table
        .header
        .iter()
        .position(|h| *h == schema.label_column);
    let cols: Vec<usize> = match &schema.feature_columns {
        Some(c) => c.iter().map(|c| column(&table.header, c, path)).collect::<Result<_>>()?,
        None => (0..table.header.len()).filter(|&c| Some(c) != label_col).collect(),
    };
    let mut data = Vec::with_capacity(table.rows.len() * cols.len());
    for (line, cells) in &table.rows {
        for &c in &cols {
            let cell = cells[c].as_str();
            let v = if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
                f64::NAN
            } else {
                cell.parse()
                    .map_err(|_| Error::load(path, Some(*line), format!("'{cell}' is not a number")))?
            };
            data.push(v);
        }
    }
    let (labels, class_names) = match label_col {
        Some(lc) => {
            let values: Vec<&str> = table.rows.iter().map(|(_, r)| r[lc].as_str()).collect();
            let lines: Vec<u64> = table.rows.iter().map(|(l, _)| *l).collect();
            let (l, n) = class_index(&values, schema.classes.as_ref(), path, &lines)?;
            (Some(l), n)
        }
        None => (None, Vec::new()),
    };
    Ok(Series {
        values: Tensor::new(vec![table.rows.len(), cols.len()], data)?,
        labels,
        channel_names: cols.iter().map(|&c| table.header[c].clone()).collect(),
        class_names,
    })
}

/// Drops channels whose missing fraction exceeds `max_missing` and
/// forward-fills the rest (leading gaps take the first observed value).
/// Returns the cleaned series and the names of dropped channels.
pub fn clean_series(series: &Series, max_missing: f64) -> Result<(Series, Vec<String>)> {
    let (len, ch) = (series.values.shape()[0], series.values.shape()[1]);
    let v = series.values.data();
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for c in 0..ch {
        let missing = (0..len).filter(|&t| v[t * ch + c].is_nan()).count();
        if missing as f64 > max_missing * len as f64 || missing == len {
            dropped.push(series.channel_names[c].clone());
        } else {
            keep.push(c);
        }
    }
    if keep.is_empty() {
        return Err(Error::Data("every channel exceeds the missing-value limit".into()));
    }
    let mut out = vec![0.0; len * keep.len()];
    for (k, &c) in keep.iter().enumerate() {
        let first = (0..len).map(|t| v[t * ch + c]).find(|x| !x.is_nan()).unwrap();
        let mut last = first;
        for t in 0..len {
            let x = v[t * ch + c];
            if !x.is_nan() {
                last = x;
            }
            out[t * keep.len() + k] = last;
        }
    }
    Ok((
        Series {
            values: Tensor::new(vec![len, keep.len()], out)?,
            labels: series.labels.clone(),
            channel_names: keep.iter().map(|&c| series.channel_names[c].clone()).collect(),
            class_names: series.class_names.clone(),
        },
        dropped,
    ))
}
