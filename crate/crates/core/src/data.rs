//! Dataset ingestion: IDX (MNIST layout) and headered CSV.

use std::path::Path;

use crate::augment::{LabeledSample, Origin};
use crate::error::{Error, Result};
use crate::interval::Interval;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetBundle {
    pub train: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
    /// Observed `[min, max]` of every feature over train and test.
    pub feature_ranges: Vec<Interval>,
    pub label_names: Vec<String>,
}

impl DatasetBundle {
    pub fn input_dim(&self) -> usize {
        self.train
            .first()
            .or(self.test.first())
            .map_or(self.feature_ranges.len(), |s| s.input.len())
    }

    /// Moves every sample of `test` into this bundle's test split.
    pub fn with_test(mut self, test: DatasetBundle) -> Result<Self> {
        let dim = self.input_dim();
        if !test.train.is_empty() && test.input_dim() != dim {
            return Err(Error::dim("test split features", dim, test.input_dim()));
        }
        self.test.extend(test.train);
        self.test.extend(test.test);
        self.feature_ranges = feature_ranges(self.train.iter().chain(&self.test));
        if test.label_names.len() > self.label_names.len() {
            self.label_names = test.label_names;
        }
        Ok(self)
    }
}

fn feature_ranges<'a>(samples: impl Iterator<Item = &'a LabeledSample>) -> Vec<Interval> {
    let mut ranges: Vec<Interval> = Vec::new();
    for s in samples {
        if ranges.is_empty() {
            ranges = s.input.iter().map(|&v| Interval::point(v)).collect();
            continue;
        }
        for (r, &v) in ranges.iter_mut().zip(&s.input) {
            r.lw = r.lw.min(v);
            r.up = r.up.max(v);
        }
    }
    ranges
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    let chunk = bytes.get(at..at + 4).ok_or(Error::IdxTruncated {
        needed: at + 4,
        available: bytes.len(),
    })?;
    Ok(u32::from_be_bytes(chunk.try_into().unwrap()))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = read_u32(bytes, 0)?;
    if found != expected {
        return Err(Error::IdxMagic { expected, found });
    }
    Ok(())
}

/// Images scaled to `[0, 1]` and flattened row-major.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
    check_magic(bytes, IDX_IMAGES_MAGIC)?;
    let n = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let dim = rows * cols;
    let needed = 16 + n * dim;
    if bytes.len() < needed {
        return Err(Error::IdxTruncated {
            needed,
            available: bytes.len(),
        });
    }
    Ok(bytes[16..needed]
        .chunks_exact(dim.max(1))
        .take(n)
        .map(|px| px.iter().map(|&p| f64::from(p) / 255.0).collect())
        .collect())
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    check_magic(bytes, IDX_LABELS_MAGIC)?;
    let n = read_u32(bytes, 4)? as usize;
    let needed = 8 + n;
    if bytes.len() < needed {
        return Err(Error::IdxTruncated {
            needed,
            available: bytes.len(),
        });
    }
    Ok(bytes[8..needed].iter().map(|&b| b as usize).collect())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads an IDX image/label pair into the bundle's train split.
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<DatasetBundle> {
    let xs = parse_idx_images(&read_file(images.as_ref())?)?;
    let ys = parse_idx_labels(&read_file(labels.as_ref())?)?;
    if xs.len() != ys.len() {
        return Err(Error::IdxCountMismatch {
            images: xs.len(),
            labels: ys.len(),
        });
    }
    let n_labels = ys.iter().max().map_or(0, |m| m + 1);
    let train: Vec<LabeledSample> = xs
        .into_iter()
        .zip(ys)
        .map(|(x, y)| LabeledSample::new(x, y, Origin::NewTask))
        .collect();
    Ok(DatasetBundle {
        feature_ranges: feature_ranges(train.iter()),
        train,
        test: Vec::new(),
        label_names: (0..n_labels).map(|l| l.to_string()).collect(),
    })
}

/// Loads a headered numeric CSV into the bundle's train split. The label
/// column must hold non-negative integers; every other column is a feature.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<DatasetBundle> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
    let headers = reader.headers().map_err(|e| Error::format(path, e))?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::format(path, format!("no column named {label_column:?}")))?;
    let names: Vec<String> = headers.iter().map(str::to_string).collect();

    let mut train = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| Error::Csv {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        let mut input = Vec::with_capacity(record.len().saturating_sub(1));
        let mut label = 0;
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Csv {
                row,
                column: names[c].clone(),
                message: format!("non-numeric value {cell:?}"),
            })?;
            if c == label_idx {
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(Error::Csv {
                        row,
                        column: names[c].clone(),
                        message: format!("label {cell:?} is not a non-negative integer"),
                    });
                }
                label = v as usize;
            } else {
                input.push(v);
            }
        }
        train.push(LabeledSample::new(input, label, Origin::NewTask));
    }
    let n_labels = train.iter().map(|s| s.label + 1).max().unwrap_or(0);
    Ok(DatasetBundle {
        feature_ranges: feature_ranges(train.iter()),
        train,
        test: Vec::new(),
        label_names: (0..n_labels).map(|l| l.to_string()).collect(),
    })
}
