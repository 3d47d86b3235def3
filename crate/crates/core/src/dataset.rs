//! Dataset manifests and reproducible train/validation/test splits.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SeededRng;

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("manifest row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("duplicate manifest id `{0}`")]
    DuplicateId(String),
    #[error("manifest is empty")]
    EmptyManifest,
    #[error("invalid ratios {ratios:?}: {reason}")]
    InvalidRatios { ratios: [f64; 3], reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub image_path: String,
    pub annotation_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self, DatasetError> {
        let mut seen = HashSet::new();
        for (i, e) in entries.iter().enumerate() {
            if e.id.is_empty() || e.image_path.is_empty() {
                return Err(DatasetError::Parse {
                    row: i + 1,
                    message: "id and image_path must be non-empty".into(),
                });
            }
            if !seen.insert(e.id.as_str()) {
                return Err(DatasetError::DuplicateId(e.id.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id", "image_path", "annotation_path"]).expect("in-memory write");
        for e in &self.entries {
            w.write_record([
                e.id.as_str(),
                e.image_path.as_str(),
                e.annotation_path.as_deref().unwrap_or(""),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
    }
}

/// Reads a manifest with header `id,image_path,annotation_path`.
///
/// Rows are numbered from 1 for the first data row. An empty
/// `annotation_path` cell means the image is unannotated.
pub fn load_manifest(text: &str) -> Result<DatasetManifest, DatasetError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| DatasetError::Parse { row: 0, message: e.to_string() })?
        .clone();
    let column = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| DatasetError::Parse {
            row: 0,
            message: format!("header is missing column `{name}`"),
        })
    };
    let (id_col, image_col, ann_col) = (column("id")?, column("image_path")?, column("annotation_path")?);
    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| DatasetError::Parse { row, message: e.to_string() })?;
        let cell = |idx: usize| record.get(idx).unwrap_or("").to_string();
        let entry = ManifestEntry {
            id: cell(id_col),
            image_path: cell(image_col),
            annotation_path: Some(cell(ann_col)).filter(|s| !s.is_empty()),
        };
        if entry.id.is_empty() {
            return Err(DatasetError::Parse { row, message: "empty id".into() });
        }
        if entry.image_path.is_empty() {
            return Err(DatasetError::Parse { row, message: "empty image_path".into() });
        }
        entries.push(entry);
    }
    DatasetManifest::new(entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct SplitRatios([f64; 3]);

impl SplitRatios {
    pub const DEFAULT: SplitRatios = SplitRatios([0.68, 0.12, 0.2]);
    pub const BENCHMARK: SplitRatios = SplitRatios([0.6, 0.2, 0.2]);

    pub fn new(train: f64, val: f64, test: f64) -> Result<Self, DatasetError> {
        let ratios = [train, val, test];
        if ratios.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return Err(DatasetError::InvalidRatios {
                ratios,
                reason: "each ratio must be positive".into(),
            });
        }
        let sum: f64 = ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DatasetError::InvalidRatios {
                ratios,
                reason: format!("ratios sum to {sum}, expected 1"),
            });
        }
        Ok(Self(ratios))
    }

    pub fn as_array(&self) -> [f64; 3] {
        self.0
    }

    /// Largest-remainder apportionment of `n` items. Leftover units go to
    /// the largest fractional parts; equal remainders are served in
    /// train, val, test order.
    pub fn apportion(&self, n: usize) -> [usize; 3] {
        let quotas = self.0.map(|r| n as f64 * r);
        // tolerate representation error such as 5495 * 0.2 = 1098.9999...
        let mut sizes = quotas.map(|q| (q + 1e-9).floor() as usize);
        let remainders: Vec<f64> = quotas.iter().zip(&sizes).map(|(q, &s)| (q - s as f64).max(0.0)).collect();
        let assigned: usize = sizes.iter().sum();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| remainders[b].total_cmp(&remainders[a]).then(a.cmp(&b)));
        for &k in order.iter().take(n.saturating_sub(assigned)) {
            sizes[k] += 1;
        }
        sizes
    }
}

impl TryFrom<[f64; 3]> for SplitRatios {
    type Error = DatasetError;

    fn try_from(r: [f64; 3]) -> Result<Self, Self::Error> {
        SplitRatios::new(r[0], r[1], r[2])
    }
}

impl From<SplitRatios> for [f64; 3] {
    fn from(r: SplitRatios) -> Self {
        r.0
    }
}

/// Output of [`split`]; serializes to the split JSON file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub ratios: SplitRatios,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitAssignment {
    pub fn sizes(&self) -> [usize; 3] {
        [self.train.len(), self.val.len(), self.test.len()]
    }
}

/// Shuffles ids in manifest order with [`SeededRng::shuffle`] and cuts the
/// result into train, val and test buckets of [`SplitRatios::apportion`] size.
pub fn split(manifest: &DatasetManifest, ratios: SplitRatios, seed: u64) -> Result<SplitAssignment, DatasetError> {
    if manifest.is_empty() {
        return Err(DatasetError::EmptyManifest);
    }
    let mut ids: Vec<String> = manifest.ids().map(str::to_owned).collect();
    SeededRng::new(seed).shuffle(&mut ids);
    let [n_train, n_val, _] = ratios.apportion(ids.len());
    let test = ids.split_off(n_train + n_val);
    let val = ids.split_off(n_train);
    Ok(SplitAssignment {
        seed,
        ratios,
        train: ids,
        val,
        test,
    })
}
