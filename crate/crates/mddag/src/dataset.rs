//! Dataset model, CSV ingestion, and the synthetic two-cluster generator.
//!
//! The CSV format is: UTF-8, comma separated, one header row. The column
//! named `label` carries 1-based class indices; optional `qid` and
//! `subcluster` columns carry query ids (for ranking metrics) and
//! sub-cluster provenance tags. Every other column is a feature, in file
//! order.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv parse error: {0}")]
    Csv(#[from] csv::Error),
    #[error("no rows")]
    NoRows,
    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column {column}: non-numeric value {value:?}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column {column}: non-finite value {value:?}")]
    NonFinite {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: label {value:?} is not a positive class index")]
    BadLabel { row: usize, value: String },
    #[error("header has no {0:?} column")]
    MissingColumn(&'static str),
    #[error("invalid synthetic spec: {0}")]
    BadSpec(String),
}

/// A dense feature matrix with one integer class label per row.
///
/// Immutable after construction; labels are 1-based class indices in
/// `1..=k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    labels: Vec<u32>,
    n: usize,
    d: usize,
    k: usize,
    qids: Option<Vec<String>>,
    subclusters: Option<Vec<String>>,
}

impl LabeledDataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<u32>,
        d: usize,
        qids: Option<Vec<String>>,
        subclusters: Option<Vec<String>>,
    ) -> Result<Self, DataError> {
        let n = labels.len();
        if n == 0 || d == 0 {
            return Err(DataError::NoRows);
        }
        assert_eq!(features.len(), n * d, "feature matrix shape mismatch");
        for (i, v) in features.iter().enumerate() {
            if !v.is_finite() {
                return Err(DataError::NonFinite {
                    row: i / d + 1,
                    column: format!("f{}", i % d + 1),
                    value: v.to_string(),
                });
            }
        }
        for (i, &l) in labels.iter().enumerate() {
            if l == 0 {
                return Err(DataError::BadLabel {
                    row: i + 1,
                    value: l.to_string(),
                });
            }
        }
        let k = labels.iter().copied().max().unwrap().max(2) as usize;
        Ok(LabeledDataset {
            features,
            labels,
            n,
            d,
            k,
            qids,
            subclusters,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    /// 1-based class index of row `i`.
    pub fn label(&self, i: usize) -> u32 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn qids(&self) -> Option<&[String]> {
        self.qids.as_deref()
    }

    pub fn subclusters(&self) -> Option<&[String]> {
        self.subclusters.as_deref()
    }

    /// Number of rows carrying each label, indexed by class (1-based key).
    pub fn class_counts(&self) -> Vec<(u32, usize)> {
        let mut counts = vec![0usize; self.k + 1];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        (1..=self.k as u32).map(|c| (c, counts[c as usize])).collect()
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_reader(file)
    }

    pub fn from_reader(reader: impl std::io::Read) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.is_empty() {
            return Err(DataError::NoRows);
        }
        let mut label_col = None;
        let mut qid_col = None;
        let mut sub_col = None;
        let mut feature_cols = Vec::new();
        for (i, h) in headers.iter().enumerate() {
            match h {
                "label" => label_col = Some(i),
                "qid" => qid_col = Some(i),
                "subcluster" => sub_col = Some(i),
                _ => feature_cols.push(i),
            }
        }
        let label_col = label_col.ok_or(DataError::MissingColumn("label"))?;
        if feature_cols.is_empty() {
            return Err(DataError::MissingColumn("features"));
        }
        let d = feature_cols.len();

        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut qids = Vec::new();
        let mut subs = Vec::new();
        for (idx, record) in rdr.records().enumerate() {
            let row = idx + 1;
            let record = record?;
            if record.len() != headers.len() {
                return Err(DataError::RaggedRow {
                    row,
                    expected: headers.len(),
                    found: record.len(),
                });
            }
            for &c in &feature_cols {
                let raw = &record[c];
                let v: f64 = raw.trim().parse().map_err(|_| DataError::NonNumeric {
                    row,
                    column: headers[c].to_string(),
                    value: raw.to_string(),
                })?;
                if !v.is_finite() {
                    return Err(DataError::NonFinite {
                        row,
                        column: headers[c].to_string(),
                        value: raw.to_string(),
                    });
                }
                features.push(v);
            }
            let raw = &record[label_col];
            let label: u32 = raw.trim().parse().map_err(|_| DataError::BadLabel {
                row,
                value: raw.to_string(),
            })?;
            if label == 0 {
                return Err(DataError::BadLabel {
                    row,
                    value: raw.to_string(),
                });
            }
            labels.push(label);
            if let Some(c) = qid_col {
                qids.push(record[c].to_string());
            }
            if let Some(c) = sub_col {
                subs.push(record[c].to_string());
            }
        }
        if labels.is_empty() {
            return Err(DataError::NoRows);
        }
        Self::new(
            features,
            labels,
            d,
            qid_col.map(|_| qids),
            sub_col.map(|_| subs),
        )
    }

    /// Serializes to the same CSV dialect `load_csv` reads. Feature columns
    /// are named `f1..fd`; floats use the shortest round-trip decimal.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for j in 0..self.d {
            let _ = write!(out, "f{},", j + 1);
        }
        out.push_str("label");
        if self.qids.is_some() {
            out.push_str(",qid");
        }
        if self.subclusters.is_some() {
            out.push_str(",subcluster");
        }
        out.push('\n');
        for i in 0..self.n {
            for v in self.row(i) {
                let _ = write!(out, "{},", v);
            }
            let _ = write!(out, "{}", self.labels[i]);
            if let Some(q) = &self.qids {
                let _ = write!(out, ",{}", q[i]);
            }
            if let Some(s) = &self.subclusters {
                let _ = write!(out, ",{}", s[i]);
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// One isotropic Gaussian cluster of the synthetic generator.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ClusterSpec {
    pub mean: [f64; 2],
    pub sigma: f64,
    pub count: usize,
    /// 1-based class label assigned to every point of the cluster.
    pub class: u32,
    /// Sub-cluster provenance tag carried into the `subcluster` column.
    pub tag: String,
}

/// Specification of the synthetic two-cluster-positive dataset.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SynthSpec {
    pub clusters: Vec<ClusterSpec>,
    pub seed: u64,
}

impl Default for SynthSpec {
    /// Positives (class 1) are two well separated modes; negatives (class 2)
    /// sit between them.
    fn default() -> Self {
        SynthSpec {
            clusters: vec![
                ClusterSpec {
                    mean: [-2.0, 2.0],
                    sigma: 0.45,
                    count: 200,
                    class: 1,
                    tag: "blue".into(),
                },
                ClusterSpec {
                    mean: [2.0, -2.0],
                    sigma: 0.45,
                    count: 200,
                    class: 1,
                    tag: "red".into(),
                },
                ClusterSpec {
                    mean: [0.0, 0.0],
                    sigma: 0.45,
                    count: 400,
                    class: 2,
                    tag: "green".into(),
                },
            ],
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.clusters.is_empty() {
            return Err(DataError::BadSpec("no clusters".into()));
        }
        for (i, c) in self.clusters.iter().enumerate() {
            if !c.sigma.is_finite() || c.sigma <= 0.0 {
                return Err(DataError::BadSpec(format!(
                    "cluster {}: sigma must be strictly positive, got {}",
                    i, c.sigma
                )));
            }
            if c.count == 0 {
                return Err(DataError::BadSpec(format!("cluster {}: count must be >= 1", i)));
            }
            if c.class == 0 {
                return Err(DataError::BadSpec(format!("cluster {}: class must be >= 1", i)));
            }
            if c.mean.iter().any(|m| !m.is_finite()) {
                return Err(DataError::BadSpec(format!("cluster {}: non-finite mean", i)));
            }
        }
        Ok(())
    }
}

/// Draws Gaussian samples cluster by cluster. Pure function of the spec:
/// the same spec always yields a bit-identical dataset.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<LabeledDataset, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut tags = Vec::new();
    for c in &spec.clusters {
        let dist_x = Normal::new(c.mean[0], c.sigma).expect("validated sigma");
        let dist_y = Normal::new(c.mean[1], c.sigma).expect("validated sigma");
        for _ in 0..c.count {
            features.push(dist_x.sample(&mut rng));
            features.push(dist_y.sample(&mut rng));
            labels.push(c.class);
            tags.push(c.tag.clone());
        }
    }
    LabeledDataset::new(features, labels, 2, None, Some(tags))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_small_file() {
        let csv = "f1,f2,label\n0.5,1.0,1\n-1.0,2.0,2\n0.0,0.0,1\n";
        let ds = LabeledDataset::from_reader(csv.as_bytes()).unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.d(), 2);
        assert_eq!(ds.k(), 2);
        assert_eq!(ds.labels(), &[1, 2, 1]);
        assert_eq!(ds.row(1), &[-1.0, 2.0]);
    }

    #[test]
    fn empty_file_is_no_rows() {
        let err = LabeledDataset::from_reader("f1,label\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::NoRows));
    }

    #[test]
    fn nan_cell_names_the_row() {
        let csv = "f1,label\n1.0,1\nNaN,2\n";
        let err = LabeledDataset::from_reader(csv.as_bytes()).unwrap_err();
        match err {
            DataError::NonFinite { row, .. } => assert_eq!(row, 2),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn non_numeric_cell_reports_position() {
        let csv = "f1,f2,label\n1.0,x,1\n";
        let err = LabeledDataset::from_reader(csv.as_bytes()).unwrap_err();
        match err {
            DataError::NonNumeric { row, column, .. } => {
                assert_eq!(row, 1);
                assert_eq!(column, "f2");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn zero_label_rejected() {
        let csv = "f1,label\n1.0,0\n";
        assert!(matches!(
            LabeledDataset::from_reader(csv.as_bytes()).unwrap_err(),
            DataError::BadLabel { row: 1, .. }
        ));
    }

    #[test]
    fn ragged_row_rejected() {
        let csv = "f1,f2,label\n1.0,2.0,1\n1.0,1\n";
        assert!(matches!(
            LabeledDataset::from_reader(csv.as_bytes()).unwrap_err(),
            DataError::RaggedRow { row: 2, .. }
        ));
    }

    #[test]
    fn csv_round_trip_is_identity() {
        let ds = generate_synthetic(&SynthSpec::default()).unwrap();
        let back = LabeledDataset::from_reader(ds.to_csv().as_bytes()).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn synthetic_counts_and_determinism() {
        let spec = SynthSpec::default();
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a.n(), 800);
        assert_eq!(a.k(), 2);
        assert_eq!(a, b);
        let counts = a.class_counts();
        assert_eq!(counts, vec![(1, 400), (2, 400)]);
    }

    #[test]
    fn degenerate_sigma_rejected() {
        let mut spec = SynthSpec::default();
        spec.clusters[0].sigma = 0.0;
        assert!(matches!(
            generate_synthetic(&spec).unwrap_err(),
            DataError::BadSpec(_)
        ));
    }
}
