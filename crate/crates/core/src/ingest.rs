//! Dataset loading, validation, and transformation.
//!
//! A dataset is described by a JSON manifest pointing at an atlas CSV,
//! behavior CSVs (one per category), and one connectome CSV per
//! (subject, condition) pair. Connectomes are stored Fisher-z transformed
//! with a zero diagonal; behaviors keep explicit missing entries.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Asymmetry beyond this (on the raw file scale) is a data error rather
/// than float noise.
pub const ASYMMETRY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse {path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    #[error("correlation out of range at {context}: {value} (|r| must be < 1)")]
    CorrelationOutOfRange { context: String, value: f64 },
    #[error("non-finite value at {context}")]
    NonFinite { context: String },
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },
    #[error("matrix for subject {subject} condition {condition} is asymmetric: max |M - M'| = {max_abs} > {tolerance}")]
    Asymmetric {
        subject: String,
        condition: String,
        max_abs: f64,
        tolerance: f64,
    },
    #[error("atlas node ids must be exactly 1..{v}: {detail}")]
    BadAtlas { v: usize, detail: String },
    #[error("unknown network name '{0}' (canonical names are case-sensitive)")]
    UnknownNetwork(String),
    #[error("behavior column '{column}' in category {category} is constant or has fewer than 2 distinct non-missing values")]
    ConstantIndicator { category: String, column: String },
    #[error("subject {subject} is missing condition {condition}")]
    MissingCondition { subject: String, condition: String },
    #[error("duplicate connectome entry for subject {subject} condition {condition}")]
    DuplicateConnectome { subject: String, condition: String },
    #[error("{0}")]
    Invalid(String),
}

/// The ten canonical functional networks of the Shen-268 grouping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Network {
    DefaultMode,
    MedialFrontal,
    FrontoParietal,
    Motor,
    VisualI,
    VisualII,
    VisualAssociation,
    Limbic,
    BasalGanglia,
    Cerebellum,
}

impl Network {
    pub const ALL: [Network; 10] = [
        Network::DefaultMode,
        Network::MedialFrontal,
        Network::FrontoParietal,
        Network::Motor,
        Network::VisualI,
        Network::VisualII,
        Network::VisualAssociation,
        Network::Limbic,
        Network::BasalGanglia,
        Network::Cerebellum,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Network::DefaultMode => "Default Mode",
            Network::MedialFrontal => "Medial Frontal",
            Network::FrontoParietal => "Fronto-parietal",
            Network::Motor => "Motor",
            Network::VisualI => "Visual I",
            Network::VisualII => "Visual II",
            Network::VisualAssociation => "Visual Association",
            Network::Limbic => "Limbic",
            Network::BasalGanglia => "Basal Ganglia",
            Network::Cerebellum => "Cerebellum",
        }
    }

    /// Case-sensitive parse of the canonical spelling.
    pub fn parse(s: &str) -> Result<Network, IngestError> {
        Network::ALL
            .iter()
            .copied()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| IngestError::UnknownNetwork(s.to_string()))
    }
}

impl fmt::Display for Network {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct AtlasEntry {
    pub node_id: usize,
    pub network: Network,
    pub hemisphere: Option<String>,
    pub coords: Option<[f64; 3]>,
}

/// Node-to-network assignment for a V-node parcellation.
#[derive(Debug, Clone)]
pub struct Atlas {
    entries: Vec<AtlasEntry>,
}

impl Atlas {
    /// Entries must cover node ids 1..=V exactly once each.
    pub fn new(mut entries: Vec<AtlasEntry>) -> Result<Atlas, IngestError> {
        let v = entries.len();
        entries.sort_by_key(|e| e.node_id);
        for (i, e) in entries.iter().enumerate() {
            if e.node_id != i + 1 {
                return Err(IngestError::BadAtlas {
                    v,
                    detail: format!("expected node_id {} at position {}, found {}", i + 1, i, e.node_id),
                });
            }
        }
        Ok(Atlas { entries })
    }

    pub fn v(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[AtlasEntry] {
        &self.entries
    }

    /// Network of a 1-based node id.
    pub fn network_of(&self, node_id: usize) -> Option<Network> {
        self.entries.get(node_id.checked_sub(1)?).map(|e| e.network)
    }
}

/// One subject's Fisher-z connectivity matrix under one condition.
#[derive(Debug, Clone)]
pub struct Connectome {
    pub subject_id: String,
    pub condition: String,
    pub matrix: DMatrix<f64>,
}

impl Connectome {
    /// Validates symmetry/finiteness, zeroes the diagonal, and averages
    /// away sub-tolerance asymmetry. `pearson_scale` additionally bounds
    /// entries to (-1, 1) and applies arctanh.
    pub fn from_raw(
        subject_id: &str,
        condition: &str,
        raw: DMatrix<f64>,
        pearson_scale: bool,
    ) -> Result<Connectome, IngestError> {
        let v = raw.nrows();
        if raw.ncols() != v {
            return Err(IngestError::DimensionMismatch {
                context: format!("connectome {subject_id}/{condition}"),
                expected: v,
                found: raw.ncols(),
            });
        }
        let mut max_abs = 0.0f64;
        for i in 0..v {
            for j in (i + 1)..v {
                let d = (raw[(i, j)] - raw[(j, i)]).abs();
                if d > max_abs {
                    max_abs = d;
                }
            }
        }
        if max_abs > ASYMMETRY_TOLERANCE {
            return Err(IngestError::Asymmetric {
                subject: subject_id.to_string(),
                condition: condition.to_string(),
                max_abs,
                tolerance: ASYMMETRY_TOLERANCE,
            });
        }
        let mut m = raw;
        for i in 0..v {
            for j in 0..v {
                if i == j {
                    continue;
                }
                let cell = m[(i, j)];
                let context = format!("connectome {subject_id}/{condition} cell ({},{})", i + 1, j + 1);
                if !cell.is_finite() {
                    return Err(IngestError::NonFinite { context });
                }
                if pearson_scale {
                    m[(i, j)] = fisher_z_at(cell, &context)?;
                }
            }
        }
        // symmetrize and zero the diagonal
        for i in 0..v {
            m[(i, i)] = 0.0;
            for j in (i + 1)..v {
                let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = avg;
                m[(j, i)] = avg;
            }
        }
        Ok(Connectome {
            subject_id: subject_id.to_string(),
            condition: condition.to_string(),
            matrix: m,
        })
    }
}

/// Standardization scale of one indicator: (mean, sd) on the raw scale.
pub type IndicatorScale = (f64, f64);

/// Subjects x indicators table for one behavior category. Missing entries
/// are NaN and must be checked through [`BehaviorPanel::is_missing`].
#[derive(Debug, Clone)]
pub struct BehaviorPanel {
    pub category: String,
    pub subject_ids: Vec<String>,
    pub indicators: Vec<String>,
    pub values: DMatrix<f64>,
    /// Per-indicator (mean, sd) recorded when the panel was standardized.
    pub scaling: Option<Vec<IndicatorScale>>,
}

impl BehaviorPanel {
    pub fn n_subjects(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn n_indicators(&self) -> usize {
        self.indicators.len()
    }

    pub fn is_missing(&self, subject: usize, indicator: usize) -> bool {
        self.values[(subject, indicator)].is_nan()
    }

    pub fn row_of(&self, subject_id: &str) -> Option<usize> {
        self.subject_ids.iter().position(|s| s == subject_id)
    }

    /// Returns a copy with the given subjects' rows fully masked (missing).
    pub fn with_masked_subjects(&self, masked: &[usize]) -> BehaviorPanel {
        let mut out = self.clone();
        for &row in masked {
            for p in 0..out.n_indicators() {
                out.values[(row, p)] = f64::NAN;
            }
        }
        out
    }
}

/// Fisher z-transformation of a single correlation.
pub fn fisher_z(r: f64) -> Result<f64, IngestError> {
    fisher_z_at(r, "input")
}

fn fisher_z_at(r: f64, context: &str) -> Result<f64, IngestError> {
    if !r.is_finite() {
        return Err(IngestError::NonFinite {
            context: context.to_string(),
        });
    }
    if r.abs() >= 1.0 {
        return Err(IngestError::CorrelationOutOfRange {
            context: context.to_string(),
            value: r,
        });
    }
    Ok(r.atanh())
}

/// Column-wise z-scoring over non-missing entries (sample sd), recording
/// the (mean, sd) scale for inverse transforming predictions.
pub fn standardize_behaviors(panel: &BehaviorPanel) -> Result<BehaviorPanel, IngestError> {
    let n = panel.n_subjects();
    let p = panel.n_indicators();
    let mut values = panel.values.clone();
    let mut scaling = Vec::with_capacity(p);
    for col in 0..p {
        let obs: Vec<f64> = (0..n)
            .map(|i| panel.values[(i, col)])
            .filter(|x| !x.is_nan())
            .collect();
        let distinct = {
            let mut v = obs.clone();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v.dedup();
            v.len()
        };
        if distinct < 2 {
            return Err(IngestError::ConstantIndicator {
                category: panel.category.clone(),
                column: panel.indicators[col].clone(),
            });
        }
        let m = obs.iter().sum::<f64>() / obs.len() as f64;
        let var = obs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (obs.len() - 1) as f64;
        let sd = var.sqrt();
        if sd <= 0.0 {
            return Err(IngestError::ConstantIndicator {
                category: panel.category.clone(),
                column: panel.indicators[col].clone(),
            });
        }
        for i in 0..n {
            let x = values[(i, col)];
            if !x.is_nan() {
                values[(i, col)] = (x - m) / sd;
            }
        }
        scaling.push((m, sd));
    }
    Ok(BehaviorPanel {
        category: panel.category.clone(),
        subject_ids: panel.subject_ids.clone(),
        indicators: panel.indicators.clone(),
        values,
        scaling: Some(scaling),
    })
}

/// Fully loaded and validated study data.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub v: usize,
    pub conditions: Vec<String>,
    /// Keyed by (subject_id, condition).
    pub connectomes: BTreeMap<(String, String), Connectome>,
    pub behaviors: BTreeMap<String, BehaviorPanel>,
    pub atlas: Atlas,
}

impl Dataset {
    pub fn connectome(&self, subject: &str, condition: &str) -> Option<&Connectome> {
        self.connectomes.get(&(subject.to_string(), condition.to_string()))
    }

    /// Sorted distinct subjects that have a connectome under `condition`.
    pub fn subjects_with_condition(&self, condition: &str) -> Vec<String> {
        self.connectomes
            .keys()
            .filter(|(_, c)| c == condition)
            .map(|(s, _)| s.clone())
            .collect()
    }

    /// Appends per-subject mean connectomes labeled `Average` over the
    /// given source conditions. Every involved subject must have all of
    /// them.
    pub fn add_average_condition(&mut self, source_conditions: &[String]) -> Result<(), IngestError> {
        let averaged = average_condition(self, source_conditions)?;
        for c in averaged {
            self.connectomes
                .insert((c.subject_id.clone(), "Average".to_string()), c);
        }
        if !self.conditions.iter().any(|c| c == "Average") {
            self.conditions.push("Average".to_string());
        }
        Ok(())
    }
}

/// Elementwise mean of each subject's Fisher-z matrices across the source
/// conditions, labeled "Average".
pub fn average_condition(
    dataset: &Dataset,
    source_conditions: &[String],
) -> Result<Vec<Connectome>, IngestError> {
    if source_conditions.is_empty() {
        return Err(IngestError::Invalid("no source conditions given".into()));
    }
    let mut subjects: Vec<String> = dataset
        .connectomes
        .keys()
        .filter(|(_, c)| source_conditions.contains(c))
        .map(|(s, _)| s.clone())
        .collect();
    subjects.sort();
    subjects.dedup();
    let mut out = Vec::with_capacity(subjects.len());
    for s in &subjects {
        let mut acc = DMatrix::<f64>::zeros(dataset.v, dataset.v);
        for cond in source_conditions {
            let c = dataset
                .connectome(s, cond)
                .ok_or_else(|| IngestError::MissingCondition {
                    subject: s.clone(),
                    condition: cond.clone(),
                })?;
            acc += &c.matrix;
        }
        acc /= source_conditions.len() as f64;
        out.push(Connectome {
            subject_id: s.clone(),
            condition: "Average".to_string(),
            matrix: acc,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// manifest + file loading
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BehaviorRef {
    pub category: String,
    pub path: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConnectomeRef {
    pub subject: String,
    pub condition: String,
    pub path: String,
}

/// On-disk description of a dataset. All paths are relative to the
/// manifest file's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    #[serde(rename = "V")]
    pub v: usize,
    /// "pearson" (raw correlations, transformed on load) or "fisher_z".
    pub scale: String,
    pub atlas: String,
    pub behaviors: Vec<BehaviorRef>,
    pub connectomes: Vec<ConnectomeRef>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads and validates a dataset from a manifest file.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset, IngestError> {
    let text = std::fs::read_to_string(manifest_path).map_err(io_err(manifest_path))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| IngestError::Parse {
        path: manifest_path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let pearson = match manifest.scale.as_str() {
        "pearson" => true,
        "fisher_z" => false,
        other => {
            return Err(IngestError::Parse {
                path: manifest_path.to_path_buf(),
                detail: format!("unknown scale '{other}' (expected pearson|fisher_z)"),
            })
        }
    };
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let atlas = load_atlas_csv(&base.join(&manifest.atlas))?;
    if atlas.v() != manifest.v {
        return Err(IngestError::DimensionMismatch {
            context: "atlas node count vs manifest V".into(),
            expected: manifest.v,
            found: atlas.v(),
        });
    }

    let mut behaviors = BTreeMap::new();
    for b in &manifest.behaviors {
        let panel = load_behavior_csv(&base.join(&b.path), &b.category)?;
        behaviors.insert(b.category.clone(), panel);
    }

    let mut connectomes = BTreeMap::new();
    let mut conditions: Vec<String> = Vec::new();
    for c in &manifest.connectomes {
        let raw = load_matrix_csv(&base.join(&c.path), manifest.v)?;
        let conn = Connectome::from_raw(&c.subject, &c.condition, raw, pearson)?;
        let key = (c.subject.clone(), c.condition.clone());
        if connectomes.insert(key, conn).is_some() {
            return Err(IngestError::DuplicateConnectome {
                subject: c.subject.clone(),
                condition: c.condition.clone(),
            });
        }
        if !conditions.contains(&c.condition) {
            conditions.push(c.condition.clone());
        }
    }

    Ok(Dataset {
        v: manifest.v,
        conditions,
        connectomes,
        behaviors,
        atlas,
    })
}

/// V x V headerless CSV of decimal floats.
pub fn load_matrix_csv(path: &Path, v: usize) -> Result<DMatrix<f64>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| IngestError::Parse {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(v);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| IngestError::Parse {
            path: path.to_path_buf(),
            detail: format!("row {}: {e}", i + 1),
        })?;
        let row: Result<Vec<f64>, _> = rec
            .iter()
            .map(|s| {
                s.parse::<f64>().map_err(|_| IngestError::Parse {
                    path: path.to_path_buf(),
                    detail: format!("row {}: bad float '{s}'", i + 1),
                })
            })
            .collect();
        rows.push(row?);
    }
    if rows.len() != v {
        return Err(IngestError::DimensionMismatch {
            context: format!("{} row count", path.display()),
            expected: v,
            found: rows.len(),
        });
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != v {
            return Err(IngestError::DimensionMismatch {
                context: format!("{} row {} column count", path.display(), i + 1),
                expected: v,
                found: r.len(),
            });
        }
    }
    Ok(DMatrix::from_fn(v, v, |i, j| rows[i][j]))
}

/// CSV with header `subject_id,<indicator>...`; empty cells are missing.
pub fn load_behavior_csv(path: &Path, category: &str) -> Result<BehaviorPanel, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| IngestError::Parse {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
    let headers = rdr
        .headers()
        .map_err(|e| IngestError::Parse {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?
        .clone();
    if headers.len() < 2 || headers.get(0) != Some("subject_id") {
        return Err(IngestError::Parse {
            path: path.to_path_buf(),
            detail: "expected header 'subject_id,<indicator>...'".into(),
        });
    }
    let indicators: Vec<String> = headers.iter().skip(1).map(|s| s.to_string()).collect();
    let mut subject_ids = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| IngestError::Parse {
            path: path.to_path_buf(),
            detail: format!("row {}: {e}", i + 2),
        })?;
        if rec.len() != indicators.len() + 1 {
            return Err(IngestError::DimensionMismatch {
                context: format!("{} row {}", path.display(), i + 2),
                expected: indicators.len() + 1,
                found: rec.len(),
            });
        }
        subject_ids.push(rec[0].to_string());
        let mut row = Vec::with_capacity(indicators.len());
        for (j, cell) in rec.iter().skip(1).enumerate() {
            if cell.is_empty() {
                row.push(f64::NAN);
            } else {
                let x = cell.parse::<f64>().map_err(|_| IngestError::Parse {
                    path: path.to_path_buf(),
                    detail: format!("row {} column {}: bad float '{cell}'", i + 2, j + 2),
                })?;
                if !x.is_finite() {
                    return Err(IngestError::NonFinite {
                        context: format!("{} row {} column {}", path.display(), i + 2, j + 2),
                    });
                }
                row.push(x);
            }
        }
        rows.push(row);
    }
    let n = subject_ids.len();
    let p = indicators.len();
    let values = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    Ok(BehaviorPanel {
        category: category.to_string(),
        subject_ids,
        indicators,
        values,
        scaling: None,
    })
}

/// CSV with header `node_id,network[,hemisphere,x,y,z]`.
pub fn load_atlas_csv(path: &Path) -> Result<Atlas, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| IngestError::Parse {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
    let mut entries = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| IngestError::Parse {
            path: path.to_path_buf(),
            detail: format!("row {}: {e}", i + 2),
        })?;
        if rec.len() < 2 {
            return Err(IngestError::Parse {
                path: path.to_path_buf(),
                detail: format!("row {}: need at least node_id,network", i + 2),
            });
        }
        let node_id: usize = rec[0].parse().map_err(|_| IngestError::Parse {
            path: path.to_path_buf(),
            detail: format!("row {}: bad node_id '{}'", i + 2, &rec[0]),
        })?;
        let network = Network::parse(&rec[1])?;
        let hemisphere = rec.get(2).filter(|s| !s.is_empty()).map(|s| s.to_string());
        let coords = if rec.len() >= 6 && (3..6).all(|k| !rec[k].is_empty()) {
            let parse = |k: usize| -> Result<f64, IngestError> {
                rec[k].parse::<f64>().map_err(|_| IngestError::Parse {
                    path: path.to_path_buf(),
                    detail: format!("row {}: bad coordinate '{}'", i + 2, &rec[k]),
                })
            };
            Some([parse(3)?, parse(4)?, parse(5)?])
        } else {
            None
        };
        entries.push(AtlasEntry {
            node_id,
            network,
            hemisphere,
            coords,
        });
    }
    Atlas::new(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn panel(values: &[&[f64]]) -> BehaviorPanel {
        let n = values.len();
        let p = values[0].len();
        BehaviorPanel {
            category: "cat".into(),
            subject_ids: (0..n).map(|i| format!("s{i}")).collect(),
            indicators: (0..p).map(|j| format!("ind{j}")).collect(),
            values: DMatrix::from_fn(n, p, |i, j| values[i][j]),
            scaling: None,
        }
    }

    #[test]
    fn fisher_z_values() {
        assert_eq!(fisher_z(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(fisher_z(0.5).unwrap(), 0.5493061443340548, epsilon = 1e-12);
        assert_abs_diff_eq!(fisher_z(-0.9).unwrap(), -1.4722194895832204, epsilon = 1e-12);
    }

    #[test]
    fn fisher_z_domain_error() {
        assert!(fisher_z(1.0).is_err());
        assert!(fisher_z(-1.2).is_err());
        assert!(fisher_z(f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn fisher_z_tanh_roundtrip(z in -5.0f64..5.0) {
            let r = z.tanh();
            prop_assert!((fisher_z(r).unwrap() - z).abs() < 1e-10);
        }
    }

    #[test]
    fn standardize_hand_case() {
        let p = panel(&[&[1.0], &[2.0], &[3.0]]);
        let s = standardize_behaviors(&p).unwrap();
        assert_abs_diff_eq!(s.values[(0, 0)], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.values[(1, 0)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.values[(2, 0)], 1.0, epsilon = 1e-12);
        let (m, sd) = s.scaling.as_ref().unwrap()[0];
        assert_abs_diff_eq!(m, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sd, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn standardize_idempotent() {
        let p = panel(&[&[-1.0], &[0.0], &[1.0]]);
        let s = standardize_behaviors(&p).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(s.values[(i, 0)], p.values[(i, 0)], epsilon = 1e-8);
        }
    }

    #[test]
    fn standardize_constant_column_errors() {
        let p = panel(&[&[5.0], &[5.0], &[5.0]]);
        let err = standardize_behaviors(&p).unwrap_err();
        assert!(err.to_string().contains("ind0"));
    }

    #[test]
    fn standardize_with_missing() {
        let p = panel(&[&[1.0], &[f64::NAN], &[3.0]]);
        let s = standardize_behaviors(&p).unwrap();
        assert!(s.values[(1, 0)].is_nan());
        // mean 2, sample sd sqrt(2)
        assert_abs_diff_eq!(s.values[(0, 0)], -1.0 / 2.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn connectome_rejects_asymmetry_above_tolerance() {
        let mut m = DMatrix::<f64>::zeros(3, 3);
        m[(0, 1)] = 0.3;
        m[(1, 0)] = 0.3 + 1e-4;
        assert!(matches!(
            Connectome::from_raw("s", "c", m, false),
            Err(IngestError::Asymmetric { .. })
        ));
    }

    #[test]
    fn connectome_symmetrizes_tiny_asymmetry() {
        let mut m = DMatrix::<f64>::zeros(3, 3);
        m[(0, 1)] = 0.30;
        m[(1, 0)] = 0.30 + 1e-8;
        let c = Connectome::from_raw("s", "c", m, false).unwrap();
        let expect = 0.5 * (0.30 + 0.30 + 1e-8);
        assert_abs_diff_eq!(c.matrix[(0, 1)], expect, epsilon = 1e-15);
        assert_abs_diff_eq!(c.matrix[(1, 0)], expect, epsilon = 1e-15);
    }

    #[test]
    fn connectome_pearson_bound() {
        let mut m = DMatrix::<f64>::zeros(2, 2);
        m[(0, 1)] = 1.2;
        m[(1, 0)] = 1.2;
        assert!(matches!(
            Connectome::from_raw("s", "c", m, true),
            Err(IngestError::CorrelationOutOfRange { .. })
        ));
    }

    #[test]
    fn connectome_diagonal_zeroed() {
        let mut m = DMatrix::<f64>::zeros(2, 2);
        m[(0, 0)] = 9.0;
        m[(1, 1)] = 9.0;
        m[(0, 1)] = 0.5;
        m[(1, 0)] = 0.5;
        let c = Connectome::from_raw("s", "c", m, false).unwrap();
        assert_eq!(c.matrix[(0, 0)], 0.0);
        assert_eq!(c.matrix[(1, 1)], 0.0);
    }

    #[test]
    fn network_parse_is_case_sensitive() {
        assert!(Network::parse("Fronto-parietal").is_ok());
        assert!(Network::parse("fronto-parietal").is_err());
        assert!(Network::parse("FrontoParietal").is_err());
    }

    #[test]
    fn atlas_requires_contiguous_ids() {
        let entries = vec![
            AtlasEntry { node_id: 1, network: Network::Motor, hemisphere: None, coords: None },
            AtlasEntry { node_id: 3, network: Network::Motor, hemisphere: None, coords: None },
        ];
        assert!(Atlas::new(entries).is_err());
    }

    fn toy_dataset() -> Dataset {
        let atlas = Atlas::new(
            (1..=2)
                .map(|i| AtlasEntry { node_id: i, network: Network::Motor, hemisphere: None, coords: None })
                .collect(),
        )
        .unwrap();
        let mk = |s: &str, c: &str, x: f64| {
            let mut m = DMatrix::<f64>::zeros(2, 2);
            m[(0, 1)] = x;
            m[(1, 0)] = x;
            Connectome::from_raw(s, c, m, false).unwrap()
        };
        let mut connectomes = BTreeMap::new();
        connectomes.insert(("a".into(), "Rest1".into()), mk("a", "Rest1", 0.2));
        connectomes.insert(("a".into(), "SST".into()), mk("a", "SST", 0.4));
        connectomes.insert(("b".into(), "Rest1".into()), mk("b", "Rest1", 0.1));
        connectomes.insert(("b".into(), "SST".into()), mk("b", "SST", 0.1));
        Dataset {
            v: 2,
            conditions: vec!["Rest1".into(), "SST".into()],
            connectomes,
            behaviors: BTreeMap::new(),
            atlas,
        }
    }

    #[test]
    fn average_condition_means() {
        let d = toy_dataset();
        let avg = average_condition(&d, &["Rest1".into(), "SST".into()]).unwrap();
        assert_eq!(avg.len(), 2);
        let a = avg.iter().find(|c| c.subject_id == "a").unwrap();
        assert_abs_diff_eq!(a.matrix[(0, 1)], 0.3, epsilon = 1e-15);
        let b = avg.iter().find(|c| c.subject_id == "b").unwrap();
        assert_abs_diff_eq!(b.matrix[(0, 1)], 0.1, epsilon = 1e-15);
    }

    #[test]
    fn average_condition_missing_errors() {
        let mut d = toy_dataset();
        d.connectomes.remove(&("b".to_string(), "SST".to_string()));
        let err = average_condition(&d, &["Rest1".into(), "SST".into()]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('b') && msg.contains("SST"), "{msg}");
    }

    #[test]
    fn load_dataset_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path();
        std::fs::write(
            base.join("atlas.csv"),
            "node_id,network\n1,Motor\n2,Limbic\n3,Motor\n4,Default Mode\n",
        )
        .unwrap();
        std::fs::write(base.join("beh.csv"), "subject_id,f1,f2\na,1.0,\nb,2.0,0.5\nc,3.0,1.5\n").unwrap();
        let m = "0,0.1,0.2,0.3\n0.1,0,0.4,0.5\n0.2,0.4,0,0.6\n0.3,0.5,0.6,0\n";
        for s in ["a", "b"] {
            for c in ["Rest1", "SST"] {
                std::fs::write(base.join(format!("{s}_{c}.csv")), m).unwrap();
            }
        }
        let manifest = serde_json::json!({
            "version": 1,
            "V": 4,
            "scale": "pearson",
            "atlas": "atlas.csv",
            "behaviors": [{"category": "cat", "path": "beh.csv"}],
            "connectomes": [
                {"subject": "a", "condition": "Rest1", "path": "a_Rest1.csv"},
                {"subject": "a", "condition": "SST", "path": "a_SST.csv"},
                {"subject": "b", "condition": "Rest1", "path": "b_Rest1.csv"},
                {"subject": "b", "condition": "SST", "path": "b_SST.csv"}
            ]
        });
        std::fs::write(base.join("manifest.json"), manifest.to_string()).unwrap();

        let d = load_dataset(&base.join("manifest.json")).unwrap();
        assert_eq!(d.connectomes.len(), 4);
        assert_eq!(d.v, 4);
        assert_eq!(d.conditions, vec!["Rest1".to_string(), "SST".to_string()]);
        // pearson scale was arctanh'd
        let c = d.connectome("a", "Rest1").unwrap();
        assert_abs_diff_eq!(c.matrix[(0, 1)], 0.1f64.atanh(), epsilon = 1e-12);
        // missing behavior cell is NaN
        let p = &d.behaviors["cat"];
        assert!(p.is_missing(0, 1));
        assert!(!p.is_missing(1, 1));

        // determinism: loading twice gives bit-identical matrices
        let d2 = load_dataset(&base.join("manifest.json")).unwrap();
        for (k, c1) in &d.connectomes {
            let c2 = &d2.connectomes[k];
            assert_eq!(c1.matrix.as_slice(), c2.matrix.as_slice());
        }
    }

    #[test]
    fn load_dataset_rejects_out_of_range_pearson() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path();
        std::fs::write(base.join("atlas.csv"), "node_id,network\n1,Motor\n2,Motor\n").unwrap();
        std::fs::write(base.join("m.csv"), "0,1.2\n1.2,0\n").unwrap();
        let manifest = serde_json::json!({
            "version": 1, "V": 2, "scale": "pearson", "atlas": "atlas.csv",
            "behaviors": [],
            "connectomes": [{"subject": "a", "condition": "Rest1", "path": "m.csv"}]
        });
        std::fs::write(base.join("manifest.json"), manifest.to_string()).unwrap();
        assert!(matches!(
            load_dataset(&base.join("manifest.json")),
            Err(IngestError::CorrelationOutOfRange { .. })
        ));
    }

    #[test]
    fn atlas_partitions_nodes() {
        let a = Atlas::new(
            (1..=5)
                .map(|i| AtlasEntry {
                    node_id: i,
                    network: Network::ALL[i % 10],
                    hemisphere: None,
                    coords: None,
                })
                .collect(),
        )
        .unwrap();
        for node in 1..=5 {
            assert!(a.network_of(node).is_some());
        }
        assert!(a.network_of(6).is_none());
        assert!(a.network_of(0).is_none());
    }
}
