//! Run-directory assembly: output CSV/JSON writers, a reproducibility
//! manifest with content digests, and dataset file emission.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{BiomarkerSet, ConditionEffectModel, RegressionResult};
use crate::ingest::{Atlas, Dataset, DatasetManifest, Network};
use crate::model::{PosteriorDraws, PosteriorSummary, SimulatedTruth};
use crate::predict::{AccuracyRecord, PredictionRow};

/// Exact legend line from the regression tables.
pub const SIGNIF_LEGEND: &str = "Signif. codes: 0 '***' 0.001 '**' 0.01 '*' 0.05 '.' 0.1 ' ' 1";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("digest mismatch for {path}: manifest {expected}, file {found}")]
    DigestMismatch {
        path: String,
        expected: String,
        found: String,
    },
    #[error("output listed in manifest is missing: {0}")]
    MissingOutput(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Reproducibility record for one run directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub config: serde_json::Value,
    pub input_digests: BTreeMap<String, String>,
    pub split_hash: Option<String>,
    pub outputs: Vec<OutputFile>,
    pub warnings: Vec<String>,
    /// Wall-clock seconds per stage; excluded from all digests.
    pub timings: BTreeMap<String, f64>,
}

/// Everything a run wants persisted. Empty sections are skipped.
#[derive(Debug, Clone, Default)]
pub struct RunOutputs {
    pub config: serde_json::Value,
    pub input_digests: BTreeMap<String, String>,
    pub split_hash: Option<String>,
    pub predictions: Vec<PredictionRow>,
    pub accuracy: Vec<AccuracyRecord>,
    /// (condition, category, summary averaged over repeats)
    pub summaries: Vec<(String, String, PosteriorSummary)>,
    /// (condition, category, chains)
    pub traces: Vec<(String, String, Vec<PosteriorDraws>)>,
    pub biomarkers: Vec<BiomarkerSet>,
    /// (condition-or-Rest/Task label, category, network counts)
    pub spider: Vec<(String, String, BTreeMap<Network, f64>)>,
    pub condition_effects: Vec<ConditionEffectModel>,
    /// (category, response label, result)
    pub label_effects: Vec<(String, String, RegressionResult)>,
    pub atlas: Option<Atlas>,
    pub warnings: Vec<String>,
    pub timings: BTreeMap<String, f64>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<String, ReportError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(sha256_hex(&bytes))
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

struct Emitter<'a> {
    dir: &'a Path,
    outputs: Vec<OutputFile>,
}

impl<'a> Emitter<'a> {
    fn write(&mut self, name: &str, content: &str) -> Result<(), ReportError> {
        let path = self.dir.join(name);
        std::fs::write(&path, content).map_err(io_err(&path))?;
        self.outputs.push(OutputFile {
            path: name.to_string(),
            sha256: sha256_hex(content.as_bytes()),
            bytes: content.len() as u64,
        });
        Ok(())
    }
}

/// Writes all outputs plus `run_manifest.json`. Overwrites idempotently.
pub fn emit_run(results: &RunOutputs, out_dir: &Path) -> Result<RunManifest, ReportError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut em = Emitter {
        dir: out_dir,
        outputs: Vec::new(),
    };

    if !results.predictions.is_empty() {
        em.write("predictions.csv", &predictions_csv(&results.predictions))?;
    }
    if !results.accuracy.is_empty() {
        em.write("accuracy.csv", &accuracy_csv(&results.accuracy))?;
        em.write("accuracy_mean.csv", &accuracy_mean_csv(&results.accuracy))?;
    }
    for (cond, cat, summary) in &results.summaries {
        let name = format!("summary_{}_{}.csv", sanitize(cond), sanitize(cat));
        em.write(&name, &summary_csv(summary))?;
    }
    for (cond, cat, chains) in &results.traces {
        let name = format!("trace_{}_{}.csv", sanitize(cond), sanitize(cat));
        em.write(&name, &trace_csv(chains))?;
    }
    if !results.biomarkers.is_empty() {
        let atlas = results.atlas.as_ref();
        em.write("biomarkers.csv", &biomarkers_csv(&results.biomarkers, atlas))?;
    }
    if !results.spider.is_empty() {
        em.write("spider.csv", &spider_csv(&results.spider))?;
    }
    for model in &results.condition_effects {
        let base = format!("condition_effects_{}", sanitize(&model.category));
        em.write(&format!("{base}.json"), &serde_json::to_string_pretty(model)?)?;
        em.write(
            &format!("{base}.txt"),
            &render_regression_text(
                &format!(
                    "Prediction accuracy on condition dummies (reference {}), category {}",
                    model.reference_condition, model.category
                ),
                &model.result,
            ),
        )?;
    }
    for (cat, response, result) in &results.label_effects {
        let base = format!("label_effects_{}_{}", sanitize(cat), sanitize(response));
        em.write(&format!("{base}.json"), &serde_json::to_string_pretty(result)?)?;
        em.write(
            &format!("{base}.txt"),
            &render_regression_text(
                &format!("Covariance estimates ({response}) on network dummies (reference Default Mode), category {cat}"),
                result,
            ),
        )?;
    }
    if let Some(atlas) = &results.atlas {
        em.write("atlas.csv", &atlas_csv(atlas))?;
    }

    let manifest = RunManifest {
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        config: results.config.clone(),
        input_digests: results.input_digests.clone(),
        split_hash: results.split_hash.clone(),
        outputs: em.outputs,
        warnings: results.warnings.clone(),
        timings: results.timings.clone(),
    };
    let manifest_path = out_dir.join("run_manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)
        .map_err(io_err(&manifest_path))?;
    Ok(manifest)
}

/// Recomputes every output digest recorded in the manifest.
pub fn verify_run(out_dir: &Path) -> Result<RunManifest, ReportError> {
    let manifest_path = out_dir.join("run_manifest.json");
    let text = std::fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: RunManifest = serde_json::from_str(&text)?;
    for out in &manifest.outputs {
        let path = out_dir.join(&out.path);
        if !path.exists() {
            return Err(ReportError::MissingOutput(out.path.clone()));
        }
        let found = digest_file(&path)?;
        if found != out.sha256 {
            return Err(ReportError::DigestMismatch {
                path: out.path.clone(),
                expected: out.sha256.clone(),
                found,
            });
        }
    }
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// CSV renderers
// ---------------------------------------------------------------------------

pub fn predictions_csv(rows: &[PredictionRow]) -> String {
    let mut s = String::from("condition,category,indicator,repeat,subject_id,predicted,observed,method\n");
    for r in rows {
        let obs = r.observed.map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.condition, r.category, r.indicator, r.repeat_index, r.subject_id, r.predicted, obs, r.method
        ));
    }
    s
}

pub fn accuracy_csv(records: &[AccuracyRecord]) -> String {
    let mut s = String::from("condition,category,indicator,repeat,r,method\n");
    for r in records {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.condition, r.category, r.indicator, r.repeat_index, r.r, r.method
        ));
    }
    s
}

pub fn accuracy_mean_csv(records: &[AccuracyRecord]) -> String {
    let mut s = String::from("condition,category,indicator,method,r_mean,repeats\n");
    for (cond, cat, ind, method, mean, k) in crate::predict::accuracy_means(records) {
        s.push_str(&format!("{cond},{cat},{ind},{method},{mean},{k}\n"));
    }
    s
}

pub fn summary_csv(summary: &PosteriorSummary) -> String {
    let mut s = String::from("node_id,cov_mean,cov_sd,ci05,ci95\n");
    for n in &summary.nodes {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            n.node_id, n.cov_mean, n.cov_sd, n.ci05, n.ci95
        ));
    }
    s
}

/// Long-format trace: one row per (chain, retained iteration, node).
pub fn trace_csv(chains: &[PosteriorDraws]) -> String {
    let mut s = String::from("chain,iter,log_joint,node_id,cov_draw\n");
    for c in chains {
        for (i, cross) in c.cross.iter().enumerate() {
            let lj = c.log_joint[i];
            for node in 0..c.v {
                s.push_str(&format!(
                    "{},{},{},{},{}\n",
                    c.chain_id,
                    i + 1,
                    lj,
                    node + 1,
                    cross[node]
                ));
            }
        }
    }
    s
}

pub fn biomarkers_csv(sets: &[BiomarkerSet], atlas: Option<&Atlas>) -> String {
    let mut s = String::from("condition,category,rank,sign,node_id,network,cov_mean\n");
    for set in sets {
        for (sign, nodes) in [("positive", &set.positive), ("negative", &set.negative)] {
            for (rank, node) in nodes.iter().enumerate() {
                let network = atlas
                    .and_then(|a| a.network_of(*node))
                    .map(|n| n.as_str().to_string())
                    .unwrap_or_default();
                s.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    set.condition,
                    set.category,
                    rank + 1,
                    sign,
                    node,
                    network,
                    set.values.get(node).copied().unwrap_or(f64::NAN)
                ));
            }
        }
    }
    s
}

pub fn spider_csv(entries: &[(String, String, BTreeMap<Network, f64>)]) -> String {
    let mut s = String::from("condition,category,network,count\n");
    for (cond, cat, counts) in entries {
        for net in Network::ALL {
            let c = counts.get(&net).copied().unwrap_or(0.0);
            s.push_str(&format!("{cond},{cat},{},{c}\n", net.as_str()));
        }
    }
    s
}

pub fn atlas_csv(atlas: &Atlas) -> String {
    let mut s = String::from("node_id,network,hemisphere,x,y,z\n");
    for e in atlas.entries() {
        let hemi = e.hemisphere.clone().unwrap_or_default();
        let coords = e
            .coords
            .map(|c| format!("{},{},{}", c[0], c[1], c[2]))
            .unwrap_or_else(|| ",,".to_string());
        s.push_str(&format!("{},{},{},{}\n", e.node_id, e.network.as_str(), hemi, coords));
    }
    s
}

// ---------------------------------------------------------------------------
// text rendering
// ---------------------------------------------------------------------------

fn format_p(p: f64) -> String {
    if p < 2e-16 {
        "< 2e-16".to_string()
    } else {
        format!("{p:.6}")
    }
}

/// Human-readable regression table in the style of the study's supplements.
pub fn render_regression_text(title: &str, result: &RegressionResult) -> String {
    let mut s = String::new();
    s.push_str(title);
    s.push_str("\n\nCoefficients:\n");
    let width = result
        .coefficients
        .iter()
        .map(|c| c.term.len())
        .max()
        .unwrap_or(8)
        .max(8);
    s.push_str(&format!(
        "{:width$}  {:>10} {:>11} {:>8} {:>9}\n",
        "Term", "Estimate", "Std. Error", "t value", "Pr(>|t|)"
    ));
    for c in &result.coefficients {
        s.push_str(&format!(
            "{:width$}  {:>10.6} {:>11.6} {:>8.3} {:>9} {}\n",
            c.term,
            c.estimate,
            c.std_error,
            c.t_value,
            format_p(c.p_value),
            c.sig_code
        ));
    }
    s.push_str("---\n");
    s.push_str(SIGNIF_LEGEND);
    s.push('\n');
    s.push_str("Standard errors in parentheses in the source tables; shown in their own column here.\n");
    match (result.f_statistic, result.f_p_value) {
        (Some(f), Some(p)) => s.push_str(&format!(
            "R-squared: {:.6}   F = {:.4} (p {})   n = {}, residual df = {}\n",
            result.r_squared,
            f,
            format_p(p),
            result.n,
            result.residual_df
        )),
        _ => s.push_str(&format!(
            "R-squared: {:.6}   n = {}, residual df = {}\n",
            result.r_squared, result.n, result.residual_df
        )),
    }
    s
}

// ---------------------------------------------------------------------------
// dataset emission (used by the simulate command)
// ---------------------------------------------------------------------------

/// Writes a dataset as manifest + CSV files (Fisher-z scale), plus the
/// ground truth when given. Returns the manifest path.
pub fn write_dataset(
    dataset: &Dataset,
    truth: Option<&SimulatedTruth>,
    dir: &Path,
) -> Result<PathBuf, ReportError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;

    let atlas_name = "atlas.csv";
    write_text(&dir.join(atlas_name), &atlas_csv(&dataset.atlas))?;

    let mut behaviors = Vec::new();
    for (category, panel) in &dataset.behaviors {
        let name = format!("behavior_{}.csv", sanitize(category));
        let mut s = String::from("subject_id");
        for ind in &panel.indicators {
            s.push(',');
            s.push_str(ind);
        }
        s.push('\n');
        for (i, subj) in panel.subject_ids.iter().enumerate() {
            s.push_str(subj);
            for q in 0..panel.n_indicators() {
                s.push(',');
                let x = panel.values[(i, q)];
                if !x.is_nan() {
                    s.push_str(&x.to_string());
                }
            }
            s.push('\n');
        }
        write_text(&dir.join(&name), &s)?;
        behaviors.push(crate::ingest::BehaviorRef {
            category: category.clone(),
            path: name,
        });
    }

    let mut connectome_refs = Vec::new();
    for ((subject, condition), conn) in &dataset.connectomes {
        let name = format!("conn_{}_{}.csv", sanitize(subject), sanitize(condition));
        let v = dataset.v;
        let mut s = String::with_capacity(v * v * 12);
        for i in 0..v {
            for j in 0..v {
                if j > 0 {
                    s.push(',');
                }
                s.push_str(&conn.matrix[(i, j)].to_string());
            }
            s.push('\n');
        }
        write_text(&dir.join(&name), &s)?;
        connectome_refs.push(crate::ingest::ConnectomeRef {
            subject: subject.clone(),
            condition: condition.clone(),
            path: name,
        });
    }

    let manifest = DatasetManifest {
        version: 1,
        v: dataset.v,
        scale: "fisher_z".to_string(),
        atlas: atlas_name.to_string(),
        behaviors,
        connectomes: connectome_refs,
    };
    let manifest_path = dir.join("manifest.json");
    write_text(&manifest_path, &serde_json::to_string_pretty(&manifest)?)?;

    if let Some(truth) = truth {
        write_text(&dir.join("ground_truth.json"), &serde_json::to_string_pretty(truth)?)?;
    }
    Ok(manifest_path)
}

fn write_text(path: &Path, content: &str) -> Result<(), ReportError> {
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    f.write_all(content.as_bytes()).map_err(io_err(path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::sig_code;

    #[test]
    fn empty_results_give_empty_output_list() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = emit_run(&RunOutputs::default(), dir.path()).unwrap();
        assert!(manifest.outputs.is_empty());
        assert!(dir.path().join("run_manifest.json").exists());
        verify_run(dir.path()).unwrap();
    }

    #[test]
    fn manifest_digest_roundtrip_and_tamper_detection() {
        let dir = tempfile::tempdir().unwrap();
        let mut results = RunOutputs::default();
        results.predictions.push(PredictionRow {
            condition: "Rest1".into(),
            category: "cat".into(),
            indicator: "i1".into(),
            repeat_index: 0,
            subject_id: "s1".into(),
            predicted: 0.5,
            observed: Some(0.4),
            method: "latentsna".into(),
        });
        results.accuracy.push(AccuracyRecord {
            condition: "Rest1".into(),
            category: "cat".into(),
            indicator: "i1".into(),
            repeat_index: 0,
            r: 0.5,
            n_test: 10,
            method: "latentsna".into(),
        });
        let manifest = emit_run(&results, dir.path()).unwrap();
        assert_eq!(manifest.outputs.len(), 3);
        verify_run(dir.path()).unwrap();

        std::fs::write(dir.path().join("accuracy.csv"), "tampered").unwrap();
        assert!(matches!(
            verify_run(dir.path()),
            Err(ReportError::DigestMismatch { .. })
        ));
    }

    #[test]
    fn rerun_same_content_identical_digests() {
        let dir = tempfile::tempdir().unwrap();
        let mut results = RunOutputs::default();
        results.accuracy.push(AccuracyRecord {
            condition: "Rest1".into(),
            category: "cat".into(),
            indicator: "i1".into(),
            repeat_index: 0,
            r: 0.25,
            n_test: 10,
            method: "ridge".into(),
        });
        let m1 = emit_run(&results, dir.path()).unwrap();
        let m2 = emit_run(&results, dir.path()).unwrap();
        let d1: Vec<&String> = m1.outputs.iter().map(|o| &o.sha256).collect();
        let d2: Vec<&String> = m2.outputs.iter().map(|o| &o.sha256).collect();
        assert_eq!(d1, d2);
    }

    #[test]
    fn legend_line_matches_source_tables() {
        let result = RegressionResult {
            coefficients: vec![crate::analysis::Coefficient {
                term: "Intercept".into(),
                estimate: 0.458,
                std_error: 0.021,
                t_value: 21.8,
                p_value: 0.0005,
                sig_code: sig_code(0.0005).to_string(),
            }],
            r_squared: 0.106,
            n: 49,
            residual_df: 42,
            f_statistic: Some(2.5),
            f_p_value: Some(0.03),
        };
        let text = render_regression_text("title", &result);
        assert!(text.contains("Signif. codes: 0 '***' 0.001 '**' 0.01 '*' 0.05 '.' 0.1 ' ' 1"));
        assert!(text.contains("***"));
    }

    #[test]
    fn dataset_roundtrip_through_files() {
        use crate::model::{simulate, GenParams};
        let params = GenParams::isotropic(6, 12, 2, &[0.3], 0.25, 0.25);
        let (dataset, truth) = simulate(&params, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest_path = write_dataset(&dataset, Some(&truth), dir.path()).unwrap();
        let loaded = crate::ingest::load_dataset(&manifest_path).unwrap();
        assert_eq!(loaded.v, 6);
        assert_eq!(loaded.connectomes.len(), 12);
        // matrices survive the text roundtrip bit-exactly (shortest float repr)
        for (k, c) in &dataset.connectomes {
            let lc = &loaded.connectomes[k];
            for (a, b) in c.matrix.iter().zip(lc.matrix.iter()) {
                assert_eq!(a, b);
            }
        }
        assert!(dir.path().join("ground_truth.json").exists());
    }
}
