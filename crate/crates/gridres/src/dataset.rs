//! On-disk artifact formats shared by the pipeline stages, and assembly of
//! model-ready samples from them.
//!
//! Everything tabular is CSV with a header; floats use Rust's shortest
//! round-trip formatting so files are byte-stable across reruns and parse
//! back bit-exactly. Per-plan feature files live in one directory:
//!
//! - `<plan>.nodes.csv` - node id, one `uscore_<substation>` column per
//!   substation, `degree`, `betweenness` (row order = canonical node order)
//! - `<plan>.edges.csv` - edge id, endpoints, weight, cosine feature
//! - `<plan>.qe.csv` / `<plan>.qv.csv` - sparse incidence triplets
//!
//! Labels are a single CSV (`plan_id,cvar_kwh,label,mean_loss,
//! scenario_count`); every stage writes a JSON manifest capturing its full
//! configuration, seed, and a config digest.

use crate::features::FeatureSet;
use crate::grid::{CombinedGrid, Grid};
use crate::model::{PlanSample, Target, Task};
use crate::sim::LabeledPlan;
use crate::tensor::Tensor;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::io;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("malformed {what} in {path} line {line}: {detail}")]
    Malformed { what: &'static str, path: String, line: usize, detail: String },
    #[error("feature artifacts for plan `{0}` not found under {1}")]
    MissingPlan(String, String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.display().to_string(), source }
}

// --- labels ------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct LabelRow {
    pub plan_id: String,
    pub cvar_kwh: f64,
    pub label: usize,
    pub mean_loss: f64,
    pub scenario_count: usize,
}

pub fn write_labels_csv(labeled: &[LabeledPlan], path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut out = String::from("plan_id,cvar_kwh,label,mean_loss,scenario_count\n");
    for l in labeled {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            l.plan.plan_id, l.cvar_kwh, l.label, l.mean_loss, l.scenario_count
        ));
    }
    std::fs::write(path, out).map_err(io_err(path))
}

pub fn read_labels_csv(path: impl AsRef<Path>) -> Result<Vec<LabelRow>, DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let fail = |detail: String| DataError::Malformed {
            what: "label row",
            path: path.display().to_string(),
            line: lineno + 1,
            detail,
        };
        if fields.len() != 5 {
            return Err(fail(format!("expected 5 fields, got {}", fields.len())));
        }
        rows.push(LabelRow {
            plan_id: fields[0].to_string(),
            cvar_kwh: fields[1].parse().map_err(|e| fail(format!("cvar: {e}")))?,
            label: fields[2].parse().map_err(|e| fail(format!("label: {e}")))?,
            mean_loss: fields[3].parse().map_err(|e| fail(format!("mean_loss: {e}")))?,
            scenario_count: fields[4].parse().map_err(|e| fail(format!("count: {e}")))?,
        });
    }
    Ok(rows)
}

// --- per-plan features ---------------------------------------------------------

pub fn nodes_csv_path(dir: &Path, plan_id: &str) -> PathBuf {
    dir.join(format!("{plan_id}.nodes.csv"))
}
pub fn edges_csv_path(dir: &Path, plan_id: &str) -> PathBuf {
    dir.join(format!("{plan_id}.edges.csv"))
}
pub fn qe_csv_path(dir: &Path, plan_id: &str) -> PathBuf {
    dir.join(format!("{plan_id}.qe.csv"))
}
pub fn qv_csv_path(dir: &Path, plan_id: &str) -> PathBuf {
    dir.join(format!("{plan_id}.qv.csv"))
}

pub fn write_feature_csvs(
    combined: &CombinedGrid,
    features: &FeatureSet,
    dir: impl AsRef<Path>,
) -> Result<(), DataError> {
    let dir = dir.as_ref();
    let grid: &Grid = combined;

    let mut nodes = String::from("node_id");
    for sid in &features.substation_ids {
        nodes.push_str(&format!(",uscore_{sid}"));
    }
    nodes.push_str(",degree,betweenness\n");
    for (i, node) in grid.nodes().iter().enumerate() {
        nodes.push_str(&node.id);
        for c in 0..features.x_v.cols() {
            nodes.push_str(&format!(",{}", features.x_v.get(i, c)));
        }
        nodes.push('\n');
    }
    let npath = nodes_csv_path(dir, &combined.plan_id);
    std::fs::write(&npath, nodes).map_err(io_err(&npath))?;

    let mut edges = String::from("edge_id,u,v,weight,cosine\n");
    for (i, e) in grid.edges().iter().enumerate() {
        edges.push_str(&format!(
            "{},{},{},{},{}\n",
            e.id,
            grid.nodes()[e.u].id,
            grid.nodes()[e.v].id,
            e.weight,
            features.x_e.get(i, 0)
        ));
    }
    let epath = edges_csv_path(dir, &combined.plan_id);
    std::fs::write(&epath, edges).map_err(io_err(&epath))
}

/// Parsed `<plan>.nodes.csv` + `<plan>.edges.csv`.
pub struct PlanFeatures {
    pub node_ids: Vec<String>,
    pub x_v: Tensor,
    /// Leading U-score columns in `x_v` (one per substation).
    pub uscore_cols: usize,
    pub adjacency: Tensor,
    pub x_e: Tensor,
    pub edge_count: usize,
}

pub fn read_plan_features(dir: &Path, plan_id: &str) -> Result<PlanFeatures, DataError> {
    let npath = nodes_csv_path(dir, plan_id);
    if !npath.exists() {
        return Err(DataError::MissingPlan(plan_id.to_string(), dir.display().to_string()));
    }
    let text = std::fs::read_to_string(&npath).map_err(io_err(&npath))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| DataError::Malformed {
        what: "nodes header",
        path: npath.display().to_string(),
        line: 1,
        detail: "empty file".into(),
    })?;
    let header_cols: Vec<&str> = header.split(',').collect();
    let uscore_cols = header_cols.iter().filter(|c| c.starts_with("uscore_")).count();
    let feat_cols = header_cols.len() - 1;

    let mut node_ids = Vec::new();
    let mut rows = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != feat_cols + 1 {
            return Err(DataError::Malformed {
                what: "node row",
                path: npath.display().to_string(),
                line: lineno + 1,
                detail: format!("expected {} fields, got {}", feat_cols + 1, fields.len()),
            });
        }
        node_ids.push(fields[0].to_string());
        let row: Result<Vec<f64>, _> = fields[1..].iter().map(|s| s.parse()).collect();
        rows.push(row.map_err(|e| DataError::Malformed {
            what: "node row",
            path: npath.display().to_string(),
            line: lineno + 1,
            detail: e.to_string(),
        })?);
    }
    let x_v = Tensor::from_rows(&rows).expect("uniform csv rows");

    let epath = edges_csv_path(dir, plan_id);
    let text = std::fs::read_to_string(&epath).map_err(io_err(&epath))?;
    let n = node_ids.len();
    let index: std::collections::HashMap<&str, usize> =
        node_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut adjacency = Tensor::zeros(n, n);
    let mut cosines = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let fail = |detail: String| DataError::Malformed {
            what: "edge row",
            path: epath.display().to_string(),
            line: lineno + 1,
            detail,
        };
        if fields.len() != 5 {
            return Err(fail(format!("expected 5 fields, got {}", fields.len())));
        }
        let u = *index.get(fields[1]).ok_or_else(|| fail(format!("unknown node {}", fields[1])))?;
        let v = *index.get(fields[2]).ok_or_else(|| fail(format!("unknown node {}", fields[2])))?;
        adjacency.set(u, v, 1.0);
        adjacency.set(v, u, 1.0);
        cosines.push(fields[4].parse::<f64>().map_err(|e| fail(e.to_string()))?);
    }
    let edge_count = cosines.len();
    let x_e = Tensor::from_vec(edge_count, 1, cosines).expect("one cosine per edge");
    Ok(PlanFeatures { node_ids, x_v, uscore_cols, adjacency, x_e, edge_count })
}

/// Reads sparse triplets, inferring the column count (every hyperstructure
/// column contains its seed, so none is empty).
pub fn read_incidence_inferred(path: &Path, rows: usize) -> Result<Tensor, DataError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut triplets = Vec::new();
    let mut cols = 0usize;
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let fail = |detail: String| DataError::Malformed {
            what: "incidence triplet",
            path: path.display().to_string(),
            line: lineno + 1,
            detail,
        };
        if fields.len() != 3 {
            return Err(fail(format!("expected 3 fields, got {}", fields.len())));
        }
        let r: usize = fields[0].parse().map_err(|e: std::num::ParseIntError| fail(e.to_string()))?;
        let c: usize = fields[1].parse().map_err(|e: std::num::ParseIntError| fail(e.to_string()))?;
        if r >= rows {
            return Err(fail(format!("row {r} out of range {rows}")));
        }
        cols = cols.max(c + 1);
        triplets.push((r, c));
    }
    let mut q = Tensor::zeros(rows, cols.max(1));
    for (r, c) in triplets {
        q.set(r, c, 1.0);
    }
    Ok(q)
}

/// Model-ready dataset plus the feature metadata ablations need.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<PlanSample>,
    pub uscore_cols: usize,
}

impl Dataset {
    /// Drops the leading U-score columns from every sample's node features
    /// (edge cosines are left as computed).
    pub fn without_uscores(&self) -> Dataset {
        let samples = self
            .samples
            .iter()
            .map(|s| {
                let keep = s.x_v.cols() - self.uscore_cols;
                let mut x_v = Tensor::zeros(s.x_v.rows(), keep);
                for r in 0..s.x_v.rows() {
                    for c in 0..keep {
                        x_v.set(r, c, s.x_v.get(r, self.uscore_cols + c));
                    }
                }
                PlanSample { x_v, ..s.clone() }
            })
            .collect();
        Dataset { samples, uscore_cols: 0 }
    }
}

/// Assembles samples for the given label rows from a feature directory.
pub fn assemble_dataset(
    labels: &[LabelRow],
    features_dir: impl AsRef<Path>,
    task: &Task,
) -> Result<Dataset, DataError> {
    let dir = features_dir.as_ref();
    let mut samples = Vec::with_capacity(labels.len());
    let mut uscore_cols = 0;
    for row in labels {
        let feats = read_plan_features(dir, &row.plan_id)?;
        uscore_cols = feats.uscore_cols;
        let q_e = read_incidence_inferred(&qe_csv_path(dir, &row.plan_id), feats.node_ids.len())?;
        let q_v = read_incidence_inferred(&qv_csv_path(dir, &row.plan_id), feats.edge_count)?;
        let target = match task {
            Task::Classify { .. } => Target::Label(row.label),
            Task::Regress => Target::Value(row.cvar_kwh),
        };
        samples.push(PlanSample {
            plan_id: row.plan_id.clone(),
            adjacency: feats.adjacency,
            x_v: feats.x_v,
            x_e: feats.x_e,
            q_e,
            q_v,
            target,
        });
    }
    Ok(Dataset { samples, uscore_cols })
}

// --- manifests -----------------------------------------------------------------

/// Every pipeline output gets a manifest recording exactly how to regenerate
/// it: the command, full configuration, and seed. No timestamps, so reruns
/// are byte-identical.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest<C: Serialize> {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: C,
    pub config_sha256: String,
}

pub fn write_manifest<C: Serialize>(
    command: &str,
    seed: u64,
    config: C,
    out_path: impl AsRef<Path>,
) -> Result<(), DataError> {
    let canonical = serde_json::to_string(&config).expect("config serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    let manifest = Manifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        config,
        config_sha256: format!("{digest:x}"),
    };
    let path = out_path.as_ref();
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(path, text).map_err(io_err(path))
}

/// `<artifact>.manifest.json` beside the artifact (directories get
/// `manifest.json` inside).
pub fn manifest_path_for(artifact: &Path) -> PathBuf {
    if artifact.is_dir() {
        artifact.join("manifest.json")
    } else {
        let name = artifact
            .file_name()
            .map(|n| format!("{}.manifest.json", n.to_string_lossy()))
            .unwrap_or_else(|| "manifest.json".to_string());
        artifact.with_file_name(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{combine_plan, EdgeStatus, ExpansionPlan, NodeKind};
    use crate::paths::PathCaps;

    fn demo_combined() -> CombinedGrid {
        let base = Grid::new(
            vec![
                ("s0".into(), NodeKind::Substation, 0.0),
                ("l0".into(), NodeKind::Load, 1.0),
                ("l1".into(), NodeKind::Load, 1.0),
            ],
            vec![
                ("e0".into(), "s0".into(), "l0".into(), 1.0, EdgeStatus::Existing),
                ("e1".into(), "l0".into(), "l1".into(), 2.0, EdgeStatus::Existing),
                ("c0".into(), "s0".into(), "l1".into(), 1.5, EdgeStatus::Candidate),
            ],
        )
        .unwrap();
        combine_plan(&base, &ExpansionPlan { plan_id: "plan_000".into(), edges: vec!["c0".into()] })
            .unwrap()
    }

    #[test]
    fn feature_csvs_round_trip_into_a_sample() {
        let combined = demo_combined();
        let features = crate::features::feature_set(&combined, &PathCaps::default());
        let hs = crate::hyper::build_hyperstructure(&combined, &features.x_v, 1);
        let dir = tempfile::tempdir().unwrap();
        write_feature_csvs(&combined, &features, dir.path()).unwrap();
        crate::hyper::write_incidence_csv(&hs.q_e, qe_csv_path(dir.path(), "plan_000")).unwrap();
        crate::hyper::write_incidence_csv(&hs.q_v, qv_csv_path(dir.path(), "plan_000")).unwrap();

        let labels = vec![LabelRow {
            plan_id: "plan_000".into(),
            cvar_kwh: 12.5,
            label: 1,
            mean_loss: 3.25,
            scenario_count: 10,
        }];
        let ds =
            assemble_dataset(&labels, dir.path(), &Task::Classify { classes: 3 }).unwrap();
        assert_eq!(ds.samples.len(), 1);
        let s = &ds.samples[0];
        assert_eq!(s.x_v, features.x_v);
        assert_eq!(s.x_e, features.x_e);
        assert_eq!(s.q_e, hs.q_e);
        assert_eq!(s.q_v, hs.q_v);
        assert_eq!(s.target, Target::Label(1));
        assert_eq!(ds.uscore_cols, 1);
        // adjacency mirrors the 3 edges
        let total: f64 = s.adjacency.data().iter().sum();
        assert_eq!(total, 6.0);
    }

    #[test]
    fn labels_csv_round_trips_bit_exactly() {
        let labeled = vec![crate::sim::LabeledPlan {
            plan: ExpansionPlan { plan_id: "plan_000".into(), edges: vec![] },
            losses: vec![],
            cvar_kwh: 28679.76,
            mean_loss: 0.1 + 0.2, // deliberately non-representable value
            label: 2,
            scenario_count: 2000,
        }];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        write_labels_csv(&labeled, &path).unwrap();
        let rows = read_labels_csv(&path).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].cvar_kwh, 28679.76);
        assert_eq!(rows[0].mean_loss, 0.1 + 0.2);
        assert_eq!(rows[0].label, 2);
    }

    #[test]
    fn without_uscores_drops_exactly_the_leading_columns() {
        let combined = demo_combined();
        let features = crate::features::feature_set(&combined, &PathCaps::default());
        let hs = crate::hyper::build_hyperstructure(&combined, &features.x_v, 1);
        let sample = PlanSample {
            plan_id: "p".into(),
            adjacency: Tensor::zeros(3, 3),
            x_v: features.x_v.clone(),
            x_e: features.x_e.clone(),
            q_e: hs.q_e,
            q_v: hs.q_v,
            target: Target::Label(0),
        };
        let ds = Dataset { samples: vec![sample], uscore_cols: 1 };
        let ablated = ds.without_uscores();
        assert_eq!(ablated.samples[0].x_v.cols(), features.x_v.cols() - 1);
        // degree column is now first
        for r in 0..3 {
            assert_eq!(ablated.samples[0].x_v.get(r, 0), features.x_v.get(r, 1));
        }
        // edge features untouched
        assert_eq!(ablated.samples[0].x_e, features.x_e);
    }

    #[test]
    fn manifest_records_config_and_digest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv.manifest.json");
        write_manifest("simulate", 7, serde_json::json!({"alpha": 0.95}), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["command"], "simulate");
        assert_eq!(v["seed"], 7);
        assert_eq!(v["config"]["alpha"], 0.95);
        assert_eq!(v["config_sha256"].as_str().unwrap().len(), 64);
    }

    #[test]
    fn missing_plan_features_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let labels = vec![LabelRow {
            plan_id: "ghost".into(),
            cvar_kwh: 1.0,
            label: 0,
            mean_loss: 0.0,
            scenario_count: 1,
        }];
        let err = assemble_dataset(&labels, dir.path(), &Task::Regress).unwrap_err();
        assert!(matches!(err, DataError::MissingPlan(..)));
    }
}
