//! Training loop, evaluation, cross-validation, and plan ranking.
//!
//! Samples are processed one graph at a time with gradient accumulation up
//! to the configured batch size (grids have heterogeneous node counts, so
//! there is no padding/batch dimension). Every run is deterministic in its
//! seed: shuffles, dropout masks, and initialization all derive from it.

use crate::model::{
    accumulate_grads, bind_params, forward, sample_loss, ModelConfig, ModelParams, PlanSample,
    Target, Task,
};
use crate::optim::AdamState;
use crate::seeds::mix;
use crate::tensor::{Tape, Tensor, TensorError};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),
    #[error("sample `{0}` has a label but the task is regression (or vice versa)")]
    TargetMismatch(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("checkpoint i/o failed for {path}: {message}")]
    Checkpoint { path: String, message: String },
}

/// Standardization constants for regression targets, fit on the training
/// split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetStats {
    pub mean: f64,
    pub std: f64,
}

impl TargetStats {
    fn fit(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        TargetStats { mean, std: if std > 0.0 { std } else { 1.0 } }
    }

    pub fn standardize(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn destandardize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Per-column standardization of node features, fit on the training split.
/// Raw feature scales differ by orders of magnitude (betweenness in the
/// hundreds, U-scores below one), which starves the informative columns of
/// gradient; inputs are z-scored before every forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    pub fn fit(samples: &[&PlanSample]) -> Self {
        let cols = samples[0].x_v.cols();
        let mut sum = vec![0.0; cols];
        let mut count = 0usize;
        for s in samples {
            for r in 0..s.x_v.rows() {
                for (c, acc) in sum.iter_mut().enumerate() {
                    *acc += s.x_v.get(r, c);
                }
            }
            count += s.x_v.rows();
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut var = vec![0.0; cols];
        for s in samples {
            for r in 0..s.x_v.rows() {
                for (c, acc) in var.iter_mut().enumerate() {
                    let d = s.x_v.get(r, c) - mean[c];
                    *acc += d * d;
                }
            }
        }
        let std: Vec<f64> = var
            .iter()
            .map(|v| {
                let s = (v / count as f64).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        FeatureStats { mean, std }
    }

    pub fn apply(&self, sample: &PlanSample) -> PlanSample {
        let mut x_v = sample.x_v.clone();
        for r in 0..x_v.rows() {
            for c in 0..x_v.cols() {
                x_v.set(r, c, (x_v.get(r, c) - self.mean[c]) / self.std[c]);
            }
        }
        PlanSample { x_v, ..sample.clone() }
    }
}

/// Everything needed to run inference: weights, architecture, input scaling,
/// and target scaling. Serializes to a JSON checkpoint with named tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub node_feat_dim: usize,
    pub edge_feat_dim: usize,
    #[serde(default)]
    pub feature_stats: Option<FeatureStats>,
    pub target_stats: Option<TargetStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    /// Accuracy (classification) or standardized RMSE (regression) on the
    /// held-out split.
    pub eval_metric: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: TrainedModel,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
}

fn target_value(target: &Target) -> Option<f64> {
    match target {
        Target::Value(v) => Some(*v),
        Target::Label(_) => None,
    }
}

/// Higher-is-better comparison: accuracy as-is, RMSE negated.
fn metric_score(task: &Task, metric: f64) -> f64 {
    match task {
        Task::Classify { .. } => metric,
        Task::Regress => -metric,
    }
}

/// Stratified 80/20 split indices (train, eval). Classification requires at
/// least 2 samples per class so every class appears on both sides.
pub fn stratified_split(
    samples: &[PlanSample],
    test_fraction: f64,
    task: &Task,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut eval = Vec::new();
    match task {
        Task::Classify { classes } => {
            for class in 0..*classes {
                let mut members: Vec<usize> = samples
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| matches!(s.target, Target::Label(l) if l == class))
                    .map(|(i, _)| i)
                    .collect();
                if members.len() < 2 {
                    return Err(TrainError::DegenerateSplit(format!(
                        "class {class} has {} samples; need at least 2",
                        members.len()
                    )));
                }
                members.shuffle(&mut rng);
                let n_eval = ((members.len() as f64 * test_fraction).round() as usize)
                    .clamp(1, members.len() - 1);
                eval.extend_from_slice(&members[..n_eval]);
                train.extend_from_slice(&members[n_eval..]);
            }
        }
        Task::Regress => {
            let mut all: Vec<usize> = (0..samples.len()).collect();
            all.shuffle(&mut rng);
            let n_eval = ((samples.len() as f64 * test_fraction).round() as usize)
                .clamp(1, samples.len().saturating_sub(1).max(1));
            eval.extend_from_slice(&all[..n_eval]);
            train.extend_from_slice(&all[n_eval..]);
            if train.is_empty() {
                return Err(TrainError::DegenerateSplit("not enough samples to split".into()));
            }
        }
    }
    train.sort_unstable();
    eval.sort_unstable();
    Ok((train, eval))
}

/// Stratified fold assignment: shuffled within class, dealt round-robin, so
/// fold sizes differ by at most one and every sample appears exactly once.
pub fn stratified_folds(
    samples: &[PlanSample],
    folds: usize,
    task: &Task,
    seed: u64,
) -> Result<Vec<Vec<usize>>, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ordered = Vec::with_capacity(samples.len());
    match task {
        Task::Classify { classes } => {
            for class in 0..*classes {
                let mut members: Vec<usize> = samples
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| matches!(s.target, Target::Label(l) if l == class))
                    .map(|(i, _)| i)
                    .collect();
                members.shuffle(&mut rng);
                ordered.extend(members);
            }
        }
        Task::Regress => {
            let mut all: Vec<usize> = (0..samples.len()).collect();
            all.shuffle(&mut rng);
            ordered = all;
        }
    }
    let mut assignment = vec![Vec::new(); folds];
    for (i, idx) in ordered.into_iter().enumerate() {
        assignment[i % folds].push(idx);
    }
    if assignment.iter().any(Vec::is_empty) {
        return Err(TrainError::DegenerateSplit(format!(
            "{folds} folds over {} samples leaves an empty fold",
            samples.len()
        )));
    }
    for fold in &mut assignment {
        fold.sort_unstable();
    }
    Ok(assignment)
}

/// Trains on an explicit train/eval split and returns the best-epoch
/// checkpoint (by eval metric; ties keep the earlier epoch).
pub fn train_on(
    train_set: &[&PlanSample],
    eval_set: &[&PlanSample],
    cfg: &ModelConfig,
    seed: u64,
) -> Result<TrainReport, TrainError> {
    if train_set.is_empty() || eval_set.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let node_feat_dim = train_set[0].x_v.cols();
    let edge_feat_dim = train_set[0].x_e.cols();

    let target_stats = match cfg.task {
        Task::Regress => {
            let values: Vec<f64> = train_set
                .iter()
                .map(|s| {
                    target_value(&s.target)
                        .ok_or_else(|| TrainError::TargetMismatch(s.plan_id.clone()))
                })
                .collect::<Result<_, _>>()?;
            Some(TargetStats::fit(&values))
        }
        Task::Classify { .. } => None,
    };
    let standardized: Vec<Target> = train_set
        .iter()
        .map(|s| match (&s.target, &target_stats) {
            (Target::Value(v), Some(stats)) => Target::Value(stats.standardize(*v)),
            (t, _) => *t,
        })
        .collect();
    let feature_stats = FeatureStats::fit(train_set);
    let scaled_train: Vec<PlanSample> =
        train_set.iter().map(|s| feature_stats.apply(s)).collect();

    let mut params = ModelParams::init(cfg, node_feat_dim, edge_feat_dim, mix(&[seed, 0xC0DE]));
    let mut adam = AdamState::new(cfg.lr);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, ModelParams)> = None;

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, 1, epoch as u64]));
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_no, batch) in order.chunks(cfg.batch_size.max(1)).enumerate() {
            let mut grads = params.grad_buffer();
            let mut batch_loss = 0.0;
            for (k, &idx) in batch.iter().enumerate() {
                let mut tape = Tape::new();
                let bound = bind_params(&mut tape, &params);
                let dropout_seed = mix(&[seed, 2, epoch as u64, batch_no as u64, k as u64]);
                let out = forward(&mut tape, &bound, &scaled_train[idx], cfg, true, dropout_seed)?;
                let loss = sample_loss(&mut tape, out, &standardized[idx])?;
                tape.backward(loss)?;
                accumulate_grads(&tape, &bound, &mut grads)?;
                batch_loss += tape.value(loss).data()[0];
            }
            let inv = 1.0 / batch.len() as f64;
            for g in &mut grads {
                g.scale_assign(inv);
            }
            let mut tensors = params.tensors_mut();
            let mut views: Vec<Tensor> = tensors.iter().map(|t| (**t).clone()).collect();
            adam.step(&mut views, &grads)?;
            for (dst, src) in tensors.iter_mut().zip(views) {
                **dst = src;
            }
            epoch_loss += batch_loss;
        }
        let train_loss = epoch_loss / train_set.len() as f64;

        let snapshot = TrainedModel {
            config: cfg.clone(),
            params: params.clone(),
            node_feat_dim,
            edge_feat_dim,
            feature_stats: Some(feature_stats.clone()),
            target_stats,
        };
        let eval_metric = evaluate(&snapshot, eval_set)?;
        history.push(EpochStats { epoch, train_loss, eval_metric });
        let score = metric_score(&cfg.task, eval_metric);
        if best.as_ref().map_or(true, |(_, s, _)| score > *s) {
            best = Some((epoch, score, params.clone()));
        }
    }
    let (best_epoch, _, best_params) = best.expect("at least one epoch ran");
    Ok(TrainReport {
        model: TrainedModel {
            config: cfg.clone(),
            params: best_params,
            node_feat_dim,
            edge_feat_dim,
            feature_stats: Some(feature_stats),
            target_stats,
        },
        history,
        best_epoch,
    })
}

/// Trains with an internal stratified 80/20 split.
pub fn train(
    samples: &[PlanSample],
    cfg: &ModelConfig,
    seed: u64,
) -> Result<TrainReport, TrainError> {
    let (train_idx, eval_idx) = stratified_split(samples, 0.2, &cfg.task, mix(&[seed, 3]))?;
    let train_set: Vec<&PlanSample> = train_idx.iter().map(|&i| &samples[i]).collect();
    let eval_set: Vec<&PlanSample> = eval_idx.iter().map(|&i| &samples[i]).collect();
    train_on(&train_set, &eval_set, cfg, seed)
}

/// Model output for one sample.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Class { label: usize, probabilities: Vec<f64> },
    Score { standardized: f64, cvar_kwh: f64 },
}

pub fn predict(model: &TrainedModel, sample: &PlanSample) -> Result<Prediction, TrainError> {
    let scaled = model.feature_stats.as_ref().map(|st| st.apply(sample));
    let sample = scaled.as_ref().unwrap_or(sample);
    let mut tape = Tape::new();
    let bound = bind_params(&mut tape, &model.params);
    let out = forward(&mut tape, &bound, sample, &model.config, false, 0)?;
    match model.config.task {
        Task::Classify { .. } => {
            let soft = tape.softmax_rows(out)?;
            let probabilities = tape.value(soft).data().to_vec();
            let label = probabilities
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite probabilities"))
                .map(|(i, _)| i)
                .expect("nonempty logits");
            Ok(Prediction::Class { label, probabilities })
        }
        Task::Regress => {
            let standardized = tape.value(out).data()[0];
            let stats = model.target_stats.unwrap_or(TargetStats { mean: 0.0, std: 1.0 });
            Ok(Prediction::Score { standardized, cvar_kwh: stats.destandardize(standardized) })
        }
    }
}

/// Counting accuracy of predicted vs true labels.
pub fn accuracy(predicted: &[usize], actual: &[usize]) -> f64 {
    if predicted.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(actual).filter(|(p, a)| p == a).count();
    hits as f64 / predicted.len() as f64
}

/// Accuracy (classification) or RMSE on standardized targets (regression).
pub fn evaluate(model: &TrainedModel, samples: &[&PlanSample]) -> Result<f64, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    match model.config.task {
        Task::Classify { .. } => {
            let mut predicted = Vec::with_capacity(samples.len());
            let mut actual = Vec::with_capacity(samples.len());
            for s in samples {
                let Target::Label(label) = s.target else {
                    return Err(TrainError::TargetMismatch(s.plan_id.clone()));
                };
                match predict(model, s)? {
                    Prediction::Class { label: p, .. } => predicted.push(p),
                    Prediction::Score { .. } => unreachable!("classify task"),
                }
                actual.push(label);
            }
            Ok(accuracy(&predicted, &actual))
        }
        Task::Regress => {
            let stats = model.target_stats.unwrap_or(TargetStats { mean: 0.0, std: 1.0 });
            let mut sq = 0.0;
            for s in samples {
                let Target::Value(v) = s.target else {
                    return Err(TrainError::TargetMismatch(s.plan_id.clone()));
                };
                let Prediction::Score { standardized, .. } = predict(model, s)? else {
                    unreachable!("regress task")
                };
                let err = standardized - stats.standardize(v);
                sq += err * err;
            }
            Ok((sq / samples.len() as f64).sqrt())
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldStats {
    pub fold: usize,
    pub metric: f64,
    pub epochs: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldStats>,
    pub mean: f64,
    pub std_error: f64,
}

/// k-fold cross-validation; each fold is the eval set once.
pub fn cross_validate(
    samples: &[PlanSample],
    cfg: &ModelConfig,
    folds: usize,
    seed: u64,
) -> Result<CvReport, TrainError> {
    let assignment = stratified_folds(samples, folds, &cfg.task, mix(&[seed, 4]))?;
    let mut stats = Vec::with_capacity(folds);
    for (f, eval_idx) in assignment.iter().enumerate() {
        let start = std::time::Instant::now();
        let in_eval: std::collections::HashSet<usize> = eval_idx.iter().copied().collect();
        let train_set: Vec<&PlanSample> = samples
            .iter()
            .enumerate()
            .filter(|(i, _)| !in_eval.contains(i))
            .map(|(_, s)| s)
            .collect();
        let eval_set: Vec<&PlanSample> = eval_idx.iter().map(|&i| &samples[i]).collect();
        let report = train_on(&train_set, &eval_set, cfg, mix(&[seed, 5, f as u64]))?;
        let metric = evaluate(&report.model, &eval_set)?;
        stats.push(FoldStats {
            fold: f,
            metric,
            epochs: cfg.epochs,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    let metrics: Vec<f64> = stats.iter().map(|s| s.metric).collect();
    let mean = metrics.iter().sum::<f64>() / metrics.len() as f64;
    let var = metrics.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>()
        / (metrics.len().saturating_sub(1).max(1)) as f64;
    let std_error = (var / metrics.len() as f64).sqrt();
    Ok(CvReport { folds: stats, mean, std_error })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedPlan {
    pub plan_id: String,
    pub predicted_label: Option<usize>,
    pub confidence: Option<f64>,
    pub predicted_cvar: Option<f64>,
}

/// Orders plans most-resilient-first: ascending predicted CVaR for
/// regression; ascending class, then descending confidence in that class,
/// for classification. Ties fall back to plan id so the order is total.
pub fn rank_plans(
    model: &TrainedModel,
    samples: &[PlanSample],
) -> Result<Vec<RankedPlan>, TrainError> {
    let mut ranked = Vec::with_capacity(samples.len());
    for s in samples {
        match predict(model, s)? {
            Prediction::Class { label, probabilities } => ranked.push(RankedPlan {
                plan_id: s.plan_id.clone(),
                predicted_label: Some(label),
                confidence: Some(probabilities[label]),
                predicted_cvar: None,
            }),
            Prediction::Score { cvar_kwh, .. } => ranked.push(RankedPlan {
                plan_id: s.plan_id.clone(),
                predicted_label: None,
                confidence: None,
                predicted_cvar: Some(cvar_kwh),
            }),
        }
    }
    ranked.sort_by(|a, b| {
        let key_a = (a.predicted_label.unwrap_or(0), a.predicted_cvar.unwrap_or(0.0));
        let key_b = (b.predicted_label.unwrap_or(0), b.predicted_cvar.unwrap_or(0.0));
        key_a
            .0
            .cmp(&key_b.0)
            .then_with(|| key_a.1.total_cmp(&key_b.1))
            .then_with(|| {
                b.confidence.unwrap_or(0.0).total_cmp(&a.confidence.unwrap_or(0.0))
            })
            .then_with(|| a.plan_id.cmp(&b.plan_id))
    });
    Ok(ranked)
}

pub fn save_checkpoint(model: &TrainedModel, path: impl AsRef<Path>) -> Result<(), TrainError> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(model).map_err(|e| TrainError::Checkpoint {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    std::fs::write(path, text).map_err(|e| TrainError::Checkpoint {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrainedModel, TrainError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| TrainError::Checkpoint {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| TrainError::Checkpoint {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::toy_sample;
    use crate::model::AblationFlags;

    fn toy_config(epochs: usize) -> ModelConfig {
        ModelConfig {
            layers: 2,
            hidden_dim: 8,
            mlp_blocks_per_layer: 2,
            lr: 0.01,
            dropout: 0.0,
            batch_size: 4,
            epochs,
            task: Task::Classify { classes: 2 },
            ablation: AblationFlags::default(),
        }
    }

    fn toy_dataset(n: usize) -> Vec<PlanSample> {
        (0..n).map(|i| toy_sample(5, 2, i as u64)).collect()
    }

    #[test]
    fn memorizes_copies_of_one_sample() {
        let proto = toy_sample(5, 2, 3);
        let samples: Vec<PlanSample> = (0..10)
            .map(|i| PlanSample { plan_id: format!("copy_{i}"), ..proto.clone() })
            .collect();
        let refs: Vec<&PlanSample> = samples.iter().collect();
        let cfg = toy_config(50);
        let report = train_on(&refs, &refs[..2], &cfg, 5).unwrap();
        let final_loss = report.history.last().unwrap().train_loss;
        assert!(final_loss < 0.05, "memorization failed: loss {final_loss}");
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let samples = toy_dataset(8);
        let refs: Vec<&PlanSample> = samples.iter().collect();
        let mut cfg = toy_config(3);
        cfg.lr = 0.0;
        let report = train_on(&refs[..6], &refs[6..], &cfg, 9).unwrap();
        let initial = ModelParams::init(&cfg, 3, 1, mix(&[9, 0xC0DE]));
        assert_eq!(report.model.params, initial);
        let losses: Vec<f64> = report.history.iter().map(|h| h.train_loss).collect();
        for w in losses.windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-12, "loss drifted with lr=0: {losses:?}");
        }
    }

    #[test]
    fn training_is_deterministic_in_seed() {
        let samples = toy_dataset(10);
        let refs: Vec<&PlanSample> = samples.iter().collect();
        let cfg = toy_config(5);
        let a = train_on(&refs[..8], &refs[8..], &cfg, 77).unwrap();
        let b = train_on(&refs[..8], &refs[8..], &cfg, 77).unwrap();
        assert_eq!(a.model.params, b.model.params);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn accuracy_of_majority_constant_predictor() {
        let actual: Vec<usize> =
            std::iter::repeat(0).take(60).chain(std::iter::repeat(1).take(30)).chain(std::iter::repeat(2).take(10)).collect();
        let predicted = vec![0usize; 100];
        assert_eq!(accuracy(&predicted, &actual), 0.60);
    }

    #[test]
    fn perfect_predictor_scores_one() {
        let actual = vec![0, 1, 1, 0];
        assert_eq!(accuracy(&actual, &actual), 1.0);
    }

    #[test]
    fn folds_partition_every_sample_exactly_once() {
        let samples = toy_dataset(20);
        let folds = stratified_folds(&samples, 10, &Task::Classify { classes: 2 }, 3).unwrap();
        let mut seen = vec![0usize; samples.len()];
        for fold in &folds {
            assert_eq!(fold.len(), 2);
            for &i in fold {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn split_rejects_single_sample_class() {
        let mut samples = toy_dataset(6);
        for s in &mut samples {
            s.target = Target::Label(0);
        }
        samples[0].target = Target::Label(1);
        let err = stratified_split(&samples, 0.2, &Task::Classify { classes: 2 }, 1).unwrap_err();
        assert!(matches!(err, TrainError::DegenerateSplit(_)));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let cfg = toy_config(1);
        let model = TrainedModel {
            config: cfg.clone(),
            params: ModelParams::init(&cfg, 3, 1, 21),
            node_feat_dim: 3,
            edge_feat_dim: 1,
            feature_stats: Some(FeatureStats { mean: vec![0.5, -1.0, 3.0], std: vec![1.0, 2.0, 0.25] }),
            target_stats: Some(TargetStats { mean: 123.456, std: 7.89 }),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, model);
    }

    #[test]
    fn ranking_sorts_by_predicted_quality() {
        let ranked = vec![
            RankedPlan {
                plan_id: "c".into(),
                predicted_label: Some(1),
                confidence: Some(0.9),
                predicted_cvar: None,
            },
            RankedPlan {
                plan_id: "a".into(),
                predicted_label: Some(0),
                confidence: Some(0.6),
                predicted_cvar: None,
            },
            RankedPlan {
                plan_id: "b".into(),
                predicted_label: Some(0),
                confidence: Some(0.8),
                predicted_cvar: None,
            },
        ];
        // feed through the same comparator rank_plans uses by rebuilding it
        let mut sorted = ranked.clone();
        sorted.sort_by(|a, b| {
            a.predicted_label
                .cmp(&b.predicted_label)
                .then_with(|| b.confidence.unwrap().total_cmp(&a.confidence.unwrap()))
                .then_with(|| a.plan_id.cmp(&b.plan_id))
        });
        let ids: Vec<&str> = sorted.iter().map(|r| r.plan_id.as_str()).collect();
        assert_eq!(ids, ["b", "a", "c"]);
    }

    #[test]
    fn regression_standardization_round_trips() {
        let stats = TargetStats::fit(&[10.0, 20.0, 30.0]);
        assert!((stats.destandardize(stats.standardize(17.0)) - 17.0).abs() < 1e-12);
        assert!((stats.mean - 20.0).abs() < 1e-12);
    }
}
