//! Multi-branch graph classifier over plan samples.
//!
//! Three graph-level embeddings are computed per sample and fused:
//!
//! 1. a GCN branch: `layers` rounds of renormalized propagation
//!    `Z <- act(D^{-1/2}(I+A)D^{-1/2} Z W)` followed by a global max-pool
//!    readout over nodes;
//! 2. a hyperedge branch: `GMP(MLP(Q_E . MLP(Q_E^T X_V)))` over the
//!    node-in-hyperedge incidence;
//! 3. a hypernode branch: the same shape over the edge-in-hypernode
//!    incidence and edge features.
//!
//! Fusion is attention-weighted: each embedding `z` scores
//! `tanh(z Xi) . upsilon`, the scores softmax into weights, and the fused
//! embedding is the weighted sum. A small MLP head maps it to class logits
//! or a scalar. Ablation flags bypass branches or replace attention with an
//! unweighted mean.
//!
//! All vectors are rows (1 x d); weight matrices left-multiply features as
//! `x W`.

use crate::seeds::mix;
use crate::tensor::{Result, Tape, Tensor, TensorError, Var};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Task {
    Classify { classes: usize },
    Regress,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    /// Drop the per-substation U-score columns from node features (applied
    /// when samples are assembled; changes the input width).
    pub no_uscores: bool,
    pub no_hyperedge: bool,
    pub no_hypernode: bool,
    /// Replace attention fusion with an unweighted mean of the branch
    /// embeddings.
    pub no_attention: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub layers: usize,
    pub hidden_dim: usize,
    pub mlp_blocks_per_layer: usize,
    pub lr: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub task: Task,
    pub ablation: AblationFlags,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::system_i(Task::Classify { classes: 3 })
    }
}

impl ModelConfig {
    /// Hyperparameters used for the 4-substation 54-bus family.
    pub fn system_i(task: Task) -> Self {
        ModelConfig {
            layers: 3,
            hidden_dim: 64,
            mlp_blocks_per_layer: 2,
            lr: 0.01,
            dropout: 0.5,
            batch_size: if matches!(task, Task::Regress) { 8 } else { 16 },
            epochs: 100,
            task,
            ablation: AblationFlags::default(),
        }
    }

    /// Hyperparameters used for the 2-substation 54-bus family.
    pub fn system_ii(task: Task) -> Self {
        match task {
            Task::Classify { .. } => ModelConfig {
                layers: 3,
                hidden_dim: 16,
                mlp_blocks_per_layer: 2,
                lr: 0.05,
                dropout: 0.0,
                batch_size: 8,
                epochs: 100,
                task,
                ablation: AblationFlags::default(),
            },
            Task::Regress => ModelConfig {
                layers: 2,
                hidden_dim: 8,
                mlp_blocks_per_layer: 2,
                lr: 1e-4,
                dropout: 0.8,
                batch_size: 8,
                epochs: 100,
                task,
                ablation: AblationFlags::default(),
            },
        }
    }

    pub fn output_dim(&self) -> usize {
        match self.task {
            Task::Classify { classes } => classes,
            Task::Regress => 1,
        }
    }
}

/// Supervision target of one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Label(usize),
    Value(f64),
}

/// One expansion plan prepared for the model: adjacency, feature matrices,
/// and incidence matrices with mutually consistent shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanSample {
    pub plan_id: String,
    pub adjacency: Tensor,
    pub x_v: Tensor,
    pub x_e: Tensor,
    pub q_e: Tensor,
    pub q_v: Tensor,
    pub target: Target,
}

impl PlanSample {
    pub fn check_shapes(&self) -> Result<()> {
        let n = self.adjacency.rows();
        let m = self.x_e.rows();
        let ok = self.adjacency.cols() == n
            && self.x_v.rows() == n
            && self.q_e.rows() == n
            && self.q_v.rows() == m;
        if ok {
            Ok(())
        } else {
            Err(TensorError::ShapeMismatch {
                op: "plan_sample",
                detail: format!(
                    "A {}, X_V {}, X_E {}, Q_E {}, Q_V {}",
                    self.adjacency.shape_str(),
                    self.x_v.shape_str(),
                    self.x_e.shape_str(),
                    self.q_e.shape_str(),
                    self.q_v.shape_str()
                ),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

fn apply_activation(tape: &mut Tape, x: Var, act: Activation) -> Result<Var> {
    match act {
        Activation::Relu => tape.relu(x),
        Activation::Tanh => tape.tanh(x),
        Activation::Identity => Ok(x),
    }
}

/// A stack of linear blocks with biases; activation is applied after every
/// block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

impl Mlp {
    fn init(dims: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in dims.windows(2) {
            weights.push(Tensor::glorot_uniform(w[0], w[1], rng));
            biases.push(Tensor::zeros(1, w[1]));
        }
        Mlp { weights, biases }
    }
}

/// Bound tape variables for one MLP.
pub struct MlpVars {
    pub weights: Vec<Var>,
    pub biases: Vec<Var>,
}

pub fn mlp_forward(tape: &mut Tape, x: Var, mlp: &MlpVars, act: Activation) -> Result<Var> {
    let mut h = x;
    for (w, b) in mlp.weights.iter().zip(&mlp.biases) {
        h = tape.matmul(h, *w)?;
        h = tape.add(h, *b)?;
        h = apply_activation(tape, h, act)?;
    }
    Ok(h)
}

/// All learnable tensors of one model instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub gcn: Vec<Tensor>,
    pub hyperedge_inner: Mlp,
    pub hyperedge_outer: Mlp,
    pub hypernode_inner: Mlp,
    pub hypernode_outer: Mlp,
    /// Attention transform (d x d), applied as `z Xi`.
    pub attention_transform: Tensor,
    /// Attention scoring vector (d x 1).
    pub attention_vector: Tensor,
    pub head: Mlp,
}

fn mlp_dims(input: usize, hidden: usize, blocks: usize) -> Vec<usize> {
    let mut dims = vec![input];
    dims.extend(std::iter::repeat(hidden).take(blocks.max(1)));
    dims
}

impl ModelParams {
    /// Glorot-uniform weights and zero biases, deterministic in `seed`.
    pub fn init(cfg: &ModelConfig, node_feat_dim: usize, edge_feat_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = cfg.hidden_dim;
        let blocks = cfg.mlp_blocks_per_layer;
        let mut gcn = Vec::with_capacity(cfg.layers);
        let mut in_dim = node_feat_dim;
        for _ in 0..cfg.layers.max(1) {
            gcn.push(Tensor::glorot_uniform(in_dim, h, &mut rng));
            in_dim = h;
        }
        ModelParams {
            gcn,
            hyperedge_inner: Mlp::init(&mlp_dims(node_feat_dim, h, blocks), &mut rng),
            hyperedge_outer: Mlp::init(&mlp_dims(h, h, blocks), &mut rng),
            hypernode_inner: Mlp::init(&mlp_dims(edge_feat_dim, h, blocks), &mut rng),
            hypernode_outer: Mlp::init(&mlp_dims(h, h, blocks), &mut rng),
            attention_transform: Tensor::glorot_uniform(h, h, &mut rng),
            attention_vector: Tensor::glorot_uniform(h, 1, &mut rng),
            head: Mlp::init(&[h, h, cfg.output_dim()], &mut rng),
        }
    }

    /// Stable (name, tensor) enumeration; the order defines the optimizer's
    /// and checkpoint's parameter layout.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, t) in self.gcn.iter().enumerate() {
            out.push((format!("gcn.{i}.weight"), t));
        }
        for (prefix, mlp) in [
            ("hyperedge_inner", &self.hyperedge_inner),
            ("hyperedge_outer", &self.hyperedge_outer),
            ("hypernode_inner", &self.hypernode_inner),
            ("hypernode_outer", &self.hypernode_outer),
            ("head", &self.head),
        ] {
            for (i, t) in mlp.weights.iter().enumerate() {
                out.push((format!("{prefix}.{i}.weight"), t));
            }
            for (i, t) in mlp.biases.iter().enumerate() {
                out.push((format!("{prefix}.{i}.bias"), t));
            }
        }
        out.push(("attention.transform".into(), &self.attention_transform));
        out.push(("attention.vector".into(), &self.attention_vector));
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for t in &mut self.gcn {
            out.push(t);
        }
        for mlp in [
            &mut self.hyperedge_inner,
            &mut self.hyperedge_outer,
            &mut self.hypernode_inner,
            &mut self.hypernode_outer,
            &mut self.head,
        ] {
            for t in &mut mlp.weights {
                out.push(t);
            }
            for t in &mut mlp.biases {
                out.push(t);
            }
        }
        out.push(&mut self.attention_transform);
        out.push(&mut self.attention_vector);
        out
    }

    pub fn grad_buffer(&self) -> Vec<Tensor> {
        self.tensors().iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect()
    }
}

/// Tape-bound copies of every parameter, in `named()` order.
pub struct BoundParams {
    pub gcn: Vec<Var>,
    pub hyperedge_inner: MlpVars,
    pub hyperedge_outer: MlpVars,
    pub hypernode_inner: MlpVars,
    pub hypernode_outer: MlpVars,
    pub attention_transform: Var,
    pub attention_vector: Var,
    pub head: MlpVars,
    all: Vec<Var>,
}

fn bind_mlp(tape: &mut Tape, mlp: &Mlp, all: &mut Vec<Var>) -> MlpVars {
    let weights: Vec<Var> = mlp.weights.iter().map(|t| tape.leaf(t.clone())).collect();
    let biases: Vec<Var> = mlp.biases.iter().map(|t| tape.leaf(t.clone())).collect();
    all.extend(weights.iter().copied());
    all.extend(biases.iter().copied());
    MlpVars { weights, biases }
}

pub fn bind_params(tape: &mut Tape, params: &ModelParams) -> BoundParams {
    let mut all = Vec::new();
    let gcn: Vec<Var> = params.gcn.iter().map(|t| tape.leaf(t.clone())).collect();
    all.extend(gcn.iter().copied());
    let hyperedge_inner = bind_mlp(tape, &params.hyperedge_inner, &mut all);
    let hyperedge_outer = bind_mlp(tape, &params.hyperedge_outer, &mut all);
    let hypernode_inner = bind_mlp(tape, &params.hypernode_inner, &mut all);
    let hypernode_outer = bind_mlp(tape, &params.hypernode_outer, &mut all);
    let head = bind_mlp(tape, &params.head, &mut all);
    let attention_transform = tape.leaf(params.attention_transform.clone());
    let attention_vector = tape.leaf(params.attention_vector.clone());
    all.push(attention_transform);
    all.push(attention_vector);
    BoundParams {
        gcn,
        hyperedge_inner,
        hyperedge_outer,
        hypernode_inner,
        hypernode_outer,
        attention_transform,
        attention_vector,
        head,
        all,
    }
}

/// Adds the tape's gradients for every bound parameter into `grads`
/// (aligned with `ModelParams::tensors`).
pub fn accumulate_grads(tape: &Tape, bound: &BoundParams, grads: &mut [Tensor]) -> Result<()> {
    for (slot, var) in grads.iter_mut().zip(&bound.all) {
        slot.add_assign(&tape.grad(*var))?;
    }
    Ok(())
}

/// Renormalized propagation matrix `D^{-1/2}(I+A)D^{-1/2}` over a binary
/// adjacency.
pub fn gcn_propagation_matrix(adjacency: &Tensor) -> Tensor {
    let n = adjacency.rows();
    let mut a = adjacency.clone();
    for i in 0..n {
        a.set(i, i, a.get(i, i) + 1.0);
    }
    let mut inv_sqrt = vec![0.0; n];
    for i in 0..n {
        let deg: f64 = (0..n).map(|j| a.get(i, j)).sum();
        inv_sqrt[i] = 1.0 / deg.sqrt();
    }
    let mut s = Tensor::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s.set(i, j, inv_sqrt[i] * a.get(i, j) * inv_sqrt[j]);
        }
    }
    s
}

/// GCN branch: `layers` propagation steps then a max-pool readout row.
#[allow(clippy::too_many_arguments)]
pub fn gcn_branch(
    tape: &mut Tape,
    x_v: Var,
    s_hat: Var,
    thetas: &[Var],
    act: Activation,
    dropout: f64,
    train: bool,
    seed: u64,
) -> Result<Var> {
    let mut z = x_v;
    for (i, theta) in thetas.iter().enumerate() {
        z = tape.matmul(s_hat, z)?;
        z = tape.matmul(z, *theta)?;
        z = apply_activation(tape, z, act)?;
        if dropout > 0.0 {
            z = tape.dropout(z, dropout, train, mix(&[seed, i as u64]))?;
        }
    }
    tape.global_max_pool(z)
}

/// Shared shape of the hyperedge/hypernode branches:
/// `GMP(MLP(Q . MLP(Q^T feats)))`.
pub fn incidence_branch(
    tape: &mut Tape,
    feats: Var,
    q: Var,
    inner: &MlpVars,
    outer: &MlpVars,
    act: Activation,
) -> Result<Var> {
    let q_t = tape.transpose(q)?;
    let grouped = tape.matmul(q_t, feats)?;
    let h = mlp_forward(tape, grouped, inner, act)?;
    let spread = tape.matmul(q, h)?;
    let h = mlp_forward(tape, spread, outer, act)?;
    tape.global_max_pool(h)
}

/// Attention fusion: weights are a softmax over per-branch scores
/// `tanh(z Xi) . upsilon`. Returns the fused row and the 1 x k weight row.
pub fn attention_fuse(
    tape: &mut Tape,
    embeddings: &[Var],
    transform: Var,
    vector: Var,
) -> Result<(Var, Var)> {
    let mut logits: Option<Var> = None;
    for &z in embeddings {
        let h = tape.matmul(z, transform)?;
        let h = tape.tanh(h)?;
        let score = tape.matmul(h, vector)?;
        logits = Some(match logits {
            None => score,
            Some(prev) => tape.concat_cols(prev, score)?,
        });
    }
    let logits = logits.ok_or(TensorError::ShapeMismatch {
        op: "attention_fuse",
        detail: "no embeddings".into(),
    })?;
    let alphas = tape.softmax_rows(logits)?;
    let mut fused: Option<Var> = None;
    for (i, &z) in embeddings.iter().enumerate() {
        let a = tape.slice_cols(alphas, i, 1)?;
        let term = tape.mul_scalar(z, a)?;
        fused = Some(match fused {
            None => term,
            Some(prev) => tape.add(prev, term)?,
        });
    }
    Ok((fused.expect("embeddings is nonempty"), alphas))
}

/// Unweighted mean of the branch embeddings (attention ablation).
pub fn mean_fuse(tape: &mut Tape, embeddings: &[Var]) -> Result<Var> {
    let mut acc: Option<Var> = None;
    for &z in embeddings {
        acc = Some(match acc {
            None => z,
            Some(prev) => tape.add(prev, z)?,
        });
    }
    let acc = acc.ok_or(TensorError::ShapeMismatch {
        op: "mean_fuse",
        detail: "no embeddings".into(),
    })?;
    tape.scale(acc, 1.0 / embeddings.len() as f64)
}

/// Full forward pass to logits (classification) or a 1x1 score (regression).
pub fn forward(
    tape: &mut Tape,
    bound: &BoundParams,
    sample: &PlanSample,
    cfg: &ModelConfig,
    train: bool,
    dropout_seed: u64,
) -> Result<Var> {
    sample.check_shapes()?;
    let x_v = tape.leaf(sample.x_v.clone());
    let s_hat = tape.leaf(gcn_propagation_matrix(&sample.adjacency));

    let z_gc = gcn_branch(
        tape,
        x_v,
        s_hat,
        &bound.gcn,
        Activation::Relu,
        cfg.dropout,
        train,
        mix(&[dropout_seed, 1]),
    )?;
    let mut embeddings = vec![z_gc];
    if !cfg.ablation.no_hyperedge {
        let q_e = tape.leaf(sample.q_e.clone());
        embeddings.push(incidence_branch(
            tape,
            x_v,
            q_e,
            &bound.hyperedge_inner,
            &bound.hyperedge_outer,
            Activation::Relu,
        )?);
    }
    if !cfg.ablation.no_hypernode {
        let x_e = tape.leaf(sample.x_e.clone());
        let q_v = tape.leaf(sample.q_v.clone());
        embeddings.push(incidence_branch(
            tape,
            x_e,
            q_v,
            &bound.hypernode_inner,
            &bound.hypernode_outer,
            Activation::Relu,
        )?);
    }

    let fused = if cfg.ablation.no_attention {
        mean_fuse(tape, &embeddings)?
    } else {
        attention_fuse(tape, &embeddings, bound.attention_transform, bound.attention_vector)?.0
    };

    // head: hidden block with ReLU and dropout, then a linear output layer
    let mut h = fused;
    let last = bound.head.weights.len() - 1;
    for (i, (w, b)) in bound.head.weights.iter().zip(&bound.head.biases).enumerate() {
        h = tape.matmul(h, *w)?;
        h = tape.add(h, *b)?;
        if i < last {
            h = tape.relu(h)?;
            if cfg.dropout > 0.0 {
                h = tape.dropout(h, cfg.dropout, train, mix(&[dropout_seed, 2, i as u64]))?;
            }
        }
    }
    Ok(h)
}

/// Loss of one sample's forward output against its target.
pub fn sample_loss(tape: &mut Tape, output: Var, target: &Target) -> Result<Var> {
    match target {
        Target::Label(label) => tape.cross_entropy(output, *label),
        Target::Value(v) => tape.mse(output, &Tensor::scalar(*v)),
    }
}
