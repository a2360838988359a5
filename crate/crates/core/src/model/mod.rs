//! Encode-process-decode network for Dijkstra pointers and heuristic values.
//!
//! * encoders: `z_v = x_v Θ_node` with `x_v = [is_source, is_target]`, and
//!   `z_e = [w] Θ_edge` per directed arc (self-arcs carry weight 0);
//! * processor: one message-passing step with max aggregation,
//!   `h_v' = ψ([z_v, h_v, max_u φ([z_v, h_v, z_u, h_u, z_e])])`, where the max
//!   runs over incoming arcs and the node's self-arc;
//! * decoders: `y_v = [z_v, h_v', h_v] Θ_heuristic` and, for every candidate
//!   predecessor `u` of `v`, the pointer logit
//!   `[z_v, h_v', h_v, z_u, h_u', h_u] Θ_pointer`.
//!
//! Two evaluation routes share one parameter layout: the plain route in this
//! module (used for inference and validation) and the tape route in
//! [`TapeModel`] (used for training). Tests check that they agree.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{self, CheckpointError, ParameterStore, Tape, Tensor, TensorError, Var};
use crate::graph::{NodeId, ProblemInstance};
use crate::rng;
use crate::search::HeuristicField;

mod compiled;
pub use compiled::CompiledHeuristic;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint does not match the model layout: {0}")]
    Layout(String),
}

fn default_layers() -> usize {
    2
}

/// Architecture and optimisation hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub mlp_hidden: usize,
    /// Linear layers in each of the message and update networks.
    #[serde(default = "default_layers")]
    pub mlp_layers: usize,
    /// Weight of the squared-norm penalty on the heuristic values.
    pub lambda: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Penalise `y_v - y_u - w_uv` instead of `y_v - y_u` on violated arcs.
    #[serde(default)]
    pub hinge_penalty: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 32,
            mlp_hidden: 32,
            mlp_layers: 2,
            lambda: 1.0,
            learning_rate: 2e-3,
            weight_decay: 1e-3,
            hinge_penalty: false,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("lambda", self.lambda),
            ("learning_rate", self.learning_rate),
            ("weight_decay", self.weight_decay),
        ];
        if self.hidden_dim == 0 || self.mlp_hidden == 0 {
            return Err(ModelError::InvalidConfig(
                "hidden sizes must be positive".into(),
            ));
        }
        if self.mlp_layers == 0 {
            return Err(ModelError::InvalidConfig(
                "mlp_layers must be at least 1".into(),
            ));
        }
        for (name, v) in positive {
            // Zero is allowed for learning rate and decay so that frozen runs are expressible.
            if !(v.is_finite() && v >= 0.0) {
                return Err(ModelError::InvalidConfig(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Layer widths of an MLP from `input` features to `hidden_dim` outputs.
    fn mlp_widths(&self, input: usize) -> Vec<usize> {
        let mut widths = vec![input];
        widths.extend(std::iter::repeat_n(self.mlp_hidden, self.mlp_layers - 1));
        widths.push(self.hidden_dim);
        widths
    }
}

pub const NODE_FEATURES: usize = 2;

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    weight: usize,
    bias: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    node_encoder: usize,
    edge_encoder: usize,
    message: Vec<Layer>,
    update: Vec<Layer>,
    pointer: usize,
    heuristic: usize,
}

/// Learnable weights plus the config that shaped them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    config: ModelConfig,
    store: ParameterStore,
    layout: Layout,
}

fn glorot(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Tensor::new(rows, cols, data).expect("sized by construction")
}

impl ModelParameters {
    fn build(
        config: &ModelConfig,
        mut init: impl FnMut(usize, usize, bool) -> Tensor,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let h = config.hidden_dim;
        let mut store = ParameterStore::new();
        let node_encoder = store.insert("encoder.node", init(NODE_FEATURES, h, false));
        let edge_encoder = store.insert("encoder.edge", init(1, h, false));
        let mut mlp = |store: &mut ParameterStore, prefix: &str, input: usize| -> Vec<Layer> {
            config
                .mlp_widths(input)
                .windows(2)
                .enumerate()
                .map(|(i, w)| Layer {
                    weight: store.insert(format!("{prefix}.{i}.weight"), init(w[0], w[1], false)),
                    bias: store.insert(format!("{prefix}.{i}.bias"), init(1, w[1], true)),
                })
                .collect()
        };
        let message = mlp(&mut store, "message", 5 * h);
        let update = mlp(&mut store, "update", 3 * h);
        let pointer = store.insert("decoder.pointer", init(6 * h, 1, false));
        let heuristic = store.insert("decoder.heuristic", init(3 * h, 1, false));
        Ok(Self {
            config: config.clone(),
            store,
            layout: Layout {
                node_encoder,
                edge_encoder,
                message,
                update,
                pointer,
                heuristic,
            },
        })
    }

    /// Glorot-uniform weights and zero biases, seeded from `config.seed`.
    pub fn init(config: &ModelConfig) -> Result<Self, ModelError> {
        let mut rng = rng::rng_from_seed(rng::derive_seed(config.seed, &[rng::label("init")]));
        Self::build(config, |r, c, bias| {
            if bias {
                Tensor::zeros(r, c)
            } else {
                glorot(&mut rng, r, c)
            }
        })
    }

    pub fn zeros(config: &ModelConfig) -> Result<Self, ModelError> {
        Self::build(config, |r, c, _| Tensor::zeros(r, c))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParameterStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, TensorError> {
        self.store.get(name)
    }

    /// Mutable access to a named parameter.
    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor, TensorError> {
        let i = self
            .store
            .index_of(name)
            .ok_or_else(|| TensorError::UnknownParameter(name.to_owned()))?;
        Ok(self.store.value_mut(i))
    }

    pub fn all_finite(&self) -> bool {
        self.store.all_finite()
    }

    fn value(&self, index: usize) -> &Tensor {
        self.store.value(index)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), ModelError> {
        let config = serde_json::to_string(&self.config).expect("config serialises");
        Ok(autodiff::save_checkpoint(path, &self.store, &config)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let config = serde_json::to_string(&self.config).expect("config serialises");
        let mut buf = Vec::new();
        autodiff::write_checkpoint(&mut buf, &self.store, &config).expect("writing to memory");
        buf
    }

    pub fn from_checkpoint(checkpoint: autodiff::Checkpoint) -> Result<Self, ModelError> {
        let config: ModelConfig = serde_json::from_str(&checkpoint.config)
            .map_err(|e| ModelError::Layout(format!("config echo: {e}")))?;
        let mut params = Self::zeros(&config)?;
        if checkpoint.params.len() != params.store.len() {
            return Err(ModelError::Layout(format!(
                "expected {} parameters, found {}",
                params.store.len(),
                checkpoint.params.len()
            )));
        }
        for (name, tensor) in checkpoint.params.iter() {
            let slot = params
                .get_mut(name)
                .map_err(|e| ModelError::Layout(e.to_string()))?;
            if slot.shape() != tensor.shape() {
                return Err(ModelError::Layout(format!(
                    "`{name}` has shape {:?}, expected {:?}",
                    tensor.shape(),
                    slot.shape()
                )));
            }
            *slot = tensor.clone();
        }
        Ok(params)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ModelError> {
        Self::from_checkpoint(autodiff::load_checkpoint(path)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        Self::from_checkpoint(autodiff::read_checkpoint(bytes)?)
    }
}

/// Arc structure seen by the network: every directed graph arc followed by
/// one self-arc per node (arc `m + v` is `v -> v`).
#[derive(Debug, Clone)]
pub struct ArcLayout {
    pub node_count: usize,
    pub source: NodeId,
    pub target: NodeId,
    pub src: Arc<[usize]>,
    pub dst: Arc<[usize]>,
    /// Edge feature per arc; 0 on self-arcs.
    pub weight: Vec<f64>,
    graph_arcs: usize,
    /// `(sender, arc)` for every graph arc entering each node.
    incoming: Vec<Vec<(NodeId, usize)>>,
}

impl ArcLayout {
    pub fn new(instance: &ProblemInstance) -> Self {
        let g = &instance.graph;
        let n = g.node_count();
        let arcs = g.arcs();
        let m = arcs.len();
        let mut src = Vec::with_capacity(m + n);
        let mut dst = Vec::with_capacity(m + n);
        let mut weight = Vec::with_capacity(m + n);
        for a in arcs {
            src.push(a.src);
            dst.push(a.dst);
            weight.push(a.weight);
        }
        let mut incoming = vec![Vec::new(); n];
        for (i, a) in arcs.iter().enumerate() {
            incoming[a.dst].push((a.src, i));
        }
        for v in 0..n {
            src.push(v);
            dst.push(v);
            weight.push(0.0);
        }
        Self {
            incoming,
            node_count: n,
            source: instance.source,
            target: instance.target,
            src: src.into(),
            dst: dst.into(),
            weight,
            graph_arcs: m,
        }
    }

    pub fn arc_count(&self) -> usize {
        self.src.len()
    }

    pub fn self_arc(&self, v: NodeId) -> usize {
        self.graph_arcs + v
    }

    /// Index of the arc `u -> v` (the self-arc when `u == v`).
    pub fn arc_index(&self, u: NodeId, v: NodeId) -> Option<usize> {
        if u == v {
            return Some(self.self_arc(v));
        }
        self.incoming[v]
            .iter()
            .find(|&&(s, _)| s == u)
            .map(|&(_, a)| a)
    }

    pub fn node_features(&self) -> Tensor {
        let mut x = Tensor::zeros(self.node_count, NODE_FEATURES);
        let d = x.data_mut();
        d[self.source * NODE_FEATURES] = 1.0;
        d[self.target * NODE_FEATURES + 1] = 1.0;
        x
    }

    /// Candidate count per node (incoming arcs plus the self-arc).
    pub fn candidate_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.node_count];
        for &v in self.dst.iter() {
            counts[v] += 1;
        }
        counts
    }
}

/// Row index of the arc `p[v] -> v` for every node `v`, for use as
/// cross-entropy targets.
pub fn pointer_targets(layout: &ArcLayout, predecessors: &[NodeId]) -> Vec<usize> {
    (0..layout.node_count)
        .map(|v| {
            layout
                .arc_index(predecessors[v], v)
                .expect("predecessor is a neighbour or self")
        })
        .collect()
}

/// Encoded node and edge features.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    /// `n x H`
    pub nodes: Tensor,
    /// `(m + n) x H`, self-arcs last.
    pub arcs: Tensor,
}

/// Decoded values of one processor step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutputs {
    /// One logit per arc of the [`ArcLayout`]; arc `u -> v` scores `u` as the
    /// predecessor of `v`.
    pub pointer_logits: Vec<f64>,
    pub heuristic: HeuristicField,
}

/// Work counters for one processor step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub message_evaluations: usize,
    pub update_evaluations: usize,
}

fn dense(input: &[f64], weight: &Tensor, bias: &Tensor, out: &mut Vec<f64>) {
    out.clear();
    out.extend_from_slice(bias.data());
    let m = weight.cols();
    for (p, &x) in input.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (o, &w) in out.iter_mut().zip(&weight.data()[p * m..(p + 1) * m]) {
            *o += x * w;
        }
    }
}

fn row_times(rows: &Tensor, weight: &Tensor, row_offset: usize) -> Vec<f64> {
    // rows (n x k) times weight[row_offset .. row_offset + k] (k x c)
    let (n, k, c) = (rows.rows(), rows.cols(), weight.cols());
    let mut out = vec![0.0; n * c];
    for i in 0..n {
        for p in 0..k {
            let x = rows.get(i, p);
            if x == 0.0 {
                continue;
            }
            let w = &weight.data()[(row_offset + p) * c..(row_offset + p + 1) * c];
            for (o, &wv) in out[i * c..(i + 1) * c].iter_mut().zip(w) {
                *o += x * wv;
            }
        }
    }
    out
}

fn relu_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

/// Linear node and edge encoders.
pub fn encode(params: &ModelParameters, layout: &ArcLayout) -> Encoded {
    let h = params.config.hidden_dim;
    let theta_v = params.value(params.layout.node_encoder);
    let theta_e = params.value(params.layout.edge_encoder);
    let nodes = Tensor::new(
        layout.node_count,
        h,
        row_times(&layout.node_features(), theta_v, 0),
    )
    .expect("n x H");
    let mut arcs = Vec::with_capacity(layout.arc_count() * h);
    for &w in &layout.weight {
        arcs.extend(theta_e.data().iter().map(|t| w * t));
    }
    let arcs = Tensor::new(layout.arc_count(), h, arcs).expect("(m + n) x H");
    Encoded { nodes, arcs }
}

/// One processor step: per-arc messages, elementwise max per destination,
/// then the node update.
pub fn process_step(
    params: &ModelParameters,
    layout: &ArcLayout,
    encoded: &Encoded,
    h_prev: &Tensor,
    stats: &mut StepStats,
) -> Result<Tensor, ModelError> {
    let h = params.config.hidden_dim;
    let n = layout.node_count;
    if h_prev.shape() != [n, h]
        || encoded.nodes.shape() != [n, h]
        || encoded.arcs.shape() != [layout.arc_count(), h]
    {
        return Err(TensorError::ShapeMismatch {
            op: "process_step",
            left: h_prev.shape(),
            right: [n, h],
        }
        .into());
    }
    let msg = &params.layout.message;
    let first = params.value(msg[0].weight);
    // The first message layer acting on [z_v, h_v, z_u, h_u, z_e] splits into
    // per-node terms for the receiver and sender plus a per-arc edge term.
    let state = concat_cols(&encoded.nodes, h_prev);
    let recv = row_times(&state, first, 0);
    let send = row_times(&state, first, 2 * h);
    let edge = row_times(&encoded.arcs, first, 4 * h);
    let width = first.cols();
    let bias0 = params.value(msg[0].bias).data();

    let mut agg = vec![f64::NEG_INFINITY; n * h];
    let mut cur = Vec::with_capacity(width.max(h));
    let mut next = Vec::with_capacity(width.max(h));
    for a in 0..layout.arc_count() {
        let (u, v) = (layout.src[a], layout.dst[a]);
        cur.clear();
        cur.extend(
            (0..width).map(|j| {
                recv[v * width + j] + send[u * width + j] + edge[a * width + j] + bias0[j]
            }),
        );
        for layer in &msg[1..] {
            relu_in_place(&mut cur);
            dense(
                &cur,
                params.value(layer.weight),
                params.value(layer.bias),
                &mut next,
            );
            std::mem::swap(&mut cur, &mut next);
        }
        for (o, &m) in agg[v * h..(v + 1) * h].iter_mut().zip(&cur) {
            if m > *o {
                *o = m;
            }
        }
        stats.message_evaluations += 1;
    }
    // Every node owns a self-arc, so no segment is empty.
    let agg = Tensor::new(n, h, agg)?;
    let update_in = concat_cols(&state, &agg);
    let mut out = Vec::with_capacity(n * h);
    for v in 0..n {
        let mut cur = update_in.row(v).to_vec();
        for (i, layer) in params.layout.update.iter().enumerate() {
            if i > 0 {
                relu_in_place(&mut cur);
            }
            dense(
                &cur,
                params.value(layer.weight),
                params.value(layer.bias),
                &mut next,
            );
            std::mem::swap(&mut cur, &mut next);
        }
        out.extend_from_slice(&cur);
        stats.update_evaluations += 1;
    }
    Ok(Tensor::new(n, h, out)?)
}

fn concat_cols(a: &Tensor, b: &Tensor) -> Tensor {
    let mut data = Vec::with_capacity(a.data().len() + b.data().len());
    for r in 0..a.rows() {
        data.extend_from_slice(a.row(r));
        data.extend_from_slice(b.row(r));
    }
    Tensor::new(a.rows(), a.cols() + b.cols(), data).expect("row counts agree")
}

/// Heuristic and pointer decoders.
pub fn decode_step(
    params: &ModelParameters,
    layout: &ArcLayout,
    encoded: &Encoded,
    h_next: &Tensor,
    h_prev: &Tensor,
) -> StepOutputs {
    let features = concat_cols(&concat_cols(&encoded.nodes, h_next), h_prev);
    let y = row_times(&features, params.value(params.layout.heuristic), 0);
    let pointer = params.value(params.layout.pointer);
    let k = features.cols();
    let as_receiver = row_times(&features, pointer, 0);
    let as_sender = row_times(&features, pointer, k);
    let pointer_logits = (0..layout.arc_count())
        .map(|a| as_receiver[layout.dst[a]] + as_sender[layout.src[a]])
        .collect();
    StepOutputs {
        pointer_logits,
        heuristic: HeuristicField::new(y),
    }
}

/// Encode once, then run `steps` processor/decoder steps from zero latents.
pub fn rollout(
    instance: &ProblemInstance,
    params: &ModelParameters,
    steps: usize,
) -> Result<Vec<StepOutputs>, ModelError> {
    let layout = ArcLayout::new(instance);
    rollout_with_layout(&layout, params, steps, &mut StepStats::default())
}

pub fn rollout_with_layout(
    layout: &ArcLayout,
    params: &ModelParameters,
    steps: usize,
    stats: &mut StepStats,
) -> Result<Vec<StepOutputs>, ModelError> {
    let encoded = encode(params, layout);
    let mut h = Tensor::zeros(layout.node_count, params.config.hidden_dim);
    let mut outputs = Vec::with_capacity(steps);
    for _ in 0..steps {
        let next = process_step(params, layout, &encoded, &h, stats)?;
        outputs.push(decode_step(params, layout, &encoded, &next, &h));
        h = next;
    }
    Ok(outputs)
}

/// Heuristic field from a single processor step.
pub fn infer_heuristic(
    instance: &ProblemInstance,
    params: &ModelParameters,
) -> Result<HeuristicField, ModelError> {
    infer_heuristic_counted(instance, params).map(|(field, _)| field)
}

/// [`infer_heuristic`] plus the work counters of its single step.
pub fn infer_heuristic_counted(
    instance: &ProblemInstance,
    params: &ModelParameters,
) -> Result<(HeuristicField, StepStats), ModelError> {
    let layout = ArcLayout::new(instance);
    let mut stats = StepStats::default();
    let mut out = rollout_with_layout(&layout, params, 1, &mut stats)?;
    Ok((out.pop().expect("one step").heuristic, stats))
}

/// Parameters registered on a tape.
pub struct TapeModel<'a> {
    params: &'a ModelParameters,
    vars: Vec<Var>,
}

/// Tape handles for one decoded step.
#[derive(Debug, Clone, Copy)]
pub struct TapeStep {
    /// `(m + n) x 1`
    pub pointer_logits: Var,
    /// `n x 1`
    pub heuristic: Var,
}

impl<'a> TapeModel<'a> {
    pub fn new(tape: &mut Tape, params: &'a ModelParameters) -> Self {
        let vars = (0..params.store.len())
            .map(|i| tape.param(&params.store, i))
            .collect();
        Self { params, vars }
    }

    fn var(&self, index: usize) -> Var {
        self.vars[index]
    }

    fn mlp(&self, tape: &mut Tape, layers: &[Layer], mut x: Var) -> Result<Var, TensorError> {
        for (i, layer) in layers.iter().enumerate() {
            if i > 0 {
                x = tape.relu(x);
            }
            let y = tape.matmul(x, self.var(layer.weight))?;
            x = tape.add_row(y, self.var(layer.bias))?;
        }
        Ok(x)
    }

    /// Differentiable rollout mirroring [`rollout_with_layout`].
    pub fn rollout(
        &self,
        tape: &mut Tape,
        layout: &ArcLayout,
        steps: usize,
    ) -> Result<Vec<TapeStep>, TensorError> {
        let h = self.params.config.hidden_dim;
        let n = layout.node_count;
        let l = &self.params.layout;
        let x = tape.constant(layout.node_features());
        let z = tape.matmul(x, self.var(l.node_encoder))?;
        let w = tape.constant(Tensor::column(layout.weight.clone()));
        let ze = tape.matmul(w, self.var(l.edge_encoder))?;

        let first = self.var(l.message[0].weight);
        let w_recv = tape.slice_rows(first, 0, 2 * h)?;
        let w_send = tape.slice_rows(first, 2 * h, 2 * h)?;
        let w_edge = tape.slice_rows(first, 4 * h, h)?;
        let edge_term = tape.matmul(ze, w_edge)?;
        let ptr = self.var(l.pointer);
        let ptr_recv = tape.slice_rows(ptr, 0, 3 * h)?;
        let ptr_send = tape.slice_rows(ptr, 3 * h, 3 * h)?;

        let mut h_prev = tape.constant(Tensor::zeros(n, h));
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            let state = tape.concat_cols(&[z, h_prev])?;
            let recv = tape.matmul(state, w_recv)?;
            let send = tape.matmul(state, w_send)?;
            let recv = tape.gather_rows(recv, layout.dst.clone())?;
            let send = tape.gather_rows(send, layout.src.clone())?;
            let pre = tape.add(recv, send)?;
            let pre = tape.add(pre, edge_term)?;
            let mut msg = tape.add_row(pre, self.var(l.message[0].bias))?;
            if l.message.len() > 1 {
                msg = tape.relu(msg);
                msg = self.mlp(tape, &l.message[1..], msg)?;
            }
            let agg = tape.segment_max(msg, &layout.dst, n)?;
            let upd_in = tape.concat_cols(&[state, agg])?;
            let h_next = self.mlp(tape, &l.update, upd_in)?;

            let feats = tape.concat_cols(&[z, h_next, h_prev])?;
            let y = tape.matmul(feats, self.var(l.heuristic))?;
            let a_recv = tape.matmul(feats, ptr_recv)?;
            let a_send = tape.matmul(feats, ptr_send)?;
            let a_recv = tape.gather_rows(a_recv, layout.dst.clone())?;
            let a_send = tape.gather_rows(a_send, layout.src.clone())?;
            let logits = tape.add(a_recv, a_send)?;
            out.push(TapeStep {
                pointer_logits: logits,
                heuristic: y,
            });
            h_prev = h_next;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{
        generate_graph, sample_instance, DistributionConfig, EdgeProbability, Graph,
    };

    fn small_config() -> ModelConfig {
        ModelConfig {
            hidden_dim: 6,
            mlp_hidden: 5,
            seed: 3,
            ..ModelConfig::default()
        }
    }

    fn random_instance(n: usize, seed: u64) -> ProblemInstance {
        let mut s = seed;
        loop {
            let g = generate_graph(&DistributionConfig::new(n, EdgeProbability::Fixed(0.4), s))
                .unwrap();
            if let Ok(inst) = sample_instance(&g, s) {
                return inst;
            }
            s += 1000;
        }
    }

    fn triangle() -> ProblemInstance {
        let g = Graph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 3.0)]).unwrap();
        ProblemInstance::new(g, 0, 2).unwrap()
    }

    #[test]
    fn encoder_shapes_and_zero_encoder() {
        let inst = random_instance(7, 1);
        let layout = ArcLayout::new(&inst);
        let mut params = ModelParameters::init(&small_config()).unwrap();
        let enc = encode(&params, &layout);
        let m = inst.graph.arcs().len();
        assert_eq!(enc.nodes.shape(), [7, 6]);
        assert_eq!(enc.arcs.shape(), [m + 7, 6]);
        *params.get_mut("encoder.node").unwrap() = Tensor::zeros(2, 6);
        assert!(encode(&params, &layout)
            .nodes
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn target_flag_is_row_local() {
        let inst = random_instance(8, 2);
        let params = ModelParameters::init(&small_config()).unwrap();
        let other = (0..8)
            .find(|&v| v != inst.source && v != inst.target)
            .unwrap();
        let moved = ProblemInstance {
            target: other,
            ..inst.clone()
        };
        let a = encode(&params, &ArcLayout::new(&inst)).nodes;
        let b = encode(&params, &ArcLayout::new(&moved)).nodes;
        for v in 0..8 {
            let same = a.row(v) == b.row(v);
            assert_eq!(same, v != inst.target && v != other, "row {v}");
        }
    }

    #[test]
    fn zero_parameters_give_zero_outputs() {
        let params = ModelParameters::zeros(&small_config()).unwrap();
        let inst = random_instance(6, 3);
        let outs = rollout(&inst, &params, 3).unwrap();
        assert_eq!(outs.len(), 3);
        for o in &outs {
            assert!(o.heuristic.values().iter().all(|&v| v == 0.0));
            assert!(o.pointer_logits.iter().all(|&v| v == 0.0));
            assert_eq!(o, &outs[0]);
        }
        assert_eq!(
            infer_heuristic(&inst, &params).unwrap(),
            HeuristicField::zeros(6)
        );
    }

    #[test]
    fn isolated_node_aggregates_its_self_message() {
        // Node 3 is isolated and unflagged, so its update sees only its own
        // self-arc message; an edgeless graph reproduces the same latent.
        let g = Graph::from_edges(4, &[(0, 1, 0.5), (1, 2, 0.7)]).unwrap();
        let inst = ProblemInstance::new(g, 0, 2).unwrap();
        let params = ModelParameters::init(&small_config()).unwrap();
        let layout = ArcLayout::new(&inst);
        let enc = encode(&params, &layout);
        let h1 = process_step(
            &params,
            &layout,
            &enc,
            &Tensor::zeros(4, 6),
            &mut StepStats::default(),
        )
        .unwrap();

        let lone = ProblemInstance {
            graph: Graph::from_edges(3, &[]).unwrap(),
            source: 0,
            target: 1,
        };
        let lone_layout = ArcLayout::new(&lone);
        let lone_enc = encode(&params, &lone_layout);
        let lone_h1 = process_step(
            &params,
            &lone_layout,
            &lone_enc,
            &Tensor::zeros(3, 6),
            &mut StepStats::default(),
        )
        .unwrap();
        assert_eq!(h1.row(3), lone_h1.row(2));
    }

    #[test]
    fn heuristic_decoder_is_linear() {
        let inst = random_instance(6, 4);
        let mut params = ModelParameters::init(&small_config()).unwrap();
        let y1 = infer_heuristic(&inst, &params).unwrap();
        let gh = params.get_mut("decoder.heuristic").unwrap();
        *gh = gh.map(|v| 2.0 * v);
        let y2 = infer_heuristic(&inst, &params).unwrap();
        for (a, b) in y1.values().iter().zip(y2.values()) {
            assert!((2.0 * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        *params.get_mut("decoder.heuristic").unwrap() = Tensor::zeros(18, 1);
        assert_eq!(
            infer_heuristic(&inst, &params).unwrap(),
            HeuristicField::zeros(6)
        );
    }

    #[test]
    fn pointer_candidates_follow_degree() {
        let inst = random_instance(9, 5);
        let layout = ArcLayout::new(&inst);
        let counts = layout.candidate_counts();
        for v in 0..9 {
            assert_eq!(counts[v], inst.graph.degree(v) + 1);
        }
    }

    #[test]
    fn inference_visits_each_arc_once() {
        let inst = random_instance(12, 6);
        let params = ModelParameters::init(&small_config()).unwrap();
        let (_, stats) = infer_heuristic_counted(&inst, &params).unwrap();
        assert_eq!(stats.message_evaluations, inst.graph.arcs().len() + 12);
        assert_eq!(stats.update_evaluations, 12);
    }

    #[test]
    fn latent_recurrence_depends_on_previous_state() {
        let inst = random_instance(6, 7);
        let params = ModelParameters::init(&small_config()).unwrap();
        let layout = ArcLayout::new(&inst);
        let enc = encode(&params, &layout);
        let mut stats = StepStats::default();
        let h1 = process_step(&params, &layout, &enc, &Tensor::zeros(6, 6), &mut stats).unwrap();
        let h2 = process_step(&params, &layout, &enc, &h1, &mut stats).unwrap();
        let mut bumped = h1.clone();
        bumped.data_mut()[0] += 0.5;
        let h2b = process_step(&params, &layout, &enc, &bumped, &mut stats).unwrap();
        assert_ne!(h2, h2b);
    }

    #[test]
    fn plain_and_tape_routes_agree() {
        let inst = random_instance(7, 8);
        for layers in [1, 2, 3] {
            let params = ModelParameters::init(&ModelConfig {
                mlp_layers: layers,
                ..small_config()
            })
            .unwrap();
            let layout = ArcLayout::new(&inst);
            let plain =
                rollout_with_layout(&layout, &params, 3, &mut StepStats::default()).unwrap();
            let mut tape = Tape::new();
            let model = TapeModel::new(&mut tape, &params);
            let taped = model.rollout(&mut tape, &layout, 3).unwrap();
            for (p, t) in plain.iter().zip(&taped) {
                for (a, b) in p
                    .heuristic
                    .values()
                    .iter()
                    .zip(tape.value(t.heuristic).data())
                {
                    assert!((a - b).abs() < 1e-12, "heuristic {a} vs {b}");
                }
                for (a, b) in p
                    .pointer_logits
                    .iter()
                    .zip(tape.value(t.pointer_logits).data())
                {
                    assert!((a - b).abs() < 1e-12, "logit {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn pointer_targets_index_the_right_arcs() {
        let inst = triangle();
        let layout = ArcLayout::new(&inst);
        let targets = pointer_targets(&layout, &[0, 0, 1]);
        assert_eq!(targets[0], layout.self_arc(0));
        for (v, &t) in targets.iter().enumerate().skip(1) {
            assert_eq!(layout.dst[t], v);
        }
        assert_eq!(layout.src[targets[2]], 1);
        assert_eq!(layout.arc_index(1, 2), Some(targets[2]));
        assert_eq!(layout.arc_index(0, 0), Some(layout.self_arc(0)));
    }

    #[test]
    fn checkpoint_round_trip() {
        let params = ModelParameters::init(&small_config()).unwrap();
        let back = ModelParameters::from_bytes(&params.to_bytes()).unwrap();
        assert_eq!(params, back);
        let other = ModelParameters::init(&ModelConfig {
            hidden_dim: 4,
            ..small_config()
        })
        .unwrap();
        let mut bytes = other.to_bytes();
        // Corrupt the config echo so it no longer matches the tensors.
        let text = String::from_utf8_lossy(&bytes).replace("\"hidden_dim\":4", "\"hidden_dim\":5");
        bytes = text.into_bytes();
        assert!(ModelParameters::from_bytes(&bytes).is_err());
    }
}
