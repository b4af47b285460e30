//! Edge-convolution policy/value network in double precision with
//! hand-written backpropagation.
//!
//! Node inputs: hop distance to the target node over the graph diameter (`-1`
//! without a target), the lock flag, and the resident qubit's remaining gate
//! count over the largest such count. Edge input: the lock flag.
//!
//! One convolution round: `m_ij = W2 swish(W1 [x_i; x_j - x_i; e_ij])`, max
//! over neighbours, then `h_i = swish(U [x_i; M_i])`. The SWAP logit of an
//! edge is the symmetrized scorer `(g(h_a, h_b) + g(h_b, h_a)) / 2`; commit
//! and value heads read the mean of `h`.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{masked_softmax, Evaluation, Evaluator};
use crate::circuit::random_circuit;
use crate::routing::{FeatureSet, QubitMapping, RoutingConfig};
use crate::search::{route, SearchConfig, SearchError, TrainingSample};
use crate::topology::Topology;

pub const NODE_FEATURES: usize = 3;
pub const HIDDEN: usize = 32;
const MSG_IN: usize = 2 * NODE_FEATURES + 1;
const FORMAT: &str = "qroute-edgeconv";
const VERSION: u32 = 1;

/// `(name, outputs, inputs)` of every affine layer, in storage order.
const LAYERS: [(&str, usize, usize); 12] = [
    ("message.0", HIDDEN, MSG_IN),
    ("message.1", HIDDEN, HIDDEN),
    ("update", HIDDEN, NODE_FEATURES + HIDDEN),
    ("policy.0", HIDDEN, 2 * HIDDEN),
    ("policy.1", HIDDEN, HIDDEN),
    ("policy.2", 1, HIDDEN),
    ("commit.0", HIDDEN, HIDDEN),
    ("commit.1", HIDDEN, HIDDEN),
    ("commit.2", 1, HIDDEN),
    ("value.0", HIDDEN, HIDDEN),
    ("value.1", HIDDEN, HIDDEN),
    ("value.2", 1, HIDDEN),
];

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("buffer holds {have} samples, batch needs {need}")]
    BufferTooSmall { have: usize, need: usize },
    #[error("feature set has {features} nodes, topology {topology}")]
    ShapeMismatch { features: usize, topology: usize },
    #[error("parameter file: {0}")]
    Format(String),
    #[error("parameter file I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Search(#[from] SearchError),
}

fn swish(z: f64) -> f64 {
    z / (1.0 + (-z).exp())
}

fn swish_grad(z: f64) -> f64 {
    let s = 1.0 / (1.0 + (-z).exp());
    s + z * s * (1.0 - s)
}

/// Affine map stored row-major as `rows * cols` weights then `rows` biases.
#[derive(Debug, Clone, Copy)]
struct Linear {
    offset: usize,
    rows: usize,
    cols: usize,
}

impl Linear {
    fn size(&self) -> usize {
        self.rows * (self.cols + 1)
    }

    fn forward(&self, w: &[f64], x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        let (weights, bias) = w[self.offset..self.offset + self.size()].split_at(self.rows * self.cols);
        (0..self.rows)
            .map(|r| bias[r] + weights[r * self.cols..(r + 1) * self.cols].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    /// Accumulates parameter gradients for output gradient `dy` at input `x`
    /// and returns the input gradient.
    fn backward(&self, w: &[f64], x: &[f64], dy: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let weights = &w[self.offset..self.offset + self.rows * self.cols];
        let (gw, gb) = grad[self.offset..self.offset + self.size()].split_at_mut(self.rows * self.cols);
        let mut dx = vec![0.0; self.cols];
        for r in 0..self.rows {
            if dy[r] == 0.0 {
                continue;
            }
            gb[r] += dy[r];
            let row = r * self.cols;
            for c in 0..self.cols {
                gw[row + c] += dy[r] * x[c];
                dx[c] += dy[r] * weights[row + c];
            }
        }
        dx
    }
}

#[derive(Debug, Clone, Copy)]
struct Head {
    l0: Linear,
    l1: Linear,
    l2: Linear,
}

struct HeadCache {
    input: Vec<f64>,
    z0: Vec<f64>,
    a0: Vec<f64>,
    z1: Vec<f64>,
    a1: Vec<f64>,
    out: f64,
}

impl Head {
    fn forward(&self, w: &[f64], input: Vec<f64>) -> HeadCache {
        let z0 = self.l0.forward(w, &input);
        let a0: Vec<f64> = z0.iter().map(|&z| swish(z)).collect();
        let z1 = self.l1.forward(w, &a0);
        let a1: Vec<f64> = z1.iter().map(|&z| swish(z)).collect();
        let out = self.l2.forward(w, &a1)[0];
        HeadCache { input, z0, a0, z1, a1, out }
    }

    fn backward(&self, w: &[f64], c: &HeadCache, dout: f64, grad: &mut [f64]) -> Vec<f64> {
        let da1 = self.l2.backward(w, &c.a1, &[dout], grad);
        let dz1: Vec<f64> = da1.iter().zip(&c.z1).map(|(d, &z)| d * swish_grad(z)).collect();
        let da0 = self.l1.backward(w, &c.a0, &dz1, grad);
        let dz0: Vec<f64> = da0.iter().zip(&c.z0).map(|(d, &z)| d * swish_grad(z)).collect();
        self.l0.backward(w, &c.input, &dz0, grad)
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    msg0: Linear,
    msg1: Linear,
    update: Linear,
    policy: Head,
    commit: Head,
    value: Head,
    total: usize,
}

fn layout() -> Layout {
    let mut offset = 0;
    let mut lin = [Linear { offset: 0, rows: 0, cols: 0 }; LAYERS.len()];
    for (slot, &(_, rows, cols)) in lin.iter_mut().zip(LAYERS.iter()) {
        *slot = Linear { offset, rows, cols };
        offset += slot.size();
    }
    Layout {
        msg0: lin[0],
        msg1: lin[1],
        update: lin[2],
        policy: Head { l0: lin[3], l1: lin[4], l2: lin[5] },
        commit: Head { l0: lin[6], l1: lin[7], l2: lin[8] },
        value: Head { l0: lin[9], l1: lin[10], l2: lin[11] },
        total: offset,
    }
}

/// Hash of the layer manifest; parameter files must match it.
pub fn architecture_hash() -> String {
    let mut h = Sha256::new();
    h.update(format!("{FORMAT}/{VERSION}"));
    for (name, rows, cols) in LAYERS {
        h.update(format!(";{name}:{rows}x{cols}"));
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    weights: Vec<f64>,
}

impl NetParams {
    pub fn zeros() -> Self {
        Self { weights: vec![0.0; layout().total] }
    }

    /// Uniform Glorot initialization of weights, zero biases.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = vec![0.0; layout().total];
        let mut offset = 0;
        for (_, rows, cols) in LAYERS {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            for w in &mut weights[offset..offset + rows * cols] {
                *w = rng.random_range(-bound..bound);
            }
            offset += rows * (cols + 1);
        }
        Self { weights }
    }

    pub fn from_weights(weights: Vec<f64>) -> Result<Self, TrainError> {
        let total = layout().total;
        if weights.len() != total {
            return Err(TrainError::Format(format!("expected {total} weights, found {}", weights.len())));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(TrainError::Format("non-finite weight".into()));
        }
        Ok(Self { weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn squared_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }
}

/// Per-node network inputs.
pub fn node_inputs(f: &FeatureSet, topology: &Topology) -> Vec<[f64; NODE_FEATURES]> {
    let diameter = f64::from(topology.distances().diameter().max(1));
    let longest = f.remaining_targets.iter().copied().max().unwrap_or(0).max(1) as f64;
    (0..f.node_count())
        .map(|i| {
            let distance = match f.node_target[i] {
                Some(j) => f64::from(topology.distance(i, j)) / diameter,
                None => -1.0,
            };
            let q = f.node_qubit[i];
            let remaining = f.remaining_targets.get(q).copied().unwrap_or(0) as f64 / longest;
            [distance, if f.locked_nodes[i] { 1.0 } else { 0.0 }, remaining]
        })
        .collect()
}

struct Message {
    input: [f64; MSG_IN],
    z: Vec<f64>,
    a: Vec<f64>,
    out: Vec<f64>,
}

/// Max-pooling winners per sample, node and channel.
type Winners = Vec<Vec<usize>>;

struct Forward {
    messages: Vec<Message>,
    /// Per node and channel, the message index that won the max.
    winners: Winners,
    update_in: Vec<Vec<f64>>,
    update_z: Vec<Vec<f64>>,
    policy: Vec<(HeadCache, HeadCache)>,
    commit: HeadCache,
    value: HeadCache,
    mask: Vec<bool>,
    prior: Vec<f64>,
}

/// Forward pass. With `frozen`, max pooling reuses the given winners instead
/// of comparing messages, which makes the network smooth in the weights
/// around the point the winners were taken from.
fn forward(
    p: &NetParams,
    f: &FeatureSet,
    topology: &Topology,
    frozen: Option<&Winners>,
) -> Result<Forward, TrainError> {
    let n = topology.node_count();
    if f.node_count() != n || f.locked_edges.len() != topology.edge_count() {
        return Err(TrainError::ShapeMismatch { features: f.node_count(), topology: n });
    }
    let w = &p.weights;
    let l = layout();
    let x = node_inputs(f, topology);

    let mut messages = Vec::with_capacity(2 * topology.edge_count());
    let mut receivers = Vec::with_capacity(2 * topology.edge_count());
    for (e, &(a, b)) in topology.edges().iter().enumerate() {
        let locked = if f.locked_edges[e] { 1.0 } else { 0.0 };
        for (i, j) in [(a, b), (b, a)] {
            let mut input = [0.0; MSG_IN];
            for k in 0..NODE_FEATURES {
                input[k] = x[i][k];
                input[NODE_FEATURES + k] = x[j][k] - x[i][k];
            }
            input[MSG_IN - 1] = locked;
            let z = l.msg0.forward(w, &input);
            let a: Vec<f64> = z.iter().map(|&v| swish(v)).collect();
            let out = l.msg1.forward(w, &a);
            messages.push(Message { input, z, a, out });
            receivers.push(i);
        }
    }
    let winners = match frozen {
        Some(winners) => winners.clone(),
        None => {
            let mut winners = vec![vec![usize::MAX; HIDDEN]; n];
            for (id, (m, &i)) in messages.iter().zip(&receivers).enumerate() {
                for k in 0..HIDDEN {
                    let best = winners[i][k];
                    if best == usize::MAX || m.out[k] > messages[best].out[k] {
                        winners[i][k] = id;
                    }
                }
            }
            winners
        }
    };
    let pooled: Vec<Vec<f64>> = winners
        .iter()
        .map(|row| row.iter().enumerate().map(|(k, &id)| if id == usize::MAX { 0.0 } else { messages[id].out[k] }).collect())
        .collect();

    let mut update_in = Vec::with_capacity(n);
    let mut update_z = Vec::with_capacity(n);
    let mut h: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut input: Vec<f64> = x[i].to_vec();
        input.extend_from_slice(&pooled[i]);
        let z = l.update.forward(w, &input);
        h.push(z.iter().map(|&v| swish(v)).collect::<Vec<f64>>());
        update_in.push(input);
        update_z.push(z);
    }

    let mut logits = vec![0.0; topology.edge_count() + 1];
    let mut policy = Vec::with_capacity(topology.edge_count());
    for (e, &(a, b)) in topology.edges().iter().enumerate() {
        let ab = l.policy.forward(w, [h[a].as_slice(), h[b].as_slice()].concat());
        let ba = l.policy.forward(w, [h[b].as_slice(), h[a].as_slice()].concat());
        logits[e + 1] = 0.5 * (ab.out + ba.out);
        policy.push((ab, ba));
    }
    let mut mean = vec![0.0; HIDDEN];
    for hi in &h {
        for (m, v) in mean.iter_mut().zip(hi) {
            *m += v / n as f64;
        }
    }
    let commit = l.commit.forward(w, mean.clone());
    let value = l.value.forward(w, mean);
    logits[0] = commit.out;
    let mask = f.legal_mask();
    let prior = masked_softmax(&logits, &mask);
    Ok(Forward { messages, winners, update_in, update_z, policy, commit, value, mask, prior })
}

/// Accumulates the gradient of a loss with logit gradient `dlogits` and value
/// gradient `dvalue` into `grad`.
fn backward(p: &NetParams, topology: &Topology, fw: &Forward, dlogits: &[f64], dvalue: f64, grad: &mut [f64]) {
    let w = &p.weights;
    let l = layout();
    let n = topology.node_count();
    let mut dh = vec![vec![0.0; HIDDEN]; n];

    let dmean_c = l.commit.backward(w, &fw.commit, dlogits[0], grad);
    let dmean_v = l.value.backward(w, &fw.value, dvalue, grad);
    for d in dh.iter_mut() {
        for k in 0..HIDDEN {
            d[k] += (dmean_c[k] + dmean_v[k]) / n as f64;
        }
    }
    for (e, &(a, b)) in topology.edges().iter().enumerate() {
        let g = 0.5 * dlogits[e + 1];
        if g == 0.0 {
            continue;
        }
        let (ab, ba) = &fw.policy[e];
        let d_ab = l.policy.backward(w, ab, g, grad);
        let d_ba = l.policy.backward(w, ba, g, grad);
        for k in 0..HIDDEN {
            dh[a][k] += d_ab[k] + d_ba[HIDDEN + k];
            dh[b][k] += d_ab[HIDDEN + k] + d_ba[k];
        }
    }

    let mut dmessage = vec![vec![0.0; HIDDEN]; fw.messages.len()];
    for i in 0..n {
        let dz: Vec<f64> = dh[i].iter().zip(&fw.update_z[i]).map(|(d, &z)| d * swish_grad(z)).collect();
        let dinput = l.update.backward(w, &fw.update_in[i], &dz, grad);
        for k in 0..HIDDEN {
            let id = fw.winners[i][k];
            if id != usize::MAX {
                dmessage[id][k] += dinput[NODE_FEATURES + k];
            }
        }
    }
    for (m, dm) in fw.messages.iter().zip(&dmessage) {
        if dm.iter().all(|&v| v == 0.0) {
            continue;
        }
        let da = l.msg1.backward(w, &m.a, dm, grad);
        let dz: Vec<f64> = da.iter().zip(&m.z).map(|(d, &z)| d * swish_grad(z)).collect();
        l.msg0.backward(w, &m.input, &dz, grad);
    }
}

pub fn nn_forward(p: &NetParams, f: &FeatureSet, topology: &Topology) -> Result<Evaluation, TrainError> {
    let fw = forward(p, f, topology, None)?;
    Ok(Evaluation { value: fw.value.out, prior: fw.prior })
}

#[derive(Debug, Clone)]
pub struct NnEvaluator {
    params: Arc<NetParams>,
}

impl NnEvaluator {
    pub fn new(params: NetParams) -> Self {
        Self { params: Arc::new(params) }
    }

    pub fn params(&self) -> &NetParams {
        &self.params
    }
}

impl Evaluator for NnEvaluator {
    fn evaluate(&self, features: &FeatureSet, topology: &Topology) -> Evaluation {
        nn_forward(&self.params, features, topology).expect("search features match their topology")
    }
}

fn sample_terms(fw: &Forward, s: &TrainingSample) -> (f64, Vec<f64>, f64) {
    let mut ce = 0.0;
    let mut dlogits = vec![0.0; fw.prior.len()];
    let mass: f64 = s.pi.iter().sum();
    for k in 0..fw.prior.len() {
        if s.pi[k] > 0.0 {
            ce -= s.pi[k] * fw.prior[k].ln();
        }
        if fw.mask[k] {
            dlogits[k] = mass * fw.prior[k] - s.pi[k];
        }
    }
    let diff = s.v - fw.value.out;
    (ce + diff * diff, dlogits, -2.0 * diff)
}

/// Mean over the batch of cross-entropy plus squared value error, plus
/// `l2` times the squared parameter norm.
pub fn loss(p: &NetParams, topology: &Topology, batch: &[TrainingSample], l2: f64) -> Result<f64, TrainError> {
    loss_frozen(p, topology, batch, l2, None)
}

fn loss_frozen(
    p: &NetParams,
    topology: &Topology,
    batch: &[TrainingSample],
    l2: f64,
    frozen: Option<&[Winners]>,
) -> Result<f64, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let mut total = 0.0;
    for (k, s) in batch.iter().enumerate() {
        total += sample_terms(&forward(p, &s.features, topology, frozen.map(|w| &w[k]))?, s).0;
    }
    Ok(total / batch.len() as f64 + l2 * p.squared_norm())
}

pub fn loss_and_grad(
    p: &NetParams,
    topology: &Topology,
    batch: &[TrainingSample],
    l2: f64,
) -> Result<(f64, Vec<f64>), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; p.len()];
    let mut total = 0.0;
    for s in batch {
        let fw = forward(p, &s.features, topology, None)?;
        let (term, mut dlogits, dvalue) = sample_terms(&fw, s);
        total += term;
        dlogits.iter_mut().for_each(|d| *d *= scale);
        backward(p, topology, &fw, &dlogits, dvalue * scale, &mut grad);
    }
    for (g, w) in grad.iter_mut().zip(&p.weights) {
        *g += 2.0 * l2 * w;
    }
    Ok((total * scale + l2 * p.squared_norm(), grad))
}

/// Largest relative error between `analytic` and central differences of the
/// loss over the listed parameter indices. Max-pooling winners are held at
/// their values for `p`, so a difference step never straddles a switch of
/// the pooled message. Gradients below `1e-6` in both estimates are compared
/// on an absolute scale.
pub fn compare_gradients(
    p: &NetParams,
    topology: &Topology,
    batch: &[TrainingSample],
    l2: f64,
    analytic: &[f64],
    indices: &[usize],
    step: f64,
) -> Result<f64, TrainError> {
    let winners = batch
        .iter()
        .map(|s| forward(p, &s.features, topology, None).map(|fw| fw.winners))
        .collect::<Result<Vec<_>, _>>()?;
    let mut worst: f64 = 0.0;
    let mut probe = p.clone();
    for &i in indices {
        let original = probe.weights[i];
        probe.weights[i] = original + step;
        let up = loss_frozen(&probe, topology, batch, l2, Some(&winners))?;
        probe.weights[i] = original - step;
        let down = loss_frozen(&probe, topology, batch, l2, Some(&winners))?;
        probe.weights[i] = original;
        let numeric = (up - down) / (2.0 * step);
        let scale = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / scale);
    }
    Ok(worst)
}

/// Checks backpropagation against central differences on `count` parameters
/// drawn with `seed`. Returns the largest relative error.
pub fn grad_check(
    p: &NetParams,
    topology: &Topology,
    batch: &[TrainingSample],
    step: f64,
    count: usize,
    seed: u64,
) -> Result<f64, TrainError> {
    let l2 = 1e-4;
    let (_, grad) = loss_and_grad(p, topology, batch, l2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices = sample(&mut rng, p.len(), count.min(p.len())).into_vec();
    compare_gradients(p, topology, batch, l2, &grad, &indices, step)
}

/// Bounded FIFO of training samples.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    samples: VecDeque<TrainingSample>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, samples: VecDeque::with_capacity(capacity.min(1 << 16)) }
    }

    pub fn push(&mut self, s: TrainingSample) {
        if self.capacity == 0 {
            return;
        }
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(s);
    }

    pub fn extend(&mut self, samples: impl IntoIterator<Item = TrainingSample>) {
        for s in samples {
            self.push(s);
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> Option<&TrainingSample> {
        self.samples.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &TrainingSample> {
        self.samples.iter()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { steps: 200, lr: 1e-3, batch_size: 64, momentum: 0.9, l2: 1e-4, seed: 0 }
    }
}

/// Mini-batch gradient descent with momentum. Returns the trained
/// parameters and the loss of each step's batch before its update.
pub fn train(
    p: &NetParams,
    topology: &Topology,
    buffer: &ReplayBuffer,
    cfg: &TrainConfig,
) -> Result<(NetParams, Vec<f64>), TrainError> {
    if buffer.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    if buffer.len() < cfg.batch_size {
        return Err(TrainError::BufferTooSmall { have: buffer.len(), need: cfg.batch_size });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = p.clone();
    let mut velocity = vec![0.0; params.len()];
    let mut curve = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let mut picks = sample(&mut rng, buffer.len(), cfg.batch_size.max(1)).into_vec();
        picks.sort_unstable();
        let batch: Vec<TrainingSample> = picks.iter().map(|&i| buffer.samples[i].clone()).collect();
        let (value, grad) = loss_and_grad(&params, topology, &batch, cfg.l2)?;
        curve.push(value);
        for ((w, v), g) in params.weights.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
            *v = cfg.momentum * *v - cfg.lr * g;
            *w += *v;
        }
    }
    Ok((params, curve))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfPlayConfig {
    pub circuits: usize,
    pub min_gates: usize,
    pub max_gates: usize,
    pub search: SearchConfig,
    pub seed: u64,
}

impl Default for SelfPlayConfig {
    fn default() -> Self {
        Self {
            circuits: 8,
            min_gates: 10,
            max_gates: 50,
            search: SearchConfig { iterations: 100, ..SearchConfig::default() },
            seed: 0,
        }
    }
}

impl SelfPlayConfig {
    /// Gate count of the `k`th circuit: linear ramp from `min_gates` to
    /// `max_gates` across the run.
    pub fn gates_for(&self, k: usize) -> usize {
        if self.circuits <= 1 {
            return self.min_gates;
        }
        let span = self.max_gates.saturating_sub(self.min_gates);
        self.min_gates + span * k / (self.circuits - 1)
    }
}

/// Routes random circuits with `evaluator` and collects the search targets.
pub fn selfplay(
    topology: &Topology,
    evaluator: &dyn Evaluator,
    cfg: &SelfPlayConfig,
    buffer: &mut ReplayBuffer,
) -> Result<usize, TrainError> {
    let n = topology.node_count();
    let mut collected = 0;
    for k in 0..cfg.circuits {
        let seed = cfg.seed.wrapping_mul(1_000_003).wrapping_add(k as u64);
        let c = random_circuit(n, cfg.gates_for(k), seed);
        let alloc = QubitMapping::identity(n, n).map_err(SearchError::from)?;
        let search = SearchConfig { seed, ..cfg.search.clone() };
        let out = route(&c, topology, evaluator, &search, alloc, RoutingConfig::default())?;
        collected += out.samples.len();
        buffer.extend(out.samples);
    }
    Ok(collected)
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerManifest {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamFile {
    format: String,
    version: u32,
    architecture: String,
    layers: Vec<LayerManifest>,
    weights: Vec<f64>,
}

pub fn save_params(p: &NetParams, path: impl AsRef<Path>) -> Result<(), TrainError> {
    let file = ParamFile {
        format: FORMAT.into(),
        version: VERSION,
        architecture: architecture_hash(),
        layers: LAYERS.iter().map(|&(name, rows, cols)| LayerManifest { name: name.into(), rows, cols }).collect(),
        weights: p.weights.clone(),
    };
    let text = serde_json::to_string(&file).map_err(|e| TrainError::Format(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn load_params(path: impl AsRef<Path>) -> Result<NetParams, TrainError> {
    let text = fs::read_to_string(path)?;
    let file: ParamFile = serde_json::from_str(&text).map_err(|e| TrainError::Format(e.to_string()))?;
    if file.format != FORMAT || file.version != VERSION {
        return Err(TrainError::Format(format!("unsupported format {} v{}", file.format, file.version)));
    }
    if file.architecture != architecture_hash() {
        return Err(TrainError::Format("architecture hash mismatch".into()));
    }
    let shapes_match = file.layers.len() == LAYERS.len()
        && file.layers.iter().zip(LAYERS.iter()).all(|(m, &(name, rows, cols))| m.name == name && m.rows == rows && m.cols == cols);
    if !shapes_match {
        return Err(TrainError::Format("layer manifest does not match the network".into()));
    }
    NetParams::from_weights(file.weights)
}
