//! Monte Carlo tree search over `(state, action)` pairs.
//!
//! A node is a routing state paired with the SWAPs chosen so far in its
//! timestep. Its edges are moves: a SWAP extends the action, a commit closes
//! the timestep and yields the next state with an empty action. Leaves are
//! scored by the evaluator instead of random playouts.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::Serialize;
use thiserror::Error;

use crate::circuit::{self, Circuit};
use crate::evaluator::{AnalyticConfig, Evaluator};
use crate::routing::{
    verify_routed, ActionSet, FeatureSet, Move, QubitMapping, RoutedCircuit, RoutingConfig, RoutingError,
    RoutingState,
};
use crate::topology::Topology;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
    #[error("layer cap of {cap} exceeded with {remaining} gates unscheduled")]
    LayerCap { cap: usize, remaining: usize },
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error("routed output failed verification: {0}")]
    Verification(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchConfig {
    pub c: f64,
    pub gamma: f64,
    pub iterations: usize,
    pub dirichlet_alpha: f64,
    pub dirichlet_epsilon: f64,
    pub reward_gate: f64,
    pub reward_depth: f64,
    pub seed: u64,
    /// Timestep cap; `None` means `50 + 10 * input depth`.
    pub max_layers: Option<usize>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            c: 1.2,
            gamma: 0.95,
            iterations: 300,
            dirichlet_alpha: 0.2,
            dirichlet_epsilon: 0.25,
            reward_gate: 1.0,
            reward_depth: 0.3,
            seed: 0,
            max_layers: None,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |msg: &str| Err(SearchError::InvalidConfig(msg.to_string()));
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.dirichlet_epsilon) {
            return bad("dirichlet epsilon must lie in [0, 1]");
        }
        if self.dirichlet_epsilon > 0.0 && (self.dirichlet_alpha.is_nan() || self.dirichlet_alpha <= 0.0) {
            return bad("dirichlet alpha must be positive");
        }
        if !self.c.is_finite() || self.c < 0.0 {
            return bad("exploration constant must be finite and non-negative");
        }
        if !self.reward_gate.is_finite() || !self.reward_depth.is_finite() {
            return bad("reward weights must be finite");
        }
        Ok(())
    }

    /// Analytic evaluator settings matching this search's reward.
    pub fn analytic(&self) -> AnalyticConfig {
        AnalyticConfig {
            gamma: self.gamma,
            reward_gate: self.reward_gate,
            reward_depth: self.reward_depth,
            ..AnalyticConfig::default()
        }
    }
}

/// Selection score of a move with statistics `(q, n, p)` at a node whose
/// moves have `total` visits. The square root uses `max(total, 1)` so a fresh
/// node follows its prior.
pub fn uct(q: f64, n: u32, p: f64, total: u32, c: f64) -> f64 {
    q + c * f64::from(total.max(1)).sqrt() / (1.0 + f64::from(n)) * p
}

/// Reward for a commit that scheduled `scheduled` gates in the new timestep.
pub fn commit_reward(scheduled: usize, cfg: &SearchConfig) -> f64 {
    cfg.reward_gate * scheduled as f64 - cfg.reward_depth
}

/// Reward for playing `m` from `(state, action)`.
pub fn reward(state: &RoutingState, action: &ActionSet, m: Move, cfg: &SearchConfig) -> f64 {
    match m {
        Move::Swap(..) => 0.0,
        Move::Commit => {
            let mut next = state.clone();
            commit_reward(next.commit(action).len(), cfg)
        }
    }
}

/// Discounted returns along a path, root edge first: walking back from the
/// leaf, `G <- r + gamma * G` starting from `leaf_value`.
pub fn backup_returns(rewards: &[f64], leaf_value: f64, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut g = leaf_value;
    for (slot, r) in out.iter_mut().zip(rewards).rev() {
        g = r + gamma * g;
        *slot = g;
    }
    out
}

/// Running-mean update of a move's `(q, n)` with a new return `g`.
pub fn running_mean(q: f64, n: u32, g: f64) -> (f64, u32) {
    let n = n + 1;
    (q + (g - q) / f64::from(n), n)
}

/// Policy target: visit counts normalized. All-zero counts give all zeros.
pub fn policy_target(visits: &[u32]) -> Vec<f64> {
    let total: u32 = visits.iter().sum();
    if total == 0 {
        return vec![0.0; visits.len()];
    }
    visits.iter().map(|&n| f64::from(n) / f64::from(total)).collect()
}

/// Value target: visit-weighted mean of the move values.
pub fn value_target(visits: &[u32], q: &[f64]) -> f64 {
    let total: u32 = visits.iter().sum();
    if total == 0 {
        return 0.0;
    }
    visits.iter().zip(q).map(|(&n, &q)| f64::from(n) * q).sum::<f64>() / f64::from(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub features: FeatureSet,
    /// One entry per move index; moves the search did not consider are 0.
    pub pi: Vec<f64>,
    pub v: f64,
}

#[derive(Debug, Clone)]
pub struct MoveStats {
    pub mv: Move,
    pub n: u32,
    pub q: f64,
    pub p: f64,
    pub reward: f64,
    pub child: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SearchNode {
    state: Arc<RoutingState>,
    action: ActionSet,
    moves: Vec<MoveStats>,
    value: f64,
}

impl SearchNode {
    pub fn state(&self) -> &RoutingState {
        &self.state
    }

    pub fn action(&self) -> &ActionSet {
        &self.action
    }

    pub fn moves(&self) -> &[MoveStats] {
        &self.moves
    }

    /// Evaluator value recorded at expansion.
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn total_visits(&self) -> u32 {
        self.moves.iter().map(|m| m.n).sum()
    }

    pub fn is_terminal(&self) -> bool {
        self.moves.is_empty()
    }
}

/// Moves chosen from the root up to and including the commit.
#[derive(Debug, Clone)]
pub struct Choice {
    pub moves: Vec<Move>,
    pub action: ActionSet,
    pub samples: Vec<TrainingSample>,
}

/// Arena-backed search tree. Node `0` is the root after every re-root.
#[derive(Debug)]
pub struct SearchTree {
    nodes: Vec<SearchNode>,
    cfg: SearchConfig,
    rng: ChaCha8Rng,
}

impl SearchTree {
    pub fn new(state: RoutingState, evaluator: &dyn Evaluator, cfg: SearchConfig) -> Result<Self, SearchError> {
        cfg.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut tree = Self { nodes: Vec::new(), cfg, rng };
        let root = tree.make_node(Arc::new(state), ActionSet::new(), evaluator);
        tree.nodes.push(root);
        tree.add_root_noise();
        Ok(tree)
    }

    pub fn root(&self) -> &SearchNode {
        &self.nodes[0]
    }

    pub fn node(&self, index: usize) -> &SearchNode {
        &self.nodes[index]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn config(&self) -> &SearchConfig {
        &self.cfg
    }

    fn make_node(&self, state: Arc<RoutingState>, action: ActionSet, evaluator: &dyn Evaluator) -> SearchNode {
        if state.is_done() {
            return SearchNode { state, action, moves: Vec::new(), value: 0.0 };
        }
        let topology = state.topology();
        let eval = evaluator.evaluate(&state.extract_features(&action), topology);
        let candidates = state.useful_moves(&action);
        let mut priors: Vec<f64> = candidates
            .iter()
            .map(|m| {
                let p = eval.prior[m.index(topology).expect("legal move has an index")];
                if p.is_finite() && p > 0.0 {
                    p
                } else {
                    0.0
                }
            })
            .collect();
        let total: f64 = priors.iter().sum();
        if total > 0.0 {
            priors.iter_mut().for_each(|p| *p /= total);
        } else {
            let uniform = 1.0 / priors.len() as f64;
            priors.iter_mut().for_each(|p| *p = uniform);
        }
        let moves = candidates
            .into_iter()
            .zip(priors)
            .map(|(mv, p)| MoveStats { mv, n: 0, q: 0.0, p, reward: 0.0, child: None })
            .collect();
        SearchNode { state, action, moves, value: eval.value }
    }

    fn add_root_noise(&mut self) {
        let (alpha, eps) = (self.cfg.dirichlet_alpha, self.cfg.dirichlet_epsilon);
        let k = self.nodes[0].moves.len();
        if eps == 0.0 || k < 2 {
            return;
        }
        let gamma = Gamma::new(alpha, 1.0).expect("alpha validated positive");
        let mut noise: Vec<f64> = (0..k).map(|_| gamma.sample(&mut self.rng)).collect();
        let total: f64 = noise.iter().sum();
        if total > 0.0 {
            noise.iter_mut().for_each(|x| *x /= total);
        } else {
            noise = vec![0.0; k];
            noise[self.rng.random_range(0..k)] = 1.0;
        }
        for (m, x) in self.nodes[0].moves.iter_mut().zip(noise) {
            m.p = (1.0 - eps) * m.p + eps * x;
        }
    }

    /// Highest-UCT move, ties to the lowest move index.
    fn select(&self, node: usize) -> usize {
        let n = &self.nodes[node];
        let total = n.total_visits();
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, m) in n.moves.iter().enumerate() {
            let score = uct(m.q, m.n, m.p, total, self.cfg.c);
            if score > best_score {
                best = i;
                best_score = score;
            }
        }
        best
    }

    fn expand_child(&mut self, node: usize, i: usize, evaluator: &dyn Evaluator) -> usize {
        let parent = &self.nodes[node];
        let mv = parent.moves[i].mv;
        let (state, action, reward) = match mv {
            Move::Swap(a, b) => {
                let mut action = parent.action.clone();
                let topology = parent.state.topology();
                action.push_edge(topology.edge_index(a, b).expect("swap on an edge"));
                (Arc::clone(&parent.state), action, 0.0)
            }
            Move::Commit => {
                let mut next = RoutingState::clone(&parent.state);
                let scheduled = next.commit(&parent.action);
                (Arc::new(next), ActionSet::new(), commit_reward(scheduled.len(), &self.cfg))
            }
        };
        let child = self.make_node(state, action, evaluator);
        let index = self.nodes.len();
        self.nodes.push(child);
        let stats = &mut self.nodes[node].moves[i];
        stats.child = Some(index);
        stats.reward = reward;
        index
    }

    /// One select / expand / evaluate / backup pass from the root.
    pub fn simulate_once(&mut self, evaluator: &dyn Evaluator) {
        let mut path: Vec<(usize, usize)> = Vec::new();
        let mut node = 0;
        let leaf_value = loop {
            if self.nodes[node].is_terminal() {
                break 0.0;
            }
            let i = self.select(node);
            path.push((node, i));
            match self.nodes[node].moves[i].child {
                Some(child) => node = child,
                None => {
                    let child = self.expand_child(node, i, evaluator);
                    break self.nodes[child].value;
                }
            }
        };
        let rewards: Vec<f64> = path.iter().map(|&(n, i)| self.nodes[n].moves[i].reward).collect();
        let returns = backup_returns(&rewards, leaf_value, self.cfg.gamma);
        for (&(n, i), g) in path.iter().zip(returns) {
            let m = &mut self.nodes[n].moves[i];
            (m.q, m.n) = running_mean(m.q, m.n, g);
        }
    }

    /// Index of the visited move with the highest Q. Ties within 1e-12 go to
    /// the most visited, then the lowest index. `None` when nothing is visited.
    fn best_by_q(&self, node: usize) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, m) in self.nodes[node].moves.iter().enumerate() {
            if m.n == 0 {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(b) => {
                    let cur = &self.nodes[node].moves[b];
                    if m.q > cur.q + 1e-12 || ((m.q - cur.q).abs() <= 1e-12 && m.n > cur.n) {
                        Some(i)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        best
    }

    fn sample_at(&self, node: usize) -> Option<TrainingSample> {
        let n = &self.nodes[node];
        if n.total_visits() == 0 {
            return None;
        }
        let topology = n.state.topology();
        let visits: Vec<u32> = n.moves.iter().map(|m| m.n).collect();
        let q: Vec<f64> = n.moves.iter().map(|m| m.q).collect();
        let mut pi = vec![0.0; topology.edge_count() + 1];
        for (m, p) in n.moves.iter().zip(policy_target(&visits)) {
            pi[m.mv.index(topology).expect("legal move has an index")] = p;
        }
        Some(TrainingSample { features: n.state.extract_features(&n.action), pi, v: value_target(&visits, &q) })
    }

    /// Descends by highest Q until a commit is chosen. Nodes without visited
    /// moves commit. One training sample per visited node on the way.
    pub fn choose_action(&self) -> Choice {
        let mut node = 0;
        let mut moves = Vec::new();
        let mut samples = Vec::new();
        loop {
            samples.extend(self.sample_at(node));
            let n = &self.nodes[node];
            let pick = self.best_by_q(node).map(|i| (n.moves[i].mv, n.moves[i].child));
            match pick {
                Some((Move::Swap(a, b), Some(child))) => {
                    moves.push(Move::Swap(a, b));
                    node = child;
                }
                _ => {
                    moves.push(Move::Commit);
                    return Choice { moves, action: n.action.clone(), samples };
                }
            }
        }
    }

    /// Follows `moves` from the root and promotes the node reached after the
    /// final commit. Statistics of the kept subtree are preserved; everything
    /// else is dropped. Moves missing from the tree are applied directly.
    pub fn reroot(&mut self, moves: &[Move], evaluator: &dyn Evaluator) -> Result<(), SearchError> {
        let mut cursor = Some(0);
        let mut state = Arc::clone(&self.nodes[0].state);
        let mut action = ActionSet::new();
        for &m in moves {
            let (next_state, next_action) = state.apply_move(&action, m)?;
            cursor = cursor.and_then(|n| {
                self.nodes[n].moves.iter().find(|s| s.mv == m).and_then(|s| s.child)
            });
            state = match m {
                Move::Commit => Arc::new(next_state),
                Move::Swap(..) => state,
            };
            action = next_action;
        }
        if !matches!(moves.last(), Some(Move::Commit)) {
            return Err(SearchError::InvalidConfig("re-root path must end in a commit".into()));
        }
        self.nodes = match cursor {
            Some(keep) => self.extract_subtree(keep),
            None => vec![self.make_node(state, action, evaluator)],
        };
        self.add_root_noise();
        Ok(())
    }

    /// Copies the subtree under `keep` into a fresh arena, `keep` first.
    fn extract_subtree(&mut self, keep: usize) -> Vec<SearchNode> {
        let mut old: Vec<Option<SearchNode>> = std::mem::take(&mut self.nodes).into_iter().map(Some).collect();
        let mut out: Vec<SearchNode> = Vec::new();
        let mut queue = std::collections::VecDeque::from([keep]);
        while let Some(i) = queue.pop_front() {
            let mut node = old[i].take().expect("tree nodes have one parent");
            for m in node.moves.iter_mut() {
                if let Some(c) = m.child {
                    // breadth-first order fixes each child's new index
                    m.child = Some(out.len() + 1 + queue.len());
                    queue.push_back(c);
                }
            }
            out.push(node);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RouteReport {
    pub input_depth: usize,
    pub output_depth: usize,
    pub swaps_added: usize,
    pub layers: usize,
    pub wall_time_ms: Option<u64>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct RouteOutcome {
    pub routed: RoutedCircuit,
    pub final_mapping: QubitMapping,
    pub report: RouteReport,
    pub samples: Vec<TrainingSample>,
}

/// Timesteps without a scheduled gate after which a distance-reducing
/// action is forced.
fn stagnation_limit(topology: &Topology) -> usize {
    2 * topology.distances().diameter() as usize + 4
}

/// Routes `circuit` from `allocation`, searching each timestep's action.
pub fn route(
    circuit: &Circuit,
    topology: &Topology,
    evaluator: &dyn Evaluator,
    cfg: &SearchConfig,
    allocation: QubitMapping,
    routing: RoutingConfig,
) -> Result<RouteOutcome, SearchError> {
    let started = Instant::now();
    cfg.validate()?;
    let input_depth = circuit::depth(circuit);
    let cap = cfg.max_layers.unwrap_or(50 + 10 * input_depth);
    let circuit = Arc::new(circuit.clone());
    let topology = Arc::new(topology.clone());
    let state = RoutingState::initial(Arc::clone(&circuit), Arc::clone(&topology), allocation.clone(), routing)?;
    let mut tree = SearchTree::new(state, evaluator, cfg.clone())?;
    let limit = stagnation_limit(&topology);
    let mut samples = Vec::new();
    let mut stagnant = 0;

    while !tree.root().state().is_done() {
        let root_state = tree.root().state();
        if root_state.timestep() >= cap {
            return Err(SearchError::LayerCap { cap, remaining: root_state.remaining_gates() });
        }
        let before = root_state.remaining_gates();
        let moves = if stagnant >= limit {
            escape_moves(root_state)
        } else if tree.root().moves().len() == 1 {
            vec![Move::Commit]
        } else {
            for _ in 0..cfg.iterations {
                tree.simulate_once(evaluator);
            }
            let choice = tree.choose_action();
            samples.extend(choice.samples);
            choice.moves
        };
        tree.reroot(&moves, evaluator)?;
        if tree.root().state().remaining_gates() < before {
            stagnant = 0;
        } else {
            stagnant += 1;
        }
    }

    let final_state = tree.root().state();
    let (routed, final_mapping) = final_state.routed_circuit()?;
    let check = verify_routed(&circuit, &routed, &topology, &allocation);
    if let Some(d) = check.diagnosis {
        return Err(SearchError::Verification(d.to_string()));
    }
    let report = RouteReport {
        input_depth,
        output_depth: routed.depth(),
        swaps_added: routed.swap_count(),
        layers: routed.layers.len(),
        wall_time_ms: Some(started.elapsed().as_millis() as u64),
        seed: cfg.seed,
    };
    Ok(RouteOutcome { routed, final_mapping, report, samples })
}

/// Shortest-path SWAPs for the oldest stuck gate, then commit.
fn escape_moves(state: &RoutingState) -> Vec<Move> {
    let action = state.approach_swaps();
    let mut moves: Vec<Move> = action.pairs(state.topology()).map(|(a, b)| Move::Swap(a, b)).collect();
    moves.push(Move::Commit);
    moves
}
