//! Heuristic evaluation of `(state, action)` pairs: a distance-based analytic
//! evaluator and a small edge-convolution network with its training loop.

use crate::routing::FeatureSet;
use crate::topology::Topology;

pub mod nn;

pub use nn::{
    compare_gradients, grad_check, load_params, loss, loss_and_grad, nn_forward, save_params, selfplay, train,
    NetParams, NnEvaluator, ReplayBuffer, SelfPlayConfig, TrainConfig, TrainError,
};

/// Value estimate plus one prior entry per move index (`0` is commit, `e + 1`
/// is the SWAP on edge `e`). Illegal moves carry zero mass.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub prior: Vec<f64>,
}

pub trait Evaluator: Send + Sync {
    fn evaluate(&self, features: &FeatureSet, topology: &Topology) -> Evaluation;
}

/// Softmax of `scores` over entries where `mask` is set; masked entries get 0.
pub fn masked_softmax(scores: &[f64], mask: &[bool]) -> Vec<f64> {
    debug_assert_eq!(scores.len(), mask.len());
    let max = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&s, _)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![0.0; scores.len()];
    }
    let mut out: Vec<f64> = scores.iter().zip(mask).map(|(&s, &m)| if m { (s - max).exp() } else { 0.0 }).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

/// Weights shared with the search reward so value estimates are in the same
/// units as backed-up returns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticConfig {
    pub gamma: f64,
    pub reward_gate: f64,
    pub reward_depth: f64,
    /// Extra per-hop penalty, in units of `reward_depth`, for target pairs that
    /// are still apart.
    pub distance_weight: f64,
}

impl Default for AnalyticConfig {
    fn default() -> Self {
        Self { gamma: 0.95, reward_gate: 1.0, reward_depth: 0.3, distance_weight: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AnalyticEvaluator {
    pub config: AnalyticConfig,
}

impl AnalyticEvaluator {
    pub fn new(config: AnalyticConfig) -> Self {
        Self { config }
    }
}

impl Evaluator for AnalyticEvaluator {
    fn evaluate(&self, features: &FeatureSet, topology: &Topology) -> Evaluation {
        analytic_evaluate(features, topology, &self.config)
    }
}

/// `sum_{k < layers} gamma^k`.
pub fn horizon(gamma: f64, layers: f64) -> f64 {
    if gamma >= 1.0 {
        layers
    } else {
        (1.0 - gamma.powf(layers)) / (1.0 - gamma)
    }
}

/// Layer estimate for the unscheduled remainder: the longest per-qubit queue
/// or the gate count at full parallelism, plus the layers needed to close the
/// widest target gap with SWAPs from both ends.
pub fn remaining_layers(f: &FeatureSet, topology: &Topology) -> f64 {
    let gates = f.remaining_gate_count();
    if gates == 0 {
        return 0.0;
    }
    let longest = f.remaining_targets.iter().copied().max().unwrap_or(0);
    let active = f.remaining_targets.iter().filter(|&&r| r > 0).count();
    let parallel = gates.div_ceil((active / 2).max(1));
    let gap = f
        .target_pairs()
        .iter()
        .map(|&(a, b)| (topology.distance(a, b) as usize).saturating_sub(1).div_ceil(2))
        .max()
        .unwrap_or(0);
    (longest.max(parallel) + gap) as f64
}

/// Distance-driven value and prior.
///
/// The value spreads the remaining gate reward evenly over the estimated
/// remaining layers, charges the per-layer penalty for each, and subtracts a
/// per-hop penalty for every target pair not yet adjacent. The result is
/// clamped to the range reachable by discounted per-step rewards.
pub fn analytic_evaluate(f: &FeatureSet, topology: &Topology, cfg: &AnalyticConfig) -> Evaluation {
    let mut prior = vec![0.0; topology.edge_count() + 1];
    if f.is_done() {
        prior[0] = 1.0;
        return Evaluation { value: 0.0, prior };
    }
    let mask = f.legal_mask();
    let mut scores = vec![0.0; mask.len()];
    for (e, &(a, b)) in topology.edges().iter().enumerate() {
        if mask[e + 1] {
            scores[e + 1] = f.swap_gain(topology, a, b) as f64;
        }
    }
    let prior = masked_softmax(&scores, &mask);

    let layers = remaining_layers(f, topology);
    let gates = f.remaining_gate_count() as f64;
    let excess: f64 = f.target_pairs().iter().map(|&(a, b)| topology.distance(a, b) as f64 - 1.0).sum();
    let per_layer = cfg.reward_gate * gates / layers - cfg.reward_depth;
    let mut value = per_layer * horizon(cfg.gamma, layers) - cfg.distance_weight * cfg.reward_depth * excess;
    if cfg.gamma < 1.0 {
        let widest = (f.node_count() / 2) as f64;
        let lo = -cfg.reward_depth / (1.0 - cfg.gamma);
        let hi = (cfg.reward_gate * widest - cfg.reward_depth) / (1.0 - cfg.gamma);
        value = value.clamp(lo, hi);
    }
    if value == 0.0 {
        // keep zero reserved for finished states
        value = -f64::EPSILON;
    }
    Evaluation { value, prior }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::circuit::{random_circuit, Circuit};
    use crate::routing::{ActionSet, QubitMapping, RoutingConfig, RoutingState};
    use proptest::prelude::*;

    fn state(t: Topology, pairs: &[(usize, usize)]) -> RoutingState {
        let c = Circuit::new(t.node_count(), pairs).unwrap();
        let alloc = QubitMapping::identity(c.qubit_count(), t.node_count()).unwrap();
        RoutingState::initial(Arc::new(c), Arc::new(t), alloc, RoutingConfig::default()).unwrap()
    }

    #[test]
    fn done_state_puts_all_mass_on_commit() {
        let s = state(Topology::line(4).unwrap(), &[(0, 1)]);
        let e = analytic_evaluate(&s.extract_features(&ActionSet::new()), s.topology(), &AnalyticConfig::default());
        assert_eq!(e.value, 0.0);
        assert_eq!(e.prior, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn distance_reducing_swaps_outrank_commit() {
        let s = state(Topology::line(4).unwrap(), &[(0, 3)]);
        let e = analytic_evaluate(&s.extract_features(&ActionSet::new()), s.topology(), &AnalyticConfig::default());
        let z = 2.0 + 2.0 * 1f64.exp();
        let expected = [1.0 / z, 1f64.exp() / z, 1.0 / z, 1f64.exp() / z];
        for (p, x) in e.prior.iter().zip(expected) {
            assert!((p - x).abs() < 1e-12);
        }
        assert_ne!(e.value, 0.0);
    }

    #[test]
    fn separating_swap_ranks_below_commit() {
        let s = state(Topology::line(5).unwrap(), &[(1, 3)]);
        let f = s.extract_features(&ActionSet::new());
        let e = analytic_evaluate(&f, s.topology(), &AnalyticConfig::default());
        assert_eq!(f.swap_gain(s.topology(), 0, 1), -1);
        assert!(e.prior[1] < e.prior[0]);
        assert!(e.prior[2] > e.prior[0]);
    }

    #[test]
    fn masked_softmax_normalizes_and_masks() {
        let p = masked_softmax(&[0.0, 100.0, 1.0], &[true, false, true]);
        assert_eq!(p[1], 0.0);
        assert!((p[0] + p[2] - 1.0).abs() < 1e-15);
        assert!(p[2] > p[0]);
    }

    proptest! {
        #[test]
        fn prior_normalized_and_value_zero_iff_done(seed in 0u64..10_000, gates in 0usize..25, commits in 0usize..6) {
            let t = Topology::grid(3, 3).unwrap();
            let c = random_circuit(9, gates, seed);
            let alloc = QubitMapping::random(9, 9, seed).unwrap();
            let mut s = RoutingState::initial(Arc::new(c), Arc::new(t), alloc, RoutingConfig { swap_duration: 1 + (seed % 3) as u32 }).unwrap();
            for _ in 0..commits {
                let a = s.greedy_swaps(&ActionSet::new());
                s.commit(&a);
            }
            let a = s.greedy_swaps(&ActionSet::new());
            let f = s.extract_features(&a);
            let e = analytic_evaluate(&f, s.topology(), &AnalyticConfig::default());
            let mask = f.legal_mask();
            let total: f64 = e.prior.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            for (p, m) in e.prior.iter().zip(&mask) {
                prop_assert!(*p >= 0.0);
                if !m { prop_assert_eq!(*p, 0.0); }
            }
            prop_assert!(e.value.is_finite());
            prop_assert_eq!(e.value == 0.0, s.is_done());
        }
    }
}
