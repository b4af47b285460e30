use super::{LockTable, QubitMapping, RoutingState};
use crate::topology::Topology;

/// Evaluator input for a `(state, action)` pair.
///
/// Built from the state with the action's SWAPs applied and locked, before
/// the clock advances, so `locked_edges` is exactly the set of edges that can
/// no longer receive a SWAP in this timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    /// `node_target[i] = Some(j)` when the qubit on node `i` has its next
    /// unscheduled gate with the qubit on node `j`.
    pub node_target: Vec<Option<usize>>,
    /// One flag per topology edge, in edge order.
    pub locked_edges: Vec<bool>,
    pub locked_nodes: Vec<bool>,
    /// Logical qubit resident on each node (padding ids included).
    pub node_qubit: Vec<usize>,
    /// Unscheduled gate count per program qubit.
    pub remaining_targets: Vec<usize>,
}

impl FeatureSet {
    pub(super) fn build(state: &RoutingState, mapping: &QubitMapping, locks: &LockTable) -> Self {
        let topology = state.topology();
        let n = topology.node_count();
        let circuit = state.circuit();
        let mut node_target = vec![None; n];
        let mut node_qubit = vec![0; n];
        for (node, target) in node_target.iter_mut().enumerate() {
            let q = mapping.qubit_at(node);
            node_qubit[node] = q;
            if let Some(g) = state.head(q) {
                *target = Some(mapping.node_of(circuit.gate(g).partner(q)));
            }
        }
        let locked_nodes: Vec<bool> = (0..n).map(|i| locks.is_locked(i)).collect();
        let locked_edges = topology.edges().iter().map(|&(a, b)| locked_nodes[a] || locked_nodes[b]).collect();
        let remaining_targets = state
            .progress()
            .iter()
            .enumerate()
            .map(|(q, &p)| circuit.queue(q).len() - p)
            .collect();
        Self { node_target, locked_edges, locked_nodes, node_qubit, remaining_targets }
    }

    pub fn node_count(&self) -> usize {
        self.node_target.len()
    }

    /// Entry `(i, j)` of the node-target matrix.
    pub fn targets(&self, i: usize, j: usize) -> bool {
        self.node_target[i] == Some(j)
    }

    /// Dense boolean node-target matrix, row-major.
    pub fn target_matrix(&self) -> Vec<Vec<bool>> {
        let n = self.node_count();
        (0..n).map(|i| (0..n).map(|j| self.targets(i, j)).collect()).collect()
    }

    pub fn remaining_gate_count(&self) -> usize {
        self.remaining_targets.iter().sum::<usize>() / 2
    }

    pub fn is_done(&self) -> bool {
        self.remaining_targets.iter().all(|&r| r == 0)
    }

    /// Unordered `(node, target node)` pairs, each listed once.
    pub fn target_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs: Vec<(usize, usize)> = self
            .node_target
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.map(|j| (i.min(j), i.max(j))))
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        pairs
    }

    /// Reduction in summed target-pair distance from swapping the contents of
    /// nodes `a` and `b`. Negative when the swap moves qubits apart.
    pub fn swap_gain(&self, topology: &Topology, a: usize, b: usize) -> i64 {
        let moved = |x: usize| if x == a { b } else if x == b { a } else { x };
        let mut pairs = [None, None];
        for (slot, node) in pairs.iter_mut().zip([a, b]) {
            *slot = self.node_target[node].map(|t| (node.min(t), node.max(t)));
        }
        if pairs[0] == pairs[1] {
            pairs[1] = None;
        }
        pairs
            .into_iter()
            .flatten()
            .map(|(u, v)| topology.distance(u, v) as i64 - topology.distance(moved(u), moved(v)) as i64)
            .sum()
    }

    /// Move-legality mask in move-index order (`0` is commit).
    pub fn legal_mask(&self) -> Vec<bool> {
        std::iter::once(true).chain(self.locked_edges.iter().map(|&l| !l)).collect()
    }
}
