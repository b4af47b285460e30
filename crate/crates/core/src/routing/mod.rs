//! The compilation state machine.
//!
//! A [`RoutingState`] is the snapshot `(topology, mapping, progress, locks)` at one
//! timestep. Each timestep starts with a greedy pass that schedules every gate
//! that is current for both of its qubits, local, and on unlocked nodes. The
//! remaining freedom is the set of SWAPs to insert, which is built one
//! [`Move`] at a time inside an [`ActionSet`] and applied by [`Move::Commit`].

mod features;
mod output;

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::circuit::Circuit;
use crate::topology::Topology;

pub use features::FeatureSet;
pub use output::{
    verify_routed, Diagnosis, OpKind, PlacedAnnotation, RoutedCircuit, RoutedLayer, RoutedOp, Verification,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RoutingError {
    #[error("circuit has {qubits} qubits but the device only has {nodes} nodes")]
    TooManyQubits { qubits: usize, nodes: usize },
    #[error("allocation maps {got} qubits, circuit has {expected}")]
    AllocationSize { expected: usize, got: usize },
    #[error("allocation is not injective: node {node} used twice")]
    NotInjective { node: usize },
    #[error("allocation node {node} is outside the device (0..{nodes})")]
    NodeOutOfRange { node: usize, nodes: usize },
    #[error("illegal move {0}")]
    IllegalMove(Move),
    #[error("routing is not finished: {remaining} gates unscheduled")]
    NotDone { remaining: usize },
}

/// Bijection between logical qubits and device nodes.
///
/// Logical ids `0..program_qubits` are circuit qubits; the rest are idle
/// padding so every node always holds exactly one qubit.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QubitMapping {
    program_qubits: usize,
    qubit_to_node: Vec<usize>,
    node_to_qubit: Vec<usize>,
}

impl QubitMapping {
    pub fn identity(program_qubits: usize, node_count: usize) -> Result<Self, RoutingError> {
        Self::from_allocation(&(0..program_qubits).collect::<Vec<_>>(), node_count)
    }

    /// `allocation[q]` is the node of program qubit `q`; free nodes receive
    /// padding qubits in increasing node order.
    pub fn from_allocation(allocation: &[usize], node_count: usize) -> Result<Self, RoutingError> {
        if allocation.len() > node_count {
            return Err(RoutingError::TooManyQubits { qubits: allocation.len(), nodes: node_count });
        }
        let mut node_to_qubit = vec![usize::MAX; node_count];
        for (q, &node) in allocation.iter().enumerate() {
            if node >= node_count {
                return Err(RoutingError::NodeOutOfRange { node, nodes: node_count });
            }
            if node_to_qubit[node] != usize::MAX {
                return Err(RoutingError::NotInjective { node });
            }
            node_to_qubit[node] = q;
        }
        let mut qubit_to_node = allocation.to_vec();
        for (node, slot) in node_to_qubit.iter_mut().enumerate() {
            if *slot == usize::MAX {
                *slot = qubit_to_node.len();
                qubit_to_node.push(node);
            }
        }
        Ok(Self { program_qubits: allocation.len(), qubit_to_node, node_to_qubit })
    }

    /// Uniformly random placement of program qubits.
    pub fn random(program_qubits: usize, node_count: usize, seed: u64) -> Result<Self, RoutingError> {
        if program_qubits > node_count {
            return Err(RoutingError::TooManyQubits { qubits: program_qubits, nodes: node_count });
        }
        let mut nodes: Vec<usize> = (0..node_count).collect();
        nodes.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        nodes.truncate(program_qubits);
        Self::from_allocation(&nodes, node_count)
    }

    pub fn program_qubits(&self) -> usize {
        self.program_qubits
    }

    pub fn node_count(&self) -> usize {
        self.node_to_qubit.len()
    }

    pub fn node_of(&self, qubit: usize) -> usize {
        self.qubit_to_node[qubit]
    }

    pub fn qubit_at(&self, node: usize) -> usize {
        self.node_to_qubit[node]
    }

    pub fn is_padding(&self, qubit: usize) -> bool {
        qubit >= self.program_qubits
    }

    /// Node of each program qubit.
    pub fn allocation(&self) -> &[usize] {
        &self.qubit_to_node[..self.program_qubits]
    }

    pub fn swap_nodes(&mut self, a: usize, b: usize) {
        let (qa, qb) = (self.node_to_qubit[a], self.node_to_qubit[b]);
        self.node_to_qubit.swap(a, b);
        self.qubit_to_node[qa] = b;
        self.qubit_to_node[qb] = a;
    }
}

/// Remaining busy timesteps per node.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LockTable {
    busy: Vec<u32>,
}

impl LockTable {
    pub fn new(node_count: usize) -> Self {
        Self { busy: vec![0; node_count] }
    }

    pub fn busy(&self, node: usize) -> u32 {
        self.busy[node]
    }

    pub fn is_locked(&self, node: usize) -> bool {
        self.busy[node] > 0
    }

    pub fn lock(&mut self, node: usize, duration: u32) {
        self.busy[node] = self.busy[node].max(duration);
    }

    pub fn tick(&mut self) {
        for b in &mut self.busy {
            *b = b.saturating_sub(1);
        }
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.busy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Move {
    Commit,
    /// Always stored with the lower node first.
    Swap(usize, usize),
}

impl Move {
    pub fn swap(a: usize, b: usize) -> Self {
        Move::Swap(a.min(b), a.max(b))
    }

    /// Dense index: 0 is `Commit`, `e + 1` swaps along edge `e`.
    pub fn index(&self, topology: &Topology) -> Option<usize> {
        match *self {
            Move::Commit => Some(0),
            Move::Swap(a, b) => topology.edge_index(a, b).map(|e| e + 1),
        }
    }

    pub fn from_index(index: usize, topology: &Topology) -> Self {
        if index == 0 {
            Move::Commit
        } else {
            let (a, b) = topology.edges()[index - 1];
            Move::Swap(a, b)
        }
    }

    pub fn is_commit(&self) -> bool {
        matches!(self, Move::Commit)
    }
}

impl std::fmt::Display for Move {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Move::Commit => f.write_str("COMMIT"),
            Move::Swap(a, b) => write!(f, "SWAP({a}, {b})"),
        }
    }
}

/// SWAPs chosen so far for the current timestep, as edge indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct ActionSet {
    swaps: Vec<usize>,
}

impl ActionSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.swaps.is_empty()
    }

    pub fn len(&self) -> usize {
        self.swaps.len()
    }

    pub fn edges(&self) -> &[usize] {
        &self.swaps
    }

    pub fn push_edge(&mut self, edge: usize) {
        self.swaps.push(edge);
    }

    pub fn pop_edge(&mut self) -> Option<usize> {
        self.swaps.pop()
    }

    pub fn pairs<'a>(&'a self, topology: &'a Topology) -> impl Iterator<Item = (usize, usize)> + 'a {
        self.swaps.iter().map(move |&e| topology.edges()[e])
    }

    pub fn uses_node(&self, topology: &Topology, node: usize) -> bool {
        self.pairs(topology).any(|(a, b)| a == node || b == node)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduledKind {
    Gate(usize),
    Swap,
}

/// An operation placed on the device at some timestep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduledOp {
    pub kind: ScheduledKind,
    pub nodes: (usize, usize),
    pub duration: u32,
}

/// Finished timesteps as a shared, append-only list so cloning a state is cheap.
#[derive(Debug)]
struct LayerRecord {
    ops: Vec<ScheduledOp>,
    prev: Option<Arc<LayerRecord>>,
}

impl Drop for LayerRecord {
    fn drop(&mut self) {
        // unlink iteratively; long histories would otherwise recurse once per layer
        let mut next = self.prev.take();
        while let Some(rec) = next {
            match Arc::try_unwrap(rec) {
                Ok(mut owned) => next = owned.prev.take(),
                Err(_) => break,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoutingConfig {
    pub swap_duration: u32,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        Self { swap_duration: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct RoutingState {
    circuit: Arc<Circuit>,
    topology: Arc<Topology>,
    config: RoutingConfig,
    allocation: QubitMapping,
    mapping: QubitMapping,
    progress: Vec<usize>,
    locks: LockTable,
    timestep: usize,
    remaining: usize,
    current: Vec<ScheduledOp>,
    history: Option<Arc<LayerRecord>>,
    history_len: usize,
}

impl RoutingState {
    /// Builds the timestep-0 state and runs its greedy pass.
    pub fn initial(
        circuit: Arc<Circuit>,
        topology: Arc<Topology>,
        allocation: QubitMapping,
        config: RoutingConfig,
    ) -> Result<Self, RoutingError> {
        assert!(config.swap_duration >= 1, "swap duration must be positive");
        let qubits = circuit.qubit_count();
        if qubits > topology.node_count() {
            return Err(RoutingError::TooManyQubits { qubits, nodes: topology.node_count() });
        }
        if allocation.program_qubits() != qubits {
            return Err(RoutingError::AllocationSize { expected: qubits, got: allocation.program_qubits() });
        }
        if allocation.node_count() != topology.node_count() {
            return Err(RoutingError::TooManyQubits { qubits: allocation.node_count(), nodes: topology.node_count() });
        }
        let mut state = Self {
            remaining: circuit.len(),
            progress: vec![0; qubits],
            locks: LockTable::new(topology.node_count()),
            mapping: allocation.clone(),
            allocation,
            circuit,
            topology,
            config,
            timestep: 0,
            current: Vec::new(),
            history: None,
            history_len: 0,
        };
        state.greedy_schedule();
        Ok(state)
    }

    pub fn circuit(&self) -> &Arc<Circuit> {
        &self.circuit
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn config(&self) -> RoutingConfig {
        self.config
    }

    pub fn mapping(&self) -> &QubitMapping {
        &self.mapping
    }

    pub fn allocation(&self) -> &QubitMapping {
        &self.allocation
    }

    pub fn locks(&self) -> &LockTable {
        &self.locks
    }

    pub fn progress(&self) -> &[usize] {
        &self.progress
    }

    pub fn timestep(&self) -> usize {
        self.timestep
    }

    pub fn remaining_gates(&self) -> usize {
        self.remaining
    }

    pub fn is_done(&self) -> bool {
        self.remaining == 0
    }

    /// Operations already placed in the current timestep.
    pub fn current_layer(&self) -> &[ScheduledOp] {
        &self.current
    }

    /// Next unscheduled gate of `qubit`, if any. Padding qubits have none.
    pub fn head(&self, qubit: usize) -> Option<usize> {
        if qubit >= self.progress.len() {
            return None;
        }
        self.circuit.queue(qubit).get(self.progress[qubit]).copied()
    }

    /// Gates that are the head of both of their qubits' queues, by id.
    pub fn current_gates(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for q in 0..self.progress.len() {
            if let Some(g) = self.head(q) {
                let (a, b) = self.circuit.gate(g).qubits;
                if a == q && self.head(b) == Some(g) {
                    out.push(g);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// True when `qubit` is a program qubit with gates left to execute.
    pub fn is_active(&self, qubit: usize) -> bool {
        self.head(qubit).is_some()
    }

    fn is_local(&self, gate: usize) -> bool {
        let (a, b) = self.circuit.gate(gate).qubits;
        self.topology.are_adjacent(self.mapping.node_of(a), self.mapping.node_of(b))
    }

    /// Schedules every current, local gate on unlocked nodes, lowest id first.
    /// Returns the scheduled gate ids.
    pub fn greedy_schedule(&mut self) -> Vec<usize> {
        let mut scheduled = Vec::new();
        loop {
            let mut progressed = false;
            for g in self.current_gates() {
                if !self.is_local(g) {
                    continue;
                }
                let gate = *self.circuit.gate(g);
                let (na, nb) = (self.mapping.node_of(gate.qubits.0), self.mapping.node_of(gate.qubits.1));
                if self.locks.is_locked(na) || self.locks.is_locked(nb) {
                    continue;
                }
                self.locks.lock(na, gate.duration);
                self.locks.lock(nb, gate.duration);
                self.progress[gate.qubits.0] += 1;
                self.progress[gate.qubits.1] += 1;
                self.remaining -= 1;
                self.current.push(ScheduledOp { kind: ScheduledKind::Gate(g), nodes: (na, nb), duration: gate.duration });
                scheduled.push(g);
                progressed = true;
            }
            if !progressed {
                break;
            }
        }
        scheduled
    }

    fn swap_is_legal(&self, action: &ActionSet, a: usize, b: usize) -> bool {
        !self.locks.is_locked(a)
            && !self.locks.is_locked(b)
            && !action.uses_node(&self.topology, a)
            && !action.uses_node(&self.topology, b)
    }

    pub fn is_legal(&self, action: &ActionSet, m: Move) -> bool {
        match m {
            Move::Commit => true,
            Move::Swap(a, b) => self.topology.are_adjacent(a, b) && self.swap_is_legal(action, a, b),
        }
    }

    /// `Commit` followed by every legal SWAP in edge order.
    pub fn legal_moves(&self, action: &ActionSet) -> Vec<Move> {
        let mut moves = vec![Move::Commit];
        moves.extend(
            self.topology
                .edges()
                .iter()
                .filter(|&&(a, b)| self.swap_is_legal(action, a, b))
                .map(|&(a, b)| Move::Swap(a, b)),
        );
        moves
    }

    /// Legal moves minus SWAPs between two qubits that have no gates left.
    /// Such SWAPs exchange interchangeable qubits and cannot change the outcome.
    pub fn useful_moves(&self, action: &ActionSet) -> Vec<Move> {
        self.legal_moves(action)
            .into_iter()
            .filter(|m| match *m {
                Move::Commit => true,
                Move::Swap(a, b) => {
                    self.is_active(self.mapping.qubit_at(a)) || self.is_active(self.mapping.qubit_at(b))
                }
            })
            .collect()
    }

    /// Extends `action` greedily: repeatedly adds the legal SWAP with the
    /// largest positive target-distance reduction, ties to the lowest node
    /// pair, until none improves.
    pub fn greedy_swaps(&self, action: &ActionSet) -> ActionSet {
        let mut action = action.clone();
        loop {
            let features = self.extract_features(&action);
            let mut best: Option<(i64, usize)> = None;
            for (e, &(a, b)) in self.topology.edges().iter().enumerate() {
                if !self.swap_is_legal(&action, a, b) {
                    continue;
                }
                let gain = features.swap_gain(&self.topology, a, b);
                if gain > 0 && best.is_none_or(|(g, _)| gain > g) {
                    best = Some((gain, e));
                }
            }
            match best {
                Some((_, e)) => action.push_edge(e),
                None => return action,
            }
        }
    }

    /// Lowest-id current gate whose qubits are not adjacent.
    pub fn stuck_gate(&self) -> Option<usize> {
        self.current_gates().into_iter().find(|&g| !self.is_local(g))
    }

    /// Edges of legal SWAPs that move an endpoint of [`Self::stuck_gate`] one
    /// hop closer to the other.
    pub fn shortening_swaps(&self, action: &ActionSet) -> Vec<usize> {
        let Some(g) = self.stuck_gate() else {
            return Vec::new();
        };
        let (qa, qb) = self.circuit.gate(g).qubits;
        let (a, b) = (self.mapping.node_of(qa), self.mapping.node_of(qb));
        let d = self.topology.distances();
        let mut out: Vec<usize> = [(a, b), (b, a)]
            .into_iter()
            .flat_map(|(from, to)| {
                self.topology
                    .neighbors(from)
                    .iter()
                    .filter(move |&&x| d.get(x, to) < d.get(from, to))
                    .map(move |&x| (from, x))
            })
            .filter(|&(from, x)| self.swap_is_legal(action, from, x))
            .map(|(from, x)| self.topology.edge_index(from, x).expect("neighbors share an edge"))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// SWAPs that walk the lowest-id non-local current gate's endpoints
    /// towards each other along shortest paths, one step per endpoint. Only
    /// those two qubits move, so repeating this shortens that gate's distance
    /// at every timestep whose locks allow a step.
    pub fn approach_swaps(&self) -> ActionSet {
        let mut action = ActionSet::new();
        let Some(g) = self.stuck_gate() else {
            return action;
        };
        let (qa, qb) = self.circuit.gate(g).qubits;
        let (mut a, b) = (self.mapping.node_of(qa), self.mapping.node_of(qb));
        let d = self.topology.distances();
        let step = |action: &ActionSet, from: usize, to: usize| {
            self.topology
                .neighbors(from)
                .iter()
                .copied()
                .filter(|&x| d.get(x, to) < d.get(from, to) && self.swap_is_legal(action, from, x))
                .min()
        };
        if let Some(x) = step(&action, a, b) {
            action.push_edge(self.topology.edge_index(a, x).expect("neighbors share an edge"));
            a = x;
        }
        if d.get(a, b) > 1 {
            if let Some(y) = step(&action, b, a) {
                action.push_edge(self.topology.edge_index(b, y).expect("neighbors share an edge"));
            }
        }
        action
    }

    /// Applies `m` and returns the successor pair.
    pub fn apply_move(&self, action: &ActionSet, m: Move) -> Result<(RoutingState, ActionSet), RoutingError> {
        if !self.is_legal(action, m) {
            return Err(RoutingError::IllegalMove(m));
        }
        match m {
            Move::Swap(a, b) => {
                let mut next = action.clone();
                next.push_edge(self.topology.edge_index(a, b).expect("legal swap is an edge"));
                Ok((self.clone(), next))
            }
            Move::Commit => {
                let mut next = self.clone();
                next.commit(action);
                Ok((next, ActionSet::new()))
            }
        }
    }

    /// Applies the SWAPs of `action`, closes the timestep, advances the clock
    /// and runs the next greedy pass. Returns the gates scheduled in the new
    /// timestep. `action` must be legal for this state.
    pub fn commit(&mut self, action: &ActionSet) -> Vec<usize> {
        self.place_swaps(action);
        let ops = std::mem::take(&mut self.current);
        self.history = Some(Arc::new(LayerRecord { ops, prev: self.history.take() }));
        self.history_len += 1;
        self.timestep += 1;
        self.locks.tick();
        self.greedy_schedule()
    }

    /// Applies the SWAPs of `action` within the current timestep: mapping
    /// updated, nodes locked, operations recorded.
    fn place_swaps(&mut self, action: &ActionSet) {
        let d = self.config.swap_duration;
        for (a, b) in action.pairs(&self.topology) {
            debug_assert!(!self.locks.is_locked(a) && !self.locks.is_locked(b));
            self.mapping.swap_nodes(a, b);
            self.locks.lock(a, d);
            self.locks.lock(b, d);
            self.current.push(ScheduledOp { kind: ScheduledKind::Swap, nodes: (a, b), duration: d });
        }
    }

    /// Features of `(self, action)` with the action's SWAPs applied and
    /// locked, before the clock advances.
    pub fn extract_features(&self, action: &ActionSet) -> FeatureSet {
        let mut mapping = self.mapping.clone();
        let mut locks = self.locks.clone();
        for (a, b) in action.pairs(&self.topology) {
            mapping.swap_nodes(a, b);
            locks.lock(a, self.config.swap_duration);
            locks.lock(b, self.config.swap_duration);
        }
        FeatureSet::build(self, &mapping, &locks)
    }

    /// Finished timesteps in order, followed by the open one if it holds operations.
    pub fn layers(&self) -> Vec<Vec<ScheduledOp>> {
        let mut layers = Vec::with_capacity(self.history_len + 1);
        let mut cursor = self.history.as_deref();
        while let Some(rec) = cursor {
            layers.push(rec.ops.clone());
            cursor = rec.prev.as_deref();
        }
        layers.reverse();
        if !self.current.is_empty() {
            layers.push(self.current.clone());
        }
        layers
    }

    /// The routed circuit and the final mapping. Only valid once done.
    pub fn routed_circuit(&self) -> Result<(RoutedCircuit, QubitMapping), RoutingError> {
        if !self.is_done() {
            return Err(RoutingError::NotDone { remaining: self.remaining });
        }
        Ok((RoutedCircuit::assemble(self), self.mapping.clone()))
    }
}
