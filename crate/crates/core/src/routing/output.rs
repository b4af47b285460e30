use std::fmt;

use serde::Serialize;

use super::{QubitMapping, RoutingState, ScheduledKind};
use crate::circuit::Circuit;
use crate::topology::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Cx,
    Swap,
}

/// A two-qubit operation on physical nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct RoutedOp {
    pub kind: OpKind,
    pub nodes: (usize, usize),
    pub duration: u32,
}

/// A pass-through single-qubit gate placed on a node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacedAnnotation {
    pub node: usize,
    pub text: String,
}

/// Operations starting at one timestep, followed by the single-qubit gates
/// that become due once those operations have run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoutedLayer {
    pub ops: Vec<RoutedOp>,
    pub annotations: Vec<PlacedAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutedCircuit {
    pub node_count: usize,
    /// Single-qubit gates that precede every two-qubit gate on their qubit.
    pub leading: Vec<PlacedAnnotation>,
    pub layers: Vec<RoutedLayer>,
}

impl RoutedCircuit {
    pub fn new(node_count: usize, layers: Vec<Vec<RoutedOp>>) -> Self {
        Self {
            node_count,
            leading: Vec::new(),
            layers: layers.into_iter().map(|ops| RoutedLayer { ops, annotations: Vec::new() }).collect(),
        }
    }

    pub(super) fn assemble(state: &RoutingState) -> Self {
        let circuit = state.circuit();
        let mut gate_site = vec![(0usize, (0usize, 0usize)); circuit.len()];
        let mut layers: Vec<RoutedLayer> = state
            .layers()
            .into_iter()
            .enumerate()
            .map(|(t, ops)| RoutedLayer {
                ops: ops
                    .into_iter()
                    .map(|op| {
                        let kind = match op.kind {
                            ScheduledKind::Gate(g) => {
                                gate_site[g] = (t, op.nodes);
                                OpKind::Cx
                            }
                            ScheduledKind::Swap => OpKind::Swap,
                        };
                        RoutedOp { kind, nodes: op.nodes, duration: op.duration }
                    })
                    .collect(),
                annotations: Vec::new(),
            })
            .collect();

        let mut leading = Vec::new();
        for ann in circuit.annotations() {
            if ann.position == 0 {
                leading.push(PlacedAnnotation { node: state.allocation().node_of(ann.qubit), text: ann.text.clone() });
                continue;
            }
            let g = circuit.queue(ann.qubit)[ann.position - 1];
            let (layer, nodes) = gate_site[g];
            let node = if circuit.gate(g).qubits.0 == ann.qubit { nodes.0 } else { nodes.1 };
            layers[layer].annotations.push(PlacedAnnotation { node, text: ann.text.clone() });
        }
        Self { node_count: state.topology().node_count(), leading, layers }
    }

    /// Layers occupied, counting every timestep of multi-step operations.
    pub fn depth(&self) -> usize {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(t, l)| l.ops.iter().map(move |op| t + op.duration as usize))
            .max()
            .unwrap_or(0)
    }

    pub fn swap_count(&self) -> usize {
        self.ops().filter(|op| op.kind == OpKind::Swap).count()
    }

    pub fn gate_count(&self) -> usize {
        self.ops().filter(|op| op.kind == OpKind::Cx).count()
    }

    pub fn ops(&self) -> impl Iterator<Item = &RoutedOp> {
        self.layers.iter().flat_map(|l| l.ops.iter())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnosis {
    NonAdjacentGate { layer: usize, nodes: (usize, usize) },
    NonAdjacentSwap { layer: usize, nodes: (usize, usize) },
    ParallelismViolation { layer: usize, node: usize },
    OrderViolation { layer: usize, qubits: (usize, usize) },
    Incomplete { remaining: usize },
    NodeOutOfRange { layer: usize, node: usize },
    Setup(String),
}

impl fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnosis::NonAdjacentGate { layer, nodes } => {
                write!(f, "non-adjacent gate at layer {layer} on nodes {nodes:?}")
            }
            Diagnosis::NonAdjacentSwap { layer, nodes } => {
                write!(f, "non-adjacent swap at layer {layer} on nodes {nodes:?}")
            }
            Diagnosis::ParallelismViolation { layer, node } => {
                write!(f, "parallelism violation at layer {layer} on node {node}")
            }
            Diagnosis::OrderViolation { layer, qubits } => {
                write!(f, "gate order violation at layer {layer}: qubits {qubits:?} are not a pending gate")
            }
            Diagnosis::Incomplete { remaining } => write!(f, "incomplete: {remaining} gates never executed"),
            Diagnosis::NodeOutOfRange { layer, node } => write!(f, "node {node} out of range at layer {layer}"),
            Diagnosis::Setup(msg) => write!(f, "invalid verification setup: {msg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verification {
    pub diagnosis: Option<Diagnosis>,
}

impl Verification {
    pub fn is_valid(&self) -> bool {
        self.diagnosis.is_none()
    }

    fn fail(d: Diagnosis) -> Self {
        Self { diagnosis: Some(d) }
    }
}

/// Replays `routed` from `allocation` and checks adjacency, per-node
/// exclusivity across each operation's full duration, and that the logical
/// gates run exactly once each in queue order.
pub fn verify_routed(
    original: &Circuit,
    routed: &RoutedCircuit,
    topology: &Topology,
    allocation: &QubitMapping,
) -> Verification {
    let n = topology.node_count();
    if routed.node_count != n || allocation.node_count() != n {
        return Verification::fail(Diagnosis::Setup(format!(
            "routed circuit has {} nodes, allocation {}, device {n}",
            routed.node_count,
            allocation.node_count()
        )));
    }
    if allocation.program_qubits() != original.qubit_count() {
        return Verification::fail(Diagnosis::Setup(format!(
            "allocation covers {} qubits, circuit has {}",
            allocation.program_qubits(),
            original.qubit_count()
        )));
    }
    let mut mapping = allocation.clone();
    let mut progress = vec![0usize; original.qubit_count()];
    let mut busy_until = vec![0usize; n];
    let mut executed = 0usize;

    for (t, layer) in routed.layers.iter().enumerate() {
        let mut swaps = Vec::new();
        for op in &layer.ops {
            let (a, b) = op.nodes;
            for node in [a, b] {
                if node >= n {
                    return Verification::fail(Diagnosis::NodeOutOfRange { layer: t, node });
                }
            }
            if !topology.are_adjacent(a, b) {
                return Verification::fail(match op.kind {
                    OpKind::Cx => Diagnosis::NonAdjacentGate { layer: t, nodes: op.nodes },
                    OpKind::Swap => Diagnosis::NonAdjacentSwap { layer: t, nodes: op.nodes },
                });
            }
            for node in [a, b] {
                if busy_until[node] > t {
                    return Verification::fail(Diagnosis::ParallelismViolation { layer: t, node });
                }
                busy_until[node] = t + op.duration.max(1) as usize;
            }
            match op.kind {
                OpKind::Swap => swaps.push((a, b)),
                OpKind::Cx => {
                    let (qa, qb) = (mapping.qubit_at(a), mapping.qubit_at(b));
                    let head = |q: usize| {
                        (q < progress.len()).then(|| original.queue(q).get(progress[q]).copied()).flatten()
                    };
                    match (head(qa), head(qb)) {
                        (Some(ga), Some(gb)) if ga == gb && original.gate(ga).qubits == (qa, qb) => {
                            progress[qa] += 1;
                            progress[qb] += 1;
                            executed += 1;
                        }
                        _ => {
                            // A current gate on either operand that sits on
                            // non-adjacent nodes means routing fell short.
                            let current = [head(qa), head(qb)].into_iter().flatten().find(|&g| {
                                let (x, y) = original.gate(g).qubits;
                                head(x) == Some(g) && head(y) == Some(g)
                            });
                            if let Some(g) = current {
                                let (x, y) = original.gate(g).qubits;
                                let nodes = (mapping.node_of(x), mapping.node_of(y));
                                if !topology.are_adjacent(nodes.0, nodes.1) {
                                    return Verification::fail(Diagnosis::NonAdjacentGate { layer: t, nodes });
                                }
                            }
                            return Verification::fail(Diagnosis::OrderViolation { layer: t, qubits: (qa, qb) });
                        }
                    }
                }
            }
        }
        for (a, b) in swaps {
            mapping.swap_nodes(a, b);
        }
    }
    if executed != original.len() {
        return Verification::fail(Diagnosis::Incomplete { remaining: original.len() - executed });
    }
    Verification { diagnosis: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::circuit::{Annotation, GateOp};
    use crate::routing::{ActionSet, Move, RoutingConfig, RoutingState};

    fn routed_line4() -> (Circuit, RoutedCircuit, Topology, QubitMapping) {
        let c = Circuit::new(4, &[(0, 3)]).unwrap();
        let t = Topology::line(4).unwrap();
        let alloc = QubitMapping::identity(4, 4).unwrap();
        let s = RoutingState::initial(Arc::new(c.clone()), Arc::new(t.clone()), alloc.clone(), RoutingConfig::default())
            .unwrap();
        let (s, a) = s.apply_move(&ActionSet::new(), Move::Swap(0, 1)).unwrap();
        let (s, a) = s.apply_move(&a, Move::Swap(2, 3)).unwrap();
        let (s, _) = s.apply_move(&a, Move::Commit).unwrap();
        let (routed, _) = s.routed_circuit().unwrap();
        (c, routed, t, alloc)
    }

    #[test]
    fn router_trace_verifies() {
        let (c, r, t, a) = routed_line4();
        assert_eq!(verify_routed(&c, &r, &t, &a), Verification { diagnosis: None });
    }

    #[test]
    fn deleted_swap_is_non_adjacent() {
        let (c, mut r, t, a) = routed_line4();
        r.layers[0].ops.remove(0);
        let v = verify_routed(&c, &r, &t, &a);
        assert!(v.diagnosis.unwrap().to_string().starts_with("non-adjacent gate"));
    }

    #[test]
    fn shared_node_in_layer_is_parallelism_violation() {
        let (c, mut r, t, a) = routed_line4();
        r.layers[0].ops.push(RoutedOp { kind: OpKind::Swap, nodes: (1, 2), duration: 1 });
        let v = verify_routed(&c, &r, &t, &a);
        assert!(v.diagnosis.unwrap().to_string().starts_with("parallelism violation"));
    }

    #[test]
    fn duplicated_gate_is_order_violation() {
        let (c, mut r, t, a) = routed_line4();
        r.layers.push(RoutedLayer { ops: vec![RoutedOp { kind: OpKind::Cx, nodes: (1, 2), duration: 1 }], ..Default::default() });
        assert!(matches!(verify_routed(&c, &r, &t, &a).diagnosis, Some(Diagnosis::OrderViolation { .. })));
    }

    #[test]
    fn missing_gate_is_incomplete() {
        let (c, mut r, t, a) = routed_line4();
        r.layers.pop();
        assert_eq!(verify_routed(&c, &r, &t, &a).diagnosis, Some(Diagnosis::Incomplete { remaining: 1 }));
    }

    #[test]
    fn op_inside_multi_step_swap_window_is_rejected() {
        let c = Circuit::new(3, &[(0, 2)]).unwrap();
        let t = Topology::line(3).unwrap();
        let a = QubitMapping::identity(3, 3).unwrap();
        let swap = RoutedOp { kind: OpKind::Swap, nodes: (0, 1), duration: 3 };
        let cx = RoutedOp { kind: OpKind::Cx, nodes: (1, 2), duration: 1 };
        for gap in 1..=3 {
            let mut layers = vec![vec![swap]];
            layers.extend((1..gap).map(|_| Vec::new()));
            layers.push(vec![cx]);
            let v = verify_routed(&c, &RoutedCircuit::new(3, layers), &t, &a);
            assert_eq!(v.is_valid(), gap == 3, "gap {gap}: {v:?}");
        }
    }

    #[test]
    fn depth_counts_durations() {
        let r = RoutedCircuit::new(
            3,
            vec![vec![RoutedOp { kind: OpKind::Swap, nodes: (0, 1), duration: 3 }], vec![]],
        );
        assert_eq!(r.depth(), 3);
        assert_eq!(RoutedCircuit::new(3, vec![vec![], vec![]]).depth(), 0);
    }

    #[test]
    fn annotations_follow_their_qubit() {
        let gates = vec![GateOp { id: 0, qubits: (0, 2), duration: 1 }];
        let anns = vec![
            Annotation { qubit: 0, position: 0, text: "h".into() },
            Annotation { qubit: 0, position: 1, text: "x".into() },
        ];
        let c = Circuit::from_gates(3, gates, anns).unwrap();
        let t = Topology::line(3).unwrap();
        let alloc = QubitMapping::identity(3, 3).unwrap();
        let s = RoutingState::initial(Arc::new(c), Arc::new(t), alloc, RoutingConfig::default()).unwrap();
        let (s, a) = s.apply_move(&ActionSet::new(), Move::Swap(0, 1)).unwrap();
        let (s, _) = s.apply_move(&a, Move::Commit).unwrap();
        let (r, _) = s.routed_circuit().unwrap();
        assert_eq!(r.leading, vec![PlacedAnnotation { node: 0, text: "h".into() }]);
        assert_eq!(r.layers[1].annotations, vec![PlacedAnnotation { node: 1, text: "x".into() }]);
    }
}
