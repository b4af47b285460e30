//! Two-qubit circuit model: gate queues, redundancy elimination, slicing and depth.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CircuitError {
    #[error("line {line}: syntax error: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: identical qubit operands ({qubit})")]
    IdenticalOperands { line: usize, qubit: usize },
    #[error("line {line}: qubit index {index} out of range (register has {count} qubits)")]
    QubitOutOfRange { line: usize, index: usize, count: usize },
    #[error("line {line}: unsupported QASM construct `{construct}`")]
    Unsupported { line: usize, construct: String },
    #[error("gate {gate} uses identical qubit operands ({qubit})")]
    InvalidGate { gate: usize, qubit: usize },
    #[error("gate {gate} references qubit {index} but the circuit has {count} qubits")]
    GateOutOfRange { gate: usize, index: usize, count: usize },
    #[error("circuit must have at least one qubit")]
    NoQubits,
    #[error("depth ratio needs at least one circuit")]
    EmptyRatioInput,
    #[error("input depth of circuit {index} is zero")]
    ZeroInputDepth { index: usize },
}

/// A two-qubit operation on logical qubits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GateOp {
    pub id: usize,
    pub qubits: (usize, usize),
    /// Execution time in timesteps.
    pub duration: u32,
}

impl GateOp {
    pub fn touches(&self, qubit: usize) -> bool {
        self.qubits.0 == qubit || self.qubits.1 == qubit
    }

    /// The operand that is not `qubit`.
    pub fn partner(&self, qubit: usize) -> usize {
        if self.qubits.0 == qubit {
            self.qubits.1
        } else {
            self.qubits.0
        }
    }
}

/// A single-qubit gate carried through routing untouched.
///
/// `position` is the number of two-qubit gates on `qubit` that precede it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub qubit: usize,
    pub position: usize,
    /// Gate text without operand, e.g. `h` or `rz(0.25)`.
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Circuit {
    qubit_count: usize,
    gates: Vec<GateOp>,
    queues: Vec<Vec<usize>>,
    annotations: Vec<Annotation>,
}

impl Circuit {
    /// Builds a circuit of unit-duration gates; ids follow list order.
    pub fn new(qubit_count: usize, pairs: &[(usize, usize)]) -> Result<Self, CircuitError> {
        let gates = pairs
            .iter()
            .enumerate()
            .map(|(id, &qubits)| GateOp { id, qubits, duration: 1 })
            .collect();
        Self::from_gates(qubit_count, gates, Vec::new())
    }

    /// Builds a circuit from gates whose ids are reassigned to their list
    /// position. Annotations are kept grouped by qubit and position; their
    /// relative order on one qubit is preserved.
    pub fn from_gates(
        qubit_count: usize,
        mut gates: Vec<GateOp>,
        mut annotations: Vec<Annotation>,
    ) -> Result<Self, CircuitError> {
        annotations.sort_by_key(|a| (a.qubit, a.position));
        if qubit_count == 0 {
            return Err(CircuitError::NoQubits);
        }
        let mut queues = vec![Vec::new(); qubit_count];
        for (id, gate) in gates.iter_mut().enumerate() {
            gate.id = id;
            let (a, b) = gate.qubits;
            if a == b {
                return Err(CircuitError::InvalidGate { gate: id, qubit: a });
            }
            for q in [a, b] {
                if q >= qubit_count {
                    return Err(CircuitError::GateOutOfRange { gate: id, index: q, count: qubit_count });
                }
            }
            queues[a].push(id);
            queues[b].push(id);
        }
        Ok(Self { qubit_count, gates, queues, annotations })
    }

    pub fn qubit_count(&self) -> usize {
        self.qubit_count
    }

    pub fn gates(&self) -> &[GateOp] {
        &self.gates
    }

    pub fn gate(&self, id: usize) -> &GateOp {
        &self.gates[id]
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// Gate ids touching `qubit`, in circuit order.
    pub fn queue(&self, qubit: usize) -> &[usize] {
        &self.queues[qubit]
    }

    pub fn queues(&self) -> &[Vec<usize>] {
        &self.queues
    }

    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.gates.iter().map(|g| g.qubits).collect()
    }

    /// Returns the circuit with every gate given `duration` timesteps.
    pub fn with_gate_duration(mut self, duration: u32) -> Self {
        assert!(duration >= 1, "gate duration must be positive");
        for g in &mut self.gates {
            g.duration = duration;
        }
        self
    }

    pub fn depth(&self) -> usize {
        depth(self)
    }
}

/// Drops every gate that repeats the gate immediately before it in both of its
/// qubits' queues. A single-qubit annotation between the two blocks removal.
///
/// One left-to-right pass reaches the fixpoint: a kept gate's queue predecessors
/// are themselves kept, so no later removal can expose a new duplicate.
pub fn eliminate_redundant(c: &Circuit) -> Circuit {
    let n = c.qubit_count;
    let mut last_kept: Vec<Option<usize>> = vec![None; n];
    // number of original gates seen so far on each qubit
    let mut seen = vec![0usize; n];
    let mut removed_at: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut kept = Vec::with_capacity(c.gates.len());

    let blocked = |q: usize, pos: usize| {
        c.annotations.iter().any(|a| a.qubit == q && a.position == pos)
    };

    for gate in &c.gates {
        let (a, b) = gate.qubits;
        let duplicate = match (last_kept[a], last_kept[b]) {
            (Some(pa), Some(pb)) if pa == pb => {
                c.gates[pa].qubits == gate.qubits && !blocked(a, seen[a]) && !blocked(b, seen[b])
            }
            _ => false,
        };
        if duplicate {
            removed_at[a].push(seen[a]);
            removed_at[b].push(seen[b]);
        } else {
            last_kept[a] = Some(gate.id);
            last_kept[b] = Some(gate.id);
            kept.push(*gate);
        }
        seen[a] += 1;
        seen[b] += 1;
    }

    let annotations = c
        .annotations
        .iter()
        .map(|ann| {
            let shift = removed_at[ann.qubit].iter().filter(|&&r| r < ann.position).count();
            Annotation { position: ann.position - shift, ..ann.clone() }
        })
        .collect();
    Circuit::from_gates(n, kept, annotations).expect("subset of a valid circuit is valid")
}

/// Greedy-earliest decomposition into parallel slices of gate ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceDecomposition {
    pub slices: Vec<Vec<usize>>,
}

impl SliceDecomposition {
    pub fn depth(&self) -> usize {
        self.slices.len()
    }
}

pub fn slice(c: &Circuit) -> SliceDecomposition {
    let mut level_of_qubit = vec![0usize; c.qubit_count];
    let mut slices: Vec<Vec<usize>> = Vec::new();
    for gate in &c.gates {
        let (a, b) = gate.qubits;
        let level = level_of_qubit[a].max(level_of_qubit[b]);
        if level == slices.len() {
            slices.push(Vec::new());
        }
        slices[level].push(gate.id);
        level_of_qubit[a] = level + 1;
        level_of_qubit[b] = level + 1;
    }
    SliceDecomposition { slices }
}

pub fn depth(c: &Circuit) -> usize {
    slice(c).depth()
}

/// Uniformly random unordered qubit pairs, stored as `(low, high)`.
pub fn random_circuit(qubit_count: usize, gate_count: usize, seed: u64) -> Circuit {
    assert!(qubit_count >= 2, "random circuits need at least two qubits");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(usize, usize)> = (0..gate_count)
        .map(|_| {
            let a = rng.random_range(0..qubit_count);
            let mut b = rng.random_range(0..qubit_count - 1);
            if b >= a {
                b += 1;
            }
            (a.min(b), a.max(b))
        })
        .collect();
    Circuit::new(qubit_count, &pairs).expect("generated pairs are distinct and in range")
}

/// Mean of `output / input` depth over circuits.
pub fn cdr(pairs: &[(usize, usize)]) -> Result<f64, CircuitError> {
    if pairs.is_empty() {
        return Err(CircuitError::EmptyRatioInput);
    }
    let mut total = 0.0;
    for (index, &(input, output)) in pairs.iter().enumerate() {
        if input == 0 {
            return Err(CircuitError::ZeroInputDepth { index });
        }
        total += output as f64 / input as f64;
    }
    Ok(total / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(c: &Circuit) -> Vec<(usize, usize)> {
        c.pairs()
    }

    #[test]
    fn redundant_duplicate_on_same_pair_is_dropped() {
        let c = Circuit::new(5, &[(3, 4), (3, 4), (1, 2)]).unwrap();
        assert_eq!(pairs(&eliminate_redundant(&c)), vec![(3, 4), (1, 2)]);
    }

    #[test]
    fn redundant_check_is_per_queue() {
        // (2,3) does not touch qubits 0 or 1, so the repeats are adjacent in both queues
        let c = Circuit::new(4, &[(0, 1), (2, 3), (0, 1)]).unwrap();
        assert_eq!(pairs(&eliminate_redundant(&c)), vec![(0, 1), (2, 3)]);
        let c = Circuit::new(4, &[(0, 1), (1, 2), (0, 1)]).unwrap();
        assert_eq!(pairs(&eliminate_redundant(&c)), vec![(0, 1), (1, 2), (0, 1)]);
    }

    #[test]
    fn redundant_runs_collapse_to_one() {
        let c = Circuit::new(2, &[(0, 1); 5]).unwrap();
        assert_eq!(pairs(&eliminate_redundant(&c)), vec![(0, 1)]);
    }

    #[test]
    fn reversed_orientation_is_not_redundant() {
        let c = Circuit::new(2, &[(0, 1), (1, 0)]).unwrap();
        assert_eq!(eliminate_redundant(&c).len(), 2);
    }

    #[test]
    fn annotation_between_duplicates_blocks_removal() {
        let gates = vec![
            GateOp { id: 0, qubits: (0, 1), duration: 1 },
            GateOp { id: 1, qubits: (0, 1), duration: 1 },
        ];
        let ann = vec![Annotation { qubit: 1, position: 1, text: "h".into() }];
        let c = Circuit::from_gates(2, gates, ann).unwrap();
        assert_eq!(eliminate_redundant(&c).len(), 2);
    }

    #[test]
    fn annotation_positions_shift_after_removal() {
        let gates = vec![
            GateOp { id: 0, qubits: (0, 1), duration: 1 },
            GateOp { id: 1, qubits: (0, 1), duration: 1 },
            GateOp { id: 2, qubits: (0, 2), duration: 1 },
        ];
        let ann = vec![Annotation { qubit: 0, position: 3, text: "x".into() }];
        let c = eliminate_redundant(&Circuit::from_gates(3, gates, ann).unwrap());
        assert_eq!(c.len(), 2);
        assert_eq!(c.annotations()[0].position, 2);
    }

    #[test]
    fn empty_circuit_edge_cases() {
        let c = Circuit::new(3, &[]).unwrap();
        assert!(eliminate_redundant(&c).is_empty());
        assert_eq!(depth(&c), 0);
    }

    #[test]
    fn slicing_examples() {
        let c = Circuit::new(4, &[(0, 1), (2, 3), (1, 2)]).unwrap();
        assert_eq!(slice(&c).slices, vec![vec![0, 1], vec![2]]);
        assert_eq!(depth(&Circuit::new(2, &[(0, 1)]).unwrap()), 1);
        assert_eq!(depth(&Circuit::new(2, &[(0, 1); 10]).unwrap()), 10);
    }

    #[test]
    fn queues_follow_global_order() {
        let c = Circuit::new(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(c.queue(0), &[0, 2]);
        assert_eq!(c.queue(1), &[0, 1]);
        assert_eq!(c.queue(2), &[1, 2]);
    }

    #[test]
    fn invalid_gates_rejected() {
        assert!(matches!(Circuit::new(2, &[(1, 1)]), Err(CircuitError::InvalidGate { .. })));
        assert!(matches!(Circuit::new(2, &[(0, 2)]), Err(CircuitError::GateOutOfRange { .. })));
        assert!(matches!(Circuit::new(0, &[]), Err(CircuitError::NoQubits)));
    }

    #[test]
    fn random_circuit_is_deterministic() {
        assert_eq!(random_circuit(9, 30, 7), random_circuit(9, 30, 7));
        assert_ne!(random_circuit(9, 30, 7), random_circuit(9, 30, 8));
        let c = random_circuit(2, 5, 1234);
        assert!(c.gates().iter().all(|g| g.qubits == (0, 1)));
        assert_eq!(random_circuit(20, 150, 3).len(), 150);
    }

    #[test]
    fn cdr_examples() {
        assert_eq!(cdr(&[(10, 12), (20, 26)]).unwrap(), 1.25);
        assert_eq!(cdr(&[(5, 5)]).unwrap(), 1.0);
        assert_eq!(cdr(&[]), Err(CircuitError::EmptyRatioInput));
        assert_eq!(cdr(&[(3, 4), (0, 1)]), Err(CircuitError::ZeroInputDepth { index: 1 }));
    }
}
