use std::collections::HashMap;
use std::sync::Arc;

use crate::circuit::Circuit;
use crate::routing::{ActionSet, Move, QubitMapping, RoutedCircuit, RoutingConfig, RoutingState};
use crate::topology::Topology;

use super::HarnessError;

pub const MAX_ORACLE_NODES: usize = 6;
pub const MAX_ORACLE_GATES: usize = 4;
pub const MAX_ORACLE_DEPTH: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleResult {
    pub minimal_depth: usize,
    pub witness: RoutedCircuit,
}

type StateKey = (Vec<usize>, Vec<usize>, Vec<u32>);

fn key(s: &RoutingState) -> StateKey {
    (s.mapping().allocation().to_vec(), s.progress().to_vec(), s.locks().as_slice().to_vec())
}

/// Every set of pairwise node-disjoint SWAPs on unlocked edges, as edge ids.
fn swap_sets(state: &RoutingState) -> Vec<ActionSet> {
    fn extend(state: &RoutingState, from: usize, current: &mut ActionSet, out: &mut Vec<ActionSet>) {
        out.push(current.clone());
        let edges = state.topology().edges();
        for e in from..edges.len() {
            let (a, b) = edges[e];
            if state.is_legal(current, Move::Swap(a, b)) {
                current.push_edge(e);
                extend(state, e + 1, current, out);
                current.pop_edge();
            }
        }
    }
    let mut out = Vec::new();
    extend(state, 0, &mut ActionSet::new(), &mut out);
    out
}

/// Exhaustive breadth-first search over timesteps for the schedule of least
/// output depth. Only for desk-sized instances.
pub fn oracle_min_depth(
    c: &Circuit,
    t: &Topology,
    allocation: &QubitMapping,
    routing: RoutingConfig,
    depth_bound: usize,
) -> Result<OracleResult, HarnessError> {
    if t.node_count() > MAX_ORACLE_NODES || c.len() > MAX_ORACLE_GATES || depth_bound > MAX_ORACLE_DEPTH {
        return Err(HarnessError::OracleTooLarge {
            nodes: t.node_count(),
            gates: c.len(),
            depth_bound,
        });
    }
    let root = RoutingState::initial(Arc::new(c.clone()), Arc::new(t.clone()), allocation.clone(), routing)?;
    let mut best: Option<(usize, RoutingState)> = None;
    let consider = |s: &RoutingState, best: &mut Option<(usize, RoutingState)>| -> Result<(), HarnessError> {
        let depth = s.routed_circuit()?.0.depth();
        if best.as_ref().is_none_or(|(d, _)| depth < *d) {
            *best = Some((depth, s.clone()));
        }
        Ok(())
    };
    if root.is_done() {
        consider(&root, &mut best)?;
    }
    let mut seen: HashMap<StateKey, ()> = HashMap::from([(key(&root), ())]);
    let mut frontier = vec![root];
    // a completion at timestep `ts` has depth at least `ts + 1`
    let mut timestep = 0;
    while !frontier.is_empty() && best.as_ref().is_none_or(|(d, _)| timestep + 2 <= *d) && timestep + 1 < depth_bound {
        let mut next = Vec::new();
        for s in &frontier {
            if s.is_done() {
                continue;
            }
            for action in swap_sets(s) {
                let mut child = s.clone();
                child.commit(&action);
                if child.is_done() {
                    consider(&child, &mut best)?;
                } else if seen.insert(key(&child), ()).is_none() {
                    next.push(child);
                }
            }
        }
        frontier = next;
        timestep += 1;
    }
    match best {
        Some((depth, s)) if depth <= depth_bound => {
            Ok(OracleResult { minimal_depth: depth, witness: s.routed_circuit()?.0 })
        }
        _ => Err(HarnessError::OracleBound { depth_bound }),
    }
}
