use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::circuit::{self, Circuit};
use crate::routing::{verify_routed, ActionSet, QubitMapping, RoutedCircuit, RoutingConfig, RoutingState};
use crate::topology::Topology;

use super::HarnessError;

/// Layers without a scheduled gate before a random SWAP is forced.
const STAGNATION_LAYERS: usize = 8;

/// Per timestep: the state's greedy gate pass, then distance-reducing SWAPs
/// chosen one at a time, then commit. After a run of layers without a
/// scheduled gate, each layer instead plays one random SWAP that shortens the
/// oldest stuck gate, until some gate runs.
pub fn greedy_baseline(
    c: &Circuit,
    t: &Topology,
    allocation: &QubitMapping,
    routing: RoutingConfig,
    seed: u64,
) -> Result<RoutedCircuit, HarnessError> {
    let cap = 50 + 10 * circuit::depth(c);
    let mut state =
        RoutingState::initial(Arc::new(c.clone()), Arc::new(t.clone()), allocation.clone(), routing)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stagnant = 0;
    while !state.is_done() {
        if state.timestep() >= cap {
            return Err(HarnessError::LayerCap { cap });
        }
        let action = if stagnant >= STAGNATION_LAYERS {
            // only the stuck gate's qubits move, so its distance falls until it runs
            let mut action = ActionSet::new();
            let swaps = state.shortening_swaps(&action);
            if !swaps.is_empty() {
                action.push_edge(swaps[rng.random_range(0..swaps.len())]);
            }
            action
        } else {
            state.greedy_swaps(&ActionSet::new())
        };
        let scheduled = state.commit(&action);
        stagnant = if scheduled.is_empty() { stagnant + 1 } else { 0 };
    }
    let (routed, _) = state.routed_circuit()?;
    if let Some(d) = verify_routed(c, &routed, t, allocation).diagnosis {
        return Err(HarnessError::Verification(d.to_string()));
    }
    Ok(routed)
}
