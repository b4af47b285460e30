use std::sync::Arc;

use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use qroute::circuit::{cdr, depth, eliminate_redundant, random_circuit, slice, Circuit};
use qroute::evaluator::{selfplay, train, AnalyticEvaluator, NetParams, ReplayBuffer, SelfPlayConfig, TrainConfig};
use qroute::format::{parse_circuit, parse_routed, serialize_circuit, serialize_routed, CircuitFormat};
use qroute::harness::{greedy_baseline, oracle_min_depth};
use qroute::routing::{verify_routed, ActionSet, QubitMapping, RoutingConfig, RoutingState};
use qroute::search::{route, SearchConfig};
use qroute::topology::Topology;

fn pairs_strategy(qubits: usize, max_gates: usize) -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0..qubits, 1..qubits), 0..=max_gates)
        .prop_map(move |v| v.into_iter().map(|(a, off)| (a, (a + off) % qubits)).collect())
}

/// Fewest slices over every assignment of gates to slice indices that keeps
/// each qubit's gates in strictly increasing slices.
fn brute_force_depth(c: &Circuit) -> usize {
    let n = c.len();
    if n == 0 {
        return 0;
    }
    for k in 1..=n {
        let mut assign = vec![0usize; n];
        loop {
            let ok = c.queues().iter().all(|q| q.windows(2).all(|w| assign[w[0]] < assign[w[1]]));
            if ok {
                return k;
            }
            let mut i = 0;
            while i < n && assign[i] == k - 1 {
                assign[i] = 0;
                i += 1;
            }
            if i == n {
                break;
            }
            assign[i] += 1;
        }
    }
    unreachable!("one gate per slice always works")
}

#[test]
fn chain_depth_matches_brute_force() {
    let c = Circuit::new(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
    assert_eq!(brute_force_depth(&c), 4);
    assert_eq!(depth(&c), 4);
}

#[test]
fn random_pairs_pass_chi_square() {
    let (n, gates, seeds) = (20usize, 150usize, 100u64);
    let cells = n * (n - 1) / 2;
    let mut counts = vec![0f64; cells];
    let index = |a: usize, b: usize| a * n - a * (a + 1) / 2 + (b - a - 1);
    for seed in 0..seeds {
        let c = random_circuit(n, gates, seed);
        assert_eq!(c.len(), gates);
        for (a, b) in c.pairs() {
            counts[index(a, b)] += 1.0;
        }
    }
    let expected = (gates as f64 * seeds as f64) / cells as f64;
    let stat: f64 = counts.iter().map(|&o| (o - expected).powi(2) / expected).sum();
    let dist = ChiSquared::new((cells - 1) as f64).unwrap();
    let (lo, hi) = (dist.inverse_cdf(0.005), dist.inverse_cdf(0.995));
    assert!(lo <= stat && stat <= hi, "chi-square {stat} outside [{lo}, {hi}]");
}

#[test]
fn training_on_a_fixed_batch_descends() {
    let t = Topology::grid(2, 3).unwrap();
    let mut buffer = ReplayBuffer::new(10_000);
    let sp = SelfPlayConfig {
        circuits: 10,
        min_gates: 5,
        max_gates: 15,
        search: SearchConfig { iterations: 80, ..SearchConfig::default() },
        seed: 2,
    };
    selfplay(&t, &AnalyticEvaluator::default(), &sp, &mut buffer).unwrap();
    let mut fixed = ReplayBuffer::new(64);
    fixed.extend(buffer.iter().take(64).cloned());
    let cfg = TrainConfig { steps: 200, batch_size: fixed.len(), seed: 1, ..TrainConfig::default() };
    let (_, curve) = train(&NetParams::random(4), &t, &fixed, &cfg).unwrap();
    for w in curve.windows(2) {
        assert!(w[1] <= w[0] * 1.05, "uptick {} -> {}", w[0], w[1]);
    }
    assert!(curve[199] <= 0.5 * curve[0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn slices_are_greedy_earliest(pairs in pairs_strategy(6, 24)) {
        let c = Circuit::new(6, &pairs).unwrap();
        let s = slice(&c);
        let mut slice_of = vec![usize::MAX; c.len()];
        for (k, gates) in s.slices.iter().enumerate() {
            let mut used = [false; 6];
            for &g in gates {
                let (a, b) = c.gate(g).qubits;
                prop_assert!(!used[a] && !used[b]);
                used[a] = true;
                used[b] = true;
                slice_of[g] = k;
            }
        }
        prop_assert!(slice_of.iter().all(|&k| k != usize::MAX));
        for q in c.queues() {
            prop_assert!(q.windows(2).all(|w| slice_of[w[0]] < slice_of[w[1]]));
        }
        // nothing can move earlier: a gate in slice k > 0 has a queue predecessor in slice k - 1
        for g in 0..c.len() {
            if slice_of[g] > 0 {
                let (a, b) = c.gate(g).qubits;
                let pred_in = |q: usize| {
                    let queue = c.queue(q);
                    let pos = queue.iter().position(|&x| x == g).unwrap();
                    pos > 0 && slice_of[queue[pos - 1]] == slice_of[g] - 1
                };
                prop_assert!(pred_in(a) || pred_in(b));
            }
        }
        prop_assert_eq!(s.depth(), depth(&c));
    }

    #[test]
    fn slicing_matches_brute_force(pairs in pairs_strategy(5, 6)) {
        let c = Circuit::new(5, &pairs).unwrap();
        prop_assert_eq!(depth(&c), brute_force_depth(&c));
    }

    #[test]
    fn redundancy_elimination_never_deepens(pairs in pairs_strategy(5, 30)) {
        let c = Circuit::new(5, &pairs).unwrap();
        let e = eliminate_redundant(&c);
        prop_assert!(depth(&e) <= depth(&c));
        prop_assert!(e.len() <= c.len());
        prop_assert_eq!(eliminate_redundant(&e).pairs(), e.pairs());
    }

    #[test]
    fn cdr_of_identity_pairs_is_one(depths in prop::collection::vec(1usize..500, 1..50)) {
        let pairs: Vec<(usize, usize)> = depths.iter().map(|&d| (d, d)).collect();
        prop_assert_eq!(cdr(&pairs).unwrap(), 1.0);
    }

    #[test]
    fn gatelist_round_trip(pairs in pairs_strategy(7, 30)) {
        let c = Circuit::new(7, &pairs).unwrap();
        let text = serialize_circuit(&c, CircuitFormat::GateList);
        let back = parse_circuit(&text, CircuitFormat::GateList).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(serialize_circuit(&back, CircuitFormat::GateList), text);
    }

    #[test]
    fn qasm_round_trip_with_single_qubit_gates(
        ops in prop::collection::vec((0usize..4, 0usize..4, 1usize..4), 0..30),
    ) {
        let mut src = String::from("OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[4];\n");
        for (kind, a, off) in ops {
            let b = (a + off) % 4;
            match kind {
                0 => src.push_str(&format!("h q[{a}];\n")),
                1 => src.push_str(&format!("rz(pi/{off}) q[{b}];\n")),
                _ => src.push_str(&format!("cx q[{a}],q[{b}];\n")),
            }
        }
        let c = parse_circuit(&src, CircuitFormat::Qasm2).unwrap();
        let text = serialize_circuit(&c, CircuitFormat::Qasm2);
        let back = parse_circuit(&text, CircuitFormat::Qasm2).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(serialize_circuit(&back, CircuitFormat::Qasm2), text);
    }

    #[test]
    fn state_invariants_along_greedy_play(seed in 0u64..5_000, gates in 1usize..30, duration in 1u32..4) {
        let t = Topology::grid(3, 3).unwrap();
        let c = random_circuit(9, gates, seed);
        let alloc = QubitMapping::random(9, 9, seed).unwrap();
        let mut s = RoutingState::initial(Arc::new(c.clone()), Arc::new(t.clone()), alloc.clone(), RoutingConfig { swap_duration: duration }).unwrap();
        let mut scheduled = vec![0usize; c.len()];
        let mut remaining = s.remaining_gates();
        let mut steps = 0;
        while !s.is_done() && steps < 400 {
            let a = s.greedy_swaps(&ActionSet::new());
            let a = if a.is_empty() && steps % 7 == 6 { s.approach_swaps() } else { a };
            let f = s.extract_features(&a);
            let m = f.target_matrix();
            prop_assert!(m.iter().all(|row| row.iter().filter(|&&x| x).count() <= 1));
            let total: usize = f.remaining_targets.iter().sum();
            prop_assert_eq!(total, 2 * s.remaining_gates());
            for g in s.commit(&a) {
                scheduled[g] += 1;
            }
            prop_assert!(s.remaining_gates() <= remaining);
            remaining = s.remaining_gates();
            steps += 1;
        }
        if s.is_done() {
            let initial_layer = c.len() - scheduled.iter().sum::<usize>();
            prop_assert!(scheduled.iter().all(|&k| k <= 1));
            let (routed, _) = s.routed_circuit().unwrap();
            prop_assert_eq!(routed.gate_count(), c.len());
            prop_assert!(initial_layer <= c.len());
            prop_assert!(verify_routed(&c, &routed, &t, &alloc).is_valid());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn routed_output_verifies_and_round_trips(seed in 0u64..10_000, gates in 1usize..40, topo in 0usize..4, duration in 1u32..4) {
        let t = [Topology::line(6).unwrap(), Topology::grid(3, 3).unwrap(), Topology::ring(7).unwrap(), Topology::ibmqx20()][topo].clone();
        let n = t.node_count();
        let c = eliminate_redundant(&random_circuit(n, gates, seed));
        let alloc = QubitMapping::random(n, n, seed).unwrap();
        let cfg = SearchConfig { iterations: 60, seed, ..SearchConfig::default() };
        let routing = RoutingConfig { swap_duration: duration };
        let out = route(&c, &t, &AnalyticEvaluator::new(cfg.analytic()), &cfg, alloc.clone(), routing).unwrap();
        prop_assert!(verify_routed(&c, &out.routed, &t, &alloc).is_valid());
        prop_assert!(out.report.output_depth >= depth(&c));
        let text = serialize_routed(&out.routed, CircuitFormat::GateList);
        let back = parse_routed(&text, duration).unwrap();
        prop_assert!(verify_routed(&c, &back, &t, &alloc).is_valid());
        let g = greedy_baseline(&c, &t, &alloc, routing, seed).unwrap();
        prop_assert!(verify_routed(&c, &g, &t, &alloc).is_valid());
    }

    #[test]
    fn oracle_is_a_lower_bound(pairs in pairs_strategy(5, 3), duration in 1u32..3) {
        let t = Topology::line(5).unwrap();
        let c = Circuit::new(5, &pairs).unwrap();
        let alloc = QubitMapping::identity(5, 5).unwrap();
        let routing = RoutingConfig { swap_duration: duration };
        let best = oracle_min_depth(&c, &t, &alloc, routing, 8).unwrap();
        prop_assert!(verify_routed(&c, &best.witness, &t, &alloc).is_valid());
        prop_assert_eq!(best.witness.depth(), best.minimal_depth);
        let cfg = SearchConfig { iterations: 100, ..SearchConfig::default() };
        let out = route(&c, &t, &AnalyticEvaluator::new(cfg.analytic()), &cfg, alloc.clone(), routing).unwrap();
        prop_assert!(out.report.output_depth >= best.minimal_depth);
        let g = greedy_baseline(&c, &t, &alloc, routing, 0).unwrap();
        prop_assert!(g.depth() >= best.minimal_depth);
    }
}
