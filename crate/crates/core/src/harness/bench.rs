use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::circuit::{self, random_circuit, Circuit};
use crate::evaluator::{AnalyticEvaluator, Evaluator, NetParams, NnEvaluator};
use crate::routing::{QubitMapping, RoutingConfig};
use crate::search::{route, SearchConfig};
use crate::topology::Topology;

use super::{greedy_baseline, prepare_circuit, HarnessError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Router {
    MctsAnalytic,
    MctsNn,
    GreedyBaseline,
}

impl Router {
    pub fn name(self) -> &'static str {
        match self {
            Self::MctsAnalytic => "mcts-analytic",
            Self::MctsNn => "mcts-nn",
            Self::GreedyBaseline => "greedy-baseline",
        }
    }
}

impl FromStr for Router {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Self::MctsAnalytic, Self::MctsNn, Self::GreedyBaseline]
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| format!("unknown router `{s}`; expected mcts-analytic, mcts-nn or greedy-baseline"))
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub sizes: Vec<usize>,
    pub repeats: usize,
    pub routers: Vec<Router>,
    pub seed: u64,
    pub search: SearchConfig,
    /// Required when `routers` contains `mcts-nn`.
    pub nn: Option<NetParams>,
    pub routing: RoutingConfig,
    pub keep_redundant: bool,
    /// Record wall-clock times. Off keeps reports byte-reproducible.
    pub timing: bool,
    /// Worker threads; `None` uses the rayon default.
    pub threads: Option<usize>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            sizes: vec![30, 60, 90, 120, 150],
            repeats: 10,
            routers: vec![Router::MctsAnalytic, Router::GreedyBaseline],
            seed: 0,
            search: SearchConfig::default(),
            nn: None,
            routing: RoutingConfig::default(),
            keep_redundant: false,
            timing: false,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRecord {
    pub circuit_id: String,
    pub size: usize,
    /// Two-qubit gates after redundancy elimination.
    pub gate_count: usize,
    pub input_depth: usize,
    pub output_depth: usize,
    pub swaps: usize,
    pub wall_time_ms: Option<u64>,
    pub router: Router,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketMean {
    pub router: Router,
    pub size: usize,
    pub circuits: usize,
    pub mean_output_depth: f64,
    pub mean_swaps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RouterCdr {
    pub router: Router,
    pub cdr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub topology: String,
    pub seed: u64,
    pub records: Vec<BenchmarkRecord>,
    pub buckets: Vec<BucketMean>,
    pub cdr: Vec<RouterCdr>,
}

impl BenchmarkReport {
    /// Depth ratio of `router` recomputed from the records.
    pub fn recompute_cdr(&self, router: Router) -> Result<f64, HarnessError> {
        let pairs: Vec<(usize, usize)> = self
            .records
            .iter()
            .filter(|r| r.router == router)
            .map(|r| (r.input_depth, r.output_depth))
            .collect();
        Ok(circuit::cdr(&pairs)?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One row per record.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r).expect("record serializes");
        }
        String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
    }
}

/// Worker cap from `QROUTE_THREADS`, if set to a positive integer.
pub fn thread_limit() -> Option<usize> {
    std::env::var("QROUTE_THREADS").ok()?.trim().parse().ok().filter(|&n| n > 0)
}

struct Instance {
    id: String,
    size: usize,
    seed: u64,
    circuit: Circuit,
}

/// Routes one random circuit per size and repeat with every router. All
/// routers see the same circuit and the same search seed.
pub fn benchmark(t: &Topology, cfg: &BenchmarkConfig) -> Result<BenchmarkReport, HarnessError> {
    if cfg.sizes.contains(&0) {
        return Err(HarnessError::Usage("benchmark sizes must be positive".into()));
    }
    if cfg.routers.is_empty() {
        return Err(HarnessError::Usage("no routers selected".into()));
    }
    if cfg.routers.contains(&Router::MctsNn) && cfg.nn.is_none() {
        return Err(HarnessError::Usage("router mcts-nn needs network parameters".into()));
    }
    cfg.search.validate()?;
    let n = t.node_count();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut instances = Vec::new();
    for &size in &cfg.sizes {
        for repeat in 0..cfg.repeats {
            let seed: u64 = rng.random();
            let circuit = prepare_circuit(&random_circuit(n, size, seed), cfg.keep_redundant);
            instances.push(Instance { id: format!("n{size}-r{repeat}"), size, seed, circuit });
        }
    }
    let jobs: Vec<(&Instance, Router)> =
        instances.iter().flat_map(|i| cfg.routers.iter().map(move |&r| (i, r))).collect();

    let analytic = AnalyticEvaluator::new(cfg.search.analytic());
    let nn = cfg.nn.clone().map(NnEvaluator::new);
    let run = |(inst, router): &(&Instance, Router)| -> Result<BenchmarkRecord, HarnessError> {
        let started = Instant::now();
        let alloc = QubitMapping::identity(n, n)?;
        let input_depth = circuit::depth(&inst.circuit);
        let (output_depth, swaps) = match router {
            Router::GreedyBaseline => {
                let r = greedy_baseline(&inst.circuit, t, &alloc, cfg.routing, inst.seed)?;
                (r.depth(), r.swap_count())
            }
            Router::MctsAnalytic | Router::MctsNn => {
                let eval: &dyn Evaluator = match router {
                    Router::MctsNn => nn.as_ref().expect("checked above"),
                    _ => &analytic,
                };
                let search = SearchConfig { seed: inst.seed, ..cfg.search.clone() };
                let out = route(&inst.circuit, t, eval, &search, alloc, cfg.routing)?;
                (out.report.output_depth, out.report.swaps_added)
            }
        };
        Ok(BenchmarkRecord {
            circuit_id: inst.id.clone(),
            size: inst.size,
            gate_count: inst.circuit.len(),
            input_depth,
            output_depth,
            swaps,
            wall_time_ms: cfg.timing.then(|| started.elapsed().as_millis() as u64),
            router: *router,
            seed: inst.seed,
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .map_err(|e| HarnessError::Usage(format!("thread pool: {e}")))?;
    let records = pool.install(|| jobs.par_iter().map(run).collect::<Result<Vec<_>, _>>())?;

    let mut buckets = Vec::new();
    let mut cdr = Vec::new();
    for &router in &cfg.routers {
        for &size in &cfg.sizes {
            let rows: Vec<&BenchmarkRecord> =
                records.iter().filter(|r| r.router == router && r.size == size).collect();
            if rows.is_empty() {
                continue;
            }
            let k = rows.len() as f64;
            buckets.push(BucketMean {
                router,
                size,
                circuits: rows.len(),
                mean_output_depth: rows.iter().map(|r| r.output_depth as f64).sum::<f64>() / k,
                mean_swaps: rows.iter().map(|r| r.swaps as f64).sum::<f64>() / k,
            });
        }
    }
    let mut report = BenchmarkReport { topology: t.name().to_string(), seed: cfg.seed, records, buckets, cdr: Vec::new() };
    if !instances.is_empty() {
        for &router in &cfg.routers {
            cdr.push(RouterCdr { router, cdr: report.recompute_cdr(router)? });
        }
    }
    report.cdr = cdr;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(routers: Vec<Router>, repeats: usize) -> BenchmarkConfig {
        BenchmarkConfig {
            sizes: vec![10, 20],
            repeats,
            routers,
            seed: 5,
            search: SearchConfig { iterations: 30, ..SearchConfig::default() },
            ..BenchmarkConfig::default()
        }
    }

    #[test]
    fn one_record_per_size_for_single_router() {
        let t = Topology::grid(3, 3).unwrap();
        let r = benchmark(&t, &small(vec![Router::GreedyBaseline], 1)).unwrap();
        assert_eq!(r.records.len(), 2);
        assert!(r.records.iter().all(|x| x.input_depth >= 1 && x.output_depth >= x.input_depth));
    }

    #[test]
    fn routers_share_circuits_and_cdr_recomputes() {
        let t = Topology::line(6).unwrap();
        let r = benchmark(&t, &small(vec![Router::MctsAnalytic, Router::GreedyBaseline], 2)).unwrap();
        assert_eq!(r.records.len(), 8);
        for pair in r.records.chunks(2) {
            assert_eq!(pair[0].circuit_id, pair[1].circuit_id);
            assert_eq!(pair[0].input_depth, pair[1].input_depth);
            assert_eq!(pair[0].gate_count, pair[1].gate_count);
        }
        for c in &r.cdr {
            assert!((c.cdr - r.recompute_cdr(c.router).unwrap()).abs() <= 1e-12);
        }
        assert_eq!(r.buckets.len(), 4);
    }

    #[test]
    fn reruns_are_identical_with_threads() {
        let t = Topology::grid(2, 3).unwrap();
        let cfg = BenchmarkConfig { threads: Some(3), ..small(vec![Router::MctsAnalytic], 2) };
        let a = benchmark(&t, &cfg).unwrap();
        let b = benchmark(&t, &BenchmarkConfig { threads: Some(1), ..cfg.clone() }).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn nn_router_needs_parameters() {
        let t = Topology::line(4).unwrap();
        assert!(matches!(benchmark(&t, &small(vec![Router::MctsNn], 1)), Err(HarnessError::Usage(_))));
        let cfg = BenchmarkConfig { nn: Some(NetParams::random(2)), ..small(vec![Router::MctsNn], 1) };
        assert_eq!(benchmark(&t, &cfg).unwrap().records.len(), 2);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let t = Topology::line(5).unwrap();
        let r = benchmark(&t, &small(vec![Router::GreedyBaseline], 1)).unwrap();
        let csv = r.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "circuit_id,size,gate_count,input_depth,output_depth,swaps,wall_time_ms,router,seed"
        );
        assert_eq!(lines.count(), 2);
    }
}
