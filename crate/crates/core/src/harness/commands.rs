use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::circuit::{eliminate_redundant, Circuit};
use crate::evaluator::{
    load_params, save_params, selfplay, train, AnalyticEvaluator, Evaluator, NetParams, NnEvaluator, ReplayBuffer,
    SelfPlayConfig, TrainConfig,
};
use crate::format::{parse_circuit, parse_routed, CircuitFormat};
use crate::routing::{verify_routed, QubitMapping, RoutingConfig, Verification};
use crate::search::{route, RouteOutcome, SearchConfig};
use crate::topology::Topology;

use super::HarnessError;

/// Initial placement: identity, seeded random, or an explicit node list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Allocation {
    Identity,
    Random(u64),
    Explicit(Vec<usize>),
}

impl FromStr for Allocation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "identity" => Ok(Self::Identity),
            Some(("random", seed)) => {
                seed.parse().map(Self::Random).map_err(|_| format!("bad seed in `{s}`"))
            }
            Some(("nodes", list)) => list
                .split(',')
                .map(|t| t.trim().parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map(Self::Explicit)
                .map_err(|_| format!("bad node list in `{s}`")),
            _ => Err(format!("expected identity, random:SEED or nodes:A,B,..; got `{s}`")),
        }
    }
}

impl Allocation {
    /// Mapping for trial `trial`; random allocations advance the seed per trial.
    pub fn mapping(&self, qubits: usize, nodes: usize, trial: usize) -> Result<QubitMapping, HarnessError> {
        Ok(match self {
            Self::Identity => QubitMapping::identity(qubits, nodes)?,
            Self::Random(seed) => QubitMapping::random(qubits, nodes, seed.wrapping_add(trial as u64))?,
            Self::Explicit(list) => {
                if list.len() != qubits {
                    return Err(HarnessError::Usage(format!(
                        "allocation lists {} nodes for {qubits} qubits",
                        list.len()
                    )));
                }
                QubitMapping::from_allocation(list, nodes)?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvaluatorSpec {
    Analytic,
    Nn(PathBuf),
}

impl FromStr for EvaluatorSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "analytic" => Ok(Self::Analytic),
            Some(("nn", path)) if !path.is_empty() => Ok(Self::Nn(PathBuf::from(path))),
            _ => Err(format!("expected analytic or nn:PATH; got `{s}`")),
        }
    }
}

impl EvaluatorSpec {
    pub fn load(&self, search: &SearchConfig) -> Result<Box<dyn Evaluator>, HarnessError> {
        Ok(match self {
            Self::Analytic => Box::new(AnalyticEvaluator::new(search.analytic())),
            Self::Nn(path) => Box::new(NnEvaluator::new(load_params(path)?)),
        })
    }

    pub fn router_name(&self) -> &'static str {
        match self {
            Self::Analytic => "mcts-analytic",
            Self::Nn(_) => "mcts-nn",
        }
    }
}

fn read(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.display().to_string(), source })
}

/// Reads and parses a circuit file, detecting the format from its content.
pub fn load_circuit(path: &Path) -> Result<(Circuit, CircuitFormat), HarnessError> {
    let text = read(path)?;
    let format = CircuitFormat::detect(&text);
    let c = parse_circuit(&text, format)
        .map_err(|e| HarnessError::Parse { path: path.display().to_string(), message: e.to_string() })?;
    Ok((c, format))
}

/// The circuit the router sees: redundancy-eliminated unless `keep_redundant`.
pub fn prepare_circuit(c: &Circuit, keep_redundant: bool) -> Circuit {
    if keep_redundant {
        c.clone()
    } else {
        eliminate_redundant(c)
    }
}

#[derive(Debug, Clone)]
pub struct RouteRun {
    pub outcome: RouteOutcome,
    pub allocation: QubitMapping,
    pub trial: usize,
}

/// Routes once per trial and keeps the shallowest result, then fewest
/// SWAPs, then earliest trial. Trial `k` searches with seed `seed + k`.
pub fn route_trials(
    c: &Circuit,
    t: &Topology,
    evaluator: &dyn Evaluator,
    search: &SearchConfig,
    allocation: &Allocation,
    trials: usize,
    routing: RoutingConfig,
) -> Result<RouteRun, HarnessError> {
    if c.qubit_count() > t.node_count() {
        return Err(HarnessError::Usage(format!(
            "circuit has {} qubits, device {} nodes",
            c.qubit_count(),
            t.node_count()
        )));
    }
    let mut best: Option<RouteRun> = None;
    for trial in 0..trials.max(1) {
        let mapping = allocation.mapping(c.qubit_count(), t.node_count(), trial)?;
        let cfg = SearchConfig { seed: search.seed.wrapping_add(trial as u64), ..search.clone() };
        let outcome = route(c, t, evaluator, &cfg, mapping.clone(), routing)?;
        let key = |r: &RouteOutcome| (r.report.output_depth, r.report.swaps_added);
        if best.as_ref().is_none_or(|b| key(&outcome) < key(&b.outcome)) {
            best = Some(RouteRun { outcome, allocation: mapping, trial });
        }
    }
    Ok(best.expect("at least one trial"))
}

/// Checks a routed file against its source circuit.
pub fn verify_file(
    circuit_path: &Path,
    routed_path: &Path,
    t: &Topology,
    allocation: &Allocation,
    routing: RoutingConfig,
    keep_redundant: bool,
) -> Result<Verification, HarnessError> {
    let (c, _) = load_circuit(circuit_path)?;
    let c = prepare_circuit(&c, keep_redundant);
    let routed = parse_routed(&read(routed_path)?, routing.swap_duration)
        .map_err(|e| HarnessError::Parse { path: routed_path.display().to_string(), message: e.to_string() })?;
    let mapping = allocation.mapping(c.qubit_count(), t.node_count(), 0)?;
    Ok(verify_routed(&c, &routed, t, &mapping))
}

#[derive(Debug, Clone)]
pub struct TrainLoopConfig {
    pub rounds: usize,
    pub buffer_capacity: usize,
    pub selfplay: SelfPlayConfig,
    pub train: TrainConfig,
    /// Starting parameters; `None` draws them from the train seed.
    pub init: Option<PathBuf>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub rounds: usize,
    pub samples: usize,
    pub steps: usize,
    pub final_loss: Option<f64>,
    pub params: PathBuf,
    pub loss_curve: PathBuf,
}

/// Alternates self-play with the current network and training on the
/// replay buffer. Parameters are checkpointed after every round and the
/// loss of every step is appended to `loss.csv`.
pub fn train_loop(t: &Topology, cfg: &TrainLoopConfig) -> Result<TrainSummary, HarnessError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| HarnessError::Io { path, source }
    };
    fs::create_dir_all(&cfg.out_dir).map_err(io(&cfg.out_dir))?;
    let mut params = match &cfg.init {
        Some(path) => load_params(path)?,
        None => NetParams::random(cfg.train.seed),
    };
    let latest = cfg.out_dir.join("params.json");
    let curve_path = cfg.out_dir.join("loss.csv");
    let mut curve = String::from("round,step,loss\n");
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut samples = 0;
    let mut steps = 0;
    let mut final_loss = None;
    for round in 0..cfg.rounds {
        let sp = SelfPlayConfig {
            seed: cfg.selfplay.seed.wrapping_add(round as u64),
            ..cfg.selfplay.clone()
        };
        samples += selfplay(t, &NnEvaluator::new(params.clone()), &sp, &mut buffer)?;
        if !buffer.is_empty() {
            let tc = TrainConfig {
                batch_size: cfg.train.batch_size.min(buffer.len()),
                seed: cfg.train.seed.wrapping_add(round as u64),
                ..cfg.train.clone()
            };
            let (next, losses) = train(&params, t, &buffer, &tc)?;
            params = next;
            for (step, loss) in losses.iter().enumerate() {
                curve.push_str(&format!("{round},{step},{loss}\n"));
            }
            steps += losses.len();
            final_loss = losses.last().copied().or(final_loss);
        }
        save_params(&params, cfg.out_dir.join(format!("params-round-{round}.json")))?;
        save_params(&params, &latest)?;
        fs::write(&curve_path, &curve).map_err(io(&curve_path))?;
    }
    Ok(TrainSummary { rounds: cfg.rounds, samples, steps, final_loss, params: latest, loss_curve: curve_path })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn allocation_specs() {
        assert_eq!("identity".parse(), Ok(Allocation::Identity));
        assert_eq!("random:7".parse(), Ok(Allocation::Random(7)));
        assert_eq!("nodes:2,0,1".parse(), Ok(Allocation::Explicit(vec![2, 0, 1])));
        assert!("random:x".parse::<Allocation>().is_err());
        assert!("shuffle".parse::<Allocation>().is_err());
    }

    #[test]
    fn evaluator_specs() {
        assert_eq!("analytic".parse(), Ok(EvaluatorSpec::Analytic));
        assert_eq!("nn:w.json".parse(), Ok(EvaluatorSpec::Nn(PathBuf::from("w.json"))));
        assert!("nn:".parse::<EvaluatorSpec>().is_err());
    }

    #[test]
    fn best_trial_is_no_worse_than_first() {
        let t = Topology::grid(3, 3).unwrap();
        let c = crate::circuit::random_circuit(9, 30, 4);
        let search = SearchConfig { iterations: 50, ..SearchConfig::default() };
        let eval = AnalyticEvaluator::new(search.analytic());
        let alloc = Allocation::Random(11);
        let one = route_trials(&c, &t, &eval, &search, &alloc, 1, RoutingConfig::default()).unwrap();
        let three = route_trials(&c, &t, &eval, &search, &alloc, 3, RoutingConfig::default()).unwrap();
        assert!(three.outcome.report.output_depth <= one.outcome.report.output_depth);
        assert!(verify_routed(&c, &three.outcome.routed, &t, &three.allocation).is_valid());
    }

    #[test]
    fn train_loop_checkpoints_each_round() {
        let dir = tempfile::tempdir().unwrap();
        let t = Topology::line(4).unwrap();
        let cfg = TrainLoopConfig {
            rounds: 2,
            buffer_capacity: 500,
            selfplay: SelfPlayConfig {
                circuits: 2,
                min_gates: 3,
                max_gates: 6,
                search: SearchConfig { iterations: 20, ..SearchConfig::default() },
                seed: 1,
            },
            train: TrainConfig { steps: 5, batch_size: 8, ..TrainConfig::default() },
            init: None,
            out_dir: dir.path().to_path_buf(),
        };
        let summary = train_loop(&t, &cfg).unwrap();
        assert_eq!(summary.steps, 10);
        for r in 0..2 {
            assert!(dir.path().join(format!("params-round-{r}.json")).exists());
        }
        let curve = fs::read_to_string(&summary.loss_curve).unwrap();
        assert_eq!(curve.lines().count(), 11);
        let reloaded = load_params(&summary.params).unwrap();
        assert_eq!(load_params(dir.path().join("params-round-1.json")).unwrap(), reloaded);
    }
}
