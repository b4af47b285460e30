use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use qroute::evaluator::{load_params, SelfPlayConfig, TrainConfig};
use qroute::format::{serialize_routed, CircuitFormat};
use qroute::harness::{
    benchmark, load_circuit, oracle_min_depth, prepare_circuit, route_trials, thread_limit, train_loop, verify_file,
    Allocation, BenchmarkConfig, EvaluatorSpec, HarnessError, Router, TrainLoopConfig,
};
use qroute::routing::RoutingConfig;
use qroute::search::SearchConfig;
use qroute::topology::Topology;

#[derive(Parser)]
#[command(name = "qroute", version, about = "Depth-minimizing qubit router")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Route one circuit file.
    Route(RouteArgs),
    /// Route random circuits with several routers and report depths.
    Benchmark(BenchArgs),
    /// Train network parameters by self-play.
    Train(TrainArgs),
    /// Exhaustive minimal-depth schedule for a tiny instance.
    Oracle(OracleArgs),
    /// Check a routed file against its source circuit.
    Verify(VerifyArgs),
}

#[derive(Args, Clone)]
struct DeviceArgs {
    /// grid:MxN, line:N, ring:N, ibmqx20, sycamore or file:PATH
    #[arg(long, value_parser = parse_topology)]
    topology: Topology,
    #[arg(long, default_value_t = 1)]
    swap_duration: u32,
    /// Route the circuit as given, without dropping repeated gates.
    #[arg(long)]
    keep_redundant: bool,
}

impl DeviceArgs {
    fn routing(&self) -> Result<RoutingConfig, HarnessError> {
        if self.swap_duration == 0 {
            return Err(HarnessError::Usage("swap duration must be at least 1".into()));
        }
        Ok(RoutingConfig { swap_duration: self.swap_duration })
    }
}

#[derive(Args, Clone, Default)]
struct SearchArgs {
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    dirichlet_alpha: Option<f64>,
    #[arg(long)]
    dirichlet_eps: Option<f64>,
    #[arg(long)]
    reward_gate: Option<f64>,
    #[arg(long)]
    reward_depth: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_layers: Option<usize>,
}

impl SearchArgs {
    fn apply(&self, base: SearchConfig) -> SearchConfig {
        SearchConfig {
            iterations: self.iterations.unwrap_or(base.iterations),
            c: self.c.unwrap_or(base.c),
            gamma: self.gamma.unwrap_or(base.gamma),
            dirichlet_alpha: self.dirichlet_alpha.unwrap_or(base.dirichlet_alpha),
            dirichlet_epsilon: self.dirichlet_eps.unwrap_or(base.dirichlet_epsilon),
            reward_gate: self.reward_gate.unwrap_or(base.reward_gate),
            reward_depth: self.reward_depth.unwrap_or(base.reward_depth),
            seed: self.seed.unwrap_or(base.seed),
            max_layers: self.max_layers.or(base.max_layers),
        }
    }
}

#[derive(Args)]
struct RouteArgs {
    circuit: PathBuf,
    #[command(flatten)]
    device: DeviceArgs,
    /// analytic or nn:PATH
    #[arg(long, default_value = "analytic")]
    evaluator: EvaluatorSpec,
    /// identity, random:SEED or nodes:A,B,..
    #[arg(long, default_value = "identity")]
    allocation: Allocation,
    /// Independent routings; the shallowest is kept.
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[command(flatten)]
    search: SearchArgs,
    /// Routed circuit destination; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// JSON report destination.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Output format; defaults to the input's.
    #[arg(long)]
    format: Option<CircuitFormat>,
    /// Record wall-clock time in the report.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    device: DeviceArgs,
    #[arg(long, value_delimiter = ',', default_value = "30,60,90,120,150")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    #[arg(long, value_delimiter = ',', default_value = "mcts-analytic,greedy-baseline")]
    routers: Vec<Router>,
    /// Parameters for the mcts-nn router.
    #[arg(long)]
    nn: Option<PathBuf>,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_parser = parse_topology)]
    topology: Topology,
    #[arg(long, default_value_t = 10)]
    rounds: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 10_000)]
    buffer_capacity: usize,
    /// Gradient steps per round.
    #[arg(long, default_value_t = 200)]
    steps: usize,
    /// Self-play circuits per round.
    #[arg(long, default_value_t = 8)]
    circuits: usize,
    #[arg(long, default_value_t = 10)]
    min_gates: usize,
    #[arg(long, default_value_t = 50)]
    max_gates: usize,
    /// Starting parameters; random when absent.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long, default_value = "train-out")]
    out: PathBuf,
    #[command(flatten)]
    search: SearchArgs,
}

#[derive(Args)]
struct OracleArgs {
    circuit: PathBuf,
    #[command(flatten)]
    device: DeviceArgs,
    #[arg(long, default_value = "identity")]
    allocation: Allocation,
    #[arg(long, default_value_t = 8)]
    depth_bound: usize,
    /// Witness schedule destination.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    circuit: PathBuf,
    routed: PathBuf,
    #[command(flatten)]
    device: DeviceArgs,
    #[arg(long, default_value = "identity")]
    allocation: Allocation,
}

fn parse_topology(s: &str) -> Result<Topology, String> {
    Topology::from_spec(s).map_err(|e| e.to_string())
}

fn write(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(|source| HarnessError::Io { path: path.display().to_string(), source })
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct RouteReportFile<'a> {
    router: &'a str,
    topology: &'a str,
    swap_duration: u32,
    gates: usize,
    redundant_removed: usize,
    trial: usize,
    initial_allocation: &'a [usize],
    final_mapping: &'a [usize],
    input_depth: usize,
    output_depth: usize,
    swaps_added: usize,
    layers: usize,
    seed: u64,
    wall_time_ms: Option<u64>,
    search: &'a SearchConfig,
}

fn cmd_route(a: RouteArgs) -> Result<(), HarnessError> {
    let routing = a.device.routing()?;
    let t = &a.device.topology;
    let (original, input_format) = load_circuit(&a.circuit)?;
    let c = prepare_circuit(&original, a.device.keep_redundant);
    let search = a.search.apply(SearchConfig::default());
    let evaluator = a.evaluator.load(&search)?;
    let run = route_trials(&c, t, evaluator.as_ref(), &search, &a.allocation, a.trials, routing)?;
    let out = &run.outcome;
    let text = serialize_routed(&out.routed, a.format.unwrap_or(input_format));
    match &a.output {
        Some(path) => write(path, &text)?,
        None => print!("{text}"),
    }
    let report = RouteReportFile {
        router: a.evaluator.router_name(),
        topology: t.name(),
        swap_duration: routing.swap_duration,
        gates: c.len(),
        redundant_removed: original.len() - c.len(),
        trial: run.trial,
        initial_allocation: run.allocation.allocation(),
        final_mapping: out.final_mapping.allocation(),
        input_depth: out.report.input_depth,
        output_depth: out.report.output_depth,
        swaps_added: out.report.swaps_added,
        layers: out.report.layers,
        seed: out.report.seed,
        wall_time_ms: if a.timing { out.report.wall_time_ms } else { None },
        search: &SearchConfig { seed: out.report.seed, ..search },
    };
    match &a.report {
        Some(path) => write(path, &json(&report))?,
        None => eprint!("{}", json(&report)),
    }
    Ok(())
}

fn cmd_benchmark(a: BenchArgs) -> Result<(), HarnessError> {
    let search = a.search.apply(SearchConfig::default());
    let cfg = BenchmarkConfig {
        sizes: a.sizes,
        repeats: a.repeats,
        routers: a.routers,
        seed: search.seed,
        nn: a.nn.as_deref().map(load_params).transpose()?,
        routing: a.device.routing()?,
        keep_redundant: a.device.keep_redundant,
        timing: a.timing,
        threads: thread_limit(),
        search,
    };
    let report = benchmark(&a.device.topology, &cfg)?;
    match &a.json {
        Some(path) => write(path, &report.to_json())?,
        None => print!("{}", report.to_json()),
    }
    if let Some(path) = &a.csv {
        write(path, &report.to_csv())?;
    }
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<(), HarnessError> {
    let search = a.search.apply(SearchConfig { iterations: 100, ..SearchConfig::default() });
    let seed = search.seed;
    let cfg = TrainLoopConfig {
        rounds: a.rounds,
        buffer_capacity: a.buffer_capacity,
        selfplay: SelfPlayConfig {
            circuits: a.circuits,
            min_gates: a.min_gates,
            max_gates: a.max_gates,
            search,
            seed,
        },
        train: TrainConfig { steps: a.steps, lr: a.lr, batch_size: a.batch_size, seed, ..TrainConfig::default() },
        init: a.init,
        out_dir: a.out,
    };
    let summary = train_loop(&a.topology, &cfg)?;
    print!("{}", json(&summary));
    Ok(())
}

#[derive(Serialize)]
struct OracleReport {
    minimal_depth: usize,
    swaps: usize,
}

fn cmd_oracle(a: OracleArgs) -> Result<(), HarnessError> {
    let routing = a.device.routing()?;
    let (c, format) = load_circuit(&a.circuit)?;
    let c = prepare_circuit(&c, a.device.keep_redundant);
    let t = &a.device.topology;
    let alloc = a.allocation.mapping(c.qubit_count(), t.node_count(), 0)?;
    let r = oracle_min_depth(&c, t, &alloc, routing, a.depth_bound)?;
    if let Some(path) = &a.output {
        write(path, &serialize_routed(&r.witness, format))?;
    }
    print!("{}", json(&OracleReport { minimal_depth: r.minimal_depth, swaps: r.witness.swap_count() }));
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> Result<(), HarnessError> {
    let routing = a.device.routing()?;
    let v = verify_file(&a.circuit, &a.routed, &a.device.topology, &a.allocation, routing, a.device.keep_redundant)?;
    match v.diagnosis {
        None => {
            println!("valid");
            Ok(())
        }
        Some(d) => Err(HarnessError::Verification(d.to_string())),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Route(a) => cmd_route(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Train(a) => cmd_train(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
