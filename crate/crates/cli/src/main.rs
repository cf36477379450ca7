use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use nrr_core::bench::{
    ausc, run_bench, run_method, write_report, BenchInstance, BenchPlan, MethodKind, MethodSpec, RecreateSpec,
};
use nrr_core::construct::savings_init;
use nrr_core::io::generate::{generate_instance, GeneratorConfig};
use nrr_core::io::trajectory::{read_trajectory, write_trajectory};
use nrr_core::io::vrp::{parse_vrp, write_vrp};
use nrr_core::io::weights::load_weights;
use nrr_core::io::write_solution;
use nrr_core::recreate::ExternalConfig;
use nrr_core::search::{
    initial_solution, AcceptMethod, Budget, ConstructMethod, InitMethod, SearchConfig, SelectMethod,
};
use nrr_core::sg::{construct_add_nn, construct_knn, construct_sweep, ruin, SweepParams};
use nrr_core::{validate, Instance};

/// Exit code for invalid flags or flag combinations.
const USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "nrr", version, about = "Ruin-and-recreate CVRP solver and benchmark tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one instance and write solution, trajectory and manifest.
    Solve(SolveArgs),
    /// Run every method on every instance and seed under a time budget.
    Bench(BenchArgs),
    /// Generate mixed uniform/clustered instances in TSPLIB format.
    Gen(GenArgs),
    /// Write (sub-graph, improvement) training records as JSON lines.
    ScoreData(ScoreDataArgs),
    /// Area under the savings curve of a trajectory file.
    Ausc(AuscArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum MethodArg {
    Nrr,
    Rr,
    Savings,
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum InitArg {
    Savings,
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ConstructArg {
    Sweep,
    Knn,
    #[value(name = "add_nn", alias = "add-nn")]
    AddNn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum SelectArg {
    Greedy,
    Sample,
    Disjoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum RecreateArg {
    Savings,
    Insertion,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum AcceptArg {
    Sa,
    Greedy,
}

/// Search flags shared by `solve`, `bench` and `score-data`.
#[derive(Debug, Clone, Args)]
struct SearchArgs {
    #[arg(long, value_enum, default_value = "savings")]
    init: InitArg,
    #[arg(long, value_enum, default_value = "sweep")]
    construct: ConstructArg,
    #[arg(long, value_enum, default_value = "disjoint")]
    select: SelectArg,
    /// Maximum number of sub-graphs recreated per iteration.
    #[arg(long, default_value_t = 16)]
    n_mult: usize,
    /// Target sub-graph size in customers.
    #[arg(long, default_value_t = 100)]
    n_target: usize,
    /// Tour neighbours per sub-graph for `--construct knn`.
    #[arg(long, default_value_t = 3)]
    knn_k: usize,
    #[arg(long, value_enum, default_value = "insertion")]
    recreate: RecreateArg,
    /// Random orderings tried by the insertion operator.
    #[arg(long, default_value_t = 16)]
    insertion_restarts: usize,
    /// Worker command for `--recreate external`, e.g. "nrr-worker savings".
    #[arg(long)]
    worker: Option<String>,
    #[arg(long, value_enum, default_value = "sa")]
    accept: AcceptArg,
    /// Scoring weights; without them nrr uses the heuristic scorer.
    #[arg(long)]
    weights: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// Instance in TSPLIB/CVRPLIB format.
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "nrr")]
    method: MethodArg,
    #[command(flatten)]
    search: SearchArgs,
    /// Wall-clock budget in seconds.
    #[arg(long, default_value_t = 60.0, conflicts_with = "iterations")]
    time_budget: f64,
    /// Iteration budget; timestamps become iteration numbers.
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "nrr-out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Instance files; combined with any generated ones.
    instances: Vec<PathBuf>,
    /// Generate this many instances of size `--n`.
    #[arg(long, default_value_t = 0)]
    generate: usize,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    gen_seed: u64,
    /// Dataset label used in aggregates.
    #[arg(long, default_value = "default")]
    dataset: String,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = vec![MethodArg::Nrr, MethodArg::Rr, MethodArg::Savings])]
    methods: Vec<MethodArg>,
    #[command(flatten)]
    search: SearchArgs,
    /// Number of seeds, starting at 0.
    #[arg(long, default_value_t = 3)]
    seeds: u64,
    /// Seconds per row, replacing the per-size defaults.
    #[arg(long, conflicts_with = "iterations")]
    time_budget: Option<f64>,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value = "bench-out")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    count: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50.0)]
    capacity: f64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct ScoreDataArgs {
    /// Instance files.
    instances: Vec<PathBuf>,
    #[command(flatten)]
    search: SearchArgs,
    /// Sweep restarts per instance (each restart yields a partition).
    #[arg(long, default_value_t = 4)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AuscArgs {
    trajectory: PathBuf,
    /// Budget T in the trajectory's time unit.
    #[arg(long)]
    budget: f64,
    #[arg(long, required_unless_present = "instance")]
    savings_cost: Option<f64>,
    /// Instance whose savings cost is the baseline.
    #[arg(long)]
    instance: Option<PathBuf>,
}

/// Error carrying the usage exit code.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn read_instance(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_vrp(&text).with_context(|| format!("parsing {}", path.display()))
}

fn search_config(a: &SearchArgs, budget: Budget, seed: u64) -> SearchConfig {
    SearchConfig {
        init: match a.init {
            InitArg::Savings => InitMethod::Savings,
            InitArg::Sweep => InitMethod::Sweep,
        },
        construct: match a.construct {
            ConstructArg::Sweep => ConstructMethod::Sweep,
            ConstructArg::Knn => ConstructMethod::Knn,
            ConstructArg::AddNn => ConstructMethod::AddNn,
        },
        select: match a.select {
            SelectArg::Greedy => SelectMethod::Greedy,
            SelectArg::Sample => SelectMethod::Sample,
            SelectArg::Disjoint => SelectMethod::Disjoint,
        },
        n_mult: a.n_mult,
        accept: match a.accept {
            AcceptArg::Sa => AcceptMethod::Sa,
            AcceptArg::Greedy => AcceptMethod::Greedy,
        },
        budget,
        n_target: a.n_target,
        knn_k: a.knn_k,
        insertion_restarts: a.insertion_restarts,
        seed,
        ..SearchConfig::default()
    }
}

fn recreate_spec(a: &SearchArgs) -> Result<RecreateSpec> {
    Ok(match a.recreate {
        RecreateArg::Savings => RecreateSpec::Savings,
        RecreateArg::Insertion => RecreateSpec::Insertion {
            restarts: a.insertion_restarts,
        },
        RecreateArg::External => {
            let cmd = a
                .worker
                .as_deref()
                .ok_or_else(|| usage("--recreate external requires --worker"))?;
            let mut parts = cmd.split_whitespace().map(String::from);
            let program = parts.next().ok_or_else(|| usage("--worker is empty"))?;
            RecreateSpec::External(ExternalConfig::new(program, parts.collect()))
        }
    })
}

fn method_kind(m: MethodArg) -> MethodKind {
    match m {
        MethodArg::Nrr => MethodKind::Nrr,
        MethodArg::Rr => MethodKind::Rr,
        MethodArg::Savings => MethodKind::Savings,
        MethodArg::Sweep => MethodKind::Sweep,
    }
}

fn method_name(m: MethodArg) -> &'static str {
    match m {
        MethodArg::Nrr => "nrr",
        MethodArg::Rr => "rr",
        MethodArg::Savings => "savings",
        MethodArg::Sweep => "sweep",
    }
}

fn check_budget(time_budget: Option<f64>) -> Result<()> {
    match time_budget {
        Some(t) if !(t > 0.0 && t.is_finite()) => Err(usage("--time-budget must be a positive number")),
        _ => Ok(()),
    }
}

fn write_manifest(path: &Path, command: &str, resolved: serde_json::Value) -> Result<()> {
    let manifest = json!({
        "command": command,
        "argv": std::env::args().collect::<Vec<_>>(),
        "version": env!("CARGO_PKG_VERSION"),
        "resolved": resolved,
    });
    fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn solve(a: SolveArgs) -> Result<()> {
    check_budget(Some(a.time_budget))?;
    if a.search.weights.is_some() && a.method != MethodArg::Nrr {
        return Err(usage("--weights only applies to --method nrr"));
    }
    let recreate = recreate_spec(&a.search)?;
    let instance = read_instance(&a.instance)?;
    let budget = match a.iterations {
        Some(n) => Budget::Iterations(n),
        None => Budget::Seconds(a.time_budget),
    };
    let model = match (&a.search.weights, a.method) {
        (Some(p), _) => Some(load_weights(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?),
        (None, MethodArg::Nrr) => {
            warn!("no --weights given; nrr uses the heuristic scorer");
            None
        }
        _ => None,
    };
    let spec = MethodSpec {
        name: method_name(a.method).into(),
        kind: method_kind(a.method),
        config: search_config(&a.search, budget, a.seed),
        recreate,
        weights: a.search.weights.clone(),
    };
    let out = run_method(&instance, &spec, model.as_ref(), budget, a.seed)?;
    if let Some(v) = validate(&instance, &out.solution).first() {
        bail!("internal error: final solution infeasible: {v}");
    }
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("solution.sol"), write_solution(&out.solution))?;
    fs::write(a.out.join("trajectory.csv"), write_trajectory(&out.trajectory))?;
    write_manifest(
        &a.out.join("manifest.json"),
        "solve",
        json!({
            "instance": a.instance,
            "method": spec,
            "budget": budget,
            "seed": a.seed,
            "out": a.out,
            "scorer": if model.is_some() { "gnn" } else { "heuristic" },
        }),
    )?;
    info!(
        "{} iterations, {} recreate calls, {} fallbacks",
        out.iterations, out.recreate_calls, out.fallbacks
    );
    println!("{}", out.solution.cost());
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    check_budget(a.time_budget)?;
    if a.methods.is_empty() {
        return Err(usage("--methods must name at least one method"));
    }
    if a.seeds == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    let recreate = recreate_spec(&a.search)?;
    let mut instances = Vec::new();
    for p in &a.instances {
        instances.push(BenchInstance::new(&a.dataset, read_instance(p)?, Some(p.clone())));
    }
    for k in 0..a.generate as u64 {
        let inst = generate_instance(&GeneratorConfig::new(a.n, a.gen_seed.wrapping_add(k)))?;
        instances.push(BenchInstance::new(&a.dataset, inst, None));
    }
    if instances.is_empty() {
        return Err(usage("no instances: pass files or --generate"));
    }
    let budget = match (a.time_budget, a.iterations) {
        (_, Some(n)) => Some(Budget::Iterations(n)),
        (Some(t), None) => Some(Budget::Seconds(t)),
        (None, None) => None,
    };
    let methods = a
        .methods
        .iter()
        .map(|&m| MethodSpec {
            name: method_name(m).into(),
            kind: method_kind(m),
            config: search_config(&a.search, budget.unwrap_or(Budget::Seconds(60.0)), 0),
            recreate: recreate.clone(),
            weights: if m == MethodArg::Nrr { a.search.weights.clone() } else { None },
        })
        .collect();
    let mut plan = BenchPlan::new(instances, methods);
    plan.budget_override = budget;
    plan.seeds = (0..a.seeds).collect();
    plan.threads = a.threads;
    let report = run_bench(&plan)?;
    write_report(&plan, &report, &a.out_dir)?;
    write_manifest(&a.out_dir.join("cli-manifest.json"), "bench", json!({ "out_dir": a.out_dir }))?;
    let failed = report.rows.iter().filter(|r| r.final_cost.is_none()).count();
    if failed > 0 {
        warn!("{failed} of {} rows failed", report.rows.len());
    }
    print!("{}", nrr_core::bench::aggregates_csv(&report));
    Ok(())
}

fn gen(a: GenArgs) -> Result<()> {
    if a.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    fs::create_dir_all(&a.out_dir)?;
    let mut files = Vec::new();
    for k in 0..a.count {
        let mut cfg = GeneratorConfig::new(a.n, a.seed.wrapping_add(k));
        cfg.capacity = a.capacity;
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        let inst = generate_instance(&cfg)?;
        let path = a.out_dir.join(format!("{}.vrp", inst.name()));
        fs::write(&path, write_vrp(&inst))?;
        files.push(path);
    }
    write_manifest(
        &a.out_dir.join("gen-manifest.json"),
        "gen",
        json!({ "n": a.n, "count": a.count, "seed": a.seed, "capacity": a.capacity, "files": files }),
    )?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn score_data(a: ScoreDataArgs) -> Result<()> {
    if a.instances.is_empty() {
        return Err(usage("score-data needs at least one instance"));
    }
    if a.restarts == 0 {
        return Err(usage("--restarts must be at least 1"));
    }
    let recreate = recreate_spec(&a.search)?.build();
    let cfg = search_config(&a.search, Budget::Iterations(0), a.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut out = String::new();
    let mut records = 0usize;
    for path in &a.instances {
        let inst = read_instance(path)?;
        let init = initial_solution(&inst, cfg.init);
        let family = match cfg.construct {
            ConstructMethod::Sweep => construct_sweep(
                &inst,
                &init,
                SweepParams {
                    target: cfg.size_target(),
                    restarts: a.restarts,
                    start: 0,
                },
            ),
            ConstructMethod::Knn => construct_knn(&inst, &init, cfg.knn_k),
            ConstructMethod::AddNn => construct_add_nn(&inst, &init, cfg.size_target()),
        };
        let d = inst.depot();
        let header = json!({
            "type": "instance",
            "name": inst.name(),
            "depot": [d.x, d.y],
            "nodes": (1..=inst.len()).map(|v| { let p = inst.coord(v); [p.x, p.y, inst.demand(v)] }).collect::<Vec<_>>(),
            "capacity": inst.capacity(),
            "knn": nrr_core::scoring::Architecture::default().knn,
        });
        out.push_str(&header.to_string());
        out.push('\n');
        for g in &family {
            let rsg = ruin(&inst, &init, g)?;
            let sub = recreate.recreate(&rsg, &mut rng, None)?;
            let prior = rsg.prior_cost;
            let recreated = sub.cost();
            let target = if prior > 0.0 { (prior - recreated) / prior } else { 0.0 };
            let rec = json!({
                "type": "sg",
                "instance": inst.name(),
                "node_index": g.nodes,
                "tours": g.tours.len(),
                "prior": prior,
                "recreated": recreated,
                "target": target,
            });
            out.push_str(&rec.to_string());
            out.push('\n');
            records += 1;
        }
    }
    if let Some(dir) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&a.out, out)?;
    let manifest = a.out.with_extension("manifest.json");
    write_manifest(&manifest, "score-data", json!({ "search": cfg, "records": records, "out": a.out }))?;
    println!("{records}");
    Ok(())
}

fn ausc_cmd(a: AuscArgs) -> Result<()> {
    if a.budget.is_nan() || a.budget <= 0.0 {
        return Err(usage("--budget must be positive"));
    }
    let traj = read_trajectory(&fs::read_to_string(&a.trajectory)?)?;
    let savings = match (a.savings_cost, &a.instance) {
        (Some(c), _) => c,
        (None, Some(p)) => savings_init(&read_instance(p)?).cost(),
        (None, None) => return Err(usage("need --savings-cost or --instance")),
    };
    println!("{}", ausc(&traj, savings, a.budget)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Bench(a) => bench(a),
        Command::Gen(a) => gen(a),
        Command::ScoreData(a) => score_data(a),
        Command::Ausc(a) => ausc_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(USAGE)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
