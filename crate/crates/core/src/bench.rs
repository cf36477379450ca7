//! Time-budgeted benchmark runner and the area-under-savings-curve metric.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::construct::savings_init;
use crate::error::{Error, Result};
use crate::io::trajectory::{write_trajectory, Trajectory};
use crate::model::{validate, Instance};
use crate::recreate::{ExternalConfig, ExternalRecreate, InsertionRecreate, Recreate, SavingsRecreate};
use crate::scoring::{GnnScorer, HeuristicScorer, ScoringModel, Scorer};
use crate::search::{initial_solution, nrr, rr, Budget, InitMethod, SearchConfig, SearchOutcome};

pub const REPORT_HEADER: &str = "method,instance,seed,final_cost,ausc,wall_s";
/// Baseline multiplier applied to the savings cost.
pub const AUSC_BASELINE: f64 = 1.1;
pub const CURVE_POINTS: usize = 101;

/// Area between the baseline `1.1 * savings_cost` and the best-cost step
/// curve over `[0, horizon]`, normalised by the baseline area.
///
/// The curve equals the baseline before its first point, is held at its
/// last value until `horizon`, and is clamped from above by the baseline.
pub fn ausc(trajectory: &Trajectory, savings_cost: f64, horizon: f64) -> Result<f64> {
    let Some(first) = trajectory.points.first() else {
        return Err(Error::Metric("empty trajectory".into()));
    };
    if !(savings_cost > 0.0 && savings_cost.is_finite()) {
        return Err(Error::Metric(format!("savings cost must be positive, got {savings_cost}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Metric(format!("horizon must be positive, got {horizon}")));
    }
    if first.t < 0.0 {
        return Err(Error::Metric("negative timestamp".into()));
    }
    let b = AUSC_BASELINE * savings_cost;
    let mut pts: Vec<(f64, f64)> = vec![(0.0, b), (first.t.min(horizon), b)];
    let mut last = b;
    for p in &trajectory.points {
        if p.t > horizon {
            break;
        }
        last = p.best_cost;
        pts.push((p.t, p.best_cost));
    }
    pts.push((horizon, last));
    let area: f64 = pts
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1.min(b) + w[1].1.min(b)) / 2.0)
        .sum();
    let full = b * horizon;
    Ok(((full - area) / full).clamp(0.0, 1.0))
}

pub fn gap(cost: f64, reference: f64) -> f64 {
    (cost - reference) / reference
}

/// Best cost of a step trajectory at time `t`; `None` before its first point.
pub fn value_at(trajectory: &Trajectory, t: f64) -> Option<f64> {
    trajectory
        .points
        .iter()
        .take_while(|p| p.t <= t)
        .last()
        .map(|p| p.best_cost)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Nrr,
    Rr,
    Savings,
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RecreateSpec {
    Savings,
    Insertion { restarts: usize },
    External(ExternalConfig),
}

impl RecreateSpec {
    pub fn build(&self) -> Box<dyn Recreate> {
        match self {
            RecreateSpec::Savings => Box::new(SavingsRecreate),
            RecreateSpec::Insertion { restarts } => Box::new(InsertionRecreate { restarts: *restarts }),
            RecreateSpec::External(cfg) => Box::new(ExternalRecreate::new(cfg.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub name: String,
    pub kind: MethodKind,
    pub config: SearchConfig,
    pub recreate: RecreateSpec,
    /// Scoring weights for `nrr`; the heuristic scorer is used when absent.
    pub weights: Option<PathBuf>,
}

impl MethodSpec {
    pub fn new(name: impl Into<String>, kind: MethodKind) -> Self {
        let config = SearchConfig::default();
        Self {
            name: name.into(),
            kind,
            recreate: RecreateSpec::Insertion {
                restarts: config.insertion_restarts,
            },
            config,
            weights: None,
        }
    }
}

/// Runs one method under `budget` and `seed`, overriding the method's config.
pub fn run_method(
    instance: &Instance,
    spec: &MethodSpec,
    model: Option<&ScoringModel>,
    budget: Budget,
    seed: u64,
) -> Result<SearchOutcome> {
    let cfg = SearchConfig {
        budget,
        seed,
        ..spec.config.clone()
    };
    match spec.kind {
        MethodKind::Nrr => {
            let op = spec.recreate.build();
            match model {
                Some(m) => {
                    let scorer = GnnScorer::new(m.clone(), instance)?;
                    nrr(instance, &cfg, &scorer, op.as_ref())
                }
                None => nrr(instance, &cfg, &HeuristicScorer as &dyn Scorer, op.as_ref()),
            }
        }
        MethodKind::Rr => rr(instance, &cfg),
        MethodKind::Savings | MethodKind::Sweep => {
            let start = Instant::now();
            let init = if spec.kind == MethodKind::Savings {
                InitMethod::Savings
            } else {
                InitMethod::Sweep
            };
            let solution = initial_solution(instance, init);
            let t = match budget {
                Budget::Seconds(_) => start.elapsed().as_secs_f64(),
                Budget::Iterations(_) => 0.0,
            };
            let mut trajectory = Trajectory::new();
            trajectory.start(t, solution.cost());
            Ok(SearchOutcome {
                initial_cost: solution.cost(),
                solution,
                trajectory,
                iterations: 0,
                recreate_calls: 0,
                fallbacks: 0,
                cache_hits: 0,
                cache_misses: 0,
            })
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchInstance {
    pub dataset: String,
    #[serde(skip)]
    pub instance: Option<Instance>,
    pub name: String,
    pub source: Option<PathBuf>,
}

impl BenchInstance {
    pub fn new(dataset: impl Into<String>, instance: Instance, source: Option<PathBuf>) -> Self {
        Self {
            dataset: dataset.into(),
            name: instance.name().to_string(),
            instance: Some(instance),
            source,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchPlan {
    pub instances: Vec<BenchInstance>,
    pub methods: Vec<MethodSpec>,
    /// Seconds per instance size; sizes between keys use the next larger key.
    pub budgets: BTreeMap<usize, f64>,
    /// Replaces the per-size budget for every row when set.
    pub budget_override: Option<Budget>,
    pub seeds: Vec<u64>,
    pub threads: usize,
}

impl BenchPlan {
    pub fn default_budgets() -> BTreeMap<usize, f64> {
        [(500, 60.0), (1000, 120.0), (2000, 240.0), (4000, 480.0)].into_iter().collect()
    }

    pub fn new(instances: Vec<BenchInstance>, methods: Vec<MethodSpec>) -> Self {
        Self {
            instances,
            methods,
            budgets: Self::default_budgets(),
            budget_override: None,
            seeds: vec![0, 1, 2],
            threads: 1,
        }
    }

    pub fn budget_for(&self, n: usize) -> Budget {
        if let Some(b) = self.budget_override {
            return b;
        }
        let secs = self
            .budgets
            .range(n..)
            .next()
            .or_else(|| self.budgets.iter().next_back())
            .map(|(_, &s)| s)
            .unwrap_or(60.0);
        Budget::Seconds(secs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("bench plan needs at least one method".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("bench plan needs at least one seed".into()));
        }
        if self.budgets.values().any(|&s| s.is_nan() || s <= 0.0) {
            return Err(Error::Config("budgets must be positive".into()));
        }
        if self.instances.iter().any(|i| i.instance.is_none()) {
            return Err(Error::Config("bench instance not loaded".into()));
        }
        for m in &self.methods {
            m.config.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: String,
    pub dataset: String,
    pub instance: String,
    pub seed: u64,
    pub savings_cost: f64,
    pub horizon: f64,
    /// `None` marks a failed row.
    pub final_cost: Option<f64>,
    pub ausc: Option<f64>,
    pub wall_s: f64,
    pub error: Option<String>,
    #[serde(skip)]
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub dataset: String,
    pub runs: usize,
    pub failed: usize,
    /// Mean over seeds of the per-seed mean cost over instances.
    pub mean_cost: f64,
    /// Population standard deviation of the per-seed mean costs.
    pub std_cost: f64,
    pub mean_ausc: f64,
    pub std_ausc: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub aggregates: Vec<Aggregate>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// Per (method, dataset) aggregates over the successful rows.
pub fn aggregate(rows: &[BenchRow]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(String, String), Vec<&BenchRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.method.clone(), r.dataset.clone())).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((method, dataset), rs)| {
            let mut by_seed: BTreeMap<u64, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
            for r in rs.iter().filter(|r| r.final_cost.is_some()) {
                let e = by_seed.entry(r.seed).or_default();
                e.0.push(r.final_cost.unwrap_or(f64::NAN));
                e.1.push(r.ausc.unwrap_or(f64::NAN));
            }
            let costs: Vec<f64> = by_seed.values().map(|v| mean_std(&v.0).0).collect();
            let auscs: Vec<f64> = by_seed.values().map(|v| mean_std(&v.1).0).collect();
            let (mean_cost, std_cost) = mean_std(&costs);
            let (mean_ausc, std_ausc) = mean_std(&auscs);
            Aggregate {
                method,
                dataset,
                runs: rs.len(),
                failed: rs.iter().filter(|r| r.final_cost.is_none()).count(),
                mean_cost,
                std_cost,
                mean_ausc,
                std_ausc,
            }
        })
        .collect()
}

struct Job<'a> {
    method: &'a MethodSpec,
    model: Option<&'a ScoringModel>,
    instance: &'a BenchInstance,
    savings_cost: f64,
    seed: u64,
}

fn run_row(plan: &BenchPlan, job: &Job) -> BenchRow {
    let inst = job.instance.instance.as_ref().expect("validated plan");
    let budget = plan.budget_for(inst.len());
    let start = Instant::now();
    let result = run_method(inst, job.method, job.model, budget, job.seed).and_then(|out| {
        match validate(inst, &out.solution).first() {
            Some(v) => Err(Error::Instance(format!("infeasible result: {v}"))),
            None => Ok(out),
        }
    });
    let wall_s = start.elapsed().as_secs_f64();
    let mut row = BenchRow {
        method: job.method.name.clone(),
        dataset: job.instance.dataset.clone(),
        instance: job.instance.name.clone(),
        seed: job.seed,
        savings_cost: job.savings_cost,
        horizon: budget.limit(),
        final_cost: None,
        ausc: None,
        wall_s,
        error: None,
        trajectory: Trajectory::new(),
    };
    match result.and_then(|out| {
        let a = ausc(&out.trajectory, job.savings_cost, budget.limit())?;
        Ok((out, a))
    }) {
        Ok((out, a)) => {
            row.final_cost = Some(out.solution.cost());
            row.ausc = Some(a);
            row.trajectory = out.trajectory;
        }
        Err(e) => {
            warn!("{} on {} seed {} failed: {e}", row.method, row.instance, row.seed);
            row.error = Some(e.to_string());
        }
    }
    row
}

/// Executes every (method, instance, seed) row. Failed rows are kept and
/// marked; they never abort the run. Rows come back in plan order
/// regardless of the thread count.
pub fn run_bench(plan: &BenchPlan) -> Result<BenchReport> {
    plan.validate()?;
    let mut models: Vec<Option<ScoringModel>> = Vec::with_capacity(plan.methods.len());
    for m in &plan.methods {
        models.push(match (&m.kind, &m.weights) {
            (MethodKind::Nrr, Some(path)) => {
                Some(crate::io::weights::load_weights(&fs::read_to_string(path)?)?)
            }
            _ => None,
        });
    }
    let savings: Vec<f64> = plan
        .instances
        .iter()
        .map(|i| savings_init(i.instance.as_ref().expect("validated plan")).cost())
        .collect();
    let mut jobs = Vec::new();
    for (mi, method) in plan.methods.iter().enumerate() {
        for (ii, instance) in plan.instances.iter().enumerate() {
            for &seed in &plan.seeds {
                jobs.push(Job {
                    method,
                    model: models[mi].as_ref(),
                    instance,
                    savings_cost: savings[ii],
                    seed,
                });
            }
        }
    }
    let slots: Mutex<Vec<Option<BenchRow>>> = Mutex::new(vec![None; jobs.len()]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..plan.threads.clamp(1, jobs.len().max(1)) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(k) else { break };
                let row = run_row(plan, job);
                info!(
                    "{} {} seed {}: {:?} in {:.2}s",
                    row.method, row.instance, row.seed, row.final_cost, row.wall_s
                );
                slots.lock().unwrap_or_else(|e| e.into_inner())[k] = Some(row);
            });
        }
    });
    let rows: Vec<BenchRow> = slots
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect();
    Ok(BenchReport {
        aggregates: aggregate(&rows),
        rows,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "failed".to_string(), |x| x.to_string())
}

pub fn report_csv(report: &BenchReport) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.method,
            r.instance,
            r.seed,
            opt(r.final_cost),
            opt(r.ausc),
            r.wall_s
        );
    }
    out
}

pub fn aggregates_csv(report: &BenchReport) -> String {
    let mut out = String::from("method,dataset,runs,failed,mean_cost,std_cost,mean_ausc,std_ausc\n");
    for a in &report.aggregates {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            a.method, a.dataset, a.runs, a.failed, a.mean_cost, a.std_cost, a.mean_ausc, a.std_ausc
        );
    }
    out
}

/// Mean and standard deviation of `best_cost / savings_cost` on a grid of
/// normalised time, one curve per (method, dataset).
pub fn curves_csv(report: &BenchReport) -> BTreeMap<(String, String), String> {
    let mut groups: BTreeMap<(String, String), Vec<&BenchRow>> = BTreeMap::new();
    for r in report.rows.iter().filter(|r| r.final_cost.is_some()) {
        groups.entry((r.method.clone(), r.dataset.clone())).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(key, rows)| {
            let mut out = String::from("t_frac,mean,std\n");
            for k in 0..CURVE_POINTS {
                let f = k as f64 / (CURVE_POINTS - 1) as f64;
                let vals: Vec<f64> = rows
                    .iter()
                    .map(|r| {
                        value_at(&r.trajectory, f * r.horizon)
                            .map_or(AUSC_BASELINE, |c| (c / r.savings_cost).min(AUSC_BASELINE))
                    })
                    .collect();
                let (m, s) = mean_std(&vals);
                let _ = writeln!(out, "{f},{m},{s}");
            }
            (key, out)
        })
        .collect()
}

fn file_stem(parts: &[&str]) -> String {
    parts
        .iter()
        .map(|p| p.replace(|c: char| !(c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.'), "_"))
        .collect::<Vec<_>>()
        .join("__")
}

/// Writes `report.csv`, `aggregates.csv`, `rows.json`, one trajectory CSV
/// per successful row, one curve CSV per (method, dataset) and a manifest.
pub fn write_report(plan: &BenchPlan, report: &BenchReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("trajectories"))?;
    fs::create_dir_all(dir.join("curves"))?;
    fs::write(dir.join("report.csv"), report_csv(report))?;
    fs::write(dir.join("aggregates.csv"), aggregates_csv(report))?;
    fs::write(dir.join("rows.json"), to_json(&report.rows))?;
    fs::write(dir.join("manifest.json"), to_json(plan))?;
    for r in report.rows.iter().filter(|r| r.final_cost.is_some()) {
        let name = file_stem(&[&r.method, &r.instance, &format!("s{}", r.seed)]);
        fs::write(dir.join("trajectories").join(format!("{name}.csv")), write_trajectory(&r.trajectory))?;
    }
    for ((method, dataset), csv) in curves_csv(report) {
        fs::write(dir.join("curves").join(format!("{}.csv", file_stem(&[&method, &dataset]))), csv)?;
    }
    Ok(())
}

fn to_json<T: Serialize + ?Sized>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}
