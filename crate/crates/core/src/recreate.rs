//! Recreate operators: rebuild a ruined sub-graph as an independent CVRP.
//!
//! Operators return solutions over the sub-instance's local indices. A
//! result worse than the prior cost is still returned; acceptance is the
//! search's decision.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::construct::{insert_into, savings_init, DistMatrix};
use crate::error::{Error, OperatorFailure, Result};
use crate::model::{validate, Instance, Solution};
use crate::sg::RuinedSubGraph;

pub trait Recreate {
    fn name(&self) -> &str;
    /// True if the output depends only on the input (not on rng or timing).
    fn deterministic(&self) -> bool;
    fn recreate(
        &self,
        rsg: &RuinedSubGraph,
        rng: &mut ChaCha8Rng,
        deadline: Option<Instant>,
    ) -> Result<Solution>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SavingsRecreate;

impl Recreate for SavingsRecreate {
    fn name(&self) -> &str {
        "savings"
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn recreate(&self, rsg: &RuinedSubGraph, _: &mut ChaCha8Rng, _: Option<Instant>) -> Result<Solution> {
        Ok(savings_init(&rsg.instance))
    }
}

pub fn recreate_savings(rsg: &RuinedSubGraph) -> Solution {
    savings_init(&rsg.instance)
}

/// Best insertion from scratch under shuffled orders; keeps the cheapest.
#[derive(Debug, Clone, Copy)]
pub struct InsertionRecreate {
    pub restarts: usize,
}

impl Default for InsertionRecreate {
    fn default() -> Self {
        Self { restarts: 16 }
    }
}

impl Recreate for InsertionRecreate {
    fn name(&self) -> &str {
        "insertion"
    }

    fn deterministic(&self) -> bool {
        false
    }

    fn recreate(
        &self,
        rsg: &RuinedSubGraph,
        rng: &mut ChaCha8Rng,
        deadline: Option<Instant>,
    ) -> Result<Solution> {
        if self.restarts == 0 {
            return Err(Error::Config("insertion restarts must be at least 1".into()));
        }
        Ok(recreate_insertion(&rsg.instance, rng, self.restarts, deadline))
    }
}

/// At least one restart always completes; later ones stop at the deadline.
pub fn recreate_insertion(
    instance: &Instance,
    rng: &mut ChaCha8Rng,
    restarts: usize,
    deadline: Option<Instant>,
) -> Solution {
    let dm = DistMatrix::new(instance);
    let mut order: Vec<usize> = (1..=instance.len()).collect();
    let mut best: Option<(f64, Vec<Vec<usize>>)> = None;
    for r in 0..restarts.max(1) {
        if r > 0 && deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
        order.shuffle(rng);
        let mut routes = Vec::new();
        let mut loads = Vec::new();
        let cost: f64 = insert_into(instance, |i, j| dm.get(i, j), &mut routes, &mut loads, &order)
            .iter()
            .sum();
        if best.as_ref().is_none_or(|b| cost < b.0) {
            best = Some((cost, routes));
        }
    }
    Solution::from_routes(instance, best.expect("at least one restart").1)
}

/// One request line of the external-solver protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalRequest {
    pub nodes: Vec<[f64; 3]>,
    pub depot: [f64; 2],
    pub capacity: f64,
    pub samples: u32,
}

/// One response line: tours of 0-based sub-instance node indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalResponse {
    pub tours: Vec<Vec<usize>>,
}

impl ExternalRequest {
    pub fn from_instance(instance: &Instance, samples: u32) -> Self {
        let d = instance.depot();
        Self {
            nodes: (1..=instance.len())
                .map(|v| {
                    let p = instance.coord(v);
                    [p.x, p.y, instance.demand(v)]
                })
                .collect(),
            depot: [d.x, d.y],
            capacity: instance.capacity(),
            samples,
        }
    }

    /// Rebuilds the sub-instance a worker should solve.
    pub fn to_instance(&self) -> Result<Instance> {
        use crate::model::{Point, Rounding};
        Instance::new(
            "request",
            Point::new(self.depot[0], self.depot[1]),
            self.nodes.iter().map(|n| Point::new(n[0], n[1])).collect(),
            self.nodes.iter().map(|n| n[2]).collect(),
            self.capacity,
            Rounding::None,
        )
    }
}

impl ExternalResponse {
    pub fn from_solution(solution: &Solution) -> Self {
        Self {
            tours: solution
                .tours()
                .iter()
                .map(|t| t.nodes.iter().map(|v| v - 1).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalConfig {
    pub program: String,
    pub args: Vec<String>,
    pub samples: u32,
    /// Used when the caller passes no deadline.
    pub timeout: Duration,
}

impl ExternalConfig {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        Self {
            program: program.into(),
            args,
            samples: 1024,
            timeout: Duration::from_secs(30),
        }
    }
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Worker {
    fn spawn(cfg: &ExternalConfig) -> std::io::Result<Self> {
        let mut child = Command::new(&cfg.program)
            .args(&cfg.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self { child, stdin, lines })
    }

    fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Persistent child process speaking newline-delimited JSON. The worker is
/// killed on timeout or protocol error and respawned on the next call.
pub struct ExternalRecreate {
    cfg: ExternalConfig,
    worker: Mutex<Option<Worker>>,
}

impl ExternalRecreate {
    pub fn new(cfg: ExternalConfig) -> Self {
        Self {
            cfg,
            worker: Mutex::new(None),
        }
    }

    fn fail(&self, kind: OperatorFailure) -> Error {
        Error::Operator {
            operator: "external".into(),
            kind,
        }
    }

    fn exchange(&self, worker: &mut Worker, request: &str, timeout: Duration) -> Result<String> {
        let io = |e: std::io::Error| self.fail(OperatorFailure::Unavailable(e.to_string()));
        worker.stdin.write_all(request.as_bytes()).map_err(io)?;
        worker.stdin.write_all(b"\n").map_err(io)?;
        worker.stdin.flush().map_err(io)?;
        match worker.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(io(e)),
            Err(RecvTimeoutError::Timeout) => Err(self.fail(OperatorFailure::Timeout(timeout))),
            Err(RecvTimeoutError::Disconnected) => Err(self.fail(OperatorFailure::Unavailable(
                "worker closed its output".into(),
            ))),
        }
    }

    fn decode(&self, instance: &Instance, line: &str) -> Result<Solution> {
        let resp: ExternalResponse = serde_json::from_str(line)
            .map_err(|e| self.fail(OperatorFailure::Malformed(e.to_string())))?;
        let n = instance.len();
        let mut routes = Vec::with_capacity(resp.tours.len());
        for tour in resp.tours {
            if tour.is_empty() {
                continue;
            }
            if let Some(&bad) = tour.iter().find(|&&v| v >= n) {
                return Err(self.fail(OperatorFailure::Infeasible(format!(
                    "node index {bad} outside 0..{n}"
                ))));
            }
            routes.push(tour.into_iter().map(|v| v + 1).collect());
        }
        let sol = Solution::from_routes(instance, routes);
        if let Some(v) = validate(instance, &sol).first() {
            return Err(self.fail(OperatorFailure::Infeasible(v.to_string())));
        }
        Ok(sol)
    }
}

impl Drop for ExternalRecreate {
    fn drop(&mut self) {
        if let Some(w) = self.worker.get_mut().ok().and_then(Option::take) {
            drop(w.stdin);
            let mut child = w.child;
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl Recreate for ExternalRecreate {
    fn name(&self) -> &str {
        "external"
    }

    fn deterministic(&self) -> bool {
        false
    }

    fn recreate(
        &self,
        rsg: &RuinedSubGraph,
        _: &mut ChaCha8Rng,
        deadline: Option<Instant>,
    ) -> Result<Solution> {
        let timeout = deadline
            .map(|d| d.saturating_duration_since(Instant::now()))
            .unwrap_or(self.cfg.timeout);
        let request = serde_json::to_string(&ExternalRequest::from_instance(
            &rsg.instance,
            self.cfg.samples,
        ))
        .expect("request serializes");
        let mut slot = self.worker.lock().unwrap_or_else(|e| e.into_inner());
        if slot.is_none() {
            let w = Worker::spawn(&self.cfg).map_err(|e| {
                self.fail(OperatorFailure::Unavailable(format!("{}: {e}", self.cfg.program)))
            })?;
            *slot = Some(w);
        }
        let worker = slot.as_mut().expect("worker present");
        let result = self
            .exchange(worker, &request, timeout)
            .and_then(|line| self.decode(&rsg.instance, &line));
        if let Err(Error::Operator { kind, .. }) = &result {
            if !matches!(kind, OperatorFailure::Infeasible(_)) {
                slot.take().expect("worker present").kill();
            }
        }
        result
    }
}
