//! Anytime trajectories and their CSV form.
//!
//! Improvements are stored as two points sharing a timestamp (old value,
//! new value), which makes the piecewise-linear interpolation of the points
//! coincide with the best-so-far step function.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRAJECTORY_HEADER: &str = "t,best_cost";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub best_cost: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        Self {
            points: pairs
                .iter()
                .map(|&(t, best_cost)| TrajectoryPoint { t, best_cost })
                .collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn last_cost(&self) -> Option<f64> {
        self.points.last().map(|p| p.best_cost)
    }

    /// Records the first known cost.
    pub fn start(&mut self, t: f64, cost: f64) {
        self.points.push(TrajectoryPoint { t, best_cost: cost });
    }

    /// Records a new best as a vertical step at `t`.
    pub fn improve(&mut self, t: f64, cost: f64) {
        match self.points.last().copied() {
            None => self.start(t, cost),
            Some(prev) => {
                self.points.push(TrajectoryPoint {
                    t,
                    best_cost: prev.best_cost,
                });
                self.points.push(TrajectoryPoint { t, best_cost: cost });
            }
        }
    }

    /// Checks the ordering invariants: nondecreasing time, nonincreasing cost.
    pub fn check(&self) -> Result<()> {
        for w in self.points.windows(2) {
            if w[1].t < w[0].t {
                return Err(Error::Format(format!("time decreases at t={}", w[1].t)));
            }
            if w[1].best_cost > w[0].best_cost {
                return Err(Error::Format(format!("best cost increases at t={}", w[1].t)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub method: String,
    pub seed: u64,
    pub instance: String,
    pub budget: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub meta: TrajectoryMeta,
    pub trajectory: Trajectory,
}

pub fn write_trajectory(trajectory: &Trajectory) -> String {
    let mut out = String::with_capacity(16 * (trajectory.len() + 1));
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for p in &trajectory.points {
        let _ = writeln!(out, "{},{}", p.t, p.best_cost);
    }
    out
}

pub fn read_trajectory(text: &str) -> Result<Trajectory> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == TRAJECTORY_HEADER => {}
        Some((i, h)) => {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected header `{TRAJECTORY_HEADER}`, found `{h}`"),
            })
        }
        None => {
            return Err(Error::Parse {
                line: 0,
                msg: "empty trajectory file".into(),
            })
        }
    }
    let mut traj = Trajectory::new();
    for (i, line) in lines {
        let bad = |msg: &str| Error::Parse {
            line: i + 1,
            msg: msg.to_string(),
        };
        let (t, c) = line.trim().split_once(',').ok_or_else(|| bad("expected `t,best_cost`"))?;
        let t: f64 = t.parse().map_err(|_| bad("bad timestamp"))?;
        let c: f64 = c.parse().map_err(|_| bad("bad cost"))?;
        traj.points.push(TrajectoryPoint { t, best_cost: c });
    }
    traj.check()?;
    Ok(traj)
}
