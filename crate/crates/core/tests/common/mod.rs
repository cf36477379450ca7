#![allow(dead_code)]

use nrr_core::io::{generate_instance, GeneratorConfig};
use nrr_core::{Instance, Point, Rounding};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Exhaustive CVRP solver for tiny instances. Shares no code with the
/// library: own distance function, own subset TSP, own set partition.
pub struct Oracle {
    pts: Vec<(f64, f64)>,
    demand: Vec<f64>,
    cap: f64,
    round: bool,
}

pub const ORACLE_MAX_N: usize = 8;

impl Oracle {
    pub fn new(pts: Vec<(f64, f64)>, demand: Vec<f64>, cap: f64, round: bool) -> Self {
        assert!(pts.len() == demand.len() + 1 && demand.len() <= ORACLE_MAX_N);
        Self {
            pts,
            demand,
            cap,
            round,
        }
    }

    pub fn of(instance: &Instance) -> Self {
        let mut pts = vec![(instance.depot().x, instance.depot().y)];
        pts.extend(instance.customers().iter().map(|p| (p.x, p.y)));
        Self::new(
            pts,
            instance.demands().to_vec(),
            instance.capacity(),
            instance.rounding() == Rounding::NearestInteger,
        )
    }

    pub fn d(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (a, b) = (self.pts[i], self.pts[j]);
        let e = (a.0 - b.0).hypot(a.1 - b.1);
        if self.round {
            (e + 0.5).floor()
        } else {
            e
        }
    }

    /// Cost of `routes` summed depot-first, tour by tour.
    pub fn cost(&self, routes: &[Vec<usize>]) -> f64 {
        let mut total = 0.0;
        for r in routes {
            if r.is_empty() {
                continue;
            }
            let mut len = self.d(0, r[0]);
            for w in r.windows(2) {
                len += self.d(w[0], w[1]);
            }
            total += len + self.d(r[r.len() - 1], 0);
        }
        total
    }

    /// Optimal routes and their cost.
    pub fn solve(&self) -> (f64, Vec<Vec<usize>>) {
        let n = self.demand.len();
        if n == 0 {
            return (0.0, Vec::new());
        }
        let full = (1usize << n) - 1;
        // Held-Karp: best[mask][last] = shortest depot path covering mask ending at last.
        let mut best = vec![vec![f64::INFINITY; n]; 1 << n];
        let mut from = vec![vec![usize::MAX; n]; 1 << n];
        for v in 0..n {
            best[1 << v][v] = self.d(0, v + 1);
        }
        for mask in 1..=full {
            for last in 0..n {
                let cur = best[mask][last];
                if mask & (1 << last) == 0 || !cur.is_finite() {
                    continue;
                }
                for nxt in 0..n {
                    if mask & (1 << nxt) != 0 {
                        continue;
                    }
                    let m2 = mask | (1 << nxt);
                    let c = cur + self.d(last + 1, nxt + 1);
                    if c < best[m2][nxt] {
                        best[m2][nxt] = c;
                        from[m2][nxt] = last;
                    }
                }
            }
        }
        let mut tour = vec![f64::INFINITY; 1 << n];
        let mut tour_last = vec![usize::MAX; 1 << n];
        for mask in 1..=full {
            let load: f64 = (0..n).filter(|v| mask & (1 << v) != 0).map(|v| self.demand[v]).sum();
            if load > self.cap {
                continue;
            }
            for (last, &path) in best[mask].iter().enumerate() {
                let c = path + self.d(last + 1, 0);
                if c < tour[mask] {
                    tour[mask] = c;
                    tour_last[mask] = last;
                }
            }
        }
        // Set partition over feasible single-tour subsets.
        let mut part = vec![f64::INFINITY; 1 << n];
        let mut choice = vec![0usize; 1 << n];
        part[0] = 0.0;
        for mask in 1..=full {
            let low = mask & mask.wrapping_neg();
            let mut sub = mask;
            while sub > 0 {
                if sub & low != 0 && tour[sub].is_finite() {
                    let c = tour[sub] + part[mask ^ sub];
                    if c < part[mask] {
                        part[mask] = c;
                        choice[mask] = sub;
                    }
                }
                sub = (sub - 1) & mask;
            }
        }
        let mut routes = Vec::new();
        let mut mask = full;
        while mask != 0 {
            let sub = choice[mask];
            let mut path = Vec::new();
            let (mut m, mut last) = (sub, tour_last[sub]);
            while last != usize::MAX {
                path.push(last + 1);
                let prev = from[m][last];
                m &= !(1 << last);
                last = prev;
            }
            path.reverse();
            routes.push(path);
            mask ^= sub;
        }
        (part[full], routes)
    }
}

/// Random instance with `n` customers; integer coordinates with TSPLIB
/// rounding when `round`, unit-square floats otherwise.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, round: bool) -> Instance {
    let pt = |rng: &mut ChaCha8Rng| {
        if round {
            Point::new(rng.random_range(0..=100) as f64, rng.random_range(0..=100) as f64)
        } else {
            Point::new(rng.random::<f64>(), rng.random::<f64>())
        }
    };
    let depot = pt(rng);
    let customers: Vec<Point> = (0..n).map(|_| pt(rng)).collect();
    let demands: Vec<f64> = (0..n).map(|_| rng.random_range(1..=9) as f64).collect();
    let max_q = demands.iter().cloned().fold(1.0, f64::max);
    let total: f64 = demands.iter().sum();
    let cap = rng.random_range(max_q..=total.max(max_q) + 1.0).round().max(max_q);
    let rounding = if round { Rounding::NearestInteger } else { Rounding::None };
    Instance::new("rand", depot, customers, demands, cap, rounding).unwrap()
}

pub fn mixed(n: usize, seed: u64) -> Instance {
    generate_instance(&GeneratorConfig::new(n, seed)).unwrap()
}
