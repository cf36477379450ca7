//! Initial solutions (parallel savings, sweep) and best insertion.

use std::f64::consts::TAU;

use crate::model::{Instance, Solution, DEPOT};

/// Parallel Clarke-Wright savings. Returns the solution and the cost delta
/// of every executed merge, in execution order.
pub fn savings_with_trace(instance: &Instance) -> (Solution, Vec<f64>) {
    let n = instance.len();
    let mut savings: Vec<(f64, u32, u32)> = Vec::new();
    for i in 1..=n {
        let di = instance.dist(DEPOT, i);
        for j in i + 1..=n {
            let s = di + instance.dist(DEPOT, j) - instance.dist(i, j);
            if s > 0.0 {
                savings.push((s, i as u32, j as u32));
            }
        }
    }
    savings.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    // Route r is live while routes[r] is nonempty; tour_of maps node -> route.
    let mut routes: Vec<Vec<usize>> = (0..=n).map(|v| if v == 0 { vec![] } else { vec![v] }).collect();
    let mut loads: Vec<f64> = (0..=n).map(|v| if v == 0 { 0.0 } else { instance.demand(v) }).collect();
    let mut tour_of: Vec<usize> = (0..=n).collect();
    let cap = instance.capacity();
    let mut trace = Vec::new();

    for (s, i, j) in savings {
        let (i, j) = (i as usize, j as usize);
        let (ri, rj) = (tour_of[i], tour_of[j]);
        if ri == rj || loads[ri] + loads[rj] > cap {
            continue;
        }
        let end = |r: &Vec<usize>, v: usize| r.first() == Some(&v) || r.last() == Some(&v);
        if !end(&routes[ri], i) || !end(&routes[rj], j) {
            continue;
        }
        let mut a = std::mem::take(&mut routes[ri]);
        let mut b = std::mem::take(&mut routes[rj]);
        if a.last() != Some(&i) {
            a.reverse();
        }
        if b.first() != Some(&j) {
            b.reverse();
        }
        for &v in &b {
            tour_of[v] = ri;
        }
        a.extend(b);
        routes[ri] = a;
        loads[ri] += loads[rj];
        loads[rj] = 0.0;
        trace.push(-s);
    }
    let routes = routes.into_iter().filter(|r| !r.is_empty()).collect();
    (Solution::from_routes(instance, routes), trace)
}

pub fn savings_init(instance: &Instance) -> Solution {
    savings_with_trace(instance).0
}

/// Customers in beam order: polar angle measured from customer 1's angle,
/// ties by radius then index.
pub fn sweep_order(instance: &Instance) -> Vec<usize> {
    let d = instance.depot();
    let angle = |v: usize| {
        let p = instance.coord(v);
        (p.y - d.y).atan2(p.x - d.x)
    };
    let a0 = angle(1);
    let mut keyed: Vec<(f64, f64, usize)> = (1..=instance.len())
        .map(|v| ((angle(v) - a0).rem_euclid(TAU), instance.dist(DEPOT, v), v))
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    keyed.into_iter().map(|k| k.2).collect()
}

pub fn sweep_init(instance: &Instance) -> Solution {
    let cap = instance.capacity();
    let mut routes: Vec<Vec<usize>> = Vec::new();
    let mut cur = Vec::new();
    let mut load = 0.0;
    for v in sweep_order(instance) {
        let q = instance.demand(v);
        if !cur.is_empty() && load + q > cap {
            routes.push(std::mem::take(&mut cur));
            load = 0.0;
        }
        cur.push(v);
        load += q;
    }
    if !cur.is_empty() {
        routes.push(cur);
    }
    Solution::from_routes(instance, routes)
}

/// Row-major table of all pairwise distances, depot included.
#[derive(Debug, Clone)]
pub struct DistMatrix {
    width: usize,
    d: Vec<f64>,
}

impl DistMatrix {
    pub fn new(instance: &Instance) -> Self {
        let width = instance.len() + 1;
        let mut d = vec![0.0; width * width];
        for i in 0..width {
            for j in i + 1..width {
                let v = instance.dist(i, j);
                d[i * width + j] = v;
                d[j * width + i] = v;
            }
        }
        Self { width, d }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.width + j]
    }
}

/// Cheapest-insertion core shared by [`insert_nodes`] and the insertion
/// recreate. Returns the cost delta of each insertion.
pub(crate) fn insert_into(
    instance: &Instance,
    dist: impl Fn(usize, usize) -> f64,
    routes: &mut Vec<Vec<usize>>,
    loads: &mut Vec<f64>,
    order: &[usize],
) -> Vec<f64> {
    let cap = instance.capacity();
    let mut deltas = Vec::with_capacity(order.len());
    for &v in order {
        let q = instance.demand(v);
        let mut best: Option<(f64, usize, usize)> = None;
        for (r, route) in routes.iter().enumerate() {
            if loads[r] + q > cap {
                continue;
            }
            let mut prev = DEPOT;
            for pos in 0..=route.len() {
                let next = route.get(pos).copied().unwrap_or(DEPOT);
                let d = dist(prev, v) + dist(v, next) - dist(prev, next);
                if best.is_none_or(|b| d < b.0) {
                    best = Some((d, r, pos));
                }
                prev = next;
            }
        }
        let solo = 2.0 * dist(DEPOT, v);
        match best {
            Some((d, r, pos)) if d <= solo => {
                routes[r].insert(pos, v);
                loads[r] += q;
                deltas.push(d);
            }
            _ => {
                routes.push(vec![v]);
                loads.push(q);
                deltas.push(solo);
            }
        }
    }
    deltas
}

/// Inserts `order` one node at a time at its cheapest feasible position,
/// returning the result and the cost delta of each insertion.
pub fn insert_nodes(instance: &Instance, partial: &Solution, order: &[usize]) -> (Solution, Vec<f64>) {
    let mut routes = partial.routes();
    let mut loads: Vec<f64> = partial.tours().iter().map(|t| t.load).collect();
    let deltas = insert_into(instance, |i, j| instance.dist(i, j), &mut routes, &mut loads, order);
    (Solution::from_routes(instance, routes), deltas)
}

/// Best insertion of `unserved`, farthest from the depot first.
pub fn best_insertion(instance: &Instance, partial: &Solution, unserved: &[usize]) -> Solution {
    let mut order = unserved.to_vec();
    order.sort_by(|&a, &b| {
        instance
            .dist(DEPOT, b)
            .total_cmp(&instance.dist(DEPOT, a))
            .then(a.cmp(&b))
    });
    insert_nodes(instance, partial, &order).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, Point, Rounding};

    fn inst(pts: &[(f64, f64)], q: f64, cap: f64) -> Instance {
        Instance::new(
            "c",
            Point::new(0.0, 0.0),
            pts.iter().map(|&(x, y)| Point::new(x, y)).collect(),
            vec![q; pts.len()],
            cap,
            Rounding::None,
        )
        .unwrap()
    }

    #[test]
    fn savings_examples() {
        let i = inst(&[(0.0, 1.0), (1.0, 0.0)], 1.0, 2.0);
        let (s, trace) = savings_with_trace(&i);
        assert_eq!(s.num_tours(), 1);
        assert!((s.cost() - (2.0 + 2f64.sqrt())).abs() < 1e-12);
        assert_eq!(trace.len(), 1);

        let i = inst(&[(0.0, 1.0), (1.0, 0.0)], 1.0, 1.0);
        let s = savings_init(&i);
        assert_eq!(s.num_tours(), 2);
        assert_eq!(s.cost(), 4.0);

        let i = inst(&[(3.0, 4.0)], 1.0, 1.0);
        assert_eq!(savings_init(&i).routes(), vec![vec![1]]);
    }

    #[test]
    fn savings_merges_reduce_cost() {
        let pts: Vec<(f64, f64)> = (0..30)
            .map(|k| ((k as f64 * 0.7).sin() * 10.0, (k as f64 * 1.3).cos() * 10.0))
            .collect();
        let i = inst(&pts, 3.0, 10.0);
        let (s, trace) = savings_with_trace(&i);
        assert!(trace.iter().all(|&d| d < 0.0));
        let singles: f64 = (1..=30).map(|v| 2.0 * i.dist(0, v)).sum();
        assert!((singles + trace.iter().sum::<f64>() - s.cost()).abs() < 1e-9);
        assert!(validate(&i, &s).is_empty());
    }

    #[test]
    fn sweep_examples() {
        let ring = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)];
        let i = inst(&ring, 1.0, 4.0);
        assert_eq!(sweep_init(&i).routes(), vec![vec![1, 2, 3, 4]]);
        let i = inst(&ring, 1.0, 1.0);
        assert_eq!(sweep_init(&i).routes(), vec![vec![1], vec![2], vec![3], vec![4]]);
        let i = inst(&[(0.0, -1.0), (2.0, 2.0), (1.0, 1.0)], 1.0, 5.0);
        // customer 1 defines angle 0; 3 and 2 share an angle, nearer first
        assert_eq!(sweep_init(&i).routes(), vec![vec![1, 3, 2]]);
    }

    #[test]
    fn insertion_examples() {
        let i = inst(&[(1.0, 0.0), (2.0, 0.0), (1.5, 0.0)], 1.0, 10.0);
        let partial = Solution::from_routes(&i, vec![vec![1, 2]]);
        let (s, d) = insert_nodes(&i, &partial, &[3]);
        assert_eq!(s.routes(), vec![vec![1, 3, 2]]);
        assert_eq!(d, vec![0.0]);
        assert_eq!(best_insertion(&i, &partial, &[]), partial);

        let full = inst(&[(1.0, 0.0), (2.0, 0.0), (1.5, 0.0)], 1.0, 2.0);
        let partial = Solution::from_routes(&full, vec![vec![1, 2]]);
        assert_eq!(best_insertion(&full, &partial, &[3]).routes(), vec![vec![1, 2], vec![3]]);
    }

    #[test]
    fn insertion_deltas_sum_to_cost_change() {
        let pts: Vec<(f64, f64)> = (0..25).map(|k| ((k * 7 % 11) as f64, (k * 5 % 13) as f64)).collect();
        let i = inst(&pts, 2.0, 9.0);
        let (s, d) = insert_nodes(&i, &Solution::empty(), &(1..=25).collect::<Vec<_>>());
        assert!((s.cost() - d.iter().sum::<f64>()).abs() < 1e-9);
        assert!(validate(&i, &s).is_empty());
    }
}
