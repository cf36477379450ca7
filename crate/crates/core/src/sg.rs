//! Sub-graphs built from whole tours: construction, ruin and re-insertion.
//!
//! A sub-graph (SG) bundles complete tours of the current solution. Tours are
//! located by their geometric center, the mean of their customer
//! coordinates. Three construction heuristics produce candidate sets:
//!
//! * `knn`: each tour plus its `k` nearest tours by center distance,
//! * `add_nn`: each tour plus nearest tours until the size is close to a target,
//! * `sweep`: tours taken in polar order of their centers around the depot,
//!   cut into consecutive groups close to a target size.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashSet;
use std::f64::consts::TAU;
use std::hash::{Hash, Hasher};

use crate::error::{Error, Result};
use crate::model::{Instance, Point, Solution, Tour};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SgKey(pub u64);

impl SgKey {
    /// Hash of the sorted node set.
    pub fn of_nodes(sorted_nodes: &[usize]) -> Self {
        let mut h = DefaultHasher::new();
        sorted_nodes.hash(&mut h);
        SgKey(h.finish())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TourCenter {
    pub tour: usize,
    pub center: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubGraph {
    /// Indices into the solution's tour list, ascending.
    pub tours: Vec<usize>,
    /// Customer ids of all member tours, ascending.
    pub nodes: Vec<usize>,
    /// Unweighted mean of the member tour centers.
    pub center: Point,
    pub key: SgKey,
}

impl SubGraph {
    pub fn from_tours(instance: &Instance, solution: &Solution, tours: &[usize]) -> Self {
        let mut tours = tours.to_vec();
        tours.sort_unstable();
        tours.dedup();
        let mut nodes: Vec<usize> = tours
            .iter()
            .flat_map(|&t| solution.tours()[t].nodes.iter().copied())
            .collect();
        nodes.sort_unstable();
        let (sx, sy) = tours.iter().fold((0.0, 0.0), |(sx, sy), &t| {
            let c = center_of(instance, &solution.tours()[t]);
            (sx + c.x, sy + c.y)
        });
        let k = tours.len().max(1) as f64;
        Self {
            key: SgKey::of_nodes(&nodes),
            center: Point::new(sx / k, sy / k),
            tours,
            nodes,
        }
    }

    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    pub fn shares_tour_with(&self, other: &SubGraph) -> bool {
        self.tours.iter().any(|t| other.tours.binary_search(t).is_ok())
    }
}

fn center_of(instance: &Instance, tour: &Tour) -> Point {
    let n = tour.nodes.len().max(1) as f64;
    let (sx, sy) = tour.nodes.iter().fold((0.0, 0.0), |(sx, sy), &v| {
        let p = instance.coord(v);
        (sx + p.x, sy + p.y)
    });
    Point::new(sx / n, sy / n)
}

pub fn tour_centers(instance: &Instance, solution: &Solution) -> Vec<TourCenter> {
    solution
        .tours()
        .iter()
        .enumerate()
        .map(|(tour, t)| TourCenter {
            tour,
            center: center_of(instance, t),
        })
        .collect()
}

fn dedup(groups: impl IntoIterator<Item = SubGraph>) -> Vec<SubGraph> {
    let mut seen = HashSet::new();
    groups.into_iter().filter(|g| seen.insert(g.key)).collect()
}

/// Tour indices of all other tours sorted by center distance to `reference`
/// (ties by tour index).
fn nearest_tours(centers: &[TourCenter], reference: usize) -> Vec<usize> {
    let c = centers[reference].center;
    let mut others: Vec<(f64, usize)> = centers
        .iter()
        .filter(|tc| tc.tour != reference)
        .map(|tc| (tc.center.dist(&c), tc.tour))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    others.into_iter().map(|(_, t)| t).collect()
}

/// Each tour with its `k` nearest tours by center distance.
pub fn construct_knn(instance: &Instance, solution: &Solution, k: usize) -> Vec<SubGraph> {
    let centers = tour_centers(instance, solution);
    dedup((0..centers.len()).map(|r| {
        let mut members = vec![r];
        members.extend(nearest_tours(&centers, r).into_iter().take(k));
        SubGraph::from_tours(instance, solution, &members)
    }))
}

/// Growth rule shared by `add_nn` and `sweep`: a group is closed once its
/// size is within `epsilon` of the target, or when the next tour would move
/// it further away from the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeTarget {
    pub n_target: usize,
    pub epsilon: f64,
}

impl SizeTarget {
    pub fn new(n_target: usize) -> Self {
        Self {
            n_target,
            epsilon: 0.1 * n_target as f64,
        }
    }

    pub fn with_epsilon(n_target: usize, epsilon: f64) -> Self {
        Self { n_target, epsilon }
    }

    fn gap(&self, size: usize) -> f64 {
        (self.n_target as f64 - size as f64).abs()
    }

    fn is_closed(&self, size: usize) -> bool {
        self.gap(size) < self.epsilon
    }

    fn rejects(&self, size: usize, next: usize) -> bool {
        self.gap(size + next) > self.gap(size)
    }
}

/// Each tour grown by nearest tours until its size is close to the target.
pub fn construct_add_nn(
    instance: &Instance,
    solution: &Solution,
    target: SizeTarget,
) -> Vec<SubGraph> {
    let centers = tour_centers(instance, solution);
    let sizes: Vec<usize> = solution.tours().iter().map(Tour::len).collect();
    dedup((0..centers.len()).map(|r| {
        let mut members = vec![r];
        let mut size = sizes[r];
        for t in nearest_tours(&centers, r) {
            if target.is_closed(size) || target.rejects(size, sizes[t]) {
                break;
            }
            members.push(t);
            size += sizes[t];
        }
        SubGraph::from_tours(instance, solution, &members)
    }))
}

/// Tour indices sorted by polar angle of their centers around the depot,
/// ties by distance to the depot then by index.
pub fn polar_order(instance: &Instance, solution: &Solution) -> Vec<usize> {
    let d = instance.depot();
    let mut keyed: Vec<(f64, f64, usize)> = tour_centers(instance, solution)
        .into_iter()
        .map(|tc| {
            let a = (tc.center.y - d.y).atan2(tc.center.x - d.x).rem_euclid(TAU);
            (a, tc.center.dist(&d), tc.tour)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    keyed.into_iter().map(|k| k.2).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepParams {
    pub target: SizeTarget,
    /// Number of beam passes; pass `r` starts `r * tours / restarts`
    /// positions after `start` in polar order.
    pub restarts: usize,
    /// Polar-order position of the first pass's starting tour.
    pub start: usize,
}

impl SweepParams {
    pub fn new(n_target: usize) -> Self {
        Self {
            target: SizeTarget::new(n_target),
            restarts: 1,
            start: 0,
        }
    }
}

/// One beam pass over `order` (already rotated). Returns groups of tour
/// indices that partition `order`.
fn sweep_pass(order: &[usize], sizes: &[usize], target: SizeTarget) -> Vec<(Vec<usize>, usize)> {
    let mut groups: Vec<(Vec<usize>, usize)> = Vec::new();
    let mut cur: Vec<usize> = Vec::new();
    let mut size = 0;
    for &t in order {
        if !cur.is_empty() && target.rejects(size, sizes[t]) {
            groups.push((std::mem::take(&mut cur), size));
            size = 0;
        }
        cur.push(t);
        size += sizes[t];
        if target.is_closed(size) {
            groups.push((std::mem::take(&mut cur), size));
            size = 0;
        }
    }
    if !cur.is_empty() {
        // A small tail joins the previous group instead of standing alone.
        match groups.last_mut() {
            Some(prev) if (size as f64) < target.n_target as f64 / 2.0 => {
                prev.0.extend(cur);
                prev.1 += size;
            }
            _ => groups.push((cur, size)),
        }
    }
    groups
}

/// Sweep construction. With `restarts == 1` the returned SGs partition the
/// tours; further passes add rotated variants, deduplicated by key.
pub fn construct_sweep(
    instance: &Instance,
    solution: &Solution,
    params: SweepParams,
) -> Vec<SubGraph> {
    let order = polar_order(instance, solution);
    let m = order.len();
    if m == 0 {
        return Vec::new();
    }
    let sizes: Vec<usize> = solution.tours().iter().map(Tour::len).collect();
    let restarts = params.restarts.max(1);
    let mut out = Vec::new();
    for r in 0..restarts {
        let offset = (params.start + r * m / restarts) % m;
        let rotated: Vec<usize> = order[offset..].iter().chain(&order[..offset]).copied().collect();
        for (members, _) in sweep_pass(&rotated, &sizes, params.target) {
            out.push(SubGraph::from_tours(instance, solution, &members));
        }
    }
    dedup(out)
}

/// A sub-graph cut out of the solution as an independent CVRP. Local node
/// `i` (1-based) corresponds to global node `global[i - 1]`.
#[derive(Debug, Clone)]
pub struct RuinedSubGraph {
    pub instance: Instance,
    pub global: Vec<usize>,
    pub tours: Vec<usize>,
    pub prior_cost: f64,
    pub key: SgKey,
}

impl RuinedSubGraph {
    pub fn size(&self) -> usize {
        self.global.len()
    }

    /// Rebuilds the removed tours in local indices.
    pub fn prior_solution(&self, solution: &Solution) -> Solution {
        let local: std::collections::HashMap<usize, usize> =
            self.global.iter().enumerate().map(|(i, &g)| (g, i + 1)).collect();
        let routes = self
            .tours
            .iter()
            .map(|&t| solution.tours()[t].nodes.iter().map(|g| local[g]).collect())
            .collect();
        Solution::from_routes(&self.instance, routes)
    }
}

fn check_current(solution: &Solution, g: &SubGraph) -> Result<()> {
    let mut nodes = Vec::with_capacity(g.nodes.len());
    for &t in &g.tours {
        let tour = solution
            .tours()
            .get(t)
            .ok_or_else(|| Error::Stale(format!("tour {t} does not exist")))?;
        nodes.extend_from_slice(&tour.nodes);
    }
    nodes.sort_unstable();
    if nodes != g.nodes {
        return Err(Error::Stale("member tours no longer hold the sub-graph's nodes".into()));
    }
    Ok(())
}

/// Drops every edge of `g`, returning its nodes as a standalone instance
/// that keeps the original depot coordinate. The solution is not modified.
pub fn ruin(instance: &Instance, solution: &Solution, g: &SubGraph) -> Result<RuinedSubGraph> {
    check_current(solution, g)?;
    if g.nodes.is_empty() {
        return Err(Error::Stale("empty sub-graph".into()));
    }
    let prior_cost = g
        .tours
        .iter()
        .map(|&t| instance.route_length(&solution.tours()[t].nodes))
        .sum();
    let sub = Instance::new(
        format!("{}/sg{:016x}", instance.name(), g.key.0),
        instance.depot(),
        g.nodes.iter().map(|&v| instance.coord(v)).collect(),
        g.nodes.iter().map(|&v| instance.demand(v)).collect(),
        instance.capacity(),
        instance.rounding(),
    )?;
    Ok(RuinedSubGraph {
        instance: sub,
        global: g.nodes.clone(),
        tours: g.tours.clone(),
        prior_cost,
        key: g.key,
    })
}

fn remap(rsg: &RuinedSubGraph, sg_solution: &Solution) -> Result<Vec<Vec<usize>>> {
    let n = rsg.size();
    let mut seen = vec![false; n + 1];
    let mut routes = Vec::with_capacity(sg_solution.num_tours());
    for tour in sg_solution.tours() {
        if tour.nodes.is_empty() {
            continue;
        }
        let mut route = Vec::with_capacity(tour.len());
        for &v in &tour.nodes {
            if v == 0 || v > n {
                return Err(Error::Coverage(format!("local node {v} outside 1..={n}")));
            }
            if std::mem::replace(&mut seen[v], true) {
                return Err(Error::Coverage(format!("local node {v} served twice")));
            }
            route.push(rsg.global[v - 1]);
        }
        routes.push(route);
    }
    if let Some(missing) = (1..=n).find(|&v| !seen[v]) {
        return Err(Error::Coverage(format!(
            "local node {missing} (global {}) not served",
            rsg.global[missing - 1]
        )));
    }
    Ok(routes)
}

/// Replaces the tours of `g` by the re-created sub-solution.
pub fn insert(
    instance: &Instance,
    solution: &Solution,
    rsg: &RuinedSubGraph,
    sg_solution: &Solution,
) -> Result<Solution> {
    insert_many(instance, solution, &[(rsg, sg_solution)])
}

/// Applies several updates for pairwise disjoint sub-graphs in one pass.
pub fn insert_many(
    instance: &Instance,
    solution: &Solution,
    updates: &[(&RuinedSubGraph, &Solution)],
) -> Result<Solution> {
    let mut removed = vec![false; solution.num_tours()];
    let mut new_routes = Vec::new();
    for (rsg, sg_solution) in updates {
        for &t in &rsg.tours {
            match removed.get_mut(t) {
                None => return Err(Error::Stale(format!("tour {t} does not exist"))),
                Some(true) => {
                    return Err(Error::Coverage(format!("tour {t} belongs to two updates")))
                }
                Some(flag) => *flag = true,
            }
            let mut expect: Vec<usize> = solution.tours()[t].nodes.clone();
            expect.retain(|v| rsg.global.binary_search(v).is_err());
            if !expect.is_empty() {
                return Err(Error::Stale(format!("tour {t} changed since the ruin")));
            }
        }
        new_routes.extend(remap(rsg, sg_solution)?);
    }
    let mut tours: Vec<Tour> = solution
        .tours()
        .iter()
        .zip(&removed)
        .filter(|(_, &r)| !r)
        .map(|(t, _)| t.clone())
        .collect();
    tours.extend(new_routes.into_iter().map(|r| Tour::new(instance, r)));
    let mut out = solution.clone();
    out.set_tours(instance, tours);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Rounding, DEPOT};

    fn line_instance(n: usize) -> Instance {
        let pts = (1..=n).map(|i| Point::new(i as f64, 0.0)).collect();
        Instance::new("line", Point::new(0.0, 0.0), pts, vec![1.0; n], 100.0, Rounding::None)
            .unwrap()
    }

    #[test]
    fn centers_are_means() {
        let inst = Instance::new(
            "c",
            Point::new(5.0, 5.0),
            vec![Point::new(0.0, 0.0), Point::new(2.0, 0.0), Point::new(1.0, 3.0), Point::new(0.3, 0.7)],
            vec![1.0; 4],
            10.0,
            Rounding::None,
        )
        .unwrap();
        let sol = Solution::from_routes(&inst, vec![vec![1, 2, 3], vec![4]]);
        let c = tour_centers(&inst, &sol);
        assert_eq!(c[0].center, Point::new(1.0, 1.0));
        assert_eq!(c[1].center, Point::new(0.3, 0.7));
        let rev = Solution::from_routes(&inst, vec![vec![3, 1, 2], vec![4]]);
        assert_eq!(tour_centers(&inst, &rev)[0].center, Point::new(1.0, 1.0));
    }

    #[test]
    fn knn_on_collinear_tours() {
        // centers at x = 1, 2, 4
        let inst = line_instance(4);
        let sol = Solution::from_routes(&inst, vec![vec![1], vec![2], vec![4, 3]]);
        let sgs = construct_knn(&inst, &sol, 1);
        let sets: Vec<Vec<usize>> = sgs.iter().map(|g| g.tours.clone()).collect();
        // tour 0 -> {0,1}; tour 1 -> {1,0} (dup); tour 2 (center 3.5) -> {2,1}
        assert_eq!(sets, vec![vec![0, 1], vec![1, 2]]);

        let singles = construct_knn(&inst, &sol, 0);
        assert_eq!(singles.len(), 3);
        assert!(singles.iter().all(|g| g.tours.len() == 1));

        let all = construct_knn(&inst, &sol, 5);
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].nodes, vec![1, 2, 3, 4]);
    }

    #[test]
    fn add_nn_reaches_target() {
        let inst = line_instance(60);
        let routes: Vec<Vec<usize>> = (0..6).map(|t| (t * 10 + 1..=t * 10 + 10).collect()).collect();
        let sol = Solution::from_routes(&inst, routes);
        let sgs = construct_add_nn(&inst, &sol, SizeTarget::with_epsilon(30, 5.0));
        assert!(sgs.iter().all(|g| g.tours.len() == 3 && g.size() == 30));

        let small = construct_add_nn(&inst, &sol, SizeTarget::new(4));
        assert!(small.iter().all(|g| g.tours.len() == 1));

        let one = Solution::from_routes(&inst, vec![(1..=60).collect()]);
        assert_eq!(construct_add_nn(&inst, &one, SizeTarget::new(5)).len(), 1);
    }

    fn ring(tours: usize, per_tour: usize) -> (Instance, Solution) {
        let mut pts = Vec::new();
        let mut routes = Vec::new();
        for t in 0..tours {
            let a = TAU * t as f64 / tours as f64 + 0.1;
            let mut r = Vec::new();
            for k in 0..per_tour {
                let rad = 1.0 + k as f64 * 0.01;
                pts.push(Point::new(rad * a.cos(), rad * a.sin()));
                r.push(pts.len());
            }
            routes.push(r);
        }
        let n = pts.len();
        let inst =
            Instance::new("ring", Point::new(0.0, 0.0), pts, vec![1.0; n], 1e6, Rounding::None)
                .unwrap();
        let sol = Solution::from_routes(&inst, routes);
        (inst, sol)
    }

    #[test]
    fn sweep_partitions_tours() {
        let (inst, sol) = ring(6, 50);
        let sgs = construct_sweep(&inst, &sol, SweepParams::new(100));
        assert_eq!(sgs.len(), 3);
        assert!(sgs.iter().all(|g| g.tours.len() == 2 && g.size() == 100));
        let mut all: Vec<usize> = sgs.iter().flat_map(|g| g.tours.clone()).collect();
        all.sort();
        assert_eq!(all, (0..6).collect::<Vec<_>>());

        let whole = construct_sweep(&inst, &sol, SweepParams::new(10_000));
        assert_eq!(whole.len(), 1);
        assert_eq!(whole[0].size(), 300);
    }

    #[test]
    fn sweep_restarts_dedup_rotations() {
        let (inst, sol) = ring(4, 50);
        // starting at opposite tours yields the same pairing
        let p = SweepParams {
            restarts: 2,
            ..SweepParams::new(100)
        };
        assert_eq!(construct_sweep(&inst, &sol, p).len(), 2);
        // odd shifts yield the complementary pairing
        let (inst, sol) = ring(6, 50);
        let p = SweepParams {
            restarts: 6,
            ..SweepParams::new(100)
        };
        assert_eq!(construct_sweep(&inst, &sol, p).len(), 6);
    }

    #[test]
    fn sweep_merges_small_tail() {
        let (inst, sol) = ring(5, 50);
        let sgs = construct_sweep(&inst, &sol, SweepParams::new(100));
        // 100 + 100 + 50: the 50 tail is not < 50, so it stays
        assert_eq!(sgs.iter().map(SubGraph::size).collect::<Vec<_>>(), vec![100, 100, 50]);
        let sgs = construct_sweep(&inst, &sol, SweepParams::new(120));
        // 150 closes at gap 30 >= 12 only via rejection: 100 | 100 | 50 tail < 60 merges
        assert_eq!(sgs.iter().map(SubGraph::size).collect::<Vec<_>>(), vec![100, 150]);
    }

    #[test]
    fn ruin_and_insert_round_trip() {
        let inst = line_instance(6);
        let sol = Solution::from_routes(&inst, vec![vec![1, 2], vec![3, 4], vec![5, 6]]);
        let g = SubGraph::from_tours(&inst, &sol, &[2, 0]);
        let rsg = ruin(&inst, &sol, &g).unwrap();
        assert_eq!(rsg.size(), 4);
        assert_eq!(rsg.prior_cost, 4.0 + 12.0);
        assert_eq!(rsg.instance.depot(), inst.coord(DEPOT));
        assert_eq!(rsg.instance.demands(), &[1.0; 4]);

        let same = rsg.prior_solution(&sol);
        assert_eq!(same.cost(), rsg.prior_cost);
        let back = insert(&inst, &sol, &rsg, &same).unwrap();
        assert!((back.cost() - sol.cost()).abs() < 1e-12);
        assert!(crate::model::validate(&inst, &back).is_empty());

        // local 1..4 = global 1,2,5,6; one tour over all is cheaper by 4
        let better = Solution::from_routes(&rsg.instance, vec![vec![1, 2, 3, 4]]);
        let out = insert(&inst, &sol, &rsg, &better).unwrap();
        assert!((out.cost() - (sol.cost() - 4.0)).abs() < 1e-12);

        let partial = Solution::from_routes(&rsg.instance, vec![vec![1, 2, 3]]);
        assert!(matches!(insert(&inst, &sol, &rsg, &partial), Err(Error::Coverage(_))));
    }

    #[test]
    fn stale_sub_graphs_are_rejected() {
        let inst = line_instance(4);
        let sol = Solution::from_routes(&inst, vec![vec![1, 2], vec![3, 4]]);
        let g = SubGraph::from_tours(&inst, &sol, &[1]);
        let moved = Solution::from_routes(&inst, vec![vec![1, 3], vec![2, 4]]);
        assert!(matches!(ruin(&inst, &moved, &g), Err(Error::Stale(_))));
        let shorter = Solution::from_routes(&inst, vec![vec![1, 2, 3, 4]]);
        assert!(matches!(ruin(&inst, &shorter, &g), Err(Error::Stale(_))));
    }

    #[test]
    fn key_ignores_enumeration_order() {
        let inst = line_instance(6);
        let a = Solution::from_routes(&inst, vec![vec![1, 2], vec![3, 4], vec![5, 6]]);
        let b = Solution::from_routes(&inst, vec![vec![6, 5], vec![4, 3], vec![2, 1]]);
        let ga = SubGraph::from_tours(&inst, &a, &[0, 2]);
        let gb = SubGraph::from_tours(&inst, &b, &[2, 0]);
        assert_eq!(ga.key, gb.key);
        assert_eq!(ga.nodes, gb.nodes);
    }
}
