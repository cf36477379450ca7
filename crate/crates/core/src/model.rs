//! Problem and solution data model.
//!
//! Node indices follow the TSPLIB habit of reserving `0` for the depot;
//! customers are numbered `1..=N`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEPOT: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// How raw Euclidean distances are post-processed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    #[default]
    None,
    /// TSPLIB `nint`: `floor(d + 0.5)`.
    NearestInteger,
}

impl Rounding {
    #[inline]
    pub fn apply(self, d: f64) -> f64 {
        match self {
            Rounding::None => d,
            Rounding::NearestInteger => (d + 0.5).floor(),
        }
    }
}

/// A CVRP instance: one depot, `N` customers with positive demands and a
/// homogeneous vehicle capacity. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    name: String,
    depot: Point,
    customers: Vec<Point>,
    demands: Vec<f64>,
    capacity: f64,
    rounding: Rounding,
}

impl Instance {
    pub fn new(
        name: impl Into<String>,
        depot: Point,
        customers: Vec<Point>,
        demands: Vec<f64>,
        capacity: f64,
        rounding: Rounding,
    ) -> Result<Self> {
        if customers.is_empty() {
            return Err(Error::Instance("at least one customer is required".into()));
        }
        if customers.len() != demands.len() {
            return Err(Error::Instance(format!(
                "{} customers but {} demands",
                customers.len(),
                demands.len()
            )));
        }
        if !(capacity.is_finite() && capacity > 0.0) {
            return Err(Error::Instance(format!("capacity must be positive, got {capacity}")));
        }
        if !depot.is_finite() {
            return Err(Error::Instance("depot coordinate is not finite".into()));
        }
        for (i, (p, &q)) in customers.iter().zip(&demands).enumerate() {
            if !p.is_finite() {
                return Err(Error::Instance(format!("customer {} has a non-finite coordinate", i + 1)));
            }
            if !(q > 0.0 && q <= capacity) {
                return Err(Error::Instance(format!(
                    "customer {} demand {q} outside (0, {capacity}]",
                    i + 1
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            depot,
            customers,
            demands,
            capacity,
            rounding,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn depot(&self) -> Point {
        self.depot
    }

    /// Customer coordinates; entry `i` belongs to node `i + 1`.
    pub fn customers(&self) -> &[Point] {
        &self.customers
    }

    /// Customer demands; entry `i` belongs to node `i + 1`.
    pub fn demands(&self) -> &[f64] {
        &self.demands
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn rounding(&self) -> Rounding {
        self.rounding
    }

    /// Number of customers `N`.
    pub fn len(&self) -> usize {
        self.customers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.customers.is_empty()
    }

    /// Coordinate of any node, depot included. Panics on a bad index.
    #[inline]
    pub fn coord(&self, node: usize) -> Point {
        if node == DEPOT {
            self.depot
        } else {
            self.customers[node - 1]
        }
    }

    /// Demand of a customer node; the depot has zero demand.
    #[inline]
    pub fn demand(&self, node: usize) -> f64 {
        if node == DEPOT {
            0.0
        } else {
            self.demands[node - 1]
        }
    }

    /// Unchecked distance for hot loops. Panics on a bad index.
    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        self.rounding.apply(self.coord(i).dist(&self.coord(j)))
    }

    pub fn check_node(&self, node: usize) -> Result<()> {
        if node > self.len() {
            Err(Error::Index {
                index: node,
                customers: self.len(),
            })
        } else {
            Ok(())
        }
    }

    /// Euclidean distance between two nodes, rounded per the instance
    /// convention.
    pub fn distance(&self, i: usize, j: usize) -> Result<f64> {
        self.check_node(i)?;
        self.check_node(j)?;
        Ok(self.dist(i, j))
    }

    /// Length of the closed tour depot -> nodes... -> depot.
    pub fn route_length(&self, nodes: &[usize]) -> f64 {
        let Some((&first, _)) = nodes.split_first() else {
            return 0.0;
        };
        let mut len = self.dist(DEPOT, first);
        for w in nodes.windows(2) {
            len += self.dist(w[0], w[1]);
        }
        len + self.dist(*nodes.last().unwrap(), DEPOT)
    }

    /// Total demand of `nodes`; out-of-range indices contribute nothing.
    pub fn route_load(&self, nodes: &[usize]) -> f64 {
        nodes
            .iter()
            .filter_map(|&n| n.checked_sub(1).and_then(|i| self.demands.get(i)))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tour {
    pub nodes: Vec<usize>,
    pub load: f64,
}

impl Tour {
    pub fn new(instance: &Instance, nodes: Vec<usize>) -> Self {
        let load = instance.route_load(&nodes);
        Self { nodes, load }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// A set of tours together with a cached total cost.
///
/// Every mutating method refreshes `cost`; [`solution_cost`] is the audit
/// path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    tours: Vec<Tour>,
    cost: f64,
}

impl Solution {
    pub fn empty() -> Self {
        Self {
            tours: Vec::new(),
            cost: 0.0,
        }
    }

    /// Builds a solution from node sequences. Indices are not validated here;
    /// use [`validate`] for that. The cost is NaN if any index is invalid.
    pub fn from_routes(instance: &Instance, routes: Vec<Vec<usize>>) -> Self {
        let tours: Vec<Tour> = routes.into_iter().map(|r| Tour::new(instance, r)).collect();
        let mut s = Self { tours, cost: 0.0 };
        s.cost = try_solution_cost(instance, &s).unwrap_or(f64::NAN);
        s
    }

    pub fn tours(&self) -> &[Tour] {
        &self.tours
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn num_tours(&self) -> usize {
        self.tours.len()
    }

    pub fn num_customers(&self) -> usize {
        self.tours.iter().map(Tour::len).sum()
    }

    pub fn routes(&self) -> Vec<Vec<usize>> {
        self.tours.iter().map(|t| t.nodes.clone()).collect()
    }

    pub fn push_tour(&mut self, instance: &Instance, nodes: Vec<usize>) {
        self.cost += instance.route_length(&nodes);
        self.tours.push(Tour::new(instance, nodes));
    }

    /// Replaces the tour list and recomputes the cached cost.
    pub fn set_tours(&mut self, instance: &Instance, tours: Vec<Tour>) {
        self.tours = tours;
        self.refresh_cost(instance);
    }

    pub fn refresh_cost(&mut self, instance: &Instance) {
        self.cost = solution_cost(instance, self);
    }
}

impl fmt::Display for Solution {
    /// One tour per line, space-separated customer indices.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.tours {
            let line: Vec<String> = t.nodes.iter().map(usize::to_string).collect();
            writeln!(f, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// Sum of closed-tour lengths, recomputed from scratch.
pub fn solution_cost(instance: &Instance, solution: &Solution) -> f64 {
    solution
        .tours
        .iter()
        .map(|t| instance.route_length(&t.nodes))
        .sum()
}

/// Checked variant of [`solution_cost`] that rejects out-of-range indices.
pub fn try_solution_cost(instance: &Instance, solution: &Solution) -> Result<f64> {
    for t in &solution.tours {
        for &n in &t.nodes {
            if n == DEPOT {
                return Err(Error::Index {
                    index: n,
                    customers: instance.len(),
                });
            }
            instance.check_node(n)?;
        }
    }
    Ok(solution_cost(instance, solution))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Missing { node: usize },
    Duplicated { node: usize, count: usize },
    CapacityExceeded { tour: usize, load: f64, capacity: f64 },
    InvalidIndex { tour: usize, index: usize },
    EmptyTour { tour: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Missing { node } => write!(f, "customer {node} is not served"),
            Violation::Duplicated { node, count } => {
                write!(f, "customer {node} is served {count} times")
            }
            Violation::CapacityExceeded {
                tour,
                load,
                capacity,
            } => write!(f, "tour {tour} carries {load} > capacity {capacity}"),
            Violation::InvalidIndex { tour, index } => {
                write!(f, "tour {tour} references invalid node {index}")
            }
            Violation::EmptyTour { tour } => write!(f, "tour {tour} is empty"),
        }
    }
}

/// Lists every broken partition or capacity constraint. An empty report
/// means the solution is feasible.
pub fn validate(instance: &Instance, solution: &Solution) -> Vec<Violation> {
    let n = instance.len();
    let mut report = Vec::new();
    let mut seen = vec![0usize; n + 1];
    for (ti, tour) in solution.tours.iter().enumerate() {
        if tour.nodes.is_empty() {
            report.push(Violation::EmptyTour { tour: ti });
        }
        let mut load = 0.0;
        for &node in &tour.nodes {
            if node == DEPOT || node > n {
                report.push(Violation::InvalidIndex {
                    tour: ti,
                    index: node,
                });
                continue;
            }
            seen[node] += 1;
            load += instance.demand(node);
        }
        if load > instance.capacity() {
            report.push(Violation::CapacityExceeded {
                tour: ti,
                load,
                capacity: instance.capacity(),
            });
        }
    }
    for (node, &count) in seen.iter().enumerate().skip(1) {
        match count {
            0 => report.push(Violation::Missing { node }),
            1 => {}
            _ => report.push(Violation::Duplicated { node, count }),
        }
    }
    report
}
