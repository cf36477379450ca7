//! Node features and k-nearest-neighbour adjacency for the scoring network.

use std::cmp::Ordering;

use crate::model::{Instance, DEPOT};

pub const NODE_FEATURES: usize = 3;

/// Maps instance coordinates into the unit square with one uniform scale,
/// so distances stay proportional.
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    origin: (f64, f64),
    scale: f64,
}

impl Frame {
    pub fn of(instance: &Instance) -> Self {
        let mut lo = (f64::INFINITY, f64::INFINITY);
        let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in std::iter::once(instance.depot()).chain(instance.customers().iter().copied()) {
            lo = (lo.0.min(p.x), lo.1.min(p.y));
            hi = (hi.0.max(p.x), hi.1.max(p.y));
        }
        let range = (hi.0 - lo.0).max(hi.1 - lo.1);
        Self {
            origin: lo,
            scale: if range > 0.0 { range } else { 1.0 },
        }
    }

    fn map(&self, instance: &Instance, node: usize) -> (f64, f64) {
        let p = instance.coord(node);
        ((p.x - self.origin.0) / self.scale, (p.y - self.origin.1) / self.scale)
    }
}

/// Inputs of one forward pass. Row 0 is the depot; customer rows follow in
/// ascending global index. Padded rows are all zero and marked invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct SgFeatures {
    pub nodes: Vec<[f32; NODE_FEATURES]>,
    pub global: Vec<usize>,
    pub customer: Vec<bool>,
    pub valid: Vec<bool>,
    /// Incoming edges per row: `(source row, edge weight)`.
    pub neighbors: Vec<Vec<(usize, f32)>>,
}

impl SgFeatures {
    pub fn width(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Appends zero rows until the width is reached.
    pub fn pad_to(&mut self, width: usize) {
        while self.nodes.len() < width {
            self.nodes.push([0.0; NODE_FEATURES]);
            self.global.push(DEPOT);
            self.customer.push(false);
            self.valid.push(false);
            self.neighbors.push(Vec::new());
        }
    }
}

/// Builds features for the depot plus the given customers. Node order is
/// canonicalised, so any enumeration of the same set yields equal features.
pub fn build_features(instance: &Instance, customers: &[usize], k: usize) -> SgFeatures {
    let frame = Frame::of(instance);
    let mut ids: Vec<usize> = customers.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let mut global = Vec::with_capacity(ids.len() + 1);
    global.push(DEPOT);
    global.extend(ids);

    let pos: Vec<(f64, f64)> = global.iter().map(|&g| frame.map(instance, g)).collect();
    let nodes = global
        .iter()
        .zip(&pos)
        .map(|(&g, &(x, y))| [x as f32, y as f32, (instance.demand(g) / instance.capacity()) as f32])
        .collect();
    let neighbors = knn(&pos, &global, k);
    let n = global.len();
    let mut customer = vec![true; n];
    customer[0] = false;
    SgFeatures {
        nodes,
        global,
        customer,
        valid: vec![true; n],
        neighbors,
    }
}

/// Features over the whole instance, used for the solution-level context.
pub fn build_full_features(instance: &Instance, k: usize) -> SgFeatures {
    let all: Vec<usize> = (1..=instance.len()).collect();
    build_features(instance, &all, k)
}

fn knn(pos: &[(f64, f64)], global: &[usize], k: usize) -> Vec<Vec<(usize, f32)>> {
    let n = pos.len();
    let mut out = Vec::with_capacity(n);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        cand.clear();
        cand.extend((0..n).filter(|&j| j != i).map(|j| {
            let d = (pos[i].0 - pos[j].0).hypot(pos[i].1 - pos[j].1);
            (d, j)
        }));
        let cmp = |a: &(f64, usize), b: &(f64, usize)| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(Ordering::Equal)
                .then(global[a.1].cmp(&global[b.1]))
        };
        let take = k.min(cand.len());
        if take < cand.len() && take > 0 {
            cand.select_nth_unstable_by(take - 1, cmp);
        }
        cand.truncate(take);
        cand.sort_by(cmp);
        out.push(cand.iter().map(|&(d, j)| (j, d as f32)).collect());
    }
    out
}
