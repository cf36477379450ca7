//! Sub-graph scoring, the score cache and selection strategies.

pub mod features;
pub mod model;

use std::cell::Cell;
use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{Instance, Solution, DEPOT};
use crate::sg::{SgKey, SubGraph};

pub use features::{build_features, build_full_features, Frame, SgFeatures, NODE_FEATURES};
pub use model::{Activation, Architecture, Pooling, ScoringModel};

/// Larger scores mean more expected improvement from recreating `g`.
pub trait Scorer {
    fn name(&self) -> &str;
    fn score(&self, instance: &Instance, solution: &Solution, g: &SubGraph) -> Result<f64>;
}

/// Prior cost of `g` over the sum of out-and-back trips to each member
/// tour's farthest customer. Equals 1 for singleton tours and grows with
/// detours; invariant under uniform scaling.
pub fn heuristic_score(instance: &Instance, solution: &Solution, g: &SubGraph) -> f64 {
    let mut prior = 0.0;
    let mut proxy = 0.0;
    for &t in &g.tours {
        let nodes = &solution.tours()[t].nodes;
        prior += instance.route_length(nodes);
        proxy += nodes
            .iter()
            .map(|&v| 2.0 * instance.dist(DEPOT, v))
            .fold(0.0, f64::max);
    }
    if proxy > 0.0 {
        prior / proxy
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicScorer;

impl Scorer for HeuristicScorer {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn score(&self, instance: &Instance, solution: &Solution, g: &SubGraph) -> Result<f64> {
        Ok(heuristic_score(instance, solution, g))
    }
}

/// Network scorer bound to one instance. Node features do not depend on
/// the solution, so the solution context is computed once at construction.
#[derive(Debug, Clone)]
pub struct GnnScorer {
    model: ScoringModel,
    context: Vec<f32>,
}

impl GnnScorer {
    pub fn new(model: ScoringModel, instance: &Instance) -> Result<Self> {
        model.check_finite()?;
        let context = model.context(&build_full_features(instance, model.arch.knn))?;
        Ok(Self { model, context })
    }

    pub fn model(&self) -> &ScoringModel {
        &self.model
    }

    pub fn context(&self) -> &[f32] {
        &self.context
    }
}

impl Scorer for GnnScorer {
    fn name(&self) -> &str {
        "gnn"
    }

    fn score(&self, instance: &Instance, _solution: &Solution, g: &SubGraph) -> Result<f64> {
        let feats = build_features(instance, &g.nodes, self.model.arch.knn);
        Ok(self.model.forward(&feats, &self.context)? as f64)
    }
}

/// Scores by sub-graph key for the lifetime of one search run.
#[derive(Debug, Clone, Default)]
pub struct ScoreCache {
    scores: HashMap<SgKey, f64>,
    hits: Cell<u64>,
    misses: Cell<u64>,
}

impl ScoreCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: SgKey) -> Option<f64> {
        let v = self.scores.get(&key).copied();
        match v {
            Some(_) => self.hits.set(self.hits.get() + 1),
            None => self.misses.set(self.misses.get() + 1),
        }
        v
    }

    /// First write wins; later writes for the same key are ignored.
    pub fn insert(&mut self, key: SgKey, score: f64) {
        self.scores.entry(key).or_insert(score);
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn hits(&self) -> u64 {
        self.hits.get()
    }

    pub fn misses(&self) -> u64 {
        self.misses.get()
    }
}

/// Scores every SG of `family`, calling the scorer only for unseen keys.
pub fn score_all(
    scorer: &dyn Scorer,
    instance: &Instance,
    solution: &Solution,
    family: &[SubGraph],
    cache: &mut ScoreCache,
) -> Result<HashMap<SgKey, f64>> {
    let mut out = HashMap::with_capacity(family.len());
    for g in family {
        let s = match cache.get(g.key) {
            Some(s) => s,
            None => {
                let s = scorer.score(instance, solution, g)?;
                cache.insert(g.key, s);
                s
            }
        };
        out.insert(g.key, s);
    }
    Ok(out)
}

fn score_of(scores: &HashMap<SgKey, f64>, g: &SubGraph) -> f64 {
    scores.get(&g.key).copied().unwrap_or(f64::NEG_INFINITY)
}

/// Index of the highest-scoring SG, ties by smaller key.
pub fn select_greedy(family: &[SubGraph], scores: &HashMap<SgKey, f64>) -> Option<usize> {
    (0..family.len()).max_by(|&a, &b| {
        score_of(scores, &family[a])
            .total_cmp(&score_of(scores, &family[b]))
            .then(family[b].key.cmp(&family[a].key))
    })
}

/// Softmax weights over `scores / temperature` for the candidate indices.
pub fn softmax(values: &[f64], temperature: f64) -> Vec<f64> {
    let t = temperature.max(f64::MIN_POSITIVE);
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = values.iter().map(|v| ((v - m) / t).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

fn draw(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Draws one SG from the softmax distribution over its score.
pub fn select_sample(
    family: &[SubGraph],
    scores: &HashMap<SgKey, f64>,
    temperature: f64,
    rng: &mut ChaCha8Rng,
) -> Option<usize> {
    if family.is_empty() {
        return None;
    }
    let values: Vec<f64> = family.iter().map(|g| score_of(scores, g)).collect();
    Some(draw(&softmax(&values, temperature), rng))
}

/// Samples without replacement until `k` pairwise tour-disjoint SGs are
/// chosen or the family is exhausted.
pub fn select_disjoint(
    family: &[SubGraph],
    scores: &HashMap<SgKey, f64>,
    k: usize,
    temperature: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..family.len()).collect();
    let mut chosen: Vec<usize> = Vec::new();
    while chosen.len() < k && !pool.is_empty() {
        let values: Vec<f64> = pool.iter().map(|&i| score_of(scores, &family[i])).collect();
        let pick = pool.swap_remove(draw(&softmax(&values, temperature), rng));
        if chosen.iter().all(|&c| !family[c].shares_tour_with(&family[pick])) {
            chosen.push(pick);
        }
    }
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Point, Rounding};
    use rand::SeedableRng;

    fn inst() -> Instance {
        let pts = vec![
            Point::new(1.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(0.0, 2.0),
            Point::new(-1.0, 0.0),
            Point::new(-2.0, 1.0),
        ];
        Instance::new("s", Point::new(0.0, 0.0), pts, vec![1.0; 6], 10.0, Rounding::None).unwrap()
    }

    fn fake(tours: Vec<usize>, key: u64) -> SubGraph {
        SubGraph {
            tours,
            nodes: vec![],
            center: Point::new(0.0, 0.0),
            key: SgKey(key),
        }
    }

    #[test]
    fn heuristic_examples() {
        let i = inst();
        let singles = Solution::from_routes(&i, (1..=6).map(|v| vec![v]).collect());
        let g = SubGraph::from_tours(&i, &singles, &[0, 1, 2]);
        assert_eq!(heuristic_score(&i, &singles, &g), 1.0);

        let scaled = Instance::new(
            "x2",
            Point::new(0.0, 0.0),
            i.customers().iter().map(|p| Point::new(2.0 * p.x, 2.0 * p.y)).collect(),
            vec![1.0; 6],
            10.0,
            Rounding::None,
        )
        .unwrap();
        let s = Solution::from_routes(&i, vec![vec![1, 3, 2], vec![4, 5, 6]]);
        let s2 = Solution::from_routes(&scaled, vec![vec![1, 3, 2], vec![4, 5, 6]]);
        let g = SubGraph::from_tours(&i, &s, &[0, 1]);
        let g2 = SubGraph::from_tours(&scaled, &s2, &[0, 1]);
        assert!((heuristic_score(&i, &s, &g) - heuristic_score(&scaled, &s2, &g2)).abs() < 1e-12);

        let straight = Solution::from_routes(&i, vec![vec![1, 2, 3], vec![4, 5, 6]]);
        let detour = Solution::from_routes(&i, vec![vec![1, 3, 2], vec![4, 5, 6]]);
        let a = heuristic_score(&i, &straight, &SubGraph::from_tours(&i, &straight, &[0]));
        let b = heuristic_score(&i, &detour, &SubGraph::from_tours(&i, &detour, &[0]));
        assert!(b > a);
    }

    struct Counting(Cell<usize>);

    impl Scorer for Counting {
        fn name(&self) -> &str {
            "counting"
        }
        fn score(&self, i: &Instance, s: &Solution, g: &SubGraph) -> Result<f64> {
            self.0.set(self.0.get() + 1);
            Ok(heuristic_score(i, s, g))
        }
    }

    #[test]
    fn cache_skips_known_keys() {
        let i = inst();
        let s = Solution::from_routes(&i, vec![vec![1, 2], vec![3, 4], vec![5, 6]]);
        let fam: Vec<SubGraph> = (0..3).map(|t| SubGraph::from_tours(&i, &s, &[t])).collect();
        let scorer = Counting(Cell::new(0));
        let mut cache = ScoreCache::new();
        let first = score_all(&scorer, &i, &s, &fam, &mut cache).unwrap();
        assert_eq!(scorer.0.get(), 3);
        let second = score_all(&scorer, &i, &s, &fam, &mut cache).unwrap();
        assert_eq!(scorer.0.get(), 3);
        assert_eq!(first, second);
        assert_eq!(cache.hits(), 3);

        let s2 = Solution::from_routes(&i, vec![vec![1, 2], vec![3, 4], vec![6, 5]]);
        let mut fam2 = fam.clone();
        fam2.push(SubGraph::from_tours(&i, &s2, &[1, 2]));
        score_all(&scorer, &i, &s2, &fam2, &mut cache).unwrap();
        assert_eq!(scorer.0.get(), 4);
        assert!(score_all(&scorer, &i, &s, &[], &mut cache).unwrap().is_empty());
    }

    #[test]
    fn greedy_breaks_ties_by_key() {
        let fam = vec![fake(vec![0], 7), fake(vec![1], 3), fake(vec![2], 5)];
        let mut scores: HashMap<SgKey, f64> = fam.iter().map(|g| (g.key, 1.0)).collect();
        assert_eq!(select_greedy(&fam, &scores), Some(1));
        scores.insert(SgKey(5), 2.0);
        assert_eq!(select_greedy(&fam, &scores), Some(2));
        assert_eq!(select_greedy(&fam[..1], &scores), Some(0));
        assert_eq!(select_greedy(&[], &scores), None);
    }

    #[test]
    fn sample_frequencies() {
        let fam = vec![fake(vec![0], 1), fake(vec![1], 2)];
        let scores: HashMap<SgKey, f64> = fam.iter().map(|g| (g.key, 0.3)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let hits = (0..n).filter(|_| select_sample(&fam, &scores, 1.0, &mut rng) == Some(0)).count();
        assert!((hits as f64 / n as f64 - 0.5).abs() < 0.03);

        let mut skew = scores.clone();
        skew.insert(SgKey(2), 0.31);
        assert!((0..100).all(|_| select_sample(&fam, &skew, 1e-6, &mut rng) == Some(1)));
        assert_eq!(select_sample(&fam[..1], &scores, 1.0, &mut rng), Some(0));
    }

    #[test]
    fn disjoint_rejects_overlap() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let part: Vec<SubGraph> = (0..5).map(|t| fake(vec![t], t as u64)).collect();
        let scores: HashMap<SgKey, f64> = part.iter().map(|g| (g.key, 0.0)).collect();
        let mut got = select_disjoint(&part, &scores, 16, 1.0, &mut rng);
        got.sort();
        assert_eq!(got, vec![0, 1, 2, 3, 4]);

        let overlap = vec![fake(vec![0, 1], 1), fake(vec![1, 2], 2)];
        let scores: HashMap<SgKey, f64> = overlap.iter().map(|g| (g.key, 0.0)).collect();
        assert_eq!(select_disjoint(&overlap, &scores, 2, 1.0, &mut rng).len(), 1);
    }

    #[test]
    fn disjoint_k1_matches_sample() {
        let fam = vec![fake(vec![0], 1), fake(vec![1], 2), fake(vec![2], 3)];
        let scores: HashMap<SgKey, f64> =
            [(SgKey(1), 0.0), (SgKey(2), 1.0), (SgKey(3), 2.0)].into_iter().collect();
        let n = 10_000;
        let mut a = [0usize; 3];
        let mut b = [0usize; 3];
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..n {
            a[select_disjoint(&fam, &scores, 1, 1.0, &mut r1)[0]] += 1;
            b[select_sample(&fam, &scores, 1.0, &mut r2).unwrap()] += 1;
        }
        for i in 0..3 {
            assert!((a[i] as f64 - b[i] as f64).abs() / n as f64 <= 0.03);
        }
    }

    #[test]
    fn gnn_scorer_is_order_invariant() {
        let i = inst();
        let arch = Architecture {
            d_emb: 16,
            sg_hidden: 16,
            decoder_hidden: 32,
            ..Architecture::default()
        };
        let scorer = GnnScorer::new(ScoringModel::random(arch, 3).unwrap(), &i).unwrap();
        let a = Solution::from_routes(&i, vec![vec![1, 2], vec![3, 4], vec![5, 6]]);
        let b = Solution::from_routes(&i, vec![vec![6, 5], vec![2, 1], vec![4, 3]]);
        let ga = SubGraph::from_tours(&i, &a, &[0, 2]);
        let gb = SubGraph::from_tours(&i, &b, &[1, 0]);
        let sa = scorer.score(&i, &a, &ga).unwrap();
        let sb = scorer.score(&i, &b, &gb).unwrap();
        assert_eq!(sa.to_bits(), sb.to_bits());
        assert!(sa.is_finite());
    }
}
