//! Mixed uniform / Gaussian-mixture instance generator.

use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Instance, Point, Rounding};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n: usize,
    pub capacity: f64,
    /// Inclusive range for the number of mixture components.
    pub clusters: (u32, u32),
    /// Range for each diagonal covariance entry.
    pub covariance: (f64, f64),
    /// Inclusive integer demand range.
    pub demand: (u32, u32),
    /// Beta(alpha, beta) parameters of the uniform-point fraction.
    pub uniform_fraction: (f64, f64),
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            capacity: 50.0,
            clusters: (1, 10),
            covariance: (0.05, 0.1),
            demand: (1, 9),
            uniform_fraction: (0.5, 9.0),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.n == 0 {
            return bad("n must be at least 1");
        }
        if self.clusters.0 == 0 || self.clusters.0 > self.clusters.1 {
            return bad("cluster range must be a nonempty range of positive counts");
        }
        if !(self.covariance.0 > 0.0 && self.covariance.0 <= self.covariance.1) {
            return bad("covariance range must be positive and nonempty");
        }
        if self.demand.0 == 0 || self.demand.0 > self.demand.1 {
            return bad("demand range must be a nonempty range of positive integers");
        }
        if f64::from(self.demand.1) > self.capacity {
            return bad("largest demand exceeds capacity");
        }
        if !(self.uniform_fraction.0 > 0.0 && self.uniform_fraction.1 > 0.0) {
            return bad("beta parameters must be positive");
        }
        Ok(())
    }
}

/// A generated instance plus the latent draws that produced it.
#[derive(Debug, Clone)]
pub struct Generated {
    pub instance: Instance,
    pub uniform_fraction: f64,
    pub clusters: u32,
}

/// Draws an instance; identical configs give identical instances.
pub fn generate_instance(config: &GeneratorConfig) -> Result<Instance> {
    generate(config).map(|g| g.instance)
}

pub fn generate(config: &GeneratorConfig) -> Result<Generated> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n;

    let beta = Beta::new(config.uniform_fraction.0, config.uniform_fraction.1)
        .map_err(|e| Error::Config(e.to_string()))?;
    let p: f64 = beta.sample(&mut rng);
    let n_uniform = ((p * n as f64).round() as usize).min(n);
    let n_mixture = n - n_uniform;

    let k = rng.random_range(config.clusters.0..=config.clusters.1);
    let components: Vec<(Point, f64, f64)> = (0..k)
        .map(|_| {
            let mx: f64 = StandardNormal.sample(&mut rng);
            let my: f64 = StandardNormal.sample(&mut rng);
            let vx = rng.random_range(config.covariance.0..=config.covariance.1);
            let vy = rng.random_range(config.covariance.0..=config.covariance.1);
            (Point::new(mx, my), vx.sqrt(), vy.sqrt())
        })
        .collect();

    let mut mixture: Vec<Point> = (0..n_mixture)
        .map(|_| {
            let (mu, sx, sy) = components[rng.random_range(0..components.len())];
            let zx: f64 = StandardNormal.sample(&mut rng);
            let zy: f64 = StandardNormal.sample(&mut rng);
            Point::new(mu.x + sx * zx, mu.y + sy * zy)
        })
        .collect();
    rescale_unit_square(&mut mixture);

    let mut coords = mixture;
    coords.extend((0..n_uniform).map(|_| Point::new(rng.random::<f64>(), rng.random::<f64>())));
    coords.shuffle(&mut rng);

    let demands: Vec<f64> = (0..n)
        .map(|_| f64::from(rng.random_range(config.demand.0..=config.demand.1)))
        .collect();
    let depot = Point::new(rng.random::<f64>(), rng.random::<f64>());

    let instance = Instance::new(
        format!("mixed_n{}_s{}", n, config.seed),
        depot,
        coords,
        demands,
        config.capacity,
        Rounding::None,
    )?;
    Ok(Generated {
        instance,
        uniform_fraction: p,
        clusters: k,
    })
}

/// Per-axis min-max scaling into `[0, 1]`; a degenerate axis maps to 0.5.
fn rescale_unit_square(points: &mut [Point]) {
    if points.is_empty() {
        return;
    }
    let fold = |f: fn(&Point) -> f64| {
        points
            .iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (x0, x1) = fold(|p| p.x);
    let (y0, y1) = fold(|p| p.y);
    let scale = |v: f64, lo: f64, hi: f64| {
        if hi > lo {
            ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
        } else {
            0.5
        }
    };
    for p in points.iter_mut() {
        p.x = scale(p.x, x0, x1);
        p.y = scale(p.y, y0, y1);
    }
}
