//! Rectangular self-organizing map over normalized segment vectors.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-dimension affine map of the training range onto [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Normalization {
    pub fn fit(vectors: &[Vec<f64>]) -> Result<Self> {
        let first = vectors.first().ok_or(Error::NotEnoughData { needed: 1, got: 0 })?;
        let dims = first.len();
        let mut min = first.clone();
        let mut max = first.clone();
        for v in vectors {
            if v.len() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    got: v.len(),
                });
            }
            for d in 0..dims {
                min[d] = min[d].min(v[d]);
                max[d] = max[d].max(v[d]);
            }
        }
        Ok(Normalization { min, max })
    }

    pub fn dims(&self) -> usize {
        self.min.len()
    }

    /// Whether dimension `d` had a single value in the training data.
    pub fn is_constant(&self, d: usize) -> bool {
        !(self.max[d] > self.min[d])
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .enumerate()
            .map(|(d, &x)| {
                if self.is_constant(d) {
                    0.0
                } else {
                    2.0 * (x - self.min[d]) / (self.max[d] - self.min[d]) - 1.0
                }
            })
            .collect()
    }

    /// Like [`apply`](Self::apply) but clamps out-of-range values to [-1, 1].
    pub fn apply_clamped(&self, v: &[f64]) -> Vec<f64> {
        self.apply(v).into_iter().map(|x| x.clamp(-1.0, 1.0)).collect()
    }

    pub fn invert(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .enumerate()
            .map(|(d, &y)| {
                if self.is_constant(d) {
                    self.min[d]
                } else {
                    (y + 1.0) * 0.5 * (self.max[d] - self.min[d]) + self.min[d]
                }
            })
            .collect()
    }
}

pub fn normalize(vectors: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Normalization)> {
    let norm = Normalization::fit(vectors)?;
    let out = vectors.iter().map(|v| norm.apply(v)).collect();
    Ok((out, norm))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SomTrainingSchedule {
    pub epochs: usize,
    pub initial_learning_rate: f64,
    pub final_learning_rate: f64,
    pub initial_radius: f64,
    pub final_radius: f64,
}

impl SomTrainingSchedule {
    pub const FINAL_RADIUS: f64 = 0.25;

    /// `max(100, 10 * n / nodes)` epochs, rate 0.5 -> 0.01, radius half the
    /// longer side -> 0.25 grid units.
    pub fn default_for(num_vectors: usize, rows: usize, cols: usize) -> Self {
        let nodes = (rows * cols).max(1);
        SomTrainingSchedule {
            epochs: (10 * num_vectors / nodes).max(100),
            initial_learning_rate: 0.5,
            final_learning_rate: 0.01,
            initial_radius: (rows.max(cols) as f64 / 2.0).max(0.5),
            final_radius: Self::FINAL_RADIUS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "must be >= 1"));
        }
        if !(self.initial_learning_rate > self.final_learning_rate && self.final_learning_rate > 0.0)
        {
            return Err(Error::invalid("learning_rate", "must decrease strictly and stay > 0"));
        }
        if !(self.initial_radius > self.final_radius && self.final_radius > 0.0) {
            return Err(Error::invalid("radius", "must decrease strictly and stay > 0"));
        }
        Ok(())
    }

    /// Log-linear interpolation from `a` to `b` at progress `p` in [0, 1].
    fn interp(a: f64, b: f64, p: f64) -> f64 {
        a * (b / a).powf(p)
    }
}

/// Smallest square grid whose node count is at least `sqrt(n)`.
pub fn default_dims(num_vectors: usize) -> (usize, usize) {
    let target = (num_vectors as f64).sqrt();
    let mut side = 1;
    while ((side * side) as f64) < target {
        side += 1;
    }
    (side, side)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Som {
    pub rows: usize,
    pub cols: usize,
    pub dims: usize,
    /// Row-major `rows * cols` prototypes of length `dims`.
    pub prototypes: Vec<Vec<f64>>,
    pub trained: bool,
    pub seed: u64,
}

impl Som {
    pub fn node_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn grid_position(&self, node: usize) -> (usize, usize) {
        (node / self.cols, node % self.cols)
    }

    /// Chebyshev distance between two nodes on the grid.
    pub fn grid_distance(&self, a: usize, b: usize) -> usize {
        let (ra, ca) = self.grid_position(a);
        let (rb, cb) = self.grid_position(b);
        ra.abs_diff(rb).max(ca.abs_diff(cb))
    }

    pub fn bmu(&self, v: &[f64]) -> Result<usize> {
        if v.len() != self.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims,
                got: v.len(),
            });
        }
        Ok(nearest(&self.prototypes, v))
    }

    pub fn quantization_error(&self, vectors: &[Vec<f64>]) -> f64 {
        if vectors.is_empty() {
            return 0.0;
        }
        vectors
            .iter()
            .map(|v| squared_distance(&self.prototypes[nearest(&self.prototypes, v)], v).sqrt())
            .sum::<f64>()
            / vectors.len() as f64
    }

    /// Prototype values of one dimension, one per node, clamped to [-1, 1].
    pub fn node_grid_values(&self, dimension: usize) -> Result<Vec<f64>> {
        if dimension >= self.dims {
            return Err(Error::invalid(
                "dimension",
                format!("must be < {}", self.dims),
            ));
        }
        Ok(self
            .prototypes
            .iter()
            .map(|p| p[dimension].clamp(-1.0, 1.0))
            .collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.prototypes.len() != self.node_count() || self.node_count() == 0 {
            return Err(Error::InvalidModel("prototype count does not match grid".into()));
        }
        if self
            .prototypes
            .iter()
            .any(|p| p.len() != self.dims || p.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::InvalidModel("bad prototype vector".into()));
        }
        Ok(())
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest row; ties go to the lowest index.
fn nearest(rows: &[Vec<f64>], v: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, p) in rows.iter().enumerate() {
        let d = squared_distance(p, v);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Prototypes drawn from the training vectors (distinct where possible).
pub fn initial_som(vectors: &[Vec<f64>], rows: usize, cols: usize, seed: u64) -> Result<Som> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("som_dims", "rows and cols must be > 0"));
    }
    let dims = vectors.first().ok_or(Error::NotEnoughData { needed: 1, got: 0 })?.len();
    if let Some(v) = vectors.iter().find(|v| v.len() != dims) {
        return Err(Error::DimensionMismatch {
            expected: dims,
            got: v.len(),
        });
    }
    let nodes = rows * cols;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<usize> = if vectors.len() >= nodes {
        rand::seq::index::sample(&mut rng, vectors.len(), nodes).into_vec()
    } else {
        (0..nodes).map(|_| rng.random_range(0..vectors.len())).collect()
    };
    Ok(Som {
        rows,
        cols,
        dims,
        prototypes: picks.into_iter().map(|i| vectors[i].clone()).collect(),
        trained: false,
        seed,
    })
}

/// Online Kohonen training with a Gaussian neighborhood over Chebyshev grid
/// distance. Deterministic in `(vectors, dims, schedule, seed)`.
pub fn train_som(
    vectors: &[Vec<f64>],
    rows: usize,
    cols: usize,
    schedule: &SomTrainingSchedule,
    seed: u64,
) -> Result<Som> {
    schedule.validate()?;
    let mut som = initial_som(vectors, rows, cols, seed)?;
    if rows * cols > vectors.len() {
        log::warn!(
            "SOM has {} nodes for {} vectors; many nodes will stay empty",
            rows * cols,
            vectors.len()
        );
    }
    // separate stream from the initializer so changing init never reshuffles order
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_5011);
    let total = (schedule.epochs * vectors.len()).max(1);
    let mut order: Vec<usize> = (0..vectors.len()).collect();
    let mut step = 0usize;
    let nodes = som.node_count();
    for _ in 0..schedule.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let p = if total > 1 { step as f64 / (total - 1) as f64 } else { 1.0 };
            let alpha = SomTrainingSchedule::interp(
                schedule.initial_learning_rate,
                schedule.final_learning_rate,
                p,
            );
            let sigma =
                SomTrainingSchedule::interp(schedule.initial_radius, schedule.final_radius, p);
            let x = &vectors[i];
            let winner = nearest(&som.prototypes, x);
            for node in 0..nodes {
                let d = som.grid_distance(winner, node) as f64;
                let h = (-(d * d) / (2.0 * sigma * sigma)).exp();
                let rate = alpha * h;
                if rate < 1e-12 {
                    continue;
                }
                for (w, xv) in som.prototypes[node].iter_mut().zip(x) {
                    *w += rate * (xv - *w);
                }
            }
            step += 1;
        }
    }
    som.trained = true;
    Ok(som)
}

/// Groups vector indices by their BMU. Returns one list per node.
pub fn assign_clusters(som: &Som, vectors: &[Vec<f64>]) -> Result<Vec<Vec<usize>>> {
    let mut clusters = vec![Vec::new(); som.node_count()];
    for (i, v) in vectors.iter().enumerate() {
        clusters[som.bmu(v)?].push(i);
    }
    Ok(clusters)
}

/// BMU label of every vector, in input (corpus temporal) order.
pub fn node_sequence(som: &Som, vectors: &[Vec<f64>]) -> Result<Vec<usize>> {
    vectors.iter().map(|v| som.bmu(v)).collect()
}
