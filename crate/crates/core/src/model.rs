//! Ground-truth Gaussian graphical models: the precision matrix, its covariance,
//! the edge set it induces and the normalized edge strengths.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GgmError, Result};
use crate::linalg::{self, BlockFactor};

/// Symmetry tolerance accepted for a user-supplied precision matrix.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Off-diagonal shrink factor applied when a random precision matrix is not PD.
pub const PD_BACKOFF: f64 = 0.9;
/// Number of shrink-and-retry rounds after the first draw.
pub const PD_RETRIES: usize = 20;

/// RNG stream used for graph topology and link strengths. Samples use stream 0.
pub(crate) const TOPOLOGY_STREAM: u64 = 1;

/// Unordered vertex pair stored as `(low, high)`, 0-based.
pub type Edge = (usize, usize);

pub fn edge(i: usize, j: usize) -> Edge {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

/// The model families used throughout the experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ModelFamily {
    /// Triangle with two weak links of strength `kappa` and one strong link
    /// `1 - epsilon`, plus `p - 3` independent nodes of variance `sigma2`.
    TriangleCloud {
        kappa: f64,
        epsilon: f64,
        sigma2: f64,
        p: usize,
    },
    /// The 3×3 triangle alone.
    ThreeNode { kappa0: f64, epsilon: f64 },
    /// The triangle plus one unit-variance independent node.
    FourNode { kappa: f64, epsilon: f64 },
    /// Random `d`-regular graph with unit diagonal, random signs and link
    /// magnitudes drawn uniformly from `[kappa_min, kappa_max]`.
    RegularRandom {
        p: usize,
        d: usize,
        kappa_min: f64,
        kappa_max: f64,
        seed: u64,
    },
}

impl ModelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            ModelFamily::TriangleCloud { .. } => "triangle-cloud",
            ModelFamily::ThreeNode { .. } => "three-node",
            ModelFamily::FourNode { .. } => "four-node",
            ModelFamily::RegularRandom { .. } => "regular-random",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(GgmError::InvalidSpec(msg));
        match *self {
            ModelFamily::TriangleCloud {
                kappa,
                epsilon,
                sigma2,
                p,
            } => {
                check_triangle(kappa, epsilon)?;
                if !(sigma2 > 0.0 && sigma2.is_finite()) {
                    return bad(format!("sigma2 must be positive, got {sigma2}"));
                }
                if p < 3 {
                    return bad(format!("triangle cloud needs p >= 3, got {p}"));
                }
                Ok(())
            }
            ModelFamily::ThreeNode { kappa0, epsilon } => check_triangle(kappa0, epsilon),
            ModelFamily::FourNode { kappa, epsilon } => check_triangle(kappa, epsilon),
            ModelFamily::RegularRandom {
                p,
                d,
                kappa_min,
                kappa_max,
                ..
            } => {
                if d == 0 || d >= p {
                    return bad(format!("regular graph needs 1 <= d < p, got d={d}, p={p}"));
                }
                if (d * p) % 2 != 0 {
                    return bad(format!("no {d}-regular graph on {p} vertices (d*p odd)"));
                }
                if !(kappa_min > 0.0 && kappa_min <= kappa_max && kappa_max < 1.0) {
                    return bad(format!(
                        "need 0 < kappa_min <= kappa_max < 1, got [{kappa_min}, {kappa_max}]"
                    ));
                }
                Ok(())
            }
        }
    }
}

fn check_triangle(kappa: f64, epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(GgmError::InvalidSpec(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    if !(kappa > 0.0 && kappa < 1.0 - epsilon) {
        return Err(GgmError::InvalidSpec(format!(
            "kappa must lie in (0, 1 - epsilon) = (0, {}), got {kappa}",
            1.0 - epsilon
        )));
    }
    Ok(())
}

/// A ground-truth model. Immutable once built.
#[derive(Debug, Clone)]
pub struct GgmInstance {
    pub theta: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub mu: DVector<f64>,
    pub edges: BTreeSet<Edge>,
    pub p: usize,
    /// Maximum vertex degree of the support of `theta`.
    pub d: usize,
    /// Minimum normalized edge strength; 0 for an empty graph.
    pub kappa: f64,
    pub family: Option<ModelFamily>,
}

impl GgmInstance {
    /// Validates `theta` and derives the covariance, edge set and strengths.
    pub fn from_precision(
        theta: DMatrix<f64>,
        mu: Option<DVector<f64>>,
        family: Option<ModelFamily>,
    ) -> Result<Self> {
        let p = theta.nrows();
        if p == 0 || theta.ncols() != p {
            return Err(GgmError::InvalidSpec(format!(
                "precision matrix must be square and non-empty, got {}x{}",
                theta.nrows(),
                theta.ncols()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(GgmError::InvalidSpec("precision matrix has non-finite entries".into()));
        }
        let asym = linalg::max_asymmetry(&theta);
        if asym > SYMMETRY_TOLERANCE {
            return Err(GgmError::InvalidSpec(format!(
                "precision matrix is not symmetric (max deviation {asym:e})"
            )));
        }
        let mu = mu.unwrap_or_else(|| DVector::zeros(p));
        if mu.len() != p {
            return Err(GgmError::InvalidSpec(format!(
                "mean has length {}, expected {p}",
                mu.len()
            )));
        }
        if !linalg::is_positive_definite(&theta) {
            return Err(GgmError::NotPositiveDefinite { attempts: 1 });
        }
        let sigma = linalg::spd_inverse(&theta).ok_or(GgmError::NotPositiveDefinite { attempts: 1 })?;

        let mut edges = BTreeSet::new();
        let mut degree = vec![0usize; p];
        for i in 0..p {
            for j in (i + 1)..p {
                if theta[(i, j)].abs() > 0.0 {
                    edges.insert((i, j));
                    degree[i] += 1;
                    degree[j] += 1;
                }
            }
        }
        let d = degree.iter().copied().max().unwrap_or(0);
        let kappa = edges
            .iter()
            .map(|&(i, j)| normalized_strength(&theta, i, j))
            .fold(f64::INFINITY, f64::min);
        let kappa = if edges.is_empty() { 0.0 } else { kappa };

        Ok(Self {
            theta,
            sigma,
            mu,
            edges,
            p,
            d,
            kappa,
            family,
        })
    }

    pub fn with_mean(mut self, mu: DVector<f64>) -> Result<Self> {
        if mu.len() != self.p {
            return Err(GgmError::InvalidSpec(format!(
                "mean has length {}, expected {}",
                mu.len(),
                self.p
            )));
        }
        self.mu = mu;
        Ok(self)
    }

    /// True neighborhood of `i`, ascending.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.p)
            .filter(|&j| j != i && self.edges.contains(&edge(i, j)))
            .collect()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).len()
    }

    /// `max |ΣΘ − I|`, the inversion residual.
    pub fn inversion_residual(&self) -> f64 {
        let prod = &self.sigma * &self.theta;
        linalg::max_abs(&(prod - DMatrix::identity(self.p, self.p)))
    }
}

/// `|Θ_ij| / sqrt(Θ_ii Θ_jj)`.
pub fn normalized_strength(theta: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    assert!(i != j, "normalized strength needs two distinct vertices");
    theta[(i, j)].abs() / (theta[(i, i)] * theta[(j, j)]).sqrt()
}

/// Minimum normalized strength over the true edge set.
pub fn true_min_kappa(instance: &GgmInstance) -> Result<f64> {
    instance
        .edges
        .iter()
        .map(|&(i, j)| normalized_strength(&instance.theta, i, j))
        .reduce(f64::min)
        .ok_or(GgmError::EmptyGraph)
}

/// Partial correlation of `X_i` and `X_j` given `X_S`, from the Schur
/// complement of `sigma` on `S`.
pub fn conditional_correlation(
    sigma: &DMatrix<f64>,
    i: usize,
    j: usize,
    conditioning: &[usize],
) -> Result<f64> {
    let p = sigma.nrows();
    if i == j || i >= p || j >= p {
        return Err(GgmError::DomainError(format!(
            "need two distinct vertices below {p}, got {i} and {j}"
        )));
    }
    if conditioning.iter().any(|&s| s == i || s == j || s >= p) {
        return Err(GgmError::DomainError(format!(
            "conditioning set {conditioning:?} must exclude {i}, {j} and lie below {p}"
        )));
    }
    let (mut vii, mut vjj, mut vij) = (sigma[(i, i)], sigma[(j, j)], sigma[(i, j)]);
    if !conditioning.is_empty() {
        let mut factor = BlockFactor::new();
        if !factor.factor(sigma, conditioning) {
            return Err(GgmError::SingularConditioningSet {
                set: conditioning.to_vec(),
            });
        }
        let ci: Vec<f64> = conditioning.iter().map(|&s| sigma[(s, i)]).collect();
        let cj: Vec<f64> = conditioning.iter().map(|&s| sigma[(s, j)]).collect();
        let mut yi = ci.clone();
        let mut yj = cj.clone();
        factor.solve_in_place(&mut yi);
        factor.solve_in_place(&mut yj);
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        vii -= dot(&ci, &yi);
        vjj -= dot(&cj, &yj);
        vij -= dot(&ci, &yj);
    }
    Ok(vij / (vii * vjj).sqrt())
}

/// Builds the model for a family specification.
pub fn build_instance(spec: &ModelFamily) -> Result<GgmInstance> {
    spec.validate()?;
    match *spec {
        ModelFamily::TriangleCloud {
            kappa,
            epsilon,
            sigma2,
            p,
        } => {
            let mut theta = DMatrix::zeros(p, p);
            fill_triangle(&mut theta, kappa, epsilon);
            for v in 3..p {
                theta[(v, v)] = 1.0 / sigma2;
            }
            GgmInstance::from_precision(theta, None, Some(spec.clone()))
        }
        ModelFamily::ThreeNode { kappa0, epsilon } => {
            let mut theta = DMatrix::zeros(3, 3);
            fill_triangle(&mut theta, kappa0, epsilon);
            GgmInstance::from_precision(theta, None, Some(spec.clone()))
        }
        ModelFamily::FourNode { kappa, epsilon } => {
            let mut theta = DMatrix::zeros(4, 4);
            fill_triangle(&mut theta, kappa, epsilon);
            theta[(3, 3)] = 1.0;
            GgmInstance::from_precision(theta, None, Some(spec.clone()))
        }
        ModelFamily::RegularRandom {
            p,
            d,
            kappa_min,
            kappa_max,
            seed,
        } => build_regular_random(spec, p, d, kappa_min, kappa_max, seed),
    }
}

fn fill_triangle(theta: &mut DMatrix<f64>, kappa: f64, epsilon: f64) {
    theta[(0, 0)] = 1.0;
    theta[(1, 1)] = 1.0;
    theta[(2, 2)] = 1.0;
    for (a, b, v) in [(0, 1, kappa), (0, 2, kappa), (1, 2, 1.0 - epsilon)] {
        theta[(a, b)] = v;
        theta[(b, a)] = v;
    }
}

fn build_regular_random(
    spec: &ModelFamily,
    p: usize,
    d: usize,
    kappa_min: f64,
    kappa_max: f64,
    seed: u64,
) -> Result<GgmInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(TOPOLOGY_STREAM);
    let edges = random_regular_graph(p, d, &mut rng)?;

    let mut theta = DMatrix::identity(p, p);
    for &(i, j) in &edges {
        let magnitude = if kappa_max > kappa_min {
            rng.gen_range(kappa_min..=kappa_max)
        } else {
            kappa_min
        };
        let v = if rng.gen::<bool>() { magnitude } else { -magnitude };
        theta[(i, j)] = v;
        theta[(j, i)] = v;
    }

    for attempt in 0..=PD_RETRIES {
        if linalg::is_positive_definite(&theta) {
            return GgmInstance::from_precision(theta, None, Some(spec.clone()));
        }
        if attempt == PD_RETRIES {
            break;
        }
        for &(i, j) in &edges {
            theta[(i, j)] *= PD_BACKOFF;
            theta[(j, i)] *= PD_BACKOFF;
        }
    }
    Err(GgmError::NotPositiveDefinite {
        attempts: PD_RETRIES + 1,
    })
}

/// Uniform-ish random `d`-regular simple graph by sequential pairing of
/// vertex stubs, restarting whenever the pairing gets stuck.
pub(crate) fn random_regular_graph<R: Rng>(p: usize, d: usize, rng: &mut R) -> Result<Vec<Edge>> {
    const RESTARTS: usize = 10_000;
    const RANDOM_TRIES: usize = 64;
    'restart: for _ in 0..RESTARTS {
        let mut stubs: Vec<usize> = (0..p).flat_map(|v| std::iter::repeat_n(v, d)).collect();
        stubs.shuffle(rng);
        let mut adjacent = vec![false; p * p];
        let mut edges = Vec::with_capacity(p * d / 2);
        while !stubs.is_empty() {
            let mut picked = None;
            for _ in 0..RANDOM_TRIES {
                let a = rng.gen_range(0..stubs.len());
                let b = rng.gen_range(0..stubs.len());
                let (u, v) = (stubs[a], stubs[b]);
                if a != b && u != v && !adjacent[u * p + v] {
                    picked = Some((a, b));
                    break;
                }
            }
            if picked.is_none() {
                let mut suitable = Vec::new();
                for a in 0..stubs.len() {
                    for b in (a + 1)..stubs.len() {
                        let (u, v) = (stubs[a], stubs[b]);
                        if u != v && !adjacent[u * p + v] {
                            suitable.push((a, b));
                        }
                    }
                }
                match suitable.choose(rng) {
                    Some(&pair) => picked = Some(pair),
                    None => continue 'restart,
                }
            }
            let (a, b) = picked.expect("pair chosen above");
            let (u, v) = (stubs[a], stubs[b]);
            adjacent[u * p + v] = true;
            adjacent[v * p + u] = true;
            edges.push(edge(u, v));
            let (hi, lo) = if a > b { (a, b) } else { (b, a) };
            stubs.swap_remove(hi);
            stubs.swap_remove(lo);
        }
        edges.sort_unstable();
        return Ok(edges);
    }
    Err(GgmError::InvalidSpec(format!(
        "failed to draw a {d}-regular graph on {p} vertices"
    )))
}
