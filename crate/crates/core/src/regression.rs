//! Subset-restricted least squares and the cardinality-constrained search over
//! conditioning sets.
//!
//! For a target `i` and conditioning set `A`, the optimal coefficients are
//! `β = −Σ̂_AA⁻¹ Σ̂_Ai` and the residual energy is the conditional variance
//! `L*_i(A) = Σ̂_ii − Σ̂_iA Σ̂_AA⁻¹ Σ̂_Ai`. The ℓ0 search returns the size-`d`
//! set minimizing that loss, with ties (losses within `tie_tolerance`) broken
//! towards the lexicographically smallest set. Both search strategies and any
//! parallel split produce the same answer bit for bit.

use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GgmError, Result};
use crate::linalg::{BlockFactor, PIVOT_TOLERANCE};
use crate::subsets::{binomial, complement, for_each_subset, next_combination};

/// Losses closer than this (relative to `max(1, |loss|)`) are tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

pub fn tie_tolerance(loss: f64) -> f64 {
    TIE_TOLERANCE * loss.abs().max(1.0)
}

/// Result of regressing `X_target` on `X_subset`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetRegression {
    pub target: usize,
    pub subset: Vec<usize>,
    /// Coefficients aligned with `subset`.
    pub beta: Vec<f64>,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum L0Strategy {
    #[default]
    Exhaustive,
    BranchAndBound,
}

/// Optimal size-`d` conditioning set for one target.
#[derive(Debug, Clone, PartialEq)]
pub struct L0Solution {
    pub target: usize,
    pub support: Vec<usize>,
    pub beta: Vec<f64>,
    pub loss: f64,
    pub strategy_used: L0Strategy,
}

/// Box on every coefficient in the mixed-integer formulation: a selected
/// coefficient must lie in `[lower, upper]`, an unselected one is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientBounds {
    pub lower: f64,
    pub upper: f64,
}

impl CoefficientBounds {
    /// `U = 10 · max_j sqrt(Σ̂_jj / Σ̂_ii)`, `L = −U`.
    pub fn default_for(sigma: &DMatrix<f64>, target: usize) -> Self {
        let sii = sigma[(target, target)];
        let spread = (0..sigma.nrows())
            .filter(|&j| j != target)
            .map(|j| (sigma[(j, j)] / sii).sqrt())
            .fold(0.0_f64, f64::max);
        let upper = 10.0 * spread.max(f64::MIN_POSITIVE);
        Self {
            lower: -upper,
            upper,
        }
    }

    fn contains(&self, v: f64) -> bool {
        v >= self.lower && v <= self.upper
    }
}

/// Reusable scratch space for repeated subset regressions.
#[derive(Debug, Clone, Default)]
pub struct SubsetSolver {
    factor: BlockFactor,
    rhs: Vec<f64>,
    sol: Vec<f64>,
}

impl SubsetSolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// `L*_target(subset)`, or `None` when `Σ̂[subset, subset]` is singular.
    #[inline]
    pub fn loss(&mut self, sigma: &DMatrix<f64>, target: usize, subset: &[usize]) -> Option<f64> {
        let sii = sigma[(target, target)];
        match *subset {
            [] => Some(sii),
            [a] => {
                let saa = sigma[(a, a)];
                if saa.abs() > 0.0 {
                    let c = sigma[(a, target)];
                    Some(sii - c * c / saa)
                } else {
                    None
                }
            }
            [a, b] => {
                // same diagonal pivoting as the general factorization
                let (a, b) = if sigma[(b, b)].abs() > sigma[(a, a)].abs() {
                    (b, a)
                } else {
                    (a, b)
                };
                let d1 = sigma[(a, a)];
                if !(d1.abs() > 0.0) {
                    return None;
                }
                let l = sigma[(b, a)] / d1;
                let d2 = sigma[(b, b)] - l * sigma[(a, b)];
                if !(d2.abs() > PIVOT_TOLERANCE * d1.abs()) {
                    return None;
                }
                let za = sigma[(a, target)];
                let zb = sigma[(b, target)] - l * za;
                Some(sii - (za * za / d1 + zb * zb / d2))
            }
            _ => {
                if !self.factor.factor(sigma, subset) {
                    return None;
                }
                self.rhs.clear();
                self.rhs.extend(subset.iter().map(|&a| sigma[(a, target)]));
                self.sol.clear();
                self.sol.extend_from_slice(&self.rhs);
                self.factor.solve_in_place(&mut self.sol);
                let q: f64 = self.rhs.iter().zip(&self.sol).map(|(u, v)| u * v).sum();
                Some(sii - q)
            }
        }
    }

    /// Writes `β = −Σ̂_AA⁻¹ Σ̂_Ai` into `beta`; `false` when the block is singular.
    pub fn coefficients_into(
        &mut self,
        sigma: &DMatrix<f64>,
        target: usize,
        subset: &[usize],
        beta: &mut Vec<f64>,
    ) -> bool {
        beta.clear();
        if subset.is_empty() {
            return true;
        }
        if !self.factor.factor(sigma, subset) {
            return false;
        }
        beta.extend(subset.iter().map(|&a| sigma[(a, target)]));
        self.factor.solve_in_place(beta);
        for b in beta.iter_mut() {
            *b = -*b;
        }
        true
    }

    /// Coefficients and loss, or `None` when the block is singular.
    pub fn regress(
        &mut self,
        sigma: &DMatrix<f64>,
        target: usize,
        subset: &[usize],
    ) -> Option<(Vec<f64>, f64)> {
        if subset.is_empty() {
            return Some((Vec::new(), sigma[(target, target)]));
        }
        if !self.factor.factor(sigma, subset) {
            return None;
        }
        let c: Vec<f64> = subset.iter().map(|&a| sigma[(a, target)]).collect();
        let mut y = c.clone();
        self.factor.solve_in_place(&mut y);
        let q: f64 = c.iter().zip(&y).map(|(u, v)| u * v).sum();
        let beta = y.into_iter().map(|v| -v).collect();
        Some((beta, sigma[(target, target)] - q))
    }
}

fn check_subset(p: usize, target: usize, subset: &[usize]) -> Result<()> {
    if target >= p {
        return Err(GgmError::DomainError(format!("target {target} out of range 0..{p}")));
    }
    for (t, &a) in subset.iter().enumerate() {
        if a >= p || a == target || subset[..t].contains(&a) {
            return Err(GgmError::DomainError(format!(
                "conditioning set {subset:?} must hold distinct vertices other than {target} below {p}"
            )));
        }
    }
    Ok(())
}

/// `β = −Σ̂_AA⁻¹ Σ̂_Ai` and its residual energy.
pub fn subset_regression(
    sigma: &DMatrix<f64>,
    target: usize,
    subset: &[usize],
) -> Result<SubsetRegression> {
    check_subset(sigma.nrows(), target, subset)?;
    let (beta, loss) = SubsetSolver::new()
        .regress(sigma, target, subset)
        .ok_or_else(|| GgmError::SingularSubmatrix {
            target,
            subset: subset.to_vec(),
        })?;
    Ok(SubsetRegression {
        target,
        subset: subset.to_vec(),
        beta,
        loss,
    })
}

/// Prefix minima of a lexicographically ordered stream of `(subset, loss)`.
///
/// The first subset in lexicographic order with loss at most a threshold is
/// always one of these records, so keeping them is enough to resolve ties once
/// the global minimum is known, and chunks merge by concatenation.
#[derive(Debug, Clone, Default)]
struct RecordLows {
    records: Vec<(Vec<usize>, f64)>,
    singular: usize,
    first_singular: Option<Vec<usize>>,
}

impl RecordLows {
    fn min(&self) -> Option<f64> {
        self.records.last().map(|r| r.1)
    }

    fn offer(&mut self, subset: &[usize], loss: f64) {
        if self.min().is_none_or(|m| loss < m) {
            self.records.push((subset.to_vec(), loss));
        }
    }

    fn mark_singular(&mut self, subset: &[usize]) {
        self.singular += 1;
        if self.first_singular.is_none() {
            self.first_singular = Some(subset.to_vec());
        }
    }

    fn append(&mut self, later: RecordLows) {
        for (s, l) in later.records {
            self.offer(&s, l);
        }
        self.singular += later.singular;
        if self.first_singular.is_none() {
            self.first_singular = later.first_singular;
        }
    }

    /// Lexicographically first subset within tolerance of the minimum.
    fn select(&self) -> Option<(&[usize], f64)> {
        let m = self.min()?;
        let threshold = m + tie_tolerance(m);
        self.records
            .iter()
            .find(|r| r.1 <= threshold)
            .map(|r| (r.0.as_slice(), r.1))
    }
}

fn check_l0(p: usize, target: usize, d: usize) -> Result<()> {
    if target >= p {
        return Err(GgmError::DomainError(format!("target {target} out of range 0..{p}")));
    }
    if d + 1 > p {
        return Err(GgmError::DomainError(format!(
            "cardinality {d} exceeds the {} candidate regressors",
            p - 1
        )));
    }
    Ok(())
}

/// Candidate count above which the exhaustive scan is split across threads.
const PARALLEL_THRESHOLD: u128 = 4096;

fn exhaustive_records(sigma: &DMatrix<f64>, target: usize, pool: &[usize], d: usize) -> RecordLows {
    let scan = |head: Option<usize>| {
        let mut solver = SubsetSolver::new();
        let mut lows = RecordLows::default();
        let mut visit = |s: &[usize]| {
            match solver.loss(sigma, target, s) {
                Some(l) if l.is_finite() => lows.offer(s, l),
                _ => lows.mark_singular(s),
            }
            true
        };
        match head {
            None => for_each_subset(pool, d, visit),
            Some(h) => {
                let mut buf = Vec::with_capacity(d);
                for_each_subset(&pool[h + 1..], d - 1, |rest| {
                    buf.clear();
                    buf.push(pool[h]);
                    buf.extend_from_slice(rest);
                    visit(&buf)
                });
            }
        }
        lows
    };

    if d == 0 || binomial(pool.len(), d) < PARALLEL_THRESHOLD {
        return scan(None);
    }
    // one chunk per leading element; chunks are contiguous in lex order
    let chunks: Vec<RecordLows> = (0..=pool.len() - d)
        .into_par_iter()
        .map(|h| scan(Some(h)))
        .collect();
    let mut all = RecordLows::default();
    for c in chunks {
        all.append(c);
    }
    all
}

fn finish(
    sigma: &DMatrix<f64>,
    target: usize,
    lows: &RecordLows,
    strategy: L0Strategy,
) -> Result<L0Solution> {
    let (support, loss) = lows.select().ok_or_else(|| GgmError::SingularSubmatrix {
        target,
        subset: lows.first_singular.clone().unwrap_or_default(),
    })?;
    let (beta, _) = SubsetSolver::new()
        .regress(sigma, target, support)
        .ok_or_else(|| GgmError::SingularSubmatrix {
            target,
            subset: support.to_vec(),
        })?;
    Ok(L0Solution {
        target,
        support: support.to_vec(),
        beta,
        loss,
        strategy_used: strategy,
    })
}

/// Best size-`d` conditioning set for `target`.
pub fn l0_least_squares(
    sigma: &DMatrix<f64>,
    target: usize,
    d: usize,
    strategy: L0Strategy,
) -> Result<L0Solution> {
    match strategy {
        L0Strategy::Exhaustive => {
            check_l0(sigma.nrows(), target, d)?;
            let pool = complement(sigma.nrows(), &[target]);
            let lows = exhaustive_records(sigma, target, &pool, d);
            finish(sigma, target, &lows, L0Strategy::Exhaustive)
        }
        L0Strategy::BranchAndBound => {
            let bounds = CoefficientBounds::default_for(sigma, target);
            branch_and_bound_l0(sigma, target, d, bounds)
        }
    }
}

/// Number of random subsets re-scored after a branch-and-bound run to catch
/// coefficient boxes that cut off the true optimum.
const AUDIT_SAMPLES: usize = 64;
/// Frank–Wolfe iterations per node relaxation.
const RELAXATION_ITERS: usize = 30;

/// Depth-first branch and bound over inclusion decisions, taken in ascending
/// vertex order with "include" explored first so leaves arrive in
/// lexicographic order. Nodes are pruned with a certified lower bound on the
/// continuous relaxation of the mixed-integer program (binary selectors
/// relaxed to `[0, 1]`) combined with the unconstrained regression on every
/// still-allowed vertex.
pub fn branch_and_bound_l0(
    sigma: &DMatrix<f64>,
    target: usize,
    d: usize,
    bounds: CoefficientBounds,
) -> Result<L0Solution> {
    check_l0(sigma.nrows(), target, d)?;
    if !(bounds.lower < 0.0 && bounds.upper > 0.0)
        || !bounds.lower.is_finite()
        || !bounds.upper.is_finite()
    {
        return Err(GgmError::DomainError(format!(
            "coefficient bounds must satisfy L < 0 < U, got [{}, {}]",
            bounds.lower, bounds.upper
        )));
    }
    let pool = complement(sigma.nrows(), &[target]);
    let mut search = BranchSearch {
        sigma,
        target,
        d,
        bounds,
        pool: &pool,
        solver: SubsetSolver::new(),
        lows: RecordLows::default(),
        chosen: Vec::with_capacity(d),
    };
    search.descend(0);
    let lows = search.lows;
    let solution = finish(sigma, target, &lows, L0Strategy::BranchAndBound)?;

    let clipped = solution.beta.iter().any(|&b| !bounds.contains(b));
    if clipped || audit_beats(sigma, target, &pool, d, solution.loss) {
        return Err(GgmError::BoundsTooTight {
            target,
            lower: bounds.lower,
            upper: bounds.upper,
        });
    }
    Ok(solution)
}

fn audit_beats(sigma: &DMatrix<f64>, target: usize, pool: &[usize], d: usize, best: f64) -> bool {
    let total = binomial(pool.len(), d);
    let mut solver = SubsetSolver::new();
    let threshold = best - tie_tolerance(best);
    if total <= AUDIT_SAMPLES as u128 {
        let mut beaten = false;
        for_each_subset(pool, d, |s| {
            if let Some(l) = solver.loss(sigma, target, s) {
                beaten |= l < threshold;
            }
            !beaten
        });
        return beaten;
    }
    let mut rng = ChaCha8Rng::seed_from_u64((target as u64) << 16 | d as u64);
    let mut subset = Vec::with_capacity(d);
    for _ in 0..AUDIT_SAMPLES {
        let mut picks = sample_indices(&mut rng, pool.len(), d).into_vec();
        picks.sort_unstable();
        subset.clear();
        subset.extend(picks.iter().map(|&t| pool[t]));
        if let Some(l) = solver.loss(sigma, target, &subset) {
            if l < threshold {
                return true;
            }
        }
    }
    false
}

struct BranchSearch<'a> {
    sigma: &'a DMatrix<f64>,
    target: usize,
    d: usize,
    bounds: CoefficientBounds,
    pool: &'a [usize],
    solver: SubsetSolver,
    lows: RecordLows,
    chosen: Vec<usize>,
}

impl BranchSearch<'_> {
    fn leaf(&mut self, subset: &[usize]) {
        match self.solver.loss(self.sigma, self.target, subset) {
            Some(l) if l.is_finite() => self.lows.offer(subset, l),
            _ => self.lows.mark_singular(subset),
        }
    }

    /// Explores the node where `pool[..pos]` is decided and `chosen` holds the
    /// included vertices.
    fn descend(&mut self, pos: usize) {
        let need = self.d - self.chosen.len();
        let free = self.pool.len() - pos;
        if need > free {
            return;
        }
        if need == 0 || need == free {
            let mut subset = self.chosen.clone();
            subset.extend_from_slice(&self.pool[pos..pos + need]);
            self.leaf(&subset);
            return;
        }
        if let Some(best) = self.lows.min() {
            let bound = self.node_bound(pos, need);
            let slack = tie_tolerance(best) + 1e-9 * best.abs().max(1.0);
            if bound > best + slack {
                return;
            }
        }
        self.chosen.push(self.pool[pos]);
        self.descend(pos + 1);
        self.chosen.pop();
        self.descend(pos + 1);
    }

    /// Certified lower bound on every leaf below the node.
    fn node_bound(&mut self, pos: usize, need: usize) -> f64 {
        let mut allowed = self.chosen.clone();
        allowed.extend_from_slice(&self.pool[pos..]);
        let regression_bound = self
            .solver
            .loss(self.sigma, self.target, &allowed)
            .unwrap_or(f64::NEG_INFINITY);
        let relaxed = relaxation_bound(
            self.sigma,
            self.target,
            &allowed,
            self.chosen.len(),
            need,
            self.bounds,
        );
        regression_bound.max(relaxed)
    }
}

/// Frank–Wolfe on the relaxed node problem
///
///   min βᵀ Σ̂_AA β + 2 Σ̂_iA β + Σ̂_ii
///   s.t. β_j ∈ [L, U] for the `fixed` leading entries of `allowed`,
///        β_j ∈ [s_j L, s_j U], s_j ∈ [0, 1], Σ s_j = need for the rest,
///
/// returning the best duality-gap lower bound seen. The objective is convex on
/// a PSD covariance, so `f(β) − ∇f(β)ᵀ(β − y)` with `y` the linear minimizer
/// is a valid lower bound at every iterate.
fn relaxation_bound(
    sigma: &DMatrix<f64>,
    target: usize,
    allowed: &[usize],
    fixed: usize,
    need: usize,
    bounds: CoefficientBounds,
) -> f64 {
    let m = allowed.len();
    let s = |a: usize, b: usize| sigma[(allowed[a], allowed[b])];
    let c: Vec<f64> = allowed.iter().map(|&a| sigma[(a, target)]).collect();
    let sii = sigma[(target, target)];
    let (lo, hi) = (bounds.lower, bounds.upper);

    let mut beta = vec![0.0; m];
    let mut s_beta = vec![0.0; m];
    let mut y = vec![0.0; m];
    let mut dir = vec![0.0; m];
    let mut s_dir = vec![0.0; m];
    let mut gains: Vec<(f64, usize)> = Vec::with_capacity(m);
    let mut best = f64::NEG_INFINITY;

    for _ in 0..RELAXATION_ITERS {
        let grad: Vec<f64> = (0..m).map(|a| 2.0 * (s_beta[a] + c[a])).collect();
        let value: f64 = sii
            + (0..m)
                .map(|a| beta[a] * (s_beta[a] + 2.0 * c[a]))
                .sum::<f64>();

        for a in 0..fixed {
            y[a] = if grad[a] > 0.0 { lo } else { hi };
        }
        gains.clear();
        for a in fixed..m {
            y[a] = 0.0;
            let g = (grad[a] * lo).min(grad[a] * hi);
            if g < 0.0 {
                gains.push((g, a));
            }
        }
        gains.sort_by(|x, z| x.0.total_cmp(&z.0).then(x.1.cmp(&z.1)));
        for &(_, a) in gains.iter().take(need) {
            y[a] = if grad[a] > 0.0 { lo } else { hi };
        }

        let gap: f64 = (0..m).map(|a| grad[a] * (beta[a] - y[a])).sum();
        best = best.max(value - gap);
        if gap <= 1e-14 * value.abs().max(1.0) {
            break;
        }
        for a in 0..m {
            dir[a] = y[a] - beta[a];
        }
        for a in 0..m {
            s_dir[a] = (0..m).map(|b| s(a, b) * dir[b]).sum();
        }
        let curvature: f64 = (0..m).map(|a| dir[a] * s_dir[a]).sum();
        let step = if curvature > 0.0 {
            (gap / (2.0 * curvature)).min(1.0)
        } else {
            1.0
        };
        for a in 0..m {
            beta[a] += step * dir[a];
            s_beta[a] += step * s_dir[a];
        }
    }
    best
}

/// Index-order iterator over all `k`-subsets, used by tests and callers that
/// want owned subsets.
pub fn all_subsets(pool: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > pool.len() {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&t| pool[t]).collect());
        if !next_combination(&mut idx, pool.len()) {
            return out;
        }
    }
}
