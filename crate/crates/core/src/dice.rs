//! Degree-constrained recovery in three phases.
//!
//! 1. For every vertex, the smallest size-`d` conditional variance estimates
//!    `1/Θ̂_ii`.
//! 2. Candidate neighborhoods `B1` are tested against every disjoint
//!    adversary `B2`: regressing on `B1 ∪ B2`, a candidate passes when every
//!    adversary vertex has `κ̂_ij = |β̂_ij| sqrt(Θ̂_ii / Θ̂_jj) < κ/2`. The first
//!    passing candidate in lexicographic order is kept.
//! 3. One fixed adversary is appended to the kept set and members with
//!    `κ̂_ij > κ/2` form the neighborhood.
//!
//! Neighborhoods are reconciled with an AND rule.
//!
//! When fewer than `d` vertices remain outside `B1 ∪ {i}` the adversaries use
//! all of them, so small graphs (`p < 2d + 1`) are still handled.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{GgmError, Result};
use crate::graph::{
    check_recovery_params, symmetrize_and, Diagnostics, GraphEstimate, RecoveryInput,
    StrengthKind,
};
use crate::regression::{l0_least_squares, L0Strategy, SubsetSolver};
use crate::subsets::{complement, for_each_subset};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DiceOptions {
    /// Solver used for the conditional variance stage.
    pub strategy: L0Strategy,
}

/// Intermediate results, useful for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DiceState {
    pub theta_ii_hat: Vec<f64>,
    /// `B̃_i`, or `None` when no candidate passed.
    pub passed_sets: Vec<Option<Vec<usize>>>,
    /// `κ̂_ij` from the elimination stage, keyed by `(i, j)`.
    pub kappa_hat: BTreeMap<(usize, usize), f64>,
}

/// `Θ̂_ii = 1 / min_{|A| = d} L*_i(A, Σ̂)` for every vertex.
pub fn phase1_conditional_variances(
    sigma: &DMatrix<f64>,
    d: usize,
    strategy: L0Strategy,
) -> Result<Vec<f64>> {
    let p = sigma.nrows();
    (0..p)
        .into_par_iter()
        .map(|i| {
            let sol = l0_least_squares(sigma, i, d, strategy)?;
            if !(sol.loss > 0.0) || !sol.loss.is_finite() {
                return Err(GgmError::NonPositiveVariance {
                    vertex: i,
                    value: sol.loss,
                });
            }
            Ok(1.0 / sol.loss)
        })
        .collect()
}

/// Scratch for repeated `κ̂` evaluations.
struct KappaScorer<'a> {
    sigma: &'a DMatrix<f64>,
    theta_diag: &'a [f64],
    solver: SubsetSolver,
    union: Vec<usize>,
    beta: Vec<f64>,
}

impl<'a> KappaScorer<'a> {
    fn new(sigma: &'a DMatrix<f64>, theta_diag: &'a [f64]) -> Self {
        Self {
            sigma,
            theta_diag,
            solver: SubsetSolver::new(),
            union: Vec::new(),
            beta: Vec::new(),
        }
    }

    /// Regresses `i` on `b1 ∪ b2` (merged ascending); afterwards
    /// `self.union[t]` has estimate `self.kappa(i, t)`.
    fn regress(&mut self, i: usize, b1: &[usize], b2: &[usize]) -> Result<()> {
        self.union.clear();
        let (mut x, mut y) = (0, 0);
        while x < b1.len() || y < b2.len() {
            if y == b2.len() || (x < b1.len() && b1[x] < b2[y]) {
                self.union.push(b1[x]);
                x += 1;
            } else {
                self.union.push(b2[y]);
                y += 1;
            }
        }
        if self
            .solver
            .coefficients_into(self.sigma, i, &self.union, &mut self.beta)
        {
            Ok(())
        } else {
            Err(GgmError::SingularSubmatrix {
                target: i,
                subset: self.union.clone(),
            })
        }
    }

    fn kappa(&self, i: usize, t: usize) -> f64 {
        let j = self.union[t];
        self.beta[t].abs() * (self.theta_diag[i] / self.theta_diag[j]).sqrt()
    }

    /// Largest `κ̂_ij` over `j ∈ b2` after [`KappaScorer::regress`].
    fn max_over(&self, i: usize, b2: &[usize]) -> f64 {
        let mut worst = 0.0_f64;
        for (t, j) in self.union.iter().enumerate() {
            if b2.binary_search(j).is_ok() {
                worst = worst.max(self.kappa(i, t));
            }
        }
        worst
    }
}

fn check_vertex_sets(p: usize, i: usize, b1: &[usize], b2: &[usize]) -> Result<()> {
    let mut seen = vec![false; p];
    if i >= p {
        return Err(GgmError::DomainError(format!("vertex {i} out of range 0..{p}")));
    }
    seen[i] = true;
    for &v in b1.iter().chain(b2) {
        if v >= p || seen[v] {
            return Err(GgmError::DomainError(format!(
                "sets {b1:?} and {b2:?} must be disjoint, exclude {i} and lie below {p}"
            )));
        }
        seen[v] = true;
    }
    Ok(())
}

fn sorted(v: &[usize]) -> Vec<usize> {
    let mut v = v.to_vec();
    v.sort_unstable();
    v
}

/// `κ̂_ij` for every `j ∈ b1 ∪ b2`, from the regression of `i` on the union.
pub fn estimate_kappa_hat(
    sigma: &DMatrix<f64>,
    theta_ii_hat: &[f64],
    i: usize,
    b1: &[usize],
    b2: &[usize],
) -> Result<BTreeMap<usize, f64>> {
    check_vertex_sets(sigma.nrows(), i, b1, b2)?;
    let mut scorer = KappaScorer::new(sigma, theta_ii_hat);
    scorer.regress(i, &sorted(b1), &sorted(b2))?;
    Ok((0..scorer.union.len())
        .map(|t| (scorer.union[t], scorer.kappa(i, t)))
        .collect())
}

fn adversary_size(p: usize, d: usize, candidate_len: usize) -> usize {
    d.min(p - 1 - candidate_len)
}

/// First size-`d` candidate, in lexicographic order, that no adversary
/// rejects.
pub fn phase2_support_testing(
    sigma: &DMatrix<f64>,
    theta_ii_hat: &[f64],
    i: usize,
    d: usize,
    kappa: f64,
) -> Result<Vec<usize>> {
    let p = sigma.nrows();
    check_recovery_params(p, d, kappa)?;
    let half = kappa / 2.0;
    let pool = complement(p, &[i]);
    let mut scorer = KappaScorer::new(sigma, theta_ii_hat);
    let mut passed: Option<Vec<usize>> = None;
    let mut failure: Option<GgmError> = None;
    let mut rest = Vec::with_capacity(p);

    for_each_subset(&pool, d, |b1| {
        rest.clear();
        rest.extend(pool.iter().copied().filter(|v| b1.binary_search(v).is_err()));
        let size = adversary_size(p, d, b1.len());
        let mut ok = true;
        for_each_subset(&rest, size, |b2| {
            if let Err(e) = scorer.regress(i, b1, b2) {
                failure = Some(e);
                ok = false;
                return false;
            }
            // a tie at exactly κ/2 counts as a rejection
            if scorer.max_over(i, b2) >= half {
                ok = false;
                return false;
            }
            true
        });
        if failure.is_some() {
            return false;
        }
        if ok {
            passed = Some(b1.to_vec());
            return false;
        }
        true
    });

    if let Some(e) = failure {
        return Err(e);
    }
    passed.ok_or(GgmError::NoPassingSet { vertex: i })
}

/// Keeps the members of `candidate` whose strength, estimated alongside the
/// lowest-index adversary, exceeds `κ/2`. Returns the kept vertices and the
/// estimates for every member of `candidate`.
pub fn phase3_eliminate(
    sigma: &DMatrix<f64>,
    theta_ii_hat: &[f64],
    i: usize,
    candidate: &[usize],
    d: usize,
    kappa: f64,
) -> Result<(Vec<usize>, BTreeMap<usize, f64>)> {
    let p = sigma.nrows();
    check_recovery_params(p, d, kappa)?;
    let candidate = sorted(candidate);
    let size = adversary_size(p, d, candidate.len());
    let adversary: Vec<usize> = (0..p)
        .filter(|v| *v != i && candidate.binary_search(v).is_err())
        .take(size)
        .collect();
    check_vertex_sets(p, i, &candidate, &adversary)?;
    let mut scorer = KappaScorer::new(sigma, theta_ii_hat);
    scorer.regress(i, &candidate, &adversary)?;
    let mut kept = Vec::new();
    let mut strengths = BTreeMap::new();
    for (t, &j) in scorer.union.iter().enumerate() {
        if candidate.binary_search(&j).is_ok() {
            let k = scorer.kappa(i, t);
            strengths.insert(j, k);
            if k > kappa / 2.0 {
                kept.push(j);
            }
        }
    }
    Ok((kept, strengths))
}

/// Passed candidate, kept neighbors and their strengths for one vertex.
type VertexResult = (Vec<usize>, Vec<usize>, BTreeMap<usize, f64>);

/// Runs all three phases and returns the intermediate state.
pub fn dice_state(
    sigma: &DMatrix<f64>,
    d: usize,
    kappa: f64,
    options: DiceOptions,
) -> Result<(DiceState, Vec<Vec<usize>>)> {
    let p = sigma.nrows();
    check_recovery_params(p, d, kappa)?;
    let theta = phase1_conditional_variances(sigma, d, options.strategy)?;

    let per_vertex: Vec<Result<Option<VertexResult>>> = (0..p)
        .into_par_iter()
        .map(|i| match phase2_support_testing(sigma, &theta, i, d, kappa) {
            Ok(candidate) => {
                let (kept, strengths) = phase3_eliminate(sigma, &theta, i, &candidate, d, kappa)?;
                Ok(Some((candidate, kept, strengths)))
            }
            Err(GgmError::NoPassingSet { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect();

    let mut passed_sets = Vec::with_capacity(p);
    let mut neighborhoods = Vec::with_capacity(p);
    let mut kappa_hat = BTreeMap::new();
    for (i, r) in per_vertex.into_iter().enumerate() {
        match r? {
            Some((candidate, kept, strengths)) => {
                passed_sets.push(Some(candidate));
                neighborhoods.push(kept);
                for (j, k) in strengths {
                    kappa_hat.insert((i, j), k);
                }
            }
            None => {
                passed_sets.push(None);
                neighborhoods.push(Vec::new());
            }
        }
    }
    Ok((
        DiceState {
            theta_ii_hat: theta,
            passed_sets,
            kappa_hat,
        },
        neighborhoods,
    ))
}

/// Recovers the graph. Vertices without a passing candidate get an empty
/// neighborhood and are listed in the diagnostics.
pub fn dice<'a>(
    input: impl Into<RecoveryInput<'a>>,
    d: usize,
    kappa: f64,
    options: DiceOptions,
) -> Result<GraphEstimate> {
    let cov = input.into().covariance()?;
    let (state, neighborhoods) = dice_state(&cov.sigma_hat, d, kappa, options)?;
    let (edges, asymmetric_pairs) = symmetrize_and(&neighborhoods);
    let no_passing_set = state
        .passed_sets
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.is_none().then_some(i))
        .collect();
    Ok(GraphEstimate {
        p: cov.p(),
        edges,
        neighborhoods,
        kappa_hat: state.kappa_hat,
        strength_kind: StrengthKind::Directed,
        diagnostics: Diagnostics {
            no_passing_set,
            asymmetric_pairs,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_instance, GgmInstance, ModelFamily};
    use crate::sampling::CovarianceEstimate;
    use crate::subsets::for_each_subset;
    use approx::assert_abs_diff_eq;

    fn cloud(p: usize) -> GgmInstance {
        build_instance(&ModelFamily::TriangleCloud {
            kappa: 0.4,
            epsilon: 0.01,
            sigma2: 1000.0,
            p,
        })
        .unwrap()
    }

    fn true_diag(m: &GgmInstance) -> Vec<f64> {
        (0..m.p).map(|i| m.theta[(i, i)]).collect()
    }

    #[test]
    fn phase1_is_exact_on_population() {
        let m = cloud(9);
        let theta = phase1_conditional_variances(&m.sigma, 2, L0Strategy::Exhaustive).unwrap();
        for i in 0..9 {
            assert!((theta[i] - m.theta[(i, i)]).abs() < 1e-9 * m.theta[(i, i)].max(1.0));
        }
        let id = DMatrix::identity(3, 3);
        assert_eq!(
            phase1_conditional_variances(&id, 1, L0Strategy::Exhaustive).unwrap(),
            vec![1.0; 3]
        );
    }

    #[test]
    fn kappa_hat_on_population() {
        let m = cloud(8);
        let diag = true_diag(&m);
        let k = estimate_kappa_hat(&m.sigma, &diag, 0, &[1, 2], &[3, 4]).unwrap();
        assert_abs_diff_eq!(k[&1], 0.4, epsilon = 1e-9);
        assert_abs_diff_eq!(k[&2], 0.4, epsilon = 1e-9);
        assert_abs_diff_eq!(k[&3], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(k[&4], 0.0, epsilon = 1e-9);

        // swapped roles: the adversary now exposes both neighbors
        let k = estimate_kappa_hat(&m.sigma, &diag, 0, &[3, 4], &[1, 2]).unwrap();
        let worst = k[&1].max(k[&2]);
        assert_abs_diff_eq!(worst, 0.4, epsilon = 1e-9);
        assert!(worst > 0.2);

        let id = DMatrix::identity(6, 6);
        let k = estimate_kappa_hat(&id, &[1.0; 6], 0, &[1, 2], &[3, 4]).unwrap();
        assert!(k.values().all(|&v| v == 0.0));
        assert!(estimate_kappa_hat(&id, &[1.0; 6], 0, &[1, 2], &[2, 4]).is_err());
    }

    #[test]
    fn phase2_and_phase3_on_population() {
        let m = cloud(8);
        let diag = true_diag(&m);
        assert_eq!(
            phase2_support_testing(&m.sigma, &diag, 0, 2, 0.4).unwrap(),
            vec![1, 2]
        );
        let (kept, _) = phase3_eliminate(&m.sigma, &diag, 0, &[1, 2], 2, 0.4).unwrap();
        assert_eq!(kept, vec![1, 2]);
        // independent node: nothing survives elimination
        let cand = phase2_support_testing(&m.sigma, &diag, 3, 2, 0.4).unwrap();
        let (kept, strengths) = phase3_eliminate(&m.sigma, &diag, 3, &cand, 2, 0.4).unwrap();
        assert!(kept.is_empty());
        assert!(strengths.values().all(|&k| k < 1e-9));
        // one true neighbor among non-neighbors
        let (kept, _) = phase3_eliminate(&m.sigma, &diag, 1, &[0, 5], 2, 0.4).unwrap();
        assert_eq!(kept, vec![0]);
    }

    #[test]
    fn diagonal_population_passes_first_candidate() {
        let id = DMatrix::identity(7, 7);
        assert_eq!(
            phase2_support_testing(&id, &[1.0; 7], 4, 2, 0.3).unwrap(),
            vec![0, 1]
        );
        let g = dice(&CovarianceEstimate::from_matrix(id, None).unwrap(), 2, 0.3, DiceOptions::default())
            .unwrap();
        assert!(g.edges.is_empty());
    }

    #[test]
    fn dice_recovers_triangle_from_population() {
        let m = cloud(7);
        let g = dice(&CovarianceEstimate::population(&m), 2, 0.4, DiceOptions::default()).unwrap();
        assert_eq!(g.edges, m.edges);
        assert!(g.diagnostics.asymmetric_pairs.is_empty());
        assert!(g.neighborhoods.iter().all(|n| n.len() <= 2));
    }

    #[test]
    fn no_passing_set_when_degree_is_underestimated() {
        // vertex 0 has two unrelated neighbors, so with d=1 every candidate
        // leaves one of them for an adversary to expose
        let mut theta = DMatrix::identity(5, 5);
        for j in [1, 2] {
            theta[(0, j)] = 0.4;
            theta[(j, 0)] = 0.4;
        }
        let m = GgmInstance::from_precision(theta, None, None).unwrap();
        let diag = true_diag(&m);
        let r = phase2_support_testing(&m.sigma, &diag, 0, 1, 0.4);
        assert!(matches!(r, Err(GgmError::NoPassingSet { vertex: 0 })));
        let g = dice(&CovarianceEstimate::population(&m), 1, 0.4, DiceOptions::default()).unwrap();
        assert_eq!(g.diagnostics.no_passing_set, vec![0]);
        assert!(g.neighborhoods[0].is_empty());
    }

    #[test]
    fn population_case_analysis_is_exhaustively_sound() {
        for seed in 0..3 {
            let m = build_instance(&ModelFamily::RegularRandom {
                p: 9,
                d: 2,
                kappa_min: 0.2,
                kappa_max: 0.4,
                seed,
            })
            .unwrap();
            let diag = true_diag(&m);
            let half = m.kappa / 2.0;
            for i in 0..m.p {
                let nb = m.neighbors(i);
                let pool = complement(m.p, &[i]);
                for_each_subset(&pool, 2, |b1| {
                    let covers = nb.iter().all(|v| b1.contains(v));
                    let rest: Vec<usize> =
                        pool.iter().copied().filter(|v| !b1.contains(v)).collect();
                    let mut rejected = false;
                    for_each_subset(&rest, 2, |b2| {
                        let k = estimate_kappa_hat(&m.sigma, &diag, i, b1, b2).unwrap();
                        rejected |= b2.iter().any(|j| k[j] >= half);
                        true
                    });
                    assert_eq!(!rejected, covers, "seed {seed} vertex {i} candidate {b1:?}");
                    true
                });
            }
        }
    }

    #[test]
    fn small_graphs_without_full_adversaries() {
        let m = build_instance(&ModelFamily::ThreeNode {
            kappa0: 0.3,
            epsilon: 0.1,
        })
        .unwrap();
        let g = dice(&CovarianceEstimate::population(&m), 2, 0.3, DiceOptions::default()).unwrap();
        assert_eq!(g.edges, m.edges);
        let m = build_instance(&ModelFamily::FourNode {
            kappa: 0.3,
            epsilon: 0.1,
        })
        .unwrap();
        let g = dice(&CovarianceEstimate::population(&m), 2, 0.3, DiceOptions::default()).unwrap();
        assert_eq!(g.edges, m.edges);
    }

    #[test]
    fn deterministic_output() {
        let m = build_instance(&ModelFamily::RegularRandom {
            p: 10,
            d: 2,
            kappa_min: 0.3,
            kappa_max: 0.5,
            seed: 4,
        })
        .unwrap();
        let s = crate::sampling::sample(&m, 400, 2).unwrap();
        let a = dice(&s, 2, m.kappa, DiceOptions::default()).unwrap();
        let b = dice(&s, 2, m.kappa, DiceOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
