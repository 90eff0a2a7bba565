//! ℓ0-constrained regression per vertex followed by a product-and-threshold
//! edge rule: `(i, j)` is an edge iff `sqrt(|β̂_ij β̂_ji|) > κ/2`.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::Result;
use crate::graph::{check_recovery_params, Diagnostics, GraphEstimate, RecoveryInput, StrengthKind};
use crate::model::edge;
use crate::regression::{l0_least_squares, L0Solution, L0Strategy};

/// Per-vertex ℓ0 solutions plus a dense view of the coefficients, with
/// `beta_full[(i, j)] = 0` whenever `j` is outside the support of `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceCoefficients {
    pub solutions: Vec<L0Solution>,
    pub beta_full: DMatrix<f64>,
}

impl SliceCoefficients {
    pub fn p(&self) -> usize {
        self.beta_full.nrows()
    }

    /// `sqrt(|β̂_ij β̂_ji|)`.
    pub fn link_strength(&self, i: usize, j: usize) -> f64 {
        (self.beta_full[(i, j)] * self.beta_full[(j, i)]).abs().sqrt()
    }

    fn in_support(&self, i: usize, j: usize) -> bool {
        self.solutions[i].support.binary_search(&j).is_ok()
    }
}

pub fn slice_phase1(sigma: &DMatrix<f64>, d: usize, strategy: L0Strategy) -> Result<SliceCoefficients> {
    let p = sigma.nrows();
    let solutions: Vec<L0Solution> = (0..p)
        .into_par_iter()
        .map(|i| l0_least_squares(sigma, i, d, strategy))
        .collect::<Result<_>>()?;
    let mut beta_full = DMatrix::zeros(p, p);
    for sol in &solutions {
        for (&j, &b) in sol.support.iter().zip(&sol.beta) {
            beta_full[(sol.target, j)] = b;
        }
    }
    Ok(SliceCoefficients {
        solutions,
        beta_full,
    })
}

/// Thresholds the link strengths. `kappa_hat` holds every pair where at least
/// one direction has the other vertex in its support.
pub fn slice_phase2(coeffs: &SliceCoefficients, kappa: f64) -> Result<GraphEstimate> {
    let p = coeffs.p();
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(crate::GgmError::DomainError(format!(
            "kappa must lie in (0, 1], got {kappa}"
        )));
    }
    let mut kappa_hat = BTreeMap::new();
    let mut edges = BTreeSet::new();
    for i in 0..p {
        for j in (i + 1)..p {
            if !(coeffs.in_support(i, j) || coeffs.in_support(j, i)) {
                continue;
            }
            let k = coeffs.link_strength(i, j);
            kappa_hat.insert(edge(i, j), k);
            if k > kappa / 2.0 {
                edges.insert(edge(i, j));
            }
        }
    }
    let mut neighborhoods = vec![Vec::new(); p];
    for &(i, j) in &edges {
        neighborhoods[i].push(j);
        neighborhoods[j].push(i);
    }
    for n in &mut neighborhoods {
        n.sort_unstable();
    }
    Ok(GraphEstimate {
        p,
        edges,
        neighborhoods,
        kappa_hat,
        strength_kind: StrengthKind::Symmetric,
        diagnostics: Diagnostics::default(),
    })
}

pub fn slice<'a>(
    input: impl Into<RecoveryInput<'a>>,
    d: usize,
    kappa: f64,
    strategy: L0Strategy,
) -> Result<GraphEstimate> {
    let cov = input.into().covariance()?;
    check_recovery_params(cov.p(), d, kappa)?;
    let coeffs = slice_phase1(&cov.sigma_hat, d, strategy)?;
    slice_phase2(&coeffs, kappa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_instance, ModelFamily};
    use crate::sampling::{sample, CovarianceEstimate};
    use approx::assert_abs_diff_eq;

    fn cloud(p: usize, sigma2: f64) -> crate::model::GgmInstance {
        build_instance(&ModelFamily::TriangleCloud {
            kappa: 0.4,
            epsilon: 0.01,
            sigma2,
            p,
        })
        .unwrap()
    }

    #[test]
    fn population_coefficients_match_precision_ratios() {
        let m = cloud(6, 1000.0);
        let c = slice_phase1(&m.sigma, 2, L0Strategy::Exhaustive).unwrap();
        assert_eq!(c.solutions[1].support, vec![0, 2]);
        // β_ij = -Θ_ij / Θ_ii up to the sign convention of the regression
        assert_abs_diff_eq!(c.beta_full[(1, 0)].abs(), 0.4, epsilon = 1e-9);
        assert_abs_diff_eq!(c.beta_full[(1, 2)].abs(), 0.99, epsilon = 1e-9);
        for i in 0..6 {
            for j in 0..6 {
                if !c.solutions[i].support.contains(&j) {
                    assert_eq!(c.beta_full[(i, j)], 0.0);
                }
            }
        }
        let g = slice_phase2(&c, 0.4).unwrap();
        assert_eq!(g.edges, m.edges);
        assert_abs_diff_eq!(g.pair_strength(0, 1), 0.4, epsilon = 1e-9);
        assert_eq!(g.pair_strength(0, 3), 0.0);
    }

    #[test]
    fn identity_gives_zero_coefficients_and_no_edges() {
        let id = DMatrix::identity(5, 5);
        let c = slice_phase1(&id, 2, L0Strategy::Exhaustive).unwrap();
        assert_eq!(c.solutions[0].support, vec![1, 2]);
        assert_eq!(c.solutions[3].support, vec![0, 1]);
        assert!(c.beta_full.iter().all(|&b| b == 0.0));
        assert!(slice_phase2(&c, 0.1).unwrap().edges.is_empty());
    }

    #[test]
    fn edge_rule_is_strict() {
        let mut beta_full = DMatrix::zeros(3, 3);
        beta_full[(0, 1)] = 0.2;
        beta_full[(1, 0)] = 0.2;
        let solutions = (0..3)
            .map(|i| L0Solution {
                target: i,
                support: if i == 2 { vec![0] } else { vec![1 - i] },
                beta: vec![if i == 2 { 0.0 } else { 0.2 }],
                loss: 1.0,
                strategy_used: L0Strategy::Exhaustive,
            })
            .collect();
        let c = SliceCoefficients {
            solutions,
            beta_full,
        };
        assert!(slice_phase2(&c, 0.4).unwrap().edges.is_empty());
        assert_eq!(slice_phase2(&c, 0.39).unwrap().edges.len(), 1);
    }

    #[test]
    fn strategies_agree_on_random_instances() {
        for seed in 0..5 {
            let m = build_instance(&ModelFamily::RegularRandom {
                p: 12,
                d: 3,
                kappa_min: 0.2,
                kappa_max: 0.4,
                seed,
            })
            .unwrap();
            let s = sample(&m, 200, seed + 100).unwrap();
            let cov = crate::sampling::empirical_covariance(&s).unwrap();
            let a = slice_phase1(&cov.sigma_hat, 3, L0Strategy::Exhaustive).unwrap();
            let b = slice_phase1(&cov.sigma_hat, 3, L0Strategy::BranchAndBound).unwrap();
            for (x, y) in a.solutions.iter().zip(&b.solutions) {
                assert_eq!(x.support, y.support);
                assert!((x.loss - y.loss).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn population_recovery_on_small_families() {
        for family in [
            ModelFamily::ThreeNode {
                kappa0: 0.3,
                epsilon: 0.1,
            },
            ModelFamily::FourNode {
                kappa: 0.3,
                epsilon: 0.1,
            },
        ] {
            let m = build_instance(&family).unwrap();
            let g = slice(&CovarianceEstimate::population(&m), 2, m.kappa, L0Strategy::Exhaustive)
                .unwrap();
            assert_eq!(g.edges, m.edges);
        }
    }

    #[test]
    fn finite_sample_scatter_point() {
        let m = cloud(200, 1000.0);
        let s = sample(&m, 175, 11).unwrap();
        let g = slice(&s, 2, 0.4, L0Strategy::Exhaustive).unwrap();
        assert!(g.pair_strength(0, 1) > 0.2);
        assert!(g.pair_strength(0, 3) < g.pair_strength(0, 1));
    }
}
