//! Recovered graphs and the inputs the recovery algorithms accept.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};

use crate::error::{GgmError, Result};
use crate::model::{edge, Edge};
use crate::sampling::{empirical_covariance, CovarianceEstimate, SampleSet};

/// Either raw samples (covariance formed in their mean mode) or a covariance
/// matrix directly, which is how the population oracle is run.
#[derive(Debug, Clone, Copy)]
pub enum RecoveryInput<'a> {
    Samples(&'a SampleSet),
    Covariance(&'a CovarianceEstimate),
}

impl<'a> From<&'a SampleSet> for RecoveryInput<'a> {
    fn from(s: &'a SampleSet) -> Self {
        RecoveryInput::Samples(s)
    }
}

impl<'a> From<&'a CovarianceEstimate> for RecoveryInput<'a> {
    fn from(c: &'a CovarianceEstimate) -> Self {
        RecoveryInput::Covariance(c)
    }
}

impl<'a> RecoveryInput<'a> {
    pub fn covariance(self) -> Result<Cow<'a, CovarianceEstimate>> {
        match self {
            RecoveryInput::Samples(s) => Ok(Cow::Owned(empirical_covariance(s)?)),
            RecoveryInput::Covariance(c) => Ok(Cow::Borrowed(c)),
        }
    }
}

/// How the `kappa_hat` map is keyed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrengthKind {
    /// `(i, j)` holds the estimate seen from vertex `i`.
    Directed,
    /// `(low, high)` holds one symmetric estimate per pair.
    Symmetric,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub no_passing_set: Vec<usize>,
    /// Pairs where exactly one endpoint selected the other.
    pub asymmetric_pairs: Vec<Edge>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphEstimate {
    pub p: usize,
    pub edges: BTreeSet<Edge>,
    /// Per-vertex neighborhoods, ascending.
    pub neighborhoods: Vec<Vec<usize>>,
    pub kappa_hat: BTreeMap<(usize, usize), f64>,
    pub strength_kind: StrengthKind,
    pub diagnostics: Diagnostics,
}

impl GraphEstimate {
    /// Symmetric strength estimate for a pair; 0 when nothing was estimated.
    /// Directed estimates are combined by their geometric mean.
    pub fn pair_strength(&self, i: usize, j: usize) -> f64 {
        match self.strength_kind {
            StrengthKind::Symmetric => self.kappa_hat.get(&edge(i, j)).copied().unwrap_or(0.0),
            StrengthKind::Directed => {
                let a = self.kappa_hat.get(&(i, j)).copied().unwrap_or(0.0);
                let b = self.kappa_hat.get(&(j, i)).copied().unwrap_or(0.0);
                (a * b).sqrt()
            }
        }
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&edge(i, j))
    }
}

/// Shared parameter checks for the recovery entry points.
pub(crate) fn check_recovery_params(p: usize, d: usize, kappa: f64) -> Result<()> {
    if d == 0 || d + 1 > p {
        return Err(GgmError::DomainError(format!(
            "degree bound must satisfy 1 <= d <= p - 1, got d={d}, p={p}"
        )));
    }
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(GgmError::DomainError(format!(
            "kappa must lie in (0, 1], got {kappa}"
        )));
    }
    Ok(())
}

/// Edge `(i, j)` iff each endpoint lists the other.
pub(crate) fn symmetrize_and(neighborhoods: &[Vec<usize>]) -> (BTreeSet<Edge>, Vec<Edge>) {
    let mut edges = BTreeSet::new();
    let mut asymmetric = Vec::new();
    let p = neighborhoods.len();
    for i in 0..p {
        for j in (i + 1)..p {
            let ij = neighborhoods[i].contains(&j);
            let ji = neighborhoods[j].contains(&i);
            if ij && ji {
                edges.insert((i, j));
            } else if ij || ji {
                asymmetric.push((i, j));
            }
        }
    }
    (edges, asymmetric)
}
