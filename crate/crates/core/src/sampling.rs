//! i.i.d. Gaussian draws from a model and the empirical covariance.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{GgmError, Result};
use crate::model::GgmInstance;

/// RNG stream for sample draws (topology uses stream 1).
pub(crate) const SAMPLE_STREAM: u64 = 0;

/// Negative eigenvalues of Σ smaller than this fraction of the largest are
/// clipped to zero; anything more negative is a factorization failure.
const CLIP_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanMode {
    /// Σ̂ = (1/n) Σ_k x^k x^kᵀ.
    #[default]
    KnownZeroMean,
    /// Unbiased estimator around the sample mean.
    Centered,
}

/// `n × p` matrix of draws, row `k` is sample `x^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub data: DMatrix<f64>,
    pub seed: Option<u64>,
    pub mean_mode: MeanMode,
}

impl SampleSet {
    pub fn new(data: DMatrix<f64>, seed: Option<u64>, mean_mode: MeanMode) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(GgmError::InsufficientSamples {
                required: 1,
                got: data.nrows(),
            });
        }
        Ok(Self {
            data,
            seed,
            mean_mode,
        })
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn p(&self) -> usize {
        self.data.ncols()
    }
}

/// Symmetric `p × p` covariance estimate fed to the recovery algorithms.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub sigma_hat: DMatrix<f64>,
    /// `None` for the exact (population) covariance.
    pub n: Option<usize>,
    pub mean_mode: MeanMode,
}

impl CovarianceEstimate {
    /// Exact covariance of the model, the infinite-sample limit.
    pub fn population(instance: &GgmInstance) -> Self {
        Self {
            sigma_hat: instance.sigma.clone(),
            n: None,
            mean_mode: MeanMode::KnownZeroMean,
        }
    }

    /// Wraps a caller-supplied matrix after checking it is square and symmetric.
    pub fn from_matrix(sigma_hat: DMatrix<f64>, n: Option<usize>) -> Result<Self> {
        if sigma_hat.nrows() != sigma_hat.ncols() || sigma_hat.nrows() == 0 {
            return Err(GgmError::Format(format!(
                "covariance must be square, got {}x{}",
                sigma_hat.nrows(),
                sigma_hat.ncols()
            )));
        }
        if crate::linalg::max_asymmetry(&sigma_hat) > 0.0 {
            return Err(GgmError::Format("covariance must be exactly symmetric".into()));
        }
        Ok(Self {
            sigma_hat,
            n,
            mean_mode: MeanMode::KnownZeroMean,
        })
    }

    pub fn p(&self) -> usize {
        self.sigma_hat.nrows()
    }
}

/// Draws from `N(μ, Σ)` using the symmetric square root of Σ. Building one is
/// an eigendecomposition; reuse it across trials on the same model.
#[derive(Debug, Clone)]
pub struct Sampler {
    mean: Vec<f64>,
    /// `V · diag(sqrt λ)`, so `x = μ + factor · z`.
    factor: DMatrix<f64>,
}

impl Sampler {
    pub fn new(instance: &GgmInstance) -> Result<Self> {
        let eig = SymmetricEigen::new(instance.sigma.clone());
        let max = eig.eigenvalues.max();
        if !(max > 0.0) {
            return Err(GgmError::FactorizationFailure(
                "covariance has no positive eigenvalue".into(),
            ));
        }
        let mut roots = eig.eigenvalues.clone();
        for l in roots.iter_mut() {
            if *l < -CLIP_TOLERANCE * max {
                return Err(GgmError::FactorizationFailure(format!(
                    "covariance eigenvalue {l:e} is negative"
                )));
            }
            *l = l.max(0.0).sqrt();
        }
        let factor = eig.eigenvectors * DMatrix::from_diagonal(&roots);
        Ok(Self {
            mean: instance.mu.iter().copied().collect(),
            factor,
        })
    }

    pub fn p(&self) -> usize {
        self.mean.len()
    }

    /// Draws `n` rows. The standard normals are consumed row by row from a
    /// ChaCha8 generator seeded with `seed` on the sample stream.
    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleSet> {
        if n == 0 {
            return Err(GgmError::InsufficientSamples { required: 1, got: 0 });
        }
        let p = self.p();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(SAMPLE_STREAM);
        // z is p × n so that each column is one sample's noise vector
        let mut z = DMatrix::zeros(p, n);
        for k in 0..n {
            for i in 0..p {
                z[(i, k)] = StandardNormal.sample(&mut rng);
            }
        }
        let x = &self.factor * z;
        let data = DMatrix::from_fn(n, p, |k, i| x[(i, k)] + self.mean[i]);
        SampleSet::new(data, Some(seed), MeanMode::KnownZeroMean)
    }
}

/// Draws `n` i.i.d. samples from the model.
pub fn sample(instance: &GgmInstance, n: usize, seed: u64) -> Result<SampleSet> {
    Sampler::new(instance)?.sample(n, seed)
}

/// Empirical covariance in the sample set's mean mode.
pub fn empirical_covariance(samples: &SampleSet) -> Result<CovarianceEstimate> {
    let n = samples.n();
    let x = match samples.mean_mode {
        MeanMode::KnownZeroMean => samples.data.clone(),
        MeanMode::Centered => {
            if n < 2 {
                return Err(GgmError::InsufficientSamples { required: 2, got: n });
            }
            let mut x = samples.data.clone();
            for mut col in x.column_iter_mut() {
                let mean = col.sum() / n as f64;
                col.add_scalar_mut(-mean);
            }
            x
        }
    };
    let denom = match samples.mean_mode {
        MeanMode::KnownZeroMean => n as f64,
        MeanMode::Centered => (n - 1) as f64,
    };
    let mut sigma_hat = x.tr_mul(&x);
    sigma_hat /= denom;
    // the Gram product is symmetric up to rounding; make it exact
    let p = sigma_hat.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            sigma_hat[(j, i)] = sigma_hat[(i, j)];
        }
    }
    Ok(CovarianceEstimate {
        sigma_hat,
        n: Some(n),
        mean_mode: samples.mean_mode,
    })
}
