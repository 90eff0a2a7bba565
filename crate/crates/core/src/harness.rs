//! Experiment sweeps: build a model per sweep point and trial, draw samples,
//! run a recovery algorithm and tabulate the outcome.
//!
//! Trial `t` uses seed `base_seed + t` for both its samples and, for
//! random-graph families, its topology (the two draws use separate RNG
//! streams). Records come back ordered by sweep index and trial, so output
//! does not depend on the number of worker threads.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds;
use crate::dice::{dice, DiceOptions};
use crate::error::{GgmError, Result};
use crate::graph::{GraphEstimate, RecoveryInput};
use crate::model::{build_instance, Edge, GgmInstance, ModelFamily};
use crate::regression::L0Strategy;
use crate::sampling::{empirical_covariance, CovarianceEstimate, MeanMode, Sampler};
use crate::slice::slice;

/// Environment variable read for the default worker count.
pub const JOBS_ENV: &str = "GGM_JOBS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    FailureVsSigma,
    ScatterAtSigma,
    SampleComplexityCurve,
    PopulationExactness,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Dice,
    #[default]
    Slice,
}

/// How sample-complexity sweep values are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleScale {
    /// The value is `n` itself.
    #[default]
    Absolute,
    /// `n = ceil(value × planned sample size)`, planned per instance.
    BoundMultiple,
}

/// A recovery procedure the harness can drive. Implement this to compare
/// other estimators under the same sweep.
pub trait RecoveryAlgorithm: Send + Sync {
    fn name(&self) -> &str;
    fn recover(&self, input: RecoveryInput<'_>, d: usize, kappa: f64) -> Result<GraphEstimate>;
    /// Sample size guaranteeing recovery with probability `1 − delta`, if known.
    fn planned_samples(&self, _p: usize, _d: usize, _kappa: f64, _delta: f64) -> Option<Result<u64>> {
        None
    }
}

pub struct DiceRecovery(pub L0Strategy);
pub struct SliceRecovery(pub L0Strategy);

impl RecoveryAlgorithm for DiceRecovery {
    fn name(&self) -> &str {
        "dice"
    }
    fn recover(&self, input: RecoveryInput<'_>, d: usize, kappa: f64) -> Result<GraphEstimate> {
        dice(input, d, kappa, DiceOptions { strategy: self.0 })
    }
    fn planned_samples(&self, p: usize, d: usize, kappa: f64, delta: f64) -> Option<Result<u64>> {
        Some(bounds::dice_sample_bound(p, d, kappa, delta))
    }
}

impl RecoveryAlgorithm for SliceRecovery {
    fn name(&self) -> &str {
        "slice"
    }
    fn recover(&self, input: RecoveryInput<'_>, d: usize, kappa: f64) -> Result<GraphEstimate> {
        slice(input, d, kappa, self.0)
    }
    fn planned_samples(&self, p: usize, d: usize, kappa: f64, delta: f64) -> Option<Result<u64>> {
        Some(bounds::slice_sample_bound(p, d, kappa, delta))
    }
}

impl Algorithm {
    pub fn with_strategy(self, strategy: L0Strategy) -> Arc<dyn RecoveryAlgorithm> {
        match self {
            Algorithm::Dice => Arc::new(DiceRecovery(strategy)),
            Algorithm::Slice => Arc::new(SliceRecovery(strategy)),
        }
    }
}

fn default_trials() -> usize {
    50
}
fn default_delta() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub family: ModelFamily,
    #[serde(default)]
    pub algorithm: Algorithm,
    #[serde(default)]
    pub strategy: L0Strategy,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// σ² values, or sample sizes for the sample-complexity curve.
    #[serde(default)]
    pub sweep: Vec<f64>,
    #[serde(default)]
    pub sample_scale: SampleScale,
    /// Sample size when it is not the sweep variable.
    #[serde(default)]
    pub n: Option<usize>,
    /// Degree bound handed to the algorithm; defaults to the model's degree.
    #[serde(default)]
    pub d: Option<usize>,
    /// Strength threshold; defaults to the model's minimum normalized strength.
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Run on the exact covariance instead of samples.
    #[serde(default)]
    pub population: bool,
    #[serde(default)]
    pub mean_mode: MeanMode,
    #[serde(default)]
    pub jobs: Option<usize>,
    /// Record per-trial wall-clock time (makes output nondeterministic).
    #[serde(default)]
    pub timing: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind, family: ModelFamily) -> Self {
        Self {
            experiment,
            family,
            algorithm: Algorithm::default(),
            strategy: L0Strategy::default(),
            trials: default_trials(),
            base_seed: 0,
            sweep: Vec::new(),
            sample_scale: SampleScale::default(),
            n: None,
            d: None,
            kappa: None,
            delta: default_delta(),
            population: false,
            mean_mode: MeanMode::default(),
            jobs: None,
            timing: false,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GgmError::InvalidConfig(m.into()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.jobs == Some(0) {
            return bad("jobs must be at least 1");
        }
        self.family.validate()?;
        let triangle = matches!(self.family, ModelFamily::TriangleCloud { .. });
        match self.experiment {
            ExperimentKind::FailureVsSigma | ExperimentKind::ScatterAtSigma => {
                if !triangle {
                    return bad("sigma sweeps need the triangle-cloud family");
                }
                if self.experiment == ExperimentKind::FailureVsSigma && self.sweep.is_empty() {
                    return bad("sweep over sigma2 must be nonempty");
                }
                if self.experiment == ExperimentKind::ScatterAtSigma && self.sweep.len() > 1 {
                    return bad("scatter takes a single sigma2 value");
                }
                if self.sweep.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                    return bad("sigma2 values must be positive");
                }
                if !self.population && self.n.is_none() {
                    return bad("sample size n is required unless population mode is set");
                }
            }
            ExperimentKind::SampleComplexityCurve => {
                if self.sweep.is_empty() {
                    return bad("sweep over sample sizes must be nonempty");
                }
                if self.sweep.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                    return bad("sample-size sweep values must be positive");
                }
            }
            ExperimentKind::PopulationExactness => {
                if !self.sweep.is_empty() && !triangle {
                    return bad("a sweep in population mode is only defined for sigma2");
                }
            }
        }
        if let Some(k) = self.kappa {
            if !(k > 0.0 && k <= 1.0) {
                return bad("kappa must lie in (0, 1]");
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta must lie in (0, 1)");
        }
        Ok(())
    }

    fn sweep_param(&self) -> &'static str {
        match self.experiment {
            ExperimentKind::FailureVsSigma | ExperimentKind::ScatterAtSigma => "sigma2",
            ExperimentKind::SampleComplexityCurve => match self.sample_scale {
                SampleScale::Absolute => "n",
                SampleScale::BoundMultiple => "n_over_bound",
            },
            ExperimentKind::PopulationExactness if !self.sweep.is_empty() => "sigma2",
            ExperimentKind::PopulationExactness => "none",
        }
    }

    fn sweep_points(&self) -> Vec<f64> {
        match (self.experiment, &self.family) {
            (ExperimentKind::ScatterAtSigma, ModelFamily::TriangleCloud { sigma2, .. })
                if self.sweep.is_empty() =>
            {
                vec![*sigma2]
            }
            (ExperimentKind::PopulationExactness, _) if self.sweep.is_empty() => vec![0.0],
            _ => self.sweep.clone(),
        }
    }

    fn uses_population(&self) -> bool {
        self.population || self.experiment == ExperimentKind::PopulationExactness
    }

    fn resolved_jobs(&self) -> usize {
        self.jobs
            .or_else(|| std::env::var(JOBS_ENV).ok()?.parse().ok())
            .filter(|&j| j > 0)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

/// Outcome of one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub sweep_param: String,
    pub sweep_value: f64,
    pub trial: usize,
    pub seed: u64,
    pub exact_recovery: bool,
    pub failure_criterion: bool,
    pub kappa_hat_12: Option<f64>,
    pub kappa_hat_14: Option<f64>,
    pub wallclock_ms: Option<f64>,
    /// Samples used; `None` in population mode.
    #[serde(skip)]
    pub n: Option<usize>,
    #[serde(skip)]
    pub kappa_used: f64,
    #[serde(skip)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub sweep_value: f64,
    pub trials: usize,
    pub failures: usize,
    pub failure_probability: f64,
    pub exact_recoveries: usize,
    pub recovery_rate: f64,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub algorithm: String,
    pub sweep_param: String,
    pub records: Vec<TrialRecord>,
    pub summaries: Vec<SweepSummary>,
}

impl ExperimentReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.records {
            out.serialize(r)?;
        }
        if self.records.is_empty() {
            out.write_record([
                "sweep_param",
                "sweep_value",
                "trial",
                "seed",
                "exact_recovery",
                "failure_criterion",
                "kappa_hat_12",
                "kappa_hat_14",
                "wallclock_ms",
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| GgmError::Format(e.to_string()))
    }
}

/// Pieces of a trial that depend only on the sweep point.
struct SweepPoint {
    value: f64,
    /// Shared model and sampler when the model does not vary per trial.
    fixed: Option<(GgmInstance, Option<Sampler>)>,
}

fn family_at(config: &ExperimentConfig, value: f64, seed: u64) -> ModelFamily {
    let mut family = config.family.clone();
    let sigma_swept = config.sweep_param() == "sigma2";
    match &mut family {
        ModelFamily::TriangleCloud { sigma2, .. } if sigma_swept => *sigma2 = value,
        ModelFamily::RegularRandom { seed: s, .. } => *s = seed,
        _ => {}
    }
    family
}

fn varies_per_trial(config: &ExperimentConfig) -> bool {
    matches!(config.family, ModelFamily::RegularRandom { .. })
}

fn trial_seed(config: &ExperimentConfig, trial: usize) -> u64 {
    config.base_seed.wrapping_add(trial as u64)
}

fn pair_strength(g: &GraphEstimate, i: usize, j: usize) -> Option<f64> {
    (i < g.p && j < g.p).then(|| g.pair_strength(i, j))
}

struct Truth {
    edges: BTreeSet<Edge>,
    triangle: bool,
    p: usize,
}

fn run_trial(
    config: &ExperimentConfig,
    algo: &dyn RecoveryAlgorithm,
    point: &SweepPoint,
    trial: usize,
) -> TrialRecord {
    let seed = trial_seed(config, trial);
    let start = Instant::now();
    let mut record = TrialRecord {
        sweep_param: config.sweep_param().to_string(),
        sweep_value: point.value,
        trial,
        seed,
        exact_recovery: false,
        failure_criterion: true,
        kappa_hat_12: None,
        kappa_hat_14: None,
        wallclock_ms: None,
        n: None,
        kappa_used: f64::NAN,
        error: None,
    };
    let outcome = (|| -> Result<(GraphEstimate, Truth)> {
        let owned;
        let (instance, sampler) = match &point.fixed {
            Some((m, s)) => (m, s.as_ref()),
            None => {
                owned = build_instance(&family_at(config, point.value, seed))?;
                (&owned, None)
            }
        };
        let d = config.d.unwrap_or(instance.d).max(1);
        let kappa = match config.kappa {
            Some(k) => k,
            None if instance.kappa > 0.0 => instance.kappa,
            None => return Err(GgmError::EmptyGraph),
        };
        record.kappa_used = kappa;
        let graph = if config.uses_population() {
            algo.recover(RecoveryInput::Covariance(&CovarianceEstimate::population(instance)), d, kappa)?
        } else {
            let n = sample_size(config, algo, instance, d, kappa, point.value)?;
            record.n = Some(n);
            let mut samples = match sampler {
                Some(s) => s.sample(n, seed)?,
                None => Sampler::new(instance)?.sample(n, seed)?,
            };
            samples.mean_mode = config.mean_mode;
            let cov = empirical_covariance(&samples)?;
            algo.recover(RecoveryInput::Covariance(&cov), d, kappa)?
        };
        let truth = Truth {
            edges: instance.edges.clone(),
            triangle: matches!(instance.family, Some(ModelFamily::TriangleCloud { .. })),
            p: instance.p,
        };
        Ok((graph, truth))
    })();

    match outcome {
        Ok((graph, truth)) => {
            record.exact_recovery = graph.edges == truth.edges;
            if truth.triangle && truth.p >= 4 {
                let k12 = pair_strength(&graph, 0, 1);
                let k14 = pair_strength(&graph, 0, 3);
                record.kappa_hat_12 = k12;
                record.kappa_hat_14 = k14;
                record.failure_criterion = k12 <= k14;
            } else {
                record.failure_criterion = !record.exact_recovery;
            }
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    if config.timing {
        record.wallclock_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    record
}

fn sample_size(
    config: &ExperimentConfig,
    algo: &dyn RecoveryAlgorithm,
    instance: &GgmInstance,
    d: usize,
    kappa: f64,
    value: f64,
) -> Result<usize> {
    let floor = 2 * d + 2;
    let n = match (config.experiment, config.sample_scale) {
        (ExperimentKind::SampleComplexityCurve, SampleScale::Absolute) => value.round() as usize,
        (ExperimentKind::SampleComplexityCurve, SampleScale::BoundMultiple) => {
            let bound = algo
                .planned_samples(instance.p, d, kappa, config.delta)
                .ok_or_else(|| {
                    GgmError::InvalidConfig(format!("{} has no sample-size bound", algo.name()))
                })??;
            (value * bound as f64).ceil() as usize
        }
        _ => config
            .n
            .ok_or_else(|| GgmError::InvalidConfig("sample size n is required".into()))?,
    };
    Ok(n.max(floor))
}

fn summarize(points: &[f64], records: &[TrialRecord], trials: usize) -> Vec<SweepSummary> {
    points
        .iter()
        .enumerate()
        .map(|(k, &value)| {
            let rows = &records[k * trials..(k + 1) * trials];
            let failures = rows.iter().filter(|r| r.failure_criterion).count();
            let exact = rows.iter().filter(|r| r.exact_recovery).count();
            SweepSummary {
                sweep_value: value,
                trials,
                failures,
                failure_probability: failures as f64 / trials as f64,
                exact_recoveries: exact,
                recovery_rate: exact as f64 / trials as f64,
                errors: rows.iter().filter(|r| r.error.is_some()).count(),
            }
        })
        .collect()
}

/// Runs any experiment kind with a caller-supplied algorithm.
pub fn run_with(config: &ExperimentConfig, algo: &dyn RecoveryAlgorithm) -> Result<ExperimentReport> {
    config.validate()?;
    let points: Vec<SweepPoint> = config
        .sweep_points()
        .into_iter()
        .map(|value| {
            let fixed = if varies_per_trial(config) {
                None
            } else {
                let m = build_instance(&family_at(config, value, config.base_seed))?;
                let s = if config.uses_population() {
                    None
                } else {
                    Some(Sampler::new(&m)?)
                };
                Some((m, s))
            };
            Ok(SweepPoint { value, fixed })
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|k| (0..config.trials).map(move |t| (k, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.resolved_jobs())
        .build()
        .map_err(|e| GgmError::InvalidConfig(e.to_string()))?;
    let records: Vec<TrialRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|&(k, t)| run_trial(config, algo, &points[k], t))
            .collect()
    });

    let values: Vec<f64> = points.iter().map(|p| p.value).collect();
    Ok(ExperimentReport {
        algorithm: algo.name().to_string(),
        sweep_param: config.sweep_param().to_string(),
        summaries: summarize(&values, &records, config.trials),
        records,
    })
}

fn run_kind(config: &ExperimentConfig, kind: ExperimentKind) -> Result<ExperimentReport> {
    if config.experiment != kind {
        return Err(GgmError::InvalidConfig(format!(
            "config describes {:?}, not {kind:?}",
            config.experiment
        )));
    }
    run_with(config, &*config.algorithm.with_strategy(config.strategy))
}

/// Failure probability of the triangle-cloud criterion `κ̂_12 ≤ κ̂_14` per σ².
pub fn run_failure_vs_sigma(config: &ExperimentConfig) -> Result<ExperimentReport> {
    run_kind(config, ExperimentKind::FailureVsSigma)
}

/// Per-trial `(κ̂_12, κ̂_14)` at one σ².
pub fn run_scatter_at_sigma(config: &ExperimentConfig) -> Result<ExperimentReport> {
    run_kind(config, ExperimentKind::ScatterAtSigma)
}

/// Exact-recovery rate against the sample size.
pub fn run_sample_complexity_curve(config: &ExperimentConfig) -> Result<ExperimentReport> {
    run_kind(config, ExperimentKind::SampleComplexityCurve)
}

/// Exact recovery from the true covariance.
pub fn run_population_exactness(config: &ExperimentConfig) -> Result<ExperimentReport> {
    run_kind(config, ExperimentKind::PopulationExactness)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    run_with(config, &*config.algorithm.with_strategy(config.strategy))
}
