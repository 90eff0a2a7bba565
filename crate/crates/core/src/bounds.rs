//! Sample-size planning. All logarithms are natural and binomial
//! coefficients are evaluated through `ln Γ`, so nothing overflows for large
//! `p` and `d`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{GgmError, Result};

/// `ln C(n, k)`.
pub fn ln_binomial(n: usize, k: usize) -> Result<f64> {
    if k > n {
        return Err(GgmError::DomainError(format!("C({n}, {k}) is undefined")));
    }
    let (n, k) = (n as f64, k as f64);
    Ok(ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0))
}

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa > 0.0 && kappa <= 1.0 {
        Ok(())
    } else {
        Err(GgmError::DomainError(format!("kappa must lie in (0, 1], got {kappa}")))
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(GgmError::DomainError(format!("delta must lie in (0, 1), got {delta}")))
    }
}

fn check_dims(p: usize, d: usize) -> Result<()> {
    if d >= 1 && p > d {
        Ok(())
    } else {
        Err(GgmError::DomainError(format!("need p > d >= 1, got p={p}, d={d}")))
    }
}

/// Smallest integer strictly above `x`.
fn strictly_above(x: f64) -> Result<u64> {
    if !x.is_finite() || x >= u64::MAX as f64 {
        return Err(GgmError::DomainError(format!("bound {x} is not representable")));
    }
    Ok((x.max(-1.0).floor() + 1.0) as u64)
}

/// Both branches of the information-theoretic lower bound on `n`.
pub fn it_lower_bound_branches(p: usize, d: usize, kappa: f64) -> Result<(f64, f64)> {
    check_dims(p, d)?;
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(GgmError::DomainError(format!(
            "kappa must lie in (0, 1) for the lower bound, got {kappa}"
        )));
    }
    if p - d < 2 {
        return Err(GgmError::DomainError(format!("need p - d >= 2, got p={p}, d={d}")));
    }
    let df = d as f64;
    let first = (ln_binomial(p - d, 2)? - 1.0) / (4.0 * kappa * kappa);
    let denom = (1.0 + df * kappa / (1.0 - kappa)).ln() - df * kappa / (1.0 + (df - 1.0) * kappa);
    let second = 2.0 * (ln_binomial(p, d)? - 1.0) / denom;
    Ok((first, second))
}

pub fn it_lower_bound(p: usize, d: usize, kappa: f64) -> Result<f64> {
    let (a, b) = it_lower_bound_branches(p, d, kappa)?;
    Ok(a.max(b))
}

/// `n > 2d + (192/κ²) d ln p + (64/κ²) ln(4d/δ)`.
pub fn dice_sample_bound(p: usize, d: usize, kappa: f64, delta: f64) -> Result<u64> {
    check_dims(p, d)?;
    check_kappa(kappa)?;
    check_delta(delta)?;
    let (df, k2) = (d as f64, kappa * kappa);
    strictly_above(
        2.0 * df + 192.0 / k2 * df * (p as f64).ln() + 64.0 / k2 * (4.0 * df / delta).ln(),
    )
}

/// Simplified sufficient condition `n > (320/κ²)(d ln p + ln(1/δ))`.
pub fn dice_footnote_bound(p: usize, d: usize, kappa: f64, delta: f64) -> Result<u64> {
    check_dims(p, d)?;
    check_kappa(kappa)?;
    check_delta(delta)?;
    strictly_above(320.0 / (kappa * kappa) * (d as f64 * (p as f64).ln() - delta.ln()))
}

/// The two SLICE requirements: the regression stage
/// `n > d + (32/κ⁴) ln(4 p^{d+1}/δ)` and the thresholding stage
/// `n − d > (64/κ²) ln(8dp/δ)`.
pub fn slice_sample_requirements(p: usize, d: usize, kappa: f64, delta: f64) -> Result<(u64, u64)> {
    check_dims(p, d)?;
    check_kappa(kappa)?;
    check_delta(delta)?;
    let (df, pf) = (d as f64, p as f64);
    let ln_term = (4.0_f64).ln() + (df + 1.0) * pf.ln() - delta.ln();
    let regression = strictly_above(df + 32.0 / kappa.powi(4) * ln_term)?;
    let threshold = strictly_above(df + 64.0 / (kappa * kappa) * (8.0 * df * pf / delta).ln())?;
    Ok((regression, threshold))
}

pub fn slice_sample_bound(p: usize, d: usize, kappa: f64, delta: f64) -> Result<u64> {
    let (a, b) = slice_sample_requirements(p, d, kappa, delta)?;
    Ok(a.max(b))
}

/// Samples needed so that every conditional-variance estimate is within a
/// relative `ε` of the truth with probability `1 − δ₁`:
/// `n > d + (8/ε²) d ln p + (8/ε²) ln(2d/δ₁)`.
pub fn variance_accuracy_bound(p: usize, d: usize, epsilon: f64, delta: f64) -> Result<u64> {
    check_dims(p, d)?;
    check_delta(delta)?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(GgmError::DomainError(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let (df, e2) = (d as f64, epsilon * epsilon);
    strictly_above(df + 8.0 / e2 * df * (p as f64).ln() + 8.0 / e2 * (2.0 * df / delta).ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub p: usize,
    pub d: usize,
    pub kappa: f64,
    pub delta: f64,
    pub n_it_lower: f64,
    pub n_dice: u64,
    pub n_dice_simplified: u64,
    pub n_slice: u64,
    pub n_slice_regression: u64,
    pub n_slice_threshold: u64,
    pub ratio_dice: f64,
}

pub fn plan(p: usize, d: usize, kappa: f64, delta: f64) -> Result<SamplePlan> {
    let n_it_lower = it_lower_bound(p, d, kappa)?;
    let n_dice = dice_sample_bound(p, d, kappa, delta)?;
    let (n_slice_regression, n_slice_threshold) = slice_sample_requirements(p, d, kappa, delta)?;
    Ok(SamplePlan {
        p,
        d,
        kappa,
        delta,
        n_it_lower,
        n_dice,
        n_dice_simplified: dice_footnote_bound(p, d, kappa, delta)?,
        n_slice: n_slice_regression.max(n_slice_threshold),
        n_slice_regression,
        n_slice_threshold,
        ratio_dice: n_dice as f64 / n_it_lower,
    })
}

impl SamplePlan {
    /// Two-column table, one row per field.
    pub fn table(&self) -> String {
        let rows = [
            ("p", self.p.to_string()),
            ("d", self.d.to_string()),
            ("kappa", self.kappa.to_string()),
            ("delta", self.delta.to_string()),
            ("n_it_lower", format!("{:.3}", self.n_it_lower)),
            ("n_dice", self.n_dice.to_string()),
            ("n_dice_simplified", self.n_dice_simplified.to_string()),
            ("n_slice", self.n_slice.to_string()),
            ("n_slice_regression", self.n_slice_regression.to_string()),
            ("n_slice_threshold", self.n_slice_threshold.to_string()),
            ("ratio_dice", format!("{:.3}", self.ratio_dice)),
        ];
        let w = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        rows.iter()
            .map(|(k, v)| format!("{k:<w$}  {v:>12}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // ln C(n, k) as a plain sum, independent of ln Γ
    fn ln_choose(n: usize, k: usize) -> f64 {
        (0..k).map(|t| ((n - t) as f64).ln() - ((t + 1) as f64).ln()).sum()
    }

    #[test]
    fn log_binomial_matches_direct_sum() {
        for (n, k) in [(200, 2), (15, 2), (198, 2), (1000, 7), (1_000_000, 50), (5, 0)] {
            let a = ln_binomial(n, k).unwrap();
            let b = ln_choose(n, k);
            assert!((a - b).abs() < 1e-9 * b.abs().max(1.0), "C({n},{k})");
        }
        assert!(ln_binomial(2, 3).is_err());
    }

    #[test]
    fn reference_values() {
        let (a, b) = it_lower_bound_branches(200, 2, 0.4).unwrap();
        assert!((a - 13.872380591988605).abs() < 1e-9);
        assert!((b - 64.51225538227219).abs() < 1e-9);
        assert_eq!(dice_sample_bound(15, 2, 0.5, 0.1).unwrap(), 5286);
        assert_eq!(dice_footnote_bound(15, 2, 0.5, 0.1).unwrap(), 9880);
        assert_eq!(slice_sample_requirements(15, 2, 0.5, 0.1).unwrap(), (6051, 1995));
        assert_eq!(slice_sample_bound(15, 2, 0.5, 0.1).unwrap(), 6051);
        assert_eq!(variance_accuracy_bound(3, 2, 0.25, 0.1).unwrap(), 756);
    }

    #[test]
    fn dice_bound_against_plain_formula() {
        for p in [10usize, 50, 300] {
            for d in 1..4 {
                for kappa in [0.1, 0.3, 0.7] {
                    let (df, k2) = (d as f64, kappa * kappa);
                    let rhs = 2.0 * df
                        + 192.0 * df * (p as f64).ln() / k2
                        + 64.0 * (4.0 * df / 0.05).ln() / k2;
                    let n = dice_sample_bound(p, d, kappa, 0.05).unwrap() as f64;
                    assert!(n > rhs && n - 1.0 <= rhs);
                }
            }
        }
    }

    #[test]
    fn kappa_scaling_identities() {
        // the κ-dependent part of each bound scales as 1/κ² (DICE) and 1/κ⁴ (SLICE)
        let (p, d, delta) = (40usize, 2usize, 0.1);
        let dice_part = |k: f64| {
            192.0 / (k * k) * d as f64 * (p as f64).ln() + 64.0 / (k * k) * (4.0 * d as f64 / delta).ln()
        };
        assert!((dice_part(0.2) / dice_part(0.4) - 4.0).abs() < 1e-12);
        let big = dice_sample_bound(p, d, 0.2, delta).unwrap() as f64 - 4.0;
        let small = dice_sample_bound(p, d, 0.4, delta).unwrap() as f64 - 4.0;
        assert!((big / small - 4.0).abs() < 4.0 / small + 1e-9);

        let (r1, _) = slice_sample_requirements(p, d, 0.2, delta).unwrap();
        let (r2, _) = slice_sample_requirements(p, d, 0.4, delta).unwrap();
        let ratio = (r1 as f64 - d as f64) / (r2 as f64 - d as f64);
        assert!((ratio - 16.0).abs() < 16.0 / (r2 as f64 - 2.0));
    }

    #[test]
    fn monotone_in_p() {
        for d in 1..4 {
            for kappa in [0.1, 0.4, 0.8] {
                let mut prev = 0.0;
                let mut p = 8usize;
                while p < 100_000 {
                    let v = it_lower_bound(p, d, kappa).unwrap();
                    assert!(v > prev);
                    prev = v;
                    p *= 2;
                }
            }
        }
    }

    #[test]
    fn kappa_limit_is_finite() {
        for kappa in [0.9, 0.99, 0.999999] {
            let v = it_lower_bound(50, 1, kappa).unwrap();
            assert!(v.is_finite() && v > 0.0);
        }
        let (a, _) = it_lower_bound_branches(50, 1, 1.0 - 1e-12).unwrap();
        assert!((a - (ln_choose(49, 2) - 1.0) / 4.0).abs() < 1e-6);
        assert!(it_lower_bound(50, 1, 1.0).is_err());
    }

    #[test]
    fn slice_dominates_dice_for_small_kappa() {
        for p in [10usize, 100, 1000, 10_000] {
            for d in 1..=5 {
                if p <= 2 * d + 1 {
                    continue;
                }
                for kappa in [0.1, 0.2, 0.3, 0.4, 0.5] {
                    for delta in [0.01, 0.1, 0.5] {
                        let pl = plan(p, d, kappa, delta).unwrap();
                        // at κ = 0.5 the leading terms are 512(d+1) ln p and
                        // 768 d ln p, so the ordering only holds for d <= 2
                        if kappa < 0.45 || d <= 2 {
                            assert!(pl.n_slice >= pl.n_dice, "{pl:?}");
                        }
                        assert!(pl.n_dice as f64 >= pl.n_it_lower);
                        assert!(pl.n_slice as f64 >= pl.n_it_lower);
                    }
                }
            }
        }
    }

    #[test]
    fn dice_can_exceed_slice_at_moderate_kappa() {
        let pl = plan(1000, 4, 0.5, 0.1).unwrap();
        assert_eq!((pl.n_slice, pl.n_dice), (19577, 22528));
    }

    #[test]
    fn large_dimensions_stay_finite() {
        let pl = plan(1_000_000, 50, 0.1, 0.01).unwrap();
        assert!(pl.n_it_lower.is_finite() && pl.n_slice > pl.n_dice);
    }

    #[test]
    fn domain_errors() {
        assert!(dice_sample_bound(15, 0, 0.5, 0.1).is_err());
        assert!(dice_sample_bound(15, 2, 0.0, 0.1).is_err());
        assert!(dice_sample_bound(15, 2, 0.5, 1.0).is_err());
        assert!(slice_sample_bound(2, 2, 0.5, 0.1).is_err());
        assert!(variance_accuracy_bound(3, 2, 1.0, 0.1).is_err());
    }

    #[test]
    fn table_lists_every_field() {
        let t = plan(15, 2, 0.5, 0.1).unwrap().table();
        assert_eq!(t.lines().count(), 11);
        assert!(t.contains("n_dice") && t.contains("5286"));
    }
}
