//! Point estimators of τ².
//!
//! SSC/SSU are moment estimators built on Q with effective-sample-size
//! weights; SMC/SMU solve F(Q | τ²) = ½ under the quadratic-form
//! distribution. DL, MP and REML are the usual inverse-variance comparators.

use crate::error::Result;
use crate::qstat::{generalized_q, q_statistic, weights, MetaSample, WeightScheme};
use crate::quadform::{profile_root, VarianceLaw};
use crate::roots::{decreasing_root, Bracket, RootOutcome};
use crate::study::{PitEstimationMode, PitVariant};

pub const MIN_STUDIES: usize = 3;

const REML_TOL: f64 = 1e-8;
const REML_MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct TauPointResult {
    pub tau2_hat: f64,
    /// The raw solution was negative (or no root above zero existed).
    pub truncated: bool,
    /// No root below the bracket cap; `tau2_hat` is the cap.
    pub capped: bool,
    pub converged: bool,
    pub iterations: usize,
    pub method_tag: String,
}

impl TauPointResult {
    fn closed_form(raw: f64, tag: impl Into<String>) -> Self {
        let truncated = raw.is_nan() || raw <= 0.0;
        Self {
            tau2_hat: if truncated { 0.0 } else { raw },
            truncated,
            capped: false,
            converged: true,
            iterations: 0,
            method_tag: tag.into(),
        }
    }

    fn from_root(outcome: RootOutcome, cap: f64, tag: impl Into<String>) -> Self {
        let (tau2_hat, truncated, capped) = match outcome {
            RootOutcome::Found(x) => (x, x == 0.0, false),
            RootOutcome::BelowZero => (0.0, true, false),
            RootOutcome::AboveCap => (cap, false, true),
        };
        Self {
            tau2_hat,
            truncated,
            capped,
            converged: true,
            iterations: 0,
            method_tag: tag.into(),
        }
    }
}

/// [Q/W − Σq(1−q)v̂²] / Σq(1−q)C with ESS weights, before truncation.
pub fn moment_estimate_raw(sample: &MetaSample, c: &[f64]) -> f64 {
    let w = sample.ess();
    let total: f64 = w.iter().sum();
    let q = q_statistic(sample, w);
    let mut num = q / total;
    let mut den = 0.0;
    for ((wi, e), ci) in w.iter().zip(sample.studies()).zip(c) {
        let share = wi / total;
        let spread = share * (1.0 - share);
        num -= spread * e.v2_hat;
        den += spread * ci;
    }
    num / den
}

/// Moment estimator with unconditional variances (SSU).
pub fn ssu(sample: &MetaSample, mode: PitEstimationMode) -> Result<TauPointResult> {
    sample.require(MIN_STUDIES)?;
    let tag = match mode {
        PitEstimationMode::ModelBased(_) => "ssu-model",
        PitEstimationMode::Naive => "ssu-naive",
    };
    let raw = moment_estimate_raw(sample, &sample.c_multipliers(mode));
    Ok(TauPointResult::closed_form(raw, tag))
}

/// Moment estimator with conditional variances (SSC): C ≡ 1.
pub fn ssc(sample: &MetaSample) -> Result<TauPointResult> {
    sample.require(MIN_STUDIES)?;
    let raw = moment_estimate_raw(sample, &vec![1.0; sample.len()]);
    Ok(TauPointResult::closed_form(raw, "ssc"))
}

fn median_unbiased(sample: &MetaSample, law: VarianceLaw, tag: &str) -> Result<TauPointResult> {
    sample.require(MIN_STUDIES)?;
    let w = weights(sample, WeightScheme::EffectiveSampleSize);
    let q = q_statistic(sample, &w);
    let bracket = Bracket::default();
    let outcome = profile_root(sample, &w, law, q, 0.5, bracket)?;
    Ok(TauPointResult::from_root(outcome, bracket.cap, tag))
}

/// Median-unbiased estimator with conditional variances (SMC).
pub fn smc(sample: &MetaSample) -> Result<TauPointResult> {
    median_unbiased(sample, VarianceLaw::Conditional, "smc")
}

/// Median-unbiased estimator with unconditional variances (SMU).
pub fn smu(sample: &MetaSample, variant: PitVariant) -> Result<TauPointResult> {
    let tag = match variant {
        PitVariant::Model => "smu-model",
        PitVariant::Naive => "smu-naive",
    };
    median_unbiased(sample, VarianceLaw::unconditional(variant), tag)
}

/// DerSimonian–Laird.
pub fn dl(sample: &MetaSample) -> Result<TauPointResult> {
    sample.require(MIN_STUDIES)?;
    Ok(TauPointResult::closed_form(dl_raw(sample), "dl"))
}

fn dl_raw(sample: &MetaSample) -> f64 {
    let w = weights(sample, WeightScheme::InverseVariance);
    let q = q_statistic(sample, &w);
    let s1: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|x| x * x).sum();
    (q - (sample.len() as f64 - 1.0)) / (s1 - s2 / s1)
}

/// Mandel–Paule: the root of the generalized Q at K − 1.
pub fn mp(sample: &MetaSample) -> Result<TauPointResult> {
    sample.require(MIN_STUDIES)?;
    let bracket = Bracket::default();
    let target = sample.len() as f64 - 1.0;
    let outcome = decreasing_root(|t| Ok(generalized_q(sample, t)), target, bracket)?;
    Ok(TauPointResult::from_root(outcome, bracket.cap, "mp"))
}

/// Restricted log-likelihood of the normal random-effects model, up to a
/// constant.
pub fn restricted_log_likelihood(sample: &MetaSample, tau2: f64) -> f64 {
    let w = weights(sample, WeightScheme::InverseVariancePlusTau(tau2));
    let total: f64 = w.iter().sum();
    let mean = sample
        .studies()
        .iter()
        .zip(&w)
        .map(|(e, wi)| wi * e.theta_hat)
        .sum::<f64>()
        / total;
    let resid: f64 = sample
        .studies()
        .iter()
        .zip(&w)
        .map(|(e, wi)| wi * (e.theta_hat - mean).powi(2))
        .sum();
    0.5 * w.iter().map(|wi| wi.ln()).sum::<f64>() - 0.5 * total.ln() - 0.5 * resid
}

/// REML by the fixed-point (Fisher scoring) update
/// τ² ← Σw²((θ̂ − μ)² − v̂²)/Σw² + 1/Σw, projected onto τ² ≥ 0.
pub fn reml(sample: &MetaSample) -> Result<TauPointResult> {
    sample.require(MIN_STUDIES)?;
    let mut tau2 = dl_raw(sample).max(0.0);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < REML_MAX_ITER {
        iterations += 1;
        let w = weights(sample, WeightScheme::InverseVariancePlusTau(tau2));
        let total: f64 = w.iter().sum();
        let mean = sample
            .studies()
            .iter()
            .zip(&w)
            .map(|(e, wi)| wi * e.theta_hat)
            .sum::<f64>()
            / total;
        let mut num = 0.0;
        let mut den = 0.0;
        for (e, wi) in sample.studies().iter().zip(&w) {
            num += wi * wi * ((e.theta_hat - mean).powi(2) - e.v2_hat);
            den += wi * wi;
        }
        let next = (num / den + 1.0 / total).max(0.0);
        let step = (next - tau2).abs();
        tau2 = next;
        if step < REML_TOL {
            converged = true;
            break;
        }
    }
    Ok(TauPointResult {
        tau2_hat: tau2,
        truncated: tau2 == 0.0,
        capped: false,
        converged,
        iterations,
        method_tag: "reml".into(),
    })
}
