//! Confidence intervals for τ².

use crate::chisq;
use crate::error::{Error, Result};
use crate::qstat::{generalized_q, q_statistic, weights, MetaSample, WeightScheme};
use crate::quadform::{profile_root, VarianceLaw};
use crate::roots::{decreasing_root, Bracket, RootOutcome};
use crate::study::PitVariant;

const ML_TOL: f64 = 1e-10;
const ML_MAX_ITER: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct TauInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method_tag: String,
    /// The whole profile lies outside the band: reported as {0}.
    pub degenerate: bool,
    /// The upper limit hit the bracket cap.
    pub capped: bool,
    pub converged: bool,
}

impl TauInterval {
    pub fn contains(&self, tau2: f64) -> bool {
        self.lower <= tau2 && tau2 <= self.upper
    }

    fn degenerate(level: f64, tag: &str) -> Self {
        Self {
            lower: 0.0,
            upper: 0.0,
            level,
            method_tag: tag.into(),
            degenerate: true,
            capped: false,
            converged: true,
        }
    }

    /// Assembles an interval from the roots of a decreasing profile at the
    /// upper band edge (lower limit) and the lower band edge (upper limit).
    fn from_band(lower: RootOutcome, upper: RootOutcome, cap: f64, level: f64, tag: &str) -> Self {
        let upper = match upper {
            RootOutcome::BelowZero => return Self::degenerate(level, tag),
            RootOutcome::Found(x) => (x, false),
            RootOutcome::AboveCap => (cap, true),
        };
        let lower = match lower {
            RootOutcome::BelowZero => 0.0,
            RootOutcome::Found(x) => x,
            RootOutcome::AboveCap => cap,
        };
        Self {
            lower: lower.min(upper.0),
            upper: upper.0,
            level,
            method_tag: tag.into(),
            degenerate: false,
            capped: upper.1,
            converged: true,
        }
    }
}

fn check_level(level: f64) -> Result<f64> {
    if level > 0.0 && level < 1.0 {
        Ok(1.0 - level)
    } else {
        Err(Error::InvalidArgument(format!("confidence level {level} outside (0, 1)")))
    }
}

fn profile_interval(sample: &MetaSample, law: VarianceLaw, level: f64, tag: &str) -> Result<TauInterval> {
    sample.require(3)?;
    let alpha = check_level(level)?;
    let w = weights(sample, WeightScheme::EffectiveSampleSize);
    let q = q_statistic(sample, &w);
    let bracket = Bracket::default();
    let upper = profile_root(sample, &w, law, q, 0.5 * alpha, bracket)?;
    if upper == RootOutcome::BelowZero {
        return Ok(TauInterval::degenerate(level, tag));
    }
    let lower = profile_root(sample, &w, law, q, 1.0 - 0.5 * alpha, bracket)?;
    Ok(TauInterval::from_band(lower, upper, bracket.cap, level, tag))
}

/// Profile interval from the quadratic-form distribution with conditional
/// variances (FPC).
pub fn fpc(sample: &MetaSample, level: f64) -> Result<TauInterval> {
    profile_interval(sample, VarianceLaw::Conditional, level, "fpc")
}

/// As [`fpc`] with unconditional variances (FPU).
pub fn fpu(sample: &MetaSample, variant: PitVariant, level: f64) -> Result<TauInterval> {
    let tag = match variant {
        PitVariant::Model => "fpu-model",
        PitVariant::Naive => "fpu-naive",
    };
    profile_interval(sample, VarianceLaw::unconditional(variant), level, tag)
}

/// Q-profile interval: inverts the generalized Q against χ²_{K−1} quantiles.
pub fn qp(sample: &MetaSample, level: f64) -> Result<TauInterval> {
    sample.require(3)?;
    let alpha = check_level(level)?;
    let dof = (sample.len() - 1) as u32;
    let hi_quantile = chisq::quantile(dof, 1.0 - 0.5 * alpha)?;
    let lo_quantile = chisq::quantile(dof, 0.5 * alpha)?;
    let bracket = Bracket::default();
    let profile = |t: f64| Ok(generalized_q(sample, t));
    let upper = decreasing_root(profile, lo_quantile, bracket)?;
    if upper == RootOutcome::BelowZero {
        return Ok(TauInterval::degenerate(level, "qp"));
    }
    let lower = decreasing_root(profile, hi_quantile, bracket)?;
    Ok(TauInterval::from_band(lower, upper, bracket.cap, level, "qp"))
}

/// Profile log-likelihood of τ² (θ profiled out), up to a constant.
pub fn profile_log_likelihood(sample: &MetaSample, tau2: f64) -> f64 {
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
    0.5 * w.iter().map(|wi| wi.ln()).sum::<f64>() - 0.5 * resid
}

/// Maximum-likelihood τ² by the fixed-point update, projected onto τ² ≥ 0.
/// Returns the estimate and whether the iteration converged.
pub fn ml_tau2(sample: &MetaSample) -> (f64, bool) {
    let mut tau2 = 0.0;
    for _ in 0..ML_MAX_ITER {
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
        let next = (num / den).max(0.0);
        let step = (next - tau2).abs();
        tau2 = next;
        if step < ML_TOL {
            return (tau2, true);
        }
    }
    (tau2, false)
}

/// Profile-likelihood interval: {τ² ≥ 0 : 2[ℓ(τ̂²_ML) − ℓ(τ²)] ≤ χ²₁;level}.
pub fn pl(sample: &MetaSample, level: f64) -> Result<TauInterval> {
    sample.require(3)?;
    check_level(level)?;
    let threshold = chisq::quantile(1, level)?;
    let (ml, converged) = ml_tau2(sample);
    let peak = profile_log_likelihood(sample, ml);
    let deviance = |t: f64| 2.0 * (peak - profile_log_likelihood(sample, t));
    let defaults = Bracket::default();

    let lower = if ml == 0.0 {
        RootOutcome::BelowZero
    } else {
        let b = Bracket {
            initial_hi: ml,
            cap: ml,
            tol: defaults.tol,
        };
        decreasing_root(|t| Ok(deviance(t)), threshold, b)?
    };
    let upper_span = Bracket {
        cap: (defaults.cap - ml).max(0.0),
        ..defaults
    };
    let upper = match decreasing_root(|t| Ok(-deviance(ml + t)), -threshold, upper_span)? {
        RootOutcome::Found(t) => RootOutcome::Found(ml + t),
        other => other,
    };
    let mut out = TauInterval::from_band(lower, upper, defaults.cap, level, "pl");
    out.converged = converged;
    Ok(out)
}
