//! Study-level handling of 2×2 tables: continuity correction, log-odds-ratio
//! and its delta-method variance, and the unconditional-variance multiplier.

use std::fmt;
use std::str::FromStr;

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// One study's 2×2 table. Counts are stored as reals so that a ½-corrected
/// table has the same type as a raw one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Study2x2 {
    pub x_t: f64,
    pub n_t: f64,
    pub x_c: f64,
    pub n_c: f64,
    /// Whether the ½-correction has been applied.
    pub adjusted: bool,
}

impl Study2x2 {
    /// Builds a raw table from integer counts.
    pub fn from_counts(x_t: u64, n_t: u64, x_c: u64, n_c: u64) -> Result<Self> {
        if n_t == 0 || n_c == 0 {
            return Err(Error::InvalidTable(format!(
                "arm sizes must be positive (n_t={n_t}, n_c={n_c})"
            )));
        }
        if x_t > n_t || x_c > n_c {
            return Err(Error::InvalidTable(format!(
                "event count exceeds arm size (x_t={x_t}/{n_t}, x_c={x_c}/{n_c})"
            )));
        }
        Ok(Self {
            x_t: x_t as f64,
            n_t: n_t as f64,
            x_c: x_c as f64,
            n_c: n_c as f64,
            adjusted: false,
        })
    }

    pub fn is_double_zero(&self) -> bool {
        self.x_t == 0.0 && self.x_c == 0.0
    }

    /// All subjects are events in both arms.
    pub fn is_double_n(&self) -> bool {
        self.x_t == self.n_t && self.x_c == self.n_c
    }

    /// Any of the four cells x_t, n_t − x_t, x_c, n_c − x_c is zero.
    pub fn has_zero_cell(&self) -> bool {
        self.x_t == 0.0 || self.x_t == self.n_t || self.x_c == 0.0 || self.x_c == self.n_c
    }

    /// Arm sizes before any ½-correction.
    pub fn raw_sizes(&self) -> (f64, f64) {
        if self.adjusted {
            (self.n_t - 1.0, self.n_c - 1.0)
        } else {
            (self.n_t, self.n_c)
        }
    }

    /// ñ = n_C·n_T / (n_C + n_T) on the raw arm sizes.
    pub fn effective_sample_size(&self) -> f64 {
        let (n_t, n_c) = self.raw_sizes();
        n_t * n_c / (n_t + n_c)
    }

    /// The same table with the arms exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            x_t: self.x_c,
            n_t: self.n_c,
            x_c: self.x_t,
            n_c: self.n_t,
            adjusted: self.adjusted,
        }
    }

    fn half_corrected(&self) -> Self {
        Self {
            x_t: self.x_t + 0.5,
            n_t: self.n_t + 1.0,
            x_c: self.x_c + 0.5,
            n_c: self.n_c + 1.0,
            adjusted: true,
        }
    }
}

/// When to add ½ to every cell of a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AdjustmentPolicy {
    /// Only when one of the four cells is zero ("only").
    OnlyIfZero,
    /// In every study ("always").
    Always,
}

impl AdjustmentPolicy {
    pub const ALL: [AdjustmentPolicy; 2] = [AdjustmentPolicy::OnlyIfZero, AdjustmentPolicy::Always];

    pub fn as_str(&self) -> &'static str {
        match self {
            AdjustmentPolicy::OnlyIfZero => "only",
            AdjustmentPolicy::Always => "always",
        }
    }
}

impl fmt::Display for AdjustmentPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AdjustmentPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "only" => Ok(AdjustmentPolicy::OnlyIfZero),
            "always" => Ok(AdjustmentPolicy::Always),
            other => Err(Error::InvalidArgument(format!(
                "unknown adjustment policy `{other}` (expected only|always)"
            ))),
        }
    }
}

/// Applies the ½-correction according to `policy`.
///
/// Double-zero and double-n tables are rejected; they must be filtered out
/// before analysis.
pub fn adjust_counts(raw: Study2x2, policy: AdjustmentPolicy) -> Result<Study2x2> {
    if raw.is_double_zero() {
        return Err(Error::DoubleZero);
    }
    if raw.is_double_n() {
        return Err(Error::DoubleN);
    }
    if raw.adjusted {
        return Ok(raw);
    }
    match policy {
        AdjustmentPolicy::Always => Ok(raw.half_corrected()),
        AdjustmentPolicy::OnlyIfZero if raw.has_zero_cell() => Ok(raw.half_corrected()),
        AdjustmentPolicy::OnlyIfZero => Ok(raw),
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// How the treatment-arm probability entering the unconditional-variance
/// multiplier is estimated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PitEstimationMode {
    /// expit(logit(p̂_C) + θ̂) with θ̂ the overall LOR estimate.
    ModelBased(f64),
    /// p̂_T itself.
    Naive,
}

/// The two unconditional variants without the overall estimate attached.
/// [`crate::MetaSample::pit_mode`] turns a variant into a
/// [`PitEstimationMode`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PitVariant {
    Model,
    Naive,
}

impl PitVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            PitVariant::Model => "model",
            PitVariant::Naive => "naive",
        }
    }
}

impl FromStr for PitVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "model" => Ok(PitVariant::Model),
            "naive" => Ok(PitVariant::Naive),
            other => Err(Error::InvalidArgument(format!(
                "unknown mode `{other}` (expected model|naive)"
            ))),
        }
    }
}

/// Per-study LOR estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectEstimate {
    pub theta_hat: f64,
    /// Delta-method conditional variance of `theta_hat`.
    pub v2_hat: f64,
    /// Unconditional-variance multiplier C_i, so that E(v²) ≈ v̂² + τ²·C_i.
    pub c_mult: f64,
    pub p_t_hat: f64,
    pub p_c_hat: f64,
    /// Treatment arm size entering the variance (after adjustment).
    pub n_t: f64,
    pub n_c: f64,
}

impl EffectEstimate {
    /// The multiplier C_i under another estimation mode.
    pub fn c_mult_under(&self, mode: PitEstimationMode) -> f64 {
        c_multiplier(pit_star(self.p_t_hat, self.p_c_hat, mode), self.n_t)
    }
}

fn pit_star(p_t_hat: f64, p_c_hat: f64, mode: PitEstimationMode) -> f64 {
    match mode {
        PitEstimationMode::Naive => p_t_hat,
        PitEstimationMode::ModelBased(theta) => expit(logit(p_c_hat) + theta),
    }
}

/// C = 1 + ([p(1−p)]⁻¹ − 2) / (2 n_T).
pub fn c_multiplier(p_star: f64, n_t: f64) -> f64 {
    1.0 + (1.0 / (p_star * (1.0 - p_star)) - 2.0) / (2.0 * n_t)
}

/// LOR, its variance and the multiplier C from an (already adjusted) table.
pub fn estimate_effect(s: &Study2x2, mode: PitEstimationMode) -> Result<EffectEstimate> {
    let p_t = s.x_t / s.n_t;
    let p_c = s.x_c / s.n_c;
    let theta_hat = logit(p_t) - logit(p_c);
    let v2_hat = 1.0 / (s.n_t * p_t * (1.0 - p_t)) + 1.0 / (s.n_c * p_c * (1.0 - p_c));
    if !theta_hat.is_finite() || !v2_hat.is_finite() {
        return Err(Error::NonFinite(format!(
            "table ({}, {}, {}, {}) has a zero cell; adjust counts first",
            s.x_t, s.n_t, s.x_c, s.n_c
        )));
    }
    let c_mult = c_multiplier(pit_star(p_t, p_c, mode), s.n_t);
    if !c_mult.is_finite() {
        return Err(Error::NonFinite("unconditional-variance multiplier".into()));
    }
    Ok(EffectEstimate {
        theta_hat,
        v2_hat,
        c_mult,
        p_t_hat: p_t,
        p_c_hat: p_c,
        n_t: s.n_t,
        n_c: s.n_c,
    })
}

/// Exact mean and central second moment of a LOR estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorMoments {
    pub mean: f64,
    pub variance: f64,
}

/// Exact moments of θ̂ under independent binomial arms, with the ½-correction
/// applied to every outcome.
pub fn exact_lor_moments(n_t: u64, n_c: u64, p_t: f64, p_c: f64) -> Result<LorMoments> {
    exact_lor_moments_with(n_t, n_c, p_t, p_c, AdjustmentPolicy::Always)
}

/// As [`exact_lor_moments`], with a chosen correction policy. Under
/// `OnlyIfZero` an outcome without zero cells uses the maximum-likelihood
/// proportions x/n; outcomes with a zero cell (double-zero and double-n
/// included) are ½-corrected so that every outcome stays finite.
pub fn exact_lor_moments_with(
    n_t: u64,
    n_c: u64,
    p_t: f64,
    p_c: f64,
    policy: AdjustmentPolicy,
) -> Result<LorMoments> {
    if n_t == 0 || n_c == 0 {
        return Err(Error::InvalidArgument("arm sizes must be at least 1".into()));
    }
    if !(p_t > 0.0 && p_t < 1.0 && p_c > 0.0 && p_c < 1.0) {
        return Err(Error::InvalidArgument("probabilities must lie in (0, 1)".into()));
    }
    let pmf_t = binomial_pmf(n_t, p_t);
    let pmf_c = binomial_pmf(n_c, p_c);
    let mut outcomes = Vec::with_capacity(pmf_t.len() * pmf_c.len());
    for (xt, &wt) in pmf_t.iter().enumerate() {
        for (xc, &wc) in pmf_c.iter().enumerate() {
            let raw = Study2x2 {
                x_t: xt as f64,
                n_t: n_t as f64,
                x_c: xc as f64,
                n_c: n_c as f64,
                adjusted: false,
            };
            let table = match policy {
                AdjustmentPolicy::Always => raw.half_corrected(),
                AdjustmentPolicy::OnlyIfZero if raw.has_zero_cell() => raw.half_corrected(),
                AdjustmentPolicy::OnlyIfZero => raw,
            };
            let theta = logit(table.x_t / table.n_t) - logit(table.x_c / table.n_c);
            outcomes.push((wt * wc, theta));
        }
    }
    let mean: f64 = outcomes.iter().map(|(w, t)| w * t).sum();
    let variance: f64 = outcomes.iter().map(|(w, t)| w * (t - mean).powi(2)).sum();
    Ok(LorMoments { mean, variance })
}

fn binomial_pmf(n: u64, p: f64) -> Vec<f64> {
    let nf = n as f64;
    let ln_n_fact = ln_gamma(nf + 1.0);
    (0..=n)
        .map(|k| {
            let kf = k as f64;
            let ln_choose = ln_n_fact - ln_gamma(kf + 1.0) - ln_gamma(nf - kf + 1.0);
            (ln_choose + kf * p.ln() + (nf - kf) * (1.0 - p).ln()).exp()
        })
        .collect()
}
