//! Weights, weighted means, Cochran's Q and the first moment of Q under
//! fixed weights.

use crate::error::{Error, Result};
use crate::study::{
    adjust_counts, estimate_effect, AdjustmentPolicy, EffectEstimate, PitEstimationMode,
    PitVariant, Study2x2,
};

/// K study-level estimates together with their effective sample sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaSample {
    studies: Vec<EffectEstimate>,
    ess: Vec<f64>,
}

impl MetaSample {
    pub fn new(studies: Vec<EffectEstimate>, ess: Vec<f64>) -> Result<Self> {
        if studies.len() != ess.len() {
            return Err(Error::InvalidArgument(format!(
                "{} estimates but {} effective sample sizes",
                studies.len(),
                ess.len()
            )));
        }
        if studies.len() < 2 {
            return Err(Error::InsufficientStudies {
                needed: 2,
                got: studies.len(),
            });
        }
        if let Some(i) = ess.iter().position(|&n| !(n > 0.0 && n.is_finite())) {
            return Err(Error::InvalidArgument(format!("study {i}: ESS must be positive")));
        }
        if let Some(i) = studies
            .iter()
            .position(|e| !(e.v2_hat > 0.0 && e.v2_hat.is_finite() && e.theta_hat.is_finite()))
        {
            return Err(Error::InvalidArgument(format!(
                "study {i}: estimate and variance must be finite with positive variance"
            )));
        }
        Ok(Self { studies, ess })
    }

    /// Builds a sample from tables that have already been through
    /// [`adjust_counts`]. The stored multipliers use the naïve mode.
    pub fn from_tables(tables: &[Study2x2]) -> Result<Self> {
        let studies = tables
            .iter()
            .map(|t| estimate_effect(t, PitEstimationMode::Naive))
            .collect::<Result<Vec<_>>>()?;
        let ess = tables.iter().map(Study2x2::effective_sample_size).collect();
        Self::new(studies, ess)
    }

    /// Adjusts raw tables under `policy` and builds the sample.
    pub fn from_raw_tables(tables: &[Study2x2], policy: AdjustmentPolicy) -> Result<Self> {
        let adjusted = tables
            .iter()
            .map(|t| adjust_counts(*t, policy))
            .collect::<Result<Vec<_>>>()?;
        Self::from_tables(&adjusted)
    }

    pub fn len(&self) -> usize {
        self.studies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.studies.is_empty()
    }

    pub fn studies(&self) -> &[EffectEstimate] {
        &self.studies
    }

    pub fn ess(&self) -> &[f64] {
        &self.ess
    }

    pub fn thetas(&self) -> Vec<f64> {
        self.studies.iter().map(|e| e.theta_hat).collect()
    }

    pub fn variances(&self) -> Vec<f64> {
        self.studies.iter().map(|e| e.v2_hat).collect()
    }

    /// ESS-weighted mean of the study effects; the overall LOR that feeds the
    /// model-based multiplier.
    pub fn ess_weighted_mean(&self) -> f64 {
        weighted_mean(self, &self.ess)
    }

    pub fn pit_mode(&self, variant: PitVariant) -> PitEstimationMode {
        match variant {
            PitVariant::Model => PitEstimationMode::ModelBased(self.ess_weighted_mean()),
            PitVariant::Naive => PitEstimationMode::Naive,
        }
    }

    pub fn c_multipliers(&self, mode: PitEstimationMode) -> Vec<f64> {
        self.studies.iter().map(|e| e.c_mult_under(mode)).collect()
    }

    /// Fails unless the sample has at least `needed` studies.
    pub fn require(&self, needed: usize) -> Result<()> {
        if self.len() < needed {
            Err(Error::InsufficientStudies {
                needed,
                got: self.len(),
            })
        } else {
            Ok(())
        }
    }

    /// A copy with `delta` added to every study effect.
    pub fn shifted(&self, delta: f64) -> Self {
        let studies = self
            .studies
            .iter()
            .map(|e| EffectEstimate {
                theta_hat: e.theta_hat + delta,
                ..*e
            })
            .collect();
        Self {
            studies,
            ess: self.ess.clone(),
        }
    }
}

/// How studies are weighted in Q.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightScheme {
    /// w_i = ñ_i.
    EffectiveSampleSize,
    /// w_i = 1/v̂_i².
    InverseVariance,
    /// w_i = 1/(v̂_i² + τ²).
    InverseVariancePlusTau(f64),
}

pub fn weights(sample: &MetaSample, scheme: WeightScheme) -> Vec<f64> {
    match scheme {
        WeightScheme::EffectiveSampleSize => sample.ess.clone(),
        WeightScheme::InverseVariance => sample.studies.iter().map(|e| 1.0 / e.v2_hat).collect(),
        WeightScheme::InverseVariancePlusTau(tau2) => {
            debug_assert!(tau2 >= 0.0 && tau2.is_finite());
            sample
                .studies
                .iter()
                .map(|e| 1.0 / (e.v2_hat + tau2))
                .collect()
        }
    }
}

pub fn weighted_mean(sample: &MetaSample, w: &[f64]) -> f64 {
    debug_assert_eq!(w.len(), sample.len());
    let total: f64 = w.iter().sum();
    w.iter()
        .zip(&sample.studies)
        .map(|(wi, e)| wi * e.theta_hat)
        .sum::<f64>()
        / total
}

/// Q = Σ w_i (θ̂_i − θ̄_w)², two-pass.
pub fn q_statistic(sample: &MetaSample, w: &[f64]) -> f64 {
    let mean = weighted_mean(sample, w);
    w.iter()
        .zip(&sample.studies)
        .map(|(wi, e)| wi * (e.theta_hat - mean).powi(2))
        .sum()
}

/// Q with weights 1/(v̂² + τ²), the weighted mean recomputed at every τ².
pub fn generalized_q(sample: &MetaSample, tau2: f64) -> f64 {
    q_statistic(sample, &weights(sample, WeightScheme::InverseVariancePlusTau(tau2)))
}

/// E(Q_F) = W Σ q_i(1 − q_i) (v̂_i² + τ² C_i) for ESS weights.
pub fn expected_qf(sample: &MetaSample, tau2: f64, mode: PitEstimationMode) -> f64 {
    let c = sample.c_multipliers(mode);
    expected_qf_with(&sample.ess, &sample.variances(), &c, tau2)
}

/// First moment of Q for arbitrary fixed weights, variances and multipliers.
pub fn expected_qf_with(w: &[f64], v2: &[f64], c: &[f64], tau2: f64) -> f64 {
    let total: f64 = w.iter().sum();
    w.iter()
        .zip(v2)
        .zip(c)
        .map(|((wi, vi), ci)| {
            let q = wi / total;
            q * (1.0 - q) * (vi + tau2 * ci)
        })
        .sum::<f64>()
        * total
}
