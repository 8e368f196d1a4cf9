//! Distribution of Q with fixed weights as a quadratic form in normal
//! variables.
//!
//! With x ~ N(0, Σ), Σ = diag(s_i²) and the centring matrix
//! A = diag(w) − w wᵀ / W, Q = xᵀ A x is distributed as Σ_j λ_j Z_j², where
//! λ_j are the eigenvalues of Σ^{1/2} A Σ^{1/2}. The CDF of that weighted sum
//! is evaluated with Ruben's mixture-of-chi-squares series, as in
//! Farebrother's algorithm, with a rigorous truncation bound.

use nalgebra::DMatrix;

use crate::chisq::ChiSquareLadder;
use crate::error::{Error, Result};
use crate::qstat::MetaSample;
use crate::roots::{decreasing_root, Bracket, RootOutcome};
use crate::study::PitVariant;

pub const DEFAULT_ACCURACY: f64 = 1e-8;

/// Upper limit on the number of mixture terms per CDF evaluation.
pub const MAX_SERIES_TERMS: usize = 20_000;

/// Eigenvalues below this fraction of the largest are numerical zeros.
const RELATIVE_EIGEN_FLOOR: f64 = 1e-12;

/// Which per-study variance enters Σ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarianceLaw {
    /// s_i² = v̂_i² + τ².
    Conditional,
    /// s_i² = v̂_i² + τ² C_i with the model-based p*.
    UnconditionalModel,
    /// s_i² = v̂_i² + τ² C_i with the naïve p*.
    UnconditionalNaive,
}

impl VarianceLaw {
    pub fn unconditional(variant: PitVariant) -> Self {
        match variant {
            PitVariant::Model => VarianceLaw::UnconditionalModel,
            PitVariant::Naive => VarianceLaw::UnconditionalNaive,
        }
    }
}

/// A positive linear combination of independent χ²₁ variables.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadFormSpec {
    lambdas: Vec<f64>,
    accuracy: f64,
}

impl QuadFormSpec {
    pub fn new(lambdas: Vec<f64>, accuracy: f64) -> Result<Self> {
        if lambdas.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(Error::InvalidArgument(
                "eigenweights must be finite and non-negative".into(),
            ));
        }
        if !(accuracy > 0.0 && accuracy < 1.0) {
            return Err(Error::InvalidArgument(format!("accuracy {accuracy} outside (0, 1)")));
        }
        let lambdas: Vec<f64> = lambdas.into_iter().filter(|&l| l > 0.0).collect();
        if lambdas.is_empty() {
            return Err(Error::InvalidArgument("need at least one positive eigenweight".into()));
        }
        Ok(Self { lambdas, accuracy })
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn accuracy(&self) -> f64 {
        self.accuracy
    }

    pub fn with_accuracy(mut self, accuracy: f64) -> Result<Self> {
        if !(accuracy > 0.0 && accuracy < 1.0) {
            return Err(Error::InvalidArgument(format!("accuracy {accuracy} outside (0, 1)")));
        }
        self.accuracy = accuracy;
        Ok(self)
    }

    /// P(Σ λ_j Z_j² ≤ q) to within `accuracy`.
    ///
    /// With β = min λ the form equals β·χ²_{m+2K} where K is a random index
    /// with non-negative weights a_k summing to one, so the partial sums are
    /// lower bounds and the tail is bounded by (1 − Σa)·F_{m+2k+2}(q/β).
    pub fn cdf(&self, q: f64) -> Result<f64> {
        if q.is_nan() || q < 0.0 {
            return Err(Error::InvalidArgument(format!("quantile {q} must be non-negative")));
        }
        if q == 0.0 {
            return Ok(0.0);
        }
        if q.is_infinite() {
            return Ok(1.0);
        }
        let beta = self.lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
        let ratios: Vec<f64> = self
            .lambdas
            .iter()
            .map(|&l| 1.0 - beta / l)
            .filter(|&g| g > 0.0)
            .collect();
        let ln_a0: f64 = 0.5 * self.lambdas.iter().map(|&l| (beta / l).ln()).sum::<f64>();
        let a0 = ln_a0.exp();
        if a0 == 0.0 {
            return Err(Error::CdfNonConvergence {
                accuracy: self.accuracy,
                terms: 0,
            });
        }

        let mut ladder = ChiSquareLadder::new(self.lambdas.len() as u32, q / beta);
        let mut coeffs = vec![a0];
        // g_k = ½ Σ_j γ_j^k, stored from k = 1
        let mut g = vec![0.0];
        let mut powers = ratios.clone();
        let mut sum = a0 * ladder.cdf();
        let mut mass = a0;

        for k in 1..=MAX_SERIES_TERMS {
            ladder.advance();
            let f = ladder.cdf();
            let bound = (1.0 - mass).max(0.0) * f;
            if bound <= self.accuracy {
                return Ok((sum + 0.5 * bound).min(1.0));
            }
            g.push(0.5 * powers.iter().sum::<f64>());
            for (p, r) in powers.iter_mut().zip(&ratios) {
                *p *= r;
            }
            let a_k = (0..k).map(|r| g[k - r] * coeffs[r]).sum::<f64>() / k as f64;
            coeffs.push(a_k);
            sum += a_k * f;
            mass += a_k;
        }
        Err(Error::CdfNonConvergence {
            accuracy: self.accuracy,
            terms: MAX_SERIES_TERMS,
        })
    }
}

/// Per-study variances s_i² under a variance law.
pub fn study_variances(sample: &MetaSample, tau2: f64, law: VarianceLaw) -> Vec<f64> {
    let v2 = sample.variances();
    match law {
        VarianceLaw::Conditional => v2.iter().map(|v| v + tau2).collect(),
        VarianceLaw::UnconditionalModel | VarianceLaw::UnconditionalNaive => {
            let variant = if law == VarianceLaw::UnconditionalModel {
                PitVariant::Model
            } else {
                PitVariant::Naive
            };
            let c = sample.c_multipliers(sample.pit_mode(variant));
            v2.iter().zip(&c).map(|(v, c)| v + tau2 * c).collect()
        }
    }
}

/// Eigenweights of Q = xᵀAx for x ~ N(0, diag(s²)).
pub fn build_spec(sample: &MetaSample, w: &[f64], tau2: f64, law: VarianceLaw) -> Result<QuadFormSpec> {
    if !(tau2 >= 0.0 && tau2.is_finite()) {
        return Err(Error::InvalidArgument(format!("tau2 = {tau2} must be finite and >= 0")));
    }
    sample.require(2)?;
    spec_from_variances(w, &study_variances(sample, tau2, law))
}

/// Eigenweights of diag(s) A diag(s) for explicit weights and variances.
pub fn spec_from_variances(w: &[f64], s2: &[f64]) -> Result<QuadFormSpec> {
    let k = w.len();
    if s2.len() != k {
        return Err(Error::InvalidArgument("weights and variances differ in length".into()));
    }
    if k < 2 {
        return Err(Error::InsufficientStudies { needed: 2, got: k });
    }
    let total: f64 = w.iter().sum();
    let s: Vec<f64> = s2.iter().map(|v| v.sqrt()).collect();
    let m = DMatrix::from_fn(k, k, |i, j| {
        let centred = if i == j { w[i] } else { 0.0 } - w[i] * w[j] / total;
        s[i] * s[j] * centred
    });
    let eigen = m
        .try_symmetric_eigen(1e-15, 10_000)
        .ok_or_else(|| Error::Eigen(format!("no convergence for a {k}x{k} form")))?;
    let max = eigen.eigenvalues.iter().cloned().fold(0.0, f64::max);
    if max.is_nan() || max <= 0.0 {
        return Err(Error::Eigen("quadratic form has no positive eigenvalue".into()));
    }
    let mut lambdas: Vec<f64> = eigen
        .eigenvalues
        .iter()
        .cloned()
        .filter(|&l| l > RELATIVE_EIGEN_FLOOR * max)
        .collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));

    let trace: f64 = w.iter().zip(s2).map(|(wi, si)| wi * si).sum::<f64>()
        - w.iter().zip(s2).map(|(wi, si)| wi * wi * si).sum::<f64>() / total;
    let sum: f64 = lambdas.iter().sum();
    if (sum - trace).abs() > 1e-10 * trace.abs() {
        return Err(Error::Eigen(format!(
            "eigenweights sum {sum} disagrees with trace {trace}"
        )));
    }
    QuadFormSpec::new(lambdas, DEFAULT_ACCURACY)
}

/// F(q | τ²) for fixed weights and a variance law.
pub fn profile_cdf(sample: &MetaSample, w: &[f64], law: VarianceLaw, q: f64, tau2: f64) -> Result<f64> {
    build_spec(sample, w, tau2, law)?.cdf(q)
}

/// Solves F(q_obs | τ²) = target_prob for τ² ≥ 0. F is nonincreasing in τ².
pub fn profile_root(
    sample: &MetaSample,
    w: &[f64],
    law: VarianceLaw,
    q_obs: f64,
    target_prob: f64,
    bracket: Bracket,
) -> Result<RootOutcome> {
    if !(target_prob > 0.0 && target_prob < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "target probability {target_prob} outside (0, 1)"
        )));
    }
    if q_obs.is_nan() || q_obs < 0.0 {
        return Err(Error::InvalidArgument(format!("observed Q {q_obs} is negative")));
    }
    let v2 = sample.variances();
    let c = match law {
        VarianceLaw::Conditional => vec![1.0; v2.len()],
        VarianceLaw::UnconditionalModel => sample.c_multipliers(sample.pit_mode(PitVariant::Model)),
        VarianceLaw::UnconditionalNaive => sample.c_multipliers(sample.pit_mode(PitVariant::Naive)),
    };
    decreasing_root(
        |tau2| {
            let s2: Vec<f64> = v2.iter().zip(&c).map(|(v, c)| v + tau2 * c).collect();
            spec_from_variances(w, &s2)?.cdf(q_obs)
        },
        target_prob,
        bracket,
    )
}
