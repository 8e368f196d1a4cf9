//! Independent reference computations shared by the integration tests.
//!
//! Everything here works from raw 2×2 counts and plain `f64` arithmetic so
//! that it shares no code path with the library beyond the quadratic-form
//! series (validated separately against χ² and Monte Carlo).

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use hetvar::quadform::QuadFormSpec;
use hetvar::{AdjustmentPolicy, MetaSample, Study2x2};

pub const GRID_STEP: f64 = 1e-4;
pub const GRID_CAP: f64 = 100.0;

/// Raw study counts (x_t, n_t, x_c, n_c).
pub type Counts = (u64, u64, u64, u64);

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random tables that are neither double-zero nor double-n.
pub fn random_counts(rng: &mut ChaCha8Rng, k: usize) -> Vec<Counts> {
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let n_t = rng.random_range(5..=150u64);
        let n_c = rng.random_range(5..=150u64);
        let p_c: f64 = rng.random_range(0.03..0.7);
        let lor: f64 = rng.random_range(-1.5..1.5);
        let p_t = 1.0 / (1.0 + (-(p_c / (1.0 - p_c)).ln() - lor).exp());
        let x_t = (0..n_t).filter(|_| rng.random::<f64>() < p_t).count() as u64;
        let x_c = (0..n_c).filter(|_| rng.random::<f64>() < p_c).count() as u64;
        let dz = x_t == 0 && x_c == 0;
        let dn = x_t == n_t && x_c == n_c;
        if !dz && !dn {
            out.push((x_t, n_t, x_c, n_c));
        }
    }
    out
}

pub fn tables(counts: &[Counts]) -> Vec<Study2x2> {
    counts
        .iter()
        .map(|&(a, b, c, d)| Study2x2::from_counts(a, b, c, d).unwrap())
        .collect()
}

pub fn sample(counts: &[Counts], policy: AdjustmentPolicy) -> MetaSample {
    MetaSample::from_raw_tables(&tables(counts), policy).unwrap()
}

/// Per-study quantities recomputed from counts.
#[derive(Debug, Clone, Copy)]
pub struct Ref {
    pub theta: f64,
    pub v2: f64,
    pub ess: f64,
    pub p_t: f64,
    pub p_c: f64,
    pub n_t: f64,
}

pub fn reference(counts: &[Counts], policy: AdjustmentPolicy) -> Vec<Ref> {
    counts
        .iter()
        .map(|&(xt, nt, xc, nc)| {
            let zero = xt == 0 || xc == 0 || xt == nt || xc == nc;
            let fix = policy == AdjustmentPolicy::Always || zero;
            let (h, e) = if fix { (0.5, 1.0) } else { (0.0, 0.0) };
            let (at, bt) = (xt as f64 + h, nt as f64 + e);
            let (ac, bc) = (xc as f64 + h, nc as f64 + e);
            let (pt, pc) = (at / bt, ac / bc);
            Ref {
                theta: (pt * (1.0 - pc) / (pc * (1.0 - pt))).ln(),
                v2: 1.0 / (bt * pt * (1.0 - pt)) + 1.0 / (bc * pc * (1.0 - pc)),
                ess: (nt * nc) as f64 / (nt + nc) as f64,
                p_t: pt,
                p_c: pc,
                n_t: bt,
            }
        })
        .collect()
}

pub fn q_with(r: &[Ref], w: &[f64]) -> f64 {
    let total: f64 = w.iter().sum();
    let mean = r.iter().zip(w).map(|(s, w)| w * s.theta).sum::<f64>() / total;
    r.iter().zip(w).map(|(s, w)| w * (s.theta - mean).powi(2)).sum()
}

pub fn ess_weights(r: &[Ref]) -> Vec<f64> {
    r.iter().map(|s| s.ess).collect()
}

/// C_i with p* from the ESS-weighted mean effect (model) or p̂_T (naive).
pub fn multipliers(r: &[Ref], model: bool) -> Vec<f64> {
    let total: f64 = r.iter().map(|s| s.ess).sum();
    let mean = r.iter().map(|s| s.ess * s.theta).sum::<f64>() / total;
    r.iter()
        .map(|s| {
            let p = if model {
                1.0 / (1.0 + (-((s.p_c / (1.0 - s.p_c)).ln() + mean)).exp())
            } else {
                s.p_t
            };
            1.0 + (1.0 / (p * (1.0 - p)) - 2.0) / (2.0 * s.n_t)
        })
        .collect()
}

/// max(0, [Q/W − Σq(1−q)v²] / Σq(1−q)C) in one expression.
pub fn moment_oracle(r: &[Ref], c: &[f64]) -> f64 {
    let w = ess_weights(r);
    let big_w: f64 = w.iter().sum();
    (0.0f64).max(
        (q_with(r, &w) / big_w
            - r.iter().zip(&w).map(|(s, w)| (w / big_w) * (1.0 - w / big_w) * s.v2).sum::<f64>())
            / w.iter().zip(c).map(|(w, c)| (w / big_w) * (1.0 - w / big_w) * c).sum::<f64>(),
    )
}

pub fn ssc_oracle(r: &[Ref]) -> f64 {
    moment_oracle(r, &vec![1.0; r.len()])
}

pub fn ssu_oracle(r: &[Ref], model: bool) -> f64 {
    moment_oracle(r, &multipliers(r, model))
}

pub fn dl_oracle(r: &[Ref]) -> f64 {
    let w: Vec<f64> = r.iter().map(|s| 1.0 / s.v2).collect();
    let s1: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|x| x * x).sum();
    (0.0f64).max((q_with(r, &w) - (r.len() as f64 - 1.0)) / (s1 - s2 / s1))
}

pub fn generalized_q(r: &[Ref], tau2: f64) -> f64 {
    let w: Vec<f64> = r.iter().map(|s| 1.0 / (s.v2 + tau2)).collect();
    q_with(r, &w)
}

/// Eigenweights of diag(s) A diag(s) built directly from the definition.
pub fn lambdas(w: &[f64], s2: &[f64]) -> Vec<f64> {
    let k = w.len();
    let total: f64 = w.iter().sum();
    let m = DMatrix::from_fn(k, k, |i, j| {
        let a = if i == j { w[i] } else { 0.0 } - w[i] * w[j] / total;
        s2[i].sqrt() * a * s2[j].sqrt()
    });
    let eig = m.symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(0.0, f64::max);
    eig.iter().cloned().filter(|&l| l > 1e-12 * max).collect()
}

/// F(Q_F | τ²) for the ESS-weighted Q under variances v² + τ²·c.
pub fn f_profile(r: &[Ref], c: &[f64], tau2: f64) -> f64 {
    let w = ess_weights(r);
    let q = q_with(r, &w);
    let s2: Vec<f64> = r.iter().zip(c).map(|(s, c)| s.v2 + tau2 * c).collect();
    QuadFormSpec::new(lambdas(&w, &s2), 1e-10).unwrap().cdf(q).unwrap()
}

/// Smallest grid point τ² = i·step in [0, cap] with g(τ²) ≤ target, for a
/// nonincreasing g. Returns `cap` when none qualifies.
pub fn grid_root(g: impl Fn(f64) -> f64, target: f64) -> f64 {
    let n = (GRID_CAP / GRID_STEP).round() as u64;
    if g(0.0) <= target {
        return 0.0;
    }
    if g(GRID_CAP) > target {
        return GRID_CAP;
    }
    let (mut lo, mut hi) = (0u64, n);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if g(mid as f64 * GRID_STEP) <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi as f64 * GRID_STEP
}

pub fn chisq_quantile(dof: f64, p: f64) -> f64 {
    ChiSquared::new(dof).unwrap().inverse_cdf(p)
}

/// Profile log-likelihood of τ² with the mean profiled out.
pub fn profile_ll(r: &[Ref], tau2: f64) -> f64 {
    let w: Vec<f64> = r.iter().map(|s| 1.0 / (s.v2 + tau2)).collect();
    0.5 * w.iter().map(|x| x.ln()).sum::<f64>() - 0.5 * q_with(r, &w)
}

/// Profile-likelihood interval on the τ² grid: the grid points whose
/// deviance from the grid maximum is within the χ²₁ quantile.
pub fn pl_oracle(r: &[Ref], level: f64) -> (f64, f64) {
    let thr = chisq_quantile(1.0, level);
    let n = (GRID_CAP / GRID_STEP) as usize;
    let ll: Vec<f64> = (0..=n).map(|i| profile_ll(r, i as f64 * GRID_STEP)).collect();
    let peak = ll.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let inside: Vec<usize> = (0..=n).filter(|&i| 2.0 * (peak - ll[i]) <= thr).collect();
    (
        inside[0] as f64 * GRID_STEP,
        inside[inside.len() - 1] as f64 * GRID_STEP,
    )
}

/// Simple ordered fixtures with a spread of heterogeneity.
pub fn fixtures(n: usize, seed: u64) -> Vec<Vec<Counts>> {
    let mut g = rng(seed);
    (0..n)
        .map(|i| random_counts(&mut g, 3 + (i % 6) * 2))
        .collect()
}
