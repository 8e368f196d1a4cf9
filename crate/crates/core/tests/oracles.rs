mod common;

use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

use common::*;
use hetvar::interval::{pl, qp};
use hetvar::methods::{MethodRegistry, MethodSelection};
use hetvar::par::Execution;
use hetvar::point::{dl, smc, ssc, ssu};
use hetvar::quadform::{QuadFormSpec, DEFAULT_ACCURACY};
use hetvar::simulation::run_scenario;
use hetvar::study::{exact_lor_moments_with, expit, logit};
use hetvar::{AdjustmentPolicy, PitVariant, ScenarioConfig, SizeDesign};

#[test]
fn two_weight_cdf_against_monte_carlo() {
    let spec = QuadFormSpec::new(vec![2.0, 1.0], DEFAULT_ACCURACY).unwrap();
    let mut g = rng(11);
    let draws = 1_000_000;
    let hits = (0..draws)
        .filter(|_| {
            let a: f64 = g.sample(StandardNormal);
            let b: f64 = g.sample(StandardNormal);
            2.0 * a * a + b * b <= 5.0
        })
        .count();
    let mc = hits as f64 / draws as f64;
    assert!((spec.cdf(5.0).unwrap() - mc).abs() < 0.003);
}

#[test]
fn moment_estimators_match_one_line_versions() {
    let mut g = rng(5);
    for _ in 0..200 {
        let counts = random_counts(&mut g, 5);
        let s = sample(&counts, AdjustmentPolicy::OnlyIfZero);
        let r = reference(&counts, AdjustmentPolicy::OnlyIfZero);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300);
        assert!(close(ssc(&s).unwrap().tau2_hat, ssc_oracle(&r)));
        assert!(close(
            ssu(&s, s.pit_mode(PitVariant::Model)).unwrap().tau2_hat,
            ssu_oracle(&r, true)
        ));
        assert!(close(dl(&s).unwrap().tau2_hat, dl_oracle(&r)));
    }
}

#[test]
fn smc_three_studies_against_grid() {
    let counts = [(4, 30, 9, 30), (12, 40, 6, 40), (2, 25, 10, 25)];
    let s = sample(&counts, AdjustmentPolicy::OnlyIfZero);
    let r = reference(&counts, AdjustmentPolicy::OnlyIfZero);
    let ones = [1.0; 3];
    let grid = (0..=50_000)
        .map(|i| i as f64 * 1e-4)
        .min_by(|a, b| {
            let fa = (f_profile(&r, &ones, *a) - 0.5).abs();
            let fb = (f_profile(&r, &ones, *b) - 0.5).abs();
            fa.total_cmp(&fb)
        })
        .unwrap();
    let ours = smc(&s).unwrap().tau2_hat;
    assert!(ours > 0.0);
    assert!((ours - grid).abs() <= 2e-4, "{ours} vs {grid}");
}

#[test]
fn qp_five_studies_against_grid() {
    let counts = [(5, 50, 12, 50), (20, 60, 11, 60), (3, 40, 9, 40), (30, 80, 15, 80), (8, 45, 8, 45)];
    let s = sample(&counts, AdjustmentPolicy::OnlyIfZero);
    let r = reference(&counts, AdjustmentPolicy::OnlyIfZero);
    let ci = qp(&s, 0.95).unwrap();
    let hi = chisq_quantile(4.0, 0.975);
    let lo = chisq_quantile(4.0, 0.025);
    let on_grid = |target: f64| {
        (0..=100_000)
            .map(|i| i as f64 * 1e-4)
            .find(|&t| generalized_q(&r, t) <= target)
            .unwrap_or(10.0)
    };
    assert!((ci.lower - on_grid(hi)).abs() <= 2e-4);
    assert!((ci.upper - on_grid(lo)).abs() <= 2e-4);
}

#[test]
fn pl_three_studies_against_dense_grid() {
    let counts = [(6, 40, 14, 40), (15, 35, 7, 35), (9, 50, 9, 50)];
    let s = sample(&counts, AdjustmentPolicy::OnlyIfZero);
    let r = reference(&counts, AdjustmentPolicy::OnlyIfZero);
    let ci = pl(&s, 0.95).unwrap();
    let (lo, hi) = pl_oracle(&r, 0.95);
    assert!((ci.lower - lo).abs() <= 2e-4, "{} vs {lo}", ci.lower);
    assert!((ci.upper - hi).abs() <= 2e-4, "{} vs {hi}", ci.upper);
}

#[test]
fn exact_moments_against_monte_carlo() {
    let (n, p_c, theta) = (15u64, 0.3, 0.7);
    let p_t = expit(logit(p_c) + theta);
    let mut g = rng(99);
    let bt = Binomial::new(n, p_t).unwrap();
    let bc = Binomial::new(n, p_c).unwrap();
    let draws = 400_000;
    let mut sum = 0.0;
    for _ in 0..draws {
        let xt = bt.sample(&mut g) as f64 + 0.5;
        let xc = bc.sample(&mut g) as f64 + 0.5;
        let nn = n as f64 + 1.0;
        sum += logit(xt / nn) - logit(xc / nn);
    }
    let exact = exact_lor_moments_with(n, n, p_t, p_c, AdjustmentPolicy::Always).unwrap();
    let se = (exact.variance / draws as f64).sqrt();
    assert!((sum / draws as f64 - exact.mean).abs() < 5.0 * se);
}

#[test]
fn mp_nearly_unbiased_with_large_studies() {
    let cfg = ScenarioConfig {
        k: 5,
        sizes: SizeDesign::Equal(250),
        f: 0.5,
        p_c: 0.5,
        theta: 0.0,
        tau2: 0.4,
        reps: 2000,
        seed: 1,
    };
    let sel = MethodSelection::parse("mp-only", "", AdjustmentPolicy::OnlyIfZero).unwrap();
    let out = run_scenario(&cfg, &sel, &MethodRegistry::new(), 0.95, Execution::default()).unwrap();
    let bias = out.rows[0].bias.unwrap();
    assert!((-0.05..=0.05).contains(&bias), "bias {bias}");
}
