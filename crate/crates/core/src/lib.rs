//! Estimation of the between-study variance τ² in random-effects
//! meta-analyses of log-odds-ratios.
//!
//! The crate covers study-level effect estimation from 2×2 tables, Cochran's
//! Q with fixed (effective-sample-size) and inverse-variance weights, the
//! distribution of Q as a quadratic form in normal variables, moment and
//! median-unbiased point estimators, profile confidence intervals, and a
//! Monte Carlo harness for bias and coverage studies.

pub mod chisq;
pub mod error;
pub mod interval;
pub mod methods;
pub mod par;
pub mod point;
pub mod qstat;
pub mod quadform;
pub mod report;
pub mod roots;
pub mod simulation;
pub mod study;
pub mod svg;

pub use error::{Error, Result};
pub use interval::TauInterval;
pub use methods::{IntervalMethod, MethodRegistry, PointMethod};
pub use point::TauPointResult;
pub use qstat::{MetaSample, WeightScheme};
pub use quadform::{QuadFormSpec, VarianceLaw};
pub use simulation::{MetricsRow, ScenarioConfig, SizeDesign};
pub use study::{AdjustmentPolicy, EffectEstimate, PitEstimationMode, PitVariant, Study2x2};
