//! Stable method identifiers, policy suffixes and dispatch.
//!
//! KD (point and interval) has no built-in implementation. Callers may
//! register one on a [`MethodRegistry`]; until then KD requests fail with
//! [`Error::UnsupportedEstimator`].

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::interval::{self, TauInterval};
use crate::point::{self, TauPointResult};
use crate::qstat::MetaSample;
use crate::study::{AdjustmentPolicy, PitVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PointMethod {
    Dl,
    Reml,
    Mp,
    Ssc,
    Ssu(PitVariant),
    Smc,
    Smu(PitVariant),
    Kd,
}

impl PointMethod {
    /// Every built-in point estimator.
    pub const BUILTIN: [PointMethod; 9] = [
        PointMethod::Dl,
        PointMethod::Reml,
        PointMethod::Mp,
        PointMethod::Ssc,
        PointMethod::Ssu(PitVariant::Model),
        PointMethod::Ssu(PitVariant::Naive),
        PointMethod::Smc,
        PointMethod::Smu(PitVariant::Model),
        PointMethod::Smu(PitVariant::Naive),
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PointMethod::Dl => "dl",
            PointMethod::Reml => "reml",
            PointMethod::Mp => "mp",
            PointMethod::Ssc => "ssc",
            PointMethod::Ssu(PitVariant::Model) => "ssu-model",
            PointMethod::Ssu(PitVariant::Naive) => "ssu-naive",
            PointMethod::Smc => "smc",
            PointMethod::Smu(PitVariant::Model) => "smu-model",
            PointMethod::Smu(PitVariant::Naive) => "smu-naive",
            PointMethod::Kd => "kd",
        }
    }

    /// Unconditional-variance methods always run on ½-corrected tables
    /// unless a suffix says otherwise.
    pub fn default_policy(&self, fallback: AdjustmentPolicy) -> AdjustmentPolicy {
        match self {
            PointMethod::Ssu(_) | PointMethod::Smu(_) => AdjustmentPolicy::Always,
            _ => fallback,
        }
    }
}

impl fmt::Display for PointMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PointMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PointMethod::BUILTIN
            .iter()
            .chain(std::iter::once(&PointMethod::Kd))
            .find(|m| m.name() == s)
            .copied()
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IntervalMethod {
    Fpc,
    Fpu(PitVariant),
    Qp,
    Pl,
    Kd,
}

impl IntervalMethod {
    pub const BUILTIN: [IntervalMethod; 5] = [
        IntervalMethod::Fpc,
        IntervalMethod::Fpu(PitVariant::Model),
        IntervalMethod::Fpu(PitVariant::Naive),
        IntervalMethod::Qp,
        IntervalMethod::Pl,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            IntervalMethod::Fpc => "fpc",
            IntervalMethod::Fpu(PitVariant::Model) => "fpu-model",
            IntervalMethod::Fpu(PitVariant::Naive) => "fpu-naive",
            IntervalMethod::Qp => "qp",
            IntervalMethod::Pl => "pl",
            IntervalMethod::Kd => "kd",
        }
    }

    pub fn default_policy(&self, fallback: AdjustmentPolicy) -> AdjustmentPolicy {
        match self {
            IntervalMethod::Fpu(_) => AdjustmentPolicy::Always,
            _ => fallback,
        }
    }
}

impl fmt::Display for IntervalMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IntervalMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        IntervalMethod::BUILTIN
            .iter()
            .chain(std::iter::once(&IntervalMethod::Kd))
            .find(|m| m.name() == s)
            .copied()
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

/// Splits "mp-only" into ("mp", Some(OnlyIfZero)).
fn split_policy(id: &str) -> (&str, Option<AdjustmentPolicy>) {
    for policy in AdjustmentPolicy::ALL {
        if let Some(base) = id.strip_suffix(&format!("-{}", policy.as_str())) {
            return (base, Some(policy));
        }
    }
    (id, None)
}

/// Parses a point-method id with optional policy suffix.
pub fn parse_point(id: &str, fallback: AdjustmentPolicy) -> Result<(PointMethod, AdjustmentPolicy)> {
    let (base, policy) = split_policy(id.trim());
    let method: PointMethod = base.parse()?;
    Ok((method, policy.unwrap_or_else(|| method.default_policy(fallback))))
}

/// Parses an interval-method id with optional policy suffix.
pub fn parse_interval(
    id: &str,
    fallback: AdjustmentPolicy,
) -> Result<(IntervalMethod, AdjustmentPolicy)> {
    let (base, policy) = split_policy(id.trim());
    let method: IntervalMethod = base.parse()?;
    Ok((method, policy.unwrap_or_else(|| method.default_policy(fallback))))
}

/// Rewrites bare `ssu`, `smu` and `fpu` ids (with or without a policy
/// suffix) to their `-model`/`-naive` form.
pub fn apply_variant(ids: &str, variant: PitVariant) -> String {
    ids.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|id| {
            let (base, policy) = split_policy(id);
            if matches!(base, "ssu" | "smu" | "fpu") {
                match policy {
                    Some(p) => format!("{base}-{}-{}", variant.as_str(), p.as_str()),
                    None => format!("{base}-{}", variant.as_str()),
                }
            } else {
                id.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join(",")
}

/// The methods requested for one analysis or simulation, each paired with the
/// adjustment policy its input tables go through.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MethodSelection {
    pub point: Vec<(PointMethod, AdjustmentPolicy)>,
    pub interval: Vec<(IntervalMethod, AdjustmentPolicy)>,
}

impl MethodSelection {
    /// Parses comma-separated id lists. Bare ids get `fallback`, except the
    /// unconditional family which defaults to "always".
    pub fn parse(points: &str, intervals: &str, fallback: AdjustmentPolicy) -> Result<Self> {
        let ids = |s: &str| -> Vec<String> {
            s.split(',')
                .map(str::trim)
                .filter(|x| !x.is_empty())
                .map(String::from)
                .collect()
        };
        let point = ids(points)
            .iter()
            .map(|id| parse_point(id, fallback))
            .collect::<Result<Vec<_>>>()?;
        let interval = ids(intervals)
            .iter()
            .map(|id| parse_interval(id, fallback))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { point, interval })
    }

    /// All built-in methods under `policy` (unconditional family under "always").
    pub fn all_builtin(policy: AdjustmentPolicy) -> Self {
        Self {
            point: PointMethod::BUILTIN
                .iter()
                .map(|m| (*m, m.default_policy(policy)))
                .collect(),
            interval: IntervalMethod::BUILTIN
                .iter()
                .map(|m| (*m, m.default_policy(policy)))
                .collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.point.is_empty() && self.interval.is_empty()
    }

    /// Distinct policies in first-use order.
    pub fn policies(&self) -> Vec<AdjustmentPolicy> {
        let mut out = Vec::new();
        let used = self
            .point
            .iter()
            .map(|p| p.1)
            .chain(self.interval.iter().map(|p| p.1));
        for p in used {
            if !out.contains(&p) {
                out.push(p);
            }
        }
        out
    }
}

pub type KdPointFn = Arc<dyn Fn(&MetaSample) -> Result<TauPointResult> + Send + Sync>;
pub type KdIntervalFn = Arc<dyn Fn(&MetaSample, f64) -> Result<TauInterval> + Send + Sync>;

/// Dispatches method ids to implementations.
#[derive(Clone, Default)]
pub struct MethodRegistry {
    kd_point: Option<KdPointFn>,
    kd_interval: Option<KdIntervalFn>,
}

impl fmt::Debug for MethodRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MethodRegistry")
            .field("kd_point", &self.kd_point.is_some())
            .field("kd_interval", &self.kd_interval.is_some())
            .finish()
    }
}

impl MethodRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_kd_point(&mut self, f: KdPointFn) -> &mut Self {
        self.kd_point = Some(f);
        self
    }

    pub fn register_kd_interval(&mut self, f: KdIntervalFn) -> &mut Self {
        self.kd_interval = Some(f);
        self
    }

    pub fn kd_point(&self, sample: &MetaSample) -> Result<TauPointResult> {
        match &self.kd_point {
            Some(f) => f(sample),
            None => Err(Error::UnsupportedEstimator("kd".into())),
        }
    }

    pub fn kd_interval(&self, sample: &MetaSample, level: f64) -> Result<TauInterval> {
        match &self.kd_interval {
            Some(f) => f(sample, level),
            None => Err(Error::UnsupportedEstimator("kd".into())),
        }
    }

    pub fn point(&self, method: PointMethod, sample: &MetaSample) -> Result<TauPointResult> {
        match method {
            PointMethod::Dl => point::dl(sample),
            PointMethod::Reml => point::reml(sample),
            PointMethod::Mp => point::mp(sample),
            PointMethod::Ssc => point::ssc(sample),
            PointMethod::Ssu(v) => point::ssu(sample, sample.pit_mode(v)),
            PointMethod::Smc => point::smc(sample),
            PointMethod::Smu(v) => point::smu(sample, v),
            PointMethod::Kd => self.kd_point(sample),
        }
    }

    pub fn interval(
        &self,
        method: IntervalMethod,
        sample: &MetaSample,
        level: f64,
    ) -> Result<TauInterval> {
        match method {
            IntervalMethod::Fpc => interval::fpc(sample, level),
            IntervalMethod::Fpu(v) => interval::fpu(sample, v, level),
            IntervalMethod::Qp => interval::qp(sample, level),
            IntervalMethod::Pl => interval::pl(sample, level),
            IntervalMethod::Kd => self.kd_interval(sample, level),
        }
    }

    /// Rejects selections naming methods with no implementation.
    pub fn validate(&self, selection: &MethodSelection) -> Result<()> {
        if selection.is_empty() {
            return Err(Error::Config("no estimators or intervals requested".into()));
        }
        let kd_point = selection.point.iter().any(|(m, _)| *m == PointMethod::Kd);
        if kd_point && self.kd_point.is_none() {
            return Err(Error::Config(
                "estimator `kd` requested but no implementation is registered".into(),
            ));
        }
        let kd_interval = selection.interval.iter().any(|(m, _)| *m == IntervalMethod::Kd);
        if kd_interval && self.kd_interval.is_none() {
            return Err(Error::Config(
                "interval `kd` requested but no implementation is registered".into(),
            ));
        }
        Ok(())
    }
}
