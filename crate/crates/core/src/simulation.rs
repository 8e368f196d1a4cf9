//! Monte Carlo harness for bias, median bias and coverage of τ² methods.
//!
//! Data follow the fixed-intercept binomial random-effects model:
//! θ_i ~ N(θ, τ²), p_iT = expit(logit(p_C) + θ_i), and binomial counts per
//! arm. Double-zero and double-n studies are dropped; replicates with fewer
//! than three surviving studies are discarded.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};

use crate::error::{Error, Result};
use crate::methods::{apply_variant, MethodRegistry, MethodSelection};
use crate::par::{map_indices, Execution};
use crate::qstat::MetaSample;
use crate::study::{expit, logit, AdjustmentPolicy, PitVariant, Study2x2};

/// Unequal study-size sets for K = 5, keyed by their mean total size.
pub const UNEQUAL_SETS: [(u32, [u32; 5]); 4] = [
    (30, [12, 16, 18, 20, 84]),
    (60, [24, 32, 36, 40, 168]),
    (100, [64, 72, 76, 80, 208]),
    (160, [124, 132, 136, 140, 268]),
];

pub const MIN_SURVIVING_STUDIES: usize = 3;

/// Study total sizes for a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SizeDesign {
    /// Every study has total size n.
    Equal(u32),
    /// The unequal set with mean size n̄, tiled K/5 times.
    Unequal(u32),
}

impl SizeDesign {
    pub fn label(&self) -> String {
        match self {
            SizeDesign::Equal(n) => format!("n{n}"),
            SizeDesign::Unequal(n) => format!("nbar{n}"),
        }
    }

    pub fn study_sizes(&self, k: usize) -> Result<Vec<u32>> {
        match *self {
            SizeDesign::Equal(n) => Ok(vec![n; k]),
            SizeDesign::Unequal(nbar) => {
                let set = UNEQUAL_SETS
                    .iter()
                    .find(|(m, _)| *m == nbar)
                    .map(|(_, s)| s)
                    .ok_or_else(|| {
                        Error::Config(format!("no unequal size set with mean {nbar}"))
                    })?;
                if !k.is_multiple_of(set.len()) {
                    return Err(Error::Config(format!(
                        "unequal sizes need K to be a multiple of {}, got {k}",
                        set.len()
                    )));
                }
                Ok(set.iter().cycle().take(k).copied().collect())
            }
        }
    }
}

impl fmt::Display for SizeDesign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for SizeDesign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let parse = |digits: &str| {
            digits
                .parse::<u32>()
                .map_err(|_| Error::Config(format!("bad size design `{s}`")))
        };
        if let Some(rest) = s.strip_prefix("nbar") {
            Ok(SizeDesign::Unequal(parse(rest)?))
        } else if let Some(rest) = s.strip_prefix('n') {
            Ok(SizeDesign::Equal(parse(rest)?))
        } else {
            Ok(SizeDesign::Equal(parse(s)?))
        }
    }
}

/// One cell of the simulation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub k: usize,
    pub sizes: SizeDesign,
    /// Fraction of each study in the control arm.
    pub f: f64,
    pub p_c: f64,
    pub theta: f64,
    pub tau2: f64,
    pub reps: usize,
    /// Master seed; the cell's streams are derived from it and the scenario
    /// fields.
    pub seed: u64,
}

/// Per-study arm sizes (treatment, control).
#[derive(Debug, Clone, PartialEq)]
pub struct ArmSizes(pub Vec<(u64, u64)>);

impl ScenarioConfig {
    pub fn validate(&self) -> Result<ArmSizes> {
        if self.k < MIN_SURVIVING_STUDIES {
            return Err(Error::Config(format!("k = {} is below 3", self.k)));
        }
        if !(self.p_c > 0.0 && self.p_c < 1.0) {
            return Err(Error::Config(format!("p_c = {} outside (0, 1)", self.p_c)));
        }
        if !(self.tau2 >= 0.0 && self.tau2.is_finite()) {
            return Err(Error::Config(format!("tau2 = {} must be >= 0", self.tau2)));
        }
        if !self.theta.is_finite() {
            return Err(Error::Config("theta must be finite".into()));
        }
        if !(self.f > 0.0 && self.f < 1.0) {
            return Err(Error::Config(format!("f = {} outside (0, 1)", self.f)));
        }
        let arms = self
            .sizes
            .study_sizes(self.k)?
            .into_iter()
            .map(|n| {
                let control = n as f64 * self.f;
                if control.fract() != 0.0 || control < 1.0 || control >= n as f64 {
                    return Err(Error::Config(format!(
                        "study size {n} with f = {} does not give positive integer arms",
                        self.f
                    )));
                }
                let control = control as u64;
                Ok((n as u64 - control, control))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ArmSizes(arms))
    }

    /// Seed of this cell's streams, a function of the master seed and the
    /// scenario fields only.
    pub fn cell_seed(&self) -> u64 {
        let mut h = splitmix64(self.seed);
        for word in [
            self.k as u64,
            match self.sizes {
                SizeDesign::Equal(n) => n as u64,
                SizeDesign::Unequal(n) => (1 << 32) | n as u64,
            },
            self.f.to_bits(),
            self.p_c.to_bits(),
            self.theta.to_bits(),
            self.tau2.to_bits(),
        ] {
            h = splitmix64(h ^ word);
        }
        h
    }

    pub fn replicate_rng(&self, rep: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(splitmix64(self.cell_seed() ^ splitmix64(rep as u64)))
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One simulated meta-analysis before adjustment.
#[derive(Debug, Clone, PartialEq)]
pub enum ReplicateDraw {
    Kept {
        tables: Vec<Study2x2>,
        dropped_studies: usize,
    },
    Discarded,
}

/// Draws one replicate.
pub fn generate_replicate<R: Rng>(cfg: &ScenarioConfig, arms: &ArmSizes, rng: &mut R) -> ReplicateDraw {
    let alpha = logit(cfg.p_c);
    let spread = Normal::new(0.0, cfg.tau2.sqrt()).expect("tau2 validated");
    let mut tables = Vec::with_capacity(arms.0.len());
    let mut dropped = 0;
    for &(n_t, n_c) in &arms.0 {
        let theta_i = if cfg.tau2 == 0.0 {
            cfg.theta
        } else {
            cfg.theta + spread.sample(rng)
        };
        let p_t = expit(alpha + theta_i);
        let x_c = Binomial::new(n_c, cfg.p_c).expect("p_c validated").sample(rng);
        let x_t = Binomial::new(n_t, p_t).expect("probability in [0, 1]").sample(rng);
        let table = Study2x2::from_counts(x_t, n_t, x_c, n_c).expect("binomial counts are valid");
        if table.is_double_zero() || table.is_double_n() {
            dropped += 1;
        } else {
            tables.push(table);
        }
    }
    if tables.len() < MIN_SURVIVING_STUDIES {
        ReplicateDraw::Discarded
    } else {
        ReplicateDraw::Kept {
            tables,
            dropped_studies: dropped,
        }
    }
}

/// Aggregated metrics of one method in one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub k: usize,
    pub sizes_label: String,
    pub p_c: f64,
    pub theta: f64,
    pub tau2: f64,
    pub method: String,
    pub policy: String,
    /// mean(τ̂²) − τ² (point estimators only).
    pub bias: Option<f64>,
    /// P(τ̂² ≥ τ²) − P(τ̂² ≤ τ²) (point estimators only).
    pub median_bias: Option<f64>,
    /// Interval methods only.
    pub coverage: Option<f64>,
    pub miss_left: Option<f64>,
    pub miss_right: Option<f64>,
    /// Replicates surviving the K < 3 filter.
    pub effective_reps: usize,
    /// Replicates on which this method returned an error.
    pub errors: usize,
}

impl MetricsRow {
    pub fn cell_key(&self) -> CellKey {
        CellKey {
            k: self.k,
            sizes_label: self.sizes_label.clone(),
            p_c: self.p_c.to_bits(),
            theta: self.theta.to_bits(),
            tau2: self.tau2.to_bits(),
        }
    }
}

/// Identifies a grid cell independently of the methods run in it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub k: usize,
    pub sizes_label: String,
    pub p_c: u64,
    pub theta: u64,
    pub tau2: u64,
}

impl CellKey {
    pub fn of(cfg: &ScenarioConfig) -> Self {
        Self {
            k: cfg.k,
            sizes_label: cfg.sizes.label(),
            p_c: cfg.p_c.to_bits(),
            theta: cfg.theta.to_bits(),
            tau2: cfg.tau2.to_bits(),
        }
    }
}

/// Everything a scenario run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    pub rows: Vec<MetricsRow>,
    pub effective_reps: usize,
    pub discarded_reps: usize,
}

#[derive(Debug, Clone, Default)]
struct PointTally {
    ok: usize,
    errors: usize,
    sum: f64,
    at_or_above: usize,
    at_or_below: usize,
}

#[derive(Debug, Clone, Default)]
struct IntervalTally {
    ok: usize,
    errors: usize,
    covered: usize,
    left: usize,
    right: usize,
}

type ReplicateResult = Option<(Vec<Result<f64>>, Vec<Result<(f64, f64)>>)>;

/// Runs every selected method on `cfg.reps` replicates and aggregates.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    selection: &MethodSelection,
    registry: &MethodRegistry,
    level: f64,
    exec: Execution,
) -> Result<ScenarioOutcome> {
    let arms = cfg.validate()?;
    registry.validate(selection)?;
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("level {level} outside (0, 1)")));
    }
    let policies = selection.policies();

    let results: Vec<ReplicateResult> = map_indices(cfg.reps, exec, |rep| {
        let mut rng = cfg.replicate_rng(rep);
        let tables = match generate_replicate(cfg, &arms, &mut rng) {
            ReplicateDraw::Kept { tables, .. } => tables,
            ReplicateDraw::Discarded => return None,
        };
        let samples: BTreeMap<AdjustmentPolicy, Result<MetaSample>> = policies
            .iter()
            .map(|&p| (p, MetaSample::from_raw_tables(&tables, p)))
            .collect();
        let point = selection
            .point
            .iter()
            .map(|(m, p)| {
                let sample = samples[p].as_ref().map_err(Clone::clone)?;
                registry.point(*m, sample).map(|r| r.tau2_hat)
            })
            .collect();
        let interval = selection
            .interval
            .iter()
            .map(|(m, p)| {
                let sample = samples[p].as_ref().map_err(Clone::clone)?;
                registry
                    .interval(*m, sample, level)
                    .map(|ci| (ci.lower, ci.upper))
            })
            .collect();
        Some((point, interval))
    });

    let mut point_tallies = vec![PointTally::default(); selection.point.len()];
    let mut interval_tallies = vec![IntervalTally::default(); selection.interval.len()];
    let mut effective = 0;
    for (points, intervals) in results.iter().flatten() {
        effective += 1;
        for (tally, r) in point_tallies.iter_mut().zip(points) {
            match r {
                Ok(t) => {
                    tally.ok += 1;
                    tally.sum += t;
                    tally.at_or_above += (*t >= cfg.tau2) as usize;
                    tally.at_or_below += (*t <= cfg.tau2) as usize;
                }
                Err(_) => tally.errors += 1,
            }
        }
        for (tally, r) in interval_tallies.iter_mut().zip(intervals) {
            match r {
                Ok((lo, hi)) => {
                    tally.ok += 1;
                    if cfg.tau2 < *lo {
                        tally.left += 1;
                    } else if cfg.tau2 > *hi {
                        tally.right += 1;
                    } else {
                        tally.covered += 1;
                    }
                }
                Err(_) => tally.errors += 1,
            }
        }
    }

    let base = |method: &str, policy: AdjustmentPolicy| MetricsRow {
        k: cfg.k,
        sizes_label: cfg.sizes.label(),
        p_c: cfg.p_c,
        theta: cfg.theta,
        tau2: cfg.tau2,
        method: method.to_string(),
        policy: policy.as_str().to_string(),
        bias: None,
        median_bias: None,
        coverage: None,
        miss_left: None,
        miss_right: None,
        effective_reps: effective,
        errors: 0,
    };
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);

    let mut rows = Vec::with_capacity(point_tallies.len() + interval_tallies.len());
    for ((m, p), t) in selection.point.iter().zip(&point_tallies) {
        rows.push(MetricsRow {
            bias: (t.ok > 0).then(|| t.sum / t.ok as f64 - cfg.tau2),
            median_bias: (t.ok > 0)
                .then(|| (t.at_or_above as f64 - t.at_or_below as f64) / t.ok as f64),
            errors: t.errors,
            ..base(m.name(), *p)
        });
    }
    for ((m, p), t) in selection.interval.iter().zip(&interval_tallies) {
        rows.push(MetricsRow {
            coverage: ratio(t.covered, t.ok),
            miss_left: ratio(t.left, t.ok),
            miss_right: ratio(t.right, t.ok),
            errors: t.errors,
            ..base(m.name(), *p)
        });
    }
    Ok(ScenarioOutcome {
        rows,
        effective_reps: effective,
        discarded_reps: cfg.reps - effective,
    })
}

/// Parameter levels of a grid; the cells are their Cartesian product.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub ks: Vec<usize>,
    pub sizes: Vec<SizeDesign>,
    pub p_cs: Vec<f64>,
    pub thetas: Vec<f64>,
    pub tau2s: Vec<f64>,
    pub f: f64,
    pub reps: usize,
    pub seed: u64,
}

impl GridSpec {
    /// Cells in grid order: K, sizes, p_C, θ, τ² (τ² fastest).
    pub fn cells(&self) -> Vec<ScenarioConfig> {
        let mut out = Vec::new();
        for &k in &self.ks {
            for &sizes in &self.sizes {
                for &p_c in &self.p_cs {
                    for &theta in &self.thetas {
                        for &tau2 in &self.tau2s {
                            out.push(ScenarioConfig {
                                k,
                                sizes,
                                f: self.f,
                                p_c,
                                theta,
                                tau2,
                                reps: self.reps,
                                seed: self.seed,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// A full simulation request as read from a config file.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub grid: GridSpec,
    pub selection: MethodSelection,
    pub level: f64,
}

const REQUIRED_KEYS: [&str; 7] = ["k", "sizes", "p_c", "theta", "tau2", "reps", "seed"];
const KNOWN_KEYS: [&str; 12] = [
    "k", "sizes", "f", "p_c", "theta", "tau2", "reps", "seed", "estimators", "intervals", "level",
    "mode",
];

impl SimulationConfig {
    /// Parses `key = value` lines; `#` starts a comment and list values are
    /// comma-separated.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                msg: format!("expected `key = value`, found `{line}`"),
            })?;
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("unknown key `{key}`"),
                });
            }
            if map.insert(key.clone(), (idx + 1, value.trim().to_string())).is_some() {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("duplicate key `{key}`"),
                });
            }
        }
        for key in REQUIRED_KEYS {
            if !map.contains_key(key) {
                return Err(Error::Config(format!("missing required key `{key}`")));
            }
        }
        fn list<T: FromStr>(map: &BTreeMap<String, (usize, String)>, key: &str) -> Result<Vec<T>> {
            let (line, value) = &map[key];
            let items = value
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<T>().map_err(|_| Error::Parse {
                        line: *line,
                        msg: format!("bad value `{s}` for `{key}`"),
                    })
                })
                .collect::<Result<Vec<T>>>()?;
            if items.is_empty() {
                return Err(Error::Config(format!("key `{key}` has no values")));
            }
            Ok(items)
        }
        fn single<T: FromStr>(map: &BTreeMap<String, (usize, String)>, key: &str) -> Result<T> {
            let mut v = list::<T>(map, key)?;
            if v.len() != 1 {
                return Err(Error::Config(format!("key `{key}` takes a single value")));
            }
            Ok(v.remove(0))
        }
        let get = |key: &str| map.get(key).map(|(_, v)| v.as_str()).unwrap_or("");

        let grid = GridSpec {
            ks: list(&map, "k")?,
            sizes: list(&map, "sizes")?,
            p_cs: list(&map, "p_c")?,
            thetas: list(&map, "theta")?,
            tau2s: list(&map, "tau2")?,
            f: if map.contains_key("f") { single(&map, "f")? } else { 0.5 },
            reps: single(&map, "reps")?,
            seed: single(&map, "seed")?,
        };
        let variant = if map.contains_key("mode") { single(&map, "mode")? } else { PitVariant::Model };
        let selection = MethodSelection::parse(
            &apply_variant(get("estimators"), variant),
            &apply_variant(get("intervals"), variant),
            AdjustmentPolicy::OnlyIfZero,
        )?;
        if selection.is_empty() {
            return Err(Error::Config(
                "missing required key `estimators` or `intervals`".into(),
            ));
        }
        let level = if map.contains_key("level") { single(&map, "level")? } else { 0.95 };
        for cell in grid.cells() {
            cell.validate()?;
        }
        Ok(Self {
            grid,
            selection,
            level,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Runs every grid cell not already present in `existing`, returning the
/// rows of all cells in grid order. `progress` is called once per cell with
/// (index, total, key, skipped).
pub fn full_grid<P>(
    config: &SimulationConfig,
    registry: &MethodRegistry,
    existing: &[MetricsRow],
    exec: Execution,
    mut progress: P,
) -> Result<Vec<MetricsRow>>
where
    P: FnMut(usize, usize, &ScenarioConfig, bool),
{
    registry.validate(&config.selection)?;
    let expected_rows = config.selection.point.len() + config.selection.interval.len();
    let mut done: BTreeMap<CellKey, Vec<MetricsRow>> = BTreeMap::new();
    for row in existing {
        done.entry(row.cell_key()).or_default().push(row.clone());
    }
    let cells = config.grid.cells();
    let mut out = Vec::with_capacity(cells.len() * expected_rows);
    for (i, cell) in cells.iter().enumerate() {
        if let Some(rows) = done.get(&CellKey::of(cell)) {
            if rows.len() == expected_rows && rows_match(rows, &config.selection) {
                progress(i, cells.len(), cell, true);
                out.extend(rows.iter().cloned());
                continue;
            }
        }
        let outcome = run_scenario(cell, &config.selection, registry, config.level, exec)?;
        progress(i, cells.len(), cell, false);
        out.extend(outcome.rows);
    }
    Ok(out)
}

fn rows_match(rows: &[MetricsRow], selection: &MethodSelection) -> bool {
    let names = selection
        .point
        .iter()
        .map(|(m, p)| (m.name(), p.as_str()))
        .chain(selection.interval.iter().map(|(m, p)| (m.name(), p.as_str())));
    rows.iter()
        .zip(names)
        .all(|(r, (m, p))| r.method == m && r.policy == p)
}
