//! Text formats: study datasets, the analysis report and the metrics CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::methods::{MethodRegistry, MethodSelection};
use crate::qstat::{q_statistic, weights, MetaSample, WeightScheme};
use crate::simulation::MetricsRow;
use crate::study::{AdjustmentPolicy, Study2x2};

pub const METRICS_HEADER: &str =
    "k,sizes_label,p_c,theta,tau2,method,policy,bias,median_bias,coverage,miss_left,miss_right,effective_reps";

/// One row of an input dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub study_id: String,
    pub table: Study2x2,
}

/// Parses `study_id,x_t,n_t,x_c,n_c` rows (header required).
pub fn parse_dataset(text: &str) -> Result<Vec<StudyRow>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty dataset".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != ["study_id", "x_t", "n_t", "x_c", "n_c"] {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header study_id,x_t,n_t,x_c,n_c, found `{header}`"),
        });
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 5 fields, found {}", fields.len()),
            });
        }
        let mut counts = [0u64; 4];
        for (slot, (name, raw)) in counts
            .iter_mut()
            .zip(["x_t", "n_t", "x_c", "n_c"].iter().zip(&fields[1..]))
        {
            *slot = raw.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("{name} = `{raw}` is not a non-negative integer"),
            })?;
        }
        let table = Study2x2::from_counts(counts[0], counts[1], counts[2], counts[3]).map_err(
            |e| Error::Parse {
                line: line_no,
                msg: e.to_string(),
            },
        )?;
        rows.push(StudyRow {
            study_id: fields[0].to_string(),
            table,
        });
    }
    Ok(rows)
}

fn flags(items: &[(bool, &str)]) -> String {
    let set: Vec<&str> = items.iter().filter(|(on, _)| *on).map(|(_, s)| *s).collect();
    if set.is_empty() {
        "-".into()
    } else {
        set.join(",")
    }
}

/// Runs the selected methods on a dataset and renders a plain-text report.
pub fn analyze(
    rows: &[StudyRow],
    selection: &MethodSelection,
    registry: &MethodRegistry,
    base_policy: AdjustmentPolicy,
    level: f64,
) -> Result<String> {
    registry.validate(selection)?;
    let mut out = String::new();
    let mut kept = Vec::new();
    let mut kept_ids = Vec::new();
    for row in rows {
        if row.table.is_double_zero() {
            writeln!(out, "discarded {}: double-zero", row.study_id).unwrap();
        } else if row.table.is_double_n() {
            writeln!(out, "discarded {}: double-n", row.study_id).unwrap();
        } else {
            kept.push(row.table);
            kept_ids.push(row.study_id.as_str());
        }
    }
    if kept.len() < 3 {
        return Err(Error::InsufficientStudies {
            needed: 3,
            got: kept.len(),
        });
    }

    let mut policies = vec![base_policy];
    for p in selection.policies() {
        if !policies.contains(&p) {
            policies.push(p);
        }
    }
    let samples: BTreeMap<AdjustmentPolicy, MetaSample> = policies
        .iter()
        .map(|&p| MetaSample::from_raw_tables(&kept, p).map(|s| (p, s)))
        .collect::<Result<_>>()?;

    writeln!(out, "K = {}", kept.len()).unwrap();
    writeln!(out, "level = {level}").unwrap();
    for &policy in &policies {
        let s = &samples[&policy];
        let q_iv = q_statistic(s, &weights(s, WeightScheme::InverseVariance));
        let q_f = q_statistic(s, &weights(s, WeightScheme::EffectiveSampleSize));
        writeln!(out).unwrap();
        writeln!(out, "[policy {policy}]").unwrap();
        writeln!(out, "Q_IV = {q_iv:.10}").unwrap();
        writeln!(out, "Q_F = {q_f:.10}").unwrap();
        writeln!(out, "study,theta_hat,v2_hat,ess").unwrap();
        for (id, (e, n)) in kept_ids.iter().zip(s.studies().iter().zip(s.ess())) {
            writeln!(out, "{id},{:.10},{:.10},{:.10}", e.theta_hat, e.v2_hat, n).unwrap();
        }
    }

    writeln!(out).unwrap();
    writeln!(out, "point estimates").unwrap();
    writeln!(out, "method,policy,tau2,flags").unwrap();
    for (m, p) in &selection.point {
        let r = registry.point(*m, &samples[p])?;
        let f = flags(&[
            (r.truncated, "truncated"),
            (r.capped, "capped"),
            (!r.converged, "not-converged"),
        ]);
        writeln!(out, "{},{},{:.10},{f}", m.name(), p, r.tau2_hat).unwrap();
    }
    writeln!(out).unwrap();
    writeln!(out, "intervals").unwrap();
    writeln!(out, "method,policy,lower,upper,flags").unwrap();
    for (m, p) in &selection.interval {
        let ci = registry.interval(*m, &samples[p], level)?;
        let f = flags(&[
            (ci.degenerate, "degenerate"),
            (ci.capped, "capped"),
            (!ci.converged, "not-converged"),
        ]);
        writeln!(out, "{},{},{:.10},{:.10},{f}", m.name(), p, ci.lower, ci.upper).unwrap();
    }
    Ok(out)
}

fn fmt_metric(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.16e}")).unwrap_or_default()
}

/// Renders metrics rows under [`METRICS_HEADER`]. Metrics use 17
/// significant digits; scenario values use the shortest exact form.
pub fn write_metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.k,
            r.sizes_label,
            r.p_c,
            r.theta,
            r.tau2,
            r.method,
            r.policy,
            fmt_metric(r.bias),
            fmt_metric(r.median_bias),
            fmt_metric(r.coverage),
            fmt_metric(r.miss_left),
            fmt_metric(r.miss_right),
            r.effective_reps
        )
        .unwrap();
    }
    out
}

/// Parses a metrics CSV produced by [`write_metrics_csv`].
pub fn read_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == METRICS_HEADER => {}
        Some((_, h)) => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unexpected header `{h}`"),
            })
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                msg: "empty metrics file".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 13 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 13 fields, found {}", f.len()),
            });
        }
        let bad = |name: &str, v: &str| Error::Parse {
            line: line_no,
            msg: format!("bad {name} `{v}`"),
        };
        let num = |i: usize, name: &str| f[i].parse::<f64>().map_err(|_| bad(name, f[i]));
        let opt = |i: usize, name: &str| -> Result<Option<f64>> {
            if f[i].is_empty() {
                Ok(None)
            } else {
                f[i].parse::<f64>().map(Some).map_err(|_| bad(name, f[i]))
            }
        };
        rows.push(MetricsRow {
            k: f[0].parse().map_err(|_| bad("k", f[0]))?,
            sizes_label: f[1].to_string(),
            p_c: num(2, "p_c")?,
            theta: num(3, "theta")?,
            tau2: num(4, "tau2")?,
            method: f[5].to_string(),
            policy: f[6].to_string(),
            bias: opt(7, "bias")?,
            median_bias: opt(8, "median_bias")?,
            coverage: opt(9, "coverage")?,
            miss_left: opt(10, "miss_left")?,
            miss_right: opt(11, "miss_right")?,
            effective_reps: f[12].parse().map_err(|_| bad("effective_reps", f[12]))?,
            errors: 0,
        });
    }
    Ok(rows)
}
