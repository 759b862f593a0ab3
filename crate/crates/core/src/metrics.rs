//! Single-number retention metrics read off a Kaplan-Meier curve.

use crate::error::{invalid, Error, Result};
use crate::nonparam::{loglog, KmEstimate};
use crate::numerics::z_critical;

/// Slack for comparing products of fractions against a survival level.
const LEVEL_EPS: f64 = 1e-10;

/// One rectangle of the area under the survival curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaTerm {
    /// Right end of the rectangle: an event time, or the truncation time.
    pub time: f64,
    /// Risk set at `time`; absent for the truncation rectangle.
    pub at_risk: Option<usize>,
    pub events: usize,
    pub length: f64,
    /// Survival on the rectangle, `Ŝ` just before `time`.
    pub survival_before: f64,
    /// `A_i = Ŝ_{i-1} (t_i - t_{i-1})`.
    pub area: f64,
    /// `B_i = Σ_{k > i} A_k`, the area still ahead.
    pub tail: f64,
}

/// Mean duration as the area under the survival curve.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    /// Absent when no row has more subjects at risk than events.
    pub variance: Option<f64>,
    pub ci: Option<(f64, f64)>,
    /// The curve does not reach zero and the area is truncated at the
    /// longest observation.
    pub restricted: bool,
    pub truncation_time: f64,
    pub terms: Vec<AreaTerm>,
}

impl MeanEstimate {
    pub fn areas(&self) -> impl Iterator<Item = f64> + '_ {
        self.terms.iter().map(|t| t.area)
    }
}

/// Area under the KM curve, its variance and a normal-approximation CI.
///
/// The variance is `Σ B_i² d_i / (n_i (n_i - d_i))`, summed over event rows
/// with `n_i > d_i`; with one churn per row this is `Σ B_i² / (n_i (n_i - 1))`.
pub fn mean_auc(km: &KmEstimate, conf_level: f64) -> Result<MeanEstimate> {
    let z = z_critical(conf_level)?;
    let table = &km.table;
    if table.rows.is_empty() {
        return Err(Error::DegenerateData(
            "no events: the mean is not estimable".into(),
        ));
    }

    let mut terms = Vec::with_capacity(table.rows.len() + 1);
    let mut prev_time = 0.0;
    let mut prev_survival = 1.0;
    for (row, point) in table.rows.iter().zip(&km.curve.points) {
        let length = row.time - prev_time;
        terms.push(AreaTerm {
            time: row.time,
            at_risk: Some(row.at_risk),
            events: row.events,
            length,
            survival_before: prev_survival,
            area: prev_survival * length,
            tail: 0.0,
        });
        prev_time = row.time;
        prev_survival = point.value;
    }

    let restricted = table.max_time_censored;
    if restricted && table.max_time > prev_time && prev_survival > 0.0 {
        let length = table.max_time - prev_time;
        terms.push(AreaTerm {
            time: table.max_time,
            at_risk: None,
            events: 0,
            length,
            survival_before: prev_survival,
            area: prev_survival * length,
            tail: 0.0,
        });
    }

    let mut tail = 0.0;
    for term in terms.iter_mut().rev() {
        term.tail = tail;
        tail += term.area;
    }
    let mean = tail;

    let mut variance = None;
    for term in &terms {
        if let Some(n) = term.at_risk {
            if n > term.events {
                let (n, d) = (n as f64, term.events as f64);
                *variance.get_or_insert(0.0) += term.tail * term.tail * d / (n * (n - d));
            }
        }
    }
    let ci = variance.map(|v: f64| {
        let half = z * v.sqrt();
        (mean - half, mean + half)
    });

    let truncation_time = if restricted {
        table.max_time
    } else {
        prev_time
    };
    Ok(MeanEstimate {
        mean,
        variance,
        ci,
        restricted,
        truncation_time,
        terms,
    })
}

/// Quantile of the duration distribution with a log-log based CI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileEstimate {
    pub p: f64,
    /// Earliest event time with `Ŝ <= 1 - p`; absent when the curve never
    /// gets that low.
    pub estimate: Option<f64>,
    /// Absent bounds are open-ended.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl QuantileEstimate {
    pub fn reached(&self) -> bool {
        self.estimate.is_some()
    }
}

/// `(g(Ŝ(t_i)) - g(1 - p)) / sd(g(Ŝ(t_i)))` per event row; `+inf` where `Ŝ = 0`.
pub fn quantile_statistics(km: &KmEstimate, p: f64) -> Vec<f64> {
    let target = loglog(1.0 - p);
    km.curve
        .points
        .iter()
        .zip(&km.loglog_var)
        .map(|(point, var)| match var {
            Some(v) => (loglog(point.value) - target) / v.sqrt(),
            None if point.value <= 0.0 => f64::INFINITY,
            None => f64::NAN,
        })
        .collect()
}

/// The `p`-th quantile `min{t : Ŝ(t) <= 1 - p}`.
///
/// The CI spans the event times whose standardized log-log distance from
/// `g(1 - p)` is within `z`: from the first such time up to the event time
/// that follows the last one (open-ended if there is none).
pub fn quantile(km: &KmEstimate, p: f64, conf_level: f64) -> Result<QuantileEstimate> {
    if !(p > 0.0 && p < 1.0) {
        return invalid(format!("quantile level must be in (0, 1), got {p}"));
    }
    let z = z_critical(conf_level)?;
    let points = &km.curve.points;
    let level = 1.0 - p;
    let estimate = points
        .iter()
        .find(|pt| pt.value <= level + LEVEL_EPS)
        .map(|pt| pt.time);

    let stats = quantile_statistics(km, p);
    let inside: Vec<usize> = stats
        .iter()
        .enumerate()
        .filter(|(_, s)| s.abs() <= z)
        .map(|(i, _)| i)
        .collect();
    let (lower, upper) = match (inside.first(), inside.last()) {
        (Some(&first), Some(&last)) => (
            Some(points[first].time),
            points.get(last + 1).map(|pt| pt.time),
        ),
        _ => {
            // the statistic jumps across the whole band in one step
            let crossing = stats.iter().position(|s| *s >= -z).map(|i| points[i].time);
            (crossing, crossing)
        }
    };
    Ok(QuantileEstimate {
        p,
        estimate,
        lower,
        upper,
    })
}

/// Quantiles at several levels; `p = 1` gives the last event time when the
/// curve reaches zero, with no CI.
pub fn quantile_profile(
    km: &KmEstimate,
    levels: &[f64],
    conf_level: f64,
) -> Result<Vec<QuantileEstimate>> {
    if levels.windows(2).any(|w| w[1] < w[0]) {
        return invalid("quantile levels must be ascending");
    }
    levels
        .iter()
        .map(|&p| {
            if p == 1.0 {
                let estimate = km
                    .curve
                    .points
                    .last()
                    .filter(|pt| pt.value <= 0.0)
                    .map(|pt| pt.time);
                Ok(QuantileEstimate {
                    p,
                    estimate,
                    lower: None,
                    upper: None,
                })
            } else {
                quantile(km, p, conf_level)
            }
        })
        .collect()
}
