//! Kaplan-Meier and Nelson-Aalen estimators.

use crate::error::Result;
use crate::numerics::z_critical;
use crate::types::{CurveKind, CurvePoint, EventTable, StepCurve};

/// Product-limit survival estimate with Greenwood variance and log-log CIs.
#[derive(Debug, Clone, PartialEq)]
pub struct KmEstimate {
    /// One point per event-table row.
    pub curve: StepCurve,
    /// Event-table rows the estimate was computed from.
    pub table: EventTable,
    /// Running `Σ d_i / (n_i (n_i - d_i))`; absent from the first row with
    /// `n_i == d_i` onwards.
    pub greenwood_sum: Vec<Option<f64>>,
    /// Greenwood variance `Ŝ² · Σ d_i / (n_i (n_i - d_i))`.
    pub greenwood_var: Vec<Option<f64>>,
    /// Variance of `log(-log Ŝ)`; absent where `Ŝ` is 0 or 1.
    pub loglog_var: Vec<Option<f64>>,
    pub conf_level: f64,
    /// Critical value used for the intervals.
    pub z: f64,
    /// The curve stays above zero because the longest observation is censored.
    pub improper: bool,
}

impl KmEstimate {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.curve.points.iter().map(|p| p.time)
    }

    pub fn survival(&self) -> impl Iterator<Item = f64> + '_ {
        self.curve.points.iter().map(|p| p.value)
    }

    pub fn survival_at(&self, t: f64) -> f64 {
        self.curve.value_at(t)
    }
}

/// Nelson-Aalen cumulative hazard.
#[derive(Debug, Clone, PartialEq)]
pub struct NaEstimate {
    pub curve: StepCurve,
}

/// `g(u) = log(-log u)`, defined on (0, 1).
pub fn loglog(u: f64) -> f64 {
    (-u.ln()).ln()
}

/// Inverse of [`loglog`].
pub fn loglog_inverse(v: f64) -> f64 {
    (-v.exp()).exp()
}

pub fn kaplan_meier(table: &EventTable, conf_level: f64) -> Result<KmEstimate> {
    let z = z_critical(conf_level)?;
    let n_rows = table.rows.len();
    let mut points = Vec::with_capacity(n_rows);
    let mut greenwood_sum = Vec::with_capacity(n_rows);
    let mut greenwood_var = Vec::with_capacity(n_rows);
    let mut loglog_var = Vec::with_capacity(n_rows);

    let mut survival = 1.0;
    let mut sum = Some(0.0);
    for row in &table.rows {
        let (n, d) = (row.at_risk as f64, row.events as f64);
        survival *= 1.0 - d / n;
        sum = match sum {
            Some(s) if row.at_risk > row.events => Some(s + d / (n * (n - d))),
            _ => None,
        };
        let gw = sum.map(|s| survival * survival * s);
        let lv = match sum {
            Some(s) if survival > 0.0 && survival < 1.0 => {
                let log_s = survival.ln();
                Some(s / (log_s * log_s))
            }
            _ => None,
        };
        let (ci_lower, ci_upper) = match lv {
            Some(v) => {
                let g = loglog(survival);
                let half = z * v.sqrt();
                // g is decreasing in u, so g + half gives the lower survival bound
                (
                    Some(loglog_inverse(g + half)),
                    Some(loglog_inverse(g - half)),
                )
            }
            None => (None, None),
        };
        points.push(CurvePoint {
            time: row.time,
            value: survival,
            ci_lower,
            ci_upper,
        });
        greenwood_sum.push(sum);
        greenwood_var.push(gw);
        loglog_var.push(lv);
    }

    let improper = table.max_time_censored && survival > 0.0;
    Ok(KmEstimate {
        curve: StepCurve {
            kind: CurveKind::Survival,
            points,
        },
        table: table.clone(),
        greenwood_sum,
        greenwood_var,
        loglog_var,
        conf_level,
        z,
        improper,
    })
}

pub fn nelson_aalen(table: &EventTable) -> NaEstimate {
    let mut cumulative = 0.0;
    let points = table
        .rows
        .iter()
        .map(|row| {
            cumulative += row.hazard();
            CurvePoint {
                time: row.time,
                value: cumulative,
                ci_lower: None,
                ci_upper: None,
            }
        })
        .collect();
    NaEstimate {
        curve: StepCurve {
            kind: CurveKind::CumulativeHazard,
            points,
        },
    }
}

/// `Ĥ_KM = -log Ŝ_KM`; a zero survival maps to `+inf`. CI bounds swap roles.
pub fn km_to_cumhaz(km: &KmEstimate) -> StepCurve {
    StepCurve {
        kind: CurveKind::CumulativeHazard,
        points: km
            .curve
            .points
            .iter()
            .map(|p| CurvePoint {
                time: p.time,
                value: neg_log(p.value),
                ci_lower: p.ci_upper.map(neg_log),
                ci_upper: p.ci_lower.map(neg_log),
            })
            .collect(),
    }
}

/// `Ŝ_NA = exp(-Ĥ_NA)`.
pub fn na_to_survival(na: &NaEstimate) -> StepCurve {
    StepCurve {
        kind: CurveKind::Survival,
        points: na
            .curve
            .points
            .iter()
            .map(|p| CurvePoint {
                time: p.time,
                value: (-p.value).exp(),
                ci_lower: p.ci_upper.map(|h| (-h).exp()),
                ci_upper: p.ci_lower.map(|h| (-h).exp()),
            })
            .collect(),
    }
}

fn neg_log(s: f64) -> f64 {
    if s <= 0.0 {
        f64::INFINITY
    } else {
        -s.ln()
    }
}
