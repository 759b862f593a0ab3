//! Log-rank tests for equality of two survival curves.
//!
//! At each pooled event time the control-group churn count is hypergeometric
//! under the null, with mean `n0 d / n` and variance
//! `n0 n1 d (n - d) / (n² (n - 1))`. The score `U = Σ w (d0 - E d0)` and its
//! variance `Σ w² Var d0` give `U² / Var U ~ χ²₁`.

use crate::error::{invalid, Error, Result};
use crate::numerics::chi_square_1df_sf;
use crate::types::Cohort;

/// Weights `w_i = m Ŝ(t_i-)^ρ` from the pooled, left-continuous KM curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSpec {
    /// 0 gives the plain log-rank test, 1 the Peto-Peto / Prentice test.
    pub rho: f64,
}

impl WeightSpec {
    pub const LOG_RANK: WeightSpec = WeightSpec { rho: 0.0 };
    pub const PETO_PETO: WeightSpec = WeightSpec { rho: 1.0 };

    pub fn new(rho: f64) -> Result<Self> {
        if !(rho.is_finite() && rho >= 0.0) {
            return invalid(format!("rho must be finite and >= 0, got {rho}"));
        }
        Ok(WeightSpec { rho })
    }
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::LOG_RANK
    }
}

/// Contribution of one pooled event time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRankTerm {
    pub time: f64,
    pub at_risk_control: usize,
    pub at_risk_test: usize,
    pub events_control: usize,
    pub events_test: usize,
    /// `E[D_0] = n0 d / n`.
    pub expected_control: f64,
    /// `Var[D_0]`; zero when `n <= 1`.
    pub variance_control: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRankResult {
    /// Score statistic `U`.
    pub u: f64,
    pub var_u: f64,
    pub chi2: f64,
    pub p_value: f64,
    /// The tail probability underflowed and `p_value` holds the smallest
    /// positive double instead of zero.
    pub p_underflow: bool,
    pub weights: WeightSpec,
    pub terms: Vec<LogRankTerm>,
    /// Per-stratum `(U_g, Var U_g)`; a single entry for the unstratified test.
    pub strata: Vec<(f64, f64)>,
}

impl LogRankResult {
    /// `Σ w_i Var[D_0i]`, the variance with weights to the first power.
    pub fn first_power_variance(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.weight * t.variance_control)
            .sum()
    }
}

struct Score {
    u: f64,
    var_u: f64,
    terms: Vec<LogRankTerm>,
}

fn score(control: &Cohort, test: &Cohort, weights: WeightSpec) -> Result<Score> {
    control.validate()?;
    test.validate()?;
    // (time, is_test, censored)
    let mut pooled: Vec<(f64, bool, bool)> = control
        .observations
        .iter()
        .map(|o| (o.duration, false, o.censored))
        .chain(
            test.observations
                .iter()
                .map(|o| (o.duration, true, o.censored)),
        )
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));

    let m = pooled.len() as f64;
    let mut n0 = control.len();
    let mut n1 = test.len();
    let mut pooled_survival: f64 = 1.0;
    let mut terms = Vec::new();
    let (mut u, mut var_u) = (0.0, 0.0);

    let mut i = 0;
    while i < pooled.len() {
        let t = pooled[i].0;
        let (mut d0, mut d1, mut c0, mut c1) = (0usize, 0usize, 0usize, 0usize);
        while i < pooled.len() && pooled[i].0 == t {
            match (pooled[i].1, pooled[i].2) {
                (false, false) => d0 += 1,
                (true, false) => d1 += 1,
                (false, true) => c0 += 1,
                (true, true) => c1 += 1,
            }
            i += 1;
        }
        let d = d0 + d1;
        if d > 0 {
            let n = (n0 + n1) as f64;
            let (n0f, n1f, df) = (n0 as f64, n1 as f64, d as f64);
            let expected = n0f * df / n;
            let variance = if n0 + n1 > 1 {
                n0f * n1f * df * (n - df) / (n * n * (n - 1.0))
            } else {
                0.0
            };
            let weight = m * pooled_survival.powf(weights.rho);
            u += weight * (d0 as f64 - expected);
            var_u += weight * weight * variance;
            terms.push(LogRankTerm {
                time: t,
                at_risk_control: n0,
                at_risk_test: n1,
                events_control: d0,
                events_test: d1,
                expected_control: expected,
                variance_control: variance,
                weight,
            });
            pooled_survival *= 1.0 - df / n;
        }
        n0 -= d0 + c0;
        n1 -= d1 + c1;
    }
    Ok(Score { u, var_u, terms })
}

fn finish(
    u: f64,
    var_u: f64,
    weights: WeightSpec,
    terms: Vec<LogRankTerm>,
    strata: Vec<(f64, f64)>,
) -> Result<LogRankResult> {
    let chi2 = if var_u > 0.0 {
        u * u / var_u
    } else if u == 0.0 {
        0.0
    } else {
        return Err(Error::Numerical(format!(
            "score variance is zero but U = {u}"
        )));
    };
    let p = chi_square_1df_sf(chi2)?;
    let (p_value, p_underflow) = if p > 0.0 {
        (p, false)
    } else {
        (f64::MIN_POSITIVE, true)
    };
    Ok(LogRankResult {
        u,
        var_u,
        chi2,
        p_value,
        p_underflow,
        weights,
        terms,
        strata,
    })
}

/// Two-sample (optionally weighted) log-rank test.
pub fn logrank(control: &Cohort, test: &Cohort, weights: WeightSpec) -> Result<LogRankResult> {
    if control.is_empty() || test.is_empty() {
        return invalid("both cohorts must be non-empty");
    }
    let s = score(control, test, weights)?;
    if s.terms.is_empty() {
        return Err(Error::DegenerateData(
            "no churn events in either cohort".into(),
        ));
    }
    finish(s.u, s.var_u, weights, s.terms, vec![(s.u, s.var_u)])
}

/// Stratified log-rank test: `(Σ U_g)² / Σ Var U_g`.
///
/// Strata without events contribute `(0, 0)`.
pub fn stratified_logrank(
    strata: &[(Cohort, Cohort)],
    weights: WeightSpec,
) -> Result<LogRankResult> {
    let mut per_stratum = Vec::with_capacity(strata.len());
    let mut terms = Vec::new();
    let (mut u, mut var_u) = (0.0, 0.0);
    for (control, test) in strata {
        let s = score(control, test, weights)?;
        u += s.u;
        var_u += s.var_u;
        per_stratum.push((s.u, s.var_u));
        terms.extend(s.terms);
    }
    if terms.is_empty() {
        return Err(Error::DegenerateData("no stratum has churn events".into()));
    }
    finish(u, var_u, weights, terms, per_stratum)
}
