//! Parametric survival families and censored maximum-likelihood fitting.
//!
//! | family       | S(t)                 | h(t)                             |
//! |--------------|----------------------|----------------------------------|
//! | Exponential  | exp(-λt)             | λ                                |
//! | Weibull      | exp(-(λt)^α)         | λα(λt)^(α-1)                     |
//! | Log-logistic | 1 / (1 + (λt)^α)     | λα(λt)^(α-1) / (1 + (λt)^α)      |
//! | Log-normal   | 1 - Φ(Z), Z=(ln t-μ)/σ | φ(Z) / (σt(1 - Φ(Z)))          |
//!
//! Fitting maximizes the log-likelihood over log-transformed parameters
//! (`log λ`, `log α`, `μ`, `log σ`) with analytic gradients and Hessians, then
//! maps the inverse observed information back to the natural scale with the
//! delta method.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::numerics::{
    is_negative_definite, newton_raphson, std_normal_hazard, std_normal_ln_pdf, std_normal_ln_sf,
    std_normal_pdf, std_normal_quantile, std_normal_sf, z_critical, Evaluation, NewtonOptions,
};
use crate::types::Cohort;

/// Default stand-in for zero event durations in log-time families: half of a
/// one-second resolution, in hours.
pub const DEFAULT_ZERO_SUBSTITUTE_HOURS: f64 = 0.5 / 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FamilyTag {
    Exponential,
    Weibull,
    LogLogistic,
    LogNormal,
}

impl FamilyTag {
    pub const ALL: [FamilyTag; 4] = [
        FamilyTag::Exponential,
        FamilyTag::Weibull,
        FamilyTag::LogLogistic,
        FamilyTag::LogNormal,
    ];

    pub fn param_count(self) -> usize {
        match self {
            FamilyTag::Exponential => 1,
            _ => 2,
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            FamilyTag::Exponential => &["lambda"],
            FamilyTag::Weibull | FamilyTag::LogLogistic => &["lambda", "alpha"],
            FamilyTag::LogNormal => &["mu", "sigma"],
        }
    }

    fn uses_log_time(self) -> bool {
        !matches!(self, FamilyTag::Exponential)
    }
}

impl fmt::Display for FamilyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FamilyTag::Exponential => "exponential",
            FamilyTag::Weibull => "weibull",
            FamilyTag::LogLogistic => "loglogistic",
            FamilyTag::LogNormal => "lognormal",
        })
    }
}

impl FromStr for FamilyTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "exponential" | "exp" => Ok(FamilyTag::Exponential),
            "weibull" => Ok(FamilyTag::Weibull),
            "loglogistic" => Ok(FamilyTag::LogLogistic),
            "lognormal" => Ok(FamilyTag::LogNormal),
            _ => invalid(format!("unknown family '{s}'")),
        }
    }
}

/// A distribution with concrete parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Exponential { lambda: f64 },
    Weibull { lambda: f64, alpha: f64 },
    LogLogistic { lambda: f64, alpha: f64 },
    LogNormal { mu: f64, sigma: f64 },
}

impl Family {
    pub fn exponential(lambda: f64) -> Result<Self> {
        Family::from_params(FamilyTag::Exponential, &[lambda])
    }

    pub fn weibull(lambda: f64, alpha: f64) -> Result<Self> {
        Family::from_params(FamilyTag::Weibull, &[lambda, alpha])
    }

    pub fn log_logistic(lambda: f64, alpha: f64) -> Result<Self> {
        Family::from_params(FamilyTag::LogLogistic, &[lambda, alpha])
    }

    pub fn log_normal(mu: f64, sigma: f64) -> Result<Self> {
        Family::from_params(FamilyTag::LogNormal, &[mu, sigma])
    }

    pub fn from_params(tag: FamilyTag, params: &[f64]) -> Result<Self> {
        if params.len() != tag.param_count() {
            return invalid(format!(
                "{tag} takes {} parameter(s), got {}",
                tag.param_count(),
                params.len()
            ));
        }
        let family = match tag {
            FamilyTag::Exponential => Family::Exponential { lambda: params[0] },
            FamilyTag::Weibull => Family::Weibull {
                lambda: params[0],
                alpha: params[1],
            },
            FamilyTag::LogLogistic => Family::LogLogistic {
                lambda: params[0],
                alpha: params[1],
            },
            FamilyTag::LogNormal => Family::LogNormal {
                mu: params[0],
                sigma: params[1],
            },
        };
        family.validate()?;
        Ok(family)
    }

    pub fn tag(&self) -> FamilyTag {
        match self {
            Family::Exponential { .. } => FamilyTag::Exponential,
            Family::Weibull { .. } => FamilyTag::Weibull,
            Family::LogLogistic { .. } => FamilyTag::LogLogistic,
            Family::LogNormal { .. } => FamilyTag::LogNormal,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            Family::Exponential { lambda } => vec![lambda],
            Family::Weibull { lambda, alpha } | Family::LogLogistic { lambda, alpha } => {
                vec![lambda, alpha]
            }
            Family::LogNormal { mu, sigma } => vec![mu, sigma],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                invalid(format!("{name} must be positive and finite, got {v}"))
            }
        };
        match *self {
            Family::Exponential { lambda } => positive("lambda", lambda),
            Family::Weibull { lambda, alpha } | Family::LogLogistic { lambda, alpha } => {
                positive("lambda", lambda)?;
                positive("alpha", alpha)
            }
            Family::LogNormal { mu, sigma } => {
                if !mu.is_finite() {
                    return invalid(format!("mu must be finite, got {mu}"));
                }
                positive("sigma", sigma)
            }
        }
    }

    /// `S(t)`.
    pub fn survival(&self, t: f64) -> f64 {
        match *self {
            Family::Exponential { lambda } => (-lambda * t).exp(),
            Family::Weibull { lambda, alpha } => (-(lambda * t).powf(alpha)).exp(),
            Family::LogLogistic { lambda, alpha } => 1.0 / (1.0 + (lambda * t).powf(alpha)),
            Family::LogNormal { mu, sigma } => {
                if t <= 0.0 {
                    1.0
                } else {
                    std_normal_sf((t.ln() - mu) / sigma)
                }
            }
        }
    }

    /// `H(t) = -log S(t)`, evaluated without cancellation.
    pub fn cum_hazard(&self, t: f64) -> f64 {
        match *self {
            Family::Exponential { lambda } => lambda * t,
            Family::Weibull { lambda, alpha } => (lambda * t).powf(alpha),
            Family::LogLogistic { lambda, alpha } => (lambda * t).powf(alpha).ln_1p(),
            Family::LogNormal { mu, sigma } => {
                if t <= 0.0 {
                    0.0
                } else {
                    -std_normal_ln_sf((t.ln() - mu) / sigma)
                }
            }
        }
    }

    /// `h(t)`.
    pub fn hazard(&self, t: f64) -> f64 {
        match *self {
            Family::Exponential { lambda } => lambda,
            Family::Weibull { lambda, alpha } => lambda * alpha * (lambda * t).powf(alpha - 1.0),
            Family::LogLogistic { lambda, alpha } => {
                let z = (lambda * t).powf(alpha);
                lambda * alpha * (lambda * t).powf(alpha - 1.0) / (1.0 + z)
            }
            Family::LogNormal { mu, sigma } => {
                if t <= 0.0 {
                    0.0
                } else {
                    std_normal_hazard((t.ln() - mu) / sigma) / (sigma * t)
                }
            }
        }
    }

    /// `f(t) = h(t) S(t)`.
    pub fn density(&self, t: f64) -> f64 {
        match *self {
            Family::LogNormal { mu, sigma } => {
                if t <= 0.0 {
                    0.0
                } else {
                    std_normal_pdf((t.ln() - mu) / sigma) / (sigma * t)
                }
            }
            _ => self.hazard(t) * self.survival(t),
        }
    }

    /// The `t` with `S(t) = u`, for `u` in (0, 1).
    pub fn inverse_survival(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return invalid(format!("survival level must be in (0, 1), got {u}"));
        }
        Ok(match *self {
            Family::Exponential { lambda } => -u.ln() / lambda,
            Family::Weibull { lambda, alpha } => (-u.ln()).powf(1.0 / alpha) / lambda,
            Family::LogLogistic { lambda, alpha } => ((1.0 - u) / u).powf(1.0 / alpha) / lambda,
            Family::LogNormal { mu, sigma } => (mu - sigma * std_normal_quantile(u)?).exp(),
        })
    }

    /// Parameters on the unconstrained optimization scale.
    fn to_working(self) -> Vec<f64> {
        match self {
            Family::Exponential { lambda } => vec![lambda.ln()],
            Family::Weibull { lambda, alpha } | Family::LogLogistic { lambda, alpha } => {
                vec![lambda.ln(), alpha.ln()]
            }
            Family::LogNormal { mu, sigma } => vec![mu, sigma.ln()],
        }
    }

    fn from_working(tag: FamilyTag, eta: &[f64]) -> Family {
        match tag {
            FamilyTag::Exponential => Family::Exponential {
                lambda: eta[0].exp(),
            },
            FamilyTag::Weibull => Family::Weibull {
                lambda: eta[0].exp(),
                alpha: eta[1].exp(),
            },
            FamilyTag::LogLogistic => Family::LogLogistic {
                lambda: eta[0].exp(),
                alpha: eta[1].exp(),
            },
            FamilyTag::LogNormal => Family::LogNormal {
                mu: eta[0],
                sigma: eta[1].exp(),
            },
        }
    }

    /// Jacobian diagonal `dθ/dη` of the natural parameters.
    fn working_jacobian(&self) -> Vec<f64> {
        match *self {
            Family::Exponential { lambda } => vec![lambda],
            Family::Weibull { lambda, alpha } | Family::LogLogistic { lambda, alpha } => {
                vec![lambda, alpha]
            }
            Family::LogNormal { sigma, .. } => vec![1.0, sigma],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = self.tag().param_names();
        write!(f, "{}(", self.tag())?;
        for (i, (n, v)) in names.iter().zip(self.params()).enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{n}={v}")?;
        }
        f.write_str(")")
    }
}

pub fn survival(family: &Family, t: f64) -> Result<f64> {
    check_point(family, t)?;
    Ok(family.survival(t))
}

pub fn hazard(family: &Family, t: f64) -> Result<f64> {
    check_point(family, t)?;
    Ok(family.hazard(t))
}

pub fn cum_hazard(family: &Family, t: f64) -> Result<f64> {
    check_point(family, t)?;
    Ok(family.cum_hazard(t))
}

fn check_point(family: &Family, t: f64) -> Result<()> {
    family.validate()?;
    if t.is_nan() || t < 0.0 {
        return invalid(format!("time must be >= 0, got {t}"));
    }
    Ok(())
}

/// Observations as the likelihood sees them.
#[derive(Debug, Clone)]
struct LikelihoodData {
    /// (duration, event observed)
    obs: Vec<(f64, bool)>,
    events: usize,
    total_time: f64,
}

impl LikelihoodData {
    /// Zero event durations become `zero_substitute` for log-time families;
    /// zero censored durations contribute `log S(0) = 0` and are dropped there.
    fn prepare(tag: FamilyTag, cohort: &Cohort, zero_substitute: f64) -> Result<Self> {
        cohort.validate()?;
        let mut obs = Vec::with_capacity(cohort.len());
        for o in &cohort.observations {
            let mut t = o.duration;
            if tag.uses_log_time() && t == 0.0 {
                if o.censored {
                    continue;
                }
                t = zero_substitute;
            }
            obs.push((t, o.is_event()));
        }
        Ok(LikelihoodData {
            obs,
            events: cohort.event_count(),
            total_time: cohort.total_time(),
        })
    }
}

/// Censored log-likelihood `Σ (1-δ) log f(t) + δ log S(t)`.
pub fn log_likelihood(family: &Family, cohort: &Cohort) -> Result<f64> {
    log_likelihood_with(family, cohort, DEFAULT_ZERO_SUBSTITUTE_HOURS)
}

pub fn log_likelihood_with(family: &Family, cohort: &Cohort, zero_substitute: f64) -> Result<f64> {
    family.validate()?;
    let data = LikelihoodData::prepare(family.tag(), cohort, zero_substitute)?;
    Ok(evaluate(family.tag(), &data, &family.to_working()).value)
}

/// Log-likelihood with gradient and Hessian in working (log) parameters.
fn evaluate(tag: FamilyTag, data: &LikelihoodData, eta: &[f64]) -> Evaluation {
    let p = tag.param_count();
    let mut value = 0.0;
    let mut g = vec![0.0; p];
    let mut h = vec![0.0; p * p];

    match tag {
        FamilyTag::Exponential => {
            let a = eta[0];
            let lambda = a.exp();
            for &(t, event) in &data.obs {
                let e = if event { 1.0 } else { 0.0 };
                value += e * a - lambda * t;
                g[0] += e - lambda * t;
                h[0] -= lambda * t;
            }
        }
        FamilyTag::Weibull => {
            let (a, alpha) = (eta[0], eta[1].exp());
            let b = eta[1];
            for &(t, event) in &data.obs {
                let e = if event { 1.0 } else { 0.0 };
                let u = a + t.ln();
                let z = (alpha * u).exp();
                let au = alpha * u;
                value += e * (a + b + (alpha - 1.0) * u) - z;
                g[0] += e * alpha - alpha * z;
                g[1] += e * (1.0 + au) - au * z;
                h[0] -= alpha * alpha * z;
                h[1] += e * alpha - alpha * z * (1.0 + au);
                h[3] += e * au - au * z * (1.0 + au);
            }
            h[2] = h[1];
        }
        FamilyTag::LogLogistic => {
            let (a, alpha) = (eta[0], eta[1].exp());
            let b = eta[1];
            for &(t, event) in &data.obs {
                let e = if event { 1.0 } else { 0.0 };
                let c = 1.0 + e;
                let u = a + t.ln();
                let au = alpha * u;
                // log(1 + z) and z / (1 + z) with z = exp(au), overflow-safe
                let (log1pz, prob) = if au > 0.0 {
                    let r = (-au).exp();
                    (au + r.ln_1p(), 1.0 / (1.0 + r))
                } else {
                    let z = au.exp();
                    (z.ln_1p(), z / (1.0 + z))
                };
                let k = 1.0 + au * (1.0 - prob);
                value += e * (a + b + (alpha - 1.0) * u) - c * log1pz;
                g[0] += e * alpha - c * alpha * prob;
                g[1] += e * (1.0 + au) - c * au * prob;
                h[0] -= c * alpha * alpha * prob * (1.0 - prob);
                h[1] += e * alpha - c * alpha * prob * k;
                h[3] += e * au - c * au * prob * k;
            }
            h[2] = h[1];
        }
        FamilyTag::LogNormal => {
            let (mu, s) = (eta[0], eta[1]);
            let sigma = s.exp();
            for &(t, event) in &data.obs {
                let lt = t.ln();
                let z = (lt - mu) / sigma;
                if event {
                    value += std_normal_ln_pdf(z) - s - lt;
                    g[0] += z / sigma;
                    g[1] += z * z - 1.0;
                    h[0] -= 1.0 / (sigma * sigma);
                    h[1] -= 2.0 * z / sigma;
                    h[3] -= 2.0 * z * z;
                } else {
                    let m = std_normal_hazard(z);
                    let w = z * m * (m - z) + m;
                    value += std_normal_ln_sf(z);
                    g[0] += m / sigma;
                    g[1] += m * z;
                    h[0] -= m * (m - z) / (sigma * sigma);
                    h[1] -= w / sigma;
                    h[3] -= z * w;
                }
            }
            h[2] = h[1];
        }
    }

    Evaluation {
        value,
        gradient: DVector::from_vec(g),
        hessian: DMatrix::from_row_slice(p, p, &h),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub conf_level: f64,
    /// Duration (hours) used in place of zero event durations for log-time families.
    pub zero_substitute: f64,
    pub newton: NewtonOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            conf_level: 0.95,
            zero_substitute: DEFAULT_ZERO_SUBSTITUTE_HOURS,
            newton: NewtonOptions::default(),
        }
    }
}

impl FitOptions {
    pub fn with_conf_level(conf_level: f64) -> Self {
        FitOptions {
            conf_level,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub family: Family,
    pub log_likelihood: f64,
    /// Inverse observed information on the natural parameter scale.
    pub covariance: Vec<Vec<f64>>,
    /// Normal-approximation interval per parameter.
    pub ci: Vec<(f64, f64)>,
    pub conf_level: f64,
    /// Number of observed churns `d`.
    pub churn_count: usize,
    /// Total time at risk `R` (hours).
    pub total_time: f64,
    pub iterations: usize,
    /// The Hessian at the optimum was not negative definite.
    pub hessian_warning: bool,
}

impl FitResult {
    pub fn params(&self) -> Vec<f64> {
        self.family.params()
    }

    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.covariance.len())
            .map(|i| self.covariance[i][i].sqrt())
            .collect()
    }
}

/// Closed-form exponential fit: `λ = d / R`, `Var λ = d / R²`.
pub fn fit_exponential(cohort: &Cohort, conf_level: f64) -> Result<FitResult> {
    cohort.validate()?;
    let z = z_critical(conf_level)?;
    let d = cohort.event_count();
    let r = cohort.total_time();
    if d == 0 {
        return Err(Error::DegenerateData("no observed churns".into()));
    }
    if r <= 0.0 {
        return Err(Error::DegenerateData("total time at risk is zero".into()));
    }
    let df = d as f64;
    let lambda = df / r;
    let var = df / (r * r);
    let half = z * var.sqrt();
    Ok(FitResult {
        family: Family::Exponential { lambda },
        log_likelihood: df * lambda.ln() - lambda * r,
        covariance: vec![vec![var]],
        ci: vec![(lambda - half, lambda + half)],
        conf_level,
        churn_count: d,
        total_time: r,
        iterations: 0,
        hessian_warning: false,
    })
}

pub fn fit_mle(tag: FamilyTag, cohort: &Cohort, conf_level: f64) -> Result<FitResult> {
    fit_mle_with(tag, cohort, &FitOptions::with_conf_level(conf_level))
}

/// Censored MLE by Newton-Raphson on log-scale parameters.
pub fn fit_mle_with(tag: FamilyTag, cohort: &Cohort, options: &FitOptions) -> Result<FitResult> {
    let z = z_critical(options.conf_level)?;
    let data = LikelihoodData::prepare(tag, cohort, options.zero_substitute)?;
    if data.events < tag.param_count() {
        return Err(Error::DegenerateData(format!(
            "{tag} needs at least {} observed churns, got {}",
            tag.param_count(),
            data.events
        )));
    }
    if data.total_time <= 0.0 {
        return Err(Error::DegenerateData("total time at risk is zero".into()));
    }

    let init = initial_guess(tag, &data).to_working();
    let outcome = newton_raphson(
        |eta| Ok(evaluate(tag, &data, eta.as_slice())),
        &init,
        options.newton,
    )?;
    let family = Family::from_working(tag, outcome.argmax.as_slice());

    let hessian = &outcome.at_optimum.hessian;
    let hessian_warning = !is_negative_definite(hessian);
    let working_cov = (-hessian)
        .try_inverse()
        .ok_or_else(|| Error::Numerical("observed information is singular".into()))?;
    let jac = family.working_jacobian();
    let p = jac.len();
    let covariance: Vec<Vec<f64>> = (0..p)
        .map(|i| {
            (0..p)
                .map(|j| jac[i] * working_cov[(i, j)] * jac[j])
                .collect()
        })
        .collect();
    let ci = family
        .params()
        .iter()
        .enumerate()
        .map(|(i, &theta)| {
            let half = z * covariance[i][i].max(0.0).sqrt();
            (theta - half, theta + half)
        })
        .collect();

    Ok(FitResult {
        family,
        log_likelihood: outcome.at_optimum.value,
        covariance,
        ci,
        conf_level: options.conf_level,
        churn_count: data.events,
        total_time: data.total_time,
        iterations: outcome.iterations,
        hessian_warning,
    })
}

fn initial_guess(tag: FamilyTag, data: &LikelihoodData) -> Family {
    let lambda = data.events as f64 / data.total_time;
    match tag {
        FamilyTag::Exponential => Family::Exponential { lambda },
        FamilyTag::Weibull => Family::Weibull { lambda, alpha: 1.0 },
        FamilyTag::LogLogistic => Family::LogLogistic { lambda, alpha: 1.0 },
        FamilyTag::LogNormal => {
            let logs: Vec<f64> = data.obs.iter().filter(|o| o.1).map(|o| o.0.ln()).collect();
            let n = logs.len() as f64;
            let mu = logs.iter().sum::<f64>() / n;
            let var = logs.iter().map(|l| (l - mu).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let sigma = if var > 0.0 { var.sqrt() } else { 1.0 };
            Family::LogNormal { mu, sigma }
        }
    }
}
