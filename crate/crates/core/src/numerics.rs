//! Special functions and Newton-Raphson maximization.
//!
//! The normal distribution is evaluated through its upper tail `Q(x) = 1 - Φ(x)`:
//! a Taylor series (Marsaglia's form) for `|x| < 3` and a Laplace continued
//! fraction for the Mills ratio beyond, which keeps relative accuracy in the
//! far tail where p-values live.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const SERIES_LIMIT: f64 = 3.0;

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn std_normal_ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Standard normal CDF Φ(x).
pub fn std_normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x >= 0.0 {
        0.5 + (0.5 - upper_tail(x))
    } else {
        upper_tail(-x)
    }
}

/// Standard normal survival function `1 - Φ(x)`, accurate in both tails.
pub fn std_normal_sf(x: f64) -> f64 {
    std_normal_cdf(-x)
}

/// `Q(x)` for `x >= 0`.
fn upper_tail(x: f64) -> f64 {
    if x < SERIES_LIMIT {
        0.5 - std_normal_pdf(x) * marsaglia_series(x)
    } else {
        std_normal_pdf(x) / mills_continued_fraction(x)
    }
}

/// `Σ x^(2k+1) / (1·3·…·(2k+1))`, so that `Φ(x) = 1/2 + φ(x)·series`.
fn marsaglia_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut k = 1.0;
    loop {
        k += 2.0;
        term *= x2 / k;
        let next = sum + term;
        if next == sum {
            return sum;
        }
        sum = next;
    }
}

/// `x + 1/(x + 2/(x + 3/(x + …)))`, which equals `φ(x) / Q(x)`.
/// Evaluated with the modified Lentz algorithm; intended for `x >= 3`.
fn mills_continued_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    f
}

/// Normal hazard `φ(x) / (1 - Φ(x))` (inverse Mills ratio), stable for large `x`.
pub fn std_normal_hazard(x: f64) -> f64 {
    if x >= SERIES_LIMIT {
        mills_continued_fraction(x)
    } else {
        std_normal_pdf(x) / std_normal_sf(x)
    }
}

/// `ln(1 - Φ(x))` without underflow for large `x`.
pub fn std_normal_ln_sf(x: f64) -> f64 {
    if x >= SERIES_LIMIT {
        std_normal_ln_pdf(x) - mills_continued_fraction(x).ln()
    } else {
        std_normal_sf(x).ln()
    }
}

/// Inverse of Φ by bisection on [`std_normal_cdf`]; absolute error below 1e-12.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return invalid(format!("normal quantile needs p in (0, 1), got {p}"));
    }
    // bisect on the smaller tail so tiny probabilities keep their precision
    let (target, flip) = if p < 0.5 { (p, false) } else { (1.0 - p, true) };
    let (mut lo, mut hi) = (-40.0f64, 0.0f64);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if std_normal_cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let z = 0.5 * (lo + hi);
    Ok(if flip { -z } else { z })
}

/// Two-sided critical value for a confidence level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalQuantileTable {
    /// Significance level, `1 - conf_level`.
    pub alpha: f64,
    /// `z_{α/2}`, with `P(-z <= Z <= z) = 1 - alpha`.
    pub z: f64,
}

impl NormalQuantileTable {
    pub fn for_confidence(conf_level: f64) -> Result<Self> {
        if !(conf_level > 0.0 && conf_level < 1.0) {
            return invalid(format!(
                "confidence level must be in (0, 1), got {conf_level}"
            ));
        }
        let alpha = 1.0 - conf_level;
        let z = -std_normal_quantile(alpha / 2.0)?;
        Ok(NormalQuantileTable { alpha, z })
    }
}

/// Shorthand for `NormalQuantileTable::for_confidence(conf_level)?.z`.
pub fn z_critical(conf_level: f64) -> Result<f64> {
    Ok(NormalQuantileTable::for_confidence(conf_level)?.z)
}

/// Upper tail of the chi-square distribution with one degree of freedom.
pub fn chi_square_1df_sf(x: f64) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return invalid(format!("chi-square statistic must be >= 0, got {x}"));
    }
    Ok(2.0 * std_normal_sf(x.sqrt()))
}

/// Value, gradient and Hessian of an objective at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-8,
            max_iter: 100,
            max_halvings: 30,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub argmax: DVector<f64>,
    pub at_optimum: Evaluation,
    pub iterations: usize,
}

/// Maximizes an objective with Newton steps, halving any step that lowers it.
///
/// Where the Hessian is not negative definite, its eigenvalues are replaced by
/// their negated absolute values so every step is an ascent direction.
pub fn newton_raphson<F>(
    mut objective: F,
    init: &[f64],
    options: NewtonOptions,
) -> Result<NewtonOutcome>
where
    F: FnMut(&DVector<f64>) -> Result<Evaluation>,
{
    let mut x = DVector::from_column_slice(init);
    let mut current = objective(&x)?;
    check_finite(&current)?;

    for iteration in 0..options.max_iter {
        if current.gradient.norm() <= options.tol {
            return Ok(NewtonOutcome {
                argmax: x,
                at_optimum: current,
                iterations: iteration,
            });
        }
        let step = ascent_direction(&current)?;

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=options.max_halvings {
            let candidate = &x + &step * scale;
            match objective(&candidate) {
                Ok(eval) if eval.value.is_finite() && check_finite(&eval).is_ok() => {
                    let slack = 1e-12 * (1.0 + current.value.abs());
                    if eval.value >= current.value - slack {
                        accepted = Some((candidate, eval));
                        break;
                    }
                }
                _ => {}
            }
            scale *= 0.5;
        }
        match accepted {
            Some((next_x, next_eval)) => {
                x = next_x;
                current = next_eval;
            }
            None => {
                return Err(Error::Convergence {
                    iterations: iteration,
                    gradient_norm: current.gradient.norm(),
                    last_iterate: x.iter().copied().collect(),
                })
            }
        }
    }

    if current.gradient.norm() <= options.tol {
        return Ok(NewtonOutcome {
            argmax: x,
            at_optimum: current,
            iterations: options.max_iter,
        });
    }
    Err(Error::Convergence {
        iterations: options.max_iter,
        gradient_norm: current.gradient.norm(),
        last_iterate: x.iter().copied().collect(),
    })
}

fn check_finite(eval: &Evaluation) -> Result<()> {
    if eval
        .gradient
        .iter()
        .chain(eval.hessian.iter())
        .all(|v| v.is_finite())
    {
        Ok(())
    } else {
        Err(Error::Numerical("non-finite gradient or Hessian".into()))
    }
}

fn ascent_direction(eval: &Evaluation) -> Result<DVector<f64>> {
    let neg_hessian = -&eval.hessian;
    if let Some(chol) = neg_hessian.clone().cholesky() {
        return Ok(chol.solve(&eval.gradient));
    }
    let eigen = neg_hessian.symmetric_eigen();
    let largest = eigen
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    if largest == 0.0 || eigen.eigenvalues.iter().any(|v| v.abs() <= 1e-14 * largest) {
        return Err(Error::Numerical("singular Hessian".into()));
    }
    // flip negative curvature: solve with |eigenvalues|
    let coords = eigen.eigenvectors.transpose() * &eval.gradient;
    let scaled = DVector::from_iterator(
        coords.len(),
        coords
            .iter()
            .zip(eigen.eigenvalues.iter())
            .map(|(c, l)| c / l.abs()),
    );
    Ok(&eigen.eigenvectors * scaled)
}

/// Whether a symmetric matrix is negative definite.
pub fn is_negative_definite(m: &DMatrix<f64>) -> bool {
    (-m).cholesky().is_some()
}
