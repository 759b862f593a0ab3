#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord)]

use churnkit::compare::{logrank, WeightSpec};
use churnkit::hazard::{kernel_hazard, piecewise_exponential, KernelKind, KernelSpec};
use churnkit::metrics::{mean_auc, quantile};
use churnkit::nonparam::{kaplan_meier, km_to_cumhaz, na_to_survival, nelson_aalen};
use churnkit::parametric::{fit_mle, Family, FamilyTag};
use churnkit::{build_event_table, Cohort, Observation};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    a == b || (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

fn hms(s: &str) -> f64 {
    let p: Vec<f64> = s.split(':').map(|x| x.parse().unwrap()).collect();
    (p[0] * 3600.0 + p[1] * 60.0 + p[2]) / 3600.0
}

/// The ten players of the worked example, at one-second resolution.
pub fn table_two() -> Cohort {
    let rows = [
        ("00:22:51", false),
        ("05:55:32", false),
        ("00:10:48", false),
        ("00:00:13", false),
        ("01:50:59", false),
        ("02:21:48", false),
        ("00:47:27", true),
        ("04:45:25", false),
        ("11:55:22", false),
        ("00:01:53", false),
    ];
    Cohort::new(
        "table2",
        rows.iter()
            .map(|&(t, c)| Observation::new(hms(t), c))
            .collect(),
    )
}

/// Greenwood's variance as the delta-method variance of `∏ (1 - q_j)` with
/// independent binomial `q̂_j`, derivatives by central differences.
/// Returns `(S, Var S)` per distinct event time; the variance is `None`
/// from the first time where everyone at risk churns.
pub fn delta_method_km(cohort: &Cohort) -> Vec<(f64, f64, Option<f64>)> {
    let mut times: Vec<f64> = cohort
        .observations
        .iter()
        .filter(|o| !o.censored)
        .map(|o| o.duration)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let risk: Vec<(f64, f64)> = times
        .iter()
        .map(|&t| {
            let n = cohort
                .observations
                .iter()
                .filter(|o| o.duration >= t)
                .count() as f64;
            let d = cohort
                .observations
                .iter()
                .filter(|o| o.duration == t && !o.censored)
                .count() as f64;
            (n, d)
        })
        .collect();
    let q: Vec<f64> = risk.iter().map(|&(n, d)| d / n).collect();
    let product = |q: &[f64]| q.iter().map(|x| 1.0 - x).product::<f64>();

    let mut out = Vec::new();
    let mut saturated = false;
    for k in 0..times.len() {
        let s = product(&q[..=k]);
        saturated |= q[k] == 1.0;
        let var = if saturated {
            None
        } else {
            let h = 1e-6;
            let mut v = 0.0;
            for j in 0..=k {
                let mut up = q[..=k].to_vec();
                let mut down = up.clone();
                up[j] += h;
                down[j] -= h;
                let grad = (product(&up) - product(&down)) / (2.0 * h);
                v += grad * grad * q[j] * (1.0 - q[j]) / risk[j].0;
            }
            Some(v)
        };
        out.push((times[k], s, var));
    }
    out
}

pub fn check_greenwood(cohort: &Cohort) -> Check {
    let table = build_event_table(cohort).map_err(|e| e.to_string())?;
    let km = kaplan_meier(&table, 0.95).map_err(|e| e.to_string())?;
    let oracle = delta_method_km(cohort);
    ensure!(
        oracle.len() == km.curve.points.len(),
        "row count {:?}",
        cohort
    );
    for ((t, s, var), (p, gw)) in oracle
        .iter()
        .zip(km.curve.points.iter().zip(&km.greenwood_var))
    {
        ensure!(*t == p.time, "time {t} vs {}", p.time);
        ensure!((s - p.value).abs() < 1e-12, "S({t}) {s} vs {}", p.value);
        match (var, gw) {
            (None, None) => {}
            (Some(a), Some(b)) => ensure!(
                (a - b).abs() < 1e-8,
                "Var S({t}) {a} vs {b} for {:?}",
                cohort
            ),
            _ => {
                return Err(format!(
                    "variance presence differs at t={t}: {var:?} vs {gw:?}"
                ))
            }
        }
    }
    Ok(())
}

/// Every cohort of size 1..=max_n over times {1, 2, 3} with every censoring
/// pattern. Returns the number of cohorts checked.
pub fn check_greenwood_exhaustive(max_n: usize) -> Result<usize, String> {
    let mut count = 0;
    for n in 1..=max_n {
        for code in 0..3usize.pow(n as u32) {
            let times: Vec<f64> = (0..n)
                .map(|i| (code / 3usize.pow(i as u32) % 3 + 1) as f64)
                .collect();
            for mask in 0..(1u32 << n) {
                let obs = times
                    .iter()
                    .enumerate()
                    .map(|(i, &t)| Observation::new(t, mask >> i & 1 == 1))
                    .collect();
                let cohort = Cohort::new("x", obs);
                if cohort.event_count() == 0 {
                    continue;
                }
                check_greenwood(&cohort)?;
                count += 1;
            }
        }
    }
    Ok(count)
}

/// Monotonicity, exp/log duality and `Ĥ_NA <= Ĥ_KM` on one cohort.
pub fn check_curves(cohort: &Cohort) -> Check {
    let table = build_event_table(cohort).map_err(|e| e.to_string())?;
    let km = kaplan_meier(&table, 0.95).map_err(|e| e.to_string())?;
    let na = nelson_aalen(&table);
    km.curve.check_invariants()?;
    na.curve.check_invariants()?;

    let h_km = km_to_cumhaz(&km);
    let s_na = na_to_survival(&na);
    for ((k, hk), (n, sn)) in km
        .curve
        .points
        .iter()
        .zip(&h_km.points)
        .zip(na.curve.points.iter().zip(&s_na.points))
    {
        ensure!(
            hk.value == -k.value.ln() || (k.value == 0.0 && hk.value == f64::INFINITY),
            "H_KM duality at {}",
            k.time
        );
        ensure!(
            (sn.value - (-n.value).exp()).abs() < 1e-15,
            "S_NA duality at {}",
            n.time
        );
        ensure!(
            n.value <= hk.value * (1.0 + 1e-12),
            "NA {} above KM {} at {}",
            n.value,
            hk.value,
            k.time
        );
    }
    // strict once any step has 0 < d/n < 1
    if let Some(i) = table
        .rows
        .iter()
        .position(|r| r.events > 0 && r.events < r.at_risk)
    {
        let first_full = table
            .rows
            .iter()
            .position(|r| r.events == r.at_risk)
            .unwrap_or(usize::MAX);
        if i < first_full {
            let last = first_full.min(table.rows.len()) - 1;
            ensure!(
                na.curve.points[last].value < h_km.points[last].value,
                "NA not strictly below KM"
            );
        }
    }
    Ok(())
}

pub fn shuffled(cohort: &Cohort, seed: u64) -> Cohort {
    let mut c = cohort.clone();
    c.observations.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    c
}

fn fit_params(tag: FamilyTag, cohort: &Cohort) -> Option<Vec<f64>> {
    fit_mle(tag, cohort, 0.95).ok().map(|f| f.params())
}

/// Every estimator gives the same answer for a permuted cohort.
pub fn check_order_invariance(cohort: &Cohort, other: &Cohort, seed: u64) -> Check {
    let perm = shuffled(cohort, seed);
    let (ta, tb) = (
        build_event_table(cohort).unwrap(),
        build_event_table(&perm).unwrap(),
    );
    ensure!(ta == tb, "event table");
    let (ka, kb) = (
        kaplan_meier(&ta, 0.95).unwrap(),
        kaplan_meier(&tb, 0.95).unwrap(),
    );
    ensure!(ka == kb, "kaplan-meier");
    ensure!(nelson_aalen(&ta) == nelson_aalen(&tb), "nelson-aalen");
    if !ta.is_empty() {
        ensure!(
            mean_auc(&ka, 0.95).unwrap() == mean_auc(&kb, 0.95).unwrap(),
            "mean"
        );
        for p in [0.25, 0.5, 0.75] {
            ensure!(
                quantile(&ka, p, 0.95).unwrap() == quantile(&kb, p, 0.95).unwrap(),
                "quantile {p}"
            );
        }
        let spec = KernelSpec::new(KernelKind::Epanechnikov, 1.0);
        let grid: Vec<f64> = (0..50).map(|i| i as f64 * 0.2).collect();
        ensure!(
            kernel_hazard(&ta, &spec, &grid).unwrap() == kernel_hazard(&tb, &spec, &grid).unwrap(),
            "kernel hazard"
        );
        let (pa, pb) = (
            piecewise_exponential(cohort, 1.0).unwrap(),
            piecewise_exponential(&perm, 1.0).unwrap(),
        );
        ensure!(pa.bins.len() == pb.bins.len(), "piecewise bins");
        for (a, b) in pa.bins.iter().zip(&pb.bins) {
            ensure!(
                a.events == b.events && close(a.exposure, b.exposure, 1e-12),
                "piecewise exposure"
            );
        }
        let (la, lb) = (
            logrank(cohort, other, WeightSpec::PETO_PETO),
            logrank(&perm, other, WeightSpec::PETO_PETO),
        );
        if let (Ok(la), Ok(lb)) = (la, lb) {
            ensure!(la.terms == lb.terms && la.chi2 == lb.chi2, "log-rank");
        }
    }
    for tag in FamilyTag::ALL {
        match (fit_params(tag, cohort), fit_params(tag, &perm)) {
            (Some(a), Some(b)) => {
                for (x, y) in a.iter().zip(&b) {
                    ensure!(
                        close(*x, *y, 1e-6) || (x - y).abs() < 1e-9,
                        "{tag} fit {a:?} vs {b:?}"
                    );
                }
            }
            (None, None) => {}
            (a, b) => {
                return Err(format!(
                    "{tag} fit succeeded on one order only: {a:?} {b:?}"
                ))
            }
        }
    }
    Ok(())
}

/// Rescaling durations by `c` scales mean and quantiles by `c` and maps
/// fitted parameters as λ → λ/c, μ → μ + log c.
pub fn check_scale_equivariance(cohort: &Cohort, c: f64, fits: bool) -> Check {
    let scaled = cohort.scaled(c);
    let km = kaplan_meier(&build_event_table(cohort).unwrap(), 0.95).unwrap();
    let kms = kaplan_meier(&build_event_table(&scaled).unwrap(), 0.95).unwrap();
    if !km.table.is_empty() {
        let (m, ms) = (mean_auc(&km, 0.95).unwrap(), mean_auc(&kms, 0.95).unwrap());
        ensure!(
            close(ms.mean, c * m.mean, 1e-12),
            "mean {} vs {}",
            ms.mean,
            c * m.mean
        );
        for p in [0.1, 0.25, 0.5, 0.75, 0.9] {
            let (q, qs) = (
                quantile(&km, p, 0.95).unwrap(),
                quantile(&kms, p, 0.95).unwrap(),
            );
            for (a, b) in [
                (q.estimate, qs.estimate),
                (q.lower, qs.lower),
                (q.upper, qs.upper),
            ] {
                match (a, b) {
                    (Some(a), Some(b)) => {
                        ensure!(close(b, c * a, 1e-12), "quantile {p}: {b} vs {}", c * a)
                    }
                    (None, None) => {}
                    _ => return Err(format!("quantile {p} presence changed under scaling")),
                }
            }
        }
    }
    if fits {
        for tag in FamilyTag::ALL {
            let f = fit_mle(tag, cohort, 0.95)
                .map_err(|e| format!("{tag}: {e}"))?
                .family;
            let g = fit_mle(tag, &scaled, 0.95)
                .map_err(|e| format!("{tag}: {e}"))?
                .family;
            let ok = match (f, g) {
                (Family::Exponential { lambda: a }, Family::Exponential { lambda: b }) => {
                    close(b, a / c, 1e-6)
                }
                (
                    Family::Weibull {
                        lambda: a,
                        alpha: x,
                    },
                    Family::Weibull {
                        lambda: b,
                        alpha: y,
                    },
                )
                | (
                    Family::LogLogistic {
                        lambda: a,
                        alpha: x,
                    },
                    Family::LogLogistic {
                        lambda: b,
                        alpha: y,
                    },
                ) => close(b, a / c, 1e-6) && close(x, y, 1e-6),
                (Family::LogNormal { mu: a, sigma: x }, Family::LogNormal { mu: b, sigma: y }) => {
                    (b - (a + c.ln())).abs() < 1e-6 && close(x, y, 1e-6)
                }
                _ => false,
            };
            ensure!(ok, "{tag}: {f} vs {g} at scale {c}");
        }
    }
    Ok(())
}

/// Kolmogorov-Smirnov distance of a sample from Uniform(0, 1).
pub fn ks_uniform(sample: &[f64]) -> f64 {
    let mut p = sample.to_vec();
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    p.iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max)
}
