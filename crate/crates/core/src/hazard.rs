//! Hazard-rate estimation: kernel smoothing of Nelson-Aalen increments and
//! piecewise-constant rates over fixed-width bins.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::types::{Cohort, EventTable};

/// Number of grid points used when no grid is given.
pub const DEFAULT_GRID_POINTS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Uniform,
    Epanechnikov,
    Gaussian,
}

impl KernelKind {
    /// Kernel density at `u`; each integrates to one.
    pub fn weight(self, u: f64) -> f64 {
        match self {
            KernelKind::Uniform => {
                if u.abs() <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            KernelKind::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            KernelKind::Gaussian => (-0.5 * u * u).exp() / (2.0 * PI).sqrt(),
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelKind::Uniform => "uniform",
            KernelKind::Epanechnikov => "epanechnikov",
            KernelKind::Gaussian => "gaussian",
        })
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(KernelKind::Uniform),
            "epanechnikov" | "epa" => Ok(KernelKind::Epanechnikov),
            "gaussian" | "normal" => Ok(KernelKind::Gaussian),
            _ => invalid(format!("unknown kernel '{s}'")),
        }
    }
}

/// How kernel mass falling below `t = 0` is handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryCorrection {
    /// Plain kernel sum; mass below zero is lost.
    None,
    /// Mirror the mass below zero back onto the positive axis.
    #[default]
    Reflection,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Bandwidth in hours.
    pub bandwidth: f64,
    pub boundary: BoundaryCorrection,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, bandwidth: f64) -> Self {
        KernelSpec {
            kind,
            bandwidth,
            boundary: BoundaryCorrection::default(),
        }
    }

    pub fn without_boundary_correction(mut self) -> Self {
        self.boundary = BoundaryCorrection::None;
        self
    }
}

/// Smoothed hazard on a grid, in churns per hour.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

/// `(t_max - t_min) / 8` over the event times.
pub fn default_bandwidth(table: &EventTable) -> Result<f64> {
    let (first, last) = match (table.rows.first(), table.rows.last()) {
        (Some(a), Some(b)) => (a.time, b.time),
        _ => return Err(Error::DegenerateData("no events to smooth".into())),
    };
    let b = (last - first) / 8.0;
    if b > 0.0 {
        Ok(b)
    } else if last > 0.0 {
        Ok(last / 8.0)
    } else {
        Err(Error::DegenerateData(
            "all events share one time; give a bandwidth explicitly".into(),
        ))
    }
}

/// `points` evenly spaced values from 0 to the largest event time.
pub fn default_grid(table: &EventTable, points: usize) -> Result<Vec<f64>> {
    let last = table
        .rows
        .last()
        .map(|r| r.time)
        .ok_or_else(|| Error::DegenerateData("no events to smooth".into()))?;
    if points < 2 || last <= 0.0 {
        return Ok(vec![0.0]);
    }
    let step = last / (points - 1) as f64;
    Ok((0..points).map(|i| i as f64 * step).collect())
}

/// `ĥ(t) = (1/b) Σ K((t - t_i)/b) d_i/n_i`, plus the mirrored term
/// `K((t + t_i)/b)` under reflection.
pub fn kernel_hazard(table: &EventTable, spec: &KernelSpec, grid: &[f64]) -> Result<HazardCurve> {
    let b = spec.bandwidth;
    if !(b.is_finite() && b > 0.0) {
        return invalid(format!("bandwidth must be positive, got {b}"));
    }
    if grid.is_empty() {
        return invalid("evaluation grid is empty");
    }
    if grid.iter().any(|t| !t.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("evaluation grid must be finite and strictly ascending");
    }

    let increments: Vec<(f64, f64)> = table.rows.iter().map(|r| (r.time, r.hazard())).collect();
    let values = grid
        .iter()
        .map(|&t| {
            let sum: f64 = increments
                .iter()
                .map(|&(ti, q)| {
                    let mut k = spec.kind.weight((t - ti) / b);
                    if spec.boundary == BoundaryCorrection::Reflection {
                        k += spec.kind.weight((t + ti) / b);
                    }
                    k * q
                })
                .sum();
            sum / b
        })
        .collect();
    Ok(HazardCurve {
        grid: grid.to_vec(),
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBin {
    pub start: f64,
    pub end: f64,
    /// Observed churns in `[start, end)`.
    pub events: usize,
    /// Hours spent inside the bin, summed over all subjects.
    pub exposure: f64,
    /// `events / exposure`; absent when nobody was exposed.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseRates {
    pub bin_width: f64,
    pub bins: Vec<RateBin>,
}

impl PiecewiseRates {
    pub fn total_exposure(&self) -> f64 {
        self.bins.iter().map(|b| b.exposure).sum()
    }
}

/// Constant-hazard (exponential) rate within bins `[k w, (k+1) w)`.
///
/// An event exactly on a boundary counts in the later bin. Bins run up to the
/// one containing the longest observation.
pub fn piecewise_exponential(cohort: &Cohort, bin_width: f64) -> Result<PiecewiseRates> {
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return invalid(format!("bin width must be positive, got {bin_width}"));
    }
    cohort.validate()?;
    let n_bins = match cohort.max_duration() {
        Some(max) => (max / bin_width).floor() as usize + 1,
        None => 0,
    };
    let mut events = vec![0usize; n_bins];
    let mut exposure = vec![0.0f64; n_bins];
    for o in &cohort.observations {
        let k = (o.duration / bin_width).floor() as usize;
        for e in exposure.iter_mut().take(k) {
            *e += bin_width;
        }
        exposure[k] += o.duration - k as f64 * bin_width;
        if o.is_event() {
            events[k] += 1;
        }
    }
    let bins = (0..n_bins)
        .map(|k| RateBin {
            start: k as f64 * bin_width,
            end: (k + 1) as f64 * bin_width,
            events: events[k],
            exposure: exposure[k],
            rate: (exposure[k] > 0.0).then(|| events[k] as f64 / exposure[k]),
        })
        .collect();
    Ok(PiecewiseRates { bin_width, bins })
}
