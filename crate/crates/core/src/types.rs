//! Shared domain types and event-table construction.

use crate::error::{invalid, Result};

/// One subject's duration (hours) and whether the churn event was observed.
///
/// `censored == true` means the subject was still active when observation
/// stopped, so `duration` is only a lower bound on the true playtime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub duration: f64,
    pub censored: bool,
}

impl Observation {
    pub fn new(duration: f64, censored: bool) -> Self {
        Observation { duration, censored }
    }

    pub fn event(duration: f64) -> Self {
        Observation::new(duration, false)
    }

    pub fn censored(duration: f64) -> Self {
        Observation::new(duration, true)
    }

    pub fn is_event(&self) -> bool {
        !self.censored
    }
}

/// A labeled collection of observations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Cohort {
    pub label: String,
    pub observations: Vec<Observation>,
}

impl Cohort {
    pub fn new(label: impl Into<String>, observations: Vec<Observation>) -> Self {
        Cohort {
            label: label.into(),
            observations,
        }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Number of observed churns.
    pub fn event_count(&self) -> usize {
        self.observations.iter().filter(|o| o.is_event()).count()
    }

    /// Total time at risk: the sum of all durations, censored or not.
    pub fn total_time(&self) -> f64 {
        self.observations.iter().map(|o| o.duration).sum()
    }

    /// Largest recorded duration, if any.
    pub fn max_duration(&self) -> Option<f64> {
        self.observations
            .iter()
            .map(|o| o.duration)
            .fold(None, |acc, t| Some(acc.map_or(t, |a: f64| a.max(t))))
    }

    /// Every duration multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Cohort {
        Cohort {
            label: self.label.clone(),
            observations: self
                .observations
                .iter()
                .map(|o| Observation::new(o.duration * factor, o.censored))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, o) in self.observations.iter().enumerate() {
            if !o.duration.is_finite() || o.duration < 0.0 {
                return invalid(format!(
                    "observation {i} of cohort '{}' has invalid duration {}",
                    self.label, o.duration
                ));
            }
        }
        Ok(())
    }
}

/// Risk-set summary at one distinct event time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventTableRow {
    pub time: f64,
    /// Subjects with duration >= `time`.
    pub at_risk: usize,
    /// Observed churns at exactly `time`.
    pub events: usize,
    /// Censorings in `[previous event time, time)`, or `[0, time)` for the
    /// first row. A censoring tied with an event time stays at risk for that
    /// event and is counted in the following gap.
    pub censored_in_gap: usize,
}

impl EventTableRow {
    /// Fraction churning, `d / n`.
    pub fn hazard(&self) -> f64 {
        self.events as f64 / self.at_risk as f64
    }
}

/// Event-table rows plus the cohort facts estimators need beyond the rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventTable {
    pub rows: Vec<EventTableRow>,
    /// Cohort size `m`.
    pub subjects: usize,
    /// Censorings at or after the last event time.
    pub censored_after_last: usize,
    /// Largest observed duration, censored or not; 0 for an empty cohort.
    pub max_time: f64,
    /// Whether some observation at `max_time` is censored.
    pub max_time_censored: bool,
}

impl EventTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn total_events(&self) -> usize {
        self.rows.iter().map(|r| r.events).sum()
    }

    pub fn total_censored(&self) -> usize {
        self.rows.iter().map(|r| r.censored_in_gap).sum::<usize>() + self.censored_after_last
    }

    pub fn iter(&self) -> std::slice::Iter<'_, EventTableRow> {
        self.rows.iter()
    }
}

/// Builds the event table: one row per distinct uncensored time, ascending.
pub fn build_event_table(cohort: &Cohort) -> Result<EventTable> {
    cohort.validate()?;
    let mut obs: Vec<Observation> = cohort.observations.clone();
    // events before censorings at equal times, so tied censorings stay at risk
    obs.sort_by(|a, b| {
        a.duration
            .total_cmp(&b.duration)
            .then(a.censored.cmp(&b.censored))
    });

    let m = obs.len();
    let mut rows = Vec::new();
    let mut at_risk = m;
    let mut pending_censored = 0usize;
    let mut i = 0;
    while i < m {
        let t = obs[i].duration;
        let mut events = 0;
        let mut censored = 0;
        while i < m && obs[i].duration == t {
            if obs[i].censored {
                censored += 1;
            } else {
                events += 1;
            }
            i += 1;
        }
        if events > 0 {
            rows.push(EventTableRow {
                time: t,
                at_risk,
                events,
                censored_in_gap: pending_censored,
            });
            pending_censored = 0;
        }
        pending_censored += censored;
        at_risk -= events + censored;
    }

    let (max_time, max_time_censored) = match obs.last() {
        Some(last) => {
            let t = last.duration;
            let censored = obs
                .iter()
                .rev()
                .take_while(|o| o.duration == t)
                .any(|o| o.censored);
            (t, censored)
        }
        None => (0.0, false),
    };

    Ok(EventTable {
        rows,
        subjects: m,
        censored_after_last: pending_censored,
        max_time,
        max_time_censored,
    })
}

/// Survivors and failures per discrete step, from per-step hazards.
///
/// Step `k` (1-based) has `survivors_k = n0 * prod_{u<=k} (1 - h_u)` and
/// `failures_k = survivors_{k-1} * h_k`. Values are not rounded.
pub fn discrete_survival_from_hazard(
    initial_count: u64,
    hazards: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if let Some((k, h)) = hazards
        .iter()
        .enumerate()
        .find(|(_, h)| !(0.0..=1.0).contains(*h))
    {
        return invalid(format!("hazard at step {} is {h}, outside [0, 1]", k + 1));
    }
    let mut survivors = initial_count as f64;
    Ok(hazards
        .iter()
        .map(|&h| {
            let failures = survivors * h;
            survivors *= 1.0 - h;
            (survivors, failures)
        })
        .collect())
}

/// Which function a [`StepCurve`] estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    Survival,
    CumulativeHazard,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub time: f64,
    pub value: f64,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
}

/// Right-continuous step function; the value before the first point is the
/// origin value (1 for survival, 0 for cumulative hazard).
#[derive(Debug, Clone, PartialEq)]
pub struct StepCurve {
    pub kind: CurveKind,
    pub points: Vec<CurvePoint>,
}

impl StepCurve {
    pub fn origin_value(&self) -> f64 {
        match self.kind {
            CurveKind::Survival => 1.0,
            CurveKind::CumulativeHazard => 0.0,
        }
    }

    /// Value at `t`, using right-continuity at jump points.
    pub fn value_at(&self, t: f64) -> f64 {
        let idx = self.points.partition_point(|p| p.time <= t);
        if idx == 0 {
            self.origin_value()
        } else {
            self.points[idx - 1].value
        }
    }

    /// Value just before `t` (left limit).
    pub fn value_before(&self, t: f64) -> f64 {
        let idx = self.points.partition_point(|p| p.time < t);
        if idx == 0 {
            self.origin_value()
        } else {
            self.points[idx - 1].value
        }
    }

    /// Points prefixed with the origin at `t = 0`, as written to curve files.
    pub fn with_origin(&self) -> Vec<CurvePoint> {
        let mut out = Vec::with_capacity(self.points.len() + 1);
        out.push(CurvePoint {
            time: 0.0,
            value: self.origin_value(),
            ci_lower: None,
            ci_upper: None,
        });
        out.extend_from_slice(&self.points);
        out
    }

    /// Checks the monotonicity, range and CI-bracketing invariants.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let mut prev_t = f64::NEG_INFINITY;
        let mut prev_v = self.origin_value();
        for p in &self.points {
            if p.time < prev_t {
                return Err(format!("times not ascending at t={}", p.time));
            }
            match self.kind {
                CurveKind::Survival => {
                    if !(0.0..=1.0).contains(&p.value) || p.value > prev_v {
                        return Err(format!("survival invariant broken at t={}", p.time));
                    }
                }
                CurveKind::CumulativeHazard => {
                    if p.value.is_nan() || p.value < 0.0 || p.value < prev_v {
                        return Err(format!(
                            "cumulative hazard invariant broken at t={}",
                            p.time
                        ));
                    }
                }
            }
            if let Some(lo) = p.ci_lower {
                if lo > p.value {
                    return Err(format!("lower bound above value at t={}", p.time));
                }
            }
            if let Some(hi) = p.ci_upper {
                if hi < p.value {
                    return Err(format!("upper bound below value at t={}", p.time));
                }
            }
            prev_t = p.time;
            prev_v = p.value;
        }
        Ok(())
    }
}
