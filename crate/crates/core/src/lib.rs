//! Survival analysis for censored duration data.
//!
//! The toolkit covers the usual path from raw playtime logs to retention
//! decisions:
//!
//! - [`ingest`]: session logs or pre-aggregated durations to a [`Cohort`],
//!   with churn imputed from an inactivity window.
//! - [`nonparam`]: Kaplan-Meier and Nelson-Aalen estimates with Greenwood
//!   variance and log-log confidence intervals.
//! - [`parametric`]: exponential, Weibull, log-logistic and log-normal
//!   models fitted by censored maximum likelihood.
//! - [`hazard`]: kernel-smoothed and piecewise-exponential churn rates.
//! - [`metrics`]: mean playtime (area under the survival curve) and quantiles.
//! - [`compare`]: two-sample, weighted and stratified log-rank tests.
//! - [`sim`]: seeded synthetic cohorts for validation.
//!
//! ```
//! use churnkit::{Cohort, Observation, build_event_table, nonparam};
//!
//! let cohort = Cohort::new(
//!     "sample",
//!     vec![
//!         Observation::event(0.5),
//!         Observation::censored(1.0),
//!         Observation::event(2.0),
//!     ],
//! );
//! let table = build_event_table(&cohort).unwrap();
//! let km = nonparam::kaplan_meier(&table, 0.95).unwrap();
//! assert_eq!(km.curve.points.len(), 2);
//! ```

pub mod compare;
pub mod error;
pub mod hazard;
pub mod ingest;
pub mod metrics;
pub mod nonparam;
pub mod numerics;
pub mod parametric;
pub mod sim;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    build_event_table, discrete_survival_from_hazard, Cohort, CurveKind, CurvePoint, EventTable,
    EventTableRow, Observation, StepCurve,
};
