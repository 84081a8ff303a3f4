//! Estimation of driver response to variable-message-sign (VMS) diversion
//! treatments from time-binned speed/flow data of two paired roadways.
//!
//! The library covers the full analysis chain:
//!
//! - [`timeseries`]: sensor/message CSV ingestion and alignment onto a
//!   uniform time grid with explicit gap handling.
//! - [`treatment`]: fractional per-bin treatment encoding and lagged
//!   exposure regressors.
//! - [`metrics`]: flow-difference outcomes, differencing, standardization,
//!   and congestion metrics (Greenshields critical speed, critical ratio).
//! - [`inference`]: Welch t-tests, conjugate Bayesian linear regression,
//!   and a seeded Metropolis-within-Gibbs sampler with convergence
//!   diagnostics.
//! - [`pipeline`]: the three assembled analyses (pre/during t-test table,
//!   overall first/second-order treatment effects, hour-of-day strata).
//! - [`synth`]: a generative simulator with a ground-truth ledger, used as
//!   the estimator's oracle.
//! - [`report`]: JSON documents and fixed-format text tables.

pub mod inference;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod synth;
pub mod timeseries;
pub mod treatment;

pub use inference::{
    FitOutput, McmcConfig, PosteriorSummary, PriorFamily, PriorSpec, RegressionProblem,
    TTestResult,
};
pub use metrics::{FundamentalDiagram, OutcomeSeries};
pub use pipeline::{EffectReport, TTestPlan, TTestTable};
pub use synth::{GroundTruth, Scenario};
pub use timeseries::{AlignedSeries, MessageEvent, Roadway, SensorRecord, TreatmentKind};
pub use treatment::{CombineRule, ExposureVector, TreatmentSeries};
