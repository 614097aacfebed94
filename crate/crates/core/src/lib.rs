//! Adaptive influence-based borrowing of external controls (ECs) for
//! treatment-effect estimation in randomized controlled trials.
//!
//! The library covers the full workflow:
//!
//! 1. optional outcome calibration of ECs against RCT controls
//!    (R-learner bias function, [`calibration`]);
//! 2. an outcome model fitted on RCT controls ([`glm`]);
//! 3. per-EC influence scores measuring how much each external unit
//!    would perturb that model ([`influence`]);
//! 4. nested candidate subsets ranked by score and an MSE-optimal
//!    subset size ([`selection`]);
//! 5. AIPW treatment-effect estimation on the borrowed sample, with
//!    direct, RCT-only, and full-borrowing benchmarks ([`estimators`]).
//!
//! [`simgen`] provides seedable data-generating mechanisms and a Monte
//! Carlo harness; [`pipeline`] ties the steps into one call.

pub mod calibration;
pub mod data;
pub mod error;
pub mod estimators;
pub mod glm;
pub mod influence;
pub mod kernel;
pub mod pipeline;
pub mod selection;
pub mod simgen;

pub use error::{Error, Result, Violation, ViolationKind};
