//! Experiment front end for the hbvm toolkit: the study drivers that
//! substantiate the method family's order and conservation behavior, and
//! the command-line interface around them.

pub mod cli;
pub mod studies;

pub use cli::parse_and_dispatch;
pub use studies::{run_drift_study, run_order_study, run_rkn_equiv, OrderStudyRow, RknEquivReport};
