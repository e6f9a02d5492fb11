//! Scenario files, synthetic experiments and end-to-end inversion runs on top
//! of the `rbsmc` library.

pub mod config;
pub mod error;
pub mod files;
pub mod run;

pub use config::ScenarioConfig;
pub use error::{HarnessError, Result};
pub use run::Run;
