//! Scenario-driven frontend: JSON scenario schema, bundled case studies,
//! verification/simulation/sweep pipelines, CSV traces, metric sidecars and
//! plot-script emission.

pub mod output;
pub mod pipeline;
pub mod scenario;

pub use pipeline::{run_simulate, run_sweep, run_verify, SimulateOutcome, VerifyOutcome};
pub use scenario::{bundled_names, bundled_scenario, load_scenario, Scenario};
