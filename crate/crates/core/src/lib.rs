//! Model-predictive pacing-rate control over a simulated bottleneck.
//!
//! - [`controller`]: the per-ACK MPC controller.
//! - [`sim`]: discrete-event bottleneck simulator producing traces.
//! - [`scenarios`]: built-in experiment configurations.
//! - [`stats`]: trace statistics and report tables.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod scenarios;
pub mod sim;
pub mod stats;

pub use controller::{
    Controller, ControllerConfig, ControllerError, ControllerState, ProbeConfig, ProbePhase,
    RateDecision, RttObservation, TargetMode,
};
pub use scenarios::Scenario;
pub use sim::{run_simulation, run_simulation_with, FlowSpec, LinkSpec, NoiseSpec, SimOutput, TraceRecord};

/// Runs a scenario and collects its full trace.
pub fn run_scenario(scenario: &Scenario) -> Result<SimOutput, sim::SimError> {
    scenario.validate()?;
    run_simulation(&scenario.link, &scenario.flows, scenario.duration, &scenario.noise)
}

/// Records kept per sweep cell, roughly.
const SWEEP_SAMPLES: f64 = 1_000_000.0;

/// Runs one buffer-sweep cell without materialising its trace.
pub fn run_sweep_cell(scenario: &Scenario) -> Result<stats::SweepCellStats, RunError> {
    scenario.validate()?;
    let steady = scenario.duration - scenario.warmup;
    let stride = (scenario.link.bottleneck_rate * steady / SWEEP_SAMPLES).ceil() as u64;
    let mut sink = stats::SweepCollector::new(stats::Window::new(scenario.warmup, scenario.duration), stride);
    let summary = run_simulation_with(&scenario.link, &scenario.flows, scenario.duration, &scenario.noise, &mut sink)?;
    Ok(sink.finish(scenario.link.bottleneck_rate, summary.loss_fraction())?)
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Sim(#[from] sim::SimError),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
}
