//! Discrete-event simulation of an AP and its devices.

mod engine;
pub mod event;
pub mod experiments;
pub mod metrics;

use thiserror::Error;

pub use engine::Engine;
pub use experiments::{drift_experiment, rtt_experiment, run_scenario, run_traced};
pub use metrics::{MetricsReport, Percentiles, SampleSummary};

use crate::channel::ChannelError;
use crate::jit::JitError;
use crate::protocol::{DecodeError, ProtocolError};
use crate::scenario::ScenarioError;
use crate::timebase::TimeError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Time(#[from] TimeError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Jit(#[from] JitError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("malformed packet: {0}")]
    Decode(#[from] DecodeError),
    #[error("{0}")]
    Experiment(String),
}
