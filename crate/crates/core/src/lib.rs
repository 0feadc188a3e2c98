//! Risk-aware layered-division-multiplexing rate allocation.
//!
//! A transmitter superimposes `M` layers; a client with channel gain `g`
//! decodes every layer whose threshold it reaches. This crate chooses the
//! thresholds and power split to maximize the β-CVaR of the decoded rate from
//! channel-gain samples, either from scratch ([`optim`]) or from an
//! initialization meta-learned over earlier deployments ([`meta`]).

pub mod cli;
pub mod error;
pub mod fading;
pub mod harness;
pub mod layer;
pub mod meta;
pub mod numerics;
pub mod optim;
pub mod risk;
pub mod scalar;
pub mod theory;

pub use error::{Error, Result};
pub use fading::{sample_gains, FadingModel, GainDataset};
pub use layer::{LayerAllocation, RiskSpec};
pub use risk::RiskReport;
