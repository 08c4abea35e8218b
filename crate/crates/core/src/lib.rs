//! Backdoor triggers for square-loss gradient descent.
//!
//! A single poisoning example appended to a clean regression dataset shifts
//! the empirical risk, the full-batch gradient, and the distribution of a
//! noisy gradient update. This crate builds the triggers that maximize each
//! of those shifts, checks every closed form against a direct computation,
//! and converts the noisy-update shift into a Gaussian differential privacy
//! cost.
//!
//! Modules, bottom-up:
//!
//! * [`dataset`]: examples, clean/backdoored datasets, sufficient statistics, CSV and synthetic data
//! * [`risk`]: square loss, empirical risk, gradients and the clean-vs-bad gap identities
//! * [`triggers`]: trigger objectives, closed-form constructors and a search oracle
//! * [`gdp`]: normal special functions, tradeoff curves and the GDP to (ε, δ) conversion
//! * [`sim`]: gradient descent, noisy gradient descent and the likelihood-ratio distinguisher
//! * [`cli`]: the `badgd` command-line front end

pub mod cli;
pub mod dataset;
mod error;
pub(crate) mod serde_nalgebra;
pub mod gdp;
pub mod risk;
pub(crate) mod seed;
pub mod sim;
pub mod triggers;

pub use dataset::{Dataset, Example, SufficientStats, Trigger, TriggerKind};
pub use error::{Error, Result};
pub use gdp::{GaussianPair, PrivacyBudget, TradeoffCurve};
pub use risk::{LossKind, ModelWeights};
pub use sim::{DistinguisherResult, NoisyGdConfig, Trajectory};
pub use triggers::{TriggerConstraints, TriggerReport};
