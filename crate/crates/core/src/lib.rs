//! Analytic and Monte Carlo model of a delay-multiplexed heralded
//! single-photon source.
//!
//! A pump pulse populates `N_D` downconverter modes, each with mean pair
//! number `n_bar / N_D`. The herald photons of the modes reach a single
//! threshold detector through delays of increasing length; the first mode to
//! fire the detector is recorded and every later mode is ignored (deadtime).
//! The output arm collects the twin photons of all modes. Knowing which delay
//! fired sharpens the probability that exactly one pair was produced.
//!
//! * [`photon_stats`]: single-mode thermal and Poisson photon-number laws.
//! * [`detector`]: threshold and number-resolving detector models.
//! * [`certification`]: closed-form single-photon probabilities.
//! * [`montecarlo`]: pulse-level simulation used as an independent oracle.
//! * [`experiments`]: figure datasets, sweeps and analytic/MC comparisons.
//! * [`cli`]: the `herald` command-line frontend.

pub mod certification;
pub mod cli;
pub mod detector;
pub mod error;
pub mod experiments;
pub mod format;
pub mod montecarlo;
pub mod photon_stats;

pub use certification::SourceConfig;
pub use detector::{DetectorKind, DetectorSpec};
pub use error::{HeraldError, Result};
pub use photon_stats::{DistributionKind, ModeDistribution};
