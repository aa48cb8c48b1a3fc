//! Trigger detector models.
//!
//! Photons are detected independently with probability `eta` each. A
//! threshold detector only reports whether at least one was seen; a
//! number-resolving detector reports how many. Dark counts are not modeled.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::photon_stats::ModeDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    #[default]
    Threshold,
    NumberResolving,
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DetectorKind::Threshold => f.write_str("threshold"),
            DetectorKind::NumberResolving => f.write_str("number_resolving"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    eta: f64,
    kind: DetectorKind,
}

impl DetectorSpec {
    pub fn new(eta: f64, kind: DetectorKind) -> Result<Self> {
        check_efficiency(eta)?;
        Ok(Self { eta, kind })
    }

    pub fn threshold(eta: f64) -> Result<Self> {
        Self::new(eta, DetectorKind::Threshold)
    }

    pub fn number_resolving(eta: f64) -> Result<Self> {
        Self::new(eta, DetectorKind::NumberResolving)
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn kind(&self) -> DetectorKind {
        self.kind
    }
}

/// Outcome of offering one mode's photons to the detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detection {
    Threshold(bool),
    /// Number of photons registered.
    Resolved(u64),
}

impl Detection {
    pub fn fired(&self) -> bool {
        match *self {
            Detection::Threshold(fired) => fired,
            Detection::Resolved(k) => k > 0,
        }
    }

    pub fn count(&self) -> Option<u64> {
        match *self {
            Detection::Threshold(_) => None,
            Detection::Resolved(k) => Some(k),
        }
    }
}

pub(crate) fn check_efficiency(eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(invalid(format!("efficiency must lie in [0, 1], got {eta}")));
    }
    Ok(())
}

/// Probability that `n` incident photons fire a detector of efficiency `eta`:
/// `1 - (1 - eta)^n`.
pub fn fire_prob(n: u64, eta: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    if eta >= 1.0 {
        return 1.0;
    }
    // -expm1(n ln(1 - eta)) keeps precision for small eta
    let exponent = n as f64 * (-eta).ln_1p();
    -exponent.exp_m1()
}

/// Probability that one mode of `dist` fires the detector.
pub fn mode_fire_prob(dist: &ModeDistribution, eta: f64) -> f64 {
    dist.detect_weight(eta)
}

/// Offer `n` photons to the detector.
pub fn detect<R: Rng + ?Sized>(n: u64, spec: &DetectorSpec, rng: &mut R) -> Detection {
    match spec.kind {
        DetectorKind::Threshold => {
            if n == 0 {
                Detection::Threshold(false)
            } else {
                Detection::Threshold(rng.random_bool(fire_prob(n, spec.eta)))
            }
        }
        DetectorKind::NumberResolving => {
            let eta = spec.eta;
            let k = match n {
                0 => 0,
                _ if eta >= 1.0 => n,
                _ if eta <= 0.0 => 0,
                _ => (0..n).filter(|_| rng.random_bool(eta)).count() as u64,
            };
            Detection::Resolved(k)
        }
    }
}
