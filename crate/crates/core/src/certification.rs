//! Closed-form single-photon probabilities of the delay-multiplexed source.
//!
//! With `N_D` delays and total mean `n_bar`, every mode has mean
//! `mu = n_bar / N_D`. Let `W = sum_k (1 - eta)^k P(k)` be the probability a
//! mode does not fire the detector and `q = 1 - W`. Then:
//!
//! * delay `i` fires first with probability `(1 - q)^(i-1) q`;
//! * given that, exactly one pair exists with probability
//!   `(P(0) / W)^(i-1) * P_fire(1) * P(0)^(N_D - i)`, where the first factor
//!   is the vacuum probability of a silent earlier mode, `P_fire(1)` is the
//!   one-photon posterior of the firing mode, and later modes are never
//!   inspected because the detector is dead;
//! * summing over delays gives `n_bar eta (N_D / (n_bar + N_D))^(N_D + 1)`
//!   for thermal modes and `n_bar eta e^(-n_bar)` for Poisson modes.
//!
//! Powers of `N_D`-sized exponents are taken in log space so large delay
//! counts neither underflow nor lose precision.

use serde::{Deserialize, Serialize};

use crate::detector::{check_efficiency, fire_prob};
use crate::error::{degenerate, invalid, Result};
use crate::photon_stats::{DistributionKind, ModeDistribution};

/// Lower end of the bracket searched by [`optimize_mean`].
pub const OPTIMIZE_LOWER: f64 = 1e-3;
/// Upper end of the bracket searched by [`optimize_mean`].
pub const OPTIMIZE_UPPER: f64 = 10.0;
pub const DEFAULT_OPTIMIZE_TOL: f64 = 1e-6;

/// One source design: total mean pairs per pulse, detector efficiency,
/// number of delay paths and per-mode statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    n_bar: f64,
    eta: f64,
    n_delays: u32,
    kind: DistributionKind,
}

impl SourceConfig {
    pub fn new(n_bar: f64, eta: f64, n_delays: u32, kind: DistributionKind) -> Result<Self> {
        if !n_bar.is_finite() || n_bar < 0.0 {
            return Err(invalid(format!(
                "n_bar must be finite and >= 0, got {n_bar}"
            )));
        }
        check_efficiency(eta)?;
        if n_delays == 0 {
            return Err(invalid("number of delays must be at least 1"));
        }
        Ok(Self {
            n_bar,
            eta,
            n_delays,
            kind,
        })
    }

    pub fn thermal(n_bar: f64, eta: f64, n_delays: u32) -> Result<Self> {
        Self::new(n_bar, eta, n_delays, DistributionKind::Thermal)
    }

    pub fn poisson(n_bar: f64, eta: f64, n_delays: u32) -> Result<Self> {
        Self::new(n_bar, eta, n_delays, DistributionKind::Poisson)
    }

    pub fn n_bar(&self) -> f64 {
        self.n_bar
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn n_delays(&self) -> u32 {
        self.n_delays
    }

    pub fn kind(&self) -> DistributionKind {
        self.kind
    }

    /// Mean pairs per mode, `n_bar / N_D`.
    pub fn mode_mean(&self) -> f64 {
        self.n_bar / self.n_delays as f64
    }

    pub fn mode_distribution(&self) -> ModeDistribution {
        ModeDistribution::new(self.kind, self.mode_mean()).expect("validated mean")
    }

    fn check_delay(&self, i: u32) -> Result<()> {
        if i == 0 || i > self.n_delays {
            return Err(invalid(format!(
                "delay index {i} outside [1, {}]",
                self.n_delays
            )));
        }
        Ok(())
    }
}

/// A point of the certification fan: delay `delay_index` of an `n_delays`
/// system fired, and `probability` is the chance that exactly one pair exists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificationPoint {
    pub n_delays: u32,
    pub delay_index: u32,
    pub probability: f64,
    pub stderr: Option<f64>,
}

/// `ln W`, the log probability that one mode stays dark.
fn ln_no_detect(dist: &ModeDistribution, eta: f64) -> f64 {
    let x = eta * dist.mean();
    match dist.kind() {
        DistributionKind::Thermal => -x.ln_1p(),
        DistributionKind::Poisson => -x,
    }
}

/// Posterior photon-number distribution of a mode that fired the detector.
pub fn posterior_given_fire(dist: &ModeDistribution, eta: f64, n: u64) -> Result<f64> {
    check_efficiency(eta)?;
    let fire = dist.detect_weight(eta);
    if fire <= 0.0 {
        return Err(degenerate(format!(
            "detector cannot fire (eta={eta}, mean={})",
            dist.mean()
        )));
    }
    Ok(fire_prob(n, eta) * dist.pmf(n) / fire)
}

/// Probability that photons were present on a mode that left the detector
/// silent.
pub fn incident_given_no_fire(dist: &ModeDistribution, eta: f64) -> Result<f64> {
    check_efficiency(eta)?;
    let silent = dist.no_detect_weight(eta);
    if silent <= 0.0 {
        return Err(degenerate("detector fires with certainty"));
    }
    let mu = dist.mean();
    Ok(match dist.kind() {
        // 1 - (1 + eta mu) / (1 + mu)
        DistributionKind::Thermal => mu * (1.0 - eta) / (1.0 + mu),
        // 1 - e^(-mu (1 - eta))
        DistributionKind::Poisson => -(-mu * (1.0 - eta)).exp_m1(),
    })
}

/// `ln P_fire(1)` for the mode that fired.
fn ln_single_given_fire(dist: &ModeDistribution, eta: f64) -> f64 {
    let mu = dist.mean();
    let x = eta * mu;
    match dist.kind() {
        // eta mu / (1 + mu)^2 divided by eta mu / (1 + eta mu)
        DistributionKind::Thermal => x.ln_1p() - 2.0 * mu.ln_1p(),
        // eta mu e^-mu divided by 1 - e^(-eta mu)
        DistributionKind::Poisson => x.ln() - mu - (-(-x).exp_m1()).ln(),
    }
}

/// Probability of exactly one pair in the whole system given that delay `i`
/// (1-based) caused the trigger.
pub fn certification_at_delay(config: &SourceConfig, i: u32) -> Result<f64> {
    config.check_delay(i)?;
    if config.eta == 0.0 || config.n_bar == 0.0 {
        return Err(degenerate(format!(
            "delay {i} can never fire (n_bar={}, eta={})",
            config.n_bar, config.eta
        )));
    }
    let dist = config.mode_distribution();
    let ln_vacuum = dist.ln_pmf(0);
    let ln_dark_is_vacuum = ln_vacuum - ln_no_detect(&dist, config.eta);
    let earlier = (i - 1) as f64;
    let later = (config.n_delays - i) as f64;
    let ln_p =
        earlier * ln_dark_is_vacuum + ln_single_given_fire(&dist, config.eta) + later * ln_vacuum;
    Ok(ln_p.exp())
}

/// Probability that delay `i` (1-based) is the first to fire.
pub fn delay_fire_prob(config: &SourceConfig, i: u32) -> Result<f64> {
    config.check_delay(i)?;
    let dist = config.mode_distribution();
    let q = dist.detect_weight(config.eta);
    if q == 0.0 {
        return Ok(0.0);
    }
    let earlier = (i - 1) as f64;
    Ok((earlier * ln_no_detect(&dist, config.eta)).exp() * q)
}

/// Probability that no delay fires during a pulse, `(1 - q)^N_D`.
pub fn no_trigger_prob(config: &SourceConfig) -> f64 {
    let dist = config.mode_distribution();
    (config.n_delays as f64 * ln_no_detect(&dist, config.eta)).exp()
}

/// Probability that some delay fires during a pulse.
pub fn trigger_prob(config: &SourceConfig) -> f64 {
    let dist = config.mode_distribution();
    -(config.n_delays as f64 * ln_no_detect(&dist, config.eta)).exp_m1()
}

/// Overall probability per pump pulse of a heralded single photon.
pub fn heralded_single_prob(config: &SourceConfig) -> f64 {
    let n_bar = config.n_bar;
    let eta = config.eta;
    if n_bar == 0.0 || eta == 0.0 {
        return 0.0;
    }
    match config.kind {
        DistributionKind::Thermal => {
            // (N_D / (n_bar + N_D))^(N_D + 1) = (1 + mu)^-(N_D + 1)
            let exponent = config.n_delays as f64 + 1.0;
            n_bar * eta * (-exponent * config.mode_mean().ln_1p()).exp()
        }
        DistributionKind::Poisson => poisson_limit(n_bar, eta),
    }
}

/// Heralded single-photon probability conditioned on the trigger firing.
pub fn heralded_single_given_trigger(config: &SourceConfig) -> Result<f64> {
    if config.n_bar * config.eta == 0.0 {
        return Err(degenerate(format!(
            "trigger cannot fire (n_bar={}, eta={})",
            config.n_bar, config.eta
        )));
    }
    Ok(heralded_single_prob(config) / trigger_prob(config))
}

/// Single-photon probability of a faint laser, `n_bar eta e^(-n_bar)`, the
/// large-`N_D` limit of the thermal source.
pub fn poisson_limit(n_bar: f64, eta: f64) -> f64 {
    n_bar * eta * (-n_bar).exp()
}

/// The full certification fan of one configuration, `i = 1..=N_D`.
pub fn certification_fan(config: &SourceConfig) -> Result<Vec<CertificationPoint>> {
    (1..=config.n_delays)
        .map(|i| {
            Ok(CertificationPoint {
                n_delays: config.n_delays,
                delay_index: i,
                probability: certification_at_delay(config, i)?,
                stderr: None,
            })
        })
        .collect()
}

/// Mean pair number in `[1e-3, 10]` maximizing [`heralded_single_prob`],
/// found by golden-section search to within `tol`.
pub fn optimize_mean(eta: f64, n_delays: u32, kind: DistributionKind, tol: f64) -> Result<f64> {
    if tol.is_nan() || tol <= 0.0 || !tol.is_finite() {
        return Err(invalid(format!("tolerance must be positive, got {tol}")));
    }
    if eta.is_nan() || eta <= 0.0 {
        return Err(invalid(format!(
            "eta must be positive to optimize, got {eta}"
        )));
    }
    check_efficiency(eta)?;
    if n_delays == 0 {
        return Err(invalid("number of delays must be at least 1"));
    }
    // the log objective has the same argmax and is far flatter in round-off
    let objective = |n_bar: f64| {
        let config = SourceConfig::new(n_bar, eta, n_delays, kind).expect("bracket is valid");
        heralded_single_prob(&config).ln()
    };
    Ok(golden_section_max(
        objective,
        OPTIMIZE_LOWER,
        OPTIMIZE_UPPER,
        tol,
    ))
}

fn golden_section_max(f: impl Fn(f64) -> f64, lower: f64, upper: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lower, upper);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
