//! Single-mode photon-number distributions.
//!
//! Each downconverter mode carries either thermal (Bose-Einstein) or Poisson
//! pair statistics with mean `mu`. Besides the mass function and a sampler,
//! the module provides the efficiency-weighted generating sum
//! `sum_k (1 - eta)^k P(k)`, which is the probability that a detector of
//! efficiency `eta` stays silent on one mode.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, HeraldError, Result};

/// Tail mass left outside a truncated series.
pub const TAIL_BOUND: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistributionKind {
    /// Bose-Einstein statistics of a single PDC mode.
    #[default]
    Thermal,
    Poisson,
}

impl DistributionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DistributionKind::Thermal => "thermal",
            DistributionKind::Poisson => "poisson",
        }
    }
}

impl fmt::Display for DistributionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DistributionKind {
    type Err = HeraldError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "thermal" | "bose" => Ok(DistributionKind::Thermal),
            "poisson" => Ok(DistributionKind::Poisson),
            other => Err(invalid(format!("unknown distribution kind '{other}'"))),
        }
    }
}

/// Photon-number law of one mode with mean `mean` pairs per pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeDistribution {
    kind: DistributionKind,
    mean: f64,
}

impl ModeDistribution {
    pub fn new(kind: DistributionKind, mean: f64) -> Result<Self> {
        if !mean.is_finite() || mean < 0.0 {
            return Err(invalid(format!(
                "mode mean must be finite and >= 0, got {mean}"
            )));
        }
        Ok(Self { kind, mean })
    }

    pub fn thermal(mean: f64) -> Result<Self> {
        Self::new(DistributionKind::Thermal, mean)
    }

    pub fn poisson(mean: f64) -> Result<Self> {
        Self::new(DistributionKind::Poisson, mean)
    }

    pub fn kind(&self) -> DistributionKind {
        self.kind
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Natural log of `P(n)`; `-inf` for impossible counts.
    pub fn ln_pmf(&self, n: u64) -> f64 {
        let mu = self.mean;
        if mu == 0.0 {
            return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
        }
        let n_f = n as f64;
        match self.kind {
            // mu^n / (1 + mu)^(n + 1)
            DistributionKind::Thermal => n_f * mu.ln() - (n_f + 1.0) * mu.ln_1p(),
            DistributionKind::Poisson => n_f * mu.ln() - mu - ln_factorial(n),
        }
    }

    pub fn pmf(&self, n: u64) -> f64 {
        match (self.kind, n) {
            (DistributionKind::Thermal, 0) => 1.0 / (1.0 + self.mean),
            (DistributionKind::Poisson, 0) => (-self.mean).exp(),
            _ => self.ln_pmf(n).exp(),
        }
    }

    /// Largest count kept by truncated series; the mass above it is at most
    /// [`TAIL_BOUND`].
    pub fn horizon(&self) -> u64 {
        let mu = self.mean;
        if mu == 0.0 {
            return 0;
        }
        match self.kind {
            DistributionKind::Thermal => {
                // P(N > n) = r^(n + 1) with r = mu / (1 + mu)
                let ln_r = mu.ln() - mu.ln_1p();
                let terms = (TAIL_BOUND.ln() / ln_r).ceil().max(1.0);
                terms as u64 - 1
            }
            DistributionKind::Poisson => {
                // Chernoff: P(N >= m) <= e^-mu (e mu / m)^m for m > mu
                let mut m = mu.floor() as u64 + 1;
                loop {
                    let m_f = m as f64;
                    let ln_bound = -mu + m_f * (1.0 + mu.ln() - m_f.ln());
                    if ln_bound <= TAIL_BOUND.ln() {
                        return m - 1;
                    }
                    m += 1;
                }
            }
        }
    }

    /// Probability that a detector of efficiency `eta` does not fire on this
    /// mode, `sum_k (1 - eta)^k P(k)`.
    pub fn no_detect_weight(&self, eta: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&eta));
        let x = eta * self.mean;
        match self.kind {
            DistributionKind::Thermal => 1.0 / (1.0 + x),
            DistributionKind::Poisson => (-x).exp(),
        }
    }

    /// Complement of [`no_detect_weight`](Self::no_detect_weight) without
    /// cancellation at small `eta * mean`.
    pub fn detect_weight(&self, eta: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&eta));
        let x = eta * self.mean;
        match self.kind {
            DistributionKind::Thermal => x / (1.0 + x),
            DistributionKind::Poisson => -(-x).exp_m1(),
        }
    }

    /// `no_detect_weight` by explicit summation up to the horizon.
    pub fn no_detect_weight_series(&self, eta: f64) -> f64 {
        let miss = 1.0 - eta;
        (0..=self.horizon())
            .map(|k| miss.powi(k as i32) * self.pmf(k))
            .sum()
    }

    /// Draw one photon count.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let mu = self.mean;
        if mu == 0.0 {
            return 0;
        }
        match self.kind {
            DistributionKind::Thermal => {
                // inverse transform: P(N >= k) = r^k
                let u: f64 = 1.0 - rng.random::<f64>();
                let ln_r = mu.ln() - mu.ln_1p();
                (u.ln() / ln_r).floor() as u64
            }
            DistributionKind::Poisson => {
                let poisson = Poisson::new(mu).expect("positive finite mean");
                poisson.sample(rng) as u64
            }
        }
    }
}

fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const MEANS: [f64; 6] = [0.0, 0.01, 0.125, 0.5, 1.0, 2.0];
    const KINDS: [DistributionKind; 2] = [DistributionKind::Thermal, DistributionKind::Poisson];

    fn dists() -> impl Iterator<Item = ModeDistribution> {
        KINDS.into_iter().flat_map(|k| {
            MEANS
                .into_iter()
                .map(move |m| ModeDistribution::new(k, m).unwrap())
        })
    }

    #[test]
    fn pmf_examples() {
        assert_eq!(ModeDistribution::thermal(0.0).unwrap().pmf(0), 1.0);
        assert_eq!(ModeDistribution::thermal(0.0).unwrap().pmf(3), 0.0);
        assert!((ModeDistribution::thermal(1.0).unwrap().pmf(0) - 0.5).abs() < 1e-15);
        let p = ModeDistribution::poisson(1.0).unwrap().pmf(1);
        assert!((p - 0.367_879_441_171_442_3).abs() < 1e-15);
    }

    #[test]
    fn thermal_pmf_matches_normalized_geometric_series() {
        // r^n normalized by sum_{n <= 2000} r^n, independent of the closed form
        let mu = 1.0;
        let r: f64 = mu / (1.0 + mu);
        let norm: f64 = (0..2000).map(|n| r.powi(n)).sum();
        let d = ModeDistribution::thermal(mu).unwrap();
        for n in 0..10 {
            assert!((d.pmf(n) - r.powi(n as i32) / norm).abs() < 1e-14);
        }
    }

    #[test]
    fn poisson_pmf_matches_factorial_series() {
        // mu^n / n! normalized by the truncated exponential series
        let mu: f64 = 1.0;
        let mut terms = vec![1.0_f64];
        for n in 1..60 {
            let prev = terms[n - 1];
            terms.push(prev * mu / n as f64);
        }
        let norm: f64 = terms.iter().sum();
        let d = ModeDistribution::poisson(mu).unwrap();
        for (n, t) in terms.iter().enumerate().take(12) {
            assert!((d.pmf(n as u64) - t / norm).abs() < 1e-15);
        }
    }

    #[test]
    fn normalization_and_mean_over_horizon() {
        for d in dists() {
            let h = d.horizon();
            let total: f64 = (0..=h).map(|n| d.pmf(n)).sum();
            let mean: f64 = (0..=h).map(|n| n as f64 * d.pmf(n)).sum();
            assert!(
                (1.0 - 1e-12..=1.0 + 1e-14).contains(&total),
                "{d:?}: {total}"
            );
            assert!((mean - d.mean()).abs() < 1e-10, "{d:?}: {mean}");
        }
    }

    #[test]
    fn no_detect_weight_examples() {
        for d in dists() {
            assert_eq!(d.no_detect_weight(0.0), 1.0);
        }
        let d = ModeDistribution::thermal(1.0).unwrap();
        assert!((d.no_detect_weight(1.0) - 0.5).abs() < 1e-15);
        assert!((d.no_detect_weight_series(1.0) - 0.5).abs() < 1e-12);
        assert!((d.no_detect_weight(0.5) - 2.0 / 3.0).abs() < 1e-15);
        assert!((d.no_detect_weight_series(0.5) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_matches_series() {
        for d in dists() {
            for eta in [0.0, 0.1, 0.25, 0.5, 0.75, 1.0] {
                let closed = d.no_detect_weight(eta);
                let series = d.no_detect_weight_series(eta);
                assert!((closed - series).abs() < 1e-12, "{d:?} eta={eta}");
                assert!((closed + d.detect_weight(eta) - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn vacuum_sampler_is_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = ModeDistribution::thermal(0.0).unwrap();
        assert!((0..1000).all(|_| d.sample(&mut rng) == 0));
    }

    #[test]
    fn thermal_sample_mean() {
        let trials = 1_000_000;
        let mu = 1.0;
        let d = ModeDistribution::thermal(mu).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sum: u64 = (0..trials).map(|_| d.sample(&mut rng)).sum();
        let mean = sum as f64 / trials as f64;
        let se = (mu * (1.0 + mu) / trials as f64).sqrt();
        assert!((mean - mu).abs() < 4.0 * se, "mean {mean}");
    }

    #[test]
    fn sampler_pmf_per_bin() {
        let trials = 1_000_000u64;
        for d in [
            ModeDistribution::thermal(1.0).unwrap(),
            ModeDistribution::poisson(1.0).unwrap(),
        ] {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut bins = [0u64; 8];
            for _ in 0..trials {
                let n = d.sample(&mut rng) as usize;
                if n < bins.len() {
                    bins[n] += 1;
                }
            }
            for (n, &count) in bins.iter().enumerate() {
                let p = d.pmf(n as u64);
                let freq = count as f64 / trials as f64;
                let se = (p * (1.0 - p) / trials as f64).sqrt();
                assert!((freq - p).abs() < 4.0 * se, "{d:?} bin {n}: {freq} vs {p}");
            }
        }
    }

    #[test]
    fn kind_parses() {
        assert_eq!(
            "Thermal".parse::<DistributionKind>().unwrap(),
            DistributionKind::Thermal
        );
        assert_eq!(
            "poisson".parse::<DistributionKind>().unwrap(),
            DistributionKind::Poisson
        );
        assert!("gauss".parse::<DistributionKind>().is_err());
        assert!(ModeDistribution::thermal(-0.1).is_err());
        assert!(ModeDistribution::poisson(f64::NAN).is_err());
    }
}
