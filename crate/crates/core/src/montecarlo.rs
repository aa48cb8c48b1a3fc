//! Pulse-level Monte Carlo simulation of the multiplexed source.
//!
//! Every pulse draws one photon count per mode, then offers the modes to the
//! detector in delay order. The first mode that fires is recorded and the
//! detector ignores everything after it. The output arm collects all modes,
//! so the emitted photon number is the sum over modes.
//!
//! Trials are split into fixed-size chunks. Chunk `c` draws from ChaCha8
//! stream `c` of the master seed, so a run is reproducible bit for bit
//! regardless of how many workers process the chunks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certification::SourceConfig;
use crate::detector::{detect, DetectorKind, DetectorSpec};
use crate::error::{degenerate, invalid, Result};

pub const DEFAULT_CHUNK_SIZE: u64 = 65_536;

/// One simulated pump pulse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PulseRecord {
    /// Photon pairs per mode, in delay order.
    pub mode_counts: Vec<u64>,
    /// 1-based index of the delay that fired, if any.
    pub fired_delay: Option<u32>,
    pub output_photons: u64,
    /// Photons registered by a number-resolving detector on the firing mode.
    pub detected_count: Option<u64>,
}

impl PulseRecord {
    fn with_modes(n_delays: u32) -> Self {
        Self {
            mode_counts: vec![0; n_delays as usize],
            fired_delay: None,
            output_photons: 0,
            detected_count: None,
        }
    }
}

/// Simulate one pump pulse.
pub fn simulate_pulse<R: Rng + ?Sized>(
    config: &SourceConfig,
    detector: &DetectorSpec,
    rng: &mut R,
) -> PulseRecord {
    let mut record = PulseRecord::with_modes(config.n_delays());
    simulate_into(config, detector, rng, &mut record);
    record
}

fn simulate_into<R: Rng + ?Sized>(
    config: &SourceConfig,
    detector: &DetectorSpec,
    rng: &mut R,
    record: &mut PulseRecord,
) {
    let dist = config.mode_distribution();
    for count in record.mode_counts.iter_mut() {
        *count = dist.sample(rng);
    }
    record.output_photons = record.mode_counts.iter().sum();
    record.fired_delay = None;
    record.detected_count = None;
    for (idx, &n) in record.mode_counts.iter().enumerate() {
        let outcome = detect(n, detector, rng);
        if outcome.fired() {
            record.fired_delay = Some(idx as u32 + 1);
            record.detected_count = outcome.count();
            break;
        }
    }
}

/// Sufficient statistics of a batch of pulses. Per-delay vectors are indexed
/// from zero; the accessors take 1-based delay indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallySet {
    pub trials: u64,
    pub fire_counts: Vec<u64>,
    /// Fires at each delay with exactly one output photon.
    pub single_given_fire: Vec<u64>,
    pub no_fire_count: u64,
    /// Number-resolving target photon number, when tallied.
    pub target: Option<u64>,
    /// Fires at each delay with detected and output photon numbers both
    /// equal to `target`.
    pub target_counts: Vec<u64>,
}

impl TallySet {
    pub fn new(n_delays: u32, target: Option<u64>) -> Self {
        let n = n_delays as usize;
        Self {
            trials: 0,
            fire_counts: vec![0; n],
            single_given_fire: vec![0; n],
            no_fire_count: 0,
            target,
            target_counts: if target.is_some() {
                vec![0; n]
            } else {
                Vec::new()
            },
        }
    }

    pub fn n_delays(&self) -> u32 {
        self.fire_counts.len() as u32
    }

    pub fn record(&mut self, pulse: &PulseRecord) {
        self.trials += 1;
        let Some(delay) = pulse.fired_delay else {
            self.no_fire_count += 1;
            return;
        };
        let idx = delay as usize - 1;
        self.fire_counts[idx] += 1;
        if pulse.output_photons == 1 {
            self.single_given_fire[idx] += 1;
        }
        if let Some(m) = self.target {
            if pulse.output_photons == m && pulse.detected_count == Some(m) {
                self.target_counts[idx] += 1;
            }
        }
    }

    /// Add another tally of the same shape.
    pub fn merge(&mut self, other: &TallySet) {
        assert_eq!(
            self.fire_counts.len(),
            other.fire_counts.len(),
            "delay count mismatch"
        );
        assert_eq!(self.target, other.target, "target mismatch");
        self.trials += other.trials;
        self.no_fire_count += other.no_fire_count;
        add_into(&mut self.fire_counts, &other.fire_counts);
        add_into(&mut self.single_given_fire, &other.single_given_fire);
        add_into(&mut self.target_counts, &other.target_counts);
    }

    pub fn fire_count(&self, i: u32) -> u64 {
        self.fire_counts[i as usize - 1]
    }

    pub fn single_count(&self, i: u32) -> u64 {
        self.single_given_fire[i as usize - 1]
    }

    pub fn total_fires(&self) -> u64 {
        self.fire_counts.iter().sum()
    }

    pub fn total_singles(&self) -> u64 {
        self.single_given_fire.iter().sum()
    }

    fn check_delay(&self, i: u32) -> Result<()> {
        if i == 0 || i > self.n_delays() {
            return Err(invalid(format!(
                "delay index {i} outside [1, {}]",
                self.n_delays()
            )));
        }
        Ok(())
    }

    /// Binomial-proportion estimate of `quantity`.
    pub fn estimate(&self, quantity: Quantity) -> Result<Estimate> {
        let (successes, denominator) = match quantity {
            Quantity::Certification(i) => {
                self.check_delay(i)?;
                (self.single_count(i), self.fire_count(i))
            }
            Quantity::DelayRate(i) => {
                self.check_delay(i)?;
                (self.fire_count(i), self.trials)
            }
            Quantity::P1 => (self.total_singles(), self.trials),
            Quantity::P1GivenTrigger => (self.total_singles(), self.total_fires()),
            Quantity::NoFireRate => (self.no_fire_count, self.trials),
            Quantity::TargetRate => {
                if self.target.is_none() {
                    return Err(invalid("tally has no number-resolving target"));
                }
                (self.target_counts.iter().sum(), self.trials)
            }
        };
        if denominator == 0 {
            return Err(degenerate(format!(
                "{quantity}: conditioning event never observed"
            )));
        }
        Ok(Estimate::from_counts(successes, denominator))
    }
}

fn add_into(acc: &mut [u64], other: &[u64]) {
    for (a, b) in acc.iter_mut().zip(other) {
        *a += b;
    }
}

/// Quantities that can be estimated from a [`TallySet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quantity {
    /// Single-pair fraction among pulses where delay `i` fired.
    Certification(u32),
    /// Heralded single photons per pulse.
    P1,
    /// Heralded single photons per triggered pulse.
    P1GivenTrigger,
    /// Fraction of pulses where delay `i` fired.
    DelayRate(u32),
    NoFireRate,
    /// Pulses heralding exactly the number-resolving target.
    TargetRate,
}

impl Quantity {
    pub fn name(&self) -> &'static str {
        match self {
            Quantity::Certification(_) => "certification",
            Quantity::P1 => "p1",
            Quantity::P1GivenTrigger => "p1_given_trigger",
            Quantity::DelayRate(_) => "delay_rate",
            Quantity::NoFireRate => "no_fire",
            Quantity::TargetRate => "target_rate",
        }
    }

    pub fn delay_index(&self) -> Option<u32> {
        match *self {
            Quantity::Certification(i) | Quantity::DelayRate(i) => Some(i),
            _ => None,
        }
    }
}

impl std::fmt::Display for Quantity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.delay_index() {
            Some(i) => write!(f, "{}({i})", self.name()),
            None => f.write_str(self.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub trials: u64,
    pub successes: u64,
}

impl Estimate {
    pub fn from_counts(successes: u64, trials: u64) -> Self {
        let value = successes as f64 / trials as f64;
        let stderr = (value * (1.0 - value) / trials as f64).sqrt();
        Self {
            value,
            stderr,
            trials,
            successes,
        }
    }
}

/// Knobs of a Monte Carlo run beyond the source and detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub trials: u64,
    pub seed: u64,
    pub workers: usize,
    pub chunk_size: u64,
    pub target: Option<u64>,
}

impl RunOptions {
    pub fn new(trials: u64, seed: u64) -> Self {
        Self {
            trials,
            seed,
            workers: default_workers(),
            chunk_size: DEFAULT_CHUNK_SIZE,
            target: None,
        }
    }

    pub fn workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn chunk_size(mut self, chunk_size: u64) -> Self {
        self.chunk_size = chunk_size;
        self
    }

    pub fn target(mut self, target: Option<u64>) -> Self {
        self.target = target;
        self
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Simulate `trials` pulses with the default chunk size.
pub fn run_trials(
    config: &SourceConfig,
    detector: &DetectorSpec,
    trials: u64,
    seed: u64,
    workers: usize,
) -> Result<TallySet> {
    run_trials_with(
        config,
        detector,
        &RunOptions::new(trials, seed).workers(workers),
    )
}

pub fn run_trials_with(
    config: &SourceConfig,
    detector: &DetectorSpec,
    opts: &RunOptions,
) -> Result<TallySet> {
    if opts.trials < 1 {
        return Err(invalid("trials must be at least 1"));
    }
    if opts.workers < 1 {
        return Err(invalid("workers must be at least 1"));
    }
    if opts.chunk_size < 1 {
        return Err(invalid("chunk size must be at least 1"));
    }
    if opts.target.is_some() && detector.kind() != DetectorKind::NumberResolving {
        return Err(invalid(
            "a photon-number target needs a number-resolving detector",
        ));
    }
    if detector.eta() != config.eta() {
        return Err(invalid(format!(
            "detector efficiency {} differs from source efficiency {}",
            detector.eta(),
            config.eta()
        )));
    }

    let chunks = opts.trials.div_ceil(opts.chunk_size);
    let run_chunk = |chunk: u64| {
        let start = chunk * opts.chunk_size;
        let len = opts.chunk_size.min(opts.trials - start);
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(chunk);
        let mut tally = TallySet::new(config.n_delays(), opts.target);
        let mut pulse = PulseRecord::with_modes(config.n_delays());
        for _ in 0..len {
            simulate_into(config, detector, &mut rng, &mut pulse);
            tally.record(&pulse);
        }
        tally
    };

    let partials: Vec<TallySet> = if opts.workers == 1 {
        (0..chunks).map(run_chunk).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?;
        pool.install(|| (0..chunks).into_par_iter().map(run_chunk).collect())
    };

    let mut total = TallySet::new(config.n_delays(), opts.target);
    for part in &partials {
        total.merge(part);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certification::{self, SourceConfig};
    use crate::error::HeraldError;
    use proptest::prelude::*;

    fn setup(n_bar: f64, eta: f64, n_delays: u32) -> (SourceConfig, DetectorSpec) {
        (
            SourceConfig::thermal(n_bar, eta, n_delays).unwrap(),
            DetectorSpec::threshold(eta).unwrap(),
        )
    }

    fn within_4_sigma(est: &Estimate, expected: f64) -> bool {
        let sigma = (expected * (1.0 - expected) / est.trials as f64).sqrt();
        (est.value - expected).abs() <= 4.0 * sigma
    }

    #[test]
    fn dark_source_never_fires() {
        let (config, det) = setup(0.0, 1.0, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let pulse = simulate_pulse(&config, &det, &mut rng);
            assert_eq!(pulse.mode_counts, vec![0; 4]);
            assert_eq!(pulse.fired_delay, None);
            assert_eq!(pulse.output_photons, 0);
        }
    }

    #[test]
    fn pulses_are_reproducible() {
        let (config, det) = setup(2.0, 0.6, 5);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..200)
                .map(|_| simulate_pulse(&config, &det, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(17), run(17));
        assert_ne!(run(17), run(18));
    }

    #[test]
    fn pulse_record_invariants() {
        let (config, det) = setup(3.0, 0.5, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10_000 {
            let p = simulate_pulse(&config, &det, &mut rng);
            assert_eq!(p.output_photons, p.mode_counts.iter().sum::<u64>());
            if let Some(i) = p.fired_delay {
                assert!(p.mode_counts[i as usize - 1] >= 1);
            }
            assert_eq!(p.detected_count, None);
        }
    }

    #[test]
    fn first_delay_rate_matches_closed_form() {
        let (config, det) = setup(1.0, 1.0, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let trials = 1_000_000u64;
        let first = (0..trials)
            .filter(|_| simulate_pulse(&config, &det, &mut rng).fired_delay == Some(1))
            .count() as u64;
        let est = Estimate::from_counts(first, trials);
        assert!(within_4_sigma(&est, 1.0 / 9.0), "{est:?}");
    }

    #[test]
    fn tally_is_worker_invariant() {
        let (config, det) = setup(1.0, 0.7, 8);
        let opts = RunOptions::new(1000, 5).chunk_size(64);
        let one = run_trials_with(&config, &det, &opts.workers(1)).unwrap();
        for workers in [2, 8] {
            assert_eq!(
                one,
                run_trials_with(&config, &det, &opts.workers(workers)).unwrap()
            );
        }
        let default_chunks = run_trials(&config, &det, 1000, 5, 1).unwrap();
        assert_eq!(
            default_chunks,
            run_trials(&config, &det, 1000, 5, 8).unwrap()
        );
    }

    #[test]
    fn run_trials_validation() {
        let (config, det) = setup(1.0, 1.0, 2);
        assert!(matches!(
            run_trials(&config, &det, 0, 1, 1),
            Err(HeraldError::InvalidParameter(_))
        ));
        assert!(run_trials(&config, &det, 10, 1, 0).is_err());
        let other = DetectorSpec::threshold(0.5).unwrap();
        assert!(run_trials(&config, &other, 10, 1, 1).is_err());
        let opts = RunOptions::new(10, 1).target(Some(2));
        assert!(run_trials_with(&config, &det, &opts).is_err());
    }

    #[test]
    fn tallies_match_closed_forms_at_design_point() {
        let (config, det) = setup(1.0, 1.0, 8);
        let tally = run_trials(&config, &det, 1_000_000, 2024, 4).unwrap();
        assert_eq!(tally.trials, 1_000_000);
        let cert8 = tally.estimate(Quantity::Certification(8)).unwrap();
        assert!(within_4_sigma(
            &cert8,
            certification::certification_at_delay(&config, 8).unwrap()
        ));
        let p1 = tally.estimate(Quantity::P1).unwrap();
        assert!(within_4_sigma(
            &p1,
            certification::heralded_single_prob(&config)
        ));
        let cond = tally.estimate(Quantity::P1GivenTrigger).unwrap();
        assert!(within_4_sigma(
            &cond,
            certification::heralded_single_given_trigger(&config).unwrap()
        ));
        let dark = tally.estimate(Quantity::NoFireRate).unwrap();
        assert!(within_4_sigma(
            &dark,
            certification::no_trigger_prob(&config)
        ));
    }

    #[test]
    fn conventional_source_certification() {
        let (config, det) = setup(1.0, 1.0, 1);
        let tally = run_trials(&config, &det, 1_000_000, 77, 4).unwrap();
        let cert = tally.estimate(Quantity::Certification(1)).unwrap();
        assert!(within_4_sigma(&cert, 0.5), "{cert:?}");
    }

    #[test]
    fn estimate_reports_empty_conditioning() {
        let mut tally = TallySet::new(3, None);
        tally.record(&PulseRecord::with_modes(3));
        assert!(matches!(
            tally.estimate(Quantity::Certification(2)),
            Err(HeraldError::DegenerateCondition(_))
        ));
        assert!(matches!(
            tally.estimate(Quantity::P1GivenTrigger),
            Err(HeraldError::DegenerateCondition(_))
        ));
        assert_eq!(tally.estimate(Quantity::NoFireRate).unwrap().value, 1.0);
        assert!(tally.estimate(Quantity::DelayRate(4)).is_err());
        assert!(tally.estimate(Quantity::TargetRate).is_err());
    }

    #[test]
    fn resolving_detector_counts_firing_mode_exactly() {
        let config = SourceConfig::thermal(2.0, 1.0, 4).unwrap();
        let det = DetectorSpec::number_resolving(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10_000 {
            let p = simulate_pulse(&config, &det, &mut rng);
            match p.fired_delay {
                Some(i) => assert_eq!(p.detected_count, Some(p.mode_counts[i as usize - 1])),
                None => assert_eq!(p.detected_count, None),
            }
        }
    }

    #[test]
    fn resolving_target_one_matches_threshold_singles() {
        // with eta = 1 a single detected photon on a single-photon output is
        // exactly the threshold single-photon event
        let config = SourceConfig::thermal(1.0, 1.0, 8).unwrap();
        let det = DetectorSpec::number_resolving(1.0).unwrap();
        let opts = RunOptions::new(100_000, 3).workers(2).target(Some(1));
        let tally = run_trials_with(&config, &det, &opts).unwrap();
        assert_eq!(tally.target_counts, tally.single_given_fire);
        let rate = tally.estimate(Quantity::TargetRate).unwrap();
        assert_eq!(rate.successes, tally.total_singles());
    }

    proptest! {
        #[test]
        fn merge_is_order_independent(
            split in 1u64..400,
            seed in any::<u64>(),
        ) {
            let (config, det) = setup(1.5, 0.6, 3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pulses: Vec<_> = (0..400).map(|_| simulate_pulse(&config, &det, &mut rng)).collect();
            let mut whole = TallySet::new(3, None);
            pulses.iter().for_each(|p| whole.record(p));
            let (a, b) = pulses.split_at(split as usize);
            let mut left = TallySet::new(3, None);
            a.iter().for_each(|p| left.record(p));
            let mut right = TallySet::new(3, None);
            b.iter().for_each(|p| right.record(p));
            let mut ab = left.clone();
            ab.merge(&right);
            let mut ba = right;
            ba.merge(&left);
            prop_assert_eq!(&ab, &whole);
            prop_assert_eq!(&ba, &whole);
            prop_assert_eq!(whole.no_fire_count + whole.total_fires(), whole.trials);
            for i in 0..3 {
                prop_assert!(whole.single_given_fire[i] <= whole.fire_counts[i]);
            }
        }
    }
}
