use herald_mux::certification::{
    certification_at_delay, delay_fire_prob, heralded_single_given_trigger, heralded_single_prob,
    no_trigger_prob, posterior_given_fire, trigger_prob,
};
use herald_mux::detector::{fire_prob, mode_fire_prob};
use herald_mux::{DistributionKind, ModeDistribution, SourceConfig};
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = DistributionKind> {
    prop_oneof![
        Just(DistributionKind::Thermal),
        Just(DistributionKind::Poisson)
    ]
}

proptest! {
    #[test]
    fn probabilities_stay_in_unit_interval(
        n_bar in 1e-3f64..5.0,
        eta in 1e-3f64..=1.0,
        n_delays in 1u32..64,
        kind in kind(),
    ) {
        let c = SourceConfig::new(n_bar, eta, n_delays, kind).unwrap();
        for i in 1..=n_delays {
            let cert = certification_at_delay(&c, i).unwrap();
            let rate = delay_fire_prob(&c, i).unwrap();
            prop_assert!((0.0..=1.0).contains(&cert));
            prop_assert!((0.0..=1.0).contains(&rate));
        }
        let cond = heralded_single_given_trigger(&c).unwrap();
        prop_assert!((0.0..=1.0).contains(&cond));
        prop_assert!(heralded_single_prob(&c) <= trigger_prob(&c) + 1e-15);
    }

    #[test]
    fn decomposition_holds_off_grid(
        n_bar in 1e-2f64..4.0,
        eta in 1e-2f64..=1.0,
        n_delays in 1u32..32,
        kind in kind(),
    ) {
        let c = SourceConfig::new(n_bar, eta, n_delays, kind).unwrap();
        let summed: f64 = (1..=n_delays)
            .map(|i| delay_fire_prob(&c, i).unwrap() * certification_at_delay(&c, i).unwrap())
            .sum();
        prop_assert!((summed - heralded_single_prob(&c)).abs() < 1e-12);
        let fired: f64 = (1..=n_delays).map(|i| delay_fire_prob(&c, i).unwrap()).sum();
        prop_assert!((fired + no_trigger_prob(&c) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_detector_fan_strictly_rises(n_bar in 1e-2f64..4.0, n_delays in 2u32..32, kind in kind()) {
        let c = SourceConfig::new(n_bar, 1.0, n_delays, kind).unwrap();
        let fan: Vec<f64> = (1..=n_delays).map(|i| certification_at_delay(&c, i).unwrap()).collect();
        prop_assert!(fan.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn fire_prob_is_monotone(n in 0u64..200, eta_a in 0.0f64..=1.0, eta_b in 0.0f64..=1.0) {
        let (lo, hi) = if eta_a <= eta_b { (eta_a, eta_b) } else { (eta_b, eta_a) };
        prop_assert!(fire_prob(n, lo) <= fire_prob(n, hi));
        prop_assert!(fire_prob(n, lo) <= fire_prob(n + 1, lo));
    }

    #[test]
    fn mode_fire_matches_series(mu in 0.0f64..3.0, eta in 0.0f64..=1.0, kind in kind()) {
        let d = ModeDistribution::new(kind, mu).unwrap();
        let series = 1.0 - d.no_detect_weight_series(eta);
        prop_assert!((mode_fire_prob(&d, eta) - series).abs() < 1e-12);
    }

    #[test]
    fn posterior_excludes_vacuum(mu in 1e-3f64..3.0, eta in 1e-3f64..=1.0, kind in kind()) {
        let d = ModeDistribution::new(kind, mu).unwrap();
        prop_assert_eq!(posterior_given_fire(&d, eta, 0).unwrap(), 0.0);
    }
}
