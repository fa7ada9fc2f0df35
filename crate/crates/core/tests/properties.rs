use lossav::binprob::{predicted_props, BinGrid};
use lossav::io::num;
use lossav::policy::offer_change;
use lossav::simulate::ban_offer;
use lossav::{HetFamily, ModelParams};
use proptest::prelude::*;

fn params(lambda: f64, mu: f64, sigma: f64, sigma_eps: f64) -> ModelParams {
    ModelParams::new(
        lambda,
        HetFamily::logistic(mu, sigma).unwrap(),
        HetFamily::logistic(0.0, sigma_eps).unwrap(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn offers_are_monotone_in_productivity(lambda in 1.0f64..3.0, sigma_eps in 0.2f64..1.0, a in -1.0f64..2.5, gap in 0.0f64..0.5) {
        let p = params(lambda, 1.0, 0.2, sigma_eps);
        prop_assert!(p.optimal_offer(a).unwrap() <= p.optimal_offer(a + gap).unwrap());
    }

    #[test]
    fn offers_stay_below_productivity(lambda in 1.0f64..3.0, phi in -1.0f64..2.5) {
        let p = params(lambda, 1.0, 0.2, 0.611);
        prop_assert!(p.optimal_offer(phi).unwrap() < phi);
    }

    #[test]
    fn bin_props_are_a_sub_probability(lambda in 1.0f64..2.0, mu in 0.8f64..1.6, sigma in 0.08f64..0.3) {
        let grid = BinGrid::symmetric(0.2, 0.002, true).unwrap();
        let d = predicted_props(&params(lambda, mu, sigma, 0.611), &grid).unwrap();
        let total: f64 = d.props.iter().sum();
        prop_assert!(d.props.iter().all(|&q| q >= 0.0));
        prop_assert!(total <= 1.0 + 1e-9);
    }

    #[test]
    fn perception_noise_cancels(lambda in 1.0f64..2.0, phi in 0.5f64..2.0, eta in -0.3f64..0.3, delta in 0.01f64..0.4) {
        let p = params(lambda, 1.2, 0.15, 0.611);
        let ban = ban_offer(&p, phi + delta, eta).unwrap() - ban_offer(&p, phi, eta).unwrap();
        let seen = offer_change(&p, phi - eta, delta).unwrap();
        prop_assert!((ban - seen).abs() <= 8.0 * f64::EPSILON * (phi.abs() + eta.abs() + 1.0));
    }

    #[test]
    fn csv_numbers_round_trip(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
        prop_assert_eq!(num(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn every_grid_point_maps_to_its_bin(k in -100i64..=100, frac in -0.49f64..0.49) {
        let grid = BinGrid::symmetric(0.2, 0.002, true).unwrap();
        let r = (k as f64 + frac) * 0.002;
        prop_assert_eq!(grid.bin_of(r), Some(k));
    }
}
