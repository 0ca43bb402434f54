mod common;

use proptest::prelude::*;
use rwasim::amm::{AmmPool, PoolParams, SecondaryPool, SwapDirection};
use rwasim::ledger::AccountId;
use rwasim::tokenization::AssetId;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn random_pools_and_trades(case in common::amm_case()) {
        common::check_amm(case).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn secondary_round_trip_never_profits(
        slices in 1.0f64..1e4,
        currency in 1.0f64..1e4,
        fee in 0.0f64..0.05,
        amount in 0.01f64..100.0,
    ) {
        let mut p = SecondaryPool { fee, ..SecondaryPool::new(slices, currency) };
        let k0 = p.k();
        let got = p.swap(SwapDirection::CurrencyIn, amount).unwrap();
        let back = p.swap(SwapDirection::SlicesIn, got).unwrap();
        prop_assert!(back <= amount * (1.0 + 1e-9));
        prop_assert!(p.k() >= k0 * (1.0 - 1e-9));
    }
}

#[test]
fn calibrated_pool_opens_at_cost() {
    for (cost, n, m) in [(0.5, 100, 200.0), (0.93, 100, 0.0), (2.0, 7, 13.0)] {
        let pool = AmmPool::from_params(AssetId(0), AccountId(0), n, PoolParams::calibrated(cost, n, m)).unwrap();
        assert!((pool.spot_price() - cost).abs() < 1e-12, "{cost} {n} {m}");
    }
}

#[test]
fn depleting_pure_pool_charges_multiplier_on_last_slice() {
    // x0 = 4, y0 = 2, k = 8: three slices cost 8 - 2 = 6, the last 2 * (8 - 4) = 8
    let pool = AmmPool::from_params(AssetId(0), AccountId(0), 4, PoolParams::new(2.0)).unwrap();
    assert_eq!(pool.quote_buy(3).unwrap(), 6.0);
    assert_eq!(pool.quote_buy(4).unwrap(), 14.0);
}
