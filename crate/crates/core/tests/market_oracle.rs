mod common;

use common::{brute_force_ohlcv, opt_close, rel_close};
use proptest::prelude::*;
use saci_core::market::{
    aggregate_trades, imbalance, lob_features, price_difference, trade_metric_frames, LobSnapshot, Side, Trade,
    TRADE_METRICS,
};
use saci_core::{Granularity, SeriesFrame, TimeGrid, Variant};

const TOL: f64 = 1e-9;

fn grid() -> TimeGrid {
    TimeGrid::new(0, Granularity::Minute, 5).unwrap()
}

fn trades() -> impl Strategy<Value = Vec<Trade>> {
    let trade = (-30_000i64..330_000, 1.0..1000.0f64, 0.001..50.0f64, any::<bool>()).prop_map(|(t, p, a, buy)| Trade {
        t_ms: t,
        price: p,
        amount: a,
        side: if buy { Side::Buy } else { Side::Sell },
    });
    prop::collection::vec(trade, 0..=100)
}

fn level() -> impl Strategy<Value = (f64, f64)> {
    (1.0..100.0f64, 0.01..10.0f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn aggregation_matches_brute_force(trades in trades()) {
        let ours = aggregate_trades(&trades, &grid());
        let brute = brute_force_ohlcv(&trades, &grid());
        prop_assert_eq!(ours.len(), brute.len());
        for (o, b) in ours.iter().zip(&brute) {
            match (o, b) {
                (None, None) => {}
                (Some(o), Some(b)) => {
                    prop_assert_eq!((o.open, o.close, o.high, o.low), (b.open, b.close, b.high, b.low));
                    for (os, bs) in [(&o.buy, &b.buy), (&o.sell, &b.sell)] {
                        prop_assert_eq!(os.count, bs.count);
                        prop_assert!(rel_close(os.base_volume, bs.base, TOL));
                        prop_assert!(rel_close(os.quote_volume, bs.quote, TOL));
                        prop_assert!(opt_close(os.avg_price, bs.avg, TOL));
                        prop_assert!(opt_close(os.vwap_base, bs.vwap_base, TOL));
                        prop_assert!(opt_close(os.vwap_quote, bs.vwap_quote, TOL));
                    }
                }
                other => prop_assert!(false, "presence differs: {:?}", other),
            }
        }
    }

    #[test]
    fn ohlc_ordering_and_vwap_bounds(trades in trades()) {
        let ours = aggregate_trades(&trades, &grid());
        let brute = brute_force_ohlcv(&trades, &grid());
        for (o, b) in ours.iter().flatten().zip(brute.iter().flatten()) {
            prop_assert!(o.low <= o.open && o.open <= o.high);
            prop_assert!(o.low <= o.close && o.close <= o.high);
            for (s, prices) in [(&o.buy, &b.buy.prices), (&o.sell, &b.sell.prices)] {
                let lo = prices.iter().copied().fold(f64::MAX, f64::min);
                let hi = prices.iter().copied().fold(f64::MIN, f64::max);
                for v in [s.vwap_base, s.vwap_quote, s.avg_price].into_iter().flatten() {
                    prop_assert!(v >= lo * (1.0 - 1e-12) && v <= hi * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn volume_is_conserved(trades in trades()) {
        let g = grid();
        let ours = aggregate_trades(&trades, &g);
        let total: f64 = ours.iter().flatten().map(|o| o.buy.base_volume + o.sell.base_volume).sum();
        let in_span: f64 = trades
            .iter()
            .filter(|t| t.t_ms >= g.start() * 1000 && t.t_ms < g.end() * 1000)
            .map(|t| t.amount)
            .sum();
        prop_assert!(rel_close(total, in_span, TOL) || (total == 0.0 && in_span == 0.0));
    }

    #[test]
    fn imbalance_is_antisymmetric_and_bounded(a in 0.0..1e9f64, b in 0.0..1e9f64) {
        prop_assert_eq!(imbalance(a, b), -imbalance(b, a));
        prop_assert!(imbalance(a, b).abs() <= 1.0);
    }

    #[test]
    fn metric_frames_are_aligned(trades in trades()) {
        let g = grid();
        let frames = trade_metric_frames(&aggregate_trades(&trades, &g), &g, "market").unwrap();
        let names: Vec<&str> = frames.iter().map(|f| f.metric.as_str()).collect();
        prop_assert_eq!(names, TRADE_METRICS.to_vec());
        for f in &frames {
            prop_assert_eq!(f.grid(), &g);
            prop_assert_eq!(f.variant, Variant::RAW);
        }
    }

    #[test]
    fn price_difference_inverts_cumsum(steps in prop::collection::vec(-100i32..100, 2..60)) {
        let mut level = 1000.0;
        let close: Vec<f64> = steps.iter().map(|s| { level += f64::from(*s); level }).collect();
        let g = TimeGrid::new(0, Granularity::Day, close.len()).unwrap();
        let pd = price_difference(&SeriesFrame::dense("m", "c", Variant::RAW, g, close).unwrap());
        prop_assert!(!pd.present()[0]);
        for t in 1..steps.len() {
            prop_assert_eq!(pd.values()[t], f64::from(steps[t]));
        }
    }

    #[test]
    fn lob_vwaps_within_side_range(
        bids in prop::collection::vec(level(), 1..8),
        asks in prop::collection::vec(level(), 1..8),
    ) {
        let mut bids: Vec<(f64, f64)> = bids.into_iter().map(|(p, v)| (p, v)).collect();
        let mut asks: Vec<(f64, f64)> = asks.into_iter().map(|(p, v)| (p + 100.0, v)).collect();
        bids.sort_by(|a, b| b.0.total_cmp(&a.0));
        asks.sort_by(|a, b| a.0.total_cmp(&b.0));
        let f = lob_features(&LobSnapshot { t_ms: 0, bids: bids.clone(), asks: asks.clone() }).unwrap();
        prop_assert!(f.spread_best > 0.0);
        prop_assert!(f.ask_vwap >= f.min_ask * (1.0 - 1e-12));
        prop_assert!(f.bid_vwap <= f.max_bid * (1.0 + 1e-12));
        prop_assert!(f.price_imbalance.abs() <= 1.0 && f.volume_imbalance.abs() <= 1.0);
    }
}

#[test]
fn three_trade_bucket() {
    let t = |t_ms, price, amount, side| Trade {
        t_ms,
        price,
        amount,
        side,
    };
    let trades = [
        t(10, 100.0, 1.0, Side::Buy),
        t(20, 102.0, 2.0, Side::Sell),
        t(30, 101.0, 1.0, Side::Buy),
    ];
    let g = TimeGrid::new(0, Granularity::Second, 1).unwrap();
    let o = aggregate_trades(&trades, &g)[0].unwrap();
    assert_eq!((o.open, o.high, o.low, o.close), (100.0, 102.0, 100.0, 101.0));
    assert_eq!((o.buy.base_volume, o.sell.base_volume), (2.0, 2.0));
    assert_eq!((o.buy.quote_volume, o.sell.quote_volume), (201.0, 204.0));
    assert_eq!((o.buy.count, o.sell.count), (2, 1));
}
