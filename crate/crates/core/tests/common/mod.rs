//! Reference implementations written independently of the library, by
//! direct index loops over the definitions.

#![allow(dead_code)]

use saci_core::market::{Side, Trade};
use saci_core::TimeGrid;

/// Pearson correlation of `cause[t]` with `effect[t + lag]`, looping over
/// every `t` and keeping pairs whose partner index is on the grid.
pub fn naive_lagged_pearson(cause: &[f64], effect: &[f64], lag: i64) -> Option<f64> {
    let n = cause.len() as i64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for t in 0..n {
        let u = t + lag;
        if u >= 0 && u < n {
            xs.push(cause[t as usize]);
            ys.push(effect[u as usize]);
        }
    }
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..xs.len() {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        None
    } else {
        Some(sxy / (sxx * syy).sqrt())
    }
}

/// One side of a bucket, summed trade by trade.
#[derive(Debug, Clone, Default)]
pub struct BruteSide {
    pub count: u64,
    pub base: f64,
    pub quote: f64,
    pub prices: Vec<f64>,
    pub avg: Option<f64>,
    pub vwap_base: Option<f64>,
    pub vwap_quote: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BruteBucket {
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub buy: BruteSide,
    pub sell: BruteSide,
}

/// Buckets by explicit floor division; open and close come from the
/// earliest and latest timestamps, ties broken by input position.
pub fn brute_force_ohlcv(trades: &[Trade], grid: &TimeGrid) -> Vec<Option<BruteBucket>> {
    let start_ms = grid.start() * 1000;
    let width_ms = grid.period() * 1000;
    (0..grid.count())
        .map(|b| {
            let lo = start_ms + b as i64 * width_ms;
            let hi = lo + width_ms;
            let inside: Vec<(usize, &Trade)> = trades
                .iter()
                .enumerate()
                .filter(|(_, t)| t.t_ms >= lo && t.t_ms < hi)
                .collect();
            if inside.is_empty() {
                return None;
            }
            let first = inside.iter().min_by_key(|(i, t)| (t.t_ms, *i)).unwrap().1;
            let last = inside.iter().max_by_key(|(i, t)| (t.t_ms, *i)).unwrap().1;
            let side = |s: Side| {
                let mut out = BruteSide::default();
                let mut weighted = 0.0;
                for (_, t) in inside.iter().filter(|(_, t)| t.side == s) {
                    out.count += 1;
                    out.base += t.amount;
                    out.quote += t.price * t.amount;
                    weighted += t.price * t.price * t.amount;
                    out.prices.push(t.price);
                }
                if out.count > 0 {
                    out.avg = Some(out.prices.iter().sum::<f64>() / out.count as f64);
                    out.vwap_base = Some(out.quote / out.base);
                    out.vwap_quote = Some(weighted / out.quote);
                }
                out
            };
            Some(BruteBucket {
                open: first.price,
                close: last.price,
                high: inside.iter().map(|(_, t)| t.price).fold(f64::MIN, f64::max),
                low: inside.iter().map(|(_, t)| t.price).fold(f64::MAX, f64::min),
                buy: side(Side::Buy),
                sell: side(Side::Sell),
            })
        })
        .collect()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

pub fn opt_close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(a), Some(b)) => rel_close(a, b, tol),
        _ => false,
    }
}
