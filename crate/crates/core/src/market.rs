//! Market microstructure metrics from raw trades and order book snapshots.
//!
//! Trades are bucketed into extended OHLCV frames with per-side counts,
//! volumes, plain and volume-weighted average prices. Order book snapshots
//! yield best prices, depth-weighted prices, spreads and side volumes. Every
//! buy/sell (bid/ask) pair also gets a bounded imbalance `(a - b) / (a + b)`.
//!
//! Metric identifiers are stable and listed in [`TRADE_METRICS`] and
//! [`LOB_METRICS`]: 21 trade metrics and 10 book metrics, 31 raw metrics in
//! total, each expanded into four normalized variants downstream.
//!
//! `trade_quote_volume_imbalance_by_change` divides the quote volume imbalance
//! by the magnitude of the concurrent price difference, floored at
//! `1e-9 * median(|close|)`. Pairing it with `sign(PD)` instead would be the
//! other reading of "denominated by the price change"; it is not implemented.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{EffectSeries, SeriesFrame, TimeGrid, Variant};

/// Aggressor side of a trade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Buy,
    Sell,
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "buy" | "b" => Ok(Side::Buy),
            "sell" | "s" => Ok(Side::Sell),
            other => Err(Error::InvalidArgument(format!("unknown trade side {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub t_ms: i64,
    pub price: f64,
    pub amount: f64,
    pub side: Side,
}

impl Trade {
    pub fn quote(&self) -> f64 {
        self.price * self.amount
    }
}

/// One price level: `(price, volume)`.
pub type Level = (f64, f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LobSnapshot {
    pub t_ms: i64,
    /// Descending by price.
    pub bids: Vec<Level>,
    /// Ascending by price.
    pub asks: Vec<Level>,
}

/// Per-side trade statistics within a bucket.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SideStats {
    pub count: u64,
    pub base_volume: f64,
    pub quote_volume: f64,
    /// Plain mean of trade prices; `None` without trades.
    pub avg_price: Option<f64>,
    /// Base-volume-weighted mean price.
    pub vwap_base: Option<f64>,
    /// Quote-volume-weighted mean price.
    pub vwap_quote: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OhlcvExtended {
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub buy: SideStats,
    pub sell: SideStats,
}

#[derive(Default)]
struct SideAccumulator {
    count: u64,
    price_sum: f64,
    base: f64,
    quote: f64,
    quote_weighted_price: f64,
}

impl SideAccumulator {
    fn push(&mut self, trade: &Trade) {
        let quote = trade.quote();
        self.count += 1;
        self.price_sum += trade.price;
        self.base += trade.amount;
        self.quote += quote;
        self.quote_weighted_price += trade.price * quote;
    }

    fn finish(&self) -> SideStats {
        let some_if = |cond: bool, v: f64| cond.then_some(v);
        SideStats {
            count: self.count,
            base_volume: self.base,
            quote_volume: self.quote,
            avg_price: some_if(self.count > 0, self.price_sum / self.count as f64),
            vwap_base: some_if(self.base > 0.0, self.quote / self.base),
            vwap_quote: some_if(self.quote > 0.0, self.quote_weighted_price / self.quote),
        }
    }
}

struct BucketAccumulator {
    open: f64,
    high: f64,
    low: f64,
    close: f64,
    buy: SideAccumulator,
    sell: SideAccumulator,
}

impl BucketAccumulator {
    fn new(first: &Trade) -> Self {
        Self {
            open: first.price,
            high: first.price,
            low: first.price,
            close: first.price,
            buy: SideAccumulator::default(),
            sell: SideAccumulator::default(),
        }
    }

    fn push(&mut self, trade: &Trade) {
        self.high = self.high.max(trade.price);
        self.low = self.low.min(trade.price);
        self.close = trade.price;
        match trade.side {
            Side::Buy => self.buy.push(trade),
            Side::Sell => self.sell.push(trade),
        }
    }

    fn finish(&self) -> OhlcvExtended {
        OhlcvExtended {
            open: self.open,
            high: self.high,
            low: self.low,
            close: self.close,
            buy: self.buy.finish(),
            sell: self.sell.finish(),
        }
    }
}

/// Buckets trades onto `grid`. Trades are ordered by timestamp (stable for
/// ties) before aggregation; trades outside the grid are dropped.
pub fn aggregate_trades(trades: &[Trade], grid: &TimeGrid) -> Vec<Option<OhlcvExtended>> {
    let mut ordered: Vec<&Trade> = trades.iter().collect();
    ordered.sort_by_key(|t| t.t_ms);

    let mut buckets: Vec<Option<BucketAccumulator>> = (0..grid.count()).map(|_| None).collect();
    for trade in ordered {
        let Some(idx) = grid.bucket_of_ms(trade.t_ms) else {
            continue;
        };
        buckets[idx]
            .get_or_insert_with(|| BucketAccumulator::new(trade))
            .push(trade);
    }
    buckets
        .iter()
        .map(|b| b.as_ref().map(BucketAccumulator::finish))
        .collect()
}

/// Bounded skew `(a - b) / (a + b)`, zero when both are zero.
pub fn imbalance(a: f64, b: f64) -> f64 {
    let total = a + b;
    if total == 0.0 {
        0.0
    } else {
        (a - b) / total
    }
}

/// Trade metric identifiers, in emission order.
pub const TRADE_METRICS: [&str; 21] = [
    "trade_open",
    "trade_high",
    "trade_low",
    "trade_close",
    "trade_buy_count",
    "trade_sell_count",
    "trade_buy_base_volume",
    "trade_sell_base_volume",
    "trade_buy_quote_volume",
    "trade_sell_quote_volume",
    "trade_buy_avg_price",
    "trade_sell_avg_price",
    "trade_buy_vwap_base",
    "trade_sell_vwap_base",
    "trade_buy_vwap_quote",
    "trade_sell_vwap_quote",
    "trade_count_imbalance",
    "trade_base_volume_imbalance",
    "trade_quote_volume_imbalance",
    "trade_avg_price_imbalance",
    "trade_quote_volume_imbalance_by_change",
];

/// Order book metric identifiers, in emission order.
pub const LOB_METRICS: [&str; 10] = [
    "lob_min_ask",
    "lob_max_bid",
    "lob_ask_vwap",
    "lob_bid_vwap",
    "lob_ask_volume",
    "lob_bid_volume",
    "lob_spread_best",
    "lob_spread_vwap",
    "lob_price_imbalance",
    "lob_volume_imbalance",
];

pub const CLOSE_METRIC: &str = "trade_close";
pub const PRICE_DIFFERENCE_METRIC: &str = "price_difference";

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        0.5 * (xs[mid - 1] + xs[mid])
    }
}

/// Raw (un-normalized) frames for every trade metric, on channel `channel`.
pub fn trade_metric_frames(
    ohlcv: &[Option<OhlcvExtended>],
    grid: &TimeGrid,
    channel: &str,
) -> Result<Vec<SeriesFrame>> {
    if ohlcv.len() != grid.count() {
        return Err(Error::LengthMismatch {
            left: ohlcv.len(),
            right: grid.count(),
        });
    }
    let column = |f: &dyn Fn(&OhlcvExtended) -> Option<f64>| -> Vec<Option<f64>> {
        ohlcv.iter().map(|b| b.as_ref().and_then(f)).collect()
    };
    let close = column(&|b| Some(b.close));

    let pd: Vec<Option<f64>> = (0..close.len())
        .map(|t| match (t.checked_sub(1).and_then(|p| close[p]), close[t]) {
            (Some(prev), Some(cur)) => Some(cur - prev),
            _ => None,
        })
        .collect();
    let floor = 1e-9 * median(close.iter().flatten().map(|c| c.abs()).collect());
    let quote_imbalance = column(&|b| Some(imbalance(b.buy.quote_volume, b.sell.quote_volume)));
    let by_change: Vec<Option<f64>> = quote_imbalance
        .iter()
        .zip(&pd)
        .map(|(imb, pd)| match (imb, pd) {
            (Some(i), Some(d)) => Some(i / d.abs().max(floor)),
            _ => None,
        })
        .collect();

    let columns: Vec<Vec<Option<f64>>> = vec![
        column(&|b| Some(b.open)),
        column(&|b| Some(b.high)),
        column(&|b| Some(b.low)),
        close,
        column(&|b| Some(b.buy.count as f64)),
        column(&|b| Some(b.sell.count as f64)),
        column(&|b| Some(b.buy.base_volume)),
        column(&|b| Some(b.sell.base_volume)),
        column(&|b| Some(b.buy.quote_volume)),
        column(&|b| Some(b.sell.quote_volume)),
        column(&|b| b.buy.avg_price),
        column(&|b| b.sell.avg_price),
        column(&|b| b.buy.vwap_base),
        column(&|b| b.sell.vwap_base),
        column(&|b| b.buy.vwap_quote),
        column(&|b| b.sell.vwap_quote),
        column(&|b| Some(imbalance(b.buy.count as f64, b.sell.count as f64))),
        column(&|b| Some(imbalance(b.buy.base_volume, b.sell.base_volume))),
        quote_imbalance,
        column(&|b| Some(imbalance(b.buy.avg_price?, b.sell.avg_price?))),
        by_change,
    ];
    TRADE_METRICS
        .iter()
        .zip(columns)
        .map(|(name, values)| SeriesFrame::from_options(channel, *name, Variant::RAW, *grid, values))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LobFeatures {
    pub min_ask: f64,
    pub max_bid: f64,
    pub ask_vwap: f64,
    pub bid_vwap: f64,
    pub ask_volume: f64,
    pub bid_volume: f64,
    pub spread_best: f64,
    pub spread_vwap: f64,
    /// `imbalance(bid_vwap, ask_vwap)`.
    pub price_imbalance: f64,
    /// `imbalance(bid_volume, ask_volume)`.
    pub volume_imbalance: f64,
}

impl LobFeatures {
    fn as_array(&self) -> [f64; 10] {
        [
            self.min_ask,
            self.max_bid,
            self.ask_vwap,
            self.bid_vwap,
            self.ask_volume,
            self.bid_volume,
            self.spread_best,
            self.spread_vwap,
            self.price_imbalance,
            self.volume_imbalance,
        ]
    }
}

fn side_totals(levels: &[Level]) -> (f64, f64) {
    let volume: f64 = levels.iter().map(|(_, v)| v).sum();
    let notional: f64 = levels.iter().map(|(p, v)| p * v).sum();
    (volume, notional / volume)
}

/// Shape metrics of one uncrossed snapshot.
pub fn lob_features(snapshot: &LobSnapshot) -> Result<LobFeatures> {
    let t_ms = snapshot.t_ms;
    let side_ok = |levels: &[Level]| levels.iter().all(|&(p, v)| p > 0.0 && v > 0.0 && p.is_finite() && v.is_finite());
    if snapshot.bids.is_empty() {
        return Err(Error::EmptySide { t_ms, side: "bids" });
    }
    if snapshot.asks.is_empty() {
        return Err(Error::EmptySide { t_ms, side: "asks" });
    }
    if !side_ok(&snapshot.bids) || !side_ok(&snapshot.asks) {
        return Err(Error::InvalidArgument(format!(
            "non-positive price or volume in snapshot at t={t_ms}"
        )));
    }
    let max_bid = snapshot.bids.iter().map(|l| l.0).fold(f64::MIN, f64::max);
    let min_ask = snapshot.asks.iter().map(|l| l.0).fold(f64::MAX, f64::min);
    if max_bid >= min_ask {
        return Err(Error::CrossedBook {
            t_ms,
            max_bid,
            min_ask,
        });
    }
    let (bid_volume, bid_vwap) = side_totals(&snapshot.bids);
    let (ask_volume, ask_vwap) = side_totals(&snapshot.asks);
    Ok(LobFeatures {
        min_ask,
        max_bid,
        ask_vwap,
        bid_vwap,
        ask_volume,
        bid_volume,
        spread_best: min_ask - max_bid,
        spread_vwap: ask_vwap - bid_vwap,
        price_imbalance: imbalance(bid_vwap, ask_vwap),
        volume_imbalance: imbalance(bid_volume, ask_volume),
    })
}

/// Raw frames for every book metric. The last snapshot of each bucket
/// represents it; every snapshot inside the grid is validated.
pub fn lob_feature_frames(snapshots: &[LobSnapshot], grid: &TimeGrid, channel: &str) -> Result<Vec<SeriesFrame>> {
    let mut ordered: Vec<&LobSnapshot> = snapshots.iter().collect();
    ordered.sort_by_key(|s| s.t_ms);
    let mut last: Vec<Option<LobFeatures>> = vec![None; grid.count()];
    for snap in ordered {
        let Some(idx) = grid.bucket_of_ms(snap.t_ms) else {
            continue;
        };
        last[idx] = Some(lob_features(snap)?);
    }
    (0..LOB_METRICS.len())
        .map(|i| {
            let values = last.iter().map(|f| f.map(|f| f.as_array()[i])).collect();
            SeriesFrame::from_options(channel, LOB_METRICS[i], Variant::RAW, *grid, values)
        })
        .collect()
}

/// First difference of the close price, the default effect series.
pub fn price_difference(close: &SeriesFrame) -> EffectSeries {
    let (vals, mask) = (close.values(), close.present());
    let mut values = vec![0.0; close.len()];
    let mut present = vec![false; close.len()];
    for t in 1..close.len() {
        if mask[t] && mask[t - 1] {
            values[t] = vals[t] - vals[t - 1];
            present[t] = true;
        }
    }
    SeriesFrame::from_parts(
        close.channel.clone(),
        PRICE_DIFFERENCE_METRIC,
        Variant::RAW,
        *close.grid(),
        values,
        present,
    )
    .expect("shape taken from a valid frame")
}
