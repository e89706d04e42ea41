//! Readers and writers for the interchange formats.
//!
//! | format | layout |
//! |---|---|
//! | frames CSV | `t,channel,metric,variant,value,present` |
//! | trades CSV | `t_ms,price,amount,side` |
//! | LOB JSON Lines | `{"t": ms, "bids": [[p, v], ...], "asks": [[p, v], ...]}` |
//! | posts JSON Lines | `{"t": s, "channel": "...", "text": "..."}` |
//! | correlation CSV | `lag,channel,metric,variant,pearson,zero_variance` |
//! | channel weights CSV | `channel,weight` |
//! | lag sweep CSV | `lag,correlation` |
//! | weight listing CSV | `channel,metric,variant,weight` |
//! | evaluation CSV | `predictor,horizon,n,mape,da` |
//!
//! Reals are written in Rust's shortest round-trip notation, so every file
//! written here reads back to identical values.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::causal::{ChannelWeights, CorrelationMatrix};
use crate::error::{Error, Result};
use crate::evaluation::EvalRow;
use crate::lexicon::Post;
use crate::market::{LobSnapshot, Side, Trade};
use crate::series::{FrameKey, Granularity, SeriesFrame, TimeGrid, Variant};

pub const FRAMES_HEADER: [&str; 6] = ["t", "channel", "metric", "variant", "value", "present"];
pub const TRADES_HEADER: [&str; 4] = ["t_ms", "price", "amount", "side"];
pub const CORRELATION_HEADER: [&str; 6] = ["lag", "channel", "metric", "variant", "pearson", "zero_variance"];
pub const WEIGHTS_HEADER: [&str; 2] = ["channel", "weight"];
pub const SWEEP_HEADER: [&str; 2] = ["lag", "correlation"];
pub const LISTING_HEADER: [&str; 4] = ["channel", "metric", "variant", "weight"];
pub const EVAL_HEADER: [&str; 5] = ["predictor", "horizon", "n", "mape", "da"];

/// Shortest notation that parses back to the same `f64`.
pub fn fmt_real(v: f64) -> String {
    format!("{v:?}")
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r)
}

struct Rows<'a, R: Read> {
    name: &'a str,
    reader: csv::Reader<R>,
}

impl<'a, R: Read> Rows<'a, R> {
    fn new(name: &'a str, r: R, header: &[&str]) -> Result<Self> {
        let mut reader = csv_reader(r);
        let found = reader.headers().map_err(|e| Error::parse(name, 1, e.to_string()))?;
        let found: Vec<&str> = found.iter().collect();
        if found.is_empty() || found == [""] {
            return Ok(Self { name, reader });
        }
        if found != header {
            return Err(Error::parse(
                name,
                1,
                format!("expected header {:?}, found {:?}", header.join(","), found.join(",")),
            ));
        }
        Ok(Self { name, reader })
    }

    /// Calls `f` with each record and its 1-based line number.
    fn for_each(mut self, mut f: impl FnMut(&csv::StringRecord, u64) -> Result<()>) -> Result<()> {
        let mut record = csv::StringRecord::new();
        loop {
            let more = self.reader.read_record(&mut record).map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                Error::parse(self.name, line, e.to_string())
            })?;
            if !more {
                return Ok(());
            }
            let line = record.position().map_or(0, |p| p.line());
            f(&record, line)?;
        }
    }
}

fn field<'r, T: std::str::FromStr>(
    name: &str,
    line: u64,
    record: &'r csv::StringRecord,
    idx: usize,
    column: &str,
) -> Result<T> {
    let raw = record
        .get(idx)
        .ok_or_else(|| Error::parse(name, line, format!("missing column {column}")))?;
    raw.parse()
        .map_err(|_| Error::parse(name, line, format!("bad {column} value {raw:?}")))
}

fn text<'r>(name: &str, line: u64, record: &'r csv::StringRecord, idx: usize, column: &str) -> Result<&'r str> {
    record
        .get(idx)
        .ok_or_else(|| Error::parse(name, line, format!("missing column {column}")))
}

fn parse_flag(name: &str, line: u64, raw: &str) -> Result<bool> {
    match raw {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(Error::parse(name, line, format!("bad present flag {other:?}"))),
    }
}

// ---------------------------------------------------------------------------
// frames
// ---------------------------------------------------------------------------

/// Writes every bucket of every frame, absent buckets included.
pub fn write_frames_csv<W: Write>(w: W, frames: &[SeriesFrame]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(FRAMES_HEADER)?;
    for f in frames {
        let variant = f.variant.to_string();
        for i in 0..f.len() {
            out.write_record([
                f.grid().time_of(i).to_string().as_str(),
                &f.channel,
                &f.metric,
                &variant,
                &fmt_real(f.values()[i]),
                if f.present()[i] { "1" } else { "0" },
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads frames written by [`write_frames_csv`] (or any producer using the
/// same layout). Frames keep the order of their first row; each frame's grid
/// spans its first to last timestamp and missing rows are absent buckets.
pub fn read_frames_csv<R: Read>(r: R, name: &str, granularity: Granularity) -> Result<Vec<SeriesFrame>> {
    struct Pending {
        key: FrameKey,
        rows: Vec<(i64, f64, bool, u64)>,
    }
    let period = granularity.period_secs();
    let mut order: Vec<Pending> = Vec::new();
    let mut index: HashMap<FrameKey, usize> = HashMap::new();
    Rows::new(name, r, &FRAMES_HEADER)?.for_each(|rec, line| {
        let t: i64 = field(name, line, rec, 0, "t")?;
        if t.rem_euclid(period) != 0 {
            return Err(Error::parse(name, line, format!("t={t} is not aligned to {granularity}")));
        }
        let variant: Variant = text(name, line, rec, 3, "variant")?
            .parse()
            .map_err(|e: Error| Error::parse(name, line, e.to_string()))?;
        let key = FrameKey::new(text(name, line, rec, 1, "channel")?, text(name, line, rec, 2, "metric")?, variant);
        if key.channel.is_empty() {
            return Err(Error::parse(name, line, "empty channel"));
        }
        let value: f64 = field(name, line, rec, 4, "value")?;
        let present = parse_flag(name, line, text(name, line, rec, 5, "present")?)?;
        if !present && value != 0.0 {
            return Err(Error::parse(name, line, "absent bucket must hold 0"));
        }
        if present && !value.is_finite() {
            return Err(Error::parse(name, line, "non-finite value"));
        }
        let slot = *index.entry(key.clone()).or_insert_with(|| {
            order.push(Pending { key, rows: Vec::new() });
            order.len() - 1
        });
        order[slot].rows.push((t, value, present, line));
        Ok(())
    })?;

    order
        .into_iter()
        .map(|p| {
            let start = p.rows.iter().map(|r| r.0).min().expect("at least one row");
            let end = p.rows.iter().map(|r| r.0).max().expect("at least one row");
            let count = ((end - start) / period) as usize + 1;
            let grid = TimeGrid::new(start, granularity, count)?;
            let mut values = vec![0.0; count];
            let mut present = vec![false; count];
            let mut seen = vec![false; count];
            for (t, v, pr, line) in p.rows {
                let i = ((t - start) / period) as usize;
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::parse(name, line, format!("duplicate row for {} at t={t}", p.key)));
                }
                values[i] = v;
                present[i] = pr;
            }
            SeriesFrame::from_parts(p.key.channel, p.key.metric, p.key.variant, grid, values, present)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// raw inputs
// ---------------------------------------------------------------------------

pub fn read_trades_csv<R: Read>(r: R, name: &str) -> Result<Vec<Trade>> {
    let mut trades = Vec::new();
    Rows::new(name, r, &TRADES_HEADER)?.for_each(|rec, line| {
        let trade = Trade {
            t_ms: field(name, line, rec, 0, "t_ms")?,
            price: field(name, line, rec, 1, "price")?,
            amount: field(name, line, rec, 2, "amount")?,
            side: field::<Side>(name, line, rec, 3, "side")?,
        };
        if !(trade.price.is_finite() && trade.price > 0.0) || !(trade.amount.is_finite() && trade.amount > 0.0) {
            return Err(Error::parse(name, line, "price and amount must be positive"));
        }
        trades.push(trade);
        Ok(())
    })?;
    Ok(trades)
}

pub fn write_trades_csv<W: Write>(w: W, trades: &[Trade]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(TRADES_HEADER)?;
    for t in trades {
        let side = match t.side {
            Side::Buy => "buy",
            Side::Sell => "sell",
        };
        out.write_record([t.t_ms.to_string(), fmt_real(t.price), fmt_real(t.amount), side.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct LobLine {
    t: i64,
    bids: Vec<(f64, f64)>,
    asks: Vec<(f64, f64)>,
}

fn json_lines<R: Read, T: for<'de> Deserialize<'de>>(r: R, name: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| Error::parse(name, i as u64 + 1, e.to_string()))?;
        out.push(item);
    }
    Ok(out)
}

pub fn read_lob_jsonl<R: Read>(r: R, name: &str) -> Result<Vec<LobSnapshot>> {
    let lines: Vec<LobLine> = json_lines(r, name)?;
    Ok(lines
        .into_iter()
        .map(|l| LobSnapshot {
            t_ms: l.t,
            bids: l.bids,
            asks: l.asks,
        })
        .collect())
}

pub fn write_lob_jsonl<W: Write>(mut w: W, snapshots: &[LobSnapshot]) -> Result<()> {
    for s in snapshots {
        let line = LobLine {
            t: s.t_ms,
            bids: s.bids.clone(),
            asks: s.asks.clone(),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_posts_jsonl<R: Read>(r: R, name: &str) -> Result<Vec<Post>> {
    let posts: Vec<Post> = json_lines(r, name)?;
    if let Some(i) = posts.iter().position(|p| p.channel.is_empty()) {
        return Err(Error::InvalidArgument(format!("{name}: post #{} has an empty channel", i + 1)));
    }
    Ok(posts)
}

pub fn write_posts_jsonl<W: Write>(mut w: W, posts: &[Post]) -> Result<()> {
    for p in posts {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// reports
// ---------------------------------------------------------------------------

/// One row of the correlation report.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationRow {
    pub lag: i64,
    pub key: FrameKey,
    /// `None` for zero-variance entries.
    pub pearson: Option<f64>,
}

pub fn write_correlations_csv<W: Write>(w: W, matrix: &CorrelationMatrix) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(CORRELATION_HEADER)?;
    for (lag, key, p) in matrix.entries() {
        let (pearson, zero_var) = match p {
            Some(p) => (fmt_real(p), "0"),
            None => (fmt_real(0.0), "1"),
        };
        out.write_record([
            lag.to_string().as_str(),
            &key.channel,
            &key.metric,
            &key.variant.to_string(),
            &pearson,
            zero_var,
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_correlations_csv<R: Read>(r: R, name: &str) -> Result<Vec<CorrelationRow>> {
    let mut rows = Vec::new();
    Rows::new(name, r, &CORRELATION_HEADER)?.for_each(|rec, line| {
        let variant: Variant = text(name, line, rec, 3, "variant")?
            .parse()
            .map_err(|e: Error| Error::parse(name, line, e.to_string()))?;
        let pearson: f64 = field(name, line, rec, 4, "pearson")?;
        let zero_var = parse_flag(name, line, text(name, line, rec, 5, "zero_variance")?)?;
        rows.push(CorrelationRow {
            lag: field(name, line, rec, 0, "lag")?,
            key: FrameKey::new(text(name, line, rec, 1, "channel")?, text(name, line, rec, 2, "metric")?, variant),
            pearson: (!zero_var).then_some(pearson),
        });
        Ok(())
    })?;
    Ok(rows)
}

pub fn write_weights_csv<W: Write>(w: W, weights: &ChannelWeights) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(WEIGHTS_HEADER)?;
    for (channel, weight) in weights.iter() {
        out.write_record([channel, &fmt_real(weight)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_weights_csv<R: Read>(r: R, name: &str) -> Result<ChannelWeights> {
    let mut weights = ChannelWeights::uniform();
    Rows::new(name, r, &WEIGHTS_HEADER)?.for_each(|rec, line| {
        let channel = text(name, line, rec, 0, "channel")?;
        let weight: f64 = field(name, line, rec, 1, "weight")?;
        weights
            .insert(channel, weight)
            .map_err(|e| Error::parse(name, line, e.to_string()))
    })?;
    Ok(weights)
}

/// `lag,correlation`; an empty correlation means nothing could be assembled.
pub fn write_sweep_csv<W: Write>(w: W, sweep: &[(i64, Option<f64>)]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(SWEEP_HEADER)?;
    for (lag, c) in sweep {
        out.write_record([lag.to_string(), c.map(fmt_real).unwrap_or_default()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_sweep_csv<R: Read>(r: R, name: &str) -> Result<Vec<(i64, Option<f64>)>> {
    let mut rows = Vec::new();
    Rows::new(name, r, &SWEEP_HEADER)?.for_each(|rec, line| {
        let lag: i64 = field(name, line, rec, 0, "lag")?;
        let raw = text(name, line, rec, 1, "correlation")?;
        let c = if raw.is_empty() {
            None
        } else {
            Some(field(name, line, rec, 1, "correlation")?)
        };
        rows.push((lag, c));
        Ok(())
    })?;
    Ok(rows)
}

/// Ranked `channel,metric,variant,weight` listing.
pub fn write_listing_csv<W: Write>(w: W, entries: &[(FrameKey, f64)]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(LISTING_HEADER)?;
    for (key, weight) in entries {
        out.write_record([
            key.channel.as_str(),
            &key.metric,
            &key.variant.to_string(),
            &fmt_real(*weight),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_listing_csv<R: Read>(r: R, name: &str) -> Result<Vec<(FrameKey, f64)>> {
    let mut rows = Vec::new();
    Rows::new(name, r, &LISTING_HEADER)?.for_each(|rec, line| {
        let variant: Variant = text(name, line, rec, 2, "variant")?
            .parse()
            .map_err(|e: Error| Error::parse(name, line, e.to_string()))?;
        let key = FrameKey::new(text(name, line, rec, 0, "channel")?, text(name, line, rec, 1, "metric")?, variant);
        rows.push((key, field(name, line, rec, 3, "weight")?));
        Ok(())
    })?;
    Ok(rows)
}

pub fn write_eval_csv<W: Write>(w: W, rows: &[EvalRow]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(EVAL_HEADER)?;
    for r in rows {
        out.write_record([
            r.predictor.clone(),
            r.horizon.to_string(),
            r.n.to_string(),
            fmt_real(r.mape),
            fmt_real(r.da),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_eval_csv<R: Read>(r: R, name: &str) -> Result<Vec<EvalRow>> {
    let mut rows = Vec::new();
    Rows::new(name, r, &EVAL_HEADER)?.for_each(|rec, line| {
        rows.push(EvalRow {
            predictor: text(name, line, rec, 0, "predictor")?.to_string(),
            horizon: field(name, line, rec, 1, "horizon")?,
            n: field(name, line, rec, 2, "n")?,
            mape: field(name, line, rec, 3, "mape")?,
            da: field(name, line, rec, 4, "da")?,
        });
        Ok(())
    })?;
    Ok(rows)
}
