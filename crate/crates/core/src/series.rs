//! Uniform time grids, aligned series frames and (lagged) Pearson correlation.
//!
//! Every metric in the toolkit travels as a [`SeriesFrame`]: one value per
//! bucket of a [`TimeGrid`] plus a presence mask. Absent buckets always hold
//! `0.0`, the neutral value of the normalized `[-1, +1]` space, so that frames
//! can be summed and correlated without special-casing gaps.
//!
//! Lag convention: a positive lag means the cause precedes the effect. The
//! pairs correlated at lag `l` are `(cause[t], effect[t + l])`.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bucket width of a time grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Day,
    Hour,
    Minute,
    Second,
}

impl Granularity {
    pub const fn period_secs(self) -> i64 {
        match self {
            Granularity::Day => 86_400,
            Granularity::Hour => 3_600,
            Granularity::Minute => 60,
            Granularity::Second => 1,
        }
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            Granularity::Day => "day",
            Granularity::Hour => "hour",
            Granularity::Minute => "minute",
            Granularity::Second => "second",
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "day" | "1d" => Ok(Granularity::Day),
            "hour" | "1h" => Ok(Granularity::Hour),
            "minute" | "1m" => Ok(Granularity::Minute),
            "second" | "1s" => Ok(Granularity::Second),
            _ => Err(Error::InvalidGranularity(s.to_string())),
        }
    }
}

/// A contiguous run of `count` buckets starting at an aligned UTC epoch second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeGrid {
    start: i64,
    granularity: Granularity,
    count: usize,
}

/// Builds the grid covering `[start, end)`. `start` is floored to the
/// granularity boundary (UTC midnight for days).
pub fn build_grid(start: i64, end: i64, granularity: Granularity) -> Result<TimeGrid> {
    if end <= start {
        return Err(Error::NonPositiveSpan { start, end });
    }
    let period = granularity.period_secs();
    let aligned = start.div_euclid(period) * period;
    let span = end - aligned;
    let count = (span + period - 1).div_euclid(period) as usize;
    Ok(TimeGrid {
        start: aligned,
        granularity,
        count,
    })
}

impl TimeGrid {
    /// Grid of `count` buckets from an already aligned `start`.
    pub fn new(start: i64, granularity: Granularity, count: usize) -> Result<Self> {
        let period = granularity.period_secs();
        if start.rem_euclid(period) != 0 {
            return Err(Error::InvalidArgument(format!(
                "grid start {start} is not aligned to {granularity}"
            )));
        }
        if count == 0 {
            return Err(Error::NonPositiveSpan { start, end: start });
        }
        Ok(Self {
            start,
            granularity,
            count,
        })
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn period(&self) -> i64 {
        self.granularity.period_secs()
    }

    /// Exclusive end of the last bucket.
    pub fn end(&self) -> i64 {
        self.start + self.count as i64 * self.period()
    }

    /// Start time of bucket `index`.
    pub fn time_of(&self, index: usize) -> i64 {
        self.start + index as i64 * self.period()
    }

    /// Bucket of a timestamp in epoch seconds, if inside the grid.
    pub fn bucket_of(&self, t: i64) -> Option<usize> {
        if t < self.start {
            return None;
        }
        let idx = ((t - self.start) / self.period()) as usize;
        (idx < self.count).then_some(idx)
    }

    /// Bucket of a timestamp in epoch milliseconds, if inside the grid.
    pub fn bucket_of_ms(&self, t_ms: i64) -> Option<usize> {
        let start_ms = self.start * 1000;
        if t_ms < start_ms {
            return None;
        }
        let idx = ((t_ms - start_ms) / (self.period() * 1000)) as usize;
        (idx < self.count).then_some(idx)
    }

    /// Sub-grid covering bucket indices `range`.
    pub fn slice(&self, range: Range<usize>) -> Result<TimeGrid> {
        if range.start >= range.end || range.end > self.count {
            return Err(Error::InvalidArgument(format!(
                "slice {range:?} outside grid of {} buckets",
                self.count
            )));
        }
        Ok(TimeGrid {
            start: self.time_of(range.start),
            granularity: self.granularity,
            count: range.end - range.start,
        })
    }

    /// Common span of two grids of the same granularity.
    pub fn intersect(&self, other: &TimeGrid) -> Option<TimeGrid> {
        if self.granularity != other.granularity {
            return None;
        }
        let start = self.start.max(other.start);
        let end = self.end().min(other.end());
        (end > start).then(|| TimeGrid {
            start,
            granularity: self.granularity,
            count: ((end - start) / self.period()) as usize,
        })
    }

    /// Index range of `inner` within `self`, if `inner` lies inside this grid.
    pub fn index_range_of(&self, inner: &TimeGrid) -> Option<Range<usize>> {
        if inner.granularity != self.granularity || inner.start < self.start || inner.end() > self.end() {
            return None;
        }
        let offset = ((inner.start - self.start) / self.period()) as usize;
        Some(offset..offset + inner.count)
    }
}

/// Transform suffix of a frame: which of differentiation (D), signed decimal
/// log (L) and max-abs normalization (N) have been applied, always rendered
/// in that order. The raw frame has the empty suffix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Variant {
    differentiated: bool,
    logged: bool,
    normalized: bool,
}

impl Variant {
    pub const RAW: Variant = Variant::new(false, false, false);
    pub const N: Variant = Variant::new(false, false, true);
    pub const LN: Variant = Variant::new(false, true, true);
    pub const DN: Variant = Variant::new(true, false, true);
    pub const DLN: Variant = Variant::new(true, true, true);

    pub const fn new(differentiated: bool, logged: bool, normalized: bool) -> Self {
        Self {
            differentiated,
            logged,
            normalized,
        }
    }

    pub fn is_differentiated(&self) -> bool {
        self.differentiated
    }

    pub fn is_logged(&self) -> bool {
        self.logged
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Only normalized variants enter the causal sweep.
    pub fn is_sweepable(&self) -> bool {
        self.normalized
    }

    pub(crate) fn with_differentiated(mut self) -> Self {
        self.differentiated = true;
        self
    }

    pub(crate) fn with_logged(mut self) -> Self {
        self.logged = true;
        self
    }

    pub(crate) fn with_normalized(mut self) -> Self {
        self.normalized = true;
        self
    }
}

// Ordered by rendered suffix so that tie-breaks read lexicographically.
impl Ord for Variant {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.to_string().cmp(&other.to_string())
    }
}

impl PartialOrd for Variant {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.differentiated {
            f.write_str("D")?;
        }
        if self.logged {
            f.write_str("L")?;
        }
        if self.normalized {
            f.write_str("N")?;
        }
        Ok(())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut variant = Variant::RAW;
        let mut rest = s;
        for (letter, flag) in [
            ('D', &mut variant.differentiated),
            ('L', &mut variant.logged),
            ('N', &mut variant.normalized),
        ] {
            if let Some(stripped) = rest.strip_prefix(letter) {
                *flag = true;
                rest = stripped;
            }
        }
        if rest.is_empty() {
            Ok(variant)
        } else {
            Err(Error::InvalidVariant(s.to_string()))
        }
    }
}

impl Serialize for Variant {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Variant {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Identity of a frame: channel, metric and transform variant.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameKey {
    pub channel: String,
    pub metric: String,
    pub variant: Variant,
}

impl FrameKey {
    pub fn new(channel: impl Into<String>, metric: impl Into<String>, variant: Variant) -> Self {
        Self {
            channel: channel.into(),
            metric: metric.into(),
            variant,
        }
    }
}

impl fmt::Display for FrameKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.channel, self.metric, self.variant)
    }
}

/// One metric of one channel on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesFrame {
    pub channel: String,
    pub metric: String,
    pub variant: Variant,
    grid: TimeGrid,
    values: Vec<f64>,
    present: Vec<bool>,
}

/// The designated target series (price difference by default).
pub type EffectSeries = SeriesFrame;

impl SeriesFrame {
    /// Builds a frame from optional per-bucket values; `None` becomes an
    /// absent bucket holding `0.0`.
    pub fn from_options(
        channel: impl Into<String>,
        metric: impl Into<String>,
        variant: Variant,
        grid: TimeGrid,
        values: Vec<Option<f64>>,
    ) -> Result<Self> {
        let present = values.iter().map(Option::is_some).collect();
        let values = values.into_iter().map(|v| v.unwrap_or(0.0)).collect();
        Self::from_parts(channel, metric, variant, grid, values, present)
    }

    /// Builds a fully present frame.
    pub fn dense(
        channel: impl Into<String>,
        metric: impl Into<String>,
        variant: Variant,
        grid: TimeGrid,
        values: Vec<f64>,
    ) -> Result<Self> {
        let present = vec![true; values.len()];
        Self::from_parts(channel, metric, variant, grid, values, present)
    }

    /// Builds a frame from values and mask. Absent positions are reset to `0.0`.
    pub fn from_parts(
        channel: impl Into<String>,
        metric: impl Into<String>,
        variant: Variant,
        grid: TimeGrid,
        mut values: Vec<f64>,
        present: Vec<bool>,
    ) -> Result<Self> {
        if values.len() != grid.count() || present.len() != grid.count() {
            return Err(Error::LengthMismatch {
                left: values.len().max(present.len()),
                right: grid.count(),
            });
        }
        for (v, &p) in values.iter_mut().zip(&present) {
            if !p {
                *v = 0.0;
            } else if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite value {v}")));
            }
        }
        let channel = channel.into();
        if channel.is_empty() {
            return Err(Error::InvalidArgument("empty channel identifier".into()));
        }
        Ok(Self {
            channel,
            metric: metric.into(),
            variant,
            grid,
            values,
            present,
        })
    }

    pub fn key(&self) -> FrameKey {
        FrameKey::new(self.channel.clone(), self.metric.clone(), self.variant)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn present(&self) -> &[bool] {
        &self.present
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        self.present
            .get(index)
            .and_then(|&p| p.then(|| self.values[index]))
    }

    pub fn present_count(&self) -> usize {
        self.present.iter().filter(|&&p| p).count()
    }

    /// Same frame restricted to bucket indices `range`.
    pub fn slice(&self, range: Range<usize>) -> Result<SeriesFrame> {
        let grid = self.grid.slice(range.clone())?;
        Ok(SeriesFrame {
            channel: self.channel.clone(),
            metric: self.metric.clone(),
            variant: self.variant,
            grid,
            values: self.values[range.clone()].to_vec(),
            present: self.present[range].to_vec(),
        })
    }

    /// Same frame restricted to a sub-grid.
    pub fn restrict(&self, grid: &TimeGrid) -> Result<SeriesFrame> {
        let range = self.grid.index_range_of(grid).ok_or_else(|| {
            Error::GridMismatch(format!("{} does not cover the requested span", self.key()))
        })?;
        self.slice(range)
    }

    /// Applies `f` to every present value, keeping the mask.
    pub(crate) fn map_present(&self, variant: Variant, f: impl Fn(f64) -> f64) -> SeriesFrame {
        let values = self
            .values
            .iter()
            .zip(&self.present)
            .map(|(&v, &p)| if p { f(v) } else { 0.0 })
            .collect();
        SeriesFrame {
            channel: self.channel.clone(),
            metric: self.metric.clone(),
            variant,
            grid: self.grid,
            values,
            present: self.present.clone(),
        }
    }

    pub(crate) fn with_data(&self, variant: Variant, values: Vec<f64>, present: Vec<bool>) -> SeriesFrame {
        debug_assert_eq!(values.len(), self.grid.count());
        SeriesFrame {
            channel: self.channel.clone(),
            metric: self.metric.clone(),
            variant,
            grid: self.grid,
            values,
            present,
        }
    }

    /// Renames the frame's identity, keeping its data.
    pub fn renamed(mut self, channel: impl Into<String>, metric: impl Into<String>) -> SeriesFrame {
        self.channel = channel.into();
        self.metric = metric.into();
        self
    }
}

fn is_constant(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[0] == w[1])
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::TooShort { needed: 3, got: n });
    }
    if is_constant(x) || is_constant(y) {
        return Err(Error::ZeroVariance);
    }
    let mean_x = x.iter().sum::<f64>() / n as f64;
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(r.clamp(-1.0, 1.0))
}

/// Overlapping slices `(cause[t], effect[t + lag])` for all valid `t`.
pub fn lagged_pairs<'a>(cause: &'a [f64], effect: &'a [f64], lag: i64) -> (&'a [f64], &'a [f64]) {
    let n = cause.len().min(effect.len());
    let shift = lag.unsigned_abs() as usize;
    if shift >= n {
        return (&cause[..0], &effect[..0]);
    }
    if lag >= 0 {
        (&cause[..n - shift], &effect[shift..n])
    } else {
        (&cause[shift..n], &effect[..n - shift])
    }
}

/// Pearson correlation of `cause[t]` against `effect[t + lag]`.
pub fn lagged_pearson_values(cause: &[f64], effect: &[f64], lag: i64) -> Result<f64> {
    if cause.len() != effect.len() {
        return Err(Error::LengthMismatch {
            left: cause.len(),
            right: effect.len(),
        });
    }
    check_lag(lag, cause.len())?;
    let (x, y) = lagged_pairs(cause, effect, lag);
    pearson(x, y)
}

pub(crate) fn check_lag(lag: i64, count: usize) -> Result<()> {
    if lag.unsigned_abs() as usize + 2 >= count {
        return Err(Error::LagOutOfRange { lag, count });
    }
    Ok(())
}

/// Lagged Pearson correlation between two frames on the same grid.
pub fn lagged_pearson(cause: &SeriesFrame, effect: &EffectSeries, lag: i64) -> Result<f64> {
    ensure_same_grid(cause, effect)?;
    lagged_pearson_values(cause.values(), effect.values(), lag)
}

pub(crate) fn ensure_same_grid(a: &SeriesFrame, b: &SeriesFrame) -> Result<()> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch(format!("{} vs {}", a.key(), b.key())));
    }
    Ok(())
}
