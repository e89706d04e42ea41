//! Lag sweep of correlation weights and greedy assembly of the synthetic
//! additive cause indicator (SACI).
//!
//! For a lag `l` the indicator is `Y(t) = Σ X(c,m,t) · P(l,c,m) · W(c)`, where
//! `P` is the lagged Pearson correlation of the candidate with the effect and
//! `W` the channel's representability weight. Terms are added in descending
//! `W · |P|` order and kept only while they raise the correlation of `Y` with
//! the effect at `l`.

use std::collections::{BTreeMap, HashMap};
use std::ops::{Range, RangeInclusive};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{
    check_lag, ensure_same_grid, lagged_pearson_values, EffectSeries, FrameKey, SeriesFrame, TimeGrid, Variant,
};

/// Correlation weights `P(l, c, m, v)` over an inclusive lag range. `None`
/// marks a zero-variance overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    lag_min: i64,
    lag_max: i64,
    keys: Vec<FrameKey>,
    // [key][lag - lag_min]
    values: Vec<Vec<Option<f64>>>,
}

impl CorrelationMatrix {
    pub fn lags(&self) -> RangeInclusive<i64> {
        self.lag_min..=self.lag_max
    }

    pub fn contains_lag(&self, lag: i64) -> bool {
        self.lags().contains(&lag)
    }

    pub fn keys(&self) -> &[FrameKey] {
        &self.keys
    }

    /// `None` when the key or lag is unknown, `Some(None)` for a zero-variance
    /// marker.
    pub fn get(&self, lag: i64, key: &FrameKey) -> Option<Option<f64>> {
        if !self.contains_lag(lag) {
            return None;
        }
        let row = self.keys.iter().position(|k| k == key)?;
        Some(self.values[row][(lag - self.lag_min) as usize])
    }

    /// All `(key, P)` entries at `lag`, in key order.
    pub fn at_lag(&self, lag: i64) -> Vec<(&FrameKey, Option<f64>)> {
        if !self.contains_lag(lag) {
            return Vec::new();
        }
        let col = (lag - self.lag_min) as usize;
        self.keys.iter().zip(&self.values).map(|(k, row)| (k, row[col])).collect()
    }

    /// Every entry, lag-major, then in key order.
    pub fn entries(&self) -> impl Iterator<Item = (i64, &FrameKey, Option<f64>)> + '_ {
        self.lags()
            .flat_map(move |lag| self.at_lag(lag).into_iter().map(move |(k, p)| (lag, k, p)))
    }
}

fn check_lags(lags: &RangeInclusive<i64>, count: usize) -> Result<()> {
    if lags.is_empty() {
        return Err(Error::InvalidArgument(format!("empty lag range {lags:?}")));
    }
    check_lag(*lags.start(), count)?;
    check_lag(*lags.end(), count)
}

/// Lagged Pearson correlation of every frame with the effect at every lag.
pub fn lag_sweep(frames: &[SeriesFrame], effect: &EffectSeries, lags: RangeInclusive<i64>) -> Result<CorrelationMatrix> {
    check_lags(&lags, effect.len())?;
    let mut seen = HashMap::new();
    for f in frames {
        ensure_same_grid(f, effect)?;
        if seen.insert(f.key(), ()).is_some() {
            return Err(Error::DuplicateFrame(f.key().to_string()));
        }
    }
    let values = frames
        .par_iter()
        .map(|f| {
            lags.clone()
                .map(|lag| match lagged_pearson_values(f.values(), effect.values(), lag) {
                    Ok(p) => Ok(Some(p)),
                    Err(Error::ZeroVariance) => Ok(None),
                    Err(e) => Err(e),
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CorrelationMatrix {
        lag_min: *lags.start(),
        lag_max: *lags.end(),
        keys: frames.iter().map(SeriesFrame::key).collect(),
        values,
    })
}

/// Representability weight per channel. Channels not listed weigh 1.0, which
/// is the weight of fully represented (market) channels.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChannelWeights(BTreeMap<String, f64>);

impl ChannelWeights {
    pub fn uniform() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, channel: impl Into<String>, weight: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::InvalidArgument(format!("channel weight {weight} outside [0, 1]")));
        }
        self.0.insert(channel.into(), weight);
        Ok(())
    }

    pub fn get(&self, channel: &str) -> f64 {
        self.0.get(channel).copied().unwrap_or(1.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

impl FromIterator<(String, f64)> for ChannelWeights {
    fn from_iter<I: IntoIterator<Item = (String, f64)>>(iter: I) -> Self {
        Self(iter.into_iter().map(|(c, w)| (c, w.clamp(0.0, 1.0))).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyPolicy {
    /// Candidates need `|P|` strictly above this.
    pub min_abs_p: f64,
    /// Required correlation improvement for a term to be kept.
    pub min_gain: f64,
    /// Stop at the first rejected candidate instead of skipping it.
    pub stop_on_first_failure: bool,
    /// Multiply by `W(c)`; when off every channel weighs 1.
    pub use_representability: bool,
}

impl Default for AssemblyPolicy {
    fn default() -> Self {
        Self {
            min_abs_p: 0.0,
            min_gain: 1e-9,
            stop_on_first_failure: false,
            use_representability: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaciTerm {
    pub channel: String,
    pub metric: String,
    pub variant: Variant,
    /// `P · W`.
    pub weight: f64,
    pub pearson: f64,
    pub representability: f64,
    /// Training correlation of the indicator right after this term was added.
    pub correlation: f64,
}

impl SaciTerm {
    pub fn key(&self) -> FrameKey {
        FrameKey::new(self.channel.clone(), self.metric.clone(), self.variant)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaciModel {
    pub lag: i64,
    pub terms: Vec<SaciTerm>,
    pub training_correlation: f64,
    /// Grid the training span indexes into.
    pub grid: TimeGrid,
    pub train_span: Range<usize>,
}

impl SaciModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: SaciModel = serde_json::from_str(text)?;
        TimeGrid::new(model.grid.start(), model.grid.granularity(), model.grid.count())?;
        if model.train_span.start >= model.train_span.end || model.train_span.end > model.grid.count() {
            return Err(Error::InvalidArgument(format!(
                "train span {:?} outside model grid",
                model.train_span
            )));
        }
        Ok(model)
    }
}

fn frame_index(frames: &[SeriesFrame]) -> HashMap<FrameKey, &SeriesFrame> {
    frames.iter().map(|f| (f.key(), f)).collect()
}

struct Candidate<'a> {
    key: FrameKey,
    pearson: f64,
    representability: f64,
    weight: f64,
    rank: f64,
    values: &'a [f64],
}

/// Greedy SACI assembly at `lag` on the buckets `train_span`.
///
/// `matrix` must have been computed on the same span. Returns the model and
/// the indicator evaluated on the training span.
pub fn assemble_saci(
    frames: &[SeriesFrame],
    effect: &EffectSeries,
    lag: i64,
    matrix: &CorrelationMatrix,
    weights: &ChannelWeights,
    policy: &AssemblyPolicy,
    train_span: Range<usize>,
) -> Result<(SaciModel, Vec<f64>)> {
    if !matrix.contains_lag(lag) {
        return Err(Error::LagOutOfRange {
            lag,
            count: train_span.len(),
        });
    }
    if train_span.start >= train_span.end || train_span.end > effect.len() {
        return Err(Error::InvalidArgument(format!(
            "train span {train_span:?} outside grid of {} buckets",
            effect.len()
        )));
    }
    check_lag(lag, train_span.len())?;
    let index = frame_index(frames);
    let mut candidates = Vec::new();
    for (key, p) in matrix.at_lag(lag) {
        let Some(p) = p else { continue };
        if p.abs() <= policy.min_abs_p {
            continue;
        }
        let frame = index
            .get(key)
            .ok_or_else(|| Error::MissingTermFrame(key.to_string()))?;
        ensure_same_grid(frame, effect)?;
        let w = if policy.use_representability {
            weights.get(&key.channel)
        } else {
            1.0
        };
        let weight = p * w;
        if weight == 0.0 || !weight.is_finite() {
            continue;
        }
        candidates.push(Candidate {
            key: key.clone(),
            pearson: p,
            representability: w,
            weight,
            rank: w * p.abs(),
            values: &frame.values()[train_span.clone()],
        });
    }
    candidates.sort_by(|a, b| b.rank.total_cmp(&a.rank).then_with(|| a.key.cmp(&b.key)));

    let target = &effect.values()[train_span.clone()];
    let mut y = vec![0.0; train_span.len()];
    let mut terms: Vec<SaciTerm> = Vec::new();
    let mut current = f64::NEG_INFINITY;
    for cand in &candidates {
        let trial: Vec<f64> = y.iter().zip(cand.values).map(|(a, x)| a + x * cand.weight).collect();
        let corr = if terms.is_empty() {
            // a positive rescaling of one frame keeps its correlation
            cand.pearson.abs()
        } else {
            match lagged_pearson_values(&trial, target, lag) {
                Ok(c) => c,
                Err(Error::ZeroVariance) => f64::NEG_INFINITY,
                Err(e) => return Err(e),
            }
        };
        let accept = if terms.is_empty() {
            corr.is_finite()
        } else {
            corr > current + policy.min_gain
        };
        if accept {
            y = trial;
            current = corr;
            terms.push(SaciTerm {
                channel: cand.key.channel.clone(),
                metric: cand.key.metric.clone(),
                variant: cand.key.variant,
                weight: cand.weight,
                pearson: cand.pearson,
                representability: cand.representability,
                correlation: corr,
            });
        } else if !terms.is_empty() && policy.stop_on_first_failure {
            break;
        }
    }
    if terms.is_empty() {
        return Err(Error::NoCandidates);
    }
    Ok((
        SaciModel {
            lag,
            terms,
            training_correlation: current,
            grid: *effect.grid(),
            train_span,
        },
        y,
    ))
}

pub const SACI_CHANNEL: &str = "saci";
pub const SACI_METRIC: &str = "saci";

/// Evaluates the indicator on the shared grid of `frames`.
pub fn apply_saci(model: &SaciModel, frames: &[SeriesFrame]) -> Result<SeriesFrame> {
    let index = frame_index(frames);
    let mut grid: Option<TimeGrid> = None;
    let mut y: Vec<f64> = Vec::new();
    for term in &model.terms {
        let key = term.key();
        let frame = index.get(&key).ok_or_else(|| Error::MissingTermFrame(key.to_string()))?;
        match grid {
            None => {
                grid = Some(*frame.grid());
                y = vec![0.0; frame.len()];
            }
            Some(g) if g != *frame.grid() => {
                return Err(Error::GridMismatch(format!("term {key} is on a different grid")));
            }
            _ => {}
        }
        for (acc, x) in y.iter_mut().zip(frame.values()) {
            *acc += x * term.weight;
        }
    }
    let grid = grid.ok_or_else(|| Error::InvalidArgument("model has no terms".into()))?;
    SeriesFrame::dense(SACI_CHANNEL, SACI_METRIC, Variant::RAW, grid, y)
}

/// Indicator values on bucket indices `range` of the frames' grid.
pub fn apply_saci_span(model: &SaciModel, frames: &[SeriesFrame], range: Range<usize>) -> Result<Vec<f64>> {
    if range.is_empty() {
        return Ok(Vec::new());
    }
    let y = apply_saci(model, frames)?;
    y.values()
        .get(range.clone())
        .map(<[f64]>::to_vec)
        .ok_or_else(|| Error::InvalidArgument(format!("span {range:?} outside grid")))
}

/// Result of sweeping and assembling on a training span.
#[derive(Debug, Clone)]
pub struct SaciFit {
    pub matrix: CorrelationMatrix,
    /// Training correlation of the indicator assembled at each lag; `None`
    /// where no candidate was usable.
    pub sweep: Vec<(i64, Option<f64>)>,
    pub model: SaciModel,
    /// Indicator on the training span.
    pub y: Vec<f64>,
}

/// Lag that maximizes the indicator correlation, preferring positive
/// (preceding) lags when the range has any. Ties go to the smaller `|lag|`.
pub fn best_lag(sweep: &[(i64, Option<f64>)]) -> Option<i64> {
    let pick = |positive_only: bool| {
        sweep
            .iter()
            .filter(|(l, c)| c.is_some() && (!positive_only || *l >= 1))
            .max_by(|a, b| {
                a.1.unwrap()
                    .total_cmp(&b.1.unwrap())
                    .then_with(|| b.0.abs().cmp(&a.0.abs()))
            })
            .map(|(l, _)| *l)
    };
    pick(true).or_else(|| pick(false))
}

fn check_train_span(train_span: &Range<usize>, effect: &EffectSeries) -> Result<()> {
    if train_span.start >= train_span.end || train_span.end > effect.len() {
        return Err(Error::InvalidArgument(format!(
            "train span {train_span:?} outside grid of {} buckets",
            effect.len()
        )));
    }
    Ok(())
}

/// Correlation matrix on `train_span`, plus the training correlation of the
/// indicator assembled at each lag (`None` where no candidate was usable).
pub fn saci_sweep(
    frames: &[SeriesFrame],
    effect: &EffectSeries,
    lags: RangeInclusive<i64>,
    weights: &ChannelWeights,
    policy: &AssemblyPolicy,
    train_span: Range<usize>,
) -> Result<(CorrelationMatrix, Vec<(i64, Option<f64>)>)> {
    check_train_span(&train_span, effect)?;
    let train_frames = frames
        .iter()
        .map(|f| {
            ensure_same_grid(f, effect)?;
            f.slice(train_span.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    let train_effect = effect.slice(train_span.clone())?;
    let matrix = lag_sweep(&train_frames, &train_effect, lags.clone())?;
    let sweep = lags
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&l| match assemble_saci(frames, effect, l, &matrix, weights, policy, train_span.clone()) {
            Ok((m, _)) => Ok((l, Some(m.training_correlation))),
            Err(Error::NoCandidates) => Ok((l, None)),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((matrix, sweep))
}

/// Runs [`saci_sweep`] and keeps the model at `lag` (or at [`best_lag`] when
/// `lag` is `None`).
pub fn fit_saci(
    frames: &[SeriesFrame],
    effect: &EffectSeries,
    lags: RangeInclusive<i64>,
    weights: &ChannelWeights,
    policy: &AssemblyPolicy,
    train_span: Range<usize>,
    lag: Option<i64>,
) -> Result<SaciFit> {
    let (matrix, sweep) = saci_sweep(frames, effect, lags, weights, policy, train_span.clone())?;
    let chosen = match lag {
        Some(l) => l,
        None => best_lag(&sweep).ok_or(Error::NoCandidates)?,
    };
    let (model, y) = assemble_saci(frames, effect, chosen, &matrix, weights, policy, train_span)?;
    Ok(SaciFit {
        matrix,
        sweep,
        model,
        y,
    })
}
