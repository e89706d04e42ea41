//! Price prediction baselines and error metrics.
//!
//! The last-known-price (LKP) baseline copies the price `horizon` buckets
//! back; the future-known-price (FKP) oracle copies the truth and only bounds
//! what a predictor could score. Directional accuracy compares the sign of the
//! predicted move against the realized move from the same anchor price; a
//! zero predicted move is correct only against a zero realized move.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::causal::{apply_saci, SaciModel};
use crate::error::{Error, Result};
use crate::series::SeriesFrame;

/// Predicted prices aligned to the price grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSeries {
    pub horizon: usize,
    pub values: Vec<f64>,
    pub present: Vec<bool>,
}

impl PredictionSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, t: usize) -> Option<f64> {
        self.present.get(t).and_then(|&p| p.then(|| self.values[t]))
    }

    /// Keeps predictions only inside `span`.
    pub fn restricted(&self, span: Range<usize>) -> PredictionSeries {
        let present = self
            .present
            .iter()
            .enumerate()
            .map(|(t, &p)| p && span.contains(&t))
            .collect::<Vec<_>>();
        let values = self
            .values
            .iter()
            .zip(&present)
            .map(|(&v, &p)| if p { v } else { 0.0 })
            .collect();
        PredictionSeries {
            horizon: self.horizon,
            values,
            present,
        }
    }

    fn from_options(horizon: usize, values: Vec<Option<f64>>) -> Self {
        PredictionSeries {
            horizon,
            present: values.iter().map(Option::is_some).collect(),
            values: values.into_iter().map(|v| v.unwrap_or(0.0)).collect(),
        }
    }
}

fn check_horizon(horizon: usize) -> Result<()> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("prediction horizon must be at least 1".into()));
    }
    Ok(())
}

/// `pred(t) = price(t - horizon)`.
pub fn predict_lkp(prices: &SeriesFrame, horizon: usize) -> Result<PredictionSeries> {
    check_horizon(horizon)?;
    let values = (0..prices.len())
        .map(|t| t.checked_sub(horizon).and_then(|s| prices.get(s)))
        .collect();
    Ok(PredictionSeries::from_options(horizon, values))
}

/// `pred(t) = price(t)`.
pub fn predict_fkp(prices: &SeriesFrame, horizon: usize) -> Result<PredictionSeries> {
    check_horizon(horizon)?;
    let values = (0..prices.len()).map(|t| prices.get(t)).collect();
    Ok(PredictionSeries::from_options(horizon, values))
}

/// Mean of `|pred - actual| / |actual|` over buckets where both are present.
pub fn mape(pred: &PredictionSeries, actual: &SeriesFrame) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for t in 0..pred.len().min(actual.len()) {
        let (Some(p), Some(a)) = (pred.get(t), actual.get(t)) else {
            continue;
        };
        if a == 0.0 {
            return Err(Error::ZeroActual { index: t });
        }
        sum += (p - a).abs() / a.abs();
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyOverlap);
    }
    Ok(sum / n as f64)
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Buckets scored by [`directional_accuracy`]: prediction, actual and the
/// anchor actual `horizon` buckets earlier all present.
fn direction_hits(pred: &PredictionSeries, actual: &SeriesFrame) -> (usize, usize) {
    let mut hits = 0;
    let mut n = 0;
    for t in pred.horizon..pred.len().min(actual.len()) {
        let (Some(p), Some(a), Some(prev)) = (pred.get(t), actual.get(t), actual.get(t - pred.horizon)) else {
            continue;
        };
        n += 1;
        if sign(p - prev) == sign(a - prev) {
            hits += 1;
        }
    }
    (hits, n)
}

/// Fraction of buckets where the predicted move from the anchor price has the
/// sign of the realized move. The anchor is the actual price `horizon`
/// buckets back.
pub fn directional_accuracy(pred: &PredictionSeries, actual: &SeriesFrame) -> Result<f64> {
    let (hits, n) = direction_hits(pred, actual);
    if n == 0 {
        return Err(Error::EmptyOverlap);
    }
    Ok(hits as f64 / n as f64)
}

/// Median of the nonzero `|PD|` values of `prices` inside `span`.
pub fn median_abs_move(prices: &SeriesFrame, span: Range<usize>) -> f64 {
    let mut moves: Vec<f64> = span
        .clone()
        .filter(|&t| t >= 1 && t < prices.len())
        .filter_map(|t| Some((prices.get(t)? - prices.get(t - 1)?).abs()))
        .filter(|m| *m > 0.0)
        .collect();
    if moves.is_empty() {
        return 0.0;
    }
    moves.sort_by(f64::total_cmp);
    let mid = moves.len() / 2;
    if moves.len() % 2 == 1 {
        moves[mid]
    } else {
        0.5 * (moves[mid - 1] + moves[mid])
    }
}

/// Direction-only forecast from the indicator:
/// `pred(t + l) = price(t + l - 1) + sign(Y(t)) * m`, with `m` the median
/// nonzero absolute price move on the model's training span.
pub fn saci_direction_predictor(
    model: &SaciModel,
    frames: &[SeriesFrame],
    prices: &SeriesFrame,
) -> Result<PredictionSeries> {
    if model.lag < 1 {
        return Err(Error::InvalidArgument(format!(
            "direction predictor needs a preceding lag, model lag is {}",
            model.lag
        )));
    }
    let y = apply_saci(model, frames)?;
    if y.grid() != prices.grid() {
        return Err(Error::GridMismatch("indicator and prices differ in grid".into()));
    }
    let span = model.train_span.start.min(prices.len())..model.train_span.end.min(prices.len());
    let step = median_abs_move(prices, span);
    let lag = model.lag as usize;
    let values = (0..prices.len())
        .map(|target| {
            let source = target.checked_sub(lag)?;
            let anchor = prices.get(target - 1)?;
            let direction = sign(y.values()[source]) as f64;
            Some(anchor + direction * step)
        })
        .collect();
    Ok(PredictionSeries::from_options(1, values))
}

/// One row of the evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub predictor: String,
    pub horizon: usize,
    pub n: usize,
    pub mape: f64,
    pub da: f64,
}

/// Scores `pred` against `actual` on `span`.
pub fn evaluate(name: &str, pred: &PredictionSeries, actual: &SeriesFrame, span: Range<usize>) -> Result<EvalRow> {
    let pred = pred.restricted(span);
    let (_, n) = direction_hits(&pred, actual);
    Ok(EvalRow {
        predictor: name.to_string(),
        horizon: pred.horizon,
        n,
        mape: mape(&pred, actual)?,
        da: directional_accuracy(&pred, actual)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn row(&self, predictor: &str) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.predictor == predictor)
    }
}

/// Report with the candidate predictor (if any) followed by the LKP and FKP
/// rows, all scored on `span`.
pub fn baseline_report(
    candidate: Option<(&str, &PredictionSeries)>,
    prices: &SeriesFrame,
    horizon: usize,
    span: Range<usize>,
) -> Result<EvalReport> {
    let mut rows = Vec::new();
    if let Some((name, pred)) = candidate {
        rows.push(evaluate(name, pred, prices, span.clone())?);
    }
    rows.push(evaluate("lkp", &predict_lkp(prices, horizon)?, prices, span.clone())?);
    rows.push(evaluate("fkp", &predict_fkp(prices, horizon)?, prices, span)?);
    Ok(EvalReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causal::SaciTerm;
    use crate::series::{Granularity, TimeGrid, Variant};

    fn prices(values: &[f64]) -> SeriesFrame {
        let g = TimeGrid::new(0, Granularity::Day, values.len()).unwrap();
        SeriesFrame::dense("m", "close", Variant::RAW, g, values.to_vec()).unwrap()
    }

    fn series(horizon: usize, values: &[Option<f64>]) -> PredictionSeries {
        PredictionSeries::from_options(horizon, values.to_vec())
    }

    #[test]
    fn lkp_examples() {
        let p = predict_lkp(&prices(&[100.0, 101.0, 103.0]), 1).unwrap();
        assert_eq!(p, series(1, &[None, Some(100.0), Some(101.0)]));
        let p = predict_lkp(&prices(&[1.0, 2.0, 3.0, 4.0]), 2).unwrap();
        assert_eq!(p, series(2, &[None, None, Some(1.0), Some(2.0)]));
        let flat = prices(&[5.0; 4]);
        assert_eq!(mape(&predict_lkp(&flat, 1).unwrap(), &flat).unwrap(), 0.0);
        assert!(predict_lkp(&flat, 0).is_err());
    }

    #[test]
    fn fkp_examples() {
        let a = prices(&[100.0, 99.0, 101.0]);
        let p = predict_fkp(&a, 1).unwrap();
        assert_eq!(p.values, a.values());
        assert_eq!(mape(&p, &a).unwrap(), 0.0);
        assert_eq!(directional_accuracy(&p, &a).unwrap(), 1.0);
        assert_eq!(predict_fkp(&prices(&[100.0]), 1).unwrap().values, vec![100.0]);
    }

    #[test]
    fn mape_examples() {
        let a = prices(&[100.0]);
        assert!((mape(&series(1, &[Some(110.0)]), &a).unwrap() - 0.1).abs() < 1e-15);
        let a = prices(&[100.0, 100.0]);
        assert!((mape(&series(1, &[Some(90.0), Some(110.0)]), &a).unwrap() - 0.1).abs() < 1e-15);
        assert!(matches!(mape(&series(1, &[None, None]), &a), Err(Error::EmptyOverlap)));
        let z = prices(&[0.0, 1.0]);
        assert!(matches!(
            mape(&series(1, &[Some(1.0), None]), &z),
            Err(Error::ZeroActual { index: 0 })
        ));
    }

    #[test]
    fn da_examples() {
        let rising = prices(&[1.0, 2.0, 3.0, 4.0]);
        let lkp = predict_lkp(&rising, 1).unwrap();
        assert_eq!(directional_accuracy(&lkp, &rising).unwrap(), 0.0);

        // predicted moves [+, -, +] against realized [+, +, +]
        let pred = series(1, &[None, Some(2.0), Some(1.5), Some(3.5)]);
        assert!((directional_accuracy(&pred, &rising).unwrap() - 2.0 / 3.0).abs() < 1e-15);

        assert!(matches!(
            directional_accuracy(&series(1, &[Some(1.0)]), &prices(&[1.0])),
            Err(Error::EmptyOverlap)
        ));
    }

    #[test]
    fn zero_move_only_matches_zero_move() {
        let a = prices(&[1.0, 1.0, 2.0]);
        let pred = series(1, &[None, Some(1.0), Some(1.0)]);
        assert_eq!(directional_accuracy(&pred, &a).unwrap(), 0.5);
    }

    fn one_term_model(lag: i64, n: usize) -> SaciModel {
        SaciModel {
            lag,
            terms: vec![SaciTerm {
                channel: "c".into(),
                metric: "x".into(),
                variant: Variant::N,
                weight: 1.0,
                pearson: 1.0,
                representability: 1.0,
                correlation: 1.0,
            }],
            training_correlation: 1.0,
            grid: TimeGrid::new(0, Granularity::Day, n).unwrap(),
            train_span: 0..n,
        }
    }

    #[test]
    fn saci_predictor_zero_signal_is_lkp() {
        let p = prices(&[10.0, 11.0, 12.0, 11.0, 13.0]);
        let x = SeriesFrame::dense("c", "x", Variant::N, *p.grid(), vec![0.0; 5]).unwrap();
        let pred = saci_direction_predictor(&one_term_model(1, 5), &[x], &p).unwrap();
        let lkp = predict_lkp(&p, 1).unwrap();
        assert_eq!(pred, lkp);
    }

    #[test]
    fn saci_predictor_follows_signal() {
        let p = prices(&[10.0, 11.0, 10.0, 12.0]);
        // Y(t) leads the move at t + 2 by two buckets
        let x = SeriesFrame::dense("c", "x", Variant::N, *p.grid(), vec![-1.0, 1.0, 0.3, -0.2]).unwrap();
        let pred = saci_direction_predictor(&one_term_model(2, 4), &[x], &p).unwrap();
        assert_eq!(pred.get(1), None);
        // step = median(1, 1, 2) = 1
        assert_eq!(pred.get(2), Some(10.0));
        assert_eq!(pred.get(3), Some(11.0));
        assert_eq!(directional_accuracy(&pred, &p).unwrap(), 1.0);

        let single = pred.restricted(3..4);
        assert_eq!(single.present.iter().filter(|&&b| b).count(), 1);
        assert!(saci_direction_predictor(&one_term_model(0, 4), &[], &p).is_err());
    }

    #[test]
    fn report_has_baselines() {
        let p = prices(&[10.0, 11.0, 10.5, 12.0, 12.5]);
        let report = baseline_report(None, &p, 1, 2..5).unwrap();
        let fkp = report.row("fkp").unwrap();
        assert_eq!((fkp.mape, fkp.da), (0.0, 1.0));
        assert_eq!(report.row("lkp").unwrap().n, 3);
    }
}
