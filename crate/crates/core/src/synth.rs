//! Seeded planted-causality datasets.
//!
//! Each true cause is i.i.d. standard normal; the effect is
//! `effect(t) = Σ w_i · x_i(t - lag) + σ · η(t)`. Cause values before the
//! first bucket are drawn too, so the effect is defined on the whole grid.
//! All frames are max-abs normalized. A close-price frame
//! `close(t) = base + Σ_{s ≤ t} effect(s)` is included so the effect can be
//! recovered as its first difference.
//!
//! Random numbers come from ChaCha8 (`rand_chacha`) seeded with
//! `seed_from_u64`, with normal deviates from `rand_distr::StandardNormal`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{CLOSE_METRIC, PRICE_DIFFERENCE_METRIC};
use crate::series::{EffectSeries, Granularity, SeriesFrame, TimeGrid, Variant};
use crate::transforms::max_abs_normalize;

pub const GENERATOR: &str = "ChaCha8Rng(seed_from_u64) + StandardNormal; rand_chacha 0.9, rand_distr 0.5";
pub const CAUSE_CHANNEL: &str = "cause";
pub const NOISE_CHANNEL: &str = "noise";
pub const MARKET_CHANNEL: &str = "market";
pub const BASE_PRICE: f64 = 1000.0;
/// 2021-01-01T00:00:00Z.
pub const DEFAULT_START: i64 = 1_609_459_200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub n: usize,
    pub true_lag: usize,
    pub cause_weights: Vec<f64>,
    pub noise_sigma: f64,
    pub n_noise_frames: usize,
    pub seed: u64,
}

impl PlantedSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::SpecInvalid(m));
        if self.true_lag < 1 {
            return bad("true_lag must be at least 1".into());
        }
        if self.n < self.true_lag + 10 {
            return bad(format!("n = {} leaves fewer than 10 buckets after lag {}", self.n, self.true_lag));
        }
        if self.cause_weights.is_empty() {
            return bad("at least one cause weight is required".into());
        }
        if self.cause_weights.iter().any(|w| !w.is_finite()) {
            return bad("cause weights must be finite".into());
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise_sigma {} must be a nonnegative number", self.noise_sigma));
        }
        Ok(())
    }
}

/// What was planted, for checking recovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub generator: String,
    pub spec: PlantedSpec,
    pub grid: TimeGrid,
    pub true_lag: usize,
    /// `(channel, metric, weight)` of each true cause.
    pub causes: Vec<(String, String, f64)>,
    pub effect: (String, String),
    pub close: (String, String),
}

#[derive(Debug, Clone)]
pub struct PlantedDataset {
    pub causes: Vec<SeriesFrame>,
    pub noise: Vec<SeriesFrame>,
    pub effect: EffectSeries,
    /// Raw close prices whose first difference is the effect.
    pub close: SeriesFrame,
    pub truth: GroundTruth,
}

impl PlantedDataset {
    /// Causes followed by noise frames.
    pub fn candidates(&self) -> Vec<SeriesFrame> {
        self.causes.iter().chain(&self.noise).cloned().collect()
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Generates the dataset on a daily grid starting at [`DEFAULT_START`].
pub fn generate_planted(spec: &PlantedSpec) -> Result<PlantedDataset> {
    let grid = TimeGrid::new(DEFAULT_START, Granularity::Day, spec.n.max(1))?;
    generate_planted_on(spec, grid)
}

pub fn generate_planted_on(spec: &PlantedSpec, grid: TimeGrid) -> Result<PlantedDataset> {
    spec.validate()?;
    if grid.count() != spec.n {
        return Err(Error::SpecInvalid(format!(
            "grid has {} buckets, spec asks for {}",
            grid.count(),
            spec.n
        )));
    }
    let (n, lag) = (spec.n, spec.true_lag);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // cause_ext[i][s] holds x_i(s - lag)
    let cause_ext: Vec<Vec<f64>> = spec.cause_weights.iter().map(|_| normal_vec(&mut rng, n + lag)).collect();
    let noise: Vec<Vec<f64>> = (0..spec.n_noise_frames).map(|_| normal_vec(&mut rng, n)).collect();
    let eta = normal_vec(&mut rng, n);

    let effect_raw: Vec<f64> = (0..n)
        .map(|t| {
            let signal: f64 = spec
                .cause_weights
                .iter()
                .zip(&cause_ext)
                .map(|(w, x)| w * x[t])
                .sum();
            signal + spec.noise_sigma * eta[t]
        })
        .collect();

    let normalized = |channel: &str, metric: String, values: Vec<f64>| -> Result<SeriesFrame> {
        Ok(max_abs_normalize(&SeriesFrame::dense(channel, metric, Variant::RAW, grid, values)?))
    };
    let causes = cause_ext
        .iter()
        .enumerate()
        .map(|(i, x)| normalized(CAUSE_CHANNEL, format!("x{i}"), x[lag..].to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let noise_frames = noise
        .into_iter()
        .enumerate()
        .map(|(i, x)| normalized(NOISE_CHANNEL, format!("n{i}"), x))
        .collect::<Result<Vec<_>>>()?;
    let effect = normalized(MARKET_CHANNEL, PRICE_DIFFERENCE_METRIC.to_string(), effect_raw)?;

    let close_values: Vec<f64> = effect
        .values()
        .iter()
        .scan(BASE_PRICE, |level, d| {
            *level += d;
            Some(*level)
        })
        .collect();
    let close = SeriesFrame::dense(MARKET_CHANNEL, CLOSE_METRIC, Variant::RAW, grid, close_values)?;

    let truth = GroundTruth {
        generator: GENERATOR.to_string(),
        spec: spec.clone(),
        grid,
        true_lag: lag,
        causes: causes
            .iter()
            .zip(&spec.cause_weights)
            .map(|(f, &w)| (f.channel.clone(), f.metric.clone(), w))
            .collect(),
        effect: (effect.channel.clone(), effect.metric.clone()),
        close: (close.channel.clone(), close.metric.clone()),
    };
    Ok(PlantedDataset {
        causes,
        noise: noise_frames,
        effect,
        close,
        truth,
    })
}
