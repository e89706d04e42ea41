//! The subcommands. Each reads its inputs, writes its artifacts under the
//! output directory and returns a short human-readable summary.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::ops::{Range, RangeInclusive};
use std::path::{Path, PathBuf};

use log::info;
use saci_core::causal::{fit_saci, saci_sweep, ChannelWeights, CorrelationMatrix, SaciModel};
use saci_core::evaluation::{baseline_report, saci_direction_predictor};
use saci_core::lexicon::{aggregate_channel_means, representability, score_post, LexiconSet, ScoredPost, ScoringOptions};
use saci_core::market::{
    aggregate_trades, lob_feature_frames, price_difference, trade_metric_frames, CLOSE_METRIC, PRICE_DIFFERENCE_METRIC,
};
use saci_core::series::build_grid;
use saci_core::synth::generate_planted;
use saci_core::transforms::expand_variants_fitted;
use saci_core::{io, Error, FrameKey, SeriesFrame, TimeGrid, Variant};

use crate::config::PipelineConfig;
use crate::CliError;

pub const FEATURES_FILE: &str = "features.csv";
pub const MEDIA_FILE: &str = "media.csv";
pub const CHANNEL_WEIGHTS_FILE: &str = "channel_weights.csv";
pub const CORRELATIONS_FILE: &str = "correlations.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const RANKED_FILE: &str = "ranked.csv";
pub const MODEL_FILE: &str = "model.json";
pub const EVAL_FILE: &str = "eval.csv";
pub const SYNTH_FRAMES_FILE: &str = "frames.csv";
pub const TRUTH_FILE: &str = "truth.json";

/// Lag-0 correlations this close to ±1 usually mean the effect itself (or a
/// rescaling of it) is among the candidates.
const LEAK_THRESHOLD: f64 = 1.0 - 1e-9;

type Outcome = Result<String, CliError>;

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Usage(format!("cannot open {}: {e}", path.display())))
}

fn name_of(path: &Path) -> String {
    path.display().to_string()
}

fn create(cfg: &PipelineConfig, file: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
    fs::create_dir_all(&cfg.out).map_err(Error::from)?;
    let path = cfg.out.join(file);
    let f = File::create(&path).map_err(Error::from)?;
    Ok((path, BufWriter::new(f)))
}

fn write_with(
    cfg: &PipelineConfig,
    file: &str,
    f: impl FnOnce(&mut BufWriter<File>) -> saci_core::Result<()>,
) -> Result<PathBuf, CliError> {
    let (path, mut w) = create(cfg, file)?;
    f(&mut w)?;
    w.flush().map_err(Error::from)?;
    Ok(path)
}

/// Grid from `start`/`end` when both are configured, otherwise from the
/// data's `[first, last]` timestamps in seconds.
fn input_grid(cfg: &PipelineConfig, data_span: Option<(i64, i64)>) -> Result<Option<TimeGrid>, CliError> {
    let (start, end) = match (cfg.start, cfg.end, data_span) {
        (Some(s), Some(e), _) => (s, e),
        (s, e, Some((first, last))) => (s.unwrap_or(first), e.unwrap_or(last + 1)),
        (_, _, None) => return Ok(None),
    };
    Ok(Some(build_grid(start, end, cfg.granularity)?))
}

fn variants(raw: &[SeriesFrame], fit: Range<usize>) -> Result<Vec<SeriesFrame>, CliError> {
    let mut out = Vec::with_capacity(raw.len() * 4);
    for f in raw {
        out.extend(expand_variants_fitted(f, fit.clone())?);
    }
    Ok(out)
}

/// Market frames from trades and/or order book snapshots: all four variants
/// of every metric plus the raw close price.
pub fn run_features(cfg: &PipelineConfig) -> Outcome {
    if cfg.trades.is_none() && cfg.lob.is_none() {
        return Err(CliError::Usage("features needs trades and/or lob".into()));
    }
    let trades = match &cfg.trades {
        Some(p) => io::read_trades_csv(open(p)?, &name_of(p))?,
        None => Vec::new(),
    };
    let snapshots = match &cfg.lob {
        Some(p) => io::read_lob_jsonl(open(p)?, &name_of(p))?,
        None => Vec::new(),
    };
    let times = trades.iter().map(|t| t.t_ms).chain(snapshots.iter().map(|s| s.t_ms));
    let span = times.fold(None, |acc: Option<(i64, i64)>, t| {
        let s = t.div_euclid(1000);
        Some(acc.map_or((s, s), |(a, b)| (a.min(s), b.max(s))))
    });
    let Some(grid) = input_grid(cfg, span)? else {
        let path = write_with(cfg, FEATURES_FILE, |w| io::write_frames_csv(w, &[]))?;
        return Ok(format!("no trades or snapshots; wrote empty {}\n", path.display()));
    };

    let mut raw = Vec::new();
    if cfg.trades.is_some() {
        let ohlcv = aggregate_trades(&trades, &grid);
        raw.extend(trade_metric_frames(&ohlcv, &grid, &cfg.market_channel)?);
    }
    if cfg.lob.is_some() {
        raw.extend(lob_feature_frames(&snapshots, &grid, &cfg.market_channel)?);
    }
    let fit = 0..cfg.train_len(grid.count());
    let mut frames = variants(&raw, fit)?;
    frames.extend(raw.iter().filter(|f| f.metric == CLOSE_METRIC).cloned());
    let path = write_with(cfg, FEATURES_FILE, |w| io::write_frames_csv(w, &frames))?;
    Ok(format!(
        "grid: {} x {} from {}\ntrades: {}\nsnapshots: {}\nframes: {} -> {}\n",
        grid.count(),
        grid.granularity(),
        grid.start(),
        trades.len(),
        snapshots.len(),
        frames.len(),
        path.display()
    ))
}

/// Media frames per channel and the channel representability table.
pub fn run_score(cfg: &PipelineConfig) -> Outcome {
    let (Some(posts_path), Some(lex_dir)) = (&cfg.posts, &cfg.lexicons) else {
        return Err(CliError::Usage("score needs posts and lexicons".into()));
    };
    let lexicons = LexiconSet::from_dir(lex_dir)?;
    let posts = io::read_posts_jsonl(open(posts_path)?, &name_of(posts_path))?;
    let options = ScoringOptions {
        log_scaling: cfg.log_scaling,
        sentiment: cfg.sentiment,
    };
    let scored = posts
        .iter()
        .map(|p| {
            Ok(ScoredPost {
                t: p.t,
                channel: p.channel.clone(),
                scores: score_post(p, &lexicons, options)?,
            })
        })
        .collect::<saci_core::Result<Vec<_>>>()?;

    let span = posts.iter().fold(None, |acc: Option<(i64, i64)>, p| {
        Some(acc.map_or((p.t, p.t), |(a, b)| (a.min(p.t), b.max(p.t))))
    });
    let grid = input_grid(cfg, span)?;
    let (frames, weights) = match grid {
        None => (Vec::new(), ChannelWeights::uniform()),
        Some(grid) => {
            let raw = aggregate_channel_means(&scored, &grid)?;
            let mut weights = ChannelWeights::uniform();
            let mut channels: Vec<&str> = raw.iter().map(|f| f.channel.as_str()).collect();
            channels.dedup();
            for c in channels {
                let own: Vec<SeriesFrame> = raw.iter().filter(|f| f.channel == c).cloned().collect();
                weights.insert(c, representability(&own))?;
            }
            (variants(&raw, 0..cfg.train_len(grid.count()))?, weights)
        }
    };
    let frames_path = write_with(cfg, MEDIA_FILE, |w| io::write_frames_csv(w, &frames))?;
    let weights_path = write_with(cfg, CHANNEL_WEIGHTS_FILE, |w| io::write_weights_csv(w, &weights))?;

    let mut summary = format!(
        "posts: {}\ncategories: {}\n",
        posts.len(),
        lexicons.categories().join(",")
    );
    for (c, w) in weights.iter() {
        let _ = writeln!(summary, "channel {c}: weight {w:.4}");
    }
    let _ = writeln!(summary, "frames: {} -> {}", frames.len(), frames_path.display());
    let _ = writeln!(summary, "weights -> {}", weights_path.display());
    Ok(summary)
}

/// Frames, price and effect on the common span of all inputs.
struct Inputs {
    grid: TimeGrid,
    frames: Vec<SeriesFrame>,
    price: SeriesFrame,
    effect: SeriesFrame,
}

impl Inputs {
    fn load(cfg: &PipelineConfig, within: Option<&TimeGrid>) -> Result<Self, CliError> {
        if cfg.frames.is_empty() {
            return Err(CliError::Usage("no frame files configured (key: frames)".into()));
        }
        let mut frames = Vec::new();
        for p in &cfg.frames {
            frames.extend(io::read_frames_csv(open(p)?, &name_of(p), cfg.granularity)?);
        }
        let mut grid = match (within, cfg.start, cfg.end) {
            (Some(g), _, _) => Some(*g),
            (None, Some(s), Some(e)) => Some(build_grid(s, e, cfg.granularity)?),
            _ => None,
        };
        for f in &frames {
            grid = Some(match grid {
                None => *f.grid(),
                Some(g) => g.intersect(f.grid()).ok_or_else(|| {
                    Error::GridMismatch(format!("{} shares no span with the other inputs", f.key()))
                })?,
            });
        }
        let grid = grid.ok_or_else(|| Error::InvalidArgument("frame files hold no frames".into()))?;
        if let Some(w) = within {
            if grid != *w {
                return Err(Error::GridMismatch(format!(
                    "frames cover only {} buckets from {} of the model's {} from {}",
                    grid.count(),
                    grid.start(),
                    w.count(),
                    w.start()
                ))
                .into());
            }
        }
        info!("common span: {} {} buckets from {}", grid.count(), grid.granularity(), grid.start());
        let frames = frames.iter().map(|f| f.restrict(&grid)).collect::<saci_core::Result<Vec<_>>>()?;

        let find = |channel: &str, metric: &str| {
            let mut hits: Vec<&SeriesFrame> =
                frames.iter().filter(|f| f.channel == channel && f.metric == metric).collect();
            hits.sort_by_key(|f| f.variant);
            hits.first().map(|f| (*f).clone())
        };
        let price = find(&cfg.price.channel, &cfg.price.metric)
            .filter(|f| f.variant == Variant::RAW)
            .ok_or_else(|| Error::InvalidArgument(format!("no raw price frame {}", cfg.price)))?;
        let effect = match find(&cfg.effect.channel, &cfg.effect.metric) {
            Some(f) => f,
            None if cfg.effect.metric == PRICE_DIFFERENCE_METRIC && cfg.effect.channel == cfg.price.channel => {
                price_difference(&price)
            }
            None => return Err(Error::InvalidArgument(format!("no effect frame {}", cfg.effect)).into()),
        };
        Ok(Self {
            grid,
            frames,
            price,
            effect,
        })
    }

    fn candidates(&self) -> Vec<SeriesFrame> {
        self.frames.iter().filter(|f| f.variant.is_sweepable()).cloned().collect()
    }
}

fn lag_range(cfg: &PipelineConfig, train_len: usize) -> Result<RangeInclusive<i64>, CliError> {
    let widest = cfg.lag_min.unsigned_abs().max(cfg.lag_max.unsigned_abs()) as usize;
    if widest + 2 >= train_len {
        return Err(CliError::Usage(format!(
            "lag range [{}, {}] too wide for a training span of {train_len} buckets",
            cfg.lag_min, cfg.lag_max
        )));
    }
    Ok(cfg.lag_min..=cfg.lag_max)
}

fn channel_weights(cfg: &PipelineConfig) -> Result<ChannelWeights, CliError> {
    match &cfg.weights {
        Some(p) => Ok(io::read_weights_csv(open(p)?, &name_of(p))?),
        None => Ok(ChannelWeights::uniform()),
    }
}

fn leak_flags(matrix: &CorrelationMatrix) -> Vec<String> {
    if !matrix.contains_lag(0) {
        return Vec::new();
    }
    matrix
        .at_lag(0)
        .into_iter()
        .filter_map(|(key, p)| p.filter(|p| p.abs() >= LEAK_THRESHOLD).map(|p| format!("{key} ({p:.6})")))
        .collect()
}

fn sweep_summary(summary: &mut String, inputs: &Inputs, train: &Range<usize>, matrix: &CorrelationMatrix) {
    let _ = writeln!(
        summary,
        "span: {} x {} from {}, training buckets {}..{}",
        inputs.grid.count(),
        inputs.grid.granularity(),
        inputs.grid.start(),
        train.start,
        train.end
    );
    let _ = writeln!(summary, "candidates: {}", matrix.keys().len());
    for flag in leak_flags(matrix) {
        let _ = writeln!(summary, "warning: lag-0 correlation near 1 for {flag}; is the effect among the causes?");
    }
}

/// Lag sweep of every sweepable frame against the effect.
pub fn run_correlate(cfg: &PipelineConfig) -> Outcome {
    let inputs = Inputs::load(cfg, None)?;
    let train = 0..cfg.train_len(inputs.grid.count());
    let lags = lag_range(cfg, train.len())?;
    let candidates = inputs.candidates();
    let sliced = candidates
        .iter()
        .map(|f| f.slice(train.clone()))
        .collect::<saci_core::Result<Vec<_>>>()?;
    let matrix = saci_core::causal::lag_sweep(&sliced, &inputs.effect.slice(train.clone())?, lags)?;
    let path = write_with(cfg, CORRELATIONS_FILE, |w| io::write_correlations_csv(w, &matrix))?;
    let mut summary = String::new();
    sweep_summary(&mut summary, &inputs, &train, &matrix);
    let _ = writeln!(summary, "correlations -> {}", path.display());
    Ok(summary)
}

fn in_group(frame: &SeriesFrame, members: &[String]) -> bool {
    members.iter().any(|m| match m.split_once(':') {
        Some((c, metric)) => frame.channel == c && frame.metric == metric,
        None => frame.channel == *m,
    })
}

/// Candidates at `lag` ranked by `W(c)·|P|`, as `P·W(c)` weights.
fn ranked_listing(
    matrix: &CorrelationMatrix,
    lag: i64,
    weights: &ChannelWeights,
    use_representability: bool,
) -> Vec<(FrameKey, f64)> {
    let mut rows: Vec<(FrameKey, f64)> = matrix
        .at_lag(lag)
        .into_iter()
        .filter_map(|(k, p)| {
            let w = if use_representability { weights.get(&k.channel) } else { 1.0 };
            p.map(|p| (k.clone(), p * w))
        })
        .collect();
    rows.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then_with(|| a.0.cmp(&b.0)));
    rows
}

/// Sweep, greedy assembly and the plot data for every configured group.
pub fn run_saci(cfg: &PipelineConfig) -> Outcome {
    let inputs = Inputs::load(cfg, None)?;
    let train = 0..cfg.train_len(inputs.grid.count());
    let lags = lag_range(cfg, train.len())?;
    let weights = channel_weights(cfg)?;
    let candidates = inputs.candidates();

    let mut summary = String::new();
    let mut group_files = Vec::new();
    for (name, members) in &cfg.groups {
        let subset: Vec<SeriesFrame> = candidates.iter().filter(|f| in_group(f, members)).cloned().collect();
        let sweep = if subset.is_empty() {
            lags.clone().map(|l| (l, None)).collect()
        } else {
            saci_sweep(&subset, &inputs.effect, lags.clone(), &weights, &cfg.policy, train.clone())?.1
        };
        let file = format!("sweep_{name}.csv");
        write_with(cfg, &file, |w| io::write_sweep_csv(w, &sweep))?;
        group_files.push((name, subset.len(), file));
    }

    let fit = fit_saci(
        &candidates,
        &inputs.effect,
        lags,
        &weights,
        &cfg.policy,
        train.clone(),
        cfg.lag,
    )?;
    write_with(cfg, CORRELATIONS_FILE, |w| io::write_correlations_csv(w, &fit.matrix))?;
    write_with(cfg, SWEEP_FILE, |w| io::write_sweep_csv(w, &fit.sweep))?;
    let ranked = ranked_listing(&fit.matrix, fit.model.lag, &weights, cfg.policy.use_representability);
    write_with(cfg, RANKED_FILE, |w| io::write_listing_csv(w, &ranked))?;
    let model_path = write_with(cfg, MODEL_FILE, |w| {
        w.write_all(fit.model.to_json()?.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    })?;

    sweep_summary(&mut summary, &inputs, &train, &fit.matrix);
    for (name, n, file) in group_files {
        let _ = writeln!(summary, "group {name}: {n} candidates -> {file}");
    }
    let _ = writeln!(
        summary,
        "lag: {} (training correlation {:.6}, {} terms)",
        fit.model.lag,
        fit.model.training_correlation,
        fit.model.terms.len()
    );
    for t in &fit.model.terms {
        let _ = writeln!(summary, "  {} weight {:.6} -> {:.6}", t.key(), t.weight, t.correlation);
    }
    let _ = writeln!(summary, "model -> {}", model_path.display());
    Ok(summary)
}

/// Scores the direction predictor and the LKP/FKP baselines on the
/// held-out span of a fitted model.
pub fn run_evaluate(cfg: &PipelineConfig) -> Outcome {
    let model_path = cfg.model_path();
    let text = fs::read_to_string(&model_path)
        .map_err(|e| CliError::Usage(format!("cannot read model {}: {e}", model_path.display())))?;
    let model = SaciModel::from_json(&text)?;
    let inputs = Inputs::load(cfg, Some(&model.grid))?;
    let test = model.train_span.end..model.grid.count();
    if test.is_empty() {
        return Err(Error::InvalidArgument("model leaves no held-out buckets".into()).into());
    }
    let pred = saci_direction_predictor(&model, &inputs.frames, &inputs.price)?;
    let report = baseline_report(Some(("saci", &pred)), &inputs.price, cfg.horizon, test.clone())?;
    let path = write_with(cfg, EVAL_FILE, |w| io::write_eval_csv(w, &report.rows))?;

    let mut summary = format!("held-out buckets {}..{}\n", test.start, test.end);
    for r in &report.rows {
        let _ = writeln!(
            summary,
            "{:<6} h={} n={} mape={:.6} da={:.4}",
            r.predictor, r.horizon, r.n, r.mape, r.da
        );
    }
    let _ = writeln!(summary, "report -> {}", path.display());
    Ok(summary)
}

/// Planted-causality fixture: candidate frames plus the raw close price, and
/// the ground-truth record.
pub fn run_synth(cfg: &PipelineConfig) -> Outcome {
    let data = generate_planted(&cfg.planted_spec())?;
    let mut frames = data.candidates();
    frames.push(data.close.clone());
    let frames_path = write_with(cfg, SYNTH_FRAMES_FILE, |w| io::write_frames_csv(w, &frames))?;
    let truth_path = write_with(cfg, TRUTH_FILE, |w| {
        serde_json::to_writer_pretty(&mut *w, &data.truth)?;
        w.write_all(b"\n")?;
        Ok(())
    })?;
    Ok(format!(
        "causes: {}\nnoise frames: {}\ntrue lag: {}\nframes -> {}\ntruth -> {}\n",
        data.causes.len(),
        data.noise.len(),
        data.truth.true_lag,
        frames_path.display(),
        truth_path.display()
    ))
}
