//! Line-oriented `key = value` configuration with command-line overrides.
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths in a
//! config file resolve against the file's directory; paths given with
//! `--set` resolve against the working directory. See `docs/config.md` for
//! the key reference.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use saci_core::causal::AssemblyPolicy;
use saci_core::synth::PlantedSpec;
use saci_core::Granularity;

use crate::CliError;

const KEYS: &[&str] = &[
    "granularity",
    "start",
    "end",
    "trades",
    "lob",
    "posts",
    "lexicons",
    "frames",
    "weights",
    "model",
    "out",
    "market_channel",
    "price",
    "effect",
    "lag_min",
    "lag_max",
    "lag",
    "train_fraction",
    "min_abs_p",
    "min_gain",
    "stop_on_first_failure",
    "use_representability",
    "sentiment",
    "log_scaling",
    "horizon",
    "seed",
    "synth.n",
    "synth.true_lag",
    "synth.weights",
    "synth.noise_sigma",
    "synth.noise_frames",
];

const PATH_KEYS: &[&str] = &["trades", "lob", "posts", "lexicons", "frames", "weights", "model", "out"];

/// A `channel:metric` reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricRef {
    pub channel: String,
    pub metric: String,
}

impl FromStr for MetricRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            Some((c, m)) if !c.is_empty() && !m.is_empty() && !m.contains(':') => Ok(Self {
                channel: c.to_string(),
                metric: m.to_string(),
            }),
            _ => Err(format!("expected channel:metric, got {s:?}")),
        }
    }
}

impl Display for MetricRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.channel, self.metric)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub granularity: Granularity,
    pub start: Option<i64>,
    pub end: Option<i64>,
    pub trades: Option<PathBuf>,
    pub lob: Option<PathBuf>,
    pub posts: Option<PathBuf>,
    pub lexicons: Option<PathBuf>,
    pub frames: Vec<PathBuf>,
    pub weights: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: PathBuf,
    pub market_channel: String,
    pub price: MetricRef,
    pub effect: MetricRef,
    pub lag_min: i64,
    pub lag_max: i64,
    pub lag: Option<i64>,
    pub train_fraction: f64,
    pub policy: AssemblyPolicy,
    pub sentiment: bool,
    pub log_scaling: bool,
    pub horizon: usize,
    pub seed: u64,
    pub synth_n: usize,
    pub synth_true_lag: usize,
    pub synth_weights: Vec<f64>,
    pub synth_noise_sigma: f64,
    pub synth_noise_frames: usize,
    /// Named candidate subsets; members are channel names or
    /// `channel:metric` references.
    pub groups: BTreeMap<String, Vec<String>>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            granularity: Granularity::Day,
            start: None,
            end: None,
            trades: None,
            lob: None,
            posts: None,
            lexicons: None,
            frames: Vec::new(),
            weights: None,
            model: None,
            out: PathBuf::from("out"),
            market_channel: "market".into(),
            price: MetricRef {
                channel: "market".into(),
                metric: "trade_close".into(),
            },
            effect: MetricRef {
                channel: "market".into(),
                metric: "price_difference".into(),
            },
            lag_min: -10,
            lag_max: 10,
            lag: None,
            train_fraction: 0.75,
            policy: AssemblyPolicy::default(),
            sentiment: true,
            log_scaling: true,
            horizon: 1,
            seed: 42,
            synth_n: 500,
            synth_true_lag: 3,
            synth_weights: vec![0.8],
            synth_noise_sigma: 0.6,
            synth_noise_frames: 20,
            groups: BTreeMap::new(),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T, CliError>
where
    T::Err: Display,
{
    raw.parse()
        .map_err(|e| usage(format!("bad value for {key}: {raw:?} ({e})")))
}

fn parse_bool(key: &str, raw: &str) -> Result<bool, CliError> {
    match raw {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(usage(format!("bad value for {key}: {raw:?} (expected true or false)"))),
    }
}

fn optional<T: FromStr>(key: &str, raw: &str) -> Result<Option<T>, CliError>
where
    T::Err: Display,
{
    if raw.is_empty() {
        Ok(None)
    } else {
        parse_value(key, raw).map(Some)
    }
}

fn list(raw: &str) -> Vec<&str> {
    raw.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
}

/// Raw entries with the directory their relative paths resolve against.
#[derive(Debug, Default)]
pub struct ConfigSource {
    entries: BTreeMap<String, (String, PathBuf)>,
}

impl ConfigSource {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut source = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("{}:{}: expected key = value", path.display(), i + 1)))?;
            let key = key.trim();
            if source.entries.contains_key(key) {
                return Err(usage(format!("{}:{}: duplicate key {key}", path.display(), i + 1)));
            }
            source.insert(key, value.trim(), &base)?;
        }
        Ok(source)
    }

    /// Applies a `key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects key=value, got {assignment:?}")))?;
        self.insert(key.trim(), value.trim(), Path::new(""))
    }

    fn insert(&mut self, key: &str, value: &str, base: &Path) -> Result<(), CliError> {
        let known = KEYS.contains(&key) || key.strip_prefix("group.").is_some_and(valid_group_name);
        if !known {
            return Err(usage(format!("unknown config key {key:?}")));
        }
        self.entries.insert(key.to_string(), (value.to_string(), base.to_path_buf()));
        Ok(())
    }

    pub fn resolve(&self) -> Result<PipelineConfig, CliError> {
        let mut cfg = PipelineConfig::default();
        let mut policy = AssemblyPolicy::default();
        for (key, (raw, base)) in &self.entries {
            let raw = raw.as_str();
            let path = |p: &str| base.join(p);
            if PATH_KEYS.contains(&key.as_str()) && key != "frames" {
                let p = (!raw.is_empty()).then(|| path(raw));
                match key.as_str() {
                    "trades" => cfg.trades = p,
                    "lob" => cfg.lob = p,
                    "posts" => cfg.posts = p,
                    "lexicons" => cfg.lexicons = p,
                    "weights" => cfg.weights = p,
                    "model" => cfg.model = p,
                    "out" => cfg.out = p.ok_or_else(|| usage("out must not be empty"))?,
                    _ => unreachable!(),
                }
                continue;
            }
            match key.as_str() {
                "frames" => cfg.frames = list(raw).into_iter().map(path).collect(),
                "granularity" => cfg.granularity = parse_value(key, raw)?,
                "start" => cfg.start = optional(key, raw)?,
                "end" => cfg.end = optional(key, raw)?,
                "market_channel" => cfg.market_channel = raw.to_string(),
                "price" => cfg.price = parse_value(key, raw)?,
                "effect" => cfg.effect = parse_value(key, raw)?,
                "lag_min" => cfg.lag_min = parse_value(key, raw)?,
                "lag_max" => cfg.lag_max = parse_value(key, raw)?,
                "lag" => cfg.lag = optional(key, raw)?,
                "train_fraction" => cfg.train_fraction = parse_value(key, raw)?,
                "min_abs_p" => policy.min_abs_p = parse_value(key, raw)?,
                "min_gain" => policy.min_gain = parse_value(key, raw)?,
                "stop_on_first_failure" => policy.stop_on_first_failure = parse_bool(key, raw)?,
                "use_representability" => policy.use_representability = parse_bool(key, raw)?,
                "sentiment" => cfg.sentiment = parse_bool(key, raw)?,
                "log_scaling" => cfg.log_scaling = parse_bool(key, raw)?,
                "horizon" => cfg.horizon = parse_value(key, raw)?,
                "seed" => cfg.seed = parse_value(key, raw)?,
                "synth.n" => cfg.synth_n = parse_value(key, raw)?,
                "synth.true_lag" => cfg.synth_true_lag = parse_value(key, raw)?,
                "synth.weights" => {
                    cfg.synth_weights = list(raw)
                        .into_iter()
                        .map(|w| parse_value(key, w))
                        .collect::<Result<_, _>>()?
                }
                "synth.noise_sigma" => cfg.synth_noise_sigma = parse_value(key, raw)?,
                "synth.noise_frames" => cfg.synth_noise_frames = parse_value(key, raw)?,
                group => {
                    let name = group.strip_prefix("group.").expect("validated on insert");
                    let members: Vec<String> = list(raw).into_iter().map(String::from).collect();
                    if members.is_empty() {
                        return Err(usage(format!("{key} lists no members")));
                    }
                    cfg.groups.insert(name.to_string(), members);
                }
            }
        }
        cfg.policy = policy;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn valid_group_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.lag_min > self.lag_max {
            return Err(usage(format!("lag_min {} exceeds lag_max {}", self.lag_min, self.lag_max)));
        }
        if let Some(l) = self.lag {
            if !(self.lag_min..=self.lag_max).contains(&l) {
                return Err(usage(format!("lag {l} outside [{}, {}]", self.lag_min, self.lag_max)));
            }
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(usage(format!("train_fraction {} must lie in (0, 1)", self.train_fraction)));
        }
        if let (Some(s), Some(e)) = (self.start, self.end) {
            if e <= s {
                return Err(usage(format!("end {e} must be after start {s}")));
            }
        }
        if self.horizon == 0 {
            return Err(usage("horizon must be at least 1"));
        }
        if !(self.policy.min_abs_p.is_finite() && self.policy.min_abs_p >= 0.0) {
            return Err(usage("min_abs_p must be a nonnegative number"));
        }
        if !(self.policy.min_gain.is_finite() && self.policy.min_gain >= 0.0) {
            return Err(usage("min_gain must be a nonnegative number"));
        }
        if self.market_channel.is_empty() {
            return Err(usage("market_channel must not be empty"));
        }
        Ok(())
    }

    /// Number of leading buckets used for fitting out of `count`.
    pub fn train_len(&self, count: usize) -> usize {
        ((count as f64 * self.train_fraction).floor() as usize).clamp(1, count.max(1))
    }

    pub fn planted_spec(&self) -> PlantedSpec {
        PlantedSpec {
            n: self.synth_n,
            true_lag: self.synth_true_lag,
            cause_weights: self.synth_weights.clone(),
            noise_sigma: self.synth_noise_sigma,
            n_noise_frames: self.synth_noise_frames,
            seed: self.seed,
        }
    }

    pub fn model_path(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.out.join("model.json"))
    }
}
