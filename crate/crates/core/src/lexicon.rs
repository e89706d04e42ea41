//! Interpretable n-gram lexicon scoring of media posts.
//!
//! Matching follows an order-priority rule: longer n-grams win, and any match
//! whose token span lies strictly inside an accepted longer match is
//! discarded. With a positive tetragram `not a bad thing` and negative entries
//! `bad thing` and `bad`, the text "Not a BAD thing!" scores one positive hit
//! and no negative ones.
//!
//! Per post the sentiment metrics are
//!
//! * `pos = min(CP / T, 1)`, `neg = -min(CN / T, 1)`
//! * `sen = (CP - CN) / (CP + CN)` (0 when both masses are 0)
//! * `con = sqrt(pos * |neg|)`
//!
//! where `CP`, `CN` are the positive and negative hit masses (optionally
//! `log10(1 + mass)`) and `T` the token count. Every other category yields
//! `mass / T` clipped to `[0, 1]`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{SeriesFrame, TimeGrid, Variant};
use crate::transforms::max_abs_normalize;

pub const POSITIVE: &str = "positive";
pub const NEGATIVE: &str = "negative";
pub const MAX_NGRAM: usize = 8;

pub const SEN: &str = "sen";
pub const POS: &str = "pos";
pub const NEG: &str = "neg";
pub const CON: &str = "con";
pub const WORD_COUNT: &str = "word_count";
pub const POST_COUNT: &str = "post_count";

const RESERVED: [&str; 6] = [SEN, POS, NEG, CON, WORD_COUNT, POST_COUNT];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub t: i64,
    pub channel: String,
    pub text: String,
}

/// Lowercases and splits on anything that is not a letter, digit or an
/// in-word apostrophe.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut flush = |current: &mut String| {
        let trimmed = current.trim_end_matches('\'');
        if !trimmed.is_empty() {
            tokens.push(trimmed.to_string());
        }
        current.clear();
    };
    for c in text.chars() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if (c == '\'' || c == '\u{2019}') && !current.is_empty() {
            current.push('\'');
        } else {
            flush(&mut current);
        }
    }
    flush(&mut current);
    tokens
}

/// N-grams of one category with their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    category: String,
    entries: BTreeMap<Vec<String>, f64>,
}

impl Lexicon {
    pub fn new(category: impl Into<String>) -> Result<Self> {
        let category = category.into();
        if category.is_empty() {
            return Err(Error::InvalidLexicon {
                category,
                reason: "empty category name".into(),
            });
        }
        if RESERVED.contains(&category.as_str()) {
            return Err(Error::InvalidLexicon {
                reason: "category name collides with a built-in metric".into(),
                category,
            });
        }
        Ok(Self {
            category,
            entries: BTreeMap::new(),
        })
    }

    pub fn category(&self) -> &str {
        &self.category
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&[String], f64)> {
        self.entries.iter().map(|(k, &w)| (k.as_slice(), w))
    }

    /// Adds an n-gram. The phrase is tokenized, so case and punctuation do not
    /// matter.
    pub fn insert(&mut self, phrase: &str, weight: f64) -> Result<()> {
        let tokens = tokenize(phrase);
        let invalid = |reason: String| Error::InvalidLexicon {
            category: self.category.clone(),
            reason,
        };
        if tokens.is_empty() || tokens.len() > MAX_NGRAM {
            return Err(invalid(format!(
                "n-gram {phrase:?} must have 1..={MAX_NGRAM} tokens"
            )));
        }
        if !(weight.is_finite() && weight > 0.0) {
            return Err(invalid(format!("weight {weight} of {phrase:?} must be positive")));
        }
        if self.entries.contains_key(&tokens) {
            return Err(invalid(format!("duplicate n-gram {phrase:?}")));
        }
        self.entries.insert(tokens, weight);
        Ok(())
    }

    /// Parses the lexicon file format: one entry per line, tokens separated by
    /// spaces, optional `<TAB>weight`. Blank lines and `#` comments are skipped.
    pub fn parse(category: &str, text: &str) -> Result<Self> {
        let mut lexicon = Lexicon::new(category)?;
        for (i, line) in text.lines().enumerate() {
            let line_no = i as u64 + 1;
            let trimmed = line.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
                continue;
            }
            let (phrase, weight) = match trimmed.split_once('\t') {
                Some((p, w)) => {
                    let w: f64 = w
                        .trim()
                        .parse()
                        .map_err(|_| Error::parse(category, line_no, format!("bad weight {w:?}")))?;
                    (p, w)
                }
                None => (trimmed, 1.0),
            };
            lexicon
                .insert(phrase, weight)
                .map_err(|e| Error::parse(category, line_no, e.to_string()))?;
        }
        Ok(lexicon)
    }

    /// Loads a lexicon file; the category is the file name without extension.
    pub fn from_file(path: &Path) -> Result<Self> {
        let category = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::InvalidArgument(format!("bad lexicon path {}", path.display())))?;
        let text = fs::read_to_string(path)?;
        Self::parse(category, &text)
    }
}

/// Immutable, indexed collection of lexicons used for matching.
#[derive(Debug, Clone)]
pub struct LexiconSet {
    categories: Vec<String>,
    index: HashMap<Vec<String>, Vec<(usize, f64)>>,
    max_n: usize,
}

impl LexiconSet {
    pub fn new(mut lexicons: Vec<Lexicon>) -> Result<Self> {
        lexicons.sort_by(|a, b| a.category.cmp(&b.category));
        if let Some(w) = lexicons.windows(2).find(|w| w[0].category == w[1].category) {
            return Err(Error::InvalidLexicon {
                category: w[0].category.clone(),
                reason: "category defined twice".into(),
            });
        }
        let mut index: HashMap<Vec<String>, Vec<(usize, f64)>> = HashMap::new();
        let mut max_n = 0;
        for (cat, lex) in lexicons.iter().enumerate() {
            for (ngram, &weight) in &lex.entries {
                max_n = max_n.max(ngram.len());
                index.entry(ngram.clone()).or_default().push((cat, weight));
            }
        }
        Ok(Self {
            categories: lexicons.into_iter().map(|l| l.category).collect(),
            index,
            max_n,
        })
    }

    /// Loads every `*.txt` file in `dir`, in file-name order.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut paths: Vec<_> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt"))
            .collect();
        paths.sort();
        let lexicons = paths.iter().map(|p| Lexicon::from_file(p)).collect::<Result<Vec<_>>>()?;
        Self::new(lexicons)
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn has_category(&self, name: &str) -> bool {
        self.categories.iter().any(|c| c == name)
    }
}

/// An accepted lexicon hit covering `tokens[start..start + len]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramMatch {
    pub category: String,
    pub start: usize,
    pub len: usize,
    pub weight: f64,
}

impl NgramMatch {
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    /// True when `self` lies inside `other` and is shorter.
    pub fn strictly_inside(&self, other: &NgramMatch) -> bool {
        self.len < other.len && other.start <= self.start && self.end() <= other.end()
    }
}

/// All accepted matches per category, in acceptance order (longest first,
/// then leftmost). Categories without hits are omitted.
pub fn match_ngrams(tokens: &[String], lexicons: &LexiconSet) -> BTreeMap<String, Vec<NgramMatch>> {
    let mut candidates: Vec<(usize, usize, usize, f64)> = Vec::new();
    for start in 0..tokens.len() {
        let longest = lexicons.max_n.min(tokens.len() - start);
        for len in 1..=longest {
            if let Some(hits) = lexicons.index.get(&tokens[start..start + len]) {
                candidates.extend(hits.iter().map(|&(cat, w)| (len, start, cat, w)));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut accepted: Vec<NgramMatch> = Vec::new();
    for (len, start, cat, weight) in candidates {
        let m = NgramMatch {
            category: lexicons.categories[cat].clone(),
            start,
            len,
            weight,
        };
        if !accepted.iter().any(|a| m.strictly_inside(a)) {
            accepted.push(m);
        }
    }

    let mut out: BTreeMap<String, Vec<NgramMatch>> = BTreeMap::new();
    for m in accepted {
        out.entry(m.category.clone()).or_default().push(m);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoringOptions {
    /// Replace each category mass by `log10(1 + mass)`.
    pub log_scaling: bool,
    /// Emit sen/pos/neg/con; requires `positive` and `negative` lexicons.
    pub sentiment: bool,
}

impl Default for ScoringOptions {
    fn default() -> Self {
        Self {
            log_scaling: true,
            sentiment: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostScores {
    /// Accepted-match weight sums per category, before log scaling.
    pub masses: BTreeMap<String, f64>,
    pub sentiment: Option<Sentiment>,
    /// Category metrics `mass / T` clipped to `[0, 1]`, excluding the two
    /// sentiment bases when sentiment is on.
    pub categories: BTreeMap<String, f64>,
    pub token_count: usize,
    /// Tokens containing at least one letter.
    pub word_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sentiment {
    pub sen: f64,
    pub pos: f64,
    pub neg: f64,
    pub con: f64,
}

impl Sentiment {
    /// Derives the four metrics from positive/negative masses and token count.
    pub fn from_masses(cp: f64, cn: f64, tokens: usize) -> Self {
        let t = tokens.max(1) as f64;
        let pos = (cp / t).min(1.0);
        let neg = if cn > 0.0 { -(cn / t).min(1.0) } else { 0.0 };
        let sen = if cp + cn > 0.0 { (cp - cn) / (cp + cn) } else { 0.0 };
        Sentiment {
            sen,
            pos,
            neg,
            con: (pos * neg.abs()).sqrt(),
        }
    }
}

impl PostScores {
    /// Post-level metrics in emission order.
    pub fn metrics(&self) -> Vec<(&str, f64)> {
        let mut out = Vec::new();
        if let Some(s) = &self.sentiment {
            out.extend([(SEN, s.sen), (POS, s.pos), (NEG, s.neg), (CON, s.con)]);
        }
        out.extend(self.categories.iter().map(|(k, &v)| (k.as_str(), v)));
        out.push((WORD_COUNT, self.word_count as f64));
        out.push((POST_COUNT, 1.0));
        out
    }
}

/// Scores one post against the lexicons.
pub fn score_post(post: &Post, lexicons: &LexiconSet, options: ScoringOptions) -> Result<PostScores> {
    score_text(&post.text, lexicons, options)
}

pub fn score_text(text: &str, lexicons: &LexiconSet, options: ScoringOptions) -> Result<PostScores> {
    if options.sentiment {
        for base in [POSITIVE, NEGATIVE] {
            if !lexicons.has_category(base) {
                return Err(Error::MissingCategory(base.to_string()));
            }
        }
    }
    let tokens = tokenize(text);
    let matches = match_ngrams(&tokens, lexicons);
    let masses: BTreeMap<String, f64> = lexicons
        .categories
        .iter()
        .map(|c| {
            let mass = matches.get(c).map_or(0.0, |ms| ms.iter().map(|m| m.weight).sum());
            (c.clone(), mass)
        })
        .collect();
    let scaled = |c: &str| {
        let m = masses.get(c).copied().unwrap_or(0.0);
        if options.log_scaling {
            m.ln_1p() / std::f64::consts::LN_10
        } else {
            m
        }
    };
    let t = tokens.len().max(1) as f64;
    let sentiment = options
        .sentiment
        .then(|| Sentiment::from_masses(scaled(POSITIVE), scaled(NEGATIVE), tokens.len()));
    let categories = lexicons
        .categories
        .iter()
        .filter(|c| !(options.sentiment && (c.as_str() == POSITIVE || c.as_str() == NEGATIVE)))
        .map(|c| (c.clone(), (scaled(c) / t).clamp(0.0, 1.0)))
        .collect();
    Ok(PostScores {
        masses,
        sentiment,
        categories,
        token_count: tokens.len(),
        word_count: tokens.iter().filter(|t| t.chars().any(char::is_alphabetic)).count(),
    })
}

/// A post's scores with its channel and timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPost {
    pub t: i64,
    pub channel: String,
    pub scores: PostScores,
}

fn is_count_metric(name: &str) -> bool {
    name == WORD_COUNT || name == POST_COUNT
}

/// Per-channel bucket aggregates, not normalized. Score metrics are averaged
/// over the bucket's posts; `word_count` and `post_count` are summed. Buckets
/// without posts are absent. Channels whose posts all fall outside the grid
/// still get (all-absent) frames.
pub fn aggregate_channel_means(scored: &[ScoredPost], grid: &TimeGrid) -> Result<Vec<SeriesFrame>> {
    // channel -> metric order, per-metric (sum, n) per bucket
    type Buckets = Vec<(f64, usize)>;
    let mut channels: BTreeMap<&str, (Vec<String>, HashMap<String, Buckets>)> = BTreeMap::new();
    for post in scored {
        let (order, sums) = channels.entry(post.channel.as_str()).or_default();
        let bucket = grid.bucket_of(post.t);
        for (name, value) in post.scores.metrics() {
            let slots = sums.entry(name.to_string()).or_insert_with(|| {
                order.push(name.to_string());
                vec![(0.0, 0); grid.count()]
            });
            if let Some(b) = bucket {
                slots[b].0 += value;
                slots[b].1 += 1;
            }
        }
    }
    let mut frames = Vec::new();
    for (channel, (order, sums)) in channels {
        for metric in order {
            let values = sums[&metric]
                .iter()
                .map(|&(sum, n)| match n {
                    0 => None,
                    _ if is_count_metric(&metric) => Some(sum),
                    _ => Some(sum / n as f64),
                })
                .collect();
            frames.push(SeriesFrame::from_options(channel, metric, Variant::RAW, *grid, values)?);
        }
    }
    Ok(frames)
}

/// [`aggregate_channel_means`] followed by max-abs normalization of each frame.
pub fn aggregate_channel(scored: &[ScoredPost], grid: &TimeGrid) -> Result<Vec<SeriesFrame>> {
    Ok(aggregate_channel_means(scored, grid)?
        .iter()
        .map(max_abs_normalize)
        .collect())
}

/// Fraction of buckets in which any of the channel's frames is present.
pub fn representability(frames: &[SeriesFrame]) -> f64 {
    let Some(first) = frames.first() else {
        return 0.0;
    };
    let count = first.grid().count();
    let covered = (0..count)
        .filter(|&i| frames.iter().any(|f| f.present().get(i).copied().unwrap_or(false)))
        .count();
    covered as f64 / count as f64
}
