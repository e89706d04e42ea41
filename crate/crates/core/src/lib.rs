//! Causal analysis of heterogeneous time series by preceding (lagged)
//! correlation.
//!
//! Market trades and order book snapshots ([`market`]) and lexicon-scored
//! media posts ([`lexicon`]) become normalized metric frames ([`series`],
//! [`transforms`]). A lag sweep measures how well each frame precedes the
//! price difference, and a synthetic additive cause indicator is assembled
//! greedily from the best candidates ([`causal`]). Baseline predictors and
//! error metrics live in [`evaluation`]; [`synth`] plants known causal
//! structure for end-to-end checks.

pub mod causal;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod lexicon;
pub mod market;
pub mod series;
pub mod synth;
pub mod transforms;

pub use error::{Error, Result};
pub use series::{EffectSeries, FrameKey, Granularity, SeriesFrame, TimeGrid, Variant};
