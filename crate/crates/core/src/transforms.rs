//! Stationarization transforms: differentiation (D), signed decimal log (L)
//! and max-abs normalization (N), applied left to right.

use std::ops::Range;

use log::warn;

use crate::error::{Error, Result};
use crate::series::SeriesFrame;

/// First difference. Bucket 0 is absent, and a difference is present only when
/// both neighbours are.
pub fn differentiate(x: &SeriesFrame) -> Result<SeriesFrame> {
    if x.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: x.len(),
        });
    }
    if x.variant.is_differentiated() || x.variant.is_logged() || x.variant.is_normalized() {
        return Err(Error::InvalidVariant(format!("D applied after {}", x.variant)));
    }
    let (vals, mask) = (x.values(), x.present());
    let mut values = vec![0.0; x.len()];
    let mut present = vec![false; x.len()];
    for t in 1..x.len() {
        if mask[t] && mask[t - 1] {
            values[t] = vals[t] - vals[t - 1];
            present[t] = true;
        }
    }
    Ok(x.with_data(x.variant.with_differentiated(), values, present))
}

/// `sign(v) * log10(1 + |v|)`, odd and order preserving.
pub fn signed_log_value(v: f64) -> f64 {
    let magnitude = v.abs().ln_1p() / std::f64::consts::LN_10;
    if v < 0.0 {
        -magnitude
    } else {
        magnitude
    }
}

/// Elementwise signed decimal log.
pub fn signed_log(x: &SeriesFrame) -> Result<SeriesFrame> {
    if x.variant.is_logged() || x.variant.is_normalized() {
        return Err(Error::InvalidVariant(format!("L applied after {}", x.variant)));
    }
    Ok(x.map_present(x.variant.with_logged(), signed_log_value))
}

/// Largest absolute present value within `range` (0 when nothing is present).
pub fn max_abs(x: &SeriesFrame, range: Range<usize>) -> f64 {
    x.values()[range.clone()]
        .iter()
        .zip(&x.present()[range])
        .filter(|(_, &p)| p)
        .fold(0.0_f64, |m, (v, _)| m.max(v.abs()))
}

/// Divides by the largest absolute present value. An all-zero frame is
/// returned unchanged (apart from its suffix).
pub fn max_abs_normalize(x: &SeriesFrame) -> SeriesFrame {
    let scale = max_abs(x, 0..x.len());
    scale_by(x, scale)
}

fn scale_by(x: &SeriesFrame, scale: f64) -> SeriesFrame {
    let variant = x.variant.with_normalized();
    if scale == 0.0 {
        x.map_present(variant, |v| v)
    } else {
        x.map_present(variant, |v| v / scale)
    }
}

/// Normalizes with the scale fitted on `fit` only, so that later buckets do
/// not leak into the constant. Out-of-sample values beyond `[-1, 1]` are
/// clamped.
pub fn max_abs_normalize_fitted(x: &SeriesFrame, fit: Range<usize>) -> SeriesFrame {
    let fit = fit.start.min(x.len())..fit.end.min(x.len());
    let scale = max_abs(x, fit);
    let mut out = scale_by(x, scale);
    let clipped = out.values().iter().filter(|v| v.abs() > 1.0).count();
    if clipped > 0 {
        warn!(
            "{}: {clipped} out-of-sample values exceed the fitted range and were clamped",
            out.key()
        );
        let values = out.values().iter().map(|v| v.clamp(-1.0, 1.0)).collect();
        out = out.with_data(out.variant, values, out.present().to_vec());
    }
    out
}

/// The four sweep variants N, LN, DN and DLN of a raw metric.
pub fn expand_variants(x: &SeriesFrame) -> Result<[SeriesFrame; 4]> {
    expand_variants_fitted(x, 0..x.len())
}

/// [`expand_variants`] with normalization constants fitted on `fit`.
pub fn expand_variants_fitted(x: &SeriesFrame, fit: Range<usize>) -> Result<[SeriesFrame; 4]> {
    if x.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: x.len(),
        });
    }
    let norm = |f: &SeriesFrame| max_abs_normalize_fitted(f, fit.clone());
    let diff = differentiate(x)?;
    Ok([
        norm(x),
        norm(&signed_log(x)?),
        norm(&diff),
        norm(&signed_log(&diff)?),
    ])
}
