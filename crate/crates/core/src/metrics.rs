//! Oscillation and convergence measures over trailing windows of a series.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OscillationMetric<T> {
    pub window: usize,
    /// max - min over the window.
    pub amplitude: T,
    /// `amplitude > threshold`.
    pub flag: bool,
}

fn trailing<T>(series: &[T], window: usize) -> Result<&[T]> {
    if window < 2 {
        return Err(Error::InvalidArgument(format!(
            "window must be at least 2, got {window}"
        )));
    }
    if series.len() < window {
        return Err(Error::ShortSeries {
            len: series.len(),
            window,
        });
    }
    Ok(&series[series.len() - window..])
}

/// max - min of a non-empty slice; 0 for an empty one.
pub fn amplitude<T: Scalar>(values: &[T]) -> T {
    let Some(&first) = values.first() else {
        return T::zero();
    };
    let (lo, hi) = values
        .iter()
        .fold((first, first), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo
}

pub fn mean<T: Scalar>(values: &[T]) -> T {
    if values.is_empty() {
        return T::zero();
    }
    values.iter().copied().sum::<T>() / T::of(values.len() as f64)
}

pub fn detect_oscillation<T: Scalar>(series: &[T], window: usize, threshold: T) -> Result<OscillationMetric<T>> {
    let w = trailing(series, window)?;
    let amp = amplitude(w);
    Ok(OscillationMetric {
        window,
        amplitude: amp,
        flag: amp > threshold,
    })
}

/// True when the trailing window's amplitude is below `tol`. A flat window
/// counts as converged even for `tol = 0`.
pub fn converged<T: Scalar>(series: &[T], tol: T, window: usize) -> Result<bool> {
    let amp = amplitude(trailing(series, window)?);
    Ok(amp == T::zero() || amp < tol)
}

/// [`detect_oscillation`] with the threshold given as a fraction of the
/// window mean.
pub fn detect_oscillation_relative<T: Scalar>(
    series: &[T],
    window: usize,
    fraction: T,
) -> Result<OscillationMetric<T>> {
    let w = trailing(series, window)?;
    detect_oscillation(w, window, fraction * mean(w).abs())
}

/// [`converged`] with the tolerance given as a fraction of the window mean.
pub fn converged_relative<T: Scalar>(series: &[T], fraction: T, window: usize) -> Result<bool> {
    let w = trailing(series, window)?;
    converged(w, fraction * mean(w).abs(), window)
}
