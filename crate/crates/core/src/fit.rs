//! Least-squares decay-order fits in log–log space.
//!
//! Two models, both with two free parameters so residuals are comparable:
//! * power: `err = A (1+t)^p`
//! * log-corrected: `err = A (1+t)^p (1 + log(1+t))`

use thiserror::Error;

/// Errors below this are treated as exact (no decay to fit).
pub const EXACT_THRESHOLD: f64 = 1e-12;
pub const MIN_SAMPLES: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {MIN_SAMPLES} samples, got {0}")]
    TooFewSamples(usize),
    #[error("samples span a factor {0:.3} in t, need at least 10")]
    NarrowSpan(f64),
    #[error("time and error arrays differ in length")]
    LengthMismatch,
    #[error("non-positive or non-finite error value {0}")]
    BadValue(f64),
    #[error("empty fit window [{0}, {1}]")]
    EmptyWindow(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFit {
    pub amplitude: f64,
    pub exponent: f64,
    /// RMS residual of `log err`.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayModel {
    Power,
    LogCorrected,
}

impl DecayModel {
    fn shape(self, t: f64) -> f64 {
        match self {
            DecayModel::Power => 1.0,
            DecayModel::LogCorrected => 1.0 + (1.0 + t).ln(),
        }
    }
}

/// Fit `log err - log shape(t) = log A + p log(1+t)`.
pub fn fit_model(times: &[f64], errs: &[f64], model: DecayModel) -> Result<PowerFit, FitError> {
    if times.len() != errs.len() {
        return Err(FitError::LengthMismatch);
    }
    if let Some(&bad) = errs.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
        return Err(FitError::BadValue(bad));
    }
    let xs: Vec<f64> = times.iter().map(|t| (1.0 + t).ln()).collect();
    let ys: Vec<f64> = times.iter().zip(errs).map(|(t, e)| e.ln() - model.shape(*t).ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let ss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - exponent * x).powi(2)).sum();
    Ok(PowerFit { amplitude: intercept.exp(), exponent, residual: (ss / n).sqrt() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// Exponent of the selected model; `-inf` for an exact curve.
    pub exponent: f64,
    pub log_model: bool,
    pub residual: f64,
    pub window: (f64, f64),
    pub prediction: f64,
    pub abs_deviation: f64,
    pub power: Option<PowerFit>,
    pub log: Option<PowerFit>,
    pub exact: bool,
}

impl DecayFit {
    fn exact(window: (f64, f64), prediction: f64) -> Self {
        DecayFit {
            exponent: f64::NEG_INFINITY,
            log_model: false,
            residual: 0.0,
            window,
            prediction,
            abs_deviation: 0.0,
            power: None,
            log: None,
            exact: true,
        }
    }
}

/// Fit the curve restricted to `window` (default `[t_max/10, t_max]`).
///
/// With `consider_log`, the log-corrected model is fitted too and selected when its
/// residual is strictly smaller.
pub fn fit_decay(
    times: &[f64],
    errs: &[f64],
    prediction: f64,
    consider_log: bool,
    window: Option<(f64, f64)>,
) -> Result<DecayFit, FitError> {
    if times.len() != errs.len() {
        return Err(FitError::LengthMismatch);
    }
    let t_max = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = window.unwrap_or((t_max / 10.0, t_max));
    if !(lo < hi) {
        return Err(FitError::EmptyWindow(lo, hi));
    }
    let slack = 1e-12 * hi.abs().max(1.0);
    let (ts, es): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(errs)
        .filter(|(t, _)| **t >= lo - slack && **t <= hi + slack)
        .map(|(t, e)| (*t, *e))
        .unzip();
    if ts.len() < MIN_SAMPLES {
        return Err(FitError::TooFewSamples(ts.len()));
    }
    if es.iter().all(|e| e.abs() < EXACT_THRESHOLD) {
        return Ok(DecayFit::exact((lo, hi), prediction));
    }
    // the window must span a decade in t, and the samples most of it (in log t)
    let t_first = ts.iter().copied().fold(f64::INFINITY, f64::min);
    let t_last = ts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let covered = if t_first > 0.0 && lo > 0.0 { (t_last / t_first).ln() / span.ln() } else { 1.0 };
    if span < 10.0 * (1.0 - 1e-9) || covered < 0.8 {
        return Err(FitError::NarrowSpan(if t_first > 0.0 { t_last / t_first } else { span }));
    }
    let power = fit_model(&ts, &es, DecayModel::Power)?;
    let log = if consider_log { Some(fit_model(&ts, &es, DecayModel::LogCorrected)?) } else { None };
    let chosen = match log {
        Some(l) if l.residual < power.residual => l,
        _ => power,
    };
    let log_model = log.is_some_and(|l| l.residual < power.residual);
    Ok(DecayFit {
        exponent: chosen.exponent,
        log_model,
        residual: chosen.residual,
        window: (lo, hi),
        prediction,
        abs_deviation: (chosen.exponent - prediction).abs(),
        power: Some(power),
        log,
        exact: false,
    })
}

/// `count` times log-spaced in `1+t` over `[t_min, t_max]`.
pub fn log_spaced_times(t_min: f64, t_max: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2 && t_min >= 0.0 && t_max > t_min);
    let (a, b) = ((1.0 + t_min).ln(), (1.0 + t_max).ln());
    let mut ts: Vec<f64> = (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp() - 1.0).collect();
    ts[0] = t_min;
    ts[count - 1] = t_max;
    ts
}
