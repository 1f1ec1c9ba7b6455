//! The seven technical indicators and the 12-value daily feature row.
//!
//! Day indices are 0-based positions into a date-ascending bar slice. Every
//! window of length `n` ending at day `t` covers days `t+1-n ..= t`.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data::{CryptoSeries, PriceBar, PRICE_FIELDS};

/// Number of indicator columns in a feature row.
pub const INDICATOR_COUNT: usize = 7;

pub const INDICATOR_NAMES: [&str; INDICATOR_COUNT] = [
    "stoch_k",
    "stoch_d",
    "momentum",
    "williams_r",
    "ad_osc",
    "disparity7",
    "roc",
];

/// Neutral value returned by %K and Williams %R over a zero-width range.
pub const FLAT_RANGE_FALLBACK: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IndicatorError {
    #[error("{indicator} needs {needed} days of history, day index {index} has {available}")]
    InsufficientHistory {
        indicator: &'static str,
        needed: usize,
        index: usize,
        available: usize,
    },
    #[error("zero moving average at day index {0}")]
    ZeroMovingAverage(usize),
    #[error("zero reference close at day index {0}")]
    ZeroReferencePrice(usize),
    #[error("series of {len} bars is not longer than the {warmup}-day warm-up")]
    SeriesTooShort { len: usize, warmup: usize },
    #[error("indicator window must be at least 1")]
    EmptyWindow,
}

/// Lookback lengths, in days.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndicatorConfig {
    pub n_stoch: usize,
    pub n_stoch_d: usize,
    pub n_momentum: usize,
    pub n_roc: usize,
    pub n_disparity: usize,
}

impl Default for IndicatorConfig {
    fn default() -> Self {
        Self {
            n_stoch: 14,
            n_stoch_d: 3,
            n_momentum: 10,
            n_roc: 12,
            n_disparity: 7,
        }
    }
}

impl IndicatorConfig {
    /// Leading days dropped before the first feature row.
    pub fn warmup(&self) -> usize {
        (self.n_stoch + self.n_stoch_d - 1)
            .max(self.n_momentum + 1)
            .max(self.n_roc + 1)
            .max(self.n_disparity)
    }

    fn validate(&self) -> Result<(), IndicatorError> {
        let all = [self.n_stoch, self.n_stoch_d, self.n_momentum, self.n_roc, self.n_disparity];
        if all.contains(&0) {
            return Err(IndicatorError::EmptyWindow);
        }
        Ok(())
    }
}

/// One day's five price fields plus the seven indicators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
    pub stoch_k: f64,
    pub stoch_d: f64,
    pub momentum: f64,
    pub williams_r: f64,
    pub ad_osc: f64,
    pub disparity7: f64,
    pub roc: f64,
}

impl FeatureRow {
    pub fn price_fields(&self) -> [f64; PRICE_FIELDS] {
        [self.open, self.high, self.low, self.close, self.volume]
    }

    pub fn indicator_values(&self) -> [f64; INDICATOR_COUNT] {
        [
            self.stoch_k,
            self.stoch_d,
            self.momentum,
            self.williams_r,
            self.ad_osc,
            self.disparity7,
            self.roc,
        ]
    }

    pub fn values(&self) -> [f64; PRICE_FIELDS + INDICATOR_COUNT] {
        let mut out = [0.0; PRICE_FIELDS + INDICATOR_COUNT];
        out[..PRICE_FIELDS].copy_from_slice(&self.price_fields());
        out[PRICE_FIELDS..].copy_from_slice(&self.indicator_values());
        out
    }
}

fn need(indicator: &'static str, needed: usize, index: usize, available: usize) -> Result<(), IndicatorError> {
    if available < needed {
        return Err(IndicatorError::InsufficientHistory {
            indicator,
            needed,
            index,
            available,
        });
    }
    Ok(())
}

fn avail(bars: &[PriceBar], t: usize) -> usize {
    if t < bars.len() {
        t + 1
    } else {
        0
    }
}

fn range(bars: &[PriceBar], t: usize, n: usize) -> (f64, f64) {
    bars[t + 1 - n..=t]
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), b| (lo.min(b.low), hi.max(b.high)))
}

/// Stochastic %K: where the close sits in the `n`-day low/high range, ×100.
pub fn stochastic_k(bars: &[PriceBar], t: usize, n: usize) -> Result<f64, IndicatorError> {
    if n == 0 {
        return Err(IndicatorError::EmptyWindow);
    }
    need("stochastic %K", n, t, avail(bars, t))?;
    let (lo, hi) = range(bars, t, n);
    if hi == lo {
        return Ok(FLAT_RANGE_FALLBACK);
    }
    Ok((bars[t].close - lo) / (hi - lo) * 100.0)
}

/// Stochastic %D: mean of the last `n` values of `k_history`.
pub fn stochastic_d(k_history: &[f64], n: usize) -> Result<f64, IndicatorError> {
    if n == 0 {
        return Err(IndicatorError::EmptyWindow);
    }
    need("stochastic %D", n, k_history.len().saturating_sub(1), k_history.len())?;
    Ok(k_history[k_history.len() - n..].iter().sum::<f64>() / n as f64)
}

/// Williams %R as `(highest high − close) / range × 100`, on the 0..100 scale.
pub fn williams_r(bars: &[PriceBar], t: usize, n: usize) -> Result<f64, IndicatorError> {
    if n == 0 {
        return Err(IndicatorError::EmptyWindow);
    }
    need("williams %R", n, t, avail(bars, t))?;
    let (lo, hi) = range(bars, t, n);
    if hi == lo {
        return Ok(FLAT_RANGE_FALLBACK);
    }
    Ok((hi - bars[t].close) / (hi - lo) * 100.0)
}

/// Single-day A/D oscillator: close-to-close change over the day's range.
pub fn ad_oscillator(bars: &[PriceBar], t: usize) -> Result<f64, IndicatorError> {
    need("A/D oscillator", 2, t, avail(bars, t))?;
    let b = &bars[t];
    if b.high == b.low {
        return Ok(0.0);
    }
    Ok((b.close - bars[t - 1].close) / (b.high - b.low))
}

/// Close today minus close `n` days ago.
pub fn momentum(bars: &[PriceBar], t: usize, n: usize) -> Result<f64, IndicatorError> {
    if n == 0 {
        return Err(IndicatorError::EmptyWindow);
    }
    need("momentum", n + 1, t, avail(bars, t))?;
    Ok(bars[t].close - bars[t - n].close)
}

/// Close relative to its `n`-day simple moving average, ×100.
pub fn disparity(bars: &[PriceBar], t: usize, n: usize) -> Result<f64, IndicatorError> {
    if n == 0 {
        return Err(IndicatorError::EmptyWindow);
    }
    need("disparity", n, t, avail(bars, t))?;
    let ma = bars[t + 1 - n..=t].iter().map(|b| b.close).sum::<f64>() / n as f64;
    if ma == 0.0 {
        return Err(IndicatorError::ZeroMovingAverage(t));
    }
    Ok(bars[t].close / ma * 100.0)
}

/// Seven-day disparity.
pub fn disparity7(bars: &[PriceBar], t: usize) -> Result<f64, IndicatorError> {
    disparity(bars, t, 7)
}

/// Close today over close `n` days ago, ×100.
pub fn rate_of_change(bars: &[PriceBar], t: usize, n: usize) -> Result<f64, IndicatorError> {
    if n == 0 {
        return Err(IndicatorError::EmptyWindow);
    }
    need("rate of change", n + 1, t, avail(bars, t))?;
    let reference = bars[t - n].close;
    if reference == 0.0 {
        return Err(IndicatorError::ZeroReferencePrice(t - n));
    }
    Ok(bars[t].close / reference * 100.0)
}

/// One feature row per day after the warm-up period.
pub fn compute_feature_rows(series: &CryptoSeries, config: &IndicatorConfig) -> Result<Vec<FeatureRow>, IndicatorError> {
    config.validate()?;
    let bars = series.bars();
    let warmup = config.warmup();
    if bars.len() <= warmup {
        return Err(IndicatorError::SeriesTooShort {
            len: bars.len(),
            warmup,
        });
    }
    let first_k = config.n_stoch - 1;
    let k_values = (first_k..bars.len())
        .map(|t| stochastic_k(bars, t, config.n_stoch))
        .collect::<Result<Vec<_>, _>>()?;
    (warmup..bars.len())
        .map(|t| {
            let b = &bars[t];
            Ok(FeatureRow {
                date: b.date,
                open: b.open,
                high: b.high,
                low: b.low,
                close: b.close,
                volume: b.volume,
                stoch_k: k_values[t - first_k],
                stoch_d: stochastic_d(&k_values[..=t - first_k], config.n_stoch_d)?,
                momentum: momentum(bars, t, config.n_momentum)?,
                williams_r: williams_r(bars, t, config.n_stoch)?,
                ad_osc: ad_oscillator(bars, t)?,
                disparity7: disparity(bars, t, config.n_disparity)?,
                roc: rate_of_change(bars, t, config.n_roc)?,
            })
        })
        .collect()
}

pub const FEATURE_CSV_HEADER: [&str; 13] = [
    "date",
    "open",
    "high",
    "low",
    "close",
    "volume",
    "stoch_k",
    "stoch_d",
    "momentum",
    "williams_r",
    "ad_osc",
    "disparity7",
    "roc",
];

pub fn write_feature_csv<W: std::io::Write>(rows: &[FeatureRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FEATURE_CSV_HEADER)?;
    for r in rows {
        let mut rec = vec![r.date.format("%Y-%m-%d").to_string()];
        rec.extend(r.values().iter().map(|v| v.to_string()));
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}
