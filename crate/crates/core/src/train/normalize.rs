use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data::{CryptoSeries, DataError, WindowSample, CLOSE_COLUMN, PRICE_FIELDS};
use crate::indicators::{FeatureRow, INDICATOR_COUNT};
use crate::numeric::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: f64,
    pub std: f64,
}

impl FeatureStats {
    /// Mean and population deviation; a zero deviation becomes 1.
    pub fn fit(values: impl Iterator<Item = f64>, label: &str) -> Self {
        let v: Vec<f64> = values.collect();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
        if std > 0.0 && std.is_finite() {
            Self { mean, std }
        } else {
            log::warn!("{label}: zero spread in the training rows; using unit scale");
            Self { mean, std: 1.0 }
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Per-asset, per-feature z-scoring fitted on rows dated on or before the
/// last training target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub cutoff: NaiveDate,
    /// Rows of the target that entered the fit.
    pub rows_used: usize,
    pub target: Vec<FeatureStats>,
    pub indicators: Vec<FeatureStats>,
    /// Macro asset symbol and its five price-field statistics, in block order.
    pub macro_assets: Vec<(String, Vec<FeatureStats>)>,
}

impl Normalizer {
    pub fn fit(rows: &[FeatureRow], macro_set: &[CryptoSeries], cutoff: NaiveDate) -> Result<Self, DataError> {
        let train: Vec<&FeatureRow> = rows.iter().filter(|r| r.date <= cutoff).collect();
        if train.is_empty() {
            return Err(DataError::Invalid(format!("no feature rows on or before {cutoff}")));
        }
        let target = (0..PRICE_FIELDS)
            .map(|j| FeatureStats::fit(train.iter().map(|r| r.price_fields()[j]), "target price field"))
            .collect();
        let indicators = (0..INDICATOR_COUNT)
            .map(|j| FeatureStats::fit(train.iter().map(|r| r.indicator_values()[j]), "indicator"))
            .collect();
        let mut macro_assets = Vec::with_capacity(macro_set.len());
        for s in macro_set {
            let bars: Vec<_> = s.bars().iter().filter(|b| b.date <= cutoff).collect();
            if bars.is_empty() {
                return Err(DataError::Invalid(format!("{} has no bars on or before {cutoff}", s.symbol())));
            }
            let stats = (0..PRICE_FIELDS)
                .map(|j| FeatureStats::fit(bars.iter().map(|b| b.fields()[j]), s.symbol()))
                .collect();
            macro_assets.push((s.symbol().to_string(), stats));
        }
        Ok(Self {
            cutoff,
            rows_used: train.len(),
            target,
            indicators,
            macro_assets,
        })
    }

    pub fn close(&self) -> FeatureStats {
        self.target[CLOSE_COLUMN]
    }

    pub fn apply(&self, sample: &WindowSample) -> Result<WindowSample, DataError> {
        let l = sample.window_len();
        let n = sample.macro_count();
        if n != self.macro_assets.len() {
            return Err(DataError::Invalid(format!(
                "sample has {n} macro assets, normalizer was fitted on {}",
                self.macro_assets.len()
            )));
        }
        let scale = |t: &Tensor, cols: usize, stats: &dyn Fn(usize) -> FeatureStats| {
            let data = t.data().iter().enumerate().map(|(i, &x)| stats(i % cols).apply(x)).collect();
            Tensor::new(t.shape().to_vec(), data).expect("same shape")
        };
        let x_g = scale(&sample.x_g, PRICE_FIELDS, &|j| self.target[j]);
        let indicators = scale(&sample.indicators, INDICATOR_COUNT, &|j| self.indicators[j]);
        let per_asset = l * PRICE_FIELDS;
        let x_m_data = sample
            .x_m
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| self.macro_assets[i / per_asset].1[i % PRICE_FIELDS].apply(x))
            .collect();
        let close = self.close();
        Ok(WindowSample {
            x_g,
            x_m: Tensor::new(sample.x_m.shape().to_vec(), x_m_data).expect("same shape"),
            indicators,
            target_close: close.apply(sample.target_close),
            last_close: close.apply(sample.last_close),
            ..sample.clone()
        })
    }
}
