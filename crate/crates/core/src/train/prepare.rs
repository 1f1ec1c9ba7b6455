use std::collections::BTreeMap;

use crate::data::{
    build_windows, chronological_split, CryptoSeries, DatasetLayout, DatasetSplit, Manifest, NewsArticle,
};
use crate::indicators::{compute_feature_rows, FeatureRow};
use crate::sentiment::{content_hash, daily_sentiment, LabelCache, SentimentSeries};

use super::{Normalizer, TrainConfig, TrainError};

/// Windows of one target asset, split chronologically and z-scored with
/// training-only statistics.
#[derive(Clone, Debug)]
pub struct PreparedDataset {
    pub symbol: String,
    pub macro_symbols: Vec<String>,
    pub rows: Vec<FeatureRow>,
    /// Unscaled samples.
    pub raw: DatasetSplit,
    /// Normalised samples; everything downstream works on these.
    pub split: DatasetSplit,
    pub normalizer: Normalizer,
}

pub fn prepare_dataset(
    target: &CryptoSeries,
    macro_set: &[CryptoSeries],
    sentiment: &SentimentSeries,
    cfg: &TrainConfig,
) -> Result<PreparedDataset, TrainError> {
    let rows = compute_feature_rows(target, &cfg.indicators)?;
    let samples = build_windows(target.symbol(), &rows, macro_set, sentiment, cfg.window)?;
    let raw = chronological_split(samples, cfg.split)?;
    let cutoff = raw.train_cutoff().ok_or(TrainError::EmptySection("train"))?;
    let normalizer = Normalizer::fit(&rows, macro_set, cutoff)?;
    let scale = |s: &[crate::data::WindowSample]| s.iter().map(|w| normalizer.apply(w)).collect::<Result<Vec<_>, _>>();
    let split = DatasetSplit {
        train: scale(&raw.train)?,
        validation: scale(&raw.validation)?,
        test: scale(&raw.test)?,
    };
    split.check_no_leakage()?;
    Ok(PreparedDataset {
        symbol: target.symbol().to_string(),
        macro_symbols: macro_set.iter().map(|s| s.symbol().to_string()).collect(),
        rows,
        raw,
        split,
        normalizer,
    })
}

/// Daily sentiment of the dataset's articles, looked up in the label cache.
/// Articles without a cached label are skipped.
pub fn sentiment_from_cache(layout: &DatasetLayout) -> Result<SentimentSeries, TrainError> {
    let news: Vec<NewsArticle> = layout.load_news()?;
    if news.is_empty() {
        return Ok(SentimentSeries::default());
    }
    let cache = LabelCache::open(&layout.label_cache_path())?;
    let mut by_day: BTreeMap<_, Vec<_>> = BTreeMap::new();
    let mut missing = 0usize;
    for a in &news {
        match cache.get(&content_hash(a)) {
            Some(l) => by_day.entry(a.date).or_default().push(l),
            None => missing += 1,
        }
    }
    if missing > 0 {
        log::warn!("{missing} of {} articles have no cached label and are ignored", news.len());
    }
    Ok(daily_sentiment(&by_day))
}

pub fn load_prepared(
    layout: &DatasetLayout,
    manifest: &Manifest,
    symbol: &str,
    cfg: &TrainConfig,
) -> Result<PreparedDataset, TrainError> {
    let target = layout.load_series(symbol)?;
    let macro_set = manifest
        .macro_for(symbol)
        .iter()
        .map(|m| layout.load_series(m))
        .collect::<Result<Vec<_>, _>>()?;
    let sentiment = sentiment_from_cache(layout)?;
    prepare_dataset(&target, &macro_set, &sentiment, cfg)
}
