//! Generated datasets with known structure, for tests and demos.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use chrono::{Days, NaiveDate};

use crate::data::{CryptoSeries, DataError, DatasetLayout, Manifest, NewsArticle, PriceBar};
use crate::sentiment::{content_hash, LabelCache, SentimentError, SentimentLabel, SentimentSeries};

#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    pub target: CryptoSeries,
    pub macro_set: Vec<CryptoSeries>,
    pub sentiment: SentimentSeries,
    /// Articles with their intended labels.
    pub news: Vec<(NewsArticle, SentimentLabel)>,
}

pub fn start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2021, 1, 1).expect("valid date")
}

fn day(i: usize) -> NaiveDate {
    start_date() + Days::new(i as u64)
}

/// Bars whose open is the previous close and whose range pads the body by
/// half a percent.
fn bars_from_closes(closes: &[f64], first_open: f64, volumes: &[f64]) -> Vec<PriceBar> {
    closes
        .iter()
        .enumerate()
        .map(|(i, &close)| {
            let open = if i == 0 { first_open } else { closes[i - 1] };
            PriceBar {
                date: day(i),
                open,
                high: open.max(close) * 1.005,
                low: open.min(close) * 0.995,
                close,
                volume: volumes[i],
            }
        })
        .collect()
}

fn series(symbol: &str, closes: &[f64], first_open: f64, volumes: &[f64]) -> CryptoSeries {
    CryptoSeries::new(symbol, bars_from_closes(closes, first_open, volumes)).expect("generated bars are valid")
}

/// `p_t = 10 + sin(2πt/30)` as the target, with five copies leading it by
/// 3, 6, 9, 12 and 15 days as the macro block, and no news.
pub fn sinusoid(days: usize) -> SyntheticDataset {
    let price = |t: f64| 10.0 + (2.0 * PI * t / 30.0).sin();
    let make = |symbol: &str, shift: f64| {
        let closes: Vec<f64> = (0..days).map(|t| price(t as f64 + shift)).collect();
        let volumes: Vec<f64> = (0..days).map(|t| 1000.0 + 100.0 * (2.0 * PI * (t as f64 + shift) / 30.0).cos()).collect();
        series(symbol, &closes, price(shift - 1.0), &volumes)
    };
    SyntheticDataset {
        target: make("SIN", 0.0),
        macro_set: (1..=5).map(|k| make(&format!("SIN{k}"), 3.0 * k as f64)).collect(),
        sentiment: SentimentSeries::default(),
        news: Vec::new(),
    }
}

/// Geometric random walks sharing a common market factor.
pub fn random_market(symbols: &[&str], days: usize, seed: u64) -> Vec<CryptoSeries> {
    let mut rng = crate::numeric::RngStream::new(seed);
    let market: Vec<f64> = (0..days).map(|_| rng.normal()).collect();
    symbols
        .iter()
        .enumerate()
        .map(|(k, sym)| {
            let mut r = rng.fork(k as u64 + 1);
            let start = 10f64.powf(1.0 + k as f64 * 0.5);
            let mut p = start;
            let mut closes = Vec::with_capacity(days);
            let mut volumes = Vec::with_capacity(days);
            for m in &market {
                p *= (0.03 * (0.6 * m + 0.8 * r.normal())).exp();
                closes.push(p);
                volumes.push(1e6 * (0.3 * r.normal()).exp());
            }
            series(sym, &closes, start, &volumes)
        })
        .collect()
}

/// A random-walk target whose daily sentiment is the sign of the next
/// day's close change, with five independent walks as the macro block.
pub fn sentiment_sign(days: usize, seed: u64) -> SyntheticDataset {
    let mut all = random_market(&["SGN", "M1", "M2", "M3", "M4", "M5"], days + 1, seed);
    let target_full = all.remove(0);
    let closes = target_full.closes();
    let mut values = BTreeMap::new();
    let mut news = Vec::new();
    for i in 0..days {
        let up = closes[i + 1] > closes[i];
        let (label, word) = if up {
            (SentimentLabel::Positive, "rally")
        } else {
            (SentimentLabel::Negative, "selloff")
        };
        values.insert(day(i), label.score());
        news.push((
            NewsArticle {
                date: day(i),
                title: format!("[synthetic] day {i}: traders expect a {word}"),
                content: format!("Generated article {i}; the next session is constructed to close {}.", if up { "higher" } else { "lower" }),
            },
            label,
        ));
    }
    let trim = |s: CryptoSeries| {
        let bars = s.bars()[..days].to_vec();
        CryptoSeries::new(s.symbol(), bars).expect("prefix of valid series")
    };
    SyntheticDataset {
        target: trim(target_full),
        macro_set: all.into_iter().map(trim).collect(),
        sentiment: SentimentSeries::from_values(values).expect("scores are in range"),
        news,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WriteError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Sentiment(#[from] SentimentError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Writes the dataset in the canonical layout, pre-populating the label
/// cache with the intended labels.
pub fn write_layout(ds: &SyntheticDataset, layout: &DatasetLayout) -> Result<Manifest, WriteError> {
    std::fs::create_dir_all(&layout.root)?;
    layout.write_series(&ds.target)?;
    for m in &ds.macro_set {
        layout.write_series(m)?;
    }
    let manifest = Manifest::new(
        vec![ds.target.symbol().to_string()],
        ds.macro_set.iter().map(|s| s.symbol().to_string()).collect(),
    );
    layout.write_manifest(&manifest)?;
    if !ds.news.is_empty() {
        let articles: Vec<NewsArticle> = ds.news.iter().map(|(a, _)| a.clone()).collect();
        let f = std::fs::File::create(layout.news_path())?;
        crate::data::write_news_jsonl(&articles, std::io::BufWriter::new(f))?;
        let mut cache = LabelCache::open(&layout.label_cache_path())?;
        for (a, l) in &ds.news {
            cache.insert(&content_hash(a), a.date, *l)?;
        }
    }
    Ok(manifest)
}
