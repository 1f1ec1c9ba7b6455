//! Domain types, file ingestion, windowing and chronological splitting.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::indicators::FeatureRow;
use crate::numeric::Tensor;
use crate::sentiment::SentimentSeries;

/// Number of direct market fields per day (open, high, low, close, volume).
pub const PRICE_FIELDS: usize = 5;
/// Column of the close price inside a price-field row.
pub const CLOSE_COLUMN: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("no dates shared by the target and macro series")]
    EmptyIntersection,
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One trading day of OHLCV data for one asset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceBar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl PriceBar {
    /// Checks the OHLCV invariants, naming the first violated one.
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("open", self.open),
            ("high", self.high),
            ("low", self.low),
            ("close", self.close),
            ("volume", self.volume),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(format!("{name} is not finite"));
        }
        if self.low > self.high {
            return Err("low > high".into());
        }
        if self.low > self.open.min(self.close) {
            return Err("low > min(open, close)".into());
        }
        if self.high < self.open.max(self.close) {
            return Err("high < max(open, close)".into());
        }
        if self.volume < 0.0 {
            return Err("volume < 0".into());
        }
        Ok(())
    }

    pub fn fields(&self) -> [f64; PRICE_FIELDS] {
        [self.open, self.high, self.low, self.close, self.volume]
    }
}

/// Date-ascending daily bars for one asset.
#[derive(Clone, Debug, PartialEq)]
pub struct CryptoSeries {
    symbol: String,
    bars: Vec<PriceBar>,
}

impl CryptoSeries {
    /// Sorts `bars` by date and rejects duplicates or invalid bars.
    pub fn new(symbol: impl Into<String>, mut bars: Vec<PriceBar>) -> Result<Self, DataError> {
        let symbol = symbol.into();
        for b in &bars {
            b.validate()
                .map_err(|m| DataError::Invalid(format!("{symbol} {}: {m}", b.date)))?;
        }
        bars.sort_by_key(|b| b.date);
        if let Some(w) = bars.windows(2).find(|w| w[0].date == w[1].date) {
            return Err(DataError::Invalid(format!("{symbol}: duplicate date {}", w[0].date)));
        }
        Ok(Self { symbol, bars })
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    pub fn bars(&self) -> &[PriceBar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn closes(&self) -> Vec<f64> {
        self.bars.iter().map(|b| b.close).collect()
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.bars.iter().map(|b| b.date)
    }

    pub fn by_date(&self) -> BTreeMap<NaiveDate, &PriceBar> {
        self.bars.iter().map(|b| (b.date, b)).collect()
    }
}

#[derive(Deserialize)]
struct PriceRecord {
    date: String,
    open: f64,
    high: f64,
    low: f64,
    close: f64,
    volume: f64,
}

const PRICE_HEADER: [&str; 6] = ["date", "open", "high", "low", "close", "volume"];

pub fn parse_date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| format!("bad date {s:?}: {e}"))
}

/// Parses a price CSV with header `date,open,high,low,close,volume`.
pub fn parse_price_csv<R: Read>(reader: R, symbol: &str, origin: &str) -> Result<CryptoSeries, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let perr = |line: usize, message: String| DataError::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let header = rdr.headers().map_err(|e| perr(1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != PRICE_HEADER {
        return Err(perr(1, format!("expected header {}", PRICE_HEADER.join(","))));
    }
    let mut bars = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, rec) in rdr.deserialize::<PriceRecord>().enumerate() {
        let line = i + 2;
        let r = rec.map_err(|e| perr(line, e.to_string()))?;
        let bar = PriceBar {
            date: parse_date(&r.date).map_err(|m| perr(line, m))?,
            open: r.open,
            high: r.high,
            low: r.low,
            close: r.close,
            volume: r.volume,
        };
        bar.validate().map_err(|m| perr(line, m))?;
        if !seen.insert(bar.date) {
            return Err(perr(line, format!("duplicate date {}", bar.date)));
        }
        bars.push(bar);
    }
    CryptoSeries::new(symbol, bars)
}

/// Parses a vendor price export.
///
/// Column names are matched case-insensitively and in any order (`date`,
/// `timestamp` or `time`; `open`, `high`, `low`, `close`, `volume`; extra
/// columns are ignored). A time-of-day suffix on the date is dropped and
/// rows may come in any order.
pub fn parse_raw_price_csv<R: Read>(reader: R, symbol: &str, origin: &str) -> Result<CryptoSeries, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let perr = |line: usize, message: String| DataError::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| perr(1, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    let find = |names: &[&str]| header.iter().position(|h| names.contains(&h.as_str()));
    let date_col = find(&["date", "timestamp", "time"]).ok_or_else(|| perr(1, "no date column".into()))?;
    let mut cols = [0usize; PRICE_FIELDS];
    for (slot, name) in cols.iter_mut().zip(&PRICE_HEADER[1..]) {
        *slot = find(&[name]).ok_or_else(|| perr(1, format!("no {name} column")))?;
    }
    let mut bars = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| perr(line, e.to_string()))?;
        let cell = |c: usize| rec.get(c).ok_or_else(|| perr(line, format!("missing column {}", c + 1)));
        let raw_date = cell(date_col)?;
        let date = parse_date(raw_date.get(..10).unwrap_or(raw_date)).map_err(|m| perr(line, m))?;
        let mut v = [0.0; PRICE_FIELDS];
        for (x, &c) in v.iter_mut().zip(&cols) {
            let text = cell(c)?.replace(',', "");
            *x = text
                .parse()
                .map_err(|_| perr(line, format!("{:?} is not a number", cell(c).unwrap_or_default())))?;
        }
        let bar = PriceBar {
            date,
            open: v[0],
            high: v[1],
            low: v[2],
            close: v[3],
            volume: v[4],
        };
        bar.validate().map_err(|m| perr(line, m))?;
        if !seen.insert(date) {
            return Err(perr(line, format!("duplicate date {date}")));
        }
        bars.push(bar);
    }
    CryptoSeries::new(symbol, bars)
}

/// Loads a price CSV; the symbol is the file stem.
pub fn load_price_csv(path: &Path) -> Result<CryptoSeries, DataError> {
    let symbol = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("UNKNOWN")
        .to_string();
    let f = File::open(path).map_err(io_err(path))?;
    parse_price_csv(f, &symbol, &path.display().to_string())
}

pub fn write_price_csv<W: Write>(series: &CryptoSeries, out: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(out);
    let fail = |e: csv::Error| DataError::Invalid(format!("writing {}: {e}", series.symbol));
    w.write_record(PRICE_HEADER).map_err(fail)?;
    for b in &series.bars {
        w.write_record([
            b.date.format("%Y-%m-%d").to_string(),
            b.open.to_string(),
            b.high.to_string(),
            b.low.to_string(),
            b.close.to_string(),
            b.volume.to_string(),
        ])
        .map_err(fail)?;
    }
    w.flush().map_err(|e| DataError::Invalid(e.to_string()))?;
    Ok(())
}

/// One news article.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewsArticle {
    pub date: NaiveDate,
    pub title: String,
    pub content: String,
}

#[derive(Deserialize)]
struct NewsRecord {
    date: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    content: String,
}

pub fn parse_news_jsonl<R: BufRead>(reader: R, origin: &str) -> Result<Vec<NewsArticle>, DataError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let perr = |message: String| DataError::Parse {
            path: origin.to_string(),
            line: i + 1,
            message,
        };
        let line = line.map_err(|e| perr(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: NewsRecord = serde_json::from_str(&line).map_err(|e| perr(e.to_string()))?;
        if rec.title.trim().is_empty() && rec.content.trim().is_empty() {
            return Err(perr("article has neither title nor content".into()));
        }
        out.push(NewsArticle {
            date: parse_date(&rec.date).map_err(perr)?,
            title: rec.title,
            content: rec.content,
        });
    }
    Ok(out)
}

pub fn load_news_jsonl(path: &Path) -> Result<Vec<NewsArticle>, DataError> {
    let f = File::open(path).map_err(io_err(path))?;
    parse_news_jsonl(BufReader::new(f), &path.display().to_string())
}

pub fn write_news_jsonl<W: Write>(articles: &[NewsArticle], mut out: W) -> std::io::Result<()> {
    for a in articles {
        let line = serde_json::json!({
            "date": a.date.format("%Y-%m-%d").to_string(),
            "title": a.title,
            "content": a.content,
        });
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Articles grouped by publication day.
pub fn group_by_day(articles: &[NewsArticle]) -> BTreeMap<NaiveDate, Vec<&NewsArticle>> {
    let mut map: BTreeMap<NaiveDate, Vec<&NewsArticle>> = BTreeMap::new();
    for a in articles {
        map.entry(a.date).or_default().push(a);
    }
    map
}

/// Dataset-level configuration stored as `manifest.toml`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub target_symbols: Vec<String>,
    pub macro_symbols: Vec<String>,
    #[serde(default = "default_window")]
    pub window_length: usize,
    /// Drop the target from its own macro set when it is a member.
    #[serde(default)]
    pub exclude_target_from_macro: bool,
}

fn default_window() -> usize {
    7
}

impl Manifest {
    pub fn new(target_symbols: Vec<String>, macro_symbols: Vec<String>) -> Self {
        Self {
            target_symbols,
            macro_symbols,
            window_length: default_window(),
            exclude_target_from_macro: false,
        }
    }

    pub fn macro_for(&self, target: &str) -> Vec<String> {
        self.macro_symbols
            .iter()
            .filter(|s| !(self.exclude_target_from_macro && s.as_str() == target))
            .cloned()
            .collect()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.target_symbols.is_empty() {
            return Err(DataError::Manifest("target_symbols is empty".into()));
        }
        if self.macro_symbols.is_empty() {
            return Err(DataError::Manifest("macro_symbols is empty".into()));
        }
        if self.window_length < 2 {
            return Err(DataError::Manifest("window_length must be at least 2".into()));
        }
        Ok(())
    }
}

/// On-disk dataset directory:
///
/// ```text
/// <root>/manifest.toml
/// <root>/prices/<SYMBOL>.csv
/// <root>/news.jsonl
/// <root>/sentiment/labels.csv
/// ```
#[derive(Clone, Debug)]
pub struct DatasetLayout {
    pub root: PathBuf,
}

impl DatasetLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.toml")
    }

    pub fn prices_dir(&self) -> PathBuf {
        self.root.join("prices")
    }

    pub fn price_path(&self, symbol: &str) -> PathBuf {
        self.prices_dir().join(format!("{symbol}.csv"))
    }

    pub fn news_path(&self) -> PathBuf {
        self.root.join("news.jsonl")
    }

    pub fn label_cache_path(&self) -> PathBuf {
        self.root.join("sentiment").join("labels.csv")
    }

    pub fn examples_path(&self) -> PathBuf {
        self.root.join("sentiment").join("examples.jsonl")
    }

    pub fn read_manifest(&self) -> Result<Manifest, DataError> {
        let path = self.manifest_path();
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let m: Manifest = toml::from_str(&text).map_err(|e| DataError::Manifest(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn write_manifest(&self, manifest: &Manifest) -> Result<(), DataError> {
        let path = self.manifest_path();
        std::fs::create_dir_all(&self.root).map_err(io_err(&self.root))?;
        let text = toml::to_string(manifest).map_err(|e| DataError::Manifest(e.to_string()))?;
        std::fs::write(&path, text).map_err(io_err(&path))
    }

    pub fn load_series(&self, symbol: &str) -> Result<CryptoSeries, DataError> {
        load_price_csv(&self.price_path(symbol))
    }

    pub fn write_series(&self, series: &CryptoSeries) -> Result<(), DataError> {
        let dir = self.prices_dir();
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = self.price_path(series.symbol());
        let f = File::create(&path).map_err(io_err(&path))?;
        write_price_csv(series, f)
    }

    /// News articles, or an empty list when the dataset has no news file.
    pub fn load_news(&self) -> Result<Vec<NewsArticle>, DataError> {
        let path = self.news_path();
        if !path.exists() {
            return Ok(Vec::new());
        }
        load_news_jsonl(&path)
    }
}

/// One model input: `L` consecutive aligned days and the next-day close.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample {
    pub target_symbol: String,
    /// Dates of the `L` observation days.
    pub dates: Vec<NaiveDate>,
    pub target_date: NaiveDate,
    /// `[L, 5]` target open/high/low/close/volume.
    pub x_g: Tensor,
    /// `[n, L, 5]` macro-asset price fields for the same dates.
    pub x_m: Tensor,
    /// `[L, 7]` technical indicators of the target.
    pub indicators: Tensor,
    /// Daily sentiment over the window, each in `[-1, 1]`.
    pub sentiment: Vec<f64>,
    pub target_close: f64,
    /// Close of the last observation day.
    pub last_close: f64,
}

impl WindowSample {
    pub fn window_len(&self) -> usize {
        self.dates.len()
    }

    pub fn macro_count(&self) -> usize {
        self.x_m.shape()[0]
    }

    /// Closes of the observation window.
    pub fn closes(&self) -> Vec<f64> {
        (0..self.window_len()).map(|t| self.x_g.at(t, CLOSE_COLUMN)).collect()
    }
}

/// Chronological train / validation / test partition.
#[derive(Clone, Debug, Default)]
pub struct DatasetSplit {
    pub train: Vec<WindowSample>,
    pub validation: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
}

impl DatasetSplit {
    /// Every train target precedes every validation target, which precedes
    /// every test target.
    pub fn check_no_leakage(&self) -> Result<(), DataError> {
        let max = |s: &[WindowSample]| s.iter().map(|w| w.target_date).max();
        let min = |s: &[WindowSample]| s.iter().map(|w| w.target_date).min();
        let ordered = |a: Option<NaiveDate>, b: Option<NaiveDate>| match (a, b) {
            (Some(a), Some(b)) => a < b,
            _ => true,
        };
        if !ordered(max(&self.train), min(&self.validation))
            || !ordered(max(&self.validation), min(&self.test))
            || !ordered(max(&self.train), min(&self.test))
        {
            return Err(DataError::Invalid("split leaks: sections overlap in time".into()));
        }
        Ok(())
    }

    /// Last target date of the training section.
    pub fn train_cutoff(&self) -> Option<NaiveDate> {
        self.train.last().map(|s| s.target_date)
    }
}

/// Split ratios for train, validation and test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios(pub [f64; 3]);

impl Default for SplitRatios {
    fn default() -> Self {
        Self([0.7, 0.1, 0.2])
    }
}

/// Minimum number of samples a split accepts.
pub const MIN_SPLIT_SAMPLES: usize = 10;

/// Splits date-ordered samples chronologically: the first `⌊r₀·N⌋` go to
/// train, the next `⌊r₁·N⌋` to validation, the rest to test.
pub fn chronological_split(samples: Vec<WindowSample>, ratios: SplitRatios) -> Result<DatasetSplit, DataError> {
    let [a, b, c] = ratios.0;
    if [a, b, c].iter().any(|r| !(r.is_finite() && *r > 0.0)) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(DataError::Invalid(format!(
            "split ratios must be positive and sum to 1, got {a}:{b}:{c}"
        )));
    }
    let n = samples.len();
    if n < MIN_SPLIT_SAMPLES {
        return Err(DataError::InsufficientSamples {
            needed: MIN_SPLIT_SAMPLES,
            got: n,
        });
    }
    if samples.windows(2).any(|w| w[0].target_date >= w[1].target_date) {
        return Err(DataError::Invalid("samples are not in strictly increasing target-date order".into()));
    }
    // the epsilon keeps e.g. 0.7 * 100 from flooring to 69
    let n_train = (a * n as f64 + 1e-9).floor() as usize;
    let n_val = (b * n as f64 + 1e-9).floor() as usize;
    let mut rest = samples;
    let test = rest.split_off(n_train + n_val);
    let validation = rest.split_off(n_train);
    let split = DatasetSplit {
        train: rest,
        validation,
        test,
    };
    split.check_no_leakage()?;
    Ok(split)
}

/// Builds one sample per aligned day `t` that has `L` observation days
/// ending at `t` and a close on the next aligned day.
///
/// Dates are aligned on the intersection of the feature rows and every
/// macro series; a date missing from any series is dropped.
pub fn build_windows(
    target_symbol: &str,
    rows: &[FeatureRow],
    macro_set: &[CryptoSeries],
    sentiment: &SentimentSeries,
    window: usize,
) -> Result<Vec<WindowSample>, DataError> {
    if window == 0 {
        return Err(DataError::Invalid("window length must be positive".into()));
    }
    let macro_maps: Vec<_> = macro_set.iter().map(CryptoSeries::by_date).collect();
    let aligned: Vec<&FeatureRow> = rows
        .iter()
        .filter(|r| macro_maps.iter().all(|m| m.contains_key(&r.date)))
        .collect();
    if aligned.is_empty() {
        return Err(DataError::EmptyIntersection);
    }
    let n = macro_set.len();
    let mut out = Vec::new();
    for end in window - 1..aligned.len().saturating_sub(1) {
        let days = &aligned[end + 1 - window..=end];
        let next = aligned[end + 1];
        let x_g = Tensor::from_rows(&days.iter().map(|r| r.price_fields()).collect::<Vec<_>>());
        let indicators = Tensor::from_rows(&days.iter().map(|r| r.indicator_values()).collect::<Vec<_>>());
        let mut macro_data = Vec::with_capacity(n * window * PRICE_FIELDS);
        for m in &macro_maps {
            for r in days {
                macro_data.extend_from_slice(&m[&r.date].fields());
            }
        }
        let x_m = Tensor::new(vec![n, window, PRICE_FIELDS], macro_data).expect("macro block shape");
        out.push(WindowSample {
            target_symbol: target_symbol.to_string(),
            dates: days.iter().map(|r| r.date).collect(),
            target_date: next.date,
            x_g,
            x_m,
            indicators,
            sentiment: days.iter().map(|r| sentiment.value(r.date)).collect(),
            target_close: next.close,
            last_close: days[window - 1].close,
        });
    }
    Ok(out)
}
