//! Training, evaluation, run bookkeeping and reporting.

mod metrics;
mod normalize;
mod prepare;
mod report;
mod runs;

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use metrics::{learning_rate, mean_std, metrics, Metrics, MetricsError};
pub use normalize::{FeatureStats, Normalizer};
pub use prepare::{load_prepared, prepare_dataset, sentiment_from_cache, PreparedDataset};
pub use report::{build_report, EvalReport, ReportRow, REPORT_COLUMNS};
pub use runs::{
    collect_results, evaluate_run, execute_runs, load_run_result, run_dir, Section, train_and_record, RunManifest, RunResult, RunSpec,
    BatchOptions, RunStatus, CHECKPOINT_FILE, NORMALIZER_FILE, EPOCH_LOG_FILE, MANIFEST_FILE, METRICS_FILE, PREDICTIONS_FILE,
};

use crate::baselines::{baseline_input, Baseline, BaselineConfig, BaselineKind};
use crate::data::{DataError, DatasetSplit, SplitRatios, WindowSample, PRICE_FIELDS};
use crate::indicators::{IndicatorConfig, IndicatorError, INDICATOR_COUNT};
use crate::model::{CryptoPulse, ForwardOptions, ModelConfig, PredictionRecord};
use crate::numeric::{Adam, Graph, NumericError, ParamStore, RngStream, Tensor, Var};
use crate::sentiment::SentimentError;
use crate::Variant;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Indicator(#[from] IndicatorError),
    #[error(transparent)]
    Sentiment(#[from] SentimentError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("training diverged in epoch {epoch} (last finite epoch: {})", last_finite_epoch.map_or("none".to_string(), |e| e.to_string()))]
    Diverged {
        epoch: usize,
        last_finite_epoch: Option<usize>,
    },
    #[error("{0} section is empty")]
    EmptySection(&'static str),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    NLinear,
    DLinear,
    CryptoPulse,
}

impl ModelKind {
    /// Report column order.
    pub const ALL: [ModelKind; 4] = [Self::Linear, Self::NLinear, Self::DLinear, Self::CryptoPulse];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::NLinear => "nlinear",
            Self::DLinear => "dlinear",
            Self::CryptoPulse => "cryptopulse",
        }
    }

    pub fn baseline(self) -> Option<BaselineKind> {
        match self {
            Self::Linear => Some(BaselineKind::Linear),
            Self::NLinear => Some(BaselineKind::NLinear),
            Self::DLinear => Some(BaselineKind::DLinear),
            Self::CryptoPulse => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Self::Linear),
            "nlinear" => Ok(Self::NLinear),
            "dlinear" => Ok(Self::DLinear),
            "cryptopulse" => Ok(Self::CryptoPulse),
            other => Err(format!("unknown model {other:?} (expected cryptopulse, linear, nlinear or dlinear)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub dropout: f64,
    pub seeds: Vec<u64>,
    pub window: usize,
    pub macro_count: usize,
    pub d_model: usize,
    pub kernel: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub ma_window: usize,
    pub split: SplitRatios,
    pub indicators: IndicatorConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            lr0: 0.0005,
            dropout: 0.1,
            seeds: vec![0, 1, 2, 3, 4],
            window: 7,
            macro_count: 5,
            d_model: 64,
            kernel: 3,
            patience: 3,
            ma_window: 3,
            split: SplitRatios::default(),
            indicators: IndicatorConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let positive = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("window", self.window),
            ("macro_count", self.macro_count),
            ("d_model", self.d_model),
            ("kernel", self.kernel),
            ("patience", self.patience),
            ("ma_window", self.ma_window),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(TrainError::Config(format!("{name} must be positive")));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(TrainError::Config(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(TrainError::Config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        if self.seeds.is_empty() {
            return Err(TrainError::Config("at least one seed is required".into()));
        }
        if self.seeds.iter().collect::<HashSet<_>>().len() != self.seeds.len() {
            return Err(TrainError::Config("seeds must be distinct".into()));
        }
        Ok(())
    }

    /// Defaults, overridden by `CRYPTOPULSE_<FIELD>` environment variables
    /// (top-level fields only), overridden in turn by a TOML file.
    pub fn resolve(file: Option<&Path>, env: impl Fn(&str) -> Option<String>) -> Result<Self, TrainError> {
        let mut value = toml::Value::try_from(Self::default()).expect("config serialises");
        let table = value.as_table_mut().expect("config is a table");
        for (key, slot) in table.iter_mut() {
            if slot.is_table() {
                continue;
            }
            let var = format!("{CONFIG_ENV_PREFIX}{}", key.to_ascii_uppercase());
            if let Some(raw) = env(&var) {
                *slot = parse_env_value(&raw, slot).ok_or_else(|| TrainError::Config(format!("{var}={raw:?} is not valid")))?;
            }
        }
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| TrainError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            let overrides: toml::Table =
                toml::from_str(&text).map_err(|e| TrainError::Config(format!("{}: {e}", path.display())))?;
            merge(table, overrides);
        }
        let cfg: Self = value
            .try_into()
            .map_err(|e: toml::de::Error| TrainError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn model_config(&self, variant: Variant) -> ModelConfig {
        ModelConfig {
            window: self.window,
            macro_count: self.macro_count,
            d_model: self.d_model,
            kernel: self.kernel,
            dropout: self.dropout,
            variant,
        }
    }
}

pub const CONFIG_ENV_PREFIX: &str = "CRYPTOPULSE_";

fn parse_env_value(raw: &str, like: &toml::Value) -> Option<toml::Value> {
    let text = if like.is_array() && !raw.trim_start().starts_with('[') {
        format!("[{raw}]")
    } else {
        raw.to_string()
    };
    let parsed: toml::Table = toml::from_str(&format!("v = {text}")).ok()?;
    let v = parsed.get("v")?.clone();
    match (like, v) {
        (toml::Value::Float(_), toml::Value::Integer(i)) => Some(toml::Value::Float(i as f64)),
        (l, v) if l.same_type(&v) => Some(v),
        _ => None,
    }
}

fn merge(base: &mut toml::Table, overrides: toml::Table) {
    for (k, v) in overrides {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// A built network of either family.
#[allow(clippy::large_enum_variant)]
#[derive(Clone, Debug)]
pub enum Model {
    CryptoPulse(CryptoPulse),
    Baseline { net: Baseline, variant: Variant },
}

impl Model {
    pub fn build(
        kind: ModelKind,
        variant: Variant,
        cfg: &TrainConfig,
        store: &mut ParamStore,
        rng: &mut RngStream,
    ) -> Result<Self, NumericError> {
        Ok(match kind.baseline() {
            None => Model::CryptoPulse(CryptoPulse::new(cfg.model_config(variant), store, rng)?),
            Some(b) => {
                let channels = PRICE_FIELDS + if variant.uses_indicators() { INDICATOR_COUNT } else { 0 };
                let mut bc = BaselineConfig::new(b, cfg.window, channels);
                bc.ma_window = cfg.ma_window;
                Model::Baseline {
                    net: Baseline::new(bc, store)?,
                    variant,
                }
            }
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::CryptoPulse(_) => ModelKind::CryptoPulse,
            Model::Baseline { net, .. } => match net.config.kind {
                BaselineKind::Linear => ModelKind::Linear,
                BaselineKind::NLinear => ModelKind::NLinear,
                BaselineKind::DLinear => ModelKind::DLinear,
            },
        }
    }

    /// Predicted next close as a single-element graph value.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        sample: &WindowSample,
        training: bool,
        rng: &mut RngStream,
    ) -> Result<Var, NumericError> {
        match self {
            Model::CryptoPulse(m) => {
                let opts = ForwardOptions {
                    training,
                    ..ForwardOptions::default()
                };
                Ok(m.forward(g, store, sample, opts, rng)?.pred)
            }
            Model::Baseline { net, variant } => net.forward(g, store, &baseline_input(sample, *variant)),
        }
    }

    pub fn predict(&self, store: &ParamStore, sample: &WindowSample) -> Result<PredictionRecord, NumericError> {
        match self {
            Model::CryptoPulse(m) => m.predict(store, sample, ForwardOptions::eval()),
            Model::Baseline { net, variant } => Ok(PredictionRecord {
                date: sample.target_date,
                p1: None,
                p2: None,
                kappa: None,
                gamma: None,
                pred: net.predict(store, &baseline_input(sample, *variant))?,
                truth: sample.target_close,
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_mse: f64,
}

pub fn write_epoch_log<W: Write>(log: &[EpochLog], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for e in log {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    /// Parameters of the best validation epoch.
    pub store: ParamStore,
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

fn diverged(epoch: usize) -> impl Fn(NumericError) -> TrainError {
    move |e| match e {
        NumericError::NonFinite { .. } => TrainError::Diverged {
            epoch,
            last_finite_epoch: epoch.checked_sub(1),
        },
        other => TrainError::Numeric(other),
    }
}

/// Mini-batch MSE training with Adam and per-epoch halving of the learning
/// rate. Returns the parameters of the epoch with the lowest validation MSE
/// (training loss when there is no validation section).
pub fn train(
    kind: ModelKind,
    variant: Variant,
    split: &DatasetSplit,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let first = split.train.first().ok_or(TrainError::EmptySection("train"))?;
    if first.window_len() != cfg.window || first.macro_count() != cfg.macro_count {
        return Err(TrainError::Config(format!(
            "data has L={} and n={}, config says L={} and n={}",
            first.window_len(),
            first.macro_count(),
            cfg.window,
            cfg.macro_count
        )));
    }
    let root = RngStream::new(seed);
    let mut init_rng = root.fork(1);
    let mut shuffle_rng = root.fork(2);
    let mut dropout_rng = root.fork(3);

    let mut store = ParamStore::new();
    let model = Model::build(kind, variant, cfg, &mut store, &mut init_rng)?;
    let adam = Adam::default();
    let n = split.train.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 0..cfg.epochs {
        let lr = learning_rate(cfg.lr0, epoch);
        let bad = diverged(epoch);
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut g = Graph::new();
            let mut preds = Vec::with_capacity(batch.len());
            let mut targets = Vec::with_capacity(batch.len());
            for &i in batch {
                let s = &split.train[i];
                preds.push(model.forward(&mut g, &store, s, true, &mut dropout_rng).map_err(&bad)?);
                targets.push(s.target_close);
            }
            let p = g.stack(&preds).map_err(&bad)?;
            let t = g.constant(Tensor::vector(targets)).map_err(&bad)?;
            let loss = g.mse(p, t).map_err(&bad)?;
            loss_sum += g.value(loss).item() * batch.len() as f64;
            g.backward(loss).map_err(&bad)?.accumulate(&g, &mut store, 1.0);
            adam.step(&mut store, lr);
            if !store.all_finite() {
                return Err(bad(NumericError::NonFinite { op: "adam" }));
            }
        }
        let train_loss = loss_sum / n as f64;
        let val_mse = if split.validation.is_empty() {
            train_loss
        } else {
            evaluate(&model, &store, &split.validation)
                .map_err(|e| match e {
                    TrainError::Numeric(e) => bad(e),
                    other => other,
                })?
                .0
                .mse
        };
        if !val_mse.is_finite() {
            return Err(bad(NumericError::NonFinite { op: "validation" }));
        }
        log::debug!("{kind}/{variant} seed {seed} epoch {epoch}: lr {lr:e} train {train_loss:.6} val {val_mse:.6}");
        log.push(EpochLog {
            epoch,
            lr,
            train_loss,
            val_mse,
        });
        if best.as_ref().is_none_or(|(b, _, _)| val_mse < *b) {
            best = Some((val_mse, epoch, store.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = epoch + 1 < cfg.epochs;
                break;
            }
        }
    }
    let (_, best_epoch, best_store) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        model,
        store: best_store,
        epochs: log,
        best_epoch,
        stopped_early,
    })
}

/// Metrics and per-sample predictions over one section.
pub fn evaluate(
    model: &Model,
    store: &ParamStore,
    samples: &[WindowSample],
) -> Result<(Metrics, Vec<PredictionRecord>), TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptySection("evaluation"));
    }
    let records = samples
        .iter()
        .map(|s| model.predict(store, s))
        .collect::<Result<Vec<_>, _>>()?;
    let m = records_metrics(&records)?;
    Ok((m, records))
}

pub fn records_metrics(records: &[PredictionRecord]) -> Result<Metrics, MetricsError> {
    let y: Vec<f64> = records.iter().map(|r| r.truth).collect();
    let y_hat: Vec<f64> = records.iter().map(|r| r.pred).collect();
    metrics(&y, &y_hat)
}

/// Metrics of predicting the last observed close.
pub fn persistence_metrics(samples: &[WindowSample]) -> Result<Metrics, MetricsError> {
    let y: Vec<f64> = samples.iter().map(|s| s.target_close).collect();
    let y_hat: Vec<f64> = samples.iter().map(|s| s.last_close).collect();
    metrics(&y, &y_hat)
}
