use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::data::{DatasetLayout, DatasetSplit};
use crate::model::write_predictions_csv;
use crate::numeric::save as save_checkpoint;
use crate::Variant;

use super::{
    evaluate, load_prepared, train, write_epoch_log, Metrics, ModelKind, PreparedDataset, TrainConfig, TrainError,
    TrainOutcome,
};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const EPOCH_LOG_FILE: &str = "epochs.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const NORMALIZER_FILE: &str = "normalizer.json";
/// Written last; its presence marks a completed run.
pub const METRICS_FILE: &str = "metrics.json";

/// One (model, asset, variant, seed) cell.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RunSpec {
    pub model: ModelKind,
    pub asset: String,
    pub variant: Variant,
    pub seed: u64,
}

impl RunSpec {
    /// Every combination, in model, asset, variant, seed order.
    pub fn grid(models: &[ModelKind], assets: &[String], variants: &[Variant], seeds: &[u64]) -> Vec<RunSpec> {
        let mut out = Vec::new();
        for &model in models {
            for asset in assets {
                for &variant in variants {
                    for &seed in seeds {
                        out.push(RunSpec {
                            model,
                            asset: asset.clone(),
                            variant,
                            seed,
                        });
                    }
                }
            }
        }
        out
    }
}

/// `<root>/<model>/<asset>/<variant>/seed<k>`
pub fn run_dir(root: &Path, spec: &RunSpec) -> PathBuf {
    root.join(spec.model.as_str())
        .join(&spec.asset)
        .join(spec.variant.as_str())
        .join(format!("seed{}", spec.seed))
}

/// Everything needed to repeat a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub model: ModelKind,
    pub asset: String,
    pub variant: Variant,
    pub seed: u64,
    /// Dataset directory.
    pub dataset: PathBuf,
    pub macro_symbols: Vec<String>,
    /// Assets pooled into one training set; empty for per-asset training.
    #[serde(default)]
    pub shared_assets: Vec<String>,
    pub version: String,
    pub config: TrainConfig,
}

impl RunManifest {
    pub fn spec(&self) -> RunSpec {
        RunSpec {
            model: self.model,
            asset: self.asset.clone(),
            variant: self.variant,
            seed: self.seed,
        }
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = fs::read_to_string(path).map_err(io(path))?;
        toml::from_str(&text).map_err(|e| TrainError::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let text = toml::to_string(self).map_err(|e| TrainError::Config(e.to_string()))?;
        fs::write(path, text).map_err(io(path))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct RunMetrics {
    validation: Option<Metrics>,
    test: Metrics,
    best_epoch: usize,
    epochs_run: usize,
    stopped_early: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub manifest: RunManifest,
    pub validation: Option<Metrics>,
    pub test: Metrics,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunStatus {
    Completed(RunResult),
    /// Already complete on disk and not forced.
    Skipped(RunResult),
    Failed(String),
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> TrainError + '_ {
    move |e| TrainError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Reads a completed run; `None` when the directory holds no finished run.
pub fn load_run_result(dir: &Path) -> Result<Option<RunResult>, TrainError> {
    let metrics_path = dir.join(METRICS_FILE);
    if !metrics_path.exists() {
        return Ok(None);
    }
    let manifest = RunManifest::load(&dir.join(MANIFEST_FILE))?;
    let text = fs::read_to_string(&metrics_path).map_err(io(&metrics_path))?;
    let m: RunMetrics = serde_json::from_str(&text)
        .map_err(|e| TrainError::Config(format!("{}: {e}", metrics_path.display())))?;
    Ok(Some(RunResult {
        manifest,
        validation: m.validation,
        test: m.test,
        best_epoch: m.best_epoch,
        epochs_run: m.epochs_run,
        stopped_early: m.stopped_early,
    }))
}

/// Every completed run below `root`, sorted by spec.
pub fn collect_results(root: &Path) -> Result<Vec<RunResult>, TrainError> {
    let mut out = Vec::new();
    if !root.exists() {
        return Ok(out);
    }
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        if dir.join(METRICS_FILE).exists() {
            if let Some(r) = load_run_result(&dir)? {
                out.push(r);
            }
            continue;
        }
        for entry in fs::read_dir(&dir).map_err(io(&dir))? {
            let entry = entry.map_err(io(&dir))?;
            if entry.file_type().map_err(io(&dir))?.is_dir() {
                stack.push(entry.path());
            }
        }
    }
    out.sort_by_key(|r| r.manifest.spec());
    Ok(out)
}

/// Writes the outcome of a trained model evaluated on `eval` into `dir`.
fn record(
    manifest: &RunManifest,
    outcome: &TrainOutcome,
    eval: &PreparedDataset,
    dir: &Path,
) -> Result<RunResult, TrainError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let stale = dir.join(METRICS_FILE);
    if stale.exists() {
        fs::remove_file(&stale).map_err(io(&stale))?;
    }
    manifest.save(&dir.join(MANIFEST_FILE))?;
    save_checkpoint(&outcome.store, &dir.join(CHECKPOINT_FILE))?;
    let log_path = dir.join(EPOCH_LOG_FILE);
    let f = fs::File::create(&log_path).map_err(io(&log_path))?;
    write_epoch_log(&outcome.epochs, f).map_err(|e| TrainError::Io {
        path: log_path.display().to_string(),
        message: e.to_string(),
    })?;
    let norm_path = dir.join(NORMALIZER_FILE);
    let text = serde_json::to_string_pretty(&eval.normalizer).expect("normalizer serialises");
    fs::write(&norm_path, text).map_err(io(&norm_path))?;

    let validation = if eval.split.validation.is_empty() {
        None
    } else {
        Some(evaluate(&outcome.model, &outcome.store, &eval.split.validation)?.0)
    };
    let (test, records) = evaluate(&outcome.model, &outcome.store, &eval.split.test)?;
    let pred_path = dir.join(PREDICTIONS_FILE);
    let f = fs::File::create(&pred_path).map_err(io(&pred_path))?;
    write_predictions_csv(&records, f).map_err(|e| TrainError::Io {
        path: pred_path.display().to_string(),
        message: e.to_string(),
    })?;
    let metrics = RunMetrics {
        validation,
        test,
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.epochs.len(),
        stopped_early: outcome.stopped_early,
    };
    let text = serde_json::to_string_pretty(&metrics).expect("metrics serialise");
    fs::write(&stale, text).map_err(io(&stale))?;
    Ok(RunResult {
        manifest: manifest.clone(),
        validation,
        test,
        best_epoch: metrics.best_epoch,
        epochs_run: metrics.epochs_run,
        stopped_early: metrics.stopped_early,
    })
}

fn pooled(datasets: &[&PreparedDataset]) -> DatasetSplit {
    let mut out = DatasetSplit::default();
    for d in datasets {
        out.train.extend(d.split.train.iter().cloned());
        out.validation.extend(d.split.validation.iter().cloned());
    }
    out
}

/// Trains the run a manifest describes and records it in `dir`.
///
/// The dataset is reloaded from the manifest's path, so a manifest alone is
/// enough to repeat a run.
pub fn train_and_record(manifest: &RunManifest, dir: &Path) -> Result<RunResult, TrainError> {
    let layout = DatasetLayout::new(&manifest.dataset);
    let ds_manifest = layout.read_manifest()?;
    let assets = if manifest.shared_assets.is_empty() {
        vec![manifest.asset.clone()]
    } else {
        manifest.shared_assets.clone()
    };
    let mut datasets = Vec::with_capacity(assets.len());
    for a in &assets {
        let mut m = ds_manifest.clone();
        // the run's own macro list wins over the current dataset manifest
        if *a == manifest.asset {
            m.macro_symbols = manifest.macro_symbols.clone();
            m.exclude_target_from_macro = false;
        }
        datasets.push(load_prepared(&layout, &m, a, &manifest.config)?);
    }
    let refs: Vec<&PreparedDataset> = datasets.iter().collect();
    let split = pooled(&refs);
    let outcome = train(manifest.model, manifest.variant, &split, &manifest.config, manifest.seed)?;
    let eval = datasets
        .iter()
        .find(|d| d.symbol == manifest.asset)
        .expect("run asset is prepared");
    record(manifest, &outcome, eval, dir)
}

/// Options of a batch of runs.
#[derive(Clone, Debug)]
pub struct BatchOptions {
    pub force: bool,
    pub workers: usize,
    /// Train one model per (model, variant, seed) over all requested assets.
    pub shared: bool,
}

/// Runs every spec against the dataset at `layout`, writing under `runs_root`.
///
/// Completed run directories are skipped unless `force` is set. Results come
/// back in input order.
pub fn execute_runs(
    specs: &[RunSpec],
    layout: &DatasetLayout,
    cfg: &TrainConfig,
    runs_root: &Path,
    opts: &BatchOptions,
) -> Result<Vec<(RunSpec, RunStatus)>, TrainError> {
    let ds_manifest = layout.read_manifest()?;
    ds_manifest.validate()?;
    let dataset_path = fs::canonicalize(&layout.root).map_err(io(&layout.root))?;

    let mut assets: Vec<String> = Vec::new();
    for s in specs {
        if !assets.contains(&s.asset) {
            assets.push(s.asset.clone());
        }
    }
    let manifest_for = |spec: &RunSpec| -> RunManifest {
        let macro_symbols = ds_manifest.macro_for(&spec.asset);
        RunManifest {
            model: spec.model,
            asset: spec.asset.clone(),
            variant: spec.variant,
            seed: spec.seed,
            dataset: dataset_path.clone(),
            config: TrainConfig {
                window: ds_manifest.window_length,
                macro_count: macro_symbols.len(),
                ..cfg.clone()
            },
            macro_symbols,
            shared_assets: if opts.shared { assets.clone() } else { Vec::new() },
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    };

    // group specs that share one training run
    let mut groups: BTreeMap<(ModelKind, Variant, u64, String), Vec<usize>> = BTreeMap::new();
    for (i, s) in specs.iter().enumerate() {
        let key_asset = if opts.shared { String::new() } else { s.asset.clone() };
        groups.entry((s.model, s.variant, s.seed, key_asset)).or_default().push(i);
    }
    let mut pending: Vec<Vec<usize>> = Vec::new();
    let mut status: Vec<Option<RunStatus>> = vec![None; specs.len()];
    for members in groups.into_values() {
        let mut todo = false;
        for &i in &members {
            match (opts.force, load_run_result(&run_dir(runs_root, &specs[i]))) {
                (false, Ok(Some(r))) if r.manifest == manifest_for(&specs[i]) => {
                    status[i] = Some(RunStatus::Skipped(r));
                }
                _ => todo = true,
            }
        }
        if todo {
            pending.push(members);
        }
    }

    let mut datasets: BTreeMap<String, PreparedDataset> = BTreeMap::new();
    let needed: Vec<&String> = if opts.shared {
        if pending.is_empty() {
            Vec::new()
        } else {
            assets.iter().collect()
        }
    } else {
        pending.iter().flatten().map(|&i| &specs[i].asset).collect()
    };
    for a in needed {
        if datasets.contains_key(a) {
            continue;
        }
        let m = manifest_for(&RunSpec {
            model: ModelKind::Linear,
            asset: a.clone(),
            variant: Variant::Full,
            seed: 0,
        });
        match load_prepared(layout, &ds_manifest, a, &m.config) {
            Ok(d) => {
                datasets.insert(a.clone(), d);
            }
            Err(e) => {
                log::error!("{a}: {e}");
                return Err(e);
            }
        }
    }

    let next = AtomicUsize::new(0);
    let results = Mutex::new(status);
    let workers = opts.workers.max(1).min(pending.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let job = next.fetch_add(1, Ordering::SeqCst);
                let Some(members) = pending.get(job) else { break };
                let first = &specs[members[0]];
                let train_assets: Vec<&PreparedDataset> = if opts.shared {
                    assets.iter().map(|a| &datasets[a]).collect()
                } else {
                    vec![&datasets[&first.asset]]
                };
                let m0 = manifest_for(first);
                log::info!("training {} {} {} seed {}", first.model, first.asset, first.variant, first.seed);
                let outcome = train(first.model, first.variant, &pooled(&train_assets), &m0.config, first.seed);
                for &i in members {
                    let spec = &specs[i];
                    let st = match &outcome {
                        Err(e) => RunStatus::Failed(e.to_string()),
                        Ok(o) => match record(&manifest_for(spec), o, &datasets[&spec.asset], &run_dir(runs_root, spec)) {
                            Ok(r) => RunStatus::Completed(r),
                            Err(e) => RunStatus::Failed(e.to_string()),
                        },
                    };
                    if let RunStatus::Failed(msg) = &st {
                        log::error!("{} {} {} seed {}: {msg}", spec.model, spec.asset, spec.variant, spec.seed);
                    }
                    results.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(st);
                }
            });
        }
    });
    let status = results.into_inner().unwrap_or_else(|e| e.into_inner());
    Ok(specs
        .iter()
        .cloned()
        .zip(status.into_iter().map(|s| s.expect("every spec resolved")))
        .collect())
}

/// Which section of a split to score.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Section {
    Train,
    Validation,
    Test,
}

impl std::str::FromStr for Section {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Self::Train),
            "validation" | "val" => Ok(Self::Validation),
            "test" => Ok(Self::Test),
            other => Err(format!("unknown section {other:?} (expected train, validation or test)")),
        }
    }
}

/// Rebuilds a recorded run from its manifest and checkpoint and scores it
/// on one section of its dataset.
pub fn evaluate_run(dir: &Path, section: Section) -> Result<(Metrics, Vec<crate::model::PredictionRecord>), TrainError> {
    let manifest = RunManifest::load(&dir.join(MANIFEST_FILE))?;
    let layout = DatasetLayout::new(&manifest.dataset);
    let mut ds_manifest = layout.read_manifest()?;
    ds_manifest.macro_symbols = manifest.macro_symbols.clone();
    ds_manifest.exclude_target_from_macro = false;
    let data = load_prepared(&layout, &ds_manifest, &manifest.asset, &manifest.config)?;
    let mut store = crate::numeric::ParamStore::new();
    let mut rng = crate::numeric::RngStream::new(0);
    let model = super::Model::build(manifest.model, manifest.variant, &manifest.config, &mut store, &mut rng)?;
    crate::numeric::load_into(&mut store, &dir.join(CHECKPOINT_FILE))?;
    let samples = match section {
        Section::Train => &data.split.train,
        Section::Validation => &data.split.validation,
        Section::Test => &data.split.test,
    };
    evaluate(&model, &store, samples)
}
