use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_cryptopulse");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("RUST_LOG")
        .env_remove("CRYPTOPULSE_EPOCHS")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn sinusoid(dir: &Path) -> PathBuf {
    ok(dir, &["synth", "--kind", "sinusoid", "--out", "data", "--days", "240"]);
    dir.join("data")
}

const QUICK: [&str; 4] = ["--epochs", "2", "--d-model", "8"];

fn train_args<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["train", "--data", "data", "--runs", "runs"];
    v.extend_from_slice(extra);
    v.extend_from_slice(&QUICK);
    v
}

#[test]
fn train_writes_a_complete_run_directory_and_skips_it_next_time() {
    let tmp = tempfile::tempdir().unwrap();
    sinusoid(tmp.path());
    let out = ok(tmp.path(), &train_args(&["--model", "cryptopulse", "--asset", "SIN", "--seed", "1"]));
    assert!(out.contains("done     cryptopulse SIN full seed1"), "{out}");
    let dir = tmp.path().join("runs/cryptopulse/SIN/full/seed1");
    for f in ["manifest.toml", "checkpoint.bin", "epochs.csv", "predictions.csv", "normalizer.json", "metrics.json"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let preds = fs::read_to_string(dir.join("predictions.csv")).unwrap();
    assert_eq!(preds.lines().next(), Some("date,p1,p2,kappa,gamma,pred,true"));
    let manifest = fs::read_to_string(dir.join("manifest.toml")).unwrap();
    assert!(manifest.contains("epochs = 2") && manifest.contains("d_model = 8"), "{manifest}");

    let again = ok(tmp.path(), &train_args(&["--model", "cryptopulse", "--asset", "SIN", "--seed", "1"]));
    assert!(again.contains("skipped"), "{again}");
    let forced = ok(tmp.path(), &train_args(&["--model", "cryptopulse", "--asset", "SIN", "--seed", "1", "--force"]));
    assert!(forced.contains("done"), "{forced}");
}

#[test]
fn manifest_reproduces_recorded_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    sinusoid(tmp.path());
    ok(tmp.path(), &train_args(&["--model", "dlinear", "--asset", "SIN", "--seed", "3"]));
    let dir = tmp.path().join("runs/dlinear/SIN/full/seed3");
    let out = ok(
        tmp.path(),
        &["train", "--manifest", dir.join("manifest.toml").to_str().unwrap(), "--out", "replay"],
    );
    assert!(out.contains("max |difference| from the recorded metrics: 0e0"), "{out}");
    assert_eq!(
        fs::read_to_string(dir.join("metrics.json")).unwrap(),
        fs::read_to_string(tmp.path().join("replay/metrics.json")).unwrap()
    );
}

#[test]
fn report_top_k_and_plots() {
    let tmp = tempfile::tempdir().unwrap();
    sinusoid(tmp.path());
    ok(tmp.path(), &train_args(&["--all", "--seeds", "0,1", "--model", "nlinear"]));
    ok(tmp.path(), &train_args(&["--model", "linear", "--asset", "SIN", "--seed", "0"]));
    let text = ok(tmp.path(), &["report", "--runs", "runs", "--top", "1"]);
    assert!(text.contains("top1"), "{text}");
    let csv = fs::read_to_string(tmp.path().join("runs/report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "asset,model,variant,MAE,MSE,CORR,MAE_std");
    assert_eq!(lines.len(), 1 + 2 + 2, "{csv}");
    assert!(lines.iter().any(|l| l.starts_with("top1,nlinear,full,")));

    let eval = ok(tmp.path(), &["evaluate", "--runs", "runs", "--model", "nlinear", "--section", "validation"]);
    assert_eq!(eval.lines().count(), 3, "{eval}");

    ok(tmp.path(), &["plot", "--runs", "runs", "--model", "nlinear", "--asset", "SIN", "--seed", "1", "--out", "plots"]);
    for f in ["nlinear_SIN_full_seed1.svg", "nlinear_SIN_full_seed1.csv", "mae_SIN.svg", "mae_SIN.csv"] {
        assert!(tmp.path().join("plots").join(f).is_file(), "missing {f}");
    }
    let svg = fs::read_to_string(tmp.path().join("plots/mae_SIN.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn config_precedence_flags_file_env() {
    let tmp = tempfile::tempdir().unwrap();
    sinusoid(tmp.path());
    fs::write(tmp.path().join("cfg.toml"), "epochs = 3\nbatch_size = 16\n").unwrap();
    let status = Command::new(BIN)
        .args([
            "train", "--data", "data", "--runs", "runs", "--model", "linear", "--asset", "SIN", "--seed", "0",
            "--config", "cfg.toml", "--epochs", "1",
        ])
        .current_dir(tmp.path())
        .env("CRYPTOPULSE_EPOCHS", "5")
        .env("CRYPTOPULSE_BATCH_SIZE", "8")
        .env("CRYPTOPULSE_PATIENCE", "7")
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let manifest = fs::read_to_string(tmp.path().join("runs/linear/SIN/full/seed0/manifest.toml")).unwrap();
    assert!(manifest.contains("epochs = 1"), "flag wins: {manifest}");
    assert!(manifest.contains("batch_size = 16"), "file beats env: {manifest}");
    assert!(manifest.contains("patience = 7"), "env beats default: {manifest}");
}

fn write_raw_prices(dir: &Path, symbols: &[&str], days: usize) {
    fs::create_dir_all(dir).unwrap();
    for (k, s) in symbols.iter().enumerate() {
        let mut text = String::from("Timestamp,Open,High,Low,Close,Volume\n");
        for d in 0..days {
            let close = 100.0 + k as f64 + (d as f64 * 0.3).sin() * 5.0;
            let date = chrono_like_date(d);
            text.push_str(&format!("{date},{},{},{},{close},\"1,000\"\n", close - 1.0, close + 2.0, close - 2.0));
        }
        fs::write(dir.join(format!("{}.csv", s.to_lowercase())), text).unwrap();
    }
}

fn chrono_like_date(d: usize) -> String {
    let month_days = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];
    let mut left = d;
    let mut month = 0;
    while left >= month_days[month] {
        left -= month_days[month];
        month += 1;
    }
    format!("2022-{:02}-{:02}", month + 1, left + 1)
}

#[test]
fn ingest_then_label_with_mock_client() {
    let tmp = tempfile::tempdir().unwrap();
    write_raw_prices(&tmp.path().join("raw"), &["BTC", "ETH", "SOL", "ADA", "XRP"], 60);
    fs::write(
        tmp.path().join("news.jsonl"),
        concat!(
            "{\"date\":\"2022-01-03\",\"title\":\"A\",\"content\":\"first\"}\n",
            "{\"date\":\"2022-01-03\",\"title\":\"B\",\"content\":\"second\"}\n",
            "{\"date\":\"2022-01-04\",\"title\":\"C\",\"content\":\"third\"}\n",
        ),
    )
    .unwrap();
    let out = ok(tmp.path(), &["ingest", "--prices", "raw", "--news", "news.jsonl", "--out", "data"]);
    assert!(out.contains("BTC: 60 days"), "{out}");
    let manifest = fs::read_to_string(tmp.path().join("data/manifest.toml")).unwrap();
    assert!(manifest.contains("ADA") && manifest.contains("XRP"), "{manifest}");

    let out = ok(tmp.path(), &["label-sentiment", "--data", "data", "--llm", "mock:neutral"]);
    assert!(out.contains("3 articles: 0 from cache, 3 newly labelled, 0 failed, 3 client calls"), "{out}");
    let cache = fs::read_to_string(tmp.path().join("data/sentiment/labels.csv")).unwrap();
    assert_eq!(cache.lines().count(), 4, "{cache}");
    assert_eq!(cache.matches(",neutral").count(), 3);

    let out = ok(tmp.path(), &["label-sentiment", "--data", "data", "--llm", "mock:positive"]);
    assert!(out.contains("3 from cache, 0 newly labelled, 0 failed, 0 client calls"), "{out}");
    assert_eq!(fs::read_to_string(tmp.path().join("data/sentiment/labels.csv")).unwrap(), cache);

    let rows = ok(tmp.path(), &["indicators", "--data", "data", "--asset", "BTC"]);
    assert!(rows.contains("BTC: 44 rows"), "{rows}");
}

#[test]
fn replay_client_with_missing_response_exits_external() {
    let tmp = tempfile::tempdir().unwrap();
    write_raw_prices(&tmp.path().join("raw"), &["A", "B"], 20);
    fs::write(tmp.path().join("news.jsonl"), "{\"date\":\"2022-01-03\",\"title\":\"A\",\"content\":\"x\"}\n").unwrap();
    ok(tmp.path(), &["ingest", "--prices", "raw", "--news", "news.jsonl", "--out", "data"]);
    fs::write(tmp.path().join("replay.jsonl"), "").unwrap();
    let out = run(tmp.path(), &["label-sentiment", "--data", "data", "--llm", "replay:replay.jsonl", "--max-attempts", "1"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn usage_and_data_errors_have_distinct_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    for sub in ["ingest", "indicators", "label-sentiment", "train", "evaluate", "ablate", "report", "plot", "synth"] {
        let help = run(tmp.path(), &[sub, "--help"]);
        assert!(help.status.success(), "{sub} --help");
        let bad = run(tmp.path(), &[sub, "--no-such-flag"]);
        assert_eq!(bad.status.code(), Some(2), "{sub} with an unknown flag");
    }
    let missing = run(tmp.path(), &["train", "--data", "nowhere", "--model", "linear", "--asset", "X"]);
    assert_eq!(missing.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&missing.stderr);
    assert!(stderr.starts_with("error: ") && stderr.lines().count() == 1, "{stderr}");
    let bad_variant = run(tmp.path(), &["train", "--data", "x", "--model", "linear", "--asset", "X", "--variant", "zz"]);
    assert_eq!(bad_variant.status.code(), Some(2));
    let bad_llm = run(tmp.path(), &["label-sentiment", "--data", ".", "--llm", "carrier-pigeon"]);
    assert_ne!(bad_llm.status.code(), Some(0));
}
