use std::collections::{BTreeMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Mutex};
use std::time::{Duration, Instant};

use chrono::NaiveDate;

use super::cache::{content_hash, LabelCache};
use super::client::{ChatClient, LabelRequest};
use super::prompt::{build_prompt, PromptConfig};
use super::{parse_label, SentimentError, SentimentLabel};
use crate::data::NewsArticle;

#[derive(Clone, Debug, PartialEq)]
pub struct LabelerConfig {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    pub workers: usize,
    /// Minimum spacing between request starts across all workers.
    pub min_request_interval: Duration,
}

impl Default for LabelerConfig {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(8),
            workers: 4,
            min_request_interval: Duration::from_millis(50),
        }
    }
}

impl LabelerConfig {
    /// No waiting at all; for mocks and tests.
    pub fn immediate() -> Self {
        Self {
            initial_backoff: Duration::ZERO,
            max_backoff: Duration::ZERO,
            min_request_interval: Duration::ZERO,
            ..Self::default()
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt.saturating_sub(1)).unwrap_or(u32::MAX);
        self.initial_backoff.saturating_mul(factor).min(self.max_backoff)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArticleOutcome {
    pub hash: String,
    pub date: NaiveDate,
    pub label: Option<SentimentLabel>,
    /// Client calls made for this article in this run; 0 on a cache hit.
    pub attempts: u32,
    pub cached: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabelingReport {
    /// One entry per input article, in input order.
    pub outcomes: Vec<ArticleOutcome>,
    pub client_calls: usize,
}

impl LabelingReport {
    pub fn failures(&self) -> impl Iterator<Item = &ArticleOutcome> {
        self.outcomes.iter().filter(|o| o.label.is_none())
    }

    pub fn failure_count(&self) -> usize {
        self.failures().count()
    }

    pub fn cache_hits(&self) -> usize {
        self.outcomes.iter().filter(|o| o.cached).count()
    }
}

struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    fn wait(&self) {
        if self.interval.is_zero() {
            return;
        }
        let slot = {
            let mut next = self.next.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot
        };
        let now = Instant::now();
        if slot > now {
            std::thread::sleep(slot - now);
        }
    }
}

struct Job<'a> {
    hash: String,
    article: &'a NewsArticle,
}

struct Done {
    hash: String,
    date: NaiveDate,
    result: Result<SentimentLabel, String>,
    attempts: u32,
}

fn label_one(
    job: &Job<'_>,
    prompt: &PromptConfig,
    client: &dyn ChatClient,
    limiter: &RateLimiter,
    cfg: &LabelerConfig,
    calls: &AtomicUsize,
) -> Done {
    let text = build_prompt(job.article, prompt);
    let mut attempts = 0;
    let mut last_error = String::new();
    while attempts < cfg.max_attempts.max(1) {
        if attempts > 0 {
            std::thread::sleep(cfg.backoff(attempts));
        }
        limiter.wait();
        attempts += 1;
        calls.fetch_add(1, Ordering::SeqCst);
        let response = client.complete(LabelRequest {
            hash: &job.hash,
            prompt: &text,
        });
        match response {
            Ok(r) => match parse_label(&r) {
                Ok(label) => {
                    return Done {
                        hash: job.hash.clone(),
                        date: job.article.date,
                        result: Ok(label),
                        attempts,
                    }
                }
                Err(e) => last_error = e.to_string(),
            },
            Err(e) => {
                last_error = e.to_string();
                if !e.is_retryable() {
                    break;
                }
            }
        }
        log::debug!("article {} attempt {attempts} failed: {last_error}", &job.hash[..12]);
    }
    log::warn!("article {} failed after {attempts} attempts: {last_error}", &job.hash[..12]);
    Done {
        hash: job.hash.clone(),
        date: job.article.date,
        result: Err(last_error),
        attempts,
    }
}

/// Labels every article, consulting and extending `cache`.
///
/// Articles already in the cache are not sent. Duplicate articles within
/// the input are sent once. Workers hand results to the calling thread,
/// which is the only writer to the cache.
pub fn label_articles(
    articles: &[NewsArticle],
    prompt: &PromptConfig,
    client: &dyn ChatClient,
    cache: &mut LabelCache,
    cfg: &LabelerConfig,
) -> Result<LabelingReport, SentimentError> {
    let hashes: Vec<String> = articles.iter().map(content_hash).collect();
    let mut seen = HashSet::new();
    let jobs: Vec<Job<'_>> = articles
        .iter()
        .zip(&hashes)
        .filter(|(_, h)| !cache.contains(h) && seen.insert((*h).clone()))
        .map(|(a, h)| Job {
            hash: h.clone(),
            article: a,
        })
        .collect();
    let pending: HashSet<&str> = jobs.iter().map(|j| j.hash.as_str()).collect();

    let calls = AtomicUsize::new(0);
    let next_job = AtomicUsize::new(0);
    let limiter = RateLimiter {
        interval: cfg.min_request_interval,
        next: Mutex::new(Instant::now()),
    };
    let mut done: BTreeMap<String, Done> = BTreeMap::new();
    let mut write_error = None;

    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<Done>();
        for _ in 0..cfg.workers.max(1).min(jobs.len().max(1)) {
            let tx = tx.clone();
            let (jobs, next_job, limiter, calls) = (&jobs, &next_job, &limiter, &calls);
            scope.spawn(move || loop {
                let i = next_job.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(i) else { break };
                if tx.send(label_one(job, prompt, client, limiter, cfg, calls)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for d in rx {
            if let (Ok(label), None) = (&d.result, &write_error) {
                if let Err(e) = cache.insert(&d.hash, d.date, *label) {
                    write_error = Some(e);
                }
            }
            done.insert(d.hash.clone(), d);
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }

    let mut reported = HashSet::new();
    let outcomes = articles
        .iter()
        .zip(&hashes)
        .map(|(a, h)| {
            let first = reported.insert(h.clone());
            match done.get(h) {
                Some(d) if pending.contains(h.as_str()) => ArticleOutcome {
                    hash: h.clone(),
                    date: a.date,
                    label: d.result.as_ref().ok().copied(),
                    attempts: if first { d.attempts } else { 0 },
                    cached: !first && d.result.is_ok(),
                    error: d.result.as_ref().err().cloned(),
                },
                _ => ArticleOutcome {
                    hash: h.clone(),
                    date: a.date,
                    label: cache.get(h),
                    attempts: 0,
                    cached: true,
                    error: None,
                },
            }
        })
        .collect();
    Ok(LabelingReport {
        outcomes,
        client_calls: calls.load(Ordering::SeqCst),
    })
}

/// Groups successful labels by article date.
pub fn labels_by_day(report: &LabelingReport) -> BTreeMap<NaiveDate, Vec<SentimentLabel>> {
    let mut map: BTreeMap<NaiveDate, Vec<SentimentLabel>> = BTreeMap::new();
    for o in &report.outcomes {
        if let Some(l) = o.label {
            map.entry(o.date).or_default().push(l);
        }
    }
    map
}
