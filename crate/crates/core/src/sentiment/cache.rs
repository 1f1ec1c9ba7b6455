use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use sha2::{Digest, Sha256};

use super::prompt::TEMPLATE_VERSION;
use super::{SentimentError, SentimentLabel};
use crate::data::{parse_date, NewsArticle};

/// SHA-256 over title, content and the prompt template version, hex encoded.
pub fn content_hash(article: &NewsArticle) -> String {
    let mut h = Sha256::new();
    h.update(article.title.as_bytes());
    h.update(b"\n");
    h.update(article.content.as_bytes());
    h.update(b"\n");
    h.update(TEMPLATE_VERSION.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Persistent `hash,date,label` CSV of article labels.
///
/// New entries are appended to the file as they are inserted, so an
/// interrupted labelling run keeps everything it finished.
#[derive(Debug, Default)]
pub struct LabelCache {
    path: Option<PathBuf>,
    entries: BTreeMap<String, (NaiveDate, SentimentLabel)>,
}

impl LabelCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens the cache at `path`; a missing file is an empty cache.
    pub fn open(path: &Path) -> Result<Self, SentimentError> {
        let mut cache = Self {
            path: Some(path.to_path_buf()),
            entries: BTreeMap::new(),
        };
        if !path.exists() {
            return Ok(cache);
        }
        let fail = |message: String| SentimentError::Cache {
            path: path.display().to_string(),
            message,
        };
        let mut rdr = csv::Reader::from_path(path).map_err(|e| fail(e.to_string()))?;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| fail(e.to_string()))?;
            if rec.len() != 3 {
                return Err(fail(format!("expected 3 fields, got {}", rec.len())));
            }
            let date = parse_date(&rec[1]).map_err(fail)?;
            let label = super::parse_label(&rec[2]).map_err(|e| fail(e.to_string()))?;
            cache.entries.insert(rec[0].to_string(), (date, label));
        }
        Ok(cache)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, hash: &str) -> Option<SentimentLabel> {
        self.entries.get(hash).map(|(_, l)| *l)
    }

    pub fn contains(&self, hash: &str) -> bool {
        self.entries.contains_key(hash)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, NaiveDate, SentimentLabel)> {
        self.entries.iter().map(|(h, (d, l))| (h.as_str(), *d, *l))
    }

    /// Records a label. Existing hashes are left untouched.
    pub fn insert(&mut self, hash: &str, date: NaiveDate, label: SentimentLabel) -> Result<bool, SentimentError> {
        if self.entries.contains_key(hash) {
            return Ok(false);
        }
        if let Some(path) = &self.path {
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            if fresh {
                writeln!(f, "hash,date,label")?;
            }
            writeln!(f, "{hash},{},{label}", date.format("%Y-%m-%d"))?;
        }
        self.entries.insert(hash.to_string(), (date, label));
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn art(title: &str) -> NewsArticle {
        NewsArticle {
            date: NaiveDate::from_ymd_opt(2022, 3, 4).unwrap(),
            title: title.into(),
            content: "body".into(),
        }
    }

    #[test]
    fn hash_depends_on_text_only() {
        let a = art("x");
        let mut b = art("x");
        b.date = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        assert_eq!(content_hash(&a), content_hash(&b));
        assert_ne!(content_hash(&a), content_hash(&art("y")));
        assert_eq!(content_hash(&a).len(), 64);
    }

    #[test]
    fn persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sentiment").join("labels.csv");
        let mut c = LabelCache::open(&path).unwrap();
        let a = art("x");
        assert!(c.insert(&content_hash(&a), a.date, SentimentLabel::Positive).unwrap());
        assert!(!c.insert(&content_hash(&a), a.date, SentimentLabel::Negative).unwrap());
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("hash,date,label\n"));
        assert!(text.trim_end().ends_with(",2022-03-04,positive"));
        let reloaded = LabelCache::open(&path).unwrap();
        assert_eq!(reloaded.get(&content_hash(&a)), Some(SentimentLabel::Positive));
        assert_eq!(reloaded.len(), 1);
    }
}
