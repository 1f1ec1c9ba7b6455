//! News sentiment: few-shot prompt construction, label parsing, a cached
//! labelling loop over a pluggable chat-completion client, and daily
//! aggregation into a bounded scalar series.

mod cache;
mod client;
mod labeler;
mod prompt;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use cache::{content_hash, LabelCache};
pub use client::{
    chat_request_body, extract_chat_response, ChatClient, ClientError, HttpChatClient, LabelRequest, LlmSettings,
    MockClient, ReplayClient,
};
pub use labeler::{label_articles, labels_by_day, ArticleOutcome, LabelerConfig, LabelingReport};
pub use prompt::{
    build_prompt, count_template_blocks, default_example_bank, load_example_bank, write_example_bank, FewShotExample,
    PromptConfig, TEMPLATE_VERSION,
};

#[derive(Debug, thiserror::Error)]
pub enum SentimentError {
    #[error("unparseable response: {0:?}")]
    Unparseable(String),
    #[error("prompt config: {0}")]
    Config(String),
    #[error("label cache {path}: {message}")]
    Cache { path: String, message: String },
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentLabel {
    Negative,
    Neutral,
    Positive,
}

impl SentimentLabel {
    /// Listing order used in prompts.
    pub const ALL: [SentimentLabel; 3] = [Self::Negative, Self::Positive, Self::Neutral];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Negative => "negative",
            Self::Neutral => "neutral",
            Self::Positive => "positive",
        }
    }

    /// Ordinal encoding: negative → −1, neutral → 0, positive → +1.
    pub fn score(self) -> f64 {
        match self {
            Self::Negative => -1.0,
            Self::Neutral => 0.0,
            Self::Positive => 1.0,
        }
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SentimentLabel {
    type Err = SentimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_label(s)
    }
}

/// Reads a label out of a model response.
///
/// Matching is case-insensitive and ignores surrounding whitespace and
/// punctuation. A response naming no label, or two different labels, is an
/// error.
pub fn parse_label(response: &str) -> Result<SentimentLabel, SentimentError> {
    let mut found: Option<SentimentLabel> = None;
    for token in response
        .split(|c: char| !c.is_alphabetic())
        .filter(|t| !t.is_empty())
    {
        let lower = token.to_lowercase();
        let label = match lower.as_str() {
            "negative" => SentimentLabel::Negative,
            "neutral" => SentimentLabel::Neutral,
            "positive" => SentimentLabel::Positive,
            _ => continue,
        };
        match found {
            Some(prev) if prev != label => return Err(SentimentError::Unparseable(response.to_string())),
            _ => found = Some(label),
        }
    }
    found.ok_or_else(|| SentimentError::Unparseable(response.to_string()))
}

/// Per-day sentiment in `[-1, 1]`; days without news read as 0.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SentimentSeries {
    days: BTreeMap<NaiveDate, f64>,
}

impl SentimentSeries {
    /// Builds a series, rejecting values outside `[-1, 1]`.
    pub fn from_values(days: BTreeMap<NaiveDate, f64>) -> Result<Self, SentimentError> {
        if let Some((d, v)) = days.iter().find(|(_, v)| !(-1.0..=1.0).contains(*v)) {
            return Err(SentimentError::Config(format!("sentiment {v} on {d} outside [-1, 1]")));
        }
        Ok(Self { days })
    }

    pub fn value(&self, date: NaiveDate) -> f64 {
        self.days.get(&date).copied().unwrap_or(0.0)
    }

    pub fn days(&self) -> &BTreeMap<NaiveDate, f64> {
        &self.days
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }
}

/// Mean label score per day.
pub fn daily_sentiment(labels: &BTreeMap<NaiveDate, Vec<SentimentLabel>>) -> SentimentSeries {
    let days = labels
        .iter()
        .filter(|(_, l)| !l.is_empty())
        .map(|(d, l)| (*d, l.iter().map(|x| x.score()).sum::<f64>() / l.len() as f64))
        .collect();
    SentimentSeries { days }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_label_cases() {
        assert_eq!(parse_label("positive").unwrap(), SentimentLabel::Positive);
        assert_eq!(parse_label(" Negative.\n").unwrap(), SentimentLabel::Negative);
        assert_eq!(parse_label("\"NEUTRAL\"").unwrap(), SentimentLabel::Neutral);
        assert!(matches!(parse_label("the movie is good"), Err(SentimentError::Unparseable(_))));
        assert!(parse_label("positive or negative").is_err());
        assert!(parse_label("").is_err());
    }

    fn d(i: u64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2021, 1, 1).unwrap() + chrono::Days::new(i)
    }

    #[test]
    fn daily_mean_and_missing_days() {
        use SentimentLabel::*;
        let mut m = BTreeMap::new();
        m.insert(d(0), vec![Positive, Positive, Negative]);
        m.insert(d(1), vec![Neutral, Neutral]);
        let s = daily_sentiment(&m);
        assert!((s.value(d(0)) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.value(d(1)), 0.0);
        assert_eq!(s.value(d(5)), 0.0);
    }

    fn label_strategy() -> impl Strategy<Value = SentimentLabel> {
        prop_oneof![
            Just(SentimentLabel::Negative),
            Just(SentimentLabel::Neutral),
            Just(SentimentLabel::Positive)
        ]
    }

    proptest! {
        #[test]
        fn daily_values_bounded_and_order_free(mut labels in proptest::collection::vec(label_strategy(), 1..40)) {
            let mut m = BTreeMap::new();
            m.insert(d(0), labels.clone());
            let v = daily_sentiment(&m).value(d(0));
            prop_assert!((-1.0..=1.0).contains(&v));
            labels.reverse();
            let half = labels.len() / 2;
            labels.rotate_left(half);
            m.insert(d(0), labels);
            prop_assert!((daily_sentiment(&m).value(d(0)) - v).abs() < 1e-12);
        }
    }
}
