//! Next-day cryptocurrency closing-price forecasting.
//!
//! The crate covers the whole pipeline: OHLCV and news ingestion, technical
//! indicators, LLM-labelled news sentiment, a small reverse-mode
//! differentiation engine, the dual-prediction forecaster with its linear
//! baselines, and the training / evaluation / ablation harness.

pub mod data;
pub mod indicators;
pub mod numeric;
pub mod sentiment;

pub mod baselines;
pub mod embedding;
pub mod model;
pub mod synthetic;
pub mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Feature-set variant used by the ablation study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Prices, indicators and sentiment.
    Full,
    /// Sentiment removed.
    Xs,
    /// Technical indicators removed.
    Xi,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Self::Full, Self::Xs, Self::Xi];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::Xs => "xs",
            Self::Xi => "xi",
        }
    }

    pub fn uses_sentiment(self) -> bool {
        self != Self::Xs
    }

    pub fn uses_indicators(self) -> bool {
        self != Self::Xi
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Self::Full),
            "xs" => Ok(Self::Xs),
            "xi" => Ok(Self::Xi),
            other => Err(format!("unknown variant {other:?} (expected full, xs or xi)")),
        }
    }
}
