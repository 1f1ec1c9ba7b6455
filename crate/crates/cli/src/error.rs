use std::fmt;

use cryptopulse::data::DataError;
use cryptopulse::indicators::IndicatorError;
use cryptopulse::numeric::NumericError;
use cryptopulse::sentiment::SentimentError;
use cryptopulse::synthetic::WriteError;
use cryptopulse::train::TrainError;

pub const USAGE: u8 = 2;
pub const DATA: u8 = 3;
pub const EXTERNAL: u8 = 4;
pub const NUMERIC: u8 = 5;

/// A failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(USAGE, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(DATA, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // keep the cause on one line
        f.write_str(&self.message.replace('\n', " "))
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        Self::data(e.to_string())
    }
}

impl From<IndicatorError> for CliError {
    fn from(e: IndicatorError) -> Self {
        Self::data(e.to_string())
    }
}

impl From<NumericError> for CliError {
    fn from(e: NumericError) -> Self {
        match e {
            NumericError::Io(_) | NumericError::Checkpoint(_) => Self::data(e.to_string()),
            _ => Self::new(NUMERIC, e.to_string()),
        }
    }
}

impl From<SentimentError> for CliError {
    fn from(e: SentimentError) -> Self {
        match e {
            SentimentError::Client(_) => Self::new(EXTERNAL, e.to_string()),
            SentimentError::Config(_) => Self::usage(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<WriteError> for CliError {
    fn from(e: WriteError) -> Self {
        Self::data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => Self::usage(e.to_string()),
            TrainError::Sentiment(s) => s.into(),
            TrainError::Numeric(n) => n.into(),
            TrainError::Diverged { .. } | TrainError::Metrics(_) => Self::new(NUMERIC, e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::data(e.to_string())
    }
}
