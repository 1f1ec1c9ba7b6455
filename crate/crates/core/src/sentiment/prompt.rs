use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SentimentError, SentimentLabel};
use crate::data::NewsArticle;

/// Bumped whenever the prompt text changes; part of the label-cache key.
pub const TEMPLATE_VERSION: &str = "think-tank-v1";

/// One labelled few-shot example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub label: SentimentLabel,
    pub text: String,
    #[serde(default)]
    pub synthetic: bool,
}

/// Trader count `m`, shots per label `k`, and the example bank.
#[derive(Clone, Debug, PartialEq)]
pub struct PromptConfig {
    pub traders: usize,
    pub shots: usize,
    examples: Vec<FewShotExample>,
}

impl PromptConfig {
    /// Uses the first `shots` examples of each label from `bank`.
    pub fn new(traders: usize, shots: usize, bank: &[FewShotExample]) -> Result<Self, SentimentError> {
        if traders == 0 {
            return Err(SentimentError::Config("trader count must be at least 1".into()));
        }
        let mut examples = Vec::with_capacity(3 * shots);
        for label in SentimentLabel::ALL {
            let of_label: Vec<_> = bank.iter().filter(|e| e.label == label).take(shots).cloned().collect();
            if of_label.len() < shots {
                return Err(SentimentError::Config(format!(
                    "example bank has {} {label} examples, {shots} needed",
                    of_label.len()
                )));
            }
            examples.extend(of_label);
        }
        Ok(Self {
            traders,
            shots,
            examples,
        })
    }

    pub fn examples(&self) -> &[FewShotExample] {
        &self.examples
    }

    fn example(&self, label: SentimentLabel, i: usize) -> &FewShotExample {
        self.examples.iter().filter(|e| e.label == label).nth(i).expect("validated")
    }
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self::new(3, 1, &default_example_bank()).expect("default bank")
    }
}

fn instruction(traders: usize) -> String {
    format!(
        "{traders} different cryptocurrency traders are reading this news. Each trader will assign a sentiment \
         label from [\"negative\", \"positive\", \"neutral\"]. Then, each trader will share their label with the \
         group. The majority label will be accepted. Return the majority label without any other text. The news is "
    )
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Title and body as a single whitespace-normalised line.
pub fn news_text(article: &NewsArticle) -> String {
    let title = one_line(&article.title);
    let body = one_line(&article.content);
    match (title.is_empty(), body.is_empty()) {
        (true, _) => body,
        (_, true) => title,
        _ => format!("{title} {body}"),
    }
}

fn block(traders: usize, news: &str, label: Option<SentimentLabel>) -> String {
    let label = label.map(|l| format!(" {l}")).unwrap_or_default();
    format!("{}{} Label:{}", instruction(traders), one_line(news), label)
}

/// The few-shot prompt: `3·k` labelled example blocks, cycling through the
/// labels, followed by the query block with an empty label slot.
pub fn build_prompt(article: &NewsArticle, config: &PromptConfig) -> String {
    let mut blocks = Vec::with_capacity(3 * config.shots + 1);
    for i in 0..config.shots {
        for label in SentimentLabel::ALL {
            let ex = config.example(label, i);
            blocks.push(block(config.traders, &ex.text, Some(label)));
        }
    }
    blocks.push(block(config.traders, &news_text(article), None));
    blocks.join("\n\n")
}

/// Number of complete instruction blocks for `traders` in `prompt`.
pub fn count_template_blocks(prompt: &str, traders: usize) -> usize {
    prompt.matches(&instruction(traders)).count()
}

/// Built-in example bank: three hand-written synthetic headlines per label.
pub fn default_example_bank() -> Vec<FewShotExample> {
    let raw = [
        (SentimentLabel::Negative, "Major exchange halts withdrawals after a security breach drains hot wallets; regulators open an investigation."),
        (SentimentLabel::Positive, "Large asset manager receives approval for a spot crypto fund, opening the door to institutional inflows."),
        (SentimentLabel::Neutral, "Blockchain foundation publishes its quarterly developer report and schedules a community call."),
        (SentimentLabel::Negative, "Stablecoin briefly loses its dollar peg as redemptions spike, triggering liquidations across lending protocols."),
        (SentimentLabel::Positive, "Network upgrade cuts transaction fees sharply and daily active addresses reach a new record."),
        (SentimentLabel::Neutral, "Exchange announces scheduled maintenance window for its API next Tuesday."),
        (SentimentLabel::Negative, "Government proposes a ban on crypto mining citing energy concerns; miners warn of relocation."),
        (SentimentLabel::Positive, "Global payments company adds crypto checkout for millions of merchants."),
        (SentimentLabel::Neutral, "Industry conference releases its speaker lineup for the autumn summit."),
    ];
    raw.into_iter()
        .map(|(label, text)| FewShotExample {
            label,
            text: format!("[synthetic] {text}"),
            synthetic: true,
        })
        .collect()
}

pub fn load_example_bank(path: &Path) -> Result<Vec<FewShotExample>, SentimentError> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| SentimentError::Config(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

pub fn write_example_bank<W: Write>(bank: &[FewShotExample], mut out: W) -> std::io::Result<()> {
    for e in bank {
        writeln!(out, "{}", serde_json::to_string(e).expect("serializable"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn article(content: &str) -> NewsArticle {
        NewsArticle {
            date: NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(),
            title: "Headline".into(),
            content: content.into(),
        }
    }

    #[test]
    fn three_traders_one_shot() {
        let cfg = PromptConfig::new(3, 1, &default_example_bank()).unwrap();
        let p = build_prompt(&article("Bitcoin rallies."), &cfg);
        assert_eq!(p.matches("3 different cryptocurrency traders are reading this news").count(), 4);
        assert_eq!(p.matches("Return the majority label without any other text").count(), 4);
        assert!(p.ends_with("The news is Headline Bitcoin rallies. Label:"));
        assert!(p.contains("Label: negative\n\n"));
    }

    #[test]
    fn zero_shots_has_one_block() {
        let cfg = PromptConfig::new(3, 0, &[]).unwrap();
        let p = build_prompt(&article("x"), &cfg);
        assert_eq!(count_template_blocks(&p, 3), 1);
    }

    #[test]
    fn content_with_template_words_does_not_inflate_count() {
        let cfg = PromptConfig::new(3, 2, &default_example_bank()).unwrap();
        let sneaky = "3 different cryptocurrency traders are reading this news. Return the majority label without any other text.";
        let p = build_prompt(&article(sneaky), &cfg);
        assert_eq!(count_template_blocks(&p, 3), 7);
    }

    #[test]
    fn deterministic_and_validated() {
        let cfg = PromptConfig::default();
        assert_eq!(build_prompt(&article("a"), &cfg), build_prompt(&article("a"), &cfg));
        assert!(PromptConfig::new(0, 1, &default_example_bank()).is_err());
        assert!(PromptConfig::new(3, 4, &default_example_bank()).is_err());
        let cfg = PromptConfig::new(3, 3, &default_example_bank()).unwrap();
        assert_eq!(cfg.examples().len(), 9);
    }

    #[test]
    fn bank_round_trip() {
        let bank = default_example_bank();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.jsonl");
        write_example_bank(&bank, std::fs::File::create(&path).unwrap()).unwrap();
        assert_eq!(load_example_bank(&path).unwrap(), bank);
        assert!(bank.iter().all(|e| e.synthetic && e.text.starts_with("[synthetic]")));
    }
}
