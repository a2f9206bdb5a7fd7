//! Self-consistency: sample a prompt several times at a raised temperature
//! and take the majority of the parsed answers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{Answer, Label};
use crate::llm::{LlmClient, ModelConfig};
use crate::prompting::{parse_verdict, PromptText, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConsensusConfig", into = "RawConsensusConfig")]
pub struct ConsensusConfig {
    n_samples: u32,
    temperature: f64,
    min_valid_fraction: f64,
}

impl ConsensusConfig {
    pub fn new(n_samples: u32, temperature: f64, min_valid_fraction: f64) -> Result<Self> {
        if n_samples == 0 || n_samples.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "n_samples must be odd and positive, got {n_samples}"
            )));
        }
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Error::Config(format!(
                "sampling temperature must be > 0, got {temperature}"
            )));
        }
        if !(min_valid_fraction > 0.0 && min_valid_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "min_valid_fraction must be in (0, 1], got {min_valid_fraction}"
            )));
        }
        Ok(ConsensusConfig {
            n_samples,
            temperature,
            min_valid_fraction,
        })
    }

    pub fn n_samples(&self) -> u32 {
        self.n_samples
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn min_valid_fraction(&self) -> f64 {
        self.min_valid_fraction
    }
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        ConsensusConfig {
            n_samples: 5,
            temperature: 0.7,
            min_valid_fraction: 0.6,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConsensusConfig {
    #[serde(default = "default_n")]
    n_samples: u32,
    #[serde(default = "default_t")]
    temperature: f64,
    #[serde(default = "default_frac")]
    min_valid_fraction: f64,
}

fn default_n() -> u32 {
    ConsensusConfig::default().n_samples
}
fn default_t() -> f64 {
    ConsensusConfig::default().temperature
}
fn default_frac() -> f64 {
    ConsensusConfig::default().min_valid_fraction
}

impl TryFrom<RawConsensusConfig> for ConsensusConfig {
    type Error = Error;

    fn try_from(r: RawConsensusConfig) -> Result<Self> {
        ConsensusConfig::new(r.n_samples, r.temperature, r.min_valid_fraction)
    }
}

impl From<ConsensusConfig> for RawConsensusConfig {
    fn from(c: ConsensusConfig) -> Self {
        RawConsensusConfig {
            n_samples: c.n_samples,
            temperature: c.temperature,
            min_valid_fraction: c.min_valid_fraction,
        }
    }
}

/// Majority over parsed samples; `None` entries are unparseable and discarded.
///
/// Returns the winning answer and the index of the first sample that agrees
/// with it.
pub fn majority_vote(parsed: &[Option<Answer>], cfg: &ConsensusConfig) -> Result<(Answer, usize)> {
    let valid = parsed.iter().flatten().count();
    let required = cfg.min_valid_fraction * f64::from(cfg.n_samples);
    if (valid as f64) + 1e-9 < required {
        return Err(Error::Consensus(format!(
            "only {valid} of {} samples parsed (need {:.0}%)",
            parsed.len(),
            cfg.min_valid_fraction * 100.0
        )));
    }
    let yes = parsed.iter().filter(|a| **a == Some(Answer::Yes)).count();
    let no = valid - yes;
    let winner = match yes.cmp(&no) {
        std::cmp::Ordering::Greater => Answer::Yes,
        std::cmp::Ordering::Less => Answer::No,
        std::cmp::Ordering::Equal => {
            return Err(Error::Consensus(format!("tied vote, {yes} yes vs {no} no")));
        }
    };
    let first = parsed
        .iter()
        .position(|a| *a == Some(winner))
        .expect("winner has at least one vote");
    Ok((winner, first))
}

/// Samples `prompt` `n_samples` times (sample indices `0..n`) at the
/// consensus temperature and aggregates by strict majority.
///
/// Any sample that fails to complete fails the verdict.
pub fn self_consistent_verdict(
    client: &LlmClient,
    prompt: &PromptText,
    model: &ModelConfig,
    cfg: &ConsensusConfig,
    max_in_flight: usize,
) -> Result<Verdict> {
    let sampling = model.with_temperature(cfg.temperature);
    let jobs: Vec<(PromptText, u32)> = (0..cfg.n_samples).map(|i| (prompt.clone(), i)).collect();
    let samples = client
        .complete_many(&jobs, &sampling, max_in_flight)
        .into_iter()
        .collect::<Result<Vec<String>>>()?;
    let parsed: Vec<Option<(Answer, Option<String>)>> =
        samples.iter().map(|s| parse_verdict(s).ok()).collect();
    let answers: Vec<Option<Answer>> = parsed.iter().map(|p| p.as_ref().map(|(a, _)| *a)).collect();
    let (winner, first) = majority_vote(&answers, cfg)?;
    let rationale = parsed[first].as_ref().and_then(|(_, r)| r.clone());
    Ok(Verdict {
        label: Label::from(winner),
        rationale,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Answer::{No, Yes};

    fn cfg(n: u32) -> ConsensusConfig {
        ConsensusConfig::new(n, 0.7, 0.6).unwrap()
    }

    fn all(v: &[Answer]) -> Vec<Option<Answer>> {
        v.iter().copied().map(Some).collect()
    }

    #[test]
    fn examples() {
        assert_eq!(
            majority_vote(&all(&[Yes, Yes, No, Yes, Yes]), &cfg(5)).unwrap(),
            (Yes, 0)
        );
        assert_eq!(majority_vote(&all(&[No]), &cfg(1)).unwrap(), (No, 0));
        let r = majority_vote(&[Some(Yes), None, Some(No), None, None], &cfg(5));
        assert!(matches!(r, Err(Error::Consensus(_))));
    }

    #[test]
    fn tie_after_discards_fails_even_when_enough_parsed() {
        let c = ConsensusConfig::new(5, 0.7, 0.5).unwrap();
        let r = majority_vote(&[Some(Yes), Some(Yes), Some(No), Some(No), None], &c);
        assert!(matches!(r, Err(Error::Consensus(m)) if m.contains("tied")));
    }

    #[test]
    fn rationale_comes_from_first_majority_sample() {
        let (a, i) =
            majority_vote(&[None, Some(No), Some(Yes), Some(Yes), Some(Yes)], &cfg(5)).unwrap();
        assert_eq!((a, i), (Yes, 2));
    }

    #[test]
    fn config_validation() {
        assert!(ConsensusConfig::new(4, 0.7, 0.6).is_err());
        assert!(ConsensusConfig::new(0, 0.7, 0.6).is_err());
        assert!(ConsensusConfig::new(3, 0.0, 0.6).is_err());
        assert!(ConsensusConfig::new(3, 0.7, 0.0).is_err());
        assert!(ConsensusConfig::new(3, 0.7, 1.0).is_ok());
        let c: ConsensusConfig = toml::from_str("n_samples = 3").unwrap();
        assert_eq!(c.n_samples(), 3);
        assert_eq!(c.temperature(), 0.7);
        assert!(toml::from_str::<ConsensusConfig>("n_samples = 2").is_err());
    }
}
