//! Binary answers and ternary verdict labels.

use std::fmt;

use serde::{Deserialize, Serialize};

/// A yes/no answer to a filter or evaluation question (+1 / -1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Answer {
    Yes,
    No,
}

impl Answer {
    pub fn sign(self) -> i8 {
        match self {
            Answer::Yes => 1,
            Answer::No => -1,
        }
    }

    pub fn from_bool(yes: bool) -> Self {
        if yes {
            Answer::Yes
        } else {
            Answer::No
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Answer::Yes => "yes",
            Answer::No => "no",
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Verdict label: an answer, or not applicable when the evaluation stage was skipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Yes,
    No,
    #[serde(rename = "na")]
    NotApplicable,
}

impl Label {
    pub fn answer(self) -> Option<Answer> {
        match self {
            Label::Yes => Some(Answer::Yes),
            Label::No => Some(Answer::No),
            Label::NotApplicable => None,
        }
    }
}

impl From<Answer> for Label {
    fn from(a: Answer) -> Self {
        match a {
            Answer::Yes => Label::Yes,
            Answer::No => Label::No,
        }
    }
}

impl From<Option<Answer>> for Label {
    fn from(a: Option<Answer>) -> Self {
        a.map_or(Label::NotApplicable, Label::from)
    }
}

/// Which question of the two-stage chain a prompt asks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Filter,
    Evaluation,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Filter => "filter",
            Stage::Evaluation => "evaluation",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "filter" => Ok(Stage::Filter),
            "evaluation" | "eval" => Ok(Stage::Evaluation),
            other => Err(format!(
                "unknown prompt kind `{other}` (expected filter or evaluation)"
            )),
        }
    }
}
