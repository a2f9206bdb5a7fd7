//! Assessing tutor moves in tutoring dialogue transcripts with chained LLM
//! prompts and self-consistency voting, and scoring the verdicts against
//! human labels.
//!
//! The flow is: load a [`Corpus`] and filter it by file size, render each
//! skill's filter prompt, take a majority-vote [`Verdict`], run the
//! evaluation prompt only when the filter says yes, then compare the
//! resulting [`RunRecord`]s with a human [`LabelSet`] and report accuracy
//! with bootstrap intervals.

pub mod consensus;
pub mod corpus;
pub mod error;
pub mod label;
pub mod llm;
pub mod pipeline;
pub mod prompting;
pub mod report;
pub mod scoring;
pub mod stats;
pub mod synthetic;

pub use consensus::{majority_vote, self_consistent_verdict, ConsensusConfig};
pub use corpus::{
    import_labels, Corpus, LabelSet, SkillLabel, Transcript, DEFAULT_MAX_BYTES, DEFAULT_MIN_BYTES,
};
pub use error::{Error, Result};
pub use label::{Answer, Label, Stage};
pub use llm::{LlmClient, ModelConfig, Provider};
pub use pipeline::{run_assessment, RecordStore, RunOutcome, RunPlan};
pub use prompting::{
    chain_stage_gate, parse_verdict, render_prompt, Gate, PromptText, SkillSpec, Verdict,
};
pub use report::{build_report, render, AccuracyReport, Format, StatsConfig};
pub use scoring::{correctness_vector, score_transcript, total_score, RunRecord, ScoreCell};
pub use stats::{
    bootstrap_ci, chance_baseline, cohen_kappa, percent_agreement, AgreementResult, BootstrapCI,
};
