//! Batch runs: every (model, skill, transcript) goes through the filter
//! stage and, when the filter says yes, the evaluation stage.
//!
//! Finished records are appended to `records.partial.jsonl` as they
//! complete, so an interrupted run picks up where it stopped. At the end all
//! records are sorted and written to `records.jsonl`, which is byte-identical
//! however the work was interleaved or interrupted.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::consensus::{self_consistent_verdict, ConsensusConfig};
use crate::corpus::{Corpus, Transcript};
use crate::error::{Error, Result};
use crate::label::Stage;
use crate::llm::{LlmClient, ModelConfig};
use crate::prompting::{chain_stage_gate, render_prompt_for, Gate, SkillSpec, Verdict};
use crate::scoring::{write_records, RunRecord};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const PARTIAL_RECORDS_FILE: &str = "records.partial.jsonl";
pub const FAILURES_FILE: &str = "failures.jsonl";

/// Runs the two-stage chain for one transcript.
pub fn assess_transcript(
    client: &LlmClient,
    spec: &SkillSpec,
    model: &ModelConfig,
    transcript: &Transcript,
    consensus: &ConsensusConfig,
    samples_in_flight: usize,
) -> std::result::Result<RunRecord, (Stage, Error)> {
    let verdict_for = |stage| {
        render_prompt_for(spec, stage, transcript, Some(model.provider))
            .and_then(|p| self_consistent_verdict(client, &p, model, consensus, samples_in_flight))
            .map_err(|e| (stage, e))
    };
    let filter_verdict = verdict_for(Stage::Filter)?;
    let filter = filter_verdict
        .answer()
        .expect("consensus always yields an answer");
    let evaluation_verdict = match chain_stage_gate(filter) {
        Gate::RunEvaluation => verdict_for(Stage::Evaluation)?,
        Gate::Skip => Verdict::skipped(),
    };
    Ok(RunRecord {
        model_name: model.model_name.clone(),
        skill_id: spec.skill_id().to_owned(),
        transcript_id: transcript.id.clone(),
        filter_verdict,
        evaluation_verdict,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunFailure {
    pub model_name: String,
    pub skill_id: String,
    pub transcript_id: String,
    pub stage: Stage,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct RunPlan<'a> {
    pub corpus: &'a Corpus,
    pub skills: &'a [SkillSpec],
    pub models: &'a [ModelConfig],
    pub consensus: ConsensusConfig,
    /// Transcripts processed concurrently.
    pub workers: usize,
    /// Concurrent samples per verdict.
    pub samples_in_flight: usize,
}

#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    /// All records in the store, sorted.
    pub records: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
    /// Records found from an earlier, interrupted run.
    pub resumed: usize,
    /// Records produced by this run.
    pub completed: usize,
}

/// Run directory holding the partial log, the final records and failures.
#[derive(Debug, Clone)]
pub struct RecordStore {
    dir: PathBuf,
}

impl RecordStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(RecordStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn records_path(&self) -> PathBuf {
        self.dir.join(RECORDS_FILE)
    }

    pub fn partial_path(&self) -> PathBuf {
        self.dir.join(PARTIAL_RECORDS_FILE)
    }

    pub fn failures_path(&self) -> PathBuf {
        self.dir.join(FAILURES_FILE)
    }

    /// Records from the partial log. Truncated or invalid lines are ignored
    /// and the first record wins for a repeated key.
    pub fn load_partial(&self) -> Result<Vec<RunRecord>> {
        let path = self.partial_path();
        if !path.exists() {
            return Ok(Vec::new());
        }
        let raw = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for line in raw.split(|&b| b == b'\n') {
            let Ok(r) = serde_json::from_slice::<RunRecord>(line) else {
                continue;
            };
            if r.check().is_err() {
                continue;
            }
            let key = (
                r.model_name.clone(),
                r.skill_id.clone(),
                r.transcript_id.clone(),
            );
            if seen.insert(key) {
                out.push(r);
            }
        }
        Ok(out)
    }

    fn partial_writer(&self) -> Result<File> {
        let path = self.partial_path();
        let needs_newline = match fs::read(&path) {
            Ok(raw) => !raw.is_empty() && raw.last() != Some(&b'\n'),
            Err(_) => false,
        };
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        if needs_newline {
            f.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        }
        Ok(f)
    }

    fn write_atomic(&self, name: &str, body: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        let tmp = self.dir.join(format!(".{name}.tmp"));
        body(&tmp)?;
        let dest = self.dir.join(name);
        fs::rename(&tmp, &dest).map_err(|e| Error::io(&dest, e))
    }
}

fn append_line(file: &Mutex<File>, path: &Path, record: &RunRecord) -> Result<()> {
    let mut line = serde_json::to_vec(record)?;
    line.push(b'\n');
    let mut f = file.lock().unwrap();
    f.write_all(&line).map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))
}

/// Runs every pending (model, skill, transcript) of `plan`.
///
/// Per-transcript failures (consensus failures, transport errors, fixture
/// misses) are collected and the run continues. Configuration and I/O errors
/// abort the run; records finished so far stay in the partial log.
pub fn run_assessment(
    client: &LlmClient,
    plan: &RunPlan<'_>,
    store: &RecordStore,
) -> Result<RunOutcome> {
    let existing = store.load_partial()?;
    let done: HashSet<(&str, &str, &str)> = existing.iter().map(RunRecord::key).collect();

    let mut tasks: Vec<(&ModelConfig, &SkillSpec, &Transcript)> = Vec::new();
    for model in plan.models {
        model.validate()?;
        for spec in plan.skills {
            for t in plan.corpus.iter() {
                if !done.contains(&(model.model_name.as_str(), spec.skill_id(), t.id.as_str())) {
                    tasks.push((model, spec, t));
                }
            }
        }
    }

    let partial_path = store.partial_path();
    let writer = Mutex::new(store.partial_writer()?);
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let fresh = Mutex::new(Vec::new());
    let failures = Mutex::new(Vec::new());
    let fatal: Mutex<Option<Error>> = Mutex::new(None);

    let workers = plan.workers.max(1).min(tasks.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(model, spec, t)) = tasks.get(i) else {
                    break;
                };
                let result = assess_transcript(
                    client,
                    spec,
                    model,
                    t,
                    &plan.consensus,
                    plan.samples_in_flight,
                )
                .map_err(|(stage, e)| (Some(stage), e))
                .and_then(|r| {
                    append_line(&writer, &partial_path, &r)
                        .map(|_| r)
                        .map_err(|e| (None, e))
                });
                match result {
                    Ok(r) => fresh.lock().unwrap().push(r),
                    Err((_, e)) if e.is_fatal() => {
                        abort.store(true, Ordering::SeqCst);
                        fatal.lock().unwrap().get_or_insert(e);
                    }
                    Err((stage, e)) => failures.lock().unwrap().push(RunFailure {
                        model_name: model.model_name.clone(),
                        skill_id: spec.skill_id().to_owned(),
                        transcript_id: t.id.clone(),
                        stage: stage.unwrap_or(Stage::Filter),
                        error: e.to_string(),
                    }),
                }
            });
        }
    });

    if let Some(e) = fatal.into_inner().unwrap() {
        return Err(e);
    }

    let fresh = fresh.into_inner().unwrap();
    let mut failures = failures.into_inner().unwrap();
    let resumed = existing.len();
    let completed = fresh.len();
    let mut records = existing;
    records.extend(fresh);
    records.sort_by(|a, b| a.key().cmp(&b.key()));
    failures.sort_by(|a, b| {
        (&a.model_name, &a.skill_id, &a.transcript_id).cmp(&(
            &b.model_name,
            &b.skill_id,
            &b.transcript_id,
        ))
    });

    store.write_atomic(RECORDS_FILE, |tmp| write_records(tmp, &records))?;
    store.write_atomic(FAILURES_FILE, |tmp| {
        let mut buf = Vec::new();
        for f in &failures {
            serde_json::to_writer(&mut buf, f)?;
            buf.push(b'\n');
        }
        fs::write(tmp, buf).map_err(|e| Error::io(tmp, e))
    })?;

    Ok(RunOutcome {
        records,
        failures,
        resumed,
        completed,
    })
}
