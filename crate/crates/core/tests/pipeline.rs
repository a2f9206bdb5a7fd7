use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use tutor_moves::llm::{
    Backend, BackendError, BackendRequest, MockBackend, MockFixtures, ResponseCache,
};
use tutor_moves::pipeline::PARTIAL_RECORDS_FILE;
use tutor_moves::prompting::default_skills;
use tutor_moves::synthetic::{fixtures_for, transcript_text};
use tutor_moves::{
    render_prompt, Answer, ConsensusConfig, Corpus, Error, LlmClient, ModelConfig, RecordStore,
    RunPlan, SkillSpec, Stage, Transcript,
};

/// Counts every call that reaches the provider; optionally refuses all calls
/// after the first `fail_after`, like a killed process.
struct Counting {
    inner: MockBackend,
    calls: AtomicUsize,
    fail_after: Option<usize>,
}

impl Counting {
    fn new(fx: MockFixtures, fail_after: Option<usize>) -> Arc<Self> {
        Arc::new(Counting {
            inner: MockBackend::new(fx),
            calls: AtomicUsize::new(0),
            fail_after,
        })
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Backend for Counting {
    fn call(&self, req: &BackendRequest<'_>) -> Result<String, BackendError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if self.fail_after.is_some_and(|k| n >= k) {
            return Err(BackendError::Auth("process killed".into()));
        }
        self.inner.call(req)
    }
}

fn corpus(n: usize) -> Corpus {
    Corpus::new(
        (0..n)
            .map(|i| {
                Transcript::new(
                    format!("t{i:02}"),
                    transcript_text(i, 2500 + 150 * i, i % 3 == 0, i % 2 == 0),
                )
            })
            .collect(),
    )
    .unwrap()
}

fn coding(skill: &str, id: &str) -> (Answer, Option<Answer>) {
    let i: usize = id[1..].parse().unwrap();
    let filter = Answer::from_bool(if skill == "praise" {
        i.is_multiple_of(3)
    } else {
        i.is_multiple_of(2)
    });
    (
        filter,
        (filter == Answer::Yes).then(|| Answer::from_bool(!i.is_multiple_of(5))),
    )
}

fn model() -> ModelConfig {
    let mut m = ModelConfig::mock("fixture-model");
    m.fixtures = Some("unused.json".into());
    m
}

fn run(
    backend: Arc<Counting>,
    cache: &Path,
    out: &Path,
    corpus: &Corpus,
    skills: &[SkillSpec],
    workers: usize,
) -> tutor_moves::Result<tutor_moves::RunOutcome> {
    let client = LlmClient::new(backend).with_cache(Arc::new(ResponseCache::open(cache)?));
    let models = [model()];
    let plan = RunPlan {
        corpus,
        skills,
        models: &models,
        consensus: ConsensusConfig::default(),
        workers,
        samples_in_flight: 3,
    };
    tutor_moves::run_assessment(&client, &plan, &RecordStore::open(out)?)
}

#[test]
fn killed_run_resumes_to_identical_records() {
    let corpus = corpus(50);
    let skills = default_skills();
    let fx = fixtures_for(&corpus, &skills, tutor_moves::Provider::Mock, coding).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let clean = run(
        Counting::new(fx.clone(), None),
        &dir.path().join("a.ndjson"),
        &dir.path().join("a"),
        &corpus,
        &skills,
        4,
    )
    .unwrap();
    assert_eq!(clean.records.len(), 100);
    assert!(clean.failures.is_empty());

    let cache = dir.path().join("b.ndjson");
    let out = dir.path().join("b");
    let killed = run(
        Counting::new(fx.clone(), Some(300)),
        &cache,
        &out,
        &corpus,
        &skills,
        4,
    );
    assert!(matches!(killed, Err(Error::Config(_))), "{killed:?}");
    assert!(!out.join("records.jsonl").exists());
    let partial = fs::read_to_string(out.join(PARTIAL_RECORDS_FILE)).unwrap();
    let done = partial.lines().count();
    assert!(done > 0 && done < 100, "{done}");

    let resumed = run(Counting::new(fx, None), &cache, &out, &corpus, &skills, 2).unwrap();
    assert_eq!(resumed.resumed, done);
    assert_eq!(resumed.completed, 100 - done);
    assert_eq!(
        fs::read(out.join("records.jsonl")).unwrap(),
        fs::read(dir.path().join("a/records.jsonl")).unwrap()
    );
}

#[test]
fn truncated_partial_tail_is_recomputed() {
    let corpus = corpus(8);
    let skills = default_skills();
    let fx = fixtures_for(&corpus, &skills, tutor_moves::Provider::Mock, coding).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("c.ndjson");
    let out = dir.path().join("run");
    let first = run(
        Counting::new(fx.clone(), None),
        &cache,
        &out,
        &corpus,
        &skills,
        1,
    )
    .unwrap();
    let full = fs::read(out.join("records.jsonl")).unwrap();

    let partial = out.join(PARTIAL_RECORDS_FILE);
    let raw = fs::read_to_string(&partial).unwrap();
    let keep: Vec<&str> = raw.lines().take(5).collect();
    let torn = &raw.lines().nth(5).unwrap()[..40];
    fs::write(&partial, format!("{}\n{torn}", keep.join("\n"))).unwrap();
    fs::remove_file(out.join("records.jsonl")).unwrap();

    let again = run(Counting::new(fx, None), &cache, &out, &corpus, &skills, 3).unwrap();
    assert_eq!(again.resumed, 5);
    assert_eq!(again.completed, first.records.len() - 5);
    assert_eq!(fs::read(out.join("records.jsonl")).unwrap(), full);
}

#[test]
fn warm_cache_makes_no_provider_calls() {
    let corpus = corpus(50);
    let skills = default_skills();
    let fx = fixtures_for(&corpus, &skills, tutor_moves::Provider::Mock, coding).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache.ndjson");

    let cold = Counting::new(fx.clone(), None);
    run(
        cold.clone(),
        &cache,
        &dir.path().join("cold"),
        &corpus,
        &skills,
        4,
    )
    .unwrap();
    assert!(cold.calls() > 0);

    let warm = Counting::new(fx, None);
    let outcome = run(
        warm.clone(),
        &cache,
        &dir.path().join("warm"),
        &corpus,
        &skills,
        4,
    )
    .unwrap();
    assert_eq!(warm.calls(), 0);
    assert_eq!(outcome.completed, 100);
    assert_eq!(
        fs::read(dir.path().join("warm/records.jsonl")).unwrap(),
        fs::read(dir.path().join("cold/records.jsonl")).unwrap()
    );
}

#[test]
fn unparseable_transcript_becomes_one_failure() {
    let corpus = corpus(50);
    let skills = vec![SkillSpec::praise()];
    let mut fx = fixtures_for(&corpus, &skills, tutor_moves::Provider::Mock, coding).unwrap();
    let bad = render_prompt(&skills[0], Stage::Filter, corpus.get("t17").unwrap()).unwrap();
    fx.set(
        &bad.digest(),
        vec!["I would rather not say.".into(), "Maybe?".into()],
    );
    let dir = tempfile::tempdir().unwrap();

    let outcome = run(
        Counting::new(fx, None),
        &dir.path().join("c.ndjson"),
        &dir.path().join("o"),
        &corpus,
        &skills,
        4,
    )
    .unwrap();
    assert_eq!(outcome.records.len(), 49);
    assert_eq!(outcome.failures.len(), 1);
    let f = &outcome.failures[0];
    assert_eq!((f.transcript_id.as_str(), f.stage), ("t17", Stage::Filter));
    assert!(f.error.contains("consensus"), "{}", f.error);
    let logged = fs::read_to_string(dir.path().join("o/failures.jsonl")).unwrap();
    assert_eq!(logged.lines().count(), 1);
}

#[test]
fn worker_count_does_not_change_output() {
    let corpus = corpus(20);
    let skills = default_skills();
    let fx = fixtures_for(&corpus, &skills, tutor_moves::Provider::Mock, coding).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for w in [1, 3, 8] {
        let out = dir.path().join(format!("w{w}"));
        run(
            Counting::new(fx.clone(), None),
            &dir.path().join(format!("c{w}.ndjson")),
            &out,
            &corpus,
            &skills,
            w,
        )
        .unwrap();
        outputs.push(fs::read(out.join("records.jsonl")).unwrap());
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn skipped_evaluation_is_not_requested() {
    let corpus = corpus(6);
    let skills = vec![SkillSpec::errors()];
    let fx = fixtures_for(&corpus, &skills, tutor_moves::Provider::Mock, coding).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let backend = Counting::new(fx, None);
    let outcome = run(
        backend.clone(),
        &dir.path().join("c.ndjson"),
        &dir.path().join("o"),
        &corpus,
        &skills,
        2,
    )
    .unwrap();
    let yes = outcome
        .records
        .iter()
        .filter(|r| r.filter() == Answer::Yes)
        .count();
    // five samples per verdict, evaluation only behind a yes filter
    assert_eq!(backend.calls(), 5 * (6 + yes));
    for r in &outcome.records {
        assert_eq!(r.evaluation().is_some(), r.filter() == Answer::Yes);
    }
}
