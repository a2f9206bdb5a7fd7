#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tutor_moves::prompting::default_skills;
use tutor_moves::synthetic::{fixtures_for, transcript_text, write_corpus};
use tutor_moves::{Answer, Corpus, LabelSet, Provider, SkillLabel, Transcript};

pub const MODEL: &str = "gpt4-fixture";

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tutor-moves"));
    cmd.env_remove("OPENAI_API_KEY")
        .env_remove("GEMINI_API_KEY");
    cmd
}

pub fn run_bin(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn id(i: usize) -> String {
    format!("session{i:02}")
}

fn index(id: &str) -> usize {
    id.trim_start_matches("session").parse().unwrap()
}

/// Human labels for the 50-transcript fixture.
///
/// Praise: 24 transcripts with praise, evaluations alternating. Errors: every
/// transcript has a math error, half handled well.
pub fn human(skill: &str, i: usize) -> (Answer, Option<Answer>) {
    match skill {
        "praise" if i % 9 < 4 => (Answer::Yes, Some(Answer::from_bool(i.is_multiple_of(2)))),
        "praise" => (Answer::No, None),
        _ => (Answer::Yes, Some(Answer::from_bool(i % 2 == 1))),
    }
}

/// Model codings that agree with `human` on 49/50 praise filters and 38/50
/// errors evaluations.
pub fn model(skill: &str, i: usize) -> (Answer, Option<Answer>) {
    let (f, e) = human(skill, i);
    match skill {
        // one false positive on the praise filter
        "praise" if i == 7 => (Answer::Yes, Some(Answer::Yes)),
        "praise" => (f, e),
        _ if i % 4 == 3 => (f, e.map(|a| Answer::from_bool(a == Answer::No))),
        _ => (f, e),
    }
}

pub fn corpus() -> Corpus {
    Corpus::new(
        (0..50)
            .map(|i| {
                let praise = human("praise", i).0 == Answer::Yes;
                Transcript::new(id(i), transcript_text(i, 2200 + 170 * i, praise, true))
            })
            .collect(),
    )
    .unwrap()
}

pub fn labels(coding: impl Fn(&str, usize) -> (Answer, Option<Answer>), rater: &str) -> LabelSet {
    let mut set = LabelSet::new(rater);
    for i in 0..50 {
        for skill in ["praise", "errors"] {
            let (f, e) = coding(skill, i);
            set.insert(id(i), SkillLabel::new(skill, f, e).unwrap())
                .unwrap();
        }
    }
    set
}

pub struct Fixture {
    pub root: PathBuf,
    pub corpus_dir: PathBuf,
    pub labels: PathBuf,
    pub fixtures: PathBuf,
}

impl Fixture {
    /// Writes the corpus, human labels and mock fixtures under `root`.
    pub fn write(root: &Path) -> Fixture {
        let corpus = corpus();
        let corpus_dir = root.join("transcripts");
        write_corpus(&corpus_dir, corpus.transcripts()).unwrap();
        let labels = root.join("human.csv");
        fs::write(&labels, self::labels(human, "human").to_csv()).unwrap();
        let fx = fixtures_for(&corpus, &default_skills(), Provider::Mock, |s, t| {
            model(s, index(t))
        })
        .unwrap();
        let fixtures = root.join("fixtures.json");
        fx.save(&fixtures).unwrap();
        Fixture {
            root: root.to_owned(),
            corpus_dir,
            labels,
            fixtures,
        }
    }

    pub fn run_args<'a>(&'a self, out: &'a Path, cache: &'a Path) -> Vec<String> {
        vec![
            "run".into(),
            "--corpus".into(),
            self.corpus_dir.display().to_string(),
            "--mock-fixtures".into(),
            self.fixtures.display().to_string(),
            "--model".into(),
            MODEL.into(),
            "--out".into(),
            out.display().to_string(),
            "--cache".into(),
            cache.display().to_string(),
        ]
    }
}

pub fn run_owned(args: &[String]) -> Output {
    bin().args(args).output().expect("binary runs")
}

/// Finds the report folder written under `dir`.
pub fn report_dirs(dir: &Path) -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .unwrap()
                    .to_string_lossy()
                    .starts_with("report-")
        })
        .collect();
    out.sort();
    out
}

/// Cell of the markdown table for `row` under the column whose header starts
/// with `column`.
pub fn table_cell(markdown: &str, row: &str, column: &str) -> Option<String> {
    let split = |l: &str| -> Vec<String> {
        l.trim()
            .trim_matches('|')
            .split('|')
            .map(|c| c.trim().to_owned())
            .collect()
    };
    let mut lines = markdown.lines().filter(|l| l.starts_with('|'));
    let header = split(lines.next()?);
    let col = header.iter().position(|h| h.starts_with(column))?;
    lines
        .map(split)
        .find(|cells| cells[0] == row)
        .map(|cells| cells[col].clone())
}

/// `"98, (94, 100)"` → `(98, 94, 100)`.
pub fn parse_cell(cell: &str) -> Option<(i64, i64, i64)> {
    let nums: Vec<i64> = cell
        .split(|c: char| !c.is_ascii_digit())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().unwrap())
        .collect();
    match nums[..] {
        [p, l, u] => Some((p, l, u)),
        _ => None,
    }
}
