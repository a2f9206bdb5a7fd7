//! Transcript loading, size-based preprocessing and human label files.
//!
//! Transcripts are plain UTF-8 text files, one session per file. The file stem
//! is the transcript id. No speaker markup is assumed: the dialogue is passed
//! to the model as-is.
//!
//! Human labels arrive as CSV with the header
//! `transcript_id,skill_id,filter,evaluation`. The evaluation cell of a row
//! whose filter is `no` must be the literal `NA`.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Answer;

/// Lower size bound, 2 KB.
pub const DEFAULT_MIN_BYTES: u64 = 2 * 1024;
/// Upper size bound, 11 KB.
pub const DEFAULT_MAX_BYTES: u64 = 11 * 1024;

/// Token used in label files for an evaluation skipped by the filter.
pub const NA_TOKEN: &str = "NA";

const LABEL_HEADER: [&str; 4] = ["transcript_id", "skill_id", "filter", "evaluation"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub id: String,
    pub text: String,
    /// Byte length of the source file.
    pub size_bytes: u64,
}

impl Transcript {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        Transcript {
            id: id.into(),
            size_bytes: text.len() as u64,
            text,
        }
    }
}

/// A file that could not be turned into a transcript.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadError {
    pub path: PathBuf,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    transcripts: Vec<Transcript>,
    errors: Vec<LoadError>,
}

impl Corpus {
    /// Builds a corpus from in-memory transcripts; ids must be unique.
    pub fn new(transcripts: Vec<Transcript>) -> Result<Self> {
        let mut seen = HashSet::new();
        for t in &transcripts {
            if !seen.insert(t.id.as_str()) {
                return Err(Error::Contract(format!(
                    "duplicate transcript id `{}`",
                    t.id
                )));
            }
        }
        Ok(Corpus {
            transcripts,
            errors: Vec::new(),
        })
    }

    /// Loads every regular file in `dir` (non-recursive, sorted by file name).
    ///
    /// Unreadable, non-UTF-8, empty or id-colliding files are collected in
    /// [`Corpus::errors`] and the load continues. Only a failure to list the
    /// directory itself is an error.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let path = entry.path();
            if path.is_file() {
                paths.push(path);
            }
        }
        paths.sort();

        let mut corpus = Corpus::default();
        let mut seen = HashSet::new();
        for path in paths {
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_owned) else {
                corpus.push_error(&path, "file name is not valid UTF-8");
                continue;
            };
            let bytes = match fs::read(&path) {
                Ok(b) => b,
                Err(e) => {
                    corpus.push_error(&path, e.to_string());
                    continue;
                }
            };
            let size_bytes = bytes.len() as u64;
            let text = match String::from_utf8(bytes) {
                Ok(t) => t,
                Err(e) => {
                    corpus.push_error(&path, format!("not valid UTF-8: {}", e.utf8_error()));
                    continue;
                }
            };
            if text.trim().is_empty() {
                corpus.push_error(&path, "empty transcript");
                continue;
            }
            if !seen.insert(id.clone()) {
                corpus.push_error(&path, format!("duplicate transcript id `{id}`"));
                continue;
            }
            corpus.transcripts.push(Transcript {
                id,
                text,
                size_bytes,
            });
        }
        Ok(corpus)
    }

    fn push_error(&mut self, path: &Path, message: impl Into<String>) {
        self.errors.push(LoadError {
            path: path.to_path_buf(),
            message: message.into(),
        });
    }

    /// Keeps transcripts with `min_bytes <= size_bytes <= max_bytes`, in order.
    pub fn filter_by_size(&self, min_bytes: u64, max_bytes: u64) -> Result<Corpus> {
        if min_bytes > max_bytes {
            return Err(Error::Config(format!(
                "size bounds are inverted: min {min_bytes} > max {max_bytes}"
            )));
        }
        Ok(Corpus {
            transcripts: self
                .transcripts
                .iter()
                .filter(|t| (min_bytes..=max_bytes).contains(&t.size_bytes))
                .cloned()
                .collect(),
            errors: self.errors.clone(),
        })
    }

    pub fn transcripts(&self) -> &[Transcript] {
        &self.transcripts
    }

    pub fn errors(&self) -> &[LoadError] {
        &self.errors
    }

    pub fn get(&self, id: &str) -> Option<&Transcript> {
        self.transcripts.iter().find(|t| t.id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.get(id).is_some()
    }

    pub fn len(&self) -> usize {
        self.transcripts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transcripts.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Transcript> {
        self.transcripts.iter()
    }
}

/// One human answer pair for a (transcript, skill).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillLabel {
    pub skill_id: String,
    pub filter: Answer,
    /// `None` exactly when `filter` is [`Answer::No`].
    pub evaluation: Option<Answer>,
}

impl SkillLabel {
    pub fn new(
        skill_id: impl Into<String>,
        filter: Answer,
        evaluation: Option<Answer>,
    ) -> Result<Self> {
        let label = SkillLabel {
            skill_id: skill_id.into(),
            filter,
            evaluation,
        };
        label.check()?;
        Ok(label)
    }

    pub fn check(&self) -> Result<()> {
        match (self.filter, self.evaluation) {
            (Answer::No, Some(_)) => Err(Error::Contract(format!(
                "skill `{}`: evaluation present but filter is no",
                self.skill_id
            ))),
            (Answer::Yes, None) => Err(Error::Contract(format!(
                "skill `{}`: evaluation missing but filter is yes",
                self.skill_id
            ))),
            _ => Ok(()),
        }
    }
}

/// Annotations from one rater (or an adjudicated file).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelSet {
    pub rater_id: String,
    entries: BTreeMap<String, Vec<SkillLabel>>,
}

impl LabelSet {
    pub fn new(rater_id: impl Into<String>) -> Self {
        LabelSet {
            rater_id: rater_id.into(),
            entries: BTreeMap::new(),
        }
    }

    /// Adds a label, rejecting a second label for the same (transcript, skill).
    pub fn insert(&mut self, transcript_id: impl Into<String>, label: SkillLabel) -> Result<()> {
        label.check()?;
        let transcript_id = transcript_id.into();
        let labels = self.entries.entry(transcript_id.clone()).or_default();
        if labels.iter().any(|l| l.skill_id == label.skill_id) {
            return Err(Error::Contract(format!(
                "duplicate label for transcript `{transcript_id}`, skill `{}`",
                label.skill_id
            )));
        }
        labels.push(label);
        Ok(())
    }

    pub fn get(&self, transcript_id: &str, skill_id: &str) -> Option<&SkillLabel> {
        self.entries
            .get(transcript_id)?
            .iter()
            .find(|l| l.skill_id == skill_id)
    }

    pub fn transcript_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// All labels for one skill, ordered by transcript id.
    pub fn for_skill<'a>(
        &'a self,
        skill_id: &'a str,
    ) -> impl Iterator<Item = (&'a str, &'a SkillLabel)> + 'a {
        self.entries.iter().filter_map(move |(id, labels)| {
            labels
                .iter()
                .find(|l| l.skill_id == skill_id)
                .map(|l| (id.as_str(), l))
        })
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Serializes to the label CSV format (LF line endings).
    pub fn to_csv(&self) -> String {
        let mut out = LABEL_HEADER.join(",");
        out.push('\n');
        for (id, labels) in &self.entries {
            for l in labels {
                let eval = l.evaluation.map_or(NA_TOKEN, Answer::as_str);
                out.push_str(&format!("{id},{},{},{eval}\n", l.skill_id, l.filter));
            }
        }
        out
    }

    /// Parses a label CSV without checking ids against a corpus.
    pub fn from_reader<R: Read>(reader: R, rater_id: impl Into<String>) -> Result<Self> {
        parse_labels(reader, rater_id.into(), None)
    }

    /// Reads a label file; the rater id is the file stem.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        parse_labels(file, rater_id_for(path), None)
    }
}

/// Reads a label file and checks every transcript id against `corpus`.
pub fn import_labels(path: impl AsRef<Path>, corpus: &Corpus) -> Result<LabelSet> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let known: HashSet<&str> = corpus.iter().map(|t| t.id.as_str()).collect();
    parse_labels(file, rater_id_for(path), Some(&known))
}

fn rater_id_for(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn parse_labels<R: Read>(
    reader: R,
    rater_id: String,
    known: Option<&HashSet<&str>>,
) -> Result<LabelSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header_err = |message: String| Error::Label { row: 0, message };
    let headers = rdr
        .headers()
        .map_err(|e| header_err(e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != LABEL_HEADER {
        return Err(header_err(format!(
            "expected header `{}`, found `{}`",
            LABEL_HEADER.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut set = LabelSet::new(rater_id);
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let fail = |message: String| Error::Label { row, message };
        let record = record.map_err(|e| fail(e.to_string()))?;
        if record.len() != 4 {
            return Err(fail(format!("expected 4 fields, found {}", record.len())));
        }
        let (id, skill) = (&record[0], &record[1]);
        if id.is_empty() || skill.is_empty() {
            return Err(fail("empty transcript or skill id".into()));
        }
        if let Some(known) = known {
            if !known.contains(id) {
                return Err(fail(format!("unknown transcript id `{id}`")));
            }
        }
        let filter = parse_answer(&record[2])
            .ok_or_else(|| fail(format!("invalid filter value `{}`", &record[2])))?;
        let evaluation = match &record[3] {
            NA_TOKEN => None,
            other => Some(
                parse_answer(other)
                    .ok_or_else(|| fail(format!("invalid evaluation value `{other}`")))?,
            ),
        };
        match (filter, evaluation) {
            (Answer::No, Some(_)) => {
                return Err(fail("evaluation present but filter is no".into()))
            }
            (Answer::Yes, None) => return Err(fail("evaluation is NA but filter is yes".into())),
            _ => {}
        }
        if set.get(id, skill).is_some() {
            return Err(fail(format!(
                "duplicate label for transcript `{id}`, skill `{skill}`"
            )));
        }
        set.insert(
            id,
            SkillLabel {
                skill_id: skill.to_owned(),
                filter,
                evaluation,
            },
        )?;
    }
    Ok(set)
}

fn parse_answer(s: &str) -> Option<Answer> {
    if s.eq_ignore_ascii_case("yes") {
        Some(Answer::Yes)
    } else if s.eq_ignore_ascii_case("no") {
        Some(Answer::No)
    } else {
        None
    }
}
