//! Model verdicts against human labels: per-prompt correctness vectors and
//! the 0/1/2-point transcript score.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{LabelSet, SkillLabel};
use crate::error::{Error, Result};
use crate::label::{Answer, Label, Stage};
use crate::prompting::Verdict;

/// The chained outcome for one (model, skill, transcript).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model_name: String,
    pub skill_id: String,
    pub transcript_id: String,
    pub filter_verdict: Verdict,
    pub evaluation_verdict: Verdict,
}

impl RunRecord {
    pub fn check(&self) -> Result<()> {
        let ctx = || {
            format!(
                "{}/{}/{}",
                self.model_name, self.skill_id, self.transcript_id
            )
        };
        self.filter_verdict
            .check()
            .map_err(|e| Error::Contract(format!("{}: {e}", ctx())))?;
        self.evaluation_verdict
            .check()
            .map_err(|e| Error::Contract(format!("{}: {e}", ctx())))?;
        match (self.filter_verdict.label, self.evaluation_verdict.label) {
            (Label::NotApplicable, _) => Err(Error::Contract(format!(
                "{}: filter verdict is not applicable",
                ctx()
            ))),
            (Label::No, Label::NotApplicable) | (Label::Yes, Label::Yes | Label::No) => Ok(()),
            (Label::No, _) => Err(Error::Contract(format!(
                "{}: evaluation ran after a no filter",
                ctx()
            ))),
            (Label::Yes, Label::NotApplicable) => Err(Error::Contract(format!(
                "{}: evaluation skipped after a yes filter",
                ctx()
            ))),
        }
    }

    pub fn filter(&self) -> Answer {
        self.filter_verdict.answer().expect("checked record")
    }

    pub fn evaluation(&self) -> Option<Answer> {
        self.evaluation_verdict.answer()
    }

    /// Key records are sorted and deduplicated by.
    pub fn key(&self) -> (&str, &str, &str) {
        (&self.model_name, &self.skill_id, &self.transcript_id)
    }
}

/// Points earned by one transcript: 0, 1 or 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ScoreCell(u8);

impl ScoreCell {
    pub fn new(points: u8) -> Result<Self> {
        if points <= 2 {
            Ok(ScoreCell(points))
        } else {
            Err(Error::Contract(format!("score {points} is outside 0..=2")))
        }
    }

    pub fn points(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for ScoreCell {
    type Error = Error;

    fn try_from(p: u8) -> Result<Self> {
        ScoreCell::new(p)
    }
}

impl From<ScoreCell> for u8 {
    fn from(c: ScoreCell) -> u8 {
        c.0
    }
}

/// Scores two (filter, evaluation) codings against each other.
///
/// Both filters no: 2, the evaluation is skipped by design. Both yes with
/// matching evaluations: 2. Both yes with differing evaluations: 1.
/// Differing filters: 0.
pub fn score_codings(
    a: (Answer, Option<Answer>),
    b: (Answer, Option<Answer>),
) -> Result<ScoreCell> {
    for (filter, eval) in [a, b] {
        if (filter == Answer::Yes) != eval.is_some() {
            return Err(Error::Contract(format!(
                "inconsistent coding: filter {filter}, evaluation {}",
                eval.map_or("NA", Answer::as_str)
            )));
        }
    }
    let points = match (a, b) {
        ((Answer::No, _), (Answer::No, _)) => 2,
        ((Answer::Yes, ea), (Answer::Yes, eb)) if ea == eb => 2,
        ((Answer::Yes, _), (Answer::Yes, _)) => 1,
        _ => 0,
    };
    Ok(ScoreCell(points))
}

pub fn score_transcript(human: &SkillLabel, record: &RunRecord) -> Result<ScoreCell> {
    if human.skill_id != record.skill_id {
        return Err(Error::Contract(format!(
            "label skill `{}` does not match record skill `{}`",
            human.skill_id, record.skill_id
        )));
    }
    human.check()?;
    record.check()?;
    score_codings(
        (human.filter, human.evaluation),
        (record.filter(), record.evaluation()),
    )
}

pub fn total_score(cells: &[ScoreCell]) -> u32 {
    cells.iter().map(|c| u32::from(c.0)).sum()
}

/// Per-transcript correctness of one model on one skill and prompt kind,
/// in the order of `records`.
///
/// Filter: one entry per record. Evaluation: one entry per record whose human
/// filter is yes; a model that answered no at the filter stage has no
/// evaluation and scores 0 there.
pub fn correctness_vector(
    labels: &LabelSet,
    records: &[RunRecord],
    kind: Stage,
    skill: &str,
) -> Result<Vec<bool>> {
    let mut out = Vec::with_capacity(records.len());
    for r in records.iter().filter(|r| r.skill_id == skill) {
        let human = labels
            .get(&r.transcript_id, skill)
            .ok_or_else(|| Error::Coverage {
                missing: vec![r.transcript_id.clone()],
            })?;
        r.check()?;
        match kind {
            Stage::Filter => out.push(human.filter == r.filter()),
            Stage::Evaluation => {
                if human.filter == Answer::Yes {
                    out.push(r.evaluation().is_some() && r.evaluation() == human.evaluation);
                }
            }
        }
    }
    Ok(out)
}

/// Writes records as newline-delimited JSON.
pub fn write_records(path: impl AsRef<Path>, records: &[RunRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Reads a records file, rejecting malformed lines, invalid records and
/// duplicate keys.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: RunRecord = serde_json::from_str(line)
            .map_err(|e| Error::Contract(format!("{} line {}: {e}", path.display(), i + 1)))?;
        r.check()?;
        let key = (
            r.model_name.clone(),
            r.skill_id.clone(),
            r.transcript_id.clone(),
        );
        if !seen.insert(key) {
            return Err(Error::Contract(format!(
                "{} line {}: duplicate record for {}/{}/{}",
                path.display(),
                i + 1,
                r.model_name,
                r.skill_id,
                r.transcript_id
            )));
        }
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn verdict(a: Option<Answer>) -> Verdict {
        match a {
            Some(a) => Verdict {
                label: a.into(),
                rationale: None,
                samples: vec![format!("ANSWER: {}", a.as_str().to_uppercase())],
            },
            None => Verdict::skipped(),
        }
    }

    fn record(id: &str, filter: Answer, eval: Option<Answer>) -> RunRecord {
        RunRecord {
            model_name: "m".into(),
            skill_id: "praise".into(),
            transcript_id: id.into(),
            filter_verdict: verdict(Some(filter)),
            evaluation_verdict: verdict(eval),
        }
    }

    fn human(filter: Answer, eval: Option<Answer>) -> SkillLabel {
        SkillLabel::new("praise", filter, eval).unwrap()
    }

    use Answer::{No, Yes};

    #[test]
    fn score_examples() {
        let s = |h, m: RunRecord| score_transcript(&h, &m).unwrap().points();
        assert_eq!(s(human(No, None), record("t", No, None)), 2);
        assert_eq!(s(human(Yes, Some(Yes)), record("t", Yes, Some(No))), 1);
        assert_eq!(s(human(Yes, Some(Yes)), record("t", No, None)), 0);
    }

    #[test]
    fn inconsistent_inputs_rejected() {
        let mut r = record("t", No, None);
        r.evaluation_verdict = verdict(Some(Yes));
        assert!(matches!(
            score_transcript(&human(No, None), &r),
            Err(Error::Contract(_))
        ));
        assert!(score_codings((No, Some(Yes)), (No, None)).is_err());
        let mut other_skill = record("t", No, None);
        other_skill.skill_id = "errors".into();
        assert!(score_transcript(&human(No, None), &other_skill).is_err());
    }

    #[test]
    fn totals() {
        let two = ScoreCell::new(2).unwrap();
        assert_eq!(total_score(&[two; 50]), 100);
        assert_eq!(total_score(&[]), 0);
        let cells: Vec<ScoreCell> = [2, 1, 0]
            .iter()
            .map(|&p| ScoreCell::new(p).unwrap())
            .collect();
        assert_eq!(total_score(&cells), 3);
        assert!(ScoreCell::new(3).is_err());
    }

    fn labels(rows: &[(&str, Answer, Option<Answer>)]) -> LabelSet {
        let mut set = LabelSet::new("h");
        for (id, f, e) in rows {
            set.insert(*id, human(*f, *e)).unwrap();
        }
        set
    }

    #[test]
    fn filter_vector_counts_matches() {
        let mut rows = Vec::new();
        let mut recs = Vec::new();
        let ids: Vec<String> = (0..50).map(|i| format!("t{i:02}")).collect();
        for (i, id) in ids.iter().enumerate() {
            rows.push((id.as_str(), Yes, Some(Yes)));
            let f = if i == 0 { No } else { Yes };
            recs.push(record(id, f, (f == Yes).then_some(Yes)));
        }
        let v = correctness_vector(&labels(&rows), &recs, Stage::Filter, "praise").unwrap();
        assert_eq!(v.len(), 50);
        assert_eq!(v.iter().filter(|&&b| b).count(), 49);
    }

    #[test]
    fn evaluation_vector_conditions_on_human_filter() {
        let set = labels(&[("a", No, None), ("b", No, None)]);
        let recs = vec![record("a", Yes, Some(Yes)), record("b", No, None)];
        assert!(correctness_vector(&set, &recs, Stage::Evaluation, "praise")
            .unwrap()
            .is_empty());

        let set = labels(&[("a", Yes, Some(Yes)), ("b", Yes, Some(No)), ("c", No, None)]);
        let recs = vec![
            record("a", No, None),
            record("b", Yes, Some(No)),
            record("c", Yes, Some(Yes)),
        ];
        let v = correctness_vector(&set, &recs, Stage::Evaluation, "praise").unwrap();
        assert_eq!(v, vec![false, true]);
    }

    #[test]
    fn missing_label_is_coverage_error() {
        let set = labels(&[("a", No, None)]);
        let recs = vec![record("zz", No, None)];
        match correctness_vector(&set, &recs, Stage::Filter, "praise") {
            Err(Error::Coverage { missing }) => assert_eq!(missing, vec!["zz".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn records_file_rejects_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        let recs = vec![record("a", Yes, Some(No)), record("b", No, None)];
        write_records(&path, &recs).unwrap();
        assert_eq!(read_records(&path).unwrap(), recs);
        write_records(&path, &[recs[0].clone(), recs[0].clone()]).unwrap();
        assert!(read_records(&path).is_err());
    }

    fn coding() -> impl Strategy<Value = (Answer, Option<Answer>)> {
        prop_oneof![
            Just((No, None)),
            any::<bool>().prop_map(|e| (Yes, Some(Answer::from_bool(e)))),
        ]
    }

    proptest! {
        #[test]
        fn filter_accuracy_agrees_with_scores(pairs in prop::collection::vec((coding(), coding()), 1..60)) {
            let mut set = LabelSet::new("h");
            let mut recs = Vec::new();
            let mut cells = Vec::new();
            for (i, (h, m)) in pairs.iter().enumerate() {
                let id = format!("t{i:03}");
                set.insert(id.clone(), human(h.0, h.1)).unwrap();
                let r = record(&id, m.0, m.1);
                cells.push(score_transcript(set.get(&id, "praise").unwrap(), &r).unwrap());
                recs.push(r);
            }
            let n = pairs.len();
            let total = total_score(&cells);
            prop_assert!(total as usize <= 2 * n);
            let filter_hits = correctness_vector(&set, &recs, Stage::Filter, "praise").unwrap()
                .into_iter().filter(|&b| b).count();
            let scored = cells.iter().filter(|c| c.points() >= 1).count();
            prop_assert_eq!(filter_hits, scored);
        }

        #[test]
        fn scoring_is_symmetric(a in coding(), b in coding()) {
            prop_assert_eq!(score_codings(a, b).unwrap(), score_codings(b, a).unwrap());
        }
    }
}
