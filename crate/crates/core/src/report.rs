//! Accuracy reports: per (model, skill) filter and evaluation accuracy with
//! bootstrap intervals, point totals, and at-chance rows.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::LabelSet;
use crate::error::{Error, Result};
use crate::label::{Answer, Stage};
use crate::scoring::{correctness_vector, score_transcript, total_score, RunRecord};
use crate::stats::{bootstrap_ci, chance_baseline, BootstrapCI, DEFAULT_LEVEL, DEFAULT_RESAMPLES};

pub const CHANCE_MODEL: &str = "At-Chance";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsConfig {
    #[serde(default = "default_resamples")]
    pub n_resamples: u32,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_resamples")]
    pub chance_trials: u32,
}

fn default_resamples() -> u32 {
    DEFAULT_RESAMPLES
}
fn default_level() -> f64 {
    DEFAULT_LEVEL
}
fn default_seed() -> u64 {
    42
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig {
            n_resamples: DEFAULT_RESAMPLES,
            level: DEFAULT_LEVEL,
            seed: default_seed(),
            chance_trials: DEFAULT_RESAMPLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model_name: String,
    pub skill_id: String,
    pub filter_ci: BootstrapCI,
    /// `None` when no transcript has a human filter of yes.
    pub evaluation_ci: Option<BootstrapCI>,
    pub total_points: u32,
    pub max_points: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChanceRow {
    pub skill_id: String,
    pub filter_ci: BootstrapCI,
    pub evaluation_ci: Option<BootstrapCI>,
    /// Expected points of a uniform random predictor.
    pub expected_points: f64,
    pub max_points: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub stats: StatsConfig,
    pub rows: Vec<ReportRow>,
    pub chance_rows: Vec<ChanceRow>,
}

impl AccuracyReport {
    pub fn row(&self, model: &str, skill: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.model_name == model && r.skill_id == skill)
    }

    fn skills(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for s in self
            .rows
            .iter()
            .map(|r| r.skill_id.as_str())
            .chain(self.chance_rows.iter().map(|r| r.skill_id.as_str()))
        {
            if !out.contains(&s) {
                out.push(s);
            }
        }
        out
    }

    fn models(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.model_name.as_str()) {
                out.push(&r.model_name);
            }
        }
        out
    }
}

pub fn build_report(
    records: &[RunRecord],
    labels: &LabelSet,
    cfg: &StatsConfig,
) -> Result<AccuracyReport> {
    if records.is_empty() {
        return Err(Error::Contract("no run records to report on".into()));
    }
    let missing: BTreeSet<&str> = records
        .iter()
        .filter(|r| labels.get(&r.transcript_id, &r.skill_id).is_none())
        .map(|r| r.transcript_id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Coverage {
            missing: missing.into_iter().map(str::to_owned).collect(),
        });
    }
    let mut seen = HashSet::new();
    for r in records {
        r.check()?;
        if !seen.insert(r.key()) {
            return Err(Error::Contract(format!(
                "duplicate record for {}/{}/{}",
                r.model_name, r.skill_id, r.transcript_id
            )));
        }
    }

    let mut pairs: Vec<(&str, &str)> = Vec::new();
    for r in records {
        let p = (r.model_name.as_str(), r.skill_id.as_str());
        if !pairs.contains(&p) {
            pairs.push(p);
        }
    }

    let mut rows = Vec::with_capacity(pairs.len());
    for (model, skill) in pairs {
        let group: Vec<RunRecord> = records
            .iter()
            .filter(|r| r.model_name == model && r.skill_id == skill)
            .cloned()
            .collect();
        let filter = correctness_vector(labels, &group, Stage::Filter, skill)?;
        let eval = correctness_vector(labels, &group, Stage::Evaluation, skill)?;
        let cells = group
            .iter()
            .map(|r| {
                score_transcript(
                    labels
                        .get(&r.transcript_id, skill)
                        .expect("coverage checked"),
                    r,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(ReportRow {
            model_name: model.to_owned(),
            skill_id: skill.to_owned(),
            filter_ci: bootstrap_ci(&filter, cfg.n_resamples, cfg.level, cfg.seed)?,
            evaluation_ci: if eval.is_empty() {
                None
            } else {
                Some(bootstrap_ci(&eval, cfg.n_resamples, cfg.level, cfg.seed)?)
            },
            total_points: total_score(&cells),
            max_points: 2 * group.len() as u32,
        });
    }

    let mut chance_rows = Vec::new();
    let skills: Vec<&str> = rows.iter().fold(Vec::new(), |mut acc, r| {
        if !acc.contains(&r.skill_id.as_str()) {
            acc.push(r.skill_id.as_str());
        }
        acc
    });
    for skill in skills {
        let scored: BTreeSet<&str> = records
            .iter()
            .filter(|r| r.skill_id == skill)
            .map(|r| r.transcript_id.as_str())
            .collect();
        let mut subset = LabelSet::new(labels.rater_id.clone());
        for id in &scored {
            subset.insert(
                *id,
                labels.get(id, skill).expect("coverage checked").clone(),
            )?;
        }
        let has_positive = subset
            .for_skill(skill)
            .any(|(_, l)| l.filter == Answer::Yes);
        let expected_points = subset
            .for_skill(skill)
            .map(|(_, l)| match l.filter {
                // random filter matches half the time; a yes match then
                // earns 2 or 1 with equal odds
                Answer::No => 1.0,
                Answer::Yes => 0.75,
            })
            .sum();
        chance_rows.push(ChanceRow {
            skill_id: skill.to_owned(),
            filter_ci: chance_baseline(
                &subset,
                skill,
                Stage::Filter,
                cfg.chance_trials,
                cfg.level,
                cfg.seed,
            )?,
            evaluation_ci: if has_positive {
                Some(chance_baseline(
                    &subset,
                    skill,
                    Stage::Evaluation,
                    cfg.chance_trials,
                    cfg.level,
                    cfg.seed,
                )?)
            } else {
                None
            },
            expected_points,
            max_points: 2 * scored.len() as u32,
        });
    }

    Ok(AccuracyReport {
        stats: *cfg,
        rows,
        chance_rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Markdown,
    Csv,
    Json,
}

/// Integer percentage, rounding halves up.
pub fn percent(x: f64) -> i64 {
    (x * 100.0 + 1e-9).round() as i64
}

/// `"98, (94, 100)"`.
pub fn format_cell(ci: &BootstrapCI) -> String {
    format!(
        "{}, ({}, {})",
        percent(ci.point),
        percent(ci.lower),
        percent(ci.upper)
    )
}

fn opt_cell(ci: Option<&BootstrapCI>) -> String {
    ci.map_or_else(|| "n/a".to_owned(), format_cell)
}

pub fn render(report: &AccuracyReport, format: Format) -> String {
    match format {
        Format::Markdown => render_markdown(report),
        Format::Csv => render_csv(report),
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
    }
}

fn render_markdown(report: &AccuracyReport) -> String {
    let skills = report.skills();
    let level = percent(report.stats.level);
    let mut header = vec!["Model".to_owned()];
    for stage in ["Filter", "Evaluation"] {
        for s in &skills {
            header.push(format!("{stage}: {s} ({level}% CI)"));
        }
    }
    for s in &skills {
        header.push(format!("Points: {s}"));
    }

    let mut out = String::new();
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", " --- |".repeat(header.len()));
    for model in report.models() {
        let mut cells = vec![model.to_owned()];
        let row = |s: &str| report.row(model, s);
        cells.extend(
            skills
                .iter()
                .map(|s| row(s).map_or("n/a".into(), |r| format_cell(&r.filter_ci))),
        );
        cells.extend(
            skills
                .iter()
                .map(|s| opt_cell(row(s).and_then(|r| r.evaluation_ci.as_ref()))),
        );
        cells.extend(skills.iter().map(|s| {
            row(s).map_or("n/a".into(), |r| {
                format!("{}/{}", r.total_points, r.max_points)
            })
        }));
        let _ = writeln!(out, "| {} |", cells.join(" | "));
    }
    if !report.chance_rows.is_empty() {
        let chance = |s: &str| report.chance_rows.iter().find(|r| r.skill_id == s);
        let mut cells = vec![CHANCE_MODEL.to_owned()];
        cells.extend(
            skills
                .iter()
                .map(|s| chance(s).map_or("n/a".into(), |r| format_cell(&r.filter_ci))),
        );
        cells.extend(
            skills
                .iter()
                .map(|s| opt_cell(chance(s).and_then(|r| r.evaluation_ci.as_ref()))),
        );
        cells.extend(skills.iter().map(|s| {
            chance(s).map_or("n/a".into(), |r| {
                format!("{:.1}/{}", r.expected_points, r.max_points)
            })
        }));
        let _ = writeln!(out, "| {} |", cells.join(" | "));
    }
    let _ = writeln!(
        out,
        "\nAccuracy in percent with {level}% percentile bootstrap intervals ({} resamples, seed {}). \
         Evaluation accuracy is over transcripts whose human filter answer is yes.",
        report.stats.n_resamples, report.stats.seed
    );
    out
}

fn render_csv(report: &AccuracyReport) -> String {
    let mut out = String::from(
        "model,skill,prompt,point,lower,upper,n_items,n_resamples,level,seed,points,max_points\n",
    );
    let mut line = |model: &str,
                    skill: &str,
                    stage: Stage,
                    ci: Option<&BootstrapCI>,
                    points: String,
                    max: u32| {
        match ci {
            Some(ci) => {
                let _ = writeln!(
                    out,
                    "{model},{skill},{stage},{},{},{},{},{},{},{},{points},{max}",
                    ci.point, ci.lower, ci.upper, ci.n_items, ci.n_resamples, ci.level, ci.seed
                );
            }
            None => {
                let _ = writeln!(out, "{model},{skill},{stage},,,,0,,,,{points},{max}");
            }
        }
    };
    for r in &report.rows {
        for (stage, ci) in [
            (Stage::Filter, Some(&r.filter_ci)),
            (Stage::Evaluation, r.evaluation_ci.as_ref()),
        ] {
            line(
                &r.model_name,
                &r.skill_id,
                stage,
                ci,
                r.total_points.to_string(),
                r.max_points,
            );
        }
    }
    for r in &report.chance_rows {
        for (stage, ci) in [
            (Stage::Filter, Some(&r.filter_ci)),
            (Stage::Evaluation, r.evaluation_ci.as_ref()),
        ] {
            line(
                CHANCE_MODEL,
                &r.skill_id,
                stage,
                ci,
                r.expected_points.to_string(),
                r.max_points,
            );
        }
    }
    out
}

/// Writes `report.md`, `report.csv` and `report.json` into a fresh directory
/// under `out_dir` named `report-<UTC timestamp>-<config digest>`.
pub fn write_report_files(report: &AccuracyReport, out_dir: impl AsRef<Path>) -> Result<PathBuf> {
    let out_dir = out_dir.as_ref();
    let json = render(report, Format::Json);
    let stats_json = serde_json::to_vec(&report.stats)?;
    let digest = hex::encode(Sha256::digest(&stats_json));
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let base = format!("report-{stamp}-{}", &digest[..12]);

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut dir = out_dir.join(&base);
    let mut n = 1;
    loop {
        match fs::create_dir(&dir) {
            Ok(()) => break,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                dir = out_dir.join(format!("{base}-{n}"));
                n += 1;
            }
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
    for (name, body) in [
        ("report.md", render(report, Format::Markdown)),
        ("report.csv", render(report, Format::Csv)),
        ("report.json", json),
    ] {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    }
    Ok(dir)
}
