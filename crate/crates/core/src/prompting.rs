//! Skill prompt templates, rendering and response parsing.
//!
//! Each skill is a two-stage chain: a filter question decides whether the
//! situation occurs in the transcript, and an evaluation question grades the
//! tutor's move only when the filter answer is yes.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Transcript;
use crate::error::{Error, Result};
use crate::label::{Answer, Label, Stage};
use crate::llm::Provider;

pub const TRANSCRIPT_PLACEHOLDER: &str = "{{TRANSCRIPT}}";

pub const RATIONALE_INSTRUCTION: &str =
    "Before giving your answer, explain your reasoning in two to four \
sentences and quote the tutor's words that support your decision.";

pub const ANSWER_INSTRUCTION: &str =
    "End your response with a final line that reads exactly `ANSWER: YES` or `ANSWER: NO`.";

pub const PRAISE: &str = "praise";
pub const ERRORS: &str = "errors";

const PRAISE_FILTER: &str = include_str!("../templates/praise_filter.txt");
const PRAISE_EVALUATION: &str = include_str!("../templates/praise_evaluation.txt");
const ERRORS_FILTER: &str = include_str!("../templates/errors_filter.txt");
const ERRORS_EVALUATION: &str = include_str!("../templates/errors_evaluation.txt");

/// SHA-256 of a rendered prompt.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PromptDigest(pub [u8; 32]);

impl PromptDigest {
    pub fn of(text: &str) -> Self {
        PromptDigest(Sha256::digest(text.as_bytes()).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s).map_err(|e| Error::Config(format!("bad digest `{s}`: {e}")))?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| Error::Config(format!("digest `{s}` is not 32 bytes")))?;
        Ok(PromptDigest(arr))
    }
}

impl fmt::Display for PromptDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for PromptDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PromptDigest({})", self.to_hex())
    }
}

/// A fully rendered prompt, ready to send.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PromptText(String);

impl PromptText {
    pub fn new(text: impl Into<String>) -> Self {
        PromptText(text.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn digest(&self) -> PromptDigest {
        PromptDigest::of(&self.0)
    }
}

impl fmt::Display for PromptText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Per-provider replacement templates. Either stage may be left as the default.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TemplateOverride {
    pub filter_template: Option<String>,
    pub evaluation_template: Option<String>,
}

/// A tutor skill: filter and evaluation templates plus the rationale policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkillSpec {
    skill_id: String,
    filter_template: String,
    evaluation_template: String,
    force_rationale_on_eval: bool,
    overrides: BTreeMap<Provider, TemplateOverride>,
}

impl SkillSpec {
    pub fn new(
        skill_id: impl Into<String>,
        filter_template: impl Into<String>,
        evaluation_template: impl Into<String>,
        force_rationale_on_eval: bool,
    ) -> Result<Self> {
        let spec = SkillSpec {
            skill_id: skill_id.into(),
            filter_template: filter_template.into(),
            evaluation_template: evaluation_template.into(),
            force_rationale_on_eval,
            overrides: BTreeMap::new(),
        };
        check_template(&spec.skill_id, Stage::Filter, &spec.filter_template)?;
        check_template(&spec.skill_id, Stage::Evaluation, &spec.evaluation_template)?;
        Ok(spec)
    }

    /// Bundled effective-praise skill.
    pub fn praise() -> Self {
        SkillSpec::new(
            PRAISE,
            PRAISE_FILTER,
            PRAISE_EVALUATION,
            default_rationale_flag(PRAISE),
        )
        .expect("bundled praise templates are valid")
    }

    /// Bundled response-to-math-errors skill.
    pub fn errors() -> Self {
        SkillSpec::new(
            ERRORS,
            ERRORS_FILTER,
            ERRORS_EVALUATION,
            default_rationale_flag(ERRORS),
        )
        .expect("bundled errors templates are valid")
    }

    pub fn with_override(
        mut self,
        provider: Provider,
        stage: Stage,
        template: impl Into<String>,
    ) -> Result<Self> {
        let template = template.into();
        check_template(&self.skill_id, stage, &template)?;
        let o = self.overrides.entry(provider).or_default();
        match stage {
            Stage::Filter => o.filter_template = Some(template),
            Stage::Evaluation => o.evaluation_template = Some(template),
        }
        Ok(self)
    }

    pub fn skill_id(&self) -> &str {
        &self.skill_id
    }

    pub fn force_rationale_on_eval(&self) -> bool {
        self.force_rationale_on_eval
    }

    /// Template for a stage, honouring a provider override when one exists.
    pub fn template(&self, stage: Stage, provider: Option<Provider>) -> &str {
        let o = provider.and_then(|p| self.overrides.get(&p));
        match stage {
            Stage::Filter => o
                .and_then(|o| o.filter_template.as_deref())
                .unwrap_or(&self.filter_template),
            Stage::Evaluation => o
                .and_then(|o| o.evaluation_template.as_deref())
                .unwrap_or(&self.evaluation_template),
        }
    }

    pub fn wants_rationale(&self, stage: Stage) -> bool {
        match stage {
            Stage::Filter => true,
            Stage::Evaluation => self.force_rationale_on_eval,
        }
    }
}

/// Evaluating error responses works better without a rationale; every other
/// skill asks for one.
pub fn default_rationale_flag(skill_id: &str) -> bool {
    skill_id != ERRORS
}

pub fn default_skills() -> Vec<SkillSpec> {
    vec![SkillSpec::praise(), SkillSpec::errors()]
}

fn check_template(skill_id: &str, stage: Stage, template: &str) -> Result<()> {
    match template.matches(TRANSCRIPT_PLACEHOLDER).count() {
        1 => Ok(()),
        n => Err(Error::Config(format!(
            "skill `{skill_id}` {stage} template must contain exactly one {TRANSCRIPT_PLACEHOLDER} placeholder, found {n}"
        ))),
    }
}

pub fn render_prompt(
    spec: &SkillSpec,
    stage: Stage,
    transcript: &Transcript,
) -> Result<PromptText> {
    render_prompt_for(spec, stage, transcript, None)
}

/// Renders a stage prompt using the provider's template override, if any.
pub fn render_prompt_for(
    spec: &SkillSpec,
    stage: Stage,
    transcript: &Transcript,
    provider: Option<Provider>,
) -> Result<PromptText> {
    let template = spec.template(stage, provider);
    check_template(spec.skill_id(), stage, template)?;
    let (head, tail) = template
        .split_once(TRANSCRIPT_PLACEHOLDER)
        .expect("placeholder checked above");

    let mut out = String::with_capacity(template.len() + transcript.text.len() + 256);
    out.push_str(head);
    out.push_str(&transcript.text);
    out.push_str(tail);
    let body_len = out.trim_end().len();
    out.truncate(body_len);
    out.push_str("\n\n");
    if spec.wants_rationale(stage) {
        out.push_str(RATIONALE_INSTRUCTION);
        out.push_str("\n\n");
    }
    out.push_str(ANSWER_INSTRUCTION);
    out.push('\n');
    Ok(PromptText(out))
}

fn answer_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)answer\s*:\s*\**\s*(yes|no)\b").unwrap())
}

/// Extracts the final `ANSWER: YES|NO` and the text before it.
pub fn parse_verdict(response: &str) -> Result<(Answer, Option<String>)> {
    let Some(caps) = answer_line().captures_iter(response).last() else {
        return Err(Error::Unparseable {
            raw: response.to_owned(),
        });
    };
    let whole = caps.get(0).unwrap();
    let answer = if caps[1].eq_ignore_ascii_case("yes") {
        Answer::Yes
    } else {
        Answer::No
    };
    let rationale = response[..whole.start()]
        .trim_end_matches(|c: char| c.is_whitespace() || c == '*' || c == '#')
        .trim();
    Ok((
        answer,
        (!rationale.is_empty()).then(|| rationale.to_owned()),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    RunEvaluation,
    Skip,
}

pub fn chain_stage_gate(filter: Answer) -> Gate {
    match filter {
        Answer::Yes => Gate::RunEvaluation,
        Answer::No => Gate::Skip,
    }
}

/// A stage outcome together with the raw samples that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: Label,
    pub rationale: Option<String>,
    pub samples: Vec<String>,
}

impl Verdict {
    /// The evaluation verdict of a chain whose filter said no.
    pub fn skipped() -> Self {
        Verdict {
            label: Label::NotApplicable,
            rationale: None,
            samples: Vec::new(),
        }
    }

    pub fn answer(&self) -> Option<Answer> {
        self.label.answer()
    }

    pub fn check(&self) -> Result<()> {
        match (self.label, self.samples.is_empty()) {
            (Label::NotApplicable, false) => {
                Err(Error::Contract("skipped verdict carries samples".into()))
            }
            (Label::Yes | Label::No, true) => Err(Error::Contract("verdict has no samples".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    #[serde(default)]
    skills: Vec<ManifestSkill>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestSkill {
    id: String,
    filter_template: String,
    evaluation_template: String,
    force_rationale_on_eval: Option<bool>,
    #[serde(default)]
    overrides: BTreeMap<Provider, ManifestOverride>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestOverride {
    filter_template: Option<String>,
    evaluation_template: Option<String>,
}

/// Loads a TOML skill manifest. Template paths are relative to the manifest.
///
/// ```toml
/// [[skills]]
/// id = "praise"
/// filter_template = "praise_filter.txt"
/// evaluation_template = "praise_evaluation.txt"
/// force_rationale_on_eval = true
///
/// [skills.overrides.gemini-compatible]
/// evaluation_template = "praise_evaluation_gemini.txt"
/// ```
pub fn load_skill_manifest(path: impl AsRef<Path>) -> Result<Vec<SkillSpec>> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: ManifestFile =
        toml::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let read = |rel: &str| {
        let p = base.join(rel);
        fs::read_to_string(&p).map_err(|e| Error::io(p, e))
    };

    let mut specs: Vec<SkillSpec> = Vec::new();
    for skill in manifest.skills {
        if specs.iter().any(|s| s.skill_id == skill.id) {
            return Err(Error::Config(format!(
                "duplicate skill `{}` in manifest",
                skill.id
            )));
        }
        let force = skill
            .force_rationale_on_eval
            .unwrap_or_else(|| default_rationale_flag(&skill.id));
        let mut spec = SkillSpec::new(
            &skill.id,
            read(&skill.filter_template)?,
            read(&skill.evaluation_template)?,
            force,
        )?;
        for (provider, o) in skill.overrides {
            if let Some(f) = &o.filter_template {
                spec = spec.with_override(provider, Stage::Filter, read(f)?)?;
            }
            if let Some(e) = &o.evaluation_template {
                spec = spec.with_override(provider, Stage::Evaluation, read(e)?)?;
            }
        }
        specs.push(spec);
    }
    if specs.is_empty() {
        return Err(Error::Config(format!(
            "{}: manifest lists no skills",
            path.display()
        )));
    }
    Ok(specs)
}
