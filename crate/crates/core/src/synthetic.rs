//! Synthetic tutoring transcripts and matching mock fixtures, for offline
//! runs and tests.

use std::fs;
use std::path::Path;

use crate::corpus::{Corpus, Transcript};
use crate::error::{Error, Result};
use crate::label::{Answer, Stage};
use crate::llm::{MockFixtures, Provider};
use crate::prompting::{render_prompt_for, SkillSpec};

const SMALL_TALK: &[&str] = &[
    "Okay, can you see my screen now?",
    "Hi, how was school today?",
    "Let's open the next lesson in the workbook.",
    "Give me one second, my audio cut out.",
    "Alright, let's look at problem number four together.",
    "What do you think the first step should be here?",
    "So we have three fourths plus one eighth.",
    "Can you read the question out loud for me?",
    "We need a common denominator first, right?",
    "Yeah, I think so. Eight?",
    "Let's write that down before we move on.",
    "Um, I'm not sure what to do with the remainder.",
    "Take your time, there's no rush.",
    "How many groups of six fit into forty-two?",
    "Seven, I think.",
    "Let's check it with multiplication.",
];

const PRAISE_LINES: &[&str] = &[
    "You kept working through every step of that fraction problem. Great work, keep it up!",
    "Nice, I like how you checked your answer before moving on.",
    "Awesome. You stuck with that one even when it got hard.",
];

const OUTCOME_PRAISE_LINES: &[&str] = &["Yes, perfect. That's right.", "Awesome job, you got it."];

const ERROR_LINES: &[&str] = &[
    "Hmm, the program marked that one wrong. What did you do for the second step?",
    "So you're really close. How can we use what we did on the last problem here?",
    "I got thirty-six. Oh wait, it says that's incorrect.",
];

/// Dialogue text of roughly `target_bytes` bytes, with praise and a math
/// error worked in when requested. No speaker labels.
pub fn transcript_text(seed: usize, target_bytes: usize, praise: bool, error: bool) -> String {
    let mut lines: Vec<&str> = Vec::new();
    let mut len = 0;
    let mut push = |lines: &mut Vec<&'static str>, l: &'static str| {
        len += l.len() + 1;
        lines.push(l);
        len
    };
    let mut i = seed;
    while push(&mut lines, SMALL_TALK[i % SMALL_TALK.len()]) < target_bytes {
        i = i.wrapping_mul(31).wrapping_add(7);
        if lines.len() == 6 && error {
            for l in ERROR_LINES {
                push(&mut lines, l);
            }
        }
        if lines.len() == 12 && praise {
            push(&mut lines, PRAISE_LINES[seed % PRAISE_LINES.len()]);
            push(&mut lines, OUTCOME_PRAISE_LINES[seed % OUTCOME_PRAISE_LINES.len()]);
        }
    }
    let mut text = lines.join("\n");
    text.push('\n');
    text
}

/// Writes each transcript to `<dir>/<id>.txt`.
pub fn write_corpus(dir: impl AsRef<Path>, transcripts: &[Transcript]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for t in transcripts {
        let p = dir.join(format!("{}.txt", t.id));
        fs::write(&p, &t.text).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

/// A well-formed model response for `answer`, optionally with a rationale.
pub fn response(answer: Answer, rationale: Option<&str>) -> String {
    let line = match answer {
        Answer::Yes => "ANSWER: YES",
        Answer::No => "ANSWER: NO",
    };
    match rationale {
        Some(r) => format!("{r}\n{line}"),
        None => line.to_owned(),
    }
}

/// Mock fixtures under which a model codes every transcript as `coding`
/// says, unanimously across samples.
///
/// `coding(skill_id, transcript_id)` returns the filter answer and, for a yes
/// filter, the evaluation answer. Evaluation fixtures are only written for
/// yes filters, matching the chain.
pub fn fixtures_for(
    corpus: &Corpus,
    skills: &[SkillSpec],
    provider: Provider,
    coding: impl Fn(&str, &str) -> (Answer, Option<Answer>),
) -> Result<MockFixtures> {
    let mut fx = MockFixtures::default();
    for spec in skills {
        for t in corpus.iter() {
            let (filter, evaluation) = coding(spec.skill_id(), &t.id);
            let p = render_prompt_for(spec, Stage::Filter, t, Some(provider))?;
            let why = format!("Coded {} for {} on {}.", filter, spec.skill_id(), t.id);
            fx.set(&p.digest(), vec![response(filter, Some(&why))]);
            if filter == Answer::Yes {
                let eval = evaluation.ok_or_else(|| {
                    Error::Contract(format!(
                        "{}/{}: yes filter needs an evaluation answer",
                        spec.skill_id(),
                        t.id
                    ))
                })?;
                let p = render_prompt_for(spec, Stage::Evaluation, t, Some(provider))?;
                let why = spec
                    .force_rationale_on_eval()
                    .then(|| format!("Evaluated {eval}."));
                fx.set(&p.digest(), vec![response(eval, why.as_deref())]);
            }
        }
    }
    Ok(fx)
}
