//! `tutor-moves` command-line tool.
//!
//! Exit codes: 0 success, 1 some transcripts failed, 2 configuration or
//! contract error.

mod config;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use tutor_moves::llm::{MockFixtures, ProviderRouter, ReqwestTransport, ResponseCache};
use tutor_moves::prompting::{default_skills, load_skill_manifest};
use tutor_moves::report::write_report_files;
use tutor_moves::scoring::read_records;
use tutor_moves::stats::agreement;
use tutor_moves::{
    build_report, import_labels, render, Answer, ConsensusConfig, Corpus, Error, Format, LabelSet,
    LlmClient, ModelConfig, RecordStore, Result, RunPlan, Stage, StatsConfig,
};

use crate::config::RunConfig;

const DEFAULT_CACHE_FILE: &str = "responses.ndjson";

#[derive(Parser)]
#[command(
    name = "tutor-moves",
    version,
    about = "Assess tutor moves in dialogue transcripts with chained LLM prompts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a transcript directory and report how many files pass the size filter.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = tutor_moves::DEFAULT_MIN_BYTES)]
        min_bytes: u64,
        #[arg(long, default_value_t = tutor_moves::DEFAULT_MAX_BYTES)]
        max_bytes: u64,
    },
    /// Run the filter and evaluation prompts over a corpus.
    Run(RunArgs),
    /// Score run records against human labels and write report files.
    Report {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        resamples: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        level: Option<f64>,
        #[arg(long)]
        chance_trials: Option<u32>,
        /// Directory for the report folder; defaults to the records' directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inter-rater agreement between two label files.
    Agreement {
        labels_a: PathBuf,
        labels_b: PathBuf,
        #[arg(long)]
        skill: String,
        #[arg(long, value_enum, default_value_t = PromptKind::Filter)]
        prompt: PromptKind,
    },
    /// Run against live providers and save every response as mock fixtures.
    RecordFixtures {
        #[command(flatten)]
        run: RunArgs,
        /// Fixture file to create or extend.
        #[arg(long)]
        fixtures_out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PromptKind {
    Filter,
    Evaluation,
}

impl From<PromptKind> for Stage {
    fn from(k: PromptKind) -> Stage {
        match k {
            PromptKind::Filter => Stage::Filter,
            PromptKind::Evaluation => Stage::Evaluation,
        }
    }
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    skills: Option<PathBuf>,
    /// Only run these models (repeatable). With `--mock-fixtures` and no
    /// configured models, names the mock model.
    #[arg(long)]
    model: Vec<String>,
    /// Only run these skills (repeatable).
    #[arg(long)]
    skill: Vec<String>,
    #[arg(long)]
    samples: Option<u32>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    mock_fixtures: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest {
            corpus,
            min_bytes,
            max_bytes,
        } => cmd_ingest(&corpus, min_bytes, max_bytes),
        Command::Run(args) => cmd_run(&args, None),
        Command::Report {
            records,
            labels,
            resamples,
            seed,
            level,
            chance_trials,
            out,
        } => {
            let mut stats = StatsConfig::default();
            if let Some(n) = resamples {
                stats.n_resamples = n;
                stats.chance_trials = n;
            }
            stats.seed = seed.unwrap_or(stats.seed);
            stats.level = level.unwrap_or(stats.level);
            stats.chance_trials = chance_trials.unwrap_or(stats.chance_trials);
            cmd_report(&records, &labels, &stats, out.as_deref())
        }
        Command::Agreement {
            labels_a,
            labels_b,
            skill,
            prompt,
        } => cmd_agreement(&labels_a, &labels_b, &skill, prompt.into()),
        Command::RecordFixtures { run, fixtures_out } => cmd_run(&run, Some(&fixtures_out)),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn cmd_ingest(dir: &Path, min_bytes: u64, max_bytes: u64) -> Result<ExitCode> {
    let corpus = Corpus::load(dir)?;
    for e in corpus.errors() {
        eprintln!("skipped {}: {}", e.path.display(), e.message);
    }
    let kept = corpus.filter_by_size(min_bytes, max_bytes)?;
    println!("kept {}, dropped {}", kept.len(), corpus.len() - kept.len());
    Ok(ExitCode::SUCCESS)
}

fn resolve_run_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => {
            let (Some(corpus), Some(out)) = (&args.corpus, &args.out) else {
                return Err(Error::Config(
                    "without --config, both --corpus and --out are required".into(),
                ));
            };
            RunConfig::new(corpus.clone(), out.clone())
        }
    };
    if let Some(p) = &args.corpus {
        cfg.corpus_dir = p.clone();
    }
    if let Some(p) = &args.out {
        cfg.output_dir = p.clone();
    }
    if let Some(p) = &args.labels {
        cfg.labels_file = Some(p.clone());
    }
    if let Some(p) = &args.skills {
        cfg.skills_manifest = Some(p.clone());
    }
    if let Some(p) = &args.cache {
        cfg.cache_file = Some(p.clone());
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if args.samples.is_some() || args.temperature.is_some() {
        cfg.consensus = ConsensusConfig::new(
            args.samples.unwrap_or(cfg.consensus.n_samples()),
            args.temperature.unwrap_or(cfg.consensus.temperature()),
            cfg.consensus.min_valid_fraction(),
        )?;
    }
    if let Some(fx) = &args.mock_fixtures {
        if cfg.models.is_empty() {
            let name = args.model.first().map_or("mock", String::as_str);
            let mut m = ModelConfig::mock(name);
            m.fixtures = Some(fx.clone());
            cfg.models.push(m);
        } else {
            for m in cfg
                .models
                .iter_mut()
                .filter(|m| m.provider == tutor_moves::Provider::Mock)
            {
                m.fixtures = Some(fx.clone());
            }
        }
    }
    if !args.model.is_empty() {
        let unknown: Vec<&str> = args
            .model
            .iter()
            .filter(|n| !cfg.models.iter().any(|m| &m.model_name == *n))
            .map(String::as_str)
            .collect();
        if !unknown.is_empty() {
            return Err(Error::Config(format!(
                "unknown model(s): {}",
                unknown.join(", ")
            )));
        }
        cfg.models.retain(|m| args.model.contains(&m.model_name));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_run(args: &RunArgs, fixtures_out: Option<&Path>) -> Result<ExitCode> {
    let cfg = resolve_run_config(args)?;

    let mut skills = match &cfg.skills_manifest {
        Some(p) => load_skill_manifest(p)?,
        None => default_skills(),
    };
    if !args.skill.is_empty() {
        let known: BTreeSet<&str> = skills.iter().map(|s| s.skill_id()).collect();
        if let Some(bad) = args.skill.iter().find(|s| !known.contains(s.as_str())) {
            return Err(Error::Config(format!("unknown skill `{bad}`")));
        }
        skills.retain(|s| args.skill.iter().any(|k| k == s.skill_id()));
    }

    let loaded = Corpus::load(&cfg.corpus_dir)?;
    for e in loaded.errors() {
        eprintln!("skipped {}: {}", e.path.display(), e.message);
    }
    let labels = cfg
        .labels_file
        .as_ref()
        .map(|p| import_labels(p, &loaded))
        .transpose()?;
    let corpus = loaded.filter_by_size(cfg.min_bytes, cfg.max_bytes)?;
    eprintln!(
        "corpus: kept {}, dropped {}",
        corpus.len(),
        loaded.len() - corpus.len()
    );

    let router = ProviderRouter::from_models(&cfg.models, Arc::new(ReqwestTransport::default()))?;
    let cache_path = cfg
        .cache_file
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join(DEFAULT_CACHE_FILE));
    let mut client =
        LlmClient::new(Arc::new(router)).with_cache(Arc::new(ResponseCache::open(&cache_path)?));
    if fixtures_out.is_some() {
        client = client.recording();
    }

    let store = RecordStore::open(&cfg.output_dir)?;
    let plan = RunPlan {
        corpus: &corpus,
        skills: &skills,
        models: &cfg.models,
        consensus: cfg.consensus,
        workers: cfg.workers,
        samples_in_flight: cfg.samples_in_flight,
    };
    let outcome = tutor_moves::run_assessment(&client, &plan, &store)?;

    if let Some(path) = fixtures_out {
        let mut fx = if path.exists() {
            MockFixtures::load(path)?
        } else {
            MockFixtures::default()
        };
        fx.merge(client.recorded());
        fx.save(path)?;
        eprintln!("fixtures: {} prompts in {}", fx.len(), path.display());
    }

    let stats = client.stats();
    eprintln!(
        "records: {} ({} resumed, {} new), failures: {}, backend calls: {}, cache hits: {}",
        outcome.records.len(),
        outcome.resumed,
        outcome.completed,
        outcome.failures.len(),
        stats.backend_calls,
        stats.cache_hits
    );
    for f in &outcome.failures {
        eprintln!(
            "failed {}/{}/{} at {}: {}",
            f.model_name, f.skill_id, f.transcript_id, f.stage, f.error
        );
    }
    println!("{}", store.records_path().display());

    if let (Some(labels), false) = (&labels, outcome.records.is_empty()) {
        let report = build_report(&outcome.records, labels, &cfg.stats)?;
        let dir = write_report_files(&report, &cfg.output_dir)?;
        print!("{}", render(&report, Format::Markdown));
        eprintln!("report: {}", dir.display());
    }

    Ok(if outcome.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_report(
    records: &Path,
    labels: &Path,
    stats: &StatsConfig,
    out: Option<&Path>,
) -> Result<ExitCode> {
    let recs = read_records(records)?;
    let labels = LabelSet::read(labels)?;
    let report = build_report(&recs, &labels, stats)?;
    let out = out.unwrap_or_else(|| records.parent().unwrap_or(Path::new(".")));
    let dir = write_report_files(&report, out)?;
    print!("{}", render(&report, Format::Markdown));
    eprintln!("report: {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_agreement(a_path: &Path, b_path: &Path, skill: &str, stage: Stage) -> Result<ExitCode> {
    let a = LabelSet::read(a_path)?;
    let b = LabelSet::read(b_path)?;
    let shared: Vec<&str> = a
        .for_skill(skill)
        .map(|(id, _)| id)
        .filter(|id| b.get(id, skill).is_some())
        .collect();
    if shared.is_empty() {
        return Err(Error::Contract(format!(
            "{} and {} share no transcripts labelled for skill `{skill}`",
            a.rater_id, b.rater_id
        )));
    }
    let only = a.for_skill(skill).count() + b.for_skill(skill).count() - 2 * shared.len();
    if only > 0 {
        eprintln!("note: {only} transcript(s) labelled by only one rater are ignored");
    }

    let pairs: Vec<(Answer, Answer)> = shared
        .iter()
        .filter_map(|id| {
            let (la, lb) = (a.get(id, skill)?, b.get(id, skill)?);
            match stage {
                Stage::Filter => Some((la.filter, lb.filter)),
                Stage::Evaluation => Some((la.evaluation?, lb.evaluation?)),
            }
        })
        .collect();
    if pairs.is_empty() {
        return Err(Error::Contract(format!(
            "no transcripts where both raters answered yes to the `{skill}` filter"
        )));
    }
    let (xs, ys): (Vec<Answer>, Vec<Answer>) = pairs.into_iter().unzip();
    let r = agreement(&xs, &ys)?;
    println!("skill: {skill}, prompt: {stage}, items: {}", r.n_items);
    println!("percent agreement: {:.2}%", r.percent_agreement * 100.0);
    println!("cohen's kappa: {:.4}", r.kappa);
    Ok(ExitCode::SUCCESS)
}
