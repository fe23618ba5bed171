//! File-to-file commands behind the CLI. Every command reads serialized
//! inputs, writes one JSON artifact and returns a one-line summary.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dsl::{canonical, eval_program, parse_program, program_value, ParseError, Program};
use crate::metrics::{f1_program, EvalReport, ExampleSet, Labels, MetricsError};
use crate::nlp::{Nlp, NlpError, ProviderConfig, TaskContext};
use crate::select::{select, LossReport, SelectError};
use crate::suggest::{suggest_labels, FeatureConfig, SuggestError};
use crate::synth::{brute_force_synthesize, synthesize, OptimalSet, SynthConfig, SynthError};
use crate::webtree::{Corpus, Webpage, WebtreeError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Webtree(#[from] WebtreeError),
    #[error(transparent)]
    Nlp(#[from] NlpError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Suggest(#[from] SuggestError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Contract(String),
}

impl PipelineError {
    /// 2 for contract violations, 3 for provider failures, 4 for exceeded caps.
    pub fn exit_code(&self) -> i32 {
        let nlp = match self {
            PipelineError::Nlp(e) => Some(e),
            PipelineError::Synth(SynthError::Nlp(e)) => Some(e),
            PipelineError::Select(SelectError::Nlp(e)) => Some(e),
            PipelineError::Suggest(SuggestError::Nlp(e)) => Some(e),
            _ => None,
        };
        match (self, nlp) {
            (_, Some(NlpError::Provider(_))) => 3,
            (PipelineError::Synth(SynthError::CapExceeded { .. } | SynthError::TooManyExamples { .. }), _) => 4,
            _ => 2,
        }
    }
}

/// Configuration file shared by all commands. Command-line flags are OR-ed
/// into the boolean switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub provider: ProviderConfig,
    pub synth: SynthConfig,
    pub features: FeatureConfig,
    pub no_prune: bool,
    pub no_decomp: bool,
    /// Keyword predicates only: no question answering.
    pub kw_only: bool,
    /// Question answering only: no keyword predicates.
    pub nl_only: bool,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig, PipelineError> {
        let cfg: RunConfig = match path {
            Some(p) => serde_json::from_str(&read(p)?)
                .map_err(|e| PipelineError::Contract(format!("malformed config {}: {e}", p.display())))?,
            None => RunConfig::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.kw_only && self.nl_only {
            return Err(PipelineError::Contract("kw_only and nl_only are mutually exclusive".into()));
        }
        Ok(())
    }

    /// The synthesis config with the ablation switches applied.
    pub fn synth_config(&self) -> Result<SynthConfig, PipelineError> {
        self.validate()?;
        let mut s = self.synth.clone();
        s.no_prune |= self.no_prune;
        s.no_decomp |= self.no_decomp;
        if self.kw_only {
            s.use_answer = false;
        }
        if self.nl_only {
            s.use_keyword = false;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn nlp(&self) -> Result<Nlp, PipelineError> {
        Ok(Nlp::from_config(&self.provider)?)
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.display().to_string(), source }
}

fn read(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(io(path))
}

fn write(path: &Path, body: &str) -> Result<(), PipelineError> {
    let mut s = body.to_string();
    if !s.ends_with('\n') {
        s.push('\n');
    }
    std::fs::write(path, s).map_err(io(path))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), PipelineError> {
    write(path, &serde_json::to_string_pretty(v).expect("value serializes"))
}

/// One keyword per line; blank lines and `#` comments are skipped.
pub fn read_keywords(path: &Path) -> Result<Vec<String>, PipelineError> {
    Ok(read(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

pub fn read_program(path: &Path) -> Result<Program, PipelineError> {
    Ok(parse_program(&read(path)?)?)
}

pub fn program_json(p: &Program) -> String {
    serde_json::to_string_pretty(&program_value(p)).expect("program serializes")
}

fn pages(corpus: &Corpus) -> Vec<Arc<Webpage>> {
    corpus.pages().iter().map(|p| Arc::clone(&p.page)).collect()
}

pub fn cmd_ingest(dir: &Path, out: &Path) -> Result<String, PipelineError> {
    let corpus = Corpus::ingest_dir(dir)?;
    write(out, &corpus.to_json())?;
    Ok(format!("ingested {} pages into {}", corpus.len(), out.display()))
}

/// Inputs of `synthesize` and `oracle`.
#[derive(Debug, Clone)]
pub struct SynthArgs {
    pub corpus: PathBuf,
    pub labels: PathBuf,
    pub question: String,
    pub keywords: PathBuf,
    pub out: PathBuf,
    pub stats: Option<PathBuf>,
}

fn examples(a: &SynthArgs) -> Result<ExampleSet, PipelineError> {
    let ctx = TaskContext::new(a.question.clone(), read_keywords(&a.keywords)?)?;
    let corpus = Corpus::load(&a.corpus)?;
    Ok(ExampleSet::from_labels(ctx, &corpus, &Labels::load(&a.labels)?)?)
}

fn finish_synth(a: &SynthArgs, set: &OptimalSet, what: &str) -> Result<String, PipelineError> {
    write(&a.out, &set.to_json())?;
    if let Some(p) = &a.stats {
        write_json(p, &set.stats)?;
    }
    Ok(format!(
        "{what}: {} optimal programs at F1 {:.4} in {} families ({} nodes expanded)",
        set.count(),
        set.f1.value(),
        set.families.len(),
        set.stats.nodes_expanded()
    ))
}

pub fn cmd_synthesize(a: &SynthArgs, cfg: &RunConfig) -> Result<String, PipelineError> {
    let e = examples(a)?;
    let set = synthesize(&e, &cfg.synth_config()?, &cfg.nlp()?)?;
    finish_synth(a, &set, "synthesized")
}

pub fn cmd_oracle(a: &SynthArgs, cfg: &RunConfig) -> Result<String, PipelineError> {
    let e = examples(a)?;
    let set = brute_force_synthesize(&e, &cfg.synth_config()?, &cfg.nlp()?)?;
    finish_synth(a, &set, "enumerated")
}

pub fn cmd_select(
    programs: &Path,
    corpus: &Path,
    n: usize,
    seed: u64,
    out: &Path,
    report: Option<&Path>,
    cfg: &RunConfig,
) -> Result<String, PipelineError> {
    let set = OptimalSet::from_json(&read(programs)?)?;
    let corpus = Corpus::load(corpus)?;
    let sel = select(&set, &pages(&corpus), n, seed, &cfg.nlp()?)?;
    write(out, &program_json(&sel.program))?;
    if let Some(r) = report {
        let rep = LossReport { n, seed, chosen: canonical(&sel.program), candidates: sel.candidates.clone() };
        write_json(r, &rep)?;
    }
    Ok(format!(
        "selected 1 of {} distinct ensemble programs (loss {}) over {} pages",
        sel.candidates.len(),
        sel.loss,
        corpus.len()
    ))
}

/// Per-page outputs: `{"pages":[{"id","output":[..]}]}`, outputs sorted.
pub fn extract_all(p: &Program, corpus: &Corpus, nlp: &Nlp) -> Result<Value, PipelineError> {
    let mut rows = Vec::with_capacity(corpus.len());
    for page in corpus.pages() {
        let out: Vec<String> = eval_program(p, &page.page, nlp)?.into_iter().collect();
        rows.push(json!({"id": page.id, "output": out}));
    }
    Ok(json!({ "pages": rows }))
}

pub fn cmd_extract(program: &Path, corpus: &Path, out: &Path, cfg: &RunConfig) -> Result<String, PipelineError> {
    let p = read_program(program)?;
    let corpus = Corpus::load(corpus)?;
    let v = extract_all(&p, &corpus, &cfg.nlp()?)?;
    write_json(out, &v)?;
    Ok(format!("extracted from {} pages", corpus.len()))
}

pub fn cmd_eval(program: &Path, corpus: &Path, labels: &Path, out: &Path, cfg: &RunConfig) -> Result<String, PipelineError> {
    let p = read_program(program)?;
    let corpus = Corpus::load(corpus)?;
    let e = ExampleSet::from_labels(p.ctx.clone(), &corpus, &Labels::load(labels)?)?;
    let (_, per) = f1_program(&p, &e, &cfg.nlp()?)?;
    let ids: Vec<String> = e.examples.iter().map(|x| x.id.clone()).collect();
    let rep = EvalReport::from_counts(&ids, &per);
    write_json(out, &rep)?;
    Ok(format!(
        "micro P {:.4} R {:.4} F1 {:.4} over {} pages",
        rep.micro.p,
        rep.micro.r,
        rep.micro.f1,
        ids.len()
    ))
}

/// Inputs of `suggest`.
#[derive(Debug, Clone)]
pub struct SuggestArgs {
    pub corpus: PathBuf,
    pub labeled: Option<PathBuf>,
    pub budget: usize,
    pub seed: u64,
    pub question: Option<String>,
    pub keywords: Option<PathBuf>,
    pub out: PathBuf,
}

pub fn cmd_suggest(a: &SuggestArgs, cfg: &RunConfig) -> Result<String, PipelineError> {
    let corpus = Corpus::load(&a.corpus)?;
    let labeled = match &a.labeled {
        Some(p) => Labels::load(p)?.page_ids(),
        None => Vec::new(),
    };
    let ctx = match (&a.question, &a.keywords) {
        (Some(q), Some(k)) => Some(TaskContext::new(q.clone(), read_keywords(k)?)?),
        (None, None) => None,
        _ => return Err(PipelineError::Contract("--question and --keywords go together".into())),
    };
    let ids = suggest_labels(&corpus, &labeled, a.budget, a.seed, ctx.as_ref(), &cfg.features, &cfg.nlp()?)?;
    write_json(&a.out, &json!({ "suggestions": ids }))?;
    Ok(format!("suggested {} pages: {}", ids.len(), ids.join(", ")))
}
