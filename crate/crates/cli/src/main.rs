use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use webextract::pipeline::{
    cmd_eval, cmd_extract, cmd_ingest, cmd_oracle, cmd_select, cmd_suggest, cmd_synthesize, PipelineError, RunConfig,
    SuggestArgs, SynthArgs,
};

/// Synthesize, select and run guarded web-extraction programs.
#[derive(Debug, Parser)]
#[command(name = "webextract", version)]
struct Cli {
    /// JSON run configuration (provider, synth, features, flags).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Parse a directory of HTML files into a corpus file.
    Ingest {
        #[arg(long)]
        html_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute every optimal program for the labeled pages.
    Synthesize(SynthCmd),
    /// Same as synthesize, by exhaustive enumeration.
    Oracle(SynthCmd),
    /// Pick one program from a program set by ensemble agreement.
    Select {
        #[arg(long)]
        programs: PathBuf,
        /// Unlabeled pages the ensemble is run on.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run a program on every page of a corpus.
    Extract {
        #[arg(long)]
        program: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a program against labels.
    Eval {
        #[arg(long)]
        program: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Propose up to five pages to label next.
    Suggest {
        #[arg(long)]
        corpus: PathBuf,
        /// Labels file whose pages count as already labeled.
        #[arg(long)]
        labeled: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, requires = "keywords")]
        question: Option<String>,
        #[arg(long, requires = "question")]
        keywords: Option<PathBuf>,
        #[arg(long, default_value = "suggestions.json")]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct SynthCmd {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    question: String,
    /// Keywords file, one per line.
    #[arg(long)]
    keywords: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Search statistics as JSON.
    #[arg(long)]
    stats: Option<PathBuf>,
    #[arg(long)]
    no_prune: bool,
    #[arg(long)]
    no_decomp: bool,
    #[arg(long, conflicts_with = "nl_only")]
    kw_only: bool,
    #[arg(long)]
    nl_only: bool,
}

impl SynthCmd {
    fn split(self, mut cfg: RunConfig) -> (SynthArgs, RunConfig) {
        cfg.no_prune |= self.no_prune;
        cfg.no_decomp |= self.no_decomp;
        cfg.kw_only |= self.kw_only;
        cfg.nl_only |= self.nl_only;
        let a = SynthArgs {
            corpus: self.corpus,
            labels: self.labels,
            question: self.question,
            keywords: self.keywords,
            out: self.out,
            stats: self.stats,
        };
        (a, cfg)
    }
}

fn run(cli: Cli) -> Result<String, PipelineError> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.cmd {
        Cmd::Ingest { html_dir, out } => cmd_ingest(&html_dir, &out),
        Cmd::Synthesize(s) => {
            let (a, cfg) = s.split(cfg);
            cmd_synthesize(&a, &cfg)
        }
        Cmd::Oracle(s) => {
            let (a, cfg) = s.split(cfg);
            cmd_oracle(&a, &cfg)
        }
        Cmd::Select { programs, corpus, n, seed, out, report } => {
            cmd_select(&programs, &corpus, n, seed, &out, report.as_deref(), &cfg)
        }
        Cmd::Extract { program, corpus, out } => cmd_extract(&program, &corpus, &out, &cfg),
        Cmd::Eval { program, corpus, labels, out } => cmd_eval(&program, &corpus, &labels, &out, &cfg),
        Cmd::Suggest { corpus, labeled, budget, seed, question, keywords, out } => {
            cmd_suggest(&SuggestArgs { corpus, labeled, budget, seed, question, keywords, out }, &cfg)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    log::debug!("{cli:?}");
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
