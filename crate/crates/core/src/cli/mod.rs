//! Command-line surface: each subcommand is one pipeline stage reading and
//! writing files under the run directory.
//!
//! ```text
//! <out-dir>/
//!   vocab.json  corpus/{train,src,lrc,grc}.jsonl   gen-corpus
//!   model.weights  train_report.json               train-lm
//!   encode.jsonl                                   encode
//!   recover.jsonl  recover_summary.json            recover
//!   sweep/<corpus>.{jsonl,report.json,...}         sweep
//!   pca_report.json  interpolation.json            pca, interpolate
//!   report/*.csv *.svg                             report
//!   manifests/<command>.json
//! ```

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub use commands::{
    spec_hash, summarize_recovery, sweep_paths, EncodeRecord, ItemFailure, Outcome, PcaOutput,
    RecoverRecord, RecoverSummary, SweepIdentity, TrainSummary,
};
pub use config::{
    corpus_path, Config, CorpusSection, InterpolateSection, ModelSection, RunSection, SweepSection,
    CORPORA, DEMO_CONFIG,
};
pub use manifest::{check_upstream, manifest_path, Run, RunManifest, RunStatus};

use crate::error::Result;
use crate::linalg::Precision;

pub const THREADS_ENV: &str = "SENTSPACE_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "sentspace",
    version,
    about = "Fixed-size sentence representations for a frozen toy transformer"
)]
pub struct Cli {
    /// TOML config; the bundled demo config is used when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub precision: Option<Precision>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Continue an interrupted sweep, skipping finished items.
    #[arg(long, global = true)]
    pub resume: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the vocabulary and the train/src/lrc/grc corpora.
    GenCorpus,
    /// Train the toy language model on the train corpus.
    TrainLm,
    /// Encode every sentence of a corpus into latents.
    Encode {
        #[arg(long)]
        corpus: Option<String>,
        #[arg(long)]
        d_prime: Option<usize>,
    },
    /// Decode the encoded latents and score them.
    Recover,
    /// Encode, recover and score a corpus for several latent dimensions.
    Sweep {
        #[arg(long)]
        corpus: Option<String>,
        #[arg(long, value_delimiter = ',')]
        d_primes: Option<Vec<usize>>,
    },
    /// Explained variance of the best latent per sentence.
    Pca {
        #[arg(long)]
        corpus: Option<String>,
        #[arg(long)]
        d_prime: Option<usize>,
    },
    /// Decode along the line between two recovered latents.
    Interpolate {
        #[arg(long)]
        corpus: Option<String>,
        #[arg(long)]
        first: Option<String>,
        #[arg(long)]
        second: Option<String>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        d_prime: Option<usize>,
    },
    /// Write CSV tables and SVG plots from existing reports.
    Report,
    /// Print the bundled demo config.
    DemoConfig,
}

impl Cli {
    /// Config file values with every given flag applied on top.
    pub fn resolve(&self) -> Result<Config> {
        let mut c = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::demo(),
        };
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(t) = self.threads {
            c.run.threads = t;
        }
        if let Some(p) = self.precision {
            c.precision = p;
        }
        if let Some(o) = &self.out_dir {
            c.run.out_dir = o.clone();
        }
        if self.resume {
            c.run.resume = true;
        }
        match &self.command {
            Command::Encode { corpus, d_prime } => {
                if let Some(x) = corpus {
                    c.encode_corpus = x.clone();
                }
                if let Some(d) = d_prime {
                    c.injection.d_prime = *d;
                }
            }
            Command::Sweep { corpus, d_primes } => {
                if let Some(x) = corpus {
                    c.sweep.corpus = x.clone();
                }
                if let Some(d) = d_primes {
                    c.sweep.d_primes = d.clone();
                }
            }
            Command::Pca { corpus, d_prime } => {
                if let Some(x) = corpus {
                    c.sweep.corpus = x.clone();
                }
                if let Some(d) = d_prime {
                    c.pca_d_prime = *d;
                }
            }
            Command::Interpolate {
                corpus,
                first,
                second,
                steps,
                d_prime,
            } => {
                if let Some(x) = corpus {
                    c.sweep.corpus = x.clone();
                }
                if let Some(x) = first {
                    c.interpolate.first = x.clone();
                }
                if let Some(x) = second {
                    c.interpolate.second = x.clone();
                }
                if let Some(x) = steps {
                    c.interpolate.steps = *x;
                }
                if let Some(x) = d_prime {
                    c.interpolate.d_prime = *x;
                }
            }
            _ => {}
        }
        Ok(c)
    }
}

macro_rules! by_precision {
    ($p:expr, $f:ident, $cfg:expr) => {
        match $p {
            Precision::F32 => commands::$f::<f32>($cfg),
            Precision::F64 => commands::$f::<f64>($cfg),
        }
    };
}

pub fn execute(command: &Command, cfg: &Config) -> Result<Outcome> {
    match command {
        Command::GenCorpus => commands::gen_corpus(cfg),
        Command::TrainLm => by_precision!(cfg.precision, train_lm, cfg),
        Command::Encode { .. } => by_precision!(cfg.precision, encode, cfg),
        Command::Recover => by_precision!(cfg.precision, recover_cmd, cfg),
        Command::Sweep { .. } => by_precision!(cfg.precision, sweep, cfg),
        Command::Pca { .. } => commands::pca(cfg),
        Command::Interpolate { .. } => by_precision!(cfg.precision, interpolate, cfg),
        Command::Report => commands::report(cfg),
        Command::DemoConfig => {
            print!("{DEMO_CONFIG}");
            Ok(Outcome::Ok)
        }
    }
}

/// Exit codes: 0 success, 1 error, 2 finished with per-item failures.
pub fn main_with_args<I, S>(args: I) -> ExitCode
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let cfg = match cli.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if cfg.run.threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.run.threads)
            .build_global();
    }
    match execute(&cli.command, &cfg) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::ItemFailures(n)) => {
            eprintln!(
                "{n} item(s) failed; see the failures file in {}",
                cfg.run.out_dir.display()
            );
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

pub fn main() -> ExitCode {
    main_with_args(std::env::args_os())
}
