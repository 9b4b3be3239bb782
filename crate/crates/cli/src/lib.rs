//! The `hydrotrace` command line.
//!
//! ```text
//! hydrotrace [--config run.json] [--seed N] [--out DIR] <command>
//!
//!   synth                                  planted-structure dataset + oracle
//!   ingest    --data DIR                   copy a dataset into the binary layout
//!   train     --data DIR [--trials N] [--max-epochs N]
//!   tune      --data DIR [--trials N] [--max-epochs N]
//!   evaluate  --checkpoint FILE --data DIR
//!   attention --checkpoint FILE --data DIR
//!   serve     --store DIR [--port N]
//! ```
//!
//! Exit codes: 0 success, 2 usage, configuration, shape or I/O errors, 3
//! numeric failures (diverged training, undefined metrics).

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use hydrotrace_core::{Error, Result};

pub use commands::{cmd_attention, cmd_evaluate, cmd_ingest, cmd_synth, cmd_train, cmd_tune};
pub use config::{AnalyticsConfig, RunConfig};
pub use manifest::{Artifact, RunManifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "hydrotrace", version, about = "Dual-attention ConvLSTM streamflow model")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Seed for data generation, splitting, initialization and search.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with planted structure.
    Synth,
    /// Copy a dataset directory into the binary layout.
    Ingest {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
    },
    /// Random search, then save the best model.
    Train(TrainArgs),
    /// Random search only; writes the trial log and best configuration.
    Tune(TrainArgs),
    /// Metric reports for the training and validation splits.
    Evaluate(ModelArgs),
    /// Extract attention and write the store and analytics exports.
    Attention(ModelArgs),
    /// Serve an attention store over HTTP on 127.0.0.1.
    Serve {
        #[arg(long, value_name = "DIR")]
        store: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Number of random-search trials.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Epoch cap per trial.
    #[arg(long)]
    pub max_epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
}

impl Cli {
    /// The configuration file with flag overrides applied.
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load_or_default(self.config.as_deref())?;
        if let Some(seed) = self.seed {
            cfg.set_seed(seed);
        }
        if let Command::Train(a) | Command::Tune(a) = &self.command {
            if let Some(n) = a.trials {
                cfg.train.search_trials = n;
            }
            if let Some(n) = a.max_epochs {
                cfg.train.max_epochs = n;
            }
        }
        Ok(cfg)
    }
}

/// Runs a parsed command; `serve` only returns on a socket error.
pub fn run(cli: &Cli) -> Result<Option<RunManifest>> {
    let cfg = cli.run_config()?;
    let out = &cli.out;
    let manifest = match &cli.command {
        Command::Synth => cmd_synth(&cfg, out)?,
        Command::Ingest { data } => cmd_ingest(&cfg, data, out)?,
        Command::Train(a) => cmd_train(&cfg, &a.data, out)?,
        Command::Tune(a) => cmd_tune(&cfg, &a.data, out)?,
        Command::Evaluate(a) => cmd_evaluate(&cfg, &a.checkpoint, &a.data, out)?,
        Command::Attention(a) => cmd_attention(&cfg, &a.checkpoint, &a.data, out)?,
        Command::Serve { store, port } => {
            hydrotrace_service::serve(store, *port)?;
            return Ok(None);
        }
    };
    Ok(Some(manifest))
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Diverged(_)
        | Error::SearchFailed
        | Error::UndefinedVariance
        | Error::UndefinedCorrelation
        | Error::UndefinedBias
        | Error::DegenerateRange { .. } => EXIT_NUMERIC,
        _ => EXIT_USAGE,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> std::result::Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("hydrotrace").chain(args.iter().copied()))
    }

    #[test]
    fn flags_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"train": {"max_epochs": 9, "search_trials": 4, "seed": 1}}"#).unwrap();
        let p = path.to_str().unwrap();
        let cli = parse(&["--config", p, "train", "--data", "d"]).unwrap();
        let cfg = cli.run_config().unwrap();
        assert_eq!((cfg.train.max_epochs, cfg.train.search_trials, cfg.train.seed), (9, 4, 1));
        let cli = parse(&["train", "--data", "d", "--trials", "10", "--max-epochs", "2", "--seed", "7", "--config", p]).unwrap();
        let cfg = cli.run_config().unwrap();
        assert_eq!((cfg.train.max_epochs, cfg.train.search_trials), (2, 10));
        assert_eq!((cfg.train.seed, cfg.synthetic.seed, cfg.pipeline.seed), (7, 7, 7));
    }

    #[test]
    fn unknown_flags_and_missing_arguments_are_usage_errors() {
        for args in [&["train", "--data", "d", "--bogus"][..], &["train"], &["frobnicate"], &[]] {
            let e = parse(args).unwrap_err();
            assert_eq!(e.exit_code(), EXIT_USAGE, "{args:?}");
        }
        assert_eq!(parse(&["--help"]).unwrap_err().exit_code(), EXIT_OK);
    }

    #[test]
    fn help_lists_every_flag() {
        use clap::CommandFactory;
        let mut cmd = Cli::command();
        let top = cmd.render_long_help().to_string();
        for flag in ["--config", "--seed", "--out"] {
            assert!(top.contains(flag), "{flag}");
        }
        for (sub, flags) in [
            ("train", &["--data", "--trials", "--max-epochs"][..]),
            ("evaluate", &["--checkpoint", "--data"]),
            ("serve", &["--store", "--port"]),
        ] {
            let help = cmd.find_subcommand_mut(sub).unwrap().render_long_help().to_string();
            for flag in flags {
                assert!(help.contains(flag), "{sub} {flag}");
            }
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Diverged("nan".into())), EXIT_NUMERIC);
        assert_eq!(exit_code(&Error::SearchFailed), EXIT_NUMERIC);
        assert_eq!(exit_code(&Error::UndefinedVariance), EXIT_NUMERIC);
        assert_eq!(exit_code(&Error::config("x", "y")), EXIT_USAGE);
        assert_eq!(exit_code(&Error::Shape("s".into())), EXIT_USAGE);
    }

    #[test]
    fn bad_config_file_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"synthetic": {"planted": [{"channel": 3, "region": {"row": 20, "col": 0, "rows": 6, "cols": 6}, "lag": 2, "weight": 1.0}]}}"#).unwrap();
        let cli = parse(&["--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "synth"]).unwrap();
        match run(&cli) {
            Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "planted.region"),
            other => panic!("{other:?}"),
        }
    }
}
