//! `vectn`: target-dependent multimodal sentiment pipeline.
//!
//! Stages: `ingest -> faces -> caption -> align -> train -> eval`, plus
//! `ablate`, `multiseed`, `predict` and `synth` (toy fixture generator).
//! Exit status is 0 on success, 1 on a runtime error and 2 on a usage error.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::{AlignPaths, BackendOverrides, DataPaths};
use settings::ConfigArgs;
use vectn::dataset::{DatasetFormat, LabelScheme};
use vectn::toy::FixtureSpec;

#[derive(Debug, Parser)]
#[command(name = "vectn", version, about = "Target-dependent multimodal sentiment analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct SplitArgs {
    /// Prepared training split (align output)
    #[arg(long = "train", value_name = "FILE")]
    train: Option<PathBuf>,
    /// Prepared validation split, used for checkpoint selection
    #[arg(long = "valid", value_name = "FILE")]
    valid: Option<PathBuf>,
    /// Prepared test split; metrics fall back to validation without it
    #[arg(long = "test", value_name = "FILE")]
    test: Option<PathBuf>,
    /// Output directory
    #[arg(long = "out", value_name = "DIR")]
    out: Option<PathBuf>,
    /// Image directory, needed only with --train-projection
    #[arg(long, value_name = "DIR")]
    images: Option<PathBuf>,
}

impl SplitArgs {
    fn paths(&self) -> DataPaths<'_> {
        DataPaths {
            train: self.train.as_deref(),
            valid: self.valid.as_deref(),
            test: self.test.as_deref(),
            out: self.out.as_deref(),
            images: self.images.as_deref(),
        }
    }
}

#[derive(Debug, Args)]
struct CheckpointBackend {
    /// Backend to load; defaults to the one recorded in the checkpoint
    #[arg(long, env = "VECTN_BACKEND")]
    backend: Option<String>,
    #[arg(long, value_name = "FILE")]
    annotations: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    model_dir: Option<PathBuf>,
}

impl CheckpointBackend {
    fn overrides(&self) -> BackendOverrides {
        BackendOverrides {
            name: self.backend.clone(),
            annotations: self.annotations.clone(),
            model_dir: self.model_dir.clone(),
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a split (jsonl or four-line), validate it and write examples.jsonl
    Ingest {
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// jsonl or fourline; guessed from the extension when omitted
        #[arg(long)]
        format: Option<DatasetFormat>,
        /// Label encoding of four-line files: index (0/1/2) or polarity (-1/0/1)
        #[arg(long, default_value = "index")]
        label_scheme: LabelScheme,
        /// Keep only examples whose image has a detectable face
        #[arg(long, value_name = "DIR")]
        face_subset: Option<PathBuf>,
        #[command(flatten)]
        settings: ConfigArgs,
    },
    /// Detect faces, predict attributes and apply the confidence filter
    Faces {
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[arg(long, value_name = "DIR")]
        images: Option<PathBuf>,
        #[command(flatten)]
        settings: ConfigArgs,
    },
    /// Caption every image
    Caption {
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[arg(long, value_name = "DIR")]
        images: Option<PathBuf>,
        #[command(flatten)]
        settings: ConfigArgs,
    },
    /// Pick each target's face description and join everything into prepared.jsonl
    Align {
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        #[arg(long, value_name = "FILE")]
        faces: PathBuf,
        #[arg(long, value_name = "FILE")]
        captions: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Also write the per-example candidates and scores
        #[arg(long, value_name = "FILE")]
        descriptions: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        images: Option<PathBuf>,
        #[command(flatten)]
        settings: ConfigArgs,
    },
    /// Train one configuration; writes model.ckpt and metrics.json
    Train {
        #[command(flatten)]
        splits: SplitArgs,
        #[command(flatten)]
        settings: ConfigArgs,
    },
    /// Evaluate a checkpoint on a prepared split
    Eval {
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        /// Metrics file; printed to stdout when omitted
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        #[command(flatten)]
        backend: CheckpointBackend,
    },
    /// Train the full model and each ablation; writes ablation.json
    Ablate {
        #[command(flatten)]
        splits: SplitArgs,
        #[command(flatten)]
        settings: ConfigArgs,
    },
    /// Train with seeds seed, seed+1, ...; writes multiseed.json
    Multiseed {
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[command(flatten)]
        splits: SplitArgs,
        #[command(flatten)]
        settings: ConfigArgs,
    },
    /// Write per-example class probabilities
    Predict {
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[command(flatten)]
        backend: CheckpointBackend,
    },
    /// Generate the synthetic toy dataset with its images and annotations
    Synth {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 300)]
        train: usize,
        #[arg(long, default_value_t = 60)]
        valid: usize,
        #[arg(long, default_value_t = 90)]
        test: usize,
        /// Extra posts per split without any face
        #[arg(long, default_value_t = 0)]
        faceless: usize,
    },
    /// Print the effective configuration after all overrides
    ShowConfig {
        #[command(flatten)]
        settings: ConfigArgs,
    },
}

fn run(command: Command) -> Result<bool> {
    match command {
        Command::Ingest {
            input,
            out,
            format,
            label_scheme,
            face_subset,
            settings,
        } => {
            let resolved = settings.resolve()?;
            let subset = face_subset.as_deref().map(|dir| (dir, &resolved));
            commands::ingest(&input, &out, format, label_scheme, subset)?;
        }
        Command::Faces {
            input,
            out,
            images,
            settings,
        } => commands::faces(&input, &out, images.as_deref(), &settings.resolve()?)?,
        Command::Caption {
            input,
            out,
            images,
            settings,
        } => commands::caption(&input, &out, images.as_deref(), &settings.resolve()?)?,
        Command::Align {
            input,
            faces,
            captions,
            out,
            descriptions,
            images,
            settings,
        } => commands::align(
            AlignPaths {
                input: &input,
                faces: &faces,
                captions: captions.as_deref(),
                out: &out,
                descriptions: descriptions.as_deref(),
                images: images.as_deref(),
            },
            &settings.resolve()?,
        )?,
        Command::Train { splits, settings } => commands::train(splits.paths(), &settings.resolve()?)?,
        Command::Eval {
            checkpoint,
            input,
            out,
            backend,
        } => commands::eval(&checkpoint, &input, out.as_deref(), &backend.overrides())?,
        Command::Ablate { splits, settings } => commands::ablate(splits.paths(), &settings.resolve()?)?,
        Command::Multiseed { runs, splits, settings } => {
            return commands::multiseed(splits.paths(), runs, &settings.resolve()?);
        }
        Command::Predict {
            checkpoint,
            input,
            out,
            backend,
        } => commands::predict_cmd(&checkpoint, &input, &out, &backend.overrides())?,
        Command::Synth {
            out,
            seed,
            train,
            valid,
            test,
            faceless,
        } => {
            let spec = FixtureSpec {
                seed,
                train,
                valid,
                test,
                faceless,
                ..FixtureSpec::default()
            };
            commands::synth(&out, &spec)?;
        }
        Command::ShowConfig { settings } => commands::show_config(&settings.resolve()?)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: one or more runs failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
