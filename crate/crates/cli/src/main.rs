mod commands;
mod config;
mod export;

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind as ClapErrorKind;
use clap::{Parser, Subcommand};
use statecoder_core::{Error, ErrorKind, Result};

use commands::Trained;
use config::RunConfig;

/// Recurrent auto-encoder pipeline for multichannel sensor data.
#[derive(Parser)]
#[command(name = "statecoder", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ModelArgs {
    /// Model file written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Scaler written next to the model by `train`.
    #[arg(long)]
    scaler: Option<PathBuf>,
}

impl ModelArgs {
    fn load(&self) -> Result<Trained> {
        let scaler = match &self.scaler {
            Some(s) => s.clone(),
            None => self.model.with_file_name("scaler.json"),
        };
        Trained::load(&self.model, &scaler)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic plant series.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an auto-encoder; writes model.bin, scaler.json, report.json and timing.json.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's data path.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruction MSE on the train and validation windows of a series.
    Eval {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        no_header: bool,
    },
    /// Context vector of every window of a series.
    Embed {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_header: bool,
    },
    /// Fit PCA and K-means on the training share of the embeddings.
    Cluster {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the SVM on clustered training embeddings and label all of them.
    Classify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-window label CSV.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Replay a series as a stream and log cluster-change events.
    Monitor {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        classifier: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Event log, one JSON record per line; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-window label CSV.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        no_header: bool,
    },
    /// Write plot-ready CSVs for loss curves, reconstructions and embeddings.
    Export {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Loss report, as `label=path` or a path labeled by its directory.
        #[arg(long = "report")]
        reports: Vec<String>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        scaler: Option<PathBuf>,
        /// Series for the reconstruction heatmaps.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        classifier: Option<PathBuf>,
        #[arg(long)]
        no_header: bool,
    },
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numerical => 3,
    }
}

fn print_line(text: &str) -> Result<()> {
    writeln!(io::stdout(), "{text}").map_err(|e| Error::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    })
}

fn optional_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => serde_json::from_str("{}").map_err(|e| Error::Config(e.to_string())),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth { config, out } => commands::synth(&RunConfig::load(&config)?, &out),
        Command::Train { config, input, out } => {
            commands::train_cmd(&RunConfig::load(&config)?, input.as_deref(), &out)
        }
        Command::Eval {
            model,
            input,
            config,
            no_header,
        } => {
            let cfg = config.as_deref().map(RunConfig::load).transpose()?;
            let trained = model.load()?;
            let data = trained.read_input(&input, !no_header)?;
            print_line(&commands::eval(&trained, &data, cfg.as_ref())?)
        }
        Command::Embed {
            model,
            input,
            out,
            no_header,
        } => {
            let trained = model.load()?;
            let data = trained.read_input(&input, !no_header)?;
            commands::embed(&trained, &data, &out)
        }
        Command::Cluster { config, embeddings, out } => {
            commands::cluster(&RunConfig::load(&config)?, &embeddings, &out)
        }
        Command::Classify {
            config,
            embeddings,
            clusters,
            out,
            labels,
        } => {
            let summary =
                commands::classify_cmd(&RunConfig::load(&config)?, &embeddings, &clusters, &out, labels.as_deref())?;
            print_line(&summary)
        }
        Command::Monitor {
            model,
            classifier,
            input,
            out,
            labels,
            no_header,
        } => {
            let trained = model.load()?;
            let classifier = commands::load_classifier(&classifier)?;
            let data = trained.read_input(&input, !no_header)?;
            match out {
                Some(path) => {
                    let file = std::fs::File::create(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
                    let mut w = io::BufWriter::new(file);
                    commands::monitor_cmd(&trained, &classifier, &data, &mut w, labels.as_deref())?;
                }
                None => {
                    let mut w = io::stdout().lock();
                    commands::monitor_cmd(&trained, &classifier, &data, &mut w, labels.as_deref())?;
                }
            }
            Ok(())
        }
        Command::Export {
            out,
            config,
            reports,
            model,
            scaler,
            input,
            embeddings,
            classifier,
            no_header,
        } => {
            let cfg = optional_config(config.as_deref())?;
            let reports: Vec<_> = reports.iter().map(|r| export::parse_report_arg(r)).collect();
            let heatmap = match (&model, &input) {
                (Some(m), Some(i)) => Some((m, i)),
                (None, None) => None,
                (Some(_), None) => return Err(Error::Usage("--model needs --input for heatmaps".into())),
                (None, Some(_)) => return Err(Error::Usage("--input needs --model for heatmaps".into())),
            };
            let embedding_group = match (&embeddings, &classifier) {
                (Some(e), Some(c)) => Some((e, c)),
                (None, None) => None,
                (Some(_), None) => return Err(Error::Usage("--embeddings needs --classifier".into())),
                (None, Some(_)) => return Err(Error::Usage("--classifier needs --embeddings".into())),
            };
            if reports.is_empty() && heatmap.is_none() && embedding_group.is_none() {
                return Err(Error::Usage(
                    "nothing to export: give --report, --model/--input or --embeddings/--classifier".into(),
                ));
            }
            // load every artifact before writing anything
            let trained = match heatmap {
                Some((m, i)) => {
                    let args = ModelArgs {
                        model: m.clone(),
                        scaler: scaler.clone(),
                    };
                    let t = args.load()?;
                    commands::require(i, "input")?;
                    let data = t.read_input(i, !no_header)?;
                    Some((t, data))
                }
                None => None,
            };
            let classifier = match embedding_group {
                Some((e, c)) => {
                    commands::require(e, "embeddings")?;
                    Some((e, commands::load_classifier(c)?))
                }
                None => None,
            };
            for (_, path) in &reports {
                commands::require(path, "report")?;
            }
            std::fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            let mut written = export::mse_curves(&reports, &out)?;
            if let Some((t, data)) = &trained {
                written.push(export::heatmaps(t, data, &cfg, &out)?);
            }
            if let Some((e, c)) = &classifier {
                written.extend(export::projection(e, c, &cfg, &out)?);
            }
            for path in written {
                print_line(&path.display().to_string())?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
