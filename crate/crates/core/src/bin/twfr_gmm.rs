use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use twfr_gmm::config::RunConfig;
use twfr_gmm::metrics::ObjectiveMode;
use twfr_gmm::pipeline::{self, DatasetLayout};
use twfr_gmm::synth_interface::{self, CaptionManifest, StubConfig};

#[derive(Parser)]
#[command(
    name = "twfr-gmm",
    about = "First-shot anomalous sound detection: TWFR pooling + GMM scoring",
    version
)]
struct Cli {
    /// Declarative TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Export the caption manifest for a machine's normal training clips.
    Captions {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        machine: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write deterministic stand-in WAVs for a manifest (offline test double
    /// for the external text-to-audio generator).
    GenerateStub {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 16000)]
        sample_rate: u32,
        #[arg(long, default_value_t = 2.0)]
        duration: f64,
    },
    /// Grid-search the pooling exponent r against a synthetic corpus.
    Tune {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        machine: String,
        #[arg(long)]
        synth_dir: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model_dir: PathBuf,
    },
    /// Fit the GMM on real normal training clips at a fixed r.
    Fit {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        machine: String,
        #[arg(long)]
        r: f64,
        #[arg(long)]
        model_dir: PathBuf,
    },
    /// Score every WAV under a directory with a fitted model.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        wav_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Join scores with ground-truth labels and report AUC/pAUC.
    Eval {
        /// Score CSV (clip_id,score); repeat for multiple machines.
        #[arg(long, required = true)]
        scores: Vec<PathBuf>,
        /// Label CSV (clip_id,label); one per --scores, in order.
        #[arg(long, required = true)]
        labels: Vec<PathBuf>,
        /// Machine name per --scores; defaults to the score file stem.
        #[arg(long)]
        machine: Vec<String>,
        #[arg(long, default_value_t = 0.1)]
        p: f64,
        #[arg(long, value_enum, default_value = "harmonic")]
        mode: ModeArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, clap::ValueEnum)]
enum ModeArg {
    Auc,
    Pauc,
    Arithmetic,
    Harmonic,
}

impl From<ModeArg> for ObjectiveMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Auc => ObjectiveMode::Auc,
            ModeArg::Pauc => ObjectiveMode::Pauc,
            ModeArg::Arithmetic => ObjectiveMode::Arithmetic,
            ModeArg::Harmonic => ObjectiveMode::Harmonic,
        }
    }
}

fn run(cli: Cli) -> twfr_gmm::Result<()> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };

    match cli.command {
        Command::Captions {
            dataset,
            machine,
            out,
        } => {
            let layout = DatasetLayout::new(dataset);
            let manifest = pipeline::cmd_captions(&layout, &machine, &cfg, &out)?;
            println!(
                "wrote {} manifest entries for {machine} to {}",
                manifest.entries.len(),
                out.display()
            );
        }
        Command::GenerateStub {
            manifest,
            out_dir,
            seed,
            sample_rate,
            duration,
        } => {
            let manifest = CaptionManifest::load(&manifest)?;
            let stub = StubConfig {
                seed,
                sample_rate,
                duration_secs: duration,
            };
            let written = synth_interface::generate_stub(&manifest, &out_dir, &stub)?;
            println!("wrote {written} stub clips to {}", out_dir.display());
        }
        Command::Tune {
            dataset,
            machine,
            synth_dir,
            manifest,
            model_dir,
        } => {
            let layout = DatasetLayout::new(dataset);
            let result =
                pipeline::cmd_tune(&layout, &machine, &synth_dir, &manifest, &cfg, &model_dir)?;
            let best = result.best().clone();
            println!(
                "selected r = {:.2} for {machine} (objective {:.4}, auc {:.4}, pauc {:.4})",
                result.r_selected, best.objective, best.auc, best.pauc
            );
        }
        Command::Fit {
            dataset,
            machine,
            r,
            model_dir,
        } => {
            let layout = DatasetLayout::new(dataset);
            let path = pipeline::cmd_fit(&layout, &machine, r, &cfg, &model_dir)?;
            println!("wrote model to {}", path.display());
        }
        Command::Score {
            model,
            wav_dir,
            out,
        } => {
            let n = pipeline::cmd_score(&model, &wav_dir, &cfg, &out)?;
            println!("scored {n} clips into {}", out.display());
        }
        Command::Eval {
            scores,
            labels,
            machine,
            p,
            mode,
            out,
        } => {
            if scores.len() != labels.len() {
                return Err(twfr_gmm::Error::InvalidConfig(format!(
                    "{} score files but {} label files",
                    scores.len(),
                    labels.len()
                )));
            }
            let inputs: Vec<(String, PathBuf, PathBuf)> = scores
                .into_iter()
                .zip(labels)
                .enumerate()
                .map(|(i, (s, l))| {
                    let name = machine.get(i).cloned().unwrap_or_else(|| {
                        s.file_stem().unwrap().to_string_lossy().into_owned()
                    });
                    (name, s, l)
                })
                .collect();
            let (evals, aggregate) =
                pipeline::cmd_eval(&inputs, mode.into(), p, out.as_deref())?;
            for e in &evals {
                println!(
                    "{}: auc {:.4} pauc {:.4} objective {:.4}",
                    e.machine_type, e.report.auc, e.report.pauc, e.report.objective
                );
            }
            println!(
                "harmonic-mean: auc {:.4} pauc {:.4} objective {:.4}",
                aggregate.auc, aggregate.pauc, aggregate.objective
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error\t{e}");
            ExitCode::FAILURE
        }
    }
}
