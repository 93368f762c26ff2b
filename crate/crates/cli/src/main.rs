use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qedacvc_cli::commands;
use qedacvc_cli::config::{Overrides, RunConfig};
use qedacvc_cli::CliError;
use qedacvc_core::corpus::{Split, SynthTask};
use qedacvc_core::model::AblationMode;

#[derive(Parser)]
#[command(name = "qedacvc", version, about = "Quantum encoder-decoder for translation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// Flat `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// TSV corpus with `#<src>\t<tgt>` header lines.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seq_len: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    /// Ablation mode, O1..O5.
    #[arg(long)]
    mode: Option<AblationMode>,
    #[arg(long)]
    src_lang: Option<String>,
    #[arg(long)]
    tgt_lang: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "runs/latest")]
    out: PathBuf,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        c.apply(&Overrides {
            corpus: self.corpus.clone(),
            seed: self.seed,
            epochs: self.epochs,
            lr: self.lr,
            batch_size: self.batch_size,
            seq_len: self.seq_len,
            dropout: self.dropout,
            mode: self.mode,
            src_lang: self.src_lang.clone(),
            tgt_lang: self.tgt_lang.clone(),
        });
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes metrics.csv, best.ckpt and last.ckpt.
    Train(RunArgs),
    /// Translate stdin line by line.
    Translate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        src_lang: String,
        #[arg(long)]
        tgt_lang: String,
    },
    /// Score a checkpoint on a corpus split.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        /// Defaults to the corpus recorded in the checkpoint.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// train, test or validation.
        #[arg(long, default_value = "validation")]
        split: Split,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train every ablation mode under one budget; writes ablation.csv.
    Ablate(RunArgs),
    /// Compare parameter-shift and finite-difference gradients.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        circuits: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Write a synthetic TSV corpus.
    Synth {
        /// copy, reverse or lexicon.
        #[arg(long, default_value = "copy")]
        task: SynthTask,
        /// Pairs per language direction.
        #[arg(long, default_value_t = 320)]
        pairs: usize,
        /// Word types per language.
        #[arg(long, default_value_t = 25)]
        vocab: usize,
        #[arg(long, default_value_t = 5)]
        max_len: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Comma-separated language codes.
        #[arg(long, default_value = "en", value_delimiter = ',')]
        langs: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Train(a) => {
            let o = commands::cmd_train(&a.config()?, &a.out)?;
            let last = o.history.last().expect("at least one epoch");
            println!(
                "trained {} epochs in {:.0}s; final val accuracy {:.4}, BLEU {:.4}; best epoch {} ({:.4}/{:.4}); {} quantum + {} classical parameters",
                o.history.len(),
                o.seconds,
                last.val_accuracy,
                last.val_bleu,
                o.best.epoch,
                o.best.accuracy,
                o.best.bleu,
                o.quantum_params,
                o.classical_params
            );
        }
        Command::Translate {
            ckpt,
            src_lang,
            tgt_lang,
        } => {
            let stdin = io::stdin();
            commands::cmd_translate(&ckpt, &src_lang, &tgt_lang, stdin.lock(), io::stdout().lock())?;
        }
        Command::Evaluate {
            ckpt,
            corpus,
            split,
            out,
        } => {
            commands::cmd_evaluate(&ckpt, corpus.as_deref(), split, out.as_deref(), io::stdout().lock())?;
        }
        Command::Ablate(a) => {
            commands::cmd_ablate(&a.config()?, &a.out)?;
            print!(
                "{}",
                std::fs::read_to_string(a.out.join("ablation.csv")).unwrap_or_default()
            );
        }
        Command::Gradcheck { circuits, seed } => {
            let r = commands::gradcheck(circuits, seed)?;
            print!("{}", r.render());
            if !r.passed() {
                return Err(CliError::Verification(format!(
                    "worst deviations {:.3e} (circuits), {:.3e} (model)",
                    r.worst_circuit, r.model_deviation
                )));
            }
        }
        Command::Synth {
            task,
            pairs,
            vocab,
            max_len,
            seed,
            langs,
            out,
        } => commands::cmd_synth(task, pairs, vocab, max_len, seed, &langs, &out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => {
            let _ = io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
