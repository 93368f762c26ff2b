//! Run configuration from a flat `key = value` file plus command-line overrides.

use std::path::{Path, PathBuf};

use qedacvc_core::corpus::SplitRatios;
use qedacvc_core::model::{AblationMode, ModelConfig};
use qedacvc_core::training::TrainConfig;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n_qubits: usize,
    pub conv_pool_stages: usize,
    pub seq_len: usize,
    pub dropout: f64,
    pub mode: AblationMode,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub min_freq: usize,
    pub ratios: SplitRatios,
    pub src_lang: Option<String>,
    pub tgt_lang: Option<String>,
    pub smooth_bleu: bool,
    pub corpus: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        let t = TrainConfig::default();
        RunConfig {
            n_qubits: m.n_qubits,
            conv_pool_stages: m.conv_pool_stages,
            seq_len: m.seq_len,
            dropout: m.dropout_rate,
            mode: m.ablation_mode,
            epochs: t.epochs,
            lr: qedacvc_core::adam::DEFAULT_LEARNING_RATE,
            batch_size: t.batch_size,
            seed: t.seed,
            min_freq: 1,
            ratios: SplitRatios::default(),
            src_lang: None,
            tgt_lang: None,
            smooth_bleu: false,
            corpus: None,
        }
    }
}

/// Values given on the command line; `None` keeps the file or default value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub corpus: Option<PathBuf>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub seq_len: Option<usize>,
    pub dropout: Option<f64>,
    pub mode: Option<AblationMode>,
    pub src_lang: Option<String>,
    pub tgt_lang: Option<String>,
}

fn parse<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("line {line}: invalid value {value:?} for {key}")))
}

impl RunConfig {
    /// Parses config text. A relative `corpus` path is resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut c = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Config(format!("line {line_no}: expected 'key = value'")));
            };
            let (k, v) = (k.trim(), v.trim());
            match k {
                "n_qubits" => c.n_qubits = parse(k, v, line_no)?,
                "conv_pool_stages" => c.conv_pool_stages = parse(k, v, line_no)?,
                "seq_len" => c.seq_len = parse(k, v, line_no)?,
                "dropout" | "dropout_rate" => c.dropout = parse(k, v, line_no)?,
                "mode" | "ablation_mode" => c.mode = parse(k, v, line_no)?,
                "epochs" => c.epochs = parse(k, v, line_no)?,
                "lr" | "learning_rate" => c.lr = parse(k, v, line_no)?,
                "batch_size" => c.batch_size = parse(k, v, line_no)?,
                "seed" => c.seed = parse(k, v, line_no)?,
                "min_freq" => c.min_freq = parse(k, v, line_no)?,
                "train_ratio" => c.ratios.train = parse(k, v, line_no)?,
                "test_ratio" => c.ratios.test = parse(k, v, line_no)?,
                "validation_ratio" => c.ratios.validation = parse(k, v, line_no)?,
                "src_lang" => c.src_lang = Some(v.to_string()),
                "tgt_lang" => c.tgt_lang = Some(v.to_string()),
                "smooth_bleu" => c.smooth_bleu = parse(k, v, line_no)?,
                "corpus" => c.corpus = Some(base.join(v)),
                "vocab_size" => {
                    return Err(CliError::Config(format!(
                        "line {line_no}: vocab_size is taken from the corpus vocabulary"
                    )))
                }
                _ => return Err(CliError::Config(format!("line {line_no}: unknown key {k:?}"))),
            }
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = &o.$f { self.$f = v.clone(); } )* };
        }
        take!(seed, epochs, lr, batch_size, seq_len, dropout, mode);
        if o.corpus.is_some() {
            self.corpus = o.corpus.clone();
        }
        if o.src_lang.is_some() {
            self.src_lang = o.src_lang.clone();
        }
        if o.tgt_lang.is_some() {
            self.tgt_lang = o.tgt_lang.clone();
        }
    }

    /// Model configuration for a vocabulary of `vocab_size` entries.
    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            n_qubits: self.n_qubits,
            conv_pool_stages: self.conv_pool_stages,
            seq_len: self.seq_len,
            dropout_rate: self.dropout,
            ablation_mode: self.mode,
            vocab_size,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            smooth_bleu: self.smooth_bleu,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.ratios.validate()?;
        if self.epochs == 0 {
            return Err(CliError::Config("epochs must be ≥ 1".into()));
        }
        if self.batch_size == 0 {
            return Err(CliError::Config("batch_size must be ≥ 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(CliError::Config(format!("lr must be a positive number, got {}", self.lr)));
        }
        if self.min_freq == 0 {
            return Err(CliError::Config("min_freq must be ≥ 1".into()));
        }
        // Vocabulary size is unknown here; any valid size checks the rest.
        self.model_config(usize::MAX).validate()?;
        Ok(())
    }
}
