//! Command implementations. Each returns `Ok` or a [`CliError`] whose exit
//! code `main` reports.

use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qedacvc_core::corpus::{self, load_parallel, to_example, ParallelCorpus, Split, SynthTask, Vocab};
use qedacvc_core::gradient::{finite_diff_grad, max_abs_deviation, param_shift_grad};
use qedacvc_core::model::{AblationMode, Example, Model, ModelConfig, ModelParams, FIRST_TAG};
use qedacvc_core::random_circuits::random_circuit;
use qedacvc_core::training::{evaluate, train, EpochMetrics, EvalReport};
use qedacvc_core::{OptimState, StateVector};

use crate::checkpoint::{self, BestMetrics, Checkpoint, DataSettings};
use crate::config::RunConfig;
use crate::error::{io_err, CliError};

fn corpus_path(cfg: &RunConfig) -> Result<&Path, CliError> {
    cfg.corpus
        .as_deref()
        .ok_or_else(|| CliError::Config("no corpus given (--corpus or 'corpus' in the config file)".into()))
}

fn examples(pairs: &[&corpus::SentencePair], vocab: &Vocab, seq_len: usize) -> Result<Vec<Example>, CliError> {
    Ok(pairs.iter().map(|p| to_example(p, vocab, seq_len)).collect::<Result<_, _>>()?)
}

/// Summary of one training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<EpochMetrics>,
    pub best: BestMetrics,
    pub quantum_params: usize,
    pub classical_params: usize,
    pub seconds: f64,
}

/// Trains per `cfg`, writing `metrics.csv`, `best.ckpt` and `last.ckpt` to `out`.
pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<TrainOutcome, CliError> {
    cfg.validate()?;
    let path = corpus_path(cfg)?;
    let corpus = load_parallel(path, cfg.src_lang.as_deref(), cfg.tgt_lang.as_deref(), cfg.ratios, cfg.seed)?;
    train_on(cfg, &corpus, out)
}

fn train_on(cfg: &RunConfig, corpus: &ParallelCorpus, out: &Path) -> Result<TrainOutcome, CliError> {
    let start = Instant::now();
    let vocab = corpus.build_vocab(cfg.min_freq)?;
    let config = cfg.model_config(vocab.len());
    let model = Model::new(config.clone())?;
    let train_set = examples(&corpus.get(Split::Train), &vocab, cfg.seq_len)?;
    let val_set = examples(&corpus.get(Split::Validation), &vocab, cfg.seq_len)?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(CliError::Data(format!(
            "training and validation splits must be non-empty (got {} / {})",
            train_set.len(),
            val_set.len()
        )));
    }
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let mut params = model.init_params(cfg.seed);
    let mut opt = OptimState::new(params.len(), cfg.lr);
    let quantum_params = params.quantum_count();
    let classical_params = params.classical_count();
    eprintln!(
        "mode {}: {} train / {} validation pairs, vocab {}, {} quantum + {} classical parameters",
        cfg.mode,
        train_set.len(),
        val_set.len(),
        vocab.len(),
        quantum_params,
        classical_params
    );

    let csv_path = out.join("metrics.csv");
    let mut csv = fs::File::create(&csv_path).map_err(|e| io_err(&csv_path, e))?;
    writeln!(csv, "{}", EpochMetrics::CSV_HEADER).map_err(|e| io_err(&csv_path, e))?;
    let data = DataSettings {
        seed: cfg.seed,
        ratios: cfg.ratios,
        src_lang: cfg.src_lang.clone(),
        tgt_lang: cfg.tgt_lang.clone(),
        smooth_bleu: cfg.smooth_bleu,
        corpus: cfg.corpus.clone(),
    };
    let mut best: Option<EpochMetrics> = None;
    let mut io_failure: Option<CliError> = None;
    let result = train(&model, &mut params, &mut opt, &train_set, &val_set, &cfg.train_config(), |m, p, o| {
        if m.improves_on(best.as_ref()) {
            best = Some(m.clone());
        }
        let b = best.as_ref().expect("set above");
        let ck = Checkpoint {
            config: config.clone(),
            params: p.clone(),
            optim: o.clone(),
            vocab: vocab.clone(),
            epoch: m.epoch,
            best: Some(BestMetrics {
                epoch: b.epoch,
                accuracy: b.val_accuracy,
                bleu: b.val_bleu,
            }),
            data: data.clone(),
        };
        let written = writeln!(csv, "{}", m.csv_row())
            .map_err(|e| io_err(&csv_path, e))
            .and_then(|_| {
                if b.epoch == m.epoch {
                    checkpoint::save(&ck, &out.join("best.ckpt"))?;
                }
                Ok(checkpoint::save(&ck, &out.join("last.ckpt"))?)
            });
        if let Err(e) = written {
            io_failure = Some(e);
            return Err(qedacvc_core::Error::Data("writing run artifacts failed".into()));
        }
        eprintln!(
            "epoch {:>3}  train_loss {:.4}  val_loss {:.4}  val_acc {:.4}  val_bleu {:.4}  ({:.0}s)",
            m.epoch,
            m.train_loss,
            m.val_loss,
            m.val_accuracy,
            m.val_bleu,
            start.elapsed().as_secs_f64()
        );
        Ok(())
    });
    let history = result.map_err(|e| io_failure.take().unwrap_or(CliError::Core(e)))?;
    let b = best.expect("at least one epoch");
    Ok(TrainOutcome {
        history,
        best: BestMetrics {
            epoch: b.epoch,
            accuracy: b.val_accuracy,
            bleu: b.val_bleu,
        },
        quantum_params,
        classical_params,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Translates each line of `input` into `output`.
pub fn cmd_translate(
    ckpt: &Path,
    src_lang: &str,
    tgt_lang: &str,
    input: impl BufRead,
    mut output: impl Write,
) -> Result<(), CliError> {
    let ck = checkpoint::load(ckpt)?;
    if !ck.vocab.languages().iter().any(|l| l == src_lang) {
        return Err(CliError::Config(format!("unknown source language tag {src_lang:?}")));
    }
    let tag = ck
        .vocab
        .tag_id(tgt_lang)
        .map_err(|_| CliError::Config(format!("unknown target language tag {tgt_lang:?}")))?;
    let model = Model::new(ck.config.clone())?;
    for line in input.lines() {
        let line = line.map_err(|e| CliError::Data(format!("stdin: {e}")))?;
        let ids = ck.vocab.encode(&corpus::tokenize(&line));
        let out = model.translate(&ck.params, &ids, tag, ck.config.seq_len)?;
        let text = corpus::detokenize(&ck.vocab.decode(&out));
        writeln!(output, "{text}").map_err(|e| CliError::Data(format!("stdout: {e}")))?;
    }
    Ok(())
}

/// Rebuilds the checkpoint's split of `corpus` and scores it.
pub fn evaluate_checkpoint(ck: &Checkpoint, corpus_path: &Path, split: Split) -> Result<EvalReport, CliError> {
    let d = &ck.data;
    let corpus = load_parallel(corpus_path, d.src_lang.as_deref(), d.tgt_lang.as_deref(), d.ratios, d.seed)?;
    let exs = examples(&corpus.get(split), &ck.vocab, ck.config.seq_len)?;
    if exs.is_empty() {
        return Err(CliError::Data(format!("the {split:?} split is empty")));
    }
    let model = Model::new(ck.config.clone())?;
    Ok(evaluate(&model, &ck.params, &exs, None, d.smooth_bleu)?)
}

pub fn cmd_evaluate(
    ckpt: &Path,
    corpus_path: Option<&Path>,
    split: Split,
    out: Option<&Path>,
    mut stdout: impl Write,
) -> Result<EvalReport, CliError> {
    let ck = checkpoint::load(ckpt)?;
    let path = corpus_path
        .map(Path::to_path_buf)
        .or_else(|| ck.data.corpus.clone())
        .ok_or_else(|| CliError::Config("no corpus given and none recorded in the checkpoint".into()))?;
    let r = evaluate_checkpoint(&ck, &path, split)?;
    let name = format!("{split:?}").to_lowercase();
    let csv = format!(
        "split,sentences,loss,accuracy,bleu\n{name},{},{:.12},{:.12},{:.12}\n",
        r.hypotheses.len(),
        r.loss,
        r.accuracy,
        r.bleu.score
    );
    let w = |e: std::io::Error| CliError::Data(format!("stdout: {e}"));
    writeln!(stdout, "{:.4}/{:.4}", r.accuracy, r.bleu.score).map_err(w)?;
    write!(stdout, "{csv}").map_err(w)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let p = dir.join("evaluation.csv");
        fs::write(&p, csv).map_err(|e| io_err(&p, e))?;
    }
    Ok(r)
}

pub const ABLATION_HEADER: &str =
    "mode,description,best_epoch,val_accuracy,val_bleu,final_val_accuracy,final_val_bleu,quantum_params,classical_params";

/// Trains one model per mode under `cfg` into `out/<mode>` and writes
/// `out/ablation.csv`. Accuracy and BLEU columns come from each mode's best epoch.
pub fn cmd_ablate(cfg: &RunConfig, out: &Path) -> Result<Vec<(AblationMode, TrainOutcome)>, CliError> {
    cfg.validate()?;
    let path = corpus_path(cfg)?;
    let corpus = load_parallel(path, cfg.src_lang.as_deref(), cfg.tgt_lang.as_deref(), cfg.ratios, cfg.seed)?;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let mut rows = vec![ABLATION_HEADER.to_string()];
    let mut results = Vec::new();
    for mode in AblationMode::ALL {
        let run = RunConfig { mode, ..cfg.clone() };
        let o = train_on(&run, &corpus, &out.join(mode.to_string()))?;
        let last = o.history.last().expect("at least one epoch");
        eprintln!("{mode} finished in {:.0}s", o.seconds);
        rows.push(format!(
            "{mode},{},{},{:.12},{:.12},{:.12},{:.12},{},{}",
            mode.description(),
            o.best.epoch,
            o.best.accuracy,
            o.best.bleu,
            last.val_accuracy,
            last.val_bleu,
            o.quantum_params,
            o.classical_params
        ));
        results.push((mode, o));
    }
    let p = out.join("ablation.csv");
    fs::write(&p, rows.join("\n") + "\n").map_err(|e| io_err(&p, e))?;
    Ok(results)
}

pub const CIRCUIT_TOLERANCE: f64 = 1e-6;
pub const MODEL_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub circuits: Vec<(usize, usize, f64)>,
    pub worst_circuit: f64,
    pub model_deviation: f64,
    pub model_params: usize,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.worst_circuit < CIRCUIT_TOLERANCE && self.model_deviation < MODEL_TOLERANCE
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (i, (w, p, d)) in self.circuits.iter().enumerate() {
            s += &format!("circuit {:>3}: {w} wires, {p:>2} params, max |shift - fd| = {d:.3e}\n", i + 1);
        }
        s += &format!("worst circuit deviation: {:.3e} (tolerance {CIRCUIT_TOLERANCE:e})\n", self.worst_circuit);
        s += &format!(
            "full model ({} params, 2-token sentences): max deviation {:.3e} (tolerance {MODEL_TOLERANCE:e})\n",
            self.model_params, self.model_deviation
        );
        s += if self.passed() { "gradcheck: PASS\n" } else { "gradcheck: FAIL\n" };
        s
    }
}

/// Parameter shift against central differences on `n` random circuits and
/// on the default model with a two-word vocabulary.
pub fn gradcheck(n: usize, seed: u64) -> Result<GradcheckReport, CliError> {
    if n == 0 {
        return Err(CliError::Config("--circuits must be ≥ 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut circuits = Vec::with_capacity(n);
    for _ in 0..n {
        let wires = rng.gen_range(1..=8);
        let n_params = rng.gen_range(1..=30);
        let (c, params, inputs) = random_circuit(&mut rng, wires, n_params);
        let s0 = StateVector::new(wires)?;
        let obs: Vec<usize> = (0..wires).collect();
        let ps = param_shift_grad(&c, &params, &inputs, &s0, &obs)?;
        let fd = finite_diff_grad(&c, &params, &inputs, &s0, &obs, 1e-5)?;
        circuits.push((wires, n_params, max_abs_deviation(&ps, &fd)));
    }
    let worst_circuit = circuits.iter().map(|c| c.2).fold(0.0, f64::max);

    let config = ModelConfig {
        seq_len: 4,
        dropout_rate: 0.0,
        vocab_size: FIRST_TAG as usize + 1 + 2,
        ..ModelConfig::default()
    };
    let model = Model::new(config)?;
    let params = model.init_params(seed);
    let (a, b) = (FIRST_TAG + 1, FIRST_TAG + 2);
    let batch = vec![Example::new(&[a, b], &[b, a], FIRST_TAG, 4)];
    let g = model.batch_grad(&params, &batch, &Default::default())?;
    let mean_loss = |p: &ModelParams| -> Result<f64, CliError> {
        let (l, n, _) = model.batch_loss(p, &batch)?;
        Ok(l / n as f64)
    };
    let mut p = params.clone();
    let step = 1e-5;
    let mut model_deviation: f64 = 0.0;
    for k in 0..p.len() {
        let base = p.values[k];
        p.values[k] = base + step;
        let plus = mean_loss(&p)?;
        p.values[k] = base - step;
        let minus = mean_loss(&p)?;
        p.values[k] = base;
        model_deviation = model_deviation.max(((plus - minus) / (2.0 * step) - g.grad[k]).abs());
    }
    Ok(GradcheckReport {
        circuits,
        worst_circuit,
        model_deviation,
        model_params: params.len(),
    })
}

/// Writes a synthetic TSV corpus to `out`.
pub fn cmd_synth(
    task: SynthTask,
    n_pairs: usize,
    vocab: usize,
    max_len: usize,
    seed: u64,
    languages: &[String],
    out: &PathBuf,
) -> Result<(), CliError> {
    let langs: Vec<&str> = languages.iter().map(String::as_str).collect();
    let text = corpus::synth_corpus(task, n_pairs, vocab, max_len, seed, &langs)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(out, text).map_err(|e| io_err(out, e))
}
