//! Epoch loop with Adam, and held-out evaluation by greedy decoding.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adam::OptimState;
use crate::corpus::make_batches;
use crate::error::{Error, Result};
use crate::metrics::{accuracy, bleu, sentence_counts, BleuReport, ConfusionCounts};
use crate::model::{Example, Model, ModelParams, EOS, PAD};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Smoothed BLEU for validation.
    pub smooth_bleu: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 150,
            batch_size: 8,
            seed: 0,
            smooth_bleu: false,
        }
    }
}

/// One `metrics.csv` row.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub val_bleu: f64,
}

impl EpochMetrics {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,val_loss,val_accuracy,val_bleu";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.12},{:.12},{:.12},{:.12}",
            self.epoch, self.train_loss, self.val_loss, self.val_accuracy, self.val_bleu
        )
    }

    /// `true` when `self` should replace `best`: higher accuracy, then higher BLEU.
    pub fn improves_on(&self, best: Option<&EpochMetrics>) -> bool {
        match best {
            None => true,
            Some(b) => {
                self.val_accuracy > b.val_accuracy
                    || (self.val_accuracy == b.val_accuracy && self.val_bleu > b.val_bleu)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Mean teacher-forced token loss.
    pub loss: f64,
    pub counts: ConfusionCounts,
    pub accuracy: f64,
    pub bleu: BleuReport,
    /// Greedy outputs as word ids, without `EOS`.
    pub hypotheses: Vec<Vec<u32>>,
}

fn words(row: &[u32], skip: usize) -> Vec<u32> {
    row.iter().skip(skip).copied().take_while(|&t| t != EOS && t != PAD).collect()
}

/// Source word ids and tag of an example built by [`Example::new`].
pub fn source_words(ex: &Example) -> (Vec<u32>, u32) {
    (words(&ex.source, 1), ex.source[0])
}

/// Reference word ids of an example.
pub fn reference_words(ex: &Example) -> Vec<u32> {
    words(&ex.target, 1)
}

/// Greedy decoding of one example, without the closing `EOS`.
pub fn greedy(model: &Model, params: &ModelParams, ex: &Example) -> Result<Vec<u32>> {
    let (src, tag) = source_words(ex);
    let mut out = model.translate(params, &src, tag, model.config().seq_len)?;
    if out.last() == Some(&EOS) {
        out.pop();
    }
    Ok(out)
}

/// Loss, accuracy and BLEU of `params` on `examples`. References default to
/// each example's target; `references` overrides them.
pub fn evaluate(
    model: &Model,
    params: &ModelParams,
    examples: &[Example],
    references: Option<&[Vec<u32>]>,
    smooth_bleu: bool,
) -> Result<EvalReport> {
    if examples.is_empty() {
        return Err(Error::Evaluation("no examples to evaluate".into()));
    }
    let (loss_sum, n_tokens, _) = model.batch_loss(params, examples)?;
    let refs: Vec<Vec<u32>> = match references {
        Some(r) => {
            crate::error::check_len("references", examples.len(), r.len())?;
            r.to_vec()
        }
        None => examples.iter().map(reference_words).collect(),
    };
    let mut counts = ConfusionCounts::default();
    let mut hypotheses = Vec::with_capacity(examples.len());
    for (ex, r) in examples.iter().zip(&refs) {
        let h = greedy(model, params, ex)?;
        counts += sentence_counts(&h, r);
        hypotheses.push(h);
    }
    Ok(EvalReport {
        loss: loss_sum / n_tokens.max(1) as f64,
        accuracy: accuracy(&counts)?,
        bleu: bleu(&hypotheses, &refs, 4, smooth_bleu)?,
        counts,
        hypotheses,
    })
}

/// Trains `params` in place for `cfg.epochs` epochs. `on_epoch` sees every
/// epoch's metrics with the parameters and optimizer state at its end.
pub fn train<F>(
    model: &Model,
    params: &mut ModelParams,
    opt: &mut OptimState,
    train_set: &[Example],
    val_set: &[Example],
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<Vec<EpochMetrics>>
where
    F: FnMut(&EpochMetrics, &ModelParams, &OptimState) -> Result<()>,
{
    if train_set.is_empty() {
        return Err(Error::Data("empty training split".into()));
    }
    if val_set.is_empty() {
        return Err(Error::Data("empty validation split".into()));
    }
    let seq_len = model.config().seq_len;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<Example> = train_set.to_vec();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut n_tokens) = (0.0, 0usize);
        for batch in make_batches(&order, cfg.batch_size, seq_len)? {
            let keep = model.dropout_masks(&batch.examples, &mut rng);
            let g = model.batch_grad(params, &batch.examples, &keep)?;
            if !g.loss_sum.is_finite() {
                return Err(Error::Numerical(format!("non-finite training loss in epoch {epoch}")));
            }
            opt.step(&mut params.values, &g.grad)?;
            loss_sum += g.loss_sum;
            n_tokens += g.n_tokens;
        }
        let eval = evaluate(model, params, val_set, None, cfg.smooth_bleu)?;
        if !eval.loss.is_finite() {
            return Err(Error::Numerical(format!("non-finite validation loss in epoch {epoch}")));
        }
        let m = EpochMetrics {
            epoch,
            train_loss: loss_sum / n_tokens as f64,
            val_loss: eval.loss,
            val_accuracy: eval.accuracy,
            val_bleu: eval.bleu.score,
        };
        on_epoch(&m, params, opt)?;
        history.push(m);
    }
    Ok(history)
}
