//! Token accuracy from confusion counts, and corpus BLEU.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{EOS, PAD};

/// Counts over token positions: `alpha` matches, `beta` positions where both
/// sequences have already terminated, and one `upsilon` plus one `delta` per
/// mismatch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub alpha: u64,
    pub beta: u64,
    pub upsilon: u64,
    pub delta: u64,
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        self.alpha += o.alpha;
        self.beta += o.beta;
        self.upsilon += o.upsilon;
        self.delta += o.delta;
    }
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.alpha + self.beta + self.upsilon + self.delta
    }
}

fn ended_from(seq: &[u32]) -> usize {
    seq.iter().position(|&t| t == EOS || t == PAD).unwrap_or(seq.len())
}

/// Position-wise counts over the unmasked positions of two aligned rows.
/// A position counts as terminated from the first `EOS` (or `PAD`) onwards.
pub fn confusion_counts(predicted: &[u32], reference: &[u32], pad_mask: &[bool]) -> Result<ConfusionCounts> {
    crate::error::check_len("reference row", predicted.len(), reference.len())?;
    crate::error::check_len("pad mask", predicted.len(), pad_mask.len())?;
    let (pe, re) = (ended_from(predicted), ended_from(reference));
    let mut c = ConfusionCounts::default();
    for i in (0..predicted.len()).filter(|&i| !pad_mask[i]) {
        if i >= pe && i >= re {
            c.beta += 1;
        } else if predicted[i] == reference[i] {
            c.alpha += 1;
        } else {
            c.upsilon += 1;
            c.delta += 1;
        }
    }
    Ok(c)
}

/// Counts for a decoded sentence against its reference, both given as word
/// ids without the closing `EOS`. Rows are compared with `EOS` appended and
/// positions where both are past their end are skipped.
pub fn sentence_counts(predicted: &[u32], reference: &[u32]) -> ConfusionCounts {
    let len = predicted.len().max(reference.len()) + 1;
    let row = |s: &[u32]| {
        let mut r = s.to_vec();
        r.push(EOS);
        r.resize(len, PAD);
        r
    };
    let (p, r) = (row(predicted), row(reference));
    let mask: Vec<bool> = p.iter().zip(&r).map(|(&a, &b)| a == PAD && b == PAD).collect();
    confusion_counts(&p, &r, &mask).expect("rows built with equal length")
}

/// `(α + β) / (α + β + Υ + δ)`.
pub fn accuracy(c: &ConfusionCounts) -> Result<f64> {
    let den = c.total();
    if den == 0 {
        return Err(Error::Evaluation("accuracy of zero counted positions".into()));
    }
    Ok((c.alpha + c.beta) as f64 / den as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BleuReport {
    pub score: f64,
    pub n_gram_precisions: Vec<f64>,
    pub brevity_penalty: f64,
    pub candidate_len: usize,
    pub reference_len: usize,
}

fn ngram_counts<T: Eq + std::hash::Hash>(s: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut m = HashMap::new();
    if s.len() >= n {
        for w in s.windows(n) {
            *m.entry(w).or_default() += 1;
        }
    }
    m
}

/// Corpus BLEU with clipped n-gram counts for `n = 1..=max_n` and a brevity
/// penalty. With `smooth`, precisions for `n ≥ 2` use add-one counts.
pub fn bleu<T: Eq + std::hash::Hash>(
    candidates: &[Vec<T>],
    references: &[Vec<T>],
    max_n: usize,
    smooth: bool,
) -> Result<BleuReport> {
    crate::error::check_len("reference corpus", candidates.len(), references.len())?;
    if candidates.is_empty() {
        return Err(Error::Evaluation("BLEU of an empty corpus".into()));
    }
    if max_n == 0 {
        return Err(Error::Evaluation("BLEU needs max_n ≥ 1".into()));
    }
    let mut matched = vec![0usize; max_n];
    let mut total = vec![0usize; max_n];
    for (c, r) in candidates.iter().zip(references) {
        for n in 1..=max_n {
            let rc = ngram_counts(r, n);
            for (g, k) in ngram_counts(c, n) {
                matched[n - 1] += k.min(rc.get(g).copied().unwrap_or(0));
                total[n - 1] += k;
            }
        }
    }
    let precisions: Vec<f64> = (0..max_n)
        .map(|i| {
            let (m, t) = (matched[i] as f64, total[i] as f64);
            if smooth && i > 0 {
                (m + 1.0) / (t + 1.0)
            } else if t == 0.0 {
                0.0
            } else {
                m / t
            }
        })
        .collect();
    let c_len: usize = candidates.iter().map(Vec::len).sum();
    let r_len: usize = references.iter().map(Vec::len).sum();
    // An empty candidate corpus is scored as if it had one token.
    let c_eff = c_len.max(1) as f64;
    let bp = if c_eff < r_len as f64 { (1.0 - r_len as f64 / c_eff).exp() } else { 1.0 };
    let score = if precisions.contains(&0.0) {
        0.0
    } else {
        bp * (precisions.iter().map(|p| p.ln()).sum::<f64>() / max_n as f64).exp()
    };
    Ok(BleuReport {
        score: score.clamp(0.0, 1.0),
        n_gram_precisions: precisions,
        brevity_penalty: bp,
        candidate_len: c_len,
        reference_len: r_len,
    })
}
