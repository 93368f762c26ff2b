//! The quantum encoder-decoder translation model.
//!
//! Per token, an embedding row is squashed into angles and run through a
//! block of convolution and pooling stages and a dense unitary; its `⟨Z⟩`
//! read-out, zero-padded to `d` dims and offset by a learned positional row,
//! is the token's representation. Encoder self-attention, causal decoder
//! self-attention and cross-attention use quantum projections with residual
//! connections. The variational head maps the last decoder state to features
//! that are scored against the tied embedding table.
//!
//! Gradients are chained by hand: parameter shift for every circuit, analytic
//! rules for softmax, attention mixing and the squashing functions.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::circuit::{run_circuit, ParamCircuit};
use crate::error::{check_len, Error, Result};
use crate::gradient::{param_shift_grad, Jacobian};
use crate::layers::{
    attention_weights, dense_param_count, dot, project_wire, push_angle_encoding, push_conv_layer, push_dense,
    push_pool_layer, push_variational, CONV_PARAMS, POOL_PARAMS,
};
use crate::statevector::{StateVector, MAX_WIRES};

pub const PAD: u32 = 0;
pub const SOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
/// Language tags occupy ids from here on, one per configured language.
pub const FIRST_TAG: u32 = 4;

/// Attention projections see `ATTENTION_ANGLE_SCALE · x` as encoding angles.
pub const ATTENTION_ANGLE_SCALE: f64 = FRAC_PI_2;
/// Lower clamp on predicted probabilities inside the loss.
pub const PROB_FLOOR: f64 = 1e-12;

/// Architecture variants for the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AblationMode {
    O1,
    O2,
    O3,
    O4,
    O5,
}

impl AblationMode {
    pub const ALL: [AblationMode; 5] = [
        AblationMode::O1,
        AblationMode::O2,
        AblationMode::O3,
        AblationMode::O4,
        AblationMode::O5,
    ];

    /// Convolution layers present (identity otherwise).
    pub fn conv(self) -> bool {
        self != AblationMode::O1
    }

    /// Quantum attention present (uniform averaging otherwise).
    pub fn attention(self) -> bool {
        matches!(self, AblationMode::O1 | AblationMode::O4 | AblationMode::O5)
    }

    /// Variational head present (parameter-free `tanh` otherwise).
    pub fn variational(self) -> bool {
        !matches!(self, AblationMode::O2 | AblationMode::O4)
    }

    pub fn description(self) -> &'static str {
        match self {
            AblationMode::O1 => "Without Quantum Convolution Layer",
            AblationMode::O2 => "With Quantum Convolution Layer",
            AblationMode::O3 => "Without Quantum Attention Layer",
            AblationMode::O4 => "With Quantum Attention Layer",
            AblationMode::O5 => "Complete Model",
        }
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "O1" => Ok(AblationMode::O1),
            "O2" => Ok(AblationMode::O2),
            "O3" => Ok(AblationMode::O3),
            "O4" => Ok(AblationMode::O4),
            "O5" => Ok(AblationMode::O5),
            _ => Err(Error::Config(format!("unknown ablation mode {s:?} (expected O1..O5)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub n_qubits: usize,
    pub conv_pool_stages: usize,
    /// Maximum token positions for source rows and decoder prefixes.
    pub seq_len: usize,
    pub dropout_rate: f64,
    pub ablation_mode: AblationMode,
    pub vocab_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_qubits: 8,
            conv_pool_stages: 2,
            seq_len: 16,
            dropout_rate: 0.02,
            ablation_mode: AblationMode::O5,
            vocab_size: 64,
        }
    }
}

impl ModelConfig {
    pub fn embed_dim(&self) -> usize {
        self.n_qubits
    }

    /// Active wires left for the dense unitary.
    pub fn dense_wires(&self) -> usize {
        self.n_qubits >> self.conv_pool_stages
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_qubits == 0 || self.n_qubits > MAX_WIRES {
            return fail(format!("n_qubits must be in 1..={MAX_WIRES}, got {}", self.n_qubits));
        }
        if self.conv_pool_stages >= usize::BITS as usize
            || !self.n_qubits.is_multiple_of(1 << self.conv_pool_stages)
            || self.dense_wires() < 2
        {
            return fail(format!(
                "n_qubits / 2^conv_pool_stages must be an integer ≥ 2 (n_qubits {}, stages {})",
                self.n_qubits, self.conv_pool_stages
            ));
        }
        if dense_param_count(self.dense_wires()).is_err() {
            return fail(format!(
                "dense unitary supports at most 3 wires; n_qubits / 2^stages = {}",
                self.dense_wires()
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout_rate must be in [0, 1), got {}", self.dropout_rate));
        }
        if self.seq_len < 2 {
            return fail(format!("seq_len must be ≥ 2, got {}", self.seq_len));
        }
        if self.vocab_size <= FIRST_TAG as usize {
            return fail(format!(
                "vocab_size must exceed the {FIRST_TAG} reserved ids, got {}",
                self.vocab_size
            ));
        }
        Ok(())
    }
}

/// A named, contiguous range of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub name: String,
    pub offset: usize,
    pub len: usize,
    pub quantum: bool,
}

/// Every trainable value of the model in one flat vector, addressed by section.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub sections: Vec<Section>,
    pub values: Vec<f64>,
}

/// Section names, in layout order.
pub mod sections {
    pub const EMBEDDING: &str = "embedding";
    pub const POSITIONAL: &str = "positional";
    pub const OUTPUT_BIAS: &str = "output_bias";
    pub const ENCODER_CONV: &str = "encoder.conv";
    pub const ENCODER_POOL: &str = "encoder.pool";
    pub const ENCODER_DENSE: &str = "encoder.dense";
    pub const ENCODER_ATTENTION: &str = "encoder.attention";
    pub const DECODER_CONV: &str = "decoder.conv";
    pub const DECODER_POOL: &str = "decoder.pool";
    pub const DECODER_DENSE: &str = "decoder.dense";
    pub const DECODER_ATTENTION: &str = "decoder.attention";
    pub const CROSS_ATTENTION: &str = "cross.attention";
    pub const HEAD: &str = "head";
}

pub fn param_layout(config: &ModelConfig) -> Vec<Section> {
    use sections::*;
    let d = config.embed_dim();
    let mode = config.ablation_mode;
    let stages = config.conv_pool_stages;
    let dense = dense_param_count(config.dense_wires()).unwrap_or(0);
    let mut out = Vec::new();
    let mut offset = 0;
    let mut add = |name: &str, len: usize, quantum: bool| {
        out.push(Section {
            name: name.to_string(),
            offset,
            len,
            quantum,
        });
        offset += len;
    };
    add(EMBEDDING, config.vocab_size * d, false);
    add(POSITIONAL, config.seq_len * d, false);
    add(OUTPUT_BIAS, config.vocab_size, false);
    for (conv, pool, dense_name, attn) in [
        (ENCODER_CONV, ENCODER_POOL, ENCODER_DENSE, ENCODER_ATTENTION),
        (DECODER_CONV, DECODER_POOL, DECODER_DENSE, DECODER_ATTENTION),
    ] {
        if mode.conv() {
            add(conv, stages * CONV_PARAMS, true);
        }
        add(pool, stages * POOL_PARAMS, true);
        add(dense_name, dense, true);
        if mode.attention() {
            add(attn, 9 * d, true);
        }
    }
    if mode.attention() {
        add(CROSS_ATTENTION, 9 * d, true);
    }
    if mode.variational() {
        add(HEAD, d, true);
    }
    out
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        let sections = param_layout(config);
        let n = sections.last().map_or(0, |s| s.offset + s.len);
        ModelParams {
            sections,
            values: vec![0.0; n],
        }
    }

    /// Embedding and positional rows `N(0, 1)`, circuit angles `N(0, 0.1)`,
    /// output bias zero.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut p = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wide = Normal::new(0.0, 1.0).expect("valid normal");
        let narrow = Normal::new(0.0, 0.1).expect("valid normal");
        for s in &p.sections {
            let dist = match s.name.as_str() {
                sections::OUTPUT_BIAS => continue,
                sections::EMBEDDING | sections::POSITIONAL => &wide,
                _ => &narrow,
            };
            for v in &mut p.values[s.offset..s.offset + s.len] {
                *v = dist.sample(&mut rng);
            }
        }
        p
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn section(&self, name: &str) -> Option<&[f64]> {
        self.find(name).map(|s| &self.values[s.offset..s.offset + s.len])
    }

    pub fn quantum_count(&self) -> usize {
        self.sections.iter().filter(|s| s.quantum).map(|s| s.len).sum()
    }

    pub fn classical_count(&self) -> usize {
        self.sections.iter().filter(|s| !s.quantum).map(|s| s.len).sum()
    }
}

/// Cross-entropy over a sequence of predicted distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct LossRecord {
    pub value: f64,
    /// One entry per position; masked positions hold 0.
    pub per_token: Vec<f64>,
    /// Positions whose reference probability fell below [`PROB_FLOOR`].
    pub clamped: usize,
}

/// `−Σ_q log D_q[ref_q]` over positions where `mask` is `false`.
pub fn loss(predictions: &[Vec<f64>], references: &[u32], pad_mask: &[bool]) -> Result<LossRecord> {
    check_len("loss references", predictions.len(), references.len())?;
    check_len("loss mask", predictions.len(), pad_mask.len())?;
    let mut per_token = vec![0.0; predictions.len()];
    let mut clamped = 0;
    for (q, (dist, &r)) in predictions.iter().zip(references).enumerate() {
        if pad_mask[q] {
            continue;
        }
        let p = *dist
            .get(r as usize)
            .ok_or_else(|| Error::Vocabulary(format!("reference id {r} outside distribution")))?;
        if p < PROB_FLOOR {
            clamped += 1;
        }
        per_token[q] = -p.max(PROB_FLOOR).ln();
    }
    Ok(LossRecord {
        value: per_token.iter().sum(),
        per_token,
        clamped,
    })
}

/// One training pair as unpadded id rows.
///
/// `source` is `[tag, x…, EOS]`, `decoder_input` is `[SOS, tag, y…]` and
/// `target[t]` is the token to predict after `decoder_input[..=t]`, with `PAD`
/// where nothing is predicted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub source: Vec<u32>,
    pub decoder_input: Vec<u32>,
    pub target: Vec<u32>,
}

impl Example {
    /// Builds the rows for `source_words → target_words` under `tag`,
    /// truncating the sentences so every row fits `seq_len`.
    pub fn new(source_words: &[u32], target_words: &[u32], tag: u32, seq_len: usize) -> Self {
        let room = seq_len.saturating_sub(2);
        let xs = &source_words[..source_words.len().min(room)];
        let ys = &target_words[..target_words.len().min(room)];
        let mut source = vec![tag];
        source.extend_from_slice(xs);
        source.push(EOS);
        let mut decoder_input = vec![SOS, tag];
        decoder_input.extend_from_slice(ys);
        let mut target = vec![PAD];
        target.extend_from_slice(ys);
        target.push(EOS);
        Example {
            source,
            decoder_input,
            target,
        }
    }

    pub fn n_predicted(&self) -> usize {
        self.target.iter().filter(|&&t| t != PAD).count()
    }
}

/// Per-batch gradient result.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGrad {
    /// Summed token loss over the batch.
    pub loss_sum: f64,
    pub n_tokens: usize,
    pub clamped: usize,
    /// Gradient of the mean token loss.
    pub grad: Vec<f64>,
}

impl BatchGrad {
    pub fn mean_loss(&self) -> f64 {
        self.loss_sum / self.n_tokens.max(1) as f64
    }
}

#[derive(Debug, Clone, Copy)]
struct BlockOffsets {
    block: usize,
    attention: Option<usize>,
}

/// A configured model: the fixed circuit structure plus parameter offsets.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    layout: Vec<Section>,
    block: ParamCircuit,
    readout: Vec<usize>,
    head: ParamCircuit,
    embedding: usize,
    positional: usize,
    bias: usize,
    encoder: BlockOffsets,
    decoder: BlockOffsets,
    cross: Option<usize>,
    head_offset: Option<usize>,
}

/// One token's block output, optionally with its Jacobian and the data needed
/// to push input gradients back to its embedding row.
struct TokenBlock {
    readout: Vec<f64>,
    jac: Option<Jacobian>,
    /// `dangle/dE[id]` per component, including the dropout scale.
    angle_slope: Vec<f64>,
}

type BlockTable = BTreeMap<u32, TokenBlock>;

/// Attention forward values kept for the backward pass.
struct AttnCache {
    /// Quantum projections: encoding angles of queries and keys/values.
    qa: Vec<Vec<f64>>,
    kva: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
    out: Vec<Vec<f64>>,
}

struct SeqCache {
    enc_attn: AttnCache,
    dec_attn: AttnCache,
    cross: AttnCache,
    g: Vec<Vec<f64>>,
    features: Vec<Vec<f64>>,
    head_jac: Vec<Option<Jacobian>>,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = param_layout(&config);
        let off = |name: &str| layout.iter().find(|s| s.name == name).map(|s| s.offset);
        let (block, readout) = block_circuit(&config)?;
        let d = config.embed_dim();
        let mut head = ParamCircuit::new(d);
        head.add_inputs(d);
        head.add_params(d);
        push_angle_encoding(&mut head, 0)?;
        push_variational(&mut head, 0)?;
        let first_block = |conv: &str, pool: &str| off(conv).or(off(pool)).expect("pool section");
        Ok(Model {
            embedding: off(sections::EMBEDDING).expect("embedding"),
            positional: off(sections::POSITIONAL).expect("positional"),
            bias: off(sections::OUTPUT_BIAS).expect("bias"),
            encoder: BlockOffsets {
                block: first_block(sections::ENCODER_CONV, sections::ENCODER_POOL),
                attention: off(sections::ENCODER_ATTENTION),
            },
            decoder: BlockOffsets {
                block: first_block(sections::DECODER_CONV, sections::DECODER_POOL),
                attention: off(sections::DECODER_ATTENTION),
            },
            cross: off(sections::CROSS_ATTENTION),
            head_offset: off(sections::HEAD),
            config,
            layout,
            block,
            readout,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &[Section] {
        &self.layout
    }

    pub fn n_params(&self) -> usize {
        self.layout.last().map_or(0, |s| s.offset + s.len)
    }

    pub fn init_params(&self, seed: u64) -> ModelParams {
        ModelParams::init(&self.config, seed)
    }

    /// The per-token circuit shared in structure by encoder and decoder.
    pub fn block_circuit(&self) -> &ParamCircuit {
        &self.block
    }

    fn check_params(&self, p: &ModelParams) -> Result<()> {
        if p.sections != self.layout {
            return Err(Error::Config("parameter layout does not match the model configuration".into()));
        }
        Ok(())
    }

    fn check_ids(&self, ids: &[u32]) -> Result<()> {
        match ids.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            Some(id) => Err(Error::Vocabulary(format!(
                "token id {id} outside vocabulary of {}",
                self.config.vocab_size
            ))),
            None => Ok(()),
        }
    }

    fn d(&self) -> usize {
        self.config.embed_dim()
    }

    fn row<'a>(&self, p: &'a [f64], base: usize, i: usize) -> &'a [f64] {
        let d = self.d();
        &p[base + i * d..base + (i + 1) * d]
    }

    /// Encoding angles `π·tanh(·)` for each token; no dropout.
    pub fn embed(&self, params: &ModelParams, tokens: &[u32]) -> Result<Vec<Vec<f64>>> {
        self.check_params(params)?;
        self.check_ids(tokens)?;
        Ok(tokens
            .iter()
            .map(|&t| {
                self.row(&params.values, self.embedding, t as usize)
                    .iter()
                    .map(|e| PI * e.tanh())
                    .collect()
            })
            .collect())
    }

    fn token_block(&self, p: &[f64], side: BlockOffsets, id: u32, keep: Option<&[f64]>, grad: bool) -> Result<TokenBlock> {
        let row = self.row(p, self.embedding, id as usize);
        let mut angles = Vec::with_capacity(row.len());
        let mut angle_slope = Vec::with_capacity(row.len());
        for (i, &e) in row.iter().enumerate() {
            let m = keep.map_or(1.0, |k| k[i]);
            let t = (e * m).tanh();
            angles.push(PI * t);
            angle_slope.push(PI * (1.0 - t * t) * m);
        }
        let params = &p[side.block..side.block + self.block.n_params()];
        let s0 = StateVector::new(self.d())?;
        let (readout, jac) = if grad {
            let out = run_circuit(&self.block, params, &angles, &s0)?;
            let r = self.readout.iter().map(|&w| out.expectation_z_unchecked(w)).collect();
            (r, Some(param_shift_grad(&self.block, params, &angles, &s0, &self.readout)?))
        } else {
            let out = run_circuit(&self.block, params, &angles, &s0)?;
            (self.readout.iter().map(|&w| out.expectation_z_unchecked(w)).collect(), None)
        };
        Ok(TokenBlock {
            readout,
            jac,
            angle_slope,
        })
    }

    fn block_table(
        &self,
        p: &[f64],
        side: BlockOffsets,
        ids: impl IntoIterator<Item = u32>,
        keep: &BTreeMap<u32, Vec<f64>>,
        grad: bool,
    ) -> Result<BlockTable> {
        let mut table = BlockTable::new();
        for id in ids {
            if let std::collections::btree_map::Entry::Vacant(e) = table.entry(id) {
                let tb = self.token_block(p, side, id, keep.get(&id).map(|k| k.as_slice()), grad)?;
                e.insert(tb);
            }
        }
        Ok(table)
    }

    /// Token representations: padded block read-out plus positional row.
    fn represent(&self, p: &[f64], ids: &[u32], table: &BlockTable) -> Vec<Vec<f64>> {
        ids.iter()
            .enumerate()
            .map(|(t, id)| {
                let mut x = self.row(p, self.positional, t).to_vec();
                for (xi, r) in x.iter_mut().zip(&table[id].readout) {
                    *xi += r;
                }
                x
            })
            .collect()
    }

    fn attention(
        &self,
        p: &[f64],
        offset: Option<usize>,
        xq: &[Vec<f64>],
        xkv: &[Vec<f64>],
        kv_mask: &[bool],
        causal: bool,
    ) -> Result<AttnCache> {
        let d = self.d();
        let Some(off) = offset else {
            let weights = attention_weights(xq, xkv, kv_mask, causal, true)?;
            let out = mix(&weights, xkv, d);
            return Ok(AttnCache {
                qa: vec![],
                kva: vec![],
                q: vec![],
                k: vec![],
                v: vec![],
                weights,
                out,
            });
        };
        let angles = |x: &Vec<f64>| x.iter().map(|v| ATTENTION_ANGLE_SCALE * v).collect::<Vec<f64>>();
        let qa: Vec<Vec<f64>> = xq.iter().map(angles).collect();
        let kva: Vec<Vec<f64>> = xkv.iter().map(angles).collect();
        let proj = |a: &[Vec<f64>], which: usize| -> Vec<Vec<f64>> {
            let pa = &p[off + which * 3 * d..off + (which + 1) * 3 * d];
            a.iter()
                .map(|r| (0..d).map(|i| project_wire(r[i], &pa[3 * i..3 * i + 3])).collect())
                .collect()
        };
        let q = proj(&qa, 0);
        let k = proj(&kva, 1);
        let v = proj(&kva, 2);
        let weights = attention_weights(&q, &k, kv_mask, causal, false)?;
        let out = mix(&weights, &v, d);
        Ok(AttnCache {
            qa,
            kva,
            q,
            k,
            v,
            weights,
            out,
        })
    }

    /// Backward through one attention; returns input gradients for the query
    /// side and the key/value side and accumulates projection gradients.
    fn attention_backward(
        &self,
        p: &[f64],
        offset: Option<usize>,
        c: &AttnCache,
        dout: &[Vec<f64>],
        grad: &mut [f64],
        n_kv: usize,
    ) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let d = self.d();
        let nq = dout.len();
        let mut dxq = vec![vec![0.0; d]; nq];
        let mut dxkv = vec![vec![0.0; d]; n_kv];
        let Some(off) = offset else {
            for (t, w) in c.weights.iter().enumerate() {
                for (u, &wu) in w.iter().enumerate() {
                    if wu != 0.0 {
                        axpy(&mut dxkv[u], wu, &dout[t]);
                    }
                }
            }
            return (dxq, dxkv);
        };
        let scale = 1.0 / (d as f64).sqrt();
        let mut dq = vec![vec![0.0; d]; nq];
        let mut dk = vec![vec![0.0; d]; n_kv];
        let mut dv = vec![vec![0.0; d]; n_kv];
        for t in 0..nq {
            let w = &c.weights[t];
            let dw: Vec<f64> = (0..n_kv).map(|u| dot(&dout[t], &c.v[u])).collect();
            let mean: f64 = w.iter().zip(&dw).map(|(a, b)| a * b).sum();
            for u in 0..n_kv {
                if w[u] == 0.0 {
                    continue;
                }
                axpy(&mut dv[u], w[u], &dout[t]);
                let ds = w[u] * (dw[u] - mean) * scale;
                axpy(&mut dq[t], ds, &c.k[u]);
                axpy(&mut dk[u], ds, &c.q[t]);
            }
        }
        let mut back = |angles: &[Vec<f64>], dproj: &[Vec<f64>], which: usize, dx: &mut [Vec<f64>]| {
            let base = off + which * 3 * d;
            for (r, (a, g)) in angles.iter().zip(dproj).enumerate() {
                for i in 0..d {
                    if g[i] == 0.0 {
                        continue;
                    }
                    let s = project_wire_grad(a[i], &p[base + 3 * i..base + 3 * i + 3]);
                    dx[r][i] += g[i] * s[0] * ATTENTION_ANGLE_SCALE;
                    for j in 0..3 {
                        grad[base + 3 * i + j] += g[i] * s[1 + j];
                    }
                }
            }
        };
        back(&c.qa, &dq, 0, &mut dxq);
        back(&c.kva, &dk, 1, &mut dxkv);
        back(&c.kva, &dv, 2, &mut dxkv);
        (dxq, dxkv)
    }

    fn head_forward(&self, p: &[f64], g: &[f64], grad: bool) -> Result<(Vec<f64>, Option<Jacobian>)> {
        match self.head_offset {
            Some(off) => {
                let z: Vec<f64> = g.iter().map(|x| PI * x.tanh()).collect();
                let hp = &p[off..off + self.d()];
                let s0 = StateVector::new(self.d())?;
                let out = run_circuit(&self.head, hp, &z, &s0)?;
                let f = (0..self.d()).map(|w| out.expectation_z_unchecked(w)).collect();
                let wires: Vec<usize> = (0..self.d()).collect();
                let jac = if grad {
                    Some(param_shift_grad(&self.head, hp, &z, &s0, &wires)?)
                } else {
                    None
                };
                Ok((f, jac))
            }
            None => Ok((g.iter().map(|x| x.tanh()).collect(), None)),
        }
    }

    fn forward(
        &self,
        p: &[f64],
        source: &[u32],
        prefix: &[u32],
        enc: &BlockTable,
        dec: &BlockTable,
        grad: bool,
    ) -> Result<SeqCache> {
        let x = self.represent(p, source, enc);
        let src_mask: Vec<bool> = source.iter().map(|&t| t == PAD).collect();
        let enc_attn = self.attention(p, self.encoder.attention, &x, &x, &src_mask, false)?;
        let ctx = add(&enc_attn.out, &x);
        let y = self.represent(p, prefix, dec);
        let tgt_mask: Vec<bool> = prefix.iter().map(|&t| t == PAD).collect();
        let dec_attn = self.attention(p, self.decoder.attention, &y, &y, &tgt_mask, true)?;
        let h = add(&dec_attn.out, &y);
        let cross = self.attention(p, self.cross, &h, &ctx, &src_mask, false)?;
        let g = add(&cross.out, &h);
        let mut features = Vec::with_capacity(g.len());
        let mut head_jac = Vec::with_capacity(g.len());
        for gt in &g {
            let (f, j) = self.head_forward(p, gt, grad)?;
            features.push(f);
            head_jac.push(j);
        }
        Ok(SeqCache {
            enc_attn,
            dec_attn,
            cross,
            g,
            features,
            head_jac,
        })
    }

    fn logits(&self, p: &[f64], f: &[f64]) -> Vec<f64> {
        (0..self.config.vocab_size)
            .map(|v| p[self.bias + v] + dot(self.row(p, self.embedding, v), f))
            .collect()
    }

    fn trim(tokens: &[u32]) -> &[u32] {
        let end = tokens.iter().rposition(|&t| t != PAD).map_or(0, |i| i + 1);
        &tokens[..end]
    }

    /// Per-token context vectors for a source row (`[tag, x…, EOS]`).
    pub fn encode(&self, params: &ModelParams, source: &[u32]) -> Result<Vec<Vec<f64>>> {
        self.check_params(params)?;
        self.check_ids(source)?;
        let source = &source[..source.len().min(self.config.seq_len)];
        if !source.iter().any(|&t| t != PAD) {
            return Err(Error::Attention("source has no unmasked token".into()));
        }
        let p = &params.values;
        let table = self.block_table(p, self.encoder, source.iter().copied(), &BTreeMap::new(), false)?;
        let x = self.represent(p, source, &table);
        let mask: Vec<bool> = source.iter().map(|&t| t == PAD).collect();
        let a = self.attention(p, self.encoder.attention, &x, &x, &mask, false)?;
        Ok(add(&a.out, &x))
    }

    /// Distribution over the vocabulary for the token following `prefix`,
    /// given the source row the context was built from.
    pub fn decode_step(&self, params: &ModelParams, source: &[u32], prefix: &[u32]) -> Result<Vec<f64>> {
        self.check_params(params)?;
        self.check_ids(source)?;
        self.check_ids(prefix)?;
        if prefix.is_empty() {
            return Err(Error::Decoding("empty decoder prefix".into()));
        }
        if prefix.len() > self.config.seq_len {
            return Err(Error::Decoding(format!(
                "prefix of {} tokens exceeds seq_len {}",
                prefix.len(),
                self.config.seq_len
            )));
        }
        let source = Self::trim(&source[..source.len().min(self.config.seq_len)]);
        if source.is_empty() {
            return Err(Error::Attention("source has no unmasked token".into()));
        }
        let p = &params.values;
        let none = BTreeMap::new();
        let enc = self.block_table(p, self.encoder, source.iter().copied(), &none, false)?;
        let dec = self.block_table(p, self.decoder, prefix.iter().copied(), &none, false)?;
        let cache = self.forward(p, source, prefix, &enc, &dec, false)?;
        let logits = self.logits(p, cache.features.last().expect("non-empty prefix"));
        Ok(softmax(&logits))
    }

    /// Greedy decoding of `source_words` into the language of `tag`.
    ///
    /// Returns the emitted ids, ending with `EOS` when the model stopped on its
    /// own. `PAD` and `SOS` are never emitted.
    pub fn translate(&self, params: &ModelParams, source_words: &[u32], tag: u32, max_len: usize) -> Result<Vec<u32>> {
        self.check_params(params)?;
        let words = Self::trim(source_words);
        let room = self.config.seq_len.saturating_sub(2);
        let mut source = vec![tag];
        source.extend(words.iter().take(room));
        source.push(EOS);
        self.check_ids(&source)?;
        let p = &params.values;
        let none = BTreeMap::new();
        let enc = self.block_table(p, self.encoder, source.iter().copied(), &none, false)?;
        let mut dec = BlockTable::new();
        let mut prefix = vec![SOS, tag];
        let mut out = Vec::new();
        let limit = max_len.min(self.config.seq_len - 1);
        while out.len() < limit {
            for &id in &prefix {
                if let std::collections::btree_map::Entry::Vacant(e) = dec.entry(id) {
                    e.insert(self.token_block(p, self.decoder, id, None, false)?);
                }
            }
            let cache = self.forward(p, &source, &prefix, &enc, &dec, false)?;
            let logits = self.logits(p, cache.features.last().expect("non-empty prefix"));
            let next = (0..logits.len())
                .filter(|&v| v != PAD as usize && v != SOS as usize)
                .fold(None::<usize>, |best, v| match best {
                    Some(b) if logits[b] >= logits[v] => Some(b),
                    _ => Some(v),
                })
                .expect("vocabulary beyond reserved ids") as u32;
            out.push(next);
            if next == EOS {
                break;
            }
            prefix.push(next);
        }
        Ok(out)
    }

    /// Teacher-forced distributions at every predicted position of `ex`.
    pub fn predict(&self, params: &ModelParams, ex: &Example) -> Result<Vec<Vec<f64>>> {
        self.check_params(params)?;
        let ex = self.clip(ex)?;
        let p = &params.values;
        let none = BTreeMap::new();
        let enc = self.block_table(p, self.encoder, ex.source.iter().copied(), &none, false)?;
        let dec = self.block_table(p, self.decoder, ex.decoder_input.iter().copied(), &none, false)?;
        let cache = self.forward(p, &ex.source, &ex.decoder_input, &enc, &dec, false)?;
        Ok(cache.features.iter().map(|f| softmax(&self.logits(p, f))).collect())
    }

    /// Validates an example and strips trailing padding.
    fn clip(&self, ex: &Example) -> Result<Example> {
        let source = Self::trim(&ex.source).to_vec();
        let decoder_input = Self::trim(&ex.decoder_input).to_vec();
        if source.is_empty() || decoder_input.is_empty() {
            return Err(Error::Data("example with empty source or decoder input".into()));
        }
        if ex.target.len() < decoder_input.len() {
            return Err(Error::Shape {
                what: "target row",
                expected: decoder_input.len(),
                actual: ex.target.len(),
            });
        }
        if source.len() > self.config.seq_len || decoder_input.len() > self.config.seq_len {
            return Err(Error::Data(format!(
                "example rows exceed seq_len {}",
                self.config.seq_len
            )));
        }
        let target = ex.target[..decoder_input.len()].to_vec();
        self.check_ids(&source)?;
        self.check_ids(&decoder_input)?;
        self.check_ids(&target)?;
        Ok(Example {
            source,
            decoder_input,
            target,
        })
    }

    /// Draws one dropout keep-mask per distinct token in `batch`.
    pub fn dropout_masks<R: Rng>(&self, batch: &[Example], rng: &mut R) -> BTreeMap<u32, Vec<f64>> {
        let rate = self.config.dropout_rate;
        let mut masks = BTreeMap::new();
        if rate == 0.0 {
            return masks;
        }
        let ids: std::collections::BTreeSet<u32> = batch
            .iter()
            .flat_map(|e| e.source.iter().chain(&e.decoder_input).copied())
            .filter(|&t| t != PAD)
            .collect();
        for id in ids {
            let m = (0..self.d())
                .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { 1.0 / (1.0 - rate) })
                .collect();
            masks.insert(id, m);
        }
        masks
    }

    /// Summed loss over `batch` and the gradient of the mean token loss.
    ///
    /// `keep` holds per-token dropout masks (empty for no dropout).
    pub fn batch_grad(&self, params: &ModelParams, batch: &[Example], keep: &BTreeMap<u32, Vec<f64>>) -> Result<BatchGrad> {
        self.check_params(params)?;
        let batch: Vec<Example> = batch.iter().map(|e| self.clip(e)).collect::<Result<_>>()?;
        let p = &params.values;
        let d = self.d();
        let enc = self.block_table(p, self.encoder, batch.iter().flat_map(|e| e.source.clone()), keep, true)?;
        let dec = self.block_table(p, self.decoder, batch.iter().flat_map(|e| e.decoder_input.clone()), keep, true)?;
        let mut grad = vec![0.0; p.len()];
        let mut dr_enc: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        let mut dr_dec: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        let n_tokens: usize = batch.iter().map(|e| e.n_predicted()).sum();
        if n_tokens == 0 {
            return Err(Error::Data("batch has no predicted tokens".into()));
        }
        let norm = 1.0 / n_tokens as f64;
        let mut loss_sum = 0.0;
        let mut clamped = 0;

        for ex in &batch {
            let c = self.forward(p, &ex.source, &ex.decoder_input, &enc, &dec, true)?;
            let n_src = ex.source.len();
            let n_dec = ex.decoder_input.len();
            let mut dg = vec![vec![0.0; d]; n_dec];
            for (t, &target) in ex.target.iter().enumerate() {
                if target == PAD {
                    continue;
                }
                let f = &c.features[t];
                let logits = self.logits(p, f);
                let dist = softmax(&logits);
                let pt = dist[target as usize];
                let clamp = pt < PROB_FLOOR;
                loss_sum += -pt.max(PROB_FLOOR).ln();
                if clamp {
                    clamped += 1;
                    continue;
                }
                let mut df = vec![0.0; d];
                for (v, &dv) in dist.iter().enumerate() {
                    let dl = norm * (dv - if v == target as usize { 1.0 } else { 0.0 });
                    grad[self.bias + v] += dl;
                    let e0 = self.embedding + v * d;
                    for i in 0..d {
                        grad[e0 + i] += dl * f[i];
                        df[i] += dl * p[e0 + i];
                    }
                }
                // Head backward.
                let gt = &c.g[t];
                match (&c.head_jac[t], self.head_offset) {
                    (Some(j), Some(off)) => {
                        let mut dz = vec![0.0; d];
                        j.accumulate_vjp(&df, &mut grad[off..off + d], &mut dz);
                        for i in 0..d {
                            let th = gt[i].tanh();
                            dg[t][i] += dz[i] * PI * (1.0 - th * th);
                        }
                    }
                    _ => {
                        for i in 0..d {
                            let th = gt[i].tanh();
                            dg[t][i] += df[i] * (1.0 - th * th);
                        }
                    }
                }
            }
            // g = cross(h, ctx) + h
            let (dh_q, mut dctx) = self.attention_backward(p, self.cross, &c.cross, &dg, &mut grad, n_src);
            let dh = add(&dg, &dh_q);
            // h = self(y) + y
            let (dy_q, dy_kv) = self.attention_backward(p, self.decoder.attention, &c.dec_attn, &dh, &mut grad, n_dec);
            let dy = add(&add(&dh, &dy_q), &dy_kv);
            // ctx = self(x) + x
            let (dx_q, dx_kv) = self.attention_backward(p, self.encoder.attention, &c.enc_attn, &dctx, &mut grad, n_src);
            for (t, row) in dctx.iter_mut().enumerate() {
                for i in 0..d {
                    row[i] += dx_q[t][i] + dx_kv[t][i];
                }
            }
            let dx = dctx;
            for (ids, dxs, dr) in [(&ex.source, &dx, &mut dr_enc), (&ex.decoder_input, &dy, &mut dr_dec)] {
                for (t, (&id, g)) in ids.iter().zip(dxs.iter()).enumerate() {
                    axpy(&mut grad[self.positional + t * d..self.positional + (t + 1) * d], 1.0, g);
                    let k = self.readout.len();
                    let acc = dr.entry(id).or_insert_with(|| vec![0.0; k]);
                    axpy(acc, 1.0, &g[..k]);
                }
            }
        }

        for (side, table, dr) in [(self.encoder, &enc, &dr_enc), (self.decoder, &dec, &dr_dec)] {
            let n = self.block.n_params();
            for (id, up) in dr {
                let tb = &table[id];
                let jac = tb.jac.as_ref().expect("gradient table");
                let mut dangle = vec![0.0; d];
                jac.accumulate_vjp(up, &mut grad[side.block..side.block + n], &mut dangle);
                let e0 = self.embedding + *id as usize * d;
                for i in 0..d {
                    grad[e0 + i] += dangle[i] * tb.angle_slope[i];
                }
            }
        }
        Ok(BatchGrad {
            loss_sum,
            n_tokens,
            clamped,
            grad,
        })
    }

    /// Summed teacher-forced loss over `batch`, no dropout.
    pub fn batch_loss(&self, params: &ModelParams, batch: &[Example]) -> Result<(f64, usize, usize)> {
        self.check_params(params)?;
        let mut total = 0.0;
        let mut n = 0;
        let mut clamped = 0;
        for ex in batch {
            let ex = self.clip(ex)?;
            let dists = self.predict(params, &ex)?;
            let mask: Vec<bool> = ex.target.iter().map(|&t| t == PAD).collect();
            let rec = loss(&dists, &ex.target, &mask)?;
            total += rec.value;
            clamped += rec.clamped;
            n += ex.n_predicted();
        }
        Ok((total, n, clamped))
    }
}

/// Circuit for one token: angle encoding, `(conv → pool) × stages`, dense.
/// Parameters are laid out `[conv stages | pool stages | dense]`, conv omitted
/// when the mode disables it. Returns the circuit and its read-out wires.
pub fn block_circuit(config: &ModelConfig) -> Result<(ParamCircuit, Vec<usize>)> {
    let n = config.n_qubits;
    let stages = config.conv_pool_stages;
    let conv = config.ablation_mode.conv();
    let mut c = ParamCircuit::new(n);
    c.add_inputs(n);
    let conv_base = if conv { c.add_params(stages * CONV_PARAMS) } else { 0 };
    let pool_base = c.add_params(stages * POOL_PARAMS);
    let dense_base = c.add_params(dense_param_count(config.dense_wires())?);
    push_angle_encoding(&mut c, 0)?;
    let mut active: Vec<usize> = (0..n).collect();
    for s in 0..stages {
        if conv {
            push_conv_layer(&mut c, conv_base + s * CONV_PARAMS, &active)?;
        }
        active = push_pool_layer(&mut c, pool_base + s * POOL_PARAMS, &active)?;
    }
    push_dense(&mut c, dense_base, &active)?;
    Ok((c, active))
}

/// Central-difference derivatives of [`project_wire`] would be approximate;
/// each argument instead gets the exact two-term shift `½[f(+π/2) − f(−π/2)]`.
/// Returns `[∂input, ∂θ, ∂φ, ∂λ]`.
pub fn project_wire_grad(input: f64, angles: &[f64]) -> [f64; 4] {
    let mut args = [input, angles[0], angles[1], angles[2]];
    let mut out = [0.0; 4];
    for k in 0..4 {
        let base = args[k];
        args[k] = base + FRAC_PI_2;
        let plus = project_wire(args[0], &args[1..]);
        args[k] = base - FRAC_PI_2;
        let minus = project_wire(args[0], &args[1..]);
        args[k] = base;
        out[k] = 0.5 * (plus - minus);
    }
    out
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter_mut().for_each(|x| *x /= z);
    e
}

fn mix(weights: &[Vec<f64>], values: &[Vec<f64>], d: usize) -> Vec<Vec<f64>> {
    weights
        .iter()
        .map(|w| {
            let mut o = vec![0.0; d];
            for (&wu, v) in w.iter().zip(values) {
                if wu != 0.0 {
                    axpy(&mut o, wu, v);
                }
            }
            o
        })
        .collect()
}

fn add(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect())
        .collect()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(mode: AblationMode) -> ModelConfig {
        ModelConfig {
            n_qubits: 4,
            conv_pool_stages: 1,
            seq_len: 6,
            dropout_rate: 0.0,
            ablation_mode: mode,
            vocab_size: 9,
        }
    }

    fn brute_force_grad(model: &Model, params: &ModelParams, batch: &[Example], keep: &BTreeMap<u32, Vec<f64>>, step: f64) -> Vec<f64> {
        let mut p = params.clone();
        let mut out = vec![0.0; p.len()];
        for k in 0..p.len() {
            let base = p.values[k];
            p.values[k] = base + step;
            let plus = model.batch_grad(&p, batch, keep).unwrap().mean_loss();
            p.values[k] = base - step;
            let minus = model.batch_grad(&p, batch, keep).unwrap().mean_loss();
            p.values[k] = base;
            out[k] = (plus - minus) / (2.0 * step);
        }
        out
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        let bad = [
            ModelConfig { n_qubits: 4, conv_pool_stages: 2, ..Default::default() },
            ModelConfig { n_qubits: 6, conv_pool_stages: 2, ..Default::default() },
            ModelConfig { dropout_rate: 1.0, ..Default::default() },
            ModelConfig { seq_len: 1, ..Default::default() },
            ModelConfig { vocab_size: 4, ..Default::default() },
            ModelConfig { n_qubits: 16, conv_pool_stages: 3, ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
        }
    }

    #[test]
    fn ablation_flags() {
        use AblationMode::*;
        assert!(O5.conv() && O5.attention() && O5.variational());
        assert!(!O1.conv() && O1.attention());
        assert!(O2.conv() && !O2.attention());
        assert!(O3.conv() && !O3.attention() && O3.variational());
        assert!(O4.conv() && O4.attention());
        assert_eq!("o3".parse::<AblationMode>().unwrap(), O3);
        assert!("O6".parse::<AblationMode>().is_err());
    }

    #[test]
    fn default_parameter_budget() {
        let p = ModelParams::zeros(&ModelConfig::default());
        // per side: 2×15 conv + 2×3 pool + 15 dense + 72 attention; cross 72; head 8
        assert_eq!(p.quantum_count(), 2 * (30 + 6 + 15 + 72) + 72 + 8);
        assert_eq!(p.classical_count(), 64 * 8 + 16 * 8 + 64);
        assert_eq!(p.len(), p.quantum_count() + p.classical_count());
        let o1 = ModelParams::zeros(&ModelConfig {
            ablation_mode: AblationMode::O1,
            ..Default::default()
        });
        assert!(o1.find(sections::ENCODER_CONV).is_none());
    }

    #[test]
    fn embed_is_bounded_and_zero_row_gives_zero_angles() {
        let config = tiny(AblationMode::O5);
        let model = Model::new(config.clone()).unwrap();
        let mut p = model.init_params(3);
        for v in &mut p.values[..4] {
            *v = 0.0;
        }
        p.values[4] = 1e6;
        let e = model.embed(&p, &[0, 1]).unwrap();
        assert_eq!(e[0], vec![0.0; 4]);
        assert!(e[1].iter().all(|a| a.abs() <= PI));
        assert!(matches!(model.embed(&p, &[9]), Err(Error::Vocabulary(_))));
    }

    #[test]
    fn loss_cases() {
        let one_hot = vec![vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]];
        let r = loss(&one_hot, &[1, 0], &[false, false]).unwrap();
        assert_eq!(r.value, 0.0);
        let uniform = vec![vec![0.25; 4]; 3];
        let r = loss(&uniform, &[0, 1, 2], &[false, false, true]).unwrap();
        assert!((r.value - 2.0 * 4f64.ln()).abs() < 1e-15);
        let r = loss(&[vec![0.0, 1.0]], &[0], &[false]).unwrap();
        assert_eq!(r.clamped, 1);
        assert!((r.value + PROB_FLOOR.ln()).abs() < 1e-12);
    }

    #[test]
    fn distributions_are_normalized() {
        let model = Model::new(tiny(AblationMode::O5)).unwrap();
        let p = model.init_params(1);
        let ex = Example::new(&[5, 6], &[7, 8], FIRST_TAG, 6);
        for dist in model.predict(&p, &ex).unwrap() {
            assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(dist.iter().all(|&x| x >= 0.0));
        }
        let d = model.decode_step(&p, &ex.source, &[SOS, FIRST_TAG]).unwrap();
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(matches!(model.decode_step(&p, &ex.source, &[]), Err(Error::Decoding(_))));
    }

    #[test]
    fn decode_step_matches_teacher_forced_prediction() {
        let model = Model::new(tiny(AblationMode::O5)).unwrap();
        let p = model.init_params(2);
        let ex = Example::new(&[5, 6, 7], &[8, 5], FIRST_TAG, 6);
        let dists = model.predict(&p, &ex).unwrap();
        for t in 1..ex.decoder_input.len() {
            let d = model.decode_step(&p, &ex.source, &ex.decoder_input[..=t]).unwrap();
            for (a, b) in d.iter().zip(&dists[t]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn translate_contracts() {
        let model = Model::new(tiny(AblationMode::O5)).unwrap();
        let p = model.init_params(4);
        let one = model.translate(&p, &[5, 6], FIRST_TAG, 1).unwrap();
        assert_eq!(one.len(), 1);
        let a = model.translate(&p, &[5, 6], FIRST_TAG, 10).unwrap();
        let b = model.translate(&p, &[5, 6, PAD, PAD], FIRST_TAG, 10).unwrap();
        assert_eq!(a, b);
        assert!(a.len() <= 5);
        assert!(a.iter().all(|&t| t != PAD && t != SOS));
    }

    #[test]
    fn encode_shape_and_zero_transparency() {
        let config = ModelConfig {
            ablation_mode: AblationMode::O3,
            ..tiny(AblationMode::O3)
        };
        let model = Model::new(config).unwrap();
        let mut p = model.init_params(5);
        let ctx = model.encode(&p, &[FIRST_TAG, 5, 6, EOS]).unwrap();
        assert_eq!(ctx.len(), 4);
        // Zero circuit angles and zero positions: block read-out is cos of the
        // angles on the kept wires and uniform attention averages those.
        for s in &p.sections.clone() {
            if s.quantum || s.name == sections::POSITIONAL {
                p.values[s.offset..s.offset + s.len].iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let ids = [FIRST_TAG, 5, 6, EOS];
        let ctx = model.encode(&p, &ids).unwrap();
        let angles = model.embed(&p, &ids).unwrap();
        let reads: Vec<Vec<f64>> = angles
            .iter()
            .map(|a| vec![a[0].cos(), a[2].cos(), 0.0, 0.0])
            .collect();
        for (t, c) in ctx.iter().enumerate() {
            for i in 0..4 {
                let mean = reads.iter().map(|r| r[i]).sum::<f64>() / 4.0;
                assert!((c[i] - (mean + reads[t][i])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projection_shift_gradient_matches_closed_form() {
        let (a, t, l) = (0.7, -1.2, 0.4);
        let g = project_wire_grad(a, &[t, 0.3, l]);
        // ⟨Z⟩ = cos θ cos a − sin θ sin a cos λ
        assert!((project_wire(a, &[t, 0.3, l]) - (t.cos() * a.cos() - t.sin() * a.sin() * l.cos())).abs() < 1e-12);
        assert!((g[0] - (-t.cos() * a.sin() - t.sin() * a.cos() * l.cos())).abs() < 1e-12);
        assert!((g[1] - (-t.sin() * a.cos() - t.cos() * a.sin() * l.cos())).abs() < 1e-12);
        assert!(g[2].abs() < 1e-12);
        assert!((g[3] - t.sin() * a.sin() * l.sin()).abs() < 1e-12);
    }

    #[test]
    fn full_model_gradient_matches_finite_differences() {
        for mode in AblationMode::ALL {
            let model = Model::new(tiny(mode)).unwrap();
            let p = model.init_params(11);
            let batch = vec![
                Example::new(&[5], &[6], FIRST_TAG, 6),
                Example::new(&[7], &[8], FIRST_TAG + 1, 6),
            ];
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let model_drop = Model::new(ModelConfig {
                dropout_rate: 0.3,
                ..tiny(mode)
            })
            .unwrap();
            let keep = model_drop.dropout_masks(&batch, &mut rng);
            for masks in [BTreeMap::new(), keep] {
                let g = model.batch_grad(&p, &batch, &masks).unwrap();
                let fd = brute_force_grad(&model, &p, &batch, &masks, 1e-5);
                let worst = g.grad.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(worst < 1e-6, "{mode}: worst deviation {worst}");
            }
        }
    }

    #[test]
    fn batch_loss_agrees_with_grad_pass() {
        let model = Model::new(tiny(AblationMode::O5)).unwrap();
        let p = model.init_params(6);
        let batch = vec![
            Example::new(&[5, 6], &[6, 5], FIRST_TAG, 6),
            Example::new(&[7], &[8], FIRST_TAG, 6),
        ];
        let g = model.batch_grad(&p, &batch, &BTreeMap::new()).unwrap();
        let (l, n, _) = model.batch_loss(&p, &batch).unwrap();
        assert_eq!(n, g.n_tokens);
        assert!((l - g.loss_sum).abs() < 1e-10);
    }

    #[test]
    fn example_rows() {
        let ex = Example::new(&[5, 6, 7, 8, 9], &[10, 11], 4, 5);
        assert_eq!(ex.source, vec![4, 5, 6, 7, EOS]);
        assert_eq!(ex.decoder_input, vec![SOS, 4, 10, 11]);
        assert_eq!(ex.target, vec![PAD, 10, 11, EOS]);
        assert_eq!(ex.n_predicted(), 3);
    }
}
