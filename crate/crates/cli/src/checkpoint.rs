//! Single-file checkpoints.
//!
//! Layout: `b"QEDC"`, format version (u32 LE), SHA-256 of the payload, payload
//! length (u64 LE), payload. The payload is a UTF-8 metadata block (u64 LE
//! length prefix) followed by a u32 section count and named sections of
//! little-endian f64 values.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use qedacvc_core::corpus::{SplitRatios, Vocab};
use qedacvc_core::model::{param_layout, AblationMode, ModelConfig, ModelParams};
use qedacvc_core::OptimState;

pub const MAGIC: &[u8; 4] = b"QEDC";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 32 + 8;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CheckpointError {
    #[error("{path}: not a checkpoint file")]
    NotACheckpoint { path: String },
    #[error("{path}: checkpoint format version {found} is incompatible with version {expected}")]
    Version { path: String, found: u32, expected: u32 },
    #[error("{path}: checksum mismatch, file is corrupt")]
    Checksum { path: String },
    #[error("{path}: malformed checkpoint: {reason}")]
    Malformed { path: String, reason: String },
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestMetrics {
    pub epoch: usize,
    pub accuracy: f64,
    pub bleu: f64,
}

/// How the corpus was split and scored, so evaluation can rebuild the splits.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSettings {
    pub seed: u64,
    pub ratios: SplitRatios,
    pub src_lang: Option<String>,
    pub tgt_lang: Option<String>,
    pub smooth_bleu: bool,
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub optim: OptimState,
    pub vocab: Vocab,
    pub epoch: usize,
    pub best: Option<BestMetrics>,
    pub data: DataSettings,
}

fn metadata(c: &Checkpoint) -> String {
    let mut m: Vec<(String, String)> = Vec::new();
    let mut kv = |k: &str, v: String| m.push((k.to_string(), v));
    kv("n_qubits", c.config.n_qubits.to_string());
    kv("conv_pool_stages", c.config.conv_pool_stages.to_string());
    kv("seq_len", c.config.seq_len.to_string());
    kv("dropout_rate", c.config.dropout_rate.to_string());
    kv("ablation_mode", c.config.ablation_mode.to_string());
    kv("vocab_size", c.config.vocab_size.to_string());
    kv("epoch", c.epoch.to_string());
    if let Some(b) = &c.best {
        kv("best_epoch", b.epoch.to_string());
        kv("best_accuracy", b.accuracy.to_string());
        kv("best_bleu", b.bleu.to_string());
    }
    kv("adam_step_count", c.optim.step_count.to_string());
    kv("adam_learning_rate", c.optim.learning_rate.to_string());
    kv("adam_beta1", c.optim.beta1.to_string());
    kv("adam_beta2", c.optim.beta2.to_string());
    kv("adam_epsilon", c.optim.epsilon.to_string());
    kv("data_seed", c.data.seed.to_string());
    kv("train_ratio", c.data.ratios.train.to_string());
    kv("test_ratio", c.data.ratios.test.to_string());
    kv("validation_ratio", c.data.ratios.validation.to_string());
    if let Some(l) = &c.data.src_lang {
        kv("src_lang", l.clone());
    }
    if let Some(l) = &c.data.tgt_lang {
        kv("tgt_lang", l.clone());
    }
    kv("smooth_bleu", c.data.smooth_bleu.to_string());
    if let Some(p) = &c.data.corpus {
        kv("corpus", p.display().to_string());
    }
    kv("languages", c.vocab.languages().join(","));
    let mut text: String = m.into_iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    text.push_str("[vocab]\n");
    for t in c.vocab.tokens() {
        text.push_str(t);
        text.push('\n');
    }
    text
}

fn put_section(buf: &mut Vec<u8>, name: &str, values: &[f64]) {
    buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
    buf.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serialized checkpoint bytes.
pub fn encode(c: &Checkpoint) -> Vec<u8> {
    let meta = metadata(c);
    let mut payload = Vec::new();
    payload.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    payload.extend_from_slice(meta.as_bytes());
    let n_sections = c.params.sections.len() + 2;
    payload.extend_from_slice(&(n_sections as u32).to_le_bytes());
    for s in &c.params.sections {
        put_section(&mut payload, &format!("param.{}", s.name), &c.params.values[s.offset..s.offset + s.len]);
    }
    put_section(&mut payload, "adam.first_moment", &c.optim.first_moment);
    put_section(&mut payload, "adam.second_moment", &c.optim.second_moment);
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&Sha256::digest(&payload));
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

/// Writes to a temporary sibling, then renames over `path`.
pub fn save(c: &Checkpoint, path: &Path) -> Result<(), CheckpointError> {
    let io = |e: std::io::Error| CheckpointError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = std::fs::File::create(&tmp).map_err(io)?;
    f.write_all(&encode(c)).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|e| CheckpointError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    decode(&bytes, &path.display().to_string())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.buf.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

/// Parses checkpoint bytes; `path` only labels errors.
pub fn decode(bytes: &[u8], path: &str) -> Result<Checkpoint, CheckpointError> {
    let malformed = |reason: &str| CheckpointError::Malformed {
        path: path.to_string(),
        reason: reason.to_string(),
    };
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(CheckpointError::NotACheckpoint { path: path.to_string() });
    }
    let mut r = Reader { buf: bytes, pos: 4 };
    let version = r.u32().unwrap();
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version {
            path: path.to_string(),
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let digest = r.take(32).unwrap().to_vec();
    let len = r.u64().unwrap() as usize;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != len || Sha256::digest(payload).as_slice() != digest.as_slice() {
        return Err(CheckpointError::Checksum { path: path.to_string() });
    }

    let mut r = Reader { buf: payload, pos: 0 };
    let meta_len = r.u64().ok_or_else(|| malformed("truncated metadata length"))? as usize;
    let meta = std::str::from_utf8(r.take(meta_len).ok_or_else(|| malformed("truncated metadata"))?)
        .map_err(|_| malformed("metadata is not UTF-8"))?;
    let mut sections: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let n_sections = r.u32().ok_or_else(|| malformed("truncated section count"))?;
    for _ in 0..n_sections {
        let name_len = r.u32().ok_or_else(|| malformed("truncated section name"))? as usize;
        let name = std::str::from_utf8(r.take(name_len).ok_or_else(|| malformed("truncated section name"))?)
            .map_err(|_| malformed("section name is not UTF-8"))?
            .to_string();
        let count = r.u64().ok_or_else(|| malformed("truncated section length"))? as usize;
        let raw = r
            .take(count.checked_mul(8).ok_or_else(|| malformed("section too large"))?)
            .ok_or_else(|| malformed("truncated section data"))?;
        let values = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        sections.insert(name, values);
    }

    let (head, vocab_text) = meta.split_once("[vocab]\n").ok_or_else(|| malformed("missing vocabulary"))?;
    let kv: BTreeMap<&str, &str> = head.lines().filter_map(|l| l.split_once('=')).collect();
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| malformed(&format!("missing {k}")));
    fn num<T: std::str::FromStr>(v: &str, k: &str, path: &str) -> Result<T, CheckpointError> {
        v.parse().map_err(|_| CheckpointError::Malformed {
            path: path.to_string(),
            reason: format!("bad value for {k}"),
        })
    }
    let config = ModelConfig {
        n_qubits: num(get("n_qubits")?, "n_qubits", path)?,
        conv_pool_stages: num(get("conv_pool_stages")?, "conv_pool_stages", path)?,
        seq_len: num(get("seq_len")?, "seq_len", path)?,
        dropout_rate: num(get("dropout_rate")?, "dropout_rate", path)?,
        ablation_mode: get("ablation_mode")?
            .parse::<AblationMode>()
            .map_err(|_| malformed("bad ablation_mode"))?,
        vocab_size: num(get("vocab_size")?, "vocab_size", path)?,
    };
    config.validate().map_err(|e| malformed(&e.to_string()))?;
    let languages: Vec<String> = get("languages")?
        .split(',')
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect();
    let tokens: Vec<String> = vocab_text.lines().map(String::from).collect();
    let vocab = Vocab::from_tokens(tokens, languages).map_err(|e| malformed(&e.to_string()))?;
    if vocab.len() != config.vocab_size {
        return Err(malformed("vocabulary size disagrees with vocab_size"));
    }

    let layout = param_layout(&config);
    let mut values = Vec::new();
    for s in &layout {
        let v = sections
            .get(&format!("param.{}", s.name))
            .ok_or_else(|| malformed(&format!("missing section {}", s.name)))?;
        if v.len() != s.len {
            return Err(malformed(&format!("section {} has {} values, expected {}", s.name, v.len(), s.len)));
        }
        values.extend_from_slice(v);
    }
    let moment = |name: &str| -> Result<Vec<f64>, CheckpointError> {
        let v = sections.get(name).ok_or_else(|| malformed(&format!("missing section {name}")))?;
        if v.len() != values.len() {
            return Err(malformed(&format!("section {name} length mismatch")));
        }
        Ok(v.clone())
    };
    let optim = OptimState {
        first_moment: moment("adam.first_moment")?,
        second_moment: moment("adam.second_moment")?,
        step_count: num(get("adam_step_count")?, "adam_step_count", path)?,
        learning_rate: num(get("adam_learning_rate")?, "adam_learning_rate", path)?,
        beta1: num(get("adam_beta1")?, "adam_beta1", path)?,
        beta2: num(get("adam_beta2")?, "adam_beta2", path)?,
        epsilon: num(get("adam_epsilon")?, "adam_epsilon", path)?,
    };
    let best = match kv.get("best_epoch") {
        Some(e) => Some(BestMetrics {
            epoch: num(e, "best_epoch", path)?,
            accuracy: num(get("best_accuracy")?, "best_accuracy", path)?,
            bleu: num(get("best_bleu")?, "best_bleu", path)?,
        }),
        None => None,
    };
    let data = DataSettings {
        seed: num(get("data_seed")?, "data_seed", path)?,
        ratios: SplitRatios {
            train: num(get("train_ratio")?, "train_ratio", path)?,
            test: num(get("test_ratio")?, "test_ratio", path)?,
            validation: num(get("validation_ratio")?, "validation_ratio", path)?,
        },
        src_lang: kv.get("src_lang").map(|s| s.to_string()),
        tgt_lang: kv.get("tgt_lang").map(|s| s.to_string()),
        smooth_bleu: num(get("smooth_bleu")?, "smooth_bleu", path)?,
        corpus: kv.get("corpus").map(PathBuf::from),
    };
    Ok(Checkpoint {
        config,
        params: ModelParams { sections: layout, values },
        optim,
        vocab,
        epoch: num(get("epoch")?, "epoch", path)?,
        best,
        data,
    })
}
