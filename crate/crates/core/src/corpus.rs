//! Tokenization, vocabulary, parallel-corpus loading and splitting, batching,
//! and a synthetic corpus generator.
//!
//! Corpus files are UTF-8 TSV. A header line `#<src>\t<tgt>` names the language
//! pair for the lines that follow; a file may hold several such blocks. Every
//! other non-blank line is `source\ttarget`.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Example, EOS, FIRST_TAG, PAD, SOS, UNK};

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '¿' | '¡' | '«' | '»' | '“' | '”' | '‘' | '’' | '„' | '…' | '–' | '—' | '।' | '॥'
        )
}

/// Lowercases, splits on whitespace and detaches punctuation characters as
/// their own tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut cur = String::new();
        for c in word.chars() {
            if is_punct(c) {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(c.to_string());
            } else {
                cur.extend(c.to_lowercase());
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

/// Joins tokens with spaces, attaching closing punctuation to the previous
/// token and opening brackets to the next.
pub fn detokenize(tokens: &[String]) -> String {
    let mut out = String::new();
    let mut glue_next = true;
    for t in tokens {
        let closing = matches!(t.as_str(), "," | "." | "!" | "?" | ";" | ":" | ")" | "]" | "}" | "।" | "॥" | "…");
        if !glue_next && !closing {
            out.push(' ');
        }
        out.push_str(t);
        glue_next = matches!(t.as_str(), "(" | "[" | "{" | "¿" | "¡");
    }
    out
}

pub const PAD_TOKEN: &str = "<pad>";
pub const SOS_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = "</s>";
pub const UNK_TOKEN: &str = "<unk>";

pub fn tag_token(lang: &str) -> String {
    format!("<2{lang}>")
}

/// Shared vocabulary: `PAD, SOS, EOS, UNK`, one tag per language, then words
/// by descending frequency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    languages: Vec<String>,
}

impl Vocab {
    /// Builds a vocabulary over tokenized `lines`. Tokens seen fewer than
    /// `min_freq` times are left out and map to `UNK`.
    pub fn build<S: AsRef<str>>(lines: &[Vec<String>], languages: &[S], min_freq: usize) -> Result<Self> {
        if min_freq == 0 {
            return Err(Error::Config("min_freq must be ≥ 1".into()));
        }
        if lines.iter().all(|l| l.is_empty()) {
            return Err(Error::Vocabulary("cannot build a vocabulary from an empty corpus".into()));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in lines.iter().flatten() {
            *counts.entry(t.as_str()).or_default() += 1;
        }
        let mut words: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, n)| n >= min_freq).collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let languages: Vec<String> = languages.iter().map(|l| l.as_ref().to_string()).collect();
        let mut tokens: Vec<String> = [PAD_TOKEN, SOS_TOKEN, EOS_TOKEN, UNK_TOKEN].map(String::from).to_vec();
        tokens.extend(languages.iter().map(|l| tag_token(l)));
        let reserved: BTreeSet<String> = tokens.iter().cloned().collect();
        tokens.extend(words.into_iter().map(|(w, _)| w.to_string()).filter(|w| !reserved.contains(w)));
        Self::from_tokens(tokens, languages)
    }

    /// Rebuilds a vocabulary from its id-ordered token list.
    pub fn from_tokens(tokens: Vec<String>, languages: Vec<String>) -> Result<Self> {
        let expect: Vec<String> = [PAD_TOKEN, SOS_TOKEN, EOS_TOKEN, UNK_TOKEN]
            .iter()
            .map(|s| s.to_string())
            .chain(languages.iter().map(|l| tag_token(l)))
            .collect();
        if tokens.len() < expect.len() || tokens[..expect.len()] != expect[..] {
            return Err(Error::Vocabulary("reserved entries missing or out of order".into()));
        }
        let mut index = HashMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Vocabulary(format!("duplicate token {t:?}")));
            }
        }
        Ok(Vocab {
            tokens,
            index,
            languages,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(|s| s.as_str())
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// Word tokens for `ids`, stopping at `EOS` and skipping other reserved ids.
    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        let first_word = FIRST_TAG as usize + self.languages.len();
        ids.iter()
            .take_while(|&&i| i != EOS)
            .filter(|&&i| i as usize >= first_word || i == UNK)
            .filter_map(|&i| self.token(i).map(String::from))
            .collect()
    }

    pub fn tag_id(&self, lang: &str) -> Result<u32> {
        self.languages
            .iter()
            .position(|l| l == lang)
            .map(|p| FIRST_TAG + p as u32)
            .ok_or_else(|| Error::Vocabulary(format!("unknown language tag {lang:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub source_lang: String,
    pub target_lang: String,
    pub source: Vec<String>,
    pub target: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
    Validation,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "validation" | "val" | "valid" => Ok(Split::Validation),
            _ => Err(Error::Config(format!("unknown split {s:?} (train, test, validation)"))),
        }
    }
}

/// Train/test/validation fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub test: f64,
    pub validation: f64,
}

impl Default for SplitRatios {
    /// 200 : 60 : 20.
    fn default() -> Self {
        SplitRatios {
            train: 200.0 / 280.0,
            test: 60.0 / 280.0,
            validation: 20.0 / 280.0,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.test, self.validation];
        if all.iter().any(|r| !(0.0..=1.0).contains(r)) || (all.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "split ratios must be in [0, 1] and sum to 1, got {} / {} / {}",
                self.train, self.test, self.validation
            )));
        }
        Ok(())
    }

    /// `(train, test, validation)` sizes for `n` pairs; validation takes the remainder.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let take = |r: f64| ((n as f64) * r + 1e-9).floor() as usize;
        let train = take(self.train).min(n);
        let test = take(self.test).min(n - train);
        (train, test, n - train - test)
    }
}

/// Sentence pairs with their split assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelCorpus {
    pub pairs: Vec<SentencePair>,
    pub split: Vec<Split>,
}

impl ParallelCorpus {
    /// Shuffles `pairs` with `seed` and assigns splits by `ratios`.
    pub fn from_pairs(mut pairs: Vec<SentencePair>, ratios: SplitRatios, seed: u64) -> Result<Self> {
        ratios.validate()?;
        if pairs.is_empty() {
            return Err(Error::Data("corpus has no sentence pairs".into()));
        }
        pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (train, test, _) = ratios.counts(pairs.len());
        let split = (0..pairs.len())
            .map(|i| {
                if i < train {
                    Split::Train
                } else if i < train + test {
                    Split::Test
                } else {
                    Split::Validation
                }
            })
            .collect();
        Ok(ParallelCorpus { pairs, split })
    }

    pub fn get(&self, split: Split) -> Vec<&SentencePair> {
        self.pairs
            .iter()
            .zip(&self.split)
            .filter(|(_, &s)| s == split)
            .map(|(p, _)| p)
            .collect()
    }

    /// Languages appearing on either side, sorted.
    pub fn languages(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self
            .pairs
            .iter()
            .flat_map(|p| [&p.source_lang, &p.target_lang])
            .collect();
        set.into_iter().cloned().collect()
    }

    /// Ordered `(source, target)` language pairs present.
    pub fn directions(&self) -> BTreeSet<(String, String)> {
        self.pairs
            .iter()
            .map(|p| (p.source_lang.clone(), p.target_lang.clone()))
            .collect()
    }

    /// Vocabulary over both sides of the training split.
    pub fn build_vocab(&self, min_freq: usize) -> Result<Vocab> {
        let lines: Vec<Vec<String>> = self
            .get(Split::Train)
            .into_iter()
            .flat_map(|p| [p.source.clone(), p.target.clone()])
            .collect();
        Vocab::build(&lines, &self.languages(), min_freq)
    }
}

/// Parses TSV corpus text. Only pairs in direction `source_lang → target_lang`
/// are kept when those are given.
pub fn parse_tsv(text: &str, source_lang: Option<&str>, target_lang: Option<&str>) -> Result<Vec<SentencePair>> {
    let mut pairs = Vec::new();
    let mut langs: Option<(String, String)> = None;
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let line = if n == 0 { line.trim_start_matches('\u{feff}') } else { line };
        if line.trim().is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('#') {
            let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
            if cols.len() != 2 || cols.iter().any(|c| c.is_empty() || c.contains(char::is_whitespace)) {
                return Err(Error::Data(format!(
                    "line {line_no}: header must be '#<source-lang>\\t<target-lang>'"
                )));
            }
            langs = Some((cols[0].to_string(), cols[1].to_string()));
            continue;
        }
        let Some((sl, tl)) = &langs else {
            return Err(Error::Data(format!(
                "line {line_no}: sentence pair before any '#<source-lang>\\t<target-lang>' header"
            )));
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 2 {
            return Err(Error::Data(format!(
                "line {line_no}: expected 2 tab-separated columns, found {}",
                cols.len()
            )));
        }
        if source_lang.is_some_and(|s| s != sl) || target_lang.is_some_and(|t| t != tl) {
            continue;
        }
        pairs.push(SentencePair {
            source_lang: sl.clone(),
            target_lang: tl.clone(),
            source: tokenize(cols[0]),
            target: tokenize(cols[1]),
        });
    }
    Ok(pairs)
}

fn read_utf8(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    String::from_utf8(bytes).map_err(|e| {
        let valid = e.utf8_error().valid_up_to();
        let line = e.as_bytes()[..valid].iter().filter(|&&b| b == b'\n').count() + 1;
        Error::Data(format!("{}: line {line}: invalid UTF-8", path.display()))
    })
}

/// Loads a TSV corpus, shuffles it with `seed` and splits it by `ratios`.
pub fn load_parallel(
    path: &Path,
    source_lang: Option<&str>,
    target_lang: Option<&str>,
    ratios: SplitRatios,
    seed: u64,
) -> Result<ParallelCorpus> {
    let text = read_utf8(path)?;
    let pairs = parse_tsv(&text, source_lang, target_lang)?;
    if pairs.is_empty() {
        return Err(Error::Data(format!("{}: no sentence pairs for the requested languages", path.display())));
    }
    ParallelCorpus::from_pairs(pairs, ratios, seed)
}

/// Loads two line-aligned plain-text files as one language pair.
pub fn load_plain_pair(
    source_path: &Path,
    target_path: &Path,
    source_lang: &str,
    target_lang: &str,
    ratios: SplitRatios,
    seed: u64,
) -> Result<ParallelCorpus> {
    let src = read_utf8(source_path)?;
    let tgt = read_utf8(target_path)?;
    let (s, t): (Vec<&str>, Vec<&str>) = (src.lines().collect(), tgt.lines().collect());
    if s.len() != t.len() {
        return Err(Error::Data(format!(
            "line counts differ: {} has {}, {} has {}",
            source_path.display(),
            s.len(),
            target_path.display(),
            t.len()
        )));
    }
    let pairs = s
        .iter()
        .zip(&t)
        .filter(|(a, b)| !(a.trim().is_empty() && b.trim().is_empty()))
        .map(|(a, b)| SentencePair {
            source_lang: source_lang.to_string(),
            target_lang: target_lang.to_string(),
            source: tokenize(a),
            target: tokenize(b),
        })
        .collect();
    ParallelCorpus::from_pairs(pairs, ratios, seed)
}

/// Id rows for one pair, truncated to fit `seq_len`.
pub fn to_example(pair: &SentencePair, vocab: &Vocab, seq_len: usize) -> Result<Example> {
    let tag = vocab.tag_id(&pair.target_lang)?;
    Ok(Example::new(&vocab.encode(&pair.source), &vocab.encode(&pair.target), tag, seq_len))
}

/// Examples with every row padded to `seq_len`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub examples: Vec<Example>,
}

impl Batch {
    /// `true` at positions past each row's content.
    pub fn pad_mask(row: &[u32]) -> Vec<bool> {
        let end = row.iter().rposition(|&t| t != PAD).map_or(0, |i| i + 1);
        (0..row.len()).map(|i| i >= end).collect()
    }
}

fn pad_to(row: &[u32], len: usize) -> Vec<u32> {
    let mut r = row[..row.len().min(len)].to_vec();
    r.resize(len, PAD);
    r
}

/// Groups examples into batches of `batch_size` (last one may be short), each
/// row truncated and padded to `seq_len`. Truncation drops sentence tokens
/// and keeps the leading `SOS`/tag and the closing `EOS`.
pub fn make_batches(examples: &[Example], batch_size: usize, seq_len: usize) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be ≥ 1".into()));
    }
    if seq_len < 2 {
        return Err(Error::Config("seq_len must be ≥ 2".into()));
    }
    Ok(examples
        .chunks(batch_size)
        .map(|chunk| Batch {
            examples: chunk
                .iter()
                .map(|e| {
                    let e = refit(e, seq_len);
                    Example {
                        source: pad_to(&e.source, seq_len),
                        decoder_input: pad_to(&e.decoder_input, seq_len),
                        target: pad_to(&e.target, seq_len),
                    }
                })
                .collect(),
        })
        .collect())
}

/// Re-truncates an unpadded example built for a longer `seq_len`.
fn refit(e: &Example, seq_len: usize) -> Example {
    let strip = |r: &[u32]| -> Vec<u32> {
        let end = r.iter().rposition(|&t| t != PAD).map_or(0, |i| i + 1);
        r[..end].to_vec()
    };
    let source = strip(&e.source);
    let dec = strip(&e.decoder_input);
    if source.len() <= seq_len && dec.len() <= seq_len {
        return Example {
            source,
            decoder_input: dec.clone(),
            target: e.target[..dec.len().min(e.target.len())].to_vec(),
        };
    }
    let tag = dec.get(1).copied().unwrap_or(PAD);
    let words_src: Vec<u32> = source[1..source.len().saturating_sub(1)].to_vec();
    let words_tgt: Vec<u32> = dec.get(2..).map(|s| s.to_vec()).unwrap_or_default();
    debug_assert!(dec.first() == Some(&SOS) && source.last() == Some(&EOS));
    Example::new(&words_src, &words_tgt, tag, seq_len)
}

/// Synthetic tasks for desk-scale runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthTask {
    Copy,
    Reverse,
    Lexicon,
}

impl std::str::FromStr for SynthTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "copy" => Ok(SynthTask::Copy),
            "reverse" => Ok(SynthTask::Reverse),
            "lexicon" => Ok(SynthTask::Lexicon),
            _ => Err(Error::Config(format!("unknown synthetic task {s:?}"))),
        }
    }
}

const LATIN_ONSETS: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t"];
const LATIN_VOWELS: [[&str; 5]; 3] = [
    ["a", "e", "i", "o", "u"],
    ["ai", "eu", "ou", "ie", "oi"],
    ["ah", "eh", "ih", "oh", "uh"],
];
const DEVANAGARI_ONSETS: [&str; 12] = ["क", "ग", "च", "ज", "ट", "ड", "त", "द", "न", "प", "ब", "म"];
const DEVANAGARI_VOWELS: [&str; 5] = ["", "ा", "ि", "ी", "ु"];

/// Word `index` of the synthetic language at position `lang` in the list.
/// Distinct indices give distinct words within a language.
pub fn synth_word(lang_name: &str, lang: usize, index: usize) -> String {
    let base = LATIN_ONSETS.len() * LATIN_VOWELS[0].len();
    let mut i = index;
    let mut w = String::new();
    loop {
        let syl = i % base;
        let (on, vo) = (syl / LATIN_VOWELS[0].len(), syl % LATIN_VOWELS[0].len());
        if lang_name == "hi" {
            w.push_str(DEVANAGARI_ONSETS[on]);
            w.push_str(DEVANAGARI_VOWELS[vo]);
        } else {
            // Rotate onsets per language so the lexicons differ.
            w.push_str(LATIN_ONSETS[(on + 5 * lang) % LATIN_ONSETS.len()]);
            w.push_str(LATIN_VOWELS[lang % LATIN_VOWELS.len()][vo]);
        }
        i /= base;
        if i == 0 {
            break;
        }
        i -= 1;
    }
    w
}

/// Generates a TSV corpus.
///
/// `vocab_size` is the number of word types per language and sentences have
/// 1 to `max_len` words. `copy` and `reverse` use `languages[0]` on both sides;
/// `lexicon` writes `n_pairs` sentences for every ordered pair of distinct
/// languages, rendering the same word indices through each language's lexicon.
pub fn synth_corpus(
    task: SynthTask,
    n_pairs: usize,
    vocab_size: usize,
    max_len: usize,
    seed: u64,
    languages: &[&str],
) -> Result<String> {
    if vocab_size < 4 {
        return Err(Error::Config(format!("synthetic vocab_size must be ≥ 4, got {vocab_size}")));
    }
    if max_len == 0 {
        return Err(Error::Config("synthetic max_len must be ≥ 1".into()));
    }
    let need = if task == SynthTask::Lexicon { 2 } else { 1 };
    if languages.len() < need {
        return Err(Error::Config(format!("{task:?} task needs at least {need} language(s)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sentence = |rng: &mut ChaCha8Rng| -> Vec<usize> {
        let n = rng.gen_range(1..=max_len);
        (0..n).map(|_| rng.gen_range(0..vocab_size)).collect()
    };
    let render = |lang: usize, idx: &[usize]| -> String {
        idx.iter()
            .map(|&i| synth_word(languages[lang], lang, i))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut out = String::new();
    match task {
        SynthTask::Copy | SynthTask::Reverse => {
            let l = languages[0];
            writeln!(out, "#{l}\t{l}").unwrap();
            for _ in 0..n_pairs {
                let s = sentence(&mut rng);
                let mut t = s.clone();
                if task == SynthTask::Reverse {
                    t.reverse();
                }
                writeln!(out, "{}\t{}", render(0, &s), render(0, &t)).unwrap();
            }
        }
        SynthTask::Lexicon => {
            for a in 0..languages.len() {
                for b in 0..languages.len() {
                    if a == b {
                        continue;
                    }
                    writeln!(out, "#{}\t{}", languages[a], languages[b]).unwrap();
                    for _ in 0..n_pairs {
                        let s = sentence(&mut rng);
                        writeln!(out, "{}\t{}", render(a, &s), render(b, &s)).unwrap();
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Hello, world"), toks(&["hello", ",", "world"]));
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("  Don't   STOP!"), toks(&["don", "'", "t", "stop", "!"]));
        assert_eq!(tokenize("नमस्ते दुनिया।"), toks(&["नमस्ते", "दुनिया", "।"]));
    }

    #[test]
    fn detokenize_attaches_punctuation() {
        assert_eq!(detokenize(&toks(&["hello", ",", "world", "!"])), "hello, world!");
        assert_eq!(detokenize(&toks(&["a", "(", "b", ")"])), "a (b)");
    }

    proptest! {
        #[test]
        fn tokenization_round_trips(text in "[a-zA-Z ,.!?'()\\-]{0,40}") {
            let t = tokenize(&text);
            prop_assert_eq!(tokenize(&detokenize(&t)), t.clone());
            prop_assert_eq!(tokenize(&t.join(" ")), t);
        }
    }

    #[test]
    fn vocab_order_threshold_and_tags() {
        let v = Vocab::build(&[toks(&["a", "a", "b"])], &["en"], 1).unwrap();
        assert_eq!(v.id(PAD_TOKEN), PAD);
        assert_eq!(v.tag_id("en").unwrap(), FIRST_TAG);
        assert!(v.id("a") < v.id("b"));
        assert_eq!(v.id("zzz"), UNK);
        let v3 = Vocab::build(&[toks(&["a", "a", "b"])], &["en"], 3).unwrap();
        assert_eq!(v3.len(), 5);
        assert_eq!(v3.id("a"), UNK);
        let tie = Vocab::build(&[toks(&["c", "b", "a"])], &["en"], 1).unwrap();
        assert!(tie.id("a") < tie.id("b") && tie.id("b") < tie.id("c"));
        assert!(matches!(Vocab::build(&[vec![]], &["en"], 1), Err(Error::Vocabulary(_))));
        assert!(matches!(v.tag_id("xx"), Err(Error::Vocabulary(_))));
        let again = Vocab::from_tokens(v.tokens().to_vec(), v.languages().to_vec()).unwrap();
        assert_eq!(again, v);
    }

    #[test]
    fn vocab_decode_stops_at_eos() {
        let v = Vocab::build(&[toks(&["x", "y"])], &["en"], 1).unwrap();
        let ids = [v.id("x"), UNK, v.id("y"), EOS, v.id("x")];
        assert_eq!(v.decode(&ids), toks(&["x", UNK_TOKEN, "y"]));
    }

    #[test]
    fn splits_follow_ratios_and_seed() {
        let text: String = std::iter::once("#en\tfr\n".to_string())
            .chain((0..10).map(|i| format!("w{i}\tv{i}\n")))
            .collect();
        let pairs = parse_tsv(&text, None, None).unwrap();
        let r = SplitRatios {
            train: 0.5,
            test: 0.3,
            validation: 0.2,
        };
        let c = ParallelCorpus::from_pairs(pairs.clone(), r, 7).unwrap();
        assert_eq!(c.get(Split::Train).len(), 5);
        assert_eq!(c.get(Split::Test).len(), 3);
        assert_eq!(c.get(Split::Validation).len(), 2);
        assert_eq!(c, ParallelCorpus::from_pairs(pairs.clone(), r, 7).unwrap());
        // Partition: every input pair appears exactly once.
        let mut all: Vec<_> = c.pairs.iter().map(|p| p.source.clone()).collect();
        all.sort();
        let mut want: Vec<_> = pairs.iter().map(|p| p.source.clone()).collect();
        want.sort();
        assert_eq!(all, want);
        assert_eq!(SplitRatios::default().counts(280), (200, 60, 20));
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let err = parse_tsv("#en\tfr\na\tb\nno tab here\n", None, None).unwrap_err();
        assert_eq!(err, Error::Data("line 3: expected 2 tab-separated columns, found 1".into()));
        assert!(parse_tsv("a\tb\n", None, None).unwrap_err().to_string().contains("line 1"));
        assert!(parse_tsv("#en\n", None, None).is_err());
    }

    #[test]
    fn invalid_utf8_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.tsv");
        std::fs::write(&p, b"#en\tfr\nok\tok\n\xff\xfe\tx\n").unwrap();
        let err = load_parallel(&p, None, None, SplitRatios::default(), 1).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn lexicon_file_covers_all_ordered_pairs() {
        let langs = ["en", "fr", "de", "hi"];
        let text = synth_corpus(SynthTask::Lexicon, 5, 12, 4, 3, &langs).unwrap();
        let pairs = parse_tsv(&text, None, None).unwrap();
        let corpus = ParallelCorpus::from_pairs(pairs, SplitRatios::default(), 1).unwrap();
        assert_eq!(corpus.directions().len(), 12);
        let only = parse_tsv(&text, Some("en"), Some("hi")).unwrap();
        assert_eq!(only.len(), 5);
        assert!(only.iter().all(|p| p.target_lang == "hi"));
    }

    #[test]
    fn synthetic_task_definitions() {
        let copy = parse_tsv(&synth_corpus(SynthTask::Copy, 50, 10, 5, 1, &["en"]).unwrap(), None, None).unwrap();
        assert!(copy.iter().all(|p| p.source == p.target));
        let rev = parse_tsv(&synth_corpus(SynthTask::Reverse, 50, 10, 5, 1, &["en"]).unwrap(), None, None).unwrap();
        assert!(rev.iter().all(|p| p.source.iter().rev().eq(p.target.iter())));
        assert_eq!(
            synth_corpus(SynthTask::Copy, 20, 10, 5, 9, &["en"]).unwrap(),
            synth_corpus(SynthTask::Copy, 20, 10, 5, 9, &["en"]).unwrap()
        );
        assert!(synth_corpus(SynthTask::Copy, 20, 3, 5, 9, &["en"]).is_err());
    }

    #[test]
    fn lexicon_inverse_recovers_sources() {
        let langs = ["en", "hi"];
        let n_words = 40;
        let lex: Vec<Vec<String>> = (0..2).map(|l| (0..n_words).map(|i| synth_word(langs[l], l, i)).collect()).collect();
        for l in &lex {
            let set: BTreeSet<&String> = l.iter().collect();
            assert_eq!(set.len(), n_words, "lexicon must be injective");
        }
        let text = synth_corpus(SynthTask::Lexicon, 30, n_words, 5, 4, &langs).unwrap();
        for p in parse_tsv(&text, None, None).unwrap() {
            let (a, b) = if p.source_lang == "en" { (0, 1) } else { (1, 0) };
            let back: Vec<String> = p
                .target
                .iter()
                .map(|w| lex[a][lex[b].iter().position(|x| x == w).unwrap()].clone())
                .collect();
            assert_eq!(back, p.source);
        }
    }

    #[test]
    fn batches_shape_and_truncation() {
        let exs: Vec<Example> = (0..17).map(|i| Example::new(&vec![10; 1 + i % 9], &vec![11; 1 + i % 7], FIRST_TAG, 32)).collect();
        let b = make_batches(&exs, 8, 6).unwrap();
        assert_eq!(b.iter().map(|b| b.examples.len()).collect::<Vec<_>>(), vec![8, 8, 1]);
        for e in b.iter().flat_map(|b| &b.examples) {
            for row in [&e.source, &e.decoder_input, &e.target] {
                assert_eq!(row.len(), 6);
            }
            assert_eq!(&e.decoder_input[..2], &[SOS, FIRST_TAG]);
            assert_eq!(e.source[0], FIRST_TAG);
            assert!(e.source.contains(&EOS) && e.target.contains(&EOS));
            let mask = Batch::pad_mask(&e.source);
            for (t, m) in e.source.iter().zip(mask) {
                assert_eq!(*t == PAD, m);
            }
        }
        assert!(make_batches(&exs, 0, 6).is_err());
    }

    proptest! {
        #[test]
        fn truncation_keeps_prefix_and_end(
            src in prop::collection::vec(10u32..40, 0..20),
            tgt in prop::collection::vec(10u32..40, 0..20),
            seq_len in 2usize..12,
        ) {
            let ex = Example::new(&src, &tgt, FIRST_TAG, 64);
            let b = make_batches(&[ex], 1, seq_len).unwrap();
            let e = &b[0].examples[0];
            prop_assert_eq!(&e.decoder_input[..2], &[SOS, FIRST_TAG][..]);
            prop_assert_eq!(e.source[0], FIRST_TAG);
            prop_assert!(e.source.contains(&EOS));
            prop_assert!(e.target.contains(&EOS));
        }
    }
}
