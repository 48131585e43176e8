//! Shared fixtures and random-stream generators for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use streamcode::corpus::{CharRate, TokenId, TokenizerSpec};
use streamcode::experiment::SweepText;
use streamcode::pmf::{quantize, QuantizedPmf, DEFAULT_PRECISION};
use streamcode::predictor::PredictorKind;

pub const CPS: u64 = 20;
pub const VOCAB_SIZES: [usize; 4] = [2, 16, 256, 4096];

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

pub fn fixture_path() -> PathBuf {
    data_dir().join("fixture_trace.tsv")
}

pub fn text_paths() -> Vec<PathBuf> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(data_dir().join("texts"))
        .expect("bundled texts")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    paths.sort();
    paths
}

/// All bundled excerpts, concatenated in name order.
pub fn bundled_text() -> Vec<u8> {
    text_paths()
        .iter()
        .flat_map(|p| std::fs::read(p).expect("readable text"))
        .collect()
}

pub fn char_rate() -> CharRate {
    CharRate::per_second(CPS).unwrap()
}

/// Seed from `STREAMCODE_SEED`, mixed with a per-test salt.
pub fn seed(salt: u64) -> u64 {
    let base = std::env::var("STREAMCODE_SEED")
        .ok()
        .and_then(|s| s.parse::<u64>().ok())
        .unwrap_or(0x5eed);
    base ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

pub fn rng(salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed(salt))
}

pub fn ngram() -> PredictorKind {
    PredictorKind::NgramAdaptive {
        order: 3,
        delta: 0.1,
    }
}

/// Char-tokenized bundled text under the order-3 n-gram predictor.
pub fn ngram_text(tokens: usize) -> SweepText {
    SweepText::from_text(
        "bundled",
        &bundled_text(),
        TokenizerSpec::Char,
        char_rate(),
        ngram(),
        DEFAULT_PRECISION,
        tokens,
    )
    .unwrap()
}

pub fn fixture_text(tokens: usize) -> SweepText {
    SweepText::load_trace(&fixture_path(), char_rate(), DEFAULT_PRECISION, tokens).unwrap()
}

/// Uniform, or skewed with a heavy head and many frequency-1 symbols.
pub fn random_pmf(rng: &mut impl Rng, vocab: usize, skewed: bool) -> QuantizedPmf {
    if !skewed {
        return QuantizedPmf::uniform(vocab, DEFAULT_PRECISION).unwrap();
    }
    let exponent = rng.gen_range(0.5..3.0);
    let mut weights: Vec<f64> = (0..vocab)
        .map(|i| {
            let base = 1.0 / ((i + 1) as f64).powf(exponent);
            base * rng.gen_range(0.2..1.0)
        })
        .collect();
    // Occasionally one symbol takes nearly everything.
    if rng.gen_bool(0.2) {
        let hot = rng.gen_range(0..vocab);
        weights[hot] += 1e4 * weights.iter().sum::<f64>();
    }
    let sum: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / sum).collect();
    quantize(&probs, DEFAULT_PRECISION).unwrap()
}

pub fn sample(rng: &mut impl Rng, pmf: &QuantizedPmf) -> TokenId {
    let dist = WeightedIndex::new(pmf.freqs()).unwrap();
    dist.sample(rng) as TokenId
}

/// A PMF sequence with tokens drawn from it.
#[derive(Debug, Clone)]
pub struct RandomStream {
    pub vocab: usize,
    pub pmfs: Vec<QuantizedPmf>,
    pub tokens: Vec<TokenId>,
}

pub fn random_stream(rng: &mut impl Rng, vocab: usize, len: usize) -> RandomStream {
    let skewed = rng.gen_bool(0.5);
    let mut pmfs = Vec::with_capacity(len);
    let mut tokens = Vec::with_capacity(len);
    for _ in 0..len {
        let pmf = random_pmf(rng, vocab, skewed);
        // Rare symbols get picked far more often than their mass suggests.
        let token = if rng.gen_bool(0.1) {
            let rare: Vec<usize> = (0..vocab).filter(|&i| pmf.freqs()[i] == 1).collect();
            match rare.len() {
                0 => sample(rng, &pmf),
                n => rare[rng.gen_range(0..n)] as TokenId,
            }
        } else {
            sample(rng, &pmf)
        };
        tokens.push(token);
        pmfs.push(pmf);
    }
    RandomStream {
        vocab,
        pmfs,
        tokens,
    }
}
