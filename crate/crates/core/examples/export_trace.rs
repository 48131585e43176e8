//! Regenerates the bundled trace fixture.
//!
//! The texts under `data/texts` are split into whitespace-led words, and each
//! word into pieces of at most `PIECE` characters, which gives roughly four
//! characters per token. An interpolated bigram / unigram / uniform model is
//! fitted to those pieces, and the fixture's token sequence is then sampled
//! from that model with a fixed seed, so every record's distribution is the
//! one its token was actually drawn from. Each record lists the `TOP` most
//! likely pieces plus the realized one; the rest of the mass is the tail.
//!
//! Usage: `cargo run --example export_trace -- [positions] [out path]`
//! (`STREAMCODE_SEED` overrides the default seed).

use std::collections::HashMap;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use streamcode::corpus::{tokenize, CharRate, TokenId, TokenizerSpec};
use streamcode::predictor::{TraceFile, TraceRecord};

const TEXTS: [&str; 4] = ["moby_dick", "pride_and_prejudice", "two_cities", "alice"];
const PIECE: usize = 4;
const TOP: usize = 15;
const SEED: u64 = 20;
const BIGRAM_WEIGHT: f64 = 0.78;
const UNIGRAM_WEIGHT: f64 = 0.20;

fn pieces(word: &str) -> Vec<String> {
    let lead: String = word.chars().take_while(|c| c.is_whitespace()).collect();
    let body: Vec<char> = word.chars().skip(lead.chars().count()).collect();
    if body.is_empty() {
        return vec![lead];
    }
    let mut out: Vec<String> = body.chunks(PIECE).map(|c| c.iter().collect()).collect();
    // A one-character remainder joins the piece before it.
    if out.len() > 1 && out[out.len() - 1].chars().count() == 1 {
        let last = out.pop().unwrap();
        out.last_mut().unwrap().push_str(&last);
    }
    out[0].insert_str(0, &lead);
    out
}

fn main() {
    let mut args = std::env::args().skip(1);
    let positions: usize = args.next().map_or(2500, |s| s.parse().expect("positions"));
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| root.join("data/fixture_trace.tsv"));
    let seed: u64 = std::env::var("STREAMCODE_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(SEED);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut text = String::new();
    for name in TEXTS {
        let path = root.join(format!("data/texts/{name}.txt"));
        text.push_str(&std::fs::read_to_string(&path).expect("bundled text"));
    }
    let words = tokenize(
        text.as_bytes(),
        TokenizerSpec::Word,
        CharRate::per_second(20).unwrap(),
    )
    .expect("tokenize");
    let mut ids: HashMap<String, TokenId> = HashMap::new();
    let mut surfaces: Vec<String> = Vec::new();
    let mut corpus: Vec<TokenId> = Vec::new();
    for i in 0..words.len() {
        let word = String::from_utf8(words.surface(i).unwrap().to_vec()).unwrap();
        for p in pieces(&word) {
            let next = surfaces.len() as TokenId;
            let id = *ids.entry(p.clone()).or_insert_with(|| {
                surfaces.push(p);
                next
            });
            corpus.push(id);
        }
    }
    let v = surfaces.len();

    let mut unigram = vec![0u64; v];
    let mut followers: HashMap<TokenId, Vec<(TokenId, u64)>> = HashMap::new();
    let mut context = vec![0u64; v];
    for (i, &t) in corpus.iter().enumerate() {
        unigram[t as usize] += 1;
        if i > 0 {
            let prev = corpus[i - 1];
            context[prev as usize] += 1;
            let f = followers.entry(prev).or_default();
            match f.iter_mut().find(|(b, _)| *b == t) {
                Some((_, c)) => *c += 1,
                None => f.push((t, 1)),
            }
        }
    }
    let n = corpus.len() as f64;
    let uniform_weight = 1.0 - BIGRAM_WEIGHT - UNIGRAM_WEIGHT;

    let mut records = Vec::with_capacity(positions);
    let mut total_bits = 0.0;
    let mut chars = 0usize;
    let mut prev: Option<TokenId> = None;
    for i in 0..positions {
        let mut probs: Vec<f64> = unigram
            .iter()
            .map(|&c| UNIGRAM_WEIGHT * c as f64 / n + uniform_weight / v as f64)
            .collect();
        match prev {
            Some(p) if context[p as usize] > 0 => {
                let total = context[p as usize] as f64;
                for &(b, c) in &followers[&p] {
                    probs[b as usize] += BIGRAM_WEIGHT * c as f64 / total;
                }
            }
            _ => {
                for (id, &c) in unigram.iter().enumerate() {
                    probs[id] += BIGRAM_WEIGHT * c as f64 / n;
                }
            }
        }
        let mut order: Vec<TokenId> = (0..v as TokenId).collect();
        order.sort_by(|&a, &b| {
            probs[b as usize]
                .total_cmp(&probs[a as usize])
                .then(a.cmp(&b))
        });
        let top: Vec<TokenId> = order[..TOP].to_vec();
        let listed_mass: f64 = top.iter().map(|&id| probs[id as usize]).sum();
        let fill = (1.0 - listed_mass) / (v - TOP) as f64;
        // Sample from exactly the distribution the record will describe.
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut token = None;
        for &id in &top {
            acc += probs[id as usize];
            if u < acc {
                token = Some(id);
                break;
            }
        }
        let token = token.unwrap_or_else(|| {
            let k = (((u - acc) / fill) as usize).min(v - TOP - 1);
            let mut rest = order[TOP..].to_vec();
            rest.sort_unstable();
            rest[k]
        });
        let mut listed = top;
        let q = match listed.contains(&token) {
            true => probs[token as usize],
            false => {
                listed.push(token);
                fill
            }
        };
        listed.sort_unstable();
        let entries: Vec<(TokenId, f64)> = listed
            .iter()
            .map(|&id| (id, if id == token { q } else { probs[id as usize] }))
            .collect();
        let tail = (1.0 - entries.iter().map(|e| e.1).sum::<f64>()).max(0.0);
        total_bits -= q.log2();
        chars += surfaces[token as usize].chars().count();
        records.push(TraceRecord {
            position: i,
            token,
            entries,
            tail_mass: tail,
            surface: Some(surfaces[token as usize].clone().into_bytes()),
        });
        prev = Some(token);
    }

    let mut metadata = std::collections::BTreeMap::new();
    metadata.insert(
        "source".to_string(),
        format!("sampled from an interpolated bigram fitted to the bundled excerpts, seed {seed}"),
    );
    let trace = TraceFile {
        vocab_size: v,
        tokenizer: format!("piece{PIECE}"),
        model: "bigram-sampled".to_string(),
        metadata,
        records,
    };
    std::fs::write(&out, trace.render()).expect("write fixture");
    eprintln!(
        "{positions} positions, V = {v}, E[B] = {:.3} chars/token, {:.3} bits/token (unquantized), wrote {}",
        chars as f64 / positions as f64,
        total_bits / positions as f64,
        out.display()
    );
}
