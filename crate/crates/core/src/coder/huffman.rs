//! Per-position Huffman codes and the zero-delay scalar coders.
//!
//! A fresh canonical code is built from every position's PMF. Merges pick
//! the two lightest nodes, ordered by `(weight, lowest contained id)`, so
//! the code is identical on every platform.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::bits::{BitReader, Bits};
use super::{
    huffman_formula_bits, require_pmf, shannon_bits, CodedStream, CodedUnit, CoderSpec,
    Decodability, TokenEncoder, TokenInput,
};
use crate::corpus::TokenId;
use crate::error::{Error, Result};
use crate::pmf::QuantizedPmf;

/// Canonical prefix code over the symbols with nonzero frequency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuffmanCode {
    /// Codeword length per id; zero for uncoded symbols.
    lengths: Vec<u8>,
    /// Coded ids sorted by `(length, id)`.
    sorted: Vec<TokenId>,
    /// `count[l]`: number of codewords of length `l`.
    count: Vec<u32>,
    /// `first[l]`: numerically smallest codeword of length `l`.
    first: Vec<u64>,
}

impl HuffmanCode {
    pub fn build(pmf: &QuantizedPmf) -> Result<Self> {
        let lengths = code_lengths(pmf.freqs())?;
        Ok(Self::from_lengths(lengths))
    }

    fn from_lengths(lengths: Vec<u8>) -> Self {
        let max_len = lengths.iter().copied().max().unwrap_or(0) as usize;
        let mut count = vec![0u32; max_len + 1];
        for &l in &lengths {
            if l > 0 {
                count[l as usize] += 1;
            }
        }
        let mut first = vec![0u64; max_len + 2];
        let mut code = 0u64;
        for l in 1..=max_len {
            code = (code + count[l - 1] as u64) << 1;
            first[l] = code;
        }
        // count[0] counts nothing; the loop above relies on it being zero.
        let mut sorted: Vec<TokenId> = (0..lengths.len() as TokenId)
            .filter(|&i| lengths[i as usize] > 0)
            .collect();
        sorted.sort_by_key(|&i| (lengths[i as usize], i));
        HuffmanCode {
            lengths,
            sorted,
            count,
            first,
        }
    }

    pub fn lengths(&self) -> &[u8] {
        &self.lengths
    }

    pub fn length(&self, token: TokenId) -> u8 {
        self.lengths.get(token as usize).copied().unwrap_or(0)
    }

    pub fn codeword(&self, token: TokenId) -> Option<Bits> {
        let len = self.length(token);
        if len == 0 {
            return None;
        }
        let rank = self
            .sorted
            .iter()
            .position(|&s| s == token)
            .expect("coded symbol is listed");
        let offset: u32 = self.count[..len as usize].iter().sum();
        let code = self.first[len as usize] + (rank as u32 - offset) as u64;
        let mut bits = Bits::with_capacity(len as usize);
        bits.push_word(code, len as u32);
        Some(bits)
    }

    /// Decodes one codeword from `reader`.
    pub fn decode(&self, reader: &mut BitReader<'_>) -> Option<TokenId> {
        let mut code = 0u64;
        let mut offset = 0u32;
        for l in 1..self.count.len() {
            code = (code << 1) | reader.read()? as u64;
            let n = self.count[l];
            if n > 0 && code >= self.first[l] && code - self.first[l] < n as u64 {
                return Some(self.sorted[(offset as u64 + code - self.first[l]) as usize]);
            }
            offset += n;
        }
        None
    }

    /// Mean codeword length under `pmf`.
    pub fn expected_length(&self, pmf: &QuantizedPmf) -> f64 {
        let total = pmf.total() as f64;
        pmf.freqs()
            .iter()
            .zip(&self.lengths)
            .map(|(&f, &l)| f as f64 * l as f64)
            .sum::<f64>()
            / total
    }

    pub fn kraft_sum(&self) -> f64 {
        self.lengths
            .iter()
            .filter(|&&l| l > 0)
            .map(|&l| (-(l as f64)).exp2())
            .sum()
    }
}

fn code_lengths(freqs: &[u32]) -> Result<Vec<u8>> {
    let mut lengths = vec![0u8; freqs.len()];
    let coded: Vec<usize> = (0..freqs.len()).filter(|&i| freqs[i] > 0).collect();
    match coded.len() {
        0 => return Err(Error::Empty("PMF support")),
        1 => {
            lengths[coded[0]] = 1;
            return Ok(lengths);
        }
        _ => {}
    }
    // Nodes 0..n are leaves; internal nodes are appended as they are formed.
    let mut parent: Vec<usize> = vec![usize::MAX; coded.len()];
    let mut heap: BinaryHeap<Reverse<(u64, TokenId, usize)>> = coded
        .iter()
        .enumerate()
        .map(|(node, &id)| Reverse((freqs[id] as u64, id as TokenId, node)))
        .collect();
    while heap.len() > 1 {
        let Reverse((w1, id1, a)) = heap.pop().expect("two nodes");
        let Reverse((w2, id2, b)) = heap.pop().expect("two nodes");
        let node = parent.len();
        parent.push(usize::MAX);
        parent[a] = node;
        parent[b] = node;
        heap.push(Reverse((w1 + w2, id1.min(id2), node)));
    }
    // Parents are always created after their children, so one reverse pass
    // fills in every depth.
    let mut depth = vec![0u8; parent.len()];
    for node in (0..parent.len()).rev() {
        if parent[node] != usize::MAX {
            depth[node] = depth[parent[node]] + 1;
        }
    }
    for (leaf, &id) in coded.iter().enumerate() {
        lengths[id] = depth[leaf];
    }
    Ok(lengths)
}

/// Canonical codeword for `token` under the exact per-position code.
pub fn encode_exact(pmf: &QuantizedPmf, token: TokenId, position: usize) -> Result<Bits> {
    if pmf.freq(token) == 0 {
        return Err(Error::ZeroFrequency { position, token });
    }
    HuffmanCode::build(pmf)?
        .codeword(token)
        .ok_or(Error::ZeroFrequency { position, token })
}

/// Decodes one token from the front of `reader`, consuming exactly its
/// codeword.
pub fn decode_exact(
    pmf: &QuantizedPmf,
    reader: &mut BitReader<'_>,
    position: usize,
) -> Result<TokenId> {
    let code = HuffmanCode::build(pmf)?;
    let start = reader.position();
    code.decode(reader).ok_or_else(|| Error::Corrupt {
        position,
        reason: format!("no codeword starts at bit {start}"),
    })
}

/// Shannon, Huffman-formula and Huffman-exact: one unit per token, enqueued
/// at the token's arrival and decodable as soon as its last bit exits.
pub struct ScalarEncoder {
    spec: CoderSpec,
    units: Vec<CodedUnit>,
}

impl ScalarEncoder {
    pub fn new(spec: CoderSpec) -> Self {
        ScalarEncoder {
            spec,
            units: Vec::new(),
        }
    }
}

/// The unit a scalar coder produces for one token.
pub fn encode_token_scalar(
    spec: CoderSpec,
    pmf: &QuantizedPmf,
    token: TokenId,
    position: usize,
    arrival: f64,
) -> Result<CodedUnit> {
    let covered = vec![(position, Decodability::UnitEnd)];
    Ok(match spec {
        CoderSpec::Shannon => CodedUnit {
            bit_count: shannon_bits(pmf, token, position)?,
            bits: None,
            enqueue_time: arrival,
            covered,
        },
        CoderSpec::HuffmanFormula => CodedUnit {
            bit_count: huffman_formula_bits(pmf, token, position)? as f64,
            bits: None,
            enqueue_time: arrival,
            covered,
        },
        CoderSpec::HuffmanExact => {
            CodedUnit::concrete(encode_exact(pmf, token, position)?, arrival, covered)
        }
        other => {
            return Err(Error::InvalidParameter(format!(
                "{other} is not a scalar coder"
            )))
        }
    })
}

impl TokenEncoder for ScalarEncoder {
    fn push(&mut self, input: TokenInput<'_>, pmf: Option<&QuantizedPmf>) -> Result<()> {
        let pmf = require_pmf(pmf, &self.spec)?;
        let unit = encode_token_scalar(self.spec, pmf, input.token, input.index, input.arrival())?;
        self.units.push(unit);
        Ok(())
    }

    fn finish(self: Box<Self>) -> Result<CodedStream> {
        Ok(CodedStream {
            coder: self.spec,
            token_count: self.units.len(),
            units: self.units,
        })
    }
}
