//! Block rANS over a 32-bit state.
//!
//! The encoder buffers `K` tokens, then codes them last-to-first into a
//! state `x ∈ [L, 2^32)` with `L = 2^(32 - R)`, shifting out `R`-bit chunks
//! whenever `x` would leave that range. The block payload is the final
//! state (32 bits) followed by the renormalization chunks, most recent
//! first, so the decoder reads everything front to back and recovers the
//! tokens in forward order. Every block starts from `x = L` and must return
//! to it after its last token is decoded.
//!
//! With `R = 1` the state holds a constant ~31 bits of headroom, so a block
//! costs its information content plus 31–32 bits; the default reflects that
//! per-block state cost. `R = 16` (the usual word-oriented variant) is also
//! available.

use std::fmt::Write as _;
use std::ops::Range;

use super::bits::{BitReader, Bits};
use super::{
    require_pmf, CodedStream, CodedUnit, CoderSpec, Decodability, TokenEncoder, TokenInput,
    RANS_STATE_BITS,
};
use crate::corpus::TokenId;
use crate::error::{Error, Result};
use crate::pmf::QuantizedPmf;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RansParams {
    pub renorm_bits: u32,
}

impl RansParams {
    pub fn new(renorm_bits: u32) -> Result<Self> {
        if !(1..=16).contains(&renorm_bits) {
            return Err(Error::InvalidParameter(format!(
                "renormalization chunk must be 1..=16 bits, got {renorm_bits}"
            )));
        }
        Ok(RansParams { renorm_bits })
    }

    pub fn lower_bound(&self) -> u64 {
        1 << (RANS_STATE_BITS - self.renorm_bits)
    }

    fn check_pmf(&self, pmf: &QuantizedPmf) -> Result<()> {
        if pmf.precision() > RANS_STATE_BITS - self.renorm_bits {
            return Err(Error::InvalidParameter(format!(
                "PMF precision {} exceeds {} for R = {}",
                pmf.precision(),
                RANS_STATE_BITS - self.renorm_bits,
                self.renorm_bits
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansBlock {
    pub tokens: Range<usize>,
    pub bits: Bits,
    /// Arrival time of the block's last token.
    pub enqueue_time: f64,
}

impl RansBlock {
    /// `index<TAB>first..end<TAB>hex<TAB>bit length<TAB>enqueue time`.
    pub fn dump_line(&self, index: usize) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{index}\t{}..{}\t{}\t{}\t{:.6}",
            self.tokens.start,
            self.tokens.end,
            self.bits.to_hex(),
            self.bits.len(),
            self.enqueue_time
        );
        s
    }
}

/// Codes `tokens` (in reverse) into one block payload.
pub fn encode_block(
    tokens: &[TokenId],
    pmfs: &[QuantizedPmf],
    params: RansParams,
    first_position: usize,
) -> Result<Bits> {
    if tokens.len() != pmfs.len() {
        return Err(Error::InvalidParameter(format!(
            "{} tokens but {} PMFs",
            tokens.len(),
            pmfs.len()
        )));
    }
    let r = params.renorm_bits;
    let chunk_mask = (1u64 << r) - 1;
    let mut x = params.lower_bound();
    let mut chunks: Vec<u64> = Vec::new();
    for (i, (&token, pmf)) in tokens.iter().zip(pmfs).enumerate().rev() {
        params.check_pmf(pmf)?;
        let f = pmf.freq(token) as u64;
        if f == 0 {
            return Err(Error::ZeroFrequency {
                position: first_position + i,
                token,
            });
        }
        let c = pmf.cum(token) as u64;
        let shift = pmf.precision();
        let x_max = f << (RANS_STATE_BITS - shift);
        while x >= x_max {
            chunks.push(x & chunk_mask);
            x >>= r;
        }
        x = ((x / f) << shift) + (x % f) + c;
        debug_assert!(x >= params.lower_bound() && x < 1 << RANS_STATE_BITS);
    }
    let mut bits = Bits::with_capacity(RANS_STATE_BITS as usize + chunks.len() * r as usize);
    bits.push_word(x, RANS_STATE_BITS);
    for &chunk in chunks.iter().rev() {
        bits.push_word(chunk, r);
    }
    Ok(bits)
}

/// Forward decoder for one block payload.
#[derive(Debug, Clone)]
pub struct RansDecoder<'a> {
    params: RansParams,
    x: u64,
    reader: BitReader<'a>,
}

impl<'a> RansDecoder<'a> {
    pub fn new(payload: &'a [bool], params: RansParams, position: usize) -> Result<Self> {
        let mut reader = BitReader::new(payload);
        let x = reader
            .read_word(RANS_STATE_BITS)
            .ok_or_else(|| Error::Corrupt {
                position,
                reason: "block shorter than the 32-bit state".into(),
            })?;
        if x < params.lower_bound() {
            return Err(Error::Corrupt {
                position,
                reason: format!("state {x:#x} below the lower bound"),
            });
        }
        Ok(RansDecoder { params, x, reader })
    }

    pub fn decode(&mut self, pmf: &QuantizedPmf, position: usize) -> Result<TokenId> {
        self.params.check_pmf(pmf)?;
        let shift = pmf.precision();
        let slot = (self.x & ((1 << shift) - 1)) as u32;
        let token = pmf.symbol_at(slot);
        let f = pmf.freq(token) as u64;
        let c = pmf.cum(token) as u64;
        self.x = f * (self.x >> shift) + slot as u64 - c;
        while self.x < self.params.lower_bound() {
            let chunk = self
                .reader
                .read_word(self.params.renorm_bits)
                .ok_or_else(|| Error::Corrupt {
                    position,
                    reason: "block payload truncated".into(),
                })?;
            self.x = (self.x << self.params.renorm_bits) | chunk;
        }
        Ok(token)
    }

    /// Checks that the block decoded back to the initial state with no
    /// leftover payload.
    pub fn finish(self, position: usize) -> Result<()> {
        if self.x != self.params.lower_bound() || self.reader.remaining() != 0 {
            return Err(Error::Corrupt {
                position,
                reason: format!(
                    "block did not return to its initial state ({} bits left over)",
                    self.reader.remaining()
                ),
            });
        }
        Ok(())
    }
}

pub fn decode_block(
    payload: &Bits,
    pmfs: &[QuantizedPmf],
    params: RansParams,
    first_position: usize,
) -> Result<Vec<TokenId>> {
    let mut dec = RansDecoder::new(payload.as_slice(), params, first_position)?;
    let tokens = pmfs
        .iter()
        .enumerate()
        .map(|(i, pmf)| dec.decode(pmf, first_position + i))
        .collect::<Result<Vec<_>>>()?;
    dec.finish(first_position + pmfs.len().saturating_sub(1))?;
    Ok(tokens)
}

/// `(K - 1) · E[B] / λ`: expected wait of a block's first token for the rest
/// of its block.
pub fn buffering_floor(block: usize, mean_chars_per_token: f64, char_rate: f64) -> f64 {
    block.saturating_sub(1) as f64 * mean_chars_per_token / char_rate
}

/// Streaming adapter: one unit per block, enqueued when its last token
/// arrives; every token in the block is decodable once the unit has exited.
pub struct RansStreamEncoder {
    block: usize,
    params: RansParams,
    renorm_bits: u32,
    pending: Vec<(usize, TokenId, QuantizedPmf)>,
    last_arrival: f64,
    blocks: Vec<RansBlock>,
    error: Option<Error>,
}

impl RansStreamEncoder {
    pub fn new(block: usize, renorm_bits: u32) -> Self {
        let params = RansParams::new(renorm_bits);
        let (params, error) = match params {
            Ok(p) => (p, None),
            Err(e) => (RansParams { renorm_bits: 1 }, Some(e)),
        };
        RansStreamEncoder {
            block,
            params,
            renorm_bits,
            pending: Vec::with_capacity(block),
            last_arrival: 0.0,
            blocks: Vec::new(),
            error,
        }
    }

    fn flush(&mut self) -> Result<()> {
        if self.pending.is_empty() {
            return Ok(());
        }
        let first = self.pending[0].0;
        let tokens: Vec<TokenId> = self.pending.iter().map(|p| p.1).collect();
        let pmfs: Vec<QuantizedPmf> = self.pending.drain(..).map(|p| p.2).collect();
        let bits = encode_block(&tokens, &pmfs, self.params, first)?;
        self.blocks.push(RansBlock {
            tokens: first..first + tokens.len(),
            bits,
            enqueue_time: self.last_arrival,
        });
        Ok(())
    }

    fn spec(&self) -> CoderSpec {
        CoderSpec::Rans {
            block: self.block,
            state_bits: RANS_STATE_BITS,
            renorm_bits: self.renorm_bits,
        }
    }
}

impl TokenEncoder for RansStreamEncoder {
    fn push(&mut self, input: TokenInput<'_>, pmf: Option<&QuantizedPmf>) -> Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        let pmf = require_pmf(pmf, &self.spec())?;
        self.pending.push((input.index, input.token, pmf.clone()));
        self.last_arrival = input.arrival();
        if self.pending.len() == self.block {
            self.flush()?;
        }
        Ok(())
    }

    fn finish(mut self: Box<Self>) -> Result<CodedStream> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.flush()?;
        let coder = self.spec();
        let token_count = self.blocks.last().map_or(0, |b| b.tokens.end);
        let units = self
            .blocks
            .into_iter()
            .map(|b| {
                let covered = b
                    .tokens
                    .clone()
                    .map(|n| (n, Decodability::UnitEnd))
                    .collect();
                CodedUnit::concrete(b.bits, b.enqueue_time, covered)
            })
            .collect();
        Ok(CodedStream {
            coder,
            token_count,
            units,
        })
    }
}
