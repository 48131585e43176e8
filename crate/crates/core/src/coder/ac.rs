//! Streaming binary arithmetic coder with deferred-decodability tracking.
//!
//! The coder keeps a `P`-bit interval `[low, high]` and emits a bit whenever
//! the interval falls entirely in one half. When it straddles the midpoint
//! inside the middle quarters, the decision is deferred and counted as a
//! pending bit, to be emitted with the opposite polarity once resolved.
//!
//! The decoder reads `P` bits up front and one more per renormalization
//! shift. The number of bits it has read at the moment it identifies token
//! `n` is `β_n`: token `n` cannot be decoded before channel bit `β_n` has
//! arrived. Encoder and decoder shift in lockstep, so the encoder can report
//! every `β_n` without running the decoder.

use super::bits::{BitReader, Bits};
use super::{
    require_pmf, CodedStream, CodedUnit, CoderSpec, Decodability, TokenEncoder, TokenInput,
};
use crate::corpus::TokenId;
use crate::error::{Error, Result};
use crate::pmf::QuantizedPmf;

#[derive(Debug, Clone, Copy)]
struct Bounds {
    top: u128,
    half: u128,
    quarter: u128,
}

impl Bounds {
    fn new(precision: u32) -> Result<Self> {
        if precision != 32 && precision != 64 {
            return Err(Error::InvalidParameter(format!(
                "AC precision must be 32 or 64, got {precision}"
            )));
        }
        Ok(Bounds {
            top: (1u128 << precision) - 1,
            half: 1u128 << (precision - 1),
            quarter: 1u128 << (precision - 2),
        })
    }
}

fn check_pmf(pmf: &QuantizedPmf, precision: u32) -> Result<()> {
    // The narrowest post-renormalization interval is a quarter of the code
    // space; every nonzero slot must keep a nonempty sub-interval.
    if pmf.precision() + 2 > precision {
        return Err(Error::InvalidParameter(format!(
            "PMF precision {} is too fine for a {precision}-bit arithmetic coder",
            pmf.precision()
        )));
    }
    Ok(())
}

fn narrow(low: u128, high: u128, pmf: &QuantizedPmf, token: TokenId) -> (u128, u128) {
    let range = high - low + 1;
    let total = pmf.total() as u128;
    let lo = pmf.cum(token) as u128;
    let hi = lo + pmf.freq(token) as u128;
    (low + range * hi / total - 1, low + range * lo / total)
}

#[derive(Debug, Clone)]
pub struct AcEncoder {
    precision: u32,
    bounds: Bounds,
    low: u128,
    high: u128,
    pending: u64,
    shifts: u64,
    out: Bits,
}

impl AcEncoder {
    pub fn new(precision: u32) -> Result<Self> {
        let bounds = Bounds::new(precision)?;
        Ok(AcEncoder {
            precision,
            bounds,
            low: 0,
            high: bounds.top,
            pending: 0,
            shifts: 0,
            out: Bits::new(),
        })
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    pub fn emitted(&self) -> &Bits {
        &self.out
    }

    pub fn pending_bits(&self) -> u64 {
        self.pending
    }

    /// Bits the decoder will have read when it resolves the next token.
    pub fn next_beta(&self) -> u64 {
        self.precision as u64 + self.shifts
    }

    fn emit(&mut self, bit: bool) {
        self.out.push(bit);
        for _ in 0..self.pending {
            self.out.push(!bit);
        }
        self.pending = 0;
    }

    /// Narrows the interval to `token`'s slot and emits every settled bit.
    /// Returns the number of bits emitted by this step.
    pub fn encode(&mut self, pmf: &QuantizedPmf, token: TokenId, position: usize) -> Result<usize> {
        if pmf.freq(token) == 0 {
            return Err(Error::ZeroFrequency { position, token });
        }
        check_pmf(pmf, self.precision)?;
        let before = self.out.len();
        let (high, low) = narrow(self.low, self.high, pmf, token);
        self.high = high;
        self.low = low;
        let Bounds { top, half, quarter } = self.bounds;
        loop {
            if self.high < half {
                self.emit(false);
            } else if self.low >= half {
                self.emit(true);
                self.low -= half;
                self.high -= half;
            } else if self.low >= quarter && self.high < half + quarter {
                self.pending += 1;
                self.low -= quarter;
                self.high -= quarter;
            } else {
                break;
            }
            self.low <<= 1;
            self.high = (self.high << 1) | 1;
            debug_assert!(self.high <= top);
            self.shifts += 1;
        }
        Ok(self.out.len() - before)
    }

    /// Emits the pending bits and two disambiguating bits. A decoder that
    /// zero-pads past the end of the stream recovers every token.
    pub fn finish(&mut self) -> usize {
        let before = self.out.len();
        self.pending += 1;
        let bit = self.low >= self.bounds.quarter;
        self.emit(bit);
        self.out.len() - before
    }

    pub fn into_bits(self) -> Bits {
        self.out
    }
}

/// Instrumented decoder: records `β_n` for every decoded token.
#[derive(Debug, Clone)]
pub struct AcDecoder<'a> {
    precision: u32,
    bounds: Bounds,
    low: u128,
    high: u128,
    value: u128,
    reader: BitReader<'a>,
    consumed: u64,
    stream_len: u64,
    betas: Vec<u64>,
}

impl<'a> AcDecoder<'a> {
    /// Reads the first `precision` bits, zero-padding short streams.
    pub fn new(bits: &'a Bits, precision: u32) -> Result<Self> {
        let bounds = Bounds::new(precision)?;
        let mut d = AcDecoder {
            precision,
            bounds,
            low: 0,
            high: bounds.top,
            value: 0,
            reader: BitReader::new(bits.as_slice()),
            consumed: 0,
            stream_len: bits.len() as u64,
            betas: Vec::new(),
        };
        for _ in 0..precision {
            d.value = (d.value << 1) | d.next_bit();
        }
        Ok(d)
    }

    fn next_bit(&mut self) -> u128 {
        self.consumed += 1;
        self.reader.read().unwrap_or(false) as u128
    }

    /// Bits read so far, including zero padding.
    pub fn bits_consumed(&self) -> u64 {
        self.consumed
    }

    pub fn decode(&mut self, pmf: &QuantizedPmf, position: usize) -> Result<TokenId> {
        check_pmf(pmf, self.precision)?;
        if self.value < self.low || self.value > self.high {
            return Err(Error::Corrupt {
                position,
                reason: "code value left the coding interval".into(),
            });
        }
        let range = self.high - self.low + 1;
        let total = pmf.total() as u128;
        let target = ((self.value - self.low + 1) * total - 1) / range;
        if target >= total {
            return Err(Error::Corrupt {
                position,
                reason: "code value outside every symbol interval".into(),
            });
        }
        let token = pmf.symbol_at(target as u32);
        self.betas.push(self.consumed.min(self.stream_len));

        let (high, low) = narrow(self.low, self.high, pmf, token);
        self.high = high;
        self.low = low;
        let Bounds { half, quarter, .. } = self.bounds;
        loop {
            if self.high < half {
                // lower half, nothing to subtract
            } else if self.low >= half {
                self.low -= half;
                self.high -= half;
                self.value -= half;
            } else if self.low >= quarter && self.high < half + quarter {
                self.low -= quarter;
                self.high -= quarter;
                self.value -= quarter;
            } else {
                break;
            }
            self.low <<= 1;
            self.high = (self.high << 1) | 1;
            self.value = (self.value << 1) | self.next_bit();
        }
        Ok(token)
    }

    /// `β_n` for every token decoded so far, capped at the stream length.
    pub fn betas(&self) -> &[u64] {
        &self.betas
    }
}

/// Streaming adapter: one unit per coding step, enqueued at the token's
/// arrival, carrying the bits that step released.
pub struct AcStreamEncoder {
    encoder: AcEncoder,
    units: Vec<CodedUnit>,
    betas: Vec<u64>,
    last_arrival: f64,
}

impl AcStreamEncoder {
    pub fn new(precision: u32) -> Result<Self> {
        Ok(AcStreamEncoder {
            encoder: AcEncoder::new(precision)?,
            units: Vec::new(),
            betas: Vec::new(),
            last_arrival: 0.0,
        })
    }
}

impl TokenEncoder for AcStreamEncoder {
    fn push(&mut self, input: TokenInput<'_>, pmf: Option<&QuantizedPmf>) -> Result<()> {
        let spec = CoderSpec::Ac {
            precision: self.encoder.precision(),
        };
        let pmf = require_pmf(pmf, &spec)?;
        self.betas.push(self.encoder.next_beta());
        let before = self.encoder.emitted().len();
        self.encoder.encode(pmf, input.token, input.index)?;
        let fresh: Bits = self.encoder.emitted().as_slice()[before..]
            .iter()
            .copied()
            .collect();
        self.last_arrival = input.arrival();
        self.units
            .push(CodedUnit::concrete(fresh, input.arrival(), Vec::new()));
        Ok(())
    }

    fn finish(mut self: Box<Self>) -> Result<CodedStream> {
        let precision = self.encoder.precision();
        let before = self.encoder.emitted().len();
        self.encoder.finish();
        let tail: Bits = self.encoder.emitted().as_slice()[before..]
            .iter()
            .copied()
            .collect();
        let total = self.encoder.emitted().len() as u64;
        let token_count = self.units.len();
        for (n, (unit, beta)) in self.units.iter_mut().zip(&self.betas).enumerate() {
            unit.covered = vec![(n, Decodability::ChannelBit((*beta).min(total)))];
        }
        self.units
            .push(CodedUnit::concrete(tail, self.last_arrival, Vec::new()));
        Ok(CodedStream {
            coder: CoderSpec::Ac { precision },
            token_count,
            units: self.units,
        })
    }
}

/// Encodes a whole token sequence; convenience for tests and the CLI.
pub fn encode_all(
    precision: u32,
    pmfs: &[QuantizedPmf],
    tokens: &[TokenId],
) -> Result<(Bits, Vec<u64>)> {
    let mut enc = AcEncoder::new(precision)?;
    let mut betas = Vec::with_capacity(tokens.len());
    for (n, (pmf, &t)) in pmfs.iter().zip(tokens).enumerate() {
        betas.push(enc.next_beta());
        enc.encode(pmf, t, n)?;
    }
    enc.finish();
    let bits = enc.into_bits();
    let total = bits.len() as u64;
    Ok((bits, betas.into_iter().map(|b| b.min(total)).collect()))
}

pub fn decode_all(
    precision: u32,
    bits: &Bits,
    pmfs: &[QuantizedPmf],
) -> Result<(Vec<TokenId>, Vec<u64>)> {
    let mut dec = AcDecoder::new(bits, precision)?;
    let tokens = pmfs
        .iter()
        .enumerate()
        .map(|(n, pmf)| dec.decode(pmf, n))
        .collect::<Result<Vec<_>>>()?;
    Ok((tokens, dec.betas().to_vec()))
}
