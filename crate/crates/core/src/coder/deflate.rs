//! DEFLATE baseline with a sync flush after every token.
//!
//! Each token's surface bytes go through one raw DEFLATE stream (no zlib or
//! gzip framing) followed by a sync flush, and the token is charged every
//! byte emitted since the previous flush. A mirrored inflater checks after
//! each flush that the receiver can reproduce the source prefix.

use flate2::{Compress, Compression, Decompress, FlushCompress, FlushDecompress, Status};

use super::bits::Bits;
use super::{CodedStream, CodedUnit, CoderSpec, Decodability, TokenEncoder, TokenInput};
use crate::error::{Error, Result};

/// Bytes a sync flush emits for an empty delta: the 3-bit stored-block
/// header padded to a byte, then `LEN = 0x0000`, `NLEN = 0xffff`.
pub const SYNC_FLUSH_FLOOR_BYTES: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct FlushLedgerEntry {
    pub index: usize,
    pub bytes_emitted: usize,
    pub enqueue_time: f64,
}

impl FlushLedgerEntry {
    pub fn bit_cost(&self) -> u64 {
        8 * self.bytes_emitted as u64
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{:.6}",
            self.index,
            self.bytes_emitted,
            self.bit_cost(),
            self.enqueue_time
        )
    }
}

pub const LEDGER_CSV_HEADER: &str = "token_index,bytes,bits,enqueue_time_s";

/// Sync-flushing compressor plus the inflater that checks it.
pub struct FlushCompressor {
    compress: Compress,
    decompress: Decompress,
    source: Vec<u8>,
    inflated: Vec<u8>,
    compressed: Vec<u8>,
    verify: bool,
}

impl FlushCompressor {
    pub fn new(level: u32) -> Self {
        FlushCompressor {
            compress: Compress::new(Compression::new(level), false),
            decompress: Decompress::new(false),
            source: Vec::new(),
            inflated: Vec::new(),
            compressed: Vec::new(),
            verify: true,
        }
    }

    pub fn without_verification(mut self) -> Self {
        self.verify = false;
        self
    }

    /// Compresses `bytes` and sync-flushes; returns the newly emitted bytes.
    pub fn push(&mut self, bytes: &[u8], index: usize) -> Result<Vec<u8>> {
        let codec = |e: &dyn std::fmt::Display| Error::Codec(format!("token {index}: {e}"));
        let mut out = Vec::with_capacity(bytes.len() + 64);
        let mut consumed = 0usize;
        loop {
            if out.capacity() - out.len() < 64 {
                out.reserve(out.capacity().max(64));
            }
            let before_in = self.compress.total_in();
            let before_out = out.len();
            self.compress
                .compress_vec(&bytes[consumed..], &mut out, FlushCompress::Sync)
                .map_err(|e| codec(&e))?;
            consumed += (self.compress.total_in() - before_in) as usize;
            // Done once all input is taken and the flush left spare room.
            if consumed == bytes.len() && out.len() < out.capacity() {
                break;
            }
            if consumed == bytes.len() && out.len() == before_out {
                break;
            }
        }
        self.source.extend_from_slice(bytes);
        if self.verify {
            self.check_prefix(&out, index)?;
        }
        self.compressed.extend_from_slice(&out);
        Ok(out)
    }

    fn check_prefix(&mut self, chunk: &[u8], index: usize) -> Result<()> {
        let mut consumed = 0usize;
        loop {
            self.inflated
                .reserve(self.source.len() - self.inflated.len() + 64);
            let before_in = self.decompress.total_in();
            let before_out = self.inflated.len();
            self.decompress
                .decompress_vec(
                    &chunk[consumed..],
                    &mut self.inflated,
                    FlushDecompress::Sync,
                )
                .map_err(|e| Error::Codec(format!("token {index}: inflate failed: {e}")))?;
            consumed += (self.decompress.total_in() - before_in) as usize;
            let stalled =
                self.decompress.total_in() == before_in && self.inflated.len() == before_out;
            if stalled
                || (consumed == chunk.len() && self.inflated.len() < self.inflated.capacity())
            {
                break;
            }
        }
        if self.inflated != self.source {
            return Err(Error::Codec(format!(
                "token {index}: inflated prefix ({} bytes) differs from source ({} bytes)",
                self.inflated.len(),
                self.source.len()
            )));
        }
        Ok(())
    }

    pub fn compressed(&self) -> &[u8] {
        &self.compressed
    }
}

/// Inflates a raw DEFLATE stream produced by [`FlushCompressor`].
pub fn inflate(data: &[u8]) -> Result<Vec<u8>> {
    let mut d = Decompress::new(false);
    let mut out = Vec::with_capacity(data.len() * 4 + 64);
    let mut consumed = 0usize;
    loop {
        if out.capacity() - out.len() < 64 {
            out.reserve(out.capacity().max(64));
        }
        let before_in = d.total_in();
        let before_out = out.len();
        let status = d
            .decompress_vec(&data[consumed..], &mut out, FlushDecompress::Sync)
            .map_err(|e| Error::Codec(format!("inflate failed: {e}")))?;
        consumed += (d.total_in() - before_in) as usize;
        if status == Status::StreamEnd {
            break;
        }
        if consumed == data.len() && out.len() == before_out {
            break;
        }
    }
    Ok(out)
}

pub struct DeflateStreamEncoder {
    level: u32,
    compressor: FlushCompressor,
    ledger: Vec<FlushLedgerEntry>,
    units: Vec<CodedUnit>,
}

impl DeflateStreamEncoder {
    pub fn new(level: u32) -> Self {
        DeflateStreamEncoder {
            level,
            compressor: FlushCompressor::new(level),
            ledger: Vec::new(),
            units: Vec::new(),
        }
    }

    pub fn ledger(&self) -> &[FlushLedgerEntry] {
        &self.ledger
    }
}

impl TokenEncoder for DeflateStreamEncoder {
    fn push(&mut self, input: TokenInput<'_>, _pmf: Option<&super::QuantizedPmf>) -> Result<()> {
        let surface = input.surface.ok_or_else(|| {
            Error::InvalidParameter(format!(
                "deflate needs token surfaces; token {} at position {} has none",
                input.token, input.index
            ))
        })?;
        let emitted = self.compressor.push(surface, input.index)?;
        let entry = FlushLedgerEntry {
            index: input.index,
            bytes_emitted: emitted.len(),
            enqueue_time: input.arrival(),
        };
        let bits = Bits::from_bytes(&emitted, emitted.len() * 8).expect("length fits");
        self.units.push(CodedUnit::concrete(
            bits,
            entry.enqueue_time,
            vec![(input.index, Decodability::UnitEnd)],
        ));
        self.ledger.push(entry);
        Ok(())
    }

    fn finish(self: Box<Self>) -> Result<CodedStream> {
        Ok(CodedStream {
            coder: CoderSpec::DeflateFlush { level: self.level },
            token_count: self.units.len(),
            units: self.units,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_flush_costs_five_bytes() {
        let mut c = FlushCompressor::new(6);
        c.push(b"abc", 0).unwrap();
        let empty = c.push(b"", 1).unwrap();
        assert_eq!(empty, vec![0x00, 0x00, 0x00, 0xff, 0xff]);
    }

    #[test]
    fn every_token_pays_the_floor_and_prefixes_decode() {
        let text = b"the whale the whale the whale and the sea and the whale";
        let mut c = FlushCompressor::new(6);
        for (i, word) in text.split_inclusive(|&b| b == b' ').enumerate() {
            let out = c.push(word, i).unwrap();
            assert!(
                out.len() >= SYNC_FLUSH_FLOOR_BYTES,
                "token {i}: {} bytes",
                out.len()
            );
            // Sync flush output always ends with the empty stored block marker.
            assert_eq!(&out[out.len() - 4..], &[0x00, 0x00, 0xff, 0xff]);
        }
        assert_eq!(inflate(c.compressed()).unwrap(), text.to_vec());
    }

    #[test]
    fn long_tokens_and_levels() {
        let big: Vec<u8> = (0..50_000u32).map(|i| (i * 7 % 251) as u8).collect();
        for level in [0, 1, 6, 9] {
            let mut c = FlushCompressor::new(level);
            c.push(&big, 0).unwrap();
            c.push(b"tail", 1).unwrap();
            let mut expect = big.clone();
            expect.extend_from_slice(b"tail");
            assert_eq!(inflate(c.compressed()).unwrap(), expect);
        }
    }

    #[test]
    fn ledger_line() {
        let e = FlushLedgerEntry {
            index: 3,
            bytes_emitted: 7,
            enqueue_time: 0.25,
        };
        assert_eq!(e.bit_cost(), 56);
        assert_eq!(e.csv_line(), "3,7,56,0.250000");
    }
}
