//! Self-describing file format for `encode` / `decode`.
//!
//! ```text
//! streamcode/1\n
//! {JSON header}\n
//! payload bytes
//! ```
//!
//! The header names the coder, the predictor parameters, the tokenizer and
//! the vocabulary entries the stream uses; the payload is the concatenated
//! bitstream, zero-padded to a byte. CRC-32 checkpoints over the decoded
//! text of every 1024 tokens let the decoder report where corruption shows.

use std::collections::HashMap;
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::coder::ac::AcDecoder;
use crate::coder::deflate::inflate;
use crate::coder::huffman::decode_exact;
use crate::coder::rans::{RansDecoder, RansParams};
use crate::coder::{encode_stream, BitReader, Bits, CoderSpec};
use crate::corpus::{
    tokenize, CharConvention, CharRate, TokenId, TokenStream, TokenizerSpec, Vocabulary,
};
use crate::error::{Error, Result};
use crate::predictor::{Predictor, PredictorKind, PredictorSpec, TraceFile};

pub const MAGIC: &[u8] = b"streamcode/1\n";
pub const CHECKPOINT_TOKENS: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorHeader {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub precision: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_model: Option<String>,
}

impl PredictorHeader {
    pub fn from_kind(kind: &PredictorKind, precision: u32) -> Self {
        let (name, order, delta) = match kind {
            PredictorKind::Uniform => ("uniform", None, None),
            PredictorKind::UnigramAdaptive { delta } => ("unigram", None, Some(*delta)),
            PredictorKind::NgramAdaptive { order, delta } => ("ngram", Some(*order), Some(*delta)),
            PredictorKind::TraceReplay { .. } => ("trace", None, None),
        };
        PredictorHeader {
            kind: name.into(),
            order,
            delta,
            precision,
            trace_model: None,
        }
    }

    fn kind(&self) -> Result<PredictorKind> {
        let missing = |what: &str| Error::Format(format!("predictor header lacks `{what}`"));
        Ok(match self.kind.as_str() {
            "uniform" => PredictorKind::Uniform,
            "unigram" => PredictorKind::UnigramAdaptive {
                delta: self.delta.ok_or_else(|| missing("delta"))?,
            },
            "ngram" => PredictorKind::NgramAdaptive {
                order: self.order.ok_or_else(|| missing("order"))?,
                delta: self.delta.ok_or_else(|| missing("delta"))?,
            },
            other => {
                return Err(Error::Unknown {
                    kind: "predictor",
                    name: other.to_string(),
                })
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub coder: String,
    pub predictor: PredictorHeader,
    pub tokenizer: String,
    pub convention: String,
    /// Character rate as `numerator/denominator`.
    pub cps: String,
    pub tokens: usize,
    pub vocab_size: usize,
    /// `(id, base64 surface)` for every id that occurs.
    pub vocab: Vec<(TokenId, String)>,
    pub payload_bits: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub blocks: Vec<u64>,
    pub checkpoints: Vec<u32>,
}

/// Where the decoder gets its PMFs from.
pub enum PredictorSource {
    /// Rebuild from the header's parameters.
    Header,
    Trace(Arc<TraceFile>),
}

fn checkpoints(stream: &TokenStream) -> Result<Vec<u32>> {
    (0..stream.len())
        .step_by(CHECKPOINT_TOKENS)
        .map(|start| {
            let mut h = crc32fast::Hasher::new();
            for i in start..(start + CHECKPOINT_TOKENS).min(stream.len()) {
                h.update(stream.surface(i).ok_or_else(|| {
                    Error::InvalidParameter(format!("token {i} has no surface text"))
                })?);
            }
            Ok(h.finalize())
        })
        .collect()
}

/// Encodes `stream` into a container. `predictor` must be fresh.
pub fn encode(
    stream: &TokenStream,
    predictor: &mut Predictor,
    header: PredictorHeader,
    coder: CoderSpec,
) -> Result<Vec<u8>> {
    if !coder.is_concrete() {
        return Err(Error::NoBitstream(coder.id()));
    }
    if stream.is_empty() {
        return Err(Error::Empty("token stream"));
    }
    let coded = encode_stream(stream, predictor, &[coder])?.remove(0);
    let blocks = match coder {
        CoderSpec::Rans { .. } => coded.units.iter().map(|u| u.bit_count as u64).collect(),
        _ => Vec::new(),
    };
    let bits = coded.bitstream()?;
    let (payload, payload_bits) = (bits.to_bytes(), bits.len() as u64);
    let mut used: Vec<TokenId> = stream.tokens();
    used.sort_unstable();
    used.dedup();
    let vocab = used
        .into_iter()
        .map(|id| {
            let s = stream.vocab().surface(id).ok_or_else(|| {
                Error::InvalidParameter(format!("token id {id} has no surface text"))
            })?;
            Ok((id, B64.encode(s)))
        })
        .collect::<Result<Vec<_>>>()?;
    let rate = stream.char_rate().ratio();
    let header = Header {
        coder: coder.id(),
        predictor: header,
        tokenizer: stream.tokenizer().to_string(),
        convention: stream.convention().name().to_string(),
        cps: format!("{}/{}", rate.numer(), rate.denom()),
        tokens: stream.len(),
        vocab_size: stream.vocab_size(),
        vocab,
        payload_bits,
        blocks,
        checkpoints: checkpoints(stream)?,
    };
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(
        serde_json::to_string(&header)
            .map_err(|e| Error::Format(e.to_string()))?
            .as_bytes(),
    );
    out.push(b'\n');
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn read_header(bytes: &[u8]) -> Result<(Header, &[u8])> {
    let rest = bytes
        .strip_prefix(MAGIC)
        .ok_or_else(|| Error::Format("not a streamcode container (bad magic line)".into()))?;
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("container header is not terminated".into()))?;
    let header: Header = serde_json::from_slice(&rest[..nl])
        .map_err(|e| Error::Format(format!("container header: {e}")))?;
    Ok((header, &rest[nl + 1..]))
}

/// Decodes a container back into its token stream.
pub fn decode(bytes: &[u8], source: PredictorSource) -> Result<TokenStream> {
    let (header, payload) = read_header(bytes)?;
    let coder: CoderSpec = header.coder.parse()?;
    let convention: CharConvention = header.convention.parse()?;
    let char_rate = parse_rate(&header.cps)?;
    let mut vocab = Vocabulary::with_size(header.vocab_size);
    for (id, s) in &header.vocab {
        let surface = B64
            .decode(s)
            .map_err(|e| Error::Format(format!("vocabulary entry {id}: {e}")))?;
        vocab.set_surface(*id, surface)?;
    }
    let needed = header.payload_bits.div_ceil(8) as usize;
    if payload.len() != needed {
        return Err(Error::Corrupt {
            position: 0,
            reason: format!(
                "payload is {} bytes, header promises {needed}",
                payload.len()
            ),
        });
    }

    let tokens = if let CoderSpec::DeflateFlush { .. } = coder {
        deflate_tokens(payload, &header, &vocab)?
    } else {
        let mut predictor = match source {
            PredictorSource::Header => {
                let spec = PredictorSpec::new(header.predictor.kind()?, header.vocab_size)
                    .with_precision(header.predictor.precision);
                Predictor::new(&spec)?
            }
            PredictorSource::Trace(t) => {
                if t.vocab_size != header.vocab_size {
                    return Err(Error::InvalidParameter(format!(
                        "trace vocabulary {} does not match the container's {}",
                        t.vocab_size, header.vocab_size
                    )));
                }
                Predictor::from_trace(t, header.predictor.precision)?
            }
        };
        let bits = Bits::from_bytes(payload, header.payload_bits as usize).expect("length checked");
        decode_bits(&bits, coder, &header, &mut predictor)?
    };

    let stream = TokenStream::from_surfaces(
        &tokens,
        vocab,
        char_rate,
        header.tokenizer.clone(),
        convention,
    )
    .map_err(|e| Error::Corrupt {
        position: 0,
        reason: e.to_string(),
    })?;
    let got = checkpoints(&stream)?;
    for (chunk, (want, have)) in header.checkpoints.iter().zip(&got).enumerate() {
        if want != have {
            let start = chunk * CHECKPOINT_TOKENS;
            return Err(Error::Corrupt {
                position: start,
                reason: format!(
                    "checksum mismatch in tokens {start}..{}",
                    (start + CHECKPOINT_TOKENS).min(header.tokens)
                ),
            });
        }
    }
    if got.len() != header.checkpoints.len() {
        return Err(Error::Corrupt {
            position: tokens.len(),
            reason: "token count differs from the header".into(),
        });
    }
    Ok(stream)
}

fn parse_rate(s: &str) -> Result<CharRate> {
    let bad = || Error::Format(format!("bad character rate `{s}`"));
    let (n, d) = s.split_once('/').ok_or_else(bad)?;
    CharRate::new(n.parse().map_err(|_| bad())?, d.parse().map_err(|_| bad())?)
}

fn next_pmf(predictor: &Predictor, n: usize) -> Result<crate::pmf::QuantizedPmf> {
    predictor.next_pmf().map_err(|e| match e {
        Error::TraceExhausted { .. } => Error::Corrupt {
            position: n,
            reason: e.to_string(),
        },
        other => other,
    })
}

fn observe(predictor: &mut Predictor, token: TokenId, n: usize) -> Result<()> {
    if let Some(expected) = predictor.expected_token()? {
        if expected != token {
            return Err(Error::Corrupt {
                position: n,
                reason: format!("decoded token {token}, trace has {expected}"),
            });
        }
    }
    predictor.update(token)
}

fn decode_bits(
    bits: &Bits,
    coder: CoderSpec,
    header: &Header,
    predictor: &mut Predictor,
) -> Result<Vec<TokenId>> {
    let count = header.tokens;
    let mut tokens = Vec::with_capacity(count);
    match coder {
        CoderSpec::HuffmanExact => {
            let mut reader = BitReader::new(bits.as_slice());
            for n in 0..count {
                let pmf = next_pmf(predictor, n)?;
                let t = decode_exact(&pmf, &mut reader, n)?;
                observe(predictor, t, n)?;
                tokens.push(t);
            }
            if reader.remaining() != 0 {
                return Err(Error::Corrupt {
                    position: count,
                    reason: format!("{} trailing bits", reader.remaining()),
                });
            }
        }
        CoderSpec::Ac { precision } => {
            let mut dec = AcDecoder::new(bits, precision)?;
            for n in 0..count {
                let pmf = next_pmf(predictor, n)?;
                let t = dec.decode(&pmf, n)?;
                observe(predictor, t, n)?;
                tokens.push(t);
            }
        }
        CoderSpec::Rans {
            block, renorm_bits, ..
        } => {
            let params = RansParams::new(renorm_bits)?;
            let expected_blocks = count.div_ceil(block);
            if header.blocks.len() != expected_blocks
                || header.blocks.iter().sum::<u64>() != header.payload_bits
            {
                return Err(Error::Corrupt {
                    position: 0,
                    reason: "block table does not match the payload".into(),
                });
            }
            let mut offset = 0usize;
            for (b, &len) in header.blocks.iter().enumerate() {
                let first = b * block;
                let slice = &bits.as_slice()[offset..offset + len as usize];
                offset += len as usize;
                let mut dec = RansDecoder::new(slice, params, first)?;
                for n in first..(first + block).min(count) {
                    let pmf = next_pmf(predictor, n)?;
                    let t = dec.decode(&pmf, n)?;
                    observe(predictor, t, n)?;
                    tokens.push(t);
                }
                dec.finish((first + block).min(count) - 1)?;
            }
        }
        other => return Err(Error::NoBitstream(other.id())),
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= header.vocab_size) {
        return Err(Error::TokenOutOfRange {
            token: bad,
            vocab_size: header.vocab_size,
        });
    }
    Ok(tokens)
}

fn deflate_tokens(payload: &[u8], header: &Header, vocab: &Vocabulary) -> Result<Vec<TokenId>> {
    let text = inflate(payload).map_err(|e| Error::Corrupt {
        position: 0,
        reason: e.to_string(),
    })?;
    let tokenizer: TokenizerSpec = header.tokenizer.parse()?;
    let retok = tokenize(&text, tokenizer, CharRate::per_second(1)?)?;
    let ids: HashMap<&[u8], TokenId> = vocab
        .entries()
        .enumerate()
        .filter_map(|(id, s)| Some((s?, id as TokenId)))
        .collect();
    (0..retok.len())
        .map(|i| {
            let s = retok.surface(i).unwrap_or_default();
            ids.get(s).copied().ok_or_else(|| Error::Corrupt {
                position: i,
                reason: "inflated text has a token outside the vocabulary".into(),
            })
        })
        .collect()
}
