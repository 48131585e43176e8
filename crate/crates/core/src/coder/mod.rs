//! Entropy coders behind a common streaming contract.
//!
//! Every coder consumes `(pmf, token, arrival)` triples in stream order and
//! produces [`CodedUnit`]s: runs of bits with the time they enter the
//! channel queue, plus the condition under which each covered token becomes
//! decodable at the receiver.

pub mod ac;
mod bits;
pub mod deflate;
pub mod huffman;
pub mod rans;

use std::fmt;
use std::str::FromStr;

use crate::corpus::{TokenEvent, TokenId, TokenStream};
use crate::error::{Error, Result};
use crate::pmf::QuantizedPmf;
use crate::predictor::{for_each_position, Predictor};

pub use bits::{BitReader, Bits};

pub const DEFAULT_AC_PRECISION: u32 = 64;
pub const RANS_STATE_BITS: u32 = 32;
pub const DEFAULT_RANS_RENORM_BITS: u32 = 1;
pub const DEFAULT_DEFLATE_LEVEL: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CoderSpec {
    Shannon,
    HuffmanFormula,
    HuffmanExact,
    Ac {
        precision: u32,
    },
    Rans {
        block: usize,
        state_bits: u32,
        renorm_bits: u32,
    },
    DeflateFlush {
        level: u32,
    },
}

impl CoderSpec {
    pub fn ac() -> Self {
        CoderSpec::Ac {
            precision: DEFAULT_AC_PRECISION,
        }
    }

    pub fn rans(block: usize) -> Self {
        CoderSpec::Rans {
            block,
            state_bits: RANS_STATE_BITS,
            renorm_bits: DEFAULT_RANS_RENORM_BITS,
        }
    }

    pub fn deflate() -> Self {
        CoderSpec::DeflateFlush {
            level: DEFAULT_DEFLATE_LEVEL,
        }
    }

    /// Coders used by a sweep when none are named.
    pub fn default_set() -> Vec<CoderSpec> {
        vec![
            CoderSpec::Shannon,
            CoderSpec::ac(),
            CoderSpec::HuffmanExact,
            CoderSpec::HuffmanFormula,
            CoderSpec::rans(16),
            CoderSpec::rans(8),
            CoderSpec::rans(4),
            CoderSpec::rans(2),
            CoderSpec::rans(1),
            CoderSpec::deflate(),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CoderSpec::Ac { precision } if precision != 32 && precision != 64 => Err(
                Error::InvalidParameter(format!("AC precision must be 32 or 64, got {precision}")),
            ),
            CoderSpec::Rans { block: 0, .. } => Err(Error::InvalidParameter(
                "rANS block size must be at least 1".into(),
            )),
            CoderSpec::Rans {
                state_bits,
                renorm_bits,
                ..
            } if state_bits != RANS_STATE_BITS || !(1..=16).contains(&renorm_bits) => {
                Err(Error::InvalidParameter(format!(
                    "rANS needs a {RANS_STATE_BITS}-bit state and 1..=16 renormalization bits, \
                     got S={state_bits}, R={renorm_bits}"
                )))
            }
            CoderSpec::DeflateFlush { level } if level > 9 => Err(Error::InvalidParameter(
                format!("deflate level must be 0..=9, got {level}"),
            )),
            _ => Ok(()),
        }
    }

    /// Whether the coder reads the predictor's PMFs at all.
    pub fn uses_predictor(&self) -> bool {
        !matches!(self, CoderSpec::DeflateFlush { .. })
    }

    /// Whether units carry a concrete bit sequence.
    pub fn is_concrete(&self) -> bool {
        !matches!(self, CoderSpec::Shannon | CoderSpec::HuffmanFormula)
    }

    pub fn id(&self) -> String {
        self.to_string()
    }

    pub fn encoder(&self) -> Result<Box<dyn TokenEncoder + Send>> {
        self.validate()?;
        Ok(match *self {
            CoderSpec::Shannon | CoderSpec::HuffmanFormula | CoderSpec::HuffmanExact => {
                Box::new(huffman::ScalarEncoder::new(*self))
            }
            CoderSpec::Ac { precision } => Box::new(ac::AcStreamEncoder::new(precision)?),
            CoderSpec::Rans {
                block, renorm_bits, ..
            } => Box::new(rans::RansStreamEncoder::new(block, renorm_bits)),
            CoderSpec::DeflateFlush { level } => {
                Box::new(deflate::DeflateStreamEncoder::new(level))
            }
        })
    }
}

impl fmt::Display for CoderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            CoderSpec::Shannon => f.write_str("shannon"),
            CoderSpec::HuffmanFormula => f.write_str("huffman-formula"),
            CoderSpec::HuffmanExact => f.write_str("huffman-exact"),
            CoderSpec::Ac { precision } => write!(f, "ac-p{precision}"),
            CoderSpec::Rans {
                block, renorm_bits, ..
            } => {
                write!(f, "rans-k{block}")?;
                if renorm_bits != DEFAULT_RANS_RENORM_BITS {
                    write!(f, "-r{renorm_bits}")?;
                }
                Ok(())
            }
            CoderSpec::DeflateFlush { level } => {
                f.write_str("deflate")?;
                if level != DEFAULT_DEFLATE_LEVEL {
                    write!(f, "-l{level}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for CoderSpec {
    type Err = Error;

    /// Parses ids such as `shannon`, `huffman-exact`, `ac`, `ac-p32`,
    /// `rans-k16`, `rans-k8-r16`, `deflate`, `deflate-l9`.
    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::Unknown {
            kind: "coder",
            name: s.to_string(),
        };
        let num = |t: &str| t.parse::<u32>().map_err(|_| unknown());
        let spec = match s {
            "shannon" => CoderSpec::Shannon,
            "huffman" | "huffman-exact" => CoderSpec::HuffmanExact,
            "huffman-formula" => CoderSpec::HuffmanFormula,
            "ac" => CoderSpec::ac(),
            "deflate" | "gzip" => CoderSpec::deflate(),
            _ => {
                if let Some(p) = s.strip_prefix("ac-p") {
                    CoderSpec::Ac { precision: num(p)? }
                } else if let Some(rest) = s.strip_prefix("rans-k") {
                    let (k, r) = match rest.split_once("-r") {
                        Some((k, r)) => (k, num(r)?),
                        None => (rest, DEFAULT_RANS_RENORM_BITS),
                    };
                    CoderSpec::Rans {
                        block: num(k)? as usize,
                        state_bits: RANS_STATE_BITS,
                        renorm_bits: r,
                    }
                } else if let Some(l) = s.strip_prefix("deflate-l") {
                    CoderSpec::DeflateFlush { level: num(l)? }
                } else {
                    return Err(unknown());
                }
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// When a token covered by a unit can be decoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decodability {
    /// Once the unit's last bit has left the channel.
    UnitEnd,
    /// Once global channel bit `β` (1-based) has left the channel.
    ChannelBit(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodedUnit {
    /// Fractional only for the Shannon benchmark.
    pub bit_count: f64,
    pub bits: Option<Bits>,
    /// Seconds at which the unit joins the channel queue.
    pub enqueue_time: f64,
    pub covered: Vec<(usize, Decodability)>,
}

impl CodedUnit {
    pub fn concrete(bits: Bits, enqueue_time: f64, covered: Vec<(usize, Decodability)>) -> Self {
        CodedUnit {
            bit_count: bits.len() as f64,
            bits: Some(bits),
            enqueue_time,
            covered,
        }
    }
}

/// Everything a coder produced for one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedStream {
    pub coder: CoderSpec,
    pub token_count: usize,
    pub units: Vec<CodedUnit>,
}

impl CodedStream {
    pub fn total_bits(&self) -> f64 {
        self.units.iter().map(|u| u.bit_count).sum()
    }

    pub fn bits_per_token(&self) -> f64 {
        self.total_bits() / self.token_count as f64
    }

    /// Concatenated bitstream, for concrete coders.
    pub fn bitstream(&self) -> Result<Bits> {
        let mut out = Bits::new();
        for u in &self.units {
            let bits = u
                .bits
                .as_ref()
                .ok_or_else(|| Error::NoBitstream(self.coder.id()))?;
            out.extend(bits);
        }
        Ok(out)
    }

    /// Bit cost charged to each token when every unit covers a single token.
    pub fn per_token_bits(&self) -> Option<Vec<f64>> {
        let mut costs = vec![f64::NAN; self.token_count];
        for u in &self.units {
            if u.covered.len() != 1 {
                return None;
            }
            costs[u.covered[0].0] = u.bit_count;
        }
        Some(costs)
    }
}

/// Per-token input handed to an encoder.
#[derive(Debug, Clone, Copy)]
pub struct TokenInput<'a> {
    pub index: usize,
    pub token: TokenId,
    pub event: &'a TokenEvent,
    pub surface: Option<&'a [u8]>,
}

impl TokenInput<'_> {
    pub fn arrival(&self) -> f64 {
        self.event.arrival_secs()
    }
}

pub trait TokenEncoder {
    fn push(&mut self, input: TokenInput<'_>, pmf: Option<&QuantizedPmf>) -> Result<()>;
    fn finish(self: Box<Self>) -> Result<CodedStream>;
}

/// Encodes `stream` with every coder in `coders`, sharing one predictor pass.
pub fn encode_stream(
    stream: &TokenStream,
    predictor: &mut Predictor,
    coders: &[CoderSpec],
) -> Result<Vec<CodedStream>> {
    encode_each(stream, predictor, coders)?
        .into_iter()
        .collect()
}

/// Like [`encode_stream`], but a coder diagnostic only fails that coder.
/// The outer error is reserved for predictor failures.
pub fn encode_each(
    stream: &TokenStream,
    predictor: &mut Predictor,
    coders: &[CoderSpec],
) -> Result<Vec<Result<CodedStream>>> {
    let mut encoders: Vec<Result<Box<dyn TokenEncoder + Send>>> =
        coders.iter().map(|c| c.encoder()).collect();
    let events = stream.events();
    let input = |n: usize| TokenInput {
        index: n,
        token: events[n].token,
        event: &events[n],
        surface: stream.surface(n),
    };
    let mut push_all = |n: usize, pmf: Option<&QuantizedPmf>| {
        for slot in encoders.iter_mut() {
            if let Ok(enc) = slot {
                if let Err(e) = enc.push(input(n), pmf) {
                    *slot = Err(e);
                }
            }
        }
    };
    if coders.iter().any(CoderSpec::uses_predictor) {
        for_each_position(stream, predictor, |n, pmf, _| {
            push_all(n, Some(pmf));
            Ok(())
        })?;
    } else {
        for n in 0..events.len() {
            push_all(n, None);
        }
    }
    Ok(encoders
        .into_iter()
        .map(|e| e.and_then(|e| e.finish()))
        .collect())
}

fn require_pmf<'a>(pmf: Option<&'a QuantizedPmf>, coder: &CoderSpec) -> Result<&'a QuantizedPmf> {
    pmf.ok_or_else(|| Error::InvalidParameter(format!("coder {coder} needs a PMF per token")))
}

/// `-log2(freq/2^F)` with the zero-frequency diagnostic.
pub fn shannon_bits(pmf: &QuantizedPmf, token: TokenId, position: usize) -> Result<f64> {
    pmf.info_bits(token)
        .ok_or(Error::ZeroFrequency { position, token })
}

/// `max(1, ceil(-log2(freq/2^F)))`, evaluated in integers.
pub fn huffman_formula_bits(pmf: &QuantizedPmf, token: TokenId, position: usize) -> Result<u32> {
    let f = pmf.freq(token);
    if f == 0 {
        return Err(Error::ZeroFrequency { position, token });
    }
    // ceil(F - log2 f) = F - floor(log2 f) for every f ≥ 1.
    Ok((pmf.precision() - f.ilog2()).max(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coder_ids_roundtrip() {
        for spec in CoderSpec::default_set().into_iter().chain([
            CoderSpec::Ac { precision: 32 },
            CoderSpec::Rans {
                block: 8,
                state_bits: 32,
                renorm_bits: 16,
            },
            CoderSpec::DeflateFlush { level: 9 },
        ]) {
            assert_eq!(spec.id().parse::<CoderSpec>().unwrap(), spec);
        }
        assert_eq!(
            "huffman".parse::<CoderSpec>().unwrap(),
            CoderSpec::HuffmanExact
        );
    }

    #[test]
    fn invalid_coder_parameters() {
        for bad in [
            "ac-p48",
            "rans-k0",
            "rans-k4-r17",
            "deflate-l10",
            "lzma",
            "rans-kx",
        ] {
            assert!(bad.parse::<CoderSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn shannon_bit_examples() {
        let uniform = QuantizedPmf::uniform(256, 14).unwrap();
        assert_eq!(shannon_bits(&uniform, 9, 0).unwrap(), 8.0);

        let half = QuantizedPmf::from_freqs(vec![8192, 8192], 14).unwrap();
        assert_eq!(shannon_bits(&half, 0, 0).unwrap(), 1.0);

        let fifth = QuantizedPmf::from_freqs(vec![3277, 16384 - 3277], 14).unwrap();
        let direct = -(3277.0f64 / 16384.0).log2();
        let got = shannon_bits(&fifth, 0, 0).unwrap();
        assert!((got - direct).abs() < 1e-12);
        assert!((got - 2.3218).abs() < 1e-4);

        let zero = QuantizedPmf::from_freqs(vec![0, 16384], 14).unwrap();
        assert!(matches!(
            shannon_bits(&zero, 0, 7),
            Err(Error::ZeroFrequency {
                position: 7,
                token: 0
            })
        ));
    }

    #[test]
    fn huffman_formula_examples() {
        // p = 0.9: ceil(0.152) = 1.
        let p90 = QuantizedPmf::from_freqs(vec![14746, 1638], 14).unwrap();
        assert_eq!(huffman_formula_bits(&p90, 0, 0).unwrap(), 1);
        // p = 1/2 exactly: ceil(1.0) = 1.
        let half = QuantizedPmf::from_freqs(vec![8192, 8192], 14).unwrap();
        assert_eq!(huffman_formula_bits(&half, 1, 0).unwrap(), 1);
        // p ≈ 0.2: ceil(2.3219) = 3.
        let fifth = QuantizedPmf::from_freqs(vec![3277, 13107], 14).unwrap();
        assert_eq!(huffman_formula_bits(&fifth, 0, 0).unwrap(), 3);
        // p = 1: still one bit.
        let one = QuantizedPmf::from_freqs(vec![16384, 0], 14).unwrap();
        assert_eq!(huffman_formula_bits(&one, 0, 0).unwrap(), 1);
    }

    #[test]
    fn formula_brackets_shannon() {
        for f in 1..=(1u32 << 10) {
            let pmf = QuantizedPmf::from_freqs(vec![f, (1 << 10) - f], 10)
                .unwrap_or_else(|_| QuantizedPmf::from_freqs(vec![f], 10).unwrap());
            let s = shannon_bits(&pmf, 0, 0).unwrap();
            let h = huffman_formula_bits(&pmf, 0, 0).unwrap() as f64;
            if f <= 1 << 9 {
                assert!(s <= h && h < s + 1.0 + 1e-12, "f={f} s={s} h={h}");
            } else {
                assert_eq!(h, 1.0);
            }
        }
    }
}
