//! Sequential probability models that feed the coders.

mod ngram;
pub mod trace;

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use crate::corpus::{TokenId, TokenStream};
use crate::error::{Error, Result};
use crate::pmf::{quantize, QuantizedPmf, DEFAULT_PRECISION, MAX_PRECISION};

pub use ngram::NgramModel;
pub use trace::{TraceFile, TraceRecord};

#[derive(Debug, Clone, PartialEq)]
pub enum PredictorKind {
    Uniform,
    UnigramAdaptive { delta: f64 },
    NgramAdaptive { order: usize, delta: f64 },
    TraceReplay { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorSpec {
    pub kind: PredictorKind,
    pub vocab_size: usize,
    pub precision: u32,
}

impl PredictorSpec {
    pub fn new(kind: PredictorKind, vocab_size: usize) -> Self {
        PredictorSpec {
            kind,
            vocab_size,
            precision: DEFAULT_PRECISION,
        }
    }

    pub fn with_precision(mut self, precision: u32) -> Self {
        self.precision = precision;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_PRECISION).contains(&self.precision) {
            return Err(Error::InvalidParameter(format!(
                "precision must be in 1..={MAX_PRECISION}, got {}",
                self.precision
            )));
        }
        if self.vocab_size == 0 {
            return Err(Error::InvalidParameter("vocabulary is empty".into()));
        }
        match &self.kind {
            PredictorKind::UnigramAdaptive { delta }
            | PredictorKind::NgramAdaptive { delta, .. }
                if !(*delta > 0.0 && delta.is_finite()) =>
            {
                Err(Error::InvalidParameter(format!(
                    "smoothing delta must be positive, got {delta}"
                )))
            }
            PredictorKind::NgramAdaptive { order: 0, .. } => Err(Error::InvalidParameter(
                "n-gram order must be at least 1".into(),
            )),
            _ if (self.vocab_size as u64) > 1u64 << self.precision
                && !matches!(self.kind, PredictorKind::TraceReplay { .. }) =>
            {
                Err(Error::PrecisionTooLow {
                    vocab_size: self.vocab_size,
                    precision: self.precision,
                })
            }
            _ => Ok(()),
        }
    }

    /// Short identifier used in run metadata.
    pub fn label(&self) -> String {
        match &self.kind {
            PredictorKind::Uniform => "uniform".into(),
            PredictorKind::UnigramAdaptive { delta } => format!("unigram(delta={delta})"),
            PredictorKind::NgramAdaptive { order, delta } => {
                format!("ngram(order={order},delta={delta})")
            }
            PredictorKind::TraceReplay { path } => format!("trace({})", path.display()),
        }
    }
}

impl fmt::Display for PredictorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone)]
enum Model {
    Uniform(QuantizedPmf),
    Ngram(NgramModel),
    Trace(Arc<TraceFile>),
}

/// Predictor state advanced one observed token at a time.
#[derive(Debug, Clone)]
pub struct Predictor {
    model: Model,
    vocab_size: usize,
    precision: u32,
    position: usize,
}

impl Predictor {
    pub fn new(spec: &PredictorSpec) -> Result<Self> {
        spec.validate()?;
        let model = match &spec.kind {
            PredictorKind::Uniform => {
                Model::Uniform(QuantizedPmf::uniform(spec.vocab_size, spec.precision)?)
            }
            PredictorKind::UnigramAdaptive { delta } => {
                Model::Ngram(NgramModel::new(1, *delta, spec.vocab_size))
            }
            PredictorKind::NgramAdaptive { order, delta } => {
                Model::Ngram(NgramModel::new(*order, *delta, spec.vocab_size))
            }
            PredictorKind::TraceReplay { path } => {
                let trace = TraceFile::load(path)?;
                return Self::from_trace(Arc::new(trace), spec.precision);
            }
        };
        Ok(Predictor {
            model,
            vocab_size: spec.vocab_size,
            precision: spec.precision,
            position: 0,
        })
    }

    pub fn from_trace(trace: Arc<TraceFile>, precision: u32) -> Result<Self> {
        let vocab_size = trace.vocab_size;
        Ok(Predictor {
            model: Model::Trace(trace),
            vocab_size,
            precision,
            position: 0,
        })
    }

    pub fn position(&self) -> usize {
        self.position
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    /// Unquantized next-token probabilities.
    pub fn next_probabilities(&self) -> Result<Vec<f64>> {
        match &self.model {
            Model::Uniform(_) => Ok(vec![1.0 / self.vocab_size as f64; self.vocab_size]),
            Model::Ngram(m) => Ok(m.probabilities()),
            Model::Trace(t) => Ok(self.trace_record(t)?.probabilities(self.vocab_size)),
        }
    }

    pub fn next_pmf(&self) -> Result<QuantizedPmf> {
        match &self.model {
            Model::Uniform(pmf) => Ok(pmf.clone()),
            _ => quantize(&self.next_probabilities()?, self.precision),
        }
    }

    /// The token a replayed trace expects at the current position.
    pub fn expected_token(&self) -> Result<Option<TokenId>> {
        match &self.model {
            Model::Trace(t) => Ok(Some(self.trace_record(t)?.token)),
            _ => Ok(None),
        }
    }

    pub fn update(&mut self, observed: TokenId) -> Result<()> {
        if observed as usize >= self.vocab_size {
            return Err(Error::TokenOutOfRange {
                token: observed,
                vocab_size: self.vocab_size,
            });
        }
        if let Model::Ngram(m) = &mut self.model {
            m.observe(observed);
        }
        self.position += 1;
        Ok(())
    }

    fn trace_record<'a>(&self, trace: &'a TraceFile) -> Result<&'a TraceRecord> {
        trace
            .records
            .get(self.position)
            .ok_or(Error::TraceExhausted {
                position: self.position,
                len: trace.records.len(),
            })
    }
}

/// Runs the predictor over `stream`, handing each position's PMF and the
/// realized token to `visit` before the model observes that token.
pub fn for_each_position(
    stream: &TokenStream,
    predictor: &mut Predictor,
    mut visit: impl FnMut(usize, &QuantizedPmf, TokenId) -> Result<()>,
) -> Result<()> {
    for (n, event) in stream.events().iter().enumerate() {
        if let Some(expected) = predictor.expected_token()? {
            if expected != event.token {
                return Err(Error::InvalidParameter(format!(
                    "trace expects token {expected} at position {n}, stream has {}",
                    event.token
                )));
            }
        }
        let pmf = predictor.next_pmf()?;
        visit(n, &pmf, event.token)?;
        predictor.update(event.token)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossEntropy {
    pub tokens: usize,
    pub total_bits: f64,
    pub bits_per_token: f64,
    pub bits_per_char: f64,
}

/// Mean code length `-log2 q̂` over the quantized PMFs, per token and per
/// character.
pub fn cross_entropy(stream: &TokenStream, spec: &PredictorSpec) -> Result<CrossEntropy> {
    let mut predictor = Predictor::new(spec)?;
    cross_entropy_with(stream, &mut predictor)
}

pub fn cross_entropy_with(stream: &TokenStream, predictor: &mut Predictor) -> Result<CrossEntropy> {
    if stream.is_empty() {
        return Err(Error::Empty("token stream"));
    }
    let mut total = 0.0;
    for_each_position(stream, predictor, |n, pmf, token| {
        total += pmf
            .info_bits(token)
            .ok_or(Error::ZeroFrequency { position: n, token })?;
        Ok(())
    })?;
    let bits_per_token = total / stream.len() as f64;
    Ok(CrossEntropy {
        tokens: stream.len(),
        total_bits: total,
        bits_per_token,
        bits_per_char: bits_per_token / stream.mean_chars_per_token_f64()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, CharConvention, CharRate, TokenizerSpec, Vocabulary};

    fn rate() -> CharRate {
        CharRate::per_second(20).unwrap()
    }

    #[test]
    fn uniform_256_is_64_everywhere() {
        let p = Predictor::new(&PredictorSpec::new(PredictorKind::Uniform, 256)).unwrap();
        assert!(p.next_pmf().unwrap().freqs().iter().all(|&f| f == 64));
    }

    #[test]
    fn unigram_after_three_observations() {
        let spec =
            PredictorSpec::new(PredictorKind::UnigramAdaptive { delta: 1.0 }, 2).with_precision(8);
        let mut p = Predictor::new(&spec).unwrap();
        for _ in 0..3 {
            p.update(0).unwrap();
        }
        assert_eq!(p.next_pmf().unwrap().freqs(), &[205, 51]);
    }

    #[test]
    fn update_advances_position_and_checks_range() {
        let spec = PredictorSpec::new(PredictorKind::Uniform, 4);
        let mut p = Predictor::new(&spec).unwrap();
        p.update(3).unwrap();
        assert_eq!(p.position(), 1);
        assert!(p.update(4).is_err());
    }

    #[test]
    fn trace_replay_exhausts() {
        let text = "#trace\tV=4\n0\t3\t2\t3:0.5\t1:0.25\t0.25\n";
        let trace = Arc::new(TraceFile::parse(text).unwrap());
        let mut p = Predictor::from_trace(trace, 8).unwrap();
        assert_eq!(p.next_pmf().unwrap().freqs(), &[32, 64, 32, 128]);
        p.update(3).unwrap();
        assert!(matches!(
            p.next_pmf(),
            Err(Error::TraceExhausted {
                position: 1,
                len: 1
            })
        ));
    }

    #[test]
    fn spec_validation() {
        let bad = [
            PredictorSpec::new(
                PredictorKind::NgramAdaptive {
                    order: 0,
                    delta: 1.0,
                },
                4,
            ),
            PredictorSpec::new(PredictorKind::UnigramAdaptive { delta: 0.0 }, 4),
            PredictorSpec::new(PredictorKind::Uniform, 4).with_precision(25),
            PredictorSpec::new(PredictorKind::Uniform, 300).with_precision(8),
        ];
        for spec in bad {
            assert!(spec.validate().is_err(), "{spec:?}");
        }
    }

    #[test]
    fn cross_entropy_of_uniform_is_eight_bits() {
        let s = tokenize(b"hello, world", TokenizerSpec::Char, rate()).unwrap();
        let ce = cross_entropy(&s, &PredictorSpec::new(PredictorKind::Uniform, 256)).unwrap();
        assert_eq!(ce.bits_per_token, 8.0);
        assert_eq!(ce.bits_per_char, 8.0);
    }

    #[test]
    fn cross_entropy_of_half_and_quarter() {
        let text = "#trace\tV=4\n\
                    0\t0\t1\t0:0.5\t0.5\n\
                    1\t1\t1\t1:0.25\t0.75\n";
        let trace = Arc::new(TraceFile::parse(text).unwrap());
        let stream = TokenStream::from_counts(
            &[0, 1],
            &[2, 2],
            Vocabulary::with_size(4),
            rate(),
            "t",
            CharConvention::Byte,
        )
        .unwrap();
        let mut p = Predictor::from_trace(trace, 14).unwrap();
        let ce = cross_entropy_with(&stream, &mut p).unwrap();
        assert!((ce.bits_per_token - 1.5).abs() < 1e-12);
        assert!((ce.bits_per_char - 0.75).abs() < 1e-12);
    }

    #[test]
    fn replay_rejects_mismatched_stream() {
        let text = "#trace\tV=4\n0\t0\t1\t0:0.5\t0.5\n";
        let trace = Arc::new(TraceFile::parse(text).unwrap());
        let stream = TokenStream::from_counts(
            &[2],
            &[1],
            Vocabulary::with_size(4),
            rate(),
            "t",
            CharConvention::Byte,
        )
        .unwrap();
        let mut p = Predictor::from_trace(trace, 14).unwrap();
        assert!(cross_entropy_with(&stream, &mut p).is_err());
    }
}
