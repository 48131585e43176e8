//! Text ingestion, built-in tokenizers and the synthetic arrival clock.
//!
//! A source emits characters at a constant rate `λ`; token `i` reaches the
//! encoder when its last character has been emitted, i.e. at
//! `(Σ_{j≤i} B_j) / λ`. Arrival times are derived from the integer prefix
//! character count of every token and stored in whole microseconds, so no
//! error accumulates along the stream.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;

use crate::error::{Error, Result};

pub type TokenId = u32;

const MICROS_PER_SECOND: u128 = 1_000_000;

/// Source character rate `λ` in characters per second, kept as an exact ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CharRate(Ratio<u64>);

impl CharRate {
    pub fn new(numer: u64, denom: u64) -> Result<Self> {
        if numer == 0 || denom == 0 {
            return Err(Error::InvalidParameter(format!(
                "character rate must be positive, got {numer}/{denom}"
            )));
        }
        Ok(CharRate(Ratio::new(numer, denom)))
    }

    pub fn per_second(cps: u64) -> Result<Self> {
        Self::new(cps, 1)
    }

    pub fn ratio(&self) -> Ratio<u64> {
        self.0
    }

    pub fn as_f64(&self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }

    /// Arrival time, in microseconds rounded half-up, of a token whose last
    /// character is character number `prefix_chars` of the source.
    pub fn arrival_micros(&self, prefix_chars: u64) -> u64 {
        let num = *self.0.numer() as u128;
        let den = *self.0.denom() as u128;
        let scaled = prefix_chars as u128 * MICROS_PER_SECOND * den;
        ((2 * scaled + num) / (2 * num)) as u64
    }
}

impl FromStr for CharRate {
    type Err = Error;

    /// Accepts integers and plain decimals (`20`, `17.5`).
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("invalid character rate `{s}`"));
        let s = s.trim();
        let (int, frac) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if int.is_empty() && frac.is_empty() {
            return Err(bad());
        }
        if !int.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        if frac.len() > 9 {
            return Err(bad());
        }
        let denom = 10u64.pow(frac.len() as u32);
        let digits = format!("{int}{frac}");
        let numer: u64 = digits.parse().map_err(|_| bad())?;
        CharRate::new(numer, denom)
    }
}

impl fmt::Display for CharRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self.0.denom() == 1 {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}", self.as_f64())
        }
    }
}

/// How `B_j` is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CharConvention {
    /// Unicode scalar values of valid UTF-8 input.
    UnicodeScalar,
    /// Raw bytes, used when the input is not valid UTF-8.
    Byte,
}

impl CharConvention {
    pub fn name(&self) -> &'static str {
        match self {
            CharConvention::UnicodeScalar => "unicode-scalar",
            CharConvention::Byte => "byte",
        }
    }

    pub fn count(&self, surface: &[u8]) -> usize {
        match self {
            CharConvention::UnicodeScalar => match std::str::from_utf8(surface) {
                Ok(s) => s.chars().count(),
                Err(_) => surface.len(),
            },
            CharConvention::Byte => surface.len(),
        }
    }
}

impl FromStr for CharConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unicode-scalar" => Ok(CharConvention::UnicodeScalar),
            "byte" => Ok(CharConvention::Byte),
            other => Err(Error::Unknown {
                kind: "character convention",
                name: other.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenizerSpec {
    /// One token per character; ids are code points below 256 (or raw bytes).
    Char,
    /// A maximal run of non-whitespace plus the whitespace that precedes it.
    Word,
}

impl TokenizerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TokenizerSpec::Char => "char",
            TokenizerSpec::Word => "word",
        }
    }
}

impl FromStr for TokenizerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "char" => Ok(TokenizerSpec::Char),
            "word" => Ok(TokenizerSpec::Word),
            other => Err(Error::Unknown {
                kind: "tokenizer",
                name: other.to_string(),
            }),
        }
    }
}

/// Maps token ids to their surface bytes. Entries may be unknown (`None`)
/// for ids that never occur, e.g. in replayed traces over a large vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    surfaces: Vec<Option<Vec<u8>>>,
}

impl Vocabulary {
    pub fn with_size(size: usize) -> Self {
        Vocabulary {
            surfaces: vec![None; size],
        }
    }

    pub fn from_surfaces(surfaces: Vec<Vec<u8>>) -> Self {
        Vocabulary {
            surfaces: surfaces.into_iter().map(Some).collect(),
        }
    }

    fn char_level(convention: CharConvention) -> Self {
        let surfaces = (0u32..256)
            .map(|id| match convention {
                CharConvention::Byte => vec![id as u8],
                CharConvention::UnicodeScalar => {
                    let c = char::from_u32(id).expect("code points below 256 are scalars");
                    c.to_string().into_bytes()
                }
            })
            .collect();
        Vocabulary::from_surfaces(surfaces)
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    pub fn surface(&self, id: TokenId) -> Option<&[u8]> {
        self.surfaces.get(id as usize)?.as_deref()
    }

    pub fn set_surface(&mut self, id: TokenId, surface: Vec<u8>) -> Result<()> {
        let size = self.surfaces.len();
        let slot = self
            .surfaces
            .get_mut(id as usize)
            .ok_or(Error::TokenOutOfRange {
                token: id,
                vocab_size: size,
            })?;
        *slot = Some(surface);
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = Option<&[u8]>> {
        self.surfaces.iter().map(|s| s.as_deref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenEvent {
    pub token: TokenId,
    /// `B_j`, always at least 1.
    pub char_count: u32,
    /// Characters emitted by the source up to and including this token.
    pub prefix_chars: u64,
    pub arrival_us: u64,
}

impl TokenEvent {
    pub fn arrival_secs(&self) -> f64 {
        self.arrival_us as f64 / 1e6
    }
}

#[derive(Debug, Clone)]
pub struct TokenStream {
    events: Vec<TokenEvent>,
    char_rate: CharRate,
    vocab: Vocabulary,
    tokenizer: String,
    convention: CharConvention,
}

impl TokenStream {
    /// Builds a stream from token ids and per-token character counts.
    pub fn from_counts(
        tokens: &[TokenId],
        char_counts: &[u32],
        vocab: Vocabulary,
        char_rate: CharRate,
        tokenizer: impl Into<String>,
        convention: CharConvention,
    ) -> Result<Self> {
        if tokens.len() != char_counts.len() {
            return Err(Error::InvalidParameter(format!(
                "{} tokens but {} character counts",
                tokens.len(),
                char_counts.len()
            )));
        }
        let mut prefix = 0u64;
        let mut events = Vec::with_capacity(tokens.len());
        for (i, (&token, &char_count)) in tokens.iter().zip(char_counts).enumerate() {
            if token as usize >= vocab.len() {
                return Err(Error::TokenOutOfRange {
                    token,
                    vocab_size: vocab.len(),
                });
            }
            if char_count == 0 {
                return Err(Error::InvalidParameter(format!(
                    "token {i} has zero characters"
                )));
            }
            prefix += char_count as u64;
            events.push(TokenEvent {
                token,
                char_count,
                prefix_chars: prefix,
                arrival_us: char_rate.arrival_micros(prefix),
            });
        }
        Ok(TokenStream {
            events,
            char_rate,
            vocab,
            tokenizer: tokenizer.into(),
            convention,
        })
    }

    /// Builds a stream whose character counts come from the vocabulary's
    /// surface strings.
    pub fn from_surfaces(
        tokens: &[TokenId],
        vocab: Vocabulary,
        char_rate: CharRate,
        tokenizer: impl Into<String>,
        convention: CharConvention,
    ) -> Result<Self> {
        let counts = tokens
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let surface = vocab.surface(t).ok_or_else(|| {
                    Error::InvalidParameter(format!("token {i} (id {t}) has no surface text"))
                })?;
                u32::try_from(convention.count(surface))
                    .map_err(|_| Error::InvalidParameter(format!("token {i} is too long")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_counts(tokens, &counts, vocab, char_rate, tokenizer, convention)
    }

    pub fn events(&self) -> &[TokenEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn tokens(&self) -> Vec<TokenId> {
        self.events.iter().map(|e| e.token).collect()
    }

    pub fn char_rate(&self) -> CharRate {
        self.char_rate
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn tokenizer(&self) -> &str {
        &self.tokenizer
    }

    pub fn convention(&self) -> CharConvention {
        self.convention
    }

    pub fn total_chars(&self) -> u64 {
        self.events.last().map_or(0, |e| e.prefix_chars)
    }

    /// `E[B]`, exact.
    pub fn mean_chars_per_token(&self) -> Result<Ratio<u64>> {
        if self.events.is_empty() {
            return Err(Error::Empty("token stream"));
        }
        Ok(Ratio::new(self.total_chars(), self.events.len() as u64))
    }

    pub fn mean_chars_per_token_f64(&self) -> Result<f64> {
        let r = self.mean_chars_per_token()?;
        Ok(*r.numer() as f64 / *r.denom() as f64)
    }

    /// Token arrival rate `λ / E[B]` in tokens per second.
    pub fn token_rate(&self) -> Result<f64> {
        let mean = self.mean_chars_per_token()?;
        let lambda = self.char_rate.ratio();
        let num = *lambda.numer() as f64 * *mean.denom() as f64;
        let den = *lambda.denom() as f64 * *mean.numer() as f64;
        Ok(num / den)
    }

    pub fn surface(&self, index: usize) -> Option<&[u8]> {
        self.vocab.surface(self.events.get(index)?.token)
    }

    /// Concatenates the surface text of every token.
    pub fn detokenize(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(self.total_chars() as usize);
        for (i, e) in self.events.iter().enumerate() {
            let surface = self.vocab.surface(e.token).ok_or_else(|| {
                Error::InvalidParameter(format!("token {i} (id {}) has no surface text", e.token))
            })?;
            out.extend_from_slice(surface);
        }
        Ok(out)
    }

    /// The first `n` tokens (all of them if the stream is shorter).
    pub fn prefix(&self, n: usize) -> TokenStream {
        TokenStream {
            events: self.events[..n.min(self.events.len())].to_vec(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> TokenStream {
        TokenStream {
            events: Vec::new(),
            char_rate: self.char_rate,
            vocab: self.vocab.clone(),
            tokenizer: self.tokenizer.clone(),
            convention: self.convention,
        }
    }
}

/// Splits `text` into tokens and stamps each with its arrival time.
pub fn tokenize(text: &[u8], tokenizer: TokenizerSpec, char_rate: CharRate) -> Result<TokenStream> {
    if text.is_empty() {
        return Err(Error::Empty("text"));
    }
    match std::str::from_utf8(text) {
        Ok(s) => match tokenizer {
            TokenizerSpec::Char => tokenize_chars(s, char_rate),
            TokenizerSpec::Word => {
                let pieces = split_words(s.char_indices(), s.len(), char::is_whitespace)
                    .into_iter()
                    .map(|(a, b)| &text[a..b]);
                intern(pieces, char_rate, CharConvention::UnicodeScalar)
            }
        },
        Err(_) => match tokenizer {
            TokenizerSpec::Char => {
                let tokens: Vec<TokenId> = text.iter().map(|&b| b as TokenId).collect();
                TokenStream::from_counts(
                    &tokens,
                    &vec![1; tokens.len()],
                    Vocabulary::char_level(CharConvention::Byte),
                    char_rate,
                    "char",
                    CharConvention::Byte,
                )
            }
            TokenizerSpec::Word => {
                let units = text.iter().enumerate().map(|(i, &b)| (i, b));
                let pieces = split_words(units, text.len(), |b: u8| b.is_ascii_whitespace())
                    .into_iter()
                    .map(|(a, b)| &text[a..b]);
                intern(pieces, char_rate, CharConvention::Byte)
            }
        },
    }
}

fn tokenize_chars(s: &str, char_rate: CharRate) -> Result<TokenStream> {
    let mut tokens = Vec::with_capacity(s.len());
    for (offset, c) in s.char_indices() {
        let id = c as u32;
        if id >= 256 {
            return Err(Error::NotRepresentable {
                position: offset,
                reason: format!("character U+{id:04X} is outside the 256-symbol char vocabulary"),
            });
        }
        tokens.push(id);
    }
    TokenStream::from_counts(
        &tokens,
        &vec![1; tokens.len()],
        Vocabulary::char_level(CharConvention::UnicodeScalar),
        char_rate,
        "char",
        CharConvention::UnicodeScalar,
    )
}

/// Byte ranges of whitespace-attached words: `ws* non-ws+`, plus a final
/// whitespace-only token when the text ends in whitespace.
fn split_words<U: Copy>(
    units: impl Iterator<Item = (usize, U)>,
    end: usize,
    is_space: impl Fn(U) -> bool,
) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 0;
    let mut in_word = false;
    for (offset, unit) in units {
        let space = is_space(unit);
        if space && in_word {
            spans.push((start, offset));
            start = offset;
            in_word = false;
        } else if !space {
            in_word = true;
        }
    }
    if start < end {
        spans.push((start, end));
    }
    spans
}

fn intern<'a>(
    pieces: impl Iterator<Item = &'a [u8]>,
    char_rate: CharRate,
    convention: CharConvention,
) -> Result<TokenStream> {
    let mut index: HashMap<&[u8], TokenId> = HashMap::new();
    let mut surfaces = Vec::new();
    let mut tokens = Vec::new();
    for piece in pieces {
        let id = *index.entry(piece).or_insert_with(|| {
            surfaces.push(piece.to_vec());
            (surfaces.len() - 1) as TokenId
        });
        tokens.push(id);
    }
    TokenStream::from_surfaces(
        &tokens,
        Vocabulary::from_surfaces(surfaces),
        char_rate,
        "word",
        convention,
    )
}
