//! Line-oriented probability traces exported from external models.
//!
//! ```text
//! #trace<TAB>V=50257<TAB>tokenizer=gpt2<TAB>model=gpt2
//! 0<TAB>464<TAB>2<TAB>464:0.031250000000<TAB>11:0.0100000000<TAB>0.9587500000<TAB>"The"
//! ```
//!
//! Each record lists position `n`, the realized token id, the number `k` of
//! explicit entries, `k` fields of `id:prob`, the tail mass spread uniformly
//! over all unlisted ids and, optionally, the token's surface text (a JSON
//! string, or `0x` followed by hex when the bytes are not UTF-8). Further
//! `key=value` fields on the header line are kept as metadata.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::corpus::{CharConvention, CharRate, TokenId, TokenStream, Vocabulary};
use crate::error::{Error, Result};

const HEADER_TAG: &str = "#trace";
const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub position: usize,
    pub token: TokenId,
    pub entries: Vec<(TokenId, f64)>,
    pub tail_mass: f64,
    pub surface: Option<Vec<u8>>,
}

impl TraceRecord {
    /// Dense probabilities over a vocabulary of `vocab_size` ids.
    pub fn probabilities(&self, vocab_size: usize) -> Vec<f64> {
        let unlisted = vocab_size - self.entries.len();
        let fill = if unlisted == 0 {
            0.0
        } else {
            self.tail_mass / unlisted as f64
        };
        let mut probs = vec![fill; vocab_size];
        for &(id, p) in &self.entries {
            probs[id as usize] = p;
        }
        probs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub vocab_size: usize,
    pub tokenizer: String,
    pub model: String,
    pub metadata: BTreeMap<String, String>,
    pub records: Vec<TraceRecord>,
}

impl TraceFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Empty("trace"))?;
        let mut fields = header.split('\t');
        if fields.next() != Some(HEADER_TAG) {
            return Err(Error::TraceFormat {
                line: 1,
                reason: format!("header must start with `{HEADER_TAG}`"),
            });
        }
        let mut metadata = BTreeMap::new();
        for field in fields {
            let (k, v) = field.split_once('=').ok_or_else(|| Error::TraceFormat {
                line: 1,
                reason: format!("header field `{field}` is not key=value"),
            })?;
            metadata.insert(k.to_string(), v.to_string());
        }
        let vocab_size: usize = metadata
            .remove("V")
            .ok_or_else(|| Error::TraceFormat {
                line: 1,
                reason: "header lacks V=".into(),
            })?
            .parse()
            .map_err(|_| Error::TraceFormat {
                line: 1,
                reason: "V is not an integer".into(),
            })?;
        if vocab_size == 0 {
            return Err(Error::TraceFormat {
                line: 1,
                reason: "V must be positive".into(),
            });
        }
        let tokenizer = metadata.remove("tokenizer").unwrap_or_default();
        let model = metadata.remove("model").unwrap_or_default();

        let mut records = Vec::new();
        for (idx, line) in lines {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let record = parse_record(line, vocab_size).map_err(|reason| Error::TraceFormat {
                line: idx + 1,
                reason,
            })?;
            if record.position != records.len() {
                return Err(Error::TraceFormat {
                    line: idx + 1,
                    reason: format!(
                        "expected position {}, found {}",
                        records.len(),
                        record.position
                    ),
                });
            }
            records.push(record);
        }
        Ok(TraceFile {
            vocab_size,
            tokenizer,
            model,
            metadata,
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "{HEADER_TAG}\tV={}\ttokenizer={}\tmodel={}",
            self.vocab_size, self.tokenizer, self.model
        );
        for (k, v) in &self.metadata {
            let _ = write!(out, "\t{k}={v}");
        }
        out.push('\n');
        for r in &self.records {
            let _ = write!(out, "{}\t{}\t{}", r.position, r.token, r.entries.len());
            for (id, p) in &r.entries {
                let _ = write!(out, "\t{id}:{p:.15e}");
            }
            let _ = write!(out, "\t{:.15e}", r.tail_mass);
            if let Some(surface) = &r.surface {
                out.push('\t');
                out.push_str(&encode_surface(surface));
            }
            out.push('\n');
        }
        out
    }

    /// Token stream carried by the trace's surface column.
    pub fn token_stream(&self, char_rate: CharRate) -> Result<TokenStream> {
        let mut vocab = Vocabulary::with_size(self.vocab_size);
        let mut tokens = Vec::with_capacity(self.records.len());
        let mut all_utf8 = true;
        for r in &self.records {
            let surface = r.surface.clone().ok_or_else(|| Error::TraceFormat {
                line: r.position + 2,
                reason: "record has no surface text; cannot derive character counts".into(),
            })?;
            all_utf8 &= std::str::from_utf8(&surface).is_ok();
            vocab.set_surface(r.token, surface)?;
            tokens.push(r.token);
        }
        let convention = if all_utf8 {
            CharConvention::UnicodeScalar
        } else {
            CharConvention::Byte
        };
        let name = if self.tokenizer.is_empty() {
            "trace"
        } else {
            self.tokenizer.as_str()
        };
        TokenStream::from_surfaces(&tokens, vocab, char_rate, name, convention)
    }
}

fn parse_record(line: &str, vocab_size: usize) -> std::result::Result<TraceRecord, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() < 4 {
        return Err(format!(
            "expected at least 4 fields, found {}",
            fields.len()
        ));
    }
    let position: usize = fields[0]
        .parse()
        .map_err(|_| format!("bad position `{}`", fields[0]))?;
    let token: TokenId = fields[1]
        .parse()
        .map_err(|_| format!("bad token id `{}`", fields[1]))?;
    let k: usize = fields[2]
        .parse()
        .map_err(|_| format!("bad entry count `{}`", fields[2]))?;
    if fields.len() != 4 + k && fields.len() != 5 + k {
        return Err(format!(
            "entry count {k} implies {} or {} fields, found {}",
            4 + k,
            5 + k,
            fields.len()
        ));
    }
    if token as usize >= vocab_size {
        return Err(format!("token id {token} ≥ V={vocab_size}"));
    }
    let mut entries = Vec::with_capacity(k);
    let mut seen = std::collections::HashSet::with_capacity(k);
    let mut sum = 0.0;
    for field in &fields[3..3 + k] {
        let (id, p) = field
            .split_once(':')
            .ok_or_else(|| format!("entry `{field}` is not id:prob"))?;
        let id: TokenId = id.parse().map_err(|_| format!("bad entry id `{id}`"))?;
        let p: f64 = p.parse().map_err(|_| format!("bad probability `{p}`"))?;
        if id as usize >= vocab_size {
            return Err(format!("entry id {id} ≥ V={vocab_size}"));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(format!("probability {p} for id {id} is outside (0, 1]"));
        }
        if !seen.insert(id) {
            return Err(format!("duplicate entry for id {id}"));
        }
        sum += p;
        entries.push((id, p));
    }
    let tail_field = fields[3 + k];
    let tail_mass: f64 = tail_field
        .parse()
        .map_err(|_| format!("bad tail mass `{tail_field}`"))?;
    if !(0.0..=1.0).contains(&tail_mass) {
        return Err(format!("tail mass {tail_mass} is outside [0, 1]"));
    }
    if (sum + tail_mass - 1.0).abs() > SUM_TOLERANCE {
        return Err(format!(
            "entries plus tail sum to {}, expected 1",
            sum + tail_mass
        ));
    }
    if tail_mass > 0.0 && k == vocab_size {
        return Err("tail mass is positive but every id is listed".into());
    }
    if !seen.contains(&token) {
        return Err(format!(
            "realized token {token} is not among the listed entries"
        ));
    }
    let surface = match fields.get(4 + k) {
        Some(s) => Some(decode_surface(s)?),
        None => None,
    };
    Ok(TraceRecord {
        position,
        token,
        entries,
        tail_mass,
        surface,
    })
}

fn encode_surface(bytes: &[u8]) -> String {
    match std::str::from_utf8(bytes) {
        Ok(s) => serde_json::to_string(s).expect("strings always serialize"),
        Err(_) => {
            let mut out = String::from("0x");
            for b in bytes {
                let _ = write!(out, "{b:02x}");
            }
            out
        }
    }
}

fn decode_surface(field: &str) -> std::result::Result<Vec<u8>, String> {
    if let Some(hex) = field.strip_prefix("0x") {
        if hex.len() % 2 != 0 {
            return Err("odd-length hex surface".into());
        }
        (0..hex.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&hex[i..i + 2], 16).map_err(|e| e.to_string()))
            .collect()
    } else {
        serde_json::from_str::<String>(field)
            .map(String::into_bytes)
            .map_err(|e| format!("bad surface `{field}`: {e}"))
    }
}
