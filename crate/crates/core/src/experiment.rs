//! Rate sweeps: every coder on every text, served over channels provisioned
//! relative to the Shannon source rate.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::channel::{self, ChannelSpec, DelayRecord};
use crate::coder::{encode_each, CodedStream, CoderSpec};
use crate::corpus::{tokenize, CharRate, TokenStream, TokenizerSpec};
use crate::error::{Error, Result};
use crate::predictor::{Predictor, PredictorKind, PredictorSpec, TraceFile};

pub const DEFAULT_ALPHAS: [f64; 11] = [0.8, 0.9, 0.95, 0.98, 1.0, 1.02, 1.05, 1.1, 1.2, 1.5, 2.0];
pub const DEFAULT_TOKENS: usize = 10_000;
pub const DEFAULT_CPS: u64 = 20;

pub const BITS_CSV_HEADER: &str = "text,coder,bits_per_token,bpc,overhead_pct";
pub const DELAYS_CSV_HEADER: &str = "text,coder,alpha,C_bps,mean_delay_s,p95_delay_s,stable";

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub coders: Vec<CoderSpec>,
    pub alphas: Vec<f64>,
    pub char_rate: CharRate,
    pub tokens: usize,
    pub jobs: Option<usize>,
    /// Keep per-token delay records for every cell.
    pub keep_delays: bool,
    /// Extra `key=value` pairs copied into the CSV headers.
    pub metadata: BTreeMap<String, String>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            coders: CoderSpec::default_set(),
            alphas: DEFAULT_ALPHAS.to_vec(),
            char_rate: CharRate::per_second(DEFAULT_CPS).expect("nonzero"),
            tokens: DEFAULT_TOKENS,
            jobs: None,
            keep_delays: false,
            metadata: BTreeMap::new(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(Error::InvalidParameter("alpha grid is empty".into()));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be positive, got {a}"
            )));
        }
        if self.coders.is_empty() {
            return Err(Error::InvalidParameter("no coders selected".into()));
        }
        if self.tokens == 0 {
            return Err(Error::InvalidParameter(
                "token budget must be at least 1".into(),
            ));
        }
        if self.jobs == Some(0) {
            return Err(Error::InvalidParameter("--jobs must be at least 1".into()));
        }
        self.coders.iter().try_for_each(CoderSpec::validate)
    }
}

/// One text with the predictor that will score it.
#[derive(Debug, Clone)]
pub struct SweepText {
    pub name: String,
    pub stream: TokenStream,
    pub predictor: Predictor,
    pub predictor_label: String,
}

impl SweepText {
    /// Tokenizes `text` and keeps at most `tokens` tokens.
    pub fn from_text(
        name: &str,
        text: &[u8],
        tokenizer: TokenizerSpec,
        char_rate: CharRate,
        kind: PredictorKind,
        precision: u32,
        tokens: usize,
    ) -> Result<Self> {
        let full = tokenize(text, tokenizer, char_rate)?;
        let stream = if full.len() > tokens {
            full.prefix(tokens)
        } else {
            full
        };
        let spec = PredictorSpec::new(kind, stream.vocab_size()).with_precision(precision);
        Ok(SweepText {
            name: name.to_string(),
            predictor: Predictor::new(&spec)?,
            predictor_label: spec.label(),
            stream,
        })
    }

    /// Replays the first `tokens` positions of a trace; shorter traces fail.
    pub fn from_trace(
        name: &str,
        trace: Arc<TraceFile>,
        char_rate: CharRate,
        precision: u32,
        tokens: usize,
    ) -> Result<Self> {
        if trace.len() < tokens {
            return Err(Error::TraceExhausted {
                position: trace.len(),
                len: trace.len(),
            });
        }
        let stream = trace.token_stream(char_rate)?.prefix(tokens);
        let label = if trace.model.is_empty() {
            "trace".to_string()
        } else {
            format!("trace({})", trace.model)
        };
        Ok(SweepText {
            name: name.to_string(),
            predictor: Predictor::from_trace(trace, precision)?,
            predictor_label: label,
            stream,
        })
    }

    pub fn load_trace(
        path: &Path,
        char_rate: CharRate,
        precision: u32,
        tokens: usize,
    ) -> Result<Self> {
        let trace = Arc::new(TraceFile::load(path)?);
        Self::from_trace(&text_name(path), trace, char_rate, precision, tokens)
    }
}

/// File stem used as the text label.
pub fn text_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BitsRow {
    pub text: String,
    pub coder: String,
    pub bits_per_token: f64,
    pub bpc: f64,
    pub overhead_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub text: String,
    pub coder: String,
    pub alpha: f64,
    pub c_bps: f64,
    pub bpc: f64,
    pub bits_per_token: f64,
    pub overhead_pct: f64,
    pub mean_delay: f64,
    pub p95_delay: f64,
    pub stable: bool,
    pub records: Option<Vec<DelayRecord>>,
}

impl RunResult {
    /// `R_s = λ · bpc`.
    pub fn source_rate(&self, char_rate: f64) -> f64 {
        char_rate * self.bpc
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub text: String,
    pub coder: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct SweepResults {
    pub bits: Vec<BitsRow>,
    pub runs: Vec<RunResult>,
    pub failures: Vec<Failure>,
    /// Shannon bpc per text.
    pub shannon_bpc: BTreeMap<String, f64>,
    pub metadata: BTreeMap<String, String>,
}

/// Nearest-rank percentile: the `ceil(p/100 · N)`-th smallest value.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("delay records"));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "percentile must be in 0..=100, got {p}"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p * values.len() as f64) / 100.0).ceil() as usize;
    Ok(sorted[rank.clamp(1, values.len()) - 1])
}

pub fn percentile_delay(records: &[DelayRecord], p: f64) -> Result<f64> {
    let delays: Vec<f64> = records.iter().map(|r| r.delay).collect();
    percentile(&delays, p)
}

/// Indices of points not dominated in both coordinates (lower is better).
/// Duplicate points are all kept.
pub fn pareto_frontier(points: &[(f64, f64)]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            let (a, b) = points[i];
            !points
                .iter()
                .any(|&(x, y)| x <= a && y <= b && (x < a || y < b))
        })
        .collect()
}

/// Encodes every text with Shannon plus the configured coders, then serves
/// each coded stream at `C = α · λ · bpc_Sh` for every α.
pub fn run_sweep(texts: &[SweepText], config: &SweepConfig) -> Result<SweepResults> {
    config.validate()?;
    if texts.is_empty() {
        return Err(Error::Empty("texts"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| sweep_inner(texts, config))
}

fn sweep_inner(texts: &[SweepText], config: &SweepConfig) -> Result<SweepResults> {
    let mut coders = vec![CoderSpec::Shannon];
    coders.extend(
        config
            .coders
            .iter()
            .copied()
            .filter(|c| *c != CoderSpec::Shannon),
    );
    let lambda = config.char_rate.as_f64();

    let encoded: Vec<Result<Vec<Result<CodedStream>>>> = texts
        .par_iter()
        .map(|t| encode_each(&t.stream, &mut t.predictor.clone(), &coders))
        .collect();

    let mut results = SweepResults {
        metadata: sweep_metadata(texts, config),
        ..SweepResults::default()
    };
    // Cells: (text index, coded stream, alpha).
    let mut cells = Vec::new();
    let mut shannon = Vec::new();
    for (ti, (text, enc)) in texts.iter().zip(encoded).enumerate() {
        let streams = enc.map_err(|e| Error::Format(format!("text {}: {e}", text.name)))?;
        let chars = text.stream.total_chars() as f64;
        let mut iter = streams.into_iter().zip(&coders);
        let (sh, _) = iter.next().expect("shannon is always first");
        let sh = sh.map_err(|e| Error::Format(format!("text {}: shannon: {e}", text.name)))?;
        let bpc_sh = sh.total_bits() / chars;
        results.shannon_bpc.insert(text.name.clone(), bpc_sh);
        shannon.push(bpc_sh);
        let sh_coded = Arc::new(sh);
        let mut ok: Vec<Arc<CodedStream>> = Vec::new();
        if config.coders.contains(&CoderSpec::Shannon) {
            ok.push(sh_coded);
        }
        for (coded, spec) in iter {
            match coded {
                Ok(c) => ok.push(Arc::new(c)),
                Err(e) => results.failures.push(Failure {
                    text: text.name.clone(),
                    coder: spec.id(),
                    reason: e.to_string(),
                }),
            }
        }
        for coded in ok {
            results.bits.push(BitsRow {
                text: text.name.clone(),
                coder: coded.coder.id(),
                bits_per_token: coded.bits_per_token(),
                bpc: coded.total_bits() / chars,
                overhead_pct: 100.0 * (coded.total_bits() / chars / bpc_sh - 1.0),
            });
            for &alpha in &config.alphas {
                cells.push((ti, coded.clone(), alpha));
            }
        }
    }

    let runs: Vec<Result<RunResult>> = cells
        .par_iter()
        .map(|(t, coded, alpha)| {
            let text = &texts[*t];
            let chars = text.stream.total_chars() as f64;
            let c_bps = alpha * lambda * shannon[*t];
            let records = channel::delays(text.stream.events(), coded, ChannelSpec::new(c_bps)?)?;
            let bpc = coded.total_bits() / chars;
            let mean = channel::mean_delay(&records).ok_or(Error::Empty("delay records"))?;
            Ok(RunResult {
                text: text.name.clone(),
                coder: coded.coder.id(),
                alpha: *alpha,
                c_bps,
                bpc,
                bits_per_token: coded.bits_per_token(),
                overhead_pct: 100.0 * (bpc / shannon[*t] - 1.0),
                mean_delay: mean,
                p95_delay: percentile_delay(&records, 95.0)?,
                stable: lambda * bpc < c_bps,
                records: config.keep_delays.then_some(records),
            })
        })
        .collect();
    results.runs = runs.into_iter().collect::<Result<_>>()?;
    Ok(results)
}

fn sweep_metadata(texts: &[SweepText], config: &SweepConfig) -> BTreeMap<String, String> {
    let mut m = config.metadata.clone();
    let first = &texts[0];
    let join = |v: Vec<String>| v.join(";");
    m.insert("lambda_cps".into(), config.char_rate.to_string());
    m.insert("tokens".into(), config.tokens.to_string());
    m.insert(
        "tokenizer".into(),
        join(
            texts
                .iter()
                .map(|t| t.stream.tokenizer().to_string())
                .collect(),
        ),
    );
    m.insert(
        "char_convention".into(),
        join(
            texts
                .iter()
                .map(|t| t.stream.convention().name().to_string())
                .collect(),
        ),
    );
    m.insert(
        "predictor".into(),
        join(texts.iter().map(|t| t.predictor_label.clone()).collect()),
    );
    m.insert("freq_bits".into(), first.predictor.precision().to_string());
    m.insert(
        "alpha_grid".into(),
        join(config.alphas.iter().map(f64::to_string).collect()),
    );
    m.insert(
        "coders".into(),
        join(config.coders.iter().map(CoderSpec::id).collect()),
    );
    for c in &config.coders {
        match *c {
            CoderSpec::Ac { precision } => {
                m.insert("ac_precision".into(), precision.to_string());
            }
            CoderSpec::Rans {
                state_bits,
                renorm_bits,
                ..
            } => {
                m.insert("rans_state_bits".into(), state_bits.to_string());
                m.insert("rans_renorm_bits".into(), renorm_bits.to_string());
            }
            CoderSpec::DeflateFlush { level } => {
                m.insert("deflate_level".into(), level.to_string());
                m.insert(
                    "deflate_framing".into(),
                    "raw deflate bytes between sync flushes".into(),
                );
            }
            _ => {}
        }
    }
    let ks: Vec<String> = config
        .coders
        .iter()
        .filter_map(|c| match c {
            CoderSpec::Rans { block, .. } => Some(block.to_string()),
            _ => None,
        })
        .collect();
    if !ks.is_empty() {
        m.insert("rans_blocks".into(), join(ks));
    }
    m.insert("percentile".into(), "nearest-rank".into());
    m.insert("stable_rule".into(), "lambda*bpc < C".into());
    m
}

fn write_metadata(out: &mut String, results: &SweepResults) {
    for (k, v) in &results.metadata {
        let _ = writeln!(out, "# {k}={v}");
    }
    for (text, bpc) in &results.shannon_bpc {
        let _ = writeln!(out, "# shannon_bpc[{text}]={bpc:.9}");
    }
    for f in &results.failures {
        let _ = writeln!(
            out,
            "# failed[{}][{}]={}",
            f.text,
            f.coder,
            f.reason.replace('\n', " ")
        );
    }
}

pub fn bits_csv(results: &SweepResults) -> String {
    let mut out = String::new();
    write_metadata(&mut out, results);
    out.push_str(BITS_CSV_HEADER);
    out.push('\n');
    for r in &results.bits {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.3}",
            r.text, r.coder, r.bits_per_token, r.bpc, r.overhead_pct
        );
    }
    out
}

pub fn delays_csv(results: &SweepResults) -> String {
    let mut out = String::new();
    write_metadata(&mut out, results);
    out.push_str(DELAYS_CSV_HEADER);
    out.push('\n');
    for r in &results.runs {
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6},{}",
            r.text, r.coder, r.alpha, r.c_bps, r.mean_delay, r.p95_delay, r.stable
        );
    }
    out
}

/// Per-token delay dump for every cell that kept its records.
pub fn delay_dump_csv(results: &SweepResults) -> String {
    let mut out = String::from("text,");
    out.push_str(channel::DELAY_CSV_HEADER);
    out.push('\n');
    for r in &results.runs {
        for rec in r.records.iter().flatten() {
            let _ = writeln!(
                out,
                "{},{}",
                r.text,
                channel::delay_csv_line(&r.coder, r.alpha, rec)
            );
        }
    }
    out
}

/// A parsed result CSV: metadata comments, header, and rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub metadata: BTreeMap<String, String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self> {
        let mut table = Table::default();
        for line in text.lines() {
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.trim().split_once('=') {
                    table.metadata.insert(k.to_string(), v.to_string());
                }
            } else if line.trim().is_empty() {
                continue;
            } else if table.columns.is_empty() {
                table.columns = line.split(',').map(str::to_string).collect();
            } else {
                let row: Vec<String> = line.split(',').map(str::to_string).collect();
                if row.len() != table.columns.len() {
                    return Err(Error::Format(format!(
                        "row has {} fields, header has {}",
                        row.len(),
                        table.columns.len()
                    )));
                }
                table.rows.push(row);
            }
        }
        if table.columns.is_empty() {
            return Err(Error::Format("no header line".into()));
        }
        if table.rows.is_empty() {
            return Err(Error::Format("no data rows".into()));
        }
        Ok(table)
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Format(format!("missing column `{name}`")))
    }
}

/// Plain-text summary of `bits.csv` and, optionally, `delays.csv`.
pub fn render_report(bits: &Table, delays: Option<&Table>) -> Result<String> {
    let (t, c, bpt, bpc) = (
        bits.column("text")?,
        bits.column("coder")?,
        bits.column("bits_per_token")?,
        bits.column("bpc")?,
    );
    let num = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| Error::Format(format!("not a number: `{s}`")))
    };
    let mut out = String::new();
    let mut texts: Vec<&str> = Vec::new();
    for row in &bits.rows {
        if !texts.contains(&row[t].as_str()) {
            texts.push(&row[t]);
        }
    }
    for text in texts {
        let rows: Vec<&Vec<String>> = bits.rows.iter().filter(|r| r[t] == text).collect();
        let shannon = match rows.iter().find(|r| r[c] == "shannon") {
            Some(r) => num(&r[bpc])?,
            None => bits
                .metadata
                .get(&format!("shannon_bpc[{text}]"))
                .ok_or_else(|| Error::Format(format!("no Shannon baseline for `{text}`")))
                .and_then(|v| num(v))?,
        };
        let _ = writeln!(out, "{text}");
        let _ = writeln!(
            out,
            "  {:<18} {:>10} {:>9} {:>10}",
            "coder", "bits/tok", "bpc", "overhead%"
        );
        for r in rows {
            let b = num(&r[bpc])?;
            let _ = writeln!(
                out,
                "  {:<18} {:>10.3} {:>9.3} {:>10.1}",
                r[c],
                num(&r[bpt])?,
                b,
                100.0 * (b / shannon - 1.0)
            );
        }
        if let Some(d) = delays {
            let (dt, dc, da, dcb, dm, dp, ds) = (
                d.column("text")?,
                d.column("coder")?,
                d.column("alpha")?,
                d.column("C_bps")?,
                d.column("mean_delay_s")?,
                d.column("p95_delay_s")?,
                d.column("stable")?,
            );
            let _ = writeln!(
                out,
                "  {:<18} {:>6} {:>9} {:>11} {:>11}",
                "coder", "alpha", "C bps", "mean s", "p95 s"
            );
            for r in d.rows.iter().filter(|r| r[dt] == text) {
                let stable = r[ds] == "true";
                let fmt = |v: f64| {
                    if stable {
                        format!("{v:.3}")
                    } else {
                        "unstable".to_string()
                    }
                };
                let _ = writeln!(
                    out,
                    "  {:<18} {:>6} {:>9.2} {:>11} {:>11}",
                    r[dc],
                    r[da],
                    num(&r[dcb])?,
                    fmt(num(&r[dm])?),
                    fmt(num(&r[dp])?)
                );
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_examples() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 95.0).unwrap(), 95.0);
        assert_eq!(percentile(&v, 0.0).unwrap(), 1.0);
        assert_eq!(percentile(&v, 100.0).unwrap(), 100.0);
        assert_eq!(percentile(&[2.5; 7], 95.0).unwrap(), 2.5);
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 50.0).unwrap(), 2.0);
        assert!(percentile(&[], 95.0).is_err());
    }

    #[test]
    fn pareto_examples() {
        assert_eq!(pareto_frontier(&[(1.0, 1.0), (2.0, 2.0)]), vec![0]);
        assert_eq!(
            pareto_frontier(&[(1.0, 3.0), (2.0, 2.0), (3.0, 1.0)]),
            vec![0, 1, 2]
        );
        assert_eq!(
            pareto_frontier(&[(1.0, 1.0), (1.0, 1.0), (1.0, 2.0)]),
            vec![0, 1]
        );
    }

    fn sample() -> SweepText {
        let text = b"the cat sat on the mat and the cat saw the rat on the mat. ".repeat(20);
        SweepText::from_text(
            "cats",
            &text,
            TokenizerSpec::Word,
            CharRate::per_second(20).unwrap(),
            PredictorKind::NgramAdaptive {
                order: 2,
                delta: 0.5,
            },
            14,
            300,
        )
        .unwrap()
    }

    #[test]
    fn sweep_rows_and_overhead() {
        let config = SweepConfig {
            coders: vec![
                CoderSpec::Shannon,
                CoderSpec::HuffmanExact,
                CoderSpec::rans(4),
            ],
            alphas: vec![1.0, 2.0],
            ..SweepConfig::default()
        };
        let res = run_sweep(&[sample()], &config).unwrap();
        assert_eq!(res.bits.len(), 3);
        assert_eq!(res.runs.len(), 6);
        let sh = res.shannon_bpc["cats"];
        for r in &res.runs {
            assert_eq!(r.c_bps, r.alpha * 20.0 * sh);
            assert!((r.overhead_pct - 100.0 * (r.bpc / sh - 1.0)).abs() < 1e-9);
            assert!((r.source_rate(20.0) - 20.0 * r.bpc).abs() < 1e-12);
        }
        // Shannon exactly at its source rate is not stable.
        let sh1 = res
            .runs
            .iter()
            .find(|r| r.coder == "shannon" && r.alpha == 1.0)
            .unwrap();
        assert!(!sh1.stable);
        let csv = bits_csv(&res);
        assert!(csv.contains("# alpha_grid=1;2\n"));
        assert!(csv.contains("\ntext,coder,bits_per_token,bpc,overhead_pct\n"));
    }

    #[test]
    fn shannon_is_measured_even_when_not_listed() {
        let config = SweepConfig {
            coders: vec![CoderSpec::HuffmanExact],
            alphas: vec![1.5],
            ..SweepConfig::default()
        };
        let res = run_sweep(&[sample()], &config).unwrap();
        assert_eq!(res.bits.len(), 1);
        assert!(res.shannon_bpc["cats"] > 0.0);
        assert!(bits_csv(&res).contains("# shannon_bpc[cats]="));
    }

    #[test]
    fn csv_roundtrip_and_report() {
        let config = SweepConfig {
            coders: vec![CoderSpec::Shannon, CoderSpec::ac()],
            alphas: vec![0.8, 2.0],
            ..SweepConfig::default()
        };
        let res = run_sweep(&[sample()], &config).unwrap();
        let bits = Table::parse(&bits_csv(&res)).unwrap();
        let delays = Table::parse(&delays_csv(&res)).unwrap();
        assert_eq!(bits.metadata["lambda_cps"], "20");
        let report = render_report(&bits, Some(&delays)).unwrap();
        assert!(report.contains("unstable"));
        assert!(report.contains("ac-p64"));
        assert!(Table::parse("# only=meta\n").is_err());
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            SweepConfig {
                alphas: vec![],
                ..SweepConfig::default()
            },
            SweepConfig {
                alphas: vec![-1.0],
                ..SweepConfig::default()
            },
            SweepConfig {
                jobs: Some(0),
                ..SweepConfig::default()
            },
        ];
        for c in bad {
            assert!(run_sweep(&[sample()], &c).is_err());
        }
    }
}
