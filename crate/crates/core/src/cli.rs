//! Command-line front end.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::channel::{self, ChannelSpec};
use crate::coder::{encode_stream, CoderSpec, DEFAULT_RANS_RENORM_BITS, RANS_STATE_BITS};
use crate::config::Config;
use crate::container::{self, PredictorHeader, PredictorSource};
use crate::corpus::{tokenize, CharRate, TokenStream, TokenizerSpec};
use crate::error::Error;
use crate::experiment::{self, SweepConfig, SweepText, Table, DEFAULT_ALPHAS, DEFAULT_TOKENS};
use crate::pmf::DEFAULT_PRECISION;
use crate::predictor::{Predictor, PredictorKind, PredictorSpec, TraceFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "streamcode",
    version,
    about = "Streaming predict-then-code compression simulator"
)]
struct Cli {
    /// Flat key=value file supplying defaults for any option.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tokenize a text and print one line per token with its arrival time.
    Tokenize(TokenizeArgs),
    /// Encode a text (or a trace's text) into a container file.
    Encode(EncodeArgs),
    /// Decode a container back into text.
    Decode(DecodeArgs),
    /// Serve one coder over one channel rate and dump per-token delays.
    Simulate(SimulateArgs),
    /// Sweep coders over the alpha grid and write bits.csv and delays.csv.
    Sweep(SweepArgs),
    /// Summarize sweep CSVs as text tables.
    Report(ReportArgs),
}

#[derive(Debug, Args, Clone, Default)]
struct SourceArgs {
    /// Input text file (repeatable for sweep).
    #[arg(long)]
    input: Vec<PathBuf>,
    /// Probability trace to replay (repeatable for sweep).
    #[arg(long)]
    trace: Vec<PathBuf>,
    /// char or word.
    #[arg(long)]
    tokenizer: Option<TokenizerSpec>,
    /// Source rate in characters per second.
    #[arg(long, value_parser = parse_cps)]
    cps: Option<CharRate>,
    /// Token budget.
    #[arg(long)]
    tokens: Option<usize>,
}

#[derive(Debug, Args, Clone, Default)]
struct ModelArgs {
    /// uniform, unigram or ngram.
    #[arg(long)]
    predictor: Option<String>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    /// PMF quantization precision F in bits.
    #[arg(long = "freq-bits")]
    freq_bits: Option<u32>,
}

#[derive(Debug, Args, Clone, Default)]
struct CoderArgs {
    /// Coder id, e.g. ac, rans, rans-k8, huffman-exact, deflate.
    #[arg(long)]
    coder: Option<String>,
    /// rANS block size for a bare `rans` coder.
    #[arg(long = "K", alias = "k")]
    k: Option<usize>,
    /// Arithmetic coder register precision P (32 or 64).
    #[arg(long)]
    precision: Option<u32>,
}

#[derive(Debug, Args)]
struct TokenizeArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EncodeArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    coder: CoderArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    /// Container produced by `encode`.
    #[arg(long)]
    input: PathBuf,
    /// Trace the container was encoded with, if any.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    coder: CoderArgs,
    /// Provisioning ratio: C = alpha * lambda * Shannon bpc.
    #[arg(long)]
    alpha: Option<f64>,
    /// Channel rate in bits per second; overrides --alpha.
    #[arg(long = "rate-bps")]
    rate_bps: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    coder: CoderArgs,
    /// Comma-separated coder ids.
    #[arg(long)]
    coders: Option<String>,
    /// Comma-separated alpha values.
    #[arg(long = "alpha-grid")]
    alpha_grid: Option<String>,
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Also write per-token delays to delays_per_token.csv.
    #[arg(long = "dump-delays")]
    dump_delays: bool,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    bits: PathBuf,
    #[arg(long)]
    delays: Option<PathBuf>,
}

fn parse_cps(s: &str) -> std::result::Result<CharRate, String> {
    s.parse::<CharRate>().map_err(|e| e.to_string())
}

/// Errors the user can fix by changing the invocation.
#[derive(Debug)]
struct Usage(String);

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { ref source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                Failure::Usage(e.to_string())
            }
            Error::InvalidParameter(_) | Error::Unknown { .. } | Error::PrecisionTooLow { .. } => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Runtime(other),
        }
    }
}

impl From<Usage> for Failure {
    fn from(u: Usage) -> Self {
        Failure::Usage(u.0)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Runs the CLI with explicit arguments and streams; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn std::io::Write, err: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_USAGE;
            }
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
    };
    match dispatch(cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn std::io::Write, err: &mut dyn std::io::Write) -> CliResult<()> {
    let config = match &cli.config {
        Some(p) => Config::load(p).map_err(|e| match e {
            Error::Format(m) => Failure::Usage(format!("{}: {m}", p.display())),
            other => Failure::from(other),
        })?,
        None => Config::default(),
    };
    match cli.command {
        Command::Tokenize(a) => cmd_tokenize(a, &config, out),
        Command::Encode(a) => cmd_encode(a, &config, err),
        Command::Decode(a) => cmd_decode(a, out),
        Command::Simulate(a) => cmd_simulate(a, &config, out, err),
        Command::Sweep(a) => cmd_sweep(a, &config, err),
        Command::Report(a) => cmd_report(a, out),
    }
}

fn cfg<T: std::str::FromStr>(config: &Config, key: &str) -> CliResult<Option<T>>
where
    T::Err: std::fmt::Display,
{
    config
        .parsed(key)
        .map_err(|e| Failure::Usage(e.to_string()))
}

/// Resolved input options, flags first, then the config file, then defaults.
struct Resolved {
    inputs: Vec<PathBuf>,
    traces: Vec<PathBuf>,
    tokenizer: TokenizerSpec,
    cps: CharRate,
    tokens: Option<usize>,
}

fn resolve_source(a: &SourceArgs, config: &Config) -> CliResult<Resolved> {
    let paths = |flag: &[PathBuf], key: &str| -> Vec<PathBuf> {
        if flag.is_empty() {
            config.list(key).into_iter().map(PathBuf::from).collect()
        } else {
            flag.to_vec()
        }
    };
    let cps = match a.cps {
        Some(c) => c,
        None => match config.get("cps") {
            Some(v) => v
                .parse()
                .map_err(|e: Error| Failure::Usage(e.to_string()))?,
            None => CharRate::per_second(experiment::DEFAULT_CPS)?,
        },
    };
    Ok(Resolved {
        inputs: paths(&a.input, "input"),
        traces: paths(&a.trace, "trace"),
        tokenizer: match a.tokenizer {
            Some(t) => t,
            None => cfg(config, "tokenizer")?.unwrap_or(TokenizerSpec::Char),
        },
        cps,
        tokens: a.tokens.or(cfg(config, "tokens")?),
    })
}

fn resolve_model(a: &ModelArgs, config: &Config) -> CliResult<(PredictorKind, u32)> {
    let name = a
        .predictor
        .clone()
        .or_else(|| config.get("predictor").map(str::to_string))
        .unwrap_or_else(|| "ngram".into());
    let order = a.order.or(cfg(config, "order")?).unwrap_or(3);
    let delta = a.delta.or(cfg(config, "delta")?).unwrap_or(0.1);
    let f = a
        .freq_bits
        .or(cfg(config, "freq_bits")?)
        .unwrap_or(DEFAULT_PRECISION);
    let kind = match name.as_str() {
        "uniform" => PredictorKind::Uniform,
        "unigram" => PredictorKind::UnigramAdaptive { delta },
        "ngram" => PredictorKind::NgramAdaptive { order, delta },
        other => return Err(Usage(format!("unknown predictor `{other}`")).into()),
    };
    Ok((kind, f))
}

/// Parses a coder id; bare `rans` takes `--K` and `ac` takes `--precision`.
fn resolve_coder(id: &str, a: &CoderArgs, config: &Config) -> CliResult<CoderSpec> {
    let k = a.k.or(cfg(config, "k")?);
    let p = a.precision.or(cfg(config, "precision")?);
    let spec = match id {
        "rans" => CoderSpec::Rans {
            block: k.unwrap_or(16),
            state_bits: RANS_STATE_BITS,
            renorm_bits: DEFAULT_RANS_RENORM_BITS,
        },
        "ac" => match p {
            Some(precision) => CoderSpec::Ac { precision },
            None => CoderSpec::ac(),
        },
        other => other.parse()?,
    };
    spec.validate()?;
    Ok(spec)
}

fn single_coder(a: &CoderArgs, config: &Config) -> CliResult<CoderSpec> {
    let id = a
        .coder
        .clone()
        .or_else(|| config.get("coder").map(str::to_string))
        .unwrap_or_else(|| "ac".into());
    resolve_coder(&id, a, config)
}

/// One stream plus the predictor that scores it.
struct Loaded {
    name: String,
    stream: TokenStream,
    predictor: Predictor,
    header: PredictorHeader,
    label: String,
}

fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| Failure::from(Error::io(path, e)))
}

fn load_text(path: &Path, r: &Resolved, kind: &PredictorKind, f: u32) -> CliResult<Loaded> {
    let bytes = read_file(path)?;
    let full = tokenize(&bytes, r.tokenizer, r.cps)?;
    let stream = match r.tokens {
        Some(n) => full.prefix(n),
        None => full,
    };
    let spec = PredictorSpec::new(kind.clone(), stream.vocab_size()).with_precision(f);
    Ok(Loaded {
        name: experiment::text_name(path),
        predictor: Predictor::new(&spec)?,
        header: PredictorHeader::from_kind(kind, f),
        label: spec.label(),
        stream,
    })
}

fn load_trace(path: &Path, r: &Resolved, f: u32) -> CliResult<Loaded> {
    if !path.exists() {
        return Err(Usage(format!("{}: no such file", path.display())).into());
    }
    let trace = Arc::new(TraceFile::load(path)?);
    let full = trace.token_stream(r.cps)?;
    let stream = match r.tokens {
        Some(n) if n > trace.len() => {
            return Err(Failure::Runtime(Error::TraceExhausted {
                position: trace.len(),
                len: trace.len(),
            }))
        }
        Some(n) => full.prefix(n),
        None => full,
    };
    let mut header =
        PredictorHeader::from_kind(&PredictorKind::TraceReplay { path: path.into() }, f);
    header.trace_model = Some(trace.model.clone());
    Ok(Loaded {
        name: experiment::text_name(path),
        label: format!("trace({})", trace.model),
        predictor: Predictor::from_trace(trace, f)?,
        header,
        stream,
    })
}

fn load_one(r: &Resolved, kind: &PredictorKind, f: u32) -> CliResult<Loaded> {
    match (r.inputs.as_slice(), r.traces.as_slice()) {
        ([p], []) => load_text(p, r, kind, f),
        ([], [t]) => load_trace(t, r, f),
        _ => Err(Usage("give exactly one --input or --trace".into()).into()),
    }
}

fn write_output(path: Option<&Path>, data: &[u8], out: &mut dyn std::io::Write) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, data).map_err(|e| Failure::Runtime(Error::io(p, e))),
        None => out
            .write_all(data)
            .map_err(|e| Failure::Runtime(Error::io("<stdout>", e))),
    }
}

fn cmd_tokenize(a: TokenizeArgs, config: &Config, out: &mut dyn std::io::Write) -> CliResult<()> {
    let r = resolve_source(&a.source, config)?;
    let loaded = load_one(&r, &PredictorKind::Uniform, DEFAULT_PRECISION)?;
    let s = &loaded.stream;
    let mut text = String::new();
    let _ = writeln!(text, "# tokenizer={}", s.tokenizer());
    let _ = writeln!(text, "# cps={}", s.char_rate());
    let _ = writeln!(text, "# char_convention={}", s.convention().name());
    let _ = writeln!(text, "# vocab_size={}", s.vocab_size());
    text.push_str("index\ttoken\tsurface\tchars\tprefix_chars\tt_arr\n");
    for (i, e) in s.events().iter().enumerate() {
        let surface = s
            .surface(i)
            .map(String::from_utf8_lossy)
            .unwrap_or_default();
        let _ = writeln!(
            text,
            "{i}\t{}\t{}\t{}\t{}\t{:.6}",
            e.token,
            serde_json::to_string(&surface).unwrap_or_default(),
            e.char_count,
            e.prefix_chars,
            e.arrival_secs()
        );
    }
    write_output(a.out.as_deref(), text.as_bytes(), out)
}

fn cmd_encode(a: EncodeArgs, config: &Config, err: &mut dyn std::io::Write) -> CliResult<()> {
    let r = resolve_source(&a.source, config)?;
    let (kind, f) = resolve_model(&a.model, config)?;
    let coder = single_coder(&a.coder, config)?;
    let mut loaded = load_one(&r, &kind, f)?;
    let bytes = container::encode(&loaded.stream, &mut loaded.predictor, loaded.header, coder)?;
    fs::write(&a.out, &bytes).map_err(|e| Failure::Runtime(Error::io(&a.out, e)))?;
    let _ = writeln!(
        err,
        "{}: {} tokens, {} chars, {} bytes with {coder} ({})",
        loaded.name,
        loaded.stream.len(),
        loaded.stream.total_chars(),
        bytes.len(),
        loaded.label
    );
    Ok(())
}

fn cmd_decode(a: DecodeArgs, out: &mut dyn std::io::Write) -> CliResult<()> {
    let bytes = read_file(&a.input)?;
    let source = match &a.trace {
        Some(p) => {
            if !p.exists() {
                return Err(Usage(format!("{}: no such file", p.display())).into());
            }
            PredictorSource::Trace(Arc::new(TraceFile::load(p)?))
        }
        None => {
            let (header, _) = container::read_header(&bytes).map_err(Failure::Runtime)?;
            if header.predictor.kind == "trace" {
                return Err(
                    Usage("container was encoded from a trace; pass --trace".into()).into(),
                );
            }
            PredictorSource::Header
        }
    };
    let stream = container::decode(&bytes, source).map_err(Failure::Runtime)?;
    write_output(a.out.as_deref(), &stream.detokenize()?, out)
}

fn cmd_simulate(
    a: SimulateArgs,
    config: &Config,
    out: &mut dyn std::io::Write,
    err: &mut dyn std::io::Write,
) -> CliResult<()> {
    let r = resolve_source(&a.source, config)?;
    let (kind, f) = resolve_model(&a.model, config)?;
    let coder = single_coder(&a.coder, config)?;
    let mut loaded = load_one(&r, &kind, f)?;
    let mut coded = encode_stream(
        &loaded.stream,
        &mut loaded.predictor,
        &[CoderSpec::Shannon, coder],
    )?;
    let coded_stream = coded.pop().expect("two coders");
    let shannon = coded.pop().expect("two coders");
    let chars = loaded.stream.total_chars() as f64;
    let bpc_sh = shannon.total_bits() / chars;
    let lambda = r.cps.as_f64();
    let alpha = a.alpha.or(cfg(config, "alpha")?).unwrap_or(2.0);
    let rate = a.rate_bps.unwrap_or(alpha * lambda * bpc_sh);
    let records = channel::delays(
        loaded.stream.events(),
        &coded_stream,
        ChannelSpec::new(rate)?,
    )?;
    let alpha_eff = rate / (lambda * bpc_sh);
    let mut text = String::new();
    let _ = writeln!(text, "# coder={coder}");
    let _ = writeln!(text, "# predictor={}", loaded.label);
    let _ = writeln!(text, "# lambda_cps={}", r.cps);
    let _ = writeln!(text, "# freq_bits={f}");
    let _ = writeln!(text, "# shannon_bpc={bpc_sh:.9}");
    let _ = writeln!(text, "# C_bps={rate}");
    text.push_str(channel::DELAY_CSV_HEADER);
    text.push('\n');
    for rec in &records {
        text.push_str(&channel::delay_csv_line(&coder.id(), alpha_eff, rec));
        text.push('\n');
    }
    write_output(a.out.as_deref(), text.as_bytes(), out)?;
    let mean = channel::mean_delay(&records).unwrap_or(0.0);
    let p95 = experiment::percentile_delay(&records, 95.0).unwrap_or(0.0);
    let bpc = coded_stream.total_bits() / chars;
    let _ = writeln!(
        err,
        "{coder}: {bpc:.4} bpc (Shannon {bpc_sh:.4}), C = {rate:.3} bps, mean delay {mean:.4} s, p95 {p95:.4} s{}",
        if lambda * bpc < rate { "" } else { " [unstable]" }
    );
    Ok(())
}

fn cmd_sweep(a: SweepArgs, config: &Config, err: &mut dyn std::io::Write) -> CliResult<()> {
    let r = resolve_source(&a.source, config)?;
    let (kind, f) = resolve_model(&a.model, config)?;
    if r.inputs.is_empty() && r.traces.is_empty() {
        return Err(Usage("sweep needs at least one --input or --trace".into()).into());
    }
    let coder_ids: Vec<String> = match &a.coders {
        Some(list) => list
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect(),
        None => config.list("coders"),
    };
    let coders = if coder_ids.is_empty() {
        CoderSpec::default_set()
    } else {
        coder_ids
            .iter()
            .map(|id| resolve_coder(id, &a.coder, config))
            .collect::<CliResult<Vec<_>>>()?
    };
    let alphas: Vec<f64> = match &a.alpha_grid {
        Some(g) => parse_alphas(g)?,
        None => match config.get("alpha_grid") {
            Some(g) => parse_alphas(g)?,
            None => DEFAULT_ALPHAS.to_vec(),
        },
    };
    let tokens = r.tokens.unwrap_or(DEFAULT_TOKENS);
    let mut texts = Vec::new();
    for p in &r.inputs {
        let bytes = read_file(p)?;
        texts.push(SweepText::from_text(
            &experiment::text_name(p),
            &bytes,
            r.tokenizer,
            r.cps,
            kind.clone(),
            f,
            tokens,
        )?);
    }
    for p in &r.traces {
        if !p.exists() {
            return Err(Usage(format!("{}: no such file", p.display())).into());
        }
        texts.push(SweepText::load_trace(p, r.cps, f, tokens).map_err(Failure::Runtime)?);
    }
    let jobs = a.jobs.or(cfg(config, "jobs")?);
    let mut metadata = std::collections::BTreeMap::new();
    let join = |v: &[PathBuf]| {
        v.iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>()
            .join(";")
    };
    if !r.inputs.is_empty() {
        metadata.insert("inputs".to_string(), join(&r.inputs));
    }
    if !r.traces.is_empty() {
        metadata.insert("traces".to_string(), join(&r.traces));
    }
    let sweep = SweepConfig {
        coders,
        alphas,
        char_rate: r.cps,
        tokens,
        jobs,
        keep_delays: a.dump_delays || cfg(config, "dump_delays")?.unwrap_or(false),
        metadata,
    };
    let results = experiment::run_sweep(&texts, &sweep)?;
    let out_dir = a
        .out_dir
        .clone()
        .or_else(|| config.get("out_dir").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir).map_err(|e| Failure::Runtime(Error::io(&out_dir, e)))?;
    let write = |name: &str, body: String| -> CliResult<()> {
        let p = out_dir.join(name);
        fs::write(&p, body).map_err(|e| Failure::Runtime(Error::io(&p, e)))
    };
    write("bits.csv", experiment::bits_csv(&results))?;
    write("delays.csv", experiment::delays_csv(&results))?;
    if sweep.keep_delays {
        write("delays_per_token.csv", experiment::delay_dump_csv(&results))?;
    }
    for fail in &results.failures {
        let _ = writeln!(
            err,
            "warning: {} / {}: {}",
            fail.text, fail.coder, fail.reason
        );
    }
    let _ = writeln!(
        err,
        "wrote {} bit rows and {} delay rows to {}",
        results.bits.len(),
        results.runs.len(),
        out_dir.display()
    );
    Ok(())
}

fn parse_alphas(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|a| a.is_finite() && *a > 0.0)
                .ok_or_else(|| Failure::Usage(format!("bad alpha `{t}`")))
        })
        .collect()
}

fn cmd_report(a: ReportArgs, out: &mut dyn std::io::Write) -> CliResult<()> {
    let load = |p: &Path| -> CliResult<Table> {
        let bytes = read_file(p)?;
        Table::parse(&String::from_utf8_lossy(&bytes))
            .map_err(|e| Failure::Runtime(Error::Format(format!("{}: {e}", p.display()))))
    };
    let bits = load(&a.bits)?;
    let delays = a.delays.as_deref().map(load).transpose()?;
    let text = experiment::render_report(&bits, delays.as_ref()).map_err(Failure::Runtime)?;
    write_output(None, text.as_bytes(), out)
}
