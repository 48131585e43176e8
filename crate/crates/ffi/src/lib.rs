//! C ABI for the streamcode simulator.
//!
//! Objects cross the boundary as opaque handles that the caller frees with
//! the matching `_free` function. Fallible calls return a
//! [`StreamcodeStatus`]; on failure the message is available from
//! [`streamcode_last_error`] on the same thread until the next failure.
//! Panics are caught at the boundary and reported as
//! `STREAMCODE_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use streamcode::channel::{self, ChannelSpec};
use streamcode::coder::{encode_stream, CodedStream, CoderSpec};
use streamcode::container::{self, PredictorHeader, PredictorSource};
use streamcode::corpus::{CharRate, TokenizerSpec};
use streamcode::experiment::{self, SweepConfig, SweepText};
use streamcode::pmf::DEFAULT_PRECISION;
use streamcode::predictor::{PredictorKind, TraceFile};
use streamcode::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamcodeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Corrupt = 5,
    Runtime = 6,
    Panic = 7,
}

/// A token stream with the predictor that scores it.
pub struct StreamcodeSource {
    text: SweepText,
    header: PredictorHeader,
}

/// The output of one coder over one source.
pub struct StreamcodeCoded {
    coded: CodedStream,
}

/// Bytes owned by the library; release with [`streamcode_buffer_free`].
#[repr(C)]
#[derive(Debug)]
pub struct StreamcodeBuffer {
    pub data: *mut u8,
    pub len: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct StreamcodeTextOptions {
    /// `"char"` or `"word"`; NULL selects `"char"`.
    pub tokenizer: *const c_char,
    /// Source rate in characters per second.
    pub cps: u64,
    /// `"uniform"`, `"unigram"` or `"ngram"`; NULL selects `"ngram"`.
    pub predictor: *const c_char,
    pub order: u32,
    pub delta: f64,
    /// PMF quantization precision F.
    pub freq_bits: u32,
    /// Keep at most this many tokens; 0 keeps all.
    pub max_tokens: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct StreamcodeCodedStats {
    pub tokens: usize,
    pub units: usize,
    pub total_bits: f64,
    pub bits_per_token: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct StreamcodeDelaySummary {
    pub rate_bps: f64,
    pub mean_delay_s: f64,
    pub p95_delay_s: f64,
    pub max_delay_s: f64,
    /// 1 when the coder's bit rate is below the channel rate.
    pub stable: i32,
}

struct Failure {
    status: StreamcodeStatus,
    message: String,
}

impl Failure {
    fn new(status: StreamcodeStatus, message: impl Into<String>) -> Self {
        Failure {
            status,
            message: message.into(),
        }
    }

    fn null(what: &str) -> Self {
        Failure::new(StreamcodeStatus::NullPointer, format!("`{what}` is NULL"))
    }

    fn invalid(message: impl Into<String>) -> Self {
        Failure::new(StreamcodeStatus::InvalidArgument, message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        use StreamcodeStatus as S;
        let status = match &e {
            Error::Empty(_)
            | Error::InvalidParameter(_)
            | Error::Unknown { .. }
            | Error::NotRepresentable { .. }
            | Error::TokenOutOfRange { .. }
            | Error::PrecisionTooLow { .. }
            | Error::NotNormalized { .. } => S::InvalidArgument,
            Error::Io { .. } => S::Io,
            Error::TraceFormat { .. } | Error::Format(_) => S::Format,
            Error::Corrupt { .. } => S::Corrupt,
            Error::ZeroFrequency { .. }
            | Error::TraceExhausted { .. }
            | Error::NoBitstream(_)
            | Error::Codec(_) => S::Runtime,
        };
        Failure::new(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> StreamcodeStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| {
        Err(Failure::new(
            StreamcodeStatus::Panic,
            "panic inside streamcode",
        ))
    });
    match outcome {
        Ok(()) => StreamcodeStatus::Ok,
        Err(failure) => {
            set_last_error(failure.message);
            failure.status
        }
    }
}

unsafe fn opt_str<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Some)
        .map_err(|_| Failure::invalid(format!("`{what}` is not valid UTF-8")))
}

unsafe fn req_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    opt_str(p, what)?.ok_or_else(|| Failure::null(what))
}

unsafe fn req_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::null(what));
    }
    out.write(value);
    Ok(())
}

fn into_buffer(bytes: Vec<u8>) -> StreamcodeBuffer {
    let boxed = bytes.into_boxed_slice();
    let len = boxed.len();
    StreamcodeBuffer {
        data: Box::into_raw(boxed).cast::<u8>(),
        len,
    }
}

fn budget(max_tokens: usize) -> usize {
    if max_tokens == 0 {
        usize::MAX
    } else {
        max_tokens
    }
}

/// Static, NUL-terminated version string.
#[no_mangle]
pub extern "C" fn streamcode_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failure on the same thread.
#[no_mangle]
pub extern "C" fn streamcode_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |c| c.as_ptr())
    })
}

/// Defaults: char tokenizer, 20 chars/s, order-3 n-gram with delta 0.1,
/// F = 14, every token.
#[no_mangle]
pub extern "C" fn streamcode_text_options_default() -> StreamcodeTextOptions {
    StreamcodeTextOptions {
        tokenizer: std::ptr::null(),
        cps: experiment::DEFAULT_CPS,
        predictor: std::ptr::null(),
        order: 3,
        delta: 0.1,
        freq_bits: DEFAULT_PRECISION,
        max_tokens: 0,
    }
}

/// Tokenizes `len` bytes of `text` and attaches a predictor.
///
/// # Safety
/// `text` must point to `len` readable bytes. `options` may be NULL or must
/// point to a valid options struct whose strings are NUL-terminated.
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn streamcode_source_from_text(
    text: *const u8,
    len: usize,
    options: *const StreamcodeTextOptions,
    out: *mut *mut StreamcodeSource,
) -> StreamcodeStatus {
    guard(|| {
        if text.is_null() {
            return Err(Failure::null("text"));
        }
        let bytes = std::slice::from_raw_parts(text, len);
        let opts = options
            .as_ref()
            .copied()
            .unwrap_or_else(|| streamcode_text_options_default());
        let tokenizer: TokenizerSpec = opt_str(opts.tokenizer, "tokenizer")?
            .unwrap_or("char")
            .parse()?;
        let kind = match opt_str(opts.predictor, "predictor")?.unwrap_or("ngram") {
            "uniform" => PredictorKind::Uniform,
            "unigram" => PredictorKind::UnigramAdaptive { delta: opts.delta },
            "ngram" => PredictorKind::NgramAdaptive {
                order: opts.order as usize,
                delta: opts.delta,
            },
            other => return Err(Failure::invalid(format!("unknown predictor `{other}`"))),
        };
        let source = SweepText::from_text(
            "text",
            bytes,
            tokenizer,
            CharRate::per_second(opts.cps)?,
            kind.clone(),
            opts.freq_bits,
            budget(opts.max_tokens),
        )?;
        let handle = Box::new(StreamcodeSource {
            text: source,
            header: PredictorHeader::from_kind(&kind, opts.freq_bits),
        });
        write_out(out, Box::into_raw(handle), "out")
    })
}

/// Loads a probability trace and replays it as the predictor.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn streamcode_source_from_trace(
    path: *const c_char,
    cps: u64,
    freq_bits: u32,
    max_tokens: usize,
    out: *mut *mut StreamcodeSource,
) -> StreamcodeStatus {
    guard(|| {
        let path = Path::new(req_str(path, "path")?);
        let trace = Arc::new(TraceFile::load(path)?);
        let tokens = if max_tokens == 0 {
            trace.len()
        } else {
            max_tokens
        };
        let mut header = PredictorHeader::from_kind(
            &PredictorKind::TraceReplay { path: path.into() },
            freq_bits,
        );
        header.trace_model = Some(trace.model.clone());
        let text = SweepText::from_trace(
            &experiment::text_name(path),
            trace,
            CharRate::per_second(cps)?,
            freq_bits,
            tokens,
        )?;
        let handle = Box::new(StreamcodeSource { text, header });
        write_out(out, Box::into_raw(handle), "out")
    })
}

/// # Safety
/// `source` must be NULL or a handle from a `streamcode_source_from_*` call
/// that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn streamcode_source_free(source: *mut StreamcodeSource) {
    if !source.is_null() {
        drop(Box::from_raw(source));
    }
}

/// # Safety
/// `source` must be a live source handle; `tokens` and `chars` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn streamcode_source_counts(
    source: *const StreamcodeSource,
    tokens: *mut usize,
    chars: *mut u64,
) -> StreamcodeStatus {
    guard(|| {
        let s = &req_ref(source, "source")?.text.stream;
        write_out(tokens, s.len(), "tokens")?;
        write_out(chars, s.total_chars(), "chars")
    })
}

/// Shannon bits per character of the source under its predictor.
///
/// # Safety
/// `source` must be a live source handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn streamcode_shannon_bpc(
    source: *const StreamcodeSource,
    out: *mut f64,
) -> StreamcodeStatus {
    guard(|| {
        let src = req_ref(source, "source")?;
        let coded = encode_with(src, CoderSpec::Shannon)?;
        write_out(
            out,
            coded.total_bits() / src.text.stream.total_chars() as f64,
            "out",
        )
    })
}

fn encode_with(src: &StreamcodeSource, coder: CoderSpec) -> Result<CodedStream, Failure> {
    let mut predictor = src.text.predictor.clone();
    let mut coded = encode_stream(&src.text.stream, &mut predictor, &[coder])?;
    Ok(coded.remove(0))
}

/// Runs one coder (`"ac"`, `"rans-k16"`, `"huffman-exact"`, ...) over the
/// source.
///
/// # Safety
/// `source` must be a live source handle, `coder` a NUL-terminated string
/// and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn streamcode_encode(
    source: *const StreamcodeSource,
    coder: *const c_char,
    out: *mut *mut StreamcodeCoded,
) -> StreamcodeStatus {
    guard(|| {
        let src = req_ref(source, "source")?;
        let spec: CoderSpec = req_str(coder, "coder")?.parse()?;
        let coded = encode_with(src, spec)?;
        write_out(
            out,
            Box::into_raw(Box::new(StreamcodeCoded { coded })),
            "out",
        )
    })
}

/// # Safety
/// `coded` must be NULL or a live handle from [`streamcode_encode`].
#[no_mangle]
pub unsafe extern "C" fn streamcode_coded_free(coded: *mut StreamcodeCoded) {
    if !coded.is_null() {
        drop(Box::from_raw(coded));
    }
}

/// # Safety
/// `coded` must be a live coded handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn streamcode_coded_stats(
    coded: *const StreamcodeCoded,
    out: *mut StreamcodeCodedStats,
) -> StreamcodeStatus {
    guard(|| {
        let c = &req_ref(coded, "coded")?.coded;
        let stats = StreamcodeCodedStats {
            tokens: c.token_count,
            units: c.units.len(),
            total_bits: c.total_bits(),
            bits_per_token: c.bits_per_token(),
        };
        write_out(out, stats, "out")
    })
}

/// Serves `coded` over a channel of `rate_bps` bits per second.
///
/// When `delays` is non-NULL it receives one delay in seconds per token and
/// must hold at least `delays_len` doubles, with `delays_len` no smaller than
/// the token count.
///
/// # Safety
/// `source` and `coded` must be live handles, `coded` produced from
/// `source`. `delays` must be NULL or valid for `delays_len` writes and
/// `summary` must be writable.
#[no_mangle]
pub unsafe extern "C" fn streamcode_simulate(
    source: *const StreamcodeSource,
    coded: *const StreamcodeCoded,
    rate_bps: f64,
    delays: *mut f64,
    delays_len: usize,
    summary: *mut StreamcodeDelaySummary,
) -> StreamcodeStatus {
    guard(|| {
        let src = req_ref(source, "source")?;
        let c = &req_ref(coded, "coded")?.coded;
        if c.token_count != src.text.stream.len() {
            return Err(Failure::invalid(
                "coded stream does not belong to this source",
            ));
        }
        let records = channel::delays(src.text.stream.events(), c, ChannelSpec::new(rate_bps)?)?;
        if !delays.is_null() {
            if delays_len < records.len() {
                return Err(Failure::invalid(format!(
                    "delay buffer holds {delays_len} values, need {}",
                    records.len()
                )));
            }
            let dst = std::slice::from_raw_parts_mut(delays, records.len());
            for (d, r) in dst.iter_mut().zip(&records) {
                *d = r.delay;
            }
        }
        let bpc = c.total_bits() / src.text.stream.total_chars() as f64;
        let lambda = src.text.stream.char_rate().as_f64();
        let result = StreamcodeDelaySummary {
            rate_bps,
            mean_delay_s: channel::mean_delay(&records).unwrap_or(0.0),
            p95_delay_s: experiment::percentile_delay(&records, 95.0).unwrap_or(0.0),
            max_delay_s: records.iter().map(|r| r.delay).fold(0.0, f64::max),
            stable: i32::from(lambda * bpc < rate_bps),
        };
        write_out(summary, result, "summary")
    })
}

/// Encodes the source into a self-describing container.
///
/// # Safety
/// `source` must be a live source handle, `coder` a NUL-terminated string
/// and `out` writable. Free the result with [`streamcode_buffer_free`].
#[no_mangle]
pub unsafe extern "C" fn streamcode_container_encode(
    source: *const StreamcodeSource,
    coder: *const c_char,
    out: *mut StreamcodeBuffer,
) -> StreamcodeStatus {
    guard(|| {
        let src = req_ref(source, "source")?;
        let spec: CoderSpec = req_str(coder, "coder")?.parse()?;
        let mut predictor = src.text.predictor.clone();
        let bytes = container::encode(&src.text.stream, &mut predictor, src.header.clone(), spec)?;
        write_out(out, into_buffer(bytes), "out")
    })
}

/// Decodes a container back to the original text bytes. Containers built
/// from a trace need `trace_path`; otherwise pass NULL.
///
/// # Safety
/// `data` must point to `len` readable bytes, `trace_path` must be NULL or a
/// NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn streamcode_container_decode(
    data: *const u8,
    len: usize,
    trace_path: *const c_char,
    out: *mut StreamcodeBuffer,
) -> StreamcodeStatus {
    guard(|| {
        if data.is_null() {
            return Err(Failure::null("data"));
        }
        let bytes = std::slice::from_raw_parts(data, len);
        let source = match opt_str(trace_path, "trace_path")? {
            Some(p) => PredictorSource::Trace(Arc::new(TraceFile::load(Path::new(p))?)),
            None => {
                let (header, _) = container::read_header(bytes)?;
                if header.predictor.kind == "trace" {
                    return Err(Failure::invalid(
                        "container was encoded from a trace; pass trace_path",
                    ));
                }
                PredictorSource::Header
            }
        };
        let text = container::decode(bytes, source)?.detokenize()?;
        write_out(out, into_buffer(text), "out")
    })
}

/// Runs a rate sweep and returns `bits.csv` and `delays.csv` contents.
///
/// `coders` is a comma-separated id list or NULL for the default set;
/// `alphas` may be NULL with `n_alphas == 0` for the default grid; `jobs == 0`
/// uses every core. Each source contributes all of its tokens.
///
/// # Safety
/// `sources` must point to `n_sources` live source handles, `alphas` to
/// `n_alphas` doubles (or be NULL when `n_alphas` is 0), `coders` must be
/// NULL or NUL-terminated, and both output buffers must be writable.
#[no_mangle]
pub unsafe extern "C" fn streamcode_sweep(
    sources: *const *const StreamcodeSource,
    n_sources: usize,
    coders: *const c_char,
    alphas: *const f64,
    n_alphas: usize,
    jobs: u32,
    bits_csv: *mut StreamcodeBuffer,
    delays_csv: *mut StreamcodeBuffer,
) -> StreamcodeStatus {
    guard(|| {
        if sources.is_null() || n_sources == 0 {
            return Err(Failure::invalid("no sources given"));
        }
        if bits_csv.is_null() || delays_csv.is_null() {
            return Err(Failure::null("bits_csv/delays_csv"));
        }
        let handles = std::slice::from_raw_parts(sources, n_sources);
        let mut texts = Vec::with_capacity(n_sources);
        for (i, &h) in handles.iter().enumerate() {
            let src = req_ref(h, &format!("sources[{i}]"))?;
            let mut text = src.text.clone();
            if texts.iter().any(|t: &SweepText| t.name == text.name) {
                text.name = format!("{}#{i}", text.name);
            }
            texts.push(text);
        }
        let mut config = SweepConfig {
            tokens: texts.iter().map(|t| t.stream.len()).max().unwrap_or(1),
            jobs: (jobs > 0).then_some(jobs as usize),
            ..SweepConfig::default()
        };
        if let Some(list) = opt_str(coders, "coders")? {
            config.coders = list
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::parse)
                .collect::<Result<_, Error>>()?;
        }
        if n_alphas > 0 {
            if alphas.is_null() {
                return Err(Failure::null("alphas"));
            }
            config.alphas = std::slice::from_raw_parts(alphas, n_alphas).to_vec();
        }
        let results = experiment::run_sweep(&texts, &config)?;
        bits_csv.write(into_buffer(experiment::bits_csv(&results).into_bytes()));
        delays_csv.write(into_buffer(experiment::delays_csv(&results).into_bytes()));
        Ok(())
    })
}

/// Releases a buffer's bytes and resets it to empty. Safe on an empty
/// buffer.
///
/// # Safety
/// `buffer` must be NULL or point to a buffer filled by this library and not
/// yet freed.
#[no_mangle]
pub unsafe extern "C" fn streamcode_buffer_free(buffer: *mut StreamcodeBuffer) {
    let Some(b) = buffer.as_mut() else {
        return;
    };
    if !b.data.is_null() {
        drop(Box::from_raw(std::ptr::slice_from_raw_parts_mut(
            b.data, b.len,
        )));
    }
    b.data = std::ptr::null_mut();
    b.len = 0;
}
