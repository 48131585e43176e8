use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use streamcode_ffi::*;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/data")
        .join(name)
}

fn alice() -> Vec<u8> {
    std::fs::read(data("texts/alice.txt")).unwrap()
}

fn last_error() -> String {
    let p = streamcode_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn source(text: &[u8], max_tokens: usize) -> *mut StreamcodeSource {
    let mut opts = streamcode_text_options_default();
    opts.max_tokens = max_tokens;
    let mut out = ptr::null_mut();
    let st = unsafe { streamcode_source_from_text(text.as_ptr(), text.len(), &opts, &mut out) };
    assert_eq!(st, StreamcodeStatus::Ok);
    out
}

fn encode(src: *const StreamcodeSource, coder: &str) -> *mut StreamcodeCoded {
    let id = CString::new(coder).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { streamcode_encode(src, id.as_ptr(), &mut out) },
        StreamcodeStatus::Ok
    );
    out
}

unsafe fn take(buf: &mut StreamcodeBuffer) -> Vec<u8> {
    let v = std::slice::from_raw_parts(buf.data, buf.len).to_vec();
    streamcode_buffer_free(buf);
    assert!(buf.data.is_null() && buf.len == 0);
    v
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(streamcode_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn source_counts_match_text() {
    let text = alice();
    let src = source(&text, 0);
    let (mut tokens, mut chars) = (0usize, 0u64);
    unsafe {
        assert_eq!(
            streamcode_source_counts(src, &mut tokens, &mut chars),
            StreamcodeStatus::Ok
        );
        streamcode_source_free(src);
    }
    let n = std::str::from_utf8(&text).unwrap().chars().count();
    assert_eq!(tokens, n);
    assert_eq!(chars, n as u64);
}

#[test]
fn coders_rank_and_simulate() {
    let text = alice();
    let src = source(&text, 3000);
    let mut bpc = 0.0;
    unsafe { assert_eq!(streamcode_shannon_bpc(src, &mut bpc), StreamcodeStatus::Ok) };

    let mut bpt = Vec::new();
    for id in ["shannon", "ac", "huffman-exact", "rans-k16"] {
        let coded = encode(src, id);
        let mut stats = StreamcodeCodedStats::default();
        unsafe {
            assert_eq!(
                streamcode_coded_stats(coded, &mut stats),
                StreamcodeStatus::Ok
            )
        };
        assert_eq!(stats.tokens, 3000);
        bpt.push(stats.bits_per_token);

        let mut delays = vec![f64::NAN; 3000];
        let mut summary = StreamcodeDelaySummary::default();
        let rate = 2.0 * 20.0 * bpc;
        let st = unsafe {
            streamcode_simulate(
                src,
                coded,
                rate,
                delays.as_mut_ptr(),
                delays.len(),
                &mut summary,
            )
        };
        assert_eq!(st, StreamcodeStatus::Ok, "{id}: {}", last_error());
        assert_eq!(summary.stable, 1, "{id}");
        assert!(delays.iter().all(|d| d.is_finite() && *d >= 0.0));
        let max = delays.iter().cloned().fold(0.0, f64::max);
        assert_eq!(summary.max_delay_s, max);
        assert!(summary.mean_delay_s <= summary.p95_delay_s && summary.p95_delay_s <= max);
        unsafe { streamcode_coded_free(coded) };
    }
    // one char per token, so Shannon bits per token equal bits per char
    assert!((bpt[0] - bpc).abs() < 1e-9);
    assert!(bpt[1] >= bpt[0] && bpt[1] - bpt[0] < 0.01);
    assert!(bpt[2] >= bpt[0]);
    assert!(bpt[3] > bpt[0]);
    unsafe { streamcode_source_free(src) };
}

#[test]
fn short_delay_buffer_is_rejected() {
    let text = alice();
    let src = source(&text, 100);
    let coded = encode(src, "shannon");
    let mut delays = [0.0; 10];
    let mut summary = StreamcodeDelaySummary::default();
    let st =
        unsafe { streamcode_simulate(src, coded, 100.0, delays.as_mut_ptr(), 10, &mut summary) };
    assert_eq!(st, StreamcodeStatus::InvalidArgument);
    assert!(last_error().contains("need 100"));
    unsafe {
        streamcode_coded_free(coded);
        streamcode_source_free(src);
    }
}

#[test]
fn container_roundtrip() {
    let text = alice();
    let src = source(&text, 0);
    for id in ["ac", "rans-k8", "huffman-exact", "deflate"] {
        let coder = CString::new(id).unwrap();
        let mut buf = StreamcodeBuffer {
            data: ptr::null_mut(),
            len: 0,
        };
        unsafe {
            assert_eq!(
                streamcode_container_encode(src, coder.as_ptr(), &mut buf),
                StreamcodeStatus::Ok
            );
            let bytes = take(&mut buf);
            let mut out = StreamcodeBuffer {
                data: ptr::null_mut(),
                len: 0,
            };
            let st =
                streamcode_container_decode(bytes.as_ptr(), bytes.len(), ptr::null(), &mut out);
            assert_eq!(st, StreamcodeStatus::Ok, "{id}: {}", last_error());
            assert_eq!(take(&mut out), text, "{id}");
        }
    }
    unsafe { streamcode_source_free(src) };
}

#[test]
fn corrupted_container_reports_corrupt() {
    let text = alice();
    let src = source(&text, 500);
    let coder = CString::new("ac").unwrap();
    let mut buf = StreamcodeBuffer {
        data: ptr::null_mut(),
        len: 0,
    };
    unsafe {
        assert_eq!(
            streamcode_container_encode(src, coder.as_ptr(), &mut buf),
            StreamcodeStatus::Ok
        );
        let mut bytes = take(&mut buf);
        let n = bytes.len();
        bytes[n - 20] ^= 0x5a;
        let mut out = StreamcodeBuffer {
            data: ptr::null_mut(),
            len: 0,
        };
        let st = streamcode_container_decode(bytes.as_ptr(), bytes.len(), ptr::null(), &mut out);
        assert_eq!(st, StreamcodeStatus::Corrupt, "{}", last_error());
        assert!(last_error().contains("at token"));
        assert!(out.data.is_null());
        streamcode_source_free(src);
    }
}

#[test]
fn trace_source_roundtrips_with_trace() {
    let path = CString::new(data("fixture_trace.tsv").to_str().unwrap()).unwrap();
    let mut src = ptr::null_mut();
    let coder = CString::new("rans-k4").unwrap();
    unsafe {
        let st = streamcode_source_from_trace(path.as_ptr(), 20, 14, 400, &mut src);
        assert_eq!(st, StreamcodeStatus::Ok, "{}", last_error());
        let mut buf = StreamcodeBuffer {
            data: ptr::null_mut(),
            len: 0,
        };
        assert_eq!(
            streamcode_container_encode(src, coder.as_ptr(), &mut buf),
            StreamcodeStatus::Ok
        );
        let bytes = take(&mut buf);

        let mut out = StreamcodeBuffer {
            data: ptr::null_mut(),
            len: 0,
        };
        let st = streamcode_container_decode(bytes.as_ptr(), bytes.len(), ptr::null(), &mut out);
        assert_eq!(st, StreamcodeStatus::InvalidArgument);
        assert!(last_error().contains("trace_path"));

        let st = streamcode_container_decode(bytes.as_ptr(), bytes.len(), path.as_ptr(), &mut out);
        assert_eq!(st, StreamcodeStatus::Ok, "{}", last_error());
        let decoded = take(&mut out);
        assert!(!decoded.is_empty());

        let mut tokens = 0usize;
        let mut chars = 0u64;
        assert_eq!(
            streamcode_source_counts(src, &mut tokens, &mut chars),
            StreamcodeStatus::Ok
        );
        assert_eq!(tokens, 400);
        streamcode_source_free(src);
    }
}

#[test]
fn sweep_produces_csvs() {
    let text = alice();
    let a = source(&text[..2000], 0);
    let b = source(&text[2000..4000], 0);
    let sources = [a as *const StreamcodeSource, b as *const StreamcodeSource];
    let coders = CString::new("shannon,ac,rans-k16").unwrap();
    let alphas = [0.9, 1.5, 4.0];
    let run = |jobs| unsafe {
        let mut bits = StreamcodeBuffer {
            data: ptr::null_mut(),
            len: 0,
        };
        let mut delays = StreamcodeBuffer {
            data: ptr::null_mut(),
            len: 0,
        };
        let st = streamcode_sweep(
            sources.as_ptr(),
            2,
            coders.as_ptr(),
            alphas.as_ptr(),
            alphas.len(),
            jobs,
            &mut bits,
            &mut delays,
        );
        assert_eq!(st, StreamcodeStatus::Ok, "{}", last_error());
        (
            String::from_utf8(take(&mut bits)).unwrap(),
            String::from_utf8(take(&mut delays)).unwrap(),
        )
    };
    let (bits, delays) = run(1);
    let rows = |s: &str| s.lines().filter(|l| !l.starts_with('#')).count() - 1;
    assert_eq!(rows(&bits), 2 * 3);
    assert_eq!(rows(&delays), 2 * 3 * 3);
    assert_eq!(run(3), (bits, delays));
    unsafe {
        streamcode_source_free(a);
        streamcode_source_free(b);
    }
}

#[test]
fn null_pointers_are_reported() {
    let mut out = ptr::null_mut();
    unsafe {
        let st = streamcode_source_from_text(ptr::null(), 0, ptr::null(), &mut out);
        assert_eq!(st, StreamcodeStatus::NullPointer);
        assert!(last_error().contains("text"));
        assert!(out.is_null());

        let text = b"abc";
        let st = streamcode_source_from_text(text.as_ptr(), 3, ptr::null(), ptr::null_mut());
        assert_eq!(st, StreamcodeStatus::NullPointer);

        let mut bpc = 0.0;
        assert_eq!(
            streamcode_shannon_bpc(ptr::null(), &mut bpc),
            StreamcodeStatus::NullPointer
        );
        streamcode_source_free(ptr::null_mut());
        streamcode_coded_free(ptr::null_mut());
        streamcode_buffer_free(ptr::null_mut());
    }
}

#[test]
fn bad_arguments_map_to_status_codes() {
    let text = alice();
    let src = source(&text, 200);
    let mut coded = ptr::null_mut();
    unsafe {
        let bogus = CString::new("zip").unwrap();
        assert_eq!(
            streamcode_encode(src, bogus.as_ptr(), &mut coded),
            StreamcodeStatus::InvalidArgument
        );
        assert!(last_error().contains("zip"));

        let mut opts = streamcode_text_options_default();
        opts.cps = 0;
        let mut out = ptr::null_mut();
        let st = streamcode_source_from_text(text.as_ptr(), text.len(), &opts, &mut out);
        assert_eq!(st, StreamcodeStatus::InvalidArgument);

        let wide = "日本語".as_bytes();
        let st = streamcode_source_from_text(wide.as_ptr(), wide.len(), ptr::null(), &mut out);
        assert_eq!(st, StreamcodeStatus::InvalidArgument);

        let bad_utf8: [c_char; 2] = [0xff_u8 as c_char, 0];
        let mut opts = streamcode_text_options_default();
        opts.tokenizer = bad_utf8.as_ptr();
        let st = streamcode_source_from_text(text.as_ptr(), text.len(), &opts, &mut out);
        assert_eq!(st, StreamcodeStatus::InvalidArgument);
        assert!(last_error().contains("UTF-8"));

        let missing = CString::new("/nonexistent/trace.tsv").unwrap();
        let st = streamcode_source_from_trace(missing.as_ptr(), 20, 14, 0, &mut out);
        assert_eq!(st, StreamcodeStatus::Io);
        assert!(last_error().contains("/nonexistent/trace.tsv"));

        let garbage = b"not a container";
        let mut buf = StreamcodeBuffer {
            data: ptr::null_mut(),
            len: 0,
        };
        let st =
            streamcode_container_decode(garbage.as_ptr(), garbage.len(), ptr::null(), &mut buf);
        assert_eq!(st, StreamcodeStatus::Format);

        streamcode_source_free(src);
    }
}

#[test]
fn last_error_is_thread_local() {
    let mut bpc = 0.0;
    unsafe { streamcode_shannon_bpc(ptr::null(), &mut bpc) };
    std::thread::spawn(|| assert!(streamcode_last_error().is_null()))
        .join()
        .unwrap();
    assert!(!streamcode_last_error().is_null());
}

#[test]
fn header_declares_every_export() {
    let header_path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/streamcode.h");
    let header = std::fs::read_to_string(&header_path).unwrap();
    let src = include_str!("../src/lib.rs");
    let exported: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exported.len() >= 15);
    for name in exported {
        assert!(
            header.contains(&format!("{name}(")),
            "{name} missing from header"
        );
    }
    for ty in [
        "StreamcodeSource",
        "StreamcodeCoded",
        "STREAMCODE_STATUS_CORRUPT",
    ] {
        assert!(header.contains(ty));
    }

    let Ok(status) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(&header_path)
        .status()
    else {
        return;
    };
    assert!(status.success(), "header does not compile as C");
}
