mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::*;

fn streamcode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_streamcode"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn moby() -> PathBuf {
    data_dir().join("texts").join("moby_dick.txt")
}

fn alice() -> PathBuf {
    data_dir().join("texts").join("alice.txt")
}

#[test]
fn tokenize_prints_arrival_times() {
    let o = streamcode(&[
        "tokenize",
        "--input",
        s(&moby()),
        "--tokenizer",
        "char",
        "--cps",
        "20",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split('\t').collect();
    let t = header.iter().position(|&c| c == "t_arr").unwrap();
    let first: Vec<&str> = lines.next().unwrap().split('\t').collect();
    let second: Vec<&str> = lines.next().unwrap().split('\t').collect();
    assert_eq!(first[t], "0.050000");
    assert_eq!(second[t], "0.100000");
}

#[test]
fn missing_input_is_a_usage_error() {
    let o = streamcode(&["tokenize", "--input", "/no/such/text.txt"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/no/such/text.txt"), "{}", stderr(&o));
}

#[test]
fn zero_cps_is_a_usage_error() {
    let o = streamcode(&["tokenize", "--input", s(&moby()), "--cps", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_coder_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.sc");
    let o = streamcode(&[
        "encode",
        "--input",
        s(&moby()),
        "--coder",
        "zip",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

fn roundtrip(extra: &[&str], input: &Path) -> (Vec<u8>, Output) {
    let dir = tempfile::tempdir().unwrap();
    let enc = dir.path().join("c.sc");
    let dec = dir.path().join("d.txt");
    let mut args = vec!["encode", "--input", s(input), "--out", s(&enc)];
    args.extend_from_slice(extra);
    let o = streamcode(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = streamcode(&["decode", "--input", s(&enc), "--out", s(&dec)]);
    (std::fs::read(&dec).unwrap_or_default(), o)
}

#[test]
fn ac_roundtrip_is_byte_identical() {
    let (decoded, o) = roundtrip(&["--coder", "ac"], &moby());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(decoded, std::fs::read(moby()).unwrap());
}

#[test]
fn rans_roundtrip_with_partial_block() {
    let (decoded, o) = roundtrip(
        &[
            "--coder",
            "rans",
            "--K",
            "8",
            "--tokens",
            "403",
            "--tokenizer",
            "word",
        ],
        &alice(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read(alice()).unwrap();
    assert!(text.starts_with(&decoded));
    assert!(decoded.len() > 403 && decoded.len() < text.len());
}

#[test]
fn every_concrete_coder_roundtrips() {
    let text = std::fs::read(alice()).unwrap();
    for coder in [
        "huffman-exact",
        "ac-p32",
        "rans-k1",
        "rans-k16-r16",
        "deflate",
    ] {
        let (decoded, o) = roundtrip(&["--coder", coder, "--tokenizer", "word"], &alice());
        assert_eq!(o.status.code(), Some(0), "{coder}: {}", stderr(&o));
        assert_eq!(decoded, text, "{coder}");
    }
}

#[test]
fn trace_roundtrip_needs_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let enc = dir.path().join("t.sc");
    let fixture = fixture_path();
    let o = streamcode(&[
        "encode",
        "--trace",
        s(&fixture),
        "--tokens",
        "300",
        "--out",
        s(&enc),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let o = streamcode(&["decode", "--input", s(&enc)]);
    assert_eq!(o.status.code(), Some(2));

    let o = streamcode(&["decode", "--input", s(&enc), "--trace", s(&fixture)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let expected = fixture_text(300).stream.detokenize().unwrap();
    assert_eq!(o.stdout, expected);
}

#[test]
fn trace_shorter_than_budget_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let enc = dir.path().join("t.sc");
    let o = streamcode(&[
        "encode",
        "--trace",
        s(&fixture_path()),
        "--tokens",
        "999999",
        "--out",
        s(&enc),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn corrupted_container_fails_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let enc = dir.path().join("c.sc");
    let o = streamcode(&[
        "encode",
        "--input",
        s(&moby()),
        "--coder",
        "ac",
        "--out",
        s(&enc),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut bytes = std::fs::read(&enc).unwrap();
    let at = bytes.len() - bytes.len() / 3;
    for b in &mut bytes[at..at + 4] {
        *b ^= 0xa5;
    }
    std::fs::write(&enc, &bytes).unwrap();
    let o = streamcode(&["decode", "--input", s(&enc)]);
    assert_ne!(o.status.code(), Some(0));
    let err = stderr(&o);
    assert!(err.contains("position") || err.contains("token"), "{err}");
}

#[test]
fn simulate_writes_delays_and_summary() {
    let o = streamcode(&[
        "simulate",
        "--input",
        s(&moby()),
        "--coder",
        "rans-k4",
        "--alpha",
        "1.5",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("coder,alpha,token_index,t_arr,decode_time,delay_s"));
    assert!(stderr(&o).contains("mean delay"));
}

fn sweep(dir: &Path, extra: &[&str]) -> Output {
    let input = moby();
    let mut args = vec![
        "sweep",
        "--input",
        s(&input),
        "--tokens",
        "2000",
        "--out-dir",
        s(dir),
    ];
    args.extend_from_slice(extra);
    streamcode(&args)
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn sweep_writes_both_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let o = sweep(dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let bits = std::fs::read_to_string(dir.path().join("bits.csv")).unwrap();
    let delays = std::fs::read_to_string(dir.path().join("delays.csv")).unwrap();
    assert_eq!(data_rows(&bits).len(), 10);
    assert_eq!(data_rows(&delays).len(), 10 * 11);
    assert!(bits.contains("# lambda_cps=20"));
}

#[test]
fn sweep_honors_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let o = sweep(
        dir.path(),
        &[
            "--coders",
            "shannon,huffman-exact",
            "--alpha-grid",
            "0.9,3",
            "--dump-delays",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let bits = std::fs::read_to_string(dir.path().join("bits.csv")).unwrap();
    let delays = std::fs::read_to_string(dir.path().join("delays.csv")).unwrap();
    let coders: Vec<String> = data_rows(&bits).into_iter().map(|r| r[1].clone()).collect();
    assert_eq!(coders, ["shannon", "huffman-exact"]);
    assert!(delays.contains("# alpha_grid=0.9;3"));
    let alphas: Vec<String> = data_rows(&delays)
        .into_iter()
        .map(|r| r[2].clone())
        .collect();
    assert_eq!(alphas, ["0.9", "3", "0.9", "3"]);
    assert!(dir.path().join("delays_per_token.csv").exists());
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        format!(
            "# sweep\ninput = {}\ntokens = 1500\ncoders = shannon, ac\nalpha-grid = 1.5\njobs = 2\n",
            s(&moby())
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = streamcode(&[
        "--config",
        s(&cfg),
        "sweep",
        "--alpha-grid",
        "2,4",
        "--out-dir",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let delays = std::fs::read_to_string(out.join("delays.csv")).unwrap();
    assert!(delays.contains("# alpha_grid=2;4"));
    assert!(delays.contains("# tokens=1500"));
    assert_eq!(data_rows(&delays).len(), 4);

    std::fs::write(&cfg, "speed = 3\n").unwrap();
    let o = streamcode(&["--config", s(&cfg), "sweep", "--out-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fixture = fixture_path();
    for (dir, jobs) in [(&a, "1"), (&b, "3")] {
        let o = streamcode(&[
            "sweep",
            "--trace",
            s(&fixture),
            "--tokens",
            "1000",
            "--jobs",
            jobs,
            "--out-dir",
            s(dir.path()),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for name in ["bits.csv", "delays.csv"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn report_summarizes_and_marks_unstable_runs() {
    let dir = tempfile::tempdir().unwrap();
    let o = sweep(
        dir.path(),
        &["--coders", "shannon,rans-k4", "--alpha-grid", "0.8,2"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let bits = dir.path().join("bits.csv");
    let delays = dir.path().join("delays.csv");
    let o = streamcode(&["report", "--bits", s(&bits), "--delays", s(&delays)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("unstable"));

    // Overhead column: 100 * (bpc / bpc_shannon - 1).
    let rows = data_rows(&std::fs::read_to_string(&bits).unwrap());
    let sh: f64 = rows[0][3].parse().unwrap();
    let k4: f64 = rows[1][3].parse().unwrap();
    let line = out
        .lines()
        .find(|l| l.trim_start().starts_with("rans-k4"))
        .unwrap();
    let shown: f64 = line.split_whitespace().nth(3).unwrap().parse().unwrap();
    assert!((shown - 100.0 * (k4 / sh - 1.0)).abs() < 0.05, "{line}");
}

#[test]
fn report_rejects_empty_csv() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("bits.csv");
    std::fs::write(&empty, "").unwrap();
    let o = streamcode(&["report", "--bits", s(&empty)]);
    assert_ne!(o.status.code(), Some(0));
}
