use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use corpus_agent_cli::{analyze, load_train_config, train};
use corpus_agent_core::agent::TrainConfig;
use corpus_agent_core::corpus::{load_wav, render_wav, LoadOptions};
use corpus_agent_core::features::{frame_count, HOP_SIZE, VECTOR_NAMES};
use corpus_agent_core::testkit;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_corpus-agent"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _tmp: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new(files: usize, notes: usize) -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        testkit::write_corpus(&root.join("corpus"), files, notes, 3).unwrap();
        Fixture { _tmp: tmp, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn trained(self) -> Self {
        ok(&["train", s(&self.path("corpus")), "--out", s(&self.path("model")), "--som-dims", "2", "3"]);
        self
    }
}

#[test]
fn analyze_writes_one_csv_row_per_segment() {
    let fx = Fixture::new(2, 5);
    let csv = ok(&["analyze", s(&fx.path("corpus"))]);
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&header[..4], ["segment_id", "file", "start_s", "dur_s"]);
    assert_eq!(&header[4..], VECTOR_NAMES);
    assert_eq!(header.last(), Some(&"arousal"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 10);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r.len(), 35);
        assert_eq!(r[0], i.to_string());
        assert!(r[4..].iter().all(|x| x.parse::<f64>().unwrap().is_finite()));
    }
    // same numbers through the library
    let lib = analyze(&fx.path("corpus"), &TrainConfig::default()).unwrap();
    assert_eq!(lib.len(), 10);
    assert_eq!(rows[3][34].parse::<f64>().unwrap(), lib[3].vector.0[30]);
}

#[test]
fn analyze_segments_json_for_one_file() {
    let fx = Fixture::new(1, 4);
    let wav = fs::read_dir(fx.path("corpus")).unwrap().next().unwrap().unwrap().path();
    let out = fx.path("seg.json");
    ok(&["analyze", s(&wav), "--segments", "--out", s(&out)]);
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let segs = v.as_array().unwrap();
    assert_eq!(segs.len(), 4);
    let mut prev_end = 0;
    for seg in segs {
        let start = seg["start_sample"].as_u64().unwrap();
        assert!(start >= prev_end);
        prev_end = start + seg["length_samples"].as_u64().unwrap();
        assert!(seg["dur_s"].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn config_files_change_segmentation() {
    let fx = Fixture::new(1, 6);
    let toml = fx.path("c.toml");
    fs::write(&toml, "seed = 4\n[segmentation]\nmin_segment_seconds = 0.3\nmax_segment_seconds = 0.6\n").unwrap();
    let json = fx.path("c.json");
    fs::write(&json, r#"{"segmentation": {"min_segment_seconds": 0.3, "max_segment_seconds": 0.6}, "seed": 4}"#).unwrap();
    let a = load_train_config(Some(&toml)).unwrap();
    assert_eq!(a, load_train_config(Some(&json)).unwrap());
    assert_eq!(a.seed, 4);
    assert_eq!(a.segmentation.max_segment_seconds, 0.6);
    assert_eq!(a.segmentation.flux_multiplier, TrainConfig::default().segmentation.flux_multiplier);
    // min > max/2 is refused
    fs::write(&toml, "[segmentation]\nmin_segment_seconds = 1.0\nmax_segment_seconds = 1.5\n").unwrap();
    assert!(load_train_config(Some(&toml)).is_err());
    let out = run(&["analyze", s(&fx.path("corpus")), "--config", s(&toml)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
}

#[test]
fn train_reports_counts_and_honours_flags() {
    let fx = Fixture::new(2, 6);
    let out = ok(&["train", s(&fx.path("corpus")), "--out", s(&fx.path("m")), "--som-dims", "3", "2", "--epochs", "20"]);
    assert!(out.contains("numData: 12"), "{out}");
    assert!(out.contains("SOM dims: 3 x 2 (6 nodes)"), "{out}");
    let summary = train(&fx.path("corpus"), &fx.path("m2"), &TrainConfig::default()).unwrap();
    assert_eq!(summary.num_data, 12);
    assert!(fx.path("m2").is_dir());
}

#[test]
fn train_rejects_missing_corpus() {
    let fx = Fixture::new(1, 3);
    let out = run(&["train", s(&fx.path("nowhere")), "--out", s(&fx.path("m"))]);
    assert!(!out.status.success());
}

#[test]
fn generate_writes_wav_and_trace() {
    let fx = Fixture::new(2, 6).trained();
    let wav = fx.path("out.wav");
    let trace = fx.path("trace.jsonl");
    ok(&[
        "generate", "--model", s(&fx.path("model")), "--duration", "3", "--seed", "2", "--tempo", "240",
        "--congruence", "0.5", "--reverse", "--pitch-cents", "-300", "--attack-ms", "2", "--release-ms", "5",
        "--out", s(&wav), "--trace", s(&trace),
    ]);
    let audio = load_wav(&wav, LoadOptions::default()).unwrap();
    assert_eq!(audio.len(), 3 * 44_100);
    let events: Vec<Value> = fs::read_to_string(&trace)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(events.len(), 12);
    for (i, e) in events.iter().enumerate() {
        assert!((e["t"].as_f64().unwrap() - i as f64 * 0.25).abs() < 1e-9);
        assert_eq!(e["params"]["reverse"], true);
        assert_eq!(e["params"]["pitch_shift_cents"], -300.0);
        assert!(e["segment"].as_u64().unwrap() < 12);
        for key in ["node", "dur", "artist", "song", "rendered_seconds"] {
            assert!(!e[key].is_null(), "{key} missing");
        }
    }
}

#[test]
fn generate_rejects_bad_parameters() {
    let fx = Fixture::new(1, 4).trained();
    let m = fx.path("model");
    let o = fx.path("o.wav");
    for extra in [["--tempo", "0"], ["--congruence", "1.5"], ["--mode", "reactive"], ["--trigger", "beatmove"], ["--duration", "-1"]] {
        let mut args = vec!["generate", "--model", s(&m), "--out", s(&o)];
        args.extend(extra);
        let out = run(&args);
        assert!(!out.status.success(), "{extra:?} accepted");
    }
    assert!(!o.exists());
}

#[test]
fn listen_follows_the_input_length() {
    let fx = Fixture::new(2, 6).trained();
    let input = fx.path("input.wav");
    let live = testkit::note_sequence(&[(440.0, 1), (220.0, 0), (587.3, 3)]);
    render_wav(&live, &input).unwrap();
    let wav = fx.path("listen.wav");
    let trace = fx.path("listen.jsonl");
    let run_once = || {
        ok(&["listen", "--input", s(&input), "--mode", "reactive", "--model", s(&fx.path("model")), "--out", s(&wav), "--trace", s(&trace)]);
        (fs::read(&wav).unwrap(), fs::read_to_string(&trace).unwrap())
    };
    let (a, trace_a) = run_once();
    let audio = load_wav(&wav, LoadOptions::default()).unwrap();
    assert_eq!(audio.len(), frame_count(live.len()) * HOP_SIZE);
    assert!(trace_a.lines().count() >= 1);
    assert_eq!((a, trace_a), run_once());

    let out = run(&["listen", "--input", s(&input), "--mode", "macat", "--model", s(&fx.path("model")), "--out", s(&wav)]);
    assert!(!out.status.success());
}

#[test]
fn serve_answers_on_the_requested_port() {
    let mut child = bin()
        .args(["serve", "--port", "0", "--clock", "offline"])
        .env_remove("CORPUS_AGENT_TOKEN")
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.split_whitespace().nth(2).unwrap().to_string();
    assert!(line.contains("offline clock"), "{line}");
    let mut conn = TcpStream::connect(&addr).unwrap();
    writeln!(conn, r#"{{"v":1,"id":1,"op":"query_state"}}"#).unwrap();
    let mut reply = String::new();
    BufReader::new(conn.try_clone().unwrap()).read_line(&mut reply).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    let v: Value = serde_json::from_str(&reply).unwrap();
    assert_eq!(v["id"], 1);
    assert_eq!(v["ok"], true);
    assert_eq!(v["result"]["running"], false);
}

#[test]
fn documented_config_example_parses() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    fs::write(
        &path,
        "seed = 3\nsom_dims = [4, 4]\nepochs = 200\nresample = false\n\n[segmentation]\nflux_multiplier = 1.5\n\
         median_width = 11\nmin_segment_seconds = 0.25\nmax_segment_seconds = 4.0\nrelative_floor = 0.1\n",
    )
    .unwrap();
    let c = load_train_config(Some(&path)).unwrap();
    assert_eq!(c.som_dims, Some((4, 4)));
    assert_eq!(c.epochs, Some(200));
    assert_eq!(c.segmentation, TrainConfig::default().segmentation);
}
