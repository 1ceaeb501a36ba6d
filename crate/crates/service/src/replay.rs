//! Scripted sessions over plain TCP, and the reference session checked
//! against the golden transcript.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::{Path, PathBuf};
use std::time::Duration;

use corpus_agent_core::agent::{train_pipeline, TrainConfig};
use corpus_agent_core::corpus::save_model;
use corpus_agent_core::testkit;
use serde_json::{json, Value};

/// Node events the reference session waits for.
pub const REFERENCE_NODE_EVENTS: usize = 10;

/// Trains the reference model (3 synthetic files of 8 notes, 3x3 SOM) under
/// `dir` and returns the model directory.
pub fn reference_model(dir: &Path) -> corpus_agent_core::Result<PathBuf> {
    let corpus = dir.join("corpus");
    testkit::write_corpus(&corpus, 3, 8, 21)?;
    let config = TrainConfig {
        som_dims: Some((3, 3)),
        seed: 21,
        ..TrainConfig::default()
    };
    let model = train_pipeline(&corpus, &config)?;
    let out = dir.join("model");
    save_model(&model, &out)?;
    Ok(out)
}

/// Load, a parameter sweep (one invalid value, forward jump given as a
/// percentage), subscribe, then a run of ten node events.
pub fn reference_script(model: &Path) -> Vec<(&'static str, Value)> {
    vec![
        ("load_model", json!({"path": model})),
        ("set_param", json!({"tempo": 240})),
        ("set_param", json!({"congruence": 0.5})),
        ("set_param", json!({"attack_ms": 5, "release_ms": 20})),
        ("set_param", json!({"tempo": -5})),
        ("set_param", json!({"forward_jump": 100})),
        ("set_param", json!({"resample_ratio": 1.0, "pitch_shift_cents": 0, "reverse": false})),
        ("subscribe", json!({"kinds": ["node_played", "scene_boundary", "state_snapshot", "error"]})),
        ("start", json!({"max_events": REFERENCE_NODE_EVENTS})),
    ]
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

/// Sends `script` (ids 1, 2, ...), waiting for each response, then reads
/// until a run ends. Returns every line received.
pub fn record(addr: SocketAddr, script: &[(&str, Value)]) -> io::Result<Vec<String>> {
    let mut writer = TcpStream::connect(addr)?;
    writer.set_read_timeout(Some(Duration::from_secs(60)))?;
    let mut reader = BufReader::new(writer.try_clone()?);
    let mut lines = Vec::new();
    let mut next = |lines: &mut Vec<String>| -> io::Result<Value> {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Err(invalid("server closed the connection"));
        }
        let line = line.trim_end().to_string();
        let v: Value = serde_json::from_str(&line).map_err(|e| invalid(e.to_string()))?;
        lines.push(line);
        Ok(v)
    };
    for (i, (op, args)) in script.iter().enumerate() {
        let id = i as u64 + 1;
        let msg = json!({"v": 1, "id": id, "op": op, "args": args});
        writeln!(writer, "{msg}")?;
        writer.flush()?;
        while next(&mut lines)?["id"] != json!(id) {}
    }
    if script.iter().any(|(op, _)| *op == "start") {
        loop {
            let m = next(&mut lines)?;
            if m["event"] == "state_snapshot" && m["data"]["running"] == false {
                break;
            }
        }
    }
    Ok(lines)
}
