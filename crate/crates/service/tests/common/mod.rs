#![allow(dead_code)]

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::PathBuf;
use std::time::Duration;

use corpus_agent_core::agent::{train_pipeline, TrainConfig};
use corpus_agent_core::corpus::save_model;
use corpus_agent_core::testkit;
use serde_json::{json, Value};
use tempfile::TempDir;

/// A trained model on disk with its corpus next to it.
pub struct ModelDir {
    pub root: TempDir,
    pub model: PathBuf,
    pub corpus: PathBuf,
}

pub fn model_dir(files: usize, notes: usize, seed: u64) -> ModelDir {
    let root = tempfile::tempdir().unwrap();
    let corpus = root.path().join("corpus");
    testkit::write_corpus(&corpus, files, notes, seed).unwrap();
    let config = TrainConfig {
        som_dims: Some((3, 3)),
        seed,
        ..TrainConfig::default()
    };
    let model = train_pipeline(&corpus, &config).unwrap();
    let dir = root.path().join("model");
    save_model(&model, &dir).unwrap();
    ModelDir {
        model: dir,
        corpus,
        root,
    }
}

pub struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    next_id: u64,
}

impl Client {
    pub fn connect(addr: SocketAddr) -> Self {
        let writer = TcpStream::connect(addr).unwrap();
        writer.set_read_timeout(Some(Duration::from_secs(60))).unwrap();
        Client {
            reader: BufReader::new(writer.try_clone().unwrap()),
            writer,
            next_id: 1,
        }
    }

    pub fn send_raw(&mut self, line: &str) {
        writeln!(self.writer, "{line}").unwrap();
        self.writer.flush().unwrap();
    }

    /// Sends a request and returns its id.
    pub fn send(&mut self, op: &str, args: Value) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        let msg = json!({"v": 1, "id": id, "op": op, "args": args});
        self.send_raw(&msg.to_string());
        id
    }

    pub fn recv_line(&mut self) -> String {
        let mut line = String::new();
        let n = self.reader.read_line(&mut line).expect("read from server");
        assert!(n > 0, "server closed the connection");
        line.trim_end().to_string()
    }

    pub fn recv(&mut self) -> Value {
        serde_json::from_str(&self.recv_line()).unwrap()
    }

    /// Reads until the response for `id`, returning it and any events seen
    /// on the way.
    pub fn response(&mut self, id: u64) -> (Value, Vec<Value>) {
        let mut events = Vec::new();
        loop {
            let m = self.recv();
            if m.get("id") == Some(&json!(id)) {
                return (m, events);
            }
            assert!(m.get("event").is_some(), "response for another request: {m}");
            events.push(m);
        }
    }

    pub fn call(&mut self, op: &str, args: Value) -> Value {
        let id = self.send(op, args);
        self.response(id).0
    }

    /// Reads events until `stop` returns true for one of them (inclusive).
    pub fn events_until(&mut self, mut stop: impl FnMut(&Value) -> bool) -> Vec<Value> {
        let mut out = Vec::new();
        loop {
            let m = self.recv();
            let done = stop(&m);
            out.push(m);
            if done {
                return out;
            }
        }
    }
}

pub fn is_stopped_snapshot(m: &Value) -> bool {
    m["event"] == "state_snapshot" && m["data"]["running"] == false
}

pub fn of_kind<'a>(events: &'a [Value], kind: &str) -> Vec<&'a Value> {
    events.iter().filter(|e| e["event"] == kind).collect()
}
