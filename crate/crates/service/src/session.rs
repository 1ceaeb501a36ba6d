//! One client connection: parses and validates requests, then hands them to
//! the engine's control queue.

use std::collections::{BTreeSet, VecDeque};
use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use corpus_agent_core::agent::AgentMode;
use corpus_agent_core::corpus::{load_model, load_wav, AudioLibrary, LoadOptions};
use corpus_agent_core::features::analyze_buffer;
use corpus_agent_core::mosaic::{FeatureWeights, MOSAIC_DIMS};
use corpus_agent_core::synth::{check_param, param_range, TriggerMode};
use serde_json::{Map, Value};

use crate::engine::{Command, Envelope, ParamPatch};
use crate::outbox::Outbox;
use crate::protocol::{parse_request, ErrorBody, EventKind, Op, Request};
use crate::scatter::ScatterAxes;

#[derive(Debug, Default)]
struct QueueState {
    items: VecDeque<Envelope>,
    clock: u64,
    shutdown: bool,
}

/// The engine's single ordered control queue.
#[derive(Debug, Default)]
pub struct ControlQueue {
    state: Mutex<QueueState>,
    wake: Condvar,
}

impl ControlQueue {
    pub fn new() -> Self {
        ControlQueue::default()
    }

    /// Queues a command stamped with the engine clock.
    pub fn push(&self, id: Value, reply: Arc<Outbox>, command: Command) {
        let mut st = self.state.lock().unwrap();
        let enqueued_at = st.clock;
        st.items.push_back(Envelope {
            id,
            reply,
            command,
            enqueued_at,
        });
        self.wake.notify_all();
    }

    /// Publishes the engine clock and takes every queued command.
    pub fn drain(&self, clock: u64) -> Vec<Envelope> {
        let mut st = self.state.lock().unwrap();
        st.clock = clock;
        st.items.drain(..).collect()
    }

    /// Like [`drain`](Self::drain) but waits up to `timeout` for work.
    pub fn wait_drain(&self, clock: u64, timeout: Duration) -> Vec<Envelope> {
        let mut st = self.state.lock().unwrap();
        st.clock = clock;
        if st.items.is_empty() && !st.shutdown {
            st = self.wake.wait_timeout(st, timeout).unwrap().0;
        }
        st.items.drain(..).collect()
    }

    pub fn shutdown(&self) {
        self.state.lock().unwrap().shutdown = true;
        self.wake.notify_all();
    }

    pub fn is_shutdown(&self) -> bool {
        self.state.lock().unwrap().shutdown
    }
}

pub struct Session {
    pub id: u64,
    outbox: Arc<Outbox>,
    queue: Arc<ControlQueue>,
    token: Option<String>,
    authenticated: bool,
    disconnected: bool,
}

impl Session {
    pub fn new(id: u64, queue: Arc<ControlQueue>, token: Option<String>, outbox_capacity: usize) -> Self {
        Session {
            id,
            outbox: Arc::new(Outbox::new(outbox_capacity)),
            queue,
            authenticated: token.is_none(),
            token,
            disconnected: false,
        }
    }

    pub fn outbox(&self) -> &Arc<Outbox> {
        &self.outbox
    }

    /// Handles one incoming line. Blank lines are ignored.
    pub fn handle_line(&mut self, line: &str) {
        if line.trim().is_empty() {
            return;
        }
        let req = match parse_request(line) {
            Ok(r) => r,
            Err(resp) => return self.reject(resp.id, resp.error.expect("error response")),
        };
        if !self.authenticated {
            match (&self.token, &req.token) {
                (Some(want), Some(got)) if want == got => self.authenticated = true,
                _ => {
                    let e = ErrorBody::new("unauthorized", "missing or wrong token");
                    return self.reject(req.id, e);
                }
            }
        }
        let cmd = to_command(&req).unwrap_or_else(Command::Reject);
        self.queue.push(req.id, Arc::clone(&self.outbox), cmd);
    }

    fn reject(&self, id: Value, error: ErrorBody) {
        self.queue
            .push(id, Arc::clone(&self.outbox), Command::Reject(error));
    }

    /// Tells the engine this client is gone. The outbox closes once the
    /// engine has answered everything queued before.
    pub fn disconnect(&mut self) {
        if !self.disconnected {
            self.disconnected = true;
            self.queue
                .push(Value::Null, Arc::clone(&self.outbox), Command::Disconnect);
        }
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        self.disconnect();
    }
}

fn type_error(field: &str, expected: &str) -> ErrorBody {
    ErrorBody::invalid(field, format!("{field} must be {expected}"), None)
}

fn get_f64(args: &Map<String, Value>, field: &str) -> Result<Option<f64>, ErrorBody> {
    match args.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v.as_f64().map(Some).ok_or_else(|| type_error(field, "a number")),
    }
}

fn get_bool(args: &Map<String, Value>, field: &str) -> Result<Option<bool>, ErrorBody> {
    match args.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v.as_bool().map(Some).ok_or_else(|| type_error(field, "true or false")),
    }
}

fn get_str<'a>(args: &'a Map<String, Value>, field: &str) -> Result<Option<&'a str>, ErrorBody> {
    match args.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v.as_str().map(Some).ok_or_else(|| type_error(field, "a string")),
    }
}

fn require_str<'a>(args: &'a Map<String, Value>, field: &str) -> Result<&'a str, ErrorBody> {
    get_str(args, field)?.ok_or_else(|| ErrorBody::invalid(field, format!("{field} is required"), None))
}

fn get_count(args: &Map<String, Value>, field: &str) -> Result<Option<u64>, ErrorBody> {
    match args.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_u64()
            .map(Some)
            .ok_or_else(|| type_error(field, "a non-negative integer")),
    }
}

fn reject_unknown(args: &Map<String, Value>, known: &[&str]) -> Result<(), ErrorBody> {
    match args.keys().find(|k| !known.contains(&k.as_str())) {
        Some(k) => Err(ErrorBody::invalid(k, format!("unknown argument {k}"), None)),
        None => Ok(()),
    }
}

const PARAM_FIELDS: &[&str] = &[
    "tempo",
    "congruence",
    "p_forward",
    "forward_jump",
    "attack_ms",
    "release_ms",
    "reverse",
    "resample_ratio",
    "pitch_shift_cents",
    "one_shot",
    "tempo_lock",
    "explore",
    "som_dimension",
];

/// Validates a `set_param` argument map as a whole.
pub fn param_patch(args: &Map<String, Value>) -> Result<ParamPatch, ErrorBody> {
    reject_unknown(args, PARAM_FIELDS)?;
    if args.is_empty() {
        return Err(ErrorBody::invalid("args", "set_param needs at least one parameter", None));
    }
    let checked = |field: &'static str| -> Result<Option<f64>, ErrorBody> {
        let v = get_f64(args, field)?;
        if let Some(x) = v {
            check_param(field, x)?;
        }
        Ok(v)
    };
    let aliases = ["congruence", "p_forward", "forward_jump"];
    if aliases.iter().filter(|a| args.contains_key(**a)).count() > 1 {
        return Err(ErrorBody::invalid(
            "congruence",
            "give only one of congruence, p_forward, forward_jump",
            None,
        ));
    }
    let unit = |field: &str| -> Result<Option<f64>, ErrorBody> {
        let v = get_f64(args, field)?;
        match v {
            Some(x) if !(0.0..=1.0).contains(&x) => Err(ErrorBody::invalid(
                field,
                format!("{field} must be in [0, 1]"),
                param_range("p_forward"),
            )),
            _ => Ok(v),
        }
    };
    let jump = match get_f64(args, "forward_jump")? {
        Some(x) if !(0.0..=100.0).contains(&x) => {
            return Err(ErrorBody::invalid(
                "forward_jump",
                "forward_jump must be in [0, 100]",
                Some("[0, 100]"),
            ))
        }
        Some(x) => Some(x / 100.0),
        None => None,
    };
    let p_forward = unit("congruence")?.or(unit("p_forward")?).or(jump);
    let som_dimension = get_count(args, "som_dimension")?.map(|d| d as usize);
    Ok(ParamPatch {
        tempo: checked("tempo")?,
        p_forward,
        attack_ms: checked("attack_ms")?,
        release_ms: checked("release_ms")?,
        reverse: get_bool(args, "reverse")?,
        resample_ratio: checked("resample_ratio")?,
        pitch_shift_cents: checked("pitch_shift_cents")?,
        one_shot: get_bool(args, "one_shot")?,
        tempo_lock: get_bool(args, "tempo_lock")?,
        explore: get_bool(args, "explore")?,
        som_dimension,
    })
}

/// Weights from `{weights: {name: value}}`, `{vector: [..]}` or
/// `{preset: "uniform" | "all_equal"}`.
pub fn feature_weights(args: &Map<String, Value>) -> Result<FeatureWeights, ErrorBody> {
    reject_unknown(args, &["weights", "vector", "preset"])?;
    let given = ["weights", "vector", "preset"]
        .iter()
        .filter(|k| args.contains_key(**k))
        .count();
    if given != 1 {
        return Err(ErrorBody::invalid(
            "weights",
            "give exactly one of weights, vector, preset",
            None,
        ));
    }
    let w = if let Some(preset) = get_str(args, "preset")? {
        match preset {
            "uniform" => FeatureWeights::uniform(),
            "all_equal" => FeatureWeights::all_equal(),
            other => {
                return Err(ErrorBody::invalid(
                    "preset",
                    format!("unknown preset {other}"),
                    Some("uniform | all_equal"),
                ))
            }
        }
    } else if let Some(v) = args.get("vector") {
        let arr = v.as_array().ok_or_else(|| type_error("vector", "an array of numbers"))?;
        if arr.len() != MOSAIC_DIMS {
            return Err(ErrorBody::invalid(
                "vector",
                format!("vector must have {MOSAIC_DIMS} entries, got {}", arr.len()),
                None,
            ));
        }
        let vals = arr
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| type_error("vector", "an array of numbers")))
            .collect::<Result<Vec<_>, _>>()?;
        FeatureWeights(vals)
    } else {
        let map = args["weights"]
            .as_object()
            .ok_or_else(|| type_error("weights", "an object of descriptor: weight"))?;
        let mut pairs = Vec::with_capacity(map.len());
        for (k, v) in map {
            let x = v.as_f64().ok_or_else(|| type_error(k, "a number"))?;
            pairs.push((k.as_str(), x));
        }
        FeatureWeights::from_named(pairs)?
    };
    w.validate()?;
    Ok(w)
}

fn subscription(args: &Map<String, Value>) -> Result<BTreeSet<EventKind>, ErrorBody> {
    reject_unknown(args, &["kinds"])?;
    match args.get("kinds") {
        None | Some(Value::Null) => Ok(EventKind::ALL.into_iter().collect()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|k| {
                k.as_str().and_then(|s| s.parse().ok()).ok_or_else(|| {
                    ErrorBody::invalid(
                        "kinds",
                        format!("unknown event kind {k}"),
                        Some("node_played | scene_boundary | state_snapshot | viz_frame | error"),
                    )
                })
            })
            .collect(),
        Some(_) => Err(type_error("kinds", "an array of event kinds")),
    }
}

fn scatter_axes(args: &Map<String, Value>) -> Result<Option<ScatterAxes>, ErrorBody> {
    match args.get("scatter") {
        None | Some(Value::Null) | Some(Value::Bool(false)) => Ok(None),
        Some(Value::Bool(true)) => Ok(Some(ScatterAxes::default())),
        Some(Value::Object(m)) => {
            reject_unknown(m, &["x", "y"])?;
            Ok(Some(ScatterAxes::named(get_str(m, "x")?, get_str(m, "y")?)?))
        }
        Some(_) => Err(type_error("scatter", "true or an object {x, y}")),
    }
}

/// Turns a request into an engine command. Everything that can be checked
/// without engine state is checked here, so a bad request never reaches
/// the queue.
pub fn to_command(req: &Request) -> Result<Command, ErrorBody> {
    let a = &req.args;
    Ok(match req.op {
        Op::LoadModel => {
            reject_unknown(a, &["path", "seed"])?;
            let path = PathBuf::from(require_str(a, "path")?);
            let seed = get_count(a, "seed")?;
            let model = load_model(&path)?;
            let library = AudioLibrary::for_manifest(&model.manifest, LoadOptions { resample: true });
            Command::Install {
                model: Arc::new(model),
                library,
                seed,
            }
        }
        Op::Start => {
            reject_unknown(a, &["max_events", "duration"])?;
            let duration = get_f64(a, "duration")?;
            if let Some(d) = duration {
                if !(d > 0.0 && d.is_finite()) {
                    return Err(ErrorBody::invalid("duration", "duration must be > 0", Some("(0, inf)")));
                }
            }
            let max_events = get_count(a, "max_events")?;
            if max_events == Some(0) {
                return Err(ErrorBody::invalid("max_events", "max_events must be >= 1", Some("[1, inf)")));
            }
            Command::Start {
                max_events,
                duration,
            }
        }
        Op::Stop => {
            reject_unknown(a, &[])?;
            Command::Stop
        }
        Op::Restart => {
            reject_unknown(a, &[])?;
            Command::Restart
        }
        Op::Mute => {
            reject_unknown(a, &["on"])?;
            Command::Mute(get_bool(a, "on")?.unwrap_or(true))
        }
        Op::SetMode => {
            reject_unknown(a, &["mode", "input"])?;
            let mode: AgentMode = require_str(a, "mode")?.parse()?;
            let frames = match get_str(a, "input")? {
                Some(p) => {
                    if mode != AgentMode::Reactive {
                        return Err(ErrorBody::invalid("input", "input is only used in reactive mode", None));
                    }
                    let audio = load_wav(std::path::Path::new(p), LoadOptions { resample: true })?;
                    Some(analyze_buffer(&audio)?)
                }
                None => None,
            };
            Command::SetMode { mode, frames }
        }
        Op::SetParam => Command::SetParams(param_patch(a)?),
        Op::SetWeights => Command::SetWeights(feature_weights(a)?),
        Op::SetTriggerMode => {
            reject_unknown(a, &["mode"])?;
            Command::SetTriggerMode(require_str(a, "mode")?.parse::<TriggerMode>()?)
        }
        Op::Subscribe => Command::Subscribe(subscription(a)?),
        Op::QueryState => {
            reject_unknown(a, &["scatter", "som_dimension"])?;
            Command::QueryState {
                scatter: scatter_axes(a)?,
                som_dimension: get_count(a, "som_dimension")?.map(|d| d as usize),
            }
        }
    })
}
