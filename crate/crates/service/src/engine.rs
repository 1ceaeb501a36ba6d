//! The single-threaded engine: owns the agent, applies queued commands at
//! block boundaries and fans events out to subscribers.

use std::collections::BTreeSet;
use std::sync::Arc;

use corpus_agent_core::agent::{AgentContext, AgentMode, AgentState, NodeEvent, Performance};
use corpus_agent_core::corpus::{AudioLibrary, TrainedModel, SAMPLE_RATE};
use corpus_agent_core::features::{FrameFeatures, VECTOR_DIMS};
use corpus_agent_core::mosaic::{axis_name, FeatureWeights};
use corpus_agent_core::synth::{PlaybackEvent, PlaybackParams, TriggerMode, BLOCK_SIZE};
use serde_json::{json, Map, Value};

use crate::outbox::Outbox;
use crate::protocol::{ErrorBody, EventKind, EventMessage, Response};
use crate::scatter::{scatter_data, ScatterAxes};

/// Maximum viz_frame rate in engine time.
pub const VIZ_RATE_HZ: f64 = 30.0;

/// A validated `set_param` change. Absent fields stay as they are.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamPatch {
    pub tempo: Option<f64>,
    pub p_forward: Option<f64>,
    pub attack_ms: Option<f64>,
    pub release_ms: Option<f64>,
    pub reverse: Option<bool>,
    pub resample_ratio: Option<f64>,
    pub pitch_shift_cents: Option<f64>,
    pub one_shot: Option<bool>,
    pub tempo_lock: Option<bool>,
    pub explore: Option<bool>,
    pub som_dimension: Option<usize>,
}

impl ParamPatch {
    pub fn apply(&self, p: &mut PlaybackParams) {
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        let setb = |dst: &mut bool, v: Option<bool>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut p.tempo, self.tempo);
        set(&mut p.p_forward, self.p_forward);
        set(&mut p.attack_ms, self.attack_ms);
        set(&mut p.release_ms, self.release_ms);
        setb(&mut p.reverse, self.reverse);
        set(&mut p.resample_ratio, self.resample_ratio);
        set(&mut p.pitch_shift_cents, self.pitch_shift_cents);
        setb(&mut p.one_shot, self.one_shot);
        setb(&mut p.tempo_lock, self.tempo_lock);
    }
}

#[derive(Debug, Clone)]
pub enum Command {
    Install {
        model: Arc<TrainedModel>,
        library: AudioLibrary,
        seed: Option<u64>,
    },
    Start {
        max_events: Option<u64>,
        duration: Option<f64>,
    },
    Stop,
    Restart,
    Mute(bool),
    SetMode {
        mode: AgentMode,
        frames: Option<Vec<FrameFeatures>>,
    },
    SetParams(ParamPatch),
    SetWeights(FeatureWeights),
    SetTriggerMode(TriggerMode),
    Subscribe(BTreeSet<EventKind>),
    QueryState {
        scatter: Option<ScatterAxes>,
        som_dimension: Option<usize>,
    },
    /// A request that failed validation. It still goes through the queue
    /// so responses keep request order.
    Reject(ErrorBody),
    /// Sent when the client goes away; closes the outbox after earlier
    /// responses are queued.
    Disconnect,
}

impl Command {
    pub fn changes_state(&self) -> bool {
        !matches!(
            self,
            Command::Subscribe(_)
                | Command::QueryState { .. }
                | Command::Reject(_)
                | Command::Disconnect
        )
    }
}

/// A command with its reply address.
#[derive(Debug, Clone)]
pub struct Envelope {
    pub id: Value,
    pub reply: Arc<Outbox>,
    pub command: Command,
    /// Engine sample clock when the command was queued.
    pub enqueued_at: u64,
}

#[derive(Debug, Clone)]
struct Settings {
    mode: AgentMode,
    params: PlaybackParams,
    weights: FeatureWeights,
    trigger: TriggerMode,
    explore: bool,
    muted: bool,
    seed: u64,
    som_dimension: usize,
}

struct Loaded {
    ctx: Arc<AgentContext>,
    library: AudioLibrary,
    perf: Performance,
    /// Engine clock when `perf` was created.
    base: u64,
    scatter_pending: bool,
}

#[derive(Debug, Clone, Copy)]
struct Run {
    max_events: Option<u64>,
    until: Option<u64>,
    events: u64,
}

struct Subscriber {
    outbox: Arc<Outbox>,
    kinds: BTreeSet<EventKind>,
}

pub struct Engine {
    settings: Settings,
    loaded: Option<Loaded>,
    clock: u64,
    run: Option<Run>,
    subscribers: Vec<Subscriber>,
    seq: u64,
    next_viz: f64,
    max_latency: u64,
    block: Vec<f32>,
}

fn secs(samples: u64) -> f64 {
    samples as f64 / SAMPLE_RATE as f64
}

impl Engine {
    pub fn new(seed: u64) -> Self {
        Engine {
            settings: Settings {
                mode: AgentMode::Macat,
                params: PlaybackParams::default(),
                weights: FeatureWeights::uniform(),
                trigger: TriggerMode::Cont,
                explore: false,
                muted: false,
                seed,
                som_dimension: 0,
            },
            loaded: None,
            clock: 0,
            run: None,
            subscribers: Vec::new(),
            seq: 0,
            next_viz: 0.0,
            max_latency: 0,
            block: vec![0.0; BLOCK_SIZE],
        }
    }

    /// Samples rendered since the engine started.
    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn time(&self) -> f64 {
        secs(self.clock)
    }

    pub fn is_running(&self) -> bool {
        self.run.is_some()
    }

    /// Largest gap, in samples, between queuing a command and applying it.
    pub fn max_control_latency(&self) -> u64 {
        self.max_latency
    }

    pub fn subscriber_count(&self) -> usize {
        self.subscribers.len()
    }

    pub fn params(&self) -> &PlaybackParams {
        &self.settings.params
    }

    /// Applies one command and queues its response (then any events).
    pub fn apply(&mut self, env: Envelope) {
        let latency = self.clock.saturating_sub(env.enqueued_at);
        self.max_latency = self.max_latency.max(latency);
        let changes = env.command.changes_state();
        let disconnect = matches!(env.command, Command::Disconnect);
        let reply = Arc::clone(&env.reply);
        let outcome = self.execute(env.command, &reply);
        if disconnect {
            self.subscribers.retain(|s| !Arc::ptr_eq(&s.outbox, &reply));
            reply.close();
            return;
        }
        match outcome {
            Ok(result) => {
                reply.push_response(Response::ok(env.id, result).to_line());
                if changes {
                    let snap = self.snapshot();
                    self.emit(EventKind::StateSnapshot, snap);
                }
            }
            Err(e) => reply.push_response(Response::err(env.id, e).to_line()),
        }
    }

    fn execute(&mut self, command: Command, reply: &Arc<Outbox>) -> Result<Value, ErrorBody> {
        match command {
            Command::Install {
                model,
                library,
                seed,
            } => {
                let ctx = Arc::new(AgentContext::new(model)?);
                if let Some(seed) = seed {
                    self.settings.seed = seed;
                }
                if self.settings.som_dimension >= ctx.model.som.dims {
                    self.settings.som_dimension = 0;
                }
                self.run = None;
                let perf = Performance::new(Arc::clone(&ctx), library.clone(), self.fresh_state());
                let result = json!({
                    "num_data": ctx.model.num_data(),
                    "som_dims": [ctx.model.som.rows, ctx.model.som.cols],
                    "seed": self.settings.seed,
                });
                self.loaded = Some(Loaded {
                    ctx,
                    library,
                    perf,
                    base: self.clock,
                    scatter_pending: true,
                });
                self.apply_settings();
                Ok(result)
            }
            Command::Start {
                max_events,
                duration,
            } => {
                self.require_model()?;
                let until = duration.map(|d| self.clock + (d * SAMPLE_RATE as f64).round() as u64);
                self.run = Some(Run {
                    max_events,
                    until,
                    events: 0,
                });
                self.next_viz = self.next_viz.max(self.time());
                Ok(json!({"running": true}))
            }
            Command::Stop => {
                self.run = None;
                if let Some(l) = &mut self.loaded {
                    l.perf.stop_voices();
                }
                Ok(json!({"running": false}))
            }
            Command::Restart => {
                self.require_model()?;
                let state = self.fresh_state();
                let l = self.loaded.as_mut().expect("checked above");
                l.perf = Performance::new(Arc::clone(&l.ctx), l.library.clone(), state);
                l.base = self.clock;
                self.apply_settings();
                Ok(json!({"running": self.is_running()}))
            }
            Command::Mute(on) => {
                self.settings.muted = on;
                self.apply_settings();
                Ok(json!({"muted": on}))
            }
            Command::SetMode { mode, frames } => {
                if frames.is_some() {
                    self.require_model()?;
                }
                self.settings.mode = mode;
                if let Some(l) = &mut self.loaded {
                    l.perf.state.set_mode(mode);
                    for f in frames.iter().flatten() {
                        l.perf.push_live_frame(*f);
                    }
                }
                let queued = self.loaded.as_ref().map_or(0, |l| l.perf.pending_live_frames());
                Ok(json!({"mode": mode, "live_frames": queued}))
            }
            Command::SetParams(patch) => {
                let mut params = self.settings.params;
                patch.apply(&mut params);
                params.validate()?;
                if let Some(d) = patch.som_dimension {
                    let dims = self.loaded.as_ref().map_or(VECTOR_DIMS, |l| l.ctx.model.som.dims);
                    if d >= dims {
                        return Err(ErrorBody::invalid(
                            "som_dimension",
                            format!("som_dimension must be < {dims}"),
                            Some(&format!("[0, {}]", dims - 1)),
                        ));
                    }
                    self.settings.som_dimension = d;
                }
                self.settings.params = params;
                if let Some(e) = patch.explore {
                    self.settings.explore = e;
                }
                self.apply_settings();
                Ok(self.params_json())
            }
            Command::SetWeights(w) => {
                w.validate()?;
                self.settings.weights = w;
                self.apply_settings();
                Ok(json!({"weights": self.weights_json()}))
            }
            Command::SetTriggerMode(mode) => {
                self.settings.trigger = mode;
                if let Some(l) = &mut self.loaded {
                    l.perf.state.set_trigger_mode(mode);
                }
                Ok(json!({"trigger_mode": mode}))
            }
            Command::Subscribe(kinds) => {
                let list: Vec<&str> = kinds.iter().map(|k| k.as_str()).collect();
                match self.subscribers.iter_mut().find(|s| Arc::ptr_eq(&s.outbox, reply)) {
                    Some(s) => s.kinds = kinds,
                    None => self.subscribers.push(Subscriber {
                        outbox: Arc::clone(reply),
                        kinds,
                    }),
                }
                self.subscribers.retain(|s| !s.kinds.is_empty());
                Ok(json!({"kinds": list}))
            }
            Command::QueryState {
                scatter,
                som_dimension,
            } => {
                let mut result = self.snapshot();
                if let Some(axes) = scatter {
                    let l = self.require_model()?;
                    let points = scatter_data(&l.ctx.space, axes)?;
                    let (x, y) = axes.names();
                    result["scatter"] = json!({"x": x, "y": y, "points": points});
                }
                if let Some(d) = som_dimension {
                    let l = self.require_model()?;
                    let values = l.ctx.model.som.node_grid_values(d)?;
                    result["som_grid"] = self.grid_json(d, values);
                }
                Ok(result)
            }
            Command::Reject(e) => Err(e),
            Command::Disconnect => Ok(Value::Null),
        }
    }

    fn require_model(&self) -> Result<&Loaded, ErrorBody> {
        self.loaded
            .as_ref()
            .ok_or_else(|| ErrorBody::new("no_model", "no model is loaded; send load_model first"))
    }

    fn fresh_state(&self) -> AgentState {
        let s = &self.settings;
        let mut state = AgentState::new(s.mode, s.params, s.seed);
        state.weights = s.weights.clone();
        state.set_trigger_mode(s.trigger);
        state.walk.explore = s.explore;
        state
    }

    /// Pushes the settings into the running performance.
    fn apply_settings(&mut self) {
        let s = &self.settings;
        if let Some(l) = &mut self.loaded {
            let st = &mut l.perf.state;
            st.params = s.params;
            st.weights = s.weights.clone();
            st.walk.explore = s.explore;
            st.set_mode(s.mode);
            if st.trigger.mode() != s.trigger {
                st.set_trigger_mode(s.trigger);
            }
            l.perf.muted = s.muted;
        }
    }

    fn params_json(&self) -> Value {
        let mut v = serde_json::to_value(self.settings.params).expect("params serialize");
        v["explore"] = json!(self.settings.explore);
        v["forward_jump"] = json!(self.settings.params.p_forward * 100.0);
        v["som_dimension"] = json!(self.settings.som_dimension);
        v["interval_seconds"] = json!(self.settings.params.interval());
        v
    }

    fn weights_json(&self) -> Value {
        let mut m = Map::new();
        for (i, w) in self.settings.weights.0.iter().enumerate() {
            m.insert(axis_name(i).unwrap_or("?").to_string(), json!(w));
        }
        Value::Object(m)
    }

    fn grid_json(&self, dimension: usize, values: Vec<f64>) -> Value {
        let som = &self.loaded.as_ref().expect("model loaded").ctx.model.som;
        json!({
            "rows": som.rows,
            "cols": som.cols,
            "dimension": dimension,
            "dimension_name": axis_name(dimension),
            "values": values,
        })
    }

    /// Current engine state as sent in `state_snapshot`.
    pub fn snapshot(&self) -> Value {
        let model = self.loaded.as_ref().map(|l| {
            json!({
                "num_data": l.ctx.model.num_data(),
                "som_dims": [l.ctx.model.som.rows, l.ctx.model.som.cols],
                "nodes": l.ctx.model.som.node_count(),
            })
        });
        let agent = self.loaded.as_ref().map(|l| {
            let st = &l.perf.state;
            json!({
                "current_node": st.current_node,
                "previous_node": st.previous_node,
                "playing_segment": st.playing_segment,
                "scene_remaining": st.scene_remaining,
                "bmu_history": st.bmu_history,
                "events_emitted": st.events_emitted,
                "pending_live_frames": l.perf.pending_live_frames(),
            })
        });
        json!({
            "time": self.time(),
            "running": self.is_running(),
            "muted": self.settings.muted,
            "mode": self.settings.mode,
            "trigger_mode": self.settings.trigger,
            "seed": self.settings.seed,
            "params": self.params_json(),
            "weights": self.weights_json(),
            "model": model,
            "agent": agent,
            "max_control_latency_samples": self.max_latency,
        })
    }

    fn emit(&mut self, kind: EventKind, data: Value) {
        self.emit_at(kind, self.time(), data);
    }

    fn emit_at(&mut self, kind: EventKind, t: f64, data: Value) {
        self.seq += 1;
        let line = EventMessage::new(kind, t, self.seq, data).to_line();
        self.subscribers.retain(|s| !s.outbox.is_closed());
        for s in &self.subscribers {
            if s.kinds.contains(&kind) {
                s.outbox.push_event(kind, line.clone());
            }
        }
    }

    fn node_json(ev: &NodeEvent, pb: &PlaybackEvent, t: f64) -> Value {
        json!({
            "t": t,
            "node": ev.node,
            "segment": ev.segment,
            "dur": ev.dur,
            "artist": ev.artist,
            "song": ev.song,
            "rendered_seconds": pb.rendered_seconds,
        })
    }

    /// Renders one block when running. Returns the audio, or `None` while
    /// stopped.
    pub fn render_block(&mut self) -> Option<&[f32]> {
        self.run?;
        let l = self.loaded.as_mut()?;
        let base = secs(l.base);
        let report = l.perf.render_block(&mut self.block);
        self.clock += BLOCK_SIZE as u64;
        let report = match report {
            Ok(r) => r,
            Err(e) => {
                let body = ErrorBody::from(e);
                self.run = None;
                self.emit(EventKind::Error, json!(body));
                let snap = self.snapshot();
                self.emit(EventKind::StateSnapshot, snap);
                return None;
            }
        };
        for (ev, pb) in &report.events {
            let t = base + ev.t;
            self.emit_at(EventKind::NodePlayed, t, Self::node_json(ev, pb, t));
        }
        for _ in 0..report.scene_boundaries {
            let remaining = self.loaded.as_ref().map_or(0.0, |l| l.perf.state.scene_remaining);
            self.emit(EventKind::SceneBoundary, json!({"scene_remaining": remaining}));
        }
        let now = self.time();
        if now >= self.next_viz {
            self.emit_viz();
            while self.next_viz <= now {
                self.next_viz += 1.0 / VIZ_RATE_HZ;
            }
        }
        let run = self.run.as_mut().expect("running");
        run.events += report.events.len() as u64;
        let done = run.max_events.is_some_and(|m| run.events >= m)
            || run.until.is_some_and(|u| self.clock >= u);
        if done {
            self.run = None;
            let snap = self.snapshot();
            self.emit(EventKind::StateSnapshot, snap);
        }
        Some(&self.block)
    }

    fn emit_viz(&mut self) {
        let Some(l) = self.loaded.as_mut() else { return };
        let scatter = if l.scatter_pending {
            l.scatter_pending = false;
            scatter_data(&l.ctx.space, ScatterAxes::default()).ok()
        } else {
            None
        };
        let d = self.settings.som_dimension;
        let l = self.loaded.as_ref().expect("loaded");
        let values = l.ctx.model.som.node_grid_values(d).unwrap_or_default();
        let st = &l.perf.state;
        let mut data = json!({
            "bark": l.perf.bark().to_vec(),
            "som_grid": self.grid_json(d, values),
            "current_node": st.current_node,
            "previous_node": st.previous_node,
            "selected_segment": st.playing_segment,
            "scene_remaining": st.scene_remaining,
        });
        if let Some(points) = scatter {
            data["scatter"] = json!({"x": "centroid", "y": "periodicity", "points": points});
        }
        self.emit(EventKind::VizFrame, data);
    }
}
