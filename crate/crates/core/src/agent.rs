//! Training pipeline and the three improvisation behaviours.
//!
//! * macat: listen to the agent's own output, walk the node oracle, pick a
//!   segment from the predicted node's cluster.
//! * proactive: walk the segment oracle and play its segments directly.
//! * reactive: match live input descriptors against the corpus.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    load_wav, scan_corpus, AudioBuffer, AudioLibrary, CorpusManifest, LoadOptions, TrainedModel,
    FORMAT_VERSION, SAMPLE_RATE,
};
use crate::error::{Error, Result};
use crate::features::{
    analyze_buffer, bark_bands, segment_vector, FrameFeatures, RunningStats, SegmentStats,
    NUM_BARK_BANDS, VECTOR_DIMS, WINDOW_SIZE,
};
use crate::mosaic::{knn_query, DescriptorSpace, FeatureWeights};
use crate::oracle::{walk_step, FactorOracle, Symbol, WalkState};
use crate::segmentation::{segment, Segment, SegmentationConfig};
use crate::som::{default_dims, node_sequence, train_som, Normalization, SomTrainingSchedule};
use crate::synth::{
    normalize_if_clipping, prepare, CorpusAudio, GateInput, Mixer, PlaybackEvent, PlaybackParams,
    RenderLog, SegmentSource, TriggerGate, TriggerMode, BLOCK_SIZE,
};

pub const SCENE_SECONDS: f64 = 60.0;
const BMU_HISTORY: usize = 64;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub segmentation: SegmentationConfig,
    /// SOM grid as (rows, cols); chosen from the corpus size when absent.
    pub som_dims: Option<(usize, usize)>,
    pub epochs: Option<usize>,
    pub seed: u64,
    /// Accept non-44.1 kHz files by resampling them.
    pub resample: bool,
}

/// Frame statistics of one audio slice.
pub fn analyze_segment(audio: &AudioBuffer) -> Result<SegmentStats> {
    SegmentStats::from_frames(&analyze_buffer(audio)?)
}

/// Trains from decoded audio, one buffer per manifest entry.
pub fn train_from_buffers(
    manifest: CorpusManifest,
    buffers: &[AudioBuffer],
    config: &TrainConfig,
) -> Result<TrainedModel> {
    if buffers.len() != manifest.entries.len() {
        return Err(Error::DimensionMismatch {
            expected: manifest.entries.len(),
            got: buffers.len(),
        });
    }
    let mut segments: Vec<Segment> = Vec::new();
    let mut stats = Vec::new();
    for (source_index, buffer) in buffers.iter().enumerate() {
        for mut seg in segment(buffer, &config.segmentation)? {
            let audio = buffer.slice(seg.start_sample, seg.length_samples);
            stats.push(analyze_segment(&audio)?);
            seg.id = segments.len();
            seg.source_index = source_index;
            segments.push(seg);
        }
    }
    if segments.len() < 2 {
        return Err(Error::NotEnoughData {
            needed: 2,
            got: segments.len(),
        });
    }
    log::info!("{} segments from {} files", segments.len(), buffers.len());

    let mut feature_matrix = Vec::with_capacity(segments.len() * VECTOR_DIMS);
    for s in &stats {
        feature_matrix.extend(segment_vector(s).0.iter().map(|&x| x as f32));
    }
    let vectors: Vec<Vec<f64>> = feature_matrix
        .chunks_exact(VECTOR_DIMS)
        .map(|row| row.iter().map(|&x| x as f64).collect())
        .collect();
    let normalization = Normalization::fit(&vectors)?;
    let normalized: Vec<Vec<f64>> = vectors.iter().map(|v| normalization.apply(v)).collect();

    let (rows, cols) = config.som_dims.unwrap_or_else(|| default_dims(segments.len()));
    let mut schedule = SomTrainingSchedule::default_for(segments.len(), rows, cols);
    if let Some(epochs) = config.epochs {
        schedule.epochs = epochs;
    }
    let som = train_som(&normalized, rows, cols, &schedule, config.seed)?;
    let nodes = node_sequence(&som, &normalized)?;
    for (seg, &node) in segments.iter_mut().zip(&nodes) {
        seg.cluster_node = Some(node);
    }
    let segment_sequence: Vec<usize> = (0..segments.len()).collect();
    let as_symbols = |v: &[usize]| v.iter().map(|&x| x as Symbol).collect::<Vec<_>>();
    let oracle_nodes = FactorOracle::build(&as_symbols(&nodes))?;
    let oracle_segments = FactorOracle::build(&as_symbols(&segment_sequence))?;

    let model = TrainedModel {
        format_version: FORMAT_VERSION,
        seed: config.seed,
        manifest,
        segments,
        stats,
        feature_matrix,
        normalization,
        som,
        node_sequence: nodes,
        oracle_nodes,
        segment_sequence,
        oracle_segments,
    };
    model.validate()?;
    Ok(model)
}

/// Scans, decodes, segments, analyzes and trains on a corpus folder.
pub fn train_pipeline(corpus_dir: &Path, config: &TrainConfig) -> Result<TrainedModel> {
    let manifest = scan_corpus(corpus_dir)?;
    let options = LoadOptions {
        resample: config.resample,
    };
    let buffers = manifest
        .entries
        .iter()
        .map(|e| load_wav(&e.path, options))
        .collect::<Result<Vec<_>>>()?;
    train_from_buffers(manifest, &buffers, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentMode {
    Macat,
    Proactive,
    Reactive,
}

impl AgentMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentMode::Macat => "macat",
            AgentMode::Proactive => "proactive",
            AgentMode::Reactive => "reactive",
        }
    }
}

impl fmt::Display for AgentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "macat" => Ok(AgentMode::Macat),
            "proactive" => Ok(AgentMode::Proactive),
            "reactive" => Ok(AgentMode::Reactive),
            _ => Err(Error::invalid("mode", format!("unknown mode {s}; expected macat, proactive or reactive"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEvent {
    pub t: f64,
    pub node: usize,
    pub segment: usize,
    pub dur: f64,
    pub artist: String,
    pub song: String,
}

/// Read-only data shared by every agent over one model.
#[derive(Debug)]
pub struct AgentContext {
    pub model: Arc<TrainedModel>,
    pub space: DescriptorSpace,
    pub clusters: Vec<Vec<usize>>,
}

impl AgentContext {
    pub fn new(model: Arc<TrainedModel>) -> Result<Self> {
        model.validate()?;
        Ok(AgentContext {
            space: DescriptorSpace::from_model(&model)?,
            clusters: model.clusters(),
            model,
        })
    }

    fn event(&self, t: f64, segment: usize) -> NodeEvent {
        let seg = &self.model.segments[segment];
        let (artist, song) = self.model.artist_song(segment);
        NodeEvent {
            t,
            node: seg.cluster_node.unwrap_or(0),
            segment,
            dur: seg.duration_seconds,
            artist: artist.to_string(),
            song: song.to_string(),
        }
    }

    /// `node` itself if its cluster has segments, otherwise the closest
    /// non-empty node by grid distance (lower id on ties).
    pub fn playable_node(&self, node: usize) -> usize {
        if !self.clusters[node].is_empty() {
            return node;
        }
        let som = &self.model.som;
        (0..som.node_count())
            .filter(|&n| !self.clusters[n].is_empty())
            .min_by_key(|&n| (som.grid_distance(node, n), n))
            .unwrap_or(node)
    }
}

#[derive(Debug, Clone)]
pub struct AgentState {
    pub mode: AgentMode,
    pub walk: WalkState,
    pub current_node: Option<usize>,
    pub previous_node: Option<usize>,
    pub playing_segment: Option<usize>,
    /// Self-listening statistics (macat, proactive) or live input (reactive).
    pub listening: RunningStats,
    pub params: PlaybackParams,
    pub weights: FeatureWeights,
    pub trigger: TriggerGate,
    /// Seconds left in the current scene.
    pub scene_remaining: f64,
    pub bmu_history: VecDeque<usize>,
    pub events_emitted: u64,
    seed: u64,
    rng: ChaCha8Rng,
}

impl AgentState {
    pub fn new(mode: AgentMode, params: PlaybackParams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        AgentState {
            mode,
            walk: WalkState::new(seed),
            current_node: None,
            previous_node: None,
            playing_segment: None,
            listening: RunningStats::new(),
            params,
            weights: FeatureWeights::uniform(),
            trigger: TriggerGate::new(TriggerMode::Cont),
            scene_remaining: SCENE_SECONDS,
            bmu_history: VecDeque::new(),
            events_emitted: 0,
            seed,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Switches behaviour. The oracle walk restarts because the two oracles
    /// have different state spaces.
    pub fn set_mode(&mut self, mode: AgentMode) {
        if mode != self.mode {
            let explore = self.walk.explore;
            self.walk = WalkState::new(self.seed.wrapping_add(self.events_emitted));
            self.walk.explore = explore;
            self.mode = mode;
            self.listening.reset();
        }
    }

    pub fn set_trigger_mode(&mut self, mode: TriggerMode) {
        self.trigger = TriggerGate::new(mode);
    }

    fn emit(&mut self, ctx: &AgentContext, t: f64, segment: usize) -> NodeEvent {
        let event = ctx.event(t, segment);
        self.previous_node = self.current_node;
        self.current_node = Some(event.node);
        self.playing_segment = Some(segment);
        self.listening.reset();
        self.events_emitted += 1;
        event
    }
}

fn require_mode(state: &AgentState, mode: AgentMode) -> Result<()> {
    if state.mode != mode {
        return Err(Error::invalid(
            "mode",
            format!("agent is in {} mode, not {}", state.mode, mode),
        ));
    }
    Ok(())
}

/// One macat decision: perceive own output, predict the next node, pick a
/// segment from it.
pub fn macat_step(ctx: &AgentContext, state: &mut AgentState, now: f64) -> Result<NodeEvent> {
    require_mode(state, AgentMode::Macat)?;
    if !ctx.model.som.trained {
        return Err(Error::Untrained);
    }
    if state.listening.count() > 0 {
        let heard = segment_vector(&state.listening.finalize()?);
        let bmu = ctx
            .model
            .som
            .bmu(&ctx.model.normalization.apply_clamped(heard.as_slice()))?;
        state.bmu_history.push_back(bmu);
        if state.bmu_history.len() > BMU_HISTORY {
            state.bmu_history.pop_front();
        }
    }
    let predicted = walk_step(&ctx.model.oracle_nodes, &mut state.walk, state.params.p_forward) as usize;
    let node = ctx.playable_node(predicted);
    let cluster = &ctx.clusters[node];
    let segment = cluster[state.rng.random_range(0..cluster.len())];
    Ok(state.emit(ctx, now, segment))
}

/// One proactive decision: the next segment from the segment oracle.
pub fn proactive_step(ctx: &AgentContext, state: &mut AgentState, now: f64) -> Result<NodeEvent> {
    require_mode(state, AgentMode::Proactive)?;
    let segment = walk_step(&ctx.model.oracle_segments, &mut state.walk, state.params.p_forward) as usize;
    Ok(state.emit(ctx, now, segment))
}

/// Feeds one live analysis frame spanning `[now, now + span)`. Emits an
/// event when the trigger gate opens.
pub fn reactive_step(
    ctx: &AgentContext,
    state: &mut AgentState,
    frame: &FrameFeatures,
    now: f64,
    span: f64,
) -> Result<Option<NodeEvent>> {
    require_mode(state, AgentMode::Reactive)?;
    state.weights.validate()?;
    state.listening.update(frame);
    let target = ctx.space.target(&state.listening.finalize()?, None);
    let nearest = knn_query(&ctx.space, &target, &state.weights, 1)?[0];
    let input = GateInput {
        now,
        span,
        interval: state.params.interval(),
        target: &target.0,
        nearest,
    };
    let Some(onset) = state.trigger.poll(&input) else {
        return Ok(None);
    };
    let segment = match state.playing_segment {
        Some(s) if state.trigger.repeats_selection() && s == nearest => s,
        _ => nearest,
    };
    Ok(Some(state.emit(ctx, onset, segment)))
}

/// Advances the scene countdown; returns how many scene boundaries passed.
pub fn scene_clock(state: &mut AgentState, dt: f64) -> u32 {
    let dt = dt.max(0.0);
    if dt == 0.0 {
        return 0;
    }
    state.scene_remaining -= dt;
    let mut boundaries = 0;
    while state.scene_remaining <= 0.0 {
        state.scene_remaining += SCENE_SECONDS;
        boundaries += 1;
    }
    boundaries
}

/// What happened during one rendered block.
#[derive(Debug, Clone, Default)]
pub struct BlockReport {
    pub events: Vec<(NodeEvent, PlaybackEvent)>,
    pub scene_boundaries: u32,
}

/// Block-driven agent: schedules events, mixes their audio and listens to
/// the result.
pub struct Performance {
    ctx: Arc<AgentContext>,
    library: AudioLibrary,
    pub state: AgentState,
    mixer: Mixer,
    clock: u64,
    next_trigger: f64,
    heard: VecDeque<f32>,
    live: VecDeque<FrameFeatures>,
    bark: [f64; NUM_BARK_BANDS],
    pub muted: bool,
}

impl Performance {
    pub fn new(ctx: Arc<AgentContext>, library: AudioLibrary, state: AgentState) -> Self {
        Performance {
            ctx,
            library,
            state,
            mixer: Mixer::new(SAMPLE_RATE),
            clock: 0,
            next_trigger: 0.0,
            heard: VecDeque::with_capacity(WINDOW_SIZE),
            live: VecDeque::new(),
            bark: [0.0; NUM_BARK_BANDS],
            muted: false,
        }
    }

    pub fn context(&self) -> &Arc<AgentContext> {
        &self.ctx
    }

    /// Engine time in seconds.
    pub fn time(&self) -> f64 {
        self.clock as f64 / SAMPLE_RATE as f64
    }

    pub fn samples_rendered(&self) -> u64 {
        self.clock
    }

    /// Bark band energies of the latest self-listening frame.
    pub fn bark(&self) -> &[f64; NUM_BARK_BANDS] {
        &self.bark
    }

    /// Queues a live analysis frame; reactive mode consumes one per block.
    pub fn push_live_frame(&mut self, frame: FrameFeatures) {
        self.live.push_back(frame);
    }

    pub fn pending_live_frames(&self) -> usize {
        self.live.len()
    }

    /// Silences playback and restarts the trigger grid at the current time.
    pub fn stop_voices(&mut self) {
        self.mixer.clear();
        self.next_trigger = self.time();
    }

    fn schedule(&mut self, event: &NodeEvent, block_start: u64, block_len: usize) -> Result<PlaybackEvent> {
        let params = self.state.params;
        let source = CorpusAudio {
            model: &self.ctx.model,
            library: &self.library,
        };
        let audio = match source.segment_audio(event.segment) {
            Ok(a) => prepare(&a, &params)?,
            Err(e) => {
                log::warn!("segment {} has no audio: {e}", event.segment);
                Vec::new()
            }
        };
        let onset = (event.t * SAMPLE_RATE as f64).round() as u64;
        let offset = onset.saturating_sub(block_start).min(block_len as u64 - 1) as usize;
        let rendered_seconds = audio.len() as f64 / SAMPLE_RATE as f64;
        self.mixer.start(audio, offset, params.one_shot);
        if self.state.mode == AgentMode::Reactive {
            self.state.trigger.note_playback(event.t, rendered_seconds);
        }
        Ok(PlaybackEvent {
            onset_seconds: event.t,
            segment: event.segment,
            params,
            rendered_seconds,
        })
    }

    /// Renders the next block into `out` (at most [`BLOCK_SIZE`] samples).
    pub fn render_block(&mut self, out: &mut [f32]) -> Result<BlockReport> {
        let n = out.len();
        let t0 = self.time();
        let span = n as f64 / SAMPLE_RATE as f64;
        let t1 = t0 + span;
        let mut report = BlockReport::default();

        let mut decided = Vec::new();
        match self.state.mode {
            AgentMode::Macat | AgentMode::Proactive => {
                if self.next_trigger < t0 {
                    self.next_trigger = t0;
                }
                while self.next_trigger < t1 - 1e-12 {
                    let at = self.next_trigger;
                    let ev = if self.state.mode == AgentMode::Macat {
                        macat_step(&self.ctx, &mut self.state, at)?
                    } else {
                        proactive_step(&self.ctx, &mut self.state, at)?
                    };
                    decided.push(ev);
                    self.next_trigger += self.state.params.interval();
                }
            }
            AgentMode::Reactive => {
                if let Some(frame) = self.live.pop_front() {
                    if let Some(ev) = reactive_step(&self.ctx, &mut self.state, &frame, t0, span)? {
                        decided.push(ev);
                    }
                }
            }
        }
        for ev in decided {
            let playback = self.schedule(&ev, self.clock, n)?;
            report.events.push((ev, playback));
        }

        self.mixer.render(out);
        self.listen(out);
        if self.muted {
            out.fill(0.0);
        }
        report.scene_boundaries = scene_clock(&mut self.state, span);
        self.clock += n as u64;
        Ok(report)
    }

    fn listen(&mut self, block: &[f32]) {
        for &s in block {
            if self.heard.len() == WINDOW_SIZE {
                self.heard.pop_front();
            }
            self.heard.push_back(s);
        }
        if self.heard.len() < WINDOW_SIZE {
            return;
        }
        let analyzer = crate::features::Analyzer::shared();
        let frame = analyzer.frame(self.heard.iter().map(|&s| s as f64).collect());
        self.bark = bark_bands(&frame.magnitude);
        if self.state.mode != AgentMode::Reactive {
            let features = analyzer.describe(&frame.magnitude, &frame.samples);
            self.state.listening.update(&features);
        }
    }
}

#[derive(Debug, Clone)]
pub struct SessionOutput {
    pub audio: AudioBuffer,
    pub log: RenderLog,
    pub events: Vec<(NodeEvent, PlaybackEvent)>,
    pub scene_boundaries: u32,
}

/// Offline render of an agent session of `duration_seconds`.
pub fn render_session(
    ctx: Arc<AgentContext>,
    library: AudioLibrary,
    state: AgentState,
    duration_seconds: f64,
) -> Result<SessionOutput> {
    if !(duration_seconds > 0.0 && duration_seconds.is_finite()) {
        return Err(Error::invalid("duration", "duration must be > 0"));
    }
    state.params.validate()?;
    let total = (duration_seconds * SAMPLE_RATE as f64).round() as usize;
    render_session_with(Performance::new(ctx, library, state), total)
}

fn render_session_with(mut perf: Performance, total: usize) -> Result<SessionOutput> {
    let mut out = vec![0.0f32; total];
    let mut events = Vec::new();
    let mut scene_boundaries = 0;
    for start in (0..total).step_by(BLOCK_SIZE) {
        let end = (start + BLOCK_SIZE).min(total);
        let report = perf.render_block(&mut out[start..end])?;
        events.extend(report.events);
        scene_boundaries += report.scene_boundaries;
    }
    let log = normalize_if_clipping(&mut out);
    Ok(SessionOutput {
        audio: AudioBuffer::mono(out, SAMPLE_RATE),
        log,
        events,
        scene_boundaries,
    })
}

/// Offline reactive render: `frames` are fed one per block as the live
/// input, and the output lasts as long as the input.
pub fn render_reactive(
    ctx: Arc<AgentContext>,
    library: AudioLibrary,
    mut state: AgentState,
    frames: &[FrameFeatures],
) -> Result<SessionOutput> {
    if frames.is_empty() {
        return Err(Error::EmptyAudio);
    }
    state.set_mode(AgentMode::Reactive);
    state.params.validate()?;
    let mut perf = Performance::new(ctx, library, state);
    for f in frames {
        perf.push_live_frame(*f);
    }
    render_session_with(perf, frames.len() * BLOCK_SIZE)
}
