//! Implementation of the `corpus-agent` subcommands, kept in a library so
//! tests can drive them without spawning the binary.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use corpus_agent_core::agent::{
    analyze_segment, render_reactive, render_session, train_pipeline, AgentContext, AgentMode,
    AgentState, NodeEvent, SessionOutput, TrainConfig,
};
use corpus_agent_core::corpus::{load_model, load_wav, render_wav, save_model, scan_corpus, AudioLibrary, LoadOptions};
use corpus_agent_core::features::{analyze_buffer, segment_vector, Vector31, VECTOR_NAMES};
use corpus_agent_core::segmentation::segment;
use corpus_agent_core::synth::{PlaybackEvent, PlaybackParams, TriggerMode};
use serde::Serialize;
use serde_json::json;

/// Reads a training config from TOML, or JSON when the extension is `.json`.
/// Missing fields keep their defaults.
pub fn load_train_config(path: Option<&Path>) -> Result<TrainConfig> {
    let Some(path) = path else {
        return Ok(TrainConfig::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_json = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let config: TrainConfig = if is_json {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    config.segmentation.validate()?;
    Ok(config)
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzedSegment {
    pub segment_id: usize,
    /// Path relative to the analyzed folder, or the file name.
    pub file: String,
    pub start_s: f64,
    pub dur_s: f64,
    pub start_sample: usize,
    pub length_samples: usize,
    #[serde(skip)]
    pub vector: Vector31,
}

fn input_files(input: &Path) -> Result<(PathBuf, Vec<PathBuf>)> {
    if input.is_dir() {
        let manifest = scan_corpus(input)?;
        Ok((input.to_path_buf(), manifest.entries.into_iter().map(|e| e.path).collect()))
    } else if input.is_file() {
        let root = input.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((root, vec![input.to_path_buf()]))
    } else {
        bail!("{} is neither a file nor a directory", input.display())
    }
}

/// Segments and describes one file or every `.wav` under a folder.
pub fn analyze(input: &Path, config: &TrainConfig) -> Result<Vec<AnalyzedSegment>> {
    let (root, files) = input_files(input)?;
    let options = LoadOptions {
        resample: config.resample,
    };
    let mut out = Vec::new();
    for path in files {
        let buffer = load_wav(&path, options).with_context(|| format!("loading {}", path.display()))?;
        let file = path
            .strip_prefix(&root)
            .unwrap_or(&path)
            .to_string_lossy()
            .replace('\\', "/");
        for seg in segment(&buffer, &config.segmentation)? {
            let audio = buffer.slice(seg.start_sample, seg.length_samples);
            let stats = analyze_segment(&audio)?;
            out.push(AnalyzedSegment {
                segment_id: out.len(),
                file: file.clone(),
                start_s: seg.start_seconds,
                dur_s: seg.duration_seconds,
                start_sample: seg.start_sample,
                length_samples: seg.length_samples,
                vector: segment_vector(&stats),
            });
        }
    }
    Ok(out)
}

/// One row per segment: id, file, start, duration, then the 31 vector
/// columns ending in valence and arousal.
pub fn write_analysis_csv<W: Write>(segments: &[AnalyzedSegment], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["segment_id", "file", "start_s", "dur_s"];
    header.extend(VECTOR_NAMES);
    w.write_record(&header)?;
    for s in segments {
        let mut row = vec![s.segment_id.to_string(), s.file.clone(), s.start_s.to_string(), s.dur_s.to_string()];
        row.extend(s.vector.0.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_segments_json<W: Write>(segments: &[AnalyzedSegment], mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, segments)?;
    writeln!(out)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainSummary {
    pub num_data: usize,
    pub rows: usize,
    pub cols: usize,
}

impl std::fmt::Display for TrainSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "numData: {}", self.num_data)?;
        write!(f, "SOM dims: {} x {} ({} nodes)", self.rows, self.cols, self.rows * self.cols)
    }
}

/// Trains on `corpus` and writes the model folder to `out`.
pub fn train(corpus: &Path, out: &Path, config: &TrainConfig) -> Result<TrainSummary> {
    // absolute paths keep the model playable from any working directory
    let corpus = corpus
        .canonicalize()
        .with_context(|| format!("corpus folder {}", corpus.display()))?;
    let model = train_pipeline(&corpus, config)?;
    save_model(&model, out).with_context(|| format!("writing model to {}", out.display()))?;
    Ok(TrainSummary {
        num_data: model.num_data(),
        rows: model.som.rows,
        cols: model.som.cols,
    })
}

#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub model: PathBuf,
    pub duration: f64,
    pub seed: u64,
    pub mode: AgentMode,
    pub trigger: TriggerMode,
    pub explore: bool,
    pub params: PlaybackParams,
    pub out: PathBuf,
    pub trace: Option<PathBuf>,
}

fn open_model(dir: &Path) -> Result<(Arc<AgentContext>, AudioLibrary)> {
    let model = load_model(dir).with_context(|| format!("loading model {}", dir.display()))?;
    let library = AudioLibrary::for_manifest(&model.manifest, LoadOptions { resample: true });
    Ok((Arc::new(AgentContext::new(Arc::new(model))?), library))
}

fn agent_state(mode: AgentMode, params: PlaybackParams, seed: u64, trigger: TriggerMode, explore: bool) -> AgentState {
    let mut state = AgentState::new(mode, params, seed);
    state.set_trigger_mode(trigger);
    state.walk.explore = explore;
    state
}

fn finish(output: &SessionOutput, out: &Path, trace: Option<&Path>) -> Result<()> {
    render_wav(&output.audio, out).with_context(|| format!("writing {}", out.display()))?;
    if let Some(gain) = output.log.normalization_gain {
        log::info!("peak {:.3} normalized by {gain:.4}", output.log.peak);
    }
    if let Some(path) = trace {
        let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_trace(&output.events, BufWriter::new(file))?;
    }
    Ok(())
}

/// Offline render of a macat or proactive session.
pub fn generate(opts: &GenerateOptions) -> Result<SessionOutput> {
    if opts.mode == AgentMode::Reactive {
        bail!("reactive mode needs live input; use `listen --input FILE.wav`");
    }
    let (ctx, library) = open_model(&opts.model)?;
    let state = agent_state(opts.mode, opts.params, opts.seed, opts.trigger, opts.explore);
    let output = render_session(ctx, library, state, opts.duration)?;
    finish(&output, &opts.out, opts.trace.as_deref())?;
    Ok(output)
}

#[derive(Debug, Clone)]
pub struct ListenOptions {
    pub model: PathBuf,
    pub input: PathBuf,
    pub seed: u64,
    pub trigger: TriggerMode,
    pub params: PlaybackParams,
    pub out: PathBuf,
    pub trace: Option<PathBuf>,
}

/// Reactive session driven by an input file, rendered for its duration.
pub fn listen(opts: &ListenOptions) -> Result<SessionOutput> {
    let (ctx, library) = open_model(&opts.model)?;
    let input = load_wav(&opts.input, LoadOptions { resample: true })
        .with_context(|| format!("loading {}", opts.input.display()))?;
    let frames = analyze_buffer(&input)?;
    let state = agent_state(AgentMode::Reactive, opts.params, opts.seed, opts.trigger, false);
    let output = render_reactive(ctx, library, state, &frames)?;
    finish(&output, &opts.out, opts.trace.as_deref())?;
    Ok(output)
}

/// One JSON object per played segment.
pub fn write_trace<W: Write>(events: &[(NodeEvent, PlaybackEvent)], mut out: W) -> io::Result<()> {
    for (node, play) in events {
        let line = json!({
            "t": node.t,
            "onset_seconds": play.onset_seconds,
            "node": node.node,
            "segment": node.segment,
            "dur": node.dur,
            "artist": node.artist,
            "song": node.song,
            "rendered_seconds": play.rendered_seconds,
            "params": play.params,
        });
        writeln!(out, "{line}")?;
    }
    out.flush()
}
