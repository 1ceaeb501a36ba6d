use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use corpus_agent_cli::{
    analyze, generate, listen, load_train_config, train, write_analysis_csv, write_segments_json, GenerateOptions,
    ListenOptions,
};
use corpus_agent_core::agent::AgentMode;
use corpus_agent_core::synth::{PlaybackParams, TriggerMode};
use corpus_agent_service::{ClockMode, Server, ServerConfig};

#[derive(Parser)]
#[command(name = "corpus-agent", version, about = "Corpus-based musical agent")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment and describe a WAV file or folder, as CSV.
    Analyze {
        input: PathBuf,
        /// Dump segment boundaries as JSON instead.
        #[arg(long)]
        segments: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Accept non-44.1 kHz files by resampling them.
        #[arg(long)]
        resample: bool,
    },
    /// Train a model folder from a corpus folder.
    Train {
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, num_args = 2, value_names = ["ROWS", "COLS"])]
        som_dims: Option<Vec<usize>>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        resample: bool,
    },
    /// Render an offline session to a WAV file.
    Generate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 30.0)]
        duration: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "macat")]
        mode: AgentMode,
        #[command(flatten)]
        playback: Playback,
        /// Forward steps pick any oracle edge instead of the spine.
        #[arg(long)]
        explore: bool,
        #[arg(long)]
        out: PathBuf,
        /// Write the played segments as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Reactive session following an input file.
    Listen {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "reactive")]
        mode: AgentMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        playback: Playback,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the control protocol server. The token comes from CORPUS_AGENT_TOKEN.
    Serve {
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = ClockMode::Device)]
        clock: ClockMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct Playback {
    /// Trigger rate in BPM.
    #[arg(long, default_value_t = 120.0)]
    tempo: f64,
    /// Forward-transition probability in [0, 1].
    #[arg(long, default_value_t = 0.8)]
    congruence: f64,
    #[arg(long)]
    reverse: bool,
    /// Playback speed ratio; 2.0 is an octave up.
    #[arg(long, default_value_t = 1.0)]
    resample: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pitch_cents: f64,
    #[arg(long, default_value_t = 10.0)]
    attack_ms: f64,
    #[arg(long, default_value_t = 50.0)]
    release_ms: f64,
    #[arg(long)]
    one_shot: bool,
    #[arg(long)]
    tempo_lock: bool,
    /// beat, loop, cont, bow or fence.
    #[arg(long, default_value = "cont")]
    trigger: TriggerMode,
}

impl Playback {
    fn params(&self) -> PlaybackParams {
        PlaybackParams {
            tempo: self.tempo,
            p_forward: self.congruence,
            attack_ms: self.attack_ms,
            release_ms: self.release_ms,
            reverse: self.reverse,
            resample_ratio: self.resample,
            pitch_shift_cents: self.pitch_cents,
            one_shot: self.one_shot,
            tempo_lock: self.tempo_lock,
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze {
            input,
            segments,
            config,
            out,
            resample,
        } => {
            let mut config = load_train_config(config.as_deref())?;
            config.resample |= resample;
            let rows = analyze(&input, &config)?;
            let sink: Box<dyn io::Write> = match &out {
                Some(p) => Box::new(io::BufWriter::new(
                    std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
                )),
                None => Box::new(io::stdout().lock()),
            };
            if segments {
                write_segments_json(&rows, sink)
            } else {
                write_analysis_csv(&rows, sink)
            }
        }
        Command::Train {
            corpus,
            out,
            som_dims,
            epochs,
            seed,
            config,
            resample,
        } => {
            let mut config = load_train_config(config.as_deref())?;
            if let Some(d) = som_dims {
                config.som_dims = Some((d[0], d[1]));
            }
            config.epochs = epochs.or(config.epochs);
            config.seed = seed.unwrap_or(config.seed);
            config.resample |= resample;
            let summary = train(&corpus, &out, &config)?;
            println!("{summary}");
            Ok(())
        }
        Command::Generate {
            model,
            duration,
            seed,
            mode,
            playback,
            explore,
            out,
            trace,
        } => {
            let output = generate(&GenerateOptions {
                model,
                duration,
                seed,
                mode,
                trigger: playback.trigger,
                explore,
                params: playback.params(),
                out: out.clone(),
                trace,
            })?;
            println!("{} segments, {:.2} s written to {}", output.events.len(), output.audio.duration_seconds(), out.display());
            Ok(())
        }
        Command::Listen {
            model,
            input,
            mode,
            seed,
            playback,
            out,
            trace,
        } => {
            if mode != AgentMode::Reactive {
                anyhow::bail!("listen only supports --mode reactive");
            }
            let output = listen(&ListenOptions {
                model,
                input,
                seed,
                trigger: playback.trigger,
                params: playback.params(),
                out: out.clone(),
                trace,
            })?;
            println!("{} segments, {:.2} s written to {}", output.events.len(), output.audio.duration_seconds(), out.display());
            Ok(())
        }
        Command::Serve { port, host, clock, seed } => {
            let config = ServerConfig {
                clock,
                seed,
                ..ServerConfig::from_env()
            };
            let auth = if config.token.is_some() { "token required" } else { "no token" };
            let server = Server::bind((host.as_str(), port), config).with_context(|| format!("binding {host}:{port}"))?;
            println!("listening on {} ({clock} clock, {auth})", server.local_addr());
            server.wait();
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
