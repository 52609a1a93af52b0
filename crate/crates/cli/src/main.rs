use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use finequest::backends::config::BackendConfig;
use finequest::backends::{wire, Backends};
use finequest::clip::ClipTensor;
use finequest::config::EngineConfig;
use finequest::contrastive::{bucketed_n, select_key_clips, ContrastiveWeights};
use finequest::distortion::{distort, DistortionKind, DistortionSpec, SpatialVariant, TemporalVariant};
use finequest::eval::{evaluate, load_dataset, DirVideoSource};
use finequest::matcher::{match_graph, EmbeddedClip, MatchOptions};
use finequest::motion::{segment, segment_video, MotionEstimator, MotionSignal, SegmenterConfig};
use finequest::router::{Engine, Mode};
use finequest::service;
use finequest::ssgraph::{load_graph, load_graph_with, RelationEmbeddings, SportCode, SportsGraph};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_BACKEND: u8 = 3;

/// Sports video question answering without training.
#[derive(Parser)]
#[command(name = "finequest", version)]
struct Cli {
    /// Engine config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for distortions and mock backends.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Backend config (JSON); every role uses its mock when absent.
    #[arg(long, global = true)]
    backend_config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate or summarize a sports graph.
    Graph {
        #[command(subcommand)]
        action: GraphAction,
    },
    /// Segment a video (or a motion signal JSON) into sub-action proposals.
    Segment {
        video: PathBuf,
        #[command(flatten)]
        video_opts: VideoOpts,
        #[arg(long)]
        win_size: Option<usize>,
        #[arg(long, num_args = 2, value_names = ["MIN", "MAX"])]
        z_range: Option<Vec<f64>>,
        #[arg(long, num_args = 2, value_names = ["MIN", "MAX"])]
        clip_len_range: Option<Vec<usize>>,
        #[arg(long, value_enum)]
        estimator: Option<Estimator>,
    },
    /// Write a distorted copy of a clip.
    Distort {
        clip: PathBuf,
        #[command(flatten)]
        video_opts: VideoOpts,
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long, default_value_t = 0.1)]
        sigma: f64,
        #[arg(long, default_value_t = 0.5)]
        strength: f64,
        #[arg(long, value_enum, default_value_t = Spatial::GaussianNoise)]
        spatial_variant: Spatial,
        #[arg(long, value_enum, default_value_t = Temporal::Warp)]
        temporal_variant: Temporal,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score clips against a question and pick the key clips.
    Select {
        /// JSON array of clip paths, relative to the manifest.
        manifest: PathBuf,
        #[command(flatten)]
        video_opts: VideoOpts,
        #[arg(long)]
        question: String,
        #[arg(long)]
        n1: Option<usize>,
        #[arg(long)]
        alpha_s: Option<f64>,
        #[arg(long)]
        alpha_t: Option<f64>,
        #[arg(long)]
        alpha_st: Option<f64>,
    },
    /// Match one clip's embeddings against a graph.
    Match {
        graph: PathBuf,
        /// JSON array holding the caption embedding.
        #[arg(long)]
        caption_emb: PathBuf,
        /// JSON array holding the clip embedding.
        #[arg(long)]
        clip_emb: PathBuf,
        #[arg(long, default_value_t = 5)]
        n2: usize,
        #[arg(long)]
        sport: Option<SportCode>,
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Answer one question about a video.
    Answer {
        video: PathBuf,
        #[command(flatten)]
        video_opts: VideoOpts,
        #[arg(long)]
        question: String,
        /// Repeat four times for a multiple-choice question.
        #[arg(long = "option")]
        options: Vec<String>,
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long, value_enum)]
        force_mode: Option<ForceMode>,
    },
    /// Evaluate a JSON Lines dataset.
    Eval {
        dataset: PathBuf,
        /// Directory that video references resolve against; defaults to the dataset's directory.
        #[arg(long)]
        videos: Option<PathBuf>,
        #[command(flatten)]
        video_opts: VideoOpts,
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long, value_enum)]
        force_mode: Option<ForceMode>,
        /// Write the JSON report here as well as printing the table.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write the human-readable table here.
        #[arg(long)]
        report_text: Option<PathBuf>,
    },
    /// Serve question answering (or the configured backends) over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        videos: PathBuf,
        #[command(flatten)]
        video_opts: VideoOpts,
        /// Serve the backend wire protocol instead of `/answer`.
        #[arg(long)]
        backends_only: bool,
        #[arg(long, default_value_t = 4)]
        threads: usize,
    },
}

#[derive(Subcommand)]
enum GraphAction {
    Validate {
        path: PathBuf,
        /// Embed missing relation sentences with the configured embedder.
        #[arg(long)]
        compute_relations: bool,
    },
    Stats {
        path: PathBuf,
    },
}

#[derive(Args, Clone, Copy)]
struct VideoOpts {
    /// Frame rate for frame directories.
    #[arg(long, default_value_t = 25.0)]
    fps: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Estimator {
    FrameDiff,
    BackendFlow,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Spatial,
    Temporal,
    Spatiotemporal,
}

#[derive(Clone, Copy, ValueEnum)]
enum Spatial {
    GaussianNoise,
    CutMix,
    Blur,
    ColorJitter,
}

#[derive(Clone, Copy, ValueEnum)]
enum Temporal {
    Warp,
    AllShuffle,
    LocalShuffle,
    Reverse,
}

#[derive(Clone, Copy, ValueEnum)]
enum ForceMode {
    Reactive,
    Deliberative,
}

impl From<ForceMode> for Mode {
    fn from(m: ForceMode) -> Self {
        match m {
            ForceMode::Reactive => Mode::Reactive,
            ForceMode::Deliberative => Mode::Deliberative,
        }
    }
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

type Outcome<T = ()> = Result<T, Failure>;

trait Tag<T> {
    fn code(self, code: u8) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Tag<T> for Result<T, E> {
    fn code(self, code: u8) -> Outcome<T> {
        self.map_err(|e| Failure {
            code,
            error: e.into(),
        })
    }
}

/// Writes to stdout; a reader that hung up early (`| head`) is not an error.
fn emit(text: &str) -> Outcome {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e).code(EXIT_DATA),
        _ => Ok(()),
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> Outcome {
    emit(&(serde_json::to_string_pretty(v).code(EXIT_USAGE)? + "\n"))
}

struct Session {
    engine_cfg: EngineConfig,
    backend_cfg: Option<BackendConfig>,
    seed: u64,
}

impl Session {
    fn backends(&self, dim: usize) -> Outcome<Backends> {
        let mut cfg = self
            .backend_cfg
            .clone()
            .unwrap_or_else(|| BackendConfig::all_mock(dim));
        cfg.apply_env();
        cfg.build(self.seed).code(EXIT_BACKEND)
    }
}

fn load_clip(path: &Path, opts: VideoOpts) -> Outcome<ClipTensor> {
    ClipTensor::load(path, opts.fps)
        .with_context(|| format!("cannot load clip {}", path.display()))
        .code(EXIT_DATA)
}

/// A JSON object with a `values` array is a motion signal, not a clip.
fn is_signal_file(path: &Path) -> bool {
    !path.is_dir()
        && fs::read(path)
            .ok()
            .and_then(|b| serde_json::from_slice::<serde_json::Value>(&b).ok())
            .is_some_and(|v| v.get("values").is_some_and(|x| x.is_array()))
}

fn load_graph_opt(path: Option<&Path>) -> Outcome<Option<SportsGraph>> {
    path.map(|p| load_graph(p).with_context(|| format!("cannot load graph {}", p.display())))
        .transpose()
        .code(EXIT_DATA)
}

fn engine(ctx: &Session, graph: Option<SportsGraph>) -> Outcome<Engine> {
    let dim = graph.as_ref().map(|g| g.embedding_dim).unwrap_or(8);
    let backends = ctx.backends(dim)?;
    Engine::new(ctx.engine_cfg.clone(), backends, graph.map(Arc::new)).code(EXIT_BACKEND)
}

fn run(cli: Cli) -> Outcome {
    let mut engine_cfg = match &cli.config {
        Some(p) => EngineConfig::load(p).code(EXIT_USAGE)?,
        None => EngineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        engine_cfg = engine_cfg.with_seed(seed);
    }
    let backend_cfg = cli
        .backend_config
        .as_ref()
        .map(BackendConfig::load)
        .transpose()
        .code(EXIT_BACKEND)?;
    let ctx = Session {
        seed: engine_cfg.seed,
        engine_cfg,
        backend_cfg,
    };

    match cli.command {
        Command::Graph { action } => match action {
            GraphAction::Validate {
                path,
                compute_relations,
            } => {
                let g = if compute_relations {
                    let b = ctx.backends(8)?;
                    let embedder = b.embedder().code(EXIT_BACKEND)?;
                    load_graph_with(&path, RelationEmbeddings::Compute(embedder))
                } else {
                    load_graph(&path)
                }
                .code(EXIT_DATA)?;
                emit(&format!("{}: valid ({} elements, D = {})\n", path.display(), g.element_count(), g.embedding_dim))?;
                Ok(())
            }
            GraphAction::Stats { path } => print_json(&load_graph(&path).code(EXIT_DATA)?.stats()),
        },
        Command::Segment {
            video,
            video_opts,
            win_size,
            z_range,
            clip_len_range,
            estimator,
        } => {
            let mut cfg: SegmenterConfig = ctx.engine_cfg.segmenter;
            if let Some(w) = win_size {
                cfg.win_size = w;
            }
            if let Some(z) = z_range {
                cfg.z_range = [z[0], z[1]];
            }
            if let Some(l) = clip_len_range {
                cfg.clip_len_range = [l[0], l[1]];
            }
            let est = match estimator {
                Some(Estimator::FrameDiff) => MotionEstimator::FrameDiff,
                Some(Estimator::BackendFlow) => MotionEstimator::BackendFlow,
                None => ctx.engine_cfg.motion_estimator,
            };
            let proposals = if is_signal_file(&video) {
                let signal = MotionSignal::load_json(&video).code(EXIT_DATA)?;
                segment(&signal, &cfg)
            } else {
                let clip = load_clip(&video, video_opts)?;
                let b = ctx.backends(8)?;
                let masked = if ctx.engine_cfg.mask_athletes {
                    b.mask(&clip).code(EXIT_BACKEND)?
                } else {
                    clip
                };
                segment_video(&masked, &cfg, est, &b)
            };
            let proposals = proposals.map_err(|e| {
                let code = if matches!(e, finequest::motion::MotionError::Backend(_)) {
                    EXIT_BACKEND
                } else {
                    EXIT_DATA
                };
                Failure {
                    code,
                    error: e.into(),
                }
            })?;
            print_json(&proposals)
        }
        Command::Distort {
            clip,
            video_opts,
            kind,
            sigma,
            strength,
            spatial_variant,
            temporal_variant,
            out,
        } => {
            let kind = match kind {
                Kind::Spatial => DistortionKind::Spatial,
                Kind::Temporal => DistortionKind::Temporal,
                Kind::Spatiotemporal => DistortionKind::Spatiotemporal,
            };
            let spec = DistortionSpec {
                kind,
                noise_sigma: sigma,
                warp_strength: strength,
                seed: ctx.seed,
                spatial_variant: match spatial_variant {
                    Spatial::GaussianNoise => SpatialVariant::GaussianNoise,
                    Spatial::CutMix => SpatialVariant::CutMix,
                    Spatial::Blur => SpatialVariant::Blur,
                    Spatial::ColorJitter => SpatialVariant::ColorJitter,
                },
                temporal_variant: match temporal_variant {
                    Temporal::Warp => TemporalVariant::Warp,
                    Temporal::AllShuffle => TemporalVariant::AllShuffle,
                    Temporal::LocalShuffle => TemporalVariant::LocalShuffle,
                    Temporal::Reverse => TemporalVariant::Reverse,
                },
            };
            spec.validate().code(EXIT_USAGE)?;
            let input = load_clip(&clip, video_opts)?;
            let output = distort(&input, &spec).code(EXIT_DATA)?;
            if out.extension().is_some_and(|e| e == "json") {
                output.save_json(&out).code(EXIT_DATA)?;
            } else {
                output.save_frames_dir(&out).code(EXIT_DATA)?;
            }
            emit(&format!("{}\n", out.display()))?;
            Ok(())
        }
        Command::Select {
            manifest,
            video_opts,
            question,
            n1,
            alpha_s,
            alpha_t,
            alpha_st,
        } => {
            let text = fs::read_to_string(&manifest)
                .with_context(|| format!("cannot read {}", manifest.display()))
                .code(EXIT_DATA)?;
            let paths: Vec<PathBuf> = serde_json::from_str(&text)
                .context("clip manifest must be a JSON array of paths")
                .code(EXIT_DATA)?;
            let base = manifest.parent().unwrap_or(Path::new("."));
            let clips = paths
                .iter()
                .map(|p| load_clip(&base.join(p), video_opts))
                .collect::<Outcome<Vec<_>>>()?;
            let d = ctx.engine_cfg.weights;
            let w = ContrastiveWeights::new(
                alpha_s.unwrap_or(d.alpha_s),
                alpha_t.unwrap_or(d.alpha_t),
                alpha_st.unwrap_or(d.alpha_st),
            )
            .code(EXIT_USAGE)?;
            let duration: f64 = clips.iter().map(|c| c.duration_secs()).sum();
            let n1 = match n1.or(ctx.engine_cfg.n1) {
                Some(n) => n,
                None => bucketed_n(duration).code(EXIT_DATA)?,
            };
            let b = ctx.backends(8)?;
            let sel = select_key_clips(&clips, &question, &w, &ctx.engine_cfg.distortions, &b, n1)
                .code(EXIT_BACKEND)?;
            print_json(&sel)
        }
        Command::Match {
            graph,
            caption_emb,
            clip_emb,
            n2,
            sport,
            top_k,
        } => {
            let g = load_graph(&graph).code(EXIT_DATA)?;
            let read = |p: &Path| -> Outcome<Vec<f64>> {
                let t = fs::read_to_string(p)
                    .with_context(|| format!("cannot read {}", p.display()))
                    .code(EXIT_DATA)?;
                serde_json::from_str(&t)
                    .with_context(|| format!("{} must hold a JSON array of numbers", p.display()))
                    .code(EXIT_DATA)
            };
            let item = EmbeddedClip {
                clip_ref: finequest::clip::FrameInterval::new(0, 0),
                embedding: read(&clip_emb)?,
                caption_text: String::new(),
                caption_embedding: read(&caption_emb)?,
            };
            let opts = MatchOptions {
                n2,
                top_k: top_k.unwrap_or(ctx.engine_cfg.top_k),
                weights: ctx.engine_cfg.channel_weights,
                sport: sport.or(ctx.engine_cfg.sport),
            };
            print_json(&match_graph(&item, &g, &opts).code(EXIT_DATA)?)
        }
        Command::Answer {
            video,
            video_opts,
            question,
            options,
            graph,
            force_mode,
        } => {
            if !options.is_empty() && options.len() != 4 {
                return Err(Failure {
                    code: EXIT_USAGE,
                    error: anyhow!("give exactly four --option values or none"),
                });
            }
            let g = load_graph_opt(graph.as_deref())?;
            let e = engine(&ctx, g)?;
            let clip = load_clip(&video, video_opts)?;
            let opts = (!options.is_empty()).then_some(options.as_slice());
            match e.answer(&clip, &question, opts, force_mode.map(Mode::from)) {
                Ok(a) => print_json(&a),
                Err(err) => {
                    eprintln!("partial trace: {}", serde_json::to_string(&err.trace).unwrap_or_default());
                    let code = if err.is_backend() { EXIT_BACKEND } else { EXIT_DATA };
                    Err(Failure {
                        code,
                        error: err.into(),
                    })
                }
            }
        }
        Command::Eval {
            dataset,
            videos,
            video_opts,
            graph,
            force_mode,
            report,
            report_text,
        } => {
            let items = load_dataset(&dataset).code(EXIT_DATA)?;
            let g = load_graph_opt(graph.as_deref())?;
            let e = engine(&ctx, g)?;
            let root = videos.unwrap_or_else(|| dataset.parent().unwrap_or(Path::new(".")).to_path_buf());
            let source = DirVideoSource {
                root,
                fps: video_opts.fps,
            };
            let r = evaluate(&items, &e, &source, force_mode.map(Mode::from));
            if let Some(p) = report {
                fs::write(&p, r.to_json()).code(EXIT_DATA)?;
            }
            if let Some(p) = report_text {
                fs::write(&p, r.to_text()).code(EXIT_DATA)?;
            }
            emit(&r.to_text())?;
            Ok(())
        }
        Command::Serve {
            addr,
            graph,
            videos,
            video_opts,
            backends_only,
            threads,
        } => {
            let g = load_graph_opt(graph.as_deref())?;
            let e = Arc::new(engine(&ctx, g)?);
            let source = Arc::new(DirVideoSource {
                root: videos,
                fps: video_opts.fps,
            });
            serve(&addr, threads.max(1), move |method, path, body| {
                if backends_only {
                    wire::dispatch(&e.backends, method, path, body)
                } else {
                    service::dispatch(&e, source.as_ref(), method, path, body)
                }
            })
        }
    }
}

fn serve<F>(addr: &str, threads: usize, handler: F) -> Outcome
where
    F: Fn(&str, &str, &[u8]) -> wire::WireReply + Send + Sync + 'static,
{
    let server = Arc::new(
        tiny_http::Server::http(addr)
            .map_err(|e| anyhow!("cannot listen on {addr}: {e}"))
            .code(EXIT_USAGE)?,
    );
    log::info!("listening on http://{addr}");
    eprintln!("listening on http://{addr}");
    let handler = Arc::new(handler);
    let workers: Vec<_> = (0..threads)
        .map(|_| {
            let server = Arc::clone(&server);
            let handler = Arc::clone(&handler);
            std::thread::spawn(move || {
                for mut req in server.incoming_requests() {
                    let mut body = Vec::new();
                    if let Err(e) = req.as_reader().read_to_end(&mut body) {
                        log::warn!("cannot read request body: {e}");
                        continue;
                    }
                    let method = req.method().as_str().to_string();
                    let url = req.url().to_string();
                    let reply = handler(&method, &url, &body);
                    log::debug!("{method} {url} -> {}", reply.status);
                    let header = tiny_http::Header::from_bytes("Content-Type", "application/json")
                        .expect("static header");
                    let resp = tiny_http::Response::from_data(reply.body)
                        .with_status_code(reply.status)
                        .with_header(header);
                    if let Err(e) = req.respond(resp) {
                        log::warn!("cannot send response: {e}");
                    }
                }
            })
        })
        .collect();
    for w in workers {
        let _ = w.join();
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
