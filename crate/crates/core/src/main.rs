use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use log::info;

use semsplat::eval::evaluate;
use semsplat::fixture::{self, FixtureConfig};
use semsplat::io::{self, image, load_checkpoint, load_dataset, save_checkpoint, write_atomic, RunConfig};
use semsplat::semantics::{embed_query, resolve_query, QuerySource, DEFAULT_THRESHOLD};
use semsplat::service::{self, parse_pose, AppState, ServiceConfig};
use semsplat::train::train;
use semsplat::{Camera, Error, Result};

#[derive(Parser)]
#[command(name = "semsplat", version, about = "Semantic Gaussian splatting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a scene from a dataset and write a checkpoint.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// JSON run configuration (`{"train": {...}, "loss": {...}}`).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output checkpoint.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Metrics log (JSON lines).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a view to PNG.
    Render {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        view: ViewArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Resolve a text prompt to ranked dictionary labels.
    Query {
        #[arg(long)]
        checkpoint: PathBuf,
        prompt: String,
        #[command(flatten)]
        view: ViewArgs,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[command(flatten)]
        encoder: EncoderArgs,
        /// Pixel mask of the top label (PNG).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint against a dataset and print a JSON report.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset whose cameras are addressable as frames.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[command(flatten)]
        encoder: EncoderArgs,
        /// Leave the checkpoint untouched after edits.
        #[arg(long)]
        no_save: bool,
    },
    /// Write the synthetic three-object fixture dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5000)]
        iterations: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct ViewArgs {
    /// Dataset providing the cameras.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 0)]
    frame: usize,
    /// 16 comma-separated camera-to-world values (row-major); intrinsics
    /// come from `--frame`.
    #[arg(long)]
    pose: Option<String>,
}

#[derive(Args)]
struct EncoderArgs {
    /// Query lookup file; defaults to `queries.bin` in the dataset
    /// directory when present.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Base URL of a text encoder service.
    #[arg(long)]
    encoder_url: Option<String>,
}

impl EncoderArgs {
    fn source(&self, dataset: Option<&Path>) -> Result<QuerySource> {
        let path = self.queries.clone().or_else(|| {
            let dir = dataset?;
            let dir = if dir.is_dir() { dir } else { dir.parent()? };
            Some(dir.join("queries.bin")).filter(|p| p.is_file())
        });
        Ok(QuerySource {
            lookup: path.map(|p| io::load_query_embeddings(&p)).transpose()?,
            encoder_url: self.encoder_url.clone(),
            timeout: Some(Duration::from_secs(30)),
        })
    }
}

fn cameras_of(dataset: &Path) -> Result<Vec<Camera>> {
    Ok(load_dataset(dataset)?.frames.into_iter().map(|f| f.camera).collect())
}

fn camera_for(view: &ViewArgs) -> Result<Camera> {
    let cameras = cameras_of(&view.dataset)?;
    let base = cameras
        .get(view.frame)
        .ok_or_else(|| Error::InvalidParameter(format!("frame {} out of range ({} frames)", view.frame, cameras.len())))?;
    match &view.pose {
        None => Ok(base.clone()),
        Some(p) => Camera::from_camera_to_world(base.fx, base.fy, base.cx, base.cy, base.width, base.height, parse_pose(p)?),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            dataset,
            config,
            checkpoint,
            iterations,
            seed,
            out,
        } => {
            let mut run = match config {
                Some(p) => RunConfig::load(&p)?,
                None => RunConfig::default(),
            };
            if let Some(n) = iterations {
                run.train.iterations = n;
            }
            if let Some(s) = seed {
                run.train.seed = s;
            }
            run.validate()?;
            let ds = load_dataset(&dataset)?;
            info!("loaded {} frames, {} labels", ds.len(), ds.dictionary.len());
            let mut log_file = out
                .as_ref()
                .map(|p| std::fs::File::create(p).map(std::io::BufWriter::new).map_err(|e| Error::Io { path: p.clone(), source: e }))
                .transpose()?;
            let (scene, _) = train(&ds, &run.train, &run.loss, |r| {
                if r.iteration % 100 == 0 || r.iteration == run.train.iterations {
                    info!(
                        "iter {} L_gs {:.5} L_ce {:.5} psnr {:.2} gaussians {}",
                        r.iteration, r.l_gs, r.l_ce, r.psnr, r.num_gaussians
                    );
                }
                if let Some(f) = log_file.as_mut() {
                    let line = serde_json::to_string(r).expect("serializing record");
                    if let Err(e) = writeln!(f, "{line}") {
                        log::warn!("metrics log: {e}");
                    }
                }
            })?;
            if let (Some(f), Some(p)) = (log_file.as_mut(), out.as_ref()) {
                f.flush().map_err(|e| Error::Io { path: p.clone(), source: e })?;
            }
            save_checkpoint(&scene, &checkpoint)?;
            println!("wrote {} ({} Gaussians)", checkpoint.display(), scene.len());
        }
        Command::Render { checkpoint, view, out } => {
            let scene = load_checkpoint(&checkpoint)?;
            let camera = camera_for(&view)?;
            image::write_file(&out, &service::render_png(&scene, &camera))?;
            println!("wrote {}", out.display());
        }
        Command::Query {
            checkpoint,
            prompt,
            view,
            threshold,
            encoder,
            out,
        } => {
            let scene = load_checkpoint(&checkpoint)?;
            let camera = camera_for(&view)?;
            let source = encoder.source(Some(&view.dataset))?;
            let emb = embed_query(&prompt, &source, scene.embeddings.dim())?;
            let result = resolve_query(&scene, &prompt, &emb, &camera, threshold)?;
            match result.top() {
                Some(top) => println!("query '{prompt}' → {} (relevancy {:.2})", top.label, top.relevancy),
                None => println!("query '{prompt}' → no label above threshold {threshold}"),
            }
            for r in result.ranked.iter().skip(1) {
                println!("  also: {} (relevancy {:.2})", r.label, r.relevancy);
            }
            if let Some(out) = out {
                let mask = result
                    .top()
                    .map(|t| t.pixel_mask.clone())
                    .unwrap_or_else(|| vec![false; camera.width * camera.height]);
                image::write_file(&out, &image::encode_mask_png(camera.width, camera.height, &mask))?;
            }
        }
        Command::Eval { checkpoint, dataset, out } => {
            let scene = load_checkpoint(&checkpoint)?;
            let ds = load_dataset(&dataset)?;
            let report = evaluate(&scene, &ds)?;
            let text = serde_json::to_string_pretty(&report).expect("serializing report");
            println!("{text}");
            if let Some(out) = out {
                write_atomic(&out, (text + "\n").as_bytes())?;
            }
        }
        Command::Serve {
            checkpoint,
            dataset,
            port,
            threshold,
            encoder,
            no_save,
        } => {
            let scene = load_checkpoint(&checkpoint)?;
            let config = ServiceConfig {
                checkpoint_path: (!no_save).then(|| checkpoint.clone()),
                cameras: dataset.as_deref().map(cameras_of).transpose()?.unwrap_or_default(),
                query_source: encoder.source(dataset.as_deref())?,
                default_threshold: threshold,
            };
            let state = AppState::new(scene, config);
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Io {
                path: checkpoint.clone(),
                source: e,
            })?;
            rt.block_on(async {
                let addr = std::net::SocketAddr::from(([127, 0, 0, 1], port));
                let listener = tokio::net::TcpListener::bind(addr)
                    .await
                    .map_err(|e| Error::Config(format!("binding {addr}: {e}")))?;
                info!("listening on http://{addr}");
                service::serve(listener, state)
                    .await
                    .map_err(|e| Error::Config(format!("server: {e}")))
            })?;
        }
        Command::Synth { out, iterations, seed } => {
            let cfg = FixtureConfig {
                seed: seed.unwrap_or(FixtureConfig::default().seed),
                ..FixtureConfig::default()
            };
            fixture::write_fixture(&out, &cfg, iterations)?;
            println!("wrote fixture to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.kind());
            ExitCode::FAILURE
        }
    }
}
