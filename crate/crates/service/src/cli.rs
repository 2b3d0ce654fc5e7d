//! Command-line pipelines. Usage errors exit with 2 (clap's convention);
//! pipeline errors exit with 1 and a JSON error object on stderr.

use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use regiongrasp::dataset::{generate_dataset, synthesize_labels, write_dataset, DatasetConfig, LabelConfig};
use regiongrasp::detector::AnalyticPredictor;
use regiongrasp::eval::{run_benchmark, target_ap, BenchmarkConfig, EvalConfig, SceneSnapshot};
use regiongrasp::geom::{CameraModel, GraspPose};
use regiongrasp::scene::{default_library, generate_clutter, render, Scene};
use regiongrasp::{Error, Result};
use serde::Deserialize;

use crate::api::{self, SceneStore};
use crate::formats;
use crate::pipeline::{detect, Detection};

#[derive(Parser, Debug)]
#[command(name = "regiongrasp", version, about = "Region-focal grasp detection and evaluation on synthetic RGB-D scenes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a seeded clutter scene as JSON.
    GenScene {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 6)]
        objects: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a scene to PREFIX.rgb.png, PREFIX.ids.png and PREFIX.depth.bin.
    Render {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out_prefix: String,
    },
    /// Synthesize labels and write a region-focal dataset directory.
    GenDataset {
        #[arg(long)]
        scene: PathBuf,
        /// Dataset configuration JSON; missing fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed for negative sampling; defaults to the scene seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect grasps for a guided region.
    Detect {
        #[arg(long)]
        scene: PathBuf,
        /// click:U,V | mask:FILE | ray:FILE
        #[arg(long)]
        guide: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Target-AP of a grasp list against one target object.
    Eval {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        grasps: PathBuf,
        #[arg(long)]
        target: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded clutter benchmark with the analytic predictor.
    Simulate {
        #[arg(long)]
        seeds: u64,
        #[arg(long, default_value_t = 50)]
        scenes: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the HTTP API. The REGIONGRASP_PORT variable overrides --port.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Scene JSON files to preload, in file name order.
        #[arg(long)]
        scene_dir: Option<PathBuf>,
    },
}

/// Grasp files hold either a detection result or a bare list of poses.
#[derive(Deserialize)]
#[serde(untagged)]
enum GraspFile {
    Detection(Detection),
    Poses(Vec<GraspPose>),
}

fn load_scene(path: &Path) -> Result<Scene> {
    Scene::from_json(&std::fs::read_to_string(path)?)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    formats::write(path, text.as_bytes())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenScene { seed, objects, out } => {
            let scene = generate_clutter(seed, objects, &default_library(), CameraModel::default())?;
            let mut text = scene.to_json()?;
            text.push('\n');
            formats::write(&out, text.as_bytes())
        }
        Command::Render { scene, out_prefix } => {
            let img = render(&load_scene(&scene)?);
            formats::write(Path::new(&format!("{out_prefix}.rgb.png")), &formats::rgb_png(&img)?)?;
            formats::write(Path::new(&format!("{out_prefix}.ids.png")), &formats::ids_png(&img)?)?;
            formats::write(Path::new(&format!("{out_prefix}.depth.bin")), &formats::depth_bytes(&img))
        }
        Command::GenDataset { scene, config, seed, out } => {
            let scene = load_scene(&scene)?;
            let cfg: DatasetConfig = match config {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
                None => DatasetConfig::default(),
            };
            let labels = synthesize_labels(&scene, &LabelConfig::default());
            let ds = generate_dataset(&scene, &labels.labels, &cfg, seed.unwrap_or(scene.seed))?;
            write_dataset(&out, &ds)
        }
        Command::Detect { scene, guide, k, out } => {
            let guide = formats::parse_guide(&guide)?;
            let snap = SceneSnapshot::new(load_scene(&scene)?);
            let (det, _) = detect(&snap, &guide, k)?;
            write_json(&out, &det)
        }
        Command::Eval { scene, grasps, target, out } => {
            let snap = SceneSnapshot::new(load_scene(&scene)?);
            if snap.scene.object(target).is_none() {
                return Err(Error::Range(format!("scene has no object {target}")));
            }
            let poses = match serde_json::from_str::<GraspFile>(&std::fs::read_to_string(grasps)?)? {
                GraspFile::Detection(d) => d.grasps.into_iter().map(|g| g.pose).collect(),
                GraspFile::Poses(p) => p,
            };
            write_json(&out, &target_ap(&poses, &snap, target, &EvalConfig::default()))
        }
        Command::Simulate { seeds, scenes, out } => {
            let report = run_benchmark(scenes, seeds, &AnalyticPredictor::default(), &BenchmarkConfig::default())?;
            write_json(&out, &report)
        }
        Command::Serve { port, host, scene_dir } => {
            let store = Arc::new(SceneStore::default());
            if let Some(dir) = scene_dir {
                let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "json"))
                    .collect();
                files.sort();
                for f in files {
                    let id = store.insert(load_scene(&f)?);
                    eprintln!("scene {id}: {}", f.display());
                }
            }
            let addr = SocketAddr::new(host, api::resolve_port(port)?);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(api::serve(store, addr))?;
            Ok(())
        }
    }
}

/// The JSON object written to stderr for a failed pipeline.
pub fn error_json(e: &Error) -> String {
    serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } }).to_string()
}
