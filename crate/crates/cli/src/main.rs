use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use scenesynth::dataset::{load_manifest, load_scene};
use scenesynth::metrics::{compute_dataset_metrics, encode_png_rgb, overview_poses, splat_render, LayoutScoringConfig, ScoreBackend, METRICS_FILE};
use scenesynth::pipeline::{
    manifest_catalog, manifest_metrics_config, synth, validate_dataset, PipelineConfig, SynthContext,
};
use scenesynth::scanner::CameraIntrinsics;

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_BACKEND: u8 = 3;

#[derive(Parser)]
#[command(name = "scenesynth", version, about = "Synthesize labeled indoor point-cloud scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset from a TOML config.
    Synth {
        #[arg(long)]
        config: PathBuf,
        /// Overrides master_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides scene_count.
        #[arg(long)]
        scenes: Option<usize>,
        /// Overrides output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides parallelism (0 = all cores).
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Re-check every exported invariant of a dataset.
    Validate { dataset: PathBuf },
    /// Compute dataset metrics and write metrics.json.
    Metrics {
        dataset: PathBuf,
        /// Scoring endpoint for layout reasonability.
        #[arg(long)]
        layout_backend: Option<String>,
        /// Asset manifest, when the one recorded in the dataset moved.
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// Number of shape clusters.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Render a static overview of one exported scene.
    Preview {
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        view: usize,
        #[arg(long, default_value_t = 640)]
        width: usize,
        #[arg(long, default_value_t = 480)]
        height: usize,
    },
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure { code: EXIT_USAGE, error: e.into() }
    }
}

fn fail(code: u8, error: anyhow::Error) -> Failure {
    Failure { code, error }
}

fn run_synth(
    config: &Path,
    seed: Option<u64>,
    scenes: Option<usize>,
    out: Option<PathBuf>,
    parallelism: Option<usize>,
) -> Result<(), Failure> {
    let mut cfg = PipelineConfig::load(config)?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if let Some(n) = scenes {
        cfg.scene_count = n;
    }
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    if let Some(p) = parallelism {
        cfg.parallelism = p;
    }
    let ctx = SynthContext::new(cfg)?;
    let summary = synth(&ctx)?;
    let placed: usize = summary.reports.iter().map(|r| r.floor.placed + r.wall.placed + r.supported.placed).sum();
    println!(
        "wrote {} scenes to {} ({} failed, {:.1} objects per scene)",
        summary.reports.len(),
        ctx.config.output_dir.display(),
        summary.failed.len(),
        placed as f64 / summary.reports.len().max(1) as f64
    );
    Ok(())
}

fn run_validate(dataset: &Path) -> Result<(), Failure> {
    let report = match validate_dataset(dataset) {
        Ok(r) => r,
        Err(e) => return Err(fail(EXIT_VALIDATION, e.into())),
    };
    for v in &report.violations {
        println!("{}: {}", v.scene_id, v.message);
    }
    println!("{} scenes checked, {} violations", report.scenes_checked, report.violations.len());
    if report.is_valid() {
        Ok(())
    } else {
        Err(fail(EXIT_VALIDATION, anyhow::anyhow!("{} scenes failed validation", report.failing_scenes().len())))
    }
}

fn run_metrics(dataset: &Path, layout_backend: Option<String>, catalog: Option<PathBuf>, k: Option<usize>) -> Result<(), Failure> {
    let manifest = load_manifest(dataset)?;
    let mut config = manifest_metrics_config(&manifest);
    if let Some(k) = k {
        config.diversity_k = k;
    }
    if layout_backend.is_some() {
        config.layout.endpoint = layout_backend;
    }
    let catalog = match catalog {
        Some(path) => Some(scenesynth::catalog::load_catalog(&path)?),
        None => manifest_catalog(&manifest),
    };
    let backend = LayoutScoringConfig::backend(&config.layout);
    let report = compute_dataset_metrics(dataset, catalog.as_ref(), &config, backend.as_ref().map(|b| b as &dyn ScoreBackend))?;
    let path = dataset.join(METRICS_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n").with_context(|| path.display().to_string())?;
    println!("geometry diversity: {:.4} nats (k = {})", report.geometry_diversity_entropy, report.diversity_k);
    println!("context complexity: {:.4}", report.context_complexity);
    if let Some(scores) = &report.layout_scores {
        match scores.mean {
            Some(mean) => println!("layout score: {mean:.1} ({} missing)", scores.missing),
            None => {
                return Err(fail(EXIT_BACKEND, anyhow::anyhow!("layout scoring backend returned no usable score")));
            }
        }
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn run_preview(scene: &Path, out: &Path, view: usize, width: usize, height: usize) -> Result<(), Failure> {
    let (_, cloud) = load_scene(scene)?;
    if cloud.is_empty() {
        return Err(anyhow::anyhow!("scene has no points").into());
    }
    let bounds = scenesynth::geometry::Aabb3::from_points(
        (0..cloud.len()).map(|i| cloud.point(i)).collect::<Vec<_>>().iter(),
    );
    let poses = overview_poses(&bounds, 4);
    let pose = poses.get(view).with_context(|| format!("view must be below {}", poses.len()))?;
    let k = CameraIntrinsics::with_fov(width, height, 70.0);
    let rgb = splat_render(&cloud, pose, &k, 2);
    std::fs::write(out, encode_png_rgb(width, height, &rgb)).with_context(|| out.display().to_string())?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Synth { config, seed, scenes, out, parallelism } => run_synth(&config, seed, scenes, out, parallelism),
        Command::Validate { dataset } => run_validate(&dataset),
        Command::Metrics { dataset, layout_backend, catalog, k } => run_metrics(&dataset, layout_backend, catalog, k),
        Command::Preview { scene, out, view, width, height } => run_preview(&scene, &out, view, width, height),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
