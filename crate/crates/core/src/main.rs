use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use splatocc::diffcore::RngStream;
use splatocc::gaussian_field::read_field;
use splatocc::harness::scene::{cameras_from_text, BACKGROUND};
use splatocc::harness::{ablate, generate_scene, gradcheck, k_stats, train, RunConfig, Scene, SceneSpec, Variant};
use splatocc::renderer::rasterize;

#[derive(Parser)]
#[command(name = "splatocc", version, about = "Adaptive lidar-camera voxel fusion with Gaussian-splatting supervision")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic scene directory.
    Generate {
        /// Scene file (`key = value`); the built-in default scene if omitted.
        #[arg(long, conflicts_with = "preset")]
        scene: Option<PathBuf>,
        /// Built-in scene: `default`, `small` (small-object dominated) or `large`.
        #[arg(long, default_value = "default")]
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run both training phases on a generated scene.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare variants, e.g. `fixed_k=3,dynamic_k=1-4,-l_pc`.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        variants: String,
        /// Scene directory; the default scene generated from the config seed if omitted.
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Comma-separated seeds.
        #[arg(long, default_value = "0")]
        seeds: String,
    },
    /// Render a checkpoint from one camera.
    Render {
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        camera: usize,
        #[arg(long)]
        out: PathBuf,
        /// Camera file; defaults to `cameras.txt` next to the checkpoint.
        #[arg(long)]
        cameras: Option<PathBuf>,
    },
    /// Finite-difference checks of the differentiable operations.
    Gradcheck {
        #[arg(long)]
        module: Option<String>,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
    /// Frequency table of a k-decisions CSV.
    KStats {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "1,2,3,4")]
        candidates: String,
    },
}

fn load_config(path: &Option<PathBuf>) -> splatocc::Result<RunConfig> {
    path.as_ref().map_or_else(|| Ok(RunConfig::default()), RunConfig::read)
}

fn parse_list<T: std::str::FromStr>(s: &str) -> splatocc::Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(|p| p.parse().map_err(|e| splatocc::Error::Parse(format!("`{p}`: {e}")))).collect()
}

fn run(cli: Cli) -> splatocc::Result<()> {
    match cli.cmd {
        Cmd::Generate { scene, preset, seed, out } => {
            let spec = match (scene, preset.as_str()) {
                (Some(path), _) => SceneSpec::read(path)?,
                (None, "default") => SceneSpec::default(),
                (None, "small") => SceneSpec::small_objects(),
                (None, "large") => SceneSpec::large_objects(),
                (None, other) => return Err(splatocc::Error::Config(format!("unknown preset `{other}`"))),
            };
            let s = generate_scene(&spec, &RngStream::new(seed))?;
            s.write_dir(&out)?;
            println!("{} lidar points, {} occupied voxels, {} views -> {}", s.points.len(), s.gt.occupied(), s.cameras.len(), out.display());
        }
        Cmd::Train { config, scene, out } => {
            let mut cfg = load_config(&config)?;
            let out = out.unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
            cfg.output_dir = out.display().to_string();
            let scene = Scene::read_dir(&scene)?;
            let r = train(&cfg, &scene, Some(&out))?;
            let curve = r.l_rgb_curve();
            if let (Some(first), Some(last)) = (curve.first(), curve.last()) {
                println!("L_rgb {first:.5} -> {last:.5}");
            }
            print!("{}", r.summary());
            print!("{}", r.k_table);
            println!("wall clock {:.1}s", r.wall_clock_secs);
        }
        Cmd::Ablate { config, variants, scene, seeds } => {
            let cfg = load_config(&config)?;
            let scene = match scene {
                Some(dir) => Scene::read_dir(dir)?,
                None => generate_scene(&SceneSpec::default(), &RngStream::new(cfg.seed))?,
            };
            let table = ablate(&cfg, &scene, &Variant::parse_list(&variants)?, &parse_list(&seeds)?)?;
            print!("{table}");
        }
        Cmd::Render { field, camera, out, cameras } => {
            let cam_path = cameras.unwrap_or_else(|| field.with_file_name("cameras.txt"));
            let cams = cameras_from_text(&std::fs::read_to_string(&cam_path)?)?;
            let cam = cams.get(camera).ok_or_else(|| splatocc::Error::Range(format!("camera {camera} of {}", cams.len())))?;
            let f = read_field::<f64>(&field)?;
            rasterize(&f, cam, BACKGROUND).0.write_ppm(&out)?;
        }
        Cmd::Gradcheck { module, seeds } => {
            let results = gradcheck::run_suite(module.as_deref(), seeds)?;
            let mut failed = 0;
            for r in &results {
                println!("{:<5} {:<28} seeds {:>3}  max rel err {:.3e}", if r.pass { "PASS" } else { "FAIL" }, r.name, r.seeds, r.max_rel_err);
                failed += usize::from(!r.pass);
            }
            if failed > 0 {
                return Err(splatocc::Error::Check(format!("{failed} operation(s) failed")));
            }
        }
        Cmd::KStats { input, candidates } => {
            let t = k_stats(&std::fs::read_to_string(input)?, &parse_list(&candidates)?)?;
            print!("{t}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
