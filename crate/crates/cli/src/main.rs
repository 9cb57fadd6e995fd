//! `lawave`: simulate limited-angle data, reconstruct, train the two
//! networks, run the boundary-estimation pipeline and score it.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! error. Every failure prints one diagnostic line on stderr.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lawave_core::evaluate::{evaluate_volume, sha256_file, SliceOutcome};
use lawave_core::grid::{load_grid, save_grid, save_pgm};
use lawave_core::neural::{save_weights, train, Network, NetworkSpec, TrainConfig, TrainingSet};
use lawave_core::phantom::{load_dataset, render_lp_volume, sample_dataset, save_dataset, BallPreset, Volume};
use lawave_core::pipeline::{
    build_n1_dataset, build_n2_dataset, run_slice, run_volume, with_jobs, write_slice, Networks, PipelineConfig,
    SolverSummary, Workspace,
};
use lawave_core::solver::{pdfp_solve, SolverConfig};
use lawave_core::{Error, ProjectionGeometry, Result, SubbandStack};

#[derive(Parser)]
#[command(
    name = "lawave",
    version,
    about = "Limited-angle tomography with learned wavefront-set completion"
)]
struct Cli {
    /// Seed for every random choice (phantoms, noise, initialisation, shuffling).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 uses every core. Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample ellipse training phantoms, or render the L^p-ball test volume.
    Generate(GenerateArgs),
    /// Forward-project phantoms (or every xz-slice of a volume) and add noise.
    Simulate(SimulateArgs),
    /// PDFP reconstruction of one sinogram, with its objective trace.
    Reconstruct(ReconstructArgs),
    /// Train N1 (visible wavefront extraction) or N2 (completion).
    Train(TrainArgs),
    /// Run the full boundary-estimation workflow on one sinogram or a volume.
    Pipeline(PipelineArgs),
    /// Segment boundary estimates and score them against the true volume.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Number of single-ellipse phantoms.
    #[arg(long, default_value_t = 1000)]
    phantoms: usize,
    /// Image side in pixels (power of two).
    #[arg(long, default_value_t = 64)]
    size: usize,
    /// Render the three-ball volume instead of ellipses; optionally from a
    /// preset JSON file instead of the built-in placement.
    #[arg(long, num_args = 0..=1, default_missing_value = "", value_name = "PRESET")]
    balls: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Dataset or volume directory written by `generate`.
    #[arg(long = "in")]
    input: PathBuf,
    /// Geometry JSON; default 50 angles on [70, 110] degrees.
    #[arg(long)]
    geometry: Option<PathBuf>,
    /// Noise standard deviation relative to the largest sinogram magnitude.
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    sino: PathBuf,
    /// Solver JSON `{mu, tau, lambda, iterations}`; defaults are automatic.
    #[arg(long)]
    solver: Option<PathBuf>,
    /// Image side; default equals the detector count.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Which {
    N1,
    N2,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    network: Which,
    /// Phantom dataset directory written by `generate`.
    #[arg(long)]
    data: PathBuf,
    /// Training JSON; default is the network's preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Pipeline JSON supplying geometry, noise, solver and element sizes;
    /// default is the preset matching the dataset size.
    #[arg(long)]
    pipeline: Option<PathBuf>,
    /// Use the full-width architecture instead of the desk-scale one.
    #[arg(long)]
    full_width: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    /// A single sinogram.
    #[arg(long, conflicts_with = "volume", required_unless_present = "volume")]
    sino: Option<PathBuf>,
    /// A directory of per-slice sinograms written by `simulate`.
    #[arg(long)]
    volume: Option<PathBuf>,
    /// Only these xz-slices of the volume (comma separated).
    #[arg(long, value_delimiter = ',')]
    slices: Option<Vec<usize>>,
    #[arg(long)]
    weights_n1: Option<PathBuf>,
    #[arg(long)]
    weights_n2: Option<PathBuf>,
    /// Pipeline JSON; default is the preset matching the sinogram size.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Output directory of `pipeline`.
    #[arg(long)]
    results: PathBuf,
    /// Volume directory written by `generate --balls`.
    #[arg(long)]
    truth: PathBuf,
    /// xz-slices to score (comma separated); default: every slice present.
    #[arg(long, value_delimiter = ',')]
    slices: Option<Vec<usize>>,
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = cli.jobs;
    match with_jobs(jobs, move || run(cli)).and_then(|r| r) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lawave: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(a, cli.seed),
        Command::Simulate(a) => simulate(a, cli.seed),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Train(a) => train_cmd(a, cli.seed),
        Command::Pipeline(a) => pipeline(a, cli.jobs),
        Command::Evaluate(a) => evaluate(a),
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.into(),
            source: e,
        })?;
    }
    std::fs::write(path, contents).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.into(),
        source: e,
    })
}

const VOLUME_FILE: &str = "volume.bin";
const PRESET_FILE: &str = "preset.json";
const CONFIG_FILE: &str = "pipeline.json";

fn generate(a: GenerateArgs, seed: u64) -> Result<()> {
    if !lawave_core::grid::is_power_of_two(a.size) {
        return Err(Error::Config(format!("--size must be a power of two, got {}", a.size)));
    }
    match a.balls {
        Some(preset) => {
            let preset = if preset.is_empty() {
                BallPreset::three_balls()
            } else {
                BallPreset::load(Path::new(&preset))?
            };
            let vol = render_lp_volume(&preset.balls, a.size)?;
            mkdir(&a.out)?;
            vol.save(&a.out.join(VOLUME_FILE))?;
            write(&a.out.join(PRESET_FILE), serde_json::to_string_pretty(&preset)?)?;
            println!(
                "wrote {}³ volume to {} (mid-ball xz-slices {:?})",
                a.size,
                a.out.display(),
                preset.mid_slices(a.size)
            );
        }
        None => {
            let data = sample_dataset(a.phantoms, a.size, seed);
            save_dataset(&a.out, &data, a.size, seed)?;
            println!("wrote {} phantoms to {}", data.len(), a.out.display());
        }
    }
    Ok(())
}

fn geometry_for(path: &Option<PathBuf>, size: usize) -> Result<ProjectionGeometry> {
    match path {
        Some(p) => ProjectionGeometry::load(p),
        None => Ok(ProjectionGeometry::default_limited(size)),
    }
}

fn simulate(a: SimulateArgs, seed: u64) -> Result<()> {
    let volume_path = a.input.join(VOLUME_FILE);
    let (images, prefix): (Vec<_>, &str) = if volume_path.exists() {
        (Volume::load(&volume_path)?.xz_slices().to_vec(), "slice")
    } else {
        let (_, _, data) = load_dataset(&a.input)?;
        (data.into_iter().map(|d| d.0).collect(), "phantom")
    };
    let Some(first) = images.first() else {
        return Err(Error::Parameter("nothing to simulate".into()));
    };
    let size = first.rows();
    let geom = geometry_for(&a.geometry, size)?;
    geom.validate()?;
    let projector = lawave_core::Projector::new(&geom, size)?;
    mkdir(&a.out)?;
    for (i, img) in images.iter().enumerate() {
        let clean = projector.forward(img)?;
        let noisy = lawave_core::geometry::add_noise(&clean, a.noise, seed.wrapping_add(i as u64))?;
        noisy.save(&a.out.join(format!("{prefix}_{i:03}.bin")))?;
    }
    let meta = serde_json::json!({ "noise_level": a.noise, "seed": seed, "count": images.len(), "size": size });
    write(&a.out.join("simulation.json"), serde_json::to_string_pretty(&meta)?)?;
    println!("wrote {} sinograms to {}", images.len(), a.out.display());
    Ok(())
}

fn reconstruct(a: ReconstructArgs) -> Result<()> {
    let sino = lawave_core::Sinogram::load(&a.sino)?;
    let cfg = match &a.solver {
        Some(p) => SolverConfig::load(p)?,
        None => SolverConfig::default(),
    };
    let size = a.size.unwrap_or(sino.geometry.detector_count);
    let (f, state) = pdfp_solve(&sino, size, &cfg)?;
    mkdir(&a.out)?;
    save_grid(&a.out.join("reco.bin"), &f)?;
    save_pgm(&a.out.join("reco.pgm"), &f)?;
    write(&a.out.join("trace.csv"), state.trace_csv())?;
    let obj = state.objectives();
    println!(
        "objective {:.6e} -> {:.6e} after {} iterations",
        obj.first().unwrap_or(&0.0),
        obj.last().unwrap_or(&0.0),
        cfg.iterations
    );
    Ok(())
}

fn pipeline_config(path: &Option<PathBuf>, size: usize) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None if size == 128 => Ok(PipelineConfig::full()),
        None => {
            let cfg = PipelineConfig {
                size,
                geometry: ProjectionGeometry::default_limited(size),
                ..PipelineConfig::desk()
            };
            cfg.validate()?;
            Ok(cfg)
        }
    }
}

fn train_cmd(a: TrainArgs, seed: u64) -> Result<()> {
    let (size, _, data) = load_dataset(&a.data)?;
    let cfg = pipeline_config(&a.pipeline, size)?;
    if cfg.size != size {
        return Err(Error::Config(format!(
            "pipeline size {} differs from dataset size {size}",
            cfg.size
        )));
    }
    let spec = match (a.network, a.full_width) {
        (Which::N1, false) => NetworkSpec::n1_desk(),
        (Which::N2, false) => NetworkSpec::n2_desk(),
        (Which::N1, true) => NetworkSpec::full(true),
        (Which::N2, true) => NetworkSpec::full(false),
    };
    let train_cfg: TrainConfig = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => TrainConfig::for_spec(&spec),
    };
    train_cfg.validate()?;
    let ws = Workspace::new(&cfg)?;
    let phantoms: Vec<_> = data.into_iter().map(|d| d.0).collect();
    let pairs = match a.network {
        Which::N1 => build_n1_dataset(&phantoms, &ws, seed)?,
        Which::N2 => build_n2_dataset(&phantoms, &ws)?,
    };
    let set = TrainingSet::<f32>::from_stacks(&pairs.inputs, &pairs.truths)?;
    let (net, log) = train(Network::<f32>::new(spec, seed)?, &set, &train_cfg, seed)?;
    save_weights(&a.out, &net)?;
    let mut log_path = a.out.clone().into_os_string();
    log_path.push(".log.csv");
    write(Path::new(&log_path), log.to_csv())?;
    println!(
        "best epoch {}: validation dice {:.4}",
        log.best_epoch,
        1.0 - log.best_val_loss
    );
    Ok(())
}

fn slice_index(path: &Path, prefix: &str) -> Option<usize> {
    let name = path.file_name()?.to_str()?;
    name.strip_prefix(prefix)?.strip_suffix(".bin")?.parse().ok()
}

fn pipeline(a: PipelineArgs, jobs: usize) -> Result<()> {
    let mut inputs: Vec<(usize, lawave_core::Sinogram)> = Vec::new();
    if let Some(p) = &a.sino {
        inputs.push((0, lawave_core::Sinogram::load(p)?));
    } else if let Some(dir) = &a.volume {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        let mut files: Vec<(usize, PathBuf)> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter_map(|p| slice_index(&p, "slice_").map(|i| (i, p)))
            .collect();
        files.sort();
        if let Some(wanted) = &a.slices {
            for w in wanted {
                if !files.iter().any(|(i, _)| i == w) {
                    return Err(Error::Parameter(format!("slice {w} not present in {}", dir.display())));
                }
            }
            files.retain(|(i, _)| wanted.contains(i));
        }
        for (i, p) in files {
            inputs.push((i, lawave_core::Sinogram::load(&p)?));
        }
    }
    let Some((_, first)) = inputs.first() else {
        return Err(Error::Parameter("no sinograms found".into()));
    };
    let mut cfg = pipeline_config(&a.config, first.geometry.detector_count)?;
    if a.weights_n1.is_some() {
        cfg.weights_n1 = a.weights_n1.clone();
    }
    if a.weights_n2.is_some() {
        cfg.weights_n2 = a.weights_n2.clone();
    }
    let nets = Networks::load(&cfg)?;
    let ws = Workspace::new(&cfg)?;
    mkdir(&a.out)?;
    let sinos: Vec<_> = inputs.iter().map(|(_, s)| s.clone()).collect();
    let results = if sinos.len() == 1 {
        vec![run_slice(&sinos[0], &ws, &nets)?]
    } else {
        run_volume(&sinos, &ws, &nets, jobs)?
    };
    for ((i, _), r) in inputs.iter().zip(&results) {
        write_slice(&a.out, *i, r)?;
    }
    // record the effective configuration with weight paths made absolute
    let mut recorded = cfg.clone();
    for p in [&mut recorded.weights_n1, &mut recorded.weights_n2]
        .into_iter()
        .flatten()
    {
        if let Ok(abs) = std::fs::canonicalize(&*p) {
            *p = abs;
        }
    }
    write(&a.out.join(CONFIG_FILE), recorded.to_json())?;
    println!("processed {} slice(s) into {}", results.len(), a.out.display());
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let volume_path = a.truth.join(VOLUME_FILE);
    let truth = Volume::load(&volume_path)?;
    let cfg_path = a.results.join(CONFIG_FILE);
    let cfg = if cfg_path.exists() {
        PipelineConfig::load(&cfg_path)?
    } else {
        pipeline_config(&None, truth.size())?
    };
    let slices: Vec<usize> = match a.slices {
        Some(s) => s,
        None => {
            let entries = std::fs::read_dir(&a.results).map_err(|e| Error::Io {
                path: a.results.clone(),
                source: e,
            })?;
            let mut v: Vec<usize> = entries
                .filter_map(|e| e.ok())
                .filter_map(|e| e.file_name().to_str()?.strip_prefix("slice_")?.parse().ok())
                .collect();
            v.sort();
            v
        }
    };
    let mut inputs = BTreeMap::new();
    inputs.insert("truth/volume.bin".to_string(), sha256_file(&volume_path)?);
    if cfg_path.exists() {
        inputs.insert(format!("results/{CONFIG_FILE}"), sha256_file(&cfg_path)?);
    }
    let mut outcomes = Vec::with_capacity(slices.len());
    for y in slices {
        let dir = a.results.join(format!("slice_{y:03}"));
        let skel_path = dir.join("masks").join("skeleton.bin");
        inputs.insert(
            format!("results/slice_{y:03}/masks/skeleton.bin"),
            sha256_file(&skel_path)?,
        );
        let skeleton = load_grid(&skel_path)?.threshold(0.5);
        let pred_path = dir.join("masks").join("prediction.bin");
        let prediction = if pred_path.exists() {
            Some(SubbandStack::load(&pred_path)?.0)
        } else {
            None
        };
        let solver = std::fs::read_to_string(dir.join("metrics.json"))
            .ok()
            .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
            .and_then(|v| serde_json::from_value::<SolverSummary>(v["solver"].clone()).ok());
        outcomes.push(SliceOutcome {
            slice: y,
            skeleton,
            prediction,
            solver,
        });
    }
    let report = evaluate_volume(&outcomes, &truth, &cfg, inputs)?;
    report.write(&a.out)?;
    for m in &report.slices {
        println!("slice {:3}  DSC {:.5}", m.slice, m.dsc);
    }
    println!("mean DSC {:.5}", report.mean_dsc);
    Ok(())
}
