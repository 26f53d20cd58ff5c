use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use coexplore::corridor::{assign_frontiers, ugv_cell_valid, ugv_corridor, ugv_layer};
use coexplore::goal::render_view_quality;
use coexplore::harness::{single_agent_baseline, run_exploration, AgentRole, ExplorationConfig, ExplorationOutcome, RunStatus};
use coexplore::metrics::{export_metrics, export_paths};
use coexplore::worlds::{generate, WorldKind};
use coexplore::{AgentSpec, FrontierSet, GroundTruthWorld, OccupancyMap, VoxelKey, Viewpoint};

/// Collaborative ground-aerial exploration of voxel worlds.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Explore with the ground robot and the drone together.
    Explore(RunArgs),
    /// Explore with one agent alone.
    Baseline {
        #[arg(long, value_enum)]
        agent: Agent,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Generate a ground-truth world file.
    GenWorld {
        #[arg(long, value_enum, default_value = "maze")]
        kind: Kind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render the ground robot's view quality over a saved map as CSV.
    RenderVq {
        /// Tri-state map written by `explore`.
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        rays_per_voxel: usize,
        /// Ground robot position (x y); defaults to the first free ground cell.
        #[arg(long, num_args = 2, value_names = ["X", "Y"])]
        start: Option<Vec<f64>>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Ground-truth world file; generated from `--kind` and `--seed` if absent.
    #[arg(long)]
    world: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "maze")]
    kind: Kind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    lambda: f64,
    #[arg(long, default_value_t = 50)]
    rays_per_voxel: usize,
    #[arg(long, default_value_t = 1)]
    epsilon: usize,
    #[arg(long, default_value_t = 200)]
    max_steps: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Agent {
    Uav,
    Ugv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Maze,
    Warehouse,
    Multilevel,
}

impl From<Kind> for WorldKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Maze => WorldKind::Maze,
            Kind::Warehouse => WorldKind::Warehouse,
            Kind::Multilevel => WorldKind::Multilevel,
        }
    }
}

const RESOLUTION: f64 = 0.3;

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Explore(args) => explore(&args, None),
        Command::Baseline { agent, run } => {
            let role = match agent {
                Agent::Uav => AgentRole::Uav,
                Agent::Ugv => AgentRole::Ugv,
            };
            explore(&run, Some(role))
        }
        Command::GenWorld { kind, seed, out } => {
            let world = generate(kind.into(), seed, RESOLUTION)?;
            world.write_voxw(BufWriter::new(create(&out)?))?;
            let [nx, ny, nz] = world.grid().dims();
            println!("wrote {nx}x{ny}x{nz} world to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::RenderVq { map, out, seed, rays_per_voxel, start, threads } => {
            init_threads(threads)?;
            render_vq(&map, &out, seed, rays_per_voxel, start)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<File> {
    File::create(path).with_context(|| format!("cannot create {}", path.display()))
}

fn explore(args: &RunArgs, alone: Option<AgentRole>) -> Result<ExitCode> {
    init_threads(args.threads)?;
    let world = match &args.world {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
            GroundTruthWorld::read_voxw(BufReader::new(file))?
        }
        None => generate(args.kind.into(), args.seed, RESOLUTION)?,
    };
    let config = ExplorationConfig {
        lambda: args.lambda,
        n_r: args.rays_per_voxel,
        epsilon: args.epsilon,
        max_steps: args.max_steps,
        seed: args.seed,
        ..ExplorationConfig::default()
    };
    let outcome = match alone {
        None => run_exploration(&world, &config)?,
        Some(role) => single_agent_baseline(&world, &config, role)?,
    };
    write_outputs(&args.out, &outcome)?;
    let cov = outcome.map.coverage_stats();
    println!(
        "{} after {} steps: free {:.4} occupied {:.4} unknown {:.4}; outputs in {}",
        outcome.status.as_str(),
        outcome.steps,
        cov.free,
        cov.occupied,
        cov.unknown,
        args.out.display()
    );
    Ok(ExitCode::from(match outcome.status {
        RunStatus::Complete => 0,
        RunStatus::Blocked => 2,
        RunStatus::MaxSteps => 3,
    }))
}

fn write_outputs(dir: &Path, outcome: &ExplorationOutcome) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut metrics = BufWriter::new(create(&dir.join("metrics.csv"))?);
    export_metrics(&outcome.records, &mut metrics)?;
    metrics.flush()?;
    let mut map = BufWriter::new(create(&dir.join("map.voxw"))?);
    outcome.map.write_voxw(&mut map)?;
    map.flush()?;
    let mut paths = BufWriter::new(create(&dir.join("paths.csv"))?);
    export_paths(&outcome.paths, &mut paths)?;
    paths.flush()?;
    Ok(())
}

fn render_vq(map_path: &Path, out: &Path, seed: u64, n_r: usize, start: Option<Vec<f64>>) -> Result<()> {
    let file = File::open(map_path).with_context(|| format!("cannot open {}", map_path.display()))?;
    let map = OccupancyMap::read_voxw(BufReader::new(file))?;
    let agent = AgentSpec::ugv();
    let q0 = match start {
        Some(xy) => Viewpoint::new(xy[0], xy[1], agent.sensor_height, 0.0),
        None => first_ground_cell(&map, &agent).context("the map has no free ground cell")?,
    };
    let corridor = ugv_corridor(&map, &agent, &q0)?;
    if corridor.is_empty() {
        bail!("the ground robot does not fit at ({:.2}, {:.2})", q0.position.x, q0.position.y);
    }
    let frontiers = FrontierSet::batch(&map).to_vec();
    let assigned: Vec<VoxelKey> = assign_frontiers(&map, &corridor, &frontiers).iter().map(|a| a.frontier).collect();
    let image = render_view_quality(&corridor, &assigned, &map, n_r, seed)?;
    let mut w = BufWriter::new(create(out)?);
    image.write_csv(&mut w)?;
    w.flush()?;
    println!(
        "{} cells, {} of {} frontiers observable, max gain {}",
        image.cells.len(),
        assigned.len(),
        frontiers.len(),
        image.max_ig()
    );
    Ok(())
}

fn first_ground_cell(map: &OccupancyMap, agent: &AgentSpec) -> Option<Viewpoint> {
    let [nx, ny, _] = map.grid().dims();
    let layer = ugv_layer(map, agent);
    (0..ny as i32)
        .flat_map(|iy| (0..nx as i32).map(move |ix| VoxelKey::new(ix, iy, layer)))
        .find(|&k| ugv_cell_valid(map, agent, k))
        .map(|k| {
            let c = map.grid().center(k);
            Viewpoint::new(c.x, c.y, agent.sensor_height, 0.0)
        })
}
