use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flipsim::sim::SceneKind;
use flipsim_cli::{cmd_bench, cmd_mesh, cmd_run, BenchMatrix, CliError, MeshRequest, RunConfig};

#[derive(Parser)]
#[command(name = "flipsim", version, about = "FLIP fluid simulation: run scenes, mesh snapshots, benchmark stages")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scene, writing timings.csv, energy.csv and snapshots.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        snapshot_every: Option<u64>,
        /// Lattice corners per axis for meshes next to each snapshot.
        #[arg(long)]
        mesh_lattice: Option<usize>,
    },
    /// Reconstruct a surface from a snapshot and write it as OBJ.
    Mesh {
        #[command(flatten)]
        common: Common,
        snapshot: PathBuf,
        /// Output OBJ path; defaults to the snapshot path with .obj.
        #[arg(long, short = 'o')]
        obj: Option<PathBuf>,
        /// Lattice corners per axis.
        #[arg(long, default_value_t = 104)]
        lattice: usize,
        /// Particle radius; defaults to half a simulation cell.
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        iso: f64,
    },
    /// Time every (scene, resolution, particle target) cell.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        scenes: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',')]
        resolutions: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        targets: Option<Vec<usize>>,
        #[arg(long, default_value_t = 0)]
        warmup: u64,
        /// Long-form CSV path; defaults to <out>/bench.csv.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

/// Config file plus overrides shared by every command.
#[derive(Args)]
struct Common {
    /// Flat `key = value` file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// dam-break, double-dam-break or water-drop.
    #[arg(long)]
    scene: Option<String>,
    /// Cells per axis, including the solid shell.
    #[arg(long)]
    res: Option<usize>,
    #[arg(long)]
    steps: Option<u64>,
    /// jacobi, gs, rbgs or pcg.
    #[arg(long)]
    solver: Option<String>,
    /// Relative residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// FLIP fraction of the velocity blend (0 = PIC).
    #[arg(long)]
    flip: Option<f64>,
    /// CFL number.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Particle target; density and region size are fitted to it.
    #[arg(long)]
    particles: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        // solver before max_iters, as in config files
        let overrides = [
            ("scene", self.scene.clone()),
            ("res", self.res.map(|v| v.to_string())),
            ("steps", self.steps.map(|v| v.to_string())),
            ("solver", self.solver.clone()),
            ("tol", self.tol.map(|v| v.to_string())),
            ("max_iters", self.max_iters.map(|v| v.to_string())),
            ("flip", self.flip.map(|v| v.to_string())),
            ("alpha", self.alpha.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("particles", self.particles.map(|v| v.to_string())),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
            ("workers", self.workers.map(|v| v.to_string())),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        Ok(cfg)
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { common, snapshot_every, mesh_lattice } => {
            let mut cfg = common.config()?;
            if let Some(n) = snapshot_every {
                cfg.snapshot_every = n;
            }
            if let Some(n) = mesh_lattice {
                cfg.mesh_lattice = n;
            }
            let summary = cmd_run(&cfg)?;
            print!("{}", summary.text(cfg.scene.kind, cfg.scene.res));
            if let (Some(first), Some(last)) = (summary.energies.first(), summary.energies.last()) {
                println!("energy {first:.6e} -> {last:.6e}");
            }
            println!("output in {}", cfg.out.display());
        }
        Command::Mesh { common, snapshot, obj, lattice, radius, iso } => {
            let cfg = common.config()?;
            let out = obj.unwrap_or_else(|| snapshot.with_extension("obj"));
            let req = MeshRequest { snapshot, out: out.clone(), lattice, res: cfg.scene.res, radius, isovalue: iso, workers: cfg.workers };
            let s = cmd_mesh(&req)?;
            println!("{} vertices, {} triangles -> {}", s.vertices, s.triangles, out.display());
            println!("marching cubes {:.3} ms on a {lattice}³ lattice", s.mc_ms);
        }
        Command::Bench { common, scenes, resolutions, targets, warmup, csv } => {
            let cfg = common.config()?;
            let scenes = match scenes {
                Some(names) => names
                    .iter()
                    .map(|n| n.parse::<SceneKind>().map_err(|e| CliError::Usage(format!("scenes: {e}"))))
                    .collect::<Result<Vec<_>, _>>()?,
                None => vec![cfg.scene.kind],
            };
            let resolutions = resolutions.unwrap_or_else(|| vec![cfg.scene.res]);
            let targets = match (targets, cfg.particles) {
                (Some(t), _) => t,
                (None, Some(n)) => vec![n],
                (None, None) => vec![cfg.scene.particle_count()],
            };
            let csv = csv.unwrap_or_else(|| cfg.out.join("bench.csv"));
            let matrix = BenchMatrix { scenes, resolutions, targets, steps: cfg.steps, warmup, base: cfg, csv: csv.clone() };
            let cells = cmd_bench(&matrix)?;
            for c in &cells {
                print!("{}", c.text());
            }
            println!("bench rows in {}", csv.display());
            let failed = cells.iter().filter(|c| c.error.is_some()).count();
            if failed > 0 {
                return Err(CliError::Runtime(format!("{failed} of {} bench cells failed", cells.len())));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("flipsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
