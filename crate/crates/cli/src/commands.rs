use std::path::{Path, PathBuf};
use std::time::Instant;

use flipsim::binning::bin_particles;
use flipsim::grid::GridDims;
use flipsim::particles::ParticleSet;
use flipsim::sim::{self, fit_targets, SceneKind, StageTimings, StepReport};
use flipsim::surface::{build_field, export_mesh, marching_cubes, vertex_normals, FieldLattice, FieldParams, TriangleMesh};
use glam::DVec3;

use crate::config::RunConfig;
use crate::report::{self, CsvFile};
use crate::snapshot::{read_snapshot, write_snapshot};
use crate::CliError;

/// Runs `f` on a pool with `workers` threads (0 = hardware parallelism).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

pub fn snapshot_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("step_{step:06}.flip"))
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub reports: Vec<StepReport>,
    /// Total energy before the first step and after each one.
    pub energies: Vec<f64>,
    pub initial_particles: usize,
    pub mean: StageTimings,
    pub avg_step_ms: f64,
    pub snapshots: Vec<PathBuf>,
}

impl RunSummary {
    pub fn text(&self, scene: SceneKind, res: usize) -> String {
        report::format_summary(&summary_label(scene, res), self.reports.len(), self.initial_particles, &self.mean, self.avg_step_ms)
    }
}

fn summary_label(scene: SceneKind, res: usize) -> String {
    format!("{scene} {res}³")
}

fn mean_timings(reports: &[StepReport]) -> (StageTimings, f64) {
    if reports.is_empty() {
        return (StageTimings::default(), 0.0);
    }
    let mut sum = StageTimings::default();
    for r in reports {
        sum.accumulate(&r.timings);
    }
    let n = reports.len() as f64;
    (sum.scaled(1.0 / n), reports.iter().map(|r| r.total_ms).sum::<f64>() / n)
}

/// Builds the scene, steps it and writes `timings.csv`, `energy.csv` and
/// snapshots (plus meshes when `mesh_lattice` is set) into `cfg.out`.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunSummary, CliError> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    let spec = cfg.resolved_scene();
    with_workers(cfg.workers, || {
        let mut state = sim::make_scene(&spec)?;
        let floor = sim::floor_height(&state.grid);
        let energy = |ps: &ParticleSet| sim::total_energy(ps, spec.gravity, floor);
        let mut timings = CsvFile::create(&cfg.out.join("timings.csv"), &report::timings_header())?;
        let mut energy_csv = CsvFile::create(&cfg.out.join("energy.csv"), &report::ENERGY_HEADER)?;
        let initial_particles = state.particles.len();
        log::info!("{} at {}³ with {} particles", spec.kind, spec.res, initial_particles);

        let mut snapshots = Vec::new();
        let mut save = |state: &sim::SimState| -> Result<(), CliError> {
            let path = snapshot_path(&cfg.out, state.step_count);
            write_snapshot(&state.particles, &path)?;
            if cfg.mesh_lattice >= 2 {
                let (mesh, _) = mesh_particles(&state.particles, spec.res, cfg.mesh_lattice, None, 0.0)?;
                export_mesh(&mesh, &path.with_extension("obj"))?;
            }
            snapshots.push(path);
            Ok(())
        };

        let e0 = energy(&state.particles);
        energy_csv.row([0.to_string(), 0.to_string(), e0.to_string(), initial_particles.to_string()])?;
        let mut energies = vec![e0];
        save(&state)?;
        let mut reports = Vec::with_capacity(cfg.steps as usize);
        for n in 1..=cfg.steps {
            let r = sim::step(&mut state, &spec)?;
            timings.row(report::timings_row(&r, state.time))?;
            let e = energy(&state.particles);
            energy_csv.row([r.step.to_string(), state.time.to_string(), e.to_string(), r.particles.to_string()])?;
            energies.push(e);
            reports.push(r);
            if (cfg.snapshot_every > 0 && n % cfg.snapshot_every == 0) || n == cfg.steps {
                save(&state)?;
            }
        }
        timings.finish()?;
        energy_csv.finish()?;
        let (mean, avg_step_ms) = mean_timings(&reports);
        Ok(RunSummary { reports, energies, initial_particles, mean, avg_step_ms, snapshots })
    })?
}

/// Field plus marching cubes over a unit-cube lattice with `lattice` corners
/// per axis. Particles are hashed on a `res`³ grid; the particle radius
/// defaults to half that grid's cell size.
pub fn mesh_particles(
    particles: &ParticleSet,
    res: usize,
    lattice: usize,
    radius: Option<f64>,
    isovalue: f64,
) -> Result<(TriangleMesh, f64), CliError> {
    if lattice < 2 {
        return Err(CliError::Usage(format!("lattice: need at least 2 corners per axis, got {lattice}")));
    }
    let dims = GridDims::unit_cube(res).map_err(|e| CliError::Usage(format!("res: {e}")))?;
    let params = match radius {
        Some(r) => FieldParams::new(2.0 * r, r).map_err(|e| CliError::Usage(format!("radius: {e}")))?,
        None => FieldParams::for_grid(dims.dtau),
    };
    let lat = FieldLattice { mx: lattice, my: lattice, mz: lattice, spacing: 1.0 / (lattice - 1) as f64, origin: DVec3::ZERO };
    let (sorted, hash) = bin_particles(particles, &dims);
    let field = build_field(&sorted, &hash, &dims, &lat, &params);
    let start = Instant::now();
    let mut mesh = marching_cubes(&field, isovalue);
    let mc_ms = start.elapsed().as_secs_f64() * 1e3;
    vertex_normals(&mut mesh);
    Ok((mesh, mc_ms))
}

#[derive(Clone, Debug)]
pub struct MeshRequest {
    pub snapshot: PathBuf,
    pub out: PathBuf,
    pub lattice: usize,
    pub res: usize,
    pub radius: Option<f64>,
    pub isovalue: f64,
    pub workers: usize,
}

#[derive(Clone, Debug)]
pub struct MeshSummary {
    pub vertices: usize,
    pub triangles: usize,
    pub mc_ms: f64,
}

pub fn cmd_mesh(req: &MeshRequest) -> Result<MeshSummary, CliError> {
    let particles = read_snapshot(&req.snapshot)?;
    let (mesh, mc_ms) = with_workers(req.workers, || mesh_particles(&particles, req.res, req.lattice, req.radius, req.isovalue))??;
    export_mesh(&mesh, &req.out)?;
    Ok(MeshSummary { vertices: mesh.vertices.len(), triangles: mesh.triangles.len(), mc_ms })
}

#[derive(Clone, Debug)]
pub struct BenchMatrix {
    pub scenes: Vec<SceneKind>,
    pub resolutions: Vec<usize>,
    pub targets: Vec<usize>,
    /// Measured steps per cell.
    pub steps: u64,
    /// Unmeasured steps run first.
    pub warmup: u64,
    /// Solver, tolerances and the rest come from here.
    pub base: RunConfig,
    pub csv: PathBuf,
}

#[derive(Clone, Debug)]
pub struct BenchCell {
    pub scene: SceneKind,
    pub res: usize,
    pub target: usize,
    pub particles: usize,
    pub steps: usize,
    pub mean: StageTimings,
    pub avg_step_ms: f64,
    pub error: Option<String>,
}

impl BenchCell {
    pub fn text(&self) -> String {
        let label = summary_label(self.scene, self.res);
        match &self.error {
            Some(e) => format!("{label} target {}: FAILED: {e}\n", self.target),
            None => report::format_summary(&label, self.steps, self.particles, &self.mean, self.avg_step_ms),
        }
    }
}

fn bench_cell(spec: &flipsim::sim::SceneSpec, steps: u64, warmup: u64) -> Result<(usize, StageTimings, f64), CliError> {
    let mut state = sim::make_scene(spec)?;
    let particles = state.particles.len();
    for _ in 0..warmup {
        sim::step(&mut state, spec)?;
    }
    let mut reports = Vec::with_capacity(steps as usize);
    for _ in 0..steps {
        reports.push(sim::step(&mut state, spec)?);
    }
    let (mean, avg) = mean_timings(&reports);
    Ok((particles, mean, avg))
}

/// Runs every (scene, res, target) cell and writes the long-form CSV. Cells
/// sharing a scene and resolution share one fluid region; only the seed
/// density changes with the target.
pub fn cmd_bench(m: &BenchMatrix) -> Result<Vec<BenchCell>, CliError> {
    m.base.validate()?;
    if m.scenes.is_empty() || m.resolutions.is_empty() || m.targets.is_empty() {
        return Err(CliError::Usage("bench matrix needs at least one scene, resolution and particle target".into()));
    }
    if let Some(dir) = m.csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut csv = CsvFile::create(&m.csv, &report::BENCH_HEADER)?;
    let mut cells = Vec::new();
    for &scene in &m.scenes {
        for &res in &m.resolutions {
            let fits = fit_targets(scene, res, &m.targets);
            for (&target, &(density, scale)) in m.targets.iter().zip(&fits) {
                let mut spec = m.base.scene.clone();
                spec.kind = scene;
                spec.res = res;
                spec.density = density;
                spec.region_scale = scale;
                let outcome = with_workers(m.base.workers, || bench_cell(&spec, m.steps, m.warmup)).and_then(|r| r);
                let cell = match outcome {
                    Ok((particles, mean, avg_step_ms)) => {
                        let name = scene.name();
                        for (stage, ms) in StageTimings::NAMES.iter().zip(mean.values()) {
                            csv.row([name, &res.to_string(), &particles.to_string(), stage, &ms.to_string()])?;
                        }
                        csv.row([name, &res.to_string(), &particles.to_string(), "total", &avg_step_ms.to_string()])?;
                        BenchCell { scene, res, target, particles, steps: m.steps as usize, mean, avg_step_ms, error: None }
                    }
                    Err(e) => {
                        log::error!("bench {scene} {res}³ target {target}: {e}");
                        BenchCell {
                            scene,
                            res,
                            target,
                            particles: 0,
                            steps: 0,
                            mean: StageTimings::default(),
                            avg_step_ms: 0.0,
                            error: Some(e.to_string()),
                        }
                    }
                };
                cells.push(cell);
            }
        }
    }
    csv.finish()?;
    Ok(cells)
}
