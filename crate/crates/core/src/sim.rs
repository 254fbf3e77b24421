//! Scene construction and the time-split step loop.

use web_time::Instant;

use glam::DVec3;
use rayon::prelude::*;

use crate::binning::{bin_particles_into, SpaceHash};
use crate::grid::{CellLabel, GridDims, GridError, MacGrid};
use crate::particles::{self, ParticleSet, ReseedLimits, ReseedScope, SeedError, SeedRegion, Shape};
use crate::pressure::{self, SolveParams, SolverError, SolverKind};
use crate::transfer::{self, BlendParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SceneKind {
    DamBreak,
    DoubleDamBreak,
    WaterDrop,
}

impl SceneKind {
    pub const ALL: [SceneKind; 3] = [SceneKind::DamBreak, SceneKind::DoubleDamBreak, SceneKind::WaterDrop];

    pub fn name(self) -> &'static str {
        match self {
            SceneKind::DamBreak => "dam-break",
            SceneKind::DoubleDamBreak => "double-dam-break",
            SceneKind::WaterDrop => "water-drop",
        }
    }

    /// Fluid regions in unit-cube coordinates. `scale` shrinks or grows the
    /// horizontal and vertical extents about the anchoring wall or floor.
    pub fn regions(self, scale: f64) -> Vec<Shape> {
        let dam = |x0: f64, x1: f64| Shape::Box { min: DVec3::new(x0, 0.0, 0.0), max: DVec3::new(x1, 0.75 * scale, 1.0) };
        match self {
            SceneKind::DamBreak => vec![dam(0.0, 0.25 * scale)],
            SceneKind::DoubleDamBreak => vec![dam(0.0, 0.25 * scale), dam(1.0 - 0.25 * scale, 1.0)],
            SceneKind::WaterDrop => {
                let pool = 0.25 * scale;
                let radius = 0.125 * scale;
                vec![
                    Shape::Box { min: DVec3::ZERO, max: DVec3::new(1.0, pool, 1.0) },
                    Shape::Sphere { center: DVec3::new(0.5, 0.6, 0.5), radius },
                ]
            }
        }
    }
}

impl std::fmt::Display for SceneKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SceneKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SceneKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SimError::Config(format!("unknown scene '{s}' (expected dam-break, double-dam-break or water-drop)")))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Seed(#[from] SeedError),
    #[error("pressure solve failed at step {step}: {source}")]
    Solver { step: u64, source: SolverError },
}

/// Everything needed to build and advance one scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub kind: SceneKind,
    /// Cells per axis of the unit-cube domain, including the solid shell.
    pub res: usize,
    /// Particles per cell per axis at seeding.
    pub density: u32,
    /// Multiplier on the scene's region extents.
    pub region_scale: f64,
    pub gravity: DVec3,
    pub solver: SolverKind,
    pub solve: SolveParams,
    pub blend: BlendParams,
    /// CFL number.
    pub alpha: f64,
    pub dt_max: f64,
    pub fluid_density: f64,
    pub extrapolation_layers: usize,
    pub reseed_scope: ReseedScope,
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(kind: SceneKind, res: usize) -> Self {
        Self {
            kind,
            res,
            density: 2,
            region_scale: 1.0,
            gravity: DVec3::new(0.0, -9.81, 0.0),
            solver: SolverKind::Pcg,
            solve: SolveParams::for_solver(SolverKind::Pcg),
            blend: BlendParams::default(),
            alpha: 3.0,
            dt_max: 1.0 / 30.0,
            fluid_density: 1000.0,
            extrapolation_layers: 2,
            reseed_scope: ReseedScope::Interior,
            seed: 1,
        }
    }

    pub fn with_solver(mut self, solver: SolverKind) -> Self {
        self.solver = solver;
        self.solve.max_iters = solver.default_max_iters();
        self
    }

    pub fn dims(&self) -> Result<GridDims, GridError> {
        GridDims::unit_cube(self.res)
    }

    /// Number of particles this spec seeds.
    pub fn particle_count(&self) -> usize {
        match self.dims() {
            Ok(d) => covered_cells(self.kind, self.region_scale, &d) * (self.density as usize).pow(3),
            Err(_) => 0,
        }
    }

    /// Picks density and region scale so the seeded count lands near `target`.
    pub fn fit_particle_target(mut self, target: usize) -> Self {
        let (density, scale) = fit_targets(self.kind, self.res, &[target])[0];
        self.density = density;
        self.region_scale = scale;
        self
    }

    fn validate(&self) -> Result<(), SimError> {
        let bad = |field: &str, why: &str| Err(SimError::Config(format!("{field}: {why}")));
        if self.res < 3 {
            return bad("res", "need at least 3 cells per axis");
        }
        if self.density == 0 {
            return bad("density", "must be at least 1");
        }
        if !(self.region_scale > 0.0 && self.region_scale.is_finite()) {
            return bad("region_scale", "must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha", "must be positive");
        }
        if !(self.dt_max > 0.0 && self.dt_max.is_finite()) {
            return bad("dt_max", "must be positive");
        }
        if !(self.fluid_density > 0.0 && self.fluid_density.is_finite()) {
            return bad("fluid_density", "must be positive");
        }
        if !(self.solve.tol > 0.0 && self.solve.tol.is_finite()) {
            return bad("tol", "must be positive");
        }
        if self.solve.max_iters == 0 {
            return bad("max_iters", "must be at least 1");
        }
        if !self.gravity.is_finite() {
            return bad("gravity", "must be finite");
        }
        Ok(())
    }
}

fn covered_cells(kind: SceneKind, scale: f64, dims: &GridDims) -> usize {
    let shapes = kind.regions(scale);
    let n = dims.nx;
    let mut count = 0;
    for k in 1..n - 1 {
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                let c = dims.cell_center(i, j, k);
                if shapes.iter().any(|s| s.contains(c)) {
                    count += 1;
                }
            }
        }
    }
    count
}

/// Shared region scale plus one density per target, chosen so every target
/// is matched as closely as possible by the same fluid region. Candidates
/// within 5% on all targets prefer the scale closest to 1.
pub fn fit_targets(kind: SceneKind, res: usize, targets: &[usize]) -> Vec<(u32, f64)> {
    let dims = match GridDims::unit_cube(res) {
        Ok(d) => d,
        Err(_) => return targets.iter().map(|_| (1, 1.0)).collect(),
    };
    let scales: Vec<f64> = (40..=160).map(|s| s as f64 / 100.0).collect();
    let cells: Vec<usize> = scales.par_iter().map(|&s| covered_cells(kind, s, &dims)).collect();
    // (worst error or 0 when within 5%, distance of scale from 1, scale, densities)
    let mut best: Option<(f64, f64, f64, Vec<u32>)> = None;
    for (&s, &c) in scales.iter().zip(&cells) {
        if c == 0 {
            continue;
        }
        let mut worst = 0.0f64;
        let mut densities = Vec::with_capacity(targets.len());
        for &t in targets {
            let err = |rho: u32| ((c * (rho as usize).pow(3)) as f64 / t.max(1) as f64 - 1.0).abs();
            let lo = ((t as f64 / c as f64).cbrt().floor() as u32).max(1);
            let rho = if err(lo) <= err(lo + 1) { lo } else { lo + 1 };
            worst = worst.max(err(rho));
            densities.push(rho);
        }
        let key = (if worst <= 0.05 { 0.0 } else { worst }, (s - 1.0).abs());
        if best.as_ref().is_none_or(|b| key < (b.0, b.1)) {
            best = Some((key.0, key.1, s, densities));
        }
    }
    match best {
        Some((_, _, s, d)) => d.into_iter().map(|rho| (rho, s)).collect(),
        None => targets.iter().map(|_| (1, 1.0)).collect(),
    }
}

/// Wall-clock milliseconds per stage of one step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageTimings {
    pub dt_compute: f64,
    pub advect: f64,
    pub bin: f64,
    pub classify: f64,
    pub p2g: f64,
    /// Both velocity extrapolation passes.
    pub extrapolate: f64,
    pub force: f64,
    pub project: f64,
    pub apply_gradient: f64,
    pub g2p: f64,
    pub reseed: f64,
}

impl StageTimings {
    pub const NAMES: [&'static str; 11] =
        ["dt_compute", "advect", "bin", "classify", "p2g", "extrapolate", "force", "project", "apply_gradient", "g2p", "reseed"];

    pub fn values(&self) -> [f64; 11] {
        [
            self.dt_compute,
            self.advect,
            self.bin,
            self.classify,
            self.p2g,
            self.extrapolate,
            self.force,
            self.project,
            self.apply_gradient,
            self.g2p,
            self.reseed,
        ]
    }

    pub fn sum(&self) -> f64 {
        self.values().iter().sum()
    }

    pub fn accumulate(&mut self, other: &StageTimings) {
        let [a, b, c, d, e, f, g, h, i, j, k] = other.values();
        self.dt_compute += a;
        self.advect += b;
        self.bin += c;
        self.classify += d;
        self.p2g += e;
        self.extrapolate += f;
        self.force += g;
        self.project += h;
        self.apply_gradient += i;
        self.g2p += j;
        self.reseed += k;
    }

    pub fn scaled(&self, factor: f64) -> StageTimings {
        let v = self.values().map(|x| x * factor);
        StageTimings {
            dt_compute: v[0],
            advect: v[1],
            bin: v[2],
            classify: v[3],
            p2g: v[4],
            extrapolate: v[5],
            force: v[6],
            project: v[7],
            apply_gradient: v[8],
            g2p: v[9],
            reseed: v[10],
        }
    }
}

/// Diagnostics of one completed step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub step: u64,
    pub dt: f64,
    pub timings: StageTimings,
    /// Wall-clock time of the whole step in ms.
    pub total_ms: f64,
    pub solver_iterations: usize,
    pub solver_residual: f64,
    pub solver_converged: bool,
    pub max_divergence: f64,
    pub particles: usize,
}

#[derive(Clone, Debug)]
pub struct SimState {
    pub grid: MacGrid,
    /// Copy of the grid after transfer, before forces and projection.
    pub grid_old: MacGrid,
    pub particles: ParticleSet,
    pub hash: SpaceHash,
    pub time: f64,
    pub step_count: u64,
    back: ParticleSet,
}

/// Seeds the scene's regions into a shell-walled unit cube.
pub fn make_scene(spec: &SceneSpec) -> Result<SimState, SimError> {
    spec.validate()?;
    let dims = spec.dims()?;
    let mut grid = MacGrid::with_solid_shell(dims);
    let mut seeded = ParticleSet::new();
    for (n, shape) in spec.kind.regions(spec.region_scale).into_iter().enumerate() {
        let region = SeedRegion { shape, density: spec.density };
        // regions are disjoint, but keep their random streams apart anyway
        let part = particles::seed(&region, &grid, spec.seed ^ (n as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))?;
        seeded.extend_from(&part);
    }
    let mut back = ParticleSet::new();
    let hash = bin_particles_into(&mut seeded, &mut back, &dims);
    grid.classify_cells(&hash);
    Ok(SimState { grid_old: grid.clone(), grid, particles: seeded, hash, time: 0.0, step_count: 0, back })
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn step_seed(seed: u64, step: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ step.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Advances the state by one CFL-limited timestep.
pub fn step(state: &mut SimState, spec: &SceneSpec) -> Result<StepReport, SimError> {
    let start = Instant::now();
    let mut t = StageTimings::default();
    let dims = state.grid.dims;
    let step_no = state.step_count + 1;

    let s = Instant::now();
    let dt = particles::compute_dt(&state.particles, dims.dtau, spec.alpha, spec.dt_max);
    t.dt_compute = ms_since(s);

    let s = Instant::now();
    particles::advect(&mut state.particles, &state.grid, dt, 1e-3 * dims.dtau);
    t.advect = ms_since(s);

    let s = Instant::now();
    state.hash = bin_particles_into(&mut state.particles, &mut state.back, &dims);
    t.bin = ms_since(s);

    let s = Instant::now();
    state.grid.classify_cells(&state.hash);
    t.classify = ms_since(s);

    let s = Instant::now();
    let known = transfer::p2g(&state.particles, &state.hash, &mut state.grid);
    t.p2g = ms_since(s);

    let s = Instant::now();
    state.grid.extrapolate_velocity(&known, spec.extrapolation_layers);
    t.extrapolate = ms_since(s);

    let s = Instant::now();
    state.grid_old.clone_from(&state.grid);
    t.p2g += ms_since(s);

    let s = Instant::now();
    state.grid.add_body_force(spec.gravity, dt);
    state.grid.enforce_solid_boundaries();
    t.force = ms_since(s);

    let s = Instant::now();
    let mut system = pressure::assemble(&state.grid, dt, spec.fluid_density, &state.hash.fluid_cells);
    system.pin_null_spaces();
    // the solver stops on a residual relative to max(1, |rhs|); tighten it
    // so the post-projection divergence stays within 100 tol in absolute terms
    let rhs_max = system.rhs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let params = SolveParams { tol: spec.solve.tol * (100.0 / rhs_max).min(1.0), ..spec.solve };
    let report = pressure::solve(spec.solver, &system, &params).map_err(|source| SimError::Solver { step: step_no, source })?;
    system.scatter_pressure(&report.pressure, &mut state.grid);
    t.project = ms_since(s);

    let s = Instant::now();
    pressure::apply_pressure_gradient(&mut state.grid, dt, spec.fluid_density);
    t.apply_gradient = ms_since(s);
    let max_divergence = state.grid.max_fluid_divergence();

    let s = Instant::now();
    let fluid = state.grid.fluid_faces();
    state.grid.extrapolate_velocity(&fluid, spec.extrapolation_layers);
    t.extrapolate += ms_since(s);

    let s = Instant::now();
    transfer::g2p(&state.grid, &state.grid_old, &mut state.particles, spec.blend);
    t.g2p = ms_since(s);

    let s = Instant::now();
    let limits = ReseedLimits { scope: spec.reseed_scope, ..ReseedLimits::for_density(spec.density) };
    let (reseeded, hash) =
        particles::reseed(&state.particles, &state.grid, &state.hash, step_seed(spec.seed, step_no), spec.density, limits);
    state.particles = reseeded;
    state.hash = hash;
    t.reseed = ms_since(s);

    state.time += dt;
    state.step_count = step_no;
    if !report.converged {
        log::warn!("step {step_no}: {} stopped at residual {:e}", spec.solver, report.residual);
    }
    Ok(StepReport {
        step: step_no,
        dt,
        timings: t,
        total_ms: ms_since(start),
        solver_iterations: report.iterations,
        solver_residual: report.residual,
        solver_converged: report.converged,
        max_divergence,
        particles: state.particles.len(),
    })
}

/// `Σ ½|v|² + |g|·(y - floor)` with unit particle mass.
pub fn total_energy(particles: &ParticleSet, g: DVec3, floor: f64) -> f64 {
    const CHUNK: usize = 4096;
    let g = g.length();
    let ids: Vec<usize> = (0..particles.len()).collect();
    let partial: Vec<f64> = ids
        .par_chunks(CHUNK)
        .map(|chunk| {
            chunk.iter().map(|&i| 0.5 * particles.velocity(i).length_squared() + g * (particles.position(i).y - floor)).sum::<f64>()
        })
        .collect();
    partial.into_iter().sum()
}

/// Height of the lowest non-SOLID cell face, the floor used for energies.
pub fn floor_height(grid: &MacGrid) -> f64 {
    grid.fluid_bounds().0.y
}

/// Number of FLUID cells in the current labelling.
pub fn fluid_cell_count(state: &SimState) -> usize {
    state.grid.count_label(CellLabel::Fluid)
}
