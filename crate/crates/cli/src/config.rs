//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use flipsim::particles::ReseedScope;
use flipsim::pressure::{Preconditioner, SolverKind};
use flipsim::sim::{SceneKind, SceneSpec};
use flipsim::transfer::BlendParams;
use glam::DVec3;

use crate::CliError;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub scene: SceneSpec,
    /// Particle target; when set, density and region scale are fitted to it.
    pub particles: Option<usize>,
    pub steps: u64,
    pub out: PathBuf,
    /// Snapshot every this many steps; 0 keeps only the first and last.
    pub snapshot_every: u64,
    /// Lattice corners per axis for meshes written next to snapshots; 0 disables.
    pub mesh_lattice: usize,
    /// Worker threads; 0 picks the hardware parallelism.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scene: SceneSpec::new(SceneKind::DamBreak, 32),
            particles: None,
            steps: 50,
            out: PathBuf::from("out"),
            snapshot_every: 10,
            mesh_lattice: 0,
            workers: 0,
        }
    }
}

pub const KEYS: [&str; 22] = [
    "scene",
    "res",
    "particles",
    "density",
    "region_scale",
    "solver",
    "tol",
    "max_iters",
    "preconditioner",
    "flip",
    "alpha",
    "dt_max",
    "gravity",
    "fluid_density",
    "extrapolation_layers",
    "reseed_scope",
    "seed",
    "steps",
    "out",
    "snapshot_every",
    "mesh_lattice",
    "workers",
];

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| CliError::Usage(format!("{key}: cannot parse '{value}'")))
}

fn preconditioner_name(p: Preconditioner) -> &'static str {
    match p {
        Preconditioner::Mic0 => "mic0",
        Preconditioner::Jacobi => "jacobi",
    }
}

fn scope_name(s: ReseedScope) -> &'static str {
    match s {
        ReseedScope::AllFluid => "all-fluid",
        ReseedScope::Interior => "interior",
    }
}

impl RunConfig {
    /// Applies one setting. Unknown keys and malformed values are usage errors
    /// naming the key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let value = value.trim();
        let usage = |why: String| CliError::Usage(format!("{key}: {why}"));
        let s = &mut self.scene;
        match key {
            "scene" => s.kind = value.parse().map_err(|e: flipsim::sim::SimError| usage(e.to_string()))?,
            "res" => s.res = parse_num(key, value)?,
            "particles" => {
                let n: usize = parse_num(key, value)?;
                self.particles = (n > 0).then_some(n);
            }
            "density" => s.density = parse_num(key, value)?,
            "region_scale" => s.region_scale = parse_num(key, value)?,
            "solver" => {
                let kind: SolverKind = value.parse().map_err(|e: String| usage(e))?;
                *s = s.clone().with_solver(kind);
            }
            "tol" => s.solve.tol = parse_num(key, value)?,
            "max_iters" => s.solve.max_iters = parse_num(key, value)?,
            "preconditioner" => {
                s.solve.preconditioner = match value {
                    "mic0" => Preconditioner::Mic0,
                    "jacobi" => Preconditioner::Jacobi,
                    _ => return Err(usage(format!("expected mic0 or jacobi, got '{value}'"))),
                }
            }
            "flip" => s.blend = BlendParams::new(parse_num(key, value)?).map_err(|e| usage(e.to_string()))?,
            "alpha" => s.alpha = parse_num(key, value)?,
            "dt_max" => s.dt_max = parse_num(key, value)?,
            "gravity" => {
                let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                if parts.len() != 3 {
                    return Err(usage(format!("expected x,y,z, got '{value}'")));
                }
                let mut g = [0.0; 3];
                for (x, p) in g.iter_mut().zip(parts) {
                    *x = parse_num(key, p)?;
                }
                s.gravity = DVec3::from_array(g);
            }
            "fluid_density" => s.fluid_density = parse_num(key, value)?,
            "extrapolation_layers" => s.extrapolation_layers = parse_num(key, value)?,
            "reseed_scope" => {
                s.reseed_scope = match value {
                    "all-fluid" => ReseedScope::AllFluid,
                    "interior" => ReseedScope::Interior,
                    _ => return Err(usage(format!("expected all-fluid or interior, got '{value}'"))),
                }
            }
            "seed" => s.seed = parse_num(key, value)?,
            "steps" => self.steps = parse_num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "snapshot_every" => self.snapshot_every = parse_num(key, value)?,
            "mesh_lattice" => self.mesh_lattice = parse_num(key, value)?,
            "workers" => self.workers = parse_num(key, value)?,
            _ => return Err(CliError::Usage(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Value of `key` in the form [`set`](Self::set) accepts.
    pub fn get(&self, key: &str) -> Option<String> {
        let s = &self.scene;
        Some(match key {
            "scene" => s.kind.name().to_string(),
            "res" => s.res.to_string(),
            "particles" => self.particles.unwrap_or(0).to_string(),
            "density" => s.density.to_string(),
            "region_scale" => s.region_scale.to_string(),
            "solver" => s.solver.name().to_string(),
            "tol" => s.solve.tol.to_string(),
            "max_iters" => s.solve.max_iters.to_string(),
            "preconditioner" => preconditioner_name(s.solve.preconditioner).to_string(),
            "flip" => s.blend.flip_fraction().to_string(),
            "alpha" => s.alpha.to_string(),
            "dt_max" => s.dt_max.to_string(),
            "gravity" => format!("{},{},{}", s.gravity.x, s.gravity.y, s.gravity.z),
            "fluid_density" => s.fluid_density.to_string(),
            "extrapolation_layers" => s.extrapolation_layers.to_string(),
            "reseed_scope" => scope_name(s.reseed_scope).to_string(),
            "seed" => s.seed.to_string(),
            "steps" => self.steps.to_string(),
            "out" => self.out.display().to_string(),
            "snapshot_every" => self.snapshot_every.to_string(),
            "mesh_lattice" => self.mesh_lattice.to_string(),
            "workers" => self.workers.to_string(),
            _ => return None,
        })
    }

    /// Parses config text on top of the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        // solver first: choosing a solver resets max_iters to its default
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| CliError::Usage(format!("line {}: expected key = value", n + 1)))?;
            entries.push((key.trim().to_string(), value.trim().to_string()));
        }
        entries.sort_by_key(|(k, _)| k != "solver");
        for (k, v) in entries {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).unwrap_or_default());
        }
        out
    }

    /// Scene spec with the particle target applied.
    pub fn resolved_scene(&self) -> SceneSpec {
        match self.particles {
            Some(n) => self.scene.clone().fit_particle_target(n),
            None => self.scene.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let s = &self.scene;
        let bad = |field: &str, why: &str| Err(CliError::Usage(format!("{field}: {why}")));
        if s.res < 3 {
            return bad("res", "need at least 3 cells per axis");
        }
        if s.density == 0 {
            return bad("density", "must be at least 1");
        }
        if !(s.region_scale > 0.0 && s.region_scale.is_finite()) {
            return bad("region_scale", "must be positive");
        }
        if !(s.solve.tol > 0.0 && s.solve.tol.is_finite()) {
            return bad("tol", "must be positive");
        }
        if s.solve.max_iters == 0 {
            return bad("max_iters", "must be at least 1");
        }
        if !(s.alpha > 0.0 && s.alpha.is_finite()) {
            return bad("alpha", "must be positive");
        }
        if !(s.dt_max > 0.0 && s.dt_max.is_finite()) {
            return bad("dt_max", "must be positive");
        }
        if !(s.fluid_density > 0.0 && s.fluid_density.is_finite()) {
            return bad("fluid_density", "must be positive");
        }
        if !s.gravity.is_finite() {
            return bad("gravity", "must be finite");
        }
        if self.mesh_lattice == 1 {
            return bad("mesh_lattice", "need at least 2 corners per axis");
        }
        Ok(())
    }
}
