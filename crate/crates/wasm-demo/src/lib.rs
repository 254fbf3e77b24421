//! Browser bindings: build a scene, step it, and extract its surface.
//!
//! [`Session`] holds the plain-Rust logic so it can be tested natively;
//! [`Demo`] wraps it for JavaScript.

use flipsim::binning::bin_particles;
use flipsim::pressure::SolverKind;
use flipsim::sim::{self, SceneKind, SceneSpec, SimState, StepReport};
use flipsim::surface::{build_field, marching_cubes, vertex_normals, FieldLattice, FieldParams, TriangleMesh};
use wasm_bindgen::prelude::*;

/// Largest resolution the page offers; a single browser thread gets slow beyond it.
pub const MAX_RES: usize = 48;

pub struct Session {
    spec: SceneSpec,
    state: SimState,
    last: Option<StepReport>,
}

impl Session {
    pub fn new(scene: &str, res: usize, solver: &str) -> Result<Self, String> {
        if !(4..=MAX_RES).contains(&res) {
            return Err(format!("resolution must be between 4 and {MAX_RES}, got {res}"));
        }
        let kind: SceneKind = scene.parse().map_err(|e| format!("{e}"))?;
        let solver: SolverKind = solver.parse()?;
        let spec = SceneSpec::new(kind, res).with_solver(solver);
        let state = sim::make_scene(&spec).map_err(|e| e.to_string())?;
        Ok(Self { spec, state, last: None })
    }

    pub fn advance(&mut self, steps: u32) -> Result<(), String> {
        for _ in 0..steps {
            self.last = Some(sim::step(&mut self.state, &self.spec).map_err(|e| e.to_string())?);
        }
        Ok(())
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn last_report(&self) -> Option<&StepReport> {
        self.last.as_ref()
    }

    /// Particle positions as interleaved xyz.
    pub fn positions(&self) -> Vec<f32> {
        let ps = &self.state.particles;
        let mut out = Vec::with_capacity(3 * ps.len());
        for i in 0..ps.len() {
            out.extend_from_slice(&[ps.pos_x[i], ps.pos_y[i], ps.pos_z[i]]);
        }
        out
    }

    /// Surface mesh on a lattice with `per_cell` intervals per simulation cell.
    pub fn surface(&self, per_cell: usize) -> TriangleMesh {
        let dims = self.state.grid.dims;
        let lattice = FieldLattice::covering(&dims, per_cell.clamp(1, 4));
        let (sorted, hash) = bin_particles(&self.state.particles, &dims);
        let field = build_field(&sorted, &hash, &dims, &lattice, &FieldParams::for_grid(dims.dtau));
        let mut mesh = marching_cubes(&field, 0.0);
        vertex_normals(&mut mesh);
        mesh
    }

    pub fn status(&self) -> String {
        let s = &self.state;
        let mut line = format!(
            "{} {}³ {} | step {} t {:.3} s | {} particles",
            self.spec.kind,
            self.spec.res,
            self.spec.solver,
            s.step_count,
            s.time,
            s.particles.len()
        );
        if let Some(r) = &self.last {
            line += &format!(
                " | dt {:.4} | {} iters, residual {:.1e} | {:.1} ms/step",
                r.dt, r.solver_iterations, r.solver_residual, r.total_ms
            );
        }
        line
    }
}

fn flatten(v: &[glam::DVec3]) -> Vec<f32> {
    v.iter().flat_map(|p| [p.x as f32, p.y as f32, p.z as f32]).collect()
}

#[wasm_bindgen]
pub struct Demo {
    session: Session,
    mesh: TriangleMesh,
}

#[wasm_bindgen]
impl Demo {
    /// Builds `scene` ("dam-break", "double-dam-break", "water-drop") at `res`
    /// cells per axis, solved with `solver` ("jacobi", "gs", "rbgs", "pcg").
    #[wasm_bindgen(constructor)]
    pub fn new(scene: &str, res: usize, solver: &str) -> Result<Demo, JsError> {
        let session = Session::new(scene, res, solver).map_err(|e| JsError::new(&e))?;
        Ok(Demo { session, mesh: TriangleMesh::default() })
    }

    pub fn step(&mut self, steps: u32) -> Result<(), JsError> {
        self.session.advance(steps).map_err(|e| JsError::new(&e))
    }

    pub fn status(&self) -> String {
        self.session.status()
    }

    pub fn positions(&self) -> Vec<f32> {
        self.session.positions()
    }

    /// Rebuilds the surface mesh and returns its triangle count.
    pub fn remesh(&mut self, per_cell: usize) -> usize {
        self.mesh = self.session.surface(per_cell);
        self.mesh.triangles.len()
    }

    pub fn mesh_vertices(&self) -> Vec<f32> {
        flatten(&self.mesh.vertices)
    }

    pub fn mesh_normals(&self) -> Vec<f32> {
        flatten(&self.mesh.normals)
    }

    pub fn mesh_indices(&self) -> Vec<u32> {
        self.mesh.triangles.iter().flatten().copied().collect()
    }
}
