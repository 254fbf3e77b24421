//! Surface reconstruction: a blob-style signed distance field sampled from
//! the particles on an independent corner lattice, marching cubes, vertex
//! normals and OBJ export.

mod field;
mod marching_cubes;
mod mesh;
#[rustfmt::skip]
pub mod tables;

pub use field::{build_field, build_field_brute_force, decay_kernel, FieldLattice, FieldParams, FieldParamsError, ScalarField};
pub use marching_cubes::{case_index, marching_cubes};
pub use mesh::{export_mesh, read_obj, vertex_normals, write_obj, MeshError, TriangleMesh};

use crate::binning::SpaceHash;
use crate::grid::GridDims;
use crate::particles::ParticleSet;

/// Field, isosurface at `isovalue`, then normals.
pub fn reconstruct(
    particles: &ParticleSet,
    hash: &SpaceHash,
    sim: &GridDims,
    lattice: &FieldLattice,
    params: &FieldParams,
    isovalue: f64,
) -> TriangleMesh {
    let field = build_field(particles, hash, sim, lattice, params);
    let mut mesh = marching_cubes(&field, isovalue);
    let dropped = vertex_normals(&mut mesh);
    if dropped > 0 {
        log::debug!("dropped {dropped} zero-area triangles");
    }
    mesh
}
