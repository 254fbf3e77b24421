use glam::DVec3;
use rayon::prelude::*;

use crate::binning::SpaceHash;
use crate::grid::GridDims;
use crate::particles::ParticleSet;

/// Corner lattice the field is sampled on. Independent of the simulation grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldLattice {
    pub mx: usize,
    pub my: usize,
    pub mz: usize,
    pub spacing: f64,
    pub origin: DVec3,
}

impl FieldLattice {
    /// Lattice spanning the simulation domain with `per_cell` lattice
    /// intervals per simulation cell.
    pub fn covering(sim: &GridDims, per_cell: usize) -> Self {
        let per_cell = per_cell.max(1);
        Self {
            mx: sim.nx * per_cell + 1,
            my: sim.ny * per_cell + 1,
            mz: sim.nz * per_cell + 1,
            spacing: sim.dtau / per_cell as f64,
            origin: sim.origin,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.mx * self.my * self.mz
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.mx * (j + self.my * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        (idx % self.mx, (idx / self.mx) % self.my, idx / (self.mx * self.my))
    }

    #[inline]
    pub fn position(&self, i: usize, j: usize, k: usize) -> DVec3 {
        self.origin + DVec3::new(i as f64, j as f64, k as f64) * self.spacing
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("invalid field parameters: need R > 0 and 0 < r <= R (got R = {search_radius}, r = {particle_radius})")]
pub struct FieldParamsError {
    pub search_radius: f64,
    pub particle_radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldParams {
    search_radius: f64,
    particle_radius: f64,
}

impl FieldParams {
    pub fn new(search_radius: f64, particle_radius: f64) -> Result<Self, FieldParamsError> {
        let ok = search_radius > 0.0 && particle_radius > 0.0 && particle_radius <= search_radius;
        if !ok || !search_radius.is_finite() {
            return Err(FieldParamsError { search_radius, particle_radius });
        }
        Ok(Self { search_radius, particle_radius })
    }

    /// r = Δτ/2, R = 2r.
    pub fn for_grid(dtau: f64) -> Self {
        Self { search_radius: dtau, particle_radius: 0.5 * dtau }
    }

    pub fn search_radius(&self) -> f64 {
        self.search_radius
    }

    pub fn particle_radius(&self) -> f64 {
        self.particle_radius
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub lattice: FieldLattice,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(lattice: FieldLattice, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), lattice.len(), "field value count must match the lattice");
        Self { lattice, values }
    }

    /// Samples `f` at every lattice corner.
    pub fn from_fn(lattice: FieldLattice, f: impl Fn(DVec3) -> f64 + Sync) -> Self {
        let values = (0..lattice.len())
            .into_par_iter()
            .map(|c| {
                let (i, j, k) = lattice.coords(c);
                f(lattice.position(i, j, k))
            })
            .collect();
        Self { lattice, values }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.lattice.index(i, j, k)]
    }
}

/// `max(0, (1 - s²)³)`.
#[inline]
pub fn decay_kernel(s: f64) -> f64 {
    let t = 1.0 - s * s;
    if t <= 0.0 {
        0.0
    } else {
        t * t * t
    }
}

#[derive(Default)]
struct Blend {
    weight: f64,
    center: DVec3,
}

impl Blend {
    #[inline]
    fn add(&mut self, x: DVec3, p: DVec3, params: &FieldParams) {
        let k = decay_kernel(x.distance(p) / params.search_radius);
        if k > 0.0 {
            self.weight += k;
            self.center += k * p;
        }
    }

    fn value(&self, x: DVec3, params: &FieldParams) -> f64 {
        if self.weight == 0.0 {
            params.search_radius
        } else {
            // uniform radii: Σ w_i r_i = r
            x.distance(self.center / self.weight) - params.particle_radius
        }
    }
}

/// Signed distance at every lattice corner, gathering only the particles in
/// simulation cells that overlap the search ball. Corners with no particle in
/// range read `+R`.
pub fn build_field(particles: &ParticleSet, hash: &SpaceHash, sim: &GridDims, lattice: &FieldLattice, params: &FieldParams) -> ScalarField {
    let r = params.search_radius;
    let span = |lo: f64, hi: f64, n: usize| -> Option<(usize, usize)> {
        let a = ((lo / sim.dtau).floor()).max(0.0);
        let b = (hi / sim.dtau).floor().min(n as f64 - 1.0);
        (a <= b).then_some((a as usize, b as usize))
    };
    let values = (0..lattice.len())
        .into_par_iter()
        .map(|c| {
            let (i, j, k) = lattice.coords(c);
            let x = lattice.position(i, j, k);
            let rel = x - sim.origin;
            let mut blend = Blend::default();
            let ranges = (span(rel.x - r, rel.x + r, sim.nx), span(rel.y - r, rel.y + r, sim.ny), span(rel.z - r, rel.z + r, sim.nz));
            if let (Some((x0, x1)), Some((y0, y1)), Some((z0, z1))) = ranges {
                for ck in z0..=z1 {
                    for cj in y0..=y1 {
                        for ci in x0..=x1 {
                            for t in hash.range(sim.flat_index(ci, cj, ck)) {
                                blend.add(x, particles.position(t), params);
                            }
                        }
                    }
                }
            }
            blend.value(x, params)
        })
        .collect();
    ScalarField { lattice: *lattice, values }
}

/// Same field evaluated against every particle. Reference for small inputs.
pub fn build_field_brute_force(particles: &ParticleSet, lattice: &FieldLattice, params: &FieldParams) -> ScalarField {
    ScalarField::from_fn(*lattice, |x| {
        let mut blend = Blend::default();
        for t in 0..particles.len() {
            blend.add(x, particles.position(t), params);
        }
        blend.value(x, params)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binning::bin_particles;

    fn sim() -> GridDims {
        GridDims::unit_cube(8).unwrap()
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(decay_kernel(0.0), 1.0);
        assert_eq!(decay_kernel(1.0), 0.0);
        assert_eq!(decay_kernel(0.5), 0.421875);
        assert_eq!(decay_kernel(3.0), 0.0);
    }

    #[test]
    fn params_validation() {
        assert!(FieldParams::new(1.0, 0.5).is_ok());
        assert!(FieldParams::new(1.0, 1.0).is_ok());
        assert!(FieldParams::new(1.0, 1.5).is_err());
        assert!(FieldParams::new(0.0, 0.0).is_err());
        assert!(FieldParams::new(1.0, 0.0).is_err());
        let p = FieldParams::for_grid(0.1);
        assert_eq!(p.particle_radius(), 0.05);
        assert_eq!(p.search_radius(), 0.1);
    }

    #[test]
    fn single_particle_on_a_corner() {
        let d = sim();
        let lattice = FieldLattice::covering(&d, 2);
        let mut ps = ParticleSet::new();
        // lattice corner (5, 6, 7); coordinates exact in f32
        ps.push(lattice.position(5, 6, 7), DVec3::ZERO);
        let (ps, hash) = bin_particles(&ps, &d);
        let params = FieldParams::new(0.2, 0.05).unwrap();
        let f = build_field(&ps, &hash, &d, &lattice, &params);
        assert_eq!(f.at(5, 6, 7), -0.05);
        assert_eq!(f.at(0, 0, 0), 0.2);
        assert_eq!(f.at(15, 15, 15), 0.2);
    }

    #[test]
    fn symmetric_pair_around_a_corner() {
        let d = sim();
        let lattice = FieldLattice::covering(&d, 1);
        let x = lattice.position(4, 4, 4);
        let mut ps = ParticleSet::new();
        ps.push(x + DVec3::new(0.0625, 0.0, 0.0), DVec3::ZERO);
        ps.push(x - DVec3::new(0.0625, 0.0, 0.0), DVec3::ZERO);
        let (ps, hash) = bin_particles(&ps, &d);
        let params = FieldParams::new(0.125, 0.03).unwrap();
        let f = build_field(&ps, &hash, &d, &lattice, &params);
        assert!((f.at(4, 4, 4) + 0.03).abs() < 1e-15);
    }

    #[test]
    fn hashed_field_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let d = sim();
        let lattice = FieldLattice { mx: 13, my: 11, mz: 9, spacing: 0.09, origin: DVec3::splat(-0.05) };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut ps = ParticleSet::new();
        for _ in 0..400 {
            ps.push(DVec3::new(rng.random(), rng.random(), rng.random()), DVec3::ZERO);
        }
        let (ps, hash) = bin_particles(&ps, &d);
        let params = FieldParams::new(0.15, 0.06).unwrap();
        let fast = build_field(&ps, &hash, &d, &lattice, &params);
        let slow = build_field_brute_force(&ps, &lattice, &params);
        for (a, b) in fast.values.iter().zip(&slow.values) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }
}
