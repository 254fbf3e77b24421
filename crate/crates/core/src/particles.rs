//! Particle storage, jittered seeding and reseeding, CFL timestep and
//! forward-Euler advection.

use glam::DVec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::binning::SpaceHash;
use crate::grid::{CellLabel, MacGrid};

/// Structure-of-arrays particle storage. Positions and velocities are kept in
/// single precision, matching the on-disk snapshot layout bit for bit.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParticleSet {
    pub pos_x: Vec<f32>,
    pub pos_y: Vec<f32>,
    pub pos_z: Vec<f32>,
    pub vel_x: Vec<f32>,
    pub vel_y: Vec<f32>,
    pub vel_z: Vec<f32>,
}

impl ParticleSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            pos_x: Vec::with_capacity(n),
            pos_y: Vec::with_capacity(n),
            pos_z: Vec::with_capacity(n),
            vel_x: Vec::with_capacity(n),
            vel_y: Vec::with_capacity(n),
            vel_z: Vec::with_capacity(n),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.pos_x.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.pos_x.is_empty()
    }

    #[inline]
    pub fn position(&self, i: usize) -> DVec3 {
        DVec3::new(self.pos_x[i] as f64, self.pos_y[i] as f64, self.pos_z[i] as f64)
    }

    #[inline]
    pub fn velocity(&self, i: usize) -> DVec3 {
        DVec3::new(self.vel_x[i] as f64, self.vel_y[i] as f64, self.vel_z[i] as f64)
    }

    pub fn push(&mut self, pos: DVec3, vel: DVec3) {
        self.pos_x.push(pos.x as f32);
        self.pos_y.push(pos.y as f32);
        self.pos_z.push(pos.z as f32);
        self.vel_x.push(vel.x as f32);
        self.vel_y.push(vel.y as f32);
        self.vel_z.push(vel.z as f32);
    }

    /// Copies particle `i` of `other` onto the end of `self`.
    pub fn push_from(&mut self, other: &ParticleSet, i: usize) {
        self.pos_x.push(other.pos_x[i]);
        self.pos_y.push(other.pos_y[i]);
        self.pos_z.push(other.pos_z[i]);
        self.vel_x.push(other.vel_x[i]);
        self.vel_y.push(other.vel_y[i]);
        self.vel_z.push(other.vel_z[i]);
    }

    pub fn extend_from(&mut self, other: &ParticleSet) {
        self.pos_x.extend_from_slice(&other.pos_x);
        self.pos_y.extend_from_slice(&other.pos_y);
        self.pos_z.extend_from_slice(&other.pos_z);
        self.vel_x.extend_from_slice(&other.vel_x);
        self.vel_y.extend_from_slice(&other.vel_y);
        self.vel_z.extend_from_slice(&other.vel_z);
    }

    pub fn clear(&mut self) {
        for a in self.arrays_mut() {
            a.clear();
        }
    }

    /// The six component arrays in snapshot order (pos_x..vel_z).
    pub fn arrays(&self) -> [&Vec<f32>; 6] {
        [&self.pos_x, &self.pos_y, &self.pos_z, &self.vel_x, &self.vel_y, &self.vel_z]
    }

    pub fn arrays_mut(&mut self) -> [&mut Vec<f32>; 6] {
        [&mut self.pos_x, &mut self.pos_y, &mut self.pos_z, &mut self.vel_x, &mut self.vel_y, &mut self.vel_z]
    }

    pub fn is_consistent(&self) -> bool {
        let n = self.len();
        self.arrays().iter().all(|a| a.len() == n)
    }
}

/// Level-set region inside which particles are emitted.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    Box { min: DVec3, max: DVec3 },
    Sphere { center: DVec3, radius: f64 },
}

impl Shape {
    /// Signed distance-like value: negative inside, positive outside.
    pub fn level_set(&self, p: DVec3) -> f64 {
        match *self {
            Shape::Box { min, max } => {
                let c = (min + max) * 0.5;
                let h = (max - min) * 0.5;
                let q = (p - c).abs() - h;
                q.max(DVec3::ZERO).length() + q.max_element().min(0.0)
            }
            Shape::Sphere { center, radius } => (p - center).length() - radius,
        }
    }

    #[inline]
    pub fn contains(&self, p: DVec3) -> bool {
        self.level_set(p) < 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeedRegion {
    pub shape: Shape,
    /// Subcells per axis; each covered cell receives `density³` particles.
    pub density: u32,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SeedError {
    #[error("seed density must be at least 1")]
    ZeroDensity,
}

/// Per-cell particle-count limits enforced by [`reseed`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReseedLimits {
    /// Cells holding fewer particles than this are topped up.
    pub min: usize,
    /// Cells holding more particles than this are thinned to exactly `max`.
    pub max: usize,
    /// Count a topped-up cell is restored to.
    pub target: usize,
    pub scope: ReseedScope,
}

/// Which sparse FLUID cells are topped up. Thinning always applies to every
/// FLUID cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ReseedScope {
    /// Every FLUID cell.
    #[default]
    AllFluid,
    /// Only FLUID cells with no AIR face neighbour. Surface cells are
    /// partially filled by nature and topping them up adds volume.
    Interior,
}

impl ReseedLimits {
    /// Limits for a given seed density: top up below 3 back to `density³`,
    /// thin above `max(12, 1.5·density³)`, i.e. [3, 12] around 8 for density 2.
    pub fn for_density(density: u32) -> Self {
        let target = (density as usize).pow(3);
        Self { min: 3, max: (3 * target).div_ceil(2).max(12), target, scope: ReseedScope::AllFluid }
    }
}

/// Counter-style stream: one independent generator per `(seed, cell)`.
fn cell_rng(seed: u64, cell: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(cell as u64);
    rng
}

/// Jittered point inside subcell `s` (x-fastest) of a cell.
fn jittered(rng: &mut ChaCha8Rng, cell_min: DVec3, dtau: f64, density: u32, s: u32) -> DVec3 {
    let sx = s % density;
    let sy = (s / density) % density;
    let sz = s / (density * density);
    let h = dtau / density as f64;
    // keep a sliver of margin so single-precision rounding never lands a
    // particle on the neighbouring subcell's boundary
    const MARGIN: f64 = 1e-4;
    let mut r = || MARGIN + (1.0 - 2.0 * MARGIN) * rng.random::<f64>();
    let r = DVec3::new(r(), r(), r());
    cell_min + (DVec3::new(sx as f64, sy as f64, sz as f64) + r) * h
}

/// Fills every non-SOLID cell whose center lies inside `region` with one
/// uniformly jittered particle per subcell. Velocities start at zero.
pub fn seed(region: &SeedRegion, grid: &MacGrid, rng_seed: u64) -> Result<ParticleSet, SeedError> {
    if region.density == 0 {
        return Err(SeedError::ZeroDensity);
    }
    let d = grid.dims;
    let covered: Vec<usize> = (0..d.cell_count())
        .filter(|&c| {
            let (i, j, k) = d.cell_coords(c);
            grid.label[c] != CellLabel::Solid && region.shape.contains(d.cell_center(i, j, k))
        })
        .collect();
    let per_cell = region.density.pow(3);
    let chunks: Vec<Vec<DVec3>> = covered
        .par_iter()
        .map(|&c| {
            let (i, j, k) = d.cell_coords(c);
            let mut rng = cell_rng(rng_seed, c);
            (0..per_cell).map(|s| jittered(&mut rng, d.cell_min(i, j, k), d.dtau, region.density, s)).collect()
        })
        .collect();
    let mut out = ParticleSet::with_capacity(covered.len() * per_cell as usize);
    for p in chunks.into_iter().flatten() {
        out.push(p, DVec3::ZERO);
    }
    Ok(out)
}

/// Restores per-cell particle counts in FLUID cells.
///
/// `particles` must be binned with `hash` current. Sparse cells gain
/// particles in their unoccupied subcells (then anywhere in the cell) with
/// velocities sampled from `grid`; crowded cells lose their highest-indexed
/// particles. The output stays in cell order and comes with its own hash.
pub fn reseed(
    particles: &ParticleSet,
    grid: &MacGrid,
    hash: &SpaceHash,
    rng_seed: u64,
    density: u32,
    limits: ReseedLimits,
) -> (ParticleSet, SpaceHash) {
    let d = grid.dims;
    let density = density.max(1);
    let per_cell = density.pow(3);

    // New particles per cell, generated in parallel and merged in cell order.
    let additions: Vec<(usize, Vec<(DVec3, DVec3)>)> = hash
        .fluid_cells
        .par_iter()
        .filter(|&&c| grid.label[c] == CellLabel::Fluid && hash.count[c] < limits.min)
        .filter(|&&c| limits.scope == ReseedScope::AllFluid || !touches_air(grid, c))
        .map(|&c| {
            let (i, j, k) = d.cell_coords(c);
            let cmin = d.cell_min(i, j, k);
            let h = d.dtau / density as f64;
            let mut occupied = vec![false; per_cell as usize];
            for t in hash.range(c) {
                let local = ((particles.position(t) - cmin) / h).floor();
                let s = local.clamp(DVec3::ZERO, DVec3::splat((density - 1) as f64));
                occupied[(s.x as u32 + density * (s.y as u32 + density * s.z as u32)) as usize] = true;
            }
            let need = limits.target.saturating_sub(hash.count[c]);
            let mut rng = cell_rng(rng_seed, c);
            let mut added = Vec::with_capacity(need);
            let free = (0..per_cell).filter(|&s| !occupied[s as usize]);
            for s in free.take(need) {
                added.push(jittered(&mut rng, cmin, d.dtau, density, s));
            }
            while added.len() < need {
                added.push(jittered(&mut rng, cmin, d.dtau, 1, 0));
            }
            (c, added.into_iter().map(|p| (p, grid.sample_velocity(p))).collect())
        })
        .collect();

    let mut out = ParticleSet::with_capacity(particles.len());
    let mut out_hash = SpaceHash::empty(d.cell_count());
    let mut adds = additions.into_iter().peekable();
    for c in 0..d.cell_count() {
        let start = out.len();
        let range = hash.range(c);
        let keep = if grid.label[c] == CellLabel::Fluid { range.len().min(limits.max) } else { range.len() };
        for t in range.start..range.start + keep {
            out.push_from(particles, t);
        }
        if adds.peek().is_some_and(|(ac, _)| *ac == c) {
            let (_, list) = adds.next().expect("peeked");
            for (p, v) in list {
                out.push(p, v);
            }
        }
        out_hash.offset[c] = start;
        out_hash.count[c] = out.len() - start;
        if out_hash.count[c] > 0 {
            out_hash.fluid_cells.push(c);
        }
    }
    (out, out_hash)
}

fn touches_air(grid: &MacGrid, c: usize) -> bool {
    let (i, j, k) = grid.dims.cell_coords(c);
    let (i, j, k) = (i as isize, j as isize, k as isize);
    [(-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1)]
        .into_iter()
        .any(|(di, dj, dk)| grid.label_at(i + di, j + dj, k + dk) == CellLabel::Air)
}

/// CFL-limited timestep `min(dt_max, alpha * dtau / max_speed)`.
pub fn compute_dt(particles: &ParticleSet, dtau: f64, alpha: f64, dt_max: f64) -> f64 {
    let max_speed_sq = (0..particles.len()).into_par_iter().map(|i| particles.velocity(i).length_squared()).reduce(|| 0.0, f64::max);
    if max_speed_sq <= 0.0 {
        return dt_max;
    }
    (alpha * dtau / max_speed_sq.sqrt()).min(dt_max)
}

/// Forward-Euler position update. Particles leaving the non-SOLID box are
/// pushed back along each violated axis to `skin` inside the wall plane.
pub fn advect(particles: &mut ParticleSet, grid: &MacGrid, dt: f64, skin: f64) {
    let (lo, hi) = grid.fluid_bounds();
    let step = |pos: &mut [f32], vel: &[f32], lo: f64, hi: f64| {
        pos.par_iter_mut().zip(vel.par_iter()).for_each(|(x, &v)| {
            let mut nx = *x as f64 + v as f64 * dt;
            if nx <= lo {
                nx = lo + skin;
            } else if nx >= hi {
                nx = hi - skin;
            }
            *x = nx as f32;
        });
    };
    step(&mut particles.pos_x, &particles.vel_x, lo.x, hi.x);
    step(&mut particles.pos_y, &particles.vel_y, lo.y, hi.y);
    step(&mut particles.pos_z, &particles.vel_z, lo.z, hi.z);
}
