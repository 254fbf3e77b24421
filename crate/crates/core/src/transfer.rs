//! Particle ↔ grid velocity transfer.
//!
//! P2G is a gather: each face sample loops over the hashed particles whose
//! cells intersect the hat kernel's support and takes the kernel-weighted
//! mean. G2P blends the PIC and FLIP updates.

use glam::DVec3;
use rayon::prelude::*;

use crate::binning::SpaceHash;
use crate::grid::{Axis, FaceFlags, MacGrid};
use crate::particles::ParticleSet;

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("flip fraction must lie in [0, 1], got {0}")]
pub struct BlendError(pub f64);

/// PIC/FLIP mix: 0 is pure PIC, 1 is pure FLIP.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlendParams {
    flip_fraction: f64,
}

impl BlendParams {
    pub fn new(flip_fraction: f64) -> Result<Self, BlendError> {
        if (0.0..=1.0).contains(&flip_fraction) {
            Ok(Self { flip_fraction })
        } else {
            Err(BlendError(flip_fraction))
        }
    }

    pub fn flip_fraction(&self) -> f64 {
        self.flip_fraction
    }
}

impl Default for BlendParams {
    fn default() -> Self {
        Self { flip_fraction: 0.95 }
    }
}

/// 1D tent `max(0, 1 - |r|)`.
#[inline]
pub fn hat(r: f64) -> f64 {
    let a = r.abs();
    if a <= 1.0 {
        1.0 - a
    } else {
        0.0
    }
}

/// Trilinear hat kernel for a world-space offset.
#[inline]
pub fn hat_kernel(dx: f64, dy: f64, dz: f64, dtau: f64) -> f64 {
    hat(dx / dtau) * hat(dy / dtau) * hat(dz / dtau)
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

fn velocity_component(particles: &ParticleSet, axis: Axis) -> &[f32] {
    match axis {
        Axis::X => &particles.vel_x,
        Axis::Y => &particles.vel_y,
        Axis::Z => &particles.vel_z,
    }
}

/// Rebuilds every face velocity from the binned particles. Faces with no
/// particle inside the kernel support are zeroed and reported as unknown
/// (`false`) in the returned flags.
pub fn p2g(particles: &ParticleSet, hash: &SpaceHash, grid: &mut MacGrid) -> FaceFlags {
    let dims = grid.dims;
    debug_assert_eq!(hash.count.len(), dims.cell_count());
    let inv_dtau = 1.0 / dims.dtau;
    let mut known = FaceFlags::new(&dims, false);
    for axis in Axis::ALL {
        let comp = velocity_component(particles, axis);
        let offset = axis.sample_offset();
        let flags = known.component_mut(axis);
        grid.component_mut(axis).par_iter_mut().zip(flags.par_iter_mut()).enumerate().for_each(|(f, (value, flag))| {
            let (i, j, k) = dims.face_coords(axis, f);
            // sample position in cell units
            let s = DVec3::new(i as f64, j as f64, k as f64) + offset;
            let range = |x: f64, n: usize| -> (usize, usize) {
                let lo = (x - 1.0).floor().max(0.0) as usize;
                let hi = ((x + 1.0).floor() as usize).min(n - 1);
                (lo, hi)
            };
            let (x0, x1) = range(s.x, dims.nx);
            let (y0, y1) = range(s.y, dims.ny);
            let (z0, z1) = range(s.z, dims.nz);
            let mut num = CompensatedSum::default();
            let mut den = CompensatedSum::default();
            for cz in z0..=z1 {
                for cy in y0..=y1 {
                    for cx in x0..=x1 {
                        let c = dims.flat_index(cx, cy, cz);
                        for t in hash.range(c) {
                            let p = (particles.position(t) - dims.origin) * inv_dtau - s;
                            let wgt = hat(p.x) * hat(p.y) * hat(p.z);
                            if wgt > 0.0 {
                                num.add(wgt * comp[t] as f64);
                                den.add(wgt);
                            }
                        }
                    }
                }
            }
            let total = den.value();
            if total > 0.0 {
                *value = num.value() / total;
                *flag = true;
            } else {
                *value = 0.0;
                *flag = false;
            }
        });
    }
    known
}

/// Blended grid-to-particle update
/// `v ← (1-f)·new + f·(v + new - old)` with trilinear sampling.
pub fn g2p(grid_new: &MacGrid, grid_old: &MacGrid, particles: &mut ParticleSet, blend: BlendParams) {
    assert_eq!(grid_new.dims, grid_old.dims, "g2p grids must share dims");
    let f = blend.flip_fraction;
    let ParticleSet { pos_x, pos_y, pos_z, vel_x, vel_y, vel_z } = particles;
    (pos_x.par_iter(), pos_y.par_iter(), pos_z.par_iter())
        .into_par_iter()
        .zip((vel_x.par_iter_mut(), vel_y.par_iter_mut(), vel_z.par_iter_mut()).into_par_iter())
        .for_each(|((&x, &y, &z), (vx, vy, vz))| {
            let pos = DVec3::new(x as f64, y as f64, z as f64);
            let new = grid_new.sample_velocity(pos);
            let delta = new - grid_old.sample_velocity(pos);
            let v = DVec3::new(*vx as f64, *vy as f64, *vz as f64);
            let out = new * (1.0 - f) + (v + delta) * f;
            *vx = out.x as f32;
            *vy = out.y as f32;
            *vz = out.z as f32;
        });
}
