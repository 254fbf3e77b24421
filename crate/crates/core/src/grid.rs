//! Staggered MAC grid storage and the finite-difference operators built on it.
//!
//! Pressure and labels live at cell centers; each velocity component lives on
//! the faces normal to its axis. All arrays are flattened x-fastest.

use glam::DVec3;
use rayon::prelude::*;

use crate::binning::SpaceHash;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GridError {
    #[error("grid dimensions must be positive, got {nx}x{ny}x{nz}")]
    EmptyDims { nx: usize, ny: usize, nz: usize },
    #[error("cell size must be finite and positive, got {0}")]
    BadCellSize(f64),
}

/// Cell counts, cell edge length and world-space origin of a grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridDims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub dtau: f64,
    pub origin: DVec3,
}

impl GridDims {
    pub fn new(nx: usize, ny: usize, nz: usize, dtau: f64, origin: DVec3) -> Result<Self, GridError> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(GridError::EmptyDims { nx, ny, nz });
        }
        if !(dtau.is_finite() && dtau > 0.0) {
            return Err(GridError::BadCellSize(dtau));
        }
        Ok(Self { nx, ny, nz, dtau, origin })
    }

    /// `n`³ cells spanning the unit cube at the origin.
    pub fn unit_cube(n: usize) -> Result<Self, GridError> {
        Self::new(n, n, n, 1.0 / n.max(1) as f64, DVec3::ZERO)
    }

    #[inline]
    pub fn cell_count(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    #[inline]
    pub fn flat_index(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny && k < self.nz, "cell ({i},{j},{k}) outside {}x{}x{}", self.nx, self.ny, self.nz);
        i + j * self.nx + k * self.nx * self.ny
    }

    /// Inverse of [`GridDims::flat_index`].
    #[inline]
    pub fn cell_coords(&self, index: usize) -> (usize, usize, usize) {
        debug_assert!(index < self.cell_count());
        let i = index % self.nx;
        let j = (index / self.nx) % self.ny;
        let k = index / (self.nx * self.ny);
        (i, j, k)
    }

    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> DVec3 {
        self.origin + DVec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.dtau
    }

    pub fn cell_min(&self, i: usize, j: usize, k: usize) -> DVec3 {
        self.origin + DVec3::new(i as f64, j as f64, k as f64) * self.dtau
    }

    /// World position of the grid's maximum corner.
    pub fn max_corner(&self) -> DVec3 {
        self.origin + DVec3::new(self.nx as f64, self.ny as f64, self.nz as f64) * self.dtau
    }

    /// Number of faces normal to `axis`.
    pub fn face_count(&self, axis: Axis) -> usize {
        let (fx, fy, fz) = self.face_dims(axis);
        fx * fy * fz
    }

    /// Lattice dimensions of the face samples normal to `axis`.
    pub fn face_dims(&self, axis: Axis) -> (usize, usize, usize) {
        match axis {
            Axis::X => (self.nx + 1, self.ny, self.nz),
            Axis::Y => (self.nx, self.ny + 1, self.nz),
            Axis::Z => (self.nx, self.ny, self.nz + 1),
        }
    }

    #[inline]
    pub fn face_index(&self, axis: Axis, i: usize, j: usize, k: usize) -> usize {
        let (fx, fy, _) = self.face_dims(axis);
        i + j * fx + k * fx * fy
    }

    #[inline]
    pub fn face_coords(&self, axis: Axis, index: usize) -> (usize, usize, usize) {
        let (fx, fy, _) = self.face_dims(axis);
        (index % fx, (index / fx) % fy, index / (fx * fy))
    }

    /// World position of a face sample.
    pub fn face_position(&self, axis: Axis, i: usize, j: usize, k: usize) -> DVec3 {
        let off = axis.sample_offset();
        self.origin + (DVec3::new(i as f64, j as f64, k as f64) + off) * self.dtau
    }
}

/// Free-function form of [`GridDims::flat_index`].
#[inline]
pub fn flat_index(i: usize, j: usize, k: usize, dims: &GridDims) -> usize {
    dims.flat_index(i, j, k)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    /// Offset of this component's samples from the cell minimum corner, in cells.
    #[inline]
    pub fn sample_offset(self) -> DVec3 {
        match self {
            Axis::X => DVec3::new(0.0, 0.5, 0.5),
            Axis::Y => DVec3::new(0.5, 0.0, 0.5),
            Axis::Z => DVec3::new(0.5, 0.5, 0.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum CellLabel {
    Solid,
    Fluid,
    Air,
}

/// Per-face boolean flags, one array per velocity component.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceFlags {
    pub u: Vec<bool>,
    pub v: Vec<bool>,
    pub w: Vec<bool>,
}

impl FaceFlags {
    pub fn new(dims: &GridDims, value: bool) -> Self {
        Self {
            u: vec![value; dims.face_count(Axis::X)],
            v: vec![value; dims.face_count(Axis::Y)],
            w: vec![value; dims.face_count(Axis::Z)],
        }
    }

    pub fn component(&self, axis: Axis) -> &[bool] {
        match axis {
            Axis::X => &self.u,
            Axis::Y => &self.v,
            Axis::Z => &self.w,
        }
    }

    pub fn component_mut(&mut self, axis: Axis) -> &mut Vec<bool> {
        match axis {
            Axis::X => &mut self.u,
            Axis::Y => &mut self.v,
            Axis::Z => &mut self.w,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MacGrid {
    pub dims: GridDims,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub p: Vec<f64>,
    pub label: Vec<CellLabel>,
}

impl MacGrid {
    /// Zero velocities and pressures, every cell AIR.
    pub fn new(dims: GridDims) -> Self {
        Self {
            dims,
            u: vec![0.0; dims.face_count(Axis::X)],
            v: vec![0.0; dims.face_count(Axis::Y)],
            w: vec![0.0; dims.face_count(Axis::Z)],
            p: vec![0.0; dims.cell_count()],
            label: vec![CellLabel::Air; dims.cell_count()],
        }
    }

    /// Like [`MacGrid::new`] but with a one-cell SOLID shell on every domain wall.
    pub fn with_solid_shell(dims: GridDims) -> Self {
        let mut grid = Self::new(dims);
        for k in 0..dims.nz {
            for j in 0..dims.ny {
                for i in 0..dims.nx {
                    if i == 0 || j == 0 || k == 0 || i + 1 == dims.nx || j + 1 == dims.ny || k + 1 == dims.nz {
                        grid.label[dims.flat_index(i, j, k)] = CellLabel::Solid;
                    }
                }
            }
        }
        grid
    }

    pub fn component(&self, axis: Axis) -> &[f64] {
        match axis {
            Axis::X => &self.u,
            Axis::Y => &self.v,
            Axis::Z => &self.w,
        }
    }

    pub fn component_mut(&mut self, axis: Axis) -> &mut Vec<f64> {
        match axis {
            Axis::X => &mut self.u,
            Axis::Y => &mut self.v,
            Axis::Z => &mut self.w,
        }
    }

    /// Label of a cell given possibly out-of-range signed coordinates;
    /// anything outside the grid reads as SOLID.
    #[inline]
    pub fn label_at(&self, i: isize, j: isize, k: isize) -> CellLabel {
        let d = &self.dims;
        if i < 0 || j < 0 || k < 0 || i >= d.nx as isize || j >= d.ny as isize || k >= d.nz as isize {
            return CellLabel::Solid;
        }
        self.label[d.flat_index(i as usize, j as usize, k as usize)]
    }

    /// The two cells a face separates, lower side first, as signed coords.
    #[inline]
    pub fn face_cells(axis: Axis, i: usize, j: usize, k: usize) -> ([isize; 3], [isize; 3]) {
        let (i, j, k) = (i as isize, j as isize, k as isize);
        match axis {
            Axis::X => ([i - 1, j, k], [i, j, k]),
            Axis::Y => ([i, j - 1, k], [i, j, k]),
            Axis::Z => ([i, j, k - 1], [i, j, k]),
        }
    }

    /// Labels on both sides of a face.
    #[inline]
    pub fn face_labels(&self, axis: Axis, i: usize, j: usize, k: usize) -> (CellLabel, CellLabel) {
        let (a, b) = Self::face_cells(axis, i, j, k);
        (self.label_at(a[0], a[1], a[2]), self.label_at(b[0], b[1], b[2]))
    }

    #[inline]
    pub fn face_touches_solid(&self, axis: Axis, i: usize, j: usize, k: usize) -> bool {
        let (a, b) = self.face_labels(axis, i, j, k);
        a == CellLabel::Solid || b == CellLabel::Solid
    }

    /// Central-difference divergence at a cell center.
    pub fn divergence(&self, i: usize, j: usize, k: usize) -> f64 {
        let d = &self.dims;
        let du = self.u[d.face_index(Axis::X, i + 1, j, k)] - self.u[d.face_index(Axis::X, i, j, k)];
        let dv = self.v[d.face_index(Axis::Y, i, j + 1, k)] - self.v[d.face_index(Axis::Y, i, j, k)];
        let dw = self.w[d.face_index(Axis::Z, i, j, k + 1)] - self.w[d.face_index(Axis::Z, i, j, k)];
        (du + dv + dw) / d.dtau
    }

    /// Largest |divergence| over FLUID cells, 0 when there are none.
    pub fn max_fluid_divergence(&self) -> f64 {
        let d = self.dims;
        (0..d.cell_count())
            .into_par_iter()
            .filter(|&c| self.label[c] == CellLabel::Fluid)
            .map(|c| {
                let (i, j, k) = d.cell_coords(c);
                self.divergence(i, j, k).abs()
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Trilinear interpolation of one velocity component from its staggered
    /// lattice. Queries are clamped to the span of the sample points.
    pub fn sample_component(&self, axis: Axis, pos: DVec3) -> f64 {
        let d = &self.dims;
        let (fx, fy, fz) = d.face_dims(axis);
        let g = (pos - d.origin) / d.dtau - axis.sample_offset();
        let (i0, tx) = lattice_coord(g.x, fx);
        let (j0, ty) = lattice_coord(g.y, fy);
        let (k0, tz) = lattice_coord(g.z, fz);
        let i1 = (i0 + 1).min(fx - 1);
        let j1 = (j0 + 1).min(fy - 1);
        let k1 = (k0 + 1).min(fz - 1);
        let data = self.component(axis);
        let at = |i, j, k| data[d.face_index(axis, i, j, k)];
        let c00 = lerp(at(i0, j0, k0), at(i1, j0, k0), tx);
        let c10 = lerp(at(i0, j1, k0), at(i1, j1, k0), tx);
        let c01 = lerp(at(i0, j0, k1), at(i1, j0, k1), tx);
        let c11 = lerp(at(i0, j1, k1), at(i1, j1, k1), tx);
        lerp(lerp(c00, c10, ty), lerp(c01, c11, ty), tz)
    }

    pub fn sample_velocity(&self, pos: DVec3) -> DVec3 {
        DVec3::new(self.sample_component(Axis::X, pos), self.sample_component(Axis::Y, pos), self.sample_component(Axis::Z, pos))
    }

    /// Relabels every non-SOLID cell as FLUID or AIR from the particle counts.
    pub fn classify_cells(&mut self, hash: &SpaceHash) {
        debug_assert_eq!(hash.count.len(), self.label.len());
        self.label.par_iter_mut().zip(hash.count.par_iter()).for_each(|(label, &count)| {
            if *label != CellLabel::Solid {
                *label = if count > 0 { CellLabel::Fluid } else { CellLabel::Air };
            }
        });
    }

    pub fn add_body_force(&mut self, g: DVec3, dt: f64) {
        for axis in Axis::ALL {
            let dv = g[axis.index()] * dt;
            if dv != 0.0 {
                self.component_mut(axis).par_iter_mut().for_each(|x| *x += dv);
            }
        }
    }

    /// Zeroes the normal velocity on every face that borders a SOLID cell
    /// (including the outer domain walls).
    pub fn enforce_solid_boundaries(&mut self) {
        let dims = self.dims;
        let labels = std::mem::take(&mut self.label);
        let probe = LabelView { dims: &dims, label: &labels };
        for axis in Axis::ALL {
            self.component_mut(axis).par_iter_mut().enumerate().for_each(|(f, x)| {
                let (i, j, k) = dims.face_coords(axis, f);
                if probe.face_touches_solid(axis, i, j, k) {
                    *x = 0.0;
                }
            });
        }
        self.label = labels;
    }

    /// Faces that border at least one FLUID cell and no SOLID cell.
    pub fn fluid_faces(&self) -> FaceFlags {
        let dims = self.dims;
        let mut flags = FaceFlags::new(&dims, false);
        for axis in Axis::ALL {
            flags.component_mut(axis).par_iter_mut().enumerate().for_each(|(f, flag)| {
                let (i, j, k) = dims.face_coords(axis, f);
                let (a, b) = self.face_labels(axis, i, j, k);
                *flag = a != CellLabel::Solid && b != CellLabel::Solid && (a == CellLabel::Fluid || b == CellLabel::Fluid);
            });
        }
        flags
    }

    /// Breadth-first velocity extrapolation: each of `layers` passes fills the
    /// unknown faces adjacent (in their own component lattice) to faces known
    /// after the previous pass with the mean of those neighbours. Faces bordering
    /// SOLID are never read or written. Faces still unknown afterwards are zeroed.
    pub fn extrapolate_velocity(&mut self, known: &FaceFlags, layers: usize) {
        const UNKNOWN: u8 = u8::MAX;
        const FROZEN: u8 = u8::MAX - 1;
        let dims = self.dims;
        let layers = layers.min(FROZEN as usize - 1);
        let labels = std::mem::take(&mut self.label);
        let probe = LabelView { dims: &dims, label: &labels };
        for axis in Axis::ALL {
            let (fx, fy, fz) = dims.face_dims(axis);
            let mut marker: Vec<u8> = known
                .component(axis)
                .par_iter()
                .enumerate()
                .map(|(f, &k)| {
                    let (i, j, kk) = dims.face_coords(axis, f);
                    if probe.face_touches_solid(axis, i, j, kk) {
                        FROZEN
                    } else if k {
                        0
                    } else {
                        UNKNOWN
                    }
                })
                .collect();
            let values = self.component_mut(axis);
            for layer in 1..=layers as u8 {
                let updates: Vec<(usize, f64)> = (0..marker.len())
                    .into_par_iter()
                    .filter(|&f| marker[f] == UNKNOWN)
                    .filter_map(|f| {
                        let (i, j, k) = dims.face_coords(axis, f);
                        let mut sum = 0.0;
                        let mut n = 0u32;
                        let mut visit = |ii: usize, jj: usize, kk: usize| {
                            let g = dims.face_index(axis, ii, jj, kk);
                            if marker[g] < layer {
                                sum += values[g];
                                n += 1;
                            }
                        };
                        if i > 0 {
                            visit(i - 1, j, k);
                        }
                        if i + 1 < fx {
                            visit(i + 1, j, k);
                        }
                        if j > 0 {
                            visit(i, j - 1, k);
                        }
                        if j + 1 < fy {
                            visit(i, j + 1, k);
                        }
                        if k > 0 {
                            visit(i, j, k - 1);
                        }
                        if k + 1 < fz {
                            visit(i, j, k + 1);
                        }
                        (n > 0).then(|| (f, sum / n as f64))
                    })
                    .collect();
                if updates.is_empty() {
                    break;
                }
                for (f, value) in updates {
                    values[f] = value;
                    marker[f] = layer;
                }
            }
            values.par_iter_mut().zip(marker.par_iter()).for_each(|(x, &m)| {
                if m == UNKNOWN {
                    *x = 0.0;
                }
            });
        }
        self.label = labels;
    }

    /// World-space bounding box of the non-SOLID cells. With solids confined to
    /// the outer shell this is exactly the region particles may occupy.
    pub fn fluid_bounds(&self) -> (DVec3, DVec3) {
        let d = &self.dims;
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        for (c, &l) in self.label.iter().enumerate() {
            if l != CellLabel::Solid {
                let (i, j, k) = d.cell_coords(c);
                for (a, x) in [i, j, k].into_iter().enumerate() {
                    lo[a] = lo[a].min(x);
                    hi[a] = hi[a].max(x + 1);
                }
            }
        }
        if lo[0] == usize::MAX {
            return (d.origin, d.origin);
        }
        let to_world = |c: [usize; 3]| d.origin + DVec3::new(c[0] as f64, c[1] as f64, c[2] as f64) * d.dtau;
        (to_world(lo), to_world(hi))
    }

    pub fn count_label(&self, which: CellLabel) -> usize {
        self.label.iter().filter(|&&l| l == which).count()
    }
}

/// Borrowed label lookup usable while the velocity arrays are mutably borrowed.
struct LabelView<'a> {
    dims: &'a GridDims,
    label: &'a [CellLabel],
}

impl LabelView<'_> {
    fn at(&self, c: [isize; 3]) -> CellLabel {
        let d = self.dims;
        if c.iter().any(|&x| x < 0) || c[0] >= d.nx as isize || c[1] >= d.ny as isize || c[2] >= d.nz as isize {
            return CellLabel::Solid;
        }
        self.label[d.flat_index(c[0] as usize, c[1] as usize, c[2] as usize)]
    }

    fn face_touches_solid(&self, axis: Axis, i: usize, j: usize, k: usize) -> bool {
        let (a, b) = MacGrid::face_cells(axis, i, j, k);
        self.at(a) == CellLabel::Solid || self.at(b) == CellLabel::Solid
    }
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Clamps a continuous lattice coordinate into `[0, n-1]` and splits it into
/// a base index and a fractional weight.
#[inline]
fn lattice_coord(x: f64, n: usize) -> (usize, f64) {
    if n <= 1 {
        return (0, 0.0);
    }
    let max = (n - 1) as f64;
    let x = if x.is_nan() { 0.0 } else { x.clamp(0.0, max) };
    let base = (x.floor() as usize).min(n - 2);
    (base, x - base as f64)
}
