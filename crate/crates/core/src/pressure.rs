//! Pressure projection: matrix-free seven-point Laplacian over FLUID cells,
//! four iterative solvers, and the pressure-gradient update.
//!
//! Row `r` of the system is the FLUID cell `cells[r]`; rows are ordered by
//! raw cell index. The operator is `scale * (n_open * p_c - Σ_fluid p_n)`
//! where `n_open` counts non-SOLID neighbours (AIR neighbours hold p = 0).

use rayon::prelude::*;

use crate::grid::{Axis, CellLabel, MacGrid};

/// Flag bits for the six neighbours, in the order -x, +x, -y, +y, -z, +z.
pub const NEG_X: u8 = 1 << 0;
pub const POS_X: u8 = 1 << 1;
pub const NEG_Y: u8 = 1 << 2;
pub const POS_Y: u8 = 1 << 3;
pub const NEG_Z: u8 = 1 << 4;
pub const POS_Z: u8 = 1 << 5;

const NO_ROW: u32 = u32::MAX;
/// Fixed reduction chunk so dot products are identical for any worker count.
const DOT_CHUNK: usize = 4096;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SolverError {
    #[error("singular system: FLUID cell {cell} has a zero diagonal")]
    Singular { cell: usize },
    #[error("numerical breakdown after {iterations} iterations (search-direction curvature {curvature:e})")]
    Breakdown { iterations: usize, curvature: f64 },
    #[error("solver diverged: residual {residual:e} after {iterations} iterations")]
    NonFinite { iterations: usize, residual: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SolverKind {
    Jacobi,
    GaussSeidel,
    RedBlackGaussSeidel,
    Pcg,
}

impl SolverKind {
    pub const ALL: [SolverKind; 4] = [SolverKind::Jacobi, SolverKind::GaussSeidel, SolverKind::RedBlackGaussSeidel, SolverKind::Pcg];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Jacobi => "jacobi",
            SolverKind::GaussSeidel => "gs",
            SolverKind::RedBlackGaussSeidel => "rbgs",
            SolverKind::Pcg => "pcg",
        }
    }

    /// Default iteration cap: 100 for PCG, 2000 for the relaxation solvers.
    pub fn default_max_iters(self) -> usize {
        match self {
            SolverKind::Pcg => 100,
            _ => 2000,
        }
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jacobi" => Ok(SolverKind::Jacobi),
            "gs" | "gauss-seidel" => Ok(SolverKind::GaussSeidel),
            "rbgs" | "red-black" => Ok(SolverKind::RedBlackGaussSeidel),
            "pcg" => Ok(SolverKind::Pcg),
            other => Err(format!("unknown solver '{other}' (expected jacobi, gs, rbgs or pcg)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Preconditioner {
    /// Modified incomplete Cholesky, level zero.
    #[default]
    Mic0,
    /// Diagonal scaling.
    Jacobi,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveParams {
    pub max_iters: usize,
    /// Stop once `‖b - Ap‖∞ ≤ tol · max(1, ‖b‖∞)`.
    pub tol: f64,
    pub preconditioner: Preconditioner,
}

impl SolveParams {
    pub fn new(max_iters: usize, tol: f64) -> Self {
        Self { max_iters, tol, preconditioner: Preconditioner::default() }
    }

    pub fn for_solver(kind: SolverKind) -> Self {
        Self::new(kind.default_max_iters(), 1e-6)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    /// Pressure per row.
    pub pressure: Vec<f64>,
    pub iterations: usize,
    /// Final residual max-norm.
    pub residual: f64,
    pub converged: bool,
    /// False if the residual max-norm ever grew between iterations.
    pub monotone: bool,
}

/// Matrix-free seven-point Laplacian over the FLUID cells of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianSystem {
    /// Raw cell index per row, strictly increasing.
    pub cells: Vec<usize>,
    /// Row per raw cell, `u32::MAX` for non-FLUID cells.
    row_of: Vec<u32>,
    pub diag: Vec<f64>,
    pub neighbor_fluid: Vec<u8>,
    pub scale: f64,
    pub rhs: Vec<f64>,
    /// Rows pinned to p = 0 to remove a null space.
    pub pinned: Vec<usize>,
    nx: usize,
    ny: usize,
    /// `(i + j + k)` parity per row, true for red (even).
    red: Vec<bool>,
}

/// Neighbour offsets in flag order, as (flag, di, dj, dk).
const NEIGHBORS: [(u8, isize, isize, isize); 6] =
    [(NEG_X, -1, 0, 0), (POS_X, 1, 0, 0), (NEG_Y, 0, -1, 0), (POS_Y, 0, 1, 0), (NEG_Z, 0, 0, -1), (POS_Z, 0, 0, 1)];

#[inline]
fn opposite(flag: u8) -> u8 {
    // -x <-> +x etc: bits come in adjacent pairs
    let bit = flag.trailing_zeros();
    1 << (bit ^ 1)
}

/// Assembles the pressure system for the FLUID cells among `fluid_cells`.
///
/// Diagonal entries count non-SOLID neighbours, off-diagonals are `-scale`
/// toward FLUID neighbours and the right-hand side is the negated divergence
/// with SOLID faces read as zero.
pub fn assemble(grid: &MacGrid, dt: f64, rho: f64, fluid_cells: &[usize]) -> LaplacianSystem {
    let d = grid.dims;
    let scale = dt / (rho * d.dtau * d.dtau);
    let cells: Vec<usize> = fluid_cells.iter().copied().filter(|&c| grid.label[c] == CellLabel::Fluid).collect();
    debug_assert!(cells.windows(2).all(|w| w[0] < w[1]), "fluid cells must be strictly increasing");
    let mut row_of = vec![NO_ROW; d.cell_count()];
    for (r, &c) in cells.iter().enumerate() {
        row_of[c] = r as u32;
    }

    let rows: Vec<(f64, u8, f64, bool)> = cells
        .par_iter()
        .map(|&c| {
            let (i, j, k) = d.cell_coords(c);
            let (ii, jj, kk) = (i as isize, j as isize, k as isize);
            let mut open = 0u32;
            let mut flags = 0u8;
            for (flag, di, dj, dk) in NEIGHBORS {
                match grid.label_at(ii + di, jj + dj, kk + dk) {
                    CellLabel::Solid => {}
                    CellLabel::Air => open += 1,
                    CellLabel::Fluid => {
                        open += 1;
                        flags |= flag;
                    }
                }
            }
            // divergence with solid-wall faces replaced by the wall velocity (0)
            let face = |axis: Axis, fi: usize, fj: usize, fk: usize| -> f64 {
                if grid.face_touches_solid(axis, fi, fj, fk) {
                    0.0
                } else {
                    grid.component(axis)[d.face_index(axis, fi, fj, fk)]
                }
            };
            let div = (face(Axis::X, i + 1, j, k) - face(Axis::X, i, j, k) + face(Axis::Y, i, j + 1, k) - face(Axis::Y, i, j, k)
                + face(Axis::Z, i, j, k + 1)
                - face(Axis::Z, i, j, k))
                / d.dtau;
            (open as f64 * scale, flags, -div, (i + j + k) % 2 == 0)
        })
        .collect();

    LaplacianSystem {
        diag: rows.iter().map(|r| r.0).collect(),
        neighbor_fluid: rows.iter().map(|r| r.1).collect(),
        rhs: rows.iter().map(|r| r.2).collect(),
        red: rows.iter().map(|r| r.3).collect(),
        cells,
        row_of,
        scale,
        pinned: Vec::new(),
        nx: d.nx,
        ny: d.ny,
    }
}

impl LaplacianSystem {
    #[inline]
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Row of a raw cell index, if it is a FLUID row.
    pub fn row(&self, cell: usize) -> Option<usize> {
        match self.row_of.get(cell) {
            Some(&r) if r != NO_ROW => Some(r as usize),
            _ => None,
        }
    }

    /// Row of the neighbour behind `flag`, when that neighbour is a FLUID row.
    #[inline]
    pub fn neighbor_row(&self, row: usize, flag: u8) -> Option<usize> {
        if self.neighbor_fluid[row] & flag == 0 {
            return None;
        }
        let c = self.cells[row];
        let plane = self.nx * self.ny;
        let n = match flag {
            NEG_X => c - 1,
            POS_X => c + 1,
            NEG_Y => c - self.nx,
            POS_Y => c + self.nx,
            NEG_Z => c - plane,
            POS_Z => c + plane,
            _ => unreachable!("single neighbour flag expected"),
        };
        Some(self.row_of[n] as usize)
    }

    /// Number of off-diagonal (FLUID) neighbours of a row.
    pub fn fluid_neighbor_count(&self, row: usize) -> u32 {
        self.neighbor_fluid[row].count_ones()
    }

    /// Matrix entry `A[row][col]`.
    pub fn coefficient(&self, row: usize, col: usize) -> f64 {
        if row == col {
            return self.diag[row];
        }
        for (flag, ..) in NEIGHBORS {
            if self.neighbor_row(row, flag) == Some(col) {
                return -self.scale;
            }
        }
        0.0
    }

    #[inline]
    fn off_diag_sum(&self, row: usize, p: &[f64]) -> f64 {
        let mut s = 0.0;
        let mut flags = self.neighbor_fluid[row];
        while flags != 0 {
            let flag = flags & flags.wrapping_neg();
            flags &= flags - 1;
            s += p[self.neighbor_row(row, flag).expect("flag set")];
        }
        s
    }

    /// `out = A p`.
    pub fn apply(&self, p: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(r, o)| {
            *o = self.diag[r] * p[r] - self.scale * self.off_diag_sum(r, p);
        });
    }

    /// `‖b - A p‖∞`.
    pub fn residual_norm(&self, p: &[f64]) -> f64 {
        (0..self.len())
            .into_par_iter()
            .map(|r| (self.rhs[r] - (self.diag[r] * p[r] - self.scale * self.off_diag_sum(r, p))).abs())
            .reduce(|| 0.0, f64::max)
    }

    fn rhs_norm(&self) -> f64 {
        self.rhs.par_iter().map(|x| x.abs()).reduce(|| 0.0, f64::max)
    }

    fn check_diag(&self) -> Result<(), SolverError> {
        match self.diag.iter().position(|&d| d <= 0.0) {
            Some(r) => Err(SolverError::Singular { cell: self.cells[r] }),
            None => Ok(()),
        }
    }

    /// First row of each connected FLUID component that touches no AIR cell.
    /// Such components have a pure-Neumann (singular) block.
    pub fn null_space_rows(&self) -> Vec<usize> {
        let n = self.len();
        let mut comp = vec![usize::MAX; n];
        let mut out = Vec::new();
        let mut stack = Vec::new();
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            let mut touches_air = false;
            comp[start] = start;
            stack.push(start);
            while let Some(r) = stack.pop() {
                let open = (self.diag[r] / self.scale).round() as u32;
                if open > self.fluid_neighbor_count(r) {
                    touches_air = true;
                }
                for (flag, ..) in NEIGHBORS {
                    if let Some(nr) = self.neighbor_row(r, flag) {
                        if comp[nr] == usize::MAX {
                            comp[nr] = start;
                            stack.push(nr);
                        }
                    }
                }
            }
            if !touches_air {
                out.push(start);
            }
        }
        out
    }

    /// Pins p = 0 at the lowest-index cell of every enclosed component: the
    /// row becomes `scale * p = 0` and its neighbours treat it like AIR.
    /// Symmetry is preserved.
    pub fn pin_null_spaces(&mut self) {
        for r in self.null_space_rows() {
            for (flag, ..) in NEIGHBORS {
                if let Some(nr) = self.neighbor_row(r, flag) {
                    self.neighbor_fluid[nr] &= !opposite(flag);
                }
            }
            self.neighbor_fluid[r] = 0;
            self.diag[r] = self.scale;
            self.rhs[r] = 0.0;
            self.pinned.push(r);
        }
    }

    /// Writes per-row pressure into the grid's cell array (0 elsewhere).
    pub fn scatter_pressure(&self, pressure: &[f64], grid: &mut MacGrid) {
        grid.p.fill(0.0);
        for (r, &c) in self.cells.iter().enumerate() {
            grid.p[c] = pressure[r];
        }
    }
}

/// Residual tracker shared by the relaxation solvers.
struct Convergence {
    threshold: f64,
    last: f64,
    monotone: bool,
}

impl Convergence {
    fn new(sys: &LaplacianSystem, tol: f64) -> Self {
        Self { threshold: tol * sys.rhs_norm().max(1.0), last: f64::INFINITY, monotone: true }
    }

    /// Records a residual; returns Ok(true) when converged.
    fn update(&mut self, residual: f64, iterations: usize) -> Result<bool, SolverError> {
        if !residual.is_finite() {
            return Err(SolverError::NonFinite { iterations, residual });
        }
        if residual > self.last * (1.0 + 1e-12) {
            self.monotone = false;
        }
        self.last = residual;
        Ok(residual <= self.threshold)
    }
}

fn finish(pressure: Vec<f64>, iterations: usize, conv: &Convergence, converged: bool) -> SolveReport {
    if !converged {
        log::warn!("pressure solve stopped at {iterations} iterations, residual {:e}", conv.last);
    }
    if !conv.monotone {
        log::debug!("residual max-norm increased during the solve");
    }
    SolveReport { pressure, iterations, residual: conv.last, converged, monotone: conv.monotone }
}

fn empty_report() -> SolveReport {
    SolveReport { pressure: Vec::new(), iterations: 0, residual: 0.0, converged: true, monotone: true }
}

pub fn solve_jacobi(sys: &LaplacianSystem, params: &SolveParams) -> Result<SolveReport, SolverError> {
    if sys.is_empty() {
        return Ok(empty_report());
    }
    sys.check_diag()?;
    let mut conv = Convergence::new(sys, params.tol);
    let mut p = vec![0.0; sys.len()];
    let mut next = vec![0.0; sys.len()];
    for it in 1..=params.max_iters {
        next.par_iter_mut().enumerate().for_each(|(r, x)| {
            *x = (sys.rhs[r] + sys.scale * sys.off_diag_sum(r, &p)) / sys.diag[r];
        });
        std::mem::swap(&mut p, &mut next);
        if conv.update(sys.residual_norm(&p), it)? {
            return Ok(finish(p, it, &conv, true));
        }
    }
    Ok(finish(p, params.max_iters, &conv, false))
}

pub fn solve_gauss_seidel(sys: &LaplacianSystem, params: &SolveParams) -> Result<SolveReport, SolverError> {
    if sys.is_empty() {
        return Ok(empty_report());
    }
    sys.check_diag()?;
    let mut conv = Convergence::new(sys, params.tol);
    let mut p = vec![0.0; sys.len()];
    for it in 1..=params.max_iters {
        for r in 0..sys.len() {
            p[r] = (sys.rhs[r] + sys.scale * sys.off_diag_sum(r, &p)) / sys.diag[r];
        }
        if conv.update(sys.residual_norm(&p), it)? {
            return Ok(finish(p, it, &conv, true));
        }
    }
    Ok(finish(p, params.max_iters, &conv, false))
}

/// One colour pass of red-black Gauss-Seidel over `rows`. Same-colour cells
/// never couple in the seven-point stencil, so the new values depend only on
/// the other colour and the pass is order-independent.
pub fn rbgs_color_pass(sys: &LaplacianSystem, rows: &[usize], p: &mut [f64]) {
    let updates: Vec<f64> = rows.par_iter().map(|&r| (sys.rhs[r] + sys.scale * sys.off_diag_sum(r, p)) / sys.diag[r]).collect();
    for (&r, x) in rows.iter().zip(updates) {
        p[r] = x;
    }
}

pub fn solve_rbgs(sys: &LaplacianSystem, params: &SolveParams) -> Result<SolveReport, SolverError> {
    if sys.is_empty() {
        return Ok(empty_report());
    }
    sys.check_diag()?;
    let (red, black): (Vec<usize>, Vec<usize>) = (0..sys.len()).partition(|&r| sys.red[r]);
    let mut conv = Convergence::new(sys, params.tol);
    let mut p = vec![0.0; sys.len()];
    for it in 1..=params.max_iters {
        rbgs_color_pass(sys, &red, &mut p);
        rbgs_color_pass(sys, &black, &mut p);
        if conv.update(sys.residual_norm(&p), it)? {
            return Ok(finish(p, it, &conv, true));
        }
    }
    Ok(finish(p, params.max_iters, &conv, false))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partial: Vec<f64> =
        a.par_chunks(DOT_CHUNK).zip(b.par_chunks(DOT_CHUNK)).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum()).collect();
    partial.into_iter().sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.par_iter().map(|x| x.abs()).reduce(|| 0.0, f64::max)
}

/// Incomplete-Cholesky style preconditioner over the row ordering.
struct Mic0 {
    inv_sqrt: Vec<f64>,
}

impl Mic0 {
    const TUNING: f64 = 0.97;
    const SAFETY: f64 = 0.25;

    fn new(sys: &LaplacianSystem) -> Self {
        let n = sys.len();
        let mut inv_sqrt = vec![0.0; n];
        let a = -sys.scale;
        // coefficient toward the +axis neighbour of a row, zero if not fluid
        let plus = |r: usize, flag: u8| if sys.neighbor_fluid[r] & flag != 0 { a } else { 0.0 };
        for r in 0..n {
            let mut e = sys.diag[r];
            let lower = [(NEG_X, POS_X, [POS_Y, POS_Z]), (NEG_Y, POS_Y, [POS_X, POS_Z]), (NEG_Z, POS_Z, [POS_X, POS_Y])];
            for (neg, pos, others) in lower {
                if let Some(l) = sys.neighbor_row(r, neg) {
                    let al = plus(l, pos);
                    let pl = inv_sqrt[l];
                    e -= (al * pl) * (al * pl);
                    e -= Self::TUNING * al * (plus(l, others[0]) + plus(l, others[1])) * pl * pl;
                }
            }
            if e < Self::SAFETY * sys.diag[r] {
                e = sys.diag[r];
            }
            inv_sqrt[r] = 1.0 / e.sqrt();
        }
        Self { inv_sqrt }
    }

    fn apply(&self, sys: &LaplacianSystem, r: &[f64], z: &mut [f64]) {
        let n = sys.len();
        let a = -sys.scale;
        let mut q = vec![0.0; n];
        for row in 0..n {
            let mut t = r[row];
            for neg in [NEG_X, NEG_Y, NEG_Z] {
                if let Some(l) = sys.neighbor_row(row, neg) {
                    t -= a * self.inv_sqrt[l] * q[l];
                }
            }
            q[row] = t * self.inv_sqrt[row];
        }
        for row in (0..n).rev() {
            let mut t = q[row];
            for pos in [POS_X, POS_Y, POS_Z] {
                if let Some(u) = sys.neighbor_row(row, pos) {
                    t -= a * self.inv_sqrt[row] * z[u];
                }
            }
            z[row] = t * self.inv_sqrt[row];
        }
    }
}

enum Precond {
    Mic(Mic0),
    Diagonal(Vec<f64>),
}

impl Precond {
    fn apply(&self, sys: &LaplacianSystem, r: &[f64], z: &mut [f64]) {
        match self {
            Precond::Mic(m) => m.apply(sys, r, z),
            Precond::Diagonal(inv) => z.par_iter_mut().zip(r.par_iter()).zip(inv.par_iter()).for_each(|((z, r), i)| *z = r * i),
        }
    }
}

/// Preconditioned conjugate gradients on the implicit operator.
pub fn solve_pcg(sys: &LaplacianSystem, params: &SolveParams) -> Result<SolveReport, SolverError> {
    let n = sys.len();
    if n == 0 {
        return Ok(empty_report());
    }
    sys.check_diag()?;
    let mut conv = Convergence::new(sys, params.tol);
    let mut p = vec![0.0; n];
    let mut r = sys.rhs.clone();
    if conv.update(max_abs(&r), 0)? {
        return Ok(finish(p, 0, &conv, true));
    }
    let pre = match params.preconditioner {
        Preconditioner::Mic0 => Precond::Mic(Mic0::new(sys)),
        Preconditioner::Jacobi => Precond::Diagonal(sys.diag.iter().map(|d| 1.0 / d).collect()),
    };
    let mut z = vec![0.0; n];
    pre.apply(sys, &r, &mut z);
    let mut s = z.clone();
    let mut sigma = dot(&z, &r);
    let mut as_ = vec![0.0; n];
    for it in 1..=params.max_iters {
        sys.apply(&s, &mut as_);
        let curvature = dot(&s, &as_);
        if curvature.is_nan() || curvature <= 0.0 {
            return Err(SolverError::Breakdown { iterations: it, curvature });
        }
        let alpha = sigma / curvature;
        p.par_iter_mut().zip(s.par_iter()).for_each(|(x, d)| *x += alpha * d);
        r.par_iter_mut().zip(as_.par_iter()).for_each(|(x, d)| *x -= alpha * d);
        if conv.update(max_abs(&r), it)? {
            return Ok(finish(p, it, &conv, true));
        }
        pre.apply(sys, &r, &mut z);
        let sigma_new = dot(&z, &r);
        let beta = sigma_new / sigma;
        s.par_iter_mut().zip(z.par_iter()).for_each(|(x, d)| *x = d + beta * *x);
        sigma = sigma_new;
    }
    // PCG's recurrence residual can drift; report the true one
    conv.last = sys.residual_norm(&p);
    let converged = conv.last <= conv.threshold;
    Ok(finish(p, params.max_iters, &conv, converged))
}

pub fn solve(kind: SolverKind, sys: &LaplacianSystem, params: &SolveParams) -> Result<SolveReport, SolverError> {
    match kind {
        SolverKind::Jacobi => solve_jacobi(sys, params),
        SolverKind::GaussSeidel => solve_gauss_seidel(sys, params),
        SolverKind::RedBlackGaussSeidel => solve_rbgs(sys, params),
        SolverKind::Pcg => solve_pcg(sys, params),
    }
}

/// Subtracts `dt/ρ ∇p` on faces between non-SOLID cells with at least one
/// FLUID side and zeroes faces touching SOLID. `grid.p` must hold the
/// per-cell pressure (AIR and SOLID cells 0).
pub fn apply_pressure_gradient(grid: &mut MacGrid, dt: f64, rho: f64) {
    let d = grid.dims;
    let k = dt / (rho * d.dtau);
    let p = std::mem::take(&mut grid.p);
    let labels = std::mem::take(&mut grid.label);
    let label_at = |c: [isize; 3]| -> CellLabel {
        if c.iter().any(|&x| x < 0) || c[0] >= d.nx as isize || c[1] >= d.ny as isize || c[2] >= d.nz as isize {
            CellLabel::Solid
        } else {
            labels[d.flat_index(c[0] as usize, c[1] as usize, c[2] as usize)]
        }
    };
    let p_at = |c: [isize; 3]| p[d.flat_index(c[0] as usize, c[1] as usize, c[2] as usize)];
    for axis in Axis::ALL {
        grid.component_mut(axis).par_iter_mut().enumerate().for_each(|(f, x)| {
            let (i, j, kk) = d.face_coords(axis, f);
            let (a, b) = MacGrid::face_cells(axis, i, j, kk);
            let (la, lb) = (label_at(a), label_at(b));
            if la == CellLabel::Solid || lb == CellLabel::Solid {
                *x = 0.0;
            } else if la == CellLabel::Fluid || lb == CellLabel::Fluid {
                *x -= k * (p_at(b) - p_at(a));
            }
        });
    }
    grid.p = p;
    grid.label = labels;
}
