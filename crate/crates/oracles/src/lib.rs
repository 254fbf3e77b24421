//! Brute-force reference implementations. Each one is written without
//! reusing the code path it checks.

use std::collections::VecDeque;

use flipsim::grid::{Axis, CellLabel, GridDims, MacGrid};
use flipsim::particles::ParticleSet;
use glam::DVec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` particles uniformly inside `[lo, hi]` with velocities in `[-vmax, vmax]³`.
pub fn random_particles(n: usize, lo: DVec3, hi: DVec3, vmax: f64, seed: u64) -> ParticleSet {
    let mut r = rng(seed);
    let mut ps = ParticleSet::with_capacity(n);
    for _ in 0..n {
        let t = DVec3::new(r.random(), r.random(), r.random());
        let v = DVec3::new(r.random_range(-1.0..=1.0), r.random_range(-1.0..=1.0), r.random_range(-1.0..=1.0)) * vmax;
        ps.push(lo + (hi - lo) * t, v);
    }
    ps
}

/// Running sum with identity first.
pub fn running_sum(values: &[usize]) -> Vec<usize> {
    let mut acc = 0;
    values
        .iter()
        .map(|&v| {
            let out = acc;
            acc += v;
            out
        })
        .collect()
}

fn cell_of(p: DVec3, dims: &GridDims) -> usize {
    let rel = (p - dims.origin) / dims.dtau;
    let c = |x: f64, n: usize| (x.floor().max(0.0) as usize).min(n - 1);
    c(rel.x, dims.nx) + dims.nx * (c(rel.y, dims.ny) + dims.ny * c(rel.z, dims.nz))
}

/// Stable sort of particles by cell through the standard library sort.
pub fn stable_sort_by_cell(particles: &ParticleSet, dims: &GridDims) -> (ParticleSet, Vec<usize>) {
    let keys: Vec<usize> = (0..particles.len()).map(|t| cell_of(particles.position(t), dims)).collect();
    let mut order: Vec<usize> = (0..particles.len()).collect();
    order.sort_by_key(|&t| keys[t]);
    let mut out = ParticleSet::with_capacity(particles.len());
    for &t in &order {
        out.push_from(particles, t);
    }
    let mut counts = vec![0; dims.cell_count()];
    for &k in &keys {
        counts[k] += 1;
    }
    (out, counts)
}

/// Face sample position of face (i, j, k) of `axis`.
fn face_point(dims: &GridDims, axis: Axis, i: usize, j: usize, k: usize) -> DVec3 {
    let mut p = dims.origin + DVec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * dims.dtau;
    p[axis.index()] -= 0.5 * dims.dtau;
    p
}

/// Every face from every particle: Σ w v / Σ w with the separable hat
/// weight, zero where no particle reaches.
pub fn p2g_all_pairs(particles: &ParticleSet, dims: &GridDims) -> [Vec<f64>; 3] {
    let mut out = [Vec::new(), Vec::new(), Vec::new()];
    for axis in Axis::ALL {
        let (fx, fy, fz) = dims.face_dims(axis);
        let mut values = vec![0.0; fx * fy * fz];
        for k in 0..fz {
            for j in 0..fy {
                for i in 0..fx {
                    let x = face_point(dims, axis, i, j, k);
                    let (mut num, mut den) = (0.0, 0.0);
                    for t in 0..particles.len() {
                        let d = (particles.position(t) - x).abs() / dims.dtau;
                        let w = (1.0 - d.x).max(0.0) * (1.0 - d.y).max(0.0) * (1.0 - d.z).max(0.0);
                        num += w * particles.velocity(t)[axis.index()];
                        den += w;
                    }
                    values[i + fx * (j + fy * k)] = if den > 0.0 { num / den } else { 0.0 };
                }
            }
        }
        out[axis.index()] = values;
    }
    out
}

/// A shell-walled grid whose interior cells are FLUID with probability
/// `fill`, AIR otherwise, with random face velocities.
pub fn random_mask_grid(n: usize, fill: f64, seed: u64) -> MacGrid {
    let mut r = rng(seed);
    let dims = GridDims::unit_cube(n).expect("valid dims");
    let mut g = MacGrid::with_solid_shell(dims);
    for c in 0..dims.cell_count() {
        if g.label[c] != CellLabel::Solid && r.random::<f64>() < fill {
            g.label[c] = CellLabel::Fluid;
        }
    }
    for axis in Axis::ALL {
        for x in g.component_mut(axis).iter_mut() {
            *x = r.random_range(-1.0..1.0);
        }
    }
    g
}

/// Dense pressure system assembled straight from the labels, with enclosed
/// FLUID components pinned at their lowest cell. Returns (cells, A, b).
pub fn dense_pressure_system(grid: &MacGrid, dt: f64, rho: f64) -> (Vec<usize>, Vec<Vec<f64>>, Vec<f64>) {
    let d = grid.dims;
    let scale = dt / (rho * d.dtau * d.dtau);
    let label = |i: isize, j: isize, k: isize| -> CellLabel {
        if i < 0 || j < 0 || k < 0 || i >= d.nx as isize || j >= d.ny as isize || k >= d.nz as isize {
            CellLabel::Solid
        } else {
            grid.label[i as usize + d.nx * (j as usize + d.ny * k as usize)]
        }
    };
    let cells: Vec<usize> = (0..d.cell_count()).filter(|&c| grid.label[c] == CellLabel::Fluid).collect();
    let row = |c: usize| cells.binary_search(&c).ok();
    let n = cells.len();
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    let offsets = [(-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1)];
    let coords = |c: usize| ((c % d.nx) as isize, ((c / d.nx) % d.ny) as isize, (c / (d.nx * d.ny)) as isize);
    for (r, &c) in cells.iter().enumerate() {
        let (i, j, k) = coords(c);
        for (di, dj, dk) in offsets {
            match label(i + di, j + dj, k + dk) {
                CellLabel::Solid => {}
                CellLabel::Air => a[r][r] += scale,
                CellLabel::Fluid => {
                    a[r][r] += scale;
                    let nb = (i + di) as usize + d.nx * ((j + dj) as usize + d.ny * (k + dk) as usize);
                    a[r][row(nb).expect("fluid row")] -= scale;
                }
            }
        }
        // divergence with faces against SOLID read as zero
        let face = |axis: Axis, fi: usize, fj: usize, fk: usize, other: (isize, isize, isize)| -> f64 {
            if label(other.0, other.1, other.2) == CellLabel::Solid {
                0.0
            } else {
                grid.component(axis)[d.face_index(axis, fi, fj, fk)]
            }
        };
        let (iu, ju, ku) = (i as usize, j as usize, k as usize);
        let div = face(Axis::X, iu + 1, ju, ku, (i + 1, j, k)) - face(Axis::X, iu, ju, ku, (i - 1, j, k))
            + face(Axis::Y, iu, ju + 1, ku, (i, j + 1, k))
            - face(Axis::Y, iu, ju, ku, (i, j - 1, k))
            + face(Axis::Z, iu, ju, ku + 1, (i, j, k + 1))
            - face(Axis::Z, iu, ju, ku, (i, j, k - 1));
        b[r] = -div / d.dtau;
    }

    // components without an AIR neighbour are pinned at their first row
    let mut seen = vec![false; n];
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut open = false;
        while let Some(r) = queue.pop_front() {
            let (i, j, k) = coords(cells[r]);
            for (di, dj, dk) in offsets {
                match label(i + di, j + dj, k + dk) {
                    CellLabel::Air => open = true,
                    CellLabel::Fluid => {
                        let nb = (i + di) as usize + d.nx * ((j + dj) as usize + d.ny * (k + dk) as usize);
                        let q = row(nb).expect("fluid row");
                        if !seen[q] {
                            seen[q] = true;
                            queue.push_back(q);
                        }
                    }
                    CellLabel::Solid => {}
                }
            }
        }
        if !open {
            for q in 0..n {
                a[start][q] = 0.0;
                a[q][start] = 0.0;
            }
            a[start][start] = scale;
            b[start] = 0.0;
        }
    }
    (cells, a, b)
}

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).expect("non-empty");
        a.swap(col, pivot);
        b.swap(col, pivot);
        let p = a[col][col];
        assert!(p != 0.0, "singular dense system");
        for r in col + 1..n {
            let f = a[r][col] / p;
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Corner offsets in the bit order used for cube case indices.
const CUBE_CORNERS: [[u8; 3]; 8] = [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]];

fn corner_id(p: [u8; 3]) -> usize {
    CUBE_CORNERS.iter().position(|&c| c == p).expect("cube corner")
}

/// Triangle count of a cube case derived from its surface topology alone:
/// trace crossing segments on each face (ambiguous faces separate the
/// below-iso corners), join them into closed polygons and fan each one.
pub fn mc_triangle_count(case: usize) -> usize {
    let below = |c: usize| case & (1 << c) != 0;
    let edge_key = |a: usize, b: usize| (a.min(b), a.max(b));
    let mut links: Vec<((usize, usize), (usize, usize))> = Vec::new();
    for axis in 0..3 {
        for side in 0..2u8 {
            // the four corners of this face in cyclic order
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            let ring: Vec<usize> = [(0, 0), (1, 0), (1, 1), (0, 1)]
                .iter()
                .map(|&(a, b)| {
                    let mut p = [0u8; 3];
                    p[axis] = side;
                    p[u] = a;
                    p[v] = b;
                    corner_id(p)
                })
                .collect();
            let edges: Vec<(usize, usize)> = (0..4).map(|e| edge_key(ring[e], ring[(e + 1) % 4])).collect();
            let crossed: Vec<usize> = (0..4).filter(|&e| below(ring[e]) != below(ring[(e + 1) % 4])).collect();
            match crossed.len() {
                0 => {}
                2 => links.push((edges[crossed[0]], edges[crossed[1]])),
                4 => {
                    // cut off each below corner: it touches edges e-1 and e
                    for e in 0..4 {
                        if below(ring[e]) {
                            links.push((edges[(e + 3) % 4], edges[e]));
                        }
                    }
                }
                _ => unreachable!("a face has an even number of crossings"),
            }
        }
    }
    // every crossed edge has exactly two links; walk the cycles
    let mut used = vec![false; links.len()];
    let mut triangles = 0;
    for start in 0..links.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (first, mut cur) = links[start];
        let mut len = 1;
        while cur != first {
            let next = (0..links.len()).find(|&l| !used[l] && (links[l].0 == cur || links[l].1 == cur)).expect("closed loop");
            used[next] = true;
            cur = if links[next].0 == cur { links[next].1 } else { links[next].0 };
            len += 1;
        }
        triangles += len - 2;
    }
    triangles
}
