//! Cell hashing and counting-sort particle binning.
//!
//! Binning runs count → exclusive scan → scatter. The scatter computes a
//! stable permutation sequentially and then gathers all six particle arrays
//! into a back buffer in parallel, so the result does not depend on the
//! worker count.

use std::ops::Range;

use glam::DVec3;
use rayon::prelude::*;

use crate::grid::GridDims;
use crate::particles::ParticleSet;

/// Below this length the scan runs sequentially.
const PAR_SCAN_MIN: usize = 1 << 16;
const SCAN_BLOCK: usize = 1 << 14;

/// Per-cell start offset and count into the cell-sorted particle arrays,
/// plus the ascending list of occupied cells.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SpaceHash {
    pub offset: Vec<usize>,
    pub count: Vec<usize>,
    pub fluid_cells: Vec<usize>,
}

impl SpaceHash {
    pub fn empty(cells: usize) -> Self {
        Self { offset: vec![0; cells], count: vec![0; cells], fluid_cells: Vec::new() }
    }

    #[inline]
    pub fn range(&self, cell: usize) -> Range<usize> {
        self.offset[cell]..self.offset[cell] + self.count[cell]
    }

    pub fn total(&self) -> usize {
        match (self.offset.last(), self.count.last()) {
            (Some(o), Some(c)) => o + c,
            _ => 0,
        }
    }

    /// Checks the structural invariants: offsets are the exclusive scan of
    /// counts and `fluid_cells` lists exactly the occupied cells in order.
    pub fn is_consistent(&self) -> bool {
        self.offset.len() == self.count.len()
            && exclusive_scan(&self.count) == self.offset
            && self.fluid_cells.windows(2).all(|w| w[0] < w[1])
            && self.fluid_cells.len() == self.count.iter().filter(|&&c| c > 0).count()
            && self.fluid_cells.iter().all(|&c| self.count[c] > 0)
    }
}

/// Raw index of the cell containing `pos`, clamped per axis into the grid.
#[inline]
pub fn cell_index(pos: DVec3, dims: &GridDims) -> usize {
    let g = ((pos - dims.origin) / dims.dtau).floor();
    let clamp = |x: f64, n: usize| -> usize {
        if x.is_nan() || x <= 0.0 {
            0
        } else {
            (x as usize).min(n - 1)
        }
    };
    dims.flat_index(clamp(g.x, dims.nx), clamp(g.y, dims.ny), clamp(g.z, dims.nz))
}

/// `out[0] = 0`, `out[i] = values[0] + … + values[i-1]`.
pub fn exclusive_scan(values: &[usize]) -> Vec<usize> {
    let mut out = values.to_vec();
    exclusive_scan_in_place(&mut out);
    out
}

pub fn exclusive_scan_in_place(values: &mut [usize]) {
    if values.len() < PAR_SCAN_MIN {
        sequential_scan(values);
        return;
    }
    // Three phases: block totals in parallel, a tree scan over the totals,
    // then each block scanned locally from its carried-in offset.
    let mut totals: Vec<usize> = values.par_chunks(SCAN_BLOCK).map(|b| b.iter().sum()).collect();
    tree_scan(&mut totals);
    values.par_chunks_mut(SCAN_BLOCK).zip(totals.par_iter()).for_each(|(block, &carry)| {
        let mut acc = carry;
        for x in block {
            let v = *x;
            *x = acc;
            acc += v;
        }
    });
}

fn sequential_scan(values: &mut [usize]) {
    let mut acc = 0usize;
    for x in values {
        let v = *x;
        *x = acc;
        acc += v;
    }
}

/// Work-efficient exclusive scan over a balanced binary tree: an up-sweep
/// builds partial sums at the internal nodes, the root is replaced by the
/// identity, and a down-sweep pushes prefixes back to the leaves.
pub fn tree_scan(values: &mut [usize]) {
    let n = values.len();
    if n == 0 {
        return;
    }
    let size = n.next_power_of_two();
    let mut tree = vec![0usize; size];
    tree[..n].copy_from_slice(values);

    let mut stride = 1;
    while stride < size {
        let step = stride * 2;
        tree.par_chunks_mut(step).for_each(|pair| {
            pair[step - 1] += pair[stride - 1];
        });
        stride = step;
    }
    tree[size - 1] = 0;
    while stride > 1 {
        let half = stride / 2;
        tree.par_chunks_mut(stride).for_each(|pair| {
            let left = pair[half - 1];
            pair[half - 1] = pair[stride - 1];
            pair[stride - 1] += left;
        });
        stride = half;
    }
    values.copy_from_slice(&tree[..n]);
}

/// Stable counting sort of `particles` by cell into `back`, then swap so
/// `front` holds the sorted set.
pub fn bin_particles_into(front: &mut ParticleSet, back: &mut ParticleSet, dims: &GridDims) -> SpaceHash {
    let n = front.len();
    let cells: Vec<usize> = (0..n).into_par_iter().map(|t| cell_index(front.position(t), dims)).collect();

    let mut count = vec![0usize; dims.cell_count()];
    for &c in &cells {
        count[c] += 1;
    }
    let offset = exclusive_scan(&count);

    let mut cursor = offset.clone();
    let mut source = vec![0usize; n];
    for (t, &c) in cells.iter().enumerate() {
        source[cursor[c]] = t;
        cursor[c] += 1;
    }

    for (dst, src) in back.arrays_mut().into_iter().zip(front.arrays()) {
        dst.resize(n, 0.0);
        dst.par_iter_mut().zip(source.par_iter()).for_each(|(d, &s)| *d = src[s]);
    }
    std::mem::swap(front, back);

    let fluid_cells = (0..count.len()).filter(|&c| count[c] > 0).collect();
    SpaceHash { offset, count, fluid_cells }
}

/// Allocating form of [`bin_particles_into`].
pub fn bin_particles(particles: &ParticleSet, dims: &GridDims) -> (ParticleSet, SpaceHash) {
    let mut front = particles.clone();
    let mut back = ParticleSet::new();
    let hash = bin_particles_into(&mut front, &mut back, dims);
    (front, hash)
}
