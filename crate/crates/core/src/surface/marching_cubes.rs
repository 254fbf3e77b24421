use glam::DVec3;
use rayon::prelude::*;

use super::field::ScalarField;
use super::mesh::TriangleMesh;
use super::tables::{CORNERS, EDGE_CORNERS, TRIANGLE_CONNECTION};
use crate::binning::exclusive_scan;

/// Case index of a cube: bit `c` set when corner `c` is below `isovalue`.
pub fn case_index(corners: &[f64; 8], isovalue: f64) -> usize {
    corners.iter().enumerate().fold(0, |acc, (c, &v)| if v < isovalue { acc | (1 << c) } else { acc })
}

/// Cube edge -> (lattice offset of its lower corner, axis).
const fn edge_lattice_keys() -> [([usize; 3], usize); 12] {
    let mut out = [([0, 0, 0], 0); 12];
    let mut e = 0;
    while e < 12 {
        let a = CORNERS[EDGE_CORNERS[e][0]];
        let b = CORNERS[EDGE_CORNERS[e][1]];
        let mut axis = 0;
        while a[axis] == b[axis] {
            axis += 1;
        }
        let lower = if a[axis] < b[axis] { a } else { b };
        out[e] = (lower, axis);
        e += 1;
    }
    out
}

const EDGE_KEYS: [([usize; 3], usize); 12] = edge_lattice_keys();

/// Edge parameter within which a crossing is moved onto the nearer corner.
const SNAP: f64 = 1e-9;

/// Triangulates the `isovalue` level set. Vertices sit on crossed lattice
/// edges, or on a corner when the crossing is at it, and are shared between
/// neighbouring cubes. Triangles come out in cube scanline order, wound
/// counter-clockwise seen from the high side. Normals are left empty.
pub fn marching_cubes(field: &ScalarField, isovalue: f64) -> TriangleMesh {
    let l = field.lattice;
    assert!(l.mx >= 2 && l.my >= 2 && l.mz >= 2, "marching cubes needs at least 2 corners per axis");
    debug_assert!(field.values.iter().all(|v| !v.is_nan()), "NaN in scalar field");
    let n = l.len();
    let below = |c: usize| field.values[c] < isovalue;
    let stride = [1, l.mx, l.mx * l.my];

    // edge id 3*corner + axis; crossed when its endpoints classify differently.
    // A crossing at an endpoint (to rounding) becomes that corner, key 3n + corner,
    // so every edge meeting there shares one vertex.
    const NONE: usize = usize::MAX;
    let keys: Vec<usize> = (0..3 * n)
        .into_par_iter()
        .map(|e| {
            let (c, axis) = (e / 3, e % 3);
            let (i, j, k) = l.coords(c);
            let inside = match axis {
                0 => i + 1 < l.mx,
                1 => j + 1 < l.my,
                _ => k + 1 < l.mz,
            };
            let b = c + stride[axis];
            if !inside || below(c) == below(b) {
                return NONE;
            }
            let t = (isovalue - field.values[c]) / (field.values[b] - field.values[c]);
            if t <= SNAP {
                3 * n + c
            } else if t >= 1.0 - SNAP {
                3 * n + b
            } else {
                e
            }
        })
        .collect();
    let mut used = vec![0usize; 4 * n];
    for &key in keys.iter().filter(|&&k| k != NONE) {
        used[key] = 1;
    }
    let vertex_id = exclusive_scan(&used);
    let total = vertex_id.last().map_or(0, |v| v + used[used.len() - 1]);

    let mut vertices = vec![DVec3::ZERO; total];
    let slots: Vec<usize> = (0..4 * n).filter(|&key| used[key] == 1).collect();
    vertices.par_iter_mut().zip(slots.par_iter()).for_each(|(v, &key)| {
        if key >= 3 * n {
            let (i, j, k) = l.coords(key - 3 * n);
            *v = l.position(i, j, k);
            return;
        }
        let (a, axis) = (key / 3, key % 3);
        let b = a + stride[axis];
        let (fa, fb) = (field.values[a], field.values[b]);
        let t = (isovalue - fa) / (fb - fa);
        let (i, j, k) = l.coords(a);
        let pa = l.position(i, j, k);
        let mut pb = pa;
        pb[axis] += l.spacing;
        *v = pa + t * (pb - pa);
    });

    let cubes = (l.mx - 1) * (l.my - 1) * (l.mz - 1);
    let triangles: Vec<[u32; 3]> = (0..cubes)
        .into_par_iter()
        .flat_map_iter(|q| {
            let i = q % (l.mx - 1);
            let j = (q / (l.mx - 1)) % (l.my - 1);
            let k = q / ((l.mx - 1) * (l.my - 1));
            let base = l.index(i, j, k);
            let mut values = [0.0; 8];
            for (c, o) in CORNERS.iter().enumerate() {
                values[c] = field.values[base + o[0] * stride[0] + o[1] * stride[1] + o[2] * stride[2]];
            }
            let row = &TRIANGLE_CONNECTION[case_index(&values, isovalue)];
            let vid = |e: i8| -> u32 {
                let (o, axis) = EDGE_KEYS[e as usize];
                let corner = base + o[0] * stride[0] + o[1] * stride[1] + o[2] * stride[2];
                vertex_id[keys[3 * corner + axis]] as u32
            };
            row.chunks_exact(3)
                .take_while(|t| t[0] >= 0)
                // table winding faces the low side; reverse for outward normals
                .map(|t| [vid(t[0]), vid(t[2]), vid(t[1])])
                // collapsed onto a shared corner vertex
                .filter(|t| t[0] != t[1] && t[1] != t[2] && t[0] != t[2])
                .collect::<Vec<_>>()
        })
        .collect();

    TriangleMesh { vertices, normals: Vec::new(), triangles }
}
