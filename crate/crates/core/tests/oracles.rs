use flipsim::binning::{bin_particles, exclusive_scan, tree_scan};
use flipsim::grid::{Axis, CellLabel, GridDims, MacGrid};
use flipsim::pressure::{assemble, solve, SolveParams, SolverKind};
use flipsim::surface::tables::{CORNERS, EDGE_CORNERS, TRIANGLE_CONNECTION};
use flipsim::surface::{marching_cubes, vertex_normals, FieldLattice, ScalarField};
use flipsim::transfer::p2g;
use flipsim_oracles as oracle;
use glam::DVec3;
use rand::Rng;

fn rel_max_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

#[test]
fn solvers_match_dense_oracle() {
    for seed in 0..8 {
        let n = 6 + (seed as usize % 3);
        let grid = oracle::random_mask_grid(n, 0.7, seed);
        let (dt, rho) = (0.01, 1.0);
        let cells: Vec<usize> = (0..grid.label.len()).filter(|&c| grid.label[c] == CellLabel::Fluid).collect();
        let mut sys = assemble(&grid, dt, rho, &cells);
        sys.pin_null_spaces();
        let (ocells, a, b) = oracle::dense_pressure_system(&grid, dt, rho);
        assert_eq!(ocells, sys.cells);
        for r in 0..b.len() {
            assert!((sys.rhs[r] - b[r]).abs() <= 1e-12 * b[r].abs().max(1.0), "rhs row {r}");
            for c in 0..b.len() {
                assert!((sys.coefficient(r, c) - a[r][c]).abs() <= 1e-12 * sys.scale, "A[{r}][{c}]");
            }
        }
        let exact = oracle::dense_solve(a, b);
        for kind in SolverKind::ALL {
            let params = SolveParams::new(200_000, 1e-12);
            let rep = solve(kind, &sys, &params).unwrap();
            assert!(rep.converged, "{kind} seed {seed}");
            let err = rel_max_err(&rep.pressure, &exact);
            assert!(err <= 1e-6, "{kind} seed {seed}: {err:e}");
        }
    }
}

#[test]
fn p2g_matches_all_pairs() {
    for seed in 0..3 {
        let dims = GridDims::unit_cube(8).unwrap();
        let lo = DVec3::splat(dims.dtau);
        let ps = oracle::random_particles(1000, lo, DVec3::ONE - lo, 2.0, seed);
        let (sorted, hash) = bin_particles(&ps, &dims);
        let mut grid = MacGrid::with_solid_shell(dims);
        p2g(&sorted, &hash, &mut grid);
        let expected = oracle::p2g_all_pairs(&ps, &dims);
        for axis in Axis::ALL {
            for (f, (x, y)) in grid.component(axis).iter().zip(&expected[axis.index()]).enumerate() {
                assert!((x - y).abs() <= 1e-9, "{axis:?} face {f}: {x} vs {y}");
            }
        }
    }
}

#[test]
fn binning_matches_stable_sort() {
    let dims = GridDims::unit_cube(16).unwrap();
    let ps = oracle::random_particles(20_000, DVec3::ZERO, DVec3::ONE, 1.0, 7);
    let (sorted, hash) = bin_particles(&ps, &dims);
    let (expected, counts) = oracle::stable_sort_by_cell(&ps, &dims);
    for (a, b) in sorted.arrays().iter().zip(expected.arrays()) {
        assert!(a.iter().map(|x| x.to_bits()).eq(b.iter().map(|x| x.to_bits())));
    }
    assert_eq!(hash.count, counts);
    assert_eq!(hash.offset, oracle::running_sum(&counts));
}

#[test]
fn scans_match_running_sum() {
    let mut rng = oracle::rng(3);
    for len in [0, 1, 2, 3, 1000, 1 << 16, (1 << 17) + 5] {
        let v: Vec<usize> = (0..len).map(|_| rng.random_range(0..100)).collect();
        let expected = oracle::running_sum(&v);
        assert_eq!(exclusive_scan(&v), expected);
        let mut t = v.clone();
        tree_scan(&mut t);
        assert_eq!(t, expected);
    }
}

fn cube_field(values: [f64; 8]) -> ScalarField {
    let lattice = FieldLattice { mx: 2, my: 2, mz: 2, spacing: 1.0, origin: DVec3::ZERO };
    let mut v = vec![0.0; 8];
    for (c, o) in CORNERS.iter().enumerate() {
        v[lattice.index(o[0], o[1], o[2])] = values[c];
    }
    ScalarField::new(lattice, v)
}

#[test]
fn every_cube_case_has_the_topological_triangle_count() {
    for case in 0..256 {
        let values: [f64; 8] = std::array::from_fn(|c| if case & (1 << c) != 0 { -1.0 } else { 1.0 });
        let mesh = marching_cubes(&cube_field(values), 0.0);
        let table = TRIANGLE_CONNECTION[case].iter().take_while(|&&e| e >= 0).count() / 3;
        assert_eq!(mesh.triangles.len(), table, "case {case}");
        assert_eq!(mesh.triangles.len(), oracle::mc_triangle_count(case), "case {case}");
    }
}

#[test]
fn vertices_interpolate_to_the_isovalue() {
    let mut rng = oracle::rng(11);
    for _ in 0..500 {
        let values: [f64; 8] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let iso = rng.random_range(-0.5..0.5);
        let mesh = marching_cubes(&cube_field(values), iso);
        for p in &mesh.vertices {
            let on_edge = EDGE_CORNERS.iter().find_map(|&[a, b]| {
                let (pa, pb) = (CORNERS[a].map(|x| x as f64), CORNERS[b].map(|x| x as f64));
                let pa = DVec3::from_array(pa);
                let d = DVec3::from_array(pb) - pa;
                let t = (*p - pa).dot(d);
                ((pa + t * d - *p).length() < 1e-12 && (-1e-12..=1.0 + 1e-12).contains(&t)).then_some((a, b, t))
            });
            let (a, b, t) = on_edge.expect("vertex on a cube edge");
            let f = values[a] + t * (values[b] - values[a]);
            assert!((f - iso).abs() <= 1e-6, "{f} vs {iso}");
        }
    }
}

#[test]
fn sphere_normals_are_radial() {
    // radius at least 10 lattice spacings
    let cos5 = 5f64.to_radians().cos();
    let mut rng = oracle::rng(23);
    let mut spheres = vec![(41usize, DVec3::splat(0.5), 0.3)];
    for _ in 0..4 {
        let c = DVec3::from_array(std::array::from_fn(|_| rng.random_range(0.4..0.6)));
        spheres.push((41, c, rng.random_range(10.0..16.0) / 40.0));
    }
    for (m, c, r) in spheres {
        let lattice = FieldLattice { mx: m, my: m, mz: m, spacing: 1.0 / (m - 1) as f64, origin: DVec3::ZERO };
        let mut mesh = marching_cubes(&ScalarField::from_fn(lattice, |p| (p - c).length() - r), 0.0);
        vertex_normals(&mut mesh);
        assert!(mesh.is_valid() && !mesh.triangles.is_empty());
        for (p, n) in mesh.vertices.iter().zip(&mesh.normals) {
            assert!(n.dot((*p - c).normalize()) >= cos5, "sphere {c} r {r}: normal {n} at {p}");
        }
    }
}
