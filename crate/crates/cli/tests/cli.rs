use std::path::Path;
use std::process::Command;

use flipsim::particles::ParticleSet;
use flipsim::pressure::SolverKind;
use flipsim::sim::SceneKind;
use flipsim::surface::read_obj;
use flipsim_cli::commands::{cmd_bench, cmd_mesh, cmd_run, BenchMatrix, MeshRequest};
use flipsim_cli::report::{timings_header, wall_clock_columns};
use flipsim_cli::snapshot::{decode, encode, read_snapshot, write_snapshot};
use flipsim_cli::RunConfig;
use glam::DVec3;
use proptest::prelude::*;

fn small_config(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.scene.res = 12;
    cfg.steps = 6;
    cfg.snapshot_every = 3;
    cfg.out = out.to_path_buf();
    cfg
}

/// Timings rows with the wall-clock columns blanked.
fn deterministic_columns(path: &Path) -> Vec<Vec<String>> {
    let header = timings_header();
    let wall = wall_clock_columns();
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records()
        .map(|r| r.unwrap().iter().zip(&header).map(|(v, h)| if wall.contains(h) { String::new() } else { v.to_string() }).collect())
        .collect()
}

#[test]
fn run_writes_csvs_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let summary = cmd_run(&cfg).unwrap();
    assert_eq!(summary.reports.len(), 6);
    assert_eq!(summary.energies.len(), 7);
    let names: Vec<_> = summary.snapshots.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["step_000000.flip", "step_000003.flip", "step_000006.flip"]);
    let rows = deterministic_columns(&dir.path().join("timings.csv"));
    assert_eq!(rows.len(), 6);
    let energy = std::fs::read_to_string(dir.path().join("energy.csv")).unwrap();
    assert_eq!(energy.lines().next(), Some("step,time,energy,particles"));
    assert_eq!(energy.lines().count(), 8);
    // stage times never exceed the step's wall time
    for r in &summary.reports {
        assert!(r.timings.sum() <= r.total_ms + 1e-3);
    }
}

#[test]
fn zero_steps_writes_only_the_initial_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.steps = 0;
    let summary = cmd_run(&cfg).unwrap();
    assert!(summary.reports.is_empty());
    assert_eq!(summary.snapshots.len(), 1);
    assert_eq!(read_snapshot(&summary.snapshots[0]).unwrap().len(), summary.initial_particles);
    assert_eq!(std::fs::read_to_string(dir.path().join("timings.csv")).unwrap().lines().count(), 1);
}

#[test]
fn same_config_same_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut ca = small_config(a.path());
    ca.scene = ca.scene.with_solver(SolverKind::RedBlackGaussSeidel);
    let mut cb = ca.clone();
    cb.out = b.path().to_path_buf();
    cb.workers = 3;
    cmd_run(&ca).unwrap();
    cmd_run(&cb).unwrap();
    assert_eq!(deterministic_columns(&a.path().join("timings.csv")), deterministic_columns(&b.path().join("timings.csv")));
    for f in ["energy.csv", "step_000006.flip"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn mesh_empty_and_tiny() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.flip");
    write_snapshot(&ParticleSet::new(), &empty).unwrap();
    let out = dir.path().join("empty.obj");
    let req = MeshRequest { snapshot: empty, out: out.clone(), lattice: 16, res: 16, radius: None, isovalue: 0.0, workers: 1 };
    let s = cmd_mesh(&req).unwrap();
    assert_eq!((s.vertices, s.triangles), (0, 0));
    assert_eq!(std::fs::read_to_string(&out).unwrap(), "");

    // a blob at the centre on the coarsest lattice still meshes
    let mut blob = ParticleSet::new();
    for i in 0..27 {
        let o = DVec3::new((i % 3) as f64, ((i / 3) % 3) as f64, (i / 9) as f64) - 1.0;
        blob.push(DVec3::splat(0.5) + 0.05 * o, DVec3::ZERO);
    }
    let snap = dir.path().join("blob.flip");
    write_snapshot(&blob, &snap).unwrap();
    let out = dir.path().join("blob.obj");
    let req = MeshRequest { snapshot: snap, out: out.clone(), lattice: 3, res: 4, radius: None, isovalue: 0.0, workers: 1 };
    let s = cmd_mesh(&req).unwrap();
    assert!(s.triangles > 0);
    let mesh = read_obj(&out).unwrap();
    assert_eq!(mesh.triangles.len(), s.triangles);
    assert!(mesh.is_valid());
}

#[test]
fn degenerate_bench_matches_run_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(&dir.path().join("run"));
    let run = cmd_run(&cfg).unwrap();
    let matrix = BenchMatrix {
        scenes: vec![SceneKind::DamBreak],
        resolutions: vec![cfg.scene.res],
        targets: vec![run.initial_particles],
        steps: cfg.steps,
        warmup: 0,
        base: cfg.clone(),
        csv: dir.path().join("bench.csv"),
    };
    let cells = cmd_bench(&matrix).unwrap();
    assert_eq!(cells.len(), 1);
    assert_eq!(cells[0].particles, run.initial_particles);
    // same lines apart from the measured numbers
    let strip = |s: &str| s.lines().map(|l| l.split_whitespace().next().unwrap_or("").to_string()).collect::<Vec<_>>();
    assert_eq!(strip(&cells[0].text()), strip(&run.text(cfg.scene.kind, cfg.scene.res)));
    assert_eq!(
        cells[0].text().lines().next().unwrap().split(" avg").next(),
        run.text(cfg.scene.kind, cfg.scene.res).lines().next().unwrap().split(" avg").next()
    );
    let csv = std::fs::read_to_string(&matrix.csv).unwrap();
    assert_eq!(csv.lines().next(), Some("scene,res,particles,stage,ms"));
    assert_eq!(csv.lines().count(), 1 + 12);
}

fn flipsim(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_flipsim")).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned(), String::from_utf8_lossy(&out.stderr).into_owned())
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = out.to_str().unwrap();
    let (code, stdout, _) = flipsim(&["run", "--scene", "water-drop", "--res", "10", "--steps", "2", "--out", o]);
    assert_eq!(code, 0);
    assert!(stdout.contains("avg step"));

    assert_eq!(flipsim(&["run", "--alpha", "-1", "--out", o]).0, 1);
    let (code, _, err) = flipsim(&["run", "--scene", "lake", "--out", o]);
    assert_eq!(code, 1);
    assert!(err.contains("scene"));
    assert_eq!(flipsim(&["bogus"]).0, 1);
    assert_eq!(flipsim(&["--help"]).0, 0);

    let cfg_path = dir.path().join("bad.cfg");
    std::fs::write(&cfg_path, "res = 12\nwobble = 3\n").unwrap();
    let (code, _, err) = flipsim(&["run", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("wobble"));

    assert_eq!(flipsim(&["mesh", "/definitely/not/here.flip"]).0, 3);
    let bad = dir.path().join("bad.flip");
    std::fs::write(&bad, b"FLIP\x01\x00\x00\x00\x05").unwrap();
    let (code, _, err) = flipsim(&["mesh", bad.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("offset 8"));

    let snap = out.join("step_000002.flip");
    let (code, stdout, _) = flipsim(&["mesh", snap.to_str().unwrap(), "--res", "10", "--lattice", "2"]);
    assert_eq!(code, 0, "{stdout}");
    assert!(snap.with_extension("obj").exists());
}

#[test]
fn config_file_and_flags_compose() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scene.cfg");
    let out = dir.path().join("o");
    std::fs::write(&path, format!("scene = double-dam-break\nres = 10\nsteps = 1\nsolver = gs\nout = {}\n", out.display())).unwrap();
    let (code, stdout, _) = flipsim(&["run", "--config", path.to_str().unwrap(), "--steps", "2"]);
    assert_eq!(code, 0);
    assert!(stdout.starts_with("double-dam-break 10³: 2 steps"));
}

fn arb_config() -> impl Strategy<Value = RunConfig> {
    (
        (0usize..3, 3usize..200, 0usize..2_000_000, 1u32..6, 0.1f64..2.0, 0usize..4),
        (1e-12f64..1e-2, 1usize..10_000, any::<bool>(), 0.0f64..=1.0, 0.01f64..10.0, 1e-4f64..1.0),
        (-20.0f64..20.0, 1.0f64..2000.0, 0usize..5, any::<bool>(), any::<u64>()),
        (0u64..10_000, "[a-z][a-z0-9_/]{0,12}", 0u64..100, 0usize..200, 0usize..64),
    )
        .prop_map(|(a, b, c, d)| {
            let mut cfg = RunConfig::default();
            cfg.scene.kind = SceneKind::ALL[a.0];
            cfg.scene.res = a.1;
            cfg.particles = (a.2 > 0).then_some(a.2);
            cfg.scene.density = a.3;
            cfg.scene.region_scale = a.4;
            cfg.scene = cfg.scene.clone().with_solver(SolverKind::ALL[a.5]);
            cfg.scene.solve.tol = b.0;
            cfg.scene.solve.max_iters = b.1;
            if b.2 {
                cfg.scene.solve.preconditioner = flipsim::pressure::Preconditioner::Jacobi;
            }
            cfg.scene.blend = flipsim::transfer::BlendParams::new(b.3).unwrap();
            cfg.scene.alpha = b.4;
            cfg.scene.dt_max = b.5;
            cfg.scene.gravity = DVec3::new(c.0 / 3.0, -c.0, 0.1 * c.0);
            cfg.scene.fluid_density = c.1;
            cfg.scene.extrapolation_layers = c.2;
            if c.3 {
                cfg.scene.reseed_scope = flipsim::particles::ReseedScope::AllFluid;
            }
            cfg.scene.seed = c.4;
            cfg.steps = d.0;
            cfg.out = d.1.into();
            cfg.snapshot_every = d.2;
            cfg.mesh_lattice = d.3;
            cfg.workers = d.4;
            cfg
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trip(cfg in arb_config()) {
        prop_assert_eq!(RunConfig::parse(&cfg.serialize()).unwrap(), cfg);
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact(values in proptest::collection::vec(any::<[u32; 6]>(), 0..200)) {
        let mut ps = ParticleSet::new();
        for v in &values {
            for (array, &bits) in ps.arrays_mut().into_iter().zip(v) {
                array.push(f32::from_bits(bits));
            }
        }
        let back = decode(&encode(&ps)).unwrap();
        for (a, b) in ps.arrays().iter().zip(back.arrays()) {
            prop_assert!(a.iter().map(|x| x.to_bits()).eq(b.iter().map(|x| x.to_bits())));
        }
    }
}
