use std::process::Command;

use obstacle_dg::assembly::{ConstraintKind, Method, MethodConfig};
use obstacle_dg::driver::{adaptive_solve, builtin_example, convergence_csv, CSV_HEADER};
use obstacle_dg::mesh::Mesh;
use obstacle_dg::vtk::VtkGrid;

fn strip_seconds(csv: &str) -> Vec<String> {
    csv.lines().map(|l| l.rsplit_once(',').map_or(l, |p| p.0).to_string()).collect()
}

#[test]
fn runs_are_deterministic_apart_from_timing() {
    for kind in [ConstraintKind::Integral, ConstraintKind::Quadrature] {
        let mut spec = builtin_example(1, 0.0, MethodConfig::new(Method::Sipg, 2, kind)).unwrap();
        spec.max_dofs = 3000;
        let a = adaptive_solve(&spec).unwrap();
        let b = adaptive_solve(&spec).unwrap();
        assert!(a.record.rows.len() >= 3);
        assert_eq!(strip_seconds(&convergence_csv(&a.record)), strip_seconds(&convergence_csv(&b.record)));
        assert_eq!(a.final_mesh, b.final_mesh);
    }
}

#[test]
fn cli_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let status = Command::new(env!("CARGO_BIN_EXE_obstacle-dg"))
        .args(["run", "--example", "2", "--f-variant", "-15", "--max-dofs", "1500", "--emit-meshes", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let csv = std::fs::read_to_string(out.join("convergence.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(rows.len() >= 2);
    for r in &rows {
        assert_eq!(r.len(), 14);
        // no exact solution: empty error and efficiency cells
        assert_eq!((r[10], r[11]), ("", ""));
        assert!(r[2].parse::<usize>().unwrap() <= 1500);
    }

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(json["iterations"].as_u64(), Some(rows.len() as u64));

    for i in 0..rows.len() {
        let text = std::fs::read_to_string(out.join(format!("mesh_{i:03}.vtk"))).unwrap();
        let grid = VtkGrid::parse(&text).unwrap();
        assert_eq!(grid.cells.len().to_string(), rows[i][1]);
        assert_eq!(grid.cell_scalars[0].0, "eta_T");
    }
}

#[test]
fn cli_rejects_bad_arguments() {
    let dir = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_obstacle-dg"))
            .args(args)
            .arg("--out")
            .arg(dir.path())
            .output()
            .unwrap()
            .status
            .code()
    };
    assert_eq!(run(&["run", "--example", "3"]), Some(1));
    assert_eq!(run(&["run", "--example", "1", "--gamma", "1.5"]), Some(1));
    assert_eq!(run(&["run", "--example", "1", "--degree", "1", "--constraints", "quadrature"]), Some(1));
    assert_eq!(run(&["run", "--example", "2", "--f-variant", "3"]), Some(1));
    assert_eq!(run(&["run", "--example", "1", "--penalty", "-1"]), Some(1));
}

#[test]
fn mesh_text_survives_refinement_round_trip() {
    let spec = builtin_example(2, 0.0, MethodConfig::new(Method::Nipg, 1, ConstraintKind::Integral)).unwrap();
    let mut mesh = spec.initial_mesh().unwrap();
    for k in 0..4 {
        mesh = mesh.refine_nvb((0..mesh.num_elements()).filter(|t| t % 3 == k % 3)).unwrap();
        let back = Mesh::from_text(&mesh.to_text()).unwrap();
        assert_eq!(back, mesh);
    }
}

#[test]
fn fuzz_seeds_parse() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    let mut count = 0;
    for (dir, parse) in [
        ("mesh_from_text", (|s: &str| Mesh::from_text(s).map(|_| ())) as fn(&str) -> obstacle_dg::Result<()>),
        ("vtk_parse", |s: &str| VtkGrid::parse(s).map(|_| ())),
    ] {
        for entry in std::fs::read_dir(root.join(dir)).unwrap() {
            let path = entry.unwrap().path();
            parse(&std::fs::read_to_string(&path).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            count += 1;
        }
    }
    assert!(count >= 6);
}
