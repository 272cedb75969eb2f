use std::path::PathBuf;
use std::process::{Command, Output};

fn anisofem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anisofem")).args(args).output().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("anisofem-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn verify_passes_and_reports_csv() {
    let o = anisofem(&["verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("identity,max_deviation,tolerance,pass"));
    assert_eq!(text.lines().count(), 14);
    assert!(!text.contains(",false"));
}

#[test]
fn injected_faults_fail_verify() {
    for fault in ["rt-sign", "bubble-constant"] {
        let o = anisofem(&["verify", "--inject-fault", fault]);
        assert_eq!(o.status.code(), Some(1), "{fault}");
        assert!(stdout(&o).contains(",false"), "{fault}");
    }
}

#[test]
fn configuration_errors_exit_2() {
    for args in [
        &["converge", "--element", "cr", "--pairs", "3:4"][..],
        &["converge", "--element", "cr", "--pairs", "4x8"],
        &["converge", "--element", "cr", "--gamma", "2.5"],
        &["converge", "--element", "q2"],
        &["interp-demo", "--n", "0"],
    ] {
        let o = anisofem(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn mixed_converge_smoke() {
    let o = anisofem(&["converge", "--element", "rt", "--pairs", "2:3,4:8"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "M,N,h,H_nominal,H_computed,dofs,err_h1,r_h1,err_l2,r_l2");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("2,3,"));
    // solver statistics go to stderr, not into the table
    assert!(String::from_utf8_lossy(&o.stderr).contains("iterations"));
}

#[test]
fn reruns_are_byte_identical() {
    let args = ["converge", "--element", "cr", "--pairs", "2:2,4:8"];
    assert_eq!(anisofem(&args).stdout, anisofem(&args).stdout);
    assert_eq!(anisofem(&["interp-demo"]).stdout, anisofem(&["interp-demo"]).stdout);
}

#[test]
fn interp_demo_table() {
    let o = anisofem(&["interp-demo", "--n", "128,256"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("128,"));
    let cols: Vec<&str> = lines[2].split(',').collect();
    let r: f64 = cols[4].parse().unwrap();
    assert!((r - 0.5438).abs() < 1e-3, "{r}");
}

#[test]
fn file_outputs() {
    let dir = scratch("outputs");
    let csv = dir.join("table.csv");
    let vtk = dir.join("mesh.vtk");
    let mtx = dir.join("a.mtx");
    let o = anisofem(&[
        "converge",
        "--element",
        "p1",
        "--pairs",
        "2:2,4:8",
        "--out",
        csv.to_str().unwrap(),
        "--vtk",
        vtk.to_str().unwrap(),
        "--dump-matrix",
        mtx.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 3);
    let mesh = std::fs::read_to_string(dir.join("mesh_M4_N8.vtk")).unwrap();
    assert!(mesh.starts_with("# vtk DataFile Version"));
    assert!(mesh.contains("H_T"));
    let matrix = std::fs::read_to_string(dir.join("a_M2_N2.mtx")).unwrap();
    assert!(matrix.starts_with("%%MatrixMarket matrix coordinate real"));
    std::fs::remove_dir_all(dir).unwrap();
}
