use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use podrom::pod::read_basis;
use podrom::{principal_angles, read_snapshots};

const CONFIG: &str = "n_points = 64\nn_snapshots = 15\nreynolds = 100, 120, 130, 140, 160\n";

fn podrom(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_podrom"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Temp dir holding `gen.cfg` and the generated cases under `cases/`.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("gen.cfg"), CONFIG).unwrap();
    let out = podrom(dir.path(), &["--out", "cases", "generate", "gen.cfg"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    dir
}

#[test]
fn generate_writes_one_file_per_case_and_a_manifest() {
    let dir = workspace();
    let cases = dir.path().join("cases");
    let files: Vec<_> = fs::read_dir(&cases)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "psnap"))
        .collect();
    assert_eq!(files.len(), 5);
    let manifest = fs::read_to_string(cases.join("cases.tsv")).unwrap();
    assert!(manifest.contains("130\tburgers_Re130.psnap"));

    let again = podrom(dir.path(), &["--out", "cases", "generate", "gen.cfg"]);
    assert_eq!(code(&again), 2);
    let forced = podrom(dir.path(), &["--force", "--out", "cases", "generate", "gen.cfg"]);
    assert_eq!(code(&forced), 0);

    fs::write(dir.path().join("one.cfg"), "n_points = 64\nn_snapshots = 5\nreynolds = 75\n").unwrap();
    let single = podrom(dir.path(), &["--out", "deep/new/dir", "generate", "one.cfg"]);
    assert_eq!(code(&single), 0);
    let (s, w) = read_snapshots(&dir.path().join("deep/new/dir/burgers_Re75.psnap")).unwrap();
    assert_eq!((s.n_dof(), s.n_snap(), s.parameter()), (64, 5, 75.0));
    assert!(w.is_some());
}

#[test]
fn pod_is_deterministic_and_checks_the_rank() {
    let dir = workspace();
    let args = ["--out", "b", "pod", "cases/burgers_Re130.psnap", "--rank", "13"];
    let out = podrom(dir.path(), &args);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("max|Phi^T W Phi - I|"));
    let path = dir.path().join("b/burgers_Re130_r13.basis.psnap");
    let first = fs::read(&path).unwrap();
    let (basis, w) = read_basis(&path).unwrap();
    assert_eq!(basis.n_rank(), 13);
    assert!(basis.orthonormality_error(&w) < 1e-10);

    assert_eq!(code(&podrom(dir.path(), &args)), 0);
    assert_eq!(fs::read(&path).unwrap(), first);

    let too_many = podrom(dir.path(), &["--out", "b", "pod", "cases/burgers_Re130.psnap", "--rank", "16"]);
    assert_eq!(code(&too_many), 2);
    assert!(String::from_utf8_lossy(&too_many.stderr).contains("rank"));
}

#[test]
fn interpolate_selects_neighbours_and_validates_parity() {
    let dir = workspace();
    let out = podrom(
        dir.path(),
        &["--out", "b", "interpolate", "--method", "gmi", "--catalog", "cases/cases.tsv", "--target", "130", "--rank", "9"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("neighbour 120") && text.contains("neighbour 140"), "{text}");
    assert!(dir.path().join("b/gmi_130_r9.basis.psnap").exists());

    let even = podrom(
        dir.path(),
        &["--out", "b", "interpolate", "--method", "mrpwi", "--catalog", "cases/cases.tsv", "--target", "130", "--rank", "8"],
    );
    assert_eq!(code(&even), 2);

    let exact = podrom(
        dir.path(),
        &[
            "--out", "b", "interpolate", "--method", "mrpwi", "--catalog", "cases/cases.tsv", "--target", "130",
            "--rank", "9", "--include-exact",
        ],
    );
    assert_eq!(code(&exact), 0);
    assert_eq!(code(&podrom(dir.path(), &["--out", "b", "pod", "cases/burgers_Re130.psnap", "--rank", "9"])), 0);
    let (interp, w) = read_basis(&dir.path().join("b/mrpwi_130_r9.basis.psnap")).unwrap();
    let (node, _) = read_basis(&dir.path().join("b/burgers_Re130_r9.basis.psnap")).unwrap();
    let angles = principal_angles(&interp, &node, &w).unwrap();
    assert!(angles.iter().all(|a| *a < 1e-10), "{angles:?}");
    assert!(dir.path().join("b/mrpwi_130_r9.alignment.csv").exists());
}

#[test]
fn rom_reports_rle_and_flags_divergence() {
    let dir = workspace();
    assert_eq!(code(&podrom(dir.path(), &["--out", "b", "pod", "cases/burgers_Re130.psnap", "--rank", "9"])), 0);
    let rom = |extra: &[&str]| {
        let mut args = vec![
            "--out", "r", "rom", "--basis", "b/burgers_Re130_r9.basis.psnap", "--truth", "cases/burgers_Re130.psnap",
            "--config", "gen.cfg",
        ];
        args.extend_from_slice(extra);
        podrom(dir.path(), &args)
    };
    let out = rom(&[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(dir.path().join("r/burgers_Re130_r9.rle.csv")).unwrap();
    let rle: f64 = table.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!(rle <= 1e-3, "RLE {rle}");
    assert!(dir.path().join("r/burgers_Re130_r9.trajectory.csv").exists());
    assert!(dir.path().join("r/burgers_Re130_r9.operators").is_dir());

    let diverged = rom(&["--viscosity=-2"]);
    assert_eq!(code(&diverged), 3);
    assert!(String::from_utf8_lossy(&diverged.stderr).contains("diverged"));
}

#[test]
fn sweep_writes_rows_in_plan_order_and_a_chart() {
    let dir = workspace();
    fs::write(
        dir.path().join("np.plan"),
        "axis = n_neighbors\nvalues = 2, 4\nn_rank = 5\ndelta_param = none\nmethods = gmi, mrpwi\ncatalog = cases/cases.tsv\nconfig = gen.cfg\n",
    )
    .unwrap();
    let out = podrom(dir.path(), &["--out", "s", "--jobs", "3", "sweep", "np.plan"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("s/sweep_np.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "method,N_r,delta_param,N_p,field,rle,neighbors");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("GMI,5,,2,all,") && lines[1].ends_with(",120 140"));
    assert!(lines[2].starts_with("GMI,5,,4,all,") && lines[2].ends_with(",100 120 140 160"));
    assert!(lines[3].starts_with("MRPWI,5,,2,"));
    let svg = fs::read_to_string(dir.path().join("s/sweep_np.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);

    assert_eq!(code(&podrom(dir.path(), &["--out", "s2", "--jobs", "1", "sweep", "np.plan"])), 0);
    assert_eq!(fs::read_to_string(dir.path().join("s2/sweep_np.csv")).unwrap(), csv);

    let chart = podrom(dir.path(), &["--out", "rep", "report", "chart", "s/sweep_np.csv", "--axis", "n_neighbors"]);
    assert_eq!(code(&chart), 0);
    assert!(dir.path().join("rep/sweep_np.svg").exists());
}

#[test]
fn report_timing_writes_the_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let out = podrom(
        dir.path(),
        &["--out", "t", "report", "timing", "--n-dof", "2000", "--rank", "5", "--repetitions", "5"],
    );
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("MRPWI / GMI"));
    let table = fs::read_to_string(dir.path().join("t/timing.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "method,N_n,N_r,N_p,wall_seconds,ratio_to_gmi");
    assert!(lines[1].starts_with("GMI,2000,5,4,") && lines[1].ends_with(",1"));
    assert!(lines[2].starts_with("MRPWI,2000,5,4,"));

    let few = podrom(dir.path(), &["report", "timing", "--n-dof", "2000", "--repetitions", "2"]);
    assert_eq!(code(&few), 2);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&podrom(dir.path(), &["frobnicate"])), 2);
    assert_eq!(code(&podrom(dir.path(), &["pod", "missing.psnap", "--rank", "3"])), 2);
    assert_eq!(code(&podrom(dir.path(), &["--jobs", "0", "report", "timing"])), 2);
    assert_eq!(code(&podrom(dir.path(), &["--help"])), 0);
}
