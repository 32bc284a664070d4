use std::process::Command;

use dpsgd_lab::cli::run;

fn run_str(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("dpsgd").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

const TRAIN: &[&str] = &[
    "train", "--problem", "noisy_logistic", "--d", "4", "--n", "128", "--epsilon", "8", "--delta", "1e-5", "--seed", "7",
];

#[test]
fn calibrate_reports_the_best_beta() {
    let (code, out, err) = run_str(&["calibrate", "--n", "1000", "--epsilon", "1", "--delta", "1e-5"]);
    assert_eq!(code, 0, "{err}");
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("beta,lambda,sigma2,feasible,eps_achieved"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[3], "true");
    let eps: f64 = row[4].parse().unwrap();
    assert!(eps <= 1.0 + 1e-9, "{eps}");
    let (_, grid, _) = run_str(&["calibrate", "--n", "1000", "--epsilon", "1", "--delta", "1e-5", "--grid"]);
    assert_eq!(grid.lines().count(), 1 + 999);
}

#[test]
fn exit_codes_follow_the_failure_kind() {
    assert_eq!(run_str(&["min-eps", "--n", "1000"]).0, 0);
    let (code, _, err) = run_str(&["calibrate", "--n", "100", "--epsilon", "0.01", "--delta", "1e-5"]);
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("smallest feasible epsilon"), "{err}");

    let mut infeasible = TRAIN.to_vec();
    infeasible[8] = "0.001";
    let (code, out, err) = run_str(&infeasible);
    assert_eq!(code, 3, "{err}");
    assert!(out.is_empty());

    let mut bad_delta = TRAIN.to_vec();
    bad_delta[10] = "1.5";
    let (code, _, err) = run_str(&bad_delta);
    assert_eq!(code, 2);
    assert!(err.contains("delta must lie in (0,1)"), "{err}");
    assert_eq!(run_str(&["train", "--problem", "mnist", "--n", "10", "--epsilon", "1"]).0, 2);
    assert_eq!(run_str(&["frobnicate"]).0, 2);
}

#[test]
fn config_files_reject_unknown_keys_with_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    let good = "n = 64\n[problem]\nname = \"realizable_least_squares\"\nd = 3\n[privacy]\nepsilon = 8.0\ndelta = 1e-5\n";
    std::fs::write(&path, good).unwrap();
    let p = path.to_str().unwrap();
    let (code, out, err) = run_str(&["train", "--config", p, "--seed", "1"]);
    assert_eq!(code, 0, "{err}");
    let json: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(json.is_object());

    std::fs::write(&path, format!("{good}epsilom = 3\n")).unwrap();
    let (code, _, err) = run_str(&["train", "--config", p]);
    assert_eq!(code, 2);
    assert!(err.contains("epsilom") && err.contains('8'), "{err}");
}

#[test]
fn train_output_is_byte_identical_per_seed() {
    let (c1, o1, e1) = run_str(TRAIN);
    let (c2, o2, _) = run_str(TRAIN);
    assert_eq!((c1, c2), (0, 0), "{e1}");
    assert_eq!(o1, o2);
    let mut other = TRAIN.to_vec();
    other[12] = "8";
    assert_ne!(run_str(&other).1, o1);
}

#[test]
fn sweep_dry_run_prints_the_calibration_table() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("sweep.toml");
    std::fs::write(
        &spec,
        "regime = \"smooth_general\"\nn_values = [32, 64, 128, 256]\nepsilon = 8.0\ndelta = 1e-5\nmc_runs = 20\n\
         [problem]\nname = \"realizable_least_squares\"\nd = 3\n",
    )
    .unwrap();
    let (code, out, err) = run_str(&["sweep", "--spec", spec.to_str().unwrap(), "--dry-run"]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out.lines().next(), Some("c,n,epsilon,T,eta,beta,lambda,sigma2,feasible,eps_achieved"));
    assert_eq!(out.lines().count(), 5);

    let target = dir.path().join("out");
    let (code, _, err) = run_str(&["sweep", "--spec", spec.to_str().unwrap(), "--out", target.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let csv = std::fs::read_to_string(target.join("sweep.csv")).unwrap();
    assert!(csv.starts_with("n,mean_excess,stderr,sigma2,eta,T\n"));
}

#[test]
fn analysis_commands_print_csv() {
    let base = ["--problem", "realizable_least_squares", "--d", "3", "--n", "64", "--epsilon", "8", "--delta", "1e-5", "--runs", "20"];
    for (cmd, header) in [
        ("stability", "t,estimate,std_err,mc_runs,bound"),
        ("gap", "n,gap_mean,std_err,mc_runs"),
        ("bounds", "t,measured_opt_sum,opt_sum_stderr,optimization_bound,stability_bound"),
    ] {
        let args: Vec<&str> = std::iter::once(cmd).chain(base).collect();
        let (code, out, err) = run_str(&args);
        assert_eq!(code, 0, "{cmd}: {err}");
        assert_eq!(out.lines().next(), Some(header), "{cmd}");
        assert!(out.lines().count() >= 2, "{cmd}: {out}");
    }
}

#[test]
fn selftest_passes_and_catches_a_corrupted_constant() {
    let (code, out, _) = run_str(&["selftest"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.lines().all(|l| l.starts_with("PASS")), "{out}");
    let (code, out, _) = run_str(&["selftest", "--corrupt-l"]);
    assert_eq!(code, 4);
    assert!(out.lines().any(|l| l.starts_with("FAIL self_bounding")), "{out}");
}

#[test]
fn binary_reports_version_and_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_dpsgd");
    let out = Command::new(bin).arg("--version").output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains(env!("CARGO_PKG_VERSION")));
    let status = Command::new(bin).args(["calibrate", "--n", "100", "--epsilon", "0.01"]).output().unwrap().status;
    assert_eq!(status.code(), Some(3));
    let status = Command::new(bin).args(["calibrate", "--n", "100", "--epsilon", "1", "--delta", "2"]).output().unwrap().status;
    assert_eq!(status.code(), Some(2));
    let a = Command::new(bin).args(TRAIN).output().unwrap();
    let b = Command::new(bin).args(TRAIN).output().unwrap();
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}
