use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use netmoment::bep::BepSolution;
use netmoment::experiments::{builtin_magnetization, estimate_from_samples, estimate_moment};
use netmoment::operators::{forward_coeffs, FieldSamples};
use netmoment::Geometry;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netmoment"))
        .args(args)
        .env("NETMOMENT_CACHE_DIR", dir.join("cache"))
        .output()
        .expect("binary runs")
}

fn out_arg(dir: &Path, sub: &str) -> String {
    dir.join(sub).to_string_lossy().into_owned()
}

#[test]
fn sweep_writes_table_and_rejects_empty_list() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path(), "sweep");
    let o = run(
        dir.path(),
        &[
            "sweep",
            "--order",
            "24",
            "--lambdas",
            "1e-2,1e-4",
            "--out",
            &out,
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("sweep/sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "target,lambda,M,residual");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("e1,1.0000000000000000e-2,"));

    let o = run(dir.path(), &["sweep", "--order", "24", "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_flag_and_bad_values_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run(dir.path(), &["spectrum", "--frobnicate"]).status.code(),
        Some(2)
    );
    assert_eq!(
        run(dir.path(), &["estimator", "--space", "h3"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(dir.path(), &["estimator", "--geometry", "1,2"])
            .status
            .code(),
        Some(2)
    );
    let out = out_arg(dir.path(), "f");
    assert_eq!(
        run(
            dir.path(),
            &[
                "forward",
                "--magnetization",
                "no_such_file.json",
                "--out",
                &out
            ]
        )
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn unreachable_target_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path(), "e");
    let o = run(
        dir.path(),
        &[
            "estimator",
            "--order",
            "16",
            "--target-m",
            "1e15",
            "--out",
            &out,
        ],
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not bracketed"));
}

#[test]
fn estimator_outputs_are_deterministic_and_real() {
    let dir = tempfile::tempdir().unwrap();
    let a = out_arg(dir.path(), "a");
    let b = out_arg(dir.path(), "b");
    let args = |o: &str| {
        vec![
            "estimator".to_string(),
            "--order".into(),
            "24".into(),
            "--space".into(),
            "w012".into(),
            "--lambda".into(),
            "1e-6".into(),
            "--magnetization".into(),
            "steps".into(),
            "--noise-level".into(),
            "0.01".into(),
            "--seed".into(),
            "5".into(),
            "--out".into(),
            o.to_string(),
        ]
    };
    let run_args = |o: &str| {
        let v = args(o);
        let r: Vec<&str> = v.iter().map(String::as_str).collect();
        run(dir.path(), &r)
    };
    let o1 = run_args(&a);
    assert!(
        o1.status.success(),
        "{}",
        String::from_utf8_lossy(&o1.stderr)
    );
    // Second run also exercises the cache path.
    assert!(run_args(&b).status.success());
    for f in [
        "phi_1.json",
        "phi_2.json",
        "phi_1.csv",
        "phi_2.csv",
        "estimate.json",
    ] {
        let x = fs::read(dir.path().join("a").join(f)).unwrap();
        let y = fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs between runs");
    }
    let stdout = String::from_utf8_lossy(&o1.stdout);
    for line in stdout.lines().filter(|l| l.starts_with("phi_")) {
        let im: f64 = line
            .rsplit("max|Im|=")
            .next()
            .unwrap()
            .trim()
            .parse()
            .unwrap();
        assert!(im < 1e-12, "{line}");
    }
    let sol = BepSolution::from_json(&fs::read_to_string(dir.path().join("a/phi_1.json")).unwrap())
        .unwrap();
    assert_eq!(sol.coeffs.order(), 24);
    let csv = fs::read_to_string(dir.path().join("a/phi_1.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4098);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/estimate.json")).unwrap())
            .unwrap();
    let m1 = &report["m1"];
    assert!(m1["noisy_observed_error"].as_f64().unwrap() <= m1["noisy_bound"].as_f64().unwrap());
}

#[test]
fn forward_output_round_trips_through_estimation() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path(), "fw");
    let o = run(
        dir.path(),
        &["forward", "--magnetization", "large_support", "--out", &out],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let samples =
        FieldSamples::from_json(&fs::read_to_string(dir.path().join("fw/field.json")).unwrap())
            .unwrap();

    let eo = out_arg(dir.path(), "est");
    assert!(run(
        dir.path(),
        &[
            "estimator",
            "--order",
            "24",
            "--lambda",
            "1e-4",
            "--out",
            &eo
        ]
    )
    .status
    .success());
    let sol =
        BepSolution::from_json(&fs::read_to_string(dir.path().join("est/phi_1.json")).unwrap())
            .unwrap();
    let g = Geometry::reference();
    let m = builtin_magnetization("large_support").unwrap();
    let direct = estimate_moment(&forward_coeffs(&m, &g, 24).unwrap(), &sol).unwrap();
    let reread = estimate_from_samples(&samples, &g, &sol).unwrap();
    assert!(
        (direct - reread).abs() < 1e-6 * direct.abs(),
        "{direct} {reread}"
    );

    let stair = fs::read_to_string(dir.path().join("fw/magnetization.csv")).unwrap();
    assert_eq!(stair.lines().next(), Some("x,m1,m2"));
}

#[test]
fn forward_of_zero_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("zero.json");
    fs::write(&path, r#"{"pieces1": [], "pieces2": []}"#).unwrap();
    let out = out_arg(dir.path(), "z");
    let o = run(
        dir.path(),
        &[
            "forward",
            "--magnetization",
            path.to_str().unwrap(),
            "--out",
            &out,
        ],
    );
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.path().join("z/field.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let v: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(v, 0.0);
    }
}

#[test]
fn spectrum_is_sorted() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path(), "sp");
    let o = run(dir.path(), &["spectrum", "--order", "30", "--out", &out]);
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.path().join("sp/spectrum.csv")).unwrap();
    let ev: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(ev.len(), 61);
    assert!(ev[0] > 0.0);
    assert!(ev.windows(2).all(|w| w[0] >= w[1]));
    assert!(String::from_utf8_lossy(&o.stdout).contains("lambda_50/lambda_1"));
}
