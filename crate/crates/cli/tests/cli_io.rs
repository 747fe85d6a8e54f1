//! End-to-end checks of the `merton` binary: formats, exit codes, seeds
//! and thread-count determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use merton_cli::{parse_fit_json, parse_history_csv};

fn merton() -> Command {
    Command::new(env!("CARGO_BIN_EXE_merton"))
}

fn run(args: &[&str]) -> Output {
    merton().args(args).output().expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn tmp(dir: &tempfile::TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn generate_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = tmp(&dir, "a.csv");
    let out2 = tmp(&dir, "b.csv");
    for out in [&out1, &out2] {
        let o = run(&[
            "generate", "--T", "20", "--n", "1000", "--seed", "1",
            "--out", out.to_str().unwrap(),
        ]);
        assert_ok(&o);
    }
    assert_eq!(read(&out1), read(&out2));
    // different seed differs
    let out3 = tmp(&dir, "c.csv");
    assert_ok(&run(&[
        "generate", "--T", "20", "--n", "1000", "--seed", "2",
        "--out", out3.to_str().unwrap(),
    ]));
    assert_ne!(read(&out1), read(&out3));
    // sidecar captures the defaults (p = 1.51%)
    let truth: serde_json::Value =
        serde_json::from_slice(&read(&out1.with_extension("truth.json"))).unwrap();
    assert_eq!(truth["p"], 0.0151);
    assert_eq!(truth["family"], "power");
    assert_eq!(truth["schema_version"], "1");
}

#[test]
fn generated_history_round_trips_through_parser() {
    let dir = tempfile::tempdir().unwrap();
    let out = tmp(&dir, "h.csv");
    assert_ok(&run(&[
        "generate", "--T", "30", "--n", "500", "--seed", "9",
        "--out", out.to_str().unwrap(),
    ]));
    let h = parse_history_csv(&out).unwrap();
    assert_eq!(h.len(), 30);
    let emitted = merton_cli::history_to_csv(&h);
    assert_eq!(emitted.as_bytes(), read(&out).as_slice());
}

#[test]
fn history_csv_example_pools_to_expected_rate() {
    let dir = tempfile::tempdir().unwrap();
    let path = tmp(&dir, "h.csv");
    std::fs::write(&path, "year,n,k\n1981,1000,15\n1982,1000,12\n").unwrap();
    let h = parse_history_csv(&path).unwrap();
    let stats = merton_core::sim::estimator_z(&h).unwrap();
    assert!((stats.z - 27.0 / 2000.0).abs() < 1e-15);
}

#[test]
fn invalid_inputs_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = tmp(&dir, "bad.csv");
    std::fs::write(&bad, "year,n,k\n1981,100,5\n1982,100,6\n1983,100,200\n").unwrap();
    let out_json = tmp(&dir, "fit.json");
    let o = run(&[
        "fit", "--input", bad.to_str().unwrap(), "--kernel", "power",
        "--out", out_json.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("k exceeds n at line 4"), "{stderr}");

    let gap = tmp(&dir, "gap.csv");
    std::fs::write(&gap, "year,n,k\n1981,100,5\n1983,100,6\n").unwrap();
    let o = run(&[
        "fit", "--input", gap.to_str().unwrap(), "--kernel", "power",
        "--out", out_json.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing year 1982"));

    // domain validation: rho_A outside [0,1)
    let o = run(&[
        "simulate", "--p", "0.1", "--rhoA", "1.5", "--kernel", "exp",
        "--theta", "0.5", "--T", "5", "--n", "10",
        "--out", tmp(&dir, "x.csv").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));

    // missing input file
    let o = run(&[
        "fit", "--input", tmp(&dir, "nope.csv").to_str().unwrap(),
        "--kernel", "power", "--out", out_json.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));

    // clap usage errors also land on 2
    let o = run(&["scaling", "--gammas", "0.1:1:0.1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mapping_and_scaling_emit_expected_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let map = tmp(&dir, "map.csv");
    assert_ok(&run(&[
        "mapping", "--p", "0.5,0.1,0.01", "--points", "11",
        "--out", map.to_str().unwrap(),
    ]));
    let text = String::from_utf8(read(&map)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "p,rho_A,rho_D,tangent");
    assert_eq!(lines.count(), 33);

    let scal = tmp(&dir, "s.csv");
    assert_ok(&run(&[
        "scaling", "--gammas", "0.5:1.0:0.25", "--T", "1e3", "--p", "0.5",
        "--rhoA", "0.5", "--n", "1e3", "--out", scal.to_str().unwrap(),
    ]));
    let text = String::from_utf8(read(&scal)).unwrap();
    assert_eq!(text.lines().next().unwrap(), "gamma,delta");
    assert_eq!(text.lines().count(), 4); // header + 3 gammas
}

#[test]
fn variance_curve_has_expected_header_and_finite_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = tmp(&dir, "v.csv");
    assert_ok(&run(&[
        "variance", "--p", "0.1", "--rhoA", "0.5", "--n", "1e3",
        "--kernel", "power", "--gamma", "0.5", "--T", "100", "--points", "10",
        "--out", out.to_str().unwrap(),
    ]));
    let text = String::from_utf8(read(&out)).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,C_t,V_exact,V_lower,V_upper,V_asymptotic"
    );
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 6);
        let v_low: f64 = fields[3].parse().unwrap();
        let v: f64 = fields[2].parse().unwrap();
        let v_up: f64 = fields[4].parse().unwrap();
        assert!(v_low <= v && v <= v_up, "{line}");
    }
}

#[test]
fn fit_json_round_trips_and_honors_seed() {
    let dir = tempfile::tempdir().unwrap();
    let hist = tmp(&dir, "h.csv");
    assert_ok(&run(&[
        "generate", "--T", "25", "--n", "2000", "--p", "0.05", "--rhoA", "0.2",
        "--kernel", "exp", "--theta", "0.6", "--gamma", "0.3", "--seed", "11",
        "--out", hist.to_str().unwrap(),
    ]));
    let fit_args = [
        "fit", "--input", hist.to_str().unwrap(), "--kernel", "both",
        "--seed", "5", "--n-paths", "128", "--n-starts", "2",
        "--max-evals", "150", "--simplex-tol", "1e-3",
    ];
    let f1 = tmp(&dir, "f1.json");
    let f2 = tmp(&dir, "f2.json");
    for f in [&f1, &f2] {
        let mut args: Vec<&str> = fit_args.to_vec();
        args.push("--out");
        args.push(f.to_str().unwrap());
        assert_ok(&run(&args));
    }
    assert_eq!(read(&f1), read(&f2));
    let fits = parse_fit_json(&f1).unwrap();
    assert_eq!(fits.len(), 2);
    assert_eq!(fits[0].family, "exponential");
    assert_eq!(fits[1].family, "power");
    for fit in &fits {
        assert_eq!(fit.schema_version, "1");
        assert_eq!(fit.seed, 5);
        assert_eq!(fit.n_paths, 128);
        // reported rho_D matches the mapping at the reported point
        let expect =
            merton_core::model::map_asset_to_default(fit.p_hat, fit.rho_a_hat).unwrap();
        assert!((fit.rho_d_hat - expect).abs() < 1e-9);
    }
}

#[test]
fn outputs_identical_across_thread_caps() {
    let dir = tempfile::tempdir().unwrap();
    let hist = tmp(&dir, "h.csv");
    assert_ok(&run(&[
        "generate", "--T", "15", "--n", "500", "--seed", "3",
        "--out", hist.to_str().unwrap(),
    ]));
    let mut outputs = Vec::new();
    for threads in ["1", "2", "4"] {
        let fit = tmp(&dir, &format!("fit{threads}.json"));
        let o = merton()
            .env("MERTON_THREADS", threads)
            .args([
                "fit", "--input", hist.to_str().unwrap(), "--kernel", "exponential",
                "--seed", "2", "--n-paths", "256", "--n-starts", "2",
                "--max-evals", "120", "--simplex-tol", "1e-3",
                "--out", fit.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert_ok(&o);
        outputs.push(read(&fit));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[1], outputs[2]);

    let o = merton()
        .env("MERTON_THREADS", "zebra")
        .args(["mapping", "--p", "0.5", "--out", tmp(&dir, "m.csv").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compare_lists_both_families_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let hist = tmp(&dir, "h.csv");
    assert_ok(&run(&[
        "generate", "--T", "12", "--n", "400", "--seed", "8",
        "--out", hist.to_str().unwrap(),
    ]));
    let cmp = tmp(&dir, "cmp.json");
    assert_ok(&run(&[
        "compare", "--input", hist.to_str().unwrap(), "--seed", "4",
        "--n-paths", "64", "--n-draws", "120", "--out", cmp.to_str().unwrap(),
    ]));
    let parsed: merton_cli::CompareJson =
        serde_json::from_slice(&read(&cmp)).unwrap();
    assert_eq!(parsed.schema_version, "1");
    assert_eq!(parsed.families.len(), 2);
    assert_eq!(parsed.families[0].family, "exponential");
    assert_eq!(parsed.families[1].family, "power");
    assert!(parsed.families.iter().all(|f| f.waic.is_finite() && f.wbic.is_finite()));
}

#[test]
fn simulate_writes_stats_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = tmp(&dir, "sim.csv");
    assert_ok(&run(&[
        "simulate", "--p", "0.1", "--rhoA", "0.3", "--kernel", "exponential",
        "--theta", "0.8", "--T", "10", "--n", "200", "--seed", "6",
        "--out", out.to_str().unwrap(),
    ]));
    let h = parse_history_csv(&out).unwrap();
    let stats: merton_cli::StatsJson =
        serde_json::from_slice(&read(&out.with_extension("stats.json"))).unwrap();
    let expect = merton_core::sim::estimator_z(&h).unwrap();
    assert_eq!(stats.z, expect.z);
    assert_eq!(stats.per_year_rates, expect.per_year_rates);
}
