use std::process::Command;

fn naheat(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_naheat")).args(args).output().unwrap()
}

#[test]
fn eval_distance_prints_value_and_json() {
    let o = naheat(&["eval", "distance", "--z", "1.0", "--u", "0.5"]);
    assert!(o.status.success());
    let s = String::from_utf8(o.stdout).unwrap();
    let json: serde_json::Value = serde_json::from_str(s.lines().last().unwrap()).unwrap();
    let v = json["value"].as_f64().unwrap();
    // cosh d = cosh u + e^{-u} z^2 / 2
    let exact = (0.5f64.cosh() + 0.5 * (-0.5f64).exp()).acosh();
    assert!((v - exact).abs() < 1e-12);
}

#[test]
fn eval_heat_derivative_program() {
    let o = naheat(&["eval", "heat-derivative", "--t", "2", "--z", "0.3", "--u", "-0.2", "--ops", "1*1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn exit_codes() {
    assert_eq!(naheat(&["eval", "psi", "--t", "-1", "--xi", "1"]).status.code(), Some(2));
    assert_eq!(naheat(&["eval", "distance", "--z", "1,2"]).status.code(), Some(2));
    assert_eq!(naheat(&["verify", "nonsense"]).status.code(), Some(2));
    let o = naheat(&["eval", "heat", "--group", "heisenberg", "--t", "0.05", "--z", "0,0,0"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn verify_writes_reports_and_reads_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# geometry only\nseed = 3\ngroup = abelian:1\n").unwrap();
    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_naheat"))
        .args(["verify", "subordination", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success());
    let rep = std::fs::read_to_string(out.join("report.jsonl")).unwrap();
    assert_eq!(rep.lines().count(), 4);
    for l in rep.lines() {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        assert_eq!(v["status"], "pass");
    }
}

#[test]
fn config_parser() {
    let m = naheat_cli::parse_config("t_min = 2 # lower\n\nnode-factor=1.5\n").unwrap();
    assert_eq!(m["t-min"], "2");
    assert_eq!(m["node-factor"], "1.5");
    assert!(naheat_cli::parse_config("oops").is_err());
    assert_eq!(naheat_cli::dyadic_grid(4.0, 64.0), vec![4.0, 8.0, 16.0, 32.0, 64.0]);
}

#[test]
fn eval_examples() {
    let last = |o: std::process::Output| -> f64 {
        assert!(o.status.success());
        let s = String::from_utf8(o.stdout).unwrap();
        serde_json::from_str::<serde_json::Value>(s.lines().last().unwrap()).unwrap()["value"].as_f64().unwrap()
    };
    assert!((last(naheat(&["eval", "distance", "--q", "1", "--z", "0", "--u", "2"])) - 2.0).abs() < 1e-15);

    let v = last(naheat(&["eval", "heat", "--q", "1", "--t", "1", "--z", "0", "--u", "0"]));
    let g = naheat::stratified_group::GroupDescriptor::abelian(1).unwrap();
    let src = naheat::heat_kernel::default_source(&g, 1.0).unwrap();
    let k = naheat::heat_kernel::Kernel::new(&g, 1.0, &src, &[], naheat::heat_kernel::Strategy::Moments).unwrap();
    assert_eq!(v.to_bits(), k.value(&naheat::na_group::PointG::q1(0.0, 0.0)).to_bits());

    let p = last(naheat(&["eval", "psi", "--t", "1", "--xi", "1"]));
    assert!(p.is_finite() && p > 0.0);
}
