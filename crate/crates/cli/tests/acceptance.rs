//! One pass/fail line per acceptance criterion. Criteria 5 to 10 and 12 run
//! `naheat verify all --seed 7` twice; the rest call the library.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use naheat::heat_kernel::{default_source, h, Kernel, Strategy};
use naheat::na_group::{
    ball_volume_q1, convolve_at, estimate_cn, g_distance, integrate_g, poincare_distance, random_point, PointG,
    QuadratureSpec,
};
use naheat::stratified_group::GroupDescriptor;
use naheat::subordination::{psi, psi_time_integrated, psi_xi_derivative, psi_xi_derivative_time_partial};
use naheat_cli::suites::derivative_errors;

type Outcome = (bool, String);

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn q1() -> GroupDescriptor {
    GroupDescriptor::abelian(1).unwrap()
}

fn c1_poincare() -> Outcome {
    let g = q1();
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let x = random_point(&mut r, &g, 6.0, 4.0);
        worst = worst.max((g_distance(&x, &g).unwrap() - poincare_distance(x.z.coords()[0], x.u)).abs());
    }
    (worst < 1e-12, format!("max abs error {worst:.2e}"))
}

fn c2_ball_volume() -> Outcome {
    let ratios: Vec<f64> = [1.0, 2.0, 3.0].iter().map(|&r| ball_volume_q1(r) / (f64::cosh(r) - 1.0)).collect();
    let cn = estimate_cn(&q1()).unwrap();
    let spread = ratios.iter().map(|x| rel(*x, ratios[0])).fold(0.0, f64::max);
    (spread < 1e-3 && rel(ratios[0], cn) < 1e-3, format!("ratio {:.6}, spread {spread:.1e}, C_N {cn:.6}", ratios[0]))
}

fn c3_mass_semigroup() -> Outcome {
    let g = q1();
    let kern = |t: f64| {
        let src = default_source(&g, t).unwrap();
        Kernel::new(&g, t, &src, &[], Strategy::Moments).unwrap().field(QuadratureSpec::for_time(t))
    };
    let mut mass: f64 = 0.0;
    for t in [1.0, 4.0, 16.0] {
        mass = mass.max((integrate_g(&kern(t), |_| 1.0, true).unwrap().value - 1.0).abs());
    }
    let k1 = kern(1.0);
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let mut semi: f64 = 0.0;
    for _ in 0..5 {
        let x = random_point(&mut r, &g, 1.5, 1.0);
        semi = semi.max(rel(convolve_at(&k1, &k1, &x).unwrap().value, h(&g, 2.0, &x).unwrap().value));
    }
    (mass < 1e-4 && semi < 1e-3, format!("max |mass - 1| {mass:.1e}, semigroup rel err {semi:.1e}"))
}

fn c4_time_integrated() -> Outcome {
    let mut worst: f64 = 0.0;
    for xi in [0.5, 1.0, 2.0, 8.0] {
        let (partial, tail, _) = psi_xi_derivative_time_partial(xi, 200.0, 24).unwrap();
        worst = worst.max(rel(partial + tail, psi_time_integrated(xi).unwrap().value));
    }
    (worst < 1e-5, format!("max rel err {worst:.1e}"))
}

fn c11_fd() -> Outcome {
    let g = q1();
    let mut r = ChaCha8Rng::seed_from_u64(11);
    let pts: Vec<PointG> = (0..6).map(|_| random_point(&mut r, &g, 1.5, 1.0)).collect();
    let mut worst = [0.0f64; 3];
    for t in [1.0, 4.0] {
        let w = derivative_errors(&g, t, &pts).unwrap();
        for i in 0..3 {
            worst[i] = worst[i].max(w[i]);
        }
    }
    let mut psi_err: f64 = 0.0;
    for (t, xi) in [(0.5, 0.3), (1.0, 1.0), (4.0, 2.0), (16.0, 8.0)] {
        let a = psi_xi_derivative(t, xi).unwrap().value;
        let e = xi * 1e-5;
        let fd = ((xi + e) * psi(t, xi + e).unwrap().value - (xi - e) * psi(t, xi - e).unwrap().value) / (2.0 * e);
        psi_err = psi_err.max(rel(fd, a));
    }
    let ok = worst[0] < 1e-5 && worst[1] < 1e-4 && worst[2] < 1e-3 && psi_err < 1e-5;
    (ok, format!("heat orders 1..3: {:.1e} {:.1e} {:.1e}; weight {psi_err:.1e}", worst[0], worst[1], worst[2]))
}

fn load_report(dir: &Path) -> BTreeMap<String, Value> {
    let text = std::fs::read_to_string(dir.join("report.jsonl")).expect("report.jsonl");
    text.lines()
        .map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            (v["id"].as_str().unwrap().to_string(), v)
        })
        .collect()
}

fn from_report(rep: &BTreeMap<String, Value>, prefixes: &[&str]) -> Outcome {
    let hits: Vec<&Value> = rep.iter().filter(|(k, _)| prefixes.iter().any(|p| k.starts_with(p))).map(|(_, v)| v).collect();
    if hits.is_empty() {
        return (false, format!("no records for {prefixes:?}"));
    }
    let ok = hits.iter().all(|v| v["status"] == "pass");
    let msg = hits
        .iter()
        .map(|v| format!("{} [{}] {}", v["id"].as_str().unwrap(), v["status"].as_str().unwrap(), v["summary"].as_str().unwrap()))
        .collect::<Vec<_>>()
        .join("\n      ");
    (ok, msg)
}

fn dir_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect()
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let runs: Vec<(Vec<u8>, std::path::PathBuf)> = ["a", "b"]
        .iter()
        .map(|tag| {
            let out = tmp.path().join(tag);
            let o = Command::new(env!("CARGO_BIN_EXE_naheat"))
                .args(["verify", "all", "--seed", "7", "--out"])
                .arg(&out)
                .output()
                .expect("run naheat");
            (o.stdout, out)
        })
        .collect();
    let rep = load_report(&runs[0].1);

    let same_stdout = runs[0].0 == runs[1].0;
    let (fa, fb) = (dir_files(&runs[0].1), dir_files(&runs[1].1));
    let c12 = (same_stdout && fa == fb && !fa.is_empty(), format!("stdout identical: {same_stdout}; {} files compared", fa.len()));

    let results: Vec<(u32, Outcome)> = vec![
        (1, c1_poincare()),
        (2, c2_ball_volume()),
        (3, c3_mass_semigroup()),
        (4, c4_time_integrated()),
        (5, from_report(&rep, &["estimates.p3_5_gradient"])),
        (6, from_report(&rep, &["estimates.p3_6_mixed_large_t", "estimates.p3_6_mixed_small_t"])),
        (7, from_report(&rep, &["estimates.p3_7_third"])),
        (8, from_report(&rep, &["estimates.p3_8_pointwise"])),
        (9, from_report(&rep, &["riesz.cz_"])),
        (10, from_report(&rep, &["riesz.tail_integrability"])),
        (11, c11_fd()),
        (12, c12),
    ];
    let mut failed = 0;
    for (n, (ok, msg)) in &results {
        println!("criterion {n:>2}: {} {msg}", if *ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    println!("{} of {} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
