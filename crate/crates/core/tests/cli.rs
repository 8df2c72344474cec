use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn kladapt(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kladapt"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn path(rel: &str) -> String {
    crate_dir().join(rel).to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    v.sort();
    v
}

#[test]
fn run_figure_preset_writes_two_csvs_and_one_svg() {
    let dir = tempfile::tempdir().unwrap();
    let o = kladapt(&["run", &path("figures/fig3.preset")], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(listing(dir.path()), vec!["fig3-a.csv", "fig3-b.csv", "fig3.svg"]);
    let csv = fs::read_to_string(dir.path().join("fig3-b.csv")).unwrap();
    assert!(csv.starts_with("t,x1,x2,th1,th2,u,"));
    assert_eq!(csv.lines().count(), 2001);
}

#[test]
fn missing_model_file_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("bad.scenario");
    let text = fs::read_to_string(crate_dir().join("scenarios/synthesized.scenario"))
        .unwrap()
        .replace("../models/moore_greitzer.model", "missing.model");
    fs::write(&sc, text).unwrap();
    let o = kladapt(&["run", sc.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("field `model`"), "{}", stderr(&o));
}

#[test]
fn open_loop_escape_exits_three_with_blow_up_time() {
    let dir = tempfile::tempdir().unwrap();
    let o = kladapt(&["run", &path("scenarios/open_loop.scenario")], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    let t: f64 = err
        .split("blew up at t = ")
        .nth(1)
        .and_then(|r| r.split(':').next())
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or_else(|| panic!("no blow-up time in {err}"));
    assert!(t > 0.0 && t < 20.0);
    assert!(dir.path().join("open-loop.csv").is_file());
}

#[test]
fn verify_controller_b_and_dump_margins() {
    let dir = tempfile::tempdir().unwrap();
    let o = kladapt(&["verify", &path("scenarios/controller_b.scenario"), "--dump-margins"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let margins = fs::read_to_string(dir.path().join("controller_b.margins.csv")).unwrap();
    assert!(margins.starts_with("check,t,margin\n"));
    assert!(margins.contains("p1/exp-envelope,"));
    assert!(dir.path().join("controller_b.verify.txt").is_file());
}

#[test]
fn expected_failure_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let o = kladapt(&["verify", &path("scenarios/controller_a_ios.scenario")], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL (expected) large/ios"));

    let sc = dir.path().join("no-expect.scenario");
    let text = fs::read_to_string(crate_dir().join("scenarios/controller_a_ios.scenario"))
        .unwrap()
        .replace("expect_fail = ios\n", "");
    fs::write(&sc, text).unwrap();
    assert_eq!(kladapt(&["verify", sc.to_str().unwrap()], dir.path()).status.code(), Some(1));
}

#[test]
fn synthesized_controller_file_round_trips_through_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = kladapt(&["synth", &path("models/moore_greitzer.model")], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let controller = dir.path().join("moore_greitzer.controller.model");
    assert!(dir.path().join("moore_greitzer.trace.txt").is_file());

    let sc = dir.path().join("from-file.scenario");
    fs::write(
        &sc,
        "schema = kladapt-scenario-v1\nmodel = moore_greitzer.controller.model\ncontroller = file\n\
         theta = -1.5, -0.5\nchecks = lyapunov, ios, exp-envelope\n\
         run p1 {\n  x0 = 0.4, -1\n  csv = file.csv\n}\n",
    )
    .unwrap();
    assert!(controller.is_file());
    let o = kladapt(&["verify", sc.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}{}", String::from_utf8_lossy(&o.stdout), stderr(&o));

    let direct = dir.path().join("direct.scenario");
    fs::write(
        &direct,
        format!(
            "schema = kladapt-scenario-v1\nmodel = {}\ncontroller = backstep\ntheta = -1.5, -0.5\n\
             run p1 {{\n  x0 = 0.4, -1\n  csv = direct.csv\n}}\n",
            path("models/moore_greitzer.model")
        ),
    )
    .unwrap();
    assert_eq!(kladapt(&["run", direct.to_str().unwrap()], dir.path()).status.code(), Some(0));
    let a = fs::read_to_string(dir.path().join("file.csv")).unwrap();
    let b = fs::read_to_string(dir.path().join("direct.csv")).unwrap();
    let last = |s: &str| s.lines().last().unwrap().split(',').take(5).map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>();
    for (x, y) in last(&a).iter().zip(last(&b)) {
        assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{x} vs {y}");
    }
}

#[test]
fn scalar_model_synthesizes_base_stage_only() {
    let dir = tempfile::tempdir().unwrap();
    let o = kladapt(&["synth", &path("models/integrator.model")], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let trace = fs::read_to_string(dir.path().join("integrator.trace.txt")).unwrap();
    assert_eq!(trace.matches("stage ").count(), 1, "{trace}");
}

#[test]
fn non_triangular_model_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("bad.model");
    let text = fs::read_to_string(crate_dir().join("models/moore_greitzer.model"))
        .unwrap()
        .replace("phi[1][2] = (^ x1 3)", "phi[1][2] = (* x1 x2)");
    fs::write(&model, text).unwrap();
    let o = kladapt(&["synth", model.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("phi[1][2]"), "{}", stderr(&o));
}

#[test]
fn figures_are_byte_stable_and_range_checked() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(kladapt(&["figures", "all"], a.path()).status.code(), Some(0));
    assert_eq!(kladapt(&["figures", "all"], b.path()).status.code(), Some(0));
    let files = listing(a.path());
    assert_eq!(files.iter().filter(|f| f.ends_with(".svg")).count(), 6);
    assert_eq!(files, listing(b.path()));
    for f in &files {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }

    let one = tempfile::tempdir().unwrap();
    assert_eq!(kladapt(&["figures", "3"], one.path()).status.code(), Some(0));
    assert_eq!(listing(one.path()), vec!["fig3-a.csv", "fig3-b.csv", "fig3.svg"]);
    for f in listing(one.path()) {
        assert_eq!(fs::read(one.path().join(&f)).unwrap(), fs::read(a.path().join(&f)).unwrap());
    }
    assert_eq!(kladapt(&["figures", "7"], one.path()).status.code(), Some(2));
}

#[test]
fn sweep_is_independent_of_thread_count_and_follows_seed() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("sphere.scenario");
    let text = fs::read_to_string(crate_dir().join("scenarios/uniformity.scenario"))
        .unwrap()
        .replace("set = circle", "set = sphere")
        .replace("count = 32", "count = 12");
    fs::write(&sc, text).unwrap();
    let run = |threads: &str, seed: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_kladapt"))
            .args(["sweep", sc.to_str().unwrap(), "--seed", seed, "--out-dir"])
            .arg(dir.path())
            .env("KLADAPT_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        fs::read_to_string(dir.path().join("uniformity.csv")).unwrap()
    };
    let one = run("1", "5");
    assert_eq!(one, run("4", "5"));
    assert_ne!(one, run("1", "6"));
    assert_eq!(one.lines().count(), 13);
}

#[test]
fn tolerance_flags_override_the_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let fig = path("figures/fig3.preset");
    assert_eq!(kladapt(&["run", &fig, "--rtol", "1e-4", "--atol", "1e-6"], dir.path()).status.code(), Some(0));
    let coarse = fs::read_to_string(dir.path().join("fig3-a.csv")).unwrap();
    assert_eq!(kladapt(&["run", &fig], dir.path()).status.code(), Some(0));
    assert_ne!(coarse, fs::read_to_string(dir.path().join("fig3-a.csv")).unwrap());
    assert_eq!(kladapt(&["run", &fig, "--rtol", "-1"], dir.path()).status.code(), Some(2));
}
