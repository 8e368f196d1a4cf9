use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use hetvar::methods::MethodRegistry;
use hetvar::par::Execution;
use hetvar::report::{read_metrics_csv, METRICS_HEADER};
use hetvar::simulation::{full_grid, SimulationConfig};

const BIN: &str = env!("CARGO_BIN_EXE_hetvar");

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SMALL_CONFIG: &str = "\
# two cells
k = 5
sizes = n40
p_c = 0.2
theta = 0
tau2 = 0, 0.3
reps = 60
seed = 42
estimators = mp, ssc-always, smu
intervals = fpc, qp
";

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn analyze_matches_golden_report() {
    let input = data("studies.csv");
    let out = run(&["analyze", "--input", input.to_str().unwrap()], &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let golden = std::fs::read_to_string(data("studies_report.txt")).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), golden);
}

#[test]
fn analyze_honours_selection_and_mode() {
    let input = data("studies.csv");
    let out = run(
        &[
            "analyze",
            "--input",
            input.to_str().unwrap(),
            "--estimators",
            "ssu,dl",
            "--intervals",
            "fpu",
            "--mode",
            "naive",
            "--policy",
            "always",
            "--level",
            "0.9",
        ],
        &[],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\nssu-naive,always,"));
    assert!(text.contains("\ndl,always,"));
    assert!(text.contains("\nfpu-naive,always,"));
    assert!(text.contains("level = 0.9\n"));
    assert!(!text.contains("[policy only]"));
}

#[test]
fn analyze_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.csv", "study_id,x_t,n_t,x_c,n_c\nA,5,4,1,10\n");
    let out = run(&["analyze", "--input", bad.to_str().unwrap()], &[]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
    let input = data("studies.csv");
    let out = run(&["analyze", "--input", input.to_str().unwrap(), "--policy", "sometimes"], &[]);
    assert!(!out.status.success());
}

#[test]
fn simulate_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sim.conf", SMALL_CONFIG);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    let cfg_s = cfg.to_str().unwrap();
    assert!(run(&["simulate", "--config", cfg_s, "--out", a.to_str().unwrap()], &[]).status.success());
    assert!(run(
        &["simulate", "--config", cfg_s, "--out", b.to_str().unwrap()],
        &[("HETVAR_THREADS", "1")]
    )
    .status
    .success());
    assert!(run(
        &["simulate", "--config", cfg_s, "--out", c.to_str().unwrap(), "--sequential"],
        &[("HETVAR_THREADS", "3")]
    )
    .status
    .success());
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert_eq!(text, std::fs::read_to_string(&c).unwrap());
    assert_eq!(text.lines().next().unwrap(), METRICS_HEADER);
    let rows = read_metrics_csv(&text).unwrap();
    assert_eq!(rows.len(), 2 * 5);
    for r in &rows {
        if let Some(cov) = r.coverage {
            let total = cov + r.miss_left.unwrap() + r.miss_right.unwrap();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(r.bias.is_none());
        } else {
            assert!(r.bias.is_some() && r.median_bias.is_some());
        }
    }
    assert!(rows.iter().any(|r| r.method == "smu-model" && r.policy == "always"));
}

#[test]
fn simulate_overrides_and_bad_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sim.conf", SMALL_CONFIG);
    let out_path = dir.path().join("o.csv");
    let out = run(
        &[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_path.to_str().unwrap(),
            "--reps",
            "20",
            "--seed",
            "7",
        ],
        &[],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = read_metrics_csv(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert!(rows.iter().all(|r| r.effective_reps <= 20));

    let out = run(
        &["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("x.csv").to_str().unwrap()],
        &[("HETVAR_THREADS", "zero")],
    );
    assert!(!out.status.success());
    assert!(stderr(&out).contains("HETVAR_THREADS"));
}

#[test]
fn simulate_reports_missing_key() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL_CONFIG.replace("reps = 60\n", "");
    let cfg = write(dir.path(), "sim.conf", &text);
    let out = run(
        &["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o.csv").to_str().unwrap()],
        &[],
    );
    assert!(!out.status.success());
    assert!(stderr(&out).contains("missing required key `reps`"), "{}", stderr(&out));
}

#[test]
fn unregistered_kd_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL_CONFIG.replace("estimators = mp, ssc-always, smu", "estimators = mp, kd");
    let cfg = write(dir.path(), "sim.conf", &text);
    let out = run(
        &["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o.csv").to_str().unwrap()],
        &[],
    );
    assert!(!out.status.success());
    assert!(stderr(&out).contains("kd"), "{}", stderr(&out));
}

#[test]
fn tiny_run_is_fast() {
    let dir = tempfile::tempdir().unwrap();
    let text = "k = 10\nsizes = n100\np_c = 0.2\ntheta = 0.5\ntau2 = 0.4\nreps = 50\nseed = 3\n\
                estimators = dl, reml, mp, ssc, ssu, smc, smu\nintervals = fpc, fpu, qp, pl\n";
    let cfg = write(dir.path(), "sim.conf", text);
    let start = Instant::now();
    let out = run(
        &["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o.csv").to_str().unwrap()],
        &[],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(start.elapsed() < Duration::from_secs(10));
}

#[test]
fn resume_keeps_finished_cells() {
    let full = SimulationConfig::parse(SMALL_CONFIG).unwrap();
    let subset = SimulationConfig::parse(&SMALL_CONFIG.replace("tau2 = 0, 0.3", "tau2 = 0.3")).unwrap();
    let registry = MethodRegistry::new();
    let exec = Execution::default();
    let partial = full_grid(&subset, &registry, &[], exec, |_, _, _, _| {}).unwrap();
    let mut skipped = Vec::new();
    let merged = full_grid(&full, &registry, &partial, exec, |i, _, _, s| {
        if s {
            skipped.push(i)
        }
    })
    .unwrap();
    assert_eq!(skipped, vec![1]);
    let fresh = full_grid(&full, &registry, &[], exec, |_, _, _, _| {}).unwrap();
    assert_eq!(merged, fresh);
}

#[test]
fn plot_writes_valid_svg() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sim.conf", &SMALL_CONFIG.replace("reps = 60", "reps = 30"));
    let csv = dir.path().join("m.csv");
    assert!(run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", csv.to_str().unwrap()], &[])
        .status
        .success());
    let figs = dir.path().join("figs");
    for metric in ["bias", "median_bias", "coverage", "miss_left", "miss_right"] {
        let out = run(
            &["plot", "--input", csv.to_str().unwrap(), "--metric", metric, "--out", figs.to_str().unwrap()],
            &[],
        );
        assert!(out.status.success(), "{}", stderr(&out));
        let path = figs.join(format!("{metric}_pc0.2_theta0.svg"));
        let text = std::fs::read_to_string(&path).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap();
        let polylines: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("polyline")).collect();
        let expected = if metric.contains("bias") { 3 } else { 2 };
        assert_eq!(polylines.len(), expected, "{metric}");
        let reference = doc
            .descendants()
            .find(|n| n.attribute("class") == Some("reference"))
            .unwrap();
        let value: f64 = reference.attribute("data-value").unwrap().parse().unwrap();
        let want = match metric {
            "coverage" => 0.95,
            "miss_left" | "miss_right" => 0.025,
            _ => 0.0,
        };
        assert!((value - want).abs() < 1e-12);
        let dashed = polylines
            .iter()
            .filter(|n| n.attribute("stroke-dasharray").is_some())
            .count();
        assert_eq!(dashed, if metric.contains("bias") { 1 } else { 0 });
    }
    let out = run(
        &["plot", "--input", csv.to_str().unwrap(), "--metric", "power", "--out", figs.to_str().unwrap()],
        &[],
    );
    assert!(!out.status.success());
}
