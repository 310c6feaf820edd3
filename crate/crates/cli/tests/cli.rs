use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;

use zonoconform::eval::ComparisonTable;
use zonoconform::synthetic::{correlated_gaussian, functional_dataset};
use zonoconform::{CalibratedFamily, FunctionalConformalModel, SampleMatrix, Zonotope};

fn zonoconform(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zonoconform"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = zonoconform(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = zonoconform(args);
    assert!(!out.status.success(), "{args:?} should fail");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "error is not one line: {err}");
    err
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn write(&self, name: &str, m: &SampleMatrix) -> String {
        m.write_csv_path(self.path(name)).unwrap();
        self.arg(name)
    }

    fn gaussian(&self, name: &str, n: usize, seed: u64) -> String {
        self.write(name, &correlated_gaussian(n, &mut ChaCha8Rng::seed_from_u64(seed)))
    }

    /// Writes `<name>_t.csv` and `<name>_p.csv`; returns their paths.
    fn functional(&self, name: &str, n: usize, l: usize, seed: u64) -> (String, String) {
        let d = functional_dataset(n, l, &mut ChaCha8Rng::seed_from_u64(seed));
        (
            self.write(&format!("{name}_t.csv"), &d.truths),
            self.write(&format!("{name}_p.csv"), &d.predictions),
        )
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&std::fs::read_to_string(self.path(name)).unwrap()).unwrap()
    }
}

fn read_sets(path: &Path) -> Vec<Value> {
    let v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v.as_array().unwrap().clone()
}

fn zonotope(v: &Value) -> Zonotope {
    serde_json::from_value(v.clone()).unwrap()
}

#[test]
fn fit_rotated_box_on_2d_gaussian() {
    let w = Workspace::new();
    let input = w.gaussian("x.csv", 300, 1);
    let stdout = ok(&["fit", "--input", &input, "--method", "rotated_box", "--out", &w.arg("fit.json")]);
    assert!(stdout.contains("2 generators"), "{stdout}");
    let fit = w.json("fit.json");
    let generators = fit["family"]["base"]["generators"].as_array().unwrap();
    assert_eq!(generators.len(), 2);
    assert!(generators.iter().all(|g| g.as_array().unwrap().len() == 2));
}

#[test]
fn convex_hull_in_7d_is_refused() {
    let w = Workspace::new();
    let m = DMatrix::from_fn(40, 7, |i, j| ((i * 31 + j * 17) % 23) as f64 + (i * j) as f64 * 0.01);
    let input = w.write("x.csv", &SampleMatrix::new(m).unwrap());
    let err = fails(&["fit", "--input", &input, "--method", "convex_hull", "--out", &w.arg("fit.json")]);
    assert!(err.starts_with("error:") && err.contains("not supported"), "{err}");
    assert!(!w.path("fit.json").exists());
}

#[test]
fn repeated_runs_write_identical_files() {
    let w = Workspace::new();
    let input = w.gaussian("x.csv", 200, 2);
    let cal = w.gaussian("cal.csv", 200, 3);
    for run in ["a", "b"] {
        let fit = w.arg(&format!("fit_{run}.json"));
        let model = w.arg(&format!("model_{run}.json"));
        ok(&["fit", "--input", &input, "--method", "convex_hull", "--seed", "7", "--out", &fit]);
        ok(&["calibrate", "--fit", &fit, "--input", &cal, "--out", &model]);
    }
    for kind in ["fit", "model"] {
        let a = std::fs::read(w.path(&format!("{kind}_a.json"))).unwrap();
        let b = std::fs::read(w.path(&format!("{kind}_b.json"))).unwrap();
        assert_eq!(a, b, "{kind} files differ");
    }
}

#[test]
fn calibration_stores_one_score_per_row() {
    let w = Workspace::new();
    let fit = w.arg("fit.json");
    ok(&["fit", "--input", &w.gaussian("x.csv", 500, 4), "--out", &fit]);
    let stdout = ok(&["calibrate", "--fit", &fit, "--input", &w.gaussian("cal.csv", 500, 5), "--out", &w.arg("m.json")]);
    assert!(stdout.contains("calibrated on 500 rows"), "{stdout}");
    assert_eq!(w.json("m.json")["scores"].as_array().unwrap().len(), 500);
    let model: CalibratedFamily = serde_json::from_value(w.json("m.json")).unwrap();
    assert!(model.scores().windows(2).all(|p| p[0] <= p[1]));
}

#[test]
fn coarse_grid_sets_contain_fine_grid_sets() {
    let w = Workspace::new();
    let fit = w.arg("fit.json");
    ok(&["fit", "--input", &w.gaussian("x.csv", 400, 6), "--method", "convex_hull", "--out", &fit]);
    let cal = w.gaussian("cal.csv", 400, 7);
    for m in ["10", "1000"] {
        ok(&["calibrate", "--fit", &fit, "--input", &cal, "--grid-size", m, "--out", &w.arg(&format!("m{m}.json"))]);
    }
    let coarse: CalibratedFamily = serde_json::from_value(w.json("m10.json")).unwrap();
    let fine: CalibratedFamily = serde_json::from_value(w.json("m1000.json")).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for eps in [0.05, 0.1, 0.2, 0.5] {
        let outer = coarse.level_set(eps).unwrap().zonotope;
        let inner = fine.level_set(eps).unwrap().zonotope;
        for _ in 0..200 {
            let x = inner.sample(&mut rng);
            assert!(outer.contains(&x, 1e-9).unwrap(), "eps {eps}: {x:?}");
        }
    }
}

#[test]
fn full_variance_fraction_leaves_no_truncation_box() {
    let w = Workspace::new();
    let (ft, fp) = w.functional("fit", 60, 12, 9);
    let (ct, cp) = w.functional("cal", 40, 12, 10);
    let fit = w.arg("fit.json");
    ok(&["fit", "--truths", &ft, "--predictions", &fp, "--variance-fraction", "1", "--out", &fit]);
    assert!(w.path("fit.v.csv").exists());
    let stdout = ok(&["calibrate", "--fit", &fit, "--truths", &ct, "--predictions", &cp, "--out", &w.arg("m.json")]);
    assert!(stdout.contains("truncation box dims 0"), "{stdout}");
    let model = w.json("m.json");
    assert_eq!(model["trunc_box"]["center"].as_array().unwrap().len(), 0);
    let loaded = FunctionalConformalModel::load(w.path("m.json")).unwrap();
    assert_eq!(loaded.svd().unwrap().k(), 12);
}

#[test]
fn predict_writes_nested_sets_and_widening_envelopes() {
    let w = Workspace::new();
    let fit = w.arg("fit.json");
    let model = w.arg("m.json");
    ok(&["fit", "--input", &w.gaussian("x.csv", 300, 11), "--out", &fit]);
    ok(&["calibrate", "--fit", &fit, "--input", &w.gaussian("cal.csv", 300, 12), "--out", &model]);
    let base = w.write("base.csv", &SampleMatrix::from_rows(&[vec![3.0, -1.0]]).unwrap());
    ok(&["predict", "--model", &model, "--input", &base, "--eps", "0.1,0.2", "--out", &w.arg("pred")]);

    let sets = read_sets(&w.path("pred/sets.json"));
    assert_eq!(sets.len(), 1);
    let levels = sets[0]["sets"].as_array().unwrap();
    assert_eq!(levels.len(), 2);
    let (wide, narrow) = (zonotope(&levels[0]), zonotope(&levels[1]));
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        assert!(wide.contains(&narrow.sample(&mut rng), 1e-9).unwrap());
    }

    let env = |eps: &str| SampleMatrix::read_csv_path(w.path(&format!("pred/envelope_{eps}.csv")), false).unwrap();
    let (e1, e2) = (env("0.1"), env("0.2"));
    assert_eq!((e1.nrows(), e1.dim()), (2, 2));
    for j in 0..2 {
        assert!(e1.matrix()[(0, j)] <= e2.matrix()[(0, j)]);
        assert!(e1.matrix()[(1, j)] >= e2.matrix()[(1, j)]);
    }
}

#[test]
fn zero_error_model_predicts_the_base_point() {
    let w = Workspace::new();
    let d = functional_dataset(20, 8, &mut ChaCha8Rng::seed_from_u64(14));
    let p = w.write("p.csv", &d.predictions);
    let fit = w.arg("fit.json");
    let model = w.arg("m.json");
    let out = ok(&["fit", "--truths", &p, "--predictions", &p, "--out", &fit]);
    assert!(out.contains("all errors are zero"), "{out}");
    ok(&["calibrate", "--fit", &fit, "--truths", &p, "--predictions", &p, "--out", &model]);
    ok(&["predict", "--model", &model, "--input", &p, "--eps", "0.1,0.3", "--out", &w.arg("pred")]);
    for eps in ["0.1", "0.3"] {
        let env = SampleMatrix::read_csv_path(w.path(&format!("pred/envelope_{eps}.csv")), false).unwrap();
        assert_eq!(env.nrows(), 40);
        for i in 0..20 {
            assert_eq!(env.row(2 * i), d.predictions.row(i));
            assert_eq!(env.row(2 * i + 1), d.predictions.row(i));
        }
    }
}

#[test]
fn compact_sets_share_generators() {
    let w = Workspace::new();
    let (ft, fp) = w.functional("fit", 80, 16, 15);
    let (ct, cp) = w.functional("cal", 60, 16, 16);
    let (_, tp) = w.functional("test", 3, 16, 17);
    let fit = w.arg("fit.json");
    let model = w.arg("m.json");
    ok(&["fit", "--truths", &ft, "--predictions", &fp, "--out", &fit]);
    ok(&["calibrate", "--fit", &fit, "--truths", &ct, "--predictions", &cp, "--out", &model]);
    ok(&["predict", "--model", &model, "--input", &tp, "--eps", "0.2", "--out", &w.arg("full")]);
    ok(&["predict", "--model", &model, "--input", &tp, "--eps", "0.2", "--compact", "--out", &w.arg("compact")]);
    let full = read_sets(&w.path("full/sets.json"));
    let compact: Value = serde_json::from_str(&std::fs::read_to_string(w.path("compact/sets.json")).unwrap()).unwrap();
    let shared = &compact["levels"][0]["generators"];
    for (i, row) in full.iter().enumerate() {
        assert_eq!(&row["sets"][0]["generators"], shared);
        assert_eq!(row["sets"][0]["center"], compact["rows"][i]["centers"][0]);
    }
}

#[test]
fn coverage_meets_target_on_synthetic_data() {
    let w = Workspace::new();
    let fit = w.arg("fit.json");
    let model = w.arg("m.json");
    let x = w.gaussian("x.csv", 1000, 18);
    let cal = w.gaussian("cal.csv", 1000, 19);
    ok(&["fit", "--input", &x, "--out", &fit]);
    ok(&["calibrate", "--fit", &fit, "--input", &cal, "--strict-quantile", "--out", &model]);
    let test = w.gaussian("test.csv", 20000, 20);
    ok(&[
        "coverage", "--model", &model, "--input", &test, "--eps", "0.1",
        "--methods", "zonotope,modulation,elliptical,rotated_box",
        "--calibration-input", &cal, "--fit-input", &x, "--out", &w.arg("r.json"),
    ]);
    let report = w.json("r.json");
    let coverage = report["coverage"].as_array().unwrap();
    assert_eq!(coverage.len(), 4);
    let bound = 0.9 - 3.0 * (0.09f64 / 1000.0 + 0.09 / 20000.0).sqrt();
    for r in coverage {
        assert!(r["coverage"].as_f64().unwrap() >= bound, "{r}");
    }
    assert_eq!(report["efficiency"].as_array().unwrap().len(), 4);
}

#[test]
fn elliptical_is_skipped_above_32_dims_without_svd() {
    let w = Workspace::new();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut sample = |n: usize| {
        let m = DMatrix::from_fn(n, 40, |_, _| rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng));
        SampleMatrix::new(m).unwrap()
    };
    let x = w.write("x.csv", &sample(200));
    let cal = w.write("cal.csv", &sample(200));
    let test = w.write("test.csv", &sample(100));
    let fit = w.arg("fit.json");
    let model = w.arg("m.json");
    ok(&["fit", "--input", &x, "--out", &fit]);
    ok(&["calibrate", "--fit", &fit, "--input", &cal, "--out", &model]);
    let out = zonoconform(&[
        "coverage", "--model", &model, "--input", &test, "--methods", "zonotope,elliptical,modulation",
        "--calibration-input", &cal, "--out", &w.arg("r.json"),
    ]);
    assert!(out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("elliptical: skipped"), "{err}");
    let methods: Vec<String> = w.json("r.json")["coverage"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["method"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(methods, ["zonotope", "modulation"]);
}

#[test]
fn functional_elliptical_runs_on_svd_coordinates() {
    let w = Workspace::new();
    let (ft, fp) = w.functional("fit", 300, 40, 22);
    let (ct, cp) = w.functional("cal", 300, 40, 23);
    let (tt, tp) = w.functional("test", 2000, 40, 24);
    let fit = w.arg("fit.json");
    let model = w.arg("m.json");
    ok(&["fit", "--truths", &ft, "--predictions", &fp, "--out", &fit]);
    ok(&["calibrate", "--fit", &fit, "--truths", &ct, "--predictions", &cp, "--out", &model]);
    ok(&[
        "coverage", "--model", &model, "--truths", &tt, "--predictions", &tp, "--eps", "0.2",
        "--methods", "elliptical", "--calibration-truths", &ct, "--calibration-predictions", &cp,
        "--out", &w.arg("r.json"),
    ]);
    let report = w.json("r.json");
    let c = &report["coverage"][0];
    assert_eq!(c["method"], "elliptical_svd");
    // one calibration draw: its spread adds to the test-sample spread
    let se = (0.16f64 / 300.0 + 0.16 / 2000.0).sqrt();
    assert!(c["coverage"].as_f64().unwrap() >= 0.8 - 3.0 * se, "{c}");
    let area = report["efficiency"][0]["mean_projected_area"].as_f64().unwrap();
    assert!(area > 0.0 && area.is_finite());
}

#[test]
fn report_csv_round_trips_through_compare() {
    let w = Workspace::new();
    let fit = w.arg("fit.json");
    let model = w.arg("m.json");
    let cal = w.gaussian("cal.csv", 300, 25);
    ok(&["fit", "--input", &w.gaussian("x.csv", 300, 24), "--out", &fit]);
    ok(&["calibrate", "--fit", &fit, "--input", &cal, "--out", &model]);
    let test = w.gaussian("test.csv", 2000, 26);
    let common = ["coverage", "--model", &model, "--input", &test, "--eps", "0.1,0.2", "--methods", "zonotope,modulation", "--calibration-input", &cal];
    ok(&[&common[..], &["--format", "csv", "--out", &w.arg("r.csv")]].concat());
    ok(&[&common[..], &["--format", "json", "--out", &w.arg("r.json")]].concat());
    let direct = ComparisonTable::read_csv(std::fs::File::open(w.path("r.csv")).unwrap()).unwrap();
    assert_eq!(direct.rows.len(), 4);
    ok(&["compare", "--input", &w.arg("r.json"), "--out", &w.arg("c.csv")]);
    let merged = ComparisonTable::read_csv(std::fs::File::open(w.path("c.csv")).unwrap()).unwrap();
    assert_eq!(merged, direct);
    let text = ok(&["compare", "--input", &w.arg("r.csv")]);
    assert!(text.contains("modulation") && text.contains("zonotope"));
}

#[test]
fn malformed_csv_names_the_cell() {
    let w = Workspace::new();
    std::fs::write(w.path("bad.csv"), "1,2\n3,abc\n").unwrap();
    let err = fails(&["fit", "--input", &w.arg("bad.csv"), "--out", &w.arg("f.json")]);
    assert!(err.contains("row 2") && err.contains("column 2"), "{err}");
}

#[test]
fn dimension_mismatch_is_reported() {
    let w = Workspace::new();
    let fit = w.arg("fit.json");
    ok(&["fit", "--input", &w.gaussian("x.csv", 100, 27), "--out", &fit]);
    let three = w.write("three.csv", &SampleMatrix::new(DMatrix::from_element(10, 3, 0.5)).unwrap());
    let err = fails(&["calibrate", "--fit", &fit, "--input", &three, "--out", &w.arg("m.json")]);
    assert!(err.contains("dimension mismatch"), "{err}");
}

#[test]
fn bad_arguments_fail_on_one_line() {
    let w = Workspace::new();
    let err = fails(&["fit", "--bogus"]);
    assert!(err.starts_with("error:"));
    let input = w.gaussian("x.csv", 50, 28);
    let err = fails(&["calibrate", "--fit", &w.arg("missing.json"), "--input", &input, "--eps", "1.5", "--out", &w.arg("m.json")]);
    assert!(err.contains("outside (0, 1)"), "{err}");
    let out = Command::new(env!("CARGO_BIN_EXE_zonoconform"))
        .args(["fit", "--input", &input, "--out", &w.arg("f.json")])
        .env("ZONOCONFORM_THREADS", "zero")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("ZONOCONFORM_THREADS"));
}

#[test]
fn thread_cap_does_not_change_results() {
    let w = Workspace::new();
    let x = w.gaussian("x.csv", 300, 29);
    let cal = w.gaussian("cal.csv", 300, 30);
    for threads in ["1", "2"] {
        let fit = w.arg(&format!("fit{threads}.json"));
        let model = w.arg(&format!("m{threads}.json"));
        for args in [
            vec!["fit", "--input", &x, "--out", &fit],
            vec!["calibrate", "--fit", &fit, "--input", &cal, "--out", &model],
        ] {
            let out = Command::new(env!("CARGO_BIN_EXE_zonoconform"))
                .args(&args)
                .env("ZONOCONFORM_THREADS", threads)
                .output()
                .unwrap();
            assert!(out.status.success());
        }
    }
    assert_eq!(std::fs::read(w.path("m1.json")).unwrap(), std::fs::read(w.path("m2.json")).unwrap());
}
