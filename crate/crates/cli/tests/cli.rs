use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use quadlin::evaluation::{compare_dvh_points, criteria_report};
use quadlin::patient_io::{load_patient, read_dose_csv};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn quadlin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quadlin")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_owned).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(str::to_owned).collect()).collect();
    (header, rows)
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_identity_reaches_prescription() {
    let out = tempfile::tempdir().unwrap();
    let o = quadlin(&["solve", "--bundle", s(&fixture("identity")), "--out", s(out.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out.path().join("plan.csv"));
    assert_eq!(header, ["beamlet_id", "intensity"]);
    let x: f64 = rows[0][1].parse().unwrap();
    assert!((x - 70.0).abs() <= 1e-4, "{x}");
    for f in ["dose.csv", "objective.json", "diagnostics.csv", "diagnostics.json", "model_summary.json"] {
        assert!(out.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn solve_missing_influence_names_the_file() {
    let out = tempfile::tempdir().unwrap();
    let o = quadlin(&["solve", "--bundle", s(&fixture("broken")), "--out", s(out.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("influence.csv"));
}

#[test]
fn solve_matches_checked_in_oracle_and_library() {
    let out = tempfile::tempdir().unwrap();
    let bundle = fixture("random_20x8");
    let o = quadlin(&["solve", "--bundle", s(&bundle), "--out", s(out.path())]);
    assert_eq!(o.status.code(), Some(0));
    let total = json(&out.path().join("objective.json"))["total"].as_f64().unwrap();
    let oracle = json(&bundle.join("oracle.json"))["objective"].as_f64().unwrap();
    assert!((total - oracle).abs() <= 1e-3 * oracle.abs(), "{total} vs {oracle}");

    // Every number equals the library result exactly.
    let case = load_patient(&bundle).unwrap();
    let m = quadlin::assemble_model(&case, &case.predicted_dose, &quadlin::Coefficients::default()).unwrap();
    let lib = quadlin::solve(&m, &quadlin::SolverConfig::default()).unwrap();
    assert_eq!(total, lib.breakdown.total);
    let (_, rows) = read_csv(&out.path().join("plan.csv"));
    let x: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(x, lib.fluence);
    assert_eq!(read_dose_csv(out.path().join("dose.csv"), case.n_voxels()).unwrap(), lib.dose);
    let (_, trace) = read_csv(&out.path().join("diagnostics.csv"));
    assert_eq!(trace.len(), lib.diagnostics.trace.len());
}

#[test]
fn iteration_budget_exit_code_keeps_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"solver": {"max_iters": 3}}"#).unwrap();
    let out = dir.path().join("out");
    let o = quadlin(&[
        "solve",
        "--bundle",
        s(&fixture("random_20x8")),
        "--config",
        s(&cfg),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(json(&out.join("objective.json"))["status"], "not_converged");
    assert!(out.join("plan.csv").is_file());

    fs::write(&cfg, r#"{"solver": {"max_itres": 3}}"#).unwrap();
    let o = quadlin(&["solve", "--bundle", s(&fixture("random_20x8")), "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn evaluate_reference_matches_hand_truth() {
    let out = tempfile::tempdir().unwrap();
    let o = quadlin(&[
        "evaluate",
        "--bundle",
        s(&fixture("criteria")),
        "--prediction",
        "reference",
        "--out",
        s(out.path()),
        "--format",
        "csv,json,svg",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let c = json(&out.path().join("criteria.json"));
    // brainstem 51 > 50, larynx mean 45, cord 45, mandible 80 > 73.5, PTV70 D99 67 >= 66.5.
    assert_eq!(c["oars"]["satisfied"], 2);
    assert_eq!(c["oars"]["applicable"], 4);
    assert_eq!(c["targets"]["percent"], 100.0);
    assert_eq!(c["all"]["percent"], 60.0);
    let verdict = |roi: &str| {
        c["results"]
            .as_array()
            .unwrap()
            .iter()
            .find(|r| r["roi"] == roi)
            .unwrap()["satisfied"]
            .as_bool()
            .unwrap()
    };
    assert!(!verdict("brainstem") && verdict("larynx") && verdict("spinal_cord") && !verdict("mandible"));
    assert!(verdict("ptv70"));
    for f in ["dvh_points.csv", "dvh_curves.csv", "criteria.csv", "dvh.json", "dvh.svg"] {
        assert!(out.path().join(f).is_file(), "{f}");
    }
    let (header, rows) = read_csv(&out.path().join("dvh_points.csv"));
    assert_eq!(header, ["roi", "roi_kind", "point", "dose_gy", "volume_limited"]);
    let mandible: Vec<_> = rows.iter().filter(|r| r[0] == "mandible").collect();
    assert_eq!(mandible.len(), 2);
}

#[test]
fn evaluate_zero_dose_and_length_errors() {
    let dir = tempfile::tempdir().unwrap();
    let zero = dir.path().join("zero.csv");
    fs::write(&zero, format!("dose_gy\n{}", "0\n".repeat(10))).unwrap();
    let out = dir.path().join("out");
    let o = quadlin(&["evaluate", "--bundle", s(&fixture("criteria")), "--dose", s(&zero), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let c = json(&out.join("criteria.json"));
    for r in c["results"].as_array().unwrap() {
        assert_eq!(r["satisfied"].as_bool().unwrap(), r["group"] == "oar", "{r}");
    }

    fs::write(&zero, "dose_gy\n0\n0\n").unwrap();
    let o = quadlin(&["evaluate", "--bundle", s(&fixture("criteria")), "--dose", s(&zero), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("length mismatch"));
    fs::write(&zero, "voxel_id,dose_gy\n12,1\n").unwrap();
    let o = quadlin(&["evaluate", "--bundle", s(&fixture("criteria")), "--dose", s(&zero), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn compare_with_itself_is_all_zero() {
    let out = tempfile::tempdir().unwrap();
    let o = quadlin(&[
        "compare",
        "--bundle",
        s(&fixture("random_20x8")),
        "--dose",
        "a=predicted",
        "--dose",
        "b=predicted",
        "--out",
        s(out.path()),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let (_, rows) = read_csv(&out.path().join("dvh_differences.csv"));
    assert!(!rows.is_empty());
    for r in &rows {
        assert_eq!(r[4], "0");
        assert_eq!(r[5], "0");
    }
}

#[test]
fn compare_rows_equal_library_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = fixture("random_20x8");
    let plan = dir.path().join("plan");
    assert_eq!(quadlin(&["solve", "--bundle", s(&bundle), "--out", s(&plan)]).status.code(), Some(0));
    let out = dir.path().join("cmp");
    let plan_dose = plan.join("dose.csv");
    let o = quadlin(&[
        "compare",
        "--bundle",
        s(&bundle),
        "--dose",
        "prediction=predicted",
        "--dose",
        &format!("plan={}", s(&plan_dose)),
        "--dose",
        "alt",
        "--out",
        s(&out),
        "--format",
        "csv,json,svg",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let case = load_patient(&bundle).unwrap();
    let planned = read_dose_csv(&plan_dose, case.n_voxels()).unwrap();
    let want = compare_dvh_points(&planned, &case.predicted_dose, &case.structures, &case.grid).unwrap();
    let (header, rows) = read_csv(&out.join("dvh_differences.csv"));
    // roi, point, three values, two (signed, abs) pairs.
    assert_eq!(header.len(), 2 + 3 + 4);
    assert_eq!(header[5..7], ["signed_diff_plan", "abs_diff_plan"]);
    assert_eq!(rows.len(), want.len());
    for (r, w) in rows.iter().zip(&want) {
        assert_eq!(r[0], w.roi);
        assert_eq!(r[1], w.point.label());
        let num = |i: usize| r[i].parse::<f64>().unwrap();
        assert_eq!((num(2), num(3), num(5), num(6)), (w.reference_gy, w.plan_gy, w.signed_gy, w.abs_gy));
    }

    let (header, rows) = read_csv(&out.join("satisfaction_comparison.csv"));
    assert_eq!(header, ["label", "applicable", "prediction", "plan", "alt"]);
    let lib = criteria_report(&planned, &case.structures, &case.grid).unwrap();
    let all = rows.iter().find(|r| r[0] == "All ROIs").unwrap();
    assert_eq!(all[3].parse::<f64>().unwrap(), lib.all.percent.unwrap());
    assert!(out.join("dvh_differences_plan.svg").is_file() && out.join("dvh_differences_alt.svg").is_file());

    let o = quadlin(&["compare", "--bundle", s(&bundle), "--dose", "predicted", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn batch_counts_rows_and_failures() {
    let out = tempfile::tempdir().unwrap();
    let o = quadlin(&["batch", "--manifest", s(&fixture("batch.json")), "--out", s(out.path()), "--workers", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let (_, rows) = read_csv(&out.path().join("batch_summary.csv"));
    assert_eq!(rows.len(), 4);
    let order: Vec<_> = rows.iter().map(|r| (r[1].as_str(), r[2].as_str())).collect();
    assert_eq!(
        order,
        [("random_20x8", "predicted"), ("random_20x8", "alt"), ("random_24x6", "predicted"), ("random_24x6", "alt")]
    );
    let (_, failures) = read_csv(&out.path().join("failures.csv"));
    assert!(failures.is_empty());
    let (header, matrix) = read_csv(&out.path().join("criteria_matrix.csv"));
    assert_eq!(header, ["label", "prediction", "plan"]);
    let labels: Vec<_> = matrix.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(labels[labels.len() - 3..], ["All OARs", "All Targets", "All ROIs"]);

    let out2 = tempfile::tempdir().unwrap();
    let o = quadlin(&["batch", "--manifest", s(&fixture("batch_broken.json")), "--out", s(out2.path())]);
    assert_eq!(o.status.code(), Some(0));
    let (_, failures) = read_csv(&out2.path().join("failures.csv"));
    assert_eq!(failures.len(), 1);
    assert_eq!(failures[0][0], "broken");
    let (_, rows2) = read_csv(&out2.path().join("batch_summary.csv"));
    assert_eq!(rows2, rows);
}

#[test]
fn validate_and_convert() {
    let o = quadlin(&["validate", "--bundle", s(&fixture("criteria"))]);
    assert_eq!(o.status.code(), Some(0));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["findings"], serde_json::json!([]));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad");
    fs::create_dir_all(&bad).unwrap();
    for f in ["meta.json", "influence.csv", "predicted_dose.csv"] {
        fs::copy(fixture("criteria").join(f), bad.join(f)).unwrap();
    }
    fs::write(bad.join("structures.csv"), "roi_name,roi_kind,level_gy,voxel_id\nptv70,ptv,70,1\nptv70,ptv,70,1\n").unwrap();
    let o = quadlin(&["validate", "--bundle", s(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("more than once"));

    let src = dir.path().join("pt_9");
    fs::create_dir_all(&src).unwrap();
    fs::write(src.join("voxel_dimensions.csv"), "4\n4\n4\n").unwrap();
    fs::write(src.join("PTV70.csv"), ",data\n0,\n1,\n").unwrap();
    fs::write(src.join("Larynx.csv"), ",data\n2,\n").unwrap();
    fs::write(src.join("dose.csv"), ",data\n0,70\n1,70\n2,20\n").unwrap();
    fs::write(src.join("dij.csv"), "voxel,beamlet,value\n0,0,1\n1,0,1\n2,0,0.3\n").unwrap();
    let out = dir.path().join("bundle");
    let o = quadlin(&["convert", "--src", s(&src), "--out", s(&out), "--dims", "2,2,1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let plan = dir.path().join("plan");
    assert_eq!(quadlin(&["solve", "--bundle", s(&out), "--out", s(&plan)]).status.code(), Some(0));
}

#[test]
fn synth_bundles_load() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("phantom");
    assert_eq!(quadlin(&["synth", "phantom", "--out", s(&out)]).status.code(), Some(0));
    let case = load_patient(&out).unwrap();
    assert_eq!((case.n_voxels(), case.n_beamlets()), (500, 50));
}
