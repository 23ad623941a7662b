use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn lsnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsnet")).args(args).output().unwrap()
}

fn ok_report(args: &[&str]) -> Value {
    let out = lsnet(args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    validate(&report);
    report
}

fn validate(report: &Value) {
    let schema_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/report.schema.json");
    let schema: Value = serde_json::from_slice(&std::fs::read(schema_path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(report).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "schema violations: {errors:?}");
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn loss_of_identical_offsets_is_zero() {
    let r = ok_report(&["loss", "--pred", "1,0,0,3", "--target", "1,0,0,3"]);
    assert_eq!(r["summary"]["value"], json!(0.0));
    assert_eq!(r["config_echo"]["seed"], Value::Null);
}

#[test]
fn loss_reports_per_landmark_breakdown() {
    let r = ok_report(&[
        "loss", "--pred", "0,2,0,2", "--target", "0,1,0,1", "--pred", "1,0,0,0", "--target", "1,0,0,0",
    ]);
    let rows = r["rows"].as_array().unwrap();
    assert_eq!(rows[0]["similarity"], json!(0.5));
    assert_eq!(rows[0]["loss"], json!(0.5));
    assert_eq!(rows[1]["loss"], json!(0.0));
    assert_eq!(r["summary"]["value"], json!(0.25));
}

#[test]
fn loss_softens_target_when_alpha_given() {
    // target [0,10,0,0] softens to [2,10,0,0]
    let r = ok_report(&["loss", "--pred", "2,10,0,0", "--target", "0,10,0,0", "--alpha", "0.2"]);
    assert_eq!(r["summary"]["value"], json!(0.0));
}

#[test]
fn giou_accepts_rectangles_only() {
    let rect = ["0,0,2,0", "3,0,0,0", "0,0,0,1", "0,4,0,0"];
    let mut args = vec!["loss", "--kind", "giou"];
    for q in rect {
        args.extend(["--pred", q, "--target", q]);
    }
    let r = ok_report(&args);
    assert_eq!(r["rows"][0]["similarity"], json!(1.0));

    let out = lsnet(&["loss", "--kind", "giou", "--pred", "1,0,0,1", "--target", "1,0,0,1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("rectangle"), "{}", stderr(&out));
}

#[test]
fn malformed_flags_are_usage_errors() {
    for args in [
        vec!["loss", "--pred", "1,2,3", "--target", "1,2,3,4"],
        vec!["loss", "--pred", "1,2,x,4", "--target", "1,2,3,4"],
        vec!["loss", "--pred", "1,0,0,0", "--target", "1,0,0,0", "--target", "1,0,0,0"],
        vec!["loss", "--pred", "-1,0,0,0", "--target", "1,0,0,0"],
        vec!["loss", "--pred", "1,0,0,0", "--target", "1,0,0,0", "--kind", "dice"],
        vec!["fit", "--alpha", "1.5"],
        vec!["fit", "--scales", "1,-2"],
        vec!["quantize", "--n", "2"],
        vec!["quantize", "--max-dim", "4"],
        vec!["synth", "--count", "0", "--output", "/dev/null"],
        vec!["frobnicate"],
    ] {
        let out = lsnet(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn fit_reports_full_trajectory() {
    let r = ok_report(&["fit", "--seed", "3"]);
    let rows = r["rows"].as_array().unwrap();
    let steps = r["summary"]["steps_taken"].as_u64().unwrap() as usize;
    assert_eq!(rows.len(), steps + 1);
    assert_eq!(r["summary"]["converged"], json!(true));
    let echo = &r["config_echo"];
    for key in ["seed", "alpha", "step_size", "max_steps", "optimizer", "loss_kind", "role", "scale", "init"] {
        assert!(!echo[key].is_null(), "missing {key}");
    }
}

#[test]
fn sweep_ratio_separates_losses() {
    let r = ok_report(&["fit", "--scales", "1,1000"]);
    let ratio = r["summary"]["initial_loss_ratio"].as_f64().unwrap();
    assert!((ratio - 1.0).abs() <= 1e-6, "{ratio}");
    let r = ok_report(&["fit", "--scales", "1,1000", "--loss", "smooth-l1"]);
    assert!(r["summary"]["initial_loss_ratio"].as_f64().unwrap() >= 100.0);
}

#[test]
fn fit_giou_on_extreme_target_fails() {
    let out = lsnet(&["fit", "--loss", "giou", "--role", "extreme"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("rectangle"));
    ok_report(&["fit", "--loss", "giou", "--role", "rectangle"]);
    ok_report(&["fit", "--role", "contour", "--landmarks", "18"]);
}

#[test]
fn compare_runs_every_setup() {
    let r = ok_report(&["compare", "--corpus-size", "4"]);
    assert_eq!(r["rows"].as_array().unwrap().len(), 5);
}

#[test]
fn quantize_synthetic_ap_is_monotone() {
    let r = ok_report(&["quantize", "--synth-count", "60", "--synth-seed", "2", "--max-dim", "256"]);
    let ap: Vec<f64> = r["rows"].as_array().unwrap().iter().map(|x| x["ap"].as_f64().unwrap()).collect();
    assert_eq!(ap.len(), 3);
    assert!(ap.windows(2).all(|w| w[0] <= w[1]), "{ap:?}");
}

#[test]
fn quantize_with_three_landmarks_still_reports() {
    let r = ok_report(&["quantize", "--synth-count", "20", "--n", "3", "--max-dim", "128"]);
    let row = &r["rows"][0];
    assert_eq!(row["n"], json!(3));
    assert!(row["ap"].as_f64().unwrap() < 0.5);
}

#[test]
fn unreadable_inputs_are_runtime_failures() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let out = lsnet(&["quantize", "--annotations", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, b"{\"annotations\": [").unwrap();
    let out = lsnet(&["quantize", "--annotations", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("byte"));
}

#[test]
fn synth_writes_a_readable_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("stars.json");
    let c = corpus.to_str().unwrap();
    let r = ok_report(&["synth", "--count", "30", "--family", "star", "--output", c]);
    assert!(r["summary"]["multi_crossing_instances"].as_u64().unwrap() > 0);
    assert!(r["summary"]["note"].as_str().unwrap().contains("multi-crossing instances present"));
    let q = ok_report(&["quantize", "--annotations", c, "--n", "18", "--max-dim", "128"]);
    assert_eq!(q["rows"][0]["instances"], json!(30));
    assert_eq!(q["config_echo"]["seed"], Value::Null);
}

#[test]
fn csv_sidecar_has_fixed_headers() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("rows.csv");
    let c = csv.to_str().unwrap();
    let cases: [(&[&str], &str); 4] = [
        (&["loss", "--pred", "0,2,0,2", "--target", "0,1,0,1"], "landmark,loss,similarity"),
        (&["fit", "--max-steps", "3"], "step,loss"),
        (&["quantize", "--synth-count", "5", "--max-dim", "64"], "n,ap,mean_iou,instances,skipped"),
        (&["compare", "--corpus-size", "2"], "loss_kind,box_style,optimizer,runs,convergence_rate,mean_final_iou"),
    ];
    for (args, header) in cases {
        let mut full = args.to_vec();
        full.extend(["--csv", c]);
        let report = ok_report(&full);
        let text = std::fs::read_to_string(&csv).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(header));
        assert_eq!(lines.count(), report["rows"].as_array().unwrap().len());
    }
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("loss_kind"));
}

#[test]
fn csv_floats_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("rows.csv");
    let r = ok_report(&["fit", "--max-steps", "20", "--csv", csv.to_str().unwrap()]);
    let text = std::fs::read_to_string(&csv).unwrap();
    for (line, row) in text.lines().skip(1).zip(r["rows"].as_array().unwrap()) {
        let loss: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(loss, row["loss"].as_f64().unwrap());
    }
}

#[test]
fn report_flag_writes_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let out = lsnet(&["fit", "--max-steps", "2", "--report", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let report: Value = serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap();
    validate(&report);
}

/// (instance id, bbox side, labeled keypoints as (x, y, visibility)).
type Person = (u64, f64, Vec<(f64, f64, u8)>);

fn keypoint_file(path: &Path, people: &[Person]) {
    let annotations: Vec<Value> = people
        .iter()
        .map(|(id, side, pts)| {
            let mut flat = vec![0.0; 51];
            for (i, &(x, y, v)) in pts.iter().enumerate() {
                flat[3 * i] = x;
                flat[3 * i + 1] = y;
                flat[3 * i + 2] = f64::from(v);
            }
            json!({
                "id": id,
                "image_id": 1,
                "category_id": 1,
                "iscrowd": 0,
                "bbox": [0.0, 0.0, side, side],
                "segmentation": [[0.0, 0.0, *side, 0.0, *side, *side, 0.0, *side]],
                "keypoints": flat,
                "num_keypoints": pts.iter().filter(|p| p.2 > 0).count(),
            })
        })
        .collect();
    let doc = json!({
        "images": [{"id": 1, "width": 640, "height": 480}],
        "annotations": annotations,
        "categories": [{"id": 1, "name": "person"}],
    });
    std::fs::write(path, serde_json::to_vec(&doc).unwrap()).unwrap();
}

#[test]
fn oks_command() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt.json");
    let pred = dir.path().join("pred.json");
    let s = 50.0;
    let kappa0 = 2.0 * 0.026;
    keypoint_file(&gt, &[(1, s, vec![(10.0, 10.0, 2)]), (2, s, vec![(20.0, 20.0, 2), (30.0, 5.0, 1)])]);
    let (g, p) = (gt.to_str().unwrap(), pred.to_str().unwrap());

    let r = ok_report(&["oks", "--pred", g, "--gt", g]);
    assert!(r["rows"].as_array().unwrap().iter().all(|x| x["oks"] == json!(1.0)));
    assert_eq!(r["summary"]["mean_oks"], json!(1.0));

    keypoint_file(
        &pred,
        &[(1, s, vec![(10.0 + s * kappa0, 10.0, 2)]), (2, s, vec![(20.0, 20.0, 2), (30.0, 5.0, 1)])],
    );
    let r = ok_report(&["oks", "--pred", p, "--gt", g]);
    let v = r["rows"][0]["oks"].as_f64().unwrap();
    assert!((v - (-0.5f64).exp()).abs() < 1e-9, "{v}");
    assert!((v - 0.6065).abs() < 1e-4);

    keypoint_file(&pred, &[(1, s, vec![(10.0, 10.0, 2)]), (7, s, vec![(20.0, 20.0, 2)])]);
    let out = lsnet(&["oks", "--pred", p, "--gt", g]);
    assert_eq!(out.status.code(), Some(1));
    let msg = stderr(&out);
    assert!(msg.contains('2') && msg.contains('7'), "{msg}");
}
