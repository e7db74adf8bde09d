//! End-to-end exercise of the command-line surface on a tiny dataset:
//! synth -> preprocess -> train -> segment -> profile -> evaluate ->
//! report -> grade -> agreement, plus exit-code conventions.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rgc-oct"))
}

fn workdir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("rgc-oct-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawn rgc-oct");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn full_command_line_round_trip() {
    let dir = workdir();
    let data = dir.join("data");
    let artifacts = dir.join("artifacts");

    // synth
    run_ok(bin().args([
        "synth",
        "--out",
        data.to_str().unwrap(),
        "--healthy",
        "3",
        "--early",
        "3",
        "--advanced",
        "3",
        "--height",
        "128",
        "--width",
        "128",
        "--seed",
        "5",
    ]));
    let manifest = data.join("manifest.csv");
    assert!(manifest.exists());
    assert!(data.join("scan000.png").exists());
    assert!(data.join("scan000.meta.json").exists());

    // preprocess one scan
    let retina = dir.join("retina.png");
    let rmask = dir.join("retina_mask.png");
    let traces = dir.join("traces.csv");
    run_ok(bin().args([
        "preprocess",
        "--in",
        data.join("scan000.png").to_str().unwrap(),
        "--out",
        retina.to_str().unwrap(),
        "--mask",
        rmask.to_str().unwrap(),
        "--traces",
        traces.to_str().unwrap(),
        "--tau",
        "20",
        "--sigma",
        "1.5",
    ]));
    assert!(retina.exists() && rmask.exists());
    let trace_text = std::fs::read_to_string(&traces).unwrap();
    assert!(trace_text.starts_with("col,ilm,gcl,ipl,choroid,valid\n"));

    // train (tiny budget: mechanics only)
    let model = dir.join("model.bin");
    let history = dir.join("history.csv");
    run_ok(bin().args([
        "train",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
        "--history",
        history.to_str().unwrap(),
        "--net-height",
        "128",
        "--net-width",
        "128",
        "--epochs",
        "1",
        "--iters-per-epoch",
        "2",
        "--batch-size",
        "2",
        "--seed",
        "5",
    ]));
    let model_bytes = std::fs::read(&model).unwrap();
    assert_eq!(&model_bytes[..4], b"RGCN");
    assert!(std::fs::read_to_string(&history)
        .unwrap()
        .starts_with("epoch,seg_loss,cls_loss,total\n"));

    // segment one scan with the trained model
    let pred = dir.join("pred_mask.png");
    run_ok(bin().args([
        "segment",
        "--model",
        model.to_str().unwrap(),
        "--in",
        data.join("scan001.png").to_str().unwrap(),
        "--out",
        pred.to_str().unwrap(),
        "--net-height",
        "128",
        "--net-width",
        "128",
    ]));
    assert!(pred.exists());

    // profile a reference mask (the one-epoch model's prediction may have
    // no valid columns, which is a legitimate feature-extraction error)
    let profile = dir.join("profile.csv");
    let features = dir.join("features.json");
    run_ok(bin().args([
        "profile",
        "--mask",
        data.join("scan001_mask.png").to_str().unwrap(),
        "--out",
        profile.to_str().unwrap(),
        "--features",
        features.to_str().unwrap(),
        "--scale",
        "3.0",
    ]));
    assert!(std::fs::read_to_string(&profile)
        .unwrap()
        .starts_with("col,rnfl_um,gcip_um,gcc_um,valid\n"));

    // evaluate end to end (same tiny budget)
    run_ok(bin().args([
        "evaluate",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        artifacts.to_str().unwrap(),
        "--net-height",
        "128",
        "--net-width",
        "128",
        "--epochs",
        "1",
        "--iters-per-epoch",
        "2",
        "--batch-size",
        "2",
        "--seed",
        "5",
        "--axial-scale",
        "3.0",
    ]));
    let report_path = artifacts.join("report.json");
    assert!(report_path.exists());
    assert!(artifacts.join("predictions.csv").exists());
    assert!(artifacts.join("model.bin").exists());
    let report_json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert!(report_json["confusion"]["tp"].is_number());
    assert!(report_json["seg"]["per_class"]["rnfl"].is_object());
    assert!(report_json["meta"]["seed"].is_number());

    // report: recomputing metrics from cached artifacts is byte-identical
    let regenerated = dir.join("report2.json");
    run_ok(bin().args([
        "report",
        "--manifest",
        manifest.to_str().unwrap(),
        "--artifacts",
        artifacts.to_str().unwrap(),
        "--out",
        regenerated.to_str().unwrap(),
    ]));
    let original = std::fs::read(&report_path).unwrap();
    let again = std::fs::read(&regenerated).unwrap();
    assert_eq!(original, again, "metrics stage must be byte-reproducible");

    // grade: svm model trained in-library, features from the evaluate run
    let svm_path = dir.join("svm.json");
    write_fixture_svm(&svm_path);
    let feature_file = std::fs::read_dir(artifacts.join("features"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let stdout = run_ok(bin().args([
        "grade",
        "--model",
        svm_path.to_str().unwrap(),
        "--features",
        feature_file.to_str().unwrap(),
    ]));
    let verdict: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    assert!(verdict["grade"].is_string());

    // agreement (no clinician columns in this manifest: all undefined)
    let agreement = dir.join("agreement.json");
    run_ok(bin().args([
        "agreement",
        "--manifest",
        manifest.to_str().unwrap(),
        "--predictions",
        artifacts.join("predictions.csv").to_str().unwrap(),
        "--out",
        agreement.to_str().unwrap(),
    ]));
    let rows: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&agreement).unwrap()).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 4);
}

fn write_fixture_svm(path: &Path) {
    use rgc_oct::grading::{svm_train, Severity};
    use rgc_oct::profiles::{grade_features, thickness};
    use rgc_oct::rng::Rng;
    use rgc_oct::scan::{generate_synthetic, GradeLabel, SynthConfig};

    let mut rng = Rng::seed_from_u64(2);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (grade, sev) in [
        (GradeLabel::EarlyGlaucoma, Severity::Early),
        (GradeLabel::AdvancedGlaucoma, Severity::Advanced),
    ] {
        for _ in 0..10 {
            let cfg = SynthConfig::for_grade(grade, 128, 96, 3.0, 0.0, None, &mut rng);
            let synth = generate_synthetic(&cfg).unwrap();
            features.push(grade_features(&thickness(&synth.mask, 3.0).unwrap()).unwrap());
            labels.push(sev);
        }
    }
    let model = svm_train(&features, &labels, 1e-3, 200, 2).unwrap();
    model.save_json(path).unwrap();
}

#[test]
fn exit_codes_follow_the_convention() {
    let dir = workdir();
    // Validation error: nonsensical train fraction.
    let out = bin()
        .args([
            "evaluate",
            "--manifest",
            dir.join("does-not-matter.csv").to_str().unwrap(),
            "--out",
            dir.join("x").to_str().unwrap(),
            "--train-fraction",
            "1.5",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "validation errors exit 2");

    // Stage failure: missing input file.
    let out = bin()
        .args([
            "profile",
            "--mask",
            dir.join("missing-mask.png").to_str().unwrap(),
            "--out",
            dir.join("p.csv").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "i/o failures exit 3");
}
