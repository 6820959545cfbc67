use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn aitv(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aitv"))
        .args(args)
        .current_dir(cwd)
        .env("AITV_THREADS", "2")
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn brain(dir: &Path) {
    ok(&aitv(&["phantom", "--kind", "brain", "--output-dir", "ph"], dir));
}

#[test]
fn phantom_writes_image_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    brain(dir.path());
    for f in [
        "brain.png",
        "brain.txt",
        "brain_truth.png",
        "brain_truth.txt",
        "brain.json",
    ] {
        assert!(dir.path().join("ph").join(f).exists(), "{f}");
    }
    let truth = fs::read_to_string(dir.path().join("ph/brain_truth.txt")).unwrap();
    assert!(truth.starts_with("104 87\n"));
}

#[test]
fn degrade_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    brain(d);
    let args = |out: &'static str| {
        [
            "degrade",
            "--input",
            "ph/brain.png",
            "--peak",
            "127.5",
            "--blur",
            "gaussian:10x10:2",
            "--seed",
            "42",
            "--output",
            out,
        ]
    };
    ok(&aitv(&args("a.png"), d));
    ok(&aitv(&args("b.png"), d));
    for ext in ["png", "txt"] {
        assert_eq!(
            fs::read(d.join(format!("a.{ext}"))).unwrap(),
            fs::read(d.join(format!("b.{ext}"))).unwrap()
        );
    }
    let sidecar: serde_json::Value = serde_json::from_slice(&fs::read(d.join("a.json")).unwrap()).unwrap();
    assert_eq!(sidecar["spec"]["blur"], "gaussian:10x10:2");
    assert_eq!(sidecar["spec"]["peak"], 127.5);
    assert_eq!(sidecar["scale"], 127.5 / 154.0);
}

#[test]
fn missing_peak_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = aitv(
        &["degrade", "--input", "x.png", "--seed", "1", "--output", "y.png"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--peak"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let missing = aitv(&["segment", "--input", "nope.png", "--k", "2", "--output-dir", "o"], d);
    assert_eq!(missing.status.code(), Some(3));
    brain(d);
    let bad_alpha = aitv(
        &[
            "segment",
            "--input",
            "ph/brain.txt",
            "--k",
            "4",
            "--alpha",
            "2",
            "--output-dir",
            "o",
        ],
        d,
    );
    assert_eq!(bad_alpha.status.code(), Some(2));
    let no_k = aitv(&["segment", "--input", "ph/brain.txt", "--output-dir", "o"], d);
    assert_eq!(no_k.status.code(), Some(2));
    let threads = Command::new(env!("CARGO_BIN_EXE_aitv"))
        .args(["phantom", "--kind", "brain", "--output-dir", "p"])
        .current_dir(d)
        .env("AITV_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(2));
}

#[test]
fn segment_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    brain(d);
    ok(&aitv(
        &[
            "degrade",
            "--input",
            "ph/brain.png",
            "--peak",
            "P/8",
            "--seed",
            "0",
            "--output",
            "f.png",
        ],
        d,
    ));
    ok(&aitv(
        &[
            "segment",
            "--input",
            "f.txt",
            "--method",
            "aitv-sat",
            "--k",
            "4",
            "--lambda",
            "4",
            "--mu",
            "1",
            "--alpha",
            "0.6",
            "--output-dir",
            "seg",
        ],
        d,
    ));
    for f in [
        "u.png",
        "u.txt",
        "labels.png",
        "labels.txt",
        "recon.png",
        "recon.txt",
        "trace.csv",
        "centroids.json",
        "manifest.json",
    ] {
        assert!(d.join("seg").join(f).exists(), "{f}");
    }
    let trace = fs::read_to_string(d.join("seg/trace.csv")).unwrap();
    assert!(trace.starts_with("k,rel_err,res_Au_v,res_grad_w,lagrangian,energy\n"));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(d.join("seg/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["solver"]["lambda"], 4.0);
    assert_eq!(manifest["config"]["kmeans"]["seed"], 0);

    ok(&aitv(
        &[
            "evaluate",
            "--pred",
            "seg/labels.txt",
            "--truth",
            "ph/brain_truth.txt",
            "--recon",
            "seg/recon.txt",
            "--reference",
            "ph/brain.txt",
            "--sidecar",
            "f.json",
            "--method",
            "aitv-sat",
            "--output-dir",
            "ev",
        ],
        d,
    ));
    let dice = fs::read_to_string(d.join("ev/dice.csv")).unwrap();
    let rows: Vec<&str> = dice.lines().collect();
    assert_eq!(rows[0], "image,method,region,dice");
    assert_eq!(rows.len(), 5);
    for r in &rows[1..] {
        let v: f64 = r.rsplit(',').next().unwrap().parse().unwrap();
        assert!(v > 0.9, "{r}");
    }
    let psnr = fs::read_to_string(d.join("ev/psnr.csv")).unwrap();
    assert!(psnr.starts_with("image,method,psnr_paper,psnr_standard,runtime_sec\n"));
}

#[test]
fn tv_notes_that_alpha_is_ignored() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    brain(d);
    let out = aitv(
        &[
            "segment",
            "--input",
            "ph/brain.txt",
            "--method",
            "tv-sat",
            "--k",
            "4",
            "--output-dir",
            "tv",
        ],
        d,
    );
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("ignores alpha"));
}

#[test]
fn evaluate_identical_swapped_and_without_truth() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("truth.txt"), "2 3\n1 1 2\n1 2 2\n").unwrap();
    fs::write(d.join("swapped.txt"), "2 3\n2 2 1\n2 1 1\n").unwrap();
    for pred in ["truth.txt", "swapped.txt"] {
        ok(&aitv(
            &[
                "evaluate",
                "--pred",
                pred,
                "--truth",
                "truth.txt",
                "--image",
                "t",
                "--output-dir",
                "ev",
            ],
            d,
        ));
        let csv = fs::read_to_string(d.join("ev/dice.csv")).unwrap();
        assert_eq!(
            csv,
            "image,method,region,dice\nt,unknown,1,1.000000\nt,unknown,2,1.000000\n"
        );
    }
    fs::write(d.join("ref.txt"), "2 2\n0 1\n1 0\n").unwrap();
    fs::write(d.join("rec.txt"), "2 2\n0.1 0.9\n0.9 0.1\n").unwrap();
    let out = aitv(
        &[
            "evaluate",
            "--pred",
            "truth.txt",
            "--recon",
            "rec.txt",
            "--reference",
            "ref.txt",
            "--output-dir",
            "p",
        ],
        d,
    );
    ok(&out);
    assert!(!d.join("p/dice.csv").exists());
    let psnr = fs::read_to_string(d.join("p/psnr.csv")).unwrap();
    // 20 log10(4 / 0.04) = 40 and 20 log10(1 / 0.1) = 20
    assert!(psnr.lines().nth(1).unwrap().contains(",40.000000,20.000000,"), "{psnr}");
    let mismatch = aitv(
        &[
            "evaluate",
            "--pred",
            "rec.txt",
            "--truth",
            "truth.txt",
            "--output-dir",
            "x",
        ],
        d,
    );
    assert_eq!(mismatch.status.code(), Some(3));
}

#[test]
fn experiment_counts_rows_and_records_failures() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    brain(d);
    fs::write(
        d.join("batch.json"),
        r#"{
  "images": ["phantom:brain:0", "phantom:brain:1", {"path": "ph/brain.png", "truth": "ph/brain_truth.txt"}],
  "cases": [{"degrade": "P/8", "lambda": 4.0, "mu": 1.0, "alpha": 0.6}],
  "methods": ["aitv-sat", "tv-sat", "aitv-slat"],
  "noise_seeds": [0]
}"#,
    )
    .unwrap();
    ok(&aitv(
        &["experiment", "--config", "batch.json", "--output-dir", "out"],
        d,
    ));
    let psnr = fs::read_to_string(d.join("out/psnr.csv")).unwrap();
    assert_eq!(psnr.lines().count(), 1 + 3 * 2);
    assert!(
        psnr.lines().skip(1).all(|l| l.ends_with(',')),
        "runtime column is empty by default"
    );
    let dice = fs::read_to_string(d.join("out/dice.csv")).unwrap();
    assert_eq!(dice.lines().count(), 1 + 3 * 2 * 4);
    assert!(dice.contains("brain/P/8/seed0,tv-sat,region3,"));
    let failures = fs::read_to_string(d.join("out/failures.csv")).unwrap();
    assert_eq!(failures.lines().count(), 1 + 3);
    assert!(failures.lines().skip(1).all(|l| l.contains(",aitv-slat,")));
    let summary = fs::read_to_string(d.join("out/summary.csv")).unwrap();
    assert!(summary.starts_with("image,method,metric,mean,std,n\n"));
    // 3 images x 2 methods x (4 regions + 2 PSNR variants), single seed so no std
    assert_eq!(summary.lines().count(), 1 + 3 * 2 * 6);
    assert!(summary.lines().skip(1).all(|l| l.ends_with(",,1")));
}

#[test]
fn experiment_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.json"), r#"{"images": [], "cases": [], "methods": []}"#).unwrap();
    assert_eq!(
        aitv(&["experiment", "--config", "bad.json", "--output-dir", "o"], d)
            .status
            .code(),
        Some(2)
    );
    fs::write(
        d.join("typo.json"),
        r#"{"images": ["phantom:brain:0"], "cases": [{"degrade": "P/8", "lamda": 1}], "methods": ["tv-sat"]}"#,
    )
    .unwrap();
    assert_eq!(
        aitv(&["experiment", "--config", "typo.json", "--output-dir", "o"], d)
            .status
            .code(),
        Some(2)
    );
}
