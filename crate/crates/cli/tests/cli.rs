//! Drives the installed binary the way an operator would: one process per
//! invocation, asserting on files, stdout, and exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use injury_surrogate::campaign::{export_csv, load_fixture};
use injury_surrogate::gp::load_model;

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_injury-surrogate"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn injury-surrogate")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Ledger CSV holding only the first 25 fixture cases (the screening grid).
fn write_screening_ledger(dir: &Path) {
    fs::create_dir_all(dir.join("out")).unwrap();
    let grid = load_fixture().filtered(|r| r.case_id <= 25);
    export_csv(&grid, dir.join("out/ledger.csv")).unwrap();
}

/// Results CSV holding the two refinement cases from the bundled campaign.
fn write_refinement_results(dir: &Path) {
    let extra = load_fixture().filtered(|r| r.case_id > 25);
    export_csv(&extra, dir.join("results.csv")).unwrap();
}

#[test]
fn export_round_trips_through_ingest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_in(tmp.path(), &["export", "--fixture"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let exported = fs::read(tmp.path().join("out/ledger.csv")).unwrap();
    let mut reference = Vec::new();
    let ref_path = tmp.path().join("reference.csv");
    export_csv(&load_fixture(), &ref_path).unwrap();
    reference.extend(fs::read(&ref_path).unwrap());
    assert_eq!(exported, reference, "CLI export differs from the library");

    let sidecar = fs::read_to_string(tmp.path().join("out/ledger.csv.meta")).unwrap();
    assert!(sidecar.contains("schema_version=1"), "{sidecar}");
    assert!(sidecar.contains("torso_angle_deg_range=-10,10"), "{sidecar}");

    let out = run_in(tmp.path(), &["ingest", "out/ledger.csv", "--out", "second"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let reingested = fs::read(tmp.path().join("second/ledger.csv")).unwrap();
    assert_eq!(reingested, exported, "ingest changed the bytes");

    let out = run_in(tmp.path(), &["export"]);
    assert_eq!(code(&out), 2, "export without --fixture must fail");
}

#[test]
fn a_single_run_campaign_cannot_be_fitted() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("one.csv"),
        "case,torso_angle_deg,dring_z,hic15,a_t1_max\n1,0,0,20,14\n",
    )
    .unwrap();
    let out = run_in(tmp.path(), &["fit", "--ledger", "one.csv", "--metric", "hic15"]);
    assert_eq!(code(&out), 2);
    assert!(
        stderr(&out).contains("at least 2"),
        "message must name the requirement: {}",
        stderr(&out)
    );
}

#[test]
fn refitting_with_one_seed_reproduces_the_model_file() {
    let tmp = tempfile::tempdir().unwrap();
    for dir in ["a", "b"] {
        let out = run_in(
            tmp.path(),
            &["fit", "--fixture", "--metric", "hic15", "--out", dir],
        );
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    let a = fs::read(tmp.path().join("a/model-hic15.json")).unwrap();
    let b = fs::read(tmp.path().join("b/model-hic15.json")).unwrap();
    assert_eq!(a, b, "same seed, different model file");

    // The stored model must predict without refitting.
    let loaded = load_model(tmp.path().join("a/model-hic15.json")).unwrap();
    assert_eq!(loaded.model.training_len(), 27);
    assert_eq!(loaded.case_ids.len(), 27);
}

#[test]
fn the_config_file_steers_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("run.cfg"), "metric = hic15\nout = cfgdir\n").unwrap();

    // Config file alone: artifacts land in cfgdir for hic15.
    let out = run_in(
        tmp.path(),
        &["--config", "run.cfg", "fit", "--fixture"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(tmp.path().join("cfgdir/model-hic15.json").exists());
    assert!(!tmp.path().join("cfgdir/model-a_t1_max.json").exists());

    // Flags override both the metric and the directory.
    let out = run_in(
        tmp.path(),
        &[
            "--config",
            "run.cfg",
            "fit",
            "--fixture",
            "--metric",
            "a_t1_max",
            "--out",
            "flagdir",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(tmp.path().join("flagdir/model-a_t1_max.json").exists());
    assert!(!tmp.path().join("flagdir/model-hic15.json").exists());

    // Unknown keys and malformed values are usage errors that name the line.
    fs::write(tmp.path().join("bad.cfg"), "seed = 1\nwat = 2\n").unwrap();
    let out = run_in(tmp.path(), &["--config", "bad.cfg", "export", "--fixture"]);
    assert_eq!(code(&out), 2);
    let msg = stderr(&out);
    assert!(msg.contains("line 2") && msg.contains("unknown key"), "{msg}");
}

#[test]
fn propose_writes_a_ranked_pending_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    write_screening_ledger(tmp.path());
    let out = run_in(tmp.path(), &["fit", "--metric", "a_t1_max"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let out = run_in(tmp.path(), &["propose", "--metric", "a_t1_max", "--k", "3"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let pending =
        injury_surrogate::adaptive::read_pending_csv(tmp.path().join("out/pending-a_t1_max.csv"))
            .unwrap();
    assert_eq!(pending.len(), 3);
    assert_eq!(
        pending.iter().map(|c| c.case_id).collect::<Vec<_>>(),
        vec![26, 27, 28],
        "ids continue after the model's training cases"
    );
    let training = load_fixture().filtered(|r| r.case_id <= 25).inputs();
    for c in &pending {
        assert!(
            !training.contains(&c.point),
            "proposed a point that is already a training run: {:?}",
            c.point
        );
    }

    // Asking for more points than the pool holds is a usage error.
    let out = run_in(tmp.path(), &["propose", "--metric", "a_t1_max", "--k", "40"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));

    // Proposals for both metrics at once make no sense.
    let out = run_in(tmp.path(), &["propose", "--metric", "both"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn check_insists_on_every_pending_point() {
    let tmp = tempfile::tempdir().unwrap();
    write_screening_ledger(tmp.path());
    let out = run_in(tmp.path(), &["fit", "--metric", "a_t1_max"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = run_in(tmp.path(), &["propose", "--metric", "a_t1_max", "--k", "2"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    // A results file that answers only one of the two pending cases.
    let pending =
        injury_surrogate::adaptive::read_pending_csv(tmp.path().join("out/pending-a_t1_max.csv"))
            .unwrap();
    let first = pending[0].point;
    fs::write(
        tmp.path().join("partial.csv"),
        format!(
            "case,torso_angle_deg,dring_z,hic15,a_t1_max\n26,{},{},21,14\n",
            first.torso_angle_deg, first.dring_z
        ),
    )
    .unwrap();
    let out = run_in(
        tmp.path(),
        &[
            "check",
            "--metric",
            "a_t1_max",
            "--results",
            "partial.csv",
            "--pending",
            "out/pending-a_t1_max.csv",
        ],
    );
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("missing pending case 27"), "{}", stderr(&out));
}

#[test]
fn the_accuracy_gate_drives_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    write_screening_ledger(tmp.path());
    write_refinement_results(tmp.path());
    let out = run_in(tmp.path(), &["fit", "--metric", "a_t1_max"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    // The screening model misses the refinement cases: gate failure.
    let out = run_in(
        tmp.path(),
        &["check", "--metric", "a_t1_max", "--results", "results.csv"],
    );
    assert_eq!(code(&out), 3, "{}{}", stdout(&out), stderr(&out));
    assert!(stdout(&out).contains("passed = false"), "{}", stdout(&out));

    // A generous gate turns the same comparison into a pass.
    let out = run_in(
        tmp.path(),
        &[
            "check",
            "--metric",
            "a_t1_max",
            "--results",
            "results.csv",
            "--threshold-pct",
            "50",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("passed = true"));
}

#[test]
fn augment_grows_the_ledger_and_model_once() {
    let tmp = tempfile::tempdir().unwrap();
    write_screening_ledger(tmp.path());
    write_refinement_results(tmp.path());
    let out = run_in(tmp.path(), &["fit", "--metric", "a_t1_max"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let out = run_in(
        tmp.path(),
        &[
            "augment",
            "--metric",
            "a_t1_max",
            "--results",
            "results.csv",
            "--augment-all",
        ],
    );
    assert_eq!(code(&out), 0, "{}{}", stdout(&out), stderr(&out));
    assert!(stdout(&out).contains("absorbed_cases = 26, 27"), "{}", stdout(&out));

    let ledger = fs::read_to_string(tmp.path().join("out/ledger.csv")).unwrap();
    assert_eq!(ledger.lines().count(), 28, "header plus 27 runs");
    let loaded = load_model(tmp.path().join("out/model-a_t1_max.json")).unwrap();
    assert_eq!(loaded.model.training_len(), 27);
    assert_eq!(loaded.case_ids.last(), Some(&27));

    // Absorbing the same results again changes nothing.
    let out = run_in(
        tmp.path(),
        &[
            "augment",
            "--metric",
            "a_t1_max",
            "--results",
            "results.csv",
            "--augment-all",
        ],
    );
    assert_eq!(code(&out), 0, "{}{}", stdout(&out), stderr(&out));
    assert!(stdout(&out).contains("absorbed_cases = none"), "{}", stdout(&out));
    let unchanged = fs::read_to_string(tmp.path().join("out/ledger.csv")).unwrap();
    assert_eq!(unchanged, ledger);
}

#[test]
fn conflicting_case_ids_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    write_screening_ledger(tmp.path());
    let out = run_in(tmp.path(), &["fit", "--metric", "a_t1_max"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    // Case 10 already exists in the campaign with a different input.
    fs::write(
        tmp.path().join("clash.csv"),
        "case,torso_angle_deg,dring_z,hic15,a_t1_max\n10,-7.5,-3.75,21,15\n",
    )
    .unwrap();
    let out = run_in(
        tmp.path(),
        &[
            "augment",
            "--metric",
            "a_t1_max",
            "--results",
            "clash.csv",
            "--augment-all",
        ],
    );
    assert_eq!(code(&out), 2, "{}{}", stdout(&out), stderr(&out));
    assert!(stderr(&out).contains("conflicts"), "{}", stderr(&out));
}

#[test]
fn stats_artifacts_are_reproducible_and_valid() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("fast.cfg"), "lhs_n = 400\nmetric = hic15\n").unwrap();
    let out = run_in(tmp.path(), &["--config", "fast.cfg", "fit", "--fixture"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    for dir in ["s1", "s2"] {
        let out = run_in(
            tmp.path(),
            &[
                "--config",
                "fast.cfg",
                "stats",
                "--model",
                "out/model-hic15.json",
                "--out",
                dir,
            ],
        );
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    for file in ["summary-hic15.txt", "histogram-hic15.csv", "histogram-hic15.svg"] {
        let a = fs::read(tmp.path().join("s1").join(file)).unwrap();
        let b = fs::read(tmp.path().join("s2").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }

    // A different seed moves the sample.
    let out = run_in(
        tmp.path(),
        &[
            "--config",
            "fast.cfg",
            "stats",
            "--model",
            "out/model-hic15.json",
            "--out",
            "s3",
            "--seed",
            "7",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let a = fs::read(tmp.path().join("s1/summary-hic15.txt")).unwrap();
    let b = fs::read(tmp.path().join("s3/summary-hic15.txt")).unwrap();
    assert_ne!(a, b, "the seed must steer the sample");

    // The plot is well-formed XML and its shaded regions start exactly at
    // the reported tail levels.
    let svg_text = fs::read_to_string(tmp.path().join("s1/histogram-hic15.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg_text).unwrap();
    let summary = fs::read_to_string(tmp.path().join("s1/summary-hic15.txt")).unwrap();
    let mut levels = Vec::new();
    for line in summary.lines() {
        if let Some(rest) = line.strip_prefix("var_") {
            let (pct, value) = rest.split_once(" = ").unwrap();
            levels.push((pct.to_string(), value.to_string()));
        }
    }
    assert_eq!(levels.len(), 2);
    for (pct, value) in &levels {
        let shaded = doc
            .descendants()
            .find(|n| {
                n.has_tag_name(("http://www.w3.org/2000/svg", "rect"))
                    && n.attribute("class") == Some("exceedance")
                    && n.attribute("data-percentile") == Some(pct.as_str())
            })
            .unwrap_or_else(|| panic!("no exceedance region for percentile {pct}"));
        assert_eq!(
            shaded.attribute("data-from"),
            Some(value.as_str()),
            "shaded region must start at the reported var_{pct}"
        );
    }
}

#[test]
fn a_constant_response_still_renders() {
    let tmp = tempfile::tempdir().unwrap();
    let mut csv = String::from("case,torso_angle_deg,dring_z,hic15,a_t1_max\n");
    for (i, (t, d)) in [(-8.0, -4.0), (-4.0, 2.0), (0.0, -1.0), (4.0, 3.0), (8.0, 0.0)]
        .iter()
        .enumerate()
    {
        csv.push_str(&format!("{},{t},{d},5,14\n", i + 1));
    }
    fs::write(tmp.path().join("flat.csv"), csv).unwrap();

    let out = run_in(
        tmp.path(),
        &["fit", "--ledger", "flat.csv", "--metric", "hic15"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = run_in(
        tmp.path(),
        &["stats", "--metric", "hic15", "--lhs-n", "200"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let summary = fs::read_to_string(tmp.path().join("out/summary-hic15.txt")).unwrap();
    assert!(summary.contains("std = 0\n"), "{summary}");
    let svg_text = fs::read_to_string(tmp.path().join("out/histogram-hic15.svg")).unwrap();
    roxmltree::Document::parse(&svg_text).expect("degenerate plot must stay well-formed");
    for token in ["NaN", "inf"] {
        assert!(!svg_text.contains(token), "{token} leaked into the plot");
    }
}

#[test]
fn help_and_usage_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_in(tmp.path(), &["--help"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("fit"));

    let out = run_in(tmp.path(), &["no-such-command"]);
    assert_eq!(code(&out), 2);

    let out = run_in(tmp.path(), &["fit", "--fixture", "--metric", "torque"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("unknown metric"), "{}", stderr(&out));
}
