//! CLI behavior: flags, config files, exit codes, and the report recipe.

use std::path::Path;
use std::process::{Command, Output};

fn skelact(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skelact"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

#[test]
fn help_lists_every_flag_and_unknown_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let help = skelact(&["gen-synth", "--help"], dir.path());
    assert_eq!(code(&help), 0);
    let text = String::from_utf8_lossy(&help.stdout);
    for flag in [
        "--out", "--classes", "--per-class", "--tempo", "--noise", "--joints", "--base-frames",
        "--fps", "--class-offset", "--train-fraction", "--seed", "--config",
    ] {
        assert!(text.contains(flag), "gen-synth --help missing {flag}");
    }
    let train_help = skelact(&["train", "--help"], dir.path());
    let text = String::from_utf8_lossy(&train_help.stdout);
    for flag in [
        "--data", "--variant", "--preset", "--epochs", "--seed", "--batch", "--out", "--lr",
        "--decay-factor", "--decay-every", "--decay-start", "--config",
    ] {
        assert!(text.contains(flag), "train --help missing {flag}");
    }

    let unknown = skelact(&["train", "--data", "x", "--frobnicate"], dir.path());
    assert_eq!(code(&unknown), 1, "unknown flag must be a usage error");
}

#[test]
fn gen_synth_counts_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let out = skelact(
        &[
            "gen-synth", "--out", "ds", "--classes", "6", "--per-class", "12", "--tempo", "1.8",
            "--base-frames", "20", "--seed", "7",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("72 samples"));
    let manifest = std::fs::read_to_string(dir.path().join("ds/manifest.skmanifest")).unwrap();
    assert_eq!(manifest.lines().filter(|l| l.starts_with("sample\t")).count(), 72);
    assert!(dir.path().join("ds/config.txt").exists());

    let bad = skelact(&["gen-synth", "--out", "bad", "--classes", "0", "--seed", "1"], dir.path());
    assert_eq!(code(&bad), 1);
}

#[test]
fn config_file_fills_defaults_and_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("gen.cfg"), "classes = 3\nper_class = 2\nseed = 9\nbase_frames = 10\n")
        .unwrap();
    let out = skelact(&["gen-synth", "--out", "ds", "--config", "gen.cfg"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("6 samples"));
    // flags override the file
    let out = skelact(
        &["gen-synth", "--out", "ds2", "--config", "gen.cfg", "--classes", "2"],
        dir.path(),
    );
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("4 samples"));

    std::fs::write(dir.path().join("bad.cfg"), "classes = 3\nwibble = 1\n").unwrap();
    let out = skelact(&["gen-synth", "--out", "ds3", "--config", "bad.cfg"], dir.path());
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("wibble"));
}

#[test]
fn convert_rejects_sequences_over_the_frame_cap() {
    let dir = tempfile::tempdir().unwrap();
    let gen = skelact(
        &["gen-synth", "--out", "ds", "--classes", "2", "--per-class", "2", "--joints", "20",
          "--base-frames", "30", "--seed", "3"],
        dir.path(),
    );
    assert_eq!(code(&gen), 0);
    // cap below the generated frame count
    let out = skelact(
        &["convert", "--in", "ds/manifest.skmanifest", "--out", "prep", "--target-frames", "8"],
        dir.path(),
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("cap"));
}

#[test]
fn missing_data_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = skelact(&["train", "--data", "nope/manifest.skmanifest"], dir.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn selftest_exits_zero_with_a_pass_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = skelact(&["selftest"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("checks passed"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn eval_reports_accuracy_for_a_trained_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in [
        vec!["gen-synth", "--out", "ds", "--classes", "2", "--per-class", "4", "--joints", "20",
             "--base-frames", "8", "--seed", "5"],
        vec!["convert", "--in", "ds/manifest.skmanifest", "--out", "prep", "--target-frames", "10"],
        vec!["train", "--data", "prep/manifest.skmanifest", "--epochs", "2", "--seed", "1",
             "--out", "run"],
    ] {
        let out = skelact(&cmd, dir.path());
        assert_eq!(code(&out), 0, "{cmd:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = skelact(
        &["eval", "--ckpt", "run/model.skckpt", "--data", "prep/manifest.skmanifest", "--split", "all"],
        dir.path(),
    );
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("accuracy "), "{text}");
    assert!(text.contains("8 samples"));
}

#[test]
fn transfer_plan_none_without_source_trains_a_fresh_baseline() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in [
        vec!["gen-synth", "--out", "ds", "--classes", "2", "--per-class", "3", "--joints", "20",
             "--base-frames", "8", "--seed", "6"],
        vec!["convert", "--in", "ds/manifest.skmanifest", "--out", "prep", "--target-frames", "10"],
    ] {
        let out = skelact(&cmd, dir.path());
        assert_eq!(code(&out), 0, "{cmd:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = skelact(
        &["transfer", "--data", "prep/manifest.skmanifest", "--plan", "none", "--variant",
          "msg3d", "--epochs", "1", "--seed", "2", "--out", "base_run"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(dir.path().join("base_run/report.skreport")).unwrap();
    assert!(report.contains("plan none"));
    assert!(report.contains("variant msg3d"));
    // nothing frozen under the baseline plan
    let checksums = std::fs::read_to_string(dir.path().join("base_run/frozen_checksums.txt")).unwrap();
    assert!(checksums.is_empty());
}

#[test]
fn convert_accepts_a_matching_topology_override_and_rejects_mismatches() {
    let dir = tempfile::tempdir().unwrap();
    let gen = skelact(
        &["gen-synth", "--out", "ds", "--classes", "2", "--per-class", "2", "--joints", "25",
          "--base-frames", "8", "--seed", "4"],
        dir.path(),
    );
    assert_eq!(code(&gen), 0);

    // 25-joint chain topology: valid override for the 25-joint dataset.
    let mut topo = String::from("25\n");
    for j in 1..25 {
        topo.push_str(&format!("{} {}\n", j - 1, j));
    }
    topo.push_str("center 0\n");
    std::fs::write(dir.path().join("chain.topo"), &topo).unwrap();
    let out = skelact(
        &["convert", "--in", "ds/manifest.skmanifest", "--out", "prep", "--target-frames", "12",
          "--topology", "chain.topo"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    // 3-joint topology cannot normalize a 25-joint dataset.
    std::fs::write(dir.path().join("tiny.topo"), "3\n0 1\n1 2\ncenter 0\n").unwrap();
    let out = skelact(
        &["convert", "--in", "ds/manifest.skmanifest", "--out", "prep2", "--topology", "tiny.topo"],
        dir.path(),
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn report_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("tiny.recipe"),
        "variants = stgcn\nsource_classes = 2\ntarget_classes = 2\nsource_per_class = 4\n\
         target_per_class = 4\nbase_frames = 6\npad_to = 16\nsource_epochs = 1\n\
         target_epochs = 2\nseeds = 1\n",
    )
    .unwrap();
    for out in ["rep1", "rep2"] {
        let run = skelact(&["report", "--recipe", "tiny.recipe", "--out", out], dir.path());
        assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    }
    let mut compared = 0;
    let mut stack = vec![dir.path().join("rep1")];
    while let Some(current) = stack.pop() {
        for entry in std::fs::read_dir(&current).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(dir.path().join("rep1")).unwrap().to_path_buf();
            let twin = dir.path().join("rep2").join(&rel);
            assert_eq!(
                std::fs::read(&path).unwrap(),
                std::fs::read(&twin).unwrap(),
                "{} differs between report runs",
                rel.display()
            );
            compared += 1;
        }
    }
    assert!(compared >= 10, "only {compared} files compared");
}

#[test]
fn out_root_env_var_sets_the_default_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_skelact"))
        .args(["gen-synth", "--classes", "2", "--per-class", "1", "--base-frames", "8", "--seed", "2"])
        .env("SKELACT_OUT_ROOT", dir.path().join("custom_root"))
        .current_dir(dir.path())
        .output()
        .expect("binary runs");
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("custom_root/gen-synth/manifest.skmanifest").exists());
}

#[test]
fn report_recipe_produces_summary_and_curves() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("tiny.recipe"),
        "variants = stgcn\n\
         source_classes = 2\n\
         target_classes = 2\n\
         source_per_class = 4\n\
         target_per_class = 4\n\
         base_frames = 6\n\
         pad_to = 16\n\
         source_epochs = 1\n\
         target_epochs = 2\n\
         seeds = 1\n\
         lr = 0.01\n",
    )
    .unwrap();
    let out = skelact(&["report", "--recipe", "tiny.recipe", "--out", "rep"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for file in [
        "rep/summary.txt",
        "rep/summary.csv",
        "rep/summary_per_seed.csv",
        "rep/curves_stgcn_config1.svg",
        "rep/curves_stgcn_config2.svg",
        "rep/config.txt",
        "rep/reports/source_stgcn.skreport",
        "rep/reports/stgcn_seed1_baseline.skreport",
        "rep/reports/stgcn_seed1_config1.skreport",
        "rep/reports/stgcn_seed1_config2.skreport",
        "rep/checkpoints/source_stgcn.skckpt",
    ] {
        assert!(dir.path().join(file).exists(), "missing {file}");
    }
    let csv = std::fs::read_to_string(dir.path().join("rep/summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3); // header + config1 + config2

    let bad = skelact(&["report", "--recipe", "missing.recipe"], dir.path());
    assert_eq!(code(&bad), 2);
}
