use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use gpo_core::experiment::{git_blob_hash, RunManifest, SeedSource};

fn gpo() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gpo"));
    c.env_remove("GPO_SEED");
    c
}

fn run(cmd: &mut Command) -> Output {
    cmd.stdin(Stdio::null()).output().expect("binary runs")
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    assert_eq!(text.lines().count(), 1, "expected one stderr line, got {text:?}");
    serde_json::from_str(text.trim()).expect("stderr is JSON")
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, json).unwrap();
    p
}

const SMALL: &str = r#"{"iterations": 4, "batch_size": 8, "questions": 16}"#;

#[test]
fn segment_golden_files() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/segment");
    let mut cases = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        let args = std::fs::read_to_string(path.with_extension("args")).unwrap();
        let expected = std::fs::read(path.with_extension("expected")).unwrap();
        let out = run(gpo()
            .arg("segment")
            .args(args.split_whitespace())
            .arg("--input")
            .arg(&path));
        assert!(out.status.success(), "{}: {:?}", path.display(), out);
        assert_eq!(out.stdout, expected, "{}", path.display());
        cases += 1;
    }
    assert_eq!(cases, 6);
}

#[test]
fn segment_reads_stdin() {
    let mut child = gpo()
        .args(["segment", "--min-words", "2"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    use std::io::Write;
    child.stdin.take().unwrap().write_all(b"a b\n\nc\nd e").unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    assert_eq!(out.stdout, b"step 1: a b\\nc\nstep 2: d e\n");
}

#[test]
fn train_is_reproducible_across_runs_and_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SMALL);
    let mut csvs = Vec::new();
    for (i, workers) in ["1", "1", "8"].iter().enumerate() {
        let out_dir = tmp.path().join(format!("run{i}"));
        let out = run(gpo()
            .args(["train", "--seed", "7", "--workers", workers, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir));
        assert!(out.status.success(), "{out:?}");
        for f in ["metrics.csv", "policy.json", "summary.txt", "manifest.json"] {
            assert!(out_dir.join(f).exists(), "{f} missing");
        }
        csvs.push(std::fs::read(out_dir.join("metrics.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(csvs[0], csvs[2]);
}

#[test]
fn manifest_rerun_reproduces_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"iterations": 3, "method": "gpo_dpo", "batch_size": 8}"#,
    );
    let first = tmp.path().join("first");
    assert!(
        run(gpo().arg("train").arg("--config").arg(&cfg).arg("--out").arg(&first))
            .status
            .success()
    );
    let manifest = RunManifest::load(&first.join("manifest.json")).unwrap();
    assert_eq!(manifest.seed_source, SeedSource::Config);
    assert!(manifest.stale_outputs(&first).is_empty());
    for workers in ["1", "8"] {
        let again = tmp.path().join(format!("again{workers}"));
        let out = run(gpo()
            .args(["train", "--workers", workers, "--manifest"])
            .arg(first.join("manifest.json"))
            .arg("--out")
            .arg(&again));
        assert!(out.status.success(), "{out:?}");
        assert_eq!(
            std::fs::read(first.join("metrics.csv")).unwrap(),
            std::fs::read(again.join("metrics.csv")).unwrap()
        );
    }
}

#[test]
fn sweep_writes_long_csv_and_delta_row() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SMALL);
    let out_dir = tmp.path().join("sweep");
    let out = run(gpo()
        .args([
            "sweep",
            "--axis",
            "method",
            "--values",
            "dpo,gpo_dpo",
            "--seeds",
            "0,1",
            "--config",
        ])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir));
    assert!(out.status.success(), "{out:?}");
    let summary = std::fs::read_to_string(out_dir.join("summary.txt")).unwrap();
    assert!(
        summary.lines().any(|l| l.starts_with("delta gpo_dpo - dpo,")),
        "{summary}"
    );
    let csv = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 4);

    let again = tmp.path().join("again");
    let out = run(gpo()
        .args(["sweep", "--workers", "8", "--manifest"])
        .arg(out_dir.join("manifest.json"))
        .arg("--out")
        .arg(&again));
    assert!(out.status.success(), "{out:?}");
    assert_eq!(csv.as_bytes(), std::fs::read(again.join("metrics.csv")).unwrap());
}

#[test]
fn manifest_of_other_kind_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SMALL);
    let first = tmp.path().join("first");
    assert!(
        run(gpo().arg("train").arg("--config").arg(&cfg).arg("--out").arg(&first))
            .status
            .success()
    );
    let out = run(gpo()
        .args(["sweep", "--manifest"])
        .arg(first.join("manifest.json"))
        .arg("--out")
        .arg(tmp.path().join("x")));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_environment_variable_is_logged() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SMALL);
    let out_dir = tmp.path().join("r");
    let out = run(gpo()
        .env("GPO_SEED", "11")
        .arg("train")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir));
    assert!(out.status.success(), "{out:?}");
    let m = RunManifest::load(&out_dir.join("manifest.json")).unwrap();
    assert_eq!((m.config.seed, m.seed_source), (11, SeedSource::Environment));

    let flag_dir = tmp.path().join("f");
    let out = run(gpo()
        .env("GPO_SEED", "11")
        .args(["train", "--seed", "12", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&flag_dir));
    assert!(out.status.success());
    let m = RunManifest::load(&flag_dir.join("manifest.json")).unwrap();
    assert_eq!((m.config.seed, m.seed_source), (12, SeedSource::Flag));
}

#[test]
fn environment_file_hash_and_tamper_detection() {
    let tmp = tempfile::tempdir().unwrap();
    let env_path = tmp.path().join("chain.mdp.json");
    gpo_core::mdp::pivotal_chain::<f64>(4, 3, 1, 0.2)
        .unwrap()
        .save(&env_path)
        .unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        &format!(
            r#"{{"env": {{"kind": "file", "path": {}}}, "iterations": 2, "batch_size": 4}}"#,
            serde_json::to_string(&env_path).unwrap()
        ),
    );
    let out_dir = tmp.path().join("r");
    assert!(
        run(gpo().arg("train").arg("--config").arg(&cfg).arg("--out").arg(&out_dir))
            .status
            .success()
    );
    let m = RunManifest::load(&out_dir.join("manifest.json")).unwrap();
    assert_eq!(m.env_hash, git_blob_hash(&std::fs::read(&env_path).unwrap()));

    gpo_core::mdp::pivotal_chain::<f64>(4, 3, 1, 0.3)
        .unwrap()
        .save(&env_path)
        .unwrap();
    let out = run(gpo()
        .arg("train")
        .arg("--manifest")
        .arg(out_dir.join("manifest.json"))
        .arg("--out")
        .arg(tmp.path().join("again")));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("hash mismatch"));
}

#[test]
fn exit_codes_are_distinct() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("r");

    let missing = tmp.path().join("nope.json");
    let out = run(gpo()
        .arg("train")
        .arg("--config")
        .arg(&missing)
        .arg("--out")
        .arg(&out_dir));
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("nope.json"));

    let bad = write_config(tmp.path(), "bad.json", r#"{"clip_eps": 1.5}"#);
    let out = run(gpo().arg("train").arg("--config").arg(&bad).arg("--out").arg(&out_dir));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("(0, 1)"));

    let typo = write_config(tmp.path(), "typo.json", r#"{"itertions": 3}"#);
    let out = run(gpo().arg("train").arg("--config").arg(&typo).arg("--out").arg(&out_dir));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("itertions"));

    let out = run(gpo().args(["train", "--frobnicate"]));
    assert_eq!(out.status.code(), Some(64));
    assert_eq!(stderr_json(&out)["error"], "usage");

    let out = run(gpo().args(["segment", "--input"]).arg(tmp.path().join("absent.txt")));
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(stderr_json(&out)["error"], "io");

    let hopeless = write_config(
        tmp.path(),
        "hopeless.json",
        r#"{"env": {"kind": "bandit", "rewards": [0.0, 0.0]}, "method": "dpo"}"#,
    );
    let out = run(gpo()
        .arg("train")
        .arg("--config")
        .arg(&hopeless)
        .arg("--out")
        .arg(&out_dir));
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("all-incorrect"));
}

#[test]
fn oracle_eval_and_theorem_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", "{}");

    let out = run(gpo().arg("oracle").arg("--config").arg(&cfg));
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["initial_value"].as_f64().unwrap() - 0.4).abs() < 1e-12);
    assert_eq!(v["optimal_initial_value"].as_f64().unwrap(), 1.0);

    let policy = tmp.path().join("uniform.json");
    let uniform = gpo_core::mdp::SoftmaxPolicy::<f64>::uniform(6, 2, 4);
    std::fs::write(&policy, serde_json::to_string(&uniform).unwrap()).unwrap();
    let out = run(gpo().arg("eval").arg("--config").arg(&cfg).arg("--policy").arg(&policy));
    assert!(out.status.success());
    let e: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((e["success"].as_f64().unwrap() - 0.4).abs() < 1e-12);

    let out = run(gpo().arg("verify-theorem2").arg("--config").arg(&cfg));
    assert!(out.status.success(), "{out:?}");
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(r["max_tv"].as_f64().unwrap() <= 1e-2);

    let out = run(gpo()
        .args(["verify-theorem2", "--max-iterations", "1", "--config"])
        .arg(&cfg));
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn profile_and_collect_emit_valid_records() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"method": "gpo_dpo", "batch_size": 6}"#);
    let out = run(gpo()
        .args(["profile", "--count", "3", "--exact", "--format", "jsonl", "--config"])
        .arg(&cfg));
    assert!(out.status.success(), "{out:?}");
    let recs: Vec<gpo_core::trajectory::Record<f64>> =
        gpo_core::trajectory::from_jsonl(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(recs.len(), 6);

    let file = tmp.path().join("pairs.jsonl");
    let out = run(gpo().arg("collect").arg("--config").arg(&cfg).arg("--out").arg(&file));
    assert!(out.status.success(), "{out:?}");
    let recs = gpo_core::trajectory::read_records::<f64>(&file).unwrap();
    assert_eq!(recs.len(), 6);
    assert!(recs
        .iter()
        .all(|r| matches!(r, gpo_core::trajectory::Record::PreferencePair(_))));
}

#[test]
fn collect_procedures_tag_their_pairs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"batch_size": 5}"#);
    for (procedure, source) in [
        ("two", gpo_core::trajectory::PairSource::Gpo),
        ("random", gpo_core::trajectory::PairSource::RandomReset),
        ("whole", gpo_core::trajectory::PairSource::WholeTrajectory),
    ] {
        let out = run(gpo()
            .args([
                "collect",
                "--budget",
                "16",
                "--mc-samples",
                "8",
                "--procedure",
                procedure,
                "--config",
            ])
            .arg(&cfg));
        assert!(out.status.success(), "{procedure}: {out:?}");
        let recs = gpo_core::trajectory::from_jsonl::<f64>(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
        assert!(!recs.is_empty());
        for r in recs {
            match r {
                gpo_core::trajectory::Record::PreferencePair(p) => assert_eq!(p.source, source),
                other => panic!("{procedure}: unexpected {other:?}"),
            }
        }
    }
    let out = run(gpo()
        .args(["collect", "--procedure", "one", "--gamma", "2", "--config"])
        .arg(&cfg));
    assert!(out.status.success(), "{out:?}");
    let out = run(gpo()
        .args(["collect", "--procedure", "one", "--gamma", "-1", "--config"])
        .arg(&cfg));
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn profile_table_marks_one_chosen_step_per_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", "{}");
    let out = run(gpo().args(["profile", "--count", "4", "--config"]).arg(&cfg));
    assert!(out.status.success(), "{out:?}");
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("trajectory,index,q_hat,advantage,chosen"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4 * 6);
    for k in 0..4 {
        let chosen = rows.iter().filter(|r| r[0] == k.to_string() && r[4] == "1").count();
        assert_eq!(chosen, 1);
    }
}
