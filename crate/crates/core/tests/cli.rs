use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tiny_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/tiny.toml")
}

fn ccd(config: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccd"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("CCD_OUT_ROOT")
        .output()
        .unwrap()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn gen_data_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&ccd(&tiny_config(), &a, &["gen-data"]));
    ok(&ccd(&tiny_config(), &b, &["gen-data"]));
    for f in ["pretrain.jsonl", "target.jsonl", "vocab.json"] {
        assert_eq!(read(&a.join("data").join(f)), read(&b.join("data").join(f)), "{f}");
    }
    let loaded = ccd::data::load_corpus(&a.join("data/target.jsonl")).unwrap();
    assert!(loaded.has_frames);
}

#[test]
fn malformed_config_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    for text in ["seeds = [", "unknown_key = 1", "[student]\nd = 10\nheads = 3"] {
        std::fs::write(&bad, text).unwrap();
        let o = ccd(&bad, dir.path(), &["gen-data"]);
        assert_eq!(o.status.code(), Some(2), "{text}");
        assert!(!o.stderr.is_empty());
    }
    let o = ccd(&tiny_config(), dir.path(), &["no-such-command"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_inputs_are_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = ccd(&tiny_config(), dir.path(), &["train", "--role", "teacher_pretrain"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn train_pipeline_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cfg = tiny_config();
    ok(&ccd(&cfg, out, &["gen-data"]));

    // Distilling without a teacher is a usage error.
    let o = ccd(&cfg, out, &["train", "--role", "student"]);
    assert_eq!(o.status.code(), Some(2));
    let o = ccd(&cfg, out, &["train", "--role", "teacher_finetune"]);
    assert_eq!(o.status.code(), Some(2));

    ok(&ccd(&cfg, out, &["train", "--role", "teacher_pretrain"]));
    let pre = out.join("checkpoints/teacher_pretrain_s0.ckpt");
    assert!(pre.exists());
    ok(&ccd(&cfg, out, &["train", "--role", "teacher_finetune", "--teacher", pre.to_str().unwrap()]));
    let fin = out.join("checkpoints/teacher_finetune_s0.ckpt");
    ok(&ccd(&cfg, out, &["train", "--role", "student", "--teacher", fin.to_str().unwrap()]));
    let student = out.join("checkpoints/student_d8_ccd_clip-dec-temporal-output_s0.ckpt");
    assert!(student.exists());
    assert!(out.join("logs/student_d8_ccd_clip-dec-temporal-output_s0.jsonl").exists());

    ok(&ccd(&cfg, out, &["eval", "--checkpoint", student.to_str().unwrap(), "--split", "val"]));
    let dir_eval = out.join("eval/student_d8_ccd_clip-dec-temporal-output_s0_val");
    for f in ["report.json", "scores.csv", "per_step.csv"] {
        assert!(dir_eval.join(f).exists(), "{f}");
    }

    let o = ccd(&cfg, out, &["eval", "--oracle"]);
    ok(&o);
    assert!(String::from_utf8_lossy(&o.stdout).contains("BLEU4 1.0000"));
    assert_eq!(
        std::fs::read_to_string(out.join("eval/oracle_test/scores.csv")).unwrap(),
        "split,bleu1,bleu4\ntest,1.000000,1.000000\n"
    );

    // A checkpoint from a different vocabulary is refused.
    let other = dir.path().join("other");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("seed = 3", "seed = 4").replace("target_samples = 48", "target_samples = 30");
    let other_cfg = dir.path().join("other.toml");
    std::fs::write(&other_cfg, text).unwrap();
    ok(&ccd(&other_cfg, &other, &["gen-data"]));
    let o = ccd(&other_cfg, &other, &["eval", "--checkpoint", student.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn student_without_distillation_needs_no_teacher() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(tiny_config()).unwrap().replace("[distill]\n", "[distill]\nmode = \"none\"\n");
    let cfg = dir.path().join("none.toml");
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    ok(&ccd(&cfg, &out, &["gen-data"]));
    ok(&ccd(&cfg, &out, &["--seed", "4", "train", "--role", "student"]));
    assert!(out.join("checkpoints/student_d8_none_s4.ckpt").exists());
}

#[test]
fn out_root_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_ccd"))
        .arg("--config")
        .arg(tiny_config())
        .arg("gen-data")
        .env("CCD_OUT_ROOT", dir.path())
        .output()
        .unwrap();
    ok(&o);
    assert!(dir.path().join("data/target.jsonl").exists());
}
