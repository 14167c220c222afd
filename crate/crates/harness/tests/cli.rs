use std::path::Path;
use std::process::Command;

use serde_json::Value;
use shieldscatter::channel::OriginLabel;
use shieldscatter::sim::{device_frame, Deployment};
use shieldscatter::trace_io::{read_all, write_trace};
use shieldscatter_harness::pairs::{read_log, Schedules};

fn cli(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_shieldscatter")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json_lines(text: &str) -> Vec<Value> {
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn simulate_writes_pairs_and_labels_match_log() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pairs");
    cli(&["simulate", "--trials", "10", "--seed", "5", "--output", p(&out)]);
    let log = read_log(&out).unwrap();
    assert_eq!(log.len(), 10);
    for entry in &log {
        let bytes = std::fs::read(out.join(&entry.file)).unwrap();
        let traces = read_all::<f64, _>(&mut bytes.as_slice()).unwrap();
        assert_eq!(traces.len(), 2);
        assert_eq!(traces[0].origin(), OriginLabel::Legitimate);
        assert_eq!(traces[1].origin(), entry.origin);
        assert!(out.join(entry.file.replace(".ssct", ".json")).exists());
    }
    assert_eq!(log.iter().filter(|e| e.origin == OriginLabel::Legitimate).count(), 5);

    let again = dir.path().join("again");
    cli(&["simulate", "--trials", "10", "--seed", "5", "--output", p(&again)]);
    for name in ["pair_00000.ssct", "pair_00007.ssct", "pair_00003.json", "simulate_log.jsonl"] {
        assert_eq!(std::fs::read(out.join(name)).unwrap(), std::fs::read(again.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn profile_train_detect_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (legit, attack, val, val_att) = (d.join("legit"), d.join("attack"), d.join("val"), d.join("val_att"));
    cli(&["simulate", "--trials", "150", "--seed", "11", "--actor", "legitimate", "--output", p(&legit)]);
    cli(&["simulate", "--trials", "60", "--seed", "12", "--actor", "legitimate", "--output", p(&val)]);
    cli(&["simulate", "--trials", "20", "--seed", "13", "--actor", "attacker", "--output", p(&val_att)]);
    cli(&["simulate", "--trials", "12", "--seed", "14", "--actor", "attacker", "--output", p(&attack)]);
    for (src, csv) in [(&legit, "train.csv"), (&val, "val.csv"), (&val_att, "val_att.csv")] {
        cli(&["profile", p(src), "--out", p(&d.join(csv))]);
    }
    let header = std::fs::read_to_string(d.join("train.csv")).unwrap();
    assert_eq!(header.lines().next().unwrap().split(',').count(), 488);

    let model = d.join("model.json");
    let msg = cli(&[
        "train",
        "--profiles",
        p(&d.join("train.csv")),
        "--validation-legit",
        p(&d.join("val.csv")),
        "--validation-attacker",
        p(&d.join("val_att.csv")),
        "--out",
        p(&model),
    ]);
    assert!(msg.contains("selected nu"), "{msg}");

    let accepted = |v: &[Value]| v.iter().filter(|x| x["verdict"] == "legitimate").count();
    let attacks = json_lines(&cli(&["detect", "--model", p(&model), p(&attack)]));
    assert_eq!(attacks.len(), 12);
    assert!(accepted(&attacks) <= 2, "{attacks:?}");

    let fresh = d.join("fresh");
    cli(&["simulate", "--trials", "12", "--seed", "15", "--actor", "legitimate", "--output", p(&fresh)]);
    let legits = json_lines(&cli(&["detect", "--model", p(&model), p(&fresh)]));
    assert!(accepted(&legits) >= 8, "{legits:?}");

    let base = json_lines(&cli(&["baseline", p(&fresh)]));
    assert_eq!(base.len(), 12);
    let seg = json_lines(&cli(&["segment", p(&fresh.join("pair_00000.ssct"))]));
    assert_eq!(seg.len(), 2);
    assert!(seg[0]["start"].as_u64().unwrap() < seg[0]["end"].as_u64().unwrap());
}

#[test]
fn detection_ignores_origin_labels_and_flags_tag_free_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let pairs = d.join("pairs");
    cli(&["simulate", "--trials", "120", "--seed", "21", "--actor", "legitimate", "--output", p(&pairs)]);
    cli(&["profile", p(&pairs), "--out", p(&d.join("train.csv"))]);
    let model = d.join("model.json");
    cli(&["train", "--profiles", p(&d.join("train.csv")), "--nu", "0.1", "--out", p(&model)]);

    // flipping the stored label must not change any verdict
    let pair = pairs.join("pair_00000.ssct");
    let before = cli(&["detect", "--model", p(&model), p(&pair)]);
    let mut bytes = std::fs::read(&pair).unwrap();
    let second = {
        let n = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
        25 + 8 * n
    };
    bytes[24] = OriginLabel::BasicAttacker as u8;
    bytes[second + 24] = OriginLabel::AdvancedAttacker as u8;
    std::fs::write(&pair, &bytes).unwrap();
    let after = cli(&["detect", "--model", p(&model), p(&pair)]);
    assert_eq!(before, after);

    // the same geometry with every tag switched off
    let dep = Deployment::default();
    let mut env = dep.environment::<f64>(3).unwrap();
    env.tags = env.tags.silenced();
    let schedule3 = env.reference.shuffled(4);
    let tagless = d.join("pair_tagless.ssct");
    let mut w = Vec::new();
    write_trace(&mut w, &device_frame(&dep, &env, &env.reference, 5).unwrap()).unwrap();
    write_trace(&mut w, &device_frame(&dep, &env, &schedule3, 6).unwrap()).unwrap();
    std::fs::write(&tagless, w).unwrap();
    let sidecar = Schedules {
        schedule1: env.reference.clone(),
        schedule3,
    };
    std::fs::write(tagless.with_extension("json"), serde_json::to_string(&sidecar).unwrap()).unwrap();
    let verdicts = json_lines(&cli(&["detect", "--model", p(&model), p(&tagless)]));
    assert_eq!(verdicts.len(), 1);
    assert_eq!(verdicts[0]["verdict"], "no_backscatter");
    assert!(verdicts[0]["score"].is_null());
}

#[test]
fn experiment_writes_metrics_and_manifest_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        cli(&[
            "experiment",
            "--trials",
            "20",
            "--training-size",
            "80",
            "--validation-size",
            "40",
            "--repetitions",
            "2",
            "--sweep-axis",
            "tag-count",
            "--sweep-values",
            "3,4",
            "--output",
            p(&out),
        ]);
        out
    };
    let (a, b) = (run("a"), run("b"));
    let metrics = std::fs::read_to_string(a.join("metrics.csv")).unwrap();
    assert_eq!(metrics, std::fs::read_to_string(b.join("metrics.csv")).unwrap());
    assert_eq!(metrics.lines().count(), 1 + 2 * 2);
    assert!(metrics.starts_with("axis,value,repetition,seed,tp_rate,fp_rate"));
    let manifest = json_lines(&std::fs::read_to_string(a.join("manifest.jsonl")).unwrap());
    assert_eq!(manifest.len(), 1 + 4);
    assert_eq!(manifest[0]["kind"], "config");
    assert_eq!(manifest[1]["master_seed"], 1);

    let table = cli(&["report", p(&a.join("metrics.csv"))]);
    assert_eq!(table.lines().count(), 3);
    assert!(table.contains("tag_count"));
}
