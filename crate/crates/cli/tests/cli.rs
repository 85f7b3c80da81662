use std::path::Path;
use std::process::{Command, Output};

fn csifb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csifb"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn csifb")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn usage_and_config_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&csifb(&["frobnicate"])), 2);
    assert_eq!(code(&csifb(&["gen-channels", "--scenario", "mixed"])), 2);
    let out = tmp.path().join("c.csch");
    assert_eq!(code(&csifb(&["gen-channels", "--scenario", "urban", "--count", "3", "--seed", "1", "--out", p(&out)])), 2);
    assert_eq!(code(&csifb(&["train-e2e", "--config", p(&tmp.path().join("missing.toml"))])), 2);

    let cfg = tmp.path().join("step.toml");
    std::fs::write(&cfg, "family = \"dense_a\"\nencoder_id = 4\n").unwrap();
    let o = csifb(&["train-e2e", "--config", p(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("channels"));
    std::fs::write(&cfg, "famly = \"dense_a\"\n").unwrap();
    assert_eq!(code(&csifb(&["train-e2e", "--config", p(&cfg)])), 2);
}

#[test]
fn step_commands_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let chans = d.join("train.csch");
    let o = csifb(&["gen-channels", "--scenario", "mixed", "--count", "40", "--seed", "3", "--out", p(&chans)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(&std::fs::read(&chans).unwrap()[..4], b"CSCH");

    let handover = d.join("handover");
    let cfg = d.join("ue.toml");
    std::fs::write(
        &cfg,
        format!(
            r#"
channels = "{}"
family = "shared_b"
encoder_id = 11
encoder = "{}"
proxy_decoder = "{}"
dataset = "{}"
decoder = "{}"
handover_dir = "{}"
report = "{}"

[train]
epochs = 1
min_samples = 10

[emulate]
ticks = 12
ri = 2
snr_db = 20.0
model_id = 11
log = "{}"

[emulate.registry]
11 = "{}"
"#,
            p(&chans),
            p(&d.join("enc.csmw")),
            p(&d.join("proxy.csmw")),
            p(&handover.join("ue11.csix")),
            p(&d.join("dec.csmw")),
            p(&handover),
            p(&d.join("report.json")),
            p(&d.join("session.jsonl")),
            p(&d.join("dec.csmw")),
        ),
    )
    .unwrap();
    std::fs::create_dir_all(&handover).unwrap();
    for step in ["train-e2e", "export-dataset", "train-decoder", "audit"] {
        let o = csifb(&[step, "--config", p(&cfg), "--seed", "5"]);
        assert_eq!(code(&o), 0, "{step}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);

    for transport in ["inproc", "socket"] {
        let o = csifb(&["emulate", "--config", p(&cfg), "--transport", transport]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let log = std::fs::read_to_string(d.join("session.jsonl")).unwrap();
        assert_eq!(log.lines().count(), 12 * 3);
    }

    std::fs::copy(d.join("enc.csmw"), handover.join("leak.csmw")).unwrap();
    assert_eq!(code(&csifb(&["audit", "--config", p(&cfg)])), 3);
}

#[test]
fn run_report_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let out = d.join(name);
        let cfg = d.join(format!("{name}.toml"));
        std::fs::write(
            &cfg,
            format!(
                r#"
output_dir = "{}"
families = ["dense_a"]
protocols = ["e2e", "seq_dedicated"]
deployed = "seq_dedicated"

[[train_scenarios]]
preset = "mixed"
seed = 1
realizations = 60

[[eval_scenarios]]
preset = "nlos"
seed = 2
realizations = 6

[train]
epochs = 1
"#,
                p(&out)
            ),
        )
        .unwrap();
        let o = csifb(&["run", "--config", p(&cfg), "--jobs", "2", "--seed", if name == "a" { "1" } else { "2" }]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("seq_dedicated"));
        assert!(out.join("table1.csv").exists() && out.join("table1.txt").exists());
        runs.push(out);
    }

    let rep = d.join("rep");
    let o = csifb(&["report", "--run", p(&runs[0]), "--format", "csv", "--out", p(&rep)]);
    assert_eq!(code(&o), 0);
    assert!(rep.join("gains.csv").exists());

    let o = csifb(&["compare", p(&runs[0]), p(&runs[1]), "--threshold", "0"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("max |delta|"), "{text}");
    assert_eq!(text.lines().count(), 8 + 1);

    assert_eq!(code(&csifb(&["compare", p(&runs[0]), p(&d.join("nope"))])), 3);
}
