use std::path::Path;
use std::process::{Command, Output};

const SETTINGS: &str = r#"
[walk]
walks_per_node = 3
walk_length = 4

[stage1]
word_dim = 8
hidden_dim = 8
epochs = 2
batch_size = 8

[transformer]
d_model = 16
heads = 2
ff_dim = 32
enc_layers = 1
dec_layers = 1

[train]
epochs = 2
batch_size = 4
lr = 0.01

[rnn]
word_dim = 8
hidden_dim = 8
latent_dim = 4

[downstream.shallow]
dim = 4
epochs = 5
"#;

fn graphex(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphex"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = graphex(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn every_stage_runs_from_the_command_line() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("settings.toml"), SETTINGS).unwrap();
    let cfg = ["--config", "settings.toml", "--seed", "3"];

    ok(d, &["synth", "--out", "corpus.jsonl", "--nodes", "30", "--pool", "8", "--seed", "2"]);
    ok(d, &["build-dag", "--corpus", "corpus.jsonl", "--out", "dags"]);
    let stats: serde_json::Value = serde_json::from_str(&ok(d, &["stats", "--dag", "dags/synthetic.json"])).unwrap();
    assert_eq!(stats["nodes"], 30);
    assert_eq!(stats["edges"], 29);

    ok(d, &["split", "--dag", "dags/synthetic.json", "--seed", "3", "--out", "split.json"]);
    let common = ["--dag", "dags/synthetic.json", "--split", "split.json"];
    ok(d, &[&["analyze", "--out", "analysis.json", "--corpus", "corpus.jsonl", "--threshold", "-0.3"][..], &common].concat());
    let analysis: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("analysis.json")).unwrap()).unwrap();
    assert!(analysis["selected"].is_boolean());

    ok(d, &[&["train-baseline", "--kind", "transformer", "--out", "tf.ckpt"][..], &common, &cfg].concat());
    assert!(d.join("tf.ckpt.vocab").exists());
    ok(d, &[&["train-stage1", "--out", "emb.emb", "--bootstrap", "tf.ckpt"][..], &common, &cfg].concat());

    let s2 = [&common[..], &["--emb", "emb.emb", "--local", "trainable", "--use-tg", "--use-dg"]].concat();
    ok(d, &[&["train-stage2", "--out", "ours.ckpt"][..], &s2, &cfg].concat());
    ok(d, &[&["generate", "--model", "ours.ckpt", "--out", "ours.jsonl"][..], &s2].concat());
    let line = ok(d, &["evaluate", "--gen", "ours.jsonl", "--out", "ours-report", "--model", "Our Model"]);
    assert!(line.starts_with("Our Model: BLEU1 "), "{line}");
    assert!(d.join("ours-report.json").exists() && d.join("ours-report.csv").exists());

    // Baseline checkpoints decode through the same command.
    ok(d, &[&["generate", "--model", "tf.ckpt", "--out", "tf.jsonl"][..], &common].concat());
    let tf_lines = std::fs::read_to_string(d.join("tf.jsonl")).unwrap().lines().count();
    assert_eq!(tf_lines, std::fs::read_to_string(d.join("ours.jsonl")).unwrap().lines().count());

    // Flags that disagree with the checkpoint are a configuration error.
    let wrong = graphex(d, &[&["generate", "--model", "ours.ckpt", "--out", "x.jsonl"][..], &common, &["--emb", "emb.emb", "--use-tg"]].concat());
    assert_eq!(code(&wrong), 2);

    let lp: serde_json::Value = serde_json::from_str(&ok(d, &[&["linkpred", "--dag", "dags/synthetic.json"][..], &cfg].concat())).unwrap();
    for k in ["stage1_terminology", "shallow"] {
        let auc = lp[k]["auc"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&auc));
    }
    ok(d, &[&["linkpred", "--dag", "dags/synthetic.json", "--emb", "emb.emb", "--out", "lp.json"][..], &cfg].concat());
    assert!(d.join("lp.json").exists());

    // Local vectors that encode depth make the granularity tasks learnable.
    let terms: Vec<serde_json::Value> = std::fs::read_to_string(d.join("corpus.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let mut depth = std::collections::HashMap::new();
    for t in &terms {
        let parent = t["parents"].as_array().unwrap().first().map(|p| p.as_str().unwrap().to_string());
        let dp = parent.map_or(0, |p| depth[&p] + 1);
        depth.insert(t["id"].as_str().unwrap().to_string(), dp);
    }
    let mut lookup = String::from("2\n");
    for (id, dp) in &depth {
        lookup.push_str(&format!("{id}\t{} 1\n", *dp as f64));
    }
    std::fs::write(d.join("local.tsv"), lookup).unwrap();
    let rel: serde_json::Value = serde_json::from_str(&ok(
        d,
        &["granularity", "--dags", "dags", "--emb", "local.tsv", "--task", "rel", "--hidden", "16", "--epochs", "40"],
    ))
    .unwrap();
    assert!(rel["accuracy"].as_f64().unwrap() > 0.8, "{rel}");
    ok(d, &["granularity", "--dags", "dags", "--emb", "local.tsv", "--task", "abs", "--out", "abs.json"]);
    let abs: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("abs.json")).unwrap()).unwrap();
    assert!(abs["absolute"]["accuracy"].is_number());

    // A lookup file can also stand in for the trainable local provider.
    let s2_lookup = [&common[..], &["--emb", "emb.emb", "--local", "local.tsv"]].concat();
    ok(d, &[&["train-stage2", "--out", "plain.ckpt"][..], &s2_lookup, &cfg].concat());
    ok(d, &[&["generate", "--model", "plain.ckpt", "--out", "plain.jsonl"][..], &s2_lookup].concat());
}

#[test]
fn definition_embeddings_without_bootstrap_are_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("settings.toml"), SETTINGS).unwrap();
    let cfg = ["--config", "settings.toml"];
    ok(d, &["synth", "--out", "c.jsonl", "--nodes", "20", "--pool", "8"]);
    ok(d, &["build-dag", "--corpus", "c.jsonl", "--out", "dags"]);
    ok(d, &["split", "--dag", "dags/synthetic.json", "--out", "split.json"]);
    let common = ["--dag", "dags/synthetic.json", "--split", "split.json"];
    ok(d, &[&["train-stage1", "--out", "curated.emb"][..], &common, &cfg].concat());

    let out = graphex(d, &[&["train-stage2", "--out", "m.ckpt", "--emb", "curated.emb", "--use-dg"][..], &common, &cfg].concat());
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--bootstrap"));
    // Without the definition side the same snapshot is fine.
    ok(d, &[&["train-stage2", "--out", "m.ckpt", "--emb", "curated.emb", "--use-tg"][..], &common, &cfg].concat());
}

#[test]
fn exit_codes_separate_config_errors_from_step_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();

    // Unreadable config file.
    assert_eq!(code(&graphex(d, &["pipeline", "--config", "missing.toml"])), 2);
    // Invalid values.
    std::fs::write(d.join("empty-seeds.toml"), "out_dir = \"o\"\nseeds = []\n[input]\nkind = \"synthetic\"\n").unwrap();
    assert_eq!(code(&graphex(d, &["pipeline", "--config", "empty-seeds.toml"])), 2);
    std::fs::write(d.join("bad.toml"), "out_dir = \"o\"\nseeds = [1]\n[input]\nkind = \"obo_dir\"\npath = \"nowhere\"\n").unwrap();
    assert_eq!(code(&graphex(d, &["pipeline", "--config", "bad.toml"])), 2);
    // Usage errors come from the argument parser.
    assert_eq!(code(&graphex(d, &["train-baseline", "--kind", "lstm"])), 2);

    // A valid config whose step fails at run time.
    std::fs::write(d.join("junk.tsv"), "not a table\n").unwrap();
    let text = format!(
        "out_dir = \"run\"\nseeds = [1]\nbaselines = [\"transformer\"]\n[input]\nkind = \"synthetic\"\nnodes = 12\npool = 8\n[selection]\nenabled = false\n{SETTINGS}\n[stage2]\nlocal_lookup = \"junk.tsv\"\n"
    );
    std::fs::write(d.join("fails.toml"), text).unwrap();
    let out = graphex(d, &["pipeline", "--config", "fails.toml"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    // The partial table is still printed, with the unfinished rows pending.
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("| Transformer | false | false | 0."), "{table}");
    assert!(table.contains("pending"));
    assert!(d.join("run").join("ledger.json").exists());

    // A corrupt checkpoint is a step failure, not a config error.
    std::fs::write(d.join("x.ckpt"), "{").unwrap();
    std::fs::write(d.join("x.ckpt.vocab"), "").unwrap();
    ok(d, &["synth", "--out", "c.jsonl", "--nodes", "12", "--pool", "8"]);
    ok(d, &["build-dag", "--corpus", "c.jsonl", "--out", "dags"]);
    ok(d, &["split", "--dag", "dags/synthetic.json", "--out", "split.json"]);
    let out = graphex(d, &["generate", "--model", "x.ckpt", "--dag", "dags/synthetic.json", "--split", "split.json", "--out", "g.jsonl"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn pipeline_command_succeeds_and_reuses_on_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let text = format!(
        "out_dir = \"run\"\nseeds = [1]\n[input]\nkind = \"synthetic\"\nnodes = 12\npool = 8\n[selection]\nenabled = false\n{SETTINGS}"
    );
    std::fs::write(d.join("exp.toml"), text).unwrap();
    let first = ok(d, &["pipeline", "--config", "exp.toml"]);
    assert!(first.contains("| Our Model | true | true |"));
    assert!(!first.contains("pending"));
    let out = graphex(d, &["pipeline", "--config", "exp.toml"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout), first);
    let stderr = String::from_utf8_lossy(&out.stderr);
    let summary = stderr.lines().last().unwrap();
    let (total, reused) = summary.split_once(" steps, ").unwrap();
    assert!(reused.starts_with(&format!("{total} reused")), "{summary}");
}
