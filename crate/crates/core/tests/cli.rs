use std::path::Path;
use std::process::{Command, Output};

use invsep::cli::load_corpus;
use invsep::nnet::{CellKind, ModelConfig, ModelParams};
use invsep::train::TrainConfig;

fn invsep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_invsep")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_checkpoint(corpus: &Path, out: &Path, regime: &str) {
    let c = load_corpus(corpus).unwrap();
    let cfg = ModelConfig {
        feat_dim: 257,
        embed_dim: 4,
        hidden: 6,
        layers: 1,
        cell: CellKind::Gru,
        init_seed: 3,
    };
    let mut m = ModelParams::new(cfg, c.stats).unwrap();
    m.regime = regime.into();
    m.save(out).unwrap();
}

#[test]
fn end_to_end_commands() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let synth = ["synth-corpus", "--speakers", "10", "--seed", "4", "--out", p(&corpus)];
    let o = invsep(&synth);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(corpus.join("manifest.json").exists());
    assert!(corpus.join("profiles/spk_0009.wav").exists());

    let o = invsep(&synth);
    assert_eq!(code(&o), 2);
    let line = stderr(&o);
    assert_eq!(line.lines().count(), 1);
    assert!(line.starts_with("error kind=would_overwrite code=2 msg="));
    let mut forced = synth.to_vec();
    forced.push("--force");
    assert_eq!(code(&invsep(&forced)), 0);

    let mix = dir.path().join("mix");
    let o = invsep(&["mix", "--corpus", p(&corpus), "--out", p(&mix), "--count", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["mixture.wav", "s1.wav", "s2.wav"] {
        assert!(mix.join("mix_0001").join(f).exists());
    }
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(mix.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta.as_array().unwrap().len(), 2);

    let ckpt = dir.path().join("sep.ckpt");
    small_checkpoint(&corpus, &ckpt, "ssusi_sep");

    let sep = dir.path().join("sep");
    let o = invsep(&[
        "separate",
        "--mixture",
        p(&mix.join("mix_0000/mixture.wav")),
        "--inventory",
        p(&corpus.join("profiles")),
        "--checkpoint",
        p(&ckpt),
        "--out",
        p(&sep),
        "--ssues-iters",
        "1",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rec: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(sep.join("separate.json")).unwrap()).unwrap();
    assert_eq!(rec["inventory"].as_array().unwrap().len(), 10);
    assert_eq!(rec["weights"].as_array().unwrap().len(), 10);
    assert_eq!(rec["selected"].as_array().unwrap().len(), 2);
    let s1 = invsep::signal::read_wav(&sep.join("s1.wav")).unwrap();
    let mixture = invsep::signal::read_wav(&mix.join("mix_0000/mixture.wav")).unwrap();
    assert_eq!(s1.len(), mixture.len());

    let eval = dir.path().join("eval");
    let o = invsep(&[
        "evaluate", "--checkpoint", p(&ckpt), "--corpus", p(&corpus), "--out", p(&eval), "--n-samples", "3",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let sel = std::fs::read_to_string(eval.join("selection.csv")).unwrap();
    let mut lines = sel.lines();
    assert_eq!(lines.next().unwrap(), "sample_id,n_irrelevant,missing_mode,ids,weights,selected,at_least_one,both");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0].split(',').nth(3).unwrap().split(';').count(), 4);

    let cfg = dir.path().join("sweep.json");
    std::fs::write(
        &cfg,
        r#"{"eval": {"n_samples": 2, "seed": 5, "segment_secs": 0.5, "profile_secs": 0.5, "profile_utterance": 1},
            "n_irrelevant": [0, 2], "missing_modes": ["standard", "m2"], "ssues_iters": 1, "ssues_mode": "nt"}"#,
    )
    .unwrap();
    let sweep = dir.path().join("sweep");
    let args = [
        "sweep-inventory", "--config", p(&cfg), "--checkpoint", p(&ckpt), "--corpus", p(&corpus), "--out", p(&sweep), "--jobs", "2",
    ];
    let o = invsep(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = std::fs::read_to_string(sweep.join("summary.csv")).unwrap();
    // oracle, standard/0, standard/2 and m2/2, two iterations each; m2/0 is skipped
    assert_eq!(summary.lines().count(), 1 + 4 * 2);
    assert!(summary.lines().all(|l| !l.contains(",0,m2,")));

    let single = dir.path().join("sweep1");
    let mut args1 = args.to_vec();
    args1[8] = p(&single);
    args1[10] = "1";
    assert_eq!(code(&invsep(&args1)), 0);
    for f in ["summary.csv", "samples.csv", "selection.csv"] {
        assert_eq!(
            std::fs::read(sweep.join(f)).unwrap(),
            std::fs::read(single.join(f)).unwrap(),
            "{f} depends on --jobs"
        );
    }

    let oracle = dir.path().join("oracle");
    let o = invsep(&["evaluate", "--oracle-masks", "--corpus", p(&corpus), "--out", p(&oracle), "--n-samples", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(std::fs::read_to_string(oracle.join("summary.csv")).unwrap().contains("oracle_smm"));
}

#[test]
fn print_config_round_trips() {
    let o = invsep(&["train", "--regime", "ssusi_jt", "--print-config"]);
    assert_eq!(code(&o), 0);
    let cfg = TrainConfig::from_json(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(cfg, TrainConfig::desk(invsep::train::Regime::SsusiJt));

    let dir = tempfile::tempdir().unwrap();
    let o = invsep(&["sweep-inventory", "--corpus", "x", "--out", p(dir.path()), "--print-config", "--ssues-iters", "2"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["ssues_iters"], 2);
    assert_eq!(v["n_irrelevant"].as_array().unwrap().len(), 9);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = invsep(&["frobnicate"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).starts_with("error kind=usage"));

    let o = invsep(&["train", "--regime", "nope", "--print-config"]);
    assert_eq!(code(&o), 2);

    let missing = dir.path().join("absent");
    let o = invsep(&["evaluate", "--oracle-masks", "--corpus", p(&missing), "--out", p(&dir.path().join("e"))]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).starts_with("error kind=io code=3"));

    let bad = dir.path().join("bad.ckpt");
    std::fs::write(&bad, b"not a checkpoint").unwrap();
    let o = invsep(&[
        "separate", "--mixture", p(&bad), "--inventory", p(dir.path()), "--checkpoint", p(&bad), "--out", p(&dir.path().join("s")),
    ]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).starts_with("error kind=checkpoint"));

    let cfg = dir.path().join("cfg.json");
    let mut c = TrainConfig::desk(invsep::train::Regime::Pit);
    c.lr = -1.0;
    std::fs::write(&cfg, c.to_json().unwrap()).unwrap();
    let o = invsep(&["train", "--config", p(&cfg), "--print-config"]);
    assert_eq!(code(&o), 2);
}
