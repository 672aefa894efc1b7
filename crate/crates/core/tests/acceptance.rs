//! Acceptance run: one PASS/FAIL line per criterion, with the measured
//! values next to the threshold.
//!
//! Criteria 1, 2, 3 and 6 fail the target when they fail. Criteria 4 and 5
//! depend on how far a desk-sized training budget gets, so their lines are
//! reported but do not change the exit code.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use invsep::corpus::{CorpusManifest, MissingMode};
use invsep::diagnostics::{layer_checks, loss_checks, profile_gradients, regime_checks, LAYER_TOLERANCE, LOSS_TOLERANCE};
use invsep::evaluate::{eval_set, evaluate_condition, oracle_mask_reports, EmbeddingBank, EvalCondition, EvalConfig, EvalOutput, ProfileBank, Refinement};
use invsep::metrics::summary_csv;
use invsep::nnet::{ModelConfig, ModelParams};
use invsep::signal::{istft, stft, FeatureMatrix, Waveform};
use invsep::ssues::SsuesMode;
use invsep::train::{fit_training_stats, overfit, prepare_model, train, DataSource, Regime, TrainConfig, TrainSample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const OVERFIT_STEPS: usize = 500;
const OVERFIT_LR: f64 = 1e-3;
const OVERFIT_RATIO: f64 = 0.1;
const TREND_IRRELEVANT: [usize; 5] = [0, 1, 2, 4, 6];
const SSUES_ITERATIONS: usize = 3;
const SSUES_IRRELEVANT: usize = 6;
const SSUES_SLACK_DB: f64 = 0.2;
const ORACLE_GAIN_DB: f64 = 0.5;
const MISSING_BAND_DB: f64 = 1.0;

struct Sheet {
    hard_failures: Vec<String>,
    soft_failures: Vec<String>,
}

impl Sheet {
    fn line(&mut self, id: &str, pass: bool, hard: bool, detail: String) {
        println!("{} {id} {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            if hard {
                self.hard_failures.push(id.into());
            } else {
                self.soft_failures.push(id.into());
            }
        }
    }
}

fn exactness(sheet: &mut Sheet) {
    let mut r = common::exactness(1, 0);
    for seed in 1..=5 {
        let s = common::exactness(seed, 400);
        r.instances += s.instances;
        r.joint_rows = r.joint_rows.max(s.joint_rows);
        r.weight_total = r.weight_total.max(s.weight_total);
        r.attention_rows = r.attention_rows.max(s.attention_rows);
        r.pit_asymmetric += s.pit_asymmetric;
        r.oracle_err = r.oracle_err.max(s.oracle_err);
        r.top2_mismatch += s.top2_mismatch;
    }
    sheet.line(
        "1.joint_softmax",
        r.joint_rows < 1e-6 && r.weight_total < 1e-6,
        true,
        format!("max|row sum-1|={:.1e} max|sum T_p w^p-1|={:.1e} tol=1e-6", r.joint_rows, r.weight_total),
    );
    sheet.line(
        "1.attention_rows",
        r.attention_rows < 1e-12,
        true,
        format!("max|row sum-1|={:.1e} tol=1e-12", r.attention_rows),
    );
    sheet.line(
        "1.pit_symmetry",
        r.pit_asymmetric == 0,
        true,
        format!("asymmetric instances={} of {} (exact equality)", r.pit_asymmetric, r.instances),
    );
    sheet.line(
        "1.oracles",
        r.oracle_err < 1e-10 && r.top2_mismatch == 0,
        true,
        format!(
            "max err={:.1e} top2 mismatches={} over {} instances <= 8x8 tol=1e-10",
            r.oracle_err, r.top2_mismatch, r.instances
        ),
    );
}

fn gradients(sheet: &mut Sheet) {
    let worst = |checks: &[invsep::diagnostics::GradCheck]| {
        checks.iter().map(|c| c.report.max_rel_err).fold(0.0f64, f64::max)
    };
    let layers = layer_checks(1).unwrap();
    sheet.line(
        "2.layers",
        layers.iter().all(|c| c.passed()),
        true,
        format!("{} layers/ops max rel err={:.1e} tol={LAYER_TOLERANCE:.0e}", layers.len(), worst(&layers)),
    );
    let losses = loss_checks(1).unwrap();
    sheet.line(
        "2.losses",
        losses.iter().all(|c| c.passed()),
        true,
        format!("selection and PIT max rel err={:.1e} tol={LOSS_TOLERANCE:.0e}", worst(&losses)),
    );
    let graphs = regime_checks(1, &Regime::ALL).unwrap();
    let per: Vec<String> = graphs.iter().map(|c| format!("{}={:.1e}", c.name, c.report.max_rel_err)).collect();
    sheet.line(
        "2.training_graphs",
        graphs.iter().all(|c| c.passed()),
        true,
        format!("toy size {} tol=1e-3", per.join(" ")),
    );
    let mut ok = true;
    let mut cases = Vec::new();
    for (seed, n) in [(1, 3), (2, 5), (3, 8)] {
        let pg = profile_gradients(seed, n).unwrap();
        ok &= pg.only_selected();
        let zero = pg.max_abs.iter().filter(|g| g.is_none()).count();
        cases.push(format!("{n} profiles: {zero} exactly zero"));
    }
    sheet.line("2.unselected_zero", ok, true, cases.join(", "));
}

fn signal(sheet: &mut Sheet, manifest: &CorpusManifest, stats: &invsep::signal::NormalizationStats) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for len in [1usize, 255, 256, 257, 4000, 16_000, 48_017] {
        let x: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = istft(&stft(&Waveform::new(x.clone()).unwrap()).unwrap()).unwrap();
        assert_eq!(y.len(), len);
        for (a, b) in x.iter().zip(y.samples()) {
            worst = worst.max((a - b).abs());
        }
    }
    sheet.line("3.stft_round_trip", worst < 1e-6, true, format!("max abs err={worst:.1e} tol=1e-6"));

    let cfg = EvalConfig::default();
    let set = eval_set(manifest, stats, &cfg).unwrap();
    let reports = oracle_mask_reports(&set).unwrap();
    let mean = reports.iter().map(|r| r.mean_si_sdr()).sum::<f64>() / reports.len() as f64;
    sheet.line(
        "3.oracle_smm",
        reports.len() == 50 && mean >= 12.0,
        true,
        format!("mean SI-SDR={mean:.2} dB over {} test mixtures, need >= 12", reports.len()),
    );
}

/// Keeps the first frame of every inventory profile.
fn single_frame_profiles(samples: &[TrainSample]) -> Vec<TrainSample> {
    samples
        .iter()
        .map(|s| {
            let mut s = s.clone();
            for p in &mut s.inventory.profiles {
                let v = p.features.values.slice(ndarray::s![0..1, ..]).to_owned();
                p.features = FeatureMatrix::new(v, p.features.kind);
            }
            s
        })
        .collect()
}

fn overfits(sheet: &mut Sheet, manifest: &CorpusManifest, stats: &invsep::signal::NormalizationStats) {
    let t = Instant::now();
    let base = TrainConfig::desk(Regime::Pit);
    let mut data = DataSource::new(manifest.clone(), stats.clone(), &base);
    let samples: Vec<TrainSample> = (0..4).map(|i| data.sample(9_999, i).unwrap()).collect();
    let init = ModelParams::new(base.model.clone(), stats.clone()).unwrap();
    let run = |regime: Regime, samples: &[TrainSample]| -> (f64, f64) {
        let cfg = TrainConfig::desk(regime);
        let start = regime.needs_init().then(|| init.clone());
        let mut model = prepare_model(&cfg, stats.clone(), start).unwrap();
        let curve = overfit(&mut model, regime, samples, OVERFIT_STEPS, OVERFIT_LR).unwrap();
        (curve[0], *curve.last().unwrap())
    };
    let mut all = true;
    let mut parts = Vec::new();
    for regime in Regime::ALL {
        let (first, last) = run(regime, &samples);
        let ratio = last / first;
        all &= ratio < OVERFIT_RATIO;
        parts.push(format!("{regime}={ratio:.3}"));
        if regime == Regime::SsusiPse {
            // w^p is a mean over the T_p profile frames, so w^p <= 1/T_p and
            // each sample's loss is at least (1 - 1/T_p)^2.
            let t_p = samples[0].inventory.profiles[0].features.frames() as f64;
            let floor = 4.0 * (1.0 - 1.0 / t_p).powi(2);
            parts.push(format!("(pse floor/initial={:.3} at T_p={t_p})", floor / first));
            let (f1, l1) = run(regime, &single_frame_profiles(&samples));
            parts.push(format!("(pse with T_p=1: {:.3})", l1 / f1));
        }
    }
    sheet.line(
        "4.overfit",
        all,
        false,
        format!(
            "final/initial loss on 4 samples after {OVERFIT_STEPS} steps, need < {OVERFIT_RATIO}: {} [{:.0} s]",
            parts.join(" "),
            t.elapsed().as_secs_f64()
        ),
    );
}

struct Trained {
    pit: ModelParams,
    sep: ModelParams,
    pse: ModelParams,
    jt: ModelParams,
}

fn train_all(manifest: &CorpusManifest, stats: &invsep::signal::NormalizationStats, dir: &Path) -> Trained {
    let run = |regime: Regime, init: Option<ModelParams>| -> ModelParams {
        let t = Instant::now();
        let cfg = TrainConfig::desk(regime);
        let mut data = DataSource::new(manifest.clone(), stats.clone(), &cfg);
        let out = train(&cfg, &mut data, init, Some(&dir.join(regime.as_str())), 1).unwrap();
        println!(
            "     train {regime}: {} x {} samples, loss {:.4} -> {:.4} (best epoch {}) [{:.0} s]",
            cfg.epochs,
            cfg.samples_per_epoch,
            out.epoch_losses[0],
            out.epoch_losses[out.best_epoch],
            out.best_epoch,
            t.elapsed().as_secs_f64()
        );
        out.best
    };
    let pit = run(Regime::Pit, None);
    let sep = run(Regime::SsusiSep, None);
    let pse = run(Regime::SsusiPse, Some(sep.clone()));
    let jt = run(Regime::SsusiJt, Some(sep.clone()));
    Trained { pit, sep, pse, jt }
}

fn both_rates(out: &EvalOutput, regime: &str) -> Vec<f64> {
    TREND_IRRELEVANT
        .iter()
        .map(|&n| {
            out.summary(regime, n, "standard", 0)
                .and_then(|s| s.selection)
                .map(|r| r.both)
                .expect("standard row with selection")
        })
        .collect()
}

fn inversions(rates: &[f64]) -> usize {
    rates.windows(2).filter(|w| w[1] > w[0]).count()
}

fn trends(sheet: &mut Sheet, manifest: &CorpusManifest, stats: &invsep::signal::NormalizationStats, dir: &Path) {
    let t = Instant::now();
    let m = train_all(manifest, stats, dir);
    let cfg = EvalConfig::default();
    let set = eval_set(manifest, stats, &cfg).unwrap();
    let bank = ProfileBank::build(manifest, stats, &cfg).unwrap();
    let mut out = EvalOutput::default();
    let mut eval = |model: &ModelParams, label: &str, conds: &[EvalCondition], refine: Refinement| {
        let eb = EmbeddingBank::build(model, &bank).unwrap();
        for &c in conds {
            out.extend(evaluate_condition(model, label, &set, &bank, &eb, c, refine).unwrap());
        }
    };
    let standard: Vec<EvalCondition> = TREND_IRRELEVANT
        .iter()
        .map(|&n| EvalCondition::Inventory { n_irrelevant: n, missing: MissingMode::Standard })
        .collect();
    eval(&m.pit, "pit", &[EvalCondition::Unconditioned], Refinement::NONE);
    let mut sep_conds = vec![EvalCondition::Oracle];
    sep_conds.extend(&standard);
    eval(&m.sep, "ssusi_sep", &sep_conds, Refinement::NONE);
    eval(&m.pse, "ssusi_pse", &standard, Refinement::NONE);
    let mut jt_conds = standard.clone();
    jt_conds.retain(|c| c.n_irrelevant() != SSUES_IRRELEVANT);
    jt_conds.push(EvalCondition::Inventory { n_irrelevant: 2, missing: MissingMode::M2 });
    eval(&m.jt, "ssusi_jt", &jt_conds, Refinement::NONE);
    let ssues = Refinement { iterations: SSUES_ITERATIONS, mode: SsuesMode::Nt };
    let c6 = EvalCondition::Inventory { n_irrelevant: SSUES_IRRELEVANT, missing: MissingMode::Standard };
    eval(&m.jt, "ssusi_jt", &[c6], ssues);
    std::fs::write(dir.join("summary.csv"), summary_csv(&out.summaries)).unwrap();

    let si = |regime: &str, n: usize, mode: &str, it: usize| {
        out.summary(regime, n, mode, it).map(|s| s.mean_si_sdr_db).expect("summary row")
    };
    let pit = si("pit", 0, "none", 0);
    let oracle = si("ssusi_sep", 0, "oracle", 0);
    sheet.line(
        "5a.oracle_profiles_vs_pit",
        oracle - pit >= ORACLE_GAIN_DB,
        false,
        format!("ssusi_sep oracle {oracle:.3} dB vs pit {pit:.3} dB, gain {:+.3} dB, need >= {ORACLE_GAIN_DB}", oracle - pit),
    );

    let mut ok_b = true;
    let mut parts = Vec::new();
    for regime in ["ssusi_sep", "ssusi_pse", "ssusi_jt"] {
        let r = both_rates(&out, regime);
        let inv = inversions(&r);
        ok_b &= inv <= 1;
        let rs: Vec<String> = r.iter().map(|v| format!("{v:.2}")).collect();
        parts.push(format!("{regime} [{}] inversions={inv}", rs.join(" ")));
    }
    sheet.line(
        "5b.selection_vs_irrelevant",
        ok_b,
        false,
        format!("both-correct over n_irr {TREND_IRRELEVANT:?}: {}; allow <= 1 inversion", parts.join("; ")),
    );

    let sep = both_rates(&out, "ssusi_sep");
    let pse = both_rates(&out, "ssusi_pse");
    let mut ok_c = true;
    let mut parts = Vec::new();
    for (k, &n) in TREND_IRRELEVANT.iter().enumerate() {
        if n >= 2 {
            ok_c &= pse[k] >= sep[k];
            parts.push(format!("n_irr={n} pse {:.2} sep {:.2}", pse[k], sep[k]));
        }
    }
    sheet.line("5c.pse_vs_sep_selection", ok_c, false, parts.join(", "));

    let iters: Vec<f64> = (0..=SSUES_ITERATIONS).map(|i| si("ssusi_jt", SSUES_IRRELEVANT, "standard", i)).collect();
    let first_ok = iters[1] >= iters[0];
    let mono_ok = iters[1..].windows(2).all(|w| w[1] >= w[0] - SSUES_SLACK_DB);
    let its: Vec<String> = iters.iter().map(|v| format!("{v:.2}")).collect();
    sheet.line(
        "5d.ssues_iterations",
        first_ok && mono_ok,
        false,
        format!(
            "ssusi_jt n_irr={SSUES_IRRELEVANT} ssues-nt SI-SDR by iteration [{}] dB; iter1 >= first pass, iter1..3 within {SSUES_SLACK_DB} dB slack",
            its.join(" ")
        ),
    );

    let m2 = si("ssusi_jt", 2, "m2", 0);
    sheet.line(
        "5e.missing_both_vs_pit",
        (m2 - pit).abs() <= MISSING_BAND_DB,
        false,
        format!("ssusi_jt m2 (2 irrelevant) {m2:.2} dB vs pit {pit:.2} dB, diff {:+.2}, need within +-{MISSING_BAND_DB}", m2 - pit),
    );
    println!("     trend stage {:.0} s, summary in {}", t.elapsed().as_secs_f64(), dir.join("summary.csv").display());
}

fn invsep(args: &[&str]) {
    let o = Command::new(env!("CARGO_BIN_EXE_invsep")).args(args).output().unwrap();
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn file_digest(path: &Path) -> String {
    ModelParams::load(path).unwrap().digest().unwrap()
}

fn determinism(sheet: &mut Sheet, dir: &Path) {
    let corpus = dir.join("corpus");
    let s = |p: &Path| p.to_str().unwrap().to_string();
    invsep(&["synth-corpus", "--out", &s(&corpus)]);
    let cfg = TrainConfig {
        epochs: 2,
        samples_per_epoch: 12,
        batch: 4,
        model: ModelConfig { embed_dim: 8, hidden: 12, layers: 1, ..ModelConfig::desk(5) },
        ..TrainConfig::desk(Regime::SsusiSep)
    };
    let cfg_path = dir.join("train.json");
    std::fs::write(&cfg_path, cfg.to_json().unwrap()).unwrap();
    let sweep = dir.join("sweep.json");
    std::fs::write(
        &sweep,
        r#"{"eval": {"n_samples": 6, "seed": 101, "segment_secs": 1.0, "profile_secs": 1.0, "profile_utterance": 1},
            "n_irrelevant": [0, 2], "missing_modes": ["standard", "m1"], "ssues_iters": 1, "ssues_mode": "nt"}"#,
    )
    .unwrap();
    let mut same = true;
    let mut compared = 0;
    let mut digest = String::new();
    for run in ["a", "b"] {
        let t = dir.join(format!("train_{run}"));
        invsep(&["train", "--config", &s(&cfg_path), "--corpus", &s(&corpus), "--out", &s(&t)]);
        let e = dir.join(format!("sweep_{run}"));
        let ck = s(&t.join("best.ckpt"));
        invsep(&["sweep-inventory", "--config", &s(&sweep), "--checkpoint", &ck, "--corpus", &s(&corpus), "--out", &s(&e)]);
        if run == "a" {
            digest = file_digest(&t.join("best.ckpt"));
            continue;
        }
        let a = |p: &str| dir.join("train_a").join(p);
        same &= digest == file_digest(&t.join("best.ckpt")) && file_digest(&a("last.ckpt")) == file_digest(&t.join("last.ckpt"));
        compared += 2;
        let files = [("train", "loss.csv"), ("train", "config.json"), ("sweep", "summary.csv"), ("sweep", "samples.csv"), ("sweep", "selection.csv")];
        for (stage, f) in files {
            let x = std::fs::read(dir.join(format!("{stage}_a")).join(f)).unwrap();
            let y = std::fs::read(dir.join(format!("{stage}_b")).join(f)).unwrap();
            same &= x == y;
            compared += 1;
        }
    }
    sheet.line(
        "6.determinism",
        same,
        true,
        format!("rerun of synth-corpus/train/sweep-inventory: {compared} outputs byte-identical, checkpoint sha256 {}", &digest[..16]),
    );
}

fn main() {
    let start = Instant::now();
    let mut sheet = Sheet { hard_failures: Vec::new(), soft_failures: Vec::new() };
    let dir = tempfile::tempdir().unwrap();
    let desk = TrainConfig::desk(Regime::Pit);
    let manifest = CorpusManifest::generate(desk.speakers, desk.corpus_seed).unwrap();
    let stats = fit_training_stats(&manifest, desk.corpus_seed, 32, desk.segment_secs).unwrap();

    let stage = |name: &str, t: Instant| println!("     {name} {:.1} s", t.elapsed().as_secs_f64());
    let t = Instant::now();
    exactness(&mut sheet);
    stage("exactness", t);
    let t = Instant::now();
    gradients(&mut sheet);
    stage("gradients", t);
    let t = Instant::now();
    signal(&mut sheet, &manifest, &stats);
    stage("signal", t);
    overfits(&mut sheet, &manifest, &stats);
    trends(&mut sheet, &manifest, &stats, dir.path());
    let t = Instant::now();
    determinism(&mut sheet, dir.path());
    stage("determinism", t);

    println!(
        "acceptance: {} hard failures {:?}, {} reported failures {:?}, {:.0} s",
        sheet.hard_failures.len(),
        sheet.hard_failures,
        sheet.soft_failures.len(),
        sheet.soft_failures,
        start.elapsed().as_secs_f64()
    );
    if !sheet.hard_failures.is_empty() {
        std::process::exit(1);
    }
}
