//! Selection rates and SI-SDR as irrelevant profiles are added to the
//! inventory.
//!
//! cargo run --release --example inventory_sweep -- model.ckpt [n_samples]

use std::path::Path;

use invsep::corpus::{CorpusManifest, MissingMode};
use invsep::evaluate::{eval_set, evaluate_condition, EmbeddingBank, EvalCondition, EvalConfig, ProfileBank, Refinement};
use invsep::nnet::ModelParams;

fn main() -> invsep::Result<()> {
    let mut args = std::env::args().skip(1);
    let Some(path) = args.next() else {
        eprintln!("usage: inventory_sweep <model.ckpt> [n_samples]");
        std::process::exit(2);
    };
    let model = ModelParams::load(Path::new(&path))?;
    let cfg = EvalConfig {
        n_samples: args.next().map_or(10, |s| s.parse().expect("sample count")),
        ..EvalConfig::default()
    };
    let manifest = CorpusManifest::generate(80, 7)?;
    let set = eval_set(&manifest, &model.stats, &cfg)?;
    let bank = ProfileBank::build(&manifest, &model.stats, &cfg)?;
    let embeddings = EmbeddingBank::build(&model, &bank)?;

    println!("n_irr  mode      si_sdr  at_least_one  both");
    for n in [0, 1, 2, 4, 6] {
        for missing in [MissingMode::Standard, MissingMode::M2] {
            let cond = EvalCondition::Inventory { n_irrelevant: n, missing };
            if !cond.feasible() {
                continue;
            }
            let out = evaluate_condition(&model, &model.regime, &set, &bank, &embeddings, cond, Refinement::NONE)?;
            let s = &out.summaries[0];
            let (a, b) = s.selection.map_or((f64::NAN, f64::NAN), |r| (r.at_least_one, r.both));
            println!("{n:>5}  {:<8} {:>7.2}  {a:>12.2}  {b:>4.2}", cond.mode_label(), s.mean_si_sdr_db);
        }
    }
    Ok(())
}
