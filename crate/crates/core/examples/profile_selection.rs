//! Picks the two relevant profiles out of an inventory by joint-softmax
//! correlation with the mixture embedding.
//!
//! With no argument a freshly initialized model is used, so the weights are
//! close to uniform. Pass a checkpoint trained with `ssusi_pse` or
//! `ssusi_jt` to see a trained selector.
//!
//! cargo run --release --example profile_selection -- [model.ckpt]

use std::path::Path;

use invsep::corpus::{build_inventory, simulate_mixture, CorpusManifest, InventorySpec, MissingMode, Split};
use invsep::nnet::{ModelConfig, ModelParams};
use invsep::selection::{correlate, embed, select_top2, selection_accuracy, selection_loss};
use invsep::train::fit_training_stats;

fn main() -> invsep::Result<()> {
    let manifest = CorpusManifest::generate(80, 7)?;
    let model = match std::env::args().nth(1) {
        Some(p) => ModelParams::load(Path::new(&p))?,
        None => ModelParams::new(ModelConfig::desk(17), fit_training_stats(&manifest, 1, 8, 1.0)?)?,
    };
    let test = manifest.split(Split::Test);
    let mix = simulate_mixture(&test[0], &test[1], 0.0, 1.0, 21, &model.stats)?;
    let spec = InventorySpec {
        n_irrelevant: 4,
        missing: MissingMode::Standard,
        profile_secs: 1.0,
        profile_utterance: 1,
        shuffle_seed: 9,
    };
    let inv = build_inventory([&test[0], &test[1]], &test[2..], &spec, &model.stats)?;

    let net = model.selection_net();
    let e_m = embed(net, &model.store, &mix.mix_feat)?;
    let embs = inv
        .profiles
        .iter()
        .map(|p| embed(net, &model.store, &p.features))
        .collect::<invsep::Result<Vec<_>>>()?;
    let pairs: Vec<_> = inv.ids().into_iter().zip(embs.iter()).collect();
    let r = correlate(&e_m, &pairs)?;
    for (id, w) in r.ids.iter().zip(&r.weights) {
        let mark = if mix.speaker_ids.contains(id) { "*" } else { " " };
        println!("{mark} speaker {id:>3}  w = {w:.4}");
    }
    println!("frame-weighted sum {:.9}", r.frame_weighted_sum());
    let picked = select_top2(&r.ids, &r.weights)?;
    let flags = selection_accuracy(picked, mix.speaker_ids);
    println!("selected {picked:?}, relevant {:?}, {flags:?}", mix.speaker_ids);
    println!("selection loss {:.4}", selection_loss(&r, mix.speaker_ids)?);
    Ok(())
}
