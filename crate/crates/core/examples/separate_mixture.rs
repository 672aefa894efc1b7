//! Separates one test mixture under each conditioning and refines the
//! inventory-conditioned result with estimated speech.
//!
//! cargo run --release --example separate_mixture -- model.ckpt [iterations]
//!
//! A checkpoint comes from `invsep train` or the `train_regime` example.

use std::path::Path;

use invsep::corpus::{build_inventory, make_profile, simulate_mixture, CorpusManifest, InventorySpec, MissingMode, Split};
use invsep::evaluate::score_masks;
use invsep::nnet::ModelParams;
use invsep::separation::{first_pass, Conditioning};
use invsep::ssues::{output_permutation_tracking, ssues_iterate, SsuesMode};

fn main() -> invsep::Result<()> {
    let mut args = std::env::args().skip(1);
    let Some(path) = args.next() else {
        eprintln!("usage: separate_mixture <model.ckpt> [iterations]");
        std::process::exit(2);
    };
    let iterations: usize = args.next().map_or(2, |s| s.parse().expect("iteration count"));
    let model = ModelParams::load(Path::new(&path))?;
    let manifest = CorpusManifest::generate(80, 7)?;
    let test = manifest.split(Split::Test);
    let mix = simulate_mixture(&test[3], &test[8], -1.5, 1.0, 77, &model.stats)?;

    let p = [
        make_profile(&test[3], 1.0, 1, &model.stats)?,
        make_profile(&test[8], 1.0, 1, &model.stats)?,
    ];
    let spec = InventorySpec {
        n_irrelevant: 2,
        missing: MissingMode::Standard,
        profile_secs: 1.0,
        profile_utterance: 1,
        shuffle_seed: 4,
    };
    let relevant = [&test[3], &test[8]];
    let pool: Vec<_> = test.iter().filter(|s| !relevant.iter().any(|r| r.speaker_id == s.speaker_id)).cloned().collect();
    let inv = build_inventory(relevant, &pool, &spec, &model.stats)?;

    let oracle = Conditioning::Profiles([&p[0].features, &p[1].features]);
    for (name, cond) in [("unconditioned", Conditioning::Unconditioned), ("oracle", oracle), ("inventory", Conditioning::Inventory(&inv))] {
        let fp = first_pass(&model, &mix.mix_feat, cond)?;
        let r = score_masks(&fp.masks, &mix, 0)?;
        println!("{name:>13}: SI-SDR {:.2} dB, selected {:?}", r.mean_si_sdr(), fp.selected);
    }

    if iterations > 0 {
        let fp = first_pass(&model, &mix.mix_feat, Conditioning::Inventory(&inv))?;
        let mode = if model.refine.is_some() { SsuesMode::Jt } else { SsuesMode::Nt };
        let trace = ssues_iterate(&fp.masks, &mix.mix_feat, &mix.mix_mag, &model, iterations, mode)?;
        let reports = output_permutation_tracking(&trace, &mix.mix_spec, [&mix.sources[0], &mix.sources[1]], 0)?;
        for (k, r) in reports.iter().enumerate() {
            println!("ssues {} iteration {k}: SI-SDR {:.2} dB", mode.as_str(), r.mean_si_sdr());
        }
    }
    Ok(())
}
