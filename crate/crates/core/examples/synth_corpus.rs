//! Synthetic speakers, a two-speaker mixture and a shuffled profile
//! inventory.
//!
//! cargo run --release --example synth_corpus

use invsep::corpus::{build_inventory, simulate_mixture, synth_utterance, CorpusManifest, InventorySpec, MissingMode, Split};
use invsep::train::fit_training_stats;

fn main() -> invsep::Result<()> {
    let manifest = CorpusManifest::generate(80, 7)?;
    println!("{} train / {} test speakers", manifest.train_ids.len(), manifest.test_ids.len());
    let test = manifest.split(Split::Test);
    for spk in &test[..3] {
        let (lo, hi) = spk.pitch_range;
        let formants: Vec<String> = spk.formants.iter().map(|f| format!("{:.0}", f.freq_hz)).collect();
        println!("speaker {}: f0 {lo:.0}-{hi:.0} Hz, formants [{}] Hz", spk.speaker_id, formants.join(", "));
    }

    let u = synth_utterance(&test[0], 2.0, 0)?;
    println!("2 s utterance: {} samples, peak {:.2}", u.len(), u.peak());

    let stats = fit_training_stats(&manifest, 1, 8, 1.0)?;
    let mix = simulate_mixture(&test[0], &test[1], 2.5, 1.0, 11, &stats)?;
    let e = [mix.sources[0].energy(), mix.sources[1].energy()];
    println!("mixture {} frames, energy ratio {:.2} dB", mix.frames(), 10.0 * (e[0] / e[1]).log10());

    for missing in [MissingMode::Standard, MissingMode::M1, MissingMode::M2] {
        let spec = InventorySpec {
            n_irrelevant: 3,
            missing,
            profile_secs: 1.0,
            profile_utterance: 1,
            shuffle_seed: 5,
        };
        let inv = build_inventory([&test[0], &test[1]], &test[2..], &spec, &stats)?;
        println!("{:>8}: inventory {:?}", missing.as_str(), inv.ids());
    }
    Ok(())
}
