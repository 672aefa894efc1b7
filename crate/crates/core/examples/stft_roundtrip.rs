//! Analysis/synthesis round trip and the oracle signal-approximation mask.
//!
//! cargo run --release --example stft_roundtrip

use invsep::corpus::{simulate_mixture, CorpusManifest, Split};
use invsep::metrics::si_sdr;
use invsep::signal::{istft, linear_magnitude, resynthesize, smm_target, stft, NormalizationStats, Waveform, NUM_BINS};

fn main() -> invsep::Result<()> {
    let tone: Vec<f64> = (0..16_000)
        .map(|n| (2.0 * std::f64::consts::PI * 440.0 * n as f64 / 16_000.0).sin() * 0.5)
        .collect();
    let w = Waveform::new(tone)?;
    let spec = stft(&w)?;
    let back = istft(&spec)?;
    let err = w
        .samples()
        .iter()
        .zip(back.samples())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    println!("{} frames x {} bins, max round-trip error {err:.2e}", spec.frames(), spec.num_bins());

    let manifest = CorpusManifest::generate(80, 7)?;
    let test = manifest.split(Split::Test);
    let stats = NormalizationStats::identity(NUM_BINS);
    let mix = simulate_mixture(&test[0], &test[1], 0.0, 1.0, 3, &stats)?;
    for k in 0..2 {
        let target = linear_magnitude(&stft(&mix.sources[k])?);
        let mask = smm_target(&target, &mix.mix_mag)?;
        let est = resynthesize(&mask, &mix.mix_spec)?;
        println!(
            "speaker {}: mixture {:.2} dB, oracle mask {:.2} dB",
            mix.speaker_ids[k],
            si_sdr(&mix.mix_wave, &mix.sources[k])?,
            si_sdr(&est, &mix.sources[k])?
        );
    }
    Ok(())
}
