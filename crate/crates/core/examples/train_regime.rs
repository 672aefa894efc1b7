//! Trains one regime for a short schedule, saves the checkpoint and
//! reloads it.
//!
//! cargo run --release --example train_regime -- <regime> <out.ckpt> [init.ckpt]
//!
//! `ssusi_pse`, `ssusi_jt` and `ssues_jt` start from an existing checkpoint,
//! e.g. the output of a `ssusi_sep` run.

use std::path::Path;

use invsep::corpus::CorpusManifest;
use invsep::nnet::ModelParams;
use invsep::train::{fit_training_stats, train, DataSource, Regime, TrainConfig};

fn main() -> invsep::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() < 2 {
        eprintln!("usage: train_regime <regime> <out.ckpt> [init.ckpt]");
        std::process::exit(2);
    }
    let regime: Regime = args[0].parse()?;
    let init = args.get(2).map(|p| ModelParams::load(Path::new(p))).transpose()?;
    let config = TrainConfig {
        epochs: 2,
        samples_per_epoch: 64,
        ..TrainConfig::desk(regime)
    };
    let manifest = CorpusManifest::generate(config.speakers, config.corpus_seed)?;
    let stats = match &init {
        Some(m) => m.stats.clone(),
        None => fit_training_stats(&manifest, config.corpus_seed, 32, config.segment_secs)?,
    };
    let mut data = DataSource::new(manifest, stats, &config);
    let out = train(&config, &mut data, init, None, 1)?;
    for (e, l) in out.epoch_losses.iter().enumerate() {
        println!("epoch {e}: loss {l:.5}");
    }
    let path = Path::new(&args[1]);
    out.last.save(path)?;
    let back = ModelParams::load(path)?;
    assert_eq!(back.digest()?, out.last.digest()?);
    println!("{} parameters, sha256 {}", back.num_parameters(), back.digest()?);
    Ok(())
}
