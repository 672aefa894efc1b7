//! Training for the five regimes with online mixture simulation.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    derive_seed, inventory_members, make_profile, mix_sources, synth_utterance, CorpusManifest,
    Inventory, InventorySpec, MissingMode, MixtureSample, SpeakerId, SpeakerProfile, Split,
    DOMAIN_MIXTURE, SNR_RANGE_DB,
};
use crate::error::{Error, Result};
use crate::nnet::{Adam, AdamConfig, Gradients, Graph, ModelConfig, ModelParams, ParamId};
use crate::selection::{correlate_graph, selection_loss_graph};
use crate::separation::{first_pass_graph, Conditioning};
use crate::signal::{fit_normalization, log_magnitude, stft, FeatureMatrix, NormalizationStats};
use crate::ssues::refine_graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Pit,
    SsusiSep,
    SsusiPse,
    SsusiJt,
    SsuesJt,
}

impl Regime {
    pub const ALL: [Regime; 5] = [
        Regime::Pit,
        Regime::SsusiSep,
        Regime::SsusiPse,
        Regime::SsusiJt,
        Regime::SsuesJt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Pit => "pit",
            Regime::SsusiSep => "ssusi_sep",
            Regime::SsusiPse => "ssusi_pse",
            Regime::SsusiJt => "ssusi_jt",
            Regime::SsuesJt => "ssues_jt",
        }
    }

    /// Learning rates of the full-scale schedule.
    pub fn reference_lr(self) -> f64 {
        match self {
            Regime::Pit | Regime::SsusiSep => 1e-4,
            Regime::SsusiPse => 1e-6,
            Regime::SsusiJt | Regime::SsuesJt => 1e-5,
        }
    }

    /// Learning rates used at desk scale, where runs are a few thousand
    /// steps long.
    pub fn desk_lr(self) -> f64 {
        match self {
            Regime::Pit | Regime::SsusiSep => 1e-3,
            Regime::SsusiPse => 1e-3,
            Regime::SsusiJt | Regime::SsuesJt => 3e-4,
        }
    }

    pub fn uses_inventory(self) -> bool {
        matches!(self, Regime::SsusiPse | Regime::SsusiJt | Regime::SsuesJt)
    }

    /// Whether training must start from an existing checkpoint.
    pub fn needs_init(self) -> bool {
        matches!(self, Regime::SsusiPse | Regime::SsusiJt | Regime::SsuesJt)
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown regime {s:?}")))
    }
}

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub regime: Regime,
    pub lr: f64,
    pub epochs: usize,
    pub samples_per_epoch: usize,
    pub batch: usize,
    /// Seed of the online mixture stream.
    pub data_seed: u64,
    pub corpus_seed: u64,
    pub speakers: usize,
    pub segment_secs: f64,
    pub profile_secs: f64,
    /// Irrelevant profiles per training inventory.
    pub n_irrelevant: usize,
    /// Distinct mixture utterances per speaker in the online pool.
    pub utterances_per_speaker: usize,
    /// Write a checkpoint every this many epochs; 0 writes only the final
    /// and best ones.
    pub checkpoint_every: usize,
    pub init_from: Option<PathBuf>,
    pub model: ModelConfig,
}

impl TrainConfig {
    /// Full-scale schedule: reference learning rates, 3 s segments.
    pub fn reference(regime: Regime) -> Self {
        Self {
            regime,
            lr: regime.reference_lr(),
            epochs: 20,
            samples_per_epoch: 512,
            batch: 8,
            data_seed: 1,
            corpus_seed: 7,
            speakers: CorpusManifest::DEFAULT_SPEAKERS,
            segment_secs: 3.0,
            profile_secs: 3.0,
            n_irrelevant: 2,
            utterances_per_speaker: 16,
            checkpoint_every: 5,
            init_from: None,
            model: ModelConfig::desk(17),
        }
    }

    /// Desk schedule sized for a single CPU core.
    pub fn desk(regime: Regime) -> Self {
        Self {
            lr: regime.desk_lr(),
            epochs: 20,
            samples_per_epoch: 512,
            batch: 4,
            segment_secs: 1.0,
            profile_secs: 1.0,
            checkpoint_every: 0,
            ..Self::reference(regime)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be > 0, got {}", self.lr));
        }
        if self.epochs == 0 || self.samples_per_epoch == 0 || self.batch == 0 {
            return bad("epochs, samples_per_epoch and batch must be positive".into());
        }
        if self.utterances_per_speaker == 0 {
            return bad("utterances_per_speaker must be positive".into());
        }
        self.model.validate()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }
}

/// One training example with everything any regime needs.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub mixture: MixtureSample,
    /// Relevant profiles in target order.
    pub oracle_profiles: [FeatureMatrix; 2],
    pub inventory: Inventory,
}

/// Online mixture simulation over the training speakers with cached
/// utterances and profiles.
pub struct DataSource {
    manifest: CorpusManifest,
    train_ids: Vec<SpeakerId>,
    stats: NormalizationStats,
    seed: u64,
    segment_secs: f64,
    profile_secs: f64,
    n_irrelevant: usize,
    utterances_per_speaker: usize,
    utterances: HashMap<(SpeakerId, u64), crate::signal::Waveform>,
    profiles: HashMap<SpeakerId, SpeakerProfile>,
}

const TAG_STATS: u64 = 0x5354_4154;
const TAG_STREAM: u64 = 0x5354_524d;

fn utterance_seed(spk_seed: u64, k: u64) -> u64 {
    derive_seed(DOMAIN_MIXTURE, &[spk_seed, k])
}

impl DataSource {
    pub fn new(manifest: CorpusManifest, stats: NormalizationStats, config: &TrainConfig) -> Self {
        Self {
            train_ids: manifest.train_ids.clone(),
            manifest,
            stats,
            seed: config.data_seed,
            segment_secs: config.segment_secs,
            profile_secs: config.profile_secs,
            n_irrelevant: config.n_irrelevant,
            utterances_per_speaker: config.utterances_per_speaker,
            utterances: HashMap::new(),
            profiles: HashMap::new(),
        }
    }

    pub fn stats(&self) -> &NormalizationStats {
        &self.stats
    }

    pub fn manifest(&self) -> &CorpusManifest {
        &self.manifest
    }

    fn utterance(&mut self, id: SpeakerId, k: u64) -> Result<crate::signal::Waveform> {
        if let Some(w) = self.utterances.get(&(id, k)) {
            return Ok(w.clone());
        }
        let spk = self.manifest.speaker(id).ok_or(Error::MissingSpeaker(id))?;
        let w = synth_utterance(spk, self.segment_secs, utterance_seed(spk.rng_seed, k))?;
        self.utterances.insert((id, k), w.clone());
        Ok(w)
    }

    fn profile(&mut self, id: SpeakerId) -> Result<SpeakerProfile> {
        if let Some(p) = self.profiles.get(&id) {
            return Ok(p.clone());
        }
        let spk = self.manifest.speaker(id).ok_or(Error::MissingSpeaker(id))?;
        let p = make_profile(spk, self.profile_secs, 0, &self.stats)?;
        self.profiles.insert(id, p.clone());
        Ok(p)
    }

    /// Sample `index` of `epoch`; a pure function of the seeds.
    pub fn sample(&mut self, epoch: u64, index: u64) -> Result<TrainSample> {
        let seed = derive_seed(self.seed, &[TAG_STREAM, epoch, index]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.train_ids.len();
        let a = rng.random_range(0..n);
        let b = (a + rng.random_range(1..n)) % n;
        let ids = [self.train_ids[a], self.train_ids[b]];
        let u = self.utterances_per_speaker as u64;
        let ua = self.utterance(ids[0], rng.random_range(0..u))?;
        let ub = self.utterance(ids[1], rng.random_range(0..u))?;
        let snr = rng.random_range(SNR_RANGE_DB.0..=SNR_RANGE_DB.1);
        let mixture = mix_sources(&ua, &ub, snr, ids, &self.stats)?;
        let spec = InventorySpec {
            n_irrelevant: self.n_irrelevant,
            missing: MissingMode::Standard,
            profile_secs: self.profile_secs,
            profile_utterance: 0,
            shuffle_seed: seed,
        };
        let members = inventory_members(ids, &self.train_ids.clone(), &spec)?;
        let profiles = members
            .into_iter()
            .map(|id| self.profile(id))
            .collect::<Result<Vec<_>>>()?;
        let oracle_profiles = [
            self.profile(ids[0])?.features,
            self.profile(ids[1])?.features,
        ];
        Ok(TrainSample {
            mixture,
            oracle_profiles,
            inventory: Inventory {
                profiles,
                relevant_ids: Some(ids),
            },
        })
    }
}

/// Per-bin statistics fitted on `n` training mixtures.
pub fn fit_training_stats(manifest: &CorpusManifest, seed: u64, n: usize, segment_secs: f64) -> Result<NormalizationStats> {
    let identity = NormalizationStats::identity(crate::signal::NUM_BINS);
    let train = manifest.split(Split::Train);
    if train.len() < 2 {
        return Err(Error::InvalidArgument("need two training speakers".into()));
    }
    let mut feats = Vec::with_capacity(n);
    for i in 0..n as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[TAG_STATS, i]));
        let a = rng.random_range(0..train.len());
        let b = (a + rng.random_range(1..train.len())) % train.len();
        let snr = rng.random_range(SNR_RANGE_DB.0..=SNR_RANGE_DB.1);
        let wa = synth_utterance(&train[a], segment_secs, utterance_seed(train[a].rng_seed, 1_000_000 + i))?;
        let wb = synth_utterance(&train[b], segment_secs, utterance_seed(train[b].rng_seed, 2_000_000 + i))?;
        let m = mix_sources(&wa, &wb, snr, [train[a].speaker_id, train[b].speaker_id], &identity)?;
        feats.push(log_magnitude(&stft(&m.mix_wave)?));
    }
    fit_normalization(feats.iter())
}

/// Parameters updated by each regime.
pub fn trainable_ids(model: &ModelParams, regime: Regime) -> Result<Vec<ParamId>> {
    let ids: Vec<ParamId> = match regime {
        Regime::Pit | Regime::SsusiSep | Regime::SsusiJt => model.store.ids_with_prefix("sep.").collect(),
        Regime::SsusiPse => {
            if model.selection.is_none() {
                return Err(Error::InvalidArgument("ssusi_pse needs a selection embedding".into()));
            }
            model.store.ids_with_prefix("sel.").collect()
        }
        Regime::SsuesJt => {
            if model.refine.is_none() {
                return Err(Error::InvalidArgument("ssues_jt needs a refinement stage".into()));
            }
            model
                .store
                .ids()
                .filter(|&id| {
                    let n = model.store.name(id);
                    n.starts_with("sep.") || n.starts_with("ref.")
                })
                .collect()
        }
    };
    Ok(ids)
}

/// Readies a model for `regime`: fresh parameters, or the init checkpoint
/// with the regime's extra modules added.
pub fn prepare_model(config: &TrainConfig, stats: NormalizationStats, init: Option<ModelParams>) -> Result<ModelParams> {
    let mut model = match init {
        Some(m) => m,
        None if config.regime.needs_init() => {
            return Err(Error::InvalidArgument(format!(
                "{} must start from a checkpoint (init_from)",
                config.regime
            )))
        }
        None => ModelParams::new(config.model.clone(), stats)?,
    };
    match config.regime {
        Regime::SsusiPse => model.add_selection_embed()?,
        Regime::SsuesJt => model.add_refine_stage()?,
        _ => {}
    }
    model.regime = config.regime.as_str().to_string();
    Ok(model)
}

#[derive(Debug, Clone)]
pub struct SampleLoss {
    /// Raw loss driving the gradients.
    pub loss: f64,
    /// Reported loss: PIT losses per time-frequency cell.
    pub reported: f64,
    pub grads: Option<Gradients>,
}

/// Loss of one sample under `regime`, with gradients if requested.
pub fn sample_loss(model: &ModelParams, regime: Regime, s: &TrainSample, grads: bool) -> Result<SampleLoss> {
    let mut g = Graph::new(&model.store);
    let mix = &s.mixture;
    let x = g.input(mix.mix_feat.values.clone());
    let targets = [mix.targets[0].values.clone(), mix.targets[1].values.clone()];
    let cells = (mix.frames() * mix.mix_mag.num_bins()).max(1) as f64;
    let pit_on = |g: &mut Graph<'_>, masks: [crate::nnet::NodeId; 2]| -> Result<crate::nnet::NodeId> {
        let est = [
            g.mul_const(masks[0], mix.mix_mag.values.clone())?,
            g.mul_const(masks[1], mix.mix_mag.values.clone())?,
        ];
        Ok(g.pit_loss(est, targets.clone())?.0)
    };
    let (loss, scale) = match regime {
        Regime::Pit => {
            let fp = first_pass_graph(&mut g, model, &model.separation, x, &Conditioning::Unconditioned)?;
            (pit_on(&mut g, fp.masks)?, cells)
        }
        Regime::SsusiSep => {
            let p = [&s.oracle_profiles[0], &s.oracle_profiles[1]];
            let fp = first_pass_graph(&mut g, model, &model.separation, x, &Conditioning::Profiles(p))?;
            (pit_on(&mut g, fp.masks)?, cells)
        }
        Regime::SsusiPse => {
            let net = model
                .selection
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("ssusi_pse needs a selection embedding".into()))?;
            let e_m = net.forward(&mut g, x)?;
            let mut embs = Vec::with_capacity(s.inventory.len());
            for p in &s.inventory.profiles {
                let leaf = g.input(p.features.values.clone());
                embs.push(net.forward(&mut g, leaf)?);
            }
            let (_, w) = correlate_graph(&mut g, e_m, &embs)?;
            let oracle = s
                .inventory
                .relevant_ids
                .ok_or_else(|| Error::InvalidArgument("inventory lacks relevant ids".into()))?;
            (selection_loss_graph(&mut g, w, &s.inventory.ids(), oracle)?, 1.0)
        }
        Regime::SsusiJt => {
            let fp = first_pass_graph(&mut g, model, &model.separation, x, &Conditioning::Inventory(&s.inventory))?;
            (pit_on(&mut g, fp.masks)?, cells)
        }
        Regime::SsuesJt => {
            let stage = model
                .refine
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("ssues_jt needs a refinement stage".into()))?;
            let fp = first_pass_graph(&mut g, model, &model.separation, x, &Conditioning::Inventory(&s.inventory))?;
            let refined = refine_graph(&mut g, stage, x, fp.masks, &mix.mix_mag.values, &model.stats)?;
            (pit_on(&mut g, refined)?, cells)
        }
    };
    let value = g.scalar(loss);
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("{regime} loss")));
    }
    let grads = if grads {
        g.backward(loss, 1.0);
        Some(g.into_param_grads())
    } else {
        None
    };
    Ok(SampleLoss {
        loss: value,
        reported: value / scale,
        grads,
    })
}

/// Sum of per-sample losses and mean gradient over a batch. Work is split
/// over `jobs` threads; gradients are summed in sample order, so the result
/// does not depend on `jobs`.
pub fn batch_step_grads(
    model: &ModelParams,
    regime: Regime,
    samples: &[TrainSample],
    jobs: usize,
) -> Result<(Vec<SampleLoss>, Gradients)> {
    let jobs = jobs.max(1).min(samples.len().max(1));
    let results: Vec<Result<SampleLoss>> = if jobs == 1 {
        samples.iter().map(|s| sample_loss(model, regime, s, true)).collect()
    } else {
        let chunk = samples.len().div_ceil(jobs);
        std::thread::scope(|scope| {
            let handles: Vec<_> = samples
                .chunks(chunk)
                .map(|c| scope.spawn(move || c.iter().map(|s| sample_loss(model, regime, s, true)).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("worker panicked"))
                .collect()
        })
    };
    let mut total = Gradients::new(model.store.len());
    let mut losses = Vec::with_capacity(samples.len());
    for r in results {
        let mut l = r?;
        if let Some(g) = l.grads.take() {
            total.add(&g);
        }
        losses.push(l);
    }
    total.scale(1.0 / samples.len().max(1) as f64);
    Ok((losses, total))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
}

pub fn loss_log_csv(log: &[LossRecord]) -> String {
    let mut out = String::from("epoch,step,loss\n");
    for r in log {
        let _ = writeln!(out, "{},{},{:.9e}", r.epoch, r.step, r.loss);
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the end of the epoch with the lowest mean loss.
    pub best: ModelParams,
    pub best_epoch: usize,
    pub last: ModelParams,
    pub log: Vec<LossRecord>,
    pub epoch_losses: Vec<f64>,
}

/// Runs the configured schedule. With `out_dir`, writes `loss.csv`,
/// `best.ckpt`, `last.ckpt` and periodic `epoch_NNN.ckpt` files.
pub fn train(
    config: &TrainConfig,
    data: &mut DataSource,
    init: Option<ModelParams>,
    out_dir: Option<&Path>,
    jobs: usize,
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut model = prepare_model(config, data.stats().clone(), init)?;
    if model.stats != *data.stats() {
        return Err(Error::InvalidArgument(
            "checkpoint normalization differs from the data source".into(),
        ));
    }
    let ids = trainable_ids(&model, config.regime)?;
    let mut opt = Adam::new(AdamConfig::with_lr(config.lr), &model.store, ids)?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut log = Vec::new();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut step = 0usize;
    for epoch in 0..config.epochs {
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut index = 0usize;
        while index < config.samples_per_epoch {
            let n = config.batch.min(config.samples_per_epoch - index);
            let batch = (index..index + n)
                .map(|i| data.sample(epoch as u64, i as u64))
                .collect::<Result<Vec<_>>>()?;
            let (losses, grads) = batch_step_grads(&model, config.regime, &batch, jobs)?;
            let mean = losses.iter().map(|l| l.reported).sum::<f64>() / n as f64;
            if !mean.is_finite() {
                return Err(Error::Diverged { step, loss: mean });
            }
            opt.step(&mut model.store, &grads).map_err(|e| match e {
                Error::NonFinite(_) => Error::Diverged { step, loss: mean },
                other => other,
            })?;
            log.push(LossRecord { epoch, step, loss: mean });
            sum += mean * n as f64;
            count += n;
            index += n;
            step += 1;
        }
        let epoch_loss = sum / count as f64;
        epoch_losses.push(epoch_loss);
        if best.as_ref().is_none_or(|b| epoch_loss < b.0) {
            best = Some((epoch_loss, epoch, model.clone()));
        }
        if let Some(dir) = out_dir {
            if config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0 {
                model.save(&dir.join(format!("epoch_{:03}.ckpt", epoch + 1)))?;
            }
        }
    }
    let (_, best_epoch, best) = best.expect("at least one epoch");
    if let Some(dir) = out_dir {
        let csv = dir.join("loss.csv");
        std::fs::write(&csv, loss_log_csv(&log)).map_err(|e| Error::io(&csv, e))?;
        best.save(&dir.join("best.ckpt"))?;
        model.save(&dir.join("last.ckpt"))?;
    }
    Ok(TrainOutcome {
        best,
        best_epoch,
        last: model,
        log,
        epoch_losses,
    })
}

/// Full-batch training on a fixed sample set; returns the total loss before
/// every step followed by the final total.
pub fn overfit(model: &mut ModelParams, regime: Regime, samples: &[TrainSample], steps: usize, lr: f64) -> Result<Vec<f64>> {
    let ids = trainable_ids(model, regime)?;
    let mut opt = Adam::new(AdamConfig::with_lr(lr), &model.store, ids)?;
    let mut curve = Vec::with_capacity(steps + 1);
    for step in 0..steps {
        let (losses, grads) = batch_step_grads(model, regime, samples, 1)?;
        let total: f64 = losses.iter().map(|l| l.loss).sum();
        if !total.is_finite() {
            return Err(Error::Diverged { step, loss: total });
        }
        curve.push(total);
        opt.step(&mut model.store, &grads)?;
    }
    let last: f64 = samples
        .iter()
        .map(|s| sample_loss(model, regime, s, false).map(|l| l.loss))
        .sum::<Result<f64>>()?;
    curve.push(last);
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regime_names_round_trip() {
        for r in Regime::ALL {
            assert_eq!(r.as_str().parse::<Regime>().unwrap(), r);
        }
        assert!("x".parse::<Regime>().is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let c = TrainConfig::desk(Regime::SsusiJt);
        assert_eq!(TrainConfig::from_json(&c.to_json().unwrap()).unwrap(), c);
        let mut bad = c;
        bad.lr = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn reference_rates() {
        assert_eq!(Regime::SsusiSep.reference_lr(), 1e-4);
        assert_eq!(Regime::SsusiPse.reference_lr(), 1e-6);
        assert_eq!(Regime::SsusiJt.reference_lr(), 1e-5);
    }

    #[test]
    fn samples_are_deterministic_and_distinct() {
        let manifest = CorpusManifest::generate(20, 3).unwrap();
        let stats = NormalizationStats::identity(crate::signal::NUM_BINS);
        let mut cfg = TrainConfig::desk(Regime::SsusiJt);
        cfg.segment_secs = 0.5;
        cfg.profile_secs = 0.5;
        let mut a = DataSource::new(manifest.clone(), stats.clone(), &cfg);
        let mut b = DataSource::new(manifest, stats, &cfg);
        let s1 = a.sample(0, 3).unwrap();
        let s2 = b.sample(0, 3).unwrap();
        assert_eq!(s1.mixture.mix_wave, s2.mixture.mix_wave);
        assert_eq!(s1.inventory, s2.inventory);
        assert_eq!(s1.inventory.len(), 4);
        let s3 = a.sample(1, 3).unwrap();
        assert_ne!(s1.mixture.mix_wave, s3.mixture.mix_wave);
    }

    #[test]
    fn init_required() {
        let cfg = TrainConfig::desk(Regime::SsusiPse);
        let stats = NormalizationStats::identity(crate::signal::NUM_BINS);
        assert!(prepare_model(&cfg, stats, None).is_err());
    }
}
