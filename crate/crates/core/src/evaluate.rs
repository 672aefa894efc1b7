//! Held-out evaluation: test mixtures, profile banks, and condition sweeps
//! over inventory size, missing-profile mode and refinement iteration.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    derive_seed, inventory_members, make_profile, simulate_mixture, CorpusManifest, InventorySpec,
    MissingMode, MixtureSample, SpeakerId, SpeakerProfile, Split, SNR_RANGE_DB,
};
use crate::error::{Error, Result};
use crate::metrics::{aggregate, permute_score, ConditionKey, ConditionSummary, SdrReport};
use crate::nnet::ModelParams;
use crate::selection::{embed, selection_accuracy, Embedding, SelectionFlags};
use crate::separation::{first_pass_embedded, InventoryEmbeddings, MaskPair};
use crate::signal::{resynthesize, smm_target, NormalizationStats};
use crate::ssues::{output_permutation_tracking, ssues_iterate, SsuesMode};

/// Inventory sizes of the standard sweep.
pub const SWEEP_IRRELEVANT: [usize; 9] = [0, 1, 2, 3, 4, 5, 6, 22, 30];

const TAG_EVAL: u64 = 0x4556_414c;
const TAG_INVENTORY: u64 = 0x494e_5645;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub segment_secs: f64,
    pub profile_secs: f64,
    /// Profile utterance index used for every enrolled speaker.
    pub profile_utterance: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_samples: 50,
            seed: 101,
            segment_secs: 1.0,
            profile_secs: 1.0,
            profile_utterance: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalSample {
    pub id: u64,
    pub snr_db: f64,
    pub mixture: MixtureSample,
}

impl EvalSample {
    pub fn relevant(&self) -> [SpeakerId; 2] {
        self.mixture.speaker_ids
    }
}

/// Mixtures of two distinct test speakers.
pub fn eval_set(manifest: &CorpusManifest, stats: &NormalizationStats, cfg: &EvalConfig) -> Result<Vec<EvalSample>> {
    mixture_set(manifest, Split::Test, stats, cfg)
}

/// Mixtures of two distinct speakers of `split`, one seed per sample id.
pub fn mixture_set(
    manifest: &CorpusManifest,
    split: Split,
    stats: &NormalizationStats,
    cfg: &EvalConfig,
) -> Result<Vec<EvalSample>> {
    let test = manifest.split(split);
    if test.len() < 2 {
        return Err(Error::InvalidArgument("need two speakers in the split".into()));
    }
    (0..cfg.n_samples as u64)
        .map(|id| {
            let seed = derive_seed(cfg.seed, &[TAG_EVAL, id]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = rng.random_range(0..test.len());
            let b = (a + rng.random_range(1..test.len())) % test.len();
            let snr = rng.random_range(SNR_RANGE_DB.0..=SNR_RANGE_DB.1);
            let mixture = simulate_mixture(&test[a], &test[b], snr, cfg.segment_secs, seed, stats)?;
            Ok(EvalSample { id, snr_db: snr, mixture })
        })
        .collect()
}

/// One enrollment profile per speaker of the manifest.
#[derive(Debug, Clone)]
pub struct ProfileBank {
    pub profiles: HashMap<SpeakerId, SpeakerProfile>,
}

impl ProfileBank {
    pub fn build(manifest: &CorpusManifest, stats: &NormalizationStats, cfg: &EvalConfig) -> Result<Self> {
        let profiles = manifest
            .speakers
            .iter()
            .map(|s| Ok((s.speaker_id, make_profile(s, cfg.profile_secs, cfg.profile_utterance, stats)?)))
            .collect::<Result<_>>()?;
        Ok(Self { profiles })
    }

    pub fn get(&self, id: SpeakerId) -> Result<&SpeakerProfile> {
        self.profiles.get(&id).ok_or(Error::MissingSpeaker(id))
    }

    /// Every speaker id, ascending.
    pub fn ids(&self) -> Vec<SpeakerId> {
        let mut ids: Vec<_> = self.profiles.keys().copied().collect();
        ids.sort_unstable();
        ids
    }
}

/// Profile embeddings of a bank under one model.
pub struct EmbeddingBank {
    selection: HashMap<SpeakerId, Embedding>,
    separation: Option<HashMap<SpeakerId, Embedding>>,
}

impl EmbeddingBank {
    pub fn build(model: &ModelParams, bank: &ProfileBank) -> Result<Self> {
        let all = |net| -> Result<HashMap<SpeakerId, Embedding>> {
            bank.ids()
                .into_iter()
                .map(|id| Ok((id, embed(net, &model.store, &bank.get(id)?.features)?)))
                .collect()
        };
        Ok(Self {
            selection: all(model.selection_net())?,
            separation: model.selection.as_ref().map(|_| all(&model.separation.embed)).transpose()?,
        })
    }

    pub fn inventory(&self, members: &[SpeakerId]) -> Result<InventoryEmbeddings> {
        let pick = |m: &HashMap<SpeakerId, Embedding>| -> Result<Vec<Embedding>> {
            members
                .iter()
                .map(|id| m.get(id).cloned().ok_or(Error::MissingSpeaker(*id)))
                .collect()
        };
        Ok(InventoryEmbeddings {
            ids: members.to_vec(),
            selection: pick(&self.selection)?,
            separation: self.separation.as_ref().map(pick).transpose()?,
        })
    }
}

/// How the first pass is conditioned during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalCondition {
    /// Zero biases.
    Unconditioned,
    /// Relevant profiles given directly.
    Oracle,
    /// Selection from an inventory.
    Inventory { n_irrelevant: usize, missing: MissingMode },
}

impl EvalCondition {
    pub fn mode_label(self) -> &'static str {
        match self {
            EvalCondition::Unconditioned => "none",
            EvalCondition::Oracle => "oracle",
            EvalCondition::Inventory { missing, .. } => missing.as_str(),
        }
    }

    pub fn n_irrelevant(self) -> usize {
        match self {
            EvalCondition::Inventory { n_irrelevant, .. } => n_irrelevant,
            _ => 0,
        }
    }

    /// Inventories smaller than two profiles are skipped, as they cannot
    /// be selected from.
    pub fn feasible(self) -> bool {
        match self {
            EvalCondition::Inventory { n_irrelevant, missing } => missing.relevant_present() + n_irrelevant >= 2,
            _ => true,
        }
    }
}

/// Per-sample selection outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRecord {
    pub sample_id: u64,
    pub n_irrelevant: usize,
    pub missing_mode: String,
    pub ids: Vec<SpeakerId>,
    pub weights: Vec<f64>,
    pub selected: [SpeakerId; 2],
    pub flags: SelectionFlags,
}

#[derive(Debug, Clone, Default)]
pub struct EvalOutput {
    pub summaries: Vec<ConditionSummary>,
    pub selections: Vec<SelectionRecord>,
    /// `(condition, per-iteration reports)` per sample.
    pub reports: Vec<(ConditionKey, SdrReport)>,
}

impl EvalOutput {
    pub fn extend(&mut self, other: EvalOutput) {
        self.summaries.extend(other.summaries);
        self.selections.extend(other.selections);
        self.reports.extend(other.reports);
    }

    pub fn summary(&self, regime: &str, n_irrelevant: usize, mode: &str, iteration: usize) -> Option<&ConditionSummary> {
        self.summaries.iter().find(|s| {
            s.key.regime == regime
                && s.key.n_irrelevant == n_irrelevant
                && s.key.missing_mode == mode
                && s.key.iteration == iteration
        })
    }
}

/// Refinement settings; `iterations = 0` scores the first pass only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Refinement {
    pub iterations: usize,
    pub mode: SsuesMode,
}

impl Refinement {
    pub const NONE: Refinement = Refinement {
        iterations: 0,
        mode: SsuesMode::Nt,
    };
}

/// Scores one condition over the evaluation set, one summary row per
/// iteration.
pub fn evaluate_condition(
    model: &ModelParams,
    label: &str,
    set: &[EvalSample],
    bank: &ProfileBank,
    embeddings: &EmbeddingBank,
    condition: EvalCondition,
    refinement: Refinement,
) -> Result<EvalOutput> {
    if !condition.feasible() {
        return Err(Error::InsufficientInventory(condition.n_irrelevant()));
    }
    let mut per_iter: Vec<Vec<SdrReport>> = vec![Vec::new(); refinement.iterations + 1];
    let mut flags = Vec::new();
    let mut out = EvalOutput::default();
    let pool = bank.ids();
    for s in set {
        let mix = &s.mixture;
        let e_m = embed(&model.separation.embed, &model.store, &mix.mix_feat)?;
        let inv = match condition {
            EvalCondition::Unconditioned => InventoryEmbeddings {
                ids: Vec::new(),
                selection: Vec::new(),
                separation: None,
            },
            EvalCondition::Oracle => oracle_embeddings(model, bank, s.relevant())?,
            EvalCondition::Inventory { n_irrelevant, missing } => {
                let spec = InventorySpec {
                    n_irrelevant,
                    missing,
                    profile_secs: 0.0,
                    profile_utterance: 0,
                    shuffle_seed: derive_seed(s.id, &[TAG_INVENTORY, n_irrelevant as u64, missing as u64]),
                };
                embeddings.inventory(&inventory_members(s.relevant(), &pool, &spec)?)?
            }
        };
        let fp = match condition {
            EvalCondition::Oracle => oracle_pass(model, mix, &e_m, &inv)?,
            _ => first_pass_embedded(model, &mix.mix_feat, Some(&e_m), &inv)?,
        };
        if let (Some(corr), Some(sel)) = (&fp.correlation, fp.selected) {
            let f = selection_accuracy((sel[0], sel[1]), s.relevant());
            if condition.mode_label() == MissingMode::Standard.as_str() {
                flags.push((f.at_least_one, f.both));
            }
            out.selections.push(SelectionRecord {
                sample_id: s.id,
                n_irrelevant: condition.n_irrelevant(),
                missing_mode: condition.mode_label().to_string(),
                ids: corr.ids.clone(),
                weights: corr.weights.clone(),
                selected: sel,
                flags: f,
            });
        }
        let refs = [&mix.sources[0], &mix.sources[1]];
        let reports = if refinement.iterations == 0 {
            vec![score_masks(&fp.masks, mix, s.id)?]
        } else {
            let trace = ssues_iterate(&fp.masks, &mix.mix_feat, &mix.mix_mag, model, refinement.iterations, refinement.mode)?;
            output_permutation_tracking(&trace, &mix.mix_spec, refs, s.id)?
        };
        for (it, r) in reports.into_iter().enumerate() {
            out.reports.push((key(label, condition, it), r.clone()));
            per_iter[it].push(r);
        }
    }
    let flags = (!flags.is_empty()).then_some(flags);
    for (it, reports) in per_iter.iter().enumerate() {
        out.summaries
            .push(aggregate(key(label, condition, it), reports, flags.as_deref())?);
    }
    Ok(out)
}

fn key(label: &str, condition: EvalCondition, iteration: usize) -> ConditionKey {
    ConditionKey {
        regime: label.to_string(),
        n_irrelevant: condition.n_irrelevant(),
        missing_mode: condition.mode_label().to_string(),
        iteration,
    }
}

fn oracle_embeddings(model: &ModelParams, bank: &ProfileBank, ids: [SpeakerId; 2]) -> Result<InventoryEmbeddings> {
    let e = |id| embed(&model.separation.embed, &model.store, &bank.get(id)?.features);
    Ok(InventoryEmbeddings {
        ids: ids.to_vec(),
        selection: vec![e(ids[0])?, e(ids[1])?],
        separation: None,
    })
}

fn oracle_pass(
    model: &ModelParams,
    mix: &MixtureSample,
    e_m: &Embedding,
    inv: &InventoryEmbeddings,
) -> Result<crate::separation::FirstPass> {
    use crate::separation::{align_bias, separate, FirstPass};
    let b1 = align_bias(e_m, &inv.selection[0])?;
    let b2 = align_bias(e_m, &inv.selection[1])?;
    Ok(FirstPass {
        masks: separate(&model.separation.separator, &model.store, &mix.mix_feat, e_m, &b1, &b2)?,
        correlation: None,
        selected: None,
        fallback: false,
    })
}

/// Resynthesizes both masks with the mixture phase and scores them.
pub fn score_masks(masks: &MaskPair, mix: &MixtureSample, sample_id: u64) -> Result<SdrReport> {
    let est = [
        resynthesize(masks.m1(), &mix.mix_spec)?,
        resynthesize(masks.m2(), &mix.mix_spec)?,
    ];
    permute_score(sample_id, [&est[0], &est[1]], [&mix.sources[0], &mix.sources[1]])
}

/// Scores the clipped spectral magnitude masks of the clean sources.
pub fn oracle_mask_reports(set: &[EvalSample]) -> Result<Vec<SdrReport>> {
    set.iter()
        .map(|s| {
            let m = &s.mixture;
            let masks = MaskPair {
                masks: [smm_target(&m.targets[0], &m.mix_mag)?, smm_target(&m.targets[1], &m.mix_mag)?],
            };
            score_masks(&masks, m, s.id)
        })
        .collect()
}

/// The conditions a model of `regime` is evaluated under.
pub fn conditions_for(regime: crate::train::Regime, n_irrelevant: &[usize], modes: &[MissingMode]) -> Vec<EvalCondition> {
    use crate::train::Regime;
    match regime {
        Regime::Pit => vec![EvalCondition::Unconditioned],
        _ => {
            let mut c = vec![EvalCondition::Oracle];
            for &missing in modes {
                for &n in n_irrelevant {
                    let cond = EvalCondition::Inventory { n_irrelevant: n, missing };
                    if cond.feasible() {
                        c.push(cond);
                    }
                }
            }
            c
        }
    }
}

/// Column order of the per-sample selection CSV.
pub const SELECTION_COLUMNS: [&str; 8] = [
    "sample_id",
    "n_irrelevant",
    "missing_mode",
    "ids",
    "weights",
    "selected",
    "at_least_one",
    "both",
];

/// Lists are `;`-separated, in inventory order.
pub fn selection_csv(records: &[SelectionRecord]) -> String {
    let mut out = SELECTION_COLUMNS.join(",");
    out.push('\n');
    for r in records {
        let ids: Vec<String> = r.ids.iter().map(|i| i.to_string()).collect();
        let ws: Vec<String> = r.weights.iter().map(|w| format!("{w:.9e}")).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{};{},{},{}",
            r.sample_id,
            r.n_irrelevant,
            r.missing_mode,
            ids.join(";"),
            ws.join(";"),
            r.selected[0],
            r.selected[1],
            r.flags.at_least_one,
            r.flags.both
        );
    }
    out
}

/// Column order of the per-sample score CSV.
pub const SAMPLE_COLUMNS: [&str; 11] = [
    "regime",
    "n_irrelevant",
    "missing_mode",
    "iteration",
    "sample_id",
    "permutation",
    "sdr_1",
    "sdr_2",
    "si_sdr_1",
    "si_sdr_2",
    "mean_si_sdr",
];

pub fn sample_csv(reports: &[(ConditionKey, SdrReport)]) -> String {
    let mut out = SAMPLE_COLUMNS.join(",");
    out.push('\n');
    for (k, r) in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            k.regime,
            k.n_irrelevant,
            k.missing_mode,
            k.iteration,
            r.sample_id,
            r.permutation.as_str(),
            r.sdr_db[0],
            r.sdr_db[1],
            r.si_sdr_db[0],
            r.si_sdr_db[1],
            r.mean_si_sdr()
        );
    }
    out
}
