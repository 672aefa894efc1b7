//! Deterministic synthetic speaker corpus.
//!
//! Each speaker is a harmonic-plus-noise source filtered by a fixed
//! formant envelope, with a speaker-specific pitch range. Utterances are
//! sequences of syllables with pitch glides, small per-syllable formant
//! shifts, unvoiced bursts and pauses. Every generator is a pure function of
//! its seed arguments.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{
    linear_magnitude, log_magnitude, normalize, stft, FeatureMatrix, NormalizationStats,
    Spectrogram, Waveform, NUM_BINS, SAMPLE_RATE,
};

pub type SpeakerId = u32;

/// Peak level of every synthesized utterance.
pub const PEAK_LEVEL: f64 = 0.9;
pub const MIN_DURATION: f64 = 0.5;
pub const MAX_DURATION: f64 = 10.0;
pub const SNR_RANGE_DB: (f64, f64) = (-5.0, 5.0);
/// Harmonics are synthesized up to this frequency.
const MAX_HARMONIC_HZ: f64 = 7800.0;
/// Harmonic amplitudes are refreshed every this many samples.
const AMP_BLOCK: usize = 32;

const TAG_SPEAKER: u64 = 0x5350_4b52;
const TAG_UTTERANCE: u64 = 0x5554_5452;
/// Seed domain for mixture utterances.
pub const DOMAIN_MIXTURE: u64 = 0x4d49_5854;
/// Seed domain for profile (enrollment) utterances.
pub const DOMAIN_PROFILE: u64 = 0x5052_4f46;
const TAG_SHUFFLE: u64 = 0x5348_5546;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `parts` into `base` with SplitMix64, one round per part.
///
/// Per-sample seeds are `derive_seed(run_seed, &[epoch, index])`.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Formant {
    pub freq_hz: f64,
    pub bandwidth_hz: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpeaker {
    pub speaker_id: SpeakerId,
    pub rng_seed: u64,
    pub pitch_range: (f64, f64),
    pub formants: Vec<Formant>,
    pub tilt_db_per_khz: f64,
    /// Level of the envelope-shaped breath noise relative to voicing.
    pub breathiness: f64,
    /// Sampled on the `NUM_BINS` transform bins, max-normalized to 1.
    #[serde(skip)]
    pub spectral_envelope: Vec<f64>,
}

fn envelope_at(formants: &[Formant], tilt_db_per_khz: f64, scale: &[f64], f: f64) -> f64 {
    let peaks: f64 = formants
        .iter()
        .zip(scale)
        .map(|(fm, s)| {
            let d = (f - fm.freq_hz * s) / fm.bandwidth_hz;
            fm.gain * (-0.5 * d * d).exp()
        })
        .sum();
    10f64.powf(tilt_db_per_khz * f / 1000.0 / 20.0) * (0.02 + peaks)
}

fn sample_envelope(formants: &[Formant], tilt: f64, scale: &[f64]) -> Vec<f64> {
    let df = SAMPLE_RATE as f64 / ((NUM_BINS - 1) * 2) as f64;
    let env: Vec<f64> = (0..NUM_BINS)
        .map(|k| envelope_at(formants, tilt, scale, k as f64 * df))
        .collect();
    let max = env.iter().cloned().fold(0.0, f64::max);
    env.into_iter().map(|v| v / max).collect()
}

/// Linear interpolation of a bin-sampled envelope at `f` Hz.
fn interp(env: &[f64], f: f64) -> f64 {
    let df = SAMPLE_RATE as f64 / ((env.len() - 1) * 2) as f64;
    let pos = (f / df).max(0.0);
    let i = pos.floor() as usize;
    if i + 1 >= env.len() {
        return env[env.len() - 1];
    }
    let frac = pos - i as f64;
    env[i] * (1.0 - frac) + env[i + 1] * frac
}

impl SyntheticSpeaker {
    /// Draws all speaker parameters from `rng_seed`.
    pub fn from_seed(speaker_id: SpeakerId, rng_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let f0 = 80.0 * (3.75f64).powf(rng.random::<f64>());
        let pitch_range = (f0 / 1.12, f0 * 1.12);
        let bands = [
            (250.0, 1000.0),
            (700.0, 2600.0),
            (1800.0, 3800.0),
            (3000.0, 5500.0),
        ];
        let formants = bands
            .iter()
            .enumerate()
            .map(|(i, &(lo, hi))| Formant {
                freq_hz: rng.random_range(lo..hi),
                bandwidth_hz: rng.random_range(60.0..220.0) * (1.0 + 0.3 * i as f64),
                gain: rng.random_range(0.05..1.0),
            })
            .collect();
        let tilt = rng.random_range(-12.0..0.0);
        let breathiness = rng.random_range(0.02..0.08);
        let mut spk = Self {
            speaker_id,
            rng_seed,
            pitch_range,
            formants,
            tilt_db_per_khz: tilt,
            breathiness,
            spectral_envelope: Vec::new(),
        };
        spk.refresh_envelope();
        spk
    }

    /// Recomputes `spectral_envelope` from the parametric description.
    pub fn refresh_envelope(&mut self) {
        let ones = vec![1.0; self.formants.len()];
        self.spectral_envelope = sample_envelope(&self.formants, self.tilt_db_per_khz, &ones);
    }
}

/// Deterministic harmonic-plus-noise utterance, peak-normalized to 0.9.
pub fn synth_utterance(spk: &SyntheticSpeaker, duration: f64, seed: u64) -> Result<Waveform> {
    if !(MIN_DURATION..=MAX_DURATION).contains(&duration) {
        return Err(Error::InvalidArgument(format!(
            "utterance duration {duration} s outside [{MIN_DURATION}, {MAX_DURATION}]"
        )));
    }
    let fs = SAMPLE_RATE as f64;
    let n = (duration * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spk.rng_seed, &[TAG_UTTERANCE, seed]));
    let mut voiced = vec![0.0; n];
    let mut unvoiced = vec![0.0; n];
    let (f0_lo, f0_hi) = spk.pitch_range;
    let log_span = (f0_hi / f0_lo).ln();
    let mut phase = rng.random_range(0.0..2.0 * PI);
    let mut t = 0usize;
    while t < n {
        if rng.random::<f64>() < 0.25 {
            t += (rng.random_range(0.03..0.12) * fs) as usize;
            if t >= n {
                break;
            }
        }
        let len = (rng.random_range(0.12..0.40) * fs) as usize;
        let end = (t + len).min(n);
        let gain = rng.random_range(0.4..1.0);
        let ramp_len = ((0.02 * fs) as usize).min((end - t) / 2).max(1);
        let ramp = |i: usize| -> f64 {
            let from_edge = (i - t).min(end - 1 - i);
            if from_edge >= ramp_len {
                1.0
            } else {
                let x = from_edge as f64 / ramp_len as f64;
                (0.5 * PI * x).sin().powi(2)
            }
        };
        if rng.random::<f64>() < 0.85 {
            let scale: Vec<f64> = (0..spk.formants.len())
                .map(|_| rng.random_range(0.92..1.08))
                .collect();
            let env = sample_envelope(&spk.formants, spk.tilt_db_per_khz, &scale);
            let f0a = f0_lo * (rng.random::<f64>() * log_span).exp();
            let f0b = f0_lo * (rng.random::<f64>() * log_span).exp();
            let span = (end - t).max(1) as f64;
            let mut amps: Vec<f64> = Vec::new();
            let mut i = t;
            while i < end {
                let block_end = (i + AMP_BLOCK).min(end);
                let mid = (i + block_end) as f64 * 0.5;
                let f0 = f0a * (f0b / f0a).powf((mid - t as f64) / span);
                let k_max = (MAX_HARMONIC_HZ / f0).floor() as usize;
                amps.clear();
                amps.extend((1..=k_max).map(|k| interp(&env, k as f64 * f0)));
                let dphi = 2.0 * PI * f0 / fs;
                for j in i..block_end {
                    phase += dphi;
                    if phase > 2.0 * PI {
                        phase -= 2.0 * PI;
                    }
                    let z = Complex64::new(phase.cos(), phase.sin());
                    let mut zk = z;
                    let mut acc = 0.0;
                    for &a in &amps {
                        acc += a * zk.im;
                        zk *= z;
                    }
                    let g = gain * ramp(j);
                    voiced[j] += g * acc;
                    unvoiced[j] += g * spk.breathiness * 4.0 * (rng.random::<f64>() - 0.5);
                }
                i = block_end;
            }
        } else {
            for j in t..end {
                unvoiced[j] += gain * ramp(j) * 2.0 * (rng.random::<f64>() - 0.5);
            }
        }
        t = end;
    }
    let shaped = shape_noise(&unvoiced, &spk.spectral_envelope);
    let mut out: Vec<f64> = voiced.iter().zip(&shaped).map(|(v, u)| v + u).collect();
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let g = PEAK_LEVEL / peak;
        out.iter_mut().for_each(|v| *v *= g);
    }
    Waveform::new(out)
}

/// Filters `x` by the envelope with a single full-length FFT.
fn shape_noise(x: &[f64], env: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let fs = SAMPLE_RATE as f64;
    for (j, b) in buf.iter_mut().enumerate() {
        let f = j.min(n - j) as f64 * fs / n as f64;
        *b *= interp(env, f);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

/// Fully overlapped two-speaker mixture with its clean targets.
#[derive(Debug, Clone)]
pub struct MixtureSample {
    pub mix_wave: Waveform,
    /// Scaled sources; `mix_wave` is their exact sum.
    pub sources: [Waveform; 2],
    pub mix_spec: Spectrogram,
    pub mix_mag: FeatureMatrix,
    pub mix_feat: FeatureMatrix,
    pub targets: [FeatureMatrix; 2],
    pub speaker_ids: [SpeakerId; 2],
}

impl MixtureSample {
    pub fn frames(&self) -> usize {
        self.mix_mag.frames()
    }
}

/// Normalized log-magnitude features of a waveform.
pub fn normalized_features(w: &Waveform, stats: &NormalizationStats) -> Result<FeatureMatrix> {
    normalize(&log_magnitude(&stft(w)?), stats)
}

/// Mixes two sources at `snr_db` (energy of the first over the second).
///
/// The second source is rescaled; if the sum would exceed the peak level
/// both are attenuated by the same factor.
pub fn mix_sources(
    a: &Waveform,
    b: &Waveform,
    snr_db: f64,
    speaker_ids: [SpeakerId; 2],
    stats: &NormalizationStats,
) -> Result<MixtureSample> {
    if !(SNR_RANGE_DB.0..=SNR_RANGE_DB.1).contains(&snr_db) {
        return Err(Error::InvalidArgument(format!(
            "snr {snr_db} dB outside [{}, {}]",
            SNR_RANGE_DB.0, SNR_RANGE_DB.1
        )));
    }
    let n = a.len().min(b.len());
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let a = &a.samples()[..n];
    let b = &b.samples()[..n];
    let ea: f64 = a.iter().map(|v| v * v).sum();
    let eb: f64 = b.iter().map(|v| v * v).sum();
    if ea == 0.0 || eb == 0.0 {
        return Err(Error::InvalidArgument("silent source".into()));
    }
    let gb = (ea / (eb * 10f64.powf(snr_db / 10.0))).sqrt();
    let peak = a
        .iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x + gb * y).abs()));
    let g = if peak > PEAK_LEVEL { PEAK_LEVEL / peak } else { 1.0 };
    let s1: Vec<f64> = a.iter().map(|v| v * g).collect();
    let s2: Vec<f64> = b.iter().map(|v| v * gb * g).collect();
    let mix: Vec<f64> = s1.iter().zip(&s2).map(|(x, y)| x + y).collect();
    let mix_wave = Waveform::new(mix)?;
    let sources = [Waveform::new(s1)?, Waveform::new(s2)?];
    let mix_spec = stft(&mix_wave)?;
    let targets = [
        linear_magnitude(&stft(&sources[0])?),
        linear_magnitude(&stft(&sources[1])?),
    ];
    let mix_mag = linear_magnitude(&mix_spec);
    let mix_feat = normalize(&log_magnitude(&mix_spec), stats)?;
    Ok(MixtureSample {
        mix_wave,
        sources,
        mix_spec,
        mix_mag,
        mix_feat,
        targets,
        speaker_ids,
    })
}

/// Synthesizes one utterance per speaker in the mixture seed domain and
/// mixes them.
pub fn simulate_mixture(
    spk_a: &SyntheticSpeaker,
    spk_b: &SyntheticSpeaker,
    snr_db: f64,
    duration: f64,
    seed: u64,
    stats: &NormalizationStats,
) -> Result<MixtureSample> {
    if spk_a.speaker_id == spk_b.speaker_id {
        return Err(Error::InvalidArgument(format!(
            "mixture needs two distinct speakers, got {} twice",
            spk_a.speaker_id
        )));
    }
    let ua = synth_utterance(spk_a, duration, derive_seed(DOMAIN_MIXTURE, &[seed, 0]))?;
    let ub = synth_utterance(spk_b, duration, derive_seed(DOMAIN_MIXTURE, &[seed, 1]))?;
    mix_sources(&ua, &ub, snr_db, [spk_a.speaker_id, spk_b.speaker_id], stats)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerProfile {
    pub speaker_id: SpeakerId,
    /// Normalized log-magnitude features.
    pub features: FeatureMatrix,
}

/// Enrollment profile from a profile-domain utterance.
pub fn make_profile(
    spk: &SyntheticSpeaker,
    duration: f64,
    utterance: u64,
    stats: &NormalizationStats,
) -> Result<SpeakerProfile> {
    let w = synth_utterance(spk, duration, derive_seed(DOMAIN_PROFILE, &[utterance]))?;
    Ok(SpeakerProfile {
        speaker_id: spk.speaker_id,
        features: normalized_features(&w, stats)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingMode {
    /// Both relevant profiles present.
    Standard,
    /// One relevant profile absent.
    M1,
    /// Both relevant profiles absent.
    M2,
}

impl MissingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MissingMode::Standard => "standard",
            MissingMode::M1 => "m1",
            MissingMode::M2 => "m2",
        }
    }

    pub fn relevant_present(self) -> usize {
        match self {
            MissingMode::Standard => 2,
            MissingMode::M1 => 1,
            MissingMode::M2 => 0,
        }
    }
}

impl std::str::FromStr for MissingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(MissingMode::Standard),
            "m1" => Ok(MissingMode::M1),
            "m2" => Ok(MissingMode::M2),
            other => Err(Error::InvalidArgument(format!("unknown missing mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Inventory {
    pub profiles: Vec<SpeakerProfile>,
    /// Ground-truth relevant pair, for evaluation only.
    pub relevant_ids: Option<[SpeakerId; 2]>,
}

impl Inventory {
    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn ids(&self) -> Vec<SpeakerId> {
        self.profiles.iter().map(|p| p.speaker_id).collect()
    }

    pub fn get(&self, id: SpeakerId) -> Option<&SpeakerProfile> {
        self.profiles.iter().find(|p| p.speaker_id == id)
    }
}

/// Inventory request; profile utterances come from the profile seed
/// domain, so they never coincide with mixture utterances.
#[derive(Debug, Clone, Copy)]
pub struct InventorySpec {
    pub n_irrelevant: usize,
    pub missing: MissingMode,
    pub profile_secs: f64,
    /// Profile utterance index, shared by all speakers of the inventory.
    pub profile_utterance: u64,
    pub shuffle_seed: u64,
}

/// Inventory member ids in final (shuffled) order: the relevant speakers
/// kept by `spec.missing` plus `spec.n_irrelevant` others from `pool`.
pub fn inventory_members(
    relevant: [SpeakerId; 2],
    pool: &[SpeakerId],
    spec: &InventorySpec,
) -> Result<Vec<SpeakerId>> {
    if relevant[0] == relevant[1] {
        return Err(Error::InvalidArgument(format!(
            "relevant pair repeats speaker {}",
            relevant[0]
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.shuffle_seed, &[TAG_SHUFFLE]));
    let mut candidates: Vec<SpeakerId> = pool
        .iter()
        .copied()
        .filter(|id| !relevant.contains(id))
        .collect();
    candidates.sort_unstable();
    candidates.dedup();
    if candidates.len() < spec.n_irrelevant {
        return Err(Error::PoolExhausted {
            needed: spec.n_irrelevant,
            available: candidates.len(),
        });
    }
    candidates.shuffle(&mut rng);
    let mut members: Vec<SpeakerId> = match spec.missing {
        MissingMode::Standard => relevant.to_vec(),
        MissingMode::M1 => vec![relevant[rng.random_range(0..2)]],
        MissingMode::M2 => Vec::new(),
    };
    members.extend(candidates.into_iter().take(spec.n_irrelevant));
    members.shuffle(&mut rng);
    Ok(members)
}

/// Picks irrelevant speakers from `pool`, builds profiles and shuffles the
/// order.
pub fn build_inventory(
    relevant: [&SyntheticSpeaker; 2],
    pool: &[SyntheticSpeaker],
    spec: &InventorySpec,
    stats: &NormalizationStats,
) -> Result<Inventory> {
    let ids = [relevant[0].speaker_id, relevant[1].speaker_id];
    let pool_ids: Vec<SpeakerId> = pool.iter().map(|s| s.speaker_id).collect();
    let members = inventory_members(ids, &pool_ids, spec)?;
    let lookup = |id: SpeakerId| {
        relevant
            .iter()
            .copied()
            .chain(pool.iter())
            .find(|s| s.speaker_id == id)
            .expect("member comes from relevant or pool")
    };
    let profiles = members
        .into_iter()
        .map(|id| make_profile(lookup(id), spec.profile_secs, spec.profile_utterance, stats))
        .collect::<Result<Vec<_>>>()?;
    Ok(Inventory {
        profiles,
        relevant_ids: Some(ids),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Speaker list with a disjoint train/test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub version: u32,
    pub seed: u64,
    pub speakers: Vec<SyntheticSpeaker>,
    pub train_ids: Vec<SpeakerId>,
    pub test_ids: Vec<SpeakerId>,
}

impl CorpusManifest {
    pub const DEFAULT_SPEAKERS: usize = 80;

    /// `n_speakers / 5` test speakers (80 gives 64 / 16); ids are
    /// contiguous, train first.
    pub fn generate(n_speakers: usize, seed: u64) -> Result<Self> {
        let n_test = n_speakers / 5;
        let n_train = n_speakers - n_test;
        if n_test < 2 || n_train < 4 {
            return Err(Error::InvalidArgument(format!(
                "need at least 10 speakers, got {n_speakers}"
            )));
        }
        let speakers: Vec<SyntheticSpeaker> = (0..n_speakers as SpeakerId)
            .map(|id| SyntheticSpeaker::from_seed(id, derive_seed(seed, &[TAG_SPEAKER, id as u64])))
            .collect();
        Ok(Self {
            version: 1,
            seed,
            train_ids: (0..n_train as SpeakerId).collect(),
            test_ids: (n_train as SpeakerId..n_speakers as SpeakerId).collect(),
            speakers,
        })
    }

    pub fn speaker(&self, id: SpeakerId) -> Option<&SyntheticSpeaker> {
        self.speakers.get(id as usize).filter(|s| s.speaker_id == id)
    }

    pub fn split(&self, split: Split) -> Vec<SyntheticSpeaker> {
        let ids = match split {
            Split::Train => &self.train_ids,
            Split::Test => &self.test_ids,
        };
        ids.iter()
            .filter_map(|&id| self.speaker(id).cloned())
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut m: Self = serde_json::from_str(text)?;
        for s in &mut m.speakers {
            s.refresh_envelope();
        }
        Ok(m)
    }
}
