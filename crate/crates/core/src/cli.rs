//! Command-line front end. Every subcommand reads and writes plain files so
//! runs can be chained from a shell.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusManifest, Inventory, MissingMode, SpeakerId, SpeakerProfile, Split};
use crate::diagnostics::{full_suite, profile_gradients};
use crate::error::{Error, Result};
use crate::evaluate::{
    conditions_for, evaluate_condition, mixture_set, oracle_mask_reports, sample_csv, selection_csv, EmbeddingBank,
    EvalCondition, EvalConfig, EvalOutput, ProfileBank, Refinement, SWEEP_IRRELEVANT,
};
use crate::metrics::{aggregate, summary_csv, ConditionKey};
use crate::nnet::ModelParams;
use crate::separation::{first_pass, Conditioning};
use crate::signal::{
    linear_magnitude, log_magnitude, normalize, read_wav, resynthesize, stft, write_wav, NormalizationStats,
};
use crate::ssues::{ssues_iterate, SsuesMode};
use crate::train::{fit_training_stats, train, DataSource, Regime, TrainConfig};

const MANIFEST_FILE: &str = "manifest.json";
const STATS_FILE: &str = "stats.txt";
const PROFILE_DIR: &str = "profiles";
/// Mixtures used to fit normalization statistics for a new corpus.
const STATS_MIXTURES: usize = 32;

#[derive(Debug, Parser)]
#[command(name = "invsep", version, about = "Two-speaker separation with speaker inventories")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic speaker corpus, its normalization stats and
    /// one enrollment WAV per speaker.
    SynthCorpus(SynthArgs),
    /// Write mixture/source WAV triples with metadata.
    Mix(MixArgs),
    /// Train one regime and write checkpoints and the loss log.
    Train(TrainArgs),
    /// Separate one mixture WAV against an inventory directory.
    Separate(SeparateArgs),
    /// Score one condition on held-out mixtures.
    Evaluate(EvaluateArgs),
    /// Score the grid of inventory sizes, missing modes and iterations.
    SweepInventory(SweepArgs),
    /// Finite-difference checks of every layer, loss and training graph.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = CorpusManifest::DEFAULT_SPEAKERS)]
    pub speakers: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub profile_secs: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct MixArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long, default_value_t = 101)]
    pub seed: u64,
    /// `train` or `test`.
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, default_value_t = 1.0)]
    pub segment_secs: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON config; defaults to the desk schedule of `--regime`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "pit")]
    pub regime: Regime,
    /// Corpus directory; regenerated from the config seed when absent.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Initial checkpoint, overriding `init_from`.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the resolved config as JSON and exit.
    #[arg(long)]
    pub print_config: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SeparateArgs {
    #[arg(long)]
    pub mixture: PathBuf,
    /// Directory of `<id>.wav` or `spk_<id>.wav` enrollment files.
    #[arg(long)]
    pub inventory: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub ssues_iters: usize,
    #[arg(long, default_value = "nt")]
    pub ssues_mode: SsuesMode,
    #[command(flatten)]
    pub common: Common,
}

/// Settings shared by `evaluate` and `sweep-inventory`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRun {
    pub eval: EvalConfig,
    pub n_irrelevant: Vec<usize>,
    pub missing_modes: Vec<MissingMode>,
    pub ssues_iters: usize,
    pub ssues_mode: SsuesMode,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// JSON run config; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n_samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub ssues_iters: Option<usize>,
    #[arg(long)]
    pub ssues_mode: Option<SsuesMode>,
    #[arg(long)]
    pub print_config: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    #[arg(long)]
    pub n_irrelevant: Option<usize>,
    #[arg(long)]
    pub missing_mode: Option<MissingMode>,
    /// `auto`, `unconditioned`, `oracle` or `inventory`.
    #[arg(long, default_value = "auto")]
    pub condition: String,
    /// Score oracle spectral magnitude masks instead of a checkpoint.
    #[arg(long)]
    pub oracle_masks: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Parses `args` and runs; returns the process exit code. Errors are
/// printed to stderr as one `error kind=.. code=.. msg=".."` line.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error kind=usage code=2 msg={}", quote(first));
            return 2;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            e.exit_code()
        }
    }
}

pub fn error_line(e: &Error) -> String {
    format!("error kind={} code={} msg={}", e.kind(), e.exit_code(), quote(&e.to_string()))
}

fn quote(s: &str) -> String {
    serde_json::to_string(s).unwrap_or_else(|_| format!("{s:?}"))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SynthCorpus(a) => synth_corpus(&a),
        Command::Mix(a) => mix(&a),
        Command::Train(a) => train_cmd(&a),
        Command::Separate(a) => separate_cmd(&a),
        Command::Evaluate(a) => evaluate_cmd(&a),
        Command::SweepInventory(a) => sweep_cmd(&a),
        Command::Gradcheck(a) => gradcheck_cmd(&a),
    }
}

/// Fails before anything is written if an output exists and `force` is off.
fn guard(paths: &[PathBuf], force: bool) -> Result<()> {
    if force {
        return Ok(());
    }
    match paths.iter().find(|p| p.exists()) {
        Some(p) => Err(Error::WouldOverwrite(p.clone())),
        None => Ok(()),
    }
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn profile_file(id: SpeakerId) -> String {
    format!("spk_{id:04}.wav")
}

pub struct Corpus {
    pub manifest: CorpusManifest,
    pub stats: NormalizationStats,
}

pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    Ok(Corpus {
        manifest: CorpusManifest::from_json(&read_text(&dir.join(MANIFEST_FILE))?)?,
        stats: NormalizationStats::load(&dir.join(STATS_FILE))?,
    })
}

fn synth_corpus(a: &SynthArgs) -> Result<()> {
    let manifest = CorpusManifest::generate(a.speakers, a.seed)?;
    let profiles = a.out.join(PROFILE_DIR);
    let mut outputs = vec![a.out.join(MANIFEST_FILE), a.out.join(STATS_FILE)];
    outputs.extend(manifest.speakers.iter().map(|s| profiles.join(profile_file(s.speaker_id))));
    guard(&outputs, a.common.force)?;
    let stats = fit_training_stats(&manifest, a.seed, STATS_MIXTURES, 1.0)?;
    mkdir(&profiles)?;
    let utterance = EvalConfig::default().profile_utterance;
    for s in &manifest.speakers {
        let w = crate::corpus::synth_utterance(
            s,
            a.profile_secs,
            crate::corpus::derive_seed(crate::corpus::DOMAIN_PROFILE, &[utterance]),
        )?;
        write_wav(&profiles.join(profile_file(s.speaker_id)), &w)?;
    }
    write_text(&outputs[0], &manifest.to_json()?)?;
    stats.save(&outputs[1])?;
    println!(
        "corpus speakers={} train={} test={} out={}",
        manifest.speakers.len(),
        manifest.train_ids.len(),
        manifest.test_ids.len(),
        a.out.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct MixRecord {
    id: u64,
    dir: String,
    speaker_ids: [SpeakerId; 2],
    snr_db: f64,
    samples: usize,
}

fn mix(a: &MixArgs) -> Result<()> {
    let split = match a.split.as_str() {
        "train" => Split::Train,
        "test" => Split::Test,
        other => return Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
    };
    let corpus = load_corpus(&a.corpus)?;
    let cfg = EvalConfig {
        n_samples: a.count,
        seed: a.seed,
        segment_secs: a.segment_secs,
        ..EvalConfig::default()
    };
    let meta = a.out.join("metadata.json");
    let dirs: Vec<String> = (0..a.count).map(|k| format!("mix_{k:04}")).collect();
    let mut outputs = vec![meta.clone()];
    for d in &dirs {
        for f in ["mixture.wav", "s1.wav", "s2.wav"] {
            outputs.push(a.out.join(d).join(f));
        }
    }
    guard(&outputs, a.common.force)?;
    let set = mixture_set(&corpus.manifest, split, &corpus.stats, &cfg)?;
    let mut records = Vec::with_capacity(set.len());
    for (s, d) in set.iter().zip(&dirs) {
        let dir = a.out.join(d);
        mkdir(&dir)?;
        write_wav(&dir.join("mixture.wav"), &s.mixture.mix_wave)?;
        write_wav(&dir.join("s1.wav"), &s.mixture.sources[0])?;
        write_wav(&dir.join("s2.wav"), &s.mixture.sources[1])?;
        records.push(MixRecord {
            id: s.id,
            dir: d.clone(),
            speaker_ids: s.mixture.speaker_ids,
            snr_db: s.snr_db,
            samples: s.mixture.mix_wave.len(),
        });
    }
    write_text(&meta, &serde_json::to_string_pretty(&records)?)?;
    println!("mix count={} out={}", records.len(), a.out.display());
    Ok(())
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let mut config = match &a.config {
        Some(p) => TrainConfig::from_json(&read_text(p)?)?,
        None => TrainConfig::desk(a.regime),
    };
    if let Some(init) = &a.init {
        config.init_from = Some(init.clone());
    }
    config.validate()?;
    if a.print_config {
        println!("{}", config.to_json()?);
        return Ok(());
    }
    let out = a
        .out
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("train needs --out".into()))?;
    guard(
        &[out.join("loss.csv"), out.join("best.ckpt"), out.join("last.ckpt"), out.join("config.json")],
        a.common.force,
    )?;
    let corpus = match &a.corpus {
        Some(dir) => {
            let c = load_corpus(dir)?;
            if c.manifest.seed != config.corpus_seed || c.manifest.speakers.len() != config.speakers {
                return Err(Error::InvalidArgument(format!(
                    "corpus (seed {}, {} speakers) does not match config (seed {}, {} speakers)",
                    c.manifest.seed,
                    c.manifest.speakers.len(),
                    config.corpus_seed,
                    config.speakers
                )));
            }
            c
        }
        None => {
            let manifest = CorpusManifest::generate(config.speakers, config.corpus_seed)?;
            let stats = fit_training_stats(&manifest, config.corpus_seed, STATS_MIXTURES, 1.0)?;
            Corpus { manifest, stats }
        }
    };
    let init = config.init_from.as_deref().map(ModelParams::load).transpose()?;
    mkdir(out)?;
    write_text(&out.join("config.json"), &config.to_json()?)?;
    let mut data = DataSource::new(corpus.manifest, corpus.stats, &config);
    let outcome = train(&config, &mut data, init, Some(out), a.common.jobs)?;
    println!(
        "train regime={} epochs={} best_epoch={} final_loss={:.6e} digest={}",
        config.regime,
        config.epochs,
        outcome.best_epoch,
        outcome.epoch_losses.last().copied().unwrap_or(f64::NAN),
        outcome.last.digest()?
    );
    Ok(())
}

/// Reads every WAV of `dir` as an enrollment profile, ordered by id.
pub fn read_inventory(dir: &Path, stats: &NormalizationStats) -> Result<Inventory> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
            let digits = stem.strip_prefix("spk_").unwrap_or(stem);
            let id: SpeakerId = digits.parse().map_err(|_| {
                Error::InvalidArgument(format!("{}: name must be <id>.wav or spk_<id>.wav", path.display()))
            })?;
            files.push((id, path));
        }
    }
    files.sort();
    if files.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidArgument(format!("{}: duplicate speaker ids", dir.display())));
    }
    let profiles = files
        .into_iter()
        .map(|(id, path)| {
            Ok(SpeakerProfile {
                speaker_id: id,
                features: crate::corpus::normalized_features(&read_wav(&path)?, stats)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Inventory {
        profiles,
        relevant_ids: None,
    })
}

#[derive(Debug, Serialize)]
struct SeparateRecord {
    mixture: String,
    checkpoint_digest: String,
    regime: String,
    inventory: Vec<SpeakerId>,
    weights: Vec<f64>,
    selected: Option<[SpeakerId; 2]>,
    fallback: bool,
    ssues_iters: usize,
    ssues_mode: SsuesMode,
    outputs: [String; 2],
}

fn separate_cmd(a: &SeparateArgs) -> Result<()> {
    let outputs = [a.out.join("s1.wav"), a.out.join("s2.wav"), a.out.join("separate.json")];
    guard(&outputs, a.common.force)?;
    let model = ModelParams::load(&a.checkpoint)?;
    let wave = read_wav(&a.mixture)?;
    let spec = stft(&wave)?;
    let feat = normalize(&log_magnitude(&spec), &model.stats)?;
    let inv = read_inventory(&a.inventory, &model.stats)?;
    let fp = first_pass(&model, &feat, Conditioning::Inventory(&inv))?;
    let masks = if a.ssues_iters > 0 {
        let mag = linear_magnitude(&spec);
        ssues_iterate(&fp.masks, &feat, &mag, &model, a.ssues_iters, a.ssues_mode)?
            .last()
            .clone()
    } else {
        fp.masks.clone()
    };
    mkdir(&a.out)?;
    for (k, m) in masks.masks.iter().enumerate() {
        write_wav(&outputs[k], &resynthesize(m, &spec)?)?;
    }
    let record = SeparateRecord {
        mixture: a.mixture.display().to_string(),
        checkpoint_digest: model.digest()?,
        regime: model.regime.clone(),
        inventory: inv.ids(),
        weights: fp.correlation.as_ref().map(|c| c.weights.clone()).unwrap_or_default(),
        selected: fp.selected,
        fallback: fp.fallback,
        ssues_iters: a.ssues_iters,
        ssues_mode: a.ssues_mode,
        outputs: ["s1.wav".into(), "s2.wav".into()],
    };
    write_text(&outputs[2], &serde_json::to_string_pretty(&record)?)?;
    println!(
        "separate selected={} fallback={} out={}",
        fp.selected.map_or("none".into(), |s| format!("{};{}", s[0], s[1])),
        fp.fallback,
        a.out.display()
    );
    Ok(())
}

impl EvalRun {
    pub fn sweep_default() -> Self {
        Self {
            eval: EvalConfig::default(),
            n_irrelevant: SWEEP_IRRELEVANT.to_vec(),
            missing_modes: vec![MissingMode::Standard, MissingMode::M1, MissingMode::M2],
            ssues_iters: crate::ssues::DEFAULT_ITERATIONS,
            ssues_mode: SsuesMode::Nt,
        }
    }

    pub fn evaluate_default() -> Self {
        Self {
            n_irrelevant: vec![2],
            missing_modes: vec![MissingMode::Standard],
            ssues_iters: 0,
            ..Self::sweep_default()
        }
    }
}

fn resolve_run(a: &EvalArgs, default: EvalRun) -> Result<EvalRun> {
    let mut run = match &a.config {
        Some(p) => serde_json::from_str(&read_text(p)?)?,
        None => default,
    };
    if let Some(n) = a.n_samples {
        run.eval.n_samples = n;
    }
    if let Some(s) = a.seed {
        run.eval.seed = s;
    }
    if let Some(k) = a.ssues_iters {
        run.ssues_iters = k;
    }
    if let Some(m) = a.ssues_mode {
        run.ssues_mode = m;
    }
    if run.eval.n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be positive".into()));
    }
    Ok(run)
}

fn eval_outputs(out: &Path) -> [PathBuf; 4] {
    [
        out.join("summary.csv"),
        out.join("samples.csv"),
        out.join("selection.csv"),
        out.join("run.json"),
    ]
}

fn write_eval(out: &Path, run: &EvalRun, result: &EvalOutput) -> Result<()> {
    let paths = eval_outputs(out);
    mkdir(out)?;
    write_text(&paths[0], &summary_csv(&result.summaries))?;
    write_text(&paths[1], &sample_csv(&result.reports))?;
    write_text(&paths[2], &selection_csv(&result.selections))?;
    write_text(&paths[3], &serde_json::to_string_pretty(run)?)
}

fn regime_of(model: &ModelParams) -> Result<Regime> {
    model.regime.parse().map_err(|_| {
        Error::Checkpoint(format!("checkpoint regime {:?} is not a trained regime", model.regime))
    })
}

/// Runs each condition, spreading them over `jobs` threads; output order
/// follows `conditions`.
pub fn run_conditions(
    model: &ModelParams,
    label: &str,
    set: &[crate::evaluate::EvalSample],
    bank: &ProfileBank,
    embeddings: &EmbeddingBank,
    conditions: &[EvalCondition],
    refinement: Refinement,
    jobs: usize,
) -> Result<EvalOutput> {
    let jobs = jobs.max(1).min(conditions.len().max(1));
    let eval = |c: &EvalCondition| evaluate_condition(model, label, set, bank, embeddings, *c, refinement);
    let parts: Vec<Result<EvalOutput>> = if jobs == 1 {
        conditions.iter().map(eval).collect()
    } else {
        let chunk = conditions.len().div_ceil(jobs);
        std::thread::scope(|scope| {
            let handles: Vec<_> = conditions
                .chunks(chunk)
                .map(|cs| scope.spawn(move || cs.iter().map(eval).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("evaluation thread panicked"))
                .collect()
        })
    };
    let mut out = EvalOutput::default();
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn evaluate_cmd(a: &EvaluateArgs) -> Result<()> {
    let mut run = resolve_run(&a.eval, EvalRun::evaluate_default())?;
    if let Some(n) = a.n_irrelevant {
        run.n_irrelevant = vec![n];
    }
    if let Some(m) = a.missing_mode {
        run.missing_modes = vec![m];
    }
    if a.eval.print_config {
        println!("{}", serde_json::to_string_pretty(&run)?);
        return Ok(());
    }
    guard(&eval_outputs(&a.eval.out), a.eval.common.force)?;
    let corpus = load_corpus(&a.eval.corpus)?;
    let set = mixture_set(&corpus.manifest, Split::Test, &corpus.stats, &run.eval)?;
    let result = if a.oracle_masks {
        let reports = oracle_mask_reports(&set)?;
        let key = ConditionKey {
            regime: "oracle_smm".into(),
            n_irrelevant: 0,
            missing_mode: "none".into(),
            iteration: 0,
        };
        EvalOutput {
            summaries: vec![aggregate(key.clone(), &reports, None)?],
            selections: Vec::new(),
            reports: reports.into_iter().map(|r| (key.clone(), r)).collect(),
        }
    } else {
        let ckpt = a
            .eval
            .checkpoint
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("evaluate needs --checkpoint or --oracle-masks".into()))?;
        let model = ModelParams::load(ckpt)?;
        let regime = regime_of(&model)?;
        let condition = match a.condition.as_str() {
            "auto" if regime == Regime::Pit => EvalCondition::Unconditioned,
            "unconditioned" => EvalCondition::Unconditioned,
            "oracle" => EvalCondition::Oracle,
            "auto" | "inventory" => EvalCondition::Inventory {
                n_irrelevant: run.n_irrelevant[0],
                missing: run.missing_modes[0],
            },
            other => return Err(Error::InvalidArgument(format!("unknown condition {other:?}"))),
        };
        let bank = ProfileBank::build(&corpus.manifest, &corpus.stats, &run.eval)?;
        let embeddings = EmbeddingBank::build(&model, &bank)?;
        let refinement = Refinement {
            iterations: run.ssues_iters,
            mode: run.ssues_mode,
        };
        evaluate_condition(&model, regime.as_str(), &set, &bank, &embeddings, condition, refinement)?
    };
    write_eval(&a.eval.out, &run, &result)?;
    for s in &result.summaries {
        println!(
            "evaluate regime={} n_irrelevant={} mode={} iteration={} si_sdr={:.3} sdr={:.3}",
            s.key.regime, s.key.n_irrelevant, s.key.missing_mode, s.key.iteration, s.mean_si_sdr_db, s.mean_sdr_db
        );
    }
    Ok(())
}

fn sweep_cmd(a: &SweepArgs) -> Result<()> {
    let run = resolve_run(&a.eval, EvalRun::sweep_default())?;
    if a.eval.print_config {
        println!("{}", serde_json::to_string_pretty(&run)?);
        return Ok(());
    }
    guard(&eval_outputs(&a.eval.out), a.eval.common.force)?;
    let ckpt = a
        .eval
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("sweep-inventory needs --checkpoint".into()))?;
    let model = ModelParams::load(ckpt)?;
    let regime = regime_of(&model)?;
    let corpus = load_corpus(&a.eval.corpus)?;
    let set = mixture_set(&corpus.manifest, Split::Test, &corpus.stats, &run.eval)?;
    let bank = ProfileBank::build(&corpus.manifest, &corpus.stats, &run.eval)?;
    let embeddings = EmbeddingBank::build(&model, &bank)?;
    let conditions = conditions_for(regime, &run.n_irrelevant, &run.missing_modes);
    let refinement = Refinement {
        iterations: run.ssues_iters,
        mode: run.ssues_mode,
    };
    let result = run_conditions(&model, regime.as_str(), &set, &bank, &embeddings, &conditions, refinement, a.eval.common.jobs)?;
    write_eval(&a.eval.out, &run, &result)?;
    println!(
        "sweep regime={} conditions={} rows={} out={}",
        regime,
        conditions.len(),
        result.summaries.len(),
        a.eval.out.display()
    );
    Ok(())
}

fn gradcheck_cmd(a: &GradcheckArgs) -> Result<()> {
    let checks = full_suite(a.seed)?;
    let mut failed = Vec::new();
    for c in &checks {
        println!("{} {}", if c.passed() { "PASS" } else { "FAIL" }, c.line());
        if !c.passed() {
            failed.push(c.name.clone());
        }
    }
    let pg = profile_gradients(a.seed, 5)?;
    let ok = pg.only_selected();
    println!(
        "{} graph.unselected_profiles_zero selected={:?} profiles={}",
        if ok { "PASS" } else { "FAIL" },
        pg.selected,
        pg.max_abs.len()
    );
    if !ok {
        failed.push("graph.unselected_profiles_zero".into());
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::GradcheckFailed(failed.join(",")))
    }
}
