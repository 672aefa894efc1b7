//! Iterative refinement: masked mixture magnitudes from one pass serve as
//! the two profiles of the next.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{permute_score, SdrReport};
use crate::nnet::{Graph, ModelParams, NodeId, Stage};
use crate::separation::{align_graph, separator_graph, MaskPair};
use crate::signal::{
    apply_mask, log_of_magnitude, normalize, resynthesize, FeatureMatrix, Mask,
    NormalizationStats, Spectrogram, Waveform, LOG_FLOOR,
};

pub const DEFAULT_ITERATIONS: usize = 3;

/// Which weights the refinement iterations use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SsuesMode {
    /// Reuse the first-pass separation stage.
    Nt,
    /// Use the jointly trained refinement stage.
    Jt,
}

impl SsuesMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SsuesMode::Nt => "nt",
            SsuesMode::Jt => "jt",
        }
    }
}

impl std::str::FromStr for SsuesMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nt" => Ok(SsuesMode::Nt),
            "jt" => Ok(SsuesMode::Jt),
            other => Err(Error::InvalidArgument(format!("unknown ssues mode {other:?}"))),
        }
    }
}

/// `masks[0]` is the first pass; `estimates[k]` are the features built from
/// `masks[k]` that produced `masks[k + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub masks: Vec<MaskPair>,
    pub estimates: Vec<[FeatureMatrix; 2]>,
}

impl IterationTrace {
    pub fn iterations(&self) -> usize {
        self.masks.len() - 1
    }

    pub fn last(&self) -> &MaskPair {
        self.masks.last().expect("first pass present")
    }
}

/// Normalized log features of each masked mixture magnitude.
pub fn estimate_features(
    masks: &MaskPair,
    mix_mag: &FeatureMatrix,
    stats: &NormalizationStats,
) -> Result<[FeatureMatrix; 2]> {
    let one = |m: &Mask| -> Result<FeatureMatrix> {
        let est = apply_mask(m, mix_mag)?;
        normalize(&log_of_magnitude(&est)?, stats)
    };
    Ok([one(masks.m1())?, one(masks.m2())?])
}

/// Differentiable counterpart of [`estimate_features`] for one mask node.
pub(crate) fn estimate_graph(
    g: &mut Graph<'_>,
    mask: NodeId,
    mix_mag: &Array2<f64>,
    stats: &NormalizationStats,
) -> Result<NodeId> {
    let masked = g.mul_const(mask, mix_mag.clone())?;
    let log = g.log_eps(masked, LOG_FLOOR);
    g.col_affine(log, &stats.mean, &stats.std)
}

/// One refinement step inside a graph.
pub(crate) fn refine_graph(
    g: &mut Graph<'_>,
    stage: &Stage,
    mix_feat: NodeId,
    masks: [NodeId; 2],
    mix_mag: &Array2<f64>,
    stats: &NormalizationStats,
) -> Result<[NodeId; 2]> {
    let e_m = stage.embed.forward(g, mix_feat)?;
    let mut biases = [e_m, e_m];
    for k in 0..2 {
        let est = estimate_graph(g, masks[k], mix_mag, stats)?;
        let e_k = stage.embed.forward(g, est)?;
        biases[k] = align_graph(g, e_m, e_k)?.1;
    }
    separator_graph(g, &stage.separator, mix_feat, e_m, biases)
}

fn stage_for(model: &ModelParams, mode: SsuesMode) -> Result<&Stage> {
    match mode {
        SsuesMode::Nt => Ok(&model.separation),
        SsuesMode::Jt => model.refine.as_ref().ok_or_else(|| {
            Error::InvalidArgument("checkpoint has no jointly trained refinement stage".into())
        }),
    }
}

fn max_abs_diff(a: &MaskPair, b: &MaskPair) -> f64 {
    a.masks
        .iter()
        .zip(&b.masks)
        .flat_map(|(x, y)| x.values().iter().zip(y.values().iter()).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

/// Runs `n_iter` refinements from `first_pass`. Estimate `k` always feeds
/// bias slot `k`. The inventory is never consulted.
pub fn ssues_iterate(
    first_pass: &MaskPair,
    mix_feat: &FeatureMatrix,
    mix_mag: &FeatureMatrix,
    model: &ModelParams,
    n_iter: usize,
    mode: SsuesMode,
) -> Result<IterationTrace> {
    if n_iter == 0 {
        return Err(Error::InvalidArgument("ssues needs at least one iteration".into()));
    }
    if mix_feat.shape() != mix_mag.shape() {
        return Err(Error::shape("ssues_iterate", mix_mag.shape(), mix_feat.shape()));
    }
    let stage = stage_for(model, mode)?;
    let mut trace = IterationTrace {
        masks: vec![first_pass.clone()],
        estimates: Vec::with_capacity(n_iter),
    };
    for _ in 0..n_iter {
        let prev = trace.last().clone();
        let settled = trace.masks.len() >= 2
            && max_abs_diff(&trace.masks[trace.masks.len() - 2], &prev) <= 1e-12;
        if settled {
            let est = trace.estimates.last().expect("one estimate").clone();
            trace.estimates.push(est);
            trace.masks.push(prev);
            continue;
        }
        let est = estimate_features(&prev, mix_mag, &model.stats)?;
        let mut g = Graph::new(&model.store);
        let x = g.input(mix_feat.values.clone());
        let e_m = stage.embed.forward(&mut g, x)?;
        let mut biases = [e_m, e_m];
        for k in 0..2 {
            let leaf = g.input(est[k].values.clone());
            let e_k = stage.embed.forward(&mut g, leaf)?;
            biases[k] = align_graph(&mut g, e_m, e_k)?.1;
        }
        let out = separator_graph(&mut g, &stage.separator, x, e_m, biases)?;
        trace.masks.push(MaskPair {
            masks: [Mask::new(g.value(out[0]).clone())?, Mask::new(g.value(out[1]).clone())?],
        });
        trace.estimates.push(est);
    }
    Ok(trace)
}

/// Scores every entry of a trace under its own best output assignment.
pub fn output_permutation_tracking(
    trace: &IterationTrace,
    mix_spec: &Spectrogram,
    references: [&Waveform; 2],
    sample_id: u64,
) -> Result<Vec<SdrReport>> {
    trace
        .masks
        .iter()
        .map(|mp| {
            let est = [resynthesize(mp.m1(), mix_spec)?, resynthesize(mp.m2(), mix_spec)?];
            permute_score(sample_id, [&est[0], &est[1]], references)
        })
        .collect()
}
