//! Separation stage: attention alignment of selected profiles into speaker
//! biases, mask estimation, and the utterance-level PIT loss.

use ndarray::Array2;

use crate::corpus::{Inventory, SpeakerId};
use crate::error::{Error, Result};
use crate::metrics::Permutation;
use crate::nnet::{Graph, ModelParams, Network, NodeId, ParamStore, Stage};
use crate::selection::{
    correlate, correlate_graph, embed, select_top2_positions, CorrelationResult, Embedding,
};
use crate::signal::{FeatureMatrix, FeatureKind, Mask};

/// A profile embedding aligned to the mixture's frames.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerBias {
    pub values: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskPair {
    pub masks: [Mask; 2],
}

impl MaskPair {
    pub fn m1(&self) -> &Mask {
        &self.masks[0]
    }

    pub fn m2(&self) -> &Mask {
        &self.masks[1]
    }

    pub fn swapped(&self) -> Self {
        Self {
            masks: [self.masks[1].clone(), self.masks[0].clone()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitOutcome {
    pub loss: f64,
    pub permutation: Permutation,
    /// `pairs[u][v]` is the loss of output `u` against target `v`.
    pub pairs: [[f64; 2]; 2],
    /// Number of time-frequency cells, for reporting `loss / cells`.
    pub cells: usize,
}

impl PitOutcome {
    pub fn normalized_loss(&self) -> f64 {
        self.loss / self.cells.max(1) as f64
    }
}

pub(crate) fn align_graph(g: &mut Graph<'_>, e_m: NodeId, e_c: NodeId) -> Result<(NodeId, NodeId)> {
    if g.value(e_c).nrows() == 0 {
        return Err(Error::EmptyInput);
    }
    let d = g.matmul_t(e_m, e_c)?;
    let alpha = g.row_softmax(d);
    let b = g.matmul(alpha, e_c)?;
    Ok((alpha, b))
}

/// Attention of every mixture frame over the profile frames, `T_m x T_c`.
pub fn attention(e_m: &Embedding, e_c: &Embedding) -> Result<Array2<f64>> {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let m = g.input(e_m.values.clone());
    let c = g.input(e_c.values.clone());
    let (alpha, _) = align_graph(&mut g, m, c)?;
    Ok(g.value(alpha).clone())
}

pub fn align_bias(e_m: &Embedding, e_c: &Embedding) -> Result<SpeakerBias> {
    if e_m.dim() != e_c.dim() {
        return Err(Error::shape("align_bias", (e_c.frames(), e_m.dim()), (e_c.frames(), e_c.dim())));
    }
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let m = g.input(e_m.values.clone());
    let c = g.input(e_c.values.clone());
    let (_, b) = align_graph(&mut g, m, c)?;
    Ok(SpeakerBias {
        values: g.value(b).clone(),
    })
}

/// Separator on `[features | mixture embedding | bias 1 | bias 2]`; returns
/// the two mask nodes.
pub(crate) fn separator_graph(
    g: &mut Graph<'_>,
    net: &Network,
    feat: NodeId,
    e_m: NodeId,
    biases: [NodeId; 2],
) -> Result<[NodeId; 2]> {
    let t = g.value(feat).nrows();
    for n in [e_m, biases[0], biases[1]] {
        if g.value(n).nrows() != t {
            return Err(Error::shape("separate", (t, g.value(n).ncols()), g.value(n).dim()));
        }
    }
    let x = g.concat_cols(&[feat, e_m, biases[0], biases[1]])?;
    let out = net.forward(g, x)?;
    let width = g.value(out).ncols();
    if width % 2 != 0 {
        return Err(Error::InvalidArgument(format!("separator output width {width} is odd")));
    }
    let f = width / 2;
    Ok([g.slice_cols(out, 0, f), g.slice_cols(out, f, f)])
}

fn masks_from(g: &Graph<'_>, nodes: [NodeId; 2]) -> Result<MaskPair> {
    Ok(MaskPair {
        masks: [Mask::new(g.value(nodes[0]).clone())?, Mask::new(g.value(nodes[1]).clone())?],
    })
}

pub fn separate(
    separator: &Network,
    store: &ParamStore,
    mix_feat: &FeatureMatrix,
    e_m: &Embedding,
    bias_1: &SpeakerBias,
    bias_2: &SpeakerBias,
) -> Result<MaskPair> {
    let mut g = Graph::new(store);
    let x = g.input(mix_feat.values.clone());
    let m = g.input(e_m.values.clone());
    let b1 = g.input(bias_1.values.clone());
    let b2 = g.input(bias_2.values.clone());
    let masks = separator_graph(&mut g, separator, x, m, [b1, b2])?;
    masks_from(&g, masks)
}

/// `l[u][v] = |est_u - target_v|_F^2`.
pub fn pairwise_losses(est: [&Array2<f64>; 2], targets: [&Array2<f64>; 2]) -> [[f64; 2]; 2] {
    let l = |a: &Array2<f64>, b: &Array2<f64>| {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
    };
    [
        [l(est[0], targets[0]), l(est[0], targets[1])],
        [l(est[1], targets[0]), l(est[1], targets[1])],
    ]
}

/// Minimum over the two assignments; `true` when the swapped one wins.
/// A tie keeps the identity.
pub fn pit_choice(pairs: &[[f64; 2]; 2]) -> (f64, bool) {
    let identity = pairs[0][0] + pairs[1][1];
    let swapped = pairs[0][1] + pairs[1][0];
    if swapped < identity {
        (swapped, true)
    } else {
        (identity, false)
    }
}

fn check_pit_shapes(masks: &MaskPair, mix_mag: &FeatureMatrix, targets: [&FeatureMatrix; 2]) -> Result<()> {
    if mix_mag.kind != FeatureKind::LinearMagnitude {
        return Err(Error::InvalidArgument("pit_loss needs linear magnitudes".into()));
    }
    let s = mix_mag.shape();
    for m in &masks.masks {
        if m.shape() != s {
            return Err(Error::shape("pit_loss mask", s, m.shape()));
        }
    }
    for t in targets {
        if t.shape() != s {
            return Err(Error::shape("pit_loss target", s, t.shape()));
        }
    }
    Ok(())
}

/// PIT loss of masked mixture magnitudes against clean magnitudes.
pub fn pit_loss(masks: &MaskPair, mix_mag: &FeatureMatrix, targets: [&FeatureMatrix; 2]) -> Result<PitOutcome> {
    check_pit_shapes(masks, mix_mag, targets)?;
    let est = [
        masks.masks[0].values() * &mix_mag.values,
        masks.masks[1].values() * &mix_mag.values,
    ];
    let pairs = pairwise_losses([&est[0], &est[1]], [&targets[0].values, &targets[1].values]);
    let (loss, swapped) = pit_choice(&pairs);
    Ok(PitOutcome {
        loss,
        permutation: if swapped {
            Permutation::Swapped
        } else {
            Permutation::Identity
        },
        pairs,
        cells: s_cells(mix_mag),
    })
}

fn s_cells(f: &FeatureMatrix) -> usize {
    f.frames() * f.num_bins()
}

/// Gradient of the PIT loss with respect to each mask, through the winning
/// assignment only.
pub fn pit_loss_grad(
    masks: &MaskPair,
    mix_mag: &FeatureMatrix,
    targets: [&FeatureMatrix; 2],
    outcome: &PitOutcome,
) -> Result<[Array2<f64>; 2]> {
    check_pit_shapes(masks, mix_mag, targets)?;
    let x = &mix_mag.values;
    let grad = |u: usize| {
        let v = outcome.permutation.estimate_for(u);
        let mut d = masks.masks[u].values() * x - &targets[v].values;
        d *= 2.0;
        d * x
    };
    Ok([grad(0), grad(1)])
}

/// How the first pass is conditioned.
#[derive(Debug, Clone, Copy)]
pub enum Conditioning<'a> {
    /// Zero biases, as in the PIT baseline.
    Unconditioned,
    /// Given relevant profiles, bypassing selection.
    Profiles([&'a FeatureMatrix; 2]),
    /// Select two profiles from an inventory. Fewer than two profiles falls
    /// back to zero biases.
    Inventory(&'a Inventory),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstPass {
    pub masks: MaskPair,
    pub correlation: Option<CorrelationResult>,
    /// Selected profiles in bias-slot order.
    pub selected: Option<[SpeakerId; 2]>,
    pub fallback: bool,
}

fn zeros_node(g: &mut Graph<'_>, rows: usize, cols: usize) -> NodeId {
    g.input(Array2::zeros((rows, cols)))
}

/// Nodes produced by [`first_pass_graph`].
pub(crate) struct FirstPassNodes {
    pub masks: [NodeId; 2],
    /// Profile feature leaves in inventory order.
    pub profile_leaves: Vec<NodeId>,
    pub weights: Option<NodeId>,
    pub selected: Option<[usize; 2]>,
}

/// Builds the first pass into `g`. Profile embeddings for selection use
/// `selection_net`; the separation stage re-embeds only the two selected
/// profiles unless the networks are shared.
pub(crate) fn first_pass_graph(
    g: &mut Graph<'_>,
    model: &ModelParams,
    stage: &Stage,
    mix_feat: NodeId,
    cond: &Conditioning<'_>,
) -> Result<FirstPassNodes> {
    let t = g.value(mix_feat).nrows();
    let e = model.config.embed_dim;
    let e_m = stage.embed.forward(g, mix_feat)?;
    let mut out = FirstPassNodes {
        masks: [e_m, e_m],
        profile_leaves: Vec::new(),
        weights: None,
        selected: None,
    };
    let biases = match cond {
        Conditioning::Unconditioned => [zeros_node(g, t, e), zeros_node(g, t, e)],
        Conditioning::Inventory(inv) if inv.len() < 2 => [zeros_node(g, t, e), zeros_node(g, t, e)],
        Conditioning::Profiles(p) => {
            let mut b = [e_m, e_m];
            for k in 0..2 {
                let leaf = g.input(p[k].values.clone());
                out.profile_leaves.push(leaf);
                let ec = stage.embed.forward(g, leaf)?;
                b[k] = align_graph(g, e_m, ec)?.1;
            }
            b
        }
        Conditioning::Inventory(inv) => {
            let sel_net = model.selection_net();
            let shared = std::ptr::eq(sel_net, &stage.embed) || *sel_net == stage.embed;
            let e_sel_m = if shared { e_m } else { sel_net.forward(g, mix_feat)? };
            let mut sel_embs = Vec::with_capacity(inv.len());
            for p in &inv.profiles {
                let leaf = g.input(p.features.values.clone());
                out.profile_leaves.push(leaf);
                sel_embs.push(sel_net.forward(g, leaf)?);
            }
            let (_, w) = correlate_graph(g, e_sel_m, &sel_embs)?;
            let ids = inv.ids();
            let (c1, c2) = select_top2_positions(&ids, g.value(w).row(0).as_slice().expect("row"))?;
            out.weights = Some(w);
            out.selected = Some([c1, c2]);
            let mut b = [e_m, e_m];
            for (k, c) in [c1, c2].into_iter().enumerate() {
                let ec = if shared {
                    sel_embs[c]
                } else {
                    stage.embed.forward(g, out.profile_leaves[c])?
                };
                b[k] = align_graph(g, e_m, ec)?.1;
            }
            b
        }
    };
    out.masks = separator_graph(g, &stage.separator, mix_feat, e_m, biases)?;
    Ok(out)
}

/// Profile embeddings of one inventory, computed once and reused across
/// mixtures.
#[derive(Debug, Clone, PartialEq)]
pub struct InventoryEmbeddings {
    pub ids: Vec<SpeakerId>,
    pub selection: Vec<Embedding>,
    /// Separation-stage embeddings; `None` when the selection embedding is
    /// shared.
    pub separation: Option<Vec<Embedding>>,
}

impl InventoryEmbeddings {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn separation_embedding(&self, k: usize) -> &Embedding {
        self.separation.as_ref().map_or(&self.selection[k], |s| &s[k])
    }

    /// Sub-inventory in the given order of positions.
    pub fn pick(&self, positions: &[usize]) -> Self {
        Self {
            ids: positions.iter().map(|&k| self.ids[k]).collect(),
            selection: positions.iter().map(|&k| self.selection[k].clone()).collect(),
            separation: self
                .separation
                .as_ref()
                .map(|s| positions.iter().map(|&k| s[k].clone()).collect()),
        }
    }
}

pub fn embed_inventory(model: &ModelParams, inv: &Inventory) -> Result<InventoryEmbeddings> {
    let embed_all = |net: &Network| {
        inv.profiles
            .iter()
            .map(|p| embed(net, &model.store, &p.features))
            .collect::<Result<Vec<_>>>()
    };
    Ok(InventoryEmbeddings {
        ids: inv.ids(),
        selection: embed_all(model.selection_net())?,
        separation: model
            .selection
            .as_ref()
            .map(|_| embed_all(&model.separation.embed))
            .transpose()?,
    })
}

fn zero_bias(t: usize, e: usize) -> SpeakerBias {
    SpeakerBias {
        values: Array2::zeros((t, e)),
    }
}

/// First pass against pre-embedded profiles. `e_m` is the separation-stage
/// embedding of the mixture, when already known.
pub fn first_pass_embedded(
    model: &ModelParams,
    mix_feat: &FeatureMatrix,
    e_m: Option<&Embedding>,
    inv: &InventoryEmbeddings,
) -> Result<FirstPass> {
    let owned;
    let e_m = match e_m {
        Some(e) => e,
        None => {
            owned = embed(&model.separation.embed, &model.store, mix_feat)?;
            &owned
        }
    };
    let sep = &model.separation.separator;
    if inv.len() < 2 {
        let z = zero_bias(e_m.frames(), e_m.dim());
        return Ok(FirstPass {
            masks: separate(sep, &model.store, mix_feat, e_m, &z, &z)?,
            correlation: None,
            selected: None,
            fallback: true,
        });
    }
    let sel_m = match &model.selection {
        Some(net) => embed(net, &model.store, mix_feat)?,
        None => e_m.clone(),
    };
    let profiles: Vec<(SpeakerId, &Embedding)> =
        inv.ids.iter().copied().zip(inv.selection.iter()).collect();
    let corr = correlate(&sel_m, &profiles)?;
    let (c1, c2) = select_top2_positions(&corr.ids, &corr.weights)?;
    let b1 = align_bias(e_m, inv.separation_embedding(c1))?;
    let b2 = align_bias(e_m, inv.separation_embedding(c2))?;
    Ok(FirstPass {
        masks: separate(sep, &model.store, mix_feat, e_m, &b1, &b2)?,
        selected: Some([inv.ids[c1], inv.ids[c2]]),
        correlation: Some(corr),
        fallback: false,
    })
}

/// Inference for one mixture.
pub fn first_pass(model: &ModelParams, mix_feat: &FeatureMatrix, cond: Conditioning<'_>) -> Result<FirstPass> {
    if mix_feat.kind != FeatureKind::NormalizedLogMagnitude {
        return Err(Error::InvalidArgument("first pass needs normalized log features".into()));
    }
    let stage = &model.separation;
    match cond {
        Conditioning::Inventory(inv) => {
            first_pass_embedded(model, mix_feat, None, &embed_inventory(model, inv)?)
        }
        Conditioning::Unconditioned => {
            let e_m = embed(&stage.embed, &model.store, mix_feat)?;
            let z = zero_bias(e_m.frames(), e_m.dim());
            Ok(FirstPass {
                masks: separate(&stage.separator, &model.store, mix_feat, &e_m, &z, &z)?,
                correlation: None,
                selected: None,
                fallback: false,
            })
        }
        Conditioning::Profiles(p) => {
            let e_m = embed(&stage.embed, &model.store, mix_feat)?;
            let b1 = align_bias(&e_m, &embed(&stage.embed, &model.store, p[0])?)?;
            let b2 = align_bias(&e_m, &embed(&stage.embed, &model.store, p[1])?)?;
            Ok(FirstPass {
                masks: separate(&stage.separator, &model.store, mix_feat, &e_m, &b1, &b2)?,
                correlation: None,
                selected: None,
                fallback: false,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fm(v: Array2<f64>) -> FeatureMatrix {
        FeatureMatrix::new(v, FeatureKind::LinearMagnitude)
    }

    #[test]
    fn single_frame_profile_bias_is_that_frame() {
        let m = Embedding::new(Array2::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f64 * 0.1)).unwrap();
        let c = Embedding::new(ndarray::array![[0.2, -0.4, 0.9]]).unwrap();
        let b = align_bias(&m, &c).unwrap();
        for row in b.values.rows() {
            assert_eq!(row.to_vec(), vec![0.2, -0.4, 0.9]);
        }
    }

    #[test]
    fn identical_targets_tie_to_identity() {
        let x = fm(Array2::from_elem((2, 3), 1.0));
        let y = fm(Array2::from_elem((2, 3), 0.5));
        let masks = MaskPair {
            masks: [Mask::new(Array2::from_elem((2, 3), 0.2)).unwrap(), Mask::new(Array2::from_elem((2, 3), 0.9)).unwrap()],
        };
        let o = pit_loss(&masks, &x, [&y, &y]).unwrap();
        assert_eq!(o.permutation, Permutation::Identity);
        assert_eq!(o.loss, o.pairs[0][0] + o.pairs[1][1]);
    }

    #[test]
    fn exact_masks_give_zero_loss_and_gradient() {
        let x = fm(Array2::from_shape_fn((3, 4), |(i, j)| 1.0 + (i + j) as f64));
        let m1 = Array2::from_shape_fn((3, 4), |(i, j)| (i * 4 + j) as f64 / 12.0);
        let m2 = m1.mapv(|v| 1.0 - v);
        let y1 = fm(&m1 * &x.values);
        let y2 = fm(&m2 * &x.values);
        let masks = MaskPair {
            masks: [Mask::new(m1).unwrap(), Mask::new(m2).unwrap()],
        };
        let o = pit_loss(&masks, &x, [&y1, &y2]).unwrap();
        assert_eq!(o.loss, 0.0);
        assert_eq!(o.permutation, Permutation::Identity);
        let g = pit_loss_grad(&masks, &x, [&y1, &y2], &o).unwrap();
        assert!(g.iter().all(|a| a.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn shape_mismatch_is_error() {
        let x = fm(Array2::ones((2, 3)));
        let y = fm(Array2::ones((2, 4)));
        let masks = MaskPair {
            masks: [Mask::ones((2, 3)), Mask::ones((2, 3))],
        };
        assert!(pit_loss(&masks, &x, [&y, &y]).is_err());
    }
}
