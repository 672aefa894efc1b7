//! Profile selection: correlate the mixture embedding with every profile
//! embedding, keep the two best-matching profiles, and the training loss
//! that pushes weight onto the relevant pair.

use ndarray::Array2;

use crate::corpus::SpeakerId;
use crate::error::{Error, Result};
use crate::nnet::{Graph, Network, NodeId, ParamStore};
use crate::signal::FeatureMatrix;

/// `T x E` frame embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub values: Array2<f64>,
}

impl Embedding {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding".into()));
        }
        Ok(Self { values })
    }

    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }
}

pub fn embed(net: &Network, store: &ParamStore, feat: &FeatureMatrix) -> Result<Embedding> {
    let mut g = Graph::new(store);
    let x = g.input(feat.values.clone());
    let e = net.forward(&mut g, x)?;
    Embedding::new(g.value(e).clone())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationResult {
    /// Profile ids in inventory order.
    pub ids: Vec<SpeakerId>,
    /// Mean correlation per profile, aligned with `ids`.
    pub weights: Vec<f64>,
    pub frames: Vec<usize>,
    /// `(c1, c2)`; `None` with fewer than two profiles.
    pub selected: Option<(SpeakerId, SpeakerId)>,
}

impl CorrelationResult {
    pub fn weight(&self, id: SpeakerId) -> Option<f64> {
        self.ids.iter().position(|&i| i == id).map(|k| self.weights[k])
    }

    /// `Σ_p T_p w^p`, equal to one by construction.
    pub fn frame_weighted_sum(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.frames)
            .map(|(w, &t)| w * t as f64)
            .sum()
    }
}

fn blocks(frames: &[usize]) -> Vec<(usize, usize)> {
    let mut start = 0;
    frames
        .iter()
        .map(|&t| {
            let b = (start, t);
            start += t;
            b
        })
        .collect()
}

/// Appends the correlation of `e_m` against the concatenated profile
/// embeddings to `g`. Returns the `T_m x ΣT_p` joint-softmax matrix and the
/// `1 x P` mean weights.
pub(crate) fn correlate_graph(
    g: &mut Graph<'_>,
    e_m: NodeId,
    profiles: &[NodeId],
) -> Result<(NodeId, NodeId)> {
    if profiles.is_empty() {
        return Err(Error::InsufficientInventory(0));
    }
    let frames: Vec<usize> = profiles.iter().map(|&p| g.value(p).nrows()).collect();
    if frames.contains(&0) {
        return Err(Error::EmptyInput);
    }
    let all = g.concat_rows(profiles)?;
    let d = g.matmul_t(e_m, all)?;
    let joint = g.row_softmax(d);
    let w = g.block_mean(joint, blocks(&frames));
    Ok((joint, w))
}

/// Joint softmax over all profile frames for every mixture frame, as a
/// `T_m x ΣT_p` matrix with profile blocks in inventory order.
pub fn joint_weights(e_m: &Embedding, profiles: &[&Embedding]) -> Result<Array2<f64>> {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let m = g.input(e_m.values.clone());
    let ps: Vec<NodeId> = profiles.iter().map(|p| g.input(p.values.clone())).collect();
    let (joint, _) = correlate_graph(&mut g, m, &ps)?;
    Ok(g.value(joint).clone())
}

/// Mean correlation weights of every profile, with the top-2 selection.
pub fn correlate(e_m: &Embedding, profiles: &[(SpeakerId, &Embedding)]) -> Result<CorrelationResult> {
    if profiles.is_empty() {
        return Err(Error::InsufficientInventory(0));
    }
    for (id, p) in profiles {
        if p.dim() != e_m.dim() {
            return Err(Error::InvalidArgument(format!(
                "profile {id} embedding width {} differs from mixture width {}",
                p.dim(),
                e_m.dim()
            )));
        }
    }
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let m = g.input(e_m.values.clone());
    let ps: Vec<NodeId> = profiles.iter().map(|(_, p)| g.input(p.values.clone())).collect();
    let (_, w) = correlate_graph(&mut g, m, &ps)?;
    let ids: Vec<SpeakerId> = profiles.iter().map(|(id, _)| *id).collect();
    let weights = g.value(w).row(0).to_vec();
    let selected = select_top2(&ids, &weights).ok();
    Ok(CorrelationResult {
        frames: profiles.iter().map(|(_, p)| p.frames()).collect(),
        ids,
        weights,
        selected,
    })
}

/// Positions of the largest and second-largest weight. Equal weights are
/// ordered by ascending id, so the result does not depend on inventory
/// order.
pub fn select_top2_positions(ids: &[SpeakerId], weights: &[f64]) -> Result<(usize, usize)> {
    if ids.len() != weights.len() {
        return Err(Error::shape("select_top2", (ids.len(), 1), (weights.len(), 1)));
    }
    if ids.len() < 2 {
        return Err(Error::InsufficientInventory(ids.len()));
    }
    let better = |a: usize, b: usize| weights[a] > weights[b] || (weights[a] == weights[b] && ids[a] < ids[b]);
    let mut first = 0;
    for k in 1..ids.len() {
        if better(k, first) {
            first = k;
        }
    }
    let mut second = usize::from(first == 0);
    for k in 0..ids.len() {
        if k != first && better(k, second) {
            second = k;
        }
    }
    Ok((first, second))
}

pub fn select_top2(ids: &[SpeakerId], weights: &[f64]) -> Result<(SpeakerId, SpeakerId)> {
    let (a, b) = select_top2_positions(ids, weights)?;
    Ok((ids[a], ids[b]))
}

pub(crate) fn selection_loss_value(w: &[f64], relevant: [usize; 2]) -> f64 {
    let rel = 1.0 - w[relevant[0]] - w[relevant[1]];
    let irr: f64 = w
        .iter()
        .enumerate()
        .filter(|(k, _)| !relevant.contains(k))
        .map(|(_, v)| v * v)
        .sum();
    rel * rel + irr
}

pub(crate) fn selection_loss_grad_value(w: &[f64], relevant: [usize; 2]) -> Vec<f64> {
    let rel = 1.0 - w[relevant[0]] - w[relevant[1]];
    w.iter()
        .enumerate()
        .map(|(k, &v)| if relevant.contains(&k) { -2.0 * rel } else { 2.0 * v })
        .collect()
}

fn oracle_positions(ids: &[SpeakerId], oracle: [SpeakerId; 2]) -> Result<[usize; 2]> {
    if oracle[0] == oracle[1] {
        return Err(Error::InvalidArgument(format!("oracle pair repeats {}", oracle[0])));
    }
    let pos = |id| ids.iter().position(|&i| i == id).ok_or(Error::MissingSpeaker(id));
    Ok([pos(oracle[0])?, pos(oracle[1])?])
}

/// Squared shortfall of the relevant pair from one plus the squared weight
/// of every irrelevant profile.
pub fn selection_loss(result: &CorrelationResult, oracle: [SpeakerId; 2]) -> Result<f64> {
    let rel = oracle_positions(&result.ids, oracle)?;
    Ok(selection_loss_value(&result.weights, rel))
}

/// Gradient of [`selection_loss`] with respect to the weights.
pub fn selection_loss_grad(result: &CorrelationResult, oracle: [SpeakerId; 2]) -> Result<Vec<f64>> {
    let rel = oracle_positions(&result.ids, oracle)?;
    Ok(selection_loss_grad_value(&result.weights, rel))
}

/// Selection loss node over a `1 x P` weight row, for ids in inventory order.
pub(crate) fn selection_loss_graph(
    g: &mut Graph<'_>,
    w: NodeId,
    ids: &[SpeakerId],
    oracle: [SpeakerId; 2],
) -> Result<NodeId> {
    let rel = oracle_positions(ids, oracle)?;
    Ok(g.selection_loss(w, rel))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SelectionFlags {
    pub at_least_one: bool,
    pub both: bool,
}

pub fn selection_accuracy(selected: (SpeakerId, SpeakerId), oracle: [SpeakerId; 2]) -> SelectionFlags {
    let hits = [selected.0, selected.1]
        .iter()
        .filter(|id| oracle.contains(id))
        .count();
    SelectionFlags {
        at_least_one: hits >= 1,
        both: hits == 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(rows: &[&[f64]]) -> Embedding {
        let cols = rows[0].len();
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Embedding::new(Array2::from_shape_vec((rows.len(), cols), data).unwrap()).unwrap()
    }

    #[test]
    fn single_frame_profile_takes_all_weight() {
        let m = emb(&[&[0.3, -1.0], &[2.0, 0.1]]);
        let p = emb(&[&[0.5, 0.5]]);
        let r = correlate(&m, &[(4, &p)]).unwrap();
        assert!((r.weights[0] - 1.0).abs() < 1e-15);
        assert_eq!(r.selected, None);
    }

    #[test]
    fn identical_profiles_share_weight() {
        let m = emb(&[&[0.3, -1.0], &[2.0, 0.1], &[0.0, 0.0]]);
        let p = emb(&[&[0.5, -0.2]]);
        let inv: Vec<(SpeakerId, &Embedding)> = (0..5).map(|i| (i, &p)).collect();
        let r = correlate(&m, &inv).unwrap();
        for w in &r.weights {
            assert!((w - 0.2).abs() < 1e-15);
        }
        assert_eq!(r.selected, Some((0, 1)));
    }

    #[test]
    fn empty_inventory_is_error() {
        let m = emb(&[&[1.0]]);
        assert!(matches!(correlate(&m, &[]), Err(Error::InsufficientInventory(0))));
    }

    #[test]
    fn top2_examples() {
        assert_eq!(select_top2(&[7, 8, 9], &[1.2, 0.6, 0.2]).unwrap(), (7, 8));
        assert_eq!(select_top2(&[7, 8, 9], &[0.2, 0.6, 1.2]).unwrap(), (9, 8));
        assert_eq!(select_top2(&[5, 2], &[0.5, 0.5]).unwrap(), (2, 5));
        assert!(matches!(select_top2(&[1], &[1.0]), Err(Error::InsufficientInventory(1))));
    }

    #[test]
    fn loss_zero_at_target() {
        let r = CorrelationResult {
            ids: vec![1, 2, 3],
            weights: vec![0.25, 0.0, 0.75],
            frames: vec![1, 1, 1],
            selected: None,
        };
        assert_eq!(selection_loss(&r, [3, 1]).unwrap(), 0.0);
        assert!(matches!(selection_loss(&r, [3, 9]), Err(Error::MissingSpeaker(9))));
    }

    #[test]
    fn accuracy_flags() {
        let f = |s, o| selection_accuracy(s, o);
        assert_eq!(f((1, 2), [2, 1]), SelectionFlags { at_least_one: true, both: true });
        assert_eq!(f((1, 3), [2, 1]), SelectionFlags { at_least_one: true, both: false });
        assert_eq!(f((4, 3), [2, 1]), SelectionFlags::default());
    }
}
