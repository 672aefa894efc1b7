use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{BiGruIds, Graph, GruIds, NodeId};
use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// One stage of a sequential network. Feature concatenation is a graph
/// operation ([`Graph::concat_cols`]) rather than a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSpec {
    Linear { in_dim: usize, out_dim: usize },
    RecurrentBidirectional { in_dim: usize, hidden: usize },
    Sigmoid,
    Tanh,
    SoftmaxOverAxis,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Linear { w: ParamId, b: ParamId },
    BiGru(BiGruIds),
    Sigmoid,
    Tanh,
    Softmax,
}

/// Sequential stack of layers whose parameters live in a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub prefix: String,
    pub specs: Vec<LayerSpec>,
    pub layers: Vec<Layer>,
}

fn gru_dir(
    store: &mut ParamStore,
    name: &str,
    in_dim: usize,
    hidden: usize,
    rng: &mut ChaCha8Rng,
) -> GruIds {
    // PyTorch-style: every GRU tensor uses 1/sqrt(hidden)
    GruIds {
        wi: store.add_uniform(format!("{name}.wi"), (in_dim, 3 * hidden), hidden, rng),
        bi: store.add_uniform(format!("{name}.bi"), (1, 3 * hidden), hidden, rng),
        wh: store.add_uniform(format!("{name}.wh"), (hidden, 3 * hidden), hidden, rng),
        bh: store.add_uniform(format!("{name}.bh"), (1, 3 * hidden), hidden, rng),
    }
}

impl Network {
    pub fn build(
        store: &mut ParamStore,
        prefix: &str,
        specs: &[LayerSpec],
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(specs.len());
        let mut width: Option<usize> = None;
        for (i, spec) in specs.iter().enumerate() {
            let name = format!("{prefix}.{i}");
            let check_in = |in_dim: usize| -> Result<()> {
                if in_dim == 0 || width.is_some_and(|w| w != in_dim) {
                    return Err(Error::InvalidArgument(format!(
                        "{name}: input width {in_dim} does not follow {width:?}"
                    )));
                }
                Ok(())
            };
            let layer = match *spec {
                LayerSpec::Linear { in_dim, out_dim } => {
                    check_in(in_dim)?;
                    if out_dim == 0 {
                        return Err(Error::InvalidArgument(format!("{name}: zero output")));
                    }
                    width = Some(out_dim);
                    Layer::Linear {
                        w: store.add_uniform(format!("{name}.w"), (in_dim, out_dim), in_dim, rng),
                        b: store.add_uniform(format!("{name}.b"), (1, out_dim), in_dim, rng),
                    }
                }
                LayerSpec::RecurrentBidirectional { in_dim, hidden } => {
                    check_in(in_dim)?;
                    if hidden == 0 {
                        return Err(Error::InvalidArgument(format!("{name}: zero hidden")));
                    }
                    width = Some(2 * hidden);
                    Layer::BiGru(BiGruIds {
                        fwd: gru_dir(store, &format!("{name}.fwd"), in_dim, hidden, rng),
                        bwd: gru_dir(store, &format!("{name}.bwd"), in_dim, hidden, rng),
                    })
                }
                LayerSpec::Sigmoid => Layer::Sigmoid,
                LayerSpec::Tanh => Layer::Tanh,
                LayerSpec::SoftmaxOverAxis => Layer::Softmax,
            };
            layers.push(layer);
        }
        Ok(Self {
            prefix: prefix.to_string(),
            specs: specs.to_vec(),
            layers,
        })
    }

    /// Re-binds a network to an existing store by parameter name.
    pub fn bind(store: &ParamStore, prefix: &str, specs: &[LayerSpec]) -> Result<Self> {
        let find = |n: String| {
            store
                .find(&n)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {n}")))
        };
        let dir = |name: String| -> Result<GruIds> {
            Ok(GruIds {
                wi: find(format!("{name}.wi"))?,
                bi: find(format!("{name}.bi"))?,
                wh: find(format!("{name}.wh"))?,
                bh: find(format!("{name}.bh"))?,
            })
        };
        let layers = specs
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let name = format!("{prefix}.{i}");
                Ok(match spec {
                    LayerSpec::Linear { .. } => Layer::Linear {
                        w: find(format!("{name}.w"))?,
                        b: find(format!("{name}.b"))?,
                    },
                    LayerSpec::RecurrentBidirectional { .. } => Layer::BiGru(BiGruIds {
                        fwd: dir(format!("{name}.fwd"))?,
                        bwd: dir(format!("{name}.bwd"))?,
                    }),
                    LayerSpec::Sigmoid => Layer::Sigmoid,
                    LayerSpec::Tanh => Layer::Tanh,
                    LayerSpec::SoftmaxOverAxis => Layer::Softmax,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            prefix: prefix.to_string(),
            specs: specs.to_vec(),
            layers,
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: NodeId) -> Result<NodeId> {
        let mut h = x;
        for layer in &self.layers {
            h = match layer {
                Layer::Linear { w, b } => g.linear(h, *w, *b)?,
                Layer::BiGru(ids) => g.bigru(h, *ids)?,
                Layer::Sigmoid => g.sigmoid(h),
                Layer::Tanh => g.tanh(h),
                Layer::Softmax => g.row_softmax(h),
            };
        }
        Ok(h)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers
            .iter()
            .flat_map(|l| match l {
                Layer::Linear { w, b } => vec![*w, *b],
                Layer::BiGru(ids) => [ids.fwd, ids.bwd]
                    .iter()
                    .flat_map(|d| [d.wi, d.bi, d.wh, d.bh])
                    .collect(),
                _ => Vec::new(),
            })
            .collect()
    }
}
