//! Model parameters for the embedding networks and the separator, and the
//! checkpoint file format.
//!
//! Checkpoint layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes   "INVSEPCK"
//! version    u32
//! hlen       u32       length of the JSON header
//! header     hlen      UTF-8 JSON (CheckpointHeader)
//! count      u32       number of tensors
//! per tensor:
//!   nlen     u32       name length
//!   name     nlen      UTF-8
//!   rows     u64
//!   cols     u64
//!   data     rows*cols f64, row-major
//! ```

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::layers::{LayerSpec, Network};
use super::params::{seeded_rng, ParamStore};
use crate::corpus::derive_seed;
use crate::error::{Error, Result};
use crate::signal::{NormalizationStats, NUM_BINS};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"INVSEPCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Column order of the separator input.
pub const CONCAT_ORDER: [&str; 4] = ["features", "mixture_embedding", "bias_1", "bias_2"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Gru,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub feat_dim: usize,
    pub embed_dim: usize,
    /// Hidden units per direction.
    pub hidden: usize,
    /// Recurrent layers per network.
    pub layers: usize,
    pub cell: CellKind,
    pub init_seed: u64,
}

impl ModelConfig {
    pub fn desk(init_seed: u64) -> Self {
        Self {
            feat_dim: NUM_BINS,
            embed_dim: 32,
            hidden: 64,
            layers: 2,
            cell: CellKind::Gru,
            init_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feat_dim == 0 || self.embed_dim == 0 || self.hidden == 0 || self.layers == 0 {
            return Err(Error::InvalidArgument(format!("degenerate model config {self:?}")));
        }
        Ok(())
    }

    fn recurrent(&self, in_dim: usize) -> Vec<LayerSpec> {
        (0..self.layers)
            .map(|l| LayerSpec::RecurrentBidirectional {
                in_dim: if l == 0 { in_dim } else { 2 * self.hidden },
                hidden: self.hidden,
            })
            .collect()
    }

    pub fn embed_specs(&self) -> Vec<LayerSpec> {
        let mut s = self.recurrent(self.feat_dim);
        s.push(LayerSpec::Linear {
            in_dim: 2 * self.hidden,
            out_dim: self.embed_dim,
        });
        s.push(LayerSpec::Tanh);
        s
    }

    /// Separator input width, see [`CONCAT_ORDER`].
    pub fn separator_input(&self) -> usize {
        self.feat_dim + 3 * self.embed_dim
    }

    pub fn separator_specs(&self) -> Vec<LayerSpec> {
        let mut s = self.recurrent(self.separator_input());
        s.push(LayerSpec::Linear {
            in_dim: 2 * self.hidden,
            out_dim: 2 * self.feat_dim,
        });
        s.push(LayerSpec::Sigmoid);
        s
    }
}

/// Embedding network plus separator.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub embed: Network,
    pub separator: Network,
}

pub const SEPARATION_PREFIX: &str = "sep";
pub const SELECTION_PREFIX: &str = "sel";
pub const REFINE_PREFIX: &str = "ref";

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub stats: NormalizationStats,
    /// Name of the regime that produced the parameters.
    pub regime: String,
    pub separation: Stage,
    /// Dedicated selection embedding; the separation embedding is shared
    /// when absent.
    pub selection: Option<Network>,
    /// Dedicated refinement stage; the separation stage is reused when
    /// absent.
    pub refine: Option<Stage>,
}

fn build_stage(
    store: &mut ParamStore,
    config: &ModelConfig,
    prefix: &str,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<Stage> {
    Ok(Stage {
        embed: Network::build(store, &format!("{prefix}.embed"), &config.embed_specs(), rng)?,
        separator: Network::build(
            store,
            &format!("{prefix}.separator"),
            &config.separator_specs(),
            rng,
        )?,
    })
}

fn bind_stage(store: &ParamStore, config: &ModelConfig, prefix: &str) -> Result<Stage> {
    Ok(Stage {
        embed: Network::bind(store, &format!("{prefix}.embed"), &config.embed_specs())?,
        separator: Network::bind(store, &format!("{prefix}.separator"), &config.separator_specs())?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointHeader {
    config: ModelConfig,
    concat_order: Vec<String>,
    regime: String,
    selection_embed: bool,
    refine_stage: bool,
}

impl ModelParams {
    pub fn new(config: ModelConfig, stats: NormalizationStats) -> Result<Self> {
        config.validate()?;
        if stats.num_bins() != config.feat_dim {
            return Err(Error::shape(
                "normalization stats",
                (config.feat_dim, 1),
                (stats.num_bins(), 1),
            ));
        }
        let mut store = ParamStore::new();
        let mut rng = seeded_rng(config.init_seed);
        let separation = build_stage(&mut store, &config, SEPARATION_PREFIX, &mut rng)?;
        Ok(Self {
            config,
            store,
            stats,
            regime: "untrained".into(),
            separation,
            selection: None,
            refine: None,
        })
    }

    /// Adds a selection embedding initialized from the separation
    /// embedding. No-op if present.
    pub fn add_selection_embed(&mut self) -> Result<()> {
        if self.selection.is_some() {
            return Ok(());
        }
        let mut rng = seeded_rng(derive_seed(self.config.init_seed, &[1]));
        let prefix = format!("{SELECTION_PREFIX}.embed");
        let net = Network::build(&mut self.store, &prefix, &self.config.embed_specs(), &mut rng)?;
        self.store
            .copy_prefix(&format!("{SEPARATION_PREFIX}.embed."), &format!("{prefix}."))?;
        self.selection = Some(net);
        Ok(())
    }

    /// Adds a refinement stage initialized from the separation stage.
    /// No-op if present.
    pub fn add_refine_stage(&mut self) -> Result<()> {
        if self.refine.is_some() {
            return Ok(());
        }
        let mut rng = seeded_rng(derive_seed(self.config.init_seed, &[2]));
        let stage = build_stage(&mut self.store, &self.config, REFINE_PREFIX, &mut rng)?;
        self.store
            .copy_prefix(&format!("{SEPARATION_PREFIX}."), &format!("{REFINE_PREFIX}."))?;
        self.refine = Some(stage);
        Ok(())
    }

    pub fn selection_net(&self) -> &Network {
        self.selection.as_ref().unwrap_or(&self.separation.embed)
    }

    pub fn refine_stage(&self) -> &Stage {
        self.refine.as_ref().unwrap_or(&self.separation)
    }

    pub fn num_parameters(&self) -> usize {
        self.store.num_scalars()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.store.check_finite()?;
        let header = CheckpointHeader {
            config: self.config.clone(),
            concat_order: CONCAT_ORDER.iter().map(|s| s.to_string()).collect(),
            regime: self.regime.clone(),
            selection_embed: self.selection.is_some(),
            refine_stage: self.refine.is_some(),
        };
        let header = serde_json::to_vec(&header)?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        let mean = self.stats.mean.clone().insert_axis(ndarray::Axis(0));
        let std = self.stats.std.clone().insert_axis(ndarray::Axis(0));
        let mut tensors: Vec<(&str, &Array2<f64>)> = vec![("stats.mean", &mean), ("stats.std", &std)];
        tensors.extend(self.store.iter());
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.nrows() as u64).to_le_bytes());
            out.extend_from_slice(&(t.ncols() as u64).to_le_bytes());
            for v in t.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let hlen = r.u32()? as usize;
        let header: CheckpointHeader = serde_json::from_slice(r.take(hlen)?)?;
        if header.concat_order != CONCAT_ORDER {
            return Err(Error::Checkpoint(format!(
                "incompatible concat order {:?}",
                header.concat_order
            )));
        }
        header.config.validate()?;
        let count = r.u32()? as usize;
        let mut store = ParamStore::new();
        let (mut mean, mut std) = (None, None);
        for _ in 0..count {
            let nlen = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(nlen)?)
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
                .to_string();
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            let n = rows
                .checked_mul(cols)
                .filter(|n| n.checked_mul(8).is_some_and(|b| b <= bytes.len()))
                .ok_or_else(|| Error::Checkpoint(format!("tensor {name} too large")))?;
            let data = r
                .take(n * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect::<Vec<_>>();
            let t = Array2::from_shape_vec((rows, cols), data).expect("sized");
            match name.as_str() {
                "stats.mean" => mean = Some(Array1::from_vec(t.into_raw_vec_and_offset().0)),
                "stats.std" => std = Some(Array1::from_vec(t.into_raw_vec_and_offset().0)),
                _ => {
                    if store.find(&name).is_some() {
                        return Err(Error::Checkpoint(format!("duplicate tensor {name}")));
                    }
                    store.add(name, t);
                }
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        store.check_finite()?;
        let stats = match (mean, std) {
            (Some(mean), Some(std)) => NormalizationStats { mean, std },
            _ => return Err(Error::Checkpoint("missing normalization stats".into())),
        };
        let config = header.config;
        let separation = bind_stage(&store, &config, SEPARATION_PREFIX)?;
        let selection = header
            .selection_embed
            .then(|| {
                Network::bind(&store, &format!("{SELECTION_PREFIX}.embed"), &config.embed_specs())
            })
            .transpose()?;
        let refine = header
            .refine_stage
            .then(|| bind_stage(&store, &config, REFINE_PREFIX))
            .transpose()?;
        for net in [&separation.embed, &separation.separator]
            .into_iter()
            .chain(selection.as_ref())
            .chain(refine.iter().flat_map(|s| [&s.embed, &s.separator]))
        {
            check_shapes(&store, net)?;
        }
        Ok(Self {
            config,
            store,
            stats,
            regime: header.regime,
            separation,
            selection,
            refine,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// SHA-256 of the serialized checkpoint, hex encoded.
    pub fn digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_bytes()?)))
    }
}

fn check_shapes(store: &ParamStore, net: &Network) -> Result<()> {
    let mut rng = seeded_rng(0);
    let mut fresh = ParamStore::new();
    let reference = Network::build(&mut fresh, &net.prefix, &net.specs, &mut rng)?;
    for (a, b) in net.param_ids().into_iter().zip(reference.param_ids()) {
        if store.get(a).dim() != fresh.get(b).dim() {
            return Err(Error::Checkpoint(format!(
                "tensor {} has shape {:?}, expected {:?}",
                store.name(a),
                store.get(a).dim(),
                fresh.get(b).dim()
            )));
        }
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelParams {
        let config = ModelConfig {
            feat_dim: 6,
            embed_dim: 3,
            hidden: 4,
            layers: 1,
            cell: CellKind::Gru,
            init_seed: 11,
        };
        ModelParams::new(config, NormalizationStats::identity(6)).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let mut m = tiny();
        m.add_selection_embed().unwrap();
        m.add_refine_stage().unwrap();
        m.regime = "ssues_jt".into();
        let back = ModelParams::from_bytes(&m.to_bytes().unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.digest().unwrap(), m.digest().unwrap());
    }

    #[test]
    fn same_seed_same_digest() {
        assert_eq!(tiny().digest().unwrap(), tiny().digest().unwrap());
    }

    #[test]
    fn copies_start_equal() {
        let mut m = tiny();
        m.add_selection_embed().unwrap();
        let a = m.separation.embed.param_ids();
        let b = m.selection.as_ref().unwrap().param_ids();
        for (x, y) in a.into_iter().zip(b) {
            assert_eq!(m.store.get(x), m.store.get(y));
        }
    }

    #[test]
    fn corrupt_files_rejected() {
        let bytes = tiny().to_bytes().unwrap();
        assert!(ModelParams::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(ModelParams::from_bytes(&bad).is_err());
        let mut bad = bytes;
        bad[8] = 9;
        assert!(matches!(ModelParams::from_bytes(&bad), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn separator_width_follows_concat_order() {
        let c = ModelConfig::desk(0);
        assert_eq!(c.separator_input(), 257 + 96);
    }
}
