//! Finite-difference checks of every layer, graph operation and loss, and
//! of the full training graphs on a toy-sized model.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use crate::corpus::{Inventory, MixtureSample, SpeakerProfile};
use crate::error::{Error, Result};
use crate::nnet::gradcheck::{check_params, check_vector, GradcheckReport, DEFAULT_FLOOR, DEFAULT_STEP};
use crate::nnet::{CellKind, Graph, LayerSpec, ModelConfig, ModelParams, Network, NodeId, ParamStore};
use crate::selection::correlate_graph;
use crate::separation::{first_pass_graph, Conditioning};
use crate::signal::{FeatureKind, FeatureMatrix, NormalizationStats, Spectrogram, Waveform, LOG_FLOOR};
use crate::train::{prepare_model, sample_loss, Regime, TrainConfig, TrainSample};

pub const LAYER_TOLERANCE: f64 = 1e-4;
pub const LOSS_TOLERANCE: f64 = 1e-6;
pub const GRAPH_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub tolerance: f64,
    pub report: GradcheckReport,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.report.max_rel_err < self.tolerance
    }

    /// `name max_rel_err=.. tol=.. worst=.. checked=..`
    pub fn line(&self) -> String {
        format!(
            "{} max_rel_err={:.3e} tol={:.0e} worst={} checked={}",
            self.name, self.report.max_rel_err, self.tolerance, self.report.worst, self.report.checked
        )
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: (usize, usize), lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_fn(shape, |_| rng.random_range(lo..hi))
}

fn worse(a: GradcheckReport, b: GradcheckReport, tag: &str) -> GradcheckReport {
    let checked = a.checked + b.checked;
    let mut r = if b.max_rel_err > a.max_rel_err {
        GradcheckReport {
            worst: format!("{tag}{}", b.worst),
            ..b
        }
    } else {
        a
    };
    r.checked = checked;
    r
}

/// Checks gradients of `sum(build(inputs) ⊙ head)` with respect to every
/// input, and to `params` if any.
fn check_graph<F>(store: &ParamStore, inputs: &[Array2<f64>], head_seed: u64, build: F) -> Result<GradcheckReport>
where
    F: Fn(&mut Graph<'_>, &[NodeId]) -> Result<NodeId>,
{
    let shapes: Vec<(usize, usize)> = inputs.iter().map(|x| x.dim()).collect();
    let run = |store: &ParamStore, flat: &[f64], grads: bool| -> Result<(f64, Vec<f64>, crate::nnet::Gradients)> {
        let mut g = Graph::new(store);
        let mut off = 0;
        let leaves: Vec<NodeId> = shapes
            .iter()
            .map(|&(r, c)| {
                let v = Array2::from_shape_vec((r, c), flat[off..off + r * c].to_vec()).expect("shape");
                off += r * c;
                g.input(v)
            })
            .collect();
        let out = build(&mut g, &leaves)?;
        let head = {
            let mut hr = ChaCha8Rng::seed_from_u64(head_seed);
            uniform(&mut hr, g.value(out).dim(), -1.0, 1.0)
        };
        let loss = g.weighted_sum(out, head)?;
        let value = g.scalar(loss);
        if !grads {
            return Ok((value, Vec::new(), crate::nnet::Gradients::new(store.len())));
        }
        g.backward(loss, 1.0);
        let mut flat_grad = Vec::with_capacity(flat.len());
        for (&leaf, &(r, c)) in leaves.iter().zip(&shapes) {
            match g.grad(leaf) {
                Some(gr) => flat_grad.extend(gr.iter().copied()),
                None => flat_grad.extend(std::iter::repeat_n(0.0, r * c)),
            }
        }
        Ok((value, flat_grad, g.into_param_grads()))
    };
    let flat: Vec<f64> = inputs.iter().flat_map(|x| x.iter().copied()).collect();
    let (_, analytic, _) = run(store, &flat, true)?;
    let input_report = check_vector(&flat, &analytic, DEFAULT_STEP, DEFAULT_FLOOR, |x| Ok(run(store, x, false)?.0))?;
    let ids: Vec<_> = store.ids().collect();
    if ids.is_empty() {
        return Ok(GradcheckReport {
            worst: format!("input{}", input_report.worst),
            ..input_report
        });
    }
    let param_report = check_params(store, &ids, DEFAULT_STEP, DEFAULT_FLOOR, |s| {
        let (v, _, g) = run(s, &flat, true)?;
        Ok((v, g))
    })?;
    Ok(worse(
        GradcheckReport {
            worst: format!("input{}", input_report.worst),
            ..input_report
        },
        param_report,
        "",
    ))
}

/// Every layer kind in isolation, then every graph operation.
pub fn layer_checks(seed: u64) -> Result<Vec<GradCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let specs = [
        ("layer.linear", LayerSpec::Linear { in_dim: 5, out_dim: 4 }),
        ("layer.bigru", LayerSpec::RecurrentBidirectional { in_dim: 4, hidden: 3 }),
        ("layer.sigmoid", LayerSpec::Sigmoid),
        ("layer.tanh", LayerSpec::Tanh),
        ("layer.softmax", LayerSpec::SoftmaxOverAxis),
    ];
    for (name, spec) in specs {
        let width = match spec {
            LayerSpec::Linear { in_dim, .. } | LayerSpec::RecurrentBidirectional { in_dim, .. } => in_dim,
            _ => 5,
        };
        let mut store = ParamStore::new();
        let mut init = crate::nnet::params::seeded_rng(rng.random());
        let net = Network::build(&mut store, "t", &[spec], &mut init)?;
        let x = uniform(&mut rng, (6, width), -1.5, 1.5);
        let report = check_graph(&store, &[x], rng.random(), |g, l| net.forward(g, l[0]))?;
        out.push(GradCheck {
            name: name.into(),
            tolerance: LAYER_TOLERANCE,
            report,
        });
    }
    let empty = ParamStore::new();
    let mut op = |name: &str, inputs: Vec<Array2<f64>>, f: &dyn Fn(&mut Graph<'_>, &[NodeId]) -> Result<NodeId>| -> Result<()> {
        let report = check_graph(&empty, &inputs, seed ^ name.len() as u64, f)?;
        out.push(GradCheck {
            name: format!("op.{name}"),
            tolerance: LAYER_TOLERANCE,
            report,
        });
        Ok(())
    };
    let a = uniform(&mut rng, (4, 3), -1.0, 1.0);
    let b = uniform(&mut rng, (4, 2), -1.0, 1.0);
    let c = uniform(&mut rng, (3, 3), -1.0, 1.0);
    let k = uniform(&mut rng, (4, 3), 0.1, 2.0);
    let pos = uniform(&mut rng, (4, 3), 0.05, 2.0);
    let shift = Array1::from(vec![0.3, -0.2, 1.0]);
    let scale = Array1::from(vec![0.7, 1.5, 2.0]);
    op("concat_cols", vec![a.clone(), b.clone()], &|g, l| g.concat_cols(l))?;
    op("concat_rows", vec![a.clone(), c.clone()], &|g, l| g.concat_rows(l))?;
    op("slice_cols", vec![a.clone()], &|g, l| Ok(g.slice_cols(l[0], 1, 2)))?;
    op("matmul", vec![a.clone(), c.clone()], &|g, l| g.matmul(l[0], l[1]))?;
    op("matmul_t", vec![a.clone(), c.clone()], &|g, l| g.matmul_t(l[0], l[1]))?;
    op("row_softmax", vec![a.clone()], &|g, l| Ok(g.row_softmax(l[0])))?;
    op("mul_const", vec![a.clone()], &|g, l| g.mul_const(l[0], k.clone()))?;
    op("log_eps", vec![pos], &|g, l| Ok(g.log_eps(l[0], LOG_FLOOR)))?;
    op("col_affine", vec![a.clone()], &|g, l| g.col_affine(l[0], &shift, &scale))?;
    op("block_mean", vec![a], &|g, l| Ok(g.block_mean(l[0], vec![(0, 1), (1, 2)])))?;
    Ok(out)
}

/// Selection loss against its weights and through the correlation, and
/// the PIT loss against the masks.
pub fn loss_checks(seed: u64) -> Result<Vec<GradCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let empty = ParamStore::new();
    let mut out = Vec::new();

    let w = uniform(&mut rng, (1, 5), 0.0, 0.4);
    let report = check_graph(&empty, &[w], rng.random(), |g, l| Ok(g.selection_loss(l[0], [3, 1])))?;
    out.push(GradCheck {
        name: "loss.selection".into(),
        tolerance: LOSS_TOLERANCE,
        report,
    });

    let e_m = uniform(&mut rng, (4, 3), -1.0, 1.0);
    let ps: Vec<Array2<f64>> = [2, 3, 1].iter().map(|&t| uniform(&mut rng, (t, 3), -1.0, 1.0)).collect();
    let mut inputs = vec![e_m];
    inputs.extend(ps);
    let report = check_graph(&empty, &inputs, rng.random(), |g, l| {
        let (_, w) = correlate_graph(g, l[0], &l[1..])?;
        Ok(g.selection_loss(w, [0, 2]))
    })?;
    out.push(GradCheck {
        name: "loss.selection_through_correlation".into(),
        tolerance: LOSS_TOLERANCE,
        report,
    });

    let (t, f) = (4, 5);
    let masks = [uniform(&mut rng, (t, f), 0.05, 0.95), uniform(&mut rng, (t, f), 0.05, 0.95)];
    let mag = uniform(&mut rng, (t, f), 0.1, 2.0);
    let targets = [uniform(&mut rng, (t, f), 0.0, 1.5), uniform(&mut rng, (t, f), 0.0, 1.5)];
    let report = check_graph(&empty, &masks, rng.random(), |g, l| {
        let est = [g.mul_const(l[0], mag.clone())?, g.mul_const(l[1], mag.clone())?];
        Ok(g.pit_loss(est, targets.clone())?.0)
    })?;
    out.push(GradCheck {
        name: "loss.pit_masks".into(),
        tolerance: LOSS_TOLERANCE,
        report,
    });
    Ok(out)
}

/// Toy-sized model: 6 bins, 3-dim embeddings, 4 hidden units, 2 layers.
pub fn toy_config(seed: u64) -> ModelConfig {
    ModelConfig {
        feat_dim: 6,
        embed_dim: 3,
        hidden: 4,
        layers: 2,
        cell: CellKind::Gru,
        init_seed: seed,
    }
}

/// A random toy training sample with `n_profiles` inventory entries; the
/// relevant pair is `ids 0 and 1`.
pub fn toy_sample(seed: u64, frames: usize, bins: usize, n_profiles: usize) -> Result<TrainSample> {
    if n_profiles < 2 {
        return Err(Error::InsufficientInventory(n_profiles));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mag = uniform(&mut rng, (frames, bins), 0.1, 2.0);
    let feat = FeatureMatrix::new(uniform(&mut rng, (frames, bins), -1.5, 1.5), FeatureKind::NormalizedLogMagnitude);
    let targets = [
        FeatureMatrix::new(uniform(&mut rng, (frames, bins), 0.0, 1.5), FeatureKind::LinearMagnitude),
        FeatureMatrix::new(uniform(&mut rng, (frames, bins), 0.0, 1.5), FeatureKind::LinearMagnitude),
    ];
    let profiles: Vec<SpeakerProfile> = (0..n_profiles)
        .map(|k| SpeakerProfile {
            speaker_id: k as u32,
            features: FeatureMatrix::new(
                uniform(&mut rng, (2 + k % 3, bins), -1.5, 1.5),
                FeatureKind::NormalizedLogMagnitude,
            ),
        })
        .collect();
    let wave = Waveform::zeros(16);
    let mixture = MixtureSample {
        mix_wave: wave.clone(),
        sources: [wave.clone(), wave],
        mix_spec: Spectrogram {
            bins: mag.mapv(|v| Complex64::new(v, 0.0)),
            frame_len: 2 * (bins - 1),
            hop: bins - 1,
            num_samples: 16,
        },
        mix_mag: FeatureMatrix::new(mag, FeatureKind::LinearMagnitude),
        mix_feat: feat,
        targets,
        speaker_ids: [0, 1],
    };
    Ok(TrainSample {
        mixture,
        oracle_profiles: [profiles[0].features.clone(), profiles[1].features.clone()],
        inventory: Inventory {
            profiles,
            relevant_ids: Some([0, 1]),
        },
    })
}

/// Toy model prepared for `regime`, with non-trivial stats.
pub fn toy_model(seed: u64, regime: Regime) -> Result<ModelParams> {
    let model_cfg = toy_config(seed);
    let bins = model_cfg.feat_dim;
    let stats = NormalizationStats {
        mean: Array1::from_shape_fn(bins, |k| -0.5 + 0.1 * k as f64),
        std: Array1::from_shape_fn(bins, |k| 0.8 + 0.05 * k as f64),
    };
    let cfg = TrainConfig {
        model: model_cfg,
        ..TrainConfig::desk(regime)
    };
    let base = ModelParams::new(cfg.model.clone(), stats.clone())?;
    let mut model = prepare_model(&cfg, stats, Some(base))?;
    // distinct copies, so that gradients of each stage are exercised
    if let Some(sel) = &model.selection {
        for id in sel.param_ids() {
            model.store.get_mut(id).mapv_inplace(|v| v * 1.1);
        }
    }
    if let Some(stage) = &model.refine {
        for id in stage.embed.param_ids().into_iter().chain(stage.separator.param_ids()) {
            model.store.get_mut(id).mapv_inplace(|v| v * 0.9);
        }
    }
    Ok(model)
}

/// Parameter gradients of each regime's full training graph at toy size.
pub fn regime_checks(seed: u64, regimes: &[Regime]) -> Result<Vec<GradCheck>> {
    let bins = toy_config(seed).feat_dim;
    let sample = toy_sample(seed ^ 0x5eed, 5, bins, 4)?;
    regimes
        .iter()
        .map(|&regime| {
            let model = toy_model(seed, regime)?;
            let ids = crate::train::trainable_ids(&model, regime)?;
            let report = check_params(&model.store, &ids, DEFAULT_STEP, DEFAULT_FLOOR, |store| {
                let probe = ModelParams {
                    store: store.clone(),
                    ..model.clone()
                };
                let l = sample_loss(&probe, regime, &sample, true)?;
                Ok((l.loss, l.grads.expect("requested")))
            })?;
            Ok(GradCheck {
                name: format!("graph.{regime}"),
                tolerance: GRAPH_TOLERANCE,
                report,
            })
        })
        .collect()
}

/// Input gradients of each inventory profile in the joint-training graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileGradients {
    /// Inventory positions in bias-slot order.
    pub selected: [usize; 2],
    /// `None` where the gradient is exactly zero; otherwise the largest
    /// absolute entry.
    pub max_abs: Vec<Option<f64>>,
}

impl ProfileGradients {
    /// Every non-selected profile has no gradient and both selected ones do.
    pub fn only_selected(&self) -> bool {
        self.max_abs.iter().enumerate().all(|(k, g)| {
            if self.selected.contains(&k) {
                g.is_some_and(|v| v > 0.0)
            } else {
                g.is_none()
            }
        })
    }
}

pub fn profile_gradients(seed: u64, n_profiles: usize) -> Result<ProfileGradients> {
    let model = toy_model(seed, Regime::SsusiJt)?;
    let s = toy_sample(seed ^ 0xbeef, 5, model.config.feat_dim, n_profiles)?;
    let mut g = Graph::new(&model.store);
    let x = g.input(s.mixture.mix_feat.values.clone());
    let fp = first_pass_graph(&mut g, &model, &model.separation, x, &Conditioning::Inventory(&s.inventory))?;
    let mag = s.mixture.mix_mag.values.clone();
    let est = [g.mul_const(fp.masks[0], mag.clone())?, g.mul_const(fp.masks[1], mag)?];
    let targets = [s.mixture.targets[0].values.clone(), s.mixture.targets[1].values.clone()];
    let (loss, _) = g.pit_loss(est, targets)?;
    g.backward(loss, 1.0);
    let max_abs = fp
        .profile_leaves
        .iter()
        .map(|&leaf| g.grad(leaf).map(|gr| gr.iter().fold(0.0f64, |m, v| m.max(v.abs()))))
        .collect();
    Ok(ProfileGradients {
        selected: fp.selected.expect("inventory of at least two"),
        max_abs,
    })
}

/// Every check above, in a fixed order.
pub fn full_suite(seed: u64) -> Result<Vec<GradCheck>> {
    let mut all = layer_checks(seed)?;
    all.extend(loss_checks(seed)?);
    all.extend(regime_checks(seed, &Regime::ALL)?);
    Ok(all)
}
