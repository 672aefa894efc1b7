//! Brute-force reference implementations shared by the oracle tests and
//! the acceptance run. Plain loops over nested vectors, no library code.

#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn rand_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Mat {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.random_range(lo..hi)).collect())
        .collect()
}

pub fn to_array(m: &Mat) -> Array2<f64> {
    let cols = m[0].len();
    Array2::from_shape_fn((m.len(), cols), |(i, j)| m[i][j])
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// exp-normalize without max shifting; inputs are small.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = v.iter().map(|x| x.exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// Joint softmax over every profile frame, and the per-profile mean.
pub fn joint(m: &Mat, profiles: &[Mat]) -> (Mat, Vec<f64>) {
    let all: Vec<&Vec<f64>> = profiles.iter().flatten().collect();
    let joint: Mat = m
        .iter()
        .map(|row| softmax(&all.iter().map(|p| dot(row, p)).collect::<Vec<_>>()))
        .collect();
    let mut weights = Vec::new();
    let mut start = 0;
    for p in profiles {
        let mut s = 0.0;
        for row in &joint {
            for v in &row[start..start + p.len()] {
                s += v;
            }
        }
        weights.push(s / (m.len() * p.len()) as f64);
        start += p.len();
    }
    (joint, weights)
}

/// Attention of mixture frames over profile frames and the aligned bias.
pub fn attention(m: &Mat, c: &Mat) -> (Mat, Mat) {
    let alpha: Mat = m
        .iter()
        .map(|row| softmax(&c.iter().map(|q| dot(row, q)).collect::<Vec<_>>()))
        .collect();
    let dim = c[0].len();
    let bias = alpha
        .iter()
        .map(|a| (0..dim).map(|d| a.iter().zip(c).map(|(w, q)| w * q[d]).sum()).collect())
        .collect();
    (alpha, bias)
}

/// PIT over two masked estimates: (loss, swapped, gradient per mask).
pub fn pit(m: &[Mat; 2], x: &Mat, y: &[Mat; 2]) -> (f64, bool, [Mat; 2]) {
    let (t, f) = (x.len(), x[0].len());
    let l = |u: usize, v: usize| -> f64 {
        let mut s = 0.0;
        for i in 0..t {
            for j in 0..f {
                let d = m[u][i][j] * x[i][j] - y[v][i][j];
                s += d * d;
            }
        }
        s
    };
    let id = l(0, 0) + l(1, 1);
    let sw = l(0, 1) + l(1, 0);
    let swapped = sw < id;
    let grad = |u: usize| -> Mat {
        let v = if swapped { 1 - u } else { u };
        (0..t)
            .map(|i| (0..f).map(|j| 2.0 * (m[u][i][j] * x[i][j] - y[v][i][j]) * x[i][j]).collect())
            .collect()
    };
    (if swapped { sw } else { id }, swapped, [grad(0), grad(1)])
}

/// Selection loss and its gradient with respect to every weight, for
/// relevant positions `a` and `b`.
pub fn selection(w: &[f64], a: usize, b: usize) -> (f64, Vec<f64>) {
    let rel = 1.0 - w[a] - w[b];
    let mut loss = rel * rel;
    let mut grad = vec![0.0; w.len()];
    for k in 0..w.len() {
        if k == a || k == b {
            grad[k] = -2.0 * rel;
        } else {
            loss += w[k] * w[k];
            grad[k] = 2.0 * w[k];
        }
    }
    (loss, grad)
}

/// Positions of the two largest weights; ties go to the lower id.
pub fn top2(ids: &[u32], w: &[f64]) -> (usize, usize) {
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| w[b].partial_cmp(&w[a]).unwrap().then(ids[a].cmp(&ids[b])));
    (order[0], order[1])
}

/// One DFT bin of a windowed frame.
pub fn dft_bin(frame: &[f64], window: &[f64], k: usize) -> (f64, f64) {
    let n = frame.len();
    let (mut re, mut im) = (0.0, 0.0);
    for i in 0..n {
        let v = frame[i] * window[i];
        let ang = -2.0 * std::f64::consts::PI * (k * i) as f64 / n as f64;
        re += v * ang.cos();
        im += v * ang.sin();
    }
    (re, im)
}

pub fn si_sdr(e: &[f64], r: &[f64]) -> f64 {
    let a = dot(e, r) / dot(r, r);
    let num: f64 = r.iter().map(|v| (a * v).powi(2)).sum();
    let den: f64 = e.iter().zip(r).map(|(x, y)| (x - a * y).powi(2)).sum();
    10.0 * (num / den).log10()
}

pub fn max_diff(a: &Mat, b: &Array2<f64>) -> f64 {
    let mut d = 0.0f64;
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            d = d.max((b[[i, j]] - v).abs());
        }
    }
    d
}

use invsep::selection::{correlate, joint_weights, select_top2, selection_loss, selection_loss_grad, CorrelationResult, Embedding};
use invsep::separation::{align_bias, pit_loss, pit_loss_grad, MaskPair};
use invsep::signal::{FeatureKind, FeatureMatrix, Mask};
use rand::SeedableRng;

/// Worst-case deviations of the library from the loop oracles and from the
/// normalization identities, over random instances of at most 8 x 8.
#[derive(Debug, Default)]
pub struct Exactness {
    pub instances: usize,
    /// max |row sum - 1| of the joint softmax.
    pub joint_rows: f64,
    /// max |sum_p T_p w^p - 1|.
    pub weight_total: f64,
    /// max |row sum - 1| of the attention.
    pub attention_rows: f64,
    /// Instances where swapping targets or outputs changed the PIT loss.
    pub pit_asymmetric: usize,
    /// max abs difference against the loop oracles.
    pub oracle_err: f64,
    /// Top-2 selections that differ from the oracle.
    pub top2_mismatch: usize,
}

fn emb(m: &Mat) -> Embedding {
    Embedding::new(to_array(m)).unwrap()
}

fn lin(m: &Mat) -> FeatureMatrix {
    FeatureMatrix::new(to_array(m), FeatureKind::LinearMagnitude)
}

pub fn exactness(seed: u64, trials: usize) -> Exactness {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = Exactness {
        instances: trials,
        ..Exactness::default()
    };
    for _ in 0..trials {
        // correlation
        let e = rng.random_range(1..=8);
        let tm = rng.random_range(1..=8);
        let m = rand_matrix(&mut rng, tm, e, -1.5, 1.5);
        let ps: Vec<Mat> = (0..rng.random_range(1..=5))
            .map(|_| {
                let t = rng.random_range(1..=8);
                rand_matrix(&mut rng, t, e, -1.5, 1.5)
            })
            .collect();
        let (j_want, w_want) = joint(&m, &ps);
        let pe: Vec<Embedding> = ps.iter().map(emb).collect();
        let j_got = joint_weights(&emb(&m), &pe.iter().collect::<Vec<_>>()).unwrap();
        r.oracle_err = r.oracle_err.max(max_diff(&j_want, &j_got));
        for row in j_got.rows() {
            r.joint_rows = r.joint_rows.max((row.sum() - 1.0).abs());
        }
        let inv: Vec<(u32, &Embedding)> = pe.iter().enumerate().map(|(k, p)| (k as u32 + 10, p)).collect();
        let c = correlate(&emb(&m), &inv).unwrap();
        for (a, b) in c.weights.iter().zip(&w_want) {
            r.oracle_err = r.oracle_err.max((a - b).abs());
        }
        r.weight_total = r.weight_total.max((c.frame_weighted_sum() - 1.0).abs());

        // attention and aligned bias
        let q = &ps[0];
        let (a_want, b_want) = attention(&m, q);
        let a_got = invsep::separation::attention(&emb(&m), &emb(q)).unwrap();
        let b_got = align_bias(&emb(&m), &emb(q)).unwrap();
        r.oracle_err = r.oracle_err.max(max_diff(&a_want, &a_got)).max(max_diff(&b_want, &b_got.values));
        for row in a_got.rows() {
            r.attention_rows = r.attention_rows.max((row.sum() - 1.0).abs());
        }

        // PIT
        let (t, f) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let mk = [rand_matrix(&mut rng, t, f, 0.0, 1.0), rand_matrix(&mut rng, t, f, 0.0, 1.0)];
        let x = rand_matrix(&mut rng, t, f, 0.0, 2.0);
        let y = [rand_matrix(&mut rng, t, f, 0.0, 1.0), rand_matrix(&mut rng, t, f, 0.0, 1.0)];
        let (loss, swapped, grad) = pit(&mk, &x, &y);
        let masks = MaskPair {
            masks: [Mask::new(to_array(&mk[0])).unwrap(), Mask::new(to_array(&mk[1])).unwrap()],
        };
        let (xm, y0, y1) = (lin(&x), lin(&y[0]), lin(&y[1]));
        let out = pit_loss(&masks, &xm, [&y0, &y1]).unwrap();
        r.oracle_err = r.oracle_err.max((out.loss - loss).abs() / loss.max(1.0));
        if (out.permutation.estimate_for(0) == 1) != swapped {
            r.oracle_err = f64::INFINITY;
        }
        let g = pit_loss_grad(&masks, &xm, [&y0, &y1], &out).unwrap();
        r.oracle_err = r.oracle_err.max(max_diff(&grad[0], &g[0])).max(max_diff(&grad[1], &g[1]));
        let by_target = pit_loss(&masks, &xm, [&y1, &y0]).unwrap().loss;
        let by_output = pit_loss(&masks.swapped(), &xm, [&y0, &y1]).unwrap().loss;
        if by_target != out.loss || by_output != out.loss {
            r.pit_asymmetric += 1;
        }

        // selection loss and top-2, coarse weights so that ties occur
        let p = rng.random_range(2..=8);
        let mut ids: Vec<u32> = (0..20).collect();
        for k in 0..p {
            let j = rng.random_range(k..20);
            ids.swap(k, j);
        }
        ids.truncate(p);
        let w: Vec<f64> = (0..p).map(|_| rng.random_range(0..5) as f64 / 8.0).collect();
        let (i1, i2) = top2(&ids, &w);
        if select_top2(&ids, &w).unwrap() != (ids[i1], ids[i2]) {
            r.top2_mismatch += 1;
        }
        let a = rng.random_range(0..p);
        let b = (a + rng.random_range(1..p)) % p;
        let (l_want, g_want) = selection(&w, a, b);
        let cr = CorrelationResult {
            ids: ids.clone(),
            weights: w.clone(),
            frames: vec![1; p],
            selected: None,
        };
        r.oracle_err = r.oracle_err.max((selection_loss(&cr, [ids[a], ids[b]]).unwrap() - l_want).abs());
        let g_got = selection_loss_grad(&cr, [ids[a], ids[b]]).unwrap();
        for (x, y) in g_got.iter().zip(&g_want) {
            r.oracle_err = r.oracle_err.max((x - y).abs());
        }
    }
    r
}
