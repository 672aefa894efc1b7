//! Gated recurrent unit kernels.
//!
//! Gate layout along the `3h` axis is `[reset | update | candidate]`:
//!
//! ```text
//! r  = sigmoid(x Wi_r + bi_r + h Wh_r + bh_r)
//! z  = sigmoid(x Wi_z + bi_z + h Wh_z + bh_z)
//! n  = tanh(x Wi_n + bi_n + r * (h Wh_n + bh_n))
//! h' = (1 - z) * n + z * h
//! ```

use ndarray::{s, Array2, ArrayView2, Axis};

#[derive(Debug, Clone)]
pub(crate) struct GruCache {
    /// Hidden states in time order, `T x h`.
    pub h: Array2<f64>,
    pub r: Array2<f64>,
    pub z: Array2<f64>,
    pub n: Array2<f64>,
    /// `h_prev Wh_n + bh_n`.
    pub hn: Array2<f64>,
}

pub(crate) struct GruGrads {
    pub dx: Array2<f64>,
    pub dwi: Array2<f64>,
    pub dbi: Array2<f64>,
    pub dwh: Array2<f64>,
    pub dbh: Array2<f64>,
}

#[inline]
fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn steps(t: usize, reverse: bool) -> Box<dyn Iterator<Item = usize>> {
    if reverse {
        Box::new((0..t).rev())
    } else {
        Box::new(0..t)
    }
}

/// `out = bias + v · W` for a row vector `v`.
fn row_times(v: &[f64], w: &ArrayView2<f64>, bias: &[f64], out: &mut [f64]) {
    out.copy_from_slice(bias);
    for (k, &vk) in v.iter().enumerate() {
        if vk == 0.0 {
            continue;
        }
        let row = w.row(k);
        let row = row.as_slice().expect("contiguous weights");
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += vk * wv;
        }
    }
}

pub(crate) fn gru_forward(
    x: &Array2<f64>,
    wi: &Array2<f64>,
    bi: &Array2<f64>,
    wh: &Array2<f64>,
    bh: &Array2<f64>,
    reverse: bool,
) -> GruCache {
    let t_len = x.nrows();
    let hid = wh.nrows();
    let xi = x.dot(wi) + bi;
    let mut cache = GruCache {
        h: Array2::zeros((t_len, hid)),
        r: Array2::zeros((t_len, hid)),
        z: Array2::zeros((t_len, hid)),
        n: Array2::zeros((t_len, hid)),
        hn: Array2::zeros((t_len, hid)),
    };
    let whv = wh.view();
    let bh = bh.as_slice().expect("contiguous bias");
    let mut hh = vec![0.0; 3 * hid];
    let mut h_prev = vec![0.0; hid];
    for t in steps(t_len, reverse) {
        row_times(&h_prev, &whv, bh, &mut hh);
        let xr = xi.row(t);
        for j in 0..hid {
            let r = sigmoid(xr[j] + hh[j]);
            let z = sigmoid(xr[hid + j] + hh[hid + j]);
            let hn = hh[2 * hid + j];
            let n = (xr[2 * hid + j] + r * hn).tanh();
            let h = (1.0 - z) * n + z * h_prev[j];
            cache.r[[t, j]] = r;
            cache.z[[t, j]] = z;
            cache.n[[t, j]] = n;
            cache.hn[[t, j]] = hn;
            cache.h[[t, j]] = h;
            h_prev[j] = h;
        }
    }
    cache
}

pub(crate) fn gru_backward(
    x: &Array2<f64>,
    wi: &Array2<f64>,
    wh: &Array2<f64>,
    cache: &GruCache,
    dh_out: ArrayView2<f64>,
    reverse: bool,
) -> GruGrads {
    let t_len = x.nrows();
    let hid = wh.nrows();
    let mut dxi = Array2::<f64>::zeros((t_len, 3 * hid));
    let mut dhh_all = Array2::<f64>::zeros((t_len, 3 * hid));
    let mut h_prev_all = Array2::<f64>::zeros((t_len, hid));
    let mut dh_next = vec![0.0; hid];
    let mut dhh = vec![0.0; 3 * hid];
    let order: Vec<usize> = steps(t_len, reverse).collect();
    for (pos, &t) in order.iter().enumerate().rev() {
        let prev = if pos == 0 { None } else { Some(order[pos - 1]) };
        let mut dh_prev = vec![0.0; hid];
        for j in 0..hid {
            let hp = prev.map_or(0.0, |p| cache.h[[p, j]]);
            h_prev_all[[t, j]] = hp;
            let dh = dh_out[[t, j]] + dh_next[j];
            let (r, z, n, hn) = (
                cache.r[[t, j]],
                cache.z[[t, j]],
                cache.n[[t, j]],
                cache.hn[[t, j]],
            );
            let dn = dh * (1.0 - z);
            let dz = dh * (hp - n);
            dh_prev[j] = dh * z;
            let dan = dn * (1.0 - n * n);
            let dr = dan * hn;
            let dar = dr * r * (1.0 - r);
            let daz = dz * z * (1.0 - z);
            dxi[[t, j]] = dar;
            dxi[[t, hid + j]] = daz;
            dxi[[t, 2 * hid + j]] = dan;
            dhh[j] = dar;
            dhh[hid + j] = daz;
            dhh[2 * hid + j] = dan * r;
        }
        for (k, d) in dh_prev.iter_mut().enumerate() {
            let row = wh.row(k);
            let row = row.as_slice().expect("contiguous weights");
            *d += row.iter().zip(&dhh).map(|(w, g)| w * g).sum::<f64>();
        }
        dhh_all
            .row_mut(t)
            .as_slice_mut()
            .expect("contiguous")
            .copy_from_slice(&dhh);
        dh_next = dh_prev;
    }
    GruGrads {
        dx: dxi.dot(&wi.t()),
        dwi: x.t().dot(&dxi),
        dbi: dxi.sum_axis(Axis(0)).insert_axis(Axis(0)),
        dwh: h_prev_all.t().dot(&dhh_all),
        dbh: dhh_all.sum_axis(Axis(0)).insert_axis(Axis(0)),
    }
}

/// Splits a `T x 2h` gradient into forward and backward halves.
pub(crate) fn split_halves(g: &Array2<f64>, hid: usize) -> (ArrayView2<'_, f64>, ArrayView2<'_, f64>) {
    (g.slice(s![.., ..hid]), g.slice(s![.., hid..]))
}
