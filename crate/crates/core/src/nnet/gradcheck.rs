//! Central finite-difference checks.

use super::params::{Gradients, ParamId, ParamStore};
use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Below this magnitude, errors are measured in absolute terms.
pub const DEFAULT_FLOOR: f64 = 1e-6;

pub const MAX_CHECKED_SCALARS: usize = 20_000;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_err: f64,
    /// Location of the worst entry, e.g. `sep.embed.0.fwd.wi[3]`.
    pub worst: String,
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn numeric_gradient<F>(x: &[f64], h: f64, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        probe[k] = x[k] + h;
        let up = f(&probe)?;
        probe[k] = x[k] - h;
        let down = f(&probe)?;
        probe[k] = x[k];
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::NonFinite(format!("loss at coordinate {k}")));
        }
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

/// Compares an analytic gradient of a function of a flat vector with
/// central differences.
pub fn check_vector<F>(x: &[f64], analytic: &[f64], h: f64, floor: f64, f: F) -> Result<GradcheckReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if x.len() != analytic.len() {
        return Err(Error::shape("gradcheck", (x.len(), 1), (analytic.len(), 1)));
    }
    let numeric = numeric_gradient(x, h, f)?;
    let mut report = GradcheckReport {
        max_rel_err: 0.0,
        worst: String::new(),
        checked: x.len(),
    };
    for (k, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
        let e = relative_error(a, n, floor);
        if e > report.max_rel_err || report.worst.is_empty() {
            report.max_rel_err = report.max_rel_err.max(e);
            report.worst = format!("[{k}]");
        }
    }
    Ok(report)
}

/// Checks parameter gradients of `loss` for the listed tensors.
///
/// `loss` returns the scalar value and its analytic gradients for the
/// given store; it is called once per perturbed scalar.
pub fn check_params<F>(
    store: &ParamStore,
    ids: &[ParamId],
    h: f64,
    floor: f64,
    mut loss: F,
) -> Result<GradcheckReport>
where
    F: FnMut(&ParamStore) -> Result<(f64, Gradients)>,
{
    let total: usize = ids.iter().map(|&id| store.get(id).len()).sum();
    if total > MAX_CHECKED_SCALARS {
        return Err(Error::InvalidArgument(format!(
            "gradcheck over {total} scalars exceeds {MAX_CHECKED_SCALARS}"
        )));
    }
    let (value, grads) = loss(store)?;
    if !value.is_finite() {
        return Err(Error::NonFinite("gradcheck loss".into()));
    }
    let mut probe = store.clone();
    let mut report = GradcheckReport {
        max_rel_err: 0.0,
        worst: String::new(),
        checked: 0,
    };
    for &id in ids {
        let n = store.get(id).len();
        for k in 0..n {
            let orig = store.get(id).as_slice().expect("contiguous")[k];
            let mut eval = |v: f64, probe: &mut ParamStore| -> Result<f64> {
                probe.get_mut(id).as_slice_mut().expect("contiguous")[k] = v;
                let (l, _) = loss(probe)?;
                Ok(l)
            };
            let up = eval(orig + h, &mut probe)?;
            let down = eval(orig - h, &mut probe)?;
            probe.get_mut(id).as_slice_mut().expect("contiguous")[k] = orig;
            if !(up.is_finite() && down.is_finite()) {
                return Err(Error::NonFinite(format!("loss near {}[{k}]", store.name(id))));
            }
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads
                .get(id)
                .map_or(0.0, |g| g.as_slice().expect("contiguous")[k]);
            let e = relative_error(analytic, numeric, floor);
            if e > report.max_rel_err || report.worst.is_empty() {
                report.max_rel_err = report.max_rel_err.max(e);
                report.worst = format!("{}[{k}]", store.name(id));
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_matches() {
        let x = [1.0, -2.0, 0.5];
        let f = |v: &[f64]| Ok(v.iter().map(|a| a * a * a).sum::<f64>());
        let analytic: Vec<f64> = x.iter().map(|a| 3.0 * a * a).collect();
        let r = check_vector(&x, &analytic, DEFAULT_STEP, DEFAULT_FLOOR, f).unwrap();
        assert!(r.max_rel_err < 1e-8, "{r:?}");
    }

    #[test]
    fn wrong_gradient_detected() {
        let x = [1.0];
        let r = check_vector(&x, &[1.0], DEFAULT_STEP, DEFAULT_FLOOR, |v| Ok(v[0] * v[0])).unwrap();
        assert!(r.max_rel_err > 0.4);
    }

    #[test]
    fn non_finite_loss_is_error() {
        let r = numeric_gradient(&[0.0], 1e-5, |v| Ok(1.0 / v[0].abs().min(0.0)));
        assert!(r.is_err());
    }
}
