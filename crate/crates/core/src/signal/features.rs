use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, Axis, Zip};

use super::{istft, Spectrogram, Waveform, DIV_FLOOR, LOG_FLOOR, STD_FLOOR};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    LinearMagnitude,
    LogMagnitude,
    NormalizedLogMagnitude,
}

/// Real `frames x bins` feature matrix tagged with its domain.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Array2<f64>,
    pub kind: FeatureKind,
}

impl FeatureMatrix {
    pub fn new(values: Array2<f64>, kind: FeatureKind) -> Self {
        Self { values, kind }
    }

    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_bins(&self) -> usize {
        self.values.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    fn expect_kind(&self, kind: FeatureKind, context: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::InvalidArgument(format!(
                "{context}: expected {kind:?} features, got {:?}",
                self.kind
            )));
        }
        Ok(())
    }
}

/// Time-frequency mask with entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    values: Array2<f64>,
}

impl Mask {
    /// Clamps into `[0, 1]`; entries already in range are untouched.
    pub fn new(mut values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mask".into()));
        }
        values.mapv_inplace(|v| v.clamp(0.0, 1.0));
        Ok(Self { values })
    }

    pub fn ones(shape: (usize, usize)) -> Self {
        Self {
            values: Array2::ones(shape),
        }
    }

    pub fn zeros(shape: (usize, usize)) -> Self {
        Self {
            values: Array2::zeros(shape),
        }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }
}

/// Per-bin mean and standard deviation pooled over a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl NormalizationStats {
    pub fn identity(bins: usize) -> Self {
        Self {
            mean: Array1::zeros(bins),
            std: Array1::ones(bins),
        }
    }

    pub fn num_bins(&self) -> usize {
        self.mean.len()
    }

    /// Text form:
    ///
    /// ```text
    /// # invsep normalization stats v1
    /// bins <F>
    /// mean <F decimal values>
    /// std <F decimal values>
    /// ```
    ///
    /// Values are written in shortest round-trip decimal form.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# invsep normalization stats v1\n");
        let _ = writeln!(s, "bins {}", self.num_bins());
        for (name, v) in [("mean", &self.mean), ("std", &self.std)] {
            s.push_str(name);
            for x in v.iter() {
                let _ = write!(s, " {x:?}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::InvalidArgument(format!("normalization stats: {m}"));
        let mut bins = None;
        let mut mean = None;
        let mut std = None;
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or_default();
            let rest: Vec<&str> = parts.collect();
            let parse_vec = |rest: &[&str]| -> Result<Array1<f64>> {
                rest.iter()
                    .map(|t| t.parse::<f64>().map_err(|e| bad(&e.to_string())))
                    .collect::<Result<Vec<_>>>()
                    .map(Array1::from)
            };
            match key {
                "bins" => {
                    bins = Some(
                        rest.first()
                            .ok_or_else(|| bad("missing bin count"))?
                            .parse::<usize>()
                            .map_err(|e| bad(&e.to_string()))?,
                    )
                }
                "mean" => mean = Some(parse_vec(&rest)?),
                "std" => std = Some(parse_vec(&rest)?),
                other => return Err(bad(&format!("unknown field {other:?}"))),
            }
        }
        let bins = bins.ok_or_else(|| bad("missing bins"))?;
        let mean = mean.ok_or_else(|| bad("missing mean"))?;
        let std = std.ok_or_else(|| bad("missing std"))?;
        if mean.len() != bins || std.len() != bins {
            return Err(bad("vector length does not match bins"));
        }
        if std.iter().any(|&s| !(s > 0.0)) {
            return Err(bad("std must be positive"));
        }
        Ok(Self { mean, std })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

pub fn linear_magnitude(s: &Spectrogram) -> FeatureMatrix {
    FeatureMatrix::new(s.bins.mapv(|b| b.norm()), FeatureKind::LinearMagnitude)
}

/// `ln(|bin| + 1e-7)`.
pub fn log_magnitude(s: &Spectrogram) -> FeatureMatrix {
    FeatureMatrix::new(
        s.bins.mapv(|b| (b.norm() + LOG_FLOOR).ln()),
        FeatureKind::LogMagnitude,
    )
}

/// Log features of an existing linear magnitude, with the same floor as
/// [`log_magnitude`].
pub fn log_of_magnitude(mag: &FeatureMatrix) -> Result<FeatureMatrix> {
    mag.expect_kind(FeatureKind::LinearMagnitude, "log_of_magnitude")?;
    Ok(FeatureMatrix::new(
        mag.values.mapv(|v| (v + LOG_FLOOR).ln()),
        FeatureKind::LogMagnitude,
    ))
}

/// Pooled per-bin statistics over every frame of every matrix.
pub fn fit_normalization<'a, I>(corpus: I) -> Result<NormalizationStats>
where
    I: IntoIterator<Item = &'a FeatureMatrix>,
{
    let mut bins = None;
    let mut count = 0usize;
    let mut sum: Option<Array1<f64>> = None;
    let mut sq: Option<Array1<f64>> = None;
    let mut mats = Vec::new();
    for f in corpus {
        f.expect_kind(FeatureKind::LogMagnitude, "fit_normalization")?;
        let b = *bins.get_or_insert(f.num_bins());
        if f.num_bins() != b {
            return Err(Error::shape("fit_normalization", (f.frames(), b), f.shape()));
        }
        count += f.frames();
        let s = f.values.sum_axis(Axis(0));
        match &mut sum {
            Some(acc) => *acc += &s,
            None => sum = Some(s),
        }
        mats.push(f);
    }
    if count < 2 {
        return Err(Error::InsufficientFrames(count));
    }
    let mean = sum.expect("non-empty") / count as f64;
    // second pass for the centered sum of squares
    for f in mats {
        let centered = &f.values - &mean;
        let s = centered.mapv(|v| v * v).sum_axis(Axis(0));
        match &mut sq {
            Some(acc) => *acc += &s,
            None => sq = Some(s),
        }
    }
    let std = sq
        .expect("non-empty")
        .mapv(|v| (v / count as f64).sqrt().max(STD_FLOOR));
    Ok(NormalizationStats { mean, std })
}

pub fn normalize(f: &FeatureMatrix, stats: &NormalizationStats) -> Result<FeatureMatrix> {
    f.expect_kind(FeatureKind::LogMagnitude, "normalize")?;
    check_stats(f, stats)?;
    let mut v = &f.values - &stats.mean;
    v /= &stats.std;
    Ok(FeatureMatrix::new(v, FeatureKind::NormalizedLogMagnitude))
}

pub fn denormalize(f: &FeatureMatrix, stats: &NormalizationStats) -> Result<FeatureMatrix> {
    f.expect_kind(FeatureKind::NormalizedLogMagnitude, "denormalize")?;
    check_stats(f, stats)?;
    let mut v = &f.values * &stats.std;
    v += &stats.mean;
    Ok(FeatureMatrix::new(v, FeatureKind::LogMagnitude))
}

fn check_stats(f: &FeatureMatrix, stats: &NormalizationStats) -> Result<()> {
    if f.num_bins() != stats.num_bins() {
        return Err(Error::shape(
            "normalization stats",
            (f.frames(), stats.num_bins()),
            f.shape(),
        ));
    }
    Ok(())
}

/// `M ⊗ X` on linear magnitudes.
pub fn apply_mask(m: &Mask, x_mag: &FeatureMatrix) -> Result<FeatureMatrix> {
    x_mag.expect_kind(FeatureKind::LinearMagnitude, "apply_mask")?;
    if m.shape() != x_mag.shape() {
        return Err(Error::shape("apply_mask", x_mag.shape(), m.shape()));
    }
    Ok(FeatureMatrix::new(
        m.values() * &x_mag.values,
        FeatureKind::LinearMagnitude,
    ))
}

/// Spectral magnitude mask `min(1, clean / (mix + 1e-8))`.
pub fn smm_target(clean_mag: &FeatureMatrix, mix_mag: &FeatureMatrix) -> Result<Mask> {
    if clean_mag.shape() != mix_mag.shape() {
        return Err(Error::shape("smm_target", mix_mag.shape(), clean_mag.shape()));
    }
    let mut m = Array2::zeros(mix_mag.shape());
    Zip::from(&mut m)
        .and(&clean_mag.values)
        .and(&mix_mag.values)
        .for_each(|m, &c, &x| *m = (c / (x + DIV_FLOOR)).clamp(0.0, 1.0));
    Mask::new(m)
}

/// Inverse transform of `M ⊗ |X|` carrying the mixture phase.
pub fn resynthesize(m: &Mask, mix: &Spectrogram) -> Result<Waveform> {
    istft(&mix.scaled_by(m.values())?)
}
