use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{Waveform, FRAME_LEN, HOP};
use crate::error::{Error, Result};

/// Minimum window-square sum accepted by the inverse transform.
const MIN_WINDOW_SUM: f64 = 1e-12;

/// Analysis/synthesis window pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub analysis: Vec<f64>,
    pub synthesis: Vec<f64>,
}

impl Window {
    /// Square-root Hann sampled at half-integer points,
    /// `w[n] = sin(pi * (n + 0.5) / len)`.
    ///
    /// `w[n]^2 + w[n + len/2]^2 = 1`, so at 50% overlap the squared window
    /// sums to one, and no sample (including the first hop) sees a zero sum.
    pub fn sqrt_hann(len: usize) -> Self {
        let w: Vec<f64> = (0..len)
            .map(|n| (PI * (n as f64 + 0.5) / len as f64).sin())
            .collect();
        Self {
            analysis: w.clone(),
            synthesis: w,
        }
    }

    pub fn len(&self) -> usize {
        self.analysis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.analysis.is_empty()
    }
}

/// Complex half spectrum, `frames x (frame_len / 2 + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub bins: Array2<Complex64>,
    pub frame_len: usize,
    pub hop: usize,
    /// Length of the waveform the frames were taken from.
    pub num_samples: usize,
}

impl Spectrogram {
    pub fn frames(&self) -> usize {
        self.bins.nrows()
    }

    pub fn num_bins(&self) -> usize {
        self.bins.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.bins.dim()
    }

    /// Elementwise scale by a real matrix of the same shape.
    pub fn scaled_by(&self, gains: &Array2<f64>) -> Result<Self> {
        if gains.dim() != self.bins.dim() {
            return Err(Error::shape("spectrogram gain", self.bins.dim(), gains.dim()));
        }
        let mut out = self.clone();
        out.bins.zip_mut_with(gains, |b, g| *b *= *g);
        Ok(out)
    }
}

/// Planned transform pair for one frame length / hop / window.
pub struct Stft {
    frame_len: usize,
    hop: usize,
    window: Window,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft")
            .field("frame_len", &self.frame_len)
            .field("hop", &self.hop)
            .finish()
    }
}

impl Stft {
    pub fn new(frame_len: usize, hop: usize, window: Window) -> Result<Self> {
        if frame_len == 0 || hop == 0 || hop > frame_len || frame_len % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "frame_len {frame_len} / hop {hop}"
            )));
        }
        if window.analysis.len() != frame_len || window.synthesis.len() != frame_len {
            return Err(Error::InvalidArgument(format!(
                "window length {} != frame length {frame_len}",
                window.len()
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            frame_len,
            hop,
            forward: planner.plan_fft_forward(frame_len),
            inverse: planner.plan_fft_inverse(frame_len),
            window,
        })
    }

    /// The 512/256 square-root Hann configuration used everywhere in the crate.
    pub fn standard() -> &'static Stft {
        static STANDARD: OnceLock<Stft> = OnceLock::new();
        STANDARD.get_or_init(|| {
            Stft::new(FRAME_LEN, HOP, Window::sqrt_hann(FRAME_LEN)).expect("standard framing")
        })
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn num_bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    /// Number of frames for a signal of `len` samples: `ceil(len / hop)`.
    /// The tail is zero-padded so the last frame is complete.
    pub fn num_frames(&self, len: usize) -> usize {
        len.div_ceil(self.hop).max(1)
    }

    pub fn forward(&self, w: &Waveform) -> Result<Spectrogram> {
        if w.is_empty() {
            return Err(Error::EmptyInput);
        }
        let x = w.samples();
        let frames = self.num_frames(x.len());
        let bins = self.num_bins();
        let mut out = Array2::<Complex64>::zeros((frames, bins));
        let mut buf = vec![Complex64::new(0.0, 0.0); self.frame_len];
        let mut scratch =
            vec![Complex64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        for t in 0..frames {
            let start = t * self.hop;
            for (n, b) in buf.iter_mut().enumerate() {
                let s = x.get(start + n).copied().unwrap_or(0.0);
                *b = Complex64::new(s * self.window.analysis[n], 0.0);
            }
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            for (k, v) in out.row_mut(t).iter_mut().enumerate() {
                *v = buf[k];
            }
        }
        Ok(Spectrogram {
            bins: out,
            frame_len: self.frame_len,
            hop: self.hop,
            num_samples: x.len(),
        })
    }

    pub fn inverse(&self, s: &Spectrogram) -> Result<Waveform> {
        if s.frame_len != self.frame_len || s.hop != self.hop {
            return Err(Error::InvalidArgument(format!(
                "spectrogram framing {}/{} does not match transform {}/{}",
                s.frame_len, s.hop, self.frame_len, self.hop
            )));
        }
        let half = self.num_bins();
        if s.num_bins() != half {
            return Err(Error::shape(
                "istft",
                (s.frames(), half),
                (s.frames(), s.num_bins()),
            ));
        }
        let frames = s.frames();
        let len = s.num_samples;
        let total = (frames - 1) * self.hop + self.frame_len;
        let mut acc = vec![0.0; total.max(len)];
        let mut wsum = vec![0.0; total.max(len)];
        let n = self.frame_len;
        let scale = 1.0 / n as f64;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch =
            vec![Complex64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        for t in 0..frames {
            let row = s.bins.row(t);
            buf[0] = Complex64::new(row[0].re, 0.0);
            for k in 1..half - 1 {
                buf[k] = row[k];
                buf[n - k] = row[k].conj();
            }
            buf[half - 1] = Complex64::new(row[half - 1].re, 0.0);
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let start = t * self.hop;
            for i in 0..n {
                let ws = self.window.synthesis[i];
                acc[start + i] += buf[i].re * scale * ws;
                wsum[start + i] += self.window.analysis[i] * ws;
            }
        }
        let mut out = Vec::with_capacity(len);
        for i in 0..len {
            if wsum[i] < MIN_WINDOW_SUM {
                return Err(Error::NonColaWindow {
                    sample: i,
                    sum: wsum[i],
                });
            }
            out.push(acc[i] / wsum[i]);
        }
        Waveform::new(out)
    }
}

/// Forward transform with the standard framing.
pub fn stft(w: &Waveform) -> Result<Spectrogram> {
    Stft::standard().forward(w)
}

/// Overlap-add inverse with the standard framing, normalized by the
/// window-square sum.
pub fn istft(s: &Spectrogram) -> Result<Waveform> {
    Stft::standard().inverse(s)
}
