use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};

fn spec() -> WavSpec {
    WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    }
}

/// Reads a 16-bit PCM mono 16 kHz file.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let reader = WavReader::open(path)?;
    let s = reader.spec();
    if s != spec() {
        return Err(Error::InvalidArgument(format!(
            "{}: expected 16-bit PCM mono {} Hz, got {} ch / {} Hz / {} bit {:?}",
            path.display(),
            SAMPLE_RATE,
            s.channels,
            s.sample_rate,
            s.bits_per_sample,
            s.sample_format
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|r| r.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Waveform::new(samples)
}

/// Writes 16-bit PCM mono 16 kHz; samples outside `[-1, 1]` are clipped.
pub fn write_wav(path: &Path, w: &Waveform) -> Result<()> {
    let mut writer = WavWriter::create(path, spec())?;
    for &s in w.samples() {
        writer.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16)?;
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.wav");
        let x: Vec<f64> = (0..1000).map(|n| (n as f64 * 0.01).sin() * 0.8).collect();
        write_wav(&p, &Waveform::new(x.clone()).unwrap()).unwrap();
        let y = read_wav(&p).unwrap();
        assert_eq!(y.len(), x.len());
        for (a, b) in x.iter().zip(y.samples()) {
            assert!((a - b).abs() < 1.0 / 16384.0);
        }
    }
}
