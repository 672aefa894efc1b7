//! Library outputs against the loop oracles in `common`.

mod common;

use common::{dft_bin, exactness};
use invsep::signal::{stft, Waveform, FRAME_LEN, HOP};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn modules_match_loop_oracles() {
    for seed in [11, 12, 13] {
        let r = exactness(seed, 300);
        assert!(r.oracle_err < 1e-10, "{r:?}");
        assert_eq!(r.top2_mismatch, 0, "{r:?}");
        assert_eq!(r.pit_asymmetric, 0, "{r:?}");
        assert!(r.joint_rows < 1e-6 && r.weight_total < 1e-6, "{r:?}");
        assert!(r.attention_rows < 1e-12, "{r:?}");
    }
}

#[test]
fn stft_matches_direct_dft() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let n = FRAME_LEN + 3 * HOP + 17;
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
    let spec = stft(&Waveform::new(x.clone()).unwrap()).unwrap();
    let window: Vec<f64> = (0..FRAME_LEN)
        .map(|i| (std::f64::consts::PI * (i as f64 + 0.5) / FRAME_LEN as f64).sin())
        .collect();
    // the last frame runs past the end and is zero padded
    for frame in [0usize, 2, spec.frames() - 1] {
        let seg: Vec<f64> = (0..FRAME_LEN).map(|i| x.get(frame * HOP + i).copied().unwrap_or(0.0)).collect();
        for k in [0usize, 1, 37, 128, 256] {
            let (re, im) = dft_bin(&seg, &window, k);
            let got = spec.bins[[frame, k]];
            assert!((got.re - re).abs() < 1e-9 && (got.im - im).abs() < 1e-9, "frame {frame} bin {k}");
        }
    }
}

#[test]
fn si_sdr_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..50 {
        let n = rng.random_range(10..200);
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let e: Vec<f64> = r.iter().map(|v| 0.7 * v + rng.random_range(-0.3..0.3)).collect();
        let want = common::si_sdr(&e, &r);
        let got = invsep::metrics::si_sdr(&Waveform::new(e).unwrap(), &Waveform::new(r).unwrap()).unwrap();
        assert!((got - want).abs() < 1e-9);
    }
}
