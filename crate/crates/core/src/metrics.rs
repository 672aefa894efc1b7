//! Separation and selection quality measures.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Waveform;

/// Bound applied to every reported dB value.
pub const DB_CAP: f64 = 60.0;

fn to_db(num: f64, den: f64) -> f64 {
    if den <= 0.0 {
        return DB_CAP;
    }
    if num <= 0.0 {
        return -DB_CAP;
    }
    (10.0 * (num / den).log10()).clamp(-DB_CAP, DB_CAP)
}

fn trimmed<'a>(est: &'a Waveform, reference: &'a Waveform) -> Result<(&'a [f64], &'a [f64])> {
    let n = est.len().min(reference.len());
    let r = &reference.samples()[..n];
    if r.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidArgument("reference has zero energy".into()));
    }
    Ok((&est.samples()[..n], r))
}

/// `10 log10(|ref|^2 / |est - ref|^2)` over the common prefix.
pub fn sdr(est: &Waveform, reference: &Waveform) -> Result<f64> {
    let (e, r) = trimmed(est, reference)?;
    let num: f64 = r.iter().map(|v| v * v).sum();
    let den: f64 = e.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(to_db(num, den))
}

/// Scale-invariant SDR: the estimate is projected onto the reference first.
pub fn si_sdr(est: &Waveform, reference: &Waveform) -> Result<f64> {
    let (e, r) = trimmed(est, reference)?;
    let rr: f64 = r.iter().map(|v| v * v).sum();
    let alpha = e.iter().zip(r).map(|(a, b)| a * b).sum::<f64>() / rr;
    let target: f64 = alpha * alpha * rr;
    let noise: f64 = e
        .iter()
        .zip(r)
        .map(|(a, b)| {
            let d = a - alpha * b;
            d * d
        })
        .sum();
    Ok(to_db(target, noise))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Permutation {
    Identity,
    Swapped,
}

impl Permutation {
    pub fn as_str(self) -> &'static str {
        match self {
            Permutation::Identity => "identity",
            Permutation::Swapped => "swapped",
        }
    }

    /// Index of the estimate assigned to reference `k`.
    pub fn estimate_for(self, k: usize) -> usize {
        match self {
            Permutation::Identity => k,
            Permutation::Swapped => 1 - k,
        }
    }
}

/// Scores of one two-source sample under its best assignment, indexed by
/// reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdrReport {
    pub sample_id: u64,
    pub sdr_db: [f64; 2],
    pub si_sdr_db: [f64; 2],
    pub permutation: Permutation,
}

impl SdrReport {
    pub fn mean_sdr(&self) -> f64 {
        0.5 * (self.sdr_db[0] + self.sdr_db[1])
    }

    pub fn mean_si_sdr(&self) -> f64 {
        0.5 * (self.si_sdr_db[0] + self.si_sdr_db[1])
    }
}

/// Scores both assignments and keeps the one with the higher mean SI-SDR;
/// ties keep the identity.
pub fn permute_score(
    sample_id: u64,
    estimates: [&Waveform; 2],
    references: [&Waveform; 2],
) -> Result<SdrReport> {
    let mut best: Option<SdrReport> = None;
    for perm in [Permutation::Identity, Permutation::Swapped] {
        let mut sdrs = [0.0; 2];
        let mut sis = [0.0; 2];
        for k in 0..2 {
            let e = estimates[perm.estimate_for(k)];
            sdrs[k] = sdr(e, references[k])?;
            sis[k] = si_sdr(e, references[k])?;
        }
        let report = SdrReport {
            sample_id,
            sdr_db: sdrs,
            si_sdr_db: sis,
            permutation: perm,
        };
        if best
            .as_ref()
            .is_none_or(|b| report.mean_si_sdr() > b.mean_si_sdr())
        {
            best = Some(report);
        }
    }
    Ok(best.expect("two candidates"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionRates {
    pub at_least_one: f64,
    pub both: f64,
    pub n_samples: usize,
}

pub fn selection_rates(flags: &[(bool, bool)]) -> Result<SelectionRates> {
    if flags.is_empty() {
        return Err(Error::InvalidArgument("no selection flags to aggregate".into()));
    }
    let n = flags.len() as f64;
    Ok(SelectionRates {
        at_least_one: flags.iter().filter(|f| f.0).count() as f64 / n,
        both: flags.iter().filter(|f| f.1).count() as f64 / n,
        n_samples: flags.len(),
    })
}

/// Evaluation condition; also the CSV row key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConditionKey {
    pub regime: String,
    pub n_irrelevant: usize,
    pub missing_mode: String,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub key: ConditionKey,
    pub mean_sdr_db: f64,
    pub mean_si_sdr_db: f64,
    pub count: usize,
    pub selection: Option<SelectionRates>,
}

/// Means over samples; rates are attached when flags are given.
pub fn aggregate(
    key: ConditionKey,
    reports: &[SdrReport],
    flags: Option<&[(bool, bool)]>,
) -> Result<ConditionSummary> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument(format!("no samples for {key:?}")));
    }
    let n = reports.len() as f64;
    Ok(ConditionSummary {
        mean_sdr_db: reports.iter().map(SdrReport::mean_sdr).sum::<f64>() / n,
        mean_si_sdr_db: reports.iter().map(SdrReport::mean_si_sdr).sum::<f64>() / n,
        count: reports.len(),
        selection: flags.map(selection_rates).transpose()?,
        key,
    })
}

/// Column order of the summary CSV.
pub const SUMMARY_COLUMNS: [&str; 10] = [
    "regime",
    "n_irrelevant",
    "missing_mode",
    "iteration",
    "mean_sdr_db",
    "mean_si_sdr_db",
    "count",
    "sel_at_least_one",
    "sel_both",
    "sel_count",
];

/// Rows sorted by key; selection columns are empty when not applicable.
pub fn summary_csv(rows: &[ConditionSummary]) -> String {
    let mut sorted: BTreeMap<&ConditionKey, &ConditionSummary> = BTreeMap::new();
    for r in rows {
        sorted.insert(&r.key, r);
    }
    let mut s = SUMMARY_COLUMNS.join(",");
    s.push('\n');
    for (k, r) in sorted {
        let _ = write!(
            s,
            "{},{},{},{},{:.6},{:.6},{}",
            k.regime,
            k.n_irrelevant,
            k.missing_mode,
            k.iteration,
            r.mean_sdr_db,
            r.mean_si_sdr_db,
            r.count
        );
        match r.selection {
            Some(sel) => {
                let _ = writeln!(s, ",{:.6},{:.6},{}", sel.at_least_one, sel.both, sel.n_samples);
            }
            None => s.push_str(",,,\n"),
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave(v: Vec<f64>) -> Waveform {
        Waveform::new(v).unwrap()
    }

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                (s % 20001) as f64 / 10000.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn exact_match_hits_cap() {
        let r = wave(noise(1, 100));
        assert_eq!(sdr(&r, &r).unwrap(), DB_CAP);
        assert_eq!(si_sdr(&r, &r).unwrap(), DB_CAP);
        assert_eq!(si_sdr(&r.scaled(-3.0), &r).unwrap(), DB_CAP);
    }

    #[test]
    fn half_scale_is_six_db() {
        let r = wave(noise(2, 100));
        let v = sdr(&r.scaled(0.5), &r).unwrap();
        assert!((v - 10.0 * 4.0f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_estimate_is_very_negative() {
        let r = wave(vec![1.0, 0.0]);
        let e = wave(vec![0.0, 1.0]);
        assert!(si_sdr(&e, &r).unwrap() <= -30.0);
    }

    #[test]
    fn zero_reference_is_rejected() {
        let z = wave(vec![0.0; 4]);
        assert!(sdr(&z, &z).is_err());
        assert!(si_sdr(&z, &z).is_err());
    }

    #[test]
    fn lengths_are_trimmed() {
        let r = wave(noise(3, 50));
        let mut longer = r.samples().to_vec();
        longer.extend([5.0; 10]);
        assert_eq!(sdr(&wave(longer), &r).unwrap(), DB_CAP);
    }

    #[test]
    fn permute_score_is_order_invariant() {
        let r1 = wave(noise(4, 200));
        let r2 = wave(noise(5, 200));
        let e1: Vec<f64> = r2.samples().iter().zip(noise(6, 200)).map(|(a, b)| a + 0.1 * b).collect();
        let e2: Vec<f64> = r1.samples().iter().zip(noise(7, 200)).map(|(a, b)| a + 0.2 * b).collect();
        let (e1, e2) = (wave(e1), wave(e2));
        let a = permute_score(0, [&e1, &e2], [&r1, &r2]).unwrap();
        assert_eq!(a.permutation, Permutation::Swapped);
        let b = permute_score(0, [&e1, &e2], [&r2, &r1]).unwrap();
        assert_eq!(b.permutation, Permutation::Identity);
        assert_eq!(a.si_sdr_db, [b.si_sdr_db[1], b.si_sdr_db[0]]);
        let c = permute_score(0, [&e2, &e1], [&r1, &r2]).unwrap();
        assert_eq!(a.mean_si_sdr(), c.mean_si_sdr());
        let perfect = permute_score(0, [&r1, &r2], [&r1, &r2]).unwrap();
        assert_eq!(perfect.permutation, Permutation::Identity);
        assert_eq!(perfect.si_sdr_db, [DB_CAP, DB_CAP]);
    }

    #[test]
    fn rates_from_flags() {
        let r = selection_rates(&[(true, true), (true, false)]).unwrap();
        assert_eq!((r.at_least_one, r.both, r.n_samples), (1.0, 0.5, 2));
        assert!(selection_rates(&[]).is_err());
    }

    #[test]
    fn aggregate_single_sample() {
        let key = ConditionKey {
            regime: "pit".into(),
            n_irrelevant: 0,
            missing_mode: "standard".into(),
            iteration: 0,
        };
        let rep = SdrReport {
            sample_id: 1,
            sdr_db: [3.0, 5.0],
            si_sdr_db: [2.0, 4.0],
            permutation: Permutation::Identity,
        };
        let s = aggregate(key.clone(), std::slice::from_ref(&rep), None).unwrap();
        assert_eq!((s.mean_sdr_db, s.mean_si_sdr_db, s.count), (4.0, 3.0, 1));
        assert!(aggregate(key, &[], None).is_err());
        let csv = summary_csv(&[s]);
        assert_eq!(csv.lines().next().unwrap(), SUMMARY_COLUMNS.join(","));
        assert_eq!(csv.lines().nth(1).unwrap(), "pit,0,standard,0,4.000000,3.000000,1,,,");
    }
}
