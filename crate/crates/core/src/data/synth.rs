//! Synthetic ECG identities: five Gaussian bumps per beat (P, Q, R, S, T),
//! per-beat period jitter and sinusoidal baseline wander.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::signal::EcgRecord;

/// One Gaussian wave component. `center` is a fraction of the beat period.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wave {
    pub amplitude: f64,
    pub width_s: f64,
    pub center: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticIdentitySpec {
    pub heart_rate_bpm: f64,
    /// P, Q, R, S, T in that order.
    pub waves: [Wave; 5],
    /// Standard deviation of the beat period, in seconds.
    pub hr_variability: f64,
    pub baseline_wander_amp: f64,
    pub wander_hz: f64,
    pub seed: u64,
}

const R: usize = 2;

impl SyntheticIdentitySpec {
    pub fn period_s(&self) -> f64 {
        60.0 / self.heart_rate_bpm
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.heart_rate_bpm > 0.0 && self.heart_rate_bpm.is_finite()) {
            return Err(Error::Parameter("heart rate must be positive".into()));
        }
        if !(self.hr_variability >= 0.0 && self.baseline_wander_amp >= 0.0 && self.wander_hz >= 0.0) {
            return Err(Error::Parameter("variability, wander amplitude and frequency must be >= 0".into()));
        }
        if self.waves.iter().any(|w| !(w.width_s > 0.0) || !w.amplitude.is_finite()) {
            return Err(Error::Parameter("wave widths must be positive and amplitudes finite".into()));
        }
        if self.waves.windows(2).any(|p| !(p[0].center < p[1].center))
            || !(self.waves[0].center >= 0.0 && self.waves[4].center < 1.0)
        {
            return Err(Error::Parameter("wave centers must be strictly increasing inside [0, 1)".into()));
        }
        let r = self.waves[R].amplitude.abs();
        if self.waves.iter().enumerate().any(|(i, w)| i != R && w.amplitude.abs() >= r) {
            return Err(Error::Parameter("R wave amplitude must dominate".into()));
        }
        Ok(())
    }

    /// A random but plausible identity.
    pub fn random(seed: u64) -> Self {
        let mut rng = seed::rng(seed::derive(seed, "identity"));
        Self::from_unit(|_| rng.random::<f64>(), seed)
    }

    /// `n` identities drawn by Latin hypercube sampling, so that even a
    /// small cohort spreads over every parameter range instead of leaving
    /// near-duplicates to chance.
    pub fn cohort(n: usize, seed: u64) -> Vec<Self> {
        let mut rng = seed::rng(seed::derive(seed, "cohort"));
        let strata: Vec<Vec<usize>> = (0..PARAMS)
            .map(|_| {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        (0..n)
            .map(|i| {
                let jitter: Vec<f64> = (0..PARAMS).map(|_| rng.random::<f64>()).collect();
                let id_seed = seed::derive_indexed(seed, "cohort-identity", &[i as u64]);
                Self::from_unit(|k| (strata[k][i] as f64 + jitter[k]) / n as f64, id_seed)
            })
            .collect()
    }

    /// Maps unit-interval draws (indexed by parameter) onto the plausible
    /// ranges.
    fn from_unit(mut unit: impl FnMut(usize) -> f64, seed: u64) -> Self {
        let mut k = 0;
        let mut u = |lo: f64, hi: f64| {
            let v = lo + (hi - lo) * unit(k);
            k += 1;
            v
        };
        let r_center = 0.4;
        let waves = [
            Wave { amplitude: u(0.05, 0.3), width_s: u(0.015, 0.04), center: u(0.12, 0.28) },
            Wave { amplitude: -u(0.02, 0.25), width_s: u(0.006, 0.016), center: r_center - u(0.02, 0.05) },
            Wave { amplitude: u(0.7, 1.6), width_s: u(0.006, 0.018), center: r_center },
            Wave { amplitude: -u(0.05, 0.45), width_s: u(0.006, 0.016), center: r_center + u(0.02, 0.05) },
            Wave { amplitude: u(0.1, 0.6), width_s: u(0.03, 0.09), center: u(0.58, 0.8) },
        ];
        Self {
            heart_rate_bpm: u(50.0, 100.0),
            waves,
            hr_variability: u(0.005, 0.02),
            baseline_wander_amp: u(0.02, 0.08),
            wander_hz: u(0.1, 0.35),
            seed,
        }
    }
}

/// Number of unit draws consumed by `from_unit`.
const PARAMS: usize = 18;

/// Renders `duration_s` seconds at `rate_hz`. Pure in its inputs.
pub fn synthesize(
    spec: &SyntheticIdentitySpec,
    subject_id: &str,
    dataset_id: &str,
    duration_s: f64,
    rate_hz: f64,
) -> Result<EcgRecord> {
    spec.validate()?;
    if !(rate_hz > 0.0) {
        return Err(Error::Parameter(format!("sampling rate must be positive, got {rate_hz}")));
    }
    if !(duration_s >= 2.0 * spec.period_s()) {
        return Err(Error::Parameter(format!(
            "duration {duration_s} s is shorter than two beats ({} s)",
            2.0 * spec.period_s()
        )));
    }
    let n = (duration_s * rate_hz).round() as usize;
    let mut out = vec![0.0; n];
    let mut rng = seed::rng(seed::derive(spec.seed, "beats"));
    let jitter = Normal::new(0.0, spec.hr_variability).map_err(|e| Error::Parameter(e.to_string()))?;
    let base = spec.period_s();
    let phase = rng.random_range(0.0..std::f64::consts::TAU);

    // Start one beat early so the first samples see a full waveform.
    let mut onset = -base;
    while onset < duration_s {
        let period = if spec.hr_variability > 0.0 {
            (base + jitter.sample(&mut rng)).max(0.5 * base)
        } else {
            base
        };
        for w in &spec.waves {
            let c = onset + w.center * period;
            let reach = 6.0 * w.width_s;
            let lo = ((c - reach) * rate_hz).ceil().max(0.0) as usize;
            let hi = (((c + reach) * rate_hz).floor().max(-1.0) + 1.0).min(n as f64) as usize;
            let inv = 1.0 / (2.0 * w.width_s * w.width_s);
            for (i, v) in out.iter_mut().enumerate().take(hi).skip(lo) {
                let d = i as f64 / rate_hz - c;
                *v += w.amplitude * (-d * d * inv).exp();
            }
        }
        onset += period;
    }
    if spec.baseline_wander_amp > 0.0 {
        let k = std::f64::consts::TAU * spec.wander_hz / rate_hz;
        for (i, v) in out.iter_mut().enumerate() {
            *v += spec.baseline_wander_amp * (k * i as f64 + phase).sin();
        }
    }
    EcgRecord::new(subject_id, dataset_id, rate_hz, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clean(hr: f64) -> SyntheticIdentitySpec {
        SyntheticIdentitySpec {
            heart_rate_bpm: hr,
            hr_variability: 0.0,
            baseline_wander_amp: 0.0,
            ..SyntheticIdentitySpec::random(3)
        }
    }

    #[test]
    fn random_specs_validate() {
        for s in 0..50 {
            SyntheticIdentitySpec::random(s).validate().unwrap();
        }
    }

    #[test]
    fn cohort_covers_ranges() {
        let c = SyntheticIdentitySpec::cohort(10, 4);
        assert_eq!(c.len(), 10);
        let mut hr: Vec<f64> = c.iter().map(|s| s.heart_rate_bpm).collect();
        hr.sort_by(f64::total_cmp);
        // one heart rate per 5-bpm stratum
        for (i, h) in hr.iter().enumerate() {
            assert!(*h >= 50.0 + 5.0 * i as f64 && *h < 55.0 + 5.0 * i as f64, "{hr:?}");
        }
        c.iter().for_each(|s| s.validate().unwrap());
        assert_eq!(c, SyntheticIdentitySpec::cohort(10, 4));
    }

    #[test]
    fn clean_signal_is_periodic() {
        // 60 bpm at 250 Hz: one beat is exactly 250 samples.
        let r = synthesize(&clean(60.0), "a", "d", 10.0, 250.0).unwrap();
        for i in 0..r.samples.len() - 250 {
            assert!((r.samples[i] - r.samples[i + 250]).abs() < 1e-12, "sample {i}");
        }
    }

    #[test]
    fn deterministic() {
        let s = SyntheticIdentitySpec::random(9);
        let a = synthesize(&s, "a", "d", 8.0, 250.0).unwrap();
        let b = synthesize(&s, "a", "d", 8.0, 250.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_short_and_unordered() {
        assert!(synthesize(&clean(60.0), "a", "d", 1.5, 250.0).is_err());
        let mut s = clean(60.0);
        s.waves.swap(0, 4);
        assert!(s.validate().is_err());
        let mut s = clean(60.0);
        s.waves[4].amplitude = 5.0;
        assert!(s.validate().is_err());
    }
}
