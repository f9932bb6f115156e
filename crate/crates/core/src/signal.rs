//! Resampling, min-max normalization, segmentation and training-time
//! augmentation of single-lead ECG.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Label;

pub const TARGET_HZ: f64 = 250.0;
pub const WINDOW_LEN: usize = 2000;

/// One subject's raw signal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcgRecord {
    pub subject_id: String,
    pub dataset_id: String,
    pub sampling_rate_hz: f64,
    pub samples: Vec<f64>,
}

impl EcgRecord {
    pub fn new(
        subject_id: impl Into<String>,
        dataset_id: impl Into<String>,
        sampling_rate_hz: f64,
        samples: Vec<f64>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Input("record has no samples".into()));
        }
        if !(sampling_rate_hz > 0.0 && sampling_rate_hz.is_finite()) {
            return Err(Error::Parameter(format!(
                "sampling rate must be positive, got {sampling_rate_hz}"
            )));
        }
        Ok(Self {
            subject_id: subject_id.into(),
            dataset_id: dataset_id.into(),
            sampling_rate_hz,
            samples,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sampling_rate_hz
    }
}

/// A fixed-length, independently normalized segment: the unit of
/// classification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub id: String,
    pub subject_id: String,
    /// Sample offset of the first value inside the resampled record.
    pub offset: usize,
    pub values: Vec<f64>,
    pub label: Option<Label>,
    /// Set when the source segment had zero range.
    pub flat: bool,
}

impl Window {
    pub fn window_id(subject_id: &str, index: usize) -> String {
        format!("{subject_id}#{index}")
    }
}

/// Parameters of the four training-time augmentations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSpec {
    pub noise_sigma: f64,
    pub scale_range: [f64; 2],
    pub flip_prob: f64,
    pub max_shift: usize,
    /// Mixed into the per-window augmentation seeds.
    pub seed: u64,
}

impl AugmentSpec {
    pub fn identity() -> Self {
        Self {
            noise_sigma: 0.0,
            scale_range: [1.0, 1.0],
            flip_prob: 0.0,
            max_shift: 0,
            seed: 0,
        }
    }

    pub fn validate(&self, window_len: usize) -> Result<()> {
        let [lo, hi] = self.scale_range;
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config("augment noise_sigma must be >= 0".into()));
        }
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::Config(format!(
                "augment scale_range must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
            )));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::Config("augment flip_prob must be in [0, 1]".into()));
        }
        if self.max_shift >= window_len {
            return Err(Error::Config(format!(
                "augment max_shift {} must be below window length {window_len}",
                self.max_shift
            )));
        }
        Ok(())
    }
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            noise_sigma: 0.01,
            scale_range: [0.9, 1.1],
            flip_prob: 0.0,
            max_shift: 100,
            seed: 0,
        }
    }
}

/// Linear-interpolation resampling onto a `target_hz` grid starting at the
/// first sample.
pub fn resample(record: &EcgRecord, target_hz: f64) -> Result<EcgRecord> {
    if !(target_hz > 0.0 && target_hz.is_finite()) {
        return Err(Error::Parameter(format!(
            "target rate must be positive, got {target_hz}"
        )));
    }
    if record.samples.is_empty() {
        return Err(Error::Input("cannot resample an empty record".into()));
    }
    let src = record.sampling_rate_hz;
    let mut out = record.clone();
    out.sampling_rate_hz = target_hz;
    if src == target_hz {
        return Ok(out);
    }
    let x = &record.samples;
    let last = x.len() - 1;
    let n_out = ((last as f64) * target_hz / src + 1e-9).floor() as usize + 1;
    out.samples = (0..n_out)
        .map(|j| {
            let pos = j as f64 * src / target_hz;
            let i = (pos.floor() as usize).min(last);
            if i == last {
                return x[last];
            }
            let frac = pos - i as f64;
            x[i] + frac * (x[i + 1] - x[i])
        })
        .collect();
    Ok(out)
}

/// Affine map onto [0, 1]. Returns `(values, flat)`; a flat input maps to
/// all zeros with `flat = true`.
pub fn minmax_normalize(values: &[f64]) -> Result<(Vec<f64>, bool)> {
    if values.is_empty() {
        return Err(Error::Input("cannot normalize an empty sequence".into()));
    }
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(min.is_finite() && max.is_finite()) {
        return Err(Error::Numerical("non-finite sample in window".into()));
    }
    let range = max - min;
    if range == 0.0 {
        return Ok((vec![0.0; values.len()], true));
    }
    Ok((values.iter().map(|v| (v - min) / range).collect(), false))
}

/// Non-overlapping windows of `window_len` samples, each normalized on its
/// own. The trailing remainder is dropped.
pub fn segment(record: &EcgRecord, window_len: usize) -> Result<Vec<Window>> {
    if window_len < 2 {
        return Err(Error::Parameter(format!(
            "window length must be at least 2, got {window_len}"
        )));
    }
    record
        .samples
        .chunks_exact(window_len)
        .enumerate()
        .map(|(i, chunk)| {
            let (values, flat) = minmax_normalize(chunk)?;
            Ok(Window {
                id: Window::window_id(&record.subject_id, i),
                subject_id: record.subject_id.clone(),
                offset: i * window_len,
                values,
                label: None,
                flat,
            })
        })
        .collect()
}

/// `v -> 1 - v` in normalized space.
pub fn polarity_flip(values: &mut [f64]) {
    values.iter_mut().for_each(|v| *v = 1.0 - *v);
}

/// Circular shift: `out[i] = in[(i - k) mod L]`.
pub fn circular_shift(values: &mut [f64], k: isize) {
    let n = values.len() as isize;
    if n == 0 {
        return;
    }
    let k = k.rem_euclid(n) as usize;
    values.rotate_right(k);
}

/// Applies noise, scaling, polarity flip and circular shift in that order,
/// then clamps to [0, 1].
pub fn augment<R: Rng + ?Sized>(window: &Window, spec: &AugmentSpec, rng: &mut R) -> Window {
    let mut out = window.clone();
    let v = &mut out.values;
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma).expect("sigma validated");
        for x in v.iter_mut() {
            *x += normal.sample(rng);
        }
    }
    let [lo, hi] = spec.scale_range;
    if hi > lo {
        let s = rng.random_range(lo..=hi);
        v.iter_mut().for_each(|x| *x *= s);
    } else if lo != 1.0 {
        v.iter_mut().for_each(|x| *x *= lo);
    }
    if spec.flip_prob > 0.0 && rng.random::<f64>() < spec.flip_prob {
        polarity_flip(v);
    }
    if spec.max_shift > 0 {
        let m = spec.max_shift as i64;
        circular_shift(v, rng.random_range(-m..=m) as isize);
    }
    v.iter_mut().for_each(|x| *x = x.clamp(0.0, 1.0));
    out
}

/// Additive Gaussian noise followed by re-normalization; the noisy-scenario
/// perturbation.
pub fn add_noise_renormalize<R: Rng + ?Sized>(values: &[f64], sigma: f64, rng: &mut R) -> Result<(Vec<f64>, bool)> {
    if sigma == 0.0 {
        return Ok((values.to_vec(), false));
    }
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::Parameter(format!("noise sigma {sigma}: {e}")))?;
    let noisy: Vec<f64> = values.iter().map(|v| v + normal.sample(rng)).collect();
    minmax_normalize(&noisy)
}
