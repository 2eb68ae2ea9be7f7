//! The three block statistics: watermark gain, high-pass variance and Welch
//! band power.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::grid_model::SignalTrace;
use crate::{Error, Result};

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Projection coefficient of `received` onto the template, both centred on
/// the window: `sum (r - r̄)(n - n̄) / sum (n - n̄)^2`.
///
/// Equals 1 in expectation when the received signal carries the template
/// unchanged. Centring makes the statistic blind to the level of the regular
/// signal, which the defender does not try to predict here.
pub fn estimate_watermark_gain(received: &[f64], template: &[f64]) -> Result<f64> {
    if received.len() != template.len() {
        return Err(Error::DimensionMismatch {
            context: "gain window",
            expected: template.len(),
            actual: received.len(),
        });
    }
    let (mr, mn) = (mean(received), mean(template));
    let mut cross = 0.0;
    let mut energy = 0.0;
    for (&r, &n) in received.iter().zip(template) {
        let dn = n - mn;
        cross += (r - mr) * dn;
        energy += dn * dn;
    }
    if !(energy > 0.0) {
        return Err(Error::ZeroTemplate);
    }
    Ok(cross / energy)
}

pub fn estimate_watermark_gain_trace(received: &SignalTrace, template: &SignalTrace) -> Result<f64> {
    estimate_watermark_gain(received.values(), template.values())
}

/// `(x_t - x_{t-1}) / sqrt(2)`: unit power gain on white noise, zero at DC.
pub fn highpass(values: &[f64]) -> Vec<f64> {
    values
        .windows(2)
        .map(|w| (w[1] - w[0]) * std::f64::consts::FRAC_1_SQRT_2)
        .collect()
}

/// Variance of the high-passed window. Slow drift of the regular signal is
/// removed; the watermark band and fast noise remain.
pub fn watermark_band_variance(received: &[f64]) -> f64 {
    let hp = highpass(received);
    if hp.is_empty() {
        return 0.0;
    }
    let m = mean(&hp);
    hp.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / hp.len() as f64
}

/// Normalised frequency band `[low, high]`, cycles per sample.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Band {
    pub low: f64,
    pub high: f64,
}

impl Band {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low > 0.0 && low < high && high <= 0.5) {
            return Err(Error::contract(format!(
                "band [{low}, {high}] must satisfy 0 < low < high <= 0.5"
            )));
        }
        Ok(Self { low, high })
    }

    pub fn full() -> Self {
        Self {
            low: f64::MIN_POSITIVE,
            high: 0.5,
        }
    }
}

/// Power of `values` inside `band`, by Welch's method.
///
/// Segments of `segment_len` samples, 50% overlap, periodic Hann taper, each
/// segment mean removed. The one-sided PSD is integrated over the bins whose
/// centre frequency lies in the band, so a unit sine in the band gives about
/// 0.5 and white noise of variance `s^2` gives `s^2` over the full band.
pub fn spectral_band_power(values: &[f64], band: Band, segment_len: usize) -> Result<f64> {
    if segment_len < 4 {
        return Err(Error::contract("Welch segment must have at least 4 samples"));
    }
    if values.len() < segment_len {
        return Err(Error::contract(format!(
            "window of {} samples shorter than one Welch segment ({segment_len})",
            values.len()
        )));
    }
    let bins: Vec<usize> = (0..=segment_len / 2)
        .filter(|&k| {
            let f = k as f64 / segment_len as f64;
            f >= band.low && f <= band.high
        })
        .collect();
    if bins.is_empty() {
        return Err(Error::contract(format!(
            "band [{}, {}] contains no frequency bin at segment length {segment_len}",
            band.low, band.high
        )));
    }

    let taper: Vec<f64> = (0..segment_len)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / segment_len as f64).cos())
        .collect();
    let taper_energy: f64 = taper.iter().map(|w| w * w).sum();
    let hop = (segment_len / 2).max(1);
    let fft = FftPlanner::new().plan_fft_forward(segment_len);
    let mut buf = vec![Complex::new(0.0, 0.0); segment_len];

    let mut acc = vec![0.0; bins.len()];
    let mut segments = 0usize;
    let mut start = 0;
    while start + segment_len <= values.len() {
        let seg = &values[start..start + segment_len];
        let m = mean(seg);
        for ((b, &x), &w) in buf.iter_mut().zip(seg).zip(&taper) {
            *b = Complex::new((x - m) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, &k) in acc.iter_mut().zip(&bins) {
            *a += buf[k].norm_sqr();
        }
        segments += 1;
        start += hop;
    }

    let nyquist_bin = segment_len % 2 == 0;
    let power = bins
        .iter()
        .zip(&acc)
        .map(|(&k, &p)| {
            let psd = p / (segments as f64 * taper_energy);
            let one_sided = if k == 0 || (nyquist_bin && k == segment_len / 2) {
                psd
            } else {
                2.0 * psd
            };
            one_sided / segment_len as f64
        })
        .sum();
    Ok(power)
}
