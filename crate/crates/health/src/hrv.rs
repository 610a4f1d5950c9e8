//! PPG peak detection and heart rate variability features.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::HealthError;

/// Shortest recording the pipeline accepts, in seconds.
pub const MIN_DURATION_S: f64 = 10.0;
/// Window of the detrending moving mean, in seconds.
pub const DETREND_WINDOW_S: f64 = 1.0;
/// Window over which the adaptive peak threshold is computed, in seconds.
pub const THRESHOLD_WINDOW_S: f64 = 10.0;
/// Threshold is `mean + THRESHOLD_K * std` of the detrended window.
pub const THRESHOLD_K: f64 = 0.5;
/// Minimum distance between two accepted peaks, in seconds.
pub const MIN_PEAK_GAP_S: f64 = 0.3;
/// Rate of the evenly resampled NN series used for band powers.
pub const RESAMPLE_HZ: f64 = 4.0;
pub const LF_BAND: (f64, f64) = (0.04, 0.15);
pub const HF_BAND: (f64, f64) = (0.15, 0.4);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrvFeatures {
    /// Beats per minute.
    pub mean_hr: f64,
    /// Milliseconds, population standard deviation.
    pub sdnn: f64,
    /// Milliseconds.
    pub rmssd: f64,
    /// Fraction of successive differences above 50 ms.
    pub pnn50: f64,
    /// Milliseconds.
    pub mean_nn: f64,
    /// ms² in the low-frequency band.
    pub lf: f64,
    /// ms² in the high-frequency band.
    pub hf: f64,
    /// `lf / hf`, absent when `hf` is zero.
    pub lf_hf: Option<f64>,
}

/// Time-domain statistics of an NN series (milliseconds).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeDomain {
    pub mean_nn: f64,
    pub sdnn: f64,
    pub rmssd: f64,
    pub pnn50: f64,
    pub mean_hr: f64,
}

pub fn time_domain(nn: &[f64]) -> Result<TimeDomain, HealthError> {
    if nn.len() < 2 {
        return Err(HealthError::NoPeaks);
    }
    let n = nn.len() as f64;
    let mean_nn = nn.iter().sum::<f64>() / n;
    let var = nn.iter().map(|x| (x - mean_nn).powi(2)).sum::<f64>() / n;
    let diffs: Vec<f64> = nn.windows(2).map(|w| w[1] - w[0]).collect();
    let m = diffs.len() as f64;
    let rmssd = (diffs.iter().map(|d| d * d).sum::<f64>() / m).sqrt();
    let pnn50 = diffs.iter().filter(|d| d.abs() > 50.0).count() as f64 / m;
    Ok(TimeDomain {
        mean_nn,
        sdnn: var.sqrt(),
        rmssd,
        pnn50,
        mean_hr: 60_000.0 / mean_nn,
    })
}

/// Centered moving mean, window shrinking at the edges.
fn moving_mean(x: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(x.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

fn detrend(signal: &[f64], fs: f64) -> Vec<f64> {
    let window = ((DETREND_WINDOW_S * fs).round() as usize).max(1) | 1;
    let trend = moving_mean(signal, window);
    signal.iter().zip(trend).map(|(s, t)| s - t).collect()
}

/// Per-sample threshold from consecutive windows. A trailing window shorter
/// than half the nominal length is merged into the one before it.
fn thresholds(x: &[f64], fs: f64) -> Vec<f64> {
    let w = ((THRESHOLD_WINDOW_S * fs).round() as usize).max(1);
    let mut bounds: Vec<(usize, usize)> = (0..x.len())
        .step_by(w)
        .map(|s| (s, (s + w).min(x.len())))
        .collect();
    if bounds.len() > 1 {
        let (s, e) = *bounds.last().unwrap();
        if e - s < w / 2 {
            bounds.pop();
            bounds.last_mut().unwrap().1 = e;
        }
    }
    let mut out = vec![0.0; x.len()];
    for (s, e) in bounds {
        let seg = &x[s..e];
        let n = seg.len() as f64;
        let mean = seg.iter().sum::<f64>() / n;
        let std = (seg.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        out[s..e].fill(mean + THRESHOLD_K * std);
    }
    out
}

/// Peak times in seconds from the first sample, refined by fitting a
/// parabola through each maximum and its neighbours.
pub fn detect_peaks(signal: &[f64], fs: f64) -> Vec<f64> {
    if signal.len() < 3 {
        return vec![];
    }
    let x = detrend(signal, fs);
    let thr = thresholds(&x, fs);
    let min_gap = MIN_PEAK_GAP_S * fs;
    let mut kept: Vec<usize> = Vec::new();
    for i in 1..x.len() - 1 {
        if !(x[i] > x[i - 1] && x[i] >= x[i + 1] && x[i] > thr[i]) {
            continue;
        }
        match kept.last() {
            Some(&last) if ((i - last) as f64) < min_gap => {
                if x[i] > x[last] {
                    *kept.last_mut().unwrap() = i;
                }
            }
            _ => kept.push(i),
        }
    }
    kept.into_iter()
        .map(|i| {
            let (a, b, c) = (x[i - 1], x[i], x[i + 1]);
            let denom = a - 2.0 * b + c;
            let delta = if denom == 0.0 { 0.0 } else { 0.5 * (a - c) / denom };
            (i as f64 + delta) / fs
        })
        .collect()
}

/// LF and HF power (ms²) of the NN series, evenly resampled by linear
/// interpolation. `times` holds the end time in seconds of each interval.
pub fn band_powers(times: &[f64], nn: &[f64]) -> (f64, f64) {
    if nn.len() < 3 {
        return (0.0, 0.0);
    }
    let step = 1.0 / RESAMPLE_HZ;
    let (t0, t1) = (times[0], *times.last().unwrap());
    let n = ((t1 - t0) / step).floor() as usize + 1;
    if n < 4 {
        return (0.0, 0.0);
    }
    let mut resampled = Vec::with_capacity(n);
    let mut j = 0;
    for k in 0..n {
        let t = t0 + k as f64 * step;
        while j + 2 < times.len() && times[j + 1] < t {
            j += 1;
        }
        let (ta, tb) = (times[j], times[j + 1]);
        let frac = if tb > ta { ((t - ta) / (tb - ta)).clamp(0.0, 1.0) } else { 0.0 };
        resampled.push(nn[j] + frac * (nn[j + 1] - nn[j]));
    }
    let mean = resampled.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = resampled
        .iter()
        .map(|v| Complex::new(v - mean, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let df = RESAMPLE_HZ / n as f64;
    let (mut lf, mut hf) = (0.0, 0.0);
    for (k, c) in buf.iter().enumerate().take(n / 2 + 1).skip(1) {
        let f = k as f64 * df;
        // One-sided periodogram density, doubled except at Nyquist.
        let scale = if 2 * k == n { 1.0 } else { 2.0 };
        let power = scale * c.norm_sqr() / (RESAMPLE_HZ * n as f64) * df;
        if f >= LF_BAND.0 && f < LF_BAND.1 {
            lf += power;
        } else if f >= HF_BAND.0 && f < HF_BAND.1 {
            hf += power;
        }
    }
    (lf, hf)
}

/// Full pipeline from evenly sampled PPG values to features.
pub fn analyze_ppg(signal: &[f64], fs: f64) -> Result<HrvFeatures, HealthError> {
    if (signal.len() as f64) / fs < MIN_DURATION_S {
        return Err(HealthError::TooShort {
            seconds: signal.len() as f64 / fs,
        });
    }
    let peaks = detect_peaks(signal, fs);
    if peaks.len() < 3 {
        return Err(HealthError::NoPeaks);
    }
    let nn: Vec<f64> = peaks.windows(2).map(|w| (w[1] - w[0]) * 1000.0).collect();
    let td = time_domain(&nn)?;
    let (lf, hf) = band_powers(&peaks[1..], &nn);
    Ok(HrvFeatures {
        mean_hr: td.mean_hr,
        sdnn: td.sdnn,
        rmssd: td.rmssd,
        pnn50: td.pnn50,
        mean_nn: td.mean_nn,
        lf,
        hf,
        lf_hf: (hf > 0.0).then(|| lf / hf),
    })
}

/// Sampling rate implied by millisecond timestamps (median spacing).
pub fn sampling_rate(timestamps_ms: &[i64]) -> Option<f64> {
    let mut diffs: Vec<i64> = timestamps_ms.windows(2).map(|w| w[1] - w[0]).collect();
    if diffs.is_empty() || diffs.iter().any(|d| *d <= 0) {
        return None;
    }
    diffs.sort_unstable();
    Some(1000.0 / diffs[diffs.len() / 2] as f64)
}

/// Noiseless PPG made of Gaussian pulses centred on `beats` (seconds).
pub fn synthetic_ppg(beats: &[f64], fs: f64, duration_s: f64) -> Vec<f64> {
    let n = (duration_s * fs).round() as usize;
    let sigma = 0.08;
    (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            beats
                .iter()
                .filter(|b| (t - **b).abs() < 6.0 * sigma)
                .map(|b| (-((t - b) / sigma).powi(2) / 2.0).exp())
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmssd_hand_case() {
        let td = time_domain(&[800.0, 810.0, 790.0, 805.0]).unwrap();
        let expected = ((100.0 + 400.0 + 225.0) / 3.0f64).sqrt();
        assert!((td.rmssd - expected).abs() < 1e-12);
        assert!((td.rmssd - 15.546).abs() < 5e-4);
    }

    #[test]
    fn constant_series_is_exactly_zero() {
        let td = time_domain(&[800.0; 50]).unwrap();
        assert_eq!(td.sdnn, 0.0);
        assert_eq!(td.rmssd, 0.0);
        assert_eq!(td.pnn50, 0.0);
        assert_eq!(td.mean_hr, 75.0);
    }

    #[test]
    fn too_short_and_flat() {
        assert!(matches!(
            analyze_ppg(&vec![0.0; 40], 20.0),
            Err(HealthError::TooShort { .. })
        ));
        assert!(matches!(analyze_ppg(&vec![1.0; 400], 20.0), Err(HealthError::NoPeaks)));
    }

    #[test]
    fn sampling_rate_from_timestamps() {
        assert_eq!(sampling_rate(&[0, 50, 100, 150]), Some(20.0));
        assert_eq!(sampling_rate(&[0, 50, 50]), None);
    }

    #[test]
    fn pure_tone_lands_in_its_band() {
        // NN modulated at 0.25 Hz: power should be in HF, not LF.
        let mut times = vec![];
        let mut nn = vec![];
        let mut t = 0.0;
        for _ in 0..300 {
            let v = 800.0 + 40.0 * (2.0 * std::f64::consts::PI * 0.25 * t).sin();
            t += v / 1000.0;
            times.push(t);
            nn.push(v);
        }
        let (lf, hf) = band_powers(&times, &nn);
        assert!(hf > 20.0 * lf, "lf={lf} hf={hf}");
        // A sine with amplitude 40 has variance 800 ms²; linear resampling
        // at about five beats per cycle attenuates it.
        assert!(hf > 500.0 && hf <= 800.0, "hf={hf}");
    }
}
