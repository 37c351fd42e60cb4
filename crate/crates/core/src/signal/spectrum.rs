use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::sim::TimeSeries;

pub const MIN_SPECTRUM_LEN: usize = 256;

/// Segment length of the averaged spectrum used for the peak significance test.
const WELCH_SEGMENT: usize = 256;

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 0.5 - 0.5 * (std::f64::consts::TAU * k as f64 / n as f64).cos())
        .collect()
}

/// One-sided power of a Hann-tapered, mean-removed slice (bins `0..=n/2`).
fn periodogram(x: &[f64], planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex64> = x
        .iter()
        .zip(hann(n))
        .map(|(v, w)| Complex64::new((v - mean) * w, 0.0))
        .collect();
    planner.plan_fft_forward(n).process(&mut buf);
    buf[..=n / 2].iter().map(|c| c.norm_sqr()).collect()
}

/// Welch average over half-overlapping segments.
fn welch(x: &[f64], seg: usize, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let step = seg / 2;
    let mut acc = vec![0.0; seg / 2 + 1];
    let mut count = 0usize;
    let mut start = 0;
    while start + seg <= x.len() {
        for (a, p) in acc.iter_mut().zip(periodogram(&x[start..start + seg], planner)) {
            *a += p;
        }
        count += 1;
        start += step;
    }
    acc.iter_mut().for_each(|a| *a /= count as f64);
    acc
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let m = s.len() / 2;
    if s.len() % 2 == 0 {
        0.5 * (s[m - 1] + s[m])
    } else {
        s[m]
    }
}

/// Angular frequency of the spectral peak.
///
/// The peak is located on the full-length Hann periodogram and refined by a
/// parabola through the three bins around it. Its significance is judged on
/// a Welch-averaged spectrum so that a single noisy bin of a flat spectrum
/// does not pass for a peak.
pub fn dominant_frequency(ts: &TimeSeries) -> Result<f64> {
    let n = ts.len();
    if n < MIN_SPECTRUM_LEN {
        return Err(Error::TooShort { len: n, min: MIN_SPECTRUM_LEN });
    }
    let mut planner = FftPlanner::new();
    let power = periodogram(&ts.samples, &mut planner);
    let last = power.len() - 1;
    let k = (1..last)
        .max_by(|&a, &b| power[a].total_cmp(&power[b]))
        .unwrap_or(1);

    let (pm, p0, pp) = (power[k - 1], power[k], power[k + 1]);
    let denom = pm - 2.0 * p0 + pp;
    let shift = if denom.abs() > 0.0 { 0.5 * (pm - pp) / denom } else { 0.0 };
    let freq = (k as f64 + shift.clamp(-0.5, 0.5)) / (n as f64 * ts.dt);

    let smooth = welch(&ts.samples, WELCH_SEGMENT, &mut planner);
    let df = 1.0 / (WELCH_SEGMENT as f64 * ts.dt);
    let kw = ((freq / df).round() as usize).clamp(1, smooth.len() - 1);
    let peak = smooth[kw.saturating_sub(1).max(1)..=(kw + 1).min(smooth.len() - 1)]
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    let med = median(&smooth[1..]);
    if !(peak > 3.0 * med) || p0 <= 0.0 {
        return Err(Error::NoDominantFrequency { peak, median: med });
    }
    Ok(std::f64::consts::TAU * freq)
}
