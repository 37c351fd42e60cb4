use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::sim::TimeSeries;

/// Instantaneous amplitude `a(t)` of a record. The first and last `edge`
/// samples (one carrier period each) are unreliable and flagged.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeSeries {
    pub t0: f64,
    pub dt: f64,
    pub amplitudes: Vec<f64>,
    pub edge: usize,
}

impl EnvelopeSeries {
    pub fn new(t0: f64, dt: f64, amplitudes: Vec<f64>, edge: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidInput(format!("sample spacing must be positive, got {dt}")));
        }
        if amplitudes.is_empty() {
            return Err(Error::InvalidInput("envelope is empty".into()));
        }
        if let Some(k) = amplitudes.iter().position(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::InvalidInput(format!("amplitude {k} is negative or not finite")));
        }
        if 2 * edge >= amplitudes.len() {
            return Err(Error::InvalidInput("edge flags cover the whole envelope".into()));
        }
        Ok(EnvelopeSeries { t0, dt, amplitudes, edge })
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn is_flagged(&self, k: usize) -> bool {
        k < self.edge || k >= self.amplitudes.len() - self.edge
    }

    /// Index range of samples not affected by the record edges.
    pub fn valid_range(&self) -> std::ops::Range<usize> {
        self.edge..self.amplitudes.len() - self.edge
    }

    pub fn valid(&self) -> &[f64] {
        &self.amplitudes[self.valid_range()]
    }

    /// Multiplies every amplitude by `c > 0`.
    pub fn scaled(&self, c: f64) -> EnvelopeSeries {
        EnvelopeSeries {
            amplitudes: self.amplitudes.iter().map(|a| a * c).collect(),
            ..self.clone()
        }
    }
}

pub const MIN_ENVELOPE_LEN: usize = 16;

/// `|x + i H[x]|` with the Hilbert transform taken spectrally (one-sided
/// spectrum doubled, negative frequencies zeroed). The sample mean is
/// removed first.
pub fn analytic_envelope(ts: &TimeSeries) -> Result<EnvelopeSeries> {
    let n = ts.len();
    if n < MIN_ENVELOPE_LEN {
        return Err(Error::TooShort { len: n, min: MIN_ENVELOPE_LEN });
    }
    let mean = ts.samples.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex64> = ts.samples.iter().map(|x| Complex64::new(x - mean, 0.0)).collect();

    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);

    // carrier period from the strongest positive-frequency bin
    let half = n / 2;
    let (peak_bin, peak_pow) = (1..=half)
        .map(|k| (k, buf[k].norm_sqr()))
        .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });

    for (k, c) in buf.iter_mut().enumerate() {
        let gain = if k == 0 || (n % 2 == 0 && k == half) {
            1.0
        } else if k < n.div_ceil(2) {
            2.0
        } else {
            0.0
        };
        *c *= gain;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    let amplitudes: Vec<f64> = buf.iter().map(|c| c.norm() * scale).collect();

    let edge = if peak_pow > 0.0 {
        let period = (n as f64 / peak_bin as f64).ceil() as usize;
        period.min((n - 1) / 2)
    } else {
        0
    };
    EnvelopeSeries::new(ts.t0, ts.dt, amplitudes, edge)
}

/// Zero-phase band-pass by spectral masking: bins with `|f - f_center| <=
/// half_width` are kept, everything else is zeroed.
pub fn band_pass(ts: &TimeSeries, f_center: f64, half_width: f64) -> Result<TimeSeries> {
    let nyquist = 0.5 / ts.dt;
    let (lo, hi) = (f_center - half_width, f_center + half_width);
    if !(half_width > 0.0 && lo > 0.0 && hi < nyquist) {
        return Err(Error::InvalidInput(format!(
            "pass band [{lo}, {hi}] must lie inside (0, {nyquist})"
        )));
    }
    let n = ts.len();
    let mut buf: Vec<Complex64> = ts.samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let df = 1.0 / (n as f64 * ts.dt);
    for (k, c) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * df;
        if f < lo || f > hi {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    TimeSeries::new(ts.t0, ts.dt, buf.iter().map(|c| c.re * scale).collect())
}
