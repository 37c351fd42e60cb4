//! Amplitude envelope, carrier frequency and sampling-grid selection.

mod envelope;
mod grid;
mod spectrum;

pub use envelope::{analytic_envelope, band_pass, EnvelopeSeries, MIN_ENVELOPE_LEN};
pub use grid::{
    amplitude_range, autocorrelation, autocorrelation_all, autocorrelation_at, segment_series,
    select_amplitude_grid, select_tau_grid, SampleGrid, TauSelection, ACF_THRESHOLD_DECAYING,
    ACF_THRESHOLD_GROWING, DEFAULT_N_A, DEFAULT_N_TAU, MIN_SEGMENT_SAMPLES, TAU_SPAN_RATIO,
};
pub use spectrum::{dominant_frequency, MIN_SPECTRUM_LEN};
