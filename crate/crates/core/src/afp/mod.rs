//! Model-side finite-time coefficients from the adjoint Fokker-Planck equation.

mod shared;
mod solver;
mod tridiag;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{OscillatorModel, Theta};
use crate::signal::SampleGrid;

pub use solver::solve_afp;
pub use tridiag::{ThomasFactor, Tridiagonal};

/// Drift and diffusion of the averaged amplitude equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelCoeffs {
    pub theta: Theta,
    pub omega: f64,
}

impl ModelCoeffs {
    /// Unlike [`OscillatorModel`], a negative `d` is accepted here and
    /// rejected at solve time as a recoverable domain error.
    pub fn new(theta: Theta, omega: f64) -> Result<Self> {
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::InvalidInput(format!("omega must be positive, got {omega}")));
        }
        if !theta.to_array().iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(format!("theta {theta} is not finite")));
        }
        Ok(ModelCoeffs { theta, omega })
    }

    pub fn diffusion(&self) -> f64 {
        self.theta.d / (2.0 * self.omega * self.omega)
    }

    /// `D1(a)`; the caller guarantees `a > 0`.
    pub fn drift(&self, a: f64) -> f64 {
        let Theta { epsilon, alpha, .. } = self.theta;
        epsilon * a / 2.0 + alpha * a * a * a / 8.0 + self.diffusion() / a
    }
}

impl From<OscillatorModel> for ModelCoeffs {
    fn from(m: OscillatorModel) -> Self {
        ModelCoeffs { theta: m.theta, omega: m.omega }
    }
}

/// `(D1(a), D2(a)) = (eps a/2 + alpha a^3/8 + d/(2 omega^2 a), d/(2 omega^2))`.
pub fn model_coeffs(mc: &ModelCoeffs, a: f64) -> Result<(f64, f64)> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::Domain(format!("drift is singular at a = {a}")));
    }
    Ok((mc.drift(a), mc.diffusion()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdeConfig {
    pub a_max_factor: f64,
    pub n_cells: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Output times. Filled from the lag grid by [`model_finite_time_km`].
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub checkpoint_times: Vec<f64>,
    /// Largest amplitude of interest; the domain reaches `a_max_factor` times
    /// the larger of this and twice the conditioning amplitude.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_ref: Option<f64>,
}

impl Default for PdeConfig {
    fn default() -> Self {
        PdeConfig {
            a_max_factor: 1.5,
            n_cells: 400,
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            checkpoint_times: Vec::new(),
            a_ref: None,
        }
    }
}

impl PdeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_max_factor > 1.0 && self.a_max_factor.is_finite()) {
            return Err(Error::InvalidInput(format!("a_max_factor must exceed 1, got {}", self.a_max_factor)));
        }
        if self.n_cells < 50 {
            return Err(Error::InvalidInput(format!("n_cells must be at least 50, got {}", self.n_cells)));
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if let Some(a) = self.a_ref {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::InvalidInput(format!("a_ref must be positive, got {a}")));
            }
        }
        Ok(())
    }

    /// Copy with checkpoints and reference amplitude taken from a grid.
    pub fn for_grid(&self, grid: &SampleGrid) -> PdeConfig {
        PdeConfig {
            checkpoint_times: grid.taus.clone(),
            a_ref: grid.amplitudes.last().copied(),
            ..self.clone()
        }
    }
}

/// `P^dagger(a_center, tau)` at every checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct AfpSolution {
    pub n: usize,
    pub a_center: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl AfpSolution {
    /// `P^dagger / (n! tau)` at every checkpoint.
    pub fn coefficients(&self) -> Vec<f64> {
        let fact = if self.n == 2 { 2.0 } else { 1.0 };
        self.times.iter().zip(&self.values).map(|(t, p)| p / (fact * t)).collect()
    }
}

/// Model-side `D^(1)` and `D^(2)` on a grid, indexed `[i][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KmModel {
    pub d1: Vec<Vec<f64>>,
    pub d2: Vec<Vec<f64>>,
}

impl KmModel {
    pub fn row(&self, n: usize, i: usize) -> &[f64] {
        if n == 1 { &self.d1[i] } else { &self.d2[i] }
    }

    pub fn value(&self, n: usize, i: usize, j: usize) -> f64 {
        if n == 1 {
            self.d1[i][j]
        } else {
            self.d2[i][j]
        }
    }
}

/// Model-side coefficients on a grid from one mesh shared by all conditioning
/// amplitudes. [`model_km_per_center`] is the direct alternative.
pub fn model_finite_time_km(mc: &ModelCoeffs, grid: &SampleGrid, cfg: &PdeConfig) -> Result<KmModel> {
    let cfg = cfg.for_grid(grid);
    let to_coeffs = |rows: Vec<Vec<f64>>, fact: f64| -> Vec<Vec<f64>> {
        rows.into_iter()
            .map(|r| r.iter().zip(&grid.taus).map(|(p, t)| p / (fact * t)).collect())
            .collect()
    };
    let [p1, p2] = shared::solve_shared(mc, &grid.amplitudes, &cfg)?;
    Ok(KmModel { d1: to_coeffs(p1, 1.0), d2: to_coeffs(p2, 2.0) })
}

/// One adjoint solve per `(n, a_i)` with `a_i` on a node, read out at every
/// lag. Solves run on the rayon pool and are merged by index.
pub fn model_km_per_center(mc: &ModelCoeffs, grid: &SampleGrid, cfg: &PdeConfig) -> Result<KmModel> {
    let cfg = cfg.for_grid(grid);
    let na = grid.n_a();
    let rows: Vec<Result<Vec<f64>>> = (0..2 * na)
        .into_par_iter()
        .map(|task| {
            let (n, i) = (task / na + 1, task % na);
            solve_afp(mc, n, grid.amplitudes[i], &cfg)
                .map(|s| s.coefficients())
                .map_err(|e| Error::Solve { order: n, index: i, source: Box::new(e) })
        })
        .collect();
    let mut d1 = Vec::with_capacity(na);
    let mut d2 = Vec::with_capacity(na);
    for (task, row) in rows.into_iter().enumerate() {
        let row = row?;
        if task < na {
            d1.push(row);
        } else {
            d2.push(row);
        }
    }
    Ok(KmModel { d1, d2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn mc(eps: f64, alpha: f64, d: f64) -> ModelCoeffs {
        ModelCoeffs::new(Theta::from_array([eps, alpha, d]), TAU).unwrap()
    }

    #[test]
    fn coefficient_values() {
        let (d1, d2) = model_coeffs(&mc(0.1, -0.1, 0.1), 2.0).unwrap();
        assert!((d1 - 6.3327e-4).abs() < 5e-8, "{d1}");
        assert!((d2 - 1.2665e-3).abs() < 5e-8, "{d2}");
        let (_, d2) = model_coeffs(&mc(0.3, -0.7, 0.0), 1.0).unwrap();
        assert_eq!(d2, 0.0);
        assert!(model_coeffs(&mc(0.1, -0.1, 0.1), 0.0).is_err());
        assert!(model_coeffs(&mc(0.1, -0.1, 0.1), -1.0).is_err());
    }

    #[test]
    fn singular_term_decays() {
        let m = mc(0.0, 0.0, 0.1);
        let mut prev = f64::INFINITY;
        for a in [1.0, 2.0, 10.0, 100.0, 1e4] {
            let (d1, d2) = model_coeffs(&m, a).unwrap();
            assert!(d1 > 0.0 && d1 < prev);
            assert!((d1 - d2 / a).abs() < 1e-18);
            prev = d1;
        }
    }

    #[test]
    fn config_validation() {
        assert!(PdeConfig::default().validate().is_ok());
        let bad = [
            PdeConfig { a_max_factor: 1.0, ..Default::default() },
            PdeConfig { n_cells: 49, ..Default::default() },
            PdeConfig { rel_tol: 0.0, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
    }
}
