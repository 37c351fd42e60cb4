//! Parameter types shared by every stage of the pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The identified parameter triple: linear growth rate, nonlinear
/// coefficient and noise amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub epsilon: f64,
    pub alpha: f64,
    pub d: f64,
}

impl Theta {
    pub fn new(epsilon: f64, alpha: f64, d: f64) -> Result<Self> {
        let theta = Theta { epsilon, alpha, d };
        theta.validate()?;
        Ok(theta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.alpha.is_finite() && self.d.is_finite()) {
            return Err(Error::Domain(format!("non-finite parameters {self:?}")));
        }
        if self.d < 0.0 {
            return Err(Error::Domain(format!("negative noise amplitude d = {}", self.d)));
        }
        Ok(())
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.epsilon, self.alpha, self.d]
    }

    /// Builds a triple without validation; optimizers produce trial points
    /// that may be infeasible and are rejected downstream.
    pub fn from_array(v: [f64; 3]) -> Self {
        Theta {
            epsilon: v[0],
            alpha: v[1],
            d: v[2],
        }
    }

    pub fn norm(&self) -> f64 {
        self.to_array().iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Finite-difference step per coordinate: `max(|x|/10, 1e-5)`.
    pub fn fd_steps(&self) -> [f64; 3] {
        self.to_array().map(|x| (x.abs() / 10.0).max(1e-5))
    }
}

impl std::fmt::Display for Theta {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "(eps = {:.6}, alpha = {:.6}, d = {:.6})",
            self.epsilon, self.alpha, self.d
        )
    }
}

/// `Theta` plus the angular frequency: a complete oscillator specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorModel {
    pub theta: Theta,
    pub omega: f64,
}

impl OscillatorModel {
    pub fn new(theta: Theta, omega: f64) -> Result<Self> {
        let model = OscillatorModel { theta, omega };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        self.theta.validate()?;
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::InvalidInput(format!(
                "omega must be positive, got {}",
                self.omega
            )));
        }
        Ok(())
    }
}
