use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::Theta;

/// Identification method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Levenberg-Marquardt on the adjoint residual.
    Prop,
    /// Nelder-Mead on the same cost.
    Nm,
    /// Exponential extrapolation only.
    Extrap,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Prop => "prop",
            Method::Nm => "nm",
            Method::Extrap => "extrap",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "prop" => Ok(Method::Prop),
            "nm" => Ok(Method::Nm),
            "extrap" => Ok(Method::Extrap),
            _ => Err(format!("unknown method '{s}' (expected prop, nm or extrap)")),
        }
    }
}

/// One accepted iterate. For Nelder-Mead this is the best vertex and
/// `lambda` is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub iteration: usize,
    pub theta: Theta,
    pub cost: f64,
    pub lambda: Option<f64>,
    /// Cumulative residual evaluations after this iterate.
    pub residual_evals: usize,
    /// Extra evaluations spent inflating the damping in this iteration.
    pub backtracks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub method: Method,
    pub theta0: Theta,
    pub theta_hat: Theta,
    pub cost_min: f64,
    pub iterations: usize,
    pub residual_evals: usize,
    pub converged: bool,
    /// Why the run stopped without converging, if it did.
    pub failure: Option<String>,
    pub trajectory: Vec<TrajectoryPoint>,
}

impl FitReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// `iteration,residual_evals,epsilon,alpha,d,cost,lambda,backtracks`.
    pub fn write_trajectory_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "residual_evals", "epsilon", "alpha", "d", "cost", "lambda", "backtracks"])?;
        for p in &self.trajectory {
            w.write_record([
                p.iteration.to_string(),
                p.residual_evals.to_string(),
                p.theta.epsilon.to_string(),
                p.theta.alpha.to_string(),
                p.theta.d.to_string(),
                p.cost.to_string(),
                p.lambda.map(|l| l.to_string()).unwrap_or_default(),
                p.backtracks.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_csv() {
        let th = Theta::from_array([0.1, -0.1, 0.1]);
        let r = FitReport {
            method: Method::Prop,
            theta0: th,
            theta_hat: th,
            cost_min: 1e-6,
            iterations: 1,
            residual_evals: 6,
            converged: true,
            failure: None,
            trajectory: vec![
                TrajectoryPoint { iteration: 0, theta: th, cost: 2e-6, lambda: Some(1.0), residual_evals: 1, backtracks: 0 },
                TrajectoryPoint { iteration: 1, theta: th, cost: 1e-6, lambda: Some(0.5), residual_evals: 6, backtracks: 0 },
            ],
        };
        let back = FitReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        let mut buf = Vec::new();
        r.write_trajectory_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("iteration,residual_evals,epsilon"));
        assert_eq!("nm".parse::<Method>().unwrap(), Method::Nm);
        assert!("lm".parse::<Method>().is_err());
    }
}
