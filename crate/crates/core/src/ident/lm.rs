use serde::{Deserialize, Serialize};

use super::report::{FitReport, Method, TrajectoryPoint};
use super::residual::{fd_jacobian_with, AfpResidual, Residual, ResidualModel};
use crate::afp::PdeConfig;
use crate::error::{Error, Result};
use crate::km::KmEstimates;
use crate::model::Theta;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StopCriteria {
    /// Bound on `|theta' - theta| / (1 + |theta|)`.
    pub theta_tol: f64,
    /// Bound on `|E' - E| / (1 + |E|)`.
    pub cost_tol: f64,
    pub max_iterations: usize,
    /// Damping doublings tried before giving up on an iteration.
    pub max_backtracks: usize,
    pub nm_max_iterations: usize,
}

impl Default for StopCriteria {
    fn default() -> Self {
        StopCriteria { theta_tol: 1e-4, cost_tol: 1e-4, max_iterations: 200, max_backtracks: 30, nm_max_iterations: 1000 }
    }
}

impl StopCriteria {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_tol > 0.0 && self.cost_tol > 0.0) {
            return Err(Error::InvalidInput("stop tolerances must be positive".into()));
        }
        if self.max_iterations == 0 || self.nm_max_iterations == 0 {
            return Err(Error::InvalidInput("iteration caps must be positive".into()));
        }
        Ok(())
    }

    pub fn check(&self, prev: &LmState, next: &LmState) -> bool {
        let dtheta: f64 = prev
            .theta
            .to_array()
            .iter()
            .zip(next.theta.to_array())
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt();
        dtheta / (1.0 + prev.theta.norm()) < self.theta_tol
            && (next.cost - prev.cost).abs() / (1.0 + prev.cost.abs()) < self.cost_tol
    }
}

/// Both relative changes below `1e-4`.
pub fn stop_check(prev: &LmState, next: &LmState) -> bool {
    StopCriteria::default().check(prev, next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmState {
    pub theta: Theta,
    pub lambda: f64,
    pub cost: f64,
    pub iteration: usize,
    pub residual_evals: usize,
}

/// Solves the damped normal equations `(A + lambda diag A) x = b` by
/// Cholesky, refusing anything that is not positive definite.
pub fn solve_damped(a: &[[f64; 3]; 3], b: &[f64; 3], lambda: f64) -> Result<[f64; 3]> {
    let mut m = *a;
    for k in 0..3 {
        if !(a[k][k] > 0.0 && a[k][k].is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        m[k][k] *= 1.0 + lambda;
    }
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let s: f64 = m[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if i == j {
                if !(s > 0.0) {
                    return Err(Error::NotPositiveDefinite);
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = [0.0; 3];
    for i in 0..3 {
        y[i] = (b[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        x[i] = (y[i] - (i + 1..3).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    Ok(x)
}

fn step(theta: &Theta, dx: &[f64; 3]) -> Theta {
    let x = theta.to_array();
    Theta::from_array([x[0] - dx[0], x[1] - dx[1], x[2] - dx[2]])
}

/// Cost at a trial point; recoverable failures count as `+inf`.
fn trial<M: ResidualModel + ?Sized>(model: &M, theta: &Theta) -> Result<(f64, Option<Residual>)> {
    match model.evaluate(theta) {
        Ok(r) => Ok((r.cost(), Some(r))),
        Err(e) if e.is_recoverable() => Ok((f64::INFINITY, None)),
        Err(e) => Err(e),
    }
}

/// Levenberg-Marquardt with two concurrent damping candidates per iteration
/// and damping inflation when both raise the cost.
pub fn lm_solve_with<M: ResidualModel + ?Sized>(model: &M, theta0: Theta, stop: &StopCriteria) -> Result<FitReport> {
    stop.validate()?;
    let start = model.evaluations();
    let evals = || model.evaluations() - start;
    let mut rho = model.evaluate(&theta0)?;
    let mut state = LmState { theta: theta0, lambda: 1.0, cost: rho.cost(), iteration: 0, residual_evals: evals() };
    let mut trajectory = vec![point(&state, 0)];
    let mut converged = false;
    let mut failure = None;

    'outer: for k in 1..=stop.max_iterations {
        let jac = match fd_jacobian_with(model, &state.theta, &rho) {
            Ok(j) => j,
            Err(e) if e.is_recoverable() => {
                failure = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        let (a, b) = jac.normal_equations(&rho);
        let solve = |lambda: f64| solve_damped(&a, &b, lambda);
        let (dx0, dx1) = match (solve(state.lambda), solve(state.lambda / 2.0)) {
            (Ok(x), Ok(y)) => (x, y),
            (Err(e), _) | (_, Err(e)) => {
                failure = Some(e.to_string());
                break;
            }
        };
        let (t0, t1) = (step(&state.theta, &dx0), step(&state.theta, &dx1));
        let (c0, c1) = rayon::join(|| trial(model, &t0), || trial(model, &t1));
        let ((e0, r0), (e1, r1)) = (c0?, c1?);

        let mut backtracks = 0;
        let (theta, lambda, cost, res) = if e0 > state.cost && e1 > state.cost {
            let mut found = None;
            for m in 1..=stop.max_backtracks {
                backtracks = m;
                let lambda = state.lambda * 2f64.powi(m as i32);
                let dx = match solve(lambda) {
                    Ok(dx) => dx,
                    Err(e) => {
                        failure = Some(e.to_string());
                        break 'outer;
                    }
                };
                let t = step(&state.theta, &dx);
                let (e, r) = trial(model, &t)?;
                if e <= state.cost {
                    found = Some((t, lambda, e, r));
                    break;
                }
            }
            match found {
                Some((t, l, e, Some(r))) => (t, l, e, r),
                _ => {
                    failure = Some(format!("no descent after {} damping doublings", stop.max_backtracks));
                    trajectory.push(TrajectoryPoint { residual_evals: evals(), backtracks, ..point(&state, k) });
                    break;
                }
            }
        } else if e0 <= e1 {
            (t0, state.lambda, e0, r0.expect("finite cost has a residual"))
        } else {
            (t1, state.lambda / 2.0, e1, r1.expect("finite cost has a residual"))
        };

        let next = LmState { theta, lambda, cost, iteration: k, residual_evals: evals() };
        trajectory.push(point(&next, backtracks));
        let done = stop.check(&state, &next);
        state = next;
        rho = res;
        if done {
            converged = true;
            break;
        }
    }
    if !converged && failure.is_none() {
        failure = Some(format!("iteration cap {} reached", stop.max_iterations));
    }
    Ok(FitReport {
        method: Method::Prop,
        theta0,
        theta_hat: state.theta,
        cost_min: state.cost,
        iterations: trajectory.last().map_or(0, |p| p.iteration),
        residual_evals: evals(),
        converged,
        failure,
        trajectory,
    })
}

fn point(s: &LmState, backtracks: usize) -> TrajectoryPoint {
    TrajectoryPoint {
        iteration: s.iteration,
        theta: s.theta,
        cost: s.cost,
        lambda: Some(s.lambda),
        residual_evals: s.residual_evals,
        backtracks,
    }
}

/// Levenberg-Marquardt on the adjoint residual of `km`.
pub fn lm_solve(theta0: Theta, omega: f64, km: &KmEstimates, cfg: &PdeConfig, stop: &StopCriteria) -> Result<FitReport> {
    let model = AfpResidual::new(km, omega, cfg)?;
    lm_solve_with(&model, theta0, stop)
}

#[cfg(test)]
mod tests {
    use super::super::residual::FnResidual;
    use super::*;

    fn state(theta: [f64; 3], cost: f64) -> LmState {
        LmState { theta: Theta::from_array(theta), lambda: 1.0, cost, iteration: 0, residual_evals: 0 }
    }

    #[test]
    fn stop_thresholds() {
        let s = state([0.1, -0.1, 0.1], 0.3);
        assert!(stop_check(&s, &s));
        assert!(!stop_check(&state([0.0; 3], 0.0), &state([1.0, 0.0, 0.0], 0.0)));
        assert!(stop_check(&state([0.0; 3], 0.0), &state([5e-5, 0.0, 0.0], 5e-5)));
        assert!(!stop_check(&state([0.0; 3], 0.0), &state([5e-5, 0.0, 0.0], 2e-4)));
    }

    #[test]
    fn cholesky_checks() {
        let a = [[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]];
        let x = solve_damped(&a, &[1.0, 2.0, 3.0], 0.0).unwrap();
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[i][j] * x[j]).sum();
            assert!((r - [1.0, 2.0, 3.0][i]).abs() < 1e-14);
        }
        let singular = [[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(solve_damped(&singular, &[1.0; 3], 0.0).is_err());
        assert!(solve_damped(&singular, &[1.0; 3], 0.1).is_ok());
        let zero_col = [[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(matches!(solve_damped(&zero_col, &[1.0; 3], 1.0), Err(Error::NotPositiveDefinite)));
    }

    /// `rho = M theta + b` with 8 rows, unequal weights.
    fn affine() -> (FnResidual<impl Fn(&Theta) -> Result<Vec<f64>> + Sync>, [f64; 3]) {
        let m: Vec<[f64; 3]> = (0..8)
            .map(|r| {
                let r = r as f64;
                [1.0 + 0.3 * r, (0.7 * r).sin() * 2.0, 0.5 - 0.1 * r * r]
            })
            .collect();
        let b: Vec<f64> = (0..8).map(|r| (r as f64 * 1.3).cos()).collect();
        let w: Vec<f64> = (0..8).map(|r| 0.5 + 0.25 * r as f64).collect();
        // closed-form weighted least squares
        let mut ata = [[0.0; 3]; 3];
        let mut atb = [0.0; 3];
        for r in 0..8 {
            for i in 0..3 {
                atb[i] -= w[r] * m[r][i] * b[r];
                for j in 0..3 {
                    ata[i][j] += w[r] * m[r][i] * m[r][j];
                }
            }
        }
        let ls = solve_damped(&ata, &atb, 0.0).unwrap();
        let model = FnResidual::new(w, move |th: &Theta| {
            let x = th.to_array();
            Ok(m.iter().zip(&b).map(|(row, b)| row[0] * x[0] + row[1] * x[1] + row[2] * x[2] + b).collect())
        });
        (model, ls)
    }

    #[test]
    fn affine_least_squares() {
        let (model, ls) = affine();
        let stop = StopCriteria { theta_tol: 1e-12, cost_tol: 1e-14, ..Default::default() };
        let r = lm_solve_with(&model, Theta::from_array([1.0, 1.0, 1.0]), &stop).unwrap();
        assert!(r.converged, "{r:?}");
        assert!(r.iterations <= 25, "{} iterations", r.iterations);
        for (a, b) in r.theta_hat.to_array().iter().zip(ls) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        audit(&r);
    }

    fn audit(r: &FitReport) {
        assert_eq!(r.trajectory[0].residual_evals, 1);
        for w in r.trajectory.windows(2) {
            assert!(w[1].cost <= w[0].cost);
            assert_eq!(w[1].residual_evals - w[0].residual_evals, 5 + w[1].backtracks);
        }
        assert_eq!(r.trajectory.last().unwrap().residual_evals, r.residual_evals);
    }

    #[test]
    fn stationary_start() {
        let model = FnResidual::new(vec![1.0; 3], |th: &Theta| Ok(vec![th.epsilon - 0.1, th.alpha + 0.1, th.d - 0.1]));
        let r = lm_solve_with(&model, Theta::from_array([0.1, -0.1, 0.1]), &StopCriteria::default()).unwrap();
        assert!(r.converged);
        assert!(r.iterations <= 2);
        assert_eq!(r.theta_hat, Theta::from_array([0.1, -0.1, 0.1]));
        audit(&r);
    }

    #[test]
    fn backtracking_and_accounting() {
        // Rosenbrock-like residual forces damping inflation from a far start.
        let model = FnResidual::new(vec![1.0; 3], |th: &Theta| {
            Ok(vec![10.0 * (th.alpha - th.epsilon * th.epsilon), 1.0 - th.epsilon, th.d.sin() * 3.0])
        });
        let r = lm_solve_with(&model, Theta::from_array([-1.2, 1.0, 0.4]), &StopCriteria::default()).unwrap();
        assert!(r.converged, "{r:?}");
        assert!((r.theta_hat.epsilon - 1.0).abs() < 1e-3);
        assert!(r.trajectory.iter().any(|p| p.backtracks > 0), "no backtracking exercised");
        audit(&r);
    }

    #[test]
    fn infeasible_everywhere_else() {
        // every move away from the start fails; the run must end with a report
        let model = FnResidual::new(vec![1.0], |th: &Theta| {
            if th.epsilon == 0.5 {
                Ok(vec![th.epsilon + th.alpha + th.d])
            } else {
                Err(Error::Domain("outside".into()))
            }
        });
        let r = lm_solve_with(&model, Theta::from_array([0.5, 0.0, 0.0]), &StopCriteria::default()).unwrap();
        assert!(!r.converged);
        assert!(r.failure.is_some());
        assert_eq!(r.theta_hat.epsilon, 0.5);
    }
}
