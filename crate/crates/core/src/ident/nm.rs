use super::lm::StopCriteria;
use super::report::{FitReport, Method, TrajectoryPoint};
use super::residual::{AfpResidual, ResidualModel};
use crate::afp::PdeConfig;
use crate::error::Result;
use crate::km::KmEstimates;
use crate::model::Theta;

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

type Point = [f64; 3];

fn lerp(from: &Point, to: &Point, t: f64) -> Point {
    [0, 1, 2].map(|k| from[k] + t * (to[k] - from[k]))
}

fn dist(a: &Point, b: &Point) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt()
}

/// Nelder-Mead on the weighted cost. Vertices whose residual fails
/// recoverably cost `+inf`. Converged when every vertex lies within the
/// relative tolerances of the best one, in position and in cost.
pub fn nelder_mead_with<M: ResidualModel + ?Sized>(model: &M, theta0: Theta, stop: &StopCriteria) -> Result<FitReport> {
    stop.validate()?;
    let start = model.evaluations();
    let evals = || model.evaluations() - start;
    let f = |x: &Point| -> Result<f64> {
        match model.evaluate(&Theta::from_array(*x)) {
            Ok(r) => Ok(r.cost()),
            Err(e) if e.is_recoverable() => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    };

    let x0 = theta0.to_array();
    let steps = theta0.fd_steps();
    let mut simplex: Vec<(Point, f64)> = Vec::with_capacity(4);
    simplex.push((x0, f(&x0)?));
    for k in 0..3 {
        let mut x = x0;
        x[k] += steps[k];
        simplex.push((x, f(&x)?));
    }
    let sort = |s: &mut Vec<(Point, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    sort(&mut simplex);
    let record = |s: &[(Point, f64)], iteration: usize, evals: usize| TrajectoryPoint {
        iteration,
        theta: Theta::from_array(s[0].0),
        cost: s[0].1,
        lambda: None,
        residual_evals: evals,
        backtracks: 0,
    };
    let mut trajectory = vec![record(&simplex, 0, evals())];
    let mut converged = false;

    for it in 1..=stop.nm_max_iterations {
        let (best, worst) = (simplex[0], simplex[3]);
        let second_worst = simplex[2].1;
        let c: Point = [0, 1, 2].map(|k| (simplex[0].0[k] + simplex[1].0[k] + simplex[2].0[k]) / 3.0);

        let xr = lerp(&c, &worst.0, -REFLECT);
        let fr = f(&xr)?;
        let mut shrink = false;
        if fr < best.1 {
            let xe = lerp(&c, &worst.0, -EXPAND);
            let fe = f(&xe)?;
            simplex[3] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < second_worst {
            simplex[3] = (xr, fr);
        } else if fr < worst.1 {
            let xc = lerp(&c, &xr, CONTRACT);
            let fc = f(&xc)?;
            if fc <= fr {
                simplex[3] = (xc, fc);
            } else {
                shrink = true;
            }
        } else {
            let xc = lerp(&c, &worst.0, CONTRACT);
            let fc = f(&xc)?;
            if fc < worst.1 {
                simplex[3] = (xc, fc);
            } else {
                shrink = true;
            }
        }
        if shrink {
            for v in simplex.iter_mut().skip(1) {
                v.0 = lerp(&best.0, &v.0, SHRINK);
                v.1 = f(&v.0)?;
            }
        }
        sort(&mut simplex);
        trajectory.push(record(&simplex, it, evals()));

        let (xb, fb) = simplex[0];
        let scale = 1.0 + dist(&xb, &[0.0; 3]);
        let spread_x = simplex.iter().map(|v| dist(&v.0, &xb)).fold(0.0, f64::max) / scale;
        let spread_f = simplex.iter().map(|v| v.1 - fb).fold(0.0, f64::max) / (1.0 + fb.abs());
        if fb.is_finite() && spread_x < stop.theta_tol && spread_f < stop.cost_tol {
            converged = true;
            break;
        }
    }
    let best = simplex[0];
    Ok(FitReport {
        method: Method::Nm,
        theta0,
        theta_hat: Theta::from_array(best.0),
        cost_min: best.1,
        iterations: trajectory.len() - 1,
        residual_evals: evals(),
        converged,
        failure: (!converged).then(|| format!("iteration cap {} reached", stop.nm_max_iterations)),
        trajectory,
    })
}

/// Nelder-Mead on the adjoint residual of `km`.
pub fn nelder_mead_solve(
    theta0: Theta,
    omega: f64,
    km: &KmEstimates,
    cfg: &PdeConfig,
    stop: &StopCriteria,
) -> Result<FitReport> {
    let model = AfpResidual::new(km, omega, cfg)?;
    nelder_mead_with(&model, theta0, stop)
}
