//! Method-of-lines solver for `P_t = D1(A) P_A + D2 P_AA` on `(0, A_max]`.
//!
//! Cell-centred nodes `A_k = (k + 1/2) dA` with the conditioning amplitude on
//! a node. `P = 0` at `A = 0` through an odd ghost value, zero curvature at
//! `A_max`. The drift term is central whenever there is diffusion and upwinded
//! for pure advection (`d = 0`). Upwinding at large cell Peclet numbers would
//! add numerical diffusion of order `|D1| dA / 2`, which swamps `D2` at the
//! conditioning amplitude. Time stepping is TR-BDF2 with its embedded
//! third-order estimate.

use super::tridiag::Tridiagonal;
use super::{AfpSolution, ModelCoeffs, PdeConfig};
use crate::error::{Error, Result};

pub(super) const MAX_STEPS: usize = 500_000;
pub(super) const MAX_CELLS_FACTOR: usize = 100;

/// TR-BDF2 as an ESDIRK: diagonal `D`, explicit weight `W`.
const D: f64 = 1.0 - std::f64::consts::SQRT_2 / 2.0;
const W: f64 = std::f64::consts::SQRT_2 / 4.0;
/// Difference between the second- and third-order weights.
const E1: f64 = (4.0 * W - 1.0) / 3.0;
const E2: f64 = -1.0 / 3.0;
const E3: f64 = 2.0 * D / 3.0;

struct Discretization {
    op: Tridiagonal,
    /// Node of the conditioning amplitude.
    kc: usize,
    da: f64,
}

fn discretize(mc: &ModelCoeffs, a_center: f64, cfg: &PdeConfig) -> Result<Discretization> {
    let reach = cfg.a_ref.unwrap_or(0.0).max(2.0 * a_center);
    let a_max = cfg.a_max_factor * reach;
    let nominal = a_max / cfg.n_cells as f64;
    let kc = (a_center / nominal - 0.5).round().max(0.0) as usize;
    let da = a_center / (kc as f64 + 0.5);
    let n = ((a_max / da - 1e-9).ceil() as usize).max(kc + 3);
    if n > MAX_CELLS_FACTOR * cfg.n_cells {
        return Err(Error::InvalidInput(format!(
            "conditioning amplitude {a_center} is too small for a domain of size {a_max}"
        )));
    }

    Ok(Discretization { op: operator(mc, n, da), kc, da })
}

/// Operator on `n` nodes `(k + 1/2) da`.
pub(super) fn operator(mc: &ModelCoeffs, n: usize, da: f64) -> Tridiagonal {
    let d2 = mc.diffusion();
    let diff = d2 / (da * da);
    let mut op = Tridiagonal::zeros(n);
    for k in 0..n {
        let d1 = mc.drift((k as f64 + 0.5) * da);
        let (lo, di, up) = if d2 > 0.0 {
            (diff - d1 / (2.0 * da), -2.0 * diff, diff + d1 / (2.0 * da))
        } else if d1 > 0.0 {
            (diff, -2.0 * diff - d1 / da, diff + d1 / da)
        } else {
            (diff - d1 / da, -2.0 * diff + d1 / da, diff)
        };
        if k + 1 == n {
            // ghost P_n = 2 P_{n-1} - P_{n-2}: curvature vanishes, drift one-sided
            op.lower[k] = -d1 / da;
            op.diag[k] = d1 / da;
        } else if k == 0 {
            op.diag[k] = di - lo;
            op.upper[k] = up;
        } else {
            op.lower[k] = lo;
            op.diag[k] = di;
            op.upper[k] = up;
        }
    }
    op
}

fn stiffness(mc: &ModelCoeffs, time: f64, reason: impl Into<String>) -> Error {
    Error::Stiffness { theta: mc.theta, time, reason: reason.into() }
}

pub(super) fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() || !(times[0] > 0.0) || times.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::InvalidInput("checkpoints must be positive and nondecreasing".into()));
    }
    Ok(())
}

/// Integrates `w' = M w + g` from `w = 0` for every forcing in `forcings`
/// with shared steps, calling `readout` at each checkpoint. The error norm is
/// the maximum over all components of all vectors.
pub(super) fn integrate(
    mc: &ModelCoeffs,
    op: &Tridiagonal,
    forcings: &[Vec<f64>],
    times: &[f64],
    rel_tol: f64,
    abs_tol: f64,
    mut readout: impl FnMut(usize, &[Vec<f64>]),
) -> Result<()> {
    let m = op.len();
    let nv = forcings.len();
    let zeros = || vec![vec![0.0; m]; nv];
    let mut w = zeros();
    let (mut k1, mut k2, mut k3) = (zeros(), zeros(), zeros());
    let (mut y2, mut y3, mut est) = (zeros(), zeros(), zeros());
    let rhs = |y: &[f64], g: &[f64], out: &mut [f64]| {
        op.apply(y, out);
        out.iter_mut().zip(g).for_each(|(o, g)| *o += g);
    };

    let mut t = 0.0;
    let mut h = times[0].min(1e-6);
    let mut next = 0;
    let mut steps = 0;
    while next < times.len() {
        let target = times[next];
        if target <= t {
            readout(next, &w);
            next += 1;
            continue;
        }
        steps += 1;
        if steps > MAX_STEPS {
            return Err(stiffness(mc, t, "step budget exhausted"));
        }
        let hits = h >= target - t;
        let h_step = if hits { target - t } else { h };

        let fac = op
            .factor_shifted(h_step * D)
            .map_err(|_| stiffness(mc, t, "singular stage matrix"))?;
        let mut err = 0.0f64;
        let mut finite = true;
        for v in 0..nv {
            let g = &forcings[v];
            let (w, k1, k2, k3) = (&w[v], &mut k1[v], &mut k2[v], &mut k3[v]);
            let (y2, y3, est) = (&mut y2[v], &mut y3[v], &mut est[v]);
            rhs(w, g, k1);
            for i in 0..m {
                y2[i] = w[i] + h_step * D * (k1[i] + g[i]);
            }
            fac.solve(y2);
            rhs(y2, g, k2);
            for i in 0..m {
                y3[i] = w[i] + h_step * (W * (k1[i] + k2[i]) + D * g[i]);
            }
            fac.solve(y3);
            rhs(y3, g, k3);
            for i in 0..m {
                est[i] = h_step * (E1 * k1[i] + E2 * k2[i] + E3 * k3[i]);
            }
            fac.solve(est);
            for i in 0..m {
                finite &= y3[i].is_finite();
                let sc = abs_tol + rel_tol * w[i].abs().max(y3[i].abs());
                err = err.max(est[i].abs() / sc);
            }
        }

        if !finite || !err.is_finite() {
            h = h_step * 0.25;
        } else {
            let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-1.0 / 3.0)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                std::mem::swap(&mut w, &mut y3);
                t = if hits { target } else { t + h_step };
                h = if hits { (h_step * grow).max(h) } else { h_step * grow };
            } else {
                h = h_step * grow;
            }
        }
        if h < 1e-14 * t.max(1.0) {
            return Err(stiffness(mc, t, "step size underflow"));
        }
    }
    Ok(())
}

/// Solves the adjoint equation from `P(A, 0) = (A - a_center)^n` and reads
/// `P(a_center, t)` at each checkpoint.
///
/// The unknown is the increment `w = P - P(., 0)`, which starts at zero and
/// carries the tolerance scale.
pub fn solve_afp(mc: &ModelCoeffs, n: usize, a_center: f64, cfg: &PdeConfig) -> Result<AfpSolution> {
    cfg.validate()?;
    if n != 1 && n != 2 {
        return Err(Error::InvalidInput(format!("moment order must be 1 or 2, got {n}")));
    }
    if !(a_center > 0.0 && a_center.is_finite()) {
        return Err(Error::InvalidInput(format!("conditioning amplitude must be positive, got {a_center}")));
    }
    let times = &cfg.checkpoint_times;
    check_times(times)?;
    if mc.theta.d < 0.0 {
        return Err(Error::Domain(format!("noise amplitude d = {} is negative", mc.theta.d)));
    }

    let Discretization { op, kc, da } = discretize(mc, a_center, cfg)?;
    let m = op.len();
    let f: Vec<f64> = (0..m).map(|k| ((k as f64 - kc as f64) * da).powi(n as i32)).collect();
    let mut g = vec![0.0; m];
    op.apply(&f, &mut g);

    let mut values = vec![0.0; times.len()];
    integrate(mc, &op, &[g], times, cfg.rel_tol, cfg.abs_tol, |j, w| values[j] = w[0][kc])?;
    if n == 2 {
        if let Some(v) = values.iter().find(|&&v| v < -1e-12) {
            return Err(stiffness(mc, times[times.len() - 1], format!("second moment became negative ({v:.3e})")));
        }
    }
    Ok(AfpSolution { n, a_center, times: times.clone(), values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Theta;
    use std::f64::consts::TAU;

    fn mc(eps: f64, alpha: f64, d: f64) -> ModelCoeffs {
        ModelCoeffs::new(Theta::from_array([eps, alpha, d]), TAU).unwrap()
    }

    fn cfg(times: Vec<f64>) -> PdeConfig {
        PdeConfig { checkpoint_times: times, ..Default::default() }
    }

    #[test]
    fn node_on_center() {
        let c = cfg(vec![1.0]);
        for a in [0.37, 1.0, 2.0, 3.3] {
            let disc = discretize(&mc(0.1, -0.1, 0.1), a, &c).unwrap();
            assert!(((disc.kc as f64 + 0.5) * disc.da - a).abs() < 1e-12);
            assert!(disc.op.len() as f64 * disc.da >= 1.5 * 2.0 * a - 1e-9);
        }
    }

    #[test]
    fn pure_drift_moments() {
        // d = 0, eps only: A(t) = a e^{eps t/2}, so P1 = a (e^{eps t/2} - 1)
        let m = mc(0.2, 0.0, 0.0);
        let c = PdeConfig { rel_tol: 1e-9, abs_tol: 1e-13, n_cells: 800, ..cfg(vec![0.5, 1.0, 2.0]) };
        let s = solve_afp(&m, 1, 2.0, &c).unwrap();
        for (t, v) in s.times.iter().zip(&s.values) {
            let exact = 2.0 * ((0.1 * t).exp() - 1.0);
            assert!((v / exact - 1.0).abs() < 2e-3, "t = {t}: {v} vs {exact}");
        }
        let s = solve_afp(&m, 2, 2.0, &c).unwrap();
        assert!(s.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn ou_like_diffusion_moment() {
        // eps = alpha = 0 leaves D1 = D2/A, the radius of a planar Brownian
        // motion; for a >> sqrt(D2 t) the second moment is 2 D2 t - (D2 t / a)^2
        let m = mc(0.0, 0.0, 0.1);
        let d2 = m.diffusion();
        let c = cfg(vec![0.1, 0.2, 0.4]);
        let s = solve_afp(&m, 2, 2.0, &c).unwrap();
        for (t, v) in s.times.iter().zip(&s.values) {
            let approx = 2.0 * d2 * t - (d2 * t / 2.0).powi(2);
            assert!((v / approx - 1.0).abs() < 1e-3, "t = {t}: {v} vs {approx}");
        }
    }

    #[test]
    fn invalid_inputs() {
        let m = mc(0.1, -0.1, 0.1);
        assert!(matches!(solve_afp(&m, 3, 1.0, &cfg(vec![1.0])), Err(Error::InvalidInput(_))));
        assert!(matches!(solve_afp(&m, 1, 0.0, &cfg(vec![1.0])), Err(Error::InvalidInput(_))));
        assert!(matches!(solve_afp(&m, 1, 1.0, &cfg(vec![])), Err(Error::InvalidInput(_))));
        assert!(matches!(solve_afp(&m, 1, 1.0, &cfg(vec![2.0, 1.0])), Err(Error::InvalidInput(_))));
        let neg = mc(0.1, -0.1, -0.1);
        let e = solve_afp(&neg, 1, 1.0, &cfg(vec![1.0])).unwrap_err();
        assert!(e.is_recoverable());
    }

    #[test]
    fn repeated_checkpoints() {
        let m = mc(0.1, -0.1, 0.1);
        let s = solve_afp(&m, 1, 2.0, &cfg(vec![0.5, 0.5, 1.0])).unwrap();
        assert_eq!(s.values[0], s.values[1]);
    }
}
