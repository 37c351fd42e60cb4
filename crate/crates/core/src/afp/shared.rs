//! All conditioning amplitudes on one spatial mesh.
//!
//! The adjoint operator does not depend on the conditioning amplitude, and
//! `(A - a)^n` is a combination of `1`, `A` and `A^2`. Propagating those three
//! monomials once gives every `P^dagger(a_i, t)` by recombination, read at
//! `a_i` by cubic interpolation of the recombined increment. The recombination cancels terms of size `a D1 t` against `D2 t`,
//! so the monomials are integrated with a tighter tolerance than a single
//! solve.

use super::solver::{check_times, integrate, MAX_CELLS_FACTOR};
use super::tridiag::Tridiagonal;
use super::{ModelCoeffs, PdeConfig};
use crate::error::{Error, Result};

/// Tolerance tightening for the monomial solves.
const TOL_FACTOR: f64 = 1e-2;

struct Mesh {
    op: Tridiagonal,
    da: f64,
}

/// Cell-centred nodes `(k + 1/2) dA`, as for a single solve, so the drift
/// singularity cancels the ghost coupling at the first node.
fn mesh(mc: &ModelCoeffs, amplitudes: &[f64], cfg: &PdeConfig) -> Result<Mesh> {
    let a_last = amplitudes[amplitudes.len() - 1];
    let reach = cfg.a_ref.unwrap_or(a_last).max(2.0 * a_last);
    let a_max = cfg.a_max_factor * reach;
    // the interpolation stencil wants two nodes below the smallest amplitude
    let da = (a_max / cfg.n_cells as f64).min(amplitudes[0] / 1.5);
    let n = ((a_max / da).ceil() as usize).max(4);
    if n > MAX_CELLS_FACTOR * cfg.n_cells {
        return Err(Error::InvalidInput(format!(
            "amplitude {} is too small for a domain of size {a_max}",
            amplitudes[0]
        )));
    }
    Ok(Mesh { op: super::solver::operator(mc, n, da), da })
}

/// Four-point Lagrange weights for position `a` on nodes `(k + 1/2) da`.
fn stencil(a: f64, da: f64, n: usize) -> (usize, [f64; 4]) {
    let x = a / da - 0.5;
    let base = (x.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    let mut w = [1.0; 4];
    for (p, wp) in w.iter_mut().enumerate() {
        for q in 0..4 {
            if q != p {
                *wp *= (x - (base + q) as f64) / (p as f64 - q as f64);
            }
        }
    }
    (base, w)
}

/// `P^dagger(a_i, tau_j)` for `n = 1, 2`, indexed `[n - 1][i][j]`.
pub(super) fn solve_shared(mc: &ModelCoeffs, amplitudes: &[f64], cfg: &PdeConfig) -> Result<[Vec<Vec<f64>>; 2]> {
    cfg.validate()?;
    let times = &cfg.checkpoint_times;
    check_times(times)?;
    if amplitudes.len() < 2 || !(amplitudes[0] > 0.0) || amplitudes.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("amplitudes must be positive and increasing".into()));
    }
    if mc.theta.d < 0.0 {
        return Err(Error::Domain(format!("noise amplitude d = {} is negative", mc.theta.d)));
    }
    let Mesh { op, da } = mesh(mc, amplitudes, cfg)?;
    let m = op.len();
    let forcings: Vec<Vec<f64>> = (0..3)
        .map(|p| {
            let f: Vec<f64> = (0..m).map(|k| ((k as f64 + 0.5) * da).powi(p)).collect();
            let mut g = vec![0.0; m];
            op.apply(&f, &mut g);
            g
        })
        .collect();

    let na = amplitudes.len();
    let nt = times.len();
    let mut p1 = vec![vec![0.0; nt]; na];
    let mut p2 = vec![vec![0.0; nt]; na];
    let stencils: Vec<_> = amplitudes.iter().map(|&a| stencil(a, da, m)).collect();
    integrate(mc, &op, &forcings, times, cfg.rel_tol * TOL_FACTOR, cfg.abs_tol * TOL_FACTOR, |j, v| {
        for (i, (&a, (base, w))) in amplitudes.iter().zip(&stencils).enumerate() {
            let (mut s1, mut s2) = (0.0, 0.0);
            for (q, wq) in w.iter().enumerate() {
                let k = base + q;
                s1 += wq * (v[1][k] - a * v[0][k]);
                s2 += wq * (v[2][k] - 2.0 * a * v[1][k] + a * a * v[0][k]);
            }
            p1[i][j] = s1;
            p2[i][j] = s2;
        }
    })?;
    if let Some(v) = p2.iter().flatten().find(|&&v| v < -1e-12) {
        return Err(Error::Stiffness {
            theta: mc.theta,
            time: times[nt - 1],
            reason: format!("second moment became negative ({v:.3e})"),
        });
    }
    Ok([p1, p2])
}

#[cfg(test)]
mod tests {
    use super::super::solve_afp;
    use super::*;
    use crate::model::Theta;
    use std::f64::consts::TAU;

    #[test]
    fn mesh_and_stencil() {
        let mc = ModelCoeffs::new(Theta::from_array([0.1, -0.1, 0.1]), TAU).unwrap();
        let amps: Vec<f64> = (0..50).map(|i| 1.37 + 0.023 * i as f64).collect();
        let cfg = PdeConfig::default();
        let mesh = mesh(&mc, &amps, &cfg).unwrap();
        assert!(mesh.op.len() as f64 * mesh.da >= 3.0 * amps[49] - 1e-9);
        // the stencil reproduces cubics exactly
        for &a in &amps {
            let (base, w) = stencil(a, mesh.da, mesh.op.len());
            let v: f64 = (0..4).map(|q| w[q] * ((base + q) as f64 + 0.5).powi(3) * mesh.da.powi(3)).sum();
            assert!((v - a.powi(3)).abs() < 1e-12);
        }
    }

    #[test]
    fn agrees_with_single_solves() {
        for theta in [[0.1, -0.1, 0.1], [-0.2, -0.1, 0.05], [0.3, -0.7, 0.0]] {
            let mc = ModelCoeffs::new(Theta::from_array(theta), TAU).unwrap();
            let amps: Vec<f64> = (0..8).map(|i| 0.8 + 0.25 * i as f64).collect();
            let times: Vec<f64> = (1..=20).map(|j| 0.25 * j as f64).collect();
            let cfg = PdeConfig { checkpoint_times: times, a_ref: Some(amps[7]), ..Default::default() };
            let [p1, p2] = solve_shared(&mc, &amps, &cfg).unwrap();
            for (i, &a) in amps.iter().enumerate() {
                for (n, rows) in [(1, &p1), (2, &p2)] {
                    // without noise the second moment is numerical diffusion only
                    if n == 2 && theta[2] == 0.0 {
                        continue;
                    }
                    let single = solve_afp(&mc, n, a, &cfg).unwrap().values;
                    let scale = single.iter().fold(0.0f64, |s, v| s.max(v.abs()));
                    // pure drift is upwinded, first order in the mesh spacing
                    let tol = if theta[2] == 0.0 { 1e-2 } else { 2e-3 };
                    for (u, v) in rows[i].iter().zip(&single) {
                        assert!((u - v).abs() <= tol * scale, "{theta:?} n={n} a={a}: {u} vs {v}");
                    }
                }
            }
        }
    }
}
