use crate::error::{Error, Result};
use crate::km::KmEstimates;
use crate::model::Theta;

/// Small, stable, subcritical start used when extrapolation fails.
pub const FALLBACK_THETA: Theta = Theta { epsilon: 0.0, alpha: -0.01, d: 1e-3 };

/// Intercept of the least-squares line through `(x, y)`.
fn intercept(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let det = n * sxx - sx * sx;
    (sxx * sy - sx * sxy) / det
}

/// Zero-lag intercept `exp(c0)` of `log |D(tau)| = c1 tau + c0` and the common
/// sign of the entries, or `None` with fewer than two usable lags or mixed
/// signs.
fn extrapolate_row(km: &KmEstimates, n: usize, i: usize) -> Option<(f64, f64)> {
    let (mut x, mut y) = (Vec::new(), Vec::new());
    let (mut pos, mut neg) = (0, 0);
    for (j, &tau) in km.grid.taus.iter().enumerate() {
        match km.value(n, i, j) {
            Some(v) if v != 0.0 && v.is_finite() => {
                if v > 0.0 {
                    pos += 1;
                } else {
                    neg += 1;
                }
                x.push(tau);
                y.push(v.abs().ln());
            }
            _ => {}
        }
    }
    if x.len() < 2 || (pos > 0 && neg > 0) {
        return None;
    }
    let sign = if pos > 0 { 1.0 } else { -1.0 };
    Some((intercept(&x, &y).exp(), sign))
}

/// Initial guess by extrapolating each `(n, a_i)` series to zero lag with an
/// exponential fit, then reading `d` from the diffusion intercepts and
/// `(eps, alpha)` from a least-squares fit of the drift intercepts.
pub fn extrapolation_guess(km: &KmEstimates, omega: f64) -> Result<Theta> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::InvalidInput(format!("omega must be positive, got {omega}")));
    }
    let w2 = omega * omega;
    let bins: Vec<(f64, f64, f64)> = (0..km.n_a())
        .filter_map(|i| {
            let (d1, sign) = extrapolate_row(km, 1, i)?;
            let (d2, _) = extrapolate_row(km, 2, i)?;
            Some((km.grid.amplitudes[i], sign * d1, d2))
        })
        .collect();
    if bins.len() < 2 {
        return Err(Error::Initializer(format!("{} usable amplitude bins, need 2", bins.len())));
    }

    let d = 2.0 * w2 * bins.iter().map(|b| b.2).sum::<f64>() / bins.len() as f64;
    // rows [a/2, a^3/8], right-hand side D1(0) - d / (2 omega^2 a)
    let (mut m11, mut m12, mut m22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(a, d1, _) in &bins {
        let (u, v) = (a / 2.0, a * a * a / 8.0);
        let rhs = d1 - d / (2.0 * w2 * a);
        m11 += u * u;
        m12 += u * v;
        m22 += v * v;
        r1 += u * rhs;
        r2 += v * rhs;
    }
    let det = m11 * m22 - m12 * m12;
    if !(det.abs() > 1e-300 * m11 * m22) || !det.is_finite() {
        return Err(Error::Initializer("drift fit is singular".into()));
    }
    let epsilon = (m22 * r1 - m12 * r2) / det;
    let alpha = (m11 * r2 - m12 * r1) / det;
    let theta = Theta::from_array([epsilon, alpha, d]);
    if !theta.to_array().iter().all(|v| v.is_finite()) {
        return Err(Error::Initializer(format!("non-finite estimate {theta}")));
    }
    Ok(theta)
}

/// [`extrapolation_guess`], falling back to [`FALLBACK_THETA`]; the error is
/// returned alongside so callers can report it.
pub fn initial_guess(km: &KmEstimates, omega: f64) -> (Theta, Option<Error>) {
    match extrapolation_guess(km, omega) {
        Ok(t) => (t, None),
        Err(e) => (FALLBACK_THETA, Some(e)),
    }
}

/// Optimizer start from an initial guess. A guess with `alpha >= 0` has no
/// saturating nonlinearity; its `alpha` is replaced by the fallback value so
/// the optimizers start inside the bounded family.
pub fn optimizer_start(guess: Theta) -> Theta {
    if guess.alpha < 0.0 {
        guess
    } else {
        Theta { alpha: FALLBACK_THETA.alpha, ..guess }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::SampleGrid;
    use std::f64::consts::TAU;

    /// `D = D(a) exp(c1 tau)` per bin; diffusion intercepts scaled by
    /// `exp(spread i)`.
    fn exact_family(theta: Theta, amps: &[f64], spread: f64) -> KmEstimates {
        let taus: Vec<f64> = (1..=10).map(|j| 0.1 * j as f64).collect();
        let w2 = TAU * TAU;
        let d2 = theta.d / (2.0 * w2);
        let d1 = |a: f64| theta.epsilon * a / 2.0 + theta.alpha * a.powi(3) / 8.0 + d2 / a;
        let slope1 = |i: usize| -0.3 + 0.05 * i as f64;
        let d1_hat = amps
            .iter()
            .enumerate()
            .map(|(i, &a)| taus.iter().map(|t| Some(d1(a) * (slope1(i) * t).exp())).collect())
            .collect();
        let d2_hat = amps
            .iter()
            .enumerate()
            .map(|(i, _)| taus.iter().map(|t| Some(d2 * (0.2 * i as f64 * t + spread * i as f64).exp())).collect())
            .collect();
        let grid = SampleGrid::new(amps.to_vec(), taus).unwrap();
        let na = amps.len();
        KmEstimates::from_parts(grid, d1_hat, d2_hat, vec![vec![1.0; 10]; na], vec![vec![10; 10]; na]).unwrap()
    }

    #[test]
    fn exact_on_exponential_family() {
        let theta = Theta::from_array([0.1, -0.1, 0.1]);
        // stay off the drift zero so every bin has a definite sign
        let amps = [0.5, 1.0, 1.5, 2.5, 3.0];
        let km = exact_family(theta, &amps, 0.01);
        // diffusion intercepts vary by bin: d = 2 omega^2 mean(exp c0)
        let w2 = TAU * TAU;
        let expect_d = 2.0 * w2 * (0..5).map(|i| theta.d / (2.0 * w2) * (0.01 * i as f64).exp()).sum::<f64>() / 5.0;
        let got = extrapolation_guess(&km, TAU).unwrap();
        assert!((got.d - expect_d).abs() < 1e-12 * expect_d, "{} vs {expect_d}", got.d);

        // with equal intercepts the triple is recovered exactly
        let km = exact_family(theta, &amps, 0.0);
        let got = extrapolation_guess(&km, TAU).unwrap();
        for (a, b) in got.to_array().iter().zip(theta.to_array()) {
            assert!((a - b).abs() < 1e-12, "{got} vs {theta}");
        }
    }

    #[test]
    fn mixed_sign_bins_are_dropped() {
        let theta = Theta::from_array([0.1, -0.1, 0.1]);
        let amps = [0.5, 1.0, 1.5, 2.5, 3.0];
        let mut km = exact_family(theta, &amps, 0.0);
        let clean = extrapolation_guess(&km, TAU).unwrap();
        // corrupt one bin with a sign flip at one lag: it must be excluded,
        // which leaves an exactly determined fit on the rest
        km.d1_hat[2][4] = km.d1_hat[2][4].map(|v| -v * 100.0);
        let got = extrapolation_guess(&km, TAU).unwrap();
        assert!((got.epsilon - clean.epsilon).abs() < 1e-10);
        assert!((got.alpha - clean.alpha).abs() < 1e-10);
    }

    #[test]
    fn missing_data_fails_and_falls_back() {
        let theta = Theta::from_array([0.1, -0.1, 0.1]);
        let mut km = exact_family(theta, &[1.0, 2.5], 0.0);
        for i in 0..2 {
            for j in 0..10 {
                km.d1_hat[i][j] = None;
                km.d2_hat[i][j] = None;
                km.weights[i][j] = 0.0;
            }
        }
        assert!(matches!(extrapolation_guess(&km, TAU), Err(Error::Initializer(_))));
        let (t, e) = initial_guess(&km, TAU);
        assert_eq!(t, FALLBACK_THETA);
        assert!(e.is_some());
    }

    #[test]
    fn start_keeps_saturating_guess() {
        let g = Theta::from_array([-0.03, -0.2, 0.05]);
        assert_eq!(optimizer_start(g), g);
        let s = optimizer_start(Theta::from_array([-0.03, 0.08, 0.05]));
        assert_eq!(s.to_array(), [-0.03, FALLBACK_THETA.alpha, 0.05]);
    }
}
