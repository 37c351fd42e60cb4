use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use crate::afp::{model_finite_time_km, ModelCoeffs, PdeConfig};
use crate::error::{Error, Result};
use crate::km::KmEstimates;
use crate::model::Theta;

/// `rho = D_hat - D(theta)` in `(n, i, j)` order with the diagonal weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub entries: Vec<f64>,
    pub weights: Vec<f64>,
    /// Value of the evaluation counter after this evaluation.
    pub eval_token: usize,
}

impl Residual {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Mean weighted square over all entries, including zero-weight ones.
    pub fn cost(&self) -> f64 {
        weighted_sum(&self.entries, &self.weights) / self.entries.len() as f64
    }
}

fn weighted_sum(entries: &[f64], weights: &[f64]) -> f64 {
    entries.iter().zip(weights).map(|(r, w)| w * r * r).sum()
}

/// `E = sum(w rho^2) / (2 N_a N_tau)`.
pub fn cost(res: &Residual, n_a: usize, n_tau: usize) -> f64 {
    weighted_sum(&res.entries, &res.weights) / (2 * n_a * n_tau) as f64
}

/// Anything the optimizers can minimize. Every call to `evaluate` counts as
/// one residual evaluation, whether or not it succeeds.
pub trait ResidualModel: Sync {
    fn evaluate(&self, theta: &Theta) -> Result<Residual>;
    fn evaluations(&self) -> usize;
}

/// The data-versus-adjoint residual.
#[derive(Debug)]
pub struct AfpResidual<'a> {
    km: &'a KmEstimates,
    omega: f64,
    cfg: PdeConfig,
    values: Vec<f64>,
    weights: Vec<f64>,
    counter: AtomicUsize,
}

impl<'a> AfpResidual<'a> {
    pub fn new(km: &'a KmEstimates, omega: f64, cfg: &PdeConfig) -> Result<Self> {
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::InvalidInput(format!("omega must be positive, got {omega}")));
        }
        cfg.validate()?;
        let (values, weights) = km.flatten();
        if weights.iter().all(|&w| w == 0.0) {
            return Err(Error::InsufficientData { missing: values.len(), total: values.len() });
        }
        Ok(AfpResidual { km, omega, cfg: cfg.for_grid(&km.grid), values, weights, counter: AtomicUsize::new(0) })
    }

    pub fn estimates(&self) -> &KmEstimates {
        self.km
    }
}

impl ResidualModel for AfpResidual<'_> {
    fn evaluate(&self, theta: &Theta) -> Result<Residual> {
        let token = self.counter.fetch_add(1, Ordering::SeqCst) + 1;
        let mc = ModelCoeffs::new(*theta, self.omega)?;
        let model = model_finite_time_km(&mc, &self.km.grid, &self.cfg)?;
        let (na, nt) = (self.km.n_a(), self.km.n_tau());
        let mut entries = Vec::with_capacity(self.values.len());
        for n in 1..=2 {
            for i in 0..na {
                for j in 0..nt {
                    let k = entries.len();
                    entries.push(if self.weights[k] > 0.0 { self.values[k] - model.value(n, i, j) } else { 0.0 });
                }
            }
        }
        Ok(Residual { entries, weights: self.weights.clone(), eval_token: token })
    }

    fn evaluations(&self) -> usize {
        self.counter.load(Ordering::SeqCst)
    }
}

/// A residual given by a closure; used for synthetic oracles and testing.
pub struct FnResidual<F> {
    f: F,
    weights: Vec<f64>,
    counter: AtomicUsize,
}

impl<F> FnResidual<F>
where
    F: Fn(&Theta) -> Result<Vec<f64>> + Sync,
{
    pub fn new(weights: Vec<f64>, f: F) -> Self {
        FnResidual { f, weights, counter: AtomicUsize::new(0) }
    }
}

impl<F> ResidualModel for FnResidual<F>
where
    F: Fn(&Theta) -> Result<Vec<f64>> + Sync,
{
    fn evaluate(&self, theta: &Theta) -> Result<Residual> {
        let token = self.counter.fetch_add(1, Ordering::SeqCst) + 1;
        let entries = (self.f)(theta)?;
        if entries.len() != self.weights.len() {
            return Err(Error::InvalidInput(format!(
                "residual has {} entries but {} weights",
                entries.len(),
                self.weights.len()
            )));
        }
        Ok(Residual { entries, weights: self.weights.clone(), eval_token: token })
    }

    fn evaluations(&self) -> usize {
        self.counter.load(Ordering::SeqCst)
    }
}

/// One-shot residual evaluation.
pub fn residual(theta: &Theta, omega: f64, km: &KmEstimates, cfg: &PdeConfig) -> Result<Residual> {
    AfpResidual::new(km, omega, cfg)?.evaluate(theta)
}

pub(crate) const COORDINATES: [&str; 3] = ["epsilon", "alpha", "d"];

/// Forward-difference columns `d rho / d theta_k` with their steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub columns: [Vec<f64>; 3],
    pub steps: [f64; 3],
}

impl Jacobian {
    /// `(J^T P J, J^T P rho)`.
    pub fn normal_equations(&self, res: &Residual) -> ([[f64; 3]; 3], [f64; 3]) {
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for a in 0..3 {
            for b in a..3 {
                let s: f64 = self.columns[a]
                    .iter()
                    .zip(&self.columns[b])
                    .zip(&res.weights)
                    .map(|((x, y), w)| w * x * y)
                    .sum();
                jtj[a][b] = s;
                jtj[b][a] = s;
            }
            jtr[a] = self.columns[a].iter().zip(&res.entries).zip(&res.weights).map(|((x, r), w)| w * x * r).sum();
        }
        (jtj, jtr)
    }
}

/// Three perturbed evaluations on top of the cached `base = rho(theta)`, run
/// concurrently. A failing column is reported by coordinate name, the first
/// in `(epsilon, alpha, d)` order when several fail.
pub fn fd_jacobian_with<M: ResidualModel + ?Sized>(model: &M, theta: &Theta, base: &Residual) -> Result<Jacobian> {
    let steps = theta.fd_steps();
    let x = theta.to_array();
    let cols: Vec<Result<Vec<f64>>> = (0..3)
        .into_par_iter()
        .map(|k| {
            let mut xp = x;
            xp[k] += steps[k];
            let r = model.evaluate(&Theta::from_array(xp))?;
            Ok(r.entries.iter().zip(&base.entries).map(|(p, b)| (p - b) / steps[k]).collect())
        })
        .collect();
    let mut columns: [Vec<f64>; 3] = Default::default();
    for (k, col) in cols.into_iter().enumerate() {
        columns[k] = col.map_err(|e| Error::Jacobian { coordinate: COORDINATES[k], source: Box::new(e) })?;
    }
    Ok(Jacobian { columns, steps })
}

/// Jacobian of the data residual at `theta`: one base evaluation plus three.
pub fn fd_jacobian(theta: &Theta, omega: f64, km: &KmEstimates, cfg: &PdeConfig) -> Result<Jacobian> {
    let model = AfpResidual::new(km, omega, cfg)?;
    let base = model.evaluate(theta)?;
    fd_jacobian_with(&model, theta, &base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::SampleGrid;
    use std::f64::consts::TAU;

    fn synthetic_km(theta: &Theta) -> KmEstimates {
        let grid = SampleGrid::new(vec![1.0, 1.5, 2.0, 2.5], vec![0.2, 0.4, 0.6]).unwrap();
        let mc = ModelCoeffs::new(*theta, TAU).unwrap();
        let m = model_finite_time_km(&mc, &grid, &PdeConfig::default()).unwrap();
        let wrap = |rows: &Vec<Vec<f64>>| rows.iter().map(|r| r.iter().map(|&v| Some(v)).collect()).collect();
        KmEstimates::from_parts(grid, wrap(&m.d1), wrap(&m.d2), vec![vec![1.0; 3]; 4], vec![vec![100; 3]; 4]).unwrap()
    }

    #[test]
    fn self_consistent_zero() {
        let th = Theta::from_array([0.1, -0.1, 0.1]);
        let km = synthetic_km(&th);
        let model = AfpResidual::new(&km, TAU, &PdeConfig::default()).unwrap();
        let r = model.evaluate(&th).unwrap();
        assert_eq!(r.len(), 24);
        assert!(r.entries.iter().all(|e| e.abs() < 1e-12));
        assert_eq!(r.eval_token, 1);
        assert_eq!(model.evaluations(), 1);
    }

    #[test]
    fn perturbed_entry_shifts_one_position() {
        let th = Theta::from_array([0.1, -0.1, 0.1]);
        let mut km = synthetic_km(&th);
        let base = residual(&th, TAU, &km, &PdeConfig::default()).unwrap();
        km.d2_hat[2][1] = km.d2_hat[2][1].map(|v| v + 0.25);
        let r = residual(&th, TAU, &km, &PdeConfig::default()).unwrap();
        let pos = 12 + 2 * 3 + 1;
        for (k, (a, b)) in r.entries.iter().zip(&base.entries).enumerate() {
            let expect = if k == pos { 0.25 } else { 0.0 };
            assert!((a - b - expect).abs() < 1e-12, "entry {k}");
        }
    }

    #[test]
    fn cost_closed_forms() {
        let k = 6;
        let mut r = Residual { entries: vec![1.0; 2 * k], weights: vec![1.0; 2 * k], eval_token: 0 };
        assert_eq!(cost(&r, 2, 3), 1.0);
        assert_eq!(r.cost(), 1.0);
        r.weights.iter_mut().for_each(|w| *w *= 3.5);
        assert_eq!(cost(&r, 2, 3), 3.5);
        r.entries.iter_mut().for_each(|e| *e = 0.0);
        assert_eq!(cost(&r, 2, 3), 0.0);
    }

    #[test]
    fn affine_jacobian_is_exact() {
        let m = [[1.0, 2.0, -0.5], [0.3, -1.0, 4.0], [2.0, 0.0, 1.0], [-1.5, 0.7, 0.2]];
        let b = [0.1, -0.2, 0.3, 0.05];
        let model = FnResidual::new(vec![1.0; 4], move |th: &Theta| {
            let x = th.to_array();
            Ok((0..4).map(|r| m[r][0] * x[0] + m[r][1] * x[1] + m[r][2] * x[2] + b[r]).collect())
        });
        for th in [[0.0, 0.0, 0.0], [0.1, -0.1, 0.1], [3.0, -20.0, 0.5]] {
            let th = Theta::from_array(th);
            let base = model.evaluate(&th).unwrap();
            let j = fd_jacobian_with(&model, &th, &base).unwrap();
            for (c, col) in j.columns.iter().enumerate() {
                for (r, v) in col.iter().enumerate() {
                    assert!((v - m[r][c]).abs() < 1e-8, "{v} vs {}", m[r][c]);
                }
            }
        }
        assert_eq!(model.evaluations(), 12);
        assert_eq!(Theta::from_array([0.0; 3]).fd_steps(), [1e-5; 3]);
    }

    #[test]
    fn failing_column_is_named() {
        let model = FnResidual::new(vec![1.0], |th: &Theta| {
            if th.alpha > 0.0 {
                Err(Error::Domain("alpha must stay negative".into()))
            } else {
                Ok(vec![th.epsilon])
            }
        });
        let th = Theta::from_array([0.1, 0.0, 0.1]);
        let base = model.evaluate(&th).unwrap();
        match fd_jacobian_with(&model, &th, &base) {
            Err(e @ Error::Jacobian { coordinate: "alpha", .. }) => assert!(e.is_recoverable()),
            other => panic!("unexpected {other:?}"),
        }
    }
}
