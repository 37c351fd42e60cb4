//! Finite-time Kramers-Moyal coefficients estimated from an envelope record.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{amplitude_range, EnvelopeSeries, SampleGrid};

/// Sub-bins of the `A` histogram per conditioning bin. Odd, so every grid
/// amplitude falls on a sub-bin centre.
pub const A_REFINE: usize = 11;

/// Fraction of missing grid entries above which estimation is refused.
pub const MAX_MISSING_FRACTION: f64 = 0.5;

/// Empirical transition density `P(A, t + tau | a, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalDensity {
    pub source_bin: f64,
    pub lag: f64,
    pub a_centers: Vec<f64>,
    pub mass: Vec<f64>,
    pub pair_count: usize,
}

impl ConditionalDensity {
    /// Trapezoid integral of `mass`.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.a_centers, &self.mass)
    }

    /// `int (A - a)^n P dA` by the trapezoid rule.
    pub fn moment(&self, n: i32) -> f64 {
        let f: Vec<f64> = self
            .a_centers
            .iter()
            .zip(&self.mass)
            .map(|(a, m)| (a - self.source_bin).powi(n) * m)
            .collect();
        trapezoid(&self.a_centers, &f)
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// Histogram geometry shared by all `(i, j)` cells.
///
/// Pairs are binned by shifted increment `a_i + (a(t + tau) - a(t))`, so the
/// finite width of the conditioning bin does not leak into the moments.
#[derive(Debug, Clone)]
struct Layout {
    /// Left edge of conditioning bin 0.
    cond_lo: f64,
    /// Conditioning bin width.
    w: f64,
    n_cond: usize,
    /// Left edge of the `A` domain.
    dom_lo: f64,
    h: f64,
    n_fine: usize,
    /// Sub-bin index whose centre is conditioning centre 0.
    k0: i64,
}

impl Layout {
    fn new(env: &EnvelopeSeries, a0: f64, w: f64, n_cond: usize) -> Result<Self> {
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::InvalidInput(format!("conditioning bin width must be positive, got {w}")));
        }
        let (lo, hi) = amplitude_range(env);
        let cond_lo = a0 - 0.5 * w;
        let cond_hi = cond_lo + n_cond as f64 * w;
        // one empty bin beyond the data on each side, whole bins only
        let pad_lo = 1 + ((cond_lo - lo) / w).ceil().max(0.0) as usize;
        let pad_hi = 1 + ((hi - cond_hi) / w).ceil().max(0.0) as usize;
        let n_fine = (n_cond + pad_lo + pad_hi) * A_REFINE;
        if n_fine > 50_000_000 {
            return Err(Error::InvalidInput("amplitude grid is far narrower than the envelope range".into()));
        }
        let h = w / A_REFINE as f64;
        Ok(Layout {
            cond_lo,
            w,
            n_cond,
            dom_lo: cond_lo - pad_lo as f64 * w,
            h,
            n_fine,
            k0: (pad_lo * A_REFINE + A_REFINE / 2) as i64,
        })
    }

    fn cond_bin(&self, a: f64) -> Option<usize> {
        let b = ((a - self.cond_lo) / self.w).floor();
        if b >= 0.0 && (b as usize) < self.n_cond {
            Some(b as usize)
        } else if b as usize == self.n_cond && a <= self.cond_lo + self.n_cond as f64 * self.w {
            // right edge of the last bin is closed
            Some(self.n_cond - 1)
        } else {
            None
        }
    }

    fn centre_index(&self, i: usize) -> i64 {
        self.k0 + (i * A_REFINE) as i64
    }

    /// Sub-bin of `a_i + delta`.
    fn fine_bin(&self, i: usize, delta: f64) -> usize {
        let k = self.centre_index(i) + (delta / self.h + 0.5).floor() as i64;
        k.clamp(0, self.n_fine as i64 - 1) as usize
    }

    fn centre(&self, k: usize) -> f64 {
        self.dom_lo + (k as f64 + 0.5) * self.h
    }

    /// Counts for every conditioning bin at sample lag `k`, laid out
    /// `[i * n_fine + fine]`, plus per-bin pair totals.
    fn histogram(&self, env: &EnvelopeSeries, bins: &[Option<usize>], k: usize) -> (Vec<u32>, Vec<usize>) {
        let mut hist = vec![0u32; self.n_cond * self.n_fine];
        let mut pairs = vec![0usize; self.n_cond];
        let r = env.valid_range();
        let a = &env.amplitudes;
        if r.end >= r.start + k {
            for t in r.start..r.end - k {
                if let Some(i) = bins[t - r.start] {
                    let f = self.fine_bin(i, a[t + k] - a[t]);
                    hist[i * self.n_fine + f] += 1;
                    pairs[i] += 1;
                }
            }
        }
        (hist, pairs)
    }

    /// `(1/(n! tau)) int (A - a_i)^n P dA` for n = 1, 2 from one histogram row.
    fn moments(&self, i: usize, row: &[u32], tau: f64) -> (f64, f64) {
        // trapezoid on uniform centres; the first and last sub-bins are empty
        // by construction, so this equals the plain midpoint sum
        let ends = 0.5 * (row[0] as f64 + row[self.n_fine - 1] as f64);
        let total: f64 = row.iter().map(|&c| c as f64).sum::<f64>() - ends;
        let ci = self.centre_index(i);
        let (mut m1, mut m2) = (0.0, 0.0);
        for (k, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let mut c = c as f64;
            if k == 0 || k == self.n_fine - 1 {
                c *= 0.5;
            }
            let off = (k as i64 - ci) as f64 * self.h;
            m1 += c * off;
            m2 += c * off * off;
        }
        (m1 / total / tau, m2 / total / (2.0 * tau))
    }
}

fn lag_of(env: &EnvelopeSeries, tau: f64) -> Result<usize> {
    let k = (tau / env.dt).round();
    if k < 1.0 || ((k * env.dt - tau) / tau).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("lag {tau} is not a positive multiple of dt = {}", env.dt)));
    }
    Ok(k as usize)
}

/// Histogram of `A` given `a(t)` in the bin of width `bin_width` centred at
/// `a_i`, `tau` later. Edge-flagged samples are ignored. An empty bin gives
/// zero mass and `pair_count = 0`.
pub fn conditional_density(env: &EnvelopeSeries, a_i: f64, tau: f64, bin_width: f64) -> Result<ConditionalDensity> {
    let k = lag_of(env, tau)?;
    let layout = Layout::new(env, a_i, bin_width, 1)?;
    let bins: Vec<Option<usize>> = env.valid().iter().map(|&a| layout.cond_bin(a)).collect();
    let (hist, pairs) = layout.histogram(env, &bins, k);
    let a_centers: Vec<f64> = (0..layout.n_fine).map(|k| layout.centre(k)).collect();
    let mut mass: Vec<f64> = hist.iter().map(|&c| c as f64).collect();
    let z = trapezoid(&a_centers, &mass);
    if z > 0.0 {
        mass.iter_mut().for_each(|m| *m /= z);
    }
    Ok(ConditionalDensity {
        source_bin: a_i,
        lag: k as f64 * env.dt,
        a_centers,
        mass,
        pair_count: pairs[0],
    })
}

/// Data-side coefficients `D^(n)_tau_j(a_i)` with occupancy weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmEstimates {
    pub grid: SampleGrid,
    /// `[i][j]`, `None` where no pairs exist.
    pub d1_hat: Vec<Vec<Option<f64>>>,
    pub d2_hat: Vec<Vec<Option<f64>>>,
    pub weights: Vec<Vec<f64>>,
    pub pair_counts: Vec<Vec<usize>>,
}

impl KmEstimates {
    /// Assembles estimates from explicit matrices, checking shapes and that
    /// missing entries carry zero weight.
    pub fn from_parts(
        grid: SampleGrid,
        d1_hat: Vec<Vec<Option<f64>>>,
        d2_hat: Vec<Vec<Option<f64>>>,
        weights: Vec<Vec<f64>>,
        pair_counts: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let (na, nt) = (grid.n_a(), grid.n_tau());
        let shape_ok = |rows: usize, cols: &dyn Fn(usize) -> usize| rows == na && (0..na).all(|i| cols(i) == nt);
        if !shape_ok(d1_hat.len(), &|i| d1_hat[i].len())
            || !shape_ok(d2_hat.len(), &|i| d2_hat[i].len())
            || !shape_ok(weights.len(), &|i| weights[i].len())
            || !shape_ok(pair_counts.len(), &|i| pair_counts[i].len())
        {
            return Err(Error::InvalidInput(format!("estimate matrices must be {na} x {nt}")));
        }
        for i in 0..na {
            for j in 0..nt {
                let w = weights[i][j];
                if !(w >= 0.0 && w.is_finite()) {
                    return Err(Error::InvalidInput(format!("weight ({i}, {j}) = {w} is not a nonnegative number")));
                }
                let missing = d1_hat[i][j].is_none() || d2_hat[i][j].is_none();
                if missing && w != 0.0 {
                    return Err(Error::InvalidInput(format!("missing entry ({i}, {j}) has nonzero weight")));
                }
                for v in [d1_hat[i][j], d2_hat[i][j]].into_iter().flatten() {
                    if !v.is_finite() {
                        return Err(Error::InvalidInput(format!("entry ({i}, {j}) is not finite")));
                    }
                }
            }
        }
        Ok(KmEstimates { grid, d1_hat, d2_hat, weights, pair_counts })
    }

    pub fn n_a(&self) -> usize {
        self.grid.n_a()
    }

    pub fn n_tau(&self) -> usize {
        self.grid.n_tau()
    }

    /// `D^(n)` at `(i, j)` for `n` in {1, 2}.
    pub fn value(&self, n: usize, i: usize, j: usize) -> Option<f64> {
        match n {
            1 => self.d1_hat[i][j],
            2 => self.d2_hat[i][j],
            _ => panic!("moment order {n} not estimated"),
        }
    }

    pub fn missing_count(&self) -> usize {
        (0..self.n_a())
            .flat_map(|i| (0..self.n_tau()).map(move |j| (i, j)))
            .filter(|&(i, j)| self.d1_hat[i][j].is_none())
            .count()
    }

    /// Entries and weights flattened in `(n, i, j)` order; missing entries are 0
    /// with weight 0.
    pub fn flatten(&self) -> (Vec<f64>, Vec<f64>) {
        let mut values = Vec::with_capacity(2 * self.n_a() * self.n_tau());
        let mut weights = Vec::with_capacity(values.capacity());
        for n in 1..=2 {
            for i in 0..self.n_a() {
                for j in 0..self.n_tau() {
                    match self.value(n, i, j) {
                        Some(v) => {
                            values.push(v);
                            weights.push(self.weights[i][j]);
                        }
                        None => {
                            values.push(0.0);
                            weights.push(0.0);
                        }
                    }
                }
            }
        }
        (values, weights)
    }

    /// Writes `n,i,j,a,tau,value,weight,pairs`; missing values are left empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "i", "j", "a", "tau", "value", "weight", "pairs"])?;
        for n in 1..=2 {
            for i in 0..self.n_a() {
                for j in 0..self.n_tau() {
                    let value = self.value(n, i, j).map(|v| v.to_string()).unwrap_or_default();
                    w.write_record([
                        n.to_string(),
                        i.to_string(),
                        j.to_string(),
                        self.grid.amplitudes[i].to_string(),
                        self.grid.taus[j].to_string(),
                        value,
                        self.weights[i][j].to_string(),
                        self.pair_counts[i][j].to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format of [`KmEstimates::write_csv`].
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            n: usize,
            i: usize,
            j: usize,
            a: f64,
            tau: f64,
            value: Option<f64>,
            weight: f64,
            pairs: usize,
        }
        let mut rdr = csv::Reader::from_reader(input);
        let mut rows = Vec::new();
        for (k, rec) in rdr.deserialize::<Row>().enumerate() {
            let row = rec.map_err(|e| Error::Parse { line: k + 2, message: e.to_string() })?;
            if row.n != 1 && row.n != 2 {
                return Err(Error::Parse { line: k + 2, message: format!("moment order {} not in {{1, 2}}", row.n) });
            }
            rows.push(row);
        }
        let na = rows.iter().map(|r| r.i + 1).max().unwrap_or(0);
        let nt = rows.iter().map(|r| r.j + 1).max().unwrap_or(0);
        if rows.len() != 2 * na * nt {
            return Err(Error::Parse {
                line: rows.len() + 1,
                message: format!("expected {} rows for a {na} x {nt} grid", 2 * na * nt),
            });
        }
        let mut amps = vec![f64::NAN; na];
        let mut taus = vec![f64::NAN; nt];
        let mut d = [vec![vec![None; nt]; na], vec![vec![None; nt]; na]];
        let mut weights = vec![vec![0.0; nt]; na];
        let mut counts = vec![vec![0; nt]; na];
        for r in rows {
            amps[r.i] = r.a;
            taus[r.j] = r.tau;
            d[r.n - 1][r.i][r.j] = r.value;
            weights[r.i][r.j] = r.weight;
            counts[r.i][r.j] = r.pairs;
        }
        let grid = SampleGrid::new(amps, taus)?;
        let [d1, d2] = d;
        KmEstimates::from_parts(grid, d1, d2, weights, counts)
    }
}

/// Estimates `D^(1)`, `D^(2)` on every grid cell from the trapezoid moments
/// of the conditional densities. The conditioning bin width is the
/// amplitude-grid spacing. Weights are the share of pairs at each lag that
/// start in bin `i`.
pub fn finite_time_km(env: &EnvelopeSeries, grid: &SampleGrid) -> Result<KmEstimates> {
    let lags = grid.lags(env.dt)?;
    let amps = &grid.amplitudes;
    let w = grid.amplitude_step();
    for (i, pair) in amps.windows(2).enumerate() {
        if ((pair[1] - pair[0]) / w - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!("amplitude grid is not uniform at index {i}")));
        }
    }
    let layout = Layout::new(env, amps[0], w, grid.n_a())?;
    let bins: Vec<Option<usize>> = env.valid().iter().map(|&a| layout.cond_bin(a)).collect();

    let columns: Vec<(Vec<(Option<f64>, Option<f64>)>, Vec<usize>)> = lags
        .par_iter()
        .zip(&grid.taus)
        .map(|(&k, &tau)| {
            let (hist, pairs) = layout.histogram(env, &bins, k);
            let vals = (0..grid.n_a())
                .map(|i| {
                    if pairs[i] == 0 {
                        (None, None)
                    } else {
                        let (d1, d2) = layout.moments(i, &hist[i * layout.n_fine..(i + 1) * layout.n_fine], tau);
                        (Some(d1), Some(d2))
                    }
                })
                .collect();
            (vals, pairs)
        })
        .collect();

    let (na, nt) = (grid.n_a(), grid.n_tau());
    let mut d1 = vec![vec![None; nt]; na];
    let mut d2 = vec![vec![None; nt]; na];
    let mut weights = vec![vec![0.0; nt]; na];
    let mut counts = vec![vec![0; nt]; na];
    let mut missing = 0;
    for (j, (vals, pairs)) in columns.into_iter().enumerate() {
        let total: usize = pairs.iter().sum();
        for i in 0..na {
            d1[i][j] = vals[i].0;
            d2[i][j] = vals[i].1;
            counts[i][j] = pairs[i];
            if pairs[i] == 0 {
                missing += 1;
            } else {
                weights[i][j] = pairs[i] as f64 / total as f64;
            }
        }
    }
    let total = na * nt;
    if missing as f64 > MAX_MISSING_FRACTION * total as f64 {
        return Err(Error::InsufficientData { missing, total });
    }
    KmEstimates::from_parts(grid.clone(), d1, d2, weights, counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{select_amplitude_grid, select_tau_grid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::TAU;

    fn env(values: Vec<f64>, dt: f64) -> EnvelopeSeries {
        EnvelopeSeries::new(0.0, dt, values, 0).unwrap()
    }

    /// Exact OU sampling: mean `mu`, rate `lambda`, stationary std `sigma`.
    fn ou(n: usize, dt: f64, mu: f64, lambda: f64, sigma: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = (-lambda * dt).exp();
        let s = sigma * (1.0 - phi * phi).sqrt();
        let mut x = mu;
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                x = mu + phi * (x - mu) + s * z;
                x
            })
            .collect()
    }

    /// Euler-Maruyama for `da = D1(a) dt + sqrt(2 D2) dW`, recorded every
    /// `every` steps.
    fn amplitude_sde(eps: f64, alpha: f64, d: f64, omega: f64, n: usize, dt: f64, every: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d2 = d / (2.0 * omega * omega);
        let h = dt / every as f64;
        let mut a = 2.0;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            for _ in 0..every {
                let d1 = eps * a / 2.0 + alpha * a.powi(3) / 8.0 + d2 / a;
                let z: f64 = StandardNormal.sample(&mut rng);
                a = (a + d1 * h + (2.0 * d2 * h).sqrt() * z).abs();
            }
            out.push(a);
        }
        out
    }

    #[test]
    fn constant_envelope_is_persistent() {
        let e = env(vec![1.5; 400], 0.01);
        let cd = conditional_density(&e, 1.5, 0.05, 0.1).unwrap();
        assert_eq!(cd.pair_count, 395);
        let k = cd.mass.iter().position(|&m| m > 0.0).unwrap();
        assert!(cd.mass.iter().enumerate().all(|(j, &m)| j == k || m == 0.0));
        assert!((cd.a_centers[k] - 1.5).abs() < 1e-12);
        assert!((cd.integral() - 1.0).abs() < 1e-9);

        let grid = SampleGrid::new(vec![1.5, 2.0], vec![0.01, 0.05]).unwrap();
        let km = finite_time_km(&e, &grid).unwrap();
        for j in 0..2 {
            assert_eq!(km.d1_hat[0][j], Some(0.0));
            assert_eq!(km.d2_hat[0][j], Some(0.0));
            assert_eq!(km.d1_hat[1][j], None);
            assert_eq!(km.weights[1][j], 0.0);
        }
    }

    #[test]
    fn empty_bin_has_no_pairs() {
        let e = env(vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0], 0.1);
        let cd = conditional_density(&e, 1.5, 0.1, 0.2).unwrap();
        assert_eq!(cd.pair_count, 0);
        assert!(cd.mass.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn density_normalized() {
        let e = env(ou(20_000, 0.01, 3.0, 1.0, 0.2, 1), 0.01);
        for (a, tau) in [(3.0, 0.01), (2.8, 0.5), (3.3, 2.0)] {
            let cd = conditional_density(&e, a, tau, 0.02).unwrap();
            assert!(cd.pair_count > 0);
            assert!((cd.integral() - 1.0).abs() < 1e-9);
            assert!(cd.mass.iter().all(|&m| m >= 0.0));
        }
    }

    #[test]
    fn ou_conditional_mean() {
        let (mu, lambda, sigma, dt) = (3.0, 2.0, 0.2, 0.01);
        let e = env(ou(400_000, dt, mu, lambda, sigma, 2), dt);
        let tau = 0.1;
        let k = 10.0;
        for a in [2.8, 3.0, 3.2] {
            let cd = conditional_density(&e, a, tau, 0.01).unwrap();
            let mean = a + cd.moment(1);
            let phi = (-lambda * tau).exp();
            let expect = mu + (a - mu) * phi;
            let cond_sd = sigma * (1.0 - phi * phi).sqrt();
            // overlapping pairs: about one independent increment per lag
            let se = cond_sd / (cd.pair_count as f64 / k).sqrt();
            assert!((mean - expect).abs() < 2.0 * se, "a = {a}: {mean} vs {expect} (se {se})");
        }
    }

    #[test]
    fn weights_sum_to_one_per_lag() {
        let e = env(ou(50_000, 0.01, 3.0, 1.0, 0.2, 3), 0.01);
        let amps = select_amplitude_grid(&e, 20).unwrap();
        let grid = SampleGrid::new(amps, vec![0.01, 0.1, 1.0]).unwrap();
        let km = finite_time_km(&e, &grid).unwrap();
        for j in 0..3 {
            let s: f64 = (0..20).map(|i| km.weights[i][j]).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        for i in 0..20 {
            for j in 0..3 {
                assert_eq!(km.d1_hat[i][j].is_none(), km.pair_counts[i][j] == 0);
                assert!(km.d1_hat[i][j].is_none_or(f64::is_finite));
            }
        }
    }

    #[test]
    fn too_many_missing() {
        // two-level envelope leaves the middle bins empty
        let e = env((0..500).map(|k| if k % 2 == 0 { 1.0 } else { 2.0 }).collect(), 0.1);
        let grid = SampleGrid::new(vec![1.0, 1.25, 1.5, 1.75, 2.0], vec![0.1, 0.2]).unwrap();
        assert!(matches!(finite_time_km(&e, &grid), Err(Error::InsufficientData { missing: 6, total: 10 })));
    }

    #[test]
    fn amplitude_sde_oracle() {
        let (eps, alpha, d, omega) = (0.1, -0.1, 0.1, TAU);
        let dt = 0.01;
        let e = env(amplitude_sde(eps, alpha, d, omega, 400_000, dt, 10), dt);
        let amps = select_amplitude_grid(&e, 50).unwrap();
        let sel = select_tau_grid(&e, true, 100).unwrap();
        let grid = SampleGrid::new(amps, sel.taus).unwrap();
        let km = finite_time_km(&e, &grid).unwrap();

        let d2_true = d / (2.0 * omega * omega);
        let wmax = (0..50).map(|i| km.weights[i][0]).fold(0.0, f64::max);
        let mut checked = 0;
        for i in 0..50 {
            if km.weights[i][0] >= 0.5 * wmax {
                let v = km.d2_hat[i][0].unwrap();
                assert!((v / d2_true - 1.0).abs() < 0.15, "a = {}: D2 = {v}", grid.amplitudes[i]);
                checked += 1;
            }
        }
        assert!(checked >= 3);

        let drift = |a: f64| eps * a / 2.0 + alpha * a.powi(3) / 8.0 + d2_true / a;
        let (mut num, mut den) = (0.0, 0.0);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..50 {
            if let Some(v) = km.d1_hat[i][0] {
                let t = drift(grid.amplitudes[i]);
                num += km.weights[i][0] * (v - t).powi(2);
                den += km.weights[i][0];
                lo = lo.min(t);
                hi = hi.max(t);
            }
        }
        let rms = (num / den).sqrt();
        assert!(rms <= 0.15 * (hi - lo), "weighted rms {rms}, range {}", hi - lo);
    }

    #[test]
    fn csv_round_trip() {
        let e = env(ou(20_000, 0.01, 3.0, 1.0, 0.2, 4), 0.01);
        let amps = select_amplitude_grid(&e, 8).unwrap();
        let grid = SampleGrid::new(amps, vec![0.01, 0.02, 0.05]).unwrap();
        let km = finite_time_km(&e, &grid).unwrap();
        let mut buf = Vec::new();
        km.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("n,i,j,a,tau,value,weight,pairs\n"));
        assert_eq!(text.lines().count(), 1 + 2 * 8 * 3);
        let back = KmEstimates::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, km);
    }

    #[test]
    fn flatten_order_and_missing() {
        let grid = SampleGrid::new(vec![1.0, 2.0], vec![0.1, 0.2]).unwrap();
        let km = KmEstimates::from_parts(
            grid,
            vec![vec![Some(1.0), Some(2.0)], vec![None, Some(4.0)]],
            vec![vec![Some(5.0), Some(6.0)], vec![None, Some(8.0)]],
            vec![vec![1.0, 0.5], vec![0.0, 0.5]],
            vec![vec![3, 1], vec![0, 1]],
        )
        .unwrap();
        let (v, w) = km.flatten();
        assert_eq!(v, vec![1.0, 2.0, 0.0, 4.0, 5.0, 6.0, 0.0, 8.0]);
        assert_eq!(w, vec![1.0, 0.5, 0.0, 0.5, 1.0, 0.5, 0.0, 0.5]);
        assert_eq!(km.missing_count(), 1);
    }

    #[test]
    fn missing_with_weight_rejected() {
        let grid = SampleGrid::new(vec![1.0, 2.0], vec![0.1, 0.2]).unwrap();
        let r = KmEstimates::from_parts(
            grid,
            vec![vec![None, Some(2.0)], vec![Some(1.0), Some(4.0)]],
            vec![vec![None, Some(6.0)], vec![Some(1.0), Some(8.0)]],
            vec![vec![0.1, 0.5], vec![0.9, 0.5]],
            vec![vec![0, 1], vec![3, 1]],
        );
        assert!(r.is_err());
    }
}
