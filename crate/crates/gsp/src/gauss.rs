//! Gaussian sufficient statistics, partial correlations, Fisher-z testing
//! and the BIC score for linear Gaussian models.

use crate::ci::CiOracle;
use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::set::NodeSet;
use nalgebra::DMatrix;

/// Covariance-based sufficient statistics, either exact (a population
/// covariance) or derived from an `n x p` sample matrix. The zero-mean model
/// is used throughout: sample covariance is `XᵀX / n` without centering.
#[derive(Clone, Debug)]
pub struct GaussianSuffStats {
    cov: DMatrix<f64>,
    n: Option<usize>,
}

impl GaussianSuffStats {
    /// Wraps an exact covariance matrix. Symmetry and positive definiteness
    /// (smallest eigenvalue above `-1e-10`) are validated up front.
    pub fn from_covariance(cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != cov.ncols() {
            return Err(Error::InvalidInput("covariance must be square".into()));
        }
        let p = cov.nrows();
        for i in 0..p {
            for j in i + 1..p {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-8 * (1.0 + cov[(i, j)].abs()) {
                    return Err(Error::InvalidInput(format!(
                        "covariance not symmetric at ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        let min_eig = cov
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b));
        if min_eig <= -1e-10 {
            return Err(Error::Numerical(format!(
                "covariance is not positive definite (min eigenvalue {min_eig:.3e})"
            )));
        }
        Ok(Self { cov, n: None })
    }

    /// Derives statistics from an `n x p` sample matrix.
    pub fn from_samples(samples: &DMatrix<f64>) -> Result<Self> {
        let n = samples.nrows();
        let p = samples.ncols();
        if n == 0 || p == 0 {
            return Err(Error::InvalidInput("empty sample matrix".into()));
        }
        let cov = samples.transpose() * samples / n as f64;
        Ok(Self { cov, n: Some(n) })
    }

    /// Attaches a nominal sample size to exact statistics so that
    /// sample-size-dependent scores (BIC) can be evaluated on them.
    pub fn with_nominal_n(mut self, n: usize) -> Self {
        self.n = Some(n);
        self
    }

    pub fn p(&self) -> usize {
        self.cov.nrows()
    }

    pub fn n(&self) -> Option<usize> {
        self.n
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// The partial correlation `ρ_{i,j|S}`, computed from the inverse of the
    /// covariance submatrix on `{i, j} ∪ S`. Near-singular submatrices (a
    /// Cholesky pivot below `1e-12` in squared magnitude) raise rather than
    /// clamp.
    pub fn partial_correlation(&self, i: usize, j: usize, s: &NodeSet) -> Result<f64> {
        let p = self.p();
        if i >= p || j >= p || s.iter().any(|v| v >= p) {
            return Err(Error::InvalidInput("node out of range".into()));
        }
        if i == j || s.contains(i) || s.contains(j) {
            return Err(Error::InvalidInput(
                "partial correlation arguments must be distinct".into(),
            ));
        }
        let mut idx: Vec<usize> = s.iter().collect();
        idx.push(i);
        idx.push(j);
        idx.sort_unstable();
        let k = idx.len();
        let sub = DMatrix::from_fn(k, k, |r, c| self.cov[(idx[r], idx[c])]);
        let chol = sub.cholesky().ok_or_else(|| {
            Error::Numerical(format!(
                "singular covariance submatrix on {:?}",
                idx.iter().map(|&v| v + 1).collect::<Vec<_>>()
            ))
        })?;
        let min_pivot = (0..k).fold(f64::INFINITY, |a, d| a.min(chol.l_dirty()[(d, d)]));
        if min_pivot * min_pivot < 1e-12 {
            return Err(Error::Numerical(format!(
                "near-singular covariance submatrix on {:?}",
                idx.iter().map(|&v| v + 1).collect::<Vec<_>>()
            )));
        }
        let theta = chol.inverse();
        let a = idx.binary_search(&i).unwrap();
        let b = idx.binary_search(&j).unwrap();
        // Read the upper-triangle entry so the result is exactly symmetric
        // in (i, j) even when the computed inverse is not.
        let off = theta[(a.min(b), a.max(b))];
        let rho = -off / (theta[(a, a)] * theta[(b, b)]).sqrt();
        Ok(rho.clamp(-1.0, 1.0))
    }

    /// MLE residual variance of node `i` regressed on `pa` (zero-mean model).
    pub fn residual_variance(&self, i: usize, pa: &NodeSet) -> Result<f64> {
        if pa.is_empty() {
            return Ok(self.cov[(i, i)]);
        }
        let idx: Vec<usize> = pa.iter().collect();
        let k = idx.len();
        let spp = DMatrix::from_fn(k, k, |r, c| self.cov[(idx[r], idx[c])]);
        let spi = DMatrix::from_fn(k, 1, |r, _| self.cov[(idx[r], i)]);
        let chol = spp.cholesky().ok_or_else(|| {
            Error::Numerical(format!(
                "singular parent covariance for node {}",
                i + 1
            ))
        })?;
        let solved = chol.solve(&spi);
        Ok(self.cov[(i, i)] - (spi.transpose() * solved)[(0, 0)])
    }
}

/// Gaussian linear-SEM BIC of a DAG:
/// `Σ_i [-(n/2)(log(2π σ̂²_i) + 1)] - (log n / 2)(|G| + p)`,
/// with `σ̂²_i` the MLE residual variance of node `i` on its parents.
pub fn bic_score(stats: &GaussianSuffStats, g: &Dag) -> Result<f64> {
    let n = stats.n().ok_or_else(|| {
        Error::InvalidInput("BIC needs a sample size; exact statistics carry none".into())
    })? as f64;
    let mut ll = 0.0;
    for i in 0..g.p() {
        let var = stats.residual_variance(i, g.parents(i))?;
        if var <= 0.0 {
            return Err(Error::Numerical(format!(
                "non-positive residual variance at node {}",
                i + 1
            )));
        }
        ll += -(n / 2.0) * ((2.0 * std::f64::consts::PI * var).ln() + 1.0);
    }
    Ok(ll - (n.ln() / 2.0) * (g.arrow_count() + g.p()) as f64)
}

/// Two-sided Fisher-z test. Returns `true` (independent) iff
/// `sqrt(n - |S| - 3) |ẑ| <= Φ⁻¹(1 - α/2)` with `ẑ = atanh(ρ̂)`.
pub fn fisher_z_test(rho_hat: f64, n: usize, s_size: usize, alpha: f64) -> Result<bool> {
    if n <= s_size + 3 {
        return Err(Error::InvalidInput(format!(
            "sample size {n} too small for |S| = {s_size}"
        )));
    }
    if !(0.0..1.0).contains(&alpha) || alpha == 0.0 {
        return Err(Error::InvalidInput(format!("alpha {alpha} out of (0, 1)")));
    }
    if rho_hat.abs() >= 1.0 {
        return Err(Error::InvalidInput(format!(
            "|rho| = {} is not below 1",
            rho_hat.abs()
        )));
    }
    let z = rho_hat.atanh();
    let stat = ((n - s_size - 3) as f64).sqrt() * z.abs();
    Ok(stat <= inverse_normal_cdf(1.0 - alpha / 2.0)?)
}

/// Standard normal CDF via `erfc`; accurate over the whole real line.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn erf_series(t: f64) -> f64 {
    // Alternating Taylor series; used for |t| < 2 where it converges fast.
    let t2 = t * t;
    let mut term = t;
    let mut sum = t;
    for k in 1..200 {
        term *= -t2 / k as f64;
        let add = term / (2 * k + 1) as f64;
        sum += add;
        if add.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum * 2.0 / std::f64::consts::PI.sqrt()
}

fn erfc_cf(t: f64) -> f64 {
    // Continued fraction erfc(t) = e^{-t²}/√π · 1/(t + (1/2)/(t + 1/(t + ...)))
    // evaluated with the modified Lentz scheme; used for t >= 2.
    let tiny = 1e-300;
    let mut f: f64 = t;
    let mut c: f64 = t;
    let mut d: f64 = 0.0;
    for k in 1..400 {
        let a = k as f64 / 2.0;
        d = t + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = t + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-17 {
            break;
        }
    }
    (-t * t).exp() / (std::f64::consts::PI.sqrt() * f)
}

fn erfc(t: f64) -> f64 {
    if t < 0.0 {
        2.0 - erfc(-t)
    } else if t < 2.0 {
        1.0 - erf_series(t)
    } else {
        erfc_cf(t)
    }
}

/// Standard normal quantile `Φ⁻¹(p)`.
///
/// A rational initial approximation is polished by Newton steps against the
/// erf-based CDF; absolute error is far below `1e-9` across `(0, 1)`.
pub fn inverse_normal_cdf(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) || p == 0.0 || p == 1.0 {
        return Err(Error::InvalidInput(format!("quantile level {p} out of (0, 1)")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let pm = p.min(1.0 - p);
    let t = (-2.0 * pm.ln()).sqrt();
    let mut x = t - (2.30753 + 0.27061 * t) / (1.0 + 0.99229 * t + 0.04481 * t * t);
    if p < 0.5 {
        x = -x;
    }
    for _ in 0..8 {
        let err = normal_cdf(x) - p;
        let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if pdf == 0.0 {
            break;
        }
        let step = err / pdf;
        x -= step;
        if step.abs() < 1e-14 * (1.0 + x.abs()) {
            break;
        }
    }
    Ok(x)
}

/// Exact-covariance CI backend: independent iff `|ρ_{i,j|S}| <= τ`.
pub struct GaussOracle {
    stats: GaussianSuffStats,
    tau: f64,
}

impl GaussOracle {
    pub fn new(stats: GaussianSuffStats, tau: f64) -> Result<Self> {
        if tau < 0.0 {
            return Err(Error::InvalidInput("threshold must be non-negative".into()));
        }
        Ok(Self { stats, tau })
    }

    pub fn stats(&self) -> &GaussianSuffStats {
        &self.stats
    }
}

impl CiOracle for GaussOracle {
    fn p(&self) -> usize {
        self.stats.p()
    }

    fn independent(&self, i: usize, j: usize, s: &NodeSet) -> Result<bool> {
        Ok(self.stats.partial_correlation(i, j, s)?.abs() <= self.tau)
    }

    fn describe(&self) -> String {
        format!("gauss(tau={})", self.tau)
    }
}

/// Sample-based CI backend using the Fisher-z test at level `alpha`.
pub struct FisherZOracle {
    stats: GaussianSuffStats,
    alpha: f64,
}

impl FisherZOracle {
    pub fn new(stats: GaussianSuffStats, alpha: f64) -> Result<Self> {
        if stats.n().is_none() {
            return Err(Error::InvalidInput(
                "Fisher-z testing needs sample-based statistics".into(),
            ));
        }
        if !(0.0..1.0).contains(&alpha) || alpha == 0.0 {
            return Err(Error::InvalidInput(format!("alpha {alpha} out of (0, 1)")));
        }
        Ok(Self { stats, alpha })
    }

    pub fn stats(&self) -> &GaussianSuffStats {
        &self.stats
    }
}

impl CiOracle for FisherZOracle {
    fn p(&self) -> usize {
        self.stats.p()
    }

    fn independent(&self, i: usize, j: usize, s: &NodeSet) -> Result<bool> {
        let rho = self.stats.partial_correlation(i, j, s)?;
        // A sample partial correlation of exactly ±1 is an infinitely
        // confident dependence, not a test failure.
        if rho.abs() >= 1.0 {
            return Ok(false);
        }
        fisher_z_test(rho, self.stats.n().unwrap(), s.len(), self.alpha)
    }

    fn describe(&self) -> String {
        format!("fisher-z(alpha={})", self.alpha)
    }
}
