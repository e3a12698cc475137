//! Random linear Gaussian structural equation models and their statistics.

use crate::error::{Error, Result};
use crate::gauss::GaussianSuffStats;
use crate::graph::Dag;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeMap;

/// A linear SEM `X = AᵀX + ε` with `ε ~ N(0, I)`: a DAG plus one nonzero
/// weight per arrow. Under the natural order the weight matrix is strictly
/// upper triangular.
#[derive(Clone, Debug)]
pub struct SemModel {
    pub dag: Dag,
    /// Arrow `(u, v)` to coefficient `a_uv`; keys are exactly the arrows.
    pub weights: BTreeMap<(usize, usize), f64>,
}

impl SemModel {
    pub fn p(&self) -> usize {
        self.dag.p()
    }
}

/// Samples an Erdős–Rényi Gaussian DAG model: under the natural order each
/// arrow `i → j` (i < j) appears with probability `s/(p-1)` and its weight is
/// uniform on `[-1, -0.25] ∪ [0.25, 1]`, bounded away from zero.
pub fn random_gaussian_dag<R: Rng>(p: usize, s: f64, rng: &mut R) -> SemModel {
    let prob = if p > 1 { (s / (p - 1) as f64).min(1.0) } else { 0.0 };
    let mut dag = Dag::new(p);
    let mut weights = BTreeMap::new();
    for i in 0..p {
        for j in i + 1..p {
            if rng.gen_bool(prob) {
                dag.insert_arrow(i, j);
                let mag = rng.gen_range(0.25..=1.0);
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                weights.insert((i, j), sign * mag);
            }
        }
    }
    SemModel { dag, weights }
}

/// Exact covariance `Σ = (I - Aᵀ)⁻¹ (I - Aᵀ)⁻ᵀ` of the model, or statistics
/// from `n` forward-simulated samples when `n` is given.
pub fn sem_covariance_and_sample<R: Rng>(
    model: &SemModel,
    n: Option<usize>,
    rng: &mut R,
) -> Result<GaussianSuffStats> {
    match n {
        None => GaussianSuffStats::from_covariance(exact_covariance(model)),
        Some(n) => GaussianSuffStats::from_samples(&sample_matrix(model, n, rng)?),
    }
}

/// `Σ = B Bᵀ` with `B = (I - Aᵀ)⁻¹`; `I - Aᵀ` is unit lower triangular under
/// a topological order, hence always invertible.
pub fn exact_covariance(model: &SemModel) -> DMatrix<f64> {
    let p = model.p();
    let mut m = DMatrix::identity(p, p);
    for (&(u, v), &w) in &model.weights {
        m[(v, u)] = -w;
    }
    let b = m.try_inverse().expect("I - Aᵀ is unipotent");
    &b * b.transpose()
}

/// Forward simulation in topological order, one row per sample.
pub fn sample_matrix<R: Rng>(model: &SemModel, n: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::InvalidInput("sample count must be positive".into()));
    }
    let p = model.p();
    let order = model
        .dag
        .topological_order()
        .ok_or_else(|| Error::Internal("SEM graph is cyclic".into()))?;
    let mut x = DMatrix::zeros(n, p);
    for row in 0..n {
        for &v in &order {
            let mut val: f64 = rng.sample(StandardNormal);
            for u in model.dag.parents(v).iter() {
                val += model.weights[&(u, v)] * x[(row, u)];
            }
            x[(row, v)] = val;
        }
    }
    Ok(x)
}
