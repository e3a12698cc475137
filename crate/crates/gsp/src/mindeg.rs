//! Starting-permutation heuristics: the neighbor-based minimum degree
//! algorithm on thresholded partial correlations, and the classic symbolic
//! minimum degree algorithm it reduces to in the oracle setting.

use crate::ci::{CachedOracle, CiOracle, EdgeRestrictedOracle};
use crate::error::{Error, Result};
use crate::gauss::{GaussOracle, GaussianSuffStats};
use crate::graph::Dag;
use crate::imap::minimal_imap;
use crate::perm::Permutation;
use crate::set::NodeSet;
use nalgebra::DMatrix;
use rand::Rng;
use std::collections::BTreeSet;

/// Undirected working graph over the remaining node set.
#[derive(Clone)]
struct ElimState {
    remaining: NodeSet,
    adj: Vec<NodeSet>,
}

impl ElimState {
    fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    fn min_degree_nodes(&self) -> Vec<usize> {
        let min = self
            .remaining
            .iter()
            .map(|v| self.degree(v))
            .min()
            .unwrap();
        self.remaining
            .iter()
            .filter(|&v| self.degree(v) == min)
            .collect()
    }

    /// Removes `k`; pairs of former neighbors are added if absent and
    /// retested with the reduced conditioning set if present. Pairs not both
    /// adjacent to `k` keep their status.
    fn eliminate(
        &self,
        k: usize,
        retest: &mut dyn FnMut(usize, usize, &NodeSet) -> Result<bool>,
    ) -> Result<ElimState> {
        let mut next = self.clone();
        let neighbors: Vec<usize> = self.adj[k].iter().collect();
        next.remaining.remove(k);
        next.adj[k] = NodeSet::new();
        for v in 0..next.adj.len() {
            next.adj[v].remove(k);
        }
        for (a, &i) in neighbors.iter().enumerate() {
            for &j in &neighbors[a + 1..] {
                if !self.adj[i].contains(j) {
                    next.adj[i].insert(j);
                    next.adj[j].insert(i);
                } else {
                    let cond = next.remaining.without(i).without(j);
                    if !retest(i, j, &cond)? {
                        next.adj[i].remove(j);
                        next.adj[j].remove(i);
                    }
                }
            }
        }
        Ok(next)
    }
}

fn initial_state(
    p: usize,
    edge: &mut dyn FnMut(usize, usize, &NodeSet) -> Result<bool>,
) -> Result<ElimState> {
    let full = NodeSet::full(p);
    let mut adj = vec![NodeSet::new(); p];
    for i in 0..p {
        for j in i + 1..p {
            if edge(i, j, &full.without(i).without(j))? {
                adj[i].insert(j);
                adj[j].insert(i);
            }
        }
    }
    Ok(ElimState {
        remaining: full,
        adj,
    })
}

/// Neighbor-based minimum degree: build the graph of nonzero (thresholded)
/// full-conditioning partial correlations, repeatedly eliminate a uniformly
/// drawn lowest-degree node while locally updating edges, assign it the
/// current set size as its position, and return the resulting permutation
/// with its minimal I-MAP under the same thresholded tester.
///
/// `moral_graph`, when given, restricts both the initial graph and the final
/// I-MAP to the allowed pairs; elimination fill-in is not restricted.
pub fn neighbor_min_degree<R: Rng>(
    stats: &GaussianSuffStats,
    tau: f64,
    moral_graph: Option<&[(usize, usize)]>,
    rng: &mut R,
) -> Result<(Permutation, Dag)> {
    if tau <= 0.0 {
        return Err(Error::InvalidInput("threshold must be positive".into()));
    }
    let p = stats.p();
    let base = GaussOracle::new(stats.clone(), tau)?;
    let cached = CachedOracle::new(&base);
    let allowed = |i: usize, j: usize| {
        moral_graph.is_none_or(|pairs| {
            pairs.contains(&(i.min(j), i.max(j))) || pairs.contains(&(i.max(j), i.min(j)))
        })
    };

    let mut state = initial_state(p, &mut |i, j, cond| {
        Ok(allowed(i, j) && !cached.independent(i, j, cond)?)
    })?;
    let mut position = vec![0usize; p];
    while !state.remaining.is_empty() {
        let cands = state.min_degree_nodes();
        let k = cands[rng.gen_range(0..cands.len())];
        position[k] = state.remaining.len();
        state = state.eliminate(k, &mut |i, j, cond| {
            Ok(!cached.independent(i, j, cond)?)
        })?;
    }
    let mut order = vec![0usize; p];
    for v in 0..p {
        order[position[v] - 1] = v;
    }
    let perm = Permutation::from_order(order)?;
    let imap = match moral_graph {
        Some(pairs) => {
            let restricted = EdgeRestrictedOracle::new(&base, pairs);
            minimal_imap(&perm, &CachedOracle::new(&restricted))?
        }
        None => minimal_imap(&perm, &cached)?,
    };
    Ok((perm, imap.dag))
}

/// All permutations reachable from the neighbor-based elimination under some
/// tie-breaking. Guarded to `p <= 8`.
pub fn neighbor_min_degree_outputs(
    stats: &GaussianSuffStats,
    tau: f64,
    force: bool,
) -> Result<BTreeSet<Vec<usize>>> {
    let p = stats.p();
    if p > 8 && !force {
        return Err(Error::Guard(format!(
            "exhaustive elimination over p = {p} > 8 (pass force to override)"
        )));
    }
    let base = GaussOracle::new(stats.clone(), tau)?;
    let cached = CachedOracle::new(&base);
    let state = initial_state(p, &mut |i, j, cond| Ok(!cached.independent(i, j, cond)?))?;
    let mut out = BTreeSet::new();
    let mut position = vec![0usize; p];
    branch_eliminations(
        &state,
        &mut position,
        &mut |i, j, cond| Ok(!cached.independent(i, j, cond)?),
        &mut out,
    )?;
    Ok(out)
}

fn branch_eliminations(
    state: &ElimState,
    position: &mut Vec<usize>,
    retest: &mut dyn FnMut(usize, usize, &NodeSet) -> Result<bool>,
    out: &mut BTreeSet<Vec<usize>>,
) -> Result<()> {
    if state.remaining.is_empty() {
        let p = position.len();
        let mut order = vec![0usize; p];
        for v in 0..p {
            order[position[v] - 1] = v;
        }
        out.insert(order);
        return Ok(());
    }
    for k in state.min_degree_nodes() {
        position[k] = state.remaining.len();
        let next = state.eliminate(k, retest)?;
        branch_eliminations(&next, position, retest, out)?;
    }
    Ok(())
}

/// Elimination state of the classic algorithm: the precision matrix of the
/// remaining margin, updated by Schur complements so the nonzero pattern is
/// exactly the marginal pattern (cancellations included).
#[derive(Clone)]
struct ClassicState {
    theta: DMatrix<f64>,
    remaining: NodeSet,
    zero_tol: f64,
}

impl ClassicState {
    fn new(theta: &DMatrix<f64>, zero_tol: f64) -> Result<Self> {
        if theta.nrows() != theta.ncols() {
            return Err(Error::InvalidInput("matrix must be square".into()));
        }
        for i in 0..theta.nrows() {
            for j in 0..theta.ncols() {
                if (theta[(i, j)] - theta[(j, i)]).abs() > 1e-8 * (1.0 + theta[(i, j)].abs()) {
                    return Err(Error::InvalidInput("matrix must be symmetric".into()));
                }
            }
        }
        Ok(Self {
            theta: theta.clone(),
            remaining: NodeSet::full(theta.nrows()),
            zero_tol,
        })
    }

    fn edge(&self, i: usize, j: usize) -> bool {
        let d = self.theta[(i, i)] * self.theta[(j, j)];
        d > 0.0 && self.theta[(i.min(j), i.max(j))].abs() > self.zero_tol * d.sqrt()
    }

    fn degree(&self, v: usize) -> usize {
        self.remaining
            .iter()
            .filter(|&u| u != v && self.edge(u, v))
            .count()
    }

    fn min_degree_nodes(&self) -> Vec<usize> {
        let min = self
            .remaining
            .iter()
            .map(|v| self.degree(v))
            .min()
            .unwrap();
        self.remaining
            .iter()
            .filter(|&v| self.degree(v) == min)
            .collect()
    }

    /// Gaussian elimination of `k`: the Schur complement onto the rest is
    /// the precision matrix of the marginal distribution.
    fn eliminate(&self, k: usize) -> Result<ClassicState> {
        let mut next = self.clone();
        let pivot = self.theta[(k, k)];
        if pivot.abs() < 1e-12 {
            return Err(Error::Numerical(format!(
                "elimination pivot at node {} is numerically zero",
                k + 1
            )));
        }
        next.remaining.remove(k);
        for i in next.remaining.iter() {
            for j in next.remaining.iter() {
                next.theta[(i, j)] =
                    self.theta[(i, j)] - self.theta[(i, k)] * self.theta[(k, j)] / pivot;
            }
        }
        Ok(next)
    }
}

fn classic_branches(
    state: &ClassicState,
    position: &mut Vec<usize>,
    out: &mut BTreeSet<Vec<usize>>,
) -> Result<()> {
    if state.remaining.is_empty() {
        let p = position.len();
        let mut order = vec![0usize; p];
        for v in 0..p {
            order[position[v] - 1] = v;
        }
        out.insert(order);
        return Ok(());
    }
    for k in state.min_degree_nodes() {
        position[k] = state.remaining.len();
        let next = state.eliminate(k)?;
        classic_branches(&next, position, out)?;
    }
    Ok(())
}

/// Classic minimum degree on a precision matrix: repeatedly eliminate a
/// lowest-degree vertex of the current nonzero pattern, updating the matrix
/// by Gaussian elimination (so the pattern stays the exact marginal pattern;
/// without cancellation this is the usual neighbor clique). Positions follow
/// the same convention as the neighbor-based variant: the first node
/// eliminated is placed last. Enumerates every tie-break branch; guarded to
/// `p <= 8`.
pub fn classic_min_degree_outputs(
    theta: &DMatrix<f64>,
    zero_tol: f64,
    force: bool,
) -> Result<BTreeSet<Vec<usize>>> {
    let p = theta.nrows();
    if p > 8 && !force {
        return Err(Error::Guard(format!(
            "exhaustive elimination over p = {p} > 8 (pass force to override)"
        )));
    }
    let state = ClassicState::new(theta, zero_tol)?;
    let mut out = BTreeSet::new();
    let mut position = vec![0usize; p];
    classic_branches(&state, &mut position, &mut out)?;
    Ok(out)
}

/// One seeded branch of the classic algorithm.
pub fn classic_min_degree_sampled<R: Rng>(
    theta: &DMatrix<f64>,
    zero_tol: f64,
    rng: &mut R,
) -> Result<Permutation> {
    let mut state = ClassicState::new(theta, zero_tol)?;
    let p = theta.nrows();
    let mut position = vec![0usize; p];
    while !state.remaining.is_empty() {
        let cands = state.min_degree_nodes();
        let k = cands[rng.gen_range(0..cands.len())];
        position[k] = state.remaining.len();
        state = state.eliminate(k)?;
    }
    let mut order = vec![0usize; p];
    for v in 0..p {
        order[position[v] - 1] = v;
    }
    Permutation::from_order(order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sem::{exact_covariance, random_gaussian_dag, sem_covariance_and_sample};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn tridiagonal_chain() -> GaussianSuffStats {
        // 1 -> 2 -> 3 with unit weights: the precision matrix is tridiagonal.
        let dag = Dag::from_arrows(3, &[(0, 1), (1, 2)]).unwrap();
        let mut weights = std::collections::BTreeMap::new();
        weights.insert((0, 1), 0.8);
        weights.insert((1, 2), 0.8);
        let model = crate::sem::SemModel { dag, weights };
        GaussianSuffStats::from_covariance(exact_covariance(&model)).unwrap()
    }

    #[test]
    fn diagonal_covariance_gives_empty_graphs_and_uniform_order() {
        let stats = GaussianSuffStats::from_covariance(DMatrix::identity(4, 4)).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let (_, imap) = neighbor_min_degree(&stats, 0.01, None, &mut rng).unwrap();
        assert_eq!(imap.arrow_count(), 0);
        // Every order is reachable.
        let all = neighbor_min_degree_outputs(&stats, 0.01, false).unwrap();
        assert_eq!(all.len(), 24);
    }

    #[test]
    fn chain_eliminates_endpoints_first() {
        let stats = tridiagonal_chain();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..20 {
            let (perm, imap) = neighbor_min_degree(&stats, 1e-6, None, &mut rng).unwrap();
            // The middle node is never eliminated first, so it never sits
            // at the last position; the I-MAP always has two arrows.
            assert_ne!(perm.node_at(2), 1);
            assert_eq!(imap.arrow_count(), 2);
        }
    }

    #[test]
    fn classic_chain_and_star_orders() {
        // Chain pattern: node 2 (the middle) never first.
        let theta = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.5, 0.0, 0.5, 1.0, 0.5, 0.0, 0.5, 1.0],
        );
        let orders = classic_min_degree_outputs(&theta, 1e-9, false).unwrap();
        for order in &orders {
            assert_ne!(order[2], 1, "middle node eliminated first");
        }

        // Star pattern with center 0: the center is never eliminated first,
        // and every leaf-first order (center placed first, zero fill-in) is
        // reachable. In the two-node endgame the center ties with the last
        // leaf, so those interleavings are reachable too.
        let mut star = DMatrix::identity(4, 4);
        for leaf in 1..4 {
            star[(0, leaf)] = 0.4;
            star[(leaf, 0)] = 0.4;
        }
        let orders = classic_min_degree_outputs(&star, 1e-9, false).unwrap();
        for order in &orders {
            assert_ne!(order[3], 0, "center eliminated first");
        }
        let center_first = orders.iter().filter(|o| o[0] == 0).count();
        assert_eq!(center_first, 6);
    }

    #[test]
    fn diagonal_precision_allows_all_orders() {
        let theta = DMatrix::<f64>::identity(4, 4);
        let orders = classic_min_degree_outputs(&theta, 1e-9, false).unwrap();
        assert_eq!(orders.len(), 24);
    }

    #[test]
    fn sampled_branch_lies_in_the_output_set() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        for _ in 0..10 {
            let model = random_gaussian_dag(5, 1.2, &mut rng);
            let theta = exact_covariance(&model).cholesky().unwrap().inverse();
            let all = classic_min_degree_outputs(&theta, 1e-7, false).unwrap();
            let one = classic_min_degree_sampled(&theta, 1e-7, &mut rng).unwrap();
            assert!(all.iter().any(|o| o == one.order()));
        }
    }

    /// Eliminating a node and updating locally matches the marginal graph
    /// rebuilt from scratch.
    #[test]
    fn local_update_matches_marginal_graph() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for p in 4..=7 {
            for _ in 0..5 {
                let model = random_gaussian_dag(p, 1.5, &mut rng);
                let stats = sem_covariance_and_sample(&model, None, &mut rng).unwrap();
                let base = GaussOracle::new(stats.clone(), 1e-8).unwrap();
                let cached = CachedOracle::new(&base);
                let mut retest =
                    |i: usize, j: usize, cond: &NodeSet| Ok(!cached.independent(i, j, cond)?);
                let state = initial_state(p, &mut retest).unwrap();
                for k in 0..p {
                    let updated = state.eliminate(k, &mut retest).unwrap();
                    // From scratch on the marginal node set.
                    let rest = NodeSet::full(p).without(k);
                    for i in rest.iter() {
                        for j in rest.iter().filter(|&j| j > i) {
                            let cond = rest.without(i).without(j);
                            let expect = !cached.independent(i, j, &cond).unwrap();
                            assert_eq!(
                                updated.adj[i].contains(j),
                                expect,
                                "pair ({i},{j}) after eliminating {k} in {:?}",
                                model.dag
                            );
                        }
                    }
                }
            }
        }
    }

    /// Oracle-setting equivalence: the neighbor-based outputs equal the
    /// classic outputs on the precision matrix.
    #[test]
    fn neighbor_outputs_equal_classic_outputs() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for trial in 0..50 {
            let p = 3 + trial % 4; // 3..=6
            let model = random_gaussian_dag(p, 1.2, &mut rng);
            let sigma = exact_covariance(&model);
            let stats = GaussianSuffStats::from_covariance(sigma.clone()).unwrap();
            let theta = sigma
                .cholesky()
                .expect("SEM covariance is PD")
                .inverse();
            let nbr = neighbor_min_degree_outputs(&stats, 1e-8, false).unwrap();
            let classic = classic_min_degree_outputs(&theta, 1e-7, false).unwrap();
            assert_eq!(nbr, classic, "trial {trial} on {:?}", model.dag);
        }
    }

    /// Finite-sample containment: with plenty of data and the threshold at
    /// half the smallest nonzero partial correlation, the sampled output
    /// lands in the classic output set nearly always.
    #[test]
    fn finite_sample_output_contained_in_oracle_set() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let mut hits = 0;
        let trials = 100;
        for trial in 0..trials {
            let p = 3 + trial % 4; // 3..=6
            let model = random_gaussian_dag(p, 1.2, &mut rng);
            let sigma = exact_covariance(&model);
            let exact = GaussianSuffStats::from_covariance(sigma.clone()).unwrap();
            // Smallest nonzero partial correlation over all triples.
            let mut min_nonzero = f64::INFINITY;
            for i in 0..p {
                for j in i + 1..p {
                    let rest: Vec<usize> = (0..p).filter(|&v| v != i && v != j).collect();
                    for mask in 0..(1u32 << rest.len()) {
                        let s: NodeSet = rest
                            .iter()
                            .enumerate()
                            .filter(|(b, _)| mask >> b & 1 == 1)
                            .map(|(_, &v)| v)
                            .collect();
                        let rho = exact.partial_correlation(i, j, &s).unwrap().abs();
                        if rho > 1e-9 {
                            min_nonzero = min_nonzero.min(rho);
                        }
                    }
                }
            }
            let tau = if min_nonzero.is_finite() {
                min_nonzero / 2.0
            } else {
                0.5
            };
            let stats = sem_covariance_and_sample(&model, Some(50_000), &mut rng).unwrap();
            let (perm, _) = neighbor_min_degree(&stats, tau, None, &mut rng).unwrap();
            let theta = sigma.cholesky().unwrap().inverse();
            let classic = classic_min_degree_outputs(&theta, 1e-7, false).unwrap();
            if classic.iter().any(|o| o == perm.order()) {
                hits += 1;
            }
        }
        assert!(hits * 100 >= 95 * trials, "only {hits}/{trials} contained");
    }

    #[test]
    fn threshold_must_be_positive() {
        let stats = GaussianSuffStats::from_covariance(DMatrix::identity(3, 3)).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        assert!(neighbor_min_degree(&stats, 0.0, None, &mut rng).is_err());
    }
}
