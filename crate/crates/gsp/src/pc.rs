//! Order-independent PC baseline: stable skeleton phase, v-structure
//! orientation from recorded separating sets, Meek closure.

use crate::ci::CiOracle;
use crate::error::Result;
use crate::graph::Pdag;
use crate::set::NodeSet;
use std::collections::HashMap;

/// Learns a CPDAG from a CI source. Conditioning sets are drawn from the
/// current adjacencies of the tested pair, with cardinality growing one
/// level at a time; adjacency snapshots are fixed per level so the output
/// does not depend on pair order.
pub fn pc_baseline(oracle: &dyn CiOracle) -> Result<Pdag> {
    let p = oracle.p();
    let mut adj: Vec<NodeSet> = (0..p)
        .map(|i| (0..p).filter(|&j| j != i).collect())
        .collect();
    let mut sepsets: HashMap<(usize, usize), NodeSet> = HashMap::new();

    let mut level = 0usize;
    loop {
        let snapshot = adj.clone();
        let mut any_candidate = false;
        for i in 0..p {
            for j in i + 1..p {
                if !adj[i].contains(j) {
                    continue;
                }
                for (a, b) in [(i, j), (j, i)] {
                    let pool: Vec<usize> = snapshot[a].without(b).iter().collect();
                    if pool.len() < level {
                        continue;
                    }
                    any_candidate = true;
                    if let Some(s) = find_separator(oracle, a, b, &pool, level)? {
                        adj[i].remove(j);
                        adj[j].remove(i);
                        sepsets.insert((i, j), s);
                        break;
                    }
                }
            }
        }
        if !any_candidate {
            break;
        }
        level += 1;
    }

    let mut out = Pdag::new(p);
    for (i, nbrs) in adj.iter().enumerate() {
        for j in nbrs.iter() {
            if i < j {
                out.add_undirected(i, j);
            }
        }
    }
    // V-structures: for every unshielded triple i - k - j, orient into k
    // unless k separated the pair.
    for k in 0..p {
        let nbrs: Vec<usize> = adj[k].iter().collect();
        for (a, &i) in nbrs.iter().enumerate() {
            for &j in &nbrs[a + 1..] {
                if adj[i].contains(j) {
                    continue;
                }
                let sep = sepsets.get(&(i.min(j), i.max(j)));
                let collider = sep.is_none_or(|s| !s.contains(k));
                if collider {
                    // Orient each side that is still undirected; an edge
                    // already oriented away by an earlier triple is left
                    // alone (first orientation wins, order is fixed).
                    if out.has_undirected(i, k) {
                        out.add_directed(i, k);
                    }
                    if out.has_undirected(j, k) {
                        out.add_directed(j, k);
                    }
                }
            }
        }
    }
    out.meek_closure();
    Ok(out)
}

/// First subset of `pool` of size `level` separating `a` from `b`, in
/// lexicographic order.
fn find_separator(
    oracle: &dyn CiOracle,
    a: usize,
    b: usize,
    pool: &[usize],
    level: usize,
) -> Result<Option<NodeSet>> {
    let mut choice: Vec<usize> = (0..level).collect();
    if level > pool.len() {
        return Ok(None);
    }
    loop {
        let s: NodeSet = choice.iter().map(|&k| pool[k]).collect();
        if oracle.independent(a, b, &s)? {
            return Ok(Some(s));
        }
        // Next combination.
        let mut i = level;
        loop {
            if i == 0 {
                return Ok(None);
            }
            i -= 1;
            if choice[i] != i + pool.len() - level {
                break;
            }
        }
        if choice.is_empty() {
            return Ok(None);
        }
        choice[i] += 1;
        for k in i + 1..level {
            choice[k] = choice[k - 1] + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ci::DsepOracle;
    use crate::gauss::{FisherZOracle, GaussOracle};
    use crate::graph::test_support::random_dag;
    use crate::graph::{essential_graph, Dag};
    use crate::sem::{random_gaussian_dag, sem_covariance_and_sample};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn chain_gives_undirected_path() {
        let oracle = DsepOracle::new(Dag::from_arrows(3, &[(0, 1), (1, 2)]).unwrap());
        let out = pc_baseline(&oracle).unwrap();
        assert_eq!(out.undirected_edges(), vec![(0, 1), (1, 2)]);
        assert!(out.directed_edges().is_empty());
    }

    #[test]
    fn collider_is_fully_oriented() {
        let oracle = DsepOracle::new(Dag::from_arrows(3, &[(0, 1), (2, 1)]).unwrap());
        let out = pc_baseline(&oracle).unwrap();
        assert_eq!(out.directed_edges(), vec![(0, 1), (2, 1)]);
        assert!(out.undirected_edges().is_empty());
    }

    #[test]
    fn oracle_pc_recovers_the_essential_graph() {
        let mut rng = ChaCha20Rng::seed_from_u64(15);
        for p in 3..=7 {
            for _ in 0..8 {
                let g = random_dag(p, 0.4, &mut rng);
                let oracle = DsepOracle::new(g.clone());
                let out = pc_baseline(&oracle).unwrap();
                assert_eq!(out, essential_graph(&g), "failed on {g:?}");
            }
        }
    }

    #[test]
    fn gaussian_backends_plug_in() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let model = random_gaussian_dag(5, 1.5, &mut rng);
        let exact = sem_covariance_and_sample(&model, None, &mut rng).unwrap();
        let out = pc_baseline(&GaussOracle::new(exact, 1e-8).unwrap()).unwrap();
        assert_eq!(out, essential_graph(&model.dag));

        let sampled = sem_covariance_and_sample(&model, Some(50_000), &mut rng).unwrap();
        let est = pc_baseline(&FisherZOracle::new(sampled, 0.01).unwrap()).unwrap();
        // Large n: usually exact, and at minimum a valid graph over p nodes.
        assert_eq!(est.p(), 5);
    }
}
