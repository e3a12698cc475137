use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::set::NodeSet;

/// Partially directed graph: directed arrows plus undirected edges, disjoint
/// on unordered pairs.
///
/// [`essential_graph`] produces the CPDAG of a Markov equivalence class in
/// this representation; the polytope module reuses it for vertices that carry
/// one unoriented arrow.
#[derive(Clone, PartialEq, Eq)]
pub struct Pdag {
    p: usize,
    parents: Vec<NodeSet>,
    children: Vec<NodeSet>,
    undirected: Vec<NodeSet>,
}

/// Status of an unordered pair in a [`Pdag`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum EdgeStatus {
    Absent,
    Undirected,
    /// Directed from the smaller to the larger node of the pair.
    Forward,
    /// Directed from the larger to the smaller node of the pair.
    Backward,
}

impl Pdag {
    pub fn new(p: usize) -> Self {
        Self {
            p,
            parents: vec![NodeSet::new(); p],
            children: vec![NodeSet::new(); p],
            undirected: vec![NodeSet::new(); p],
        }
    }

    /// All arrows of a DAG, kept directed.
    pub fn from_dag(g: &Dag) -> Self {
        let mut out = Self::new(g.p());
        for (u, v) in g.arrows() {
            out.add_directed(u, v);
        }
        out
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn add_directed(&mut self, u: usize, v: usize) {
        self.undirected[u].remove(v);
        self.undirected[v].remove(u);
        self.children[u].insert(v);
        self.parents[v].insert(u);
    }

    pub fn add_undirected(&mut self, u: usize, v: usize) {
        self.children[u].remove(v);
        self.parents[v].remove(u);
        self.children[v].remove(u);
        self.parents[u].remove(v);
        self.undirected[u].insert(v);
        self.undirected[v].insert(u);
    }

    pub fn remove_edge(&mut self, u: usize, v: usize) {
        self.children[u].remove(v);
        self.parents[v].remove(u);
        self.children[v].remove(u);
        self.parents[u].remove(v);
        self.undirected[u].remove(v);
        self.undirected[v].remove(u);
    }

    pub fn has_directed(&self, u: usize, v: usize) -> bool {
        self.children[u].contains(v)
    }

    pub fn has_undirected(&self, u: usize, v: usize) -> bool {
        self.undirected[u].contains(v)
    }

    pub fn adjacent(&self, u: usize, v: usize) -> bool {
        self.has_directed(u, v) || self.has_directed(v, u) || self.has_undirected(u, v)
    }

    pub fn parents(&self, v: usize) -> &NodeSet {
        &self.parents[v]
    }

    pub fn children(&self, u: usize) -> &NodeSet {
        &self.children[u]
    }

    pub fn undirected_neighbors(&self, v: usize) -> &NodeSet {
        &self.undirected[v]
    }

    pub fn status(&self, u: usize, v: usize) -> EdgeStatus {
        let (a, b) = (u.min(v), u.max(v));
        if self.has_undirected(a, b) {
            EdgeStatus::Undirected
        } else if self.has_directed(a, b) {
            EdgeStatus::Forward
        } else if self.has_directed(b, a) {
            EdgeStatus::Backward
        } else {
            EdgeStatus::Absent
        }
    }

    /// Directed arrows in ascending order.
    pub fn directed_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for u in 0..self.p {
            for v in self.children[u].iter() {
                out.push((u, v));
            }
        }
        out
    }

    /// Undirected edges as `(min, max)` pairs, ascending.
    pub fn undirected_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for u in 0..self.p {
            for v in self.undirected[u].iter() {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.directed_edges().len() + self.undirected_edges().len()
    }

    /// Unordered adjacent pairs, ascending.
    pub fn skeleton(&self) -> Vec<(usize, usize)> {
        let mut out: std::collections::BTreeSet<(usize, usize)> = self
            .directed_edges()
            .into_iter()
            .map(|(u, v)| (u.min(v), u.max(v)))
            .collect();
        out.extend(self.undirected_edges());
        out.into_iter().collect()
    }

    /// Orients `u — v` as `u → v`; no-op unless the edge is undirected.
    fn orient(&mut self, u: usize, v: usize) -> bool {
        if self.has_undirected(u, v) {
            self.add_directed(u, v);
            true
        } else {
            false
        }
    }

    /// Applies the four Meek orientation rules to a fixpoint, scanning nodes
    /// in index order so closures are reproducible.
    pub fn meek_closure(&mut self) {
        loop {
            let mut changed = false;

            // R1: a -> b, b - c, a and c non-adjacent  =>  b -> c.
            for b in 0..self.p {
                let und: Vec<usize> = self.undirected[b].iter().collect();
                for c in und {
                    if self.parents[b]
                        .iter()
                        .any(|a| a != c && !self.adjacent(a, c))
                    {
                        changed |= self.orient(b, c);
                    }
                }
            }

            // R2: a -> w -> b with a - b  =>  a -> b.
            for a in 0..self.p {
                let und: Vec<usize> = self.undirected[a].iter().collect();
                for b in und {
                    if self.children[a].iter().any(|w| self.has_directed(w, b)) {
                        changed |= self.orient(a, b);
                    }
                }
            }

            // R3: a - b, a - c, a - d, c -> b, d -> b, c and d non-adjacent => a -> b.
            for a in 0..self.p {
                let und: Vec<usize> = self.undirected[a].iter().collect();
                for &b in &und {
                    let cands: Vec<usize> = self.parents[b]
                        .iter()
                        .filter(|&x| self.has_undirected(a, x))
                        .collect();
                    let hit = cands.iter().enumerate().any(|(k, &c)| {
                        cands[k + 1..].iter().any(|&d| !self.adjacent(c, d))
                    });
                    if hit {
                        changed |= self.orient(a, b);
                    }
                }
            }

            // R4: a - b, a - d, d -> c, c -> b, b and d non-adjacent  =>  a -> b.
            for a in 0..self.p {
                let und: Vec<usize> = self.undirected[a].iter().collect();
                for &b in &und {
                    let hit = self.undirected[a].iter().any(|d| {
                        d != b
                            && !self.adjacent(b, d)
                            && self.children[d].iter().any(|c| self.has_directed(c, b))
                    });
                    if hit {
                        changed |= self.orient(a, b);
                    }
                }
            }

            if !changed {
                return;
            }
        }
    }

    /// Orients every undirected edge consistently into a DAG, if possible.
    /// Used to pick a representative member of a CPDAG.
    pub fn consistent_extension(&self) -> Result<Dag> {
        let mut work = self.clone();
        let mut arrows: Vec<(usize, usize)> = work.directed_edges();
        // Repeatedly orient an undirected edge and close under Meek rules;
        // for CPDAGs this yields a member of the class.
        loop {
            let next = work.undirected_edges().into_iter().next();
            match next {
                None => break,
                Some((u, v)) => {
                    work.add_directed(u, v);
                    work.meek_closure();
                }
            }
        }
        arrows.clear();
        arrows.extend(work.directed_edges());
        Dag::from_arrows(self.p, &arrows)
            .map_err(|e| Error::Internal(format!("no consistent extension: {e}")))
    }
}

impl std::fmt::Debug for Pdag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut parts: Vec<String> = self
            .directed_edges()
            .iter()
            .map(|&(u, v)| format!("{}->{}", u + 1, v + 1))
            .collect();
        parts.extend(
            self.undirected_edges()
                .iter()
                .map(|&(u, v)| format!("{}--{}", u + 1, v + 1)),
        );
        write!(f, "Pdag(p={}, [{}])", self.p, parts.join(", "))
    }
}

/// The CPDAG of the Markov equivalence class of `g`: skeleton plus immorality
/// arrows, closed under the Meek rules. Markov-equivalent inputs map to equal
/// outputs.
pub fn essential_graph(g: &Dag) -> Pdag {
    let mut out = Pdag::new(g.p());
    for (u, v) in g.skeleton() {
        out.add_undirected(u, v);
    }
    for (i, j, k) in g.immoralities() {
        out.add_directed(i, j);
        out.add_directed(k, j);
    }
    out.meek_closure();
    out
}

/// Structural Hamming distance: the number of unordered pairs whose edge
/// status (absent / undirected / each orientation) differs.
pub fn shd(a: &Pdag, b: &Pdag) -> Result<usize> {
    if a.p() != b.p() {
        return Err(Error::InvalidInput("node counts differ".into()));
    }
    let mut d = 0;
    for i in 0..a.p() {
        for j in i + 1..a.p() {
            if a.status(i, j) != b.status(i, j) {
                d += 1;
            }
        }
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::test_support::random_dag;
    use crate::graph::markov_equivalent;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn essential_graph_chain_is_undirected() {
        let g = Dag::from_arrows(3, &[(0, 1), (1, 2)]).unwrap();
        let e = essential_graph(&g);
        assert_eq!(e.undirected_edges(), vec![(0, 1), (1, 2)]);
        assert!(e.directed_edges().is_empty());
    }

    #[test]
    fn essential_graph_collider_is_directed() {
        let g = Dag::from_arrows(3, &[(0, 1), (2, 1)]).unwrap();
        let e = essential_graph(&g);
        assert_eq!(e.directed_edges(), vec![(0, 1), (2, 1)]);
        assert!(e.undirected_edges().is_empty());
    }

    #[test]
    fn essential_graph_characterizes_equivalence() {
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        for p in 3..=5 {
            for _ in 0..25 {
                let g = random_dag(p, 0.5, &mut rng);
                let h = random_dag(p, 0.5, &mut rng);
                assert_eq!(
                    essential_graph(&g) == essential_graph(&h),
                    markov_equivalent(&g, &h).unwrap()
                );
            }
        }
    }

    #[test]
    fn essential_graph_stable_across_class_members() {
        // Enumerate the class by covered flips; all members must agree.
        let mut rng = ChaCha20Rng::seed_from_u64(29);
        for _ in 0..15 {
            let g = random_dag(5, 0.5, &mut rng);
            let e = essential_graph(&g);
            let mut seen = std::collections::HashSet::new();
            let mut queue = vec![g.clone()];
            seen.insert(g.arrows());
            while let Some(cur) = queue.pop() {
                assert_eq!(essential_graph(&cur), e);
                for (u, v) in cur.covered_arrows() {
                    let next = cur.reverse_covered(u, v).unwrap();
                    if seen.insert(next.arrows()) {
                        queue.push(next);
                    }
                }
            }
        }
    }

    #[test]
    fn consistent_extension_is_a_member() {
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        for _ in 0..25 {
            let g = random_dag(6, 0.4, &mut rng);
            let e = essential_graph(&g);
            let member = e.consistent_extension().unwrap();
            assert!(markov_equivalent(&g, &member).unwrap());
        }
    }

    #[test]
    fn shd_basics() {
        let a = essential_graph(&Dag::from_arrows(3, &[(0, 1), (1, 2)]).unwrap());
        assert_eq!(shd(&a, &a).unwrap(), 0);
        let b = essential_graph(&Dag::from_arrows(3, &[(0, 1)]).unwrap());
        assert_eq!(shd(&a, &b).unwrap(), 1);
        assert!(shd(&a, &Pdag::new(2)).is_err());
    }

    #[test]
    fn shd_is_symmetric() {
        let mut rng = ChaCha20Rng::seed_from_u64(37);
        for _ in 0..30 {
            let a = essential_graph(&random_dag(6, rng.gen_range(0.2..0.7), &mut rng));
            let b = essential_graph(&random_dag(6, rng.gen_range(0.2..0.7), &mut rng));
            assert_eq!(shd(&a, &b).unwrap(), shd(&b, &a).unwrap());
        }
    }
}
