//! Conditional-independence statements and oracles.
//!
//! Every structure-learning routine in this crate consumes CI information
//! through the [`CiOracle`] trait. Backends: an explicit statement list
//! ([`CiSet`]), d-separation in a ground-truth DAG ([`DsepOracle`]), and the
//! Gaussian testers in [`crate::gauss`]. [`CachedOracle`] memoizes any of
//! them; the greedy searches re-query the same triples heavily.

use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::set::NodeSet;
use dashmap::DashMap;
use std::collections::BTreeSet;

/// One statement `i ⊥ j | S`, stored with `i < j` so the symmetric pair
/// normalizes to a single key.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct CiStatement {
    pub i: usize,
    pub j: usize,
    pub s: NodeSet,
}

impl CiStatement {
    pub fn new(i: usize, j: usize, s: NodeSet) -> Result<Self> {
        if i == j {
            return Err(Error::InvalidInput("statement needs two distinct nodes".into()));
        }
        if s.contains(i) || s.contains(j) {
            return Err(Error::InvalidInput(
                "conditioning set overlaps the tested pair".into(),
            ));
        }
        Ok(Self {
            i: i.min(j),
            j: i.max(j),
            s,
        })
    }
}

/// An explicit, finite collection of CI statements over nodes `0..p`.
#[derive(Clone, Debug, Default)]
pub struct CiSet {
    p: usize,
    stmts: BTreeSet<CiStatement>,
}

impl CiSet {
    pub fn new(p: usize) -> Self {
        Self {
            p,
            stmts: BTreeSet::new(),
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn insert(&mut self, i: usize, j: usize, s: NodeSet) -> Result<()> {
        if i >= self.p || j >= self.p || s.iter().any(|v| v >= self.p) {
            return Err(Error::InvalidInput("statement node out of range".into()));
        }
        self.stmts.insert(CiStatement::new(i, j, s)?);
        Ok(())
    }

    pub fn contains(&self, i: usize, j: usize, s: &NodeSet) -> bool {
        CiStatement::new(i, j, s.clone())
            .map(|st| self.stmts.contains(&st))
            .unwrap_or(false)
    }

    pub fn iter(&self) -> impl Iterator<Item = &CiStatement> {
        self.stmts.iter()
    }

    pub fn len(&self) -> usize {
        self.stmts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stmts.is_empty()
    }

    /// All d-separation statements of a DAG, enumerated exhaustively.
    /// Exponential in `p`; guarded to small graphs.
    pub fn all_dseps(g: &Dag, force: bool) -> Result<Self> {
        let p = g.p();
        if p > 7 && !force {
            return Err(Error::Guard(format!(
                "d-separation enumeration over p = {p} > 7 (pass force to override)"
            )));
        }
        let mut out = Self::new(p);
        for i in 0..p {
            for j in i + 1..p {
                let rest: Vec<usize> = (0..p).filter(|&v| v != i && v != j).collect();
                for mask in 0..(1u64 << rest.len()) {
                    let s: NodeSet = rest
                        .iter()
                        .enumerate()
                        .filter(|(b, _)| mask >> b & 1 == 1)
                        .map(|(_, &v)| v)
                        .collect();
                    if g.d_separated(i, j, &s)? {
                        out.insert(i, j, s)?;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// A queryable source of CI decisions. `independent(i, j, s)` must be
/// deterministic for a fixed backend and symmetric in `(i, j)`.
pub trait CiOracle: Sync {
    fn p(&self) -> usize;
    fn independent(&self, i: usize, j: usize, s: &NodeSet) -> Result<bool>;
    /// Short identity tag recorded on derived artifacts.
    fn describe(&self) -> String {
        "oracle".into()
    }
}

impl CiOracle for CiSet {
    fn p(&self) -> usize {
        self.p
    }

    fn independent(&self, i: usize, j: usize, s: &NodeSet) -> Result<bool> {
        if i >= self.p || j >= self.p {
            return Err(Error::InvalidInput("query node out of range".into()));
        }
        Ok(self.contains(i, j, s))
    }

    fn describe(&self) -> String {
        format!("relations({})", self.stmts.len())
    }
}

/// Faithful oracle for the d-separations of a ground-truth DAG.
pub struct DsepOracle {
    dag: Dag,
}

impl DsepOracle {
    pub fn new(dag: Dag) -> Self {
        Self { dag }
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }
}

impl CiOracle for DsepOracle {
    fn p(&self) -> usize {
        self.dag.p()
    }

    fn independent(&self, i: usize, j: usize, s: &NodeSet) -> Result<bool> {
        self.dag.d_separated(i, j, s)
    }

    fn describe(&self) -> String {
        "dsep".into()
    }
}

/// Memoizing wrapper. The map supports concurrent reads and insert-if-absent,
/// so one cache can back parallel runs.
pub struct CachedOracle<'a> {
    inner: &'a dyn CiOracle,
    cache: DashMap<(usize, usize, NodeSet), bool>,
}

impl<'a> CachedOracle<'a> {
    pub fn new(inner: &'a dyn CiOracle) -> Self {
        Self {
            inner,
            cache: DashMap::new(),
        }
    }

    pub fn queries_cached(&self) -> usize {
        self.cache.len()
    }
}

impl CiOracle for CachedOracle<'_> {
    fn p(&self) -> usize {
        self.inner.p()
    }

    fn independent(&self, i: usize, j: usize, s: &NodeSet) -> Result<bool> {
        let key = (i.min(j), i.max(j), s.clone());
        if let Some(hit) = self.cache.get(&key) {
            return Ok(*hit);
        }
        let val = self.inner.independent(i, j, s)?;
        self.cache.insert(key, val);
        Ok(val)
    }

    fn describe(&self) -> String {
        self.inner.describe()
    }
}

/// Declares every pair outside `allowed` independent regardless of the
/// conditioning set; used to impose a moral graph as prior knowledge.
pub struct EdgeRestrictedOracle<'a> {
    inner: &'a dyn CiOracle,
    allowed: Vec<NodeSet>,
}

impl<'a> EdgeRestrictedOracle<'a> {
    pub fn new(inner: &'a dyn CiOracle, allowed_pairs: &[(usize, usize)]) -> Self {
        let mut allowed = vec![NodeSet::new(); inner.p()];
        for &(u, v) in allowed_pairs {
            allowed[u].insert(v);
            allowed[v].insert(u);
        }
        Self { inner, allowed }
    }
}

impl CiOracle for EdgeRestrictedOracle<'_> {
    fn p(&self) -> usize {
        self.inner.p()
    }

    fn independent(&self, i: usize, j: usize, s: &NodeSet) -> Result<bool> {
        if !self.allowed[i].contains(j) {
            return Ok(true);
        }
        self.inner.independent(i, j, s)
    }

    fn describe(&self) -> String {
        format!("{}+moral", self.inner.describe())
    }
}

/// Outcome for one closure axiom: either it holds or a first counterexample
/// is reported (the two premises and the missing conclusion).
#[derive(Clone, Debug)]
pub struct AxiomResult {
    pub holds: bool,
    pub counterexample: Option<(CiStatement, CiStatement, CiStatement)>,
}

impl AxiomResult {
    fn ok() -> Self {
        Self {
            holds: true,
            counterexample: None,
        }
    }

    fn fail(p1: CiStatement, p2: CiStatement, missing: CiStatement) -> Self {
        Self {
            holds: false,
            counterexample: Some((p1, p2, missing)),
        }
    }
}

/// Closure report for the semigraphoid axioms and the intersection property.
#[derive(Clone, Debug)]
pub struct GraphoidReport {
    pub sg1: AxiomResult,
    pub sg2: AxiomResult,
    pub intersection: AxiomResult,
}

impl GraphoidReport {
    pub fn is_graphoid(&self) -> bool {
        self.sg1.holds && self.sg2.holds && self.intersection.holds
    }
}

/// Verifies closure of an explicit CI set under symmetry (SG1), the exchange
/// axiom (SG2), and intersection (INT), reporting the first counterexample
/// per failed axiom.
pub fn check_graphoid(c: &CiSet, p: usize) -> Result<GraphoidReport> {
    if c.p() > p {
        return Err(Error::InvalidInput("statement set exceeds node count".into()));
    }
    // Statements are stored symmetric-normalized, so SG1 holds by
    // representation; it is still reported for completeness.
    let sg1 = AxiomResult::ok();

    // Both remaining axioms quantify over ordered readings of each
    // statement, so expand every stored pair in both directions.
    let oriented: Vec<(usize, usize, &NodeSet)> = c
        .iter()
        .flat_map(|st| [(st.i, st.j, &st.s), (st.j, st.i, &st.s)])
        .collect();

    let mut sg2 = AxiomResult::ok();
    'sg2: for &(i, j, s) in &oriented {
        // premise 1: i ⊥ j | S; premise 2: i ⊥ k | {j} ∪ S.
        for &(i2, k, s2) in &oriented {
            if i2 != i || k == j || !s2.contains(j) || s2.without(j) != *s {
                continue;
            }
            let c1 = CiStatement::new(i, k, s.clone())?;
            let c2 = CiStatement::new(i, j, s.with(k))?;
            for missing in [&c1, &c2] {
                if !c.contains(missing.i, missing.j, &missing.s) {
                    sg2 = AxiomResult::fail(
                        CiStatement::new(i, j, s.clone())?,
                        CiStatement::new(i2, k, s2.clone())?,
                        missing.clone(),
                    );
                    break 'sg2;
                }
            }
        }
    }

    let mut int = AxiomResult::ok();
    'int: for &(i, j, s_full) in &oriented {
        // premise 1: i ⊥ j | {k} ∪ S, premise 2: i ⊥ k | {j} ∪ S.
        for k in s_full.iter() {
            let s = s_full.without(k);
            for &(i2, k2, s2) in &oriented {
                if i2 != i || k2 != k || !s2.contains(j) || s2.without(j) != s {
                    continue;
                }
                let c1 = CiStatement::new(i, j, s.clone())?;
                let c2 = CiStatement::new(i, k, s.clone())?;
                for missing in [&c1, &c2] {
                    if !c.contains(missing.i, missing.j, &missing.s) {
                        int = AxiomResult::fail(
                            CiStatement::new(i, j, s_full.clone())?,
                            CiStatement::new(i2, k2, s2.clone())?,
                            missing.clone(),
                        );
                        break 'int;
                    }
                }
            }
        }
    }

    Ok(GraphoidReport {
        sg1,
        sg2,
        intersection: int,
    })
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    fn stmt(c: &mut CiSet, i: usize, j: usize, s: &[usize]) {
        c.insert(i - 1, j - 1, s.iter().map(|&v| v - 1).collect())
            .unwrap();
    }

    /// Five relations over 5 nodes: the search passes every start yet the
    /// set is not even a semigraphoid.
    pub fn tsp_not_faithful() -> CiSet {
        let mut c = CiSet::new(5);
        stmt(&mut c, 1, 5, &[2, 3]);
        stmt(&mut c, 2, 4, &[1, 3]);
        stmt(&mut c, 3, 5, &[1, 2, 4]);
        stmt(&mut c, 1, 4, &[2, 3, 5]);
        stmt(&mut c, 1, 4, &[2, 3]);
        c
    }

    /// Three relations over 4 nodes: edge walks recover the sparsest class,
    /// covered-arrow walks from 1423 do not.
    pub fn esp_not_tsp() -> CiSet {
        let mut c = CiSet::new(4);
        stmt(&mut c, 1, 2, &[4]);
        stmt(&mut c, 1, 3, &[2]);
        stmt(&mut c, 2, 4, &[1, 3]);
        c
    }

    /// Three relations over 5 nodes: a unique sparsest class exists but edge
    /// walks from 54321 cannot reach it.
    pub fn smr_not_esp() -> CiSet {
        let mut c = CiSet::new(5);
        stmt(&mut c, 1, 3, &[2]);
        stmt(&mut c, 2, 4, &[1, 3]);
        stmt(&mut c, 4, 5, &[]);
        c
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::graph::test_support::random_dag;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn statement_normalizes_and_validates() {
        let s = CiStatement::new(3, 1, NodeSet::singleton(0)).unwrap();
        assert_eq!((s.i, s.j), (1, 3));
        assert!(CiStatement::new(1, 1, NodeSet::new()).is_err());
        assert!(CiStatement::new(1, 2, NodeSet::singleton(2)).is_err());
    }

    #[test]
    fn dsep_oracle_matches_chain_and_collider() {
        let chain = DsepOracle::new(Dag::from_arrows(3, &[(0, 1), (1, 2)]).unwrap());
        assert!(chain.independent(0, 2, &NodeSet::singleton(1)).unwrap());
        let coll = DsepOracle::new(Dag::from_arrows(3, &[(0, 1), (2, 1)]).unwrap());
        assert!(!coll.independent(0, 2, &NodeSet::singleton(1)).unwrap());
        assert!(coll.independent(0, 2, &NodeSet::new()).unwrap());
    }

    #[test]
    fn explicit_set_agrees_with_dsep_enumeration() {
        let mut rng = ChaCha20Rng::seed_from_u64(41);
        for p in 3..=5 {
            for _ in 0..8 {
                let g = random_dag(p, 0.5, &mut rng);
                let set = CiSet::all_dseps(&g, false).unwrap();
                let dsep = DsepOracle::new(g.clone());
                for i in 0..p {
                    for j in i + 1..p {
                        let rest: Vec<usize> = (0..p).filter(|&v| v != i && v != j).collect();
                        for mask in 0..(1u64 << rest.len()) {
                            let s: NodeSet = rest
                                .iter()
                                .enumerate()
                                .filter(|(b, _)| mask >> b & 1 == 1)
                                .map(|(_, &v)| v)
                                .collect();
                            assert_eq!(
                                set.independent(i, j, &s).unwrap(),
                                dsep.independent(i, j, &s).unwrap()
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn dsep_relations_form_a_graphoid() {
        let mut rng = ChaCha20Rng::seed_from_u64(43);
        for _ in 0..10 {
            let g = random_dag(5, 0.5, &mut rng);
            let set = CiSet::all_dseps(&g, false).unwrap();
            let report = check_graphoid(&set, 5).unwrap();
            assert!(report.is_graphoid(), "failed on {g:?}: {report:?}");
        }
    }

    #[test]
    fn empty_set_is_vacuously_graphoid() {
        let report = check_graphoid(&CiSet::new(4), 4).unwrap();
        assert!(report.is_graphoid());
    }

    #[test]
    fn five_relation_set_fails_sg2_with_expected_witness() {
        let c = tsp_not_faithful();
        let report = check_graphoid(&c, 5).unwrap();
        assert!(report.sg1.holds);
        assert!(!report.sg2.holds);
        let (p1, p2, missing) = report.sg2.counterexample.unwrap();
        // 1 ⊥ 5 | {2,3} and 1 ⊥ 4 | {2,3,5} force 1 ⊥ 5 | {2,3,4}.
        let expect_p1 = CiStatement::new(0, 4, [1, 2].into_iter().collect()).unwrap();
        let expect_p2 = CiStatement::new(0, 3, [1, 2, 4].into_iter().collect()).unwrap();
        let expect_missing = CiStatement::new(0, 4, [1, 2, 3].into_iter().collect()).unwrap();
        assert_eq!((p1, p2, missing), (expect_p1, expect_p2, expect_missing));
    }

    #[test]
    fn cache_returns_consistent_answers() {
        let g = Dag::from_arrows(3, &[(0, 1), (1, 2)]).unwrap();
        let inner = DsepOracle::new(g);
        let cached = CachedOracle::new(&inner);
        for _ in 0..3 {
            assert!(cached.independent(0, 2, &NodeSet::singleton(1)).unwrap());
            assert!(cached.independent(2, 0, &NodeSet::singleton(1)).unwrap());
        }
        assert_eq!(cached.queries_cached(), 1);
    }

    #[test]
    fn edge_restricted_oracle_blocks_outside_pairs() {
        let g = Dag::from_arrows(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let inner = DsepOracle::new(g);
        let restricted = EdgeRestrictedOracle::new(&inner, &[(0, 1), (1, 2)]);
        assert!(restricted.independent(0, 2, &NodeSet::new()).unwrap());
        assert!(!restricted.independent(0, 1, &NodeSet::new()).unwrap());
    }
}
