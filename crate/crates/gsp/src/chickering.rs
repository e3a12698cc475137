//! Edge-operation calculus between independence maps.
//!
//! Given DAGs `g ≤ h` (every CI encoded by `h` holds in `g`), a sequence of
//! single arrow additions and covered-arrow reversals transforms `g` into `h`
//! in at most `r + 2m` steps, where `r` counts arrows of `h` reversed in `g`
//! and `m` counts arrows of `h` absent from `g`. This module implements the
//! step operation and the full sequence; the search modules use it only in
//! tests and verification, never in the hot path.

use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::set::NodeSet;

/// One transformation step and the rule that selected it.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum StepKind {
    AddArrow,
    ReverseCovered,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ChickeringStep {
    pub kind: StepKind,
    pub arrow: (usize, usize),
    /// Which rule fired: 4 (sink parent addition), 6 (covered reversal),
    /// 7 or 8 (parent alignment additions).
    pub rule: u8,
}

/// `true` iff `CI(g) ⊇ CI(h)`, checked through the local Markov statements
/// of `h`: each node must be d-separated in `g` from its `h`-nondescendants
/// minus its `h`-parents, given those parents.
pub fn is_independence_map(g: &Dag, h: &Dag) -> Result<bool> {
    if g.p() != h.p() {
        return Err(Error::InvalidInput("node counts differ".into()));
    }
    for v in 0..h.p() {
        let pa = h.parents(v);
        let others = h.nondescendants(v).difference(pa);
        if !g.d_separated_sets(&NodeSet::singleton(v), &others, pa) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn alive_children(g: &Dag, v: usize, alive: &NodeSet) -> NodeSet {
    g.children(v).intersection(alive)
}

fn alive_parents(g: &Dag, v: usize, alive: &NodeSet) -> NodeSet {
    g.parents(v).intersection(alive)
}

/// Descendants of `v` within the alive node set (proper).
fn alive_descendants(g: &Dag, v: usize, alive: &NodeSet) -> NodeSet {
    let mut seen = NodeSet::new();
    let mut stack: Vec<usize> = alive_children(g, v, alive).iter().collect();
    while let Some(u) = stack.pop() {
        if seen.insert(u) {
            stack.extend(alive_children(g, u, alive).iter());
        }
    }
    seen
}

/// Applies one edge operation to `g` toward `h`, following the classic
/// apply-edge-operation procedure; ties (sink choice, maximal elements) are
/// broken by smallest index so runs are reproducible.
pub fn apply_edge_operation(g: &Dag, h: &Dag) -> Result<(Dag, ChickeringStep)> {
    if g == h {
        return Err(Error::Contract("graphs are already equal".into()));
    }
    if !is_independence_map(g, h)? {
        return Err(Error::Contract("g is not an independence map of h".into()));
    }
    let p = g.p();
    let mut alive = NodeSet::full(p);

    // Prune nodes that are sinks in both graphs with identical parents.
    loop {
        let prunable = alive.iter().find(|&y| {
            alive_children(g, y, &alive).is_empty()
                && alive_children(h, y, &alive).is_empty()
                && alive_parents(g, y, &alive) == alive_parents(h, y, &alive)
        });
        match prunable {
            Some(y) => {
                alive.remove(y);
            }
            None => break,
        }
    }

    // Smallest sink of h among the remaining nodes.
    let y = alive
        .iter()
        .find(|&v| alive_children(h, v, &alive).is_empty())
        .ok_or_else(|| Error::Internal("no sink left in target DAG".into()))?;

    if alive_children(g, y, &alive).is_empty() {
        // Rule 4: add a missing parent of the common sink.
        let x = alive_parents(h, y, &alive)
            .difference(&alive_parents(g, y, &alive))
            .smallest()
            .ok_or_else(|| Error::Internal("sink has no missing parent".into()))?;
        let mut out = g.clone();
        out.insert_arrow(x, y);
        return Ok((
            out,
            ChickeringStep {
                kind: StepKind::AddArrow,
                arrow: (x, y),
                rule: 4,
            },
        ));
    }

    // The maximal element of the g-descendants of y with respect to h:
    // the member no other member is an h-ancestor of.
    let de_y = alive_descendants(g, y, &alive);
    let d = de_y
        .iter()
        .find(|&cand| {
            !de_y
                .iter()
                .any(|o| o != cand && alive_descendants(h, o, &alive).contains(cand))
        })
        .ok_or_else(|| Error::Internal("no maximal descendant".into()))?;

    // Maximal child of y (in g) through which d is reachable: a qualifying
    // child with no qualifying child above it.
    let through: Vec<usize> = alive_children(g, y, &alive)
        .iter()
        .filter(|&z| z == d || alive_descendants(g, z, &alive).contains(d))
        .collect();
    let z = *through
        .iter()
        .find(|&&z| {
            !through
                .iter()
                .any(|&o| o != z && alive_descendants(g, o, &alive).contains(z))
        })
        .ok_or_else(|| Error::Internal("no maximal child".into()))?;

    if g.is_covered(y, z) {
        // Rule 6: reverse the covered arrow.
        let out = g.reverse_covered(y, z)?;
        if out.topological_order().is_none() {
            return Err(Error::Internal(format!(
                "reversal of {}->{} broke acyclicity in {:?} toward {:?}",
                y + 1,
                z + 1,
                g,
                h
            )));
        }
        return Ok((
            out,
            ChickeringStep {
                kind: StepKind::ReverseCovered,
                arrow: (y, z),
                rule: 6,
            },
        ));
    }

    if let Some(x) = alive_parents(g, y, &alive)
        .difference(&alive_parents(g, z, &alive))
        .smallest()
    {
        // Rule 7: align z's parents with y's.
        let mut out = g.clone();
        out.insert_arrow(x, z);
        return Ok((
            out,
            ChickeringStep {
                kind: StepKind::AddArrow,
                arrow: (x, z),
                rule: 7,
            },
        ));
    }

    // Rule 8: align y's parents with z's (never through y itself).
    let x = alive_parents(g, z, &alive)
        .without(y)
        .difference(&alive_parents(g, y, &alive))
        .smallest()
        .ok_or_else(|| Error::Internal("rule 8 found no parent to add".into()))?;
    let mut out = g.clone();
    out.insert_arrow(x, y);
    Ok((
        out,
        ChickeringStep {
            kind: StepKind::AddArrow,
            arrow: (x, y),
            rule: 8,
        },
    ))
}

/// Bound on the number of edge operations from `g` to `h`: reversals plus
/// twice the missing arrows.
pub fn sequence_bound(g: &Dag, h: &Dag) -> usize {
    let mut r = 0;
    let mut m = 0;
    for (u, v) in h.arrows() {
        if g.has_arrow(v, u) {
            r += 1;
        } else if !g.has_arrow(u, v) {
            m += 1;
        }
    }
    r + 2 * m
}

/// Repeats [`apply_edge_operation`] until `h` is reached, returning each
/// intermediate DAG with the step that produced it. Exceeding the `r + 2m`
/// bound is an internal invariant failure, surfaced rather than looped past.
pub fn chickering_sequence(g: &Dag, h: &Dag) -> Result<Vec<(Dag, ChickeringStep)>> {
    if !is_independence_map(g, h)? {
        return Err(Error::Contract("g is not an independence map of h".into()));
    }
    let bound = sequence_bound(g, h);
    let mut out = Vec::new();
    let mut cur = g.clone();
    while cur != *h {
        if out.len() >= bound {
            return Err(Error::Internal(format!(
                "edge-operation sequence exceeded its bound of {bound} steps"
            )));
        }
        let (next, step) = apply_edge_operation(&cur, h)?;
        out.push((next.clone(), step));
        cur = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ci::DsepOracle;
    use crate::graph::test_support::random_dag;
    use crate::imap::minimal_imap;
    use crate::perm::{all_permutations, Permutation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn independence_map_basics() {
        let empty = Dag::new(2);
        let one = Dag::from_arrows(2, &[(0, 1)]).unwrap();
        assert!(is_independence_map(&empty, &one).unwrap());
        assert!(!is_independence_map(&one, &empty).unwrap());
        assert!(is_independence_map(&one, &one).unwrap());
    }

    #[test]
    fn every_imap_is_an_independence_map_of_the_source() {
        let mut rng = ChaCha20Rng::seed_from_u64(71);
        for p in 3..=5 {
            for _ in 0..5 {
                let g = random_dag(p, 0.5, &mut rng);
                let oracle = DsepOracle::new(g.clone());
                for perm in all_permutations(p) {
                    let m = minimal_imap(&perm, &oracle).unwrap();
                    assert!(is_independence_map(&g, &m.dag).unwrap());
                }
            }
        }
    }

    #[test]
    fn single_covered_reversal() {
        let g = Dag::from_arrows(2, &[(0, 1)]).unwrap();
        let h = Dag::from_arrows(2, &[(1, 0)]).unwrap();
        assert_eq!(sequence_bound(&g, &h), 1);
        let (out, step) = apply_edge_operation(&g, &h).unwrap();
        assert_eq!(out, h);
        assert_eq!(step.kind, StepKind::ReverseCovered);
        assert_eq!(step.rule, 6);
    }

    #[test]
    fn single_addition() {
        let g = Dag::new(2);
        let h = Dag::from_arrows(2, &[(0, 1)]).unwrap();
        let (out, step) = apply_edge_operation(&g, &h).unwrap();
        assert_eq!(out, h);
        assert_eq!(step.rule, 4);
    }

    #[test]
    fn chain_to_complete_needs_one_addition() {
        let g = Dag::from_arrows(3, &[(0, 1), (1, 2)]).unwrap();
        let h = Dag::from_arrows(3, &[(0, 1), (0, 2), (1, 2)]).unwrap();
        assert_eq!(sequence_bound(&g, &h), 2);
        let seq = chickering_sequence(&g, &h).unwrap();
        assert!(seq.len() <= 2);
        assert_eq!(seq.last().unwrap().0, h);
    }

    #[test]
    fn equal_graphs_give_empty_sequence() {
        let g = Dag::from_arrows(3, &[(0, 1)]).unwrap();
        assert!(chickering_sequence(&g, &g).unwrap().is_empty());
        assert!(apply_edge_operation(&g, &g).is_err());
    }

    #[test]
    fn precondition_is_enforced() {
        let g = Dag::from_arrows(2, &[(0, 1)]).unwrap();
        let h = Dag::new(2);
        assert!(apply_edge_operation(&g, &h).is_err());
        assert!(chickering_sequence(&g, &h).is_err());
    }

    #[test]
    fn random_pairs_meet_bound_and_stay_independence_maps() {
        let mut rng = ChaCha20Rng::seed_from_u64(73);
        let mut done = 0;
        while done < 200 {
            let p = 3 + (done % 4); // p in 3..=6
            let g = random_dag(p, 0.45, &mut rng);
            let oracle = DsepOracle::new(g.clone());
            let perm = Permutation::random(p, &mut rng);
            let m = minimal_imap(&perm, &oracle).unwrap();
            // g <= m.dag by construction under a faithful oracle.
            let bound = sequence_bound(&g, &m.dag);
            let seq = chickering_sequence(&g, &m.dag).unwrap();
            assert!(seq.len() <= bound, "bound {bound} exceeded: {}", seq.len());
            let mut arrows = g.arrow_count();
            for (inter, step) in &seq {
                assert!(is_independence_map(inter, &m.dag).unwrap());
                assert!(inter.arrow_count() >= arrows, "arrow count decreased");
                arrows = inter.arrow_count();
                if step.kind == StepKind::ReverseCovered {
                    assert_eq!(step.rule, 6);
                }
            }
            assert_eq!(seq.last().map(|(d, _)| d.clone()).unwrap_or(g.clone()), m.dag);
            done += 1;
        }
    }

    /// Common sinks of two ordered minimal I-MAPs carry identical parents.
    #[test]
    fn common_sinks_share_parents_for_graphoid_sources() {
        let mut rng = ChaCha20Rng::seed_from_u64(79);
        for _ in 0..40 {
            let g = random_dag(5, 0.5, &mut rng);
            let oracle = DsepOracle::new(g.clone());
            let m1 = minimal_imap(&Permutation::random(5, &mut rng), &oracle).unwrap();
            let m2 = minimal_imap(&Permutation::random(5, &mut rng), &oracle).unwrap();
            if !is_independence_map(&m1.dag, &m2.dag).unwrap() {
                continue;
            }
            for y in 0..5 {
                if m1.dag.children(y).is_empty() && m2.dag.children(y).is_empty() {
                    assert_eq!(m1.dag.parents(y), m2.dag.parents(y));
                }
            }
        }
    }
}
