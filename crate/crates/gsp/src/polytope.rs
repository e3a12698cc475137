//! Quotient edge-graphs of the permutohedron.
//!
//! Vertices of the permutohedron are the `p!` node orders; edges join orders
//! differing by an adjacent transposition and carry the CI statement
//! `π_i ⊥ π_{i+1} | {π_1..π_{i-1}}`. Contracting the edges whose statement
//! the oracle accepts yields the search space of the edge-walk variant:
//! vertex classes correspond to distinct minimal I-MAPs whenever the CI set
//! is a graphoid. A second contraction over first-two-position swaps gives
//! the even permutohedron and, combined, the even associahedron.

use crate::ci::{CachedOracle, CiOracle};
use crate::error::{Error, Result};
use crate::graph::{Dag, Pdag};
use crate::imap::minimal_imap;
use crate::perm::{all_permutations, Permutation};
use std::collections::{BTreeSet, HashMap};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum PolytopeKind {
    Associahedron,
    EvenPermutohedron,
    EvenAssociahedron,
}

/// Label carried by a vertex class.
#[derive(Clone, Debug)]
pub enum ClassLabel {
    /// Distinct minimal I-MAPs of the members (one entry for graphoids).
    Dags(Vec<Dag>),
    /// Even-permutation class; the members are the label.
    EvenClass,
    /// Distinct partially directed graphs: the member I-MAPs with their
    /// trivially covered first-pair arrow unoriented.
    Partial(Vec<Pdag>),
}

#[derive(Clone, Debug)]
pub struct VertexClass {
    /// Member permutations, ascending.
    pub members: Vec<Permutation>,
    pub label: ClassLabel,
}

impl VertexClass {
    /// Arrow count used by walks: the sparsest I-MAP of the class.
    pub fn arrow_count(&self) -> usize {
        match &self.label {
            ClassLabel::Dags(dags) => dags.iter().map(Dag::arrow_count).min().unwrap_or(0),
            ClassLabel::Partial(gs) => gs.iter().map(Pdag::edge_count).min().unwrap_or(0),
            ClassLabel::EvenClass => 0,
        }
    }

    /// Deterministic representative DAG of an associahedron class.
    pub fn representative(&self) -> Option<&Dag> {
        match &self.label {
            ClassLabel::Dags(dags) => dags
                .iter()
                .min_by_key(|d| (d.arrow_count(), d.canonical_hash())),
            _ => None,
        }
    }

    fn label_string(&self) -> String {
        match &self.label {
            ClassLabel::Dags(dags) => dags
                .iter()
                .map(dag_label)
                .collect::<Vec<_>>()
                .join(" / "),
            ClassLabel::EvenClass => self
                .members
                .iter()
                .map(|m| m.to_string())
                .collect::<Vec<_>>()
                .join("|"),
            ClassLabel::Partial(gs) => gs
                .iter()
                .map(pdag_label)
                .collect::<Vec<_>>()
                .join(" / "),
        }
    }
}

fn dag_label(d: &Dag) -> String {
    let parts: Vec<String> = d
        .arrows()
        .iter()
        .map(|&(u, v)| format!("{}->{}", u + 1, v + 1))
        .collect();
    if parts.is_empty() {
        "(empty)".into()
    } else {
        parts.join(",")
    }
}

fn pdag_label(g: &Pdag) -> String {
    let mut parts: Vec<String> = g
        .directed_edges()
        .iter()
        .map(|&(u, v)| format!("{}->{}", u + 1, v + 1))
        .collect();
    parts.extend(
        g.undirected_edges()
            .iter()
            .map(|&(u, v)| format!("{}--{}", u + 1, v + 1)),
    );
    if parts.is_empty() {
        "(empty)".into()
    } else {
        parts.join(",")
    }
}

/// A contracted permutohedron: vertex classes partitioning `S_p` plus the
/// symmetric, irreflexive adjacency between classes.
#[derive(Clone, Debug)]
pub struct QuotientPolytopeGraph {
    pub kind: PolytopeKind,
    pub p: usize,
    pub classes: Vec<VertexClass>,
    pub adjacency: Vec<Vec<usize>>,
    /// Classes whose members map to more than one distinct label; nonzero
    /// only when the CI source is not a graphoid.
    pub multi_label_classes: usize,
    class_of_rank: Vec<usize>,
}

impl QuotientPolytopeGraph {
    pub fn vertex_count(&self) -> usize {
        self.classes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// The class containing a permutation.
    pub fn class_of(&self, perm: &Permutation) -> Result<usize> {
        if perm.p() != self.p {
            return Err(Error::InvalidInput("permutation size mismatch".into()));
        }
        let rank = lex_rank(perm);
        Ok(self.class_of_rank[rank])
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, nbrs) in self.adjacency.iter().enumerate() {
            for &b in nbrs {
                if a < b {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// DOT rendering with class labels.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph quotient {\n  node [shape=box];\n");
        for (i, class) in self.classes.iter().enumerate() {
            out.push_str(&format!(
                "  v{} [label=\"{}\"];\n",
                i,
                class.label_string().replace('"', "'")
            ));
        }
        for (a, b) in self.edges() {
            out.push_str(&format!("  v{a} -- v{b};\n"));
        }
        out.push_str("}\n");
        out
    }

    /// JSON adjacency export.
    pub fn to_json(&self) -> serde_json::Value {
        let classes: Vec<serde_json::Value> = self
            .classes
            .iter()
            .map(|c| {
                serde_json::json!({
                    "members": c.members.iter().map(|m| m.to_string()).collect::<Vec<_>>(),
                    "label": c.label_string(),
                    "arrows": c.arrow_count(),
                })
            })
            .collect();
        serde_json::json!({
            "kind": match self.kind {
                PolytopeKind::Associahedron => "associahedron",
                PolytopeKind::EvenPermutohedron => "even-permutohedron",
                PolytopeKind::EvenAssociahedron => "even-associahedron",
            },
            "nodes": self.p,
            "vertex_count": self.vertex_count(),
            "edge_count": self.edge_count(),
            "classes": classes,
            "adjacency": self.adjacency,
        })
    }
}

/// Lexicographic rank of a permutation among all `p!` orders.
fn lex_rank(perm: &Permutation) -> usize {
    let p = perm.p();
    let mut rank = 0usize;
    let mut factorial = (1..p).product::<usize>().max(1);
    let mut remaining: Vec<usize> = (0..p).collect();
    for k in 0..p {
        let v = perm.node_at(k);
        let pos = remaining.iter().position(|&x| x == v).unwrap();
        rank += pos * factorial;
        remaining.remove(pos);
        if p - k > 1 {
            factorial /= p - k - 1;
        }
    }
    rank
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn guard(p: usize, max: usize, what: &str, force: bool) -> Result<()> {
    if p > max && !force {
        return Err(Error::Guard(format!(
            "{what} enumerates {p}! permutations; the default guard is p <= {max} (pass force to override)"
        )));
    }
    Ok(())
}

/// Labels a finished class: the label plus the count of distinct labels
/// among the members.
type ClassLabeler<'a> = &'a mut dyn FnMut(&[Permutation]) -> Result<(ClassLabel, usize)>;

/// Shared construction: enumerate `S_p`, contract the selected transposition
/// edges, group the rest into quotient adjacency.
fn build_quotient(
    p: usize,
    kind: PolytopeKind,
    contract: &mut dyn FnMut(&Permutation, usize) -> Result<bool>,
    label: ClassLabeler<'_>,
) -> Result<QuotientPolytopeGraph> {
    let perms = all_permutations(p);
    let rank_of: HashMap<&[usize], usize> = perms
        .iter()
        .enumerate()
        .map(|(i, perm)| (perm.order(), i))
        .collect();
    let mut uf = UnionFind::new(perms.len());
    let mut cross: Vec<(usize, usize)> = Vec::new();
    for (idx, perm) in perms.iter().enumerate() {
        let mut order = perm.order().to_vec();
        for i in 0..p.saturating_sub(1) {
            order.swap(i, i + 1);
            let other = rank_of[order.as_slice()];
            if other > idx {
                if contract(perm, i)? {
                    uf.union(idx, other);
                } else {
                    cross.push((idx, other));
                }
            }
            order.swap(i, i + 1);
        }
    }
    // Deterministic class ids: ascending by smallest member rank.
    let mut root_to_class: HashMap<usize, usize> = HashMap::new();
    let mut class_members: Vec<Vec<usize>> = Vec::new();
    let mut class_of_rank = vec![0usize; perms.len()];
    for (idx, slot) in class_of_rank.iter_mut().enumerate() {
        let root = uf.find(idx);
        let class = *root_to_class.entry(root).or_insert_with(|| {
            class_members.push(Vec::new());
            class_members.len() - 1
        });
        class_members[class].push(idx);
        *slot = class;
    }
    let mut adjacency: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); class_members.len()];
    for (a, b) in cross {
        let (ca, cb) = (class_of_rank[a], class_of_rank[b]);
        if ca != cb {
            adjacency[ca].insert(cb);
            adjacency[cb].insert(ca);
        }
    }
    let mut classes = Vec::with_capacity(class_members.len());
    let mut multi = 0usize;
    for members in &class_members {
        let member_perms: Vec<Permutation> = members.iter().map(|&r| perms[r].clone()).collect();
        let (lbl, distinct) = label(&member_perms)?;
        if distinct > 1 {
            multi += 1;
        }
        classes.push(VertexClass {
            members: member_perms,
            label: lbl,
        });
    }
    Ok(QuotientPolytopeGraph {
        kind,
        p,
        classes,
        adjacency: adjacency.into_iter().map(|s| s.into_iter().collect()).collect(),
        multi_label_classes: multi,
        class_of_rank,
    })
}

/// The contracted permutohedron whose classes are minimal I-MAPs: edges
/// labeled by accepted CI statements are collapsed. Guarded to `p <= 7`.
///
/// When the CI source is not a graphoid a class may contain several distinct
/// I-MAPs; `multi_label_classes` counts them and the label keeps all.
pub fn dag_associahedron_graph(
    oracle: &dyn CiOracle,
    p: usize,
    force: bool,
) -> Result<QuotientPolytopeGraph> {
    if oracle.p() != p {
        return Err(Error::InvalidInput("node count mismatch".into()));
    }
    guard(p, 7, "associahedron construction", force)?;
    let cache = CachedOracle::new(oracle);
    build_quotient(
        p,
        PolytopeKind::Associahedron,
        &mut |perm, i| {
            let (a, b) = (perm.node_at(i), perm.node_at(i + 1));
            cache.independent(a, b, &perm.prefix(i))
        },
        &mut |members| {
            let mut dags: Vec<Dag> = Vec::new();
            for m in members {
                let dag = minimal_imap(m, &cache)?.dag;
                if !dags.contains(&dag) {
                    dags.push(dag);
                }
            }
            dags.sort_by_key(|d| (d.arrow_count(), d.arrows()));
            let n = dags.len();
            Ok((ClassLabel::Dags(dags), n))
        },
    )
}

/// The permutohedron with first-two-position swaps contracted: `p!/2`
/// two-member classes. Guarded to `p <= 8`.
pub fn even_permutohedron_graph(p: usize, force: bool) -> Result<QuotientPolytopeGraph> {
    if p < 2 {
        return Err(Error::InvalidInput("need at least two nodes".into()));
    }
    guard(p, 8, "even permutohedron construction", force)?;
    build_quotient(
        p,
        PolytopeKind::EvenPermutohedron,
        &mut |_, i| Ok(i == 0),
        &mut |_| Ok((ClassLabel::EvenClass, 1)),
    )
}

/// Both contractions at once: CI-labeled edges and first-two-position swaps.
/// Class labels are the member I-MAPs with the trivially covered first-pair
/// arrow unoriented.
pub fn even_associahedron_graph(
    oracle: &dyn CiOracle,
    p: usize,
    force: bool,
) -> Result<QuotientPolytopeGraph> {
    if oracle.p() != p {
        return Err(Error::InvalidInput("node count mismatch".into()));
    }
    if p < 2 {
        return Err(Error::InvalidInput("need at least two nodes".into()));
    }
    guard(p, 7, "even associahedron construction", force)?;
    let cache = CachedOracle::new(oracle);
    build_quotient(
        p,
        PolytopeKind::EvenAssociahedron,
        &mut |perm, i| {
            if i == 0 {
                return Ok(true);
            }
            let (a, b) = (perm.node_at(i), perm.node_at(i + 1));
            cache.independent(a, b, &perm.prefix(i))
        },
        &mut |members| {
            let mut labels: Vec<Pdag> = Vec::new();
            for m in members {
                let dag = minimal_imap(m, &cache)?.dag;
                let (w0, w1) = (m.node_at(0), m.node_at(1));
                let mut pg = Pdag::from_dag(&dag);
                if dag.has_arrow(w0, w1) {
                    pg.remove_edge(w0, w1);
                    pg.add_undirected(w0, w1);
                }
                if !labels.contains(&pg) {
                    labels.push(pg);
                }
            }
            let n = labels.len();
            Ok((ClassLabel::Partial(labels), n))
        },
    )
}

/// Vertices of the even associahedron as partially directed graphs, one list
/// entry per class (first label of each).
pub fn even_associahedron_vertices(
    oracle: &dyn CiOracle,
    p: usize,
    force: bool,
) -> Result<Vec<Pdag>> {
    let graph = even_associahedron_graph(oracle, p, force)?;
    Ok(graph
        .classes
        .into_iter()
        .map(|c| match c.label {
            ClassLabel::Partial(mut gs) => gs.swap_remove(0),
            _ => unreachable!(),
        })
        .collect())
}

/// Coordinates realizing an even-permutohedron class as a vertex of the
/// permutohedron of `(3/2, 3/2, 3, 4, ..., p)`: the two leading nodes share
/// the averaged position `3/2`, every later node keeps its 1-based position.
/// Both members of a class yield the same vector, and distinct classes yield
/// distinct vectors.
pub fn even_perm_coordinates(member: &Permutation) -> Vec<f64> {
    let p = member.p();
    let mut coords = vec![0.0; p];
    for k in 0..p {
        coords[member.node_at(k)] = if k < 2 { 1.5 } else { (k + 1) as f64 };
    }
    coords
}

/// Depth-first edge walk on a prebuilt associahedron: move across classes of
/// equal arrow count, jump to any strictly sparser class, repeat from there.
/// Returns the final class representative and the accepted class trail.
pub fn edge_sp_on_graph(
    graph: &QuotientPolytopeGraph,
    start: &Permutation,
) -> Result<(Dag, Vec<usize>)> {
    edge_sp_walk(graph, start, false)
}

/// The walk with the monotonicity knob exposed: `allow_increasing` lets the
/// within-search walk pass through denser classes (the contract still only
/// jumps to strictly sparser ones).
pub fn edge_sp_walk(
    graph: &QuotientPolytopeGraph,
    start: &Permutation,
    allow_increasing: bool,
) -> Result<(Dag, Vec<usize>)> {
    if !matches!(graph.kind, PolytopeKind::Associahedron) {
        return Err(Error::InvalidInput(
            "edge walks run on the associahedron kind".into(),
        ));
    }
    let mut cur = graph.class_of(start)?;
    let mut trail = vec![cur];
    loop {
        let root_count = graph.classes[cur].arrow_count();
        let mut seen = std::collections::HashSet::new();
        seen.insert(cur);
        let mut stack = vec![cur];
        let mut jump = None;
        'dfs: while let Some(c) = stack.pop() {
            let mut plateau = Vec::new();
            for &n in &graph.adjacency[c] {
                let count = graph.classes[n].arrow_count();
                if count < root_count {
                    jump = Some(n);
                    break 'dfs;
                }
                if (count == root_count || allow_increasing) && seen.insert(n) {
                    plateau.push(n);
                }
            }
            while let Some(n) = plateau.pop() {
                stack.push(n);
            }
        }
        match jump {
            Some(n) => {
                cur = n;
                trail.push(n);
            }
            None => break,
        }
    }
    let dag = graph.classes[cur]
        .representative()
        .ok_or_else(|| Error::Internal("associahedron class without a DAG label".into()))?
        .clone();
    Ok((dag, trail))
}

/// Builds the associahedron for the oracle and walks it from `start`.
pub fn edge_sp(
    oracle: &dyn CiOracle,
    start: &Permutation,
    p: usize,
    force: bool,
) -> Result<(Dag, Vec<usize>)> {
    let graph = dag_associahedron_graph(oracle, p, force)?;
    edge_sp_on_graph(&graph, start)
}
