//! The greedy sparsest-permutation search family.
//!
//! All variants share one move structure: stand on a permutation DAG, reverse
//! covered arrows to reach score-equal neighbors, and jump as soon as a
//! strictly better DAG appears within the search depth. They differ in how a
//! permutation is scored (arrow count or BIC) and in how a reversal updates
//! the DAG (full recompute or parent-constrained retests).

use crate::ci::{CachedOracle, CiOracle};
use crate::error::{Error, Result};
use crate::gauss::{bic_score, GaussOracle, GaussianSuffStats};
use crate::graph::{markov_equivalent, Dag};
use crate::imap::{constrained_flip_update, minimal_imap, FlipMode, MinimalImap};
use crate::perm::{all_permutations, Permutation};
use crate::set::NodeSet;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use std::time::Instant;

/// Where a run begins.
#[derive(Clone, Debug)]
pub enum StartPolicy {
    /// An explicit permutation (the natural order, a parsed one, ...).
    Order(Permutation),
    /// Uniformly random, from the seeded generator.
    Random,
    /// Resolved by the caller into an explicit permutation (the
    /// minimum-degree heuristic needs Gaussian statistics to run).
    MinDeg,
}

#[derive(Clone, Debug)]
pub struct SearchConfig {
    /// Maximum walk length per improvement search; `None` is unbounded.
    pub depth: Option<usize>,
    /// Number of restarts; the sparsest result across runs wins.
    pub runs: usize,
    pub start: StartPolicy,
    pub seed: u64,
    /// Wall-clock cutoff; expiry ends the search with what was found.
    pub deadline: Option<Instant>,
}

impl SearchConfig {
    pub fn new(start: StartPolicy) -> Self {
        Self {
            depth: None,
            runs: 1,
            start,
            seed: 0,
            deadline: None,
        }
    }

    pub fn with_depth(mut self, depth: Option<usize>) -> Self {
        self.depth = depth;
        self
    }

    pub fn with_runs(mut self, runs: usize) -> Self {
        self.runs = runs;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    Timeout,
}

/// One accepted event on the walk; serialized as a JSON line.
#[derive(Clone, Debug, Serialize)]
pub struct TraceEvent {
    pub run: usize,
    pub kind: &'static str,
    pub hash: u64,
    pub arrows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mv: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SearchTrace {
    pub events: Vec<TraceEvent>,
    /// DAGs visited across all improvement searches.
    pub visited: u64,
    pub termination: Termination,
}

impl SearchTrace {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).unwrap());
            out.push('\n');
        }
        out.push_str(&format!(
            "{}\n",
            serde_json::json!({"kind": "summary", "visited": self.visited, "termination": self.termination})
        ));
        out
    }
}

/// Shared depth-first improvement search over an abstract state.
///
/// From `root`, walk through states whose score ties the root's (within
/// `tol`), never revisiting a state, and return the first strictly better
/// state reachable in at most `depth` moves.
type Expand<'a, S> = &'a dyn Fn(&S) -> Result<Vec<(String, S)>>;

struct Dfs<'a, S> {
    expand: Expand<'a, S>,
    key: &'a dyn Fn(&S) -> u64,
    /// Higher is better.
    score: &'a dyn Fn(&S) -> f64,
    tol: f64,
    deadline: Option<Instant>,
    visited: u64,
    timed_out: bool,
}

impl<S: Clone> Dfs<'_, S> {
    fn search(&mut self, root: &S, depth: Option<usize>) -> Result<Option<(String, S)>> {
        let root_score = (self.score)(root);
        let mut seen = std::collections::HashSet::new();
        seen.insert((self.key)(root));
        let mut stack: Vec<(S, usize)> = vec![(root.clone(), 0)];
        while let Some((cur, dist)) = stack.pop() {
            self.visited += 1;
            if let Some(deadline) = self.deadline {
                if Instant::now() >= deadline {
                    self.timed_out = true;
                    return Ok(None);
                }
            }
            let can_step = depth.is_none_or(|d| dist < d);
            if !can_step {
                continue;
            }
            let mut plateau = Vec::new();
            for (mv, next) in (self.expand)(&cur)? {
                let s = (self.score)(&next);
                if s > root_score + self.tol {
                    return Ok(Some((mv, next)));
                }
                if (s - root_score).abs() <= self.tol && seen.insert((self.key)(&next)) {
                    plateau.push((next, dist + 1));
                }
            }
            // Reverse push so the lexicographically first neighbor is
            // explored first.
            while let Some(item) = plateau.pop() {
                stack.push(item);
            }
        }
        Ok(None)
    }
}

/// Runs the restart loop shared by every variant. `make_start` yields the
/// root state of run `r`; `expand`/`score`/`key` define the walk.
#[allow(clippy::too_many_arguments)]
fn run_search<S: Clone>(
    cfg: &SearchConfig,
    make_start: &mut dyn FnMut(usize) -> Result<S>,
    expand: Expand<'_, S>,
    key: &dyn Fn(&S) -> u64,
    score: &dyn Fn(&S) -> f64,
    arrows: &dyn Fn(&S) -> usize,
    tol: f64,
) -> Result<(Vec<S>, SearchTrace)> {
    if cfg.runs == 0 {
        return Err(Error::InvalidInput("runs must be positive".into()));
    }
    let mut dfs = Dfs {
        expand,
        key,
        score,
        tol,
        deadline: cfg.deadline,
        visited: 0,
        timed_out: false,
    };
    let mut events = Vec::new();
    let mut results = Vec::new();
    'runs: for run in 0..cfg.runs {
        let mut cur = make_start(run)?;
        events.push(TraceEvent {
            run,
            kind: "start",
            hash: key(&cur),
            arrows: arrows(&cur),
            score: Some(score(&cur)),
            mv: None,
        });
        loop {
            match dfs.search(&cur, cfg.depth)? {
                Some((mv, next)) => {
                    events.push(TraceEvent {
                        run,
                        kind: "jump",
                        hash: key(&next),
                        arrows: arrows(&next),
                        score: Some(score(&next)),
                        mv: Some(mv),
                    });
                    cur = next;
                }
                None => {
                    events.push(TraceEvent {
                        run,
                        kind: "run_end",
                        hash: key(&cur),
                        arrows: arrows(&cur),
                        score: Some(score(&cur)),
                        mv: None,
                    });
                    results.push(cur);
                    if dfs.timed_out {
                        break 'runs;
                    }
                    break;
                }
            }
        }
    }
    let trace = SearchTrace {
        events,
        visited: dfs.visited,
        termination: if dfs.timed_out {
            Termination::Timeout
        } else {
            Termination::Converged
        },
    };
    Ok((results, trace))
}

fn resolve_start(
    policy: &StartPolicy,
    run: usize,
    p: usize,
    rng: &mut ChaCha20Rng,
) -> Result<Permutation> {
    if run == 0 {
        match policy {
            StartPolicy::Order(perm) => {
                if perm.p() != p {
                    return Err(Error::InvalidInput(format!(
                        "start permutation over {} nodes, expected {}",
                        perm.p(),
                        p
                    )));
                }
                Ok(perm.clone())
            }
            StartPolicy::Random => Ok(Permutation::random(p, rng)),
            StartPolicy::MinDeg => Err(Error::InvalidInput(
                "minimum-degree starts need Gaussian statistics; resolve the start first".into(),
            )),
        }
    } else {
        Ok(Permutation::random(p, rng))
    }
}

/// Covered-arrow greedy search under an arbitrary CI oracle, scored by
/// sparsity. With unbounded depth and a single run this is the plain greedy
/// walk; bounding `depth` and adding restarts gives the budgeted variant.
pub fn triangle_sp(oracle: &dyn CiOracle, cfg: &SearchConfig) -> Result<(Dag, SearchTrace)> {
    let p = oracle.p();
    if p <= 1 {
        return Ok((
            Dag::new(p),
            SearchTrace {
                events: Vec::new(),
                visited: 0,
                termination: Termination::Converged,
            },
        ));
    }
    let cache = CachedOracle::new(oracle);
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let expand = |m: &MinimalImap| -> Result<Vec<(String, MinimalImap)>> {
        m.dag
            .covered_arrows()
            .into_iter()
            .map(|a| {
                let next = constrained_flip_update(m, a, &cache, FlipMode::Full)?;
                Ok((format!("{}->{}", a.0 + 1, a.1 + 1), next))
            })
            .collect()
    };
    let mut make_start = |run: usize| -> Result<MinimalImap> {
        let perm = resolve_start(&cfg.start, run, p, &mut rng)?;
        minimal_imap(&perm, &cache)
    };
    let (results, trace) = run_search(
        cfg,
        &mut make_start,
        &expand,
        &|m| m.dag.canonical_hash(),
        &|m| -(m.dag.arrow_count() as f64),
        &|m| m.dag.arrow_count(),
        0.25,
    )?;
    let best = results
        .into_iter()
        .min_by_key(|m| (m.dag.arrow_count(), m.dag.canonical_hash()))
        .expect("at least one run");
    Ok((best.dag, trace))
}

/// BIC-scored variant: identical move structure, but a permutation is scored
/// by the BIC of its fitted DAG and jumps require a strict BIC increase.
pub fn triangle_sp_bic(
    stats: &GaussianSuffStats,
    cfg: &SearchConfig,
) -> Result<(Dag, SearchTrace)> {
    let p = stats.p();
    let n = stats.n().ok_or_else(|| {
        Error::InvalidInput("BIC search needs a sample size on the statistics".into())
    })?;
    if n <= p + 3 {
        return Err(Error::InvalidInput(format!(
            "sample size {n} too small for p = {p}"
        )));
    }
    if p <= 1 {
        return Ok((
            Dag::new(p),
            SearchTrace {
                events: Vec::new(),
                visited: 0,
                termination: Termination::Converged,
            },
        ));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);

    #[derive(Clone)]
    struct BicState {
        dag: Dag,
        perm: Permutation,
        bic: f64,
    }

    let fit = |perm: &Permutation| -> Result<BicState> {
        let dag = fit_bic_dag(stats, perm)?;
        let bic = bic_score(stats, &dag)?;
        Ok(BicState {
            dag,
            perm: perm.clone(),
            bic,
        })
    };
    let expand = |s: &BicState| -> Result<Vec<(String, BicState)>> {
        s.dag
            .covered_arrows()
            .into_iter()
            .map(|(u, v)| {
                let next = fit(&s.perm.move_before(v, u))?;
                Ok((format!("{}->{}", u + 1, v + 1), next))
            })
            .collect()
    };
    let mut make_start = |run: usize| fit(&resolve_start(&cfg.start, run, p, &mut rng)?);
    // Markov-equivalent fits share their likelihood exactly; the tolerance
    // only absorbs floating-point jitter.
    let tol = 1e-7 * (1.0 + (n as f64) * p as f64);
    let (results, trace) = run_search(
        cfg,
        &mut make_start,
        &expand,
        &|s| s.dag.canonical_hash(),
        &|s| s.bic,
        &|s| s.dag.arrow_count(),
        tol,
    )?;
    let best = results
        .into_iter()
        .max_by(|a, b| {
            (a.bic, std::cmp::Reverse(a.dag.arrow_count()), std::cmp::Reverse(a.dag.canonical_hash()))
                .partial_cmp(&(b.bic, std::cmp::Reverse(b.dag.arrow_count()), std::cmp::Reverse(b.dag.canonical_hash())))
                .unwrap()
        })
        .expect("at least one run");
    Ok((best.dag, trace))
}

/// The BIC-optimal DAG consistent with a permutation. The score decomposes
/// per node, so each node picks its best parent subset among its order
/// predecessors: exhaustively for small predecessor sets, greedily beyond.
fn fit_bic_dag(stats: &GaussianSuffStats, perm: &Permutation) -> Result<Dag> {
    let p = perm.p();
    let n = stats.n().unwrap() as f64;
    let penalty = n.ln() / 2.0;
    let local = |v: usize, pa: &NodeSet| -> Result<f64> {
        let var = stats.residual_variance(v, pa)?;
        if var <= 0.0 {
            return Err(Error::Numerical(format!(
                "non-positive residual variance at node {}",
                v + 1
            )));
        }
        Ok(-(n / 2.0) * ((2.0 * std::f64::consts::PI * var).ln() + 1.0)
            - penalty * pa.len() as f64)
    };
    let mut dag = Dag::new(p);
    for b in 0..p {
        let v = perm.node_at(b);
        let preds: Vec<usize> = (0..b).map(|a| perm.node_at(a)).collect();
        let best = if preds.len() <= 12 {
            let mut best = (local(v, &NodeSet::new())?, NodeSet::new());
            for mask in 1..(1u64 << preds.len()) {
                let pa: NodeSet = preds
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| mask >> k & 1 == 1)
                    .map(|(_, &u)| u)
                    .collect();
                let sc = local(v, &pa)?;
                if sc > best.0 {
                    best = (sc, pa);
                }
            }
            best.1
        } else {
            // Greedy forward selection for wide prefixes.
            let mut pa = NodeSet::new();
            let mut cur = local(v, &pa)?;
            loop {
                let mut gain = None;
                for &u in &preds {
                    if pa.contains(u) {
                        continue;
                    }
                    let sc = local(v, &pa.with(u))?;
                    if sc > cur && gain.as_ref().is_none_or(|&(g, _)| sc > g) {
                        gain = Some((sc, u));
                    }
                }
                match gain {
                    Some((sc, u)) => {
                        pa.insert(u);
                        cur = sc;
                    }
                    None => break,
                }
            }
            pa
        };
        for u in best.iter() {
            dag.insert_arrow(u, v);
        }
    }
    Ok(dag)
}

/// High-dimensional variant: the initial I-MAP is built by thresholding
/// partial correlations at `tau`, and every covered flip retests only the
/// former common parents (parent-constrained conditioning sets). When a
/// moral graph is supplied, pairs outside it never become arrows.
pub fn highdim_greedy_sp(
    stats: &GaussianSuffStats,
    tau: f64,
    cfg: &SearchConfig,
    moral_graph: Option<&[(usize, usize)]>,
) -> Result<(Dag, SearchTrace)> {
    let p = stats.p();
    if tau <= 0.0 {
        return Err(Error::InvalidInput("threshold must be positive".into()));
    }
    if p <= 1 {
        return Ok((
            Dag::new(p),
            SearchTrace {
                events: Vec::new(),
                visited: 0,
                termination: Termination::Converged,
            },
        ));
    }
    let base = GaussOracle::new(stats.clone(), tau)?;
    let restricted;
    let oracle: &dyn CiOracle = match moral_graph {
        Some(pairs) => {
            restricted = crate::ci::EdgeRestrictedOracle::new(&base, pairs);
            &restricted
        }
        None => &base,
    };
    let cache = CachedOracle::new(oracle);
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let expand = |m: &MinimalImap| -> Result<Vec<(String, MinimalImap)>> {
        m.dag
            .covered_arrows()
            .into_iter()
            .map(|a| {
                let next = constrained_flip_update(m, a, &cache, FlipMode::Constrained)?;
                Ok((format!("{}->{}", a.0 + 1, a.1 + 1), next))
            })
            .collect()
    };
    let mut make_start = |run: usize| -> Result<MinimalImap> {
        let perm = if run == 0 {
            match &cfg.start {
                StartPolicy::MinDeg => {
                    crate::mindeg::neighbor_min_degree(stats, tau, moral_graph, &mut rng)?.0
                }
                other => resolve_start(other, 0, p, &mut rng)?,
            }
        } else {
            Permutation::random(p, &mut rng)
        };
        minimal_imap(&perm, &cache)
    };
    let (results, trace) = run_search(
        cfg,
        &mut make_start,
        &expand,
        &|m| m.dag.canonical_hash(),
        &|m| -(m.dag.arrow_count() as f64),
        &|m| m.dag.arrow_count(),
        0.25,
    )?;
    let best = results
        .into_iter()
        .min_by_key(|m| (m.dag.arrow_count(), m.dag.canonical_hash()))
        .expect("at least one run");
    Ok((best.dag, trace))
}

/// Result of the exhaustive search over all `p!` permutation DAGs.
#[derive(Clone, Debug)]
pub struct SpBruteForce {
    pub minimum: usize,
    /// Distinct sparsest DAGs, ascending by arrow list.
    pub sparsest: Vec<Dag>,
    /// The sparsest DAGs grouped into Markov equivalence classes.
    pub mecs: Vec<Vec<Dag>>,
}

/// Enumerates every permutation's minimal I-MAP and keeps the sparsest ones.
/// Factorial; guarded to `p <= 8` unless forced.
pub fn sp_brute_force(oracle: &dyn CiOracle, p: usize, force: bool) -> Result<SpBruteForce> {
    if p != oracle.p() {
        return Err(Error::InvalidInput("node count mismatch".into()));
    }
    if p > 8 && !force {
        return Err(Error::Guard(format!(
            "brute force over {p}! permutations (pass force to override)"
        )));
    }
    let cache = CachedOracle::new(oracle);
    let mut minimum = usize::MAX;
    let mut sparsest: Vec<Dag> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for perm in all_permutations(p) {
        let m = minimal_imap(&perm, &cache)?;
        let count = m.dag.arrow_count();
        if count < minimum {
            minimum = count;
            sparsest.clear();
            seen.clear();
        }
        if count == minimum && seen.insert(m.dag.arrows()) {
            sparsest.push(m.dag);
        }
    }
    sparsest.sort_by_key(|d| d.arrows());
    let mut mecs: Vec<Vec<Dag>> = Vec::new();
    for dag in &sparsest {
        match mecs
            .iter_mut()
            .find(|class| markov_equivalent(&class[0], dag).unwrap_or(false))
        {
            Some(class) => class.push(dag.clone()),
            None => mecs.push(vec![dag.clone()]),
        }
    }
    Ok(SpBruteForce {
        minimum,
        sparsest,
        mecs,
    })
}

/// Which identifiability condition to verify exhaustively.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Assumption {
    /// The covered-arrow walk recovers the sparsest class from every start.
    Tsp,
    /// The polytope edge walk recovers the sparsest class from every start.
    Esp,
    /// The sparsest Markov equivalence class is unique.
    Smr,
}

/// Outcome of an assumption check. For the search-based assumptions every
/// failing start is collected as a witness.
#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub holds: bool,
    pub witnesses: Vec<(Permutation, Dag)>,
    pub detail: String,
}

impl CheckOutcome {
    pub fn has_witness_start(&self, text: &str) -> bool {
        self.witnesses.iter().any(|(p, _)| p.to_string() == text)
    }
}

/// Complete covered-flip walk over permutation space, used by the
/// assumption checker: after reversing a covered arrow the walk may continue
/// from any linear extension of the reversed DAG. For graphoid CI sources
/// all extensions induce the same I-MAP and this coincides with
/// [`triangle_sp`]; for arbitrary explicit sets the extension choice matters
/// and the checker must not miss any.
struct CompleteWalk {
    imaps: Vec<Dag>,
    successors: Vec<Vec<usize>>,
}

impl CompleteWalk {
    fn build(oracle: &dyn CiOracle, p: usize) -> Result<Self> {
        let perms = all_permutations(p);
        let cache = CachedOracle::new(oracle);
        let mut imaps = Vec::with_capacity(perms.len());
        for perm in &perms {
            imaps.push(minimal_imap(perm, &cache)?.dag);
        }
        let mut successors = Vec::with_capacity(perms.len());
        for g in &imaps {
            let mut succ = Vec::new();
            let mut seen = std::collections::HashSet::new();
            for (u, v) in g.covered_arrows() {
                let reversed = g.reverse_covered(u, v)?;
                for (t, tau) in perms.iter().enumerate() {
                    let extends = reversed
                        .arrows()
                        .into_iter()
                        .all(|(a, b)| tau.position_of(a) < tau.position_of(b));
                    if extends && seen.insert(t) {
                        succ.push(t);
                    }
                }
            }
            successors.push(succ);
        }
        Ok(Self { imaps, successors })
    }

    /// Greedy walk from one start: explore the equal-count plateau, jump to
    /// any strictly sparser I-MAP, repeat to a fixpoint.
    fn run(&self, start: usize) -> usize {
        let mut cur = start;
        loop {
            let count = self.imaps[cur].arrow_count();
            let mut seen = std::collections::HashSet::new();
            seen.insert(cur);
            let mut stack = vec![cur];
            let mut jump = None;
            'dfs: while let Some(state) = stack.pop() {
                for &next in &self.successors[state] {
                    let c = self.imaps[next].arrow_count();
                    if c < count {
                        jump = Some(next);
                        break 'dfs;
                    }
                    if c == count && seen.insert(next) {
                        stack.push(next);
                    }
                }
            }
            match jump {
                Some(next) => cur = next,
                None => return cur,
            }
        }
    }
}

/// Runs the relevant algorithm from all `p!` starting permutations and
/// reports whether every output lands in the sparsest Markov equivalence
/// class. Guarded to `p <= 6` unless forced.
///
/// The covered-flip variant is checked with its complete semantics: a flip
/// may continue from any linear extension of the reversed DAG.
pub fn check_assumption(
    oracle: &dyn CiOracle,
    p: usize,
    which: Assumption,
    force: bool,
) -> Result<CheckOutcome> {
    if p > 6 && !force {
        return Err(Error::Guard(format!(
            "assumption check enumerates {p}! starts (pass force to override)"
        )));
    }
    let brute = sp_brute_force(oracle, p, force)?;
    if which == Assumption::Smr {
        return Ok(CheckOutcome {
            holds: brute.mecs.len() == 1,
            witnesses: Vec::new(),
            detail: format!(
                "minimum {} arrows attained by {} class(es)",
                brute.minimum,
                brute.mecs.len()
            ),
        });
    }
    if brute.mecs.len() != 1 {
        return Ok(CheckOutcome {
            holds: false,
            witnesses: Vec::new(),
            detail: "sparsest class is not unique".into(),
        });
    }
    let reference = &brute.mecs[0][0];
    let cache = CachedOracle::new(oracle);

    // Build the search space once: the polytope for the edge variant, the
    // full permutation walk graph for the covered-flip variant.
    let assoc = match which {
        Assumption::Esp => Some(crate::polytope::dag_associahedron_graph(&cache, p, force)?),
        _ => None,
    };
    let walk = match which {
        Assumption::Tsp => Some(CompleteWalk::build(&cache, p)?),
        _ => None,
    };

    let starts = all_permutations(p);
    let total = starts.len();
    let mut witnesses = Vec::new();
    for (rank, perm) in starts.into_iter().enumerate() {
        let out = match which {
            Assumption::Tsp => {
                let walk = walk.as_ref().unwrap();
                walk.imaps[walk.run(rank)].clone()
            }
            Assumption::Esp => {
                crate::polytope::edge_sp_on_graph(assoc.as_ref().unwrap(), &perm)?.0
            }
            Assumption::Smr => unreachable!(),
        };
        let good = out.arrow_count() == brute.minimum && markov_equivalent(&out, reference)?;
        if !good {
            witnesses.push((perm, out));
        }
    }
    let detail = if witnesses.is_empty() {
        format!(
            "all {total} starts reach the sparsest class ({} arrows)",
            brute.minimum
        )
    } else {
        format!(
            "{} of {total} starts miss the sparsest class ({} arrows)",
            witnesses.len(),
            brute.minimum
        )
    };
    Ok(CheckOutcome {
        holds: witnesses.is_empty(),
        witnesses,
        detail,
    })
}

/// Every arrow of `g` must connect a pair with no separating set under the
/// oracle. Exhaustive over conditioning subsets.
pub fn adjacency_faithful(oracle: &dyn CiOracle, g: &Dag) -> Result<Option<(usize, usize, NodeSet)>> {
    let p = g.p();
    for (u, v) in g.arrows() {
        let rest: Vec<usize> = (0..p).filter(|&w| w != u && w != v).collect();
        for mask in 0..(1u64 << rest.len()) {
            let s: NodeSet = rest
                .iter()
                .enumerate()
                .filter(|(b, _)| mask >> b & 1 == 1)
                .map(|(_, &w)| w)
                .collect();
            if oracle.independent(u, v, &s)? {
                return Ok(Some((u, v, s)));
            }
        }
    }
    Ok(None)
}

/// For every unshielded triple `(i, j, k)` of `g` and every subset `S` with
/// `i` d-connected to `k` given `S` in `g`, the oracle must declare the pair
/// dependent. Returns the first violation.
pub fn orientation_faithful(
    oracle: &dyn CiOracle,
    g: &Dag,
) -> Result<Option<(usize, usize, usize, NodeSet)>> {
    let p = g.p();
    for j in 0..p {
        for i in 0..p {
            for k in i + 1..p {
                if i == j || k == j || !g.adjacent(i, j) || !g.adjacent(k, j) || g.adjacent(i, k) {
                    continue;
                }
                let rest: Vec<usize> = (0..p).filter(|&w| w != i && w != k).collect();
                for mask in 0..(1u64 << rest.len()) {
                    let s: NodeSet = rest
                        .iter()
                        .enumerate()
                        .filter(|(b, _)| mask >> b & 1 == 1)
                        .map(|(_, &w)| w)
                        .collect();
                    if !g.d_separated(i, k, &s)? && oracle.independent(i, k, &s)? {
                        return Ok(Some((i, j, k, s)));
                    }
                }
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ci::fixtures::{esp_not_tsp, smr_not_esp, tsp_not_faithful};
    use crate::ci::{CiSet, DsepOracle};
    use crate::graph::essential_graph;
    use crate::graph::test_support::random_dag;
    use crate::sem::{random_gaussian_dag, sem_covariance_and_sample};
    use rand::Rng;

    fn order_cfg(text: &str) -> SearchConfig {
        SearchConfig::new(StartPolicy::Order(Permutation::parse(text).unwrap()))
    }

    #[test]
    fn collider_walk_reaches_the_true_class() {
        let truth = Dag::from_arrows(3, &[(0, 2), (1, 2)]).unwrap();
        let oracle = DsepOracle::new(truth.clone());
        let (out, trace) = triangle_sp(&oracle, &order_cfg("321")).unwrap();
        assert_eq!(out.arrow_count(), 2);
        assert!(markov_equivalent(&out, &truth).unwrap());
        // Start I-MAP is the complete DAG on the reversed order.
        assert_eq!(trace.events[0].arrows, 3);
        assert_eq!(trace.termination, Termination::Converged);
    }

    #[test]
    fn trace_is_weakly_decreasing_within_runs() {
        let mut rng = ChaCha20Rng::seed_from_u64(83);
        for _ in 0..10 {
            let g = random_dag(6, 0.4, &mut rng);
            let oracle = DsepOracle::new(g);
            let cfg = SearchConfig::new(StartPolicy::Random)
                .with_runs(3)
                .with_seed(rng.gen());
            let (_, trace) = triangle_sp(&oracle, &cfg).unwrap();
            let mut last: Option<(usize, usize)> = None;
            for e in &trace.events {
                if let Some((run, arrows)) = last {
                    if run == e.run && e.kind == "jump" {
                        assert!(e.arrows < arrows, "jump did not improve");
                    }
                }
                last = Some((e.run, e.arrows));
            }
        }
    }

    #[test]
    fn single_node_returns_empty_dag() {
        let oracle = DsepOracle::new(Dag::new(1));
        let (out, _) = triangle_sp(&oracle, &SearchConfig::new(StartPolicy::Random)).unwrap();
        assert_eq!(out.arrow_count(), 0);
    }

    #[test]
    fn known_counterexample_walk_stalls_at_five_arrows() {
        let c = esp_not_tsp();
        let (out, _) = triangle_sp(&c, &order_cfg("1423")).unwrap();
        assert_eq!(out.arrow_count(), 5);
        let brute = sp_brute_force(&c, 4, false).unwrap();
        assert_eq!(brute.minimum, 4);
        assert!(!markov_equivalent(&out, &brute.mecs[0][0]).unwrap());
    }

    #[test]
    fn faithful_oracles_reach_the_true_class_from_any_start() {
        let mut rng = ChaCha20Rng::seed_from_u64(89);
        for p in 3..=7 {
            for _ in 0..6 {
                let g = random_dag(p, 0.45, &mut rng);
                let oracle = DsepOracle::new(g.clone());
                let cfg = SearchConfig::new(StartPolicy::Random).with_seed(rng.gen());
                let (out, _) = triangle_sp(&oracle, &cfg).unwrap();
                assert!(markov_equivalent(&out, &g).unwrap(), "failed on {g:?}");
            }
        }
    }

    #[test]
    fn brute_force_examples() {
        let c = esp_not_tsp();
        let brute = sp_brute_force(&c, 4, false).unwrap();
        assert_eq!(brute.minimum, 4);
        assert_eq!(brute.mecs.len(), 1);

        // Empty relation set: every permutation gives the complete DAG.
        let empty = CiSet::new(4);
        let brute = sp_brute_force(&empty, 4, false).unwrap();
        assert_eq!(brute.minimum, 6);
        assert_eq!(brute.mecs.len(), 1);

        let mut rng = ChaCha20Rng::seed_from_u64(91);
        for p in 3..=6 {
            let g = random_dag(p, 0.5, &mut rng);
            let oracle = DsepOracle::new(g.clone());
            let brute = sp_brute_force(&oracle, p, false).unwrap();
            assert_eq!(brute.minimum, g.arrow_count());
            assert_eq!(brute.mecs.len(), 1);
            assert!(markov_equivalent(&brute.mecs[0][0], &g).unwrap());
        }
    }

    #[test]
    fn guard_refuses_large_enumerations() {
        let empty = CiSet::new(9);
        assert!(matches!(
            sp_brute_force(&empty, 9, false),
            Err(Error::Guard(_))
        ));
    }

    #[test]
    fn assumption_hierarchy_on_the_three_fixtures() {
        // Walks succeed everywhere, yet the set is not faithful (not even a
        // semigraphoid).
        let c1 = tsp_not_faithful();
        assert!(check_assumption(&c1, 5, Assumption::Tsp, false).unwrap().holds);

        // Edge walks succeed, covered-arrow walks fail from 1423.
        let c2 = esp_not_tsp();
        let tsp = check_assumption(&c2, 4, Assumption::Tsp, false).unwrap();
        assert!(!tsp.holds);
        assert!(tsp.has_witness_start("1423"));
        assert!(check_assumption(&c2, 4, Assumption::Esp, false).unwrap().holds);

        // Unique sparsest class, but edge walks fail from 54321.
        let c3 = smr_not_esp();
        assert!(check_assumption(&c3, 5, Assumption::Smr, false).unwrap().holds);
        let esp = check_assumption(&c3, 5, Assumption::Esp, false).unwrap();
        assert!(!esp.holds);
        assert!(esp.has_witness_start("54321"));
    }

    #[test]
    fn faithful_oracles_pass_all_assumptions() {
        let mut rng = ChaCha20Rng::seed_from_u64(93);
        let g = random_dag(4, 0.5, &mut rng);
        let oracle = DsepOracle::new(g);
        for which in [Assumption::Tsp, Assumption::Esp, Assumption::Smr] {
            assert!(check_assumption(&oracle, 4, which, false).unwrap().holds);
        }
    }

    #[test]
    fn tsp_outputs_satisfy_adjacency_faithfulness() {
        let mut rng = ChaCha20Rng::seed_from_u64(95);
        for p in 3..=5 {
            for _ in 0..4 {
                let g = random_dag(p, 0.5, &mut rng);
                let oracle = DsepOracle::new(g);
                for perm in all_permutations(p) {
                    let cfg = SearchConfig::new(StartPolicy::Order(perm));
                    let (out, _) = triangle_sp(&oracle, &cfg).unwrap();
                    assert!(adjacency_faithful(&oracle, &out).unwrap().is_none());
                }
            }
        }
    }

    #[test]
    fn depth_one_limits_reachable_improvements() {
        // From the reversed order on a collider, the first improvement sits
        // two flips away: depth 1 must stall, depth 2 must find it.
        let truth = Dag::from_arrows(3, &[(0, 2), (1, 2)]).unwrap();
        let oracle = DsepOracle::new(truth.clone());
        let shallow = triangle_sp(&oracle, &order_cfg("321").with_depth(Some(1)))
            .unwrap()
            .0;
        assert_eq!(shallow.arrow_count(), 3);
        let deeper = triangle_sp(&oracle, &order_cfg("321").with_depth(Some(2)))
            .unwrap()
            .0;
        assert_eq!(deeper.arrow_count(), 2);
        assert!(markov_equivalent(&deeper, &truth).unwrap());
    }

    #[test]
    fn bic_search_two_node_examples() {
        let mut rng = ChaCha20Rng::seed_from_u64(97);
        // Correlated pair: a single (undirected) edge in the output class.
        let dag = Dag::from_arrows(2, &[(0, 1)]).unwrap();
        let mut weights = std::collections::BTreeMap::new();
        weights.insert((0, 1), 0.5);
        let model = crate::sem::SemModel { dag, weights };
        let stats = sem_covariance_and_sample(&model, None, &mut rng)
            .unwrap()
            .with_nominal_n(100_000);
        for start in ["12", "21"] {
            let (out, _) = triangle_sp_bic(&stats, &order_cfg(start)).unwrap();
            assert_eq!(out.arrow_count(), 1);
            assert!(essential_graph(&out).undirected_edges() == vec![(0, 1)]);
        }

        // Independent pair: empty output.
        let model = crate::sem::SemModel {
            dag: Dag::new(2),
            weights: Default::default(),
        };
        let stats = sem_covariance_and_sample(&model, Some(10_000), &mut rng).unwrap();
        let (out, _) = triangle_sp_bic(&stats, &order_cfg("12")).unwrap();
        assert_eq!(out.arrow_count(), 0);
        let (sparsity_out, _) = triangle_sp(
            &crate::gauss::FisherZOracle::new(
                sem_covariance_and_sample(&model, Some(10_000), &mut rng).unwrap(),
                0.01,
            )
            .unwrap(),
            &order_cfg("12"),
        )
        .unwrap();
        assert_eq!(out.arrow_count(), sparsity_out.arrow_count());
    }

    #[test]
    fn bic_search_matches_oracle_search_at_large_n() {
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        let mut agree = 0;
        let total = 100;
        for _ in 0..total {
            let p = 3 + rng.gen_range(0..4); // 3..=6
            let model = random_gaussian_dag(p, 1.5, &mut rng);
            let stats = sem_covariance_and_sample(&model, Some(200_000), &mut rng).unwrap();
            let seed: u64 = rng.gen();
            let cfg = SearchConfig::new(StartPolicy::Random).with_seed(seed);
            let (bic_out, _) = triangle_sp_bic(&stats, &cfg).unwrap();
            let oracle = DsepOracle::new(model.dag.clone());
            let (sp_out, _) = triangle_sp(&oracle, &cfg).unwrap();
            if essential_graph(&bic_out) == essential_graph(&sp_out) {
                agree += 1;
            }
        }
        assert!(agree * 100 >= 95 * total, "only {agree}/{total} agreed");
    }

    #[test]
    fn highdim_diagonal_covariance_gives_empty_dag() {
        let stats =
            GaussianSuffStats::from_covariance(nalgebra::DMatrix::identity(5, 5)).unwrap();
        for seed in 0..5 {
            let cfg = SearchConfig::new(StartPolicy::Random).with_seed(seed);
            let (out, _) = highdim_greedy_sp(&stats, 0.01, &cfg, None).unwrap();
            assert_eq!(out.arrow_count(), 0);
        }
    }

    #[test]
    fn highdim_exact_covariance_recovers_class_at_desk_scale() {
        let mut rng = ChaCha20Rng::seed_from_u64(101);
        for p in 4..=8 {
            for _ in 0..4 {
                let model = random_gaussian_dag(p, 1.5, &mut rng);
                let stats = sem_covariance_and_sample(&model, None, &mut rng).unwrap();
                let cfg = SearchConfig::new(StartPolicy::Random)
                    .with_seed(rng.gen())
                    .with_runs(3);
                let (out, _) = highdim_greedy_sp(&stats, 1e-8, &cfg, None).unwrap();
                assert!(
                    markov_equivalent(&out, &model.dag).unwrap(),
                    "failed on {:?}",
                    model.dag
                );
            }
        }
    }

    #[test]
    fn highdim_respects_a_moral_graph_prior() {
        let mut rng = ChaCha20Rng::seed_from_u64(103);
        let model = random_gaussian_dag(6, 1.5, &mut rng);
        let stats = sem_covariance_and_sample(&model, None, &mut rng).unwrap();
        // Moral graph: skeleton plus married parents.
        let mut moral = std::collections::BTreeSet::new();
        for (u, v) in model.dag.arrows() {
            moral.insert((u.min(v), u.max(v)));
        }
        for j in 0..6 {
            let pa: Vec<usize> = model.dag.parents(j).iter().collect();
            for (a, &x) in pa.iter().enumerate() {
                for &y in &pa[a + 1..] {
                    moral.insert((x.min(y), x.max(y)));
                }
            }
        }
        let moral: Vec<(usize, usize)> = moral.into_iter().collect();
        let cfg = SearchConfig::new(StartPolicy::MinDeg).with_seed(7).with_runs(5);
        let (out, _) = highdim_greedy_sp(&stats, 1e-8, &cfg, Some(&moral)).unwrap();
        for (u, v) in out.arrows() {
            assert!(moral.contains(&(u.min(v), u.max(v))));
        }
    }

    #[test]
    fn deadline_cuts_search_short() {
        let empty = CiSet::new(7);
        let mut cfg = SearchConfig::new(StartPolicy::Random).with_runs(1000);
        cfg.deadline = Some(Instant::now());
        let (_, trace) = triangle_sp(&empty, &cfg).unwrap();
        assert_eq!(trace.termination, Termination::Timeout);
    }

    #[test]
    fn trace_serializes_to_json_lines() {
        let oracle = DsepOracle::new(Dag::from_arrows(3, &[(0, 1), (1, 2)]).unwrap());
        let (_, trace) = triangle_sp(&oracle, &order_cfg("321")).unwrap();
        let jsonl = trace.to_jsonl();
        for line in jsonl.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(v.get("kind").is_some());
        }
    }
}
