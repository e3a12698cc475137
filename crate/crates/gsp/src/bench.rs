//! Benchmark harness: JSON grid configuration, trial execution over a worker
//! pool, CSV trial records and JSON aggregates.

use crate::ci::CiOracle;
use crate::error::{Error, Result};
use crate::gauss::{FisherZOracle, GaussOracle, GaussianSuffStats};
use crate::graph::{essential_graph, shd, Dag, Pdag};
use crate::perm::Permutation;
use crate::search::{
    highdim_greedy_sp, sp_brute_force, triangle_sp, triangle_sp_bic, SearchConfig, StartPolicy,
    Termination,
};
use crate::sem::{random_gaussian_dag, sem_covariance_and_sample, SemModel};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};

pub const SCHEMA_VERSION: u32 = 1;

/// Search depth in grid files: a number or `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Depth {
    Unbounded,
    Bounded(usize),
}

impl Depth {
    pub fn as_option(self) -> Option<usize> {
        match self {
            Depth::Unbounded => None,
            Depth::Bounded(d) => Some(d),
        }
    }
}

impl std::fmt::Display for Depth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Depth::Unbounded => write!(f, "inf"),
            Depth::Bounded(d) => write!(f, "{d}"),
        }
    }
}

impl Serialize for Depth {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Depth::Unbounded => ser.serialize_str("inf"),
            Depth::Bounded(d) => ser.serialize_u64(*d as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Depth {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(usize),
            Str(String),
        }
        match Repr::deserialize(de)? {
            Repr::Num(d) => Ok(Depth::Bounded(d)),
            Repr::Str(s) if s == "inf" || s == "unbounded" => Ok(Depth::Unbounded),
            Repr::Str(s) => Err(serde::de::Error::custom(format!(
                "depth must be a number or \"inf\", got {s:?}"
            ))),
        }
    }
}

fn default_depth() -> Depth {
    Depth::Bounded(4)
}

fn default_runs() -> usize {
    10
}

fn default_start() -> String {
    "random".into()
}

/// One data-generating cell: node count, expected neighborhood size, and
/// either a sample size or the exact-covariance oracle setting (`n` absent).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeneratorCell {
    pub p: usize,
    pub s: f64,
    #[serde(default)]
    pub n: Option<usize>,
}

/// One algorithm configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlgorithmCell {
    /// `triangle-sp`, `edge-sp`, `highdim-sp`, `sp`, `pc`, `bic-sp`, `mindeg`.
    pub algo: String,
    /// Partial-correlation threshold for exact-covariance CI decisions.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Fisher-z significance level for sample-based CI decisions.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "default_depth")]
    pub depth: Depth,
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// `order`, `random`, `mindeg`, or an explicit permutation.
    #[serde(default = "default_start")]
    pub start: String,
    /// Give the algorithm the true moral graph as prior knowledge.
    #[serde(default)]
    pub moral: bool,
}

/// A full experiment grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Grid {
    pub schema_version: u32,
    pub master_seed: u64,
    pub replicates: u32,
    pub generators: Vec<GeneratorCell>,
    pub algorithms: Vec<AlgorithmCell>,
    /// Per-trial wall-clock limit in seconds (default 600).
    #[serde(default)]
    pub time_limit_secs: Option<u64>,
}

impl Grid {
    pub fn from_json(text: &str) -> Result<Self> {
        let grid: Grid =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("grid: {e}")))?;
        if grid.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "grid schema_version {} unsupported (expected {SCHEMA_VERSION})",
                grid.schema_version
            )));
        }
        if grid.replicates == 0 || grid.generators.is_empty() || grid.algorithms.is_empty() {
            return Err(Error::Parse(
                "grid needs replicates, generators and algorithms".into(),
            ));
        }
        Ok(grid)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap()
    }
}

/// One executed trial. Wall time is kept in memory for reporting but is not
/// persisted, so reruns of the same grid are byte-identical.
#[derive(Clone, Debug, Serialize)]
pub struct TrialRecord {
    pub schema_version: u32,
    pub trial: usize,
    pub p: usize,
    pub s: f64,
    pub n: Option<usize>,
    pub seed: u64,
    pub algo: String,
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
    pub depth: String,
    pub runs: usize,
    pub start: String,
    pub moral: bool,
    pub arrows: Option<usize>,
    pub shd: Option<usize>,
    pub exact: Option<bool>,
    pub skel_tp: Option<usize>,
    pub skel_fp: Option<usize>,
    pub skel_fn: Option<usize>,
    pub timeout: bool,
    pub error: Option<String>,
    pub cpdag: Option<String>,
    #[serde(skip)]
    pub wall: Duration,
}

/// Per-(generator, algorithm) aggregate over replicates.
#[derive(Clone, Debug, Serialize)]
pub struct CellAggregate {
    pub p: usize,
    pub s: f64,
    pub n: Option<usize>,
    pub algo: String,
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
    pub depth: String,
    pub runs: usize,
    pub start: String,
    pub moral: bool,
    pub trials: usize,
    pub errors: usize,
    pub timeouts: usize,
    pub recovery_rate: f64,
    pub mean_shd: f64,
    pub mean_skel_tp: f64,
    pub mean_skel_fp: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchOutput {
    pub trials: Vec<TrialRecord>,
    pub aggregates: Vec<CellAggregate>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4b5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

fn compact_pdag(g: &Pdag) -> String {
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
    parts.join(";")
}

/// The moral graph of a DAG: skeleton plus married parents, as sorted pairs.
pub fn moral_graph(g: &Dag) -> Vec<(usize, usize)> {
    let mut pairs: std::collections::BTreeSet<(usize, usize)> = g
        .arrows()
        .into_iter()
        .map(|(u, v)| (u.min(v), u.max(v)))
        .collect();
    for j in 0..g.p() {
        let pa: Vec<usize> = g.parents(j).iter().collect();
        for (a, &x) in pa.iter().enumerate() {
            for &y in &pa[a + 1..] {
                pairs.insert((x.min(y), x.max(y)));
            }
        }
    }
    pairs.into_iter().collect()
}

fn parse_start(start: &str, p: usize, rng_seed: u64) -> Result<StartPolicy> {
    match start {
        "random" => Ok(StartPolicy::Random),
        "order" => Ok(StartPolicy::Order(Permutation::identity(p))),
        "mindeg" => Ok(StartPolicy::MinDeg),
        text => {
            let _ = rng_seed;
            Ok(StartPolicy::Order(Permutation::parse(text)?))
        }
    }
}

/// Learned structure for one (model, algorithm) pair.
fn run_algorithm(
    alg: &AlgorithmCell,
    model: &SemModel,
    stats: &GaussianSuffStats,
    n: Option<usize>,
    seed: u64,
    deadline: Option<Instant>,
) -> Result<(Pdag, bool)> {
    let p = model.p();
    let start = parse_start(&alg.start, p, seed)?;
    let cfg = SearchConfig {
        depth: alg.depth.as_option(),
        runs: alg.runs,
        start,
        seed,
        deadline,
    };
    let need_lambda = || {
        alg.lambda.ok_or_else(|| {
            Error::InvalidInput(format!("{} on exact covariance needs lambda", alg.algo))
        })
    };
    let need_alpha = || {
        alg.alpha
            .ok_or_else(|| Error::InvalidInput(format!("{} on samples needs alpha", alg.algo)))
    };
    // CI backend for the constraint-based algorithms.
    let oracle: Option<Box<dyn CiOracle>> = match alg.algo.as_str() {
        "triangle-sp" | "edge-sp" | "sp" | "pc" => Some(match n {
            None => Box::new(GaussOracle::new(stats.clone(), need_lambda()?)?),
            Some(_) => Box::new(FisherZOracle::new(stats.clone(), need_alpha()?)?),
        }),
        _ => None,
    };
    let moral_pairs = alg.moral.then(|| moral_graph(&model.dag));

    let (dag, timeout) = match alg.algo.as_str() {
        "triangle-sp" => {
            let (dag, trace) = triangle_sp(oracle.as_deref().unwrap(), &cfg)?;
            (dag, trace.termination == Termination::Timeout)
        }
        "edge-sp" => {
            let start_perm = match &cfg.start {
                StartPolicy::Order(perm) => perm.clone(),
                _ => Permutation::random(p, &mut ChaCha20Rng::seed_from_u64(seed)),
            };
            let (dag, _) =
                crate::polytope::edge_sp(oracle.as_deref().unwrap(), &start_perm, p, false)?;
            (dag, false)
        }
        "sp" => {
            let brute = sp_brute_force(oracle.as_deref().unwrap(), p, false)?;
            let dag = brute
                .sparsest
                .iter()
                .min_by_key(|d| d.canonical_hash())
                .unwrap()
                .clone();
            (dag, false)
        }
        "pc" => {
            let est = crate::pc::pc_baseline(oracle.as_deref().unwrap())?;
            return Ok((est, false));
        }
        "bic-sp" => {
            let (dag, trace) = triangle_sp_bic(stats, &cfg)?;
            (dag, trace.termination == Termination::Timeout)
        }
        "highdim-sp" => {
            let tau = need_lambda()?;
            let (dag, trace) = highdim_greedy_sp(stats, tau, &cfg, moral_pairs.as_deref())?;
            (dag, trace.termination == Termination::Timeout)
        }
        "mindeg" => {
            let tau = need_lambda()?;
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let (_, dag) =
                crate::mindeg::neighbor_min_degree(stats, tau, moral_pairs.as_deref(), &mut rng)?;
            (dag, false)
        }
        other => {
            return Err(Error::InvalidInput(format!("unknown algorithm {other:?}")));
        }
    };
    Ok((essential_graph(&dag), timeout))
}

fn skeleton_counts(truth: &Dag, est: &Pdag) -> (usize, usize, usize) {
    let true_skel: std::collections::BTreeSet<(usize, usize)> =
        truth.skeleton().into_iter().collect();
    let est_skel: std::collections::BTreeSet<(usize, usize)> =
        est.skeleton().into_iter().collect();
    let tp = est_skel.intersection(&true_skel).count();
    let fp = est_skel.difference(&true_skel).count();
    let fneg = true_skel.difference(&est_skel).count();
    (tp, fp, fneg)
}

/// Executes the full grid. Trials run in parallel; per-trial failures are
/// recorded in the output rather than aborting the run. Identical grids with
/// identical master seeds produce identical records.
pub fn run_benchmark(grid: &Grid) -> Result<BenchOutput> {
    let limit = Duration::from_secs(grid.time_limit_secs.unwrap_or(600));
    let mut specs = Vec::new();
    let mut trial_idx = 0usize;
    for gi in 0..grid.generators.len() {
        for ai in 0..grid.algorithms.len() {
            for rep in 0..grid.replicates {
                // The model seed depends only on the generator cell and
                // replicate, so algorithms within a cell see the same data.
                let model_seed = splitmix64(
                    grid.master_seed ^ splitmix64((gi as u64) << 32 | rep as u64),
                );
                let algo_seed = splitmix64(model_seed ^ (ai as u64 + 1));
                specs.push((trial_idx, gi, ai, model_seed, algo_seed));
                trial_idx += 1;
            }
        }
    }

    let trials: Vec<TrialRecord> = specs
        .par_iter()
        .map(|&(idx, gi, ai, model_seed, algo_seed)| {
            let gen = &grid.generators[gi];
            let alg = &grid.algorithms[ai];
            let begin = Instant::now();
            let mut rng = ChaCha20Rng::seed_from_u64(model_seed);
            let model = random_gaussian_dag(gen.p, gen.s, &mut rng);
            let truth = essential_graph(&model.dag);
            let outcome = sem_covariance_and_sample(&model, gen.n, &mut rng).and_then(|stats| {
                run_algorithm(alg, &model, &stats, gen.n, algo_seed, Some(begin + limit))
            });
            let mut rec = TrialRecord {
                schema_version: SCHEMA_VERSION,
                trial: idx,
                p: gen.p,
                s: gen.s,
                n: gen.n,
                seed: model_seed,
                algo: alg.algo.clone(),
                lambda: alg.lambda,
                alpha: alg.alpha,
                depth: alg.depth.to_string(),
                runs: alg.runs,
                start: alg.start.clone(),
                moral: alg.moral,
                arrows: None,
                shd: None,
                exact: None,
                skel_tp: None,
                skel_fp: None,
                skel_fn: None,
                timeout: false,
                error: None,
                cpdag: None,
                wall: Duration::ZERO,
            };
            match outcome {
                Ok((est, timeout)) => {
                    let (tp, fp, fneg) = skeleton_counts(&model.dag, &est);
                    rec.arrows = Some(est.edge_count());
                    rec.shd = Some(shd(&truth, &est).unwrap());
                    rec.exact = Some(est == truth);
                    rec.skel_tp = Some(tp);
                    rec.skel_fp = Some(fp);
                    rec.skel_fn = Some(fneg);
                    rec.timeout = timeout;
                    rec.cpdag = Some(compact_pdag(&est));
                }
                Err(e) => {
                    rec.error = Some(e.to_string());
                }
            }
            rec.wall = begin.elapsed();
            rec
        })
        .collect();

    // Aggregate per (generator, algorithm) cell, in grid order.
    let mut aggregates = Vec::new();
    for gen in &grid.generators {
        for alg in &grid.algorithms {
            let cell: Vec<&TrialRecord> = trials
                .iter()
                .filter(|t| {
                    t.p == gen.p
                        && t.s == gen.s
                        && t.n == gen.n
                        && t.algo == alg.algo
                        && t.lambda == alg.lambda
                        && t.alpha == alg.alpha
                        && t.depth == alg.depth.to_string()
                        && t.runs == alg.runs
                        && t.start == alg.start
                        && t.moral == alg.moral
                })
                .collect();
            let ok: Vec<&&TrialRecord> = cell.iter().filter(|t| t.error.is_none()).collect();
            let mean = |f: &dyn Fn(&TrialRecord) -> f64| {
                if ok.is_empty() {
                    0.0
                } else {
                    ok.iter().map(|t| f(t)).sum::<f64>() / ok.len() as f64
                }
            };
            aggregates.push(CellAggregate {
                p: gen.p,
                s: gen.s,
                n: gen.n,
                algo: alg.algo.clone(),
                lambda: alg.lambda,
                alpha: alg.alpha,
                depth: alg.depth.to_string(),
                runs: alg.runs,
                start: alg.start.clone(),
                moral: alg.moral,
                trials: cell.len(),
                errors: cell.iter().filter(|t| t.error.is_some()).count(),
                timeouts: cell.iter().filter(|t| t.timeout).count(),
                recovery_rate: mean(&|t| t.exact.unwrap_or(false) as u8 as f64),
                mean_shd: mean(&|t| t.shd.unwrap_or(0) as f64),
                mean_skel_tp: mean(&|t| t.skel_tp.unwrap_or(0) as f64),
                mean_skel_fp: mean(&|t| t.skel_fp.unwrap_or(0) as f64),
            });
        }
    }
    Ok(BenchOutput { trials, aggregates })
}

/// Renders `trials.csv`.
pub fn trials_csv(trials: &[TrialRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for t in trials {
        w.serialize(t)
            .map_err(|e| Error::Internal(format!("csv: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Internal(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Internal(format!("csv: {e}")))
}

/// Renders `aggregates.json`.
pub fn aggregates_json(aggregates: &[CellAggregate]) -> String {
    serde_json::to_string_pretty(&serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "cells": aggregates,
    }))
    .unwrap()
}
