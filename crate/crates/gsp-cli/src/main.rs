//! Command-line front end: simulate Gaussian DAG models, learn structure,
//! run benchmark grids, export polytope quotient graphs, and check
//! identifiability assumptions on explicit CI sets.

use clap::{Args, Parser, Subcommand};
use gsp::bench::{aggregates_json, run_benchmark, trials_csv, Grid};
use gsp::ci::{check_graphoid, CiOracle, CiSet, DsepOracle};
use gsp::gauss::{FisherZOracle, GaussOracle, GaussianSuffStats};
use gsp::graph::{essential_graph, Dag, Pdag};
use gsp::perm::Permutation;
use gsp::search::{
    check_assumption, highdim_greedy_sp, sp_brute_force, triangle_sp, triangle_sp_bic, Assumption,
    SearchConfig, SearchTrace, StartPolicy, Termination,
};
use gsp::sem::{exact_covariance, random_gaussian_dag, sample_matrix};
use gsp::{io, Error};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "gsp",
    about = "Greedy sparsest-permutation causal structure discovery",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random linear Gaussian DAG model and its statistics.
    Simulate(SimulateArgs),
    /// Learn a structure from a CI source.
    Learn(LearnArgs),
    /// Run a benchmark grid.
    Bench(BenchArgs),
    /// Build a permutohedron quotient graph and export it.
    Polytope(PolytopeArgs),
    /// Check an identifiability assumption on an explicit CI set.
    Check(CheckArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Number of nodes.
    #[arg(long)]
    nodes: usize,
    /// Expected neighborhood size (edge probability is density/(p-1)).
    #[arg(long)]
    density: f64,
    /// Also draw this many samples.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LearnArgs {
    /// triangle-sp | edge-sp | highdim-sp | sp | pc | bic-sp | mindeg
    #[arg(long)]
    algo: String,
    /// CI source: oracle:DAGFILE | relations:CIFILE | gauss:SIGMA.csv |
    /// samples:DATA.csv
    #[arg(long)]
    ci: String,
    /// Partial-correlation threshold for exact-covariance sources.
    #[arg(long)]
    lambda: Option<f64>,
    /// Fisher-z significance level for sample sources.
    #[arg(long)]
    alpha: Option<f64>,
    /// Search depth: a number or "inf".
    #[arg(long, default_value = "inf")]
    depth: String,
    /// Number of restarts.
    #[arg(long, default_value_t = 1)]
    runs: usize,
    /// order | random | mindeg | an explicit permutation such as 1423.
    #[arg(long, default_value = "order")]
    start: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Nominal sample size for BIC scoring on exact covariances.
    #[arg(long)]
    nominal_n: Option<usize>,
    /// Override enumeration guards.
    #[arg(long)]
    force: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Grid configuration (JSON).
    #[arg(long)]
    grid: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PolytopeArgs {
    /// assoc | even | even-assoc
    #[arg(long)]
    kind: String,
    /// CI relation file (required for assoc and even-assoc).
    #[arg(long)]
    relations: Option<PathBuf>,
    #[arg(long)]
    nodes: usize,
    /// Override enumeration guards.
    #[arg(long)]
    force: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    /// tsp | esp | smr | graphoid
    #[arg(long)]
    assumption: String,
    /// CI relation file.
    #[arg(long)]
    relations: PathBuf,
    #[arg(long)]
    nodes: usize,
    /// Override enumeration guards.
    #[arg(long)]
    force: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Learn(args) => learn(args),
        Command::Bench(args) => bench(args),
        Command::Polytope(args) => polytope(args),
        Command::Check(args) => check(args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err.downcast_ref::<Error>() {
                Some(Error::Parse(_)) | Some(Error::InvalidInput(_)) => 3,
                Some(Error::Guard(_)) => 4,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}

fn read_file(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!(Error::InvalidInput(format!("{}: {e}", path.display()))))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}

fn simulate(args: SimulateArgs) -> anyhow::Result<ExitCode> {
    if args.nodes == 0 {
        return Err(Error::InvalidInput("need at least one node".into()).into());
    }
    let mut rng = ChaCha20Rng::seed_from_u64(args.seed);
    let model = random_gaussian_dag(args.nodes, args.density, &mut rng);
    write_file(&args.out, "dag.txt", &io::write_dag(&model.dag))?;

    let p = args.nodes;
    let mut weights = nalgebra::DMatrix::zeros(p, p);
    for (&(u, v), &w) in &model.weights {
        weights[(u, v)] = w;
    }
    write_file(&args.out, "weights.csv", &io::write_matrix_csv(&weights))?;
    write_file(
        &args.out,
        "sigma.csv",
        &io::write_matrix_csv(&exact_covariance(&model)),
    )?;
    if let Some(n) = args.samples {
        let data = sample_matrix(&model, n, &mut rng)?;
        write_file(&args.out, "samples.csv", &io::write_matrix_csv(&data))?;
    }
    println!(
        "wrote model with {} arrows to {}",
        model.dag.arrow_count(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

/// The CI source named on the command line.
enum CiSource {
    Oracle(Dag),
    Relations(CiSet),
    Gauss(GaussianSuffStats),
    Samples(GaussianSuffStats),
}

fn parse_ci_source(spec: &str) -> anyhow::Result<CiSource> {
    let (kind, path) = spec.split_once(':').ok_or_else(|| {
        Error::InvalidInput(format!(
            "--ci must look like kind:FILE, got {spec:?} (kinds: oracle, relations, gauss, samples)"
        ))
    })?;
    let text = read_file(Path::new(path))?;
    Ok(match kind {
        "oracle" => CiSource::Oracle(io::parse_dag(&text)?),
        "relations" => CiSource::Relations(io::parse_ci_set(&text)?),
        "gauss" => CiSource::Gauss(GaussianSuffStats::from_covariance(io::parse_matrix_csv(
            &text,
        )?)?),
        "samples" => {
            CiSource::Samples(GaussianSuffStats::from_samples(&io::parse_matrix_csv(&text)?)?)
        }
        other => {
            return Err(Error::InvalidInput(format!("unknown CI source kind {other:?}")).into())
        }
    })
}

fn parse_depth(text: &str) -> anyhow::Result<Option<usize>> {
    match text {
        "inf" | "unbounded" => Ok(None),
        other => other
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Error::InvalidInput(format!("bad depth {other:?}")).into()),
    }
}

fn parse_start(text: &str, p: usize) -> anyhow::Result<StartPolicy> {
    Ok(match text {
        "order" => StartPolicy::Order(Permutation::identity(p)),
        "random" => StartPolicy::Random,
        "mindeg" => StartPolicy::MinDeg,
        perm => StartPolicy::Order(Permutation::parse(perm)?),
    })
}

fn empty_trace() -> SearchTrace {
    SearchTrace {
        events: Vec::new(),
        visited: 0,
        termination: Termination::Converged,
    }
}

fn learn(args: LearnArgs) -> anyhow::Result<ExitCode> {
    let source = parse_ci_source(&args.ci)?;
    let p = match &source {
        CiSource::Oracle(dag) => dag.p(),
        CiSource::Relations(set) => set.p(),
        CiSource::Gauss(st) | CiSource::Samples(st) => st.p(),
    };
    let cfg = SearchConfig {
        depth: parse_depth(&args.depth)?,
        runs: args.runs,
        start: parse_start(&args.start, p)?,
        seed: args.seed,
        deadline: None,
    };
    let need_lambda = || {
        args.lambda
            .ok_or_else(|| Error::InvalidInput("this source needs --lambda".into()))
    };
    let need_alpha = || {
        args.alpha
            .ok_or_else(|| Error::InvalidInput("this source needs --alpha".into()))
    };

    // Constraint-based algorithms consume any source through one oracle;
    // the score- and threshold-based ones take the statistics directly, so
    // the oracle (and its lambda/alpha requirement) is only built on demand.
    let oracle: Option<Box<dyn CiOracle>> = match args.algo.as_str() {
        "triangle-sp" | "edge-sp" | "sp" | "pc" => Some(match &source {
            CiSource::Oracle(dag) => Box::new(DsepOracle::new(dag.clone())),
            CiSource::Relations(set) => Box::new(set.clone()),
            CiSource::Gauss(st) => Box::new(GaussOracle::new(st.clone(), need_lambda()?)?),
            CiSource::Samples(st) => Box::new(FisherZOracle::new(st.clone(), need_alpha()?)?),
        }),
        _ => None,
    };
    let stats = match &source {
        CiSource::Gauss(st) | CiSource::Samples(st) => Some(st.clone()),
        _ => None,
    };
    let need_stats = || {
        stats.clone().ok_or_else(|| {
            Error::InvalidInput(format!(
                "{} needs a gauss: or samples: source",
                args.algo
            ))
        })
    };

    let (dag, trace): (Dag, SearchTrace) = match args.algo.as_str() {
        "triangle-sp" => triangle_sp(oracle.as_deref().unwrap(), &cfg)?,
        "bic-sp" => {
            let mut st = need_stats()?;
            if st.n().is_none() {
                let n = args.nominal_n.ok_or_else(|| {
                    Error::InvalidInput("bic-sp on an exact covariance needs --nominal-n".into())
                })?;
                st = st.with_nominal_n(n);
            }
            triangle_sp_bic(&st, &cfg)?
        }
        "highdim-sp" => {
            let st = need_stats()?;
            highdim_greedy_sp(&st, need_lambda()?, &cfg, None)?
        }
        "mindeg" => {
            let st = need_stats()?;
            let mut rng = ChaCha20Rng::seed_from_u64(args.seed);
            let (_, dag) = gsp::mindeg::neighbor_min_degree(&st, need_lambda()?, None, &mut rng)?;
            (dag, empty_trace())
        }
        "edge-sp" => {
            let start = match &cfg.start {
                StartPolicy::Order(perm) => perm.clone(),
                StartPolicy::Random => {
                    Permutation::random(p, &mut ChaCha20Rng::seed_from_u64(args.seed))
                }
                StartPolicy::MinDeg => {
                    return Err(Error::InvalidInput(
                        "edge-sp does not take a mindeg start".into(),
                    )
                    .into())
                }
            };
            let graph =
                gsp::polytope::dag_associahedron_graph(oracle.as_deref().unwrap(), p, args.force)?;
            let (dag, trail) = gsp::polytope::edge_sp_on_graph(&graph, &start)?;
            let mut trace = empty_trace();
            trace.events = trail
                .iter()
                .enumerate()
                .map(|(i, &class)| gsp::search::TraceEvent {
                    run: 0,
                    kind: if i == 0 { "start" } else { "jump" },
                    hash: class as u64,
                    arrows: graph.classes[class].arrow_count(),
                    score: None,
                    mv: None,
                })
                .collect();
            (dag, trace)
        }
        "sp" => {
            let brute = sp_brute_force(oracle.as_deref().unwrap(), p, args.force)?;
            let dag = brute
                .sparsest
                .iter()
                .min_by_key(|d| d.canonical_hash())
                .unwrap()
                .clone();
            (dag, empty_trace())
        }
        "pc" => {
            let est = gsp::pc::pc_baseline(oracle.as_deref().unwrap())?;
            return finish_learn(&args.out, est, empty_trace());
        }
        other => {
            return Err(Error::InvalidInput(format!("unknown algorithm {other:?}")).into());
        }
    };
    let cpdag = essential_graph(&dag);
    write_file(&args.out, "dag.txt", &io::write_dag(&dag))?;
    write_file(&args.out, "cpdag.txt", &io::write_pdag(&cpdag))?;
    write_file(&args.out, "trace.jsonl", &trace.to_jsonl())?;
    println!(
        "learned {} arrows ({} CPDAG edges) -> {}",
        dag.arrow_count(),
        cpdag.edge_count(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

/// PC produces a CPDAG directly; a consistent extension stands in for the
/// DAG output.
fn finish_learn(out: &Path, cpdag: Pdag, trace: SearchTrace) -> anyhow::Result<ExitCode> {
    let member = cpdag.consistent_extension()?;
    write_file(out, "dag.txt", &io::write_dag(&member))?;
    write_file(out, "cpdag.txt", &io::write_pdag(&cpdag))?;
    write_file(out, "trace.jsonl", &trace.to_jsonl())?;
    println!(
        "learned CPDAG with {} edges -> {}",
        cpdag.edge_count(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn bench(args: BenchArgs) -> anyhow::Result<ExitCode> {
    if let Ok(workers) = std::env::var("GSP_WORKERS") {
        let n: usize = workers
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad GSP_WORKERS value {workers:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .ok();
    }
    let grid = Grid::from_json(&read_file(&args.grid)?)?;
    let output = run_benchmark(&grid)?;
    write_file(&args.out, "trials.csv", &trials_csv(&output.trials)?)?;
    write_file(&args.out, "aggregates.json", &aggregates_json(&output.aggregates))?;
    let errors = output.trials.iter().filter(|t| t.error.is_some()).count();
    println!(
        "ran {} trials ({errors} errored) -> {}",
        output.trials.len(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn polytope(args: PolytopeArgs) -> anyhow::Result<ExitCode> {
    let relations = match &args.relations {
        Some(path) => {
            let set = io::parse_ci_set(&read_file(path)?)?;
            if set.p() > args.nodes {
                return Err(Error::InvalidInput(
                    "relation file mentions nodes beyond --nodes".into(),
                )
                .into());
            }
            let mut lifted = CiSet::new(args.nodes);
            for st in set.iter() {
                lifted.insert(st.i, st.j, st.s.clone())?;
            }
            Some(lifted)
        }
        None => None,
    };
    let graph = match args.kind.as_str() {
        "assoc" => {
            let c = relations.ok_or_else(|| {
                Error::InvalidInput("--kind assoc needs --relations".into())
            })?;
            gsp::polytope::dag_associahedron_graph(&c, args.nodes, args.force)?
        }
        "even" => gsp::polytope::even_permutohedron_graph(args.nodes, args.force)?,
        "even-assoc" => {
            let c = relations.ok_or_else(|| {
                Error::InvalidInput("--kind even-assoc needs --relations".into())
            })?;
            gsp::polytope::even_associahedron_graph(&c, args.nodes, args.force)?
        }
        other => {
            return Err(Error::InvalidInput(format!("unknown polytope kind {other:?}")).into());
        }
    };
    write_file(
        &args.out,
        "graph.json",
        &serde_json::to_string_pretty(&graph.to_json())?,
    )?;
    write_file(&args.out, "graph.dot", &graph.to_dot())?;
    println!(
        "{} vertices, {} edges -> {}",
        graph.vertex_count(),
        graph.edge_count(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn check(args: CheckArgs) -> anyhow::Result<ExitCode> {
    let parsed = io::parse_ci_set(&read_file(&args.relations)?)?;
    if parsed.p() > args.nodes {
        return Err(
            Error::InvalidInput("relation file mentions nodes beyond --nodes".into()).into(),
        );
    }
    let mut set = CiSet::new(args.nodes);
    for st in parsed.iter() {
        set.insert(st.i, st.j, st.s.clone())?;
    }

    if args.assumption == "graphoid" {
        let report = check_graphoid(&set, args.nodes)?;
        for (name, axiom) in [
            ("SG1", &report.sg1),
            ("SG2", &report.sg2),
            ("INT", &report.intersection),
        ] {
            match &axiom.counterexample {
                None => println!("{name}: holds"),
                Some((p1, p2, missing)) => println!(
                    "{name}: fails ({} and {} require {})",
                    show_stmt(p1),
                    show_stmt(p2),
                    show_stmt(missing)
                ),
            }
        }
        return Ok(if report.is_graphoid() {
            ExitCode::SUCCESS
        } else {
            ExitCode::FAILURE
        });
    }

    let which = match args.assumption.as_str() {
        "tsp" => Assumption::Tsp,
        "esp" => Assumption::Esp,
        "smr" => Assumption::Smr,
        other => {
            return Err(Error::InvalidInput(format!("unknown assumption {other:?}")).into());
        }
    };
    let outcome = check_assumption(&set, args.nodes, which, args.force)?;
    println!(
        "{}: {} ({})",
        args.assumption,
        if outcome.holds { "holds" } else { "fails" },
        outcome.detail
    );
    for (start, dag) in outcome.witnesses.iter().take(5) {
        println!(
            "  witness start {start}: stalls at {} arrows",
            dag.arrow_count()
        );
    }
    if outcome.witnesses.len() > 5 {
        println!("  ... and {} more", outcome.witnesses.len() - 5);
    }
    Ok(if outcome.holds {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn show_stmt(st: &gsp::ci::CiStatement) -> String {
    let cond: Vec<String> = st.s.iter().map(|v| (v + 1).to_string()).collect();
    format!("{} _||_ {} | {}", st.i + 1, st.j + 1, cond.join(" "))
}
