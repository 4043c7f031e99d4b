use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, Context};
use causal_risk::descend::{estimate_all, DescendConfig};
use causal_risk::harness::{
    aggregate_report, read_results, render_svg, run_grid, sample_iota, write_results, GridConfig, ResultRow,
    DEFAULT_MAX_RETRIES,
};
use causal_risk::learners::LearnerConfig;
use causal_risk::risk::{evaluate_learner, RiskReport};
use causal_risk::{Dag, Dataset64, InterventionKind, Link, MixedGraph, NoiseKind, Sem64};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

/// Evaluate causal structure learners by descendant-based risk.
#[derive(Debug, Parser)]
#[command(name = "causal-risk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a random SEM and write interventional data for it.
    Simulate(SimulateArgs),
    /// Estimate naive, cross-validated and weighted risk of learners on a dataset.
    Evaluate(EvaluateArgs),
    /// Run a grid of simulated settings.
    Grid(GridArgs),
    /// Summarize grid results into sign-agreement cells.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct DescendArgs {
    /// Family-wise level of the descendant tests.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Scale mean shifts by the observational spread only.
    #[arg(long)]
    center_on_observational: bool,
}

impl DescendArgs {
    fn config(&self) -> DescendConfig {
        DescendConfig {
            alpha: self.alpha,
            center_on_observational: self.center_on_observational,
            ..DescendConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    p: usize,
    /// Expected neighbourhood size of the random DAG.
    #[arg(long)]
    ens: f64,
    #[arg(long, default_value = "linear")]
    link: Link,
    #[arg(long, default_value = "gaussian")]
    noise: NoiseKind,
    #[arg(long, default_value = "shift")]
    kind: InterventionKind,
    #[arg(long, default_value_t = 5.0)]
    shift: f64,
    #[arg(long, default_value_t = 5.0)]
    snr: f64,
    /// Probability of intervening on each node.
    #[arg(long, conflicts_with = "iota", required_unless_present = "iota")]
    p_iota: Option<f64>,
    /// Explicit intervention targets, 1-based and comma separated.
    #[arg(long, value_delimiter = ',')]
    iota: Vec<usize>,
    #[arg(long)]
    n_int: usize,
    /// Observational sample size; defaults to max(n_int, 100).
    #[arg(long)]
    n_obs: Option<usize>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Dataset CSV; `specs.json` is looked up next to it unless --specs is given.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    specs: Option<PathBuf>,
    /// empty, acor[:ens], greedy-bic or external:<path>; repeatable.
    #[arg(long = "learner", required = true)]
    learners: Vec<LearnerConfig>,
    /// True DAG as an adjacency matrix; enables oracle_hat.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// ENS for acor when not given as acor:<ens>; defaults to the truth's.
    #[arg(long)]
    ens: Option<f64>,
    #[command(flatten)]
    descend: DescendArgs,
    #[arg(long)]
    timeout_secs: Option<f64>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GridArgs {
    #[arg(long)]
    seed: u64,
    /// JSON or TOML grid description; defaults to a 24-setting sample.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Use true descendant sets instead of testing for them.
    #[arg(long)]
    oracle_descendants: bool,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    center_on_observational: bool,
    #[arg(long)]
    timeout_secs: Option<f64>,
    #[command(flatten)]
    report: ReportOptions,
}

#[derive(Debug, Args)]
struct ReportOptions {
    /// Learner pair compared as `first,second`; defaults to the first two in the results.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pair: Vec<String>,
    #[arg(long, default_value_t = 0.1)]
    tolerance: f64,
    #[arg(long, default_value_t = 3)]
    min_per_cell: usize,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[command(flatten)]
    report: ReportOptions,
}

/// Exit status and the error that caused it.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: anyhow::Error) -> Failure {
    Failure { code: 1, error }
}

fn data(error: anyhow::Error) -> Failure {
    Failure { code: 2, error }
}

fn learner(error: anyhow::Error) -> Failure {
    Failure { code: 3, error }
}

fn write_json(path: &Path, value: &Value) -> anyhow::Result<()> {
    let mut f = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<(), Failure> {
    if args.p < 2 {
        return Err(usage(anyhow!("--p must be at least 2")));
    }
    if let Some(q) = args.p_iota {
        if !(q > 0.0 && q <= 1.0) {
            return Err(usage(anyhow!("--p-iota must be in (0, 1]")));
        }
    }
    if let Some(&bad) = args.iota.iter().find(|&&i| i == 0 || i > args.p) {
        return Err(usage(anyhow!("--iota target {bad} is outside 1..={}", args.p)));
    }
    if args.n_int == 0 {
        return Err(usage(anyhow!("--n-int must be positive")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let dag = causal_risk::graph::random_er_dag(args.p, args.ens, &mut rng).map_err(|e| usage(e.into()))?;
    let sem = Sem64::build(dag, args.link, args.noise, args.snr, &mut rng).map_err(|e| usage(e.into()))?;
    let iota: BTreeSet<usize> = match args.p_iota {
        Some(q) => sample_iota(args.p, q, &mut rng, DEFAULT_MAX_RETRIES).map_err(|e| usage(e.into()))?,
        None => args.iota.iter().map(|i| i - 1).collect(),
    };
    let n_obs = args.n_obs.unwrap_or(args.n_int.max(100));
    let d = Dataset64::generate(&sem, &iota, args.kind, args.shift, args.n_int, n_obs, &mut rng)
        .map_err(|e| usage(e.into()))?;

    let dir = &args.out_dir;
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(data)?;
    let run = || -> anyhow::Result<()> {
        d.write_files(&dir.join("data.csv"), &dir.join("specs.json"))?;
        std::fs::write(dir.join("truth.adj"), sem.dag().graph().to_adjacency_string())?;
        let mut record = serde_json::to_value(sem.to_record())?;
        record["command"] = json!({
            "subcommand": "simulate",
            "seed": args.seed,
            "p": args.p,
            "ens": args.ens,
            "link": args.link.to_string(),
            "noise": args.noise.to_string(),
            "kind": args.kind.to_string(),
            "shift": args.shift,
            "snr": args.snr,
            "p_iota": args.p_iota,
            "iota": iota.iter().map(|i| i + 1).collect::<Vec<_>>(),
            "n_int": args.n_int,
            "n_obs": n_obs,
        });
        write_json(&dir.join("sem.json"), &record)
    };
    run().map_err(data)?;
    log::info!("wrote {} rows for {} interventions to {}", d.total_n(), iota.len(), dir.display());
    Ok(())
}

fn report_json(r: &RiskReport<f64>) -> Value {
    json!({
        "learner": r.learner_id,
        "oracle_hat": r.oracle_hat.as_ref().map(|v| v.value),
        "naive": r.naive.value,
        "cv": r.cv.value,
        "weighted": r.weighted.value,
        "details": {
            "oracle_hat": r.oracle_hat.as_ref().map(|v| v.to_record()),
            "naive": r.naive.to_record(),
            "cv": r.cv.to_record(),
            "weighted": r.weighted.to_record(),
        },
    })
}

fn evaluate(args: &EvaluateArgs) -> Result<(), Failure> {
    let specs = match &args.specs {
        Some(s) => s.clone(),
        None => args.data.with_file_name("specs.json"),
    };
    let d = Dataset64::read_files(&args.data, &specs)
        .with_context(|| format!("reading {} and {}", args.data.display(), specs.display()))
        .map_err(data)?;
    if d.iota_size() < 2 {
        return Err(data(anyhow!(
            "the dataset has {} intervention(s); cross-validated risk needs at least two, \
             so that every fold keeps some interventional data",
            d.iota_size()
        )));
    }
    let truth = match &args.truth {
        Some(path) => {
            let f = File::open(path).with_context(|| format!("opening {}", path.display())).map_err(data)?;
            let g = MixedGraph::read_adjacency(BufReader::new(f), Some(d.p()))
                .with_context(|| format!("reading {}", path.display()))
                .map_err(data)?;
            let edges: Vec<_> = g.directed_edges().iter().copied().collect();
            if !g.undirected_edges().is_empty() {
                return Err(data(anyhow!("--truth must be a DAG without undirected edges")));
            }
            Some(Dag::from_edges(d.p(), edges).context("--truth is not acyclic").map_err(data)?)
        }
        None => None,
    };
    let ens = args
        .ens
        .or_else(|| truth.as_ref().map(|t| 2.0 * t.edge_count() as f64 / d.p() as f64));
    let timeout = args.timeout_secs.map(Duration::from_secs_f64);
    let learners = args
        .learners
        .iter()
        .map(|l| l.build::<f64>(ens, timeout))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| usage(e.into()))?;

    let cfg = args.descend.config();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| usage(e.into()))?;
    let est = estimate_all(&d, &cfg).map_err(|e| data(e.into()))?;
    let results: Vec<_> = pool.install(|| {
        learners
            .iter()
            .map(|l| (l.id(), evaluate_learner(&d, l.as_ref(), &est, truth.as_ref())))
            .collect()
    });

    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (id, r) in results {
        match r {
            Ok(r) => reports.push(r),
            Err(e) => {
                log::error!("{id}: {e}");
                failures.push(json!({"learner": id, "error": e.to_string()}));
            }
        }
    }
    let mut differences = Vec::new();
    for (i, a) in reports.iter().enumerate() {
        for b in &reports[i + 1..] {
            let oracle = a.oracle_hat.as_ref().zip(b.oracle_hat.as_ref()).map(|(x, y)| x.value - y.value);
            differences.push(json!({
                "first": a.learner_id,
                "second": b.learner_id,
                "weighted": a.weighted.value - b.weighted.value,
                "naive": a.naive.value - b.naive.value,
                "cv": a.cv.value - b.cv.value,
                "oracle_hat": oracle,
            }));
        }
    }
    let out = json!({
        "command": {
            "subcommand": "evaluate",
            "data": args.data,
            "specs": specs,
            "truth": args.truth,
            "learners": args.learners.iter().map(|l| l.to_string()).collect::<Vec<_>>(),
            "alpha": cfg.alpha,
            "center_on_observational": cfg.center_on_observational,
            "timeout_secs": args.timeout_secs,
        },
        "p": d.p(),
        "iota": d.iota().iter().map(|i| i + 1).collect::<Vec<_>>(),
        "descendants": est.values().map(|e| e.to_record()).collect::<Vec<_>>(),
        "learners": reports.iter().map(report_json).collect::<Vec<_>>(),
        "differences": differences,
        "failures": failures,
    });
    let text = serde_json::to_string_pretty(&out).map_err(|e| data(e.into()))? + "\n";
    match &args.out {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(data)?,
        None => print!("{text}"),
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(learner(anyhow!("{} learner(s) failed", failures.len())))
    }
}

fn pick_pair(opts: &ReportOptions, rows: &[ResultRow]) -> Result<(String, String), Failure> {
    match opts.pair.as_slice() {
        [a, b] => Ok((a.clone(), b.clone())),
        [] => {
            let mut ids: Vec<&str> = Vec::new();
            for r in rows {
                if !ids.contains(&r.learner.as_str()) {
                    ids.push(&r.learner);
                }
            }
            match ids.as_slice() {
                [a, b, ..] => Ok((a.to_string(), b.to_string())),
                [] => Ok(("greedy-bic".into(), "empty".into())),
                [_] => Err(usage(anyhow!("results hold a single learner; nothing to compare"))),
            }
        }
        _ => Err(usage(anyhow!("--pair takes exactly two learner ids"))),
    }
}

fn write_report(opts: &ReportOptions, rows: &[ResultRow], out_dir: &Path, meta: Value) -> Result<(), Failure> {
    let (first, second) = pick_pair(opts, rows)?;
    let report = aggregate_report(rows, &first, &second, opts.tolerance, opts.min_per_cell).map_err(|e| {
        match e {
            causal_risk::harness::HarnessError::Config(_) => usage(e.into()),
            other => data(other.into()),
        }
    })?;
    let mut value = serde_json::to_value(&report).map_err(|e| data(e.into()))?;
    value["command"] = meta;
    write_json(&out_dir.join("cells.json"), &value).map_err(data)?;
    std::fs::write(out_dir.join("report.svg"), render_svg(&report))
        .context("writing report.svg")
        .map_err(data)?;
    Ok(())
}

fn grid(args: &GridArgs) -> Result<(), Failure> {
    let mut cfg = match &args.config {
        Some(path) => GridConfig::from_path(path).map_err(|e| usage(e.into()))?,
        None => GridConfig::default(),
    };
    if args.oracle_descendants {
        cfg.options.oracle_descendants = true;
    }
    if let Some(alpha) = args.alpha {
        cfg.options.descend.alpha = alpha;
    }
    if args.center_on_observational {
        cfg.options.descend.center_on_observational = true;
    }
    if args.timeout_secs.is_some() {
        cfg.timeout_secs = args.timeout_secs;
    }
    cfg.validate().map_err(|e| usage(e.into()))?;
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))
        .map_err(data)?;

    log::info!("running {} settings with {} job(s)", cfg.setting_count(), args.jobs);
    let out = run_grid(&cfg, args.seed, args.jobs).map_err(|e| data(e.into()))?;
    let path = args.out_dir.join("results.csv");
    let f = File::create(&path).with_context(|| format!("creating {}", path.display())).map_err(data)?;
    write_results(&out.rows, BufWriter::new(f)).map_err(|e| data(e.into()))?;

    let meta = json!({
        "subcommand": "grid",
        "seed": args.seed,
        "jobs": args.jobs,
        "config": cfg,
        "settings": cfg.setting_count(),
        "discarded": out.discarded.iter().map(|d| json!({"setting": d.index, "reason": d.reason})).collect::<Vec<_>>(),
    });
    write_json(&args.out_dir.join("grid.json"), &meta).map_err(data)?;
    write_report(&args.report, &out.rows, &args.out_dir, meta)
}

fn report(args: &ReportArgs) -> Result<(), Failure> {
    let f = File::open(&args.results)
        .with_context(|| format!("opening {}", args.results.display()))
        .map_err(data)?;
    let rows = read_results(BufReader::new(f))
        .with_context(|| format!("reading {}", args.results.display()))
        .map_err(data)?;
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))
        .map_err(data)?;
    let meta = json!({
        "subcommand": "report",
        "results": args.results,
        "tolerance": args.report.tolerance,
        "min_per_cell": args.report.min_per_cell,
    });
    write_report(&args.report, &rows, &args.out_dir, meta)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Grid(a) => grid(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn seed_is_mandatory() {
        let base = ["causal-risk", "simulate", "--p", "5", "--ens", "1.5", "--p-iota", "1", "--n-int", "10"];
        assert!(Cli::try_parse_from(base).is_err());
        let mut with_seed = base.to_vec();
        with_seed.extend(["--seed", "3"]);
        assert!(Cli::try_parse_from(with_seed).is_ok());
        assert!(Cli::try_parse_from(["causal-risk", "grid"]).is_err());
    }

    #[test]
    fn learners_parse_from_flags() {
        let cli = Cli::try_parse_from([
            "causal-risk", "evaluate", "--data", "d.csv", "--learner", "empty", "--learner", "acor:2",
        ])
        .unwrap();
        let Command::Evaluate(a) = cli.command else { panic!() };
        assert_eq!(a.learners, vec![LearnerConfig::Empty, LearnerConfig::Acor { ens_oracle: Some(2.0) }]);
        assert!(Cli::try_parse_from(["causal-risk", "evaluate", "--data", "d.csv", "--learner", "pc"]).is_err());
    }
}
