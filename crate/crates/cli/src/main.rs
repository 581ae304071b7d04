mod bench;
mod config;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use forestplan::baselines::{greedy_plan, oracle_plan, GreedyRule, OracleError, SequentialPlan, DEFAULT_ORACLE_CAP};
use forestplan::data::{read_dataset, InputFormat, Schema};
use forestplan::discretize::state_proba;
use forestplan::encoder::{build_sas, decode, encode, plan, validate_plan, Online, Plan, PlanError, PlanParams, SasProblem};
use forestplan::forest::{format_instance, parse_instance, train_forest, FeatureKind, TrainParams};
use forestplan::knn::SimilarityWeights;
use forestplan::maxsat::{format_output, parse_output, read_wcnf, solve, solve_external, write_wcnf, SolveOptions, SolveStatus};
use forestplan::offline::{preprocess, sample_states, GoalDatabase, SearchParams};
use forestplan::sas::ActionLibrary;
use forestplan::{PartitionTable, RandomForest, State};
use serde_json::json;

use crate::config::Config;

/// Failures with a dedicated exit code; anything else is invalid input.
#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error("{0}")]
    Unsolvable(String),
    #[error("{0}")]
    Timeout(String),
    #[error("{0}")]
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Unsolvable(_) => 2,
            Failure::Timeout(_) => 4,
            Failure::Internal(_) => 1,
        }
    }
}

fn plan_failure(e: PlanError) -> anyhow::Error {
    match e {
        PlanError::Unsolvable(m) => Failure::Unsolvable(m).into(),
        e @ PlanError::Timeout { .. } => Failure::Timeout(e.to_string()).into(),
        e @ PlanError::InvalidPlan(_) => Failure::Internal(e.to_string()).into(),
        e @ PlanError::Encode(_) => anyhow!(e),
    }
}

#[derive(Parser)]
#[command(name = "forestplan", version, about = "Cost-optimal action plans against random forest classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a forest on a labeled dataset.
    Train(TrainArgs),
    /// Print the partition table of a model.
    Partitions {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Build the preferred-goal database over sampled states.
    Preprocess(PreprocessArgs),
    /// Plan for one instance using the goal database.
    Plan(PlanArgs),
    /// Greedy baseline for one instance.
    Greedy {
        #[command(flatten)]
        setup: SetupArgs,
        #[command(flatten)]
        query: QueryArgs,
        #[arg(long, value_enum, default_value_t = RuleArg::Ratio)]
        rule: RuleArg,
        #[arg(long)]
        json: bool,
    },
    /// Exact cheapest plan by exhaustive search.
    Oracle {
        #[command(flatten)]
        setup: SetupArgs,
        #[command(flatten)]
        query: QueryArgs,
        #[arg(long, default_value_t = DEFAULT_ORACLE_CAP)]
        cap: usize,
        #[arg(long)]
        json: bool,
    },
    /// Write the Max-SAT encoding of one query at a fixed makespan.
    ExportWcnf(ExportArgs),
    /// Solve a WCNF file with the built-in or an external solver.
    SolveWcnf(SolveArgs),
    /// Turn a solver model back into a validated plan.
    DecodeModel(DecodeArgs),
    /// Compare planner, greedy and oracle on sampled instances.
    Bench(bench::BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Libsvm,
}

impl From<FormatArg> for InputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => InputFormat::Csv,
            FormatArg::Libsvm => InputFormat::Libsvm,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Ratio,
    MaxGain,
    MinCost,
}

impl From<RuleArg> for GreedyRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Ratio => GreedyRule::Ratio,
            RuleArg::MaxGain => GreedyRule::MaxGain,
            RuleArg::MinCost => GreedyRule::MinCost,
        }
    }
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 30)]
    trees: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rows used for training; the rest are held out. Defaults to 70%.
    #[arg(long)]
    train_size: Option<usize>,
    #[arg(long)]
    mtry: Option<usize>,
    #[arg(long, default_value_t = 12)]
    max_depth: usize,
    #[arg(long, default_value_t = 1)]
    min_leaf: usize,
    /// Embed the partition table in the model file.
    #[arg(long)]
    with_partitions: bool,
}

#[derive(Args, Clone)]
pub(crate) struct SetupArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Class label to reach; defaults to the last class of the model.
    #[arg(long)]
    target: Option<String>,
    /// JSON action specification; defaults to all single-feature moves.
    #[arg(long)]
    actions: Option<PathBuf>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct QueryArgs {
    /// Raw feature values, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    instance: Option<String>,
    /// Partition indices, comma separated.
    #[arg(long)]
    state: Option<String>,
}

#[derive(Args)]
struct PreprocessArgs {
    #[command(flatten)]
    setup: SetupArgs,
    #[arg(long)]
    out: PathBuf,
    /// Share of the state space to preprocess.
    #[arg(long, default_value_t = 100.0)]
    percent: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Overrides `workers` from the config.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    setup: SetupArgs,
    #[command(flatten)]
    query: QueryArgs,
    #[arg(long)]
    db: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    setup: SetupArgs,
    #[command(flatten)]
    query: QueryArgs,
    #[arg(long)]
    db: Option<PathBuf>,
    #[arg(long)]
    makespan: usize,
    #[arg(long)]
    out: PathBuf,
    /// Variable map; defaults to the output path with `.map` appended.
    #[arg(long)]
    map: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    wcnf: PathBuf,
    /// External solver program, called with the WCNF path as last argument.
    #[arg(long)]
    solver: Option<String>,
    #[arg(long = "solver-arg", allow_hyphen_values = true)]
    solver_args: Vec<String>,
    #[arg(long)]
    timeout_ms: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    #[command(flatten)]
    setup: SetupArgs,
    #[command(flatten)]
    query: QueryArgs,
    #[arg(long)]
    db: Option<PathBuf>,
    #[arg(long)]
    map: PathBuf,
    /// Solver output with `s` and `v` lines.
    #[arg(long)]
    solution: PathBuf,
    #[arg(long)]
    json: bool,
}

/// Everything loaded from a model, a config and an action library.
pub(crate) struct Setup {
    pub forest: RandomForest,
    pub table: PartitionTable,
    pub lib: ActionLibrary,
    pub search: SearchParams,
    pub config: Config,
}

impl Setup {
    pub fn load(args: &SetupArgs) -> Result<Self> {
        let config = Config::load(args.config.as_deref())?;
        let forest = load_model(&args.model)?;
        let table = PartitionTable::build(&forest);
        let target = match &args.target {
            Some(label) => forest.class_index(label)?,
            None => forest.classes().len() - 1,
        };
        let lib = match &args.actions {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading actions {}", p.display()))?;
                ActionLibrary::parse_spec(&text, forest.features(), &table)
                    .with_context(|| format!("action spec {}", p.display()))?
            }
            None => ActionLibrary::default_library(&table, forest.features(), &config.cost_model(table.len())?),
        };
        let mut search = SearchParams::new(target, config.z, config.alpha()?.resolve(&lib));
        search.patience = config.delta;
        search.node_budget = config.node_budget;
        Ok(Self {
            forest,
            table,
            lib,
            search,
            config,
        })
    }

    pub fn plan_params(&self) -> PlanParams {
        PlanParams {
            k: self.config.k,
            max_makespan: self.config.l_max,
            sweep: self.config.sweep,
            timeout: self.config.timeout_ms.map(Duration::from_millis),
        }
    }

    pub fn weights(&self) -> SimilarityWeights {
        SimilarityWeights::from_split_frequency(&self.forest)
    }

    fn state(&self, query: &QueryArgs) -> Result<State> {
        if let Some(text) = &query.instance {
            let fields: Vec<&str> = text.split(',').map(str::trim).collect();
            let x = parse_instance(self.forest.features(), &fields)?;
            return Ok(self.table.to_state(&self.forest, &x)?);
        }
        let text = query.state.as_deref().expect("clap requires one query form");
        let idx = text
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("state `{text}` is not a list of partition indices"))?;
        let s = State(idx);
        if !self.table.is_valid_state(&s) {
            bail!("state {s} does not fit partition counts {:?}", self.table.counts());
        }
        Ok(s)
    }

    fn describe(&self, s: &State) -> String {
        format_instance(self.forest.features(), &self.table.representative(s)).join(",")
    }

    pub fn load_db(&self, path: Option<&Path>) -> Result<GoalDatabase> {
        let hint = "run `forestplan preprocess` with the same model, config and actions first";
        let Some(path) = path else {
            bail!("no goal database given (--db); {hint}");
        };
        if !path.exists() {
            bail!("goal database {} does not exist; {hint}", path.display());
        }
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let db = GoalDatabase::read(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
        db.check_forest(&self.forest).with_context(|| format!("{}; {hint}", path.display()))?;
        let p = &db.header().params;
        let target = &self.forest.classes()[self.search.target];
        if p.library != self.lib.fingerprint() || p.target != *target || p.z != self.search.z {
            bail!(
                "goal database {} was built for another action library, target or threshold; {hint}",
                path.display()
            );
        }
        Ok(db)
    }
}

fn load_model(path: &Path) -> Result<RandomForest> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
    RandomForest::from_json(&text).with_context(|| format!("model {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn train(args: TrainArgs) -> Result<()> {
    let schema_text = std::fs::read_to_string(&args.data.schema)
        .with_context(|| format!("reading schema {}", args.data.schema.display()))?;
    let schema = Schema::from_json(&schema_text)?;
    let file = File::open(&args.data.data).with_context(|| format!("opening {}", args.data.data.display()))?;
    let data = read_dataset(file, args.data.format.into(), &schema)
        .with_context(|| format!("dataset {}", args.data.data.display()))?;
    let n_train = args.train_size.unwrap_or(data.len() * 7 / 10);
    let (train, test) = data.split(n_train, args.seed);
    let mut params = TrainParams::for_dataset(&train, args.trees, args.seed);
    params.max_depth = args.max_depth;
    params.min_leaf = args.min_leaf;
    if let Some(m) = args.mtry {
        params.mtry = m;
    }
    let forest = train_forest(&train, &params)?;
    let text = if args.with_partitions {
        forest.to_json_with_partitions()
    } else {
        forest.to_json()
    };
    std::fs::write(&args.out, text).with_context(|| format!("writing {}", args.out.display()))?;
    let accuracy = |d: &forestplan::data::Dataset| {
        let hits = d
            .rows
            .iter()
            .zip(&d.labels)
            .filter(|(x, y)| forest.predict(x).ok() == Some(**y))
            .count();
        hits as f64 / d.len().max(1) as f64
    };
    println!("trained {} trees on {} rows, held out {}", args.trees, train.len(), test.len());
    println!("train accuracy {:.4}", accuracy(&train));
    if !test.is_empty() {
        println!("test accuracy {:.4} (majority {:.4})", accuracy(&test), test.majority_rate());
    }
    println!("model written to {}", args.out.display());
    Ok(())
}

fn partitions(model: &Path, json: bool) -> Result<()> {
    let forest = load_model(model)?;
    let table = PartitionTable::build(&forest);
    let rows: Vec<serde_json::Value> = forest
        .features()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let cells: Vec<String> = match &f.kind {
                FeatureKind::Categorical(c) => c.clone(),
                FeatureKind::Numerical => {
                    let t = table.thresholds(i);
                    let bound = |k: usize, lo: bool| match (lo, k) {
                        (true, 0) => "-inf".to_string(),
                        (true, _) => t[k - 1].to_string(),
                        (false, _) if k == t.len() => "inf".to_string(),
                        (false, _) => t[k].to_string(),
                    };
                    (0..=t.len()).map(|k| format!("[{}, {})", bound(k, true), bound(k, false))).collect()
                }
            };
            json!({"feature": f.name, "mutability": f.mutability, "cells": cells})
        })
        .collect();
    if json {
        println!("{}", serde_json::to_string(&rows)?);
    } else {
        for r in &rows {
            let cells: Vec<&str> = r["cells"].as_array().unwrap().iter().filter_map(|c| c.as_str()).collect();
            println!("{} ({}): {}", r["feature"].as_str().unwrap(), r["mutability"].as_str().unwrap(), cells.join(" "));
        }
        println!("{} states", table.state_count());
    }
    Ok(())
}

fn run_preprocess(args: PreprocessArgs) -> Result<()> {
    let setup = Setup::load(&args.setup)?;
    if !(args.percent > 0.0 && args.percent <= 100.0) {
        bail!("--percent must lie in (0, 100]");
    }
    let states = sample_states(&setup.table, args.percent, args.seed);
    let workers = args.workers.unwrap_or(setup.config.workers);
    log::info!("searching from {} states on {workers} workers", states.len());
    let db = preprocess(&states, &setup.lib, &setup.forest, &setup.table, &setup.search, workers)?;
    let mut out = create(&args.out)?;
    db.write(&mut out)?;
    out.flush()?;
    let with_goal = db.entries().filter(|e| e.goal.is_some()).count();
    println!("{} entries ({} with a goal) written to {}", db.len(), with_goal, args.out.display());
    Ok(())
}

fn plan_json(setup: &Setup, actions: &[forestplan::sas::Action], start: &State, plan: &Plan, makespan: usize) -> serde_json::Value {
    let steps: Vec<Vec<&str>> = plan
        .steps
        .iter()
        .map(|s| s.iter().map(|&a| actions[a].id()).collect())
        .collect();
    json!({
        "initial": start.0,
        "reached": plan.reached.0,
        "reached_instance": setup.describe(&plan.reached),
        "probability": state_proba(&setup.forest, &setup.table, &plan.reached, setup.search.target),
        "cost": plan.cost,
        "makespan": makespan,
        "steps": steps,
    })
}

fn print_plan(setup: &Setup, actions: &[forestplan::sas::Action], start: &State, plan: &Plan, makespan: usize) {
    println!("initial {start} -> reached {} ({})", plan.reached, setup.describe(&plan.reached));
    for (t, step) in plan.steps.iter().enumerate() {
        let ids: Vec<&str> = step.iter().map(|&a| actions[a].id()).collect();
        println!("  step {}: {}", t + 1, ids.join(", "));
    }
    let p = state_proba(&setup.forest, &setup.table, &plan.reached, setup.search.target);
    println!("cost {} over makespan {makespan}, p = {p:.4}", plan.cost);
}

fn run_plan(args: PlanArgs) -> Result<()> {
    let setup = Setup::load(&args.setup)?;
    let db = setup.load_db(args.db.as_deref())?;
    let start = setup.state(&args.query)?;
    let weights = setup.weights();
    let ctx = Online {
        forest: &setup.forest,
        table: &setup.table,
        lib: &setup.lib,
        db: Some(&db),
        weights: &weights,
        search: &setup.search,
    };
    let out = plan(&ctx, &start, &setup.plan_params()).map_err(plan_failure)?;
    if args.json {
        let mut v = plan_json(&setup, setup.lib.actions(), &start, &out.plan, out.makespan);
        v["goals"] = json!(out.goals.iter().map(|g| g.0.clone()).collect::<Vec<_>>());
        println!("{v}");
    } else {
        print_plan(&setup, setup.lib.actions(), &start, &out.plan, out.makespan);
    }
    Ok(())
}

fn print_sequential(setup: &Setup, start: &State, p: &SequentialPlan, json_out: bool) -> Result<()> {
    let sas = SasProblem::new(setup.table.counts(), setup.lib.actions().to_vec(), start.clone(), vec![p.reached.clone()])?;
    let plan = p.to_plan(&sas);
    validate_plan(&plan, &sas).map_err(|e| Failure::Internal(e.to_string()))?;
    if json_out {
        println!("{}", plan_json(setup, setup.lib.actions(), start, &plan, plan.makespan()));
    } else {
        print_plan(setup, setup.lib.actions(), start, &plan, plan.makespan());
    }
    Ok(())
}

fn run_greedy(setup: SetupArgs, query: QueryArgs, rule: RuleArg, json_out: bool) -> Result<()> {
    let setup = Setup::load(&setup)?;
    let start = setup.state(&query)?;
    match greedy_plan(&start, &setup.lib, &setup.forest, &setup.table, &setup.search, rule.into()) {
        Ok(p) => print_sequential(&setup, &start, &p, json_out),
        Err(e) => Err(Failure::Unsolvable(e.to_string()).into()),
    }
}

fn run_oracle(setup: SetupArgs, query: QueryArgs, cap: usize, json_out: bool) -> Result<()> {
    let setup = Setup::load(&setup)?;
    let start = setup.state(&query)?;
    match oracle_plan(&start, &setup.lib, &setup.forest, &setup.table, &setup.search, cap) {
        Ok(Some(p)) => print_sequential(&setup, &start, &p, json_out),
        Ok(None) => Err(Failure::Unsolvable(format!("no goal state is reachable from {start}")).into()),
        Err(e @ OracleError::CapExceeded { .. }) => Err(Failure::Timeout(e.to_string()).into()),
    }
}

/// The SAS+ problem the planner would solve for this query.
fn query_sas(setup: &Setup, db_path: Option<&Path>, query: &QueryArgs) -> Result<SasProblem> {
    let db = setup.load_db(db_path)?;
    let start = setup.state(query)?;
    let weights = setup.weights();
    let ctx = Online {
        forest: &setup.forest,
        table: &setup.table,
        lib: &setup.lib,
        db: Some(&db),
        weights: &weights,
        search: &setup.search,
    };
    let (sas, _) = build_sas(&ctx, &start, setup.config.k).map_err(plan_failure)?;
    Ok(sas)
}

fn map_path(out: &Path, map: Option<PathBuf>) -> PathBuf {
    map.unwrap_or_else(|| {
        let mut p = out.as_os_str().to_owned();
        p.push(".map");
        PathBuf::from(p)
    })
}

fn export_wcnf(args: ExportArgs) -> Result<()> {
    let setup = Setup::load(&args.setup)?;
    let sas = query_sas(&setup, args.db.as_deref(), &args.query)?;
    let enc = encode(&sas, args.makespan)?;
    let mut out = create(&args.out)?;
    write_wcnf(&enc.wcnf, &mut out)?;
    out.flush()?;
    let map = map_path(&args.out, args.map);
    let mut side = create(&map)?;
    enc.vars.write_sidecar(&sas, &mut side)?;
    side.flush()?;
    println!(
        "{} variables, {} hard and {} soft clauses written to {} (map {})",
        enc.wcnf.num_vars(),
        enc.wcnf.hard().len(),
        enc.wcnf.soft().len(),
        args.out.display(),
        map.display()
    );
    Ok(())
}

fn solve_wcnf(args: SolveArgs) -> Result<()> {
    let file = File::open(&args.wcnf).with_context(|| format!("opening {}", args.wcnf.display()))?;
    let instance = read_wcnf(BufReader::new(file)).with_context(|| format!("reading {}", args.wcnf.display()))?;
    let timeout = args.timeout_ms.map(Duration::from_millis);
    let result = match &args.solver {
        Some(program) => solve_external(program, &args.solver_args, &args.wcnf, &instance, timeout)?,
        None => solve(&instance, SolveOptions { timeout }),
    };
    let text = format_output(&result);
    match &args.out {
        Some(p) => std::fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    match result.status {
        SolveStatus::Optimal => Ok(()),
        SolveStatus::HardUnsat => Err(Failure::Unsolvable("hard clauses are unsatisfiable".into()).into()),
        SolveStatus::Timeout => Err(Failure::Timeout("solver stopped before proving optimality".into()).into()),
    }
}

fn decode_model(args: DecodeArgs) -> Result<()> {
    let setup = Setup::load(&args.setup)?;
    let sas = query_sas(&setup, args.db.as_deref(), &args.query)?;
    let map_text = std::fs::read_to_string(&args.map).with_context(|| format!("reading {}", args.map.display()))?;
    let makespan: usize = map_text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix("c makespan "))
        .and_then(|l| l.trim().parse().ok())
        .ok_or_else(|| anyhow!("{}: first line must be `c makespan <L>`", args.map.display()))?;
    let enc = encode(&sas, makespan)?;
    let mut expected = Vec::new();
    enc.vars.write_sidecar(&sas, &mut expected)?;
    if expected != map_text.as_bytes() {
        bail!(
            "{} does not match the encoding of this query; export it again with the same inputs",
            args.map.display()
        );
    }
    let solution =
        std::fs::read_to_string(&args.solution).with_context(|| format!("reading {}", args.solution.display()))?;
    let result = parse_output(&solution, &enc.wcnf)?;
    let Some(model) = result.model else {
        return Err(match result.status {
            SolveStatus::HardUnsat => Failure::Unsolvable(format!("no plan of makespan {makespan}")),
            _ => Failure::Timeout("solution has no model".into()),
        }
        .into());
    };
    let plan = decode(&model, &enc.vars, &sas);
    validate_plan(&plan, &sas).map_err(|e| Failure::Internal(format!("decoded plan is invalid: {e}")))?;
    if args.json {
        println!("{}", plan_json(&setup, &sas.actions, &sas.initial, &plan, makespan));
    } else {
        print_plan(&setup, &sas.actions, &sas.initial, &plan, makespan);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Partitions { model, json } => partitions(&model, json),
        Command::Preprocess(a) => run_preprocess(a),
        Command::Plan(a) => run_plan(a),
        Command::Greedy {
            setup,
            query,
            rule,
            json,
        } => run_greedy(setup, query, rule, json),
        Command::Oracle {
            setup,
            query,
            cap,
            json,
        } => run_oracle(setup, query, cap, json),
        Command::ExportWcnf(a) => export_wcnf(a),
        Command::SolveWcnf(a) => solve_wcnf(a),
        Command::DecodeModel(a) => decode_model(a),
        Command::Bench(a) => bench::run(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<Failure>().map_or(3, Failure::code);
            ExitCode::from(code)
        }
    }
}

