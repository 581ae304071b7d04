use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Args;
use forestplan::baselines::{greedy_plan, oracle_plan, GreedyRule, DEFAULT_ORACLE_CAP};
use forestplan::data::{read_dataset, Schema};
use forestplan::discretize::state_proba;
use forestplan::encoder::{plan, Online};
use forestplan::offline::{preprocess, sample_states};
use forestplan::State;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::{FormatArg, Setup, SetupArgs};

#[derive(Args)]
pub struct BenchArgs {
    #[command(flatten)]
    setup: SetupArgs,
    /// Draw queries from a dataset instead of the state space.
    #[arg(long, requires = "schema")]
    data: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Share of the state space preprocessed into the goal database.
    #[arg(long, default_value_t = 100.0)]
    percent: f64,
    /// Repeat for several shares, e.g. `r=10,20,50,100`.
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    /// Also write the JSON lines here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Print JSON lines instead of the table.
    #[arg(long)]
    json: bool,
}

/// One line of the report: one arm at one preprocessing share.
#[derive(Debug, Clone, Serialize)]
pub struct ArmReport {
    pub percent: f64,
    pub arm: &'static str,
    pub instances: usize,
    pub solved: usize,
    /// Mean over the instances this arm solved.
    pub mean_cost: Option<f64>,
    /// Mean over the instances every arm solved.
    pub mean_cost_common: Option<f64>,
    /// Makespan for the planner, action count for the baselines.
    pub mean_length: Option<f64>,
    pub mean_time_s: f64,
    pub peak_mem_gb: Option<f64>,
    pub db_entries: usize,
    pub seed: u64,
    pub cost_seed: u64,
}

#[derive(Default, Clone, Copy)]
struct Run {
    cost: Option<f64>,
    length: usize,
    secs: f64,
}

fn parse_sweep(text: &str) -> Result<Vec<f64>> {
    let list = text.strip_prefix("r=").unwrap_or(text);
    let rs = list
        .split(',')
        .map(|t| t.trim().trim_end_matches('%').parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("--sweep `{text}` is not a list like r=10,20,100"))?;
    if rs.is_empty() || rs.iter().any(|r| !(*r > 0.0 && *r <= 100.0)) {
        bail!("--sweep shares must lie in (0, 100]");
    }
    Ok(rs)
}

/// Peak resident memory from the kernel, where available.
fn peak_mem_gb() -> Option<f64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: f64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb / (1024.0 * 1024.0))
}

/// Queries below the threshold, from the dataset or the state space.
fn sample_queries(setup: &Setup, args: &BenchArgs) -> Result<Vec<State>> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let below = |s: &State| state_proba(&setup.forest, &setup.table, s, setup.search.target) < setup.search.z;
    let mut pool: Vec<State> = match (&args.data, &args.schema) {
        (Some(data), Some(schema)) => {
            let text = std::fs::read_to_string(schema).with_context(|| format!("reading {}", schema.display()))?;
            let schema = Schema::from_json(&text)?;
            let file = File::open(data).with_context(|| format!("opening {}", data.display()))?;
            let d = read_dataset(file, args.format.into(), &schema)?;
            let mut states = Vec::with_capacity(d.len());
            for x in &d.rows {
                states.push(setup.table.to_state(&setup.forest, x)?);
            }
            states.into_iter().filter(|s| below(s)).collect()
        }
        _ if setup.table.state_count() <= 1_000_000 => setup.table.all_states().filter(|s| below(s)).collect(),
        _ => {
            let counts = setup.table.counts();
            let mut out = Vec::new();
            for _ in 0..args.instances.saturating_mul(1000) {
                if out.len() >= args.instances {
                    break;
                }
                let s = State(counts.iter().map(|&n| rng.gen_range(0..n)).collect());
                if below(&s) {
                    out.push(s);
                }
            }
            out
        }
    };
    pool.shuffle(&mut rng);
    pool.truncate(args.instances);
    Ok(pool)
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn run(args: BenchArgs) -> Result<()> {
    let setup = Setup::load(&args.setup)?;
    let shares = match &args.sweep {
        Some(s) => parse_sweep(s)?,
        None => vec![args.percent],
    };
    let queries = sample_queries(&setup, &args)?;
    if queries.is_empty() {
        bail!("no query below the threshold to benchmark");
    }
    let workers = args.workers.unwrap_or(setup.config.workers);
    let weights = setup.weights();
    let params = setup.plan_params();
    let mut lines = Vec::new();
    for &r in &shares {
        let states = sample_states(&setup.table, r, args.seed);
        log::info!("r = {r}%: preprocessing {} states", states.len());
        let db = preprocess(&states, &setup.lib, &setup.forest, &setup.table, &setup.search, workers)?;
        let ctx = Online {
            forest: &setup.forest,
            table: &setup.table,
            lib: &setup.lib,
            db: Some(&db),
            weights: &weights,
            search: &setup.search,
        };
        let mut runs: [Vec<Run>; 3] = Default::default();
        for s in &queries {
            let t = Instant::now();
            let p = plan(&ctx, s, &params).ok();
            runs[0].push(Run {
                cost: p.as_ref().map(|o| o.plan.cost),
                length: p.as_ref().map_or(0, |o| o.makespan),
                secs: t.elapsed().as_secs_f64(),
            });
            let t = Instant::now();
            let g = greedy_plan(s, &setup.lib, &setup.forest, &setup.table, &setup.search, GreedyRule::Ratio).ok();
            runs[1].push(Run {
                cost: g.as_ref().map(|p| p.cost),
                length: g.as_ref().map_or(0, |p| p.actions.len()),
                secs: t.elapsed().as_secs_f64(),
            });
            let t = Instant::now();
            let o = oracle_plan(s, &setup.lib, &setup.forest, &setup.table, &setup.search, DEFAULT_ORACLE_CAP)
                .ok()
                .flatten();
            runs[2].push(Run {
                cost: o.as_ref().map(|p| p.cost),
                length: o.as_ref().map_or(0, |p| p.actions.len()),
                secs: t.elapsed().as_secs_f64(),
            });
        }
        let common: Vec<usize> = (0..queries.len())
            .filter(|&i| runs.iter().all(|arm| arm[i].cost.is_some()))
            .collect();
        let mem = peak_mem_gb();
        for (arm, name) in runs.iter().zip(["planner", "greedy", "oracle"]) {
            let solved: Vec<&Run> = arm.iter().filter(|x| x.cost.is_some()).collect();
            lines.push(ArmReport {
                percent: r,
                arm: name,
                instances: queries.len(),
                solved: solved.len(),
                mean_cost: mean(solved.iter().filter_map(|x| x.cost)),
                mean_cost_common: mean(common.iter().filter_map(|&i| arm[i].cost)),
                mean_length: mean(solved.iter().map(|x| x.length as f64)),
                mean_time_s: mean(arm.iter().map(|x| x.secs)).unwrap_or(0.0),
                peak_mem_gb: mem,
                db_entries: db.len(),
                seed: args.seed,
                cost_seed: setup.config.cost_seed,
            });
        }
    }
    let jsonl: String = lines
        .iter()
        .map(|l| serde_json::to_string(l).expect("report serializes") + "\n")
        .collect();
    if let Some(p) = &args.report {
        let mut f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
        f.write_all(jsonl.as_bytes())?;
    }
    if args.json {
        print!("{jsonl}");
    } else {
        print_table(&lines);
    }
    Ok(())
}

fn print_table(lines: &[ArmReport]) {
    let opt = |v: Option<f64>, prec: usize| v.map_or("-".to_string(), |x| format!("{x:.prec$}"));
    for chunk in lines.chunks(3) {
        let first = &chunk[0];
        println!(
            "r = {}%: {} goal database entries, {} queries",
            first.percent, first.db_entries, first.instances
        );
        println!(
            "  {:<8} {:>7} {:>10} {:>10} {:>10} {:>6} {:>8}",
            "arm", "solved", "T (s)", "Cost", "Cost*", "L", "M (GB)"
        );
        for l in chunk {
            println!(
                "  {:<8} {:>7} {:>10.4} {:>10} {:>10} {:>6} {:>8}",
                l.arm,
                format!("{}/{}", l.solved, l.instances),
                l.mean_time_s,
                opt(l.mean_cost, 2),
                opt(l.mean_cost_common, 2),
                opt(l.mean_length, 2),
                opt(l.peak_mem_gb, 3)
            );
        }
    }
    println!("Cost* averages over the queries every arm solved.");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_lists() {
        assert_eq!(parse_sweep("r=10,20,100").unwrap(), vec![10.0, 20.0, 100.0]);
        assert_eq!(parse_sweep("50%").unwrap(), vec![50.0]);
        assert!(parse_sweep("r=0").is_err());
        assert!(parse_sweep("r=a").is_err());
    }
}
