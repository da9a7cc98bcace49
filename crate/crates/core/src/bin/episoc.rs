use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use episoc::baselines::{PolicyKind, PolicySpec};
use episoc::dynamics::{format_time, EpidemicState};
use episoc::harness::experiment::{
    outcome_status, write_calibration, write_event_logs, write_summary, write_timeseries,
    CalibrationRecord, PolicyBatch,
};
use episoc::harness::{run_experiment, run_sweep, with_jobs, Experiment, ExperimentConfig};
use episoc::lp::{self, LinearProgram};
use episoc::soc::{self, PolicyConstants};
use episoc::{Error, Result};

#[derive(Parser)]
#[command(name = "episoc", version, about = "SIS epidemic simulation with optimal treatment control")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (key = value); defaults to the comparison-figure parameters.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Edge-list file overriding the configured graph.
    #[arg(long, global = true)]
    graph: Option<PathBuf>,
    /// Output directory overriding the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed overriding the configured one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one policy and write its runs.
    Simulate {
        #[arg(long, default_value = "SOC")]
        policy: PolicyKind,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Treatment budget for front-loaded policies.
        #[arg(long, default_value_t = 0.0)]
        budget: f64,
    },
    /// Budget-matched comparison of all configured policies.
    Compare {
        /// Also write per-run event logs.
        #[arg(long)]
        events: bool,
    },
    /// Repeat the comparison over the configured q_x sweep.
    Sweep {
        #[arg(long)]
        events: bool,
    },
    /// Calibrate the scaled baselines against the SOC budget only.
    Calibrate,
    /// Print the SOC policy for a given infection pattern.
    PolicyDebug {
        /// Comma-separated infected node indices or labels.
        #[arg(long, value_delimiter = ',', required = true)]
        infected: Vec<String>,
        /// Comma-separated treated node indices or labels (subset of infected).
        #[arg(long, value_delimiter = ',')]
        treated: Vec<String>,
    },
    /// Solve a linear program from a text file.
    LpCheck { file: PathBuf },
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::from_path(p)?,
        None => ExperimentConfig::figure_one(),
    };
    if let Some(g) = &c.graph {
        cfg.graph = g.display().to_string();
    }
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = c.seed {
        cfg.base_seed = s;
    }
    Ok(cfg)
}

fn print_batches(batches: &[PolicyBatch]) -> Result<()> {
    println!(
        "{:<6} {:>5} {:>12} {:>10} {:>12} {:>10} {:>12}",
        "policy", "runs", "coverage", "±sem", "treatments", "±sem", "cost"
    );
    for b in batches {
        let s = b.stats()?;
        println!(
            "{:<6} {:>5} {:>12.4} {:>10.4} {:>12.2} {:>10.2} {:>12.4}",
            b.spec.kind.name(),
            s.runs,
            s.coverage.mean,
            s.coverage.sem,
            s.total_treatments.mean,
            s.total_treatments.sem,
            s.discounted_cost.mean
        );
    }
    Ok(())
}

fn resolve_nodes(exp: &Experiment, tokens: &[String]) -> Result<Vec<usize>> {
    let net = &exp.scenario.net;
    tokens
        .iter()
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            let t = t.trim();
            match t.parse::<usize>() {
                Ok(i) => net.check_index(i).map(|_| i),
                Err(_) => net
                    .index_of(t)
                    .ok_or_else(|| Error::Argument(format!("unknown node '{t}'"))),
            }
        })
        .collect()
}

fn policy_debug(cfg: ExperimentConfig, infected: &[String], treated: &[String]) -> Result<()> {
    let exp = Experiment::new(cfg)?;
    let net = &exp.scenario.net;
    let inf = resolve_nodes(&exp, infected)?;
    let tr = resolve_nodes(&exp, treated)?;
    let mut state = EpidemicState::new(net, &inf)?;
    for &i in &tr {
        if !state.x[i] {
            return Err(Error::Argument(format!("treated node {i} is not infected")));
        }
        state.h[i] = true;
    }
    let pc = PolicyConstants::compute(&exp.cfg.mp, &exp.cp)?;
    let lp = soc::solve_policy_lp(net, &state.x, &pc)?;
    let lambda = soc::optimal_intensity(&state, net, &pc, &exp.cp, &lp.d)?;
    let vc = soc::compute_value_constants(net, &state.x, &lp.d, &exp.cfg.mp, &exp.cp)?;
    let res = soc::hjb_residuals(&vc, net, &state.x, &exp.cfg.mp, &exp.cp);

    println!("k1={} k3={} k5={}", format_time(pc.k1), format_time(pc.k3), format_time(pc.k5));
    println!("lp_objective={}", format_time(lp.objective));
    println!("max_residual={:e}", res.max());
    println!("node,label,infected,treated,d,lambda");
    for i in 0..net.node_count() {
        println!(
            "{i},{},{},{},{},{}",
            net.label(i),
            state.x[i] as u8,
            state.h[i] as u8,
            format_time(lp.d[i]),
            format_time(lambda[i])
        );
    }
    Ok(())
}

fn lp_check(path: &Path) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let prog = LinearProgram::parse(&text)?;
    let sol = lp::solve(&prog, lp::PIVOT_TOL)?;
    println!("status={:?}", sol.status);
    if sol.status == lp::LpStatus::Optimal {
        println!("objective={}", format_time(sol.objective_value));
        let xs: Vec<String> = sol.x.iter().map(|&v| format_time(v)).collect();
        println!("x={}", xs.join(","));
        println!("min_slack={:e}", prog.min_slack(&sol.x));
    }
    Ok(())
}

/// Edge list alongside the event logs so a run can be drawn on its network.
fn write_graph(path: &Path, exp: &Experiment) -> Result<()> {
    let net = &exp.scenario.net;
    let mut text = String::from("source,target,source_label,target_label\n");
    for &(i, j) in net.edges() {
        text.push_str(&format!("{i},{j},{},{}\n", net.label(i), net.label(j)));
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn simulate(cfg: ExperimentConfig, policy: PolicyKind, runs: usize, scale: f64, budget: f64) -> Result<()> {
    if runs == 0 {
        return Err(Error::Argument("--runs must be positive".into()));
    }
    let spec = PolicySpec::new(policy).with_scale(scale).with_budget(budget);
    spec.validate()?;
    let out = cfg.output_dir.clone();
    let exp = Experiment::new(cfg)?;
    let batch = exp.run_policy(spec, runs)?;
    let batches = [batch];
    write_graph(&out.join("graph.csv"), &exp)?;
    write_summary(&out.join("summary.csv"), &batches)?;
    write_timeseries(&out.join("timeseries.csv"), &batches)?;
    write_event_logs(&out, &batches)?;
    print_batches(&batches)
}

fn calibrate(cfg: ExperimentConfig) -> Result<()> {
    let out = cfg.output_dir.clone();
    let exp = Experiment::new(cfg)?;
    let soc = exp.run_policy(PolicySpec::new(PolicyKind::Soc), exp.cfg.runs_per_policy)?;
    let target = soc.mean_treatments();
    println!("target={}", format_time(target));
    let mut records: Vec<CalibrationRecord> = Vec::new();
    let mut first_err = None;
    for &k in exp.cfg.policies.iter().filter(|k| k.is_calibrated()) {
        let (r, failure) = exp.calibrate(k, target)?;
        println!(
            "{:<6} scale={} achieved={}{}",
            k.name(),
            format_time(r.scale),
            format_time(r.achieved),
            if failure.is_some() { " (FAILED)" } else { "" }
        );
        records.push(r);
        if let Some(e) = failure {
            eprintln!("{e}");
            first_err.get_or_insert(e);
        }
    }
    write_calibration(&out.join("calibration.csv"), &records)?;
    first_err.map_or(Ok(()), Err)
}

fn dispatch(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    let out = cfg.output_dir.clone();
    match cli.cmd {
        Command::Simulate {
            policy,
            runs,
            scale,
            budget,
        } => simulate(cfg, policy, runs, scale, budget),
        Command::Compare { events } => {
            let outcome = run_experiment(&cfg, &out, events)?;
            println!("target treatments={}", format_time(outcome.target));
            print_batches(&outcome.batches)?;
            outcome_status(&outcome)
        }
        Command::Sweep { events } => {
            let mut status = Ok(());
            for (q, outcome) in run_sweep(&cfg, &out, events)? {
                println!("q_x={}", format_time(q));
                print_batches(&outcome.batches)?;
                if status.is_ok() {
                    status = outcome_status(&outcome);
                }
            }
            status
        }
        Command::Calibrate => calibrate(cfg),
        Command::PolicyDebug { infected, treated } => policy_debug(cfg, &infected, &treated),
        Command::LpCheck { file } => lp_check(&file),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = cli.common.jobs;
    match with_jobs(jobs, || dispatch(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
