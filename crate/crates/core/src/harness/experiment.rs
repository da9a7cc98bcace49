//! The comparison protocol: an SOC batch fixes the treatment budget, the
//! baselines are matched to it, and every policy is then run on shared
//! initial conditions.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use crate::baselines::{calibrate_scale, PolicyKind, PolicySpec};
use crate::dynamics::{format_time, write_event_log, ControlParams};
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::metrics::{aggregate, BatchStats, MetricsSummary};
use crate::sim::{run_batch, RunConfig, RunResult, Scenario};

/// Seed stride between policies.
pub const POLICY_SEED_STRIDE: u64 = 1_000_000;

pub const SUMMARY_HEADER: &str = "policy,run_id,seed,coverage,peak_infected,total_treatments,discounted_cost";
pub const TIMESERIES_HEADER: &str = "policy,t,mean_infected,ci_lo,ci_hi";
pub const CALIBRATION_HEADER: &str = "policy,scale,target,achieved,batch,seed0";
pub const SWEEP_HEADER: &str = "q_x,policy,runs,mean_coverage,sem_coverage,mean_treatments,sem_treatments";

/// `(event seed, initial-infection seed)` for runs `0..runs` of `kind`.
/// Initial conditions depend only on the run index, so every policy sees
/// the same initial infections for a given run.
pub fn seed_block(base_seed: u64, kind: PolicyKind, runs: usize) -> Vec<(u64, u64)> {
    (0..runs as u64)
        .map(|r| {
            (
                base_seed
                    .wrapping_add(kind.index().wrapping_mul(POLICY_SEED_STRIDE))
                    .wrapping_add(r),
                base_seed.wrapping_add(r),
            )
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PolicyBatch {
    pub spec: PolicySpec,
    pub seeds: Vec<(u64, u64)>,
    pub runs: Vec<RunResult>,
}

impl PolicyBatch {
    pub fn metrics(&self) -> Vec<MetricsSummary> {
        self.runs.iter().map(|r| r.metrics.clone()).collect()
    }

    pub fn stats(&self) -> Result<BatchStats> {
        aggregate(&self.metrics())
    }

    pub fn mean_treatments(&self) -> f64 {
        mean_treatments(&self.runs)
    }
}

fn mean_treatments(runs: &[RunResult]) -> f64 {
    runs.iter().map(|r| r.metrics.total_treatments as f64).sum::<f64>() / runs.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRecord {
    pub policy: PolicyKind,
    pub scale: f64,
    pub target: f64,
    pub achieved: f64,
    pub batch: usize,
    pub seed0: u64,
}

impl CalibrationRecord {
    pub fn relative_error(&self) -> f64 {
        if self.target == 0.0 {
            self.achieved.abs()
        } else {
            (self.achieved - self.target).abs() / self.target
        }
    }
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    /// Batch-mean SOC treatments, the budget every baseline is matched to.
    pub target: f64,
    pub batches: Vec<PolicyBatch>,
    pub calibrations: Vec<CalibrationRecord>,
    /// Calibration failures; the affected baselines still run at their
    /// closest scale and appear in `calibrations`.
    pub failures: Vec<Error>,
}

impl ExperimentOutcome {
    pub fn batch(&self, kind: PolicyKind) -> Option<&PolicyBatch> {
        self.batches.iter().find(|b| b.spec.kind == kind)
    }
}

pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub scenario: Scenario,
    pub cp: ControlParams,
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        let net = cfg.load_graph()?;
        let cp = cfg.control_params(net.node_count())?;
        if cfg.initial_infected > net.node_count() {
            return Err(Error::ConfigKey {
                key: "initial_infected".into(),
                msg: format!("{} exceeds node count {}", cfg.initial_infected, net.node_count()),
            });
        }
        Ok(Experiment {
            scenario: Scenario::new(net)?,
            cfg,
            cp,
        })
    }

    pub fn run_config(&self, spec: PolicySpec) -> RunConfig {
        let mut rc = RunConfig::new(spec, self.cfg.mp, self.cp.clone());
        rc.t_final = self.cfg.t_final;
        rc.initial_infected_count = self.cfg.initial_infected;
        rc.grid_points = self.cfg.grid_points;
        rc
    }

    pub fn run_policy(&self, spec: PolicySpec, runs: usize) -> Result<PolicyBatch> {
        let seeds = seed_block(self.cfg.base_seed, spec.kind, runs);
        let results = run_batch(&self.run_config(spec), &self.scenario, &seeds)?;
        Ok(PolicyBatch {
            spec,
            seeds,
            runs: results,
        })
    }

    /// Calibrates a scaled baseline to `target` on its fixed calibration
    /// batch. A failed calibration still yields the closest evaluated scale
    /// alongside the error, so the caller can report it as such.
    pub fn calibrate(&self, kind: PolicyKind, target: f64) -> Result<(CalibrationRecord, Option<Error>)> {
        let batch = self.cfg.calibration_batch;
        let seeds = seed_block(self.cfg.base_seed, kind, batch);
        let record = |scale: f64, achieved: f64| CalibrationRecord {
            policy: kind,
            scale,
            target,
            achieved,
            batch,
            seed0: seeds[0].0,
        };
        if target == 0.0 {
            // nothing to match but an inactive policy
            let spec = PolicySpec::new(kind).with_scale(0.0);
            let runs = run_batch(&self.run_config(spec), &self.scenario, &seeds)?;
            return Ok((record(0.0, mean_treatments(&runs)), None));
        }
        let evaluations = Mutex::new(Vec::new());
        let runner = |spec: &PolicySpec| -> Result<f64> {
            let runs = run_batch(&self.run_config(*spec), &self.scenario, &seeds)?;
            let m = mean_treatments(&runs);
            evaluations.lock().unwrap().push((spec.scale, m));
            Ok(m)
        };
        match calibrate_scale(&PolicySpec::new(kind), target, &runner, self.cfg.calibration_tol) {
            Ok(cal) => Ok((record(cal.spec.scale, cal.achieved), None)),
            Err(e @ Error::Calibration { .. }) => {
                let evals = evaluations.into_inner().unwrap();
                let &(scale, achieved) = evals
                    .iter()
                    .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
                    .ok_or_else(|| Error::Configuration("calibration evaluated nothing".into()))?;
                Ok((record(scale, achieved), Some(e)))
            }
            Err(e) => Err(e),
        }
    }

    /// Runs the full protocol without touching the filesystem.
    pub fn run(&self) -> Result<ExperimentOutcome> {
        let runs = self.cfg.runs_per_policy;
        let soc = self.run_policy(PolicySpec::new(PolicyKind::Soc), runs)?;
        let target = soc.mean_treatments();

        let mut outcome = ExperimentOutcome {
            target,
            batches: Vec::new(),
            calibrations: Vec::new(),
            failures: Vec::new(),
        };
        let mut soc = Some(soc);
        for &kind in &self.cfg.policies {
            let batch = match kind {
                PolicyKind::Soc => match soc.take() {
                    Some(b) => b,
                    None => continue,
                },
                k if k.is_front_loaded() => {
                    let batch = self.run_policy(PolicySpec::new(k).with_budget(target), runs)?;
                    outcome.calibrations.push(CalibrationRecord {
                        policy: k,
                        scale: 1.0,
                        target,
                        achieved: batch.mean_treatments(),
                        batch: runs,
                        seed0: batch.seeds[0].0,
                    });
                    batch
                }
                k => {
                    let (rec, failure) = self.calibrate(k, target)?;
                    outcome.failures.extend(failure);
                    let batch = self.run_policy(PolicySpec::new(k).with_scale(rec.scale), runs)?;
                    outcome.calibrations.push(rec);
                    batch
                }
            };
            outcome.batches.push(batch);
        }
        Ok(outcome)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))
}

fn io_ctx(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(format!("writing {}", path.display()), e)
}

pub fn write_summary(path: &Path, batches: &[PolicyBatch]) -> Result<()> {
    let mut w = create(path)?;
    let ctx = io_ctx(path);
    writeln!(w, "{SUMMARY_HEADER}").map_err(&ctx)?;
    for b in batches {
        for (run_id, r) in b.runs.iter().enumerate() {
            let m = &r.metrics;
            writeln!(
                w,
                "{},{run_id},{},{},{},{},{}",
                b.spec.kind,
                r.seed,
                format_time(m.total_infection_coverage),
                m.peak_infected,
                m.total_treatments,
                format_time(m.discounted_cost)
            )
            .map_err(&ctx)?;
        }
    }
    w.flush().map_err(&ctx)
}

pub fn write_timeseries(path: &Path, batches: &[PolicyBatch]) -> Result<()> {
    let mut w = create(path)?;
    let ctx = io_ctx(path);
    writeln!(w, "{TIMESERIES_HEADER}").map_err(&ctx)?;
    for b in batches {
        for (t, est) in b.stats()?.timeseries {
            writeln!(
                w,
                "{},{},{},{},{}",
                b.spec.kind,
                format_time(t),
                format_time(est.mean),
                format_time(est.ci_lo),
                format_time(est.ci_hi)
            )
            .map_err(&ctx)?;
        }
    }
    w.flush().map_err(&ctx)
}

pub fn write_calibration(path: &Path, records: &[CalibrationRecord]) -> Result<()> {
    let mut w = create(path)?;
    let ctx = io_ctx(path);
    writeln!(w, "{CALIBRATION_HEADER}").map_err(&ctx)?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.policy,
            format_time(r.scale),
            format_time(r.target),
            format_time(r.achieved),
            r.batch,
            r.seed0
        )
        .map_err(&ctx)?;
    }
    w.flush().map_err(&ctx)
}

pub fn write_event_logs(dir: &Path, batches: &[PolicyBatch]) -> Result<()> {
    for b in batches {
        for (run_id, r) in b.runs.iter().enumerate() {
            let path = dir.join("events").join(b.spec.kind.name()).join(format!("{run_id}.csv"));
            let mut w = create(&path)?;
            write_event_log(&mut w, run_id, &r.events).map_err(io_ctx(&path))?;
            w.flush().map_err(io_ctx(&path))?;
        }
    }
    Ok(())
}

/// Marker listing calibration failures; absent on success.
pub const FAILURE_MARKER: &str = "INCOMPLETE";

pub fn write_outcome(dir: &Path, outcome: &ExperimentOutcome, events: bool) -> Result<()> {
    write_summary(&dir.join("summary.csv"), &outcome.batches)?;
    write_timeseries(&dir.join("timeseries.csv"), &outcome.batches)?;
    write_calibration(&dir.join("calibration.csv"), &outcome.calibrations)?;
    if events {
        write_event_logs(dir, &outcome.batches)?;
    }
    let marker = dir.join(FAILURE_MARKER);
    if outcome.failures.is_empty() {
        if marker.exists() {
            fs::remove_file(&marker).map_err(|e| Error::io("removing stale marker", e))?;
        }
    } else {
        let mut w = create(&marker)?;
        for f in &outcome.failures {
            writeln!(w, "{f}").map_err(io_ctx(&marker))?;
        }
        w.flush().map_err(io_ctx(&marker))?;
    }
    Ok(())
}

/// First failure of an outcome as an error, if any.
pub fn outcome_status(outcome: &ExperimentOutcome) -> Result<()> {
    match outcome.failures.first() {
        None => Ok(()),
        Some(Error::Calibration { policy, msg }) => Err(Error::Calibration {
            policy: policy.clone(),
            msg: format!("{msg} (outputs are partial)"),
        }),
        Some(other) => Err(Error::Configuration(other.to_string())),
    }
}

/// Full comparison protocol with file output.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path, events: bool) -> Result<ExperimentOutcome> {
    let outcome = Experiment::new(cfg.clone())?.run()?;
    write_outcome(out_dir, &outcome, events)?;
    Ok(outcome)
}

/// Repeats the protocol for each `q_x` value in the sweep, writing one
/// sub-directory per value plus a combined `sweep.csv`.
pub fn run_sweep(cfg: &ExperimentConfig, out_dir: &Path, events: bool) -> Result<Vec<(f64, ExperimentOutcome)>> {
    let sweep = cfg.q_x_sweep.clone().ok_or_else(|| Error::ConfigKey {
        key: "q_x_sweep".into(),
        msg: "required by the sweep command".into(),
    })?;
    let mut all = Vec::with_capacity(sweep.len());
    for q in sweep {
        let dir = out_dir.join(format!("qx_{}", format_time(q)));
        let outcome = run_experiment(&cfg.with_q_x(q), &dir, events)?;
        all.push((q, outcome));
    }
    let path = out_dir.join("sweep.csv");
    let mut w = create(&path)?;
    let ctx = io_ctx(&path);
    writeln!(w, "{SWEEP_HEADER}").map_err(&ctx)?;
    for (q, outcome) in &all {
        for b in &outcome.batches {
            let s = b.stats()?;
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                format_time(*q),
                b.spec.kind,
                s.runs,
                format_time(s.coverage.mean),
                format_time(s.coverage.sem),
                format_time(s.total_treatments.mean),
                format_time(s.total_treatments.sem)
            )
            .map_err(&ctx)?;
        }
    }
    w.flush().map_err(&ctx)?;
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_blocks_share_initial_conditions() {
        let soc = seed_block(100, PolicyKind::Soc, 3);
        let t = seed_block(100, PolicyKind::Trivial, 3);
        assert_eq!(soc, vec![(100, 100), (101, 101), (102, 102)]);
        assert_eq!(t, vec![(1_000_100, 100), (1_000_101, 101), (1_000_102, 102)]);
    }
}
