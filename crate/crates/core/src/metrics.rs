//! Performance measures computed from event logs.

use crate::dynamics::{ControlParams, Event, EventKind};
use crate::error::{Error, Result};

/// Number of points on the uniform infected-count grid.
pub const DEFAULT_GRID_POINTS: usize = 200;
/// Normal quantile for two-sided 95% intervals.
pub const Z_95: f64 = 1.96;

/// Treatment intensities in force from `t_start` until the next segment,
/// stored as the nonzero `(node, rate)` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSegment {
    pub t_start: f64,
    pub rates: Vec<(usize, f64)>,
}

impl RateSegment {
    pub fn from_dense(t_start: f64, rates: &[f64]) -> Self {
        RateSegment {
            t_start,
            rates: rates
                .iter()
                .enumerate()
                .filter(|(_, &r)| r != 0.0)
                .map(|(i, &r)| (i, r))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSummary {
    /// Time integral of the infected count over `[0, t_final]`.
    pub total_infection_coverage: f64,
    pub peak_infected: usize,
    pub total_treatments: u64,
    pub discounted_cost: f64,
    /// `(t, infected count)` on a uniform grid over `[0, t_final]`.
    pub infected_timeseries: Vec<(f64, usize)>,
}

/// Replays infection/treatment indicators from a log without a network.
struct Replay {
    x: Vec<bool>,
    h: Vec<bool>,
    infected: usize,
    last_t: f64,
}

impl Replay {
    fn new(x0: &[bool]) -> Self {
        Replay {
            x: x0.to_vec(),
            h: vec![false; x0.len()],
            infected: x0.iter().filter(|&&v| v).count(),
            last_t: 0.0,
        }
    }

    fn apply(&mut self, ev: &Event) -> Result<()> {
        let i = ev.node;
        if i >= self.x.len() {
            return Err(Error::Replay(format!("node {i} out of range")));
        }
        if !(ev.t >= self.last_t) {
            return Err(Error::Replay(format!(
                "event time {} precedes {}",
                ev.t, self.last_t
            )));
        }
        match ev.kind {
            EventKind::Infection if !self.x[i] => {
                self.x[i] = true;
                self.infected += 1;
            }
            EventKind::Recovery if self.x[i] => {
                self.x[i] = false;
                self.h[i] = false;
                self.infected -= 1;
            }
            EventKind::TreatmentStart if self.x[i] && !self.h[i] => self.h[i] = true,
            kind => {
                return Err(Error::Replay(format!(
                    "illegal {kind:?} on node {i} at t={}",
                    ev.t
                )))
            }
        }
        self.last_t = ev.t;
        Ok(())
    }
}

fn check_horizon(events: &[Event], t_final: f64) -> Result<()> {
    if let Some(ev) = events.iter().find(|e| e.t > t_final) {
        return Err(Error::Replay(format!(
            "event at t={} beyond horizon {t_final}",
            ev.t
        )));
    }
    Ok(())
}

/// Exact integral of the infected count over `[0, t_final]`.
pub fn coverage(events: &[Event], x0: &[bool], t_final: f64) -> Result<f64> {
    check_horizon(events, t_final)?;
    let mut replay = Replay::new(x0);
    let mut total = 0.0;
    let mut t = 0.0;
    for ev in events {
        total += replay.infected as f64 * (ev.t - t);
        replay.apply(ev)?;
        t = ev.t;
    }
    Ok(total + replay.infected as f64 * (t_final - t))
}

/// Largest simultaneous infected count, including the initial state.
pub fn peak_infected(events: &[Event], x0: &[bool]) -> Result<usize> {
    let mut replay = Replay::new(x0);
    let mut peak = replay.infected;
    for ev in events {
        replay.apply(ev)?;
        peak = peak.max(replay.infected);
    }
    Ok(peak)
}

/// Infected count sampled at `points` uniform times on `[0, t_final]`; the
/// value at a grid time includes every event at or before it.
pub fn infected_timeseries(
    events: &[Event],
    x0: &[bool],
    t_final: f64,
    points: usize,
) -> Result<Vec<(f64, usize)>> {
    let mut replay = Replay::new(x0);
    let mut out = Vec::with_capacity(points);
    let mut next = 0;
    for k in 0..points {
        let t = grid_time(k, points, t_final);
        while next < events.len() && events[next].t <= t {
            replay.apply(&events[next])?;
            next += 1;
        }
        out.push((t, replay.infected));
    }
    Ok(out)
}

pub fn grid_time(k: usize, points: usize, t_final: f64) -> f64 {
    if points <= 1 {
        0.0
    } else {
        t_final * k as f64 / (points - 1) as f64
    }
}

/// Realized discounted loss `int_0^T e^{-eta t} (1/2 l'Q l + q_x'X) dt`.
///
/// Both the infection vector and the treatment intensities are piecewise
/// constant; the integral is summed exactly over the merged breakpoints.
/// `t_final` may be infinite.
pub fn discounted_cost(
    events: &[Event],
    x0: &[bool],
    trace: &[RateSegment],
    cp: &ControlParams,
    t_final: f64,
) -> Result<f64> {
    let eta = cp.eta;
    if !(eta > 0.0) {
        return Err(Error::Parameter(format!("eta must be > 0, got {eta}")));
    }
    check_horizon(events, t_final)?;
    let n = x0.len();
    let mut replay = Replay::new(x0);
    let mut infection_cost: f64 = (0..n).filter(|&i| x0[i]).map(|i| cp.q_x[i]).sum();
    let control_cost = |seg: &RateSegment| -> f64 {
        seg.rates
            .iter()
            .map(|&(i, r)| 0.5 * cp.q_lambda[i] * r * r)
            .sum()
    };

    let mut total = 0.0;
    let mut t = 0.0;
    let mut control = 0.0;
    let (mut ei, mut si) = (0, 0);
    loop {
        // apply everything that starts at the current time
        while si < trace.len() && trace[si].t_start <= t {
            control = control_cost(&trace[si]);
            si += 1;
        }
        while ei < events.len() && events[ei].t <= t {
            let ev = &events[ei];
            let before = replay.x[ev.node];
            replay.apply(ev)?;
            match (before, replay.x[ev.node]) {
                (false, true) => infection_cost += cp.q_x[ev.node],
                (true, false) => infection_cost -= cp.q_x[ev.node],
                _ => {}
            }
            ei += 1;
        }
        let next_event = events.get(ei).map_or(f64::INFINITY, |e| e.t);
        let next_seg = trace.get(si).map_or(f64::INFINITY, |s| s.t_start);
        let end = next_event.min(next_seg).min(t_final);
        let loss = control + infection_cost;
        if loss != 0.0 && end > t {
            total += loss * ((-eta * t).exp() - (-eta * end).exp()) / eta;
        }
        if end >= t_final {
            break;
        }
        t = end;
    }
    Ok(total)
}

impl MetricsSummary {
    pub fn compute(
        events: &[Event],
        x0: &[bool],
        trace: &[RateSegment],
        cp: &ControlParams,
        t_final: f64,
        grid_points: usize,
    ) -> Result<Self> {
        Ok(MetricsSummary {
            total_infection_coverage: coverage(events, x0, t_final)?,
            peak_infected: peak_infected(events, x0)?,
            total_treatments: events
                .iter()
                .filter(|e| e.kind == EventKind::TreatmentStart)
                .count() as u64,
            discounted_cost: discounted_cost(events, x0, trace, cp, t_final)?,
            infected_timeseries: infected_timeseries(events, x0, t_final, grid_points)?,
        })
    }
}

/// Mean, standard error and normal-approximation 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub sem: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl Estimate {
    /// A single sample gets zero standard error.
    pub fn from_samples(xs: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::Argument("no samples to aggregate".into()));
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sem = if xs.len() > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Ok(Estimate {
            mean,
            sem,
            ci_lo: mean - Z_95 * sem,
            ci_hi: mean + Z_95 * sem,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub runs: usize,
    pub coverage: Estimate,
    pub peak_infected: Estimate,
    pub total_treatments: Estimate,
    pub discounted_cost: Estimate,
    /// Pointwise infected-count estimates on the shared grid.
    pub timeseries: Vec<(f64, Estimate)>,
}

pub fn aggregate(results: &[MetricsSummary]) -> Result<BatchStats> {
    if results.is_empty() {
        return Err(Error::Argument("cannot aggregate an empty batch".into()));
    }
    let est = |f: &dyn Fn(&MetricsSummary) -> f64| {
        Estimate::from_samples(&results.iter().map(f).collect::<Vec<_>>())
    };
    let grid = &results[0].infected_timeseries;
    if results
        .iter()
        .any(|r| r.infected_timeseries.len() != grid.len())
    {
        return Err(Error::Argument("runs use different timeseries grids".into()));
    }
    let timeseries = grid
        .iter()
        .enumerate()
        .map(|(k, &(t, _))| {
            let xs: Vec<f64> = results
                .iter()
                .map(|r| r.infected_timeseries[k].1 as f64)
                .collect();
            Ok((t, Estimate::from_samples(&xs)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchStats {
        runs: results.len(),
        coverage: est(&|r| r.total_infection_coverage)?,
        peak_infected: est(&|r| r.peak_infected as f64)?,
        total_treatments: est(&|r| r.total_treatments as f64)?,
        discounted_cost: est(&|r| r.discounted_cost)?,
        timeseries,
    })
}
