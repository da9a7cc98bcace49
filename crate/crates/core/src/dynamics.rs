//! Epidemic state, jump dynamics and conditional intensities.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use crate::error::{Error, Result};
use crate::graph::Network;

/// Infection rates below this are treated as state corruption.
const NEGATIVE_RATE_TOL: f64 = 1e-12;

/// Disease parameters: infection increment per infected neighbor (`beta`),
/// decrement per treated neighbor (`gamma`), spontaneous recovery (`delta`)
/// and treatment recovery boost (`rho`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub rho: f64,
}

impl ModelParams {
    pub fn new(beta: f64, gamma: f64, delta: f64, rho: f64) -> Result<Self> {
        let mp = ModelParams {
            beta,
            gamma,
            delta,
            rho,
        };
        mp.validate()?;
        Ok(mp)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("rho", self.rho),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Parameter(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.gamma > self.beta {
            return Err(Error::Parameter(format!(
                "gamma ({}) must not exceed beta ({})",
                self.gamma, self.beta
            )));
        }
        Ok(())
    }
}

/// Loss weights: per-node control cost (diagonal of the quadratic control
/// weight), per-node infection cost, and the discount rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlParams {
    pub q_lambda: Vec<f64>,
    pub q_x: Vec<f64>,
    pub eta: f64,
}

impl ControlParams {
    pub fn new(q_lambda: Vec<f64>, q_x: Vec<f64>, eta: f64) -> Result<Self> {
        let cp = ControlParams { q_lambda, q_x, eta };
        cp.validate()?;
        Ok(cp)
    }

    pub fn uniform(n: usize, q_lambda: f64, q_x: f64, eta: f64) -> Result<Self> {
        Self::new(vec![q_lambda; n], vec![q_x; n], eta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.q_lambda.len() != self.q_x.len() {
            return Err(Error::Parameter(format!(
                "q_lambda has {} entries but q_x has {}",
                self.q_lambda.len(),
                self.q_x.len()
            )));
        }
        if let Some(v) = self.q_lambda.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Parameter(format!("q_lambda entries must be > 0, got {v}")));
        }
        if let Some(v) = self.q_x.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Parameter(format!("q_x entries must be >= 0, got {v}")));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::Parameter(format!("eta must be > 0, got {}", self.eta)));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.q_x.len()
    }

    pub fn check_nodes(&self, n: usize) -> Result<()> {
        if self.node_count() != n {
            return Err(Error::Parameter(format!(
                "control weights cover {} nodes, network has {n}",
                self.node_count()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Infection,
    Recovery,
    TreatmentStart,
}

impl EventKind {
    pub fn code(self) -> char {
        match self {
            EventKind::Infection => 'I',
            EventKind::Recovery => 'R',
            EventKind::TreatmentStart => 'T',
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        match s {
            "I" => Some(EventKind::Infection),
            "R" => Some(EventKind::Recovery),
            "T" => Some(EventKind::TreatmentStart),
            _ => None,
        }
    }

    /// Whether the event flips the infection indicator of its node.
    pub fn changes_infection(self) -> bool {
        !matches!(self, EventKind::TreatmentStart)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    pub node: usize,
    pub kind: EventKind,
}

/// Full per-node epidemic state.
///
/// `z` and `m` count infected and treated neighbors and are maintained
/// incrementally; [`EpidemicState::check_consistency`] recomputes them from
/// scratch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpidemicState {
    pub t: f64,
    pub x: Vec<bool>,
    pub h: Vec<bool>,
    pub z: Vec<u32>,
    pub m: Vec<u32>,
    pub infections: Vec<u64>,
    pub recoveries: Vec<u64>,
    pub treatments: Vec<u64>,
    x0: Vec<bool>,
    infection_epoch: u64,
}

impl EpidemicState {
    pub fn new(net: &Network, initially_infected: &[usize]) -> Result<Self> {
        let n = net.node_count();
        let mut x = vec![false; n];
        for &i in initially_infected {
            net.check_index(i)?;
            x[i] = true;
        }
        let mut z = vec![0u32; n];
        for (i, _) in x.iter().enumerate().filter(|(_, &xi)| xi) {
            for &j in net.neighbors(i) {
                z[j] += 1;
            }
        }
        Ok(EpidemicState {
            t: 0.0,
            x0: x.clone(),
            x,
            h: vec![false; n],
            z,
            m: vec![0; n],
            infections: vec![0; n],
            recoveries: vec![0; n],
            treatments: vec![0; n],
            infection_epoch: 0,
        })
    }

    pub fn node_count(&self) -> usize {
        self.x.len()
    }

    pub fn initial_infected(&self) -> &[bool] {
        &self.x0
    }

    pub fn infected_count(&self) -> usize {
        self.x.iter().filter(|&&v| v).count()
    }

    pub fn treated_count(&self) -> usize {
        self.h.iter().filter(|&&v| v).count()
    }

    pub fn total_treatments(&self) -> u64 {
        self.treatments.iter().sum()
    }

    /// Counter bumped whenever the infection vector changes. Policies that
    /// depend on the infected set only use it to invalidate caches.
    pub fn infection_epoch(&self) -> u64 {
        self.infection_epoch
    }

    pub fn apply_event(&mut self, net: &Network, ev: &Event) -> Result<()> {
        let i = ev.node;
        net.check_index(i)?;
        if ev.t < self.t {
            return Err(Error::TimeOrder {
                event_t: ev.t,
                now: self.t,
            });
        }
        let illegal = || Error::IllegalTransition {
            node: i,
            kind: ev.kind,
        };
        match ev.kind {
            EventKind::Infection => {
                if self.x[i] {
                    return Err(illegal());
                }
                self.x[i] = true;
                for &j in net.neighbors(i) {
                    self.z[j] += 1;
                }
                self.infections[i] += 1;
                self.infection_epoch += 1;
            }
            EventKind::Recovery => {
                if !self.x[i] {
                    return Err(illegal());
                }
                self.x[i] = false;
                let was_treated = std::mem::replace(&mut self.h[i], false);
                for &j in net.neighbors(i) {
                    self.z[j] -= 1;
                    if was_treated {
                        self.m[j] -= 1;
                    }
                }
                self.recoveries[i] += 1;
                self.infection_epoch += 1;
            }
            EventKind::TreatmentStart => {
                if !self.x[i] || self.h[i] {
                    return Err(illegal());
                }
                self.h[i] = true;
                for &j in net.neighbors(i) {
                    self.m[j] += 1;
                }
                self.treatments[i] += 1;
            }
        }
        self.t = ev.t;
        Ok(())
    }

    /// Recomputes neighbor counts from scratch and checks every structural
    /// invariant of the state.
    pub fn check_consistency(&self, net: &Network) -> Result<()> {
        let n = self.node_count();
        let mut z = vec![0u32; n];
        let mut m = vec![0u32; n];
        for i in 0..n {
            for &j in net.neighbors(i) {
                z[j] += u32::from(self.x[i]);
                m[j] += u32::from(self.h[i]);
            }
        }
        if z != self.z {
            return Err(Error::InvariantViolation("infected-neighbor counts drifted".into()));
        }
        if m != self.m {
            return Err(Error::InvariantViolation("treated-neighbor counts drifted".into()));
        }
        for i in 0..n {
            if self.h[i] && !self.x[i] {
                return Err(Error::InvariantViolation(format!("node {i} treated but healthy")));
            }
            let net_infections =
                i64::from(self.x0[i]) + self.infections[i] as i64 - self.recoveries[i] as i64;
            if net_infections != i64::from(self.x[i]) {
                return Err(Error::InvariantViolation(format!(
                    "node {i}: infection/recovery counters disagree with state"
                )));
            }
        }
        Ok(())
    }
}

/// Per-node event intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct Intensities {
    pub infection: Vec<f64>,
    pub recovery: Vec<f64>,
    pub treatment: Vec<f64>,
}

impl Intensities {
    pub fn total(&self) -> f64 {
        self.treatment.iter().sum::<f64>()
            + self.infection.iter().sum::<f64>()
            + self.recovery.iter().sum::<f64>()
    }
}

pub fn intensities(
    state: &EpidemicState,
    mp: &ModelParams,
    treat_rates: &[f64],
) -> Result<Intensities> {
    let n = state.node_count();
    if treat_rates.len() != n {
        return Err(Error::Argument(format!(
            "{} treatment rates for {n} nodes",
            treat_rates.len()
        )));
    }
    let mut infection = vec![0.0; n];
    let mut recovery = vec![0.0; n];
    let mut treatment = vec![0.0; n];
    for i in 0..n {
        if state.x[i] {
            recovery[i] = mp.delta + if state.h[i] { mp.rho } else { 0.0 };
            if !state.h[i] {
                let r = treat_rates[i];
                if !(r >= 0.0 && r.is_finite()) {
                    return Err(Error::InvariantViolation(format!(
                        "treatment rate {r} on node {i}"
                    )));
                }
                treatment[i] = r;
            }
        } else {
            let rate = mp.beta * f64::from(state.z[i]) - mp.gamma * f64::from(state.m[i]);
            if rate < -NEGATIVE_RATE_TOL {
                return Err(Error::InvariantViolation(format!(
                    "negative infection rate {rate} on node {i}"
                )));
            }
            infection[i] = rate.max(0.0);
        }
    }
    Ok(Intensities {
        infection,
        recovery,
        treatment,
    })
}

/// Formats `v` with nine significant digits in positional notation.
pub fn format_time(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (8 - magnitude).max(0) as usize;
    let mut s = String::new();
    write!(s, "{v:.decimals$}").unwrap();
    s
}

pub const EVENT_LOG_HEADER: &str = "run_id,t,node,kind";

pub fn write_event_log<W: Write>(mut w: W, run_id: usize, events: &[Event]) -> io::Result<()> {
    writeln!(w, "{EVENT_LOG_HEADER}")?;
    for ev in events {
        writeln!(
            w,
            "{run_id},{},{},{}",
            format_time(ev.t),
            ev.node,
            ev.kind.code()
        )?;
    }
    Ok(())
}

/// Reads an event log written by [`write_event_log`], returning the run id
/// (if any rows exist) and the events.
pub fn read_event_log<R: BufRead>(r: R) -> Result<(Option<usize>, Vec<Event>)> {
    let mut run = None;
    let mut events = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io("reading event log", e))?;
        if lineno == 0 {
            if line.trim() != EVENT_LOG_HEADER {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("expected header `{EVENT_LOG_HEADER}`"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::Parse {
            line: lineno + 1,
            msg: msg.to_string(),
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(bad("expected 4 fields"));
        }
        run = Some(fields[0].parse().map_err(|_| bad("bad run_id"))?);
        events.push(Event {
            t: fields[1].parse().map_err(|_| bad("bad time"))?,
            node: fields[2].parse().map_err(|_| bad("bad node"))?,
            kind: EventKind::from_code(fields[3]).ok_or_else(|| bad("bad kind"))?,
        });
    }
    Ok((run, events))
}
