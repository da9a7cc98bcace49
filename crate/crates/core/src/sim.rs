//! Exact event-driven simulation.
//!
//! All intensities are constant between events, so the next event time is
//! exponential in the total rate and its identity is categorical in the
//! individual rates. After every event the policy is re-evaluated on the
//! new state.

use rand::distr::{Distribution, Open01};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::baselines::{self, PolicyKind, PolicySpec};
use crate::dynamics::{self, ControlParams, EpidemicState, Event, EventKind, ModelParams};
use crate::error::{Error, Result};
use crate::graph::{Network, SPECTRAL_TOL};
use crate::metrics::{MetricsSummary, RateSegment, DEFAULT_GRID_POINTS};
use crate::soc::SocController;

pub const DEFAULT_T_FINAL: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub t_final: f64,
    /// Seed of the event stream.
    pub seed: u64,
    /// Seed of the initial-infection draw, kept separate so that different
    /// policies can share initial conditions.
    pub init_seed: u64,
    pub initial_infected_count: usize,
    pub policy: PolicySpec,
    pub mp: ModelParams,
    pub cp: ControlParams,
    pub grid_points: usize,
    /// Recompute neighbor counts from scratch after every event.
    pub debug_checks: bool,
}

impl RunConfig {
    pub fn new(policy: PolicySpec, mp: ModelParams, cp: ControlParams) -> Self {
        RunConfig {
            t_final: DEFAULT_T_FINAL,
            seed: 0,
            init_seed: 0,
            initial_infected_count: 10,
            policy,
            mp,
            cp,
            grid_points: DEFAULT_GRID_POINTS,
            debug_checks: false,
        }
    }

    pub fn with_seeds(mut self, seed: u64, init_seed: u64) -> Self {
        self.seed = seed;
        self.init_seed = init_seed;
        self
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        if !(self.t_final > 0.0) {
            return Err(Error::Configuration(format!(
                "t_final must be > 0, got {}",
                self.t_final
            )));
        }
        if self.initial_infected_count > net.node_count() {
            return Err(Error::Configuration(format!(
                "{} initial infections requested on {} nodes",
                self.initial_infected_count,
                net.node_count()
            )));
        }
        self.mp.validate()?;
        self.cp.validate()?;
        self.cp.check_nodes(net.node_count())?;
        self.policy.validate()
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub seed: u64,
    pub initial_infected: Vec<usize>,
    pub events: Vec<Event>,
    pub final_state: EpidemicState,
    pub rate_trace: Vec<RateSegment>,
    pub metrics: MetricsSummary,
    /// LP solves by the acting SOC controller (zero for baselines).
    pub lp_solves: usize,
}

/// A network plus the per-network quantities policies need.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub net: Network,
    pub drop_scores: Vec<f64>,
}

impl Scenario {
    pub fn new(net: Network) -> Result<Self> {
        let drop_scores = net.spectral_drop_scores(SPECTRAL_TOL)?;
        Ok(Scenario { net, drop_scores })
    }
}

/// Draws `k` distinct initially infected nodes, sorted.
pub fn sample_initial_infected(n: usize, k: usize, init_seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
    let mut nodes = index::sample(&mut rng, n, k).into_vec();
    nodes.sort_unstable();
    nodes
}

/// Samples the next event, or `None` when every rate is zero.
pub fn step<R: Rng + ?Sized>(
    state: &EpidemicState,
    mp: &ModelParams,
    treat_rates: &[f64],
    rng: &mut R,
) -> Result<Option<Event>> {
    let rates = dynamics::intensities(state, mp, treat_rates)?;
    let total = rates.total();
    if !total.is_finite() {
        return Err(Error::InvariantViolation(format!("total rate {total}")));
    }
    if total <= 0.0 {
        return Ok(None);
    }
    let u: f64 = Open01.sample(rng);
    let dt = -u.ln() / total;

    let target = rng.random::<f64>() * total;
    let groups = [
        (EventKind::TreatmentStart, &rates.treatment),
        (EventKind::Infection, &rates.infection),
        (EventKind::Recovery, &rates.recovery),
    ];
    let mut acc = 0.0;
    let mut last_positive = None;
    for (kind, group) in groups {
        for (node, &r) in group.iter().enumerate() {
            if r > 0.0 {
                acc += r;
                last_positive = Some((kind, node));
                if target < acc {
                    return Ok(Some(Event {
                        t: state.t + dt,
                        node,
                        kind,
                    }));
                }
            }
        }
    }
    // round-off pushed the draw past the running sum
    let (kind, node) = last_positive.expect("total rate is positive");
    Ok(Some(Event {
        t: state.t + dt,
        node,
        kind,
    }))
}

/// Treatment-intensity generator for one run.
#[derive(Debug)]
pub enum Controller {
    Soc(SocController),
    Baseline {
        spec: PolicySpec,
        weights: Vec<f64>,
        shadow: Option<SocController>,
    },
}

impl Controller {
    pub fn new(spec: &PolicySpec, scenario: &Scenario, mp: &ModelParams, cp: &ControlParams) -> Result<Self> {
        if spec.kind == PolicyKind::Soc {
            return Ok(Controller::Soc(SocController::new(mp, cp)?));
        }
        let shadow = if spec.soc_shadow() {
            Some(SocController::new(mp, cp)?)
        } else {
            None
        };
        Ok(Controller::Baseline {
            spec: *spec,
            weights: baselines::shape_weights(spec.kind, &scenario.net, &scenario.drop_scores)?,
            shadow,
        })
    }

    pub fn rates(&mut self, state: &EpidemicState, net: &Network) -> Result<Vec<f64>> {
        match self {
            Controller::Soc(ctl) => ctl.intensity(state, net),
            Controller::Baseline {
                spec,
                weights,
                shadow,
            } => baselines::weighted_intensity(spec, weights, state, net, shadow.as_mut()),
        }
    }

    pub fn lp_solves(&self) -> usize {
        match self {
            Controller::Soc(ctl) => ctl.lp_solves(),
            Controller::Baseline { .. } => 0,
        }
    }
}

pub fn run(cfg: &RunConfig, scenario: &Scenario) -> Result<RunResult> {
    let net = &scenario.net;
    cfg.validate(net)?;
    let initial = sample_initial_infected(net.node_count(), cfg.initial_infected_count, cfg.init_seed);
    let mut state = EpidemicState::new(net, &initial)?;
    let mut controller = Controller::new(&cfg.policy, scenario, &cfg.mp, &cfg.cp)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut events = Vec::new();
    let mut trace: Vec<RateSegment> = Vec::new();
    loop {
        let rates = controller.rates(&state, net)?;
        let segment = RateSegment::from_dense(state.t, &rates);
        if trace.last().is_none_or(|s| s.rates != segment.rates) {
            trace.push(segment);
        }
        let Some(ev) = step(&state, &cfg.mp, &rates, &mut rng)? else {
            break;
        };
        if ev.t > cfg.t_final {
            break;
        }
        state.apply_event(net, &ev)?;
        if cfg.debug_checks {
            state.check_consistency(net)?;
        }
        events.push(ev);
    }
    state.t = cfg.t_final;

    let metrics = MetricsSummary::compute(
        &events,
        state.initial_infected(),
        &trace,
        &cfg.cp,
        cfg.t_final,
        cfg.grid_points,
    )?;
    Ok(RunResult {
        seed: cfg.seed,
        initial_infected: initial,
        events,
        final_state: state,
        rate_trace: trace,
        metrics,
        lp_solves: controller.lp_solves(),
    })
}

/// Runs one simulation per `(seed, init_seed)` pair on the current rayon
/// pool; results come back in input order.
pub fn run_batch(template: &RunConfig, scenario: &Scenario, seeds: &[(u64, u64)]) -> Result<Vec<RunResult>> {
    seeds
        .par_iter()
        .map(|&(seed, init_seed)| run(&template.clone().with_seeds(seed, init_seed), scenario))
        .collect()
}
