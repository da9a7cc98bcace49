//! Heuristic comparison policies and budget calibration.

use std::fmt;
use std::str::FromStr;

use crate::dynamics::EpidemicState;
use crate::error::{Error, Result};
use crate::graph::Network;
use crate::soc::SocController;

pub const CALIBRATION_TOL_FRAC: f64 = 0.05;
pub const CALIBRATION_MAX_ITER: usize = 40;
pub const CALIBRATION_BATCH: usize = 50;
/// Upward bracketing gives up after this many doublings without a new maximum.
pub const STALE_DOUBLINGS: usize = 6;
/// Doubling/halving steps allowed while searching for a bracket.
const BRACKET_CAP: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Soc,
    Trivial,
    TrivialFrontLoaded,
    MostNeighbors,
    MostNeighborsFrontLoaded,
    LeastNeighbors,
    LeastNeighborsFrontLoaded,
    SpectralRadius,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 8] = [
        PolicyKind::Soc,
        PolicyKind::Trivial,
        PolicyKind::TrivialFrontLoaded,
        PolicyKind::MostNeighbors,
        PolicyKind::MostNeighborsFrontLoaded,
        PolicyKind::LeastNeighbors,
        PolicyKind::LeastNeighborsFrontLoaded,
        PolicyKind::SpectralRadius,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Soc => "SOC",
            PolicyKind::Trivial => "T",
            PolicyKind::TrivialFrontLoaded => "T-FL",
            PolicyKind::MostNeighbors => "MN",
            PolicyKind::MostNeighborsFrontLoaded => "MN-FL",
            PolicyKind::LeastNeighbors => "LN",
            PolicyKind::LeastNeighborsFrontLoaded => "LN-FL",
            PolicyKind::SpectralRadius => "LRSR",
        }
    }

    pub fn is_front_loaded(self) -> bool {
        matches!(
            self,
            PolicyKind::TrivialFrontLoaded
                | PolicyKind::MostNeighborsFrontLoaded
                | PolicyKind::LeastNeighborsFrontLoaded
        )
    }

    /// Baselines whose scale is calibrated against the treatment budget.
    pub fn is_calibrated(self) -> bool {
        !matches!(self, PolicyKind::Soc) && !self.is_front_loaded()
    }

    /// Stable index used for seed blocks.
    pub fn index(self) -> u64 {
        PolicyKind::ALL.iter().position(|&k| k == self).unwrap() as u64
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('_', "-");
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::Configuration(format!("unknown policy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    /// Multiplier on the policy's shape (ignored by SOC).
    pub scale: f64,
    /// Expected number of treatments front-loaded policies may spend.
    pub budget: f64,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind) -> Self {
        PolicySpec {
            kind,
            scale: 1.0,
            budget: 0.0,
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_budget(mut self, budget: f64) -> Self {
        self.budget = budget;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale >= 0.0) {
            return Err(Error::Configuration(format!(
                "{}: scale must be >= 0, got {}",
                self.kind, self.scale
            )));
        }
        if !(self.budget >= 0.0) {
            return Err(Error::Configuration(format!(
                "{}: budget must be >= 0, got {}",
                self.kind, self.budget
            )));
        }
        Ok(())
    }

    /// Front-loaded variants evaluate the optimal policy in shadow.
    pub fn soc_shadow(&self) -> bool {
        self.kind.is_front_loaded()
    }
}

/// Static per-node weight of a baseline before scaling, gating and
/// restriction to eligible nodes.
pub fn shape_weights(kind: PolicyKind, net: &Network, drop_scores: &[f64]) -> Result<Vec<f64>> {
    let degrees = net.degrees();
    let max_deg = net.max_degree();
    Ok(match kind {
        PolicyKind::Soc => {
            return Err(Error::Configuration("SOC has no baseline shape".into()));
        }
        PolicyKind::Trivial | PolicyKind::TrivialFrontLoaded => vec![1.0; net.node_count()],
        PolicyKind::MostNeighbors | PolicyKind::MostNeighborsFrontLoaded => {
            degrees.iter().map(|&d| d as f64).collect()
        }
        PolicyKind::LeastNeighbors | PolicyKind::LeastNeighborsFrontLoaded => {
            degrees.iter().map(|&d| (max_deg - d + 1) as f64).collect()
        }
        PolicyKind::SpectralRadius => {
            if drop_scores.len() != net.node_count() {
                return Err(Error::Configuration(
                    "LRSR needs one spectral drop score per node".into(),
                ));
            }
            drop_scores.to_vec()
        }
    })
}

/// Treatment intensities of a baseline policy for the current state.
///
/// Front-loaded variants need `soc`, which is evaluated on `state` to obtain
/// the current sup-norm of the optimal intensity.
pub fn baseline_intensity(
    spec: &PolicySpec,
    state: &EpidemicState,
    net: &Network,
    drop_scores: &[f64],
    soc: Option<&mut SocController>,
) -> Result<Vec<f64>> {
    let weights = shape_weights(spec.kind, net, drop_scores)?;
    weighted_intensity(spec, &weights, state, net, soc)
}

pub(crate) fn weighted_intensity(
    spec: &PolicySpec,
    weights: &[f64],
    state: &EpidemicState,
    net: &Network,
    soc: Option<&mut SocController>,
) -> Result<Vec<f64>> {
    let n = state.node_count();
    let mut out = vec![0.0; n];
    let mut factor = spec.scale;
    if spec.kind.is_front_loaded() {
        let soc = soc.ok_or_else(|| {
            Error::Configuration(format!("{} requires a shadow SOC controller", spec.kind))
        })?;
        if state.total_treatments() as f64 > spec.budget {
            return Ok(out);
        }
        let shadow = soc.intensity(state, net)?;
        factor *= shadow.iter().fold(0.0f64, |a, &v| a.max(v));
    }
    for i in 0..n {
        if state.x[i] && !state.h[i] {
            out[i] = factor * weights[i];
        }
    }
    Ok(out)
}

/// Anything that can report the batch-mean number of treatments for a
/// candidate policy. Implementations must use the same random streams for
/// every candidate.
pub trait BatchRunner {
    fn mean_treatments(&self, spec: &PolicySpec) -> Result<f64>;
}

impl<F> BatchRunner for F
where
    F: Fn(&PolicySpec) -> Result<f64>,
{
    fn mean_treatments(&self, spec: &PolicySpec) -> Result<f64> {
        self(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub spec: PolicySpec,
    pub target: f64,
    pub achieved: f64,
    /// Every `(scale, batch-mean treatments)` pair evaluated.
    pub evaluations: Vec<(f64, f64)>,
}

/// Finds a scale whose batch-mean treatment count is within `tol_frac` of
/// `target`: geometric expansion from the starting scale until the target is
/// bracketed, then geometric bisection.
pub fn calibrate_scale(
    spec: &PolicySpec,
    target: f64,
    runner: &dyn BatchRunner,
    tol_frac: f64,
) -> Result<Calibration> {
    let fail = |msg: String| Error::Calibration {
        policy: spec.kind.to_string(),
        msg,
    };
    if !(target > 0.0) {
        return Err(fail(format!("target must be positive, got {target}")));
    }
    let mut evaluations = Vec::new();
    let mut eval = |scale: f64| -> Result<f64> {
        let mean = runner.mean_treatments(&spec.with_scale(scale))?;
        evaluations.push((scale, mean));
        Ok(mean)
    };
    let within = |mean: f64| (mean - target).abs() <= tol_frac * target;
    let done = |scale: f64, achieved: f64, evaluations: Vec<(f64, f64)>| Calibration {
        spec: spec.with_scale(scale),
        target,
        achieved,
        evaluations,
    };

    let start = if spec.scale > 0.0 { spec.scale } else { 1.0 };
    let m0 = eval(start)?;
    if within(m0) {
        return Ok(done(start, m0, evaluations));
    }

    let (mut lo, mut hi) = (start, start);
    if m0 < target {
        let mut found = false;
        let (mut best, mut stale) = (m0, 0);
        for _ in 0..BRACKET_CAP {
            hi *= 2.0;
            let m = eval(hi)?;
            if within(m) {
                return Ok(done(hi, m, evaluations));
            }
            if m > target {
                found = true;
                break;
            }
            // past the peak: faster treatment only shortens the epidemic
            if m > best {
                (best, stale) = (m, 0);
            } else {
                stale += 1;
                if stale >= STALE_DOUBLINGS {
                    break;
                }
            }
            lo = hi;
        }
        if !found {
            let best = evaluations.iter().map(|e| e.1).fold(0.0, f64::max);
            return Err(fail(format!(
                "target {target:.3} unreachable: at most {best:.3} treatments up to scale {hi:e}"
            )));
        }
    } else {
        let mut found = false;
        for _ in 0..BRACKET_CAP {
            lo /= 2.0;
            let m = eval(lo)?;
            if within(m) {
                return Ok(done(lo, m, evaluations));
            }
            if m < target {
                found = true;
                break;
            }
            hi = lo;
        }
        if !found {
            let least = evaluations.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
            return Err(fail(format!(
                "target {target:.3} unreachable: at least {least:.3} treatments down to scale {lo:e}"
            )));
        }
    }

    for _ in 0..CALIBRATION_MAX_ITER {
        let mid = (lo * hi).sqrt();
        let m = eval(mid)?;
        if within(m) {
            return Ok(done(mid, m, evaluations));
        }
        if m < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (lo_m, hi_m) = evaluations.iter().fold((0.0f64, f64::INFINITY), |acc, &(_, m)| {
        (
            if m < target { acc.0.max(m) } else { acc.0 },
            if m > target { acc.1.min(m) } else { acc.1 },
        )
    });
    Err(fail(format!(
        "no scale within {:.0}% of target {target:.3} after {CALIBRATION_MAX_ITER} bisections; \
         closest achieved {lo_m:.3} (below) and {hi_m:.3} (above), scale bracket [{lo:e}, {hi:e}]",
        tol_frac * 100.0
    )))
}
