//! Flat `key = value` experiment configuration.

use std::path::{Path, PathBuf};

use crate::baselines::{PolicyKind, CALIBRATION_BATCH, CALIBRATION_TOL_FRAC};
use crate::dynamics::{ControlParams, ModelParams};
use crate::error::{Error, Result};
use crate::graph::Network;
use crate::metrics::DEFAULT_GRID_POINTS;
use crate::sim::DEFAULT_T_FINAL;

/// Graph value selecting the bundled United States contiguity network.
pub const BUILTIN_US_STATES: &str = "builtin:us-states";

/// A per-node weight given either as one broadcast value or one per node.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeWeights {
    Uniform(f64),
    PerNode(Vec<f64>),
}

impl NodeWeights {
    pub fn resolve(&self, key: &str, n: usize) -> Result<Vec<f64>> {
        match self {
            NodeWeights::Uniform(v) => Ok(vec![*v; n]),
            NodeWeights::PerNode(v) if v.len() == n => Ok(v.clone()),
            NodeWeights::PerNode(v) => Err(Error::ConfigKey {
                key: key.into(),
                msg: format!("{} values given for a network of {n} nodes", v.len()),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub graph: String,
    pub mp: ModelParams,
    pub eta: f64,
    pub q_lambda: NodeWeights,
    pub q_x: NodeWeights,
    pub t_final: f64,
    pub runs_per_policy: usize,
    pub base_seed: u64,
    pub policies: Vec<PolicyKind>,
    pub q_x_sweep: Option<Vec<f64>>,
    pub output_dir: PathBuf,
    pub initial_infected: usize,
    pub calibration_batch: usize,
    pub calibration_tol: f64,
    pub grid_points: usize,
}

const KEYS: &[&str] = &[
    "graph",
    "beta",
    "gamma",
    "delta",
    "rho",
    "eta",
    "q_lambda",
    "q_x",
    "t_final",
    "runs_per_policy",
    "base_seed",
    "policies",
    "q_x_sweep",
    "output_dir",
    "initial_infected",
    "calibration_batch",
    "calibration_tol",
    "grid_points",
];

fn key_err(key: &str, msg: impl Into<String>) -> Error {
    Error::ConfigKey {
        key: key.into(),
        msg: msg.into(),
    }
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value
        .split([',', ' ', '\t'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
}

fn real(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| key_err(key, format!("expected a number, got `{value}`")))
}

fn integer<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| key_err(key, format!("expected a non-negative integer, got `{value}`")))
}

fn reals(key: &str, value: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = list(value).map(|t| real(key, t)).collect::<Result<_>>()?;
    if v.is_empty() {
        return Err(key_err(key, "empty list"));
    }
    Ok(v)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values: Vec<(&str, &str)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: lineno + 1,
                msg: "expected `key = value`".into(),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(key_err(k, "unknown key"));
            }
            if values.iter().any(|(seen, _)| *seen == k) {
                return Err(key_err(k, "given more than once"));
            }
            values.push((k, v));
        }
        let get = |k: &str| values.iter().find(|(key, _)| *key == k).map(|(_, v)| *v);
        let required = |k: &str| get(k).ok_or_else(|| key_err(k, "missing required key"));

        let beta = real("beta", required("beta")?)?;
        let gamma = real("gamma", required("gamma")?)?;
        let delta = real("delta", required("delta")?)?;
        let rho = real("rho", required("rho")?)?;
        let eta = real("eta", required("eta")?)?;
        for (k, v) in [("beta", beta), ("gamma", gamma), ("delta", delta), ("rho", rho)] {
            if v < 0.0 {
                return Err(key_err(k, format!("must be >= 0, got {v}")));
            }
        }
        if gamma > beta {
            return Err(key_err(
                "gamma",
                format!("must not exceed beta ({gamma} > {beta})"),
            ));
        }
        if !(eta > 0.0) {
            return Err(key_err("eta", format!("must be > 0, got {eta}")));
        }
        let mp = ModelParams::new(beta, gamma, delta, rho)?;

        let weights = |k: &str, default: Option<f64>, positive: bool| -> Result<NodeWeights> {
            let parsed = match get(k) {
                None => match default {
                    Some(d) => return Ok(NodeWeights::Uniform(d)),
                    None => return Err(key_err(k, "missing required key")),
                },
                Some(v) => reals(k, v)?,
            };
            if let Some(bad) = parsed.iter().find(|&&v| if positive { v <= 0.0 } else { v < 0.0 }) {
                let bound = if positive { "> 0" } else { ">= 0" };
                return Err(key_err(k, format!("entries must be {bound}, got {bad}")));
            }
            Ok(if parsed.len() == 1 {
                NodeWeights::Uniform(parsed[0])
            } else {
                NodeWeights::PerNode(parsed)
            })
        };
        let q_lambda = weights("q_lambda", Some(1.0), true)?;
        let q_x = weights("q_x", None, false)?;

        let t_final = get("t_final").map_or(Ok(DEFAULT_T_FINAL), |v| real("t_final", v))?;
        if !(t_final > 0.0) {
            return Err(key_err("t_final", format!("must be > 0, got {t_final}")));
        }
        let runs_per_policy = get("runs_per_policy").map_or(Ok(50), |v| integer("runs_per_policy", v))?;
        if runs_per_policy < 1 {
            return Err(key_err("runs_per_policy", "must be >= 1"));
        }
        let base_seed = get("base_seed").map_or(Ok(0), |v| integer("base_seed", v))?;
        let policies = match get("policies") {
            None => PolicyKind::ALL.to_vec(),
            Some(v) => {
                let p: Vec<PolicyKind> = list(v)
                    .map(|t| t.parse().map_err(|_| key_err("policies", format!("unknown policy `{t}`"))))
                    .collect::<Result<_>>()?;
                if p.is_empty() {
                    return Err(key_err("policies", "empty list"));
                }
                p
            }
        };
        let q_x_sweep = match get("q_x_sweep") {
            None => None,
            Some(v) => {
                let s = reals("q_x_sweep", v)?;
                if let Some(bad) = s.iter().find(|&&q| q < 0.0) {
                    return Err(key_err("q_x_sweep", format!("entries must be >= 0, got {bad}")));
                }
                Some(s)
            }
        };
        let initial_infected = get("initial_infected").map_or(Ok(10), |v| integer("initial_infected", v))?;
        let calibration_batch =
            get("calibration_batch").map_or(Ok(CALIBRATION_BATCH), |v| integer("calibration_batch", v))?;
        if calibration_batch < 1 {
            return Err(key_err("calibration_batch", "must be >= 1"));
        }
        let calibration_tol =
            get("calibration_tol").map_or(Ok(CALIBRATION_TOL_FRAC), |v| real("calibration_tol", v))?;
        if !(calibration_tol > 0.0) {
            return Err(key_err("calibration_tol", "must be > 0"));
        }
        let grid_points = get("grid_points").map_or(Ok(DEFAULT_GRID_POINTS), |v| integer("grid_points", v))?;
        if grid_points < 2 {
            return Err(key_err("grid_points", "must be >= 2"));
        }

        Ok(ExperimentConfig {
            graph: get("graph").unwrap_or(BUILTIN_US_STATES).to_string(),
            mp,
            eta,
            q_lambda,
            q_x,
            t_final,
            runs_per_policy,
            base_seed,
            policies,
            q_x_sweep,
            output_dir: PathBuf::from(get("output_dir").unwrap_or("out")),
            initial_infected,
            calibration_batch,
            calibration_tol,
            grid_points,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        let mut cfg = Self::parse(&text)?;
        // relative graph paths are relative to the config file
        if cfg.graph != BUILTIN_US_STATES && Path::new(&cfg.graph).is_relative() {
            if let Some(dir) = path.parent() {
                cfg.graph = dir.join(&cfg.graph).to_string_lossy().into_owned();
            }
        }
        Ok(cfg)
    }

    /// The parameter set used in the published comparison figure.
    pub fn figure_one() -> Self {
        Self::parse("beta = 6\ngamma = 5\ndelta = 1\nrho = 5\neta = 1\nq_lambda = 1\nq_x = 400\n")
            .expect("static config is valid")
    }

    pub fn load_graph(&self) -> Result<Network> {
        if self.graph == BUILTIN_US_STATES {
            Ok(Network::us_states())
        } else {
            Network::from_path(Path::new(&self.graph))
        }
    }

    pub fn control_params(&self, n: usize) -> Result<ControlParams> {
        ControlParams::new(
            self.q_lambda.resolve("q_lambda", n)?,
            self.q_x.resolve("q_x", n)?,
            self.eta,
        )
    }

    pub fn with_q_x(&self, q_x: f64) -> Self {
        let mut c = self.clone();
        c.q_x = NodeWeights::Uniform(q_x);
        c
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    ExperimentConfig::parse(text)
}
