//! Stochastic-optimal-control treatment policy.
//!
//! The value function is linear in the state,
//! `V = b'X + c'H + d'Z + f'M`, and the optimal treatment intensity of an
//! infected, untreated node `i` is
//!
//! ```text
//! lambda_i = -(1/k1) / q_i * (k2_i - sqrt(2 k1 q_i (k3 (A d)_i + k4_i) + k2_i^2))
//! ```
//!
//! where `d` is re-solved from a small LP every time the infected set
//! changes. The LP keeps the radical real while intervening as little as
//! possible: a binding row means the node is left untreated.

use crate::dynamics::{ControlParams, EpidemicState, ModelParams};
use crate::error::{Error, Result};
use crate::graph::Network;
use crate::lp::{self, LinearProgram, LpStatus};

/// Radical values down to this are clamped to zero before the square root.
pub const RADICAL_TOL: f64 = 1e-9;
/// Feasibility tolerance handed to the simplex solver.
pub const LP_TOL: f64 = 1e-9;

/// Model-dependent scalars of the closed-form policy.
///
/// `k5` is part of the published constant set but does not enter the
/// intensity or the LP; it is exposed for completeness only.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConstants {
    pub k1: f64,
    pub k2: Vec<f64>,
    pub k3: f64,
    pub k4: Vec<f64>,
    pub k5: f64,
}

impl PolicyConstants {
    pub fn compute(mp: &ModelParams, cp: &ControlParams) -> Result<Self> {
        if !(cp.eta > 0.0) {
            return Err(Error::Parameter(format!(
                "discount rate eta must be > 0 for the optimal policy, got {}",
                cp.eta
            )));
        }
        let ModelParams {
            beta,
            gamma,
            delta,
            rho,
        } = *mp;
        let eta = cp.eta;
        Ok(PolicyConstants {
            k1: beta * (2.0 * delta + eta + rho),
            k2: cp
                .q_lambda
                .iter()
                .map(|q| beta * (delta + eta) * (delta + eta + rho) * q)
                .collect(),
            k3: eta * (gamma * (delta + eta) + beta * (delta + rho)),
            k4: cp.q_x.iter().map(|q| beta * (delta + rho) * q).collect(),
            k5: gamma * eta + beta * (2.0 * delta + rho),
        })
    }

    /// `k4_i / k3`: how far `(A d)_i` may drop below zero before the
    /// radical turns negative.
    pub fn floor(&self, i: usize) -> f64 {
        self.k4[i] / self.k3
    }

    fn check_nondegenerate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k3 > 0.0) {
            return Err(Error::Parameter(format!(
                "degenerate policy constants (k1 = {}, k3 = {}); beta must be > 0",
                self.k1, self.k3
            )));
        }
        Ok(())
    }
}

pub fn compute_constants(mp: &ModelParams, cp: &ControlParams) -> Result<PolicyConstants> {
    PolicyConstants::compute(mp, cp)
}

/// Solution of the per-infected-set LP.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyLp {
    /// Full-length `d`, zero on infected nodes and on susceptible nodes
    /// without infected neighbors.
    pub d: Vec<f64>,
    /// `sum_i |(A d)_i + k4_i/k3|` over infected nodes.
    pub objective: f64,
    /// Infected nodes that appear as LP rows.
    pub rows: Vec<usize>,
    /// Susceptible nodes that appear as LP columns.
    pub columns: Vec<usize>,
}

impl PolicyLp {
    /// `(A d)_i` for node `i`.
    pub fn neighbor_sum(&self, net: &Network, i: usize) -> f64 {
        net.neighbors(i).iter().map(|&j| self.d[j]).sum()
    }
}

/// Builds the LP `min 1'(A10 d0)  s.t.  A10 d0 >= -k4/k3` over the given
/// infected set. Returns the row and column node indices alongside it.
pub fn build_policy_lp(
    net: &Network,
    x: &[bool],
    pc: &PolicyConstants,
) -> Result<(LinearProgram, Vec<usize>, Vec<usize>)> {
    let n = net.node_count();
    if x.len() != n {
        return Err(Error::Argument(format!("infection vector has {} entries for {n} nodes", x.len())));
    }
    let rows: Vec<usize> = (0..n)
        .filter(|&i| x[i] && net.neighbors(i).iter().any(|&j| !x[j]))
        .collect();
    let columns: Vec<usize> = (0..n)
        .filter(|&j| !x[j] && net.neighbors(j).iter().any(|&i| x[i]))
        .collect();
    let col_of: Vec<Option<usize>> = {
        let mut v = vec![None; n];
        for (k, &j) in columns.iter().enumerate() {
            v[j] = Some(k);
        }
        v
    };
    let mut constraints = Vec::with_capacity(rows.len());
    let mut rhs = Vec::with_capacity(rows.len());
    let mut objective = vec![0.0; columns.len()];
    for &i in &rows {
        let mut row = vec![0.0; columns.len()];
        for &j in net.neighbors(i) {
            if let Some(k) = col_of[j] {
                row[k] = 1.0;
                objective[k] += 1.0;
            }
        }
        constraints.push(row);
        rhs.push(-pc.floor(i));
    }
    Ok((LinearProgram::new(objective, constraints, rhs)?, rows, columns))
}

pub fn solve_policy_lp(net: &Network, x: &[bool], pc: &PolicyConstants) -> Result<PolicyLp> {
    pc.check_nondegenerate()?;
    let (program, rows, columns) = build_policy_lp(net, x, pc)?;
    let mut d = vec![0.0; net.node_count()];
    if !rows.is_empty() {
        let sol = lp::solve(&program, LP_TOL)?;
        if sol.status != LpStatus::Optimal {
            return Err(Error::Policy(format!("policy LP returned {:?}", sol.status)));
        }
        for (&j, &v) in columns.iter().zip(&sol.x) {
            d[j] = v;
        }
    }
    let mut out = PolicyLp {
        d,
        objective: 0.0,
        rows,
        columns,
    };
    out.objective = (0..net.node_count())
        .filter(|&i| x[i])
        .map(|i| (out.neighbor_sum(net, i) + pc.floor(i)).abs())
        .sum();
    Ok(out)
}

/// The `2 k1 q_i (k3 (A d)_i + k4_i) + k2_i^2` term, plus the `(A d)_i`
/// driven part `u = k3 (A d)_i + k4_i` used by the stable evaluation.
fn radical(pc: &PolicyConstants, q_lambda: f64, i: usize, neighbor_sum: f64) -> (f64, f64) {
    let u = pc.k3 * neighbor_sum + pc.k4[i];
    (2.0 * pc.k1 * q_lambda * u + pc.k2[i] * pc.k2[i], u)
}

/// Negative root `(k2 - sqrt(R)) / k1`, i.e. the treatment jump of the value
/// function. Evaluated as `-2 q u / (k2 + sqrt(R))` to avoid cancellation
/// near binding rows.
fn treatment_jump(pc: &PolicyConstants, q_lambda: f64, i: usize, neighbor_sum: f64) -> Result<f64> {
    let (rad, u) = radical(pc, q_lambda, i, neighbor_sum);
    if rad < -RADICAL_TOL {
        return Err(Error::InvariantViolation(format!(
            "negative radical {rad} at node {i}; LP solution does not match state"
        )));
    }
    // a row binding to LP tolerance is binding: no intervention
    if (neighbor_sum + pc.floor(i)).abs() <= LP_TOL * (1.0 + pc.floor(i)) {
        return Ok(0.0);
    }
    let root = rad.max(0.0).sqrt();
    let denom = pc.k2[i] + root;
    if denom > 0.0 {
        Ok(-2.0 * q_lambda * u / denom)
    } else {
        Ok((pc.k2[i] - root) / pc.k1)
    }
}

/// Closed-form optimal treatment intensities for the current state.
pub fn optimal_intensity(
    state: &EpidemicState,
    net: &Network,
    pc: &PolicyConstants,
    cp: &ControlParams,
    d: &[f64],
) -> Result<Vec<f64>> {
    pc.check_nondegenerate()?;
    let n = state.node_count();
    let mut out = vec![0.0; n];
    for i in 0..n {
        if !state.x[i] || state.h[i] {
            continue;
        }
        let q = cp.q_lambda[i];
        let p: f64 = net.neighbors(i).iter().map(|&j| d[j]).sum();
        let jump = treatment_jump(pc, q, i, p)?;
        out[i] = (-jump / q).max(0.0);
    }
    Ok(out)
}

/// Coefficients of the linear value function.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueConstants {
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub f: Vec<f64>,
}

impl ValueConstants {
    fn neighbor_sum(net: &Network, v: &[f64], i: usize) -> f64 {
        net.neighbors(i).iter().map(|&j| v[j]).sum()
    }

    /// Diagonal of the treatment jump `c + A f`.
    pub fn treatment_jump(&self, net: &Network) -> Vec<f64> {
        (0..self.c.len())
            .map(|i| self.c[i] + Self::neighbor_sum(net, &self.f, i))
            .collect()
    }

    /// Intensity read directly off the value function,
    /// `-Q^-1 diag(1 - H) diag(c + A f) X`.
    pub fn intensity(&self, net: &Network, state: &EpidemicState, cp: &ControlParams) -> Vec<f64> {
        self.treatment_jump(net)
            .into_iter()
            .enumerate()
            .map(|(i, jump)| {
                if state.x[i] && !state.h[i] {
                    -jump / cp.q_lambda[i]
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Builds `b, c, d, f` from an LP solution `d` for the infected set `x`.
pub fn compute_value_constants(
    net: &Network,
    x: &[bool],
    d: &[f64],
    mp: &ModelParams,
    cp: &ControlParams,
) -> Result<ValueConstants> {
    if !(mp.beta > 0.0) {
        return Err(Error::Parameter("value constants require beta > 0".into()));
    }
    let pc = PolicyConstants::compute(mp, cp)?;
    pc.check_nondegenerate()?;
    let n = net.node_count();
    if x.len() != n || d.len() != n {
        return Err(Error::Argument("state vectors do not match network size".into()));
    }
    let ModelParams {
        beta,
        gamma,
        delta,
        ..
    } = *mp;
    let eta = cp.eta;

    let d: Vec<f64> = (0..n).map(|i| if x[i] { 0.0 } else { d[i] }).collect();
    let f: Vec<f64> = (0..n).map(|i| if x[i] { 0.0 } else { -gamma / beta * d[i] }).collect();
    let mut b = vec![0.0; n];
    let mut c = vec![0.0; n];
    for i in 0..n {
        let ad = ValueConstants::neighbor_sum(net, &d, i);
        let af = ValueConstants::neighbor_sum(net, &f, i);
        if x[i] {
            let q = cp.q_lambda[i];
            let jump = treatment_jump(&pc, q, i, ad)?;
            c[i] = jump - af;
            b[i] = (cp.q_x[i] - delta * ad - 0.5 * jump * jump / q) / (eta + delta);
        } else {
            b[i] = eta / beta * d[i] - ad;
            c[i] = -af;
        }
    }
    Ok(ValueConstants { b, c, d, f })
}

/// Per-node residuals of the coefficient-matching equations. Entries for
/// nodes an equation does not apply to are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct HjbResiduals {
    /// Susceptible: `-eta d_i + beta (b_i + A_i d)`.
    pub susceptible_z: Vec<f64>,
    /// Susceptible: `d_i + (beta/gamma) f_i`, written `f_i + (gamma/beta) d_i`
    /// so that it stays defined for `gamma = 0`.
    pub susceptible_m: Vec<f64>,
    /// Infected: `d_i` and `f_i` must vanish.
    pub infected_d: Vec<f64>,
    pub infected_f: Vec<f64>,
    /// Infected: the `H X` coefficient.
    pub infected_hx: Vec<f64>,
    /// Infected: the `X` coefficient.
    pub infected_x: Vec<f64>,
}

impl HjbResiduals {
    pub fn max(&self) -> f64 {
        [
            &self.susceptible_z,
            &self.susceptible_m,
            &self.infected_d,
            &self.infected_f,
            &self.infected_hx,
            &self.infected_x,
        ]
        .iter()
        .flat_map(|v| v.iter())
        .fold(0.0f64, |a, r| a.max(r.abs()))
    }
}

pub fn hjb_residuals(
    vc: &ValueConstants,
    net: &Network,
    x: &[bool],
    mp: &ModelParams,
    cp: &ControlParams,
) -> HjbResiduals {
    let n = net.node_count();
    let ModelParams {
        beta,
        gamma,
        delta,
        rho,
    } = *mp;
    let eta = cp.eta;
    let mut r = HjbResiduals {
        susceptible_z: vec![0.0; n],
        susceptible_m: vec![0.0; n],
        infected_d: vec![0.0; n],
        infected_f: vec![0.0; n],
        infected_hx: vec![0.0; n],
        infected_x: vec![0.0; n],
    };
    for i in 0..n {
        let ad = ValueConstants::neighbor_sum(net, &vc.d, i);
        let af = ValueConstants::neighbor_sum(net, &vc.f, i);
        if x[i] {
            let jump = vc.c[i] + af;
            let qinv = 1.0 / cp.q_lambda[i];
            r.infected_d[i] = vc.d[i];
            r.infected_f[i] = vc.f[i];
            r.infected_hx[i] = -eta * vc.c[i] - (delta + rho) * jump - (delta + rho) * (vc.b[i] + ad)
                + 0.5 * qinv * jump * jump;
            r.infected_x[i] =
                -eta * vc.b[i] - delta * (vc.b[i] + ad) - 0.5 * qinv * jump * jump + cp.q_x[i];
        } else {
            r.susceptible_z[i] = -eta * vc.d[i] + beta * (vc.b[i] + ad);
            r.susceptible_m[i] = if beta > 0.0 {
                vc.f[i] + gamma / beta * vc.d[i]
            } else {
                vc.f[i]
            };
        }
    }
    r
}

/// Online controller: caches the LP solution until the infected set changes.
#[derive(Debug, Clone)]
pub struct SocController {
    pub constants: PolicyConstants,
    q_lambda: Vec<f64>,
    cached: Option<(Vec<bool>, PolicyLp)>,
    lp_solves: usize,
}

impl SocController {
    pub fn new(mp: &ModelParams, cp: &ControlParams) -> Result<Self> {
        let constants = PolicyConstants::compute(mp, cp)?;
        constants.check_nondegenerate()?;
        Ok(SocController {
            constants,
            q_lambda: cp.q_lambda.clone(),
            cached: None,
            lp_solves: 0,
        })
    }

    /// Number of LP solves performed so far.
    pub fn lp_solves(&self) -> usize {
        self.lp_solves
    }

    pub fn current_lp(&self) -> Option<&PolicyLp> {
        self.cached.as_ref().map(|(_, lp)| lp)
    }

    fn refresh(&mut self, state: &EpidemicState, net: &Network) -> Result<&PolicyLp> {
        let stale = match &self.cached {
            Some((x, _)) => *x != state.x,
            None => true,
        };
        if stale {
            let lp = solve_policy_lp(net, &state.x, &self.constants)?;
            self.lp_solves += 1;
            self.cached = Some((state.x.clone(), lp));
        }
        Ok(&self.cached.as_ref().expect("just filled").1)
    }

    pub fn intensity(&mut self, state: &EpidemicState, net: &Network) -> Result<Vec<f64>> {
        self.refresh(state, net)?;
        let lp = &self.cached.as_ref().expect("refreshed").1;
        let n = state.node_count();
        let mut out = vec![0.0; n];
        for i in 0..n {
            if !state.x[i] || state.h[i] {
                continue;
            }
            let q = self.q_lambda[i];
            let jump = treatment_jump(&self.constants, q, i, lp.neighbor_sum(net, i))?;
            out[i] = (-jump / q).max(0.0);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Event, EventKind};

    fn fig1() -> (ModelParams, f64, f64, f64) {
        (ModelParams::new(6.0, 5.0, 1.0, 5.0).unwrap(), 1.0, 1.0, 400.0)
    }

    fn cp(n: usize, q_x: f64) -> ControlParams {
        ControlParams::uniform(n, 1.0, q_x, 1.0).unwrap()
    }

    #[test]
    fn constants_for_figure_parameters() {
        let (mp, ..) = fig1();
        let pc = compute_constants(&mp, &cp(2, 400.0)).unwrap();
        assert_eq!(pc.k1, 48.0);
        assert_eq!(pc.k2, vec![84.0, 84.0]);
        assert_eq!(pc.k3, 46.0);
        assert_eq!(pc.k4, vec![14400.0, 14400.0]);
        assert_eq!(pc.k5, 47.0);
    }

    #[test]
    fn zero_rates_are_degenerate() {
        let mp = ModelParams::new(0.0, 0.0, 0.0, 0.0).unwrap();
        let pc = compute_constants(&mp, &cp(1, 1.0)).unwrap();
        assert_eq!((pc.k1, pc.k3), (0.0, 0.0));
        let net = Network::from_edges(2, &[(0, 1)]).unwrap();
        assert!(matches!(
            solve_policy_lp(&net, &[true, false], &pc),
            Err(Error::Parameter(_))
        ));
        assert!(SocController::new(&mp, &cp(1, 1.0)).is_err());
    }

    #[test]
    fn nonpositive_eta_rejected() {
        let (mp, ..) = fig1();
        let bad = ControlParams {
            q_lambda: vec![1.0],
            q_x: vec![1.0],
            eta: 0.0,
        };
        assert!(matches!(compute_constants(&mp, &bad), Err(Error::Parameter(_))));
    }

    #[test]
    fn lp_without_infection_is_trivial() {
        let (mp, ..) = fig1();
        let net = Network::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let pc = compute_constants(&mp, &cp(3, 400.0)).unwrap();
        let lp = solve_policy_lp(&net, &[false; 3], &pc).unwrap();
        assert_eq!(lp.d, vec![0.0; 3]);
        assert!(lp.rows.is_empty());
        assert_eq!(lp.objective, 0.0);
    }

    #[test]
    fn edge_lp_binds() {
        let (mp, ..) = fig1();
        let net = Network::from_edges(2, &[(0, 1)]).unwrap();
        let cp = cp(2, 400.0);
        let pc = compute_constants(&mp, &cp).unwrap();
        let r = 14400.0 / 46.0;
        let lp = solve_policy_lp(&net, &[true, false], &pc).unwrap();
        assert!((lp.d[1] + r).abs() < 1e-9);
        assert_eq!(lp.d[0], 0.0);
        assert!(lp.objective.abs() < 1e-9);

        let state = EpidemicState::new(&net, &[0]).unwrap();
        let lam = optimal_intensity(&state, &net, &pc, &cp, &lp.d).unwrap();
        assert!(lam[0].abs() < 1e-9);
        let vc = compute_value_constants(&net, &state.x, &lp.d, &mp, &cp).unwrap();
        assert!(vc.treatment_jump(&net)[0].abs() < 1e-9);
    }

    #[test]
    fn triangle_lp_binds_smaller_floor() {
        let mp = fig1().0;
        let net = Network::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let cp = ControlParams::new(vec![1.0; 3], vec![100.0, 400.0, 50.0], 1.0).unwrap();
        let pc = compute_constants(&mp, &cp).unwrap();
        let (r0, r1) = (pc.floor(0), pc.floor(1));
        assert!(r0 < r1);
        let lp = solve_policy_lp(&net, &[true, true, false], &pc).unwrap();
        assert!((lp.d[2] + r0).abs() < 1e-9);

        // line search over the single free variable
        let best = (-40_000..=40_000)
            .map(|k| k as f64 * 0.01)
            .filter(|&v| v >= -r0 - 1e-12 && v >= -r1 - 1e-12)
            .fold(f64::INFINITY, f64::min);
        assert!((best + r0).abs() < 0.01);

        let mut state = EpidemicState::new(&net, &[0, 1]).unwrap();
        let lam = optimal_intensity(&state, &net, &pc, &cp, &lp.d).unwrap();
        assert!(lam[0].abs() < 1e-9, "binding row must not be treated");
        assert!(lam[1] > 0.0);
        assert_eq!(lam[2], 0.0);

        state
            .apply_event(
                &net,
                &Event {
                    t: 0.1,
                    node: 1,
                    kind: EventKind::TreatmentStart,
                },
            )
            .unwrap();
        let lam = optimal_intensity(&state, &net, &pc, &cp, &lp.d).unwrap();
        assert_eq!(lam[1], 0.0);
    }

    #[test]
    fn isolated_infected_node_spot_value() {
        let (mp, ..) = fig1();
        let net = Network::from_edges(2, &[(0, 1)]).unwrap();
        let net = Network::with_labels(
            net.labels().iter().cloned().chain(["iso".to_string()]).collect(),
            net.edges(),
        )
        .unwrap();
        let cp = cp(3, 400.0);
        let pc = compute_constants(&mp, &cp).unwrap();
        let state = EpidemicState::new(&net, &[2]).unwrap();
        let lam = optimal_intensity(&state, &net, &pc, &cp, &[0.0; 3]).unwrap();
        let expected = ((2.0f64 * 48.0 * 14400.0 + 84.0 * 84.0).sqrt() - 84.0) / 48.0;
        assert!((lam[2] - expected).abs() < 1e-9);
        assert!((lam[2] - 22.81).abs() < 0.01);
        assert_eq!(lam[0], 0.0);

        let vc = compute_value_constants(&net, &state.x, &[0.0; 3], &mp, &cp).unwrap();
        assert!((vc.intensity(&net, &state, &cp)[2] - expected).abs() < 1e-9);
    }

    #[test]
    fn zero_constants_have_zero_residuals() {
        let (mp, ..) = fig1();
        let net = Network::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let vc = ValueConstants {
            b: vec![0.0; 3],
            c: vec![0.0; 3],
            d: vec![0.0; 3],
            f: vec![0.0; 3],
        };
        let r = hjb_residuals(&vc, &net, &[false; 3], &mp, &cp(3, 400.0));
        assert_eq!(r.max(), 0.0);

        let built = compute_value_constants(&net, &[false; 3], &[0.0; 3], &mp, &cp(3, 400.0)).unwrap();
        assert_eq!(built, vc);
    }

    #[test]
    fn perturbing_b_shows_in_residual() {
        let (mp, ..) = fig1();
        let net = Network::from_edges(4, &[(0, 1), (1, 2), (2, 3), (0, 2)]).unwrap();
        let cp = cp(4, 400.0);
        let pc = compute_constants(&mp, &cp).unwrap();
        let x = [true, true, false, false];
        let lp = solve_policy_lp(&net, &x, &pc).unwrap();
        let mut vc = compute_value_constants(&net, &x, &lp.d, &mp, &cp).unwrap();
        let r = hjb_residuals(&vc, &net, &x, &mp, &cp);
        assert!(r.max() < 1e-8, "{r:?}");
        vc.b[1] += 1.0;
        let r = hjb_residuals(&vc, &net, &x, &mp, &cp);
        assert!((r.infected_x[1].abs() - (cp.eta + mp.delta)).abs() < 1e-8);
    }

    #[test]
    fn controller_resolves_only_on_infection_changes() {
        let (mp, ..) = fig1();
        let net = Network::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let cp = cp(3, 400.0);
        let mut ctl = SocController::new(&mp, &cp).unwrap();
        let mut state = EpidemicState::new(&net, &[0]).unwrap();
        ctl.intensity(&state, &net).unwrap();
        ctl.intensity(&state, &net).unwrap();
        assert_eq!(ctl.lp_solves(), 1);
        let ev = |t, node, kind| Event { t, node, kind };
        state.apply_event(&net, &ev(0.1, 0, EventKind::TreatmentStart)).unwrap();
        ctl.intensity(&state, &net).unwrap();
        assert_eq!(ctl.lp_solves(), 1);
        state.apply_event(&net, &ev(0.2, 1, EventKind::Infection)).unwrap();
        let lam = ctl.intensity(&state, &net).unwrap();
        assert_eq!(ctl.lp_solves(), 2);
        let reference = optimal_intensity(&state, &net, &ctl.constants, &cp, &ctl.current_lp().unwrap().d).unwrap();
        assert_eq!(lam, reference);
    }
}
