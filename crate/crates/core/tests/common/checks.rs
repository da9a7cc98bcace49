//! Checks behind the acceptance criteria, parameterised by size so the
//! regular tests can run them small and the acceptance target full-size.
//! Each returns a one-line summary on success.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use episoc::dynamics::{ControlParams, EpidemicState, Event, EventKind};
use episoc::lp::{self, LpStatus};
use episoc::sim;
use episoc::soc::{self, PolicyConstants};
use episoc::Network;

use super::{
    chi_square_p, dense_hjb_residual, fig1, jump_intensity, random_graph, random_params,
    state_matches_recount, vertex_oracle, Oracle,
};

pub type Check = Result<String, String>;

/// Applies `count` uniformly chosen legal events to random graphs
/// (n <= 50), recounting neighbour sums after every event.
pub fn state_consistency(seed: u64, count: usize) -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut done = 0;
    let mut graphs = 0;
    while done < count {
        let n = rng.random_range(1..=50);
        let p = rng.random_range(0.02..0.3);
        let net = random_graph(&mut rng, n, p);
        graphs += 1;
        let k = rng.random_range(0..=n);
        let init = rand::seq::index::sample(&mut rng, n, k).into_vec();
        let mut state = EpidemicState::new(&net, &init).map_err(|e| e.to_string())?;
        state_matches_recount(&net, &state)?;
        let mut t = 0.0;
        for _ in 0..(count - done).min(5_000) {
            let i = rng.random_range(0..n);
            let kind = match (state.x[i], state.h[i]) {
                (false, _) => EventKind::Infection,
                (true, true) => EventKind::Recovery,
                (true, false) if rng.random::<bool>() => EventKind::Recovery,
                (true, false) => EventKind::TreatmentStart,
            };
            t += rng.random::<f64>();
            state
                .apply_event(&net, &Event { t, node: i, kind })
                .map_err(|e| format!("event {done}: {e}"))?;
            state_matches_recount(&net, &state).map_err(|e| format!("event {done}: {e}"))?;
            done += 1;
        }
        state.check_consistency(&net).map_err(|e| e.to_string())?;
    }
    Ok(format!("{count} events on {graphs} graphs in {:.2?}", start.elapsed()))
}

/// Frozen state on the path 0-1-2 with nodes 0 and 2 infected and node 0
/// treated; node 2 has treatment intensity 2.5.
pub fn sampler_exactness(seed: u64, samples: usize) -> Check {
    let start = Instant::now();
    let net = Network::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
    let mut state = EpidemicState::new(&net, &[0, 2]).unwrap();
    state
        .apply_event(&net, &Event { t: 0.0, node: 0, kind: EventKind::TreatmentStart })
        .unwrap();
    let (mp, ..) = fig1();
    let treat = [0.0, 0.0, 2.5];
    // hand-derived rates: node 1 infected at 2*beta - gamma = 7, node 0
    // recovers at delta + rho = 6, node 2 recovers at delta = 1 or starts
    // treatment at 2.5
    let cats = [
        (EventKind::Infection, 1, 7.0),
        (EventKind::Recovery, 0, 6.0),
        (EventKind::Recovery, 2, 1.0),
        (EventKind::TreatmentStart, 2, 2.5),
    ];
    let total: f64 = cats.iter().map(|c| c.2).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = [0u64; 4];
    let mut gaps = Vec::with_capacity(samples);
    for _ in 0..samples {
        let ev = sim::step(&state, &mp, &treat, &mut rng)
            .map_err(|e| e.to_string())?
            .ok_or("no event from a live state")?;
        let k = cats
            .iter()
            .position(|&(kind, node, _)| kind == ev.kind && node == ev.node)
            .ok_or_else(|| format!("impossible event {ev:?}"))?;
        counts[k] += 1;
        gaps.push(ev.t - state.t);
    }
    let probs: Vec<f64> = cats.iter().map(|c| c.2 / total).collect();
    let p_chi = chi_square_p(&counts, &probs);
    let p_ks = super::ks_p(&mut gaps, |x| 1.0 - (-total * x).exp());
    let msg = format!(
        "chi-square p={p_chi:.3}, KS p={p_ks:.3} over {samples} draws in {:.2?}",
        start.elapsed()
    );
    if p_chi < 0.01 || p_ks < 0.01 {
        Err(msg)
    } else {
        Ok(msg)
    }
}

fn random_instance(rng: &mut ChaCha8Rng, max_n: usize) -> (Network, EpidemicState, episoc::ModelParams, ControlParams) {
    let n = rng.random_range(1..=max_n);
    let p = rng.random_range(0.2..0.8);
    let net = random_graph(rng, n, p);
    let (mp, cp) = random_params(rng, n);
    let infected: Vec<usize> = (0..n).filter(|_| rng.random::<bool>()).collect();
    let mut state = EpidemicState::new(&net, &infected).unwrap();
    for &i in &infected {
        if rng.random::<f64>() < 0.3 {
            state.h[i] = true;
        }
    }
    for i in 0..n {
        state.m[i] = net.neighbors(i).iter().filter(|&&j| state.h[j]).count() as u32;
    }
    (net, state, mp, cp)
}

/// Random instances on graphs of at most 8 nodes: value-function residuals
/// and agreement of the closed-form intensity with the value-jump form.
pub fn hjb_verification(seed: u64, instances: usize) -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst_res, mut worst_gap) = (0.0f64, 0.0f64);
    for k in 0..instances {
        let (net, state, mp, cp) = random_instance(&mut rng, 8);
        let pc = PolicyConstants::compute(&mp, &cp).map_err(|e| e.to_string())?;
        let plp = soc::solve_policy_lp(&net, &state.x, &pc).map_err(|e| format!("instance {k}: {e}"))?;
        let vc = soc::compute_value_constants(&net, &state.x, &plp.d, &mp, &cp)
            .map_err(|e| format!("instance {k}: {e}"))?;
        let res = dense_hjb_residual(&vc, &net, &state.x, &mp, &cp);
        let lam = soc::optimal_intensity(&state, &net, &pc, &cp, &plp.d).map_err(|e| e.to_string())?;
        let jump = jump_intensity(&vc, &net, &state, &cp);
        let gap = lam.iter().zip(&jump).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        if !(res < 1e-8) || !(gap < 1e-8) {
            return Err(format!("instance {k}: residual {res:e}, intensity gap {gap:e}"));
        }
        worst_res = worst_res.max(res);
        worst_gap = worst_gap.max(gap);
    }
    Ok(format!(
        "{instances} instances, max residual {worst_res:.1e}, max intensity gap {worst_gap:.1e}, {:.2?}",
        start.elapsed()
    ))
}

/// Feasibility, binding rows, zero coefficients on infected nodes and
/// agreement with vertex enumeration for policy LPs with at most 6 columns.
pub fn lp_properties(seed: u64, instances: usize) -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut compared, mut binding) = (0, 0);
    for k in 0..instances {
        let (net, state, mp, cp) = random_instance(&mut rng, 10);
        let pc = PolicyConstants::compute(&mp, &cp).map_err(|e| e.to_string())?;
        let plp = soc::solve_policy_lp(&net, &state.x, &pc).map_err(|e| e.to_string())?;
        let vc = soc::compute_value_constants(&net, &state.x, &plp.d, &mp, &cp).map_err(|e| e.to_string())?;
        let lam = soc::optimal_intensity(&state, &net, &pc, &cp, &plp.d).map_err(|e| e.to_string())?;
        let fail = |what: String| Err(format!("instance {k}: {what}"));
        for i in 0..net.node_count() {
            if state.x[i] {
                if plp.d[i] != 0.0 || vc.d[i] != 0.0 || vc.f[i] != 0.0 {
                    return fail(format!("d or f nonzero on infected node {i}"));
                }
                if lam[i] < 0.0 {
                    return fail(format!("negative intensity on {i}"));
                }
            }
        }
        for &i in &plp.rows {
            let slack = plp.neighbor_sum(&net, i) + pc.floor(i);
            if slack < -1e-7 {
                return fail(format!("row {i} violated by {slack:e}"));
            }
            if slack.abs() <= 1e-9 * (1.0 + pc.floor(i)) {
                binding += 1;
                if lam[i] != 0.0 && !state.h[i] {
                    return fail(format!("binding row {i} has intensity {}", lam[i]));
                }
            }
        }
        if !plp.rows.is_empty() && plp.columns.len() <= 6 {
            let (prog, _, _) = soc::build_policy_lp(&net, &state.x, &pc).map_err(|e| e.to_string())?;
            match vertex_oracle(&prog.objective, &prog.constraints, &prog.rhs) {
                Oracle::Optimal(v) => {
                    // reported objective is the L1 residual over every infected node
                    let offset: f64 = (0..net.node_count()).filter(|&i| state.x[i]).map(|i| pc.floor(i)).sum();
                    if (v + offset - plp.objective).abs() > 1e-6 * (1.0 + v.abs()) {
                        return fail(format!("objective {} vs oracle {}", plp.objective, v + offset));
                    }
                    compared += 1;
                }
                other => return fail(format!("oracle reports {other:?}")),
            }
        }
    }
    Ok(format!(
        "{instances} instances, {compared} checked against vertex enumeration, {binding} binding rows, {:.2?}",
        start.elapsed()
    ))
}

/// Random small LPs against vertex enumeration.
pub fn lp_vs_oracle(seed: u64, instances: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = [0usize; 3];
    for k in 0..instances {
        let n = rng.random_range(1..=6);
        let m = rng.random_range(0..=8);
        let int = |rng: &mut ChaCha8Rng| rng.random_range(-3..=3) as f64;
        let g: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| int(&mut rng)).collect()).collect();
        // half the time c = G'y with y >= 0, which is bounded whenever feasible
        // (kept only while its entries stay in [-3, 3])
        let dual: Option<Vec<f64>> = (m > 0 && rng.random::<bool>())
            .then(|| {
                let y: Vec<f64> = (0..m).map(|_| rng.random_range(0..=1) as f64).collect();
                (0..n).map(|j| (0..m).map(|r| y[r] * g[r][j]).sum::<f64>()).collect::<Vec<f64>>()
            })
            .filter(|c| c.iter().all(|v| v.abs() <= 3.0));
        let c = dual.unwrap_or_else(|| (0..n).map(|_| int(&mut rng)).collect());
        let h: Vec<f64> = (0..m).map(|_| int(&mut rng)).collect();
        let prog = lp::LinearProgram::new(c.clone(), g.clone(), h.clone()).map_err(|e| e.to_string())?;
        let sol = lp::solve(&prog, lp::PIVOT_TOL).map_err(|e| format!("instance {k}: {e}"))?;
        let oracle = vertex_oracle(&c, &g, &h);
        match (oracle, sol.status) {
            (Oracle::Optimal(v), LpStatus::Optimal) => {
                if (v - sol.objective_value).abs() > 1e-6 {
                    return Err(format!("instance {k}: {} vs oracle {v}", sol.objective_value));
                }
                if prog.min_slack(&sol.x) < -1e-7 {
                    return Err(format!("instance {k}: infeasible x"));
                }
                counts[0] += 1;
            }
            (Oracle::Unbounded, LpStatus::Unbounded) => counts[1] += 1,
            (Oracle::Infeasible, LpStatus::Infeasible) => counts[2] += 1,
            (o, s) => return Err(format!("instance {k}: oracle {o:?}, solver {s:?} ({c:?} {g:?} {h:?})")),
        }
    }
    Ok(format!(
        "{instances} LPs: {} optimal, {} unbounded, {} infeasible",
        counts[0], counts[1], counts[2]
    ))
}

/// Isolated infected node under the figure parameters.
pub fn spot_value() -> Check {
    let (mp, ql, qx, eta) = fig1();
    // computed independently of the library
    let expected = ((2.0f64 * 48.0 * 14400.0 + 84.0 * 84.0).sqrt() - 84.0) / 48.0;
    let net = Network::from_edges(2, &[]).unwrap();
    let cp = ControlParams::uniform(2, ql, qx, eta).unwrap();
    let state = EpidemicState::new(&net, &[0]).unwrap();
    let pc = PolicyConstants::compute(&mp, &cp).map_err(|e| e.to_string())?;
    let plp = soc::solve_policy_lp(&net, &state.x, &pc).map_err(|e| e.to_string())?;
    let lam = soc::optimal_intensity(&state, &net, &pc, &cp, &plp.d).map_err(|e| e.to_string())?;
    let msg = format!("lambda* = {:.12} vs {expected:.12}", lam[0]);
    if (lam[0] - expected).abs() <= 1e-9 && lam[1] == 0.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}
