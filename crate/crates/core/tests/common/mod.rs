//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

pub mod checks;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use episoc::dynamics::{ControlParams, EpidemicState, ModelParams};
use episoc::soc::ValueConstants;
use episoc::Network;

/// Erdős–Rényi graph; isolated nodes allowed.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize, p: f64) -> Network {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Network::from_edges(n, &edges).unwrap()
}

pub fn random_params<R: Rng>(rng: &mut R, n: usize) -> (ModelParams, ControlParams) {
    let beta = rng.random_range(0.5..10.0);
    let gamma = rng.random_range(0.0..=beta);
    let mp = ModelParams::new(beta, gamma, rng.random_range(0.1..5.0), rng.random_range(0.0..10.0)).unwrap();
    let ql = (0..n).map(|_| rng.random_range(0.1..5.0)).collect();
    let qx = (0..n).map(|_| rng.random_range(0.0..1000.0)).collect();
    let cp = ControlParams::new(ql, qx, rng.random_range(0.1..5.0)).unwrap();
    (mp, cp)
}

pub fn fig1() -> (ModelParams, f64, f64, f64) {
    (ModelParams::new(6.0, 5.0, 1.0, 5.0).unwrap(), 1.0, 400.0, 1.0)
}

pub fn adjacency(net: &Network) -> DMatrix<f64> {
    let n = net.node_count();
    let mut a = DMatrix::zeros(n, n);
    for &(i, j) in net.edges() {
        a[(i, j)] = 1.0;
        a[(j, i)] = 1.0;
    }
    a
}

/// Brute-force recount of `Z = A X`, `M = A H` and `H <= X`.
pub fn state_matches_recount(net: &Network, s: &EpidemicState) -> Result<(), String> {
    let n = net.node_count();
    for j in 0..n {
        let (mut z, mut m) = (0u32, 0u32);
        for i in 0..n {
            if net.has_edge(i, j) {
                z += s.x[i] as u32;
                m += s.h[i] as u32;
            }
        }
        if z != s.z[j] || m != s.m[j] {
            return Err(format!("node {j}: Z {} vs {z}, M {} vs {m}", s.z[j], s.m[j]));
        }
        if s.h[j] && !s.x[j] {
            return Err(format!("node {j} treated while healthy"));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Oracle {
    Optimal(f64),
    Unbounded,
    Infeasible,
}

/// Minimum of `c'x` over `Gx >= h` by enumerating vertices of the feasible
/// set intersected with the box `|x_k| <= m`.
fn boxed_vertex_min(c: &[f64], g: &[Vec<f64>], h: &[f64], m: f64) -> Option<f64> {
    let n = c.len();
    let mut rows: Vec<(Vec<f64>, f64)> = g.iter().cloned().zip(h.iter().copied()).collect();
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        rows.push((e.clone(), -m));
        e[k] = -1.0;
        rows.push((e, -m));
    }
    let feasible = |x: &DVector<f64>| {
        rows.iter()
            .all(|(r, b)| r.iter().zip(x.iter()).map(|(a, v)| a * v).sum::<f64>() >= b - 1e-7)
    };
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let a = DMatrix::from_fn(n, n, |r, k| rows[idx[r]].0[k]);
        let b = DVector::from_fn(n, |r, _| rows[idx[r]].1);
        if let Some(x) = a.lu().solve(&b) {
            if x.iter().all(|v| v.is_finite()) && feasible(&x) {
                let v: f64 = c.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
                best = Some(best.map_or(v, |bv: f64| bv.min(v)));
            }
        }
        // next n-combination of rows
        let total = rows.len();
        let mut k = n;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            if idx[k] < total - n + k {
                idx[k] += 1;
                for l in k + 1..n {
                    idx[l] = idx[l - 1] + 1;
                }
                break;
            }
        }
    }
}

pub fn vertex_oracle(c: &[f64], g: &[Vec<f64>], h: &[f64]) -> Oracle {
    if c.is_empty() {
        return if h.iter().all(|&b| b <= 1e-9) { Oracle::Optimal(0.0) } else { Oracle::Infeasible };
    }
    const M: f64 = 1e4;
    match (boxed_vertex_min(c, g, h, M), boxed_vertex_min(c, g, h, 2.0 * M)) {
        (None, _) | (_, None) => Oracle::Infeasible,
        (Some(a), Some(b)) if (a - b).abs() > 1e-6 * (1.0 + a.abs()) => Oracle::Unbounded,
        (Some(a), _) => Oracle::Optimal(a),
    }
}

/// Residuals of the value-function coefficient equations evaluated with
/// dense linear algebra, independently of the library's evaluator.
pub fn dense_hjb_residual(
    vc: &ValueConstants,
    net: &Network,
    x: &[bool],
    mp: &ModelParams,
    cp: &ControlParams,
) -> f64 {
    let a = adjacency(net);
    let d = DVector::from_column_slice(&vc.d);
    let f = DVector::from_column_slice(&vc.f);
    let ad = &a * &d;
    let af = &a * &f;
    let (beta, gamma, delta, rho, eta) = (mp.beta, mp.gamma, mp.delta, mp.rho, cp.eta);
    let mut worst = 0.0f64;
    for i in 0..net.node_count() {
        let res: Vec<f64> = if x[i] {
            let s = vc.c[i] + af[i];
            let q = cp.q_lambda[i];
            vec![
                vc.d[i],
                vc.f[i],
                -eta * vc.c[i] - (delta + rho) * s - (delta + rho) * (vc.b[i] + ad[i]) + s * s / (2.0 * q),
                -eta * vc.b[i] - delta * (vc.b[i] + ad[i]) - s * s / (2.0 * q) + cp.q_x[i],
            ]
        } else {
            vec![-eta * vc.d[i] + beta * (vc.b[i] + ad[i]), beta * vc.f[i] + gamma * vc.d[i]]
        };
        for r in res {
            worst = worst.max(r.abs());
        }
    }
    worst
}

/// Treatment intensity read off the value-function jump:
/// `-diag(1-H) (c + A f) / Q`, floored at zero.
pub fn jump_intensity(vc: &ValueConstants, net: &Network, state: &EpidemicState, cp: &ControlParams) -> Vec<f64> {
    let a = adjacency(net);
    let af = &a * DVector::from_column_slice(&vc.f);
    (0..net.node_count())
        .map(|i| {
            if state.x[i] && !state.h[i] {
                (-(vc.c[i] + af[i]) / cp.q_lambda[i]).max(0.0)
            } else {
                0.0
            }
        })
        .collect()
}

/// Pearson chi-square p-value of observed counts against expected
/// probabilities.
pub fn chi_square_p(observed: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = observed.iter().sum();
    let stat: f64 = observed
        .iter()
        .zip(probs)
        .map(|(&o, &p)| {
            let e = p * n as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dof = (observed.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

/// One-sample Kolmogorov–Smirnov p-value (asymptotic) against `cdf`.
pub fn ks_p(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let d = samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0f64, f64::max);
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let p: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    p.clamp(0.0, 1.0)
}
