//! Dense two-phase simplex for small linear programs with free variables.
//!
//! Problems are stated as `minimize c'x subject to Gx >= h` with every
//! variable unbounded. Internally each free variable is split into a
//! difference of two nonnegative parts and every row gets a surplus
//! variable, giving an equality-form tableau.

use crate::error::{Error, Result};

/// Pivot and reduced-cost tolerance.
pub const PIVOT_TOL: f64 = 1e-9;
/// Consecutive degenerate pivots under Dantzig's rule before falling back
/// to Bland's rule for the rest of the phase.
const DEGENERATE_SWITCH: usize = 50;
const ITERATION_CAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub constraints: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Unbounded,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective_value: f64,
    pub status: LpStatus,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>, constraints: Vec<Vec<f64>>, rhs: Vec<f64>) -> Result<Self> {
        let lp = LinearProgram {
            n_vars: objective.len(),
            objective,
            constraints,
            rhs,
        };
        lp.check()?;
        Ok(lp)
    }

    fn check(&self) -> Result<()> {
        if self.objective.len() != self.n_vars {
            return Err(Error::Argument(format!(
                "objective has {} entries for {} variables",
                self.objective.len(),
                self.n_vars
            )));
        }
        if self.constraints.len() != self.rhs.len() {
            return Err(Error::Argument(format!(
                "{} constraint rows but {} right-hand sides",
                self.constraints.len(),
                self.rhs.len()
            )));
        }
        if let Some((i, row)) = self
            .constraints
            .iter()
            .enumerate()
            .find(|(_, r)| r.len() != self.n_vars)
        {
            return Err(Error::Argument(format!(
                "constraint row {i} has {} columns, expected {}",
                row.len(),
                self.n_vars
            )));
        }
        let finite = self
            .objective
            .iter()
            .chain(self.rhs.iter())
            .chain(self.constraints.iter().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Argument("non-finite coefficient".into()));
        }
        Ok(())
    }

    pub fn n_constraints(&self) -> usize {
        self.rhs.len()
    }

    /// Smallest slack `min_i (G_i x - h_i)`; nonnegative when `x` is feasible.
    pub fn min_slack(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .zip(&self.rhs)
            .map(|(row, h)| dot(row, x) - h)
            .fold(f64::INFINITY, f64::min)
    }

    /// Parses the plain-text format read by `lp-check`:
    ///
    /// ```text
    /// # minimize x1 + x2
    /// min 1 1
    /// row 1 0 >= -1
    /// row 0 1 >= -1
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut objective = None;
        let mut constraints = Vec::new();
        let mut rhs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::Parse {
                line: lineno + 1,
                msg,
            };
            let num = |tok: &str| {
                tok.parse::<f64>()
                    .map_err(|_| bad(format!("`{tok}` is not a number")))
            };
            let mut tokens = line.split_whitespace();
            match tokens.next() {
                Some("min") => {
                    if objective.is_some() {
                        return Err(bad("duplicate objective".into()));
                    }
                    objective = Some(tokens.map(num).collect::<Result<Vec<_>>>()?);
                }
                Some("row") => {
                    let rest: Vec<&str> = tokens.collect();
                    let ge = rest
                        .iter()
                        .position(|t| *t == ">=")
                        .ok_or_else(|| bad("row needs `>= rhs`".into()))?;
                    if ge + 2 != rest.len() {
                        return Err(bad("exactly one value must follow `>=`".into()));
                    }
                    constraints.push(rest[..ge].iter().map(|t| num(t)).collect::<Result<Vec<_>>>()?);
                    rhs.push(num(rest[ge + 1])?);
                }
                Some(other) => return Err(bad(format!("unknown directive `{other}`"))),
                None => unreachable!(),
            }
        }
        let objective = objective.ok_or(Error::Parse {
            line: 0,
            msg: "missing `min` line".into(),
        })?;
        Self::new(objective, constraints, rhs)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `lp`. `tol` is the feasibility tolerance of phase one.
pub fn solve(lp: &LinearProgram, tol: f64) -> Result<LpSolution> {
    lp.check()?;
    if !(tol > 0.0) {
        return Err(Error::Argument(format!("tolerance must be positive, got {tol}")));
    }
    let n = lp.n_vars;
    let m = lp.n_constraints();

    if n == 0 {
        let feasible = lp.rhs.iter().all(|&h| h <= tol);
        return Ok(LpSolution {
            x: Vec::new(),
            objective_value: 0.0,
            status: if feasible {
                LpStatus::Optimal
            } else {
                LpStatus::Infeasible
            },
        });
    }
    if m == 0 {
        let flat = lp.objective.iter().all(|c| c.abs() <= PIVOT_TOL);
        return Ok(LpSolution {
            x: vec![0.0; n],
            objective_value: 0.0,
            status: if flat {
                LpStatus::Optimal
            } else {
                LpStatus::Unbounded
            },
        });
    }

    let mut tableau = Tableau::build(lp);
    let scale = lp.rhs.iter().fold(1.0f64, |a, h| a.max(h.abs()));

    if tableau.n_artificial > 0 {
        let phase_one: Vec<f64> = (0..tableau.cols)
            .map(|j| if tableau.is_artificial(j) { 1.0 } else { 0.0 })
            .collect();
        tableau.set_objective(&phase_one);
        match tableau.optimize(tableau.cols)? {
            PhaseOutcome::Optimal => {}
            PhaseOutcome::Unbounded => {
                return Err(Error::Numerical("phase one reported unbounded".into()))
            }
        }
        if tableau.objective_value() > tol * scale {
            return Ok(LpSolution {
                x: vec![0.0; n],
                objective_value: f64::NAN,
                status: LpStatus::Infeasible,
            });
        }
        tableau.drive_out_artificials();
    }

    let mut phase_two = vec![0.0; tableau.cols];
    for (j, &c) in lp.objective.iter().enumerate() {
        phase_two[j] = c;
        phase_two[n + j] = -c;
    }
    tableau.set_objective(&phase_two);
    // artificials never re-enter
    let entering_limit = tableau.first_artificial;
    let status = match tableau.optimize(entering_limit)? {
        PhaseOutcome::Optimal => LpStatus::Optimal,
        PhaseOutcome::Unbounded => LpStatus::Unbounded,
    };

    let values = tableau.primal();
    let x: Vec<f64> = (0..n).map(|j| values[j] - values[n + j]).collect();
    let objective_value = match status {
        LpStatus::Optimal => dot(&lp.objective, &x),
        _ => f64::NEG_INFINITY,
    };
    Ok(LpSolution {
        x,
        objective_value,
        status,
    })
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
}

/// Row-major simplex tableau. Row `r` holds `B^-1 A` and `B^-1 b` in its
/// last column; `obj` holds reduced costs and the negated objective.
struct Tableau {
    rows: Vec<Vec<f64>>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    cols: usize,
    first_artificial: usize,
    n_artificial: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.n_vars;
        let m = lp.n_constraints();
        // rows with h <= 0 start feasible on their surplus variable
        let needs_artificial: Vec<bool> = lp.rhs.iter().map(|&h| h > 0.0).collect();
        let n_artificial = needs_artificial.iter().filter(|&&a| a).count();
        let first_artificial = 2 * n + m;
        let cols = first_artificial + n_artificial;

        let mut rows = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let mut next_art = first_artificial;
        for (i, (g, &h)) in lp.constraints.iter().zip(&lp.rhs).enumerate() {
            // G u - G v - s = h
            let mut row = vec![0.0; cols + 1];
            for j in 0..n {
                row[j] = g[j];
                row[n + j] = -g[j];
            }
            row[2 * n + i] = -1.0;
            row[cols] = h;
            if needs_artificial[i] {
                row[next_art] = 1.0;
                basis.push(next_art);
                next_art += 1;
            } else {
                row.iter_mut().for_each(|v| *v = -*v);
                basis.push(2 * n + i);
            }
            rows.push(row);
        }
        Tableau {
            rows,
            obj: vec![0.0; cols + 1],
            basis,
            cols,
            first_artificial,
            n_artificial,
        }
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.first_artificial
    }

    fn set_objective(&mut self, costs: &[f64]) {
        self.obj = costs.to_vec();
        self.obj.push(0.0);
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = costs[b];
            if cb != 0.0 {
                for (o, v) in self.obj.iter_mut().zip(&self.rows[r]) {
                    *o -= cb * v;
                }
            }
        }
    }

    fn objective_value(&self) -> f64 {
        -self.obj[self.cols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        self.rows[r].iter_mut().for_each(|v| *v /= p);
        let pivot_row = self.rows[r].clone();
        for (k, row) in self.rows.iter_mut().enumerate() {
            if k == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (v, pv) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.obj[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Runs primal simplex over entering columns `< entering_limit`.
    fn optimize(&mut self, entering_limit: usize) -> Result<PhaseOutcome> {
        let rhs = self.cols;
        let mut degenerate_run = 0;
        let mut bland = false;
        for _ in 0..ITERATION_CAP {
            let entering = if bland {
                (0..entering_limit).find(|&j| self.obj[j] < -PIVOT_TOL)
            } else {
                (0..entering_limit)
                    .filter(|&j| self.obj[j] < -PIVOT_TOL)
                    .min_by(|&a, &b| self.obj[a].total_cmp(&self.obj[b]))
            };
            let Some(c) = entering else {
                return Ok(PhaseOutcome::Optimal);
            };

            // ratio test, ties broken by smallest basic index
            let mut leave: Option<(usize, f64)> = None;
            for (r, row) in self.rows.iter().enumerate() {
                let a = row[c];
                if a > PIVOT_TOL {
                    let ratio = row[rhs].max(0.0) / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - PIVOT_TOL
                                || (ratio <= lratio + PIVOT_TOL && self.basis[r] < self.basis[lr])
                            {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            let Some((r, ratio)) = leave else {
                return Ok(PhaseOutcome::Unbounded);
            };
            if ratio <= PIVOT_TOL {
                degenerate_run += 1;
                if degenerate_run >= DEGENERATE_SWITCH {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, c);
        }
        Err(Error::Numerical(format!(
            "simplex exceeded {ITERATION_CAP} pivots (cycling guard)"
        )))
    }

    /// After a successful phase one, pivots remaining zero-valued artificial
    /// basics out of the basis, dropping rows that are redundant.
    fn drive_out_artificials(&mut self) {
        let mut r = 0;
        while r < self.rows.len() {
            if self.is_artificial(self.basis[r]) {
                let col = (0..self.first_artificial)
                    .filter(|&j| self.rows[r][j].abs() > PIVOT_TOL)
                    .max_by(|&a, &b| self.rows[r][a].abs().total_cmp(&self.rows[r][b].abs()));
                match col {
                    Some(c) => self.pivot(r, c),
                    None => {
                        self.rows.remove(r);
                        self.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
    }

    fn primal(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.cols];
        for (r, &b) in self.basis.iter().enumerate() {
            v[b] = self.rows[r][self.cols];
        }
        v
    }
}
