//! C ABI over the `episoc` engine.
//!
//! Every fallible function returns an [`EpisocStatus`]; on failure a
//! human-readable message is available from [`episoc_last_error`] on the
//! same thread. Handles are opaque and must be released with their `_free`
//! function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use episoc::baselines::{PolicyKind, PolicySpec};
use episoc::dynamics::{ControlParams, EpidemicState, EventKind, ModelParams};
use episoc::graph::SPECTRAL_TOL;
use episoc::lp::{self, LinearProgram, LpStatus};
use episoc::sim::{self, RunConfig, RunResult, Scenario};
use episoc::soc::{self, PolicyConstants};
use episoc::{Error, Network};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisocStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Numerical = 4,
    Calibration = 5,
    Io = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisocLpStatus {
    Optimal = 0,
    Unbounded = 1,
    Infeasible = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisocPolicy {
    Soc = 0,
    Trivial = 1,
    TrivialFrontLoaded = 2,
    MostNeighbors = 3,
    MostNeighborsFrontLoaded = 4,
    LeastNeighbors = 5,
    LeastNeighborsFrontLoaded = 6,
    SpectralRadius = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisocEventKind {
    Infection = 0,
    Recovery = 1,
    TreatmentStart = 2,
}

/// Disease rates.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct EpisocModelParams {
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub rho: f64,
}

/// Control weights, uniform across nodes.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct EpisocControlParams {
    pub q_lambda: f64,
    pub q_x: f64,
    pub eta: f64,
}

/// Policy constants for uniform control weights.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct EpisocPolicyConstants {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
}

/// Opaque contact network.
pub struct EpisocNetwork {
    scenario: Scenario,
}

/// Opaque result of one simulated run.
pub struct EpisocRun {
    result: RunResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> EpisocStatus {
    match e {
        Error::Parse { .. } => EpisocStatus::Parse,
        Error::Numerical(_)
        | Error::InvariantViolation(_)
        | Error::IllegalTransition { .. }
        | Error::TimeOrder { .. }
        | Error::Policy(_) => EpisocStatus::Numerical,
        Error::Calibration { .. } => EpisocStatus::Calibration,
        Error::Io { .. } => EpisocStatus::Io,
        _ => EpisocStatus::InvalidArgument,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), FfiError>) -> EpisocStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EpisocStatus::Ok,
        Ok(Err(FfiError(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal panic: {msg}"));
            EpisocStatus::Panic
        }
    }
}

struct FfiError(EpisocStatus, String);

impl From<Error> for FfiError {
    fn from(e: Error) -> Self {
        FfiError(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> FfiError {
    FfiError(EpisocStatus::NullPointer, format!("{what} is null"))
}

fn nonnull<'a, T>(p: *const T, what: &str) -> Result<&'a T, FfiError> {
    // SAFETY: callers pass pointers obtained from this library or valid for reads.
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

/// # Safety
/// `p` must be null or point to `len` readable elements.
unsafe fn input<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], FfiError> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or point to `len` writable elements.
unsafe fn output<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], FfiError> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

fn model(mp: &EpisocModelParams) -> Result<ModelParams, Error> {
    ModelParams::new(mp.beta, mp.gamma, mp.delta, mp.rho)
}

fn control(cp: &EpisocControlParams, n: usize) -> Result<ControlParams, Error> {
    ControlParams::uniform(n, cp.q_lambda, cp.q_x, cp.eta)
}

fn policy_kind(p: EpisocPolicy) -> PolicyKind {
    PolicyKind::ALL[p as usize]
}

/// Message of the last failed call on this thread. Valid until the next
/// failing call on the same thread; never null.
#[no_mangle]
pub extern "C" fn episoc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

fn new_network(out: *mut *mut EpisocNetwork, build: impl FnOnce() -> Result<Network, Error>) -> EpisocStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let scenario = Scenario::new(build()?)?;
        let handle = Box::into_raw(Box::new(EpisocNetwork { scenario }));
        // SAFETY: checked non-null above.
        unsafe { *out = handle };
        Ok(())
    })
}

/// Bundled 49-node US-states contiguity graph.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn episoc_network_us_states(out: *mut *mut EpisocNetwork) -> EpisocStatus {
    new_network(out, || Ok(Network::us_states()))
}

/// Parses a whitespace-separated edge list (one edge per line, `#`
/// comments; integer tokens are node indices, anything else a label).
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn episoc_network_from_edge_list(
    text: *const c_char,
    out: *mut *mut EpisocNetwork,
) -> EpisocStatus {
    if text.is_null() {
        set_last_error("text is null");
        return EpisocStatus::NullPointer;
    }
    let text = match CStr::from_ptr(text).to_str() {
        Ok(s) => s.to_owned(),
        Err(_) => {
            set_last_error("edge list is not valid UTF-8");
            return EpisocStatus::Parse;
        }
    };
    new_network(out, || Network::load_edge_list(&text))
}

/// # Safety
/// `net` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn episoc_network_free(net: *mut EpisocNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn episoc_network_node_count(net: *const EpisocNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.scenario.net.node_count())
}

/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn episoc_network_edge_count(net: *const EpisocNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.scenario.net.edge_count())
}

/// Largest adjacency eigenvalue.
///
/// # Safety
/// `net` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn episoc_network_spectral_radius(net: *const EpisocNetwork, out: *mut f64) -> EpisocStatus {
    guard(|| {
        let net = nonnull(net, "net")?;
        let out = output(out, 1, "out")?;
        out[0] = net.scenario.net.spectral_radius(SPECTRAL_TOL)?;
        Ok(())
    })
}

/// Solves `min cᵀx s.t. Gx ≥ h` over free `x`. `g` is row-major
/// `n_constraints × n_vars`. `x_out` receives `n_vars` values and
/// `objective_out` the optimum; both are only written when the status is
/// Optimal.
///
/// # Safety
/// Array arguments must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn episoc_lp_solve(
    n_vars: usize,
    n_constraints: usize,
    c: *const f64,
    g: *const f64,
    h: *const f64,
    tol: f64,
    lp_status: *mut EpisocLpStatus,
    x_out: *mut f64,
    objective_out: *mut f64,
) -> EpisocStatus {
    guard(|| {
        let c = input(c, n_vars, "c")?.to_vec();
        let g = input(g, n_vars * n_constraints, "g")?;
        let h = input(h, n_constraints, "h")?.to_vec();
        let lp_status = output(lp_status, 1, "lp_status")?;
        let rows = (0..n_constraints).map(|r| g[r * n_vars..(r + 1) * n_vars].to_vec()).collect();
        let sol = lp::solve(&LinearProgram::new(c, rows, h)?, tol)?;
        lp_status[0] = match sol.status {
            LpStatus::Optimal => EpisocLpStatus::Optimal,
            LpStatus::Unbounded => EpisocLpStatus::Unbounded,
            LpStatus::Infeasible => EpisocLpStatus::Infeasible,
        };
        if sol.status == LpStatus::Optimal {
            output(x_out, n_vars, "x_out")?.copy_from_slice(&sol.x);
            output(objective_out, 1, "objective_out")?[0] = sol.objective_value;
        }
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn episoc_policy_constants(
    mp: *const EpisocModelParams,
    cp: *const EpisocControlParams,
    out: *mut EpisocPolicyConstants,
) -> EpisocStatus {
    guard(|| {
        let mp = model(nonnull(mp, "mp")?)?;
        let cp = control(nonnull(cp, "cp")?, 1)?;
        let pc = PolicyConstants::compute(&mp, &cp)?;
        output(out, 1, "out")?[0] = EpisocPolicyConstants {
            k1: pc.k1,
            k2: pc.k2[0],
            k3: pc.k3,
            k4: pc.k4[0],
            k5: pc.k5,
        };
        Ok(())
    })
}

/// Optimal treatment intensities for the given infection (`infected[i] != 0`)
/// and treatment pattern. `treated` may be null (nobody treated). All
/// arrays have `episoc_network_node_count` elements.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn episoc_soc_intensity(
    net: *const EpisocNetwork,
    mp: *const EpisocModelParams,
    cp: *const EpisocControlParams,
    infected: *const u8,
    treated: *const u8,
    lambda_out: *mut f64,
) -> EpisocStatus {
    guard(|| {
        let net = &nonnull(net, "net")?.scenario.net;
        let n = net.node_count();
        let mp = model(nonnull(mp, "mp")?)?;
        let cp = control(nonnull(cp, "cp")?, n)?;
        let inf: Vec<usize> = input(infected, n, "infected")?
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(i, _)| i)
            .collect();
        let mut state = EpidemicState::new(net, &inf)?;
        if !treated.is_null() {
            for (i, &v) in input(treated, n, "treated")?.iter().enumerate() {
                if v != 0 {
                    if !state.x[i] {
                        return Err(FfiError(
                            EpisocStatus::InvalidArgument,
                            format!("node {i} treated but not infected"),
                        ));
                    }
                    state.h[i] = true;
                }
            }
        }
        let pc = PolicyConstants::compute(&mp, &cp)?;
        let plp = soc::solve_policy_lp(net, &state.x, &pc)?;
        let lam = soc::optimal_intensity(&state, net, &pc, &cp, &plp.d)?;
        output(lambda_out, n, "lambda_out")?.copy_from_slice(&lam);
        Ok(())
    })
}

/// Simulates one run on `[0, t_final]`. `scale` multiplies scaled
/// baselines; `budget` caps front-loaded baselines; both are ignored by SOC.
///
/// # Safety
/// Pointers must be valid; `out` receives a handle to free with
/// [`episoc_run_free`].
#[no_mangle]
pub unsafe extern "C" fn episoc_run(
    net: *const EpisocNetwork,
    mp: *const EpisocModelParams,
    cp: *const EpisocControlParams,
    policy: EpisocPolicy,
    scale: f64,
    budget: f64,
    t_final: f64,
    initial_infected: usize,
    seed: u64,
    init_seed: u64,
    out: *mut *mut EpisocRun,
) -> EpisocStatus {
    guard(|| {
        let scenario = &nonnull(net, "net")?.scenario;
        if out.is_null() {
            return Err(null("out"));
        }
        let mp = model(nonnull(mp, "mp")?)?;
        let cp = control(nonnull(cp, "cp")?, scenario.net.node_count())?;
        let spec = PolicySpec::new(policy_kind(policy)).with_scale(scale).with_budget(budget);
        let mut cfg = RunConfig::new(spec, mp, cp).with_seeds(seed, init_seed);
        cfg.t_final = t_final;
        cfg.initial_infected_count = initial_infected;
        let result = sim::run(&cfg, scenario)?;
        *out = Box::into_raw(Box::new(EpisocRun { result }));
        Ok(())
    })
}

/// # Safety
/// `run` must be null or a handle from [`episoc_run`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn episoc_run_free(run: *mut EpisocRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Total infection coverage; NaN for a null handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn episoc_run_coverage(run: *const EpisocRun) -> f64 {
    run.as_ref().map_or(f64::NAN, |r| r.result.metrics.total_infection_coverage)
}

/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn episoc_run_discounted_cost(run: *const EpisocRun) -> f64 {
    run.as_ref().map_or(f64::NAN, |r| r.result.metrics.discounted_cost)
}

/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn episoc_run_peak_infected(run: *const EpisocRun) -> usize {
    run.as_ref().map_or(0, |r| r.result.metrics.peak_infected)
}

/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn episoc_run_total_treatments(run: *const EpisocRun) -> u64 {
    run.as_ref().map_or(0, |r| r.result.metrics.total_treatments)
}

/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn episoc_run_event_count(run: *const EpisocRun) -> usize {
    run.as_ref().map_or(0, |r| r.result.events.len())
}

/// Reads event `index` of the run's log.
///
/// # Safety
/// `run` must be a live handle; output pointers valid for writes.
#[no_mangle]
pub unsafe extern "C" fn episoc_run_event(
    run: *const EpisocRun,
    index: usize,
    t: *mut f64,
    node: *mut usize,
    kind: *mut EpisocEventKind,
) -> EpisocStatus {
    guard(|| {
        let events = &nonnull(run, "run")?.result.events;
        let ev = events.get(index).ok_or_else(|| {
            FfiError::from(Error::IndexOutOfRange {
                index,
                len: events.len(),
            })
        })?;
        output(t, 1, "t")?[0] = ev.t;
        output(node, 1, "node")?[0] = ev.node;
        output(kind, 1, "kind")?[0] = match ev.kind {
            EventKind::Infection => EpisocEventKind::Infection,
            EventKind::Recovery => EpisocEventKind::Recovery,
            EventKind::TreatmentStart => EpisocEventKind::TreatmentStart,
        };
        Ok(())
    })
}
