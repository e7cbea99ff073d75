//! The proximal bundle iteration.
//!
//! Each iteration solves the prox subproblem around the current center,
//! stops when the predicted decrease `v = F(x) - m(z)` is at most `eps`,
//! otherwise queries the oracle at the trial point, decides between a
//! descent step and a null step, and updates the model.

mod io;

pub use io::{read_trace_csv, read_vectors_json, write_trace_csv, write_vectors_json};

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::dist_sq;
use crate::model::{Cut, CuttingPlaneModel, PieceId, PrunePolicy, Variant};
use crate::problems::ProblemSpec;
use crate::proxqp::{solve_prox_warm, ProxSolution, QpSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Proximal coefficient.
    pub rho: f64,
    /// Descent parameter in (0, 1).
    pub beta: f64,
    /// Stopping precision, strictly positive.
    pub eps: f64,
    pub variant: Variant,
    /// Bundle selection rule; ignored by the aggregate variant.
    pub prune_policy: PrunePolicy,
    pub max_iter: usize,
    pub qp: QpSettings,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rho: 1.0,
            beta: 0.5,
            eps: 1e-6,
            variant: Variant::Aggregate,
            prune_policy: PrunePolicy::KeepAll,
            max_iter: 100_000,
            qp: QpSettings::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidInput(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidInput(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidInput(format!("eps must be positive, got {}", self.eps)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be at least 1".into()));
        }
        self.qp.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    Descent,
    Null,
    Stop,
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepKind::Descent => "descent",
            StepKind::Null => "null",
            StepKind::Stop => "stop",
        })
    }
}

impl FromStr for StepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "descent" => Ok(StepKind::Descent),
            "null" => Ok(StepKind::Null),
            "stop" => Ok(StepKind::Stop),
            other => Err(Error::InvalidInput(format!("unknown step kind '{other}'"))),
        }
    }
}

/// Everything observed in one iteration. Vector fields are empty when the
/// record was loaded from a CSV trace without its vector sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    /// Shared by all records of a series.
    pub center: Arc<[f64]>,
    pub z_next: Vec<f64>,
    pub f_center: f64,
    /// Oracle value at the trial point; absent on the stop record.
    pub f_znext: Option<f64>,
    pub model_val: f64,
    /// Predicted decrease `f_center - model_val`.
    pub v: f64,
    pub eta: f64,
    pub s: Vec<f64>,
    pub g_next: Option<Vec<f64>>,
    pub step_kind: StepKind,
    pub dist_sq: f64,
    /// `|s - g_next|`, kept separately so CSV traces carry it.
    pub norm_s_minus_g: Option<f64>,
}

impl IterationRecord {
    pub fn has_vectors(&self) -> bool {
        !self.center.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Converged,
    MaxIter,
    QpFailure,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Converged => "Converged",
            Status::MaxIter => "MaxIter",
            Status::QpFailure => "QpFailure",
        })
    }
}

impl FromStr for Status {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Converged" => Ok(Status::Converged),
            "MaxIter" => Ok(Status::MaxIter),
            "QpFailure" => Ok(Status::QpFailure),
            other => Err(Error::InvalidInput(format!("unknown status '{other}'"))),
        }
    }
}

/// Full history of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub problem: String,
    pub dim: usize,
    pub config: SolverConfig,
    pub status: Status,
    pub records: Vec<IterationRecord>,
    /// Diagnostic attached to a `QpFailure`.
    pub note: Option<String>,
}

impl Trace {
    pub fn has_vectors(&self) -> bool {
        self.records.iter().all(IterationRecord::has_vectors)
    }

    pub fn descent_count(&self) -> usize {
        self.records.iter().filter(|r| r.step_kind == StepKind::Descent).count()
    }

    pub fn null_count(&self) -> usize {
        self.records.iter().filter(|r| r.step_kind == StepKind::Null).count()
    }

    /// The center in force after the last record.
    pub fn final_center(&self) -> Option<&[f64]> {
        let last = self.records.last()?;
        Some(match last.step_kind {
            StepKind::Descent => &last.z_next,
            _ => &last.center,
        })
    }

    /// Objective value at the final center.
    pub fn final_value(&self) -> Option<f64> {
        let last = self.records.last()?;
        Some(match last.step_kind {
            StepKind::Descent => last.f_znext.unwrap_or(last.f_center),
            _ => last.f_center,
        })
    }

    /// Structural checks: consecutive k from 1 and at most one stop, last.
    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.records.iter().enumerate() {
            if r.k != i + 1 {
                return Err(Error::InvalidInput(format!("record {} has k = {}", i + 1, r.k)));
            }
            if r.step_kind == StepKind::Stop && i + 1 != self.records.len() {
                return Err(Error::InvalidInput(format!("stop record at k = {} is not last", r.k)));
            }
            if r.step_kind != StepKind::Stop && r.f_znext.is_none() {
                return Err(Error::InvalidInput(format!("record {} lacks F(z)", r.k)));
            }
        }
        Ok(())
    }
}

/// Descent iff `F(z) <= F(x) - beta (F(x) - m(z))`.
pub fn descent_test(f_znext: f64, f_center: f64, model_val: f64, beta: f64) -> StepKind {
    if f_znext <= f_center - beta * (f_center - model_val) {
        StepKind::Descent
    } else {
        StepKind::Null
    }
}

/// Stop iff `v <= eps`.
pub fn stopping_test(v: f64, eps: f64) -> bool {
    v <= eps
}

/// Solver state between iterations.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub k: usize,
    pub center: Arc<[f64]>,
    pub f_center: f64,
    pub model: CuttingPlaneModel,
    pub stopped: bool,
    /// Subproblem weights of the previous iteration, used to warm start the next solve.
    pub warm_start: Vec<(PieceId, f64)>,
}

impl SolverState {
    /// Initialization: one oracle call at `x1`, model made of that single cut.
    pub fn initial(problem: &ProblemSpec, x1: &[f64], variant: Variant) -> Result<Self> {
        check_dim(problem.dim, x1.len())?;
        let (f1, g1) = problem.eval(x1)?;
        let cut = Cut::new(1, x1.to_vec(), f1, g1)?;
        Ok(SolverState {
            k: 1,
            center: x1.into(),
            f_center: f1,
            model: CuttingPlaneModel::initial(variant, cut),
            stopped: false,
            warm_start: Vec::new(),
        })
    }
}

/// One pass of the method: subproblem, stopping test, oracle call at the trial
/// point, descent test, model update.
pub fn iterate(
    state: SolverState,
    problem: &ProblemSpec,
    config: &SolverConfig,
) -> Result<(SolverState, IterationRecord)> {
    if state.stopped {
        return Err(Error::InvalidInput("the run has already stopped".into()));
    }
    let rho = config.rho;
    let sol = solve_prox_warm(&state.model, &state.center, rho, &config.qp, &state.warm_start)?;
    let v = state.f_center - sol.model_val;
    let dist = dist_sq(&sol.z_next, &state.center);

    let (k, record_center, record_f_center) = (state.k, Arc::clone(&state.center), state.f_center);
    let record = move |sol: ProxSolution| IterationRecord {
        k,
        center: record_center,
        z_next: sol.z_next,
        f_center: record_f_center,
        f_znext: None,
        model_val: sol.model_val,
        v,
        eta: sol.eta,
        s: sol.s,
        g_next: None,
        step_kind: StepKind::Stop,
        dist_sq: dist,
        norm_s_minus_g: None,
    };

    if stopping_test(v, config.eps) {
        let record = record(sol);
        let stopped = SolverState { stopped: true, ..state };
        return Ok((stopped, record));
    }

    let (f_z, g_z) = problem.eval(&sol.z_next)?;
    let kind = descent_test(f_z, state.f_center, sol.model_val, config.beta);
    let norm_s_minus_g = dist_sq(&sol.s, &g_z).sqrt();

    let new_id = state.k as u64 + 1;
    let model = match config.variant {
        Variant::MultiCut => {
            let mut model = state.model;
            model.push_cut_from(new_id, &sol.z_next, f_z, &g_z)?;
            let mut weights = sol.multipliers.clone();
            weights.push(0.0);
            model.prune_in_place(&weights, new_id, config.prune_policy, config.qp.activity_tol)?;
            model
        }
        Variant::Aggregate => {
            let mut model = state.model;
            model.aggregate_update_in_place(&sol)?;
            model.push_cut_from(new_id, &sol.z_next, f_z, &g_z)?;
            model
        }
    };

    let (center, f_center) = match kind {
        StepKind::Descent => (Arc::from(sol.z_next.as_slice()), f_z),
        _ => (Arc::clone(&state.center), state.f_center),
    };
    // two-piece aggregate subproblems are solved in closed form
    let warm_start = match config.variant {
        Variant::MultiCut => sol.piece_ids.iter().copied().zip(sol.multipliers.iter().copied()).collect(),
        Variant::Aggregate => Vec::new(),
    };
    let record = IterationRecord {
        f_znext: Some(f_z),
        g_next: Some(g_z),
        step_kind: kind,
        norm_s_minus_g: Some(norm_s_minus_g),
        ..record(sol)
    };
    let next = SolverState { k: state.k + 1, center, f_center, model, stopped: false, warm_start };
    Ok((next, record))
}

/// Runs the method from `x1` until the stopping test fires, the iteration cap
/// is reached, or the subproblem solver fails. Returns the final center.
pub fn run(problem: &ProblemSpec, x1: &[f64], config: &SolverConfig) -> Result<(Vec<f64>, Trace)> {
    run_with(problem, x1, config, |_, _| {})
}

/// [`run`] with a callback receiving each record and the state it produced.
pub fn run_with<F>(
    problem: &ProblemSpec,
    x1: &[f64],
    config: &SolverConfig,
    mut observer: F,
) -> Result<(Vec<f64>, Trace)>
where
    F: FnMut(&SolverState, &IterationRecord),
{
    config.validate()?;
    let mut state = SolverState::initial(problem, x1, config.variant)?;
    let mut trace = Trace {
        problem: problem.name.clone(),
        dim: problem.dim,
        config: config.clone(),
        status: Status::MaxIter,
        records: Vec::new(),
        note: None,
    };
    while trace.records.len() < config.max_iter {
        let center = Arc::clone(&state.center);
        match iterate(state, problem, config) {
            Ok((next, record)) => {
                observer(&next, &record);
                trace.records.push(record);
                state = next;
                if state.stopped {
                    trace.status = Status::Converged;
                    break;
                }
            }
            Err(e @ Error::QpConvergence { .. }) => {
                trace.status = Status::QpFailure;
                trace.note = Some(e.to_string());
                return Ok((center.to_vec(), trace));
            }
            Err(e) => return Err(e),
        }
    }
    Ok((state.center.to_vec(), trace))
}
