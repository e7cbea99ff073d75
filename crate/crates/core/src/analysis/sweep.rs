use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_rate, segment_trace, theoretical_bounds, RateFit};
use crate::error::{Error, Result};
use crate::problems::ProblemSpec;
use crate::solver::{run, SolverConfig, Status};

/// One run of an accuracy sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub status: Option<Status>,
    /// Number of series (proximal centers).
    pub series: usize,
    pub null_steps: usize,
    pub total: usize,
    pub l_bound: Option<f64>,
    pub total_bound: Option<f64>,
    pub gamma: Option<f64>,
    pub m_hat: Option<f64>,
    /// Set when the run failed or did not converge.
    pub error: Option<String>,
}

impl SweepRow {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub problem: String,
    pub rows: Vec<SweepRow>,
    /// Fit over the converged rows, when there are at least 3.
    pub fit: Option<RateFit>,
}

/// Runs the method once per tolerance (in parallel) from `x1`, keeping
/// every other setting of `base`. Rows come back in the order of `eps_list`,
/// which must hold at least 3 strictly decreasing values in `(0, 1)`.
pub fn run_sweep(problem: &ProblemSpec, x1: &[f64], base: &SolverConfig, eps_list: &[f64]) -> Result<Sweep> {
    if eps_list.len() < 3 {
        return Err(Error::InvalidInput(format!("a sweep needs at least 3 tolerances, got {}", eps_list.len())));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) || eps_list.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(Error::InvalidInput("sweep tolerances must be strictly decreasing within (0, 1)".into()));
    }
    let rows: Vec<SweepRow> = eps_list
        .par_iter()
        .map(|&eps| {
            let config = SolverConfig { eps, ..base.clone() };
            let mut row = SweepRow {
                eps,
                status: None,
                series: 0,
                null_steps: 0,
                total: 0,
                l_bound: None,
                total_bound: None,
                gamma: None,
                m_hat: None,
                error: None,
            };
            let trace = match run(problem, x1, &config) {
                Ok((_, trace)) => trace,
                Err(e) => {
                    row.error = Some(e.to_string());
                    return row;
                }
            };
            row.status = Some(trace.status);
            row.series = segment_trace(&trace).len();
            row.null_steps = trace.null_count();
            row.total = trace.records.len();
            if trace.status != Status::Converged {
                row.error = Some(format!("run ended with status {}", trace.status));
            }
            if let Some(first) = trace.records.first() {
                if let Ok(b) = theoretical_bounds(&trace, problem, &config, first.eta, first.f_center) {
                    row.l_bound = Some(b.l_bound);
                    row.total_bound = b.total_bound;
                    row.gamma = b.gamma;
                    row.m_hat = Some(b.m_hat);
                }
            }
            row
        })
        .collect();
    let points: Vec<(f64, usize)> = rows.iter().filter(|r| r.ok()).map(|r| (r.eps, r.total)).collect();
    let fit = if points.len() >= 3 { Some(fit_rate(&points)?) } else { None };
    Ok(Sweep { problem: problem.name.clone(), rows, fit })
}
