use serde::{Deserialize, Serialize};

use super::{estimate_m, segment_trace};
use crate::error::{Error, Result};
use crate::problems::ProblemSpec;
use crate::solver::{SolverConfig, Trace};

/// Bound on the null steps of one series next to the observed count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesBound {
    pub ell: usize,
    pub n_null: usize,
    /// The bound as computed; may be negative.
    pub bound_raw: Option<f64>,
    /// `max(bound_raw, 0)`.
    pub bound: Option<f64>,
}

/// Iteration-count bounds evaluated after the fact with the run's `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateBounds {
    /// Largest `|s-g|^2 / rho` over null steps; 0 without null steps.
    pub m_hat: f64,
    /// `1 - (1-beta)^2 eps / (2 M)`; absent when `M = 0`.
    pub gamma: Option<f64>,
    /// `(1-beta)^2 / (2 M)`.
    pub c: Option<f64>,
    pub alpha_bar: f64,
    /// Number of series (proximal centers) in the run.
    pub l_observed: usize,
    pub l_bound_raw: f64,
    /// `max(1, l_bound_raw)`.
    pub l_bound: f64,
    pub null_observed: usize,
    pub series: Vec<SeriesBound>,
    /// Total iterations, i.e. descent steps plus null steps plus the stop.
    pub total_observed: usize,
    pub total_bound: Option<f64>,
    /// The analysis assumes `eps <= M`.
    pub eps_exceeds_m: bool,
    pub notes: Vec<String>,
}

impl RateBounds {
    pub fn l_within_bound(&self) -> bool {
        self.l_observed as f64 <= self.l_bound
    }

    pub fn total_within_bound(&self) -> Option<bool> {
        self.total_bound.map(|b| self.total_observed as f64 <= b)
    }
}

/// Evaluates the descent-step, per-series and total iteration bounds.
/// `eta1` and `f1` are the first subproblem value and `F(x^1)`.
pub fn theoretical_bounds(
    trace: &Trace,
    problem: &ProblemSpec,
    config: &SolverConfig,
    eta1: f64,
    f1: f64,
) -> Result<RateBounds> {
    let reference =
        problem.reference.as_ref().ok_or_else(|| Error::InvalidInput("rate bounds need reference data".into()))?;
    let (beta, eps) = (config.beta, config.eps);
    let alpha_bar = reference.alpha.min(1.0);
    let mut notes = Vec::new();

    let m_hat = estimate_m(trace, config.rho);
    let (gamma, c) = if m_hat > 0.0 {
        let c = (1.0 - beta).powi(2) / (2.0 * m_hat);
        (Some(1.0 - eps * c), Some(c))
    } else {
        notes.push("no null steps: gamma undefined, series bounds skipped".into());
        (None, None)
    };
    let eps_exceeds_m = m_hat > 0.0 && eps > m_hat;
    if eps_exceeds_m {
        notes.push(format!("eps = {eps:e} exceeds M = {m_hat:e}"));
    }

    let initial_gap = f1 - reference.f_star;
    let contraction = (1.0 - alpha_bar * beta).ln();
    let l_bound_raw = if initial_gap > 0.0 {
        1.0 + ((beta * eps).ln() - initial_gap.ln()) / contraction
    } else {
        notes.push("the start is optimal".into());
        1.0
    };

    let segments = segment_trace(trace);
    let big_l = segments.len();
    let series = segments
        .iter()
        .enumerate()
        .map(|(i, seg)| {
            let raw = gamma.map(|g| {
                let ratio = if big_l == 1 {
                    // a single series runs until the gap drops below eps/2
                    0.5 * eps / (f1 - eta1)
                } else if i == 0 {
                    alpha_bar * (f1 - segments[1].f_center) / (f1 - eta1)
                } else if i + 1 < big_l {
                    let prev = segments[i - 1].f_center;
                    let next = segments[i + 1].f_center;
                    2.0 * beta * alpha_bar / 3.0 * (seg.f_center - next) / (prev - seg.f_center)
                } else {
                    beta / 3.0 * eps / (segments[i - 1].f_center - seg.f_center)
                };
                1.0 + ratio.ln() / g.ln()
            });
            SeriesBound { ell: seg.ell, n_null: seg.n_null, bound_raw: raw, bound: raw.map(|b| b.max(0.0)) }
        })
        .collect();

    let total_bound = c.map(|c| {
        let logs = alpha_bar.ln() + (2.0 * beta * alpha_bar / 3.0).ln() + (beta / 3.0).ln();
        (initial_gap / (beta * eps)).ln() * logs / (eps * c * contraction)
            + ((f1 - eta1) / eps).ln() / (eps * c)
            + 2.0 * ((beta * eps).ln() - initial_gap.ln()) / contraction
            + 2.0
    });

    Ok(RateBounds {
        m_hat,
        gamma,
        c,
        alpha_bar,
        l_observed: big_l,
        l_bound_raw,
        l_bound: l_bound_raw.max(1.0),
        null_observed: trace.null_count(),
        series,
        total_observed: trace.records.len(),
        total_bound,
        eps_exceeds_m,
        notes,
    })
}
