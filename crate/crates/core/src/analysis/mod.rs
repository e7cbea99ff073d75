//! Verification of the method's convergence inequalities on recorded runs,
//! and the iteration-count bounds they imply.

mod bounds;
mod checks;
mod moreau;
mod sweep;

use serde::{Deserialize, Serialize};

pub use bounds::{theoretical_bounds, RateBounds, SeriesBound};
pub use checks::{
    check_descent_contraction, check_descent_steps, check_gap_vs_optimality, check_half_predicted, check_iterate_bound,
    check_moreau_bound, check_null_contraction, check_null_increment, check_null_increment_bundle,
    check_null_increment_two_cut, check_series_start, check_termination, check_trace, names, CheckEntry, CheckReport,
    CheckStatus, DEFAULT_SLACK,
};
pub use moreau::{moreau_bracket, moreau_ref, MoreauBracket};
pub use sweep::{run_sweep, Sweep, SweepRow};

use crate::error::{Error, Result};
use crate::solver::{StepKind, Trace};

/// Guaranteed fraction of the null-step increment:
/// `min{1, (1-beta) rho v / |s-g|^2}`, equal to 1 when `s = g`.
pub fn mu_bar(v: f64, norm_s_minus_g_sq: f64, rho: f64, beta: f64) -> f64 {
    if norm_s_minus_g_sq == 0.0 {
        return 1.0;
    }
    ((1.0 - beta) * rho * v / norm_s_minus_g_sq).min(1.0)
}

/// `t^2` on `[0, 1]` and `2t - 1` beyond.
pub fn phi(t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidInput(format!("phi is defined for t >= 0, got {t}")));
    }
    Ok(if t <= 1.0 { t * t } else { 2.0 * t - 1.0 })
}

/// `t^2 / 2` on `[0, 1]` and `t - 1/2` beyond; half of [`phi`].
pub fn psi(t: f64) -> Result<f64> {
    phi(t).map(|v| 0.5 * v)
}

/// A maximal run of iterations sharing one proximal center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSegment {
    /// 1-based series index.
    pub ell: usize,
    /// The common center; empty when the trace carries no vectors.
    pub center: Vec<f64>,
    pub f_center: f64,
    pub first_k: usize,
    pub last_k: usize,
    pub n_null: usize,
    /// Kind of the segment's last record.
    pub ends_with: StepKind,
}

impl SeriesSegment {
    pub fn len(&self) -> usize {
        self.last_k - self.first_k + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Splits a trace into series. The center changes exactly after a descent
/// record, so a new series starts after each one.
pub fn segment_trace(trace: &Trace) -> Vec<SeriesSegment> {
    let mut out: Vec<SeriesSegment> = Vec::new();
    let mut open: Option<SeriesSegment> = None;
    for r in &trace.records {
        let seg = open.get_or_insert_with(|| SeriesSegment {
            ell: out.len() + 1,
            center: r.center.to_vec(),
            f_center: r.f_center,
            first_k: r.k,
            last_k: r.k,
            n_null: 0,
            ends_with: r.step_kind,
        });
        seg.last_k = r.k;
        seg.ends_with = r.step_kind;
        if r.step_kind == StepKind::Null {
            seg.n_null += 1;
        }
        if r.step_kind != StepKind::Null {
            out.extend(open.take());
        }
    }
    out.extend(open);
    out
}

/// `max |s - g|^2 / rho` over null-step records, or 0 without null steps.
pub fn estimate_m(trace: &Trace, rho: f64) -> f64 {
    trace
        .records
        .iter()
        .filter(|r| r.step_kind == StepKind::Null)
        .filter_map(|r| r.norm_s_minus_g)
        .map(|n| n * n / rho)
        .fold(0.0, f64::max)
}

/// Fit of iteration counts against `(1/eps) ln(1/eps)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Least-squares `c` in `N ≈ c (1/eps) ln(1/eps)`.
    pub fit_constant: f64,
    /// Largest `N / ((1/eps) ln(1/eps))`.
    pub max_ratio: f64,
    /// The ratio at each sweep point, in input order.
    pub ratios: Vec<f64>,
}

/// `sweep` holds `(eps, total iterations)` with `eps` strictly decreasing in `(0, 1)`.
pub fn fit_rate(sweep: &[(f64, usize)]) -> Result<RateFit> {
    if sweep.len() < 3 {
        return Err(Error::InvalidInput(format!("a rate fit needs at least 3 points, got {}", sweep.len())));
    }
    if sweep.iter().any(|(e, _)| !(*e > 0.0 && *e < 1.0)) {
        return Err(Error::InvalidInput("sweep tolerances must lie in (0, 1)".into()));
    }
    if sweep.windows(2).any(|w| w[1].0 >= w[0].0) {
        return Err(Error::InvalidInput("sweep tolerances must be strictly decreasing".into()));
    }
    let scale = |e: f64| (1.0 / e) * (1.0 / e).ln();
    let ratios: Vec<f64> = sweep.iter().map(|(e, n)| *n as f64 / scale(*e)).collect();
    let num: f64 = sweep.iter().map(|(e, n)| *n as f64 * scale(*e)).sum();
    let den: f64 = sweep.iter().map(|(e, _)| scale(*e).powi(2)).sum();
    Ok(RateFit { fit_constant: num / den, max_ratio: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max), ratios })
}
