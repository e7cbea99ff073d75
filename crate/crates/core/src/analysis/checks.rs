//! Inequality checks on recorded runs.
//!
//! Each check evaluates `lhs >= rhs` (or `lhs <= rhs`) with the relative
//! allowance `slack (1 + |rhs|)`. The margin is the signed distance to
//! failure: negative means violated.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{estimate_m, moreau_bracket, phi, psi, segment_trace};
use crate::linalg::dist_sq;
use crate::model::{Cut, CuttingPlaneModel, PieceId, PrunePolicy, Variant};
use crate::problems::{ProblemSpec, Reference};
use crate::proxqp::solve_prox_warm;
use crate::solver::{SolverConfig, StepKind, Trace};

pub const DEFAULT_SLACK: f64 = 1e-8;

/// Accuracy of envelope values used by the envelope checks.
const MOREAU_ACCURACY: f64 = 1e-10;

/// Centers checked against the envelope bound above dimension 2.
const MOREAU_SAMPLE: usize = 10;

pub mod names {
    pub const NULL_INCREMENT: &str = "null_step_increment";
    pub const NULL_INCREMENT_TWO_CUT: &str = "null_step_increment_two_cut";
    pub const NULL_INCREMENT_BUNDLE: &str = "null_step_increment_bundle";
    pub const DESCENT_ETA_CHANGE: &str = "descent_eta_change";
    pub const DESCENT_DECREASE: &str = "descent_sufficient_decrease";
    pub const HALF_PREDICTED: &str = "gap_half_predicted";
    pub const MOREAU_BOUND: &str = "moreau_bound";
    pub const MOREAU_BOUND_HALVED: &str = "moreau_bound_halved";
    pub const GAP_VS_OPTIMALITY: &str = "gap_vs_optimality";
    pub const TERMINATION: &str = "termination_accuracy";
    pub const DESCENT_CONTRACTION: &str = "descent_contraction";
    pub const NULL_CONTRACTION: &str = "null_step_contraction";
    pub const SERIES_START: &str = "series_start_gap";
    pub const ITERATE_BOUND: &str = "iterate_bound";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Passed,
    Failed,
    /// Not applicable: missing reference data, vectors, or instances.
    Skipped,
    /// Evaluated, but a stated precondition does not hold, so violations
    /// are reported without failing.
    Annotated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub name: String,
    pub count_checked: usize,
    pub count_passed: usize,
    /// Smallest margin seen; negative means violated.
    pub worst_margin: Option<f64>,
    /// Iteration at which the worst margin occurred.
    pub worst_k: Option<usize>,
    pub tolerance: f64,
    pub status: CheckStatus,
    pub note: Option<String>,
}

impl CheckEntry {
    fn skipped(name: &str, slack: f64, note: impl Into<String>) -> Self {
        CheckEntry {
            name: name.into(),
            count_checked: 0,
            count_passed: 0,
            worst_margin: None,
            worst_k: None,
            tolerance: slack,
            status: CheckStatus::Skipped,
            note: Some(note.into()),
        }
    }

    pub fn violations(&self) -> usize {
        self.count_checked - self.count_passed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub problem: String,
    pub slack: f64,
    pub entries: Vec<CheckEntry>,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(|e| e.status != CheckStatus::Failed)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.entries.iter().filter(|e| e.status == CheckStatus::Failed).map(|e| e.name.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&CheckEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

struct Tally {
    name: &'static str,
    slack: f64,
    checked: usize,
    passed: usize,
    worst: Option<(f64, usize)>,
}

impl Tally {
    fn new(name: &'static str, slack: f64) -> Self {
        Tally { name, slack, checked: 0, passed: 0, worst: None }
    }

    fn record(&mut self, k: usize, margin: f64) {
        let margin = if margin.is_nan() { f64::NEG_INFINITY } else { margin };
        self.checked += 1;
        if margin >= 0.0 {
            self.passed += 1;
        }
        if self.worst.is_none_or(|(m, _)| margin < m) {
            self.worst = Some((margin, k));
        }
    }

    /// `lhs >= rhs`
    fn ge(&mut self, k: usize, lhs: f64, rhs: f64) {
        self.record(k, lhs - rhs + self.slack * (1.0 + rhs.abs()));
    }

    /// `lhs <= rhs`
    fn le(&mut self, k: usize, lhs: f64, rhs: f64) {
        self.record(k, rhs - lhs + self.slack * (1.0 + rhs.abs()));
    }

    fn finish(self) -> CheckEntry {
        let status = if self.checked == 0 {
            CheckStatus::Skipped
        } else if self.passed == self.checked {
            CheckStatus::Passed
        } else {
            CheckStatus::Failed
        };
        CheckEntry {
            name: self.name.into(),
            count_checked: self.checked,
            count_passed: self.passed,
            worst_margin: self.worst.map(|w| w.0),
            worst_k: self.worst.map(|w| w.1),
            tolerance: self.slack,
            status,
            note: (self.checked == 0).then(|| "no applicable iterations".to_string()),
        }
    }
}

const NO_REFERENCE: &str = "no reference data";
const NO_VECTORS: &str = "trace has no vector data";

/// Null step `k`: `eta^{k+1} >= eta^k + ((1-beta)/2) mu_bar v`.
pub fn check_null_increment(trace: &Trace, rho: f64, beta: f64, slack: f64) -> CheckEntry {
    let mut t = Tally::new(names::NULL_INCREMENT, slack);
    for w in trace.records.windows(2) {
        let (r, next) = (&w[0], &w[1]);
        if r.step_kind != StepKind::Null {
            continue;
        }
        let nsg = r.norm_s_minus_g.unwrap_or(f64::NAN);
        let mu = super::mu_bar(r.v, nsg * nsg, rho, beta);
        t.ge(r.k, next.eta, r.eta + 0.5 * (1.0 - beta) * mu * r.v);
    }
    t.finish()
}

/// Null step `k`: `eta^{k+1} - eta^k` is at least the increase obtained by
/// adding the new cut to the aggregate linearization alone,
/// `max_{mu in [0,1]} mu (F(z) - m(z)) - mu^2 |s-g|^2 / (2 rho)`.
/// For the aggregate variant this is an equality.
pub fn check_null_increment_two_cut(trace: &Trace, rho: f64, slack: f64) -> CheckEntry {
    let mut t = Tally::new(names::NULL_INCREMENT_TWO_CUT, slack);
    for w in trace.records.windows(2) {
        let (r, next) = (&w[0], &w[1]);
        if r.step_kind != StepKind::Null {
            continue;
        }
        let delta = r.f_znext.unwrap_or(f64::NAN) - r.model_val;
        let nsg = r.norm_s_minus_g.unwrap_or(f64::NAN);
        let a = nsg * nsg / rho;
        let inc = if a == 0.0 || delta >= a { delta - 0.5 * a } else { delta * delta / (2.0 * a) };
        t.ge(r.k, next.eta, r.eta + inc);
    }
    t.finish()
}

/// Null step `k` of a keep-all multi-cut run: `eta^{k+1}` is at least the
/// prox value of the bundle rebuilt from the recorded trial points, which is
/// the whole model at `k+1`. The cut at `x^1` is re-evaluated through the
/// oracle. Other variants and policies are skipped: their bundles are not
/// recoverable from the trace.
pub fn check_null_increment_bundle(
    trace: &Trace,
    problem: &ProblemSpec,
    config: &SolverConfig,
    slack: f64,
) -> CheckEntry {
    let name = names::NULL_INCREMENT_BUNDLE;
    if config.variant != Variant::MultiCut || config.prune_policy != PrunePolicy::KeepAll {
        return CheckEntry::skipped(name, slack, "bundle not recoverable unless multi-cut keep-all");
    }
    if !trace.has_vectors() {
        return CheckEntry::skipped(name, slack, NO_VECTORS);
    }
    let Some(first) = trace.records.first() else {
        return CheckEntry::skipped(name, slack, "empty trace");
    };
    let rebuilt = (|| -> crate::Result<_> {
        let (_, g1) = problem.eval(&first.center)?;
        let mut model = CuttingPlaneModel::multi_cut(Cut::new(1, first.center.to_vec(), first.f_center, g1)?);
        let mut warm: Vec<(PieceId, f64)> = Vec::new();
        let mut bounds = Vec::new();
        for w in trace.records.windows(2) {
            let (r, next) = (&w[0], &w[1]);
            let (Some(f), Some(g)) = (r.f_znext, r.g_next.clone()) else {
                break;
            };
            model.push_cut(Cut::new(r.k as u64 + 1, r.z_next.clone(), f, g)?)?;
            if r.step_kind == StepKind::Null {
                let sol = solve_prox_warm(&model, &next.center, config.rho, &config.qp, &warm)?;
                warm = sol.piece_ids.iter().copied().zip(sol.multipliers.iter().copied()).collect();
                bounds.push((r.k, next.eta, sol.eta));
            }
        }
        Ok(bounds)
    })();
    match rebuilt {
        Ok(bounds) => {
            let mut t = Tally::new(name, slack);
            for (k, eta_next, prox_value) in bounds {
                t.ge(k, eta_next, prox_value);
            }
            t.finish()
        }
        Err(e) => CheckEntry::skipped(name, slack, format!("bundle rebuild failed: {e}")),
    }
}

/// Descent step `k`: `eta^{k+1} - eta^k >= -rho |x^{k+1} - x^k|^2` and
/// `-rho |x^{k+1} - x^k|^2 >= (F(x^{k+1}) - F(x^k)) / beta`.
pub fn check_descent_steps(trace: &Trace, rho: f64, beta: f64, slack: f64) -> (CheckEntry, CheckEntry) {
    let mut eta_change = Tally::new(names::DESCENT_ETA_CHANGE, slack);
    let mut decrease = Tally::new(names::DESCENT_DECREASE, slack);
    for (i, r) in trace.records.iter().enumerate() {
        if r.step_kind != StepKind::Descent {
            continue;
        }
        let step = -rho * r.dist_sq;
        if let Some(next) = trace.records.get(i + 1) {
            eta_change.ge(r.k, next.eta - r.eta, step);
        }
        decrease.ge(r.k, step, (r.f_znext.unwrap_or(f64::NAN) - r.f_center) / beta);
    }
    (eta_change.finish(), decrease.finish())
}

/// Every iteration: `F(x^k) - eta^k >= (F(x^k) - m(z^{k+1})) / 2`.
pub fn check_half_predicted(trace: &Trace, slack: f64) -> CheckEntry {
    let mut t = Tally::new(names::HALF_PREDICTED, slack);
    for r in &trace.records {
        t.ge(r.k, r.f_center - r.eta, 0.5 * (r.f_center - r.model_val));
    }
    t.finish()
}

/// Envelope bounds at the proximal centers of the trace:
/// `F_rho(x) <= F(x) - d^2 phi((F(x) - F*)/d^2)` with `d = |x - x*|`, and the
/// weaker `F_rho(x) <= F(x) - rho d^2 psi((F(x) - F*)/(rho d^2))`, which
/// follows from moving along the segment towards `x*`.
///
/// Centers are all series centers for dimensions up to 2 and an evenly spaced
/// sample of `MOREAU_SAMPLE` of them otherwise. Centers equal to `x*` are skipped.
pub fn check_moreau_bound(
    trace: &Trace,
    problem: &ProblemSpec,
    rho: f64,
    slack: f64,
    accuracy: f64,
) -> (CheckEntry, CheckEntry) {
    let Some(reference) = &problem.reference else {
        return (
            CheckEntry::skipped(names::MOREAU_BOUND, slack, NO_REFERENCE),
            CheckEntry::skipped(names::MOREAU_BOUND_HALVED, slack, NO_REFERENCE),
        );
    };
    if !trace.has_vectors() {
        return (
            CheckEntry::skipped(names::MOREAU_BOUND, slack, NO_VECTORS),
            CheckEntry::skipped(names::MOREAU_BOUND_HALVED, slack, NO_VECTORS),
        );
    }
    let segments = segment_trace(trace);
    let mut chosen: Vec<_> = segments.iter().collect();
    if problem.dim > 2 && chosen.len() > MOREAU_SAMPLE {
        let n = chosen.len();
        chosen = (0..MOREAU_SAMPLE).map(|i| &segments[i * (n - 1) / (MOREAU_SAMPLE - 1)]).collect();
        chosen.dedup_by_key(|s| s.ell);
    }
    let evaluated: Vec<_> = chosen
        .par_iter()
        .filter_map(|seg| {
            let d2 = dist_sq(&seg.center, &reference.x_star);
            if d2 == 0.0 {
                return None;
            }
            Some((seg.first_k, seg.f_center, d2, moreau_bracket(problem, &seg.center, rho, accuracy)))
        })
        .collect();

    let mut stated = Tally::new(names::MOREAU_BOUND, slack);
    let mut halved = Tally::new(names::MOREAU_BOUND_HALVED, slack);
    let mut failures = Vec::new();
    for (k, f, d2, bracket) in evaluated {
        let env = match bracket {
            Ok(b) => b.upper,
            Err(e) => {
                failures.push(format!("k = {k}: {e}"));
                f64::NAN
            }
        };
        let gap = (f - reference.f_star).max(0.0);
        stated.le(k, env, f - d2 * phi(gap / d2).unwrap_or(f64::NAN));
        halved.le(k, env, f - rho * d2 * psi(gap / (rho * d2)).unwrap_or(f64::NAN));
    }
    let (mut a, mut b) = (stated.finish(), halved.finish());
    if !failures.is_empty() {
        let note = format!("envelope evaluation failed: {}", failures.join("; "));
        a.note = Some(note.clone());
        b.note = Some(note);
    }
    (a, b)
}

fn alpha_bar(r: &Reference) -> f64 {
    r.alpha.min(1.0)
}

/// Every iteration: `F(x^k) - F* <= (F(x^k) - eta^k) / min(alpha, 1)`.
pub fn check_gap_vs_optimality(trace: &Trace, problem: &ProblemSpec, slack: f64) -> CheckEntry {
    let Some(r) = &problem.reference else {
        return CheckEntry::skipped(names::GAP_VS_OPTIMALITY, slack, NO_REFERENCE);
    };
    let mut t = Tally::new(names::GAP_VS_OPTIMALITY, slack);
    for rec in &trace.records {
        t.le(rec.k, rec.f_center - r.f_star, (rec.f_center - rec.eta) / alpha_bar(r));
    }
    t.finish()
}

/// At the stopping iteration: `F(x^K) - F* <= eps / min(alpha, 1)`.
pub fn check_termination(trace: &Trace, problem: &ProblemSpec, eps: f64, slack: f64) -> CheckEntry {
    let Some(r) = &problem.reference else {
        return CheckEntry::skipped(names::TERMINATION, slack, NO_REFERENCE);
    };
    let mut t = Tally::new(names::TERMINATION, slack);
    match trace.records.last() {
        Some(last) if last.step_kind == StepKind::Stop => {
            t.le(last.k, last.f_center - r.f_star, eps / alpha_bar(r));
        }
        _ => return CheckEntry::skipped(names::TERMINATION, slack, "the run did not stop"),
    }
    t.finish()
}

/// Descent step: `F(z^{k+1}) - F* <= (1 - min(alpha,1) beta)(F(x^k) - F*)`.
pub fn check_descent_contraction(trace: &Trace, problem: &ProblemSpec, beta: f64, slack: f64) -> CheckEntry {
    let Some(r) = &problem.reference else {
        return CheckEntry::skipped(names::DESCENT_CONTRACTION, slack, NO_REFERENCE);
    };
    let factor = 1.0 - alpha_bar(r) * beta;
    let mut t = Tally::new(names::DESCENT_CONTRACTION, slack);
    for rec in trace.records.iter().filter(|rec| rec.step_kind == StepKind::Descent) {
        t.le(rec.k, rec.f_znext.unwrap_or(f64::NAN) - r.f_star, factor * (rec.f_center - r.f_star));
    }
    t.finish()
}

/// Null step: `F(x^k) - eta^{k+1} <= gamma (F(x^k) - eta^k)` with
/// `gamma = 1 - (1-beta)^2 eps / (2 M)` and `M` the largest `|s-g|^2/rho`
/// over the run's null steps. Annotated when `eps > M`.
pub fn check_null_contraction(trace: &Trace, config: &SolverConfig, slack: f64) -> CheckEntry {
    let m_hat = estimate_m(trace, config.rho);
    if m_hat == 0.0 {
        return CheckEntry::skipped(names::NULL_CONTRACTION, slack, "no null steps");
    }
    let gamma = 1.0 - (1.0 - config.beta).powi(2) * config.eps / (2.0 * m_hat);
    let mut t = Tally::new(names::NULL_CONTRACTION, slack);
    for w in trace.records.windows(2) {
        let (r, next) = (&w[0], &w[1]);
        if r.step_kind == StepKind::Null {
            t.le(r.k, r.f_center - next.eta, gamma * (r.f_center - r.eta));
        }
    }
    let mut entry = t.finish();
    if config.eps > m_hat && entry.status != CheckStatus::Skipped {
        entry.status = CheckStatus::Annotated;
        entry.note = Some(format!("eps = {:e} exceeds M = {m_hat:e}", config.eps));
    }
    entry
}

/// First iteration of each series after a descent step:
/// `F(x^(l)) - eta^{k(l)} <= (3/(2 beta)) (F(x^(l-1)) - F(x^(l)))`.
pub fn check_series_start(trace: &Trace, beta: f64, slack: f64) -> CheckEntry {
    let segments = segment_trace(trace);
    let mut t = Tally::new(names::SERIES_START, slack);
    for w in segments.windows(2) {
        let (prev, seg) = (&w[0], &w[1]);
        if prev.ends_with != StepKind::Descent {
            continue;
        }
        let eta = trace.records[seg.first_k - 1].eta;
        t.le(seg.first_k, seg.f_center - eta, 1.5 / beta * (prev.f_center - seg.f_center));
    }
    t.finish()
}

/// Every center: `|x^k - x*|^2 <= |x^1 - x*|^2 + 2(1-beta)/(beta rho) (F(x^1) - F*)`.
pub fn check_iterate_bound(trace: &Trace, problem: &ProblemSpec, rho: f64, beta: f64, slack: f64) -> CheckEntry {
    let Some(r) = &problem.reference else {
        return CheckEntry::skipped(names::ITERATE_BOUND, slack, NO_REFERENCE);
    };
    if !trace.has_vectors() {
        return CheckEntry::skipped(names::ITERATE_BOUND, slack, NO_VECTORS);
    }
    let Some(first) = trace.records.first() else {
        return CheckEntry::skipped(names::ITERATE_BOUND, slack, "empty trace");
    };
    let bound = dist_sq(&first.center, &r.x_star) + 2.0 * (1.0 - beta) / (beta * rho) * (first.f_center - r.f_star);
    let mut t = Tally::new(names::ITERATE_BOUND, slack);
    for rec in &trace.records {
        t.le(rec.k, dist_sq(&rec.center, &r.x_star), bound);
    }
    t.finish()
}

/// Runs every check. Violations are reported, never raised.
pub fn check_trace(trace: &Trace, problem: &ProblemSpec, config: &SolverConfig, slack: f64) -> CheckReport {
    let (rho, beta) = (config.rho, config.beta);
    let (eta_change, decrease) = check_descent_steps(trace, rho, beta, slack);
    let (moreau, moreau_halved) = check_moreau_bound(trace, problem, rho, slack, MOREAU_ACCURACY);
    let entries = vec![
        check_null_increment(trace, rho, beta, slack),
        check_null_increment_two_cut(trace, rho, slack),
        check_null_increment_bundle(trace, problem, config, slack),
        eta_change,
        decrease,
        check_half_predicted(trace, slack),
        moreau,
        moreau_halved,
        check_gap_vs_optimality(trace, problem, slack),
        check_termination(trace, problem, config.eps, slack),
        check_descent_contraction(trace, problem, beta, slack),
        check_null_contraction(trace, config, slack),
        check_series_start(trace, beta, slack),
        check_iterate_bound(trace, problem, rho, beta, slack),
    ];
    CheckReport { problem: trace.problem.clone(), slack, entries }
}
