//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! PASS/FAIL line per criterion and exits nonzero when any criterion fails.
//!
//! Details for failing cases are printed above the summary.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use proxbundle::analysis::{
    check_moreau_bound, check_trace, fit_rate, names, run_sweep, theoretical_bounds, CheckStatus,
};
use proxbundle::linalg::dist_sq;
use proxbundle::model::{Cut, CuttingPlaneModel, Variant};
use proxbundle::problems::{builtin, ProblemSpec};
use proxbundle::proxqp::{brute_force_prox, certified_box, solve_prox, QpSettings};
use proxbundle::solver::{run, run_with, SolverConfig, Status, StepKind, Trace};

const CORPUS: [(&str, usize); 8] = [
    ("l1quad", 1),
    ("l1quad", 10),
    ("maxq", 2),
    ("maxq", 10),
    ("maxq", 50),
    ("maxquad", 2),
    ("maxquad", 5),
    ("norm-plus-quad", 3),
];
const BETAS: [f64; 3] = [0.3, 0.5, 0.9];
const EPS: f64 = 1e-6;
/// Large enough that every corpus run stops through the stopping test; the
/// aggregate variant needs millions of null steps on the random quadratics.
const MAX_ITER: usize = 20_000_000;
const RUN_TIME_LIMIT: Duration = Duration::from_secs(10);

const INEQUALITY_SLACK: f64 = 1e-8;
const MOREAU_SLACK: f64 = 1e-7;
const MOREAU_ACCURACY: f64 = 1e-10;
const INVARIANT_TOL: f64 = 1e-9;
const MINORANT_POINTS: usize = 1000;

/// Convergence inequalities required to hold on every run.
const INEQUALITY_SUITE: [&str; 9] = [
    names::NULL_INCREMENT,
    names::DESCENT_ETA_CHANGE,
    names::DESCENT_DECREASE,
    names::HALF_PREDICTED,
    names::GAP_VS_OPTIMALITY,
    names::DESCENT_CONTRACTION,
    names::NULL_CONTRACTION,
    names::SERIES_START,
    names::ITERATE_BOUND,
];

/// Entries a downward change of a single post-null-step `eta` may trip.
const ETA_SENSITIVE: [&str; 4] =
    [names::NULL_INCREMENT, names::NULL_INCREMENT_TWO_CUT, names::NULL_INCREMENT_BUNDLE, names::NULL_CONTRACTION];

#[derive(Default)]
struct Criterion {
    checked: usize,
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Criterion {
    fn record(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.failures.push(what());
        }
    }

    fn passed(&self) -> bool {
        self.checked > 0 && self.failures.is_empty()
    }
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut c = (0..8).map(|_| Criterion::default()).collect::<Vec<_>>();

    for (name, dim) in CORPUS {
        let problem = builtin(name, Some(dim), 0).expect("corpus problem builds");
        for variant in [Variant::MultiCut, Variant::Aggregate] {
            for beta in BETAS {
                let config = SolverConfig { beta, variant, eps: EPS, max_iter: MAX_ITER, ..Default::default() };
                corpus_run(&problem, &config, &mut c);
            }
        }
    }
    rate_envelope(&mut c[4]);
    qp_equivalence(&mut c[5]);

    let titles = [
        "termination accuracy",
        "inequality suite",
        "envelope bound at centers",
        "counting bounds",
        "rate envelope",
        "QP oracle equivalence",
        "minorant and exactness invariants",
        "planted-violation sensitivity",
    ];
    for (i, crit) in c.iter().enumerate() {
        for f in crit.failures.iter().take(20) {
            println!("  criterion {}: {f}", i + 1);
        }
        if crit.failures.len() > 20 {
            println!("  criterion {}: ... {} more", i + 1, crit.failures.len() - 20);
        }
        for n in &crit.notes {
            println!("  criterion {}: note: {n}", i + 1);
        }
    }
    println!();
    for (i, (crit, title)) in c.iter().zip(titles).enumerate() {
        println!(
            "criterion {} {title}: {} ({}/{} cases)",
            i + 1,
            if crit.passed() { "PASS" } else { "FAIL" },
            crit.checked - crit.failures.len(),
            crit.checked
        );
    }
    println!("acceptance suite finished in {:.1} s", started.elapsed().as_secs_f64());
    if c.iter().all(Criterion::passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

/// One corpus run feeding criteria 1 to 4, 7 and 8.
fn corpus_run(problem: &ProblemSpec, config: &SolverConfig, c: &mut [Criterion]) {
    let label = format!("{} {} beta={}", problem.name, config.variant, config.beta);
    let reference = problem.reference.clone().expect("corpus problems carry reference data");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut invariants = InvariantLog::default();

    // timed without instrumentation; the observed rerun is deterministic and
    // yields the same trace
    let t0 = Instant::now();
    let timed = run(problem, &problem.default_x1, config);
    let elapsed = t0.elapsed();
    drop(timed);

    let outcome = run_with(problem, &problem.default_x1, config, |state, rec| {
        invariants.observe(problem, state, rec, &mut rng);
    });
    let (x, trace) = match outcome {
        Ok(r) => r,
        Err(e) => {
            for crit in c.iter_mut() {
                crit.record(false, || format!("{label}: run failed: {e}"));
            }
            return;
        }
    };
    println!("run {label}: {} iterations, {:?}, {:.2} s", trace.records.len(), trace.status, elapsed.as_secs_f64());

    // 1: termination accuracy and run time
    let gap = problem.value(&x).expect("final center evaluates") - reference.f_star;
    let allowed = EPS / reference.alpha.min(1.0) + 1e-9 * (1.0 + reference.f_star.abs());
    c[0].record(trace.status == Status::Converged && gap <= allowed && elapsed < RUN_TIME_LIMIT, || {
        format!(
            "{label}: status {:?}, gap {gap:.3e} (allowed {allowed:.3e}), {:.2} s",
            trace.status,
            elapsed.as_secs_f64()
        )
    });

    // 2: inequality suite
    let report = check_trace(&trace, problem, config, INEQUALITY_SLACK);
    for name in INEQUALITY_SUITE {
        let e = report.get(name).expect("entry present");
        c[1].record(e.status != CheckStatus::Failed, || {
            format!(
                "{label}: {name} {}/{} worst margin {:?} at k={:?}",
                e.count_passed, e.count_checked, e.worst_margin, e.worst_k
            )
        });
    }

    // 3: envelope bound at every center, 1D and 2D problems
    if problem.dim <= 2 {
        let (stated, halved) = check_moreau_bound(&trace, problem, config.rho, MOREAU_SLACK, MOREAU_ACCURACY);
        c[2].record(stated.status != CheckStatus::Failed, || {
            format!(
                "{label}: {} centers pass {}/{}, worst margin {:?} at k={:?}; halved form {:?} ({}/{})",
                stated.name,
                stated.count_passed,
                stated.count_checked,
                stated.worst_margin,
                stated.worst_k,
                halved.status,
                halved.count_passed,
                halved.count_checked
            )
        });
    }

    // 4: counting bounds
    let first = &trace.records[0];
    match theoretical_bounds(&trace, problem, config, first.eta, first.f_center) {
        Ok(b) => {
            let total_ok = b.total_within_bound();
            let ok = b.l_within_bound() && (b.eps_exceeds_m || total_ok == Some(true));
            if b.eps_exceeds_m {
                c[3].notes.push(format!("{label}: eps exceeds the estimated M, total bound annotated"));
            }
            c[3].record(ok, || {
                format!(
                    "{label}: L {} vs bound {:.3e}, total {} vs bound {:?}",
                    b.l_observed, b.l_bound, b.total_observed, b.total_bound
                )
            });
        }
        Err(e) => c[3].record(false, || format!("{label}: bounds unavailable: {e}")),
    }

    // 7: invariants observed during the run
    c[6].record(invariants.violations.is_empty() && invariants.sampled == MINORANT_POINTS, || {
        format!(
            "{label}: {} violations over {} minorant samples and {} null steps; first: {:?}",
            invariants.violations.len(),
            invariants.sampled,
            invariants.null_steps,
            invariants.violations.first()
        )
    });

    // 8: planted eta drops
    planted_drops(&label, problem, config, trace, &report.failed(), &mut c[7]);
}

#[derive(Default)]
struct InvariantLog {
    sampled: usize,
    null_steps: usize,
    violations: Vec<String>,
}

impl InvariantLog {
    /// Model minorant sampling at iterations 1, 2, 4, 8, ... (40 points each)
    /// topped up to 1000 points at the final model, and null-step exactness
    /// at every null step.
    fn observe(
        &mut self,
        problem: &ProblemSpec,
        state: &proxbundle::solver::SolverState,
        rec: &proxbundle::solver::IterationRecord,
        rng: &mut ChaCha8Rng,
    ) {
        if rec.step_kind == StepKind::Null {
            self.null_steps += 1;
            let f = rec.f_znext.expect("null step has a trial value");
            let (m, _) = state.model.evaluate(&rec.z_next).expect("model evaluates");
            if (m - f).abs() > INVARIANT_TOL * (1.0 + f.abs()) {
                self.violations.push(format!("k={}: model {m:.17e} vs F {f:.17e} at the new trial point", rec.k));
            }
        }
        let last_k = rec.step_kind == StepKind::Stop;
        if (rec.k.is_power_of_two() || last_k) && self.sampled < MINORANT_POINTS {
            let remaining = MINORANT_POINTS - self.sampled;
            let count = if last_k { remaining } else { 40.min(remaining) };
            for i in 0..count {
                let x: Vec<f64> = if i % 2 == 0 {
                    problem.bounds.sample(rng)
                } else {
                    state.center.iter().map(|c| c + rng.gen_range(-0.5..0.5)).collect()
                };
                let f = problem.value(&x).expect("oracle evaluates");
                let (m, _) = state.model.evaluate(&x).expect("model evaluates");
                if m > f + INVARIANT_TOL * (1.0 + f.abs()) {
                    self.violations.push(format!("k={}: model {m:.17e} exceeds F {f:.17e}", rec.k));
                }
                self.sampled += 1;
            }
        }
    }
}

/// Lowers `eta^{k+1}` by `1e-6 (1 + |eta|)` after a null step `k` and
/// requires the newly failing entries to be eta-sensitive, with at least one
/// increment entry among them. Every null step is tried on short runs, five
/// spread-out ones otherwise.
fn planted_drops(
    label: &str,
    problem: &ProblemSpec,
    config: &SolverConfig,
    mut trace: Trace,
    clean_failures: &[&str],
    crit: &mut Criterion,
) {
    let clean: BTreeSet<String> = clean_failures.iter().map(|s| s.to_string()).collect();
    let nulls: Vec<usize> = trace
        .records
        .iter()
        .enumerate()
        .filter(|(i, r)| r.step_kind == StepKind::Null && i + 1 < trace.records.len())
        .map(|(i, _)| i)
        .collect();
    if nulls.is_empty() {
        return;
    }
    let picks: Vec<usize> = if trace.records.len() <= 100 {
        nulls.clone()
    } else {
        let n = nulls.len();
        let mut p: Vec<usize> = (0..5).map(|j| nulls[j * (n - 1) / 4]).collect();
        p.dedup();
        p
    };
    for i in picks {
        let original = trace.records[i + 1].eta;
        trace.records[i + 1].eta = original - 1e-6 * (1.0 + original.abs());
        let report = check_trace(&trace, problem, config, INEQUALITY_SLACK);
        trace.records[i + 1].eta = original;

        let newly: Vec<String> =
            report.failed().into_iter().map(str::to_string).filter(|n| !clean.contains(n)).collect();
        let only_sensitive = newly.iter().all(|n| ETA_SENSITIVE.contains(&n.as_str()));
        let increment_caught = newly.iter().any(|n| n != names::NULL_CONTRACTION);
        let k = trace.records[i].k;
        crit.record(only_sensitive && increment_caught, || {
            format!("{label}: drop after null step k={k} newly fails {newly:?}")
        });
    }
}

/// Sweeps on l1quad and maxq: the ratio `N / ((1/eps) ln(1/eps))` may grow by
/// at most 10% from each tolerance to the next smaller one.
fn rate_envelope(crit: &mut Criterion) {
    let eps_list = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
    for name in ["l1quad", "maxq"] {
        let problem = builtin(name, None, 0).expect("corpus problem builds");
        let sweep = match run_sweep(&problem, &problem.default_x1, &SolverConfig::default(), &eps_list) {
            Ok(s) => s,
            Err(e) => {
                crit.record(false, || format!("{name}: sweep failed: {e}"));
                continue;
            }
        };
        let points: Vec<(f64, usize)> = sweep.rows.iter().map(|r| (r.eps, r.total)).collect();
        let all_ok = sweep.rows.iter().all(|r| r.ok());
        match fit_rate(&points) {
            Ok(fit) => {
                let growth_ok = fit.ratios.windows(2).all(|w| w[1] <= 1.1 * w[0]);
                crit.record(all_ok && fit.max_ratio.is_finite() && growth_ok, || {
                    format!("{}: totals {:?}, ratios {:?}", problem.name, points, fit.ratios)
                });
            }
            Err(e) => crit.record(false, || format!("{}: fit failed: {e}", problem.name)),
        }
    }
}

/// Random bundles in 1 and 2 dimensions: the active-set solution matches a
/// 4001-point-per-axis grid search within the grid's error bound, the grid
/// minimizer lies within the strong-convexity radius of the solution, and the
/// KKT residual is at most 1e-10.
fn qp_equivalence(crit: &mut Criterion) {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let settings = QpSettings::default();
    let mut beyond_two_steps = 0;
    for case in 0..200 {
        let dim = 1 + case % 2;
        let cuts = rng.gen_range(1..=8);
        let model = CuttingPlaneModel::from_cuts(
            (0..cuts)
                .map(|j| {
                    let z: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
                    let g: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
                    Cut::new(j as u64 + 1, z, rng.gen_range(-1.0..1.0), g).expect("finite cut")
                })
                .collect(),
        )
        .expect("valid bundle");
        let center: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let rho = rng.gen_range(0.2..5.0);

        let sol = match solve_prox(&model, &center, rho, &settings) {
            Ok(s) => s,
            Err(e) => {
                crit.record(false, || format!("case {case}: solve failed: {e}"));
                continue;
            }
        };
        let bounds = certified_box(&model, &center, rho);
        let grid = brute_force_prox(&model, &center, rho, &bounds, 4001).expect("grid search runs");
        let diff = (sol.eta - grid.eta).abs();
        let bound = grid.error_bound() + 1e-12 * (1.0 + grid.eta.abs());
        // strong convexity puts the grid minimizer within this radius of the true one
        let gap = (grid.eta - sol.eta).max(0.0) + 1e-14 * (1.0 + grid.eta.abs());
        let radius = (2.0 * gap / rho).sqrt();
        let dz = dist_sq(&sol.z_next, &grid.z).sqrt();
        let per_axis = sol.z_next.iter().zip(&grid.z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if per_axis > 2.0 * grid.step {
            beyond_two_steps += 1;
        }
        crit.record(diff <= bound && dz <= radius && sol.kkt_residual <= 1e-10, || {
            format!(
                "case {case} (dim {dim}, {cuts} cuts): eta {:.17e} vs grid {:.17e}, bound {bound:.3e}, \
                 |z - z_grid| {dz:.3e} vs radius {radius:.3e}, kkt {:.3e}",
                sol.eta, grid.eta, sol.kkt_residual
            )
        });
    }
    crit.notes.push(format!(
        "grid minimizer more than two grid steps from the solution on some axis in {beyond_two_steps}/200 cases"
    ));
    let elapsed = started.elapsed();
    crit.record(elapsed < Duration::from_secs(60), || format!("took {:.1} s", elapsed.as_secs_f64()));
    crit.notes.push(format!("200 random bundles in {:.1} s", elapsed.as_secs_f64()));
}
