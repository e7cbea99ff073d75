use proptest::prelude::*;

use proxbundle::analysis::{mu_bar, phi, psi, segment_trace};
use proxbundle::linalg::{dist_sq, dot};
use proxbundle::model::{Cut, CuttingPlaneModel, Variant};
use proxbundle::problems::{builtin, eval_oracle, ProblemSpec};
use proxbundle::proxqp::{kkt_residual, solve_prox, QpSettings};
use proxbundle::solver::{run, SolverConfig, StepKind};

fn point(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, dim)
}

/// A multi-cut model of `problem` built from cuts at the given points.
fn model_at(name: &str, dim: usize, points: &[Vec<f64>]) -> (ProblemSpec, CuttingPlaneModel) {
    let problem = builtin(name, Some(dim), 3).unwrap();
    let cuts = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (f, g) = eval_oracle(&problem, p).unwrap();
            Cut::new(i as u64 + 1, p.clone(), f, g).unwrap()
        })
        .collect();
    (problem, CuttingPlaneModel::from_cuts(cuts).unwrap())
}

fn bundle(dim: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, f64)> {
    (prop::collection::vec(point(dim), 1..8), point(dim), 0.1..10.0f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn cutting_plane_models_never_exceed_the_objective(
        name in prop::sample::select(vec!["l1quad", "maxq", "maxquad", "norm-plus-quad"]),
        (points, _, _) in bundle(3),
        probes in prop::collection::vec(point(3), 10),
    ) {
        let (problem, model) = model_at(name, 3, &points);
        for x in &probes {
            let (m, _) = model.evaluate(x).unwrap();
            let f = problem.value(x).unwrap();
            prop_assert!(m <= f + 1e-9 * (1.0 + f.abs()), "model {m} above objective {f}");
        }
        // the model is exact at every cut point
        for p in &points {
            let (m, _) = model.evaluate(p).unwrap();
            let f = problem.value(p).unwrap();
            prop_assert!(m >= f - 1e-9 * (1.0 + f.abs()));
        }
    }

    #[test]
    fn prox_solutions_satisfy_their_defining_identities(
        name in prop::sample::select(vec!["l1quad", "maxq", "maxquad", "norm-plus-quad"]),
        (points, center, rho) in (1usize..6).prop_flat_map(bundle),
    ) {
        let (_, model) = model_at(name, center.len(), &points);
        let sol = solve_prox(&model, &center, rho, &QpSettings::default()).unwrap();

        let (m, _) = model.evaluate(&sol.z_next).unwrap();
        prop_assert!((sol.model_val - m).abs() <= 1e-9 * (1.0 + m.abs()));
        let eta = m + 0.5 * rho * dist_sq(&sol.z_next, &center);
        prop_assert!((sol.eta - eta).abs() <= 1e-9 * (1.0 + eta.abs()));
        for ((si, z), c) in sol.s.iter().zip(&sol.z_next).zip(&center) {
            let s = -rho * (z - c);
            prop_assert!((si - s).abs() <= 1e-9 * (1.0 + s.abs()));
        }
        let weight: f64 = sol.multipliers.iter().sum();
        prop_assert!((weight - 1.0).abs() <= 1e-12 && sol.multipliers.iter().all(|&w| w >= 0.0));
        let kkt = kkt_residual(&model, &center, rho, &sol).unwrap();
        prop_assert!(kkt.stationarity.max(kkt.feasibility).max(kkt.complementarity) <= 1e-10, "{kkt:?}");

        // optimality: no probe point beats eta
        for t in [-1.0, -0.1, 0.1, 1.0] {
            let probe: Vec<f64> = sol.z_next.iter().zip(&center).map(|(z, c)| z + t * (c - z) + t * 0.3).collect();
            let (mp, _) = model.evaluate(&probe).unwrap();
            let value = mp + 0.5 * rho * dist_sq(&probe, &center);
            prop_assert!(value >= sol.eta - 1e-9 * (1.0 + sol.eta.abs()));
        }
        // the model subgradient s is a subgradient of the model at z_next
        let (m_center, _) = model.evaluate(&center).unwrap();
        let diff: Vec<f64> = center.iter().zip(&sol.z_next).map(|(c, z)| c - z).collect();
        prop_assert!(m_center >= sol.model_val + dot(&sol.s, &diff) - 1e-9 * (1.0 + m_center.abs()));
    }

    #[test]
    fn phi_is_continuous_monotone_and_twice_psi(t in 0.0..10.0f64, h in 1e-9..1e-3f64) {
        let a = phi(t).unwrap();
        let b = phi(t + h).unwrap();
        prop_assert!(b >= a);
        prop_assert!(b - a <= 2.0 * h * (t + h).max(1.0) + 1e-15);
        prop_assert!((psi(t).unwrap() * 2.0 - a).abs() <= 1e-15 * (1.0 + a));
        prop_assert!(a >= 2.0 * t - 1.0 - 1e-15 && (t > 1.0 || a <= t + 1e-15));
    }

    #[test]
    fn mu_bar_is_a_fraction(v in 0.0..10.0f64, n in 0.0..10.0f64, rho in 0.01..10.0f64, beta in 0.01..0.99f64) {
        let mu = mu_bar(v, n, rho, beta);
        prop_assert!((0.0..=1.0).contains(&mu));
    }

    #[test]
    fn segments_partition_the_trace(
        name in prop::sample::select(vec!["l1quad", "maxq", "maxquad", "norm-plus-quad"]),
        dim in 1usize..5,
        beta in 0.1..0.9f64,
        aggregate in any::<bool>(),
    ) {
        let problem = builtin(name, Some(dim), 1).unwrap();
        let mut config = SolverConfig { beta, eps: 1e-3, ..SolverConfig::default() };
        if !aggregate {
            config.variant = Variant::MultiCut;
        }
        let (_, trace) = run(&problem, &problem.default_x1, &config).unwrap();
        let segments = segment_trace(&trace);
        let covered: usize = segments.iter().map(|s| s.len()).sum();
        prop_assert_eq!(covered, trace.records.len());
        prop_assert_eq!(segments.len(), trace.descent_count() + 1);
        for (i, s) in segments.iter().enumerate() {
            prop_assert_eq!(s.ell, i + 1);
            prop_assert_eq!(s.n_null + 1, s.len());
            let last = i + 1 == segments.len();
            prop_assert_eq!(s.ends_with, if last { StepKind::Stop } else { StepKind::Descent });
        }
    }
}
