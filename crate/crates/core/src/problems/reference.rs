use rayon::prelude::*;

use super::ProblemSpec;
use crate::error::{Error, Result};
use crate::linalg::BoxBounds;
use crate::model::{PrunePolicy, Variant};
use crate::solver::{run, SolverConfig};

const REFERENCE_MAX_ITER: usize = 20_000;

/// High-accuracy estimate of the minimizer and optimal value, using the
/// growth constant from the problem's reference data when present.
pub fn reference_solve(problem: &ProblemSpec, target_gap: f64) -> Result<(Vec<f64>, f64)> {
    let alpha = problem.reference.as_ref().map(|r| r.alpha);
    reference_solve_with(problem, target_gap, alpha)
}

/// Like [`reference_solve`] with an explicit growth constant.
///
/// Runs the multi-cut method with a stopping tolerance small enough that the
/// final gap is at most `target_gap` when `alpha` is a valid growth constant
/// (without one, `target_gap / 100` is used and nothing is guaranteed). For
/// dimensions up to 2 a zooming grid search is also tried, and problems with
/// explicit quadratic pieces are polished by Newton's method on the optimality
/// system. The candidate with the lowest objective value wins.
pub fn reference_solve_with(problem: &ProblemSpec, target_gap: f64, alpha: Option<f64>) -> Result<(Vec<f64>, f64)> {
    if !(target_gap > 0.0) {
        return Err(Error::InvalidInput(format!("target gap must be positive, got {target_gap}")));
    }
    let rho = 1.0;
    let factor = alpha.map_or(1e-2, |a| (a / rho).min(0.5));
    let config = SolverConfig {
        rho,
        eps: target_gap * factor,
        variant: Variant::MultiCut,
        prune_policy: PrunePolicy::KeepActive,
        max_iter: REFERENCE_MAX_ITER,
        ..Default::default()
    };
    let (x, _) = run(problem, &problem.default_x1, &config)?;
    let f = problem.value(&x)?;
    let mut best = (x, f);

    if problem.dim <= 2 {
        let (xg, fg) = grid_refine(problem, &problem.bounds)?;
        if fg < best.1 {
            best = (xg, fg);
        }
    }
    if let Some(quad) = &problem.structure {
        if let Some(p) = quad.polish(&best.0) {
            if p.upper < best.1 {
                best = (p.x, p.upper);
            }
        }
    }
    Ok(best)
}

/// Zooming grid search over `bounds` for problems of dimension 1 or 2.
/// Each round evaluates a full grid and shrinks the box to a few grid steps
/// around the best point, until the step drops below `1e-14`.
pub fn grid_refine(problem: &ProblemSpec, bounds: &BoxBounds) -> Result<(Vec<f64>, f64)> {
    let n = problem.dim;
    if n > 2 {
        return Err(Error::UnsupportedDimension(n));
    }
    let points: usize = if n == 1 { 2001 } else { 201 };
    let mut lower = bounds.lower.clone();
    let mut upper = bounds.upper.clone();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..200 {
        let step: Vec<f64> = (0..n).map(|i| (upper[i] - lower[i]) / (points - 1) as f64).collect();
        let total = points.pow(n as u32);
        let round = (0..total)
            .into_par_iter()
            .map(|idx| {
                let mut x = vec![0.0; n];
                let mut rem = idx;
                for i in 0..n {
                    let j = rem % points;
                    rem /= points;
                    x[i] = if j == points - 1 { upper[i] } else { lower[i] + j as f64 * step[i] };
                }
                let f = problem.value(&x)?;
                Ok((x, f))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("grid is nonempty");
        if best.as_ref().is_none_or(|b| round.1 < b.1) {
            best = Some(round.clone());
        }
        let center = round.0;
        let scale = center.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        if step.iter().all(|s| *s <= 1e-14 * scale) {
            break;
        }
        for i in 0..n {
            lower[i] = (center[i] - 3.0 * step[i]).max(bounds.lower[i]);
            upper[i] = (center[i] + 3.0 * step[i]).min(bounds.upper[i]);
        }
    }
    Ok(best.expect("at least one round"))
}
