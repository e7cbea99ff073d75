use crate::error::{Error, Result};
use crate::linalg::{dist_sq, norm_sq};
use crate::model::{Cut, CuttingPlaneModel, PrunePolicy};
use crate::problems::ProblemSpec;
use crate::proxqp::{solve_prox, QpSettings};

const MAX_ROUNDS: usize = 5_000;

/// Certified enclosure `lower <= F_rho(x) <= upper`, with `upper` attained at `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct MoreauBracket {
    pub lower: f64,
    pub upper: f64,
    pub y: Vec<f64>,
}

/// Moreau envelope `F_rho(x) = min_y F(y) + (rho/2)|y - x|^2`, returned as
/// its certified upper estimate once the bracket is narrower than `accuracy`.
pub fn moreau_ref(problem: &ProblemSpec, x: &[f64], rho: f64, accuracy: f64) -> Result<f64> {
    moreau_bracket(problem, x, rho, accuracy).map(|b| b.upper)
}

/// Cutting-plane evaluation of the envelope with the center fixed at `x`.
///
/// Every model of `F` built from exact cuts gives a lower bound through the
/// dual value of its prox subproblem; every trial point gives an upper bound.
/// New cuts are added at the trial points until the two meet within
/// `accuracy`. Problems made of explicit quadratic pieces fall back to
/// Newton polishing of the regularized problem if the cuts stall.
pub fn moreau_bracket(problem: &ProblemSpec, x: &[f64], rho: f64, accuracy: f64) -> Result<MoreauBracket> {
    if !(rho > 0.0) || !(accuracy > 0.0) {
        return Err(Error::InvalidInput("rho and accuracy must be positive".into()));
    }
    let qp = QpSettings::default();
    let (fx, gx) = problem.eval(x)?;
    let mut model = CuttingPlaneModel::multi_cut(Cut::new(1, x.to_vec(), fx, gx)?);
    let mut best = MoreauBracket { lower: f64::NEG_INFINITY, upper: fx, y: x.to_vec() };

    for round in 0..MAX_ROUNDS {
        let sol = match solve_prox(&model, x, rho, &qp) {
            Ok(sol) => sol,
            Err(Error::QpConvergence { .. }) => break,
            Err(e) => return Err(e),
        };
        // dual value of the subproblem at the returned weights
        let values = model.piece_values(x)?;
        let total: f64 = sol.multipliers.iter().map(|l| l.max(0.0)).sum();
        let mut mix = vec![0.0; x.len()];
        let mut dual = 0.0;
        for ((l, v), g) in sol.multipliers.iter().zip(&values).zip(model.piece_slopes()) {
            let w = l.max(0.0) / total;
            dual += w * v;
            for (m, gi) in mix.iter_mut().zip(g) {
                *m += w * gi;
            }
        }
        dual -= norm_sq(&mix) / (2.0 * rho);
        best.lower = best.lower.max(dual);

        let (fz, gz) = problem.eval(&sol.z_next)?;
        let value = fz + 0.5 * rho * dist_sq(&sol.z_next, x);
        if value < best.upper {
            best.upper = value;
            best.y = sol.z_next.clone();
        }
        if best.upper - best.lower <= accuracy {
            return Ok(best);
        }
        let id = round as u64 + 2;
        let mut weights = sol.multipliers.clone();
        weights.push(0.0);
        model = model.add_cut(Cut::new(id, sol.z_next, fz, gz)?)?.prune(
            &weights,
            id,
            PrunePolicy::KeepActive,
            qp.activity_tol,
        )?;
    }

    if let Some(quad) = &problem.structure {
        if let Some(p) = quad.regularized(rho, x).polish(&best.y) {
            if p.upper < best.upper {
                best.upper = p.upper;
                best.y = p.x;
            }
            best.lower = best.lower.max(p.lower);
            if best.upper - best.lower <= accuracy {
                return Ok(best);
            }
        }
    }
    Err(Error::AccuracyNotReached { target: accuracy, best: best.upper, gap: best.upper - best.lower })
}
