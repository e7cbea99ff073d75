//! The proximal master problem
//!
//! ```text
//!     minimize  m(x) + (rho/2) |x - c|^2,     m(x) = max_j  b_j + <g_j, x - c>
//! ```
//!
//! is solved through its dual over the unit simplex,
//!
//! ```text
//!     minimize  (1/(2 rho)) |sum_j l_j g_j|^2 - sum_j l_j b_j,   l >= 0, sum l = 1,
//! ```
//!
//! with a primal active-set method. The primal solution is recovered as
//! `z = c - (1/rho) sum_j l_j g_j`. The dual Hessian is only positive
//! semidefinite (bundles are routinely affinely dependent), so the working-set
//! step falls back to a descent direction of zero curvature whenever the
//! reduced gradient has a component in the null space.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dist_sq, dot, norm, BoxBounds};
use crate::model::{CuttingPlaneModel, PieceId, DEFAULT_ACTIVITY_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpSettings {
    /// Relative KKT tolerance accepted for a returned solution.
    pub stationarity_tol: f64,
    pub max_inner_iter: usize,
    pub activity_tol: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings { stationarity_tol: 1e-10, max_inner_iter: 100_000, activity_tol: DEFAULT_ACTIVITY_TOL }
    }
}

impl QpSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.stationarity_tol > 0.0) || !(self.activity_tol > 0.0) || self.max_inner_iter == 0 {
            return Err(Error::InvalidInput("QP settings must all be positive".into()));
        }
        Ok(())
    }
}

/// Solution of the prox subproblem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxSolution {
    /// Trial point.
    pub z_next: Vec<f64>,
    /// Model value at `z_next`.
    pub model_val: f64,
    /// Optimal value `model_val + (rho/2)|z_next - center|^2`.
    pub eta: f64,
    /// `-rho (z_next - center)`, the model subgradient from the optimality condition.
    pub s: Vec<f64>,
    /// Simplex weights over the model pieces, in `piece_ids` order.
    pub multipliers: Vec<f64>,
    pub piece_ids: Vec<PieceId>,
    /// Largest of the relative stationarity, feasibility and complementarity residuals.
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResidual {
    pub stationarity: f64,
    pub feasibility: f64,
    pub complementarity: f64,
}

pub fn solve_prox(model: &CuttingPlaneModel, center: &[f64], rho: f64, settings: &QpSettings) -> Result<ProxSolution> {
    solve_prox_from(model, center, rho, settings, None)
}

/// Like [`solve_prox`], starting the active set at piece `start` (an index
/// into the model's pieces) instead of the best vertex.
pub fn solve_prox_from(
    model: &CuttingPlaneModel,
    center: &[f64],
    rho: f64,
    settings: &QpSettings,
    start: Option<usize>,
) -> Result<ProxSolution> {
    if let Some(j) = start {
        if j >= model.num_pieces() {
            return Err(Error::InvalidInput(format!("start piece {j} out of range")));
        }
    }
    solve_from(model, center, rho, settings, Start::Vertex(start))
}

/// Like [`solve_prox`], starting from the weights of an earlier solution.
/// Pieces no longer in the model are ignored; with nothing left the solve
/// starts cold. A warm start that fails to converge is retried cold.
pub fn solve_prox_warm(
    model: &CuttingPlaneModel,
    center: &[f64],
    rho: f64,
    settings: &QpSettings,
    previous: &[(PieceId, f64)],
) -> Result<ProxSolution> {
    if previous.is_empty() {
        return solve_prox(model, center, rho, settings);
    }
    let ids = model.piece_ids();
    let weights: Vec<(usize, f64)> = previous
        .iter()
        .filter(|(_, w)| *w > 0.0 && w.is_finite())
        .filter_map(|(id, w)| ids.iter().position(|p| p == id).map(|j| (j, *w)))
        .collect();
    if weights.is_empty() {
        return solve_prox(model, center, rho, settings);
    }
    match solve_from(model, center, rho, settings, Start::Weights(weights)) {
        Err(Error::QpConvergence { .. }) => solve_prox(model, center, rho, settings),
        other => other,
    }
}

enum Start {
    Vertex(Option<usize>),
    Weights(Vec<(usize, f64)>),
}

fn solve_from(
    model: &CuttingPlaneModel,
    center: &[f64],
    rho: f64,
    settings: &QpSettings,
    start: Start,
) -> Result<ProxSolution> {
    check_dim(model.dim(), center.len())?;
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::InvalidInput(format!("rho must be positive, got {rho}")));
    }
    settings.validate()?;

    let slopes = model.piece_slopes();
    let at_center = model.piece_values_unchecked(center);
    let mut dual = SimplexDual::new(&slopes, &at_center, rho);
    let outcome = dual.solve(start, settings.max_inner_iter);

    let mut z = dual.combined_slope(&dual.lambda);
    for (zi, c) in z.iter_mut().zip(center) {
        *zi = c - *zi / rho;
    }
    let iterations = dual.iterations;
    let lambda = dual.lambda;
    if let Err(iterations) = outcome {
        return Err(Error::QpConvergence { iterations, residual: f64::NAN, best_z: z });
    }

    let at_z = model.piece_values_unchecked(&z);
    let model_val = at_z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: Vec<f64> = z.iter().zip(center).map(|(zi, ci)| -rho * (zi - ci)).collect();
    let eta = model_val + 0.5 * rho * dist_sq(&z, center);
    let mut sol = ProxSolution {
        z_next: z,
        model_val,
        eta,
        s,
        multipliers: lambda,
        piece_ids: model.piece_ids(),
        kkt_residual: 0.0,
    };
    let r = kkt_parts(&slopes, &at_z, center, rho, &sol);
    let g_scale = 1.0 + slopes.iter().map(|g| norm(g)).fold(0.0, f64::max);
    let v_scale = 1.0 + at_center.iter().map(|v| v.abs()).fold(model_val.abs(), f64::max);
    sol.kkt_residual = (r.stationarity / g_scale).max(r.feasibility).max(r.complementarity / v_scale);
    if !(sol.kkt_residual <= settings.stationarity_tol) {
        return Err(Error::QpConvergence { iterations, residual: sol.kkt_residual, best_z: sol.z_next });
    }
    Ok(sol)
}

/// Stationarity, simplex feasibility and complementarity of a candidate.
pub fn kkt_residual(
    model: &CuttingPlaneModel,
    center: &[f64],
    rho: f64,
    candidate: &ProxSolution,
) -> Result<KktResidual> {
    let n = model.dim();
    check_dim(n, center.len())?;
    check_dim(n, candidate.z_next.len())?;
    let slopes = model.piece_slopes();
    if candidate.multipliers.len() != slopes.len() {
        return Err(Error::InvalidInput(format!(
            "{} multipliers for {} pieces",
            candidate.multipliers.len(),
            slopes.len()
        )));
    }
    let values = model.piece_values_unchecked(&candidate.z_next);
    Ok(kkt_parts(&slopes, &values, center, rho, candidate))
}

/// `values` holds the piece values at the candidate point.
fn kkt_parts(slopes: &[&[f64]], values: &[f64], center: &[f64], rho: f64, candidate: &ProxSolution) -> KktResidual {
    let lambda = &candidate.multipliers;
    let z = &candidate.z_next;

    let stationarity = (0..z.len())
        .map(|i| {
            let gi = rho * (z[i] - center[i])
                + lambda.iter().zip(slopes).filter(|(l, _)| **l != 0.0).map(|(l, g)| l * g[i]).sum::<f64>();
            gi * gi
        })
        .sum::<f64>()
        .sqrt();

    let min_l = lambda.iter().copied().fold(f64::INFINITY, f64::min);
    let sum_l: f64 = lambda.iter().sum();
    let feasibility = 0.0f64.max(-min_l).max((sum_l - 1.0).abs());

    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let complementarity = lambda.iter().zip(values).map(|(l, v)| l * (top - v)).fold(0.0, f64::max);

    KktResidual { stationarity, feasibility, complementarity }
}

/// The smallest box containing every single-piece prox point `c - g_j/rho`;
/// the true minimizer is a convex combination of these.
pub fn certified_box(model: &CuttingPlaneModel, center: &[f64], rho: f64) -> BoxBounds {
    let n = center.len();
    let mut lower = vec![f64::INFINITY; n];
    let mut upper = vec![f64::NEG_INFINITY; n];
    for g in model.piece_slopes() {
        for i in 0..n {
            let p = center[i] - g[i] / rho;
            lower[i] = lower[i].min(p);
            upper[i] = upper[i].max(p);
        }
    }
    BoxBounds { lower, upper }
}

/// Grid minimizer of the prox objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridProx {
    pub z: Vec<f64>,
    pub model_val: f64,
    /// Objective at `z`, the grid estimate of `eta`.
    pub eta: f64,
    /// Largest grid spacing over the axes.
    pub step: f64,
    /// Lipschitz constant of the objective on the box.
    pub lipschitz: f64,
}

impl GridProx {
    /// Bound on `|eta_grid - eta|` when the box contains the minimizer.
    pub fn error_bound(&self) -> f64 {
        self.lipschitz * self.step
    }
}

/// Exhaustive grid search for the prox subproblem, for dimensions up to 3.
pub fn brute_force_prox(
    model: &CuttingPlaneModel,
    center: &[f64],
    rho: f64,
    bounds: &BoxBounds,
    points_per_axis: usize,
) -> Result<GridProx> {
    let n = model.dim();
    if n > 3 {
        return Err(Error::UnsupportedDimension(n));
    }
    check_dim(n, center.len())?;
    check_dim(n, bounds.dim())?;
    if points_per_axis < 2 {
        return Err(Error::InvalidInput("need at least 2 grid points per axis".into()));
    }

    // piece_j(x) = a_j + <g_j, x>
    let slopes: Vec<Vec<f64>> = model.piece_slopes().iter().map(|g| g.to_vec()).collect();
    let at_center = model.piece_values_unchecked(center);
    let offsets: Vec<f64> = slopes.iter().zip(&at_center).map(|(g, b)| b - dot(g, center)).collect();

    let axes: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let (lo, hi) = (bounds.lower[i], bounds.upper[i]);
            (0..points_per_axis).map(|t| lo + (hi - lo) * t as f64 / (points_per_axis - 1) as f64).collect()
        })
        .collect();
    let step = (0..n).map(|i| (bounds.upper[i] - bounds.lower[i]) / (points_per_axis - 1) as f64).fold(0.0, f64::max);

    let objective = |x: &[f64]| -> f64 {
        let m = slopes.iter().zip(&offsets).map(|(g, a)| a + dot(g, x)).fold(f64::NEG_INFINITY, f64::max);
        m + 0.5 * rho * dist_sq(x, center)
    };

    // outer axis in parallel, the rest sequentially
    let best = axes[0]
        .par_iter()
        .map(|&x0| {
            let mut x = vec![0.0; n];
            x[0] = x0;
            let mut best = (f64::INFINITY, x.clone());
            let inner = |x: &mut Vec<f64>, best: &mut (f64, Vec<f64>)| {
                let f = objective(x);
                if f < best.0 {
                    *best = (f, x.clone());
                }
            };
            match n {
                1 => inner(&mut x, &mut best),
                2 => {
                    for &x1 in &axes[1] {
                        x[1] = x1;
                        inner(&mut x, &mut best);
                    }
                }
                _ => {
                    for &x1 in &axes[1] {
                        x[1] = x1;
                        for &x2 in &axes[2] {
                            x[2] = x2;
                            inner(&mut x, &mut best);
                        }
                    }
                }
            }
            best
        })
        .reduce(|| (f64::INFINITY, vec![0.0; n]), |a, b| if b.0 < a.0 { b } else { a });

    let (eta, z) = best;
    let (model_val, _) = model.evaluate(&z)?;
    let g_max = slopes.iter().map(|g| norm(g)).fold(0.0, f64::max);
    let lipschitz = g_max + rho * bounds.max_dist_from(center);
    Ok(GridProx { z, model_val, eta, step, lipschitz })
}

/// Dual of the prox subproblem over the simplex.
struct SimplexDual<'a> {
    slopes: &'a [&'a [f64]],
    /// Piece values at the prox center.
    b: &'a [f64],
    rho: f64,
    lambda: Vec<f64>,
    support: Vec<usize>,
    iterations: usize,
}

impl<'a> SimplexDual<'a> {
    fn new(slopes: &'a [&'a [f64]], b: &'a [f64], rho: f64) -> Self {
        SimplexDual { slopes, b, rho, lambda: vec![0.0; slopes.len()], support: Vec::new(), iterations: 0 }
    }

    fn dim(&self) -> usize {
        self.slopes[0].len()
    }

    fn combined_slope(&self, lambda: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        for (l, g) in lambda.iter().zip(self.slopes) {
            if *l != 0.0 {
                for (yi, gi) in y.iter_mut().zip(g.iter()) {
                    *yi += l * gi;
                }
            }
        }
        y
    }

    /// Piece values at the primal point induced by `lambda`.
    fn piece_values(&self, y: &[f64]) -> Vec<f64> {
        self.slopes.iter().zip(self.b).map(|(g, b)| b - dot(g, y) / self.rho).collect()
    }

    /// Returns `Err(iterations)` when the iteration budget runs out.
    fn solve(&mut self, start: Start, max_iter: usize) -> std::result::Result<(), usize> {
        let m = self.slopes.len();
        if m == 2 && matches!(start, Start::Vertex(None) | Start::Weights(_)) {
            self.solve_two_pieces();
            return Ok(());
        }
        let start = match start {
            Start::Vertex(j) => j,
            Start::Weights(weights) => {
                let total: f64 = weights.iter().map(|(_, w)| w).sum();
                for (j, w) in weights {
                    if self.lambda[j] == 0.0 {
                        self.support.push(j);
                    }
                    self.lambda[j] += w / total;
                }
                return self.improve(max_iter);
            }
        };
        let j0 = start.unwrap_or_else(|| {
            // vertex with the smallest dual objective, lowest index on ties
            let mut best = 0;
            let mut best_q = f64::INFINITY;
            for j in 0..m {
                let q = 0.5 * dot(self.slopes[j], self.slopes[j]) / self.rho - self.b[j];
                if q < best_q {
                    best_q = q;
                    best = j;
                }
            }
            best
        });
        self.lambda[j0] = 1.0;
        self.support = vec![j0];
        if m == 1 {
            return Ok(());
        }
        self.improve(max_iter)
    }

    /// Closed-form minimizer over the segment between the two vertices.
    fn solve_two_pieces(&mut self) {
        let (g1, g2) = (self.slopes[0], self.slopes[1]);
        let db = self.b[0] - self.b[1];
        let mut dd = 0.0;
        let mut g2d = 0.0;
        for (a, c) in g1.iter().zip(g2.iter()) {
            let d = a - c;
            dd += d * d;
            g2d += c * d;
        }
        // q(l) = |g2 + l d|^2 / (2 rho) - b2 - l db
        let l1 = if dd > 0.0 {
            ((db * self.rho - g2d) / dd).clamp(0.0, 1.0)
        } else if db >= 0.0 {
            1.0
        } else {
            0.0
        };
        self.lambda[0] = l1;
        self.lambda[1] = 1.0 - l1;
        self.support.clear();
        self.support.extend((0..2).filter(|&j| self.lambda[j] > 0.0));
        self.iterations += 1;
    }

    /// Alternates face minimization with adding the most violated piece.
    fn improve(&mut self, max_iter: usize) -> std::result::Result<(), usize> {
        loop {
            self.optimize_on_support(max_iter)?;
            let y = self.combined_slope(&self.lambda);
            let p = self.piece_values(&y);
            let tau: f64 = self.support.iter().map(|&j| self.lambda[j] * p[j]).sum();
            let scale = 1.0 + p.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let mut enter = None;
            let mut best_gap = 1e-13 * scale;
            for (j, pj) in p.iter().enumerate() {
                if self.lambda[j] == 0.0 && !self.support.contains(&j) && pj - tau > best_gap {
                    best_gap = pj - tau;
                    enter = Some(j);
                }
            }
            match enter {
                Some(j) => self.support.push(j),
                None => return Ok(()),
            }
            self.iterations += 1;
            if self.iterations > max_iter {
                return Err(self.iterations);
            }
        }
    }

    /// Minimizes the dual over the face spanned by the support, dropping
    /// indices whose weight reaches zero.
    fn optimize_on_support(&mut self, max_iter: usize) -> std::result::Result<(), usize> {
        let mut refinements = 0;
        loop {
            self.iterations += 1;
            if self.iterations > max_iter {
                return Err(self.iterations);
            }
            let s = self.support.len();
            if s == 1 {
                let j = self.support[0];
                self.lambda.iter_mut().for_each(|l| *l = 0.0);
                self.lambda[j] = 1.0;
                return Ok(());
            }
            let n = self.dim();
            let basis = helmert_basis(s);

            // B = G_S Z  (n x (s-1))
            let mut bmat = DMatrix::<f64>::zeros(n, s - 1);
            for c in 0..s - 1 {
                for (r, &j) in self.support.iter().enumerate() {
                    let w = basis[(r, c)];
                    if w != 0.0 {
                        for i in 0..n {
                            bmat[(i, c)] += w * self.slopes[j][i];
                        }
                    }
                }
            }
            let y = self.combined_slope(&self.lambda);
            let p_s =
                DVector::from_iterator(s, self.support.iter().map(|&j| self.b[j] - dot(self.slopes[j], &y) / self.rho));
            // gradient of the dual along the face: -Z^T p_S
            let grad = -(basis.transpose() * &p_s);
            let scale = 1.0 + p_s.amax();
            if grad.norm() <= 1e-15 * scale * (s as f64).sqrt() {
                return Ok(());
            }

            let hess = bmat.transpose() * &bmat / self.rho;
            let (u, use_null) = match well_conditioned_newton(&hess, &grad) {
                Some(step) => (step, false),
                None => eigen_direction(hess, &grad),
            };
            let slope0 = grad.dot(&u);
            if !(slope0 < 0.0) {
                return Ok(());
            }
            let bu = &bmat * &u;
            let curvature = bu.norm_squared() / self.rho;
            let t_star = if curvature > 0.0 { -slope0 / curvature } else { f64::INFINITY };

            let d = &basis * &u;
            let mut t_max = f64::INFINITY;
            for (r, &j) in self.support.iter().enumerate() {
                if d[r] < 0.0 {
                    t_max = t_max.min(self.lambda[j] / -d[r]);
                }
            }
            let t = t_star.min(t_max);
            if !t.is_finite() {
                return Err(self.iterations);
            }
            for (r, &j) in self.support.iter().enumerate() {
                self.lambda[j] += t * d[r];
            }
            if t_max <= t_star {
                // blocking step: drop the weights that hit zero
                let tiny = 1e-15;
                let blocked: Vec<usize> = self
                    .support
                    .iter()
                    .enumerate()
                    .filter(|&(r, &j)| d[r] < 0.0 && self.lambda[j] <= tiny)
                    .map(|(_, &j)| j)
                    .collect();
                let blocked = if blocked.is_empty() {
                    // the minimizing ratio index, by construction
                    let (_, &j) = self
                        .support
                        .iter()
                        .enumerate()
                        .filter(|&(r, _)| d[r] < 0.0)
                        .min_by(|a, b| (self.lambda[*a.1] / -d[a.0]).total_cmp(&(self.lambda[*b.1] / -d[b.0])))
                        .expect("a blocking index exists");
                    vec![j]
                } else {
                    blocked
                };
                for j in &blocked {
                    self.lambda[*j] = 0.0;
                }
                self.support.retain(|j| !blocked.contains(j));
                self.renormalize();
                refinements = 0;
            } else {
                self.renormalize();
                if !use_null {
                    refinements += 1;
                    if refinements >= 3 {
                        return Ok(());
                    }
                }
            }
        }
    }

    fn renormalize(&mut self) {
        for &j in &self.support {
            if self.lambda[j] < 0.0 {
                self.lambda[j] = 0.0;
            }
        }
        let sum: f64 = self.support.iter().map(|&j| self.lambda[j]).sum();
        if sum > 0.0 {
            for &j in &self.support {
                self.lambda[j] /= sum;
            }
        }
    }
}

/// Newton step `-H^{-1} grad` when the Cholesky factor of `hess` has no
/// tiny pivot, so the face Hessian is safely nonsingular.
fn well_conditioned_newton(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let h_max = hess.diagonal().amax();
    let chol = hess.clone().cholesky()?;
    let l_diag = chol.l_dirty().diagonal();
    let min_pivot = l_diag.iter().fold(f64::INFINITY, |m, v| m.min(v * v));
    if !(min_pivot > 1e-8 * h_max) {
        return None;
    }
    Some(-chol.solve(grad))
}

/// Direction from the eigendecomposition of the face Hessian: a zero-curvature
/// descent direction when the gradient has a null-space component (flagged by
/// the returned bool), the pseudo-inverse Newton step otherwise.
fn eigen_direction(hess: DMatrix<f64>, grad: &DVector<f64>) -> (DVector<f64>, bool) {
    let s1 = grad.len();
    let eig = SymmetricEigen::new(hess);
    let e_max = eig.eigenvalues.amax();
    let cutoff = 1e-12 * e_max.max(f64::MIN_POSITIVE);
    let mut newton = DVector::<f64>::zeros(s1);
    let mut null_dir = DVector::<f64>::zeros(s1);
    for k in 0..s1 {
        let v = eig.eigenvectors.column(k);
        let coef = v.dot(grad);
        if eig.eigenvalues[k] > cutoff {
            newton -= v * (coef / eig.eigenvalues[k]);
        } else {
            null_dir -= v * coef;
        }
    }
    let use_null = null_dir.norm() > 1e-10 * grad.norm();
    if use_null {
        (null_dir, true)
    } else {
        (newton, false)
    }
}

/// Orthonormal basis of the hyperplane `sum x = 0` in R^s (Helmert contrasts).
fn helmert_basis(s: usize) -> DMatrix<f64> {
    let mut z = DMatrix::<f64>::zeros(s, s - 1);
    for c in 0..s - 1 {
        let k = (c + 1) as f64;
        let w = 1.0 / (k * (k + 1.0)).sqrt();
        for r in 0..=c {
            z[(r, c)] = w;
        }
        z[(c + 1, c)] = -k * w;
    }
    z
}
