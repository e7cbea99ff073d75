use nalgebra::{DMatrix, DVector};

use super::Oracle;
use crate::error::{Error, Result};
use crate::linalg::{all_finite, dot, norm_sq};

/// `q(x) = x'A x / 2 + b'x + c` with `A` symmetric positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadPiece {
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
    pub c: f64,
}

impl QuadPiece {
    pub fn new(a: DMatrix<f64>, b: Vec<f64>, c: f64) -> Result<Self> {
        let n = b.len();
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: a.nrows() });
        }
        if !a.iter().all(|v| v.is_finite()) || !all_finite(&b) || !c.is_finite() {
            return Err(Error::InvalidInput("quadratic piece has non-finite data".into()));
        }
        let scale = a.amax().max(1.0);
        if (&a - a.transpose()).amax() > 1e-12 * scale {
            return Err(Error::Validation("quadratic piece matrix is not symmetric".into()));
        }
        let a = (&a + a.transpose()) * 0.5;
        Ok(QuadPiece { a, b, c })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// Row `r` of the symmetric matrix, read as its contiguous column.
    fn row(&self, r: usize) -> &[f64] {
        let n = self.b.len();
        &self.a.as_slice()[r * n..(r + 1) * n]
    }

    fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..x.len()).map(|r| dot(self.row(r), x)).collect()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let quad_and_linear: f64 =
            x.iter().zip(&self.b).enumerate().map(|(r, (xr, br))| xr * (0.5 * dot(self.row(r), x) + br)).sum();
        quad_and_linear + self.c
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.matvec(x);
        for (gi, bi) in g.iter_mut().zip(&self.b) {
            *gi += bi;
        }
        g
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.a.clone().symmetric_eigen().eigenvalues.min()
    }
}

/// Pointwise maximum of convex quadratics. The lowest-index maximizing piece
/// supplies the subgradient.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxQuadratic {
    dim: usize,
    pieces: Vec<QuadPiece>,
}

/// A point near the minimizer together with a certified bracket of the
/// optimal value: `lower <= F* <= upper = F(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolishedPoint {
    pub x: Vec<f64>,
    pub upper: f64,
    pub lower: f64,
}

impl MaxQuadratic {
    pub fn new(dim: usize, pieces: Vec<QuadPiece>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::InvalidInput("at least one piece is required".into()));
        }
        for (i, p) in pieces.iter().enumerate() {
            crate::error::check_dim(dim, p.dim())?;
            let scale = p.a.amax().max(1.0);
            if p.min_eigenvalue() < -1e-12 * scale {
                return Err(Error::Validation(format!("piece {i}: matrix is not positive semidefinite")));
            }
        }
        Ok(MaxQuadratic { dim, pieces })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pieces(&self) -> &[QuadPiece] {
        &self.pieces
    }

    pub fn values(&self, x: &[f64]) -> Vec<f64> {
        self.pieces.iter().map(|p| p.value(x)).collect()
    }

    /// Smallest eigenvalue over all piece matrices; the maximum is strongly
    /// convex with this modulus when it is positive.
    pub fn min_eigenvalue(&self) -> f64 {
        self.pieces.iter().map(QuadPiece::min_eigenvalue).fold(f64::INFINITY, f64::min)
    }

    /// `F + (rho/2)|. - y|^2`, again a maximum of quadratics.
    pub fn regularized(&self, rho: f64, y: &[f64]) -> MaxQuadratic {
        let shift = 0.5 * rho * norm_sq(y);
        let pieces = self
            .pieces
            .iter()
            .map(|p| QuadPiece {
                a: &p.a + DMatrix::identity(self.dim, self.dim) * rho,
                b: p.b.iter().zip(y).map(|(bi, yi)| bi - rho * yi).collect(),
                c: p.c + shift,
            })
            .collect();
        MaxQuadratic { dim: self.dim, pieces }
    }

    /// Lower bound on `F*` from simplex weights: the minimum of
    /// `sum_i lambda_i q_i`, available when that combination is strictly convex.
    pub fn dual_bound(&self, lambda: &[f64]) -> Option<f64> {
        let n = self.dim;
        let mut h = DMatrix::zeros(n, n);
        let mut lin = DVector::zeros(n);
        let mut k = 0.0;
        for (l, p) in lambda.iter().zip(&self.pieces) {
            if *l == 0.0 {
                continue;
            }
            h += &p.a * *l;
            lin += DVector::from_column_slice(&p.b) * *l;
            k += l * p.c;
        }
        let chol = h.cholesky()?;
        let y = chol.solve(&lin);
        let bound = k - 0.5 * lin.dot(&y);
        bound.is_finite().then_some(bound)
    }

    /// Newton's method on the optimality system of `min t s.t. q_i(x) <= t`
    /// for the pieces in `active`, started from `x0`.
    fn newton(&self, active: &[usize], x0: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.dim;
        let p = active.len();
        let size = n + p + 1;
        let mut x = x0.to_vec();
        let mut t = active.iter().map(|&i| self.pieces[i].value(&x)).fold(f64::NEG_INFINITY, f64::max);

        // weights: least-squares solution of sum lambda_i g_i = 0, sum lambda_i = 1
        let grads: Vec<Vec<f64>> = active.iter().map(|&i| self.pieces[i].gradient(&x)).collect();
        let m = DMatrix::from_fn(n + 1, p, |r, c| if r < n { grads[c][r] } else { 1.0 });
        let mut rhs = DVector::zeros(n + 1);
        rhs[n] = 1.0;
        let mut lambda: Vec<f64> = m.svd(true, true).solve(&rhs, 1e-12).ok()?.iter().copied().collect();

        let residual = |x: &[f64], lambda: &[f64], t: f64| -> DVector<f64> {
            let mut r = DVector::zeros(size);
            for (k, &i) in active.iter().enumerate() {
                let g = self.pieces[i].gradient(x);
                for j in 0..n {
                    r[j] += lambda[k] * g[j];
                }
                r[n + k] = self.pieces[i].value(x) - t;
            }
            r[n + p] = lambda.iter().sum::<f64>() - 1.0;
            r
        };

        let scale = 1.0 + t.abs();
        let mut r = residual(&x, &lambda, t);
        for _ in 0..60 {
            if r.amax() <= 1e-15 * scale {
                break;
            }
            let mut jac = DMatrix::zeros(size, size);
            for (k, &i) in active.iter().enumerate() {
                let piece = &self.pieces[i];
                let g = piece.gradient(&x);
                for a in 0..n {
                    for b in 0..n {
                        jac[(a, b)] += lambda[k] * piece.a[(a, b)];
                    }
                    jac[(a, n + k)] = g[a];
                    jac[(n + k, a)] = g[a];
                }
                jac[(n + k, n + p)] = -1.0;
                jac[(n + p, n + k)] = 1.0;
            }
            let step = jac.lu().solve(&(-&r))?;
            let mut tau = 1.0;
            let current = r.norm();
            loop {
                let xt: Vec<f64> = (0..n).map(|j| x[j] + tau * step[j]).collect();
                let lt: Vec<f64> = (0..p).map(|k| lambda[k] + tau * step[n + k]).collect();
                let tt = t + tau * step[n + p];
                let rt = residual(&xt, &lt, tt);
                if rt.norm() < current || tau < 1e-6 {
                    x = xt;
                    lambda = lt;
                    t = tt;
                    r = rt;
                    break;
                }
                tau *= 0.5;
            }
        }
        (r.amax() <= 1e-11 * scale && all_finite(&x)).then_some((x, lambda))
    }

    /// Refines an approximate minimizer by solving the optimality system on
    /// each plausible set of active pieces, and certifies the result with a
    /// dual bound. Returns `None` if no candidate yields a bound.
    pub fn polish(&self, x_hat: &[f64]) -> Option<PolishedPoint> {
        let values = self.values(x_hat);
        let mut order: Vec<usize> = (0..self.pieces.len()).collect();
        order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));

        let mut best: Option<PolishedPoint> = None;
        let mut lower = f64::NEG_INFINITY;
        for p in 1..=order.len().min(self.dim + 1) {
            let mut active = order[..p].to_vec();
            active.sort_unstable();
            let Some((x, lam)) = self.newton(&active, x_hat) else { continue };
            if lam.iter().any(|l| *l < -1e-10) {
                continue;
            }
            let mut weights = vec![0.0; self.pieces.len()];
            let total: f64 = lam.iter().map(|l| l.max(0.0)).sum();
            for (k, &i) in active.iter().enumerate() {
                weights[i] = lam[k].max(0.0) / total;
            }
            let Some(bound) = self.dual_bound(&weights) else { continue };
            lower = lower.max(bound);
            let upper = self.values(&x).into_iter().fold(f64::NEG_INFINITY, f64::max);
            if best.as_ref().is_none_or(|b| upper < b.upper) {
                best = Some(PolishedPoint { x, upper, lower });
            }
        }
        best.map(|b| PolishedPoint { lower: lower.min(b.upper), ..b })
    }
}

impl Oracle for MaxQuadratic {
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut best = 0;
        let mut best_val = self.pieces[0].value(x);
        for (i, p) in self.pieces.iter().enumerate().skip(1) {
            let v = p.value(x);
            if v > best_val {
                best = i;
                best_val = v;
            }
        }
        (best_val, self.pieces[best].gradient(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn piece(a: &[f64], b: &[f64], c: f64) -> QuadPiece {
        let n = b.len();
        QuadPiece::new(DMatrix::from_row_slice(n, n, a), b.to_vec(), c).unwrap()
    }

    #[test]
    fn single_identity_piece() {
        let q = MaxQuadratic::new(2, vec![piece(&[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0], 0.0)]).unwrap();
        assert_eq!(q.eval(&[1.0, 0.0]), (0.5, vec![1.0, 0.0]));
        assert_eq!(q.min_eigenvalue(), 1.0);
    }

    #[test]
    fn rejects_indefinite_and_asymmetric() {
        let bad = piece(&[1.0, 0.0, 0.0, -1.0], &[0.0, 0.0], 0.0);
        assert!(matches!(MaxQuadratic::new(2, vec![bad]), Err(Error::Validation(_))));
        let asym = QuadPiece::new(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]), vec![0.0; 2], 0.0);
        assert!(asym.is_err());
    }

    #[test]
    fn polish_two_shifted_parabolas() {
        // max((x-1)^2/2, (x+1)^2/2) is minimized at 0 with value 1/2
        let q = MaxQuadratic::new(1, vec![piece(&[1.0], &[-1.0], 0.5), piece(&[1.0], &[1.0], 0.5)]).unwrap();
        let p = q.polish(&[0.03]).unwrap();
        assert_abs_diff_eq!(p.x[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.upper, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.lower, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn regularized_matches_definition() {
        let q = MaxQuadratic::new(
            2,
            vec![piece(&[2.0, 0.5, 0.5, 1.0], &[1.0, -1.0], 0.3), piece(&[1.0, 0.0, 0.0, 3.0], &[0.0, 2.0], -1.0)],
        )
        .unwrap();
        let y = [0.4, -0.7];
        let r = q.regularized(2.0, &y);
        for x in [[0.0, 0.0], [1.0, -2.0], [-0.3, 0.9]] {
            let expect = q.eval(&x).0 + 0.5 * 2.0 * ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2));
            assert_abs_diff_eq!(r.eval(&x).0, expect, epsilon = 1e-13);
        }
    }

    #[test]
    fn dual_bound_is_below_the_maximum() {
        let q = MaxQuadratic::new(1, vec![piece(&[1.0], &[-1.0], 0.5), piece(&[1.0], &[1.0], 0.5)]).unwrap();
        // equal weights give the exact optimum, other weights something lower
        assert_abs_diff_eq!(q.dual_bound(&[0.5, 0.5]).unwrap(), 0.5, epsilon = 1e-15);
        assert!(q.dual_bound(&[0.9, 0.1]).unwrap() < 0.5);
        let affine = MaxQuadratic::new(1, vec![piece(&[0.0], &[1.0], 0.0)]).unwrap();
        assert_eq!(affine.dual_bound(&[1.0]), None);
    }
}
