use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{reference_solve_with, MaxQuadratic, ProblemSpec, QuadPiece, Reference};
use crate::error::Result;
use crate::linalg::{dist_sq, norm, BoxBounds};

pub const MAXQUAD_DEFAULT_PIECES: usize = 5;

/// Accuracy of the numerical reference for `maxquad`.
const MAXQUAD_REFERENCE_GAP: f64 = 1e-13;

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn l1quad_center(n: usize) -> Vec<f64> {
    if n == 1 {
        vec![1.0]
    } else {
        (0..n).map(|i| 1.5 * (1.7 * (i + 1) as f64).sin()).collect()
    }
}

pub(crate) fn norm_plus_quad_center(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            s * 0.5 * (i + 1) as f64
        })
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `F(x) = tau |x|_1 + |x - c|^2 / 2`, minimized by soft-thresholding `c` at `tau`.
/// Growth constant 1/2 from the quadratic term. `sign(0)` is taken as 0.
pub fn l1quad(tau: f64, c: Vec<f64>) -> ProblemSpec {
    assert!(tau >= 0.0, "tau must be nonnegative");
    let n = c.len();
    let x_star: Vec<f64> = c.iter().map(|ci| sign(*ci) * (ci.abs() - tau).max(0.0)).collect();
    let f = {
        let c = c.clone();
        move |x: &[f64]| {
            let mut value = 0.0;
            let mut g = Vec::with_capacity(x.len());
            for (xi, ci) in x.iter().zip(&c) {
                value += tau * xi.abs() + 0.5 * (xi - ci) * (xi - ci);
                g.push(tau * sign(*xi) + (xi - ci));
            }
            (value, g)
        }
    };
    let f_star = f(&x_star).0;
    let r = max_abs(&c) + 3.0;
    ProblemSpec::new(format!("l1quad[n={n}]"), n, f, BoxBounds::cube(n, r), vec![0.0; n]).with_reference(Reference {
        x_star,
        f_star,
        alpha: 0.5,
    })
}

/// `F(x) = max_i x_i^2`. The lowest-index maximizer supplies the subgradient.
/// Since `max_i x_i^2 >= |x|^2 / n`, the growth constant is `1/n`.
pub fn maxq(n: usize) -> ProblemSpec {
    assert!(n > 0);
    let f = |x: &[f64]| {
        let mut best = 0;
        for i in 1..x.len() {
            if x[i] * x[i] > x[best] * x[best] {
                best = i;
            }
        }
        let mut g = vec![0.0; x.len()];
        g[best] = 2.0 * x[best];
        (x[best] * x[best], g)
    };
    let x1: Vec<f64> = (1..=n).map(|i| if i <= n / 2 { i as f64 } else { -(i as f64) }).collect();
    ProblemSpec::new(format!("maxq[n={n}]"), n, f, BoxBounds::cube(n, n as f64 + 1.0), x1).with_reference(Reference {
        x_star: vec![0.0; n],
        f_star: 0.0,
        alpha: 1.0 / n as f64,
    })
}

/// `F(x) = |x| + |x - c|^2 / 2` (Euclidean norm), minimized at
/// `c max(0, 1 - 1/|c|)`. At `x = 0` the norm term contributes a zero subgradient.
pub fn norm_plus_quad(c: Vec<f64>) -> ProblemSpec {
    let n = c.len();
    let nc = norm(&c);
    let shrink = (1.0 - 1.0 / nc).max(0.0);
    let x_star: Vec<f64> = c.iter().map(|ci| ci * shrink).collect();
    let f = {
        let c = c.clone();
        move |x: &[f64]| {
            let nx = norm(x);
            let value = nx + 0.5 * dist_sq(x, &c);
            let g = x.iter().zip(&c).map(|(xi, ci)| if nx > 0.0 { xi / nx } else { 0.0 } + xi - ci).collect();
            (value, g)
        }
    };
    let f_star = f(&x_star).0;
    let r = max_abs(&c) + 3.0;
    ProblemSpec::new(format!("norm-plus-quad[n={n}]"), n, f, BoxBounds::cube(n, r), vec![0.0; n])
        .with_reference(Reference { x_star, f_star, alpha: 0.5 })
}

/// Maximum of `m` random quadratics `x'A x/2 + b'x + c` with
/// `A = B B'/n + 0.2 I` and `B`, `b`, `c` uniform on `[-1, 1]`, generated
/// from `seed`. Each piece is `lambda_min(A)`-strongly convex, so the maximum
/// grows at least like `min_i lambda_min(A_i) / 2`. The minimizer and optimal
/// value come from a numerical reference solve.
pub fn maxquad(n: usize, m: usize, seed: u64) -> Result<ProblemSpec> {
    assert!(n > 0 && m > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pieces = Vec::with_capacity(m);
    for _ in 0..m {
        let b_mat = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..=1.0));
        let a = &b_mat * b_mat.transpose() / n as f64 + DMatrix::identity(n, n) * 0.2;
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let c = rng.gen_range(-1.0..=1.0);
        pieces.push(QuadPiece::new(a, b, c)?);
    }
    let quad = MaxQuadratic::new(n, pieces)?;
    let alpha = quad.min_eigenvalue() / 2.0 * (1.0 - 1e-9);
    let name = format!("maxquad[n={n},m={m},seed={seed}]");
    let unrefd = ProblemSpec::from_max_quadratic(name, quad, BoxBounds::cube(n, 8.0), vec![1.0; n]);
    let (x_star, f_star) = reference_solve_with(&unrefd, MAXQUAD_REFERENCE_GAP, Some(alpha))?;
    let r = (max_abs(&x_star) + 3.0).max(4.0);
    let spec = ProblemSpec { bounds: BoxBounds::cube(n, r), ..unrefd };
    Ok(spec.with_reference(Reference { x_star, f_star, alpha }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn l1quad_examples() {
        let p = l1quad(0.5, vec![1.0]);
        assert_eq!(p.eval(&[2.0]).unwrap(), (1.5, vec![1.5]));
        assert_eq!(p.eval(&[0.0]).unwrap(), (0.5, vec![-1.0]));
        let r = p.reference.as_ref().unwrap();
        assert_eq!(r.x_star, vec![0.5]);
        assert_eq!(r.f_star, 0.375);
        assert_eq!(r.alpha, 0.5);
    }

    #[test]
    fn l1quad_high_dim_has_zeroed_coordinates() {
        let p = l1quad(0.5, l1quad_center(10));
        let r = p.reference.as_ref().unwrap();
        assert!(r.x_star.contains(&0.0));
        assert!(r.x_star.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn maxq_examples() {
        let p = maxq(4);
        assert_eq!(p.eval(&[0.0; 4]).unwrap(), (0.0, vec![0.0; 4]));
        let r = p.reference.as_ref().unwrap();
        assert_eq!(r.alpha, 0.25);
        assert_eq!(r.f_star, 0.0);
        assert_eq!(p.default_x1, vec![1.0, 2.0, -3.0, -4.0]);
        // tie between |x_1| and |x_2|: the first one wins
        assert_eq!(p.eval(&[1.0, -1.0, 0.0, 0.0]).unwrap().1, vec![2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn norm_plus_quad_minimizer() {
        let p = norm_plus_quad(vec![3.0, 4.0]);
        let r = p.reference.as_ref().unwrap();
        assert_abs_diff_eq!(r.x_star[0], 2.4, epsilon = 1e-15);
        assert_abs_diff_eq!(r.x_star[1], 3.2, epsilon = 1e-15);
        // 4 + |(0.6, 0.8)|^2 / 2
        assert_abs_diff_eq!(r.f_star, 4.5, epsilon = 1e-14);
        let (_, g) = p.eval(&r.x_star).unwrap();
        assert!(norm(&g) < 1e-14);
        assert_eq!(p.eval(&[0.0, 0.0]).unwrap().1, vec![-3.0, -4.0]);
    }

    #[test]
    fn maxquad_is_deterministic() {
        let a = maxquad(2, 5, 7).unwrap();
        let b = maxquad(2, 5, 7).unwrap();
        assert_eq!(a.reference, b.reference);
        let x = [0.3, -1.1];
        assert_eq!(a.eval(&x).unwrap(), b.eval(&x).unwrap());
        let c = maxquad(2, 5, 8).unwrap();
        assert_ne!(a.eval(&x).unwrap(), c.eval(&x).unwrap());
    }

    #[test]
    fn maxquad_reference_is_optimal() {
        for n in [2, 5] {
            let p = maxquad(n, 5, 0).unwrap();
            let r = p.reference.as_ref().unwrap();
            assert!(r.alpha > 0.0 && r.alpha < 0.6);
            let quad = p.structure.as_ref().unwrap();
            let polished = quad.polish(&r.x_star).expect("reference point polishes");
            assert!(polished.upper - polished.lower <= 1e-12, "{polished:?}");
            assert!(polished.lower <= r.f_star + 1e-14);
        }
    }
}
