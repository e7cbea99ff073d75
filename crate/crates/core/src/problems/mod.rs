//! Test problems: convex nonsmooth objectives with a subgradient oracle and,
//! where known, the minimizer, optimal value and quadratic growth constant.

mod corpus;
mod file;
mod quadratic;
mod reference;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use corpus::{l1quad, maxq, maxquad, norm_plus_quad, MAXQUAD_DEFAULT_PIECES};
pub use file::{parse_problem_file, MatrixSpec, PieceDocument, ProblemDocument};
pub use quadratic::{MaxQuadratic, PolishedPoint, QuadPiece};
pub use reference::{grid_refine, reference_solve, reference_solve_with};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{all_finite, BoxBounds};

/// A first-order oracle: `x ↦ (F(x), g)` with `g ∈ ∂F(x)`.
pub trait Oracle: Send + Sync {
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>);
}

impl<F> Oracle for F
where
    F: Fn(&[f64]) -> (f64, Vec<f64>) + Send + Sync,
{
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        self(x)
    }
}

/// Minimizer, optimal value and a quadratic growth constant:
/// `F(x) - f_star >= alpha |x - x_star|^2` on the initial sublevel set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub x_star: Vec<f64>,
    pub f_star: f64,
    pub alpha: f64,
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub dim: usize,
    pub oracle: Arc<dyn Oracle>,
    pub reference: Option<Reference>,
    /// Sampling and brute-force region.
    pub bounds: BoxBounds,
    pub default_x1: Vec<f64>,
    /// Explicit piece data when the objective is a maximum of quadratics.
    pub structure: Option<Arc<MaxQuadratic>>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("reference", &self.reference)
            .field("bounds", &self.bounds)
            .field("default_x1", &self.default_x1)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    /// # Panics
    ///
    /// If `bounds` or `default_x1` do not have `dim` coordinates.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        oracle: impl Oracle + 'static,
        bounds: BoxBounds,
        default_x1: Vec<f64>,
    ) -> Self {
        assert!(dim > 0, "dimension must be positive");
        assert_eq!(bounds.dim(), dim, "box dimension");
        assert_eq!(default_x1.len(), dim, "starting point dimension");
        ProblemSpec {
            name: name.into(),
            dim,
            oracle: Arc::new(oracle),
            reference: None,
            bounds,
            default_x1,
            structure: None,
        }
    }

    pub fn with_reference(mut self, reference: Reference) -> Self {
        assert_eq!(reference.x_star.len(), self.dim, "reference dimension");
        self.reference = Some(reference);
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Builds a problem whose oracle is the maximum of the given quadratics.
    pub fn from_max_quadratic(
        name: impl Into<String>,
        quad: MaxQuadratic,
        bounds: BoxBounds,
        default_x1: Vec<f64>,
    ) -> Self {
        let quad = Arc::new(quad);
        let oracle = Arc::clone(&quad);
        let mut spec = ProblemSpec::new(name, quad.dim(), move |x: &[f64]| oracle.eval(x), bounds, default_x1);
        spec.structure = Some(quad);
        spec
    }

    /// Oracle call with input and output validation.
    pub fn eval(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_dim(self.dim, x.len())?;
        if !all_finite(x) {
            return Err(Error::InvalidInput(format!("non-finite point {x:?}")));
        }
        let (f, g) = self.oracle.eval(x);
        if g.len() != self.dim {
            return Err(Error::Oracle {
                point: x.to_vec(),
                reason: format!("subgradient has {} entries, expected {}", g.len(), self.dim),
            });
        }
        if !f.is_finite() || !all_finite(&g) {
            return Err(Error::Oracle { point: x.to_vec(), reason: "non-finite value or subgradient".into() });
        }
        Ok((f, g))
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.eval(x).map(|(f, _)| f)
    }

    /// `F(x) - F*`, when reference data is present.
    pub fn gap(&self, x: &[f64]) -> Result<Option<f64>> {
        let f = self.value(x)?;
        Ok(self.reference.as_ref().map(|r| f - r.f_star))
    }
}

pub fn eval_oracle(problem: &ProblemSpec, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    problem.eval(x)
}

/// Built-in problem names with their default dimensions.
pub const BUILTIN_PROBLEMS: [(&str, usize, &str); 4] = [
    ("l1quad", 1, "tau |x|_1 + |x - c|^2 / 2"),
    ("maxq", 10, "max_i x_i^2"),
    ("maxquad", 2, "max of random strongly convex quadratics"),
    ("norm-plus-quad", 3, "|x| + |x - c|^2 / 2"),
];

/// Looks up a built-in problem. `dim` defaults per problem; `seed` only
/// affects the randomly generated `maxquad`.
pub fn builtin(name: &str, dim: Option<usize>, seed: u64) -> Result<ProblemSpec> {
    let Some(&(_, default_dim, _)) = BUILTIN_PROBLEMS.iter().find(|(n, _, _)| *n == name) else {
        return Err(Error::UnknownProblem {
            name: name.to_string(),
            available: BUILTIN_PROBLEMS.iter().map(|(n, _, _)| *n).collect::<Vec<_>>().join(", "),
        });
    };
    let n = dim.unwrap_or(default_dim);
    if n == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    Ok(match name {
        "l1quad" => l1quad(0.5, corpus::l1quad_center(n)),
        "maxq" => maxq(n),
        "maxquad" => maxquad(n, MAXQUAD_DEFAULT_PIECES, seed)?,
        "norm-plus-quad" => norm_plus_quad(corpus::norm_plus_quad_center(n)),
        _ => unreachable!(),
    })
}
