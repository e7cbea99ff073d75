//! JSON problem documents describing a maximum of quadratic pieces.
//!
//! ```json
//! {
//!   "name": "two-parabolas",
//!   "dim": 1,
//!   "pieces": [
//!     { "A": [[1.0]], "b": [-1.0], "c": 0.5 },
//!     { "A": [[1.0]], "b": [1.0], "c": 0.5 }
//!   ],
//!   "reference": { "x_star": [0.0], "f_star": 0.5, "alpha": 0.5 },
//!   "box": { "lower": [-3.0], "upper": [3.0] },
//!   "default_x1": [2.0]
//! }
//! ```
//!
//! `A` is given by the rows of its lower triangle (row `i` has `i + 1`
//! entries) or as the string `"zero"`. `reference`, `box` and `default_x1`
//! are optional; the box defaults to `[-10, 10]^n` and the start to the origin.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{MaxQuadratic, ProblemSpec, QuadPiece, Reference};
use crate::error::{Error, Result};
use crate::linalg::BoxBounds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Zero(String),
    LowerTriangle(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceDocument {
    #[serde(rename = "A")]
    pub a: MatrixSpec,
    pub b: Vec<f64>,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDocument {
    pub name: String,
    pub dim: usize,
    pub pieces: Vec<PieceDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Reference>,
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoxBounds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_x1: Option<Vec<f64>>,
}

fn at(location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse { location: location.into(), message: message.into() }
}

fn expand(spec: &MatrixSpec, n: usize, loc: &str) -> Result<DMatrix<f64>> {
    match spec {
        MatrixSpec::Zero(s) if s == "zero" => Ok(DMatrix::zeros(n, n)),
        MatrixSpec::Zero(s) => Err(at(loc, format!("expected \"zero\" or a lower triangle, got \"{s}\""))),
        MatrixSpec::LowerTriangle(rows) => {
            if rows.len() != n {
                return Err(at(loc, format!("{} rows for dimension {n}", rows.len())));
            }
            let mut a = DMatrix::zeros(n, n);
            for (i, row) in rows.iter().enumerate() {
                if row.len() != i + 1 {
                    return Err(at(
                        format!("{loc}[{i}]"),
                        format!("row {i} needs {} entries, has {}", i + 1, row.len()),
                    ));
                }
                for (j, v) in row.iter().enumerate() {
                    a[(i, j)] = *v;
                    a[(j, i)] = *v;
                }
            }
            Ok(a)
        }
    }
}

impl ProblemDocument {
    pub fn into_spec(self) -> Result<ProblemSpec> {
        let n = self.dim;
        if n == 0 {
            return Err(at("dim", "dimension must be positive"));
        }
        if self.pieces.is_empty() {
            return Err(at("pieces", "at least one piece is required"));
        }
        let mut pieces = Vec::with_capacity(self.pieces.len());
        for (i, p) in self.pieces.iter().enumerate() {
            let loc = format!("pieces[{i}]");
            if p.b.len() != n {
                return Err(at(format!("{loc}.b"), format!("{} entries for dimension {n}", p.b.len())));
            }
            let a = expand(&p.a, n, &format!("{loc}.A"))?;
            pieces.push(QuadPiece::new(a, p.b.clone(), p.c).map_err(|e| at(&loc, e.to_string()))?);
        }
        let quad = MaxQuadratic::new(n, pieces)?;

        let bounds = match self.bounds {
            Some(b) => BoxBounds::new(b.lower, b.upper).map_err(|e| at("box", e.to_string()))?,
            None => BoxBounds::cube(n, 10.0),
        };
        if bounds.dim() != n {
            return Err(at("box", format!("box has dimension {}, expected {n}", bounds.dim())));
        }
        let x1 = self.default_x1.unwrap_or_else(|| vec![0.0; n]);
        if x1.len() != n {
            return Err(at("default_x1", format!("{} entries for dimension {n}", x1.len())));
        }

        if let Some(r) = &self.reference {
            if r.x_star.len() != n {
                return Err(at("reference.x_star", format!("{} entries for dimension {n}", r.x_star.len())));
            }
            if !(r.alpha > 0.0) {
                return Err(Error::Validation("reference alpha must be positive".into()));
            }
            for (i, p) in quad.pieces().iter().enumerate() {
                if p.min_eigenvalue() <= 0.0 {
                    return Err(Error::Validation(format!(
                        "piece {i} is not positive definite, so the claimed growth constant cannot be certified"
                    )));
                }
            }
        }

        let spec = ProblemSpec::from_max_quadratic(self.name, quad, bounds, x1);
        Ok(match self.reference {
            Some(r) => spec.with_reference(r),
            None => spec,
        })
    }
}

/// Parses a JSON problem document. Syntax errors carry a line and column.
pub fn parse_problem_file(document: &[u8]) -> Result<ProblemSpec> {
    let doc: ProblemDocument = serde_json::from_slice(document)
        .map_err(|e| at(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
    doc.into_spec()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_identity_piece() {
        let doc = br#"{"name": "half-norm", "dim": 2, "pieces": [{"A": [[1], [0, 1]], "b": [0, 0], "c": 0}]}"#;
        let p = parse_problem_file(doc).unwrap();
        assert_eq!(p.eval(&[1.0, 0.0]).unwrap(), (0.5, vec![1.0, 0.0]));
        assert!(p.reference.is_none());
        assert_eq!(p.name, "half-norm");
    }

    #[test]
    fn two_affine_pieces_give_abs() {
        let doc = br#"{"name": "abs", "dim": 1, "pieces": [
            {"A": "zero", "b": [1], "c": 0},
            {"A": "zero", "b": [-1], "c": 0}]}"#;
        let p = parse_problem_file(doc).unwrap();
        assert_eq!(p.eval(&[1.0]).unwrap(), (1.0, vec![1.0]));
        assert_eq!(p.eval(&[-1.0]).unwrap(), (1.0, vec![-1.0]));
    }

    #[test]
    fn truncated_document_is_a_parse_error() {
        let doc = br#"{"name": "abs", "dim": 1, "pieces": [{"A": "zero", "b": [1"#;
        match parse_problem_file(doc) {
            Err(Error::Parse { location, .. }) => assert!(location.starts_with("line 1")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn growth_claim_needs_definite_pieces() {
        let doc = br#"{"name": "abs", "dim": 1, "pieces": [{"A": "zero", "b": [1], "c": 0}],
            "reference": {"x_star": [0], "f_star": 0, "alpha": 1}}"#;
        assert!(matches!(parse_problem_file(doc), Err(Error::Validation(_))));
    }

    #[test]
    fn malformed_triangle_reports_location() {
        let doc = br#"{"name": "x", "dim": 2, "pieces": [{"A": [[1], [0]], "b": [0, 0], "c": 0}]}"#;
        match parse_problem_file(doc) {
            Err(Error::Parse { location, .. }) => assert_eq!(location, "pieces[0].A[1]"),
            other => panic!("unexpected {other:?}"),
        }
        let doc = br#"{"name": "x", "dim": 1, "pieces": [{"A": "one", "b": [0], "c": 0}]}"#;
        assert!(parse_problem_file(doc).is_err());
        let doc = br#"{"name": "x", "dim": 1, "pieces": [{"A": "zero", "b": [0], "c": 0, "d": 1}]}"#;
        assert!(parse_problem_file(doc).is_err());
    }

    #[test]
    fn round_trip_through_serde() {
        let doc = ProblemDocument {
            name: "p".into(),
            dim: 1,
            pieces: vec![PieceDocument { a: MatrixSpec::LowerTriangle(vec![vec![2.0]]), b: vec![1.0], c: 0.0 }],
            reference: Some(Reference { x_star: vec![-0.5], f_star: -0.25, alpha: 1.0 }),
            bounds: None,
            default_x1: Some(vec![1.0]),
        };
        let text = serde_json::to_vec(&doc).unwrap();
        let p = parse_problem_file(&text).unwrap();
        assert_eq!(p.value(&[-0.5]).unwrap(), -0.25);
        assert_eq!(p.default_x1, vec![1.0]);
    }
}
