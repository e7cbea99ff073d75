//! Dense vector helpers on `f64` slices.

#[inline]
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[inline]
pub fn norm_sq(x: &[f64]) -> f64 {
    dot(x, x)
}

#[inline]
pub fn norm(x: &[f64]) -> f64 {
    norm_sq(x).sqrt()
}

/// ‖x − y‖²
#[inline]
pub fn dist_sq(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// ⟨g, x − z⟩ without forming the difference.
#[inline]
pub fn dot_diff(g: &[f64], x: &[f64], z: &[f64]) -> f64 {
    debug_assert_eq!(g.len(), x.len());
    g.iter().zip(x.iter().zip(z)).map(|(gi, (xi, zi))| gi * (xi - zi)).sum()
}

/// y ← y + a·x
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn sub(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

pub fn all_finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BoxBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> crate::Result<Self> {
        crate::error::check_dim(lower.len(), upper.len())?;
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite()) {
            return Err(crate::Error::InvalidInput("box bounds must be finite with lower <= upper".into()));
        }
        Ok(BoxBounds { lower, upper })
    }

    /// The cube `[-r, r]^n`.
    pub fn cube(dim: usize, r: f64) -> Self {
        BoxBounds { lower: vec![-r; dim], upper: vec![r; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| l <= v && v <= u)
    }

    /// Largest distance from `x` to a corner of the box.
    pub fn max_dist_from(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| {
                let d = (v - l).abs().max((u - v).abs());
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Uniform sample from the box.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| if l < u { rng.gen_range(*l..=*u) } else { *l }).collect()
    }
}
