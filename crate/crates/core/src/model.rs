//! Piecewise-linear lower models of the objective.
//!
//! Two shapes are supported. The multi-cut model keeps an explicit bundle of
//! linearizations `F(z_j) + <g_j, x - z_j>`; the aggregate model keeps one
//! affine function built from past cuts plus the cut at the latest trial
//! point. Model values are immutable: every update returns a new model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{all_finite, dot, dot_diff, norm};
use crate::proxqp::ProxSolution;

/// Multipliers above this value mark a cut as active.
pub const DEFAULT_ACTIVITY_TOL: f64 = 1e-10;

/// A linearization of the objective at `point`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub id: u64,
    pub point: Vec<f64>,
    pub value: f64,
    pub subgrad: Vec<f64>,
}

impl Cut {
    pub fn new(id: u64, point: Vec<f64>, value: f64, subgrad: Vec<f64>) -> Result<Self> {
        check_dim(point.len(), subgrad.len())?;
        if id == 0 {
            return Err(Error::InvalidInput("cut ids start at 1".into()));
        }
        if !value.is_finite() || !all_finite(&point) || !all_finite(&subgrad) {
            return Err(Error::InvalidInput(format!("cut {id} has non-finite entries")));
        }
        Ok(Cut { id, point, value, subgrad })
    }

    pub fn dim(&self) -> usize {
        self.point.len()
    }

    /// `value + <subgrad, x - point>`; exact at `point`.
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.value + dot_diff(&self.subgrad, x, &self.point)
    }
}

/// An affine function `intercept + <slope, x>`, or the constant −∞.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMinorant {
    pub slope: Vec<f64>,
    pub intercept: f64,
    pub is_bottom: bool,
}

impl AffineMinorant {
    /// The identically −∞ function.
    pub fn bottom(dim: usize) -> Self {
        AffineMinorant { slope: vec![0.0; dim], intercept: 0.0, is_bottom: true }
    }

    pub fn new(slope: Vec<f64>, intercept: f64) -> Result<Self> {
        if !intercept.is_finite() || !all_finite(&slope) {
            return Err(Error::InvalidInput("affine minorant has non-finite entries".into()));
        }
        Ok(AffineMinorant { slope, intercept, is_bottom: false })
    }

    /// The affine function with the given slope that takes `value` at `point`.
    pub fn through(point: &[f64], value: f64, slope: Vec<f64>) -> Result<Self> {
        check_dim(slope.len(), point.len())?;
        let intercept = value - dot(&slope, point);
        Self::new(slope, intercept)
    }

    pub fn dim(&self) -> usize {
        self.slope.len()
    }

    /// `None` for the bottom function.
    #[inline]
    pub fn eval(&self, x: &[f64]) -> Option<f64> {
        (!self.is_bottom).then(|| self.intercept + dot(&self.slope, x))
    }
}

/// Identifies one affine piece of a model. The aggregate sorts before every
/// cut, so it wins ties in [`CuttingPlaneModel::evaluate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PieceId {
    Aggregate,
    Cut(u64),
}

impl fmt::Display for PieceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PieceId::Aggregate => write!(f, "aggregate"),
            PieceId::Cut(id) => write!(f, "cut#{id}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    MultiCut,
    Aggregate,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::MultiCut => "multi-cut",
            Variant::Aggregate => "aggregate",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "multi-cut" | "multicut" | "multi" => Ok(Variant::MultiCut),
            "aggregate" | "aggregation" | "agg" => Ok(Variant::Aggregate),
            other => Err(Error::InvalidInput(format!("unknown variant '{other}' (expected multi-cut or aggregate)"))),
        }
    }
}

/// Which cuts survive a bundle update, beyond the mandatory ones (the newest
/// cut and every cut carrying a positive multiplier).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrunePolicy {
    #[default]
    KeepAll,
    KeepActive,
    MaxSize(usize),
}

impl fmt::Display for PrunePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrunePolicy::KeepAll => write!(f, "keep-all"),
            PrunePolicy::KeepActive => write!(f, "keep-active"),
            PrunePolicy::MaxSize(m) => write!(f, "max-size:{m}"),
        }
    }
}

impl FromStr for PrunePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        match s.as_str() {
            "keep-all" => Ok(PrunePolicy::KeepAll),
            "keep-active" => Ok(PrunePolicy::KeepActive),
            _ => s
                .strip_prefix("max-size:")
                .and_then(|m| m.parse::<usize>().ok())
                .filter(|&m| m > 0)
                .map(PrunePolicy::MaxSize)
                .ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "unknown prune policy '{s}' (expected keep-all, keep-active or max-size:<m>)"
                    ))
                }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Pieces {
    MultiCut(Vec<Cut>),
    Aggregate { aggregate: AffineMinorant, newest: Cut },
}

/// A max-of-affine lower model of the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct CuttingPlaneModel {
    pieces: Pieces,
}

impl CuttingPlaneModel {
    /// Multi-cut model holding a single cut.
    pub fn multi_cut(first: Cut) -> Self {
        CuttingPlaneModel { pieces: Pieces::MultiCut(vec![first]) }
    }

    /// Multi-cut model from an explicit bundle; ids must be strictly increasing.
    pub fn from_cuts(cuts: Vec<Cut>) -> Result<Self> {
        let first =
            cuts.first().ok_or_else(|| Error::InvalidInput("a multi-cut model needs at least one cut".into()))?;
        let n = first.dim();
        for w in cuts.windows(2) {
            if w[1].id <= w[0].id {
                return Err(Error::InvalidInput(format!(
                    "cut ids must be strictly increasing ({} after {})",
                    w[1].id, w[0].id
                )));
            }
        }
        for c in &cuts {
            check_dim(n, c.dim())?;
        }
        Ok(CuttingPlaneModel { pieces: Pieces::MultiCut(cuts) })
    }

    /// Aggregate model at the first iteration: bottom aggregate plus one cut.
    pub fn aggregate(first: Cut) -> Self {
        let aggregate = AffineMinorant::bottom(first.dim());
        CuttingPlaneModel { pieces: Pieces::Aggregate { aggregate, newest: first } }
    }

    pub fn from_aggregate(aggregate: AffineMinorant, newest: Cut) -> Result<Self> {
        check_dim(newest.dim(), aggregate.dim())?;
        Ok(CuttingPlaneModel { pieces: Pieces::Aggregate { aggregate, newest } })
    }

    /// Starting model of the chosen variant.
    pub fn initial(variant: Variant, first: Cut) -> Self {
        match variant {
            Variant::MultiCut => Self::multi_cut(first),
            Variant::Aggregate => Self::aggregate(first),
        }
    }

    pub fn variant(&self) -> Variant {
        match self.pieces {
            Pieces::MultiCut(_) => Variant::MultiCut,
            Pieces::Aggregate { .. } => Variant::Aggregate,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.pieces {
            Pieces::MultiCut(cuts) => cuts[0].dim(),
            Pieces::Aggregate { newest, .. } => newest.dim(),
        }
    }

    /// The bundle of a multi-cut model, `None` for the aggregate variant.
    pub fn cuts(&self) -> Option<&[Cut]> {
        match &self.pieces {
            Pieces::MultiCut(cuts) => Some(cuts),
            Pieces::Aggregate { .. } => None,
        }
    }

    /// `(aggregate, newest)` of an aggregate model.
    pub fn aggregate_parts(&self) -> Option<(&AffineMinorant, &Cut)> {
        match &self.pieces {
            Pieces::MultiCut(_) => None,
            Pieces::Aggregate { aggregate, newest } => Some((aggregate, newest)),
        }
    }

    /// Largest cut id present.
    pub fn newest_id(&self) -> u64 {
        match &self.pieces {
            Pieces::MultiCut(cuts) => cuts.last().map_or(0, |c| c.id),
            Pieces::Aggregate { newest, .. } => newest.id,
        }
    }

    /// Piece identifiers in ascending order, skipping a bottom aggregate.
    pub fn piece_ids(&self) -> Vec<PieceId> {
        match &self.pieces {
            Pieces::MultiCut(cuts) => cuts.iter().map(|c| PieceId::Cut(c.id)).collect(),
            Pieces::Aggregate { aggregate, newest } => {
                let mut ids = Vec::with_capacity(2);
                if !aggregate.is_bottom {
                    ids.push(PieceId::Aggregate);
                }
                ids.push(PieceId::Cut(newest.id));
                ids
            }
        }
    }

    pub fn num_pieces(&self) -> usize {
        match &self.pieces {
            Pieces::MultiCut(cuts) => cuts.len(),
            Pieces::Aggregate { aggregate, .. } => 1 + usize::from(!aggregate.is_bottom),
        }
    }

    /// Slopes of the pieces, ordered as [`Self::piece_ids`].
    pub fn piece_slopes(&self) -> Vec<&[f64]> {
        match &self.pieces {
            Pieces::MultiCut(cuts) => cuts.iter().map(|c| c.subgrad.as_slice()).collect(),
            Pieces::Aggregate { aggregate, newest } => {
                let mut s = Vec::with_capacity(2);
                if !aggregate.is_bottom {
                    s.push(aggregate.slope.as_slice());
                }
                s.push(newest.subgrad.as_slice());
                s
            }
        }
    }

    /// Values of all pieces at `x`, ordered as [`Self::piece_ids`].
    pub fn piece_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(self.piece_values_unchecked(x))
    }

    pub(crate) fn piece_values_unchecked(&self, x: &[f64]) -> Vec<f64> {
        match &self.pieces {
            Pieces::MultiCut(cuts) => cuts.iter().map(|c| c.eval(x)).collect(),
            Pieces::Aggregate { aggregate, newest } => {
                let mut v = Vec::with_capacity(2);
                if let Some(a) = aggregate.eval(x) {
                    v.push(a);
                }
                v.push(newest.eval(x));
                v
            }
        }
    }

    /// Model value at `x` and the lowest-id piece attaining it.
    pub fn evaluate(&self, x: &[f64]) -> Result<(f64, PieceId)> {
        check_dim(self.dim(), x.len())?;
        let ids = self.piece_ids();
        let values = self.piece_values_unchecked(x);
        let mut best = 0;
        for (i, v) in values.iter().enumerate().skip(1) {
            // ids are ascending, so strict comparison keeps the lowest id on ties
            if *v > values[best] {
                best = i;
            }
        }
        Ok((values[best], ids[best]))
    }

    /// Adds the linearization at a new trial point. Multi-cut models append it;
    /// aggregate models replace their newest cut.
    pub fn add_cut(&self, cut: Cut) -> Result<Self> {
        let mut model = self.clone();
        model.push_cut(cut)?;
        Ok(model)
    }

    /// In-place form of [`Self::add_cut`].
    pub fn push_cut(&mut self, cut: Cut) -> Result<()> {
        check_dim(self.dim(), cut.dim())?;
        if cut.id <= self.newest_id() {
            return Err(Error::InvalidInput(format!(
                "cut id {} is not larger than existing id {}",
                cut.id,
                self.newest_id()
            )));
        }
        match &mut self.pieces {
            Pieces::MultiCut(cuts) => cuts.push(cut),
            Pieces::Aggregate { newest, .. } => *newest = cut,
        }
        Ok(())
    }

    /// Like [`Self::push_cut`] with borrowed data. The aggregate variant
    /// copies into the storage of the cut being replaced.
    pub fn push_cut_from(&mut self, id: u64, point: &[f64], value: f64, subgrad: &[f64]) -> Result<()> {
        let newest_id = self.newest_id();
        match &mut self.pieces {
            Pieces::Aggregate { newest, .. } => {
                check_dim(newest.dim(), point.len())?;
                check_dim(newest.dim(), subgrad.len())?;
                if id <= newest_id {
                    return Err(Error::InvalidInput(format!("cut id {id} is not larger than existing id {newest_id}")));
                }
                if !value.is_finite() || !all_finite(point) || !all_finite(subgrad) {
                    return Err(Error::InvalidInput(format!("cut {id} has non-finite entries")));
                }
                newest.id = id;
                newest.point.copy_from_slice(point);
                newest.value = value;
                newest.subgrad.copy_from_slice(subgrad);
                Ok(())
            }
            Pieces::MultiCut(_) => self.push_cut(Cut::new(id, point.to_vec(), value, subgrad.to_vec())?),
        }
    }

    /// Bundle selection for the multi-cut variant.
    ///
    /// The newest cut and every cut whose multiplier exceeds `activity_tol`
    /// are always kept. `multipliers` is aligned with [`Self::cuts`].
    pub fn prune(&self, multipliers: &[f64], newest_id: u64, policy: PrunePolicy, activity_tol: f64) -> Result<Self> {
        let mut model = self.clone();
        model.prune_in_place(multipliers, newest_id, policy, activity_tol)?;
        Ok(model)
    }

    /// In-place form of [`Self::prune`]; leaves the model untouched on error.
    pub fn prune_in_place(
        &mut self,
        multipliers: &[f64],
        newest_id: u64,
        policy: PrunePolicy,
        activity_tol: f64,
    ) -> Result<()> {
        let Pieces::MultiCut(cuts) = &mut self.pieces else {
            return Err(Error::InvalidInput("prune applies to multi-cut models only".into()));
        };
        if multipliers.len() != cuts.len() {
            return Err(Error::InvalidInput(format!("{} multipliers for {} cuts", multipliers.len(), cuts.len())));
        }
        if !cuts.iter().any(|c| c.id == newest_id) {
            return Err(Error::InvalidInput(format!("newest cut {newest_id} is not in the bundle")));
        }
        let mandatory: Vec<bool> =
            cuts.iter().zip(multipliers).map(|(c, &l)| c.id == newest_id || l > activity_tol).collect();
        let n_mandatory = mandatory.iter().filter(|&&m| m).count();

        let keep: Vec<bool> = match policy {
            PrunePolicy::KeepAll => vec![true; cuts.len()],
            PrunePolicy::KeepActive => mandatory,
            PrunePolicy::MaxSize(cap) => {
                if n_mandatory > cap {
                    return Err(Error::PolicyInfeasible { mandatory: n_mandatory, cap });
                }
                let mut keep = mandatory.clone();
                let mut optional: Vec<usize> = (0..cuts.len()).filter(|&i| !mandatory[i]).collect();
                // highest multiplier first, then the most recent cut
                optional.sort_by(|&a, &b| multipliers[b].total_cmp(&multipliers[a]).then(cuts[b].id.cmp(&cuts[a].id)));
                for i in optional.into_iter().take(cap - n_mandatory) {
                    keep[i] = true;
                }
                keep
            }
        };
        let mut keep = keep.into_iter();
        cuts.retain(|_| keep.next().unwrap_or(false));
        Ok(())
    }

    /// Replaces the aggregate by the affine function with slope `s` that is
    /// exact for the model at the trial point `z`.
    ///
    /// The convex-combination weight of the old aggregate is read off the dual
    /// multipliers; the combination must reproduce `s` and the model value at
    /// `z`, otherwise the solution does not belong to this model.
    pub fn aggregate_update(&self, solution: &ProxSolution) -> Result<Self> {
        let mut model = self.clone();
        model.aggregate_update_in_place(solution)?;
        Ok(model)
    }

    /// In-place form of [`Self::aggregate_update`]; leaves the model untouched on error.
    pub fn aggregate_update_in_place(&mut self, solution: &ProxSolution) -> Result<()> {
        let num_pieces = self.num_pieces();
        let n = self.dim();
        let Pieces::Aggregate { aggregate, newest } = &mut self.pieces else {
            return Err(Error::InvalidInput("aggregate_update needs an aggregate model".into()));
        };
        check_dim(n, solution.z_next.len())?;
        check_dim(n, solution.s.len())?;
        if solution.multipliers.len() != num_pieces {
            return Err(Error::InvalidInput(format!(
                "solution has {} multipliers, model has {num_pieces} pieces",
                solution.multipliers.len(),
            )));
        }
        let theta = if aggregate.is_bottom { 0.0 } else { solution.multipliers[0] };
        let z = &solution.z_next;

        let mut combo_val = (1.0 - theta) * newest.eval(z);
        if let Some(a) = aggregate.eval(z) {
            combo_val += theta * a;
        }
        // theta is zero for the bottom aggregate, whose slope is then irrelevant
        let slope_err = newest
            .subgrad
            .iter()
            .zip(&aggregate.slope)
            .zip(&solution.s)
            .map(|((g, a), s)| ((1.0 - theta) * g + theta * a - s).abs())
            .fold(0.0, f64::max);
        let scale = 1.0 + norm(&newest.subgrad).max(norm(&aggregate.slope));
        let val_scale = 1.0 + solution.model_val.abs();
        let val_err = (combo_val - solution.model_val).abs();
        if slope_err > 1e-7 * scale || val_err > 1e-7 * val_scale {
            return Err(Error::InvalidInput(format!(
                "solution does not match the model (slope error {slope_err:.3e}, value error {val_err:.3e})"
            )));
        }

        // overwrite in place; this runs once per iteration of the aggregate variant
        let intercept = solution.model_val - dot(&solution.s, z);
        if !intercept.is_finite() || !all_finite(&solution.s) {
            return Err(Error::InvalidInput("affine minorant has non-finite entries".into()));
        }
        aggregate.slope.copy_from_slice(&solution.s);
        aggregate.intercept = intercept;
        aggregate.is_bottom = false;
        Ok(())
    }
}
