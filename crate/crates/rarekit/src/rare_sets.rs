//! Rare sets represented by finite families of direction vectors.
//!
//! A set in the admissible family (open, increasing, convex complement,
//! origin outside the closure) is stored as the finite list of
//! nonnegative directions `p` for which `A = {x : p'x > 1 for some p}`.
//! The scalar reduction of a vector against the set is the support value
//! `sup_p p'x`; membership of `x` in the scaled set `uA` is the strict
//! comparison `support(x) > u`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Polyhedral rare set: finite direction family plus the ambient
/// dimension. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RareSet {
    directions: Vec<Vec<f64>>,
    dim: usize,
}

impl RareSet {
    /// Builds a rare set, checking that every direction is nonnegative,
    /// nonzero and of the right length.
    pub fn new(directions: Vec<Vec<f64>>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if directions.is_empty() {
            return Err(Error::InvalidParameter(
                "direction family must be nonempty".into(),
            ));
        }
        for p in &directions {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            if p.iter().any(|&v| !v.is_finite() || v < 0.0) {
                return Err(Error::InvalidParameter(
                    "directions must be finite and nonnegative".into(),
                ));
            }
            if p.iter().all(|&v| v == 0.0) {
                return Err(Error::InvalidParameter(
                    "directions must be nonzero".into(),
                ));
            }
        }
        Ok(RareSet { directions, dim })
    }

    /// Half-space `{x : x_1 + ... + x_d > 1}`.
    pub fn total_sum(dim: usize) -> Self {
        RareSet::new(vec![vec![1.0; dim]], dim).expect("valid by construction")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn directions(&self) -> &[Vec<f64>] {
        &self.directions
    }

    /// `sup_p p'x` over the direction family. Equals the largest `u` with
    /// `x` in `uA` whenever that supremum is positive.
    pub fn support_value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(self.support_value_unchecked(x))
    }

    /// Same as [`support_value`](Self::support_value) without the length
    /// check; hot path for samplers that guarantee the dimension.
    #[inline]
    pub fn support_value_unchecked(&self, x: &[f64]) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for p in &self.directions {
            let mut dot = 0.0;
            for (pi, xi) in p.iter().zip(x) {
                dot += pi * xi;
            }
            if dot > best {
                best = dot;
            }
        }
        best
    }

    /// Strict membership `x in uA`, i.e. `support_value(x) > u`.
    pub fn contains(&self, x: &[f64], u: f64) -> Result<bool> {
        if !(u > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "membership threshold must be positive, got {u}"
            )));
        }
        Ok(self.support_value(x)? > u)
    }

    /// The scaled set `cA`, whose directions are `p / c`.
    pub fn scale(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "scale factor must be positive and finite, got {c}"
            )));
        }
        let directions = self
            .directions
            .iter()
            .map(|p| p.iter().map(|v| v / c).collect())
            .collect();
        Ok(RareSet {
            directions,
            dim: self.dim,
        })
    }
}

/// Canonical ruin sets: some line of business goes negative, or the
/// total across lines goes negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RuinSetKind {
    AnyComponent,
    TotalSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuinSet {
    #[serde(flatten)]
    pub kind: RuinSetKind,
    pub dim: usize,
}

impl RuinSet {
    pub fn new(kind: RuinSetKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        Ok(RuinSet { kind, dim })
    }
}

/// Transforms a ruin set `L` and a capital allocation `l` into the rare
/// set `A = l - L`:
/// for the total-sum ruin set the directions collapse to the all-ones
/// vector (the allocation cancels), and for the any-component ruin set
/// each line contributes the axis direction `e_i / l_i`.
pub fn ruin_set_to_rare_set(allocation: &[f64], ruin_set: &RuinSet) -> Result<RareSet> {
    if allocation.len() != ruin_set.dim {
        return Err(Error::DimensionMismatch {
            expected: ruin_set.dim,
            got: allocation.len(),
        });
    }
    if allocation.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::InvalidParameter(
            "allocation weights must be positive".into(),
        ));
    }
    let total: f64 = allocation.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "allocation weights must sum to 1, got {total}"
        )));
    }
    let d = ruin_set.dim;
    let directions = match ruin_set.kind {
        RuinSetKind::TotalSum => vec![vec![1.0; d]],
        RuinSetKind::AnyComponent => (0..d)
            .map(|i| {
                let mut p = vec![0.0; d];
                p[i] = 1.0 / allocation[i];
                p
            })
            .collect(),
    };
    RareSet::new(directions, d)
}
