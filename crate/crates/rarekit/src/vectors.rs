//! Multivariate claim-vector models.
//!
//! Two constructions: independent marginals, and a discrete-spectral-
//! measure model (`MrvRay`) that places a regularly varying radius on a
//! finite set of simplex directions. The ray model admits closed forms
//! for everything the asymptotic checks need: the scalar-reduction tail
//! against any rare set and the limit measure of the set.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::EstimateCI;
use crate::rare_sets::RareSet;
use crate::rng::McRunner;
use crate::tails::TailModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub w: f64,
    pub dir: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VectorModel {
    IndependentMarginals { marginals: Vec<TailModel> },
    MrvRay {
        alpha: f64,
        radius: TailModel,
        rays: Vec<Ray>,
    },
}

impl VectorModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            VectorModel::IndependentMarginals { marginals } => {
                if marginals.is_empty() {
                    return Err(Error::InvalidParameter(
                        "need at least one marginal".into(),
                    ));
                }
                for m in marginals {
                    m.validate()?;
                }
                Ok(())
            }
            VectorModel::MrvRay { alpha, radius, rays } => {
                if !(*alpha > 0.0) {
                    return Err(Error::InvalidParameter("alpha must be positive".into()));
                }
                radius.validate()?;
                if rays.is_empty() {
                    return Err(Error::InvalidParameter("need at least one ray".into()));
                }
                let d = rays[0].dir.len();
                let mut total_w = 0.0;
                for ray in rays {
                    if ray.dir.len() != d {
                        return Err(Error::DimensionMismatch {
                            expected: d,
                            got: ray.dir.len(),
                        });
                    }
                    if !(ray.w > 0.0) {
                        return Err(Error::InvalidParameter(
                            "ray weights must be positive".into(),
                        ));
                    }
                    if ray.dir.iter().any(|&v| v < 0.0 || !v.is_finite()) {
                        return Err(Error::InvalidParameter(
                            "ray directions must be nonnegative".into(),
                        ));
                    }
                    let s: f64 = ray.dir.iter().sum();
                    if (s - 1.0).abs() > 1e-12 {
                        return Err(Error::InvalidParameter(format!(
                            "ray direction must lie on the unit simplex, sums to {s}"
                        )));
                    }
                    total_w += ray.w;
                }
                if (total_w - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "ray weights must sum to 1, got {total_w}"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            VectorModel::IndependentMarginals { marginals } => marginals.len(),
            VectorModel::MrvRay { rays, .. } => rays[0].dir.len(),
        }
    }

    /// Draws one vector into `out` (length `dim`).
    #[inline]
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            VectorModel::IndependentMarginals { marginals } => {
                for (slot, m) in out.iter_mut().zip(marginals) {
                    *slot = m.draw(rng);
                }
            }
            VectorModel::MrvRay { radius, rays, .. } => {
                let k = pick_ray(rays, rng);
                let r = radius.draw(rng);
                for (slot, w) in out.iter_mut().zip(&rays[k].dir) {
                    *slot = r * w;
                }
            }
        }
    }

    pub fn sample_vector<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..n)
            .map(|_| {
                let mut v = vec![0.0; d];
                self.sample_into(rng, &mut v);
                v
            })
            .collect()
    }

    /// Support values `s_k = max_p p' W_k` of the ray directions against
    /// a rare set.
    pub fn ray_supports(&self, set: &RareSet) -> Result<Vec<f64>> {
        match self {
            VectorModel::MrvRay { rays, .. } => rays
                .iter()
                .map(|ray| set.support_value(&ray.dir))
                .collect(),
            _ => Err(Error::InvalidParameter(
                "ray supports require a ray model".into(),
            )),
        }
    }

    /// Scalar-reduction samples `support(A, X_i)` for `n` draws.
    pub fn ya_sample<R: Rng + ?Sized>(
        &self,
        set: &RareSet,
        rng: &mut R,
        n: usize,
        seed: u64,
    ) -> Result<YaSampleBatch> {
        if set.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: set.dim(),
                got: self.dim(),
            });
        }
        let mut buf = vec![0.0; self.dim()];
        let values = (0..n)
            .map(|_| {
                self.sample_into(rng, &mut buf);
                set.support_value_unchecked(&buf)
            })
            .collect();
        Ok(YaSampleBatch {
            values,
            set: set.clone(),
            model: self.clone(),
            seed,
        })
    }

    /// Exact scalar-reduction tail `P[X in xA]` where a closed form
    /// exists:
    /// ray models mix the radius tail over the per-ray supports, and
    /// independent marginals admit a product form when every direction
    /// of the set is axis-aligned. `None` means no closed form; callers
    /// fall back to [`fa_tail_mc`](Self::fa_tail_mc).
    pub fn fa_tail_exact(&self, set: &RareSet, x: f64) -> Option<f64> {
        if set.dim() != self.dim() || !(x > 0.0) {
            return None;
        }
        match self {
            VectorModel::MrvRay { radius, rays, .. } => {
                let mut total = 0.0;
                for ray in rays {
                    let s = set.support_value_unchecked(&ray.dir);
                    if s > 0.0 {
                        total += ray.w * radius.tail(x / s);
                    }
                }
                Some(total)
            }
            VectorModel::IndependentMarginals { marginals } => {
                // axis-aligned family: each direction touches exactly one
                // coordinate; repeated axes keep the loosest threshold
                let d = self.dim();
                let mut best_p = vec![0.0f64; d];
                for p in set.directions() {
                    let mut axis = None;
                    for (i, &v) in p.iter().enumerate() {
                        if v > 0.0 {
                            if axis.is_some() {
                                return None;
                            }
                            axis = Some(i);
                        }
                    }
                    let i = axis?;
                    best_p[i] = best_p[i].max(p[i]);
                }
                let mut survive_all = 1.0;
                for (m, &p) in marginals.iter().zip(&best_p) {
                    if p > 0.0 {
                        survive_all *= 1.0 - m.tail(x / p);
                    }
                }
                Some(1.0 - survive_all)
            }
        }
    }

    /// Limit measure `mu(A)` of the ray model: the alpha-th powers of the
    /// per-ray supports, mixed by the spectral weights.
    pub fn mu_measure(&self, set: &RareSet) -> Result<f64> {
        match self {
            VectorModel::MrvRay { alpha, rays, .. } => {
                if set.dim() != self.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim(),
                        got: set.dim(),
                    });
                }
                let mut total = 0.0;
                for ray in rays {
                    let s = set.support_value_unchecked(&ray.dir);
                    if s > 0.0 {
                        total += ray.w * s.powf(*alpha);
                    }
                }
                Ok(total)
            }
            _ => Err(Error::InvalidParameter(
                "limit measure requires a ray model".into(),
            )),
        }
    }

    /// Monte Carlo estimate of `P[X in xA]`.
    pub fn fa_tail_mc(
        &self,
        set: &RareSet,
        x: f64,
        runner: &McRunner,
        n: u64,
    ) -> Result<EstimateCI> {
        if set.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: set.dim(),
                got: self.dim(),
            });
        }
        if n < 100 {
            return Err(Error::InvalidParameter(format!(
                "need at least 100 samples, got {n}"
            )));
        }
        if !(x > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "threshold must be positive, got {x}"
            )));
        }
        let d = self.dim();
        let hits: u64 = runner
            .run(n, |rng, len| {
                let mut buf = vec![0.0; d];
                let mut h = 0u64;
                for _ in 0..len {
                    self.sample_into(rng, &mut buf);
                    if set.support_value_unchecked(&buf) > x {
                        h += 1;
                    }
                }
                h
            })
            .into_iter()
            .sum();
        Ok(EstimateCI::from_hits(hits, n, runner.seed))
    }
}

/// Scalar-reduction sample batch, carrying its provenance.
#[derive(Debug, Clone)]
pub struct YaSampleBatch {
    pub values: Vec<f64>,
    pub set: RareSet,
    pub model: VectorModel,
    pub seed: u64,
}

#[inline]
pub(crate) fn pick_ray<R: Rng + ?Sized>(rays: &[Ray], rng: &mut R) -> usize {
    if rays.len() == 1 {
        return 0;
    }
    let mut u: f64 = rng.gen();
    for (k, ray) in rays.iter().enumerate() {
        u -= ray.w;
        if u < 0.0 {
            return k;
        }
    }
    rays.len() - 1
}
