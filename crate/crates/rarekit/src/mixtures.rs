//! Scale mixtures `Theta * X` under conditional dependence.
//!
//! The dependence between the scalar factor and the vector's scalar
//! reduction is realized by an FGM copula, coupling Theta with the
//! radius of a ray model. That choice keeps the conditional law in
//! closed form: the induced weight function is
//! `h(t) = 1 + theta_fgm * (2 F_Theta(t) - 1)`, bounded by
//! `1 + |theta_fgm|`, with unit mean for continuous Theta, and
//! independence is the special case `theta_fgm = 0`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{EstimateCI, RatioAcc};
use crate::quad::tanh_sinh;
use crate::rare_sets::RareSet;
use crate::rng::McRunner;
use crate::tails::TailModel;
use crate::vectors::{pick_ray, VectorModel};

/// FGM coupling between a nonnegative scalar factor and the vector it
/// scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FgmCoupling {
    pub theta: TailModel,
    pub fgm_theta: f64,
}

impl FgmCoupling {
    pub fn new(theta: TailModel, fgm_theta: f64) -> Result<Self> {
        let c = FgmCoupling { theta, fgm_theta };
        c.validate()?;
        Ok(c)
    }

    pub fn independent(theta: TailModel) -> Result<Self> {
        FgmCoupling::new(theta, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        self.theta.validate()?;
        if !(self.fgm_theta.abs() <= 0.99) {
            return Err(Error::InvalidParameter(format!(
                "fgm_theta must lie in [-0.99, 0.99], got {}",
                self.fgm_theta
            )));
        }
        // a degenerate factor is independent of everything; a nonzero
        // copula parameter would make the h formula lie about that
        if matches!(self.theta, TailModel::Degenerate { .. }) && self.fgm_theta != 0.0 {
            return Err(Error::InvalidParameter(
                "degenerate theta is independent of the vector; use fgm_theta = 0".into(),
            ));
        }
        Ok(())
    }

    /// The conditional-dependence weight `h(t)`.
    pub fn h_value(&self, t: f64) -> Result<f64> {
        let (lo, hi) = self.theta.support();
        if t < lo || hi.map_or(false, |h| t > h) {
            return Err(Error::InvalidParameter(format!(
                "t = {t} outside the support of the theta model"
            )));
        }
        Ok(1.0 + self.fgm_theta * (2.0 * self.theta.cdf(t) - 1.0))
    }

    /// Uniform upper bound for `h`.
    pub fn h_upper_bound(&self) -> f64 {
        1.0 + self.fgm_theta.abs()
    }

    /// `E[h(Theta)]` by quadrature over the survival grade. Equals 1 for
    /// continuous theta models.
    pub fn expected_h(&self) -> f64 {
        if let TailModel::Degenerate { c } = self.theta {
            return self.h_value(c).expect("degenerate point lies in the support");
        }
        let th = self.fgm_theta;
        tanh_sinh(|q| 1.0 + th * (1.0 - 2.0 * q), 0.0, 1.0, 1e-12)
    }

    /// Joint grade draw `(v, u)` from the FGM copula: `v` is the theta
    /// grade, `u` the coupled grade for the scaled quantity.
    #[inline]
    pub fn draw_grades<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let v: f64 = rng.gen();
        let w: f64 = rng.gen();
        (v, fgm_conditional_u(self.fgm_theta, v, w))
    }
}

/// Inverse of the conditional FGM distribution: solves
/// `C_{1|2}(u | v) = w` for `u`. The conditional CDF is quadratic in
/// `u`, so the inverse is the root of
/// `a u^2 - (1 + a) u + w = 0` with `a = theta (1 - 2v)`.
#[inline]
pub fn fgm_conditional_u(theta: f64, v: f64, w: f64) -> f64 {
    let a = theta * (1.0 - 2.0 * v);
    if a.abs() < 1e-12 {
        return w;
    }
    let b = 1.0 + a;
    let u = (b - (b * b - 4.0 * a * w).sqrt()) / (2.0 * a);
    u.clamp(0.0, 1.0)
}

/// `E[Theta^alpha h(Theta)]`, the constant of the dependent scaling
/// asymptotic. Closed form for a degenerate factor, tanh-sinh
/// quadrature over the survival grade otherwise. Errors when no moment
/// of order above `alpha` exists.
pub fn breiman_constant(coupling: &FgmCoupling, alpha: f64) -> Result<f64> {
    coupling.validate()?;
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter("alpha must be positive".into()));
    }
    match coupling.theta {
        TailModel::Degenerate { c } => return Ok(c.powf(alpha) * coupling.h_value(c)?),
        TailModel::Pareto { alpha: at, .. } if at <= alpha => {
            return Err(Error::MomentDivergence(format!(
                "E[Theta^p] must be finite for some p > {alpha}; Pareto({at}) theta has none"
            )));
        }
        TailModel::LogPareto { .. } => {
            return Err(Error::MomentDivergence(format!(
                "E[Theta^p] must be finite for some p > {alpha}; log-Pareto theta has no positive moments"
            )));
        }
        _ => {}
    }
    let th = coupling.fgm_theta;
    let model = coupling.theta;
    Ok(tanh_sinh(
        |q| model.quantile(q).powf(alpha) * (1.0 + th * (1.0 - 2.0 * q)),
        0.0,
        1.0,
        1e-12,
    ))
}

/// A vector model, a rare set, and the coupling of the scale factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePair {
    pub vector_model: VectorModel,
    pub set: RareSet,
    pub coupling: FgmCoupling,
}

/// One joint draw: the factor, the scalar reduction of the unscaled
/// vector, and (implicitly) the vector itself via radius and ray.
struct JointDraw {
    theta: f64,
    radius: f64,
    ray: usize,
}

impl MixturePair {
    pub fn new(vector_model: VectorModel, set: RareSet, coupling: FgmCoupling) -> Result<Self> {
        vector_model.validate()?;
        coupling.validate()?;
        if vector_model.dim() != set.dim() {
            return Err(Error::DimensionMismatch {
                expected: set.dim(),
                got: vector_model.dim(),
            });
        }
        Ok(MixturePair {
            vector_model,
            set,
            coupling,
        })
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    fn require_joint_sampler(&self) -> Result<()> {
        match &self.vector_model {
            VectorModel::MrvRay { .. } => Ok(()),
            _ if self.coupling.fgm_theta == 0.0 => Ok(()),
            _ => Err(Error::InvalidParameter(
                "joint coupled sampling needs an exact scalar-reduction quantile; \
                 use an mrv_ray vector model"
                    .into(),
            )),
        }
    }

    /// Draws `(theta, y_a, theta * y_a)` jointly, `n` times.
    pub fn sample_pair<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        n: usize,
    ) -> Result<Vec<(f64, f64, f64)>> {
        self.require_joint_sampler()?;
        let ctx = PairContext::new(self)?;
        Ok((0..n)
            .map(|_| {
                let (theta, ya) = ctx.draw_theta_ya(self, rng);
                (theta, ya, theta * ya)
            })
            .collect())
    }

    /// Exact (closed-form or quadrature) tail of the scaled reduction
    /// `P[Theta Y_A > x]`. `None` when no deterministic evaluation
    /// exists for this model combination.
    pub fn mixture_tail_exact(&self, x: f64) -> Option<f64> {
        if !(x > 0.0) {
            return None;
        }
        if let TailModel::Degenerate { c } = self.coupling.theta {
            return self.vector_model.fa_tail_exact(&self.set, x / c);
        }
        match &self.vector_model {
            VectorModel::MrvRay { radius, rays, .. } => {
                let th = self.coupling.fgm_theta;
                let theta_model = self.coupling.theta;
                let radius = *radius;
                let mut total = 0.0;
                for ray in rays {
                    let s = self.set.support_value_unchecked(&ray.dir);
                    if s <= 0.0 {
                        continue;
                    }
                    let term = tanh_sinh(
                        |v| {
                            let t = theta_model.quantile(1.0 - v);
                            if t <= 0.0 {
                                return 0.0;
                            }
                            let u = 1.0 - radius.tail(x / (s * t));
                            (1.0 - u) * (1.0 + th * u * (2.0 * v - 1.0))
                        },
                        0.0,
                        1.0,
                        1e-10,
                    );
                    total += ray.w * term;
                }
                Some(total)
            }
            _ => None,
        }
    }
}

/// Precomputed per-pair sampling context (ray supports against the
/// pair's own set).
struct PairContext {
    supports: Vec<f64>,
}

impl PairContext {
    fn new(pair: &MixturePair) -> Result<Self> {
        let supports = match &pair.vector_model {
            VectorModel::MrvRay { .. } => pair.vector_model.ray_supports(&pair.set)?,
            _ => Vec::new(),
        };
        Ok(PairContext { supports })
    }

    #[inline]
    fn draw_joint<R: Rng + ?Sized>(&self, pair: &MixturePair, rng: &mut R) -> JointDraw {
        match &pair.vector_model {
            VectorModel::MrvRay { radius, rays, .. } => {
                let (v, u) = pair.coupling.draw_grades(rng);
                let theta = pair.coupling.theta.quantile(1.0 - v);
                let r = radius.quantile(1.0 - u);
                let k = pick_ray(rays, rng);
                JointDraw {
                    theta,
                    radius: r,
                    ray: k,
                }
            }
            _ => unreachable!("guarded by require_joint_sampler"),
        }
    }

    /// `(theta, y_a)` for scalar-only consumers.
    #[inline]
    fn draw_theta_ya<R: Rng + ?Sized>(&self, pair: &MixturePair, rng: &mut R) -> (f64, f64) {
        match &pair.vector_model {
            VectorModel::MrvRay { .. } => {
                let d = self.draw_joint(pair, rng);
                (d.theta, d.radius * self.supports[d.ray])
            }
            _ => {
                // independent case for non-ray models
                let theta = pair.coupling.theta.draw(rng);
                let mut buf = vec![0.0; pair.dim()];
                pair.vector_model.sample_into(rng, &mut buf);
                (theta, pair.set.support_value_unchecked(&buf))
            }
        }
    }

    /// Adds `theta * X` into `acc` and returns `theta * y_a`.
    #[inline]
    fn add_scaled_vector<R: Rng + ?Sized>(
        &self,
        pair: &MixturePair,
        rng: &mut R,
        acc: &mut [f64],
    ) -> f64 {
        match &pair.vector_model {
            VectorModel::MrvRay { rays, .. } => {
                let d = self.draw_joint(pair, rng);
                let scale = d.theta * d.radius;
                for (slot, w) in acc.iter_mut().zip(&rays[d.ray].dir) {
                    *slot += scale * w;
                }
                scale * self.supports[d.ray]
            }
            _ => {
                let theta = pair.coupling.theta.draw(rng);
                let mut buf = vec![0.0; pair.dim()];
                pair.vector_model.sample_into(rng, &mut buf);
                let mut ya = pair.set.support_value_unchecked(&buf);
                for (slot, xi) in acc.iter_mut().zip(&buf) {
                    *slot += theta * xi;
                }
                ya *= theta;
                ya
            }
        }
    }
}

/// Monte-Carlo verification rows for the dependent scaling asymptotic:
/// the estimated tail of `Theta Y_A` divided by
/// `E[Theta^alpha h(Theta)] * P[Y_A > x]`.
pub fn verify_breiman(
    pair: &MixturePair,
    alpha: f64,
    x_grid: &[f64],
    runner: &McRunner,
    n: u64,
) -> Result<Vec<(f64, EstimateCI)>> {
    pair.require_joint_sampler()?;
    let constant = breiman_constant(&pair.coupling, alpha)?;
    let denominators: Vec<f64> = x_grid
        .iter()
        .map(|&x| {
            pair.vector_model
                .fa_tail_exact(&pair.set, x)
                .map(|t| constant * t)
                .ok_or_else(|| {
                    Error::ExactTailUnavailable(format!(
                        "no closed-form set tail at x = {x}; use an mrv_ray model"
                    ))
                })
        })
        .collect::<Result<_>>()?;

    let ctx = PairContext::new(pair)?;
    let hits = runner.run(n, |rng, len| {
        let mut h = vec![0u64; x_grid.len()];
        for _ in 0..len {
            let (theta, ya) = ctx.draw_theta_ya(pair, rng);
            let product = theta * ya;
            for (slot, &x) in h.iter_mut().zip(x_grid) {
                if product > x {
                    *slot += 1;
                }
            }
        }
        h
    });
    let mut totals = vec![0u64; x_grid.len()];
    for chunk in hits {
        for (t, c) in totals.iter_mut().zip(chunk) {
            *t += c;
        }
    }
    Ok(x_grid
        .iter()
        .zip(totals)
        .zip(denominators)
        .map(|((&x, hit), den)| (x, EstimateCI::from_hits(hit, n, runner.seed).scaled(den)))
        .collect())
}

/// One grid row of a sum-tail ratio check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SumRatioRow {
    pub x: f64,
    pub ratio: f64,
    pub ratio_se: f64,
    /// `P_hat[sum of scaled vectors in xA]`.
    pub numerator: EstimateCI,
    /// Sum of the single-pair tail values used in the denominator.
    pub denominator: f64,
    pub denominator_exact: bool,
    /// `P_hat[sum of scaled reductions > x]` on the same samples.
    pub ya_sum_tail: EstimateCI,
    /// Per-pair marginal tail estimates (shared samples).
    pub pair_tails: Vec<EstimateCI>,
    /// Samples where `support(sum) <= sum of supports` failed beyond
    /// float slack; always 0 by subadditivity.
    pub subadditivity_violations: u64,
}

struct SumChunk {
    num_hits: Vec<u64>,
    ysum_hits: Vec<u64>,
    pair_hits: Vec<Vec<u64>>,
    ratio_accs: Vec<RatioAcc>,
    violations: u64,
}

/// Ratio of the simulated sum tail to the sum of per-pair tails
/// (single-big-jump check). Denominators are deterministic when every
/// pair admits an exact mixture tail; otherwise both sides come from the
/// same samples and the CI uses the delta method.
pub fn sbj_sum_ratio(
    pairs: &[MixturePair],
    x_grid: &[f64],
    runner: &McRunner,
    n: u64,
) -> Result<Vec<SumRatioRow>> {
    let denominator = |x: f64| -> Option<f64> {
        pairs
            .iter()
            .map(|p| p.mixture_tail_exact(x))
            .sum::<Option<f64>>()
    };
    sum_ratio_impl(pairs, x_grid, runner, n, denominator)
}

/// Weighted-sum check against the per-pair constants: the denominator is
/// `sum_i E[Theta_i^alpha_i h_i(Theta_i)] * P[X_i in xA]` with each
/// `alpha_i` read from the pair's ray model.
pub fn mrv_weighted_sum_check(
    pairs: &[MixturePair],
    x_grid: &[f64],
    runner: &McRunner,
    n: u64,
) -> Result<Vec<SumRatioRow>> {
    let mut constants = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let alpha = match &pair.vector_model {
            VectorModel::MrvRay { alpha, .. } => *alpha,
            _ => {
                return Err(Error::InvalidParameter(
                    "weighted-sum check requires ray models".into(),
                ))
            }
        };
        constants.push(breiman_constant(&pair.coupling, alpha)?);
    }
    for (pair, &c) in pairs.iter().zip(&constants) {
        if pair.vector_model.fa_tail_exact(&pair.set, 1.0).is_none() || !c.is_finite() {
            return Err(Error::ExactTailUnavailable(
                "weighted-sum denominators need closed-form set tails".into(),
            ));
        }
    }
    let denominator = |x: f64| -> Option<f64> {
        pairs
            .iter()
            .zip(&constants)
            .map(|(p, &c)| p.vector_model.fa_tail_exact(&p.set, x).map(|t| c * t))
            .sum::<Option<f64>>()
    };
    sum_ratio_impl(pairs, x_grid, runner, n, denominator)
}

fn sum_ratio_impl<F: Fn(f64) -> Option<f64>>(
    pairs: &[MixturePair],
    x_grid: &[f64],
    runner: &McRunner,
    n: u64,
    denominator: F,
) -> Result<Vec<SumRatioRow>> {
    if pairs.is_empty() {
        return Err(Error::InvalidParameter("need at least one pair".into()));
    }
    let d = pairs[0].dim();
    let set = &pairs[0].set;
    for pair in pairs {
        pair.require_joint_sampler()?;
        if pair.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: pair.dim(),
            });
        }
        if pair.set != pairs[0].set {
            return Err(Error::InvalidParameter(
                "all pairs must share the same rare set".into(),
            ));
        }
    }
    let exact_den: Vec<Option<f64>> = x_grid.iter().map(|&x| denominator(x)).collect();
    let all_exact = exact_den.iter().all(Option::is_some);

    let contexts: Vec<PairContext> = pairs
        .iter()
        .map(PairContext::new)
        .collect::<Result<Vec<_>>>()?;

    let chunks = runner.run(n, |rng, len| {
        let mut acc = SumChunk {
            num_hits: vec![0; x_grid.len()],
            ysum_hits: vec![0; x_grid.len()],
            pair_hits: vec![vec![0; x_grid.len()]; pairs.len()],
            ratio_accs: vec![RatioAcc::default(); x_grid.len()],
            violations: 0,
        };
        let mut sum_vec = vec![0.0; d];
        let mut marginals = vec![0.0; pairs.len()];
        for _ in 0..len {
            sum_vec.iter_mut().for_each(|v| *v = 0.0);
            let mut y_sum = 0.0;
            for ((pair, ctx), marg) in pairs.iter().zip(&contexts).zip(marginals.iter_mut()) {
                let scaled_ya = ctx.add_scaled_vector(pair, rng, &mut sum_vec);
                y_sum += scaled_ya;
                *marg = scaled_ya;
            }
            let s_sum = set.support_value_unchecked(&sum_vec);
            // float slack on the subadditivity identity
            if s_sum > y_sum * (1.0 + 1e-12) + 1e-12 {
                acc.violations += 1;
            }
            for (i, &x) in x_grid.iter().enumerate() {
                let num = s_sum > x;
                if num {
                    acc.num_hits[i] += 1;
                }
                if y_sum > x {
                    acc.ysum_hits[i] += 1;
                }
                let mut g = 0.0;
                for (hits, &m) in acc.pair_hits.iter_mut().zip(marginals.iter()) {
                    if m > x {
                        hits[i] += 1;
                        g += 1.0;
                    }
                }
                if !all_exact {
                    acc.ratio_accs[i].push(if num { 1.0 } else { 0.0 }, g);
                }
            }
        }
        acc
    });

    let mut num_hits = vec![0u64; x_grid.len()];
    let mut ysum_hits = vec![0u64; x_grid.len()];
    let mut pair_hits = vec![vec![0u64; x_grid.len()]; pairs.len()];
    let mut ratio_accs = vec![RatioAcc::default(); x_grid.len()];
    let mut violations = 0u64;
    for c in chunks {
        for (t, v) in num_hits.iter_mut().zip(&c.num_hits) {
            *t += v;
        }
        for (t, v) in ysum_hits.iter_mut().zip(&c.ysum_hits) {
            *t += v;
        }
        for (tp, vp) in pair_hits.iter_mut().zip(&c.pair_hits) {
            for (t, v) in tp.iter_mut().zip(vp) {
                *t += v;
            }
        }
        for (t, v) in ratio_accs.iter_mut().zip(&c.ratio_accs) {
            t.merge(v);
        }
        violations += c.violations;
    }

    Ok(x_grid
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let numerator = EstimateCI::from_hits(num_hits[i], n, runner.seed);
            let (ratio, ratio_se, den, exact) = match exact_den[i] {
                Some(dv) => (numerator.value / dv, numerator.std_error / dv, dv, true),
                None => {
                    let (r, se) = ratio_accs[i].ratio();
                    let den_mc: f64 = pair_hits
                        .iter()
                        .map(|ph| ph[i] as f64 / n as f64)
                        .sum();
                    (r, se, den_mc, false)
                }
            };
            SumRatioRow {
                x,
                ratio,
                ratio_se,
                numerator,
                denominator: den,
                denominator_exact: exact,
                ya_sum_tail: EstimateCI::from_hits(ysum_hits[i], n, runner.seed),
                pair_tails: pair_hits
                    .iter()
                    .map(|ph| EstimateCI::from_hits(ph[i], n, runner.seed))
                    .collect(),
                subadditivity_violations: violations,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vectors::Ray;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn uniform_coupling(theta: f64) -> FgmCoupling {
        FgmCoupling::new(TailModel::BoundedUniform { b: 1.0 }, theta).unwrap()
    }

    fn single_ray_pair(fgm: f64, alpha: f64) -> MixturePair {
        let model = VectorModel::MrvRay {
            alpha,
            radius: TailModel::Pareto { alpha, scale: 1.0 },
            rays: vec![Ray {
                w: 1.0,
                dir: vec![0.5, 0.5],
            }],
        };
        let set = RareSet::new(vec![vec![1.0, 1.0]], 2).unwrap();
        MixturePair::new(model, set, uniform_coupling(fgm)).unwrap()
    }

    #[test]
    fn h_examples() {
        let c = uniform_coupling(0.5);
        // median of U(0,1) is 0.5
        assert!((c.h_value(0.5).unwrap() - 1.0).abs() < 1e-15);

        let indep = uniform_coupling(0.0);
        for t in [0.0, 0.3, 0.99] {
            assert_eq!(indep.h_value(t).unwrap(), 1.0);
        }

        let strong = uniform_coupling(0.8);
        assert!((strong.h_value(1.0).unwrap() - 1.8).abs() < 1e-15);
        assert!(strong.h_value(1.5).is_err());
    }

    #[test]
    fn h_is_bounded_and_mean_one() {
        for theta in [-0.9, -0.3, 0.0, 0.6, 0.99] {
            let c = uniform_coupling(theta);
            let bound = c.h_upper_bound();
            for k in 0..=1000 {
                let t = k as f64 / 1000.0;
                let h = c.h_value(t).unwrap();
                assert!(h > 0.0 && h <= bound + 1e-15);
            }
            assert!((c.expected_h() - 1.0).abs() < 1e-10);
        }
        let exp = FgmCoupling::new(TailModel::Exponential { rate: 1.0 }, 0.5).unwrap();
        assert!((exp.expected_h() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn conditional_inverse_is_monotone_and_exact_at_ends() {
        for theta in [-0.99, -0.4, 0.4, 0.99f64] {
            for v in [0.01, 0.3, 0.77] {
                assert!(fgm_conditional_u(theta, v, 0.0).abs() < 1e-12);
                assert!((fgm_conditional_u(theta, v, 1.0) - 1.0).abs() < 1e-12);
                let mut last = 0.0;
                for k in 1..=100 {
                    let u = fgm_conditional_u(theta, v, k as f64 / 100.0);
                    assert!(u >= last);
                    last = u;
                }
            }
        }
    }

    #[test]
    fn breiman_constant_examples() {
        let indep = uniform_coupling(0.0);
        assert!((breiman_constant(&indep, 2.0).unwrap() - 1.0 / 3.0).abs() < 1e-10);

        let dep = uniform_coupling(0.6);
        let expected = 1.0 / 3.0 + 0.6 * (2.0 / 4.0 - 1.0 / 3.0);
        assert!((breiman_constant(&dep, 2.0).unwrap() - expected).abs() < 1e-10);

        let degen = FgmCoupling::new(TailModel::Degenerate { c: 3.0 }, 0.0).unwrap();
        assert!((breiman_constant(&degen, 2.0).unwrap() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn breiman_constant_moment_errors() {
        let lp = FgmCoupling::new(TailModel::LogPareto { beta: 2.0 }, 0.0).unwrap();
        assert!(matches!(
            breiman_constant(&lp, 1.0),
            Err(Error::MomentDivergence(_))
        ));
        let heavy = FgmCoupling::new(
            TailModel::Pareto {
                alpha: 1.5,
                scale: 1.0,
            },
            0.0,
        )
        .unwrap();
        assert!(breiman_constant(&heavy, 2.0).is_err());
        // enough moments: Pareto(3) theta against alpha = 2
        let ok = FgmCoupling::new(
            TailModel::Pareto {
                alpha: 3.0,
                scale: 1.0,
            },
            0.0,
        )
        .unwrap();
        let v = breiman_constant(&ok, 2.0).unwrap();
        // E[T^2] for Pareto(3,1) is 3 (no coupling correction)
        assert!((v - 3.0).abs() < 1e-6, "got {v}");
    }

    #[test]
    fn degenerate_theta_needs_zero_fgm() {
        assert!(FgmCoupling::new(TailModel::Degenerate { c: 1.0 }, 0.5).is_err());
    }

    #[test]
    fn grade_correlation_vanishes_under_independence() {
        let pair = single_ray_pair(0.0, 2.0);
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let n = 100_000;
        let draws = pair.sample_pair(&mut rng, n).unwrap();
        let theta_model = TailModel::BoundedUniform { b: 1.0 };
        let fa = |y: f64| 1.0 - pair.vector_model.fa_tail_exact(&pair.set, y.max(1e-12)).unwrap();
        let mut acc = 0.0;
        for (t, y, _) in &draws {
            acc += (theta_model.cdf(*t) - 0.5) * (fa(*y) - 0.5);
        }
        let corr = acc / n as f64 / (1.0 / 12.0);
        assert!(corr.abs() < 3.0 / (n as f64).sqrt() * 1.5, "corr = {corr}");
    }

    #[test]
    fn spearman_rho_matches_fgm_identity() {
        // population Spearman rho of the FGM copula is theta/3; verify the
        // oracle itself by a double integral, then the sampler against it
        let theta = 0.9f64;
        let m = 400;
        let mut num = 0.0;
        for i in 0..m {
            for j in 0..m {
                let u = (i as f64 + 0.5) / m as f64;
                let v = (j as f64 + 0.5) / m as f64;
                let c = u * v * (1.0 + theta * (1.0 - u) * (1.0 - v));
                num += c;
            }
        }
        let rho_oracle = 12.0 * num / (m * m) as f64 - 3.0;
        assert!((rho_oracle - theta / 3.0).abs() < 1e-3);

        let pair = single_ray_pair(theta, 2.0);
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let n = 1_000_000;
        let draws = pair.sample_pair(&mut rng, n).unwrap();
        let theta_model = TailModel::BoundedUniform { b: 1.0 };
        let radius = TailModel::Pareto {
            alpha: 2.0,
            scale: 1.0,
        };
        let mut mean_uv = 0.0;
        for (t, y, _) in &draws {
            // single unit-support ray: grades of y under F_A and of the radius agree
            mean_uv += theta_model.cdf(*t) * (1.0 - radius.tail(*y));
        }
        let rho_hat = 12.0 * mean_uv / n as f64 - 3.0;
        assert!(
            (rho_hat - theta / 3.0).abs() < 0.01,
            "rho_hat = {rho_hat}, expected {}",
            theta / 3.0
        );
    }

    #[test]
    fn degenerate_theta_products() {
        let model = VectorModel::MrvRay {
            alpha: 2.0,
            radius: TailModel::Pareto {
                alpha: 2.0,
                scale: 1.0,
            },
            rays: vec![Ray {
                w: 1.0,
                dir: vec![0.5, 0.5],
            }],
        };
        let set = RareSet::new(vec![vec![1.0, 1.0]], 2).unwrap();
        let coupling = FgmCoupling::new(TailModel::Degenerate { c: 2.5 }, 0.0).unwrap();
        let pair = MixturePair::new(model, set, coupling).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for (t, y, p) in pair.sample_pair(&mut rng, 100).unwrap() {
            assert_eq!(t, 2.5);
            assert!((p - 2.5 * y).abs() < 1e-12);
        }
    }

    #[test]
    fn mixture_tail_quadrature_matches_closed_form() {
        // independent U(0,1) theta, Pareto(2) radius, unit-support ray:
        // P[T R > x] = E[(T/x)^2] = x^{-2}/3 for x >= 1
        let pair = single_ray_pair(0.0, 2.0);
        for x in [2.0, 10.0, 50.0] {
            let v = pair.mixture_tail_exact(x).unwrap();
            let expected = x.powi(-2) / 3.0;
            assert!(
                (v - expected).abs() < 1e-9 * expected.max(1e-12),
                "x={x}: {v} vs {expected}"
            );
        }
        // dependent case against the exact polynomial:
        // P[T R > x] = C x^{-2} - 0.6 (1/3 - 1/5) x^{-4}
        let pair = single_ray_pair(0.6, 2.0);
        let c = breiman_constant(&pair.coupling, 2.0).unwrap();
        for x in [2.0, 10.0, 50.0] {
            let v = pair.mixture_tail_exact(x).unwrap();
            let expected = c * x.powi(-2) - 0.6 * (1.0 / 3.0 - 1.0 / 5.0) * x.powi(-4);
            assert!(
                (v - expected).abs() < 1e-9 * expected,
                "x={x}: {v} vs {expected}"
            );
        }
    }

    #[test]
    fn verify_breiman_degenerate_unit_theta() {
        let model = VectorModel::MrvRay {
            alpha: 2.0,
            radius: TailModel::Pareto {
                alpha: 2.0,
                scale: 1.0,
            },
            rays: vec![Ray {
                w: 1.0,
                dir: vec![0.5, 0.5],
            }],
        };
        let set = RareSet::new(vec![vec![1.0, 1.0]], 2).unwrap();
        let coupling = FgmCoupling::new(TailModel::Degenerate { c: 1.0 }, 0.0).unwrap();
        let pair = MixturePair::new(model, set, coupling).unwrap();
        let rows = verify_breiman(&pair, 2.0, &[2.0, 5.0], &McRunner::new(9), 200_000).unwrap();
        for (x, est) in rows {
            assert!(
                (est.value - 1.0).abs() <= 3.0 * est.std_error,
                "x={x}: ratio {} +- {}",
                est.value,
                est.std_error
            );
        }
    }

    #[test]
    fn verify_breiman_dependent_case_converges() {
        let pair = single_ray_pair(0.6, 2.0);
        let rows = verify_breiman(&pair, 2.0, &[20.0], &McRunner::new(21), 4_000_000).unwrap();
        let (_, est) = rows[0];
        assert!(
            (est.value - 1.0).abs() <= 4.0 * est.std_error,
            "ratio {} +- {}",
            est.value,
            est.std_error
        );
    }

    #[test]
    fn sbj_single_pair_ratio_is_one() {
        let pair = single_ray_pair(0.0, 2.0);
        let rows = sbj_sum_ratio(&[pair], &[5.0], &McRunner::new(2), 500_000).unwrap();
        let row = &rows[0];
        assert!(row.denominator_exact);
        assert!(
            (row.ratio - 1.0).abs() <= 3.0 * row.ratio_se,
            "ratio {} +- {}",
            row.ratio,
            row.ratio_se
        );
        assert_eq!(row.subadditivity_violations, 0);
    }

    #[test]
    fn sbj_degenerate_pairs_are_exact_indicator_arithmetic() {
        let make = |c1: f64, c2: f64| {
            let model = VectorModel::IndependentMarginals {
                marginals: vec![TailModel::Degenerate { c: c1 }, TailModel::Degenerate { c: c2 }],
            };
            let set = RareSet::new(vec![vec![1.0, 1.0]], 2).unwrap();
            let coupling = FgmCoupling::new(TailModel::Degenerate { c: 1.0 }, 0.0).unwrap();
            MixturePair::new(model, set, coupling).unwrap()
        };
        // claims (1,2) per pair: each pair support 3, sum support 6
        let pairs = vec![make(1.0, 2.0), make(1.0, 2.0)];
        let rows = sbj_sum_ratio(&pairs, &[2.0], &McRunner::new(1), 10_000).unwrap();
        let row = &rows[0];
        // diagonal set direction is not axis aligned: shared-sample path
        assert!(!row.denominator_exact);
        assert_eq!(row.numerator.value, 1.0);
        assert_eq!(row.denominator, 2.0);
        assert_eq!(row.ratio, 0.5);
        assert_eq!(row.ratio_se, 0.0);
        assert_eq!(row.subadditivity_violations, 0);
    }

    #[test]
    fn weighted_sum_reduces_to_sbj_for_unit_theta() {
        let model = VectorModel::MrvRay {
            alpha: 2.0,
            radius: TailModel::Pareto {
                alpha: 2.0,
                scale: 1.0,
            },
            rays: vec![Ray {
                w: 1.0,
                dir: vec![0.5, 0.5],
            }],
        };
        let set = RareSet::new(vec![vec![1.0, 1.0]], 2).unwrap();
        let coupling = FgmCoupling::new(TailModel::Degenerate { c: 1.0 }, 0.0).unwrap();
        let pair = MixturePair::new(model, set, coupling).unwrap();
        let pairs = vec![pair.clone(), pair];
        let x = [20.0];
        let a = sbj_sum_ratio(&pairs, &x, &McRunner::new(33), 500_000).unwrap();
        let b = mrv_weighted_sum_check(&pairs, &x, &McRunner::new(33), 500_000).unwrap();
        // unit theta: constants are 1 and both denominators coincide
        assert!((a[0].denominator - b[0].denominator).abs() < 1e-12);
        assert_eq!(a[0].numerator.value, b[0].numerator.value);
    }

    #[test]
    fn weighted_sum_dominant_term() {
        // alpha 1 vs alpha 2: the heavier pair dominates the denominator
        let mk = |alpha: f64| {
            let model = VectorModel::MrvRay {
                alpha,
                radius: TailModel::Pareto { alpha, scale: 1.0 },
                rays: vec![Ray {
                    w: 1.0,
                    dir: vec![0.5, 0.5],
                }],
            };
            let set = RareSet::new(vec![vec![1.0, 1.0]], 2).unwrap();
            MixturePair::new(model, set, uniform_coupling(0.0)).unwrap()
        };
        let heavy = mk(1.0);
        let light = mk(2.0);
        let x = 1000.0;
        let t_heavy = breiman_constant(&heavy.coupling, 1.0).unwrap()
            * heavy.vector_model.fa_tail_exact(&heavy.set, x).unwrap();
        let t_light = breiman_constant(&light.coupling, 2.0).unwrap()
            * light.vector_model.fa_tail_exact(&light.set, x).unwrap();
        assert!(t_light / t_heavy < 0.01, "term ratio {}", t_light / t_heavy);
    }
}
