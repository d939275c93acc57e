//! Lower-bound ratio scans for precise large deviations of fixed-length
//! and Poisson-counted sums of heavy-tailed vectors.
//!
//! The estimated quantity is `P[S in (x + shift) A]` divided by the sum
//! of the single-vector set tails at the same argument; the theory
//! guarantees the liminf of that ratio is at least 1 uniformly over
//! `x >= gamma n`. The uniform infimum is not computable, so scans
//! report the minimum over a logged finite grid. Vectors are independent
//! in this implementation, which turns the pairwise dependence condition
//! into the requirement that `x * P[X in xA]` vanishes along `x = gamma
//! n`; the scan below reports that sequence and flags non-convergence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{EstimateCI, RatioAcc};
use crate::rare_sets::RareSet;
use crate::risk_model::poisson_draw;
use crate::rng::McRunner;
use crate::vectors::VectorModel;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LdpScenario {
    pub models: Vec<VectorModel>,
    pub set: RareSet,
    pub gamma: f64,
    /// Premium-style shift (the sum argument becomes `x + n * shift_c`).
    #[serde(default)]
    pub shift_c: f64,
    /// Intensity of the counting process for random sums
    /// (`lambda(t) = lambda * t`).
    #[serde(default)]
    pub lambda: Option<f64>,
}

impl LdpScenario {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::InvalidParameter("need at least one model".into()));
        }
        let d = self.set.dim();
        for m in &self.models {
            m.validate()?;
            if m.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: m.dim(),
                });
            }
        }
        if !(self.gamma > -self.shift_c) {
            return Err(Error::InvalidParameter(format!(
                "gamma must exceed -shift_c, got gamma = {}, shift_c = {}",
                self.gamma, self.shift_c
            )));
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0) {
                return Err(Error::InvalidParameter("lambda must be positive".into()));
            }
        }
        Ok(())
    }

    fn model_for(&self, i: usize) -> &VectorModel {
        &self.models[i % self.models.len()]
    }

    fn exact_tail(&self, i: usize, x: f64) -> Option<f64> {
        self.model_for(i).fa_tail_exact(&self.set, x)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DependenceRow {
    pub n: u64,
    pub x: f64,
    /// `x * sup_i P[X_i in xA]` at `x = gamma n`.
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DependenceScan {
    pub rows: Vec<DependenceRow>,
    /// False when the sequence fails to decrease over the top half of
    /// the grid (effective tail index at or below 1).
    pub converging: bool,
}

/// Trend of the pairwise dependence condition along `x = gamma n`.
/// Under independence the conditional probability factorizes, so the
/// scanned value is `x` times the largest marginal set tail.
pub fn dependence_condition_scan(
    scenario: &LdpScenario,
    n_grid: &[u64],
    runner: &McRunner,
    n_samples: u64,
) -> Result<DependenceScan> {
    scenario.validate()?;
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("n grid must be increasing".into()));
    }
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let x = scenario.gamma * n as f64;
        let mut sup = 0.0f64;
        for m in &scenario.models {
            let tail = match m.fa_tail_exact(&scenario.set, x) {
                Some(t) => t,
                None => m.fa_tail_mc(&scenario.set, x, runner, n_samples)?.value,
            };
            sup = sup.max(tail);
        }
        rows.push(DependenceRow { n, x, value: x * sup });
    }
    let top = rows.len() / 2;
    let converging = rows[top..].windows(2).all(|w| w[1].value < w[0].value);
    Ok(DependenceScan { rows, converging })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LdpRow {
    pub x: f64,
    /// Shifted argument actually used on both sides.
    pub x_shifted: f64,
    pub ratio: f64,
    pub ratio_se: f64,
    pub numerator: EstimateCI,
    pub denominator: f64,
    pub denominator_exact: bool,
    /// Lower bound `sum_i P_i - sum_{i<j} P_i P_j` satisfied within
    /// three standard errors (fixed-length sums only).
    pub bonferroni_ok: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LdpScan {
    /// The grid is part of the output contract: the reported minimum is
    /// only a proxy for the uniform infimum over it.
    pub grid: Vec<f64>,
    pub rows: Vec<LdpRow>,
    pub min_ratio: f64,
}

/// Lower-bound ratio for the fixed-length sum of `n_summands`
/// independent vectors (models cycled), over `x_grid` within
/// `[gamma n, infinity)`.
pub fn ldp_ratio_fixed_n(
    scenario: &LdpScenario,
    n_summands: usize,
    x_grid: &[f64],
    runner: &McRunner,
    n_samples: u64,
) -> Result<LdpScan> {
    scenario.validate()?;
    if n_summands == 0 {
        return Err(Error::InvalidParameter("need at least one summand".into()));
    }
    let floor = scenario.gamma * n_summands as f64;
    validate_grid(x_grid, floor)?;
    let shift = n_summands as f64 * scenario.shift_c;
    let args: Vec<f64> = x_grid.iter().map(|&x| x + shift).collect();

    // analytic denominators when every cycled model admits one
    let exact_den: Vec<Option<f64>> = args
        .iter()
        .map(|&xa| {
            (0..n_summands)
                .map(|i| scenario.exact_tail(i, xa))
                .sum::<Option<f64>>()
        })
        .collect();
    for (i, (&x, den)) in x_grid.iter().zip(&exact_den).enumerate() {
        if let Some(d) = den {
            let expected = n_samples as f64 * d.min(1.0);
            if expected < 100.0 {
                return Err(Error::InfeasibleGrid {
                    x,
                    expected_hits: expected,
                });
            }
        }
        let _ = i;
    }

    let d = scenario.set.dim();
    let chunks = runner.run(n_samples, |rng, len| {
        let mut acc = FixedChunk::new(args.len(), n_summands);
        let mut sum_vec = vec![0.0; d];
        let mut supports = vec![0.0; n_summands];
        for _ in 0..len {
            sum_vec.iter_mut().for_each(|v| *v = 0.0);
            let mut buf = [0.0; 8];
            let buf = &mut buf[..d.min(8)];
            for (i, sup) in supports.iter_mut().enumerate() {
                let model = scenario.model_for(i);
                if buf.len() == d {
                    model.sample_into(rng, buf);
                    for (s, b) in sum_vec.iter_mut().zip(buf.iter()) {
                        *s += *b;
                    }
                    *sup = scenario.set.support_value_unchecked(buf);
                } else {
                    let mut v = vec![0.0; d];
                    model.sample_into(rng, &mut v);
                    for (s, b) in sum_vec.iter_mut().zip(&v) {
                        *s += *b;
                    }
                    *sup = scenario.set.support_value_unchecked(&v);
                }
            }
            let s_sum = scenario.set.support_value_unchecked(&sum_vec);
            acc.record(&args, s_sum, &supports);
        }
        acc
    });
    let acc = FixedChunk::merge_all(chunks, args.len(), n_summands);
    let rows = acc.rows(scenario, x_grid, &args, &exact_den, n_samples, runner.seed);
    finish_scan(x_grid, rows)
}

struct FixedChunk {
    num_hits: Vec<u64>,
    per_i_hits: Vec<Vec<u64>>,
    ratio_accs: Vec<RatioAcc>,
}

impl FixedChunk {
    fn new(n_grid: usize, n_summands: usize) -> Self {
        FixedChunk {
            num_hits: vec![0; n_grid],
            per_i_hits: vec![vec![0; n_grid]; n_summands],
            ratio_accs: vec![RatioAcc::default(); n_grid],
        }
    }

    #[inline]
    fn record(&mut self, args: &[f64], s_sum: f64, supports: &[f64]) {
        for (gi, &xa) in args.iter().enumerate() {
            let num = s_sum > xa;
            if num {
                self.num_hits[gi] += 1;
            }
            let mut g = 0.0;
            for (i, &sup) in supports.iter().enumerate() {
                if sup > xa {
                    self.per_i_hits[i][gi] += 1;
                    g += 1.0;
                }
            }
            self.ratio_accs[gi].push(if num { 1.0 } else { 0.0 }, g);
        }
    }

    fn merge_all(chunks: Vec<FixedChunk>, n_grid: usize, n_summands: usize) -> FixedChunk {
        let mut total = FixedChunk::new(n_grid, n_summands);
        for c in chunks {
            for (t, v) in total.num_hits.iter_mut().zip(&c.num_hits) {
                *t += v;
            }
            for (tp, vp) in total.per_i_hits.iter_mut().zip(&c.per_i_hits) {
                for (t, v) in tp.iter_mut().zip(vp) {
                    *t += v;
                }
            }
            for (t, v) in total.ratio_accs.iter_mut().zip(&c.ratio_accs) {
                t.merge(v);
            }
        }
        total
    }

    fn rows(
        &self,
        scenario: &LdpScenario,
        x_grid: &[f64],
        args: &[f64],
        exact_den: &[Option<f64>],
        n: u64,
        seed: u64,
    ) -> Vec<LdpRow> {
        let _ = scenario;
        x_grid
            .iter()
            .enumerate()
            .map(|(gi, &x)| {
                let numerator = EstimateCI::from_hits(self.num_hits[gi], n, seed);
                let (ratio, ratio_se, den, exact) = match exact_den[gi] {
                    Some(dv) => (numerator.value / dv, numerator.std_error / dv, dv, true),
                    None => {
                        let (r, se) = self.ratio_accs[gi].ratio();
                        let den_mc: f64 = self
                            .per_i_hits
                            .iter()
                            .map(|ph| ph[gi] as f64 / n as f64)
                            .sum();
                        (r, se, den_mc, false)
                    }
                };
                // lower bound from inclusion-exclusion on the shared samples
                let p_hat: Vec<f64> = self
                    .per_i_hits
                    .iter()
                    .map(|ph| ph[gi] as f64 / n as f64)
                    .collect();
                let sum_p: f64 = p_hat.iter().sum();
                let sum_sq: f64 = p_hat.iter().map(|p| p * p).sum();
                let pair_term = 0.5 * (sum_p * sum_p - sum_sq);
                let bound = sum_p - pair_term - 3.0 * numerator.std_error;
                LdpRow {
                    x,
                    x_shifted: args[gi],
                    ratio,
                    ratio_se,
                    numerator,
                    denominator: den,
                    denominator_exact: exact,
                    bonferroni_ok: Some(numerator.value >= bound),
                }
            })
            .collect()
    }
}

/// Weak-equivalence diagnostics of a model list against its first
/// entry: extreme tail ratios over the grid, with a drift flag when the
/// lower envelope keeps shrinking over the top half of the grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeakEquivalence {
    pub c1: f64,
    pub c2: f64,
    pub drifting: bool,
}

pub fn weak_equivalence_check(
    models: &[VectorModel],
    set: &RareSet,
    x_grid: &[f64],
) -> Result<WeakEquivalence> {
    if models.is_empty() {
        return Err(Error::InvalidParameter("need at least one model".into()));
    }
    if x_grid.is_empty() || x_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("x grid must be increasing".into()));
    }
    let reference = &models[0];
    let mut c1 = f64::INFINITY;
    let mut c2 = f64::NEG_INFINITY;
    let mut per_x_min = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        let ref_tail = reference.fa_tail_exact(set, x).ok_or_else(|| {
            Error::ExactTailUnavailable(format!("reference model has no closed-form tail at {x}"))
        })?;
        if ref_tail == 0.0 {
            return Err(Error::ZeroReferenceTail { x });
        }
        let mut local_min = f64::INFINITY;
        for m in models {
            let tail = m.fa_tail_exact(set, x).ok_or_else(|| {
                Error::ExactTailUnavailable(format!("model has no closed-form tail at {x}"))
            })?;
            let r = tail / ref_tail;
            c1 = c1.min(r);
            c2 = c2.max(r);
            local_min = local_min.min(r);
        }
        per_x_min.push(local_min);
    }
    // ratio floor still shrinking over the top half of the grid means
    // the models are not weak-equivalent on this set
    let half = per_x_min.len() / 2;
    let drifting =
        per_x_min.len() >= 2 && *per_x_min.last().unwrap() < 0.5 * per_x_min[half.max(1) - 1];
    Ok(WeakEquivalence { c1, c2, drifting })
}

/// Lower-bound ratio for the Poisson random sum at horizon `t`: the sum
/// draws `N ~ Poisson(lambda t)` vectors (models cycled), while the
/// denominator keeps exactly `floor(lambda t)` analytic terms.
pub fn ldp_ratio_random_sum(
    scenario: &LdpScenario,
    t: f64,
    x_grid: &[f64],
    runner: &McRunner,
    n_samples: u64,
) -> Result<LdpScan> {
    scenario.validate()?;
    let lambda = scenario.lambda.ok_or_else(|| {
        Error::InvalidParameter("random-sum scan needs the counting intensity".into())
    })?;
    if !(t > 0.0) {
        return Err(Error::InvalidParameter("horizon must be positive".into()));
    }
    let mean = lambda * t;
    let n_terms = mean.floor() as usize;
    if n_terms == 0 {
        return Err(Error::InvalidParameter(
            "lambda t below 1 leaves an empty denominator".into(),
        ));
    }
    let floor = scenario.gamma * mean;
    validate_grid(x_grid, floor)?;
    let shift = scenario.shift_c * mean;
    let args: Vec<f64> = x_grid.iter().map(|&x| x + shift).collect();

    let mut denominators = Vec::with_capacity(args.len());
    for (&x, &xa) in x_grid.iter().zip(&args) {
        let den: Option<f64> = (0..n_terms).map(|i| scenario.exact_tail(i, xa)).sum();
        let den = den.ok_or_else(|| {
            Error::ExactTailUnavailable(format!(
                "random-sum denominator needs closed-form tails (x = {x})"
            ))
        })?;
        let expected = n_samples as f64 * den.min(1.0);
        if expected < 100.0 {
            return Err(Error::InfeasibleGrid {
                x,
                expected_hits: expected,
            });
        }
        denominators.push(den);
    }

    let d = scenario.set.dim();
    let chunks = runner.run(n_samples, |rng, len| {
        let mut hits = vec![0u64; args.len()];
        let mut sum_vec = vec![0.0; d];
        let mut buf = vec![0.0; d];
        for _ in 0..len {
            sum_vec.iter_mut().for_each(|v| *v = 0.0);
            let count = poisson_draw(mean, rng);
            for i in 0..count {
                scenario.model_for(i as usize).sample_into(rng, &mut buf);
                for (s, b) in sum_vec.iter_mut().zip(&buf) {
                    *s += *b;
                }
            }
            let s_sum = scenario.set.support_value_unchecked(&sum_vec);
            for (slot, &xa) in hits.iter_mut().zip(&args) {
                if s_sum > xa {
                    *slot += 1;
                }
            }
        }
        hits
    });
    let mut totals = vec![0u64; args.len()];
    for c in chunks {
        for (t, v) in totals.iter_mut().zip(c) {
            *t += v;
        }
    }

    let rows: Vec<LdpRow> = x_grid
        .iter()
        .enumerate()
        .map(|(gi, &x)| {
            let numerator = EstimateCI::from_hits(totals[gi], n_samples, runner.seed);
            LdpRow {
                x,
                x_shifted: args[gi],
                ratio: numerator.value / denominators[gi],
                ratio_se: numerator.std_error / denominators[gi],
                numerator,
                denominator: denominators[gi],
                denominator_exact: true,
                bonferroni_ok: None,
            }
        })
        .collect();
    finish_scan(x_grid, rows)
}

fn validate_grid(x_grid: &[f64], floor: f64) -> Result<()> {
    if x_grid.is_empty() || x_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("x grid must be increasing".into()));
    }
    if x_grid[0] < floor - 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "grid starts below gamma n = {floor}"
        )));
    }
    Ok(())
}

fn finish_scan(x_grid: &[f64], rows: Vec<LdpRow>) -> Result<LdpScan> {
    let min_ratio = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    Ok(LdpScan {
        grid: x_grid.to_vec(),
        rows,
        min_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tails::TailModel;
    use crate::vectors::Ray;

    fn ray_model(alpha: f64) -> VectorModel {
        VectorModel::MrvRay {
            alpha,
            radius: TailModel::Pareto { alpha, scale: 1.0 },
            rays: vec![
                Ray {
                    w: 0.5,
                    dir: vec![1.0, 0.0],
                },
                Ray {
                    w: 0.5,
                    dir: vec![0.0, 1.0],
                },
            ],
        }
    }

    fn scenario(alpha: f64) -> LdpScenario {
        LdpScenario {
            models: vec![ray_model(alpha)],
            set: RareSet::new(vec![vec![1.0, 1.0]], 2).unwrap(),
            gamma: 1.0,
            shift_c: 0.0,
            lambda: Some(1.0),
        }
    }

    #[test]
    fn dependence_scan_flags_by_index() {
        let runner = McRunner::new(1);
        let n_grid = [8, 16, 32, 64, 128];
        // alpha 2: x * x^-2 halves as n doubles
        let s = scenario(2.0);
        let scan = dependence_condition_scan(&s, &n_grid, &runner, 1000).unwrap();
        assert!(scan.converging);
        assert!((scan.rows[1].value / scan.rows[0].value - 0.5).abs() < 1e-12);

        // alpha 0.8: x * x^-0.8 grows
        let s = scenario(0.8);
        let scan = dependence_condition_scan(&s, &n_grid, &runner, 1000).unwrap();
        assert!(!scan.converging);

        // boundary alpha 1: constant
        let s = scenario(1.0);
        let scan = dependence_condition_scan(&s, &n_grid, &runner, 1000).unwrap();
        assert!(!scan.converging);
    }

    #[test]
    fn single_summand_ratio_is_one() {
        let s = scenario(2.0);
        let scan = ldp_ratio_fixed_n(&s, 1, &[2.0, 5.0], &McRunner::new(3), 400_000).unwrap();
        for row in &scan.rows {
            assert!(row.denominator_exact);
            assert!(
                (row.ratio - 1.0).abs() <= 3.0 * row.ratio_se.max(1e-4),
                "x={}: ratio {} +- {}",
                row.x,
                row.ratio,
                row.ratio_se
            );
            assert_eq!(row.bonferroni_ok, Some(true));
        }
    }

    #[test]
    fn degenerate_summands_are_step_functions() {
        let model = VectorModel::IndependentMarginals {
            marginals: vec![TailModel::Degenerate { c: 1.0 }, TailModel::Degenerate { c: 1.0 }],
        };
        let s = LdpScenario {
            models: vec![model],
            set: RareSet::new(vec![vec![1.0, 1.0]], 2).unwrap(),
            gamma: 0.1,
            shift_c: 0.0,
            lambda: None,
        };
        // 3 summands, each support 2, sum support 6
        let scan = ldp_ratio_fixed_n(&s, 3, &[0.5, 5.0], &McRunner::new(5), 5_000).unwrap();
        // x=0.5: numerator 1, marginals all hit: denominator 3
        assert!(!scan.rows[0].denominator_exact);
        assert_eq!(scan.rows[0].numerator.value, 1.0);
        assert!((scan.rows[0].ratio - 1.0 / 3.0).abs() < 1e-12);
        // x=5: numerator 1, no marginal hits
        assert_eq!(scan.rows[1].numerator.value, 1.0);
        assert_eq!(scan.rows[1].denominator, 0.0);
    }

    #[test]
    fn infeasible_grid_is_reported_with_x() {
        let s = scenario(2.0);
        match ldp_ratio_fixed_n(&s, 2, &[2.0, 1e6], &McRunner::new(7), 10_000) {
            Err(Error::InfeasibleGrid { x, .. }) => assert_eq!(x, 1e6),
            other => panic!("expected infeasible grid, got {other:?}"),
        }
    }

    #[test]
    fn weak_equivalence_identical_and_weighted() {
        let set = RareSet::new(vec![vec![1.0, 1.0]], 2).unwrap();
        let grid = [10.0, 20.0, 40.0, 80.0];
        let we =
            weak_equivalence_check(&[ray_model(2.0), ray_model(2.0)], &set, &grid).unwrap();
        assert!((we.c1 - 1.0).abs() < 1e-12 && (we.c2 - 1.0).abs() < 1e-12);
        assert!(!we.drifting);

        // same index, radius scaled: tails differ by the mu factor
        let mut heavier = ray_model(2.0);
        if let VectorModel::MrvRay { radius, .. } = &mut heavier {
            *radius = TailModel::Pareto {
                alpha: 2.0,
                scale: 2f64.sqrt(),
            };
        }
        let we = weak_equivalence_check(&[ray_model(2.0), heavier], &set, &grid).unwrap();
        assert!((we.c1 - 1.0).abs() < 1e-9);
        assert!((we.c2 - 2.0).abs() < 1e-9);
        assert!(!we.drifting);

        // mixed indexes: ratio drifts to zero
        let grid_wide = [10.0, 100.0, 1000.0, 10000.0];
        let we =
            weak_equivalence_check(&[ray_model(1.0), ray_model(2.0)], &set, &grid_wide).unwrap();
        assert!(we.c1 < 1e-3);
        assert!(we.drifting);
    }

    #[test]
    fn random_sum_exact_poisson_arithmetic() {
        // degenerate claims of unit size in one dimension: the sum
        // support equals N, so the numerator is a Poisson tail
        let model = VectorModel::IndependentMarginals {
            marginals: vec![TailModel::Degenerate { c: 1.0 }],
        };
        let s = LdpScenario {
            models: vec![model],
            set: RareSet::new(vec![vec![1.0]], 1).unwrap(),
            gamma: 0.05,
            shift_c: 0.0,
            lambda: Some(4.0),
        };
        let t = 2.0; // mean 8
        let scan = ldp_ratio_random_sum(&s, t, &[0.5, 8.5], &McRunner::new(9), 200_000).unwrap();
        let exact_num = crate::risk_model::poisson_sf(8.0, 8);
        let row = &scan.rows[1];
        assert!(
            (row.numerator.value - exact_num).abs() <= 3.0 * row.numerator.std_error,
            "{} vs {exact_num}",
            row.numerator.value
        );
        // denominator: exactly floor(lambda t) = 8 unit terms
        assert_eq!(row.denominator, 0.0); // support 1 claims: tail at 8.5 is 0
        let row0 = &scan.rows[0];
        assert_eq!(row0.denominator, 8.0);
    }

    #[test]
    fn shifted_grid_uses_shifted_arguments() {
        let mut s = scenario(2.0);
        s.shift_c = 0.5;
        let scan = ldp_ratio_fixed_n(&s, 2, &[4.0], &McRunner::new(11), 200_000).unwrap();
        let row = &scan.rows[0];
        assert_eq!(row.x_shifted, 5.0);
        // denominator evaluated at the shifted argument
        let expected = 2.0 * s.models[0].fa_tail_exact(&s.set, 5.0).unwrap();
        assert!((row.denominator - expected).abs() < 1e-12);
    }
}
