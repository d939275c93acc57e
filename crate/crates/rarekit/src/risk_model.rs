//! Multivariate time-dependent compound Poisson risk model.
//!
//! Claims arrive by a common Poisson process; each claim vector is
//! FGM-coupled to its own inter-arrival time and discounted at a
//! constant interest force. Ruin is entering a scaled ruin set; since
//! premiums only push the surplus away from the (decreasing) ruin set
//! between arrivals, first entry can only happen at a claim instant, so
//! the simulation evaluates the surplus exactly there and nowhere else.
//!
//! The limiting constants of the discounted-aggregate asymptotic are
//! estimated two ways: directly over simulated paths, and by a
//! truncated nested-series evaluator that integrates the arrival gaps
//! against their conditional (uniform order statistics) law per claim
//! count, with Gauss tensor rules at low counts and fixed-seed
//! simplex sampling above.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::EstimateCI;
use crate::mixtures::{fgm_conditional_u, FgmCoupling};
use crate::quad::simplex_gauss;
use crate::rare_sets::{ruin_set_to_rare_set, RareSet, RuinSet};
use crate::rng::{McRunner, RngFactory};
use crate::tails::TailModel;
use crate::vectors::{pick_ray, VectorModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskConfig {
    pub lambda: f64,
    pub horizon: f64,
    pub interest: f64,
    pub claim_model: VectorModel,
    /// FGM parameter binding each claim to its inter-arrival time.
    pub fgm_theta: f64,
    /// Constant premium densities per line.
    pub premium_rates: Vec<f64>,
    /// Capital allocation across lines, summing to 1.
    pub allocation: Vec<f64>,
    pub ruin_set: RuinSet,
}

impl RiskConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter("lambda must be positive".into()));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidParameter("horizon must be positive".into()));
        }
        if !(self.interest >= 0.0) || !self.interest.is_finite() {
            return Err(Error::InvalidParameter(
                "interest force must be nonnegative".into(),
            ));
        }
        self.claim_model.validate()?;
        self.coupling()?;
        let d = self.claim_model.dim();
        if self.premium_rates.len() != d || self.allocation.len() != d || self.ruin_set.dim != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: self.allocation.len(),
            });
        }
        if self.premium_rates.iter().any(|&c| !(c >= 0.0) || !c.is_finite()) {
            return Err(Error::InvalidParameter(
                "premium rates must be nonnegative".into(),
            ));
        }
        if matches!(self.claim_model, VectorModel::IndependentMarginals { .. })
            && self.fgm_theta != 0.0
        {
            return Err(Error::InvalidParameter(
                "time-dependent claims need an mrv_ray claim model; \
                 independent marginals only support fgm_theta = 0"
                    .into(),
            ));
        }
        self.rare_set()?;
        Ok(())
    }

    /// The coupling between claims and inter-arrival times.
    pub fn coupling(&self) -> Result<FgmCoupling> {
        FgmCoupling::new(TailModel::Exponential { rate: self.lambda }, self.fgm_theta)
    }

    /// The rare set `allocation - ruin_set` behind the ruin event.
    pub fn rare_set(&self) -> Result<RareSet> {
        ruin_set_to_rare_set(&self.allocation, &self.ruin_set)
    }

    /// Discounted premium accumulated on line `i` by time `s`.
    fn premium_integral(&self, i: usize, s: f64) -> f64 {
        let c = self.premium_rates[i];
        if self.interest == 0.0 {
            c * s
        } else {
            c * (1.0 - (-self.interest * s).exp()) / self.interest
        }
    }
}

/// One simulated path: arrival epochs, claim vectors, the discounted
/// aggregate at the horizon and the capital-free surplus deficit at
/// each arrival (discounted claims minus discounted premiums; ruin at
/// capital `x` means some deficit lies in `x` times the rare set).
#[derive(Debug, Clone)]
pub struct PathRecord {
    pub arrivals: Vec<f64>,
    pub claims: Vec<Vec<f64>>,
    pub discounted_aggregate: Vec<f64>,
    pub deficits: Vec<Vec<f64>>,
}

struct Arrival {
    gap: f64,
    tau: f64,
    claim_scale: f64,
    ray: usize,
}

/// Walks one Poisson path, invoking `visit` per arrival. For ray claim
/// models the radius grade is FGM-coupled to the gap grade; the claim
/// vector is `radius * dir * exp(-r tau)`.
fn walk_path<R: Rng + ?Sized, F: FnMut(&mut R, &Arrival)>(
    cfg: &RiskConfig,
    rng: &mut R,
    mut visit: F,
) {
    let lambda = cfg.lambda;
    let theta = cfg.fgm_theta;
    let mut tau = 0.0;
    loop {
        let v: f64 = rng.gen();
        let gap = -(-v).ln_1p() / lambda;
        tau += gap;
        if tau > cfg.horizon {
            return;
        }
        let w: f64 = rng.gen();
        let (claim_scale, ray) = match &cfg.claim_model {
            VectorModel::MrvRay { radius, rays, .. } => {
                let u = fgm_conditional_u(theta, v, w);
                let r = radius.quantile(1.0 - u);
                (r, pick_ray(rays, rng))
            }
            VectorModel::IndependentMarginals { .. } => (f64::NAN, usize::MAX),
        };
        visit(
            rng,
            &Arrival {
                gap,
                tau,
                claim_scale,
                ray,
            },
        );
    }
}

/// Simulates one full path record.
pub fn simulate_path<R: Rng + ?Sized>(cfg: &RiskConfig, rng: &mut R) -> Result<PathRecord> {
    cfg.validate()?;
    let d = cfg.claim_model.dim();
    let mut rec = PathRecord {
        arrivals: Vec::new(),
        claims: Vec::new(),
        discounted_aggregate: vec![0.0; d],
        deficits: Vec::new(),
    };
    let mut running = vec![0.0; d];
    let claim_model = cfg.claim_model.clone();
    walk_path(cfg, rng, |rng, arrival| {
        let discount = (-cfg.interest * arrival.tau).exp();
        let mut claim = vec![0.0; d];
        match &claim_model {
            VectorModel::MrvRay { rays, .. } => {
                for (c, dir) in claim.iter_mut().zip(&rays[arrival.ray].dir) {
                    *c = arrival.claim_scale * dir;
                }
            }
            VectorModel::IndependentMarginals { .. } => {
                claim_model.sample_into(rng, &mut claim);
            }
        }
        for (r, c) in running.iter_mut().zip(&claim) {
            *r += c * discount;
        }
        let deficit: Vec<f64> = running
            .iter()
            .enumerate()
            .map(|(i, &v)| v - cfg.premium_integral(i, arrival.tau))
            .collect();
        rec.arrivals.push(arrival.tau);
        rec.claims.push(claim);
        rec.deficits.push(deficit);
    });
    rec.discounted_aggregate = running;
    Ok(rec)
}

/// Largest support value of the deficit over the arrival epochs of one
/// path; negative infinity when no claim arrives.
fn path_max_support(cfg: &RiskConfig, set: &RareSet, rng: &mut ChaCha12Rng) -> f64 {
    let d = cfg.claim_model.dim();
    let mut running = vec![0.0; d];
    let mut deficit = vec![0.0; d];
    let mut best = f64::NEG_INFINITY;
    let claim_model = &cfg.claim_model;
    walk_path(cfg, rng, |rng, arrival| {
        let discount = (-cfg.interest * arrival.tau).exp();
        match claim_model {
            VectorModel::MrvRay { rays, .. } => {
                for (r, dir) in running.iter_mut().zip(&rays[arrival.ray].dir) {
                    *r += arrival.claim_scale * dir * discount;
                }
            }
            VectorModel::IndependentMarginals { .. } => {
                claim_model.sample_into(rng, &mut deficit);
                for (r, c) in running.iter_mut().zip(&deficit) {
                    *r += c * discount;
                }
            }
        }
        for (i, (slot, &r)) in deficit.iter_mut().zip(&running).enumerate() {
            *slot = r - cfg.premium_integral(i, arrival.tau);
        }
        let s = set.support_value_unchecked(&deficit);
        if s > best {
            best = s;
        }
    });
    best
}

/// Path-average estimator of the undiscounted limiting constant
/// `E[sum of h over the arrival gaps]`, which the nested series
/// evaluates as `lambda t` when the coupling is trivial.
pub fn constant_c0(cfg: &RiskConfig, runner: &McRunner, n_paths: u64) -> Result<EstimateCI> {
    cfg.validate()?;
    path_functional(cfg, runner, n_paths, 0.0)
}

/// Path-average estimator of the discounted limiting constant
/// `E[sum of h(gap_i) exp(-alpha r tau_i)]`. Requires positive interest
/// and a ray claim model carrying the tail index.
pub fn constant_cr(cfg: &RiskConfig, runner: &McRunner, n_paths: u64) -> Result<EstimateCI> {
    cfg.validate()?;
    if !(cfg.interest > 0.0) {
        return Err(Error::InvalidParameter(
            "discounted constant needs positive interest".into(),
        ));
    }
    let alpha = match &cfg.claim_model {
        VectorModel::MrvRay { alpha, .. } => *alpha,
        _ => {
            return Err(Error::InvalidParameter(
                "discounted constant needs an mrv_ray claim model".into(),
            ))
        }
    };
    path_functional(cfg, runner, n_paths, alpha * cfg.interest)
}

fn path_functional(
    cfg: &RiskConfig,
    runner: &McRunner,
    n_paths: u64,
    decay: f64,
) -> Result<EstimateCI> {
    let coupling = cfg.coupling()?;
    let sums = runner.run(n_paths, |rng, len| {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..len {
            let mut acc = 0.0;
            walk_path(cfg, rng, |_, arrival| {
                let h = 1.0 + cfg.fgm_theta * (2.0 * coupling.theta.cdf(arrival.gap) - 1.0);
                acc += h * (-decay * arrival.tau).exp();
            });
            sum += acc;
            sum_sq += acc * acc;
        }
        (sum, sum_sq)
    });
    let (s, ss) = sums
        .into_iter()
        .fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d));
    Ok(EstimateCI::from_sums(s, ss, n_paths, runner.seed))
}

/// Truncated nested-series value of a limiting constant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleValue {
    pub value: f64,
    pub n_max: usize,
    /// Poisson mass beyond the truncation point.
    pub tail_mass: f64,
    pub warning: Option<String>,
}

const ORACLE_GAUSS_MAX_DIM: usize = 6;
const ORACLE_GAUSS_NODES: usize = 12;
const ORACLE_MC_SAMPLES: usize = 1_000_000;
const ORACLE_CAP: usize = 64;
const ORACLE_SEED: u64 = 0x5eed_0f0f_0a0a_1234;

/// Nested-series oracle for the undiscounted constant.
pub fn constant_c0_oracle(cfg: &RiskConfig) -> Result<OracleValue> {
    cfg.validate()?;
    Ok(nested_series(cfg, 0.0))
}

/// Nested-series oracle for the discounted constant.
pub fn constant_cr_oracle(cfg: &RiskConfig, alpha: f64) -> Result<OracleValue> {
    cfg.validate()?;
    if !(cfg.interest > 0.0) || !(alpha > 0.0) {
        return Err(Error::InvalidParameter(
            "discounted oracle needs positive interest and tail index".into(),
        ));
    }
    Ok(nested_series(cfg, alpha * cfg.interest))
}

fn nested_series(cfg: &RiskConfig, decay: f64) -> OracleValue {
    let lambda = cfg.lambda;
    let t = cfg.horizon;
    let mean = lambda * t;
    let theta = cfg.fgm_theta;
    let h = |s: f64| 1.0 + theta * (2.0 * (1.0 - (-lambda * s).exp()) - 1.0);
    let integrand = |s: &[f64]| -> f64 {
        let mut tau = 0.0;
        let mut acc = 0.0;
        for &si in s {
            tau += si;
            acc += h(si) * (-decay * tau).exp();
        }
        acc
    };

    let n_max = truncation_point(mean);
    let warning = if poisson_sf(mean, n_max) > 1e-8 {
        Some(format!(
            "series truncated at n = {n_max} with Poisson tail {:.3e} > 1e-8",
            poisson_sf(mean, n_max)
        ))
    } else {
        None
    };

    let mut value = 0.0;
    let mut pmf = (-mean).exp(); // P[N = 0]
    let mut fact_over_tn = 1.0; // n! / t^n
    for n in 1..=n_max {
        pmf *= mean / n as f64;
        fact_over_tn *= n as f64 / t;
        let term = if n <= ORACLE_GAUSS_MAX_DIM {
            let integral = simplex_gauss(n, t, ORACLE_GAUSS_NODES, integrand);
            pmf * fact_over_tn * integral
        } else {
            pmf * simplex_mean(n, t, &integrand)
        };
        value += term;
    }
    OracleValue {
        value,
        n_max,
        tail_mass: poisson_sf(mean, n_max),
        warning,
    }
}

/// Mean of the integrand under the uniform law on the open simplex
/// `{sum s_i < t}`, by fixed-seed Dirichlet spacings.
fn simplex_mean<F: Fn(&[f64]) -> f64>(n: usize, t: f64, f: &F) -> f64 {
    let mut rng = RngFactory::new(ORACLE_SEED ^ n as u64).stream(0);
    let mut s = vec![0.0; n];
    let mut acc = 0.0;
    for _ in 0..ORACLE_MC_SAMPLES {
        // Dirichlet spacings: n+1 exponentials, first n rescaled by t/total
        let mut spacings = 0.0;
        for slot in s.iter_mut() {
            let e = -(-rng.gen::<f64>()).ln_1p();
            *slot = e;
            spacings += e;
        }
        let last = -(-rng.gen::<f64>()).ln_1p();
        let g = spacings + last;
        for slot in s.iter_mut() {
            *slot *= t / g;
        }
        acc += f(&s);
    }
    acc / ORACLE_MC_SAMPLES as f64
}

fn truncation_point(mean: f64) -> usize {
    let mut n = mean.ceil() as usize + 1;
    while n < ORACLE_CAP && poisson_sf(mean, n) >= 1e-8 {
        n += 1;
    }
    n
}

/// Upper tail `P[N > n]` of a Poisson variable.
pub fn poisson_sf(mean: f64, n: usize) -> f64 {
    let mut pmf = (-mean).exp();
    let mut cdf = pmf;
    for k in 1..=n {
        pmf *= mean / k as f64;
        cdf += pmf;
    }
    (1.0 - cdf).max(0.0)
}

/// Poisson draw by inversion of the CDF (single uniform).
pub fn poisson_draw<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    let u: f64 = rng.gen();
    let mut pmf = (-mean).exp();
    let mut cdf = pmf;
    let mut k = 0u64;
    let cap = (mean + 20.0 * mean.sqrt() + 100.0) as u64;
    while u > cdf && k < cap {
        k += 1;
        pmf *= mean / k as f64;
        cdf += pmf;
    }
    k
}

/// Fraction of paths whose deficit enters `x` times the rare set at
/// some arrival epoch within the horizon.
pub fn ruin_probability_mc(
    cfg: &RiskConfig,
    x: f64,
    runner: &McRunner,
    n_paths: u64,
) -> Result<EstimateCI> {
    cfg.validate()?;
    if !(x > 0.0) {
        return Err(Error::InvalidParameter(
            "initial capital must be positive".into(),
        ));
    }
    let set = cfg.rare_set()?;
    let hits: u64 = runner
        .run(n_paths, |rng, len| {
            let mut h = 0u64;
            for _ in 0..len {
                if path_max_support(cfg, &set, rng) > x {
                    h += 1;
                }
            }
            h
        })
        .into_iter()
        .sum();
    Ok(EstimateCI::from_hits(hits, n_paths, runner.seed))
}

/// Asymptotic ruin prediction: limiting constant times the exact set
/// tail of a single claim.
pub fn ruin_asymptotic(cfg: &RiskConfig, alpha: f64, x: f64) -> Result<f64> {
    cfg.validate()?;
    let constant = if cfg.interest == 0.0 {
        constant_c0_oracle(cfg)?.value
    } else {
        constant_cr_oracle(cfg, alpha)?.value
    };
    let set = cfg.rare_set()?;
    let tail = cfg.claim_model.fa_tail_exact(&set, x).ok_or_else(|| {
        Error::ExactTailUnavailable(format!(
            "no closed-form claim tail at x = {x}; use an mrv_ray claim model"
        ))
    })?;
    Ok(constant * tail)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuinScanRow {
    pub x: f64,
    pub psi: EstimateCI,
    pub prediction: f64,
    pub ratio: f64,
    pub ratio_se: f64,
}

/// Estimated ruin probability against the asymptotic prediction along a
/// capital grid; paths are shared across the grid.
pub fn ruin_ratio_scan(
    cfg: &RiskConfig,
    alpha: f64,
    x_grid: &[f64],
    runner: &McRunner,
    n_paths: u64,
) -> Result<Vec<RuinScanRow>> {
    cfg.validate()?;
    if x_grid.is_empty() || x_grid.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidParameter(
            "capital grid must be positive".into(),
        ));
    }
    let set = cfg.rare_set()?;
    let predictions: Vec<f64> = x_grid
        .iter()
        .map(|&x| ruin_asymptotic(cfg, alpha, x))
        .collect::<Result<_>>()?;

    let chunks = runner.run(n_paths, |rng, len| {
        let mut hits = vec![0u64; x_grid.len()];
        for _ in 0..len {
            let best = path_max_support(cfg, &set, rng);
            for (slot, &x) in hits.iter_mut().zip(x_grid) {
                if best > x {
                    *slot += 1;
                }
            }
        }
        hits
    });
    let mut totals = vec![0u64; x_grid.len()];
    for c in chunks {
        for (t, v) in totals.iter_mut().zip(c) {
            *t += v;
        }
    }
    Ok(x_grid
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let psi = EstimateCI::from_hits(totals[i], n_paths, runner.seed);
            RuinScanRow {
                x,
                psi,
                prediction: predictions[i],
                ratio: psi.value / predictions[i],
                ratio_se: psi.std_error / predictions[i],
            }
        })
        .collect())
}
