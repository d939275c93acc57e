//! Univariate tail models.
//!
//! Each family carries an analytic survival function, its inverse (a
//! tail-level quantile), an inverse-transform sampler, and the known
//! class memberships. The heavy families cover the distinct regimes of
//! interest: Pareto (regular variation with positive index), log-normal
//! and heavy Weibull (rapid variation, subexponential), log-Pareto
//! (slowly varying, so not positively decreasing), while the bounded and
//! degenerate families provide light-tailed scale factors. The
//! exponential family exists for inter-arrival modeling.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TailModel {
    Pareto { alpha: f64, scale: f64 },
    LogNormal { mu: f64, sigma: f64 },
    WeibullHeavy { shape: f64, scale: f64 },
    LogPareto { beta: f64 },
    BoundedUniform { b: f64 },
    Degenerate { c: f64 },
    Exponential { rate: f64 },
}

impl TailModel {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            TailModel::Pareto { alpha, scale } => alpha > 0.0 && scale > 0.0,
            TailModel::LogNormal { mu, sigma } => mu.is_finite() && sigma > 0.0,
            TailModel::WeibullHeavy { shape, scale } => {
                shape > 0.0 && shape < 1.0 && scale > 0.0
            }
            TailModel::LogPareto { beta } => beta > 0.0,
            TailModel::BoundedUniform { b } => b > 0.0,
            TailModel::Degenerate { c } => c > 0.0,
            TailModel::Exponential { rate } => rate > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "invalid tail model parameters: {self:?}"
            )))
        }
    }

    /// Survival function `P[X > x]` for `x >= 0`.
    pub fn tail(&self, x: f64) -> f64 {
        debug_assert!(x >= 0.0);
        match *self {
            TailModel::Pareto { alpha, scale } => {
                if x <= scale {
                    1.0
                } else {
                    (scale / x).powf(alpha)
                }
            }
            TailModel::LogNormal { mu, sigma } => {
                if x <= 0.0 {
                    1.0
                } else {
                    let z = (x.ln() - mu) / sigma;
                    standard_normal().sf(z)
                }
            }
            TailModel::WeibullHeavy { shape, scale } => (-(x / scale).powf(shape)).exp(),
            TailModel::LogPareto { beta } => {
                if x <= 1.0 {
                    1.0
                } else {
                    (1.0 + x.ln()).powf(-beta)
                }
            }
            TailModel::BoundedUniform { b } => {
                if x >= b {
                    0.0
                } else {
                    1.0 - x / b
                }
            }
            TailModel::Degenerate { c } => {
                if x < c {
                    1.0
                } else {
                    0.0
                }
            }
            TailModel::Exponential { rate } => (-rate * x).exp(),
        }
    }

    /// Distribution function `1 - tail(x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        1.0 - self.tail(x)
    }

    /// Inverse of the survival function: the `x` with `tail(x) = q`,
    /// for `q` in (0, 1].
    pub fn quantile(&self, q: f64) -> f64 {
        debug_assert!(q > 0.0 && q <= 1.0);
        match *self {
            TailModel::Pareto { alpha, scale } => scale * q.powf(-1.0 / alpha),
            TailModel::LogNormal { mu, sigma } => {
                (mu + sigma * standard_normal().inverse_cdf(1.0 - q)).exp()
            }
            TailModel::WeibullHeavy { shape, scale } => scale * (-q.ln()).powf(1.0 / shape),
            TailModel::LogPareto { beta } => (q.powf(-1.0 / beta) - 1.0).exp(),
            TailModel::BoundedUniform { b } => b * (1.0 - q),
            TailModel::Degenerate { c } => c,
            TailModel::Exponential { rate } => -q.ln() / rate,
        }
    }

    /// Inverse-transform draw.
    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // q in (0, 1]: survival level
        let q = 1.0 - rng.gen::<f64>();
        self.quantile(q)
    }

    /// `n` inverse-transform draws.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.draw(rng)).collect()
    }

    /// Support interval `[lo, hi]` (`hi = None` when unbounded).
    pub fn support(&self) -> (f64, Option<f64>) {
        match *self {
            TailModel::Pareto { scale, .. } => (scale, None),
            TailModel::LogNormal { .. } => (0.0, None),
            TailModel::WeibullHeavy { .. } => (0.0, None),
            TailModel::LogPareto { .. } => (1.0, None),
            TailModel::BoundedUniform { b } => (0.0, Some(b)),
            TailModel::Degenerate { c } => (c, Some(c)),
            TailModel::Exponential { .. } => (0.0, None),
        }
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self, TailModel::Degenerate { .. })
    }

    /// Pointwise survival ratios `tail(b x) / tail(x)` along a grid.
    ///
    /// Families with exponential-scale decay use the analytically
    /// cancelled form, so the ratio stays representable long after the
    /// raw tails underflow. Errors when a grid point leaves the support
    /// or an evaluated tail underflows to zero.
    pub fn tail_ratio(&self, b: f64, x_grid: &[f64]) -> Result<Vec<f64>> {
        if !(b > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "ratio factor must exceed 1, got {b}"
            )));
        }
        let (lo, hi) = self.support();
        let mut out = Vec::with_capacity(x_grid.len());
        for &x in x_grid {
            if !(x > 0.0) || x < lo || hi.map_or(false, |h| x >= h) {
                return Err(Error::InvalidParameter(format!(
                    "grid point {x} outside the support of {self:?}"
                )));
            }
            if self.tail(x * b) == 0.0 {
                return Err(Error::TailUnderflow { x: x * b });
            }
            let r = match *self {
                TailModel::Pareto { alpha, scale } => {
                    if x >= scale {
                        b.powf(-alpha)
                    } else {
                        self.tail(x * b) / self.tail(x)
                    }
                }
                TailModel::WeibullHeavy { shape, scale } => {
                    (-(((x * b) / scale).powf(shape) - (x / scale).powf(shape))).exp()
                }
                TailModel::Exponential { rate } => (-rate * x * (b - 1.0)).exp(),
                TailModel::LogPareto { beta } => {
                    ((1.0 + x.ln()) / (1.0 + (x * b).ln())).powf(beta)
                }
                _ => self.tail(x * b) / self.tail(x),
            };
            if r == 0.0 {
                return Err(Error::TailUnderflow { x: x * b });
            }
            out.push(r);
        }
        Ok(out)
    }
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Finite-sample proxies for the Matuszewska indexes.
///
/// For each `b` the liminf/limsup of the survival ratio are replaced by
/// the min/max of `tail_ratio` over a geometric grid spanning the top
/// two decades below `x_max` (32 points per decade); the indexes are
/// read off at the largest `b` as `-log(ratio)/log(b)`. Returns
/// `(j_minus_hat, j_plus_hat)`.
pub fn matuszewska_estimate(
    model: &TailModel,
    b_grid: &[f64],
    x_max: f64,
) -> Result<(f64, f64)> {
    model.validate()?;
    if b_grid.is_empty() || b_grid.windows(2).any(|w| w[0] >= w[1]) || b_grid[0] <= 1.0 {
        return Err(Error::InvalidParameter(
            "b grid must be increasing with entries above 1".into(),
        ));
    }
    if !(x_max > 0.0) {
        return Err(Error::InvalidParameter("x_max must be positive".into()));
    }
    let grid = geometric_grid(x_max);
    let mut j_minus = f64::NAN;
    let mut j_plus = f64::NAN;
    for &b in b_grid {
        let ratios = model.tail_ratio(b, &grid)?;
        let r_min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let r_max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        // limsup of the ratio drives the lower index, liminf the upper
        j_minus = -r_max.ln() / b.ln();
        j_plus = -r_min.ln() / b.ln();
    }
    Ok((j_minus, j_plus))
}

/// 32 points per decade over the top two decades below `x_max`.
fn geometric_grid(x_max: f64) -> Vec<f64> {
    const PER_DECADE: usize = 32;
    let n = 2 * PER_DECADE;
    (0..=n)
        .map(|j| x_max * 10f64.powf(-2.0 + 2.0 * j as f64 / n as f64))
        .collect()
}

/// A tail index that may be infinite. Serialized as a JSON number or the
/// string `"infinity"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IndexValue {
    Finite(f64),
    Infinity,
}

impl IndexValue {
    pub fn is_finite(&self) -> bool {
        matches!(self, IndexValue::Finite(_))
    }

    pub fn as_f64(&self) -> f64 {
        match *self {
            IndexValue::Finite(v) => v,
            IndexValue::Infinity => f64::INFINITY,
        }
    }
}

impl Serialize for IndexValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            IndexValue::Finite(v) => s.serialize_f64(v),
            IndexValue::Infinity => s.serialize_str("infinity"),
        }
    }
}

impl<'de> Deserialize<'de> for IndexValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let v = serde_json::Value::deserialize(d)?;
        match v {
            serde_json::Value::Number(n) => n
                .as_f64()
                .map(IndexValue::Finite)
                .ok_or_else(|| D::Error::custom("index out of f64 range")),
            serde_json::Value::String(s) if s == "infinity" => Ok(IndexValue::Infinity),
            other => Err(D::Error::custom(format!(
                "expected number or \"infinity\", got {other}"
            ))),
        }
    }
}

/// Known class memberships and indexes of a tail model.
///
/// Table-driven from theory; the estimation routines exist to
/// cross-check these entries, not to derive them (subexponentiality is
/// not decidable from finitely many tail evaluations).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    pub in_d: bool,
    pub in_l: bool,
    pub in_s: bool,
    pub in_pd: bool,
    pub in_c: bool,
    pub rv_index: Option<IndexValue>,
    pub j_minus: IndexValue,
    pub j_plus: IndexValue,
}

impl ClassProfile {
    /// Internal consistency: D membership matches a finite upper index,
    /// PD membership a positive lower index, and a finite
    /// regular-variation index forces both indexes to equal it.
    pub fn is_consistent(&self) -> bool {
        let d_ok = self.in_d == self.j_plus.is_finite();
        let pd_ok = self.in_pd == (self.j_minus.as_f64() > 0.0);
        let order_ok = self.j_minus.as_f64() <= self.j_plus.as_f64();
        let rv_ok = match self.rv_index {
            Some(IndexValue::Finite(a)) => {
                self.j_minus == IndexValue::Finite(a) && self.j_plus == IndexValue::Finite(a)
            }
            _ => true,
        };
        d_ok && pd_ok && order_ok && rv_ok
    }
}

/// Class memberships of the implemented families.
pub fn class_profile(model: &TailModel) -> ClassProfile {
    use IndexValue::{Finite, Infinity};
    match *model {
        TailModel::Pareto { alpha, .. } => ClassProfile {
            in_d: true,
            in_l: true,
            in_s: true,
            in_pd: true,
            in_c: true,
            rv_index: Some(Finite(alpha)),
            j_minus: Finite(alpha),
            j_plus: Finite(alpha),
        },
        TailModel::LogNormal { .. } | TailModel::WeibullHeavy { .. } => ClassProfile {
            in_d: false,
            in_l: true,
            in_s: true,
            in_pd: true,
            in_c: false,
            rv_index: Some(Infinity),
            j_minus: Infinity,
            j_plus: Infinity,
        },
        // slowly varying tail: ratios tend to 1, so dominated and
        // consistent variation hold but positive decrease fails
        TailModel::LogPareto { .. } => ClassProfile {
            in_d: true,
            in_l: true,
            in_s: true,
            in_pd: false,
            in_c: true,
            rv_index: None,
            j_minus: Finite(0.0),
            j_plus: Finite(0.0),
        },
        TailModel::BoundedUniform { .. } | TailModel::Degenerate { .. } => ClassProfile {
            in_d: false,
            in_l: false,
            in_s: false,
            in_pd: true,
            in_c: false,
            rv_index: None,
            j_minus: Infinity,
            j_plus: Infinity,
        },
        TailModel::Exponential { .. } => ClassProfile {
            in_d: false,
            in_l: false,
            in_s: false,
            in_pd: true,
            in_c: false,
            rv_index: Some(Infinity),
            j_minus: Infinity,
            j_plus: Infinity,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn tail_examples() {
        let pareto = TailModel::Pareto {
            alpha: 2.0,
            scale: 1.0,
        };
        assert!((pareto.tail(10.0) - 0.01).abs() < 1e-15);
        assert_eq!(pareto.tail(0.0), 1.0);

        let lp = TailModel::LogPareto { beta: 1.0 };
        // 1 + ln x = 10 at x = e^9
        assert!((lp.tail(9f64.exp()) - 0.1).abs() < 1e-12);

        let exp = TailModel::Exponential { rate: 2.0 };
        assert!((exp.tail(1.0) - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn quantile_inverts_tail() {
        let models = [
            TailModel::Pareto {
                alpha: 2.0,
                scale: 1.5,
            },
            TailModel::LogNormal { mu: 0.3, sigma: 1.2 },
            TailModel::WeibullHeavy {
                shape: 0.5,
                scale: 2.0,
            },
            TailModel::LogPareto { beta: 1.5 },
            TailModel::BoundedUniform { b: 3.0 },
            TailModel::Exponential { rate: 0.7 },
        ];
        for m in &models {
            for q in [0.9, 0.5, 0.1, 0.01, 1e-4] {
                let x = m.quantile(q);
                let back = m.tail(x);
                assert!(
                    (back - q).abs() <= 1e-9 * q,
                    "{m:?}: tail(quantile({q})) = {back}"
                );
            }
        }
    }

    #[test]
    fn degenerate_sampling() {
        let m = TailModel::Degenerate { c: 3.0 };
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        assert_eq!(m.sample(&mut rng, 2), vec![3.0, 3.0]);
    }

    #[test]
    fn pareto_inverse_transform_point() {
        let m = TailModel::Pareto {
            alpha: 2.0,
            scale: 1.0,
        };
        // survival level 0.01 maps to the 1% quantile
        assert!((m.quantile(0.01) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn bounded_uniform_ks_statistic() {
        let m = TailModel::BoundedUniform { b: 1.0 };
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let n = 10_000;
        let mut xs = m.sample(&mut rng, n);
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut ks: f64 = 0.0;
        for (i, x) in xs.iter().enumerate() {
            let emp_hi = (i + 1) as f64 / n as f64;
            let emp_lo = i as f64 / n as f64;
            ks = ks.max((emp_hi - x).abs()).max((x - emp_lo).abs());
        }
        assert!(ks < 1.63 / (n as f64).sqrt(), "KS statistic {ks}");
    }

    #[test]
    fn tail_ratio_examples() {
        let pareto = TailModel::Pareto {
            alpha: 2.0,
            scale: 1.0,
        };
        let r = pareto.tail_ratio(2.0, &[1.0, 7.3, 100.0]).unwrap();
        for v in r {
            assert!((v - 0.25).abs() < 1e-15);
        }

        let lp = TailModel::LogPareto { beta: 1.0 };
        let x = 9f64.exp();
        let r = lp.tail_ratio(2.0, &[x]).unwrap();
        assert!((r[0] - 10.0 / (10.0 + 2f64.ln())).abs() < 1e-12);

        let wb = TailModel::WeibullHeavy {
            shape: 0.5,
            scale: 1.0,
        };
        let r = wb.tail_ratio(4.0, &[1.0]).unwrap();
        assert!((r[0] - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn tail_ratio_rejects_out_of_support() {
        let lp = TailModel::LogPareto { beta: 1.0 };
        assert!(lp.tail_ratio(2.0, &[0.5]).is_err());
        let bu = TailModel::BoundedUniform { b: 1.0 };
        assert!(bu.tail_ratio(2.0, &[1.5]).is_err());
    }

    #[test]
    fn matuszewska_pareto_exact() {
        let m = TailModel::Pareto {
            alpha: 2.0,
            scale: 1.0,
        };
        let (jm, jp) = matuszewska_estimate(&m, &[2.0, 4.0, 8.0], 1e4).unwrap();
        assert!((jm - 2.0).abs() < 1e-9);
        assert!((jp - 2.0).abs() < 1e-9);
    }

    #[test]
    fn matuszewska_underflow_reports_x() {
        let m = TailModel::WeibullHeavy {
            shape: 0.5,
            scale: 1.0,
        };
        let b_grid: Vec<f64> = (1..=10).map(|k| 2f64.powi(k)).collect();
        match matuszewska_estimate(&m, &b_grid, 1e6) {
            Err(Error::TailUnderflow { x }) => assert!(x > 1e6),
            other => panic!("expected underflow error, got {other:?}"),
        }
    }

    #[test]
    fn class_profiles_are_consistent() {
        let models = [
            TailModel::Pareto {
                alpha: 2.0,
                scale: 1.0,
            },
            TailModel::LogNormal { mu: 0.0, sigma: 1.0 },
            TailModel::WeibullHeavy {
                shape: 0.5,
                scale: 1.0,
            },
            TailModel::LogPareto { beta: 1.0 },
            TailModel::BoundedUniform { b: 1.0 },
            TailModel::Degenerate { c: 2.0 },
            TailModel::Exponential { rate: 1.0 },
        ];
        for m in &models {
            let p = class_profile(m);
            assert!(p.is_consistent(), "{m:?} profile inconsistent: {p:?}");
        }
        let pareto = class_profile(&TailModel::Pareto {
            alpha: 2.0,
            scale: 1.0,
        });
        assert!(pareto.in_pd && pareto.in_d);
        assert_eq!(pareto.j_minus, IndexValue::Finite(2.0));

        let lp = class_profile(&TailModel::LogPareto { beta: 1.0 });
        assert!(!lp.in_pd);
        assert_eq!(lp.j_minus, IndexValue::Finite(0.0));

        let wb = class_profile(&TailModel::WeibullHeavy {
            shape: 0.5,
            scale: 1.0,
        });
        assert!(wb.in_pd && !wb.in_d);
    }

    #[test]
    fn sampler_matches_tail_at_deep_quantiles() {
        let models = [
            TailModel::Pareto {
                alpha: 2.0,
                scale: 1.0,
            },
            TailModel::WeibullHeavy {
                shape: 0.5,
                scale: 1.0,
            },
        ];
        let n = 1_000_000usize;
        for m in &models {
            let mut rng = ChaCha12Rng::seed_from_u64(2024);
            for q in [0.1, 0.01] {
                let threshold = m.quantile(q);
                let mut hits = 0u64;
                for _ in 0..n {
                    if m.draw(&mut rng) > threshold {
                        hits += 1;
                    }
                }
                let p_hat = hits as f64 / n as f64;
                let tol = 3.0 * (q * (1.0 - q) / n as f64).sqrt();
                assert!(
                    (p_hat - q).abs() <= tol,
                    "{m:?} q={q}: p_hat={p_hat}, tol={tol}"
                );
            }
        }
    }

    #[test]
    fn model_json_shape() {
        let m = TailModel::Pareto {
            alpha: 2.0,
            scale: 1.0,
        };
        let json = serde_json::to_value(m).unwrap();
        assert_eq!(
            json,
            serde_json::json!({"family": "pareto", "alpha": 2.0, "scale": 1.0})
        );
        let back: TailModel = serde_json::from_value(json).unwrap();
        assert_eq!(back, m);
    }
}
