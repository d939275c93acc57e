//! Monte Carlo estimates with provenance.

use serde::{Deserialize, Serialize};

/// Point estimate with standard error, sample count and the seed that
/// produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateCI {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: u64,
    pub seed: u64,
}

impl EstimateCI {
    /// Binomial proportion from hit counts.
    pub fn from_hits(hits: u64, n: u64, seed: u64) -> Self {
        assert!(n >= 1, "need at least one sample");
        let p = hits as f64 / n as f64;
        EstimateCI {
            value: p,
            std_error: (p * (1.0 - p) / n as f64).sqrt(),
            n_samples: n,
            seed,
        }
    }

    /// Sample mean from accumulated sums.
    pub fn from_sums(sum: f64, sum_sq: f64, n: u64, seed: u64) -> Self {
        assert!(n >= 1, "need at least one sample");
        let nf = n as f64;
        let mean = sum / nf;
        let var = ((sum_sq / nf) - mean * mean).max(0.0);
        EstimateCI {
            value: mean,
            std_error: (var / nf).sqrt(),
            n_samples: n,
            seed,
        }
    }

    /// Divides the estimate by a deterministic constant (analytic
    /// denominator of a ratio check).
    pub fn scaled(&self, denom: f64) -> Self {
        EstimateCI {
            value: self.value / denom,
            std_error: self.std_error / denom,
            n_samples: self.n_samples,
            seed: self.seed,
        }
    }
}

/// Accumulator for a ratio-of-means estimator whose numerator and
/// denominator are computed on shared samples. The delta-method standard
/// error keeps the (usually positive) covariance, which tightens the CI
/// compared with treating the two sides as independent.
#[derive(Debug, Clone, Copy, Default)]
pub struct RatioAcc {
    pub n: u64,
    pub sum_a: f64,
    pub sum_b: f64,
    pub sum_aa: f64,
    pub sum_bb: f64,
    pub sum_ab: f64,
}

impl RatioAcc {
    pub fn push(&mut self, a: f64, b: f64) {
        self.n += 1;
        self.sum_a += a;
        self.sum_b += b;
        self.sum_aa += a * a;
        self.sum_bb += b * b;
        self.sum_ab += a * b;
    }

    pub fn merge(&mut self, other: &RatioAcc) {
        self.n += other.n;
        self.sum_a += other.sum_a;
        self.sum_b += other.sum_b;
        self.sum_aa += other.sum_aa;
        self.sum_bb += other.sum_bb;
        self.sum_ab += other.sum_ab;
    }

    /// (ratio, standard error) of mean(a)/mean(b).
    pub fn ratio(&self) -> (f64, f64) {
        let nf = self.n as f64;
        let ma = self.sum_a / nf;
        let mb = self.sum_b / nf;
        let va = (self.sum_aa / nf - ma * ma).max(0.0);
        let vb = (self.sum_bb / nf - mb * mb).max(0.0);
        let cab = self.sum_ab / nf - ma * mb;
        let r = ma / mb;
        let var = (va - 2.0 * r * cab + r * r * vb).max(0.0) / (nf * mb * mb);
        (r, var.sqrt())
    }
}
