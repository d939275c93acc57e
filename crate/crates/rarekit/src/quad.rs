//! Deterministic quadrature routines.
//!
//! Two workhorses: a tanh-sinh rule on a finite interval, used for the
//! one-dimensional expectation oracles (it tolerates integrable endpoint
//! singularities such as `q^{-alpha/alpha_theta}` at `q -> 0`), and a
//! Gauss-Legendre tensor rule over the simplex `{s_i > 0, sum s_i < t}`
//! used by the truncated nested-series evaluators.

/// Integrates `f` over `(a, b)` with the tanh-sinh (double exponential)
/// rule, refining until successive levels agree to `tol` (relative, with
/// an absolute floor).
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    assert!(b > a, "empty integration interval");
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let eval = |t: f64| -> f64 {
        // x = center + half*tanh(pi/2 sinh t); w = half * pi/2 cosh t / cosh^2(pi/2 sinh t)
        let s = std::f64::consts::FRAC_PI_2 * t.sinh();
        if s.abs() > 300.0 {
            return 0.0;
        }
        let x = center + half * s.tanh();
        if x <= a || x >= b {
            return 0.0;
        }
        let c = s.cosh();
        let w = half * std::f64::consts::FRAC_PI_2 * t.cosh() / (c * c);
        let v = f(x);
        if v.is_finite() {
            v * w
        } else {
            0.0
        }
    };

    let t_max = 4.0;
    let mut h = 1.0;
    let mut sum = eval(0.0);
    let mut k = 1;
    while (k as f64) * h <= t_max {
        let t = k as f64 * h;
        sum += eval(t) + eval(-t);
        k += 1;
    }
    let mut integral = sum * h;

    for _level in 0..12 {
        h *= 0.5;
        // add the new midpoints only
        let mut add = 0.0;
        let mut j = 1;
        while (j as f64) * h <= t_max {
            let t = j as f64 * h;
            add += eval(t) + eval(-t);
            j += 2;
        }
        sum += add;
        let refined = sum * h;
        let err = (refined - integral).abs();
        integral = refined;
        if err <= tol * integral.abs().max(1.0) {
            break;
        }
    }
    integral
}

/// Gauss-Legendre nodes and weights on [0, 1], computed by Newton
/// iteration on the Legendre polynomial.
pub fn gauss_legendre_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // initial guess (roots of Chebyshev as seed)
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map from [-1,1] to [0,1]
        nodes[n - 1 - i] = 0.5 * (x + 1.0);
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { p0 } else { p1 };
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p, dp)
}

/// Integrates `f(s_1, ..., s_dim)` over the open simplex
/// `{s_i > 0, sum s_i < t}` with a tensor Gauss-Legendre rule mapped to
/// the variable-limit iterated integral.
pub fn simplex_gauss<F: Fn(&[f64]) -> f64>(dim: usize, t: f64, nodes_per_dim: usize, f: F) -> f64 {
    let (nodes, weights) = gauss_legendre_01(nodes_per_dim);
    let mut s = vec![0.0; dim];
    recurse(&f, &nodes, &weights, t, &mut s, 0, 1.0)
}

fn recurse<F: Fn(&[f64]) -> f64>(
    f: &F,
    nodes: &[f64],
    weights: &[f64],
    remaining: f64,
    s: &mut Vec<f64>,
    depth: usize,
    jac: f64,
) -> f64 {
    if depth == s.len() {
        return jac * f(s);
    }
    if remaining <= 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for (x, w) in nodes.iter().zip(weights) {
        s[depth] = remaining * x;
        acc += w * recurse(
            f,
            nodes,
            weights,
            remaining - s[depth],
            s,
            depth + 1,
            jac * remaining,
        );
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanh_sinh_polynomial() {
        let v = tanh_sinh(|x| x * x, 0.0, 1.0, 1e-12);
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn tanh_sinh_endpoint_singularity() {
        // integral of x^{-1/2} over (0,1) = 2
        let v = tanh_sinh(|x| x.powf(-0.5), 0.0, 1.0, 1e-12);
        assert!((v - 2.0).abs() < 1e-10, "got {v}");
    }

    #[test]
    fn gauss_legendre_exactness() {
        let (x, w) = gauss_legendre_01(12);
        // exact for polynomials up to degree 23
        let int_x5: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(5)).sum();
        assert!((int_x5 - 1.0 / 6.0).abs() < 1e-14);
        let total: f64 = w.iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn simplex_volume() {
        // volume of {s in R^3_+ : sum < t} is t^3/6
        let v = simplex_gauss(3, 2.0, 8, |_| 1.0);
        assert!((v - 8.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn simplex_linear_moment() {
        // int_{sum<1} s_1 ds = 1/24 in dim 3
        let v = simplex_gauss(3, 1.0, 8, |s| s[0]);
        assert!((v - 1.0 / 24.0).abs() < 1e-12);
    }
}
