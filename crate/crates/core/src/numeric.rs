//! Small log-domain helpers shared by the stationary-law and conductance code.

/// `ln(Σ exp(x_i))`, stable for arbitrarily large or small terms.
///
/// Returns `-inf` for an empty slice or when every term is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// `ln C(n, k)` by direct summation of logarithms; exact to rounding for the
/// component sizes used here.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    (0..k)
        .map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln())
        .sum()
}

/// `ln n!`.
pub fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// `√(a·b)` computed as `exp(½(ln a + ln b))` so that large rate products
/// never overflow.
pub fn geometric_mean(a: f64, b: f64) -> f64 {
    (0.5 * (a.ln() + b.ln())).exp()
}
