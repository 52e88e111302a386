use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::hitting::LimitLaw;
use crate::spectral::PhaseType;

/// A distribution function. `cdf_left(x) = P(X < x)` differs from `cdf`
/// only at atoms.
pub trait Cdf {
    fn cdf(&self, x: f64) -> f64;

    fn cdf_left(&self, x: f64) -> f64 {
        self.cdf(x)
    }
}

impl<F: Fn(f64) -> f64> Cdf for F {
    fn cdf(&self, x: f64) -> f64 {
        self(x)
    }
}

/// Exponential law with the given rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpCdf {
    pub rate: f64,
}

impl Cdf for ExpCdf {
    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            -(-self.rate * x).exp_m1()
        }
    }
}

impl Cdf for PhaseType {
    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        self.cdf(x).or_else(|_| self.cdf_serial(x)).unwrap_or(f64::NAN)
    }
}

impl Cdf for LimitLaw {
    fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            0.0
        } else {
            LimitLaw::cdf(self, x).expect("x ≥ 0")
        }
    }

    fn cdf_left(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            LimitLaw::cdf_left(self, x).expect("x > 0")
        }
    }
}

/// Smallest sample size accepted by [`ks_statistic`].
pub const KS_MIN_SAMPLES: usize = 10;

/// `sup_x |F_n(x) − F(x)|`, exact for step and continuous `F`.
pub fn ks_statistic(samples: &[f64], cdf: &impl Cdf) -> Result<f64> {
    if samples.len() < KS_MIN_SAMPLES {
        return Err(Error::validation(
            "samples",
            format!("need at least {KS_MIN_SAMPLES}, got {}", samples.len()),
        ));
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::validation("samples", "NaN sample"));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < s.len() {
        let v = s[i];
        let mut j = i;
        while j < s.len() && s[j] == v {
            j += 1;
        }
        // the empirical CDF jumps from i/n to j/n at v
        d = d.max(j as f64 / n - cdf.cdf(v)).max(cdf.cdf_left(v) - i as f64 / n);
        i = j;
    }
    Ok(d)
}

/// Significance levels with hard-coded asymptotic critical values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KsLevel {
    P10,
    P05,
    P01,
}

impl KsLevel {
    /// `c_α` in `D_crit ≈ c_α/√n`.
    pub fn coefficient(self) -> f64 {
        match self {
            KsLevel::P10 => 1.2238,
            KsLevel::P05 => 1.3581,
            KsLevel::P01 => 1.6276,
        }
    }
}

pub fn ks_critical_value(n: usize, level: KsLevel) -> f64 {
    level.coefficient() / (n as f64).sqrt()
}

/// Asymptotic Kolmogorov p-value with Stephens' small-sample correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let rn = (n as f64).sqrt();
    let lambda = (rn + 0.12 + 0.11 / rn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Cells after pooling (the remainder cell included).
    pub cells: usize,
}

/// Pearson goodness of fit. `cells` holds `(probability, observed count)`;
/// a remainder cell with the leftover probability and count is added, and
/// cells with expected count below 5 are pooled.
pub fn chi_square_gof(cells: &[(f64, u64)], n: u64) -> Result<ChiSquareResult> {
    if n == 0 {
        return Err(Error::validation("n", "no observations"));
    }
    let listed_p: f64 = cells.iter().map(|c| c.0).sum();
    let listed_n: u64 = cells.iter().map(|c| c.1).sum();
    if cells.iter().any(|c| !(c.0 >= 0.0)) || listed_p > 1.0 + 1e-9 || listed_n > n {
        return Err(Error::validation("cells", "probabilities or counts exceed their totals"));
    }
    let nf = n as f64;
    let mut big: Vec<(f64, f64)> = Vec::new();
    let mut pooled = ((1.0 - listed_p).max(0.0) * nf, (n - listed_n) as f64);
    for &(p, c) in cells {
        let e = p * nf;
        if e >= 5.0 {
            big.push((e, c as f64));
        } else {
            pooled.0 += e;
            pooled.1 += c as f64;
        }
    }
    if pooled.0 > 0.0 || pooled.1 > 0.0 {
        if pooled.0 < 5.0 && !big.is_empty() {
            let (i, _) = big
                .iter()
                .enumerate()
                .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
                .expect("nonempty");
            big[i].0 += pooled.0;
            big[i].1 += pooled.1;
        } else {
            big.push(pooled);
        }
    }
    if big.len() < 2 {
        return Err(Error::validation("cells", "fewer than two cells after pooling"));
    }
    let statistic: f64 = big.iter().map(|(e, o)| (o - e).powi(2) / e).sum();
    let df = big.len() - 1;
    let dist = ChiSquared::new(df as f64).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(ChiSquareResult {
        statistic,
        df,
        p_value: dist.sf(statistic),
        cells: big.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::batch;
    use rand::Rng;

    #[test]
    fn ks_small_sample_rejected() {
        assert!(ks_statistic(&[1.0; 9], &ExpCdf { rate: 1.0 }).is_err());
    }

    #[test]
    fn ks_null_and_misfit() {
        let n = 10_000;
        let xs = batch(|rng, _| -(1.0 - rng.random::<f64>()).ln(), n, 1, 1).unwrap();
        let d = ks_statistic(&xs, &ExpCdf { rate: 1.0 }).unwrap();
        assert!(d < ks_critical_value(n, KsLevel::P01));
        assert!(ks_p_value(d, n) > 0.01);
        let constant = vec![1.0; 100];
        let d = ks_statistic(&constant, &ExpCdf { rate: 1.0 }).unwrap();
        assert!((d - (1.0 - (-1.0f64).exp()).max((-1.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn ks_respects_atoms() {
        // half the mass at 0, half Exp(1)
        let law = LimitLaw::new(0.5, 0).unwrap();
        let n = 20_000;
        let xs = batch(
            |rng, _| {
                if rng.random::<f64>() < 0.5 {
                    0.0
                } else {
                    2.0 * -(1.0 - rng.random::<f64>()).ln()
                }
            },
            n,
            4,
            1,
        )
        .unwrap();
        let d = ks_statistic(&xs, &law).unwrap();
        assert!(d < ks_critical_value(n, KsLevel::P01), "{d}");
    }

    #[test]
    fn critical_values_table() {
        assert!((ks_critical_value(10_000, KsLevel::P01) - 0.016276).abs() < 1e-12);
        assert!((ks_critical_value(100, KsLevel::P05) - 0.13581).abs() < 1e-12);
        // the table values sit at the stated levels of the limit law
        assert!((ks_p_value(1.6276 / 1e3, 1_000_000) - 0.01).abs() < 2e-4);
        assert!((ks_p_value(1.3581 / 1e3, 1_000_000) - 0.05).abs() < 5e-4);
    }

    #[test]
    fn chi_square_pooling_and_fit() {
        let r = chi_square_gof(&[(0.5, 50), (0.3, 30)], 100).unwrap();
        assert_eq!(r.df, 2);
        assert!(r.statistic.abs() < 1e-12 && (r.p_value - 1.0).abs() < 1e-12);
        let r = chi_square_gof(&[(0.5, 90), (0.5, 10)], 100).unwrap();
        assert!(r.p_value < 1e-10);
        // a tiny cell is pooled into the remainder
        let r = chi_square_gof(&[(0.6, 60), (0.01, 1)], 100).unwrap();
        assert_eq!(r.cells, 2);
        assert!(chi_square_gof(&[(0.6, 60)], 50).is_err());
    }
}
