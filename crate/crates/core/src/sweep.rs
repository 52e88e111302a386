//! `ν`-sweeps over one network shape and log-log power-law fits.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hitting::{asymptotic_mean, escape_params, mean_hitting_time, HittingQuery, LimitLaw};
use crate::mixing::{mixing_report, MixingReport};
use crate::model::{AggState, PartiteNetwork};
use crate::par::{map_indices, Exec};
use crate::spectral::absorption_spectrum;

/// Least-squares line through `(ln ν, ln value)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub slope: f64,
    pub log_intercept: f64,
    pub r_squared: f64,
}

impl PowerLawFit {
    /// `exp(log_intercept)`.
    pub fn prefactor(&self) -> f64 {
        self.log_intercept.exp()
    }

    pub fn predict(&self, nu: f64) -> f64 {
        (self.log_intercept + self.slope * nu.ln()).exp()
    }
}

pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    if points.len() < 2 {
        return Err(Error::validation("points", "need at least two points"));
    }
    if let Some(p) = points.iter().find(|p| !(p.0 > 0.0 && p.1 > 0.0) || !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::validation("points", format!("nonpositive or non-finite point {p:?}")));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::validation("points", "all ν values coincide"));
    }
    let slope = sxy / sxx;
    let log_intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - log_intercept - slope * x).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { (1.0 - sse / syy).clamp(0.0, 1.0) };
    Ok(PowerLawFit {
        slope,
        log_intercept,
        r_squared,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    Hitting,
    Mixing,
    Spectrum,
    LimitLaw,
}

/// A sweep read from TOML:
///
/// ```toml
/// sizes = [2, 3]
/// nus = [100.0, 1000.0, 10000.0]
/// kind = "hitting"
/// from = "1:2"
/// to = "2:3"
/// ```
///
/// `mixing` reads `epsilon` (default 1/8), `spectrum` reads `absorb`
/// (default `"0"`), `limit-law` reads `k1` and `k2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub sizes: Vec<usize>,
    pub nus: Vec<f64>,
    pub kind: SweepKind,
    #[serde(default)]
    pub from: Option<String>,
    #[serde(default)]
    pub to: Option<String>,
    #[serde(default)]
    pub absorb: Option<String>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub k1: Option<usize>,
    #[serde(default)]
    pub k2: Option<usize>,
}

pub const DEFAULT_EPSILON: f64 = 0.125;

impl SweepSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Input(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nus.len() < 2 {
            return Err(Error::validation("nus", "need at least two values"));
        }
        if self.nus.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::validation("nus", "values must be positive and finite"));
        }
        if self.nus.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation("nus", "values must be strictly increasing"));
        }
        let net = self.network(self.nus[0])?;
        match self.kind {
            SweepKind::Hitting => {
                self.query()?.check(&net)?;
            }
            SweepKind::Mixing => {
                let eps = self.epsilon();
                if !(eps > 0.0 && eps < 0.5) {
                    return Err(Error::validation("epsilon", "must lie in (0, 1/2)"));
                }
            }
            SweepKind::Spectrum => {
                net.state_index(self.absorbing()?)?;
            }
            SweepKind::LimitLaw => {
                let (k1, k2) = self.components()?;
                escape_params(&net, k1, k2)?;
            }
        }
        Ok(())
    }

    pub fn network(&self, nu: f64) -> Result<PartiteNetwork> {
        PartiteNetwork::new(self.sizes.clone(), nu)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or(DEFAULT_EPSILON)
    }

    fn query(&self) -> Result<HittingQuery> {
        let parse = |field: &'static str, v: &Option<String>| -> Result<AggState> {
            v.as_deref()
                .ok_or_else(|| Error::validation(field, "required for a hitting sweep"))?
                .parse()
        };
        HittingQuery::new(parse("from", &self.from)?, parse("to", &self.to)?)
    }

    fn absorbing(&self) -> Result<AggState> {
        self.absorb.as_deref().unwrap_or("0").parse()
    }

    fn components(&self) -> Result<(usize, usize)> {
        match (self.k1, self.k2) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(Error::validation("k1", "k1 and k2 are required for a limit-law sweep")),
        }
    }
}

/// Outcome of [`run_sweep`]: plot-ready CSV plus a fit of one column.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub kind: SweepKind,
    pub sizes: Vec<usize>,
    /// Name of the CSV column the fit is taken on.
    pub fitted_column: &'static str,
    pub fit: PowerLawFit,
    /// Fitted column at the largest `ν`.
    pub top_value: f64,
    /// Leading-order law where one is known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub asymptotic: Option<Asymptotic>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit_law: Option<LimitLaw>,
    #[serde(skip)]
    pub csv: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Asymptotic {
    pub coefficient: f64,
    pub exponent: i32,
}

type Rows = (String, Vec<(f64, f64)>, Option<Asymptotic>);

fn hitting_rows(spec: &SweepSpec, q: HittingQuery, exec: Exec) -> Result<Rows> {
    let law = asymptotic_mean(&spec.network(spec.nus[0])?, q).ok();
    let means = map_indices(exec, spec.nus.len(), |i| {
        let net = spec.network(spec.nus[i])?;
        mean_hitting_time(&net.generator(&[])?, q)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let mut csv = String::from("nu,mean_exact,mean_asymptotic,ratio\n");
    for (&nu, &m) in spec.nus.iter().zip(&means) {
        match &law {
            Some(l) => {
                let a = l.evaluate(nu);
                csv.push_str(&format!("{nu:e},{m:e},{a:e},{:e}\n", m / a));
            }
            None => csv.push_str(&format!("{nu:e},{m:e},,\n")),
        }
    }
    let points = spec.nus.iter().copied().zip(means).collect();
    let asym = law.map(|l| Asymptotic {
        coefficient: l.coefficient,
        exponent: l.exponent,
    });
    Ok((csv, points, asym))
}

pub fn run_sweep(spec: &SweepSpec, exec: Exec) -> Result<SweepResult> {
    spec.validate()?;
    let mut limit_law = None;
    let (csv, points, asymptotic, fitted_column) = match spec.kind {
        SweepKind::Hitting => {
            let (csv, pts, asym) = hitting_rows(spec, spec.query()?, exec)?;
            (csv, pts, asym, "mean_exact")
        }
        SweepKind::LimitLaw => {
            let (k1, k2) = spec.components()?;
            let net = spec.network(spec.nus[0])?;
            limit_law = Some(LimitLaw::from_params(&escape_params(&net, k1, k2)?));
            let q = HittingQuery::new(net.leaf(k1), net.leaf(k2))?;
            let (csv, pts, asym) = hitting_rows(spec, q, exec)?;
            (csv, pts, asym, "mean_exact")
        }
        SweepKind::Mixing => {
            let eps = spec.epsilon();
            let reports = spec
                .nus
                .iter()
                .map(|&nu| mixing_report(&spec.network(nu)?, eps, exec))
                .collect::<Result<Vec<MixingReport>>>()?;
            let pts = reports.iter().map(|r| (r.nu, r.t_mix)).collect();
            (crate::mixing::mixing_csv(&reports), pts, None, "t_mix")
        }
        SweepKind::Spectrum => {
            let absorb = spec.absorbing()?;
            let rows = map_indices(exec, spec.nus.len(), |i| {
                let gen = spec.network(spec.nus[i])?.generator(&[])?;
                let pt = absorption_spectrum(&gen, absorb)?;
                Ok((pt.rates()[0], pt.mean()))
            })
            .into_iter()
            .collect::<Result<Vec<(f64, f64)>>>()?;
            let mut csv = String::from("nu,alpha_1,mean_exact,product\n");
            for (&nu, &(a, m)) in spec.nus.iter().zip(&rows) {
                csv.push_str(&format!("{nu:e},{a:e},{m:e},{:e}\n", a * m));
            }
            let pts = spec.nus.iter().zip(&rows).map(|(&nu, &(_, m))| (nu, m)).collect();
            (csv, pts, None, "mean_exact")
        }
    };
    let points: Vec<(f64, f64)> = points;
    let fit = fit_power_law(&points)?;
    Ok(SweepResult {
        kind: spec.kind,
        sizes: spec.sizes.clone(),
        fitted_column,
        fit,
        top_value: points.last().expect("≥ 2 points").1,
        asymptotic,
        limit_law,
        csv,
    })
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}
