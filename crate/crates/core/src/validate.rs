//! Built-in invariant suite over a fixed instance grid. Every Monte Carlo
//! check uses a fixed seed, so the report is a pure function of the code.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hitting::{
    bd_step_mean, escape_params, excursion_pmf, line_position, mean_hitting_time, HittingQuery,
    LimitLaw, Step,
};
use crate::mixing::{coupling_time_mean, mixing_report, DistanceCurve};
use crate::model::{
    aggregate, balance_residual, detailed_balance_defect, stationary_full, AggState, FullState, PartiteNetwork,
};
use crate::montecarlo::{
    batch, chi_square_gof, dominance_fraction, empirical_excursions, ks_critical_value, ks_statistic, occupation,
    sample_hitting_time_with, sample_limit_law, simulate_full, FullClock, KsLevel,
};
use crate::par::Exec;
use crate::spectral::{absorption_spectrum, Propagator};
use crate::sweep::{fit_power_law, log_spaced};
use crate::SCHEMA_VERSION;

/// Acceptance region of one check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Below(f64),
    Above(f64),
    Within(f64, f64),
}

impl Bound {
    pub fn admits(&self, v: f64) -> bool {
        match *self {
            Bound::Below(b) => v < b,
            Bound::Above(b) => v > b,
            Bound::Within(lo, hi) => lo <= v && v <= hi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub group: String,
    pub name: String,
    pub value: f64,
    pub bound: Bound,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub schema_version: u32,
    pub checks: Vec<Check>,
    pub passed: usize,
    pub failed: usize,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

struct Recorder {
    checks: Vec<Check>,
}

impl Recorder {
    fn push(&mut self, group: &str, name: String, value: f64, bound: Bound) {
        self.checks.push(Check {
            group: group.to_string(),
            name,
            value,
            passed: bound.admits(value),
            bound,
        });
    }
}

fn net(sizes: &[usize], nu: f64) -> Result<PartiteNetwork> {
    PartiteNetwork::new(sizes.to_vec(), nu)
}

fn sizes_tag(sizes: &[usize]) -> String {
    sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
}

const SIZES_GRID: [&[usize]; 6] = [&[2], &[3], &[2, 2], &[3, 2], &[2, 2, 2], &[3, 3, 2]];
const NU_GRID: [f64; 4] = [0.5, 1.0, 10.0, 1e3];

fn stationary_checks(r: &mut Recorder) -> Result<()> {
    for sizes in SIZES_GRID {
        for nu in NU_GRID {
            let n = net(sizes, nu)?;
            let gen = n.generator(&[])?;
            let pi = n.stationary_agg();
            let tag = format!("({}) nu={nu}", sizes_tag(sizes));
            r.push("stationary", format!("balance residual {tag}"), balance_residual(&gen, &pi)?, Bound::Below(1e-10));
            r.push(
                "stationary",
                format!("detailed balance {tag}"),
                detailed_balance_defect(&gen, &pi)?,
                Bound::Below(1e-12),
            );
            let lumped = aggregate(&stationary_full(&n)?, &n)?;
            let diff = lumped
                .probabilities()
                .iter()
                .zip(pi.probabilities())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            r.push("stationary", format!("lumped full law {tag}"), diff, Bound::Below(1e-12));
        }
    }
    Ok(())
}

fn hitting_checks(r: &mut Recorder) -> Result<()> {
    for l in [2usize, 3, 4] {
        let nu = 1e4;
        let n = net(&[l], nu)?;
        let q = HittingQuery::new(AggState::branch(1, l), AggState::Center)?;
        let m = mean_hitting_time(&n.generator(&[])?, q)?;
        r.push(
            "hitting",
            format!("single-branch escape scaling L={l} nu=1e4"),
            m * l as f64 / nu.powi(l as i32 - 1),
            Bound::Within(0.98, 1.02),
        );
    }
    // a first passage along the line is the sum of its single steps
    for (sizes, nu, from, to) in [
        (&[3usize, 2][..], 10.0, AggState::branch(1, 3), AggState::branch(2, 2)),
        (&[3, 2][..], 7.0, AggState::branch(2, 1), AggState::branch(1, 2)),
        (&[4][..], 50.0, AggState::Center, AggState::branch(1, 4)),
    ] {
        let n = net(sizes, nu)?;
        let exact = mean_hitting_time(&n.generator(&[])?, HittingQuery::new(from, to)?)?;
        let (a, b) = (line_position(&n, from)?, line_position(&n, to)?);
        let sum: f64 = if a < b {
            (a..b).map(|p| bd_step_mean(&n, p, Step::Up)).sum::<Result<f64>>()?
        } else {
            ((b + 1)..=a).map(|p| bd_step_mean(&n, p, Step::Down)).sum::<Result<f64>>()?
        };
        r.push(
            "hitting",
            format!("step-sum identity ({}) nu={nu} {from}->{to}", sizes_tag(sizes)),
            (sum / exact - 1.0).abs(),
            Bound::Below(1e-10),
        );
    }
    let nus = log_spaced(1e2, 1e4, 5);
    let q = HittingQuery::new(AggState::branch(1, 2), AggState::branch(2, 3))?;
    let pts = nus
        .iter()
        .map(|&nu| Ok((nu, mean_hitting_time(&net(&[2, 3], nu)?.generator(&[])?, q)?)))
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_power_law(&pts)?;
    r.push("hitting", "bipartite (2,3) cross-branch slope".into(), fit.slope, Bound::Within(0.98, 1.02));
    r.push(
        "hitting",
        "bipartite (2,3) cross-branch prefactor at nu=1e4".into(),
        pts[4].1 / 1e4 / (5.0 / 6.0),
        Bound::Within(0.95, 1.05),
    );
    let n = net(&[3, 3, 2], 1e4)?;
    let m = mean_hitting_time(&n.generator(&[])?, HittingQuery::new(AggState::branch(1, 3), AggState::branch(3, 2))?)?;
    r.push(
        "hitting",
        "(3,3,2) branch 1 -> branch 3 over 4/3 nu^2 at nu=1e4".into(),
        m / (4.0 / 3.0 * 1e8),
        Bound::Within(0.95, 1.05),
    );
    Ok(())
}

fn spectral_checks(r: &mut Recorder) -> Result<()> {
    for nu in [1e2, 1e3, 1e4] {
        let gen = net(&[3], nu)?.generator(&[])?;
        let pt = absorption_spectrum(&gen, AggState::Center)?;
        let m = mean_hitting_time(&gen, HittingQuery::new(AggState::branch(1, 3), AggState::Center)?)?;
        r.push(
            "spectral",
            format!("sum of inverse rates vs mean L=3 nu={nu}"),
            (pt.mean() / m - 1.0).abs(),
            Bound::Below(1e-9),
        );
        r.push(
            "spectral",
            format!("alpha_1 times mean L=3 nu={nu}"),
            pt.rates()[0] * m,
            Bound::Within(0.99, 1.01),
        );
        if nu <= 1e3 {
            let d = sup_distance_to_exp(&pt, m);
            let tol = if nu < 1e3 { 0.05 } else { 0.01 };
            r.push("spectral", format!("scaled law vs Exp(1) L=3 nu={nu}"), d, Bound::Below(tol));
        }
    }
    Ok(())
}

/// `sup_x |F(x·m) − (1 − e^{−x})|` on a fine grid.
fn sup_distance_to_exp(pt: &crate::spectral::PhaseType, m: f64) -> f64 {
    (1..=2000)
        .map(|i| {
            let x = i as f64 * 0.005;
            let f = crate::montecarlo::Cdf::cdf(pt, x * m);
            (f + (-x).exp_m1()).abs()
        })
        .fold(0.0, f64::max)
}

fn mixing_checks(r: &mut Recorder, exec: Exec) -> Result<()> {
    for nu in [1e2, 1e3] {
        let n = net(&[3, 2], nu)?;
        let rep = mixing_report(&n, 0.125, exec)?;
        r.push(
            "mixing",
            format!("sandwich (3,2) nu={nu}"),
            f64::from(u8::from(rep.sandwich_holds())),
            Bound::Above(0.5),
        );
        let curve = DistanceCurve::new(&n, exec)?;
        let bound = coupling_time_mean(&n)?;
        let mut worst: f64 = 0.0;
        for t in log_spaced(1e-2 * bound, 1e2 * bound, 20) {
            worst = worst.max(curve.at(t)? * t / bound);
        }
        r.push("mixing", format!("coupling inequality d(t) t / E T (3,2) nu={nu}"), worst, Bound::Below(1.0 + 1e-9));
    }
    Ok(())
}

fn monte_carlo_checks(r: &mut Recorder) -> Result<()> {
    let workers = crate::montecarlo::default_workers();
    let grid: [(&[usize], f64, AggState, AggState); 6] = [
        (&[2], 1.0, AggState::branch(1, 2), AggState::Center),
        (&[3], 2.0, AggState::branch(1, 3), AggState::Center),
        (&[2, 2], 1.0, AggState::branch(1, 2), AggState::branch(2, 2)),
        (&[3, 2], 2.0, AggState::branch(2, 2), AggState::branch(1, 3)),
        (&[2, 2, 2], 1.0, AggState::Center, AggState::branch(3, 2)),
        (&[1, 1], 5.0, AggState::branch(1, 1), AggState::branch(2, 1)),
    ];
    for (i, (sizes, nu, from, to)) in grid.into_iter().enumerate() {
        let gen = net(sizes, nu)?.generator(&[])?;
        let q = HittingQuery::new(from, to)?;
        let exact = mean_hitting_time(&gen, q)?;
        let s = sample_hitting_time_with(&gen, q, 4000, 100 + i as u64, workers)?;
        r.push(
            "monte-carlo",
            format!("mean within 3 s.e. ({}) nu={nu} {from}->{to}", sizes_tag(sizes)),
            (s.mean() - exact).abs() / s.std_error(),
            Bound::Below(3.0),
        );
    }

    let gen = net(&[3], 5.0)?.generator(&[])?;
    let pt = absorption_spectrum(&gen, AggState::Center)?;
    let s = sample_hitting_time_with(&gen, HittingQuery::new(AggState::branch(1, 3), AggState::Center)?, 5000, 21, workers)?;
    let d = ks_statistic(&s.values, &pt)?;
    r.push(
        "monte-carlo",
        "escape law L=3 nu=5 KS over 1% critical value".into(),
        d / ks_critical_value(s.len(), KsLevel::P01),
        Bound::Below(1.0),
    );

    // (3,3) 1->2 and (2,3,2) 1->3
    for (sizes, k2) in [(&[3usize, 3][..], 2), (&[2, 3, 2][..], 3)] {
        let law = LimitLaw::from_params(&escape_params(&net(sizes, 1.0)?, 1, k2)?);
        let (pstar, indicator) = (law.pstar, law.indicator);
        let s = sample_limit_law(&law, 100_000, 31)?;
        let d = ks_statistic(&s.values, &law)?;
        r.push(
            "monte-carlo",
            format!("limit law p*={pstar} indicator={indicator} KS over 1% critical value"),
            d / ks_critical_value(s.len(), KsLevel::P01),
            Bound::Below(1.0),
        );
        r.push(
            "monte-carlo",
            format!("limit law p*={pstar} indicator={indicator} sample mean"),
            s.mean(),
            Bound::Within(0.98, 1.02),
        );
    }
    let n = net(&[2, 3, 5], 1.0)?;
    let ex = empirical_excursions(&n.generator(&[])?, 3, 20_000, 41)?;
    let cells = ex
        .counts
        .iter()
        .map(|(key, &c)| {
            let counts: BTreeMap<usize, u64> = ex.components.iter().copied().zip(key.iter().copied()).collect();
            Ok((excursion_pmf(&n, 3, &counts)?, c))
        })
        .collect::<Result<Vec<_>>>()?;
    let chi = chi_square_gof(&cells, ex.n as u64)?;
    r.push("monte-carlo", "excursion counts (2,3,5) chi-square p-value".into(), chi.p_value, Bound::Above(0.01));

    let n = net(&[2, 2], 1.0)?;
    let horizon = 2e4;
    let tr = simulate_full(&n, FullState::EMPTY, 51, horizon, FullClock::PerNode)?;
    let occ = occupation(&n, &tr)?;
    let tv = crate::mixing::tv_distance(&occ, &n.stationary_agg())?;
    let gap = Propagator::new(&n.generator(&[])?)?.spectral_gap();
    r.push(
        "monte-carlo",
        "per-node occupation vs aggregated law (2,2) nu=1, TV over 4/sqrt(H gap)".into(),
        tv / (4.0 / (horizon * gap).sqrt()),
        Bound::Below(1.0),
    );

    let n = net(&[3, 3], 100.0)?;
    let cross = mean_hitting_time(&n.generator(&[])?, HittingQuery::new(AggState::branch(1, 3), AggState::branch(2, 3))?)?;
    let frac = dominance_fraction(&n, AggState::branch(1, 3), 0.1 * cross, 0.9, 200, 61)?;
    r.push("monte-carlo", "bistability (3,3) nu=100 dominated-run fraction".into(), frac, Bound::Above(0.5));

    let runner = |rng: &mut rand_chacha::ChaCha8Rng, i: u64| (i, rand::Rng::random::<u64>(rng));
    let one = batch(runner, 1000, 71, 1)?;
    let many = batch(runner, 1000, 71, 8)?;
    r.push(
        "monte-carlo",
        "batch identical across 1 and 8 workers".into(),
        f64::from(u8::from(one == many)),
        Bound::Above(0.5),
    );
    Ok(())
}

/// Runs every check. Errors from inner routines abort the run.
pub fn run_validation(exec: Exec) -> Result<ValidationReport> {
    let mut r = Recorder { checks: Vec::new() };
    stationary_checks(&mut r)?;
    hitting_checks(&mut r)?;
    spectral_checks(&mut r)?;
    mixing_checks(&mut r, exec)?;
    monte_carlo_checks(&mut r)?;
    let passed = r.checks.iter().filter(|c| c.passed).count();
    Ok(ValidationReport {
        schema_version: SCHEMA_VERSION,
        failed: r.checks.len() - passed,
        passed,
        checks: r.checks,
    })
}
