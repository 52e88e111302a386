//! Mean transition times: exact first-step solves, birth-death step sums,
//! leading-order growth laws, and the escape decomposition (number of
//! excursions, limit law of the scaled transition time).

use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::KilledSystem;
use crate::model::{AggState, Generator, PartiteNetwork};
use crate::numeric::{ln_binomial, ln_factorial, log_sum_exp};

/// First passage from one aggregated state to another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct HittingQuery {
    pub from: AggState,
    pub to: AggState,
}

impl HittingQuery {
    pub fn new(from: AggState, to: AggState) -> Result<Self> {
        if from == to {
            return Err(Error::validation("query", "from and to must differ"));
        }
        Ok(Self { from, to })
    }

    /// Checks both endpoints against a network.
    pub fn check(&self, net: &PartiteNetwork) -> Result<()> {
        net.state_index(self.from)?;
        net.state_index(self.to)?;
        Ok(())
    }
}

/// States reachable from `from` without entering `target`, `from` first.
fn reachable_before(gen: &Generator, from: usize, target: usize) -> Vec<usize> {
    let mut seen = vec![false; gen.len()];
    seen[from] = true;
    seen[target] = true;
    let mut order = vec![from];
    let mut queue = VecDeque::from([from]);
    while let Some(x) = queue.pop_front() {
        for (y, _) in gen.neighbors(x) {
            if !seen[y] {
                seen[y] = true;
                order.push(y);
                queue.push_back(y);
            }
        }
    }
    order
}

/// Exact `E T_{from→to}` by first-step analysis on the states reachable
/// before the target.
pub fn mean_hitting_time(gen: &Generator, q: HittingQuery) -> Result<f64> {
    let from = gen.index_of(q.from)?;
    let to = gen.index_of(q.to)?;
    let transient = reachable_before(gen, from, to);
    let sys = KilledSystem::new(gen, transient, &[to]);
    let reduced = sys.reduce()?;
    let h = reduced.solve(&vec![1.0; sys.len()]);
    Ok(h[0])
}

/// Exact mean hitting times of `to` from every other state, in generator
/// order (0 at the target itself).
pub fn mean_hitting_times_to(gen: &Generator, to: AggState) -> Result<Vec<f64>> {
    let t = gen.index_of(to)?;
    let transient: Vec<usize> = (0..gen.len()).filter(|&i| i != t).collect();
    let sys = KilledSystem::new(gen, transient.clone(), &[t]);
    let h = sys.reduce()?.solve(&vec![1.0; sys.len()]);
    let mut out = vec![0.0; gen.len()];
    for (a, &x) in transient.iter().enumerate() {
        out[x] = h[a];
    }
    Ok(out)
}

/// Direction of a single step on a birth-death line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Up,
    Down,
}

/// Position on the birth-death line: levels `0..=L` for one component, or
/// `−L₁..=L₂` for two components with component 1 on the negative side.
pub fn line_position(net: &PartiteNetwork, state: AggState) -> Result<i64> {
    line_bounds(net)?;
    net.state_index(state)?;
    Ok(match state {
        AggState::Center => 0,
        AggState::Branch { k, l } if net.num_components() == 2 && k == 1 => -(l as i64),
        AggState::Branch { l, .. } => l as i64,
    })
}

/// Inverse of [`line_position`].
pub fn line_state(net: &PartiteNetwork, pos: i64) -> Result<AggState> {
    let (lo, hi) = line_bounds(net)?;
    if pos < lo || pos > hi {
        return Err(Error::validation("level", format!("{pos} outside {lo}..={hi}")));
    }
    Ok(match pos {
        0 => AggState::Center,
        p if p < 0 => AggState::branch(1, (-p) as usize),
        p if net.num_components() == 1 => AggState::branch(1, p as usize),
        p => AggState::branch(2, p as usize),
    })
}

fn line_bounds(net: &PartiteNetwork) -> Result<(i64, i64)> {
    match net.sizes() {
        [l] => Ok((0, *l as i64)),
        [l1, l2] => Ok((-(*l1 as i64), *l2 as i64)),
        s => Err(Error::Structure(format!(
            "{} components form a star, not a birth-death line",
            s.len()
        ))),
    }
}

/// `ln π` at a line position, up to the common normalization.
fn line_log_weight(net: &PartiteNetwork, pos: i64) -> f64 {
    let (k, l) = match (net.num_components(), pos) {
        (_, 0) => return 0.0,
        (2, p) if p < 0 => (1, (-p) as usize),
        (1, p) => (1, p as usize),
        (_, p) => (2, p as usize),
    };
    ln_binomial(net.size(k), l) + l as f64 * net.nu().ln()
}

/// Closed-form mean of one birth-death step:
/// up `l→l+1`: `(1/q(l,l+1)) Σ_{n≤l} π_n/π_l`;
/// down `l→l−1`: `(1/q(l,l−1)) Σ_{n≥l} π_n/π_l`.
pub fn bd_step_mean(net: &PartiteNetwork, level: i64, direction: Step) -> Result<f64> {
    let (lo, hi) = line_bounds(net)?;
    let next = match direction {
        Step::Up => level + 1,
        Step::Down => level - 1,
    };
    if level < lo || level > hi || next < lo || next > hi {
        return Err(Error::validation("level", format!("step {level}->{next} leaves {lo}..={hi}")));
    }
    let gen = net.generator(&[])?;
    let i = gen.index_of(line_state(net, level)?)?;
    let j = gen.index_of(line_state(net, next)?)?;
    let rate = gen.rate(i, j);
    let base = line_log_weight(net, level);
    let range: Vec<i64> = match direction {
        Step::Up => (lo..=level).collect(),
        Step::Down => (level..=hi).collect(),
    };
    let terms: Vec<f64> = range.iter().map(|&n| line_log_weight(net, n) - base).collect();
    Ok((log_sum_exp(&terms) - rate.ln()).exp())
}

/// Leading-order law `E T(ν) ~ coefficient · ν^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticLaw {
    pub coefficient: f64,
    pub exponent: i32,
    /// Set for upward moves within a branch: the scaled time tends to 0 in
    /// distribution even though the mean may grow, so no limit law applies.
    pub degenerate_limit: bool,
}

impl AsymptoticLaw {
    pub fn evaluate(&self, nu: f64) -> f64 {
        self.coefficient * nu.powi(self.exponent)
    }
}

fn factorial(n: usize) -> f64 {
    ln_factorial(n as u64).exp()
}

/// Leading-order growth of `E T` as `ν → ∞`.
///
/// Covered: downward moves within a branch (including to the center),
/// moves between branches, and, for two components, upward moves within a
/// branch (from the center or a lower level). Anything else is refused.
pub fn asymptotic_mean(net: &PartiteNetwork, q: HittingQuery) -> Result<AsymptoticLaw> {
    q.check(net)?;
    let kk = net.num_components();
    match (q.from, q.to) {
        (AggState::Branch { k, l: l1 }, AggState::Center) => Ok(downward(net.size(k), l1, 0)),
        (AggState::Branch { k: k1, l: l1 }, AggState::Branch { k: k2, l: l2 }) if k1 == k2 && l1 > l2 => {
            Ok(downward(net.size(k1), l1, l2))
        }
        (AggState::Branch { k: k1, .. }, AggState::Branch { k: k2, .. }) if k1 != k2 => {
            let e = escape_params(net, k1, k2)?;
            Ok(AsymptoticLaw {
                coefficient: e.indicator as f64 / e.lstar as f64 + e.kstar.len() as f64 / net.size(k2) as f64,
                exponent: e.lstar as i32 - 1,
                degenerate_limit: false,
            })
        }
        (from, AggState::Branch { k: k2, l: l2 }) if kk == 2 => {
            let l1 = from.level();
            debug_assert!(l1 < l2 && from.component().is_none_or(|k| k == k2));
            Ok(upward(net.size(3 - k2), net.size(k2), l1, l2))
        }
        (from, to) => Err(Error::Unsupported(format!(
            "no leading-order law for {from} -> {to} with {kk} component(s)"
        ))),
    }
}

fn downward(size: usize, _l1: usize, l2: usize) -> AsymptoticLaw {
    AsymptoticLaw {
        coefficient: factorial(l2) * factorial(size - l2 - 1) / factorial(size),
        exponent: (size - l2 - 1) as i32,
        degenerate_limit: false,
    }
}

/// Upward move `l1 → l2` inside branch 2 of the line `−L1..L2`. Each step
/// `l → l+1` has leading term `c_l ν^{e_l}`; the law keeps every step with
/// the largest exponent (a single step unless `l1 ≥ L1` and `l2 > l1 + 1`).
fn upward(other: usize, size: usize, l1: usize, l2: usize) -> AsymptoticLaw {
    let step = |l: usize| -> (f64, i32) {
        if l < other {
            (
                factorial(size - l - 1) * factorial(l) / factorial(size),
                (other - l - 1) as i32,
            )
        } else if l == other {
            (
                (factorial(size) + factorial(other) * factorial(size - other))
                    / ((size - other) as f64 * factorial(size)),
                -1,
            )
        } else {
            (1.0 / (size - l) as f64, -1)
        }
    };
    let steps: Vec<(f64, i32)> = (l1..l2).map(step).collect();
    let exponent = steps.iter().map(|s| s.1).max().expect("l1 < l2");
    let coefficient = steps.iter().filter(|s| s.1 == exponent).map(|s| s.0).sum();
    AsymptoticLaw {
        coefficient,
        exponent,
        degenerate_limit: true,
    }
}

/// Parameters of the escape decomposition from branch `k1` into branch `k2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EscapeParams {
    /// `L* = max_{j≠k2} L_j`.
    pub lstar: usize,
    /// Components attaining `L*` (1-based, ascending).
    pub kstar: Vec<usize>,
    pub pstar: f64,
    /// 1 when `k1 ∈ K*`.
    pub indicator: u8,
    /// `E M = indicator + p*/(1−p*)`.
    pub mean_m: f64,
}

pub fn escape_params(net: &PartiteNetwork, k1: usize, k2: usize) -> Result<EscapeParams> {
    let kk = net.num_components();
    for (name, k) in [("k1", k1), ("k2", k2)] {
        if k == 0 || k > kk {
            return Err(Error::validation(name, format!("component {k} not in 1..={kk}")));
        }
    }
    if k1 == k2 {
        return Err(Error::validation("k2", "must differ from k1"));
    }
    let lstar = (1..=kk).filter(|&j| j != k2).map(|j| net.size(j)).max().expect("K ≥ 2");
    let kstar: Vec<usize> = (1..=kk).filter(|&j| j != k2 && net.size(j) == lstar).collect();
    let num = (kstar.len() * lstar) as f64;
    let pstar = num / (num + net.size(k2) as f64);
    let indicator = u8::from(kstar.contains(&k1));
    Ok(EscapeParams {
        lstar,
        kstar,
        pstar,
        indicator,
        mean_m: indicator as f64 + pstar / (1.0 - pstar),
    })
}

/// Probability that the excursions out of the center before the first
/// entry into `k2` number `counts[k]` into each other branch `k`:
/// `p_{k2} · multinomial(Σn; n) · Π p_k^{n_k}`, `p_k = L_k/L`.
pub fn excursion_pmf(net: &PartiteNetwork, k2: usize, counts: &BTreeMap<usize, u64>) -> Result<f64> {
    let kk = net.num_components();
    if k2 == 0 || k2 > kk {
        return Err(Error::validation("k2", format!("component {k2} not in 1..={kk}")));
    }
    if counts.contains_key(&k2) {
        return Err(Error::validation("counts", "no count may be given for the target branch"));
    }
    if let Some(k) = counts.keys().find(|&&k| k == 0 || k > kk) {
        return Err(Error::validation("counts", format!("component {k} not in 1..={kk}")));
    }
    let total = net.total_nodes() as f64;
    let mut ln_p = (net.size(k2) as f64 / total).ln();
    let mut n = 0u64;
    for k in (1..=kk).filter(|&k| k != k2) {
        let nk = *counts
            .get(&k)
            .ok_or_else(|| Error::validation("counts", format!("missing count for component {k}")))?;
        n += nk;
        ln_p += nk as f64 * (net.size(k) as f64 / total).ln() - ln_factorial(nk);
    }
    ln_p += ln_factorial(n);
    Ok(ln_p.exp())
}

/// Limit law of `T/E T`: `(1/E M) Σ_{i≤M} Y_i` with `Y_i ~ Exp(1)` and
/// `M = Geo(p*) + indicator`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitLaw {
    pub pstar: f64,
    pub indicator: u8,
}

impl LimitLaw {
    pub fn new(pstar: f64, indicator: u8) -> Result<Self> {
        if !(pstar > 0.0 && pstar < 1.0) {
            return Err(Error::validation("pstar", "must lie in (0,1)"));
        }
        if indicator > 1 {
            return Err(Error::validation("indicator", "must be 0 or 1"));
        }
        Ok(Self { pstar, indicator })
    }

    pub fn from_params(e: &EscapeParams) -> Self {
        Self {
            pstar: e.pstar,
            indicator: e.indicator,
        }
    }

    /// `E M` under the `Geo(p)` convention `P(n) = (1−p)pⁿ`.
    pub fn mean_m(&self) -> f64 {
        self.indicator as f64 + self.pstar / (1.0 - self.pstar)
    }

    /// Point mass at 0.
    pub fn atom(&self) -> f64 {
        if self.indicator == 1 {
            0.0
        } else {
            1.0 - self.pstar
        }
    }

    /// Rate of the exponential part: 1 when `indicator = 1`, `p*` otherwise.
    pub fn continuous_rate(&self) -> f64 {
        if self.indicator == 1 {
            1.0
        } else {
            self.pstar
        }
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        limit_law_cdf(self, x)
    }

    /// `P(X < x)`.
    pub fn cdf_left(&self, x: f64) -> Result<f64> {
        if x == 0.0 {
            return Ok(0.0);
        }
        limit_law_cdf(self, x)
    }
}

pub fn limit_law_cdf(law: &LimitLaw, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::validation("x", "must be ≥ 0"));
    }
    let atom = law.atom();
    Ok(atom + (1.0 - atom) * -(-law.continuous_rate() * x).exp_m1())
}

/// One row of a mean-time sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub nu: f64,
    pub mean_exact: f64,
    pub mean_asymptotic: f64,
    pub ratio: f64,
}

/// Exact and leading-order means of one query over a list of `ν`.
pub fn hitting_sweep(net: &PartiteNetwork, q: HittingQuery, nus: &[f64]) -> Result<Vec<SweepRow>> {
    let law = asymptotic_mean(net, q)?;
    nus.iter()
        .map(|&nu| {
            let n = net.with_nu(nu)?;
            let exact = mean_hitting_time(&n.generator(&[])?, q)?;
            let asym = law.evaluate(nu);
            Ok(SweepRow {
                nu,
                mean_exact: exact,
                mean_asymptotic: asym,
                ratio: exact / asym,
            })
        })
        .collect()
}

/// CSV `nu,mean_exact,mean_asymptotic,ratio`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("nu,mean_exact,mean_asymptotic,ratio\n");
    for r in rows {
        out.push_str(&format!("{:e},{:e},{:e},{:e}\n", r.nu, r.mean_exact, r.mean_asymptotic, r.ratio));
    }
    out
}
