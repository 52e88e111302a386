//! Distance to stationarity, mixing times, conductance and the
//! coupling/bottleneck bounds on the mixing time.
//!
//! `d(t)` is evaluated from transition matrices built by scaling and
//! squaring (see [`crate::spectral::squared_kernel`]), which keeps every
//! entry accurate at the very long times where the chain mixes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hitting::{mean_hitting_time, HittingQuery};
use crate::model::{AggState, Distribution, Generator, PartiteNetwork};
use crate::numeric::log_sum_exp;
use crate::par::{map_indices, min_by_key_indexed, Exec};
use crate::spectral::squared_kernel_with;

/// Largest state space for exhaustive subset enumeration.
pub const CONDUCTANCE_ENUMERATION_LIMIT: usize = 24;

/// Relative bracket width at which bisection stops.
pub const BISECTION_TOL: f64 = 1e-6;

/// `½ Σ |p − q|` over a common state list.
pub fn tv_distance<S: Clone + PartialEq>(p: &Distribution<S>, q: &Distribution<S>) -> Result<f64> {
    if p.states() != q.states() {
        return Err(Error::Structure("distributions are over different state lists".into()));
    }
    Ok(tv_slices(&p.probabilities(), &q.probabilities()))
}

fn tv_slices(p: &[f64], q: &[f64]) -> f64 {
    (0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()).min(1.0)
}

/// Worst-case distance to stationarity `d(t)` of one network.
#[derive(Debug, Clone)]
pub struct DistanceCurve {
    gen: Generator,
    pi: Vec<f64>,
    exec: Exec,
}

impl DistanceCurve {
    pub fn new(net: &PartiteNetwork, exec: Exec) -> Result<Self> {
        Ok(Self {
            gen: net.generator(&[])?,
            pi: net.stationary_agg().probabilities(),
            exec,
        })
    }

    /// Distance from each starting state, in state order.
    pub fn per_start(&self, t: f64) -> Result<Vec<f64>> {
        if !(t >= 0.0) {
            return Err(Error::validation("t", "must be ≥ 0"));
        }
        let n = self.gen.len();
        let k = squared_kernel_with(&self.gen, t, self.exec);
        Ok(map_indices(self.exec, n, |x| tv_slices(&k[x * n..(x + 1) * n], &self.pi)))
    }

    pub fn at(&self, t: f64) -> Result<f64> {
        Ok(self.per_start(t)?.into_iter().fold(0.0, f64::max))
    }

    /// `inf{t ≥ 0 : d(t) ≤ ε}` by doubling then bisection.
    pub fn mixing_time(&self, epsilon: f64) -> Result<f64> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::validation("epsilon", "must lie in (0,1)"));
        }
        let mut lo = 0.0;
        let mut hi = 1.0;
        while self.at(hi)? > epsilon {
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::Numerical("d(t) never drops below epsilon".into()));
            }
        }
        while hi - lo > BISECTION_TOL * hi {
            let mid = 0.5 * (lo + hi);
            if self.at(mid)? <= epsilon {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let (d1, d2) = (self.at(hi)?, self.at(2.0 * hi)?);
        if d2 > d1 + 1e-10 {
            return Err(Error::Numerical(format!(
                "d(t) increased from {d1:e} at t={hi:e} to {d2:e} at 2t"
            )));
        }
        Ok(hi)
    }
}

/// `d(t) = max_x ‖P(X_t^x ∈ ·) − π‖_TV`.
pub fn worst_case_distance(net: &PartiteNetwork, t: f64) -> Result<f64> {
    DistanceCurve::new(net, Exec::default())?.at(t)
}

/// `t_mix(ε) = inf{t ≥ 0 : d(t) ≤ ε}`.
pub fn mixing_time(net: &PartiteNetwork, epsilon: f64) -> Result<f64> {
    DistanceCurve::new(net, Exec::default())?.mixing_time(epsilon)
}

fn state_set(net: &PartiteNetwork, set: &[AggState]) -> Result<Vec<bool>> {
    let mut member = vec![false; net.num_agg_states()];
    for &s in set {
        member[net.state_index(s)?] = true;
    }
    let count = member.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::validation("set", "must be nonempty"));
    }
    if count == member.len() {
        return Err(Error::validation("set", "must be a proper subset of the state space"));
    }
    Ok(member)
}

/// `Φ(S) = Q(S,Sᶜ)/π(S)` with `Q(S,Sᶜ) = Σ_{x∈S, y∉S} π_x q(x,y)`.
pub fn conductance(net: &PartiteNetwork, set: &[AggState]) -> Result<f64> {
    let member = state_set(net, set)?;
    let gen = net.generator(&[])?;
    let pi = net.stationary_agg();
    let mut flow = Vec::new();
    let mut mass = Vec::new();
    for x in 0..gen.len() {
        if !member[x] {
            continue;
        }
        mass.push(pi.log_probability(x));
        for (y, rate) in gen.neighbors(x) {
            if !member[y] {
                flow.push(pi.log_probability(x) + rate.ln());
            }
        }
    }
    Ok((log_sum_exp(&flow) - log_sum_exp(&mass)).exp())
}

/// All states of component `k` (1-based).
pub fn branch_states(net: &PartiteNetwork, k: usize) -> Vec<AggState> {
    (1..=net.size(k)).map(|l| AggState::branch(k, l)).collect()
}

/// Minimizer of the conductance over sets of stationary mass at most 1/2.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bottleneck {
    pub phi: f64,
    pub set: Vec<AggState>,
}

/// `Φ* = min_{π(S) ≤ 1/2} Φ(S)` by exhaustive enumeration. Ties go to the
/// set with the smallest bitmask over the state order.
pub fn conductance_star(net: &PartiteNetwork) -> Result<Bottleneck> {
    conductance_star_with(net, Exec::default())
}

pub fn conductance_star_with(net: &PartiteNetwork, exec: Exec) -> Result<Bottleneck> {
    let n = net.num_agg_states();
    if n > CONDUCTANCE_ENUMERATION_LIMIT {
        return Err(Error::Capacity(format!(
            "{n} aggregated states exceed the enumeration limit of {CONDUCTANCE_ENUMERATION_LIMIT}"
        )));
    }
    let gen = net.generator(&[])?;
    let pi = net.stationary_agg();
    let log_pi: Vec<f64> = (0..n).map(|i| pi.log_probability(i)).collect();
    // each undirected edge carries the same stationary flow both ways
    let mut edges = Vec::new();
    for (x, &lp) in log_pi.iter().enumerate() {
        for (y, rate) in gen.neighbors(x) {
            if x < y {
                edges.push((x, y, lp + rate.ln()));
            }
        }
    }
    let linear = log_pi.iter().chain(edges.iter().map(|e| &e.2)).all(|&v| v > -690.0);
    let p: Vec<f64> = log_pi.iter().map(|v| v.exp()).collect();
    let c: Vec<f64> = edges.iter().map(|e| e.2.exp()).collect();
    let evaluate = |mask: usize| -> Option<f64> {
        let inside = |i: usize| mask >> i & 1 == 1;
        if linear {
            let mass: f64 = (0..n).filter(|&i| inside(i)).map(|i| p[i]).sum();
            if mass > 0.5 {
                return None;
            }
            let flow: f64 = edges
                .iter()
                .zip(&c)
                .filter(|((x, y, _), _)| inside(*x) != inside(*y))
                .map(|(_, c)| c)
                .sum();
            Some(flow / mass)
        } else {
            let mass: Vec<f64> = (0..n).filter(|&i| inside(i)).map(|i| log_pi[i]).collect();
            let ln_mass = log_sum_exp(&mass);
            if ln_mass > 0.5f64.ln() {
                return None;
            }
            let flow: Vec<f64> = edges
                .iter()
                .filter(|(x, y, _)| inside(*x) != inside(*y))
                .map(|e| e.2)
                .collect();
            Some((log_sum_exp(&flow) - ln_mass).exp())
        }
    };
    let total = (1usize << n) - 1;
    // masks 1..total−1: nonempty proper subsets
    let (phi, idx) = min_by_key_indexed(exec, total - 1, 1 << 12, |i| evaluate(i + 1))
        .ok_or_else(|| Error::Numerical("no subset with stationary mass ≤ 1/2".into()))?;
    let mask = idx + 1;
    let set = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| gen.states()[i]).collect();
    Ok(Bottleneck { phi, set })
}

/// Component indices (1-based) sorted by decreasing size, ties by index.
pub fn size_order(net: &PartiteNetwork) -> Vec<usize> {
    let mut order: Vec<usize> = (1..=net.num_components()).collect();
    order.sort_by_key(|&k| std::cmp::Reverse(net.size(k)));
    order
}

/// `E T_{∂₂→∂₁}` on the two longest branches alone: the mean coupling
/// horizon behind `d(t) ≤ E T/t`.
pub fn coupling_time_mean(net: &PartiteNetwork) -> Result<f64> {
    if net.num_components() < 2 {
        return Err(Error::Structure("coupling bound needs at least two components".into()));
    }
    let order = size_order(net);
    let pair = PartiteNetwork::new(vec![net.size(order[0]), net.size(order[1])], net.nu())?;
    let gen = pair.generator(&[])?;
    mean_hitting_time(&gen, HittingQuery::new(pair.leaf(2), pair.leaf(1))?)
}

/// Two-sided bounds on `t_mix(ε)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingBounds {
    /// `(½ − 2ε)/Φ*`; absent for `ε ≥ 1/4`.
    pub lower: Option<f64>,
    /// `E T_{∂₂→∂₁}/ε`.
    pub upper: f64,
    pub phi_c2: f64,
    pub phi_star: Option<f64>,
    /// True when the lower bound used `Φ(C₂)` because enumeration was
    /// out of reach.
    pub lower_from_c2: bool,
    /// Components by decreasing size (1-based original indices); `C₂` is
    /// component `order[1]`.
    pub order: Vec<usize>,
}

pub fn mixing_bounds(net: &PartiteNetwork, epsilon: f64) -> Result<MixingBounds> {
    mixing_bounds_with(net, epsilon, Exec::default())
}

pub fn mixing_bounds_with(net: &PartiteNetwork, epsilon: f64, exec: Exec) -> Result<MixingBounds> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::validation("epsilon", "must lie in (0,1)"));
    }
    let upper = coupling_time_mean(net)? / epsilon;
    let order = size_order(net);
    let c2 = branch_states(net, order[1]);
    let phi_c2 = conductance(net, &c2)?;
    let phi_star = match conductance_star_with(net, exec) {
        Ok(b) => Some(b.phi),
        Err(Error::Capacity(_)) => None,
        Err(e) => return Err(e),
    };
    let pi = net.stationary_agg();
    let c2_feasible = c2
        .iter()
        .map(|&s| pi.probability(net.state_index(s).expect("own state")))
        .sum::<f64>()
        <= 0.5;
    let factor = 0.5 - 2.0 * epsilon;
    let (lower, lower_from_c2) = match phi_star {
        _ if epsilon >= 0.25 => (None, false),
        Some(phi) => (Some(factor / phi), false),
        None if c2_feasible => (Some(factor / phi_c2), true),
        None => (None, false),
    };
    Ok(MixingBounds {
        lower,
        upper,
        phi_c2,
        phi_star,
        lower_from_c2,
        order,
    })
}

/// Mixing time together with its bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingReport {
    pub sizes: Vec<usize>,
    pub nu: f64,
    pub epsilon: f64,
    pub t_mix: f64,
    pub lower_bound: Option<f64>,
    pub upper_bound: f64,
    #[serde(rename = "conductance_C2")]
    pub conductance_c2: f64,
    pub phi_star: Option<f64>,
    pub component_order: Vec<usize>,
}

impl MixingReport {
    /// Whether `lower ≤ t_mix ≤ upper` (vacuous lower side when absent).
    pub fn sandwich_holds(&self) -> bool {
        self.lower_bound.is_none_or(|l| l <= self.t_mix) && self.t_mix <= self.upper_bound
    }
}

pub fn mixing_report(net: &PartiteNetwork, epsilon: f64, exec: Exec) -> Result<MixingReport> {
    let bounds = mixing_bounds_with(net, epsilon, exec)?;
    let t_mix = DistanceCurve::new(net, exec)?.mixing_time(epsilon)?;
    Ok(MixingReport {
        sizes: net.sizes().to_vec(),
        nu: net.nu(),
        epsilon,
        t_mix,
        lower_bound: bounds.lower,
        upper_bound: bounds.upper,
        conductance_c2: bounds.phi_c2,
        phi_star: bounds.phi_star,
        component_order: bounds.order,
    })
}

/// CSV `nu,t_mix,lower,upper,phi_C2,phi_star`; absent values are empty.
pub fn mixing_csv(rows: &[MixingReport]) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    let mut out = String::from("nu,t_mix,lower,upper,phi_C2,phi_star\n");
    for r in rows {
        out.push_str(&format!(
            "{:e},{:e},{},{:e},{:e},{}\n",
            r.nu,
            r.t_mix,
            opt(r.lower_bound),
            r.upper_bound,
            r.conductance_c2,
            opt(r.phi_star)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{transient_from_state, TransientMethod};

    fn net(sizes: &[usize], nu: f64) -> PartiteNetwork {
        PartiteNetwork::new(sizes.to_vec(), nu).unwrap()
    }

    #[test]
    fn tv_examples() {
        let s = vec![AggState::Center, AggState::branch(1, 1)];
        let p = Distribution::from_weights(s.clone(), &[0.7, 0.3]).unwrap();
        let q = Distribution::from_weights(s.clone(), &[0.5, 0.5]).unwrap();
        assert!((tv_distance(&p, &q).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
        let a = Distribution::point_mass(s.clone(), &s[0]).unwrap();
        let b = Distribution::point_mass(s.clone(), &s[1]).unwrap();
        assert_eq!(tv_distance(&a, &b).unwrap(), 1.0);
        let other = Distribution::point_mass(vec![AggState::Center], &AggState::Center).unwrap();
        assert!(tv_distance(&a, &other).is_err());
    }

    #[test]
    fn distance_at_zero_and_infinity() {
        let n = net(&[2, 1], 3.0);
        let pi = n.stationary_agg().probabilities();
        let min = pi.iter().copied().fold(1.0, f64::min);
        assert!((worst_case_distance(&n, 0.0).unwrap() - (1.0 - min)).abs() < 1e-14);
        assert!(worst_case_distance(&n, 1e4).unwrap() < 1e-12);
        assert!(worst_case_distance(&n, -1.0).is_err());
    }

    #[test]
    fn distance_matches_uniformization() {
        let n = net(&[1, 1], 1.0);
        let gen = n.generator(&[]).unwrap();
        let pi = n.stationary_agg();
        let oracle = gen
            .states()
            .iter()
            .map(|&s| {
                let d = transient_from_state(&gen, s, 1.0, TransientMethod::Uniformization).unwrap();
                tv_distance(&d, &pi).unwrap()
            })
            .fold(0.0, f64::max);
        assert!((worst_case_distance(&n, 1.0).unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let n = net(&[3, 2, 2], 50.0);
        let a = DistanceCurve::new(&n, Exec::Sequential).unwrap().at(3.7).unwrap();
        let b = DistanceCurve::new(&n, Exec::Parallel).unwrap().at(3.7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mixing_time_brackets_epsilon() {
        let n = net(&[1, 1], 1.0);
        let curve = DistanceCurve::new(&n, Exec::Sequential).unwrap();
        let t = curve.mixing_time(0.25).unwrap();
        assert!(t > 0.0 && t.is_finite());
        let d = curve.at(t).unwrap();
        assert!((0.25 - 1e-6..=0.25).contains(&d));
        assert!(curve.mixing_time(0.0).is_err());
        assert!(curve.mixing_time(1.0).is_err());
    }

    #[test]
    fn conductance_examples() {
        let n = net(&[2, 2], 10.0);
        let phi = conductance(&n, &branch_states(&n, 2)).unwrap();
        assert!((phi - 1.0 / 6.0).abs() < 1e-14);
        assert!(conductance(&n, &[]).is_err());
        assert!(conductance(&n, &n.agg_states()).is_err());
        let mut most = n.agg_states();
        most.pop();
        let phi = conductance(&n, &most).unwrap();
        // flow π_(2,1)·ν over mass 141/241
        assert!((phi - 200.0 / 141.0).abs() < 1e-13);
    }

    #[test]
    fn conductance_star_examples() {
        let b = conductance_star(&net(&[1, 1], 1.0)).unwrap();
        assert!((b.phi - 1.0).abs() < 1e-14);
        assert_eq!(b.set, vec![AggState::branch(1, 1)]);
        let n = net(&[2, 2], 100.0);
        let b = conductance_star(&n).unwrap();
        assert_eq!(b.set, branch_states(&n, 1));
        assert!(b.phi <= conductance(&n, &branch_states(&n, 2)).unwrap());
    }

    #[test]
    fn conductance_star_log_path_matches() {
        // ν large enough that the smallest masses underflow in linear scale
        let n = net(&[3, 2], 1e120);
        let b = conductance_star(&n).unwrap();
        let direct = conductance(&n, &b.set).unwrap();
        assert!((b.phi - direct).abs() <= 1e-12 * direct);
    }

    #[test]
    fn enumeration_guard() {
        let n = net(&[12, 12], 1.0);
        assert!(matches!(conductance_star(&n), Err(Error::Capacity(_))));
        let b = mixing_bounds(&n, 0.125).unwrap();
        assert!(b.phi_star.is_none() && b.lower_from_c2 && b.lower.is_some());
    }

    #[test]
    fn bounds_sorted_and_sandwich() {
        let n = net(&[2, 3], 100.0);
        let b = mixing_bounds(&n, 0.125).unwrap();
        assert_eq!(b.order, vec![2, 1]);
        let r = mixing_report(&n, 0.125, Exec::Sequential).unwrap();
        assert!(r.sandwich_holds(), "{r:?}");
        let wide = mixing_bounds(&n, 0.3).unwrap();
        assert!(wide.lower.is_none());
        assert!(mixing_bounds(&net(&[3], 1.0), 0.1).is_err());
    }

    #[test]
    fn csv_has_empty_optionals() {
        let r = MixingReport {
            sizes: vec![2, 2],
            nu: 1.0,
            epsilon: 0.3,
            t_mix: 1.0,
            lower_bound: None,
            upper_bound: 2.0,
            conductance_c2: 0.5,
            phi_star: Some(0.25),
            component_order: vec![1, 2],
        };
        let csv = mixing_csv(&[r]);
        assert_eq!(csv.lines().nth(1).unwrap(), "1e0,1e0,,2e0,5e-1,2.5e-1");
    }
}
