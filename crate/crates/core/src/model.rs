//! Network description, the aggregated star-shaped state space, its generator
//! and the two stationary laws (per-node and aggregated).
//!
//! State ordering is fixed everywhere: `Center` first, then the branches in
//! component order with levels ascending. Matrices and exported files are
//! therefore reproducible byte for byte.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{ln_binomial, log_sum_exp};

/// Largest total node count for which the per-node state space is enumerated.
pub const FULL_ENUMERATION_LIMIT: usize = 24;

/// Complete K-partite interference graph with uniform activation rate.
///
/// Component sizes are `L_1, …, L_K`; `nu` is the activation rate per unit
/// mean transmission time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartiteNetwork {
    sizes: Vec<usize>,
    nu: f64,
}

impl PartiteNetwork {
    pub fn new(sizes: Vec<usize>, nu: f64) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::validation("sizes", "at least one component is required"));
        }
        if let Some(pos) = sizes.iter().position(|&l| l == 0) {
            return Err(Error::validation(
                "sizes",
                format!("size must be ≥ 1 (component {} has size 0)", pos + 1),
            ));
        }
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::validation("nu", format!("must be a positive finite real, got {nu}")));
        }
        Ok(Self { sizes, nu })
    }

    /// Reads a network file (TOML with `sizes = [..]` and `nu = ..`).
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Input(e.to_string()))?;
        let sizes = parse_sizes_value(table.get("sizes"))?;
        let nu = parse_real_value(table.get("nu"), "nu")?;
        Self::new(sizes, nu)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Number of components `K`.
    pub fn num_components(&self) -> usize {
        self.sizes.len()
    }

    /// Size of component `k` (1-based).
    pub fn size(&self, k: usize) -> usize {
        self.sizes[k - 1]
    }

    /// Total node count `L = Σ L_k`.
    pub fn total_nodes(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Same component sizes, different activation rate.
    pub fn with_nu(&self, nu: f64) -> Result<Self> {
        Self::new(self.sizes.clone(), nu)
    }

    /// Number of aggregated states, `1 + Σ L_k`.
    pub fn num_agg_states(&self) -> usize {
        1 + self.total_nodes()
    }

    /// The aggregated states in canonical order.
    pub fn agg_states(&self) -> Vec<AggState> {
        let mut states = Vec::with_capacity(self.num_agg_states());
        states.push(AggState::Center);
        for (i, &size) in self.sizes.iter().enumerate() {
            states.extend((1..=size).map(|l| AggState::Branch { k: i + 1, l }));
        }
        states
    }

    /// Position of `state` in [`agg_states`](Self::agg_states).
    pub fn state_index(&self, state: AggState) -> Result<usize> {
        match state {
            AggState::Center => Ok(0),
            AggState::Branch { k, l } => {
                if k == 0 || k > self.sizes.len() || l == 0 || l > self.sizes[k - 1] {
                    return Err(Error::UnknownState(format!(
                        "{state} (network sizes {:?})",
                        self.sizes
                    )));
                }
                Ok(1 + self.sizes[..k - 1].iter().sum::<usize>() + l - 1)
            }
        }
    }

    /// Leaf state `(k, L_k)` of branch `k`.
    pub fn leaf(&self, k: usize) -> AggState {
        AggState::Branch { k, l: self.size(k) }
    }

    /// Aggregated generator, optionally with absorbing states.
    pub fn generator(&self, absorbing: &[AggState]) -> Result<Generator> {
        build_generator(self, absorbing)
    }

    /// Aggregated stationary law.
    pub fn stationary_agg(&self) -> Distribution<AggState> {
        stationary_agg(self)
    }
}

fn parse_sizes_value(value: Option<&toml::Value>) -> Result<Vec<usize>> {
    let arr = value
        .and_then(|v| v.as_array())
        .ok_or_else(|| Error::validation("sizes", "missing integer array `sizes`"))?;
    arr.iter()
        .map(|v| match v.as_integer() {
            Some(i) if i >= 0 => Ok(i as usize),
            Some(_) => Err(Error::validation("sizes", "size must be ≥ 1")),
            None => Err(Error::validation("sizes", format!("not an integer: {v}"))),
        })
        .collect()
}

pub(crate) fn parse_real_value(value: Option<&toml::Value>, field: &'static str) -> Result<f64> {
    match value {
        Some(toml::Value::Float(f)) => Ok(*f),
        Some(toml::Value::Integer(i)) => Ok(*i as f64),
        Some(other) => Err(Error::validation(field, format!("not a number: {other}"))),
        None => Err(Error::validation(field, "missing")),
    }
}

/// Parses a comma-separated size list such as `3,2,2`.
pub fn parse_sizes(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::validation("sizes", format!("malformed size `{}`", s.trim())))
        })
        .collect()
}

/// State of the aggregated process: the empty center, or `l` active nodes in
/// component `k` (both 1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AggState {
    Center,
    Branch { k: usize, l: usize },
}

impl AggState {
    pub fn branch(k: usize, l: usize) -> Self {
        AggState::Branch { k, l }
    }

    /// Component index, or `None` for the center.
    pub fn component(&self) -> Option<usize> {
        match *self {
            AggState::Center => None,
            AggState::Branch { k, .. } => Some(k),
        }
    }

    /// Number of active nodes.
    pub fn level(&self) -> usize {
        match *self {
            AggState::Center => 0,
            AggState::Branch { l, .. } => l,
        }
    }
}

impl fmt::Display for AggState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AggState::Center => write!(f, "0"),
            AggState::Branch { k, l } => write!(f, "{k}:{l}"),
        }
    }
}

impl FromStr for AggState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "0" {
            return Ok(AggState::Center);
        }
        let bad = || Error::validation("state", format!("expected `0` or `k:l`, got `{s}`"));
        let (k, l) = s.split_once(':').ok_or_else(bad)?;
        let k: usize = k.trim().parse().map_err(|_| bad())?;
        let l: usize = l.trim().parse().map_err(|_| bad())?;
        if k == 0 || l == 0 {
            return Err(bad());
        }
        Ok(AggState::Branch { k, l })
    }
}

/// Joint activity state of the per-node process: a bitmask over global node
/// indices (component-major). All active nodes share one component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FullState {
    mask: u64,
}

impl FullState {
    pub const EMPTY: FullState = FullState { mask: 0 };

    pub fn from_mask(mask: u64) -> Self {
        Self { mask }
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    /// `‖x‖₁`, the number of active nodes.
    pub fn active_count(&self) -> usize {
        self.mask.count_ones() as usize
    }

    /// Active nodes as `(component, index)` pairs, both 1-based.
    pub fn active_nodes(&self, net: &PartiteNetwork) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut offset = 0;
        for (k, &size) in net.sizes().iter().enumerate() {
            for i in 0..size {
                if self.mask >> (offset + i) & 1 == 1 {
                    out.push((k + 1, i + 1));
                }
            }
            offset += size;
        }
        out
    }

    /// Image under the aggregation map.
    pub fn aggregate(&self, net: &PartiteNetwork) -> AggState {
        let nodes = self.active_nodes(net);
        match nodes.first() {
            None => AggState::Center,
            Some(&(k, _)) => AggState::Branch { k, l: nodes.len() },
        }
    }

    /// Whether the active set is independent in the complete partite graph.
    pub fn is_independent(&self, net: &PartiteNetwork) -> bool {
        let nodes = self.active_nodes(net);
        nodes.windows(2).all(|w| w[0].0 == w[1].0)
    }

    /// Renders as `0` or `k:i+j+…` listing active node indices.
    pub fn render(&self, net: &PartiteNetwork) -> String {
        let nodes = self.active_nodes(net);
        match nodes.first() {
            None => "0".to_string(),
            Some(&(k, _)) => {
                let idx: Vec<String> = nodes.iter().map(|(_, i)| i.to_string()).collect();
                format!("{k}:{}", idx.join("+"))
            }
        }
    }
}

/// Rate matrix of the aggregated process.
///
/// Off-diagonal rates are stored densely; the diagonal is implied by the
/// row-sum-zero convention. Absorbing rows are identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    states: Vec<AggState>,
    rates: Vec<f64>,
    absorbing: Vec<bool>,
}

impl Generator {
    /// Builds a generator from an explicit state list and off-diagonal rates.
    pub fn from_rates(states: Vec<AggState>, rates: Vec<f64>, absorbing: Vec<bool>) -> Result<Self> {
        let n = states.len();
        if rates.len() != n * n || absorbing.len() != n {
            return Err(Error::Structure("rate matrix dimensions do not match state list".into()));
        }
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::Structure("rates must be finite and nonnegative".into()));
        }
        let mut g = Self { states, rates, absorbing };
        for i in 0..n {
            g.rates[i * n + i] = 0.0;
            if g.absorbing[i] {
                g.rates[i * n..(i + 1) * n].iter_mut().for_each(|r| *r = 0.0);
            }
        }
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[AggState] {
        &self.states
    }

    pub fn index_of(&self, state: AggState) -> Result<usize> {
        self.states
            .iter()
            .position(|&s| s == state)
            .ok_or_else(|| Error::UnknownState(state.to_string()))
    }

    /// Off-diagonal rate `q(i, j)`; zero on the diagonal.
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.rates[i * self.len() + j]
    }

    /// Total outflow rate of state `i` (`−q(i,i)`).
    pub fn out_rate(&self, i: usize) -> f64 {
        self.row(i).iter().sum()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.rates[i * n..(i + 1) * n]
    }

    /// Generator entry including the diagonal.
    pub fn q(&self, i: usize, j: usize) -> f64 {
        if i == j {
            -self.out_rate(i)
        } else {
            self.rate(i, j)
        }
    }

    pub fn is_absorbing(&self, i: usize) -> bool {
        self.absorbing[i]
    }

    pub fn absorbing_mask(&self) -> &[bool] {
        &self.absorbing
    }

    /// States reachable in one jump from `i`, with their rates.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.row(i)
            .iter()
            .enumerate()
            .filter(|(_, &r)| r > 0.0)
            .map(|(j, &r)| (j, r))
    }

    /// Copy of this generator with the given states made absorbing.
    pub fn with_absorbing(&self, absorbing: &[AggState]) -> Result<Generator> {
        let mut mask = self.absorbing.clone();
        for &s in absorbing {
            mask[self.index_of(s)?] = true;
        }
        Generator::from_rates(self.states.clone(), self.rates.clone(), mask)
    }

    /// Full generator matrix, row-major, diagonal included.
    pub fn q_matrix(&self) -> Vec<f64> {
        let n = self.len();
        let mut q = self.rates.clone();
        for i in 0..n {
            q[i * n + i] = -self.out_rate(i);
        }
        q
    }
}

/// Builds the aggregated generator of `net`.
///
/// Rates: `q(0,(k,1)) = L_k ν`, `q((k,l),(k,l+1)) = (L_k − l) ν`,
/// `q((k,l),(k,l−1)) = l` (with `(k,0)` the center).
pub fn build_generator(net: &PartiteNetwork, absorbing: &[AggState]) -> Result<Generator> {
    let states = net.agg_states();
    let n = states.len();
    let nu = net.nu();
    let mut rates = vec![0.0; n * n];
    for k in 1..=net.num_components() {
        let size = net.size(k);
        for l in 0..size {
            let lower = if l == 0 {
                0
            } else {
                net.state_index(AggState::Branch { k, l })?
            };
            let upper = net.state_index(AggState::Branch { k, l: l + 1 })?;
            rates[lower * n + upper] = (size - l) as f64 * nu;
            rates[upper * n + lower] = (l + 1) as f64;
        }
    }
    let mut mask = vec![false; n];
    for &s in absorbing {
        mask[net.state_index(s)?] = true;
    }
    Generator::from_rates(states, rates, mask)
}

/// Probability law over an ordered state list, backed by natural-log
/// unnormalized weights so that laws spanning `ν^L` stay representable.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution<S = AggState> {
    states: Vec<S>,
    log_weights: Vec<f64>,
    log_norm: f64,
}

impl<S: Clone + PartialEq> Distribution<S> {
    pub fn from_log_weights(states: Vec<S>, log_weights: Vec<f64>) -> Result<Self> {
        if states.len() != log_weights.len() || states.is_empty() {
            return Err(Error::Structure("state list and weights must be nonempty and aligned".into()));
        }
        if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
            return Err(Error::Structure("log-weights must be finite or -inf".into()));
        }
        let log_norm = log_sum_exp(&log_weights);
        if log_norm == f64::NEG_INFINITY {
            return Err(Error::Structure("all weights are zero".into()));
        }
        Ok(Self { states, log_weights, log_norm })
    }

    /// From nonnegative linear weights (normalized internally).
    pub fn from_weights(states: Vec<S>, weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Structure("weights must be finite and nonnegative".into()));
        }
        Self::from_log_weights(states, weights.iter().map(|w| w.ln()).collect())
    }

    pub fn point_mass(states: Vec<S>, at: &S) -> Result<Self> {
        let idx = states
            .iter()
            .position(|s| s == at)
            .ok_or_else(|| Error::UnknownState("point mass outside the state list".into()))?;
        let mut w = vec![f64::NEG_INFINITY; states.len()];
        w[idx] = 0.0;
        Self::from_log_weights(states, w)
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// Natural log of the normalizing constant.
    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    pub fn log_probability(&self, i: usize) -> f64 {
        self.log_weights[i] - self.log_norm
    }

    pub fn probability(&self, i: usize) -> f64 {
        self.log_probability(i).exp()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.probability(i)).collect()
    }

    pub fn probability_of(&self, state: &S) -> Option<f64> {
        self.states.iter().position(|s| s == state).map(|i| self.probability(i))
    }

    /// CSV with header `state,log_weight,probability`.
    pub fn to_csv_with(&self, render: impl Fn(&S) -> String) -> String {
        let mut out = String::from("state,log_weight,probability\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{},{:e},{:e}\n",
                render(&self.states[i]),
                self.log_weights[i],
                self.probability(i)
            ));
        }
        out
    }
}

impl Distribution<AggState> {
    pub fn to_csv(&self) -> String {
        self.to_csv_with(|s| s.to_string())
    }
}

/// Aggregated stationary law: `π_(k,l) ∝ C(L_k, l) ν^l`, `π_0 ∝ 1`.
pub fn stationary_agg(net: &PartiteNetwork) -> Distribution<AggState> {
    let ln_nu = net.nu().ln();
    let states = net.agg_states();
    let log_weights = states
        .iter()
        .map(|s| match *s {
            AggState::Center => 0.0,
            AggState::Branch { k, l } => ln_binomial(net.size(k), l) + l as f64 * ln_nu,
        })
        .collect();
    Distribution::from_log_weights(states, log_weights).expect("nonempty state space")
}

/// Every independent set of the complete partite graph: the empty set, then
/// each nonempty subset of each component (component order, mask ascending).
pub fn full_states(net: &PartiteNetwork) -> Result<Vec<FullState>> {
    let total = net.total_nodes();
    if total > FULL_ENUMERATION_LIMIT {
        return Err(Error::Capacity(format!(
            "per-node state space needs Σ L_k ≤ {FULL_ENUMERATION_LIMIT}, got {total}"
        )));
    }
    let mut out = vec![FullState::EMPTY];
    let mut offset = 0;
    for &size in net.sizes() {
        for sub in 1u64..(1u64 << size) {
            out.push(FullState::from_mask(sub << offset));
        }
        offset += size;
    }
    Ok(out)
}

/// Per-node stationary law `π_x ∝ ν^{‖x‖₁}`.
pub fn stationary_full(net: &PartiteNetwork) -> Result<Distribution<FullState>> {
    let states = full_states(net)?;
    let ln_nu = net.nu().ln();
    let w = states.iter().map(|s| s.active_count() as f64 * ln_nu).collect();
    Distribution::from_log_weights(states, w)
}

/// Pushes a law on per-node states forward to the aggregated states.
pub fn aggregate(full: &Distribution<FullState>, net: &PartiteNetwork) -> Result<Distribution<AggState>> {
    let expected = full_states(net)?;
    if full.states() != expected.as_slice() {
        return Err(Error::Structure(
            "distribution is not over the per-node state space of this network".into(),
        ));
    }
    let agg = net.agg_states();
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); agg.len()];
    for (s, &w) in full.states().iter().zip(full.log_weights()) {
        buckets[net.state_index(s.aggregate(net))?].push(w);
    }
    let w = buckets.iter().map(|b| log_sum_exp(b)).collect();
    Distribution::from_log_weights(agg, w)
}

/// `max_j |(πQ)_j| / max_j π_j q_j`: the balance-equation residual relative
/// to the largest stationary outflow.
pub fn balance_residual(gen: &Generator, pi: &Distribution<AggState>) -> Result<f64> {
    check_support(gen, pi)?;
    let p = pi.probabilities();
    let mut flow = vec![0.0; gen.len()];
    let mut scale: f64 = 0.0;
    for i in 0..gen.len() {
        let out = p[i] * gen.out_rate(i);
        flow[i] -= out;
        scale = scale.max(out);
        for (j, r) in gen.neighbors(i) {
            flow[j] += p[i] * r;
        }
    }
    let worst = flow.iter().fold(0.0f64, |m, f| m.max(f.abs()));
    Ok(if scale > 0.0 { worst / scale } else { worst })
}

/// Largest relative defect `|π_i q_ij / (π_j q_ji) − 1|` over all edges,
/// computed from log weights.
pub fn detailed_balance_defect(gen: &Generator, pi: &Distribution<AggState>) -> Result<f64> {
    check_support(gen, pi)?;
    let mut worst: f64 = 0.0;
    for i in 0..gen.len() {
        for (j, r) in gen.neighbors(i) {
            let back = gen.rate(j, i);
            if back <= 0.0 {
                return Err(Error::Structure(format!("edge {} → {} has no reverse", gen.states()[i], gen.states()[j])));
            }
            let ln_ratio = pi.log_probability(i) + r.ln() - pi.log_probability(j) - back.ln();
            worst = worst.max(ln_ratio.exp_m1().abs());
        }
    }
    Ok(worst)
}

fn check_support(gen: &Generator, pi: &Distribution<AggState>) -> Result<()> {
    if gen.states() != pi.states() {
        return Err(Error::Structure("distribution and generator live on different state lists".into()));
    }
    Ok(())
}
