use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use rand::Rng;
use rand_distr::{Exp1, Geometric};
use serde::Serialize;

use super::batch::{batch, default_workers};
use super::rng::sample_rng;
use crate::error::{Error, Result};
use crate::hitting::{mean_hitting_time, HittingQuery, LimitLaw};
use crate::model::{AggState, Distribution, FullState, Generator, PartiteNetwork};

/// Sampled path: `(jump time, new state)` pairs starting with `(0, init)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory<S> {
    pub events: Vec<(f64, S)>,
    pub seed: u64,
    pub horizon: f64,
}

impl<S: Copy + Eq + Hash> Trajectory<S> {
    /// Fraction of `[0, horizon]` spent in each of `states`.
    pub fn occupation(&self, states: &[S]) -> Result<Vec<f64>> {
        let index: HashMap<S, usize> = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let mut time = vec![0.0; states.len()];
        for (i, &(t, s)) in self.events.iter().enumerate() {
            let end = self.events.get(i + 1).map_or(self.horizon, |e| e.0);
            let slot = *index
                .get(&s)
                .ok_or_else(|| Error::UnknownState("trajectory visits a state outside the list".into()))?;
            time[slot] += end - t;
        }
        Ok(time.into_iter().map(|v| v / self.horizon).collect())
    }
}

/// Competing-exponentials view of a generator.
#[derive(Debug, Clone)]
pub(crate) struct JumpChain {
    out: Vec<f64>,
    /// Cumulative rates to each neighbour.
    jumps: Vec<Vec<(usize, f64)>>,
}

impl JumpChain {
    pub(crate) fn new(gen: &Generator) -> Self {
        let jumps = (0..gen.len())
            .map(|x| {
                let mut acc = 0.0;
                gen.neighbors(x)
                    .map(|(y, r)| {
                        acc += r;
                        (y, acc)
                    })
                    .collect()
            })
            .collect();
        Self {
            out: (0..gen.len()).map(|x| gen.out_rate(x)).collect(),
            jumps,
        }
    }

    #[inline]
    fn hold<R: Rng>(&self, x: usize, rng: &mut R) -> f64 {
        let out = self.out[x];
        if out == 0.0 {
            f64::INFINITY
        } else {
            rng.sample::<f64, _>(Exp1) / out
        }
    }

    #[inline]
    fn jump<R: Rng>(&self, x: usize, rng: &mut R) -> usize {
        let row = &self.jumps[x];
        let u = rng.random::<f64>() * self.out[x];
        row.iter().find(|(_, c)| u < *c).unwrap_or(&row[row.len() - 1]).0
    }
}

/// Simulates the aggregated chain from `init` up to `horizon`.
pub fn simulate_trajectory(gen: &Generator, init: AggState, seed: u64, horizon: f64) -> Result<Trajectory<AggState>> {
    if !(horizon > 0.0) {
        return Err(Error::validation("horizon", "must be > 0"));
    }
    let chain = JumpChain::new(gen);
    let mut x = gen.index_of(init)?;
    let mut rng = sample_rng(seed, 0);
    let mut t = 0.0;
    let mut events = vec![(0.0, init)];
    loop {
        let dt = chain.hold(x, &mut rng);
        if t + dt >= horizon {
            break;
        }
        t += dt;
        x = chain.jump(x, &mut rng);
        events.push((t, gen.states()[x]));
    }
    Ok(Trajectory { events, seed, horizon })
}

/// Provenance of a sample set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleMeta {
    pub sizes: Vec<usize>,
    pub nu: Option<f64>,
    pub query: String,
    pub n: usize,
    pub seed: u64,
}

/// I.i.d. nonnegative samples with their provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSet {
    pub values: Vec<f64>,
    pub meta: SampleMeta,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        let n = self.values.len() as f64;
        let m = self.mean();
        let var = self.values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (var / n).sqrt()
    }

    /// Values divided by `scale`.
    pub fn scaled(&self, scale: f64) -> Vec<f64> {
        self.values.iter().map(|v| v / scale).collect()
    }

    /// CSV `index,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,value\n");
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{i},{v:e}\n"));
        }
        out
    }
}

/// Component sizes and `ν` read back from a generator's states and rates.
fn infer_network(gen: &Generator) -> (Vec<usize>, Option<f64>) {
    let mut sizes: Vec<usize> = Vec::new();
    for s in gen.states() {
        if let AggState::Branch { k, l } = *s {
            if sizes.len() < k {
                sizes.resize(k, 0);
            }
            sizes[k - 1] = sizes[k - 1].max(l);
        }
    }
    let nu = match (gen.index_of(AggState::Center), gen.index_of(AggState::branch(1, 1))) {
        (Ok(c), Ok(b)) if gen.rate(c, b) > 0.0 => Some(gen.rate(c, b) / sizes[0] as f64),
        _ => None,
    };
    (sizes, nu)
}

/// One first passage together with the number of entries `0 → (k,1)` into
/// each component on the way.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Crossing {
    pub time: f64,
    /// Indexed by component − 1.
    pub entries: Vec<u64>,
}

fn run_crossing<R: Rng>(chain: &JumpChain, gen: &Generator, from: usize, to: usize, rng: &mut R) -> Crossing {
    let center = gen.index_of(AggState::Center).ok();
    let component: Vec<usize> = gen.states().iter().map(|s| s.component().unwrap_or(0)).collect();
    let kk = component.iter().copied().max().unwrap_or(0);
    let mut entries = vec![0u64; kk];
    let mut x = from;
    let mut t = 0.0;
    while x != to {
        t += chain.hold(x, rng);
        let y = chain.jump(x, rng);
        if Some(x) == center {
            entries[component[y] - 1] += 1;
        }
        x = y;
    }
    Crossing { time: t, entries }
}

/// `n` first passages `from → to`, each with its per-component entry counts.
pub fn sample_crossings(
    gen: &Generator,
    q: HittingQuery,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<Crossing>> {
    mean_hitting_time(gen, q)?;
    let chain = JumpChain::new(gen);
    let (from, to) = (gen.index_of(q.from)?, gen.index_of(q.to)?);
    batch(|rng, _| run_crossing(&chain, gen, from, to, rng), n, seed, workers)
}

/// `n` i.i.d. samples of the first-passage time `T_{from→to}`.
pub fn sample_hitting_time(gen: &Generator, q: HittingQuery, n: usize, seed: u64) -> Result<SampleSet> {
    sample_hitting_time_with(gen, q, n, seed, default_workers())
}

pub fn sample_hitting_time_with(
    gen: &Generator,
    q: HittingQuery,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<SampleSet> {
    mean_hitting_time(gen, q)?;
    let chain = JumpChain::new(gen);
    let (from, to) = (gen.index_of(q.from)?, gen.index_of(q.to)?);
    let values = batch(
        |rng, _| {
            let mut x = from;
            let mut t = 0.0;
            while x != to {
                t += chain.hold(x, rng);
                x = chain.jump(x, rng);
            }
            t
        },
        n,
        seed,
        workers,
    )?;
    let (sizes, nu) = infer_network(gen);
    Ok(SampleSet {
        values,
        meta: SampleMeta {
            sizes,
            nu,
            query: format!("{}->{}", q.from, q.to),
            n,
            seed,
        },
    })
}

/// Joint counts of branch entries before the first entry into `k2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcursionCounts {
    /// The components counted, in key order (all except `k2`).
    pub components: Vec<usize>,
    /// Count vector → number of runs.
    pub counts: BTreeMap<Vec<u64>, u64>,
    pub n: usize,
}

impl ExcursionCounts {
    pub fn frequency(&self, key: &[u64]) -> f64 {
        self.counts.get(key).copied().unwrap_or(0) as f64 / self.n as f64
    }

    /// Runs by total number of excursions `Σ N_k`.
    pub fn totals(&self) -> BTreeMap<u64, u64> {
        let mut out = BTreeMap::new();
        for (key, &c) in &self.counts {
            *out.entry(key.iter().sum()).or_insert(0) += c;
        }
        out
    }
}

/// For `n` runs from the center, the number of entries `0 → (k,1)` into
/// every component `k ≠ k2` before the first entry into `k2`.
pub fn empirical_excursions(gen: &Generator, k2: usize, n: usize, seed: u64) -> Result<ExcursionCounts> {
    let (sizes, _) = infer_network(gen);
    let kk = sizes.len();
    if kk < 2 {
        return Err(Error::Structure("excursion counts need at least two components".into()));
    }
    if k2 == 0 || k2 > kk {
        return Err(Error::validation("k2", format!("component {k2} not in 1..={kk}")));
    }
    let center = gen.index_of(AggState::Center)?;
    let entry = gen.index_of(AggState::branch(k2, 1))?;
    let component: Vec<usize> = gen.states().iter().map(|s| s.component().unwrap_or(0)).collect();
    let chain = JumpChain::new(gen);
    let runs = batch(
        |rng, _| {
            let mut entries = vec![0u64; kk];
            let mut x = center;
            loop {
                let y = chain.jump(x, rng);
                if x == center {
                    if y == entry {
                        break;
                    }
                    entries[component[y] - 1] += 1;
                }
                x = y;
            }
            entries
        },
        n,
        seed,
        default_workers(),
    )?;
    let mut counts = BTreeMap::new();
    for mut e in runs {
        e.remove(k2 - 1);
        *counts.entry(e).or_insert(0) += 1;
    }
    Ok(ExcursionCounts {
        components: (1..=kk).filter(|&k| k != k2).collect(),
        counts,
        n,
    })
}

/// Samples `(1/E M) Σ_{i≤M} Y_i` from its definition.
pub fn sample_limit_law(law: &LimitLaw, n: usize, seed: u64) -> Result<SampleSet> {
    let geo = Geometric::new(1.0 - law.pstar).map_err(|e| Error::validation("pstar", e.to_string()))?;
    let mean_m = law.mean_m();
    let values = batch(
        |rng, _| {
            let m = law.indicator as u64 + rng.sample(geo);
            let s: f64 = (0..m).map(|_| rng.sample::<f64, _>(Exp1)).sum();
            s / mean_m
        },
        n,
        seed,
        default_workers(),
    )?;
    Ok(SampleSet {
        values,
        meta: SampleMeta {
            sizes: Vec::new(),
            nu: None,
            query: format!("limit-law(p*={}, indicator={})", law.pstar, law.indicator),
            n,
            seed,
        },
    })
}

/// How the per-node process picks its next event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FullClock {
    /// One exponential clock per node; the earliest fires.
    PerNode,
    /// Total rate first, then a uniformly chosen node of the firing kind.
    Aggregated,
}

/// Simulates the per-node process (each free node activates at rate `ν`,
/// each active node deactivates at rate 1).
pub fn simulate_full(
    net: &PartiteNetwork,
    init: FullState,
    seed: u64,
    horizon: f64,
    clock: FullClock,
) -> Result<Trajectory<FullState>> {
    if !(horizon > 0.0) {
        return Err(Error::validation("horizon", "must be > 0"));
    }
    let total = net.total_nodes();
    if total > 64 {
        return Err(Error::Capacity(format!("per-node simulation supports 64 nodes, got {total}")));
    }
    if total < 64 && init.mask() >> total != 0 || !init.is_independent(net) {
        return Err(Error::validation("init", "not an independent set of this network"));
    }
    let mut owner = Vec::with_capacity(total);
    for (k, &size) in net.sizes().iter().enumerate() {
        owner.extend(std::iter::repeat_n(k, size));
    }
    let nu = net.nu();
    let mut rng = sample_rng(seed, 0);
    let mut mask = init.mask();
    let mut t = 0.0;
    let mut events = vec![(0.0, init)];
    loop {
        let active_k = (mask != 0).then(|| owner[mask.trailing_zeros() as usize]);
        let free = |i: usize| mask >> i & 1 == 0 && active_k.is_none_or(|k| owner[i] == k);
        let (dt, node) = match clock {
            FullClock::PerNode => {
                let mut best = (f64::INFINITY, usize::MAX);
                for i in 0..total {
                    let rate = if mask >> i & 1 == 1 {
                        1.0
                    } else if free(i) {
                        nu
                    } else {
                        continue;
                    };
                    let fire = rng.sample::<f64, _>(Exp1) / rate;
                    if fire < best.0 {
                        best = (fire, i);
                    }
                }
                best
            }
            FullClock::Aggregated => {
                let active = mask.count_ones() as usize;
                let eligible = (0..total).filter(|&i| free(i)).count();
                let rate = active as f64 + eligible as f64 * nu;
                let dt = rng.sample::<f64, _>(Exp1) / rate;
                let u = rng.random::<f64>() * rate;
                let node = if u < active as f64 {
                    let pick = (u as usize).min(active - 1);
                    (0..total).filter(|&i| mask >> i & 1 == 1).nth(pick)
                } else {
                    let pick = (((u - active as f64) / nu) as usize).min(eligible - 1);
                    (0..total).filter(|&i| free(i)).nth(pick)
                };
                (dt, node.expect("pick within range"))
            }
        };
        if t + dt >= horizon {
            break;
        }
        t += dt;
        mask ^= 1 << node;
        events.push((t, FullState::from_mask(mask)));
    }
    Ok(Trajectory { events, seed, horizon })
}

/// Time-average law of a per-node trajectory pushed to aggregated states.
pub fn occupation(net: &PartiteNetwork, traj: &Trajectory<FullState>) -> Result<Distribution<AggState>> {
    let states = net.agg_states();
    let mut time = vec![0.0; states.len()];
    for (i, &(t, s)) in traj.events.iter().enumerate() {
        let end = traj.events.get(i + 1).map_or(traj.horizon, |e| e.0);
        time[net.state_index(s.aggregate(net))?] += end - t;
    }
    Distribution::from_weights(states, &time)
}

/// Fraction of `runs` trajectories from `start` that spend more than
/// `threshold` of `[0, horizon]` inside a single branch.
pub fn dominance_fraction(
    net: &PartiteNetwork,
    start: AggState,
    horizon: f64,
    threshold: f64,
    runs: usize,
    seed: u64,
) -> Result<f64> {
    let gen = net.generator(&[])?;
    let chain = JumpChain::new(&gen);
    let x0 = gen.index_of(start)?;
    if !(horizon > 0.0) {
        return Err(Error::validation("horizon", "must be > 0"));
    }
    let component: Vec<usize> = gen.states().iter().map(|s| s.component().unwrap_or(0)).collect();
    let kk = net.num_components();
    let dominated = batch(
        |rng, _| {
            let mut time = vec![0.0; kk + 1];
            let (mut x, mut t) = (x0, 0.0);
            loop {
                let dt = chain.hold(x, rng);
                let stay = dt.min(horizon - t);
                time[component[x]] += stay;
                if t + dt >= horizon {
                    break;
                }
                t += dt;
                x = chain.jump(x, rng);
            }
            time[1..].iter().any(|&s| s / horizon > threshold)
        },
        runs,
        seed,
        default_workers(),
    )?;
    Ok(dominated.iter().filter(|&&d| d).count() as f64 / runs as f64)
}
