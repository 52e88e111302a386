//! Symmetrization of reversible killed generators, absorption spectra,
//! hypoexponential (phase-type) laws, Gershgorin localization and exact
//! transient distributions.
//!
//! A killed generator `T` of a reversible chain is similar to the symmetric
//! matrix `G = W^{1/2}(−T)W^{−1/2}`, `W` the diagonal of detailed-balance
//! weights, with off-diagonals `−√(q(x,y)q(y,x))`. Eigenvalues are only ever
//! computed on symmetric matrices.
//!
//! Small eigenvalues of `G` (the slow modes, ~ν^{1−L}) lose relative
//! accuracy in a backward-stable eigensolver because the error scales with
//! `‖G‖ ~ Lν`. They are therefore taken from the symmetrized inverse
//! `W^{1/2}(−T)^{−1}W^{−1/2}`, whose entries come from the cancellation-free
//! elimination in [`crate::linalg`]; large eigenvalues come from `G` itself.

use crate::error::{Error, Result};
use crate::hitting::{mean_hitting_time, HittingQuery};
use crate::linalg::{
    connected_pieces, detailed_balance_log_weights, inf_norm, symmetric_eigen, KilledSystem,
};
use crate::model::{AggState, Distribution, Generator};
use crate::numeric::geometric_mean;
use crate::par::{map_indices, Exec};

/// Relative gap below which two phase rates count as coincident.
pub const RATE_GAP_GUARD: f64 = 1e-9;

/// Truncation tolerance of the uniformization series.
pub const UNIFORMIZATION_TOL: f64 = 1e-12;

/// Largest `Λt` the plain uniformization path accepts.
pub const UNIFORMIZATION_MAX_STEPS: f64 = 5e6;

/// Law of a sum of independent exponentials with distinct rates
/// `α_1 < α_2 < … < α_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseType {
    rates: Vec<f64>,
}

impl PhaseType {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::validation("rates", "at least one phase is required"));
        }
        if rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::validation("rates", "rates must be positive and finite"));
        }
        if rates.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::validation("rates", "rates must be strictly increasing"));
        }
        Ok(Self { rates })
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// `Σ 1/α_i`.
    pub fn mean(&self) -> f64 {
        self.rates.iter().map(|a| 1.0 / a).sum()
    }

    pub fn cdf(&self, t: f64) -> Result<f64> {
        phase_type_cdf(self, t)
    }

    /// Smallest relative gap between consecutive rates.
    pub fn min_relative_gap(&self) -> f64 {
        self.rates
            .windows(2)
            .map(|w| (w[1] - w[0]) / w[1])
            .fold(f64::INFINITY, f64::min)
    }

    /// CDF through the serial-phase generator and uniformization; valid for
    /// coincident rates, limited to moderate `α_max · t`.
    pub fn cdf_serial(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(Error::validation("t", "must be ≥ 0"));
        }
        let d = self.rates.len();
        let mut rates = vec![0.0; (d + 1) * (d + 1)];
        for (i, &a) in self.rates.iter().enumerate() {
            rates[i * (d + 1) + i + 1] = a;
        }
        let mut p0 = vec![0.0; d + 1];
        p0[0] = 1.0;
        let p = uniformize(&rates, d + 1, &p0, t)?;
        Ok(p[d].clamp(0.0, 1.0))
    }
}

/// `P(Σ Exp(α_i) ≤ t)` by the distinct-rate hypoexponential formula
/// `1 − Σ_i (Π_{j≠i} α_j/(α_j − α_i)) e^{−α_i t}`.
pub fn phase_type_cdf(pt: &PhaseType, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::validation("t", "must be ≥ 0"));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    if t == f64::INFINITY {
        return Ok(1.0);
    }
    let gap = pt.min_relative_gap();
    if gap < RATE_GAP_GUARD {
        return Err(Error::Conditioning(format!(
            "phase rates nearly coincide (relative gap {gap:e}); use transient_distribution or PhaseType::cdf_serial"
        )));
    }
    let a = pt.rates();
    let mut survival = 0.0;
    for i in 0..a.len() {
        let mut log_abs = 0.0;
        let mut negative = false;
        for j in 0..a.len() {
            if j != i {
                let diff = a[j] - a[i];
                log_abs += a[j].ln() - diff.abs().ln();
                negative ^= diff < 0.0;
            }
        }
        let term = (log_abs - a[i] * t).exp();
        survival += if negative { -term } else { term };
    }
    Ok((1.0 - survival).clamp(0.0, 1.0))
}

/// Symmetrized form of a reversible killed generator.
#[derive(Debug, Clone)]
pub struct SymmetrizedChain {
    transient_states: Vec<AggState>,
    theta: Vec<f64>,
    matrix: Vec<f64>,
    far_end: usize,
    gen_index: Vec<usize>,
}

impl SymmetrizedChain {
    pub fn transient_states(&self) -> &[AggState] {
        &self.transient_states
    }

    /// Detailed-balance weights, normalized to 1 at the state farthest from
    /// the absorbing set.
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn dim(&self) -> usize {
        self.transient_states.len()
    }

    /// Row-major symmetric matrix `G`.
    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.dim() + j]
    }

    /// Row of the transient state farthest (in jumps) from absorption.
    pub fn far_end(&self) -> usize {
        self.far_end
    }

    pub fn far_end_state(&self) -> AggState {
        self.transient_states[self.far_end]
    }

    /// Eigenvalues of `G` straight from the dense symmetric solver, ascending.
    pub fn raw_eigenvalues(&self) -> Vec<f64> {
        symmetric_eigen(self.dim(), &self.matrix).values
    }
}

fn absorbing_set(gen: &Generator, absorbing: AggState) -> Result<Vec<usize>> {
    let a = gen.index_of(absorbing)?;
    let mut set: Vec<usize> = (0..gen.len()).filter(|&i| gen.is_absorbing(i)).collect();
    if !set.contains(&a) {
        set.push(a);
        set.sort_unstable();
    }
    Ok(set)
}

/// Jump distance of every state to the nearest absorbing state.
fn distances_to(gen: &Generator, targets: &[usize]) -> Vec<usize> {
    let n = gen.len();
    let mut dist = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    for &t in targets {
        dist[t] = 0;
        queue.push_back(t);
    }
    while let Some(y) = queue.pop_front() {
        for x in 0..n {
            if dist[x] == usize::MAX && !gen.is_absorbing(x) && gen.rate(x, y) > 0.0 {
                dist[x] = dist[y] + 1;
                queue.push_back(x);
            }
        }
    }
    dist
}

/// Symmetrizes the killed generator obtained by making `absorbing` (and any
/// state already absorbing in `gen`) absorbing.
pub fn symmetrize(gen: &Generator, absorbing: AggState) -> Result<SymmetrizedChain> {
    let targets = absorbing_set(gen, absorbing)?;
    let transient: Vec<usize> = (0..gen.len()).filter(|i| !targets.contains(i)).collect();
    symmetrize_subset(gen, &targets, transient)
}

fn symmetrize_subset(gen: &Generator, targets: &[usize], transient: Vec<usize>) -> Result<SymmetrizedChain> {
    let m = transient.len();
    if m == 0 {
        return Err(Error::Structure("no transient states left after killing".into()));
    }
    let log_w = detailed_balance_log_weights(gen, &transient)?;
    let dist = distances_to(gen, targets);
    let mut matrix = vec![0.0; m * m];
    for a in 0..m {
        let x = transient[a];
        matrix[a * m + a] = gen.out_rate(x);
        for b in (a + 1)..m {
            let y = transient[b];
            let (f, r) = (gen.rate(x, y), gen.rate(y, x));
            if f > 0.0 && r > 0.0 {
                let g = -geometric_mean(f, r);
                matrix[a * m + b] = g;
                matrix[b * m + a] = g;
            }
        }
    }
    // normalize weights per connected piece at its far end
    let mut theta = vec![0.0; m];
    let mut far_end = 0;
    let mut far_dist = 0;
    for piece in connected_pieces(gen, &transient) {
        let rows: Vec<usize> = piece
            .iter()
            .map(|x| transient.iter().position(|y| y == x).unwrap())
            .collect();
        let anchor = *rows
            .iter()
            .max_by(|&&a, &&b| dist[transient[a]].cmp(&dist[transient[b]]).then(b.cmp(&a)))
            .unwrap();
        if dist[transient[anchor]] > far_dist || (far_dist == 0 && rows.contains(&0)) {
            far_dist = dist[transient[anchor]];
            far_end = anchor;
        }
        for &a in &rows {
            theta[a] = (log_w[a] - log_w[anchor]).exp();
        }
    }
    Ok(SymmetrizedChain {
        transient_states: transient.iter().map(|&i| gen.states()[i]).collect(),
        theta,
        matrix,
        far_end,
        gen_index: transient,
    })
}

/// Potential coefficients of a birth-death killed chain: `θ = 1` at the far
/// end and `θ_{l−1} = l/((L−l+1)ν) θ_l` along a single branch. Returned in the
/// generator's transient-state order.
pub fn potential_coefficients(gen: &Generator, absorbing: AggState) -> Result<Vec<f64>> {
    for i in 0..gen.len() {
        let degree = (0..gen.len())
            .filter(|&j| j != i && (gen.rate(i, j) > 0.0 || gen.rate(j, i) > 0.0))
            .count();
        if degree > 2 {
            return Err(Error::Structure(format!(
                "state {} has {degree} neighbours; potential coefficients need a linear chain",
                gen.states()[i]
            )));
        }
    }
    Ok(symmetrize(gen, absorbing)?.theta)
}

/// Eigen-decomposition of a killed (or irreducible) reversible chain in the
/// symmetrized basis, with small eigenvalues refined through the inverse.
#[derive(Debug, Clone)]
struct KilledEigen {
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
}

fn killed_eigen(gen: &Generator, targets: &[usize], sym: &SymmetrizedChain) -> Result<KilledEigen> {
    let m = sym.dim();
    let from_g = symmetric_eigen(m, &sym.matrix);
    let reduced = KilledSystem::new(gen, sym.gen_index.clone(), targets).reduce()?;
    let green = reduced.green_matrix();
    let log_w = detailed_balance_log_weights(gen, &sym.gen_index)?;
    let mut s = vec![0.0; m * m];
    for a in 0..m {
        for b in a..m {
            let ab = (0.5 * (log_w[a] - log_w[b])).exp() * green[a * m + b];
            let ba = (0.5 * (log_w[b] - log_w[a])).exp() * green[b * m + a];
            let v = 0.5 * (ab + ba);
            s[a * m + b] = v;
            s[b * m + a] = v;
        }
    }
    let from_s = symmetric_eigen(m, &s);
    let norm_g = inf_norm(m, &sym.matrix);
    let norm_s = inf_norm(m, &s);
    let mut values = Vec::with_capacity(m);
    let mut vectors = Vec::with_capacity(m);
    for i in 0..m {
        let mu = from_s.values[m - 1 - i];
        let alpha_s = 1.0 / mu;
        if mu > 0.0 && alpha_s * alpha_s * norm_s <= norm_g {
            values.push(alpha_s);
            vectors.push(from_s.vectors[m - 1 - i].clone());
        } else {
            values.push(from_g.values[i]);
            vectors.push(from_g.vectors[i].clone());
        }
    }
    Ok(KilledEigen { values, vectors })
}

/// Sorted absorption rates of the killed chain. The transient states must
/// form one communicating class; use [`absorption_spectrum_from`] otherwise.
///
/// For birth-death chains started at the far end these are the rates of the
/// independent exponentials whose sum is the absorption time. For
/// star-shaped killed chains (K ≥ 3) the spectrum is still real and
/// positive but carries no such interpretation.
pub fn absorption_spectrum(gen: &Generator, absorbing: AggState) -> Result<PhaseType> {
    let sym = symmetrize(gen, absorbing)?;
    let pieces = connected_pieces(gen, &sym.gen_index);
    if pieces.len() > 1 {
        return Err(Error::Structure(format!(
            "transient states split into {} classes; pick one with absorption_spectrum_from",
            pieces.len()
        )));
    }
    let targets = absorbing_set(gen, absorbing)?;
    PhaseType::new(killed_eigen(gen, &targets, &sym)?.values)
}

/// Absorption rates of the transient class containing `start`.
pub fn absorption_spectrum_from(gen: &Generator, absorbing: AggState, start: AggState) -> Result<PhaseType> {
    Ok(start_class(gen, absorbing, start)?.1)
}

fn start_class(gen: &Generator, absorbing: AggState, start: AggState) -> Result<(SymmetrizedChain, PhaseType)> {
    let targets = absorbing_set(gen, absorbing)?;
    let s = gen.index_of(start)?;
    if targets.contains(&s) {
        return Err(Error::validation("start", "start state is absorbing"));
    }
    let transient: Vec<usize> = (0..gen.len()).filter(|i| !targets.contains(i)).collect();
    let piece = connected_pieces(gen, &transient)
        .into_iter()
        .find(|p| p.contains(&s))
        .expect("start is transient");
    let sym = symmetrize_subset(gen, &targets, piece)?;
    let pt = PhaseType::new(killed_eigen(gen, &targets, &sym)?.values)?;
    Ok((sym, pt))
}

/// One Gershgorin disc `{z : |z − center| ≤ radius}`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Disc {
    pub center: f64,
    pub radius: f64,
}

impl Disc {
    pub fn contains(&self, x: f64) -> bool {
        (x - self.center).abs() <= self.radius
    }

    pub fn disjoint(&self, other: &Disc) -> bool {
        (self.center - other.center).abs() > self.radius + other.radius
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GershgorinReport {
    /// One disc per row of `G`, in transient-state order.
    pub discs: Vec<Disc>,
    /// Row of the far-end state.
    pub far_end: usize,
    /// Whether the far-end disc is disjoint from the union of all others.
    pub far_end_isolated: bool,
}

pub fn gershgorin_discs(sym: &SymmetrizedChain) -> GershgorinReport {
    let m = sym.dim();
    let discs: Vec<Disc> = (0..m)
        .map(|i| Disc {
            center: sym.entry(i, i),
            radius: (0..m).filter(|&j| j != i).map(|j| sym.entry(i, j).abs()).sum(),
        })
        .collect();
    let far = sym.far_end;
    let isolated = m > 1 && (0..m).filter(|&j| j != far).all(|j| discs[far].disjoint(&discs[j]));
    GershgorinReport {
        discs,
        far_end: far,
        far_end_isolated: isolated,
    }
}

/// Products `α_i · E T` of the absorption rates with the mean absorption
/// time from `start` (the far end of a birth-death chain).
pub fn eigen_time_products(gen: &Generator, absorbing: AggState, start: AggState) -> Result<Vec<f64>> {
    let pt = absorption_spectrum_from(gen, absorbing, start)?;
    let mean = mean_hitting_time(gen, HittingQuery::new(start, absorbing)?)?;
    Ok(pt.rates().iter().map(|a| a * mean).collect())
}

/// CSV `index,eigenvalue,product_with_mean_hitting_time`.
pub fn spectrum_csv(pt: &PhaseType, mean: f64) -> String {
    let mut out = String::from("index,eigenvalue,product_with_mean_hitting_time\n");
    for (i, a) in pt.rates().iter().enumerate() {
        out.push_str(&format!("{},{:e},{:e}\n", i + 1, a, a * mean));
    }
    out
}

/// How to evaluate a transient law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransientMethod {
    /// Spectral decomposition of the symmetrized generator.
    #[default]
    Spectral,
    /// Uniformization series; cost grows with `Λt`.
    Uniformization,
    /// Uniformized kernel over a short step, squared up to `t`. Every
    /// operation is on nonnegative numbers, so small probabilities keep
    /// their relative accuracy; cost grows only with `log(Λt)`.
    Squaring,
}

/// Spectral propagator of a reversible generator, possibly with absorbing
/// states. Build once, evaluate at many times.
#[derive(Debug, Clone)]
pub struct Propagator {
    states: Vec<AggState>,
    transient: Vec<usize>,
    absorbing: Vec<usize>,
    half_log_w: Vec<f64>,
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
    /// `sink[a][x]`: rate from transient row `x` into absorbing state `a`.
    sink: Vec<Vec<f64>>,
}

impl Propagator {
    pub fn new(gen: &Generator) -> Result<Self> {
        let n = gen.len();
        let absorbing: Vec<usize> = (0..n).filter(|&i| gen.is_absorbing(i)).collect();
        let transient: Vec<usize> = (0..n).filter(|&i| !gen.is_absorbing(i)).collect();
        let mut log_w = detailed_balance_log_weights(gen, &transient)?;
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        log_w.iter_mut().for_each(|w| *w -= max);
        let half_log_w: Vec<f64> = log_w.iter().map(|w| 0.5 * w).collect();

        let (values, vectors) = if absorbing.is_empty() {
            let sym = symmetrize_subset(gen, &[], transient.clone())?;
            let mut eig = symmetric_eigen(sym.dim(), &sym.matrix);
            // the stationary mode is known exactly
            let root: Vec<f64> = half_log_w.iter().map(|h| h.exp()).collect();
            let norm = root.iter().map(|v| v * v).sum::<f64>().sqrt();
            let stationary: Vec<f64> = root.iter().map(|v| v / norm).collect();
            let null = (0..eig.values.len())
                .max_by(|&a, &b| {
                    let da: f64 = eig.vectors[a].iter().zip(&stationary).map(|(u, v)| u * v).sum();
                    let db: f64 = eig.vectors[b].iter().zip(&stationary).map(|(u, v)| u * v).sum();
                    da.abs().total_cmp(&db.abs())
                })
                .unwrap_or(0);
            eig.values[null] = 0.0;
            eig.vectors[null] = stationary;
            let values = eig.values.iter().map(|v| v.max(0.0)).collect();
            (values, eig.vectors)
        } else {
            let sym = symmetrize_subset(gen, &absorbing, transient.clone())?;
            let eig = killed_eigen(gen, &absorbing, &sym)?;
            (eig.values, eig.vectors)
        };
        let sink = absorbing
            .iter()
            .map(|&a| transient.iter().map(|&x| gen.rate(x, a)).collect())
            .collect();
        Ok(Self {
            states: gen.states().to_vec(),
            transient,
            absorbing,
            half_log_w,
            values,
            vectors,
            sink,
        })
    }

    /// Decay rates of the transient modes, ascending (0 first for an
    /// irreducible chain).
    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    /// Smallest positive decay rate.
    pub fn spectral_gap(&self) -> f64 {
        self.values.iter().copied().filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min)
    }

    /// Law at time `t` from the initial probabilities `init` (generator order).
    pub fn propagate(&self, init: &[f64], t: f64) -> Result<Vec<f64>> {
        if !(t >= 0.0) {
            return Err(Error::validation("t", "must be ≥ 0"));
        }
        let n = self.states.len();
        if init.len() != n {
            return Err(Error::Structure("initial law has the wrong length".into()));
        }
        let mut out = vec![0.0; n];
        for &a in &self.absorbing {
            out[a] = init[a];
        }
        let m = self.transient.len();
        let scaled: Vec<f64> = (0..m)
            .map(|x| init[self.transient[x]] * (-self.half_log_w[x]).exp())
            .collect();
        let coef: Vec<f64> = self
            .vectors
            .iter()
            .map(|u| u.iter().zip(&scaled).map(|(a, b)| a * b).sum())
            .collect();
        let decay: Vec<f64> = self.values.iter().map(|l| (-l * t).exp()).collect();
        for y in 0..m {
            let s: f64 = (0..m).map(|k| coef[k] * decay[k] * self.vectors[k][y]).sum();
            out[self.transient[y]] = s * self.half_log_w[y].exp();
        }
        if !self.absorbing.is_empty() {
            // ∫_0^t e^{−λs} ds for each mode
            let integral: Vec<f64> = self
                .values
                .iter()
                .map(|&l| if l * t < 1e-300 { t } else { -(-l * t).exp_m1() / l })
                .collect();
            for (ai, &a) in self.absorbing.iter().enumerate() {
                let mut flow = 0.0;
                for x in 0..m {
                    let r = self.sink[ai][x];
                    if r == 0.0 {
                        continue;
                    }
                    let occ: f64 = (0..m).map(|k| coef[k] * integral[k] * self.vectors[k][x]).sum();
                    flow += r * occ * self.half_log_w[x].exp();
                }
                out[a] += flow;
            }
        }
        Ok(normalize_probabilities(out))
    }
}

fn normalize_probabilities(mut p: Vec<f64>) -> Vec<f64> {
    p.iter_mut().for_each(|v| *v = v.max(0.0));
    let total: f64 = p.iter().sum();
    if total > 0.0 {
        p.iter_mut().for_each(|v| *v /= total);
    }
    p
}

/// Uniformization of a rate matrix (`n × n`, off-diagonal rates) applied to
/// the row vector `p0`.
pub(crate) fn uniformize(rates: &[f64], n: usize, p0: &[f64], t: f64) -> Result<Vec<f64>> {
    let out: Vec<f64> = (0..n).map(|i| rates[i * n..(i + 1) * n].iter().sum()).collect();
    let lambda = out.iter().copied().fold(0.0, f64::max);
    if lambda == 0.0 || t == 0.0 {
        return Ok(p0.to_vec());
    }
    let lt = lambda * t;
    if lt > UNIFORMIZATION_MAX_STEPS {
        return Err(Error::Conditioning(format!(
            "uniformization needs ~{lt:e} steps; use the spectral method"
        )));
    }
    let mut term = p0.to_vec();
    let mut acc = vec![0.0; n];
    let mut cumulative = 0.0;
    let ln_lt = lt.ln();
    let mut ln_fact = 0.0;
    let mut k: u64 = 0;
    loop {
        let weight = (-lt + k as f64 * ln_lt - ln_fact).exp();
        for i in 0..n {
            acc[i] += weight * term[i];
        }
        cumulative += weight;
        if (k as f64) > lt && 1.0 - cumulative < UNIFORMIZATION_TOL {
            break;
        }
        if (k as f64) > lt + 50.0 * lt.sqrt() + 100.0 {
            break;
        }
        // term ← term · (I + Q/Λ)
        let mut next = vec![0.0; n];
        for i in 0..n {
            if term[i] == 0.0 {
                continue;
            }
            next[i] += term[i] * (1.0 - out[i] / lambda);
            for j in 0..n {
                let r = rates[i * n + j];
                if r > 0.0 {
                    next[j] += term[i] * r / lambda;
                }
            }
        }
        term = next;
        k += 1;
        ln_fact += (k as f64).ln();
    }
    Ok(acc)
}

/// Transition matrix `P(t)` (row-major) by scaling and squaring of the
/// uniformized kernel.
///
/// Diagonal entries are never carried through a product: after every step
/// they are rebuilt as one minus the off-diagonal row sum. Off-diagonal
/// entries are sums of products of nonnegative numbers and keep their
/// relative accuracy through any number of squarings, and rows sum to one
/// exactly.
pub fn squared_kernel(gen: &Generator, t: f64) -> Vec<f64> {
    squared_kernel_with(gen, t, Exec::Sequential)
}

/// [`squared_kernel`] with the matrix products split by rows.
pub fn squared_kernel_with(gen: &Generator, t: f64, exec: Exec) -> Vec<f64> {
    let n = gen.len();
    let out: Vec<f64> = (0..n).map(|i| gen.out_rate(i)).collect();
    let lambda = out.iter().copied().fold(0.0, f64::max);
    let mut kernel = vec![0.0; n * n];
    if lambda == 0.0 || t == 0.0 {
        (0..n).for_each(|i| kernel[i * n + i] = 1.0);
        return kernel;
    }
    let mut squarings = 0;
    let mut h = t;
    while lambda * h > 0.5 {
        h *= 0.5;
        squarings += 1;
    }
    // P = I + Q/Λ, nonnegative
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if j != i {
                p[i * n + j] = gen.rate(i, j) / lambda;
            }
        }
    }
    fix_diagonal(&mut p, n);
    let lh = lambda * h;
    let mut power = vec![0.0; n * n];
    (0..n).for_each(|i| power[i * n + i] = 1.0);
    let mut weight = (-lh).exp();
    let mut k = 0u32;
    loop {
        for (acc, v) in kernel.iter_mut().zip(&power) {
            *acc += weight * v;
        }
        k += 1;
        weight *= lh / k as f64;
        if weight < 1e-20 {
            break;
        }
        power = mat_mul(&power, &p, n, exec);
        fix_diagonal(&mut power, n);
    }
    fix_diagonal(&mut kernel, n);
    for _ in 0..squarings {
        kernel = mat_mul(&kernel, &kernel, n, exec);
        fix_diagonal(&mut kernel, n);
    }
    kernel
}

fn fix_diagonal(m: &mut [f64], n: usize) {
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| m[i * n + j]).sum();
        m[i * n + i] = (1.0 - off).max(0.0);
    }
}

fn mat_mul(a: &[f64], b: &[f64], n: usize, exec: Exec) -> Vec<f64> {
    let rows = map_indices(exec, n, |i| {
        let mut row = vec![0.0; n];
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for (r, bkj) in row.iter_mut().zip(&b[k * n..(k + 1) * n]) {
                *r += aik * bkj;
            }
        }
        row
    });
    rows.concat()
}

/// Law of `X_t` given the initial law `init`.
pub fn transient_distribution(
    gen: &Generator,
    init: &Distribution<AggState>,
    t: f64,
    method: TransientMethod,
) -> Result<Distribution<AggState>> {
    if !(t >= 0.0) {
        return Err(Error::validation("t", "must be ≥ 0"));
    }
    if init.states() != gen.states() {
        return Err(Error::Structure("initial law is not over the generator's states".into()));
    }
    if t == 0.0 {
        return Ok(init.clone());
    }
    let p0 = init.probabilities();
    let p = match method {
        TransientMethod::Spectral => Propagator::new(gen)?.propagate(&p0, t)?,
        TransientMethod::Uniformization => {
            let n = gen.len();
            let rates: Vec<f64> = (0..n * n).map(|ij| gen.rate(ij / n, ij % n)).collect();
            normalize_probabilities(uniformize(&rates, n, &p0, t)?)
        }
        TransientMethod::Squaring => {
            let k = squared_kernel(gen, t);
            let n = gen.len();
            let p: Vec<f64> = (0..n).map(|j| (0..n).map(|i| p0[i] * k[i * n + j]).sum()).collect();
            normalize_probabilities(p)
        }
    };
    Distribution::from_weights(gen.states().to_vec(), &p)
}

/// Law of `X_t` started from a single state.
pub fn transient_from_state(
    gen: &Generator,
    start: AggState,
    t: f64,
    method: TransientMethod,
) -> Result<Distribution<AggState>> {
    let init = Distribution::point_mass(gen.states().to_vec(), &start)?;
    transient_distribution(gen, &init, t, method)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PartiteNetwork;

    fn gen(sizes: &[usize], nu: f64) -> Generator {
        PartiteNetwork::new(sizes.to_vec(), nu).unwrap().generator(&[]).unwrap()
    }

    #[test]
    fn potential_coefficient_examples() {
        let th = potential_coefficients(&gen(&[1], 3.0), AggState::Center).unwrap();
        assert_eq!(th, vec![1.0]);
        let th = potential_coefficients(&gen(&[2], 1.0), AggState::Center).unwrap();
        assert!((th[0] - 2.0).abs() < 1e-14 && (th[1] - 1.0).abs() < 1e-15);
        let th = potential_coefficients(&gen(&[3], 2.0), AggState::Center).unwrap();
        for (a, b) in th.iter().zip([0.75, 1.5, 1.0]) {
            assert!((a - b).abs() < 1e-14, "{th:?}");
        }
    }

    #[test]
    fn potential_coefficients_reject_star() {
        let err = potential_coefficients(&gen(&[1, 1, 1], 1.0), AggState::branch(1, 1)).unwrap_err();
        assert!(matches!(err, Error::Structure(_)));
        // two branches form a line
        assert!(potential_coefficients(&gen(&[2, 3], 1.0), AggState::branch(2, 3)).is_ok());
    }

    #[test]
    fn symmetrize_examples() {
        let s = symmetrize(&gen(&[2], 1.0), AggState::Center).unwrap();
        let r2 = 2f64.sqrt();
        let expect = [2.0, -r2, -r2, 2.0];
        for (a, b) in s.matrix().iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
        let s = symmetrize(&gen(&[1], 4.0), AggState::Center).unwrap();
        assert_eq!(s.matrix(), &[1.0]);
        let s = symmetrize(&gen(&[3, 2, 4], 17.0), AggState::branch(2, 1)).unwrap();
        let m = s.dim();
        for i in 0..m {
            for j in 0..m {
                assert_eq!(s.entry(i, j), s.entry(j, i));
            }
        }
        assert!(symmetrize(&gen(&[2], 1.0), AggState::branch(2, 1)).is_err());
    }

    #[test]
    fn off_diagonals_are_rate_geometric_means() {
        let g = gen(&[3], 5.0);
        let s = symmetrize(&g, AggState::Center).unwrap();
        // states (1,1),(1,2),(1,3): q((1,1),(1,2)) = 2ν, q((1,2),(1,1)) = 2
        assert!((s.entry(0, 1) + (2.0 * 5.0 * 2.0f64).sqrt()).abs() < 1e-13);
        assert!((s.entry(1, 2) + (1.0 * 5.0 * 3.0f64).sqrt()).abs() < 1e-13);
        assert_eq!(s.far_end_state(), AggState::branch(1, 3));
    }

    #[test]
    fn spectrum_examples() {
        let pt = absorption_spectrum(&gen(&[1], 2.0), AggState::Center).unwrap();
        assert!((pt.rates()[0] - 1.0).abs() < 1e-14);
        let pt = absorption_spectrum(&gen(&[2], 1.0), AggState::Center).unwrap();
        let r2 = 2f64.sqrt();
        assert!((pt.rates()[0] - (2.0 - r2)).abs() < 1e-14);
        assert!((pt.rates()[1] - (2.0 + r2)).abs() < 1e-14);
        assert!((pt.mean() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn spectrum_requires_single_class() {
        let g = gen(&[2, 3], 2.0);
        assert!(matches!(
            absorption_spectrum(&g, AggState::branch(2, 1)),
            Err(Error::Structure(_))
        ));
        let pt = absorption_spectrum_from(&g, AggState::branch(2, 1), AggState::branch(1, 2)).unwrap();
        assert_eq!(pt.len(), 3);
    }

    #[test]
    fn phase_type_basics() {
        let pt = PhaseType::new(vec![1.0]).unwrap();
        assert!((phase_type_cdf(&pt, 1.0).unwrap() - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert_eq!(phase_type_cdf(&pt, 0.0).unwrap(), 0.0);
        assert!(phase_type_cdf(&pt, -1.0).is_err());
        assert!(PhaseType::new(vec![2.0, 1.0]).is_err());
        assert!(PhaseType::new(vec![0.0]).is_err());
        let close = PhaseType::new(vec![1.0, 1.0 + 1e-12]).unwrap();
        assert!(matches!(phase_type_cdf(&close, 1.0), Err(Error::Conditioning(_))));
        // the serial fallback copes: Erlang(2,1) at t=1 is 1 − 2/e
        let f = close.cdf_serial(1.0).unwrap();
        assert!((f - (1.0 - 2.0 * (-1.0f64).exp())).abs() < 1e-9);
    }

    #[test]
    fn phase_type_matches_serial_uniformization() {
        let pt = PhaseType::new(vec![0.3, 1.1, 4.0]).unwrap();
        for t in [0.1, 1.0, 3.0, 10.0] {
            let a = phase_type_cdf(&pt, t).unwrap();
            let b = pt.cdf_serial(t).unwrap();
            assert!((a - b).abs() < 1e-11, "t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn gershgorin_examples() {
        let g = gen(&[2], 100.0);
        let rep = gershgorin_discs(&symmetrize(&g, AggState::Center).unwrap());
        let far = rep.discs[rep.far_end];
        assert!((far.center - 2.0).abs() < 1e-12);
        assert!((far.radius - 200f64.sqrt()).abs() < 1e-12);
        let other = rep.discs[1 - rep.far_end];
        assert!((other.center - 101.0).abs() < 1e-12);
        assert!((other.radius - 200f64.sqrt()).abs() < 1e-12);
        assert!(rep.far_end_isolated);

        let rep = gershgorin_discs(&symmetrize(&gen(&[2], 1.0), AggState::Center).unwrap());
        assert!(!rep.far_end_isolated);
    }

    #[test]
    fn transient_at_zero_is_initial() {
        let g = gen(&[2, 1], 3.0);
        let d = transient_from_state(&g, AggState::branch(1, 2), 0.0, TransientMethod::Spectral).unwrap();
        assert_eq!(d.probability(2), 1.0);
        assert!(transient_from_state(&g, AggState::Center, -1.0, TransientMethod::Spectral).is_err());
    }

    #[test]
    fn killed_transient_keeps_mass() {
        let net = PartiteNetwork::new(vec![2], 1.0).unwrap();
        let g = net.generator(&[AggState::Center]).unwrap();
        let d = transient_from_state(&g, AggState::branch(1, 2), 2.0, TransientMethod::Spectral).unwrap();
        let u = transient_from_state(&g, AggState::branch(1, 2), 2.0, TransientMethod::Uniformization).unwrap();
        for i in 0..3 {
            assert!((d.probability(i) - u.probability(i)).abs() < 1e-12);
        }
        let pt = absorption_spectrum(&g, AggState::Center).unwrap();
        assert!((phase_type_cdf(&pt, 2.0).unwrap() - d.probability(0)).abs() < 1e-10);
    }
}
