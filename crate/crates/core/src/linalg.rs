//! Numerical kernels for reversible killed chains.
//!
//! First-passage systems `(−T) h = b` are solved by state reduction with
//! diagonals recomputed as sums of off-diagonal rates (the GTH variant of
//! Gaussian elimination). Every operation is a sum or product of
//! nonnegative numbers, so each entry of `(−T)^{-1}` comes out with
//! relative accuracy near machine precision even when the chain is
//! extremely stiff (ν large, mean passage times ~ ν^{L−1}). Plain
//! LU factorization loses all digits there.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::Generator;

/// Killed chain restricted to a list of transient generator states.
#[derive(Debug, Clone)]
pub(crate) struct KilledSystem {
    /// Generator indices of the transient states, in system order.
    pub states: Vec<usize>,
    /// Transient-to-transient rates, row-major `m × m`.
    rates: Vec<f64>,
    /// Rate from each transient state into the absorbing set.
    sink: Vec<f64>,
}

/// Eliminated form of a [`KilledSystem`], ready for repeated solves.
#[derive(Debug, Clone)]
pub(crate) struct Reduced {
    m: usize,
    factor: Vec<f64>,
    pivots: Vec<f64>,
}

impl KilledSystem {
    /// Kills `targets` in `gen` and keeps the listed transient states.
    ///
    /// Rates into states outside `transient ∪ targets` are dropped; callers
    /// pass a transient set closed under the dynamics until absorption.
    pub fn new(gen: &Generator, transient: Vec<usize>, targets: &[usize]) -> Self {
        let m = transient.len();
        let mut rates = vec![0.0; m * m];
        let mut sink = vec![0.0; m];
        for (a, &x) in transient.iter().enumerate() {
            if gen.is_absorbing(x) {
                continue;
            }
            for (b, &y) in transient.iter().enumerate() {
                if a != b {
                    rates[a * m + b] = gen.rate(x, y);
                }
            }
            sink[a] = targets.iter().map(|&t| gen.rate(x, t)).sum();
        }
        Self { states: transient, rates, sink }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    /// Runs the elimination. Fails when some transient state cannot reach
    /// the absorbing set.
    pub fn reduce(&self) -> Result<Reduced> {
        let m = self.len();
        let mut r = self.rates.clone();
        let mut sink = self.sink.clone();
        let mut pivots = vec![0.0; m];
        for z in (0..m).rev() {
            let total: f64 = r[z * m..z * m + z].iter().sum::<f64>() + sink[z];
            if !(total > 0.0) {
                return Err(Error::Unreachable(format!(
                    "transient state #{} cannot reach the target",
                    self.states[z]
                )));
            }
            pivots[z] = total;
            for x in 0..z {
                let f = r[x * m + z] / total;
                if f == 0.0 {
                    continue;
                }
                for y in 0..z {
                    if y != x {
                        r[x * m + y] += f * r[z * m + y];
                    }
                }
                sink[x] += f * sink[z];
            }
        }
        Ok(Reduced { m, factor: r, pivots })
    }
}

impl Reduced {
    /// Solves `(−T) h = b` for nonnegative `b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let m = self.m;
        let r = &self.factor;
        let mut rhs = b.to_vec();
        for z in (0..m).rev() {
            let bz = rhs[z] / self.pivots[z];
            if bz == 0.0 {
                continue;
            }
            for x in 0..z {
                rhs[x] += r[x * m + z] * bz;
            }
        }
        let mut h = vec![0.0; m];
        for z in 0..m {
            let acc: f64 = (0..z).map(|y| r[z * m + y] * h[y]).sum();
            h[z] = (rhs[z] + acc) / self.pivots[z];
        }
        h
    }

    /// `(−T)^{-1}`: entry `(x, y)` is the expected time spent in `y` before
    /// absorption when starting from `x`. Row-major.
    pub fn green_matrix(&self) -> Vec<f64> {
        let m = self.m;
        let mut g = vec![0.0; m * m];
        let mut e = vec![0.0; m];
        for y in 0..m {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[y] = 1.0;
            let col = self.solve(&e);
            for x in 0..m {
                g[x * m + y] = col[x];
            }
        }
        g
    }
}

/// Natural-log detailed-balance weights over `subset` (generator indices),
/// propagated along transitions inside the subset. Each connected piece is
/// anchored at its first state with weight 0.
pub(crate) fn detailed_balance_log_weights(gen: &Generator, subset: &[usize]) -> Result<Vec<f64>> {
    let m = subset.len();
    let mut w = vec![f64::NAN; m];
    for root in 0..m {
        if !w[root].is_nan() {
            continue;
        }
        w[root] = 0.0;
        let mut stack = vec![root];
        while let Some(a) = stack.pop() {
            let x = subset[a];
            for b in 0..m {
                if a == b {
                    continue;
                }
                let y = subset[b];
                let fwd = if gen.is_absorbing(x) { 0.0 } else { gen.rate(x, y) };
                let back = if gen.is_absorbing(y) { 0.0 } else { gen.rate(y, x) };
                if fwd == 0.0 && back == 0.0 {
                    continue;
                }
                if fwd == 0.0 || back == 0.0 {
                    return Err(Error::Structure(format!(
                        "transition {} -> {} has no reverse rate; chain is not reversible",
                        gen.states()[x],
                        gen.states()[y]
                    )));
                }
                let candidate = w[a] + fwd.ln() - back.ln();
                if w[b].is_nan() {
                    w[b] = candidate;
                    stack.push(b);
                } else if (w[b] - candidate).abs() > 1e-9 * (1.0 + candidate.abs()) {
                    return Err(Error::Structure("rates violate Kolmogorov's cycle criterion".into()));
                }
            }
        }
    }
    Ok(w)
}

/// Connected pieces of `subset` under transitions that stay inside it.
pub(crate) fn connected_pieces(gen: &Generator, subset: &[usize]) -> Vec<Vec<usize>> {
    let m = subset.len();
    let mut label = vec![usize::MAX; m];
    let mut pieces = Vec::new();
    for root in 0..m {
        if label[root] != usize::MAX {
            continue;
        }
        let id = pieces.len();
        label[root] = id;
        let mut members = vec![root];
        let mut stack = vec![root];
        while let Some(a) = stack.pop() {
            for b in 0..m {
                if label[b] == usize::MAX
                    && (gen.rate(subset[a], subset[b]) > 0.0 || gen.rate(subset[b], subset[a]) > 0.0)
                {
                    label[b] = id;
                    members.push(b);
                    stack.push(b);
                }
            }
        }
        members.sort_unstable();
        pieces.push(members.into_iter().map(|a| subset[a]).collect());
    }
    pieces
}

/// Eigenpairs of a symmetric matrix sorted by ascending eigenvalue;
/// `vectors[k]` is the unit eigenvector for `values[k]`.
#[derive(Debug, Clone)]
pub(crate) struct SortedEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

pub(crate) fn symmetric_eigen(n: usize, entries: &[f64]) -> SortedEigen {
    let mat = DMatrix::from_row_slice(n, n, entries);
    let eig = SymmetricEigen::new(mat);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = order
        .iter()
        .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
        .collect();
    SortedEigen { values, vectors }
}

/// Largest absolute row sum.
pub(crate) fn inf_norm(n: usize, entries: &[f64]) -> f64 {
    (0..n)
        .map(|i| entries[i * n..(i + 1) * n].iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AggState, PartiteNetwork};

    fn killed(sizes: &[usize], nu: f64, target: AggState) -> (Generator, KilledSystem) {
        let net = PartiteNetwork::new(sizes.to_vec(), nu).unwrap();
        let gen = net.generator(&[]).unwrap();
        let t = gen.index_of(target).unwrap();
        let transient: Vec<usize> = (0..gen.len()).filter(|&i| i != t).collect();
        let sys = KilledSystem::new(&gen, transient, &[t]);
        (gen, sys)
    }

    #[test]
    fn green_matrix_inverts_killed_generator() {
        let (gen, sys) = killed(&[2, 3], 2.5, AggState::branch(2, 2));
        let g = sys.reduce().unwrap().green_matrix();
        let m = sys.len();
        for a in 0..m {
            for b in 0..m {
                let mut acc = 0.0;
                for c in 0..m {
                    let (x, z) = (sys.states[a], sys.states[c]);
                    let minus_t = if a == c { gen.out_rate(x) } else { -gen.rate(x, z) };
                    acc += minus_t * g[c * m + b];
                }
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((acc - expect).abs() < 1e-12, "({a},{b}) = {acc}");
            }
        }
    }

    #[test]
    fn green_matrix_is_reversible() {
        // g(x,y)/w(y) is symmetric for the detailed-balance weights w.
        let (gen, sys) = killed(&[3, 1, 2], 4.0, AggState::Center);
        let g = sys.reduce().unwrap().green_matrix();
        let w = detailed_balance_log_weights(&gen, &(0..gen.len()).collect::<Vec<_>>()).unwrap();
        let m = sys.len();
        for a in 0..m {
            for b in 0..m {
                let (x, y) = (sys.states[a], sys.states[b]);
                let lhs = g[a * m + b] / w[y].exp();
                let rhs = g[b * m + a] / w[x].exp();
                assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn trap_is_reported_unreachable() {
        let net = PartiteNetwork::new(vec![2, 2], 1.0).unwrap();
        let gen = net.generator(&[AggState::branch(2, 2)]).unwrap();
        let t = gen.index_of(AggState::branch(1, 2)).unwrap();
        let transient: Vec<usize> = (0..gen.len()).filter(|&i| i != t).collect();
        let sys = KilledSystem::new(&gen, transient, &[t]);
        assert!(matches!(sys.reduce(), Err(Error::Unreachable(_))));
    }

    #[test]
    fn pieces_of_star_minus_center() {
        let net = PartiteNetwork::new(vec![2, 1, 3], 1.0).unwrap();
        let gen = net.generator(&[]).unwrap();
        let subset: Vec<usize> = (1..gen.len()).collect();
        let pieces = connected_pieces(&gen, &subset);
        assert_eq!(pieces, vec![vec![1, 2], vec![3], vec![4, 5, 6]]);
    }

    #[test]
    fn sorted_eigen_ascending() {
        let e = symmetric_eigen(2, &[2.0, 1.0, 1.0, 2.0]);
        assert!((e.values[0] - 1.0).abs() < 1e-14 && (e.values[1] - 3.0).abs() < 1e-14);
        let v = &e.vectors[0];
        assert!((v[0] + v[1]).abs() < 1e-14);
    }
}
