//! Exact rational oracles: first-passage means and stationary laws solved by
//! Gaussian elimination over `BigRational` for integer `ν`.

use num_bigint::BigInt;
use num_rational::BigRational;

use csma_partite::{mean_hitting_time, AggState, HittingQuery, PartiteNetwork};

fn zero() -> BigRational {
    BigRational::from_integer(BigInt::from(0))
}

fn to_f64(x: &BigRational) -> f64 {
    // fixed-point through a decimal string keeps far more than 17 digits
    let scale = BigInt::from(10).pow(30);
    let q = (x.numer() * &scale) / x.denom();
    q.to_string().parse::<f64>().unwrap() / 1e30
}

fn int(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// Rate matrix of the aggregated chain with integer `ν`.
fn rates(sizes: &[usize], nu: i64) -> (Vec<AggState>, Vec<Vec<BigRational>>) {
    let mut states = vec![AggState::Center];
    for (k, &l) in sizes.iter().enumerate() {
        for i in 1..=l {
            states.push(AggState::branch(k + 1, i));
        }
    }
    let n = states.len();
    let mut q = vec![vec![zero(); n]; n];
    let idx = |s: AggState| states.iter().position(|&x| x == s).unwrap();
    for (k, &l) in sizes.iter().enumerate() {
        let k = k + 1;
        q[0][idx(AggState::branch(k, 1))] = int(l as i64 * nu);
        for i in 1..=l {
            let here = idx(AggState::branch(k, i));
            let down = if i == 1 { 0 } else { idx(AggState::branch(k, i - 1)) };
            q[here][down] = int(i as i64);
            if i < l {
                q[here][idx(AggState::branch(k, i + 1))] = int((l - i) as i64 * nu);
            }
        }
    }
    (states, q)
}

fn solve(mut a: Vec<Vec<BigRational>>, mut b: Vec<BigRational>) -> Vec<BigRational> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).find(|&r| a[r][c] != zero()).expect("nonsingular");
        a.swap(c, p);
        b.swap(c, p);
        for r in 0..n {
            if r != c && a[r][c] != zero() {
                let f = &a[r][c] / &a[c][c];
                let pivot = a[c].clone();
                for (dst, src) in a[r][c..].iter_mut().zip(&pivot[c..]) {
                    *dst -= &f * src;
                }
                let v = &f * &b[c];
                b[r] -= v;
            }
        }
    }
    (0..n).map(|i| &b[i] / &a[i][i]).collect()
}

fn exact_mean(sizes: &[usize], nu: i64, from: AggState, to: AggState) -> f64 {
    let (states, q) = rates(sizes, nu);
    let t = states.iter().position(|&s| s == to).unwrap();
    let keep: Vec<usize> = (0..states.len()).filter(|&i| i != t).collect();
    // −Q_TT h = 1
    let a: Vec<Vec<BigRational>> = keep
        .iter()
        .map(|&i| {
            let out: BigRational = q[i].iter().fold(zero(), |s, v| s + v);
            keep.iter().map(|&j| if i == j { out.clone() } else { -q[i][j].clone() }).collect()
        })
        .collect();
    let h = solve(a, vec![int(1); keep.len()]);
    let pos = keep.iter().position(|&i| states[i] == from).unwrap();
    to_f64(&h[pos])
}

#[test]
fn hitting_means_match_rational_solve() {
    let cases: [(&[usize], i64, AggState, AggState); 6] = [
        (&[1], 7, AggState::branch(1, 1), AggState::Center),
        (&[3], 100, AggState::branch(1, 3), AggState::Center),
        (&[4], 1000, AggState::branch(1, 4), AggState::Center),
        (&[2, 3], 1000, AggState::branch(1, 2), AggState::branch(2, 3)),
        (&[3, 3, 2], 10_000, AggState::branch(1, 3), AggState::branch(3, 2)),
        (&[2, 3, 2], 50, AggState::Center, AggState::branch(2, 3)),
    ];
    for (sizes, nu, from, to) in cases {
        let want = exact_mean(sizes, nu, from, to);
        let net = PartiteNetwork::new(sizes.to_vec(), nu as f64).unwrap();
        let got = mean_hitting_time(&net.generator(&[]).unwrap(), HittingQuery::new(from, to).unwrap()).unwrap();
        assert!((got / want - 1.0).abs() < 1e-13, "{sizes:?} nu={nu}: {got} vs {want}");
    }
}

#[test]
fn single_node_mean_is_one() {
    assert_eq!(exact_mean(&[1], 7, AggState::branch(1, 1), AggState::Center), 1.0);
}

#[test]
fn stationary_law_matches_rational_balance() {
    for (sizes, nu) in [(&[3usize, 2][..], 10i64), (&[2, 2, 2][..], 3), (&[4][..], 1000)] {
        let (states, q) = rates(sizes, nu);
        let n = states.len();
        // π Q = 0 with π_0 = 1, then normalize
        let mut a = vec![vec![zero(); n]; n];
        let mut b = vec![zero(); n];
        for j in 0..n {
            for i in 0..n {
                a[j][i] = if i == j {
                    -q[i].iter().fold(zero(), |s, v| s + v)
                } else {
                    q[i][j].clone()
                };
            }
        }
        a[0] = (0..n).map(|i| if i == 0 { int(1) } else { zero() }).collect();
        b[0] = int(1);
        let w = solve(a, b);
        let total = w.iter().fold(zero(), |s, v| s + v);
        let net = PartiteNetwork::new(sizes.to_vec(), nu as f64).unwrap();
        let pi = net.stationary_agg();
        for (i, s) in states.iter().enumerate() {
            let want = to_f64(&(&w[i] / &total));
            let got = pi.probability_of(s).unwrap();
            assert!((got - want).abs() <= 1e-15 + 1e-13 * want, "{s}: {got} vs {want}");
        }
    }
}
