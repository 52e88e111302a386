use std::collections::BTreeMap;

use proptest::prelude::*;

use csma_partite::hitting::line_position;
use csma_partite::mixing::{coupling_time_mean, DistanceCurve};
use csma_partite::spectral::transient_from_state;
use csma_partite::{
    absorption_spectrum, aggregate, balance_residual, bd_step_mean, detailed_balance_defect, excursion_pmf,
    limit_law_cdf, mean_hitting_time, phase_type_cdf, stationary_full, symmetrize, AggState, Exec, HittingQuery,
    LimitLaw, PartiteNetwork, Step, TransientMethod,
};

fn sizes(max_k: usize, max_l: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1..=max_l, 1..=max_k)
}

fn nu() -> impl Strategy<Value = f64> {
    (-1.0f64..2.0).prop_map(|e| 10f64.powf(e))
}

fn states(net: &PartiteNetwork) -> Vec<AggState> {
    net.agg_states()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stationary_law_balances_and_lumps(sz in sizes(3, 4), nu in nu()) {
        let net = PartiteNetwork::new(sz, nu).unwrap();
        let gen = net.generator(&[]).unwrap();
        let pi = net.stationary_agg();
        prop_assert!(balance_residual(&gen, &pi).unwrap() < 1e-10);
        prop_assert!(detailed_balance_defect(&gen, &pi).unwrap() < 1e-12);
        let lumped = aggregate(&stationary_full(&net).unwrap(), &net).unwrap();
        for (a, b) in lumped.probabilities().iter().zip(pi.probabilities()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetrized_matrix_is_similar_to_killed_generator(sz in sizes(2, 4), nu in nu(), pick in 0usize..64) {
        let net = PartiteNetwork::new(sz, nu).unwrap();
        let all = states(&net);
        let absorb = all[pick % all.len()];
        let gen = net.generator(&[absorb]).unwrap();
        let sym = symmetrize(&gen, absorb).unwrap();
        let d = sym.dim();
        let scale = (0..d).map(|i| sym.entry(i, i).abs()).fold(0.0, f64::max);
        for i in 0..d {
            for j in 0..d {
                prop_assert!((sym.entry(i, j) - sym.entry(j, i)).abs() <= 1e-12 * scale);
            }
        }
        let idx: Vec<usize> = sym.transient_states().iter().map(|s| gen.index_of(*s).unwrap()).collect();
        let q = nalgebra::DMatrix::from_fn(d, d, |r, c| gen.q(idx[r], idx[c]));
        let mut want: Vec<f64> = q.complex_eigenvalues().iter().map(|z| z.re.abs()).collect();
        let mut got: Vec<f64> = sym.raw_eigenvalues().iter().map(|v| v.abs()).collect();
        want.sort_by(f64::total_cmp);
        got.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-8 * scale.max(1.0), "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn step_means_sum_to_passage_means(sz in sizes(2, 4), nu in nu(), a in 0usize..64, b in 0usize..64) {
        let net = PartiteNetwork::new(sz, nu).unwrap();
        let all = states(&net);
        let (from, to) = (all[a % all.len()], all[b % all.len()]);
        prop_assume!(from != to);
        let exact = mean_hitting_time(&net.generator(&[]).unwrap(), HittingQuery::new(from, to).unwrap()).unwrap();
        let (x, y) = (line_position(&net, from).unwrap(), line_position(&net, to).unwrap());
        let sum: f64 = if x < y {
            (x..y).map(|p| bd_step_mean(&net, p, Step::Up).unwrap()).sum()
        } else {
            ((y + 1)..=x).map(|p| bd_step_mean(&net, p, Step::Down).unwrap()).sum()
        };
        prop_assert!((sum / exact - 1.0).abs() < 1e-10, "{sum} vs {exact}");
    }

    #[test]
    fn excursion_pmf_sums_by_total(sz in prop::collection::vec(1usize..=5, 2..=3), k2 in 1usize..=3, cap in 0u64..12) {
        let k2 = 1 + (k2 - 1) % sz.len();
        let net = PartiteNetwork::new(sz.clone(), 1.0).unwrap();
        let others: Vec<usize> = (1..=sz.len()).filter(|&k| k != k2).collect();
        let mut total = 0.0;
        let mut stack = vec![Vec::<u64>::new()];
        while let Some(prefix) = stack.pop() {
            let used: u64 = prefix.iter().sum();
            if prefix.len() == others.len() {
                let counts: BTreeMap<usize, u64> = others.iter().copied().zip(prefix).collect();
                total += excursion_pmf(&net, k2, &counts).unwrap();
                continue;
            }
            for n in 0..=(cap - used) {
                let mut next = prefix.clone();
                next.push(n);
                stack.push(next);
            }
        }
        // geometric number of excursions: P(Σ N ≤ cap) = 1 − (1 − p)^{cap+1}
        let p = sz[k2 - 1] as f64 / sz.iter().sum::<usize>() as f64;
        let want = 1.0 - (1.0 - p).powi(cap as i32 + 1);
        prop_assert!((total - want).abs() < 1e-12, "{total} vs {want}");
    }

    #[test]
    fn limit_law_has_unit_mean(pstar in 0.05f64..0.95, indicator in 0u8..=1) {
        let law = LimitLaw::new(pstar, indicator).unwrap();
        // E X = ∫ (1 − F), piecewise Simpson on a long range
        let upper = 60.0 / law.continuous_rate();
        let n = 20_000;
        let h = upper / n as f64;
        let mut s = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * (1.0 - limit_law_cdf(&law, i as f64 * h).unwrap());
        }
        prop_assert!((s * h / 3.0 - 1.0).abs() < 1e-6, "{}", s * h / 3.0);
        prop_assert!((law.mean_m() - (indicator as f64 + pstar / (1.0 - pstar))).abs() < 1e-12);
    }

    #[test]
    fn phase_type_cdf_matches_absorbed_mass(l in 1usize..=4, nu in (-0.3f64..1.3).prop_map(|e| 10f64.powf(e))) {
        let net = PartiteNetwork::new(vec![l], nu).unwrap();
        let gen = net.generator(&[AggState::Center]).unwrap();
        let pt = absorption_spectrum(&gen, AggState::Center).unwrap();
        prop_assume!(pt.min_relative_gap() > 1e-6);
        for i in 0..20 {
            let t = pt.mean() * 10f64.powf(-2.0 + 3.0 * i as f64 / 19.0);
            let mass = transient_from_state(&gen, AggState::branch(1, l), t, TransientMethod::Uniformization)
                .unwrap()
                .probability_of(&AggState::Center)
                .unwrap();
            let f = phase_type_cdf(&pt, t).unwrap();
            prop_assert!((f - mass).abs() < 1e-8, "t={t} cdf={f} mass={mass}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn worst_case_distance_is_nonincreasing(sz in sizes(3, 3), nu in nu()) {
        let net = PartiteNetwork::new(sz, nu).unwrap();
        let curve = DistanceCurve::new(&net, Exec::Sequential).unwrap();
        let mut prev = 1.0 + 1e-12;
        for i in 0..30 {
            let t = 10f64.powf(-2.0 + 7.0 * i as f64 / 29.0);
            let d = curve.at(t).unwrap();
            prop_assert!(d <= prev + 1e-10, "d({t}) = {d} > {prev}");
            prev = d;
        }
    }

    #[test]
    fn coupling_bound_dominates_distance(l1 in 1usize..=3, l2 in 1usize..=3, nu in nu()) {
        let net = PartiteNetwork::new(vec![l1, l2], nu).unwrap();
        let curve = DistanceCurve::new(&net, Exec::Sequential).unwrap();
        let bound = coupling_time_mean(&net).unwrap();
        for i in 0..20 {
            let t = bound * 10f64.powf(-2.0 + 4.0 * i as f64 / 19.0);
            prop_assert!(curve.at(t).unwrap() <= bound / t + 1e-10);
        }
    }
}
