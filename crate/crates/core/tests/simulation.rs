use csma_partite::montecarlo::{
    ks_critical_value, ks_statistic, occupation, sample_hitting_time_with, simulate_full, simulate_trajectory,
    FullClock, KsLevel, SampleSet,
};
use csma_partite::spectral::Propagator;
use csma_partite::{
    absorption_spectrum, mean_hitting_time, tv_distance, AggState, Distribution, FullState, HittingQuery,
    PartiteNetwork,
};

#[test]
fn per_node_clocks_reproduce_aggregated_occupation() {
    let net = PartiteNetwork::new(vec![2, 3], 1.5).unwrap();
    let gen = net.generator(&[]).unwrap();
    let gap = Propagator::new(&gen).unwrap().spectral_gap();
    let horizon = 2e4;
    let band = 4.0 / (horizon * gap).sqrt();
    let pi = net.stationary_agg();
    for (seed, clock) in [(1, FullClock::PerNode), (2, FullClock::Aggregated)] {
        let tr = simulate_full(&net, FullState::EMPTY, seed, horizon, clock).unwrap();
        let tv = tv_distance(&occupation(&net, &tr).unwrap(), &pi).unwrap();
        assert!(tv < band, "{clock:?}: {tv} vs {band}");
    }
    let tr = simulate_trajectory(&gen, AggState::Center, 3, horizon).unwrap();
    let occ = Distribution::from_weights(gen.states().to_vec(), &tr.occupation(gen.states()).unwrap()).unwrap();
    assert!(tv_distance(&occ, &pi).unwrap() < band);
}

#[test]
fn sample_means_track_exact_means() {
    let cases: [(&[usize], f64, AggState, AggState); 3] = [
        (&[3], 3.0, AggState::branch(1, 3), AggState::Center),
        (&[2, 2], 2.0, AggState::branch(1, 2), AggState::branch(2, 2)),
        (&[1, 2, 1], 1.0, AggState::Center, AggState::branch(2, 2)),
    ];
    for (i, (sizes, nu, from, to)) in cases.into_iter().enumerate() {
        let gen = PartiteNetwork::new(sizes.to_vec(), nu).unwrap().generator(&[]).unwrap();
        let q = HittingQuery::new(from, to).unwrap();
        let exact = mean_hitting_time(&gen, q).unwrap();
        let s: SampleSet = sample_hitting_time_with(&gen, q, 5000, 500 + i as u64, 2).unwrap();
        assert!((s.mean() - exact).abs() < 3.0 * s.std_error(), "{sizes:?}: {} vs {exact}", s.mean());
    }
}

#[test]
fn escape_times_follow_phase_type_law() {
    for (l, nu) in [(2usize, 4.0), (3, 2.0)] {
        let gen = PartiteNetwork::new(vec![l], nu).unwrap().generator(&[]).unwrap();
        let pt = absorption_spectrum(&gen, AggState::Center).unwrap();
        let q = HittingQuery::new(AggState::branch(1, l), AggState::Center).unwrap();
        let s = sample_hitting_time_with(&gen, q, 8000, 900 + l as u64, 1).unwrap();
        let d = ks_statistic(&s.values, &pt).unwrap();
        assert!(d < ks_critical_value(s.len(), KsLevel::P01), "L={l}: {d}");
    }
}

#[test]
fn sample_export_is_index_value_csv() {
    let gen = PartiteNetwork::new(vec![1], 2.0).unwrap().generator(&[]).unwrap();
    let q = HittingQuery::new(AggState::Center, AggState::branch(1, 1)).unwrap();
    let s = sample_hitting_time_with(&gen, q, 12, 3, 1).unwrap();
    let csv = s.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "index,value");
    assert_eq!(lines.len(), 13);
    assert!(lines[5].starts_with("4,"));
}
