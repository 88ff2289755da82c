//! Sampler and goodness-of-fit checks against closed forms, the enumeration
//! oracle and structural invariants.

mod common;

use ergm_vi::gof::{
    bgof, degree_distribution, esp_distribution, geodesic_distribution, in_degree_distribution,
    out_degree_distribution,
};
use ergm_vi::oracle::{exact_distribution, graph_code};
use ergm_vi::sampler::{estimate_expected_stats, simulate_stats, stream_rng, tnt_step, Chain};
use ergm_vi::vi::{fit, FitConfig};
use ergm_vi::{
    CovariateTable, Heterogeneity, Model, ModelSpec, Network, SamplerConfig, StatisticTerm,
};
use proptest::prelude::*;

fn model(n: usize, terms: Vec<StatisticTerm>, directed: bool) -> Model {
    Model::new(
        ModelSpec::new(terms, Heterogeneity::None),
        &CovariateTable::new(n),
        n,
        directed,
    )
    .unwrap()
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (m, (v / xs.len() as f64).sqrt())
}

#[test]
fn uniform_law_edge_count() {
    let m = model(4, vec![StatisticTerm::Edges], false);
    let cfg = SamplerConfig {
        n_draws: 20_000,
        seed: 1,
        ..SamplerConfig::default()
    };
    let (es, _) =
        estimate_expected_stats(&[0.0], &m, &cfg, &Network::empty(4, false).unwrap()).unwrap();
    assert!((es[0] - 3.0).abs() < 0.1, "{}", es[0]);
}

#[test]
fn dyad_independent_edge_count() {
    let m = model(4, vec![StatisticTerm::Edges], false);
    let cfg = SamplerConfig {
        n_draws: 20_000,
        seed: 2,
        ..SamplerConfig::default()
    };
    let draws = simulate_stats(&Network::empty(4, false).unwrap(), &[-1.0], &m, &cfg, 0).unwrap();
    let edges: Vec<f64> = draws.iter().map(|(s, _)| s[0]).collect();
    let (mean, se) = mean_and_se(&edges);
    let exact = 6.0 * (-1f64).exp() / (1.0 + (-1f64).exp());
    assert!(
        (mean - exact).abs() < 3.0 * se,
        "{mean} vs {exact} (se {se})"
    );
}

#[test]
fn estimates_do_not_depend_on_the_start() {
    let m = model(
        8,
        vec![StatisticTerm::Edges, StatisticTerm::Triangle],
        false,
    );
    let theta = [-0.5, 0.2];
    let cfg = SamplerConfig {
        n_draws: 4000,
        seed: 3,
        ..SamplerConfig::default()
    };
    let empty = Network::empty(8, false).unwrap();
    let full = common::seeded_network(8, 1.0, false, 0);
    let a = simulate_stats(&empty, &theta, &m, &cfg, 0).unwrap();
    let b = simulate_stats(&full, &theta, &m, &cfg, 1).unwrap();
    for k in 0..2 {
        let (ma, sa) = mean_and_se(&a.iter().map(|(s, _)| s[k]).collect::<Vec<_>>());
        let (mb, sb) = mean_and_se(&b.iter().map(|(s, _)| s[k]).collect::<Vec<_>>());
        assert!(
            (ma - mb).abs() < 3.0 * sa.hypot(sb),
            "stat {k}: {ma} vs {mb}"
        );
    }
}

#[test]
fn detailed_balance_on_three_nodes() {
    let m = model(
        3,
        vec![StatisticTerm::Edges, StatisticTerm::Triangle],
        false,
    );
    let theta = [-0.4, 1.1];
    let pi = exact_distribution(&m, &theta).unwrap();
    let mut net = Network::empty(3, false).unwrap();
    let mut rng = stream_rng(4, 0);
    let steps = 2_000_000;
    let mut flow = [[0u64; 8]; 8];
    let mut visits = [0u64; 8];
    let mut state = graph_code(&net) as usize;
    for _ in 0..steps {
        tnt_step(&mut net, &theta, &m, 0.5, &mut rng).unwrap();
        let next = graph_code(&net) as usize;
        flow[state][next] += 1;
        visits[next] += 1;
        state = next;
    }
    for a in 0..8 {
        let freq = visits[a] as f64 / steps as f64;
        assert!(
            (freq - pi[a]).abs() < 0.01,
            "state {a}: {freq} vs {}",
            pi[a]
        );
        for (b, back) in flow.iter().enumerate().skip(a + 1) {
            let (ab, ba) = (flow[a][b] as f64, back[a] as f64);
            assert!(
                (ab - ba).abs() <= 4.0 * (ab + ba).sqrt() + 1.0,
                "{a}<->{b}: {ab} vs {ba}"
            );
        }
    }
}

#[test]
fn gof_reports_one_row_per_simulation_and_repeat() {
    let net = common::seeded_network(12, 0.3, false, 7);
    let m = model(12, vec![StatisticTerm::Edges], false);
    let f = fit(
        &m,
        &net,
        &FitConfig {
            max_iters: 300,
            ..FitConfig::default()
        },
    )
    .unwrap();
    let cfg = SamplerConfig {
        burnin: 500,
        seed: 9,
        ..SamplerConfig::default()
    };
    let one = bgof(&f, &m, &net, 1, &cfg).unwrap();
    assert!(one.families.iter().all(|fam| fam.simulated.len() == 1));
    let a = bgof(&f, &m, &net, 10, &cfg).unwrap();
    let b = bgof(&f, &m, &net, 10, &cfg).unwrap();
    assert_eq!(a, b);
    for fam in &a.families {
        for row in &fam.simulated {
            assert_eq!(row.len(), fam.bins.len());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chain_tracks_statistics(
        n in 3usize..9,
        directed in any::<bool>(),
        seed in any::<u64>(),
        b0 in -2.0f64..1.0,
        b1 in -1.0f64..1.0,
    ) {
        let terms = vec![StatisticTerm::Edges, StatisticTerm::Triangle, StatisticTerm::Gwesp { decay: 0.7 }];
        let m = model(n, terms, directed);
        let start = common::seeded_network(n, 0.3, directed, seed);
        let mut chain = Chain::new(&m, start, 0.5, stream_rng(seed, 0)).unwrap();
        for _ in 0..5 {
            chain.advance(m.terms(), &[b0, b1, 0.1], 50);
            let fresh = m.terms().compute(chain.network()).unwrap();
            for (a, b) in chain.stats().iter().zip(&fresh) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn gof_sum_constraints(n in 2usize..14, p in 0.0f64..1.0, directed in any::<bool>(), seed in any::<u64>()) {
        let net = common::seeded_network(n, p, directed, seed);
        let pairs = if directed { n * (n - 1) } else { n * (n - 1) / 2 };
        prop_assert_eq!(geodesic_distribution(&net).iter().sum::<u64>() as usize, pairs);
        prop_assert_eq!(esp_distribution(&net).iter().sum::<u64>() as usize, net.edge_count());
        if directed {
            prop_assert_eq!(out_degree_distribution(&net).iter().sum::<u64>() as usize, n);
            prop_assert_eq!(in_degree_distribution(&net).iter().sum::<u64>() as usize, n);
        } else {
            let d = degree_distribution(&net);
            prop_assert_eq!(d.iter().sum::<u64>() as usize, n);
            let half_degree: u64 = d.iter().enumerate().map(|(k, c)| k as u64 * c).sum();
            prop_assert_eq!(half_degree as usize, 2 * net.edge_count());
            prop_assert_eq!(geodesic_distribution(&net)[0] as usize, net.edge_count());
        }
    }
}
