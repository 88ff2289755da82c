//! Fixtures shared by the benchmarks.

use ergm_vi::{CovariateTable, Heterogeneity, Model, ModelSpec, Network, StatisticTerm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Bernoulli random graph with tie probability `p`.
pub fn random_network(n: usize, p: f64, directed: bool, seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && (directed || i < j) && rng.random::<f64>() < p {
                pairs.push((i, j));
            }
        }
    }
    Network::from_edge_list(&pairs, n, directed).expect("valid pairs")
}

/// Directed model with structural terms and sender/receiver effects.
pub fn directed_model(n: usize) -> Model {
    let terms = vec![
        StatisticTerm::Edges,
        StatisticTerm::Mutual,
        StatisticTerm::Gwesp { decay: 0.5 },
        StatisticTerm::Gwodegree { decay: 0.5 },
    ];
    Model::new(
        ModelSpec::new(terms, Heterogeneity::DirectedSenderReceiver),
        &CovariateTable::new(n),
        n,
        true,
    )
    .expect("valid model")
}

/// Undirected model with triangle-type terms and sociality effects.
pub fn undirected_model(n: usize) -> Model {
    let terms = vec![
        StatisticTerm::Gwesp { decay: 0.5 },
        StatisticTerm::Gwdegree { decay: 0.5 },
        StatisticTerm::Triangle,
    ];
    Model::new(
        ModelSpec::new(terms, Heterogeneity::UndirectedGamma),
        &CovariateTable::new(n),
        n,
        false,
    )
    .expect("valid model")
}
