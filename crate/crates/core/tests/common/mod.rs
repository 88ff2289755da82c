//! Helpers shared by the integration tests.
#![allow(dead_code)]

use ergm_vi::{CovariateTable, Network, StatisticTerm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Bernoulli random graph with tie probability `p`.
pub fn random_network(n: usize, p: f64, directed: bool, rng: &mut impl Rng) -> Network {
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && (directed || i < j) && rng.random::<f64>() < p {
                pairs.push((i, j));
            }
        }
    }
    Network::from_edge_list(&pairs, n, directed).unwrap()
}

pub fn seeded_network(n: usize, p: f64, directed: bool, seed: u64) -> Network {
    random_network(n, p, directed, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Covariates `x` (nodal) and `w` (dyadic, zero diagonal) with random values.
pub fn covariates(n: usize, rng: &mut impl Rng) -> CovariateTable {
    let mut cov = CovariateTable::new(n);
    cov.insert_nodal("x", (0..n).map(|_| rng.random_range(-2.0..2.0)).collect())
        .unwrap();
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                w[i * n + j] = rng.random_range(-1.0..1.0);
            }
        }
    }
    cov.insert_dyadic("w", w).unwrap();
    cov
}

/// Every term kind valid for the given directedness.
pub fn all_terms(directed: bool) -> Vec<StatisticTerm> {
    use StatisticTerm as T;
    let mut terms = vec![
        T::Edges,
        T::Triangle,
        T::Gwesp { decay: 0.5 },
        T::Gwesp { decay: 1.3 },
        T::Edgecov { attr: "w".into() },
        T::Absdiff { attr: "x".into() },
    ];
    if directed {
        terms.extend([
            T::Mutual,
            T::Twopath,
            T::Idegree { k: 0 },
            T::Idegree { k: 2 },
            T::Odegree { k: 1 },
            T::Odegree { k: 3 },
            T::Ostar { k: 2 },
            T::Ostar { k: 3 },
            T::Gwodegree { decay: 0.5 },
            T::NodecovOut { attr: "x".into() },
            T::NodecovIn { attr: "x".into() },
        ]);
    } else {
        terms.extend([
            T::Kstar { k: 1 },
            T::Kstar { k: 2 },
            T::Kstar { k: 3 },
            T::Gwdegree { decay: 0.5 },
            T::Gwdegree { decay: 2.0 },
            T::Nodecov { attr: "x".into() },
        ]);
    }
    terms
}

/// Whether a term takes non-integer values.
pub fn is_real_valued(term: &StatisticTerm) -> bool {
    use StatisticTerm as T;
    matches!(
        term,
        T::Gwesp { .. }
            | T::Gwdegree { .. }
            | T::Gwodegree { .. }
            | T::Nodecov { .. }
            | T::NodecovOut { .. }
            | T::NodecovIn { .. }
            | T::Edgecov { .. }
            | T::Absdiff { .. }
    )
}
