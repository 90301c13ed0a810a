#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use sparse_cdma::bp::FactorGraph;
use sparse_cdma::channel::{random_bits, sigma0_sq_from_psd_db, transmit};
use sparse_cdma::ensembles::{sample_signature, EnsembleKind, EnsembleSpec, Entry, SignatureMatrix};

/// Random bipartite tree on `users` users with BPSK-like gains, plus a noisy
/// received vector. Returns the graph at the Nishimori point.
pub fn tree_instance(users: usize, psd_db: f64, seed: u64) -> FactorGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chips: Vec<Vec<usize>> = Vec::new();
    for u in 1..users {
        if !chips.is_empty() && rng.random_bool(0.4) {
            let a = rng.random_range(0..chips.len());
            chips[a].push(u);
        } else {
            let v = rng.random_range(0..u);
            chips.push(vec![v, u]);
        }
    }
    // leaf chips; every user needs at least one chip
    let mut covered = vec![false; users];
    for c in &chips {
        for &u in c {
            covered[u] = true;
        }
    }
    for (u, &c) in covered.iter().enumerate() {
        if !c || rng.random_bool(0.2) {
            chips.push(vec![u]);
        }
    }
    let gain = 1.0 / 3f64.sqrt();
    let mut entries = Vec::new();
    for (a, c) in chips.iter().enumerate() {
        for &u in c {
            let g = if rng.random_bool(0.5) { gain } else { -gain };
            entries.push(Entry { chip: a, user: u, gain: g });
        }
    }
    let s = SignatureMatrix::from_entries(chips.len(), users, EnsembleKind::Regular, 3.0, 3.0, entries).unwrap();
    let bits: Vec<i8> = (0..users).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
    let sigma0_sq = sigma0_sq_from_psd_db(psd_db);
    let noise = Normal::new(0.0, sigma0_sq.sqrt()).unwrap();
    let y: Vec<f64> = s.apply(&bits).into_iter().map(|v| v + noise.sample(&mut rng)).collect();
    FactorGraph::new(&s, &y, sigma0_sq, 1.0).unwrap()
}

/// Regular C:L instance with `chips` chips at the Nishimori point.
pub fn regular_instance(c: usize, l: usize, chips: usize, psd_db: f64, seed: u64) -> FactorGraph {
    let spec = EnsembleSpec::regular(c, l, chips).unwrap();
    let s = sample_signature(&spec, seed).unwrap();
    let inst = transmit(&s, &random_bits(spec.users, seed), sigma0_sq_from_psd_db(psd_db), seed).unwrap();
    FactorGraph::nishimori(&s, &inst).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
