//! Independent oracles and input generators shared by the integration tests.
#![allow(dead_code)]

use cooc::model::{CoocModel, FitMeta, GroupHistogram, Grouping};
use cooc::rng::SplitMix64;
use cooc::{IndexDomain, SignificanceMap};

/// `log2 C(n, m)` from a sum of integer logarithms.
pub fn log2_binomial(n: usize, m: usize) -> f64 {
    let m = m.min(n - m);
    (0..m).map(|i| ((n - i) as f64).log2() - ((i + 1) as f64).log2()).sum()
}

/// Exact minimum of `sum_p cost[p * K + a(p)]` over assignments with group
/// `k` receiving exactly `lens[k]` indices, by exhaustive enumeration.
pub fn brute_force_assignment(cost: &[f64], lens: &[usize]) -> f64 {
    fn go(p: usize, n: usize, cost: &[f64], left: &mut Vec<usize>, acc: f64, best: &mut f64) {
        if p == n {
            *best = best.min(acc);
            return;
        }
        let k_count = left.len();
        for k in 0..k_count {
            if left[k] > 0 {
                left[k] -= 1;
                go(p + 1, n, cost, left, acc + cost[p * k_count + k], best);
                left[k] += 1;
            }
        }
    }
    let n: usize = lens.iter().sum();
    let mut best = f64::INFINITY;
    go(0, n, cost, &mut lens.to_vec(), 0.0, &mut best);
    best
}

pub fn assignment_cost(cost: &[f64], grouping: &Grouping) -> f64 {
    let k = grouping.num_groups();
    grouping
        .assignment()
        .iter()
        .enumerate()
        .map(|(p, &g)| cost[p * k + g])
        .sum()
}

/// Every map on a small domain.
pub fn all_maps(domain: IndexDomain) -> Vec<SignificanceMap> {
    let n = domain.size();
    assert!(n <= 16);
    (0u32..1 << n)
        .map(|bits| SignificanceMap::from_indices(domain, (0..n).filter(|p| bits >> p & 1 == 1)).unwrap())
        .collect()
}

pub fn random_maps(rng: &mut SplitMix64, domain: IndexDomain, count: usize, density: f64) -> Vec<SignificanceMap> {
    (0..count)
        .map(|_| {
            let mut y = SignificanceMap::empty(domain);
            for p in 0..domain.size() {
                if rng.bernoulli(density) {
                    y.insert(p);
                }
            }
            y
        })
        .collect()
}

pub fn random_grouping(rng: &mut SplitMix64, domain: IndexDomain, s: usize) -> Grouping {
    let mut order: Vec<usize> = (0..domain.size()).collect();
    rng.shuffle(&mut order);
    let mut assignment = vec![0; order.len()];
    for (slot, &p) in order.iter().enumerate() {
        assignment[p] = slot / s;
    }
    Grouping::new(domain, s, assignment).unwrap()
}

/// Histograms with random positive bin masses, normalized.
pub fn random_model(rng: &mut SplitMix64, domain: IndexDomain, s: usize, bins: usize) -> CoocModel {
    let grouping = random_grouping(rng, domain, s);
    let histograms = (0..grouping.num_groups())
        .map(|k| {
            let edges = GroupHistogram::equal_width_edges(grouping.group_len(k), bins);
            let raw: Vec<f64> = (0..edges.len() - 1).map(|_| 0.05 + rng.uniform()).collect();
            let total: f64 = raw.iter().sum();
            GroupHistogram::from_parts(edges, raw.iter().map(|r| r / total).collect()).unwrap()
        })
        .collect();
    let meta = FitMeta {
        group_size: s,
        bins,
        iterations: 0,
        training_maps: 0,
        final_bits: 0.0,
    };
    CoocModel::new(grouping, histograms, meta).unwrap()
}

/// Two-class planted data on an 8x8 grid: class `c` has planted groups of
/// four on its own half (indices `32c..32c+32`) and `p_off` noise everywhere else.
pub fn two_class_maps(class: usize, count: usize, seed: u64) -> Vec<SignificanceMap> {
    let domain = IndexDomain::pixel(8, 8).unwrap();
    let (p_on, p_off) = (0.95, 0.05);
    let mut rng = SplitMix64::stream(seed, class as u64);
    let own = 32 * class..32 * class + 32;
    (0..count)
        .map(|_| {
            let on: Vec<bool> = (0..8).map(|_| rng.bernoulli(0.5)).collect();
            let mut y = SignificanceMap::empty(domain);
            for p in 0..64 {
                let prob = if own.contains(&p) && on[(p - own.start) / 4] { p_on } else { p_off };
                if rng.bernoulli(prob) {
                    y.insert(p);
                }
            }
            y
        })
        .collect()
}
