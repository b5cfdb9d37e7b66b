//! Co-occurrence group model of a class of significance maps.
//!
//! A [`Grouping`] partitions the index domain into groups `θ(k)` of size `s`
//! (the last group may hold the remainder `|ȳ| mod s`). Inside a group the
//! significant subset is uniform among subsets of its cardinality
//! `z(k) = |y ∩ θ(k)|`, and `z(k)` follows a piecewise-constant histogram
//! `q̂_k`. The probability of a map is therefore
//!
//! ```text
//! q(y | θ) = prod_k q̂_k(z(k)) / C(s_k, z(k))
//! ```
//!
//! and its ideal code length is `sum_k [log2 C(s_k, z(k)) - log2 q̂_k(z(k))]`.
//!
//! Histograms have `B` equal-width bins over the integer counts `0..=s_k`;
//! bin `b` covers `edges[b] <= z < edges[b + 1]` with
//! `edges[b] = floor(b (s_k + 1) / B)`. A bin's mass is spread uniformly over
//! the counts it covers, so `q̂_k(z) = probs[bin(z)] / width(bin(z))` sums to
//! one over `z`. When `s_k + 1 < B` each count gets its own bin.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::sparsity::{IndexDomain, SignificanceMap};
use crate::{invalid, Error, Result};

const LN_2: f64 = std::f64::consts::LN_2;

/// Tolerance on the total mass of a histogram.
pub const MASS_TOLERANCE: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Code-length primitives
// ---------------------------------------------------------------------------

/// `log2 C(n, m)` through the log-gamma function.
pub fn binom_bits(n: usize, m: usize) -> Result<f64> {
    if m > n {
        return Err(invalid(format!("cannot choose {m} out of {n}")));
    }
    if m == 0 || m == n {
        return Ok(0.0);
    }
    let (n, m) = (n as f64, m as f64);
    Ok((libm::lgamma(n + 1.0) - libm::lgamma(m + 1.0) - libm::lgamma(n - m + 1.0)) / LN_2)
}

/// Binary entropy in bits, with `0 log 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |x: f64| if x > 0.0 { -x * x.log2() } else { 0.0 };
    term(p) + term(1.0 - p)
}

/// `s H(z / s)`: the entropy approximation of `log2 C(s, z)`, for real `z`.
pub fn stirling_bits(s: usize, z: f64) -> Result<f64> {
    if !(0.0..=s as f64).contains(&z) {
        return Err(invalid(format!("count {z} outside [0, {s}]")));
    }
    if s == 0 {
        return Ok(0.0);
    }
    Ok(s as f64 * binary_entropy(z / s as f64))
}

/// Bits to code `m` significant indices out of `s_k` as independent
/// Bernoulli(`pi`) draws: `-m log2 pi - (s_k - m) log2(1 - pi)`.
pub fn bernoulli_data_bits(m: usize, s_k: usize, pi: f64) -> Result<f64> {
    if m > s_k {
        return Err(invalid(format!("count {m} exceeds group size {s_k}")));
    }
    if !(pi > 0.0 && pi < 1.0) {
        return Err(invalid(format!("probability {pi} outside (0, 1)")));
    }
    Ok(bernoulli_bits_unchecked(m as f64, s_k as f64, pi))
}

#[inline]
pub(crate) fn bernoulli_bits_unchecked(m: f64, s_k: f64, pi: f64) -> f64 {
    -m * pi.log2() - (s_k - m) * (1.0 - pi).log2()
}

/// `z / s_k` clamped to `[1/(2 s_k), 1 - 1/(2 s_k)]` so code lengths stay finite.
pub fn clamped_probability(z: f64, s_k: usize) -> f64 {
    let s = s_k as f64;
    let lo = 0.5 / s;
    (z / s).clamp(lo, 1.0 - lo)
}

// ---------------------------------------------------------------------------
// Grouping
// ---------------------------------------------------------------------------

/// Balanced partition of an index domain, stored as `k(p)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grouping {
    domain: IndexDomain,
    group_size: usize,
    assignment: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl Grouping {
    /// Number of groups for a domain of `n` indices and group size `s`.
    pub fn group_count(n: usize, s: usize) -> usize {
        n.div_ceil(s)
    }

    /// Expected size of group `k`: `s`, except a trailing remainder group.
    pub fn expected_len(n: usize, s: usize, k: usize) -> usize {
        let full = n / s;
        if k < full {
            s
        } else {
            n - full * s
        }
    }

    pub fn new(domain: IndexDomain, group_size: usize, assignment: Vec<usize>) -> Result<Self> {
        let n = domain.size();
        if group_size == 0 || group_size > n {
            return Err(invalid(format!(
                "group size {group_size} outside [1, {n}]"
            )));
        }
        if assignment.len() != n {
            return Err(Error::Invariant(format!(
                "assignment covers {} indices, domain has {n}",
                assignment.len()
            )));
        }
        let groups = Self::group_count(n, group_size);
        let mut members = vec![Vec::new(); groups];
        for (p, &k) in assignment.iter().enumerate() {
            if k >= groups {
                return Err(Error::Invariant(format!("group id {k} outside [0, {groups})")));
            }
            members[k].push(p);
        }
        for (k, m) in members.iter().enumerate() {
            let want = Self::expected_len(n, group_size, k);
            if m.len() != want {
                return Err(Error::Invariant(format!(
                    "group {k} has {} members, expected {want}",
                    m.len()
                )));
            }
        }
        Ok(Self {
            domain,
            group_size,
            assignment,
            members,
        })
    }

    pub fn domain(&self) -> &IndexDomain {
        &self.domain
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn num_groups(&self) -> usize {
        self.members.len()
    }

    pub fn group_of(&self, p: usize) -> usize {
        self.assignment[p]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn members(&self, k: usize) -> &[usize] {
        &self.members[k]
    }

    pub fn group_len(&self, k: usize) -> usize {
        self.members[k].len()
    }

    pub fn group_lens(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    /// Exchange the groups of `p` and `q`.
    pub(crate) fn swap(&mut self, p: usize, q: usize) {
        let (kp, kq) = (self.assignment[p], self.assignment[q]);
        if kp == kq {
            return;
        }
        self.assignment[p] = kq;
        self.assignment[q] = kp;
        let ip = self.members[kp].iter().position(|&x| x == p).expect("member");
        self.members[kp][ip] = q;
        self.members[kp].sort_unstable();
        let iq = self.members[kq].iter().position(|&x| x == q).expect("member");
        self.members[kq][iq] = p;
        self.members[kq].sort_unstable();
    }

    /// Rename group `k` to `perm[k]`.
    pub fn relabeled(&self, perm: &[usize]) -> Result<Self> {
        let assignment = self
            .assignment
            .iter()
            .map(|&k| perm.get(k).copied().ok_or_else(|| invalid("short permutation")))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.domain, self.group_size, assignment)
    }
}

// ---------------------------------------------------------------------------
// Histograms
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupHistogram {
    edges: Vec<usize>,
    probs: Vec<f64>,
}

impl GroupHistogram {
    /// Equal-width bin edges over counts `0..=group_len`.
    pub fn equal_width_edges(group_len: usize, bins: usize) -> Vec<usize> {
        let values = group_len + 1;
        let b = bins.clamp(1, values);
        (0..=b).map(|i| i * values / b).collect()
    }

    pub fn from_parts(edges: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        let h = Self { edges, probs };
        h.validate()?;
        Ok(h)
    }

    /// Histogram that is uniform over counts (bin mass proportional to width).
    pub fn uniform(group_len: usize, bins: usize) -> Self {
        let edges = Self::equal_width_edges(group_len, bins);
        let total = (group_len + 1) as f64;
        let probs = edges.windows(2).map(|w| (w[1] - w[0]) as f64 / total).collect();
        Self { edges, probs }
    }

    /// Add-one smoothed, normalized histogram from per-bin tallies.
    pub fn from_tallies(edges: Vec<usize>, tallies: &[usize]) -> Self {
        debug_assert_eq!(edges.len(), tallies.len() + 1);
        let total = (tallies.iter().sum::<usize>() + tallies.len()) as f64;
        let probs = tallies.iter().map(|&t| (t + 1) as f64 / total).collect();
        Self { edges, probs }
    }

    /// Add-one smoothed histogram of observed counts.
    pub fn from_counts(group_len: usize, bins: usize, counts: impl IntoIterator<Item = usize>) -> Self {
        let edges = Self::equal_width_edges(group_len, bins);
        let mut tallies = vec![0usize; edges.len() - 1];
        let probe = Self {
            edges: edges.clone(),
            probs: Vec::new(),
        };
        for z in counts {
            tallies[probe.bin_of(z)] += 1;
        }
        Self::from_tallies(edges, &tallies)
    }

    pub fn validate(&self) -> Result<()> {
        let b = self.probs.len();
        if self.edges.len() != b + 1 {
            return Err(Error::Invariant(format!(
                "{} edges for {b} bins",
                self.edges.len()
            )));
        }
        if b < 2 {
            return Err(Error::Invariant(format!("{b} bins, need at least 2")));
        }
        if self.edges[0] != 0 || self.edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invariant(format!("bad bin edges {:?}", self.edges)));
        }
        if self.probs.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::Invariant("bin probabilities must be positive".into()));
        }
        let mass: f64 = self.probs.iter().sum();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::Invariant(format!("histogram mass {mass} is not 1")));
        }
        Ok(())
    }

    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_bins(&self) -> usize {
        self.probs.len()
    }

    /// Largest count covered (the group size).
    pub fn max_count(&self) -> usize {
        self.edges[self.edges.len() - 1] - 1
    }

    pub fn bin_of(&self, z: usize) -> usize {
        self.edges.partition_point(|&e| e <= z) - 1
    }

    pub fn width(&self, bin: usize) -> usize {
        self.edges[bin + 1] - self.edges[bin]
    }

    /// Midpoint of the integer counts covered by `bin`.
    pub fn center(&self, bin: usize) -> f64 {
        (self.edges[bin] + self.edges[bin + 1] - 1) as f64 / 2.0
    }

    /// `q̂(z)` for an integer count.
    pub fn count_prob(&self, z: usize) -> f64 {
        let b = self.bin_of(z);
        self.probs[b] / self.width(b) as f64
    }

    /// `-log2 q̂(z)` for any count inside `bin`.
    pub fn bin_count_bits(&self, bin: usize) -> f64 {
        -(self.probs[bin] / self.width(bin) as f64).log2()
    }

    pub fn count_bits(&self, z: usize) -> f64 {
        self.bin_count_bits(self.bin_of(z))
    }
}

// ---------------------------------------------------------------------------
// Counts and code lengths
// ---------------------------------------------------------------------------

/// `z(k) = |y ∩ θ(k)|` for every group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupCounts(pub Vec<usize>);

impl GroupCounts {
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }
}

pub fn group_counts(y: &SignificanceMap, grouping: &Grouping) -> Result<GroupCounts> {
    y.domain().ensure_same(grouping.domain())?;
    Ok(GroupCounts(counts_unchecked(y, grouping.assignment(), grouping.num_groups())))
}

pub(crate) fn counts_unchecked(y: &SignificanceMap, assignment: &[usize], groups: usize) -> Vec<usize> {
    let mut z = vec![0; groups];
    for p in y.iter() {
        z[assignment[p]] += 1;
    }
    z
}

/// Per-group code lengths `log2 C(s_k, z(k)) - log2 q̂_k(z(k))`.
pub fn group_bits(y: &SignificanceMap, grouping: &Grouping, hists: &[GroupHistogram]) -> Result<Vec<f64>> {
    if hists.len() != grouping.num_groups() {
        return Err(Error::Invariant(format!(
            "{} histograms for {} groups",
            hists.len(),
            grouping.num_groups()
        )));
    }
    let z = group_counts(y, grouping)?;
    z.0.iter()
        .zip(hists)
        .enumerate()
        .map(|(k, (&zk, h))| Ok(binom_bits(grouping.group_len(k), zk)? + h.count_bits(zk)))
        .collect()
}

/// `-log2 q(y | θ)`.
pub fn exact_map_bits(y: &SignificanceMap, grouping: &Grouping, hists: &[GroupHistogram]) -> Result<f64> {
    Ok(group_bits(y, grouping, hists)?.iter().sum())
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// Provenance of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    pub group_size: usize,
    pub bins: usize,
    pub iterations: usize,
    pub training_maps: usize,
    /// Exact code length of the training maps under the model, in bits.
    pub final_bits: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoocModel {
    grouping: Grouping,
    histograms: Vec<GroupHistogram>,
    pub meta: FitMeta,
}

impl CoocModel {
    pub fn new(grouping: Grouping, histograms: Vec<GroupHistogram>, meta: FitMeta) -> Result<Self> {
        if histograms.len() != grouping.num_groups() {
            return Err(Error::Invariant(format!(
                "{} histograms for {} groups",
                histograms.len(),
                grouping.num_groups()
            )));
        }
        for (k, h) in histograms.iter().enumerate() {
            h.validate()?;
            if h.max_count() != grouping.group_len(k) {
                return Err(Error::Invariant(format!(
                    "histogram {k} covers counts up to {}, group has {} members",
                    h.max_count(),
                    grouping.group_len(k)
                )));
            }
        }
        Ok(Self {
            grouping,
            histograms,
            meta,
        })
    }

    /// Model on a fixed grouping with add-one smoothed histograms of the
    /// observed counts of `maps`.
    pub fn from_grouping(grouping: Grouping, maps: &[SignificanceMap], bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(invalid("need at least 2 bins"));
        }
        for y in maps {
            y.domain().ensure_same(grouping.domain())?;
        }
        let k = grouping.num_groups();
        let counts: Vec<Vec<usize>> = maps
            .iter()
            .map(|y| counts_unchecked(y, grouping.assignment(), k))
            .collect();
        let histograms = (0..k)
            .map(|g| GroupHistogram::from_counts(grouping.group_len(g), bins, counts.iter().map(|c| c[g])))
            .collect();
        let meta = FitMeta {
            group_size: grouping.group_size(),
            bins,
            iterations: 0,
            training_maps: maps.len(),
            final_bits: 0.0,
        };
        let mut model = Self::new(grouping, histograms, meta)?;
        model.meta.final_bits = total_bits(maps, &model)?.bits;
        Ok(model)
    }

    pub fn grouping(&self) -> &Grouping {
        &self.grouping
    }

    pub fn histograms(&self) -> &[GroupHistogram] {
        &self.histograms
    }

    pub fn domain(&self) -> &IndexDomain {
        self.grouping.domain()
    }

    pub fn num_groups(&self) -> usize {
        self.grouping.num_groups()
    }

    pub fn map_bits(&self, y: &SignificanceMap) -> Result<f64> {
        exact_map_bits(y, &self.grouping, &self.histograms)
    }

    pub fn group_bits(&self, y: &SignificanceMap) -> Result<Vec<f64>> {
        group_bits(y, &self.grouping, &self.histograms)
    }
}

/// Code length of a set of maps under one model.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeLength {
    pub bits: f64,
    pub bits_per_index: f64,
    pub per_map: Vec<f64>,
}

impl CodeLength {
    /// `map,bits,bpp` rows, one per map.
    pub fn to_csv(&self, domain_size: usize) -> String {
        let mut out = String::from("map,bits,bpp\n");
        for (i, b) in self.per_map.iter().enumerate() {
            out.push_str(&format!("{i},{b},{}\n", b / domain_size as f64));
        }
        out
    }
}

/// Sum of exact code lengths, reduced in map order.
pub fn total_bits(maps: &[SignificanceMap], model: &CoocModel) -> Result<CodeLength> {
    if maps.is_empty() {
        return Err(invalid("no maps to evaluate"));
    }
    let per_map = maps
        .par_iter()
        .map(|y| model.map_bits(y))
        .collect::<Result<Vec<_>>>()?;
    let bits: f64 = per_map.iter().sum();
    Ok(CodeLength {
        bits,
        bits_per_index: bits / (maps.len() * model.domain().size()) as f64,
        per_map,
    })
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(invalid(format!("labelings of {} and {} items", a.len(), b.len())));
    }
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![0u64; ka * kb];
    let mut rows = vec![0u64; ka];
    let mut cols = vec![0u64; kb];
    for (&i, &j) in a.iter().zip(b) {
        table[i * kb + j] += 1;
        rows[i] += 1;
        cols[j] += 1;
    }
    let pairs = |x: u64| (x * x.saturating_sub(1) / 2) as f64;
    let index: f64 = table.iter().map(|&x| pairs(x)).sum();
    let sa: f64 = rows.iter().map(|&x| pairs(x)).sum();
    let sb: f64 = cols.iter().map(|&x| pairs(x)).sum();
    let expected = sa * sb / pairs(n as u64).max(1.0);
    let max = (sa + sb) / 2.0;
    if (max - expected).abs() < f64::EPSILON {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}
