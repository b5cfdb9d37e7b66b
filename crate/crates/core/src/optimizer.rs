//! Fitting a [`CoocModel`] by alternating minimization.
//!
//! The optimizer works on a Bernoulli relaxation of the exact code length.
//! For every training map `l` and group `k` it keeps a latent count
//! `z_l(k)`; the group's indices are coded as independent Bernoulli draws
//! with probability `pi = z_l(k) / s_k` (clamped, see
//! [`clamped_probability`]) and the latent count itself costs
//! `-log2 q̂_k(z_l(k))`. The objective, in bits, is
//!
//! ```text
//! J = sum_l sum_k [ bern(m_l(k), s_k, pi_l(k)) - log2 q̂_k(z_l(k)) ]
//!   + sum_k sum_b -log2 P_k(b)
//! ```
//!
//! where `m_l(k)` is the observed count and `P_k(b)` the mass of bin `b`.
//! The last term is one pseudo-observation per bin; it makes add-one
//! smoothing the exact minimizer of step 2, so every step is a descent step:
//!
//! 1. **latent counts**: for each `(l, k)` pick the candidate `z` minimizing
//!    `bern(m, s_k, z / s_k) - log2 q̂_k(z)`. Candidates are bin centers
//!    ([`ZMode::Quantized`]); [`ZMode::Empirical`] pins `z = m`.
//! 2. **histograms**: add-one smoothed histogram of the chosen bins.
//! 3. **groups**: best-improvement pairwise swaps of indices between groups,
//!    which preserves every group size.
//!
//! The relaxation is an optimizer device. The returned model keeps the final
//! grouping and refits its histograms on the observed counts, so it codes
//! maps with the exact code length.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{
    bernoulli_bits_unchecked, clamped_probability, counts_unchecked, CoocModel, GroupCounts,
    GroupHistogram, Grouping,
};
use crate::rng::SplitMix64;
use crate::sparsity::{IndexDomain, SignificanceMap};
use crate::wavelet::band_layout;
use crate::{invalid, Error, Result};

/// Smallest objective decrease, in bits, that counts as an improving swap.
pub const SWAP_EPSILON: f64 = 1e-9;

/// Units per bit for the integer swap deltas of the profiled swap stage.
const FIXED_POINT_SCALE: f64 = (1u64 << 36) as f64;

/// Relative slack allowed for floating-point noise when checking that a step
/// did not increase the objective.
pub const MONOTONE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    Random,
    SquareBlocks,
}

impl std::str::FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(InitMode::Random),
            "square-blocks" | "square" => Ok(InitMode::SquareBlocks),
            other => Err(invalid(format!("unknown init mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZMode {
    Quantized,
    Empirical,
}

impl std::str::FromStr for ZMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quantized" => Ok(ZMode::Quantized),
            "empirical" => Ok(ZMode::Empirical),
            other => Err(invalid(format!("unknown z mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub group_size: usize,
    pub bins: usize,
    pub max_iterations: usize,
    /// Stop once an iteration improves the objective by less than this many
    /// bits per index and map.
    pub tolerance: f64,
    pub init: InitMode,
    pub seed: u64,
    pub z_mode: ZMode,
    pub swap_passes: usize,
}

impl FitConfig {
    pub fn new(group_size: usize) -> Self {
        Self {
            group_size,
            bins: 8,
            max_iterations: 50,
            tolerance: 1e-6,
            init: InitMode::Random,
            seed: 0,
            z_mode: ZMode::Quantized,
            swap_passes: 4,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.group_size < 2 {
            return Err(invalid(format!("group size {} must be at least 2", self.group_size)));
        }
        if self.bins < 2 {
            return Err(invalid(format!("bin count {} must be at least 2", self.bins)));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(invalid("tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(invalid("need at least one iteration"));
        }
        Ok(())
    }
}

/// Objective after one full iteration, with the change contributed by each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective_bits: f64,
    pub delta_step1: f64,
    pub delta_step2: f64,
    pub delta_step3: f64,
    /// Exact code length of the training maps for this iteration's grouping.
    pub code_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    /// Record 0 is the initialization; its deltas are zero.
    pub records: Vec<IterationRecord>,
    pub converged: bool,
}

impl FitTrace {
    fn slack(bits: f64) -> f64 {
        MONOTONE_SLACK * bits.abs().max(1.0)
    }

    /// Number of steps that increased the objective beyond floating-point slack.
    pub fn violations(&self) -> usize {
        let mut count = 0;
        for (i, r) in self.records.iter().enumerate() {
            let tol = Self::slack(r.objective_bits);
            count += [r.delta_step1, r.delta_step2, r.delta_step3]
                .iter()
                .filter(|&&d| d > tol)
                .count();
            if i > 0 && r.objective_bits > self.records[i - 1].objective_bits + tol {
                count += 1;
            }
        }
        count
    }

    pub fn is_monotone(&self) -> bool {
        self.violations() == 0
    }

    pub fn initial_bits(&self) -> f64 {
        self.records[0].objective_bits
    }

    pub fn final_bits(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.objective_bits)
    }

    pub fn iterations(&self) -> usize {
        self.records.len() - 1
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("iteration,objective_bits,delta_step1,delta_step2,delta_step3,code_bits\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.iteration, r.objective_bits, r.delta_step1, r.delta_step2, r.delta_step3, r.code_bits
            ));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

fn exact_sqrt(s: usize) -> Option<usize> {
    let r = (s as f64).sqrt().round() as usize;
    (r * r == s).then_some(r)
}

/// Starting grouping: a uniformly random balanced partition (stream 0 of
/// `seed`), or contiguous `sqrt(s) x sqrt(s)` blocks in raster order.
///
/// On wavelet domains square blocks tile each band separately, bands in the
/// linear coefficient order.
pub fn init_grouping(domain: IndexDomain, s: usize, mode: InitMode, seed: u64) -> Result<Grouping> {
    let n = domain.size();
    if s == 0 || s > n {
        return Err(invalid(format!("group size {s} outside [1, {n}]")));
    }
    match mode {
        InitMode::Random => {
            let mut order: Vec<usize> = (0..n).collect();
            SplitMix64::stream(seed, 0).shuffle(&mut order);
            let mut assignment = vec![0; n];
            for (slot, &p) in order.iter().enumerate() {
                assignment[p] = slot / s;
            }
            Grouping::new(domain, s, assignment)
        }
        InitMode::SquareBlocks => {
            let side = exact_sqrt(s)
                .ok_or_else(|| invalid(format!("square blocks need a square group size, got {s}")))?;
            let grids: Vec<(usize, usize, usize)> = match domain {
                IndexDomain::Pixel { width, height } => vec![(0, width, height)],
                IndexDomain::Wavelet {
                    width,
                    height,
                    spec,
                } => band_layout(&spec, width, height)
                    .into_iter()
                    .map(|b| (b.offset, b.width, b.height))
                    .collect(),
            };
            let mut assignment = vec![0; n];
            let mut next_group = 0;
            for (offset, w, h) in grids {
                if w % side != 0 || h % side != 0 {
                    return Err(invalid(format!(
                        "{side}x{side} blocks do not tile a {w}x{h} grid"
                    )));
                }
                let blocks_x = w / side;
                for y in 0..h {
                    for x in 0..w {
                        assignment[offset + y * w + x] = next_group + (y / side) * blocks_x + x / side;
                    }
                }
                next_group += blocks_x * (h / side);
            }
            Grouping::new(domain, s, assignment)
        }
    }
}

// ---------------------------------------------------------------------------
// Latent counts
// ---------------------------------------------------------------------------

/// Latent counts `z_l(k)` for every map and group.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCounts {
    pub mode: ZMode,
    groups: usize,
    /// Candidate key per `(l, k)`: a bin index (quantized) or a count (empirical).
    keys: Vec<usize>,
}

impl LatentCounts {
    pub fn num_maps(&self) -> usize {
        self.keys.len() / self.groups.max(1)
    }

    pub fn key(&self, l: usize, k: usize) -> usize {
        self.keys[l * self.groups + k]
    }

    /// `z_l(k)` as a real count.
    pub fn value(&self, l: usize, k: usize, hist: &GroupHistogram) -> f64 {
        key_value(self.mode, hist, self.key(l, k))
    }

    pub fn bin(&self, l: usize, k: usize, hist: &GroupHistogram) -> usize {
        key_bin(self.mode, hist, self.key(l, k))
    }
}

fn key_value(mode: ZMode, hist: &GroupHistogram, key: usize) -> f64 {
    match mode {
        ZMode::Quantized => hist.center(key),
        ZMode::Empirical => key as f64,
    }
}

fn key_bin(mode: ZMode, hist: &GroupHistogram, key: usize) -> usize {
    match mode {
        ZMode::Quantized => key,
        ZMode::Empirical => hist.bin_of(key),
    }
}

fn key_space(mode: ZMode, hist: &GroupHistogram) -> usize {
    match mode {
        ZMode::Quantized => hist.num_bins(),
        ZMode::Empirical => hist.max_count() + 1,
    }
}

/// Latent keys that place every `z` in the bin of its observed count.
fn observed_latent(counts: &[GroupCounts], hists: &[GroupHistogram], mode: ZMode) -> LatentCounts {
    let groups = hists.len();
    let keys = counts
        .iter()
        .flat_map(|c| {
            c.0.iter().zip(hists).map(|(&m, h)| match mode {
                ZMode::Quantized => h.bin_of(m),
                ZMode::Empirical => m,
            })
        })
        .collect();
    LatentCounts { mode, groups, keys }
}

/// Best latent key and its cost for every observed count `0..=s_k` of a group.
///
/// In quantized mode the candidates are the bin centers; ties go to the
/// candidate nearest the observed count, then to the smaller one. In
/// empirical mode the key is the count itself.
fn latent_table(h: &GroupHistogram, mode: ZMode) -> Vec<(usize, f64)> {
    let s_k = h.max_count();
    let cost = |m: usize, z: f64, bin: usize| {
        bernoulli_bits_unchecked(m as f64, s_k as f64, clamped_probability(z, s_k)) + h.bin_count_bits(bin)
    };
    (0..=s_k)
        .map(|m| match mode {
            ZMode::Empirical => (m, cost(m, m as f64, h.bin_of(m))),
            ZMode::Quantized => {
                let mut best = (0, f64::INFINITY);
                for b in 0..h.num_bins() {
                    let c = cost(m, h.center(b), b);
                    let closer = (h.center(b) - m as f64).abs() < (h.center(best.0) - m as f64).abs();
                    if c < best.1 || (c == best.1 && closer) {
                        best = (b, c);
                    }
                }
                best
            }
        })
        .collect()
}

/// Step 1: choose each `z_l(k)` given the groups and histograms.
///
/// In quantized mode the candidates are the bin centers of `q̂_k`; ties go to
/// the candidate nearest the observed count, then to the smaller one.
pub fn step1_update_z(counts: &[GroupCounts], hists: &[GroupHistogram], mode: ZMode) -> LatentCounts {
    if mode == ZMode::Empirical {
        return observed_latent(counts, hists, mode);
    }
    let tables: Vec<Vec<(usize, f64)>> = hists.iter().map(|h| latent_table(h, mode)).collect();
    let keys = counts
        .iter()
        .flat_map(|c| c.0.iter().zip(&tables).map(|(&m, t)| t[m].0))
        .collect();
    LatentCounts {
        mode,
        groups: hists.len(),
        keys,
    }
}

/// Step 2: add-one smoothed histograms of the latent bins, on the bin edges of `hists`.
pub fn step2_update_hists(latent: &LatentCounts, hists: &[GroupHistogram]) -> Vec<GroupHistogram> {
    let maps = latent.num_maps();
    hists
        .iter()
        .enumerate()
        .map(|(k, h)| {
            let mut tallies = vec![0usize; h.num_bins()];
            for l in 0..maps {
                tallies[latent.bin(l, k, h)] += 1;
            }
            GroupHistogram::from_tallies(h.edges().to_vec(), &tallies)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Objective
// ---------------------------------------------------------------------------

fn count_matrix(maps: &[SignificanceMap], grouping: &Grouping) -> Vec<GroupCounts> {
    maps.iter()
        .map(|y| GroupCounts(counts_unchecked(y, grouping.assignment(), grouping.num_groups())))
        .collect()
}

fn check_maps(maps: &[SignificanceMap], domain: &IndexDomain) -> Result<()> {
    if maps.is_empty() {
        return Err(invalid("need at least one training map"));
    }
    for y in maps {
        y.domain().ensure_same(domain)?;
    }
    Ok(())
}

/// Per-group tallies over latent keys: maps choosing each key and the sum
/// of their observed counts.
fn key_tallies(counts: &[GroupCounts], latent: &LatentCounts, k: usize, space: usize) -> (Vec<u64>, Vec<u64>) {
    let mut chosen = vec![0u64; space];
    let mut observed = vec![0u64; space];
    for (l, c) in counts.iter().enumerate() {
        let key = latent.key(l, k);
        chosen[key] += 1;
        observed[key] += c.0[k] as u64;
    }
    (chosen, observed)
}

fn pseudo_count_bits(hists: &[GroupHistogram]) -> f64 {
    hists
        .iter()
        .map(|h| h.probs().iter().map(|p| -p.log2()).sum::<f64>())
        .sum()
}

fn objective_from_counts(counts: &[GroupCounts], latent: &LatentCounts, hists: &[GroupHistogram]) -> f64 {
    let mut total = 0.0;
    for (k, h) in hists.iter().enumerate() {
        let s_k = h.max_count() as f64;
        let space = key_space(latent.mode, h);
        let (chosen, observed) = key_tallies(counts, latent, k, space);
        for key in 0..space {
            if chosen[key] == 0 {
                continue;
            }
            let pi = clamped_probability(key_value(latent.mode, h, key), h.max_count());
            let ones = observed[key] as f64;
            let zeros = chosen[key] as f64 * s_k - ones;
            total += -ones * pi.log2() - zeros * (1.0 - pi).log2();
            total += chosen[key] as f64 * h.bin_count_bits(key_bin(latent.mode, h, key));
        }
    }
    total + pseudo_count_bits(hists)
}

/// Relaxed objective `J` (bits) for a grouping, latent counts and histograms.
pub fn objective(
    maps: &[SignificanceMap],
    grouping: &Grouping,
    latent: &LatentCounts,
    hists: &[GroupHistogram],
) -> Result<f64> {
    check_maps(maps, grouping.domain())?;
    check_latent(maps.len(), grouping, latent, hists)?;
    Ok(objective_from_counts(&count_matrix(maps, grouping), latent, hists))
}

fn check_latent(maps: usize, grouping: &Grouping, latent: &LatentCounts, hists: &[GroupHistogram]) -> Result<()> {
    if hists.len() != grouping.num_groups() || latent.groups != grouping.num_groups() || latent.num_maps() != maps {
        return Err(Error::Invariant(format!(
            "{} groups, {} histograms, latent counts for {} groups x {} maps, {maps} maps",
            grouping.num_groups(),
            hists.len(),
            latent.groups,
            latent.num_maps()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Step 3
// ---------------------------------------------------------------------------

/// Result of a group update.
#[derive(Debug, Clone, PartialEq)]
pub struct SwapOutcome {
    pub grouping: Grouping,
    pub swaps: usize,
    pub passes: usize,
}

/// `cost[p * K + k]`: bits to code index `p`'s significance pattern as a
/// member of group `k`, for fixed latent counts.
pub fn assignment_costs(
    maps: &[SignificanceMap],
    latent: &LatentCounts,
    hists: &[GroupHistogram],
) -> Vec<f64> {
    let n = maps[0].len();
    let groups = hists.len();
    let columns: Vec<Vec<f64>> = hists
        .par_iter()
        .enumerate()
        .map(|(k, h)| {
            let space = key_space(latent.mode, h);
            let s_k = h.max_count();
            let mut chosen = vec![0u64; space];
            let mut hits = vec![0u32; n * space];
            for (l, y) in maps.iter().enumerate() {
                let key = latent.key(l, k);
                chosen[key] += 1;
                for p in y.iter() {
                    hits[p * space + key] += 1;
                }
            }
            let (mut base, mut gain) = (0.0, vec![0.0; space]);
            for key in 0..space {
                let pi = clamped_probability(key_value(latent.mode, h, key), s_k);
                let (on, off) = (-pi.log2(), -(1.0 - pi).log2());
                base += chosen[key] as f64 * off;
                gain[key] = on - off;
            }
            (0..n)
                .map(|p| {
                    base + hits[p * space..(p + 1) * space]
                        .iter()
                        .zip(&gain)
                        .map(|(&c, g)| c as f64 * g)
                        .sum::<f64>()
                })
                .collect()
        })
        .collect();
    let mut cost = vec![0.0; n * groups];
    for (k, col) in columns.iter().enumerate() {
        for (p, &c) in col.iter().enumerate() {
            cost[p * groups + k] = c;
        }
    }
    cost
}

/// Best-improvement swaps on a fixed cost matrix. Returns the number of swaps
/// and passes used.
pub fn swap_descent(grouping: &mut Grouping, cost: &[f64], max_passes: usize) -> (usize, usize) {
    let n = grouping.domain().size();
    let groups = grouping.num_groups();
    let mut swaps = 0;
    let mut passes = 0;
    while passes < max_passes {
        passes += 1;
        let mut improved = false;
        for p in 0..n {
            let kp = grouping.group_of(p);
            let here = cost[p * groups + kp];
            let mut best = (-SWAP_EPSILON, usize::MAX);
            for q in 0..n {
                let kq = grouping.group_of(q);
                if kq == kp {
                    continue;
                }
                let delta = (cost[p * groups + kq] - here) + (cost[q * groups + kp] - cost[q * groups + kq]);
                if delta < best.0 {
                    best = (delta, q);
                }
            }
            if best.1 != usize::MAX {
                grouping.swap(p, best.1);
                swaps += 1;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    (swaps, passes)
}

/// Swaps evaluated on the objective with the latent counts re-optimized for
/// every candidate grouping: map `l` pays `min_z cost_k(m_l(k), z)` in group
/// `k`, looked up from the step-1 tables.
fn swap_descent_profiled(
    maps: &[SignificanceMap],
    grouping: &mut Grouping,
    hists: &[GroupHistogram],
    mode: ZMode,
    max_passes: usize,
) -> (usize, usize) {
    let n = grouping.domain().size();
    let groups = grouping.num_groups();
    let l_count = maps.len();
    let words = l_count.div_ceil(64);
    // occ[p]: maps in which p is significant.
    let mut occ = vec![0u64; n * words];
    for (l, y) in maps.iter().enumerate() {
        for p in y.iter() {
            occ[p * words + l / 64] |= 1 << (l % 64);
        }
    }
    // Costs in fixed point, so a swap delta does not depend on map order.
    let g: Vec<Vec<i64>> = hists
        .iter()
        .map(|h| {
            latent_table(h, mode)
                .into_iter()
                .map(|(_, c)| (c * FIXED_POINT_SCALE).round() as i64)
                .collect()
        })
        .collect();
    let epsilon = (SWAP_EPSILON * FIXED_POINT_SCALE).ceil() as i64;
    let mut counts: Vec<usize> = maps
        .iter()
        .flat_map(|y| counts_unchecked(y, grouping.assignment(), groups))
        .collect();

    let mut swaps = 0;
    let mut passes = 0;
    while passes < max_passes {
        passes += 1;
        let mut improved = false;
        for p in 0..n {
            let kp = grouping.group_of(p);
            let mut best = (-epsilon, usize::MAX);
            for q in 0..n {
                let kq = grouping.group_of(q);
                if kq == kp {
                    continue;
                }
                let mut delta = 0i64;
                for w in 0..words {
                    let mut diff = occ[p * words + w] ^ occ[q * words + w];
                    while diff != 0 {
                        let l = w * 64 + diff.trailing_zeros() as usize;
                        diff &= diff - 1;
                        let (mp, mq) = (counts[l * groups + kp], counts[l * groups + kq]);
                        if occ[p * words + w] >> (l % 64) & 1 == 1 {
                            delta += g[kp][mp - 1] - g[kp][mp] + g[kq][mq + 1] - g[kq][mq];
                        } else {
                            delta += g[kp][mp + 1] - g[kp][mp] + g[kq][mq - 1] - g[kq][mq];
                        }
                    }
                }
                if delta < best.0 {
                    best = (delta, q);
                }
            }
            if best.1 != usize::MAX {
                let q = best.1;
                let kq = grouping.group_of(q);
                for w in 0..words {
                    let mut diff = occ[p * words + w] ^ occ[q * words + w];
                    while diff != 0 {
                        let l = w * 64 + diff.trailing_zeros() as usize;
                        diff &= diff - 1;
                        if occ[p * words + w] >> (l % 64) & 1 == 1 {
                            counts[l * groups + kp] -= 1;
                            counts[l * groups + kq] += 1;
                        } else {
                            counts[l * groups + kp] += 1;
                            counts[l * groups + kq] -= 1;
                        }
                    }
                }
                grouping.swap(p, q);
                swaps += 1;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    (swaps, passes)
}

/// Step 3: reassign indices to groups, never increasing the objective.
///
/// First the balanced assignment problem with per-index costs at fixed latent
/// counts ([`assignment_costs`]) is descended by pairwise swaps. Then swaps
/// are scored with the latent counts re-chosen for the candidate grouping,
/// which escapes assignments that are only stable because `z` was frozen.
/// Each stage runs at most `max_passes` passes. Group sizes are preserved.
pub fn step3_update_groups(
    maps: &[SignificanceMap],
    grouping: &Grouping,
    latent: &LatentCounts,
    hists: &[GroupHistogram],
    max_passes: usize,
) -> Result<SwapOutcome> {
    check_maps(maps, grouping.domain())?;
    check_latent(maps.len(), grouping, latent, hists)?;
    let mut next = grouping.clone();
    let cost = assignment_costs(maps, latent, hists);
    let (fixed_swaps, fixed_passes) = swap_descent(&mut next, &cost, max_passes);
    let (swaps, passes) = swap_descent_profiled(maps, &mut next, hists, latent.mode, max_passes);
    Ok(SwapOutcome {
        grouping: next,
        swaps: fixed_swaps + swaps,
        passes: fixed_passes + passes,
    })
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

fn initial_histograms(grouping: &Grouping, bins: usize) -> Vec<GroupHistogram> {
    (0..grouping.num_groups())
        .map(|k| GroupHistogram::uniform(grouping.group_len(k), bins))
        .collect()
}

fn check_step(delta: f64, objective: f64, step: usize, iteration: usize) -> Result<()> {
    if delta > MONOTONE_SLACK * objective.abs().max(1.0) {
        return Err(Error::Invariant(format!(
            "step {step} of iteration {iteration} increased the objective by {delta} bits"
        )));
    }
    Ok(())
}

/// Fit a model to training maps from the configured initialization.
pub fn fit(maps: &[SignificanceMap], config: &FitConfig) -> Result<(CoocModel, FitTrace)> {
    config.validate()?;
    let domain = *maps
        .first()
        .ok_or_else(|| invalid("need at least one training map"))?
        .domain();
    check_maps(maps, &domain)?;
    let grouping = init_grouping(domain, config.group_size, config.init, config.seed)?;
    fit_from(maps, grouping, config)
}

/// Fit starting from a given grouping; `config.init` and `config.seed` are ignored.
pub fn fit_from(maps: &[SignificanceMap], start: Grouping, config: &FitConfig) -> Result<(CoocModel, FitTrace)> {
    config.validate()?;
    check_maps(maps, start.domain())?;
    if start.group_size() != config.group_size {
        return Err(invalid(format!(
            "start grouping has size {}, config asks for {}",
            start.group_size(),
            config.group_size
        )));
    }
    let n = start.domain().size();
    let budget = config.tolerance * (maps.len() * n) as f64;

    let mut grouping = start;
    let mut hists = initial_histograms(&grouping, config.bins);
    let mut counts = count_matrix(maps, &grouping);
    let mut latent = observed_latent(&counts, &hists, config.z_mode);
    let mut current = objective_from_counts(&counts, &latent, &hists);

    let mut model = CoocModel::from_grouping(grouping.clone(), maps, config.bins)?;
    let mut records = vec![IterationRecord {
        iteration: 0,
        objective_bits: current,
        delta_step1: 0.0,
        delta_step2: 0.0,
        delta_step3: 0.0,
        code_bits: model.meta.final_bits,
    }];
    let mut converged = false;

    for iteration in 1..=config.max_iterations {
        let start_bits = current;

        latent = step1_update_z(&counts, &hists, config.z_mode);
        let after1 = objective_from_counts(&counts, &latent, &hists);
        check_step(after1 - current, current, 1, iteration)?;

        hists = step2_update_hists(&latent, &hists);
        let after2 = objective_from_counts(&counts, &latent, &hists);
        check_step(after2 - after1, after1, 2, iteration)?;

        let outcome = step3_update_groups(maps, &grouping, &latent, &hists, config.swap_passes)?;
        grouping = outcome.grouping;
        counts = count_matrix(maps, &grouping);
        // Latent counts follow the new grouping; this can only lower J.
        latent = step1_update_z(&counts, &hists, config.z_mode);
        let after3 = objective_from_counts(&counts, &latent, &hists);
        check_step(after3 - after2, after2, 3, iteration)?;
        current = after3;

        model = CoocModel::from_grouping(grouping.clone(), maps, config.bins)?;
        records.push(IterationRecord {
            iteration,
            objective_bits: current,
            delta_step1: after1 - start_bits,
            delta_step2: after2 - after1,
            delta_step3: after3 - after2,
            code_bits: model.meta.final_bits,
        });
        if start_bits - current < budget {
            converged = true;
            break;
        }
    }

    model.meta.iterations = records.len() - 1;
    Ok((model, FitTrace { records, converged }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, SyntheticSpec};
    use crate::model::adjusted_rand_index;

    #[test]
    fn square_blocks_on_small_grid() {
        let d = IndexDomain::pixel(4, 4).unwrap();
        let g = init_grouping(d, 4, InitMode::SquareBlocks, 0).unwrap();
        assert_eq!(
            g.assignment(),
            &[0, 0, 1, 1, 0, 0, 1, 1, 2, 2, 3, 3, 2, 2, 3, 3]
        );
        assert!(init_grouping(d, 8, InitMode::SquareBlocks, 0).is_err());
        let d6 = IndexDomain::pixel(6, 4).unwrap();
        assert!(init_grouping(d6, 16, InitMode::SquareBlocks, 0).is_err());
    }

    #[test]
    fn square_blocks_on_wavelet_bands() {
        let spec = crate::wavelet::WaveletSpec::haar(1).unwrap();
        let d = IndexDomain::wavelet(spec, 4, 4).unwrap();
        let g = init_grouping(d, 4, InitMode::SquareBlocks, 0).unwrap();
        // Each 2x2 band is one block.
        assert_eq!(g.assignment(), &[0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3]);
    }

    #[test]
    fn random_init_balanced_and_deterministic() {
        let d = IndexDomain::pixel(10, 5).unwrap();
        for seed in 0..100 {
            let g = init_grouping(d, 8, InitMode::Random, seed).unwrap();
            let lens = g.group_lens();
            assert_eq!(lens.len(), 7);
            assert!(lens[..6].iter().all(|&l| l == 8));
            assert_eq!(lens[6], 2);
        }
        assert_eq!(
            init_grouping(d, 5, InitMode::Random, 9).unwrap(),
            init_grouping(d, 5, InitMode::Random, 9).unwrap()
        );
    }

    #[test]
    fn flat_prior_picks_nearest_center() {
        let h = GroupHistogram::uniform(14, 8);
        for m in 0..=14usize {
            let latent = step1_update_z(&[GroupCounts(vec![m])], std::slice::from_ref(&h), ZMode::Quantized);
            let got = latent.value(0, 0, &h);
            let nearest = (0..h.num_bins())
                .map(|b| h.center(b))
                .min_by(|a, b| (a - m as f64).abs().total_cmp(&(b - m as f64).abs()))
                .unwrap();
            assert_eq!(got, nearest, "m = {m}");
        }
    }

    #[test]
    fn concentrated_prior_wins() {
        let eps = 1e-12;
        let mut probs = vec![eps / 7.0; 8];
        probs[5] = 1.0 - eps;
        let h = GroupHistogram::from_parts(GroupHistogram::equal_width_edges(14, 8), probs).unwrap();
        for m in 0..=14 {
            let latent = step1_update_z(&[GroupCounts(vec![m])], std::slice::from_ref(&h), ZMode::Quantized);
            assert_eq!(latent.key(0, 0), 5);
        }
        let emp = step1_update_z(&[GroupCounts(vec![3])], std::slice::from_ref(&h), ZMode::Empirical);
        assert_eq!(emp.value(0, 0, &h), 3.0);
    }

    #[test]
    fn step2_smoothing() {
        let h = GroupHistogram::uniform(3, 2);
        let counts: Vec<GroupCounts> = (0..98).map(|_| GroupCounts(vec![1])).collect();
        let latent = observed_latent(&counts, std::slice::from_ref(&h), ZMode::Quantized);
        let next = step2_update_hists(&latent, &[h]);
        assert_eq!(next[0].probs(), &[0.99, 0.01]);
    }

    #[test]
    fn identical_patterns_are_interchangeable() {
        let d = IndexDomain::pixel(4, 1).unwrap();
        let maps: Vec<SignificanceMap> = [[0, 1], [0, 1], [2, 3]]
            .iter()
            .map(|ix| SignificanceMap::from_indices(d, ix.iter().copied()).unwrap())
            .collect();
        let g = Grouping::new(d, 2, vec![0, 1, 0, 1]).unwrap();
        let hists = initial_histograms(&g, 3);
        let counts = count_matrix(&maps, &g);
        let latent = step1_update_z(&counts, &hists, ZMode::Quantized);
        let cost = assignment_costs(&maps, &latent, &hists);
        // Indices 0 and 1 share a pattern, so their cost rows coincide.
        assert_eq!(cost[0..2], cost[2..4]);
        let before = objective(&maps, &g, &latent, &hists).unwrap();
        let mut swapped = g.clone();
        swapped.swap(0, 1);
        assert_eq!(objective(&maps, &swapped, &latent, &hists).unwrap(), before);
    }

    #[test]
    fn planted_partition_recovered() {
        let spec = SyntheticSpec::uniform(64, 8, 0.95, 0.05, 100, 3);
        let corpus = gen_synthetic(&spec).unwrap();
        let (model, trace) = fit(&corpus.maps, &FitConfig::new(8).with_seed(1)).unwrap();
        assert!(trace.is_monotone());
        let ari = adjusted_rand_index(model.grouping().assignment(), &corpus.planted).unwrap();
        assert!(ari > 0.99, "ARI {ari}");
    }

    #[test]
    fn empirical_mode_is_monotone() {
        let spec = SyntheticSpec::uniform(36, 6, 0.8, 0.1, 40, 5);
        let corpus = gen_synthetic(&spec).unwrap();
        let mut cfg = FitConfig::new(6).with_seed(2);
        cfg.z_mode = ZMode::Empirical;
        let (_, trace) = fit(&corpus.maps, &cfg).unwrap();
        assert!(trace.is_monotone());
        assert!(trace.records.iter().all(|r| r.delta_step1 == 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig::new(1).validate().is_err());
        let mut c = FitConfig::new(4);
        c.bins = 1;
        assert!(c.validate().is_err());
        let d = IndexDomain::pixel(4, 1).unwrap();
        assert!(fit(&[], &FitConfig::new(2)).is_err());
        let maps = vec![SignificanceMap::empty(d), SignificanceMap::empty(IndexDomain::pixel(2, 2).unwrap())];
        assert!(fit(&maps, &FitConfig::new(2)).is_err());
    }
}
