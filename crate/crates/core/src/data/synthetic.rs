//! Planted-group corpora: significance maps with a known balanced partition.
//!
//! Randomness (see [`crate::rng`]):
//!
//! * stream 0 of `seed` shuffles `0..n`; the index at shuffled position `i`
//!   joins planted group `i / s`.
//! * map `l` uses stream `1 + l`. It first draws one on/off state per group
//!   (`uniform() < 0.5` means on), then visits indices in ascending order and
//!   marks index `p` significant when `uniform() < p_on` (group on) or
//!   `uniform() < p_off` (group off).

use serde::{Deserialize, Serialize};

use crate::rng::SplitMix64;
use crate::sparsity::{IndexDomain, SignificanceMap};
use crate::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Activation {
    pub p_on: f64,
    pub p_off: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub domain_size: usize,
    pub group_size: usize,
    /// One pair shared by all groups, or one per group.
    pub activation: Vec<Activation>,
    pub samples: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn uniform(domain_size: usize, group_size: usize, p_on: f64, p_off: f64, samples: usize, seed: u64) -> Self {
        Self {
            domain_size,
            group_size,
            activation: vec![Activation { p_on, p_off }],
            samples,
            seed,
        }
    }

    pub fn num_groups(&self) -> usize {
        self.domain_size / self.group_size.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.group_size == 0 || self.domain_size == 0 || !self.domain_size.is_multiple_of(self.group_size) {
            return Err(invalid(format!(
                "planted group size {} must divide domain size {}",
                self.group_size, self.domain_size
            )));
        }
        if self.samples == 0 {
            return Err(invalid("sample count must be positive"));
        }
        if self.activation.len() != 1 && self.activation.len() != self.num_groups() {
            return Err(invalid(format!(
                "{} activation pairs for {} groups",
                self.activation.len(),
                self.num_groups()
            )));
        }
        for a in &self.activation {
            // The degenerate endpoints 0 and 1 are allowed.
            if !(0.0 <= a.p_off && a.p_off < a.p_on && a.p_on <= 1.0) {
                return Err(invalid(format!(
                    "need 0 <= p_off < p_on <= 1, got p_off = {}, p_on = {}",
                    a.p_off, a.p_on
                )));
            }
        }
        Ok(())
    }

    fn activation_of(&self, k: usize) -> Activation {
        if self.activation.len() == 1 {
            self.activation[0]
        } else {
            self.activation[k]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub domain: IndexDomain,
    /// Planted group of every index.
    pub planted: Vec<usize>,
    pub maps: Vec<SignificanceMap>,
}

impl SyntheticCorpus {
    /// First `train` maps, then the rest.
    pub fn split(&self, train: usize) -> (Vec<SignificanceMap>, Vec<SignificanceMap>) {
        let train = train.min(self.maps.len());
        (self.maps[..train].to_vec(), self.maps[train..].to_vec())
    }
}

pub fn planted_partition(domain_size: usize, group_size: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..domain_size).collect();
    SplitMix64::stream(seed, 0).shuffle(&mut order);
    let mut planted = vec![0; domain_size];
    for (slot, &p) in order.iter().enumerate() {
        planted[p] = slot / group_size;
    }
    planted
}

/// Generate a corpus on the most square pixel grid of the requested size.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let domain = IndexDomain::pixel_of_size(spec.domain_size)?;
    let planted = planted_partition(spec.domain_size, spec.group_size, spec.seed);
    let groups = spec.num_groups();
    let maps = (0..spec.samples)
        .map(|l| {
            let mut rng = SplitMix64::stream(spec.seed, 1 + l as u64);
            let on: Vec<bool> = (0..groups).map(|_| rng.bernoulli(0.5)).collect();
            let mut y = SignificanceMap::empty(domain);
            for (p, &k) in planted.iter().enumerate() {
                let a = spec.activation_of(k);
                if rng.bernoulli(if on[k] { a.p_on } else { a.p_off }) {
                    y.insert(p);
                }
            }
            y
        })
        .collect();
    Ok(SyntheticCorpus {
        domain,
        planted,
        maps,
    })
}
