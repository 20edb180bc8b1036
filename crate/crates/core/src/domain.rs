//! Axis-aligned boxes: the sampling domain and its subregions.

use std::path::Path;

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json;

/// Largest number of cells `init_subregions` will build.
pub const MAX_SUBREGIONS: u64 = 1 << 24;

/// An axis-aligned box `∏ (low[i], high[i])` with nonempty interior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoxFile")]
pub struct Hyperbox {
    low: Vec<f64>,
    high: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxFile {
    low: Vec<f64>,
    high: Vec<f64>,
}

impl TryFrom<BoxFile> for Hyperbox {
    type Error = Error;

    fn try_from(f: BoxFile) -> Result<Self> {
        Hyperbox::new(f.low, f.high)
    }
}

impl Hyperbox {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        if low.len() != high.len() {
            return Err(Error::InvalidBox(format!(
                "low has {} coordinates but high has {}",
                low.len(),
                high.len()
            )));
        }
        if low.is_empty() {
            return Err(Error::InvalidBox("zero-dimensional box".into()));
        }
        for (i, (l, h)) in low.iter().zip(&high).enumerate() {
            if !l.is_finite() || !h.is_finite() {
                return Err(Error::InvalidBox(format!(
                    "bounds of dimension {i} are not finite"
                )));
            }
            if l >= h {
                return Err(Error::InvalidBox(format!(
                    "dimension {i}: low {l} is not below high {h}"
                )));
            }
        }
        Ok(Hyperbox { low, high })
    }

    /// `[lo, hi]^dim`
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Hyperbox::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn low(&self) -> &[f64] {
        &self.low
    }

    pub fn high(&self) -> &[f64] {
        &self.high
    }

    pub fn side(&self, i: usize) -> f64 {
        self.high[i] - self.low[i]
    }

    pub fn sides(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.dim()).map(|i| self.side(i))
    }

    pub fn volume(&self) -> f64 {
        self.sides().product()
    }

    pub fn center(&self) -> Vec<f64> {
        self.low
            .iter()
            .zip(&self.high)
            .map(|(l, h)| l + 0.5 * (h - l))
            .collect()
    }

    /// Closed-bounds membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.low.iter().zip(&self.high))
                .all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    /// Dimension of the longest side; ties go to the lowest index.
    pub fn longest_dim(&self) -> usize {
        let mut best = 0;
        for i in 1..self.dim() {
            if self.side(i) > self.side(best) {
                best = i;
            }
        }
        best
    }

    /// Halves the longest side at its midpoint. The lower half comes first.
    pub fn subdivide(&self) -> (Hyperbox, Hyperbox) {
        let d = self.longest_dim();
        let mid = self.low[d] + 0.5 * (self.high[d] - self.low[d]);
        let mut left = self.clone();
        let mut right = self.clone();
        left.high[d] = mid;
        right.low[d] = mid;
        (left, right)
    }

    /// The regular grid of `k^d` congruent cells, in lexicographic order of
    /// their grid index (first coordinate most significant). Neighbouring
    /// cells share bit-identical faces.
    pub fn init_subregions(&self, k: usize) -> Result<Vec<Hyperbox>> {
        let d = self.dim();
        if k == 0 {
            return Err(Error::InvalidConfig(
                "number of divisions must be at least 1".into(),
            ));
        }
        let count = checked_pow(k, d).filter(|&c| c <= MAX_SUBREGIONS);
        let count = match count {
            Some(c) => c as usize,
            None => {
                return Err(Error::PartitionTooLarge {
                    k,
                    dim: d,
                    limit: MAX_SUBREGIONS,
                })
            }
        };
        let edges: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                (0..=k)
                    .map(|j| {
                        if j == k {
                            self.high[i]
                        } else {
                            self.low[i] + self.side(i) * (j as f64 / k as f64)
                        }
                    })
                    .collect()
            })
            .collect();
        let mut out = Vec::with_capacity(count);
        let mut index = vec![0usize; d];
        for _ in 0..count {
            let low = (0..d).map(|i| edges[i][index[i]]).collect();
            let high = (0..d).map(|i| edges[i][index[i] + 1]).collect();
            out.push(Hyperbox { low, high });
            for i in (0..d).rev() {
                index[i] += 1;
                if index[i] < k {
                    break;
                }
                index[i] = 0;
            }
        }
        Ok(out)
    }

    /// One point with every coordinate uniform on the open side interval.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.low
            .iter()
            .zip(&self.high)
            .map(|(l, h)| {
                let u: f64 = rng.sample(Open01);
                // Rounding can land on a face of very thin boxes.
                (l + u * (h - l)).clamp(*l, *h)
            })
            .collect()
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        json::read_file(path)
    }
}

fn checked_pow(base: usize, exp: usize) -> Option<u64> {
    let mut acc: u64 = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base as u64)?;
    }
    Some(acc)
}

/// Running statistics of the norm values sampled in one region: count,
/// maximum with its witness, and Welford mean/variance.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionStats {
    n: u64,
    max: f64,
    mean: f64,
    m2: f64,
    argmax: Option<Vec<f64>>,
}

impl Default for RegionStats {
    fn default() -> Self {
        RegionStats {
            n: 0,
            max: f64::NEG_INFINITY,
            mean: 0.0,
            m2: 0.0,
            argmax: None,
        }
    }
}

impl RegionStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// `None` until the first observation.
    pub fn max(&self) -> Option<f64> {
        (self.n > 0).then_some(self.max)
    }

    pub fn argmax(&self) -> Option<&[f64]> {
        self.argmax.as_deref()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn m2(&self) -> f64 {
        self.m2
    }

    /// Sample variance `m2 / (n - 1)`, zero below two observations.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn stddev(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn update(&mut self, value: f64, x: &[f64]) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFiniteValue(value));
        }
        self.n += 1;
        if value > self.max {
            self.max = value;
            self.argmax = Some(x.to_vec());
        }
        let delta = value - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (value - self.mean);
        if self.m2 < 0.0 {
            self.m2 = 0.0;
        }
        Ok(())
    }
}

/// Functional form of [`RegionStats::update`].
pub fn update_stats(mut stats: RegionStats, value: f64, x: &[f64]) -> Result<RegionStats> {
    stats.update(value, x)?;
    Ok(stats)
}
