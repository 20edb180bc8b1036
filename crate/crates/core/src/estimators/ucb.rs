//! Adaptive bisection driven by an upper-confidence index.
//!
//! The region set starts as the whole domain. Each iteration picks the region
//! with the largest score
//!
//! ```text
//! max + c · sqrt(ln(t + 1) / n) · σ      (n > n0)
//! +∞                                      (n ≤ n0)
//! ```
//!
//! and draws one point from it. At iterations `⌈t_m⌉, ⌈t_m²⌉, …` the selected
//! region is first bisected along its longest side; the children start with
//! empty statistics and the sample goes to the lower child.

use std::time::Instant;

use rand_chacha::ChaCha8Rng;

use super::{
    check_inputs, region_rng, sample_value, EstimateReport, EstimatorConfig, RunningMax, SigmaMode,
};
use crate::domain::{Hyperbox, RegionStats};
use crate::error::Result;
use crate::net::Mlp;

/// Index of a region at global iteration `t`; `+∞` while bootstrapping.
pub fn ucb_score(stats: &RegionStats, t: u64, config: &EstimatorConfig) -> f64 {
    if stats.n() <= config.n0 {
        return f64::INFINITY;
    }
    let spread = match config.sigma_mode {
        SigmaMode::Stddev => stats.stddev(),
        SigmaMode::Variance => stats.variance(),
    };
    let max = stats.max().unwrap_or(0.0);
    let bonus = ((t as f64 + 1.0).ln() / stats.n() as f64).sqrt();
    max + config.c * bonus * spread
}

#[derive(Debug, Clone)]
struct Region {
    /// Creation order; breaks score ties.
    id: u64,
    bounds: Hyperbox,
    stats: RegionStats,
}

/// Step-by-step driver, exposed so callers can inspect the region set
/// between iterations.
pub struct UcbSampler<'a> {
    net: &'a Mlp,
    config: EstimatorConfig,
    regions: Vec<Region>,
    rng: ChaCha8Rng,
    iteration: u64,
    deadline: u64,
    deadline_exact: f64,
    next_id: u64,
    running: RunningMax,
}

impl<'a> UcbSampler<'a> {
    pub fn new(net: &'a Mlp, domain: &Hyperbox, config: &EstimatorConfig) -> Result<Self> {
        check_inputs(net, domain, config)?;
        Ok(UcbSampler {
            net,
            config: config.clone(),
            regions: vec![Region {
                id: 0,
                bounds: domain.clone(),
                stats: RegionStats::new(),
            }],
            rng: region_rng(config.seed, 0),
            iteration: 0,
            deadline: config.t_m.ceil() as u64,
            deadline_exact: config.t_m,
            next_id: 1,
            running: RunningMax::new(),
        })
    }

    /// Completed iterations.
    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn estimate(&self) -> f64 {
        self.running.value
    }

    /// Live regions in creation order.
    pub fn regions(&self) -> Vec<(&Hyperbox, &RegionStats)> {
        let mut live: Vec<&Region> = self.regions.iter().collect();
        live.sort_by_key(|r| r.id);
        live.into_iter().map(|r| (&r.bounds, &r.stats)).collect()
    }

    fn select(&self, t: u64) -> usize {
        let mut best = 0;
        let mut best_score = ucb_score(&self.regions[0].stats, t, &self.config);
        for (i, r) in self.regions.iter().enumerate().skip(1) {
            let score = ucb_score(&r.stats, t, &self.config);
            let better =
                score > best_score || (score == best_score && r.id < self.regions[best].id);
            if better {
                best = i;
                best_score = score;
            }
        }
        best
    }

    /// Runs one iteration: select, maybe bisect, sample, update.
    pub fn step(&mut self) -> Result<()> {
        let t = self.iteration + 1;
        let chosen = self.select(t);
        if t == self.deadline {
            let (lower, upper) = self.regions[chosen].bounds.subdivide();
            self.regions[chosen] = Region {
                id: self.next_id,
                bounds: lower,
                stats: RegionStats::new(),
            };
            self.regions.push(Region {
                id: self.next_id + 1,
                bounds: upper,
                stats: RegionStats::new(),
            });
            self.next_id += 2;
            self.advance_deadline(t);
        }
        let region = &mut self.regions[chosen];
        let x = region.bounds.sample_uniform(&mut self.rng);
        let value = sample_value(self.net, self.config.pair, &x)?;
        region.stats.update(value, &x)?;
        self.running.observe(value, &x);
        self.iteration = t;
        Ok(())
    }

    /// Multiplies the deadline by `t_m` until its ceiling lies in the future.
    fn advance_deadline(&mut self, now: u64) {
        loop {
            self.deadline_exact *= self.config.t_m;
            let next = self.deadline_exact.ceil();
            if next > now as f64 {
                self.deadline = if next >= u64::MAX as f64 {
                    u64::MAX
                } else {
                    next as u64
                };
                return;
            }
        }
    }

    pub fn into_report(self, wall_time: f64) -> EstimateReport {
        let mut regions = self.regions;
        regions.sort_by_key(|r| r.id);
        EstimateReport {
            estimate: self.running.value,
            argmax: self.running.argmax.unwrap_or_default(),
            samples_used: self.running.count,
            wall_time,
            algorithm: super::Algorithm::Ucb,
            pair: self.config.pair,
            seed: self.config.seed,
            regions: regions.into_iter().map(|r| (r.bounds, r.stats)).collect(),
            trace: self.running.trace,
        }
    }
}

pub fn estimate_ucb(
    net: &Mlp,
    domain: &Hyperbox,
    config: &EstimatorConfig,
) -> Result<EstimateReport> {
    let mut sampler = UcbSampler::new(net, domain, config)?;
    let start = Instant::now();
    for _ in 0..config.samples {
        sampler.step()?;
    }
    let wall_time = start.elapsed().as_secs_f64();
    Ok(sampler.into_report(wall_time))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats_with(values: &[f64]) -> RegionStats {
        let mut s = RegionStats::new();
        for v in values {
            s.update(*v, &[0.0]).unwrap();
        }
        s
    }

    #[test]
    fn bootstrap_regions_score_infinity() {
        let config = EstimatorConfig::default();
        assert_eq!(ucb_score(&RegionStats::new(), 1, &config), f64::INFINITY);
        assert_eq!(
            ucb_score(&stats_with(&[1.0; 10]), 50, &config),
            f64::INFINITY
        );
    }

    #[test]
    fn zero_spread_scores_its_max() {
        let config = EstimatorConfig::default();
        let s = stats_with(&[5.0; 11]);
        for t in [1, 10, 1_000_000] {
            assert_eq!(ucb_score(&s, t, &config), 5.0);
        }
        let wide = EstimatorConfig { c: 1e6, ..config };
        assert_eq!(ucb_score(&s, 7, &wide), 5.0);
    }

    #[test]
    fn score_formula_by_hand() {
        // 100 values with max 2 and sample standard deviation exactly 1:
        // 50 at 2 and 50 at 2 - 2·sqrt(99/100).
        let low = 2.0 - 2.0 * (99.0f64 / 100.0).sqrt();
        let mut values = vec![2.0; 50];
        values.extend(std::iter::repeat_n(low, 50));
        let s = stats_with(&values);
        assert!((s.stddev() - 1.0).abs() < 1e-12, "{}", s.stddev());
        let config = EstimatorConfig {
            c: 10.0,
            ..Default::default()
        };
        let score = ucb_score(&s, 999, &config);
        // 2 + 10·sqrt(ln(1000)/100), evaluated independently.
        assert!((score - 4.628_260_884_878_466).abs() < 1e-9, "{score}");

        let var_config = EstimatorConfig {
            sigma_mode: SigmaMode::Variance,
            ..config
        };
        assert!((ucb_score(&s, 999, &var_config) - score).abs() < 1e-9);
    }

    #[test]
    fn deadlines_follow_ceiling_of_powers() {
        let net = crate::net::fixtures::abs_net();
        let domain = Hyperbox::cube(1, -1.0, 1.0).unwrap();
        let config = EstimatorConfig {
            t_m: 1.5,
            ..EstimatorConfig::new(super::super::Algorithm::Ucb, 40, 0)
        };
        let mut sampler = UcbSampler::new(&net, &domain, &config).unwrap();
        let mut splits = Vec::new();
        for _ in 0..40 {
            let before = sampler.regions.len();
            sampler.step().unwrap();
            if sampler.regions.len() > before {
                splits.push(sampler.iteration());
            }
        }
        // ⌈1.5^k⌉ for k = 1.. is 2, 3, 4, 6, 8, 12, 18, 26, 39, ...
        assert_eq!(splits, vec![2, 3, 4, 6, 8, 12, 18, 26, 39]);
    }

    #[test]
    fn colliding_deadlines_are_skipped() {
        let net = crate::net::fixtures::abs_net();
        let domain = Hyperbox::cube(1, -1.0, 1.0).unwrap();
        let config = EstimatorConfig {
            t_m: 1.1,
            ..EstimatorConfig::new(super::super::Algorithm::Ucb, 12, 0)
        };
        let mut sampler = UcbSampler::new(&net, &domain, &config).unwrap();
        let mut splits = Vec::new();
        for _ in 0..12 {
            let before = sampler.regions.len();
            sampler.step().unwrap();
            if sampler.regions.len() > before {
                splits.push(sampler.iteration());
            }
        }
        // 1.1^k: 1.1, 1.21, 1.33, ..., 2.14, 2.36, ..., 3.14, ...
        assert_eq!(splits, vec![2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12]);
    }
}
