//! Sampling estimators of the local Lipschitz constant `L^{(α,β)}(f, D)`.
//!
//! Every estimator evaluates `‖J(x)‖_{α,β}` at sampled points `x ∈ D`, where
//! `J` is the backprop selection of the Clarke Jacobian, and returns the
//! running maximum `r`. Since every such Jacobian lies in the Clarke
//! Jacobian, `r` never exceeds the true constant.
//!
//! * [`estimate_uniform`]: i.i.d. uniform draws over the whole domain.
//! * [`estimate_partitioned`]: a fixed `K^d` grid with an equal share per cell.
//! * [`estimate_ucb`]: adaptive bisection, sampling the cell with the best
//!   upper-confidence score.
//!
//! All runs are deterministic given the seed, independent of the thread count.

mod sampling;
mod ucb;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Hyperbox, RegionStats};
use crate::error::{Error, Result};
use crate::net::Mlp;
use crate::norms::{induced_norm, NormPair};

pub use sampling::{estimate_partitioned, estimate_uniform};
pub use ucb::{estimate_ucb, ucb_score, UcbSampler};

/// Interval between trace milestones, in samples.
pub const TRACE_EVERY: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Uniform,
    Partitioned,
    Ucb,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Uniform, Algorithm::Partitioned, Algorithm::Ucb];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Uniform => "uniform",
            Algorithm::Partitioned => "partitioned",
            Algorithm::Ucb => "ucb",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(Algorithm::Uniform),
            "partitioned" => Ok(Algorithm::Partitioned),
            "ucb" => Ok(Algorithm::Ucb),
            other => Err(format!(
                "unknown algorithm `{other}`, expected uniform, partitioned or ucb"
            )),
        }
    }
}

/// What plays the role of the spread term in the UCB score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaMode {
    #[default]
    Stddev,
    Variance,
}

impl FromStr for SigmaMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "stddev" => Ok(SigmaMode::Stddev),
            "variance" => Ok(SigmaMode::Variance),
            other => Err(format!(
                "unknown sigma mode `{other}`, expected stddev or variance"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Total number of Jacobian evaluations `N`.
    pub samples: u64,
    pub pair: NormPair,
    pub algorithm: Algorithm,
    /// Divisions per dimension for the partitioned estimator.
    pub k_divisions: usize,
    /// UCB exploration constant.
    pub c: f64,
    /// Subdivision time multiplier; deadlines are `⌈t_m^k⌉`.
    pub t_m: f64,
    /// Regions with at most this many samples score `+∞`.
    pub n0: u64,
    pub seed: u64,
    pub sigma_mode: SigmaMode,
    /// Worker threads for batched evaluation. Results do not depend on it.
    pub threads: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            samples: 60_000,
            pair: NormPair::inf_inf(),
            algorithm: Algorithm::Ucb,
            k_divisions: 2,
            c: 10.0,
            t_m: 2.0,
            n0: 10,
            seed: 0,
            sigma_mode: SigmaMode::Stddev,
            threads: 1,
        }
    }
}

impl EstimatorConfig {
    pub fn new(algorithm: Algorithm, samples: u64, seed: u64) -> Self {
        EstimatorConfig {
            algorithm,
            samples,
            seed,
            ..Default::default()
        }
    }

    pub fn with_pair(mut self, pair: NormPair) -> Self {
        self.pair = pair;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.samples < 1 {
            return bad("samples must be at least 1");
        }
        if !(self.t_m.is_finite() && self.t_m > 1.0) {
            return bad("subdivision time multiplier must be a finite number above 1");
        }
        if self.n0 < 1 {
            return bad("bootstrap threshold n0 must be at least 1");
        }
        if !(self.c.is_finite() && self.c >= 0.0) {
            return bad("exploration constant must be finite and nonnegative");
        }
        if self.k_divisions < 1 {
            return bad("number of divisions must be at least 1");
        }
        if self.threads < 1 {
            return bad("thread count must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EstimateReport {
    /// The lower bound `r`.
    pub estimate: f64,
    pub argmax: Vec<f64>,
    pub samples_used: u64,
    /// Seconds spent in the sampling loop.
    pub wall_time: f64,
    pub algorithm: Algorithm,
    pub pair: NormPair,
    pub seed: u64,
    /// Live regions at termination with their statistics.
    pub regions: Vec<(Hyperbox, RegionStats)>,
    /// `(samples so far, running r)` every [`TRACE_EVERY`] samples.
    pub trace: Vec<(u64, f64)>,
}

impl EstimateReport {
    pub fn to_file(&self) -> ReportFile {
        ReportFile {
            estimate: self.estimate,
            argmax: self.argmax.clone(),
            samples_used: self.samples_used,
            wall_time_s: self.wall_time,
            algorithm: self.algorithm,
            norm_pair: self.pair,
            seed: self.seed,
            regions: self
                .regions
                .iter()
                .map(|(b, s)| RegionFile {
                    low: b.low().to_vec(),
                    high: b.high().to_vec(),
                    n: s.n(),
                    max: s.max(),
                })
                .collect(),
            trace: self.trace.clone(),
        }
    }
}

/// On-disk report schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportFile {
    pub estimate: f64,
    pub argmax: Vec<f64>,
    pub samples_used: u64,
    pub wall_time_s: f64,
    pub algorithm: Algorithm,
    pub norm_pair: NormPair,
    pub seed: u64,
    pub regions: Vec<RegionFile>,
    pub trace: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionFile {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    pub n: u64,
    /// `null` for a region that was never sampled.
    pub max: Option<f64>,
}

/// `‖J(x)‖_{α,β}` for the backprop Jacobian selection at `x`.
pub fn sample_value(net: &Mlp, pair: NormPair, x: &[f64]) -> Result<f64> {
    let tape = net.forward(x)?;
    induced_norm(&net.clarke_jacobian(&tape), pair)
}

/// Dispatches on `config.algorithm`.
pub fn estimate(net: &Mlp, domain: &Hyperbox, config: &EstimatorConfig) -> Result<EstimateReport> {
    match config.algorithm {
        Algorithm::Uniform => estimate_uniform(net, domain, config),
        Algorithm::Partitioned => estimate_partitioned(net, domain, config),
        Algorithm::Ucb => estimate_ucb(net, domain, config),
    }
}

fn check_inputs(net: &Mlp, domain: &Hyperbox, config: &EstimatorConfig) -> Result<()> {
    config.validate()?;
    if domain.dim() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "domain dimension vs network input",
            expected: net.input_dim(),
            found: domain.dim(),
        });
    }
    Ok(())
}

/// Random stream for one region. Stream 0 is the stream of the whole-domain
/// uniform estimator, so a single-cell partition reproduces it exactly.
fn region_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Evaluates batches of pre-drawn points, optionally on a private thread
/// pool. Results come back in draw order.
struct BatchEvaluator<'a> {
    net: &'a Mlp,
    pair: NormPair,
    pool: Option<rayon::ThreadPool>,
}

impl<'a> BatchEvaluator<'a> {
    fn new(net: &'a Mlp, pair: NormPair, threads: usize) -> Result<Self> {
        let pool = if threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(BatchEvaluator { net, pair, pool })
    }

    fn eval(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        match &self.pool {
            Some(pool) => pool.install(|| {
                points
                    .par_iter()
                    .map(|x| sample_value(self.net, self.pair, x))
                    .collect()
            }),
            None => points
                .iter()
                .map(|x| sample_value(self.net, self.pair, x))
                .collect(),
        }
    }
}

/// The global running maximum with its witness and milestone trace.
#[derive(Debug, Clone)]
struct RunningMax {
    value: f64,
    argmax: Option<Vec<f64>>,
    count: u64,
    trace: Vec<(u64, f64)>,
}

impl RunningMax {
    fn new() -> Self {
        RunningMax {
            value: 0.0,
            argmax: None,
            count: 0,
            trace: Vec::new(),
        }
    }

    fn observe(&mut self, value: f64, x: &[f64]) {
        self.count += 1;
        if value > self.value || self.argmax.is_none() {
            self.value = self.value.max(value);
            self.argmax = Some(x.to_vec());
        }
        if self.count.is_multiple_of(TRACE_EVERY) {
            self.trace.push((self.count, self.value));
        }
    }
}
