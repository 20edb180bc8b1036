//! Benchmark sweeps: for every entry of a suite file and every seed, build a
//! network (random or trained on fresh sphere data), compute its reference
//! value once, then run each algorithm at each budget.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use lipest::data::{gen_spheres, SphereDataConfig, DEFAULT_NOISE_STD};
use lipest::json::fmt_f64;
use lipest::oracle::breakpoint_oracle_from;
use lipest::train::{init_mlp, train, TrainConfig};
use lipest::{
    enumerate_breakpoints, estimate, grid_oracle, Algorithm, EstimatorConfig, GridSpec, Hyperbox,
    Mlp, NormPair, NormTag, SigmaMode,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::commands::with_pool;
use crate::settings::{require, resolve, RunManifest};
use crate::{BenchArgs, Failure};

pub const CSV_HEADER: &str =
    "entry,net_seed,algorithm,budget,estimate,reference,relative_error,wall_time_s,status";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Suite {
    entries: Vec<Entry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    #[serde(default)]
    name: Option<String>,
    arch: Vec<usize>,
    seeds: Vec<u64>,
    budgets: Vec<u64>,
    algorithms: Vec<Algorithm>,
    /// Defaults to `[-1, 1]^d`.
    #[serde(default)]
    domain: Option<Hyperbox>,
    /// Sphere data used when `train` is present.
    #[serde(default)]
    data: DataSpec,
    /// Absent: the network keeps its random initialization.
    #[serde(default)]
    train: Option<TrainSpec>,
    reference: Reference,
    #[serde(default)]
    estimator: EstimatorSpec,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DataSpec {
    spheres: usize,
    points: usize,
    noise: f64,
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec {
            spheres: 3,
            points: 800,
            noise: DEFAULT_NOISE_STD,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainSpec {
    lr: f64,
    epochs: usize,
    batch: Option<usize>,
}

impl Default for TrainSpec {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSpec {
            lr: d.learning_rate,
            epochs: d.epochs,
            batch: d.batch,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum Reference {
    Grid {
        points_per_dim: usize,
        #[serde(default)]
        jitter: bool,
    },
    Breakpoints,
    Uniform {
        samples: u64,
        #[serde(default = "reference_seed")]
        seed: u64,
    },
}

fn reference_seed() -> u64 {
    1_000_000
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EstimatorSpec {
    alpha: NormTag,
    beta: NormTag,
    k: usize,
    c: f64,
    tm: f64,
    n0: u64,
    sigma_mode: SigmaMode,
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        let d = EstimatorConfig::default();
        EstimatorSpec {
            alpha: d.pair.alpha(),
            beta: d.pair.beta(),
            k: d.k_divisions,
            c: d.c,
            tm: d.t_m,
            n0: d.n0,
            sigma_mode: d.sigma_mode,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BenchConfig {
    suite: Option<PathBuf>,
    threads: usize,
    out: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            suite: None,
            threads: 1,
            out: None,
        }
    }
}

struct Row {
    entry: String,
    seed: u64,
    algorithm: Algorithm,
    budget: u64,
    estimate: Option<f64>,
    reference: Option<f64>,
    wall_time: Option<f64>,
    error: Option<String>,
}

impl Row {
    fn relative_error(&self) -> Option<f64> {
        let (est, reference) = (self.estimate?, self.reference?);
        Some(if reference == 0.0 {
            if est == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (reference - est) / reference
        })
    }

    fn to_csv(&self) -> String {
        let num = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let status = match &self.error {
            None => "ok".to_string(),
            Some(e) => format!("failed: {e}"),
        };
        format!(
            "{},{},{},{},{},{},{},{},{}",
            csv_field(&self.entry),
            self.seed,
            self.algorithm.as_str(),
            self.budget,
            num(self.estimate),
            num(self.reference),
            num(self.relative_error()),
            num(self.wall_time),
            csv_field(&status)
        )
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn load_suite(path: &Path) -> Result<Suite, Failure> {
    let suite: Suite = lipest::json::read_file(path).map_err(|e| match e {
        lipest::Error::Parse { .. } => Failure::usage(e.to_string()),
        other => other.into(),
    })?;
    let runs: usize = suite
        .entries
        .iter()
        .map(|e| e.seeds.len() * e.budgets.len() * e.algorithms.len())
        .sum();
    if runs == 0 {
        return Err(Failure::usage(format!(
            "{}: suite contains no runs",
            path.display()
        )));
    }
    Ok(suite)
}

pub fn run(args: &BenchArgs, config: Option<&Path>) -> Result<(), Failure> {
    let cfg: BenchConfig = resolve("bench", args, config)?;
    let suite_path = require(&cfg.suite, "suite")?;
    let out = require(&cfg.out, "out")?;
    let suite = load_suite(&suite_path)?;
    let threads = cfg.threads;
    let rows = with_pool(threads, || run_suite(&suite, threads))?;

    let mut text = String::new();
    writeln!(text, "{CSV_HEADER}").unwrap();
    for row in &rows {
        writeln!(text, "{}", row.to_csv()).unwrap();
    }
    std::fs::write(&out, text).map_err(|e| Failure::from(lipest::Error::io(&out, e)))?;

    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!(
            "{failed} of {} runs failed; see the status column",
            rows.len()
        );
    }
    let mut manifest = RunManifest::new("bench", &cfg, None);
    manifest.inputs.push(suite_path);
    manifest.outputs.push(out.clone());
    manifest.results = Some(json!({ "runs": rows.len(), "failed": failed }));
    manifest.write(&out)?;
    Ok(())
}

fn run_suite(suite: &Suite, threads: usize) -> Vec<Row> {
    let mut rows = Vec::new();
    for (i, entry) in suite.entries.iter().enumerate() {
        let name = entry.name.clone().unwrap_or_else(|| format!("entry{i}"));
        for &seed in &entry.seeds {
            let prepared = build_net(entry, seed).map(|(net, domain)| {
                let reference = reference_value(entry, &net, &domain);
                (net, domain, reference)
            });
            for &algorithm in &entry.algorithms {
                for &budget in &entry.budgets {
                    let mut row = Row {
                        entry: name.clone(),
                        seed,
                        algorithm,
                        budget,
                        estimate: None,
                        reference: None,
                        wall_time: None,
                        error: None,
                    };
                    match &prepared {
                        Err(e) => row.error = Some(format!("network: {e}")),
                        Ok((net, domain, reference)) => {
                            match reference {
                                Ok(v) => row.reference = Some(*v),
                                Err(e) => row.error = Some(format!("reference: {e}")),
                            }
                            let config = estimator_config(entry, algorithm, budget, seed, threads);
                            match config.and_then(|c| estimate(net, domain, &c)) {
                                Ok(report) => {
                                    row.estimate = Some(report.estimate);
                                    row.wall_time = Some(report.wall_time);
                                }
                                Err(e) => row.error = Some(e.to_string()),
                            }
                        }
                    }
                    rows.push(row);
                }
            }
        }
    }
    rows
}

fn build_net(entry: &Entry, seed: u64) -> lipest::Result<(Mlp, Hyperbox)> {
    let net = init_mlp(&entry.arch, seed)?;
    let domain = match &entry.domain {
        Some(d) => d.clone(),
        None => Hyperbox::cube(net.input_dim(), -1.0, 1.0)?,
    };
    let Some(spec) = &entry.train else {
        return Ok((net, domain));
    };
    let data = gen_spheres(
        &domain,
        &SphereDataConfig {
            n_spheres: entry.data.spheres,
            n_points: entry.data.points,
            noise_std: entry.data.noise,
            seed,
        },
    )?;
    let config = TrainConfig {
        learning_rate: spec.lr,
        epochs: spec.epochs,
        batch: spec.batch,
        seed,
        ..TrainConfig::default()
    };
    Ok((train(&net, &data, &config)?.net, domain))
}

fn reference_value(entry: &Entry, net: &Mlp, domain: &Hyperbox) -> lipest::Result<f64> {
    let pair = NormPair::new(entry.estimator.alpha, entry.estimator.beta)?;
    match entry.reference {
        Reference::Grid {
            points_per_dim,
            jitter,
        } => {
            let spec = GridSpec {
                points_per_dim,
                include_midpoint_jitter: jitter,
            };
            Ok(grid_oracle(net, domain, &spec, pair)?.value)
        }
        Reference::Breakpoints => {
            let breakpoints = enumerate_breakpoints(net, domain)?;
            Ok(breakpoint_oracle_from(net, domain, &breakpoints, pair)?.value)
        }
        Reference::Uniform { samples, seed } => {
            let config = EstimatorConfig::new(Algorithm::Uniform, samples, seed).with_pair(pair);
            Ok(estimate(net, domain, &config)?.estimate)
        }
    }
}

fn estimator_config(
    entry: &Entry,
    algorithm: Algorithm,
    samples: u64,
    seed: u64,
    threads: usize,
) -> lipest::Result<EstimatorConfig> {
    let e = &entry.estimator;
    Ok(EstimatorConfig {
        samples,
        pair: NormPair::new(e.alpha, e.beta)?,
        algorithm,
        k_divisions: e.k,
        c: e.c,
        t_m: e.tm,
        n0: e.n0,
        seed,
        sigma_mode: e.sigma_mode,
        threads,
    })
}
