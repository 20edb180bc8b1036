use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use lipest::data::{gen_spheres, Dataset, SphereDataConfig, DEFAULT_NOISE_STD};
use lipest::json::fmt_f64;
use lipest::oracle::{breakpoint_oracle_from, lattice_values};
use lipest::train::{init_mlp, TrainConfig};
use lipest::{
    enumerate_breakpoints, estimate as run_estimate, grid_oracle, Algorithm, EstimatorConfig,
    GridSpec, Hyperbox, Mlp, NormPair, NormTag, SigmaMode,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::settings::{require, resolve, RunManifest};
use crate::{EstimateArgs, Failure, GenDataArgs, HeatmapArgs, OracleArgs, OracleMode, TrainArgs};

pub fn load_model(path: &Path) -> Result<Mlp, Failure> {
    Mlp::load_json(path).map_err(Failure::input)
}

/// The domain file if given, else `[-1, 1]^dim`.
pub fn load_domain(path: Option<&Path>, dim: usize) -> Result<Hyperbox, Failure> {
    let Some(path) = path else {
        return Ok(Hyperbox::cube(dim, -1.0, 1.0)?);
    };
    let domain = Hyperbox::load_json(path).map_err(Failure::input)?;
    if domain.dim() != dim {
        return Err(Failure::domain(format!(
            "{}: domain has dimension {} but the model takes {dim} inputs",
            path.display(),
            domain.dim()
        )));
    }
    Ok(domain)
}

pub fn norm_pair(alpha: NormTag, beta: NormTag) -> Result<NormPair, Failure> {
    Ok(NormPair::new(alpha, beta)?)
}

/// Runs `f` on a pool of `threads` workers.
pub fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    if threads < 1 {
        return Err(Failure::usage("thread count must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure::usage(format!("cannot start {threads} threads: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenDataConfig {
    dim: Option<usize>,
    spheres: usize,
    points: usize,
    domain: Option<PathBuf>,
    seed: u64,
    noise: f64,
    out: Option<PathBuf>,
}

impl Default for GenDataConfig {
    fn default() -> Self {
        GenDataConfig {
            dim: None,
            spheres: 3,
            points: 800,
            domain: None,
            seed: 0,
            noise: DEFAULT_NOISE_STD,
            out: None,
        }
    }
}

pub fn gen_data(args: &GenDataArgs, config: Option<&Path>) -> Result<(), Failure> {
    let cfg: GenDataConfig = resolve("gen-data", args, config)?;
    let out = require(&cfg.out, "out")?;
    let domain = match (&cfg.domain, cfg.dim) {
        (Some(path), dim) => {
            let domain = Hyperbox::load_json(path).map_err(Failure::input)?;
            if dim.is_some_and(|d| d != domain.dim()) {
                return Err(Failure::usage(format!(
                    "--dim {} disagrees with the {}-dimensional domain in {}",
                    dim.unwrap_or_default(),
                    domain.dim(),
                    path.display()
                )));
            }
            domain
        }
        (None, Some(dim)) => {
            Hyperbox::cube(dim, -1.0, 1.0).map_err(|e| Failure::usage(e.to_string()))?
        }
        (None, None) => return Err(Failure::missing("dim")),
    };
    let data = gen_spheres(
        &domain,
        &SphereDataConfig {
            n_spheres: cfg.spheres,
            n_points: cfg.points,
            noise_std: cfg.noise,
            seed: cfg.seed,
        },
    )?;
    data.save_json(&out)?;
    let mut manifest = RunManifest::new("gen-data", &cfg, Some(cfg.seed));
    manifest.inputs.extend(cfg.domain.clone());
    manifest.outputs.push(out.clone());
    manifest.write(&out)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainCmdConfig {
    data: Option<PathBuf>,
    arch: Option<Vec<usize>>,
    lr: f64,
    epochs: usize,
    seed: u64,
    batch: Option<usize>,
    out: Option<PathBuf>,
}

impl Default for TrainCmdConfig {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainCmdConfig {
            data: None,
            arch: None,
            lr: d.learning_rate,
            epochs: d.epochs,
            seed: d.seed,
            batch: d.batch,
            out: None,
        }
    }
}

pub fn train(args: &TrainArgs, config: Option<&Path>) -> Result<(), Failure> {
    let cfg: TrainCmdConfig = resolve("train", args, config)?;
    let data_path = require(&cfg.data, "data")?;
    let arch = require(&cfg.arch, "arch")?;
    let out = require(&cfg.out, "out")?;
    let train_config = TrainConfig {
        learning_rate: cfg.lr,
        epochs: cfg.epochs,
        batch: cfg.batch,
        seed: cfg.seed,
        ..TrainConfig::default()
    };
    train_config.validate()?;
    let net = init_mlp(&arch, cfg.seed).map_err(|e| Failure::usage(format!("--arch: {e}")))?;
    let data = Dataset::load(&data_path).map_err(Failure::input)?;
    let outcome = lipest::train::train(&net, &data, &train_config)?;
    outcome.net.save_json(&out)?;
    let mut manifest = RunManifest::new("train", &cfg, Some(cfg.seed));
    manifest.inputs.push(data_path);
    manifest.outputs.push(out.clone());
    manifest.results = Some(json!({
        "initial_loss": outcome.loss_history.first(),
        "final_loss": outcome.final_loss,
    }));
    manifest.write(&out)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateCmdConfig {
    model: Option<PathBuf>,
    domain: Option<PathBuf>,
    alg: Algorithm,
    samples: u64,
    alpha: NormTag,
    beta: NormTag,
    k: usize,
    c: f64,
    tm: f64,
    n0: u64,
    seed: u64,
    sigma_mode: SigmaMode,
    threads: usize,
    out: Option<PathBuf>,
}

impl Default for EstimateCmdConfig {
    fn default() -> Self {
        let d = EstimatorConfig::default();
        EstimateCmdConfig {
            model: None,
            domain: None,
            alg: d.algorithm,
            samples: d.samples,
            alpha: d.pair.alpha(),
            beta: d.pair.beta(),
            k: d.k_divisions,
            c: d.c,
            tm: d.t_m,
            n0: d.n0,
            seed: d.seed,
            sigma_mode: d.sigma_mode,
            threads: d.threads,
            out: None,
        }
    }
}

pub fn estimate(args: &EstimateArgs, config: Option<&Path>) -> Result<(), Failure> {
    let cfg: EstimateCmdConfig = resolve("estimate", args, config)?;
    let model_path = require(&cfg.model, "model")?;
    let out = require(&cfg.out, "out")?;
    let pair = norm_pair(cfg.alpha, cfg.beta)?;
    let net = load_model(&model_path)?;
    let domain = load_domain(cfg.domain.as_deref(), net.input_dim())?;
    let est_config = EstimatorConfig {
        samples: cfg.samples,
        pair,
        algorithm: cfg.alg,
        k_divisions: cfg.k,
        c: cfg.c,
        t_m: cfg.tm,
        n0: cfg.n0,
        seed: cfg.seed,
        sigma_mode: cfg.sigma_mode,
        threads: cfg.threads,
    };
    let report = run_estimate(&net, &domain, &est_config)?;
    lipest::json::write_file(&out, &report.to_file())?;
    let mut manifest = RunManifest::new("estimate", &cfg, Some(cfg.seed));
    manifest.inputs.push(model_path);
    manifest.inputs.extend(cfg.domain.clone());
    manifest.outputs.push(out.clone());
    manifest.results = Some(json!({ "estimate": report.estimate }));
    manifest.write(&out)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleCmdConfig {
    model: Option<PathBuf>,
    mode: OracleMode,
    grid: usize,
    jitter: bool,
    alpha: NormTag,
    beta: NormTag,
    domain: Option<PathBuf>,
    threads: usize,
    out: Option<PathBuf>,
}

impl Default for OracleCmdConfig {
    fn default() -> Self {
        OracleCmdConfig {
            model: None,
            mode: OracleMode::Grid,
            grid: 400,
            jitter: false,
            alpha: NormTag::Inf,
            beta: NormTag::Inf,
            domain: None,
            threads: 1,
            out: None,
        }
    }
}

#[derive(Debug, Serialize)]
struct OracleReport {
    mode: OracleMode,
    value: f64,
    argmax: Vec<f64>,
    norm_pair: NormPair,
    #[serde(skip_serializing_if = "Option::is_none")]
    points_per_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    jitter: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    breakpoint_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    breakpoints: Option<Vec<f64>>,
    wall_time_s: f64,
}

pub fn oracle(args: &OracleArgs, config: Option<&Path>) -> Result<(), Failure> {
    let cfg: OracleCmdConfig = resolve("oracle", args, config)?;
    let model_path = require(&cfg.model, "model")?;
    let out = require(&cfg.out, "out")?;
    let pair = norm_pair(cfg.alpha, cfg.beta)?;
    let net = load_model(&model_path)?;
    let domain = load_domain(cfg.domain.as_deref(), net.input_dim())?;
    let start = Instant::now();
    let mut report = match cfg.mode {
        OracleMode::Grid => {
            let spec = GridSpec {
                points_per_dim: cfg.grid,
                include_midpoint_jitter: cfg.jitter,
            };
            let best = with_pool(cfg.threads, || grid_oracle(&net, &domain, &spec, pair))??;
            OracleReport {
                mode: cfg.mode,
                value: best.value,
                argmax: best.argmax,
                norm_pair: pair,
                points_per_dim: Some(cfg.grid),
                jitter: Some(cfg.jitter),
                breakpoint_count: None,
                breakpoints: None,
                wall_time_s: 0.0,
            }
        }
        OracleMode::Breakpoints => {
            let breakpoints = enumerate_breakpoints(&net, &domain)?;
            let best = breakpoint_oracle_from(&net, &domain, &breakpoints, pair)?;
            OracleReport {
                mode: cfg.mode,
                value: best.value,
                argmax: best.argmax,
                norm_pair: pair,
                points_per_dim: None,
                jitter: None,
                breakpoint_count: Some(breakpoints.len()),
                breakpoints: Some(breakpoints),
                wall_time_s: 0.0,
            }
        }
    };
    report.wall_time_s = start.elapsed().as_secs_f64();
    lipest::json::write_file(&out, &report)?;
    let mut manifest = RunManifest::new("oracle", &cfg, None);
    manifest.inputs.push(model_path);
    manifest.inputs.extend(cfg.domain.clone());
    manifest.outputs.push(out.clone());
    manifest.results = Some(json!({ "value": report.value }));
    manifest.write(&out)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeatmapCmdConfig {
    model: Option<PathBuf>,
    grid: usize,
    alpha: NormTag,
    beta: NormTag,
    domain: Option<PathBuf>,
    threads: usize,
    out: Option<PathBuf>,
}

impl Default for HeatmapCmdConfig {
    fn default() -> Self {
        HeatmapCmdConfig {
            model: None,
            grid: 400,
            alpha: NormTag::Inf,
            beta: NormTag::Inf,
            domain: None,
            threads: 1,
            out: None,
        }
    }
}

pub fn heatmap(args: &HeatmapArgs, config: Option<&Path>) -> Result<(), Failure> {
    let cfg: HeatmapCmdConfig = resolve("heatmap", args, config)?;
    let model_path = require(&cfg.model, "model")?;
    let out = require(&cfg.out, "out")?;
    let pair = norm_pair(cfg.alpha, cfg.beta)?;
    let net = load_model(&model_path)?;
    if net.input_dim() != 2 {
        return Err(Failure::domain(format!(
            "heatmap needs a model with 2 inputs, {} has {}",
            model_path.display(),
            net.input_dim()
        )));
    }
    let domain = load_domain(cfg.domain.as_deref(), 2)?;
    let values = with_pool(cfg.threads, || {
        lattice_values(&net, &domain, cfg.grid, pair)
    })??;
    write_heatmap(&out, &values).map_err(|e| Failure::from(lipest::Error::io(&out, e)))?;
    let mut manifest = RunManifest::new("heatmap", &cfg, None);
    manifest.inputs.push(model_path);
    manifest.inputs.extend(cfg.domain.clone());
    manifest.outputs.push(out.clone());
    manifest.write(&out)?;
    Ok(())
}

fn write_heatmap(path: &Path, values: &[(Vec<f64>, f64)]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "x0,x1,norm")?;
    for (x, v) in values {
        writeln!(w, "{},{},{}", fmt_f64(x[0]), fmt_f64(x[1]), fmt_f64(*v))?;
    }
    w.flush()
}
