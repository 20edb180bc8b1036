use std::time::Instant;

use rand_chacha::ChaCha8Rng;

use super::{
    check_inputs, region_rng, Algorithm, BatchEvaluator, EstimateReport, EstimatorConfig,
    RunningMax,
};
use crate::domain::{Hyperbox, RegionStats};
use crate::error::Result;
use crate::net::Mlp;

const BATCH: u64 = 1024;

/// Plain Monte Carlo: `N` i.i.d. uniform points over the whole domain.
pub fn estimate_uniform(
    net: &Mlp,
    domain: &Hyperbox,
    config: &EstimatorConfig,
) -> Result<EstimateReport> {
    check_inputs(net, domain, config)?;
    run_cells(net, vec![domain.clone()], config, Algorithm::Uniform)
}

/// Fixed `K^d` grid; each cell gets `⌊N / K^d⌋` samples and the first
/// `N mod K^d` cells (lexicographic order) one more.
pub fn estimate_partitioned(
    net: &Mlp,
    domain: &Hyperbox,
    config: &EstimatorConfig,
) -> Result<EstimateReport> {
    check_inputs(net, domain, config)?;
    let cells = domain.init_subregions(config.k_divisions)?;
    run_cells(net, cells, config, Algorithm::Partitioned)
}

/// Per-cell sample counts summing to `total`.
pub(crate) fn split_budget(total: u64, cells: usize) -> impl Iterator<Item = u64> {
    let base = total / cells as u64;
    let extra = total % cells as u64;
    (0..cells as u64).map(move |j| base + u64::from(j < extra))
}

/// Samples each cell from its own random stream, in cell order.
fn run_cells(
    net: &Mlp,
    cells: Vec<Hyperbox>,
    config: &EstimatorConfig,
    algorithm: Algorithm,
) -> Result<EstimateReport> {
    let evaluator = BatchEvaluator::new(net, config.pair, config.threads)?;
    let mut running = RunningMax::new();
    let budgets: Vec<u64> = split_budget(config.samples, cells.len()).collect();
    let mut regions = Vec::with_capacity(cells.len());
    let start = Instant::now();
    for (j, (cell, count)) in cells.into_iter().zip(budgets).enumerate() {
        let mut stats = RegionStats::new();
        let mut rng = region_rng(config.seed, j as u64);
        sample_cell(&evaluator, &cell, &mut rng, count, &mut stats, &mut running)?;
        regions.push((cell, stats));
    }
    let wall_time = start.elapsed().as_secs_f64();
    Ok(EstimateReport {
        estimate: running.value,
        argmax: running.argmax.unwrap_or_default(),
        samples_used: running.count,
        wall_time,
        algorithm,
        pair: config.pair,
        seed: config.seed,
        regions,
        trace: running.trace,
    })
}

fn sample_cell(
    evaluator: &BatchEvaluator<'_>,
    cell: &Hyperbox,
    rng: &mut ChaCha8Rng,
    count: u64,
    stats: &mut RegionStats,
    running: &mut RunningMax,
) -> Result<()> {
    let mut remaining = count;
    let mut points = Vec::with_capacity(BATCH.min(count) as usize);
    while remaining > 0 {
        let n = remaining.min(BATCH);
        points.clear();
        points.extend((0..n).map(|_| cell.sample_uniform(rng)));
        let values = evaluator.eval(&points)?;
        for (x, v) in points.iter().zip(values) {
            stats.update(v, x)?;
            running.observe(v, x);
        }
        remaining -= n;
    }
    Ok(())
}
