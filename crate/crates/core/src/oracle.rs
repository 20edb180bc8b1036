//! Reference values of the local Lipschitz constant, computed without
//! sampling: a dense lattice for any input dimension, and exact breakpoint
//! enumeration for scalar-input networks.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::Hyperbox;
use crate::error::{Error, Result};
use crate::estimators::sample_value;
use crate::net::Mlp;
use crate::norms::NormPair;

/// Largest lattice `grid_oracle` will evaluate.
pub const MAX_GRID_POINTS: u64 = 100_000_000;

/// Breakpoints closer than this are merged.
pub const BREAKPOINT_DEDUP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points_per_dim: usize,
    /// Also evaluate the center of every lattice cell.
    pub include_midpoint_jitter: bool,
}

impl GridSpec {
    pub fn new(points_per_dim: usize) -> Self {
        GridSpec {
            points_per_dim,
            include_midpoint_jitter: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleValue {
    pub value: f64,
    pub argmax: Vec<f64>,
}

/// The regular lattice with `points_per_dim` points per axis, faces included.
#[derive(Debug, Clone)]
pub struct Lattice<'a> {
    domain: &'a Hyperbox,
    points_per_dim: usize,
    len: u64,
}

impl<'a> Lattice<'a> {
    pub fn new(domain: &'a Hyperbox, points_per_dim: usize) -> Result<Self> {
        if points_per_dim < 2 {
            return Err(Error::InvalidConfig(
                "a grid needs at least 2 points per dimension".into(),
            ));
        }
        let too_large = || Error::GridTooLarge {
            points_per_dim,
            dim: domain.dim(),
            limit: MAX_GRID_POINTS,
        };
        let mut len: u64 = 1;
        for _ in 0..domain.dim() {
            len = len
                .checked_mul(points_per_dim as u64)
                .filter(|n| *n <= MAX_GRID_POINTS)
                .ok_or_else(too_large)?;
        }
        Ok(Lattice {
            domain,
            points_per_dim,
            len,
        })
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Coordinate of grid line `j` along axis `i`; the last line is the face.
    pub fn coordinate(&self, i: usize, j: usize) -> f64 {
        let last = self.points_per_dim - 1;
        if j == last {
            self.domain.high()[i]
        } else {
            self.domain.low()[i] + self.domain.side(i) * (j as f64 / last as f64)
        }
    }

    /// Point number `index` in row-major order (first axis slowest).
    pub fn point(&self, index: u64) -> Vec<f64> {
        let p = self.points_per_dim as u64;
        let d = self.domain.dim();
        let mut x = vec![0.0; d];
        let mut rest = index;
        for i in (0..d).rev() {
            x[i] = self.coordinate(i, (rest % p) as usize);
            rest /= p;
        }
        x
    }

    fn cell_count(&self) -> u64 {
        (self.points_per_dim as u64 - 1).pow(self.domain.dim() as u32)
    }

    fn cell_center(&self, index: u64) -> Vec<f64> {
        let p = self.points_per_dim as u64 - 1;
        let d = self.domain.dim();
        let mut x = vec![0.0; d];
        let mut rest = index;
        for i in (0..d).rev() {
            let j = (rest % p) as usize;
            let (a, b) = (self.coordinate(i, j), self.coordinate(i, j + 1));
            x[i] = a + 0.5 * (b - a);
            rest /= p;
        }
        x
    }
}

/// Larger value wins; equal values go to the lexicographically smaller point.
fn better(a: (f64, Vec<f64>), b: (f64, Vec<f64>)) -> (f64, Vec<f64>) {
    match a.0.partial_cmp(&b.0) {
        Some(Ordering::Greater) => a,
        Some(Ordering::Less) => b,
        _ => {
            if lex_cmp(&b.1, &a.1) == Ordering::Less {
                b
            } else {
                a
            }
        }
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

/// Maximum of `‖J(x)‖_{α,β}` over the lattice (and cell centers if
/// requested). Runs on the current rayon pool; the result does not depend on
/// how the work is split.
pub fn grid_oracle(
    net: &Mlp,
    domain: &Hyperbox,
    spec: &GridSpec,
    pair: NormPair,
) -> Result<OracleValue> {
    check_dim(net, domain)?;
    let lattice = Lattice::new(domain, spec.points_per_dim)?;
    let identity = || (f64::NEG_INFINITY, Vec::new());
    let reduce = |points: &(dyn Fn(u64) -> Vec<f64> + Sync), count: u64| {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let x = points(i);
                sample_value(net, pair, &x).map(|v| (v, x))
            })
            .try_reduce(identity, |a, b| Ok(better(a, b)))
    };
    let mut best = reduce(&|i| lattice.point(i), lattice.len())?;
    if spec.include_midpoint_jitter {
        let centers = reduce(&|i| lattice.cell_center(i), lattice.cell_count())?;
        best = better(best, centers);
    }
    Ok(OracleValue {
        value: best.0,
        argmax: best.1,
    })
}

/// `(point, ‖J(point)‖)` for every lattice point in row-major order.
pub fn lattice_values(
    net: &Mlp,
    domain: &Hyperbox,
    points_per_dim: usize,
    pair: NormPair,
) -> Result<Vec<(Vec<f64>, f64)>> {
    check_dim(net, domain)?;
    let lattice = Lattice::new(domain, points_per_dim)?;
    (0..lattice.len())
        .into_par_iter()
        .map(|i| {
            let x = lattice.point(i);
            sample_value(net, pair, &x).map(|v| (x, v))
        })
        .collect()
}

fn check_dim(net: &Mlp, domain: &Hyperbox) -> Result<()> {
    if domain.dim() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "domain dimension vs network input",
            expected: net.input_dim(),
            found: domain.dim(),
        });
    }
    Ok(())
}

fn check_scalar_input(net: &Mlp, interval: &Hyperbox) -> Result<()> {
    if net.input_dim() != 1 {
        return Err(Error::DimensionMismatch {
            context: "breakpoint enumeration (scalar input only)",
            expected: 1,
            found: net.input_dim(),
        });
    }
    check_dim(net, interval)
}

/// Sorted interior points of `interval` where some hidden preactivation
/// changes sign.
///
/// Works layer by layer: once the breakpoints of the layers below are known,
/// each preactivation of the next layer is affine on every segment between
/// them, so its zero crossings follow from the values at the segment ends.
pub fn enumerate_breakpoints(net: &Mlp, interval: &Hyperbox) -> Result<Vec<f64>> {
    check_scalar_input(net, interval)?;
    let (a, b) = (interval.low()[0], interval.high()[0]);
    let mut breakpoints: Vec<f64> = Vec::new();
    let hidden = net.layers().len() - 1;
    for k in 0..hidden {
        if !net.layers()[k].relu_after() {
            continue;
        }
        let knots: Vec<f64> = std::iter::once(a)
            .chain(breakpoints.iter().copied())
            .chain(std::iter::once(b))
            .collect();
        let preacts = knots
            .iter()
            .map(|x| Ok(net.forward(&[*x])?.preactivations.swap_remove(k)))
            .collect::<Result<Vec<_>>>()?;
        let mut found = Vec::new();
        for s in 0..knots.len() - 1 {
            let (l, r) = (knots[s], knots[s + 1]);
            for (zl, zr) in preacts[s].iter().zip(&preacts[s + 1]) {
                if (*zl < 0.0 && *zr > 0.0) || (*zl > 0.0 && *zr < 0.0) {
                    let x = l + (r - l) * (zl / (zl - zr));
                    found.push(x.clamp(l, r));
                }
            }
        }
        breakpoints.extend(found);
        breakpoints.retain(|x| *x > a && *x < b);
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup_by(|next, kept| *next - *kept <= BREAKPOINT_DEDUP_TOL);
    }
    Ok(breakpoints)
}

/// Exact `L^{(α,β)}(f, interval)` for a scalar-input network: the Jacobian is
/// constant between consecutive breakpoints, so one evaluation at each
/// segment midpoint covers every linear piece.
pub fn breakpoint_oracle_1d(net: &Mlp, interval: &Hyperbox, pair: NormPair) -> Result<OracleValue> {
    let breakpoints = enumerate_breakpoints(net, interval)?;
    breakpoint_oracle_from(net, interval, &breakpoints, pair)
}

/// [`breakpoint_oracle_1d`] with precomputed breakpoints.
pub fn breakpoint_oracle_from(
    net: &Mlp,
    interval: &Hyperbox,
    breakpoints: &[f64],
    pair: NormPair,
) -> Result<OracleValue> {
    check_scalar_input(net, interval)?;
    let (a, b) = (interval.low()[0], interval.high()[0]);
    let knots: Vec<f64> = std::iter::once(a)
        .chain(breakpoints.iter().copied())
        .chain(std::iter::once(b))
        .collect();
    let mut best = OracleValue {
        value: f64::NEG_INFINITY,
        argmax: Vec::new(),
    };
    for w in knots.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let mid = w[0] + 0.5 * (w[1] - w[0]);
        let v = sample_value(net, pair, &[mid])?;
        if v > best.value {
            best = OracleValue {
                value: v,
                argmax: vec![mid],
            };
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::net::fixtures::*;
    use crate::net::AffineLayer;
    use crate::norms::{induced_norm, NormTag};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn interval() -> Hyperbox {
        Hyperbox::cube(1, -1.0, 1.0).unwrap()
    }

    fn linear_net(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mlp {
        let w = Matrix::from_row_major(
            rows,
            cols,
            (0..rows * cols)
                .map(|_| rng.random_range(-2.0..2.0))
                .collect(),
        )
        .unwrap();
        Mlp::new(vec![AffineLayer::new(w, vec![0.1; rows], false).unwrap()]).unwrap()
    }

    #[test]
    fn grid_oracle_on_linear_and_constant_nets() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = linear_net(3, 2, &mut rng);
        let domain = Hyperbox::cube(2, -1.0, 1.0).unwrap();
        for pair in NormPair::all_supported() {
            let exact = induced_norm(net.layers()[0].weights(), pair).unwrap();
            let got = grid_oracle(&net, &domain, &GridSpec::new(7), pair).unwrap();
            assert_eq!(got.value, exact);
            // Every point ties, so the lexicographically smallest wins.
            assert_eq!(got.argmax, vec![-1.0, -1.0]);
        }
        let zero = Mlp::new(vec![AffineLayer::new(
            Matrix::zeros(1, 2),
            vec![3.0],
            false,
        )
        .unwrap()])
        .unwrap();
        let got = grid_oracle(&zero, &domain, &GridSpec::new(5), NormPair::inf_inf()).unwrap();
        assert_eq!(got.value, 0.0);
    }

    #[test]
    fn grid_guards() {
        let net = Mlp::random(&[7, 4, 1], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let domain = Hyperbox::cube(7, -1.0, 1.0).unwrap();
        assert!(matches!(
            grid_oracle(&net, &domain, &GridSpec::new(400), NormPair::inf_inf()),
            Err(Error::GridTooLarge { .. })
        ));
        assert!(grid_oracle(&net, &domain, &GridSpec::new(1), NormPair::inf_inf()).is_err());
    }

    #[test]
    fn lattice_includes_faces() {
        let domain = Hyperbox::new(vec![0.0, -2.0], vec![1.0, 2.0]).unwrap();
        let lattice = Lattice::new(&domain, 3).unwrap();
        assert_eq!(lattice.len(), 9);
        assert_eq!(lattice.point(0), vec![0.0, -2.0]);
        assert_eq!(lattice.point(1), vec![0.0, 0.0]);
        assert_eq!(lattice.point(8), vec![1.0, 2.0]);
        assert_eq!(lattice.cell_center(0), vec![0.25, -1.0]);
    }

    #[test]
    fn grid_result_is_thread_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let net = Mlp::random(&[2, 16, 16, 1], &mut rng).unwrap();
        let domain = Hyperbox::cube(2, -1.0, 1.0).unwrap();
        let spec = GridSpec {
            points_per_dim: 101,
            include_midpoint_jitter: true,
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| grid_oracle(&net, &domain, &spec, NormPair::inf_inf()).unwrap())
        };
        let one = run(1);
        let four = run(4);
        assert_eq!(one.value.to_bits(), four.value.to_bits());
        assert_eq!(one.argmax, four.argmax);
    }

    #[test]
    fn breakpoints_of_simple_nets() {
        assert_eq!(
            enumerate_breakpoints(&relu_net(), &interval()).unwrap(),
            vec![0.0]
        );
        assert_eq!(
            enumerate_breakpoints(&abs_net(), &interval()).unwrap(),
            vec![0.0]
        );
        assert!(enumerate_breakpoints(&scalar_linear(3.0), &interval())
            .unwrap()
            .is_empty());

        let inf = NormPair::inf_inf();
        let v = breakpoint_oracle_1d(&relu_net(), &interval(), inf).unwrap();
        assert_eq!(v.value, 1.0);
        assert_eq!(v.argmax, vec![0.5]);

        let v = breakpoint_oracle_1d(&scalar_linear(-2.5), &interval(), inf).unwrap();
        assert_eq!(v.value, 2.5);
    }

    #[test]
    fn breakpoint_oracle_rejects_vector_inputs() {
        let net = Mlp::random(&[2, 3, 1], &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let domain = Hyperbox::cube(2, -1.0, 1.0).unwrap();
        assert!(enumerate_breakpoints(&net, &domain).is_err());
    }

    #[test]
    fn breakpoints_are_kinks_and_pieces_are_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let net = Mlp::random(&[1, 8, 8, 1], &mut rng).unwrap();
            let bps = enumerate_breakpoints(&net, &interval()).unwrap();
            for b in &bps {
                let tape = net.forward(&[*b]).unwrap();
                let near_zero = tape
                    .preactivations
                    .iter()
                    .flatten()
                    .any(|z| z.abs() <= 1e-9);
                assert!(near_zero, "no preactivation vanishes at breakpoint {b}");
            }
            let knots: Vec<f64> = std::iter::once(-1.0)
                .chain(bps.iter().copied())
                .chain(std::iter::once(1.0))
                .collect();
            let f = |x: f64| net.eval(&[x]).unwrap()[0];
            for w in knots.windows(2) {
                let (l, r) = (w[0], w[1]);
                // Second difference at equally spaced interior points.
                for j in 1..10 {
                    let h = (r - l) / 20.0;
                    let x = l + (r - l) * j as f64 / 10.0;
                    let second = f(x - h) - 2.0 * f(x) + f(x + h);
                    assert!(second.abs() <= 1e-9, "curvature {second} in ({l}, {r})");
                }
                // The activation pattern is constant inside the segment.
                let pattern = net.activation_pattern(&[l + 0.5 * (r - l)]).unwrap();
                for j in 1..=10 {
                    let x = l + (r - l) * j as f64 / 11.0;
                    assert_eq!(net.activation_pattern(&[x]).unwrap(), pattern);
                }
            }
        }
    }

    #[test]
    fn dense_grid_matches_breakpoint_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let pair = NormPair::new(NormTag::Inf, NormTag::Inf).unwrap();
        for _ in 0..100 {
            let net = Mlp::random(&[1, 8, 8, 1], &mut rng).unwrap();
            let exact = breakpoint_oracle_1d(&net, &interval(), pair).unwrap().value;
            let grid = grid_oracle(&net, &interval(), &GridSpec::new(1_000_000), pair)
                .unwrap()
                .value;
            assert!(
                grid <= exact * (1.0 + 1e-12) + 1e-15,
                "grid {grid} above exact {exact}"
            );
            assert!(
                (grid - exact).abs() <= 1e-9 * exact.max(1e-300),
                "grid {grid} vs exact {exact}"
            );
        }
    }
}
