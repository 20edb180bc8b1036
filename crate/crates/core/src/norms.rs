//! Vector norms, their duals, and induced matrix norms `‖G‖_{α,β}`.
//!
//! Only the pairs with a closed form (or a cheap spectral computation) are
//! supported: `α = 1`, `β = ∞`, and `(2, 2)`. Everything else is NP-hard in
//! general and is rejected instead of approximated.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NormTag {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "inf")]
    Inf,
}

impl NormTag {
    pub const ALL: [NormTag; 3] = [NormTag::One, NormTag::Two, NormTag::Inf];

    pub fn as_str(self) -> &'static str {
        match self {
            NormTag::One => "1",
            NormTag::Two => "2",
            NormTag::Inf => "inf",
        }
    }

    /// ℓ1 and ℓ∞ are dual to each other; ℓ2 is self-dual.
    pub fn dual(self) -> NormTag {
        match self {
            NormTag::One => NormTag::Inf,
            NormTag::Two => NormTag::Two,
            NormTag::Inf => NormTag::One,
        }
    }
}

impl fmt::Display for NormTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" => Ok(NormTag::One),
            "2" => Ok(NormTag::Two),
            "inf" => Ok(NormTag::Inf),
            other => Err(format!("unknown norm `{other}`, expected one of 1, 2, inf")),
        }
    }
}

/// Free function form of [`NormTag::dual`].
pub fn dual(tag: NormTag) -> NormTag {
    tag.dual()
}

/// An (input norm, output norm) pair. Construct through [`NormPair::new`],
/// which enforces the supported set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(into = "[NormTag; 2]")]
pub struct NormPair {
    alpha: NormTag,
    beta: NormTag,
}

impl NormPair {
    pub fn new(alpha: NormTag, beta: NormTag) -> Result<Self> {
        let pair = NormPair { alpha, beta };
        if pair.is_supported() {
            Ok(pair)
        } else {
            Err(Error::UnsupportedNormPair(pair))
        }
    }

    /// The pair used by the plain sampling estimator for scalar outputs:
    /// the ℓ1 norm of the gradient, i.e. (∞, ∞) through the row formula.
    pub fn inf_inf() -> Self {
        NormPair {
            alpha: NormTag::Inf,
            beta: NormTag::Inf,
        }
    }

    pub fn alpha(&self) -> NormTag {
        self.alpha
    }

    pub fn beta(&self) -> NormTag {
        self.beta
    }

    fn is_supported(&self) -> bool {
        self.alpha == NormTag::One
            || self.beta == NormTag::Inf
            || (self.alpha == NormTag::Two && self.beta == NormTag::Two)
    }

    /// Every pair in the supported set.
    pub fn all_supported() -> Vec<NormPair> {
        let mut out = Vec::new();
        for alpha in NormTag::ALL {
            for beta in NormTag::ALL {
                if let Ok(p) = NormPair::new(alpha, beta) {
                    out.push(p);
                }
            }
        }
        out
    }
}

impl From<NormPair> for [NormTag; 2] {
    fn from(p: NormPair) -> Self {
        [p.alpha, p.beta]
    }
}

impl<'de> Deserialize<'de> for NormPair {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [alpha, beta] = <[NormTag; 2]>::deserialize(d)?;
        NormPair::new(alpha, beta).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for NormPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.alpha, self.beta)
    }
}

pub fn vector_norm(v: &[f64], tag: NormTag) -> f64 {
    match tag {
        NormTag::One => v.iter().map(|x| x.abs()).sum(),
        NormTag::Two => l2(v),
        NormTag::Inf => v.iter().fold(0.0, |m, x| f64::max(m, x.abs())),
    }
}

/// Overflow-safe Euclidean norm.
fn l2(v: &[f64]) -> f64 {
    let scale = v.iter().fold(0.0, |m, x| f64::max(m, x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let s: f64 = v.iter().map(|x| (x / scale) * (x / scale)).sum();
    scale * s.sqrt()
}

/// `sup_{‖x‖_α ≤ 1} ‖Gx‖_β` for a supported pair.
pub fn induced_norm(g: &Matrix, pair: NormPair) -> Result<f64> {
    if !pair.is_supported() {
        return Err(Error::UnsupportedNormPair(pair));
    }
    if let Some((row, col)) = g.find_non_finite() {
        return Err(Error::NonFiniteMatrix { row, col });
    }
    if g.rows() == 0 || g.cols() == 0 {
        return Ok(0.0);
    }
    let value = if pair.alpha == NormTag::One {
        // The unit ℓ1 ball is the convex hull of ±e_j.
        (0..g.cols())
            .map(|j| vector_norm(&g.column(j), pair.beta))
            .fold(0.0, f64::max)
    } else if pair.beta == NormTag::Inf {
        // Each output coordinate is maximised separately by Hölder.
        let dual_alpha = pair.alpha.dual();
        (0..g.rows())
            .map(|i| vector_norm(g.row(i), dual_alpha))
            .fold(0.0, f64::max)
    } else {
        spectral_norm(g)
    };
    Ok(value)
}

const POWER_REL_TOL: f64 = 1e-12;
const POWER_MAX_ITER: usize = 10_000;

/// Largest singular value of `g`.
///
/// Vectors and row vectors are handled exactly. Otherwise power iteration
/// runs on the smaller Gram matrix (`GᵀG` or `GGᵀ`, same nonzero spectrum)
/// from the normalized all-ones vector and again from a fixed perturbed
/// vector; the larger Rayleigh quotient wins. A single start can be exactly
/// orthogonal to the dominant eigenvector (symmetric weight patterns do this),
/// in which case it converges to a smaller eigenvalue without stagnating.
pub fn spectral_norm(g: &Matrix) -> f64 {
    if g.rows() == 1 {
        return l2(g.row(0));
    }
    if g.cols() == 1 {
        return l2(g.as_slice());
    }
    let gram = if g.cols() <= g.rows() {
        g.transpose().matmul(g)
    } else {
        g.matmul(&g.transpose())
    };
    let n = gram.rows();
    let ones = vec![1.0; n];
    let perturbed: Vec<f64> = (0..n)
        .map(|i| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            sign / (i as f64 + 1.0) + 0.5
        })
        .collect();
    let lambda = power_iteration(&gram, &ones).max(power_iteration(&gram, &perturbed));
    lambda.max(0.0).sqrt()
}

/// Rayleigh-quotient estimate of the dominant eigenvalue of the symmetric PSD
/// matrix `a` reachable from `start`.
fn power_iteration(a: &Matrix, start: &[f64]) -> f64 {
    let norm = l2(start);
    if norm == 0.0 {
        return 0.0;
    }
    let mut v: Vec<f64> = start.iter().map(|x| x / norm).collect();
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITER {
        let w = a.mul_vec(&v);
        let w_norm = l2(&w);
        if w_norm == 0.0 {
            break;
        }
        let next = dot(&v, &w);
        let converged = (next - lambda).abs() <= POWER_REL_TOL * next.abs();
        lambda = next;
        v = w.into_iter().map(|x| x / w_norm).collect();
        if converged {
            break;
        }
    }
    // Rayleigh quotient of the final iterate.
    lambda.max(dot(&v, &a.mul_vec(&v)))
}
