//! Synthetic regression data: points in a box labelled about −1 inside a few
//! random hyperspheres and about +1 elsewhere.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::Hyperbox;
use crate::error::{Error, Result};
use crate::json;

pub const DEFAULT_NOISE_STD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub spheres: Vec<Sphere>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_std: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Hyperbox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    #[serde(default)]
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>, meta: DatasetMeta) -> Result<Self> {
        let ds = Dataset {
            inputs,
            targets,
            meta,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn target_dim(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("dataset: {m}")));
        if self.inputs.len() != self.targets.len() {
            return bad(format!(
                "{} inputs but {} targets",
                self.inputs.len(),
                self.targets.len()
            ));
        }
        if self.inputs.is_empty() {
            return bad("no points".into());
        }
        let (d, m) = (self.input_dim(), self.target_dim());
        if d == 0 || m == 0 {
            return bad("empty input or target vectors".into());
        }
        for (i, (x, y)) in self.inputs.iter().zip(&self.targets).enumerate() {
            if x.len() != d || y.len() != m {
                return bad(format!("row {i} has inconsistent dimensions"));
            }
            if x.iter().chain(y).any(|v| !v.is_finite()) {
                return bad(format!("row {i} contains a non-finite value"));
            }
        }
        Ok(())
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        json::write_file(path, self)
    }

    /// Loads a JSON dataset, or a headerless-or-headed CSV whose last column
    /// is the target when the extension is `.csv`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let is_csv = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        let ds: Dataset = if is_csv {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Dataset::from_csv_str(&text).map_err(|message| Error::Parse {
                path: path.to_path_buf(),
                message,
            })?
        } else {
            json::read_file(path)?
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn from_csv_str(text: &str) -> std::result::Result<Self, String> {
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|f| f.trim().parse::<f64>()).collect();
            let fields = match fields {
                Ok(f) => f,
                // A non-numeric first row is a header.
                Err(_) if inputs.is_empty() && lineno == 0 => continue,
                Err(e) => return Err(format!("line {}: {e}", lineno + 1)),
            };
            if fields.len() < 2 {
                return Err(format!(
                    "line {}: need at least one input and a target",
                    lineno + 1
                ));
            }
            let (x, y) = fields.split_at(fields.len() - 1);
            inputs.push(x.to_vec());
            targets.push(y.to_vec());
        }
        Ok(Dataset {
            inputs,
            targets,
            meta: DatasetMeta::default(),
        })
    }
}

/// Parameters of [`gen_spheres`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereDataConfig {
    pub n_spheres: usize,
    pub n_points: usize,
    pub noise_std: f64,
    pub seed: u64,
}

/// Sphere centers uniform in the domain, radii uniform in
/// `[0.1, 0.4] · r_domain` (half the shortest side), inputs uniform, targets
/// `−1 + ε` inside any sphere and `+1 + ε` elsewhere with `ε ~ N(0, σ²)`.
pub fn gen_spheres(domain: &Hyperbox, config: &SphereDataConfig) -> Result<Dataset> {
    if config.n_points == 0 {
        return Err(Error::InvalidConfig(
            "dataset needs at least one point".into(),
        ));
    }
    let noise = Normal::new(0.0, config.noise_std)
        .map_err(|e| Error::InvalidConfig(format!("noise standard deviation: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let r_domain = 0.5 * domain.sides().fold(f64::INFINITY, f64::min);
    let spheres: Vec<Sphere> = (0..config.n_spheres)
        .map(|_| {
            let center = domain.sample_uniform(&mut rng);
            let radius = rng.random_range(0.1 * r_domain..=0.4 * r_domain);
            Sphere { center, radius }
        })
        .collect();
    let mut inputs = Vec::with_capacity(config.n_points);
    let mut targets = Vec::with_capacity(config.n_points);
    for _ in 0..config.n_points {
        let x = domain.sample_uniform(&mut rng);
        let inside = spheres
            .iter()
            .any(|s| dist2(&x, &s.center) <= s.radius * s.radius);
        let mean = if inside { -1.0 } else { 1.0 };
        targets.push(vec![mean + noise.sample(&mut rng)]);
        inputs.push(x);
    }
    Dataset::new(
        inputs,
        targets,
        DatasetMeta {
            seed: Some(config.seed),
            spheres,
            noise_std: Some(config.noise_std),
            domain: Some(domain.clone()),
        },
    )
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
