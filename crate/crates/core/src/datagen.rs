//! Synthetic datasets: the 15-covariate simulation design and small
//! fixtures for enumeration tests.
//!
//! Draw order is fixed so a seed maps to one dataset everywhere: covariate
//! columns are filled one after another (column-major), then the noise
//! vector. See [`crate::rng`] for the stream definition.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::likelihoods::{Dataset, Family};
use crate::modelspace::ModelVector;
use crate::rng::{inverse_normal_cdf, open_uniform, standard_normal, stream};

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub p: usize,
    pub t: usize,
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub noise_sd: f64,
    /// `(source, target, correlation)`, zero-based. The target column is
    /// rebuilt as `r·source + sqrt(1−r²)·z` from its own fresh draws.
    pub correlated_pair: Option<(usize, usize, f64)>,
    pub seed: u64,
}

impl GeneratorSpec {
    /// The 15-covariate, 100-observation design.
    pub fn example1(seed: u64) -> Self {
        GeneratorSpec {
            p: 15,
            t: 100,
            beta0: 2.0,
            beta: vec![-0.48, 8.72, -1.76, -1.87, 0.0, 0.0, 0.0, 0.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            noise_sd: 1.0,
            correlated_pair: Some((1, 8, 0.99)),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta.len() != self.p {
            return Err(Error::InvalidArgument(format!("beta has {} entries, expected {}", self.beta.len(), self.p)));
        }
        if let Some((s, t, r)) = self.correlated_pair {
            if s >= self.p || t >= self.p || s == t || !(r.abs() < 1.0) {
                return Err(Error::InvalidArgument(format!("invalid correlated pair ({s}, {t}, {r})")));
            }
        }
        if self.t < 2 || self.p < 1 {
            return Err(Error::InvalidArgument("need T ≥ 2 and p ≥ 1".into()));
        }
        Ok(())
    }
}

/// Gaussian design with centered columns and `y = β0 + Xβ + σε`.
pub fn generate(spec: &GeneratorSpec) -> Result<Dataset> {
    spec.validate()?;
    let (t, p) = (spec.t, spec.p);
    let mut rng = stream(spec.seed);
    let mut x = DMatrix::<f64>::zeros(t, p);
    for j in 0..p {
        for i in 0..t {
            x[(i, j)] = standard_normal(&mut rng);
        }
    }
    if let Some((src, dst, r)) = spec.correlated_pair {
        let s = (1.0 - r * r).sqrt();
        for i in 0..t {
            x[(i, dst)] = r * x[(i, src)] + s * x[(i, dst)];
        }
    }
    for mut col in x.column_iter_mut() {
        let m = col.sum() / t as f64;
        col.add_scalar_mut(-m);
    }
    let y = (0..t)
        .map(|i| {
            let mean: f64 = spec.beta0 + (0..p).map(|j| spec.beta[j] * x[(i, j)]).sum::<f64>();
            mean + spec.noise_sd * standard_normal(&mut rng)
        })
        .collect();
    Dataset::new(y, x, Family::Gaussian, None)
}

pub fn generate_example1(seed: u64) -> Dataset {
    generate(&GeneratorSpec::example1(seed)).expect("built-in spec is valid")
}

/// Small fixture layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureStructure {
    /// Bernoulli(0.3) covariates when true, standard normal otherwise.
    pub binary: bool,
    /// Zero-based active indices with their coefficients.
    pub active: Vec<(usize, f64)>,
    pub intercept: f64,
    /// Zero-based pair sharing a latent factor.
    pub correlated_pair: Option<(usize, usize)>,
}

impl FixtureStructure {
    /// Ten binary covariates, covariates 1, 5 and 8 active.
    pub fn illustration() -> Self {
        FixtureStructure {
            binary: true,
            active: vec![(0, 10.0), (4, 1.43), (7, 0.89)],
            intercept: 1.0,
            correlated_pair: Some((3, 4)),
        }
    }
}

impl FixtureStructure {
    /// Gaussian covariates with active indices 1, 5 and 8 where present,
    /// usable for any p up to the fixture limit.
    pub fn illustration_like(p: usize) -> Self {
        let active: Vec<(usize, f64)> = [(0, 1.5), (4, 0.8), (7, 0.6)].into_iter().filter(|&(j, _)| j < p).collect();
        FixtureStructure { binary: false, active, intercept: 1.0, correlated_pair: Some((3, 4)) }
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub data: Dataset,
    pub active: ModelVector,
}

pub const FIXTURE_MAX_P: usize = 12;
const BINARY_RATE: f64 = 0.3;

/// Deterministic small dataset with a declared active set.
///
/// In binary mode the correlated pair is built by thresholding
/// `(a + e_j)/√2` at the 0.3 quantile with a shared latent `a`, which keeps
/// both marginals at Bernoulli(0.3).
pub fn generate_small_fixture(p: usize, t: usize, structure: &FixtureStructure, seed: u64) -> Result<Fixture> {
    if p == 0 || p > FIXTURE_MAX_P {
        return Err(Error::InvalidArgument(format!("fixture p must be in 1..={FIXTURE_MAX_P}")));
    }
    if let Some(&(j, _)) = structure.active.iter().find(|(j, _)| *j >= p) {
        return Err(Error::InvalidArgument(format!("active index {j} out of range")));
    }
    let pair = structure.correlated_pair.filter(|&(a, b)| a < p && b < p && a != b);
    let mut rng = stream(seed);
    let mut x = DMatrix::<f64>::zeros(t, p);
    let threshold = inverse_normal_cdf(BINARY_RATE);
    let latent: Vec<f64> =
        if pair.is_some() { (0..t).map(|_| standard_normal(&mut rng)).collect() } else { Vec::new() };
    for j in 0..p {
        let shared = pair.is_some_and(|(a, b)| j == a || j == b);
        for i in 0..t {
            x[(i, j)] = match (structure.binary, shared) {
                (true, true) => {
                    let z = (latent[i] + standard_normal(&mut rng)) * std::f64::consts::FRAC_1_SQRT_2;
                    f64::from(u8::from(z < threshold))
                }
                (true, false) => f64::from(u8::from(open_uniform(&mut rng) < BINARY_RATE)),
                (false, true) => (latent[i] + standard_normal(&mut rng)) * std::f64::consts::FRAC_1_SQRT_2,
                (false, false) => standard_normal(&mut rng),
            };
        }
    }
    let y = (0..t)
        .map(|i| {
            structure.intercept
                + structure.active.iter().map(|&(j, b)| b * x[(i, j)]).sum::<f64>()
                + standard_normal(&mut rng)
        })
        .collect();
    let idx: Vec<usize> = structure.active.iter().map(|&(j, _)| j).collect();
    Ok(Fixture { data: Dataset::new(y, x, Family::Gaussian, None)?, active: ModelVector::from_indices(p, &idx)? })
}
