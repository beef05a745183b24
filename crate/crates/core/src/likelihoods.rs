//! Marginal likelihoods, GLM selection criteria and model priors.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::math::ln_beta;
use crate::modelspace::ModelVector;

/// Response distribution and link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Gaussian,
    BinomialLogit,
    PoissonLog,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::BinomialLogit => "binomial",
            Family::PoissonLog => "poisson",
        }
    }

    pub fn parse(s: &str) -> Result<Family> {
        match s {
            "gaussian" => Ok(Family::Gaussian),
            "binomial" | "binomial-logit" | "logistic" => Ok(Family::BinomialLogit),
            "poisson" | "poisson-log" => Ok(Family::PoissonLog),
            other => Err(Error::InvalidArgument(format!("unknown family {other:?}"))),
        }
    }
}

/// Response, design and optional offset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    x: DMatrix<f64>,
    family: Family,
    offset: Option<Vec<f64>>,
}

impl Dataset {
    /// Validates and wraps a dataset. `x` is T×p.
    pub fn new(y: Vec<f64>, x: DMatrix<f64>, family: Family, offset: Option<Vec<f64>>) -> Result<Self> {
        let t = y.len();
        if t < 2 {
            return Err(Error::Data(format!("need at least 2 observations, got {t}")));
        }
        if x.ncols() < 1 {
            return Err(Error::Data("need at least one covariate".into()));
        }
        if x.nrows() != t {
            return Err(Error::Data(format!("design has {} rows but response has {t}", x.nrows())));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite response at row {}", i + 1)));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite covariate at row {}, column {}", i % t + 1, i / t + 1)));
        }
        if let Some(off) = &offset {
            if off.len() != t {
                return Err(Error::Data(format!("offset has {} entries, expected {t}", off.len())));
            }
            if off.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data("non-finite offset".into()));
            }
        }
        match family {
            Family::BinomialLogit => {
                if let Some(i) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::Data(format!("binomial response at row {} is not 0/1", i + 1)));
                }
            }
            Family::PoissonLog => {
                if let Some(i) = y.iter().position(|&v| v < 0.0 || v.fract() != 0.0) {
                    return Err(Error::Data(format!("poisson response at row {} is not a nonnegative integer", i + 1)));
                }
            }
            Family::Gaussian => {}
        }
        Ok(Dataset { y, x, family, offset })
    }

    /// Number of observations T.
    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    /// Number of covariates p.
    pub fn n_covariates(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn offset(&self) -> Option<&[f64]> {
        self.offset.as_deref()
    }

    fn check_gamma(&self, gamma: &ModelVector) -> Result<()> {
        if gamma.len() != self.n_covariates() {
            return Err(Error::InvalidArgument(format!(
                "model has length {} but dataset has {} covariates",
                gamma.len(),
                self.n_covariates()
            )));
        }
        Ok(())
    }
}

/// How a model's evidence is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    GPriorExact,
    AicApprox,
    BicApprox,
}

impl Criterion {
    pub fn name(&self) -> &'static str {
        match self {
            Criterion::GPriorExact => "gprior",
            Criterion::AicApprox => "aic",
            Criterion::BicApprox => "bic",
        }
    }

    pub fn parse(s: &str) -> Result<Criterion> {
        match s {
            "gprior" | "gprior-exact" => Ok(Criterion::GPriorExact),
            "aic" | "aic-approx" => Ok(Criterion::AicApprox),
            "bic" | "bic-approx" => Ok(Criterion::BicApprox),
            other => Err(Error::InvalidArgument(format!("unknown criterion {other:?}"))),
        }
    }
}

/// Prior on the model indicator vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelPrior {
    Binomial { q: f64 },
    BetaBinomial { alpha: f64, beta: f64 },
}

impl ModelPrior {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ModelPrior::Binomial { q } if !(q > 0.0 && q < 1.0) => {
                Err(Error::InvalidArgument(format!("prior q must be in (0,1), got {q}")))
            }
            ModelPrior::BetaBinomial { alpha, beta } if !(alpha > 0.0 && beta > 0.0) => {
                Err(Error::InvalidArgument(format!("beta-binomial parameters must be positive, got {alpha}, {beta}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    pub criterion: Criterion,
    pub g: f64,
    pub model_prior: ModelPrior,
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.g > 0.0 && self.g.is_finite()) {
            return Err(Error::InvalidArgument(format!("g must be positive, got {}", self.g)));
        }
        self.model_prior.validate()
    }
}

/// Pivot ratio below which a selected design is treated as rank deficient.
const SINGULAR_TOL: f64 = 1e-10;

/// Cholesky solve of `a x = b`, treating tiny relative pivots as singular.
fn spd_solve(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let diag: Vec<f64> = (0..a.nrows()).map(|i| a[(i, i)]).collect();
    if diag.iter().any(|&d| d <= 0.0) {
        return Err(Error::SingularDesign);
    }
    let chol = a.cholesky().ok_or(Error::SingularDesign)?;
    let l = chol.l_dirty();
    for (i, d) in diag.iter().enumerate() {
        if l[(i, i)] * l[(i, i)] < SINGULAR_TOL * d {
            return Err(Error::SingularDesign);
        }
    }
    Ok(chol.solve(b))
}

/// Sufficient statistics of the centered gaussian regression.
#[derive(Debug, Clone)]
struct CenteredStats {
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
}

impl CenteredStats {
    fn new(data: &Dataset) -> Self {
        let t = data.n_obs() as f64;
        let ybar = data.y.iter().sum::<f64>() / t;
        let yc = DVector::from_iterator(data.n_obs(), data.y.iter().map(|v| v - ybar));
        let mut xc = data.x.clone();
        for mut col in xc.column_iter_mut() {
            let m = col.sum() / t;
            col.add_scalar_mut(-m);
        }
        CenteredStats { gram: xc.transpose() * &xc, xty: xc.transpose() * &yc, yty: yc.dot(&yc) }
    }

    fn r_squared(&self, gamma: &ModelVector) -> Result<f64> {
        let idx = gamma.ones_indices();
        if idx.is_empty() || self.yty == 0.0 {
            return Ok(0.0);
        }
        let k = idx.len();
        let sub = DMatrix::from_fn(k, k, |i, j| self.gram[(idx[i], idx[j])]);
        let rhs = DVector::from_fn(k, |i, _| self.xty[idx[i]]);
        let b = spd_solve(sub, &rhs)?;
        Ok((b.dot(&rhs) / self.yty).clamp(0.0, 1.0))
    }
}

fn require_family(data: &Dataset, gaussian: bool) -> Result<()> {
    let ok = (data.family == Family::Gaussian) == gaussian;
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("operation not available for the {} family", data.family.name())))
    }
}

/// Coefficient of determination of the OLS fit on intercept plus included columns.
pub fn r_squared(data: &Dataset, gamma: &ModelVector) -> Result<f64> {
    require_family(data, true)?;
    data.check_gamma(gamma)?;
    CenteredStats::new(data).r_squared(gamma)
}

/// Closed form of the g-prior marginal likelihood given R² and |γ|.
pub fn gprior_from_r2(t: usize, k: usize, g: f64, r2: f64) -> f64 {
    let t = t as f64;
    let k = k as f64;
    0.5 * (t - k - 1.0) * g.ln_1p() - 0.5 * (t - 1.0) * (g * (1.0 - r2)).ln_1p()
}

/// Log marginal likelihood under Zellner's g-prior, relative to the null model.
pub fn log_mlik_gprior(data: &Dataset, gamma: &ModelVector, g: f64) -> Result<f64> {
    let r2 = r_squared(data, gamma)?;
    Ok(gprior_from_r2(data.n_obs(), gamma.count_ones(), g, r2))
}

/// Result of an IRLS fit.
#[derive(Debug, Clone)]
pub struct IrlsFit {
    pub deviance: f64,
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    /// Deviance after each iteration, starting with the initial point.
    pub trace: Vec<f64>,
}

pub const IRLS_MAX_ITER: usize = 50;
const IRLS_TOL: f64 = 1e-9;
const PROB_CLAMP: f64 = 1e-10;

fn glm_mean(family: Family, eta: f64) -> f64 {
    match family {
        Family::BinomialLogit => (1.0 / (1.0 + (-eta).exp())).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP),
        Family::PoissonLog => eta.min(700.0).exp().max(PROB_CLAMP),
        Family::Gaussian => eta,
    }
}

fn unit_deviance(family: Family, y: f64, mu: f64) -> f64 {
    match family {
        Family::BinomialLogit => {
            if y == 1.0 {
                -2.0 * mu.ln()
            } else {
                -2.0 * (1.0 - mu).ln()
            }
        }
        Family::PoissonLog => {
            let ylogy = if y > 0.0 { y * (y / mu).ln() } else { 0.0 };
            2.0 * (ylogy - (y - mu))
        }
        Family::Gaussian => (y - mu) * (y - mu),
    }
}

struct GlmDesign<'a> {
    data: &'a Dataset,
    cols: Vec<usize>,
}

impl GlmDesign<'_> {
    fn dim(&self) -> usize {
        self.cols.len() + 1
    }

    fn z(&self, row: usize, j: usize) -> f64 {
        if j == 0 {
            1.0
        } else {
            self.data.x[(row, self.cols[j - 1])]
        }
    }

    fn eta(&self, row: usize, beta: &[f64]) -> f64 {
        let off = self.data.offset.as_ref().map_or(0.0, |o| o[row]);
        let mut e = beta[0] + off;
        for (j, &c) in self.cols.iter().enumerate() {
            e += beta[j + 1] * self.data.x[(row, c)];
        }
        e
    }

    fn deviance(&self, beta: &[f64]) -> f64 {
        let fam = self.data.family;
        (0..self.data.n_obs()).map(|t| unit_deviance(fam, self.data.y[t], glm_mean(fam, self.eta(t, beta)))).sum()
    }
}

/// Maximum-likelihood GLM fit by iteratively reweighted least squares.
///
/// Starts from zero slopes with the intercept at the link of the mean
/// response. Steps that raise the deviance are halved, so the trace is
/// non-increasing.
pub fn irls_fit(data: &Dataset, gamma: &ModelVector) -> Result<IrlsFit> {
    require_family(data, false)?;
    data.check_gamma(gamma)?;
    let fam = data.family;
    let design = GlmDesign { data, cols: gamma.ones_indices() };
    let n = data.n_obs();
    let d = design.dim();

    let ybar = data.y.iter().sum::<f64>() / n as f64;
    let mut beta = vec![0.0; d];
    beta[0] = match fam {
        Family::BinomialLogit => {
            let m = ybar.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            (m / (1.0 - m)).ln()
        }
        _ => {
            let exposure = data.offset.as_ref().map_or(n as f64, |o| o.iter().map(|v| v.exp()).sum());
            (data.y.iter().sum::<f64>().max(PROB_CLAMP) / exposure).ln()
        }
    };
    let mut dev = design.deviance(&beta);
    let mut trace = vec![dev];

    for iter in 1..=IRLS_MAX_ITER {
        let mut a = DMatrix::<f64>::zeros(d, d);
        let mut b = DVector::<f64>::zeros(d);
        let mut zrow = vec![0.0; d];
        for t in 0..n {
            let eta = design.eta(t, &beta);
            let mu = glm_mean(fam, eta);
            let w = match fam {
                Family::BinomialLogit => mu * (1.0 - mu),
                _ => mu,
            };
            let off = data.offset.as_ref().map_or(0.0, |o| o[t]);
            let work = eta - off + (data.y[t] - mu) / w;
            for (j, z) in zrow.iter_mut().enumerate() {
                *z = design.z(t, j);
            }
            for i in 0..d {
                let wz = w * zrow[i];
                b[i] += wz * work;
                for j in 0..=i {
                    a[(i, j)] += wz * zrow[j];
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                a[(j, i)] = a[(i, j)];
            }
        }
        let proposal = spd_solve(a, &b)?;
        let mut step: Vec<f64> = proposal.iter().copied().collect();
        let mut new_dev = design.deviance(&step);
        let mut halvings = 0;
        while !(new_dev <= dev) && halvings < 40 {
            for (s, &old) in step.iter_mut().zip(beta.iter()) {
                *s = 0.5 * (*s + old);
            }
            new_dev = design.deviance(&step);
            halvings += 1;
        }
        if !(new_dev <= dev) {
            // no descent direction left; the current point is as good as it gets
            return Ok(IrlsFit { deviance: dev, coefficients: beta, iterations: iter, trace });
        }
        let change = (dev - new_dev).abs() / (new_dev.abs() + 0.1);
        beta = step;
        dev = new_dev;
        trace.push(dev);
        if change < IRLS_TOL {
            return Ok(IrlsFit { deviance: dev, coefficients: beta, iterations: iter, trace });
        }
    }
    Err(Error::Convergence { iterations: IRLS_MAX_ITER, last_deviance: dev })
}

/// Deviance of the maximum-likelihood GLM fit.
pub fn irls_deviance(data: &Dataset, gamma: &ModelVector) -> Result<f64> {
    irls_fit(data, gamma).map(|f| f.deviance)
}

/// Penalized-deviance score from a deviance value.
pub fn criterion_from_deviance(criterion: Criterion, deviance: f64, k: usize, t: usize) -> f64 {
    let k = k as f64;
    match criterion {
        Criterion::BicApprox => -0.5 * (deviance + (t as f64).ln() * k),
        _ => -0.5 * (deviance + 2.0 * k),
    }
}

/// AIC- or BIC-style log score of a GLM.
pub fn log_criterion_glm(data: &Dataset, gamma: &ModelVector, criterion: Criterion) -> Result<f64> {
    if criterion == Criterion::GPriorExact {
        return Err(Error::InvalidArgument("the g-prior criterion is gaussian only".into()));
    }
    let dev = irls_deviance(data, gamma)?;
    Ok(criterion_from_deviance(criterion, dev, gamma.count_ones(), data.n_obs()))
}

/// log p(γ).
pub fn log_model_prior(gamma: &ModelVector, prior: &ModelPrior) -> f64 {
    let p = gamma.len() as f64;
    let k = gamma.count_ones() as f64;
    match *prior {
        ModelPrior::Binomial { q } => k * q.ln() + (p - k) * (-q).ln_1p(),
        ModelPrior::BetaBinomial { alpha, beta } => ln_beta(alpha + k, beta + p - k) - ln_beta(alpha, beta),
    }
}

fn log_evidence(data: &Dataset, gamma: &ModelVector, prior: &PriorSpec) -> Result<f64> {
    match (data.family, prior.criterion) {
        (Family::Gaussian, Criterion::GPriorExact) => log_mlik_gprior(data, gamma, prior.g),
        (Family::Gaussian, _) => Err(Error::InvalidArgument("gaussian data uses the g-prior criterion".into())),
        (_, c) => log_criterion_glm(data, gamma, c),
    }
}

/// Unnormalized log posterior log p(y|γ) + log p(γ).
pub fn log_target(data: &Dataset, gamma: &ModelVector, prior: &PriorSpec) -> Result<f64> {
    Ok(log_evidence(data, gamma, prior)? + log_model_prior(gamma, &prior.model_prior))
}

/// Anything that can score a model: the sampler and estimators only see this.
pub trait ModelScorer: Sync {
    /// Covariate count p.
    fn n_covariates(&self) -> usize;

    /// Log marginal likelihood or criterion. Rank-deficient or non-converging
    /// fits return their error; callers score those models −∞.
    fn log_mlik(&self, gamma: &ModelVector) -> Result<f64>;

    fn log_prior(&self, gamma: &ModelVector) -> f64;

    /// `(log_mlik, log_prior)` with fit failures mapped to −∞.
    fn score(&self, gamma: &ModelVector) -> Result<(f64, f64)> {
        let lp = self.log_prior(gamma);
        match self.log_mlik(gamma) {
            Ok(v) => Ok((v, lp)),
            Err(Error::SingularDesign) | Err(Error::Convergence { .. }) => Ok((f64::NEG_INFINITY, lp)),
            Err(e) => Err(e),
        }
    }

    fn log_target(&self, gamma: &ModelVector) -> f64 {
        match self.score(gamma) {
            Ok((m, p)) => m + p,
            Err(_) => f64::NEG_INFINITY,
        }
    }
}

/// Scorer over a dataset and prior; gaussian sufficient statistics are
/// computed once up front.
#[derive(Debug, Clone)]
pub struct Posterior {
    data: Dataset,
    prior: PriorSpec,
    stats: Option<CenteredStats>,
}

impl Posterior {
    pub fn new(data: Dataset, prior: PriorSpec) -> Result<Self> {
        prior.validate()?;
        let gaussian = data.family == Family::Gaussian;
        if gaussian != (prior.criterion == Criterion::GPriorExact) {
            return Err(Error::InvalidArgument(format!(
                "criterion {} does not apply to the {} family",
                prior.criterion.name(),
                data.family.name()
            )));
        }
        let stats = gaussian.then(|| CenteredStats::new(&data));
        Ok(Posterior { data, prior, stats })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }
}

impl ModelScorer for Posterior {
    fn n_covariates(&self) -> usize {
        self.data.n_covariates()
    }

    fn log_mlik(&self, gamma: &ModelVector) -> Result<f64> {
        self.data.check_gamma(gamma)?;
        match &self.stats {
            Some(s) => {
                let r2 = s.r_squared(gamma)?;
                Ok(gprior_from_r2(self.data.n_obs(), gamma.count_ones(), self.prior.g, r2))
            }
            None => log_criterion_glm(&self.data, gamma, self.prior.criterion),
        }
    }

    fn log_prior(&self, gamma: &ModelVector) -> f64 {
        log_model_prior(gamma, &self.prior.model_prior)
    }
}

/// Scorer backed by an explicit table of log targets indexed by the integer
/// model encoding. Used for synthetic landscapes.
#[derive(Debug, Clone)]
pub struct TableTarget {
    p: usize,
    values: Vec<f64>,
}

impl TableTarget {
    pub fn new(p: usize, values: Vec<f64>) -> Result<Self> {
        if p > 25 || values.len() != 1usize << p {
            return Err(Error::InvalidArgument(format!("table target needs 2^{p} entries, got {}", values.len())));
        }
        Ok(TableTarget { p, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl ModelScorer for TableTarget {
    fn n_covariates(&self) -> usize {
        self.p
    }

    fn log_mlik(&self, gamma: &ModelVector) -> Result<f64> {
        let code = gamma
            .code()
            .filter(|_| gamma.len() == self.p)
            .ok_or_else(|| Error::InvalidArgument("model length mismatch".into()))?;
        Ok(self.values[code as usize])
    }

    fn log_prior(&self, _gamma: &ModelVector) -> f64 {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelspace::enumerate_all;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mv(s: &str) -> ModelVector {
        s.parse().unwrap()
    }

    fn random_gaussian(t: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(t, p, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let y = (0..t).map(|i| x[(i, 0)] * 1.5 - x[(i, 2)] + rng.random::<f64>()).collect();
        Dataset::new(y, x, Family::Gaussian, None).unwrap()
    }

    fn random_logistic(t: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(t, p, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let y = (0..t)
            .map(|i| {
                let eta = 0.3 + 1.2 * x[(i, 0)] - 0.8 * x[(i, p - 1)];
                let pr = 1.0 / (1.0 + (-eta).exp());
                if rng.random::<f64>() < pr {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        Dataset::new(y, x, Family::BinomialLogit, None).unwrap()
    }

    /// Independent OLS: explicit inverse of the uncentered normal equations.
    fn ols_r2(data: &Dataset, gamma: &ModelVector) -> f64 {
        let idx = gamma.ones_indices();
        let t = data.n_obs();
        let z = DMatrix::from_fn(t, idx.len() + 1, |i, j| if j == 0 { 1.0 } else { data.x()[(i, idx[j - 1])] });
        let y = DVector::from_column_slice(data.y());
        let inv = (z.transpose() * &z).try_inverse().unwrap();
        let b = inv * z.transpose() * &y;
        let resid = &y - &z * b;
        let ybar = y.mean();
        let sst: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
        1.0 - resid.dot(&resid) / sst
    }

    #[test]
    fn r_squared_null_and_perfect() {
        let d = random_gaussian(30, 3, 1);
        assert_eq!(r_squared(&d, &mv("000")).unwrap(), 0.0);
        let y: Vec<f64> = (0..30).map(|i| 4.0 + 2.5 * d.x()[(i, 1)]).collect();
        let d2 = Dataset::new(y, d.x().clone(), Family::Gaussian, None).unwrap();
        assert!((r_squared(&d2, &mv("010")).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn r_squared_matches_normal_equations() {
        let d = random_gaussian(50, 5, 7);
        for g in enumerate_all(5).unwrap().skip(1) {
            let a = r_squared(&d, &g).unwrap();
            assert!((a - ols_r2(&d, &g)).abs() < 1e-10, "{g}");
        }
    }

    #[test]
    fn singular_design_detected() {
        let mut d = random_gaussian(20, 3, 2);
        let col: Vec<f64> = d.x.column(0).iter().map(|v| 2.0 * v + 1.0).collect();
        d.x.set_column(1, &DVector::from_vec(col));
        assert_eq!(r_squared(&d, &mv("110")), Err(Error::SingularDesign));
        let post = Posterior::new(
            d,
            PriorSpec { criterion: Criterion::GPriorExact, g: 20.0, model_prior: ModelPrior::Binomial { q: 0.5 } },
        )
        .unwrap();
        assert_eq!(post.log_target(&mv("110")), f64::NEG_INFINITY);
        assert!(post.log_target(&mv("100")).is_finite());
    }

    #[test]
    fn gprior_closed_form_values() {
        assert_eq!(gprior_from_r2(100, 0, 100.0, 0.0), 0.0);
        assert!((gprior_from_r2(100, 1, 100.0, 0.0) + 0.5 * 101f64.ln()).abs() < 1e-12);
        assert!((gprior_from_r2(100, 1, 100.0, 0.0) + 2.307_56).abs() < 1e-5);
        assert!((gprior_from_r2(100, 3, 100.0, 1.0) - 48.0 * 101f64.ln()).abs() < 1e-10);
        let d = random_gaussian(40, 4, 3);
        assert_eq!(log_mlik_gprior(&d, &mv("0000"), 17.3).unwrap(), 0.0);
    }

    #[test]
    fn logistic_intercept_only_closed_form() {
        let x = DMatrix::from_column_slice(4, 1, &[0.3, -1.0, 2.0, 0.5]);
        let d = Dataset::new(vec![1.0, 0.0, 1.0, 0.0], x, Family::BinomialLogit, None).unwrap();
        let dev = irls_deviance(&d, &mv("0")).unwrap();
        assert!((dev - 8.0 * 2f64.ln()).abs() < 1e-8);
    }

    #[test]
    fn poisson_constant_response_zero_deviance() {
        let x = DMatrix::from_fn(6, 2, |i, j| (i as f64).powi(j as i32 + 1));
        let d = Dataset::new(vec![3.0; 6], x, Family::PoissonLog, None).unwrap();
        assert!(irls_deviance(&d, &mv("00")).unwrap().abs() < 1e-10);
        assert!(irls_deviance(&d, &mv("11")).unwrap().abs() < 1e-8);
    }

    #[test]
    fn poisson_offset_recovers_rate() {
        // y = 2·exposure exactly: the intercept fit is ln 2 and deviance 0
        let exposure = [1.0, 2.0, 3.0, 5.0];
        let y: Vec<f64> = exposure.iter().map(|e| 2.0 * e).collect();
        let off: Vec<f64> = exposure.iter().map(|e: &f64| e.ln()).collect();
        let x = DMatrix::from_column_slice(4, 1, &[1.0, 0.0, 1.0, 0.0]);
        let d = Dataset::new(y, x, Family::PoissonLog, Some(off)).unwrap();
        let fit = irls_fit(&d, &mv("0")).unwrap();
        assert!(fit.deviance.abs() < 1e-10);
        assert!((fit.coefficients[0] - 2f64.ln()).abs() < 1e-8);
    }

    #[test]
    fn irls_trace_is_monotone_and_nonnegative() {
        for seed in 0..20 {
            let d = random_logistic(200, 4, seed);
            for g in enumerate_all(4).unwrap() {
                let fit = irls_fit(&d, &g).unwrap();
                assert!(fit.deviance >= 0.0);
                for w in fit.trace.windows(2) {
                    assert!(w[1] <= w[0], "seed {seed} model {g}");
                }
            }
        }
    }

    #[test]
    fn separation_survives_clamping() {
        let x = DMatrix::from_column_slice(6, 1, &[-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]);
        let d = Dataset::new(vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0], x, Family::BinomialLogit, None).unwrap();
        match irls_fit(&d, &mv("1")) {
            Ok(fit) => assert!(fit.deviance < 1e-3),
            Err(Error::Convergence { last_deviance, .. }) => assert!(last_deviance < 1e-3),
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn criterion_arithmetic() {
        assert_eq!(criterion_from_deviance(Criterion::AicApprox, 10.0, 3, 50), -8.0);
        assert_eq!(criterion_from_deviance(Criterion::AicApprox, 10.0, 0, 50), -5.0);
        assert_eq!(criterion_from_deviance(Criterion::BicApprox, 10.0, 0, 50), -5.0);
        let b = criterion_from_deviance(Criterion::BicApprox, 10.0, 2, 50);
        assert!((b + 0.5 * (10.0 + 2.0 * 50f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn binomial_prior_half_is_constant() {
        let pr = ModelPrior::Binomial { q: 0.5 };
        for g in enumerate_all(5).unwrap() {
            assert!((log_model_prior(&g, &pr) - 5.0 * 0.5f64.ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn beta_binomial_matches_grid_integral() {
        // ∫ q (1−q)^2 dq over a midpoint grid
        let n = 200_000;
        let integral: f64 = (0..n)
            .map(|i| {
                let q = (i as f64 + 0.5) / n as f64;
                q * (1.0 - q) * (1.0 - q)
            })
            .sum::<f64>()
            / n as f64;
        let lp = log_model_prior(&mv("010"), &ModelPrior::BetaBinomial { alpha: 1.0, beta: 1.0 });
        assert!((lp - (1.0f64 / 12.0).ln()).abs() < 1e-12);
        assert!((lp - integral.ln()).abs() < 1e-8);
    }

    #[test]
    fn beta_binomial_limit_is_binomial_half() {
        let bb = ModelPrior::BetaBinomial { alpha: 1e6, beta: 1e6 };
        let bin = ModelPrior::Binomial { q: 0.5 };
        let base = mv("00000");
        for g in enumerate_all(5).unwrap() {
            let r_bb = log_model_prior(&g, &bb) - log_model_prior(&base, &bb);
            let r_bin = log_model_prior(&g, &bin) - log_model_prior(&base, &bin);
            assert!((r_bb - r_bin).abs() < 1e-4);
        }
    }

    #[test]
    fn priors_normalize_over_space() {
        for p in [1usize, 4, 9, 12] {
            for pr in [ModelPrior::Binomial { q: 0.3 }, ModelPrior::BetaBinomial { alpha: 0.7, beta: 2.5 }] {
                let total = crate::math::logsumexp(enumerate_all(p).unwrap().map(|g| log_model_prior(&g, &pr)));
                assert!(total.abs() < 1e-10, "p={p} {pr:?}");
            }
        }
    }

    #[test]
    fn log_target_null_model() {
        let d = {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let x = DMatrix::from_fn(30, 15, |_, _| rng.random::<f64>());
            let y = (0..30).map(|_| rng.random::<f64>()).collect();
            Dataset::new(y, x, Family::Gaussian, None).unwrap()
        };
        let prior =
            PriorSpec { criterion: Criterion::GPriorExact, g: 30.0, model_prior: ModelPrior::Binomial { q: 0.5 } };
        let v = log_target(&d, &ModelVector::zeros(15), &prior).unwrap();
        assert!((v - 15.0 * 0.5f64.ln()).abs() < 1e-12);
        let post = Posterior::new(d.clone(), prior).unwrap();
        for code in [0u64, 1, 77, 32767] {
            let g = ModelVector::from_code(15, code);
            assert_eq!(post.log_target(&g), log_target(&d, &g, &prior).unwrap());
        }
    }

    #[test]
    fn dataset_validation() {
        let x = DMatrix::from_element(3, 1, 1.0);
        assert!(Dataset::new(vec![0.0, 2.0, 1.0], x.clone(), Family::BinomialLogit, None).is_err());
        assert!(Dataset::new(vec![0.0, 1.5, 1.0], x.clone(), Family::PoissonLog, None).is_err());
        assert!(Dataset::new(vec![0.0, f64::NAN, 1.0], x.clone(), Family::Gaussian, None).is_err());
        assert!(Dataset::new(vec![0.0], DMatrix::from_element(1, 1, 1.0), Family::Gaussian, None).is_err());
        assert!(Dataset::new(vec![0.0, 1.0, 1.0], x, Family::BinomialLogit, None).is_ok());
    }

    proptest! {
        #[test]
        fn r_squared_in_unit_interval_and_scale_invariant(seed in 0u64..1000, code in 1u64..32) {
            let d = random_gaussian(25, 5, seed);
            let g = ModelVector::from_code(5, code);
            let r = r_squared(&d, &g).unwrap();
            prop_assert!((0.0..=1.0).contains(&r));
            let j = g.ones_indices()[0];
            let mut x = d.x().clone();
            x.column_mut(j).scale_mut(3.7);
            let d2 = Dataset::new(d.y().to_vec(), x, Family::Gaussian, None).unwrap();
            prop_assert!((r_squared(&d2, &g).unwrap() - r).abs() < 1e-10);
        }

        #[test]
        fn log_target_increases_with_r2(r1 in 0.0f64..0.99, dr in 0.001f64..0.01, k in 0usize..10) {
            let a = gprior_from_r2(100, k, 100.0, r1);
            let b = gprior_from_r2(100, k, 100.0, (r1 + dr).min(1.0));
            prop_assert!(b > a);
        }
    }
}
