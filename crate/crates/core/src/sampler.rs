//! The mode jumping chain, its plain (multiple-try) Metropolis steps and the
//! single-coordinate baselines.
//!
//! Each iteration is a mode jump with probability `jump_probability` and a
//! multiple-try step from `q_g` otherwise. A mode jump swaps a large index
//! set J drawn from `q_l`, optimizes with J frozen, randomizes with `q_r` and
//! runs the same optimizer backwards from the proposal with J swapped again.

use rand::Rng;

use crate::error::{Error, Result};
use crate::estimators::rm_estimates;
use crate::evaluator::Evaluator;
use crate::likelihoods::ModelScorer;
use crate::modelspace::{ModelCache, ModelRecord, ModelVector};
use crate::optimizers::{multiple_try_step, optimize, OptimizerKind, OptimizerSpec, OptimizerTrace};
use crate::proposals::{KernelMixture, ProposalKernel, SizeSpec};
use crate::rng::stream;

/// When a run stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Budget {
    Iterations(u64),
    /// Total target lookups (Tot).
    Proposals(u64),
    /// Distinct models in the cache (Eff).
    Unique(u64),
}

impl Budget {
    pub fn amount(&self) -> u64 {
        match *self {
            Budget::Iterations(n) | Budget::Proposals(n) | Budget::Unique(n) => n,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Budget::Iterations(_) => "iterations",
            Budget::Proposals(_) => "proposals",
            Budget::Unique(_) => "unique",
        }
    }

    fn measure(&self, iterations: u64, ev: &Evaluator<'_>) -> u64 {
        match self {
            Budget::Iterations(_) => iterations,
            Budget::Proposals(_) => ev.lookups(),
            Budget::Unique(_) => ev.unique(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcceptanceVariant {
    /// Backward randomization density ratio; valid for any optimizer.
    LastRandomization,
    /// Final optimizer sub-step ratio with a symmetric randomization.
    SymmetricRandomization,
    /// Target ratio only; needs a deterministic optimizer.
    DeterministicOptimizer,
}

impl AcceptanceVariant {
    pub fn name(&self) -> &'static str {
        match self {
            AcceptanceVariant::LastRandomization => "last",
            AcceptanceVariant::SymmetricRandomization => "symmetric",
            AcceptanceVariant::DeterministicOptimizer => "deterministic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "last" => Ok(AcceptanceVariant::LastRandomization),
            "symmetric" => Ok(AcceptanceVariant::SymmetricRandomization),
            "deterministic" => Ok(AcceptanceVariant::DeterministicOptimizer),
            _ => Err(Error::InvalidArgument(format!("unknown acceptance variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub budget: Budget,
    pub jump_probability: f64,
    pub q_g: KernelMixture,
    /// Large-jump kernel; swap kernels only.
    pub q_l: KernelMixture,
    /// Optimizers with mixture weights, one drawn per mode jump.
    pub q_o: Vec<(OptimizerSpec, f64)>,
    pub q_r: KernelMixture,
    pub variant: AcceptanceVariant,
    pub mtmcmc_tries: usize,
    /// In units of the budget; `None` means 10% of it. Zero disables
    /// adaptation.
    pub burn_in: Option<u64>,
    pub seed: u64,
    pub rho_bounds: (f64, f64),
}

impl SamplerConfig {
    pub const DEFAULT_JUMP_PROBABILITY: f64 = 0.05;
    pub const DEFAULT_RHO_BOUNDS: (f64, f64) = (0.001, 0.999);

    /// A plain Metropolis-Hastings (or multiple-try) chain.
    pub fn local(budget: Budget, q_g: KernelMixture, tries: usize, seed: u64) -> Self {
        SamplerConfig {
            budget,
            jump_probability: 0.0,
            q_g,
            q_l: KernelMixture::single(ProposalKernel::swap_fixed(1)),
            q_o: Vec::new(),
            q_r: KernelMixture::single(ProposalKernel::swap_fixed(1)),
            variant: AcceptanceVariant::LastRandomization,
            mtmcmc_tries: tries,
            burn_in: None,
            seed,
            rho_bounds: Self::DEFAULT_RHO_BOUNDS,
        }
    }

    pub fn burn_in_amount(&self) -> u64 {
        self.burn_in.unwrap_or(self.budget.amount() / 10)
    }

    /// Checks the whole configuration against a model space of dimension
    /// `p` and reports every problem found.
    pub fn validate(&self, p: usize) -> Result<()> {
        let mut problems = Vec::new();
        let mut check = |r: Result<()>, what: &str| {
            if let Err(e) = r {
                problems.push(format!("{what}: {e}"));
            }
        };
        if p == 0 {
            check(Err(Error::InvalidArgument("model space has no covariates".into())), "data");
        }
        if self.budget.amount() == 0 {
            check(Err(Error::InvalidArgument("budget must be positive".into())), "budget");
        }
        if let Budget::Unique(n) = self.budget {
            if p < 64 && n > 1u64 << p {
                check(Err(Error::InvalidArgument(format!("{n} unique models exceed the space size 2^{p}"))), "budget");
            }
        }
        if !(0.0..=1.0).contains(&self.jump_probability) {
            check(
                Err(Error::InvalidArgument(format!("{} is not in [0, 1]", self.jump_probability))),
                "jump probability",
            );
        }
        if self.mtmcmc_tries < 1 {
            check(Err(Error::InvalidArgument("at least one try".into())), "tries");
        }
        let (lo, hi) = self.rho_bounds;
        if !(lo > 0.0 && lo <= hi && hi < 1.0) {
            check(Err(Error::InvalidArgument(format!("invalid bounds [{lo}, {hi}]"))), "rho bounds");
        }
        check(self.q_g.validate(p), "q_g");
        if self.jump_probability > 0.0 {
            check(self.q_l.validate(p), "q_l");
            if self.q_l.entries().iter().any(|(k, _)| !matches!(k, ProposalKernel::Swap { .. })) {
                check(Err(Error::InvalidArgument("large jumps must use swap kernels".into())), "q_l");
            }
            check(self.q_r.validate(p), "q_r");
            if self.q_o.is_empty() {
                check(Err(Error::InvalidArgument("no optimizer given".into())), "q_o");
            }
            if !(self.q_o.iter().all(|(_, w)| *w >= 0.0 && w.is_finite())
                && self.q_o.iter().map(|(_, w)| w).sum::<f64>() > 0.0)
                && !self.q_o.is_empty()
            {
                check(Err(Error::InvalidArgument("weights must be nonnegative with a positive sum".into())), "q_o");
            }
            for (spec, _) in &self.q_o {
                check(spec.validate(p), &format!("q_o {}", spec.kind.name()));
            }
            self.validate_variant(p, &mut check);
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    fn validate_variant(&self, p: usize, check: &mut impl FnMut(Result<()>, &str)) {
        let fail = |m: String| Err(Error::UnsupportedVariant(m));
        let used = self.q_o.iter().filter(|(_, w)| *w > 0.0).map(|(s, _)| s);
        match self.variant {
            AcceptanceVariant::LastRandomization => {
                let positive = self.q_r.entries().iter().any(|(k, w)| {
                    *w > 0.0
                        && matches!(k, ProposalKernel::RandomChange { rho, size, .. }
                            if rho.iter().all(|r| *r > 0.0 && *r < 1.0) && size_max(*size) >= p)
                });
                if !positive {
                    check(fail("needs a random-change randomization of size p with rho in (0, 1)".into()), "q_r");
                }
            }
            AcceptanceVariant::SymmetricRandomization => {
                if !self.q_r.is_symmetric() {
                    check(fail("symmetric variant needs a symmetric randomization".into()), "q_r");
                }
                for s in used {
                    if !s.has_final_step_density() {
                        check(fail(format!("{} optimizer has no final-step density", s.kind.name())), "q_o");
                    }
                }
            }
            AcceptanceVariant::DeterministicOptimizer => {
                if !self.q_r.is_symmetric() {
                    check(fail("deterministic variant needs a symmetric randomization".into()), "q_r");
                }
                for s in used {
                    if !s.is_deterministic() {
                        check(fail(format!("{} optimizer is not deterministic", s.kind.name())), "q_o");
                    }
                }
            }
        }
    }
}

fn size_max(s: SizeSpec) -> usize {
    match s {
        SizeSpec::Fixed(n) => n,
        SizeSpec::Uniform { max, .. } => max,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StepKind {
    Mh,
    Mtmcmc,
    ModeJump,
}

impl StepKind {
    pub const ALL: [StepKind; 3] = [StepKind::Mh, StepKind::Mtmcmc, StepKind::ModeJump];

    pub fn name(&self) -> &'static str {
        match self {
            StepKind::Mh => "mh",
            StepKind::Mtmcmc => "mtmcmc",
            StepKind::ModeJump => "mode-jump",
        }
    }

    fn index(&self) -> usize {
        *self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainSample {
    pub gamma: ModelVector,
    pub step_kind: StepKind,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub proposed: u64,
    pub accepted: u64,
    /// Rejections forced by a zero backward density.
    pub zero_density: u64,
}

impl StepStats {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub samples: Vec<ChainSample>,
    /// Index of the first sample after burn-in.
    pub burn_in: usize,
    /// The visited set V, sorted by model.
    pub visited: Vec<(ModelVector, ModelRecord)>,
    pub stats: [StepStats; 3],
    pub tot: u64,
    pub eff: u64,
    /// Inclusion estimates the adaptive kernels were set to, if adaptation ran.
    pub adapted_rho: Option<Vec<f64>>,
}

impl RunResult {
    pub fn stats(&self, kind: StepKind) -> StepStats {
        self.stats[kind.index()]
    }

    pub fn post_burn_in(&self) -> impl Iterator<Item = &ModelVector> {
        self.samples[self.burn_in..].iter().map(|s| &s.gamma)
    }
}

/// Outcome of one transition.
#[derive(Debug, Clone)]
pub struct Step {
    pub state: ModelVector,
    pub score: f64,
    pub accepted: bool,
}

fn accept_log<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio >= 0.0 {
        true
    } else if log_ratio.is_nan() || log_ratio == f64::NEG_INFINITY {
        false
    } else {
        rng.random::<f64>().ln() < log_ratio
    }
}

/// Metropolis-Hastings step with a kernel mixture.
pub fn mh_step<R: Rng + ?Sized>(
    q: &KernelMixture,
    gamma: &ModelVector,
    score: f64,
    ev: &Evaluator<'_>,
    rng: &mut R,
) -> Step {
    mtmcmc_step(q, gamma, score, 1, ev, rng)
}

/// Multiple-try step with `tries` trials; one try is plain Metropolis-Hastings.
pub fn mtmcmc_step<R: Rng + ?Sized>(
    q: &KernelMixture,
    gamma: &ModelVector,
    score: f64,
    tries: usize,
    ev: &Evaluator<'_>,
    rng: &mut R,
) -> Step {
    let all: Vec<usize> = (0..gamma.len()).collect();
    let out = multiple_try_step(q, gamma, score, tries, &all, ev, rng);
    Step { state: out.state, score: out.score, accepted: out.accepted }
}

/// Everything a mode jump did, for diagnostics and tests.
#[derive(Debug, Clone)]
pub struct JumpOutcome {
    pub step: Step,
    pub j_star: Vec<usize>,
    pub optimizer: usize,
    pub forward: OptimizerTrace,
    pub proposal: ModelVector,
    pub proposal_score: f64,
    pub backward: OptimizerTrace,
    pub log_ratio: f64,
    /// The backward randomization density vanished.
    pub zero_density: bool,
}

/// log acceptance ratio of the last-randomization variant.
pub fn last_randomization_log_ratio(
    q_r: &KernelMixture,
    gamma: &ModelVector,
    score: f64,
    proposal: &ModelVector,
    proposal_score: f64,
    chi_back: &ModelVector,
    chi_fwd: &ModelVector,
) -> f64 {
    let all: Vec<usize> = (0..gamma.len()).collect();
    let back = q_r.log_density_in(chi_back, gamma, &all);
    if back == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    proposal_score - score + back - q_r.log_density_in(chi_fwd, proposal, &all)
}

fn pick_weighted<R: Rng + ?Sized>(weights: impl Iterator<Item = f64> + Clone, rng: &mut R) -> usize {
    let total: f64 = weights.clone().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

fn complement(p: usize, j: &[usize]) -> Vec<usize> {
    let mut frozen = vec![false; p];
    for &i in j {
        frozen[i] = true;
    }
    (0..p).filter(|&i| !frozen[i]).collect()
}

/// One mode jump from `gamma` (whose log target is `score`).
#[allow(clippy::too_many_arguments)]
pub fn mode_jump_step<R: Rng + ?Sized>(
    q_l: &KernelMixture,
    q_o: &[(OptimizerSpec, f64)],
    q_r: &KernelMixture,
    variant: AcceptanceVariant,
    gamma: &ModelVector,
    score: f64,
    ev: &Evaluator<'_>,
    rng: &mut R,
) -> Result<JumpOutcome> {
    let p = gamma.len();
    let all: Vec<usize> = (0..p).collect();
    let (jump, _) = q_l.propose(gamma, rng);
    let j_star = jump.changed;
    let free = complement(p, &j_star);
    let optimizer = pick_weighted(q_o.iter().map(|(_, w)| *w), rng);
    let spec = &q_o[optimizer].0;
    let forward = optimize(spec, &jump.to, &free, ev, rng);
    let (proposal, _) = q_r.propose_in(&forward.end, &all, rng);
    let proposal = proposal.to;
    let proposal_score = ev.eval(&proposal);
    let back_start = proposal.swap(&j_star)?;
    let backward = optimize(spec, &back_start, &free, ev, rng);
    let (log_ratio, zero_density) = match variant {
        AcceptanceVariant::LastRandomization => {
            let lr =
                last_randomization_log_ratio(q_r, gamma, score, &proposal, proposal_score, &backward.end, &forward.end);
            (lr, lr == f64::NEG_INFINITY && proposal_score > f64::NEG_INFINITY)
        }
        AcceptanceVariant::SymmetricRandomization | AcceptanceVariant::DeterministicOptimizer => {
            // The auxiliary backward end state is drawn around the current
            // state; the symmetric randomization cancels against it.
            let aux = q_r.propose_in(gamma, &all, rng).0.to;
            let bfac = backward.final_log_prob(spec, &aux, &free, ev, rng)?;
            let ffac = forward.realized_final_log_prob(spec, &free)?;
            if bfac == f64::NEG_INFINITY {
                (f64::NEG_INFINITY, proposal_score > f64::NEG_INFINITY)
            } else {
                (proposal_score - score + bfac - ffac, false)
            }
        }
    };
    // Returning to the start is a no-op whatever the ratio says.
    let (log_ratio, zero_density) = if proposal == *gamma { (0.0, false) } else { (log_ratio, zero_density) };
    let accepted = proposal_score > f64::NEG_INFINITY && accept_log(log_ratio, rng);
    let step = if accepted {
        Step { state: proposal.clone(), score: proposal_score, accepted: true }
    } else {
        Step { state: gamma.clone(), score, accepted: false }
    };
    Ok(JumpOutcome { step, j_star, optimizer, forward, proposal, proposal_score, backward, log_ratio, zero_density })
}

fn initial_state(p: usize, ev: &Evaluator<'_>) -> Result<(ModelVector, f64)> {
    let null = ModelVector::zeros(p);
    let s = ev.eval(&null);
    if s > f64::NEG_INFINITY {
        return Ok((null, s));
    }
    let full = ModelVector::ones(p);
    let s = ev.eval(&full);
    if s > f64::NEG_INFINITY {
        return Ok((full, s));
    }
    Err(Error::State("neither the null nor the full model has a finite target".into()))
}

fn adapt(config: &mut SamplerConfig, cache: &ModelCache) -> Result<Vec<f64>> {
    let est = rm_estimates(&cache.records())?.inclusion;
    let b = config.rho_bounds;
    config.q_g = config.q_g.update_rho(&est, b)?;
    config.q_r = config.q_r.update_rho(&est, b)?;
    for (spec, _) in config.q_o.iter_mut() {
        spec.neighborhood = spec.neighborhood.update_rho(&est, b)?;
    }
    Ok(est)
}

fn finish(
    samples: Vec<ChainSample>,
    burn_in: usize,
    stats: [StepStats; 3],
    ev: &Evaluator<'_>,
    adapted_rho: Option<Vec<f64>>,
) -> RunResult {
    RunResult {
        burn_in: burn_in.min(samples.len()),
        samples,
        visited: ev.cache().records(),
        stats,
        tot: ev.lookups(),
        eff: ev.unique(),
        adapted_rho,
    }
}

/// Runs the mode jumping chain from the null model.
pub fn run(config: &SamplerConfig, scorer: &dyn ModelScorer, cache: &ModelCache) -> Result<RunResult> {
    let ev = Evaluator::new(scorer, cache);
    run_with(config, &ev)
}

/// As [`run`], with a caller-supplied evaluator.
pub fn run_with(config: &SamplerConfig, ev: &Evaluator<'_>) -> Result<RunResult> {
    let p = ev.n_covariates();
    config.validate(p)?;
    let mut cfg = config.clone();
    let mut rng = stream(cfg.seed);
    let (mut gamma, mut score) = initial_state(p, ev)?;
    let burn = cfg.burn_in_amount();
    let mut burn_index = None;
    let mut adapted = None;
    let mut stats = [StepStats::default(); 3];
    let mut samples = Vec::new();
    let mut it = 0u64;
    while cfg.budget.measure(it, ev) < cfg.budget.amount() {
        if burn_index.is_none() && cfg.budget.measure(it, ev) >= burn {
            burn_index = Some(samples.len());
            if burn > 0 {
                adapted = Some(adapt(&mut cfg, ev.cache())?);
            }
        }
        let jump = cfg.jump_probability > 0.0 && rng.random::<f64>() < cfg.jump_probability;
        let (kind, step) = if jump {
            let out = mode_jump_step(&cfg.q_l, &cfg.q_o, &cfg.q_r, cfg.variant, &gamma, score, ev, &mut rng)?;
            if out.zero_density {
                stats[StepKind::ModeJump.index()].zero_density += 1;
            }
            (StepKind::ModeJump, out.step)
        } else {
            let kind = if cfg.mtmcmc_tries == 1 { StepKind::Mh } else { StepKind::Mtmcmc };
            (kind, mtmcmc_step(&cfg.q_g, &gamma, score, cfg.mtmcmc_tries, ev, &mut rng))
        };
        let s = &mut stats[kind.index()];
        s.proposed += 1;
        s.accepted += u64::from(step.accepted);
        gamma = step.state;
        score = step.score;
        samples.push(ChainSample { gamma: gamma.clone(), step_kind: kind, accepted: step.accepted });
        it += 1;
    }
    let burn_in = burn_index.unwrap_or(samples.len());
    Ok(finish(samples, burn_in, stats, ev, adapted))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    /// Flip one uniformly chosen coordinate.
    Mc3,
    /// Assign a fresh Bernoulli(1/2) value to one uniformly chosen coordinate.
    Rs,
}

impl Baseline {
    pub fn name(&self) -> &'static str {
        match self {
            Baseline::Mc3 => "mc3",
            Baseline::Rs => "rs",
        }
    }
}

pub fn mc3_step<R: Rng + ?Sized>(gamma: &ModelVector, score: f64, ev: &Evaluator<'_>, rng: &mut R) -> Step {
    let mut to = gamma.clone();
    to.flip(rng.random_range(0..gamma.len()));
    symmetric_step(gamma, score, to, ev, rng)
}

pub fn rs_step<R: Rng + ?Sized>(gamma: &ModelVector, score: f64, ev: &Evaluator<'_>, rng: &mut R) -> Step {
    let mut to = gamma.clone();
    let j = rng.random_range(0..gamma.len());
    to.set(j, rng.random::<bool>());
    symmetric_step(gamma, score, to, ev, rng)
}

fn symmetric_step<R: Rng + ?Sized>(
    gamma: &ModelVector,
    score: f64,
    to: ModelVector,
    ev: &Evaluator<'_>,
    rng: &mut R,
) -> Step {
    let s = ev.eval(&to);
    if to == *gamma {
        return Step { state: to, score, accepted: true };
    }
    if accept_log(s - score, rng) {
        Step { state: to, score: s, accepted: true }
    } else {
        Step { state: gamma.clone(), score, accepted: false }
    }
}

/// Runs a baseline chain from the null model.
pub fn run_baseline(
    kind: Baseline,
    budget: Budget,
    burn_in: Option<u64>,
    seed: u64,
    scorer: &dyn ModelScorer,
    cache: &ModelCache,
) -> Result<RunResult> {
    let ev = Evaluator::new(scorer, cache);
    let p = ev.n_covariates();
    if p == 0 || budget.amount() == 0 {
        return Err(Error::Config(vec!["baseline needs p ≥ 1 and a positive budget".into()]));
    }
    let mut rng = stream(seed);
    let (mut gamma, mut score) = initial_state(p, &ev)?;
    let burn = burn_in.unwrap_or(budget.amount() / 10);
    let mut burn_index = None;
    let mut stats = [StepStats::default(); 3];
    let mut samples = Vec::new();
    let mut it = 0u64;
    while budget.measure(it, &ev) < budget.amount() {
        if burn_index.is_none() && budget.measure(it, &ev) >= burn {
            burn_index = Some(samples.len());
        }
        let step = match kind {
            Baseline::Mc3 => mc3_step(&gamma, score, &ev, &mut rng),
            Baseline::Rs => rs_step(&gamma, score, &ev, &mut rng),
        };
        let s = &mut stats[StepKind::Mh.index()];
        s.proposed += 1;
        s.accepted += u64::from(step.accepted);
        gamma = step.state;
        score = step.score;
        samples.push(ChainSample { gamma: gamma.clone(), step_kind: StepKind::Mh, accepted: step.accepted });
        it += 1;
    }
    let b = burn_index.unwrap_or(samples.len());
    Ok(finish(samples, b, stats, &ev, None))
}

/// Optimizer used by the deterministic variant: single-flip exhaustive greedy.
pub fn exhaustive_greedy(steps: usize) -> OptimizerSpec {
    OptimizerSpec {
        kind: OptimizerKind::ExhaustiveGreedy { size: 1, steps, first_improving: false },
        neighborhood: KernelMixture::single(ProposalKernel::swap_fixed(1)),
        width: 1,
    }
}
