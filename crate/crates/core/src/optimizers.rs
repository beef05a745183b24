//! Local optimizers used inside mode jumps, plus the multiple-try step
//! shared with the main chain.
//!
//! Stochastic optimizers run in stages. A stage draws `width` proposals from
//! the neighborhood kernel around the stage's starting state, scores them as
//! a batch and then accepts them one after another in proposal order, each
//! against the state current at that point.

use rand::Rng;

use crate::error::{Error, Result};
use crate::evaluator::Evaluator;
use crate::math::{log1mexp, logsumexp};
use crate::modelspace::ModelVector;
use crate::proposals::{KernelMixture, ProposalKernel, Proposer};

#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerKind {
    /// Simulated annealing with geometric cooling `t ← t / cool` while `t > tf`,
    /// `steps_per_temp` stages per temperature.
    Sa { t0: f64, tf: f64, cool: f64, steps_per_temp: usize },
    /// Randomized greedy: `steps` stages accepting strict improvements.
    /// `first_improving` ends a stage at its first acceptance; `local_stop`
    /// ends the run after a stage without acceptance.
    Greedy { steps: usize, local_stop: bool, first_improving: bool },
    /// Deterministic greedy over every flip of `size` free indices, scanned in
    /// lexicographic order, for at most `steps` stages. Stops at a local mode.
    ExhaustiveGreedy { size: usize, steps: usize, first_improving: bool },
    /// `steps` multiple-try Metropolis steps with `tries` trials each.
    LocalMtmcmc { tries: usize, steps: usize },
}

impl OptimizerKind {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Sa { .. } => "sa",
            OptimizerKind::Greedy { .. } => "greedy",
            OptimizerKind::ExhaustiveGreedy { .. } => "exhaustive",
            OptimizerKind::LocalMtmcmc { .. } => "mtmcmc",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    /// One component is drawn per run and used for every stage.
    pub neighborhood: KernelMixture,
    /// Proposals per stage (K).
    pub width: usize,
}

impl OptimizerSpec {
    pub fn validate(&self, p: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.width < 1 {
            return bad("optimizer width must be at least 1".into());
        }
        match self.kind {
            OptimizerKind::Sa { t0, tf, cool, steps_per_temp } => {
                if !(t0 > tf && tf > 0.0) {
                    return bad(format!("annealing needs t0 > tf > 0, got {t0}, {tf}"));
                }
                if !(cool > 1.0) {
                    return bad(format!("cooling factor must exceed 1, got {cool}"));
                }
                if steps_per_temp < 1 {
                    return bad("annealing needs at least one stage per temperature".into());
                }
            }
            OptimizerKind::Greedy { steps, .. } | OptimizerKind::LocalMtmcmc { steps, .. } if steps < 1 => {
                return bad("optimizer steps must be at least 1".into());
            }
            OptimizerKind::ExhaustiveGreedy { size, steps, .. } => {
                if size < 1 || size > p || steps < 1 {
                    return bad(format!("exhaustive greedy needs 1 ≤ size ≤ {p} and steps ≥ 1"));
                }
            }
            OptimizerKind::LocalMtmcmc { tries, .. } if tries < 1 => {
                return bad("local MTMCMC needs at least one try".into());
            }
            _ => {}
        }
        self.neighborhood.validate(p)
    }

    /// True when the run is a deterministic function of its start.
    pub fn is_deterministic(&self) -> bool {
        matches!(self.kind, OptimizerKind::ExhaustiveGreedy { .. })
    }

    /// Whether the number and position of sub-steps is fixed in advance, so
    /// the final sub-step's transition probability is computable.
    pub fn has_final_step_density(&self) -> bool {
        match self.kind {
            OptimizerKind::Sa { .. } | OptimizerKind::ExhaustiveGreedy { .. } => true,
            OptimizerKind::Greedy { local_stop, .. } => !local_stop,
            OptimizerKind::LocalMtmcmc { .. } => false,
        }
    }

    /// Annealing temperatures, one entry per stage.
    pub fn temperatures(&self) -> Vec<f64> {
        let mut out = Vec::new();
        if let OptimizerKind::Sa { t0, tf, cool, steps_per_temp } = self.kind {
            let mut t = t0;
            while t > tf {
                out.extend(std::iter::repeat_n(t, steps_per_temp));
                t /= cool;
            }
        }
        out
    }
}

/// Acceptance rule of one sub-step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rule {
    Anneal { temperature: f64 },
    Improve,
}

impl Rule {
    /// log α(current → proposal).
    pub fn log_accept(&self, current: f64, proposal: f64) -> f64 {
        if proposal == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        if current == f64::NEG_INFINITY {
            return 0.0;
        }
        match *self {
            Rule::Anneal { temperature } => ((proposal - current) / temperature).min(0.0),
            Rule::Improve => {
                if proposal > current {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }
}

/// The final sub-step of a stochastic run.
#[derive(Debug, Clone, PartialEq)]
pub struct LastStep {
    pub stage_start: ModelVector,
    pub pre: ModelVector,
    pub pre_score: f64,
    pub proposal: ModelVector,
    pub proposal_score: f64,
    pub post: ModelVector,
    pub rule: Rule,
    /// The stage had already locked after a first improvement, so the final
    /// proposal was never considered.
    pub locked: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerTrace {
    pub start: ModelVector,
    pub end: ModelVector,
    pub end_score: f64,
    /// Target lookups made by this run, including the start.
    pub evaluations: u64,
    /// log probability of the realized path, including proposal draws and
    /// accept decisions. 0 for deterministic and empty runs.
    pub path_log_density: f64,
    pub sub_steps: usize,
    /// Neighborhood component used, when one was drawn.
    pub kernel: Option<usize>,
    pub last: Option<LastStep>,
    pub deterministic: bool,
}

impl OptimizerTrace {
    /// log q_o(end | start) as recorded.
    pub fn log_density(&self, start: &ModelVector, end: &ModelVector) -> Result<f64> {
        if start != &self.start || end != &self.end {
            return Err(Error::UnsupportedVariant(
                "no path recorded for this start/end pair; use the last-randomization acceptance".into(),
            ));
        }
        Ok(if self.deterministic { 0.0 } else { self.path_log_density })
    }

    fn kernel<'s>(&self, spec: &'s OptimizerSpec) -> Option<&'s ProposalKernel> {
        self.kernel.map(|k| &spec.neighborhood.entries()[k].0)
    }

    /// log probability that the run's final sub-step yields what it yielded.
    pub fn realized_final_log_prob(&self, spec: &OptimizerSpec, free: &[usize]) -> Result<f64> {
        if !spec.has_final_step_density() {
            return Err(Error::UnsupportedVariant(format!("{} optimizer has no final-step density", spec.kind.name())));
        }
        let (Some(ls), Some(kernel)) = (&self.last, self.kernel(spec)) else {
            return Ok(0.0);
        };
        if ls.locked {
            return Ok(0.0);
        }
        Ok(if ls.post != ls.pre {
            kernel.log_density_in(&ls.stage_start, &ls.post, free) + ls.rule.log_accept(ls.pre_score, ls.proposal_score)
        } else if ls.proposal == ls.pre {
            0.0
        } else {
            log1mexp(ls.rule.log_accept(ls.pre_score, ls.proposal_score))
        })
    }

    /// log probability that the run's final sub-step, replayed from its
    /// recorded pre-state, would yield `outcome`. When `outcome` is the
    /// pre-state, the rejection probability is estimated with one fresh
    /// proposal draw. Deterministic and empty runs reduce to an indicator of
    /// `outcome == end`.
    pub fn final_log_prob<R: Rng + ?Sized>(
        &self,
        spec: &OptimizerSpec,
        outcome: &ModelVector,
        free: &[usize],
        ev: &Evaluator<'_>,
        rng: &mut R,
    ) -> Result<f64> {
        if !spec.has_final_step_density() {
            return Err(Error::UnsupportedVariant(format!("{} optimizer has no final-step density", spec.kind.name())));
        }
        let indicator = |a: &ModelVector, b: &ModelVector| if a == b { 0.0 } else { f64::NEG_INFINITY };
        let (Some(ls), Some(kernel)) = (&self.last, self.kernel(spec)) else {
            return Ok(indicator(outcome, &self.end));
        };
        if ls.locked {
            return Ok(indicator(outcome, &ls.pre));
        }
        if outcome != &ls.pre {
            let ls_s = kernel.log_density_in(&ls.stage_start, outcome, free);
            if ls_s == f64::NEG_INFINITY {
                return Ok(ls_s);
            }
            return Ok(ls_s + ls.rule.log_accept(ls.pre_score, ev.eval(outcome)));
        }
        let x = kernel.propose_in(&ls.stage_start, free, rng).to;
        if x == ls.pre {
            return Ok(0.0);
        }
        Ok(log1mexp(ls.rule.log_accept(ls.pre_score, ev.eval(&x))))
    }
}

/// Runs the optimizer from `start`, changing only indices in `free`
/// (ascending).
pub fn optimize<R: Rng + ?Sized>(
    spec: &OptimizerSpec,
    start: &ModelVector,
    free: &[usize],
    ev: &Evaluator<'_>,
    rng: &mut R,
) -> OptimizerTrace {
    let before = ev.lookups();
    let start_score = ev.eval(start);
    let mut run = Run { cur: start.clone(), score: start_score, path: 0.0, sub_steps: 0, last: None };
    let mut kernel_id = None;
    match spec.kind {
        OptimizerKind::Sa { .. } => {
            let k = spec.neighborhood.choose(rng);
            kernel_id = Some(k);
            let kernel = &spec.neighborhood.entries()[k].0;
            for t in spec.temperatures() {
                run.stage(kernel, Rule::Anneal { temperature: t }, false, spec.width, free, ev, rng);
            }
        }
        OptimizerKind::Greedy { steps, local_stop, first_improving } => {
            let k = spec.neighborhood.choose(rng);
            kernel_id = Some(k);
            let kernel = &spec.neighborhood.entries()[k].0;
            for _ in 0..steps {
                let moved = run.stage(kernel, Rule::Improve, first_improving, spec.width, free, ev, rng);
                if local_stop && !moved {
                    break;
                }
            }
        }
        OptimizerKind::ExhaustiveGreedy { size, steps, first_improving } => {
            for _ in 0..steps {
                if !run.exhaustive_stage(size, first_improving, free, ev) {
                    break;
                }
            }
        }
        OptimizerKind::LocalMtmcmc { tries, steps } => {
            let k = spec.neighborhood.choose(rng);
            kernel_id = Some(k);
            let kernel = &spec.neighborhood.entries()[k].0;
            for _ in 0..steps {
                let out = multiple_try_step(kernel, &run.cur, run.score, tries, free, ev, rng);
                run.path += out.log_path;
                run.sub_steps += 1;
                run.cur = out.state;
                run.score = out.score;
            }
        }
    }
    let deterministic = spec.is_deterministic();
    OptimizerTrace {
        start: start.clone(),
        end: run.cur,
        end_score: run.score,
        evaluations: ev.lookups() - before,
        path_log_density: if deterministic { 0.0 } else { run.path },
        sub_steps: run.sub_steps,
        kernel: kernel_id,
        last: run.last,
        deterministic,
    }
}

struct Run {
    cur: ModelVector,
    score: f64,
    path: f64,
    sub_steps: usize,
    last: Option<LastStep>,
}

impl Run {
    /// One stochastic stage. Returns whether anything was accepted.
    #[allow(clippy::too_many_arguments)]
    fn stage<R: Rng + ?Sized>(
        &mut self,
        kernel: &ProposalKernel,
        rule: Rule,
        first_improving: bool,
        width: usize,
        free: &[usize],
        ev: &Evaluator<'_>,
        rng: &mut R,
    ) -> bool {
        let a = self.cur.clone();
        let props: Vec<ModelVector> = (0..width).map(|_| kernel.propose_in(&a, free, rng).to).collect();
        let scores = ev.eval_batch(&props);
        let mut locked = false;
        let mut moved = false;
        for (i, (x, &fx)) in props.into_iter().zip(scores.iter()).enumerate() {
            let is_last = i + 1 == width;
            if locked {
                if is_last {
                    self.last = Some(LastStep {
                        stage_start: a.clone(),
                        pre: self.cur.clone(),
                        pre_score: self.score,
                        proposal: x,
                        proposal_score: fx,
                        post: self.cur.clone(),
                        rule,
                        locked: true,
                    });
                }
                continue;
            }
            self.sub_steps += 1;
            let la = rule.log_accept(self.score, fx);
            let accept = if la >= 0.0 {
                true
            } else if la == f64::NEG_INFINITY {
                false
            } else {
                rng.random::<f64>().ln() < la
            };
            self.path += kernel.log_density_in(&a, &x, free) + if accept { la } else { log1mexp(la) };
            let pre = if is_last { Some((self.cur.clone(), self.score)) } else { None };
            if accept {
                self.cur = x.clone();
                self.score = fx;
                moved = true;
                if first_improving {
                    locked = true;
                }
            }
            if let Some((pre, pre_score)) = pre {
                self.last = Some(LastStep {
                    stage_start: a.clone(),
                    pre,
                    pre_score,
                    proposal: x,
                    proposal_score: fx,
                    post: self.cur.clone(),
                    rule,
                    locked: false,
                });
            }
        }
        moved
    }

    /// One deterministic scan over all flips of `size` free indices.
    fn exhaustive_stage(&mut self, size: usize, first_improving: bool, free: &[usize], ev: &Evaluator<'_>) -> bool {
        let size = size.min(free.len());
        if size == 0 {
            return false;
        }
        let cands: Vec<ModelVector> = Combinations::new(free.len(), size)
            .map(|c| {
                let mut g = self.cur.clone();
                for k in c {
                    g.flip(free[k]);
                }
                g
            })
            .collect();
        let scores = ev.eval_batch(&cands);
        self.sub_steps += cands.len();
        let mut best: Option<usize> = None;
        for (i, &s) in scores.iter().enumerate() {
            let bar = best.map_or(self.score, |b| scores[b]);
            if Rule::Improve.log_accept(bar, s) == 0.0 {
                best = Some(i);
                if first_improving {
                    break;
                }
            }
        }
        match best {
            Some(b) => {
                self.score = scores[b];
                self.cur = cands[b].clone();
                true
            }
            None => false,
        }
    }
}

/// Lexicographic k-subsets of 0..n.
struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Combinations { n, idx: (0..k).collect(), done: k > n }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let k = self.idx.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

/// Result of one multiple-try Metropolis step.
#[derive(Debug, Clone)]
pub struct MtmOutcome {
    pub state: ModelVector,
    pub score: f64,
    pub accepted: bool,
    pub trials: Vec<ModelVector>,
    pub selected: Option<usize>,
    pub reverse: Vec<ModelVector>,
    /// log probability of every draw made by the step, including the
    /// accept decision.
    pub log_path: f64,
}

/// Multiple-try Metropolis from `gamma` with `tries` trials from `q`.
///
/// Trial i has weight π̃(y_i)·q(γ|y_i). One trial y is selected by weight,
/// `tries − 1` reverse trials are drawn from q(·|y) and γ completes the
/// reverse set; the move is accepted with probability
/// min{1, Σ forward weights / Σ reverse weights}. With one try this is a
/// plain Metropolis-Hastings step.
pub fn multiple_try_step<P: Proposer, R: Rng + ?Sized>(
    q: &P,
    gamma: &ModelVector,
    gamma_score: f64,
    tries: usize,
    free: &[usize],
    ev: &Evaluator<'_>,
    rng: &mut R,
) -> MtmOutcome {
    let trials: Vec<ModelVector> = (0..tries).map(|_| q.propose_in(gamma, free, rng).to).collect();
    let scores = ev.eval_batch(&trials);
    let mut log_path: f64 = trials.iter().map(|t| q.log_density_in(gamma, t, free)).sum();
    let w: Vec<f64> = trials.iter().zip(&scores).map(|(t, s)| s + q.log_density_in(t, gamma, free)).collect();
    let total_fwd = logsumexp(w.iter().copied());
    let reject = |trials, selected, reverse, log_path| MtmOutcome {
        state: gamma.clone(),
        score: gamma_score,
        accepted: false,
        trials,
        selected,
        reverse,
        log_path,
    };
    if total_fwd == f64::NEG_INFINITY {
        return reject(trials, None, Vec::new(), log_path);
    }
    let sel = if tries == 1 {
        0
    } else {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = None;
        let mut last = 0;
        for (i, wi) in w.iter().enumerate() {
            if *wi == f64::NEG_INFINITY {
                continue;
            }
            acc += (wi - total_fwd).exp();
            last = i;
            if u < acc {
                chosen = Some(i);
                break;
            }
        }
        chosen.unwrap_or(last)
    };
    log_path += w[sel] - total_fwd;
    let y = trials[sel].clone();
    let y_score = scores[sel];
    let reverse: Vec<ModelVector> = (1..tries).map(|_| q.propose_in(&y, free, rng).to).collect();
    let rscores = ev.eval_batch(&reverse);
    log_path += reverse.iter().map(|r| q.log_density_in(&y, r, free)).sum::<f64>();
    let wr = reverse
        .iter()
        .zip(&rscores)
        .map(|(r, s)| s + q.log_density_in(r, &y, free))
        .chain(std::iter::once(gamma_score + q.log_density_in(gamma, &y, free)));
    let la = (total_fwd - logsumexp(wr)).min(0.0);
    let accept = if la >= 0.0 {
        true
    } else if la.is_nan() || la == f64::NEG_INFINITY {
        false
    } else {
        rng.random::<f64>().ln() < la
    };
    log_path += if accept { la } else { log1mexp(la) };
    if accept {
        MtmOutcome { state: y, score: y_score, accepted: true, trials, selected: Some(sel), reverse, log_path }
    } else {
        reject(trials, Some(sel), reverse, log_path)
    }
}

pub fn multiple_try_mixture<R: Rng + ?Sized>(
    q: &KernelMixture,
    gamma: &ModelVector,
    gamma_score: f64,
    tries: usize,
    ev: &Evaluator<'_>,
    rng: &mut R,
) -> MtmOutcome {
    let all: Vec<usize> = (0..gamma.len()).collect();
    multiple_try_step(q, gamma, gamma_score, tries, &all, ev, rng)
}
