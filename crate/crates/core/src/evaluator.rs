//! Counted, cached access to the log target.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::likelihoods::ModelScorer;
use crate::modelspace::{ModelCache, ModelVector};

/// Wraps a scorer and a cache. Every lookup counts towards the proposal
/// total; the cache size is the number of distinct models.
pub struct Evaluator<'a> {
    scorer: &'a dyn ModelScorer,
    cache: &'a ModelCache,
    lookups: AtomicU64,
    parallel: bool,
}

impl<'a> Evaluator<'a> {
    pub fn new(scorer: &'a dyn ModelScorer, cache: &'a ModelCache) -> Self {
        Evaluator { scorer, cache, lookups: AtomicU64::new(0), parallel: default_parallel() }
    }

    /// Enables or disables fan-out of batch lookups. Results are identical
    /// either way.
    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel && cfg!(feature = "parallel");
        self
    }

    pub fn n_covariates(&self) -> usize {
        self.scorer.n_covariates()
    }

    pub fn cache(&self) -> &ModelCache {
        self.cache
    }

    /// Number of lookups so far.
    pub fn lookups(&self) -> u64 {
        self.lookups.load(Ordering::Relaxed)
    }

    /// Distinct models in the cache.
    pub fn unique(&self) -> u64 {
        self.cache.len() as u64
    }

    /// log π̃(γ); failures score −∞.
    pub fn eval(&self, gamma: &ModelVector) -> f64 {
        self.lookups.fetch_add(1, Ordering::Relaxed);
        self.cache.get_or_compute(gamma, |g| self.scorer.score(g)).map(|r| r.log_target()).unwrap_or(f64::NEG_INFINITY)
    }

    /// log π̃ for a batch, in input order.
    pub fn eval_batch(&self, gammas: &[ModelVector]) -> Vec<f64> {
        #[cfg(feature = "parallel")]
        if self.parallel && gammas.len() > 1 {
            use rayon::prelude::*;
            return gammas.par_iter().map(|g| self.eval(g)).collect();
        }
        gammas.iter().map(|g| self.eval(g)).collect()
    }

    /// Score lookup that does not count as a generated proposal.
    pub fn peek(&self, gamma: &ModelVector) -> f64 {
        match self.cache.get(gamma) {
            Some(r) => r.log_target(),
            None => self.scorer.log_target(gamma),
        }
    }
}

fn default_parallel() -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads() > 1
    }
    #[cfg(not(feature = "parallel"))]
    {
        false
    }
}
