//! Posterior estimates from visited model sets and chain samples, captured
//! mass, the enumeration oracles and replication error tables.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use crate::error::{Error, Result};
use crate::likelihoods::ModelScorer;
use crate::math::{log1mexp, LogSum};
use crate::modelspace::{enumerate_all, ModelRecord, ModelVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Rm,
    Mc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimates {
    /// Model probabilities, sorted by model.
    pub model_post: Vec<(ModelVector, f64)>,
    pub inclusion: Vec<f64>,
    pub method: Method,
}

impl Estimates {
    pub fn probability(&self, gamma: &ModelVector) -> f64 {
        self.model_post.binary_search_by(|(g, _)| g.cmp(gamma)).map_or(0.0, |i| self.model_post[i].1)
    }
}

fn inclusion_from(model_post: &[(ModelVector, f64)], p: usize) -> Vec<f64> {
    let mut inc = vec![0.0; p];
    for (g, w) in model_post {
        for i in g.ones_indices() {
            inc[i] += w;
        }
    }
    inc.iter().map(|v| v.clamp(0.0, 1.0)).collect()
}

/// Renormalized estimates over the visited set.
pub fn rm_estimates(visited: &[(ModelVector, ModelRecord)]) -> Result<Estimates> {
    let p =
        visited.first().map(|(g, _)| g.len()).ok_or_else(|| Error::InvalidArgument("visited set is empty".into()))?;
    let mut acc = LogSum::new();
    for (_, r) in visited {
        acc.add(r.log_target());
    }
    let z = acc.value();
    if !z.is_finite() {
        return Err(Error::InvalidArgument("visited set carries no finite mass".into()));
    }
    let mut model_post: Vec<(ModelVector, f64)> =
        visited.iter().map(|(g, r)| (g.clone(), (r.log_target() - z).exp())).collect();
    model_post.sort_by(|a, b| a.0.cmp(&b.0));
    let inclusion = inclusion_from(&model_post, p);
    Ok(Estimates { model_post, inclusion, method: Method::Rm })
}

/// Visit-frequency estimates from chain samples.
pub fn mc_estimates<'a, I>(samples: I) -> Result<Estimates>
where
    I: IntoIterator<Item = &'a ModelVector>,
{
    let mut counts: HashMap<&ModelVector, u64> = HashMap::new();
    let mut n = 0u64;
    for g in samples {
        *counts.entry(g).or_insert(0) += 1;
        n += 1;
    }
    if n == 0 {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let p = counts.keys().next().map(|g| g.len()).unwrap_or(0);
    let mut model_post: Vec<(ModelVector, f64)> =
        counts.into_iter().map(|(g, c)| (g.clone(), c as f64 / n as f64)).collect();
    model_post.sort_by(|a, b| a.0.cmp(&b.0));
    let inclusion = inclusion_from(&model_post, p);
    Ok(Estimates { model_post, inclusion, method: Method::Mc })
}

/// Captured and unexplored mass of a visited set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassReport {
    /// log Σ_V π̃.
    pub log_captured: f64,
    /// log of the unexplored mass; `None` without an oracle total.
    pub log_i: Option<f64>,
    /// Unexplored mass on the linear scale (may overflow to ∞ for huge evidence).
    pub i: Option<f64>,
    /// Captured fraction.
    pub c: Option<f64>,
}

pub fn mass_metrics(visited: &[(ModelVector, ModelRecord)], log_total: Option<f64>) -> MassReport {
    let mut acc = LogSum::new();
    for (_, r) in visited {
        acc.add(r.log_target());
    }
    let log_captured = acc.value();
    match log_total {
        None => MassReport { log_captured, log_i: None, i: None, c: None },
        Some(t) => {
            let ratio = (log_captured - t).min(0.0);
            let log_i = if ratio == 0.0 { f64::NEG_INFINITY } else { t + log1mexp(ratio) };
            MassReport { log_captured, log_i: Some(log_i), i: Some(log_i.exp()), c: Some(ratio.exp()) }
        }
    }
}

/// Full enumeration of the model space.
#[derive(Debug, Clone)]
pub struct Enumeration {
    /// Every model with its record, in integer-encoding order.
    pub records: Vec<(ModelVector, ModelRecord)>,
    pub log_total: f64,
}

impl Enumeration {
    /// Exact posterior estimates.
    pub fn posterior(&self) -> Estimates {
        rm_estimates(&self.records).expect("enumeration has finite mass")
    }
}

fn record_of(scorer: &dyn ModelScorer, g: &ModelVector) -> Result<ModelRecord> {
    let (log_mlik, log_prior) = scorer.score(g)?;
    Ok(ModelRecord { log_mlik, log_prior, visit_count: 0 })
}

pub fn enumerate_posterior(scorer: &dyn ModelScorer) -> Result<Enumeration> {
    let p = scorer.n_covariates();
    let models: Vec<ModelVector> = enumerate_all(p)?.collect();
    let records = score_all(scorer, &models)?;
    let mut acc = LogSum::new();
    for (_, r) in &records {
        acc.add(r.log_target());
    }
    Ok(Enumeration { records, log_total: acc.value() })
}

fn score_all(scorer: &dyn ModelScorer, models: &[ModelVector]) -> Result<Vec<(ModelVector, ModelRecord)>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        models.par_iter().map(|g| record_of(scorer, g).map(|r| (g.clone(), r))).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        models.iter().map(|g| record_of(scorer, g).map(|r| (g.clone(), r))).collect()
    }
}

struct Ranked(f64, u64);

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ranked {
    // Reversed so the heap top is the weakest kept model; ties favor lower codes.
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(self.1.cmp(&other.1))
    }
}

/// The `m` highest-posterior models, found by streaming enumeration, and the
/// log total mass of the space.
pub fn top_oracle(scorer: &dyn ModelScorer, m: usize) -> Result<(Vec<(ModelVector, ModelRecord)>, f64)> {
    let p = scorer.n_covariates();
    let mut heap: BinaryHeap<Ranked> = BinaryHeap::with_capacity(m + 1);
    let mut total = LogSum::new();
    for g in enumerate_all(p)? {
        let lt = scorer.log_target(&g);
        total.add(lt);
        let code = g.code().expect("enumeration limit keeps codes in range");
        heap.push(Ranked(lt, code));
        if heap.len() > m {
            heap.pop();
        }
    }
    let mut kept: Vec<Ranked> = heap.into_vec();
    kept.sort();
    let records = kept
        .into_iter()
        .map(|Ranked(_, code)| {
            let g = ModelVector::from_code(p, code);
            record_of(scorer, &g).map(|r| (g, r))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((records, total.value()))
}

/// Per-replication estimates fed into the error table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRow {
    pub rm_inclusion: Vec<f64>,
    pub mc_inclusion: Option<Vec<f64>>,
    /// Unexplored mass as a fraction of the total.
    pub i_fraction: f64,
    pub c: f64,
    pub tot: u64,
    pub eff: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorLine {
    pub quantity: String,
    pub method: Method,
    pub bias: f64,
    pub rmse: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationTable {
    pub lines: Vec<ErrorLine>,
    pub replications: usize,
    pub mean_tot: f64,
    pub mean_eff: f64,
    pub mean_c: f64,
    pub median_c: f64,
    pub median_eff: f64,
}

pub const INCLUSION_SCALE: f64 = 1e2;
pub const MASS_SCALE: f64 = 1e5;

/// Scaled bias and RMSE of `est` against `truth`.
pub fn bias_rmse(est: &[f64], truth: f64, scale: f64) -> (f64, f64) {
    let n = est.len() as f64;
    let bias = est.iter().map(|e| e - truth).sum::<f64>() / n;
    let mse = est.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / n;
    (bias * scale, mse.sqrt() * scale)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Summarizes replications against exact inclusion probabilities. The
/// unexplored mass fraction is compared against its true value 0.
pub fn error_table(rows: &[ReplicationRow], truth_inclusion: &[f64]) -> ReplicationTable {
    let mut lines = Vec::new();
    for (j, &t) in truth_inclusion.iter().enumerate() {
        let rm: Vec<f64> = rows.iter().map(|r| r.rm_inclusion[j]).collect();
        let (bias, rmse) = bias_rmse(&rm, t, INCLUSION_SCALE);
        lines.push(ErrorLine {
            quantity: format!("gamma{}", j + 1),
            method: Method::Rm,
            bias,
            rmse,
            scale: INCLUSION_SCALE,
        });
        if rows.iter().all(|r| r.mc_inclusion.is_some()) && !rows.is_empty() {
            let mc: Vec<f64> = rows.iter().map(|r| r.mc_inclusion.as_ref().unwrap()[j]).collect();
            let (bias, rmse) = bias_rmse(&mc, t, INCLUSION_SCALE);
            lines.push(ErrorLine {
                quantity: format!("gamma{}", j + 1),
                method: Method::Mc,
                bias,
                rmse,
                scale: INCLUSION_SCALE,
            });
        }
    }
    let i: Vec<f64> = rows.iter().map(|r| r.i_fraction).collect();
    let (bias, rmse) = bias_rmse(&i, 0.0, MASS_SCALE);
    lines.push(ErrorLine { quantity: "I".into(), method: Method::Rm, bias, rmse, scale: MASS_SCALE });
    let n = rows.len().max(1) as f64;
    let cs: Vec<f64> = rows.iter().map(|r| r.c).collect();
    let effs: Vec<f64> = rows.iter().map(|r| r.eff as f64).collect();
    ReplicationTable {
        lines,
        replications: rows.len(),
        mean_tot: rows.iter().map(|r| r.tot as f64).sum::<f64>() / n,
        mean_eff: effs.iter().sum::<f64>() / n,
        mean_c: cs.iter().sum::<f64>() / n,
        median_c: median(&cs),
        median_eff: median(&effs),
    }
}

/// Runs `replications` independent runs with seeds `seed + r` and tabulates
/// their errors. `run_one` maps a seed to one row.
pub fn replicate<F>(
    replications: usize,
    seed: u64,
    truth_inclusion: &[f64],
    run_one: F,
) -> Result<(Vec<ReplicationRow>, ReplicationTable)>
where
    F: Fn(u64) -> Result<ReplicationRow> + Sync,
{
    let seeds: Vec<u64> = (0..replications as u64).map(|r| seed.wrapping_add(r)).collect();
    #[cfg(feature = "parallel")]
    let rows: Result<Vec<ReplicationRow>> = {
        use rayon::prelude::*;
        seeds.par_iter().map(|&s| run_one(s)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Result<Vec<ReplicationRow>> = seeds.iter().map(|&s| run_one(s)).collect();
    let rows = rows?;
    let table = error_table(&rows, truth_inclusion);
    Ok((rows, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_small_fixture, FixtureStructure};
    use crate::likelihoods::{Criterion, ModelPrior, Posterior, PriorSpec, TableTarget};

    fn rec(lt: f64) -> ModelRecord {
        ModelRecord { log_mlik: lt, log_prior: 0.0, visit_count: 1 }
    }

    fn mv(s: &str) -> ModelVector {
        s.parse().unwrap()
    }

    fn fixture_posterior(p: usize, seed: u64) -> Posterior {
        let f = generate_small_fixture(p, 60, &FixtureStructure::illustration_like(p), seed).unwrap();
        Posterior::new(
            f.data,
            PriorSpec { criterion: Criterion::GPriorExact, g: 60.0, model_prior: ModelPrior::Binomial { q: 0.5 } },
        )
        .unwrap()
    }

    #[test]
    fn single_model_gets_everything() {
        let e = rm_estimates(&[(mv("101"), rec(-3.0))]).unwrap();
        assert_eq!(e.model_post, vec![(mv("101"), 1.0)]);
        assert_eq!(e.inclusion, vec![1.0, 0.0, 1.0]);
        assert!(rm_estimates(&[]).is_err());
    }

    #[test]
    fn rm_over_full_space_is_exact_posterior() {
        let post = fixture_posterior(8, 1);
        let en = enumerate_posterior(&post).unwrap();
        let rm = en.posterior();
        for ((g, r), (g2, pr)) in en.records.iter().zip(&rm.model_post) {
            assert_eq!(g, g2);
            let direct = r.log_target().exp() / en.log_total.exp();
            assert!((pr - direct).abs() < 1e-12);
        }
        let total: f64 = rm.model_post.iter().map(|(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_mass_model_changes_nothing() {
        let v = vec![(mv("01"), rec(1.0)), (mv("10"), rec(2.0))];
        let mut w = v.clone();
        w.push((mv("11"), rec(f64::NEG_INFINITY)));
        let a = rm_estimates(&v).unwrap();
        let b = rm_estimates(&w).unwrap();
        assert_eq!(a.inclusion, b.inclusion);
        assert_eq!(b.probability(&mv("11")), 0.0);
    }

    #[test]
    fn rm_shift_invariant() {
        let v: Vec<_> = (0..8).map(|c| (ModelVector::from_code(3, c), rec(c as f64 * 0.7 - 2.0))).collect();
        let shifted: Vec<_> = v.iter().map(|(g, r)| (g.clone(), rec(r.log_mlik + 812.5))).collect();
        let a = rm_estimates(&v).unwrap();
        let b = rm_estimates(&shifted).unwrap();
        for (x, y) in a.model_post.iter().zip(&b.model_post) {
            assert!((x.1 - y.1).abs() < 1e-12);
        }
    }

    #[test]
    fn mc_frequencies() {
        let s = vec![mv("10"); 5];
        let e = mc_estimates(&s).unwrap();
        assert_eq!(e.model_post, vec![(mv("10"), 1.0)]);
        let s = [mv("10"), mv("01")];
        let e = mc_estimates(&s).unwrap();
        assert_eq!(e.probability(&mv("10")), 0.5);
        assert_eq!(e.inclusion, vec![0.5, 0.5]);
        assert!(mc_estimates(&Vec::new()).is_err());
    }

    #[test]
    fn inclusion_is_sum_of_model_probabilities() {
        let v: Vec<_> = (0..16).map(|c| (ModelVector::from_code(4, c), rec(((c * 37) % 11) as f64 * 0.3))).collect();
        let e = rm_estimates(&v).unwrap();
        for j in 0..4 {
            let s: f64 = e.model_post.iter().filter(|(g, _)| g.get(j)).map(|(_, w)| w).sum();
            assert!((s - e.inclusion[j]).abs() < 1e-12);
        }
        let samples: Vec<ModelVector> = (0..100).map(|i| ModelVector::from_code(4, (i * i) % 16)).collect();
        let m = mc_estimates(&samples).unwrap();
        for j in 0..4 {
            let s: f64 = m.model_post.iter().filter(|(g, _)| g.get(j)).map(|(_, w)| w).sum();
            let direct = samples.iter().filter(|g| g.get(j)).count() as f64 / 100.0;
            assert!((s - m.inclusion[j]).abs() < 1e-12);
            assert!((direct - m.inclusion[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn mass_metrics_extremes_and_nesting() {
        let all: Vec<_> = (0..8).map(|c| (ModelVector::from_code(3, c), rec(c as f64))).collect();
        let total = crate::math::logsumexp(all.iter().map(|(_, r)| r.log_target()));
        let m = mass_metrics(&all, Some(total));
        assert_eq!(m.c, Some(1.0));
        assert_eq!(m.i, Some(0.0));
        let none = mass_metrics(&[], Some(total));
        assert_eq!(none.c, Some(0.0));
        assert!((none.i.unwrap() - total.exp()).abs() < 1e-9);
        assert_eq!(mass_metrics(&all, None).c, None);
        let mut prev_c = 0.0;
        let mut prev_i = f64::INFINITY;
        for k in 1..=8 {
            let m = mass_metrics(&all[..k], Some(total));
            assert!(m.c.unwrap() >= prev_c && m.i.unwrap() <= prev_i);
            prev_c = m.c.unwrap();
            prev_i = m.i.unwrap();
        }
    }

    #[test]
    fn top_oracle_cases() {
        let vals: Vec<f64> = (0..32).map(|c| ((c * 13) % 29) as f64 * 0.25).collect();
        let t = TableTarget::new(5, vals.clone()).unwrap();
        let (all, total) = top_oracle(&t, 32).unwrap();
        assert_eq!(all.len(), 32);
        assert!((mass_metrics(&all, Some(total)).c.unwrap() - 1.0).abs() < 1e-12);
        let (one, _) = top_oracle(&t, 1).unwrap();
        let map = (0..32).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
        assert_eq!(one[0].0, ModelVector::from_code(5, map as u64));
        // the m best beat any other m-subset
        let (best5, _) = top_oracle(&t, 5).unwrap();
        let mut sorted = vals.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let got: f64 = best5.iter().map(|(_, r)| r.log_target()).sum();
        assert!((got - sorted[..5].iter().sum::<f64>()).abs() < 1e-12);
        assert!(top_oracle(&TableTarget::new(2, vec![0.0; 4]).unwrap(), 0).unwrap().0.is_empty());
    }

    #[test]
    fn error_table_arithmetic() {
        let truth = vec![0.3, 0.9];
        let exact: Vec<ReplicationRow> = (0..5)
            .map(|_| ReplicationRow {
                rm_inclusion: truth.clone(),
                mc_inclusion: Some(truth.clone()),
                i_fraction: 0.0,
                c: 1.0,
                tot: 10,
                eff: 5,
            })
            .collect();
        let t = error_table(&exact, &truth);
        assert!(t.lines.iter().all(|l| l.bias == 0.0 && l.rmse == 0.0));
        let offset: Vec<ReplicationRow> = (0..5)
            .map(|_| ReplicationRow {
                rm_inclusion: vec![0.31, 0.9],
                mc_inclusion: None,
                i_fraction: 0.0,
                c: 1.0,
                tot: 10,
                eff: 5,
            })
            .collect();
        let t = error_table(&offset, &truth);
        let l = &t.lines[0];
        assert!((l.bias - 1.0).abs() < 1e-10 && (l.rmse - 1.0).abs() < 1e-10);
        assert_eq!(t.lines.len(), 3);
        assert_eq!(median(&[3.0, 1.0, 2.0, 10.0]), 2.5);
    }

    #[test]
    fn replicate_uses_consecutive_seeds() {
        let (rows, _) = replicate(4, 10, &[0.5], |s| {
            Ok(ReplicationRow {
                rm_inclusion: vec![s as f64],
                mc_inclusion: None,
                i_fraction: 0.0,
                c: 1.0,
                tot: s,
                eff: s,
            })
        })
        .unwrap();
        let seeds: Vec<u64> = rows.iter().map(|r| r.tot).collect();
        assert_eq!(seeds, vec![10, 11, 12, 13]);
    }
}
