//! Browser bindings. Every exported function returns a JSON string.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use modejump::config::RunConfig;
use modejump::datagen::generate_example1;
use modejump::estimators::{enumerate_posterior, mass_metrics, rm_estimates};
use modejump::likelihoods::Posterior;
use modejump::modelspace::enumerate_all;
use modejump::proposals::ProposalKernel;
use modejump::sampler::{run, run_baseline, Baseline, Budget, StepKind};
use modejump::{ModelCache, ModelVector};

fn posterior(seed: u64) -> Result<Posterior, String> {
    let c = RunConfig::example1();
    let data = generate_example1(seed);
    let prior = c.prior_spec(data.n_obs());
    Posterior::new(data, prior).map_err(|e| e.to_string())
}

/// Exact inclusion probabilities and the ten best models of the simulated
/// example.
pub fn exact_posterior(seed: u64) -> Result<Value, String> {
    let post = posterior(seed)?;
    let en = enumerate_posterior(&post).map_err(|e| e.to_string())?;
    let est = en.posterior();
    let top: Vec<Value> =
        est.model_post.iter().take(10).map(|(g, p)| json!({ "model": g.to_string(), "posterior": p })).collect();
    Ok(json!({ "inclusion": est.inclusion, "top": top, "models": en.records.len() }))
}

/// Runs one chain on the simulated example and scores it against the exact
/// posterior. `algorithm` is mjmcmc, mc3 or rs.
pub fn sample(seed: u64, chain_seed: u64, budget: u64, algorithm: &str) -> Result<Value, String> {
    if budget == 0 || budget > 200_000 {
        return Err("budget must be in 1..=200000".into());
    }
    let post = posterior(seed)?;
    let truth = enumerate_posterior(&post).map_err(|e| e.to_string())?;
    let cache = ModelCache::new();
    let budget = Budget::Proposals(budget);
    let r = match algorithm {
        "mjmcmc" => {
            let mut c = RunConfig::example1().sampler_config(15).map_err(|e| e.to_string())?;
            c.budget = budget;
            c.seed = chain_seed;
            run(&c, &post, &cache)
        }
        "mc3" => run_baseline(Baseline::Mc3, budget, None, chain_seed, &post, &cache),
        "rs" => run_baseline(Baseline::Rs, budget, None, chain_seed, &post, &cache),
        other => return Err(format!("unknown algorithm {other:?}")),
    }
    .map_err(|e| e.to_string())?;
    let rm = rm_estimates(&r.visited).map_err(|e| e.to_string())?;
    let mass = mass_metrics(&r.visited, Some(truth.log_total));
    let jumps = r.stats(StepKind::ModeJump);
    Ok(json!({
        "rm": rm.inclusion,
        "truth": truth.posterior().inclusion,
        "captured": mass.c,
        "tot": r.tot,
        "eff": r.eff,
        "iterations": r.samples.len(),
        "jumps": { "proposed": jumps.proposed, "accepted": jumps.accepted },
    }))
}

/// Full proposal distribution of one kernel from `from` (a 0/1 string).
/// Types 1 and 2 use a common change probability `rho`.
pub fn kernel_density(kernel_type: u8, from: &str, min: usize, max: usize, rho: f64) -> Result<Value, String> {
    let from: ModelVector = from.parse().map_err(|e: modejump::Error| e.to_string())?;
    let p = from.len();
    if p == 0 || p > 10 {
        return Err("model length must be in 1..=10".into());
    }
    let k = match kernel_type {
        1 => ProposalKernel::random_change_uniform(min, max, vec![rho; p]),
        2 => ProposalKernel::random_change_fixed(max, vec![rho; p]),
        3 => ProposalKernel::swap_uniform(min, max),
        4 => ProposalKernel::swap_fixed(max),
        5 => ProposalKernel::Add,
        6 => ProposalKernel::Delete,
        t => return Err(format!("unknown kernel type {t}")),
    };
    k.validate(p).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    let mut total = 0.0;
    for to in enumerate_all(p).map_err(|e| e.to_string())? {
        let d = k.log_density(&from, &to).map_err(|e| e.to_string())?.exp();
        total += d;
        if d > 0.0 {
            rows.push(json!({ "model": to.to_string(), "hamming": from.hamming(&to).unwrap_or(0), "density": d }));
        }
    }
    Ok(json!({ "support": rows, "total": total }))
}

fn js(r: Result<Value, String>) -> Result<String, JsValue> {
    r.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = exactPosterior)]
pub fn exact_posterior_js(seed: u32) -> Result<String, JsValue> {
    js(exact_posterior(seed.into()))
}

#[wasm_bindgen(js_name = sample)]
pub fn sample_js(seed: u32, chain_seed: u32, budget: u32, algorithm: &str) -> Result<String, JsValue> {
    js(sample(seed.into(), chain_seed.into(), budget.into(), algorithm))
}

#[wasm_bindgen(js_name = kernelDensity)]
pub fn kernel_density_js(kernel_type: u8, from: &str, min: u32, max: u32, rho: f64) -> Result<String, JsValue> {
    js(kernel_density(kernel_type, from, min as usize, max as usize, rho))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_posterior_is_normalized() {
        let v = exact_posterior(1).unwrap();
        assert_eq!(v["models"], 32768);
        let top: f64 = v["top"].as_array().unwrap().iter().map(|m| m["posterior"].as_f64().unwrap()).sum();
        assert!(top > 0.0 && top <= 1.0 + 1e-12);
    }

    #[test]
    fn sample_reports_mass() {
        for alg in ["mjmcmc", "mc3", "rs"] {
            let v = sample(1, 3, 500, alg).unwrap();
            let c = v["captured"].as_f64().unwrap();
            assert!(c > 0.0 && c <= 1.0, "{alg}: {c}");
            assert_eq!(v["rm"].as_array().unwrap().len(), 15);
        }
        assert!(sample(1, 3, 500, "nope").is_err());
    }

    #[test]
    fn kernel_density_sums_to_one() {
        for t in 1..=6 {
            let v = kernel_density(t, "011010", 1, 3, 0.3).unwrap();
            assert!((v["total"].as_f64().unwrap() - 1.0).abs() < 1e-12, "type {t}");
        }
        assert!(kernel_density(4, "01", 1, 5, 0.3).is_err());
    }
}
