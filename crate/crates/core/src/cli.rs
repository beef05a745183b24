//! Batch front end: CSV ingestion, experiment execution and reports.

use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::config::{Algorithm, DataSource, RunConfig};
use crate::datagen::{generate_example1, generate_small_fixture, FixtureStructure};
use crate::error::{Error, Result};
use crate::estimators::{
    enumerate_posterior, error_table, mass_metrics, mc_estimates, replicate, rm_estimates, top_oracle, Enumeration,
    Estimates, Method, ReplicationRow, ReplicationTable,
};
use crate::likelihoods::{Dataset, Family, ModelScorer, Posterior};
use crate::modelspace::{ModelCache, ModelRecord, ModelVector};
use crate::sampler::{run, run_baseline, Baseline, Budget, RunResult, StepKind};

/// Exact truth is computed up to this many covariates.
pub const TRUTH_LIMIT: usize = 20;

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::UnsupportedVariant(_) | Error::InvalidArgument(_) => 2,
        Error::Parse { .. } | Error::Data(_) => 3,
        Error::ResourceLimit(_) => 4,
        _ => 1,
    }
}

/// Reads a CSV with a header row. The column `y` is the response, an
/// optional `offset` column is attached as offset and every other column is
/// a covariate, in file order.
pub fn load_csv(path: &Path, family: Family) -> Result<Dataset> {
    let mut text = String::new();
    fs::File::open(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?
        .read_to_string(&mut text)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    parse_csv(&text, family)
}

pub fn parse_csv(text: &str, family: Family) -> Result<Dataset> {
    let mut rdr =
        csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let perr = |row: usize, column: usize, message: String| Error::Parse { row, column, message };
    let header: Vec<String> =
        rdr.headers().map_err(|e| perr(1, 0, e.to_string()))?.iter().map(str::to_string).collect();
    let y_col = header.iter().position(|h| h == "y").ok_or_else(|| perr(1, 0, "no column named y".into()))?;
    let off_col = header.iter().position(|h| h == "offset");
    let cov: Vec<usize> = (0..header.len()).filter(|&j| j != y_col && Some(j) != off_col).collect();
    let mut y = Vec::new();
    let mut offset = Vec::new();
    let mut cells = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| perr(row, 0, e.to_string()))?;
        if rec.len() != header.len() {
            return Err(perr(
                row,
                rec.len().min(header.len()) + 1,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        let num = |j: usize| -> Result<f64> {
            let s = &rec[j];
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| perr(row, j + 1, format!("not a finite number: {s:?}")))
        };
        y.push(num(y_col)?);
        if let Some(o) = off_col {
            offset.push(num(o)?);
        }
        for &j in &cov {
            cells.push(num(j)?);
        }
    }
    if y.is_empty() {
        return Err(Error::Data("no data rows".into()));
    }
    let x = DMatrix::from_row_slice(y.len(), cov.len(), &cells);
    Dataset::new(y, x, family, off_col.map(|_| offset))
}

/// Writes a dataset as CSV with columns `y`, optional `offset`, `x1..xp`.
/// Values use shortest round-trip formatting.
pub fn write_csv(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    let mut header = vec!["y".to_string()];
    if data.offset().is_some() {
        header.push("offset".into());
    }
    header.extend((1..=data.n_covariates()).map(|j| format!("x{j}")));
    w.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
    for i in 0..data.n_obs() {
        let mut row = vec![data.y()[i].to_string()];
        if let Some(o) = data.offset() {
            row.push(o[i].to_string());
        }
        row.extend((0..data.n_covariates()).map(|j| data.x()[(i, j)].to_string()));
        w.write_record(&row).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

pub fn load_data(config: &RunConfig) -> Result<Dataset> {
    match &config.data {
        DataSource::Example1 { seed } => Ok(generate_example1(*seed)),
        DataSource::Fixture { p, t, seed } => {
            Ok(generate_small_fixture(*p, *t, &FixtureStructure::illustration_like(*p), *seed)?.data)
        }
        DataSource::Csv { path, family } => load_csv(path, *family),
    }
}

/// Report tables of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    /// (rm, mc, truth) per covariate.
    pub inclusion: Vec<(Option<f64>, Option<f64>, Option<f64>)>,
    /// Highest-posterior models: (model, log_mlik, log_prior, posterior).
    pub models: Vec<(ModelVector, f64, f64, f64)>,
    pub summary: Vec<(String, String)>,
    pub errors: Option<ReplicationTable>,
}

fn g17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Four significant digits for human-facing tables.
pub fn sig4(v: f64) -> String {
    if !v.is_finite() {
        return g17(v);
    }
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs().log10().floor() as i32;
    if (-3..5).contains(&mag) {
        let decimals = (3 - mag).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.3e}")
    }
}

fn opt17(v: Option<f64>) -> String {
    v.map(g17).unwrap_or_else(|| "NA".into())
}

impl Report {
    pub fn inclusion_tsv(&self) -> String {
        let mut s = String::from("index\trm\tmc\ttruth\n");
        for (j, (rm, mc, t)) in self.inclusion.iter().enumerate() {
            let _ = writeln!(s, "{}\t{}\t{}\t{}", j + 1, opt17(*rm), opt17(*mc), opt17(*t));
        }
        s
    }

    pub fn models_tsv(&self) -> String {
        let mut s = String::from("model\tlog_mlik\tlog_prior\tposterior\n");
        for (g, m, p, w) in &self.models {
            let _ = writeln!(s, "{g}\t{}\t{}\t{}", g17(*m), g17(*p), g17(*w));
        }
        s
    }

    pub fn summary_tsv(&self) -> String {
        let mut s = String::from("key\tvalue\n");
        for (k, v) in &self.summary {
            let _ = writeln!(s, "{k}\t{v}");
        }
        s
    }

    pub fn bias_rmse_tsv(&self) -> Option<String> {
        let t = self.errors.as_ref()?;
        let mut s = String::from("quantity\tmethod\tbias\trmse\tscale\n");
        for l in &t.lines {
            let m = if l.method == Method::Rm { "rm" } else { "mc" };
            let _ = writeln!(s, "{}\t{m}\t{}\t{}\t{}", l.quantity, g17(l.bias), g17(l.rmse), g17(l.scale));
        }
        Some(s)
    }

    /// Writes the report files into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut files = vec![
            ("inclusion.tsv", self.inclusion_tsv()),
            ("models.tsv", self.models_tsv()),
            ("summary.tsv", self.summary_tsv()),
        ];
        if let Some(b) = self.bias_rmse_tsv() {
            files.push(("bias_rmse.tsv", b));
        }
        let mut out = Vec::new();
        for (name, body) in files {
            let p = dir.join(name);
            fs::write(&p, body)?;
            out.push(p);
        }
        Ok(out)
    }

    /// Plain-text tables for the terminal.
    pub fn human(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.summary {
            let shown = v.parse::<f64>().ok().filter(|_| v.contains('e')).map(sig4).unwrap_or_else(|| v.clone());
            let _ = writeln!(s, "{k:<24}{shown}");
        }
        let cell = |v: &Option<f64>| v.map(sig4).unwrap_or_else(|| "-".into());
        let _ = writeln!(s, "\n{:>5}  {:>8}  {:>8}  {:>8}", "index", "rm", "mc", "truth");
        for (j, (rm, mc, t)) in self.inclusion.iter().enumerate() {
            let _ = writeln!(s, "{:>5}  {:>8}  {:>8}  {:>8}", j + 1, cell(rm), cell(mc), cell(t));
        }
        let _ = writeln!(
            s,
            "\n{:<w$}  {:>10}  {:>10}",
            "model",
            "log_mlik",
            "posterior",
            w = self.models.first().map_or(5, |m| m.0.len().max(5))
        );
        for (g, m, _, w) in self.models.iter().take(10) {
            let _ = writeln!(s, "{g:<5}  {:>10}  {:>10}", sig4(*m), sig4(*w));
        }
        if let Some(t) = &self.errors {
            let _ = writeln!(s, "\n{:<10}  {:>6}  {:>8}  {:>8}", "quantity", "method", "bias", "rmse");
            for l in &t.lines {
                let m = if l.method == Method::Rm { "rm" } else { "mc" };
                let _ = writeln!(s, "{:<10}  {m:>6}  {:>8}  {:>8}", l.quantity, sig4(l.bias), sig4(l.rmse));
            }
        }
        s
    }

    /// Parses the summary table back into key/value pairs.
    pub fn read_summary(text: &str) -> Vec<(String, String)> {
        text.lines().skip(1).filter_map(|l| l.split_once('\t')).map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }
}

/// Everything needed to score models for one configuration.
pub struct Problem {
    pub posterior: Posterior,
    pub truth: Option<Enumeration>,
}

impl Problem {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let data = load_data(config)?;
        let prior = config.prior_spec(data.n_obs());
        let posterior = Posterior::new(data, prior).map_err(|e| match e {
            Error::InvalidArgument(m) => Error::Config(vec![format!("prior: {m}")]),
            e => e,
        })?;
        let p = posterior.n_covariates();
        let truth = if p <= TRUTH_LIMIT { Some(enumerate_posterior(&posterior)?) } else { None };
        Ok(Problem { posterior, truth })
    }

    pub fn p(&self) -> usize {
        self.posterior.n_covariates()
    }
}

/// Output of one algorithm run: the visited set and, for chains, samples.
struct Outcome {
    visited: Vec<(ModelVector, ModelRecord)>,
    chain: Option<RunResult>,
    tot: u64,
    eff: u64,
}

fn run_algorithm(config: &RunConfig, algorithm: Algorithm, problem: &Problem, seed: u64) -> Result<Outcome> {
    let post = &problem.posterior;
    let p = problem.p();
    match algorithm {
        Algorithm::Mjmcmc => {
            let mut s = config.sampler_config(p)?;
            s.seed = seed;
            let r = run(&s, post, &ModelCache::new())?;
            Ok(Outcome { visited: r.visited.clone(), tot: r.tot, eff: r.eff, chain: Some(r) })
        }
        Algorithm::Mc3 | Algorithm::Rs => {
            let b = if algorithm == Algorithm::Mc3 { Baseline::Mc3 } else { Baseline::Rs };
            let r = run_baseline(b, config.budget, config.burn_in, seed, post, &ModelCache::new())?;
            Ok(Outcome { visited: r.visited.clone(), tot: r.tot, eff: r.eff, chain: Some(r) })
        }
        Algorithm::Top => {
            let m = config.budget.amount() as usize;
            let (visited, _) = top_oracle(post, m)?;
            let n = visited.len() as u64;
            Ok(Outcome { visited, chain: None, tot: n, eff: n })
        }
        Algorithm::Enumerate => {
            let en = match &problem.truth {
                Some(t) => t.clone(),
                None => enumerate_posterior(post)?,
            };
            let n = en.records.len() as u64;
            Ok(Outcome { visited: en.records, chain: None, tot: n, eff: n })
        }
    }
}

fn replication_row(outcome: &Outcome, truth: &Enumeration) -> Result<ReplicationRow> {
    let rm = rm_estimates(&outcome.visited)?;
    let mc = match &outcome.chain {
        Some(r) => Some(mc_estimates(r.post_burn_in())?.inclusion),
        None => None,
    };
    let m = mass_metrics(&outcome.visited, Some(truth.log_total));
    let c = m.c.unwrap_or(0.0);
    Ok(ReplicationRow {
        rm_inclusion: rm.inclusion,
        mc_inclusion: mc,
        i_fraction: 1.0 - c,
        c,
        tot: outcome.tot,
        eff: outcome.eff,
    })
}

fn replicated(
    config: &RunConfig,
    algorithm: Algorithm,
    problem: &Problem,
) -> Result<Option<(Vec<ReplicationRow>, ReplicationTable)>> {
    let Some(truth) = &problem.truth else {
        return Ok(None);
    };
    let reps = if matches!(algorithm, Algorithm::Top | Algorithm::Enumerate) { 1 } else { config.replications };
    let exact = truth.posterior().inclusion;
    replicate(reps, config.seed, &exact, |seed| {
        let o = run_algorithm(config, algorithm, problem, seed)?;
        replication_row(&o, truth)
    })
    .map(Some)
}

/// Runs the configured algorithm and assembles its report.
pub fn run_experiment(config: &RunConfig) -> Result<Report> {
    let problem = Problem::new(config)?;
    if config.algorithm == Algorithm::Mjmcmc {
        config.sampler_config(problem.p())?;
    }
    let outcome = run_algorithm(config, config.algorithm, &problem, config.seed)?;
    let rm = rm_estimates(&outcome.visited)?;
    let mc: Option<Estimates> = match &outcome.chain {
        Some(r) if r.burn_in < r.samples.len() => Some(mc_estimates(r.post_burn_in())?),
        _ => None,
    };
    let truth_inc = problem.truth.as_ref().map(|t| t.posterior().inclusion);
    let inclusion = (0..problem.p())
        .map(|j| (Some(rm.inclusion[j]), mc.as_ref().map(|m| m.inclusion[j]), truth_inc.as_ref().map(|t| t[j])))
        .collect();
    let mut ranked: Vec<&(ModelVector, ModelRecord)> = outcome.visited.iter().collect();
    ranked.sort_by(|a, b| b.1.log_target().total_cmp(&a.1.log_target()).then(a.0.cmp(&b.0)));
    let models = ranked
        .into_iter()
        .take(config.top)
        .map(|(g, r)| (g.clone(), r.log_mlik, r.log_prior, rm.probability(g)))
        .collect();
    let log_total = problem.truth.as_ref().map(|t| t.log_total);
    let mass = mass_metrics(&outcome.visited, log_total);
    let mut summary: Vec<(String, String)> = vec![
        ("algorithm".into(), config.algorithm.name().into()),
        ("p".into(), problem.p().to_string()),
        ("t".into(), problem.posterior.data().n_obs().to_string()),
        ("seed".into(), config.seed.to_string()),
        ("tot".into(), outcome.tot.to_string()),
        ("eff".into(), outcome.eff.to_string()),
        ("log_captured".into(), g17(mass.log_captured)),
        ("C".into(), opt17(mass.c)),
        ("I".into(), opt17(mass.i)),
        ("log_I".into(), opt17(mass.log_i)),
    ];
    if let Some(r) = &outcome.chain {
        summary.push(("iterations".into(), r.samples.len().to_string()));
        summary.push(("burn_in".into(), r.burn_in.to_string()));
        for k in StepKind::ALL {
            let s = r.stats(k);
            summary.push((format!("{}.proposed", k.name()), s.proposed.to_string()));
            summary.push((format!("{}.acceptance", k.name()), g17(s.rate())));
        }
        summary.push(("mode-jump.zero_density".into(), r.stats(StepKind::ModeJump).zero_density.to_string()));
    }
    let errors = if config.replications > 1 {
        match replicated(config, config.algorithm, &problem)? {
            Some((_, table)) => {
                summary.push(("replications".into(), table.replications.to_string()));
                summary.push(("mean_tot".into(), g17(table.mean_tot)));
                summary.push(("mean_eff".into(), g17(table.mean_eff)));
                summary.push(("median_eff".into(), g17(table.median_eff)));
                summary.push(("mean_C".into(), g17(table.mean_c)));
                summary.push(("median_C".into(), g17(table.median_c)));
                Some(table)
            }
            None => None,
        }
    } else {
        None
    };
    Ok(Report { inclusion, models, summary, errors })
}

/// One row of an algorithm comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub algorithm: Algorithm,
    pub table: ReplicationTable,
}

/// Runs MJMCMC, MC³, RS and TOP on the same data and budget over
/// `config.replications` paired seeds.
pub fn compare(config: &RunConfig) -> Result<Vec<CompareRow>> {
    let problem = Problem::new(config)?;
    if problem.truth.is_none() {
        return Err(Error::ResourceLimit(format!("comparison needs exact truth, p must be at most {TRUTH_LIMIT}")));
    }
    config.sampler_config(problem.p())?;
    let mut rows = Vec::new();
    for alg in [Algorithm::Mjmcmc, Algorithm::Mc3, Algorithm::Rs, Algorithm::Top] {
        let (_, table) = replicated(config, alg, &problem)?.expect("truth checked above");
        rows.push(CompareRow { algorithm: alg, table });
    }
    Ok(rows)
}

pub fn compare_tsv(rows: &[CompareRow]) -> String {
    let mut s = String::from("algorithm\treplications\tmedian_C\tmean_C\tmedian_eff\tmean_tot\trmse_I\tmean_rmse_rm\n");
    for r in rows {
        let t = &r.table;
        let i = t.lines.iter().find(|l| l.quantity == "I").map_or(f64::NAN, |l| l.rmse);
        let rm: Vec<f64> =
            t.lines.iter().filter(|l| l.quantity != "I" && l.method == Method::Rm).map(|l| l.rmse).collect();
        let mean_rm = rm.iter().sum::<f64>() / rm.len().max(1) as f64;
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.algorithm.name(),
            t.replications,
            g17(t.median_c),
            g17(t.mean_c),
            g17(t.median_eff),
            g17(t.mean_tot),
            g17(i),
            g17(mean_rm)
        );
    }
    s
}

/// Renders any of the TSV reports with four significant digits.
pub fn humanize_tsv(text: &str) -> String {
    let rows: Vec<Vec<String>> = text
        .lines()
        .map(|l| {
            l.split('\t')
                .map(|c| match c.parse::<f64>() {
                    Ok(v) if c.contains('e') || c.contains('.') => sig4(v),
                    _ => c.to_string(),
                })
                .collect()
        })
        .collect();
    let ncol = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..ncol).map(|j| rows.iter().filter_map(|r| r.get(j)).map(|c| c.chars().count()).max().unwrap_or(0)).collect();
    let mut s = String::new();
    for r in rows {
        let line: Vec<String> = r.iter().enumerate().map(|(j, c)| format!("{c:<w$}", w = widths[j])).collect();
        let _ = writeln!(s, "{}", line.join("  ").trim_end());
    }
    s
}

/// Error table of replications against the exact inclusion probabilities.
pub fn table_for(rows: &[ReplicationRow], truth: &Enumeration) -> ReplicationTable {
    error_table(rows, &truth.posterior().inclusion)
}

/// Convenience for budgets given on the command line.
pub fn with_budget(mut config: RunConfig, budget: Budget) -> RunConfig {
    config.budget = budget;
    config
}

/// Replaces or appends `key=value` lines in config text.
pub fn apply_overrides(text: &str, overrides: &[String]) -> Result<String> {
    let mut keys = Vec::new();
    for o in overrides {
        let (k, _) =
            o.split_once('=').ok_or_else(|| Error::Config(vec![format!("override {o:?}: expected key=value")]))?;
        keys.push(k.trim().to_string());
    }
    let mut out = String::new();
    for line in text.lines() {
        let key = line.split('#').next().unwrap_or("").split_once('=').map(|(k, _)| k.trim());
        if !key.is_some_and(|k| keys.iter().any(|o| o == k)) {
            out.push_str(line);
            out.push('\n');
        }
    }
    for o in overrides {
        out.push_str(o);
        out.push('\n');
    }
    Ok(out)
}
