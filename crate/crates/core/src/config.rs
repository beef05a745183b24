//! Run configuration as flat `key=value` text with dotted sections.
//!
//! Kernel mixtures are kept unresolved (sizes may say `p`, ρ may say
//! `phat`) until the dataset fixes p.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::likelihoods::{Criterion, Family, ModelPrior, PriorSpec};
use crate::optimizers::{OptimizerKind, OptimizerSpec};
use crate::proposals::{KernelMixture, ProposalKernel, SizeSpec};
use crate::sampler::{AcceptanceVariant, Budget, SamplerConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Example1 {
        seed: u64,
    },
    /// Gaussian fixture with active indices 1, 5 and 8.
    Fixture {
        p: usize,
        t: usize,
        seed: u64,
    },
    Csv {
        path: PathBuf,
        family: Family,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Mjmcmc,
    Mc3,
    Rs,
    Top,
    Enumerate,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Mjmcmc => "mjmcmc",
            Algorithm::Mc3 => "mc3",
            Algorithm::Rs => "rs",
            Algorithm::Top => "top",
            Algorithm::Enumerate => "enumerate",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [Algorithm::Mjmcmc, Algorithm::Mc3, Algorithm::Rs, Algorithm::Top, Algorithm::Enumerate]
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown algorithm {s:?}")))
    }
}

/// A neighborhood size bound; `P` stands for the number of covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    N(usize),
    P,
}

impl Bound {
    fn resolve(self, p: usize) -> usize {
        match self {
            Bound::N(n) => n,
            Bound::P => p,
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "p" => Ok(Bound::P),
            t => t.parse().map(Bound::N).map_err(|_| Error::InvalidArgument(format!("bad size {t:?}"))),
        }
    }

    fn emit(self) -> String {
        match self {
            Bound::N(n) => n.to_string(),
            Bound::P => "p".into(),
        }
    }
}

/// ρ settings of a random-change kernel. One value is broadcast to every
/// index. `estimated` kernels are re-set from inclusion estimates after
/// burn-in; their values are the starting point.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoSpec {
    pub values: Vec<f64>,
    pub estimated: bool,
}

impl RhoSpec {
    pub const INITIAL: f64 = 0.5;

    fn parse(s: &str) -> Result<Self> {
        let (estimated, rest) = match s.trim() {
            "phat" => return Ok(RhoSpec { values: vec![Self::INITIAL], estimated: true }),
            t => match t.strip_prefix("phat:") {
                Some(r) => (true, r),
                None => (false, t),
            },
        };
        let values = rest.split(',').map(|v| parse_f64(v.trim())).collect::<Result<Vec<_>>>()?;
        Ok(RhoSpec { values, estimated })
    }

    fn emit(&self) -> String {
        let list = self.values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        match (self.estimated, self.values.as_slice()) {
            (true, [v]) if *v == Self::INITIAL => "phat".into(),
            (true, _) => format!("phat:{list}"),
            (false, _) => list,
        }
    }

    fn resolve(&self, p: usize) -> Result<Vec<f64>> {
        match self.values.len() {
            1 => Ok(vec![self.values[0]; p]),
            n if n == p => Ok(self.values.clone()),
            n => Err(Error::InvalidArgument(format!("{n} rho values for {p} covariates"))),
        }
    }
}

/// One mixture component by kernel type number (1 to 6).
#[derive(Debug, Clone, PartialEq)]
pub struct KernelEntry {
    pub type_number: u8,
    pub weight: f64,
    /// (min, max); types 2 and 4 use only `max`.
    pub size: (Bound, Bound),
    pub rho: RhoSpec,
}

impl KernelEntry {
    pub fn new(type_number: u8, weight: f64, size: (Bound, Bound)) -> Self {
        KernelEntry { type_number, weight, size, rho: RhoSpec { values: vec![RhoSpec::INITIAL], estimated: true } }
    }

    fn uses_size(&self) -> bool {
        (1..=4).contains(&self.type_number)
    }

    fn uses_rho(&self) -> bool {
        matches!(self.type_number, 1 | 2)
    }

    fn resolve(&self, p: usize) -> Result<ProposalKernel> {
        let (lo, hi) = (self.size.0.resolve(p), self.size.1.resolve(p));
        let uniform = SizeSpec::Uniform { min: lo, max: hi };
        let fixed = SizeSpec::Fixed(hi);
        Ok(match self.type_number {
            1 | 2 => ProposalKernel::RandomChange {
                size: if self.type_number == 1 { uniform } else { fixed },
                rho: self.rho.resolve(p)?,
                adaptive: self.rho.estimated,
            },
            3 => ProposalKernel::Swap { size: uniform },
            4 => ProposalKernel::Swap { size: fixed },
            5 => ProposalKernel::Add,
            6 => ProposalKernel::Delete,
            t => return Err(Error::InvalidArgument(format!("unknown kernel type {t}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MixtureSpec {
    /// Sorted by type number, one entry per type.
    pub entries: Vec<KernelEntry>,
}

impl MixtureSpec {
    pub fn new(mut entries: Vec<KernelEntry>) -> Self {
        entries.sort_by_key(|e| e.type_number);
        MixtureSpec { entries }
    }

    pub fn resolve(&self, p: usize) -> Result<KernelMixture> {
        let entries = self.entries.iter().map(|e| Ok((e.resolve(p)?, e.weight))).collect::<Result<Vec<_>>>()?;
        KernelMixture::new(entries)
    }

    fn entry_mut(&mut self, t: u8) -> &mut KernelEntry {
        let i = match self.entries.binary_search_by_key(&t, |e| e.type_number) {
            Ok(i) => i,
            Err(i) => {
                let size = if t == 2 { (Bound::P, Bound::P) } else { (Bound::N(1), Bound::N(1)) };
                self.entries.insert(i, KernelEntry::new(t, 0.0, size));
                i
            }
        };
        &mut self.entries[i]
    }

    fn emit(&self, prefix: &str, out: &mut String) {
        for e in &self.entries {
            let k = format!("{prefix}.type{}", e.type_number);
            let _ = writeln!(out, "{k}.weight={}", e.weight);
            if e.uses_size() {
                let s = if matches!(e.type_number, 1 | 3) {
                    format!("{}..{}", e.size.0.emit(), e.size.1.emit())
                } else {
                    e.size.1.emit()
                };
                let _ = writeln!(out, "{k}.size={s}");
            }
            if e.uses_rho() {
                let _ = writeln!(out, "{k}.rho={}", e.rho.emit());
            }
        }
    }

    fn set(&mut self, t: u8, field: &str, value: &str) -> Result<()> {
        if !(1..=6).contains(&t) {
            return Err(Error::InvalidArgument(format!("kernel type {t} outside 1..=6")));
        }
        let e = self.entry_mut(t);
        match field {
            "weight" => e.weight = parse_f64(value)?,
            "size" if e.uses_size() => {
                let v = value.trim().trim_start_matches('{').trim_end_matches('}');
                e.size = match v.split_once("..").or_else(|| v.split_once(',')) {
                    Some((a, b)) => (Bound::parse(a)?, Bound::parse(b)?),
                    None => {
                        let b = Bound::parse(v)?;
                        (b, b)
                    }
                };
                if matches!(t, 2 | 4) {
                    e.size.0 = e.size.1;
                }
            }
            "rho" if e.uses_rho() => e.rho = RhoSpec::parse(value)?,
            f => return Err(Error::InvalidArgument(format!("type {t} has no field {f:?}"))),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerEntry {
    pub kind: OptimizerKind,
    pub weight: f64,
    pub neighborhood: MixtureSpec,
}

impl OptimizerEntry {
    fn key(&self) -> &'static str {
        self.kind.name()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GSetting {
    Value(f64),
    /// g equal to the number of observations.
    T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataSource,
    pub criterion: Criterion,
    pub g: GSetting,
    pub model_prior: ModelPrior,
    pub algorithm: Algorithm,
    pub budget: Budget,
    pub burn_in: Option<u64>,
    pub seed: u64,
    pub replications: usize,
    pub output: Option<PathBuf>,
    /// Rows in the model table.
    pub top: usize,
    pub jump_probability: f64,
    pub variant: AcceptanceVariant,
    pub tries: usize,
    /// Proposals per optimizer stage (K).
    pub width: usize,
    pub rho_bounds: (f64, f64),
    pub q_g: MixtureSpec,
    pub q_l: MixtureSpec,
    pub q_o: Vec<OptimizerEntry>,
    pub q_r: MixtureSpec,
}

fn kernel(t: u8, weight: f64, lo: Bound, hi: Bound) -> KernelEntry {
    KernelEntry::new(t, weight, (lo, hi))
}

/// Weights in the order type 1, 4, 3, 5, 6, 2 with the usual sizes.
fn six_mixture(w: [f64; 6]) -> MixtureSpec {
    use Bound::{N, P};
    MixtureSpec::new(vec![
        kernel(1, w[0], N(2), N(2)),
        kernel(4, w[1], N(2), N(2)),
        kernel(3, w[2], N(2), N(2)),
        kernel(5, w[3], N(1), N(1)),
        kernel(6, w[4], N(1), N(1)),
        kernel(2, w[5], P, P),
    ])
}

impl RunConfig {
    /// The simulated-regression setup: p = 15, T = 100, g = 100, a 3276
    /// proposal budget and the tuned mixtures for that problem.
    pub fn example1() -> Self {
        let sa = OptimizerKind::Sa { t0: 10.0, tf: 14e-5, cool: 3.0, steps_per_temp: 4 };
        let greedy = OptimizerKind::Greedy { steps: 15, local_stop: false, first_improving: true };
        let mtm = OptimizerKind::LocalMtmcmc { tries: 4, steps: 15 };
        let mut q_r = MixtureSpec::new(vec![kernel(2, 1.0, Bound::P, Bound::P)]);
        q_r.entries[0].rho = RhoSpec { values: vec![0.001], estimated: false };
        RunConfig {
            data: DataSource::Example1 { seed: 1 },
            criterion: Criterion::GPriorExact,
            g: GSetting::Value(100.0),
            model_prior: ModelPrior::Binomial { q: 0.5 },
            algorithm: Algorithm::Mjmcmc,
            budget: Budget::Proposals(3276),
            burn_in: None,
            seed: 1,
            replications: 1,
            output: None,
            top: 20,
            jump_probability: 0.0164,
            variant: AcceptanceVariant::LastRandomization,
            tries: 4,
            width: 4,
            rho_bounds: SamplerConfig::DEFAULT_RHO_BOUNDS,
            q_g: six_mixture([0.1176, 0.3348, 0.2772, 0.0199, 0.2453, 0.0042]),
            q_l: MixtureSpec::new(vec![kernel(4, 1.0, Bound::N(4), Bound::N(4))]),
            q_o: vec![
                OptimizerEntry {
                    kind: sa,
                    weight: 0.5553,
                    neighborhood: six_mixture([0.0788, 0.3942, 0.1908, 0.1928, 0.1385, 0.0040]),
                },
                OptimizerEntry {
                    kind: greedy,
                    weight: 0.2404,
                    neighborhood: six_mixture([0.0190, 0.3661, 0.2111, 0.2935, 0.1046, 0.0044]),
                },
                OptimizerEntry {
                    kind: mtm,
                    weight: 0.2043,
                    neighborhood: six_mixture([0.2866, 0.1305, 0.2329, 0.1369, 0.2087, 0.0040]),
                },
            ],
            q_r,
        }
    }

    pub fn prior_spec(&self, n_obs: usize) -> PriorSpec {
        let g = match self.g {
            GSetting::Value(g) => g,
            GSetting::T => n_obs as f64,
        };
        PriorSpec { criterion: self.criterion, g, model_prior: self.model_prior }
    }

    /// Resolves the mixtures for `p` covariates.
    pub fn sampler_config(&self, p: usize) -> Result<SamplerConfig> {
        let mut problems = Vec::new();
        let mut grab = |r: Result<KernelMixture>, what: &str| match r {
            Ok(m) => Some(m),
            Err(e) => {
                problems.push(format!("{what}: {e}"));
                None
            }
        };
        let q_g = grab(self.q_g.resolve(p), "q_g");
        let q_l = grab(self.q_l.resolve(p), "q_l");
        let q_r = grab(self.q_r.resolve(p), "q_r");
        let mut q_o = Vec::new();
        for o in &self.q_o {
            let n = if matches!(o.kind, OptimizerKind::ExhaustiveGreedy { .. }) && o.neighborhood.entries.is_empty() {
                Some(KernelMixture::single(ProposalKernel::swap_fixed(1)))
            } else {
                grab(o.neighborhood.resolve(p), &format!("q_o {}", o.key()))
            };
            if let Some(neighborhood) = n {
                q_o.push((OptimizerSpec { kind: o.kind.clone(), neighborhood, width: self.width }, o.weight));
            }
        }
        let (Some(q_g), Some(q_l), Some(q_r)) = (q_g, q_l, q_r) else {
            return Err(Error::Config(problems));
        };
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        let cfg = SamplerConfig {
            budget: self.budget,
            jump_probability: self.jump_probability,
            q_g,
            q_l,
            q_o,
            q_r,
            variant: self.variant,
            mtmcmc_tries: self.tries,
            burn_in: self.burn_in,
            seed: self.seed,
            rho_bounds: self.rho_bounds,
        };
        if self.algorithm == Algorithm::Mjmcmc {
            cfg.validate(p)?;
        }
        Ok(cfg)
    }

    /// Checks settings that do not depend on the data.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if let Err(e) = self.prior_spec(1).validate() {
            problems.push(format!("prior: {e}"));
        }
        if self.replications < 1 {
            problems.push("run.replications must be at least 1".into());
        }
        if self.width < 1 {
            problems.push("sampler.cpu must be at least 1".into());
        }
        if self.budget.amount() == 0 {
            problems.push("run.budget must be positive".into());
        }
        if matches!(self.algorithm, Algorithm::Top) && !matches!(self.budget, Budget::Proposals(_) | Budget::Unique(_))
        {
            problems.push("top needs a proposals or unique budget (the model count)".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn emit(&self) -> String {
        let mut o = String::new();
        let w = &mut o;
        match &self.data {
            DataSource::Example1 { seed } => {
                let _ = writeln!(w, "data.source=example1\ndata.seed={seed}");
            }
            DataSource::Fixture { p, t, seed } => {
                let _ = writeln!(w, "data.source=fixture\ndata.p={p}\ndata.t={t}\ndata.seed={seed}");
            }
            DataSource::Csv { path, family } => {
                let _ = writeln!(w, "data.source=csv\ndata.path={}\ndata.family={}", path.display(), family.name());
            }
        }
        let _ = writeln!(w, "prior.criterion={}", self.criterion.name());
        match self.g {
            GSetting::Value(g) => {
                let _ = writeln!(w, "prior.g={g}");
            }
            GSetting::T => {
                let _ = writeln!(w, "prior.g=T");
            }
        }
        match self.model_prior {
            ModelPrior::Binomial { q } => {
                let _ = writeln!(w, "prior.model=binomial\nprior.q={q}");
            }
            ModelPrior::BetaBinomial { alpha, beta } => {
                let _ = writeln!(w, "prior.model=beta-binomial\nprior.alpha={alpha}\nprior.beta={beta}");
            }
        }
        let _ = writeln!(w, "run.algorithm={}", self.algorithm.name());
        let _ = writeln!(w, "run.budget={}:{}", self.budget.name(), self.budget.amount());
        if let Some(b) = self.burn_in {
            let _ = writeln!(w, "run.burn_in={b}");
        }
        let _ = writeln!(w, "run.seed={}\nrun.replications={}\nrun.top={}", self.seed, self.replications, self.top);
        if let Some(p) = &self.output {
            let _ = writeln!(w, "run.output={}", p.display());
        }
        let _ = writeln!(
            w,
            "sampler.rho={}\nsampler.variant={}\nsampler.tries={}\nsampler.cpu={}\nsampler.rho_min={}\nsampler.rho_max={}",
            self.jump_probability,
            self.variant.name(),
            self.tries,
            self.width,
            self.rho_bounds.0,
            self.rho_bounds.1
        );
        self.q_g.emit("qg", w);
        self.q_l.emit("ql", w);
        self.q_r.emit("qr", w);
        for opt in &self.q_o {
            let key = opt.key();
            let _ = writeln!(w, "qo.{key}.weight={}", opt.weight);
            match &opt.kind {
                OptimizerKind::Sa { t0, tf, cool, steps_per_temp } => {
                    let _ = writeln!(w, "sa.St={steps_per_temp}\nsa.dt={cool}\nsa.t0={t0}\nsa.tf={tf}");
                }
                OptimizerKind::Greedy { steps, local_stop, first_improving } => {
                    let _ = writeln!(
                        w,
                        "greedy.S={steps}\ngreedy.LS={}\ngreedy.FI={}",
                        flag(*local_stop),
                        flag(*first_improving)
                    );
                }
                OptimizerKind::ExhaustiveGreedy { size, steps, first_improving } => {
                    let _ = writeln!(
                        w,
                        "exhaustive.size={size}\nexhaustive.steps={steps}\nexhaustive.FI={}",
                        flag(*first_improving)
                    );
                }
                OptimizerKind::LocalMtmcmc { tries, steps } => {
                    let _ = writeln!(w, "mtmcmc.size={tries}\nmtmcmc.steps={steps}");
                }
            }
            opt.neighborhood.emit(&format!("qo.{key}"), w);
        }
        o
    }

    /// Parses config text. Unset keys keep their Example-1 defaults, except
    /// that listing any component of a mixture replaces that whole mixture.
    /// Every bad line is reported.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv: BTreeMap<String, (usize, String)> = BTreeMap::new();
        let mut problems = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => {
                    if kv.insert(k.trim().to_string(), (n + 1, v.trim().to_string())).is_some() {
                        problems.push(format!("line {}: duplicate key {}", n + 1, k.trim()));
                    }
                }
                None => problems.push(format!("line {}: expected key=value", n + 1)),
            }
        }
        let mut c = RunConfig::example1();
        let mut p = Parser { kv, problems };
        p.apply(&mut c);
        let Parser { kv, mut problems } = p;
        for (k, (line, _)) in kv {
            problems.push(format!("line {line}: unknown key {k}"));
        }
        if problems.is_empty() {
            Ok(c)
        } else {
            Err(Error::Config(problems))
        }
    }
}

fn flag(b: bool) -> &'static str {
    if b {
        "T"
    } else {
        "F"
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|_| Error::InvalidArgument(format!("not a number: {s:?}")))
}

fn parse_bool(s: &str) -> Result<bool> {
    match s {
        "T" | "true" | "TRUE" | "1" => Ok(true),
        "F" | "false" | "FALSE" | "0" => Ok(false),
        _ => Err(Error::InvalidArgument(format!("not a flag: {s:?}"))),
    }
}

fn parse_int<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse::<T>().map_err(|_| Error::InvalidArgument(format!("not an integer: {s:?}")))
}

pub fn parse_budget(s: &str) -> Result<Budget> {
    let (kind, n) =
        s.split_once(':').ok_or_else(|| Error::InvalidArgument(format!("budget {s:?} needs kind:amount")))?;
    let n: u64 = parse_int(n.trim())?;
    match kind.trim() {
        "iterations" => Ok(Budget::Iterations(n)),
        "proposals" => Ok(Budget::Proposals(n)),
        "unique" => Ok(Budget::Unique(n)),
        k => Err(Error::InvalidArgument(format!("unknown budget kind {k:?}"))),
    }
}

struct Parser {
    kv: BTreeMap<String, (usize, String)>,
    problems: Vec<String>,
}

impl Parser {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.kv.remove(key)
    }

    fn field<T>(&mut self, key: &str, f: impl Fn(&str) -> Result<T>) -> Option<T> {
        let (line, v) = self.take(key)?;
        match f(&v) {
            Ok(x) => Some(x),
            Err(e) => {
                self.problems.push(format!("line {line}: {key}: {e}"));
                None
            }
        }
    }

    fn set<T>(&mut self, key: &str, slot: &mut T, f: impl Fn(&str) -> Result<T>) {
        if let Some(v) = self.field(key, f) {
            *slot = v;
        }
    }

    fn keys_with(&self, prefix: &str) -> Vec<String> {
        self.kv.keys().filter(|k| k.starts_with(prefix)).cloned().collect()
    }

    /// Collects `<prefix>.typeN.<field>` keys into a fresh mixture, or
    /// `None` when no such key is present.
    fn mixture(&mut self, prefix: &str) -> Option<MixtureSpec> {
        let pre = format!("{prefix}.type");
        let keys = self.keys_with(&pre);
        if keys.is_empty() {
            return None;
        }
        let mut m = MixtureSpec::default();
        // weight and size first so that rho follows the size defaults
        let mut ordered: Vec<(u8, String, String)> = Vec::new();
        for k in keys {
            let rest = &k[pre.len()..];
            let Some((t, field)) = rest.split_once('.') else {
                let (line, _) = self.take(&k).unwrap();
                self.problems.push(format!("line {line}: malformed key {k}"));
                continue;
            };
            match t.parse::<u8>() {
                Ok(t) => ordered.push((t, field.to_string(), k.clone())),
                Err(_) => {
                    let (line, _) = self.take(&k).unwrap();
                    self.problems.push(format!("line {line}: bad kernel type in {k}"));
                }
            }
        }
        for (t, field, k) in ordered {
            let (line, v) = self.take(&k).unwrap();
            if let Err(e) = m.set(t, &field, &v) {
                self.problems.push(format!("line {line}: {k}: {e}"));
            }
        }
        Some(m)
    }

    fn apply(&mut self, c: &mut RunConfig) {
        if let Some(src) = self.field("data.source", |s| Ok(s.to_string())) {
            match src.as_str() {
                "example1" => c.data = DataSource::Example1 { seed: 1 },
                "fixture" => c.data = DataSource::Fixture { p: 10, t: 100, seed: 1 },
                "csv" => c.data = DataSource::Csv { path: PathBuf::new(), family: Family::Gaussian },
                s => self.problems.push(format!("data.source: unknown source {s:?}")),
            }
        }
        match &mut c.data {
            DataSource::Example1 { seed } => {
                let mut s = *seed;
                self.set("data.seed", &mut s, parse_int);
                *seed = s;
            }
            DataSource::Fixture { p, t, seed } => {
                let (mut a, mut b, mut s) = (*p, *t, *seed);
                self.set("data.p", &mut a, parse_int);
                self.set("data.t", &mut b, parse_int);
                self.set("data.seed", &mut s, parse_int);
                (*p, *t, *seed) = (a, b, s);
            }
            DataSource::Csv { path, family } => {
                let (mut a, mut f) = (path.clone(), *family);
                match self.field("data.path", |s| Ok(PathBuf::from(s))) {
                    Some(pa) => a = pa,
                    None if a.as_os_str().is_empty() => self.problems.push("data.path is required for csv data".into()),
                    None => {}
                }
                self.set("data.family", &mut f, Family::parse);
                (*path, *family) = (a, f);
            }
        }
        self.set("prior.criterion", &mut c.criterion, Criterion::parse);
        self.set("prior.g", &mut c.g, |s| if s == "T" { Ok(GSetting::T) } else { parse_f64(s).map(GSetting::Value) });
        if let Some(m) = self.field("prior.model", |s| Ok(s.to_string())) {
            match m.as_str() {
                "binomial" => c.model_prior = ModelPrior::Binomial { q: 0.5 },
                "beta-binomial" => c.model_prior = ModelPrior::BetaBinomial { alpha: 1.0, beta: 1.0 },
                s => self.problems.push(format!("prior.model: unknown prior {s:?}")),
            }
        }
        match &mut c.model_prior {
            ModelPrior::Binomial { q } => self.set("prior.q", q, parse_f64),
            ModelPrior::BetaBinomial { alpha, beta } => {
                self.set("prior.alpha", alpha, parse_f64);
                self.set("prior.beta", beta, parse_f64);
            }
        }
        self.set("run.algorithm", &mut c.algorithm, Algorithm::parse);
        self.set("run.budget", &mut c.budget, parse_budget);
        if let Some(b) = self.field("run.burn_in", parse_int) {
            c.burn_in = Some(b);
        }
        self.set("run.seed", &mut c.seed, parse_int);
        self.set("run.replications", &mut c.replications, parse_int);
        self.set("run.top", &mut c.top, parse_int);
        if let Some(o) = self.field("run.output", |s| Ok(PathBuf::from(s))) {
            c.output = Some(o);
        }
        self.set("sampler.rho", &mut c.jump_probability, parse_f64);
        self.set("sampler.variant", &mut c.variant, AcceptanceVariant::parse);
        self.set("sampler.tries", &mut c.tries, parse_int);
        self.set("sampler.cpu", &mut c.width, parse_int);
        self.set("sampler.rho_min", &mut c.rho_bounds.0, parse_f64);
        self.set("sampler.rho_max", &mut c.rho_bounds.1, parse_f64);
        if let Some(m) = self.mixture("qg") {
            c.q_g = m;
        }
        if let Some(m) = self.mixture("ql") {
            c.q_l = m;
        }
        if let Some(m) = self.mixture("qr") {
            c.q_r = m;
        }
        let names = ["sa", "greedy", "exhaustive", "mtmcmc"];
        let mentioned: Vec<&str> =
            names.iter().copied().filter(|n| !self.keys_with(&format!("qo.{n}.")).is_empty()).collect();
        if !mentioned.is_empty() {
            let old = std::mem::take(&mut c.q_o);
            for n in mentioned {
                let prev = old.iter().find(|o| o.key() == n);
                let mut kind = prev.map(|o| o.kind.clone()).unwrap_or(match n {
                    "sa" => OptimizerKind::Sa { t0: 10.0, tf: 14e-5, cool: 3.0, steps_per_temp: 4 },
                    "greedy" => OptimizerKind::Greedy { steps: 15, local_stop: false, first_improving: true },
                    "exhaustive" => OptimizerKind::ExhaustiveGreedy { size: 1, steps: 15, first_improving: false },
                    _ => OptimizerKind::LocalMtmcmc { tries: 4, steps: 15 },
                });
                let mut weight = 1.0;
                self.set(&format!("qo.{n}.weight"), &mut weight, parse_f64);
                let neighborhood = self.mixture(&format!("qo.{n}")).unwrap_or_default();
                for k in self.keys_with(&format!("qo.{n}.")) {
                    let (line, _) = self.take(&k).unwrap();
                    self.problems.push(format!("line {line}: unknown key {k}"));
                }
                self.optimizer_params(&mut kind);
                c.q_o.push(OptimizerEntry { kind, weight, neighborhood });
            }
        } else {
            for o in c.q_o.iter_mut() {
                let mut k = o.kind.clone();
                self.optimizer_params(&mut k);
                o.kind = k;
            }
        }
    }

    fn optimizer_params(&mut self, kind: &mut OptimizerKind) {
        match kind {
            OptimizerKind::Sa { t0, tf, cool, steps_per_temp } => {
                self.set("sa.St", steps_per_temp, parse_int);
                self.set("sa.dt", cool, parse_f64);
                self.set("sa.t0", t0, parse_f64);
                self.set("sa.tf", tf, parse_f64);
            }
            OptimizerKind::Greedy { steps, local_stop, first_improving } => {
                self.set("greedy.S", steps, parse_int);
                self.set("greedy.LS", local_stop, parse_bool);
                self.set("greedy.FI", first_improving, parse_bool);
            }
            OptimizerKind::ExhaustiveGreedy { size, steps, first_improving } => {
                self.set("exhaustive.size", size, parse_int);
                self.set("exhaustive.steps", steps, parse_int);
                self.set("exhaustive.FI", first_improving, parse_bool);
            }
            OptimizerKind::LocalMtmcmc { tries, steps } => {
                self.set("mtmcmc.size", tries, parse_int);
                self.set("mtmcmc.steps", steps, parse_int);
            }
        }
    }
}
