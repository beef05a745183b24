//! Move kernels over the model space and their mixtures.
//!
//! Every kernel can be restricted to a set of free indices; frozen indices
//! are never changed and neighborhood sizes are clipped to the free count.
//! Densities are exact, so they can always enter a Metropolis-Hastings ratio.

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{ln_choose, logsumexp};
use crate::modelspace::ModelVector;

/// How many positions a kernel touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeSpec {
    Fixed(usize),
    /// Uniform on `min..=max`.
    Uniform {
        min: usize,
        max: usize,
    },
}

impl SizeSpec {
    /// Size range after clipping to `free` available positions.
    fn clipped(&self, free: usize) -> (usize, usize) {
        match *self {
            SizeSpec::Fixed(s) => (s.min(free), s.min(free)),
            SizeSpec::Uniform { min, max } => (min.min(free), max.min(free)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProposalKernel {
    /// Pick S positions, flip each chosen position i with probability ρ_i.
    /// Type 1 with a uniform size, type 2 with a fixed size. Adaptive kernels
    /// take their ρ from burn-in inclusion estimates.
    RandomChange { size: SizeSpec, rho: Vec<f64>, adaptive: bool },
    /// Flip exactly S uniformly chosen positions. Type 3 uniform size, type 4 fixed.
    Swap { size: SizeSpec },
    /// Type 5: set one uniformly chosen zero to one.
    Add,
    /// Type 6: set one uniformly chosen one to zero.
    Delete,
}

/// A drawn proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub to: ModelVector,
    /// Zero-based flipped indices, ascending.
    pub changed: Vec<usize>,
}

impl ProposalKernel {
    pub fn swap_fixed(s: usize) -> Self {
        ProposalKernel::Swap { size: SizeSpec::Fixed(s) }
    }

    pub fn swap_uniform(min: usize, max: usize) -> Self {
        ProposalKernel::Swap { size: SizeSpec::Uniform { min, max } }
    }

    pub fn random_change_fixed(s: usize, rho: Vec<f64>) -> Self {
        ProposalKernel::RandomChange { size: SizeSpec::Fixed(s), rho, adaptive: false }
    }

    pub fn random_change_uniform(min: usize, max: usize, rho: Vec<f64>) -> Self {
        ProposalKernel::RandomChange { size: SizeSpec::Uniform { min, max }, rho, adaptive: false }
    }

    /// Kernel type number 1..=6.
    pub fn type_number(&self) -> u8 {
        match self {
            ProposalKernel::RandomChange { size: SizeSpec::Uniform { .. }, .. } => 1,
            ProposalKernel::RandomChange { size: SizeSpec::Fixed(_), .. } => 2,
            ProposalKernel::Swap { size: SizeSpec::Uniform { .. } } => 3,
            ProposalKernel::Swap { size: SizeSpec::Fixed(_) } => 4,
            ProposalKernel::Add => 5,
            ProposalKernel::Delete => 6,
        }
    }

    /// q(a|b) = q(b|a) for all pairs. True for types 1 to 4.
    pub fn is_symmetric(&self) -> bool {
        self.type_number() <= 4
    }

    pub fn size(&self) -> Option<SizeSpec> {
        match self {
            ProposalKernel::RandomChange { size, .. } | ProposalKernel::Swap { size } => Some(*size),
            _ => None,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        let check_size = |s: &SizeSpec| match *s {
            SizeSpec::Fixed(s) if s < 1 || s > p => {
                Err(Error::InvalidArgument(format!("neighborhood size {s} outside 1..={p}")))
            }
            SizeSpec::Uniform { min, max } if min < 1 || min > max || max > p => {
                Err(Error::InvalidArgument(format!("neighborhood range {{{min},{max}}} invalid for p={p}")))
            }
            _ => Ok(()),
        };
        match self {
            ProposalKernel::RandomChange { size, rho, .. } => {
                check_size(size)?;
                if rho.len() != p {
                    return Err(Error::InvalidArgument(format!("rho has {} entries, expected {p}", rho.len())));
                }
                if let Some(r) = rho.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
                    return Err(Error::InvalidArgument(format!("rho value {r} not in (0,1)")));
                }
                Ok(())
            }
            ProposalKernel::Swap { size } => check_size(size),
            _ => Ok(()),
        }
    }

    /// Draws from q(·|γ) over all indices.
    pub fn propose<R: Rng + ?Sized>(&self, gamma: &ModelVector, rng: &mut R) -> Proposal {
        let all: Vec<usize> = (0..gamma.len()).collect();
        self.propose_in(gamma, &all, rng)
    }

    /// Draws from q(·|γ) restricted to the ascending index list `free`.
    pub fn propose_in<R: Rng + ?Sized>(&self, gamma: &ModelVector, free: &[usize], rng: &mut R) -> Proposal {
        let stay = || Proposal { to: gamma.clone(), changed: Vec::new() };
        let n = free.len();
        if n == 0 {
            return stay();
        }
        let mut changed = match self {
            ProposalKernel::RandomChange { size, rho, .. } => {
                let s = draw_size(size, n, rng);
                index::sample(rng, n, s)
                    .into_iter()
                    .map(|k| free[k])
                    .filter(|&i| rng.random::<f64>() < rho[i])
                    .collect::<Vec<_>>()
            }
            ProposalKernel::Swap { size } => {
                let s = draw_size(size, n, rng);
                index::sample(rng, n, s).into_iter().map(|k| free[k]).collect()
            }
            ProposalKernel::Add | ProposalKernel::Delete => {
                let want = matches!(self, ProposalKernel::Delete);
                let cands: Vec<usize> = free.iter().copied().filter(|&i| gamma.get(i) == want).collect();
                if cands.is_empty() {
                    return stay();
                }
                vec![cands[rng.random_range(0..cands.len())]]
            }
        };
        changed.sort_unstable();
        let mut to = gamma.clone();
        for &i in &changed {
            to.flip(i);
        }
        Proposal { to, changed }
    }

    /// log q(to|from) over all indices.
    pub fn log_density(&self, from: &ModelVector, to: &ModelVector) -> Result<f64> {
        if from.len() != to.len() {
            return Err(Error::InvalidArgument(format!("length mismatch: {} vs {}", from.len(), to.len())));
        }
        let all: Vec<usize> = (0..from.len()).collect();
        Ok(self.log_density_in(from, to, &all))
    }

    /// log q(to|from) for the kernel restricted to `free` (ascending).
    /// Lengths must match.
    pub fn log_density_in(&self, from: &ModelVector, to: &ModelVector, free: &[usize]) -> f64 {
        let diff = from.diff_indices(to);
        if !diff.iter().all(|i| free.binary_search(i).is_ok()) {
            return f64::NEG_INFINITY;
        }
        let n = free.len();
        let h = diff.len();
        if n == 0 {
            return if h == 0 { 0.0 } else { f64::NEG_INFINITY };
        }
        match self {
            ProposalKernel::Swap { size } => {
                let (lo, hi) = size.clipped(n);
                if h < lo || h > hi {
                    f64::NEG_INFINITY
                } else {
                    -ln_choose(n, h) - ((hi - lo + 1) as f64).ln()
                }
            }
            ProposalKernel::RandomChange { size, rho, .. } => random_change_log_density(size, rho, &diff, free),
            ProposalKernel::Add | ProposalKernel::Delete => {
                let want = matches!(self, ProposalKernel::Delete);
                let cands = free.iter().filter(|&&i| from.get(i) == want).count();
                match (cands, h) {
                    (0, 0) => 0.0,
                    (0, _) => f64::NEG_INFINITY,
                    (_, 1) if from.get(diff[0]) == want => -(cands as f64).ln(),
                    _ => f64::NEG_INFINITY,
                }
            }
        }
    }
}

fn draw_size<R: Rng + ?Sized>(size: &SizeSpec, free: usize, rng: &mut R) -> usize {
    let (lo, hi) = size.clipped(free);
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Exact density of the random-change kernel: for each admissible size S,
/// the chosen set must contain the flipped set D and every other chosen
/// index must stay. Summing over supersets gives
/// Π_D ρ · e_{S−|D|}(1−ρ over free∖D) / C(n, S).
fn random_change_log_density(size: &SizeSpec, rho: &[f64], diff: &[usize], free: &[usize]) -> f64 {
    let n = free.len();
    let (lo, hi) = size.clipped(n);
    let h = diff.len();
    if h > hi {
        return f64::NEG_INFINITY;
    }
    let log_flip: f64 = diff.iter().map(|&i| rho[i].ln()).sum();
    let stay: Vec<f64> = free.iter().filter(|i| diff.binary_search(i).is_err()).map(|&i| 1.0 - rho[i]).collect();
    // elementary symmetric polynomials e_0..e_{hi-h}
    let top = hi - h;
    let mut e = vec![0.0; top + 1];
    e[0] = 1.0;
    for &v in &stay {
        for k in (1..=top).rev() {
            e[k] += v * e[k - 1];
        }
    }
    let n_sizes = ((hi - lo + 1) as f64).ln();
    let terms = (lo.max(h).max(1)..=hi).map(|s| e[s - h].ln() - ln_choose(n, s));
    log_flip + logsumexp(terms) - n_sizes
}

/// Weighted mixture of kernels. Zero-weight components are kept for
/// reporting but never drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMixture {
    entries: Vec<(ProposalKernel, f64)>,
    frozen: bool,
}

impl KernelMixture {
    /// Weights must be nonnegative with a positive sum; they are normalized.
    pub fn new(entries: Vec<(ProposalKernel, f64)>) -> Result<Self> {
        if entries.iter().any(|(_, w)| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument("mixture weights must be nonnegative".into()));
        }
        let total: f64 = entries.iter().map(|(_, w)| w).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidArgument("mixture needs a positive weight".into()));
        }
        let entries = entries.into_iter().map(|(k, w)| (k, w / total)).collect();
        Ok(KernelMixture { entries, frozen: false })
    }

    pub fn single(kernel: ProposalKernel) -> Self {
        KernelMixture { entries: vec![(kernel, 1.0)], frozen: false }
    }

    pub fn entries(&self) -> &[(ProposalKernel, f64)] {
        &self.entries
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        self.entries.iter().try_for_each(|(k, _)| k.validate(p))
    }

    /// Symmetric when every drawable component is.
    pub fn is_symmetric(&self) -> bool {
        self.entries.iter().all(|(k, w)| *w == 0.0 || k.is_symmetric())
    }

    /// Picks a component index by weight.
    pub fn choose<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, (_, w)) in self.entries.iter().enumerate() {
            if *w == 0.0 {
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

    pub fn propose<R: Rng + ?Sized>(&self, gamma: &ModelVector, rng: &mut R) -> (Proposal, usize) {
        let k = self.choose(rng);
        (self.entries[k].0.propose(gamma, rng), k)
    }

    pub fn propose_in<R: Rng + ?Sized>(&self, gamma: &ModelVector, free: &[usize], rng: &mut R) -> (Proposal, usize) {
        let k = self.choose(rng);
        (self.entries[k].0.propose_in(gamma, free, rng), k)
    }

    pub fn log_density(&self, from: &ModelVector, to: &ModelVector) -> Result<f64> {
        if from.len() != to.len() {
            return Err(Error::InvalidArgument("length mismatch".into()));
        }
        let all: Vec<usize> = (0..from.len()).collect();
        Ok(self.log_density_in(from, to, &all))
    }

    pub fn log_density_in(&self, from: &ModelVector, to: &ModelVector, free: &[usize]) -> f64 {
        logsumexp(self.entries.iter().filter(|(_, w)| *w > 0.0).map(|(k, w)| w.ln() + k.log_density_in(from, to, free)))
    }

    /// Sets ρ_i of every adaptive random-change kernel to the clamped
    /// inclusion estimate and freezes the mixture.
    pub fn update_rho(&self, estimates: &[f64], bounds: (f64, f64)) -> Result<KernelMixture> {
        if self.frozen {
            return Err(Error::State("rho already updated; the mixture is frozen".into()));
        }
        let (lo, hi) = bounds;
        if !(lo > 0.0 && lo <= hi && hi < 1.0) {
            return Err(Error::InvalidArgument(format!("invalid rho bounds [{lo}, {hi}]")));
        }
        let mut out = self.clone();
        for (k, _) in out.entries.iter_mut() {
            if let ProposalKernel::RandomChange { rho, adaptive: true, .. } = k {
                if estimates.len() != rho.len() {
                    return Err(Error::InvalidArgument(format!(
                        "{} estimates for {} indices",
                        estimates.len(),
                        rho.len()
                    )));
                }
                for (r, e) in rho.iter_mut().zip(estimates) {
                    *r = e.clamp(lo, hi);
                }
            }
        }
        out.frozen = true;
        Ok(out)
    }
}

/// Common interface of single kernels and mixtures.
pub trait Proposer {
    fn propose_in<R: Rng + ?Sized>(&self, gamma: &ModelVector, free: &[usize], rng: &mut R) -> Proposal;
    fn log_density_in(&self, from: &ModelVector, to: &ModelVector, free: &[usize]) -> f64;
}

impl Proposer for ProposalKernel {
    fn propose_in<R: Rng + ?Sized>(&self, gamma: &ModelVector, free: &[usize], rng: &mut R) -> Proposal {
        ProposalKernel::propose_in(self, gamma, free, rng)
    }

    fn log_density_in(&self, from: &ModelVector, to: &ModelVector, free: &[usize]) -> f64 {
        ProposalKernel::log_density_in(self, from, to, free)
    }
}

impl Proposer for KernelMixture {
    fn propose_in<R: Rng + ?Sized>(&self, gamma: &ModelVector, free: &[usize], rng: &mut R) -> Proposal {
        KernelMixture::propose_in(self, gamma, free, rng).0
    }

    fn log_density_in(&self, from: &ModelVector, to: &ModelVector, free: &[usize]) -> f64 {
        KernelMixture::log_density_in(self, from, to, free)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelspace::enumerate_all;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    use std::collections::HashMap;

    fn mv(s: &str) -> ModelVector {
        s.parse().unwrap()
    }

    fn random_rho(p: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..p).map(|_| 0.02 + 0.96 * rng.random::<f64>()).collect()
    }

    fn all_kernels(p: usize, rng: &mut ChaCha8Rng) -> Vec<ProposalKernel> {
        let lo = rng.random_range(1..=p);
        let hi = rng.random_range(lo..=p);
        let s = rng.random_range(1..=p);
        let mut rc1 = ProposalKernel::random_change_uniform(lo, hi, random_rho(p, rng));
        if let ProposalKernel::RandomChange { adaptive, .. } = &mut rc1 {
            *adaptive = true;
        }
        vec![
            rc1,
            ProposalKernel::random_change_fixed(s, random_rho(p, rng)),
            ProposalKernel::swap_uniform(lo, hi),
            ProposalKernel::swap_fixed(s),
            ProposalKernel::Add,
            ProposalKernel::Delete,
        ]
    }

    /// Brute-force probability of every outcome of the random-change kernel:
    /// enumerate sizes, chosen sets and flip patterns.
    fn brute_random_change(size: SizeSpec, rho: &[f64], from: &ModelVector) -> HashMap<ModelVector, f64> {
        let p = from.len();
        let (lo, hi) = size.clipped(p);
        let mut out = HashMap::new();
        let n_sets = 1u64 << p;
        for chosen in 0..n_sets {
            let s = chosen.count_ones() as usize;
            if s < lo || s > hi {
                continue;
            }
            let choose_p = (hi - lo + 1) as f64 * ln_choose(p, s).exp();
            for flips in 0..n_sets {
                if flips & !chosen != 0 {
                    continue;
                }
                let mut pr = 1.0 / choose_p;
                let mut to = from.clone();
                for (i, &r) in rho.iter().enumerate().take(p) {
                    if chosen >> i & 1 == 1 {
                        if flips >> i & 1 == 1 {
                            pr *= r;
                            to.flip(i);
                        } else {
                            pr *= 1.0 - r;
                        }
                    }
                }
                *out.entry(to).or_insert(0.0) += pr;
            }
        }
        out
    }

    #[test]
    fn type_numbers_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ks = all_kernels(5, &mut rng);
        let nums: Vec<u8> = ks.iter().map(|k| k.type_number()).collect();
        assert_eq!(nums, vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(ks.iter().filter(|k| k.is_symmetric()).count(), 4);
    }

    #[test]
    fn swap_full_size_complements() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = mv("1100101");
        let prop = ProposalKernel::swap_fixed(7).propose(&g, &mut rng);
        assert_eq!(prop.to, mv("0011010"));
        assert_eq!(prop.changed, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn add_on_full_model_stays() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = ModelVector::ones(6);
        assert_eq!(ProposalKernel::Add.propose(&g, &mut rng).to, g);
        assert_eq!(ProposalKernel::Add.log_density(&g, &g).unwrap(), 0.0);
        let z = ModelVector::zeros(6);
        assert_eq!(ProposalKernel::Delete.propose(&z, &mut rng).to, z);
    }

    #[test]
    fn swap_range_two_always_distance_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = ProposalKernel::swap_uniform(2, 2);
        let g = mv("0110010001");
        for _ in 0..10_000 {
            assert_eq!(k.propose(&g, &mut rng).to.hamming(&g).unwrap(), 2);
        }
    }

    #[test]
    fn density_examples() {
        let k4 = ProposalKernel::swap_fixed(2);
        let a = mv("0000000000");
        let b = mv("0100000001");
        assert!((k4.log_density(&a, &b).unwrap() + 45f64.ln()).abs() < 1e-12);
        let g = mv("1010011");
        let to = mv("1110011");
        assert!((ProposalKernel::Add.log_density(&g, &to).unwrap() + 3f64.ln()).abs() < 1e-12);
        let k2 = ProposalKernel::random_change_fixed(10, vec![0.1; 10]);
        let to = mv("0001000000");
        let expect = 0.1f64.ln() + 9.0 * 0.9f64.ln();
        assert!((k2.log_density(&a, &to).unwrap() - expect).abs() < 1e-12);
        let brute = brute_random_change(SizeSpec::Fixed(10), &[0.1; 10], &a);
        assert!((brute[&to].ln() - expect).abs() < 1e-12);
        assert!(k4.log_density(&a, &mv("000")).is_err());
    }

    #[test]
    fn random_change_density_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for p in 1..=6 {
            for _ in 0..5 {
                let rho = random_rho(p, &mut rng);
                let lo = rng.random_range(1..=p);
                let hi = rng.random_range(lo..=p);
                let size = SizeSpec::Uniform { min: lo, max: hi };
                let k = ProposalKernel::RandomChange { size, rho: rho.clone(), adaptive: false };
                let from = ModelVector::from_code(p, rng.random_range(0..1u64 << p));
                let brute = brute_random_change(size, &rho, &from);
                for to in enumerate_all(p).unwrap() {
                    let d = k.log_density(&from, &to).unwrap().exp();
                    let b = brute.get(&to).copied().unwrap_or(0.0);
                    assert!((d - b).abs() < 1e-12, "p={p} {from}->{to}: {d} vs {b}");
                }
            }
        }
    }

    #[test]
    fn densities_normalize_for_every_type() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for p in 1..=6 {
            for _ in 0..10 {
                for k in all_kernels(p, &mut rng) {
                    let from = ModelVector::from_code(p, rng.random_range(0..1u64 << p));
                    let total: f64 = enumerate_all(p).unwrap().map(|to| k.log_density(&from, &to).unwrap().exp()).sum();
                    assert!((total - 1.0).abs() < 1e-10, "type {} p={p}", k.type_number());
                }
            }
        }
    }

    #[test]
    fn masked_densities_normalize_and_respect_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = 6;
        for _ in 0..20 {
            let frozen = ModelVector::from_code(p, rng.random_range(0..1u64 << p));
            let free: Vec<usize> = (0..p).filter(|&i| !frozen.get(i)).collect();
            for k in all_kernels(p, &mut rng) {
                let from = ModelVector::from_code(p, rng.random_range(0..1u64 << p));
                let total: f64 = enumerate_all(p).unwrap().map(|to| k.log_density_in(&from, &to, &free).exp()).sum();
                assert!((total - 1.0).abs() < 1e-10);
                for _ in 0..20 {
                    let prop = k.propose_in(&from, &free, &mut rng);
                    assert!(prop.changed.iter().all(|i| !frozen.get(*i)));
                    assert!(k.log_density_in(&from, &prop.to, &free).is_finite());
                }
            }
        }
    }

    #[test]
    fn symmetric_types_are_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for p in 1..=6 {
            for k in all_kernels(p, &mut rng).into_iter().take(4) {
                for a in enumerate_all(p).unwrap() {
                    for b in enumerate_all(p).unwrap() {
                        let ab = k.log_density(&a, &b).unwrap();
                        let ba = k.log_density(&b, &a).unwrap();
                        assert!(ab == ba || (ab - ba).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn add_delete_reverse_pairing() {
        for p in 1..=6 {
            for a in enumerate_all(p).unwrap() {
                for i in (0..p).filter(|&i| !a.get(i)) {
                    let b = a.swap(&[i]).unwrap();
                    let fwd = ProposalKernel::Add.log_density(&a, &b).unwrap();
                    let zeros = p - a.count_ones();
                    assert!((fwd + (zeros as f64).ln()).abs() < 1e-12);
                    let back = ProposalKernel::Delete.log_density(&b, &a).unwrap();
                    assert!((back + (b.count_ones() as f64).ln()).abs() < 1e-12);
                    // a state with z zeros pairs with deletion from a state with z ones
                    let comp = ModelVector::from_code(p, !a.code().unwrap() & ((1 << p) - 1));
                    let comp_to = comp.swap(&[i]).unwrap();
                    assert_eq!(ProposalKernel::Delete.log_density(&comp, &comp_to).unwrap(), fwd);
                }
            }
        }
    }

    fn chi_square_pvalue(counts: &HashMap<ModelVector, u64>, k: &ProposalKernel, from: &ModelVector, n: u64) -> f64 {
        let p = from.len();
        let mut stat = 0.0;
        let mut cells = 0;
        for to in enumerate_all(p).unwrap() {
            let e = k.log_density(from, &to).unwrap().exp() * n as f64;
            let o = counts.get(&to).copied().unwrap_or(0) as f64;
            if e == 0.0 {
                assert_eq!(o, 0.0, "draw outside support");
                continue;
            }
            stat += (o - e) * (o - e) / e;
            cells += 1;
        }
        if cells <= 1 {
            return 1.0;
        }
        1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat)
    }

    #[test]
    fn empirical_law_matches_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = 5;
        let from = mv("10110");
        let kernels = vec![
            ProposalKernel::random_change_uniform(1, 4, vec![0.2, 0.5, 0.7, 0.4, 0.9]),
            ProposalKernel::random_change_fixed(3, vec![0.3, 0.6, 0.1, 0.8, 0.5]),
            ProposalKernel::swap_uniform(1, 3),
            ProposalKernel::swap_fixed(2),
            ProposalKernel::Add,
            ProposalKernel::Delete,
        ];
        let n = 100_000;
        for k in kernels {
            let mut counts = HashMap::new();
            for _ in 0..n {
                *counts.entry(k.propose(&from, &mut rng).to).or_insert(0u64) += 1;
            }
            let pv = chi_square_pvalue(&counts, &k, &from, n);
            assert!(pv > 0.001, "type {} p-value {pv}", k.type_number());
            assert_eq!(from.len(), p);
        }
    }

    #[test]
    fn mixture_selection_frequencies() {
        let w = [0.1176, 0.3348, 0.2772, 0.0199, 0.2453, 0.0042];
        let k = |s| ProposalKernel::swap_fixed(s);
        let mix = KernelMixture::new(w.iter().enumerate().map(|(i, &w)| (k(i + 1), w)).collect()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let mut counts = [0u64; 6];
        for _ in 0..n {
            counts[mix.choose(&mut rng)] += 1;
        }
        let total: f64 = w.iter().sum();
        for (c, &wi) in counts.iter().zip(&w) {
            let pi = wi / total;
            let sd = (n as f64 * pi * (1.0 - pi)).sqrt();
            assert!((*c as f64 - n as f64 * pi).abs() < 3.0 * sd, "{c} vs {pi}");
        }
    }

    #[test]
    fn zero_weight_never_chosen() {
        let mix = KernelMixture::new(vec![(ProposalKernel::Add, 1.0), (ProposalKernel::Delete, 0.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        assert!((0..100_000).all(|_| mix.choose(&mut rng) == 0));
        // the zero-weight component contributes no mass
        let a = mv("01");
        assert_eq!(mix.log_density(&a, &mv("00")).unwrap(), f64::NEG_INFINITY);
        assert!(!mix.is_symmetric());
    }

    #[test]
    fn single_mixture_matches_kernel() {
        let k = ProposalKernel::random_change_fixed(3, vec![0.4; 4]);
        let mix = KernelMixture::single(k.clone());
        let a = mv("0110");
        for b in enumerate_all(4).unwrap() {
            let x = mix.log_density(&a, &b).unwrap();
            let y = k.log_density(&a, &b).unwrap();
            assert!(x == y || (x - y).abs() < 1e-14);
        }
        let mut r1 = ChaCha8Rng::seed_from_u64(11);
        let mut r2 = ChaCha8Rng::seed_from_u64(11);
        let _ = mix.choose(&mut r1);
        let _: f64 = r2.random();
        for _ in 0..100 {
            assert_eq!(mix.entries()[0].0.propose(&a, &mut r1), k.propose(&a, &mut r2));
        }
    }

    #[test]
    fn add_delete_mixture_on_two_bits() {
        let mix = KernelMixture::new(vec![(ProposalKernel::Add, 0.5), (ProposalKernel::Delete, 0.5)]).unwrap();
        for a in enumerate_all(2).unwrap() {
            let row: f64 = enumerate_all(2).unwrap().map(|b| mix.log_density(&a, &b).unwrap().exp()).sum();
            assert!((row - 1.0).abs() < 1e-12);
            let stay = mix.log_density(&a, &a).unwrap().exp();
            let expect = if a.count_ones() == 1 { 0.0 } else { 0.5 };
            assert!((stay - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn mixture_of_symmetric_is_symmetric() {
        let mix = KernelMixture::new(vec![
            (ProposalKernel::swap_fixed(1), 0.3),
            (ProposalKernel::random_change_fixed(4, vec![0.2, 0.3, 0.4, 0.5]), 0.7),
        ])
        .unwrap();
        assert!(mix.is_symmetric());
        for a in enumerate_all(4).unwrap() {
            for b in enumerate_all(4).unwrap() {
                let x = mix.log_density(&a, &b).unwrap();
                let y = mix.log_density(&b, &a).unwrap();
                assert!(x == y || (x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn update_rho_clamps_and_freezes() {
        let adaptive = ProposalKernel::RandomChange { size: SizeSpec::Fixed(3), rho: vec![0.5; 3], adaptive: true };
        let fixed = ProposalKernel::random_change_fixed(3, vec![0.001; 3]);
        let mix = KernelMixture::new(vec![(adaptive, 0.5), (fixed.clone(), 0.5)]).unwrap();
        let out = mix.update_rho(&[0.5, 0.0, 1.0], (0.01, 0.99)).unwrap();
        match &out.entries()[0].0 {
            ProposalKernel::RandomChange { rho, .. } => assert_eq!(rho, &vec![0.5, 0.01, 0.99]),
            _ => unreachable!(),
        }
        assert_eq!(out.entries()[1].0, fixed);
        assert!(out.is_frozen());
        assert!(matches!(out.update_rho(&[0.5; 3], (0.01, 0.99)), Err(Error::State(_))));
    }

    #[test]
    fn validation() {
        assert!(ProposalKernel::swap_fixed(0).validate(3).is_err());
        assert!(ProposalKernel::swap_fixed(4).validate(3).is_err());
        assert!(ProposalKernel::swap_uniform(3, 2).validate(5).is_err());
        assert!(ProposalKernel::random_change_fixed(2, vec![0.0, 0.5]).validate(2).is_err());
        assert!(ProposalKernel::random_change_fixed(2, vec![0.5]).validate(2).is_err());
        assert!(ProposalKernel::random_change_fixed(2, vec![0.5, 0.5]).validate(2).is_ok());
        assert!(KernelMixture::new(vec![(ProposalKernel::Add, 0.0)]).is_err());
        assert!(KernelMixture::new(vec![(ProposalKernel::Add, -1.0)]).is_err());
    }
}
