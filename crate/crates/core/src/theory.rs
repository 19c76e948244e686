//! Exact small-domain checks of the conditional-estimation analysis: KL
//! divergence, (conditional) mutual information, the KL convexity lemma and
//! the inequality chain D_KL(P ‖ P̂) ≤ I(A_i; A_j | Z) ≤ I(A_i; A_j).
//!
//! The last inequality does not hold for every joint distribution, so
//! batteries tally it rather than assert it.

use rand::Rng as _;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marginal::{project_values, Clique};
use crate::rng::{seeded, Rng};

/// Largest tensor the oracle will enumerate.
pub const MAX_JOINT_CELLS: usize = 1_000_000;
pub const SLACK: f64 = 1e-9;
const NORMALIZATION_TOL: f64 = 1e-9;

/// KL implementation used by the batteries, replaceable for fault injection.
pub type KlFn = fn(&[f64], &[f64]) -> Result<f64>;

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidDistribution(format!("{what} has a negative or non-finite entry")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::InvalidDistribution(format!("{what} sums to {s}")));
    }
    Ok(())
}

/// Σ p ln(p/q), with 0·ln(0/q) = 0 and +∞ when p > 0 = q.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::InvalidDistribution(format!("length {} vs {}", p.len(), q.len())));
    }
    check_distribution(p, "p")?;
    check_distribution(q, "q")?;
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b == 0.0 {
                return Ok(f64::INFINITY);
            }
            total += a * (a / b).ln();
        }
    }
    Ok(total.max(0.0))
}

/// Shannon entropy in nats.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// Normalized probability tensor over small attribute domains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    sizes: Vec<usize>,
    probs: Vec<f64>,
}

impl JointDistribution {
    pub fn new(sizes: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::InvalidDistribution("sizes must be positive".into()));
        }
        let cells = sizes.iter().try_fold(1usize, |acc, &s| acc.checked_mul(s));
        match cells {
            Some(c) if c <= MAX_JOINT_CELLS && c == probs.len() => {}
            _ => return Err(Error::InvalidDistribution("tensor size does not match the domain or exceeds the cap".into())),
        }
        check_distribution(&probs, "joint")?;
        Ok(JointDistribution { sizes, probs })
    }

    /// Dirichlet(1) tensor.
    pub fn random(sizes: Vec<usize>, rng: &mut Rng) -> Result<Self> {
        let cells = sizes.iter().product();
        Self::new(sizes, dirichlet_ones(cells, rng))
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn clique(&self, attrs: &[usize]) -> Result<Clique> {
        if attrs.iter().any(|&a| a >= self.sizes.len()) {
            return Err(Error::param("attribute index out of range"));
        }
        Clique::from_sizes(attrs, &self.sizes)
    }

    /// Marginal over `attrs`, laid out row-major in ascending attribute order.
    pub fn marginal(&self, attrs: &[usize]) -> Result<Vec<f64>> {
        let full = self.clique(&(0..self.sizes.len()).collect::<Vec<_>>())?;
        Ok(project_values(&full, &self.probs, &self.clique(attrs)?))
    }

    fn pair_layout(&self, i: usize, j: usize, p: Vec<f64>) -> Vec<f64> {
        // reorder an ascending-order pair table into [a_i][a_j]
        if i < j {
            return p;
        }
        let (si, sj) = (self.sizes[i], self.sizes[j]);
        let mut out = vec![0.0; si * sj];
        for b in 0..sj {
            for a in 0..si {
                out[a * sj + b] = p[b * si + a];
            }
        }
        out
    }

    /// Pr[A_i, A_j] laid out as `[a_i][a_j]`.
    pub fn pair(&self, i: usize, j: usize) -> Result<Vec<f64>> {
        if i == j {
            return Err(Error::param("pair needs distinct attributes"));
        }
        let p = self.marginal(&[i, j])?;
        Ok(self.pair_layout(i, j, p))
    }
}

fn dirichlet_ones(k: usize, rng: &mut Rng) -> Vec<f64> {
    let draws: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = draws.iter().sum();
    draws.into_iter().map(|x| x / s).collect()
}

fn check_indices(d: usize, i: usize, j: usize, cond: &[usize]) -> Result<()> {
    if i == j || cond.contains(&i) || cond.contains(&j) {
        return Err(Error::param("i, j and the conditioning set must be disjoint"));
    }
    let mut sorted = cond.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) || sorted.last().is_some_and(|&m| m >= d) || i >= d || j >= d {
        return Err(Error::param("invalid attribute indices"));
    }
    Ok(())
}

/// Σ_z Pr[z]·Pr[A_i|z]·Pr[A_j|z], laid out as `[a_i][a_j]`.
pub fn conditional_estimate(joint: &JointDistribution, i: usize, j: usize, cond: &[usize]) -> Result<Vec<f64>> {
    check_indices(joint.sizes.len(), i, j, cond)?;
    let (si, sj) = (joint.sizes[i], joint.sizes[j]);
    if cond.is_empty() {
        let pi = joint.marginal(&[i])?;
        let pj = joint.marginal(&[j])?;
        return Ok((0..si * sj).map(|c| pi[c / sj] * pj[c % sj]).collect());
    }
    let mut all: Vec<usize> = cond.to_vec();
    all.push(i);
    all.push(j);
    let c_all = joint.clique(&all)?;
    let c_z = joint.clique(cond)?;
    let c_iz = joint.clique(&[cond, &[i]].concat())?;
    let c_jz = joint.clique(&[cond, &[j]].concat())?;
    let p_all = joint.marginal(&all)?;
    let p_z = project_values(&c_all, &p_all, &c_z);
    let p_iz = project_values(&c_all, &p_all, &c_iz);
    let p_jz = project_values(&c_all, &p_all, &c_jz);
    let zmap = c_all.sub_indices(&c_z);
    let izmap = c_all.sub_indices(&c_iz);
    let jzmap = c_all.sub_indices(&c_jz);
    let mut out = vec![0.0; si * sj];
    for cell in 0..c_all.cells() {
        let pz = p_z[zmap[cell]];
        if pz > 0.0 {
            let a = c_all.digit(cell, i);
            let b = c_all.digit(cell, j);
            // every (a, b) pair for a given z appears once in this loop
            out[a * sj + b] += p_iz[izmap[cell]] * p_jz[jzmap[cell]] / pz;
        }
    }
    Ok(out)
}

/// I(A_i; A_j) = D_KL(Pr[A_i, A_j] ‖ Pr[A_i]·Pr[A_j]).
pub fn mutual_information(joint: &JointDistribution, i: usize, j: usize) -> Result<f64> {
    kl_divergence(&joint.pair(i, j)?, &conditional_estimate(joint, i, j, &[])?)
}

/// H(A_i) + H(A_j) − H(A_i, A_j).
pub fn mutual_information_entropy(joint: &JointDistribution, i: usize, j: usize) -> Result<f64> {
    Ok(entropy(&joint.marginal(&[i])?) + entropy(&joint.marginal(&[j])?) - entropy(&joint.marginal(&[i, j])?))
}

/// I(A_i; A_j | Z) = H(A_i, Z) + H(A_j, Z) − H(A_i, A_j, Z) − H(Z).
pub fn conditional_mutual_information(joint: &JointDistribution, i: usize, j: usize, cond: &[usize]) -> Result<f64> {
    check_indices(joint.sizes.len(), i, j, cond)?;
    let h = |attrs: &[usize]| -> Result<f64> {
        if attrs.is_empty() {
            return Ok(0.0);
        }
        Ok(entropy(&joint.marginal(attrs)?))
    };
    let v = h(&[cond, &[i]].concat())? + h(&[cond, &[j]].concat())? - h(&[cond, &[i, j]].concat())? - h(cond)?;
    Ok(v.max(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// D_KL(P₁(z) ‖ P₂(z)) against Σ_x p(x)·D_KL(P₁(z|x) ‖ P₂(z|x)), where
/// P_k(z) = Σ_x p(x)·P_k(z|x).
pub fn check_lemma_convexity(px: &[f64], p1: &[Vec<f64>], p2: &[Vec<f64>]) -> Result<LemmaCheck> {
    check_lemma_convexity_with(px, p1, p2, kl_divergence)
}

pub fn check_lemma_convexity_with(px: &[f64], p1: &[Vec<f64>], p2: &[Vec<f64>], kl: KlFn) -> Result<LemmaCheck> {
    check_distribution(px, "p(x)")?;
    if p1.len() != px.len() || p2.len() != px.len() {
        return Err(Error::InvalidDistribution("one conditional per mixture component".into()));
    }
    let k = p1.first().map_or(0, Vec::len);
    for row in p1.iter().chain(p2) {
        if row.len() != k {
            return Err(Error::InvalidDistribution("conditionals differ in length".into()));
        }
        check_distribution(row, "conditional")?;
    }
    let mix = |rows: &[Vec<f64>]| -> Vec<f64> {
        (0..k).map(|z| px.iter().zip(rows).map(|(w, r)| w * r[z]).sum()).collect()
    };
    let lhs = kl(&mix(p1), &mix(p2))?;
    let mut rhs = 0.0;
    for ((w, a), b) in px.iter().zip(p1).zip(p2) {
        if *w > 0.0 {
            rhs += w * kl(a, b)?;
        }
    }
    Ok(LemmaCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + SLACK,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremCheck {
    /// D_KL(Pr[A_i, A_j] ‖ P̂).
    pub lhs: f64,
    /// I(A_i; A_j | Z).
    pub mid: f64,
    /// I(A_i; A_j).
    pub rhs: f64,
    pub chain_holds: bool,
    pub final_holds: bool,
}

pub fn check_theorem_adaptive(joint: &JointDistribution, i: usize, j: usize, cond: &[usize]) -> Result<TheoremCheck> {
    check_theorem_adaptive_with(joint, i, j, cond, kl_divergence)
}

pub fn check_theorem_adaptive_with(joint: &JointDistribution, i: usize, j: usize, cond: &[usize], kl: KlFn) -> Result<TheoremCheck> {
    let lhs = kl(&joint.pair(i, j)?, &conditional_estimate(joint, i, j, cond)?)?;
    let mid = conditional_mutual_information(joint, i, j, cond)?;
    let rhs = mutual_information_entropy(joint, i, j)?.max(0.0);
    Ok(TheoremCheck {
        lhs,
        mid,
        rhs,
        chain_holds: lhs <= mid + SLACK,
        final_holds: lhs <= rhs + SLACK,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryConfig {
    pub lemma_instances: usize,
    pub theorem_instances: usize,
    /// Largest mixture or outcome size in lemma instances.
    pub max_lemma_size: usize,
    pub seed: u64,
    /// Counterexamples kept in the report.
    pub max_counterexamples: usize,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        BatteryConfig {
            lemma_instances: 1000,
            theorem_instances: 1000,
            max_lemma_size: 8,
            seed: 0,
            max_counterexamples: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub seed: u64,
    pub sizes: Vec<usize>,
    pub probs: Vec<f64>,
    pub check: TheoremCheck,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub lemma_instances: usize,
    pub lemma_violations: usize,
    pub theorem_instances: usize,
    pub chain_holds: usize,
    pub chain_violations: usize,
    pub final_holds: usize,
    pub final_violations: usize,
    /// Seeds of lemma then theorem instances, in run order.
    pub lemma_seeds: Vec<u64>,
    pub theorem_seeds: Vec<u64>,
    /// Instances breaking the chain step.
    pub chain_counterexamples: Vec<Counterexample>,
    /// Instances where the final inequality fails.
    pub final_counterexamples: Vec<Counterexample>,
}

impl BatteryReport {
    pub fn chain_ok(&self) -> bool {
        self.chain_violations == 0 && self.lemma_violations == 0
    }
}

fn instance_seed(base: u64, family: u64, k: usize) -> u64 {
    base ^ (family << 56) ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Random lemma instance: mixture over `nx` components on `nz` outcomes.
pub fn random_lemma_instance(seed: u64, max_size: usize) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rng = seeded(seed);
    let nx = rng.random_range(1..=max_size.max(1));
    let nz = rng.random_range(2..=max_size.max(2));
    let px = dirichlet_ones(nx, &mut rng);
    let p1 = (0..nx).map(|_| dirichlet_ones(nz, &mut rng)).collect();
    let p2 = (0..nx).map(|_| dirichlet_ones(nz, &mut rng)).collect();
    (px, p1, p2)
}

/// Random joint over three attributes: even instances 2×2×2, odd ones 3×3×3.
pub fn random_theorem_instance(seed: u64, k: usize) -> Result<JointDistribution> {
    let s = if k % 2 == 0 { 2 } else { 3 };
    JointDistribution::random(vec![s; 3], &mut seeded(seed))
}

/// Run the lemma and theorem batteries with the given KL implementation.
pub fn run_battery(config: &BatteryConfig, kl: KlFn) -> Result<BatteryReport> {
    let mut report = BatteryReport {
        lemma_instances: config.lemma_instances,
        lemma_violations: 0,
        theorem_instances: config.theorem_instances,
        chain_holds: 0,
        chain_violations: 0,
        final_holds: 0,
        final_violations: 0,
        lemma_seeds: Vec::with_capacity(config.lemma_instances),
        theorem_seeds: Vec::with_capacity(config.theorem_instances),
        chain_counterexamples: Vec::new(),
        final_counterexamples: Vec::new(),
    };
    for k in 0..config.lemma_instances {
        let seed = instance_seed(config.seed, 1, k);
        let (px, p1, p2) = random_lemma_instance(seed, config.max_lemma_size);
        report.lemma_seeds.push(seed);
        if !check_lemma_convexity_with(&px, &p1, &p2, kl)?.holds {
            report.lemma_violations += 1;
        }
    }
    for k in 0..config.theorem_instances {
        let seed = instance_seed(config.seed, 2, k);
        let joint = random_theorem_instance(seed, k)?;
        report.theorem_seeds.push(seed);
        let check = check_theorem_adaptive_with(&joint, 0, 1, &[2], kl)?;
        let example = || Counterexample {
            seed,
            sizes: joint.sizes.clone(),
            probs: joint.probs.clone(),
            check: check.clone(),
        };
        if check.chain_holds {
            report.chain_holds += 1;
        } else {
            report.chain_violations += 1;
            if report.chain_counterexamples.len() < config.max_counterexamples {
                report.chain_counterexamples.push(example());
            }
        }
        if check.final_holds {
            report.final_holds += 1;
        } else {
            report.final_violations += 1;
            if report.final_counterexamples.len() < config.max_counterexamples {
                report.final_counterexamples.push(example());
            }
        }
    }
    Ok(report)
}
