//! Marginal selection: one-shot InDif selection and the adaptive
//! measure-and-refit loop.

use serde::{Deserialize, Serialize};

use crate::accountant::{exponential_select, gaussian_perturb, sigma_for_rho, BudgetLedger};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::marginal::{compute_marginal, expected_l1_noise, l1_distance, make_consistent, measure_noisy, Clique, Marginal, MAX_MARGINAL_CELLS};
use crate::rng::Rng;
use crate::synth::{build_junction_tree, JunctionModel, MAX_CLIQUE_CELLS};

/// ℓ₁ sensitivity of InDif.
pub const INDIF_SENSITIVITY: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStrategy {
    NonAdaptive,
    Adaptive,
}

impl std::str::FromStr for SelectionStrategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "non_adaptive" | "privsyn" => Ok(SelectionStrategy::NonAdaptive),
            "adaptive" | "aim" => Ok(SelectionStrategy::Adaptive),
            other => Err(format!("unknown selection strategy `{other}` (expected non_adaptive or adaptive)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub marginal: Marginal,
    pub rho: f64,
    /// Adaptive round that measured this entry (0 for the initial 1-way pass).
    pub round: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub chosen: Vec<usize>,
    pub candidates: usize,
    pub chosen_score: f64,
    pub max_score: f64,
    pub min_score: f64,
    pub epsilon_em: f64,
    pub rho_measure: f64,
}

/// Noisy measurements handed to a synthesizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionPlan {
    pub strategy: SelectionStrategy,
    pub entries: Vec<PlanEntry>,
    /// ρ spent on choosing (noisy InDif or exponential-mechanism draws).
    pub overhead_rho: f64,
    pub rounds: Vec<RoundLog>,
}

impl SelectionPlan {
    pub fn marginals(&self) -> Vec<Marginal> {
        self.entries.iter().map(|e| e.marginal.clone()).collect()
    }

    pub fn cliques(&self) -> Vec<Clique> {
        self.entries.iter().map(|e| e.marginal.clique.clone()).collect()
    }

    /// Measurement ρ plus selection overhead.
    pub fn rho_total(&self) -> f64 {
        self.entries.iter().map(|e| e.rho).sum::<f64>() + self.overhead_rho
    }
}

fn all_pairs(d: usize) -> Vec<(usize, usize)> {
    (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect()
}

/// Pick pairs given noisy InDif values: the largest `k` such that at least
/// `k` pairs beat their expected measurement noise when the measurement
/// budget is split over `d + k` marginals. Returns pair indices ordered by
/// noisy InDif (descending), ties by index.
pub fn privsyn_choose(noisy_indif: &[f64], cells: &[usize], d: usize, rho_measure: f64) -> Vec<usize> {
    if !(rho_measure > 0.0) {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..noisy_indif.len()).collect();
    order.sort_by(|&a, &b| noisy_indif[b].total_cmp(&noisy_indif[a]).then(a.cmp(&b)));
    let beats = |k: usize| -> Vec<usize> {
        let sigma = if rho_measure.is_infinite() {
            0.0
        } else {
            ((d + k) as f64 / (2.0 * rho_measure)).sqrt()
        };
        order
            .iter()
            .copied()
            .filter(|&p| noisy_indif[p] > expected_l1_noise(cells[p], sigma))
            .collect()
    };
    for k in (1..=noisy_indif.len()).rev() {
        let s = beats(k);
        if s.len() >= k {
            return s.into_iter().take(k).collect();
        }
    }
    Vec::new()
}

/// One-shot selection: noisy InDif for every pair at `rho_select`, then all
/// 1-way marginals plus the chosen pairs measured with `rho_measure` split
/// evenly.
pub fn privsyn_select(dataset: &Dataset, rho_select: f64, rho_measure: f64, ledger: &mut BudgetLedger, rng: &mut Rng) -> Result<SelectionPlan> {
    let d = dataset.d();
    if d < 2 {
        return Err(Error::param("selection needs at least two attributes"));
    }
    if !(rho_select >= 0.0) || !(rho_measure >= 0.0) {
        return Err(Error::param("selection budgets must be nonnegative"));
    }
    let domain = dataset.domain();
    let sizes = domain.sizes();
    let pairs: Vec<(usize, usize)> = all_pairs(d)
        .into_iter()
        .filter(|&(i, j)| (sizes[i] as u128) * (sizes[j] as u128) <= MAX_MARGINAL_CELLS as u128)
        .collect();

    let mut chosen = Vec::new();
    if rho_select > 0.0 && !pairs.is_empty() {
        let per_pair = rho_select / pairs.len() as f64;
        let scale = sigma_for_rho(per_pair, INDIF_SENSITIVITY)?;
        ledger.spend(rho_select, format!("select indif x{}", pairs.len()))?;
        let exact: Vec<f64> = pairs
            .iter()
            .map(|&(i, j)| crate::marginal::indif(dataset, i, j))
            .collect::<Result<_>>()?;
        let noisy = gaussian_perturb(&exact, scale, rng);
        let cells: Vec<usize> = pairs.iter().map(|&(i, j)| sizes[i] * sizes[j]).collect();
        chosen = privsyn_choose(&noisy, &cells, d, rho_measure);
    }

    let mut entries = Vec::new();
    if rho_measure > 0.0 {
        let per = rho_measure / (d + chosen.len()) as f64;
        let mut cliques: Vec<Clique> = (0..d).map(|j| Clique::new(&[j], domain)).collect::<Result<_>>()?;
        for &p in &chosen {
            cliques.push(Clique::new(&[pairs[p].0, pairs[p].1], domain)?);
        }
        for c in cliques {
            let exact = compute_marginal(dataset, &c)?;
            entries.push(PlanEntry {
                marginal: measure_noisy(&exact, per, ledger, rng)?,
                rho: per,
                round: None,
            });
        }
    }
    Ok(SelectionPlan {
        strategy: SelectionStrategy::NonAdaptive,
        entries,
        overhead_rho: if pairs.is_empty() { 0.0 } else { rho_select },
        rounds: Vec::new(),
    })
}

/// Candidate score: ℓ₁ gap minus the expected noise of measuring it.
pub fn score_candidate(candidate: &Clique, exact: &Marginal, estimate: &Marginal, sigma_next: f64) -> Result<f64> {
    if &exact.clique != candidate || &estimate.clique != candidate {
        return Err(Error::CliqueMismatch(format!("score for {candidate} got {} and {}", exact.clique, estimate.clique)));
    }
    Ok(l1_distance(&exact.counts, &estimate.counts) - expected_l1_noise(candidate.cells(), sigma_next))
}

/// Model-based estimate of any clique from the marginals measured so far.
pub trait EstimateHook {
    /// Refit on the current measurements; estimates are scaled to `total`.
    fn refit(&mut self, measured: &[Marginal], total: f64) -> Result<()>;
    fn estimate(&self, clique: &Clique) -> Result<Marginal>;
    /// Whether adding `clique` keeps the model tractable.
    fn admits(&self, measured: &[Clique], clique: &Clique) -> bool;
}

/// Estimates from a junction model fitted to the consistent measurements.
pub struct JunctionEstimator {
    domain_sizes: Vec<usize>,
    cap: usize,
    model: Option<JunctionModel>,
    total: f64,
}

impl JunctionEstimator {
    pub fn new(domain_sizes: Vec<usize>, cap: usize) -> Self {
        JunctionEstimator {
            domain_sizes,
            cap,
            model: None,
            total: 0.0,
        }
    }
}

impl EstimateHook for JunctionEstimator {
    fn refit(&mut self, measured: &[Marginal], total: f64) -> Result<()> {
        let consistent = make_consistent(measured, total);
        self.model = Some(JunctionModel::fit(&consistent, &self.domain_sizes, self.cap)?);
        self.total = total;
        Ok(())
    }

    fn estimate(&self, clique: &Clique) -> Result<Marginal> {
        let model = self.model.as_ref().ok_or_else(|| Error::param("estimator used before refit"))?;
        let probs = model.marginal_probs(clique)?;
        Marginal::new(
            clique.clone(),
            probs.into_iter().map(|p| p * self.total).collect(),
            crate::marginal::Provenance::Exact,
        )
    }

    fn admits(&self, measured: &[Clique], clique: &Clique) -> bool {
        let mut all = measured.to_vec();
        all.push(clique.clone());
        build_junction_tree(&all, self.cap).is_ok()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptiveConfig {
    pub rounds: usize,
    /// Share of each round's budget spent on measurement; the rest pays for
    /// the exponential-mechanism draw.
    pub measure_fraction: f64,
    /// Largest candidate clique size (2 or 3).
    pub max_way: usize,
    pub model_cap: usize,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig {
            rounds: 10,
            measure_fraction: 0.9,
            max_way: 2,
            model_cap: MAX_CLIQUE_CELLS,
        }
    }
}

impl AdaptiveConfig {
    /// (ρ per Gaussian measurement, ρ per exponential-mechanism draw) for `d`
    /// attributes so that `d` initial measurements plus every round exactly
    /// use `total_rho`.
    pub fn split(&self, d: usize, total_rho: f64) -> (f64, f64) {
        let f = self.measure_fraction;
        let rho_g = total_rho / (d as f64 + self.rounds as f64 / f);
        (rho_g, rho_g * (1.0 - f) / f)
    }

    fn validate(&self) -> Result<()> {
        if !(self.measure_fraction > 0.0 && self.measure_fraction < 1.0) {
            return Err(Error::param("measure_fraction must be in (0, 1)"));
        }
        if !(2..=3).contains(&self.max_way) {
            return Err(Error::param("max_way must be 2 or 3"));
        }
        Ok(())
    }
}

fn candidate_cliques(dataset: &Dataset, max_way: usize) -> Result<Vec<Clique>> {
    let d = dataset.d();
    let domain = dataset.domain();
    let mut out = Vec::new();
    for (i, j) in all_pairs(d) {
        out.push(Clique::new(&[i, j], domain)?);
        if max_way >= 3 {
            for k in j + 1..d {
                out.push(Clique::new(&[i, j, k], domain)?);
            }
        }
    }
    out.retain(|c| c.cells_u128() <= MAX_MARGINAL_CELLS as u128);
    Ok(out)
}

/// Adaptive selection: measure every 1-way marginal, then for each round
/// score candidates against the current model estimate, pick one with the
/// exponential mechanism (sensitivity 1 on raw counts) and measure it.
pub fn adaptive_select(dataset: &Dataset, total_rho: f64, config: &AdaptiveConfig, hook: &mut dyn EstimateHook, ledger: &mut BudgetLedger, rng: &mut Rng) -> Result<SelectionPlan> {
    config.validate()?;
    let d = dataset.d();
    if d == 0 {
        return Err(Error::param("selection needs at least one attribute"));
    }
    if !(total_rho > 0.0) {
        return Err(Error::param("adaptive selection needs a positive budget"));
    }
    let domain = dataset.domain();
    let candidates = if d >= 2 { candidate_cliques(dataset, config.max_way)? } else { Vec::new() };
    let rounds = if candidates.is_empty() { 0 } else { config.rounds };
    let eff = AdaptiveConfig { rounds, ..config.clone() };
    let (rho_g, rho_em) = eff.split(d, total_rho);
    let sigma = sigma_for_rho(rho_g, 1.0)?.sigma;
    let epsilon_em = (8.0 * rho_em).sqrt();

    let mut entries = Vec::new();
    for j in 0..d {
        let exact = compute_marginal(dataset, &Clique::new(&[j], domain)?)?;
        entries.push(PlanEntry {
            marginal: measure_noisy(&exact, rho_g, ledger, rng)?,
            rho: rho_g,
            round: Some(0),
        });
    }
    let exact: Vec<Marginal> = candidates.iter().map(|c| compute_marginal(dataset, c)).collect::<Result<_>>()?;

    let mut overhead = 0.0;
    let mut logs = Vec::new();
    for round in 1..=rounds {
        let measured: Vec<Marginal> = entries.iter().map(|e: &PlanEntry| e.marginal.clone()).collect();
        // noisy total from the 1-way measurements
        let total = (entries[..d].iter().map(|e| e.marginal.total()).sum::<f64>() / d as f64).max(1.0);
        hook.refit(&measured, total)?;
        let measured_cliques: Vec<Clique> = measured.iter().map(|m| m.clique.clone()).collect();
        let pool: Vec<usize> = (0..candidates.len())
            .filter(|&c| hook.admits(&measured_cliques, &candidates[c]))
            .collect();
        if pool.is_empty() {
            return Err(Error::param("no candidate keeps the model under its clique cap"));
        }
        let scores: Vec<f64> = pool
            .iter()
            .map(|&c| {
                let est = hook.estimate(&candidates[c])?;
                score_candidate(&candidates[c], &exact[c], &est, sigma)
            })
            .collect::<Result<_>>()?;
        ledger.spend(rho_em, format!("select round {round}"))?;
        overhead += rho_em;
        let pick = exponential_select(&scores, epsilon_em, 1.0, rng)?;
        let c = pool[pick.index];
        entries.push(PlanEntry {
            marginal: measure_noisy(&exact[c], rho_g, ledger, rng)?,
            rho: rho_g,
            round: Some(round),
        });
        logs.push(RoundLog {
            round,
            chosen: candidates[c].attrs().to_vec(),
            candidates: pool.len(),
            chosen_score: scores[pick.index],
            max_score: scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min_score: scores.iter().copied().fold(f64::INFINITY, f64::min),
            epsilon_em,
            rho_measure: rho_g,
        });
    }
    Ok(SelectionPlan {
        strategy: SelectionStrategy::Adaptive,
        entries,
        overhead_rho: overhead,
        rounds: logs,
    })
}
