//! Privacy accounting in zCDP-style ρ units.
//!
//! A Gaussian release with ℓ₂ sensitivity Δ and noise σ = Δ·√(1/(2ρ)) satisfies
//! (α, αρ)-RDP for every α > 1, and RDP costs add under composition. All
//! internal budgeting therefore happens in ρ; conversion to (ε, δ) happens only
//! at the boundary, via the per-α bound ε(α) = αρ + ln(1/δ)/(α − 1) minimised
//! over α.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Slack allowed when comparing cumulative spend against the total.
pub const LEDGER_TOLERANCE: f64 = 1e-12;

/// Standard deviation of Gaussian noise together with the sensitivity it was
/// calibrated for.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseScale {
    pub sigma: f64,
    pub sensitivity: f64,
}

impl NoiseScale {
    pub fn new(sigma: f64, sensitivity: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::param(format!("sigma must be positive, got {sigma}")));
        }
        if !(sensitivity > 0.0 && sensitivity.is_finite()) {
            return Err(Error::param(format!("sensitivity must be positive, got {sensitivity}")));
        }
        Ok(NoiseScale { sigma, sensitivity })
    }
}

/// Gaussian noise scale spending exactly `rho`.
pub fn sigma_for_rho(rho: f64, sensitivity: f64) -> Result<NoiseScale> {
    if !(rho > 0.0) || rho.is_nan() {
        return Err(Error::param(format!("rho must be positive, got {rho}")));
    }
    NoiseScale::new(sensitivity * (1.0 / (2.0 * rho)).sqrt(), sensitivity)
}

/// RDP-to-DP bound at a single order α.
pub fn rdp_epsilon_at(alpha: f64, rho: f64, delta: f64) -> f64 {
    alpha * rho + (1.0 / delta).ln() / (alpha - 1.0)
}

/// Closed-form minimum of [`rdp_epsilon_at`] over α > 1.
pub fn rho_to_epsilon_closed_form(rho: f64, delta: f64) -> f64 {
    rho + 2.0 * (rho * (1.0 / delta).ln()).sqrt()
}

const GRID_POINTS: usize = 10_000;
const GRID_LO: f64 = 1e-3; // α − 1
const GRID_HI: f64 = 1e3 - 1.0;

/// Smallest ε such that a ρ-budget release is (ε, δ)-DP.
///
/// Minimises the per-order bound on a log-spaced grid of α − 1, widens the
/// bracket if the minimum sits on a grid edge, then refines by golden-section
/// search.
pub fn rho_to_epsilon(rho: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param(format!("delta must be in (0, 1), got {delta}")));
    }
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::param(format!("rho must be positive and finite, got {rho}")));
    }
    let log_term = (1.0 / delta).ln();
    // f(t) with t = α − 1
    let f = |t: f64| (1.0 + t) * rho + log_term / t;

    let (mut lo, mut hi) = (GRID_LO, GRID_HI);
    let (a, b) = loop {
        let ratio = (hi / lo).ln() / (GRID_POINTS - 1) as f64;
        let point = |k: usize| lo * (ratio * k as f64).exp();
        let mut best = 0;
        let mut best_val = f64::INFINITY;
        for k in 0..GRID_POINTS {
            let v = f(point(k));
            if v < best_val {
                best_val = v;
                best = k;
            }
        }
        if best == GRID_POINTS - 1 && hi < 1e15 {
            lo = point(GRID_POINTS - 2);
            hi *= 1e3;
        } else if best == 0 && lo > 1e-15 {
            hi = point(1);
            lo *= 1e-3;
        } else {
            break (point(best.saturating_sub(1)), point((best + 1).min(GRID_POINTS - 1)));
        }
    };
    Ok(golden_section(f, a, b))
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (a.abs() + b.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    f(0.5 * (a + b)).min(fc).min(fd)
}

/// Largest ρ whose (ε, δ) conversion does not exceed `epsilon`.
///
/// The result converts back to a value in `[epsilon·(1 − 1e-9), epsilon]`.
pub fn epsilon_to_rho(epsilon: f64, delta: f64) -> Result<f64> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::param(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param(format!("delta must be in (0, 1), got {delta}")));
    }
    // rho_to_epsilon(epsilon) >= epsilon, so epsilon brackets from above.
    let (mut lo, mut hi) = (0.0_f64, epsilon);
    let target_lo = epsilon * (1.0 - 1e-9);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let e = rho_to_epsilon(mid, delta)?;
        if e <= epsilon {
            lo = mid;
            if e >= target_lo {
                break;
            }
        } else {
            hi = mid;
        }
    }
    if lo <= 0.0 {
        return Err(Error::param(format!("epsilon {epsilon} too small to resolve")));
    }
    Ok(lo)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spend {
    pub label: String,
    pub rho: f64,
}

/// Append-only ρ budget. Overdrafts are rejected before anything is recorded.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BudgetLedger {
    rho_total: f64,
    rho_spent: f64,
    spends: Vec<Spend>,
}

impl BudgetLedger {
    pub fn new(rho_total: f64) -> Result<Self> {
        if !(rho_total >= 0.0) {
            return Err(Error::param(format!("rho_total must be nonnegative, got {rho_total}")));
        }
        Ok(BudgetLedger {
            rho_total,
            rho_spent: 0.0,
            spends: Vec::new(),
        })
    }

    pub fn rho_total(&self) -> f64 {
        self.rho_total
    }

    pub fn rho_spent(&self) -> f64 {
        self.rho_spent
    }

    pub fn remaining(&self) -> f64 {
        (self.rho_total - self.rho_spent).max(0.0)
    }

    pub fn spends(&self) -> &[Spend] {
        &self.spends
    }

    pub fn can_afford(&self, rho: f64) -> bool {
        self.rho_spent + rho <= self.rho_total + LEDGER_TOLERANCE
    }

    pub fn spend(&mut self, rho: f64, label: impl Into<String>) -> Result<()> {
        let label = label.into();
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(Error::param(format!("spend `{label}` has invalid cost {rho}")));
        }
        if !self.can_afford(rho) {
            return Err(Error::Overdraft {
                label,
                requested: rho,
                remaining: self.rho_total - self.rho_spent,
            });
        }
        self.rho_spent += rho;
        self.spends.push(Spend { label, rho });
        Ok(())
    }

    /// Spend log with running totals and their (ε, δ) equivalents.
    pub fn report(&self, delta: f64) -> Result<LedgerReport> {
        let to_eps = |rho: f64| if rho > 0.0 { rho_to_epsilon(rho, delta) } else { Ok(0.0) };
        let mut cumulative = 0.0;
        let mut entries = Vec::with_capacity(self.spends.len());
        for s in &self.spends {
            cumulative += s.rho;
            entries.push(LedgerEntry {
                label: s.label.clone(),
                rho: s.rho,
                cumulative_rho: cumulative,
                cumulative_epsilon: to_eps(cumulative)?,
            });
        }
        Ok(LedgerReport {
            delta,
            rho_total: self.rho_total,
            rho_spent: self.rho_spent,
            epsilon_total: to_eps(self.rho_total)?,
            epsilon_spent: to_eps(self.rho_spent)?,
            entries,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub label: String,
    pub rho: f64,
    pub cumulative_rho: f64,
    pub cumulative_epsilon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerReport {
    pub delta: f64,
    pub rho_total: f64,
    pub rho_spent: f64,
    pub epsilon_total: f64,
    pub epsilon_spent: f64,
    pub entries: Vec<LedgerEntry>,
}

/// Add i.i.d. N(0, σ²) noise to each value.
pub fn gaussian_perturb(values: &[f64], scale: NoiseScale, rng: &mut Rng) -> Vec<f64> {
    values
        .iter()
        .map(|v| {
            let z: f64 = rng.sample(StandardNormal);
            v + scale.sigma * z
        })
        .collect()
}

/// Outcome of an exponential-mechanism draw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmChoice {
    pub index: usize,
    /// ρ charged for the draw, ε²/8.
    pub rho: f64,
}

/// Selection probabilities ∝ exp(ε/(2Δ)·score).
pub fn exponential_probabilities(scores: &[f64], epsilon: f64, sensitivity: f64) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::param("scores must be finite"));
    }
    if !(epsilon > 0.0) || !(sensitivity > 0.0) {
        return Err(Error::param("epsilon and sensitivity must be positive"));
    }
    let k = epsilon / (2.0 * sensitivity);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores.iter().map(|s| (k * (s - max)).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

pub fn exponential_select(scores: &[f64], epsilon: f64, sensitivity: f64, rng: &mut Rng) -> Result<EmChoice> {
    let probs = exponential_probabilities(scores, epsilon, sensitivity)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut index = probs.len() - 1;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            index = i;
            break;
        }
    }
    Ok(EmChoice {
        index,
        rho: epsilon * epsilon / 8.0,
    })
}

/// Standard Gumbel draw by inverse CDF.
pub fn gumbel(rng: &mut Rng) -> f64 {
    // open interval keeps both logarithms finite
    let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    -(-u.ln()).ln()
}

/// Report-noisy-max with Gumbel noise of scale 1/(n·√(2ρ)).
pub fn gumbel_select(scores: &[f64], rho: f64, n: usize, rng: &mut Rng) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if !(rho > 0.0) || n == 0 {
        return Err(Error::param("gumbel_select needs rho > 0 and n > 0"));
    }
    let scale = 1.0 / (n as f64 * (2.0 * rho).sqrt());
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, s) in scores.iter().enumerate() {
        let z = if scale > 0.0 { scale * gumbel(rng) } else { 0.0 };
        let v = s + z;
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn sigma_examples() {
        assert!((sigma_for_rho(0.5, 1.0).unwrap().sigma - 1.0).abs() < 1e-15);
        assert!((sigma_for_rho(0.125, 1.0).unwrap().sigma - 2.0).abs() < 1e-15);
        assert!((sigma_for_rho(0.5, 2.0).unwrap().sigma - 2.0).abs() < 1e-15);
        assert!(sigma_for_rho(0.0, 1.0).is_err());
        assert!(sigma_for_rho(1.0, 0.0).is_err());
        assert!(sigma_for_rho(-1.0, 1.0).is_err());
    }

    #[test]
    fn gaussian_rdp_matches_rho() {
        // α/(2σ²) with σ in sensitivity units equals αρ
        let rho = 0.37;
        let s = sigma_for_rho(rho, 1.0).unwrap().sigma;
        assert!((1.0 / (2.0 * s * s) - rho).abs() < 1e-14);
    }

    #[test]
    fn rho_to_epsilon_examples() {
        let e = rho_to_epsilon(0.1, 1e-5).unwrap();
        assert!((e - 2.2460).abs() < 5e-5, "{e}");
        let e1 = rho_to_epsilon(1.0, 1e-5).unwrap();
        let expect = 1.0 + 2.0 * (1e5f64).ln().sqrt();
        assert!((e1 - expect).abs() / expect < 1e-9);
        let tiny = rho_to_epsilon(1e-12, 1e-5).unwrap();
        assert!(tiny > 0.0 && tiny < 1e-4);
        assert!(rho_to_epsilon(0.1, 0.0).is_err());
        assert!(rho_to_epsilon(0.1, 1.0).is_err());
    }

    #[test]
    fn epsilon_to_rho_round_trip() {
        let e = rho_to_epsilon(0.1, 1e-5).unwrap();
        let r = epsilon_to_rho(e, 1e-5).unwrap();
        assert!((r - 0.1).abs() < 1e-6);
        let r1 = epsilon_to_rho(1.0, 1e-5).unwrap();
        let back = rho_to_epsilon(r1, 1e-5).unwrap();
        assert!(back <= 1.0 && back >= 1.0 - 1e-6);
        assert!(epsilon_to_rho(5.0, 1e-5).unwrap() > r1);
        assert!(epsilon_to_rho(0.0, 1e-5).is_err());
    }

    #[test]
    fn ledger_spends_and_overdraft() {
        let mut ledger = BudgetLedger::new(1.0).unwrap();
        ledger.spend(0.4, "a").unwrap();
        ledger.spend(0.6, "b").unwrap();
        assert!((ledger.rho_spent() - 1.0).abs() < 1e-15);
        let err = ledger.spend(0.01, "c").unwrap_err();
        assert!(matches!(&err, Error::Overdraft { label, .. } if label == "c"));
        assert_eq!(ledger.spends().len(), 2);
        ledger.spend(0.0, "free").unwrap();
        assert_eq!(ledger.spends().len(), 3);
        assert!(ledger.spend(f64::NAN, "nan").is_err());
    }

    #[test]
    fn ledger_report_is_cumulative() {
        let mut ledger = BudgetLedger::new(1.0).unwrap();
        ledger.spend(0.25, "x").unwrap();
        ledger.spend(0.5, "y").unwrap();
        let rep = ledger.report(1e-5).unwrap();
        assert_eq!(rep.entries.len(), 2);
        assert!((rep.entries[1].cumulative_rho - 0.75).abs() < 1e-15);
        assert!(rep.entries[1].cumulative_epsilon > rep.entries[0].cumulative_epsilon);
        assert!(rep.epsilon_spent <= rep.epsilon_total);
    }

    #[test]
    fn gaussian_perturb_is_seeded() {
        let v = vec![1.0, 2.0, 3.0];
        let s = NoiseScale::new(2.0, 1.0).unwrap();
        let a = gaussian_perturb(&v, s, &mut seeded(3));
        let b = gaussian_perturb(&v, s, &mut seeded(3));
        assert_eq!(a, b);
        let tiny = NoiseScale::new(1e-300, 1.0).unwrap();
        assert_eq!(gaussian_perturb(&v, tiny, &mut seeded(3)), v);
    }

    #[test]
    fn exponential_closed_form_weights() {
        let p = exponential_probabilities(&[0.0, 4f64.ln()], 2.0, 1.0).unwrap();
        assert!((p[0] - 0.2).abs() < 1e-12 && (p[1] - 0.8).abs() < 1e-12);
        let p = exponential_probabilities(&[3.0; 5], 1.0, 1.0).unwrap();
        assert!(p.iter().all(|x| (x - 0.2).abs() < 1e-12));
        assert!(matches!(exponential_probabilities(&[], 1.0, 1.0), Err(Error::EmptyCandidates)));
        let choice = exponential_select(&[1.0], 2.0, 1.0, &mut seeded(1)).unwrap();
        assert_eq!(choice.index, 0);
        assert!((choice.rho - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gumbel_edge_cases() {
        assert_eq!(gumbel_select(&[5.0], 0.1, 10, &mut seeded(1)).unwrap(), 0);
        assert_eq!(gumbel_select(&[0.1, 0.9, 0.3], f64::INFINITY, 10, &mut seeded(1)).unwrap(), 1);
        assert!(gumbel_select(&[], 0.1, 10, &mut seeded(1)).is_err());
    }
}
