//! Private rare-category merging with a dual threshold max(θ·Σb̂, 3σ).

use serde::{Deserialize, Serialize};

use crate::accountant::{gaussian_perturb, sigma_for_rho};
use crate::dataset::{AttributeKind, Dataset};
use crate::error::{Error, Result};
use crate::marginal::{compute_marginal_capped, Clique};
use crate::rng::Rng;

/// Default fixed merging threshold (fraction of the noisy total).
pub const DEFAULT_MERGE_THETA: f64 = 0.002;

/// Which original codes collapse into the shared rare code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeMap {
    pub attribute: String,
    pub original_size: usize,
    /// Sorted original codes mapped to the rare code.
    pub merged_codes: Vec<u32>,
    pub noisy_counts: Vec<f64>,
    pub sigma: f64,
    pub threshold: f64,
    /// Original code to compact code. Kept codes keep their relative order;
    /// merged codes share the last compact code.
    pub remap: Vec<u32>,
}

impl MergeMap {
    /// The reserved code, one past the original range.
    pub fn rare_code(&self) -> u32 {
        self.original_size as u32
    }

    /// Number of compact codes after merging.
    pub fn compact_size(&self) -> usize {
        let kept = self.original_size - self.merged_codes.len();
        kept + usize::from(!self.merged_codes.is_empty())
    }

    /// Apply the dual threshold to already-noised counts.
    pub fn from_noisy_counts(attribute: &str, noisy_counts: Vec<f64>, theta: f64, sigma: f64) -> Self {
        let total: f64 = noisy_counts.iter().sum();
        let threshold = dual_threshold(theta, total, sigma);
        let mut merged: Vec<u32> = (0..noisy_counts.len())
            .filter(|&i| noisy_counts[i] < threshold)
            .map(|i| i as u32)
            .collect();
        if merged.len() == noisy_counts.len() {
            // never empty the domain: keep the largest noisy count
            let keep = noisy_counts
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i as u32)
                .expect("nonempty");
            merged.retain(|&c| c != keep);
        }
        let kept = noisy_counts.len() - merged.len();
        let mut next = 0u32;
        let remap = (0..noisy_counts.len() as u32)
            .map(|c| {
                if merged.binary_search(&c).is_ok() {
                    kept as u32
                } else {
                    next += 1;
                    next - 1
                }
            })
            .collect();
        MergeMap {
            attribute: attribute.to_string(),
            original_size: noisy_counts.len(),
            merged_codes: merged,
            noisy_counts,
            sigma,
            threshold,
            remap,
        }
    }
}

/// max(θ·total, 3σ).
pub fn dual_threshold(theta: f64, noisy_total: f64, sigma: f64) -> f64 {
    (theta * noisy_total).max(3.0 * sigma)
}

/// Noisy 1-way counts of a categorical attribute at ρ = `rho_share`, then the
/// dual-threshold merge.
pub fn rare_merge_fit(dataset: &Dataset, attribute: usize, theta: f64, rho_share: f64, rng: &mut Rng) -> Result<MergeMap> {
    let spec = dataset.domain().attribute(attribute);
    if !matches!(spec.kind, AttributeKind::Categorical { .. }) {
        return Err(Error::NotCategorical(spec.name.clone()));
    }
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::param(format!("merge theta {theta} not in [0, 1)")));
    }
    let scale = sigma_for_rho(rho_share, 1.0)?;
    let clique = Clique::new(&[attribute], dataset.domain())?;
    let counts = compute_marginal_capped(dataset, &clique, usize::MAX)?.counts;
    let noisy = gaussian_perturb(&counts, scale, rng);
    Ok(MergeMap::from_noisy_counts(&spec.name, noisy, theta, scale.sigma))
}
