//! Synthetic data generation from a set of (consistent) noisy marginals.

mod gsd;
mod gum;
mod ipf;
mod junction;

pub use gsd::{gsd_synthesize, GaConfig, GsdOutcome};
pub use gum::{gum_from, gum_synthesize, total_l1, GumConfig, GumOutcome};
pub use ipf::{ipf_fit, IpfConstraint, IPF_ROUNDS, IPF_TOLERANCE};
pub use junction::{build_junction_tree, junction_sample, Factor, JunctionModel, JunctionTree, MAX_CLIQUE_CELLS};

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Domain};
use crate::error::Result;
use crate::marginal::Marginal;
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesizerKind {
    Gum,
    Junction,
    Gsd,
}

impl std::str::FromStr for SynthesizerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gum" => Ok(SynthesizerKind::Gum),
            "junction" => Ok(SynthesizerKind::Junction),
            "gsd" => Ok(SynthesizerKind::Gsd),
            other => Err(format!("unknown synthesizer `{other}` (expected gum, junction or gsd)")),
        }
    }
}

/// Every cell independent and uniform over its attribute's codes.
pub fn init_random_dataset(domain: &Domain, n: usize, rng: &mut Rng) -> Result<Dataset> {
    Dataset::from_codes(domain.clone(), gum::random_codes(domain, n, rng))
}

/// Dispatch to the chosen synthesizer with its default or given settings.
pub fn synthesize(kind: SynthesizerKind, targets: &[Marginal], domain: &Domain, n: usize, gum: &GumConfig, ga: &GaConfig, rng: &mut Rng) -> Result<Dataset> {
    match kind {
        SynthesizerKind::Gum => Ok(gum_synthesize(targets, domain, n, gum, rng)?.dataset),
        SynthesizerKind::Junction => junction_sample(targets, domain, n, rng),
        SynthesizerKind::Gsd => Ok(gsd_synthesize(targets, domain, n, ga, rng)?.dataset),
    }
}
