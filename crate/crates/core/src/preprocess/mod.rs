//! Attribute-domain compression before marginal selection.
//!
//! Only attributes whose declared domain exceeds the gate (default 100) are
//! transformed: numerical ones are binned (equal-width or PrivTree), categorical
//! ones get private rare-category merging. Smaller numerical attributes are
//! still encoded, with one equal-width bin per declared value.

mod binning;
mod merge;

pub use binning::{
    laplace, privtree_fit, uniform_bin_fit, BinSpec, PrivTreeParams, DEFAULT_BINS, PRIVTREE_MAX_DEPTH,
    PRIVTREE_MIN_WIDTH,
};
pub use merge::{dual_threshold, rare_merge_fit, MergeMap, DEFAULT_MERGE_THETA};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::accountant::{gaussian_perturb, sigma_for_rho, BudgetLedger};
use crate::dataset::{AttributeKind, AttributeSpec, Column, Dataset, Domain, RARE_LABEL};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Attributes with a declared domain above this size are preprocessed.
pub const DEFAULT_GATE: usize = 100;

/// Share of the preprocessing budget used to measure n̂ for the default
/// PrivTree threshold.
const PRIVTREE_COUNT_SHARE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumericalMethod {
    Uniform,
    Privtree,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub numerical: NumericalMethod,
    pub bins: usize,
    pub merge_theta: f64,
    /// PrivTree split threshold; defaults to n̂/1000.
    pub privtree_theta: Option<f64>,
    pub gate: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            numerical: NumericalMethod::Uniform,
            bins: DEFAULT_BINS,
            merge_theta: DEFAULT_MERGE_THETA,
            privtree_theta: None,
            gate: DEFAULT_GATE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttributeTransform {
    Identity,
    UniformBin {
        spec: BinSpec,
    },
    PrivtreeBin {
        spec: BinSpec,
        lambda: f64,
        delta_decay: f64,
        theta: f64,
        rho: f64,
    },
    RareMerge {
        map: MergeMap,
        rho: f64,
    },
}

impl AttributeTransform {
    fn bin_spec(&self) -> Option<&BinSpec> {
        match self {
            AttributeTransform::UniformBin { spec } | AttributeTransform::PrivtreeBin { spec, .. } => Some(spec),
            _ => None,
        }
    }
}

/// Per-attribute transforms plus both domains, enough to encode raw data and
/// decode synthetic data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessArtifacts {
    pub original_domain: Domain,
    pub encoded_domain: Domain,
    pub transforms: Vec<AttributeTransform>,
    pub rho_privtree: f64,
    pub rho_merge: f64,
    pub rho_count: f64,
}

impl PreprocessArtifacts {
    /// Categorical attributes unchanged; numerical attributes get one
    /// equal-width bin per declared value.
    pub fn identity(domain: &Domain) -> Result<Self> {
        let transforms = domain
            .attributes()
            .iter()
            .map(|a| match a.kind {
                AttributeKind::Categorical { .. } => Ok(AttributeTransform::Identity),
                AttributeKind::Numerical { bounds, size } => Ok(AttributeTransform::UniformBin {
                    spec: uniform_bin_fit(&a.name, (bounds[0], bounds[1]), size)?,
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_transforms(domain.clone(), transforms, 0.0, 0.0, 0.0)
    }

    fn from_transforms(original_domain: Domain, transforms: Vec<AttributeTransform>, rho_privtree: f64, rho_merge: f64, rho_count: f64) -> Result<Self> {
        let attrs = original_domain
            .attributes()
            .iter()
            .zip(&transforms)
            .map(|(a, t)| encoded_attribute(a, t))
            .collect();
        Ok(PreprocessArtifacts {
            encoded_domain: Domain::new(attrs)?,
            original_domain,
            transforms,
            rho_privtree,
            rho_merge,
            rho_count,
        })
    }

    pub fn transform(&self, j: usize) -> &AttributeTransform {
        &self.transforms[j]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub(crate) fn check_encoded_domain(&self, domain: &Domain) -> Result<()> {
        if domain != &self.encoded_domain {
            return Err(Error::DomainMismatch(
                "dataset domain does not match the artifacts' encoded domain".into(),
            ));
        }
        Ok(())
    }

    /// Encode a dataset over the original domain (categorical codes, raw reals).
    pub fn encode(&self, dataset: &Dataset) -> Result<Dataset> {
        if dataset.domain() != &self.original_domain {
            return Err(Error::DomainMismatch(
                "dataset domain does not match the artifacts' original domain".into(),
            ));
        }
        let columns = dataset
            .columns()
            .iter()
            .zip(&self.transforms)
            .map(|(col, t)| encode_column(col, t, false))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(self.encoded_domain.clone(), columns)
    }

    /// Encode decoded output loaded against [`Self::encoded_domain`]:
    /// categorical codes are already compact, numerical midpoints are rebinned.
    pub fn encode_decoded(&self, dataset: &Dataset) -> Result<Dataset> {
        self.check_encoded_domain(dataset.domain())?;
        let columns = dataset
            .columns()
            .iter()
            .zip(&self.transforms)
            .map(|(col, t)| encode_column(col, t, true))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(self.encoded_domain.clone(), columns)
    }
}

impl AttributeTransform {
    /// String for every encoded code.
    pub fn decode_table(&self, attr: &AttributeSpec) -> Vec<String> {
        match (self, &attr.kind) {
            (AttributeTransform::Identity, AttributeKind::Categorical { labels }) => labels.clone(),
            (AttributeTransform::RareMerge { map, .. }, AttributeKind::Categorical { labels }) => {
                compact_labels(map, labels)
            }
            (t, _) => {
                let spec = t.bin_spec().expect("numerical transform");
                (0..spec.bin_count()).map(|b| spec.midpoint(b).to_string()).collect()
            }
        }
    }
}

fn compact_labels(map: &MergeMap, labels: &[String]) -> Vec<String> {
    let mut out: Vec<String> = labels
        .iter()
        .enumerate()
        .filter(|(i, _)| map.merged_codes.binary_search(&(*i as u32)).is_err())
        .map(|(_, l)| l.clone())
        .collect();
    if !map.merged_codes.is_empty() {
        out.push(RARE_LABEL.to_string());
    }
    out
}

fn encoded_attribute(attr: &AttributeSpec, t: &AttributeTransform) -> AttributeSpec {
    match (&attr.kind, t) {
        (AttributeKind::Categorical { labels }, AttributeTransform::RareMerge { map, .. }) => {
            AttributeSpec::categorical(&attr.name, compact_labels(map, labels))
        }
        (AttributeKind::Numerical { bounds, .. }, t) => {
            let spec = t.bin_spec().expect("numerical attributes are binned");
            AttributeSpec::numerical(&attr.name, bounds[0], bounds[1], spec.bin_count())
        }
        _ => attr.clone(),
    }
}

fn encode_column(col: &Column, t: &AttributeTransform, decoded: bool) -> Result<Column> {
    Ok(match (col, t) {
        (Column::Codes(c), AttributeTransform::Identity) => Column::Codes(c.clone()),
        (Column::Codes(c), AttributeTransform::RareMerge { .. }) if decoded => Column::Codes(c.clone()),
        (Column::Codes(c), AttributeTransform::RareMerge { map, .. }) => {
            Column::Codes(c.iter().map(|&x| map.remap[x as usize]).collect())
        }
        (Column::Raw(values), t) => {
            let spec = t
                .bin_spec()
                .ok_or_else(|| Error::DomainMismatch("raw column without a bin transform".into()))?;
            Column::Codes(values.iter().map(|&v| spec.bin_of(v) as u32).collect())
        }
        (Column::Codes(_), _) => {
            return Err(Error::DomainMismatch("numerical column is already encoded".into()));
        }
    })
}

/// Fit and apply preprocessing, spending at most `rho_pre` from `ledger`.
///
/// Budget is needed when a categorical attribute is above the gate, or when
/// PrivTree is requested and a numerical attribute is above the gate. It is
/// shared evenly across those attributes (after measuring n̂ when the PrivTree
/// threshold is left at its default).
pub fn apply_preprocess(dataset: &Dataset, config: &PreprocessConfig, rho_pre: f64, ledger: &mut BudgetLedger, rng: &mut Rng) -> Result<(Dataset, PreprocessArtifacts)> {
    let domain = dataset.domain();
    let big: Vec<bool> = domain.attributes().iter().map(|a| a.size() > config.gate).collect();
    let merge_attrs: Vec<usize> = (0..domain.d())
        .filter(|&j| big[j] && domain.attribute(j).is_categorical())
        .collect();
    let tree_attrs: Vec<usize> = if config.numerical == NumericalMethod::Privtree {
        (0..domain.d())
            .filter(|&j| big[j] && !domain.attribute(j).is_categorical())
            .collect()
    } else {
        Vec::new()
    };

    let needs_budget = !merge_attrs.is_empty() || !tree_attrs.is_empty();
    if needs_budget && !(rho_pre > 0.0) {
        return Err(Error::param(
            "preprocessing needs a positive budget for PrivTree or rare-category merging",
        ));
    }

    let mut rho_count = 0.0;
    let mut rest = rho_pre;
    let mut tree_theta = config.privtree_theta;
    if !tree_attrs.is_empty() && tree_theta.is_none() {
        rho_count = PRIVTREE_COUNT_SHARE * rho_pre;
        rest -= rho_count;
        let scale = sigma_for_rho(rho_count, 1.0)?;
        ledger.spend(rho_count, "preprocess count")?;
        let n_hat = gaussian_perturb(&[dataset.n() as f64], scale, rng)[0].max(1.0);
        tree_theta = Some(n_hat / 1000.0);
    }
    let parts = (merge_attrs.len() + tree_attrs.len()).max(1) as f64;
    let rho1 = rest * tree_attrs.len() as f64 / parts;
    let rho2 = rest * merge_attrs.len() as f64 / parts;

    let tree_params = if tree_attrs.is_empty() {
        None
    } else {
        Some(PrivTreeParams::new(tree_attrs.len(), rho1, tree_theta.expect("set above"))?)
    };

    let mut transforms = Vec::with_capacity(domain.d());
    for (j, attr) in domain.attributes().iter().enumerate() {
        let mut attr_rng = rng::seeded(rng.random());
        let t = match &attr.kind {
            AttributeKind::Categorical { .. } if big[j] => {
                let rho = rho2 / merge_attrs.len() as f64;
                ledger.spend(rho, format!("preprocess merge {}", attr.name))?;
                let map = rare_merge_fit(dataset, j, config.merge_theta, rho, &mut attr_rng)?;
                AttributeTransform::RareMerge { map, rho }
            }
            AttributeKind::Categorical { .. } => AttributeTransform::Identity,
            AttributeKind::Numerical { bounds, size } => {
                let bounds = (bounds[0], bounds[1]);
                match (&tree_params, big[j]) {
                    (Some(p), true) => {
                        let rho = p.rho_per_attribute();
                        ledger.spend(rho, format!("preprocess privtree {}", attr.name))?;
                        let values = match dataset.column(j) {
                            Column::Raw(v) => v,
                            Column::Codes(_) => {
                                return Err(Error::DomainMismatch(format!("`{}` already encoded", attr.name)))
                            }
                        };
                        let spec = privtree_fit(&attr.name, values, bounds, p, &mut attr_rng)?;
                        AttributeTransform::PrivtreeBin {
                            spec,
                            lambda: p.lambda,
                            delta_decay: p.delta_decay,
                            theta: p.theta,
                            rho,
                        }
                    }
                    (None, true) => AttributeTransform::UniformBin {
                        spec: uniform_bin_fit(&attr.name, bounds, config.bins)?,
                    },
                    (_, false) => AttributeTransform::UniformBin {
                        spec: uniform_bin_fit(&attr.name, bounds, *size)?,
                    },
                }
            }
        };
        transforms.push(t);
    }

    let artifacts = PreprocessArtifacts::from_transforms(domain.clone(), transforms, rho1, rho2, rho_count)?;
    let encoded = artifacts.encode(dataset)?;
    Ok((encoded, artifacts))
}
