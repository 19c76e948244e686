//! Contingency tables over attribute cliques.
//!
//! Cells are indexed row-major over the clique's sorted attribute order (the
//! last attribute varies fastest). This module holds the histogram kernel, the
//! independence-gap score, noisy measurement, and the consistency pass that
//! reconciles overlapping noisy marginals.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::accountant::{gaussian_perturb, sigma_for_rho, BudgetLedger};
use crate::dataset::{Dataset, Domain};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Largest marginal materialised by default.
pub const MAX_MARGINAL_CELLS: usize = 250_000;

/// Round limit for [`make_consistent`].
pub const CONSISTENCY_ROUNDS: usize = 501;

/// Sorted, duplicate-free attribute set with its cell count.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Clique {
    attrs: Vec<usize>,
    sizes: Vec<usize>,
}

impl Clique {
    /// Clique over `attrs` (any order) of `domain`.
    pub fn new(attrs: &[usize], domain: &Domain) -> Result<Self> {
        let sizes = domain.sizes();
        if let Some(&bad) = attrs.iter().find(|&&a| a >= sizes.len()) {
            return Err(Error::param(format!("attribute index {bad} out of range")));
        }
        Clique::from_sizes(attrs, &sizes)
    }

    /// Clique over `attrs` given the size of every attribute in the domain.
    pub fn from_sizes(attrs: &[usize], domain_sizes: &[usize]) -> Result<Self> {
        let mut sorted = attrs.to_vec();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::param(format!("clique {attrs:?} repeats an attribute")));
        }
        let sizes = sorted.iter().map(|&a| domain_sizes[a]).collect();
        Ok(Clique { attrs: sorted, sizes })
    }

    pub fn attrs(&self) -> &[usize] {
        &self.attrs
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.attrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attrs.is_empty()
    }

    /// Product of member sizes, saturating instead of overflowing.
    pub fn cells_u128(&self) -> u128 {
        self.sizes
            .iter()
            .fold(1u128, |acc, &s| acc.saturating_mul(s as u128))
    }

    pub fn cells(&self) -> usize {
        usize::try_from(self.cells_u128()).unwrap_or(usize::MAX)
    }

    pub fn contains(&self, attr: usize) -> bool {
        self.attrs.binary_search(&attr).is_ok()
    }

    pub fn is_subset_of(&self, other: &Clique) -> bool {
        self.attrs.iter().all(|&a| other.contains(a))
    }

    pub fn intersection(&self, other: &Clique) -> Clique {
        let (attrs, sizes) = self
            .attrs
            .iter()
            .zip(&self.sizes)
            .filter(|(a, _)| other.contains(**a))
            .map(|(&a, &s)| (a, s))
            .unzip();
        Clique { attrs, sizes }
    }

    pub fn union(&self, other: &Clique) -> Clique {
        let mut pairs: Vec<(usize, usize)> = self.attrs.iter().copied().zip(self.sizes.iter().copied()).collect();
        for (&a, &s) in other.attrs.iter().zip(&other.sizes) {
            if !self.contains(a) {
                pairs.push((a, s));
            }
        }
        pairs.sort_unstable();
        let (attrs, sizes) = pairs.into_iter().unzip();
        Clique { attrs, sizes }
    }

    /// Attributes of `self` not in `other`.
    pub fn difference(&self, other: &Clique) -> Clique {
        let (attrs, sizes) = self
            .attrs
            .iter()
            .zip(&self.sizes)
            .filter(|(a, _)| !other.contains(**a))
            .map(|(&a, &s)| (a, s))
            .unzip();
        Clique { attrs, sizes }
    }

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.sizes.len()];
        for k in (0..self.sizes.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.sizes[k + 1];
        }
        strides
    }

    /// For each cell of `self`, the index of the matching cell in `sub`
    /// (which must be a subset of `self`).
    pub fn sub_indices(&self, sub: &Clique) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.cells());
        for_each_sub_index(self, sub, |_, s| out.push(s));
        out
    }

    /// Digit of `attr` within cell `index`.
    pub fn digit(&self, index: usize, attr: usize) -> usize {
        let k = self.attrs.binary_search(&attr).expect("attribute in clique");
        (index / self.strides()[k]) % self.sizes[k]
    }
}

impl std::fmt::Display for Clique {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}", self.attrs)
    }
}

/// Visit every cell of `full` with its index in the sub-clique `sub`.
pub fn for_each_sub_index(full: &Clique, sub: &Clique, mut visit: impl FnMut(usize, usize)) {
    debug_assert!(sub.is_subset_of(full));
    let sub_strides = sub.strides();
    let tstride: Vec<usize> = full
        .attrs
        .iter()
        .map(|a| match sub.attrs.binary_search(a) {
            Ok(k) => sub_strides[k],
            Err(_) => 0,
        })
        .collect();
    let sizes = &full.sizes;
    let cells = full.cells();
    let mut digits = vec![0usize; sizes.len()];
    let mut s = 0usize;
    for cell in 0..cells {
        visit(cell, s);
        let mut k = sizes.len();
        while k > 0 {
            k -= 1;
            digits[k] += 1;
            s += tstride[k];
            if digits[k] < sizes[k] {
                break;
            }
            s -= sizes[k] * tstride[k];
            digits[k] = 0;
        }
    }
}

/// Sum `values` (laid out over `full`) down to `sub`.
pub fn project_values(full: &Clique, values: &[f64], sub: &Clique) -> Vec<f64> {
    let mut out = vec![0.0; sub.cells()];
    for_each_sub_index(full, sub, |cell, s| out[s] += values[cell]);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Exact,
    Noisy { sigma: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub clique: Clique,
    pub counts: Vec<f64>,
    pub provenance: Provenance,
}

impl Marginal {
    pub fn new(clique: Clique, counts: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if counts.len() != clique.cells() {
            return Err(Error::CliqueMismatch(format!(
                "{} counts for clique {clique} with {} cells",
                counts.len(),
                clique.cells()
            )));
        }
        Ok(Marginal {
            clique,
            counts,
            provenance,
        })
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn sigma(&self) -> Option<f64> {
        match self.provenance {
            Provenance::Noisy { sigma } => Some(sigma),
            Provenance::Exact => None,
        }
    }

    pub fn project(&self, sub: &Clique) -> Result<Marginal> {
        if !sub.is_subset_of(&self.clique) {
            return Err(Error::CliqueMismatch(format!(
                "{sub} is not a subset of {}",
                self.clique
            )));
        }
        Ok(Marginal {
            clique: sub.clone(),
            counts: project_values(&self.clique, &self.counts, sub),
            provenance: self.provenance,
        })
    }

    /// Copy rescaled to sum to `total`.
    pub fn scaled_to(&self, total: f64) -> Marginal {
        let current = self.total();
        let counts = if current > 0.0 {
            self.counts.iter().map(|c| c * total / current).collect()
        } else {
            vec![total / self.counts.len() as f64; self.counts.len()]
        };
        Marginal {
            clique: self.clique.clone(),
            counts,
            provenance: self.provenance,
        }
    }
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Cell index of every record under `clique`.
pub fn record_cells(dataset: &Dataset, clique: &Clique) -> Result<Vec<usize>> {
    let mut idx = vec![0usize; dataset.n()];
    for (&attr, stride) in clique.attrs().iter().zip(clique.strides()) {
        let codes = dataset.codes(attr)?;
        for (slot, &c) in idx.iter_mut().zip(codes) {
            *slot += c as usize * stride;
        }
    }
    Ok(idx)
}

/// Exact count histogram with the default cell cap.
pub fn compute_marginal(dataset: &Dataset, clique: &Clique) -> Result<Marginal> {
    compute_marginal_capped(dataset, clique, MAX_MARGINAL_CELLS)
}

pub fn compute_marginal_capped(dataset: &Dataset, clique: &Clique, cap: usize) -> Result<Marginal> {
    let cells = clique.cells_u128();
    if cells > cap as u128 {
        return Err(Error::MarginalTooLarge {
            attributes: clique.attrs().to_vec(),
            cells,
            cap,
        });
    }
    let mut counts = vec![0.0; cells as usize];
    for c in record_cells(dataset, clique)? {
        counts[c] += 1.0;
    }
    Ok(Marginal {
        clique: clique.clone(),
        counts,
        provenance: Provenance::Exact,
    })
}

/// ℓ₁ gap between the (i, j) marginal and the outer product of its 1-way
/// marginals divided by n.
pub fn indif(dataset: &Dataset, i: usize, j: usize) -> Result<f64> {
    if i == j {
        return Err(Error::param("indif needs two distinct attributes"));
    }
    let n = dataset.n();
    if n == 0 {
        return Err(Error::param("indif on an empty dataset"));
    }
    let domain = dataset.domain();
    let pair = compute_marginal(dataset, &Clique::new(&[i, j], domain)?)?;
    let (a, b) = (i.min(j), i.max(j));
    let ma = pair.project(&Clique::new(&[a], domain)?)?.counts;
    let mb = pair.project(&Clique::new(&[b], domain)?)?.counts;
    let nb = mb.len();
    let n = n as f64;
    Ok(pair
        .counts
        .iter()
        .enumerate()
        .map(|(cell, &c)| (c - ma[cell / nb] * mb[cell % nb] / n).abs())
        .sum())
}

/// Gaussian measurement of an exact marginal at ρ = `rho_cost` (sensitivity 1).
pub fn measure_noisy(marginal: &Marginal, rho_cost: f64, ledger: &mut BudgetLedger, rng: &mut Rng) -> Result<Marginal> {
    if marginal.provenance != Provenance::Exact {
        return Err(Error::param("measure_noisy expects an exact marginal"));
    }
    let scale = sigma_for_rho(rho_cost, 1.0)?;
    ledger.spend(rho_cost, format!("measure {}", marginal.clique))?;
    Ok(Marginal {
        clique: marginal.clique.clone(),
        counts: gaussian_perturb(&marginal.counts, scale, rng),
        provenance: Provenance::Noisy { sigma: scale.sigma },
    })
}

/// Expected ℓ₁ norm of i.i.d. N(0, σ²) noise over `cell_count` cells.
pub fn expected_l1_noise(cell_count: usize, sigma: f64) -> f64 {
    cell_count as f64 * sigma * (2.0 / std::f64::consts::PI).sqrt()
}

/// Reconcile overlapping marginals.
///
/// Each round forces every total to `n_target`, then for each shared attribute
/// subset (largest first) replaces every member's projection by the
/// inverse-variance weighted average, spreading the correction uniformly over
/// the cells outside the subset. Negatives are then clamped and each marginal
/// rescaled to `n_target`. Rounds stop once all shared projections agree within
/// `1e-6 · n_target` or after [`CONSISTENCY_ROUNDS`].
pub fn make_consistent(marginals: &[Marginal], n_target: f64) -> Vec<Marginal> {
    make_consistent_with(marginals, n_target, CONSISTENCY_ROUNDS, 1e-6)
}

pub fn make_consistent_with(marginals: &[Marginal], n_target: f64, max_rounds: usize, tol: f64) -> Vec<Marginal> {
    let mut out: Vec<Marginal> = marginals.to_vec();
    if out.is_empty() {
        return out;
    }
    let subsets = shared_subsets(&out);
    let members: Vec<Vec<usize>> = subsets
        .iter()
        .map(|s| {
            (0..out.len())
                .filter(|&m| s.is_subset_of(&out[m].clique))
                .collect()
        })
        .collect();
    let sub_maps: Vec<Vec<Vec<usize>>> = subsets
        .iter()
        .zip(&members)
        .map(|(s, ms)| ms.iter().map(|&m| out[m].clique.sub_indices(s)).collect())
        .collect();
    let threshold = tol * n_target.abs().max(f64::MIN_POSITIVE);

    for _ in 0..max_rounds.max(1) {
        for m in out.iter_mut() {
            let cells = m.counts.len() as f64;
            let shift = (n_target - m.total()) / cells;
            m.counts.iter_mut().for_each(|c| *c += shift);
        }
        for ((s, ms), maps) in subsets.iter().zip(&members).zip(&sub_maps) {
            let s_cells = s.cells();
            let projections: Vec<Vec<f64>> = ms
                .iter()
                .zip(maps)
                .map(|(&m, map)| {
                    let mut p = vec![0.0; s_cells];
                    for (cell, &si) in map.iter().enumerate() {
                        p[si] += out[m].counts[cell];
                    }
                    p
                })
                .collect();
            let weights: Vec<f64> = ms
                .iter()
                .map(|&m| {
                    let sigma = out[m].sigma().unwrap_or(0.0).max(1e-9);
                    let spread = out[m].counts.len() as f64 / s_cells as f64;
                    1.0 / (sigma * sigma * spread)
                })
                .collect();
            let wsum: f64 = weights.iter().sum();
            let target: Vec<f64> = (0..s_cells)
                .map(|k| projections.iter().zip(&weights).map(|(p, w)| w * p[k]).sum::<f64>() / wsum)
                .collect();
            for ((&m, map), proj) in ms.iter().zip(maps).zip(&projections) {
                let spread = out[m].counts.len() as f64 / s_cells as f64;
                for (cell, &si) in map.iter().enumerate() {
                    out[m].counts[cell] += (target[si] - proj[si]) / spread;
                }
            }
        }
        for m in out.iter_mut() {
            m.counts.iter_mut().for_each(|c| *c = c.max(0.0));
            *m = m.scaled_to(n_target);
        }
        if max_projection_gap(&out, &subsets, &members, &sub_maps) <= threshold {
            break;
        }
    }
    out
}

/// Distinct nonempty pairwise intersections, largest first.
fn shared_subsets(marginals: &[Marginal]) -> Vec<Clique> {
    let mut set = BTreeSet::new();
    for a in 0..marginals.len() {
        for b in a + 1..marginals.len() {
            let s = marginals[a].clique.intersection(&marginals[b].clique);
            if !s.is_empty() {
                set.insert(s);
            }
        }
    }
    let mut subsets: Vec<Clique> = set.into_iter().collect();
    subsets.sort_by(|x, y| y.len().cmp(&x.len()).then_with(|| x.cmp(y)));
    subsets
}

fn max_projection_gap(out: &[Marginal], subsets: &[Clique], members: &[Vec<usize>], maps: &[Vec<Vec<usize>>]) -> f64 {
    let mut gap: f64 = 0.0;
    for ((s, ms), maps) in subsets.iter().zip(members).zip(maps) {
        let projections: Vec<Vec<f64>> = ms
            .iter()
            .zip(maps)
            .map(|(&m, map)| {
                let mut p = vec![0.0; s.cells()];
                for (cell, &si) in map.iter().enumerate() {
                    p[si] += out[m].counts[cell];
                }
                p
            })
            .collect();
        for p in &projections[1..] {
            for (x, y) in p.iter().zip(&projections[0]) {
                gap = gap.max((x - y).abs());
            }
        }
    }
    gap
}

/// Largest disagreement between any two marginals on any shared attribute subset.
pub fn consistency_gap(marginals: &[Marginal]) -> f64 {
    let subsets = shared_subsets(marginals);
    let members: Vec<Vec<usize>> = subsets
        .iter()
        .map(|s| {
            (0..marginals.len())
                .filter(|&m| s.is_subset_of(&marginals[m].clique))
                .collect()
        })
        .collect();
    let maps: Vec<Vec<Vec<usize>>> = subsets
        .iter()
        .zip(&members)
        .map(|(s, ms)| ms.iter().map(|&m| marginals[m].clique.sub_indices(s)).collect())
        .collect();
    max_projection_gap(marginals, &subsets, &members, &maps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::AttributeSpec;
    use crate::rng::seeded;

    fn binary_domain(d: usize) -> Domain {
        Domain::new(
            (0..d)
                .map(|j| AttributeSpec::categorical(&format!("a{j}"), ["0", "1"]))
                .collect(),
        )
        .unwrap()
    }

    fn correlated(n: usize) -> Dataset {
        let col: Vec<u32> = (0..n).map(|i| (i % 2) as u32).collect();
        Dataset::from_codes(binary_domain(2), vec![col.clone(), col]).unwrap()
    }

    #[test]
    fn one_way_counts() {
        let dom = Domain::new(vec![AttributeSpec::categorical("x", ["a", "b"])]).unwrap();
        let ds = Dataset::from_codes(dom.clone(), vec![vec![0, 1, 0]]).unwrap();
        let m = compute_marginal(&ds, &Clique::new(&[0], &dom).unwrap()).unwrap();
        assert_eq!(m.counts, vec![2.0, 1.0]);
        let empty = Dataset::from_codes(dom.clone(), vec![vec![]]).unwrap();
        let m = compute_marginal(&empty, &Clique::new(&[0], &dom).unwrap()).unwrap();
        assert_eq!(m.counts, vec![0.0, 0.0]);
    }

    #[test]
    fn correlated_pair_counts_and_indif() {
        let ds = correlated(100);
        let c = Clique::new(&[1, 0], ds.domain()).unwrap();
        assert_eq!(c.attrs(), &[0, 1]);
        let m = compute_marginal(&ds, &c).unwrap();
        assert_eq!(m.counts, vec![50.0, 0.0, 0.0, 50.0]);
        assert!((indif(&ds, 0, 1).unwrap() - 100.0).abs() < 1e-12);
        assert!((indif(&ds, 1, 0).unwrap() - 100.0).abs() < 1e-12);
        assert!(indif(&ds, 0, 0).is_err());
    }

    #[test]
    fn independent_pair_has_zero_indif() {
        let a: Vec<u32> = (0..100).map(|i| (i % 2) as u32).collect();
        let b: Vec<u32> = (0..100).map(|i| ((i / 2) % 2) as u32).collect();
        let ds = Dataset::from_codes(binary_domain(2), vec![a, b]).unwrap();
        assert!(indif(&ds, 0, 1).unwrap().abs() < 1e-12);
    }

    #[test]
    fn cap_and_unencoded_errors() {
        let dom = Domain::new(vec![
            AttributeSpec::categorical("x", (0..600).map(|i| i.to_string())),
            AttributeSpec::categorical("y", (0..600).map(|i| i.to_string())),
            AttributeSpec::numerical("z", 0.0, 1.0, 10),
        ])
        .unwrap();
        let ds = crate::dataset::Dataset::new(
            dom.clone(),
            vec![
                crate::dataset::Column::Codes(vec![0]),
                crate::dataset::Column::Codes(vec![0]),
                crate::dataset::Column::Raw(vec![0.5]),
            ],
        )
        .unwrap();
        let big = Clique::new(&[0, 1], &dom).unwrap();
        assert!(matches!(compute_marginal(&ds, &big), Err(Error::MarginalTooLarge { .. })));
        let raw = Clique::new(&[2], &dom).unwrap();
        assert!(matches!(compute_marginal(&ds, &raw), Err(Error::Unencoded(_))));
    }

    #[test]
    fn projection_matches_one_way() {
        let dom = Domain::new(vec![
            AttributeSpec::categorical("x", ["a", "b", "c"]),
            AttributeSpec::categorical("y", ["p", "q"]),
            AttributeSpec::categorical("z", ["u", "v", "w", "t"]),
        ])
        .unwrap();
        let mut r = seeded(5);
        use rand::Rng as _;
        let cols: Vec<Vec<u32>> = dom
            .sizes()
            .iter()
            .map(|&s| (0..200).map(|_| r.random_range(0..s as u32)).collect())
            .collect();
        let ds = Dataset::from_codes(dom.clone(), cols).unwrap();
        let full = compute_marginal(&ds, &Clique::new(&[0, 1, 2], &dom).unwrap()).unwrap();
        for sub in [vec![0], vec![1], vec![2], vec![0, 2], vec![1, 2]] {
            let c = Clique::new(&sub, &dom).unwrap();
            assert_eq!(full.project(&c).unwrap().counts, compute_marginal(&ds, &c).unwrap().counts);
        }
    }

    #[test]
    fn measure_noisy_spends_and_records_sigma() {
        let ds = correlated(10);
        let m = compute_marginal(&ds, &Clique::new(&[0], ds.domain()).unwrap()).unwrap();
        let mut ledger = BudgetLedger::new(1.0).unwrap();
        let noisy = measure_noisy(&m, 0.5, &mut ledger, &mut seeded(1)).unwrap();
        assert_eq!(noisy.provenance, Provenance::Noisy { sigma: 1.0 });
        measure_noisy(&m, 0.5, &mut ledger, &mut seeded(2)).unwrap();
        assert!((ledger.rho_spent() - 1.0).abs() < 1e-15);
        assert!(matches!(measure_noisy(&m, 0.1, &mut ledger, &mut seeded(3)), Err(Error::Overdraft { .. })));
        assert!(measure_noisy(&noisy, 0.1, &mut BudgetLedger::new(1.0).unwrap(), &mut seeded(3)).is_err());
    }

    #[test]
    fn expected_noise_examples() {
        assert!((expected_l1_noise(1, 1.0) - 0.7979).abs() < 1e-4);
        assert!((expected_l1_noise(100, 1.0) - 79.79).abs() < 1e-2);
        assert_eq!(expected_l1_noise(10, 0.0), 0.0);
    }

    fn noisy(attrs: &[usize], dom: &Domain, counts: Vec<f64>, sigma: f64) -> Marginal {
        Marginal::new(Clique::new(attrs, dom).unwrap(), counts, Provenance::Noisy { sigma }).unwrap()
    }

    #[test]
    fn consistency_single_marginal_clamps_and_rescales() {
        let dom = binary_domain(1);
        let out = make_consistent(&[noisy(&[0], &dom, vec![-2.0, 12.0], 1.0)], 10.0);
        assert_eq!(out[0].counts, vec![0.0, 10.0]);
    }

    #[test]
    fn consistency_averages_duplicates() {
        let dom = binary_domain(1);
        let a = noisy(&[0], &dom, vec![4.0, 6.0], 1.0);
        let b = noisy(&[0], &dom, vec![6.0, 4.0], 1.0);
        let out = make_consistent(&[a, b], 10.0);
        assert!((out[0].counts[0] - 5.0).abs() < 1e-9);
        assert!((out[1].counts[0] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn consistency_on_overlapping_pairs() {
        let dom = binary_domain(3);
        let ms = vec![
            noisy(&[0, 1], &dom, vec![30.0, 22.0, 18.0, 35.0], 2.0),
            noisy(&[1, 2], &dom, vec![25.0, 20.0, 15.0, 38.0], 2.0),
            noisy(&[0, 2], &dom, vec![28.0, 19.0, 12.0, 45.0], 2.0),
        ];
        let out = make_consistent(&ms, 100.0);
        assert!(consistency_gap(&out) <= 1e-6 * 100.0);
        for m in &out {
            assert!((m.total() - 100.0).abs() < 1e-9);
            assert!(m.counts.iter().all(|&c| c >= 0.0));
        }
        let again = make_consistent(&out, 100.0);
        for (x, y) in out.iter().zip(&again) {
            for (a, b) in x.counts.iter().zip(&y.counts) {
                assert!((a - b).abs() <= 1e-6 * 100.0);
            }
        }
    }

    #[test]
    fn clique_set_ops() {
        let dom = binary_domain(4);
        let a = Clique::new(&[0, 1, 2], &dom).unwrap();
        let b = Clique::new(&[2, 3], &dom).unwrap();
        assert_eq!(a.intersection(&b).attrs(), &[2]);
        assert_eq!(a.union(&b).attrs(), &[0, 1, 2, 3]);
        assert_eq!(a.difference(&b).attrs(), &[0, 1]);
        assert!(Clique::new(&[1, 1], &dom).is_err());
        assert_eq!(a.cells(), 8);
        assert_eq!(a.digit(5, 0), 1);
        assert_eq!(a.digit(5, 2), 1);
        assert_eq!(a.digit(5, 1), 0);
    }
}
