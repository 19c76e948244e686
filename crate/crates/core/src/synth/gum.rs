//! Gradual update: overwrite clique attributes of individual records until the
//! synthetic marginals line up with their targets.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Domain};
use crate::error::{Error, Result};
use crate::marginal::{l1_distance, record_cells, Marginal};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GumConfig {
    pub max_iterations: usize,
    /// Fraction of each cell's surplus moved per update, in (0, 1].
    pub step: f64,
    /// A pass improving total L1 by less than this ends the run.
    pub tolerance: f64,
}

impl Default for GumConfig {
    fn default() -> Self {
        GumConfig {
            max_iterations: 50,
            step: 1.0,
            tolerance: 0.5,
        }
    }
}

impl GumConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::param("GUM needs at least one iteration"));
        }
        if !(self.step > 0.0 && self.step <= 1.0) {
            return Err(Error::param(format!("GUM step {} not in (0, 1]", self.step)));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::param("GUM tolerance must be nonnegative"));
        }
        Ok(())
    }
}

/// Result of a GUM run with its convergence trace.
#[derive(Clone, Debug)]
pub struct GumOutcome {
    pub dataset: Dataset,
    /// Total L1 before the first pass and after every accepted pass.
    pub trace: Vec<f64>,
    /// Passes rolled back because total L1 went up.
    pub reverted: usize,
    /// Single-marginal updates that increased that marginal's L1. Always zero
    /// unless the move rule is broken.
    pub update_violations: usize,
    pub passes: usize,
}

/// Sum of L1 distances between the dataset's marginals and the targets.
pub fn total_l1(dataset: &Dataset, targets: &[Marginal]) -> Result<f64> {
    let mut total = 0.0;
    for m in targets {
        total += l1_distance(&current_counts(dataset, m)?, &m.counts);
    }
    Ok(total)
}

fn current_counts(dataset: &Dataset, m: &Marginal) -> Result<Vec<f64>> {
    let mut counts = vec![0.0; m.counts.len()];
    for c in record_cells(dataset, &m.clique)? {
        counts[c] += 1.0;
    }
    Ok(counts)
}

/// Run GUM from a uniformly random start.
pub fn gum_synthesize(targets: &[Marginal], domain: &Domain, n: usize, config: &GumConfig, rng: &mut Rng) -> Result<GumOutcome> {
    let start = super::init_random_dataset(domain, n, rng)?;
    gum_from(start, targets, config, rng)
}

/// Run GUM starting from `start`.
pub fn gum_from(start: Dataset, targets: &[Marginal], config: &GumConfig, rng: &mut Rng) -> Result<GumOutcome> {
    config.validate()?;
    if targets.iter().any(|m| m.counts.iter().any(|&c| c < 0.0 || !c.is_finite())) {
        return Err(Error::InvalidDistribution("GUM targets must be nonnegative".into()));
    }
    let mut cols: Vec<Vec<u32>> = start.code_columns()?.into_iter().map(<[u32]>::to_vec).collect();
    let domain = start.domain().clone();
    let mut current = start;
    let mut step = config.step;
    let mut best = total_l1(&current, targets)?;
    let mut trace = vec![best];
    let mut reverted = 0;
    let mut update_violations = 0;
    let mut passes = 0;
    let mut visit: Vec<usize> = (0..targets.len()).collect();

    for _ in 0..config.max_iterations {
        if best == 0.0 {
            break;
        }
        passes += 1;
        let snapshot = cols.clone();
        visit.shuffle(rng);
        for &m in &visit {
            let (before, after) = update_marginal(&mut cols, &targets[m], step, rng);
            if after > before + 1e-9 {
                update_violations += 1;
            }
        }
        let candidate = Dataset::from_codes(domain.clone(), cols.clone())?;
        let total = total_l1(&candidate, targets)?;
        if total > best {
            cols = snapshot;
            step /= 2.0;
            reverted += 1;
            continue;
        }
        let improvement = best - total;
        current = candidate;
        best = total;
        trace.push(best);
        if improvement < config.tolerance {
            break;
        }
    }
    debug_assert_eq!(update_violations, 0);
    Ok(GumOutcome {
        dataset: current,
        trace,
        reverted,
        update_violations,
        passes,
    })
}

/// Move records of surplus cells into deficit cells of one marginal.
///
/// A cell with excess `e` gives up `round(step·e)` records and a cell with
/// deficit `e` accepts up to `round(step·e)`; since neither exceeds `2e`, no
/// cell's absolute error grows. Returns the marginal's L1 before and after.
fn update_marginal(cols: &mut [Vec<u32>], target: &Marginal, step: f64, rng: &mut Rng) -> (f64, f64) {
    let clique = &target.clique;
    let strides = clique.strides();
    let n = cols.first().map_or(0, Vec::len);
    let mut cell_of = vec![0usize; n];
    for (&a, &st) in clique.attrs().iter().zip(&strides) {
        for (slot, &c) in cell_of.iter_mut().zip(&cols[a]) {
            *slot += c as usize * st;
        }
    }
    let mut counts = vec![0.0; target.counts.len()];
    for &c in &cell_of {
        counts[c] += 1.0;
    }
    let before = l1_distance(&counts, &target.counts);

    let give: Vec<usize> = counts
        .iter()
        .zip(&target.counts)
        .map(|(c, t)| if c > t { (step * (c - t)).round() as usize } else { 0 })
        .collect();
    let mut slots: Vec<usize> = counts
        .iter()
        .zip(&target.counts)
        .enumerate()
        .flat_map(|(cell, (c, t))| {
            let k = if t > c { (step * (t - c)).round() as usize } else { 0 };
            std::iter::repeat_n(cell, k)
        })
        .collect();
    let mut donors: Vec<Vec<usize>> = vec![Vec::new(); counts.len()];
    for (r, &c) in cell_of.iter().enumerate() {
        if give[c] > 0 {
            donors[c].push(r);
        }
    }
    let mut movers: Vec<usize> = Vec::new();
    for (cell, rows) in donors.iter_mut().enumerate() {
        let k = give[cell].min(rows.len());
        let (chosen, _) = rows.partial_shuffle(rng, k);
        movers.extend_from_slice(chosen);
    }
    let moves = movers.len().min(slots.len());
    if moves == 0 {
        return (before, before);
    }
    movers.shuffle(rng);
    slots.shuffle(rng);
    for (&r, &dest) in movers[..moves].iter().zip(&slots[..moves]) {
        counts[cell_of[r]] -= 1.0;
        counts[dest] += 1.0;
        for (k, &a) in clique.attrs().iter().enumerate() {
            cols[a][r] = ((dest / strides[k]) % clique.sizes()[k]) as u32;
        }
    }
    let after = l1_distance(&counts, &target.counts);
    (before, after)
}

/// Uniformly random start used by GUM and GSD.
pub(crate) fn random_codes(domain: &Domain, n: usize, rng: &mut Rng) -> Vec<Vec<u32>> {
    domain
        .sizes()
        .into_iter()
        .map(|s| (0..n).map(|_| rng.random_range(0..s as u32)).collect())
        .collect()
}
