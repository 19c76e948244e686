//! Seeded generators for the bundled benchmark datasets.

use rand::Rng as _;
use rand_distr::{Distribution, LogNormal, Zipf};

use crate::dataset::{AttributeSpec, Column, Dataset, Domain};
use crate::error::Result;
use crate::rng::seeded;

/// Keep the parent-derived value with this probability, otherwise draw uniformly.
const CHAIN_KEEP: f64 = 0.75;

fn labels(prefix: &str, k: usize) -> Vec<String> {
    (0..k).map(|i| format!("{prefix}{i}")).collect()
}

fn categorical_domain(sizes: &[usize]) -> Result<Domain> {
    Domain::new(
        sizes
            .iter()
            .enumerate()
            .map(|(j, &s)| AttributeSpec::categorical(&format!("a{j}"), labels("v", s)))
            .collect(),
    )
}

/// Markov chain over six categorical attributes: each attribute copies a
/// deterministic function of its predecessor with probability 0.75.
pub fn chain_correlated(n: usize, seed: u64) -> Result<Dataset> {
    let sizes = [4usize, 6, 5, 8, 4, 6];
    let mut rng = seeded(seed);
    let mut cols: Vec<Vec<u32>> = vec![Vec::with_capacity(n); sizes.len()];
    for _ in 0..n {
        // skewed root
        let mut prev = if rng.random_bool(0.4) { 0 } else { rng.random_range(0..sizes[0]) };
        cols[0].push(prev as u32);
        for k in 1..sizes.len() {
            let v = if rng.random_bool(CHAIN_KEEP) {
                (prev * 3 + k) % sizes[k]
            } else {
                rng.random_range(0..sizes[k])
            };
            cols[k].push(v as u32);
            prev = v;
        }
    }
    Dataset::from_codes(categorical_domain(&sizes)?, cols)
}

/// Ten attributes: seven categorical in a dependency chain and three
/// numerical ones (50 declared values on [0, 100)) driven by a categorical
/// parent.
pub fn mixed_ten(n: usize, seed: u64) -> Result<Dataset> {
    let cat_sizes = [2usize, 3, 4, 5, 8, 10, 16];
    let mut attrs: Vec<AttributeSpec> = cat_sizes
        .iter()
        .enumerate()
        .map(|(j, &s)| AttributeSpec::categorical(&format!("c{j}"), labels("v", s)))
        .collect();
    for j in 0..3 {
        attrs.push(AttributeSpec::numerical(&format!("x{j}"), 0.0, 100.0, 50));
    }
    let domain = Domain::new(attrs)?;
    let mut rng = seeded(seed);
    let mut cats: Vec<Vec<u32>> = vec![Vec::with_capacity(n); cat_sizes.len()];
    let mut nums: Vec<Vec<f64>> = vec![Vec::with_capacity(n); 3];
    for _ in 0..n {
        let mut prev = rng.random_range(0..cat_sizes[0]);
        cats[0].push(prev as u32);
        for k in 1..cat_sizes.len() {
            let v = if rng.random_bool(0.7) {
                (prev * 5 + 1) % cat_sizes[k]
            } else {
                rng.random_range(0..cat_sizes[k])
            };
            cats[k].push(v as u32);
            prev = v;
        }
        for (j, col) in nums.iter_mut().enumerate() {
            let parent = cats[2 * j + 1].last().copied().unwrap_or(0) as f64;
            let center = 10.0 + parent * 12.0;
            let x: f64 = center + rng.random_range(-15.0..15.0);
            col.push(x.clamp(0.0, 99.999).floor());
        }
    }
    let columns = cats
        .into_iter()
        .map(Column::Codes)
        .chain(nums.into_iter().map(Column::Raw))
        .collect();
    Dataset::new(domain, columns)
}

/// Name of the heavy-tailed numerical attribute in [`heavy_tailed`].
pub const HEAVY_NUMERICAL: &str = "income";
/// Name of the Zipf-distributed categorical attribute in [`heavy_tailed`].
pub const HEAVY_CATEGORICAL: &str = "category";

/// Five attributes: an integer-valued log-normal numerical attribute with
/// 10⁴ declared values, a Zipf categorical attribute with 1000 labels, and
/// three small attributes correlated with them.
pub fn heavy_tailed(n: usize, seed: u64) -> Result<Dataset> {
    let domain = Domain::new(vec![
        AttributeSpec::numerical(HEAVY_NUMERICAL, 0.0, 10_000.0, 10_000),
        AttributeSpec::categorical(HEAVY_CATEGORICAL, labels("c", 1000)),
        AttributeSpec::categorical("group", labels("g", 5)),
        AttributeSpec::categorical("flag", ["no", "yes"]),
        AttributeSpec::categorical("region", labels("r", 8)),
    ])?;
    let mut rng = seeded(seed);
    let income = LogNormal::<f64>::new(5.5, 1.0).expect("valid log-normal");
    let zipf = Zipf::<f64>::new(1000.0, 1.1).expect("valid zipf");
    let mut x = Vec::with_capacity(n);
    let mut cols: Vec<Vec<u32>> = vec![Vec::with_capacity(n); 4];
    for _ in 0..n {
        let v: f64 = income.sample(&mut rng).floor().min(9_999.0);
        x.push(v);
        let cat = zipf.sample(&mut rng) as u32 - 1;
        cols[0].push(cat);
        let group = if rng.random_bool(0.7) {
            ((v.max(1.0).ln() - 3.0).clamp(0.0, 4.0)) as u32
        } else {
            rng.random_range(0..5)
        };
        cols[1].push(group);
        let flag = u32::from(if cat < 10 { rng.random_bool(0.8) } else { rng.random_bool(0.3) });
        cols[2].push(flag);
        let region = if rng.random_bool(0.6) { group + 3 * flag } else { rng.random_range(0..8) };
        cols[3].push(region);
    }
    let columns = std::iter::once(Column::Raw(x)).chain(cols.into_iter().map(Column::Codes)).collect();
    Dataset::new(domain, columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginal::indif;

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(chain_correlated(500, 1).unwrap(), chain_correlated(500, 1).unwrap());
        assert_eq!(mixed_ten(200, 2).unwrap(), mixed_ten(200, 2).unwrap());
        assert_eq!(heavy_tailed(200, 3).unwrap(), heavy_tailed(200, 3).unwrap());
    }

    #[test]
    fn chain_neighbours_correlate_more() {
        let ds = chain_correlated(20_000, 4).unwrap();
        let near = indif(&ds, 2, 3).unwrap();
        let far = indif(&ds, 0, 5).unwrap();
        assert!(near > 2.0 * far, "{near} vs {far}");
    }

    #[test]
    fn heavy_tail_shapes() {
        let ds = heavy_tailed(20_000, 5).unwrap();
        assert_eq!(ds.domain().attribute(0).size(), 10_000);
        let Column::Raw(x) = ds.column(0) else { panic!("raw column") };
        let mut distinct: Vec<u64> = x.iter().map(|&v| v as u64).collect();
        distinct.sort_unstable();
        distinct.dedup();
        assert!(distinct.len() > 1000);
        let top = ds.codes(1).unwrap().iter().filter(|&&c| c == 0).count();
        assert!(top > ds.n() / 10);
    }
}
