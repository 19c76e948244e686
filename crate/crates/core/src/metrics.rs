//! Utility metrics: 3-way range/point query error, pairwise TVD fidelity and
//! marginal-size summaries. Also the decoded export used for downstream ML.

use std::path::Path;

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{decode_dataset, write_csv, AttributeKind, Dataset, Domain};
use crate::error::{Error, Result};
use crate::preprocess::PreprocessArtifacts;
use crate::rng::seeded;

pub const DEFAULT_QUERIES_PER_CLIQUE: usize = 5;
pub const DEFAULT_MAX_QUERY_CLIQUES: usize = 2000;

/// Condition on one attribute's codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Condition {
    Point { code: u32 },
    /// Inclusive code range.
    Range { lo: u32, hi: u32 },
}

impl Condition {
    pub fn matches(&self, code: u32) -> bool {
        match *self {
            Condition::Point { code: c } => code == c,
            Condition::Range { lo, hi } => lo <= code && code <= hi,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub attrs: Vec<usize>,
    pub conditions: Vec<Condition>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryWorkload {
    pub queries: Vec<Query>,
    pub per_clique: usize,
    pub seed: u64,
}

fn combinations(d: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, d: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..d {
            cur.push(i);
            rec(i + 1, d, k, cur, out);
            cur.pop();
        }
    }
    rec(0, d, k, &mut cur, &mut out);
    out
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

impl QueryWorkload {
    /// `per_clique` random queries on every 3-attribute clique, or on
    /// `max_cliques` distinct random cliques when there are more. Domains
    /// with fewer than three attributes use a single clique of all of them.
    pub fn generate(domain: &Domain, per_clique: usize, max_cliques: usize, seed: u64) -> Result<Self> {
        if per_clique == 0 || max_cliques == 0 {
            return Err(Error::param("workload needs at least one clique and one query per clique"));
        }
        let d = domain.d();
        let k = d.min(3);
        if k == 0 {
            return Err(Error::param("workload over an empty domain"));
        }
        let mut rng = seeded(seed);
        let cliques: Vec<Vec<usize>> = if binomial(d, k) <= max_cliques as u128 {
            combinations(d, k)
        } else {
            let mut set = std::collections::BTreeSet::new();
            while set.len() < max_cliques {
                let mut c: Vec<usize> = sample(&mut rng, d, k).into_vec();
                c.sort_unstable();
                set.insert(c);
            }
            set.into_iter().collect()
        };
        let mut queries = Vec::with_capacity(cliques.len() * per_clique);
        for attrs in cliques {
            for _ in 0..per_clique {
                let conditions = attrs
                    .iter()
                    .map(|&a| {
                        let spec = domain.attribute(a);
                        let size = spec.size() as u32;
                        match spec.kind {
                            AttributeKind::Categorical { .. } => Condition::Point {
                                code: rng.random_range(0..size),
                            },
                            AttributeKind::Numerical { .. } => {
                                let x = rng.random_range(0..size);
                                let y = rng.random_range(0..size);
                                Condition::Range { lo: x.min(y), hi: x.max(y) }
                            }
                        }
                    })
                    .collect();
                queries.push(Query {
                    attrs: attrs.clone(),
                    conditions,
                });
            }
        }
        Ok(QueryWorkload {
            queries,
            per_clique,
            seed,
        })
    }

    pub fn validate(&self, domain: &Domain) -> Result<()> {
        for q in &self.queries {
            if q.attrs.len() != q.conditions.len() {
                return Err(Error::param("query arity mismatch"));
            }
            for (&a, c) in q.attrs.iter().zip(&q.conditions) {
                if a >= domain.d() {
                    return Err(Error::param(format!("query attribute {a} out of range")));
                }
                let size = domain.attribute(a).size() as u32;
                let ok = match *c {
                    Condition::Point { code } => code < size,
                    Condition::Range { lo, hi } => lo <= hi && hi < size,
                };
                if !ok {
                    return Err(Error::param(format!("condition {c:?} invalid for attribute {a}")));
                }
            }
        }
        Ok(())
    }
}

fn check_same_domain(a: &Dataset, b: &Dataset) -> Result<()> {
    if a.domain() != b.domain() {
        return Err(Error::DomainMismatch("metric inputs have different domains".into()));
    }
    Ok(())
}

/// Fraction of records matching `query`.
pub fn answer(dataset: &Dataset, query: &Query) -> Result<f64> {
    let cols: Vec<&[u32]> = query.attrs.iter().map(|&a| dataset.codes(a)).collect::<Result<_>>()?;
    let mut count = 0u64;
    for r in 0..dataset.n() {
        if cols.iter().zip(&query.conditions).all(|(col, c)| c.matches(col[r])) {
            count += 1;
        }
    }
    Ok(if dataset.n() == 0 { 0.0 } else { count as f64 / dataset.n() as f64 })
}

/// Mean absolute difference of query answers between `syn` and `test`.
pub fn query_error(syn: &Dataset, test: &Dataset, workload: &QueryWorkload) -> Result<f64> {
    check_same_domain(syn, test)?;
    workload.validate(syn.domain())?;
    if workload.queries.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for q in &workload.queries {
        total += (answer(syn, q)? - answer(test, q)?).abs();
    }
    Ok(total / workload.queries.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvdReport {
    /// Mean over attribute pairs of ½‖f_syn − f_test‖₁.
    pub mean: f64,
    /// The same per-pair values summed.
    pub sum: f64,
    pub pairs: usize,
}

/// Half ℓ₁ distance between the (i, j) frequency tables of `a` and `b`.
pub fn pair_tvd(a: &Dataset, b: &Dataset, i: usize, j: usize) -> Result<f64> {
    let sj = a.domain().attribute(j).size();
    let cells = |ds: &Dataset| -> Result<Vec<usize>> {
        let (ci, cj) = (ds.codes(i)?, ds.codes(j)?);
        let mut v: Vec<usize> = ci.iter().zip(cj).map(|(&x, &y)| x as usize * sj + y as usize).collect();
        v.sort_unstable();
        Ok(v)
    };
    let (ca, cb) = (cells(a)?, cells(b)?);
    let (na, nb) = (a.n() as f64, b.n() as f64);
    // merge walk over occupied cells in ascending order
    let (mut x, mut y) = (0, 0);
    let mut sum = 0.0;
    while x < ca.len() || y < cb.len() {
        let cell = match (ca.get(x), cb.get(y)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => unreachable!(),
        };
        let mut ka = 0u64;
        while x < ca.len() && ca[x] == cell {
            ka += 1;
            x += 1;
        }
        let mut kb = 0u64;
        while y < cb.len() && cb[y] == cell {
            kb += 1;
            y += 1;
        }
        sum += (ka as f64 / na - kb as f64 / nb).abs();
    }
    Ok(0.5 * sum)
}

/// Pairwise TVD fidelity, averaged over all attribute pairs.
pub fn fidelity_tvd(syn: &Dataset, test: &Dataset) -> Result<TvdReport> {
    check_same_domain(syn, test)?;
    if syn.n() == 0 || test.n() == 0 {
        return Err(Error::param("fidelity needs nonempty datasets"));
    }
    let d = syn.d();
    if d < 2 {
        return Err(Error::param("fidelity needs at least two attributes"));
    }
    let mut sum = 0.0;
    let mut pairs = 0;
    for i in 0..d {
        for j in i + 1..d {
            sum += pair_tvd(syn, test, i, j)?;
            pairs += 1;
        }
    }
    Ok(TvdReport {
        mean: sum / pairs as f64,
        sum,
        pairs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalSizeReport {
    pub attribute_sizes: Vec<usize>,
    pub min_domain: usize,
    pub max_domain: usize,
    /// Cell count of every attribute pair, in (i, j) order.
    pub pair_cells: Vec<u128>,
    pub mean_pair_cells: f64,
    pub min_pair_cells: u128,
    pub max_pair_cells: u128,
}

pub fn marginal_size_report(domain: &Domain) -> MarginalSizeReport {
    let sizes = domain.sizes();
    let mut pair_cells = Vec::new();
    for i in 0..sizes.len() {
        for j in i + 1..sizes.len() {
            pair_cells.push(sizes[i] as u128 * sizes[j] as u128);
        }
    }
    let mean = if pair_cells.is_empty() {
        0.0
    } else {
        pair_cells.iter().map(|&c| c as f64).sum::<f64>() / pair_cells.len() as f64
    };
    MarginalSizeReport {
        min_domain: sizes.iter().copied().min().unwrap_or(0),
        max_domain: sizes.iter().copied().max().unwrap_or(0),
        min_pair_cells: pair_cells.iter().copied().min().unwrap_or(0),
        max_pair_cells: pair_cells.iter().copied().max().unwrap_or(0),
        mean_pair_cells: mean,
        pair_cells,
        attribute_sizes: sizes,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlManifest {
    pub label: String,
    pub train: String,
    pub test: String,
    pub columns: Vec<String>,
    pub train_rows: usize,
    pub test_rows: usize,
}

/// Write decoded synthetic (train) and test CSVs plus a manifest naming the
/// label column. Both datasets must be over the artifacts' encoded domain.
pub fn export_for_ml(syn: &Dataset, test: &Dataset, artifacts: &PreprocessArtifacts, label: &str, destination: &Path) -> Result<MlManifest> {
    check_same_domain(syn, test)?;
    if artifacts.encoded_domain.index_of(label).is_none() {
        return Err(Error::MissingColumn(label.to_string()));
    }
    std::fs::create_dir_all(destination)?;
    let header: Vec<String> = artifacts.encoded_domain.attributes().iter().map(|a| a.name.clone()).collect();
    let write = |ds: &Dataset, name: &str| -> Result<()> {
        let rows = decode_dataset(ds, artifacts)?;
        write_csv(std::fs::File::create(destination.join(name))?, &header, &rows)
    };
    write(syn, "train.csv")?;
    write(test, "test.csv")?;
    let manifest = MlManifest {
        label: label.to_string(),
        train: "train.csv".into(),
        test: "test.csv".into(),
        columns: header,
        train_rows: syn.n(),
        test_rows: test.n(),
    };
    std::fs::write(destination.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::AttributeSpec;

    fn binary(d: usize) -> Domain {
        Domain::new((0..d).map(|j| AttributeSpec::categorical(&format!("a{j}"), ["0", "1"])).collect()).unwrap()
    }

    #[test]
    fn tvd_examples() {
        let dom = binary(2);
        let a = Dataset::from_codes(dom.clone(), vec![vec![0, 1, 0, 1], vec![0, 0, 1, 1]]).unwrap();
        assert_eq!(fidelity_tvd(&a, &a).unwrap().mean, 0.0);
        let b = Dataset::from_codes(dom.clone(), vec![vec![0, 0, 1, 1], vec![0, 0, 1, 1]]).unwrap();
        // a has one record per cell, b has half its mass on (0,0) and (1,1)
        assert!((fidelity_tvd(&a, &b).unwrap().mean - 0.5).abs() < 1e-15);
        let c = Dataset::from_codes(dom.clone(), vec![vec![1; 4], vec![1; 4]]).unwrap();
        let z = Dataset::from_codes(dom, vec![vec![0; 3], vec![0; 3]]).unwrap();
        assert_eq!(fidelity_tvd(&c, &z).unwrap().mean, 1.0);
    }

    #[test]
    fn query_point_mass_closed_form() {
        let dom = binary(3);
        let all: Vec<Vec<u32>> = (0..3).map(|j| (0..8).map(|i| ((i >> j) & 1) as u32).collect()).collect();
        let uniform = Dataset::from_codes(dom.clone(), all).unwrap();
        let point = Dataset::from_codes(dom.clone(), vec![vec![1; 5]; 3]).unwrap();
        let w = QueryWorkload {
            queries: vec![Query {
                attrs: vec![0, 1, 2],
                conditions: vec![Condition::Point { code: 1 }; 3],
            }],
            per_clique: 1,
            seed: 0,
        };
        let e = query_error(&uniform, &point, &w).unwrap();
        assert!((e - (1.0 - 1.0 / 8.0)).abs() < 1e-15);
        assert_eq!(query_error(&point, &point, &w).unwrap(), 0.0);
    }

    #[test]
    fn workload_shape() {
        let mut attrs: Vec<AttributeSpec> = (0..5).map(|j| AttributeSpec::categorical(&format!("c{j}"), ["x", "y", "z"])).collect();
        attrs.push(AttributeSpec::numerical("v", 0.0, 1.0, 10));
        let dom = Domain::new(attrs).unwrap();
        let w = QueryWorkload::generate(&dom, 5, 2000, 7).unwrap();
        assert_eq!(w.queries.len(), 20 * 5);
        w.validate(&dom).unwrap();
        let capped = QueryWorkload::generate(&dom, 2, 7, 7).unwrap();
        assert_eq!(capped.queries.len(), 14);
        assert!(w.queries.iter().any(|q| q.conditions.iter().any(|c| matches!(c, Condition::Range { .. }))));
        assert_eq!(QueryWorkload::generate(&dom, 5, 2000, 7).unwrap(), w);
    }

    #[test]
    fn size_report() {
        let dom = Domain::new(vec![
            AttributeSpec::categorical("a", (0..10).map(|i| i.to_string())),
            AttributeSpec::categorical("b", (0..20).map(|i| i.to_string())),
        ])
        .unwrap();
        let r = marginal_size_report(&dom);
        assert_eq!(r.pair_cells, vec![200]);
        assert_eq!((r.min_domain, r.max_domain), (10, 20));
        assert_eq!((r.min_pair_cells, r.max_pair_cells), (200, 200));
    }

    #[test]
    fn mismatched_domains_rejected() {
        let a = Dataset::from_codes(binary(2), vec![vec![0], vec![0]]).unwrap();
        let b = Dataset::from_codes(binary(3), vec![vec![0], vec![0], vec![0]]).unwrap();
        assert!(matches!(fidelity_tvd(&a, &b), Err(Error::DomainMismatch(_))));
    }
}
