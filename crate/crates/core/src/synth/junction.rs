//! Junction-tree factorization of a set of marginals and root-first sampling.
//!
//! The joint is approximated by `P(C_root) · Π P(C_i \ S_i | S_i)`, with each
//! tree clique's distribution fitted by IPF from the marginals that touch it.

use std::collections::BTreeSet;

use rand::Rng as _;
use serde::Serialize;

use super::ipf::{ipf_fit, IpfConstraint, IPF_ROUNDS, IPF_TOLERANCE};
use crate::dataset::{Dataset, Domain};
use crate::error::{Error, Result};
use crate::marginal::{for_each_sub_index, project_values, Clique, Marginal};
use crate::rng::Rng;

/// Cell cap on a merged junction-tree clique.
pub const MAX_CLIQUE_CELLS: usize = 10_000_000;

/// Clique tree with the running-intersection property.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JunctionTree {
    pub cliques: Vec<Clique>,
    /// Parent of each clique; `None` for the root.
    pub parent: Vec<Option<usize>>,
    /// Intersection of each clique with its parent (empty for the root and
    /// for cliques joining a disconnected component).
    pub separators: Vec<Clique>,
    /// Clique indices with every parent before its children.
    pub order: Vec<usize>,
    pub root: usize,
}

impl JunctionTree {
    pub fn len(&self) -> usize {
        self.cliques.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cliques.is_empty()
    }

    /// Attributes covered by any clique.
    pub fn attributes(&self) -> BTreeSet<usize> {
        self.cliques.iter().flat_map(|c| c.attrs().iter().copied()).collect()
    }

    /// True when, for every attribute, the cliques holding it form a connected subtree.
    pub fn has_running_intersection(&self) -> bool {
        self.attributes().into_iter().all(|a| {
            let holders: Vec<usize> = (0..self.len()).filter(|&i| self.cliques[i].contains(a)).collect();
            // a connected subtree has exactly one member whose parent lacks `a`
            holders
                .iter()
                .filter(|&&i| self.parent[i].is_none_or(|p| !self.cliques[p].contains(a)))
                .count()
                == 1
        })
    }
}

/// Triangulate the attribute graph induced by `cliques` with min-fill
/// elimination and connect the maximal cliques by a maximum-weight spanning
/// tree on separator size.
pub fn build_junction_tree(cliques: &[Clique], cap: usize) -> Result<JunctionTree> {
    if cliques.is_empty() {
        return Err(Error::param("junction tree needs at least one clique"));
    }
    let mut size_of = std::collections::BTreeMap::new();
    for c in cliques {
        for (&a, &s) in c.attrs().iter().zip(c.sizes()) {
            size_of.insert(a, s);
        }
    }
    let vertices: Vec<usize> = size_of.keys().copied().collect();
    let pos = |a: usize| vertices.binary_search(&a).expect("vertex");
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); vertices.len()];
    for c in cliques {
        for &a in c.attrs() {
            for &b in c.attrs() {
                if a != b {
                    adj[pos(a)].insert(pos(b));
                }
            }
        }
    }

    let sizes: Vec<usize> = vertices.iter().map(|a| size_of[a]).collect();
    let mut alive = vec![true; vertices.len()];
    let mut elim_cliques: Vec<BTreeSet<usize>> = Vec::new();
    for _ in 0..vertices.len() {
        let v = (0..vertices.len())
            .filter(|&v| alive[v])
            .min_by_key(|&v| {
                let nbrs: Vec<usize> = adj[v].iter().copied().collect();
                let mut fill = 0usize;
                for (k, &x) in nbrs.iter().enumerate() {
                    for &y in &nbrs[k + 1..] {
                        if !adj[x].contains(&y) {
                            fill += 1;
                        }
                    }
                }
                let weight: u128 = nbrs.iter().map(|&x| sizes[x] as u128).product::<u128>() * sizes[v] as u128;
                (fill, weight, v)
            })
            .expect("a live vertex");
        let nbrs: Vec<usize> = adj[v].iter().copied().collect();
        for (k, &x) in nbrs.iter().enumerate() {
            for &y in &nbrs[k + 1..] {
                adj[x].insert(y);
                adj[y].insert(x);
            }
        }
        for &x in &nbrs {
            adj[x].remove(&v);
        }
        alive[v] = false;
        let mut c: BTreeSet<usize> = nbrs.into_iter().collect();
        c.insert(v);
        elim_cliques.push(c);
    }

    let mut maximal: Vec<BTreeSet<usize>> = Vec::new();
    for c in &elim_cliques {
        if !elim_cliques.iter().any(|o| o.len() > c.len() && c.is_subset(o)) && !maximal.contains(c) {
            maximal.push(c.clone());
        }
    }
    let domain_sizes: Vec<usize> = {
        let max_attr = *vertices.last().expect("nonempty");
        let mut s = vec![1; max_attr + 1];
        for (&a, &sz) in &size_of {
            s[a] = sz;
        }
        s
    };
    let mut tree_cliques: Vec<Clique> = maximal
        .iter()
        .map(|c| {
            let attrs: Vec<usize> = c.iter().map(|&v| vertices[v]).collect();
            Clique::from_sizes(&attrs, &domain_sizes)
        })
        .collect::<Result<_>>()?;
    tree_cliques.sort();
    for c in &tree_cliques {
        if c.cells_u128() > cap as u128 {
            return Err(Error::CliqueTooLarge {
                attributes: c.attrs().to_vec(),
                cells: c.cells_u128(),
                cap,
            });
        }
    }

    // Kruskal on separator size; zero-weight edges join components
    let k = tree_cliques.len();
    let mut edges: Vec<(usize, usize, usize)> = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            edges.push((tree_cliques[i].intersection(&tree_cliques[j]).len(), i, j));
        }
    }
    edges.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut uf: Vec<usize> = (0..k).collect();
    fn find(uf: &mut [usize], mut x: usize) -> usize {
        while uf[x] != x {
            uf[x] = uf[uf[x]];
            x = uf[x];
        }
        x
    }
    let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (_, i, j) in edges {
        let (ri, rj) = (find(&mut uf, i), find(&mut uf, j));
        if ri != rj {
            uf[ri] = rj;
            nbrs[i].push(j);
            nbrs[j].push(i);
        }
    }

    let root = 0;
    let mut parent = vec![None; k];
    let mut order = vec![root];
    let mut seen = vec![false; k];
    seen[root] = true;
    let mut head = 0;
    while head < order.len() {
        let u = order[head];
        head += 1;
        let mut next = nbrs[u].clone();
        next.sort_unstable();
        for v in next {
            if !seen[v] {
                seen[v] = true;
                parent[v] = Some(u);
                order.push(v);
            }
        }
    }
    let separators = (0..k)
        .map(|i| match parent[i] {
            Some(p) => tree_cliques[i].intersection(&tree_cliques[p]),
            None => tree_cliques[i].difference(&tree_cliques[i]),
        })
        .collect();
    Ok(JunctionTree {
        cliques: tree_cliques,
        parent,
        separators,
        order,
        root,
    })
}

/// Dense table over a clique.
#[derive(Clone, Debug, PartialEq)]
pub struct Factor {
    pub clique: Clique,
    pub values: Vec<f64>,
}

impl Factor {
    pub fn product(&self, other: &Factor) -> Factor {
        let union = self.clique.union(&other.clique);
        let mut values = vec![0.0; union.cells()];
        let ia = union.sub_indices(&self.clique);
        for_each_sub_index(&union, &other.clique, |cell, b| {
            values[cell] = self.values[ia[cell]] * other.values[b];
        });
        Factor { clique: union, values }
    }

    pub fn marginalize(&self, keep: &Clique) -> Factor {
        let keep = self.clique.intersection(keep);
        Factor {
            values: project_values(&self.clique, &self.values, &keep),
            clique: keep,
        }
    }
}

/// A fitted junction tree: clique distributions, row-conditional sampling
/// tables and the exact clique marginals of the sampling distribution.
#[derive(Clone, Debug)]
pub struct JunctionModel {
    pub tree: JunctionTree,
    /// Fitted distribution of each clique.
    pub clique_probs: Vec<Vec<f64>>,
    /// `P(C \ S | S)` laid out as `[sep cell][rest cell]`.
    conditionals: Vec<Vec<f64>>,
    rests: Vec<Clique>,
    /// Clique marginals implied by the root-first factorization.
    implied: Vec<Vec<f64>>,
    domain_sizes: Vec<usize>,
}

impl JunctionModel {
    /// Fit from (ideally consistent) nonnegative marginals over a domain with
    /// the given attribute sizes.
    pub fn fit(marginals: &[Marginal], domain_sizes: &[usize], cap: usize) -> Result<Self> {
        if marginals.iter().any(|m| m.counts.iter().any(|&c| c < 0.0 || !c.is_finite())) {
            return Err(Error::InvalidDistribution("junction model needs nonnegative marginals".into()));
        }
        let cliques: Vec<Clique> = marginals.iter().map(|m| m.clique.clone()).collect();
        let tree = build_junction_tree(&cliques, cap)?;
        let clique_probs: Vec<Vec<f64>> = tree
            .cliques
            .iter()
            .map(|c| {
                let constraints: Vec<IpfConstraint> = marginals
                    .iter()
                    .filter_map(|m| {
                        let sub = m.clique.intersection(c);
                        let total = m.total();
                        if sub.is_empty() || total <= 0.0 {
                            return None;
                        }
                        let target = project_values(&m.clique, &m.counts, &sub).into_iter().map(|x| x / total).collect();
                        Some(IpfConstraint { subset: sub, target })
                    })
                    .collect();
                ipf_fit(c, &constraints, IPF_ROUNDS, IPF_TOLERANCE)
            })
            .collect();

        let mut conditionals = Vec::with_capacity(tree.len());
        let mut rests = Vec::with_capacity(tree.len());
        for (i, c) in tree.cliques.iter().enumerate() {
            let sep = &tree.separators[i];
            let rest = c.difference(sep);
            let (sc, rc) = (sep.cells(), rest.cells());
            let mut table = vec![0.0; sc * rc];
            let smap = c.sub_indices(sep);
            for_each_sub_index(c, &rest, |cell, r| table[smap[cell] * rc + r] = clique_probs[i][cell]);
            let fallback = project_values(c, &clique_probs[i], &rest);
            let fb_total: f64 = fallback.iter().sum();
            for row in table.chunks_mut(rc) {
                let mass: f64 = row.iter().sum();
                if mass > 0.0 {
                    row.iter_mut().for_each(|x| *x /= mass);
                } else if fb_total > 0.0 {
                    row.iter_mut().zip(&fallback).for_each(|(x, f)| *x = f / fb_total);
                } else {
                    row.iter_mut().for_each(|x| *x = 1.0 / rc as f64);
                }
            }
            conditionals.push(table);
            rests.push(rest);
        }

        let mut implied = vec![Vec::new(); tree.len()];
        for &i in &tree.order {
            let c = &tree.cliques[i];
            let sep = &tree.separators[i];
            let rc = rests[i].cells();
            let sep_probs = match tree.parent[i] {
                Some(p) => project_values(&tree.cliques[p], &implied[p], sep),
                None => vec![1.0],
            };
            let smap = c.sub_indices(sep);
            let mut q = vec![0.0; c.cells()];
            for_each_sub_index(c, &rests[i], |cell, r| {
                let s = smap[cell];
                q[cell] = sep_probs[s] * conditionals[i][s * rc + r];
            });
            implied[i] = q;
        }

        Ok(JunctionModel {
            tree,
            clique_probs,
            conditionals,
            rests,
            implied,
            domain_sizes: domain_sizes.to_vec(),
        })
    }

    /// Exact distribution over `target` under the sampling distribution.
    /// Attributes outside every clique are uniform and independent.
    pub fn marginal_probs(&self, target: &Clique) -> Result<Vec<f64>> {
        let tree = &self.tree;
        if let Some(i) = (0..tree.len()).find(|&i| target.is_subset_of(&tree.cliques[i])) {
            return Ok(project_values(&tree.cliques[i], &self.implied[i], target));
        }
        let covered = tree.attributes();
        // ancestor closure of the first clique (in root-first order) holding each target attribute
        let mut needed = vec![false; tree.len()];
        for &a in target.attrs() {
            if let Some(&i) = tree.order.iter().find(|&&i| tree.cliques[i].contains(a)) {
                let mut cur = Some(i);
                while let Some(c) = cur {
                    if needed[c] {
                        break;
                    }
                    needed[c] = true;
                    cur = tree.parent[c];
                }
            }
        }
        let mut messages: Vec<Option<Factor>> = vec![None; tree.len()];
        let mut result: Option<Factor> = None;
        for &i in tree.order.iter().rev() {
            if !needed[i] {
                continue;
            }
            let c = &tree.cliques[i];
            let mut f = Factor {
                clique: c.clone(),
                values: if tree.parent[i].is_none() {
                    self.implied[i].clone()
                } else {
                    self.conditional_factor(i)
                },
            };
            for j in 0..tree.len() {
                if tree.parent[j] == Some(i) {
                    if let Some(m) = messages[j].take() {
                        f = f.product(&m);
                    }
                }
            }
            let keep_target = target.intersection(&f.clique);
            match tree.parent[i] {
                Some(_) => messages[i] = Some(f.marginalize(&tree.separators[i].union(&keep_target))),
                None => result = Some(f.marginalize(&keep_target)),
            }
        }
        let mut f = result.unwrap_or(Factor {
            clique: target.difference(target),
            values: vec![1.0],
        });
        for &a in target.attrs() {
            if !covered.contains(&a) {
                let s = self.domain_sizes[a];
                f = f.product(&Factor {
                    clique: Clique::from_sizes(&[a], &self.domain_sizes)?,
                    values: vec![1.0 / s as f64; s],
                });
            }
        }
        debug_assert_eq!(f.clique.attrs(), target.attrs());
        Ok(f.values)
    }

    fn conditional_factor(&self, i: usize) -> Vec<f64> {
        let c = &self.tree.cliques[i];
        let rc = self.rests[i].cells();
        let smap = c.sub_indices(&self.tree.separators[i]);
        let mut out = vec![0.0; c.cells()];
        for_each_sub_index(c, &self.rests[i], |cell, r| out[cell] = self.conditionals[i][smap[cell] * rc + r]);
        out
    }

    /// Root-first sampling of `n` records over `domain`.
    pub fn sample(&self, domain: &Domain, n: usize, rng: &mut Rng) -> Result<Dataset> {
        let d = domain.d();
        if self.domain_sizes != domain.sizes() {
            return Err(Error::DomainMismatch("model fitted on a different domain".into()));
        }
        let mut cols: Vec<Option<Vec<u32>>> = vec![None; d];
        for &i in &self.tree.order {
            let sep = &self.tree.separators[i];
            let rest = &self.rests[i];
            let rc = rest.cells();
            let cdfs: Vec<f64> = self.conditionals[i]
                .chunks(rc)
                .flat_map(|row| {
                    let mut acc = 0.0;
                    row.iter()
                        .map(|p| {
                            acc += p;
                            acc
                        })
                        .collect::<Vec<_>>()
                })
                .collect();
            let sep_strides = sep.strides();
            let sep_cols: Vec<&Vec<u32>> = sep
                .attrs()
                .iter()
                .map(|&a| cols[a].as_ref().expect("separator sampled before child"))
                .collect();
            let rest_strides = rest.strides();
            let mut new_cols: Vec<Vec<u32>> = vec![Vec::with_capacity(n); rest.len()];
            for row_idx in 0..n {
                let s: usize = sep_cols
                    .iter()
                    .zip(&sep_strides)
                    .map(|(col, st)| col[row_idx] as usize * st)
                    .sum();
                let cdf = &cdfs[s * rc..(s + 1) * rc];
                let u: f64 = rng.random::<f64>() * cdf[rc - 1];
                let r = cdf.partition_point(|&x| x <= u).min(rc - 1);
                for (k, col) in new_cols.iter_mut().enumerate() {
                    col.push(((r / rest_strides[k]) % rest.sizes()[k]) as u32);
                }
            }
            for (&a, col) in rest.attrs().iter().zip(new_cols) {
                cols[a] = Some(col);
            }
        }
        let sizes = domain.sizes();
        let columns = cols
            .into_iter()
            .enumerate()
            .map(|(a, c)| c.unwrap_or_else(|| (0..n).map(|_| rng.random_range(0..sizes[a] as u32)).collect()))
            .collect();
        Dataset::from_codes(domain.clone(), columns)
    }
}

/// Fit a junction model to `marginals` and sample `n` records.
pub fn junction_sample(marginals: &[Marginal], domain: &Domain, n: usize, rng: &mut Rng) -> Result<Dataset> {
    if marginals.is_empty() {
        return super::init_random_dataset(domain, n, rng);
    }
    JunctionModel::fit(marginals, &domain.sizes(), MAX_CLIQUE_CELLS)?.sample(domain, n, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginal::Provenance;

    fn cl(attrs: &[usize], sizes: &[usize]) -> Clique {
        Clique::from_sizes(attrs, sizes).unwrap()
    }

    #[test]
    fn single_clique_tree() {
        let t = build_junction_tree(&[cl(&[0, 1], &[2, 2])], MAX_CLIQUE_CELLS).unwrap();
        assert_eq!(t.len(), 1);
        assert!(t.separators[0].is_empty());
        assert_eq!(t.parent, vec![None]);
    }

    #[test]
    fn chain_tree_has_shared_separator() {
        let s = [2, 2, 2];
        let t = build_junction_tree(&[cl(&[0, 1], &s), cl(&[1, 2], &s)], MAX_CLIQUE_CELLS).unwrap();
        assert_eq!(t.cliques, vec![cl(&[0, 1], &s), cl(&[1, 2], &s)]);
        assert_eq!(t.separators[1].attrs(), &[1]);
        assert!(t.has_running_intersection());
    }

    #[test]
    fn triangle_merges_into_one_clique() {
        let s = [2, 2, 2];
        let t = build_junction_tree(&[cl(&[0, 1], &s), cl(&[1, 2], &s), cl(&[0, 2], &s)], MAX_CLIQUE_CELLS).unwrap();
        assert_eq!(t.cliques, vec![cl(&[0, 1, 2], &s)]);
    }

    #[test]
    fn cycle_of_four_is_triangulated() {
        let s = [3; 4];
        let plan = [cl(&[0, 1], &s), cl(&[1, 2], &s), cl(&[2, 3], &s), cl(&[0, 3], &s)];
        let t = build_junction_tree(&plan, MAX_CLIQUE_CELLS).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t.cliques.iter().all(|c| c.len() == 3));
        assert!(t.has_running_intersection());
        for p in &plan {
            assert!(t.cliques.iter().any(|c| p.is_subset_of(c)));
        }
    }

    #[test]
    fn disconnected_components_join_with_empty_separator() {
        let s = [2; 4];
        let t = build_junction_tree(&[cl(&[0, 1], &s), cl(&[2, 3], &s)], MAX_CLIQUE_CELLS).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t.separators[1].is_empty());
        assert_eq!(t.order.len(), 2);
    }

    #[test]
    fn clique_cap_reports_offender() {
        let s = [10, 10, 10];
        let err = build_junction_tree(&[cl(&[0, 1], &s), cl(&[1, 2], &s), cl(&[0, 2], &s)], 999).unwrap_err();
        match err {
            Error::CliqueTooLarge { attributes, cells, cap } => {
                assert_eq!(attributes, vec![0, 1, 2]);
                assert_eq!(cells, 1000);
                assert_eq!(cap, 999);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    fn marg(attrs: &[usize], sizes: &[usize], counts: Vec<f64>) -> Marginal {
        Marginal::new(cl(attrs, sizes), counts, Provenance::Exact).unwrap()
    }

    #[test]
    fn inference_matches_chain_product() {
        // P(A,B) and P(B,C) with A ⊥ C | B
        let s = [2, 2, 2];
        let ab = marg(&[0, 1], &s, vec![30.0, 10.0, 20.0, 40.0]);
        let bc = marg(&[1, 2], &s, vec![45.0, 5.0, 10.0, 40.0]);
        let model = JunctionModel::fit(&[ab, bc], &s, MAX_CLIQUE_CELLS).unwrap();
        let ac = model.marginal_probs(&cl(&[0, 2], &s)).unwrap();
        // brute force Σ_b P(a,b) P(c|b)
        let pab = [0.3, 0.1, 0.2, 0.4];
        let pc_b = [[0.9, 0.1], [0.2, 0.8]];
        let mut expect = [0.0; 4];
        for a in 0..2 {
            for c in 0..2 {
                for b in 0..2 {
                    expect[a * 2 + c] += pab[a * 2 + b] * pc_b[b][c];
                }
            }
        }
        for (x, e) in ac.iter().zip(expect) {
            assert!((x - e).abs() < 1e-9, "{ac:?} vs {expect:?}");
        }
        let full = model.marginal_probs(&cl(&[0, 1, 2], &s)).unwrap();
        assert!((full.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_mass_separator_row_falls_back() {
        let s = [2, 2];
        let ab = marg(&[0, 1], &s, vec![0.0, 0.0, 3.0, 7.0]);
        let model = JunctionModel::fit(&[ab], &s, MAX_CLIQUE_CELLS).unwrap();
        let dom = Domain::new(vec![
            crate::dataset::AttributeSpec::categorical("a", ["x", "y"]),
            crate::dataset::AttributeSpec::categorical("b", ["x", "y"]),
        ])
        .unwrap();
        let ds = model.sample(&dom, 100, &mut crate::rng::seeded(1)).unwrap();
        assert!(ds.codes(0).unwrap().iter().all(|&c| c == 1));
    }

    #[test]
    fn uncovered_attribute_is_uniform_in_inference() {
        let s = [2, 3];
        let a = marg(&[0], &s, vec![1.0, 3.0]);
        let model = JunctionModel::fit(&[a], &s, MAX_CLIQUE_CELLS).unwrap();
        let p = model.marginal_probs(&cl(&[0, 1], &s)).unwrap();
        let expect = [0.25 / 3.0, 0.25 / 3.0, 0.25 / 3.0, 0.25, 0.25, 0.25];
        for (x, e) in p.iter().zip(expect) {
            assert!((x - e).abs() < 1e-12);
        }
    }
}
