//! Iterative proportional fitting of a clique distribution to marginal targets.

use crate::marginal::Clique;

pub const IPF_ROUNDS: usize = 100;
pub const IPF_TOLERANCE: f64 = 1e-6;

/// Target probabilities over a subset of the fitted clique.
#[derive(Clone, Debug)]
pub struct IpfConstraint {
    pub subset: Clique,
    pub target: Vec<f64>,
}

/// Maximum-entropy distribution over `clique` matching every constraint.
///
/// Starts from the uniform distribution and cycles through the constraints,
/// rescaling cells so each projection hits its target. Stops after `rounds`
/// cycles or once every projection is within `tol` before rescaling.
pub fn ipf_fit(clique: &Clique, constraints: &[IpfConstraint], rounds: usize, tol: f64) -> Vec<f64> {
    let cells = clique.cells();
    let mut p = vec![1.0 / cells as f64; cells];
    if constraints.is_empty() {
        return p;
    }
    let maps: Vec<Vec<usize>> = constraints.iter().map(|c| clique.sub_indices(&c.subset)).collect();
    for _ in 0..rounds.max(1) {
        let mut worst: f64 = 0.0;
        for (c, map) in constraints.iter().zip(&maps) {
            let mut proj = vec![0.0; c.target.len()];
            for (cell, &s) in map.iter().enumerate() {
                proj[s] += p[cell];
            }
            for (x, t) in proj.iter().zip(&c.target) {
                worst = worst.max((x - t).abs());
            }
            let ratio: Vec<f64> = proj
                .iter()
                .zip(&c.target)
                .map(|(&x, &t)| if x > 0.0 { t / x } else { 0.0 })
                .collect();
            for (cell, &s) in map.iter().enumerate() {
                p[cell] *= ratio[s];
            }
        }
        let total: f64 = p.iter().sum();
        if total > 0.0 {
            p.iter_mut().for_each(|x| *x /= total);
        } else {
            p.iter_mut().for_each(|x| *x = 1.0 / cells as f64);
        }
        if worst <= tol {
            break;
        }
    }
    p
}
