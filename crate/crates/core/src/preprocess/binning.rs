//! Numerical discretisation: equal-width bins and PrivTree adaptive bins.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Default number of equal-width bins.
pub const DEFAULT_BINS: usize = 100;

/// Recursion guard for PrivTree.
pub const PRIVTREE_MAX_DEPTH: usize = 40;
/// Smallest PrivTree interval, as a fraction of the attribute range.
pub const PRIVTREE_MIN_WIDTH: f64 = 1e-9;

/// Sorted bin edges covering `[edges[0], edges[last]]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub attribute: String,
    pub edges: Vec<f64>,
    /// Equal-width bins; codes are computed arithmetically.
    pub uniform: bool,
}

impl BinSpec {
    pub fn bin_count(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn lower(&self) -> f64 {
        self.edges[0]
    }

    pub fn upper(&self) -> f64 {
        *self.edges.last().expect("at least two edges")
    }

    fn width(&self) -> f64 {
        (self.upper() - self.lower()) / self.bin_count() as f64
    }

    /// Bin code of `x`; the upper bound falls into the last bin.
    pub fn bin_of(&self, x: f64) -> usize {
        let last = self.bin_count() - 1;
        if self.uniform {
            let b = ((x - self.lower()) / self.width()).floor();
            if b <= 0.0 {
                0
            } else {
                (b as usize).min(last)
            }
        } else {
            let p = self.edges.partition_point(|&e| e <= x);
            p.saturating_sub(1).min(last)
        }
    }

    pub fn midpoint(&self, bin: usize) -> f64 {
        if self.uniform {
            self.lower() + (bin as f64 + 0.5) * self.width()
        } else {
            0.5 * (self.edges[bin] + self.edges[bin + 1])
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.edges.len() < 2 {
            return Err(Error::param(format!("`{}` needs at least one bin", self.attribute)));
        }
        if self.edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::param(format!("`{}` edges not strictly increasing", self.attribute)));
        }
        Ok(())
    }
}

/// Equal-width bins of width `(upper − lower)/bin_count`. Uses no privacy budget.
pub fn uniform_bin_fit(attribute: &str, bounds: (f64, f64), bin_count: usize) -> Result<BinSpec> {
    let (lo, hi) = bounds;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::param(format!("invalid bounds [{lo}, {hi}]")));
    }
    if bin_count == 0 {
        return Err(Error::param("bin_count must be at least 1"));
    }
    let h = (hi - lo) / bin_count as f64;
    let mut edges: Vec<f64> = (0..bin_count).map(|k| lo + k as f64 * h).collect();
    edges.push(hi);
    let spec = BinSpec {
        attribute: attribute.to_string(),
        edges,
        uniform: true,
    };
    spec.validate()?;
    Ok(spec)
}

/// PrivTree parameters for one batch of `n_attrs` numerical attributes sharing
/// budget `rho1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivTreeParams {
    pub beta0: usize,
    /// Split threshold, in record counts.
    pub theta: f64,
    /// Laplace scale.
    pub lambda: f64,
    /// Per-level bias subtracted from counts.
    pub delta_decay: f64,
    pub rho1: f64,
    pub n_attrs: usize,
}

impl PrivTreeParams {
    /// Branching factor 2. An infinite `rho1` yields the noiseless tree.
    pub fn new(n_attrs: usize, rho1: f64, theta: f64) -> Result<Self> {
        let beta0 = 2usize;
        if n_attrs == 0 {
            return Err(Error::param("PrivTree needs at least one attribute"));
        }
        if !(rho1 > 0.0) {
            return Err(Error::param(format!("PrivTree rho1 must be positive, got {rho1}")));
        }
        let b = beta0 as f64;
        let lambda = (2.0 * b - 1.0) / (b - 1.0) * (n_attrs as f64 / (2.0 * rho1)).sqrt();
        let params = PrivTreeParams {
            beta0,
            theta,
            lambda,
            delta_decay: lambda * b.ln(),
            rho1,
            n_attrs,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta0 < 2 {
            return Err(Error::param("beta0 must be at least 2"));
        }
        if !(self.theta > 0.0) {
            return Err(Error::param(format!("theta must be positive, got {}", self.theta)));
        }
        let b = self.beta0 as f64;
        let lambda = (2.0 * b - 1.0) / (b - 1.0) * (self.n_attrs as f64 / (2.0 * self.rho1)).sqrt();
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0);
        if !close(self.lambda, lambda) || !close(self.delta_decay, self.lambda * b.ln()) {
            return Err(Error::param("lambda/delta_decay inconsistent with rho1 and beta0"));
        }
        Ok(())
    }

    /// ρ consumed by one attribute's tree.
    pub fn rho_per_attribute(&self) -> f64 {
        self.rho1 / self.n_attrs as f64
    }
}

/// Laplace(0, scale) by inverse CDF.
pub fn laplace(scale: f64, rng: &mut Rng) -> f64 {
    if scale == 0.0 {
        return 0.0;
    }
    let u: f64 = rng.random::<f64>() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
}

/// Adaptive bins from a private recursive bisection of `bounds`.
///
/// A node at depth t holding c values gets biased count
/// b = max(c − t·δ′, θ − δ′) and is split into β₀ equal children when
/// b + Laplace(λ′) exceeds θ. Leaves become bins, left to right.
pub fn privtree_fit(attribute: &str, values: &[f64], bounds: (f64, f64), params: &PrivTreeParams, rng: &mut Rng) -> Result<BinSpec> {
    params.validate()?;
    let (lo, hi) = bounds;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::param(format!("invalid bounds [{lo}, {hi}]")));
    }
    let single = BinSpec {
        attribute: attribute.to_string(),
        edges: vec![lo, hi],
        uniform: false,
    };
    if values.is_empty() {
        return Ok(single);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let min_width = PRIVTREE_MIN_WIDTH * (hi - lo);

    let count = |a: f64, b: f64, closed: bool| -> f64 {
        let start = sorted.partition_point(|&v| v < a);
        let end = if closed {
            sorted.partition_point(|&v| v <= b)
        } else {
            sorted.partition_point(|&v| v < b)
        };
        end.saturating_sub(start) as f64
    };

    let mut edges = vec![lo];
    // explicit stack in reverse order so leaves come out left to right
    let mut stack = vec![(lo, hi, 0usize)];
    while let Some((a, b, depth)) = stack.pop() {
        let closed = b == hi;
        let c = count(a, b, closed);
        let biased = (c - depth as f64 * params.delta_decay).max(params.theta - params.delta_decay);
        let noisy = biased + laplace(params.lambda, rng);
        let child_width = (b - a) / params.beta0 as f64;
        if noisy > params.theta && depth < PRIVTREE_MAX_DEPTH && child_width >= min_width {
            for k in (0..params.beta0).rev() {
                let ca = a + k as f64 * child_width;
                let cb = if k + 1 == params.beta0 { b } else { a + (k + 1) as f64 * child_width };
                stack.push((ca, cb, depth + 1));
            }
        } else {
            edges.push(b);
        }
    }
    let spec = BinSpec {
        attribute: attribute.to_string(),
        edges,
        uniform: false,
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn uniform_examples() {
        let spec = uniform_bin_fit("v", (0.0, 10.0), 5).unwrap();
        assert_eq!(spec.bin_count(), 5);
        assert_eq!(spec.bin_of(5.0), 2);
        assert_eq!(spec.bin_of(10.0), 4);
        assert_eq!(spec.bin_of(0.0), 0);
        assert_eq!(spec.edges[0], 0.0);
        assert_eq!(*spec.edges.last().unwrap(), 10.0);
        assert!(uniform_bin_fit("v", (1.0, 1.0), 5).is_err());
        assert!(uniform_bin_fit("v", (0.0, 1.0), 0).is_err());
        assert_eq!(DEFAULT_BINS, 100);
    }

    #[test]
    fn uniform_midpoint() {
        let spec = uniform_bin_fit("v", (0.0, 10.0), 5).unwrap();
        assert_eq!(spec.midpoint(2), 5.0);
        for b in 0..5 {
            assert_eq!(spec.bin_of(spec.midpoint(b)), b);
        }
    }

    #[test]
    fn privtree_parameter_substitution() {
        let p = PrivTreeParams::new(1, 0.5, 10.0).unwrap();
        assert!((p.lambda - 3.0).abs() < 1e-12);
        assert!((p.delta_decay - 3.0 * 2f64.ln()).abs() < 1e-12);
        assert!((p.delta_decay - 2.0794).abs() < 1e-4);
        let mut bad = p.clone();
        bad.lambda = 1.0;
        assert!(bad.validate().is_err());
        let free = PrivTreeParams::new(3, f64::INFINITY, 5.0).unwrap();
        assert_eq!(free.lambda, 0.0);
    }

    #[test]
    fn privtree_infinite_theta_never_splits() {
        let p = PrivTreeParams::new(1, 0.5, f64::INFINITY).unwrap();
        let values: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let spec = privtree_fit("v", &values, (0.0, 1.0), &p, &mut seeded(1)).unwrap();
        assert_eq!(spec.bin_count(), 1);
    }

    #[test]
    fn privtree_empty_values_single_bin() {
        let p = PrivTreeParams::new(1, 0.5, 1.0).unwrap();
        let spec = privtree_fit("v", &[], (0.0, 1.0), &p, &mut seeded(1)).unwrap();
        assert_eq!(spec.edges, vec![0.0, 1.0]);
    }

    #[test]
    fn privtree_concentrated_data_uses_few_bins() {
        let mut r = seeded(11);
        let values: Vec<f64> = (0..10_000).map(|_| r.random::<f64>() * 0.01).collect();
        let p = PrivTreeParams::new(1, 0.01, 100.0).unwrap();
        let spec = privtree_fit("v", &values, (0.0, 1.0), &p, &mut seeded(3)).unwrap();
        assert!(spec.bin_count() < 100, "{} bins", spec.bin_count());
        assert!(spec.bin_count() > 1);
        // finer bins near zero
        let first = spec.edges[1] - spec.edges[0];
        let last = spec.edges[spec.bin_count()] - spec.edges[spec.bin_count() - 1];
        assert!(first < last);
        assert_eq!(spec.edges[0], 0.0);
        assert_eq!(*spec.edges.last().unwrap(), 1.0);
    }

    #[test]
    fn privtree_noiseless_splits_exactly_dense_nodes() {
        let p = PrivTreeParams::new(1, f64::INFINITY, 2.0).unwrap();
        // 4 values in [0, 0.25): root (4) splits, left half (4) splits, etc.
        let values = [0.01, 0.02, 0.03, 0.2];
        let spec = privtree_fit("v", &values, (0.0, 1.0), &p, &mut seeded(0)).unwrap();
        for w in spec.edges.windows(2) {
            let c = values.iter().filter(|&&v| v >= w[0] && v < w[1]).count();
            assert!(c <= 2, "leaf {:?} holds {c}", w);
        }
    }

    #[test]
    fn laplace_is_symmetric_with_right_scale() {
        let mut r = seeded(9);
        let draws: Vec<f64> = (0..200_000).map(|_| laplace(2.0, &mut r)).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let mean_abs = draws.iter().map(|x| x.abs()).sum::<f64>() / draws.len() as f64;
        assert!(mean.abs() < 0.03);
        assert!((mean_abs - 2.0).abs() < 0.03);
    }
}
