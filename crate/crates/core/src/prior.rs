//! Priors over sparse parameters.
//!
//! [`SubsetPrior`] is the exact subset-selection prior used by the verification
//! code: pick a support `S` with probability depending only on `|S|`, then draw
//! uniformly from the l1 unit ball restricted to `S`. [`RelaxedPrior`] is the
//! coordinatewise Gaussian-slab / Laplace-spike mixture targeted by the sampler.

use std::f64::consts::{LN_2, PI};

use nalgebra::DVector;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};

/// `ln C(n, k)`, accurate to a few ulps for the sizes used here.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64 / (i + 1) as f64).ln()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetPrior {
    d: usize,
    s: usize,
}

impl SubsetPrior {
    pub fn new(d: usize, s: usize) -> Result<Self> {
        if s == 0 || s > d {
            return arg(format!("subset prior needs 1 <= s <= d, got s = {s}, d = {d}"));
        }
        Ok(Self { d, s })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn sparsity(&self) -> usize {
        self.s
    }

    /// `ln sum_{k=1}^s 2^-k`.
    fn ln_normalizer(&self) -> f64 {
        (1.0 - 0.5f64.powi(self.s as i32)).ln()
    }

    /// Log-mass of a single subset of size `k`.
    pub fn log_mass_of_size(&self, k: usize) -> Result<f64> {
        if k == 0 || k > self.s {
            return arg(format!("subset size {k} outside [1, {}]", self.s));
        }
        Ok(-(k as f64) * LN_2 - ln_binomial(self.d, k) - self.ln_normalizer())
    }

    pub fn subset_log_mass(&self, subset: &[usize]) -> Result<f64> {
        let mut sorted = subset.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != subset.len() {
            return arg("subset contains repeated indices");
        }
        if sorted.iter().any(|&j| j >= self.d) {
            return arg(format!("subset index out of range for d = {}", self.d));
        }
        self.log_mass_of_size(subset.len())
    }

    /// Draws a support, then a point uniform on the l1 unit ball over it.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let support = self.sample_support(rng);
        let mut theta = DVector::zeros(self.d);
        for (j, x) in support.iter().zip(uniform_l1_ball(support.len(), rng)) {
            theta[*j] = x;
        }
        theta
    }

    /// Draws `S ~ Pi`: size `k` with probability proportional to `2^-k`, then a
    /// uniformly random subset of that size.
    pub fn sample_support<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let total = 1.0 - 0.5f64.powi(self.s as i32);
        let u: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut k = self.s;
        for size in 1..=self.s {
            acc += 0.5f64.powi(size as i32);
            if u < acc {
                k = size;
                break;
            }
        }
        let mut support = index::sample(rng, self.d, k).into_vec();
        support.sort_unstable();
        support
    }
}

/// Uniform draw from the `k`-dimensional l1 unit ball: signed exponentials
/// normalized onto the sphere, scaled by `U^(1/k)`.
pub fn uniform_l1_ball<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    if k == 0 {
        return Vec::new();
    }
    let mut x: Vec<f64> = (0..k)
        .map(|_| {
            let e: f64 = Exp1.sample(rng);
            if rng.random::<bool>() {
                e
            } else {
                -e
            }
        })
        .collect();
    let norm: f64 = x.iter().map(|v| v.abs()).sum();
    let radius = rng.random::<f64>().powf(1.0 / k as f64);
    for v in &mut x {
        *v *= radius / norm;
    }
    x
}

/// Coordinatewise mixture `beta * N(0, rho1) + (1 - beta) * Laplace(0, rho0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelaxedPrior {
    /// Slab variance.
    pub rho1: f64,
    /// Spike scale.
    pub rho0: f64,
    /// Inclusion probability.
    pub beta: f64,
}

impl Default for RelaxedPrior {
    fn default() -> Self {
        Self { rho1: 10.0, rho0: 0.1, beta: 0.1 }
    }
}

impl RelaxedPrior {
    pub fn new(rho1: f64, rho0: f64, beta: f64) -> Result<Self> {
        let p = Self { rho1, rho0, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.rho1 > 0.0
            && self.rho0 > 0.0
            && self.beta > 0.0
            && self.beta < 1.0
            && self.rho1.is_finite()
            && self.rho0.is_finite();
        if !ok {
            return arg(format!("invalid relaxed prior {self:?}"));
        }
        Ok(())
    }

    /// Second moment of one coordinate.
    pub fn coordinate_variance(&self) -> f64 {
        self.beta * self.rho1 + (1.0 - self.beta) * 2.0 * self.rho0 * self.rho0
    }

    pub(crate) fn constants(&self) -> MixtureConsts {
        MixtureConsts {
            ln_slab: self.beta.ln() - 0.5 * (2.0 * PI * self.rho1).ln(),
            ln_spike: (1.0 - self.beta).ln() - (2.0 * self.rho0).ln(),
            inv_rho1: 1.0 / self.rho1,
            inv_rho0: 1.0 / self.rho0,
        }
    }

    pub fn log_density(&self, theta: &[f64]) -> Result<f64> {
        if theta.iter().any(|x| !x.is_finite()) {
            return arg("relaxed prior evaluated at a non-finite point");
        }
        let c = self.constants();
        Ok(theta.iter().map(|&x| c.eval(x).0).sum())
    }

    /// Derivative of [`Self::log_density`], with 0 at the spike's kink.
    pub fn log_density_subgradient(&self, theta: &[f64]) -> DVector<f64> {
        let c = self.constants();
        DVector::from_iterator(theta.len(), theta.iter().map(|&x| c.eval(x).1))
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct MixtureConsts {
    ln_slab: f64,
    ln_spike: f64,
    inv_rho1: f64,
    inv_rho0: f64,
}

impl MixtureConsts {
    /// `(ln m(x), d/dx ln m(x))` for one coordinate.
    #[inline]
    pub(crate) fn eval(&self, x: f64) -> (f64, f64) {
        let l1 = self.ln_slab - 0.5 * x * x * self.inv_rho1;
        let l0 = self.ln_spike - x.abs() * self.inv_rho0;
        let (hi, lo) = if l1 > l0 { (l1, l0) } else { (l0, l1) };
        let ln_m = hi + (lo - hi).exp().ln_1p();
        let w1 = (l1 - ln_m).exp();
        let sign = if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        };
        let grad = -w1 * x * self.inv_rho1 - (1.0 - w1) * sign * self.inv_rho0;
        (ln_m, grad)
    }
}
