//! Inference problems: a prior transform from the unit cube paired with a
//! log-likelihood.
//!
//! Three problems ship with the crate and are reachable by name through
//! [`ProblemSpec`]: the scaled Rosenbrock benchmark and two problems with a
//! closed-form evidence (a normalized Gaussian and a constant likelihood).
//! All priors are flat over a box.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// A prior transform and log-likelihood over `dim` parameters.
pub trait Problem: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// Maps a point of the unit cube to parameter space.
    fn prior_transform(&self, u: &[f64]) -> Vec<f64>;

    fn log_likelihood(&self, theta: &[f64]) -> f64;

    /// Exact log-evidence, for problems that have one.
    fn analytic_log_evidence(&self) -> Option<f64> {
        None
    }
}

/// Flat prior over the box `[lo, hi]^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxPrior {
    pub lo: f64,
    pub hi: f64,
}

impl BoxPrior {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::domain(format!(
                "box bounds must be finite with lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(BoxPrior { lo, hi })
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    fn map(&self, u: &[f64]) -> Vec<f64> {
        let w = self.width();
        u.iter().map(|&ui| self.lo + w * ui).collect()
    }

    pub fn inverse(&self, theta: &[f64]) -> Vec<f64> {
        let w = self.width();
        theta.iter().map(|&t| (t - self.lo) / w).collect()
    }
}

/// Component-wise `lo + (hi - lo) * u`.
pub fn box_prior_transform(u: &[f64], lo: f64, hi: f64) -> Result<Vec<f64>> {
    let prior = BoxPrior::new(lo, hi)?;
    if let Some((i, x)) = u
        .iter()
        .enumerate()
        .find(|(_, x)| !(0.0..=1.0).contains(*x))
    {
        return Err(Error::domain(format!(
            "u[{i}] = {x} lies outside the unit interval"
        )));
    }
    Ok(prior.map(u))
}

fn rosenbrock_unchecked(theta: &[f64]) -> f64 {
    let sum: f64 = theta
        .windows(2)
        .map(|w| {
            let a = w[1] - w[0] * w[0];
            let b = 1.0 - w[0];
            100.0 * a * a + b * b
        })
        .sum();
    -2.0 * sum
}

/// `-2 * sum_{i=1}^{d-1} [100 (t_{i+1} - t_i^2)^2 + (1 - t_i)^2]`.
pub fn rosenbrock_loglike(theta: &[f64]) -> Result<f64> {
    if theta.len() < 2 {
        return Err(Error::domain(format!(
            "rosenbrock needs at least 2 dimensions, got {}",
            theta.len()
        )));
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::domain("rosenbrock input has a non-finite component"));
    }
    Ok(rosenbrock_unchecked(theta))
}

fn gaussian_unchecked(theta: &[f64], sigma: f64) -> f64 {
    let d = theta.len() as f64;
    let r2: f64 = theta.iter().map(|t| t * t).sum();
    -0.5 * d * (2.0 * PI * sigma * sigma).ln() - r2 / (2.0 * sigma * sigma)
}

/// Log-density of an isotropic, zero-mean normal with standard deviation `sigma`.
pub fn gaussian_loglike(theta: &[f64], sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::domain(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    Ok(gaussian_unchecked(theta, sigma))
}

pub fn constant_loglike(_theta: &[f64], c: f64) -> f64 {
    c
}

/// `ln P(a < Z < b)` for a standard normal `Z`, accurate in the tails and
/// when the mass is close to one.
fn ln_standard_normal_mass(a: f64, b: f64) -> f64 {
    let upper = |x: f64| 0.5 * erfc(x / SQRT_2); // P(Z > x)
    if a >= 0.0 {
        (upper(a) - upper(b)).ln()
    } else if b <= 0.0 {
        (upper(-b) - upper(-a)).ln()
    } else {
        (-(upper(b) + upper(-a))).ln_1p()
    }
}

/// Exact log-evidence of the normalized Gaussian likelihood under a flat
/// box prior, including the mass truncated by the box.
pub fn gaussian_box_log_evidence(dim: usize, sigma: f64, prior: BoxPrior) -> f64 {
    let per_dim = ln_standard_normal_mass(prior.lo / sigma, prior.hi / sigma) - prior.width().ln();
    dim as f64 * per_dim
}

#[derive(Debug, Clone)]
pub struct Rosenbrock {
    dim: usize,
    prior: BoxPrior,
}

impl Rosenbrock {
    pub fn new(dim: usize, prior: BoxPrior) -> Result<Self> {
        if dim < 2 {
            return Err(Error::domain("rosenbrock needs dim >= 2"));
        }
        Ok(Rosenbrock { dim, prior })
    }
}

impl Problem for Rosenbrock {
    fn name(&self) -> &str {
        "rosenbrock"
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn prior_transform(&self, u: &[f64]) -> Vec<f64> {
        self.prior.map(u)
    }
    fn log_likelihood(&self, theta: &[f64]) -> f64 {
        rosenbrock_unchecked(theta)
    }
}

#[derive(Debug, Clone)]
pub struct Gaussian {
    dim: usize,
    sigma: f64,
    prior: BoxPrior,
}

impl Gaussian {
    pub fn new(dim: usize, sigma: f64, prior: BoxPrior) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("dim must be positive"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::domain(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        Ok(Gaussian { dim, sigma, prior })
    }
}

impl Problem for Gaussian {
    fn name(&self) -> &str {
        "gaussian"
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn prior_transform(&self, u: &[f64]) -> Vec<f64> {
        self.prior.map(u)
    }
    fn log_likelihood(&self, theta: &[f64]) -> f64 {
        gaussian_unchecked(theta, self.sigma)
    }
    fn analytic_log_evidence(&self) -> Option<f64> {
        Some(gaussian_box_log_evidence(self.dim, self.sigma, self.prior))
    }
}

#[derive(Debug, Clone)]
pub struct Constant {
    dim: usize,
    logl: f64,
    prior: BoxPrior,
}

impl Constant {
    pub fn new(dim: usize, logl: f64, prior: BoxPrior) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("dim must be positive"));
        }
        if !logl.is_finite() {
            return Err(Error::domain("constant log-likelihood must be finite"));
        }
        Ok(Constant { dim, logl, prior })
    }
}

impl Problem for Constant {
    fn name(&self) -> &str {
        "constant"
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn prior_transform(&self, u: &[f64]) -> Vec<f64> {
        self.prior.map(u)
    }
    fn log_likelihood(&self, theta: &[f64]) -> f64 {
        constant_loglike(theta, self.logl)
    }
    fn analytic_log_evidence(&self) -> Option<f64> {
        Some(self.logl)
    }
}

/// Serializable description of a registered problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ProblemSpec {
    Rosenbrock {
        dim: usize,
        lo: f64,
        hi: f64,
    },
    Gaussian {
        dim: usize,
        sigma: f64,
        lo: f64,
        hi: f64,
    },
    Constant {
        dim: usize,
        logl: f64,
        lo: f64,
        hi: f64,
    },
}

/// Optional parameters supplied alongside a problem name.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemParams {
    pub sigma: f64,
    pub const_logl: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Default for ProblemParams {
    fn default() -> Self {
        ProblemParams {
            sigma: 0.1,
            const_logl: 0.0,
            lo: -10.0,
            hi: 10.0,
        }
    }
}

type Constructor = fn(usize, &ProblemParams) -> ProblemSpec;

static REGISTRY: &[(&str, Constructor)] = &[
    ("rosenbrock", |dim, p| ProblemSpec::Rosenbrock {
        dim,
        lo: p.lo,
        hi: p.hi,
    }),
    ("gaussian", |dim, p| ProblemSpec::Gaussian {
        dim,
        sigma: p.sigma,
        lo: p.lo,
        hi: p.hi,
    }),
    ("constant", |dim, p| ProblemSpec::Constant {
        dim,
        logl: p.const_logl,
        lo: p.lo,
        hi: p.hi,
    }),
];

/// Names accepted by [`ProblemSpec::from_name`].
pub fn registered_names() -> impl Iterator<Item = &'static str> {
    REGISTRY.iter().map(|(name, _)| *name)
}

impl ProblemSpec {
    /// Looks up `name` in the registry and validates the resulting problem.
    pub fn from_name(name: &str, dim: usize, params: &ProblemParams) -> Result<Self> {
        let (_, make) = REGISTRY
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::UnknownProblem(name.to_string()))?;
        let spec = make(dim, params);
        spec.build()?;
        Ok(spec)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProblemSpec::Rosenbrock { .. } => "rosenbrock",
            ProblemSpec::Gaussian { .. } => "gaussian",
            ProblemSpec::Constant { .. } => "constant",
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            ProblemSpec::Rosenbrock { dim, .. }
            | ProblemSpec::Gaussian { dim, .. }
            | ProblemSpec::Constant { dim, .. } => dim,
        }
    }

    pub fn build(&self) -> Result<Box<dyn Problem>> {
        Ok(match *self {
            ProblemSpec::Rosenbrock { dim, lo, hi } => {
                Box::new(Rosenbrock::new(dim, BoxPrior::new(lo, hi)?)?)
            }
            ProblemSpec::Gaussian { dim, sigma, lo, hi } => {
                Box::new(Gaussian::new(dim, sigma, BoxPrior::new(lo, hi)?)?)
            }
            ProblemSpec::Constant { dim, logl, lo, hi } => {
                Box::new(Constant::new(dim, logl, BoxPrior::new(lo, hi)?)?)
            }
        })
    }
}
