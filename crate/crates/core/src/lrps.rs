//! Likelihood-restricted prior sampling by random-walk Metropolis in the
//! unit cube.
//!
//! A walk starts at a randomly chosen live point and makes exactly `M`
//! Gaussian proposals shaped by the live-set covariance. Components that
//! leave the cube are reflected back. Under a flat prior the Metropolis
//! ratio is one inside the constraint, so a proposal is accepted iff its
//! likelihood exceeds the threshold. The step scale follows a
//! Robbins-Monro update toward 23.4% acceptance whose gain decays with the
//! number of walks made.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point::Point;
use crate::problems::Problem;

pub const TARGET_ACCEPT: f64 = 0.234;
pub const DEFAULT_GAMMA0: f64 = 1.0;
pub const DEFAULT_KAPPA: f64 = 0.5;
pub const SCALE_MIN: f64 = 1e-8;
pub const SCALE_MAX: f64 = 10.0;
/// Diagonal regularization added before factorizing the covariance.
pub const COV_JITTER: f64 = 1e-10;
pub const DEFAULT_HISTORY: usize = 256;
/// Walks attempted per replacement before giving up (each retry halves the scale).
pub const DEFAULT_MAX_ATTEMPTS: usize = 12;

/// Lower-triangular factor `L` of the proposal covariance, `L L^T = C`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovFactor {
    lower: DMatrix<f64>,
}

impl CovFactor {
    pub fn identity(dim: usize) -> Self {
        CovFactor {
            lower: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// `L L^T`.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.lower * self.lower.transpose()
    }

    fn apply(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.lower * z
    }
}

fn sample_covariance(live: &[Point]) -> Result<DMatrix<f64>> {
    if live.len() < 2 {
        return Err(Error::domain(format!(
            "covariance needs at least 2 points, got {}",
            live.len()
        )));
    }
    let d = live[0].u.len();
    let n = live.len() as f64;
    let mut mean = DVector::<f64>::zeros(d);
    for p in live {
        mean += DVector::from_column_slice(&p.u);
    }
    mean /= n;
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for p in live {
        let r = DVector::from_column_slice(&p.u) - &mean;
        cov += &r * r.transpose();
    }
    Ok(cov / (n - 1.0))
}

/// Adds the diagonal jitter and factorizes, falling back to the diagonal
/// of variances when the factorization fails.
fn factorize(mut cov: DMatrix<f64>) -> CovFactor {
    let d = cov.nrows();
    let variances: Vec<f64> = (0..d).map(|i| cov[(i, i)]).collect();
    for i in 0..d {
        cov[(i, i)] += COV_JITTER;
    }
    match cov.cholesky() {
        Some(ch) => CovFactor { lower: ch.l() },
        None => {
            log::debug!("live covariance not positive definite; using its diagonal");
            let diag = DVector::from_iterator(
                d,
                variances.iter().map(|v| (v.max(0.0) + COV_JITTER).sqrt()),
            );
            CovFactor {
                lower: DMatrix::from_diagonal(&diag),
            }
        }
    }
}

/// Bessel-corrected sample covariance of the live points' unit-cube
/// coordinates, regularized and factorized. Falls back to the diagonal of
/// per-coordinate variances if the factorization fails.
pub fn live_covariance(live: &[Point]) -> Result<CovFactor> {
    Ok(factorize(sample_covariance(live)?))
}

/// Proposal shape used by the walks: the live covariance with its
/// off-diagonal entries scaled by `(n-1) / (n-1+d)`.
///
/// With `n - 1 <= d` live points the sample covariance is singular and a
/// walk shaped by it cannot leave the affine hull of the live set. The
/// shrinkage keeps the shape full rank and fades as the live set grows.
pub fn proposal_shape(live: &[Point]) -> Result<CovFactor> {
    let mut cov = sample_covariance(live)?;
    let d = cov.nrows();
    let dof = live.len() as f64 - 1.0;
    let keep = dof / (dof + d as f64);
    for i in 0..d {
        for j in 0..d {
            if i != j {
                cov[(i, j)] *= keep;
            }
        }
    }
    Ok(factorize(cov))
}

/// Adaptive proposal state, carried across walks and outer iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalState {
    pub scale: f64,
    pub cov_chol: CovFactor,
    /// Most recent `(scale, accepted_fraction)` pairs, oldest first.
    pub accept_history: VecDeque<(f64, f64)>,
    pub history_capacity: usize,
    pub target_accept: f64,
    pub gamma0: f64,
    pub kappa: f64,
    /// Fresh walks made so far in the whole process.
    pub call_index: u64,
}

impl ProposalState {
    /// Cold start: scale `2.38 / sqrt(d)`, identity shape.
    pub fn new(dim: usize, gamma0: f64, kappa: f64) -> Self {
        ProposalState {
            scale: 2.38 / (dim as f64).sqrt(),
            cov_chol: CovFactor::identity(dim),
            accept_history: VecDeque::new(),
            history_capacity: DEFAULT_HISTORY,
            target_accept: TARGET_ACCEPT,
            gamma0,
            kappa,
            call_index: 0,
        }
    }

    /// Gain of the `call_index`-th update, `gamma0 / call_index^kappa`.
    pub fn gain(&self, call_index: u64) -> f64 {
        self.gamma0 / (call_index.max(1) as f64).powf(self.kappa)
    }

    /// Multiplicative Robbins-Monro step toward the target acceptance rate.
    pub fn adapt_scale(&mut self, latest: &WalkResult, call_index: u64) {
        let frac = latest.accepted_fraction();
        if self.accept_history.len() == self.history_capacity {
            self.accept_history.pop_front();
        }
        self.accept_history.push_back((self.scale, frac));
        let step = self.gain(call_index) * (frac - self.target_accept);
        self.scale = (self.scale * step.exp()).clamp(SCALE_MIN, SCALE_MAX);
    }

    /// Mean accepted fraction over the stored history.
    pub fn recent_acceptance(&self) -> Option<f64> {
        if self.accept_history.is_empty() {
            return None;
        }
        let n = self.accept_history.len() as f64;
        Some(self.accept_history.iter().map(|(_, f)| f).sum::<f64>() / n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkResult {
    pub point: Point,
    pub n_accepted: u64,
    pub n_proposed: u64,
    pub chain_start_id: u64,
}

impl WalkResult {
    pub fn accepted_fraction(&self) -> f64 {
        if self.n_proposed == 0 {
            0.0
        } else {
            self.n_accepted as f64 / self.n_proposed as f64
        }
    }
}

/// Folds `x` into `[0, 1]` by repeated reflection at the faces.
#[inline]
pub fn reflect_unit(x: f64) -> f64 {
    let y = x.rem_euclid(2.0);
    if y > 1.0 {
        2.0 - y
    } else {
        y
    }
}

/// Makes exactly `m` proposals from `seed`, returning the final chain
/// position. A move is accepted iff its log-likelihood exceeds `l_min`.
///
/// If the seed itself sits on the threshold (only possible on a likelihood
/// plateau) the constraint becomes `logl >= l_min`.
pub fn mcmc_walk<R: Rng + ?Sized>(
    seed: &Point,
    l_min: f64,
    m: usize,
    prop: &ProposalState,
    problem: &dyn Problem,
    rng: &mut R,
) -> Result<WalkResult> {
    if m == 0 {
        return Err(Error::domain("walk length M must be at least 1"));
    }
    if seed.logl < l_min || seed.logl.is_nan() {
        return Err(Error::domain(format!(
            "seed log-likelihood {} is below the threshold {l_min}",
            seed.logl
        )));
    }
    let inclusive = seed.logl == l_min;
    let d = seed.u.len();
    let mut current = seed.clone();
    let mut n_accepted = 0;
    for _ in 0..m {
        let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let step = prop.cov_chol.apply(&z);
        let u: Vec<f64> = current
            .u
            .iter()
            .zip(step.iter())
            .map(|(x, dx)| reflect_unit(x + prop.scale * dx))
            .collect();
        let theta = problem.prior_transform(&u);
        let logl = problem.log_likelihood(&theta);
        if logl.is_nan() {
            return Err(Error::NanLikelihood { theta });
        }
        if logl > l_min || (inclusive && logl == l_min) {
            current = Point {
                u,
                theta,
                logl,
                origin_id: seed.origin_id,
            };
            n_accepted += 1;
        }
    }
    Ok(WalkResult {
        point: current,
        n_accepted,
        n_proposed: m as u64,
        chain_start_id: seed.origin_id,
    })
}

/// Uniform choice among `live`. The caller removes the point being
/// replaced beforehand, so every candidate lies above the threshold.
pub fn choose_seed<'a, R: Rng + ?Sized>(live: &'a [Point], rng: &mut R) -> &'a Point {
    assert!(!live.is_empty(), "choose_seed on an empty live set");
    &live[rng.random_range(0..live.len())]
}

/// Constrained-prior sampler used by the nested-sampling loop: seed
/// choice, covariance refresh, retries and adaptation around [`mcmc_walk`].
#[derive(Debug, Clone)]
pub struct Lrps<R> {
    pub proposal: ProposalState,
    m_steps: usize,
    max_attempts: usize,
    refresh_interval: u64,
    calls_in_run: u64,
    rng: R,
    accept_fractions: Vec<f64>,
}

/// A replacement produced by [`Lrps::sample`].
#[derive(Debug, Clone)]
pub struct Sampled {
    pub walk: WalkResult,
    pub n_like_evals: u64,
}

impl<R: Rng> Lrps<R> {
    pub fn new(proposal: ProposalState, m_steps: usize, rng: R) -> Self {
        Lrps {
            proposal,
            m_steps,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            refresh_interval: 1,
            calls_in_run: 0,
            rng,
            accept_fractions: Vec::new(),
        }
    }

    pub fn m_steps(&self) -> usize {
        self.m_steps
    }

    pub fn with_max_attempts(mut self, n: usize) -> Self {
        self.max_attempts = n.max(1);
        self
    }

    /// Prepares for a run with `k` live points: the covariance is refreshed
    /// on the first call and then every `k` calls.
    pub fn begin_run(&mut self, k: usize, rng: R) {
        self.rng = rng;
        self.refresh_interval = k.max(1) as u64;
        self.calls_in_run = 0;
        self.accept_fractions.clear();
    }

    /// Accepted fraction of every walk made since [`Lrps::begin_run`].
    pub fn accept_fractions(&self) -> &[f64] {
        &self.accept_fractions
    }

    pub fn take_accept_fractions(&mut self) -> Vec<f64> {
        std::mem::take(&mut self.accept_fractions)
    }

    pub fn into_proposal(self) -> ProposalState {
        self.proposal
    }

    /// Draws a replacement above `l_min` starting from a random member of
    /// `live` (which must not contain the discarded point).
    pub fn sample(&mut self, live: &[Point], l_min: f64, problem: &dyn Problem) -> Result<Sampled> {
        if self.calls_in_run.is_multiple_of(self.refresh_interval) && live.len() >= 2 {
            self.proposal.cov_chol = proposal_shape(live)?;
        }
        self.calls_in_run += 1;

        let mut n_like_evals = 0;
        for attempt in 0..self.max_attempts {
            let seed = choose_seed(live, &mut self.rng);
            let walk = if attempt == 0 {
                mcmc_walk(
                    seed,
                    l_min,
                    self.m_steps,
                    &self.proposal,
                    problem,
                    &mut self.rng,
                )?
            } else {
                let mut shrunk = self.proposal.clone();
                shrunk.scale *= 0.5f64.powi(attempt as i32);
                mcmc_walk(seed, l_min, self.m_steps, &shrunk, problem, &mut self.rng)?
            };
            n_like_evals += walk.n_proposed;
            self.proposal.call_index += 1;
            let call_index = self.proposal.call_index;
            self.proposal.adapt_scale(&walk, call_index);
            self.accept_fractions.push(walk.accepted_fraction());
            if walk.n_accepted > 0 {
                return Ok(Sampled { walk, n_like_evals });
            }
            log::debug!(
                "walk above {l_min:e} accepted nothing (attempt {})",
                attempt + 1
            );
        }
        Err(Error::LrpsFailure {
            l_min,
            attempts: self.max_attempts,
        })
    }
}
