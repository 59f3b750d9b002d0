use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::batch;
use crate::error::{Error, Result};
use crate::problems::Problem;
use crate::rng::{stream_rng, Stream};

/// A parameter sample with its cached log-likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    /// Unit-cube coordinates.
    pub u: Vec<f64>,
    /// Physical coordinates, `prior_transform(u)`.
    pub theta: Vec<f64>,
    pub logl: f64,
    pub origin_id: u64,
}

impl Point {
    /// Transforms and evaluates `u`. A NaN likelihood is an error naming the point.
    pub fn evaluate(problem: &dyn Problem, u: Vec<f64>, origin_id: u64) -> Result<Point> {
        let theta = problem.prior_transform(&u);
        let logl = problem.log_likelihood(&theta);
        if logl.is_nan() {
            return Err(Error::NanLikelihood { theta });
        }
        Ok(Point {
            u,
            theta,
            logl,
            origin_id,
        })
    }

    /// Death order: lower likelihood first, ties broken by lower `origin_id`.
    pub fn death_order(&self, other: &Point) -> Ordering {
        self.logl
            .total_cmp(&other.logl)
            .then(self.origin_id.cmp(&other.origin_id))
    }
}

/// Initial prior draw number `index`: a pure function of `(seed, index)`.
pub fn initial_draw(problem: &dyn Problem, seed: u64, index: u64) -> Result<Point> {
    let mut rng = stream_rng(seed, Stream::InitialPoints, index);
    let u: Vec<f64> = (0..problem.dim()).map(|_| rng.random::<f64>()).collect();
    Point::evaluate(problem, u, index)
}

/// Extends `existing` (the first `existing.len()` draws for `seed`) to
/// `k_new` points. Only the new draws are evaluated; their number is
/// `k_new - existing.len()`.
pub fn extend_initial(
    problem: &dyn Problem,
    mut existing: Vec<Point>,
    k_new: usize,
    seed: u64,
) -> Result<Vec<Point>> {
    let k_prev = existing.len();
    if k_new < k_prev {
        return Err(Error::domain(format!(
            "cannot shrink the initial set from {k_prev} to {k_new}"
        )));
    }
    let fresh = batch::map_range(k_prev as u64..k_new as u64, |i| {
        initial_draw(problem, seed, i)
    });
    for p in fresh {
        existing.push(p?);
    }
    Ok(existing)
}

/// `k` initial live points for `seed`. Prefix-stable: the first `j` points
/// equal those of any call with `k = j`.
pub fn init_live_set(problem: &dyn Problem, k: usize, seed: u64) -> Result<Vec<Point>> {
    if k < 2 {
        return Err(Error::domain(format!(
            "need at least 2 live points, got {k}"
        )));
    }
    extend_initial(problem, Vec::new(), k, seed)
}
