//! The nested-sampling loop.
//!
//! Prior volume is tracked deterministically: each death at `K` live
//! points multiplies the volume by `(K-1)/K`. A dead point's weight is the
//! slab of volume it discards, `X_{t-1} - X_t = X_{t-1}/K`, times its
//! likelihood. All accumulation happens in log space.

use std::io::{self, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lrps::{Lrps, WalkResult};
use crate::memo::MemoTable;
use crate::point::Point;
use crate::problems::Problem;
use crate::stats::{log1m_exp, log_add_exp, log_sum_exp};

/// Stop once the live points could add less than this fraction of the evidence.
pub const DEFAULT_TERM_EPSILON: f64 = 1e-6;
/// Hard cap on dead points per run.
pub const MAX_DEAD_POINTS: usize = 1_000_000;

/// `ln((K-1)/K)`, the log-compression of one death at `K` live points.
#[inline]
pub fn log_shrinkage(k: usize) -> f64 {
    (-1.0 / k as f64).ln_1p()
}

/// Deterministic log prior volume after `t` deaths at constant `k`.
pub fn log_prior_volume(t: u64, k: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::domain(format!("need K >= 2 live points, got {k}")));
    }
    if t == 0 {
        return Ok(0.0);
    }
    Ok(t as f64 * log_shrinkage(k))
}

/// Log prior volume after one death at each of the given live-point counts.
pub fn log_prior_volume_schedule(ks: &[usize]) -> Result<f64> {
    ks.iter().try_fold(0.0, |acc, &k| {
        if k < 2 {
            Err(Error::domain(format!("need K >= 2 live points, got {k}")))
        } else {
            Ok(acc + log_shrinkage(k))
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeadRecord {
    pub point: Point,
    pub iteration: u64,
    /// `ln X_t`, the volume remaining after this death.
    pub log_volume: f64,
    /// `logl + ln(X_{t-1} - X_t)`.
    pub log_weight: f64,
    pub k_at_death: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub m_steps: usize,
    pub term_epsilon: f64,
    pub max_dead: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            m_steps: 20,
            term_epsilon: DEFAULT_TERM_EPSILON,
            max_dead: MAX_DEAD_POINTS,
        }
    }
}

/// State of one nested-sampling run.
#[derive(Debug, Clone)]
pub struct RunState {
    k: usize,
    /// Sorted in death order, so the worst point is first.
    live: Vec<Point>,
    dead: Vec<DeadRecord>,
    log_volume: f64,
    log_z: f64,
    info_h: f64,
    next_origin_id: u64,
    pub n_like_evals: u64,
    pub n_lrps_calls: u64,
    pub n_memo_hits: u64,
}

impl RunState {
    /// Starts a run from `live`. `initial_evals` is the number of
    /// likelihood evaluations spent producing it.
    pub fn new(mut live: Vec<Point>, initial_evals: u64) -> Result<Self> {
        if live.len() < 2 {
            return Err(Error::domain(format!(
                "need at least 2 live points, got {}",
                live.len()
            )));
        }
        live.sort_by(Point::death_order);
        if live
            .windows(2)
            .any(|w| w[0].origin_id == w[1].origin_id && w[0].logl.to_bits() == w[1].logl.to_bits())
        {
            return Err(Error::domain(
                "live points must have distinct (logl, origin_id)",
            ));
        }
        let next_origin_id = live.iter().map(|p| p.origin_id).max().unwrap_or(0) + 1;
        Ok(RunState {
            k: live.len(),
            live,
            dead: Vec::new(),
            log_volume: 0.0,
            log_z: f64::NEG_INFINITY,
            info_h: 0.0,
            next_origin_id,
            n_like_evals: initial_evals,
            n_lrps_calls: 0,
            n_memo_hits: 0,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn live(&self) -> &[Point] {
        &self.live
    }

    pub fn dead(&self) -> &[DeadRecord] {
        &self.dead
    }

    /// Deaths so far.
    pub fn iteration(&self) -> u64 {
        self.dead.len() as u64
    }

    pub fn log_volume(&self) -> f64 {
        self.log_volume
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    pub fn info_h(&self) -> f64 {
        self.info_h
    }

    /// Evidence still held by the live points: mean live likelihood times
    /// the remaining volume.
    pub fn log_z_live(&self) -> f64 {
        let logls: Vec<f64> = self.live.iter().map(|p| p.logl).collect();
        log_sum_exp(&logls) + self.log_volume - (self.k as f64).ln()
    }

    fn accumulate(&mut self, logl: f64, log_weight: f64) {
        let log_z_new = log_add_exp(self.log_z, log_weight);
        if log_z_new == f64::NEG_INFINITY {
            return;
        }
        let mut h = 0.0;
        if log_weight > f64::NEG_INFINITY {
            h += (log_weight - log_z_new).exp() * logl;
        }
        if self.log_z > f64::NEG_INFINITY {
            h += (self.log_z - log_z_new).exp() * (self.info_h + self.log_z);
        }
        self.info_h = h - log_z_new;
        self.log_z = log_z_new;
    }

    fn insert_live(&mut self, mut point: Point) {
        point.origin_id = self.next_origin_id;
        self.next_origin_id += 1;
        let at = self
            .live
            .partition_point(|p| p.death_order(&point) == std::cmp::Ordering::Less);
        self.live.insert(at, point);
    }

    /// Removes the worst live point, records it, and returns it.
    fn kill_worst(&mut self) -> Point {
        let worst = self.live.remove(0);
        let log_slab = self.log_volume - (self.k as f64).ln();
        let log_weight = worst.logl + log_slab;
        self.log_volume += log_shrinkage(self.k);
        self.accumulate(worst.logl, log_weight);
        self.dead.push(DeadRecord {
            point: worst.clone(),
            iteration: self.dead.len() as u64 + 1,
            log_volume: self.log_volume,
            log_weight,
            k_at_death: self.k,
        });
        worst
    }
}

/// One iteration: the worst live point dies and is replaced by a sample
/// above its likelihood, from `memo` when the threshold is stored there
/// and from the sampler otherwise (the fresh sample is then stored).
pub fn ns_step<R: Rng>(
    state: &mut RunState,
    sampler: &mut Lrps<R>,
    problem: &dyn Problem,
    memo: Option<&mut MemoTable>,
) -> Result<()> {
    let worst = state.kill_worst();
    let l_min = worst.logl;
    let replacement: WalkResult = match memo {
        Some(table) => {
            if let Some(hit) = table.lookup(l_min) {
                state.n_memo_hits += 1;
                hit.clone()
            } else {
                let sampled = sampler.sample(&state.live, l_min, problem)?;
                state.n_lrps_calls += 1;
                state.n_like_evals += sampled.n_like_evals;
                table.put(l_min, sampled.walk.clone());
                sampled.walk
            }
        }
        None => {
            let sampled = sampler.sample(&state.live, l_min, problem)?;
            state.n_lrps_calls += 1;
            state.n_like_evals += sampled.n_like_evals;
            sampled.walk
        }
    };
    state.insert_live(replacement.point);
    Ok(())
}

/// True once `Z_live / Z < epsilon`, or when the live points carry no mass.
pub fn termination_check(state: &RunState, epsilon: f64) -> bool {
    let live = state.log_z_live();
    if live == f64::NEG_INFINITY {
        return true;
    }
    if state.dead.is_empty() {
        return false;
    }
    live - state.log_z < epsilon.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvidenceEstimate {
    pub log_z: f64,
    pub log_z_err: f64,
    pub info_h: f64,
    pub ess: f64,
    /// All dead records, including the live points added at the end.
    pub n_dead: u64,
    pub k_final: usize,
}

/// Dead records with normalized posterior weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub records: Vec<DeadRecord>,
    pub weights: Vec<f64>,
}

/// Result of a finished run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub estimate: EvidenceEstimate,
    pub posterior: Posterior,
    /// Deaths before the final live points were added.
    pub n_iterations: u64,
    pub n_like_evals: u64,
    pub n_lrps_calls: u64,
    pub n_memo_hits: u64,
    pub terminated: bool,
    /// Accepted fraction of each fresh walk, in order.
    pub accept_fractions: Vec<f64>,
}

/// `1 / sum w_i^2` for normalized weights.
pub fn ess(weights: &[f64]) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::domain(
            "effective sample size of an empty weight set",
        ));
    }
    Ok(1.0 / weights.iter().map(|w| w * w).sum::<f64>())
}

/// Appends the live points as dead records sharing the remaining volume
/// equally, then computes the evidence, its error, the information and the
/// normalized weights.
pub fn finalize_run(mut state: RunState) -> (EvidenceEstimate, Posterior, u64) {
    let n_iterations = state.iteration();
    let k = state.k;
    let ln_k = (k as f64).ln();
    let log_x_final = state.log_volume;
    let log_slab = log_x_final - ln_k;
    let live = std::mem::take(&mut state.live);
    for (j, p) in live.into_iter().enumerate() {
        let log_weight = p.logl + log_slab;
        let remaining = (k - 1 - j) as f64;
        let log_volume = if remaining > 0.0 {
            log_x_final + remaining.ln() - ln_k
        } else {
            f64::NEG_INFINITY
        };
        state.accumulate(p.logl, log_weight);
        state.dead.push(DeadRecord {
            point: p,
            iteration: state.dead.len() as u64 + 1,
            log_volume,
            log_weight,
            k_at_death: k,
        });
    }
    let log_weights: Vec<f64> = state.dead.iter().map(|d| d.log_weight).collect();
    let log_z = log_sum_exp(&log_weights);
    let weights: Vec<f64> = log_weights.iter().map(|lw| (lw - log_z).exp()).collect();
    // Exact information, H = sum p_i ln L_i - ln Z.
    let info_h = if log_z.is_finite() {
        let h = state
            .dead
            .iter()
            .zip(&weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(d, &w)| w * d.point.logl)
            .sum::<f64>()
            - log_z;
        h.max(0.0)
    } else {
        0.0
    };
    let estimate = EvidenceEstimate {
        log_z,
        log_z_err: (info_h / k as f64).sqrt(),
        info_h,
        ess: ess(&weights).unwrap_or(1.0),
        n_dead: state.dead.len() as u64,
        k_final: k,
    };
    (
        estimate,
        Posterior {
            records: state.dead,
            weights,
        },
        n_iterations,
    )
}

/// A run that stopped on an error, with its state at that point.
#[derive(Debug)]
pub struct Aborted {
    pub state: RunState,
    pub error: Error,
}

/// Runs nested sampling from `live` to termination (or the dead-point cap).
pub fn run_nested<R: Rng>(
    problem: &dyn Problem,
    live: Vec<Point>,
    initial_evals: u64,
    config: &RunConfig,
    sampler: &mut Lrps<R>,
    mut memo: Option<&mut MemoTable>,
) -> std::result::Result<RunOutcome, Box<Aborted>> {
    let mut state = match RunState::new(live, initial_evals) {
        Ok(s) => s,
        Err(error) => {
            return Err(Box::new(Aborted {
                state: RunState::empty(),
                error,
            }))
        }
    };
    let mut terminated = false;
    while state.dead.len() < config.max_dead {
        if let Err(error) = ns_step(&mut state, sampler, problem, memo.as_deref_mut()) {
            return Err(Box::new(Aborted { state, error }));
        }
        if termination_check(&state, config.term_epsilon) {
            terminated = true;
            break;
        }
    }
    if !terminated {
        log::warn!(
            "run stopped at the dead-point cap ({}) before terminating",
            config.max_dead
        );
    }
    let n_like_evals = state.n_like_evals;
    let n_lrps_calls = state.n_lrps_calls;
    let n_memo_hits = state.n_memo_hits;
    let (estimate, posterior, n_iterations) = finalize_run(state);
    Ok(RunOutcome {
        estimate,
        posterior,
        n_iterations,
        n_like_evals,
        n_lrps_calls,
        n_memo_hits,
        terminated,
        accept_fractions: sampler.take_accept_fractions(),
    })
}

impl RunState {
    fn empty() -> Self {
        RunState {
            k: 0,
            live: Vec::new(),
            dead: Vec::new(),
            log_volume: 0.0,
            log_z: f64::NEG_INFINITY,
            info_h: 0.0,
            next_origin_id: 0,
            n_like_evals: 0,
            n_lrps_calls: 0,
            n_memo_hits: 0,
        }
    }
}

/// `|sum_i (X_{i-1} - X_i) + X_final - 1|` over a dead sequence.
pub fn volume_conservation_error(records: &[DeadRecord]) -> f64 {
    let mut prev = 0.0;
    let mut slabs = Vec::with_capacity(records.len() + 1);
    for r in records {
        slabs.push(prev + log1m_exp(r.log_volume - prev));
        prev = r.log_volume;
    }
    slabs.push(prev);
    (log_sum_exp(&slabs).exp() - 1.0).abs()
}

/// Checks the bookkeeping invariants of a finished run: volume
/// conservation, nondecreasing dead likelihoods, ESS range and weight
/// normalization.
pub fn check_bookkeeping(outcome: &RunOutcome) -> std::result::Result<(), String> {
    let recs = &outcome.posterior.records;
    let vol = volume_conservation_error(recs);
    if vol > 1e-10 {
        return Err(format!("volume not conserved: error {vol:e}"));
    }
    if let Some(w) = recs.windows(2).find(|w| w[1].point.logl < w[0].point.logl) {
        return Err(format!(
            "dead likelihoods decrease at iteration {}",
            w[1].iteration
        ));
    }
    if recs
        .windows(2)
        .any(|w| w[1].log_volume.partial_cmp(&w[0].log_volume) != Some(std::cmp::Ordering::Less))
    {
        return Err("dead log-volumes not strictly decreasing".into());
    }
    let n = recs.len() as f64;
    let e = outcome.estimate.ess;
    if !(e >= 1.0 - 1e-12 && e <= n * (1.0 + 1e-12)) {
        return Err(format!("ESS {e} outside [1, {n}]"));
    }
    let total: f64 = outcome.posterior.weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(format!("weights sum to {total}"));
    }
    Ok(())
}

/// Writes dead records as CSV:
/// `iter,k_at_death,ln_x,ln_l,ln_w,theta_0..theta_{d-1}`, plus a trailing
/// `weight` column when `weights` is given. Numbers carry 17 significant
/// digits.
pub fn write_dead_csv<W: Write>(
    out: &mut W,
    records: &[DeadRecord],
    weights: Option<&[f64]>,
) -> io::Result<()> {
    let d = records.first().map_or(0, |r| r.point.theta.len());
    write!(out, "iter,k_at_death,ln_x,ln_l,ln_w")?;
    for i in 0..d {
        write!(out, ",theta_{i}")?;
    }
    if weights.is_some() {
        write!(out, ",weight")?;
    }
    writeln!(out)?;
    for (i, r) in records.iter().enumerate() {
        write!(
            out,
            "{},{},{:.16e},{:.16e},{:.16e}",
            r.iteration, r.k_at_death, r.log_volume, r.point.logl, r.log_weight
        )?;
        for t in &r.point.theta {
            write!(out, ",{t:.16e}")?;
        }
        if let Some(w) = weights {
            write!(out, ",{:.16e}", w[i])?;
        }
        writeln!(out)?;
    }
    Ok(())
}
