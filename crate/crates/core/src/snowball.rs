//! The outer loop: nested sampling is rerun with `K0`, `K0 + K_inc`,
//! `K0 + 2 K_inc`, ... live points. Each run starts from the previous
//! run's initial draws plus `K_inc` new ones, and every threshold it meets
//! is first looked up in a memo table shared by all runs. Whenever a run
//! discards a point that an earlier run also discarded, the stored
//! replacement is reused instead of walking again.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lrps::{Lrps, ProposalState, DEFAULT_GAMMA0, DEFAULT_KAPPA};
use crate::memo::MemoTable;
use crate::nested::{run_nested, RunConfig, RunOutcome, DEFAULT_TERM_EPSILON, MAX_DEAD_POINTS};
use crate::point::{extend_initial, Point};
use crate::problems::{Problem, ProblemSpec};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnowballConfig {
    pub problem: ProblemSpec,
    pub k0: usize,
    pub k_inc: usize,
    pub m_steps: usize,
    pub term_epsilon: f64,
    pub max_outer_iterations: u64,
    pub seed: u64,
    /// Reuse constrained-prior samples across runs. Disabling it together
    /// with `k0 = 2, k_inc = 1` gives the basic algorithm without reuse.
    pub memoize: bool,
    pub max_dead: usize,
    pub adapt_gamma0: f64,
    pub adapt_kappa: f64,
}

impl SnowballConfig {
    /// Defaults: `K0 = K_inc = M = 20`, epsilon `1e-6`.
    pub fn new(problem: ProblemSpec) -> Self {
        SnowballConfig {
            problem,
            k0: 20,
            k_inc: 20,
            m_steps: 20,
            term_epsilon: DEFAULT_TERM_EPSILON,
            max_outer_iterations: 10,
            seed: 0,
            memoize: true,
            max_dead: MAX_DEAD_POINTS,
            adapt_gamma0: DEFAULT_GAMMA0,
            adapt_kappa: DEFAULT_KAPPA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Domain(m));
        if self.k0 < 2 {
            return fail(format!("k0 must be at least 2, got {}", self.k0));
        }
        if self.k_inc == 0 {
            return fail("k_inc must be positive".into());
        }
        if self.m_steps == 0 {
            return fail("m_steps must be positive".into());
        }
        if self.max_outer_iterations == 0 {
            return fail("max_outer_iterations must be positive".into());
        }
        if self.max_dead == 0 {
            return fail("max_dead must be positive".into());
        }
        if !(self.term_epsilon > 0.0 && self.term_epsilon.is_finite()) {
            return fail(format!(
                "term_epsilon must be positive, got {}",
                self.term_epsilon
            ));
        }
        if !(self.adapt_gamma0 >= 0.0 && self.adapt_kappa >= 0.0) {
            return fail("adaptation constants must be non-negative".into());
        }
        self.problem.build().map(|_| ())
    }

    /// Live points used by outer iteration `j` (1-based).
    pub fn k_at(&self, outer_iteration: u64) -> usize {
        self.k0 + (outer_iteration as usize - 1) * self.k_inc
    }
}

/// Summary of one outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnowballReport {
    pub outer_iteration: u64,
    pub k: usize,
    pub log_z: f64,
    pub log_z_err: f64,
    pub ess: f64,
    /// Deaths in this run (live points appended at the end are not counted).
    pub n_dead: u64,
    pub n_like_evals_cumulative: u64,
    pub n_lrps_calls_new: u64,
    pub n_memo_hits: u64,
    /// Wall-clock time of the iteration; `None` unless timing is enabled.
    pub wall_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub failed: bool,
}

/// Sampler state that survives between outer iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerSnapshot {
    pub scale: f64,
    pub call_index: u64,
    pub history_capacity: usize,
    pub accept_history: Vec<(f64, f64)>,
}

pub struct Snowball {
    config: SnowballConfig,
    problem: Box<dyn Problem>,
    memo: MemoTable,
    lrps: Lrps<ChaCha8Rng>,
    initial: Vec<Point>,
    reports: Vec<SnowballReport>,
    evals_cumulative: u64,
    last: Option<RunOutcome>,
    record_timing: bool,
    stop: Option<Arc<AtomicBool>>,
}

impl std::fmt::Debug for Snowball {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Snowball")
            .field("config", &self.config)
            .field("completed", &self.reports.len())
            .field("memo_entries", &self.memo.len())
            .finish()
    }
}

impl Snowball {
    pub fn new(config: SnowballConfig) -> Result<Self> {
        config.validate()?;
        let problem = config.problem.build()?;
        let proposal = ProposalState::new(problem.dim(), config.adapt_gamma0, config.adapt_kappa);
        let lrps = Lrps::new(
            proposal,
            config.m_steps,
            stream_rng(config.seed, Stream::Lrps, 0),
        );
        Ok(Snowball {
            config,
            problem,
            memo: MemoTable::new(),
            lrps,
            initial: Vec::new(),
            reports: Vec::new(),
            evals_cumulative: 0,
            last: None,
            record_timing: false,
            stop: None,
        })
    }

    /// Restores a loop from saved parts. The initial draws are recomputed
    /// from the seed without being counted as new evaluations.
    pub fn restore(
        config: SnowballConfig,
        memo: MemoTable,
        reports: Vec<SnowballReport>,
        sampler: SamplerSnapshot,
    ) -> Result<Self> {
        let mut sb = Snowball::new(config)?;
        let proposal = &mut sb.lrps.proposal;
        proposal.scale = sampler.scale;
        proposal.call_index = sampler.call_index;
        proposal.history_capacity = sampler.history_capacity;
        proposal.accept_history = sampler.accept_history.into_iter().collect();
        sb.memo = memo;
        if let Some(last) = reports.last() {
            if last.outer_iteration != reports.len() as u64 {
                return Err(Error::Format("report sequence is not contiguous".into()));
            }
            sb.evals_cumulative = last.n_like_evals_cumulative;
            sb.initial = extend_initial(sb.problem.as_ref(), Vec::new(), last.k, sb.config.seed)?;
        }
        sb.reports = reports;
        Ok(sb)
    }

    /// Record wall-clock time in reports. Off by default so that report
    /// streams are reproducible byte for byte.
    pub fn with_timing(mut self, on: bool) -> Self {
        self.record_timing = on;
        self
    }

    /// Checked between outer iterations; once set, the loop stops.
    pub fn with_stop_flag(mut self, flag: Arc<AtomicBool>) -> Self {
        self.stop = Some(flag);
        self
    }

    pub fn config(&self) -> &SnowballConfig {
        &self.config
    }

    pub fn set_max_outer_iterations(&mut self, n: u64) {
        self.config.max_outer_iterations = n;
    }

    pub fn problem(&self) -> &dyn Problem {
        self.problem.as_ref()
    }

    pub fn memo(&self) -> &MemoTable {
        &self.memo
    }

    pub fn reports(&self) -> &[SnowballReport] {
        &self.reports
    }

    pub fn completed(&self) -> u64 {
        self.reports.len() as u64
    }

    pub fn proposal(&self) -> &ProposalState {
        &self.lrps.proposal
    }

    /// Outcome of the most recent run made by this process.
    pub fn last_outcome(&self) -> Option<&RunOutcome> {
        self.last.as_ref()
    }

    pub fn sampler_snapshot(&self) -> SamplerSnapshot {
        let p = &self.lrps.proposal;
        SamplerSnapshot {
            scale: p.scale,
            call_index: p.call_index,
            history_capacity: p.history_capacity,
            accept_history: p.accept_history.iter().copied().collect(),
        }
    }

    fn stop_requested(&self) -> bool {
        self.stop
            .as_ref()
            .is_some_and(|f| f.load(Ordering::Relaxed))
    }

    pub fn is_finished(&self) -> bool {
        self.completed() >= self.config.max_outer_iterations || self.stop_requested()
    }

    /// Runs the next outer iteration. On an inner-run failure the error
    /// carries a partial report flagged `failed`; the loop state is left
    /// at the previous iteration boundary apart from memo entries, which
    /// stay valid.
    pub fn run_next(&mut self) -> Result<SnowballReport> {
        let started = Instant::now();
        let outer_iteration = self.completed() + 1;
        let k = self.config.k_at(outer_iteration);
        let before = self.initial.len() as u64;
        let initial = extend_initial(
            self.problem.as_ref(),
            std::mem::take(&mut self.initial),
            k,
            self.config.seed,
        )?;
        let initial_evals = initial.len() as u64 - before;
        self.initial = initial;

        let run_config = RunConfig {
            m_steps: self.config.m_steps,
            term_epsilon: self.config.term_epsilon,
            max_dead: self.config.max_dead,
        };
        self.lrps.begin_run(
            k,
            stream_rng(self.config.seed, Stream::Lrps, outer_iteration),
        );
        let memo = if self.config.memoize {
            Some(&mut self.memo)
        } else {
            None
        };
        let result = run_nested(
            self.problem.as_ref(),
            self.initial.clone(),
            initial_evals,
            &run_config,
            &mut self.lrps,
            memo,
        );
        let wall_seconds = self.record_timing.then(|| started.elapsed().as_secs_f64());
        match result {
            Ok(outcome) => {
                self.evals_cumulative += outcome.n_like_evals;
                let report = SnowballReport {
                    outer_iteration,
                    k,
                    log_z: outcome.estimate.log_z,
                    log_z_err: outcome.estimate.log_z_err,
                    ess: outcome.estimate.ess,
                    n_dead: outcome.n_iterations,
                    n_like_evals_cumulative: self.evals_cumulative,
                    n_lrps_calls_new: outcome.n_lrps_calls,
                    n_memo_hits: outcome.n_memo_hits,
                    wall_seconds,
                    failed: false,
                };
                log::info!(
                    "outer iteration {outer_iteration}: K={k} ln Z={:.6} +- {:.6} ({} fresh walks, {} memo hits)",
                    report.log_z,
                    report.log_z_err,
                    report.n_lrps_calls_new,
                    report.n_memo_hits
                );
                self.last = Some(outcome);
                self.reports.push(report.clone());
                Ok(report)
            }
            Err(aborted) => {
                let state = &aborted.state;
                let report = SnowballReport {
                    outer_iteration,
                    k,
                    log_z: state.log_z(),
                    log_z_err: (state.info_h().max(0.0) / k as f64).sqrt(),
                    ess: f64::NAN,
                    n_dead: state.iteration(),
                    n_like_evals_cumulative: self.evals_cumulative + state.n_like_evals,
                    n_lrps_calls_new: state.n_lrps_calls,
                    n_memo_hits: state.n_memo_hits,
                    wall_seconds,
                    failed: true,
                };
                Err(Error::Aborted {
                    report: Box::new(report),
                    source: Box::new(aborted.error),
                })
            }
        }
    }

    /// Stream of reports until `max_outer_iterations`, a stop request, or
    /// the first error.
    pub fn iter_reports(&mut self) -> impl Iterator<Item = Result<SnowballReport>> + '_ {
        let mut failed = false;
        std::iter::from_fn(move || {
            if failed || self.is_finished() {
                return None;
            }
            let r = self.run_next();
            failed = r.is_err();
            Some(r)
        })
    }
}

/// Runs a full snowball loop and returns its reports.
pub fn snowball_run(config: SnowballConfig) -> Result<Vec<SnowballReport>> {
    let mut sb = Snowball::new(config)?;
    sb.iter_reports().collect()
}
