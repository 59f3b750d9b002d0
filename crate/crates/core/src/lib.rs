//! Snowballing nested sampling.
//!
//! Nested sampling with a random-walk constrained-prior sampler of fixed
//! length, wrapped in an outer loop that grows the number of live points
//! and reuses earlier work through a threshold-keyed memo table.
//!
//! ```no_run
//! use snowball_ns::{ProblemParams, ProblemSpec, Snowball, SnowballConfig};
//!
//! let problem = ProblemSpec::from_name("rosenbrock", 2, &ProblemParams::default())?;
//! let mut config = SnowballConfig::new(problem);
//! config.max_outer_iterations = 5;
//! let mut sb = Snowball::new(config)?;
//! for report in sb.iter_reports() {
//!     let r = report?;
//!     println!("K={} ln Z={:.3} +- {:.3}", r.k, r.log_z, r.log_z_err);
//! }
//! # Ok::<(), snowball_ns::Error>(())
//! ```

pub mod batch;
pub mod error;
pub mod lrps;
pub mod memo;
pub mod nested;
pub mod persistence;
pub mod point;
pub mod problems;
pub mod rng;
pub mod snowball;
pub mod stats;

pub use error::{Error, Result};
pub use lrps::{Lrps, ProposalState, WalkResult};
pub use memo::{MemoKey, MemoTable};
pub use nested::{EvidenceEstimate, Posterior, RunConfig, RunOutcome, RunState};
pub use persistence::{load_checkpoint, save_checkpoint, Checkpoint};
pub use point::Point;
pub use problems::{Problem, ProblemParams, ProblemSpec};
pub use snowball::{snowball_run, Snowball, SnowballConfig, SnowballReport};
