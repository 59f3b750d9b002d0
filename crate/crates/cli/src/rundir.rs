//! Run directories: manifest, streamed reports, posterior and checkpoint,
//! guarded by a lock file so only one process writes at a time.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use snowball_ns::nested::write_dead_csv;
use snowball_ns::persistence::Checkpoint;
use snowball_ns::problems::{ProblemParams, ProblemSpec};
use snowball_ns::{
    load_checkpoint, save_checkpoint, Error, Snowball, SnowballConfig, SnowballReport,
};

use crate::manifest::{now_unix, RunManifest};
use crate::{CmdResult, Failure, ResumeArgs, RunArgs};

pub const REPORTS: &str = "reports.jsonl";
pub const POSTERIOR: &str = "posterior.csv";
pub const CHECKPOINT: &str = "checkpoint.snsckpt";
pub const LOCK: &str = ".snowball-ns.lock";

/// Held for the lifetime of a command; removes the lock file on drop.
struct Lock(PathBuf);

impl Lock {
    fn acquire(dir: &Path) -> anyhow::Result<Self> {
        let path = dir.join(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Lock(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => bail!(
                "{} is locked by another run (delete {} if no run is active)",
                dir.display(),
                path.display()
            ),
            Err(e) => Err(e).with_context(|| format!("creating {}", path.display())),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn resolve_config(a: &RunArgs) -> anyhow::Result<SnowballConfig> {
    let params = ProblemParams {
        sigma: a.sigma,
        const_logl: a.const_logl,
        lo: a.lo,
        hi: a.hi,
    };
    let problem = ProblemSpec::from_name(&a.problem, a.dim, &params).map_err(|e| match e {
        Error::UnknownProblem(_) => anyhow!(
            "{e}; known problems: {}",
            snowball_ns::problems::registered_names()
                .collect::<Vec<_>>()
                .join(", ")
        ),
        e => anyhow!(e),
    })?;
    let mut config = SnowballConfig::new(problem);
    config.k0 = a.k0;
    config.k_inc = a.k_inc;
    config.m_steps = a.steps;
    config.term_epsilon = a.term_eps;
    config.max_outer_iterations = a.iters;
    config.seed = a.seed;
    config.memoize = !a.no_memo;
    config.validate()?;
    Ok(config)
}

fn report_line(r: &SnowballReport) -> anyhow::Result<String> {
    Ok(serde_json::to_string(r)? + "\n")
}

fn write_posterior(sb: &Snowball, dir: &Path) -> anyhow::Result<()> {
    let Some(outcome) = sb.last_outcome() else {
        return Ok(());
    };
    let path = dir.join(POSTERIOR);
    let tmp = dir.join(format!("{POSTERIOR}.tmp"));
    let mut w =
        BufWriter::new(File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?);
    let p = &outcome.posterior;
    write_dead_csv(&mut w, &p.records, Some(&p.weights))?;
    w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    fs::rename(&tmp, &path).with_context(|| format!("writing {}", path.display()))
}

/// Runs outer iterations until the configured maximum, streaming each report
/// and checkpointing after it.
fn drive(sb: &mut Snowball, dir: &Path, reports: &mut File) -> CmdResult {
    while !sb.is_finished() {
        match sb.run_next() {
            Ok(r) => {
                reports
                    .write_all(report_line(&r)?.as_bytes())
                    .and_then(|_| reports.flush())
                    .context("writing reports")?;
                save_checkpoint(&Checkpoint::capture(sb), &dir.join(CHECKPOINT))
                    .map_err(anyhow::Error::from)?;
            }
            Err(Error::Aborted { report, source }) => {
                write_posterior(sb, dir)?;
                eprintln!("{}", report_line(&report)?.trim_end());
                return Err(Failure::Aborted(anyhow!(
                    "outer iteration {} failed: {source}; the checkpoint holds the last completed iteration",
                    report.outer_iteration
                )));
            }
            Err(e) => return Err(Failure::Aborted(e.into())),
        }
    }
    write_posterior(sb, dir)?;
    Ok(())
}

pub fn cmd_run(a: &RunArgs) -> CmdResult {
    let config = resolve_config(a)?;
    fs::create_dir_all(&a.out)
        .with_context(|| format!("creating output directory {}", a.out.display()))?;
    let _lock = Lock::acquire(&a.out)?;
    if a.out.join(REPORTS).exists() {
        log::warn!("overwriting the previous run in {}", a.out.display());
    }
    let _ = fs::remove_file(a.out.join(POSTERIOR));
    RunManifest::new(config.clone(), &a.out, a.timing).save(&a.out)?;

    let mut sb = Snowball::new(config)
        .map_err(anyhow::Error::from)?
        .with_timing(a.timing);
    // The empty checkpoint lets a run interrupted in its first iteration resume.
    save_checkpoint(&Checkpoint::capture(&sb), &a.out.join(CHECKPOINT))
        .map_err(anyhow::Error::from)?;
    let path = a.out.join(REPORTS);
    let mut reports =
        File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    drive(&mut sb, &a.out, &mut reports)
}

fn conflicts(a: &ResumeArgs, c: &SnowballConfig) -> Vec<String> {
    let mut out = Vec::new();
    let mut check = |flag: &str, given: Option<String>, have: String| {
        if let Some(g) = given {
            if g != have {
                out.push(format!("--{flag} {g} differs from the run's {have}"));
            }
        }
    };
    check("problem", a.problem.clone(), c.problem.name().to_string());
    check(
        "dim",
        a.dim.map(|v| v.to_string()),
        c.problem.dim().to_string(),
    );
    check("seed", a.seed.map(|v| v.to_string()), c.seed.to_string());
    check("k0", a.k0.map(|v| v.to_string()), c.k0.to_string());
    check("k-inc", a.k_inc.map(|v| v.to_string()), c.k_inc.to_string());
    check(
        "steps",
        a.steps.map(|v| v.to_string()),
        c.m_steps.to_string(),
    );
    check(
        "term-eps",
        a.term_eps.map(|v| v.to_string()),
        c.term_epsilon.to_string(),
    );
    out
}

pub fn cmd_resume(a: &ResumeArgs) -> CmdResult {
    if !a.out.is_dir() {
        return Err(anyhow!("{} is not a run directory", a.out.display()).into());
    }
    let _lock = Lock::acquire(&a.out)?;
    let ck = load_checkpoint(&a.out.join(CHECKPOINT)).map_err(anyhow::Error::from)?;
    let clash = conflicts(a, &ck.config);
    if !clash.is_empty() {
        return Err(anyhow!("refusing to resume: {}", clash.join("; ")).into());
    }
    let mut manifest = RunManifest::load(&a.out)?;
    if manifest.config.seed != ck.config.seed || manifest.config.problem != ck.config.problem {
        return Err(anyhow!("manifest and checkpoint describe different runs").into());
    }
    let timing = a.timing || manifest.timing;
    let target = ck.completed_outer_iterations + a.iters;
    let mut sb = ck
        .resume()
        .map_err(anyhow::Error::from)?
        .with_timing(timing);
    sb.set_max_outer_iterations(target);

    manifest.config.max_outer_iterations = target;
    manifest.timing = timing;
    manifest.resumed_unix.push(now_unix());
    manifest.save(&a.out)?;

    // Rewritten from the checkpoint so a report written after the last
    // checkpoint (an interrupted iteration) is dropped.
    let path = a.out.join(REPORTS);
    let mut reports =
        File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    for r in sb.reports() {
        reports
            .write_all(report_line(r)?.as_bytes())
            .context("writing reports")?;
    }
    drive(&mut sb, &a.out, &mut reports)
}
