//! Acceptance suite. Runs every criterion at its pinned tolerance, prints one
//! line per criterion and exits nonzero if any of them fails.
//!
//! Seeds are fixed here up front and never tuned.

mod common;

use std::fs;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snowball_ns::batch;
use snowball_ns::lrps::{mcmc_walk, ProposalState};
use snowball_ns::nested::check_bookkeeping;
use snowball_ns::persistence::Checkpoint;
use snowball_ns::point::Point;
use snowball_ns::problems::{BoxPrior, ProblemSpec, Rosenbrock};
use snowball_ns::stats::{linear_fit, mean_std, spearman};
use snowball_ns::{load_checkpoint, save_checkpoint, Snowball, SnowballConfig, SnowballReport};

const ENSEMBLE_SEEDS: std::ops::RangeInclusive<u64> = 1..=20;
const TREND_SEED: u64 = 42;

static RUNS_CHECKED: AtomicUsize = AtomicUsize::new(0);
static VIOLATIONS: Mutex<Vec<String>> = Mutex::new(Vec::new());

type Criterion = (&'static str, &'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn gaussian(dim: usize) -> ProblemSpec {
    ProblemSpec::Gaussian {
        dim,
        sigma: 0.1,
        lo: -10.0,
        hi: 10.0,
    }
}

fn rosenbrock(dim: usize) -> ProblemSpec {
    ProblemSpec::Rosenbrock {
        dim,
        lo: -10.0,
        hi: 10.0,
    }
}

fn config(
    problem: ProblemSpec,
    k0: usize,
    k_inc: usize,
    m: usize,
    iters: u64,
    seed: u64,
) -> SnowballConfig {
    let mut c = SnowballConfig::new(problem);
    c.k0 = k0;
    c.k_inc = k_inc;
    c.m_steps = m;
    c.max_outer_iterations = iters;
    c.seed = seed;
    c
}

/// Drives a snowball to completion, checking bookkeeping after every
/// iteration. Returns the reports and the fresh-walk acceptance fractions of
/// the last iteration.
fn drive(config: SnowballConfig) -> (Vec<SnowballReport>, Vec<f64>) {
    let label = format!("{} seed {}", config.problem.name(), config.seed);
    let mut sb = Snowball::new(config).expect("valid config");
    let mut reports = Vec::new();
    while !sb.is_finished() {
        let r = sb.run_next().unwrap_or_else(|e| panic!("{label}: {e}"));
        RUNS_CHECKED.fetch_add(1, Ordering::Relaxed);
        if let Err(e) = check_bookkeeping(sb.last_outcome().unwrap()) {
            VIOLATIONS
                .lock()
                .unwrap()
                .push(format!("{label} iteration {}: {e}", r.outer_iteration));
        }
        reports.push(r);
    }
    let fractions = sb.last_outcome().unwrap().accept_fractions.clone();
    (reports, fractions)
}

fn final_report(config: SnowballConfig) -> SnowballReport {
    drive(config).0.pop().unwrap()
}

fn seeds() -> Vec<u64> {
    ENSEMBLE_SEEDS.collect()
}

fn coverage(truth: f64, finals: &[SnowballReport]) -> (usize, f64) {
    let hits = finals
        .iter()
        .filter(|r| (r.log_z - truth).abs() <= 3.0 * r.log_z_err)
        .count();
    let mean = finals.iter().map(|r| r.log_z).sum::<f64>() / finals.len() as f64;
    (hits, mean)
}

fn constant_exactness() -> Verdict {
    let shapes = [(2, 2, 1), (5, 3, 20), (20, 20, 20), (50, 7, 4)];
    let mut worst: f64 = 0.0;
    let mut slowest: f64 = 0.0;
    for (k0, k_inc, m) in shapes {
        let problem = ProblemSpec::Constant {
            dim: 3,
            logl: -5.0,
            lo: -10.0,
            hi: 10.0,
        };
        let start = Instant::now();
        let r = final_report(config(problem, k0, k_inc, m, 3, 1));
        slowest = slowest.max(start.elapsed().as_secs_f64());
        worst = worst.max((r.log_z + 5.0).abs());
    }
    verdict(
        worst <= 1e-9 && slowest < 1.0,
        format!("max |ln Z + 5| = {worst:.2e}, slowest run {slowest:.3} s"),
    )
}

fn gaussian_accuracy() -> Verdict {
    let truth = -3.0 * 20f64.ln();
    let finals = batch::map(&seeds(), |&s| {
        final_report(config(gaussian(3), 50, 50, 20, 8, s))
    });
    let (hits, mean) = coverage(truth, &finals);
    verdict(
        hits * 10 >= finals.len() * 9,
        format!(
            "{hits}/{} seeds within 3 sigma of {truth:.4} (mean {mean:.4})",
            finals.len()
        ),
    )
}

/// Inner integral over x2 in closed form, outer by quadrature.
fn rosenbrock_2d_semi_analytic() -> f64 {
    use statrs::function::erf::erf;
    let inner = |x1: f64| {
        let a = 200f64.sqrt();
        let gauss = 0.5
            * (std::f64::consts::PI / 200.0).sqrt()
            * (erf(a * (10.0 - x1 * x1)) - erf(a * (-10.0 - x1 * x1)));
        (-2.0 * (1.0 - x1).powi(2)).exp() * gauss / 400.0
    };
    common::integrate(&inner, -10.0, 10.0, 400, 1e-14).ln()
}

fn rosenbrock_accuracy() -> Verdict {
    let p = Rosenbrock::new(2, BoxPrior::new(-10.0, 10.0).unwrap()).unwrap();
    let oracle = common::log_evidence_2d(&p, 4e-4, 1e-8);
    let check = rosenbrock_2d_semi_analytic();
    if (oracle - check).abs() > 1e-6 {
        return verdict(false, format!("oracles disagree: {oracle} vs {check}"));
    }
    let finals = batch::map(&seeds(), |&s| {
        final_report(config(rosenbrock(2), 50, 50, 20, 8, s))
    });
    let (hits, mean) = coverage(oracle, &finals);
    verdict(
        hits * 10 >= finals.len() * 9,
        format!(
            "{hits}/{} seeds within 3 sigma of {oracle:.6} (mean {mean:.4})",
            finals.len()
        ),
    )
}

fn trend(dim: usize, iters: u64, limit_secs: Option<f64>) -> Verdict {
    let start = Instant::now();
    let (reports, _) = drive(config(rosenbrock(dim), 20, 20, 20, iters, TREND_SEED));
    let secs = start.elapsed().as_secs_f64();
    let it: Vec<f64> = reports.iter().map(|r| r.outer_iteration as f64).collect();
    let lz: Vec<f64> = reports.iter().map(|r| r.log_z).collect();
    let x: Vec<f64> = reports.iter().map(|r| 1.0 / (20.0 * r.k as f64)).collect();
    let rho = spearman(&it, &lz);
    let (a, b) = linear_fit(&x, &lz).unwrap_or((f64::NAN, f64::NAN));
    let in_time = limit_secs.is_none_or(|l| secs < l);
    let series: Vec<String> = lz.iter().map(|v| format!("{v:.2}")).collect();
    verdict(
        rho <= -0.5 && b > 0.0 && in_time,
        format!(
            "d={dim}: spearman {rho:.3}, fit a={a:.3} b={b:.1}, {secs:.1} s, ln Z [{}]",
            series.join(" ")
        ),
    )
}

fn single_runs(k: usize, m: usize) -> Vec<f64> {
    batch::map(&seeds(), |&s| {
        final_report(config(gaussian(3), k, k, m, 1, s)).log_z
    })
}

fn m_k_equivalence() -> Verdict {
    let (m1, s1) = mean_std(&single_runs(100, 16));
    let (m2, s2) = mean_std(&single_runs(200, 8));
    let n = ENSEMBLE_SEEDS.count() as f64;
    let (se1, se2) = (s1 / n.sqrt(), s2 / n.sqrt());
    verdict(
        (m1 - m2).abs() < se1 + se2,
        format!(
            "K=100,M=16 mean {m1:.4}; K=200,M=8 mean {m2:.4}; |diff| {:.4} vs se sum {:.4}",
            (m1 - m2).abs(),
            se1 + se2
        ),
    )
}

fn variance_scaling() -> Verdict {
    let (_, s100) = mean_std(&single_runs(100, 20));
    let (_, s400) = mean_std(&single_runs(400, 20));
    let ratio = s400 / s100;
    verdict(
        (1.0 / 2.7..=1.0 / 1.5).contains(&ratio),
        format!("sd(K=400) {s400:.4} / sd(K=100) {s100:.4} = {ratio:.3}, band [0.370, 0.667]"),
    )
}

fn lrps_correctness() -> Verdict {
    let l_min = 0.5f64.ln();
    let mut prop = ProposalState::new(1, 1.0, 0.5);
    prop.scale = 0.3;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut violations = 0;
    let draws: Vec<f64> = (0..10_000)
        .map(|_| {
            let seed =
                Point::evaluate(&common::Linear, vec![rng.random_range(0.5..1.0)], 0).unwrap();
            let w = mcmc_walk(&seed, l_min, 100, &prop, &common::Linear, &mut rng).unwrap();
            if w.point.logl <= l_min {
                violations += 1;
            }
            w.point.theta[0]
        })
        .collect();
    let d = common::ks_statistic(&draws, |x| ((x - 0.5) / 0.5).clamp(0.0, 1.0));
    let p = common::ks_p_value(d, draws.len());
    verdict(
        p > 0.01 && violations == 0,
        format!("KS D = {d:.4}, p = {p:.3}, constraint violations {violations}/10000"),
    )
}

fn adaptation_target() -> Verdict {
    let (_, fractions) = drive(config(gaussian(3), 400, 400, 20, 1, 1));
    let tail = &fractions[fractions.len() / 2..];
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    verdict(
        (0.154..=0.314).contains(&mean),
        format!(
            "mean acceptance {mean:.3} over last {} fresh calls",
            tail.len()
        ),
    )
}

fn memo_saving() -> Verdict {
    let (reports, _) = drive(config(rosenbrock(8), 20, 20, 20, 5, TREND_SEED));
    let fresh: Vec<u64> = batch::map(&reports, |r| {
        let mut c = config(rosenbrock(8), r.k, r.k, 20, 1, TREND_SEED);
        c.memoize = false;
        final_report(c).n_like_evals_cumulative
    });
    let mut ok = true;
    let mut lines = Vec::new();
    let mut fresh_sum = fresh[0];
    for (j, r) in reports.iter().enumerate().skip(1) {
        fresh_sum += fresh[j];
        let saving = 1.0 - r.n_like_evals_cumulative as f64 / fresh_sum as f64;
        ok &= r.n_memo_hits > 0 && saving >= 0.2;
        lines.push(format!(
            "it{} hits {} saving {:.0}%",
            r.outer_iteration,
            r.n_memo_hits,
            100.0 * saving
        ));
    }
    verdict(ok, lines.join(", "))
}

fn jsonl(reports: &[SnowballReport]) -> String {
    reports
        .iter()
        .map(|r| serde_json::to_string(r).unwrap() + "\n")
        .collect()
}

fn determinism_and_resume() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let c = config(rosenbrock(4), 20, 20, 20, 6, 3);
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    fs::write(&a, jsonl(&drive(c.clone()).0)).unwrap();
    fs::write(&b, jsonl(&drive(c.clone()).0)).unwrap();
    let same_seed = fs::read(&a).unwrap() == fs::read(&b).unwrap();

    let ckpt = dir.path().join("run.snsckpt");
    let mut first = c.clone();
    first.max_outer_iterations = 3;
    let mut sb = Snowball::new(first).unwrap();
    while !sb.is_finished() {
        sb.run_next().unwrap();
    }
    save_checkpoint(&Checkpoint::capture(&sb), &ckpt).unwrap();
    drop(sb);
    let mut resumed = load_checkpoint(&ckpt).unwrap().resume().unwrap();
    resumed.set_max_outer_iterations(6);
    while !resumed.is_finished() {
        resumed.run_next().unwrap();
    }
    let r = dir.path().join("resumed.jsonl");
    fs::write(&r, jsonl(resumed.reports())).unwrap();
    let resume_same = fs::read(&a).unwrap() == fs::read(&r).unwrap();
    verdict(
        same_seed && resume_same,
        format!("rerun identical: {same_seed}, resume after 3 identical: {resume_same}"),
    )
}

fn bookkeeping() -> Verdict {
    let v = VIOLATIONS.lock().unwrap();
    let n = RUNS_CHECKED.load(Ordering::Relaxed);
    let mut detail = format!("{n} runs checked, {} violations", v.len());
    if let Some(first) = v.first() {
        detail.push_str(&format!("; first: {first}"));
    }
    verdict(v.is_empty() && n > 0, detail)
}

fn main() {
    // Fast enough to run under `cargo test`; the filter args it passes are ignored.
    let criteria: Vec<Criterion> = vec![
        ("1", "constant likelihood exactness", constant_exactness),
        ("2", "gaussian oracle accuracy", gaussian_accuracy),
        (
            "3",
            "rosenbrock d=2 quadrature accuracy",
            rosenbrock_accuracy,
        ),
        ("4", "snowball trend, rosenbrock d=20", || {
            trend(20, 10, None)
        }),
        ("4b", "snowball trend, rosenbrock d=8 under 5 min", || {
            trend(8, 10, Some(300.0))
        }),
        ("5", "M and K equivalence", m_k_equivalence),
        ("6", "variance scaling with K", variance_scaling),
        ("7", "restricted sampler correctness", lrps_correctness),
        ("8", "adaptation targets 0.234", adaptation_target),
        ("9", "memoization saving", memo_saving),
        ("10", "determinism and resume", determinism_and_resume),
        ("11", "bookkeeping invariants on every run", bookkeeping),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        let start = Instant::now();
        let v = run();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        if !v.pass {
            failed += 1;
        }
        println!(
            "[{tag}] {id}. {name}: {} ({:.1} s)",
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {failed} failing criteria");
    if failed > 0 {
        std::process::exit(1);
    }
}
