//! Test-only oracles, independent of the sampler code they check.
#![allow(dead_code, clippy::excessive_precision)]

use snowball_ns::nested::{check_bookkeeping, RunOutcome};
use snowball_ns::problems::Problem;

/// Kolmogorov-Smirnov statistic of `xs` against a continuous CDF.
pub fn ks_statistic(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

/// Asymptotic p-value of the one-sample KS statistic `d` for `n` samples.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

fn adapt(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (v, err) = gk15(f, a, b);
    if err <= tol || depth == 0 {
        return v;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, 0.5 * tol, depth - 1) + adapt(f, m, b, 0.5 * tol, depth - 1)
}

/// Adaptive Gauss-Kronrod quadrature over `[a, b]`, pre-split into
/// `panels` intervals so narrow features are not missed.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize, abs_tol: f64) -> f64 {
    let w = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let lo = a + i as f64 * w;
            adapt(f, lo, lo + w, abs_tol / panels as f64, 40)
        })
        .sum()
}

/// Log-evidence of a 2-D problem under its unit-cube prior by nested
/// adaptive quadrature in the unit square.
pub fn log_evidence_2d(problem: &dyn Problem, scale: f64, tol: f64) -> f64 {
    // `scale` is a rough magnitude of the integral used to set absolute tolerances.
    let inner = |u0: f64| {
        let g = |u1: f64| {
            problem
                .log_likelihood(&problem.prior_transform(&[u0, u1]))
                .exp()
        };
        integrate(&g, 0.0, 1.0, 400, tol * scale)
    };
    integrate(&inner, 0.0, 1.0, 200, tol * scale).ln()
}

/// Panics with context if a run breaks a bookkeeping invariant.
pub fn assert_bookkeeping(outcome: &RunOutcome, what: &str) {
    if let Err(e) = check_bookkeeping(outcome) {
        panic!("{what}: {e}");
    }
}

/// L(theta) = theta on a U(0, 1) prior.
pub struct Linear;

impl Problem for Linear {
    fn name(&self) -> &str {
        "linear"
    }
    fn dim(&self) -> usize {
        1
    }
    fn prior_transform(&self, u: &[f64]) -> Vec<f64> {
        u.to_vec()
    }
    fn log_likelihood(&self, theta: &[f64]) -> f64 {
        theta[0].ln()
    }
}
