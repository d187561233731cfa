//! Independent numerical oracles for the acceptance and integration tests.

#![allow(dead_code)]

use std::io::Write;
use std::sync::{Mutex, MutexGuard};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
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
// Gauss weights at XGK[1], XGK[3], XGK[5], XGK[7]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// 7-point Gauss / 15-point Kronrod pair on `[a, b]`: `(kronrod, |kronrod - gauss|)`.
pub fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive bisection on the G7K15 error estimate. The absolute tolerance is
/// at least `rel` times the first whole-interval estimate.
pub fn integrate(f: &impl Fn(f64) -> f64, a: f64, b: f64, rel: f64, abs: f64) -> f64 {
    fn rec(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: (f64, f64), rel: f64, abs: f64, depth: u32) -> f64 {
        let (v, e) = whole;
        if e <= abs.max(rel * v.abs()) || depth >= 50 {
            return v;
        }
        let m = 0.5 * (a + b);
        let l = gk15(f, a, m);
        let r = gk15(f, m, b);
        rec(f, a, m, l, rel, 0.5 * abs, depth + 1) + rec(f, m, b, r, rel, 0.5 * abs, depth + 1)
    }
    let first = gk15(f, a, b);
    rec(f, a, b, first, rel, abs.max(rel * first.0.abs()), 0)
}

/// Mode of a unimodal log-integrand: grid scan on `[lo, hi]`, then golden section.
pub fn log_mode(g: &impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> f64 {
    let mut best = lo;
    let mut best_v = f64::NEG_INFINITY;
    let mut s = lo;
    while s <= hi {
        let v = g(s);
        if v > best_v {
            best_v = v;
            best = s;
        }
        s += step;
    }
    let (mut a, mut b) = (best - step, best + step);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if g(c) > g(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

/// Limits outside which `g` has fallen `drop` below its value at `mode`.
pub fn log_support(g: &impl Fn(f64) -> f64, mode: f64, drop: f64, step: f64) -> (f64, f64) {
    let top = g(mode);
    let mut lo = mode;
    while g(lo) > top - drop {
        lo -= step;
    }
    let mut hi = mode;
    while g(hi) > top - drop {
        hi += step;
    }
    (lo, hi)
}

/// `ln int exp(g(s)) ds` for a unimodal `g` whose mode lies in `[lo, hi]`.
pub fn log_integral(g: &impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let mode = log_mode(g, lo, hi, 0.02);
    let top = g(mode);
    let (a, b) = log_support(g, mode, 60.0, 0.25);
    let v = integrate(&|s| (g(s) - top).exp(), a, b, 1e-13, 0.0);
    top + v.ln()
}

/// `ln y!` by direct summation.
pub fn ln_fact(y: u64) -> f64 {
    (2..=y).map(|k| (k as f64).ln()).sum()
}

/// Two-sided one-sample KS statistic of sorted data against CDF values at the data.
pub fn ks_statistic(cdf_at_sorted: &[f64]) -> f64 {
    let n = cdf_at_sorted.len() as f64;
    cdf_at_sorted
        .iter()
        .enumerate()
        .map(|(i, &f)| (f - i as f64 / n).max((i + 1) as f64 / n - f))
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov tail with Stephens' small-sample correction.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lam = (sn + 0.12 + 0.11 / sn) * d;
    if lam < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=200 {
        let t = 2.0 * (-2.0 * (j * j) as f64 * lam * lam).exp();
        sum += if j % 2 == 1 { t } else { -t };
        if t < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// CDF values at sorted draws for a density given by its log `g` in `s = ln u`.
pub fn cdf_at_sorted_draws(g: &impl Fn(f64) -> f64, sorted: &[f64]) -> Vec<f64> {
    let ss: Vec<f64> = sorted.iter().map(|u| u.ln()).collect();
    let mode = log_mode(g, ss[0] - 5.0, ss[ss.len() - 1] + 5.0, 0.01);
    let top = g(mode);
    let (lo, hi) = log_support(g, mode, 60.0, 0.25);
    let f = |s: f64| (g(s) - top).exp();
    let mut acc = Vec::with_capacity(ss.len());
    let (lo, hi) = (lo.min(ss[0]), hi.max(ss[ss.len() - 1]));
    let abs = 1e-14 * integrate(&f, lo, hi, 1e-12, 0.0);
    let mut total = integrate(&f, lo, ss[0], 0.0, abs);
    acc.push(total);
    for w in ss.windows(2) {
        total += if w[1] > w[0] { integrate(&f, w[0], w[1], 0.0, abs) } else { 0.0 };
        acc.push(total);
    }
    total += integrate(&f, ss[ss.len() - 1], hi, 0.0, abs);
    acc.into_iter().map(|v| v / total).collect()
}

static SERIAL: Mutex<()> = Mutex::new(());

/// Runs heavy tests one at a time so wall-clock budgets are meaningful.
pub fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Writes a status line past the test harness's output capture.
pub fn status(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

pub fn temp_dir(tag: &str) -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("odmix-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}
