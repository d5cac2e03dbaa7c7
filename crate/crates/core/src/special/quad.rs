//! Adaptive Gauss–Kronrod (G10/K21) integration of positive integrands
//! supplied as `log f`.
//!
//! The integrand is shifted by its located maximum before exponentiation, so
//! results are returned on the log scale and never overflow. Breakpoints are
//! placed geometrically around the mode to resolve sharply peaked kernels.

#![allow(clippy::excessive_precision)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::SpecialError;

const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.000000000000000000000000000000000,
];

const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077958109831074,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];

const GRID_POINTS: usize = 129;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    /// Target relative error of the integral.
    pub rel_tol: f64,
    /// Absolute error floor, on the scale where the integrand peaks at one.
    pub abs_tol: f64,
    pub max_intervals: usize,
    /// Largest relative error estimate accepted when the interval budget is
    /// exhausted before `rel_tol` is met.
    pub accept_rel: f64,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            rel_tol: 1e-12,
            abs_tol: 1e-300,
            max_intervals: 4000,
            accept_rel: 1e-7,
        }
    }
}

impl QuadOptions {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        QuadOptions {
            rel_tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogIntegral {
    pub log_value: f64,
    pub rel_err: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn kronrod21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut resg = 0.0;
    let mut resk = WGK[10] * fc;
    let mut resabs = resk.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for (j, &wg) in WG.iter().enumerate() {
        let jtw = 2 * j + 1;
        let dx = half * XGK[jtw];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[jtw] = f1;
        fv2[jtw] = f2;
        resg += wg * (f1 + f2);
        resk += WGK[jtw] * (f1 + f2);
        resabs += WGK[jtw] * (f1.abs() + f2.abs());
    }
    for j in 0..5 {
        let jtwm1 = 2 * j;
        let dx = half * XGK[jtwm1];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[jtwm1] = f1;
        fv2[jtwm1] = f2;
        resk += WGK[jtwm1] * (f1 + f2);
        resabs += WGK[jtwm1] * (f1.abs() + f2.abs());
    }
    let reskh = 0.5 * resk;
    let mut resasc = WGK[10] * (fc - reskh).abs();
    for j in 0..10 {
        resasc += WGK[j] * ((fv1[j] - reskh).abs() + (fv2[j] - reskh).abs());
    }
    let value = resk * half;
    resabs *= half.abs();
    resasc *= half.abs();
    let mut err = ((resk - resg) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    (value, err)
}

fn golden_max<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64) -> (f64, f64) {
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (a.abs() + b.abs()).max(1e-300) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Distance from `mode` toward `edge` at which `log_f` has dropped by about
/// one unit, found by repeatedly quartering the full distance.
fn drop_width<F: Fn(f64) -> f64>(log_f: &F, mode: f64, peak: f64, edge: f64) -> f64 {
    let full = edge - mode;
    let mut h = full;
    for _ in 0..40 {
        let v = log_f(mode + h);
        if v.is_finite() && peak - v <= 1.0 {
            break;
        }
        h *= 0.25;
    }
    h
}

/// `log ∫_lo^hi exp(log_f(t)) dt` for a finite interval and an integrand that
/// is non-negative and bounded on the open interval.
pub fn integrate_log<F: Fn(f64) -> f64>(
    log_f: F,
    lo: f64,
    hi: f64,
    opts: &QuadOptions,
) -> Result<LogIntegral, SpecialError> {
    if !(lo.is_finite() && hi.is_finite()) || hi < lo {
        return Err(SpecialError::Domain {
            function: "integrate_log",
            detail: format!("invalid interval [{lo}, {hi}]"),
        });
    }
    if hi == lo {
        return Ok(LogIntegral {
            log_value: f64::NEG_INFINITY,
            rel_err: 0.0,
            evaluations: 0,
        });
    }
    let span = hi - lo;
    let mut best_i = 0;
    let mut best = f64::NEG_INFINITY;
    let mut grid = [0.0; GRID_POINTS];
    for (i, g) in grid.iter_mut().enumerate() {
        let t = lo + span * (i as f64 + 0.5) / GRID_POINTS as f64;
        let v = log_f(t);
        if v.is_nan() || v == f64::INFINITY {
            return Err(SpecialError::Domain {
                function: "integrate_log",
                detail: format!("integrand not finite at {t}"),
            });
        }
        *g = v;
        if v > best {
            best = v;
            best_i = i;
        }
    }
    if best == f64::NEG_INFINITY {
        return Ok(LogIntegral {
            log_value: f64::NEG_INFINITY,
            rel_err: 0.0,
            evaluations: GRID_POINTS,
        });
    }
    let node = |i: usize| lo + span * (i as f64 + 0.5) / GRID_POINTS as f64;
    let bl = if best_i == 0 { lo } else { node(best_i - 1) };
    let br = if best_i + 1 == GRID_POINTS { hi } else { node(best_i + 1) };
    let safe = |t: f64| {
        let v = log_f(t);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let (mut mode, refined) = golden_max(&safe, bl, br);
    let mut peak = refined;
    if !(refined > best) {
        mode = node(best_i);
        peak = best;
    }
    if peak == f64::INFINITY {
        return Err(SpecialError::Domain {
            function: "integrate_log",
            detail: "integrand unbounded".into(),
        });
    }

    let mut breaks = vec![lo];
    let tiny = 1e-14 * span;
    if mode - lo > tiny {
        let w = -drop_width(&safe, mode, peak, lo);
        let mut left = Vec::new();
        let mut h = w;
        while mode - h > lo + tiny && h > tiny {
            left.push(mode - h);
            h *= 4.0;
        }
        left.reverse();
        breaks.extend(left);
        breaks.push(mode);
    }
    if hi - mode > tiny {
        let w = drop_width(&safe, mode, peak, hi);
        let mut h = w;
        while mode + h < hi - tiny && h > tiny {
            breaks.push(mode + h);
            h *= 4.0;
        }
    }
    breaks.push(hi);
    breaks.dedup_by(|a, b| (*a - *b).abs() <= 0.0);

    let scale = peak;
    let evals = std::cell::Cell::new(0usize);
    let g = |t: f64| {
        evals.set(evals.get() + 1);
        let v = log_f(t) - scale;
        if v.is_nan() {
            f64::NAN
        } else {
            v.exp()
        }
    };

    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    for w in breaks.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let (v, e) = kronrod21(&g, w[0], w[1]);
        total += v;
        total_err += e;
        heap.push(Segment {
            a: w[0],
            b: w[1],
            value: v,
            err: e,
        });
    }
    let mut frozen_err = 0.0;
    let mut count = heap.len();
    while total_err + frozen_err > (opts.rel_tol * total.abs()).max(opts.abs_tol)
        && count < opts.max_intervals
    {
        let Some(seg) = heap.pop() else { break };
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b || (seg.b - seg.a) < 1e-15 * span {
            frozen_err += seg.err;
            total_err -= seg.err;
            continue;
        }
        let (v1, e1) = kronrod21(&g, seg.a, mid);
        let (v2, e2) = kronrod21(&g, mid, seg.b);
        total += v1 + v2 - seg.value;
        total_err += e1 + e2 - seg.err;
        heap.push(Segment {
            a: seg.a,
            b: mid,
            value: v1,
            err: e1,
        });
        heap.push(Segment {
            a: mid,
            b: seg.b,
            value: v2,
            err: e2,
        });
        count += 1;
    }
    // Recompute sums to shed accumulated rounding from incremental updates.
    let (sum, err_sum) = heap
        .iter()
        .fold((0.0, 0.0), |(s, e), seg| (s + seg.value, e + seg.err));
    let err_sum = err_sum + frozen_err;
    if !sum.is_finite() || !err_sum.is_finite() || sum <= 0.0 {
        return Err(SpecialError::Quadrature {
            lo,
            hi,
            rel_err: f64::NAN,
        });
    }
    let rel_err = err_sum / sum;
    if rel_err > opts.accept_rel.max(opts.rel_tol) {
        return Err(SpecialError::Quadrature { lo, hi, rel_err });
    }
    Ok(LogIntegral {
        log_value: scale + sum.ln(),
        rel_err,
        evaluations: evals.get() + GRID_POINTS,
    })
}

/// `log ∫₀¹ u^{α−1}(1−u)^{β−1} h(u) du` with `log_h(u, 1−u)` supplied.
///
/// The interval is split at one half and each half is mapped so that the
/// power-law endpoint behaviour becomes smooth: `u = t^{1/min(α,1)}` on the
/// left and `1−u = s^{1/min(β,1)}` on the right. Passing `1−u` separately
/// lets callers form quantities like `1 − yu` without cancellation.
pub fn integrate_beta_kernel<H: Fn(f64, f64) -> f64>(
    alpha: f64,
    beta: f64,
    log_h: H,
    opts: &QuadOptions,
) -> Result<LogIntegral, SpecialError> {
    if !(alpha > 0.0 && beta > 0.0) || !alpha.is_finite() || !beta.is_finite() {
        return Err(SpecialError::Domain {
            function: "integrate_beta_kernel",
            detail: format!("exponents must be positive, got alpha={alpha}, beta={beta}"),
        });
    }
    let a1 = alpha.min(1.0);
    let b1 = beta.min(1.0);
    let ka = 1.0 / a1;
    let kb = 1.0 / b1;

    let left = |t: f64| {
        let lt = t.ln();
        let u = (ka * lt).exp();
        let omu = -(ka * lt).exp_m1();
        let power = if alpha / a1 == 1.0 {
            0.0
        } else {
            (alpha / a1 - 1.0) * lt
        };
        let tail = if beta == 1.0 {
            0.0
        } else {
            (beta - 1.0) * (-u).ln_1p()
        };
        ka.ln() + power + tail + log_h(u, omu)
    };
    let right = |s: f64| {
        let ls = s.ln();
        let omu = (kb * ls).exp();
        let u = -(kb * ls).exp_m1();
        let power = if beta / b1 == 1.0 {
            0.0
        } else {
            (beta / b1 - 1.0) * ls
        };
        let head = if alpha == 1.0 {
            0.0
        } else {
            (alpha - 1.0) * (-omu).ln_1p()
        };
        kb.ln() + power + head + log_h(u, omu)
    };
    let l = integrate_log(left, 0.0, 0.5f64.powf(a1), opts)?;
    let r = integrate_log(right, 0.0, 0.5f64.powf(b1), opts)?;
    let log_value = super::log_add_exp(l.log_value, r.log_value);
    let wl = (l.log_value - log_value).exp();
    let wr = (r.log_value - log_value).exp();
    Ok(LogIntegral {
        log_value,
        rel_err: wl * l.rel_err + wr * r.rel_err,
        evaluations: l.evaluations + r.evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::ln_beta;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate_log(|t: f64| 3.0 * t.ln(), 0.0, 2.0, &QuadOptions::default()).unwrap();
        assert!((r.log_value - 4f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn sharp_gaussian_peak() {
        let mu = 0.3;
        let sd = 1e-6;
        let f = |t: f64| -0.5 * ((t - mu) / sd).powi(2);
        let r = integrate_log(f, 0.0, 1.0, &QuadOptions::default()).unwrap();
        let exact = (sd * (2.0 * std::f64::consts::PI).sqrt()).ln();
        assert!((r.log_value - exact).abs() < 1e-11, "{}", r.log_value - exact);
    }

    #[test]
    fn beta_kernel_matches_beta_function() {
        for &(a, b) in &[(0.5, 0.5), (0.01, 3.0), (2.0, 0.02), (300.0, 7.5), (1.0, 1.0)] {
            let r = integrate_beta_kernel(a, b, |_, _| 0.0, &QuadOptions::default()).unwrap();
            let exact = ln_beta(a, b);
            assert!(
                ((r.log_value - exact) / exact.abs().max(1.0)).abs() < 1e-12,
                "a={a} b={b}: {} vs {exact}",
                r.log_value
            );
        }
    }

    #[test]
    fn huge_exponential_tilt() {
        // ∫ e^{x u} du = (e^x − 1)/x
        let x = 5000.0;
        let r = integrate_beta_kernel(1.0, 1.0, |u, _| x * u, &QuadOptions::default()).unwrap();
        let exact = x + (-(-x).exp()).ln_1p() - x.ln();
        assert!((r.log_value - exact).abs() < 1e-11);
    }
}
