use super::gamma::{ln_beta, ln_gamma};
use super::quad::{integrate_beta_kernel, QuadOptions};
use super::{Backend, EvalStrategy, LogValue, SpecialError};

/// Running signed sum `sum · exp(scale)` that rescales as terms grow.
#[derive(Debug, Clone, Copy)]
struct LogAccumulator {
    scale: f64,
    sum: f64,
}

impl LogAccumulator {
    fn new() -> Self {
        LogAccumulator {
            scale: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    fn add(&mut self, log_mag: f64, sign: f64) {
        if log_mag == f64::NEG_INFINITY {
            return;
        }
        if log_mag > self.scale {
            let shrink = if self.scale == f64::NEG_INFINITY {
                0.0
            } else {
                (self.scale - log_mag).exp()
            };
            self.sum = self.sum * shrink + sign;
            self.scale = log_mag;
        } else {
            self.sum += sign * (log_mag - self.scale).exp();
        }
    }

    fn log_abs(&self) -> f64 {
        if self.sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.scale + self.sum.abs().ln()
        }
    }

    fn value(&self) -> LogValue {
        LogValue {
            log_magnitude: self.log_abs(),
            sign: if self.sum < 0.0 { -1.0 } else { 1.0 },
        }
    }
}

const QUIET_RUN: usize = 50;

fn check_finite(function: &'static str, args: &[f64]) -> Result<(), SpecialError> {
    if args.iter().all(|a| a.is_finite()) {
        Ok(())
    } else {
        Err(SpecialError::Domain {
            function,
            detail: format!("non-finite argument in {args:?}"),
        })
    }
}

fn is_nonpositive_integer(x: f64) -> bool {
    x <= 0.0 && x == x.round()
}

/// Generalized hypergeometric series `Σ Π(num)_k / Π(den)_k · x^k / k!` in
/// log space. `budget` is decremented by the number of terms used.
fn pfq_series(
    function: &'static str,
    num: &[f64],
    den: &[f64],
    x: f64,
    rel_tol: f64,
    budget: &mut usize,
) -> Result<LogValue, SpecialError> {
    let mut acc = LogAccumulator::new();
    let mut log_term = 0.0;
    let mut sign = 1.0;
    acc.add(0.0, 1.0);
    if x == 0.0 {
        return Ok(acc.value());
    }
    let log_tol = rel_tol.ln();
    let lx = x.abs().ln();
    let sx = x.signum();
    let mut quiet = 0;
    let mut k = 0usize;
    loop {
        if *budget == 0 {
            return Err(SpecialError::NoConvergence {
                function,
                terms: k,
            });
        }
        *budget -= 1;
        let kf = k as f64;
        let mut ratio_log = lx - (kf + 1.0).ln();
        let mut ratio_sign = sx;
        for &a in num {
            let v = a + kf;
            if v == 0.0 {
                return Ok(acc.value());
            }
            ratio_log += v.abs().ln();
            ratio_sign *= v.signum();
        }
        for &b in den {
            let v = b + kf;
            if v == 0.0 {
                return Err(SpecialError::Domain {
                    function,
                    detail: "pole in lower parameter".into(),
                });
            }
            ratio_log -= v.abs().ln();
            ratio_sign *= v.signum();
        }
        log_term += ratio_log;
        sign *= ratio_sign;
        acc.add(log_term, sign);
        k += 1;
        if log_term < log_tol + acc.log_abs() {
            quiet += 1;
            if quiet >= QUIET_RUN {
                return Ok(acc.value());
            }
        } else {
            quiet = 0;
        }
    }
}

fn series_1f1(a: f64, b: f64, x: f64, rel_tol: f64, budget: &mut usize) -> Result<LogValue, SpecialError> {
    if x < 0.0 {
        // Kummer's transformation keeps every term positive when b > a.
        let v = pfq_series("kummer_1f1", &[b - a], &[b], -x, rel_tol, budget)?;
        Ok(v.scale_log(x))
    } else {
        pfq_series("kummer_1f1", &[a], &[b], x, rel_tol, budget)
    }
}

fn series_2f1(
    a: f64,
    b: f64,
    c: f64,
    x: f64,
    rel_tol: f64,
    budget: &mut usize,
) -> Result<LogValue, SpecialError> {
    if x < -0.5 {
        // Pfaff: 2F1(a, b; c; x) = (1−x)^{−a} 2F1(a, c−b; c; x/(x−1)).
        let z = x / (x - 1.0);
        let v = pfq_series("gauss_2f1", &[a, c - b], &[c], z, rel_tol, budget)?;
        Ok(v.scale_log(-a * (-x).ln_1p()))
    } else if x.abs() < 1.0 {
        pfq_series("gauss_2f1", &[a, b], &[c], x, rel_tol, budget)
    } else {
        Err(SpecialError::Domain {
            function: "gauss_2f1",
            detail: format!("series backend needs x < 1, got {x}"),
        })
    }
}

fn quad_opts(strategy: &EvalStrategy) -> QuadOptions {
    QuadOptions::with_rel_tol(strategy.rel_tol.max(1e-14))
}

/// Confluent hypergeometric function `₁F₁(a; b; x)`.
pub fn log_kummer_1f1(a: f64, b: f64, x: f64) -> Result<LogValue, SpecialError> {
    log_kummer_1f1_with(a, b, x, &EvalStrategy::default())
}

pub fn log_kummer_1f1_with(
    a: f64,
    b: f64,
    x: f64,
    strategy: &EvalStrategy,
) -> Result<LogValue, SpecialError> {
    check_finite("kummer_1f1", &[a, b, x])?;
    if b <= 0.0 {
        return Err(SpecialError::Domain {
            function: "kummer_1f1",
            detail: format!("b must be positive, got {b}"),
        });
    }
    if a == b {
        return Ok(LogValue::positive(x));
    }
    let use_quad = strategy.backend == Backend::Quadrature && b > a && a > 0.0;
    if use_quad {
        let r = integrate_beta_kernel(a, b - a, |u, _| x * u, &quad_opts(strategy))?;
        Ok(LogValue::positive(r.log_value - ln_beta(b - a, a)))
    } else {
        let mut budget = strategy.max_terms;
        series_1f1(a, b, x, strategy.rel_tol, &mut budget)
    }
}

/// Gauss hypergeometric function `₂F₁(a, b; c; x)` for `x ≤ 1`.
pub fn log_gauss_2f1(a: f64, b: f64, c: f64, x: f64) -> Result<LogValue, SpecialError> {
    log_gauss_2f1_with(a, b, c, x, &EvalStrategy::default())
}

pub fn log_gauss_2f1_with(
    a: f64,
    b: f64,
    c: f64,
    x: f64,
    strategy: &EvalStrategy,
) -> Result<LogValue, SpecialError> {
    check_finite("gauss_2f1", &[a, b, c, x])?;
    if is_nonpositive_integer(c) {
        return Err(SpecialError::Domain {
            function: "gauss_2f1",
            detail: format!("c must not be a non-positive integer, got {c}"),
        });
    }
    if x > 1.0 {
        return Err(SpecialError::Domain {
            function: "gauss_2f1",
            detail: format!("x must not exceed 1, got {x}"),
        });
    }
    if x == 1.0 {
        if c - a - b <= 0.0 || c <= 0.0 {
            return Err(SpecialError::Domain {
                function: "gauss_2f1",
                detail: "divergent at x = 1".into(),
            });
        }
        // Gauss's summation theorem.
        return Ok(LogValue::positive(
            ln_gamma(c) + ln_gamma(c - a - b) - ln_gamma(c - a) - ln_gamma(c - b),
        ));
    }
    let (bb, aa) = if c > b && b > 0.0 {
        (b, a)
    } else if c > a && a > 0.0 {
        (a, b)
    } else {
        (f64::NAN, f64::NAN)
    };
    if strategy.backend == Backend::Quadrature && bb.is_finite() {
        let one_minus_x = 1.0 - x;
        let r = integrate_beta_kernel(
            bb,
            c - bb,
            |u, omu| {
                let base = if x > 0.0 { one_minus_x + x * omu } else { 1.0 - x * u };
                -aa * base.ln()
            },
            &quad_opts(strategy),
        )?;
        Ok(LogValue::positive(r.log_value - ln_beta(c - bb, bb)))
    } else {
        let mut budget = strategy.max_terms;
        series_2f1(a, b, c, x, strategy.rel_tol, &mut budget)
    }
}

/// Humbert confluent hypergeometric function `Φ₁(α, β, γ, x, y)` in Gordy's
/// argument order, for `y ≤ 1`.
pub fn log_humbert_phi1(
    alpha: f64,
    beta: f64,
    gamma: f64,
    x: f64,
    y: f64,
) -> Result<LogValue, SpecialError> {
    log_humbert_phi1_with(alpha, beta, gamma, x, y, &EvalStrategy::default())
}

pub fn log_humbert_phi1_with(
    alpha: f64,
    beta: f64,
    gamma: f64,
    x: f64,
    y: f64,
    strategy: &EvalStrategy,
) -> Result<LogValue, SpecialError> {
    check_finite("humbert_phi1", &[alpha, beta, gamma, x, y])?;
    if gamma <= 0.0 {
        return Err(SpecialError::Domain {
            function: "humbert_phi1",
            detail: format!("gamma must be positive, got {gamma}"),
        });
    }
    if y > 1.0 {
        return Err(SpecialError::Domain {
            function: "humbert_phi1",
            detail: format!("y must not exceed 1, got {y}"),
        });
    }
    let quad_ok = gamma > alpha && alpha > 0.0;
    if strategy.backend == Backend::Quadrature && quad_ok {
        let opts = quad_opts(strategy);
        let r = if y == 1.0 {
            let tail = gamma - alpha - beta;
            if tail <= 0.0 {
                return Err(SpecialError::Domain {
                    function: "humbert_phi1",
                    detail: "divergent at y = 1".into(),
                });
            }
            integrate_beta_kernel(alpha, tail, |u, _| x * u, &opts)?
        } else {
            let one_minus_y = 1.0 - y;
            integrate_beta_kernel(
                alpha,
                gamma - alpha,
                |u, omu| {
                    let base = if y > 0.0 { one_minus_y + y * omu } else { 1.0 - y * u };
                    x * u - beta * base.ln()
                },
                &opts,
            )?
        };
        return Ok(LogValue::positive(r.log_value - ln_beta(gamma - alpha, alpha)));
    }
    if y == 1.0 {
        return Err(SpecialError::Domain {
            function: "humbert_phi1",
            detail: "series backend needs |y| < 1".into(),
        });
    }
    let mut budget = strategy.max_terms;
    if x < 0.0 && y < 0.5 {
        // Φ₁(α, β, γ, x, y) = eˣ(1−y)^{−β} Φ₁(γ−α, β, γ, −x, y/(y−1)).
        let v = series_phi1(gamma - alpha, beta, gamma, -x, y / (y - 1.0), strategy.rel_tol, &mut budget)?;
        return Ok(v.scale_log(x - beta * (-y).ln_1p()));
    }
    series_phi1(alpha, beta, gamma, x, y, strategy.rel_tol, &mut budget)
}

fn series_phi1(
    alpha: f64,
    beta: f64,
    gamma: f64,
    x: f64,
    y: f64,
    rel_tol: f64,
    budget: &mut usize,
) -> Result<LogValue, SpecialError> {
    if y.abs() >= 1.0 {
        return Err(SpecialError::Domain {
            function: "humbert_phi1",
            detail: format!("series backend needs |y| < 1, got {y}"),
        });
    }
    outer_series("humbert_phi1", alpha, beta, gamma, y, rel_tol, budget, |n, budget| {
        series_1f1(alpha + n, gamma + n, x, rel_tol, budget)
    })
}

/// `Σₙ (α)ₙ(β)ₙ / ((γ)ₙ n!) yⁿ · inner(n)` with a shared term budget.
#[allow(clippy::too_many_arguments)]
fn outer_series<F>(
    function: &'static str,
    alpha: f64,
    beta: f64,
    gamma: f64,
    y: f64,
    rel_tol: f64,
    budget: &mut usize,
    inner: F,
) -> Result<LogValue, SpecialError>
where
    F: Fn(f64, &mut usize) -> Result<LogValue, SpecialError>,
{
    let mut acc = LogAccumulator::new();
    let mut log_c = 0.0;
    let mut sign_c = 1.0;
    let log_tol = rel_tol.ln();
    let mut quiet = 0;
    let mut n = 0usize;
    loop {
        let nf = n as f64;
        let term = inner(nf, budget)?;
        acc.add(log_c + term.log_magnitude, sign_c * term.sign);
        if log_c + term.log_magnitude < log_tol + acc.log_abs() {
            quiet += 1;
            if quiet >= QUIET_RUN {
                return Ok(acc.value());
            }
        } else {
            quiet = 0;
        }
        if y == 0.0 {
            return Ok(acc.value());
        }
        let a = alpha + nf;
        let b = beta + nf;
        if a == 0.0 || b == 0.0 {
            return Ok(acc.value());
        }
        let g = gamma + nf;
        if g == 0.0 {
            return Err(SpecialError::Domain {
                function,
                detail: "pole in lower parameter".into(),
            });
        }
        log_c += a.abs().ln() + b.abs().ln() - g.abs().ln() - (nf + 1.0).ln() + y.abs().ln();
        sign_c *= a.signum() * b.signum() * g.signum() * y.signum();
        n += 1;
        if *budget == 0 {
            return Err(SpecialError::NoConvergence { function, terms: n });
        }
    }
}

/// Appell function `F₁(α; β, β′; γ; x, y)` for `x, y < 1`.
pub fn log_appell_f1(
    alpha: f64,
    beta: f64,
    beta_prime: f64,
    gamma: f64,
    x: f64,
    y: f64,
) -> Result<LogValue, SpecialError> {
    log_appell_f1_with(alpha, beta, beta_prime, gamma, x, y, &EvalStrategy::default())
}

pub fn log_appell_f1_with(
    alpha: f64,
    beta: f64,
    beta_prime: f64,
    gamma: f64,
    x: f64,
    y: f64,
    strategy: &EvalStrategy,
) -> Result<LogValue, SpecialError> {
    check_finite("appell_f1", &[alpha, beta, beta_prime, gamma, x, y])?;
    if x >= 1.0 || y >= 1.0 {
        return Err(SpecialError::Domain {
            function: "appell_f1",
            detail: format!("need x, y < 1, got x={x}, y={y}"),
        });
    }
    if is_nonpositive_integer(gamma) {
        return Err(SpecialError::Domain {
            function: "appell_f1",
            detail: format!("gamma must not be a non-positive integer, got {gamma}"),
        });
    }
    if strategy.backend == Backend::Quadrature && gamma > alpha && alpha > 0.0 {
        let (omx, omy) = (1.0 - x, 1.0 - y);
        let base = |z: f64, omz: f64, u: f64, omu: f64| {
            if z > 0.0 {
                omz + z * omu
            } else {
                1.0 - z * u
            }
        };
        let r = integrate_beta_kernel(
            alpha,
            gamma - alpha,
            |u, omu| -beta * base(x, omx, u, omu).ln() - beta_prime * base(y, omy, u, omu).ln(),
            &quad_opts(strategy),
        )?;
        return Ok(LogValue::positive(r.log_value - ln_beta(gamma - alpha, alpha)));
    }
    if x.abs() >= 1.0 || y.abs() >= 1.0 {
        return Err(SpecialError::Domain {
            function: "appell_f1",
            detail: "series backend needs |x|, |y| < 1".into(),
        });
    }
    let mut budget = strategy.max_terms;
    let rel_tol = strategy.rel_tol;
    outer_series(
        "appell_f1",
        alpha,
        beta_prime,
        gamma,
        y,
        rel_tol,
        &mut budget,
        |n, budget| series_2f1(alpha + n, beta, gamma + n, x, rel_tol, budget),
    )
}
