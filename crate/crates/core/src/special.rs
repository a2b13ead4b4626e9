//! Special functions and distribution kernels used across the filters.
//!
//! Polygamma functions are implemented directly (recurrence into the
//! asymptotic region, then the standard asymptotic series) because the
//! moment-matching solvers need `digamma`, `trigamma` *and* `tetragamma`
//! with consistent accuracy. Log-gamma and the regularized incomplete beta
//! come from `statrs`.

use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

/// Threshold above which the asymptotic series are accurate to ~1e-14.
const ASYMPTOTIC_X: f64 = 10.0;

/// Digamma function ψ(x) = d/dx ln Γ(x), for x > 0.
pub fn digamma(x: f64) -> f64 {
    debug_assert!(x > 0.0, "digamma needs x > 0, got {x}");
    let mut x = x;
    let mut acc = 0.0;
    while x < ASYMPTOTIC_X {
        acc -= 1.0 / x;
        x += 1.0;
    }
    // Abramowitz & Stegun 6.3.18.
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + x.ln()
        - 0.5 * inv
        - inv2
            * (1.0 / 12.0
                - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0))))
}

/// Trigamma function ψ₁(x) = d²/dx² ln Γ(x), for x > 0.
pub fn trigamma(x: f64) -> f64 {
    debug_assert!(x > 0.0, "trigamma needs x > 0, got {x}");
    let mut x = x;
    let mut acc = 0.0;
    while x < ASYMPTOTIC_X {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    // A&S 6.4.12.
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + inv * (1.0 + inv * (0.5 + inv * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 / 30.0)))))
}

/// Tetragamma function ψ₂(x) = d³/dx³ ln Γ(x), for x > 0.
pub fn tetragamma(x: f64) -> f64 {
    debug_assert!(x > 0.0, "tetragamma needs x > 0, got {x}");
    let mut x = x;
    let mut acc = 0.0;
    while x < ASYMPTOTIC_X {
        acc -= 2.0 / (x * x * x);
        x += 1.0;
    }
    // Derivative of the trigamma series above.
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc - inv2 * (1.0 + inv * (1.0 + inv * (0.5 - inv2 * (1.0 / 6.0 - inv2 * (1.0 / 6.0 - 3.0 * inv2 / 10.0)))))
}

/// log Γ(x), re-exported so callers have a single import point.
pub fn lgamma(x: f64) -> f64 {
    ln_gamma(x)
}

/// ln Γ(a + ½) − ln Γ(a), stable for all a > 0. The direct difference loses
/// precision once ln Γ(a) is huge, so large arguments switch to the
/// asymptotic ratio Γ(a+½)/Γ(a) = √a·(1 − 1/(8a) + 1/(128a²) + …).
fn lgamma_half_step(a: f64) -> f64 {
    if a < 1e6 {
        lgamma(a + 0.5) - lgamma(a)
    } else {
        0.5 * a.ln() + (-0.125 / a + 0.0078125 / (a * a)).ln_1p()
    }
}

/// log(Σ exp(xᵢ)) evaluated stably; −∞ for an empty or all-−∞ input.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let sum: f64 = xs.iter().map(|x| (x - m).exp()).sum();
    m + sum.ln()
}

/// Log density at `y` of a Student-t with `dof` degrees of freedom, location
/// `mean` and squared scale `scale` (so variance is `scale·dof/(dof−2)`).
pub fn student_t_logpdf(y: f64, mean: f64, scale: f64, dof: f64) -> f64 {
    debug_assert!(scale > 0.0 && dof > 0.0);
    let z2 = (y - mean) * (y - mean) / scale;
    lgamma_half_step(0.5 * dof)
        - 0.5 * (dof * std::f64::consts::PI).ln()
        - 0.5 * scale.ln()
        - 0.5 * (dof + 1.0) * (z2 / dof).ln_1p()
}

/// CDF at `y` of the same Student-t parameterization as [`student_t_logpdf`].
pub fn student_t_cdf(y: f64, mean: f64, scale: f64, dof: f64) -> f64 {
    debug_assert!(scale > 0.0 && dof > 0.0);
    let z = (y - mean) / scale.sqrt();
    let x = dof / (dof + z * z);
    let tail = 0.5 * beta_reg(0.5 * dof, 0.5, x);
    if z <= 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// Quantile of the Student-t via monotone bisection on [`student_t_cdf`].
pub fn student_t_quantile(p: f64, mean: f64, scale: f64, dof: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p));
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let sd = scale.sqrt();
    let (mut lo, mut hi) = (mean - sd, mean + sd);
    while student_t_cdf(lo, mean, scale, dof) > p {
        lo = mean + 2.0 * (lo - mean);
    }
    while student_t_cdf(hi, mean, scale, dof) < p {
        hi = mean + 2.0 * (hi - mean);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if student_t_cdf(mid, mean, scale, dof) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * (1.0 + hi.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// lnΓ(a + y) − lnΓ(a) for integer y ≥ 0, stable for huge `a` where the direct
/// difference loses most of its digits to cancellation: the Gamma recurrence
/// gives the difference exactly as Σ_{i<y} ln(a + i), which we use whenever the
/// loop is short enough to be worth the exactness.
fn lgamma_integer_step(a: f64, y: u64) -> f64 {
    if a > 1e8 && y <= 4096 {
        (0..y).map(|i| (a + i as f64).ln()).sum()
    } else {
        lgamma(a + y as f64) - lgamma(a)
    }
}

/// Log pmf of the negative binomial that arises from a Gamma(r, c) rate mixed
/// into a Poisson with the given exposure: success probability c/(c+exposure).
pub fn neg_binomial_logpmf(y: u64, r: f64, c: f64, exposure: f64) -> f64 {
    debug_assert!(r > 0.0 && c > 0.0 && exposure >= 0.0);
    let yf = y as f64;
    let mut lp = lgamma_integer_step(r, y) - lgamma(yf + 1.0) - r * (exposure / c).ln_1p();
    if y > 0 {
        lp += yf * (exposure / (c + exposure)).ln();
    }
    lp
}

/// CDF P(Y ≤ y) of the same negative binomial.
pub fn neg_binomial_cdf(y: i64, r: f64, c: f64, exposure: f64) -> f64 {
    if y < 0 {
        return 0.0;
    }
    if exposure == 0.0 {
        return 1.0;
    }
    let p0 = c / (c + exposure);
    beta_reg(r, y as f64 + 1.0, p0)
}
