//! Univariate conjugate discount DLM: the decoupled building block.
//!
//! Model for one series y_t:
//!
//! ```text
//!   y_t     = F_t' θ_t + ν_t,          ν_t | λ_t ~ N(0, 1/λ_t)
//!   θ_t     = G_t θ_{t-1} + ω_t        (evolution noise implied by discounts)
//! ```
//!
//! with conjugate posterior (θ_t, λ_t) | D_t in normal/inverse-gamma form:
//! λ_t ~ Gamma(n_t/2, n_t·s_t/2) and θ_t | λ_t ~ N(m_t, C_t/(s_t·λ_t)), so
//! that marginally θ_t ~ T_{n_t}(m_t, C_t) with Var(θ_t|D_t) = C_t·n_t/(n_t−2).
//! State information decays through blockwise discount factors δ and the
//! volatility posterior through β, in place of explicit evolution variances.
//!
//! The recursions are the standard ones (Prado & West, *Time Series:
//! Modeling, Computation and Inference*, ch. 4): evolve → one-step Student-t
//! forecast → conjugate update.

use std::borrow::Cow;
use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};

use crate::error::{CoreError, Result};
use crate::linalg::{psd_factor, psd_project, quad_form, symmetrize};
use crate::regression::{BlockDiscounts, DiscountBlock, RegressionLayout};
use crate::special::student_t_logpdf;

/// Forecast spreads below this are treated as a mis-specified model rather
/// than repaired.
const Q_FLOOR: f64 = 1e-12;

/// Transition matrix, fixed or supplied per time index.
#[derive(Clone)]
pub enum Transition {
    Fixed(Array2<f64>),
    Supplier(Arc<dyn Fn(usize) -> Array2<f64> + Send + Sync>),
}

impl Transition {
    pub fn at(&self, t: usize) -> Cow<'_, Array2<f64>> {
        match self {
            Transition::Fixed(g) => Cow::Borrowed(g),
            Transition::Supplier(f) => Cow::Owned(f(t)),
        }
    }
}

impl fmt::Debug for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transition::Fixed(g) => write!(f, "Transition::Fixed({}×{})", g.nrows(), g.ncols()),
            Transition::Supplier(_) => write!(f, "Transition::Supplier(<fn>)"),
        }
    }
}

/// Model definition for one series: state layout, transition, and discounts.
#[derive(Debug, Clone)]
pub struct DlmSpec {
    pub layout: RegressionLayout,
    pub transition: Transition,
    pub blocks: Vec<DiscountBlock>,
    /// Volatility discount β ∈ (0,1].
    pub beta: f64,
}

impl DlmSpec {
    /// Canonical constructor: transition and discount blocks derived from the
    /// layout, one δ per term block.
    pub fn new(layout: RegressionLayout, discounts: &BlockDiscounts, beta: f64) -> Result<Self> {
        discounts.validate()?;
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(CoreError::config(format!("volatility discount must lie in (0,1], got {beta}")));
        }
        let transition = Transition::Fixed(layout.transition());
        let blocks = layout.blocks(discounts);
        Ok(DlmSpec { layout, transition, blocks, beta })
    }

    pub fn state_dim(&self) -> usize {
        self.layout.state_dim()
    }

    pub(crate) fn transition_at(&self, t: usize) -> Result<Cow<'_, Array2<f64>>> {
        let g = self.transition.at(t);
        let p = self.state_dim();
        if g.nrows() != p || g.ncols() != p {
            return Err(CoreError::config(format!(
                "transition matrix is {}×{}, state dimension is {p}",
                g.nrows(),
                g.ncols()
            )));
        }
        Ok(g)
    }
}

/// Conjugate normal/inverse-gamma posterior (or evolved prior) for one series.
#[derive(Debug, Clone)]
pub struct NigPosterior {
    /// Location m_t (a_t when this value is an evolved prior).
    pub mean: Array1<f64>,
    /// Scale matrix C_t (R_t for a prior); θ|λ has covariance C_t/(s_t·λ).
    pub scale: Array2<f64>,
    /// Degrees of freedom n_t of the volatility posterior.
    pub dof: f64,
    /// Point volatility estimate s_t ≈ 1/λ_t; the gamma posterior on λ_t has
    /// shape n_t/2 and rate n_t·s_t/2.
    pub s: f64,
}

impl NigPosterior {
    pub fn new(mean: Array1<f64>, scale: Array2<f64>, dof: f64, s: f64) -> Result<Self> {
        let p = mean.len();
        if scale.nrows() != p || scale.ncols() != p {
            return Err(CoreError::config(format!(
                "scale matrix is {}×{}, mean has length {p}",
                scale.nrows(),
                scale.ncols()
            )));
        }
        if !(dof > 0.0) || !(s > 0.0) {
            return Err(CoreError::config(format!("dof and point volatility must be positive, got ({dof}, {s})")));
        }
        Ok(NigPosterior { mean, scale, dof, s })
    }

    /// Weakly informative starting posterior: zero mean, `c0·I` scale.
    pub fn diffuse(state_dim: usize, c0: f64, dof: f64, s: f64) -> Result<Self> {
        NigPosterior::new(
            Array1::zeros(state_dim),
            Array2::eye(state_dim) * c0,
            dof,
            s,
        )
    }

    pub fn state_dim(&self) -> usize {
        self.mean.len()
    }
}

/// One-step Student-t forecast: y ~ T_dof(location, spread).
#[derive(Debug, Clone, Copy)]
pub struct StudentForecast {
    pub location: f64,
    /// Squared scale q_t (variance is q_t·dof/(dof−2) for dof > 2).
    pub spread: f64,
    pub dof: f64,
}

/// Result of a conjugate observation update.
#[derive(Debug, Clone)]
pub struct DlmUpdate {
    pub posterior: NigPosterior,
    pub forecast: StudentForecast,
    /// log p(y_t | D_{t−1}), the Student-t density at the observation.
    pub log_predictive: f64,
}

/// Evolve the time-(t−1) posterior to the time-t prior: a = G m,
/// R = G C G' inflated blockwise by 1/δ, dof discounted by β.
pub fn evolve(post: &NigPosterior, spec: &DlmSpec, t: usize) -> Result<NigPosterior> {
    let g = spec.transition_at(t)?;
    if post.state_dim() != spec.state_dim() {
        return Err(CoreError::config(format!(
            "posterior dimension {} does not match spec dimension {}",
            post.state_dim(),
            spec.state_dim()
        )));
    }
    let a = g.dot(&post.mean);
    let mut r = g.dot(&post.scale).dot(&g.t());
    symmetrize(&mut r);
    inflate_blocks(&mut r, &spec.blocks);
    Ok(NigPosterior { mean: a, scale: r, dof: spec.beta * post.dof, s: post.s })
}

/// Add the discount-implied evolution spread: R[b,b] += (1/δ_b − 1)·P[b,b]
/// per block, leaving cross-block terms untouched (component discounting).
pub(crate) fn inflate_blocks(p: &mut Array2<f64>, blocks: &[DiscountBlock]) {
    for b in blocks {
        if b.delta >= 1.0 {
            continue;
        }
        let scale = 1.0 / b.delta;
        for i in b.start..b.start + b.len {
            for j in b.start..b.start + b.len {
                p[[i, j]] *= scale;
            }
        }
    }
}

/// One-step forecast distribution given the evolved prior and regression
/// vector: f = F'a, q = F'RF + s, dof carried from the prior.
pub fn forecast_one(prior: &NigPosterior, f_vec: &Array1<f64>) -> Result<StudentForecast> {
    if f_vec.len() != prior.state_dim() {
        return Err(CoreError::config(format!(
            "regression vector length {} does not match state dimension {}",
            f_vec.len(),
            prior.state_dim()
        )));
    }
    let location = f_vec.dot(&prior.mean);
    let spread = quad_form(&f_vec.view(), &prior.scale.view()) + prior.s;
    if !(spread > Q_FLOOR) || !spread.is_finite() {
        return Err(CoreError::numeric(format!(
            "degenerate forecast spread q = {spread:.3e}; the model is mis-specified"
        )));
    }
    Ok(StudentForecast { location, spread, dof: prior.dof })
}

/// Conjugate observation update. `prior` is the evolved time-t prior; returns
/// the time-t posterior along with the one-step forecast and its log density
/// at `y`.
pub fn update(prior: &NigPosterior, f_vec: &Array1<f64>, y: f64) -> Result<DlmUpdate> {
    if !y.is_finite() {
        return Err(CoreError::data(format!("observation is not finite: {y}")));
    }
    let forecast = forecast_one(prior, f_vec)?;
    let (f, q, n) = (forecast.location, forecast.spread, prior.dof);
    let e = y - f;
    let log_predictive = student_t_logpdf(y, f, q, n);

    let rf = prior.scale.dot(f_vec);
    let a_gain = &rf / q;
    let mean = &prior.mean + &(&a_gain * e);
    let n1 = n + 1.0;
    let s1 = prior.s * (n + e * e / q) / n1;
    if !(s1 > 0.0) || !s1.is_finite() {
        return Err(CoreError::numeric(format!("volatility update produced s = {s1:.3e}")));
    }
    let shrink = s1 / prior.s;
    let mut scale = prior.scale.clone();
    let p = scale.nrows();
    for i in 0..p {
        for j in 0..p {
            scale[[i, j]] = shrink * (scale[[i, j]] - a_gain[i] * a_gain[j] * q);
        }
    }
    let scale = psd_project(&scale.view(), "dlm update")?;
    let posterior = NigPosterior { mean, scale, dof: n1, s: s1 };
    Ok(DlmUpdate { posterior, forecast, log_predictive })
}

/// Joint draws of (θ, λ) from a conjugate posterior.
#[derive(Debug, Clone)]
pub struct StateDraws {
    /// count × state_dim matrix of θ draws.
    pub thetas: Array2<f64>,
    /// count-vector of λ draws.
    pub lambdas: Array1<f64>,
}

/// Sample (θ, λ) pairs: λ ~ Gamma(n/2, n·s/2), then θ | λ ~ N(m, C/(s·λ)).
pub fn simulate<R: Rng + ?Sized>(post: &NigPosterior, count: usize, rng: &mut R) -> Result<StateDraws> {
    if count == 0 {
        return Err(CoreError::config("simulate needs count ≥ 1"));
    }
    let p = post.state_dim();
    let factor = psd_factor(&post.scale.view());
    let gamma = gamma_dist(post.dof, post.s)?;
    let mut thetas = Array2::<f64>::zeros((count, p));
    let mut lambdas = Array1::<f64>::zeros(count);
    let mut z = Array1::<f64>::zeros(p);
    for i in 0..count {
        let lambda = gamma.sample(rng);
        lambdas[i] = lambda;
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let noise = factor.dot(&z) / (post.s * lambda).sqrt();
        for j in 0..p {
            thetas[[i, j]] = post.mean[j] + noise[j];
        }
    }
    Ok(StateDraws { thetas, lambdas })
}

fn gamma_dist(dof: f64, s: f64) -> Result<Gamma<f64>> {
    // λ ~ Gamma(shape n/2, rate n·s/2); rand_distr parameterizes by scale.
    Gamma::new(0.5 * dof, 2.0 / (dof * s))
        .map_err(|e| CoreError::numeric(format!("invalid gamma posterior (dof {dof}, s {s}): {e}")))
}

/// Per-horizon forward-simulation kernel for one series: the transition, the
/// discount-implied innovation factor at that step, and the β-shock bookkeeping.
/// Kernels are deterministic given the spec and the forecast-origin posterior,
/// so they are computed once and shared across all Monte Carlo paths.
#[derive(Debug, Clone)]
pub struct PathKernel {
    pub g: Array2<f64>,
    /// Factor L with L·L' = W_h (zero when all δ = 1).
    pub w_factor: Option<Array2<f64>>,
}

/// Kernels for `k` steps ahead starting from scale `c0` at time `origin`
/// (the kernel for step h uses the transition at time origin + h).
pub fn path_kernels(spec: &DlmSpec, c0: &Array2<f64>, origin: usize, k: usize) -> Result<Vec<PathKernel>> {
    let mut kernels = Vec::with_capacity(k);
    let mut c = c0.clone();
    for h in 1..=k {
        let g = spec.transition_at(origin + h)?.into_owned();
        let mut p = g.dot(&c).dot(&g.t());
        symmetrize(&mut p);
        let mut w = Array2::<f64>::zeros(p.raw_dim());
        let mut any = false;
        for b in &spec.blocks {
            if b.delta >= 1.0 {
                continue;
            }
            let f = 1.0 / b.delta - 1.0;
            for i in b.start..b.start + b.len {
                for j in b.start..b.start + b.len {
                    w[[i, j]] = f * p[[i, j]];
                    if w[[i, j]] != 0.0 {
                        any = true;
                    }
                }
            }
        }
        let w_factor = if any { Some(psd_factor(&w.view())) } else { None };
        c = &p + &w;
        kernels.push(PathKernel { g, w_factor });
    }
    Ok(kernels)
}

/// One Monte Carlo path's state for one series: sampled (θ, λ) plus the dof
/// tracker that drives the β-shock volatility evolution.
#[derive(Debug, Clone)]
pub struct PathState {
    pub theta: Array1<f64>,
    pub lambda: f64,
    dof: f64,
    s: f64,
    beta: f64,
}

impl PathState {
    /// Draw a starting state from the forecast-origin posterior.
    pub fn draw<R: Rng + ?Sized>(post: &NigPosterior, spec: &DlmSpec, rng: &mut R) -> Result<Self> {
        let draws = simulate(post, 1, rng)?;
        Ok(PathState {
            theta: draws.thetas.row(0).to_owned(),
            lambda: draws.lambdas[0],
            dof: post.dof,
            s: post.s,
            beta: spec.beta,
        })
    }

    /// Advance one step: multiplicative beta shock on λ (the discount
    /// volatility evolution λ_t = λ_{t−1}·η_t/β with η ~ Beta(βn/2, (1−β)n/2)),
    /// then θ ← Gθ + ω with ω | λ ~ N(0, W_h/(s·λ)).
    pub fn step<R: Rng + ?Sized>(&mut self, kernel: &PathKernel, rng: &mut R) -> Result<()> {
        if self.beta < 1.0 {
            let a = 0.5 * self.beta * self.dof;
            let b = 0.5 * (1.0 - self.beta) * self.dof;
            let eta = Beta::new(a, b)
                .map_err(|e| CoreError::numeric(format!("volatility shock Beta({a}, {b}): {e}")))?
                .sample(rng);
            // Beta samples can hit exactly 0 in floating point for small dof.
            self.lambda *= (eta / self.beta).max(1e-300);
            self.dof *= self.beta;
        }
        let mut theta = kernel.g.dot(&self.theta);
        if let Some(w_factor) = &kernel.w_factor {
            let mut z = Array1::<f64>::zeros(theta.len());
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            let noise = w_factor.dot(&z) / (self.s * self.lambda).sqrt();
            theta += &noise;
        }
        self.theta = theta;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::{PredictorInputs, Term};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn level_spec(delta: f64, beta: f64) -> DlmSpec {
        DlmSpec::new(
            RegressionLayout::new(vec![Term::Trend { order: 0 }]).unwrap(),
            &BlockDiscounts::uniform(delta),
            beta,
        )
        .unwrap()
    }

    #[test]
    fn test_evolve_inflates_scale_by_discount() {
        let spec = level_spec(0.8, 1.0);
        let post = NigPosterior::new(array![0.0], array![[1.0]], 5.0, 1.0).unwrap();
        let prior = evolve(&post, &spec, 0).unwrap();
        assert_abs_diff_eq!(prior.mean[0], 0.0);
        assert_abs_diff_eq!(prior.scale[[0, 0]], 1.25, epsilon = 1e-14);
    }

    #[test]
    fn test_evolve_identity_when_no_discounting() {
        let spec = level_spec(1.0, 1.0);
        let post = NigPosterior::new(array![1.5], array![[0.3]], 7.0, 2.0).unwrap();
        let prior = evolve(&post, &spec, 3).unwrap();
        assert_eq!(prior.mean, post.mean);
        assert_eq!(prior.scale, post.scale);
        assert_eq!(prior.dof, post.dof);
        assert_eq!(prior.s, post.s);
    }

    #[test]
    fn test_evolve_discounts_dof() {
        let spec = level_spec(1.0, 0.98);
        let post = NigPosterior::new(array![0.0], array![[1.0]], 10.0, 1.0).unwrap();
        let prior = evolve(&post, &spec, 0).unwrap();
        assert_abs_diff_eq!(prior.dof, 9.8, epsilon = 1e-14);
    }

    #[test]
    fn test_evolve_blockwise_leaves_cross_terms() {
        // Two blocks with different discounts: diagonal blocks inflate by
        // 1/δ_b, the cross-covariance stays as G C G' leaves it.
        let layout =
            RegressionLayout::new(vec![Term::Trend { order: 0 }, Term::Covariate { index: 0 }]).unwrap();
        let spec = DlmSpec::new(
            layout,
            &BlockDiscounts { trend: 0.5, regression: 0.8, parental: 1.0 },
            1.0,
        )
        .unwrap();
        let c = array![[2.0, 0.6], [0.6, 1.0]];
        let post = NigPosterior::new(array![0.0, 0.0], c, 5.0, 1.0).unwrap();
        let prior = evolve(&post, &spec, 0).unwrap();
        assert_abs_diff_eq!(prior.scale[[0, 0]], 4.0, epsilon = 1e-14);
        assert_abs_diff_eq!(prior.scale[[1, 1]], 1.25, epsilon = 1e-14);
        assert_abs_diff_eq!(prior.scale[[0, 1]], 0.6, epsilon = 1e-14);
    }

    #[test]
    fn test_forecast_one_arithmetic() {
        let prior = NigPosterior::new(array![2.0, 5.0], Array2::eye(2), 5.0, 1.0).unwrap();
        let fc = forecast_one(&prior, &array![1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(fc.location, 2.0);
        assert_abs_diff_eq!(fc.spread, 2.0);
        let zero = forecast_one(
            &NigPosterior::new(array![0.0, 0.0], Array2::eye(2), 5.0, 1.0).unwrap(),
            &array![3.0, -4.0],
        )
        .unwrap();
        assert_abs_diff_eq!(zero.location, 0.0);
    }

    #[test]
    fn test_forecast_density_matches_quadrature_normalized_t() {
        // Against a numeric oracle: the unnormalized T kernel integrated on a
        // wide grid gives the normalizing constant; the implied density must
        // match log_predictive pointwise.
        let prior = NigPosterior::new(
            array![0.4, -1.2, 2.0],
            array![[1.0, 0.2, 0.0], [0.2, 2.0, 0.3], [0.0, 0.3, 0.5]],
            6.0,
            1.3,
        )
        .unwrap();
        let f_vec = array![1.0, -0.5, 0.25];
        let fc = forecast_one(&prior, &f_vec).unwrap();
        let kernel = |y: f64| {
            let z2 = (y - fc.location) * (y - fc.location) / fc.spread;
            (1.0 + z2 / fc.dof).powf(-0.5 * (fc.dof + 1.0))
        };
        // Simpson's rule over ±80 scale units.
        let half_width = 80.0 * fc.spread.sqrt();
        let (lo, hi) = (fc.location - half_width, fc.location + half_width);
        let n = 200_000;
        let h = (hi - lo) / n as f64;
        let mut integral = kernel(lo) + kernel(hi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            integral += w * kernel(lo + i as f64 * h);
        }
        integral *= h / 3.0;
        for &y in &[fc.location, fc.location + 1.0, fc.location - 2.7] {
            let numeric = kernel(y) / integral;
            let analytic = student_t_logpdf(y, fc.location, fc.spread, fc.dof).exp();
            assert_abs_diff_eq!(analytic, numeric, epsilon = 1e-6 * numeric.max(1e-12));
        }
    }

    #[test]
    fn test_update_hand_worked_example() {
        let prior = NigPosterior::new(array![0.0], array![[1.0]], 1.0, 1.0).unwrap();
        let up = update(&prior, &array![1.0], 1.0).unwrap();
        assert_abs_diff_eq!(up.posterior.mean[0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(up.posterior.dof, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(up.posterior.s, 0.75, epsilon = 1e-14);
        assert_abs_diff_eq!(up.posterior.scale[[0, 0]], 0.375, epsilon = 1e-14);
    }

    #[test]
    fn test_update_zero_residual_keeps_mean() {
        let prior = NigPosterior::new(array![2.0], array![[0.5]], 4.0, 1.0).unwrap();
        let up = update(&prior, &array![1.0], 2.0).unwrap();
        assert_abs_diff_eq!(up.posterior.mean[0], 2.0, epsilon = 1e-14);
        // s shrinks toward s·n/(n+1) when the residual is zero.
        assert_abs_diff_eq!(up.posterior.s, 1.0 * 4.0 / 5.0, epsilon = 1e-14);
    }

    #[test]
    fn test_update_rejects_bad_observations() {
        let prior = NigPosterior::new(array![0.0], array![[1.0]], 4.0, 1.0).unwrap();
        assert!(matches!(update(&prior, &array![1.0], f64::NAN), Err(CoreError::Data(_))));
    }

    #[test]
    fn test_simulate_degenerate_scale_returns_mean() {
        let post = NigPosterior::new(array![3.0, -1.0], Array2::zeros((2, 2)), 8.0, 2.0).unwrap();
        let mut rng = crate::rng::stream(7, &[0]);
        let draws = simulate(&post, 100, &mut rng).unwrap();
        for i in 0..100 {
            assert_eq!(draws.thetas[[i, 0]], 3.0);
            assert_eq!(draws.thetas[[i, 1]], -1.0);
        }
    }

    #[test]
    fn test_simulate_mean_within_monte_carlo_error() {
        let post = NigPosterior::new(array![1.0, -2.0], array![[0.5, 0.1], [0.1, 0.8]], 10.0, 1.5).unwrap();
        let mut rng = crate::rng::stream(11, &[0]);
        let n = 1_000_000;
        let draws = simulate(&post, n, &mut rng).unwrap();
        for j in 0..2 {
            let col = draws.thetas.column(j);
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
            let se = (var / n as f64).sqrt();
            assert!(
                (mean - post.mean[j]).abs() < 4.0 * se,
                "component {j}: mean {mean} vs {} (se {se})",
                post.mean[j]
            );
        }
    }

    #[test]
    fn test_simulate_is_deterministic_given_seed() {
        let post = NigPosterior::new(array![0.0], array![[1.0]], 5.0, 1.0).unwrap();
        let a = simulate(&post, 50, &mut crate::rng::stream(3, &[1])).unwrap();
        let b = simulate(&post, 50, &mut crate::rng::stream(3, &[1])).unwrap();
        assert_eq!(a.thetas, b.thetas);
        assert_eq!(a.lambdas, b.lambdas);
    }

    #[test]
    fn test_batch_conjugate_regression_oracle() {
        // δ = β = 1, G = I, static regression: sequential filtering must equal
        // the batch normal/inverse-gamma regression posterior to 1e−10.
        let layout =
            RegressionLayout::new(vec![Term::Covariate { index: 0 }, Term::Covariate { index: 1 }]).unwrap();
        let spec = DlmSpec::new(layout, &BlockDiscounts::uniform(1.0), 1.0).unwrap();
        let m0 = array![0.2, -0.4];
        let c0 = array![[2.0, 0.3], [0.3, 1.0]];
        let (n0, s0) = (3.0, 1.4);
        let mut post = NigPosterior::new(m0.clone(), c0.clone(), n0, s0).unwrap();

        let mut rng = crate::rng::stream(99, &[0]);
        let steps = 50;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for t in 0..steps {
            let x = [rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)];
            let y = 1.0 + 0.5 * x[0] - 0.25 * x[1] + 0.3 * rng.sample::<f64, _>(StandardNormal);
            let prior = evolve(&post, &spec, t).unwrap();
            let f_vec = spec
                .layout
                .build_f(&PredictorInputs {
                    covariates: Some(&x),
                    factors: None,
                    lags: &crate::regression::NoHistory,
                    parent: &|_| None,
                })
                .unwrap();
            post = update(&prior, &f_vec, y).unwrap().posterior;
            xs.push(x);
            ys.push(y);
        }

        // Batch oracle: prior θ|v ~ N(m0, C0 v/s0), v ~ IG(n0/2, n0 s0/2).
        // Posterior precision (times v): s0·C0⁻¹ + X'X.
        let c0_lu = crate::linalg::Lu::factor(&c0.view());
        let c0_inv = c0_lu.inverse().unwrap();
        let mut prec = &c0_inv * s0;
        let mut rhs = prec.dot(&m0);
        let mut yty = 0.0;
        for (x, &y) in xs.iter().zip(&ys) {
            for i in 0..2 {
                for j in 0..2 {
                    prec[[i, j]] += x[i] * x[j];
                }
                rhs[i] += x[i] * y;
            }
            yty += y * y;
        }
        let prec_lu = crate::linalg::Lu::factor(&prec.view());
        let m_batch = prec_lu.solve(&rhs.view()).unwrap();
        let n_batch = n0 + steps as f64;
        let ss = yty + s0 * m0.dot(&c0_inv.dot(&m0)) - m_batch.dot(&prec.dot(&m_batch));
        let s_batch = (n0 * s0 + ss) / n_batch;
        let c_batch = prec_lu.inverse().unwrap() * s_batch;

        assert_abs_diff_eq!(post.dof, n_batch, epsilon = 1e-10);
        assert_abs_diff_eq!(post.s, s_batch, epsilon = 1e-10);
        for j in 0..2 {
            assert_abs_diff_eq!(post.mean[j], m_batch[j], epsilon = 1e-10);
            for i in 0..2 {
                assert_abs_diff_eq!(post.scale[[i, j]], c_batch[[i, j]], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn test_long_run_scale_stays_psd_and_dof_grows() {
        let spec = level_spec(0.95, 0.97);
        let mut post = NigPosterior::diffuse(1, 1.0, 2.0, 1.0).unwrap();
        let mut rng = crate::rng::stream(5, &[2]);
        for t in 0..1000 {
            let prior = evolve(&post, &spec, t).unwrap();
            let y = rng.sample::<f64, _>(StandardNormal);
            post = update(&prior, &array![1.0], y).unwrap().posterior;
            assert!(post.scale[[0, 0]] >= 0.0);
            assert!(post.dof >= 1.0);
        }
    }

    #[test]
    fn test_path_kernels_zero_innovation_without_discounting() {
        let spec = level_spec(1.0, 1.0);
        let kernels = path_kernels(&spec, &array![[0.4]], 0, 3).unwrap();
        assert_eq!(kernels.len(), 3);
        assert!(kernels.iter().all(|k| k.w_factor.is_none()));
    }
}
