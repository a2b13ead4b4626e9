//! Poisson dynamic generalized linear model with log link.
//!
//! Counts y_t ~ Po(exposure·μ_t) with log μ_t = F′θ_t, where θ_t evolves like
//! a DLM state (same transition/discount machinery, but no volatility track:
//! the observation noise is Poisson). Filtering works by conjugate gamma
//! matching: the Gaussian prior on the linear predictor F′θ ~ (f, q) is
//! matched to a Gamma(r, c) prior on μ via
//!
//!   digamma(r) − log c = f,    trigamma(r) = q,
//!
//! the count then updates the gamma conjugately (r+y, c+exposure), and the
//! posterior link moments map back onto the state by linear Bayes. The
//! one-step predictive is the implied negative binomial.
//!
//! The module also provides top-down multi-scale forecasting: an aggregate
//! model's simulated latent factors ([`FactorEnsemble`]) are pushed through
//! per-series count models so that shared-factor uncertainty propagates into
//! every series forecast.

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::ddnm::ForecastEnsemble;
use crate::dlm::{self, DlmSpec, NigPosterior, PathKernel};
use crate::error::{CoreError, Result};
use crate::linalg::{psd_factor, psd_project, quad_form, symmetrize};
use crate::regression::PredictorInputs;
use crate::rng::stream;
use crate::special::{digamma, neg_binomial_cdf, neg_binomial_logpmf, tetragamma, trigamma};

/// RNG stream tags for the two simulation entry points in this module.
const TAG_FACTOR: u64 = 0x66637472; // factor-path streams
const TAG_MICRO: u64 = 0x6d696372; // per-series multi-scale streams

/// Counts with a log rate above this are no longer exactly representable and
/// signal a runaway model rather than a forecast worth sampling.
const MAX_LOG_RATE: f64 = 46.0;

/// Gamma prior on a Poisson rate: shape `r`, rate `c` (mean r/c).
#[derive(Debug, Clone, Copy)]
pub struct GammaPair {
    pub shape: f64,
    pub rate: f64,
}

/// Match a Gaussian prior (f, q) on log μ to a Gamma(r, c) prior on μ by
/// equating the mean and variance of log μ under the gamma:
/// digamma(r) − log c = f and trigamma(r) = q.
///
/// The trigamma equation pins r alone; we solve it by damped Newton on log r
/// starting from the asymptotic inverse r₀ = 1/q, with a bisection bracket as
/// safeguard, then read off c = exp(digamma(r) − f).
pub fn gamma_match(f: f64, q: f64) -> Result<GammaPair> {
    if !f.is_finite() || !q.is_finite() || q <= 0.0 {
        return Err(CoreError::data(format!(
            "gamma matching needs finite f and q > 0, got (f, q) = ({f}, {q})"
        )));
    }
    // Bracket the root of trigamma(r) = q; trigamma is strictly decreasing.
    let mut lo = 1.0 / q;
    let mut hi = lo;
    while trigamma(lo) < q {
        lo *= 0.25;
    }
    while trigamma(hi) > q {
        hi *= 4.0;
    }
    let mut x = (0.5 * (lo.ln() + hi.ln())).exp().ln();
    let mut converged = false;
    for _ in 0..100 {
        let r = x.exp();
        let resid = trigamma(r) - q;
        if resid.abs() <= 1e-12 * q {
            converged = true;
            break;
        }
        if resid > 0.0 {
            lo = lo.max(r);
        } else {
            hi = hi.min(r);
        }
        // d/dx trigamma(e^x) = tetragamma(r)·r, negative everywhere.
        let slope = tetragamma(r) * r;
        let mut next = x - resid / slope;
        if !next.is_finite() || next <= lo.ln() || next >= hi.ln() {
            next = 0.5 * (lo.ln() + hi.ln());
        }
        x = next;
    }
    if !converged {
        return Err(CoreError::numeric(format!(
            "gamma matching did not converge for (f, q) = ({f}, {q})"
        )));
    }
    let shape = x.exp();
    let rate = (digamma(shape) - f).exp();
    if !(shape > 0.0) || !(rate > 0.0) || !shape.is_finite() || !rate.is_finite() {
        return Err(CoreError::numeric(format!(
            "gamma matching produced a degenerate pair (r, c) = ({shape}, {rate})"
        )));
    }
    Ok(GammaPair { shape, rate })
}

/// State of one count series: Gaussian (mean, scale) on θ plus the shared
/// evolution spec. Unlike the conjugate DLM there is no volatility posterior;
/// all observation noise is Poisson.
#[derive(Debug, Clone)]
pub struct DglmState {
    /// Location m_t (a_t when this value is an evolved prior).
    pub mean: Array1<f64>,
    /// Covariance C_t (R_t for a prior).
    pub scale: Array2<f64>,
    /// Transition, discount blocks, and regression layout.
    pub spec: DlmSpec,
}

impl DglmState {
    pub fn new(spec: DlmSpec, mean: Array1<f64>, scale: Array2<f64>) -> Result<Self> {
        let p = spec.state_dim();
        if mean.len() != p || scale.nrows() != p || scale.ncols() != p {
            return Err(CoreError::config(format!(
                "state moments ({}, {}×{}) do not match spec dimension {p}",
                mean.len(),
                scale.nrows(),
                scale.ncols()
            )));
        }
        Ok(DglmState { mean, scale, spec })
    }

    /// Weakly informative start: zero mean, c0·I covariance.
    pub fn diffuse(spec: DlmSpec, c0: f64) -> Result<Self> {
        let p = spec.state_dim();
        DglmState::new(spec, Array1::zeros(p), Array2::eye(p) * c0)
    }

    pub fn state_dim(&self) -> usize {
        self.mean.len()
    }

    /// Evolve the time-(t−1) posterior into the time-t prior: a = G m,
    /// R = G C G′ inflated blockwise by the discounts.
    pub fn evolve(&self, t: usize) -> Result<DglmState> {
        let g = self.spec.transition_at(t)?;
        let mean = g.dot(&self.mean);
        let mut scale = g.dot(&self.scale).dot(&g.t());
        symmetrize(&mut scale);
        dlm::inflate_blocks(&mut scale, &self.spec.blocks);
        Ok(DglmState { mean, scale, spec: self.spec.clone() })
    }

    /// Moments (f, q) of the linear predictor F′θ under this state.
    pub fn link_moments(&self, f_vec: &Array1<f64>) -> Result<(f64, f64)> {
        if f_vec.len() != self.state_dim() {
            return Err(CoreError::config(format!(
                "regression vector length {} does not match state dimension {}",
                f_vec.len(),
                self.state_dim()
            )));
        }
        let f = f_vec.dot(&self.mean);
        let q = quad_form(&f_vec.view(), &self.scale.view());
        if !(q > 0.0) || !q.is_finite() {
            return Err(CoreError::numeric(format!(
                "degenerate link variance q = {q:.3e}; the state scale has collapsed"
            )));
        }
        Ok((f, q))
    }
}

/// One-step-ahead count predictive: y ~ NegBin implied by a gamma prior
/// (shape, rate) on the rate μ and the given exposure (so y has success
/// probability rate/(rate+exposure) over `shape` failures).
#[derive(Debug, Clone, Copy)]
pub struct CountForecast {
    pub shape: f64,
    pub rate: f64,
    pub exposure: f64,
}

impl CountForecast {
    pub fn mean(&self) -> f64 {
        self.exposure * self.shape / self.rate
    }

    pub fn logpmf(&self, y: u64) -> f64 {
        neg_binomial_logpmf(y, self.shape, self.rate, self.exposure)
    }

    pub fn cdf(&self, y: i64) -> f64 {
        neg_binomial_cdf(y, self.shape, self.rate, self.exposure)
    }
}

/// Result of one conjugate count update.
#[derive(Debug, Clone)]
pub struct DglmUpdate {
    pub posterior: DglmState,
    /// The one-step predictive the observation was scored against.
    pub predictive: CountForecast,
    /// log P(y_t | D_{t−1}) under `predictive`.
    pub log_predictive: f64,
}

/// Conjugate count update. `prior` is the evolved time-t prior; the gamma
/// prior matched to (f, q) = (F′a, F′RF) absorbs the count, and the updated
/// link moments
///
///   g = digamma(r+y) − log(c+exposure),    p = trigamma(r+y)
///
/// map back onto the state by linear Bayes:
///
///   m = a + RF·(g−f)/q,    C = R − (RF)(RF)′·(1 − p/q)/q.
pub fn dglm_update(prior: &DglmState, f_vec: &Array1<f64>, y: u64, exposure: f64) -> Result<DglmUpdate> {
    if !(exposure > 0.0) || !exposure.is_finite() {
        return Err(CoreError::data(format!("exposure must be positive and finite, got {exposure}")));
    }
    let (f, q) = prior.link_moments(f_vec)?;
    let GammaPair { shape: r, rate: c } = gamma_match(f, q)?;
    let predictive = CountForecast { shape: r, rate: c, exposure };
    let log_predictive = predictive.logpmf(y);

    let r1 = r + y as f64;
    let c1 = c + exposure;
    let g = digamma(r1) - c1.ln();
    let p = trigamma(r1);

    let rf = prior.scale.dot(f_vec);
    let mean = &prior.mean + &(&rf * ((g - f) / q));
    let shrink = (1.0 - p / q) / q;
    let dim = prior.state_dim();
    let mut scale = prior.scale.clone();
    for i in 0..dim {
        for j in 0..dim {
            scale[[i, j]] -= rf[i] * rf[j] * shrink;
        }
    }
    let scale = psd_project(&scale.view(), "dglm update")?;
    let posterior = DglmState { mean, scale, spec: prior.spec.clone() };
    Ok(DglmUpdate { posterior, predictive, log_predictive })
}

/// How [`dglm_forecast`] generates count samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForecastMethod {
    /// Exact one-step negative binomial via gamma matching (rate drawn from
    /// the matched gamma, count from the Poisson).
    Analytic,
    /// Draw θ from the Gaussian state, then y ~ Po(exposure·exp(F′θ)); the
    /// building block for simulated multi-step forecasts.
    Simulated,
}

/// Sample one-step count forecasts from an evolved prior.
pub fn dglm_forecast<R: Rng + ?Sized>(
    prior: &DglmState,
    f_vec: &Array1<f64>,
    exposure: f64,
    n_samples: usize,
    method: ForecastMethod,
    rng: &mut R,
) -> Result<Vec<u64>> {
    if n_samples == 0 {
        return Err(CoreError::config("forecast needs n_samples ≥ 1"));
    }
    if !(exposure > 0.0) || !exposure.is_finite() {
        return Err(CoreError::data(format!("exposure must be positive and finite, got {exposure}")));
    }
    let mut out = Vec::with_capacity(n_samples);
    match method {
        ForecastMethod::Analytic => {
            let (f, q) = prior.link_moments(f_vec)?;
            let GammaPair { shape, rate } = gamma_match(f, q)?;
            let gamma = Gamma::new(shape, 1.0 / rate)
                .map_err(|e| CoreError::numeric(format!("rate prior Gamma({shape}, {rate}): {e}")))?;
            for _ in 0..n_samples {
                let mu: f64 = gamma.sample(rng);
                out.push(draw_count((mu * exposure).ln(), rng)?);
            }
        }
        ForecastMethod::Simulated => {
            if f_vec.len() != prior.state_dim() {
                return Err(CoreError::config(format!(
                    "regression vector length {} does not match state dimension {}",
                    f_vec.len(),
                    prior.state_dim()
                )));
            }
            let factor = psd_factor(&prior.scale.view());
            let mut z = Array1::<f64>::zeros(prior.state_dim());
            for _ in 0..n_samples {
                for zi in z.iter_mut() {
                    *zi = rng.sample(StandardNormal);
                }
                let theta = &prior.mean + &factor.dot(&z);
                out.push(draw_count(f_vec.dot(&theta) + exposure.ln(), rng)?);
            }
        }
    }
    Ok(out)
}

/// Draw y ~ Po(exp(log_rate)), guarding against runaway rates.
fn draw_count<R: Rng + ?Sized>(log_rate: f64, rng: &mut R) -> Result<u64> {
    if log_rate.is_nan() || log_rate > MAX_LOG_RATE {
        return Err(CoreError::numeric(format!(
            "count rate overflow: log rate = {log_rate:.3e}"
        )));
    }
    let rate = log_rate.exp();
    if rate <= 0.0 {
        return Ok(0);
    }
    let y: f64 = Poisson::new(rate)
        .map_err(|e| CoreError::numeric(format!("Poisson({rate:.3e}): {e}")))?
        .sample(rng);
    Ok(y as u64)
}

/// Forward-simulated latent-factor paths from an aggregate model, shared
/// read-only by every micro series in a multi-scale forecast.
#[derive(Debug, Clone)]
pub struct FactorEnsemble {
    /// N × horizon × factor_dim array of factor values φ_{t+1:t+h}.
    pub samples: Array3<f64>,
    /// Identifier of the aggregate model the paths came from.
    pub source_tag: String,
}

impl FactorEnsemble {
    pub fn new(samples: Array3<f64>, source_tag: impl Into<String>) -> Result<Self> {
        if samples.shape()[0] == 0 || samples.shape()[1] == 0 || samples.shape()[2] == 0 {
            return Err(CoreError::config(format!(
                "factor ensemble must be non-empty in every dimension, got {:?}",
                samples.shape()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::data("factor ensemble contains non-finite values"));
        }
        Ok(FactorEnsemble { samples, source_tag: source_tag.into() })
    }

    pub fn len(&self) -> usize {
        self.samples.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn horizon(&self) -> usize {
        self.samples.shape()[1]
    }

    pub fn factor_dim(&self) -> usize {
        self.samples.shape()[2]
    }
}

/// Build a [`FactorEnsemble`] by forward-simulating an aggregate conjugate
/// DLM (typically fitted to the log of total counts) and exporting the state
/// components at `export` — e.g. the level and seasonal slots — as factors.
pub fn aggregate_factor_ensemble(
    spec: &DlmSpec,
    posterior: &NigPosterior,
    export: &[usize],
    origin: usize,
    horizon: usize,
    n_samples: usize,
    seed: u64,
    source_tag: &str,
) -> Result<FactorEnsemble> {
    if horizon == 0 || n_samples == 0 {
        return Err(CoreError::config("factor simulation needs horizon ≥ 1 and n_samples ≥ 1"));
    }
    if export.is_empty() {
        return Err(CoreError::config("at least one state component must be exported as a factor"));
    }
    if let Some(&bad) = export.iter().find(|&&i| i >= spec.state_dim()) {
        return Err(CoreError::config(format!(
            "exported state index {bad} is out of range for state dimension {}",
            spec.state_dim()
        )));
    }
    let kernels = dlm::path_kernels(spec, &posterior.scale, origin, horizon)?;
    let rows: Vec<Array2<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, &[TAG_FACTOR, i as u64]);
            let mut state = dlm::PathState::draw(posterior, spec, &mut rng)?;
            let mut path = Array2::<f64>::zeros((horizon, export.len()));
            for (h, kernel) in kernels.iter().enumerate() {
                state.step(kernel, &mut rng)?;
                for (d, &idx) in export.iter().enumerate() {
                    path[[h, d]] = state.theta[idx];
                }
            }
            Ok(path)
        })
        .collect::<Result<_>>()?;
    let mut samples = Array3::<f64>::zeros((n_samples, horizon, export.len()));
    for (i, path) in rows.into_iter().enumerate() {
        samples.index_axis_mut(ndarray::Axis(0), i).assign(&path);
    }
    FactorEnsemble::new(samples, source_tag)
}

/// Top-down multi-scale forecast: for every factor path in `factors`, every
/// series simulates its state forward and draws counts conditional on that
/// path; pooling across factor paths yields the mixture predictive, so the
/// aggregate model's factor uncertainty propagates into each series.
///
/// Series j's regression layout reads factor d through its `Factor { index: d }`
/// terms; every referenced index must exist in the ensemble.
pub fn multiscale_forecast(
    models: &[DglmState],
    exposures: &[f64],
    factors: &FactorEnsemble,
    origin: usize,
    horizon: usize,
    seed: u64,
) -> Result<ForecastEnsemble> {
    if models.is_empty() {
        return Err(CoreError::config("multi-scale forecast needs at least one series"));
    }
    if exposures.len() != models.len() {
        return Err(CoreError::config(format!(
            "{} exposures for {} series",
            exposures.len(),
            models.len()
        )));
    }
    if let Some(&bad) = exposures.iter().find(|&&e| !(e > 0.0) || !e.is_finite()) {
        return Err(CoreError::data(format!("exposures must be positive and finite, got {bad}")));
    }
    if horizon == 0 || horizon > factors.horizon() {
        return Err(CoreError::config(format!(
            "horizon {horizon} not covered by the factor ensemble (horizon {})",
            factors.horizon()
        )));
    }
    for (j, model) in models.iter().enumerate() {
        let needed = model
            .spec
            .layout
            .terms()
            .iter()
            .filter_map(|t| match t {
                crate::regression::Term::Factor { index } => Some(index + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        if needed > factors.factor_dim() {
            return Err(CoreError::config(format!(
                "series {j} reads factor {} but the ensemble only carries {} factors",
                needed - 1,
                factors.factor_dim()
            )));
        }
    }

    let kernels: Vec<Vec<PathKernel>> = models
        .iter()
        .map(|m| dlm::path_kernels(&m.spec, &m.scale, origin, horizon))
        .collect::<Result<_>>()?;
    let start_factors: Vec<Array2<f64>> =
        models.iter().map(|m| psd_factor(&m.scale.view())).collect();

    let n = factors.len();
    let q = models.len();
    let rows: Vec<Array2<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, &[TAG_MICRO, i as u64]);
            let phi = factors.samples.index_axis(ndarray::Axis(0), i);
            let mut counts = Array2::<f64>::zeros((horizon, q));
            for (j, model) in models.iter().enumerate() {
                let mut z = Array1::<f64>::zeros(model.state_dim());
                for zi in z.iter_mut() {
                    *zi = rng.sample(StandardNormal);
                }
                let mut theta = &model.mean + &start_factors[j].dot(&z);
                for h in 0..horizon {
                    let kernel = &kernels[j][h];
                    theta = kernel.g.dot(&theta);
                    if let Some(w_factor) = &kernel.w_factor {
                        for zi in z.iter_mut() {
                            *zi = rng.sample(StandardNormal);
                        }
                        theta += &w_factor.dot(&z);
                    }
                    let phi_h = phi.row(h);
                    let f_vec = model.spec.layout.build_f(&PredictorInputs {
                        covariates: None,
                        factors: Some(phi_h.as_slice().expect("factor rows are contiguous")),
                        lags: &crate::regression::NoHistory,
                        parent: &|_| None,
                    })?;
                    let y = draw_count(f_vec.dot(&theta) + exposures[j].ln(), &mut rng)?;
                    counts[[h, j]] = y as f64;
                }
            }
            Ok(counts)
        })
        .collect::<Result<_>>()?;
    let mut samples = Array3::<f64>::zeros((n, horizon, q));
    for (i, row) in rows.into_iter().enumerate() {
        samples.index_axis_mut(ndarray::Axis(0), i).assign(&row);
    }
    Ok(ForecastEnsemble { samples, seed, snapshots: None })
}
