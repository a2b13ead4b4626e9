//! Simultaneous graphical DLM: decouple/recouple filtering for arbitrary
//! contemporaneous dependence.
//!
//! Unlike the ordered network model, parents here may be *any* other series —
//! cycles included — so the joint one-step density no longer factorizes into
//! per-series conditionals. Each step therefore runs in three phases:
//!
//! 1. **Decoupled conjugate step** — every series updates its own conjugate
//!    DLM using realized parent outcomes as regressors, exactly as in the
//!    ordered model. These posteriors are the importance-sampling proposal.
//! 2. **Recouple** — the exact joint posterior differs from the product of
//!    proposals by the factor |det(I − Γ)|. Importance sampling with that
//!    determinant as weight corrects the product form; the effective sample
//!    size (ESS) tracks weight degeneracy.
//! 3. **Variational decouple** — the weighted sample is projected back onto a
//!    product of conjugate normal/inverse-gamma forms by moment matching (the
//!    KL-minimizing member of that family), restoring per-series independence
//!    for the next step. The entropy index K_t = Σ w·log(I·w) measures how far
//!    the recoupled posterior drifted from the proposal.
//!
//! When the parental pattern is acyclic the determinant is identically one,
//! weights are exactly uniform, and the whole pipeline degenerates to the
//! ordered model — a property the tests pin down bit-for-bit.
//!
//! The module also houses *hot-spot adaptation*: a discounted-Wishart side
//! model tracks cross-series partial correlations, candidate parents enter a
//! warm-up phase, survive a single significance test to join the core set, and
//! exit through a coefficient-decaying cool-down — all with the state vector
//! surgically expanded or shrunk in place.

use ndarray::{Array1, Array2, Array3, ArrayView1, Axis};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::ddnm::{
    check_alignment, filter_step, shared_kernels, simulate_path, ForecastEnsemble, SeriesModel,
    StepOutcome,
};
use crate::dlm::{DlmSpec, NigPosterior, Transition};
use crate::error::{CoreError, Result};
use crate::linalg::{psd_factor, psd_project, Lu};
use crate::regression::{BlockDiscounts, CovariateSource, History, RegressionLayout, Term};
use crate::rng::{child_seed, stream};
use crate::special::{digamma, logsumexp, trigamma};
use crate::structure::{GammaMatrix, ParentalStructure, ParentSlot, SlotPhase};

/// RNG stream tags: importance samples, joint forecast paths, per-step seeds,
/// and per-forecast seeds.
const TAG_IS: u64 = 0x6973; // importance-sample streams
const TAG_JOINT: u64 = 0x6a6e74; // joint path streams
const TAG_STEP: u64 = 0x73746570; // per-step child seeds
const TAG_FORECAST: u64 = 0x6663; // per-forecast child seeds

/// Consecutive singular (I − Γ) draws tolerated per path sample before the
/// sample is declared unrecoverable.
const MAX_PATH_ATTEMPTS: u64 = 64;

/// Ridge added to the side-model covariance before inversion.
const SIDE_RIDGE: f64 = 1e-8;

/// Dof assigned when every λ sample coincides and the fitted gamma degenerates
/// to a point mass (the KL solution diverges; this is its practical limit).
const DOF_CAP: f64 = 1e12;

/// One recoupling batch: joint importance samples with determinant weights.
#[derive(Debug, Clone)]
pub struct IsBatch {
    /// Per series: I × p_j matrix of θ draws.
    pub thetas: Vec<Array2<f64>>,
    /// I × q matrix of λ draws.
    pub lambdas: Array2<f64>,
    /// Normalized importance weights (sum to 1).
    pub weights: Array1<f64>,
    /// Effective sample size 1/Σw² ∈ [1, I].
    pub ess: f64,
    /// log |det(I − Γ⁽ⁱ⁾)| per sample (exactly 0 for acyclic patterns).
    pub log_det_values: Array1<f64>,
}

/// Result of projecting a weighted batch back onto conjugate form.
#[derive(Debug, Clone)]
pub struct VbResult {
    pub posteriors: Vec<NigPosterior>,
    /// K_t = Σ w·log(I·w) ≥ 0: sample KL divergence of the weighted target
    /// from the uniform proposal; zero exactly when weights are uniform.
    pub entropy_index: f64,
}

/// Decoupled conjugate step: every series evolves and updates against its
/// simultaneous-parent regressors (realized outcomes). The results are the
/// importance-sampling *proposal*, not the final posterior — callers follow
/// with [`recouple_is`] and [`vb_decouple`].
pub fn conjugate_step<C: CovariateSource + ?Sized>(
    models: &mut [SeriesModel],
    structure: &ParentalStructure,
    history: &History,
    y: &ArrayView1<f64>,
    covariates: &C,
    t: usize,
) -> Result<StepOutcome> {
    filter_step(models, structure, history, y, covariates, t)
}

/// Draw I joint samples from the product of proposal posteriors and weight
/// each by |det(I − Γ⁽ⁱ⁾)|, the exact correction factor between the product
/// form and the joint posterior. Weight normalization runs in log space with
/// fixed-order summation, so results are bit-stable given a seed regardless
/// of worker count.
pub fn recouple_is(
    models: &[SeriesModel],
    structure: &ParentalStructure,
    i_samples: usize,
    seed: u64,
) -> Result<IsBatch> {
    if i_samples < 2 {
        return Err(CoreError::config(format!(
            "importance sampling needs at least 2 samples, got {i_samples}"
        )));
    }
    check_alignment(models, structure)?;
    let q = models.len();
    let factors: Vec<Array2<f64>> =
        models.iter().map(|m| psd_factor(&m.posterior.scale.view())).collect();
    let gammas: Vec<Gamma<f64>> = models
        .iter()
        .map(|m| {
            Gamma::new(0.5 * m.posterior.dof, 2.0 / (m.posterior.dof * m.posterior.s)).map_err(
                |e| {
                    CoreError::numeric(format!(
                        "volatility posterior Gamma for recoupling: {e}"
                    ))
                },
            )
        })
        .collect::<Result<_>>()?;
    let slot_maps: Vec<Vec<(usize, usize)>> =
        models.iter().map(|m| m.spec.layout.parent_slots()).collect();

    struct Draw {
        thetas: Vec<Array1<f64>>,
        lambdas: Array1<f64>,
        log_det: f64,
    }
    let draws: Vec<Draw> = (0..i_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, &[TAG_IS, i as u64]);
            let mut thetas = Vec::with_capacity(q);
            let mut lambdas = Array1::<f64>::zeros(q);
            for (j, model) in models.iter().enumerate() {
                let post = &model.posterior;
                let lambda = gammas[j].sample(&mut rng);
                lambdas[j] = lambda;
                let mut z = Array1::<f64>::zeros(post.state_dim());
                for zi in z.iter_mut() {
                    *zi = rng.sample(StandardNormal);
                }
                let theta = &post.mean + &(factors[j].dot(&z) / (post.s * lambda).sqrt());
                thetas.push(theta);
            }
            let rows: Vec<Vec<(usize, f64)>> = slot_maps
                .iter()
                .zip(&thetas)
                .map(|(slots, theta)| {
                    slots.iter().map(|&(idx, series)| (series, theta[idx])).collect()
                })
                .collect();
            let log_det = GammaMatrix::from_rows(q, rows)?.log_abs_det_i_minus_gamma();
            Ok(Draw { thetas, lambdas, log_det })
        })
        .collect::<Result<_>>()?;

    let log_det_values = Array1::from_iter(draws.iter().map(|d| d.log_det));
    let weights = normalize_log_weights(&log_det_values)?;
    let ess = effective_sample_size(&weights);

    let mut thetas: Vec<Array2<f64>> = models
        .iter()
        .map(|m| Array2::zeros((i_samples, m.posterior.state_dim())))
        .collect();
    let mut lambdas = Array2::<f64>::zeros((i_samples, q));
    for (i, draw) in draws.into_iter().enumerate() {
        for (j, theta) in draw.thetas.into_iter().enumerate() {
            thetas[j].row_mut(i).assign(&theta);
        }
        lambdas.row_mut(i).assign(&draw.lambdas);
    }
    Ok(IsBatch { thetas, lambdas, weights, ess, log_det_values })
}

/// Normalize log weights to a probability vector. When every log weight is
/// identical — the acyclic case, where all are exactly zero — the weights are
/// *mathematically* uniform, and we return exactly 1/I rather than routing the
/// shared constant through exp/sum rounding.
fn normalize_log_weights(log_w: &Array1<f64>) -> Result<Array1<f64>> {
    let n = log_w.len();
    let first = log_w[0];
    if log_w.iter().all(|&v| v == first) && first > f64::NEG_INFINITY {
        return Ok(Array1::from_elem(n, 1.0 / n as f64));
    }
    let values: Vec<f64> = log_w.to_vec();
    let lse = logsumexp(&values);
    if lse == f64::NEG_INFINITY {
        return Err(CoreError::DegenerateWeights { ess: 0.0, floor: 1.0 });
    }
    let mut w = Array1::from_iter(log_w.iter().map(|&v| (v - lse).exp()));
    let total: f64 = w.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(CoreError::DegenerateWeights { ess: 0.0, floor: 1.0 });
    }
    w.mapv_inplace(|v| v / total);
    Ok(w)
}

/// ESS = 1/Σw², exactly I when the uniform shortcut produced 1/I weights.
fn effective_sample_size(w: &Array1<f64>) -> f64 {
    let n = w.len() as f64;
    let first = w[0];
    if w.iter().all(|&v| v == first) {
        return n;
    }
    1.0 / w.iter().map(|&v| v * v).sum::<f64>()
}

/// K_t = Σ w·log(I·w), with w log w → 0 at w = 0 and an exact zero for
/// uniform weights.
pub fn entropy_index(weights: &Array1<f64>) -> f64 {
    let n = weights.len() as f64;
    let first = weights[0];
    if weights.iter().all(|&v| v == first) {
        return 0.0;
    }
    weights
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| w * (n * w).ln())
        .sum()
}

/// Project the weighted joint sample back onto a product of conjugate
/// normal/inverse-gamma posteriors by matching the sufficient moments
/// (λ̄ = Σwλ, Σw·logλ, Σwλθ, Σwλθθ′) — the KL-minimizing member of the
/// mean-field family.
pub fn vb_decouple(batch: &IsBatch) -> Result<VbResult> {
    let q = batch.thetas.len();
    let i = batch.weights.len();
    if batch.lambdas.nrows() != i || batch.lambdas.ncols() != q {
        return Err(CoreError::config(format!(
            "batch shapes disagree: {} weight entries, λ is {}×{}",
            i,
            batch.lambdas.nrows(),
            batch.lambdas.ncols()
        )));
    }
    let entropy = entropy_index(&batch.weights);
    let posteriors: Vec<NigPosterior> = (0..q)
        .into_par_iter()
        .map(|j| fit_series(&batch.thetas[j], &batch.lambdas.column(j), &batch.weights))
        .collect::<Result<_>>()?;
    Ok(VbResult { posteriors, entropy_index: entropy })
}

/// Weighted moment-matched conjugate fit for one series.
fn fit_series(
    thetas: &Array2<f64>,
    lambdas: &ArrayView1<f64>,
    weights: &Array1<f64>,
) -> Result<NigPosterior> {
    let p = thetas.ncols();
    let mut lambda_bar = 0.0;
    let mut log_lambda_bar = 0.0;
    let mut m = Array1::<f64>::zeros(p);
    let mut raw = Array2::<f64>::zeros((p, p));
    for (i, (&w, &lambda)) in weights.iter().zip(lambdas.iter()).enumerate() {
        if w == 0.0 {
            continue;
        }
        if !(lambda > 0.0) {
            return Err(CoreError::numeric(format!(
                "importance sample {i} carries non-positive λ = {lambda}"
            )));
        }
        let wl = w * lambda;
        lambda_bar += wl;
        log_lambda_bar += w * lambda.ln();
        let theta = thetas.row(i);
        for a in 0..p {
            m[a] += wl * theta[a];
            for b in 0..p {
                raw[[a, b]] += wl * theta[a] * theta[b];
            }
        }
    }
    if !(lambda_bar > 0.0) || !lambda_bar.is_finite() {
        return Err(CoreError::numeric(format!(
            "weighted precision mean collapsed to {lambda_bar}"
        )));
    }
    let s = 1.0 / lambda_bar;
    m.mapv_inplace(|v| v / lambda_bar);
    // C = s·Σwλ(θ−m)(θ−m)′ = s·(Σwλθθ′ − λ̄·mm′).
    let mut c = raw;
    for a in 0..p {
        for b in 0..p {
            c[[a, b]] = s * (c[[a, b]] - lambda_bar * m[a] * m[b]);
        }
    }
    let c = psd_project(&c.view(), "vb decouple")?;
    let dof = solve_dof(log_lambda_bar + s.ln())?;
    NigPosterior::new(m, c, dof, s)
}

/// Solve digamma(n/2) − log(n·s/2) = Σw·logλ for n, i.e. with u = n/2 and
/// d = Σw·logλ − log λ̄ ≤ 0 (Jensen): digamma(u) − log u = d. Safeguarded
/// Newton on log u with the asymptotic start u₀ = −1/(2d).
fn solve_dof(d: f64) -> Result<f64> {
    if !d.is_finite() {
        return Err(CoreError::numeric(format!("dof equation has non-finite target {d}")));
    }
    // All λ equal makes d = 0 and the KL solution diverge: point volatility.
    if d > -1e-14 {
        return Ok(DOF_CAP);
    }
    let phi = |u: f64| digamma(u) - u.ln();
    let mut lo = -1.0 / (2.0 * d);
    let mut hi = lo;
    while phi(lo) > d {
        lo *= 0.25;
        if lo < 1e-280 {
            return Err(CoreError::numeric(format!("dof solve under-bracketed at target {d}")));
        }
    }
    while phi(hi) < d {
        hi *= 4.0;
        if hi > 1e280 {
            return Err(CoreError::numeric(format!("dof solve over-bracketed at target {d}")));
        }
    }
    let mut x = 0.5 * (lo.ln() + hi.ln());
    let mut converged = false;
    for _ in 0..100 {
        let u = x.exp();
        let resid = phi(u) - d;
        if resid.abs() <= 1e-12 * d.abs().max(1.0) {
            converged = true;
            break;
        }
        if resid > 0.0 {
            hi = hi.min(u);
        } else {
            lo = lo.max(u);
        }
        // d/dx [digamma(e^x) − x] = u·trigamma(u) − 1, positive for u > 0.
        let slope = u * trigamma(u) - 1.0;
        let mut next = x - resid / slope;
        if !next.is_finite() || next <= lo.ln() || next >= hi.ln() {
            next = 0.5 * (lo.ln() + hi.ln());
        }
        x = next;
    }
    if !converged {
        return Err(CoreError::numeric(format!("dof solve did not converge for target {d}")));
    }
    Ok((2.0 * x.exp()).min(DOF_CAP))
}

/// Discounted-Wishart tracker of the cross-series covariance, run alongside
/// the main model to rank hot-spot candidates by partial correlation.
#[derive(Debug, Clone)]
pub struct SideModel {
    /// Discounted observation count W_t.
    pub dof: f64,
    /// Discounted running mean of the observations.
    pub mean: Array1<f64>,
    /// Discounted centered scatter S_t (symmetric PSD by construction).
    pub scatter: Array2<f64>,
    /// Discount β_w ∈ (0, 1].
    pub discount: f64,
}

impl SideModel {
    pub fn new(q: usize, discount: f64) -> Result<Self> {
        if !(discount > 0.0 && discount <= 1.0) {
            return Err(CoreError::config(format!(
                "side-model discount must lie in (0, 1], got {discount}"
            )));
        }
        Ok(SideModel {
            dof: 0.0,
            mean: Array1::zeros(q),
            scatter: Array2::zeros((q, q)),
            discount,
        })
    }

    pub fn q(&self) -> usize {
        self.mean.len()
    }

    /// Point covariance estimate S/W with a stabilizing ridge.
    pub fn covariance(&self) -> Array2<f64> {
        let w = self.dof.max(1.0);
        let mut cov = &self.scatter / w;
        for j in 0..self.q() {
            cov[[j, j]] += SIDE_RIDGE;
        }
        cov
    }

    /// Partial correlations ρ_{jh} = −P_{jh}/√(P_{jj}·P_{hh}) from the
    /// inverse covariance P; the diagonal is set to zero so a series can
    /// never rank as its own candidate.
    pub fn partial_correlations(&self) -> Result<Array2<f64>> {
        let q = self.q();
        let cov = self.covariance();
        let p = Lu::factor(&cov.view())
            .inverse()
            .map_err(|_| CoreError::numeric("side-model covariance is not invertible"))?;
        let mut rho = Array2::<f64>::zeros((q, q));
        for j in 0..q {
            for h in 0..q {
                if j != h {
                    rho[[j, h]] = -p[[j, h]] / (p[[j, j]] * p[[h, h]]).sqrt();
                }
            }
        }
        Ok(rho)
    }
}

/// One discounted-Welford update: dof ← β_w·dof + 1 and the scatter absorbs
/// the new deviation with the weight ratio that makes β_w = 1 reproduce the
/// centered sum of squares exactly.
pub fn side_update(side: &SideModel, y: &ArrayView1<f64>) -> Result<SideModel> {
    if y.len() != side.q() {
        return Err(CoreError::data(format!(
            "observation has length {}, side model tracks {}",
            y.len(),
            side.q()
        )));
    }
    if let Some((j, &v)) = y.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(CoreError::data(format!("observation for series {j} is not finite ({v})")));
    }
    let w_old = side.discount * side.dof;
    let w_new = w_old + 1.0;
    let mean = (&side.mean * w_old + y) / w_new;
    let dev = y - &side.mean;
    let factor = w_old / w_new;
    let q = side.q();
    let mut scatter = &side.scatter * side.discount;
    for a in 0..q {
        for b in 0..q {
            scatter[[a, b]] += factor * dev[a] * dev[b];
        }
    }
    Ok(SideModel { dof: w_new, mean, scatter, discount: side.discount })
}

/// Hot-spot adaptation policy. A candidate enters warm-up when a slot is
/// free, faces a *single* significance test once its tenure reaches
/// `warmup_eligible` (one test per entry keeps the null promotion rate at the
/// nominal level of `tau_promote` instead of compounding step after step),
/// and exits through a cool-down that decays its coefficient to zero.
#[derive(Debug, Clone)]
pub struct HotspotConfig {
    /// Maximum |sp(j)| across all phases.
    pub budget: usize,
    /// |mean|/sd needed at the promotion test (two-sided). The default is
    /// calibrated so a null coefficient passes with probability ≈ 0.5%.
    pub tau_promote: f64,
    /// Core members whose |mean|/sd falls below this enter cool-down.
    pub tau_demote: f64,
    /// Warm-up tenure at which the one promotion test fires.
    pub warmup_eligible: usize,
    /// Cool-down length; the coefficient decays to ~1% over this span.
    pub cooldown_steps: usize,
    /// Prior scale given to a freshly entered coefficient.
    pub warmup_prior_scale: f64,
    /// Side-model dof required before partial correlations are trusted.
    pub min_side_dof: f64,
}

impl HotspotConfig {
    pub fn new(budget: usize) -> Self {
        HotspotConfig {
            budget,
            tau_promote: 2.8,
            tau_demote: 0.675,
            warmup_eligible: 25,
            cooldown_steps: 10,
            warmup_prior_scale: 1.0,
            min_side_dof: 30.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup_eligible == 0 || self.cooldown_steps == 0 {
            return Err(CoreError::config(
                "warm-up eligibility and cool-down length must be at least 1 step",
            ));
        }
        if !(self.tau_promote > 0.0) || !(self.tau_demote >= 0.0) {
            return Err(CoreError::config(format!(
                "hot-spot thresholds must be positive, got promote {} / demote {}",
                self.tau_promote, self.tau_demote
            )));
        }
        if !(self.warmup_prior_scale > 0.0) {
            return Err(CoreError::config(format!(
                "warm-up prior scale must be positive, got {}",
                self.warmup_prior_scale
            )));
        }
        Ok(())
    }
}

impl Default for HotspotConfig {
    fn default() -> Self {
        HotspotConfig::new(5)
    }
}

/// What one adaptation call did to one series' parent set.
#[derive(Debug, Clone, Default)]
pub struct HotspotReport {
    /// Candidate that entered warm-up, if any.
    pub entered_warmup: Option<usize>,
    /// Parents promoted to core at this call.
    pub promoted: Vec<usize>,
    /// Parents sent to cool-down (failed warm-up test or demoted core).
    pub demoted: Vec<usize>,
    /// Parent fully removed (cool-down complete), if any.
    pub exited: Option<usize>,
}

impl HotspotReport {
    pub fn is_quiet(&self) -> bool {
        self.entered_warmup.is_none()
            && self.promoted.is_empty()
            && self.demoted.is_empty()
            && self.exited.is_none()
    }
}

/// Append a parent regressor to a series model: the layout gains a
/// `Parent { series }` term and the posterior gains one state slot with zero
/// mean and `prior_scale` variance. Requires a layout-derived transition.
pub fn add_parent(
    model: &SeriesModel,
    discounts: &BlockDiscounts,
    series: usize,
    prior_scale: f64,
) -> Result<SeriesModel> {
    if !matches!(model.spec.transition, Transition::Fixed(_)) {
        return Err(CoreError::config(
            "parent-set surgery requires a layout-derived (fixed) transition",
        ));
    }
    let mut terms = model.spec.layout.terms().to_vec();
    if terms.iter().any(|t| matches!(t, Term::Parent { series: s } if *s == series)) {
        return Err(CoreError::config(format!("series {series} is already a parent")));
    }
    terms.push(Term::Parent { series });
    let layout = RegressionLayout::new(terms)?;
    let spec = DlmSpec::new(layout, discounts, model.spec.beta)?;
    let p = model.posterior.state_dim();
    let mut mean = Array1::<f64>::zeros(p + 1);
    mean.slice_mut(ndarray::s![..p]).assign(&model.posterior.mean);
    let mut scale = Array2::<f64>::zeros((p + 1, p + 1));
    scale.slice_mut(ndarray::s![..p, ..p]).assign(&model.posterior.scale);
    scale[[p, p]] = prior_scale;
    let posterior = NigPosterior::new(mean, scale, model.posterior.dof, model.posterior.s)?;
    Ok(SeriesModel { spec, posterior })
}

/// Remove a parent regressor: the `Parent { series }` term is dropped and the
/// corresponding state row/column deleted, leaving every other entry intact.
pub fn remove_parent(
    model: &SeriesModel,
    discounts: &BlockDiscounts,
    series: usize,
) -> Result<SeriesModel> {
    if !matches!(model.spec.transition, Transition::Fixed(_)) {
        return Err(CoreError::config(
            "parent-set surgery requires a layout-derived (fixed) transition",
        ));
    }
    let idx = model
        .spec
        .layout
        .parent_slots()
        .iter()
        .find(|&&(_, s)| s == series)
        .map(|&(idx, _)| idx)
        .ok_or_else(|| {
            CoreError::config(format!("series {series} is not a parent of this model"))
        })?;
    let mut terms = model.spec.layout.terms().to_vec();
    let pos = terms
        .iter()
        .position(|t| matches!(t, Term::Parent { series: s } if *s == series))
        .expect("slot exists, so the term exists");
    terms.remove(pos);
    let layout = RegressionLayout::new(terms)?;
    let spec = DlmSpec::new(layout, discounts, model.spec.beta)?;
    let keep: Vec<usize> =
        (0..model.posterior.state_dim()).filter(|&i| i != idx).collect();
    let mean = model.posterior.mean.select(Axis(0), &keep);
    let scale = model.posterior.scale.select(Axis(0), &keep).select(Axis(1), &keep);
    let posterior = NigPosterior::new(mean, scale, model.posterior.dof, model.posterior.s)?;
    Ok(SeriesModel { spec, posterior })
}

/// Marginal-t ratio |mean|/sd of the coefficient at state index `idx`.
fn coefficient_ratio(post: &NigPosterior, idx: usize) -> f64 {
    let var = post.scale[[idx, idx]].max(1e-300);
    let inflate = if post.dof > 2.0 { post.dof / (post.dof - 2.0) } else { 1.0 };
    post.mean[idx].abs() / (var * inflate).sqrt()
}

/// One hot-spot adaptation call for series `j`: tick phases, run the single
/// promotion test on newly eligible warm-ups, demote insignificant core
/// members, decay cool-downs and expel the oldest finished one, then admit
/// the strongest non-parent candidate if the budget allows.
pub fn hotspot_adapt(
    model: &mut SeriesModel,
    slots: &mut Vec<ParentSlot>,
    discounts: &BlockDiscounts,
    side: &SideModel,
    j: usize,
    cfg: &HotspotConfig,
) -> Result<HotspotReport> {
    cfg.validate()?;
    let n_core = slots.iter().filter(|s| s.phase == SlotPhase::Core).count();
    if cfg.budget < n_core {
        return Err(CoreError::config(format!(
            "series {j}: hot-spot budget {} is smaller than the core set ({n_core})",
            cfg.budget
        )));
    }
    let mut report = HotspotReport::default();

    // Index parent series → state slot, valid until surgery below.
    let slot_index = |model: &SeriesModel, series: usize| -> Result<usize> {
        model
            .spec
            .layout
            .parent_slots()
            .iter()
            .find(|&&(_, s)| s == series)
            .map(|&(idx, _)| idx)
            .ok_or_else(|| {
                CoreError::config(format!(
                    "series {j}: slot for parent {series} has no matching state entry"
                ))
            })
    };

    for slot in slots.iter_mut() {
        match slot.phase {
            SlotPhase::WarmUp { tenure } => {
                let tenure = tenure + 1;
                if tenure >= cfg.warmup_eligible {
                    let idx = slot_index(model, slot.series)?;
                    if coefficient_ratio(&model.posterior, idx) >= cfg.tau_promote {
                        slot.phase = SlotPhase::Core;
                        report.promoted.push(slot.series);
                    } else {
                        slot.phase = SlotPhase::CoolDown { age: 0 };
                        report.demoted.push(slot.series);
                    }
                } else {
                    slot.phase = SlotPhase::WarmUp { tenure };
                }
            }
            SlotPhase::Core => {
                let idx = slot_index(model, slot.series)?;
                if coefficient_ratio(&model.posterior, idx) < cfg.tau_demote {
                    slot.phase = SlotPhase::CoolDown { age: 0 };
                    report.demoted.push(slot.series);
                }
            }
            SlotPhase::CoolDown { age } => {
                let idx = slot_index(model, slot.series)?;
                // Decay to ~1% of the original coefficient over the window.
                let decay = 0.01_f64.powf(1.0 / cfg.cooldown_steps as f64);
                model.posterior.mean[idx] *= decay;
                slot.phase = SlotPhase::CoolDown { age: age + 1 };
            }
        }
    }

    // Oldest finished cool-down exits, one per call.
    let exiting = slots
        .iter()
        .enumerate()
        .filter_map(|(k, s)| match s.phase {
            SlotPhase::CoolDown { age } if age >= cfg.cooldown_steps => Some((k, age)),
            _ => None,
        })
        .max_by_key(|&(_, age)| age)
        .map(|(k, _)| k);
    if let Some(k) = exiting {
        let series = slots[k].series;
        *model = remove_parent(model, discounts, series)?;
        slots.remove(k);
        report.exited = Some(series);
    }

    // Admit the non-parent with the largest |partial correlation|, once the
    // side model has seen enough data and the budget has room.
    if slots.len() < cfg.budget && side.dof >= cfg.min_side_dof {
        let rho = side.partial_correlations()?;
        let taken: Vec<usize> = slots.iter().map(|s| s.series).collect();
        let candidate = (0..side.q())
            .filter(|&h| h != j && !taken.contains(&h))
            .max_by(|&a, &b| {
                rho[[j, a]]
                    .abs()
                    .partial_cmp(&rho[[j, b]].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
        if let Some(h) = candidate {
            if rho[[j, h]].abs().is_finite() {
                *model = add_parent(model, discounts, h, cfg.warmup_prior_scale)?;
                slots.push(ParentSlot { series: h, phase: SlotPhase::WarmUp { tenure: 0 } });
                report.entered_warmup = Some(h);
            }
        }
    }
    Ok(report)
}

/// A forecast ensemble plus the singularity bookkeeping specific to joint
/// solves: how many path samples had to be redrawn, and whether the rate
/// crossed the 1% diagnostic threshold.
#[derive(Debug, Clone)]
pub struct SgdlmForecast {
    pub ensemble: ForecastEnsemble,
    pub rejected_samples: usize,
    pub rejection_warning: bool,
}

/// Joint path forecasting for simultaneous structures: per sample, draw all
/// states and volatilities, form (μ, Γ, Λ), draw ν ~ N(0, Λ⁻¹) and solve
/// (I − Γ) y = μ + ν. Samples whose coefficient draw makes I − Γ singular
/// are redrawn on a fresh attempt-tagged stream and counted.
pub fn forecast_paths_sgdlm<C: CovariateSource + ?Sized>(
    models: &[SeriesModel],
    structure: &ParentalStructure,
    history: &History,
    covariates: &C,
    origin: usize,
    k: usize,
    n: usize,
    seed: u64,
    collect_snapshots: bool,
) -> Result<SgdlmForecast> {
    if k == 0 {
        return Err(CoreError::config("forecast horizon must be at least 1"));
    }
    if n == 0 {
        return Err(CoreError::config("sample count must be at least 1"));
    }
    check_alignment(models, structure)?;
    structure.validate()?;
    let q = models.len();
    let shared = shared_kernels(models, origin, k)?;
    let rejections = AtomicUsize::new(0);

    let per_sample: Vec<(Array2<f64>, Vec<crate::ddnm::JointSnapshot>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            for attempt in 0..MAX_PATH_ATTEMPTS {
                let mut rng = stream(seed, &[TAG_JOINT, i as u64, attempt]);
                let result = simulate_path(
                    models,
                    &shared,
                    history,
                    covariates,
                    origin,
                    k,
                    &mut rng,
                    collect_snapshots,
                    |snapshot, rng| {
                        let mut rhs = snapshot.mu.clone();
                        for jj in 0..q {
                            let z: f64 = rng.sample(StandardNormal);
                            rhs[jj] += z / snapshot.lambda[jj].sqrt();
                        }
                        snapshot.gamma.solve(&rhs.view())
                    },
                );
                match result {
                    Ok(path) => return Ok(path),
                    Err(CoreError::Singular(_)) => {
                        rejections.fetch_add(1, Ordering::Relaxed);
                        continue;
                    }
                    Err(e) => return Err(e),
                }
            }
            Err(CoreError::numeric(format!(
                "path sample {i}: {MAX_PATH_ATTEMPTS} consecutive draws left I − Γ singular; \
                 the coefficient posteriors concentrate on a degenerate system"
            )))
        })
        .collect::<Result<_>>()?;

    let mut samples = Array3::<f64>::zeros((n, k, q));
    let mut snapshots = collect_snapshots.then(|| Vec::with_capacity(n));
    for (i, (path, snaps)) in per_sample.into_iter().enumerate() {
        samples.index_axis_mut(Axis(0), i).assign(&path);
        if let Some(all) = snapshots.as_mut() {
            all.push(snaps);
        }
    }
    let rejected = rejections.load(Ordering::Relaxed);
    Ok(SgdlmForecast {
        ensemble: ForecastEnsemble { samples, seed, snapshots },
        rejected_samples: rejected,
        rejection_warning: rejected as f64 > 0.01 * n as f64,
    })
}

/// Driver configuration for the sequential decouple/recouple filter.
#[derive(Debug, Clone)]
pub struct SgdlmConfig {
    /// Importance-sample count I per step.
    pub i_samples: usize,
    /// VB is skipped (proposals kept, flag raised) when ESS < ess_floor·I.
    pub ess_floor: f64,
    /// Master seed; per-step and per-forecast streams derive from it.
    pub seed: u64,
    /// Side-model discount β_w.
    pub side_discount: f64,
    /// Hot-spot adaptation policy; `None` freezes the parental structure.
    pub hotspot: Option<HotspotConfig>,
}

impl Default for SgdlmConfig {
    fn default() -> Self {
        SgdlmConfig {
            i_samples: 5000,
            ess_floor: 0.01,
            seed: 0,
            side_discount: 0.98,
            hotspot: None,
        }
    }
}

/// One step's diagnostics.
#[derive(Debug, Clone)]
pub struct SgdlmStep {
    /// Per-series one-step forecasts and log predictives from the conjugate
    /// (proposal) step.
    pub outcome: StepOutcome,
    pub ess: f64,
    pub entropy_index: f64,
    /// True when ESS fell below the floor and the proposals were kept.
    pub vb_skipped: bool,
    /// Per-series adaptation reports (empty when hot-spot is off).
    pub reports: Vec<HotspotReport>,
}

/// Sequential simultaneous-model filter: conjugate step → IS recouple → VB
/// decouple → side-model update → hot-spot adaptation, with the lag window
/// and time index managed internally.
#[derive(Debug, Clone)]
pub struct Sgdlm {
    models: Vec<SeriesModel>,
    structure: ParentalStructure,
    discounts: Vec<BlockDiscounts>,
    side: SideModel,
    history: History,
    config: SgdlmConfig,
    t: usize,
}

impl Sgdlm {
    pub fn new(
        models: Vec<SeriesModel>,
        parents: Vec<Vec<usize>>,
        discounts: Vec<BlockDiscounts>,
        config: SgdlmConfig,
    ) -> Result<Self> {
        let structure = ParentalStructure::simultaneous(parents)?;
        check_alignment(&models, &structure)?;
        if discounts.len() != models.len() {
            return Err(CoreError::config(format!(
                "{} discount sets for {} series",
                discounts.len(),
                models.len()
            )));
        }
        if let Some(h) = &config.hotspot {
            h.validate()?;
        }
        if !(config.ess_floor >= 0.0 && config.ess_floor < 1.0) {
            return Err(CoreError::config(format!(
                "ESS floor must lie in [0, 1), got {}",
                config.ess_floor
            )));
        }
        let side = SideModel::new(models.len(), config.side_discount)?;
        let depth = models.iter().map(|m| m.spec.layout.max_lag()).max().unwrap_or(0);
        Ok(Sgdlm {
            models,
            structure,
            discounts,
            side,
            history: History::new(depth),
            config,
            t: 0,
        })
    }

    pub fn models(&self) -> &[SeriesModel] {
        &self.models
    }

    pub fn structure(&self) -> &ParentalStructure {
        &self.structure
    }

    pub fn side(&self) -> &SideModel {
        &self.side
    }

    /// Number of observations consumed so far (filtered or seeded).
    pub fn steps(&self) -> usize {
        self.t
    }

    /// Largest lag any series' layout uses: the number of rows that must be
    /// seeded (or filtered) before every lagged predictor is available.
    pub fn max_lag(&self) -> usize {
        self.models.iter().map(|m| m.spec.layout.max_lag()).max().unwrap_or(0)
    }

    /// Push an observed row into the lag window *without* filtering it:
    /// burn-in for lagged predictors. Models, side model, and hot-spot state
    /// stay untouched; the time index advances so subsequent steps see the
    /// correct absolute time.
    pub fn seed_history(&mut self, y: &ArrayView1<f64>) -> Result<()> {
        if y.len() != self.models.len() {
            return Err(CoreError::data(format!(
                "seed row has {} entries for {} series",
                y.len(),
                self.models.len()
            )));
        }
        self.history.push(y.to_owned());
        self.t += 1;
        Ok(())
    }

    pub fn step<C: CovariateSource + ?Sized>(
        &mut self,
        y: &ArrayView1<f64>,
        covariates: &C,
    ) -> Result<SgdlmStep> {
        let t = self.t + 1;
        let outcome =
            conjugate_step(&mut self.models, &self.structure, &self.history, y, covariates, t)?;
        let step_seed = child_seed(self.config.seed, &[TAG_STEP, t as u64]);
        let batch = recouple_is(&self.models, &self.structure, self.config.i_samples, step_seed)?;
        let entropy = entropy_index(&batch.weights);
        let vb_skipped = batch.ess < self.config.ess_floor * self.config.i_samples as f64;
        if !vb_skipped {
            let vb = vb_decouple(&batch)?;
            for (model, posterior) in self.models.iter_mut().zip(vb.posteriors) {
                model.posterior = posterior;
            }
        }
        self.side = side_update(&self.side, y)?;
        let mut reports = Vec::new();
        if let Some(cfg) = self.config.hotspot.clone() {
            let ParentalStructure::Simultaneous { slots } = &mut self.structure else {
                return Err(CoreError::config(
                    "hot-spot adaptation requires a simultaneous structure",
                ));
            };
            for j in 0..self.models.len() {
                reports.push(hotspot_adapt(
                    &mut self.models[j],
                    &mut slots[j],
                    &self.discounts[j],
                    &self.side,
                    j,
                    &cfg,
                )?);
            }
        }
        self.history.push(y.to_owned());
        self.t = t;
        Ok(SgdlmStep { outcome, ess: batch.ess, entropy_index: entropy, vb_skipped, reports })
    }

    /// Joint forecast from the current state; deterministic for a given
    /// driver seed and step count.
    pub fn forecast<C: CovariateSource + ?Sized>(
        &self,
        covariates: &C,
        k: usize,
        n: usize,
        collect_snapshots: bool,
    ) -> Result<SgdlmForecast> {
        let seed = child_seed(self.config.seed, &[TAG_FORECAST, self.t as u64]);
        let origin = self.t.saturating_sub(1);
        forecast_paths_sgdlm(
            &self.models,
            &self.structure,
            &self.history,
            covariates,
            origin,
            k,
            n,
            seed,
            collect_snapshots,
        )
    }
}
