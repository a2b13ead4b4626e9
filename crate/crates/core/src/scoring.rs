//! Sequential model evaluation: cumulative and power-discounted log scores,
//! model probabilities, horizon-specific density scores, and PIT calibration
//! diagnostics.
//!
//! The ledger tracks, per candidate model,
//!
//! * the plain cumulative log score Σₜ log p(yₜ | D_{t−1}, M),
//! * the power-discounted score Sₜ = α·S_{t−1} + log p(yₜ | ·) for
//!   α ∈ (0, 1], which geometrically forgets the distant past, and
//! * model probabilities updated as π ← normalize(π^α · lik): at α = 1 this
//!   is exact Bayesian model averaging, while α < 1 flattens the running
//!   posterior before each update so no single early observation can pin the
//!   weights down forever.
//!
//! Calibration uses the probability integral transform. For continuous
//! forecasts u = F(y) is exactly U(0, 1) under the forecast distribution; for
//! counts the randomized transform u ~ Uniform(F(y−1), F(y)) restores that
//! exact uniform null. Horizon-specific scores are Rao-Blackwellized mixture
//! densities: each forecast path carries the conditional joint Gaussian it
//! stepped through, the observation is scored under every such component
//! exactly, and the components are averaged in log space.

use ndarray::{ArrayView1, ArrayView2};
use rand::Rng;

use crate::ddnm::{ForecastEnsemble, JointSnapshot};
use crate::dglm::CountForecast;
use crate::dlm::StudentForecast;
use crate::error::{CoreError, Result};
use crate::special::{logsumexp, student_t_cdf};

/// Running comparison of candidate models under a common data stream.
#[derive(Debug, Clone)]
pub struct ScoreLedger {
    /// Plain cumulative log scores Σ log-lik.
    log_scores: Vec<f64>,
    /// Power-discounted scores S = α·S + log-lik.
    discounted_scores: Vec<f64>,
    /// Normalized log model probabilities.
    log_probs: Vec<f64>,
}

impl ScoreLedger {
    /// Ledger over `n_models` candidates with a uniform prior.
    pub fn new(n_models: usize) -> Result<Self> {
        if n_models == 0 {
            return Err(CoreError::config("a score ledger needs at least one model"));
        }
        Ok(ScoreLedger {
            log_scores: vec![0.0; n_models],
            discounted_scores: vec![0.0; n_models],
            log_probs: vec![-(n_models as f64).ln(); n_models],
        })
    }

    /// Ledger with an explicit prior (positive weights, normalized here).
    pub fn with_prior(prior: &[f64]) -> Result<Self> {
        if prior.is_empty() {
            return Err(CoreError::config("a score ledger needs at least one model"));
        }
        if let Some(&bad) = prior.iter().find(|&&p| !(p > 0.0) || !p.is_finite()) {
            return Err(CoreError::config(format!(
                "prior model probabilities must be positive and finite, got {bad}"
            )));
        }
        let total: f64 = prior.iter().sum();
        Ok(ScoreLedger {
            log_scores: vec![0.0; prior.len()],
            discounted_scores: vec![0.0; prior.len()],
            log_probs: prior.iter().map(|&p| (p / total).ln()).collect(),
        })
    }

    pub fn n_models(&self) -> usize {
        self.log_probs.len()
    }

    /// Cumulative log marginal likelihoods.
    pub fn log_scores(&self) -> &[f64] {
        &self.log_scores
    }

    /// Power-discounted scores.
    pub fn discounted_scores(&self) -> &[f64] {
        &self.discounted_scores
    }

    /// Model probabilities: nonnegative, summing to 1 within 1e−12.
    pub fn probabilities(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self.log_probs.iter().map(|&lp| lp.exp()).collect();
        let total: f64 = p.iter().sum();
        for v in p.iter_mut() {
            *v /= total;
        }
        p
    }

    /// Fold one step of per-model log one-step densities into the ledger.
    ///
    /// Scores: S ← α·S + log-lik (cumulative score uses α = 1 always).
    /// Probabilities: log π ← α·log π + log-lik, renormalized — the α-power
    /// flattens the running posterior before the Bayes step, so at α = 1 the
    /// update is exact Bayesian model averaging.
    pub fn accumulate(&mut self, log_liks: &[f64], alpha: f64) -> Result<()> {
        if log_liks.len() != self.n_models() {
            return Err(CoreError::config(format!(
                "{} log likelihoods for {} models",
                log_liks.len(),
                self.n_models()
            )));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(CoreError::config(format!(
                "power discount factor must lie in (0, 1], got {alpha}"
            )));
        }
        if let Some((m, &bad)) = log_liks.iter().enumerate().find(|(_, l)| !l.is_finite()) {
            return Err(CoreError::data(format!(
                "model {m} reported a non-finite log likelihood ({bad})"
            )));
        }
        for m in 0..self.n_models() {
            self.log_scores[m] += log_liks[m];
            self.discounted_scores[m] = alpha * self.discounted_scores[m] + log_liks[m];
            self.log_probs[m] = alpha * self.log_probs[m] + log_liks[m];
        }
        let lse = logsumexp(&self.log_probs);
        if !lse.is_finite() {
            return Err(CoreError::numeric(
                "model probabilities degenerated: every model has zero posterior mass",
            ));
        }
        for lp in self.log_probs.iter_mut() {
            *lp -= lse;
        }
        Ok(())
    }
}

/// PIT for a continuous Student-t forecast: u = F(y), exactly U(0, 1) when y
/// is drawn from the forecast distribution.
pub fn pit_continuous(forecast: &StudentForecast, y: f64) -> f64 {
    student_t_cdf(y, forecast.location, forecast.spread, forecast.dof)
}

/// Randomized PIT for a count forecast: u ~ Uniform(F(y−1), F(y)). The
/// randomization smooths the discrete CDF steps so that u is *exactly*
/// U(0, 1) when y is drawn from the forecast distribution.
pub fn pit_count<R: Rng + ?Sized>(forecast: &CountForecast, y: u64, rng: &mut R) -> f64 {
    let hi = forecast.cdf(y as i64);
    let lo = if y == 0 { 0.0 } else { forecast.cdf(y as i64 - 1) };
    lo + (hi - lo) * rng.gen::<f64>()
}

/// An ordered sample of PIT values with its Kolmogorov–Smirnov distance from
/// U(0, 1).
#[derive(Debug, Clone)]
pub struct PitRecord {
    /// Sorted u values, each in [0, 1].
    pub sorted: Vec<f64>,
    /// D_n = sup |F̂(u) − u|.
    pub ks_statistic: f64,
}

impl PitRecord {
    pub fn from_samples(mut us: Vec<f64>) -> Result<Self> {
        if us.is_empty() {
            return Err(CoreError::config("a PIT record needs at least one value"));
        }
        if let Some(&bad) = us.iter().find(|&&u| !(0.0..=1.0).contains(&u)) {
            return Err(CoreError::data(format!("PIT value {bad} lies outside [0, 1]")));
        }
        us.sort_by(|a, b| a.partial_cmp(b).expect("values are finite"));
        let n = us.len() as f64;
        let mut d: f64 = 0.0;
        for (i, &u) in us.iter().enumerate() {
            d = d.max(((i + 1) as f64 / n - u).abs());
            d = d.max((u - i as f64 / n).abs());
        }
        Ok(PitRecord { sorted: us, ks_statistic: d })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Whether D_n exceeds the asymptotic critical value at the given level.
    pub fn rejects(&self, level: KsLevel) -> bool {
        self.ks_statistic > level.critical(self.len())
    }
}

/// Supported KS test levels with their asymptotic critical coefficients
/// (D_crit = coeff/√n).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KsLevel {
    OnePercent,
    FivePercent,
    TenPercent,
}

impl KsLevel {
    pub fn coefficient(self) -> f64 {
        match self {
            KsLevel::OnePercent => 1.62762,
            KsLevel::FivePercent => 1.35810,
            KsLevel::TenPercent => 1.22385,
        }
    }

    pub fn critical(self, n: usize) -> f64 {
        self.coefficient() / (n as f64).sqrt()
    }
}

/// Exact log density of the conditional joint Gaussian recorded in one path
/// snapshot, evaluated at an outcome vector: with residual r = (I − Γ)y − μ,
///
///   log p(y) = −q/2·log 2π + ½Σ log λ + log|det(I − Γ)| − ½ Σ λⱼ rⱼ².
pub fn joint_log_density(snapshot: &JointSnapshot, y: &ArrayView1<f64>) -> Result<f64> {
    let q = snapshot.mu.len();
    if y.len() != q {
        return Err(CoreError::data(format!(
            "outcome has length {}, snapshot describes {q} series",
            y.len()
        )));
    }
    let mut quad = 0.0;
    let mut log_prec = 0.0;
    for j in 0..q {
        let lambda = snapshot.lambda[j];
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(CoreError::numeric(format!(
                "snapshot precision for series {j} is {lambda}"
            )));
        }
        let mut r = y[j] - snapshot.mu[j];
        for &(h, g) in &snapshot.gamma.rows()[j] {
            r -= g * y[h];
        }
        quad += lambda * r * r;
        log_prec += lambda.ln();
    }
    let log_det = snapshot.gamma.log_abs_det_i_minus_gamma();
    Ok(-0.5 * q as f64 * (2.0 * std::f64::consts::PI).ln() + 0.5 * log_prec + log_det
        - 0.5 * quad)
}

/// A Rao-Blackwellized mixture density estimate.
#[derive(Debug, Clone, Copy)]
pub struct DensityScore {
    /// log p̂(y) = logsumexp over components − log N.
    pub log_density: f64,
    /// True when every mixture component underflowed to zero mass.
    pub underflowed: bool,
}

fn snapshots_of(ensemble: &ForecastEnsemble) -> Result<&Vec<Vec<JointSnapshot>>> {
    ensemble.snapshots.as_ref().ok_or_else(|| {
        CoreError::config(
            "horizon scoring needs an ensemble generated with snapshot collection on",
        )
    })
}

/// Estimate log p(y at horizon h | forecast origin) by averaging the exact
/// conditional joint densities recorded along each sampled path. `h` is
/// 1-based and must not exceed the ensemble horizon.
pub fn horizon_score(
    ensemble: &ForecastEnsemble,
    h: usize,
    y_observed: &ArrayView1<f64>,
) -> Result<DensityScore> {
    let snapshots = snapshots_of(ensemble)?;
    let horizon = ensemble.samples.shape()[1];
    if h == 0 || h > horizon {
        return Err(CoreError::config(format!(
            "horizon {h} outside the ensemble's range 1..={horizon}"
        )));
    }
    let components: Vec<f64> = snapshots
        .iter()
        .map(|path| joint_log_density(&path[h - 1], y_observed))
        .collect::<Result<_>>()?;
    mixture_estimate(&components)
}

/// Estimate the log joint path density log p(y_{1..k} | origin) from the same
/// snapshots: each path contributes the product of its conditional step
/// densities along the observed path.
pub fn path_score(ensemble: &ForecastEnsemble, y_path: &ArrayView2<f64>) -> Result<DensityScore> {
    let snapshots = snapshots_of(ensemble)?;
    let horizon = ensemble.samples.shape()[1];
    let q = ensemble.samples.shape()[2];
    if y_path.nrows() != horizon || y_path.ncols() != q {
        return Err(CoreError::data(format!(
            "observed path is {}×{}, ensemble paths are {horizon}×{q}",
            y_path.nrows(),
            y_path.ncols()
        )));
    }
    let components: Vec<f64> = snapshots
        .iter()
        .map(|path| {
            let mut total = 0.0;
            for (h, snapshot) in path.iter().enumerate() {
                total += joint_log_density(snapshot, &y_path.row(h))?;
            }
            Ok(total)
        })
        .collect::<Result<_>>()?;
    mixture_estimate(&components)
}

fn mixture_estimate(components: &[f64]) -> Result<DensityScore> {
    if components.is_empty() {
        return Err(CoreError::config("mixture estimate over zero components"));
    }
    let lse = logsumexp(components);
    if lse == f64::NEG_INFINITY {
        return Ok(DensityScore { log_density: f64::NEG_INFINITY, underflowed: true });
    }
    Ok(DensityScore {
        log_density: lse - (components.len() as f64).ln(),
        underflowed: false,
    })
}

/// Convenience: PIT values for a whole series history, continuous case.
pub fn pit_series(forecasts: &[StudentForecast], ys: &ArrayView1<f64>) -> Result<PitRecord> {
    if forecasts.len() != ys.len() {
        return Err(CoreError::config(format!(
            "{} forecasts for {} observations",
            forecasts.len(),
            ys.len()
        )));
    }
    PitRecord::from_samples(
        forecasts.iter().zip(ys.iter()).map(|(f, &y)| pit_continuous(f, y)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddnm;
    use crate::dlm::{DlmSpec, NigPosterior};
    use crate::regression::{BlockDiscounts, History, NoCovariates, RegressionLayout, Term};
    use crate::special::student_t_logpdf;
    use crate::structure::{GammaMatrix, ParentalStructure};
    use approx::assert_abs_diff_eq;
    use ndarray::{arr1, Array2, Array3, Axis};
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Gamma, Poisson};

    #[test]
    fn test_accumulate_is_bayes_rule_at_alpha_one() {
        let mut ledger = ScoreLedger::with_prior(&[0.5, 0.5]).unwrap();
        ledger.accumulate(&[0.2_f64.ln(), 0.1_f64.ln()], 1.0).unwrap();
        let p = ledger.probabilities();
        assert_abs_diff_eq!(p[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn test_alpha_one_discounted_equals_cumulative() {
        let mut ledger = ScoreLedger::new(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..40 {
            let liks: Vec<f64> = (0..3).map(|_| -2.0 + rng.gen::<f64>()).collect();
            ledger.accumulate(&liks, 1.0).unwrap();
        }
        assert_eq!(ledger.log_scores(), ledger.discounted_scores());
    }

    #[test]
    fn test_discounted_score_geometric_limit() {
        let mut ledger = ScoreLedger::new(1).unwrap();
        let l = -1.3;
        for _ in 0..500 {
            ledger.accumulate(&[l], 0.9).unwrap();
        }
        assert_abs_diff_eq!(ledger.discounted_scores()[0], l / (1.0 - 0.9), epsilon = 1e-10);
    }

    #[test]
    fn test_early_observation_influence_is_bounded() {
        // Changing the first log-lik by Δ changes the step-n discounted score
        // by exactly αⁿ⁻¹·Δ.
        let alpha = 0.95;
        let delta = 2.0;
        let mut a = ScoreLedger::new(1).unwrap();
        let mut b = ScoreLedger::new(1).unwrap();
        a.accumulate(&[-1.0], alpha).unwrap();
        b.accumulate(&[-1.0 + delta], alpha).unwrap();
        let n = 30;
        for _ in 1..n {
            a.accumulate(&[-0.7], alpha).unwrap();
            b.accumulate(&[-0.7], alpha).unwrap();
        }
        let gap = b.discounted_scores()[0] - a.discounted_scores()[0];
        assert_abs_diff_eq!(gap, alpha.powi(n - 1) * delta, epsilon = 1e-12);
    }

    #[test]
    fn test_accumulate_rejects_bad_input() {
        let mut ledger = ScoreLedger::new(2).unwrap();
        assert!(matches!(ledger.accumulate(&[0.0, 0.0], 0.0), Err(CoreError::Config(_))));
        assert!(matches!(ledger.accumulate(&[0.0, 0.0], 1.1), Err(CoreError::Config(_))));
        assert!(matches!(ledger.accumulate(&[0.0], 1.0), Err(CoreError::Config(_))));
        assert!(matches!(
            ledger.accumulate(&[f64::NAN, 0.0], 1.0),
            Err(CoreError::Data(_))
        ));
        assert!(matches!(
            ledger.accumulate(&[f64::NEG_INFINITY, 0.0], 1.0),
            Err(CoreError::Data(_))
        ));
        assert!(ScoreLedger::with_prior(&[0.5, -0.1]).is_err());
        assert!(ScoreLedger::new(0).is_err());
    }

    #[test]
    fn test_true_model_concentrates_under_exact_bayes() {
        // Data from N(0,1); candidates N(0,1) and N(0.5,1). Exact Bayes at
        // α = 1 must give the true model essentially all the mass.
        let mut ledger = ScoreLedger::new(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let norm_logpdf = |y: f64, m: f64| -0.5 * ((y - m) * (y - m) + (2.0 * std::f64::consts::PI).ln());
        for _ in 0..400 {
            let y: f64 = rand_distr::StandardNormal.sample(&mut rng);
            ledger.accumulate(&[norm_logpdf(y, 0.0), norm_logpdf(y, 0.5)], 1.0).unwrap();
        }
        assert!(ledger.probabilities()[0] > 0.99);
    }

    proptest! {
        #[test]
        fn prop_probabilities_stay_on_simplex(
            liks in proptest::collection::vec(
                proptest::collection::vec(-5.0..5.0f64, 4), 1..30),
            alpha in 0.5..=1.0f64,
        ) {
            let mut ledger = ScoreLedger::new(4).unwrap();
            for step in &liks {
                ledger.accumulate(step, alpha).unwrap();
                let p = ledger.probabilities();
                prop_assert!(p.iter().all(|&v| v >= 0.0));
                let total: f64 = p.iter().sum();
                prop_assert!((total - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn test_pit_continuous_median_and_tails() {
        let f = StudentForecast { location: 2.0, spread: 1.5, dof: 7.0 };
        assert_abs_diff_eq!(pit_continuous(&f, 2.0), 0.5, epsilon = 1e-12);
        assert!(pit_continuous(&f, -40.0) < 1e-6);
        assert!(pit_continuous(&f, 40.0) > 1.0 - 1e-6);
        assert!(pit_continuous(&f, 2.5) > pit_continuous(&f, 1.5));
    }

    #[test]
    fn test_pit_count_lands_in_cdf_bracket() {
        let f = CountForecast { shape: 3.0, rate: 1.0, exposure: 1.0 };
        let y = 2u64;
        let lo = f.cdf(1);
        let hi = f.cdf(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let u = pit_count(&f, y, &mut rng);
            assert!(u >= lo && u <= hi, "u = {u} outside [{lo}, {hi}]");
        }
        // y = 0 bracket starts at zero.
        let u0 = pit_count(&f, 0, &mut rng);
        assert!(u0 >= 0.0 && u0 <= f.cdf(0));
    }

    #[test]
    fn test_randomized_pit_is_exactly_uniform_under_self_generation() {
        // Draw y from the forecast's own negative-binomial law (as a
        // Gamma-Poisson mixture); the randomized PIT must be exactly U(0,1).
        let f = CountForecast { shape: 4.0, rate: 2.0, exposure: 1.5 };
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let gamma = Gamma::new(f.shape, 1.0 / f.rate).unwrap();
        let n = 4000;
        let us: Vec<f64> = (0..n)
            .map(|_| {
                let rate: f64 = gamma.sample(&mut rng);
                let y = Poisson::new((rate * f.exposure).max(1e-300)).unwrap().sample(&mut rng);
                pit_count(&f, y as u64, &mut rng)
            })
            .collect();
        let record = PitRecord::from_samples(us).unwrap();
        assert!(
            !record.rejects(KsLevel::OnePercent),
            "KS = {} exceeds the 1% critical value",
            record.ks_statistic
        );
    }

    #[test]
    fn test_pit_record_pinned_ks() {
        // Hand-computed: empirical CDF of {0.1, 0.4, 0.8} vs the identity.
        let record = PitRecord::from_samples(vec![0.8, 0.1, 0.4]).unwrap();
        assert_eq!(record.sorted, vec![0.1, 0.4, 0.8]);
        assert_abs_diff_eq!(record.ks_statistic, 4.0 / 15.0, epsilon = 1e-12);
        // Midpoint grid (i − ½)/n has D = 1/(2n) exactly.
        let n = 20;
        let grid: Vec<f64> = (1..=n).map(|i| (i as f64 - 0.5) / n as f64).collect();
        let record = PitRecord::from_samples(grid).unwrap();
        assert_abs_diff_eq!(record.ks_statistic, 0.5 / n as f64, epsilon = 1e-12);
        assert!(PitRecord::from_samples(vec![1.2]).is_err());
        assert!(PitRecord::from_samples(vec![]).is_err());
    }

    #[test]
    fn test_ks_critical_values() {
        assert_abs_diff_eq!(KsLevel::OnePercent.critical(100), 0.162762, epsilon = 1e-9);
        assert!(KsLevel::OnePercent.critical(100) > KsLevel::FivePercent.critical(100));
    }

    /// One-series local-level model with a pinned posterior.
    fn fixed_model(mean: f64, s: f64, dof: f64, c: f64) -> ddnm::SeriesModel {
        let layout = RegressionLayout::new(vec![Term::Trend { order: 0 }]).unwrap();
        let spec = DlmSpec::new(layout, &BlockDiscounts::uniform(1.0), 1.0).unwrap();
        let posterior =
            NigPosterior::new(arr1(&[mean]), Array2::eye(1) * c, dof, s).unwrap();
        ddnm::SeriesModel { spec, posterior }
    }

    #[test]
    fn test_horizon_score_matches_product_t_oracle() {
        // Γ = 0 and C = 0: states are fixed at their means, only λ varies
        // across mixture components, and the exact one-step density is the
        // product of Student-t margins.
        let models = vec![fixed_model(1.0, 2.0, 6.0, 0.0), fixed_model(-0.5, 0.5, 9.0, 0.0)];
        let structure = ParentalStructure::identity_ordered(vec![vec![], vec![]]).unwrap();
        let history = History::new(0);
        let ensemble = ddnm::forecast_paths(
            &models, &structure, &history, &NoCovariates, 0, 1, 20_000, 23, true,
        )
        .unwrap();
        let y = arr1(&[1.7, -0.2]);
        let score = horizon_score(&ensemble, 1, &y.view()).unwrap();
        assert!(!score.underflowed);
        let oracle = student_t_logpdf(y[0], 1.0, 2.0, 6.0) + student_t_logpdf(y[1], -0.5, 0.5, 9.0);
        assert_abs_diff_eq!(score.log_density, oracle, epsilon = 0.02);
    }

    #[test]
    fn test_horizon_score_single_sample_is_the_component_density() {
        let models = vec![fixed_model(0.3, 1.0, 8.0, 0.2)];
        let structure = ParentalStructure::identity_ordered(vec![vec![]]).unwrap();
        let history = History::new(0);
        let ensemble =
            ddnm::forecast_paths(&models, &structure, &history, &NoCovariates, 0, 2, 1, 5, true)
                .unwrap();
        let y = arr1(&[0.9]);
        let score = horizon_score(&ensemble, 2, &y.view()).unwrap();
        let direct =
            joint_log_density(&ensemble.snapshots.as_ref().unwrap()[0][1], &y.view()).unwrap();
        assert_eq!(score.log_density, direct);
    }

    #[test]
    fn test_horizon_score_duplicate_samples_idempotent() {
        let models = vec![fixed_model(0.0, 1.0, 5.0, 0.3)];
        let structure = ParentalStructure::identity_ordered(vec![vec![]]).unwrap();
        let history = History::new(0);
        let base =
            ddnm::forecast_paths(&models, &structure, &history, &NoCovariates, 0, 1, 64, 9, true)
                .unwrap();
        let mut doubled_snaps = base.snapshots.clone().unwrap();
        doubled_snaps.extend(base.snapshots.clone().unwrap());
        let n = base.samples.shape()[0];
        let mut doubled_samples = Array3::zeros((2 * n, 1, 1));
        for i in 0..n {
            let row = base.samples.index_axis(Axis(0), i).to_owned();
            doubled_samples.index_axis_mut(Axis(0), i).assign(&row);
            doubled_samples.index_axis_mut(Axis(0), n + i).assign(&row);
        }
        let doubled = ForecastEnsemble {
            samples: doubled_samples,
            seed: base.seed,
            snapshots: Some(doubled_snaps),
        };
        let y = arr1(&[0.4]);
        let a = horizon_score(&base, 1, &y.view()).unwrap();
        let b = horizon_score(&doubled, 1, &y.view()).unwrap();
        assert_abs_diff_eq!(a.log_density, b.log_density, epsilon = 1e-12);
    }

    #[test]
    fn test_horizon_score_underflow_flag() {
        let models = vec![fixed_model(0.0, 1.0, 50.0, 0.0)];
        let structure = ParentalStructure::identity_ordered(vec![vec![]]).unwrap();
        let history = History::new(0);
        let ensemble =
            ddnm::forecast_paths(&models, &structure, &history, &NoCovariates, 0, 1, 32, 2, true)
                .unwrap();
        let score = horizon_score(&ensemble, 1, &arr1(&[1e200]).view()).unwrap();
        assert!(score.underflowed);
        assert_eq!(score.log_density, f64::NEG_INFINITY);
    }

    #[test]
    fn test_horizon_score_input_errors() {
        let models = vec![fixed_model(0.0, 1.0, 5.0, 0.1)];
        let structure = ParentalStructure::identity_ordered(vec![vec![]]).unwrap();
        let history = History::new(0);
        let with = ddnm::forecast_paths(&models, &structure, &history, &NoCovariates, 0, 2, 8, 1, true)
            .unwrap();
        let without =
            ddnm::forecast_paths(&models, &structure, &history, &NoCovariates, 0, 2, 8, 1, false)
                .unwrap();
        let y = arr1(&[0.0]);
        assert!(matches!(
            horizon_score(&without, 1, &y.view()),
            Err(CoreError::Config(_))
        ));
        assert!(matches!(horizon_score(&with, 0, &y.view()), Err(CoreError::Config(_))));
        assert!(matches!(horizon_score(&with, 3, &y.view()), Err(CoreError::Config(_))));
        assert!(matches!(
            horizon_score(&with, 1, &arr1(&[0.0, 0.0]).view()),
            Err(CoreError::Data(_))
        ));
    }

    #[test]
    fn test_path_score_single_sample_adds_step_densities() {
        let models = vec![fixed_model(0.1, 1.2, 7.0, 0.15)];
        let structure = ParentalStructure::identity_ordered(vec![vec![]]).unwrap();
        let history = History::new(0);
        let ensemble =
            ddnm::forecast_paths(&models, &structure, &history, &NoCovariates, 0, 3, 1, 31, true)
                .unwrap();
        let path = ndarray::arr2(&[[0.2], [0.0], [-0.3]]);
        let total = path_score(&ensemble, &path.view()).unwrap();
        let snaps = ensemble.snapshots.as_ref().unwrap();
        let expected: f64 = (0..3)
            .map(|h| joint_log_density(&snaps[0][h], &path.row(h)).unwrap())
            .sum();
        assert_abs_diff_eq!(total.log_density, expected, epsilon = 1e-12);
    }

    #[test]
    fn test_joint_log_density_gaussian_oracle() {
        // Hand-built snapshot: q = 2, y₀ ← y₁ with γ = 0.5, μ = (1, −1),
        // λ = (4, 1). Density matches the explicit bivariate Gaussian.
        let gamma = GammaMatrix::from_rows(2, vec![vec![(1, 0.5)], vec![]]).unwrap();
        let snapshot = ddnm::JointSnapshot {
            mu: arr1(&[1.0, -1.0]),
            gamma,
            lambda: arr1(&[4.0, 1.0]),
        };
        let y = arr1(&[0.7, -0.4]);
        // r₀ = y₀ − 0.5·y₁ − 1, r₁ = y₁ + 1.
        let r0: f64 = 0.7 - 0.5 * (-0.4) - 1.0;
        let r1: f64 = -0.4 + 1.0;
        let expected = -(2.0 * std::f64::consts::PI).ln() + 0.5 * 4.0_f64.ln()
            - 0.5 * (4.0 * r0 * r0 + 1.0 * r1 * r1);
        assert_abs_diff_eq!(
            joint_log_density(&snapshot, &y.view()).unwrap(),
            expected,
            epsilon = 1e-12
        );
    }

    #[test]
    fn test_pit_series_collects_and_checks_lengths() {
        let forecasts = vec![
            StudentForecast { location: 0.0, spread: 1.0, dof: 5.0 },
            StudentForecast { location: 1.0, spread: 2.0, dof: 5.0 },
        ];
        let record = pit_series(&forecasts, &arr1(&[0.0, 1.0]).view()).unwrap();
        assert_eq!(record.sorted, vec![0.5, 0.5]);
        assert!(pit_series(&forecasts, &arr1(&[0.0]).view()).is_err());
    }
}
