//! Dynamic dependence network model: decoupled univariate filtering coupled
//! through contemporaneous parental predictors.
//!
//! Series are ordered; series j's regression vector includes the *realized*
//! outcomes of its parents pa(j), all of which come later in the order, so Γ
//! is strictly triangular and the joint one-step density factorizes into the
//! product of per-series Student-t conditionals. Given states and volatilities
//! the simultaneous system
//!
//! ```text
//!   y = μ + Γ y + ν,   ν ~ N(0, Λ⁻¹),  Λ = diag(λ₁…λ_q)
//! ```
//!
//! has joint moments mean = A μ and precision Ω = (I−Γ)′Λ(I−Γ) with
//! A = (I−Γ)⁻¹. Filtering is a parallel map over series; path forecasting
//! simulates states, volatilities and outcomes jointly, proceeding through
//! series in reverse order so every parent is realized before its children,
//! and feeding simulated outcomes back as lagged predictors.

use ndarray::{Array1, Array2, Array3, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dlm::{self, DlmSpec, NigPosterior, PathKernel, PathState, StudentForecast};
use crate::error::{CoreError, Result};
use crate::regression::{CovariateSource, History, PathBuffer, PredictorInputs};
use crate::rng::stream;
use crate::structure::{GammaMatrix, ParentalStructure};

/// RNG stream tag for path-forecast samples.
const TAG_PATH: u64 = 0x7061_7468;

/// One series' model: its specification and current conjugate posterior.
#[derive(Debug, Clone)]
pub struct SeriesModel {
    pub spec: DlmSpec,
    pub posterior: NigPosterior,
}

/// Verify that every model's parental slots agree with the structure, in
/// order — filtering and forecasting both rely on this correspondence.
pub fn check_alignment(models: &[SeriesModel], structure: &ParentalStructure) -> Result<()> {
    if models.len() != structure.n_series() {
        return Err(CoreError::config(format!(
            "{} models supplied for a structure over {} series",
            models.len(),
            structure.n_series()
        )));
    }
    for (j, model) in models.iter().enumerate() {
        let slot_series: Vec<usize> =
            model.spec.layout.parent_slots().iter().map(|&(_, s)| s).collect();
        let expected = structure.parent_series(j);
        if slot_series != expected {
            return Err(CoreError::config(format!(
                "series {j}: layout parent slots {slot_series:?} do not match structure parents {expected:?}"
            )));
        }
        if model.posterior.state_dim() != model.spec.state_dim() {
            return Err(CoreError::config(format!(
                "series {j}: posterior dimension {} does not match layout dimension {}",
                model.posterior.state_dim(),
                model.spec.state_dim()
            )));
        }
    }
    Ok(())
}

/// Per-series results of one filtering step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// log p(y_{j,t} | parents, D_{t−1}) per series.
    pub log_predictives: Vec<f64>,
    /// The conditional one-step forecast each series faced (parents realized).
    pub forecasts: Vec<StudentForecast>,
}

impl StepOutcome {
    /// Joint one-step log density: the compositional product of conditionals.
    pub fn joint_log_predictive(&self) -> f64 {
        self.log_predictives.iter().sum()
    }
}

/// One filtering step: every series evolves and updates independently, its
/// regression vector assembled from covariates, lags, and realized parental
/// outcomes. Models are committed only if every series succeeds.
pub fn filter_step<C: CovariateSource + ?Sized>(
    models: &mut [SeriesModel],
    structure: &ParentalStructure,
    history: &History,
    y: &ArrayView1<f64>,
    covariates: &C,
    t: usize,
) -> Result<StepOutcome> {
    check_alignment(models, structure)?;
    let q = models.len();
    if y.len() != q {
        return Err(CoreError::data(format!(
            "observation vector has length {}, expected {q}",
            y.len()
        )));
    }
    for (j, v) in y.iter().enumerate() {
        if !v.is_finite() {
            return Err(CoreError::data(format!(
                "observation for series {j} at step {t} is missing or not finite ({v})"
            )));
        }
    }
    let results: Vec<(NigPosterior, StudentForecast, f64)> = models
        .par_iter()
        .enumerate()
        .map(|(j, model)| {
            let prior = dlm::evolve(&model.posterior, &model.spec, t)?;
            let f_vec = model.spec.layout.build_f(&PredictorInputs {
                covariates: covariates.at(t, j),
                factors: None,
                lags: history,
                parent: &|h| y.get(h).copied(),
            })?;
            let up = dlm::update(&prior, &f_vec, y[j])?;
            Ok((up.posterior, up.forecast, up.log_predictive))
        })
        .collect::<Result<_>>()?;
    let mut log_predictives = Vec::with_capacity(q);
    let mut forecasts = Vec::with_capacity(q);
    for (model, (posterior, forecast, lp)) in models.iter_mut().zip(results) {
        model.posterior = posterior;
        forecasts.push(forecast);
        log_predictives.push(lp);
    }
    Ok(StepOutcome { log_predictives, forecasts })
}

/// Joint first and second moments of the simultaneous system at fixed states.
#[derive(Debug, Clone)]
pub struct JointMoments {
    /// A μ — the joint mean.
    pub mean: Array1<f64>,
    /// Ω = (I−Γ)′Λ(I−Γ) — the joint precision.
    pub precision: Array2<f64>,
    /// A = (I−Γ)⁻¹.
    pub crosstalk: Array2<f64>,
}

/// Joint moments from structural means μ, coefficients Γ and observational
/// precisions λ.
pub fn joint_moments(
    mu: &ArrayView1<f64>,
    gamma: &GammaMatrix,
    lambda: &ArrayView1<f64>,
) -> Result<JointMoments> {
    let q = gamma.q();
    if mu.len() != q || lambda.len() != q {
        return Err(CoreError::config(format!(
            "dimension mismatch: mu {}, lambda {}, gamma {q}",
            mu.len(),
            lambda.len()
        )));
    }
    for (j, &l) in lambda.iter().enumerate() {
        if !(l > 0.0) {
            return Err(CoreError::config(format!(
                "precision for series {j} must be positive, got {l}"
            )));
        }
    }
    let m = gamma.i_minus_gamma();
    // Ω = M′ Λ M, accumulated column-by-column and symmetrized.
    let mut precision = Array2::<f64>::zeros((q, q));
    for c in 0..q {
        let lc = lambda[c];
        for j in 0..q {
            let mj = m[[c, j]];
            if mj == 0.0 {
                continue;
            }
            for h in 0..q {
                precision[[j, h]] += mj * lc * m[[c, h]];
            }
        }
    }
    crate::linalg::symmetrize(&mut precision);
    let crosstalk = gamma.inverse_i_minus_gamma()?;
    let mean = crosstalk.dot(mu);
    Ok(JointMoments { mean, precision, crosstalk })
}

/// Snapshot of the simultaneous system at one sampled state: everything
/// needed to evaluate the exact conditional joint density later.
#[derive(Debug, Clone)]
pub struct JointSnapshot {
    pub mu: Array1<f64>,
    pub gamma: GammaMatrix,
    pub lambda: Array1<f64>,
}

/// Monte Carlo ensemble of joint outcome paths.
#[derive(Debug, Clone)]
pub struct ForecastEnsemble {
    /// N × horizon × q array of sampled outcomes.
    pub samples: Array3<f64>,
    /// Master seed the ensemble was derived from.
    pub seed: u64,
    /// Per-sample per-step system snapshots, when requested.
    pub snapshots: Option<Vec<Vec<JointSnapshot>>>,
}

/// Everything one sample needs per step, shared across all samples.
pub(crate) struct SeriesKernels {
    kernels: Vec<Vec<PathKernel>>,
}

pub(crate) fn shared_kernels(models: &[SeriesModel], origin: usize, k: usize) -> Result<SeriesKernels> {
    let kernels = models
        .iter()
        .map(|m| dlm::path_kernels(&m.spec, &m.posterior.scale, origin, k))
        .collect::<Result<_>>()?;
    Ok(SeriesKernels { kernels })
}

/// Simulate one joint path; shared by the triangular forecaster here and the
/// simultaneous forecaster, which differ only in how outcomes are drawn from
/// the per-step system (`draw_outcomes`).
pub(crate) fn simulate_path<R, C, F>(
    models: &[SeriesModel],
    shared: &SeriesKernels,
    history: &History,
    covariates: &C,
    origin: usize,
    k: usize,
    rng: &mut R,
    collect_snapshots: bool,
    mut draw_outcomes: F,
) -> Result<(Array2<f64>, Vec<JointSnapshot>)>
where
    R: Rng + ?Sized,
    C: CovariateSource + ?Sized,
    F: FnMut(&JointSnapshot, &mut R) -> Result<Array1<f64>>,
{
    let q = models.len();
    let mut states: Vec<PathState> = models
        .iter()
        .map(|m| PathState::draw(&m.posterior, &m.spec, rng))
        .collect::<Result<_>>()?;
    let mut buffer = PathBuffer::new(history);
    let mut path = Array2::<f64>::zeros((k, q));
    let mut snaps = Vec::with_capacity(if collect_snapshots { k } else { 0 });
    for h in 1..=k {
        for (j, state) in states.iter_mut().enumerate() {
            state
                .step(&shared.kernels[j][h - 1], rng)
                .map_err(|e| CoreError::numeric(format!("series {j}, step {h}: {e}")))?;
        }
        // Structural means with parental entries zeroed; the parental
        // contribution enters through Γ when outcomes are drawn.
        let mut mu = Array1::<f64>::zeros(q);
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(q);
        for (j, model) in models.iter().enumerate() {
            let f0 = model.spec.layout.build_f(&PredictorInputs {
                covariates: covariates.at(origin + h, j),
                factors: None,
                lags: &buffer,
                parent: &|_| Some(0.0),
            })?;
            mu[j] = f0.dot(&states[j].theta);
            rows.push(
                model
                    .spec
                    .layout
                    .parent_slots()
                    .iter()
                    .map(|&(idx, series)| (series, states[j].theta[idx]))
                    .collect(),
            );
        }
        let snapshot = JointSnapshot {
            mu,
            gamma: GammaMatrix::from_rows(q, rows)?,
            lambda: Array1::from_iter(states.iter().map(|s| s.lambda)),
        };
        let y_row = draw_outcomes(&snapshot, rng)?;
        path.row_mut(h - 1).assign(&y_row);
        buffer.push(y_row);
        if collect_snapshots {
            snaps.push(snapshot);
        }
    }
    Ok((path, snaps))
}

/// Joint path forecasting for ordered structures: per sample, draw states and
/// volatilities, then realize outcomes series-by-series in reverse order so
/// each series conditions on its already-simulated parents; simulated
/// outcomes feed lagged predictors at later steps. Deterministic given
/// `seed`, independent of worker count.
pub fn forecast_paths<C: CovariateSource + ?Sized>(
    models: &[SeriesModel],
    structure: &ParentalStructure,
    history: &History,
    covariates: &C,
    origin: usize,
    k: usize,
    n: usize,
    seed: u64,
    collect_snapshots: bool,
) -> Result<ForecastEnsemble> {
    if k == 0 {
        return Err(CoreError::config("forecast horizon must be at least 1"));
    }
    if n == 0 {
        return Err(CoreError::config("sample count must be at least 1"));
    }
    check_alignment(models, structure)?;
    structure.validate()?;
    let sim_order = structure.simulation_order()?;
    let q = models.len();
    let shared = shared_kernels(models, origin, k)?;

    let per_sample: Vec<(Array2<f64>, Vec<JointSnapshot>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, &[TAG_PATH, i as u64]);
            simulate_path(
                models,
                &shared,
                history,
                covariates,
                origin,
                k,
                &mut rng,
                collect_snapshots,
                |snapshot, rng| {
                    let mut y_row = Array1::<f64>::zeros(q);
                    for &j in &sim_order {
                        let mut mean = snapshot.mu[j];
                        for &(h, g) in &snapshot.gamma.rows()[j] {
                            mean += g * y_row[h];
                        }
                        let noise: f64 = rng.sample(StandardNormal);
                        y_row[j] = mean + noise / snapshot.lambda[j].sqrt();
                    }
                    Ok(y_row)
                },
            )
        })
        .collect::<Result<_>>()?;

    let mut samples = Array3::<f64>::zeros((n, k, q));
    let mut snapshots = collect_snapshots.then(|| Vec::with_capacity(n));
    for (i, (path, snaps)) in per_sample.into_iter().enumerate() {
        samples.index_axis_mut(ndarray::Axis(0), i).assign(&path);
        if let Some(all) = snapshots.as_mut() {
            all.push(snaps);
        }
    }
    Ok(ForecastEnsemble { samples, seed, snapshots })
}

/// Sequential driver holding models, structure, and the lag window: feeds
/// observations through [`filter_step`] and forecasts from the current state.
#[derive(Debug, Clone)]
pub struct MultiSeriesFilter {
    models: Vec<SeriesModel>,
    structure: ParentalStructure,
    history: History,
    t: usize,
}

impl MultiSeriesFilter {
    pub fn new(models: Vec<SeriesModel>, structure: ParentalStructure) -> Result<Self> {
        structure.validate()?;
        check_alignment(&models, &structure)?;
        let depth = models.iter().map(|m| m.spec.layout.max_lag()).max().unwrap_or(0);
        Ok(MultiSeriesFilter { models, structure, history: History::new(depth), t: 0 })
    }

    pub fn models(&self) -> &[SeriesModel] {
        &self.models
    }

    pub fn structure(&self) -> &ParentalStructure {
        &self.structure
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
    /// burn-in for lagged predictors. Models stay untouched; the time index
    /// advances so subsequent steps see the correct absolute time.
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
    ) -> Result<StepOutcome> {
        let out = filter_step(&mut self.models, &self.structure, &self.history, y, covariates, self.t)?;
        self.history.push(y.to_owned());
        self.t += 1;
        Ok(out)
    }

    pub fn forecast<C: CovariateSource + ?Sized>(
        &self,
        covariates: &C,
        k: usize,
        n: usize,
        seed: u64,
        collect_snapshots: bool,
    ) -> Result<ForecastEnsemble> {
        let origin = self.t.saturating_sub(1);
        forecast_paths(
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::{BlockDiscounts, NoCovariates, RegressionLayout, Term};
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Axis};
    use rand::Rng;

    /// Level-only model with the given parents appended as slots.
    fn series_model(parents: &[usize], delta: f64, beta: f64) -> SeriesModel {
        let mut terms = vec![Term::Trend { order: 0 }];
        terms.extend(parents.iter().map(|&h| Term::Parent { series: h }));
        let layout = RegressionLayout::new(terms).unwrap();
        let dim = layout.state_dim();
        let spec = DlmSpec::new(layout, &BlockDiscounts::uniform(delta), beta).unwrap();
        SeriesModel { spec, posterior: NigPosterior::diffuse(dim, 1.0, 5.0, 1.0).unwrap() }
    }

    /// Model pinned at exact states: zero scale, huge dof so λ ≈ 1/s.
    fn pinned_model(parents: &[usize], mean: Vec<f64>, s: f64) -> SeriesModel {
        let mut m = series_model(parents, 1.0, 1.0);
        let dim = m.spec.state_dim();
        assert_eq!(mean.len(), dim);
        m.posterior =
            NigPosterior::new(Array1::from(mean), Array2::zeros((dim, dim)), 1e12, s).unwrap();
        m
    }

    #[test]
    fn test_joint_moments_identity_case() {
        let gamma = GammaMatrix::from_rows(3, vec![vec![], vec![], vec![]]).unwrap();
        let jm = joint_moments(
            &array![1.0, 2.0, 3.0].view(),
            &gamma,
            &array![2.0, 4.0, 8.0].view(),
        )
        .unwrap();
        assert_eq!(jm.mean, array![1.0, 2.0, 3.0]);
        assert_eq!(jm.crosstalk, Array2::eye(3));
        assert_eq!(jm.precision, Array2::from_diag(&array![2.0, 4.0, 8.0]));
    }

    #[test]
    fn test_joint_moments_two_series_closed_form() {
        // Series 0 has parent 1 with coefficient γ:
        // Ω = [[λ0, −γλ0], [−γλ0, λ1 + γ²λ0]].
        let (g, l0, l1) = (0.7, 2.0, 3.0);
        let gamma = GammaMatrix::from_rows(2, vec![vec![(1, g)], vec![]]).unwrap();
        let jm = joint_moments(&array![1.0, 1.0].view(), &gamma, &array![l0, l1].view()).unwrap();
        assert_abs_diff_eq!(jm.precision[[0, 0]], l0, epsilon = 1e-14);
        assert_abs_diff_eq!(jm.precision[[0, 1]], -g * l0, epsilon = 1e-14);
        assert_abs_diff_eq!(jm.precision[[1, 1]], l1 + g * g * l0, epsilon = 1e-14);
        // mean = A μ with A = [[1, γ], [0, 1]].
        assert_abs_diff_eq!(jm.mean[0], 1.0 + g, epsilon = 1e-14);
        assert_abs_diff_eq!(jm.mean[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn test_triangular_power_series_terminates() {
        let gamma = GammaMatrix::from_rows(
            3,
            vec![vec![(1, 0.5), (2, -0.3)], vec![(2, 0.8)], vec![]],
        )
        .unwrap();
        let g = gamma.dense();
        let g3 = g.dot(&g).dot(&g);
        assert!(g3.iter().all(|&v| v == 0.0));
        let mu = array![1.0, -2.0, 0.5];
        let series = &mu + &g.dot(&mu) + &g.dot(&g).dot(&mu);
        let solved = gamma.solve(&mu.view()).unwrap();
        for j in 0..3 {
            assert_abs_diff_eq!(series[j], solved[j], epsilon = 1e-14);
        }
    }

    #[test]
    fn test_power_series_agrees_with_solve_below_unit_radius() {
        let mut rng = stream(21, &[0]);
        for _ in 0..50 {
            let q = 2 + (rng.gen::<u64>() % 5) as usize;
            let mut rows = vec![Vec::new(); q];
            for j in 0..q {
                for h in 0..q {
                    if h != j && rng.gen::<f64>() < 0.4 {
                        // Row sums below 1 keep the spectral radius below 1.
                        rows[j].push((h, rng.gen_range(-0.9 / q as f64..0.9 / q as f64)));
                    }
                }
            }
            let gamma = GammaMatrix::from_rows(q, rows).unwrap();
            let mu = Array1::from_iter((0..q).map(|_| rng.gen_range(-2.0..2.0)));
            let solved = gamma.solve(&mu.view()).unwrap();
            let g = gamma.dense();
            let mut series = mu.clone();
            let mut term = mu.clone();
            for _ in 0..400 {
                term = g.dot(&term);
                series += &term;
            }
            for j in 0..q {
                assert_abs_diff_eq!(series[j], solved[j], epsilon = 1e-10);
            }
        }
    }

    /// Moralization predicate: Ω structurally nonzero off-diagonal iff one
    /// parents the other or they share a child.
    fn moralized(structure: &[Vec<usize>], j: usize, h: usize) -> bool {
        structure[j].contains(&h)
            || structure[h].contains(&j)
            || structure.iter().any(|pa| pa.contains(&j) && pa.contains(&h))
    }

    #[test]
    fn test_precision_sparsity_matches_moralization() {
        let mut rng = stream(22, &[0]);
        for _ in 0..50 {
            let q = 3 + (rng.gen::<u64>() % 4) as usize;
            // Random triangular structure under the identity order.
            let parents: Vec<Vec<usize>> = (0..q)
                .map(|j| (j + 1..q).filter(|_| rng.gen::<f64>() < 0.5).collect())
                .collect();
            let rows = parents
                .iter()
                .map(|pa| pa.iter().map(|&h| (h, rng.gen_range(0.5..1.5))).collect())
                .collect();
            let gamma = GammaMatrix::from_rows(q, rows).unwrap();
            let lambda = Array1::from_iter((0..q).map(|_| rng.gen_range(0.5..2.0)));
            let jm =
                joint_moments(&Array1::zeros(q).view(), &gamma, &lambda.view()).unwrap();
            for j in 0..q {
                for h in 0..q {
                    if j == h {
                        continue;
                    }
                    let structural = moralized(&parents, j, h);
                    let numeric = jm.precision[[j, h]].abs() > 1e-12;
                    assert_eq!(
                        numeric, structural,
                        "Ω[{j},{h}] pattern mismatch for parents {parents:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn test_filter_step_empty_parents_equals_independent_updates() {
        let structure = ParentalStructure::identity_ordered(vec![vec![], vec![]]).unwrap();
        let mut models = vec![series_model(&[], 0.9, 0.95), series_model(&[], 0.9, 0.95)];
        let mut solo = models.clone();
        let history = History::new(0);
        let y = array![1.3, -0.4];
        let out =
            filter_step(&mut models, &structure, &history, &y.view(), &NoCovariates, 0).unwrap();
        for (j, model) in solo.iter_mut().enumerate() {
            let prior = dlm::evolve(&model.posterior, &model.spec, 0).unwrap();
            let up = dlm::update(&prior, &array![1.0], y[j]).unwrap();
            assert_eq!(models[j].posterior.mean, up.posterior.mean);
            assert_eq!(models[j].posterior.s, up.posterior.s);
            assert_eq!(out.log_predictives[j], up.log_predictive);
        }
    }

    #[test]
    fn test_filter_step_rejects_missing_observation() {
        let structure = ParentalStructure::identity_ordered(vec![vec![], vec![]]).unwrap();
        let mut models = vec![series_model(&[], 0.9, 0.95), series_model(&[], 0.9, 0.95)];
        let history = History::new(0);
        let err = filter_step(
            &mut models,
            &structure,
            &history,
            &array![1.0, f64::NAN].view(),
            &NoCovariates,
            0,
        )
        .unwrap_err();
        assert!(matches!(err, CoreError::Data(_)));
        assert!(err.to_string().contains("series 1"));
    }

    #[test]
    fn test_joint_log_density_matches_multivariate_normal_oracle() {
        // Pinned states and near-infinite dof: conditionals are effectively
        // Gaussian, so the compositional sum must match the joint normal
        // with moments from joint_moments.
        let structure =
            ParentalStructure::identity_ordered(vec![vec![1, 2], vec![2], vec![]]).unwrap();
        let models = vec![
            pinned_model(&[1, 2], vec![0.5, 0.6, -0.4], 0.8),
            pinned_model(&[2], vec![-1.0, 0.9], 1.5),
            pinned_model(&[], vec![2.0], 0.5),
        ];
        let mut work = models.clone();
        let history = History::new(0);
        let y = array![1.2, 0.3, 2.5];
        let out =
            filter_step(&mut work, &structure, &history, &y.view(), &NoCovariates, 0).unwrap();

        let mu = array![0.5, -1.0, 2.0];
        let gamma = GammaMatrix::from_rows(
            3,
            vec![vec![(1, 0.6), (2, -0.4)], vec![(2, 0.9)], vec![]],
        )
        .unwrap();
        let lambda = array![1.0 / 0.8, 1.0 / 1.5, 1.0 / 0.5];
        let jm = joint_moments(&mu.view(), &gamma, &lambda.view()).unwrap();
        let resid = &y - &jm.mean;
        let quad = resid.dot(&jm.precision.dot(&resid));
        let log_det_omega: f64 = lambda.iter().map(|l| l.ln()).sum::<f64>();
        let oracle = -1.5 * (2.0 * std::f64::consts::PI).ln() + 0.5 * log_det_omega - 0.5 * quad;
        assert_abs_diff_eq!(out.joint_log_predictive(), oracle, epsilon = 1e-6);
    }

    #[test]
    fn test_relabeling_invariance() {
        // Permute series labels together with order, parents, and data: each
        // series' posterior must be bit-identical to its relabeled twin.
        let structure =
            ParentalStructure::identity_ordered(vec![vec![1, 2], vec![2], vec![]]).unwrap();
        let mut models = vec![
            series_model(&[1, 2], 0.9, 0.95),
            series_model(&[2], 0.9, 0.95),
            series_model(&[], 0.9, 0.95),
        ];
        // Relabeled copy under the map 0→2, 1→0, 2→1.
        let perm = [2usize, 0, 1];
        let order = vec![2, 0, 1];
        let parents = vec![vec![1], vec![], vec![0, 1]];
        let structure_p = ParentalStructure::ordered(order, parents).unwrap();
        let mut models_p = vec![
            series_model(&[1], 0.9, 0.95),
            series_model(&[], 0.9, 0.95),
            series_model(&[0, 1], 0.9, 0.95),
        ];
        let history = History::new(0);
        let mut rng = stream(4, &[0]);
        for t in 0..20 {
            let y = Array1::from_iter((0..3).map(|_| rng.gen_range(-1.0..1.0)));
            // Original series j appears at label perm[j] in the relabeled run.
            let mut y_relab = Array1::zeros(3);
            for j in 0..3 {
                y_relab[perm[j]] = y[j];
            }
            filter_step(&mut models, &structure, &history, &y.view(), &NoCovariates, t).unwrap();
            filter_step(&mut models_p, &structure_p, &history, &y_relab.view(), &NoCovariates, t)
                .unwrap();
        }
        for j in 0..3 {
            assert_eq!(models[j].posterior.mean, models_p[perm[j]].posterior.mean);
            assert_eq!(models[j].posterior.s, models_p[perm[j]].posterior.s);
            assert_eq!(models[j].posterior.dof, models_p[perm[j]].posterior.dof);
        }
    }

    #[test]
    fn test_forecast_rejects_zero_horizon() {
        let structure = ParentalStructure::identity_ordered(vec![vec![]]).unwrap();
        let models = vec![series_model(&[], 0.9, 0.95)];
        let history = History::new(0);
        let err = forecast_paths(
            &models,
            &structure,
            &history,
            &NoCovariates,
            0,
            0,
            10,
            1,
            false,
        )
        .unwrap_err();
        assert!(matches!(err, CoreError::Config(_)));
    }

    #[test]
    fn test_forecast_independent_series_match_analytic_moments() {
        // Γ = 0, pinned states: one-step outcomes are N(μ, Λ⁻¹).
        let structure = ParentalStructure::identity_ordered(vec![vec![], vec![]]).unwrap();
        let models = vec![
            pinned_model(&[], vec![1.0], 0.5),
            pinned_model(&[], vec![-2.0], 2.0),
        ];
        let history = History::new(0);
        let n = 20_000;
        let ens =
            forecast_paths(&models, &structure, &history, &NoCovariates, 0, 1, n, 9, false)
                .unwrap();
        for j in 0..2 {
            let col = ens.samples.index_axis(Axis(1), 0);
            let vals: Vec<f64> = col.column(j).iter().copied().collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var =
                vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
            let truth_mean = [1.0, -2.0][j];
            let truth_var = [0.5, 2.0][j];
            let se_mean = (truth_var / n as f64).sqrt();
            let se_var = truth_var * (2.0 / n as f64).sqrt();
            assert!((mean - truth_mean).abs() < 4.0 * se_mean, "mean {mean} vs {truth_mean}");
            assert!((var - truth_var).abs() < 4.0 * se_var, "var {var} vs {truth_var}");
        }
    }

    #[test]
    fn test_forecast_triangular_covariance_matches_joint_moments() {
        // The q=2 closed-form case: sample covariance vs Ω⁻¹.
        let structure = ParentalStructure::identity_ordered(vec![vec![1], vec![]]).unwrap();
        let models = vec![
            pinned_model(&[1], vec![1.0, 0.7], 0.5),
            pinned_model(&[], vec![1.0], 1.0 / 3.0),
        ];
        let history = History::new(0);
        let n = 50_000;
        let ens =
            forecast_paths(&models, &structure, &history, &NoCovariates, 0, 1, n, 13, false)
                .unwrap();
        let gamma = GammaMatrix::from_rows(2, vec![vec![(1, 0.7)], vec![]]).unwrap();
        let jm = joint_moments(&array![1.0, 1.0].view(), &gamma, &array![2.0, 3.0].view()).unwrap();
        let sigma = crate::linalg::Lu::factor(&jm.precision.view()).inverse().unwrap();
        let step = ens.samples.index_axis(Axis(1), 0);
        let means: Vec<f64> = (0..2).map(|j| step.column(j).sum() / n as f64).collect();
        for a in 0..2 {
            for b in 0..2 {
                let cov = step
                    .column(a)
                    .iter()
                    .zip(step.column(b).iter())
                    .map(|(&x, &y)| (x - means[a]) * (y - means[b]))
                    .sum::<f64>()
                    / (n as f64 - 1.0);
                let se = ((sigma[[a, a]] * sigma[[b, b]] + sigma[[a, b]] * sigma[[a, b]])
                    / n as f64)
                    .sqrt();
                assert!(
                    (cov - sigma[[a, b]]).abs() < 4.0 * se,
                    "cov[{a},{b}] = {cov} vs {} (se {se})",
                    sigma[[a, b]]
                );
            }
        }
        for j in 0..2 {
            let se = (sigma[[j, j]] / n as f64).sqrt();
            assert!((means[j] - jm.mean[j]).abs() < 4.0 * se);
        }
    }

    #[test]
    fn test_forecast_deterministic_given_seed() {
        let structure = ParentalStructure::identity_ordered(vec![vec![1], vec![]]).unwrap();
        let models = vec![series_model(&[1], 0.9, 0.95), series_model(&[], 0.9, 0.95)];
        let history = History::new(0);
        let a = forecast_paths(&models, &structure, &history, &NoCovariates, 0, 3, 50, 99, true)
            .unwrap();
        let b = forecast_paths(&models, &structure, &history, &NoCovariates, 0, 3, 50, 99, true)
            .unwrap();
        assert_eq!(a.samples, b.samples);
        let (sa, sb) = (a.snapshots.unwrap(), b.snapshots.unwrap());
        assert_eq!(sa.len(), sb.len());
        assert_eq!(sa[7][2].mu, sb[7][2].mu);
        assert_eq!(sa[7][2].lambda, sb[7][2].lambda);
    }

    #[test]
    fn test_forecast_feeds_simulated_path_into_lags() {
        // Series 1: noiseless anchor fixed at 2.0. Series 0: y_{0,t} equals
        // its own previous outcome times 0.5 plus lag-1 of series 1
        // (coefficients pinned, no noise), so the 3-step path is determined
        // by the lag feedback: y0(1) = 0.5·y0(0) + y1(0), …
        let layout0 = RegressionLayout::new(vec![
            Term::Lag { series: 0, lag: 1 },
            Term::Lag { series: 1, lag: 1 },
        ])
        .unwrap();
        let spec0 = DlmSpec::new(layout0, &BlockDiscounts::uniform(1.0), 1.0).unwrap();
        let post0 = NigPosterior::new(
            array![0.5, 1.0],
            Array2::zeros((2, 2)),
            1e12,
            1e-18,
        )
        .unwrap();
        let models = vec![
            SeriesModel { spec: spec0, posterior: post0 },
            pinned_model(&[], vec![2.0], 1e-18),
        ];
        let structure = ParentalStructure::identity_ordered(vec![vec![], vec![]]).unwrap();
        let mut history = History::new(1);
        history.push(array![4.0, 2.0]);
        let ens =
            forecast_paths(&models, &structure, &history, &NoCovariates, 0, 3, 1, 5, false)
                .unwrap();
        // Step 1: 0.5·4 + 2 = 4; step 2: 0.5·4 + 2 = 4; step 3: 4.
        for h in 0..3 {
            assert_abs_diff_eq!(ens.samples[[0, h, 0]], 4.0, epsilon = 1e-6);
            assert_abs_diff_eq!(ens.samples[[0, h, 1]], 2.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn test_driver_tracks_history_and_time() {
        let layout = RegressionLayout::new(vec![
            Term::Trend { order: 0 },
            Term::Lag { series: 0, lag: 1 },
        ])
        .unwrap();
        let spec = DlmSpec::new(layout, &BlockDiscounts::uniform(0.95), 0.98).unwrap();
        let models = vec![SeriesModel {
            spec,
            posterior: NigPosterior::diffuse(2, 1.0, 5.0, 1.0).unwrap(),
        }];
        let structure = ParentalStructure::identity_ordered(vec![vec![]]).unwrap();
        let mut filter = MultiSeriesFilter::new(models, structure).unwrap();
        // The first step has no lag history yet: data error, clock unchanged.
        assert!(filter.step(&array![1.0].view(), &NoCovariates).is_err());
        assert_eq!(filter.steps(), 0);
        // A lag-free model starts cold and runs through.
        let spec2 = DlmSpec::new(
            RegressionLayout::new(vec![Term::Trend { order: 0 }]).unwrap(),
            &BlockDiscounts::uniform(0.95),
            0.98,
        )
        .unwrap();
        let models2 = vec![SeriesModel {
            spec: spec2,
            posterior: NigPosterior::diffuse(1, 1.0, 5.0, 1.0).unwrap(),
        }];
        let structure2 = ParentalStructure::identity_ordered(vec![vec![]]).unwrap();
        let mut filter2 = MultiSeriesFilter::new(models2, structure2).unwrap();
        for t in 0..5 {
            let out = filter2.step(&array![t as f64].view(), &NoCovariates).unwrap();
            assert!(out.joint_log_predictive().is_finite());
        }
        assert_eq!(filter2.steps(), 5);
        let ens = filter2.forecast(&NoCovariates, 2, 10, 1, false).unwrap();
        assert_eq!(ens.samples.shape(), &[10, 2, 1]);
    }

    #[test]
    fn test_seed_history_warms_lags_without_filtering() {
        let make = || {
            let layout = RegressionLayout::new(vec![
                Term::Trend { order: 0 },
                Term::Lag { series: 0, lag: 1 },
            ])
            .unwrap();
            let spec = DlmSpec::new(layout, &BlockDiscounts::uniform(0.95), 0.98).unwrap();
            vec![SeriesModel {
                spec,
                posterior: NigPosterior::diffuse(2, 1.0, 5.0, 1.0).unwrap(),
            }]
        };
        let structure = ParentalStructure::identity_ordered(vec![vec![]]).unwrap();
        let mut filter = MultiSeriesFilter::new(make(), structure.clone()).unwrap();
        assert_eq!(filter.max_lag(), 1);
        assert!(filter.seed_history(&array![1.0, 2.0].view()).is_err(), "row width is checked");
        filter.seed_history(&array![3.0].view()).unwrap();
        assert_eq!(filter.steps(), 1, "seeding advances the clock");
        let out = filter.step(&array![2.5].view(), &NoCovariates).unwrap();

        // Oracle: the identical step against a hand-built lag window.
        let mut models = make();
        let mut history = History::new(1);
        history.push(array![3.0]);
        let direct =
            filter_step(&mut models, &structure, &history, &array![2.5].view(), &NoCovariates, 1)
                .unwrap();
        assert_eq!(out.log_predictives[0], direct.log_predictives[0]);
        assert_eq!(filter.models()[0].posterior.mean, models[0].posterior.mean);
        assert_eq!(filter.models()[0].posterior.s, models[0].posterior.s);
    }
}
