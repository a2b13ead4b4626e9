//! Regression-vector assembly: how a series' state vector is laid out and how
//! the time-t regression vector F_{j,t} is built from covariates, lagged
//! outcomes, latent factors, and contemporaneous parental outcomes.
//!
//! A layout is an ordered list of [`Term`]s. Each term owns a contiguous
//! block of state elements, contributes that block's entries of F, and twins
//! with a block of the transition matrix: polynomial trends get Jordan
//! blocks, seasonal harmonics get rotation blocks, and every coefficient term
//! (covariate, lag, factor, parent) evolves as a random walk. Discounting is
//! applied per term block, with trend/seasonal, regression, and parental
//! terms drawing their discount from the corresponding [`BlockDiscounts`]
//! field.

use std::collections::VecDeque;

use ndarray::{Array1, Array2};

use crate::error::{CoreError, Result};

/// One component of a series' state vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Term {
    /// Polynomial trend of the given order: order 0 is a local level, order 1
    /// a local linear trend (level + gradient), etc. Occupies order+1 state
    /// elements; only the level enters F.
    Trend { order: usize },
    /// Fourier seasonal of the given period, `harmonics` harmonic pairs.
    Seasonal { period: usize, harmonics: usize },
    /// External covariate, indexed into the covariate slice supplied per step.
    Covariate { index: usize },
    /// Lagged outcome of some series (`lag` ≥ 1 steps back).
    Lag { series: usize, lag: usize },
    /// Latent-factor loading, indexed into the factor vector supplied per step.
    Factor { index: usize },
    /// Contemporaneous outcome of a parental series.
    Parent { series: usize },
}

impl Term {
    /// Number of state elements the term occupies.
    pub fn width(&self) -> usize {
        match *self {
            Term::Trend { order } => order + 1,
            Term::Seasonal { harmonics, .. } => 2 * harmonics,
            _ => 1,
        }
    }

    fn is_parental(&self) -> bool {
        matches!(self, Term::Parent { .. })
    }

    fn is_trendlike(&self) -> bool {
        matches!(self, Term::Trend { .. } | Term::Seasonal { .. })
    }
}

/// Per-block discount factors: trend/seasonal blocks, regression blocks
/// (covariates, lags, factor loadings), and parental-coefficient blocks.
#[derive(Debug, Clone, Copy)]
pub struct BlockDiscounts {
    pub trend: f64,
    pub regression: f64,
    pub parental: f64,
}

impl Default for BlockDiscounts {
    fn default() -> Self {
        BlockDiscounts { trend: 0.98, regression: 0.98, parental: 0.98 }
    }
}

impl BlockDiscounts {
    /// A single discount for every block.
    pub fn uniform(delta: f64) -> Self {
        BlockDiscounts { trend: delta, regression: delta, parental: delta }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, d) in [("trend", self.trend), ("regression", self.regression), ("parental", self.parental)] {
            if !(d > 0.0 && d <= 1.0) {
                return Err(CoreError::config(format!("{name} discount must lie in (0,1], got {d}")));
            }
        }
        Ok(())
    }
}

/// A contiguous state block sharing one discount factor.
#[derive(Debug, Clone, Copy)]
pub struct DiscountBlock {
    pub start: usize,
    pub len: usize,
    pub delta: f64,
}

/// Ordered term list describing one series' state vector.
#[derive(Debug, Clone)]
pub struct RegressionLayout {
    terms: Vec<Term>,
    offsets: Vec<usize>,
    state_dim: usize,
}

impl RegressionLayout {
    pub fn new(terms: Vec<Term>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(terms.len());
        let mut dim = 0;
        for term in &terms {
            match *term {
                Term::Seasonal { period, harmonics } => {
                    if period < 2 || harmonics == 0 || 2 * harmonics > period {
                        return Err(CoreError::config(format!(
                            "seasonal term needs period ≥ 2 and 1 ≤ 2·harmonics ≤ period, got period {period}, harmonics {harmonics}"
                        )));
                    }
                }
                Term::Lag { lag, .. } if lag == 0 => {
                    return Err(CoreError::config("lag terms need lag ≥ 1; use a Parent term for lag 0"));
                }
                _ => {}
            }
            offsets.push(dim);
            dim += term.width();
        }
        if dim == 0 {
            return Err(CoreError::config("regression layout has no terms"));
        }
        Ok(RegressionLayout { terms, offsets, state_dim: dim })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Largest lag referenced by any term (0 when none).
    pub fn max_lag(&self) -> usize {
        self.terms
            .iter()
            .map(|t| if let Term::Lag { lag, .. } = t { *lag } else { 0 })
            .max()
            .unwrap_or(0)
    }

    /// (state index, parent series) for every parental coefficient, in term order.
    pub fn parent_slots(&self) -> Vec<(usize, usize)> {
        self.terms
            .iter()
            .zip(&self.offsets)
            .filter_map(|(t, &off)| match t {
                Term::Parent { series } => Some((off, *series)),
                _ => None,
            })
            .collect()
    }

    /// The transition matrix implied by the term list.
    pub fn transition(&self) -> Array2<f64> {
        let mut g = Array2::<f64>::zeros((self.state_dim, self.state_dim));
        for (term, &off) in self.terms.iter().zip(&self.offsets) {
            match *term {
                Term::Trend { order } => {
                    // Jordan block: level absorbs gradient absorbs curvature...
                    for i in 0..=order {
                        g[[off + i, off + i]] = 1.0;
                        if i + 1 <= order {
                            g[[off + i, off + i + 1]] = 1.0;
                        }
                    }
                }
                Term::Seasonal { period, harmonics } => {
                    for h in 0..harmonics {
                        let omega = 2.0 * std::f64::consts::PI * (h + 1) as f64 / period as f64;
                        let (s, c) = omega.sin_cos();
                        let b = off + 2 * h;
                        g[[b, b]] = c;
                        g[[b, b + 1]] = s;
                        g[[b + 1, b]] = -s;
                        g[[b + 1, b + 1]] = c;
                    }
                }
                _ => g[[off, off]] = 1.0,
            }
        }
        g
    }

    /// Discount blocks, one per term, drawing δ from the matching field.
    pub fn blocks(&self, d: &BlockDiscounts) -> Vec<DiscountBlock> {
        self.terms
            .iter()
            .zip(&self.offsets)
            .map(|(t, &off)| DiscountBlock {
                start: off,
                len: t.width(),
                delta: if t.is_trendlike() {
                    d.trend
                } else if t.is_parental() {
                    d.parental
                } else {
                    d.regression
                },
            })
            .collect()
    }

    /// Assemble the regression vector at one time point.
    pub fn build_f(&self, inputs: &PredictorInputs) -> Result<Array1<f64>> {
        let mut f = Array1::<f64>::zeros(self.state_dim);
        for (term, &off) in self.terms.iter().zip(&self.offsets) {
            match *term {
                Term::Trend { .. } | Term::Seasonal { .. } => f[off] = 1.0,
                Term::Covariate { index } => {
                    let x = inputs
                        .covariates
                        .and_then(|xs| xs.get(index))
                        .copied()
                        .ok_or_else(|| CoreError::data(format!("missing covariate {index}")))?;
                    if !x.is_finite() {
                        return Err(CoreError::data(format!("covariate {index} is not finite")));
                    }
                    f[off] = x;
                }
                Term::Factor { index } => {
                    let x = inputs
                        .factors
                        .and_then(|xs| xs.get(index))
                        .copied()
                        .ok_or_else(|| CoreError::config(format!("layout expects latent factor {index}, none supplied")))?;
                    f[off] = x;
                }
                Term::Lag { series, lag } => {
                    f[off] = inputs.lags.lag(series, lag).ok_or_else(|| {
                        CoreError::data(format!("series {series} has no lag-{lag} history yet"))
                    })?;
                }
                Term::Parent { series } => {
                    f[off] = (inputs.parent)(series).ok_or_else(|| {
                        CoreError::data(format!("parental outcome for series {series} unavailable"))
                    })?;
                }
            }
        }
        Ok(f)
    }

    /// The non-parental contribution Σ F_i·θ_i — the structural mean μ_{j,t}
    /// once parental terms are peeled off into Γ.
    pub fn structural_mean(&self, f: &Array1<f64>, theta: &Array1<f64>) -> f64 {
        let mut acc = 0.0;
        for (term, &off) in self.terms.iter().zip(&self.offsets) {
            if term.is_parental() {
                continue;
            }
            for i in off..off + term.width() {
                acc += f[i] * theta[i];
            }
        }
        acc
    }
}

/// Everything `build_f` may need at one time point. `lags` serves lagged
/// outcomes, `parent` serves contemporaneous outcomes of parental series
/// (realized during filtering, simulated during path forecasting).
pub struct PredictorInputs<'a> {
    pub covariates: Option<&'a [f64]>,
    pub factors: Option<&'a [f64]>,
    pub lags: &'a dyn LagSource,
    pub parent: &'a dyn Fn(usize) -> Option<f64>,
}

impl<'a> PredictorInputs<'a> {
    /// Inputs with nothing available — for layouts with trend/seasonal terms only.
    pub fn none() -> PredictorInputs<'static> {
        PredictorInputs { covariates: None, factors: None, lags: &NoHistory, parent: &|_| None }
    }
}

/// Source of lagged outcomes.
pub trait LagSource {
    /// Value of `series` `lag` steps before the point being built, if known.
    fn lag(&self, series: usize, lag: usize) -> Option<f64>;
}

/// Time-indexed exogenous covariates, shared by filtering (realized values)
/// and path forecasting (future values the user must supply).
pub trait CovariateSource: Sync {
    /// Covariate vector for `series` at absolute time `t`, if available.
    fn at(&self, t: usize, series: usize) -> Option<&[f64]>;
}

/// No exogenous covariates anywhere (layouts without covariate terms).
pub struct NoCovariates;

impl CovariateSource for NoCovariates {
    fn at(&self, _t: usize, _series: usize) -> Option<&[f64]> {
        None
    }
}

/// A `LagSource` with no history at all.
pub struct NoHistory;

impl LagSource for NoHistory {
    fn lag(&self, _series: usize, _lag: usize) -> Option<f64> {
        None
    }
}

/// Rolling window of the most recent observed outcome vectors.
#[derive(Debug, Clone)]
pub struct History {
    depth: usize,
    rows: VecDeque<Array1<f64>>,
}

impl History {
    /// `depth` is the largest lag that will ever be asked for (0 is fine).
    pub fn new(depth: usize) -> Self {
        History { depth, rows: VecDeque::with_capacity(depth) }
    }

    pub fn push(&mut self, y: Array1<f64>) {
        if self.depth == 0 {
            return;
        }
        if self.rows.len() == self.depth {
            self.rows.pop_front();
        }
        self.rows.push_back(y);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

impl LagSource for History {
    fn lag(&self, series: usize, lag: usize) -> Option<f64> {
        if lag == 0 || lag > self.rows.len() {
            return None;
        }
        let row = &self.rows[self.rows.len() - lag];
        row.get(series).copied()
    }
}

/// History extended by simulated rows during path forecasting: lags first look
/// into the simulated path, then fall through to the observed window.
pub struct PathBuffer<'a> {
    base: &'a History,
    simulated: Vec<Array1<f64>>,
}

impl<'a> PathBuffer<'a> {
    pub fn new(base: &'a History) -> Self {
        PathBuffer { base, simulated: Vec::new() }
    }

    pub fn push(&mut self, y: Array1<f64>) {
        self.simulated.push(y);
    }

    pub fn steps(&self) -> usize {
        self.simulated.len()
    }

    pub fn row(&self, step: usize) -> &Array1<f64> {
        &self.simulated[step]
    }
}

impl LagSource for PathBuffer<'_> {
    fn lag(&self, series: usize, lag: usize) -> Option<f64> {
        if lag == 0 {
            return None;
        }
        if lag <= self.simulated.len() {
            let row = &self.simulated[self.simulated.len() - lag];
            return row.get(series).copied();
        }
        self.base.lag(series, lag - self.simulated.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn layout() -> RegressionLayout {
        RegressionLayout::new(vec![
            Term::Trend { order: 1 },
            Term::Covariate { index: 0 },
            Term::Lag { series: 1, lag: 2 },
            Term::Parent { series: 2 },
        ])
        .unwrap()
    }

    #[test]
    fn test_layout_dimensions_and_slots() {
        let l = layout();
        assert_eq!(l.state_dim(), 5);
        assert_eq!(l.max_lag(), 2);
        assert_eq!(l.parent_slots(), vec![(4, 2)]);
    }

    #[test]
    fn test_transition_blocks() {
        let g = layout().transition();
        // Local linear trend Jordan block.
        assert_eq!(g[[0, 0]], 1.0);
        assert_eq!(g[[0, 1]], 1.0);
        assert_eq!(g[[1, 1]], 1.0);
        assert_eq!(g[[1, 0]], 0.0);
        // Coefficients are random walks.
        for i in 2..5 {
            assert_eq!(g[[i, i]], 1.0);
        }
        assert_eq!(g.sum(), 6.0);
    }

    #[test]
    fn test_seasonal_rotation_has_unit_determinant() {
        let l = RegressionLayout::new(vec![Term::Seasonal { period: 12, harmonics: 2 }]).unwrap();
        let g = l.transition();
        for h in 0..2 {
            let b = 2 * h;
            let det = g[[b, b]] * g[[b + 1, b + 1]] - g[[b, b + 1]] * g[[b + 1, b]];
            assert_abs_diff_eq!(det, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn test_build_f_assembles_all_sources() {
        let l = layout();
        let mut hist = History::new(2);
        hist.push(array![10.0, 20.0, 30.0]);
        hist.push(array![11.0, 21.0, 31.0]);
        let parent = |series: usize| if series == 2 { Some(5.5) } else { None };
        let f = l
            .build_f(&PredictorInputs {
                covariates: Some(&[3.0]),
                factors: None,
                lags: &hist,
                parent: &parent,
            })
            .unwrap();
        assert_eq!(f, array![1.0, 0.0, 3.0, 20.0, 5.5]);
    }

    #[test]
    fn test_build_f_reports_missing_history() {
        let l = layout();
        let hist = History::new(2);
        let parent = |_: usize| Some(0.0);
        let err = l
            .build_f(&PredictorInputs {
                covariates: Some(&[3.0]),
                factors: None,
                lags: &hist,
                parent: &parent,
            })
            .unwrap_err();
        assert!(matches!(err, CoreError::Data(_)));
    }

    #[test]
    fn test_structural_mean_skips_parents() {
        let l = layout();
        let f = array![1.0, 0.0, 2.0, 3.0, 4.0];
        let theta = array![0.5, 9.0, 1.0, 1.0, 100.0];
        // 1·0.5 + 2·1 + 3·1, parent slot excluded.
        assert_abs_diff_eq!(l.structural_mean(&f, &theta), 5.5, epsilon = 1e-14);
    }

    #[test]
    fn test_path_buffer_falls_through_to_history() {
        let mut hist = History::new(3);
        hist.push(array![1.0]);
        hist.push(array![2.0]);
        let mut path = PathBuffer::new(&hist);
        path.push(array![3.0]);
        assert_eq!(path.lag(0, 1), Some(3.0));
        assert_eq!(path.lag(0, 2), Some(2.0));
        assert_eq!(path.lag(0, 3), Some(1.0));
        assert_eq!(path.lag(0, 4), None);
    }

    #[test]
    fn test_discount_blocks_by_kind() {
        let d = BlockDiscounts { trend: 0.9, regression: 0.95, parental: 0.99 };
        let blocks = layout().blocks(&d);
        assert_eq!(blocks.len(), 4);
        assert_abs_diff_eq!(blocks[0].delta, 0.9);
        assert_abs_diff_eq!(blocks[1].delta, 0.95);
        assert_abs_diff_eq!(blocks[2].delta, 0.95);
        assert_abs_diff_eq!(blocks[3].delta, 0.99);
        assert_eq!(blocks[0].len, 2);
    }
}
