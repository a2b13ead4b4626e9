//! Benchmark fixtures: shared model builders used by the criterion benches.

use recouple_core::dlm::{DlmSpec, NigPosterior};
use recouple_core::regression::{BlockDiscounts, RegressionLayout, Term};

/// A local-level + regression model of width `q` with standard discounts.
pub fn regression_model(q: usize) -> (DlmSpec, NigPosterior) {
    let mut terms = vec![Term::Trend { order: 0 }];
    terms.extend((0..q).map(|index| Term::Covariate { index }));
    let layout = RegressionLayout::new(terms).expect("valid layout");
    let dim = layout.state_dim();
    let spec = DlmSpec::new(layout, &BlockDiscounts::default(), 0.98).expect("valid spec");
    let post = NigPosterior::diffuse(dim, 1.0, 5.0, 1.0).expect("valid posterior");
    (spec, post)
}
