//! Benchmark: importance-sampling recoupling and variational decoupling
//! cost as the series count grows.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::{arr1, Array2};
use recouple_core::ddnm::SeriesModel;
use recouple_core::dlm::{DlmSpec, NigPosterior};
use recouple_core::regression::{BlockDiscounts, RegressionLayout, Term};
use recouple_core::sgdlm::{recouple_is, vb_decouple};
use recouple_core::structure::ParentalStructure;

/// A q-series simultaneous system on a single parent cycle: series j loads
/// on series (j + 1) mod q, so every importance weight needs a genuine
/// determinant evaluation rather than the triangular shortcut.
fn cyclic_system(q: usize) -> (Vec<SeriesModel>, ParentalStructure) {
    let mut models = Vec::with_capacity(q);
    let mut parents = Vec::with_capacity(q);
    for j in 0..q {
        let parent = (j + 1) % q;
        let layout = RegressionLayout::new(vec![
            Term::Trend { order: 0 },
            Term::Parent { series: parent },
        ])
        .unwrap();
        let spec = DlmSpec::new(layout, &BlockDiscounts::default(), 0.98).unwrap();
        let posterior =
            NigPosterior::new(arr1(&[0.5, 0.3]), Array2::eye(2) * 0.05, 20.0, 1.0).unwrap();
        models.push(SeriesModel { spec, posterior });
        parents.push(vec![parent]);
    }
    (models, ParentalStructure::simultaneous(parents).unwrap())
}

fn bench_recouple(c: &mut Criterion) {
    let mut group = c.benchmark_group("recouple_is");
    for q in [5usize, 10, 20] {
        let (models, structure) = cyclic_system(q);
        group.bench_with_input(BenchmarkId::from_parameter(q), &q, |b, _| {
            b.iter(|| recouple_is(&models, &structure, 1000, 7).unwrap());
        });
    }
    group.finish();
}

fn bench_vb_decouple(c: &mut Criterion) {
    let mut group = c.benchmark_group("vb_decouple");
    for q in [5usize, 10, 20] {
        let (models, structure) = cyclic_system(q);
        let batch = recouple_is(&models, &structure, 1000, 7).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(q), &q, |b, _| {
            b.iter(|| vb_decouple(&batch).unwrap());
        });
    }
    group.finish();
}

criterion_group!(benches, bench_recouple, bench_vb_decouple);
criterion_main!(benches);
