use std::hint::black_box;

use cclass_core::bounds::pair_exponent;
use cclass_core::classifier::build_context;
use cclass_core::gmm::synthesize_ensemble;
use cclass_core::{
    draw_measurement_matrix, estimate_error, GmmModel, MeanMode, MeasurementSetup, ProjectedModel, RankSpec,
    UnionBoundVariant,
};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use nalgebra::DVector;

fn pair_model() -> GmmModel {
    synthesize_ensemble(&RankSpec::pair(6, 2, 3, 4, MeanMode::Zero).unwrap(), 1).unwrap()
}

fn four_class_model() -> GmmModel {
    let unions = vec![((0, 1), 4), ((0, 2), 5), ((0, 3), 4), ((1, 2), 4), ((1, 3), 5), ((2, 3), 4)];
    let spec = RankSpec::new(6, vec![2, 3, 3, 2], unions, MeanMode::Zero).unwrap();
    synthesize_ensemble(&spec, 1).unwrap()
}

fn classify(c: &mut Criterion) {
    let model = four_class_model();
    let mut group = c.benchmark_group("map_classify");
    for m in [2, 4, 6] {
        let setup = MeasurementSetup::new(draw_measurement_matrix(m, 6, 1), 1e-3).unwrap();
        let ctx = build_context(&model, &setup).unwrap();
        let y = DVector::from_fn(m, |i, _| (i as f64 * 0.37).sin());
        group.bench_with_input(BenchmarkId::from_parameter(m), &y, |b, y| b.iter(|| ctx.map_classify(black_box(y))));
    }
    group.finish();
}

fn bounds(c: &mut Criterion) {
    let model = four_class_model();
    let phi = draw_measurement_matrix(4, 6, 1);
    let setup = MeasurementSetup::new(phi.clone(), 1e-4).unwrap();
    c.bench_function("pair_exponent", |b| b.iter(|| pair_exponent(&model, &setup, 1, 2).unwrap()));
    let projected = ProjectedModel::new(&model, &phi).unwrap();
    c.bench_function("ln_union_bound_l4", |b| {
        b.iter(|| projected.ln_union_bound(black_box(1e-4), UnionBoundVariant::AsPrinted).unwrap())
    });
}

fn monte_carlo(c: &mut Criterion) {
    const TRIALS: u64 = 20_000;
    let model = pair_model();
    let setup = MeasurementSetup::new(draw_measurement_matrix(4, 6, 1), 1e-2).unwrap();
    let mut group = c.benchmark_group("estimate_error");
    group.throughput(Throughput::Elements(TRIALS));
    group.sample_size(20);
    group.bench_function("m4", |b| b.iter(|| estimate_error(&model, &setup, TRIALS, black_box(7)).unwrap()));
    group.finish();
}

criterion_group!(kernels, classify, bounds, monte_carlo);
criterion_main!(kernels);
