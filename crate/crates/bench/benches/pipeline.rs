use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use kinlab::estimators::{
    kin_ratio, ols_slope, parent_child_sample, surname_grouping, tsls, FirstStage, KinRatio, SeMethod,
};
use kinlab::harness::realize_instrument;
use kinlab::ingest::{load_reader, IngestSchema};
use kinlab::simulate;
use kinlab_bench::{config, instrument, kin_config, model, population, surname_options, two_parent_model};

fn simulation(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulate");
    g.sample_size(10);
    g.bench_function("single_parent_50k", |b| b.iter(|| simulate(&model(), &config(50_000, 4)).unwrap()));
    g.bench_function("two_parent_5k", |b| {
        b.iter(|| simulate(&two_parent_model(), &kin_config(5_000, 4)).unwrap())
    });
    g.finish();
}

fn estimators(c: &mut Criterion) {
    let pop = population(50_000, 4);
    let last = pop.generation_count() - 1;
    let sample = parent_child_sample(&pop, last).unwrap();
    let mut g = c.benchmark_group("estimators");
    g.sample_size(20);
    g.bench_function("ols", |b| b.iter(|| ols_slope(&sample, SeMethod::Analytic).unwrap()));
    g.bench_function("ols_bootstrap", |b| b.iter(|| ols_slope(&sample, SeMethod::bootstrap(1)).unwrap()));

    let z = realize_instrument(&pop, &model(), "z", &instrument(), 3).unwrap();
    let cats = z.categories.unwrap();
    let father_z: Vec<u32> = pop
        .generation(last)
        .iter()
        .filter_map(|&i| pop.father(i).map(|f| cats[f as usize]))
        .collect();
    g.bench_function("tsls", |b| {
        b.iter(|| {
            tsls(&sample.child_outcome, &sample.regressor, FirstStage::Categorical(&father_z), &sample.clusters, SeMethod::Analytic)
                .unwrap()
        })
    });
    let opts = surname_options(&pop);
    g.bench_function("surname_grouping", |b| b.iter(|| surname_grouping(&pop, &opts, SeMethod::Analytic).unwrap()));

    let kin = simulate(&two_parent_model(), &kin_config(5_000, 4)).unwrap();
    g.bench_function("cousin_uncle_ratio", |b| {
        b.iter(|| kin_ratio(&kin, KinRatio::CousinUncle, 3, SeMethod::Analytic).unwrap())
    });
    g.finish();
}

fn ingest(c: &mut Criterion) {
    let pop = population(20_000, 4);
    let mut csv = Vec::new();
    pop.write_csv(&mut csv).unwrap();
    let mut g = c.benchmark_group("ingest");
    g.sample_size(10);
    g.bench_function("load_reader", |b| {
        b.iter_batched(|| csv.clone(), |bytes| load_reader(bytes.as_slice(), &IngestSchema::default()).unwrap(), BatchSize::LargeInput)
    });
    g.finish();
}

criterion_group!(benches, simulation, estimators, ingest);
criterion_main!(benches);
