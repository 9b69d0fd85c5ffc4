use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use milpf::backprop::loss_and_grad;
use milpf::embedset::{synth_dataset, SynthConfig};
use milpf::milhead::{AggConfig, HeadDims, Model, ParamLayout, TrainMode};
use milpf::trainer::{init_params, PreparedData};
use milpf::Exec;

fn setup() -> (PreparedData, Model) {
    let ds = synth_dataset(&SynthConfig {
        n_bags: 200,
        ..SynthConfig::default()
    })
    .expect("synthetic data");
    let data = PreparedData::new(&ds).expect("prepared");
    let layout = ParamLayout::new(HeadDims::new(ds.embed_dim), AggConfig::default()).expect("layout");
    let model = Model::new(init_params(layout, 1.0, 1), TrainMode::Mil).expect("model");
    (data, model)
}

fn bench(c: &mut Criterion) {
    let (data, model) = setup();
    let mut group = c.benchmark_group("head");
    for (name, exec) in [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)] {
        group.bench_with_input(BenchmarkId::new("loss_and_grad", name), &exec, |b, &exec| {
            b.iter(|| loss_and_grad(&data.train.bags, &model.params, exec).expect("grad"))
        });
        group.bench_with_input(BenchmarkId::new("score", name), &exec, |b, &exec| {
            b.iter(|| model.score_all(&data.train.bags, exec).expect("scores"))
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
