use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use uapr_bench::world_for;
use uapr_core::{run_batch, Method, MethodConfig, ProtocolConfig};

fn batch_throughput(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_batch");
    group.sample_size(20);
    for method in Method::ALL {
        let data = world_for(method, 2000, 256, 200);
        let config = MethodConfig::new(method, 25);
        group.throughput(Throughput::Elements(data.queries.len() as u64));
        group.bench_with_input(BenchmarkId::from_parameter(method.name()), &data, |b, data| {
            b.iter(|| {
                run_batch(black_box(&data.queries), &data.database, &ProtocolConfig::batch(), &config)
                    .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, batch_throughput);
criterion_main!(benches);
