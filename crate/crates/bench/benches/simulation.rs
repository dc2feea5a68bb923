use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use diffsamp_bench::fixture;
use diffsamp_core::cost::MultiplicationTally;
use diffsamp_core::{monte_carlo, Simulator};

fn steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("step");
    for taps in [10, 100] {
        let spec = fixture(20, taps);
        let sim = Simulator::new(&spec).unwrap();
        group.throughput(Throughput::Elements(1));
        group.bench_with_input(BenchmarkId::from_parameter(taps), &sim, |b, sim| {
            let mut state = sim.initial_state();
            let mut rng = sim.realization_rng(0);
            let mut tally = MultiplicationTally::default();
            b.iter(|| sim.step(&mut state, &mut rng, &mut tally));
        });
    }
    group.finish();
}

fn realizations(c: &mut Criterion) {
    let spec = fixture(20, 10).with_horizon(1000).with_realizations(16);
    let mut group = c.benchmark_group("monte_carlo");
    group.sample_size(10);
    for workers in [1, 4] {
        group.bench_with_input(BenchmarkId::new("workers", workers), &workers, |b, &w| {
            b.iter(|| monte_carlo(&spec, Some(w)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, steps, realizations);
criterion_main!(benches);
