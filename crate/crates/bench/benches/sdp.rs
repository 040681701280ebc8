use criterion::{criterion_group, criterion_main, Criterion};
use mmw_sketch::sdp::{random_instance, solve_feasibility, SolverConfig};
use mmw_sketch::SeededRng;

fn solve(c: &mut Criterion) {
    let inst = random_instance(20, 10, 0.3, &mut SeededRng::new(20)).unwrap();
    let mut group = c.benchmark_group("sdp_feasibility");
    group.sample_size(10);
    for use_lanczos in [false, true] {
        let config = SolverConfig {
            use_lanczos,
            ..SolverConfig::new(0.5)
        };
        group.bench_function(if use_lanczos { "lanczos" } else { "dense" }, |b| {
            b.iter(|| solve_feasibility(&inst, &config, &SeededRng::new(1)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, solve);
criterion_main!(benches);
