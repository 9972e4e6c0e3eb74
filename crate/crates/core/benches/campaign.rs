use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use indoor_mimo::config::RunConfig;
use indoor_mimo::geometry::TopologyKind;
use indoor_mimo::montecarlo::{run_power_campaign, run_rate_campaign};
use indoor_mimo::par::Execution;

fn modes() -> [(&'static str, Execution); 2] {
    [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel),
    ]
}

fn power(c: &mut Criterion) {
    let mut config = RunConfig {
        antennas: 128,
        users: 20,
        ..RunConfig::default()
    };
    config.drops.n_drops = 64;
    let scenario = config.scenario().unwrap();
    let campaign = config.power_campaign();
    let mut group = c.benchmark_group("power_campaign");
    group.sample_size(10);
    for (name, exec) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| {
                run_power_campaign(&scenario, TopologyKind::QuadStrip4Walls, &campaign, exec)
                    .unwrap()
            })
        });
    }
    group.finish();
}

fn rate(c: &mut Criterion) {
    let mut config = RunConfig {
        antennas: 64,
        users: 8,
        ..RunConfig::default()
    };
    config.drops.n_drops = 8;
    config.rate_map.n_realizations = 50;
    let scenario = config.scenario().unwrap();
    let campaign = config.rate_campaign();
    let mut group = c.benchmark_group("rate_campaign");
    group.sample_size(10);
    for (name, exec) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| {
                run_rate_campaign(&scenario, TopologyKind::DoubleStrip4Walls, &campaign, exec)
                    .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, power, rate);
criterion_main!(benches);
