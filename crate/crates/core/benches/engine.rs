//! Parallel versus sequential execution of the per-house stage and of a
//! short simulation. Build with `--no-default-features` to see the
//! fallback compiled alone.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gridsim::engine::run_simulation_with;
use gridsim::fixtures::tracking;
use gridsim::game::{choose, house_payoffs};
use gridsim::knapsack::{generate_strategies, house_values};
use gridsim::scenario::House;
use gridsim::{par, ExecMode};

const MODES: [(&str, ExecMode); 2] = [
    ("sequential", ExecMode::Sequential),
    ("parallel", ExecMode::Parallel),
];

/// Every house of several seeded tracking scenarios, so the map has enough
/// work to spread.
fn many_houses() -> Vec<House> {
    (0..40)
        .flat_map(|seed| tracking(seed, 1).houses().cloned().collect::<Vec<_>>())
        .collect()
}

fn house_stage(c: &mut Criterion) {
    let houses = many_houses();
    let mut group = c.benchmark_group("house_stage");
    for (name, mode) in MODES {
        group.bench_with_input(
            BenchmarkId::new(name, houses.len()),
            &houses,
            |b, houses| {
                b.iter(|| {
                    par::map(mode, houses, |h| {
                        let values = house_values(&h.devices);
                        let payoffs = house_payoffs(&h.devices, &values, &generate_strategies(h));
                        choose(&payoffs)
                    })
                })
            },
        );
    }
    group.finish();
}

fn simulation(c: &mut Criterion) {
    let scenario = tracking(42, 20);
    let mut group = c.benchmark_group("simulation");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::new(name, 20), |b| {
            b.iter(|| run_simulation_with(black_box(&scenario), 20, mode))
        });
    }
    group.finish();
}

criterion_group!(benches, house_stage, simulation);
criterion_main!(benches);
