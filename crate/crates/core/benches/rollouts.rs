use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use return_landscape::env::env_by_name;
use return_landscape::learner::{Checkpoint, UpdateFamily};
use return_landscape::par::{map_indexed, map_indexed_seq};
use return_landscape::policy::MlpShape;
use return_landscape::purd::{update_source, PurdProbe};
use return_landscape::rng::RngStream;
use return_landscape::rollout::{PolicyReturn, ReturnFn};

fn purd_rollouts(c: &mut Criterion) {
    let env = env_by_name("corridor-walk").unwrap();
    let shape = MlpShape::policy(4, 2, &[32, 32], 1.0);
    let ck = Checkpoint::from_policy(shape.clone(), shape.init(&mut RngStream::root(0)), "corridor-walk", 0, 0);
    let fam = UpdateFamily::GaussianPerturbation { sigma: 3e-4 };
    let ret = PolicyReturn::new(&env, &shape).unwrap();
    let probe = PurdProbe::new(&fam, update_source(&ck), &ret, 1);
    let mut group = c.benchmark_group("purd");
    group.sample_size(10);
    for n in [64usize, 256] {
        group.bench_with_input(BenchmarkId::new("rayon", n), &n, |b, &n| {
            b.iter(|| map_indexed(n, |i| ret.evaluate(&probe.params(i).unwrap())))
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
            b.iter(|| map_indexed_seq(n, |i| ret.evaluate(&probe.params(i).unwrap())))
        });
    }
    group.finish();
}

criterion_group!(benches, purd_rollouts);
criterion_main!(benches);
