use std::hint::black_box;

use conewalk::linalg::{eig_herm, C64};
use conewalk::{
    run_group_walk, BesselParam, ContractionSampler, Field, GroupEngine, GroupWalkConfig, HermitianMatrix, Matrix,
    RadialLaw, SeedSequence,
};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn eigen(c: &mut Criterion) {
    let mut group = c.benchmark_group("eig_herm");
    for q in [2usize, 4, 8] {
        for field in [Field::Real, Field::Complex] {
            let m = Matrix::from_fn(q, q, field, |i, j| {
                let im = if field == Field::Complex && i != j { 0.3 * (i as f64 - j as f64) } else { 0.0 };
                C64::new(1.0 / (1.0 + (i + j) as f64), im)
            });
            let h = HermitianMatrix::new(m).unwrap();
            group.bench_with_input(BenchmarkId::new(field.to_string(), q), &h, |b, h| {
                b.iter(|| eig_herm(black_box(h)).unwrap())
            });
        }
    }
    group.finish();
}

fn contraction(c: &mut Criterion) {
    let mut group = c.benchmark_group("contraction_sample");
    for (q, field, mu) in [(1, Field::Real, 4.0), (2, Field::Real, 10.0), (3, Field::Complex, 12.0), (3, Field::Complex, 60.0)] {
        let sampler = ContractionSampler::new(BesselParam::new(mu, q, field).unwrap()).unwrap();
        let mut rng = SeedSequence::new(7).stream(0);
        group.bench_function(format!("q{q}_{field}_mu{mu}"), |b| b.iter(|| sampler.sample(&mut rng).unwrap()));
    }
    group.finish();
}

fn group_walk(c: &mut Criterion) {
    let mut group = c.benchmark_group("group_walk_100_steps");
    let law = RadialLaw::two_point(1.0, 2.0, 0.5).unwrap();
    for (p, engine) in [(8, GroupEngine::Matrix), (8, GroupEngine::Projected), (1000, GroupEngine::Projected)] {
        let cfg = GroupWalkConfig::new(p, Field::Real, 100, law.clone()).unwrap().with_engine(engine);
        let mut rng = SeedSequence::new(11).stream(0);
        group.bench_function(format!("p{p}_{engine:?}"), |b| b.iter(|| run_group_walk(&cfg, &mut rng).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, eigen, contraction, group_walk);
criterion_main!(benches);
