use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use fracvol::fbm::{CholeskySampler, FbmSampler, WoodChanSampler};
use fracvol::pricing::{price, Estimator, MCConfig, Payoff};
use fracvol::special::hyp2f1;
use fracvol::volterra::build_kernel_matrix;
use fracvol::{Hurst, Model, RandomSource, Scenario, TimeGrid};

fn samplers(c: &mut Criterion) {
    let h = Hurst::new(0.7).unwrap();
    let mut g = c.benchmark_group("fbm");
    for n in [256, 1024, 4096] {
        let grid = TimeGrid::new(1.0, n).unwrap();
        let wc = WoodChanSampler::new(grid, h).unwrap();
        g.bench_function(format!("woodchan_{n}"), |b| {
            b.iter_batched(
                || RandomSource::new(1),
                |mut rng| black_box(wc.sample_component(&mut rng)),
                BatchSize::SmallInput,
            )
        });
    }
    let grid = TimeGrid::new(1.0, 512).unwrap();
    let ch = CholeskySampler::new(grid, h).unwrap();
    g.bench_function("cholesky_512", |b| {
        b.iter_batched(
            || RandomSource::new(1),
            |mut rng| black_box(ch.sample_component(&mut rng)),
            BatchSize::SmallInput,
        )
    });
    g.finish();
}

fn special(c: &mut Criterion) {
    c.bench_function("hyp2f1_kernel_args", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for i in 1..100 {
                let z = -(i as f64) * 0.05;
                acc += hyp2f1(0.2, -0.2, 0.7, black_box(z)).unwrap();
            }
            acc
        })
    });
}

fn kernel(c: &mut Criterion) {
    let mut g = c.benchmark_group("kernel");
    g.sample_size(10);
    for n in [64, 256] {
        let grid = TimeGrid::new(1.0, n).unwrap();
        g.bench_function(format!("build_{n}"), |b| {
            b.iter(|| build_kernel_matrix(grid, Hurst::new(0.7).unwrap()).unwrap())
        });
    }
    g.finish();
}

fn pricing(c: &mut Criterion) {
    let mut s = Scenario::reference_example();
    s.grid = TimeGrid::new(1.0, 64).unwrap();
    let model = Model::new(s).unwrap();
    let payoff = Payoff::Call { asset: 0, strike: 1.0 };
    let mut g = c.benchmark_group("price");
    g.sample_size(10);
    for est in [Estimator::Physical, Estimator::RiskNeutral] {
        let cfg = MCConfig::new(1000, 0);
        g.bench_function(format!("{est}_1000x64"), |b| {
            b.iter(|| price(&payoff, &model, &cfg, est).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, samplers, special, kernel, pricing);
criterion_main!(benches);
