use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use optofcs::counting::{fano_curve, stationary_counting, CountingOptions};
use optofcs::lindblad::steady_state;
use optofcs::operators::build_hamiltonian;
use optofcs::spectral::SpectralDecomposition;
use optofcs::trajectory::{run_ensemble, Sampler, TrajectoryConfig, TrajectoryEngine};
use optofcs::HamiltonianKind;
use optofcs_bench::{blockade, cascade, liouvillian};

fn assembly(c: &mut Criterion) {
    let mut g = c.benchmark_group("assemble");
    for dims in [(2, 8), (4, 16), (5, 20)] {
        let (p, d) = cascade(dims);
        g.bench_with_input(BenchmarkId::from_parameter(format!("{dims:?}")), &d, |b, d| {
            b.iter(|| liouvillian(black_box(&p), *d))
        });
    }
    g.finish();
}

fn steady(c: &mut Criterion) {
    let mut g = c.benchmark_group("steady_state");
    g.sample_size(10);
    for dims in [(2, 8), (4, 16)] {
        let (p, d) = cascade(dims);
        let l = liouvillian(&p, d);
        g.bench_function(format!("{dims:?}"), |b| b.iter(|| steady_state(black_box(&l)).unwrap()));
    }
    let (p, d) = cascade((4, 16));
    let l = liouvillian(&p, d);
    g.bench_function("cumulants (4, 16)", |b| {
        b.iter(|| stationary_counting(black_box(&l)).unwrap())
    });
    g.finish();
}

fn spectrum(c: &mut Criterion) {
    let mut g = c.benchmark_group("spectral");
    g.sample_size(10);
    let (p, d) = blockade((2, 6));
    let l = liouvillian(&p, d);
    g.bench_function("decompose (2, 6)", |b| {
        b.iter(|| SpectralDecomposition::new(l.generator()).unwrap())
    });
    g.finish();
}

fn trajectories(c: &mut Criterion) {
    let mut g = c.benchmark_group("trajectories");
    g.sample_size(10);
    let (p, d) = cascade((2, 4));
    let h = build_hamiltonian(&p, d, HamiltonianKind::Optomechanical).unwrap();
    for sampler in [Sampler::WaitingTime, Sampler::FirstOrder] {
        let engine = TrajectoryEngine::new(&p, &h, sampler).unwrap();
        let cfg = TrajectoryConfig {
            t_total: 2e3,
            sample_stride: 0,
            ..TrajectoryConfig::default()
        };
        g.bench_function(format!("{sampler:?} t=2e3"), |b| {
            b.iter(|| engine.run(black_box(&cfg)).unwrap())
        });
    }
    g.finish();
}

fn counting(c: &mut Criterion) {
    let (p, d) = cascade((2, 4));
    let h = build_hamiltonian(&p, d, HamiltonianKind::Optomechanical).unwrap();
    let engine = TrajectoryEngine::new(&p, &h, Sampler::WaitingTime).unwrap();
    let cfg = TrajectoryConfig {
        t_total: 2e5,
        sample_stride: 0,
        ..TrajectoryConfig::default()
    };
    let ens = run_ensemble(&engine, &cfg, 2, 1).unwrap();
    let grid: Vec<f64> = (0..20).map(|i| 10f64.powf(i as f64 / 5.0)).collect();
    let mut g = c.benchmark_group("counting");
    g.sample_size(10);
    g.bench_function("fano_curve 20 windows", |b| {
        b.iter(|| fano_curve(black_box(&ens.records), &grid, &CountingOptions::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, assembly, steady, spectrum, trajectories, counting);
criterion_main!(benches);
