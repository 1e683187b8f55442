//! Recurrent scan vs convolution-kernel evaluation of one diagonal
//! state-space layer. The two paths compute the same sequence (their
//! agreement is asserted by tests); this measures how their costs scale
//! with sequence length at a fixed state dimension.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use msim_core::ssm::{apply_kernel, ssm_kernel, ssm_scan, zoh_discretize};

fn bench_paths(c: &mut Criterion) {
    let dim = 64;
    let mut rng = ChaCha20Rng::seed_from_u64(17);
    let a: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..-0.5)).collect();
    let b: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let c_out: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let delta: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.05..0.2)).collect();
    let (a_bar, b_bar) = zoh_discretize(&a, &b, &delta).unwrap();

    let mut group = c.benchmark_group("ssm_paths");
    for steps in [16usize, 64, 256] {
        let x: Vec<f64> = (0..steps).map(|_| rng.gen_range(-1.0..1.0)).collect();
        group.bench_with_input(BenchmarkId::new("scan", steps), &x, |bench, x| {
            bench.iter(|| ssm_scan(&a_bar, &b_bar, &c_out, x).unwrap());
        });
        group.bench_with_input(BenchmarkId::new("kernel", steps), &x, |bench, x| {
            bench.iter(|| {
                let k = ssm_kernel(&a_bar, &b_bar, &c_out, x.len()).unwrap();
                apply_kernel(x, &k).unwrap()
            });
        });
    }
    group.finish();
}

criterion_group!(benches, bench_paths);
criterion_main!(benches);
