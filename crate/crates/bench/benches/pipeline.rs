use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use gfsim::ident_bic::{identify_bic, BicParams};
use gfsim::ident_ridge::{identify_ridge, RidgeContext, RidgeOperator};
use gfsim::model::{apply_power, build_dictionary, sample_frame, sample_profiles, ActivityModel, SystemConfig};
use gfsim::mud::two_means;
use gfsim::rng::{stream, Domain};
use gfsim::waveform::{chip_matched_filter, linear_model_window, synthesize_frame};
use gfsim::Complex64;
use rand::Rng;

fn setup(k_u: usize, n_c: usize, l: usize, p: f64) -> (SystemConfig, Vec<gfsim::model::DeviceProfile>, gfsim::model::Dictionary) {
    let cfg = SystemConfig {
        l,
        activity: ActivityModel::Fixed(p),
        ..SystemConfig::desk(k_u, n_c)
    };
    let mut profiles = sample_profiles(&cfg, &mut stream(1, Domain::Profiles, 0));
    apply_power(&cfg, &mut profiles);
    let dict = build_dictionary(&profiles).unwrap();
    (cfg, profiles, dict)
}

fn ridge(c: &mut Criterion) {
    let (cfg, profiles, dict) = setup(256, 128, 1, 0.05);
    let op = RidgeOperator::new(&dict.x);
    c.bench_function("ridge_context_256x128", |b| {
        b.iter(|| RidgeContext::new(&op, &profiles, 0.05, 1.0, 10.0).unwrap())
    });
    let ctx = RidgeContext::new(&op, &profiles, 0.05, 1.0, 10.0).unwrap();
    let det = ctx.detectors(0.05, 1).unwrap();
    c.bench_function("ridge_identify_256x128", |b| {
        b.iter_batched(
            || {
                let mut rng = stream(2, Domain::Trial, 0);
                let f = sample_frame(&cfg, &profiles, &mut rng);
                linear_model_window(&dict, &profiles, &f, &cfg, &mut rng)
            },
            |w| identify_ridge(&w, &ctx, &det).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn bic(c: &mut Criterion) {
    let (cfg, profiles, dict) = setup(128, 64, 8, 0.03);
    let op = RidgeOperator::new(&dict.x);
    let mut rng = stream(3, Domain::Trial, 0);
    let f = sample_frame(&cfg, &profiles, &mut rng);
    let w = linear_model_window(&dict, &profiles, &f, &cfg, &mut rng);
    let params = BicParams::default();
    let mut group = c.benchmark_group("bic");
    group.sample_size(10);
    group.bench_function("identify_128x64_l8", |b| b.iter(|| identify_bic(&w, &op, &params).unwrap()));
    group.finish();
}

fn waveform_and_mud(c: &mut Criterion) {
    let (cfg, profiles, _) = setup(96, 64, 1, 0.05);
    let mut rng = stream(4, Domain::Trial, 0);
    let f = sample_frame(&cfg, &profiles, &mut rng);
    c.bench_function("synthesize_and_chip_mf_96x64", |b| {
        b.iter(|| {
            let wf = synthesize_frame(&profiles, &f, &cfg, &mut rng).unwrap();
            chip_matched_filter(&wf)
        })
    });
    let mut r = stream(5, Domain::Restart, 0);
    let y: Vec<Complex64> = (0..128)
        .map(|_| {
            let s = if r.random::<bool>() { 1.0 } else { -1.0 };
            Complex64::new(0.7 * s + 0.3 * r.random::<f64>(), -0.4 * s + 0.3 * r.random::<f64>())
        })
        .collect();
    c.bench_function("two_means_128", |b| b.iter(|| two_means(&y, 100).unwrap()));
}

criterion_group!(benches, ridge, bic, waveform_and_mud);
criterion_main!(benches);
