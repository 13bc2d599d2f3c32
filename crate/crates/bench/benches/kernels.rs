use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use foliation_bench::{chains, germ, omega1_forms, path};
use foliation_core::dulac::{gdul_exponent, gdul_map};
use foliation_core::forms::compute_omega1;
use foliation_core::holonomy::TransportControls;
use foliation_core::pseudogroup::check_hn_bounds;
use foliation_core::C64;

fn omega1(c: &mut Criterion) {
    let mut g = c.benchmark_group("omega1");
    for (name, form) in omega1_forms() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &form, |b, w| {
            b.iter(|| compute_omega1(black_box(w)).unwrap())
        });
    }
    g.finish();
}

fn holonomy(c: &mut Criterion) {
    let ctl = TransportControls::default();
    let mut g = c.benchmark_group("holonomy");
    g.sample_size(20);
    for name in ["linear_loop", "linear_half_turn"] {
        let p = path(name);
        g.bench_function(name, |b| b.iter(|| p.holonomy(black_box(&ctl)).unwrap()));
    }
    g.finish();
}

fn gdul(c: &mut Criterion) {
    let chains = chains();
    let v = C64::new(1e-3, 2e-4);
    c.bench_function("gdul/corpus", |b| {
        b.iter(|| {
            for ch in &chains {
                let _ = gdul_exponent(ch);
                let _ = gdul_map(ch, black_box(v));
            }
        })
    });
}

fn hn_bounds(c: &mut Criterion) {
    let g0 = germ("sqrt_fifth");
    let mut g = c.benchmark_group("hn_bounds");
    g.sample_size(10);
    g.bench_function("sqrt_fifth", |b| {
        b.iter(|| check_hn_bounds(&g0.map, &g0.germ, &[0, 1, 2, 3], &[0.99, 0.6, 0.3, 0.1], 7).unwrap())
    });
    g.finish();
}

criterion_group!(benches, omega1, holonomy, gdul, hn_bounds);
criterion_main!(benches);
