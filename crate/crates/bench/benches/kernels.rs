use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use eigenrate_core::fem::{assemble, Family, FeSpace};
use eigenrate_core::gevp::{solve_gevp_with, Method, SolveOptions};
use eigenrate_core::mesh::{interval_mesh, rect_mesh, tri_mesh_from_rect, SplitRule};
use eigenrate_core::quadrature::gauss_legendre;

fn quadrature(c: &mut Criterion) {
    let mut g = c.benchmark_group("gauss_legendre");
    for n in [4usize, 16, 64] {
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| b.iter(|| gauss_legendre(black_box(n)).unwrap()));
    }
    g.finish();
}

fn assembly(c: &mut Criterion) {
    let mut g = c.benchmark_group("assemble");
    for (name, family, n) in [("p1-2d", Family::P1, 32usize), ("p2-2d", Family::P2, 16), ("cr-2d", Family::Cr, 32)] {
        let rect = rect_mesh(n, n, [0.0; 2], [1.0; 2], [1.0; 2]).unwrap();
        let mesh = tri_mesh_from_rect(&rect, SplitRule::Fixed).unwrap();
        let space = FeSpace::new(mesh, family, 1).unwrap();
        g.bench_function(format!("{name}/seq"), |b| b.iter(|| assemble(&space, false).unwrap()));
        g.bench_function(format!("{name}/par"), |b| b.iter(|| assemble(&space, true).unwrap()));
    }
    g.finish();
}

fn eigensolve(c: &mut Criterion) {
    let mut g = c.benchmark_group("gevp");
    g.sample_size(10);
    for n in [128usize, 512] {
        let space = FeSpace::new(interval_mesh(0.0, 1.0, n, 1.0).unwrap(), Family::P1, 1).unwrap();
        let pair = assemble(&space, false).unwrap();
        g.bench_with_input(BenchmarkId::new("dense-p1-1d", n), &pair, |b, p| {
            b.iter(|| solve_gevp_with(p, &SolveOptions::new(10).method(Method::Dense)).unwrap())
        });
    }
    let rect = rect_mesh(32, 32, [0.0; 2], [1.0; 2], [1.0; 2]).unwrap();
    let space = FeSpace::new(tri_mesh_from_rect(&rect, SplitRule::Fixed).unwrap(), Family::P1, 1).unwrap();
    let pair = assemble(&space, false).unwrap();
    for method in [Method::Dense, Method::ShiftInvert] {
        g.bench_function(format!("p1-2d-32/{method:?}"), |b| {
            b.iter(|| solve_gevp_with(&pair, &SolveOptions::new(4).method(method)).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, quadrature, assembly, eigensolve);
criterion_main!(benches);
