use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use ilg_core::fem;
use ilg_core::par::{self, Backend};
use ilg_core::{
    estimate, make_lshape_initial, smooth_problem, DiscreteFunction, FeProblem, MarkedSet,
    SchemeSpec,
};

fn refined_problem(sweeps: usize) -> FeProblem {
    let mut mesh = make_lshape_initial();
    for _ in 0..sweeps {
        mesh = mesh
            .refine(&MarkedSet::all(mesh.n_triangles()))
            .unwrap()
            .mesh;
    }
    FeProblem::new(mesh, &smooth_problem())
}

fn backends(c: &mut Criterion) {
    let fp = refined_problem(8);
    let u = DiscreteFunction::interpolate(fp.space(), |p| (3.0 * p[0]).sin() * p[1]);
    let scheme = SchemeSpec::Newton { delta: 1.0 };
    let sys = fem::assemble(&scheme, &fp, &u);
    let x = u.interior(fp.space());
    let mut group = c.benchmark_group("backend");
    for backend in [Backend::Sequential, Backend::Parallel] {
        par::set_backend(backend);
        let label = format!("{backend:?}");
        group.bench_function(BenchmarkId::new("assemble_newton", &label), |b| {
            b.iter(|| fem::assemble(&scheme, &fp, black_box(&u)))
        });
        group.bench_function(BenchmarkId::new("estimate", &label), |b| {
            b.iter(|| estimate(&fp, black_box(&u)))
        });
        group.bench_function(BenchmarkId::new("matvec", &label), |b| {
            b.iter(|| sys.matrix.matvec(black_box(&x)))
        });
    }
    group.finish();
    par::set_backend(Backend::Parallel);
}

criterion_group!(benches, backends);
criterion_main!(benches);
