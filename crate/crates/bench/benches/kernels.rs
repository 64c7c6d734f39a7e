use std::hint::black_box;

use bfpmg::blas::{nnqgemv, qaxpby, qgemv, qspmv};
use bfpmg::fem::{Discretization, Pde, ProblemSpec};
use bfpmg::multigrid::{GammaPolicy, Hierarchy, HierarchyOptions, PrecisionSchedule, Solver, Widths};
use bfpmg::{BfpBlock, BfpMatrix, BfpScalar};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn vector(n: usize, q: u32, seed: i128) -> BfpBlock {
    let half = 1i128 << (q - 1);
    let v: Vec<i128> = (0..n as i128).map(|i| ((i * 7919 + seed * 104_729) % (2 * half)) - half).collect();
    BfpBlock::from_i128s(q, -(i64::from(q)), &v).unwrap()
}

fn stiffness(p: usize, j: u32, w: u32) -> BfpMatrix {
    let spec = ProblemSpec::new(Pde::Poisson, 1, p, j).unwrap();
    let disc = Discretization::new(&spec, 128).unwrap();
    BfpMatrix::from_csr(&disc.a, w)
}

fn kernels(c: &mut Criterion) {
    let gamma = BfpScalar::power_of_two(4, 8);
    let (one, minus) = (BfpScalar::one(), BfpScalar::minus_one());
    let mut g = c.benchmark_group("kernels");
    for w in [16u32, 64, 200] {
        let a = stiffness(3, 10, w);
        let n = a.rows();
        let x = vector(n, w, 1);
        let y = vector(n, w, 2);
        g.bench_with_input(BenchmarkId::new("qaxpby", w), &w, |b, &w| {
            b.iter(|| qaxpby(black_box(&x), black_box(&y), &one, &minus, w, w + 4, &gamma).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("qspmv", w), &w, |b, &w| {
            b.iter(|| qspmv(black_box(&a), black_box(&x), w, w + 4, &gamma).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("qgemv", w), &w, |b, &w| {
            b.iter(|| qgemv(black_box(&a), black_box(&x), black_box(&y), &one, &minus, w, w + 4, &gamma).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("nnqgemv", w), &w, |b, &w| {
            b.iter(|| nnqgemv(black_box(&a), black_box(&x), black_box(&y), &one, &minus, w, &gamma).unwrap())
        });
    }
    g.finish();
}

fn vcycle(c: &mut Criterion) {
    let spec = ProblemSpec::new(Pde::Poisson, 1, 2, 8).unwrap();
    let opts = HierarchyOptions { reference: false, ..HierarchyOptions::default() };
    let h = Hierarchy::build(&spec, &opts).unwrap();
    let r = vector(h.level(8).dofs(), 32, 3);
    let mut solver = Solver::new(&h, PrecisionSchedule::flat(Widths::flat(32)), GammaPolicy::default());
    c.bench_function("vcycle_poisson_p2_j8_w32", |b| b.iter(|| solver.vcycle(8, black_box(&r)).unwrap()));
}

criterion_group!(benches, kernels, vcycle);
criterion_main!(benches);
