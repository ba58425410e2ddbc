use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use levyfront::discretize::{
    assemble_line_operator_with, assemble_torus_operator_with, Field, LineGrid, LineGridParams, TailModel, TorusGrid,
};
use levyfront::evolve::{Scheme, Stepper};
use levyfront::exec::Execution;
use levyfront::model::{KernelSpec, ReactionSpec, TrigPoly};
use std::hint::black_box;

fn modes() -> Vec<(&'static str, Execution)> {
    vec![
        ("sequential", Execution::Sequential),
        #[cfg(feature = "parallel")]
        ("parallel", Execution::Parallel),
    ]
}

fn kernel() -> KernelSpec {
    KernelSpec::new(1, 1.0, TrigPoly::cosine(0.0, 0.3)).unwrap()
}

fn line(cells: usize) -> LineGrid {
    LineGrid::new(LineGridParams { core_half_width: 8.0, core_cells: cells, outer_nodes: 3 * cells, r_max: 1e12 })
        .unwrap()
}

fn torus_assembly(c: &mut Criterion) {
    let k = kernel();
    let mut g = c.benchmark_group("torus_assembly");
    g.sample_size(10);
    for n in [256, 1024] {
        let grid = TorusGrid::new(n).unwrap();
        for (name, exec) in modes() {
            g.bench_with_input(BenchmarkId::new(name, n), &grid, |b, grid| {
                b.iter(|| assemble_torus_operator_with(&k, grid, exec).unwrap())
            });
        }
    }
    g.finish();
}

fn line_assembly(c: &mut Criterion) {
    let k = kernel();
    let mut g = c.benchmark_group("line_assembly");
    g.sample_size(10);
    for cells in [64, 256] {
        let grid = line(cells);
        for (name, exec) in modes() {
            g.bench_with_input(BenchmarkId::new(name, grid.len()), &grid, |b, grid| {
                b.iter(|| assemble_line_operator_with(&k, grid, TailModel::Algebraic, exec).unwrap())
            });
        }
    }
    g.finish();
}

fn apply(c: &mut Criterion) {
    let k = kernel();
    let mut g = c.benchmark_group("apply");
    let op = assemble_line_operator_with(&k, &line(256), TailModel::Algebraic, Execution::default()).unwrap();
    let u: Vec<f64> = op.grid().nodes().iter().map(|x| 1.0 / (1.0 + x * x)).collect();
    for (name, exec) in modes() {
        g.bench_function(BenchmarkId::new(name, op.len()), |b| b.iter(|| op.apply_slice(black_box(&u), exec)));
    }
    g.finish();
}

fn imex_step(c: &mut Criterion) {
    let k = kernel();
    let r = ReactionSpec::logistic(1.0, 0.0).unwrap();
    let op = assemble_line_operator_with(&k, &line(256), TailModel::Algebraic, Execution::default()).unwrap();
    let u = Field::from_fn(op.grid().clone(), |x| 1.0 / (1.0 + x * x));
    let mut g = c.benchmark_group("imex_step");
    for (name, exec) in modes() {
        let stepper = Stepper::new(&op, Some(&r), Scheme::Imex, 0.01).unwrap().with_execution(exec);
        g.bench_function(BenchmarkId::new(name, op.len()), |b| b.iter(|| stepper.step(black_box(&u)).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, torus_assembly, line_assembly, apply, imex_step);
criterion_main!(benches);
