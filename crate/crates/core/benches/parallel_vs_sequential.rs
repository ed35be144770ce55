use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use emsfem::assembly::{assemble_block, FineBlock, FineOperators, OperatorTerms, VelocityField, VelocityPreset};
use emsfem::exec::Threading;
use emsfem::grid::{CoarseDecomposition, Rect, StructuredGrid2D};
use emsfem::harness::presets::{build_kappa, KappaSpec};
use emsfem::msspace::{build_multiscale_space, SpaceOptions};
use emsfem::pou::assemble_pou;

const MODES: [(&str, Threading); 2] = [("sequential", Threading::Sequential), ("parallel", Threading::Parallel)];

fn setup(coarse_cells: usize, ratio: usize) -> (CoarseDecomposition, emsfem::assembly::CoefficientField, VelocityField) {
    let coarse = StructuredGrid2D::new(Rect::unit(), coarse_cells, coarse_cells).unwrap();
    let decomp = CoarseDecomposition::new(coarse, ratio).unwrap();
    let spec = KappaSpec::Channels { contrast: 1e4, cells: 64, channels: 6, inclusions: 16, seed: Some(3) };
    let kappa = build_kappa(&spec, &decomp.fine, 0, std::path::Path::new(".")).unwrap();
    let beta = VelocityField::steady(VelocityPreset::Cellular { alpha: 2.0, k: 24.0 });
    (decomp, kappa, beta)
}

fn bench_assembly(c: &mut Criterion) {
    let (decomp, kappa, beta) = setup(8, 32);
    let grid = &decomp.fine;
    let mut group = c.benchmark_group("assembly_256");
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let terms = OperatorTerms { mass: 1.0, kappa: Some(&kappa), velocity: Some((&beta, 1.0)) };
                assemble_block(grid, FineBlock::whole(grid), terms, mode).unwrap()
            })
        });
    }
    group.finish();
}

fn bench_pou(c: &mut Criterion) {
    let (decomp, kappa, _) = setup(8, 16);
    let mut group = c.benchmark_group("pou_h128_H8");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| assemble_pou(&decomp, &kappa, mode).unwrap())
        });
    }
    group.finish();
}

fn bench_space(c: &mut Criterion) {
    let (decomp, kappa, beta) = setup(8, 16);
    let ops = FineOperators::assemble(&decomp.fine, &kappa, &beta).unwrap();
    let pou = assemble_pou(&decomp, &kappa, Threading::Parallel).unwrap();
    let mut group = c.benchmark_group("space_h128_H8_l1");
    group.sample_size(10);
    for (name, mode) in MODES {
        let opts = SpaceOptions { threading: mode, ..SpaceOptions::new(1) };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| build_multiscale_space(&decomp, &ops, &kappa, &beta, &pou, &opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_assembly, bench_pou, bench_space);
criterion_main!(benches);
