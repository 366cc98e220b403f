use criterion::{black_box, criterion_group, criterion_main, Criterion};

use paqft::algebra::{ContractionKernel, Product};
use paqft::graphs::graph_expansion;
use paqft::microlocal::{wf_scan, SampledDistribution, WfOptions};
use paqft::renorm::testfn::TestFunction;
use paqft::renorm::{ms_extend, ModelDistribution, RegularizationFamily};
use paqft::sampling::{self, random_density};
use paqft::smatrix::{Caps, Engine, InteractionSpec, Scheme};
use paqft::weyl::WeylContext;
use paqft::{build_model, ModelSpec, PolyFunctional};

fn star_product(c: &mut Criterion) {
    let m = build_model(ModelSpec::qm(1.0, 2.0, 64)).unwrap();
    let g = &m.grid;
    let mut rng = sampling::rng(1);
    let f = PolyFunctional::local(g.len(), &random_density(g, &mut rng, -1.5, 1.5), 4);
    let h = PolyFunctional::local(g.len(), &random_density(g, &mut rng, -1.5, 1.5), 4);
    let p = Product::new(Scheme::Hadamard.star_kernel(&m), g);
    c.bench_function("star phi^4 x phi^4, 64 points", |b| b.iter(|| p.apply(black_box(&f), black_box(&h), 4).unwrap()));
}

fn graphs(c: &mut Criterion) {
    let m = build_model(ModelSpec::qm(1.0, 2.0, 64)).unwrap();
    let g = &m.grid;
    let mut rng = sampling::rng(2);
    let fs: Vec<_> = (0..3).map(|_| PolyFunctional::local(g.len(), &random_density(g, &mut rng, -1.5, 1.5), 4)).collect();
    let k = ContractionKernel::feynman(&m);
    c.bench_function("graph expansion, 3 quartic vertices", |b| b.iter(|| graph_expansion(black_box(&fs), &k, g, 6).unwrap()));
}

fn weyl(c: &mut Criterion) {
    let m = build_model(ModelSpec::qm(1.0, 3.0, 256)).unwrap();
    let g = &m.grid;
    let ctx = WeylContext::new(&m, 1.0);
    let mut rng = sampling::rng(3);
    let a = ctx.generator(&random_density(g, &mut rng, -2.0, 2.0));
    let b2 = ctx.generator(&random_density(g, &mut rng, -2.0, 2.0));
    c.bench_function("weyl product, 256 points", |b| b.iter(|| ctx.product(black_box(&a), black_box(&b2))));
}

fn smatrix(c: &mut Criterion) {
    let m = build_model(ModelSpec::qm(1.0, 1.5, 24)).unwrap();
    let g = &m.grid;
    let e = Engine::new(&m, Scheme::Hadamard, Caps::new(2, 2).unwrap());
    let spec = InteractionSpec::phi4(&random_density(g, &mut sampling::rng(4), -1.0, 1.0));
    c.bench_function("formal S-matrix, phi^4 at caps (2,2)", |b| b.iter(|| e.smatrix(black_box(&spec)).unwrap()));
}

fn extension(c: &mut Criterion) {
    let fam = RegularizationFamily::new(ModelDistribution::abs_pow(1, 1.0));
    let f = TestFunction::gaussian(1, 1.0);
    c.bench_function("MS extension of |x|^-1", |b| b.iter(|| ms_extend(&fam, black_box(&f)).unwrap()));
}

fn wave_front(c: &mut Criterion) {
    let n = 8192;
    let u = SampledDistribution::mollified_delta(n, 8.0, 2.0 * 16.0 / n as f64).unwrap();
    let o = WfOptions::default();
    c.bench_function("wave front scan, 8192 samples", |b| b.iter(|| wf_scan(black_box(&u), 0.0, 1.0, &o).unwrap()));
}

criterion_group!(benches, star_product, graphs, weyl, smatrix, extension, wave_front);
criterion_main!(benches);
