use proptest::prelude::*;

use paqft::algebra::Product;
use paqft::functional::probe_distance;
use paqft::graphs::{divergence_degree, enumerate_graphs, symmetry_factor, Graph};
use paqft::microlocal::{bicharacteristic_flow, PolySymbol};
use paqft::renorm::testfn::TestFunction;
use paqft::renorm::{ms_extend, w_extend, ModelDistribution, RegularizationFamily, WProjection};
use paqft::sampling::{self, random_density};
use paqft::smatrix::{Caps, Engine, InteractionSpec, Scheme};
use paqft::weyl::{factorization_ratio, WeylContext};
use paqft::{build_model, Model, ModelSpec, PolyFunctional, C64};

fn model(n: usize) -> Model {
    build_model(ModelSpec::qm(1.0, 2.0, n)).unwrap()
}

fn densities(m: &Model, seed: u64, count: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    let mut rng = sampling::rng(seed);
    (0..count).map(|_| random_density(&m.grid, &mut rng, lo, hi)).collect()
}

fn scaled(v: &[f64], c: f64) -> Vec<f64> {
    v.iter().map(|x| x * c).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn weyl_commutation_phase(seed in any::<u64>(), hbar in 0.1f64..2.0) {
        let m = model(41);
        let ctx = WeylContext::new(&m, hbar);
        let d = densities(&m, seed, 2, -1.5, 1.5);
        let (a, b) = (ctx.generator(&d[0]), ctx.generator(&d[1]));
        let ab = ctx.product(&a, &b);
        let ba = ctx.product(&b, &a);
        let phase = C64::new(0.0, -hbar * ctx.delta(&d[0], &d[1])).exp();
        prop_assert!(ab.distance(&ba.scale(phase), 1e-12) < 1e-12);
    }

    #[test]
    fn weyl_generators_are_unitary(seed in any::<u64>()) {
        let m = model(41);
        let ctx = WeylContext::new(&m, 0.9);
        let d = densities(&m, seed, 1, -1.5, 1.5);
        let a = ctx.generator(&d[0]);
        let one = ctx.generator(&vec![0.0; m.grid.len()]);
        prop_assert!(ctx.product(&a.involution(), &a).distance(&one, 1e-12) < 1e-13);
    }

    #[test]
    fn weyl_factorization_for_separated_supports(seed in any::<u64>(), shift in 0.0f64..0.4) {
        let m = model(61);
        let ctx = WeylContext::new(&m, 1.0);
        let late = densities(&m, seed, 1, 0.5 + shift, 1.6)[0].clone();
        let early = densities(&m, seed ^ 1, 1, -1.6, 0.2)[0].clone();
        let mid = densities(&m, seed ^ 2, 1, -1.8, 1.8)[0].clone();
        let r = factorization_ratio(&ctx, &late, &mid, &early).unwrap();
        prop_assert!((r - 1.0).norm() < 1e-13);
    }

    #[test]
    fn star_product_is_bilinear(seed in any::<u64>(), a in -2.0f64..2.0) {
        let m = model(16);
        let g = &m.grid;
        let n = g.len();
        let d = densities(&m, seed, 3, -1.5, 1.5);
        let f = PolyFunctional::local(n, &d[0], 2);
        let h = PolyFunctional::local(n, &d[1], 3);
        let k = PolyFunctional::linear(n, &d[2]);
        let p = Product::new(Scheme::Hadamard.star_kernel(&m), g);
        let lhs = p.apply(&f.add(&h.scale(C64::new(a, 0.0))), &k, 3).unwrap();
        let rhs = p.apply(&f, &k, 3).unwrap().add(&p.apply(&h, &k, 3).unwrap().scale(C64::new(a, 0.0))).unwrap();
        let pr = sampling::probes(g, seed, 2);
        prop_assert!(lhs.probe_distance(&rhs, g, &pr).unwrap() < 1e-11);
    }

    #[test]
    fn star_commutator_of_linear_fields_is_central(seed in any::<u64>()) {
        let m = model(16);
        let g = &m.grid;
        let n = g.len();
        let d = densities(&m, seed, 2, -1.5, 1.5);
        let (f, h) = (PolyFunctional::linear(n, &d[0]), PolyFunctional::linear(n, &d[1]));
        let p = Product::new(Scheme::Free.star_kernel(&m), g);
        let c = p.apply(&f, &h, 2).unwrap().sub(&p.apply(&h, &f, 2).unwrap()).unwrap();
        let ctx = WeylContext::new(&m, 1.0);
        let expect = PolyFunctional::constant(n, C64::new(0.0, ctx.delta(&d[0], &d[1])));
        let pr = sampling::probes(g, seed, 2);
        prop_assert!(probe_distance(c.coeff(1, 0), &expect, g, &pr) < 1e-12);
        prop_assert!(probe_distance(c.coeff(0, 0), &PolyFunctional::zero(n), g, &pr) < 1e-12);
    }

    #[test]
    fn bogoliubov_map_is_linear(seed in any::<u64>(), a in -2.0f64..2.0) {
        let m = model(16);
        let g = &m.grid;
        let n = g.len();
        let e = Engine::new(&m, Scheme::Hadamard, Caps::new(2, 2).unwrap());
        let d = densities(&m, seed, 3, -1.5, 1.5);
        let v = InteractionSpec::mass(&d[0]).functional();
        let f = PolyFunctional::local(n, &d[1], 2);
        let h = PolyFunctional::linear(n, &d[2]);
        let r = e.bogoliubov_map(&v).unwrap();
        let lhs = r.apply(&e.lift(&f.add(&h.scale(C64::new(a, 0.0))))).unwrap();
        let rhs = r.apply(&e.lift(&f)).unwrap().add(&r.apply(&e.lift(&h)).unwrap().scale(C64::new(a, 0.0))).unwrap();
        let pr = sampling::probes(g, seed, 2);
        prop_assert!(lhs.probe_distance(&rhs, g, &pr).unwrap() < 1e-11);
    }

    #[test]
    fn smatrix_of_zero_coupling_density_is_one(seed in any::<u64>()) {
        let m = model(16);
        let g = &m.grid;
        let e = Engine::new(&m, Scheme::Free, Caps::new(2, 2).unwrap());
        let d = densities(&m, seed, 1, -1.5, 1.5);
        let s = e.smatrix(&InteractionSpec::phi4(&scaled(&d[0], 0.0))).unwrap();
        let pr = sampling::probes(g, seed, 2);
        prop_assert!(s.probe_distance(&e.unit(), g, &pr).unwrap() < 1e-15);
    }

    #[test]
    fn ms_extension_is_linear(seed in any::<u64>(), a in -3.0f64..3.0) {
        let fam = RegularizationFamily::new(ModelDistribution::abs_pow(1, 1.0));
        let mut rng = sampling::rng(seed);
        let f = TestFunction::random(1, 3, &mut rng);
        let h = TestFunction::random(1, 3, &mut rng);
        let lhs = ms_extend(&fam, &f.add(&h.scale(a))).unwrap();
        let rhs = ms_extend(&fam, &f).unwrap() + ms_extend(&fam, &h).unwrap() * a;
        prop_assert!((lhs - rhs).norm() <= 1e-9 * (1.0 + lhs.norm()));
    }

    #[test]
    fn ms_and_w_differ_by_a_delta(seed in any::<u64>()) {
        let t = ModelDistribution::abs_pow(1, 1.0);
        let fam = RegularizationFamily::new(t.clone());
        let w = WProjection::for_distribution(&t, 1.0).unwrap();
        let g = TestFunction::gaussian(1, 1.0);
        let c = (ms_extend(&fam, &g).unwrap() - w_extend(&t, &w, &g).unwrap()) / g.eval(&[0.0]);
        let f = TestFunction::random(1, 3, &mut sampling::rng(seed));
        let d = ms_extend(&fam, &f).unwrap() - w_extend(&t, &w, &f).unwrap();
        prop_assert!((d - c * f.eval(&[0.0])).norm() < 1e-8);
    }

    #[test]
    fn harmonic_symbol_is_conserved(x0 in -2.0f64..2.0, k0 in -2.0f64..2.0) {
        let flow = bicharacteristic_flow(&PolySymbol::harmonic(), &[x0], &[k0], 2000, 1e-3).unwrap();
        prop_assert!(flow.drift < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn divergence_degree_formula(n in 1usize..5, seed in any::<u64>(), d in 1i64..8) {
        use rand::Rng;
        let mut rng = sampling::rng(seed);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let k = rng.gen_range(0..3u32);
                if k > 0 {
                    edges.push((i, j, k));
                }
            }
        }
        let g = Graph::new(n, &edges).unwrap();
        let e: i64 = edges.iter().map(|x| x.2 as i64).sum();
        prop_assert_eq!(divergence_degree(&g, d), (d - 2) * e - d * (n as i64 - 1));
    }

    #[test]
    fn enumeration_respects_line_cap(n in 1usize..4, cap in 0u32..4) {
        let list = enumerate_graphs(n, cap);
        for g in &list {
            prop_assert!(g.edge_count() <= cap);
            let sym: u128 = g.edges().iter().map(|e| (1..=e.2 as u128).product::<u128>()).product();
            prop_assert_eq!(symmetry_factor(g), sym);
        }
        // brute force count of multiplicity assignments
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let mut count = 0usize;
        let total = (cap as usize + 1).pow(pairs.len() as u32);
        for code in 0..total {
            let mut lines = 0;
            let mut c = code;
            for _ in &pairs {
                lines += c % (cap as usize + 1);
                c /= cap as usize + 1;
            }
            if lines <= cap as usize {
                count += 1;
            }
        }
        prop_assert_eq!(list.len(), count);
    }
}
