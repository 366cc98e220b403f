//! Verification suites: each runs a family of checks and reports one
//! [`Check`] per contracted quantity. The command-line front end and the
//! acceptance tests call these.

use nalgebra::SymmetricEigen;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::{
    alpha_series, canonical_bracket, peierls_bracket, phase_space_grid, pullback_to_phase_space, ContractionKernel,
    Product,
};
use crate::functional::probe_distance;
use crate::graphs::{classify, divergence_degree, enumerate_graphs, graph_expansion, symmetry_factor, Graph};
use crate::microlocal::{
    bicharacteristic_flow, drift_order, wf_scan, Directions, PolySymbol, SampledDistribution, WfOptions,
};
use crate::model::{cauchy_solution, closed_form, green_functions, LinearizedOperator};
use crate::renorm::testfn::TestFunction;
use crate::renorm::{
    analytic_regularize, estimate_scaling_degree, fit_delta_polynomial, ms_extend, scaling_samples, w_extend,
    ModelDistribution, RegularizationFamily, WProjection,
};
use crate::sampling::{self, bump, bump_density, bump_second_derivative, random_density};
use crate::smatrix::{
    extract_z2, field_equation_residual, mass_perturbation_residual, weyl_source_deviation, z_compose, Caps, Engine,
    InteractionSpec, Scheme, SecondOrderProduct,
};
use crate::weyl::{
    complex_structure, factorization_ratio, phase_space_forms, switch, thermal_hadamard, Cocycle, WeylContext,
};
use crate::{build_model, Error, Model, ModelSpec, PolyFunctional, Result, C64, I};

/// One reported quantity with its contract.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub contract: String,
    pub pass: bool,
    /// Where the reference value comes from.
    pub source: String,
}

impl Check {
    pub fn at_most(name: &str, value: f64, tol: f64, source: &str) -> Self {
        Check {
            name: name.into(),
            value,
            contract: format!("<= {tol:e}"),
            pass: value <= tol,
            source: source.into(),
        }
    }

    pub fn at_least(name: &str, value: f64, bound: f64, source: &str) -> Self {
        Check {
            name: name.into(),
            value,
            contract: format!(">= {bound:e}"),
            pass: value >= bound,
            source: source.into(),
        }
    }

    pub fn equals(name: &str, value: f64, expected: f64, source: &str) -> Self {
        Check {
            name: name.into(),
            value,
            contract: format!("== {expected}"),
            pass: value == expected,
            source: source.into(),
        }
    }

    pub fn within(name: &str, value: f64, target: f64, tol: f64, source: &str) -> Self {
        Check {
            name: name.into(),
            value,
            contract: format!("|x - {target}| <= {tol:e}"),
            pass: (value - target).abs() <= tol,
            source: source.into(),
        }
    }

    pub fn flag(name: &str, ok: bool, source: &str) -> Self {
        Check {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            contract: "true".into(),
            pass: ok,
            source: source.into(),
        }
    }

    /// A reported value without a contract.
    pub fn info(name: &str, value: f64, source: &str) -> Self {
        Check { name: name.into(), value, contract: "report".into(), pass: true, source: source.into() }
    }
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}

/// Run parameters shared by the suites. Unset fields fall back to
/// per-suite defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub mass: f64,
    pub grid: Option<usize>,
    pub half_extent: Option<f64>,
    pub cap_hbar: Option<u32>,
    pub cap_lambda: Option<u32>,
    /// Replaces every default tolerance of a suite.
    pub tol: Option<f64>,
    pub seed: u64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings { mass: 1.0, grid: None, half_extent: None, cap_hbar: None, cap_lambda: None, tol: None, seed: 1 }
    }
}

impl Settings {
    fn tol(&self, default: f64) -> f64 {
        self.tol.unwrap_or(default)
    }

    fn qm(&self, grid: usize, half: f64) -> Result<Model> {
        build_model(ModelSpec::qm(self.mass, self.half_extent.unwrap_or(half), self.grid.unwrap_or(grid)))
    }

    fn caps(&self, hbar: u32, coupling: u32) -> Result<Caps> {
        Caps::new(self.cap_hbar.unwrap_or(hbar), self.cap_lambda.unwrap_or(coupling))
    }
}

fn scaled(v: Vec<f64>, c: f64) -> Vec<f64> {
    v.into_iter().map(|x| x * c).collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn max_abs(m: impl Iterator<Item = f64>) -> f64 {
    m.fold(0.0, |a: f64, b| a.max(b.abs()))
}

fn interior(model: &Model) -> (f64, f64) {
    let t = model.grid.times();
    let (a, b) = (t[0], t[t.len() - 1]);
    let pad = 0.1 * (b - a);
    (a + pad, b - pad)
}

/// Random functional of degree at most two: `int a phi^2 + int b phi + c`.
fn random_quadratic(model: &Model, rng: &mut impl Rng) -> PolyFunctional {
    let (lo, hi) = interior(model);
    let g = &model.grid;
    let n = g.len();
    PolyFunctional::local(n, &random_density(g, rng, lo, hi), 2)
        .add(&PolyFunctional::local(n, &random_density(g, rng, lo, hi), 1))
        .add(&PolyFunctional::constant(n, C64::new(rng.gen_range(-1.0..1.0), 0.0)))
}

/// Propagator identities and the free field equation.
pub fn model_check(s: &Settings) -> Result<Vec<Check>> {
    let m = s.qm(129, 2.0)?;
    let p = &m.propagators;
    let n = m.grid.len();
    let mut out = Vec::new();
    let split = max_abs((0..n * n).map(|k| p.causal[k] - (p.retarded[k] - p.advanced[k])));
    out.push(Check::at_most("causal_equals_retarded_minus_advanced", split, s.tol(1e-14), "contract: identity"));
    let fey = p.feynman();
    let pos = p.positive();
    let d = (0..n * n).map(|k| (fey[k] - pos[k] - I * p.advanced[k]).norm()).fold(0.0, f64::max);
    out.push(Check::at_most("feynman_minus_positive_is_i_advanced", d, s.tol(1e-14), "contract: identity"));
    let (gr, _) = green_functions(&LinearizedOperator::free(&m), &m.grid)?;
    let dg = max_abs((0..n * n).map(|k| gr[k] - p.retarded[k]));
    out.push(Check::at_most("retarded_matches_ode_green_function", dg, s.tol(1e-8), "oracle: RK4 fundamental system"));
    let sol = cauchy_solution(&m, &[0.7], &[-0.4])?;
    let r = m.free_operator(&sol)?;
    let nt = m.grid.time_len();
    let res = max_abs(r.iter().enumerate().filter(|(i, _)| *i % nt >= 2 && *i % nt + 2 < nt).map(|(_, v)| *v));
    out.push(Check::at_most("free_solution_residual", res, s.tol(1e-3), "contract: O(step^2) stencil error"));
    Ok(out)
}

/// Weyl relations and the state checks.
pub fn weyl_check(s: &Settings) -> Result<Vec<Check>> {
    let mut out = weyl_relations(s)?;
    out.extend(states(s)?);
    Ok(out)
}

/// Weyl relations against closed-form phases, and associativity.
pub fn weyl_relations(s: &Settings) -> Result<Vec<Check>> {
    let m = s.qm(121, 3.0)?;
    let hbar = 0.7;
    let ctx = WeylContext::new(&m, hbar);
    let g = &m.grid;
    let w = g.weights();
    let (lo, hi) = interior(&m);
    let mut rng = sampling::rng(s.seed);
    let delta_oracle = |f: &[f64], h: &[f64]| -> f64 {
        let mut acc = 0.0;
        for a in 0..g.len() {
            if f[a] == 0.0 {
                continue;
            }
            for b in 0..g.len() {
                let (ma, ia) = g.split(a);
                let (mb, ib) = g.split(b);
                if ma == mb && h[b] != 0.0 {
                    acc += w[a] * f[a] * closed_form::causal(g.frequency(ma), g.times()[ia], g.times()[ib]) * w[b] * h[b];
                }
            }
        }
        acc
    };
    let triples: Vec<[Vec<f64>; 3]> =
        (0..100).map(|_| std::array::from_fn(|_| scaled(random_density(g, &mut rng, lo, hi), 2.0))).collect();
    let (worst, assoc) = triples
        .par_iter()
        .map(|[f, h, k]| {
            let (wf, wh, wk) = (ctx.generator(f), ctx.generator(h), ctx.generator(k));
            let prod = ctx.product(&wf, &wh);
            let expect = (-0.5 * I * hbar * delta_oracle(f, h)).exp();
            let phase = (prod.coefficient_of(&add(f, h), 1e-12) - expect).norm();
            let left = ctx.product(&prod, &wk);
            let right = ctx.product(&wf, &ctx.product(&wh, &wk));
            (phase, left.distance(&right, 1e-12))
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    Ok(vec![
        Check::at_most("weyl_relation_phase", worst, s.tol(1e-12), "oracle: closed-form causal propagator"),
        Check::at_most("weyl_product_associativity", assoc, s.tol(1e-12), "contract: associativity"),
    ])
}

/// Gram positivity, purity of the vacuum, impurity of a thermal state and
/// the holomorphic block structure of the two-point function.
pub fn states(s: &Settings) -> Result<Vec<Check>> {
    let m = s.qm(121, 3.0)?;
    let ctx = WeylContext::new(&m, 1.0);
    let g = &m.grid;
    let (lo, hi) = interior(&m);
    let mut rng = sampling::rng(s.seed.wrapping_add(17));
    let funcs: Vec<Vec<f64>> = (0..12).map(|_| random_density(g, &mut rng, lo, hi)).collect();
    let gram = ctx.gram(&funcs);
    let eig = SymmetricEigen::new(gram);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let mut out = vec![Check::at_least("gram_min_eigenvalue", min, -s.tol(1e-10), "contract: positivity")];
    // two test functions span the phase space of one mode
    let pair = vec![bump_density(g, 0, -0.8, 1.0), bump_density(g, 0, 0.9, 1.1)];
    let (h, d) = phase_space_forms(&ctx, &pair);
    let vac = complex_structure(&h, &d, 1e-8)?;
    out.push(Check::at_most("vacuum_purity_defect", vac.purity_defect, 1e-8, "contract: Delta J = 2H"));
    out.push(Check::flag("vacuum_is_pure", vac.pure, "contract: Delta J = 2H at 1e-8"));
    out.push(Check::at_most("complex_structure_square", vac.square_defect(), 1e-10, "contract: J^2 = -1"));
    out.push(Check::at_most("holomorphic_block_defect", vac.holomorphic_defect(), 1e-10, "contract: block structure"));
    let hot = ctx.clone().with_hadamard(&m, &thermal_hadamard(&m, 1.5));
    let (ht, dt) = phase_space_forms(&hot, &pair);
    let th = complex_structure(&ht, &dt, 1e-8)?;
    out.push(Check::at_least("thermal_purity_defect", th.purity_defect, 1e-8, "contract: Delta J != 2H"));
    out.push(Check::flag("thermal_is_mixed", !th.pure, "contract: Delta J != 2H at 1e-8"));
    let hot_gram = hot.gram(&funcs);
    let hmin = SymmetricEigen::new(hot_gram).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    out.push(Check::at_least("thermal_gram_min_eigenvalue", hmin, -s.tol(1e-10), "contract: positivity"));
    Ok(out)
}

/// Order-hbar antisymmetric part of the star products against the Peierls
/// bracket, and Peierls against the canonical bracket.
pub fn bracket_equiv(s: &Settings) -> Result<Vec<Check>> {
    let m = s.qm(64, 2.0)?;
    let g = &m.grid;
    let mut rng = sampling::rng(s.seed);
    let pr = sampling::probes(g, s.seed.wrapping_add(1), 3);
    let mut worst = 0.0f64;
    for scheme in [Scheme::Free, Scheme::Hadamard] {
        let star = Product::new(scheme.star_kernel(&m), g);
        let pairs: Vec<_> = (0..50).map(|_| (random_quadratic(&m, &mut rng), random_quadratic(&m, &mut rng))).collect();
        let errs = pairs
            .par_iter()
            .map(|(f, h)| {
                let fh = star.apply(f, h, 1)?;
                let hf = star.apply(h, f, 1)?;
                let comm = fh.coeff(1, 0).sub(hf.coeff(1, 0));
                let pei = peierls_bracket(f, h, &m)?.scale(I);
                Ok(probe_distance(&comm, &pei, g, &pr))
            })
            .collect::<Result<Vec<f64>>>()?;
        worst = errs.into_iter().fold(worst, f64::max);
    }
    let mut out = vec![Check::at_most("star_commutator_vs_peierls", worst, s.tol(1e-9), "oracle: Peierls bracket")];

    let big = build_model(ModelSpec::qm(s.mass, 2.0, 512))?;
    let phase = phase_space_grid(&big);
    let nt = big.grid.time_len();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (i, j) = (rng.gen_range(0..nt), rng.gen_range(0..nt));
        let (a, b) = (PolyFunctional::evaluation(&big.grid, i), PolyFunctional::evaluation(&big.grid, j));
        let pei = peierls_bracket(&a, &b, &big)?.as_constant(&big.grid).unwrap_or_default();
        let can = canonical_bracket(&pullback_to_phase_space(&a, &big)?, &pullback_to_phase_space(&b, &big)?, &phase)?
            .as_constant(&phase)
            .unwrap_or_default();
        worst = worst.max((pei - can).norm());
    }
    out.push(Check::at_most("peierls_vs_canonical_512", worst, s.tol(1e-6), "oracle: canonical bracket on Cauchy data"));
    Ok(out)
}

/// Associativity of both star products and the intertwiner between them.
pub fn star_assoc(s: &Settings) -> Result<Vec<Check>> {
    let m = s.qm(32, 2.0)?;
    let g = &m.grid;
    let cap = s.cap_hbar.unwrap_or(4);
    let mut rng = sampling::rng(s.seed);
    let pr = sampling::probes(g, s.seed.wrapping_add(1), 3);
    let mut out = Vec::new();
    let n = g.len();
    let (lo, hi) = interior(&m);
    let fs: Vec<PolyFunctional> = (0..3)
        .map(|k| {
            PolyFunctional::local(n, &random_density(g, &mut rng, lo, hi), 2 + (k % 2))
                .add(&PolyFunctional::local(n, &random_density(g, &mut rng, lo, hi), 1))
        })
        .collect();
    for (label, scheme) in [("free", Scheme::Free), ("hadamard", Scheme::Hadamard)] {
        let p = Product::new(scheme.star_kernel(&m), g);
        let lift = |f: &PolyFunctional| f.to_series(cap, 0);
        let left = p.series(&p.series(&lift(&fs[0]), &lift(&fs[1]))?, &lift(&fs[2]))?;
        let right = p.series(&lift(&fs[0]), &p.series(&lift(&fs[1]), &lift(&fs[2]))?)?;
        let d = left.probe_distance(&right, g, &pr)?;
        out.push(Check::at_most(&format!("associativity_{label}"), d, s.tol(1e-10), "contract: associativity"));
    }
    let h = ContractionKernel::hadamard(&m);
    let free = Product::new(Scheme::Free.star_kernel(&m), g);
    let had = Product::new(Scheme::Hadamard.star_kernel(&m), g);
    let lift = |f: &PolyFunctional| f.to_series(cap, 0);
    let lhs = alpha_series(&free.series(&lift(&fs[0]), &lift(&fs[1]))?, &h, 1.0, g)?;
    let rhs = had.series(&alpha_series(&lift(&fs[0]), &h, 1.0, g)?, &alpha_series(&lift(&fs[1]), &h, 1.0, g)?)?;
    let d = lhs.probe_distance(&rhs, g, &pr)?;
    out.push(Check::at_most("alpha_h_intertwines", d, s.tol(1e-10), "contract: alpha_H(F * G) = alpha_H F *_H alpha_H G"));
    Ok(out)
}

fn factorial(k: u32) -> u128 {
    (1..=k as u128).product()
}

/// Graph enumeration with symmetry factors, plus the divergence table.
pub fn graphs(n: usize, cap: u32) -> Result<Vec<Check>> {
    if n == 0 || n > 6 {
        return Err(Error::Invalid(format!("vertex count {n} outside 1..=6")));
    }
    let list = enumerate_graphs(n, cap);
    let mut out = vec![Check::info("graph_count", list.len() as f64, "enumeration")];
    for (k, gr) in list.iter().enumerate() {
        let mult: Vec<String> = gr.edges().iter().map(|(i, j, l)| format!("{i}{j}x{l}")).collect();
        let expected: u128 = gr.edges().iter().map(|e| factorial(e.2)).product();
        out.push(Check::equals(
            &format!("sym[{k}] {{{}}} {:?}", mult.join(","), classify(gr)),
            symmetry_factor(gr) as f64,
            expected as f64,
            "oracle: product of line-multiplicity factorials",
        ));
    }
    out.extend(divergence_table()?);
    Ok(out)
}

pub fn divergence_table() -> Result<Vec<Check>> {
    let fish = Graph::new(2, &[(0, 1, 2)])?;
    let sun = Graph::new(2, &[(0, 1, 3)])?;
    let tri = Graph::new(3, &[(0, 1, 1), (1, 2, 1), (0, 2, 1)])?;
    let src = "oracle: (d-2)|E| - d(|V|-1)";
    let mut out = vec![
        Check::equals("omega fish d=4", divergence_degree(&fish, 4) as f64, 0.0, src),
        Check::equals("omega setting-sun d=4", divergence_degree(&sun, 4) as f64, 2.0, src),
        Check::equals("omega fish d=1", divergence_degree(&fish, 1) as f64, -3.0, src),
        Check::equals("omega triangle d=6", divergence_degree(&tri, 6) as f64, 0.0, src),
    ];
    // scaling degree of the fish kernel (Delta_F^2 in d = 4) is 4; divergence = sd - d
    let sd = ModelDistribution::abs_pow(4, 2.0 * 2.0).scaling_degree();
    out.push(Check::equals("fish d=4: sd - d", sd - 4.0, divergence_degree(&fish, 4) as f64, "contract: sd - d"));
    Ok(out)
}

/// Graph sum against the iterated time-ordered product for quartic functionals.
pub fn expand_tn(s: &Settings) -> Result<Vec<Check>> {
    let m = s.qm(64, 2.0)?;
    let g = &m.grid;
    let n = g.len();
    let (lo, hi) = interior(&m);
    let mut rng = sampling::rng(s.seed);
    let pr = sampling::probes(g, s.seed.wrapping_add(1), 3);
    let kernel = ContractionKernel::feynman(&m);
    let prod = Product::new(kernel.clone(), g);
    let mut out = Vec::new();
    for count in 1..=3usize {
        let fs: Vec<PolyFunctional> =
            (0..count).map(|_| PolyFunctional::local(n, &random_density(g, &mut rng, lo, hi), 4)).collect();
        let cap = s.cap_hbar.unwrap_or(2 * count as u32);
        let graphs = graph_expansion(&fs, &kernel, g, cap)?;
        let mut acc = fs[0].to_series(cap, 0);
        for f in &fs[1..] {
            acc = prod.series(&acc, &f.to_series(cap, 0))?;
        }
        let d = (0..=cap).map(|k| probe_distance(&graphs[k as usize], acc.coeff(k, 0), g, &pr)).fold(0.0, f64::max);
        out.push(Check::at_most(&format!("graph_sum_vs_iterated_T n={count}"), d, s.tol(1e-9), "oracle: iterated T product"));
    }
    Ok(out)
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

fn sphere_area(d: usize) -> f64 {
    2.0 * std::f64::consts::PI.powf(d as f64 / 2.0) / libm::tgamma(d as f64 / 2.0)
}

/// Extension of a model distribution paired with Gaussians of several widths.
pub fn extend(dist: &str, dim: usize, scheme: &str, s: &Settings) -> Result<Vec<Check>> {
    let t = ModelDistribution::parse(dist, dim)?;
    let fam = RegularizationFamily::new(t.clone());
    let mut out = vec![
        Check::info("scaling_degree", t.scaling_degree(), "model distribution"),
        Check::info("extension_order", t.extension_order() as f64, "model distribution"),
    ];
    let pure_pole = t.extension_order() == 0 && t.terms.len() == 1 && t.terms[0].log_power == 0
        && t.terms[0].angular.iter().all(|&a| a == 0);
    for width in [0.5, 1.0, 2.0] {
        let f = TestFunction::gaussian(dim, width);
        match scheme {
            "ms" => {
                let l = analytic_regularize(&fam, &f, 1)?;
                if let Some(p) = l.principal.first() {
                    if pure_pole {
                        let expect = t.terms[0].coeff.re * sphere_area(dim) * f.eval(&vec![0.0; dim]);
                        out.push(Check::within(
                            &format!("pole_coefficient w={width}"),
                            p.re,
                            expect,
                            s.tol(1e-7),
                            "oracle: |S^(d-1)| f(0)",
                        ));
                        out.push(Check::at_most(&format!("pole_imaginary w={width}"), p.im.abs(), s.tol(1e-7), "oracle: real pole"));
                    } else {
                        out.push(Check::info(&format!("pole_coefficient w={width}"), p.re, "Laurent expansion"));
                    }
                }
                out.push(Check::info(&format!("ms_value w={width}"), ms_extend(&fam, &f)?.re, "minimal subtraction"));
            }
            "w" => {
                let w = WProjection::for_distribution(&t, 1.0)?;
                out.push(Check::info(&format!("w_value w={width}"), w_extend(&t, &w, &f)?.re, "W-projection"));
            }
            other => return Err(Error::Invalid(format!("unknown scheme {other}; use ms or w"))),
        }
    }
    Ok(out)
}

/// Extension machinery for `|x|^-1` on the line.
pub fn ms(s: &Settings) -> Result<Vec<Check>> {
    let fam = RegularizationFamily::new(ModelDistribution::abs_pow(1, 1.0));
    let mut rng = sampling::rng(s.seed);
    let mut out = Vec::new();
    let mut pole = 0.0f64;
    let mut fin = 0.0f64;
    let mut fs = Vec::new();
    for k in 0..6 {
        let f = if k < 3 { TestFunction::gaussian(1, 0.5 + 0.5 * k as f64) } else { TestFunction::random(1, 3, &mut rng) };
        let l = analytic_regularize(&fam, &f, 1)?;
        pole = pole.max((l.principal[0].re - 2.0 * f.eval(&[0.0])).abs());
        // finite part: 2 int_0^1 (fe(r) - fe(0))/r + 2 int_1^R fe(r)/r
        let fe = |r: f64| 0.5 * (f.eval(&[r]) + f.eval(&[-r]));
        let f0 = fe(0.0);
        let near = simpson(&|r| if r == 0.0 { 0.0 } else { 2.0 * (fe(r) - f0) / r }, 0.0, 1.0, 20_000);
        let mut far = 0.0;
        let mut a = 1.0;
        while a < 60.0 {
            far += simpson(&|r| 2.0 * fe(r) / r, a, a + 1.0, 2_000);
            a += 1.0;
        }
        fin = fin.max((ms_extend(&fam, &f)?.re - (near + far)).abs());
        fs.push(f);
    }
    out.push(Check::at_most("pole_coefficient_vs_2f0", pole, s.tol(1e-7), "oracle: 2 f(0)"));
    out.push(Check::at_most("ms_vs_finite_part", fin, s.tol(1e-7), "oracle: Simpson finite part"));
    let t = ModelDistribution::abs_pow(1, 1.0);
    let w1 = WProjection::for_distribution(&t, 1.0)?;
    let w2 = WProjection::for_distribution(&t, 1.7)?;
    let diffs = fs.iter().map(|f| Ok(w_extend(&t, &w1, f)? - w_extend(&t, &w2, f)?)).collect::<Result<Vec<C64>>>()?;
    let fit = fit_delta_polynomial(&fs, &diffs, 0)?;
    out.push(Check::at_most("w_difference_delta_fit_residual", fit.residual, s.tol(1e-8), "contract: difference is c delta"));
    let lambdas: Vec<f64> = (6..=12).map(|k| 10f64.powi(-k)).collect();
    let g = TestFunction::gaussian(1, 1.0);
    let sw = estimate_scaling_degree(&scaling_samples(1, &g, &lambdas, &|h| w_extend(&t, &w1, h))?)?;
    let sm = estimate_scaling_degree(&scaling_samples(1, &g, &lambdas, &|h| ms_extend(&fam, h))?)?;
    out.push(Check::within("scaling_degree_w", sw.value, 1.0, 0.1, "contract: sd preserved"));
    out.push(Check::within("scaling_degree_ms", sm.value, 1.0, 0.1, "contract: sd preserved"));
    Ok(out)
}

/// Wave front directions of the delta and of `1/(x + i0)`.
pub fn wf(s: &Settings, eps_steps: &[f64]) -> Result<Vec<Check>> {
    let n = s.grid.unwrap_or(8192);
    let half = s.half_extent.unwrap_or(8.0);
    let dx = 2.0 * half / n as f64;
    let o = WfOptions::default();
    let mut out = Vec::new();
    let dir = |d: Directions| match (d.plus, d.minus) {
        (false, false) => "none",
        (true, false) => "+",
        (false, true) => "-",
        (true, true) => "+-",
    };
    for &e in eps_steps {
        let delta = SampledDistribution::mollified_delta(n, half, e * dx)?;
        let inv = SampledDistribution::inverse_x_plus_i_eps(n, half, e * dx)?;
        for (label, u, expect) in [("delta", &delta, Directions::BOTH), ("inv_x_plus_i0", &inv, Directions::MINUS)] {
            let at0 = wf_scan(u, 0.0, 1.0, &o)?.directions();
            let away = wf_scan(u, 3.0, 1.0, &o)?.directions();
            out.push(Check::flag(
                &format!("{label} eps={e} steps: x=0 {}", dir(at0)),
                at0 == expect,
                "oracle: known wave front set",
            ));
            out.push(Check::flag(
                &format!("{label} eps={e} steps: x=3 {}", dir(away)),
                away == Directions::NONE,
                "oracle: smooth away from 0",
            ));
        }
    }
    Ok(out)
}

/// Symbol conservation along the bicharacteristic flow.
pub fn flow(s: &Settings) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let tol = s.tol(1e-6);
    let wave = bicharacteristic_flow(&PolySymbol::wave_2d(), &[0.0, 0.0], &[1.0, 1.0], 10_000, 1e-3)?;
    out.push(Check::at_most("wave drift 1e4 steps", wave.drift, tol, "contract: sigma conserved"));
    let har = bicharacteristic_flow(&PolySymbol::harmonic(), &[1.0], &[0.3], 10_000, 1e-3)?;
    out.push(Check::at_most("harmonic drift 1e4 steps", har.drift, tol, "contract: sigma conserved"));
    let anh = bicharacteristic_flow(&PolySymbol::anharmonic(), &[0.8], &[0.3], 10_000, 1e-3)?;
    out.push(Check::at_most("anharmonic drift 1e4 steps", anh.drift, tol, "contract: sigma conserved"));
    let dts = [1e-2, 5e-3, 2.5e-3];
    let (_, p) = drift_order(&PolySymbol::anharmonic(), &[0.8], &[0.3], 10.0, &dts)?;
    out.push(Check::within("anharmonic drift order", p, 4.0, 0.5, "contract: RK4 is O(dt^4)"));
    let (_, p) = drift_order(&PolySymbol::harmonic(), &[1.0], &[0.3], 10.0, &dts)?;
    out.push(Check::at_least("harmonic drift order", p, 3.5, "contract: at least O(dt^4)"));
    Ok(out)
}

/// Formal S-matrix: vacuum, inverse, unitarity, second order, Weyl agreement, shifts.
pub fn smatrix(s: &Settings) -> Result<Vec<Check>> {
    let m = s.qm(24, 1.5)?;
    let g = &m.grid;
    let n = g.len();
    let pr = sampling::probes(g, s.seed, 3);
    let caps = s.caps(2, 2)?;
    let e = Engine::new(&m, Scheme::Hadamard, caps);
    let mut out = Vec::new();
    let s0 = e.formal_smatrix(&PolyFunctional::zero(n))?.series;
    out.push(Check::at_most("S(0) - 1", s0.probe_distance(&e.unit(), g, &pr)?, s.tol(1e-15), "contract: S(0) = 1"));
    let spec = InteractionSpec::phi4(&bump_density(g, 0, -0.2, 0.7))
        .add(&InteractionSpec::mass(&scaled(bump_density(g, 0, 0.3, 0.6), 0.5)))?;
    let v = spec.functional();
    out.push(Check::at_most("S^-1 * S - 1", e.inverse_defect(&v, &pr)?, s.tol(1e-10), "contract: inverse"));
    out.push(Check::at_most("S^* * S - 1", e.unitarity_defect(&v, &pr)?, s.tol(1e-9), "contract: unitarity"));
    // second order against the graph sum of T(V, V)
    let sv = e.formal_smatrix(&v)?.series;
    let graphs = graph_expansion(&[v.clone(), v.clone()], &Scheme::Hadamard.time_kernel(&m), g, caps.hbar)?;
    let mut d = 0.0f64;
    if caps.coupling >= 2 {
        for k in 0..=caps.hbar {
            d = d.max(probe_distance(sv.coeff(k, 2), &graphs[k as usize].scale(C64::new(-0.5, 0.0)), g, &pr));
        }
    }
    out.push(Check::at_most("second order vs graph sum", d, s.tol(1e-12), "oracle: graph expansion"));
    let src = scaled(bump_density(g, 0, 0.1, 0.9), 0.8);
    let ctx = WeylContext::new(&m, 1.0);
    let mut worst = 0.0f64;
    for scheme in [Scheme::Free, Scheme::Hadamard] {
        let e4 = Engine::new(&m, scheme, Caps::new(4, 4)?);
        for phi in &pr {
            worst = worst.max(weyl_source_deviation(&e4, &ctx, &src, phi)?);
        }
    }
    out.push(Check::at_most("linear source vs exact Weyl, order 4", worst, s.tol(1e-8), "oracle: exact Weyl S-matrix"));
    let shift = e.time_shift_residual(&InteractionSpec::phi4(&bump_density(g, 0, -0.3, 0.6)), 3, &pr)?;
    out.push(Check::at_most("time-shift equivariance", shift, s.tol(1e-11), "contract: translation invariance"));
    Ok(out)
}

/// Bogoliubov's map: order zero, field equation, mass perturbation, Weyl
/// agreement and the interacting product.
pub fn bogoliubov(s: &Settings) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    // field equation on a fine grid: the error is the trapezoid kink term
    let m = s.qm(1201, 1.2)?;
    let g = &m.grid;
    let e = Engine::new(&m, Scheme::Hadamard, Caps::new(1, 1)?);
    let spec = InteractionSpec::phi4(&bump_density(g, 0, 0.1, 0.9));
    let h: Vec<f64> = g.times().iter().map(|&t| bump(t, 0.0, 0.8)).collect();
    let w2 = s.mass * s.mass;
    let ph: Vec<f64> = g.times().iter().map(|&t| bump_second_derivative(t, 0.0, 0.8) + w2 * bump(t, 0.0, 0.8)).collect();
    let mut worst = 0.0f64;
    for (p0, q0) in [(0.9, -0.3), (-0.5, 0.8)] {
        let phi = cauchy_solution(&m, &[p0], &[q0])?.0;
        worst = worst.max(field_equation_residual(&e, &spec, &h, &ph, &phi)?.0);
    }
    out.push(Check::at_most("field equation residual, order lambda", worst, s.tol(1e-6), "contract: P R_V(Phi) = P Phi - R_V(V')"));
    let r0 = e.bogoliubov(&spec.functional(), &PolyFunctional::linear(g.len(), &ph))?.series;
    let d0 = probe_distance(r0.coeff(0, 0), &PolyFunctional::linear(g.len(), &ph), g, &sampling::probes(g, s.seed, 2));
    out.push(Check::at_most("order-0 identity", d0, s.tol(1e-14), "contract: R_V(F) = F + O(lambda)"));

    let window: Vec<f64> = g.times().iter().map(|&t| switch(t - 0.3, 0.1) * switch(0.9 - t, 0.1)).collect();
    let phi = cauchy_solution(&m, &[0.7], &[0.4])?.0;
    let idx: Vec<usize> = [-0.5, 0.0, 0.5, 0.8, 1.0].iter().map(|t| g.nearest_time_index(*t)).collect();
    let mp = mass_perturbation_residual(&e, &window, &phi, &idx, 1e-3)?;
    out.push(Check::at_most("mass perturbation vs shifted Green function", mp, s.tol(1e-6), "oracle: ODE Green function of P + mu g"));

    let m = s.qm(40, 1.5)?;
    let g = &m.grid;
    let n = g.len();
    let pr = sampling::probes(g, s.seed, 3);
    let ctx = WeylContext::new(&m, 1.0);
    let src = scaled(bump_density(g, 0, -0.2, 0.8), 0.8);
    let obs = bump_density(g, 0, 0.6, 0.5);
    let mut worst = 0.0f64;
    for scheme in [Scheme::Free, Scheme::Hadamard] {
        let e4 = Engine::new(&m, scheme, Caps::new(4, 4)?);
        for phi in &pr {
            worst = worst.max(weyl_source_deviation(&e4, &ctx, &src, phi)?);
        }
        // R_V(Phi(h)) = Phi(h) - lambda Delta^R(h, f) exactly
        let r = e4.bogoliubov(&InteractionSpec::source(&src).functional(), &PolyFunctional::linear(n, &obs))?.series;
        let shift = -ctx.advanced(&src, &obs);
        for (a, b, c) in r.iter() {
            let expect = match (a, b) {
                (0, 0) => PolyFunctional::linear(n, &obs),
                (1, 1) => PolyFunctional::constant(n, C64::new(shift, 0.0)),
                _ => PolyFunctional::zero(n),
            };
            worst = worst.max(probe_distance(c, &expect, g, &pr));
        }
    }
    out.push(Check::at_most("linear interaction vs exact Weyl, order 4", worst, s.tol(1e-8), "oracle: exact Weyl objects"));

    let m = s.qm(16, 1.5)?;
    let g = &m.grid;
    let n = g.len();
    let pr = sampling::probes(g, s.seed, 3);
    let e = Engine::new(&m, Scheme::Hadamard, s.caps(2, 2)?);
    let v = InteractionSpec::mass(&bump_density(g, 0, 0.0, 0.8)).functional();
    let r = e.bogoliubov_map(&v)?;
    let mut rng = sampling::rng(s.seed);
    let (lo, hi) = interior(&m);
    let fs: Vec<_> = (0..3)
        .map(|k| e.lift(&PolyFunctional::local(n, &random_density(g, &mut rng, lo, hi), 1 + k % 2)))
        .collect();
    let left = r.interacting_product(&r.interacting_product(&fs[0], &fs[1])?, &fs[2])?;
    let right = r.interacting_product(&fs[0], &r.interacting_product(&fs[1], &fs[2])?)?;
    out.push(Check::at_most("interacting product associativity", left.probe_distance(&right, g, &pr)?, s.tol(1e-8), "contract: associativity"));
    let unit = r.interacting_product(&fs[0], &e.unit())?;
    out.push(Check::at_most("interacting product unit", unit.probe_distance(&fs[0], g, &pr)?, s.tol(1e-12), "contract: F *_V 1 = F"));
    Ok(out)
}

/// Causal factorization in the Weyl theory and in the perturbative engine.
pub fn causal_fact(s: &Settings) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let m = s.qm(121, 2.0)?;
    let g = &m.grid;
    let ctx = WeylContext::new(&m, 0.8);
    let mut rng = sampling::rng(s.seed);
    let mut worst = 0.0f64;
    let mut ret = 0.0f64;
    let mut conj = 0.0f64;
    for _ in 0..20 {
        let f = random_density(g, &mut rng, 0.6, 1.6);
        let h = random_density(g, &mut rng, -1.6, -0.6);
        let gg = random_density(g, &mut rng, -1.8, 1.8);
        let r = factorization_ratio(&ctx, &f, &gg, &h)?;
        worst = worst.max((r - 1.0).norm());
        // S_g(h) does not see changes of g later than h
        let a = ctx.relative_smatrix(&gg, &h)?;
        let b = ctx.relative_smatrix(&add(&gg, &f), &h)?;
        ret = ret.max(a.distance(&b, 1e-12));
        // S_{g + h}(f) = S_g(h)^-1 S_g(f) S_g(h) for h earlier than f
        let lhs = ctx.relative_smatrix(&add(&gg, &h), &f)?;
        let u = ctx.relative_smatrix(&gg, &h)?;
        let rhs = ctx.product(&ctx.product(&ctx.inverse(&u)?, &ctx.relative_smatrix(&gg, &f)?), &u);
        conj = conj.max(lhs.distance(&rhs, 1e-12));
    }
    out.push(Check::at_most("weyl factorization phase", worst, s.tol(1e-14), "oracle: exact Weyl phases"));
    out.push(Check::at_most("weyl retarded dependence", ret, s.tol(1e-12), "oracle: exact Weyl phases"));
    out.push(Check::at_most("weyl past conjugation", conj, s.tol(1e-12), "oracle: exact Weyl phases"));

    let m = s.qm(28, 2.0)?;
    let g = &m.grid;
    let pr = sampling::probes(g, s.seed, 3);
    let e = Engine::new(&m, Scheme::Hadamard, s.caps(2, 2)?);
    let f = InteractionSpec::mass(&bump_density(g, 0, 1.1, 0.5));
    let gg = InteractionSpec::mass(&scaled(bump_density(g, 0, 0.0, 1.2), 0.7));
    let h = InteractionSpec::mass(&bump_density(g, 0, -1.1, 0.5));
    out.push(Check::at_most("perturbative factorization", e.causal_factorization_residual(&f, &gg, &h, &pr)?, s.tol(1e-8), "contract: coefficientwise at caps"));
    out.push(Check::flag(
        "overlapping supports refused",
        e.causal_factorization_residual(&h, &gg, &f, &pr) == Err(Error::SupportsOverlap),
        "contract: support precondition",
    ));
    out.push(Check::at_most("perturbative retarded dependence", e.retarded_dependence_residual(&gg, &f, &h, &pr)?, s.tol(1e-10), "contract: coefficientwise at caps"));
    out.push(Check::at_most("perturbative past conjugation", e.past_conjugation_residual(&gg, &h, &f, &pr)?, s.tol(1e-8), "contract: coefficientwise at caps"));
    Ok(out)
}

/// The renormalization map at second order.
pub fn z_check(s: &Settings) -> Result<Vec<Check>> {
    let m = s.qm(20, 1.5)?;
    let g = &m.grid;
    let n = g.len();
    let pr = sampling::probes(g, s.seed, 3);
    let e = Engine::new(&m, Scheme::Hadamard, s.caps(2, 2)?);
    let v = InteractionSpec::phi4(&bump_density(g, 0, 0.0, 0.8)).functional();
    let t = SecondOrderProduct::new(Scheme::Hadamard.time_kernel(&m));
    let mut out = Vec::new();
    out.push(Check::flag("T~ = T gives Z = id", extract_z2(&t, &t, g)?.is_identity(), "contract: Z_2 = 0"));
    let tt = t.clone().with_local_fish(g, &vec![0.1; n])?;
    let z = extract_z2(&t, &tt, g)?;
    let direct = e.smatrix_with(&v, &tt)?;
    let composed = z_compose(&e, &z, &v)?;
    out.push(Check::at_most("S o Z vs S~", direct.probe_distance(&composed, g, &pr)?, s.tol(1e-10), "oracle: S-matrix from T~"));
    let zero = z.apply(&PolyFunctional::zero(n), 2, g)?;
    out.push(Check::flag("Z(0) = 0", zero.is_zero(), "contract: Z1"));
    // Z(eps V) = eps V + O(eps^2)
    let eps = 1e-4;
    let ze = z.apply(&v.scale(C64::new(eps, 0.0)), 2, g)?;
    let d1 = probe_distance(&ze.sum_at(1.0, 1.0).scale(C64::new(1.0 / eps, 0.0)), &v, g, &pr);
    out.push(Check::at_most("Z'(0) = id", d1, 1e-3, "contract: Z2, first-order defect O(eps)"));
    let zv = z.apply(&v, 2, g)?;
    out.push(Check::flag("Z = id + O(hbar)", zv.coeff(0, 2).is_zero(), "contract: Z3"));
    let a = PolyFunctional::local(n, &bump_density(g, 0, -0.8, 0.4), 4);
    let b = PolyFunctional::local(n, &bump_density(g, 0, 0.8, 0.4), 3);
    let ab = a.add(&b);
    let lhs = z.z2(&ab, &ab, g)?;
    let rhs = z.z2(&a, &a, g)?.add(&z.z2(&b, &b, g)?);
    out.push(Check::at_most("additivity on disjoint supports", probe_distance(&lhs, &rhs, g, &pr), s.tol(1e-12), "contract: Z4"));
    let q = PolyFunctional::local(n, &bump_density(g, 0, 0.1, 0.6), 2);
    out.push(Check::flag("correction kernel field independent", z.z2(&q, &q, g)?.as_constant(g).is_some(), "contract: Z5"));
    let mut dd = vec![C64::new(0.0, 0.0); n * n];
    dd[3 * n + 4] = C64::new(0.2, 0.0);
    out.push(Check::flag(
        "nonlocal correction rejected",
        matches!(extract_z2(&t, &t.clone().with_fish(dd.into()), g), Err(Error::NotLocal(_))),
        "contract: locality",
    ));
    Ok(out)
}

/// Interaction-picture cocycle and its generator.
pub fn cocycle(s: &Settings) -> Result<Vec<Check>> {
    let m = s.qm(161, 3.0)?;
    let ctx = WeylContext::new(&m, 1.0);
    let c = Cocycle { ctx: &ctx, model: &m, coupling: 0.8, eps: 0.5, profile: vec![1.0] };
    let mut worst = 0.0f64;
    for (a, b) in [(3, 5), (-4, 7), (10, -2), (6, 6)] {
        worst = worst.max(c.residual(a, b)?);
    }
    let mut out = vec![Check::at_most("cocycle identity", worst, s.tol(1e-10), "contract: U_{t+s} = U_t alpha_t(U_s)")];
    // central differences: truncation ~ dt^2 chi'''/6, rounding ~ 1e-16/dt
    let (dens, _) = c.interaction_hamiltonian(1e-5)?;
    let expect = c.expected_linear_part();
    let d = max_abs(dens.iter().zip(&expect).map(|(a, b)| a - b));
    out.push(Check::at_most("H_I linear part vs -h chi', dt = 1e-5", d, s.tol(1e-6), "oracle: derivative of the switch"));
    Ok(out)
}
