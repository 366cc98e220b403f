//! Perturbative S-matrices, Bogoliubov's map and the interacting product.
//!
//! Series are graded by `hbar` and by `kappa = lambda / hbar`, so the
//! time-ordered exponential `exp_T(i lambda V / hbar) = exp_T(i kappa V)`
//! has finitely many terms at each order. A coefficient at `(a, b)` carries
//! `hbar^a kappa^b = hbar^(a - b) lambda^b`; every object built here has
//! `a >= b` so that the grading stays polynomial in `hbar`.

use std::sync::Arc;

use crate::algebra::{alpha_series, causal_order, CausalOrder, ContractionKernel, Product};
use crate::functional::PolyFunctional;
use crate::model::{green_functions, LinearizedOperator, Model};
use crate::weyl::WeylContext;
use crate::{Error, FormalSeries, Grid, Result, C64, I};

pub type Series = FormalSeries<PolyFunctional>;

/// Which pair of kernels realizes `*` and `T`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    /// `i Delta / 2` and `i Delta^D`.
    Free,
    /// `Delta^+` and `Delta^F`.
    Hadamard,
}

impl Scheme {
    pub fn star_kernel(self, model: &Model) -> ContractionKernel {
        match self {
            Scheme::Free => ContractionKernel::star(model),
            Scheme::Hadamard => ContractionKernel::hadamard_star(model),
        }
    }

    pub fn time_kernel(self, model: &Model) -> ContractionKernel {
        match self {
            Scheme::Free => ContractionKernel::dirac_time(model),
            Scheme::Hadamard => ContractionKernel::feynman(model),
        }
    }
}

/// Truncation orders in `hbar` and in the coupling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Caps {
    pub hbar: u32,
    pub coupling: u32,
}

impl Caps {
    pub fn new(hbar: u32, coupling: u32) -> Result<Self> {
        if coupling == 0 {
            return Err(Error::CapMismatch("the coupling cap must be at least 1".into()));
        }
        if hbar < coupling {
            return Err(Error::CapMismatch(format!(
                "hbar cap {hbar} is below the coupling cap {coupling}; kappa^b needs hbar^b"
            )));
        }
        Ok(Caps { hbar, coupling })
    }
}

/// Which product a series is meant to be multiplied with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProductContext {
    Star,
    TimeOrdered,
    Interacting,
}

#[derive(Clone, Debug)]
pub struct SeriesObservable {
    pub series: Series,
    pub context: ProductContext,
}

/// One term `c int f phi^k` of an interaction.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalTerm {
    pub power: u32,
    pub coefficient: f64,
    pub density: Vec<f64>,
}

/// `V(f) = sum_j int A_j f^j` with monomial densities `A_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionSpec {
    pub n: usize,
    pub terms: Vec<LocalTerm>,
    /// Index of the interaction Lagrangian among the terms.
    pub lagrangian_slot: usize,
}

impl InteractionSpec {
    pub fn new(n: usize, terms: Vec<LocalTerm>) -> Result<Self> {
        for t in &terms {
            if t.density.len() != n {
                return Err(Error::Dimension { expected: n, got: t.density.len() });
            }
            if t.power > crate::functional::MAX_DEGREE {
                return Err(Error::DegreeCap { degree: t.power, cap: crate::functional::MAX_DEGREE });
            }
        }
        Ok(InteractionSpec { n, terms, lagrangian_slot: 0 })
    }

    /// `int g phi^4 / 4!`.
    pub fn phi4(g: &[f64]) -> Self {
        Self::monomial(g, 4, 1.0 / 24.0)
    }

    /// `1/2 int g phi^2`.
    pub fn mass(g: &[f64]) -> Self {
        Self::monomial(g, 2, 0.5)
    }

    /// `int f phi`.
    pub fn source(f: &[f64]) -> Self {
        Self::monomial(f, 1, 1.0)
    }

    pub fn monomial(g: &[f64], power: u32, coefficient: f64) -> Self {
        InteractionSpec {
            n: g.len(),
            terms: vec![LocalTerm { power, coefficient, density: g.to_vec() }],
            lagrangian_slot: 0,
        }
    }

    pub fn add(&self, other: &InteractionSpec) -> Result<Self> {
        if other.n != self.n {
            return Err(Error::Dimension { expected: self.n, got: other.n });
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Ok(InteractionSpec { n: self.n, terms, lagrangian_slot: self.lagrangian_slot })
    }

    pub fn functional(&self) -> PolyFunctional {
        self.terms.iter().fold(PolyFunctional::zero(self.n), |acc, t| {
            let d: Vec<f64> = t.density.iter().map(|x| x * t.coefficient).collect();
            acc.add(&PolyFunctional::local(self.n, &d, t.power))
        })
    }

    /// `int h(x) dV/dphi(x)`.
    pub fn smeared_derivative(&self, h: &[f64]) -> Result<PolyFunctional> {
        if h.len() != self.n {
            return Err(Error::Dimension { expected: self.n, got: h.len() });
        }
        Ok(self.terms.iter().filter(|t| t.power > 0).fold(PolyFunctional::zero(self.n), |acc, t| {
            let c = t.coefficient * t.power as f64;
            let d: Vec<f64> = t.density.iter().zip(h).map(|(x, y)| c * x * y).collect();
            acc.add(&PolyFunctional::local(self.n, &d, t.power - 1))
        }))
    }

    /// Densities moved forward by `steps` time points.
    pub fn time_shifted(&self, grid: &Grid, steps: isize) -> Result<Self> {
        let nt = grid.time_len() as isize;
        let mut terms = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            let mut d = vec![0.0; self.n];
            for (idx, &v) in t.density.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let j = (idx as isize % nt) + steps;
                if j < 0 || j >= nt {
                    return Err(Error::OffGrid(format!("density leaves the grid under a shift of {steps}")));
                }
                d[(idx as isize + steps) as usize] = v;
            }
            terms.push(LocalTerm { power: t.power, coefficient: t.coefficient, density: d });
        }
        Ok(InteractionSpec { n: self.n, terms, lagrangian_slot: self.lagrangian_slot })
    }
}

/// Moves every coefficient from `(a, b)` to `(a + da, b + db)`, dropping overflow.
pub fn shift_orders(s: &Series, da: u32, db: u32) -> Result<Series> {
    let zero = PolyFunctional::zero(s.coeff(0, 0).n());
    let mut out = FormalSeries::zero(s.hbar_cap(), s.lambda_cap(), &zero);
    for (a, b, c) in s.iter() {
        if c.is_zero() || a + da > s.hbar_cap() || b + db > s.lambda_cap() {
            continue;
        }
        out.set(a + da, b + db, c.clone())?;
    }
    Ok(out)
}

/// The perturbative machinery for one model, scheme and truncation.
#[derive(Clone, Debug)]
pub struct Engine<'a> {
    pub model: &'a Model,
    pub scheme: Scheme,
    pub caps: Caps,
    star: Product<'a>,
    time: Product<'a>,
}

impl<'a> Engine<'a> {
    pub fn new(model: &'a Model, scheme: Scheme, caps: Caps) -> Self {
        Engine {
            model,
            scheme,
            caps,
            star: Product::new(scheme.star_kernel(model), &model.grid),
            time: Product::new(scheme.time_kernel(model), &model.grid),
        }
    }

    pub fn grid(&self) -> &'a Grid {
        &self.model.grid
    }

    pub fn n(&self) -> usize {
        self.model.grid.len()
    }

    pub fn time_product(&self) -> &Product<'a> {
        &self.time
    }

    /// `F` at order `(0, 0)`.
    pub fn lift(&self, f: &PolyFunctional) -> Series {
        f.to_series(self.caps.hbar, self.caps.coupling)
    }

    pub fn unit(&self) -> Series {
        self.lift(&PolyFunctional::constant(self.n(), C64::new(1.0, 0.0)))
    }

    /// `i kappa V`.
    pub fn exponent(&self, v: &PolyFunctional) -> Result<Series> {
        FormalSeries::monomial(self.caps.hbar, self.caps.coupling, 0, 1, v.scale(I))
    }

    pub fn star(&self, a: &Series, b: &Series) -> Result<Series> {
        self.star.series(a, b)
    }

    pub fn time_ordered(&self, a: &Series, b: &Series) -> Result<Series> {
        self.time.series(a, b)
    }

    pub fn star_inverse(&self, s: &Series) -> Result<Series> {
        self.star.invert(s)
    }

    /// `S(V) = exp_T(i V / hbar)`.
    pub fn formal_smatrix(&self, v: &PolyFunctional) -> Result<SeriesObservable> {
        Ok(SeriesObservable { series: self.time.exp(&self.exponent(v)?)?, context: ProductContext::Star })
    }

    pub fn smatrix(&self, spec: &InteractionSpec) -> Result<Series> {
        Ok(self.formal_smatrix(&spec.functional())?.series)
    }

    /// Exponential built from a modified second-order product.
    pub fn smatrix_with(&self, v: &PolyFunctional, t2: &SecondOrderProduct) -> Result<Series> {
        let grid = self.grid();
        self.exponent(v)?.exp_with(&|x, y, k| t2.graded(x, y, k, grid))
    }

    pub fn bogoliubov_map(&self, v: &PolyFunctional) -> Result<Bogoliubov<'_, 'a>> {
        let s = self.formal_smatrix(v)?.series;
        let s_inv = self.star_inverse(&s)?;
        Ok(Bogoliubov { engine: self, s, s_inv })
    }

    /// `R_V(F)`.
    pub fn bogoliubov(&self, v: &PolyFunctional, f: &PolyFunctional) -> Result<SeriesObservable> {
        let r = self.bogoliubov_map(v)?;
        Ok(SeriesObservable { series: r.apply(&self.lift(f))?, context: ProductContext::Star })
    }

    /// `F *_V G = R_V^{-1}(R_V F * R_V G)`.
    pub fn interacting_product(
        &self,
        v: &PolyFunctional,
        f: &PolyFunctional,
        g: &PolyFunctional,
    ) -> Result<SeriesObservable> {
        let r = self.bogoliubov_map(v)?;
        Ok(SeriesObservable {
            series: r.interacting_product(&self.lift(f), &self.lift(g))?,
            context: ProductContext::Interacting,
        })
    }

    /// `S_g(f) = S(g)^{-1} * S(g + f)`.
    pub fn relative_smatrix(&self, g: &InteractionSpec, f: &InteractionSpec) -> Result<SeriesObservable> {
        let sg = self.smatrix(g)?;
        let sgf = self.smatrix(&g.add(f)?)?;
        Ok(SeriesObservable {
            series: self.star(&self.star_inverse(&sg)?, &sgf)?,
            context: ProductContext::Star,
        })
    }

    /// Deviation of `S(f+g+h)` from `S(f+g) * S(g)^{-1} * S(g+h)`.
    ///
    /// Refuses unless `f` lies nowhere in the past of `h`.
    pub fn causal_factorization_residual(
        &self,
        f: &InteractionSpec,
        g: &InteractionSpec,
        h: &InteractionSpec,
        probes: &[Vec<f64>],
    ) -> Result<f64> {
        match causal_order(&f.functional(), &h.functional(), self.grid()) {
            Ok(CausalOrder::FirstLater) | Ok(CausalOrder::Spacelike) => {}
            _ => return Err(Error::SupportsOverlap),
        }
        let fg = f.add(g)?;
        let gh = g.add(h)?;
        let lhs = self.smatrix(&fg.add(h)?)?;
        let sg_inv = self.star_inverse(&self.smatrix(g)?)?;
        let rhs = self.star(&self.star(&self.smatrix(&fg)?, &sg_inv)?, &self.smatrix(&gh)?)?;
        lhs.probe_distance(&rhs, self.grid(), probes)
    }

    /// Change of `S_g(f)` when `g` is perturbed by `dg`, which must lie in the
    /// future of `f`.
    pub fn retarded_dependence_residual(
        &self,
        g: &InteractionSpec,
        dg: &InteractionSpec,
        f: &InteractionSpec,
        probes: &[Vec<f64>],
    ) -> Result<f64> {
        if causal_order(&dg.functional(), &f.functional(), self.grid())? != CausalOrder::FirstLater {
            return Err(Error::SupportsOverlap);
        }
        let a = self.relative_smatrix(g, f)?.series;
        let b = self.relative_smatrix(&g.add(dg)?, f)?.series;
        a.probe_distance(&b, self.grid(), probes)
    }

    /// Deviation of `S_{g+dg}(f)` from `S_g(dg)^{-1} * S_g(f) * S_g(dg)` for
    /// `dg` in the past of `f`.
    pub fn past_conjugation_residual(
        &self,
        g: &InteractionSpec,
        dg: &InteractionSpec,
        f: &InteractionSpec,
        probes: &[Vec<f64>],
    ) -> Result<f64> {
        if causal_order(&f.functional(), &dg.functional(), self.grid())? != CausalOrder::FirstLater {
            return Err(Error::SupportsOverlap);
        }
        let lhs = self.relative_smatrix(&g.add(dg)?, f)?.series;
        let u = self.relative_smatrix(g, dg)?.series;
        let u_inv = self.star_inverse(&u)?;
        let rhs = self.star(&self.star(&u_inv, &self.relative_smatrix(g, f)?.series)?, &u)?;
        lhs.probe_distance(&rhs, self.grid(), probes)
    }

    /// `S(V)^{-1} * S(V) - 1`.
    pub fn inverse_defect(&self, v: &PolyFunctional, probes: &[Vec<f64>]) -> Result<f64> {
        let s = self.formal_smatrix(v)?.series;
        let prod = self.star(&self.star_inverse(&s)?, &s)?;
        prod.probe_distance(&self.unit(), self.grid(), probes)
    }

    /// `S(V)^* * S(V) - 1` for real `V`.
    pub fn unitarity_defect(&self, v: &PolyFunctional, probes: &[Vec<f64>]) -> Result<f64> {
        let s = self.formal_smatrix(v)?.series;
        let prod = self.star(&s.conj(), &s)?;
        prod.probe_distance(&self.unit(), self.grid(), probes)
    }

    /// Compares `S(V_x)` at `phi_x` with `S(V)` at `phi`, where `_x` denotes a
    /// shift by `steps` grid points; the probes must stay on the grid.
    pub fn time_shift_residual(&self, spec: &InteractionSpec, steps: isize, probes: &[Vec<f64>]) -> Result<f64> {
        let shifted = spec.time_shifted(self.grid(), steps)?;
        let s = self.smatrix(spec)?;
        let sx = self.smatrix(&shifted)?;
        let nt = self.grid().time_len() as isize;
        let mut worst = 0.0f64;
        for phi in probes {
            let phix: Vec<f64> = (0..phi.len() as isize)
                .map(|idx| {
                    let j = idx % nt - steps;
                    if j < 0 || j >= nt {
                        0.0
                    } else {
                        phi[(idx - steps) as usize]
                    }
                })
                .collect();
            let a = s.evaluate(self.grid(), phi);
            let b = sx.evaluate(self.grid(), &phix);
            worst = worst.max(a.max_abs_diff(&b)?);
        }
        Ok(worst)
    }
}

/// `R_V` with `S(V)` and its inverse precomputed.
#[derive(Clone, Debug)]
pub struct Bogoliubov<'e, 'a> {
    engine: &'e Engine<'a>,
    pub s: Series,
    pub s_inv: Series,
}

impl Bogoliubov<'_, '_> {
    /// `S^{-1} * (S ._T X)`.
    pub fn apply(&self, x: &Series) -> Result<Series> {
        self.engine.star(&self.s_inv, &self.engine.time_ordered(&self.s, x)?)
    }

    /// Inverse of `R_V` by fixed-point iteration; exact at the caps because
    /// `R_V - id` raises the coupling order.
    pub fn invert(&self, x: &Series) -> Result<Series> {
        let mut y = x.clone();
        for _ in 0..self.engine.caps.coupling {
            let ry = self.apply(&y)?;
            y = x.sub(&ry.sub(&y)?)?;
        }
        Ok(y)
    }

    pub fn interacting_product(&self, x: &Series, y: &Series) -> Result<Series> {
        self.invert(&self.engine.star(&self.apply(x)?, &self.apply(y)?)?)
    }
}

/// `T_2` with the contraction kernel of an engine, optionally with a
/// correction added to the two-line contraction.
#[derive(Clone, Debug)]
pub struct SecondOrderProduct {
    pub kernel: ContractionKernel,
    /// Kernel `D` with `T~_2(F, G) - T_2(F, G) = hbar^2/2 <D, F'' (x) G''>`.
    pub fish: Option<Arc<[C64]>>,
}

impl SecondOrderProduct {
    pub fn new(kernel: ContractionKernel) -> Self {
        SecondOrderProduct { kernel, fish: None }
    }

    /// Adds `c delta` to the two-line contraction, i.e. `D = c delta_xy / w_x`.
    pub fn with_local_fish(mut self, grid: &Grid, c: &[f64]) -> Result<Self> {
        let n = grid.len();
        if c.len() != n {
            return Err(Error::Dimension { expected: n, got: c.len() });
        }
        let mut d = vec![C64::new(0.0, 0.0); n * n];
        for (i, (ci, wi)) in c.iter().zip(grid.weights()).enumerate() {
            d[i * n + i] = C64::new(ci / wi, 0.0);
        }
        self.fish = Some(d.into());
        Ok(self)
    }

    pub fn with_fish(mut self, d: Arc<[C64]>) -> Self {
        self.fish = Some(d);
        self
    }

    pub fn graded(&self, a: &PolyFunctional, b: &PolyFunctional, budget: u32, grid: &Grid) -> Result<Vec<PolyFunctional>> {
        let mut parts = Product::new(self.kernel.clone(), grid).graded(a, b, budget)?;
        if let Some(d) = &self.fish {
            if budget >= 2 {
                let extra = fish_correction(a, b, d, grid)?;
                parts[2] = parts[2].add(&extra).simplify(grid);
            }
        }
        Ok(parts)
    }
}

/// `1/2 <D, F'' (x) G''>` for a diagonal `D`, built as a two-line
/// contraction with lines `sqrt(D)`.
fn fish_correction(a: &PolyFunctional, b: &PolyFunctional, d: &Arc<[C64]>, grid: &Grid) -> Result<PolyFunctional> {
    let n = grid.len();
    let mut line = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        line[i * n + i] = d[i * n + i].sqrt();
    }
    a.contracted(b, &line.into(), 2)
}

/// Order-2 part of a renormalization map `Z = id + 1/2 Z_2 + ...`.
///
/// `Z_2(F, G) = i hbar <d delta, F'' (x) G''> / 2` with a field-independent
/// density `d`, so `(i/hbar) Z_2 / 2` matches `(i/hbar)^2 (T~_2 - T_2) / 2`.
#[derive(Clone, Debug)]
pub struct RenormalizationMap {
    /// Weight of the local correction at each grid point.
    pub density: Vec<f64>,
}

impl RenormalizationMap {
    pub fn identity(n: usize) -> Self {
        RenormalizationMap { density: vec![0.0; n] }
    }

    pub fn is_identity(&self) -> bool {
        self.density.iter().all(|x| *x == 0.0)
    }

    fn kernel(&self, grid: &Grid) -> Arc<[C64]> {
        let n = grid.len();
        let mut d = vec![C64::new(0.0, 0.0); n * n];
        for (i, (c, w)) in self.density.iter().zip(grid.weights()).enumerate() {
            d[i * n + i] = C64::new(c / w, 0.0);
        }
        d.into()
    }

    /// The `hbar^1` coefficient of `Z_2(F, G)`; lower orders vanish.
    pub fn z2(&self, f: &PolyFunctional, g: &PolyFunctional, grid: &Grid) -> Result<PolyFunctional> {
        Ok(fish_correction(f, g, &self.kernel(grid), grid)?.scale(I).simplify(grid))
    }

    /// `Z(lambda V)` up to second order as a series in `(hbar, lambda)`.
    pub fn apply(&self, v: &PolyFunctional, hbar_cap: u32, grid: &Grid) -> Result<FormalSeries<PolyFunctional>> {
        let mut out = FormalSeries::zero(hbar_cap, 2, &PolyFunctional::zero(v.n()));
        out.set(0, 1, v.clone())?;
        if hbar_cap >= 1 {
            out.set(1, 2, self.z2(v, v, grid)?.scale(C64::new(0.5, 0.0)))?;
        }
        Ok(out)
    }
}

/// `Z` with `Z_2 = T~_2 - T_2`; rejects corrections that are not local.
pub fn extract_z2(t: &SecondOrderProduct, tt: &SecondOrderProduct, grid: &Grid) -> Result<RenormalizationMap> {
    let n = grid.len();
    if t.kernel.n() != n || tt.kernel.n() != n {
        return Err(Error::Dimension { expected: n, got: t.kernel.n().min(tt.kernel.n()) });
    }
    let scale = t.kernel.data().iter().map(|x| x.norm()).fold(0.0, f64::max).max(1.0);
    if t.kernel.data().iter().zip(tt.kernel.data().iter()).any(|(a, b)| (a - b).norm() > 1e-14 * scale) {
        return Err(Error::NotLocal("the one-line contractions differ off the diagonal".into()));
    }
    let zero = || -> Arc<[C64]> { vec![C64::new(0.0, 0.0); n * n].into() };
    let d0 = t.fish.clone().unwrap_or_else(zero);
    let d1 = tt.fish.clone().unwrap_or_else(zero);
    let diff: Vec<C64> = d1.iter().zip(d0.iter()).map(|(a, b)| a - b).collect();
    let big = diff.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let mut density = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let v = diff[i * n + j];
            if i != j && v.norm() > 1e-12 * big.max(1e-300) {
                return Err(Error::NotLocal(format!("correction couples grid points {i} and {j}")));
            }
        }
        let v = diff[i * n + i] * grid.weights()[i];
        if v.im.abs() > 1e-12 * big.max(1e-300) * grid.weights()[i] {
            return Err(Error::Unsupported("complex local correction".into()));
        }
        density[i] = v.re;
    }
    Ok(RenormalizationMap { density })
}

/// `S(Z(V))` with the engine's time-ordered products.
pub fn z_compose(engine: &Engine, z: &RenormalizationMap, v: &PolyFunctional) -> Result<Series> {
    let caps = engine.caps;
    let mut x = engine.exponent(v)?;
    if caps.coupling >= 2 && caps.hbar >= 2 {
        // (i/hbar) (hbar kappa)^2 / 2 Z_2, with Z_2 of order hbar
        let z2 = z.z2(v, v, engine.grid())?.scale(C64::new(0.0, 0.5));
        x.set(2, 2, z2)?;
    }
    engine.time_product().exp(&x)
}

/// Residual of `R_V(Phi_{Ph}) = Phi_{Ph} - lambda R_V(int h V')` at order
/// `lambda`, evaluated at `phi`.
///
/// `ph` is `P h` sampled on the grid. This is the field equation integrated
/// against `h`, which avoids differentiating grid functions. Returns the
/// residual and the size of `int h V'(phi)` for scale.
pub fn field_equation_residual(
    engine: &Engine,
    spec: &InteractionSpec,
    h: &[f64],
    ph: &[f64],
    phi: &[f64],
) -> Result<(f64, f64)> {
    if engine.caps.hbar < 1 {
        return Err(Error::CapMismatch("the field equation needs hbar cap >= 1".into()));
    }
    let n = engine.n();
    let r = engine.bogoliubov_map(&spec.functional())?;
    let field = PolyFunctional::linear(n, ph);
    let force = spec.smeared_derivative(h)?;
    let lhs = r.apply(&engine.lift(&field))?.sub(&engine.lift(&field))?;
    let rhs = shift_orders(&r.apply(&engine.lift(&force))?, 1, 1)?;
    let res = lhs.add(&rhs)?.evaluate(engine.grid(), phi);
    let worst = res.iter().filter(|(_, b, _)| *b <= 1).map(|(_, _, c)| c.norm()).fold(0.0, f64::max);
    Ok((worst, force.evaluate(engine.grid(), phi).norm()))
}

/// Order-`lambda` coefficient of `R_V(Phi_t)` at `phi` for each time index.
pub fn first_order_field(engine: &Engine, v: &PolyFunctional, indices: &[usize], phi: &[f64]) -> Result<Vec<f64>> {
    let r = engine.bogoliubov_map(v)?;
    let grid = engine.grid();
    indices
        .iter()
        .map(|&i| {
            let s = r.apply(&engine.lift(&PolyFunctional::evaluation(grid, i)))?;
            let mut v = C64::new(0.0, 0.0);
            for a in 1..=engine.caps.hbar {
                v += s.coeff(a, 1).evaluate(grid, phi);
            }
            Ok(v.re)
        })
        .collect()
}

/// Deviation of the order-`mu` coefficient of `R_V(Phi_t)`, for
/// `V = mu/2 int g phi^2`, from `d/dmu` of the solution with the same past.
///
/// The perturbed solution is `phi_mu = phi - mu G^R_mu (g phi)` with the
/// Green function of `P + mu g` from the ODE integrator, and the derivative
/// is a central difference in `mu`.
pub fn mass_perturbation_residual(
    engine: &Engine,
    g: &[f64],
    phi: &[f64],
    indices: &[usize],
    mu: f64,
) -> Result<f64> {
    let model = engine.model;
    let grid = &model.grid;
    let spec = InteractionSpec::mass(g);
    let got = first_order_field(engine, &spec.functional(), indices, phi)?;
    let w = grid.weights();
    let src: Vec<f64> = (0..grid.len()).map(|k| w[k] * g[k] * phi[k]).collect();
    let shifted = |m: f64| -> Result<Vec<f64>> {
        let mut op = LinearizedOperator::free(model);
        for (p, gk) in op.potential.iter_mut().zip(g) {
            *p += m * gk;
        }
        let (gr, _) = green_functions(&op, grid)?;
        Ok(indices.iter().map(|&i| phi[i] - m * (0..grid.len()).map(|k| gr[(i, k)] * src[k]).sum::<f64>()).collect())
    };
    let plus = shifted(mu)?;
    let minus = shifted(-mu)?;
    Ok(got
        .iter()
        .zip(plus.iter().zip(&minus))
        .map(|(x, (p, m))| (x - (p - m) / (2.0 * mu)).abs())
        .fold(0.0, f64::max))
}

/// Largest deviation between the Taylor coefficients in `lambda` of the
/// perturbative `S(lambda int f phi)` at `hbar = 1`, evaluated at `phi`, and
/// those of the exact Weyl S-matrix `exp(-i lambda^2 Delta^D(f, f)/2) exp(i lambda F(phi))`.
///
/// In the Hadamard scheme the series is first mapped back by `alpha_H^{-1}`.
pub fn weyl_source_deviation(engine: &Engine, ctx: &WeylContext, f: &[f64], phi: &[f64]) -> Result<f64> {
    let grid = engine.grid();
    let mut s = engine.smatrix(&InteractionSpec::source(f))?;
    if engine.scheme == Scheme::Hadamard {
        s = alpha_series(&s, &ContractionKernel::hadamard(engine.model), -1.0, grid)?;
    }
    let pert = s.evaluate(grid, phi).evaluate_at_hbar(1.0);
    if ctx.hbar != 1.0 {
        return Err(Error::Invalid("the Weyl comparison runs at hbar = 1".into()));
    }
    let phase = match ctx.smatrix(f).terms() {
        [(_, c)] => *c,
        _ => return Err(Error::Invalid("expected a single generator".into())),
    };
    // exp(-i D / 2) = phase, with |D| small enough for the principal branch
    let d = -2.0 * phase.arg();
    let value = PolyFunctional::linear(f.len(), f).evaluate(grid, phi);
    let cap = engine.caps.coupling;
    let mut x = FormalSeries::zero(0, cap, &C64::new(0.0, 0.0));
    x.set(0, 1, I * value)?;
    if cap >= 2 {
        x.set(0, 2, C64::new(0.0, -0.5 * d))?;
    }
    let oracle = x.exp_with(&|a, b, _| Ok(vec![a * b]))?;
    pert.max_abs_diff(&oracle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, cauchy_solution, ModelSpec};
    use crate::sampling::{self, bump, bump_second_derivative};

    fn qm(n: usize, half: f64) -> Model {
        build_model(ModelSpec::qm(1.0, half, n)).unwrap()
    }

    fn bumpd(m: &Model, c: f64, r: f64, amp: f64) -> Vec<f64> {
        sampling::bump_density(&m.grid, 0, c, r).into_iter().map(|x| amp * x).collect()
    }

    fn probes(m: &Model) -> Vec<Vec<f64>> {
        sampling::probes(&m.grid, 5, 3)
    }

    #[test]
    fn caps_validation() {
        assert!(Caps::new(2, 0).is_err());
        assert!(Caps::new(1, 2).is_err());
        assert!(Caps::new(2, 2).is_ok());
    }

    #[test]
    fn first_order_and_vacuum() {
        let m = qm(24, 1.5);
        let e = Engine::new(&m, Scheme::Hadamard, Caps::new(2, 2).unwrap());
        let v = InteractionSpec::phi4(&bumpd(&m, 0.0, 0.8, 1.0)).functional();
        let s = e.formal_smatrix(&v).unwrap().series;
        let p = probes(&m);
        assert!(crate::functional::probe_distance(s.coeff(0, 0), &PolyFunctional::constant(m.grid.len(), 1.0.into()), &m.grid, &p) < 1e-14);
        assert!(crate::functional::probe_distance(s.coeff(0, 1), &v.scale(I), &m.grid, &p) < 1e-14);
        let s0 = e.formal_smatrix(&PolyFunctional::zero(m.grid.len())).unwrap().series;
        assert!(s0.probe_distance(&e.unit(), &m.grid, &p).unwrap() < 1e-15);
    }

    #[test]
    fn second_order_fish_coefficient() {
        let m = qm(20, 1.5);
        let f = bumpd(&m, 0.1, 0.9, 1.0);
        let e = Engine::new(&m, Scheme::Free, Caps::new(2, 2).unwrap());
        let v = PolyFunctional::local(m.grid.len(), &f, 2);
        let s = e.formal_smatrix(&v).unwrap().series;
        let c = s.coeff(2, 2).as_constant(&m.grid).unwrap();
        let w = m.grid.weights();
        let k = ContractionKernel::dirac_time(&m);
        let mut fish = C64::new(0.0, 0.0);
        for a in 0..m.grid.len() {
            for b in 0..m.grid.len() {
                fish += w[a] * w[b] * f[a] * f[b] * k.at(a, b) * k.at(a, b);
            }
        }
        // (i^2 / 2) * (1/2!) <K^2, F'' (x) F''> with F'' = 2 f
        assert!((c - (-fish)).norm() < 1e-12 * fish.norm().max(1.0));
    }

    #[test]
    fn inverse_and_unitarity() {
        let m = qm(24, 1.5);
        let p = probes(&m);
        for scheme in [Scheme::Free, Scheme::Hadamard] {
            let e = Engine::new(&m, scheme, Caps::new(2, 2).unwrap());
            let v = InteractionSpec::phi4(&bumpd(&m, -0.2, 0.7, 0.8))
                .add(&InteractionSpec::mass(&bumpd(&m, 0.3, 0.6, 0.5)))
                .unwrap()
                .functional();
            assert!(e.inverse_defect(&v, &p).unwrap() < 1e-10);
            assert!(e.unitarity_defect(&v, &p).unwrap() < 1e-9);
        }
    }

    #[test]
    fn bogoliubov_order_zero_and_first_order() {
        let m = qm(24, 1.5);
        let n = m.grid.len();
        let e = Engine::new(&m, Scheme::Hadamard, Caps::new(2, 2).unwrap());
        let g = bumpd(&m, 0.0, 0.8, 1.0);
        let v = InteractionSpec::phi4(&g).functional();
        let f = PolyFunctional::local(n, &bumpd(&m, 0.4, 0.5, 1.0), 2);
        let r = e.bogoliubov(&v, &f).unwrap().series;
        let p = probes(&m);
        assert!(crate::functional::probe_distance(r.coeff(0, 0), &f, &m.grid, &p) < 1e-14);
        // order kappa^1 hbar^1: -<Delta^A, V' (x) F'>
        let adv = ContractionKernel::from_real("adv", &m.propagators.advanced, C64::new(-1.0, 0.0));
        let expect = v.contracted(&f, adv.data(), 1).unwrap();
        assert!(crate::functional::probe_distance(r.coeff(1, 1), &expect, &m.grid, &p) < 1e-12);
        assert!(r.coeff(0, 1).is_zero() || crate::functional::probe_distance(r.coeff(0, 1), &PolyFunctional::zero(n), &m.grid, &p) < 1e-13);
    }

    #[test]
    fn bogoliubov_is_linear() {
        let m = qm(20, 1.5);
        let n = m.grid.len();
        let e = Engine::new(&m, Scheme::Free, Caps::new(2, 2).unwrap());
        let v = InteractionSpec::phi4(&bumpd(&m, 0.0, 0.8, 1.0)).functional();
        let f = PolyFunctional::local(n, &bumpd(&m, 0.4, 0.5, 1.0), 2);
        let g = PolyFunctional::linear(n, &bumpd(&m, -0.4, 0.5, 1.0));
        let c = C64::new(0.3, -1.1);
        let lhs = e.bogoliubov(&v, &f.add(&g.scale(c))).unwrap().series;
        let rhs = e
            .bogoliubov(&v, &f)
            .unwrap()
            .series
            .add(&e.bogoliubov(&v, &g).unwrap().series.scale(c))
            .unwrap();
        assert!(lhs.probe_distance(&rhs, &m.grid, &probes(&m)).unwrap() < 1e-12);
    }

    #[test]
    fn interacting_product_basics() {
        let m = qm(20, 1.5);
        let n = m.grid.len();
        let e = Engine::new(&m, Scheme::Hadamard, Caps::new(2, 2).unwrap());
        let v = InteractionSpec::mass(&bumpd(&m, 0.0, 0.8, 1.0)).functional();
        let f = PolyFunctional::linear(n, &bumpd(&m, 0.5, 0.4, 1.0));
        let g = PolyFunctional::local(n, &bumpd(&m, -0.5, 0.4, 1.0), 2);
        let p = probes(&m);
        let one = PolyFunctional::constant(n, 1.0.into());
        let fv = e.interacting_product(&v, &f, &one).unwrap().series;
        assert!(fv.probe_distance(&e.lift(&f), &m.grid, &p).unwrap() < 1e-12);
        let fg = e.interacting_product(&v, &f, &g).unwrap().series;
        let plain = e.star(&e.lift(&f), &e.lift(&g)).unwrap();
        for a in 0..=2 {
            assert!(crate::functional::probe_distance(fg.coeff(a, 0), plain.coeff(a, 0), &m.grid, &p) < 1e-12);
        }
    }

    #[test]
    fn interacting_product_associative() {
        let m = qm(16, 1.5);
        let n = m.grid.len();
        let e = Engine::new(&m, Scheme::Hadamard, Caps::new(2, 2).unwrap());
        let v = InteractionSpec::mass(&bumpd(&m, 0.0, 0.8, 1.0)).functional();
        let r = e.bogoliubov_map(&v).unwrap();
        let mut rng = sampling::rng(8);
        let fs: Vec<Series> = (0..3)
            .map(|k| {
                let d = sampling::random_density(&m.grid, &mut rng, -1.2, 1.2);
                e.lift(&PolyFunctional::local(n, &d, 1 + (k % 2)))
            })
            .collect();
        let left = r.interacting_product(&r.interacting_product(&fs[0], &fs[1]).unwrap(), &fs[2]).unwrap();
        let right = r.interacting_product(&fs[0], &r.interacting_product(&fs[1], &fs[2]).unwrap()).unwrap();
        assert!(left.probe_distance(&right, &m.grid, &probes(&m)).unwrap() < 1e-8);
    }

    #[test]
    fn interacting_commutator_matches_perturbed_propagator() {
        let m = qm(24, 1.5);
        let n = m.grid.len();
        let e = Engine::new(&m, Scheme::Free, Caps::new(2, 1).unwrap());
        let g = bumpd(&m, 0.0, 0.9, 1.0);
        let v = InteractionSpec::mass(&g).functional();
        let f = bumpd(&m, 0.7, 0.5, 1.0);
        let h = bumpd(&m, -0.6, 0.5, 1.0);
        let (ff, hh) = (PolyFunctional::linear(n, &f), PolyFunctional::linear(n, &h));
        let fh = e.interacting_product(&v, &ff, &hh).unwrap().series;
        let hf = e.interacting_product(&v, &hh, &ff).unwrap().series;
        let comm = fh.sub(&hf).unwrap();
        let got = comm.coeff(2, 1).as_constant(&m.grid).unwrap();
        // d/dmu of Delta_mu for P + mu g: -R g R + A g A
        let w = m.grid.weights();
        let p = &m.propagators;
        let gw: Vec<f64> = (0..n).map(|k| g[k] * w[k]).collect();
        let mut dd = 0.0;
        for a in 0..n {
            for b in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += -p.retarded[(a, k)] * gw[k] * p.retarded[(k, b)] + p.advanced[(a, k)] * gw[k] * p.advanced[(k, b)];
                }
                dd += w[a] * f[a] * acc * w[b] * h[b];
            }
        }
        assert!((got - I * dd).norm() < 1e-12, "{got} vs {}", I * dd);
        for a in [0, 1] {
            assert!(comm.coeff(a, 1).as_constant(&m.grid).unwrap_or_default().norm() < 1e-13);
        }
    }

    #[test]
    fn relative_smatrix_trivial_background() {
        let m = qm(20, 1.5);
        let e = Engine::new(&m, Scheme::Hadamard, Caps::new(2, 2).unwrap());
        let f = InteractionSpec::phi4(&bumpd(&m, 0.0, 0.7, 1.0));
        let zero = InteractionSpec::mass(&vec![0.0; m.grid.len()]);
        let s0 = e.relative_smatrix(&zero, &f).unwrap().series;
        assert!(s0.probe_distance(&e.smatrix(&f).unwrap(), &m.grid, &probes(&m)).unwrap() < 1e-13);
    }

    #[test]
    fn factorization_and_support_lemmas() {
        let m = qm(28, 2.0);
        let p = probes(&m);
        let e = Engine::new(&m, Scheme::Hadamard, Caps::new(2, 2).unwrap());
        let f = InteractionSpec::mass(&bumpd(&m, 1.1, 0.5, 1.0));
        let g = InteractionSpec::mass(&bumpd(&m, 0.0, 1.2, 0.7));
        let h = InteractionSpec::mass(&bumpd(&m, -1.1, 0.5, 1.0));
        assert!(e.causal_factorization_residual(&f, &g, &h, &p).unwrap() < 1e-8);
        assert_eq!(e.causal_factorization_residual(&h, &g, &f, &p), Err(Error::SupportsOverlap));
        assert!(e.retarded_dependence_residual(&g, &f, &h, &p).unwrap() < 1e-10);
        assert!(e.past_conjugation_residual(&g, &h, &f, &p).unwrap() < 1e-8);
        // a perturbation in the past does change S_g(f)
        let changed = e.relative_smatrix(&g.add(&h).unwrap(), &f).unwrap().series;
        assert!(changed.probe_distance(&e.relative_smatrix(&g, &f).unwrap().series, &m.grid, &p).unwrap() > 1e-4);
    }

    #[test]
    fn time_shift_equivariance() {
        let m = qm(32, 2.0);
        let e = Engine::new(&m, Scheme::Hadamard, Caps::new(2, 2).unwrap());
        let spec = InteractionSpec::phi4(&bumpd(&m, -0.3, 0.6, 1.0));
        assert!(e.time_shift_residual(&spec, 3, &probes(&m)).unwrap() < 1e-11);
        assert!(matches!(e.time_shift_residual(&spec, 40, &probes(&m)), Err(Error::OffGrid(_))));
    }

    #[test]
    fn renormalization_map_order_two() {
        let m = qm(20, 1.5);
        let n = m.grid.len();
        let e = Engine::new(&m, Scheme::Hadamard, Caps::new(2, 2).unwrap());
        let v = InteractionSpec::phi4(&bumpd(&m, 0.0, 0.8, 1.0)).functional();
        let p = probes(&m);
        let t = SecondOrderProduct::new(Scheme::Hadamard.time_kernel(&m));
        let same = extract_z2(&t, &t, &m.grid).unwrap();
        assert!(same.is_identity());
        let tt = t.clone().with_local_fish(&m.grid, &vec![0.1; n]).unwrap();
        let z = extract_z2(&t, &tt, &m.grid).unwrap();
        let direct = e.smatrix_with(&v, &tt).unwrap();
        let composed = z_compose(&e, &z, &v).unwrap();
        assert!(direct.probe_distance(&composed, &m.grid, &p).unwrap() < 1e-10);
        // the correction really changes the S-matrix
        assert!(direct.probe_distance(&e.formal_smatrix(&v).unwrap().series, &m.grid, &p).unwrap() > 1e-6);

        // additivity on disjoint supports
        let a = PolyFunctional::local(n, &bumpd(&m, -0.8, 0.4, 1.0), 4);
        let b = PolyFunctional::local(n, &bumpd(&m, 0.8, 0.4, 1.0), 3);
        let ab = a.add(&b);
        let lhs = z.z2(&ab, &ab, &m.grid).unwrap();
        let rhs = z.z2(&a, &a, &m.grid).unwrap().add(&z.z2(&b, &b, &m.grid).unwrap());
        assert!(crate::functional::probe_distance(&lhs, &rhs, &m.grid, &p) < 1e-12);
        // field independence: quadratic arguments give a constant
        let q = PolyFunctional::local(n, &bumpd(&m, 0.1, 0.6, 1.0), 2);
        assert!(z.z2(&q, &q, &m.grid).unwrap().as_constant(&m.grid).is_some());
        // Z(0) = 0 and the O(hbar) onset
        let zs = z.apply(&PolyFunctional::zero(n), 2, &m.grid).unwrap();
        assert!(zs.is_zero());
        let zv = z.apply(&v, 2, &m.grid).unwrap();
        assert!(zv.coeff(0, 2).is_zero());
    }

    #[test]
    fn nonlocal_correction_rejected() {
        let m = qm(12, 1.5);
        let n = m.grid.len();
        let t = SecondOrderProduct::new(Scheme::Hadamard.time_kernel(&m));
        let mut d = vec![C64::new(0.0, 0.0); n * n];
        d[3 * n + 4] = C64::new(0.2, 0.0);
        let tt = t.clone().with_fish(d.into());
        assert!(matches!(extract_z2(&t, &tt, &m.grid), Err(Error::NotLocal(_))));
    }

    #[test]
    fn linear_interaction_matches_weyl() {
        let m = qm(40, 1.5);
        let f = bumpd(&m, 0.1, 0.9, 0.8);
        let ctx = WeylContext::new(&m, 1.0);
        let phi = &probes(&m)[0];
        for scheme in [Scheme::Free, Scheme::Hadamard] {
            let e = Engine::new(&m, scheme, Caps::new(4, 4).unwrap());
            assert!(weyl_source_deviation(&e, &ctx, &f, phi).unwrap() < 1e-8);
        }
    }

    #[test]
    fn mass_perturbation_matches_green_function() {
        let m = qm(401, 1.5);
        let e = Engine::new(&m, Scheme::Hadamard, Caps::new(1, 1).unwrap());
        // window 1 on [0.3, 0.9], smooth edges
        let g: Vec<f64> = m
            .grid
            .times()
            .iter()
            .map(|&t| crate::weyl::switch(t - 0.3, 0.1) * crate::weyl::switch(-(t - 0.9), 0.1))
            .collect();
        let phi = cauchy_solution(&m, &[0.7], &[0.4]).unwrap().0;
        let idx: Vec<usize> = [0.0, 0.5, 1.0, 1.4].iter().map(|t| m.grid.nearest_time_index(*t)).collect();
        let res = mass_perturbation_residual(&e, &g, &phi, &idx, 1e-3).unwrap();
        assert!(res < 1e-5, "{res}");
    }

    #[test]
    fn field_equation_weak_form() {
        let m = qm(301, 1.2);
        let e = Engine::new(&m, Scheme::Hadamard, Caps::new(1, 1).unwrap());
        let g = bumpd(&m, 0.1, 0.9, 1.0);
        let spec = InteractionSpec::phi4(&g);
        let (c, r) = (0.0, 0.8);
        let h: Vec<f64> = m.grid.times().iter().map(|&t| bump(t, c, r)).collect();
        let ph: Vec<f64> = m
            .grid
            .times()
            .iter()
            .map(|&t| bump_second_derivative(t, c, r) + bump(t, c, r))
            .collect();
        let phi = cauchy_solution(&m, &[0.9], &[-0.3]).unwrap().0;
        let (res, scale) = field_equation_residual(&e, &spec, &h, &ph, &phi).unwrap();
        assert!(scale > 1e-2);
        // trapezoid error of the kinked retarded propagator, O(step^2)
        assert!(res < 1e-3 * scale, "{res} vs {scale}");
    }
}
