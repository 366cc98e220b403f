//! Deformation quantization on the grid: star products, time-ordered
//! products, the Peierls and canonical brackets and the `alpha` maps.
//!
//! Every product is an exponential of a bidifferential operator,
//! `F *_P G = m o exp(hbar <P, d/dphi (x) d/dphi>)(F (x) G)`, with the
//! contraction kernel `P`:
//!
//! | product            | kernel              |
//! |--------------------|---------------------|
//! | `star`             | `i Delta / 2`       |
//! | `hadamard_star`    | `i Delta / 2 + H`   |
//! | `time_dirac`       | `i Delta^D`         |
//! | `time_feynman`     | `i Delta^D + H`     |

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::functional::network::{self, Tensor};
use crate::functional::{PolyFunctional, Term, Vertex, Factor};
use crate::functional::series::FormalSeries;
use crate::model::{linearize, green_functions, phase_space_map, GeneralizedLagrangian, Grid, Model};
use crate::{Error, Result, C64, I};

/// A dense two-point kernel used to contract functional derivatives.
#[derive(Clone, Debug)]
pub struct ContractionKernel {
    pub label: String,
    n: usize,
    data: Arc<[C64]>,
}

fn flatten<T: Copy>(m: &DMatrix<T>, f: impl Fn(T) -> C64) -> Arc<[C64]> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            out.push(f(m[(a, b)]));
        }
    }
    out.into()
}

impl ContractionKernel {
    pub fn from_real(label: &str, m: &DMatrix<f64>, scale: C64) -> Self {
        ContractionKernel { label: label.into(), n: m.nrows(), data: flatten(m, |x| scale * x) }
    }

    pub fn from_complex(label: &str, m: &DMatrix<C64>) -> Self {
        ContractionKernel { label: label.into(), n: m.nrows(), data: flatten(m, |x| x) }
    }

    /// `i Delta / 2`.
    pub fn star(model: &Model) -> Self {
        Self::from_real("i Delta/2", &model.propagators.causal, 0.5 * I)
    }

    /// `Delta^+ = i Delta / 2 + H`.
    pub fn hadamard_star(model: &Model) -> Self {
        Self::from_complex("Delta+", &model.propagators.positive())
    }

    /// `i Delta^D`.
    pub fn dirac_time(model: &Model) -> Self {
        Self::from_real("i Delta^D", &model.propagators.dirac, I)
    }

    /// `Delta^F = i Delta^D + H`.
    pub fn feynman(model: &Model) -> Self {
        Self::from_complex("Delta^F", &model.propagators.feynman())
    }

    pub fn hadamard(model: &Model) -> Self {
        Self::from_real("H", &model.propagators.hadamard, C64::new(1.0, 0.0))
    }

    pub fn causal(model: &Model) -> Self {
        Self::from_real("Delta", &model.propagators.causal, C64::new(1.0, 0.0))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &Arc<[C64]> {
        &self.data
    }

    pub fn at(&self, a: usize, b: usize) -> C64 {
        self.data[a * self.n + b]
    }

    /// Weighted bilinear pairing `sum w_a w_b f(a) K(a, b) g(b)`.
    pub fn pair(&self, grid: &Grid, f: &[f64], g: &[f64]) -> C64 {
        let w = grid.weights();
        let mut acc = C64::new(0.0, 0.0);
        for a in 0..self.n {
            if f[a] == 0.0 {
                continue;
            }
            let mut row = C64::new(0.0, 0.0);
            for b in 0..self.n {
                row += self.data[a * self.n + b] * (w[b] * g[b]);
            }
            acc += row * (w[a] * f[a]);
        }
        acc
    }
}

/// Coefficients of `hbar^0 .. hbar^cap` of `F *_P G`.
pub fn exp_bidiff_product(
    f: &PolyFunctional,
    g: &PolyFunctional,
    kernel: &ContractionKernel,
    cap: u32,
) -> Result<Vec<PolyFunctional>> {
    for x in [f, g] {
        if x.n() != kernel.n {
            return Err(Error::Dimension { expected: kernel.n, got: x.n() });
        }
    }
    (0..=cap).map(|k| f.contracted(g, &kernel.data, k)).collect()
}

/// A product together with the grid used to simplify its results.
#[derive(Clone, Debug)]
pub struct Product<'a> {
    pub kernel: ContractionKernel,
    pub grid: &'a Grid,
}

impl<'a> Product<'a> {
    pub fn new(kernel: ContractionKernel, grid: &'a Grid) -> Self {
        Product { kernel, grid }
    }

    /// Graded product of two coefficients, `hbar^0 .. hbar^budget`.
    pub fn graded(&self, a: &PolyFunctional, b: &PolyFunctional, budget: u32) -> Result<Vec<PolyFunctional>> {
        let parts = exp_bidiff_product(a, b, &self.kernel, budget)?;
        Ok(parts.into_iter().map(|p| p.simplify(self.grid)).collect())
    }

    pub fn series(
        &self,
        a: &FormalSeries<PolyFunctional>,
        b: &FormalSeries<PolyFunctional>,
    ) -> Result<FormalSeries<PolyFunctional>> {
        a.product_with(b, &|x, y, k| self.graded(x, y, k))
    }

    /// Product of two plain functionals as an `hbar` series.
    pub fn apply(&self, a: &PolyFunctional, b: &PolyFunctional, hbar_cap: u32) -> Result<FormalSeries<PolyFunctional>> {
        let parts = self.graded(a, b, hbar_cap)?;
        let mut s = FormalSeries::zero(hbar_cap, 0, &a.zero_like_functional());
        for (k, p) in parts.into_iter().enumerate() {
            s.set(k as u32, 0, p)?;
        }
        Ok(s)
    }

    pub fn exp(&self, x: &FormalSeries<PolyFunctional>) -> Result<FormalSeries<PolyFunctional>> {
        x.exp_with(&|p, q, k| self.graded(p, q, k))
    }

    pub fn invert(&self, x: &FormalSeries<PolyFunctional>) -> Result<FormalSeries<PolyFunctional>> {
        x.invert_with(&|p, q, k| self.graded(p, q, k), &|c| c.as_constant(self.grid))
    }
}

impl PolyFunctional {
    fn zero_like_functional(&self) -> PolyFunctional {
        PolyFunctional::zero(self.n())
    }

    /// Lifts a functional to the series with the functional at order `(0, 0)`.
    pub fn to_series(&self, hbar_cap: u32, lambda_cap: u32) -> FormalSeries<PolyFunctional> {
        FormalSeries::constant(hbar_cap, lambda_cap, self.clone())
    }
}

pub fn star_product(f: &PolyFunctional, g: &PolyFunctional, model: &Model, cap: u32) -> Result<FormalSeries<PolyFunctional>> {
    Product::new(ContractionKernel::star(model), &model.grid).apply(f, g, cap)
}

pub fn hadamard_star_product(f: &PolyFunctional, g: &PolyFunctional, model: &Model, cap: u32) -> Result<FormalSeries<PolyFunctional>> {
    Product::new(ContractionKernel::hadamard_star(model), &model.grid).apply(f, g, cap)
}

pub fn time_ordered_dirac(f: &PolyFunctional, g: &PolyFunctional, model: &Model, cap: u32) -> Result<FormalSeries<PolyFunctional>> {
    Product::new(ContractionKernel::dirac_time(model), &model.grid).apply(f, g, cap)
}

pub fn time_ordered_feynman(f: &PolyFunctional, g: &PolyFunctional, model: &Model, cap: u32) -> Result<FormalSeries<PolyFunctional>> {
    Product::new(ContractionKernel::feynman(model), &model.grid).apply(f, g, cap)
}

/// `alpha_K = exp(sign * hbar/2 <K, d^2/dphi^2>)`: coefficients of `hbar^0 .. hbar^cap`.
pub fn alpha_transform(f: &PolyFunctional, kernel: &ContractionKernel, sign: f64, cap: u32) -> Vec<PolyFunctional> {
    (0..=cap)
        .map(|k| f.self_contracted(&kernel.data, k).scale(C64::new(sign.powi(k as i32), 0.0)))
        .collect()
}

/// Applies `alpha_K` to every coefficient of a series.
pub fn alpha_series(
    s: &FormalSeries<PolyFunctional>,
    kernel: &ContractionKernel,
    sign: f64,
    grid: &Grid,
) -> Result<FormalSeries<PolyFunctional>> {
    let zero = PolyFunctional::zero(kernel.n);
    let mut out = FormalSeries::zero(s.hbar_cap(), s.lambda_cap(), &zero);
    for (a, b, c) in s.iter() {
        if c.is_zero() {
            continue;
        }
        for (k, part) in alpha_transform(c, kernel, sign, s.hbar_cap() - a).into_iter().enumerate() {
            let ord = a + k as u32;
            let cur = out.coeff(ord, b).add(&part.simplify(grid));
            out.set(ord, b, cur)?;
        }
    }
    Ok(out)
}

/// `{F, G} = <F^(1), Delta G^(1)>` for quadratic theories.
pub fn peierls_bracket(f: &PolyFunctional, g: &PolyFunctional, model: &Model) -> Result<PolyFunctional> {
    Ok(f.contracted(g, ContractionKernel::causal(model).data(), 1)?.simplify(&model.grid))
}

/// Peierls bracket at a configuration for a general action, using the
/// causal propagator of the linearized field equation.
pub fn peierls_bracket_at(
    f: &PolyFunctional,
    g: &PolyFunctional,
    model: &Model,
    lagrangian: &GeneralizedLagrangian,
    phi: Option<&[f64]>,
) -> Result<C64> {
    let grid = &model.grid;
    let zero = vec![0.0; grid.len()];
    let phi = match phi {
        Some(p) => p,
        None if lagrangian.is_quadratic() => &zero,
        None => return Err(Error::MissingConfiguration),
    };
    let op = linearize(model, lagrangian, phi)?;
    let (gr, ga) = green_functions(&op, grid)?;
    let delta = gr - ga;
    let f1 = f.derivative_kernel(grid, phi, 1)?;
    let g1 = g.derivative_kernel(grid, phi, 1)?;
    let w = grid.weights();
    let n = grid.len();
    let mut acc = C64::new(0.0, 0.0);
    for a in 0..n {
        let mut row = C64::new(0.0, 0.0);
        for b in 0..n {
            row += delta[(a, b)] * w[b] * g1[b];
        }
        acc += w[a] * f1[a] * row;
    }
    Ok(acc)
}

/// Phase-space coordinates `(phi0_1..phi0_M, pi0_1..pi0_M)` as a grid with unit weights.
pub fn phase_space_grid(model: &Model) -> Grid {
    Grid::with_weights(vec![1.0; 2 * model.grid.mode_count()])
}

/// Pulls a functional back along the free solution map `(phi0, pi0) -> phi`.
pub fn pullback_to_phase_space(f: &PolyFunctional, model: &Model) -> Result<PolyFunctional> {
    let grid = &model.grid;
    let b = phase_space_map(model);
    let n = grid.len();
    let p = b.ncols();
    let bflat: Vec<C64> = (0..n).flat_map(|x| (0..p).map(move |j| (x, j))).map(|(x, j)| C64::new(b[(x, j)], 0.0)).collect();
    let w = grid.weights();
    let ones: Arc<[C64]> = vec![C64::new(1.0, 0.0); p].into();
    let mut terms = Vec::new();
    for t in f.terms() {
        let nv = t.vertices.len();
        let legs: u32 = t.degree();
        let mut dims = vec![n; nv];
        let mut tensors: Vec<Tensor> = t
            .vertices
            .iter()
            .enumerate()
            .map(|(v, vert)| Tensor::new(vec![v], vert.density.iter().zip(w).map(|(g, wx)| g * *wx).collect()))
            .collect();
        tensors.extend(t.factors.iter().map(|fa| Tensor::new(fa.vars.clone(), fa.data.to_vec())));
        let mut open = Vec::new();
        for (v, vert) in t.vertices.iter().enumerate() {
            for _ in 0..vert.power {
                let s = dims.len();
                dims.push(p);
                open.push(s);
                tensors.push(Tensor::new(vec![v, s], bflat.clone()));
            }
        }
        let data = network::contract(tensors, &dims, &open);
        if legs == 0 {
            terms.push(Term { coeff: t.coeff * data[0], vertices: Vec::new(), factors: Vec::new() });
        } else {
            terms.push(Term {
                coeff: t.coeff,
                vertices: (0..legs).map(|_| Vertex { density: ones.clone(), power: 1 }).collect(),
                factors: vec![Factor { vars: (0..legs as usize).collect(), data: data.into() }],
            });
        }
    }
    Ok(PolyFunctional::from_terms(p, terms).merged())
}

/// `{F, G}_can = sum_i dF/dphi0_i dG/dpi0_i - dF/dpi0_i dG/dphi0_i` on phase space.
pub fn canonical_bracket(f: &PolyFunctional, g: &PolyFunctional, phase_grid: &Grid) -> Result<PolyFunctional> {
    let p = phase_grid.len();
    if p % 2 != 0 || f.n() != p || g.n() != p {
        return Err(Error::Dimension { expected: p, got: f.n() });
    }
    let m = p / 2;
    let mut omega = vec![C64::new(0.0, 0.0); p * p];
    for i in 0..m {
        omega[i * p + m + i] = C64::new(1.0, 0.0);
        omega[(m + i) * p + i] = C64::new(-1.0, 0.0);
    }
    Ok(f.contracted(g, &omega.into(), 1)?.simplify(phase_grid))
}

/// Relative placement of two supports in time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CausalOrder {
    /// Every point of the first support is at or after every point of the second.
    FirstLater,
    SecondLater,
    /// Disjoint mode content: all free propagators between them vanish.
    Spacelike,
}

/// Time hull and mode mask of a support mask.
pub fn support_extent(mask: &[bool], grid: &Grid) -> Option<(usize, usize, Vec<bool>)> {
    let nt = grid.time_len();
    let mut lo = usize::MAX;
    let mut hi = 0;
    let mut modes = vec![false; grid.mode_count()];
    for (idx, &m) in mask.iter().enumerate() {
        if m {
            let i = idx % nt;
            lo = lo.min(i);
            hi = hi.max(i);
            modes[idx / nt] = true;
        }
    }
    if lo == usize::MAX {
        None
    } else {
        Some((lo, hi, modes))
    }
}

pub fn causal_order(f: &PolyFunctional, g: &PolyFunctional, grid: &Grid) -> Result<CausalOrder> {
    let (Some(a), Some(b)) = (support_extent(&f.support(), grid), support_extent(&g.support(), grid)) else {
        return Ok(CausalOrder::Spacelike);
    };
    if a.2.iter().zip(&b.2).all(|(x, y)| !(x & y)) {
        return Ok(CausalOrder::Spacelike);
    }
    if a.0 >= b.1 {
        Ok(CausalOrder::FirstLater)
    } else if b.0 >= a.1 {
        Ok(CausalOrder::SecondLater)
    } else {
        Err(Error::SupportsOverlap)
    }
}

/// Largest probe deviation between `T(F, G)` and the star product in causal order.
pub fn causal_ordering_check(
    f: &PolyFunctional,
    g: &PolyFunctional,
    model: &Model,
    cap: u32,
    probes: &[Vec<f64>],
) -> Result<f64> {
    let order = causal_order(f, g, &model.grid)?;
    let t = time_ordered_dirac(f, g, model, cap)?;
    let fg = star_product(f, g, model, cap)?;
    let gf = star_product(g, f, model, cap)?;
    let grid = &model.grid;
    Ok(match order {
        CausalOrder::FirstLater => t.probe_distance(&fg, grid, probes)?,
        CausalOrder::SecondLater => t.probe_distance(&gf, grid, probes)?,
        CausalOrder::Spacelike => t.probe_distance(&fg, grid, probes)?.max(t.probe_distance(&gf, grid, probes)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, ModelSpec};
    use crate::sampling;

    fn qm(n: usize) -> Model {
        build_model(ModelSpec::qm(1.0, 2.0, n)).unwrap()
    }

    #[test]
    fn linear_star_commutator() {
        let m = qm(33);
        let n = m.grid.len();
        let f = sampling::bump_density(&m.grid, 0, -0.5, 0.6);
        let g = sampling::bump_density(&m.grid, 0, 0.4, 0.7);
        let ff = PolyFunctional::linear(n, &f);
        let gg = PolyFunctional::linear(n, &g);
        let fg = star_product(&ff, &gg, &m, 2).unwrap();
        let gf = star_product(&gg, &ff, &m, 2).unwrap();
        let comm = fg.sub(&gf).unwrap();
        let c = comm.coeff(1, 0).as_constant(&m.grid).unwrap();
        let delta = ContractionKernel::causal(&m).pair(&m.grid, &f, &g);
        assert!((c - I * delta).norm() < 1e-13);
        assert!(comm.coeff(2, 0).is_zero());
    }

    #[test]
    fn star_quadratic_matches_wick() {
        let m = qm(21);
        let g = &m.grid;
        let n = g.len();
        let f = sampling::bump_density(g, 0, 0.0, 1.0);
        let q = PolyFunctional::local(n, &f, 2);
        let s = star_product(&q, &q, &m, 2).unwrap();
        let k = ContractionKernel::star(&m);
        let mut expect = C64::new(0.0, 0.0);
        let w = g.weights();
        for a in 0..n {
            for b in 0..n {
                expect += w[a] * w[b] * f[a] * f[b] * k.at(a, b) * k.at(a, b);
            }
        }
        let got = s.coeff(2, 0).as_constant(g).unwrap();
        assert!((got - 2.0 * expect).norm() < 1e-13);
    }

    #[test]
    fn alpha_on_quadratic() {
        let m = qm(21);
        let g = &m.grid;
        let f = sampling::bump_density(g, 0, 0.0, 1.0);
        let q = PolyFunctional::local(g.len(), &f, 2);
        let parts = alpha_transform(&q, &ContractionKernel::hadamard(&m), 1.0, 2);
        let c = parts[1].as_constant(g).unwrap();
        let expect: f64 = (0..g.len()).map(|i| g.weights()[i] * f[i] * m.propagators.hadamard[(i, i)]).sum();
        assert!((c.re - expect).abs() < 1e-14);
        assert!(parts[2].is_zero());
    }

    #[test]
    fn causal_order_detects_overlap() {
        let m = qm(33);
        let n = m.grid.len();
        let a = PolyFunctional::local(n, &sampling::bump_density(&m.grid, 0, -0.5, 0.6), 2);
        let b = PolyFunctional::local(n, &sampling::bump_density(&m.grid, 0, 0.0, 0.6), 2);
        assert_eq!(causal_order(&a, &b, &m.grid), Err(Error::SupportsOverlap));
    }

    #[test]
    fn peierls_needs_background_for_interacting_actions() {
        let m = qm(17);
        let n = m.grid.len();
        let f = PolyFunctional::evaluation(&m.grid, 3);
        let l = GeneralizedLagrangian::phi4(1.0, 1.0);
        assert_eq!(peierls_bracket_at(&f, &f, &m, &l, None), Err(Error::MissingConfiguration));
        let z = vec![0.0; n];
        assert!(peierls_bracket_at(&f, &f, &m, &l, Some(&z)).is_ok());
    }
}
