//! The Weyl algebra of the free field, with phases computed exactly.
//!
//! `W(f)` stands for `exp(i int f phi)`. Products follow
//! `W(f) W(g) = exp(-i hbar/2 Delta(f, g)) W(f + g)`, so finite linear
//! combinations of generators form a closed algebra. The same module holds
//! the exact S-matrix of a linear interaction, quasi-free states and the
//! complex structure of a quasi-free state.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::model::{LinearizedOperator, Model};
use crate::{Error, Result, C64, I};

/// Bilinear forms of the free theory with the grid weights folded in.
#[derive(Clone, Debug)]
pub struct WeylContext {
    pub hbar: f64,
    nt: usize,
    causal: DMatrix<f64>,
    dirac: DMatrix<f64>,
    advanced: DMatrix<f64>,
    hadamard: DMatrix<f64>,
}

fn weighted(m: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |a, b| w[a] * m[(a, b)] * w[b])
}

fn form(m: &DMatrix<f64>, f: &[f64], g: &[f64]) -> f64 {
    let gv = DVector::from_column_slice(g);
    let mg = m * gv;
    f.iter().zip(mg.iter()).map(|(a, b)| a * b).sum()
}

impl WeylContext {
    pub fn new(model: &Model, hbar: f64) -> Self {
        let w = model.grid.weights();
        let p = &model.propagators;
        WeylContext {
            hbar,
            nt: model.grid.time_len(),
            causal: weighted(&p.causal, w),
            dirac: weighted(&p.dirac, w),
            advanced: weighted(&p.advanced, w),
            hadamard: weighted(&p.hadamard, w),
        }
    }

    /// Replaces the symmetric two-point part, e.g. by a thermal one.
    pub fn with_hadamard(mut self, model: &Model, h: &DMatrix<f64>) -> Self {
        self.hadamard = weighted(h, model.grid.weights());
        self
    }

    pub fn n(&self) -> usize {
        self.causal.nrows()
    }

    pub fn delta(&self, f: &[f64], g: &[f64]) -> f64 {
        form(&self.causal, f, g)
    }

    pub fn dirac(&self, f: &[f64], g: &[f64]) -> f64 {
        form(&self.dirac, f, g)
    }

    pub fn advanced(&self, f: &[f64], g: &[f64]) -> f64 {
        form(&self.advanced, f, g)
    }

    pub fn hadamard(&self, f: &[f64], g: &[f64]) -> f64 {
        form(&self.hadamard, f, g)
    }

    pub fn generator(&self, f: &[f64]) -> WeylElement {
        WeylElement::generator(f, C64::new(1.0, 0.0))
    }

    pub fn product(&self, a: &WeylElement, b: &WeylElement) -> WeylElement {
        let mut out = WeylElement::zero();
        for (f, cf) in &a.terms {
            for (g, cg) in &b.terms {
                let phase = (-0.5 * I * self.hbar * self.delta(f, g)).exp();
                let s: Vec<f64> = f.iter().zip(g).map(|(x, y)| x + y).collect();
                out.push(s, cf * cg * phase);
            }
        }
        out
    }

    /// Inverse of a single generator with nonzero coefficient.
    pub fn inverse(&self, a: &WeylElement) -> Result<WeylElement> {
        if a.terms.len() != 1 || a.terms[0].1.norm() == 0.0 {
            return Err(Error::NotInvertible);
        }
        let (f, c) = &a.terms[0];
        Ok(WeylElement::generator(&f.iter().map(|x| -x).collect::<Vec<_>>(), 1.0 / c))
    }

    /// Quasi-free state `omega(W(f)) = exp(-hbar/2 H(f, f))`.
    pub fn state(&self, a: &WeylElement) -> C64 {
        a.terms.iter().map(|(f, c)| c * (-0.5 * self.hbar * self.hadamard(f, f)).exp()).sum()
    }

    /// Gram matrix `M_ij = omega(W(f_i)^* W(f_j))`.
    pub fn gram(&self, funcs: &[Vec<f64>]) -> DMatrix<C64> {
        let k = funcs.len();
        DMatrix::from_fn(k, k, |i, j| {
            let a = self.generator(&funcs[i]).involution();
            self.state(&self.product(&a, &self.generator(&funcs[j])))
        })
    }

    /// `S(f) = exp(-i/(2 hbar) Delta^D(f, f)) W(f / hbar)`: the time-ordered
    /// exponential of the linear interaction `int f phi`.
    pub fn smatrix(&self, f: &[f64]) -> WeylElement {
        let phase = (-0.5 * I / self.hbar * self.dirac(f, f)).exp();
        WeylElement::generator(&f.iter().map(|x| x / self.hbar).collect::<Vec<_>>(), phase)
    }

    /// `S_g(f) = S(g)^{-1} S(g + f)`.
    pub fn relative_smatrix(&self, g: &[f64], f: &[f64]) -> Result<WeylElement> {
        let gf: Vec<f64> = g.iter().zip(f).map(|(a, b)| a + b).collect();
        Ok(self.product(&self.inverse(&self.smatrix(g))?, &self.smatrix(&gf)))
    }

    /// `U X U^{-1}` for an invertible generator `U`.
    pub fn conjugate(&self, u: &WeylElement, x: &WeylElement) -> Result<WeylElement> {
        Ok(self.product(&self.product(u, x), &self.inverse(u)?))
    }

    /// Shifts all generators by `steps` time-grid points.
    pub fn time_shift(&self, a: &WeylElement, steps: isize) -> Result<WeylElement> {
        let nt = self.nt as isize;
        let mut out = WeylElement::zero();
        for (f, c) in &a.terms {
            let mut g = vec![0.0; f.len()];
            for (idx, &v) in f.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let i = idx as isize % nt;
                let j = i + steps;
                if j < 0 || j >= nt {
                    return Err(Error::OffGrid(format!("generator leaves the grid under a shift of {steps}")));
                }
                g[(idx as isize + steps) as usize] = v;
            }
            out.push(g, *c);
        }
        Ok(out)
    }
}

/// A finite linear combination `sum c_f W(f)`.
#[derive(Clone, Debug, Default)]
pub struct WeylElement {
    terms: Vec<(Vec<f64>, C64)>,
    index: HashMap<Vec<i64>, usize>,
}

fn density_key(f: &[f64]) -> Vec<i64> {
    f.iter().map(|x| (x * 1e12).round() as i64).collect()
}

impl WeylElement {
    pub fn zero() -> Self {
        WeylElement::default()
    }

    pub fn generator(f: &[f64], c: C64) -> Self {
        let mut e = Self::zero();
        e.push(f.to_vec(), c);
        e
    }

    fn push(&mut self, f: Vec<f64>, c: C64) {
        let k = density_key(&f);
        match self.index.get(&k) {
            Some(&i) => self.terms[i].1 += c,
            None => {
                self.index.insert(k, self.terms.len());
                self.terms.push((f, c));
            }
        }
    }

    pub fn terms(&self) -> &[(Vec<f64>, C64)] {
        &self.terms
    }

    pub fn add(&self, other: &WeylElement) -> WeylElement {
        let mut out = self.clone();
        for (f, c) in &other.terms {
            out.push(f.clone(), *c);
        }
        out
    }

    pub fn scale(&self, c: C64) -> WeylElement {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.1 *= c;
        }
        out
    }

    /// `(c W(f))^* = conj(c) W(-f)`.
    pub fn involution(&self) -> WeylElement {
        let mut out = Self::zero();
        for (f, c) in &self.terms {
            out.push(f.iter().map(|x| -x).collect(), c.conj());
        }
        out
    }

    /// Coefficient of the generator `W(f)`, matched up to `tol` in max norm.
    pub fn coefficient_of(&self, f: &[f64], tol: f64) -> C64 {
        self.terms
            .iter()
            .filter(|(g, _)| g.iter().zip(f).all(|(a, b)| (a - b).abs() <= tol))
            .map(|(_, c)| *c)
            .sum()
    }

    /// Largest coefficient deviation after matching generators up to `tol`.
    pub fn distance(&self, other: &WeylElement, tol: f64) -> f64 {
        let mut worst = 0.0f64;
        for (f, _) in self.terms.iter().chain(&other.terms) {
            let d = self.coefficient_of(f, tol) - other.coefficient_of(f, tol);
            worst = worst.max(d.norm());
        }
        worst
    }
}

/// `RHS / LHS` of `S(f+g+h) = S(f+g) S(g)^{-1} S(g+h)`; equals 1 when `f` is later than `h`.
pub fn factorization_ratio(ctx: &WeylContext, f: &[f64], g: &[f64], h: &[f64]) -> Result<C64> {
    let sum = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + y).collect() };
    let fg = sum(f, g);
    let gh = sum(g, h);
    let fgh = sum(&fg, h);
    let lhs = ctx.smatrix(&fgh);
    let rhs = ctx.product(&ctx.product(&ctx.smatrix(&fg), &ctx.inverse(&ctx.smatrix(g))?), &ctx.smatrix(&gh));
    let target: Vec<f64> = fgh.iter().map(|x| x / ctx.hbar).collect();
    let l = lhs.coefficient_of(&target, 1e-9);
    let r = rhs.coefficient_of(&target, 1e-9);
    Ok(r / l)
}

/// Smooth switch function: 0 for `s <= -2 eps`, 1 for `s >= -eps`.
pub fn switch(s: f64, eps: f64) -> f64 {
    let u = (s + 2.0 * eps) / eps;
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / u).exp();
        let b = (-1.0 / (1.0 - u)).exp();
        a / (a + b)
    }
}

/// Derivative of [`switch`] in `s`.
pub fn switch_derivative(s: f64, eps: f64) -> f64 {
    let u = (s + 2.0 * eps) / eps;
    if u <= 0.0 || u >= 1.0 {
        return 0.0;
    }
    let a = (-1.0 / u).exp();
    let b = (-1.0 / (1.0 - u)).exp();
    let da = a / (u * u);
    let db = -b / ((1.0 - u) * (1.0 - u));
    (da * (a + b) - a * (da + db)) / ((a + b) * (a + b)) / eps
}

/// Interaction switched on by `h chi`, with `chi` a switch in time.
#[derive(Clone, Debug)]
pub struct Cocycle<'a> {
    pub ctx: &'a WeylContext,
    pub model: &'a Model,
    pub coupling: f64,
    pub eps: f64,
    /// Spatial profile per mode slot (one entry on `Qm`).
    pub profile: Vec<f64>,
}

impl<'a> Cocycle<'a> {
    /// `h chi_t` on the grid with `chi_t(s) = chi(s - t)`.
    pub fn switched(&self, t: f64) -> Vec<f64> {
        let g = &self.model.grid;
        (0..g.len())
            .map(|idx| {
                let (mode, _) = g.split(idx);
                self.coupling * self.profile[mode] * switch(g.time_of(idx) - t, self.eps)
            })
            .collect()
    }

    /// `U_t = S_{h chi}(h (chi_t - chi))`.
    pub fn unitary(&self, t: f64) -> Result<WeylElement> {
        let base = self.switched(0.0);
        let shifted = self.switched(t);
        let diff: Vec<f64> = shifted.iter().zip(&base).map(|(a, b)| a - b).collect();
        self.ctx.relative_smatrix(&base, &diff)
    }

    /// Residual of `U_{t+s} = U_t alpha_t(U_s)` for shifts by whole grid steps.
    pub fn residual(&self, t_steps: isize, s_steps: isize) -> Result<f64> {
        let h = self.model.grid.step();
        let ut = self.unitary(t_steps as f64 * h)?;
        let us = self.unitary(s_steps as f64 * h)?;
        let uts = self.unitary((t_steps + s_steps) as f64 * h)?;
        let rhs = self.ctx.product(&ut, &self.ctx.time_shift(&us, t_steps)?);
        Ok(uts.distance(&rhs, 1e-9))
    }

    /// `H_I = (hbar / i) dU_t/dt` at `t = 0` by central differences:
    /// returns the density of its linear part and its constant.
    pub fn interaction_hamiltonian(&self, dt: f64) -> Result<(Vec<f64>, f64)> {
        let up = self.unitary(dt)?;
        let um = self.unitary(-dt)?;
        let (fp, cp) = single(&up)?;
        let (fm, cm) = single(&um)?;
        let hbar = self.ctx.hbar;
        let density = fp.iter().zip(&fm).map(|(a, b)| hbar * (a - b) / (2.0 * dt)).collect();
        let c = -I * hbar * (cp - cm) / (2.0 * dt);
        Ok((density, c.re))
    }

    /// `-h chi'` sampled on the grid.
    pub fn expected_linear_part(&self) -> Vec<f64> {
        let g = &self.model.grid;
        (0..g.len())
            .map(|idx| {
                let (mode, _) = g.split(idx);
                -self.coupling * self.profile[mode] * switch_derivative(g.time_of(idx), self.eps)
            })
            .collect()
    }
}

fn single(e: &WeylElement) -> Result<(Vec<f64>, C64)> {
    match e.terms() {
        [(f, c)] => Ok((f.clone(), *c)),
        _ => Err(Error::Invalid("expected a single generator".into())),
    }
}

/// Complex structure of a quasi-free state on a finite-dimensional phase space.
#[derive(Clone, Debug)]
pub struct ComplexStructure {
    /// `J` in the original basis.
    pub j: DMatrix<f64>,
    /// `J` in coordinates orthonormal for `H`.
    pub j_orthonormal: DMatrix<f64>,
    /// `A` with `Delta(f, g) = 2 (f, A g)_H`, in orthonormal coordinates.
    pub a_orthonormal: DMatrix<f64>,
    pub a_norm: f64,
    /// `|| Delta J - 2 H ||` in orthonormal coordinates.
    pub purity_defect: f64,
    pub pure: bool,
}

fn sym_fn(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let e = SymmetricEigen::new(m.clone());
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(f));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

/// Polar decomposition `A = -J |A|` from Gram matrices of `H` and `Delta`.
pub fn complex_structure(h: &DMatrix<f64>, delta: &DMatrix<f64>, tol: f64) -> Result<ComplexStructure> {
    let k = h.nrows();
    if h.ncols() != k || delta.nrows() != k || delta.ncols() != k {
        return Err(Error::Dimension { expected: k, got: delta.nrows() });
    }
    let eig = SymmetricEigen::new(h.clone());
    let min = eig.eigenvalues.min();
    if !(min > 0.0) {
        return Err(Error::NotPositive(format!("H has smallest eigenvalue {min:e}")));
    }
    let h_half = sym_fn(h, f64::sqrt);
    let h_inv_half = sym_fn(h, |x| 1.0 / x.sqrt());
    let d_on = &h_inv_half * delta * &h_inv_half;
    let a = &d_on * 0.5;
    let ata = a.transpose() * &a;
    let e = SymmetricEigen::new(ata.clone());
    let scale = e.eigenvalues.amax().max(1.0);
    let kernel: Vec<usize> = (0..k).filter(|&i| e.eigenvalues[i] <= tol * tol * scale).collect();
    if kernel.len() % 2 == 1 {
        return Err(Error::Degenerate(format!("kernel of A has odd dimension {}", kernel.len())));
    }
    let inv_abs = DMatrix::from_diagonal(&DVector::from_fn(k, |i, _| {
        if kernel.contains(&i) {
            0.0
        } else {
            1.0 / e.eigenvalues[i].sqrt()
        }
    }));
    let inv_abs = &e.eigenvectors * inv_abs * e.eigenvectors.transpose();
    let mut j_on = -(&a * inv_abs);
    for pair in kernel.chunks(2) {
        let u = e.eigenvectors.column(pair[0]).into_owned();
        let v = e.eigenvectors.column(pair[1]).into_owned();
        j_on += &v * u.transpose() - &u * v.transpose();
    }
    let a_norm = e.eigenvalues.max().max(0.0).sqrt();
    let defect = (&d_on * &j_on - DMatrix::identity(k, k) * 2.0).amax();
    let j = &h_inv_half * &j_on * &h_half;
    Ok(ComplexStructure {
        j,
        j_orthonormal: j_on,
        a_orthonormal: a,
        a_norm,
        purity_defect: defect,
        pure: defect <= tol,
    })
}

impl ComplexStructure {
    /// Largest deviation of `J^2 = -1`.
    pub fn square_defect(&self) -> f64 {
        let k = self.j_orthonormal.nrows();
        (&self.j_orthonormal * &self.j_orthonormal + DMatrix::identity(k, k)).amax()
    }

    /// Residual of the holomorphic block structure of `Delta^+`:
    /// `<1_Zbar f, Delta^+ 1_Z g> = <f, Delta^+ g>` and the remaining blocks vanish.
    pub fn holomorphic_defect(&self) -> f64 {
        let k = self.j_orthonormal.nrows();
        let id = DMatrix::<C64>::identity(k, k);
        let j = self.j_orthonormal.map(|x| C64::new(x, 0.0));
        let a = self.a_orthonormal.map(|x| C64::new(x, 0.0));
        let b = &id + &a * I;
        let pz = (&id - &j * I) * C64::new(0.5, 0.0);
        let pzb = (&id + &j * I) * C64::new(0.5, 0.0);
        let amax = |m: DMatrix<C64>| m.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let r1 = amax(pzb.transpose() * &b * &pz - &b);
        let r2 = amax(pz.transpose() * &b * &pz);
        let r3 = amax(pzb.transpose() * &b * &pzb);
        let r4 = amax(pz.transpose() * &b * &pzb);
        r1.max(r2).max(r3).max(r4)
    }
}

/// Gram matrices `(H(f_i, f_j), Delta(f_i, f_j))` of the given test functions.
pub fn phase_space_forms(ctx: &WeylContext, funcs: &[Vec<f64>]) -> (DMatrix<f64>, DMatrix<f64>) {
    let k = funcs.len();
    (
        DMatrix::from_fn(k, k, |i, j| ctx.hadamard(&funcs[i], &funcs[j])),
        DMatrix::from_fn(k, k, |i, j| ctx.delta(&funcs[i], &funcs[j])),
    )
}

/// Thermal two-point function `coth(beta w / 2) H`, mode by mode.
pub fn thermal_hadamard(model: &Model, beta: f64) -> DMatrix<f64> {
    let g = &model.grid;
    let nt = g.time_len();
    let mut h = model.propagators.hadamard.clone();
    for a in 0..g.len() {
        let w = g.frequency(a / nt);
        let c = 1.0 / (0.5 * beta * w).tanh();
        for b in 0..g.len() {
            h[(a, b)] *= c;
        }
    }
    h
}

/// Checks that `W(P f)` acts as the identity: returns the largest of
/// `|omega(W(Pf)) - 1|` and `|hbar Delta(Pf, g) / 2|` over the given `g`.
pub fn onshell_ideal_check(ctx: &WeylContext, model: &Model, f: &[f64], others: &[Vec<f64>]) -> Result<f64> {
    let pf = LinearizedOperator::free(model).apply(f)?;
    let mut worst = (ctx.state(&ctx.generator(&pf)) - 1.0).norm();
    for g in others {
        worst = worst.max((0.5 * ctx.hbar * ctx.delta(&pf, g)).abs());
    }
    Ok(worst)
}
