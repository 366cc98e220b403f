//! Spacetime models, grids, propagators and classical field equations.
//!
//! Two geometries are supported. `Qm` is a single harmonic mode on a time
//! grid. `Cylinder` is time times a circle, truncated to the real Fourier
//! modes `n = -N..=N`; every mode evolves as an oscillator with frequency
//! `sqrt(m^2 + (2 pi n / L)^2)`, so all kernels are block diagonal in the
//! mode index.
//!
//! Grid points are addressed by a flat index `mode * N_t + i`. Kernels are
//! densities: pairing a kernel with test densities integrates against the
//! trapezoid weights on both sides.

use std::f64::consts::PI;
use std::ops::Deref;

use nalgebra::DMatrix;

use crate::functional::PolyFunctional;
use crate::{Error, Result, C64};

#[derive(Clone, Debug, PartialEq)]
pub enum Geometry {
    Qm,
    Cylinder { circumference: f64, modes: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub geometry: Geometry,
    pub mass: f64,
    /// The time grid covers `[-half_extent, half_extent]`.
    pub half_extent: f64,
    pub time_points: usize,
}

impl ModelSpec {
    pub fn qm(mass: f64, half_extent: f64, time_points: usize) -> Self {
        ModelSpec { geometry: Geometry::Qm, mass, half_extent, time_points }
    }

    pub fn cylinder(
        mass: f64,
        circumference: f64,
        modes: usize,
        half_extent: f64,
        time_points: usize,
    ) -> Self {
        ModelSpec {
            geometry: Geometry::Cylinder { circumference, modes },
            mass,
            half_extent,
            time_points,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) || !self.mass.is_finite() {
            return Err(Error::InvalidModel(format!("mass must be positive, got {}", self.mass)));
        }
        if !(self.half_extent > 0.0) || !self.half_extent.is_finite() {
            return Err(Error::InvalidModel(format!(
                "time extent must be positive, got {}",
                self.half_extent
            )));
        }
        if self.time_points < 8 {
            return Err(Error::InvalidModel(format!(
                "need at least 8 time points, got {}",
                self.time_points
            )));
        }
        if let Geometry::Cylinder { circumference, .. } = self.geometry {
            if !(circumference > 0.0) || !circumference.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "circumference must be positive, got {circumference}"
                )));
            }
        }
        Ok(())
    }
}

/// Discretized spacetime: a uniform time grid times a list of mode slots.
#[derive(Clone, Debug)]
pub struct Grid {
    times: Vec<f64>,
    time_weights: Vec<f64>,
    step: f64,
    wavenumbers: Vec<f64>,
    frequencies: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    fn new(spec: &ModelSpec) -> Self {
        let nt = spec.time_points;
        let t = spec.half_extent;
        let step = 2.0 * t / (nt as f64 - 1.0);
        let times: Vec<f64> = (0..nt).map(|i| -t + step * i as f64).collect();
        let mut time_weights = vec![step; nt];
        time_weights[0] = 0.5 * step;
        time_weights[nt - 1] = 0.5 * step;
        let wavenumbers: Vec<f64> = match spec.geometry {
            Geometry::Qm => vec![0.0],
            Geometry::Cylinder { circumference, modes } => (0..2 * modes + 1)
                .map(|s| 2.0 * PI * (s as f64 - modes as f64) / circumference)
                .collect(),
        };
        let frequencies = wavenumbers
            .iter()
            .map(|k| (spec.mass * spec.mass + k * k).sqrt())
            .collect();
        let weights = (0..wavenumbers.len()).flat_map(|_| time_weights.iter().copied()).collect();
        Grid { times, time_weights, step, wavenumbers, frequencies, weights }
    }

    /// A bare grid with unit mode count, used for phase-space functionals and tests.
    pub fn with_weights(weights: Vec<f64>) -> Self {
        let n = weights.len();
        Grid {
            times: (0..n).map(|i| i as f64).collect(),
            time_weights: weights.clone(),
            step: 1.0,
            wavenumbers: vec![0.0],
            frequencies: vec![1.0],
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn time_len(&self) -> usize {
        self.times.len()
    }

    pub fn mode_count(&self) -> usize {
        self.wavenumbers.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time_weights(&self) -> &[f64] {
        &self.time_weights
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn index(&self, mode: usize, i: usize) -> usize {
        mode * self.times.len() + i
    }

    /// Inverse of [`Grid::index`]: `(mode, time index)`.
    pub fn split(&self, idx: usize) -> (usize, usize) {
        (idx / self.times.len(), idx % self.times.len())
    }

    pub fn time_of(&self, idx: usize) -> f64 {
        self.times[idx % self.times.len()]
    }

    pub fn frequency(&self, mode: usize) -> f64 {
        self.frequencies[mode]
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn wavenumber(&self, mode: usize) -> f64 {
        self.wavenumbers[mode]
    }

    /// Index of the time grid point closest to `t`.
    pub fn nearest_time_index(&self, t: f64) -> usize {
        let i = ((t - self.times[0]) / self.step).round();
        i.clamp(0.0, (self.times.len() - 1) as f64) as usize
    }

    /// Trapezoid integral of a grid density.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    /// Second-derivative stencil on the time grid: five points in the
    /// interior, three points next to the boundary, truncated on the
    /// boundary rows.
    pub fn second_derivative(&self) -> DMatrix<f64> {
        let n = self.times.len();
        let h2 = self.step * self.step;
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            if i >= 2 && i + 2 < n {
                let c = [-1.0, 16.0, -30.0, 16.0, -1.0];
                for (k, ck) in c.iter().enumerate() {
                    d[(i, i + k - 2)] = ck / (12.0 * h2);
                }
            } else {
                d[(i, i)] = -2.0 / h2;
                if i > 0 {
                    d[(i, i - 1)] = 1.0 / h2;
                }
                if i + 1 < n {
                    d[(i, i + 1)] = 1.0 / h2;
                }
            }
        }
        d
    }

    /// Central first-derivative stencil with one-sided boundary rows.
    pub fn first_derivative(&self) -> DMatrix<f64> {
        let n = self.times.len();
        let h = self.step;
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            if i == 0 {
                d[(0, 0)] = -1.0 / h;
                d[(0, 1)] = 1.0 / h;
            } else if i == n - 1 {
                d[(i, i - 1)] = -1.0 / h;
                d[(i, i)] = 1.0 / h;
            } else {
                d[(i, i - 1)] = -0.5 / h;
                d[(i, i + 1)] = 0.5 / h;
            }
        }
        d
    }
}

/// Free propagators of one mode with frequency `w`, as functions of `(t, s)`.
pub mod closed_form {
    pub fn causal(w: f64, t: f64, s: f64) -> f64 {
        (w * (t - s)).sin() / w
    }

    pub fn retarded(w: f64, t: f64, s: f64) -> f64 {
        if t > s {
            causal(w, t, s)
        } else {
            0.0
        }
    }

    pub fn advanced(w: f64, t: f64, s: f64) -> f64 {
        retarded(w, s, t)
    }

    pub fn dirac(w: f64, t: f64, s: f64) -> f64 {
        (w * (t - s).abs()).sin() / (2.0 * w)
    }

    pub fn hadamard(w: f64, t: f64, s: f64) -> f64 {
        (w * (t - s)).cos() / (2.0 * w)
    }
}

/// The free propagators of a model as dense, mode-block-diagonal matrices.
#[derive(Clone, Debug)]
pub struct PropagatorSet {
    pub causal: DMatrix<f64>,
    pub retarded: DMatrix<f64>,
    pub advanced: DMatrix<f64>,
    pub dirac: DMatrix<f64>,
    pub hadamard: DMatrix<f64>,
}

impl PropagatorSet {
    fn new(grid: &Grid) -> Self {
        let n = grid.len();
        let mut set = PropagatorSet {
            causal: DMatrix::zeros(n, n),
            retarded: DMatrix::zeros(n, n),
            advanced: DMatrix::zeros(n, n),
            dirac: DMatrix::zeros(n, n),
            hadamard: DMatrix::zeros(n, n),
        };
        let nt = grid.time_len();
        for mode in 0..grid.mode_count() {
            let w = grid.frequency(mode);
            for i in 0..nt {
                for j in 0..nt {
                    let (t, s) = (grid.times[i], grid.times[j]);
                    let (a, b) = (grid.index(mode, i), grid.index(mode, j));
                    set.causal[(a, b)] = closed_form::causal(w, t, s);
                    set.retarded[(a, b)] = closed_form::retarded(w, t, s);
                    set.advanced[(a, b)] = closed_form::advanced(w, t, s);
                    set.dirac[(a, b)] = closed_form::dirac(w, t, s);
                    set.hadamard[(a, b)] = closed_form::hadamard(w, t, s);
                }
            }
        }
        set
    }

    /// Two-point function `i Delta / 2 + H`.
    pub fn positive(&self) -> DMatrix<C64> {
        self.causal.zip_map(&self.hadamard, |d, h| C64::new(h, 0.5 * d))
    }

    /// Feynman propagator `i Delta^D + H`.
    pub fn feynman(&self) -> DMatrix<C64> {
        self.dirac.zip_map(&self.hadamard, |d, h| C64::new(h, d))
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub spec: ModelSpec,
    pub grid: Grid,
    pub propagators: PropagatorSet,
}

pub fn build_model(spec: ModelSpec) -> Result<Model> {
    spec.validate()?;
    let grid = Grid::new(&spec);
    let propagators = PropagatorSet::new(&grid);
    Ok(Model { spec, grid, propagators })
}

impl Model {
    pub fn is_qm(&self) -> bool {
        matches!(self.spec.geometry, Geometry::Qm)
    }

    /// Applies the free operator `d^2/dt^2 + w^2` mode by mode.
    pub fn free_operator(&self, field: &[f64]) -> Result<Vec<f64>> {
        let op = LinearizedOperator::free(self);
        op.apply(field)
    }
}

/// A field configuration sampled on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldConfiguration(pub Vec<f64>);

impl Deref for FieldConfiguration {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Free solution with Cauchy data `(phi0, psi0)` at `t = 0`, one entry per mode.
pub fn cauchy_solution(model: &Model, phi0: &[f64], psi0: &[f64]) -> Result<FieldConfiguration> {
    let g = &model.grid;
    let m = g.mode_count();
    if phi0.len() != m {
        return Err(Error::Dimension { expected: m, got: phi0.len() });
    }
    if psi0.len() != m {
        return Err(Error::Dimension { expected: m, got: psi0.len() });
    }
    let mut out = vec![0.0; g.len()];
    for mode in 0..m {
        let w = g.frequency(mode);
        for (i, t) in g.times().iter().enumerate() {
            out[g.index(mode, i)] = (w * t).cos() * phi0[mode] + (w * t).sin() / w * psi0[mode];
        }
    }
    Ok(FieldConfiguration(out))
}

/// Linear map from phase-space coordinates `(phi0, pi0)` to free solutions.
///
/// The Lagrangian sign convention used here gives the momentum `pi = -dphi/dt`,
/// so the second block of columns is `-sin(w t) / w`.
pub fn phase_space_map(model: &Model) -> DMatrix<f64> {
    let g = &model.grid;
    let m = g.mode_count();
    let mut b = DMatrix::zeros(g.len(), 2 * m);
    for mode in 0..m {
        let w = g.frequency(mode);
        for (i, t) in g.times().iter().enumerate() {
            let idx = g.index(mode, i);
            b[(idx, mode)] = (w * t).cos();
            b[(idx, m + mode)] = -(w * t).sin() / w;
        }
    }
    b
}

/// One monomial `c * phi^a * (dphi/dt)^b` of a Lagrangian density.
#[derive(Clone, Debug, PartialEq)]
pub struct Monomial {
    pub phi_degree: u32,
    pub dot_degree: u32,
    pub coefficient: f64,
}

/// Lagrangian density `L = -1/2 phidot^2 + 1/2 m^2 phi^2 + ...`.
///
/// With this sign convention the linearized field operator is
/// `S'' = d^2/dt^2 + m^2 + ...`. Supported monomials are the kinetic term
/// `(0, 2, c)` and potential terms `(a, 0, c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralizedLagrangian {
    pub monomials: Vec<Monomial>,
}

impl GeneralizedLagrangian {
    pub fn free(mass: f64) -> Self {
        GeneralizedLagrangian {
            monomials: vec![
                Monomial { phi_degree: 0, dot_degree: 2, coefficient: -0.5 },
                Monomial { phi_degree: 2, dot_degree: 0, coefficient: 0.5 * mass * mass },
            ],
        }
    }

    pub fn phi4(mass: f64, lambda: f64) -> Self {
        let mut l = Self::free(mass);
        l.monomials.push(Monomial { phi_degree: 4, dot_degree: 0, coefficient: lambda / 24.0 });
        l
    }

    /// Free Lagrangian plus `mu/2 phi^2`.
    pub fn mass_perturbation(mass: f64, mu: f64) -> Self {
        let mut l = Self::free(mass);
        l.monomials.push(Monomial { phi_degree: 2, dot_degree: 0, coefficient: 0.5 * mu });
        l
    }

    pub fn validate(&self) -> Result<()> {
        let mut kinetic = false;
        for mono in &self.monomials {
            match (mono.phi_degree, mono.dot_degree) {
                (0, 2) => kinetic = true,
                (_, 0) => {}
                (a, b) => {
                    return Err(Error::Unsupported(format!(
                        "monomial phi^{a} phidot^{b} is not supported"
                    )))
                }
            }
        }
        if !kinetic || self.kinetic_coefficient() == 0.0 {
            return Err(Error::Unsupported("Lagrangian has no kinetic term".into()));
        }
        Ok(())
    }

    /// Coefficient of `phidot^2`.
    pub fn kinetic_coefficient(&self) -> f64 {
        self.monomials
            .iter()
            .filter(|m| m.phi_degree == 0 && m.dot_degree == 2)
            .map(|m| m.coefficient)
            .sum()
    }

    pub fn is_quadratic(&self) -> bool {
        self.monomials
            .iter()
            .all(|m| m.phi_degree + m.dot_degree <= 2 || m.coefficient == 0.0)
    }

    fn potential_derivative(&self, phi: f64, order: u32) -> f64 {
        self.monomials
            .iter()
            .filter(|m| m.dot_degree == 0 && m.phi_degree >= order)
            .map(|m| {
                let falling: f64 = (0..order).map(|k| (m.phi_degree - k) as f64).product();
                m.coefficient * falling * phi.powi((m.phi_degree - order) as i32)
            })
            .sum()
    }

    /// Potential `U(phi)`.
    pub fn potential(&self, phi: f64) -> f64 {
        self.potential_derivative(phi, 0)
    }

    /// `U'(phi)`.
    pub fn force(&self, phi: f64) -> f64 {
        self.potential_derivative(phi, 1)
    }

    /// `U''(phi)`.
    pub fn curvature(&self, phi: f64) -> f64 {
        self.potential_derivative(phi, 2)
    }

    /// The smeared Lagrangian `L(f) = int f(t) L(phi, phidot)` as a functional.
    ///
    /// `cutoff` is a profile on the time grid. Time derivatives use the
    /// central-difference stencil, so the support of the result can extend
    /// one grid step beyond the support of `cutoff`. On the cylinder only
    /// quadratic potentials are supported and the spatial gradient term
    /// enters mode by mode.
    pub fn smeared(&self, model: &Model, cutoff: &[f64]) -> Result<PolyFunctional> {
        self.validate()?;
        let g = &model.grid;
        let nt = g.time_len();
        if cutoff.len() != nt {
            return Err(Error::Dimension { expected: nt, got: cutoff.len() });
        }
        let n = g.len();
        let full: Vec<f64> = (0..n).map(|idx| cutoff[idx % nt]).collect();
        let mut out = PolyFunctional::zero(n);

        let d1 = g.first_derivative();
        let mut dk = vec![C64::new(0.0, 0.0); n * n];
        for mode in 0..g.mode_count() {
            for i in 0..nt {
                for j in 0..nt {
                    let v = d1[(i, j)];
                    if v != 0.0 {
                        let (a, b) = (g.index(mode, i), g.index(mode, j));
                        dk[a * n + b] = C64::new(v / g.weights()[b], 0.0);
                    }
                }
            }
        }
        out = out.add(&PolyFunctional::squared_linear_image(
            n,
            &full,
            &dk,
            self.kinetic_coefficient(),
        ));

        for mono in self.monomials.iter().filter(|m| m.dot_degree == 0) {
            if !model.is_qm() && mono.phi_degree != 2 {
                return Err(Error::Unsupported(format!(
                    "phi^{} potential on the cylinder",
                    mono.phi_degree
                )));
            }
            let dens: Vec<f64> = full.iter().map(|f| f * mono.coefficient).collect();
            out = out.add(&PolyFunctional::local(n, &dens, mono.phi_degree));
        }
        if !model.is_qm() {
            let dens: Vec<f64> = (0..n)
                .map(|idx| {
                    let k = g.wavenumber(idx / nt);
                    0.5 * k * k * full[idx]
                })
                .collect();
            out = out.add(&PolyFunctional::local(n, &dens, 2));
        }
        Ok(out)
    }
}

/// The second variation `S''(phi) = k d^2/dt^2 + V(t)`, mode by mode.
#[derive(Clone, Debug)]
pub struct LinearizedOperator {
    pub kinetic: f64,
    /// `V` on the full grid.
    pub potential: Vec<f64>,
    nt: usize,
    step: f64,
}

impl LinearizedOperator {
    pub fn free(model: &Model) -> Self {
        let g = &model.grid;
        let nt = g.time_len();
        let potential = (0..g.len())
            .map(|idx| {
                let w = g.frequency(idx / nt);
                w * w
            })
            .collect();
        LinearizedOperator { kinetic: 1.0, potential, nt, step: g.step() }
    }

    pub fn modes(&self) -> usize {
        self.potential.len() / self.nt
    }

    pub fn apply(&self, field: &[f64]) -> Result<Vec<f64>> {
        if field.len() != self.potential.len() {
            return Err(Error::Dimension { expected: self.potential.len(), got: field.len() });
        }
        let nt = self.nt;
        let h2 = self.step * self.step;
        let mut out = vec![0.0; field.len()];
        for mode in 0..self.modes() {
            let f = &field[mode * nt..(mode + 1) * nt];
            let o = &mut out[mode * nt..(mode + 1) * nt];
            for i in 0..nt {
                let d2 = if i >= 2 && i + 2 < nt {
                    (-f[i - 2] + 16.0 * f[i - 1] - 30.0 * f[i] + 16.0 * f[i + 1] - f[i + 2])
                        / (12.0 * h2)
                } else {
                    let l = if i > 0 { f[i - 1] } else { 0.0 };
                    let r = if i + 1 < nt { f[i + 1] } else { 0.0 };
                    (l - 2.0 * f[i] + r) / h2
                };
                o[i] = self.kinetic * d2 + self.potential[mode * nt + i] * f[i];
            }
        }
        Ok(out)
    }

    /// Applies the operator to each column of a kernel.
    pub fn apply_columns(&self, kernel: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(kernel.nrows(), kernel.ncols());
        for j in 0..kernel.ncols() {
            let col: Vec<f64> = kernel.column(j).iter().copied().collect();
            let r = self.apply(&col)?;
            for (i, v) in r.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }
}

/// Linearizes the field equation around `phi`.
pub fn linearize(
    model: &Model,
    lagrangian: &GeneralizedLagrangian,
    phi: &[f64],
) -> Result<LinearizedOperator> {
    lagrangian.validate()?;
    let g = &model.grid;
    if phi.len() != g.len() {
        return Err(Error::Dimension { expected: g.len(), got: phi.len() });
    }
    if !model.is_qm() && !lagrangian.is_quadratic() {
        return Err(Error::Unsupported("non-quadratic Lagrangian on the cylinder".into()));
    }
    let nt = g.time_len();
    let potential = phi
        .iter()
        .enumerate()
        .map(|(idx, &p)| {
            let k = g.wavenumber(idx / nt);
            lagrangian.curvature(p) + k * k
        })
        .collect();
    Ok(LinearizedOperator {
        kinetic: -2.0 * lagrangian.kinetic_coefficient(),
        potential,
        nt,
        step: g.step(),
    })
}

const SUBSTEPS: usize = 16;

fn cubic_interpolate(times: &[f64], values: &[f64], t: f64) -> f64 {
    let n = times.len();
    let h = times[1] - times[0];
    let i = (((t - times[0]) / h).floor() as isize).clamp(0, n as isize - 2) as usize;
    let start = i.saturating_sub(1).min(n - 4);
    let mut acc = 0.0;
    for a in start..start + 4 {
        let mut l = 1.0;
        for b in start..start + 4 {
            if a != b {
                l *= (t - times[b]) / (times[a] - times[b]);
            }
        }
        acc += l * values[a];
    }
    acc
}

/// One RK4 step for `u'' = acc(t, u)`.
fn rk4_step(acc: &dyn Fn(f64, f64) -> f64, t: f64, u: f64, v: f64, dt: f64) -> (f64, f64) {
    let k1u = v;
    let k1v = acc(t, u);
    let k2u = v + 0.5 * dt * k1v;
    let k2v = acc(t + 0.5 * dt, u + 0.5 * dt * k1u);
    let k3u = v + 0.5 * dt * k2v;
    let k3v = acc(t + 0.5 * dt, u + 0.5 * dt * k2u);
    let k4u = v + dt * k3v;
    let k4v = acc(t + dt, u + dt * k3u);
    (
        u + dt / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u),
        v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
    )
}

/// Integrates `u'' = acc(t, u)` from `(t0, u0, v0)` and samples at `targets`,
/// which must be sorted and all on one side of `t0`.
fn integrate_samples(
    acc: &dyn Fn(f64, f64) -> f64,
    t0: f64,
    u0: f64,
    v0: f64,
    targets: &[f64],
    max_dt: f64,
) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(targets.len());
    let (mut t, mut u, mut v) = (t0, u0, v0);
    for &tt in targets {
        let span = tt - t;
        let steps = ((span.abs() / max_dt).ceil() as usize).max(1);
        let dt = span / steps as f64;
        if span != 0.0 {
            for _ in 0..steps {
                let (nu, nv) = rk4_step(acc, t, u, v, dt);
                u = nu;
                v = nv;
                t += dt;
            }
        }
        t = tt;
        out.push((u, v));
    }
    out
}

/// Retarded and advanced Green functions of a linearized operator.
///
/// A fundamental system is integrated with RK4 from the first grid time,
/// with the potential interpolated by cubic Lagrange polynomials between
/// grid points. Both kernels are returned as densities.
pub fn green_functions(op: &LinearizedOperator, grid: &Grid) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let nt = grid.time_len();
    if op.potential.len() != grid.len() || op.nt != nt {
        return Err(Error::Dimension { expected: grid.len(), got: op.potential.len() });
    }
    if op.kinetic == 0.0 {
        return Err(Error::Degenerate("kinetic coefficient vanishes".into()));
    }
    let n = grid.len();
    let times = grid.times();
    let mut gr = DMatrix::zeros(n, n);
    let max_dt = grid.step() / SUBSTEPS as f64;
    for mode in 0..op.modes() {
        let pot = &op.potential[mode * nt..(mode + 1) * nt];
        let k = op.kinetic;
        let acc = |t: f64, u: f64| -cubic_interpolate(times, pot, t) * u / k;
        let u1 = integrate_samples(&acc, times[0], 1.0, 0.0, times, max_dt);
        let u2 = integrate_samples(&acc, times[0], 0.0, 1.0, times, max_dt);
        for i in 0..nt {
            for j in 0..i {
                let val = (u1[j].0 * u2[i].0 - u1[i].0 * u2[j].0) / k;
                if !val.is_finite() {
                    return Err(Error::NonFinite("Green function".into()));
                }
                gr[(grid.index(mode, i), grid.index(mode, j))] = val;
            }
        }
    }
    let ga = gr.transpose();
    Ok((gr, ga))
}

/// Solves the classical field equation `k phi'' + U'(phi) = 0` with data at `t = 0`.
pub fn solve_classical(
    model: &Model,
    lagrangian: &GeneralizedLagrangian,
    phi0: f64,
    psi0: f64,
) -> Result<FieldConfiguration> {
    lagrangian.validate()?;
    if !model.is_qm() {
        return Err(Error::Unsupported("classical solver is only available for Qm".into()));
    }
    let g = &model.grid;
    let k = -2.0 * lagrangian.kinetic_coefficient();
    let acc = |_t: f64, u: f64| -lagrangian.force(u) / k;
    let max_dt = g.step() / SUBSTEPS as f64;
    let times = g.times();
    let split = times.partition_point(|&t| t < 0.0);
    let forward = integrate_samples(&acc, 0.0, phi0, psi0, &times[split..], max_dt);
    let back_targets: Vec<f64> = times[..split].iter().rev().copied().collect();
    let backward = integrate_samples(&acc, 0.0, phi0, psi0, &back_targets, max_dt);
    let mut out = vec![0.0; g.len()];
    for (i, (u, _)) in backward.iter().enumerate() {
        out[split - 1 - i] = *u;
    }
    for (i, (u, _)) in forward.iter().enumerate() {
        out[split + i] = *u;
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("classical solution".into()));
    }
    Ok(FieldConfiguration(out))
}
