//! Polynomial functionals on the grid.
//!
//! A functional is a finite sum of terms. Each term is a small contraction
//! network: vertices carry a density `g` and a power `k` of the field, and
//! factors are dense kernels joining two or more vertices. The value of a
//! term at `phi` is
//!
//! ```text
//! c * sum_{x_1..x_V} prod_v w(x_v) g_v(x_v) phi(x_v)^{k_v} * prod_factors K(x_{v1}, x_{v2}, ...)
//! ```
//!
//! where `w` are the grid weights. Products of local functionals then stay
//! cheap to store and evaluate even when their degree is far too high for
//! dense kernels.
//!
//! Derivative kernels are densities: the second derivative of `int f phi^2`
//! is `2 f(x) delta(x, y)`, with the discrete delta `delta_xy / w_x`.

pub(crate) mod network;
pub mod series;

use std::collections::HashMap;
use std::sync::Arc;

use crate::model::Grid;
use crate::{Error, Result, C64};
use network::Tensor;

/// Highest polynomial degree any functional may reach.
pub const MAX_DEGREE: u32 = 16;

/// Largest dense kernel (number of entries) that derivative kernels may produce.
const MAX_KERNEL_ENTRIES: usize = 1 << 26;

#[derive(Clone, Debug)]
pub struct Vertex {
    pub density: Arc<[C64]>,
    pub power: u32,
}

#[derive(Clone, Debug)]
pub struct Factor {
    pub vars: Vec<usize>,
    pub data: Arc<[C64]>,
}

#[derive(Clone, Debug)]
pub struct Term {
    pub coeff: C64,
    pub vertices: Vec<Vertex>,
    pub factors: Vec<Factor>,
}

pub(crate) fn falling(k: u32, r: u32) -> f64 {
    (0..r).map(|i| (k - i) as f64).product()
}

pub(crate) fn factorial(k: u32) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

fn arc_key(a: &Arc<[C64]>) -> u64 {
    Arc::as_ptr(a) as *const C64 as usize as u64
}

impl Term {
    pub fn degree(&self) -> u32 {
        self.vertices.iter().map(|v| v.power).sum()
    }

    fn key(&self) -> Vec<u64> {
        let mut k = Vec::with_capacity(2 + 2 * self.vertices.len() + 4 * self.factors.len());
        k.push(self.vertices.len() as u64);
        for v in &self.vertices {
            k.push(arc_key(&v.density));
            k.push(v.power as u64);
        }
        let mut fs: Vec<Vec<u64>> = self
            .factors
            .iter()
            .map(|f| {
                let mut e: Vec<u64> = f.vars.iter().map(|&v| v as u64).collect();
                e.push(u64::MAX);
                e.push(arc_key(&f.data));
                e
            })
            .collect();
        fs.sort();
        for f in fs {
            k.extend(f);
        }
        k
    }

    /// Contracts the network with the given per-vertex unary vectors,
    /// leaving the listed vertices open.
    pub(crate) fn contract_with(&self, n: usize, unaries: Vec<Vec<C64>>, open: &[usize]) -> Vec<C64> {
        let dims = vec![n; self.vertices.len()];
        if self.factors.is_empty() && open.is_empty() {
            let mut acc = C64::new(1.0, 0.0);
            for u in &unaries {
                acc *= u.iter().sum::<C64>();
            }
            return vec![acc];
        }
        let mut tensors: Vec<Tensor> =
            unaries.into_iter().enumerate().map(|(v, u)| Tensor::new(vec![v], u)).collect();
        tensors.extend(self.factors.iter().map(|f| Tensor::new(f.vars.clone(), f.data.to_vec())));
        network::contract(tensors, &dims, open)
    }

    /// `w g phi^k` for every vertex.
    fn closed_unaries(&self, weights: &[f64], phi: &[C64]) -> Vec<Vec<C64>> {
        self.vertices
            .iter()
            .map(|v| {
                v.density
                    .iter()
                    .zip(weights)
                    .zip(phi)
                    .map(|((g, w), p)| g * *w * p.powu(v.power))
                    .collect()
            })
            .collect()
    }

    pub fn evaluate(&self, weights: &[f64], phi: &[C64]) -> C64 {
        if self.coeff == C64::new(0.0, 0.0) {
            return self.coeff;
        }
        let n = weights.len();
        let u = self.closed_unaries(weights, phi);
        self.coeff * self.contract_with(n, u, &[])[0]
    }

    fn components(&self) -> Vec<usize> {
        let mut parent: Vec<usize> = (0..self.vertices.len()).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut y = x;
            while p[y] != r {
                let next = p[y];
                p[y] = r;
                y = next;
            }
            r
        }
        for f in &self.factors {
            for w in f.vars.windows(2) {
                let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
                parent[a] = b;
            }
        }
        (0..self.vertices.len()).map(|v| find(&mut parent, v)).collect()
    }

    /// Folds field-independent components into the coefficient.
    fn simplified(mut self, weights: &[f64]) -> Option<Term> {
        if self.coeff == C64::new(0.0, 0.0) {
            return None;
        }
        if self.vertices.iter().any(|v| v.density.iter().all(|g| *g == C64::new(0.0, 0.0))) {
            return None;
        }
        let comp = self.components();
        let mut roots: Vec<usize> = comp.clone();
        roots.sort_unstable();
        roots.dedup();
        let mut keep = vec![true; self.vertices.len()];
        for &r in &roots {
            let members: Vec<usize> = (0..self.vertices.len()).filter(|&v| comp[v] == r).collect();
            if members.iter().all(|&v| self.vertices[v].power == 0) {
                let local: HashMap<usize, usize> =
                    members.iter().enumerate().map(|(i, &v)| (v, i)).collect();
                let sub = Term {
                    coeff: C64::new(1.0, 0.0),
                    vertices: members.iter().map(|&v| self.vertices[v].clone()).collect(),
                    factors: self
                        .factors
                        .iter()
                        .filter(|f| local.contains_key(&f.vars[0]))
                        .map(|f| Factor {
                            vars: f.vars.iter().map(|v| local[v]).collect(),
                            data: f.data.clone(),
                        })
                        .collect(),
                };
                let ones = vec![C64::new(1.0, 0.0); weights.len()];
                self.coeff *= sub.evaluate(weights, &ones);
                for &v in &members {
                    keep[v] = false;
                }
            }
        }
        if self.coeff == C64::new(0.0, 0.0) {
            return None;
        }
        if keep.iter().all(|&k| k) {
            return Some(self);
        }
        let mut map = vec![usize::MAX; self.vertices.len()];
        let mut verts = Vec::new();
        for (v, vert) in self.vertices.into_iter().enumerate() {
            if keep[v] {
                map[v] = verts.len();
                verts.push(vert);
            }
        }
        let factors = self
            .factors
            .into_iter()
            .filter(|f| keep[f.vars[0]])
            .map(|f| Factor { vars: f.vars.iter().map(|&v| map[v]).collect(), data: f.data })
            .collect();
        Some(Term { coeff: self.coeff, vertices: verts, factors })
    }

    /// Mask of grid points where the vertex variable `v` can contribute.
    fn vertex_support(&self, v: usize, n: usize) -> Vec<bool> {
        let mut mask: Vec<bool> = self.vertices[v].density.iter().map(|g| *g != C64::new(0.0, 0.0)).collect();
        for f in self.factors.iter().filter(|f| f.vars.contains(&v)) {
            let pos = f.vars.iter().position(|&x| x == v).unwrap();
            let rank = f.vars.len();
            let stride = n.pow((rank - 1 - pos) as u32);
            let mut proj = vec![false; n];
            for (i, val) in f.data.iter().enumerate() {
                if *val != C64::new(0.0, 0.0) {
                    proj[(i / stride) % n] = true;
                }
            }
            for (m, p) in mask.iter_mut().zip(proj) {
                *m &= p;
            }
        }
        mask
    }

    fn shifted_factors(&self, offset: usize) -> impl Iterator<Item = Factor> + '_ {
        self.factors.iter().map(move |f| Factor {
            vars: f.vars.iter().map(|v| v + offset).collect(),
            data: f.data.clone(),
        })
    }
}

/// A polynomial functional on a grid of `n` points.
#[derive(Clone, Debug)]
pub struct PolyFunctional {
    n: usize,
    terms: Vec<Term>,
}

fn to_complex(d: &[f64]) -> Arc<[C64]> {
    d.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>().into()
}

fn cphi(phi: &[f64]) -> Vec<C64> {
    phi.iter().map(|&x| C64::new(x, 0.0)).collect()
}

impl PolyFunctional {
    pub fn zero(n: usize) -> Self {
        PolyFunctional { n, terms: Vec::new() }
    }

    pub fn constant(n: usize, c: C64) -> Self {
        let mut f = Self::zero(n);
        if c != C64::new(0.0, 0.0) {
            f.terms.push(Term { coeff: c, vertices: Vec::new(), factors: Vec::new() });
        }
        f
    }

    /// `int g phi^k`.
    pub fn local(n: usize, density: &[f64], power: u32) -> Self {
        Self::local_complex(n, to_complex(density), power)
    }

    pub fn local_complex(n: usize, density: Arc<[C64]>, power: u32) -> Self {
        assert_eq!(density.len(), n, "density length");
        PolyFunctional {
            n,
            terms: vec![Term {
                coeff: C64::new(1.0, 0.0),
                vertices: vec![Vertex { density, power }],
                factors: Vec::new(),
            }],
        }
    }

    /// The linear functional `int f phi`.
    pub fn linear(n: usize, f: &[f64]) -> Self {
        Self::local(n, f, 1)
    }

    /// Point evaluation `phi(x_idx)`.
    pub fn evaluation(grid: &Grid, idx: usize) -> Self {
        let mut d = vec![0.0; grid.len()];
        d[idx] = 1.0 / grid.weights()[idx];
        Self::linear(grid.len(), &d)
    }

    /// `int K(x_1, .., x_k) phi(x_1) .. phi(x_k)` for a dense kernel of rank `k`.
    pub fn from_kernel(n: usize, kernel: &[C64], rank: usize) -> Self {
        assert_eq!(kernel.len(), n.pow(rank as u32), "kernel size");
        let ones: Arc<[C64]> = vec![C64::new(1.0, 0.0); n].into();
        PolyFunctional {
            n,
            terms: vec![Term {
                coeff: C64::new(1.0, 0.0),
                vertices: (0..rank).map(|_| Vertex { density: ones.clone(), power: 1 }).collect(),
                factors: vec![Factor { vars: (0..rank).collect(), data: kernel.to_vec().into() }],
            }],
        }
    }

    /// `int int K(x, y) phi(x)^a phi(y)^b`.
    pub fn bilocal(n: usize, kernel: &[C64], a: u32, b: u32) -> Self {
        assert_eq!(kernel.len(), n * n, "kernel size");
        let ones: Arc<[C64]> = vec![C64::new(1.0, 0.0); n].into();
        PolyFunctional {
            n,
            terms: vec![Term {
                coeff: C64::new(1.0, 0.0),
                vertices: vec![
                    Vertex { density: ones.clone(), power: a },
                    Vertex { density: ones, power: b },
                ],
                factors: vec![Factor { vars: vec![0, 1], data: kernel.to_vec().into() }],
            }],
        }
    }

    /// `c * int f(x) (D phi)(x)^2` where `map[x, y]` is a density kernel
    /// such that `(D phi)(x) = sum_y map[x, y] w_y phi(y)`.
    pub fn squared_linear_image(n: usize, f: &[f64], map: &[C64], c: f64) -> Self {
        let ones: Arc<[C64]> = vec![C64::new(1.0, 0.0); n].into();
        let k: Arc<[C64]> = map.to_vec().into();
        PolyFunctional {
            n,
            terms: vec![Term {
                coeff: C64::new(c, 0.0),
                vertices: vec![
                    Vertex { density: to_complex(f), power: 0 },
                    Vertex { density: ones.clone(), power: 1 },
                    Vertex { density: ones, power: 1 },
                ],
                factors: vec![
                    Factor { vars: vec![0, 1], data: k.clone() },
                    Factor { vars: vec![0, 2], data: k },
                ],
            }],
        }
    }

    pub fn from_terms(n: usize, terms: Vec<Term>) -> Self {
        PolyFunctional { n, terms }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(Term::degree).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.coeff == C64::new(0.0, 0.0))
    }

    /// The constant value if the functional is field independent.
    pub fn as_constant(&self, grid: &Grid) -> Option<C64> {
        if self.terms.iter().all(|t| t.degree() == 0) {
            let ones = vec![1.0; self.n];
            Some(self.evaluate(grid, &ones))
        } else {
            None
        }
    }

    fn check(&self, other: &PolyFunctional) {
        assert_eq!(self.n, other.n, "functionals live on different grids");
    }

    pub fn add(&self, other: &PolyFunctional) -> PolyFunctional {
        self.check(other);
        let mut t = self.terms.clone();
        t.extend(other.terms.iter().cloned());
        PolyFunctional { n: self.n, terms: t }.merged()
    }

    pub fn sub(&self, other: &PolyFunctional) -> PolyFunctional {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, c: C64) -> PolyFunctional {
        if c == C64::new(0.0, 0.0) {
            return Self::zero(self.n);
        }
        PolyFunctional {
            n: self.n,
            terms: self.terms.iter().map(|t| Term { coeff: t.coeff * c, ..t.clone() }).collect(),
        }
    }

    /// Complex conjugate functional, `F*(phi) = conj(F(phi))` for real `phi`.
    pub fn conj(&self) -> PolyFunctional {
        let conj_arc = |a: &Arc<[C64]>| -> Arc<[C64]> { a.iter().map(|z| z.conj()).collect::<Vec<_>>().into() };
        let mut cache: HashMap<u64, Arc<[C64]>> = HashMap::new();
        let mut get = |a: &Arc<[C64]>| cache.entry(arc_key(a)).or_insert_with(|| conj_arc(a)).clone();
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                coeff: t.coeff.conj(),
                vertices: t
                    .vertices
                    .iter()
                    .map(|v| Vertex { density: get(&v.density), power: v.power })
                    .collect(),
                factors: t.factors.iter().map(|f| Factor { vars: f.vars.clone(), data: get(&f.data) }).collect(),
            })
            .collect();
        PolyFunctional { n: self.n, terms }
    }

    /// Pointwise product.
    pub fn mul(&self, other: &PolyFunctional) -> Result<PolyFunctional> {
        self.check(other);
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                let deg = a.degree() + b.degree();
                if deg > MAX_DEGREE {
                    return Err(Error::DegreeCap { degree: deg, cap: MAX_DEGREE });
                }
                let off = a.vertices.len();
                let mut vertices = a.vertices.clone();
                vertices.extend(b.vertices.iter().cloned());
                let mut factors = a.factors.clone();
                factors.extend(b.shifted_factors(off));
                terms.push(Term { coeff: a.coeff * b.coeff, vertices, factors });
            }
        }
        Ok(PolyFunctional { n: self.n, terms }.merged())
    }

    /// Merges terms with identical structure.
    pub fn merged(self) -> PolyFunctional {
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut out: Vec<Term> = Vec::with_capacity(self.terms.len());
        for t in self.terms {
            let k = t.key();
            match index.get(&k) {
                Some(&i) => out[i].coeff += t.coeff,
                None => {
                    index.insert(k, out.len());
                    out.push(t);
                }
            }
        }
        out.retain(|t| t.coeff != C64::new(0.0, 0.0));
        PolyFunctional { n: self.n, terms: out }
    }

    /// Folds field-independent parts of every term into coefficients and
    /// merges the result.
    pub fn simplify(&self, grid: &Grid) -> PolyFunctional {
        let w = grid.weights();
        let terms: Vec<Term> = self.terms.iter().cloned().filter_map(|t| t.simplified(w)).collect();
        PolyFunctional { n: self.n, terms }.merged()
    }

    pub fn evaluate(&self, grid: &Grid, phi: &[f64]) -> C64 {
        self.evaluate_complex(grid, &cphi(phi))
    }

    pub fn evaluate_complex(&self, grid: &Grid, phi: &[C64]) -> C64 {
        assert_eq!(phi.len(), self.n, "field length");
        let w = grid.weights();
        self.terms.iter().map(|t| t.evaluate(w, phi)).sum()
    }

    /// Homogeneous parts evaluated at `h`: entry `k` is `<F^(k)(0), h^k> / k!`.
    pub fn graded_values(&self, grid: &Grid, h: &[f64]) -> Vec<C64> {
        let ch = cphi(h);
        let w = grid.weights();
        let mut out = vec![C64::new(0.0, 0.0); self.degree() as usize + 1];
        for t in &self.terms {
            out[t.degree() as usize] += t.evaluate(w, &ch);
        }
        out
    }

    /// `<F^(k)(phi), h^{(x) k}>`.
    pub fn directional_derivative(&self, grid: &Grid, phi: &[f64], h: &[f64], k: u32) -> C64 {
        let w = grid.weights();
        let mut total = C64::new(0.0, 0.0);
        for t in &self.terms {
            if t.degree() < k {
                continue;
            }
            let powers: Vec<u32> = t.vertices.iter().map(|v| v.power).collect();
            for_each_distribution(&powers, k, &mut |r| {
                let mut weight = factorial(k);
                for (kv, rv) in powers.iter().zip(r) {
                    weight *= falling(*kv, *rv) / factorial(*rv);
                }
                let unaries = t
                    .vertices
                    .iter()
                    .zip(r)
                    .map(|(v, &rv)| {
                        v.density
                            .iter()
                            .zip(w)
                            .zip(phi.iter().zip(h))
                            .map(|((g, wx), (p, hx))| g * *wx * p.powi((v.power - rv) as i32) * hx.powi(rv as i32))
                            .collect()
                    })
                    .collect();
                total += t.coeff * weight * t.contract_with(self.n, unaries, &[])[0];
            });
        }
        total
    }

    /// Dense derivative kernel `F^(k)(phi)` of shape `n^k`, row-major.
    pub fn derivative_kernel(&self, grid: &Grid, phi: &[f64], k: u32) -> Result<Vec<C64>> {
        if k > MAX_DEGREE {
            return Err(Error::DegreeCap { degree: k, cap: MAX_DEGREE });
        }
        let n = self.n;
        let size = n.checked_pow(k).filter(|&s| s <= MAX_KERNEL_ENTRIES).ok_or_else(|| {
            Error::Unsupported(format!("derivative kernel of rank {k} on {n} points is too large"))
        })?;
        let w = grid.weights();
        let mut out = vec![C64::new(0.0, 0.0); size];
        for t in &self.terms {
            if t.degree() < k {
                continue;
            }
            let nv = t.vertices.len();
            let mut slots = vec![0usize; k as usize];
            for code in 0..nv.pow(k) {
                let mut c = code;
                for s in slots.iter_mut().rev() {
                    *s = c % nv;
                    c /= nv;
                }
                let mut r = vec![0u32; nv];
                for &s in &slots {
                    r[s] += 1;
                }
                if r.iter().zip(&t.vertices).any(|(rv, v)| *rv > v.power) {
                    continue;
                }
                let weight: f64 = r.iter().zip(&t.vertices).map(|(rv, v)| falling(v.power, *rv)).product();
                let open: Vec<usize> = (0..nv).filter(|&v| r[v] > 0).collect();
                let unaries = t
                    .vertices
                    .iter()
                    .enumerate()
                    .map(|(vi, v)| {
                        v.density
                            .iter()
                            .zip(w)
                            .zip(phi)
                            .map(|((g, wx), p)| {
                                let pk = p.powi((v.power - r[vi]) as i32);
                                if r[vi] == 0 {
                                    g * *wx * pk
                                } else {
                                    g * pk * wx.powi(1 - r[vi] as i32)
                                }
                            })
                            .collect()
                    })
                    .collect();
                let vals = t.contract_with(n, unaries, &open);
                let pos: Vec<usize> = slots.iter().map(|s| open.iter().position(|o| o == s).unwrap()).collect();
                let mut idx = vec![0usize; open.len()];
                for val in vals {
                    let mut flat = 0usize;
                    for &p in &pos {
                        flat = flat * n + idx[p];
                    }
                    out[flat] += t.coeff * weight * val;
                    for d in (0..idx.len()).rev() {
                        idx[d] += 1;
                        if idx[d] < n {
                            break;
                        }
                        idx[d] = 0;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Grid points where the functional depends on the field.
    pub fn support(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n];
        for t in &self.terms {
            for (v, vert) in t.vertices.iter().enumerate() {
                if vert.power > 0 {
                    for (m, s) in mask.iter_mut().zip(t.vertex_support(v, self.n)) {
                        *m |= s;
                    }
                }
            }
        }
        mask
    }

    /// Order-`order` term of the contraction exponential
    /// `m o exp(<P, d/dphi (x) d/dphi>) (F (x) G)`, without the power of hbar.
    pub fn contracted(&self, other: &PolyFunctional, kernel: &Arc<[C64]>, order: u32) -> Result<PolyFunctional> {
        self.check(other);
        assert_eq!(kernel.len(), self.n * self.n, "kernel size");
        let mut terms = Vec::new();
        for a in &self.terms {
            for b in &other.terms {
                if a.degree() < order || b.degree() < order {
                    continue;
                }
                let deg = a.degree() + b.degree() - 2 * order;
                if deg > MAX_DEGREE {
                    return Err(Error::DegreeCap { degree: deg, cap: MAX_DEGREE });
                }
                contract_pair(a, b, kernel, order, &mut terms);
            }
        }
        Ok(PolyFunctional { n: self.n, terms }.merged())
    }

    /// Sum over all sets of `pairs` disjoint leg pairings inside each term,
    /// each pairing contributing the kernel `K`.
    pub fn self_contracted(&self, kernel: &Arc<[C64]>, pairs: u32) -> PolyFunctional {
        assert_eq!(kernel.len(), self.n * self.n, "kernel size");
        let n = self.n;
        let diag: Vec<C64> = (0..n).map(|i| kernel[i * n + i]).collect();
        let mut terms = Vec::new();
        for t in &self.terms {
            if t.degree() < 2 * pairs {
                continue;
            }
            self_pair_term(t, kernel, &diag, pairs, &mut terms);
        }
        PolyFunctional { n, terms }.merged()
    }
}

/// Calls `f` with every vector `r` with `r_v <= caps_v` and `sum r = total`.
pub(crate) fn for_each_distribution(caps: &[u32], total: u32, f: &mut dyn FnMut(&[u32])) {
    fn rec(caps: &[u32], i: usize, left: u32, cur: &mut Vec<u32>, f: &mut dyn FnMut(&[u32])) {
        if i == caps.len() {
            if left == 0 {
                f(cur);
            }
            return;
        }
        let rest: u32 = caps[i + 1..].iter().sum();
        let lo = left.saturating_sub(rest);
        for r in lo..=caps[i].min(left) {
            cur.push(r);
            rec(caps, i + 1, left - r, cur, f);
            cur.pop();
        }
    }
    let mut cur = Vec::with_capacity(caps.len());
    rec(caps, 0, total, &mut cur, f);
}

fn contract_pair(a: &Term, b: &Term, kernel: &Arc<[C64]>, order: u32, out: &mut Vec<Term>) {
    let na = a.vertices.len();
    let nb = b.vertices.len();
    let ka: Vec<u32> = a.vertices.iter().map(|v| v.power).collect();
    let kb: Vec<u32> = b.vertices.iter().map(|v| v.power).collect();
    let mut m = vec![0u32; na * nb];
    #[allow(clippy::too_many_arguments)]
    fn rec(
        cell: usize,
        left: u32,
        ra: &mut [u32],
        rb: &mut [u32],
        m: &mut [u32],
        nb: usize,
        emit: &mut dyn FnMut(&[u32], &[u32], &[u32]),
    ) {
        if left == 0 {
            emit(m, ra, rb);
            return;
        }
        if cell == m.len() {
            return;
        }
        let (v, u) = (cell / nb, cell % nb);
        let maxm = ra[v].min(rb[u]).min(left);
        for x in (0..=maxm).rev() {
            m[cell] = x;
            ra[v] -= x;
            rb[u] -= x;
            rec(cell + 1, left - x, ra, rb, m, nb, emit);
            ra[v] += x;
            rb[u] += x;
        }
        m[cell] = 0;
    }
    let mut ra = ka.clone();
    let mut rb = kb.clone();
    let mut emit = |m: &[u32], ra: &[u32], rb: &[u32]| {
        let mut weight = 1.0;
        for v in 0..na {
            weight *= falling(ka[v], ka[v] - ra[v]);
        }
        for u in 0..nb {
            weight *= falling(kb[u], kb[u] - rb[u]);
        }
        for &x in m {
            weight /= factorial(x);
        }
        let mut vertices: Vec<Vertex> = a
            .vertices
            .iter()
            .zip(ra)
            .map(|(v, &r)| Vertex { density: v.density.clone(), power: r })
            .collect();
        vertices.extend(b.vertices.iter().zip(rb).map(|(v, &r)| Vertex { density: v.density.clone(), power: r }));
        let mut factors = a.factors.clone();
        factors.extend(b.shifted_factors(na));
        for (cell, &x) in m.iter().enumerate() {
            for _ in 0..x {
                factors.push(Factor { vars: vec![cell / nb, na + cell % nb], data: kernel.clone() });
            }
        }
        out.push(Term { coeff: a.coeff * b.coeff * weight, vertices, factors });
    };
    rec(0, order, &mut ra, &mut rb, &mut m, nb, &mut emit);
}

fn self_pair_term(t: &Term, kernel: &Arc<[C64]>, diag: &[C64], pairs: u32, out: &mut Vec<Term>) {
    let nv = t.vertices.len();
    let cells: Vec<(usize, usize)> = (0..nv).flat_map(|v| (v..nv).map(move |u| (v, u))).collect();
    let k: Vec<u32> = t.vertices.iter().map(|v| v.power).collect();
    let mut p = vec![0u32; cells.len()];
    let mut used = vec![0u32; nv];
    #[allow(clippy::too_many_arguments)]
    fn rec(
        i: usize,
        left: u32,
        cells: &[(usize, usize)],
        k: &[u32],
        used: &mut [u32],
        p: &mut [u32],
        emit: &mut dyn FnMut(&[u32], &[u32]),
    ) {
        if left == 0 {
            emit(p, used);
            return;
        }
        if i == cells.len() {
            return;
        }
        let (v, u) = cells[i];
        let cap = if v == u { (k[v] - used[v]) / 2 } else { (k[v] - used[v]).min(k[u] - used[u]) };
        for x in (0..=cap.min(left)).rev() {
            p[i] = x;
            if v == u {
                used[v] += 2 * x;
            } else {
                used[v] += x;
                used[u] += x;
            }
            rec(i + 1, left - x, cells, k, used, p, emit);
            if v == u {
                used[v] -= 2 * x;
            } else {
                used[v] -= x;
                used[u] -= x;
            }
        }
        p[i] = 0;
    }
    let mut emit = |p: &[u32], used: &[u32]| {
        let mut weight = 1.0;
        for v in 0..nv {
            weight *= falling(k[v], used[v]);
        }
        let mut vertices: Vec<Vertex> = t
            .vertices
            .iter()
            .zip(used)
            .map(|(v, &r)| Vertex { density: v.density.clone(), power: v.power - r })
            .collect();
        let mut factors = t.factors.clone();
        for (i, &(v, u)) in cells.iter().enumerate() {
            let x = p[i];
            if x == 0 {
                continue;
            }
            weight /= factorial(x);
            if v == u {
                weight /= 2f64.powi(x as i32);
                let d: Vec<C64> = vertices[v]
                    .density
                    .iter()
                    .zip(diag)
                    .map(|(g, kd)| g * kd.powu(x))
                    .collect();
                vertices[v].density = d.into();
            } else {
                for _ in 0..x {
                    factors.push(Factor { vars: vec![v, u], data: kernel.clone() });
                }
            }
        }
        out.push(Term { coeff: t.coeff * weight, vertices, factors });
    };
    rec(0, pairs, &cells, &k, &mut used, &mut p, &mut emit);
}

/// Largest relative deviation between two functionals over a set of probe
/// fields, compared degree by degree.
///
/// For each probe `h` and each degree `k` the homogeneous parts
/// `<F^(k)(0), h^k>/k!` are compared, scaled by `max(1, |F_k(h)|, |G_k(h)|)`.
pub fn probe_distance(a: &PolyFunctional, b: &PolyFunctional, grid: &Grid, probes: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for h in probes {
        let ga = a.graded_values(grid, h);
        let gb = b.graded_values(grid, h);
        for k in 0..ga.len().max(gb.len()) {
            let x = ga.get(k).copied().unwrap_or_default();
            let y = gb.get(k).copied().unwrap_or_default();
            let scale = 1f64.max(x.norm()).max(y.norm());
            worst = worst.max((x - y).norm() / scale);
        }
    }
    worst
}
