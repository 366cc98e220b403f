//! Test functions on R^d built from polynomials times radial profiles, with
//! closed-form Taylor data and angular projections.

use rand::Rng;

use crate::{Error, Result};

/// Multi-indices of length `d` with `|alpha| <= n`, graded by order.
pub fn multi_indices(d: usize, n: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for total in 0..=n {
        let mut cur = vec![0u32; d];
        fn rec(i: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
            if i + 1 == cur.len() {
                cur[i] = left;
                out.push(cur.clone());
                return;
            }
            for x in (0..=left).rev() {
                cur[i] = x;
                rec(i + 1, left - x, cur, out);
            }
        }
        if d == 0 {
            if total == 0 {
                out.push(Vec::new());
            }
            continue;
        }
        rec(0, total, &mut cur, &mut out);
    }
    out
}

fn fact(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// `int_{S^{d-1}} theta^alpha dsigma`.
pub fn sphere_moment(alpha: &[u32]) -> f64 {
    if alpha.iter().any(|a| a % 2 == 1) {
        return 0.0;
    }
    let d = alpha.len() as f64;
    let total: u32 = alpha.iter().sum();
    let num: f64 = alpha.iter().map(|&a| libm::tgamma((a as f64 + 1.0) / 2.0)).product();
    2.0 * num / libm::tgamma((total as f64 + d) / 2.0)
}

/// Radial profile `rho(|x|)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Profile {
    /// `exp(-r^2 / width^2)`.
    Gaussian { width: f64 },
    /// `exp(1 - 1/(1 - r^2/radius^2))` for `r < radius`.
    Bump { radius: f64 },
}

const TAYLOR_TERMS: usize = 40;

impl Profile {
    pub fn value(&self, r: f64) -> f64 {
        match *self {
            Profile::Gaussian { width } => (-(r / width).powi(2)).exp(),
            Profile::Bump { radius } => {
                let u = (r / radius).powi(2);
                if u >= 1.0 {
                    0.0
                } else {
                    (1.0 - 1.0 / (1.0 - u)).exp()
                }
            }
        }
    }

    /// Coefficients of `r^{2m}`, `m < terms`.
    pub fn even_taylor(&self, terms: usize) -> Vec<f64> {
        match *self {
            Profile::Gaussian { width } => {
                let mut out = Vec::with_capacity(terms);
                let mut c = 1.0;
                for m in 0..terms {
                    out.push(c);
                    c *= -1.0 / (width * width * (m as f64 + 1.0));
                }
                out
            }
            Profile::Bump { radius } => {
                // exp(-(u + u^2 + ..)) in u = r^2/radius^2
                let mut e = vec![0.0; terms];
                e[0] = 1.0;
                for n in 1..terms {
                    let s: f64 = (1..=n).map(|k| -(k as f64) * e[n - k]).sum();
                    e[n] = s / n as f64;
                }
                let r2 = radius * radius;
                e.iter().enumerate().map(|(m, c)| c / r2.powi(m as i32)).collect()
            }
        }
    }

    /// Radius below which the Taylor series is used instead of the closed form.
    pub fn taylor_radius(&self) -> f64 {
        match *self {
            Profile::Gaussian { width } => 0.5 * width,
            Profile::Bump { radius } => 0.3 * radius,
        }
    }

    /// Radius beyond which the profile vanishes to double precision.
    pub fn cutoff(&self) -> f64 {
        match *self {
            Profile::Gaussian { width } => 28.0 * width,
            Profile::Bump { radius } => radius,
        }
    }

    fn dilated(&self, lambda: f64) -> Profile {
        match *self {
            Profile::Gaussian { width } => Profile::Gaussian { width: width * lambda },
            Profile::Bump { radius } => Profile::Bump { radius: radius * lambda },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Part {
    poly: Vec<(Vec<u32>, f64)>,
    profile: Profile,
}

/// A finite sum of `p(x) rho(|x|)` with polynomial `p`.
#[derive(Clone, Debug, PartialEq)]
pub struct TestFunction {
    dim: usize,
    parts: Vec<Part>,
}

impl TestFunction {
    pub fn new(dim: usize, poly: Vec<(Vec<u32>, f64)>, profile: Profile) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("test functions need d >= 1".into()));
        }
        if poly.iter().any(|(a, _)| a.len() != dim) {
            return Err(Error::Invalid("multi-index length differs from the dimension".into()));
        }
        Ok(TestFunction { dim, parts: vec![Part { poly, profile }] })
    }

    /// `exp(-|x|^2 / width^2)`.
    pub fn gaussian(dim: usize, width: f64) -> Self {
        Self::new(dim, vec![(vec![0; dim], 1.0)], Profile::Gaussian { width }).expect("valid")
    }

    /// Random polynomial of the given degree times a Gaussian of random width.
    pub fn random(dim: usize, degree: u32, rng: &mut impl Rng) -> Self {
        let poly = multi_indices(dim, degree).into_iter().map(|a| (a, rng.gen_range(-1.0..1.0))).collect();
        let width = rng.gen_range(0.6..1.6);
        Self::new(dim, poly, Profile::Gaussian { width }).expect("valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn add(&self, other: &TestFunction) -> TestFunction {
        assert_eq!(self.dim, other.dim);
        let mut parts = self.parts.clone();
        parts.extend(other.parts.iter().cloned());
        TestFunction { dim: self.dim, parts }
    }

    pub fn scale(&self, c: f64) -> TestFunction {
        let parts = self
            .parts
            .iter()
            .map(|p| Part { poly: p.poly.iter().map(|(a, x)| (a.clone(), x * c)).collect(), profile: p.profile.clone() })
            .collect();
        TestFunction { dim: self.dim, parts }
    }

    /// `x -> f(x / lambda)`.
    pub fn dilated(&self, lambda: f64) -> TestFunction {
        let parts = self
            .parts
            .iter()
            .map(|p| Part {
                poly: p
                    .poly
                    .iter()
                    .map(|(a, x)| (a.clone(), x * lambda.powi(-(a.iter().sum::<u32>() as i32))))
                    .collect(),
                profile: p.profile.dilated(lambda),
            })
            .collect();
        TestFunction { dim: self.dim, parts }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.parts
            .iter()
            .map(|p| {
                let poly: f64 = p
                    .poly
                    .iter()
                    .map(|(a, c)| c * a.iter().zip(x).map(|(&k, &xi)| xi.powi(k as i32)).product::<f64>())
                    .sum();
                poly * p.profile.value(r)
            })
            .sum()
    }

    /// `d^alpha f (0)`.
    pub fn derivative_at_origin(&self, alpha: &[u32]) -> f64 {
        let mut total = 0.0;
        for p in &self.parts {
            let rho = p.profile.even_taylor(TAYLOR_TERMS);
            for (g, c) in &p.poly {
                // coefficient of x^{alpha - g} in rho(|x|)
                if g.iter().zip(alpha).any(|(gi, ai)| gi > ai) {
                    continue;
                }
                let rest: Vec<u32> = alpha.iter().zip(g).map(|(a, gi)| a - gi).collect();
                if rest.iter().any(|k| k % 2 == 1) {
                    continue;
                }
                let mu: Vec<u32> = rest.iter().map(|k| k / 2).collect();
                let m: u32 = mu.iter().sum();
                if m as usize >= rho.len() {
                    continue;
                }
                let multinomial = fact(m) / mu.iter().map(|&k| fact(k)).product::<f64>();
                total += c * rho[m as usize] * multinomial;
            }
        }
        total * alpha.iter().map(|&a| fact(a)).product::<f64>()
    }

    /// Projection onto the angular monomial `theta^beta`.
    pub fn radial_part(&self, beta: &[u32]) -> RadialFunction {
        let mut pieces = Vec::new();
        for (pi, p) in self.parts.iter().enumerate() {
            for (g, c) in &p.poly {
                let sum: Vec<u32> = g.iter().zip(beta).map(|(a, b)| a + b).collect();
                let s = sphere_moment(&sum);
                if s != 0.0 && *c != 0.0 {
                    pieces.push((g.iter().sum::<u32>(), c * s, pi));
                }
            }
        }
        RadialFunction { profiles: self.parts.iter().map(|p| p.profile.clone()).collect(), pieces }
    }
}

/// `F(r) = sum_k c_k r^k rho_k(r)`, the angular projection of a test function.
#[derive(Clone, Debug)]
pub struct RadialFunction {
    profiles: Vec<Profile>,
    pieces: Vec<(u32, f64, usize)>,
}

impl RadialFunction {
    pub fn value(&self, r: f64) -> f64 {
        self.pieces.iter().map(|&(k, c, p)| c * r.powi(k as i32) * self.profiles[p].value(r)).sum()
    }

    /// Taylor coefficients of `F` at `r = 0` up to order `n`.
    pub fn taylor(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n + 1];
        let rhos: Vec<Vec<f64>> = self.profiles.iter().map(|p| p.even_taylor(n / 2 + 1)).collect();
        for &(k, c, p) in &self.pieces {
            for (m, r) in rhos[p].iter().enumerate() {
                let idx = k as usize + 2 * m;
                if idx <= n {
                    out[idx] += c * r;
                }
            }
        }
        out
    }

    pub fn taylor_radius(&self) -> f64 {
        self.pieces.iter().map(|&(_, _, p)| self.profiles[p].taylor_radius()).fold(f64::INFINITY, f64::min)
    }

    pub fn cutoff(&self) -> f64 {
        self.pieces.iter().map(|&(_, _, p)| self.profiles[p].cutoff()).fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.pieces.is_empty()
    }

    /// `F(r) - sum_{k <= order} F_k r^k`, evaluated stably near the origin.
    pub fn remainder(&self, taylor: &[f64], order: i64, r: f64) -> f64 {
        if r < self.taylor_radius() {
            taylor.iter().enumerate().skip((order + 1).max(0) as usize).map(|(k, c)| c * r.powi(k as i32)).sum()
        } else {
            self.value(r) - poly_head(taylor, order, r)
        }
    }
}

pub(crate) fn poly_head(taylor: &[f64], order: i64, r: f64) -> f64 {
    taylor.iter().take((order + 1).max(0) as usize).enumerate().map(|(k, c)| c * r.powi(k as i32)).sum()
}

pub(crate) const REMAINDER_TERMS: usize = TAYLOR_TERMS;
