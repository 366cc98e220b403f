//! Extension of distributions defined away from the origin of R^d.
//!
//! Distributions are finite sums of radial homogeneous terms
//! `c |x|^{-a} (log|x|)^j theta^beta` with `theta = x/|x|`. Test functions
//! are polynomials times radial profiles, so every pairing reduces to a
//! one-dimensional radial integral of the angular projection.

mod quad;
pub mod testfn;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result, C64};
pub use quad::{geometric_breaks, integrate};
pub use testfn::{multi_indices, sphere_moment, Profile, RadialFunction, TestFunction};
use testfn::{poly_head, REMAINDER_TERMS};

/// Highest pole order produced by analytic regularization.
pub const POLE_CAP: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct DistributionTerm {
    pub coeff: C64,
    /// The term scales like `|x|^{-a}`.
    pub a: f64,
    pub log_power: u32,
    /// Angular monomial exponents; in d = 1, `[0]` is even and `[1]` is `sign(x)`.
    pub angular: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelDistribution {
    pub dim: usize,
    pub terms: Vec<DistributionTerm>,
}

fn floor_tol(x: f64) -> i64 {
    (x + 1e-9).floor() as i64
}

impl ModelDistribution {
    pub fn new(dim: usize, terms: Vec<DistributionTerm>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("dimension must be at least 1".into()));
        }
        for t in &terms {
            if t.angular.len() != dim {
                return Err(Error::Invalid("angular multi-index length differs from the dimension".into()));
            }
            if !t.a.is_finite() {
                return Err(Error::NonFinite("homogeneity degree".into()));
            }
        }
        Ok(ModelDistribution { dim, terms })
    }

    /// `|x|^{-a}`.
    pub fn abs_pow(dim: usize, a: f64) -> Self {
        Self::monomial(dim, a, 0, vec![0; dim])
    }

    pub fn monomial(dim: usize, a: f64, log_power: u32, angular: Vec<u32>) -> Self {
        ModelDistribution {
            dim,
            terms: vec![DistributionTerm { coeff: C64::new(1.0, 0.0), a, log_power, angular }],
        }
    }

    /// Parses `abs_pow:<p>`, `abs_pow_log:<p>:<j>` or `sign_pow:<p>` with
    /// `|x|^p`; the angular tag `sign` is only meaningful in d = 1.
    pub fn parse(spec: &str, dim: usize) -> Result<Self> {
        let parts: Vec<&str> = spec.split(':').collect();
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::Invalid(format!("bad number '{s}' in '{spec}'")));
        match parts.as_slice() {
            ["abs_pow", p] => Ok(Self::abs_pow(dim, -num(p)?)),
            ["abs_pow_log", p, j] => {
                let j = j.trim().parse::<u32>().map_err(|_| Error::Invalid(format!("bad log power in '{spec}'")))?;
                Ok(Self::monomial(dim, -num(p)?, j, vec![0; dim]))
            }
            ["sign_pow", p] if dim == 1 => Ok(Self::monomial(1, -num(p)?, 0, vec![1])),
            _ => Err(Error::Invalid(format!("unknown distribution '{spec}'"))),
        }
    }

    pub fn add(&self, other: &ModelDistribution) -> Result<ModelDistribution> {
        if self.dim != other.dim {
            return Err(Error::Dimension { expected: self.dim, got: other.dim });
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Ok(ModelDistribution { dim: self.dim, terms })
    }

    pub fn scale(&self, c: C64) -> ModelDistribution {
        let terms = self.terms.iter().map(|t| DistributionTerm { coeff: t.coeff * c, ..t.clone() }).collect();
        ModelDistribution { dim: self.dim, terms }
    }

    /// Analytic scaling degree `max a`; logarithms do not change it.
    pub fn scaling_degree(&self) -> f64 {
        self.terms.iter().filter(|t| t.coeff != C64::new(0.0, 0.0)).map(|t| t.a).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `sd - d`.
    pub fn divergence(&self) -> f64 {
        self.scaling_degree() - self.dim as f64
    }

    /// `floor(sd - d)`, negative when the extension is unique.
    pub fn extension_order(&self) -> i64 {
        floor_tol(self.divergence())
    }

    /// Plain pairing; requires `sd < d`.
    pub fn pairing(&self, f: &TestFunction) -> Result<C64> {
        if self.extension_order() >= 0 {
            return Err(Error::Unsupported(format!(
                "pairing diverges at the origin (sd - d = {})",
                self.divergence()
            )));
        }
        w_extend(self, &WProjection::new(-1, 0.25, 1.0)?, f)
    }

    fn check(&self, f: &TestFunction) -> Result<()> {
        if f.dim() != self.dim {
            return Err(Error::Dimension { expected: self.dim, got: f.dim() });
        }
        Ok(())
    }
}

/// The analytically regularized family `t^zeta` with `a -> a - zeta`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegularizationFamily {
    pub base: ModelDistribution,
}

impl RegularizationFamily {
    pub fn new(base: ModelDistribution) -> Self {
        RegularizationFamily { base }
    }
}

/// Laurent data of `zeta -> <t^zeta, f>` around `zeta = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct LaurentSeries {
    /// `principal[k]` multiplies `zeta^{-(k+1)}`.
    pub principal: Vec<C64>,
    /// `regular[m]` multiplies `zeta^m`.
    pub regular: Vec<C64>,
}

impl LaurentSeries {
    pub fn pole_order(&self) -> usize {
        self.principal.iter().rposition(|c| c.norm() > 0.0).map_or(0, |k| k + 1)
    }

    pub fn evaluate(&self, zeta: C64) -> C64 {
        let mut v = C64::new(0.0, 0.0);
        for (k, c) in self.principal.iter().enumerate() {
            v += c / zeta.powi(k as i32 + 1);
        }
        for (m, c) in self.regular.iter().enumerate() {
            v += c * zeta.powi(m as i32);
        }
        v
    }

    /// Drops the principal part.
    pub fn minimal_subtraction(&self) -> LaurentSeries {
        LaurentSeries { principal: vec![C64::new(0.0, 0.0); self.principal.len()], regular: self.regular.clone() }
    }
}

fn binom(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn fact(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Laurent expansion through `zeta^{orders}` by splitting at the unit sphere:
/// inside, the Taylor polynomial of the angular projection is subtracted and
/// its moments give the poles in closed form; the rest is ζ-analytic.
pub fn analytic_regularize(family: &RegularizationFamily, f: &TestFunction, orders: usize) -> Result<LaurentSeries> {
    let t = &family.base;
    t.check(f)?;
    let mut principal = vec![C64::new(0.0, 0.0); POLE_CAP];
    let mut regular = vec![C64::new(0.0, 0.0); orders + 1];
    for term in &t.terms {
        let rf = f.radial_part(&term.angular);
        if rf.is_zero() || term.coeff == C64::new(0.0, 0.0) {
            continue;
        }
        let d = t.dim as f64;
        let s0 = d - term.a;
        let k_sub = floor_tol(term.a - d);
        let j = term.log_power;
        let taylor = rf.taylor((k_sub.max(0) as usize) + REMAINDER_TERMS + 1);
        let cut = rf.cutoff().max(2.0);
        let inner_breaks = [0.0, rf.taylor_radius().min(1.0), 1.0];
        let outer_breaks = geometric_breaks(1.0, cut);
        for m in 0..=orders {
            let p = (j as usize + m) as i32;
            let norm = fact(m as u32);
            let inner = integrate(
                &|r: f64| {
                    if r == 0.0 {
                        return 0.0;
                    }
                    r.powf(s0 - 1.0) * r.ln().powi(p) * rf.remainder(&taylor, k_sub, r)
                },
                &inner_breaks,
            )?;
            let outer = if cut > 1.0 {
                integrate(&|r: f64| r.powf(s0 - 1.0) * r.ln().powi(p) * rf.value(r), &outer_breaks)?
            } else {
                0.0
            };
            regular[m] += term.coeff * ((inner + outer) / norm);
        }
        // int_0^1 r^{s0 + k + zeta - 1} (log r)^j dr = (-1)^j j! / (s0 + k + zeta)^{j+1}
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let jf = fact(j);
        for k in 0..=k_sub.max(-1) {
            if k < 0 {
                break;
            }
            let fk = taylor[k as usize];
            if fk == 0.0 {
                continue;
            }
            let b = s0 + k as f64;
            if b.abs() < 1e-9 {
                if j as usize >= POLE_CAP {
                    return Err(Error::DivergenceCap(format!("pole of order {} exceeds cap {POLE_CAP}", j + 1)));
                }
                principal[j as usize] += term.coeff * (sign * jf * fk);
            } else {
                for (m, slot) in regular.iter_mut().enumerate() {
                    let mf = m as u32;
                    let c = sign * jf * binom(j + mf, mf) * if m % 2 == 0 { 1.0 } else { -1.0 } / b.powi((j + 1 + mf) as i32);
                    *slot += term.coeff * (c * fk);
                }
            }
        }
    }
    Ok(LaurentSeries { principal, regular })
}

/// Minimal subtraction: the regular part of the Laurent series at `zeta = 0`.
pub fn ms_extend(family: &RegularizationFamily, f: &TestFunction) -> Result<C64> {
    Ok(analytic_regularize(family, f, 0)?.regular[0])
}

/// Projection `W f = f - sum_{|alpha| <= order} f^(alpha)(0) x^alpha w(x) / alpha!`.
#[derive(Clone, Debug, PartialEq)]
pub struct WProjection {
    pub order: i64,
    /// `w = 1` on `[0, flat]`.
    pub flat: f64,
    /// `w = 0` beyond `support`.
    pub support: f64,
    /// Number of continuous derivatives of `w`.
    pub smoothness: u32,
}

impl WProjection {
    pub fn new(order: i64, flat: f64, support: f64) -> Result<Self> {
        if !(0.0 < flat && flat < support) {
            return Err(Error::Invalid(format!("bump needs 0 < flat < support, got {flat}, {support}")));
        }
        Ok(WProjection { order, flat, support, smoothness: (order + 2).max(2) as u32 })
    }

    /// The projection of order `floor(sd - d)` with `w = 1` on `[0, 1/4]`.
    pub fn for_distribution(t: &ModelDistribution, support: f64) -> Result<Self> {
        Self::new(t.extension_order(), 0.25, support)
    }

    /// Radial bump `w(r)`.
    pub fn bump(&self, r: f64) -> f64 {
        if r <= self.flat {
            1.0
        } else if r >= self.support {
            0.0
        } else {
            1.0 - smoothstep(self.smoothness, (r - self.flat) / (self.support - self.flat))
        }
    }

    /// `w_alpha(x) = x^alpha w(|x|) / alpha!`.
    pub fn w_alpha(&self, alpha: &[u32], x: &[f64]) -> f64 {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mono: f64 = alpha.iter().zip(x).map(|(&a, &xi)| xi.powi(a as i32) / fact(a)).product();
        mono * self.bump(r)
    }
}

/// `S_n(u)`: rises from 0 to 1 on `[0, 1]` with `n` vanishing derivatives at both ends.
pub fn smoothstep(n: u32, u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    let mut s = 0.0;
    for k in 0..=n {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        s += sign * binom(n + k, k) * binom(2 * n + 1, n - k) * u.powi(k as i32);
    }
    s * u.powi(n as i32 + 1)
}

/// `<t, W f>`, an extension of `t` to the origin.
pub fn w_extend(t: &ModelDistribution, w: &WProjection, f: &TestFunction) -> Result<C64> {
    t.check(f)?;
    if w.order < t.extension_order() {
        return Err(Error::Invalid(format!(
            "projection order {} below floor(sd - d) = {}",
            w.order,
            t.extension_order()
        )));
    }
    let mut total = C64::new(0.0, 0.0);
    for term in &t.terms {
        let rf = f.radial_part(&term.angular);
        if rf.is_zero() || term.coeff == C64::new(0.0, 0.0) {
            continue;
        }
        let s0 = t.dim as f64 - term.a;
        let j = term.log_power as i32;
        let taylor = rf.taylor(w.order.max(0) as usize + REMAINDER_TERMS + 1);
        let near = rf.taylor_radius().min(w.flat);
        let cut = rf.cutoff().max(w.support) * 1.0001;
        let integrand = |r: f64| {
            if r == 0.0 {
                return 0.0;
            }
            let g = if r < near {
                rf.remainder(&taylor, w.order, r)
            } else {
                rf.value(r) - w.bump(r) * poly_head(&taylor, w.order, r)
            };
            r.powf(s0 - 1.0) * r.ln().powi(j) * g
        };
        let mut breaks = vec![0.0, near, w.flat, w.support];
        breaks.extend(geometric_breaks(w.support, cut));
        breaks.retain(|x| *x <= cut);
        total += term.coeff * integrate(&integrand, &breaks)?;
    }
    Ok(total)
}

/// Least-squares fit of a difference of extensions against `f^(alpha)(0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AmbiguityFit {
    pub alphas: Vec<Vec<u32>>,
    pub coefficients: Vec<C64>,
    /// Maximal absolute fit residual over the test functions.
    pub residual: f64,
}

/// Fits `values[i] ~ sum_alpha c_alpha f_i^(alpha)(0)` over `|alpha| <= order`.
pub fn fit_delta_polynomial(fs: &[TestFunction], values: &[C64], order: i64) -> Result<AmbiguityFit> {
    if fs.is_empty() || fs.len() != values.len() {
        return Err(Error::Invalid("fit needs one value per test function".into()));
    }
    let dim = fs[0].dim();
    if order < 0 {
        let residual = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        return Ok(AmbiguityFit { alphas: Vec::new(), coefficients: Vec::new(), residual });
    }
    let alphas = multi_indices(dim, order as u32);
    if fs.len() < alphas.len() {
        return Err(Error::Degenerate(format!("{} test functions for {} unknowns", fs.len(), alphas.len())));
    }
    let a = DMatrix::from_fn(fs.len(), alphas.len(), |i, k| fs[i].derivative_at_origin(&alphas[k]));
    let svd = a.clone().svd(true, true);
    let re = DVector::from_iterator(values.len(), values.iter().map(|v| v.re));
    let im = DVector::from_iterator(values.len(), values.iter().map(|v| v.im));
    let eps = 1e-12 * svd.singular_values.max();
    let xr = svd.solve(&re, eps).map_err(|e| Error::Degenerate(e.to_string()))?;
    let xi = svd.solve(&im, eps).map_err(|e| Error::Degenerate(e.to_string()))?;
    let rr = &a * &xr - &re;
    let ri = &a * &xi - &im;
    let residual = rr.iter().zip(ri.iter()).map(|(x, y)| x.hypot(*y)).fold(0.0, f64::max);
    let coefficients = xr.iter().zip(xi.iter()).map(|(x, y)| C64::new(*x, *y)).collect();
    Ok(AmbiguityFit { alphas, coefficients, residual })
}

/// `<ms - w_extend, f>` fitted against derivatives at the origin.
pub fn ms_vs_w_ambiguity(
    family: &RegularizationFamily,
    w: &WProjection,
    fs: &[TestFunction],
) -> Result<AmbiguityFit> {
    let values = fs
        .iter()
        .map(|f| Ok(ms_extend(family, f)? - w_extend(&family.base, w, f)?))
        .collect::<Result<Vec<_>>>()?;
    fit_delta_polynomial(fs, &values, family.base.extension_order())
}

/// `#{alpha : |alpha| <= floor(sd - d)}` restricted to indices allowed by parity.
pub fn ambiguity_dimension(t: &ModelDistribution) -> usize {
    let order = t.extension_order();
    if order < 0 {
        return 0;
    }
    multi_indices(t.dim, order as u32)
        .into_iter()
        .filter(|alpha| {
            t.terms.iter().any(|term| alpha.iter().zip(&term.angular).all(|(a, b)| (a + b) % 2 == 0))
        })
        .count()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingEstimate {
    pub value: f64,
    /// Two standard errors of the fitted slope.
    pub width: f64,
}

/// `sd` from samples `(lambda, <t_lambda, f>)` as minus the least-squares
/// slope of `log|value|` against `log lambda`.
pub fn estimate_scaling_degree(samples: &[(f64, C64)]) -> Result<ScalingEstimate> {
    if samples.len() < 6 {
        return Err(Error::Degenerate(format!("{} scales, need at least 6", samples.len())));
    }
    let pts: Vec<(f64, f64)> =
        samples.iter().filter(|(_, v)| v.norm() > 1e-300).map(|(l, v)| (l.ln(), v.norm().ln())).collect();
    if pts.len() < 6 {
        return Err(Error::Degenerate("pairings vanish at the sampled scales".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::Degenerate("all scales coincide".into()));
    }
    let slope = sxy / sxx;
    let sse: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    let se = (sse / (n - 2.0) / sxx).sqrt();
    Ok(ScalingEstimate { value: -slope, width: 2.0 * se })
}

/// Samples `lambda^{-d} <t, f(./lambda)>` for a pairing `t`.
pub fn scaling_samples(
    dim: usize,
    f: &TestFunction,
    lambdas: &[f64],
    pairing: &dyn Fn(&TestFunction) -> Result<C64>,
) -> Result<Vec<(f64, C64)>> {
    lambdas
        .iter()
        .map(|&l| Ok((l, pairing(&f.dilated(l))? * l.powi(-(dim as i32)))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::rng;

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

    /// Independent composite Simpson rule on `[a, b]`.
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    fn re(z: C64) -> f64 {
        assert!(z.im.abs() < 1e-14);
        z.re
    }

    #[test]
    fn pole_of_inverse_abs() {
        let mut r = rng(2);
        for _ in 0..4 {
            let f = TestFunction::random(1, 3, &mut r);
            let l = analytic_regularize(&RegularizationFamily::new(ModelDistribution::abs_pow(1, 1.0)), &f, 2).unwrap();
            assert!((l.principal[0].re - 2.0 * f.eval(&[0.0])).abs() < 1e-12);
            assert_eq!(l.pole_order(), 1);
        }
    }

    #[test]
    fn minimal_subtraction_of_gaussian_is_minus_euler_gamma() {
        let f = TestFunction::gaussian(1, 1.0);
        let v = ms_extend(&RegularizationFamily::new(ModelDistribution::abs_pow(1, 1.0)), &f).unwrap();
        assert!((re(v) + EULER_GAMMA).abs() < 1e-10, "{v}");
    }

    #[test]
    fn second_and_third_powers() {
        let mut r = rng(5);
        let f = TestFunction::random(1, 3, &mut r);
        let l2 = analytic_regularize(&RegularizationFamily::new(ModelDistribution::abs_pow(1, 2.0)), &f, 1).unwrap();
        assert_eq!(l2.pole_order(), 0);
        let l3 = analytic_regularize(&RegularizationFamily::new(ModelDistribution::abs_pow(1, 3.0)), &f, 1).unwrap();
        assert!((l3.principal[0].re - f.derivative_at_origin(&[2])).abs() < 1e-12);
    }

    #[test]
    fn laurent_series_reconstructs_convergent_pairings() {
        // for zeta > 0 the pairing of |x|^{zeta - 1} converges directly
        let f = TestFunction::gaussian(1, 1.0);
        let l = analytic_regularize(&RegularizationFamily::new(ModelDistribution::abs_pow(1, 1.0)), &f, 10).unwrap();
        for zeta in [0.2, 0.35] {
            let direct = 2.0 * 0.5 * libm::tgamma(zeta / 2.0);
            assert!((l.evaluate(C64::new(zeta, 0.0)).re - direct).abs() < 1e-7, "{zeta}");
        }
    }

    #[test]
    fn log_poles_have_higher_order() {
        // int_0^1 r^{zeta-1} log r dr = -1/zeta^2
        let f = TestFunction::gaussian(1, 1.0);
        let t = ModelDistribution::monomial(1, 1.0, 1, vec![0]);
        let l = analytic_regularize(&RegularizationFamily::new(t), &f, 1).unwrap();
        assert_eq!(l.pole_order(), 2);
        assert!((l.principal[1].re + 2.0).abs() < 1e-12);
        let t = ModelDistribution::monomial(1, 1.0, 3, vec![0]);
        assert!(matches!(
            analytic_regularize(&RegularizationFamily::new(t), &f, 0),
            Err(Error::DivergenceCap(_))
        ));
    }

    #[test]
    fn w_extension_matches_direct_oracle() {
        let t = ModelDistribution::abs_pow(1, 1.0);
        let w = WProjection::for_distribution(&t, 1.0).unwrap();
        let f = TestFunction::gaussian(1, 1.0);
        let v = re(w_extend(&t, &w, &f).unwrap());
        // 2 int_0^inf (f(x) - f(0) w(x)) / x dx with an independent rule
        let g = |x: f64| if x == 0.0 { 0.0 } else { 2.0 * (f.eval(&[x]) - w.bump(x)) / x };
        let near = simpson(&g, 0.0, 0.25, 2000);
        let oracle = near + simpson(&g, 0.25, 1.0, 20000) + simpson(&g, 1.0, 30.0, 200000);
        assert!((v - oracle).abs() < 1e-8, "{v} vs {oracle}");
    }

    #[test]
    fn subcritical_extension_is_the_pairing() {
        let t = ModelDistribution::abs_pow(1, 0.5);
        assert_eq!(t.extension_order(), -1);
        let f = TestFunction::gaussian(1, 1.0);
        let v = re(t.pairing(&f).unwrap());
        // 2 int_0^inf x^{-1/2} e^{-x^2} dx = Gamma(1/4)
        assert!((v - libm::tgamma(0.25)).abs() < 1e-10);
        let w = WProjection::for_distribution(&t, 1.0).unwrap();
        assert!((re(w_extend(&t, &w, &f).unwrap()) - v).abs() < 1e-14);
        assert_eq!(ambiguity_dimension(&t), 0);
        assert!(ModelDistribution::abs_pow(1, 1.0).pairing(&f).is_err());
    }

    #[test]
    fn two_projections_differ_by_a_delta() {
        let t = ModelDistribution::abs_pow(1, 1.0);
        let w1 = WProjection::for_distribution(&t, 1.0).unwrap();
        let w2 = WProjection::for_distribution(&t, 1.7).unwrap();
        let mut r = rng(11);
        let fs: Vec<TestFunction> = (0..10).map(|_| TestFunction::random(1, 3, &mut r)).collect();
        let diffs: Vec<C64> =
            fs.iter().map(|f| w_extend(&t, &w1, f).unwrap() - w_extend(&t, &w2, f).unwrap()).collect();
        let fit = fit_delta_polynomial(&fs, &diffs, 0).unwrap();
        assert!(fit.residual < 1e-8);
        // c = <t, w2 - w1> = 2 int (w2 - w1)/x
        let oracle = simpson(&|x| 2.0 * (w2.bump(x) - w1.bump(x)) / x, 0.25, 1.7, 40000);
        assert!((fit.coefficients[0].re - oracle).abs() < 1e-8);
    }

    #[test]
    fn ms_and_w_differ_by_delta_polynomials() {
        let mut r = rng(12);
        let fs: Vec<TestFunction> = (0..10).map(|_| TestFunction::random(1, 4, &mut r)).collect();
        let fam = RegularizationFamily::new(ModelDistribution::abs_pow(1, 1.0));
        let w = WProjection::for_distribution(&fam.base, 1.0).unwrap();
        let fit = ms_vs_w_ambiguity(&fam, &w, &fs).unwrap();
        assert!(fit.residual < 1e-7);
        assert_eq!(fit.coefficients.len(), 1);
        let fam3 = RegularizationFamily::new(ModelDistribution::abs_pow(1, 3.0));
        let w3 = WProjection::for_distribution(&fam3.base, 1.0).unwrap();
        let fit3 = ms_vs_w_ambiguity(&fam3, &w3, &fs).unwrap();
        assert!(fit3.residual < 1e-7);
        assert_eq!(fit3.alphas, vec![vec![0], vec![1], vec![2]]);
        assert!(fit3.coefficients[1].norm() < 1e-8);
        assert!(fit3.coefficients[0].norm() > 1e-3 && fit3.coefficients[2].norm() > 1e-3);
        assert_eq!(ambiguity_dimension(&fam3.base), 2);
    }

    #[test]
    fn projection_moments() {
        let w = WProjection::new(2, 0.25, 1.0).unwrap();
        let h = 1e-3;
        for a in 0..=2u32 {
            let g = |x: f64| w.w_alpha(&[a], &[x]);
            let d0 = g(0.0);
            let d1 = (g(h) - g(-h)) / (2.0 * h);
            let d2 = (g(h) - 2.0 * g(0.0) + g(-h)) / (h * h);
            let expect = |b: u32| if a == b { 1.0 } else { 0.0 };
            assert!((d0 - expect(0)).abs() < 1e-6);
            assert!((d1 - expect(1)).abs() < 1e-6);
            assert!((d2 - expect(2)).abs() < 1e-6);
        }
        assert!((smoothstep(4, 0.5) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn scaling_degree_estimates() {
        let f = TestFunction::gaussian(1, 1.0);
        let lambdas: Vec<f64> = (6..=12).map(|k| 10f64.powi(-k)).collect();
        let t = ModelDistribution::monomial(1, 0.0, 1, vec![0]);
        let s = scaling_samples(1, &f, &lambdas, &|g| t.pairing(g)).unwrap();
        let est = estimate_scaling_degree(&s).unwrap();
        assert!(est.value.abs() < 0.1, "{est:?}");
        let t = ModelDistribution::abs_pow(2, 1.5);
        let f2 = TestFunction::gaussian(2, 1.0);
        let lambdas: Vec<f64> = (1..=8).map(|k| 0.5f64.powi(k)).collect();
        let s = scaling_samples(2, &f2, &lambdas, &|g| t.pairing(g)).unwrap();
        assert!((estimate_scaling_degree(&s).unwrap().value - 1.5).abs() < 1e-6);
        assert!(estimate_scaling_degree(&s[..4]).is_err());
    }

    #[test]
    fn extensions_keep_the_scaling_degree() {
        let f = TestFunction::gaussian(1, 1.0);
        let lambdas: Vec<f64> = (6..=12).map(|k| 10f64.powi(-k)).collect();
        let fam = RegularizationFamily::new(ModelDistribution::abs_pow(1, 1.0));
        let w = WProjection::for_distribution(&fam.base, 1.0).unwrap();
        let s = scaling_samples(1, &f, &lambdas, &|g| w_extend(&fam.base, &w, g)).unwrap();
        assert!((estimate_scaling_degree(&s).unwrap().value - 1.0).abs() < 0.1);
        let s = scaling_samples(1, &f, &lambdas, &|g| ms_extend(&fam, g)).unwrap();
        assert!((estimate_scaling_degree(&s).unwrap().value - 1.0).abs() < 0.1);
    }

    #[test]
    fn higher_dimensional_pole() {
        // |x|^{-4} in R^4: pole residue |S^3| f(0) = 2 pi^2 f(0)
        let f = TestFunction::gaussian(4, 1.3);
        let l = analytic_regularize(&RegularizationFamily::new(ModelDistribution::abs_pow(4, 4.0)), &f, 0).unwrap();
        assert!((l.principal[0].re - 2.0 * std::f64::consts::PI.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn parsing() {
        assert_eq!(ModelDistribution::parse("abs_pow:-1", 1).unwrap(), ModelDistribution::abs_pow(1, 1.0));
        assert!(ModelDistribution::parse("sign_pow:-2", 1).is_ok());
        assert!(ModelDistribution::parse("sign_pow:-2", 2).is_err());
        assert!(ModelDistribution::parse("cosh:1", 1).is_err());
    }
}
