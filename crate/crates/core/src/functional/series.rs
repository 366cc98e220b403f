//! Truncated formal power series in two variables, `hbar` and a coupling.
//!
//! Coefficients are stored densely for all orders `(a, b)` with
//! `a <= hbar_cap` and `b <= lambda_cap`. Products take a closure that
//! multiplies two coefficients and returns the result already graded by
//! powers of `hbar`, which is how the contraction products produce their
//! output.

use crate::functional::PolyFunctional;
use crate::model::Grid;
use crate::{Error, Result, C64};

/// Operations a series coefficient must support.
pub trait Coefficient: Clone {
    /// The additive identity of the same shape as `self`.
    fn zero_like(&self) -> Self;
    fn is_zero(&self) -> bool;
    fn add(&self, other: &Self) -> Self;
    fn scale(&self, c: C64) -> Self;
    /// A scalar multiple of the unit.
    fn unit_like(&self, c: C64) -> Self;
}

impl Coefficient for C64 {
    fn zero_like(&self) -> Self {
        C64::new(0.0, 0.0)
    }
    fn is_zero(&self) -> bool {
        *self == C64::new(0.0, 0.0)
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn scale(&self, c: C64) -> Self {
        self * c
    }
    fn unit_like(&self, c: C64) -> Self {
        c
    }
}

impl Coefficient for PolyFunctional {
    fn zero_like(&self) -> Self {
        PolyFunctional::zero(self.n())
    }
    fn is_zero(&self) -> bool {
        PolyFunctional::is_zero(self)
    }
    fn add(&self, other: &Self) -> Self {
        PolyFunctional::add(self, other)
    }
    fn scale(&self, c: C64) -> Self {
        PolyFunctional::scale(self, c)
    }
    fn unit_like(&self, c: C64) -> Self {
        PolyFunctional::constant(self.n(), c)
    }
}

#[derive(Clone, Debug)]
pub struct FormalSeries<C> {
    hbar_cap: u32,
    lambda_cap: u32,
    coeffs: Vec<C>,
}

impl<C: Coefficient> FormalSeries<C> {
    pub fn zero(hbar_cap: u32, lambda_cap: u32, zero: &C) -> Self {
        let len = ((hbar_cap + 1) * (lambda_cap + 1)) as usize;
        FormalSeries { hbar_cap, lambda_cap, coeffs: vec![zero.zero_like(); len] }
    }

    /// The series whose only nonzero coefficient is `c` at `(0, 0)`.
    pub fn constant(hbar_cap: u32, lambda_cap: u32, c: C) -> Self {
        let mut s = Self::zero(hbar_cap, lambda_cap, &c);
        s.coeffs[0] = c;
        s
    }

    /// A single coefficient `c` at order `(a, b)`.
    pub fn monomial(hbar_cap: u32, lambda_cap: u32, a: u32, b: u32, c: C) -> Result<Self> {
        let mut s = Self::zero(hbar_cap, lambda_cap, &c);
        s.set(a, b, c)?;
        Ok(s)
    }

    pub fn hbar_cap(&self) -> u32 {
        self.hbar_cap
    }

    pub fn lambda_cap(&self) -> u32 {
        self.lambda_cap
    }

    fn idx(&self, a: u32, b: u32) -> usize {
        (a * (self.lambda_cap + 1) + b) as usize
    }

    pub fn get(&self, a: u32, b: u32) -> Option<&C> {
        if a <= self.hbar_cap && b <= self.lambda_cap {
            Some(&self.coeffs[self.idx(a, b)])
        } else {
            None
        }
    }

    pub fn coeff(&self, a: u32, b: u32) -> &C {
        self.get(a, b).expect("order beyond caps")
    }

    pub fn set(&mut self, a: u32, b: u32, c: C) -> Result<()> {
        if a > self.hbar_cap || b > self.lambda_cap {
            return Err(Error::CapMismatch(format!(
                "order ({a}, {b}) beyond caps ({}, {})",
                self.hbar_cap, self.lambda_cap
            )));
        }
        let i = self.idx(a, b);
        self.coeffs[i] = c;
        Ok(())
    }

    /// Iterates `(hbar order, lambda order, coefficient)`.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, &C)> {
        let lc = self.lambda_cap + 1;
        self.coeffs.iter().enumerate().map(move |(i, c)| (i as u32 / lc, i as u32 % lc, c))
    }

    fn same_caps(&self, other: &Self) -> Result<()> {
        if self.hbar_cap != other.hbar_cap || self.lambda_cap != other.lambda_cap {
            return Err(Error::CapMismatch(format!(
                "({}, {}) vs ({}, {})",
                self.hbar_cap, self.lambda_cap, other.hbar_cap, other.lambda_cap
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_caps(other)?;
        Ok(FormalSeries {
            hbar_cap: self.hbar_cap,
            lambda_cap: self.lambda_cap,
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a.add(b)).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, c: C64) -> Self {
        FormalSeries {
            hbar_cap: self.hbar_cap,
            lambda_cap: self.lambda_cap,
            coeffs: self.coeffs.iter().map(|x| x.scale(c)).collect(),
        }
    }

    pub fn map<D: Coefficient>(&self, f: impl Fn(&C) -> D) -> FormalSeries<D> {
        FormalSeries {
            hbar_cap: self.hbar_cap,
            lambda_cap: self.lambda_cap,
            coeffs: self.coeffs.iter().map(f).collect(),
        }
    }

    /// Product with a coefficient multiplication graded in `hbar`.
    ///
    /// `mul(a, b, k)` must return the coefficients of `hbar^0 .. hbar^k` of
    /// the product of `a` and `b`.
    pub fn product_with(
        &self,
        other: &Self,
        mul: &dyn Fn(&C, &C, u32) -> Result<Vec<C>>,
    ) -> Result<Self> {
        self.same_caps(other)?;
        let zero = self.coeffs[0].zero_like();
        let mut out = Self::zero(self.hbar_cap, self.lambda_cap, &zero);
        for (a1, b1, x) in self.iter() {
            if x.is_zero() {
                continue;
            }
            for (a2, b2, y) in other.iter() {
                if y.is_zero() || a1 + a2 > self.hbar_cap || b1 + b2 > self.lambda_cap {
                    continue;
                }
                let budget = self.hbar_cap - a1 - a2;
                let parts = mul(x, y, budget)?;
                for (k, p) in parts.into_iter().enumerate().take(budget as usize + 1) {
                    if p.is_zero() {
                        continue;
                    }
                    let i = out.idx(a1 + a2 + k as u32, b1 + b2);
                    out.coeffs[i] = out.coeffs[i].add(&p);
                }
            }
        }
        Ok(out)
    }

    /// `exp(X) = sum X^n / n!` for a series without constant term.
    pub fn exp_with(&self, mul: &dyn Fn(&C, &C, u32) -> Result<Vec<C>>) -> Result<Self> {
        if !self.coeffs[0].is_zero() {
            return Err(Error::NonzeroConstantTerm);
        }
        let unit = self.coeffs[0].unit_like(C64::new(1.0, 0.0));
        let mut total = Self::constant(self.hbar_cap, self.lambda_cap, unit.clone());
        let mut power = Self::constant(self.hbar_cap, self.lambda_cap, unit);
        for n in 1..=(self.hbar_cap + self.lambda_cap) {
            power = power.product_with(self, mul)?.scale(C64::new(1.0 / n as f64, 0.0));
            if power.is_zero() {
                break;
            }
            total = total.add(&power)?;
        }
        Ok(total)
    }

    /// Inverse for a series whose constant term is an invertible scalar.
    pub fn invert_with(
        &self,
        mul: &dyn Fn(&C, &C, u32) -> Result<Vec<C>>,
        as_scalar: &dyn Fn(&C) -> Option<C64>,
    ) -> Result<Self> {
        let s0 = as_scalar(&self.coeffs[0]).ok_or(Error::NotInvertible)?;
        if s0.norm() == 0.0 {
            return Err(Error::NotInvertible);
        }
        let inv0 = C64::new(1.0, 0.0) / s0;
        let unit = self.coeffs[0].unit_like(C64::new(1.0, 0.0));
        let mut x = self.clone();
        x.coeffs[0] = unit.zero_like();
        let x = x.scale(-inv0);
        let one = Self::constant(self.hbar_cap, self.lambda_cap, unit);
        let mut total = one.clone();
        let mut power = one;
        for _ in 1..=(self.hbar_cap + self.lambda_cap) {
            power = power.product_with(&x, mul)?;
            if power.is_zero() {
                break;
            }
            total = total.add(&power)?;
        }
        Ok(total.scale(inv0))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Coefficient::is_zero)
    }

    /// Drops all orders beyond the new caps.
    pub fn truncate(&self, hbar_cap: u32, lambda_cap: u32) -> Result<Self> {
        if hbar_cap > self.hbar_cap || lambda_cap > self.lambda_cap {
            return Err(Error::CapMismatch("truncation cannot raise caps".into()));
        }
        let zero = self.coeffs[0].zero_like();
        let mut out = Self::zero(hbar_cap, lambda_cap, &zero);
        for a in 0..=hbar_cap {
            for b in 0..=lambda_cap {
                let i = out.idx(a, b);
                out.coeffs[i] = self.coeff(a, b).clone();
            }
        }
        Ok(out)
    }

    /// Substitutes a numerical `hbar`, keeping the coupling grading.
    pub fn evaluate_at_hbar(&self, hbar: f64) -> Self {
        let zero = self.coeffs[0].zero_like();
        let mut out = Self::zero(0, self.lambda_cap, &zero);
        for (a, b, c) in self.iter() {
            let i = out.idx(0, b);
            out.coeffs[i] = out.coeffs[i].add(&c.scale(C64::new(hbar.powi(a as i32), 0.0)));
        }
        out
    }

    /// Sum of all coefficients weighted by `hbar^a lambda^b`.
    pub fn sum_at(&self, hbar: f64, lambda: f64) -> C {
        let zero = self.coeffs[0].zero_like();
        self.iter().fold(zero, |acc, (a, b, c)| {
            acc.add(&c.scale(C64::new(hbar.powi(a as i32) * lambda.powi(b as i32), 0.0)))
        })
    }
}

impl FormalSeries<C64> {
    pub fn scalar_mul(&self, other: &Self) -> Result<Self> {
        self.product_with(other, &|a, b, _| Ok(vec![a * b]))
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.same_caps(other)?;
        Ok(self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    }
}

impl FormalSeries<PolyFunctional> {
    /// Applies `simplify` to every coefficient.
    pub fn simplify(&self, grid: &Grid) -> Self {
        self.map(|c| c.simplify(grid))
    }

    pub fn conj(&self) -> Self {
        self.map(PolyFunctional::conj)
    }

    /// Evaluates every coefficient at `phi`.
    pub fn evaluate(&self, grid: &Grid, phi: &[f64]) -> FormalSeries<C64> {
        self.map(|c| c.evaluate(grid, phi))
    }

    /// Largest degree-wise probe deviation over all coefficients.
    pub fn probe_distance(&self, other: &Self, grid: &Grid, probes: &[Vec<f64>]) -> Result<f64> {
        self.same_caps(other)?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| crate::functional::probe_distance(a, b, grid, probes))
            .fold(0.0, f64::max))
    }
}
