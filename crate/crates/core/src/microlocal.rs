//! Wave front set scans of sampled one-dimensional distributions, cone
//! arithmetic for the product criterion, and bicharacteristic flows.
//!
//! Fourier transforms use `u^(k) = int u(x) e^{+ikx} dx`; with this sign
//! `1/(x + i0)` is singular along `k < 0`.

use rustfft::FftPlanner;

use crate::{Error, Result, C64};

/// Complex samples of a distribution on the uniform grid `x_j = start + j dx`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledDistribution {
    pub start: f64,
    pub dx: f64,
    pub samples: Vec<C64>,
    pub label: String,
}

impl SampledDistribution {
    pub fn new(start: f64, dx: f64, samples: Vec<C64>, label: &str) -> Result<Self> {
        if samples.len() % 2 == 1 || samples.is_empty() {
            return Err(Error::Invalid(format!("need an even, nonzero sample count, got {}", samples.len())));
        }
        if !(dx > 0.0) {
            return Err(Error::Invalid(format!("grid step must be positive, got {dx}")));
        }
        Ok(SampledDistribution { start, dx, samples, label: label.to_string() })
    }

    /// Samples `f` on `n` points of `[-half_width, half_width)`.
    pub fn from_fn(n: usize, half_width: f64, label: &str, f: impl Fn(f64) -> C64) -> Result<Self> {
        let dx = 2.0 * half_width / n as f64;
        let samples = (0..n).map(|j| f(-half_width + j as f64 * dx)).collect();
        Self::new(-half_width, dx, samples, label)
    }

    /// Normalized Gaussian of width `eps` at the origin.
    pub fn mollified_delta(n: usize, half_width: f64, eps: f64) -> Result<Self> {
        let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * eps);
        Self::from_fn(n, half_width, "delta", |x| C64::new(norm * (-0.5 * (x / eps).powi(2)).exp(), 0.0))
    }

    /// `1/(x + i eps)`.
    pub fn inverse_x_plus_i_eps(n: usize, half_width: f64, eps: f64) -> Result<Self> {
        Self::from_fn(n, half_width, "inverse_x_plus_i0", |x| C64::new(1.0, 0.0) / C64::new(x, eps))
    }

    pub fn gaussian(n: usize, half_width: f64) -> Result<Self> {
        Self::from_fn(n, half_width, "gaussian", |x| C64::new((-x * x).exp(), 0.0))
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn x(&self, j: usize) -> f64 {
        self.start + j as f64 * self.dx
    }

    pub fn end(&self) -> f64 {
        self.start + self.samples.len() as f64 * self.dx
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WfOptions {
    /// Fitted power steeper than `-p_rapid` counts as rapid decay.
    pub p_rapid: f64,
    /// Band amplitude below this fraction of the spectral peak counts as rapid
    /// decay. Aliasing of a singular direction into its opposite leaves about
    /// `exp(-2 eps (k_nyquist - k))` of the peak, ~1e-5 at two grid steps.
    pub relative_floor: f64,
    /// Band amplitude below this fraction of the sampled L1 norm counts as rapid decay.
    pub absolute_floor: f64,
    /// The fitted band is `[band_top/2, band_top]` with `band_top = nyquist * band_fraction`.
    pub band_fraction: f64,
}

impl Default for WfOptions {
    fn default() -> Self {
        WfOptions { p_rapid: 4.0, relative_floor: 1e-4, absolute_floor: 1e-10, band_fraction: 0.125 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirectionVerdict {
    pub singular: bool,
    /// Fitted exponent of `|u^(k)| ~ |k|^slope` over the band.
    pub slope: f64,
    /// Largest band amplitude relative to the spectral peak.
    pub relative_amplitude: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WfVerdict {
    pub point: f64,
    pub plus: DirectionVerdict,
    pub minus: DirectionVerdict,
}

impl WfVerdict {
    pub fn directions(&self) -> Directions {
        Directions { plus: self.plus.singular, minus: self.minus.singular }
    }
}

/// Smooth window `exp(-18 u^2)` times a compact bump, `u = (x - x0)/radius`.
pub fn window(x: f64, x0: f64, radius: f64) -> f64 {
    let u = (x - x0) / radius;
    if u.abs() >= 1.0 {
        0.0
    } else {
        (-18.0 * u * u + 1.0 - 1.0 / (1.0 - u * u)).exp()
    }
}

/// Classifies the directions `+k` and `-k` at `x0` from the decay of the
/// windowed Fourier transform.
pub fn wf_scan(u: &SampledDistribution, x0: f64, radius: f64, opts: &WfOptions) -> Result<WfVerdict> {
    if 2.0 * radius / u.dx < 8.0 {
        return Err(Error::Window(format!("window covers {:.1} samples, need at least 8", 2.0 * radius / u.dx)));
    }
    if x0 - radius < u.start || x0 + radius > u.end() {
        return Err(Error::Window(format!("window [{}, {}] leaves the grid", x0 - radius, x0 + radius)));
    }
    let n = u.len();
    let mut buf: Vec<C64> = (0..n).map(|j| u.samples[j] * window(u.x(j), x0, radius) * u.dx).collect();
    // the unnormalized inverse transform carries e^{+2 pi i j m / n}
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let amp: Vec<f64> = buf.iter().map(|z| z.norm()).collect();
    let peak = amp.iter().copied().fold(0.0, f64::max);
    let l1: f64 = u.samples.iter().map(|z| z.norm()).sum::<f64>() * u.dx;
    let top = ((n / 2) as f64 * opts.band_fraction).floor() as usize;
    let bottom = (top / 2).max(1);
    if top < bottom + 4 {
        return Err(Error::Window(format!("resolved band has only {} frequencies", top.saturating_sub(bottom))));
    }
    let dk = 2.0 * std::f64::consts::PI / (n as f64 * u.dx);
    let verdict = |bins: Vec<usize>| {
        let pts: Vec<(f64, f64)> = bins
            .iter()
            .enumerate()
            .map(|(i, &b)| (((bottom + i) as f64 * dk).ln(), amp[b].max(1e-300).ln()))
            .collect();
        let band_max = bins.iter().map(|&b| amp[b]).fold(0.0, f64::max);
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let slope = sxy / sxx;
        let relative = if peak > 0.0 { band_max / peak } else { 0.0 };
        let negligible = peak == 0.0 || relative < opts.relative_floor || band_max < opts.absolute_floor * l1;
        DirectionVerdict { singular: !(negligible || slope < -opts.p_rapid), slope, relative_amplitude: relative }
    };
    let plus = verdict((bottom..=top).collect());
    let minus = verdict((bottom..=top).map(|m| n - m).collect());
    Ok(WfVerdict { point: x0, plus, minus })
}

/// Singular directions of a covector cone in one dimension.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Directions {
    pub plus: bool,
    pub minus: bool,
}

impl Directions {
    pub const NONE: Directions = Directions { plus: false, minus: false };
    pub const PLUS: Directions = Directions { plus: true, minus: false };
    pub const MINUS: Directions = Directions { plus: false, minus: true };
    pub const BOTH: Directions = Directions { plus: true, minus: true };
}

/// Per-point direction sets: signs in one dimension, closed arcs of angles
/// (radians, `lo <= hi`) in two.
#[derive(Clone, Debug, PartialEq)]
pub enum ConeSet {
    Line(Vec<(f64, Directions)>),
    Plane(Vec<([f64; 2], Vec<(f64, f64)>)>),
}

fn arcs_meet(a: &[(f64, f64)], b: &[(f64, f64)]) -> bool {
    use std::f64::consts::PI;
    let tau = 2.0 * PI;
    let norm = |x: f64| x.rem_euclid(tau);
    // does b rotated by pi intersect a?
    a.iter().any(|&(a0, a1)| {
        b.iter().any(|&(b0, b1)| {
            let (s0, s1) = (b0 + PI, b1 + PI);
            if a1 - a0 >= tau || s1 - s0 >= tau {
                return true;
            }
            let contains = |lo: f64, hi: f64, x: f64| norm(x - lo) <= norm(hi - lo) + 1e-12;
            contains(a0, a1, s0) || contains(a0, a1, s1) || contains(s0, s1, a0) || contains(s0, s1, a1)
        })
    })
}

/// Hörmander's criterion per point: the sum of the two cones avoids zero,
/// i.e. no `k` in the first cone has `-k` in the second.
pub fn product_ok(a: &ConeSet, b: &ConeSet, points: &[Vec<f64>]) -> Result<Vec<bool>> {
    let close = |p: &[f64], q: &[f64]| p.iter().zip(q).all(|(x, y)| (x - y).abs() < 1e-12);
    match (a, b) {
        (ConeSet::Line(ca), ConeSet::Line(cb)) => Ok(points
            .iter()
            .map(|p| {
                let find = |c: &[(f64, Directions)]| {
                    c.iter().find(|(x, _)| close(&[*x], p)).map(|(_, d)| *d).unwrap_or(Directions::NONE)
                };
                let (da, db) = (find(ca), find(cb));
                !((da.plus && db.minus) || (da.minus && db.plus))
            })
            .collect()),
        (ConeSet::Plane(ca), ConeSet::Plane(cb)) => Ok(points
            .iter()
            .map(|p| {
                let find = |c: &[([f64; 2], Vec<(f64, f64)>)]| {
                    c.iter().find(|(x, _)| close(x, p)).map(|(_, d)| d.clone()).unwrap_or_default()
                };
                !arcs_meet(&find(ca), &find(cb))
            })
            .collect()),
        _ => Err(Error::Invalid("cones live in different dimensions".into())),
    }
}

/// Whether covectors `(k0, k1)` all lie in the closed forward light cone or
/// all in the closed backward one; such configurations are excluded from
/// the wave front sets of microcausal functionals.
pub fn in_closed_light_cones(ks: &[[f64; 2]]) -> bool {
    let forward = |k: &[f64; 2]| k[0] >= k[1].abs();
    let backward = |k: &[f64; 2]| -k[0] >= k[1].abs();
    !ks.is_empty() && (ks.iter().all(forward) || ks.iter().all(backward))
}

/// Polynomial symbol `sum c x^a k^b` on `T^* R^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolySymbol {
    pub dim: usize,
    pub terms: Vec<(f64, Vec<u32>, Vec<u32>)>,
}

impl PolySymbol {
    pub fn new(dim: usize, terms: Vec<(f64, Vec<u32>, Vec<u32>)>) -> Result<Self> {
        for (_, a, b) in &terms {
            if a.len() != dim || b.len() != dim {
                return Err(Error::Dimension { expected: dim, got: a.len().min(b.len()) });
            }
            let deg: u32 = a.iter().chain(b).sum();
            if deg > 4 {
                return Err(Error::Unsupported(format!("symbol degree {deg} above 4")));
            }
        }
        Ok(PolySymbol { dim, terms })
    }

    /// `k_0^2 - k_1^2`.
    pub fn wave_2d() -> Self {
        Self::new(2, vec![(1.0, vec![0, 0], vec![2, 0]), (-1.0, vec![0, 0], vec![0, 2])]).unwrap()
    }

    /// `k^2 + x^2`.
    pub fn harmonic() -> Self {
        Self::new(1, vec![(1.0, vec![0], vec![2]), (1.0, vec![2], vec![0])]).unwrap()
    }

    /// `k^2 + x^4`.
    pub fn anharmonic() -> Self {
        Self::new(1, vec![(1.0, vec![0], vec![2]), (1.0, vec![4], vec![0])]).unwrap()
    }

    pub fn value(&self, x: &[f64], k: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(c, a, b)| {
                c * a.iter().zip(x).map(|(&e, &v)| v.powi(e as i32)).product::<f64>()
                    * b.iter().zip(k).map(|(&e, &v)| v.powi(e as i32)).product::<f64>()
            })
            .sum()
    }

    fn partial(&self, x: &[f64], k: &[f64], var: usize, wrt_k: bool) -> f64 {
        let mut s = 0.0;
        for (c, a, b) in &self.terms {
            let e = if wrt_k { b[var] } else { a[var] };
            if e == 0 {
                continue;
            }
            let mut t = c * e as f64;
            for i in 0..self.dim {
                let ea = if !wrt_k && i == var { a[i] - 1 } else { a[i] };
                let eb = if wrt_k && i == var { b[i] - 1 } else { b[i] };
                t *= x[i].powi(ea as i32) * k[i].powi(eb as i32);
            }
            s += t;
        }
        s
    }

    /// Hamilton's vector field `(d sigma/dk, -d sigma/dx)`.
    pub fn hamilton(&self, x: &[f64], k: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let dx = (0..self.dim).map(|i| self.partial(x, k, i, true)).collect();
        let dk = (0..self.dim).map(|i| -self.partial(x, k, i, false)).collect();
        (dx, dk)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymbolFlow {
    pub dt: f64,
    pub xs: Vec<Vec<f64>>,
    pub ks: Vec<Vec<f64>>,
    /// `max_t |sigma(x(t), k(t)) - sigma(x0, k0)|`.
    pub drift: f64,
    /// Whether the initial point lies on `sigma = 0`.
    pub characteristic: bool,
}

/// RK4 integration of `x' = d sigma/dk`, `k' = -d sigma/dx`.
pub fn bicharacteristic_flow(sigma: &PolySymbol, x0: &[f64], k0: &[f64], steps: usize, dt: f64) -> Result<SymbolFlow> {
    let n = sigma.dim;
    if x0.len() != n || k0.len() != n {
        return Err(Error::Dimension { expected: n, got: x0.len().min(k0.len()) });
    }
    let s0 = sigma.value(x0, k0);
    let mut xs = vec![x0.to_vec()];
    let mut ks = vec![k0.to_vec()];
    let mut drift = 0.0f64;
    let (mut x, mut k) = (x0.to_vec(), k0.to_vec());
    let axpy = |a: &[f64], s: f64, b: &[f64]| a.iter().zip(b).map(|(p, q)| p + s * q).collect::<Vec<f64>>();
    for step in 1..=steps {
        let (a1, b1) = sigma.hamilton(&x, &k);
        let (a2, b2) = sigma.hamilton(&axpy(&x, 0.5 * dt, &a1), &axpy(&k, 0.5 * dt, &b1));
        let (a3, b3) = sigma.hamilton(&axpy(&x, 0.5 * dt, &a2), &axpy(&k, 0.5 * dt, &b2));
        let (a4, b4) = sigma.hamilton(&axpy(&x, dt, &a3), &axpy(&k, dt, &b3));
        for i in 0..n {
            x[i] += dt / 6.0 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i]);
            k[i] += dt / 6.0 * (b1[i] + 2.0 * b2[i] + 2.0 * b3[i] + b4[i]);
        }
        if x.iter().chain(&k).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("flow blew up at step {step}")));
        }
        drift = drift.max((sigma.value(&x, &k) - s0).abs());
        xs.push(x.clone());
        ks.push(k.clone());
    }
    Ok(SymbolFlow { dt, xs, ks, drift, characteristic: s0.abs() < 1e-12 })
}

/// Observed convergence order of the drift over a fixed time for the given
/// step sizes (least-squares slope of `log drift` against `log dt`).
pub fn drift_order(sigma: &PolySymbol, x0: &[f64], k0: &[f64], time: f64, dts: &[f64]) -> Result<(Vec<f64>, f64)> {
    let drifts = dts
        .iter()
        .map(|&dt| Ok(bicharacteristic_flow(sigma, x0, k0, (time / dt).round() as usize, dt)?.drift))
        .collect::<Result<Vec<f64>>>()?;
    let pts: Vec<(f64, f64)> = dts.iter().zip(&drifts).map(|(d, e)| (d.ln(), e.max(1e-300).ln())).collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Ok((drifts, sxy / sxx))
}

#[cfg(test)]
mod tests {
    use super::*;

    const N: usize = 8192;
    const HALF: f64 = 8.0;

    fn dx() -> f64 {
        2.0 * HALF / N as f64
    }

    #[test]
    fn delta_is_singular_only_at_origin() {
        let u = SampledDistribution::mollified_delta(N, HALF, 2.0 * dx()).unwrap();
        let o = WfOptions::default();
        let at0 = wf_scan(&u, 0.0, 1.0, &o).unwrap();
        assert_eq!(at0.directions(), Directions::BOTH, "{at0:?}");
        let away = wf_scan(&u, 3.0, 1.0, &o).unwrap();
        assert_eq!(away.directions(), Directions::NONE, "{away:?}");
    }

    #[test]
    fn inverse_x_plus_i0_is_singular_along_negative_k() {
        let o = WfOptions::default();
        for steps in [2.0, 3.0] {
            let u = SampledDistribution::inverse_x_plus_i_eps(N, HALF, steps * dx()).unwrap();
            let v = wf_scan(&u, 0.0, 1.0, &o).unwrap();
            assert_eq!(v.directions(), Directions::MINUS, "{v:?}");
            assert_eq!(wf_scan(&u, 3.0, 1.0, &o).unwrap().directions(), Directions::NONE);
        }
    }

    #[test]
    fn gaussian_is_smooth() {
        let u = SampledDistribution::gaussian(N, HALF).unwrap();
        for x0 in [-2.0, 0.0, 0.7] {
            assert_eq!(wf_scan(&u, x0, 1.0, &WfOptions::default()).unwrap().directions(), Directions::NONE);
        }
    }

    #[test]
    fn verdicts_survive_window_rescaling() {
        let o = WfOptions::default();
        let u = SampledDistribution::inverse_x_plus_i_eps(N, HALF, 2.0 * dx()).unwrap();
        let d = SampledDistribution::mollified_delta(N, HALF, 2.0 * dx()).unwrap();
        for r in [0.5, 0.75, 1.0, 1.5, 2.0] {
            assert_eq!(wf_scan(&u, 0.0, r, &o).unwrap().directions(), Directions::MINUS);
            assert_eq!(wf_scan(&d, 0.0, r, &o).unwrap().directions(), Directions::BOTH);
            assert_eq!(wf_scan(&d, 4.0, r, &o).unwrap().directions(), Directions::NONE);
        }
    }

    #[test]
    fn window_validation() {
        let u = SampledDistribution::gaussian(N, HALF).unwrap();
        assert!(matches!(wf_scan(&u, 0.0, 3.0 * dx(), &WfOptions::default()), Err(Error::Window(_))));
        assert!(matches!(wf_scan(&u, 7.5, 1.0, &WfOptions::default()), Err(Error::Window(_))));
        assert!(SampledDistribution::new(0.0, 0.1, vec![C64::new(0.0, 0.0); 7], "odd").is_err());
    }

    #[test]
    fn product_criterion() {
        let pt = vec![vec![0.0]];
        let line = |d| ConeSet::Line(vec![(0.0, d)]);
        let ok = |a, b| product_ok(&line(a), &line(b), &pt).unwrap()[0];
        assert!(ok(Directions::PLUS, Directions::PLUS));
        assert!(!ok(Directions::BOTH, Directions::BOTH));
        assert!(!ok(Directions::MINUS, Directions::BOTH));
        assert!(ok(Directions::NONE, Directions::BOTH));
        use std::f64::consts::PI;
        let plane = |arcs: Vec<(f64, f64)>| ConeSet::Plane(vec![([0.0, 0.0], arcs)]);
        let p2 = vec![vec![0.0, 0.0]];
        assert!(product_ok(&plane(vec![(0.1, 0.5)]), &plane(vec![(0.2, 0.4)]), &p2).unwrap()[0]);
        assert!(!product_ok(&plane(vec![(0.1, 0.5)]), &plane(vec![(PI + 0.3, PI + 0.6)]), &p2).unwrap()[0]);
        assert!(product_ok(&line(Directions::PLUS), &plane(vec![]), &pt).is_err());
    }

    #[test]
    fn light_cones() {
        assert!(in_closed_light_cones(&[[1.0, 0.5], [2.0, -2.0]]));
        assert!(in_closed_light_cones(&[[-1.0, 0.5], [-2.0, 1.0]]));
        assert!(!in_closed_light_cones(&[[1.0, 0.5], [-2.0, 1.0]]));
        assert!(!in_closed_light_cones(&[[0.1, 0.5]]));
    }

    #[test]
    fn wave_flow_is_straight() {
        let s = PolySymbol::wave_2d();
        let f = bicharacteristic_flow(&s, &[0.0, 0.0], &[1.0, 1.0], 1000, 1e-3).unwrap();
        assert!(f.characteristic);
        assert_eq!(f.drift, 0.0);
        assert!(f.ks.iter().all(|k| k == &vec![1.0, 1.0]));
        let last = f.xs.last().unwrap();
        assert!((last[0] - 2.0).abs() < 1e-12 && (last[1] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn harmonic_flow_conserves_the_symbol() {
        let s = PolySymbol::harmonic();
        let f = bicharacteristic_flow(&s, &[1.0], &[0.0], 10_000, 1e-3).unwrap();
        assert!(f.drift < 1e-6, "{}", f.drift);
        // circular orbit: x(t) = cos 2t
        let t = 10.0f64;
        assert!((f.xs.last().unwrap()[0] - (2.0 * t).cos()).abs() < 1e-9);
    }

    #[test]
    fn flow_is_reversible() {
        let s = PolySymbol::anharmonic();
        let f = bicharacteristic_flow(&s, &[0.8], &[0.3], 5000, 1e-3).unwrap();
        let (x, k) = (f.xs.last().unwrap().clone(), f.ks.last().unwrap().clone());
        let b = bicharacteristic_flow(&s, &x, &k, 5000, -1e-3).unwrap();
        assert!((b.xs.last().unwrap()[0] - 0.8).abs() < 1e-8);
        assert!((b.ks.last().unwrap()[0] - 0.3).abs() < 1e-8);
    }

    #[test]
    fn drift_converges_at_fourth_order() {
        let (_, order) = drift_order(&PolySymbol::anharmonic(), &[0.8], &[0.3], 10.0, &[1e-2, 5e-3, 2.5e-3]).unwrap();
        assert!((order - 4.0).abs() < 0.5, "{order}");
    }

    #[test]
    fn blow_up_is_reported() {
        // k' = -4 x^3 with x' = 0 cannot blow up; x' = 3 x^2 does
        let s = PolySymbol::new(1, vec![(1.0, vec![2], vec![1])]).unwrap();
        let r = bicharacteristic_flow(&s, &[1.0], &[0.0], 100_000, 1e-2);
        assert!(matches!(r, Err(Error::NonFinite(_))));
        assert!(PolySymbol::new(1, vec![(1.0, vec![5], vec![0])]).is_err());
    }
}
