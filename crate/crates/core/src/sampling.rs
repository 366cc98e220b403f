//! Deterministic random test data: bump densities, smooth fields and probes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::Grid;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Smooth compactly supported bump `exp(1 - 1/(1 - u^2))`, `u = (t - center)/radius`.
pub fn bump(t: f64, center: f64, radius: f64) -> f64 {
    let u = (t - center) / radius;
    if u.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    }
}

/// Second derivative of [`bump`] in `t`.
pub fn bump_second_derivative(t: f64, center: f64, radius: f64) -> f64 {
    let u = (t - center) / radius;
    if u.abs() >= 1.0 {
        return 0.0;
    }
    let s = 1.0 - u * u;
    let q1 = -2.0 * u / (s * s);
    let q2 = -2.0 / (s * s) - 8.0 * u * u / (s * s * s);
    bump(t, center, radius) * (q2 + q1 * q1) / (radius * radius)
}

/// A bump in time on a single mode slot.
pub fn bump_density(grid: &Grid, mode: usize, center: f64, radius: f64) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for (i, &t) in grid.times().iter().enumerate() {
        out[grid.index(mode, i)] = bump(t, center, radius);
    }
    out
}

/// A random combination of bumps supported in the time window `[lo, hi]`.
pub fn random_density(grid: &Grid, rng: &mut impl Rng, lo: f64, hi: f64) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    let span = hi - lo;
    for mode in 0..grid.mode_count() {
        for _ in 0..2 {
            let radius = span * rng.gen_range(0.2..0.5);
            let center = rng.gen_range(lo + radius..=hi - radius);
            let amp = rng.gen_range(-1.0..1.0);
            for (i, &t) in grid.times().iter().enumerate() {
                out[grid.index(mode, i)] += amp * bump(t, center, radius);
            }
        }
    }
    out
}

/// A smooth random field of the given amplitude over the whole grid.
pub fn random_field(grid: &Grid, rng: &mut impl Rng, amplitude: f64) -> Vec<f64> {
    let times = grid.times();
    let (t0, t1) = (times[0], times[times.len() - 1]);
    let mut out = vec![0.0; grid.len()];
    for mode in 0..grid.mode_count() {
        for _ in 0..3 {
            let c = rng.gen_range(t0..t1);
            let w = (t1 - t0) * rng.gen_range(0.1..0.4);
            let a = amplitude * rng.gen_range(-1.0..1.0);
            for (i, &t) in times.iter().enumerate() {
                out[grid.index(mode, i)] += a * (-((t - c) / w).powi(2)).exp();
            }
        }
    }
    out
}

/// Probe fields for comparing functionals.
pub fn probes(grid: &Grid, seed: u64, count: usize) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..count).map(|_| random_field(grid, &mut r, 1.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, ModelSpec};

    #[test]
    fn densities_respect_window() {
        let m = build_model(ModelSpec::qm(1.0, 2.0, 65)).unwrap();
        let mut r = rng(3);
        let d = random_density(&m.grid, &mut r, 0.5, 1.5);
        for (i, v) in d.iter().enumerate() {
            let t = m.grid.time_of(i);
            if !(0.5..=1.5).contains(&t) {
                assert_eq!(*v, 0.0);
            }
        }
        assert!(d.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn bump_curvature_matches_differences() {
        let h = 1e-4;
        for &t in &[-0.5, -0.1, 0.0, 0.3, 0.55] {
            let fd = (bump(t + h, 0.1, 0.7) - 2.0 * bump(t, 0.1, 0.7) + bump(t - h, 0.1, 0.7)) / (h * h);
            assert!((fd - bump_second_derivative(t, 0.1, 0.7)).abs() < 1e-5);
        }
    }

    #[test]
    fn probes_are_deterministic() {
        let m = build_model(ModelSpec::qm(1.0, 2.0, 17)).unwrap();
        assert_eq!(probes(&m.grid, 9, 2), probes(&m.grid, 9, 2));
    }
}
