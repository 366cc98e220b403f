//! Adaptive tanh-sinh quadrature over a list of panels.

use crate::{Error, Result};

const REL_TOL: f64 = 1e-11;
const MAX_DEPTH: u32 = 24;
const MAX_HALVINGS: usize = 1000;

fn panel(f: &dyn Fn(f64) -> f64, a: f64, b: f64, scale: f64, depth: u32) -> Result<f64> {
    let out = quadrature::double_exponential::integrate(f, a, b, 1e-14 * scale.max(1e-300));
    if !out.integral.is_finite() {
        return Err(Error::Quadrature(format!("non-finite integral on [{a}, {b}]")));
    }
    if out.error_estimate <= REL_TOL * scale.max(out.integral.abs()) {
        return Ok(out.integral);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::Quadrature(format!(
            "error estimate {:.3e} on [{a}, {b}] after {depth} bisections",
            out.error_estimate
        )));
    }
    let m = 0.5 * (a + b);
    Ok(panel(f, a, m, scale, depth + 1)? + panel(f, m, b, scale, depth + 1)?)
}

/// Integral over `[breaks[0], breaks[last]]`, split at every break point.
pub fn integrate(f: &dyn Fn(f64) -> f64, breaks: &[f64]) -> Result<f64> {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|x| x.is_finite()).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * b.abs().max(1e-300));
    // geometric refinement so that every panel spans at most a factor of two
    let mut refined = Vec::with_capacity(pts.len());
    for w in pts.windows(2) {
        refined.push(w[0]);
        if w[0] > 0.0 && w[1] > 2.0 * w[0] {
            let mut x = 2.0 * w[0];
            while x < w[1] {
                refined.push(x);
                x *= 2.0;
            }
        } else if w[0] < 0.0 && w[1] < 0.5 * w[0] {
            let mut x = 0.5 * w[0];
            while x > w[1] {
                refined.push(x);
                x *= 0.5;
            }
        }
    }
    refined.extend(pts.last());
    let pts = refined;
    // a rough magnitude for the relative tolerance
    let mut scale = 0.0f64;
    for w in pts.windows(2) {
        let est = quadrature::double_exponential::integrate(f, w[0], w[1], 1e-8);
        scale = scale.max(est.integral.abs());
    }
    let mut total = 0.0;
    for w in pts.windows(2) {
        total += if w[0] == 0.0 { origin_panel(f, w[1], scale)? } else { panel(f, w[0], w[1], scale, 0)? };
    }
    Ok(total)
}

/// `[0, b]` for integrands with an integrable power-log singularity at 0:
/// dyadic pieces toward the origin, with a geometric tail once they shrink
/// at a steady ratio.
fn origin_panel(f: &dyn Fn(f64) -> f64, b: f64, scale: f64) -> Result<f64> {
    let mut total = 0.0;
    let mut hi = b;
    let mut prev: Option<f64> = None;
    let mut prev_ratio: Option<f64> = None;
    for _ in 0..MAX_HALVINGS {
        let lo = 0.5 * hi;
        let piece = panel(f, lo, hi, scale, 0)?;
        total += piece;
        let floor = 1e-17 * scale.max(total.abs()).max(1e-300);
        if piece.abs() <= floor && prev.is_some_and(|p: f64| p.abs() <= 1e3 * floor) {
            return Ok(total);
        }
        if let Some(p) = prev {
            if p != 0.0 {
                let q = piece / p;
                if let Some(q0) = prev_ratio {
                    // a steady ratio below one: sum the remaining geometric tail
                    if q > 0.0 && q < 0.999 && (q - q0).abs() < 1e-6 * q {
                        let tail = piece * q / (1.0 - q);
                        if tail.abs() <= 1e-13 * scale.max(total.abs()) {
                            return Ok(total + tail);
                        }
                    }
                }
                prev_ratio = Some(q);
            }
        }
        prev = Some(piece);
        hi = lo;
    }
    Err(Error::Quadrature(format!("singular endpoint at 0 did not converge within {MAX_HALVINGS} halvings")))
}

/// Geometric break points `start, 2 start, 4 start, ..` up to `end`.
pub fn geometric_breaks(start: f64, end: f64) -> Vec<f64> {
    let mut out = vec![start];
    let mut x = start;
    while x * 2.0 < end {
        x *= 2.0;
        out.push(x);
    }
    out.push(end);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_singularities() {
        let v = integrate(&|x| x.powf(-0.5), &[0.0, 1.0]).unwrap();
        assert!((v - 2.0).abs() < 1e-10);
        let v = integrate(&|x| x.ln(), &[0.0, 1.0]).unwrap();
        assert!((v + 1.0).abs() < 1e-10);
    }

    #[test]
    fn long_range() {
        let b = geometric_breaks(1.0, 40.0);
        let v = integrate(&|x| (-x).exp(), &b).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-12);
    }
}
