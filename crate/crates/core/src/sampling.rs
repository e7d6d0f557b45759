//! Deterministic sampling primitives shared by the validator and the oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::poly::Polynomial;
use crate::system::BoxDomain;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_point(rng: &mut impl Rng, bounds: &BoxDomain) -> Vec<f64> {
    bounds
        .lo
        .iter()
        .zip(&bounds.hi)
        .map(|(a, b)| rng.random_range(*a..=*b))
        .collect()
}

pub fn uniform_points(seed: u64, bounds: &BoxDomain, count: usize) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..count).map(|_| uniform_point(&mut r, bounds)).collect()
}

/// Tensor grid with `per_dim` points per axis, endpoints included.
pub fn grid_points(bounds: &BoxDomain, per_dim: usize) -> Vec<Vec<f64>> {
    let n = bounds.dim();
    if per_dim == 0 || n == 0 {
        return Vec::new();
    }
    let axis = |k: usize, t: usize| {
        if per_dim == 1 {
            0.5 * (bounds.lo[k] + bounds.hi[k])
        } else {
            bounds.lo[k] + (bounds.hi[k] - bounds.lo[k]) * t as f64 / (per_dim - 1) as f64
        }
    };
    let total = per_dim.pow(n as u32);
    (0..total)
        .map(|mut idx| {
            (0..n)
                .map(|k| {
                    let t = idx % per_dim;
                    idx /= per_dim;
                    axis(k, t)
                })
                .collect()
        })
        .collect()
}

/// Bisects `p` on the segment `a -> b`, whose endpoint values must have
/// opposite signs, until `|p| <= tol` or the segment collapses.
pub fn bisect_root(p: &Polynomial, a: &[f64], b: &[f64], tol: f64) -> Option<Vec<f64>> {
    let fa = p.eval(a);
    let fb = p.eval(b);
    if fa == 0.0 {
        return Some(a.to_vec());
    }
    if fb == 0.0 {
        return Some(b.to_vec());
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    let point = |t: f64| -> Vec<f64> { a.iter().zip(b).map(|(u, v)| u + t * (v - u)).collect() };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut slo = fa.signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let x = point(mid);
        let fm = p.eval(&x);
        if fm.abs() <= tol {
            return Some(x);
        }
        if fm.signum() == slo {
            lo = mid;
            slo = fm.signum();
        } else {
            hi = mid;
        }
        if hi - lo < f64::EPSILON {
            break;
        }
    }
    let x = point(0.5 * (lo + hi));
    (p.eval(&x).abs() <= tol).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::parse;

    #[test]
    fn grid_covers_corners() {
        let b = BoxDomain::symmetric(2, 1.0);
        let g = grid_points(&b, 3);
        assert_eq!(g.len(), 9);
        assert!(g.contains(&vec![-1.0, -1.0]));
        assert!(g.contains(&vec![0.0, 1.0]));
    }

    #[test]
    fn bisection_finds_axis() {
        let p = parse("x2", 2).unwrap();
        let x = bisect_root(&p, &[0.0, 0.5], &[0.0, -0.5], 1e-12).unwrap();
        assert!(x[1].abs() <= 1e-12);
        assert!(bisect_root(&p, &[0.0, 0.5], &[0.0, 0.2], 1e-12).is_none());
    }

    #[test]
    fn sampling_is_reproducible() {
        let b = BoxDomain::symmetric(3, 2.0);
        assert_eq!(uniform_points(7, &b, 50), uniform_points(7, &b, 50));
    }
}
