//! Small fixed-size vector helpers.
//!
//! Velocities are stored as `[f64; 3]` whatever the dimension; in two
//! dimensions the third component is kept at zero so norms and dot products
//! need no dimension argument.

pub type Vel = [f64; 3];

pub const ZERO: Vel = [0.0; 3];

#[inline]
pub fn dot(a: &Vel, b: &Vel) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm2(a: &Vel) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &Vel) -> f64 {
    norm2(a).sqrt()
}

#[inline]
pub fn add(a: &Vel, b: &Vel) -> Vel {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: &Vel, b: &Vel) -> Vel {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: &Vel, k: f64) -> Vel {
    [a[0] * k, a[1] * k, a[2] * k]
}

/// `a + k * b`
#[inline]
pub fn axpy(a: &Vel, k: f64, b: &Vel) -> Vel {
    [a[0] + k * b[0], a[1] + k * b[1], a[2] + k * b[2]]
}

pub fn unit(a: &Vel) -> Vel {
    let n = norm(a);
    scale(a, 1.0 / n)
}

/// Build a velocity from a slice of length `d` (2 or 3).
pub fn from_slice(xs: &[f64]) -> Vel {
    let mut v = ZERO;
    for (i, x) in xs.iter().take(3).enumerate() {
        v[i] = *x;
    }
    v
}

/// Orthonormal basis of the hyperplane orthogonal to the unit vector `w`.
///
/// Returns `d - 1` vectors. In two dimensions this is the rotation of `w`
/// by a quarter turn; in three dimensions a Gram-Schmidt completion seeded
/// with the coordinate axis least aligned with `w`.
pub fn orthonormal_complement(d: usize, w: &Vel) -> Vec<Vel> {
    match d {
        2 => vec![[-w[1], w[0], 0.0]],
        3 => {
            let ax = w.iter().map(|x| x.abs()).collect::<Vec<_>>();
            let seed: Vel = if ax[0] <= ax[1] && ax[0] <= ax[2] {
                [1.0, 0.0, 0.0]
            } else if ax[1] <= ax[2] {
                [0.0, 1.0, 0.0]
            } else {
                [0.0, 0.0, 1.0]
            };
            let e1 = unit(&axpy(&seed, -dot(&seed, w), w));
            let e2 = [
                w[1] * e1[2] - w[2] * e1[1],
                w[2] * e1[0] - w[0] * e1[2],
                w[0] * e1[1] - w[1] * e1[0],
            ];
            vec![e1, e2]
        }
        _ => panic!("orthonormal_complement supports d in {{2,3}}, got {d}"),
    }
}

/// Surface measure of the unit sphere S^k embedded in R^(k+1).
pub fn sphere_measure(k: usize) -> f64 {
    use std::f64::consts::PI;
    match k {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (k as f64 - 1.0) * sphere_measure(k - 2),
    }
}

/// Volume of the unit ball in R^d.
pub fn ball_volume(d: usize) -> f64 {
    sphere_measure(d - 1) / d as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sphere_measures_match_closed_forms() {
        assert_eq!(sphere_measure(0), 2.0);
        assert!((sphere_measure(1) - 2.0 * PI).abs() < 1e-15);
        assert!((sphere_measure(2) - 4.0 * PI).abs() < 1e-14);
        assert!((sphere_measure(3) - 2.0 * PI * PI).abs() < 1e-13);
        assert!((ball_volume(2) - PI).abs() < 1e-15);
        assert!((ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-14);
    }

    #[test]
    fn complement_is_orthonormal() {
        for w in [[0.3, -0.4, 0.866], [1.0, 0.0, 0.0], [0.0, 0.0, -1.0]] {
            let w = unit(&w);
            let b = orthonormal_complement(3, &w);
            for e in &b {
                assert!((norm(e) - 1.0).abs() < 1e-14);
                assert!(dot(e, &w).abs() < 1e-14);
            }
            assert!(dot(&b[0], &b[1]).abs() < 1e-14);
        }
        let w = unit(&[0.6, 0.8, 0.0]);
        let b = orthonormal_complement(2, &w);
        assert!(dot(&b[0], &w).abs() < 1e-15);
    }
}
