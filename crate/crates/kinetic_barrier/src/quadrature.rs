//! Quadrature building blocks: cached Gauss-Legendre rules, composite and
//! adaptive one-dimensional integration, and direction sets on spheres.

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::{Mutex, OnceLock};

use gauss_quad::legendre::GaussLegendre;

use crate::error::{Error, Result};
use crate::geom::{self, Vel};

/// Gauss-Legendre nodes and weights on `[-1, 1]`, sorted by node, cached.
pub fn gauss_legendre(n: usize) -> &'static [(f64, f64)] {
    static CACHE: OnceLock<Mutex<HashMap<usize, &'static [(f64, f64)]>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    if let Some(r) = guard.get(&n) {
        return r;
    }
    let rule = GaussLegendre::new(NonZeroUsize::new(n).expect("rule order must be positive"));
    let mut pairs: Vec<(f64, f64)> = rule.as_node_weight_pairs().to_vec();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let leaked: &'static [(f64, f64)] = Box::leak(pairs.into_boxed_slice());
    guard.insert(n, leaked);
    leaked
}

/// A one-dimensional quadrature rule stored as flat node/weight arrays.
#[derive(Debug, Clone, Default)]
pub struct Rule1d {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1d {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(*x))
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Composite Gauss-Legendre rule of the given order on consecutive panels
/// `[breaks[i], breaks[i+1]]`. Empty or reversed panels are skipped.
pub fn composite(breaks: &[f64], order: usize) -> Rule1d {
    let gl = gauss_legendre(order);
    let mut rule = Rule1d::default();
    for win in breaks.windows(2) {
        let (a, b) = (win[0], win[1]);
        if !(b > a) {
            continue;
        }
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for &(x, w) in gl {
            rule.nodes.push(mid + half * x);
            rule.weights.push(half * w);
        }
    }
    rule
}

/// Breakpoints growing geometrically by `ratio` from `a > 0` up to `b`.
pub fn geometric_breaks(a: f64, b: f64, ratio: f64) -> Vec<f64> {
    assert!(a > 0.0 && ratio > 1.0);
    let mut out = vec![a];
    let mut x = a;
    while x * ratio < b * (1.0 - 1e-12) {
        x *= ratio;
        out.push(x);
    }
    if b > a {
        out.push(b);
    }
    out
}

/// Breakpoints that are at most `max_width` apart and at most a factor
/// `ratio` apart, from `a > 0` to `b`. Resolves both a singular endpoint at
/// zero and features of fixed size far away.
pub fn graded_breaks(a: f64, b: f64, ratio: f64, max_width: f64) -> Vec<f64> {
    assert!(a > 0.0 && ratio > 1.0 && max_width > 0.0);
    let mut out = vec![a];
    let mut x = a;
    while x < b {
        let next = (x * ratio).min(x + max_width).min(b);
        if b - next < 1e-12 * b {
            out.push(b);
            break;
        }
        out.push(next);
        x = next;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// Globally adaptive Gauss-Legendre integration on `[a, b]`.
///
/// Each panel is integrated with orders `n` and `2n`; the difference is the
/// panel error estimate and the higher-order value is kept. The worst panel
/// is bisected until the total estimate meets `max(abs_tol, rel_tol·|I|)`.
pub fn adaptive<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_panels: usize,
) -> Result<Estimate> {
    const N: usize = 10;
    let lo = gauss_legendre(N);
    let hi = gauss_legendre(2 * N);
    let eval = |a: f64, b: f64| -> (f64, f64) {
        let h = 0.5 * (b - a);
        let m = 0.5 * (a + b);
        let il: f64 = lo.iter().map(|(x, w)| w * f(m + h * x)).sum::<f64>() * h;
        let ih: f64 = hi.iter().map(|(x, w)| w * f(m + h * x)).sum::<f64>() * h;
        (ih, (ih - il).abs())
    };
    let mut panels: Vec<(f64, f64, f64, f64)> = Vec::new();
    let (v, e) = eval(a, b);
    panels.push((a, b, v, e));
    loop {
        let total: f64 = panels.iter().map(|p| p.2).sum();
        let err: f64 = panels.iter().map(|p| p.3).sum();
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::QuadratureNonConvergence(format!(
                "non-finite integrand on [{a}, {b}]"
            )));
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(Estimate { value: total, error: err });
        }
        if panels.len() >= max_panels {
            return Err(Error::QuadratureNonConvergence(format!(
                "error {err:e} above target after {max_panels} panels (value {total:e})"
            )));
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty panel list");
        let (pa, pb, _, _) = panels.swap_remove(idx);
        let mid = 0.5 * (pa + pb);
        let (v1, e1) = eval(pa, mid);
        let (v2, e2) = eval(mid, pb);
        panels.push((pa, mid, v1, e1));
        panels.push((mid, pb, v2, e2));
    }
}

/// Weighted directions covering the full unit sphere `S^{d-1}`.
///
/// `n` controls resolution: `n` equispaced angles in 2D; `n` Gauss nodes in
/// the polar cosine times `2n` azimuths in 3D.
pub fn sphere_rule(d: usize, n: usize) -> Vec<(Vel, f64)> {
    use std::f64::consts::PI;
    match d {
        2 => (0..n)
            .map(|k| {
                let a = 2.0 * PI * (k as f64 + 0.5) / n as f64;
                ([a.cos(), a.sin(), 0.0], 2.0 * PI / n as f64)
            })
            .collect(),
        3 => {
            let nphi = 2 * n;
            let mut out = Vec::with_capacity(n * nphi);
            for &(z, wz) in gauss_legendre(n) {
                let r = (1.0 - z * z).max(0.0).sqrt();
                for j in 0..nphi {
                    let p = 2.0 * PI * (j as f64 + 0.5) / nphi as f64;
                    out.push(([r * p.cos(), r * p.sin(), z], wz * 2.0 * PI / nphi as f64));
                }
            }
            out
        }
        _ => panic!("sphere_rule supports d in {{2,3}}"),
    }
}

/// One representative per antipodal pair of a full-sphere rule with the same
/// resolution; weights are those of the full rule, so summing `w·(F(ω)+F(-ω))`
/// reproduces the full-sphere integral.
pub fn half_sphere_rule(d: usize, n: usize) -> Vec<(Vel, f64)> {
    use std::f64::consts::PI;
    match d {
        2 => {
            let m = n.div_ceil(2);
            (0..m)
                .map(|k| {
                    let a = PI * (k as f64 + 0.5) / m as f64;
                    ([a.cos(), a.sin(), 0.0], PI / m as f64)
                })
                .collect()
        }
        3 => {
            let nz = n.div_ceil(2);
            let nphi = 2 * n;
            let mut out = Vec::with_capacity(nz * nphi);
            for &(x, wx) in gauss_legendre(nz) {
                // map [-1,1] onto z in [0,1]
                let z = 0.5 * (x + 1.0);
                let wz = 0.5 * wx;
                let r = (1.0 - z * z).max(0.0).sqrt();
                for j in 0..nphi {
                    let p = 2.0 * PI * (j as f64 + 0.5) / nphi as f64;
                    out.push(([r * p.cos(), r * p.sin(), z], wz * 2.0 * PI / nphi as f64));
                }
            }
            out
        }
        _ => panic!("half_sphere_rule supports d in {{2,3}}"),
    }
}

/// Directions of the unit sphere inside the hyperplane spanned by `basis`
/// (`basis.len() = d - 1`), one per antipodal pair, weighted so that
/// `Σ w·(F(e)+F(-e))` is the integral over that sphere.
pub fn half_subsphere(basis: &[Vel], n: usize) -> Vec<(Vel, f64)> {
    use std::f64::consts::PI;
    match basis.len() {
        1 => vec![(basis[0], 1.0)],
        2 => {
            let m = n.max(1);
            (0..m)
                .map(|k| {
                    let a = PI * (k as f64 + 0.5) / m as f64;
                    let e = geom::axpy(&geom::scale(&basis[0], a.cos()), a.sin(), &basis[1]);
                    (e, PI / m as f64)
                })
                .collect()
        }
        _ => panic!("half_subsphere supports hyperplanes of dimension 1 or 2"),
    }
}

/// Full version of [`half_subsphere`]: every direction listed explicitly.
pub fn full_subsphere(basis: &[Vel], n: usize) -> Vec<(Vel, f64)> {
    let mut out = Vec::new();
    for (e, w) in half_subsphere(basis, n) {
        out.push((e, w));
        out.push((geom::scale(&e, -1.0), w));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let r = gauss_legendre(5);
        let i: f64 = r.iter().map(|(x, w)| w * x.powi(8)).sum();
        assert!((i - 2.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn composite_rule_on_panels() {
        let r = composite(&[0.0, 1.0, 3.0], 4);
        let i = r.integrate(|x| x * x);
        assert!((i - 9.0).abs() < 1e-12);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        // ∫_0^1 x^{-1/2} dx = 2
        let e = adaptive(|x| x.powf(-0.5), 0.0, 1.0, 1e-10, 0.0, 4000).unwrap();
        assert!((e.value - 2.0).abs() < 1e-8, "{e:?}");
        assert!(e.error < 1e-8);
    }

    #[test]
    fn sphere_rules_have_correct_area() {
        let a2: f64 = sphere_rule(2, 16).iter().map(|x| x.1).sum();
        assert!((a2 - 2.0 * PI).abs() < 1e-13);
        let a3: f64 = sphere_rule(3, 8).iter().map(|x| x.1).sum();
        assert!((a3 - 4.0 * PI).abs() < 1e-12);
        let h3: f64 = half_sphere_rule(3, 8).iter().map(|x| 2.0 * x.1).sum();
        assert!((h3 - 4.0 * PI).abs() < 1e-12);
        // second moment of z over S^2 is 4π/3
        let m: f64 = half_sphere_rule(3, 8)
            .iter()
            .map(|(e, w)| 2.0 * w * e[2] * e[2])
            .sum();
        assert!((m - 4.0 * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn graded_breaks_respect_limits() {
        let b = graded_breaks(0.01, 10.0, 2.0, 0.5);
        assert_eq!(*b.last().unwrap(), 10.0);
        for w in b.windows(2) {
            assert!(w[1] - w[0] <= 0.5 + 1e-12);
            assert!(w[1] / w[0] <= 2.0 + 1e-12);
        }
    }
}
