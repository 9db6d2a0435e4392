//! Collision kernel `B = r^γ b(cos θ)`, the cancellation constant of the
//! non-singular part, and the Carleman kernel `K_f(v, v')`.
//!
//! Angular convention: `b` is supported on deviation angles `θ ∈ [0, π/2]`
//! (the usual symmetrised form). In Carleman variables this restricts the
//! hyperplane integral to `|v'_* - v| ≥ |v' - v|`. An angular truncation
//! `θ ≥ θ_min` further restricts it to `|v' - v| ≥ tan(θ_min/2)·|v'_* - v|`.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::geom::{self, Vel};
use crate::grid::{GridDistribution, TailModel};
use crate::params::KernelParams;
use crate::quadrature::{self, Estimate};

/// `b` as a function of the deviation angle, for `θ ∈ (0, π)`.
///
/// Uses half-angle sines directly so small angles keep full precision.
#[inline]
pub fn b_of_theta(theta: f64, p: &KernelParams) -> f64 {
    let sh = (0.5 * theta).sin();
    let ch = (0.5 * theta).cos();
    let d = p.d as f64;
    sh.powf(-(d - 2.0) + p.gamma) * (sh / ch).powf(-(p.gamma + 2.0 * p.s + 1.0)) * p.btilde.eval(theta.cos())
}

pub fn b_angular(cos_theta: f64, p: &KernelParams) -> Result<f64> {
    if cos_theta >= 1.0 {
        return Err(Error::SingularAngle);
    }
    if !(cos_theta > -1.0) {
        return Err(Error::Domain(format!(
            "cos θ must lie in (-1, 1), got {cos_theta}"
        )));
    }
    Ok(b_of_theta(cos_theta.acos(), p))
}

/// Limit of `b(cos θ)·θ^{d-1+2s}` as `θ → 0`, equal to `2^{d-1+2s}·b̃(1)`.
pub fn small_angle_constant(p: &KernelParams) -> f64 {
    2f64.powf(p.d as f64 - 1.0 + 2.0 * p.s) * p.btilde.eval(1.0)
}

/// The angular part of the kernel together with an optional truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularKernel {
    pub params: KernelParams,
    pub theta_min: f64,
}

impl AngularKernel {
    pub fn new(params: KernelParams, theta_min: f64) -> Result<Self> {
        if !(0.0..FRAC_PI_2).contains(&theta_min) {
            return Err(Error::OutOfRange {
                field: "theta_min",
                detail: format!("need 0 <= theta_min < pi/2, got {theta_min}"),
            });
        }
        Ok(AngularKernel { params, theta_min })
    }

    /// `b(θ)` restricted to `[θ_min, π/2]`, zero outside.
    pub fn b(&self, theta: f64) -> f64 {
        if theta < self.theta_min || theta > FRAC_PI_2 || theta <= 0.0 {
            0.0
        } else {
            b_of_theta(theta, &self.params)
        }
    }

    /// `tan(θ_min / 2)`: the smallest admitted ratio `|v'-v| / |v'_*-v|`.
    pub fn min_ratio(&self) -> f64 {
        (0.5 * self.theta_min).tan()
    }

    /// `∫_{S^{d-1}} b dσ` over the admitted angles; finite only when truncated.
    pub fn angular_mass(&self) -> Result<Estimate> {
        if self.theta_min <= 0.0 {
            return Err(Error::Domain(
                "angular mass is infinite without truncation".into(),
            ));
        }
        let p = self.params;
        let sk = geom::sphere_measure(p.d - 2);
        let (a, b) = (self.theta_min.ln(), FRAC_PI_2.ln());
        let e = quadrature::adaptive(
            |x| {
                let th = x.exp();
                th * th.sin().powi(p.d as i32 - 2) * b_of_theta(th, &p)
            },
            a,
            b,
            1e-12,
            0.0,
            2000,
        )?;
        Ok(Estimate { value: sk * e.value, error: sk * e.error })
    }
}

/// Constant `C_S` with `S(u) = C_S |u|^γ` for the non-singular part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CancellationConstant {
    pub value: f64,
    pub quadrature_error: f64,
}

pub fn cancellation_constant(p: &KernelParams) -> Result<CancellationConstant> {
    cancellation_constant_truncated(p, 0.0)
}

/// `C_S` computed over `θ ∈ [θ_min, π/2]` (`θ_min = 0` for the full kernel).
///
/// The integrand behaves like `θ^{1-2s}` at the origin. Substituting
/// `θ = u^{1/(2-2s)}` makes it bounded, after which adaptive Gauss-Legendre
/// meets a relative target of 1e-10.
pub fn cancellation_constant_truncated(p: &KernelParams, theta_min: f64) -> Result<CancellationConstant> {
    p.require_eval_dim()?;
    let d = p.d as f64;
    let pw = 1.0 / (2.0 - 2.0 * p.s);
    let integrand = |u: f64| -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        let th = u.powf(pw);
        let jac = pw * u.powf(pw - 1.0);
        // (cos θ/2)^{-d-γ} - 1 written with expm1/ln_1p for small angles.
        let q = (0.25 * th).sin();
        let bracket = (-(d + p.gamma) * (-2.0 * q * q).ln_1p()).exp_m1();
        th.sin().powi(p.d as i32 - 2) * bracket * b_of_theta(th, p) * jac
    };
    let ua = theta_min.max(0.0).powf(1.0 / pw);
    let ub = FRAC_PI_2.powf(1.0 / pw);
    let e = quadrature::adaptive(integrand, ua, ub, 1e-10, 1e-300, 4000)?;
    let sk = geom::sphere_measure(p.d - 2);
    let value = sk * e.value;
    let err = sk * e.error;
    if !(value.is_finite()) || err > 1e-8 * value.abs() {
        return Err(Error::QuadratureNonConvergence(format!(
            "cancellation constant {value} with error {err}"
        )));
    }
    Ok(CancellationConstant { value, quadrature_error: err })
}

/// Resolution knobs for hyperplane integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneOptions {
    /// Angular truncation (0 = untruncated).
    pub theta_min: f64,
    /// Truncation radius of the hyperplane; `None` means `4·r_max`.
    pub r_plane: Option<f64>,
    /// Gauss order per radial panel.
    pub radial_order: usize,
    /// Largest radial panel width; `None` means the grid spacing.
    pub panel_width: Option<f64>,
    /// Directions on the half circle inside a 2-plane (3D only).
    pub n_plane_dirs: usize,
}

impl Default for PlaneOptions {
    fn default() -> Self {
        PlaneOptions {
            theta_min: 0.0,
            r_plane: None,
            radial_order: 4,
            panel_width: None,
            n_plane_dirs: 12,
        }
    }
}

/// Radial interval of a ray `v + r e` (`r ≥ 0`) that can meet the support.
#[inline]
pub fn ray_support(v: &Vel, e: &Vel, support: Option<f64>) -> Option<(f64, f64)> {
    match support {
        None => Some((0.0, f64::INFINITY)),
        Some(rs) => {
            let b = geom::dot(v, e);
            let disc = b * b - geom::norm2(v) + rs * rs;
            if disc <= 0.0 {
                return None;
            }
            let sq = disc.sqrt();
            let hi = -b + sq;
            if hi <= 0.0 {
                return None;
            }
            Some(((-b - sq).max(0.0), hi))
        }
    }
}

/// Effective outer radius for integrals against `f`, and the remainder bound
/// for the truncated part when the tail is a power law.
pub fn plane_extent(f: &GridDistribution, v: &Vel, r_plane: Option<f64>) -> f64 {
    let base = r_plane.unwrap_or(4.0 * f.grid.r_max);
    match f.tail {
        TailModel::Zero => base,
        TailModel::PowerLaw { .. } => base.max(2.0 * geom::norm(v) + f.grid.r_max),
    }
}

/// `∫_{z ⊥ ω, ρ ≤ |z| ≤ ρ/tan(θ_min/2)} f(v+z) |z|^{γ+2s+1} b̃(cos θ) dz`
/// where `basis` spans the hyperplane orthogonal to `ω`.
pub fn hyperplane_integral(
    f: &GridDistribution,
    v: &Vel,
    basis: &[Vel],
    rho: f64,
    p: &KernelParams,
    opts: &PlaneOptions,
) -> Result<Estimate> {
    let d = p.d;
    let ratio = (0.5 * opts.theta_min).tan();
    let r_far = plane_extent(f, v, opts.r_plane);
    let hi_cap = if ratio > 0.0 { (rho / ratio).min(r_far) } else { r_far };
    if hi_cap <= rho {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    let support = f.support_radius();
    let width = opts.panel_width.unwrap_or(f.grid.h());
    let expo = p.gamma + 2.0 * p.s + 1.0 + (d as f64 - 2.0);
    let dirs = quadrature::full_subsphere(basis, opts.n_plane_dirs);
    let lo_order = (opts.radial_order / 2).max(1);
    let mut value = 0.0;
    let mut coarse = 0.0;
    let const_mod = matches!(p.btilde, crate::params::AngularModulation::Constant(_));
    let m0 = p.btilde.eval(1.0);
    for (e, w) in &dirs {
        let Some((a, b)) = ray_support(v, e, support) else { continue };
        let (a, b) = (a.max(rho), b.min(hi_cap));
        if b <= a {
            continue;
        }
        let breaks = panel_breaks(a, b, width);
        let fine = quadrature::composite(&breaks, opts.radial_order);
        let crude = quadrature::composite(&breaks, lo_order);
        let integrand = |r: f64| {
            let m = if const_mod {
                m0
            } else {
                p.btilde.eval((r * r - rho * rho) / (r * r + rho * rho))
            };
            f.eval(&geom::axpy(v, r, e)) * r.powf(expo) * m
        };
        value += w * fine.integrate(integrand);
        coarse += w * crude.integrate(integrand);
    }
    let mut error = (value - coarse).abs();
    if ratio == 0.0 || rho / ratio > r_far {
        error += tail_remainder(f, v, r_far, expo, p);
    }
    Ok(Estimate { value, error })
}

/// Bound on the part of a hyperplane integral beyond radius `r_far`.
fn tail_remainder(f: &GridDistribution, v: &Vel, r_far: f64, expo: f64, p: &KernelParams) -> f64 {
    match f.tail {
        TailModel::Zero => 0.0,
        TailModel::PowerLaw { q_tail, amplitude } => {
            let vn = geom::norm(v);
            if r_far <= 2.0 * vn || q_tail <= expo + 1.0 {
                return f64::INFINITY;
            }
            let sk = geom::sphere_measure(p.d - 2);
            // |v + z| ≥ |z| - |v| ≥ |z|/2 beyond 2|v|
            sk * amplitude * 2f64.powf(q_tail) * p.btilde_hi * r_far.powf(expo + 1.0 - q_tail)
                / (q_tail - expo - 1.0)
        }
    }
}

/// Panel breaks on `[a, b]`: geometric growth from `a` capped at `width`.
pub fn panel_breaks(a: f64, b: f64, width: f64) -> Vec<f64> {
    if a <= 0.0 {
        let mut out = vec![0.0];
        let first = width.min(b);
        out.extend(quadrature::graded_breaks(first, b, 2.0, width));
        return out;
    }
    quadrature::graded_breaks(a, b, 2.0, width)
}

/// The Carleman kernel `K_f(v, v')`, including the change-of-variables
/// factor `2^{d-1}`.
pub fn kernel_kf(
    f: &GridDistribution,
    v: &Vel,
    v_prime: &Vel,
    p: &KernelParams,
    opts: &PlaneOptions,
) -> Result<Estimate> {
    p.require_eval_dim()?;
    let w = geom::sub(v_prime, v);
    let rho = geom::norm(&w);
    if rho < 1e-12 * f.grid.h() {
        return Err(Error::DegeneratePair(rho));
    }
    let omega = geom::scale(&w, 1.0 / rho);
    let basis = geom::orthonormal_complement(p.d, &omega);
    let h = hyperplane_integral(f, v, &basis, rho, p, opts)?;
    let pref = 2f64.powi(p.d as i32 - 1) * rho.powf(-(p.d as f64) - 2.0 * p.s);
    Ok(Estimate { value: pref * h.value, error: pref * h.error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::VelocityGrid;

    #[test]
    fn b_at_right_angle_is_sqrt2() {
        let p = KernelParams::new(3, 0.0, 0.25);
        let b = b_angular(0.0, &p).unwrap();
        assert!((b - 2f64.sqrt()).abs() < 1e-14);
        assert_eq!(b_angular(1.0, &p), Err(Error::SingularAngle));
    }

    #[test]
    fn small_angle_limit() {
        let p = KernelParams::new(3, 0.0, 0.25);
        let th = 1e-5;
        let r = b_of_theta(th, &p) * th.powf(2.5);
        assert!((r / small_angle_constant(&p) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn cancellation_constant_positive() {
        for (d, g, s) in [(2, 0.5, 0.3), (3, 0.0, 0.25), (3, -1.0, 0.7), (2, -1.5, 0.9)] {
            let c = cancellation_constant(&KernelParams::new(d, g, s)).unwrap();
            assert!(c.value > 0.0 && c.value.is_finite());
            assert!(c.quadrature_error <= 1e-8 * c.value);
        }
    }

    #[test]
    fn kernel_of_zero_is_zero() {
        let g = VelocityGrid::new(2, 4.0, 16).unwrap();
        let f = GridDistribution::from_fn(g, |_| 0.0);
        let p = KernelParams::new(2, 0.5, 0.3);
        let k = kernel_kf(&f, &[0.5, 0.0, 0.0], &[0.7, 0.1, 0.0], &p, &PlaneOptions::default()).unwrap();
        assert_eq!(k.value, 0.0);
        assert!(matches!(
            kernel_kf(&f, &[0.5, 0.0, 0.0], &[0.5, 0.0, 0.0], &p, &PlaneOptions::default()),
            Err(Error::DegeneratePair(_))
        ));
    }
}
