//! Pointwise evaluation of the collision operator: the σ-representation
//! oracle, the forward and reverse Carleman forms of the singular part, the
//! non-singular part, and the good/bad split of the singular part.

use std::f64::consts::FRAC_PI_2;

use crate::barrier::FrozenBarrier;
use crate::error::{Error, Result};
use crate::geom::{self, Vel};
use crate::grid::{GridDistribution, Interpolation, TailModel};
use crate::kernel::{self, AngularKernel, CancellationConstant, PlaneOptions};
use crate::params::{c1_raw, c3_raw, KernelParams};
use crate::quadrature::{self, Estimate};

/// A function of velocity that can play the role of the second argument.
pub trait VelocityFunction: Sync {
    fn value(&self, v: &Vel) -> f64;
    /// Length over which the function may change character near `v`; sizes
    /// the panels of integrals that only sample this function.
    fn feature_scale(&self, v: &Vel) -> f64;
}

impl VelocityFunction for GridDistribution {
    #[inline]
    fn value(&self, v: &Vel) -> f64 {
        self.eval(v)
    }
    fn feature_scale(&self, _v: &Vel) -> f64 {
        self.grid.h()
    }
}

impl VelocityFunction for FrozenBarrier {
    #[inline]
    fn value(&self, v: &Vel) -> f64 {
        self.at_speed(geom::norm(v))
    }
    /// The barrier varies on the scale of `|v|` away from the unit ball.
    fn feature_scale(&self, v: &Vel) -> f64 {
        0.125 * geom::norm(v).max(1.0)
    }
}

/// How the principal value around `v` is realised.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PvPolicy {
    /// Pair `w` with `-w` and integrate the second difference.
    SymmetricPairing,
    /// Drop the ball `|w| < r_pv`; only legitimate for `s < 1/2`.
    RadiusExclusion(f64),
}

impl PvPolicy {
    pub fn check(&self, p: &KernelParams) -> Result<()> {
        if let PvPolicy::RadiusExclusion(_) = self {
            if p.s >= 0.5 {
                return Err(Error::Config(
                    "symmetric pairing is mandatory when s >= 1/2".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Resolution and truncation knobs shared by the pointwise evaluators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorOptions {
    /// Angular truncation `θ ≥ θ_min` (0 = full non-cutoff kernel).
    pub theta_min: f64,
    /// Hyperplane / outer truncation radius; `None` = `4·r_max`.
    pub r_plane: Option<f64>,
    /// Innermost principal-value shell; `None` = `h/4`.
    pub r_pv_min: Option<f64>,
    /// Directions on the full sphere (2D: count; 3D: polar Gauss order).
    pub n_dir: usize,
    /// Half-circle directions inside 2-planes (3D only).
    pub n_plane_dirs: usize,
    /// Gauss order per radial panel.
    pub radial_order: usize,
    /// Largest radial panel width; `None` = grid spacing.
    pub panel_width: Option<f64>,
    /// Gauss nodes per panel in log θ (σ-oracle), two panels.
    pub theta_order: usize,
    /// Also evaluate a coarser rule and report the difference as error.
    pub estimate_error: bool,
    pub pv: PvPolicy,
}

impl Default for OperatorOptions {
    fn default() -> Self {
        OperatorOptions {
            theta_min: 0.0,
            r_plane: None,
            r_pv_min: None,
            n_dir: 64,
            n_plane_dirs: 12,
            radial_order: 4,
            panel_width: None,
            theta_order: 8,
            estimate_error: true,
            pv: PvPolicy::SymmetricPairing,
        }
    }
}

impl OperatorOptions {
    pub fn truncated(theta_min: f64) -> Self {
        OperatorOptions { theta_min, ..Default::default() }
    }

    /// The comparison rule used for error estimates.
    fn coarse(&self) -> Self {
        OperatorOptions {
            n_dir: (self.n_dir * 2 / 3).max(4),
            n_plane_dirs: (self.n_plane_dirs * 2 / 3).max(2),
            radial_order: (self.radial_order - 1).max(2),
            theta_order: (self.theta_order * 2 / 3).max(3),
            estimate_error: false,
            ..*self
        }
    }

    fn plane(&self) -> PlaneOptions {
        PlaneOptions {
            theta_min: self.theta_min,
            r_plane: self.r_plane,
            radial_order: self.radial_order,
            panel_width: self.panel_width,
            n_plane_dirs: self.n_plane_dirs,
        }
    }

    fn r_pv(&self, f: &GridDistribution) -> f64 {
        match self.pv {
            PvPolicy::RadiusExclusion(r) => r,
            PvPolicy::SymmetricPairing => self.r_pv_min.unwrap_or(0.25 * f.grid.h()),
        }
    }
}

/// Non-finite shell sums mean the principal value did not settle.
fn finite_or_divergent(xs: &[f64]) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::PvDivergence(format!("non-finite shell sum in {xs:?}")))
    }
}

fn check_v(v: &Vel) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain(format!("non-finite velocity {v:?}")))
    }
}

/// Outer radius for integrals over the support of `f` as seen from `v`.
fn support_extent(f: &GridDistribution, v: &Vel, opts: &OperatorOptions) -> f64 {
    match f.support_radius() {
        Some(rs) => rs,
        None => kernel::plane_extent(f, v, opts.r_plane),
    }
}

// ---------------------------------------------------------------------------
// Volume integrals against f
// ---------------------------------------------------------------------------

/// `∫ f(w) |v - w|^γ dw`, integrating the interpolant cell by cell.
///
/// Cells are the lattice cells on which the interpolant is polynomial; each
/// is integrated with 2- and 3-point Gauss rules (the difference is the error
/// estimate), and cells next to `v` are subdivided so the `|v-w|^γ`
/// singularity is resolved. Power-law tails are integrated on nested shells
/// of growing tiles out to the effective plane radius; the analytic remainder
/// beyond it is added to the error.
pub fn potential(f: &GridDistribution, v: &Vel, gamma: f64, r_plane: Option<f64>) -> Estimate {
    let g = &f.grid;
    let d = g.d;
    let h = g.h();
    let reach: i64 = match f.interpolation {
        Interpolation::Multilinear => 1,
        Interpolation::Tricubic => 2,
    };
    let n = g.n_per_axis as i64;
    let kern = |w: &Vel| -> f64 {
        let r = geom::norm(&geom::sub(v, w));
        if r == 0.0 {
            0.0
        } else {
            r.powf(gamma)
        }
    };
    let integrand = |w: &Vel| f.eval(w) * kern(w);
    let mut fine = 0.0;
    let mut crude = 0.0;
    let lo = -reach;
    let hi = n - 1 + reach; // cells [coord(i), coord(i+1)] for i in lo..hi
    let mut idx = [0i64; 3];
    let counts = (hi - lo) as usize;
    let total = counts.pow(d as u32);
    for lin in 0..total {
        let mut r = lin;
        for k in 0..d {
            idx[k] = lo + (r % counts) as i64;
            r /= counts;
        }
        let mut corner = geom::ZERO;
        for k in 0..d {
            corner[k] = g.coord(idx[k]);
        }
        let near = (0..d).all(|k| v[k] > corner[k] - 1.5 * h && v[k] < corner[k] + 2.5 * h);
        let split = if near { 4 } else { 1 };
        let (a, b) = tile_gauss(d, &corner, h, split, &integrand);
        fine += a;
        crude += b;
    }
    let mut error = (fine - crude).abs();
    if let TailModel::PowerLaw { q_tail, amplitude } = f.tail {
        let inner = g.coord(hi);
        let outer = kernel::plane_extent(f, v, r_plane).max(2.0 * inner);
        let (a, b) = nested_shells(d, inner, outer, h, v, &integrand);
        fine += a;
        error += (a - b).abs();
        let expo = d as f64 + gamma - q_tail;
        error += if expo < 0.0 {
            geom::sphere_measure(d - 1) * amplitude * 2f64.powf(gamma.abs() + q_tail)
                * outer.powf(expo) / (-expo)
        } else {
            f64::INFINITY
        };
    }
    Estimate { value: fine, error }
}

/// Integrate over the cube `[corner, corner + side]^d` split into `split^d`
/// sub-cubes, with 3- and 2-point Gauss rules. Returns (fine, crude).
fn tile_gauss<F: Fn(&Vel) -> f64>(d: usize, corner: &Vel, side: f64, split: usize, f: &F) -> (f64, f64) {
    let g3 = quadrature::gauss_legendre(3);
    let g2 = quadrature::gauss_legendre(2);
    let sub = side / split as f64;
    let half = 0.5 * sub;
    let mut fine = 0.0;
    let mut crude = 0.0;
    let subs = split.pow(d as u32);
    for s in 0..subs {
        let mut c = geom::ZERO;
        let mut r = s;
        for k in 0..d {
            c[k] = corner[k] + ((r % split) as f64 + 0.5) * sub;
            r /= split;
        }
        let vol = sub.powi(d as i32);
        for (rule, acc) in [(g3, &mut fine), (g2, &mut crude)] {
            let m = rule.len();
            let pts = m.pow(d as u32);
            let mut sum = 0.0;
            for q in 0..pts {
                let mut x = c;
                let mut w = 1.0;
                let mut r = q;
                for k in 0..d {
                    let (node, wt) = rule[r % m];
                    x[k] = c[k] + half * node;
                    w *= 0.5 * wt;
                    r /= m;
                }
                sum += w * f(&x);
            }
            *acc += vol * sum;
        }
    }
    (fine, crude)
}

/// Integrate over `inner < |w|_∞ ≤ outer` with nested shells of tiles whose
/// size doubles with the shell; tiles close to `singular` are refined.
fn nested_shells<F: Fn(&Vel) -> f64>(d: usize, inner: f64, outer: f64, h: f64, singular: &Vel, f: &F) -> (f64, f64) {
    let mut fine = 0.0;
    let mut crude = 0.0;
    let mut b = inner;
    while b < outer {
        let side = 0.5 * b;
        let per_axis = 8usize; // tiles across [-2b, 2b]
        let tiles = per_axis.pow(d as u32);
        for t in 0..tiles {
            let mut corner = geom::ZERO;
            let mut r = t;
            let mut inside = true;
            for k in 0..d {
                let j = (r % per_axis) as i64;
                r /= per_axis;
                corner[k] = -2.0 * b + j as f64 * side;
                if !(2..6).contains(&j) {
                    inside = false;
                }
            }
            if inside {
                continue;
            }
            let (a, c) = refine_tile(d, &corner, side, h, singular, f, 0);
            fine += a;
            crude += c;
        }
        b *= 2.0;
    }
    (fine, crude)
}

fn refine_tile<F: Fn(&Vel) -> f64>(d: usize, corner: &Vel, side: f64, h: f64, singular: &Vel, f: &F, depth: usize) -> (f64, f64) {
    let close = (0..d).all(|k| singular[k] > corner[k] - side && singular[k] < corner[k] + 2.0 * side);
    if close && side > h && depth < 16 {
        let half = 0.5 * side;
        let mut fine = 0.0;
        let mut crude = 0.0;
        for c in 0..(1usize << d) {
            let mut cc = *corner;
            for k in 0..d {
                if (c >> k) & 1 == 1 {
                    cc[k] += half;
                }
            }
            let (a, b) = refine_tile(d, &cc, half, h, singular, f, depth + 1);
            fine += a;
            crude += b;
        }
        return (fine, crude);
    }
    let split = if side > 4.0 * h { 4 } else { 2 };
    tile_gauss(d, corner, side, split, f)
}

// ---------------------------------------------------------------------------
// Non-singular part
// ---------------------------------------------------------------------------

/// `Q_ns(f,f)(v) = f(v) · C_S · ∫ f(v - u) |u|^γ du`.
pub fn q_ns(f: &GridDistribution, v: &Vel, p: &KernelParams, cs: &CancellationConstant) -> Result<Estimate> {
    p.require_eval_dim()?;
    check_v(v)?;
    let fv = f.eval(v);
    if fv == 0.0 {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    let pot = potential(f, v, p.gamma, None);
    Ok(Estimate {
        value: fv * cs.value * pot.value,
        error: fv * (cs.value * pot.error + cs.quadrature_error * pot.value.abs()),
    })
}

// ---------------------------------------------------------------------------
// σ-representation oracle
// ---------------------------------------------------------------------------

/// Direct quadrature of `∫∫ [f(v'_*) f(v') - f(v_*) f(v)] B dσ dv_*` over
/// deviation angles `θ ∈ [θ_min, π/2]`.
///
/// Relative velocity `u = v - v_*` is integrated in polar coordinates
/// around `v`, the deviation angle in `log θ`, and the azimuth of `σ` around
/// `u` on the `(d-2)`-sphere. The error estimate adds the difference with a
/// coarser rule and the difference obtained by switching the interpolation
/// rule of `f` (an estimate of the discretisation error of `f` itself).
pub fn q_sigma_oracle(f: &GridDistribution, v: &Vel, p: &KernelParams, opts: &OperatorOptions) -> Result<Estimate> {
    p.require_eval_dim()?;
    check_v(v)?;
    if !(opts.theta_min > 0.0) {
        return Err(Error::PreconditionViolated(
            "the sigma oracle needs an angular truncation theta_min > 0".into(),
        ));
    }
    AngularKernel::new(*p, opts.theta_min)?;
    let value = sigma_core(f, v, p, opts);
    if !opts.estimate_error {
        return Ok(Estimate { value, error: 0.0 });
    }
    let coarse = sigma_core(f, v, p, &opts.coarse());
    let alt = f.clone().with_interpolation(match f.interpolation {
        Interpolation::Multilinear => Interpolation::Tricubic,
        Interpolation::Tricubic => Interpolation::Multilinear,
    });
    let other = sigma_core(&alt, v, p, opts);
    Ok(Estimate {
        value,
        error: (value - coarse).abs() + (value - other).abs(),
    })
}

fn sigma_core(f: &GridDistribution, v: &Vel, p: &KernelParams, opts: &OperatorOptions) -> f64 {
    let d = p.d;
    let h = f.grid.h();
    let width = opts.panel_width.unwrap_or(h);
    let vn = geom::norm(v);
    let rs = support_extent(f, v, opts);
    let r_u = (2.0 * rs).max(vn + rs);
    let rad = quadrature::composite(&kernel::panel_breaks(0.0, r_u, width), opts.radial_order);
    let lt = quadrature::composite(
        &[opts.theta_min.ln(), 0.5 * (opts.theta_min.ln() + FRAC_PI_2.ln()), FRAC_PI_2.ln()],
        opts.theta_order,
    );
    // angular factor per θ node: b(θ) sin^{d-2}θ θ dlogθ
    let thetas: Vec<(f64, f64, f64, f64)> = lt
        .iter()
        .map(|(x, w)| {
            let th = x.exp();
            let wt = w * th * th.sin().powi(d as i32 - 2) * kernel::b_of_theta(th, p);
            (th.cos(), th.sin(), wt, 0.0)
        })
        .collect();
    let fv = f.eval(v);
    let dirs = quadrature::sphere_rule(d, opts.n_dir);
    let mut total = 0.0;
    for (uh, wu) in &dirs {
        let basis = geom::orthonormal_complement(d, uh);
        let azim = quadrature::full_subsphere(&basis, opts.n_plane_dirs);
        let mut acc_dir = 0.0;
        for (r, wr) in rad.iter() {
            let vstar = geom::axpy(v, -r, uh);
            let fvs = f.eval(&vstar);
            let mut acc = 0.0;
            for &(ct, st, wt, _) in &thetas {
                let mut inner = 0.0;
                for (e, we) in &azim {
                    // v' - v = (r/2)((cosθ - 1) û + sinθ e), v'_* - v = -(r/2)((1 + cosθ) û + sinθ e)
                    let a = geom::axpy(&geom::scale(uh, 0.5 * r * (ct - 1.0)), 0.5 * r * st, e);
                    let b = geom::axpy(&geom::scale(uh, -0.5 * r * (1.0 + ct)), -0.5 * r * st, e);
                    let vp = geom::add(v, &a);
                    let vps = geom::add(v, &b);
                    inner += we * (f.eval(&vp) * f.eval(&vps) - fvs * fv);
                }
                acc += wt * inner;
            }
            acc_dir += wr * r.powf(d as f64 - 1.0 + p.gamma) * acc;
        }
        total += wu * acc_dir;
    }
    total
}

// ---------------------------------------------------------------------------
// Forward Carleman form
// ---------------------------------------------------------------------------

/// Singular part in the forward Carleman form,
/// `PV ∫ K_f(v, v') [g(v') - g(v)] dv'`, with the kernel computed from
/// hyperplane integrals and the principal value realised by pairing `w`
/// with `-w` (the kernel is even in `w`).
pub fn q_s_carleman(
    f: &GridDistribution,
    g: &dyn VelocityFunction,
    v: &Vel,
    p: &KernelParams,
    opts: &OperatorOptions,
) -> Result<Estimate> {
    p.require_eval_dim()?;
    check_v(v)?;
    opts.pv.check(p)?;
    let fine = forward_core(f, g, v, p, opts)?;
    if !opts.estimate_error {
        return Ok(Estimate { value: fine.0, error: fine.1 });
    }
    let coarse = forward_core(f, g, v, p, &opts.coarse())?;
    Ok(Estimate {
        value: fine.0,
        error: (fine.0 - coarse.0).abs() + fine.1,
    })
}

/// Returns (value, error not captured by a coarse comparison).
fn forward_core(
    f: &GridDistribution,
    g: &dyn VelocityFunction,
    v: &Vel,
    p: &KernelParams,
    opts: &OperatorOptions,
) -> Result<(f64, f64)> {
    let d = p.d;
    let gv = g.value(v);
    let r_pv = opts.r_pv(f);
    let rs = support_extent(f, v, opts);
    let rho_max = geom::norm(v) + rs;
    if rho_max <= r_pv {
        return Ok((0.0, 0.0));
    }
    let width = opts
        .panel_width
        .unwrap_or(f.grid.h())
        .min(g.feature_scale(v));
    let rad = quadrature::composite(&kernel::panel_breaks(r_pv, rho_max, width), opts.radial_order);
    let plane = opts.plane();
    let pref = 2f64.powi(d as i32 - 1);
    let dirs = quadrature::half_sphere_rule(d, opts.n_dir);
    let alpha = if opts.theta_min > 0.0 {
        p.gamma + d as f64 + 1.0
    } else {
        1.0 - 2.0 * p.s
    };
    let mut total = 0.0;
    let mut extra_err = 0.0;
    let mut inner_corr = 0.0;
    for (om, wo) in &dirs {
        let basis = geom::orthonormal_complement(d, om);
        let mut first: Option<(f64, f64)> = None;
        let mut acc = 0.0;
        for (rho, wr) in rad.iter() {
            let hp = kernel::hyperplane_integral(f, v, &basis, rho, p, &plane)?;
            let k = pref * rho.powf(-(d as f64) - 2.0 * p.s);
            let d2 = g.value(&geom::axpy(v, rho, om)) + g.value(&geom::axpy(v, -rho, om)) - 2.0 * gv;
            let integrand = rho.powi(d as i32 - 1) * k * hp.value * d2;
            if first.is_none() {
                first = Some((rho, integrand));
            }
            acc += wr * integrand;
            extra_err += wo * wr * (rho.powi(d as i32 - 1) * k * hp.error * d2).abs();
        }
        total += wo * acc;
        if matches!(opts.pv, PvPolicy::SymmetricPairing) {
            if let Some((r1, i1)) = first {
                // extrapolate I(ρ) ~ ρ^α below the innermost shell
                inner_corr += wo * i1 * r_pv * (r_pv / r1).powf(alpha) / (alpha + 1.0);
            }
        }
    }
    total += inner_corr;
    finite_or_divergent(&[total, extra_err])?;
    Ok((total, extra_err + inner_corr.abs()))
}

// ---------------------------------------------------------------------------
// Reverse Carleman form and the good/bad split
// ---------------------------------------------------------------------------

/// Bins of the split, in the order good, bad1, bad2, bad3.
pub const N_BINS: usize = 4;

#[derive(Debug, Clone, Copy)]
struct SplitGeometry {
    /// Radius of the good ball for `v'_*` (∞: everything is good).
    good_radius: f64,
    /// `|v| / 2`
    half: f64,
    /// `c3(q)·|v|`
    near: f64,
    enabled: bool,
    /// Skip every outer node beyond the good ball.
    good_only: bool,
}

impl SplitGeometry {
    #[inline]
    fn outer_bin(&self, vps_norm: f64) -> Option<usize> {
        if !self.enabled || vps_norm <= self.good_radius {
            Some(0)
        } else {
            None
        }
    }

    #[inline]
    fn inner_bin(&self, vp_norm: f64) -> usize {
        if vp_norm >= self.half {
            1
        } else if vp_norm < self.near {
            2
        } else {
            3
        }
    }
}

/// Singular part in the reverse Carleman form,
/// `PV ∫ f(v'_*) |v - v'_*|^{γ+2s} ∫_{v' ∈ v + (v - v'_*)^⊥} [g(v') - g(v)] b̃ |v'-v|^{-(d-1)-2s} dv' dv'_*`
/// (times the change-of-variables factor `2^{d-1}`).
pub fn q_s_reverse(
    f: &GridDistribution,
    g: &dyn VelocityFunction,
    v: &Vel,
    p: &KernelParams,
    opts: &OperatorOptions,
) -> Result<Estimate> {
    p.require_eval_dim()?;
    check_v(v)?;
    opts.pv.check(p)?;
    let geo = SplitGeometry { good_radius: f64::INFINITY, half: 0.0, near: 0.0, enabled: false, good_only: false };
    let (bins, errs) = reverse_binned(f, g, v, p, opts, geo)?;
    Ok(Estimate {
        value: bins.iter().sum(),
        error: errs.iter().sum(),
    })
}

fn reverse_binned(
    f: &GridDistribution,
    g: &dyn VelocityFunction,
    v: &Vel,
    p: &KernelParams,
    opts: &OperatorOptions,
    geo: SplitGeometry,
) -> Result<([f64; N_BINS], [f64; N_BINS])> {
    let (fine, extra) = reverse_core(f, g, v, p, opts, geo)?;
    finite_or_divergent(&fine)?;
    finite_or_divergent(&extra)?;
    if !opts.estimate_error {
        return Ok((fine, extra));
    }
    let (coarse, _) = reverse_core(f, g, v, p, &opts.coarse(), geo)?;
    let mut err = [0.0; N_BINS];
    for i in 0..N_BINS {
        err[i] = (fine[i] - coarse[i]).abs() + extra[i];
    }
    Ok((fine, err))
}

fn reverse_core(
    f: &GridDistribution,
    g: &dyn VelocityFunction,
    v: &Vel,
    p: &KernelParams,
    opts: &OperatorOptions,
    geo: SplitGeometry,
) -> Result<([f64; N_BINS], [f64; N_BINS])> {
    let d = p.d;
    let gv = g.value(v);
    let r_pv = opts.r_pv(f);
    let ratio = (0.5 * opts.theta_min).tan();
    let pref = 2f64.powi(d as i32 - 1);
    let mut r_out = support_extent(f, v, opts);
    let hf = f.grid.h();
    let mut width_out = opts.panel_width.unwrap_or(hf);
    if geo.good_only {
        r_out = r_out.min(geo.good_radius);
        width_out = width_out.min(r_out / 4.0);
    }
    let width_in = match opts.panel_width {
        Some(w) => w.min(g.feature_scale(v)),
        None => g.feature_scale(v),
    };
    let mut breaks = kernel::panel_breaks(0.0, r_out, width_out);
    if geo.enabled && geo.good_radius.is_finite() && geo.good_radius < r_out {
        breaks.push(geo.good_radius);
        breaks.sort_by(|a, b| a.total_cmp(b));
        breaks.dedup();
        // the ball itself gets its own graded panels so small balls are resolved
        let inner: Vec<f64> = kernel::panel_breaks(0.0, geo.good_radius, width_out.min(geo.good_radius / 4.0));
        breaks.retain(|x| *x >= geo.good_radius);
        let mut all = inner;
        all.extend(breaks);
        all.dedup();
        breaks = all;
    }
    let rad = quadrature::composite(&breaks, opts.radial_order);
    let dirs = quadrature::sphere_rule(d, opts.n_dir);
    let const_mod = matches!(p.btilde, crate::params::AngularModulation::Constant(_));
    let m0 = p.btilde.eval(1.0);
    let expo_out = p.gamma + 2.0 * p.s;
    let expo_in = -1.0 - 2.0 * p.s; // r^{d-2} · r^{-(d-1)-2s}
    let pairing = matches!(opts.pv, PvPolicy::SymmetricPairing);
    let mut bins = [0.0; N_BINS];
    let mut extra = [0.0; N_BINS];
    for (e_out, w_out) in &dirs {
        for (r, wr) in rad.iter() {
            let vps = geom::scale(e_out, r);
            let fvs = f.eval(&vps);
            if fvs == 0.0 {
                continue;
            }
            let z = geom::sub(&vps, v);
            let zn = geom::norm(&z);
            if zn == 0.0 {
                continue;
            }
            let outer_w = w_out * wr * r.powi(d as i32 - 1) * fvs * zn.powf(expo_out) * pref;
            let outer_bin = geo.outer_bin(r);
            let zh = geom::scale(&z, 1.0 / zn);
            let basis = geom::orthonormal_complement(d, &zh);
            let pdirs = quadrature::half_subsphere(&basis, opts.n_plane_dirs);
            let lo = if ratio > 0.0 { ratio * zn } else { r_pv.min(zn) };
            let ib = kernel::panel_breaks(lo, zn, width_in);
            let irule = quadrature::composite(&ib, opts.radial_order);
            let u1 = irule.nodes.first().copied();
            let mut i1 = 0.0;
            for (e, we) in &pdirs {
                for (j, (u, wu)) in irule.iter().enumerate() {
                    let m = if const_mod {
                        m0
                    } else {
                        p.btilde.eval((zn * zn - u * u) / (zn * zn + u * u))
                    };
                    let base = outer_w * we * u.powf(expo_in) * m;
                    let a = geom::axpy(v, u, e);
                    let b = geom::axpy(v, -u, e);
                    let da = g.value(&a) - gv;
                    let db = g.value(&b) - gv;
                    match outer_bin {
                        Some(k) => bins[k] += wu * base * (da + db),
                        None => {
                            bins[geo.inner_bin(geom::norm(&a))] += wu * base * da;
                            bins[geo.inner_bin(geom::norm(&b))] += wu * base * db;
                        }
                    }
                    if j == 0 {
                        i1 += base * (da + db);
                    }
                }
            }
            if ratio == 0.0 && pairing && lo < zn {
                if let Some(u1) = u1 {
                    // paired second difference ~ u^2, so the integrand ~ u^{1-2s}
                    let alpha = 1.0 - 2.0 * p.s;
                    let corr = i1 * lo * (lo / u1).powf(alpha) / (alpha + 1.0);
                    let k = outer_bin.unwrap_or(1);
                    bins[k] += corr;
                    extra[k] += corr.abs();
                }
            }
        }
    }
    Ok((bins, extra))
}

/// The five pieces of `Q = 𝒢 + ℬ₁ + ℬ₂ + ℬ₃ + Q_ns` at one velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitResult {
    pub good: f64,
    pub bad1: f64,
    pub bad2: f64,
    pub bad3: f64,
    pub q_ns: f64,
    /// `good + bad1 + bad2 + bad3 + q_ns`
    pub total: f64,
    /// Error estimates in the order good, bad1, bad2, bad3, q_ns.
    pub errors: [f64; 5],
}

impl SplitResult {
    pub fn singular(&self) -> f64 {
        self.good + self.bad1 + self.bad2 + self.bad3
    }

    pub fn singular_error(&self) -> f64 {
        self.errors[..4].iter().sum()
    }

    pub fn total_error(&self) -> f64 {
        self.errors.iter().sum()
    }
}

/// Evaluate the split at `v` for the splitting exponent `q`.
///
/// `𝒢` collects `|v'_*| ≤ c₁(q)|v|`; the rest is sorted by the position of
/// `v'` into `ℬ₁` (`|v'| ≥ |v|/2`), `ℬ₂` (`|v'| < c₃(q)|v|`) and `ℬ₃`. All four
/// are accumulated from the same quadrature nodes of the reverse form, so
/// they partition the singular part exactly. For `q < 1` the raw formula
/// `c₁ = 1/(20q)` is used (infinite at `q = 0`: every collision is good).
pub fn split_operator(
    f: &GridDistribution,
    g: &dyn VelocityFunction,
    v: &Vel,
    q: f64,
    p: &KernelParams,
    cs: &CancellationConstant,
    opts: &OperatorOptions,
) -> Result<SplitResult> {
    let mut r = split_singular(f, g, v, q, p, opts)?;
    let qns = q_ns_for_split(f, v, p, cs)?;
    r.q_ns = qns.value;
    r.total += qns.value;
    r.errors[4] = qns.error;
    Ok(r)
}

/// The four singular pieces only; `q_ns` is left at zero. The singular part
/// is linear in `f`, so splits of a sum are sums of splits.
pub fn split_singular(
    f: &GridDistribution,
    g: &dyn VelocityFunction,
    v: &Vel,
    q: f64,
    p: &KernelParams,
    opts: &OperatorOptions,
) -> Result<SplitResult> {
    let geo = split_geometry(p, v, q, opts, false)?;
    let (bins, errs) = reverse_binned(f, g, v, p, opts, geo)?;
    Ok(SplitResult {
        good: bins[0],
        bad1: bins[1],
        bad2: bins[2],
        bad3: bins[3],
        q_ns: 0.0,
        total: bins.iter().sum(),
        errors: [errs[0], errs[1], errs[2], errs[3], 0.0],
    })
}

/// `𝒢(f, g)(v)` alone; outer nodes outside the good ball are never visited.
pub fn good_term(
    f: &GridDistribution,
    g: &dyn VelocityFunction,
    v: &Vel,
    q: f64,
    p: &KernelParams,
    opts: &OperatorOptions,
) -> Result<Estimate> {
    let geo = split_geometry(p, v, q, opts, true)?;
    let (bins, errs) = reverse_binned(f, g, v, p, opts, geo)?;
    Ok(Estimate { value: bins[0], error: errs[0] })
}

fn split_geometry(p: &KernelParams, v: &Vel, q: f64, opts: &OperatorOptions, good_only: bool) -> Result<SplitGeometry> {
    p.require_eval_dim()?;
    check_v(v)?;
    opts.pv.check(p)?;
    let vn = geom::norm(v);
    if !(vn > 0.0) {
        return Err(Error::PreconditionViolated("split needs |v| > 0".into()));
    }
    if !(q >= 0.0) {
        return Err(Error::PreconditionViolated(format!("split needs q >= 0, got {q}")));
    }
    Ok(SplitGeometry {
        good_radius: c1_raw(q) * vn,
        half: 0.5 * vn,
        near: c3_raw(q) * vn,
        enabled: true,
        good_only,
    })
}

fn q_ns_for_split(f: &GridDistribution, v: &Vel, p: &KernelParams, cs: &CancellationConstant) -> Result<Estimate> {
    q_ns(f, v, p, cs)
}

/// `ℬ₂ + ℬ₃` evaluated in the forward form: `∫_{|v'| < |v|/2} K_{f χ̃}(v,v') [g(v') - g(v)] dv'`,
/// where `χ̃` keeps `|v'_*| > c₁(q)|v|`. Used to cross-check the reverse split.
pub fn bad23_forward(
    f: &GridDistribution,
    g: &dyn VelocityFunction,
    v: &Vel,
    q: f64,
    p: &KernelParams,
    opts: &OperatorOptions,
) -> Result<Estimate> {
    p.require_eval_dim()?;
    let d = p.d;
    let vn = geom::norm(v);
    let good_r = c1_raw(q) * vn;
    let half = 0.5 * vn;
    let gv = g.value(v);
    let ratio = (0.5 * opts.theta_min).tan();
    let pref = 2f64.powi(d as i32 - 1);
    let width = opts.panel_width.unwrap_or(f.grid.h());
    let r_far = kernel::plane_extent(f, v, opts.r_plane);
    let support = f.support_radius();
    // v' = origin-centred polar over the ball |v'| < |v|/2
    let rad = quadrature::composite(&kernel::panel_breaks(0.0, half, width.min(half / 4.0)), opts.radial_order);
    let dirs = quadrature::sphere_rule(d, opts.n_dir);
    let mut fine = 0.0;
    let mut crude = 0.0;
    let lo_order = (opts.radial_order / 2).max(1);
    for (e, we) in &dirs {
        for (r, wr) in rad.iter() {
            let vp = geom::scale(e, r);
            let w = geom::sub(&vp, v);
            let rho = geom::norm(&w);
            let om = geom::scale(&w, 1.0 / rho);
            let basis = geom::orthonormal_complement(d, &om);
            let hi_cap = if ratio > 0.0 { (rho / ratio).min(r_far) } else { r_far };
            let mut hp = 0.0;
            let mut hc = 0.0;
            for (b, wb) in quadrature::full_subsphere(&basis, opts.n_plane_dirs) {
                let Some((a0, b0)) = kernel::ray_support(v, &b, support) else { continue };
                let (a0, b0) = (a0.max(rho), b0.min(hi_cap));
                if b0 <= a0 {
                    continue;
                }
                let br = kernel::panel_breaks(a0, b0, width);
                let integrand = |t: f64| {
                    let x = geom::axpy(v, t, &b);
                    if geom::norm(&x) <= good_r {
                        0.0
                    } else {
                        f.eval(&x) * t.powf(p.gamma + 2.0 * p.s + 1.0 + d as f64 - 2.0)
                            * p.btilde.eval((t * t - rho * rho) / (t * t + rho * rho))
                    }
                };
                hp += wb * quadrature::composite(&br, opts.radial_order).integrate(integrand);
                hc += wb * quadrature::composite(&br, lo_order).integrate(integrand);
            }
            let k = pref * rho.powf(-(d as f64) - 2.0 * p.s);
            let wt = we * wr * r.powi(d as i32 - 1) * k * (g.value(&vp) - gv);
            fine += wt * hp;
            crude += wt * hc;
        }
    }
    Ok(Estimate { value: fine, error: (fine - crude).abs() })
}

/// Total operator in Carleman form: forward singular part plus `Q_ns`.
pub fn q_carleman_total(
    f: &GridDistribution,
    v: &Vel,
    p: &KernelParams,
    cs: &CancellationConstant,
    opts: &OperatorOptions,
) -> Result<Estimate> {
    let qs = q_s_carleman(f, f, v, p, opts)?;
    let qn = q_ns(f, v, p, cs)?;
    Ok(Estimate { value: qs.value + qn.value, error: qs.error + qn.error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::VelocityGrid;

    fn maxwellian(g: VelocityGrid) -> GridDistribution {
        GridDistribution::from_fn(g, |v| (-(v[0] * v[0] + v[1] * v[1]) / 2.0).exp() / (2.0 * std::f64::consts::PI))
    }

    #[test]
    fn potential_of_maxwellian_at_gamma_zero_is_mass() {
        let g = VelocityGrid::new(2, 6.0, 48).unwrap();
        let f = maxwellian(g);
        let e = potential(&f, &[0.3, 0.2, 0.0], 0.0, None);
        assert!((e.value - 1.0).abs() < 2e-3, "{e:?}");
    }

    #[test]
    fn constant_second_argument_gives_zero() {
        let g = VelocityGrid::new(2, 4.0, 16).unwrap();
        let f = maxwellian(g);
        let p = KernelParams::new(2, 0.5, 0.3);
        let c = FrozenBarrier::plain(1.0, 0.0);
        let opts = OperatorOptions { n_dir: 16, ..Default::default() };
        let a = q_s_carleman(&f, &c, &[0.5, 0.1, 0.0], &p, &opts).unwrap();
        assert_eq!(a.value, 0.0);
        let b = q_s_reverse(&f, &c, &[0.5, 0.1, 0.0], &p, &opts).unwrap();
        assert_eq!(b.value, 0.0);
    }

    #[test]
    fn radius_exclusion_rejected_for_large_s() {
        let g = VelocityGrid::new(2, 4.0, 16).unwrap();
        let f = maxwellian(g);
        let p = KernelParams::new(2, 0.5, 0.6);
        let opts = OperatorOptions { pv: PvPolicy::RadiusExclusion(0.1), ..Default::default() };
        assert!(q_s_carleman(&f, &f, &[0.5, 0.1, 0.0], &p, &opts).is_err());
    }
}
