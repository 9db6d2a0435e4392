//! Hydrodynamic fields, the mass core (a bounded set where `f` is bounded
//! below) and the cone of non-degenerate directions of the Carleman kernel.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geom::{self, Vel};
use crate::grid::GridDistribution;
use crate::kernel::{self, PlaneOptions};
use crate::params::KernelParams;

/// Configured bounds `(m0, M0, E0, H0)` on mass, energy and entropy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HydroBounds {
    pub m0: f64,
    pub mass_max: f64,
    pub e0: f64,
    pub h0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HydroState {
    pub mass: f64,
    pub energy: f64,
    pub entropy: f64,
}

impl HydroState {
    /// `0 < m0 ≤ M ≤ M0`, `E ≤ E0`, `H ≤ H0`.
    pub fn satisfies_bounds(&self, b: &HydroBounds) -> bool {
        0.0 < b.m0 && b.m0 <= self.mass && self.mass <= b.mass_max && self.energy <= b.e0 && self.entropy <= b.h0
    }
}

/// Grid sums `M = Σ f h^d`, `E = Σ f |v|² h^d`, `H = Σ f ln f h^d` (`0 ln 0 = 0`).
pub fn hydro_fields(f: &GridDistribution) -> HydroState {
    let g = &f.grid;
    let cell = g.cell_volume();
    let (mut m, mut e, mut h) = (0.0, 0.0, 0.0);
    for (i, &fi) in f.values.iter().enumerate() {
        if fi == 0.0 {
            continue;
        }
        let v = g.node(i);
        m += fi;
        e += fi * geom::norm2(&v);
        h += fi * fi.ln();
    }
    HydroState { mass: m * cell, energy: e * cell, entropy: h * cell }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MassCore {
    pub c0: f64,
    pub r0: f64,
    /// Linear indices of the nodes with `f ≥ c0` and `|v| ≤ R0`.
    pub nodes: Vec<usize>,
    /// Node count times cell volume.
    pub measure: f64,
    pub mu_target: f64,
    /// Membership flags over the whole grid.
    member: Vec<bool>,
    grid: crate::grid::VelocityGrid,
}

impl MassCore {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Whether `x` falls in the cell of a core node.
    #[inline]
    pub fn contains(&self, x: &Vel) -> bool {
        let g = &self.grid;
        let mut m = [0i64; 3];
        for k in 0..g.d {
            m[k] = g.index_coord(x[k]).round() as i64;
        }
        match g.linear_index(&m) {
            Some(i) => self.member[i],
            None => false,
        }
    }

    /// Radius of a ball containing every core cell.
    pub fn bounding_radius(&self) -> f64 {
        let h = self.grid.h();
        self.nodes
            .iter()
            .map(|&i| geom::norm(&self.grid.node(i)))
            .fold(0.0, f64::max)
            + 0.5 * h * (self.grid.d as f64).sqrt()
    }
}

/// Search `c0 ∈ {2^-k}` (decreasing) and `R0 ∈ {2^j}` (increasing) for the
/// first core whose measure reaches `μ = m0 / (4 (1 + E0/m0 + guard))`.
pub fn mass_core(f: &GridDistribution, bounds: &HydroBounds, guard: f64) -> Result<MassCore> {
    if f.max_value() <= 0.0 {
        return Err(Error::NoCore("distribution vanishes identically".into()));
    }
    let state = hydro_fields(f);
    if !state.satisfies_bounds(bounds) {
        return Err(Error::PreconditionViolated(format!(
            "hydrodynamic bounds fail: M={}, E={}, H={} against {:?}",
            state.mass, state.energy, state.entropy, bounds
        )));
    }
    let mu_target = bounds.m0 / (4.0 * (1.0 + bounds.e0 / bounds.m0 + guard));
    let g = f.grid;
    let cell = g.cell_volume();
    let fmax = f.max_value();
    let radii: Vec<f64> = g.nodes().iter().map(geom::norm).collect();
    let k_start = -(fmax.log2().ceil() as i32);
    let diag = g.r_max * (g.d as f64).sqrt();
    for k in k_start..k_start + 60 {
        let c0 = 2f64.powi(-k);
        let mut j = -4;
        loop {
            let r0 = 2f64.powi(j);
            let count = f
                .values
                .iter()
                .zip(&radii)
                .filter(|(fv, r)| **fv >= c0 && **r <= r0)
                .count();
            if count as f64 * cell >= mu_target {
                let member: Vec<bool> = f.values.iter().zip(&radii).map(|(fv, r)| *fv >= c0 && *r <= r0).collect();
                let nodes = member.iter().enumerate().filter(|x| *x.1).map(|x| x.0).collect();
                return Ok(MassCore { c0, r0, nodes, measure: count as f64 * cell, mu_target, member, grid: g });
            }
            if r0 > diag {
                break;
            }
            j += 1;
        }
    }
    Err(Error::NoCore(format!("no core of measure {mu_target} on the threshold ladder")))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeOptions {
    /// Number of directions (antipodally complete).
    pub n_dir: usize,
    /// Radii `r` at which `|Ξ ∩ B_r|` is reported.
    pub radii: [f64; 2],
    /// Sampling step of hyperplane slices, in grid spacings.
    pub slice_step: f64,
    /// Distances `|v' - v|` at which kernel lower bounds are certified.
    pub certificate_radii: [f64; 3],
}

impl Default for ConeOptions {
    fn default() -> Self {
        ConeOptions { n_dir: 256, radii: [1.0, 2.0], slice_step: 0.25, certificate_radii: [0.5, 1.0, 2.0] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeDirection {
    pub omega: Vel,
    /// Measure of the slice `{u ⊥ ω : v + u ∈ core}`.
    pub slice: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NondegeneracyCone {
    pub v: Vel,
    pub directions: Vec<ConeDirection>,
    /// Acceptance threshold on slice measures.
    pub lambda: f64,
    /// Largest `|v·ω|` over accepted directions.
    pub band: f64,
    /// `(r, |Ξ ∩ B_r|)`
    pub measure_profile: Vec<(f64, f64)>,
    /// Smallest `K_f(v, v + rω) r^{d+2s} / (1+|v|)^{1+2s+γ}` over accepted
    /// directions and certificate radii.
    pub kernel_lower_bound: f64,
}

impl NondegeneracyCone {
    pub fn accepted_fraction(&self) -> f64 {
        let n = self.directions.len().max(1);
        self.directions.iter().filter(|d| d.accepted).count() as f64 / n as f64
    }

    /// `|Ξ ∩ B_r| (1+|v|) / r^d`, the same for every `r` because `Ξ` is a cone.
    pub fn scaling_ratio(&self, d: usize) -> f64 {
        self.accepted_fraction() * geom::ball_volume(d) * (1.0 + geom::norm(&self.v))
    }
}

/// Antipodally complete direction set: equispaced angles in 2D, a Fibonacci
/// lattice on the upper half sphere plus its antipodes in 3D.
pub fn direction_set(d: usize, n: usize) -> Vec<Vel> {
    let half = n.div_ceil(2).max(1);
    let mut out = Vec::with_capacity(2 * half);
    match d {
        2 => {
            for k in 0..half {
                let a = PI * k as f64 / half as f64;
                out.push([a.cos(), a.sin(), 0.0]);
            }
        }
        _ => {
            let golden = PI * (3.0 - 5f64.sqrt());
            for k in 0..half {
                let z = 1.0 - (k as f64 + 0.5) / half as f64; // in (0, 1)
                let r = (1.0 - z * z).sqrt();
                let phi = golden * k as f64;
                out.push([r * phi.cos(), r * phi.sin(), z]);
            }
        }
    }
    let anti: Vec<Vel> = out.iter().map(|w| geom::scale(w, -1.0)).collect();
    out.extend(anti);
    out
}

/// Measure of `{u ⊥ ω : v + u ∈ core}`, sampled on a square lattice of the
/// hyperplane around the projection of the origin.
pub fn core_slice(core: &MassCore, v: &Vel, omega: &Vel, step: f64) -> f64 {
    let d = core.grid.d;
    let rc = core.bounding_radius();
    let off = geom::dot(v, omega);
    if off.abs() >= rc {
        return 0.0;
    }
    let centre = geom::scale(omega, off);
    let reach = (rc * rc - off * off).sqrt();
    let basis = geom::orthonormal_complement(d, omega);
    let m = (reach / step).ceil() as i64;
    let mut count = 0usize;
    match d {
        2 => {
            for i in -m..=m {
                let x = geom::axpy(&centre, (i as f64) * step, &basis[0]);
                if core.contains(&x) {
                    count += 1;
                }
            }
        }
        _ => {
            for i in -m..=m {
                for j in -m..=m {
                    let x = geom::axpy(&geom::axpy(&centre, (i as f64) * step, &basis[0]), (j as f64) * step, &basis[1]);
                    if core.contains(&x) {
                        count += 1;
                    }
                }
            }
        }
    }
    count as f64 * step.powi(d as i32 - 1)
}

/// Build the cone at `v`: directions whose core slice reaches half the median
/// positive slice.
pub fn nondegeneracy_cone(
    f: &GridDistribution,
    core: &MassCore,
    v: &Vel,
    p: &KernelParams,
    opts: &ConeOptions,
) -> Result<NondegeneracyCone> {
    if core.is_empty() {
        return Err(Error::PreconditionViolated("mass core is empty".into()));
    }
    p.require_eval_dim()?;
    let d = p.d;
    let step = opts.slice_step * core.grid.h();
    let dirs = direction_set(d, opts.n_dir);
    let slices: Vec<f64> = dirs.iter().map(|w| core_slice(core, v, w, step)).collect();
    let mut positive: Vec<f64> = slices.iter().copied().filter(|x| *x > 0.0).collect();
    if positive.is_empty() {
        return Err(Error::EmptyCone(format!("no direction meets the core from v = {v:?}")));
    }
    positive.sort_by(|a, b| a.total_cmp(b));
    let median = positive[positive.len() / 2];
    let lambda = 0.5 * median;
    let directions: Vec<ConeDirection> = dirs
        .iter()
        .zip(&slices)
        .map(|(w, s)| ConeDirection { omega: *w, slice: *s, accepted: *s >= lambda })
        .collect();
    let band = directions
        .iter()
        .filter(|c| c.accepted)
        .map(|c| geom::dot(v, &c.omega).abs())
        .fold(0.0, f64::max);
    let frac = directions.iter().filter(|c| c.accepted).count() as f64 / directions.len() as f64;
    let measure_profile = opts
        .radii
        .iter()
        .map(|&r| (r, frac * geom::ball_volume(d) * r.powi(d as i32)))
        .collect();
    let plane = PlaneOptions::default();
    let vn = geom::norm(v);
    let scale = (1.0 + vn).powf(1.0 + 2.0 * p.s + p.gamma);
    let mut lower = f64::INFINITY;
    for c in directions.iter().filter(|c| c.accepted) {
        for &r in &opts.certificate_radii {
            let vp = geom::axpy(v, r, &c.omega);
            let k = kernel::kernel_kf(f, v, &vp, p, &plane)?;
            lower = lower.min(k.value * r.powf(d as f64 + 2.0 * p.s) / scale);
        }
    }
    Ok(NondegeneracyCone { v: *v, directions, lambda, band, measure_profile, kernel_lower_bound: lower })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::VelocityGrid;

    fn maxwellian(n: usize) -> GridDistribution {
        let g = VelocityGrid::new(2, 6.0, n).unwrap();
        GridDistribution::from_fn(g, |v| (-geom::norm2(v) / 2.0).exp() / (2.0 * PI))
    }

    #[test]
    fn zero_distribution_has_no_fields_and_no_core() {
        let g = VelocityGrid::new(2, 4.0, 16).unwrap();
        let f = GridDistribution::from_fn(g, |_| 0.0);
        let s = hydro_fields(&f);
        assert_eq!((s.mass, s.energy, s.entropy), (0.0, 0.0, 0.0));
        let b = HydroBounds { m0: 0.5, mass_max: 2.0, e0: 4.0, h0: 4.0 };
        assert!(matches!(mass_core(&f, &b, 1.0), Err(Error::NoCore(_))));
    }

    #[test]
    fn maxwellian_core_contains_origin() {
        let f = maxwellian(48);
        let b = HydroBounds { m0: 0.5, mass_max: 2.0, e0: 4.0, h0: 4.0 };
        let core = mass_core(&f, &b, 1.0).unwrap();
        assert!(core.measure >= core.mu_target);
        assert!(core.contains(&[0.0, 0.0, 0.0]) || core.contains(&[0.06, 0.06, 0.0]));
    }

    #[test]
    fn directions_are_antipodal() {
        for d in [2, 3] {
            let dirs = direction_set(d, 64);
            let n = dirs.len() / 2;
            for i in 0..n {
                let s = geom::add(&dirs[i], &dirs[i + n]);
                assert!(geom::norm(&s) < 1e-15);
            }
        }
    }

    #[test]
    fn cone_at_origin_is_full() {
        let f = maxwellian(48);
        let b = HydroBounds { m0: 0.5, mass_max: 2.0, e0: 4.0, h0: 4.0 };
        let core = mass_core(&f, &b, 1.0).unwrap();
        let p = KernelParams::new(2, 0.5, 0.3);
        let cone = nondegeneracy_cone(&f, &core, &[0.0, 0.0, 0.0], &p, &ConeOptions::default()).unwrap();
        assert_eq!(cone.accepted_fraction(), 1.0);
    }
}
