//! Explicit time integration of the spatially homogeneous equation
//! `∂_t f = Q(f, f)` on the velocity grid, with the angularly truncated
//! σ-representation of the operator.
//!
//! Relative velocities are restricted to lattice offsets `u = k·h`, so the
//! partner `v_* = v - u` is a grid node and the post-collision velocities
//! `v + a`, `v + b` sit at offsets that do not depend on `v`. Each pair
//! (offset, σ node) is therefore a fixed interpolation stencil, applied to the
//! whole grid with a contiguous inner loop.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{self, Vel};
use crate::grid::{GridDistribution, Interpolation, VelocityGrid};
use crate::kernel::{self, AngularKernel};
use crate::params::KernelParams;
use crate::quadrature;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stepper {
    ExplicitEuler,
    Rk2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub params: KernelParams,
    pub grid: VelocityGrid,
    /// Time step; `None` picks `stability_factor / sup ν` at every step.
    pub dt: Option<f64>,
    pub t_end: f64,
    pub theta_min: f64,
    pub stepper: Stepper,
    pub clip_negative: bool,
    pub stability_factor: f64,
    /// Gauss nodes in `log θ` on `[θ_min, π/2]`.
    pub theta_nodes: usize,
    /// Azimuths of σ around `u` (3D only).
    pub azimuth_nodes: usize,
    /// Largest relative speed kept; `None` keeps every lattice offset.
    pub u_max: Option<f64>,
    /// Interpolation used to evaluate `f` at post-collision velocities.
    pub interpolation: Interpolation,
    /// Remove the mass/momentum/energy defect of the discrete operator.
    pub conservative: bool,
    /// Exponents `q` of the traced moments `sup f(1+|v|)^q` and `∫ f(1+|v|)^q`.
    pub moment_orders: Vec<f64>,
    /// Times at which the state is kept as a snapshot.
    pub snapshot_times: Vec<f64>,
}

impl SolverConfig {
    pub fn new(params: KernelParams, grid: VelocityGrid) -> Self {
        SolverConfig {
            params,
            grid,
            dt: None,
            t_end: 1.0,
            theta_min: 0.2,
            stepper: Stepper::ExplicitEuler,
            clip_negative: true,
            stability_factor: 0.2,
            theta_nodes: 4,
            azimuth_nodes: 6,
            u_max: None,
            interpolation: Interpolation::Multilinear,
            conservative: true,
            moment_orders: vec![params.d as f64 + 1.0],
            snapshot_times: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.d != self.params.d {
            return Err(Error::Config(format!(
                "grid dimension {} does not match kernel dimension {}",
                self.grid.d, self.params.d
            )));
        }
        if !(self.t_end > 0.0) {
            return Err(Error::OutOfRange { field: "t_end", detail: format!("must be positive, got {}", self.t_end) });
        }
        if !(self.theta_min > 0.0 && self.theta_min < FRAC_PI_2) {
            return Err(Error::OutOfRange {
                field: "theta_min",
                detail: format!("the stepping operator needs 0 < theta_min < pi/2, got {}", self.theta_min),
            });
        }
        if !(self.stability_factor > 0.0 && self.stability_factor <= 1.0) {
            return Err(Error::OutOfRange {
                field: "stability_factor",
                detail: format!("must lie in (0, 1], got {}", self.stability_factor),
            });
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(Error::OutOfRange { field: "dt", detail: format!("must be positive, got {dt}") });
            }
        }
        if self.theta_nodes == 0 || (self.grid.d == 3 && self.azimuth_nodes == 0) {
            return Err(Error::Config("angular quadrature needs at least one node".into()));
        }
        Ok(())
    }
}

/// One (offset, σ node) term of the gain.
#[derive(Debug, Clone, Copy)]
struct GainTerm {
    weight: f64,
    a: Corner,
    b: Corner,
    /// Node ranges (per axis, inclusive lo, exclusive hi) for which both
    /// stencils stay within the zero-padded array.
    lo: [i64; 3],
    hi: [i64; 3],
}

/// Interpolation stencil anchored at an integer offset: taps
/// `base + j` for `j < taps` along each axis, with per-axis weights.
#[derive(Debug, Clone, Copy)]
struct Corner {
    /// Integer part of the offset (the tap at `j = taps/2 - 1`).
    base: [i64; 3],
    w: [[f64; 4]; 3],
}

#[derive(Debug, Clone, Copy)]
struct LossTerm {
    offset: [i64; 3],
    weight: f64,
}

/// The discrete collision operator on a fixed grid.
#[derive(Debug, Clone)]
pub struct CollisionStencil {
    grid: VelocityGrid,
    gain: Vec<GainTerm>,
    loss: Vec<LossTerm>,
    /// `Σ_σ w_σ`, the truncated angular mass as seen by the quadrature.
    pub angular_mass: f64,
    pad: i64,
    dims: [usize; 3],
    taps: usize,
}

impl CollisionStencil {
    pub fn new(cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let p = cfg.params;
        let grid = cfg.grid;
        let d = grid.d;
        let n = grid.n_per_axis as i64;
        let h = grid.h();
        AngularKernel::new(p, cfg.theta_min)?;
        let sigma = sigma_nodes(&p, cfg.theta_min, cfg.theta_nodes, cfg.azimuth_nodes);
        let angular_mass: f64 = sigma.iter().map(|s| s.2).sum();
        let u_max = cfg.u_max.unwrap_or(f64::INFINITY);
        let cell = grid.cell_volume();
        let mut gain = Vec::new();
        let mut loss = Vec::new();
        let kz = if d == 3 { n - 1 } else { 0 };
        for k2 in -kz..=kz {
            for k1 in -(n - 1)..n {
                for k0 in -(n - 1)..n {
                    let k = [k0, k1, k2];
                    if k == [0, 0, 0] {
                        continue; // gain and loss coincide at u = 0
                    }
                    let u = [k0 as f64 * h, k1 as f64 * h, k2 as f64 * h];
                    let un = geom::norm(&u);
                    if un > u_max {
                        continue;
                    }
                    let wk = un.powf(p.gamma) * cell;
                    // loss partner v_* = v - u sits at node offset -k
                    loss.push(LossTerm { offset: [-k0, -k1, -k2], weight: wk * angular_mass });
                    let uh = geom::scale(&u, 1.0 / un);
                    let basis = geom::orthonormal_complement(d, &uh);
                    for &(ct, dir, ws) in &sigma {
                        // σ = cosθ û + sinθ e with e from the complement
                        let e = match d {
                            2 => geom::scale(&basis[0], dir[0]),
                            _ => geom::axpy(&geom::scale(&basis[0], dir[0]), dir[1], &basis[1]),
                        };
                        let st = (1.0 - ct * ct).max(0.0).sqrt();
                        let s = geom::axpy(&geom::scale(&uh, ct), st, &e);
                        // v' - v = (|u| σ - u)/2, v'_* - v = -(|u| σ + u)/2
                        let a = geom::scale(&geom::sub(&geom::scale(&s, un), &u), 0.5 / h);
                        let b = geom::scale(&geom::add(&geom::scale(&s, un), &u), -0.5 / h);
                        let ca = corner(&a, d, cfg.interpolation);
                        let cb = corner(&b, d, cfg.interpolation);
                        let mut lo = [0i64; 3];
                        let mut hi = [1i64; 3];
                        let mut empty = false;
                        for ax in 0..d {
                            // need node + base in [-1, n-1] for both stencils
                            let l = (-1 - ca.base[ax]).max(-1 - cb.base[ax]).max(0);
                            let r = (n - 1 - ca.base[ax]).min(n - 1 - cb.base[ax]).min(n - 1);
                            // outside this range every tap of at least one stencil is
                            // outside the grid (multilinear) or carries only boundary taps
                            if r < l {
                                empty = true;
                                break;
                            }
                            lo[ax] = l;
                            hi[ax] = r + 1;
                        }
                        if !empty {
                            gain.push(GainTerm { weight: wk * ws, a: ca, b: cb, lo, hi });
                        }
                    }
                }
            }
        }
        let pad = 3;
        let np = (n + 2 * pad) as usize;
        let dims = [np, np, if d == 3 { np } else { 1 }];
        let taps = match cfg.interpolation {
            Interpolation::Multilinear => 2,
            Interpolation::Tricubic => 4,
        };
        Ok(CollisionStencil { grid, gain, loss, angular_mass, pad, dims, taps })
    }

    pub fn n_gain_terms(&self) -> usize {
        self.gain.len()
    }

    fn padded(&self, f: &[f64]) -> Vec<f64> {
        let n = self.grid.n_per_axis;
        let [sx, sy, sz] = self.dims;
        let mut out = vec![0.0; sx * sy * sz];
        let p = self.pad as usize;
        let zr = if self.grid.d == 3 { n } else { 1 };
        for z in 0..zr {
            let pz = if self.grid.d == 3 { z + p } else { 0 };
            for y in 0..n {
                let src = &f[(z * n + y) * n..(z * n + y) * n + n];
                let off = (pz * sy + y + p) * sx + p;
                out[off..off + n].copy_from_slice(src);
            }
        }
        out
    }

    /// Collision frequency `ν(v) = A·Σ_k |u_k|^γ h^d f(v - u_k)` at every node.
    pub fn collision_frequency(&self, f: &[f64]) -> Vec<f64> {
        let n = self.grid.n_per_axis;
        let fp = self.padded(f);
        let rows = self.rows();
        let mut out = vec![0.0; f.len()];
        out.par_chunks_mut(n).zip(rows.par_iter()).for_each(|(row, &(y, z))| {
            for t in &self.loss {
                self.accumulate_shift(&fp, row, y, z, t.offset, t.weight);
            }
        });
        out
    }

    fn rows(&self) -> Vec<(i64, i64)> {
        let n = self.grid.n_per_axis as i64;
        let zr = if self.grid.d == 3 { n } else { 1 };
        (0..zr).flat_map(|z| (0..n).map(move |y| (y, z))).collect()
    }

    /// `row[x] += w · f(node(x,y,z) + offset)` with zero outside the grid.
    #[inline]
    fn accumulate_shift(&self, fp: &[f64], row: &mut [f64], y: i64, z: i64, off: [i64; 3], w: f64) {
        let n = self.grid.n_per_axis as i64;
        let yy = y + off[1];
        let zz = z + off[2];
        if yy < 0 || yy >= n || (self.grid.d == 3 && (zz < 0 || zz >= n)) {
            return;
        }
        let x0 = (-off[0]).max(0);
        let x1 = (n - off[0]).min(n);
        if x1 <= x0 {
            return;
        }
        let base = self.pidx(x0 + off[0], yy, zz);
        let src = &fp[base..base + (x1 - x0) as usize];
        for (o, s) in row[x0 as usize..x1 as usize].iter_mut().zip(src) {
            *o += w * s;
        }
    }

    #[inline]
    fn pidx(&self, x: i64, y: i64, z: i64) -> usize {
        let p = self.pad;
        let [sx, sy, _] = self.dims;
        let zz = if self.grid.d == 3 { z + p } else { 0 };
        ((zz as usize * sy) + (y + p) as usize) * sx + (x + p) as usize
    }

    /// The discrete operator `Q_h(f, f)` at every node (no conservation fix).
    pub fn apply_raw(&self, f: &[f64]) -> Vec<f64> {
        let n = self.grid.n_per_axis;
        let d = self.grid.d;
        let fp = self.padded(f);
        let nu = self.collision_frequency(f);
        let rows = self.rows();
        let sx = self.dims[0];
        let sxy = sx * self.dims[1];
        // Blocks of rows are independent; within a block terms run in the
        // outer loop so each term is read once per block. The summation order
        // at every node is the term order, whatever the block size.
        let n_rows = rows.len();
        let threads = rayon::current_num_threads().max(1);
        let block = n_rows.div_ceil(4 * threads).max(1);
        let first = 1 - (self.taps as i64) / 2; // leftmost tap relative to base
        let mut out = vec![0.0; f.len()];
        out.par_chunks_mut(n * block).zip(rows.par_chunks(block)).for_each(|(chunk, rws)| {
            let mut sa = vec![0.0; n];
            let mut sb = vec![0.0; n];
            for t in &self.gain {
                for (r, &(y, z)) in rws.iter().enumerate() {
                    if y < t.lo[1] || y >= t.hi[1] || (d == 3 && (z < t.lo[2] || z >= t.hi[2])) {
                        continue;
                    }
                    let (x0, x1) = (t.lo[0] as usize, t.hi[0] as usize);
                    let za = if d == 3 { z + t.a.base[2] + first } else { 0 };
                    let zb = if d == 3 { z + t.b.base[2] + first } else { 0 };
                    let ia = self.pidx(x0 as i64 + t.a.base[0] + first, y + t.a.base[1] + first, za);
                    let ib = self.pidx(x0 as i64 + t.b.base[0] + first, y + t.b.base[1] + first, zb);
                    let seg = &mut chunk[r * n + x0..r * n + x1];
                    match (d, self.taps) {
                        (2, 2) => gain_row_bilinear(seg, &fp, ia, ib, sx, &t.a.w, &t.b.w, t.weight),
                        (2, _) => gain_row_bicubic(seg, &fp, ia, ib, sx, &t.a.w, &t.b.w, t.weight),
                        (_, 2) => gain_row::<8>(seg, &fp, taps3(ia, &t.a.w, sx, sxy), taps3(ib, &t.b.w, sx, sxy), t.weight, &mut sa, &mut sb),
                        _ => gain_row::<64>(seg, &fp, taps3(ia, &t.a.w, sx, sxy), taps3(ib, &t.b.w, sx, sxy), t.weight, &mut sa, &mut sb),
                    }
                }
            }
        });
        for (o, (fi, ni)) in out.iter_mut().zip(f.iter().zip(&nu)) {
            *o -= fi * ni;
        }
        out
    }

    /// The operator used for stepping: raw operator, then the conservative
    /// correction if requested.
    pub fn apply(&self, f: &[f64], conservative: bool) -> Vec<f64> {
        let mut q = self.apply_raw(f);
        if conservative {
            project_conservative(&self.grid, f, &mut q);
        }
        q
    }
}

fn corner(a: &Vel, d: usize, interp: Interpolation) -> Corner {
    let mut base = [0i64; 3];
    let mut w = [[0.0; 4]; 3];
    for k in 0..d {
        let fl = a[k].floor();
        base[k] = fl as i64;
        let t = a[k] - fl;
        w[k] = match interp {
            Interpolation::Multilinear => [1.0 - t, t, 0.0, 0.0],
            Interpolation::Tricubic => catmull_rom(t),
        };
    }
    Corner { base, w }
}

fn catmull_rom(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn gain_row_bilinear(out: &mut [f64], fp: &[f64], ia: usize, ib: usize, sx: usize, wa: &[[f64; 4]; 3], wb: &[[f64; 4]; 3], w: f64) {
    let len = out.len();
    let (a00, a10, a01, a11) = (wa[0][0] * wa[1][0], wa[0][1] * wa[1][0], wa[0][0] * wa[1][1], wa[0][1] * wa[1][1]);
    let (b00, b10, b01, b11) = (wb[0][0] * wb[1][0], wb[0][1] * wb[1][0], wb[0][0] * wb[1][1], wb[0][1] * wb[1][1]);
    let pa0 = &fp[ia..ia + len + 1];
    let pa1 = &fp[ia + sx..ia + sx + len + 1];
    let pb0 = &fp[ib..ib + len + 1];
    let pb1 = &fp[ib + sx..ib + sx + len + 1];
    for x in 0..len {
        let va = a00 * pa0[x] + a10 * pa0[x + 1] + a01 * pa1[x] + a11 * pa1[x + 1];
        let vb = b00 * pb0[x] + b10 * pb0[x + 1] + b01 * pb1[x] + b11 * pb1[x + 1];
        out[x] += w * va * vb;
    }
}

#[inline]
fn bicubic_at(rows: &[&[f64]; 4], wx: &[f64; 4], wy: &[f64; 4], x: usize) -> f64 {
    let mut v = 0.0;
    for r in 0..4 {
        let row = rows[r];
        v += wy[r] * (wx[0] * row[x] + wx[1] * row[x + 1] + wx[2] * row[x + 2] + wx[3] * row[x + 3]);
    }
    v
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn gain_row_bicubic(out: &mut [f64], fp: &[f64], ia: usize, ib: usize, sx: usize, wa: &[[f64; 4]; 3], wb: &[[f64; 4]; 3], w: f64) {
    let len = out.len();
    let ra: [&[f64]; 4] = std::array::from_fn(|r| &fp[ia + r * sx..ia + r * sx + len + 3]);
    let rb: [&[f64]; 4] = std::array::from_fn(|r| &fp[ib + r * sx..ib + r * sx + len + 3]);
    for (x, o) in out.iter_mut().enumerate() {
        let va = bicubic_at(&ra, &wa[0], &wa[1], x);
        let vb = bicubic_at(&rb, &wb[0], &wb[1], x);
        *o += w * va * vb;
    }
}

#[inline]
fn taps3<const N: usize>(start: usize, w: &[[f64; 4]; 3], sx: usize, sxy: usize) -> [(usize, f64); N] {
    let m = if N == 8 { 2 } else { 4 };
    let mut out = [(0usize, 0.0f64); N];
    for p in 0..m {
        for r in 0..m {
            for c in 0..m {
                out[(p * m + r) * m + c] = (start + p * sxy + r * sx + c, w[2][p] * w[1][r] * w[0][c]);
            }
        }
    }
    out
}

/// `out[x] += w · f_a(x) · f_b(x)` where each factor is a fixed stencil
/// applied at consecutive nodes of a row. `sa`, `sb` are scratch rows.
#[inline]
fn gain_row<const N: usize>(
    out: &mut [f64],
    fp: &[f64],
    ta: [(usize, f64); N],
    tb: [(usize, f64); N],
    w: f64,
    sa: &mut [f64],
    sb: &mut [f64],
) {
    let len = out.len();
    let (sa, sb) = (&mut sa[..len], &mut sb[..len]);
    sa.fill(0.0);
    sb.fill(0.0);
    for &(o, c) in ta.iter() {
        for (a, s) in sa.iter_mut().zip(&fp[o..o + len]) {
            *a += c * s;
        }
    }
    for &(o, c) in tb.iter() {
        for (b, s) in sb.iter_mut().zip(&fp[o..o + len]) {
            *b += c * s;
        }
    }
    for ((o, a), b) in out.iter_mut().zip(sa.iter()).zip(sb.iter()) {
        *o += w * a * b;
    }
}

/// σ nodes relative to `û`: (cos θ, in-complement direction, weight).
/// In 2D both sides `±θ` are listed; in 3D the azimuth is sampled uniformly.
fn sigma_nodes(p: &KernelParams, theta_min: f64, n_theta: usize, n_azimuth: usize) -> Vec<(f64, [f64; 2], f64)> {
    let rule = quadrature::composite(&[theta_min.ln(), FRAC_PI_2.ln()], n_theta);
    let mut out = Vec::new();
    for (x, w) in rule.iter() {
        let th = x.exp();
        let base = w * th * kernel::b_of_theta(th, p);
        match p.d {
            2 => {
                out.push((th.cos(), [1.0, 0.0], base));
                out.push((th.cos(), [-1.0, 0.0], base));
            }
            _ => {
                let wphi = 2.0 * std::f64::consts::PI / n_azimuth as f64;
                for j in 0..n_azimuth {
                    let phi = (j as f64 + 0.5) * wphi;
                    out.push((th.cos(), [phi.cos(), phi.sin()], base * th.sin() * wphi));
                }
            }
        }
    }
    out
}

/// Collision invariants `1, v_1..v_d, |v|^2` at a node.
fn invariants(v: &Vel, d: usize) -> Vec<f64> {
    let mut phi = Vec::with_capacity(d + 2);
    phi.push(1.0);
    phi.extend_from_slice(&v[..d]);
    phi.push(geom::norm2(v));
    phi
}

/// Grid moments `Σ q φ h^d` of the collision invariants.
pub fn invariant_moments(grid: &VelocityGrid, q: &[f64]) -> Vec<f64> {
    let d = grid.d;
    let mut m = vec![0.0; d + 2];
    for (i, qi) in q.iter().enumerate() {
        let phi = invariants(&grid.node(i), d);
        for (a, p) in phi.iter().enumerate() {
            m[a] += qi * p;
        }
    }
    let cell = grid.cell_volume();
    m.iter().map(|x| x * cell).collect()
}

/// Subtract `f·(λ·φ)` from `q` so that `Σ q φ h^d = 0` for all invariants.
pub fn project_conservative(grid: &VelocityGrid, f: &[f64], q: &mut [f64]) {
    let d = grid.d;
    let m = d + 2;
    let nodes = grid.nodes();
    let mut gram = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    for ((v, fi), qi) in nodes.iter().zip(f).zip(q.iter()) {
        let phi = invariants(v, d);
        for a in 0..m {
            rhs[a] += qi * phi[a];
            for b in 0..m {
                gram[(a, b)] += fi * phi[a] * phi[b];
            }
        }
    }
    let Some(lambda) = gram.lu().solve(&rhs) else { return };
    for ((v, fi), qi) in nodes.iter().zip(f).zip(q.iter_mut()) {
        let phi = invariants(v, d);
        let c: f64 = phi.iter().zip(lambda.iter()).map(|(a, b)| a * b).sum();
        *qi -= fi * c;
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MomentTrace {
    pub times: Vec<f64>,
    pub orders: Vec<f64>,
    /// `sup_v f(1+|v|)^q`, one row per time, one column per order.
    pub sup_weighted: Vec<Vec<f64>>,
    /// `∫ f (1+|v|)^q`
    pub l1_moments: Vec<Vec<f64>>,
    pub mass: Vec<f64>,
    pub energy: Vec<f64>,
    pub entropy: Vec<f64>,
}

impl MomentTrace {
    fn record(&mut self, t: f64, f: &[f64], grid: &VelocityGrid) {
        let nodes = grid.nodes();
        let cell = grid.cell_volume();
        let mut sup = vec![0.0f64; self.orders.len()];
        let mut l1 = vec![0.0; self.orders.len()];
        let (mut m, mut e, mut h) = (0.0, 0.0, 0.0);
        for (v, &fi) in nodes.iter().zip(f) {
            let r = geom::norm(v);
            for (j, q) in self.orders.iter().enumerate() {
                let w = fi * (1.0 + r).powf(*q);
                sup[j] = sup[j].max(w);
                l1[j] += w * cell;
            }
            m += fi * cell;
            e += fi * r * r * cell;
            if fi > 0.0 {
                h += fi * fi.ln() * cell;
            }
        }
        self.times.push(t);
        self.sup_weighted.push(sup);
        self.l1_moments.push(l1);
        self.mass.push(m);
        self.energy.push(e);
        self.entropy.push(h);
    }

    /// Steps at which the entropy grew by more than `tol`.
    pub fn entropy_violations(&self, tol: f64) -> Vec<usize> {
        self.entropy
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1] > w[0] + tol)
            .map(|(i, _)| i + 1)
            .collect()
    }

    /// Index of the recorded time closest to `t`.
    pub fn index_near(&self, t: f64) -> Option<usize> {
        self.times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|x| x.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub f: GridDistribution,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub trace: MomentTrace,
    pub snapshots: Vec<Snapshot>,
    /// Total mass removed by clipping negative values.
    pub clipped_mass: f64,
    pub steps: usize,
}

impl Simulation {
    /// Trajectories whose clipping removed more than `10^-3 M(0)` are not
    /// used for verification.
    pub fn usable_for_verification(&self) -> bool {
        self.clipped_mass <= 1e-3 * self.trace.mass.first().copied().unwrap_or(0.0)
    }
}

/// Result of one step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub values: Vec<f64>,
    pub clipped_mass: f64,
}

/// Advance `f` by `dt` with the configured stepper.
pub fn step(stencil: &CollisionStencil, f: &[f64], dt: f64, cfg: &SolverConfig, step_index: usize) -> Result<StepOutcome> {
    if let Some((i, v)) = f.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::PreconditionViolated(format!("f must be nonnegative, node {i} holds {v}")));
    }
    let q1 = stencil.apply(f, cfg.conservative);
    let mut next: Vec<f64> = f.iter().zip(&q1).map(|(a, b)| a + dt * b).collect();
    if cfg.stepper == Stepper::Rk2 {
        let mid: Vec<f64> = next.iter().map(|x| x.max(0.0)).collect();
        let q2 = stencil.apply(&mid, cfg.conservative);
        next = f
            .iter()
            .zip(q1.iter().zip(&q2))
            .map(|(a, (b, c))| a + 0.5 * dt * (b + c))
            .collect();
    }
    if let Some((i, v)) = next.iter().enumerate().find(|(_, v)| !v.is_finite() || v.abs() > 1e12) {
        return Err(Error::BlowUp { step: step_index, detail: format!("node {i} holds {v}") });
    }
    let mut clipped = 0.0;
    if cfg.clip_negative {
        for x in next.iter_mut() {
            if *x < 0.0 {
                clipped -= *x;
                *x = 0.0;
            }
        }
    }
    Ok(StepOutcome { values: next, clipped_mass: clipped * cfg.grid.cell_volume() })
}

/// Largest stable step for the current state.
pub fn stable_dt(stencil: &CollisionStencil, f: &[f64], factor: f64) -> f64 {
    let nu = stencil.collision_frequency(f).into_iter().fold(0.0, f64::max);
    if nu > 0.0 {
        factor / nu
    } else {
        f64::INFINITY
    }
}

/// Run from `f0` to `t_end`, landing exactly on every snapshot time.
pub fn simulate(cfg: &SolverConfig, f0: &GridDistribution) -> Result<Simulation> {
    cfg.validate()?;
    if f0.grid != cfg.grid {
        return Err(Error::Config("initial datum lives on a different grid".into()));
    }
    let stencil = CollisionStencil::new(cfg)?;
    let mut targets: Vec<f64> = cfg.snapshot_times.iter().copied().filter(|t| *t <= cfg.t_end).collect();
    targets.sort_by(|a, b| a.total_cmp(b));
    targets.dedup();
    let mut trace = MomentTrace { orders: cfg.moment_orders.clone(), ..Default::default() };
    let mut f = f0.values.clone();
    let mut t = 0.0;
    let mut snapshots = Vec::new();
    let mut clipped_mass = 0.0;
    let mut steps = 0;
    trace.record(t, &f, &cfg.grid);
    let mut next_target = 0;
    while next_target < targets.len() && targets[next_target] <= 0.0 {
        snapshots.push(Snapshot { t, f: f0.clone() });
        next_target += 1;
    }
    while t < cfg.t_end * (1.0 - 1e-12) {
        let mut dt = match cfg.dt {
            Some(dt) => dt,
            None => stable_dt(&stencil, &f, cfg.stability_factor),
        };
        dt = dt.min(cfg.t_end - t);
        let mut hit = false;
        if next_target < targets.len() && t + dt >= targets[next_target] * (1.0 - 1e-12) {
            dt = targets[next_target] - t;
            hit = true;
        }
        let out = step(&stencil, &f, dt, cfg, steps)?;
        f = out.values;
        clipped_mass += out.clipped_mass;
        t = if hit { targets[next_target] } else { t + dt };
        steps += 1;
        trace.record(t, &f, &cfg.grid);
        while next_target < targets.len() && targets[next_target] <= t * (1.0 + 1e-12) {
            snapshots.push(Snapshot { t, f: GridDistribution { values: f.clone(), ..f0.clone() } });
            next_target += 1;
        }
    }
    Ok(Simulation { trace, snapshots, clipped_mass, steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn maxwellian(grid: VelocityGrid) -> GridDistribution {
        let d = grid.d as i32;
        GridDistribution::from_fn(grid, |v| (-geom::norm2(v) / 2.0).exp() / (2.0 * std::f64::consts::PI).powf(d as f64 / 2.0))
    }

    #[test]
    fn zero_stays_zero() {
        let grid = VelocityGrid::new(2, 4.0, 16).unwrap();
        let cfg = SolverConfig::new(KernelParams::new(2, 0.5, 0.3), grid);
        let st = CollisionStencil::new(&cfg).unwrap();
        let q = st.apply(&vec![0.0; grid.len()], true);
        assert!(q.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn projection_removes_invariant_moments() {
        let grid = VelocityGrid::new(2, 5.0, 24).unwrap();
        let cfg = SolverConfig::new(KernelParams::new(2, 0.5, 0.3), grid);
        let st = CollisionStencil::new(&cfg).unwrap();
        let f = GridDistribution::from_fn(grid, |v| (-geom::norm2(&geom::sub(v, &[0.5, 0.0, 0.0])) ).exp());
        let q = st.apply(&f.values, true);
        for m in invariant_moments(&grid, &q) {
            assert!(m.abs() < 1e-12, "{m}");
        }
    }

    #[test]
    fn maxwellian_is_nearly_stationary() {
        let grid = VelocityGrid::new(2, 6.0, 32).unwrap();
        let cfg = SolverConfig::new(KernelParams::new(2, 0.5, 0.3), grid);
        let st = CollisionStencil::new(&cfg).unwrap();
        let m = maxwellian(grid);
        let q = st.apply(&m.values, true);
        let nu = st.collision_frequency(&m.values);
        let scale = m.values.iter().zip(&nu).map(|(a, b)| a * b).fold(0.0, f64::max);
        let worst = q.iter().map(|x| x.abs()).fold(0.0, f64::max);
        assert!(worst < 0.05 * scale, "{worst} vs loss scale {scale}");
    }

    #[test]
    fn three_dimensional_stencil_runs() {
        let grid = VelocityGrid::new(3, 4.0, 10).unwrap();
        let mut cfg = SolverConfig::new(KernelParams::new(3, 0.5, 0.3), grid);
        cfg.azimuth_nodes = 3;
        cfg.theta_nodes = 2;
        let st = CollisionStencil::new(&cfg).unwrap();
        let m = maxwellian(grid);
        let q = st.apply(&m.values, true);
        assert!(q.iter().all(|x| x.is_finite()));
    }
}
