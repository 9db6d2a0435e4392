//! Shipped sample distributions and the constructions the verification suite
//! builds on top of them (contact configurations, plateaus, the crossing
//! family for the bad terms).

use std::f64::consts::PI;

use crate::barrier::FrozenBarrier;
use crate::error::{Error, Result};
use crate::geom::{self, Vel};
use crate::grid::{GridDistribution, VelocityGrid};
use crate::hydro::{hydro_fields, HydroBounds, HydroState};

/// Analytic sample distributions; each is sampled onto a grid on demand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fixture {
    /// `mass · (2πT)^{-d/2} · exp(-|v - drift|² / 2T)`
    Maxwellian { mass: f64, temperature: f64, drift: Vel },
    /// Unit Maxwellian plus `0.3 · exp(-|v - (1, -0.5, 0)|² / 0.5)`.
    BumpPerturbed,
    /// Two drifting Maxwellians of different temperatures, well inside any
    /// reasonable hydrodynamic bounds.
    Mixture,
    /// Identically zero: no mass core exists.
    Vacuum,
    /// Unit-mass compactly supported `(1 - |v|²/a²)³`.
    NarrowCore { radius: f64 },
    /// `amplitude · (1 + |v|/scale)^{-exponent}`
    HeavyTail { amplitude: f64, scale: f64, exponent: f64 },
}

pub const FIXTURE_NAMES: [&str; 6] = ["maxwellian", "bump", "mixture", "vacuum", "narrow", "heavy_tail"];

impl Fixture {
    pub fn unit_maxwellian() -> Self {
        Fixture::Maxwellian { mass: 1.0, temperature: 1.0, drift: geom::ZERO }
    }

    /// Tail fixture of the pointwise-moment appearance run.
    pub fn heavy_tail() -> Self {
        Fixture::HeavyTail { amplitude: 16.0, scale: 0.3, exponent: 4.5 }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "maxwellian" => Fixture::unit_maxwellian(),
            "bump" => Fixture::BumpPerturbed,
            "mixture" => Fixture::Mixture,
            "vacuum" => Fixture::Vacuum,
            "narrow" => Fixture::NarrowCore { radius: 0.18 },
            "heavy_tail" => Fixture::heavy_tail(),
            other => {
                return Err(Error::Config(format!(
                    "unknown fixture `{other}` (expected one of {})",
                    FIXTURE_NAMES.join(", ")
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Fixture::Maxwellian { .. } => "maxwellian",
            Fixture::BumpPerturbed => "bump",
            Fixture::Mixture => "mixture",
            Fixture::Vacuum => "vacuum",
            Fixture::NarrowCore { .. } => "narrow",
            Fixture::HeavyTail { .. } => "heavy_tail",
        }
    }

    pub fn density(&self, d: usize, v: &Vel) -> f64 {
        match *self {
            Fixture::Maxwellian { mass, temperature, drift } => maxwellian(d, mass, temperature, &drift, v),
            Fixture::BumpPerturbed => {
                maxwellian(d, 1.0, 1.0, &geom::ZERO, v)
                    + 0.3 * (-geom::norm2(&geom::sub(v, &[1.0, -0.5, 0.0])) / 0.5).exp()
            }
            Fixture::Mixture => {
                maxwellian(d, 0.6, 0.8, &[-1.0, 0.0, 0.0], v) + maxwellian(d, 0.4, 1.5, &[1.5, 0.5, 0.0], v)
            }
            Fixture::Vacuum => 0.0,
            Fixture::NarrowCore { radius } => {
                let r2 = geom::norm2(v) / (radius * radius);
                if r2 < 1.0 {
                    (1.0 - r2).powi(3) / narrow_mass(d, radius)
                } else {
                    0.0
                }
            }
            Fixture::HeavyTail { amplitude, scale, exponent } => amplitude * (1.0 + geom::norm(v) / scale).powf(-exponent),
        }
    }

    /// Grid on which the fixture is resolved by default.
    pub fn default_grid(&self, d: usize) -> Result<VelocityGrid> {
        let (r, n2, n3) = match *self {
            Fixture::NarrowCore { radius } => (1.1 * radius, 32, 16),
            Fixture::HeavyTail { .. } => (5.0, 64, 24),
            _ => (8.0, 64, 24),
        };
        VelocityGrid::new(d, r, if d == 2 { n2 } else { n3 })
    }

    pub fn sample(&self, grid: VelocityGrid) -> GridDistribution {
        let d = grid.d;
        GridDistribution::from_fn(grid, |v| self.density(d, v))
    }

    pub fn sample_default(&self, d: usize) -> Result<GridDistribution> {
        Ok(self.sample(self.default_grid(d)?))
    }
}

fn maxwellian(d: usize, mass: f64, t: f64, drift: &Vel, v: &Vel) -> f64 {
    mass * (2.0 * PI * t).powf(-(d as f64) / 2.0) * (-geom::norm2(&geom::sub(v, drift)) / (2.0 * t)).exp()
}

/// `∫ (1 - |v|²/a²)³ dv` over the ball of radius `a`.
fn narrow_mass(d: usize, a: f64) -> f64 {
    // ∫_0^1 (1-x²)³ x^{d-1} dx · |S^{d-1}| · a^d
    let radial = match d {
        2 => 1.0 / 8.0,
        3 => 16.0 / 315.0,
        _ => {
            let rule = crate::quadrature::gauss_legendre(16);
            rule.iter()
                .map(|(x, w)| {
                    let t = 0.5 * (x + 1.0);
                    0.5 * w * (1.0 - t * t).powi(3) * t.powi(d as i32 - 1)
                })
                .sum()
        }
    };
    radial * geom::sphere_measure(d - 1) * a.powi(d as i32)
}

impl HydroBounds {
    /// Bounds that a state satisfies with a multiplicative margin `slack > 1`.
    pub fn around(state: &HydroState, slack: f64) -> Self {
        HydroBounds {
            m0: state.mass / slack,
            mass_max: state.mass * slack,
            e0: state.energy * slack,
            h0: state.entropy.abs() * slack + 1.0,
        }
    }
}

/// Bounds of a distribution with margin 2.
pub fn own_bounds(f: &GridDistribution) -> HydroBounds {
    HydroBounds::around(&hydro_fields(f), 2.0)
}

/// Smooth step from 0 (below `a`) to 1 (above `a + w`).
fn smooth_step(x: f64, a: f64, w: f64) -> f64 {
    let t = ((x - a) / w).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Contact configuration `f = min(F, g)` with `F = M + 2·g·step(|v|)`: a unit
/// Maxwellian near the origin and exactly the barrier beyond `r_contact + 1`.
/// The tail is cut at the grid edge, so `f ≤ g` everywhere.
pub fn contact_fixture(grid: VelocityGrid, barrier: &FrozenBarrier, r_contact: f64) -> GridDistribution {
    let d = grid.d;
    GridDistribution::from_fn(grid, |v| {
        let r = geom::norm(v);
        let g = barrier.at_speed(r);
        let big = maxwellian(d, 1.0, 1.0, &geom::ZERO, v) + 2.0 * g * smooth_step(r, r_contact, 1.0);
        big.min(g)
    })
}

/// Plateau configuration `f = min(m, λ M_T)` with `λ` tuned so the grid mass
/// is `mass`; the set `{f = m}` is where a constant barrier `m` touches.
pub fn plateau_fixture(grid: VelocityGrid, m: f64, temperature: f64, mass: f64) -> Result<GridDistribution> {
    let d = grid.d;
    let build = |lambda: f64| {
        GridDistribution::from_fn(grid, |v| (lambda * maxwellian(d, 1.0, temperature, &geom::ZERO, v)).min(m))
    };
    let grid_mass = |lambda: f64| hydro_fields(&build(lambda)).mass;
    let (mut lo, mut hi) = (0.0, 1.0);
    while grid_mass(hi) < mass {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Domain(format!("plateau at {m} cannot carry mass {mass}")));
        }
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if grid_mass(mid) < mass {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let f = build(hi);
    if f.max_value() < m {
        return Err(Error::Domain(format!("no plateau: peak {} below {m}", f.max_value())));
    }
    Ok(f)
}

/// Member of the crossing family at the sample velocity `v`: a bump of width
/// `width` and mass `|v|^{-2}` centred at `v + |v|·v̂^⊥`, the point from which
/// the collision line through `v` passes through the origin. The energy of
/// the bump stays bounded along the family.
pub fn crossing_bump(d: usize, v: &Vel, width: f64, h: f64) -> Result<GridDistribution> {
    let vn = geom::norm(v);
    if !(vn > 0.0) {
        return Err(Error::Domain("crossing bump needs v != 0".into()));
    }
    let vh = geom::scale(v, 1.0 / vn);
    let perp = geom::orthonormal_complement(d, &vh)[0];
    let centre = geom::axpy(v, vn, &perp);
    let r_max = geom::norm(&centre) + width + 2.0 * h;
    let n = ((2.0 * r_max / h).ceil() as usize).max(8);
    let grid = VelocityGrid::new(d, r_max, n)?;
    let amp = 1.0 / (narrow_mass(d, width) * vn * vn);
    Ok(GridDistribution::from_fn(grid, |x| {
        let r2 = geom::norm2(&geom::sub(x, &centre)) / (width * width);
        if r2 < 1.0 {
            amp * (1.0 - r2).powi(3)
        } else {
            0.0
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn narrow_core_has_unit_mass() {
        for d in [2, 3] {
            let f = Fixture::NarrowCore { radius: 0.5 };
            let g = VelocityGrid::new(d, 0.6, if d == 2 { 96 } else { 40 }).unwrap();
            let m = hydro_fields(&f.sample(g)).mass;
            assert!((m - 1.0).abs() < 1e-2, "d={d} mass {m}");
        }
    }

    #[test]
    fn names_round_trip() {
        for name in FIXTURE_NAMES {
            assert_eq!(Fixture::from_name(name).unwrap().name(), name);
        }
        assert!(Fixture::from_name("nope").is_err());
    }

    #[test]
    fn contact_fixture_touches_barrier_outside_core() {
        let grid = VelocityGrid::new(2, 16.0, 64).unwrap();
        let b = FrozenBarrier::plain(1.0, 2.0);
        let f = contact_fixture(grid, &b, 4.0);
        for (i, &fi) in f.values.iter().enumerate() {
            let r = geom::norm(&grid.node(i));
            let g = b.at_speed(r);
            assert!(fi <= g);
            if r > 5.5 {
                assert_eq!(fi, g);
            }
        }
    }

    #[test]
    fn plateau_has_requested_mass_and_level() {
        let grid = VelocityGrid::new(2, 0.6, 48).unwrap();
        let f = plateau_fixture(grid, 4.0, 0.01, 1.0).unwrap();
        assert!((hydro_fields(&f).mass - 1.0).abs() < 1e-9);
        assert_eq!(f.max_value(), 4.0);
    }
}
