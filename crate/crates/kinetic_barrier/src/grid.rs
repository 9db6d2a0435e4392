//! Uniform cell-centred velocity grid and sampled distributions with
//! continuous off-grid evaluation.

use crate::error::{Error, Result};
use crate::geom::{self, Vel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityGrid {
    pub d: usize,
    pub r_max: f64,
    pub n_per_axis: usize,
}

impl VelocityGrid {
    pub fn new(d: usize, r_max: f64, n_per_axis: usize) -> Result<Self> {
        if !(d == 2 || d == 3) {
            return Err(Error::OutOfRange {
                field: "d",
                detail: format!("grids exist for d in {{2,3}}, got {d}"),
            });
        }
        if n_per_axis < 8 {
            return Err(Error::OutOfRange {
                field: "n_per_axis",
                detail: format!("need at least 8 points per axis, got {n_per_axis}"),
            });
        }
        if !(r_max > 0.0) || !r_max.is_finite() {
            return Err(Error::OutOfRange {
                field: "r_max",
                detail: format!("truncation radius must be positive, got {r_max}"),
            });
        }
        Ok(VelocityGrid { d, r_max, n_per_axis })
    }

    #[inline]
    pub fn h(&self) -> f64 {
        2.0 * self.r_max / self.n_per_axis as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.d as i32)
    }

    pub fn len(&self) -> usize {
        self.n_per_axis.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of node `i` along one axis.
    #[inline]
    pub fn coord(&self, i: i64) -> f64 {
        -self.r_max + (i as f64 + 0.5) * self.h()
    }

    /// Axis indices of a linear node index (first axis fastest).
    pub fn multi_index(&self, idx: usize) -> [i64; 3] {
        let n = self.n_per_axis;
        let mut m = [0i64; 3];
        let mut r = idx;
        for k in m.iter_mut().take(self.d) {
            *k = (r % n) as i64;
            r /= n;
        }
        m
    }

    pub fn linear_index(&self, m: &[i64; 3]) -> Option<usize> {
        let n = self.n_per_axis as i64;
        let mut idx = 0usize;
        let mut stride = 1usize;
        for &k in m.iter().take(self.d) {
            if k < 0 || k >= n {
                return None;
            }
            idx += k as usize * stride;
            stride *= n as usize;
        }
        Some(idx)
    }

    pub fn node(&self, idx: usize) -> Vel {
        let m = self.multi_index(idx);
        let mut v = geom::ZERO;
        for k in 0..self.d {
            v[k] = self.coord(m[k]);
        }
        v
    }

    pub fn nodes(&self) -> Vec<Vel> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// Continuous index coordinate: node `i` sits at `i`.
    #[inline]
    pub fn index_coord(&self, x: f64) -> f64 {
        (x + self.r_max) / self.h() - 0.5
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    Multilinear,
    /// Catmull-Rom cubic convolution along each axis, clamped at zero.
    Tricubic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailModel {
    Zero,
    /// `amplitude · |v|^{-q_tail}` at lattice nodes outside the grid.
    PowerLaw { q_tail: f64, amplitude: f64 },
}

impl TailModel {
    #[inline]
    pub fn at(&self, v: &Vel) -> f64 {
        match *self {
            TailModel::Zero => 0.0,
            TailModel::PowerLaw { q_tail, amplitude } => {
                amplitude * geom::norm2(v).powf(-0.5 * q_tail)
            }
        }
    }
}

/// A nonnegative sampled distribution on a [`VelocityGrid`].
///
/// Off-grid values come from interpolating an infinite lattice whose nodes
/// inside the grid carry the stored samples and whose nodes outside carry the
/// tail model, so evaluation is continuous everywhere and compactly supported
/// under the zero tail.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDistribution {
    pub grid: VelocityGrid,
    pub values: Vec<f64>,
    pub interpolation: Interpolation,
    pub tail: TailModel,
}

impl GridDistribution {
    pub fn new(
        grid: VelocityGrid,
        values: Vec<f64>,
        interpolation: Interpolation,
        tail: TailModel,
    ) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Config(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::OutOfRange {
                field: "values",
                detail: format!("sample {i} is {v}, distributions must be nonnegative"),
            });
        }
        Ok(GridDistribution { grid, values, interpolation, tail })
    }

    /// Sample a function at the nodes (negative samples are clipped to zero).
    pub fn from_fn<F: Fn(&Vel) -> f64>(grid: VelocityGrid, f: F) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.node(i)).max(0.0)).collect();
        GridDistribution {
            grid,
            values,
            interpolation: Interpolation::Multilinear,
            tail: TailModel::Zero,
        }
    }

    pub fn with_interpolation(mut self, interpolation: Interpolation) -> Self {
        self.interpolation = interpolation;
        self
    }

    pub fn with_tail(mut self, tail: TailModel) -> Self {
        self.tail = tail;
        self
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Radius beyond which the distribution vanishes, if compactly supported.
    pub fn support_radius(&self) -> Option<f64> {
        match self.tail {
            TailModel::Zero => {
                let h = self.grid.h();
                let extra = match self.interpolation {
                    Interpolation::Multilinear => 0.5 * h,
                    Interpolation::Tricubic => 1.5 * h,
                };
                Some((self.grid.r_max + extra) * (self.grid.d as f64).sqrt())
            }
            TailModel::PowerLaw { .. } => None,
        }
    }

    #[inline]
    fn lattice(&self, m: [i64; 3]) -> f64 {
        let n = self.grid.n_per_axis as i64;
        let d = self.grid.d;
        let inside = m.iter().take(d).all(|&k| k >= 0 && k < n);
        if inside {
            let mut idx = m[0] as usize + n as usize * m[1] as usize;
            if d == 3 {
                idx += (n * n) as usize * m[2] as usize;
            }
            self.values[idx]
        } else {
            match self.tail {
                TailModel::Zero => 0.0,
                _ => {
                    let mut v = geom::ZERO;
                    for k in 0..d {
                        v[k] = self.grid.coord(m[k]);
                    }
                    self.tail.at(&v)
                }
            }
        }
    }

    /// Value of the interpolant at an arbitrary velocity.
    #[inline]
    pub fn eval(&self, v: &Vel) -> f64 {
        let g = &self.grid;
        let d = g.d;
        let n = g.n_per_axis as f64;
        let mut xi = [0.0f64; 3];
        for k in 0..d {
            xi[k] = g.index_coord(v[k]);
        }
        let reach = match self.interpolation {
            Interpolation::Multilinear => 1.0,
            Interpolation::Tricubic => 2.0,
        };
        if matches!(self.tail, TailModel::Zero)
            && xi.iter().take(d).any(|&x| x <= -reach || x >= n - 1.0 + reach)
        {
            return 0.0;
        }
        match self.interpolation {
            Interpolation::Multilinear => self.eval_linear(&xi),
            Interpolation::Tricubic => self.eval_cubic(&xi).max(0.0),
        }
    }

    #[inline]
    fn eval_linear(&self, xi: &[f64; 3]) -> f64 {
        let d = self.grid.d;
        let i0 = xi[0].floor();
        let i1 = xi[1].floor();
        let t0 = xi[0] - i0;
        let t1 = xi[1] - i1;
        let (i0, i1) = (i0 as i64, i1 as i64);
        if d == 2 {
            let f00 = self.lattice([i0, i1, 0]);
            let f10 = self.lattice([i0 + 1, i1, 0]);
            let f01 = self.lattice([i0, i1 + 1, 0]);
            let f11 = self.lattice([i0 + 1, i1 + 1, 0]);
            return (1.0 - t1) * ((1.0 - t0) * f00 + t0 * f10) + t1 * ((1.0 - t0) * f01 + t0 * f11);
        }
        let i2f = xi[2].floor();
        let t2 = xi[2] - i2f;
        let i2 = i2f as i64;
        let mut acc = 0.0;
        for c in 0..8 {
            let (a, b, e) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
            let w = (if a == 1 { t0 } else { 1.0 - t0 })
                * (if b == 1 { t1 } else { 1.0 - t1 })
                * (if e == 1 { t2 } else { 1.0 - t2 });
            if w != 0.0 {
                acc += w * self.lattice([i0 + a as i64, i1 + b as i64, i2 + e as i64]);
            }
        }
        acc
    }

    fn eval_cubic(&self, xi: &[f64; 3]) -> f64 {
        let d = self.grid.d;
        let mut base = [0i64; 3];
        let mut w = [[0.0f64; 4]; 3];
        for k in 0..d {
            let f = xi[k].floor();
            base[k] = f as i64 - 1;
            w[k] = catmull_rom(xi[k] - f);
        }
        let mut acc = 0.0;
        if d == 2 {
            for b in 0..4 {
                for a in 0..4 {
                    let ww = w[0][a] * w[1][b];
                    acc += ww * self.lattice([base[0] + a as i64, base[1] + b as i64, 0]);
                }
            }
        } else {
            for c in 0..4 {
                for b in 0..4 {
                    for a in 0..4 {
                        let ww = w[0][a] * w[1][b] * w[2][c];
                        acc += ww
                            * self.lattice([
                                base[0] + a as i64,
                                base[1] + b as i64,
                                base[2] + c as i64,
                            ]);
                    }
                }
            }
        }
        acc
    }
}

/// Catmull-Rom weights for the four nodes around fractional offset `t`.
#[inline]
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

#[cfg(test)]
mod tests {
    use super::*;

    fn grid2() -> VelocityGrid {
        VelocityGrid::new(2, 4.0, 16).unwrap()
    }

    #[test]
    fn grid_is_cell_centred_and_symmetric() {
        let g = grid2();
        assert_eq!(g.h(), 0.5);
        assert_eq!(g.coord(0), -3.75);
        assert_eq!(g.coord(15), 3.75);
        for i in 0..g.len() {
            let v = g.node(i);
            assert!(v[0].abs() <= g.r_max && v[1].abs() <= g.r_max);
            assert_eq!(g.linear_index(&g.multi_index(i)), Some(i));
        }
        assert!(VelocityGrid::new(2, 4.0, 7).is_err());
    }

    #[test]
    fn interpolation_reproduces_nodes_and_linear_functions() {
        let g = grid2();
        let f = GridDistribution::from_fn(g, |v| 1.0 + 0.1 * v[0] + 0.2 * v[1] + 0.5);
        for i in [0, 17, 100, 255] {
            let v = g.node(i);
            assert!((f.eval(&v) - f.values[i]).abs() < 1e-14);
        }
        let v = [0.13, -1.71, 0.0];
        assert!((f.eval(&v) - (1.5 + 0.013 - 0.342)).abs() < 1e-12);
        let c = f.clone().with_interpolation(Interpolation::Tricubic);
        assert!((c.eval(&v) - (1.5 + 0.013 - 0.342)).abs() < 1e-12);
    }

    #[test]
    fn zero_tail_is_compact() {
        let g = grid2();
        let f = GridDistribution::from_fn(g, |_| 1.0);
        assert_eq!(f.eval(&[4.3, 0.0, 0.0]), 0.0);
        assert!(f.eval(&[3.9, 0.0, 0.0]) > 0.0);
    }

    #[test]
    fn power_tail_matches_model_at_far_nodes() {
        let g = grid2();
        let f = GridDistribution::from_fn(g, |_| 0.0)
            .with_tail(TailModel::PowerLaw { q_tail: 3.0, amplitude: 2.0 });
        let x = g.coord(40);
        let v = [x, g.coord(8), 0.0];
        assert!((f.eval(&v) - 2.0 * geom::norm(&v).powi(-3)).abs() < 1e-14);
    }

    #[test]
    fn rejects_negative_samples() {
        let g = grid2();
        let mut vals = vec![1.0; g.len()];
        vals[3] = -1e-3;
        assert!(GridDistribution::new(g, vals, Interpolation::Multilinear, TailModel::Zero).is_err());
    }
}
