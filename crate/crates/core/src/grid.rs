//! Uniform grids, sampled fields and the quadrature primitives shared by
//! every other module.
//!
//! Fields are stored row-major with the bottom row first. Interpolation
//! between nodes is bilinear, which is also the finite element space used
//! by the solvers: the Dirichlet energy of a field is the energy of its
//! bilinear interpolant.

use crate::error::{Error, Result};

/// Uniform square grid: node `(i, j)` sits at `(x0 + i h, y0 + j h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub y0: f64,
    pub h: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, x0: f64, y0: f64, h: f64) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::DegenerateGrid(format!("need at least 3x3 nodes, got {nx}x{ny}")));
        }
        if !(h > 0.0) || !h.is_finite() || !x0.is_finite() || !y0.is_finite() {
            return Err(Error::DegenerateGrid(format!("invalid spacing {h} or origin ({x0}, {y0})")));
        }
        Ok(Self { nx, ny, x0, y0, h })
    }

    /// `[-1, 1] x [0, 1]` with spacing `1/n`; the slit `y = 0` is row 0.
    pub fn half_square(n: usize) -> Self {
        Self { nx: 2 * n + 1, ny: n + 1, x0: -1.0, y0: 0.0, h: 1.0 / n as f64 }
    }

    /// Grid of cell centers.
    pub fn cells(&self) -> Self {
        Self { nx: self.nx - 1, ny: self.ny - 1, x0: self.x0 + 0.5 * self.h, y0: self.y0 + 0.5 * self.h, h: self.h }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.h
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.y0 + j as f64 * self.h
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.nx - 1)
    }

    pub fn y_max(&self) -> f64 {
        self.y(self.ny - 1)
    }

    /// Row index of `y = 0` if the slit is a grid row.
    pub fn slit_row(&self) -> Option<usize> {
        let j = (-self.y0 / self.h).round();
        if j < 0.0 || j >= self.ny as f64 {
            return None;
        }
        let j = j as usize;
        (self.y(j).abs() <= 1e-9 * self.h).then_some(j)
    }

    /// Nearest node index to `x` along the first axis, if it lies on a node.
    pub fn node_at_x(&self, x: f64) -> Option<usize> {
        let i = ((x - self.x0) / self.h).round();
        if i < 0.0 || i >= self.nx as f64 {
            return None;
        }
        let i = i as usize;
        ((self.x(i) - x).abs() <= 1e-9 * self.h).then_some(i)
    }

    /// Distance from the origin to the nearest edge of the upper part of
    /// the grid (the admissible radius for half-disk quadrature).
    pub fn max_half_radius(&self) -> f64 {
        (-self.x0).min(self.x_max()).min(self.y_max()).max(0.0)
    }

    /// Cell containing `(x, y)` and the local coordinates in `[0, 1]`.
    /// Points within `1e-9 h` outside the grid are clamped.
    pub fn locate(&self, x: f64, y: f64) -> Option<(usize, usize, f64, f64)> {
        let fx = (x - self.x0) / self.h;
        let fy = (y - self.y0) / self.h;
        let eps = 1e-9;
        let lim_x = (self.nx - 1) as f64;
        let lim_y = (self.ny - 1) as f64;
        if !(fx >= -eps && fy >= -eps && fx <= lim_x + eps && fy <= lim_y + eps) {
            return None;
        }
        let fx = fx.clamp(0.0, lim_x);
        let fy = fy.clamp(0.0, lim_y);
        let i = (fx.floor() as usize).min(self.nx - 2);
        let j = (fy.floor() as usize).min(self.ny - 2);
        Some((i, j, fx - i as f64, fy - j as f64))
    }

    pub fn same_shape(&self, other: &GridSpec) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && (self.x0 - other.x0).abs() <= 1e-12
            && (self.y0 - other.y0).abs() <= 1e-12
            && (self.h - other.h).abs() <= 1e-15 * self.h.max(1.0)
    }
}

/// Real function sampled at the nodes of a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::Shape(format!("{} values for a {}x{} grid", values.len(), spec.nx, spec.ny)));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value at index {k}")));
        }
        Ok(Self { spec, values })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        Self { spec, values: vec![0.0; spec.len()] }
    }

    pub fn from_fn(spec: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(spec.len());
        for j in 0..spec.ny {
            let y = spec.y(j);
            for i in 0..spec.nx {
                values.push(f(spec.x(i), y));
            }
        }
        Self { spec, values }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.spec.index(i, j)]
    }

    /// Bilinear interpolation; `None` outside the grid.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        let (i, j, s, t) = self.spec.locate(x, y)?;
        Some(self.bilinear(i, j, s, t))
    }

    /// Bilinear interpolation and its gradient within the containing cell.
    pub fn sample_with_gradient(&self, x: f64, y: f64) -> Option<(f64, [f64; 2])> {
        let (i, j, s, t) = self.spec.locate(x, y)?;
        let [u00, u10, u01, u11] = self.corners(i, j);
        let val = u00 * (1.0 - s) * (1.0 - t) + u10 * s * (1.0 - t) + u01 * (1.0 - s) * t + u11 * s * t;
        let gx = ((u10 - u00) * (1.0 - t) + (u11 - u01) * t) / self.spec.h;
        let gy = ((u01 - u00) * (1.0 - s) + (u11 - u10) * s) / self.spec.h;
        Some((val, [gx, gy]))
    }

    #[inline]
    fn bilinear(&self, i: usize, j: usize, s: f64, t: f64) -> f64 {
        let [u00, u10, u01, u11] = self.corners(i, j);
        u00 * (1.0 - s) * (1.0 - t) + u10 * s * (1.0 - t) + u01 * (1.0 - s) * t + u11 * s * t
    }

    /// Tensor Catmull-Rom interpolation (C1, exact on quadratics) and its
    /// gradient. Ghost nodes past the edges are extrapolated quadratically.
    pub fn sample_cubic(&self, x: f64, y: f64) -> Option<(f64, [f64; 2])> {
        let (i, j, s, t) = self.spec.locate(x, y)?;
        let (wx, dx) = catmull_rom(s);
        let (wy, dy) = catmull_rom(t);
        let mut val = 0.0;
        let mut gx = 0.0;
        let mut gy = 0.0;
        for (b, (&wyb, &dyb)) in wy.iter().zip(&dy).enumerate() {
            let row = self.stencil_row(i, j as isize + b as isize - 1);
            for a in 0..4 {
                val += wx[a] * wyb * row[a];
                gx += dx[a] * wyb * row[a];
                gy += wx[a] * dyb * row[a];
            }
        }
        Some((val, [gx / self.spec.h, gy / self.spec.h]))
    }

    fn stencil_row(&self, i: usize, j: isize) -> [f64; 4] {
        let ny = self.spec.ny as isize;
        let line = |jj: usize| -> [f64; 4] {
            let nx = self.spec.nx as isize;
            let v = |ii: isize| self.at(ii as usize, jj);
            let ii = i as isize;
            let left = if ii == 0 { 3.0 * v(0) - 3.0 * v(1) + v(2) } else { v(ii - 1) };
            let right = if ii + 2 >= nx { 3.0 * v(ii + 1) - 3.0 * v(ii) + v(ii - 1) } else { v(ii + 2) };
            [left, v(ii), v(ii + 1), right]
        };
        if j < 0 {
            let (a, b, c) = (line(0), line(1), line(2));
            std::array::from_fn(|k| 3.0 * a[k] - 3.0 * b[k] + c[k])
        } else if j >= ny {
            let m = (ny - 1) as usize;
            let (a, b, c) = (line(m), line(m - 1), line(m - 2));
            std::array::from_fn(|k| 3.0 * a[k] - 3.0 * b[k] + c[k])
        } else {
            line(j as usize)
        }
    }

    /// Corner values of cell `(i, j)` in the order 00, 10, 01, 11.
    #[inline]
    pub fn corners(&self, i: usize, j: usize) -> [f64; 4] {
        let k = self.spec.index(i, j);
        let nx = self.spec.nx;
        [self.values[k], self.values[k + 1], self.values[k + nx], self.values[k + nx + 1]]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { spec: self.spec, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Values along the slit row.
    pub fn slit_values(&self) -> Option<Vec<f64>> {
        let j = self.spec.slit_row()?;
        Some((0..self.spec.nx).map(|i| self.at(i, j)).collect())
    }
}

/// Catmull-Rom weights for the nodes `-1, 0, 1, 2` at `t` in `[0, 1]` and
/// their derivatives in `t`.
#[inline]
pub(crate) fn catmull_rom(t: f64) -> ([f64; 4], [f64; 4]) {
    let t2 = t * t;
    let t3 = t2 * t;
    (
        [
            0.5 * (-t3 + 2.0 * t2 - t),
            0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
            0.5 * (-3.0 * t3 + 4.0 * t2 + t),
            0.5 * (t3 - t2),
        ],
        [
            0.5 * (-3.0 * t2 + 4.0 * t - 1.0),
            0.5 * (9.0 * t2 - 10.0 * t),
            0.5 * (-9.0 * t2 + 8.0 * t + 1.0),
            0.5 * (3.0 * t2 - 2.0 * t),
        ],
    )
}

/// Averaged gradient of the bilinear interpolant over one cell and the
/// hourglass amplitude `u00 - u10 - u01 + u11`.
#[inline]
pub(crate) fn cell_gradient(c: [f64; 4], h: f64) -> ([f64; 2], f64) {
    let [u00, u10, u01, u11] = c;
    let gx = (u10 + u11 - u00 - u01) / (2.0 * h);
    let gy = (u01 + u11 - u00 - u10) / (2.0 * h);
    ([gx, gy], u00 - u10 - u01 + u11)
}

/// Symmetric 2x2 coefficient field sampled on a grid (usually cell centers).
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField {
    pub spec: GridSpec,
    pub a11: Vec<f64>,
    pub a12: Vec<f64>,
    pub a22: Vec<f64>,
    /// Smallest eigenvalue over the field.
    pub lambda: f64,
    /// Largest eigenvalue over the field.
    pub big_lambda: f64,
    /// `|det - 1| <= 1e-12` everywhere.
    pub det_normalized: bool,
}

#[inline]
pub(crate) fn sym_eigen(a11: f64, a12: f64, a22: f64) -> (f64, f64) {
    let m = 0.5 * (a11 + a22);
    let r = (0.25 * (a11 - a22).powi(2) + a12 * a12).sqrt();
    (m - r, m + r)
}

impl MatrixField {
    pub fn new(spec: GridSpec, a11: Vec<f64>, a12: Vec<f64>, a22: Vec<f64>) -> Result<Self> {
        let n = spec.len();
        if a11.len() != n || a12.len() != n || a22.len() != n {
            return Err(Error::Shape("matrix entries do not match the grid".into()));
        }
        let mut lambda = f64::INFINITY;
        let mut big_lambda = 0.0_f64;
        let mut det_normalized = true;
        for k in 0..n {
            let (lo, hi) = sym_eigen(a11[k], a12[k], a22[k]);
            if !(lo > 0.0) || !hi.is_finite() {
                return Err(Error::Ellipticity(format!(
                    "eigenvalues ({lo}, {hi}) at index {k} are not positive and finite"
                )));
            }
            lambda = lambda.min(lo);
            big_lambda = big_lambda.max(hi);
            let det = a11[k] * a22[k] - a12[k] * a12[k];
            det_normalized &= (det - 1.0).abs() <= 1e-12;
        }
        Ok(Self { spec, a11, a12, a22, lambda, big_lambda, det_normalized })
    }

    pub fn identity(spec: GridSpec) -> Self {
        let n = spec.len();
        Self {
            spec,
            a11: vec![1.0; n],
            a12: vec![0.0; n],
            a22: vec![1.0; n],
            lambda: 1.0,
            big_lambda: 1.0,
            det_normalized: true,
        }
    }

    pub fn from_fn(spec: GridSpec, f: impl Fn(f64, f64) -> [f64; 3]) -> Result<Self> {
        let n = spec.len();
        let (mut a11, mut a12, mut a22) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                let [p, q, r] = f(spec.x(i), spec.y(j));
                a11.push(p);
                a12.push(q);
                a22.push(r);
            }
        }
        Self::new(spec, a11, a12, a22)
    }

    /// Entries `[a11, a12, a22]` at node `k`.
    #[inline]
    pub fn entry(&self, k: usize) -> [f64; 3] {
        [self.a11[k], self.a12[k], self.a22[k]]
    }

    /// Bilinear interpolation of the entries, clamped to the grid.
    pub fn sample_clamped(&self, x: f64, y: f64) -> [f64; 3] {
        let s = &self.spec;
        let fx = ((x - s.x0) / s.h).clamp(0.0, (s.nx - 1) as f64);
        let fy = ((y - s.y0) / s.h).clamp(0.0, (s.ny - 1) as f64);
        let (i, j) = if s.nx == 1 || s.ny == 1 {
            (0, 0)
        } else {
            ((fx.floor() as usize).min(s.nx - 2), (fy.floor() as usize).min(s.ny - 2))
        };
        let (sx, ty) = (fx - i as f64, fy - j as f64);
        let k = s.index(i, j);
        let w = [(1.0 - sx) * (1.0 - ty), sx * (1.0 - ty), (1.0 - sx) * ty, sx * ty];
        let ks = [k, k + 1, k + s.nx, k + s.nx + 1];
        let mut out = [0.0; 3];
        for (wk, &kk) in w.iter().zip(&ks) {
            out[0] += wk * self.a11[kk];
            out[1] += wk * self.a12[kk];
            out[2] += wk * self.a22[kk];
        }
        out
    }

    /// Spread of `det` over the field: `(min, max)`.
    pub fn det_range(&self) -> (f64, f64) {
        (0..self.spec.len()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), k| {
            let d = self.a11[k] * self.a22[k] - self.a12[k] * self.a12[k];
            (lo.min(d), hi.max(d))
        })
    }
}

/// Sorted disjoint open intervals on the slit.
#[derive(Debug, Clone, PartialEq, Default, serde::Serialize)]
pub struct IntervalSet {
    pub intervals: Vec<(f64, f64)>,
}

impl IntervalSet {
    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }
}

/// Centered differences inside, second-order one-sided differences at the
/// edges. Exact on quadratics.
pub fn gradient(f: &ScalarField) -> Result<(ScalarField, ScalarField)> {
    let s = f.spec;
    if s.nx < 3 || s.ny < 3 {
        return Err(Error::DegenerateGrid("gradient needs at least 3 points per axis".into()));
    }
    let h2 = 2.0 * s.h;
    let mut gx = vec![0.0; s.len()];
    let mut gy = vec![0.0; s.len()];
    for j in 0..s.ny {
        for i in 0..s.nx {
            let k = s.index(i, j);
            gx[k] = if i == 0 {
                (-3.0 * f.at(0, j) + 4.0 * f.at(1, j) - f.at(2, j)) / h2
            } else if i == s.nx - 1 {
                (3.0 * f.at(i, j) - 4.0 * f.at(i - 1, j) + f.at(i - 2, j)) / h2
            } else {
                (f.at(i + 1, j) - f.at(i - 1, j)) / h2
            };
            gy[k] = if j == 0 {
                (-3.0 * f.at(i, 0) + 4.0 * f.at(i, 1) - f.at(i, 2)) / h2
            } else if j == s.ny - 1 {
                (3.0 * f.at(i, j) - 4.0 * f.at(i, j - 1) + f.at(i, j - 2)) / h2
            } else {
                (f.at(i, j + 1) - f.at(i, j - 1)) / h2
            };
        }
    }
    Ok((ScalarField { spec: s, values: gx }, ScalarField { spec: s, values: gy }))
}

fn check_radius(spec: &GridSpec, r: f64) -> Result<()> {
    let max = spec.max_half_radius();
    if !(r > 0.0) || r > max * (1.0 + 1e-12) {
        return Err(Error::RadiusTooLarge { radius: r, max });
    }
    Ok(())
}

/// Height `H(r) = r^{-(d-1)} * integral of f^2 over the upper half circle`.
///
/// Trapezoid rule in the angle with `4 ceil(pi r / h)` nodes and bilinear
/// interpolation of `f`.
pub fn height(f: &ScalarField, r: f64, d: u32) -> Result<f64> {
    check_radius(&f.spec, r)?;
    let n = 4 * ((std::f64::consts::PI * r / f.spec.h).ceil() as usize).max(1);
    let dtheta = std::f64::consts::PI / (n - 1) as f64;
    let mut sum = 0.0;
    for k in 0..n {
        let th = k as f64 * dtheta;
        let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        let v = f
            .sample(r * th.cos(), r * th.sin())
            .ok_or(Error::RadiusTooLarge { radius: r, max: f.spec.max_half_radius() })?;
        sum += w * v * v;
    }
    let arc = sum * dtheta * r;
    Ok(arc / r.powi(d as i32 - 1))
}

/// Subdivisions per axis used for cells cut by the circle.
const CUT_SUBDIVISIONS: usize = 16;

/// Energy `D(r) = r^{-(d-2)} * integral of |grad f|^2 over B_r intersected
/// with the upper half plane`, for the bilinear interpolant of `f`.
///
/// Cells inside the disk are integrated exactly; cells cut by the circle are
/// split into `16 x 16` sub-cells and the inside ones integrated by the
/// midpoint rule.
pub fn dirichlet_energy(f: &ScalarField, r: f64, d: u32) -> Result<f64> {
    check_radius(&f.spec, r)?;
    let s = f.spec;
    let h = s.h;
    let r2 = r * r;
    let j0 = s.slit_row().unwrap_or(0);
    let mut total = 0.0;
    for j in j0..s.ny - 1 {
        let ya = s.y(j);
        let yb = ya + h;
        if ya.max(0.0) >= r {
            break;
        }
        for i in 0..s.nx - 1 {
            let xa = s.x(i);
            let xb = xa + h;
            // nearest and farthest distance of the cell to the origin
            let nx_ = if xa > 0.0 {
                xa
            } else if xb < 0.0 {
                xb
            } else {
                0.0
            };
            let ny_ = if ya > 0.0 {
                ya
            } else if yb < 0.0 {
                yb
            } else {
                0.0
            };
            if nx_ * nx_ + ny_ * ny_ >= r2 {
                continue;
            }
            let fx = xa.abs().max(xb.abs());
            let fy = ya.abs().max(yb.abs());
            let (g, hg) = cell_gradient(f.corners(i, j), h);
            if fx * fx + fy * fy <= r2 {
                total += h * h * (g[0] * g[0] + g[1] * g[1]) + hg * hg / 6.0;
            } else {
                let m = CUT_SUBDIVISIONS;
                let ds = 1.0 / m as f64;
                let mut acc = 0.0;
                for b in 0..m {
                    let t = (b as f64 + 0.5) * ds;
                    let y = ya + t * h;
                    for a in 0..m {
                        let sl = (a as f64 + 0.5) * ds;
                        let x = xa + sl * h;
                        if x * x + y * y < r2 {
                            let gx = g[0] + hg * (t - 0.5) / h;
                            let gy = g[1] + hg * (sl - 0.5) / h;
                            acc += gx * gx + gy * gy;
                        }
                    }
                }
                total += acc * ds * ds * h * h;
            }
        }
    }
    Ok(total / r.powi(d as i32 - 2))
}

/// Resample `x -> f(r x) / normalizer` onto the grid of `f`.
pub fn rescale(f: &ScalarField, r: f64, normalizer: f64) -> Result<ScalarField> {
    if !(normalizer > 1e-30) {
        return Err(Error::DegenerateRescaling(normalizer));
    }
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::InvalidArgument(format!("rescaling radius {r} outside (0, 1]")));
    }
    let s = f.spec;
    let mut values = Vec::with_capacity(s.len());
    for j in 0..s.ny {
        for i in 0..s.nx {
            let v = f
                .sample(r * s.x(i), r * s.y(j))
                .ok_or_else(|| Error::InvalidArgument("grid is not star-shaped about the origin".into()))?;
            values.push(v / normalizer);
        }
    }
    Ok(ScalarField { spec: s, values })
}

/// Maximal runs of slit nodes with `f > tol`, as open intervals between the
/// neighbouring contact nodes. Runs separated by one node are merged.
pub fn contact_intervals(f: &ScalarField, tol: f64) -> IntervalSet {
    let Some(j) = f.spec.slit_row() else {
        return IntervalSet::default();
    };
    let nx = f.spec.nx;
    let positive: Vec<bool> = (0..nx).map(|i| f.at(i, j) > tol).collect();
    intervals_from_mask(&f.spec, &positive, 0, nx)
}

/// [`contact_intervals`] restricted to the slit nodes with `lo <= x <= hi`.
pub fn contact_intervals_within(f: &ScalarField, tol: f64, lo: f64, hi: f64) -> IntervalSet {
    let Some(j) = f.spec.slit_row() else {
        return IntervalSet::default();
    };
    let s = f.spec;
    let first = (0..s.nx).find(|&i| s.x(i) >= lo - 1e-12).unwrap_or(s.nx);
    let last = (0..s.nx).rev().find(|&i| s.x(i) <= hi + 1e-12).map_or(0, |i| i + 1);
    if first >= last {
        return IntervalSet::default();
    }
    let positive: Vec<bool> = (0..s.nx).map(|i| f.at(i, j) > tol).collect();
    intervals_from_mask(&s, &positive, first, last)
}

fn intervals_from_mask(s: &GridSpec, positive: &[bool], first: usize, last: usize) -> IntervalSet {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut i = first;
    while i < last {
        if positive[i] {
            let start = i;
            while i + 1 < last && positive[i + 1] {
                i += 1;
            }
            runs.push((start, i));
        }
        i += 1;
    }
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for run in runs {
        match merged.last_mut() {
            Some(prev) if run.0 == prev.1 + 2 => prev.1 = run.1,
            _ => merged.push(run),
        }
    }
    IntervalSet {
        intervals: merged
            .into_iter()
            .map(|(a, b)| {
                let xa = if a > first { s.x(a - 1) } else { s.x(a) };
                let xb = if b + 1 < last { s.x(b + 1) } else { s.x(b) };
                (xa, xb)
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn re_pow(x: f64, y: f64, p: f64) -> f64 {
        let r = x.hypot(y);
        if r == 0.0 {
            return 0.0;
        }
        r.powf(p) * (p * y.atan2(x)).cos()
    }

    #[test]
    fn cubic_sampling_is_exact_on_quadratics() {
        let spec = GridSpec::new(6, 5, -0.5, 0.0, 0.2).unwrap();
        let q = |x: f64, y: f64| 1.0 + x - 2.0 * y + 3.0 * x * x - x * y + 0.5 * y * y;
        let f = ScalarField::from_fn(spec, q);
        for &(x, y) in &[(-0.5, 0.0), (-0.43, 0.11), (0.1, 0.79), (0.5, 0.8), (0.37, 0.05)] {
            let (v, g) = f.sample_cubic(x, y).unwrap();
            assert!((v - q(x, y)).abs() < 1e-12);
            assert!((g[0] - (1.0 + 6.0 * x - y)).abs() < 1e-11);
            assert!((g[1] - (-2.0 - x + y)).abs() < 1e-11);
        }
        assert!(f.sample_cubic(0.6, 0.0).is_none());
    }

    #[test]
    fn gradient_is_exact_on_affine_and_quadratic() {
        let spec = GridSpec::new(11, 7, -0.5, 0.0, 0.1).unwrap();
        let f = ScalarField::from_fn(spec, |_, y| y);
        let (gx, gy) = gradient(&f).unwrap();
        assert!(gx.values.iter().all(|v| v.abs() < 1e-12));
        assert!(gy.values.iter().all(|v| (v - 1.0).abs() < 1e-12));

        let f = ScalarField::from_fn(spec, |x, _| x * x);
        let (gx, _) = gradient(&f).unwrap();
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                assert!((gx.at(i, j) - 2.0 * spec.x(i)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_of_three_halves_power() {
        let spec = GridSpec::half_square(256);
        let f = ScalarField::from_fn(spec, |x, y| re_pow(x, y, 1.5));
        let (gx, gy) = gradient(&f).unwrap();
        let i = spec.node_at_x(0.5).unwrap();
        let j = 128;
        // d/dz z^{3/2} = 1.5 z^{1/2}; grad Re = (Re, -Im) of the derivative
        let r = 0.5f64.hypot(0.5);
        let th = 0.25 * PI;
        let (re, im) = (1.5 * r.sqrt() * (0.5 * th).cos(), 1.5 * r.sqrt() * (0.5 * th).sin());
        assert!((gx.at(i, j) - re).abs() < 1e-3);
        assert!((gy.at(i, j) + im).abs() < 1e-3);
    }

    #[test]
    fn degenerate_grid_rejected() {
        assert!(GridSpec::new(2, 5, 0.0, 0.0, 0.1).is_err());
        assert!(GridSpec::new(5, 5, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn height_and_energy_of_linear_field() {
        let spec = GridSpec::half_square(64);
        let f = ScalarField::from_fn(spec, |_, y| y);
        assert!((height(&f, 1.0, 2).unwrap() - PI / 2.0).abs() < 1e-3);
        assert!((dirichlet_energy(&f, 1.0, 2).unwrap() - PI / 2.0).abs() < 2e-3);
        let z = ScalarField::zeros(spec);
        assert_eq!(height(&z, 0.5, 2).unwrap(), 0.0);
        let c = ScalarField::from_fn(spec, |_, _| 3.0);
        assert_eq!(dirichlet_energy(&c, 0.5, 2).unwrap(), 0.0);
        assert!(matches!(height(&f, 1.5, 2), Err(Error::RadiusTooLarge { .. })));
    }

    #[test]
    fn homogeneous_scaling_of_height() {
        let spec = GridSpec::half_square(256);
        let f = ScalarField::from_fn(spec, |x, y| re_pow(x, y, 1.5));
        let h1 = height(&f, 1.0, 2).unwrap();
        for r in [0.2, 0.4] {
            let hr = height(&f, r, 2).unwrap();
            assert!((hr / (r.powi(3) * h1) - 1.0).abs() < 1e-3, "r={r}");
        }
    }

    #[test]
    fn frequency_of_homogeneous_field_is_its_degree() {
        let spec = GridSpec::half_square(256);
        let f = ScalarField::from_fn(spec, |x, y| re_pow(x, y, 1.5));
        for r in [0.1, 0.2, 0.4, 0.8] {
            let n = dirichlet_energy(&f, r, 2).unwrap() / height(&f, r, 2).unwrap();
            assert!((n - 1.5).abs() < 1e-2, "r={r} N={n}");
        }
    }

    #[test]
    fn rescale_identity_and_homogeneity() {
        let spec = GridSpec::half_square(128);
        let f = ScalarField::from_fn(spec, |x, y| x * x - y * y + 0.5 * y);
        let g = rescale(&f, 1.0, 1.0).unwrap();
        assert_eq!(g.values, f.values);
        let hom = ScalarField::from_fn(spec, |x, y| x * y);
        let g = rescale(&hom, 0.5, 0.25).unwrap();
        for (a, b) in g.values.iter().zip(&hom.values) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(matches!(rescale(&f, 0.5, 0.0), Err(Error::DegenerateRescaling(_))));
    }

    #[test]
    fn rescaled_field_has_unit_height() {
        let spec = GridSpec::half_square(256);
        let f = ScalarField::from_fn(spec, |x, y| re_pow(x, y, 1.5));
        let h = height(&f, 0.5, 2).unwrap();
        let g = rescale(&f, 0.5, h.sqrt()).unwrap();
        assert!((height(&g, 1.0, 2).unwrap() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn contact_intervals_examples() {
        let spec = GridSpec::half_square(64);
        let f = ScalarField::from_fn(spec, |x, y| re_pow(x, y, 1.5));
        let iv = contact_intervals(&f, 1e-8);
        assert_eq!(iv.intervals, vec![(0.0, 1.0)]);

        assert!(contact_intervals(&ScalarField::zeros(spec), 1e-8).is_empty());

        let g = ScalarField::from_fn(spec, |x, _| (x * x - 0.25).max(0.0));
        let iv = contact_intervals(&g, 0.0);
        assert_eq!(iv.len(), 2);
        assert!((iv.intervals[0].0 + 1.0).abs() < 1e-12 && (iv.intervals[0].1 + 0.5).abs() < 1e-12);
        assert!((iv.intervals[1].0 - 0.5).abs() < 1e-12 && (iv.intervals[1].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_node_gaps_are_merged() {
        let spec = GridSpec::half_square(8);
        let mut f = ScalarField::from_fn(spec, |x, _| if x > 0.0 { 1.0 } else { 0.0 });
        let k = spec.node_at_x(0.5).unwrap();
        f.values[k] = 0.0;
        assert_eq!(contact_intervals(&f, 0.5).len(), 1);
        f.values[k + 1] = 0.0;
        assert_eq!(contact_intervals(&f, 0.5).len(), 2);
    }

    #[test]
    fn matrix_field_rejects_indefinite() {
        let spec = GridSpec::half_square(4).cells();
        assert!(MatrixField::from_fn(spec, |_, _| [1.0, 2.0, 1.0]).is_err());
        let m = MatrixField::from_fn(spec, |_, _| [2.0, 0.0, 0.5]).unwrap();
        assert!(m.det_normalized);
        assert!((m.lambda - 0.5).abs() < 1e-15 && (m.big_lambda - 2.0).abs() < 1e-15);
    }
}
