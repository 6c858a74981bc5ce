//! Classical hodograph `(x, y) -> (x, u(x, y))`, its linearization
//! `u~ = u' - z`, the harmonic conjugate and the conformal hodograph
//! `T = (U, u)` with inverse `S = (V, v)`.

use num_complex::Complex64;
use serde::Serialize;

use crate::constructor::{arclength, AnalyticCurve};
use crate::error::{Error, Result};
use crate::grid::{catmull_rom, gradient, GridSpec, ScalarField};
use crate::nonlinearity::Nonlinearity;
use crate::quad;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// One grid column `y -> u(x_i, y)` with Catmull-Rom interpolation.
struct Column<'a> {
    field: &'a ScalarField,
    i: usize,
}

impl Column<'_> {
    fn node(&self, j: isize) -> f64 {
        let ny = self.field.spec.ny as isize;
        let v = |jj: isize| self.field.at(self.i, jj as usize);
        if j < 0 {
            3.0 * v(0) - 3.0 * v(1) + v(2)
        } else if j >= ny {
            3.0 * v(ny - 1) - 3.0 * v(ny - 2) + v(ny - 3)
        } else {
            v(j)
        }
    }

    /// Value and `d/dy` at `y`, extrapolating by the edge cubic.
    fn eval(&self, y: f64) -> (f64, f64) {
        let s = self.field.spec;
        let fy = (y - s.y0) / s.h;
        let j = (fy.floor().max(0.0) as usize).min(s.ny - 2);
        let t = fy - j as f64;
        let (w, d) = catmull_rom(t);
        let mut val = 0.0;
        let mut der = 0.0;
        for k in 0..4 {
            let p = self.node(j as isize + k as isize - 1);
            val += w[k] * p;
            der += d[k] * p;
        }
        (val, der / s.h)
    }

    /// `y` with `u(x_i, y) = z` by bisection on the nodes, then safeguarded
    /// Newton to `1e-12`.
    fn invert(&self, z: f64) -> Result<f64> {
        let s = self.field.spec;
        let vals = |j: usize| self.field.at(self.i, j);
        if z < vals(0) - 1e-12 || z > vals(s.ny - 1) + 1e-12 {
            return Err(Error::NonInvertible(format!("level {z} outside column {}", self.i)));
        }
        let (mut lo, mut hi) = (0usize, s.ny - 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if vals(mid) <= z {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (mut a, mut b) = (s.y(lo), s.y(hi));
        let mut y = a + (b - a) * ((z - vals(lo)) / (vals(hi) - vals(lo))).clamp(0.0, 1.0);
        for _ in 0..100 {
            let (val, der) = self.eval(y);
            let r = val - z;
            if r.abs() <= 1e-14 {
                return Ok(y);
            }
            if r > 0.0 {
                b = y;
            } else {
                a = y;
            }
            let mut next = if der > 0.0 { y - r / der } else { 0.5 * (a + b) };
            if !(next > a && next < b) {
                next = 0.5 * (a + b);
            }
            if (next - y).abs() <= 1e-12 * (1.0 + y.abs()) {
                return Ok(next);
            }
            y = next;
        }
        Err(Error::Newton(format!("column {} inversion at level {z}", self.i)))
    }
}

/// `d/dx u(x_i, y)` from the neighbouring columns, second order.
fn column_dx(u: &ScalarField, i: usize, y: f64) -> f64 {
    let s = u.spec;
    let c = |k: usize| Column { field: u, i: k }.eval(y).0;
    if i == 0 {
        (-3.0 * c(0) + 4.0 * c(1) - c(2)) / (2.0 * s.h)
    } else if i == s.nx - 1 {
        (3.0 * c(i) - 4.0 * c(i - 1) + c(i - 2)) / (2.0 * s.h)
    } else {
        (c(i + 1) - c(i - 1)) / (2.0 * s.h)
    }
}

#[derive(Debug, Clone)]
pub struct HodographResult {
    /// `u'` on the `(s, z)` grid.
    pub uprime: ScalarField,
    /// `u' - z`.
    pub utilde: ScalarField,
    /// `min d_y u` over the input grid.
    pub margin: f64,
    pub report: HodographReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct HodographReport {
    pub margin: f64,
    pub z_range: (f64, f64),
    /// `max |u(s, u'(s, z)) - z|`.
    pub round_trip: f64,
    /// `max |d_x u + d_y u d_s u'|` at interior nodes.
    pub identity_s: f64,
    /// `max |d_y u d_z u' - 1|` at interior nodes.
    pub identity_z: f64,
    pub h: f64,
}

/// Per-column inversion of `y -> u(x, y)` onto a uniform `z` grid with the
/// spacing of the input. The `z` range runs from the largest column
/// minimum to 90% of the way to the smallest column maximum.
pub fn classical_hodograph(u: &ScalarField) -> Result<HodographResult> {
    let s = u.spec;
    let (_, gy) = gradient(u)?;
    let margin = gy.values.iter().copied().fold(f64::INFINITY, f64::min);
    if !(margin > 0.0) {
        return Err(Error::NonInvertible(format!("d_y u reaches {margin:e}")));
    }
    let col_min = (0..s.nx).map(|i| u.at(i, 0)).fold(f64::NEG_INFINITY, f64::max);
    let col_max = (0..s.nx).map(|i| u.at(i, s.ny - 1)).fold(f64::INFINITY, f64::min);
    let z0 = col_min;
    let z1 = z0 + 0.9 * (col_max - z0);
    let nz = ((z1 - z0) / s.h + 1e-9).floor() as usize + 1;
    if nz < 3 {
        return Err(Error::DegenerateGrid(format!("z range [{z0}, {z1}] holds fewer than 3 rows")));
    }
    let image = GridSpec::new(s.nx, nz, s.x0, z0, s.h)?;
    let mut up = vec![0.0; image.len()];
    for i in 0..s.nx {
        let col = Column { field: u, i };
        for k in 0..nz {
            up[image.index(i, k)] = col.invert(image.y(k))?;
        }
    }
    let uprime = ScalarField::new(image, up)?;
    let utilde = ScalarField::from_fn(image, |_, _| 0.0);
    let utilde = ScalarField::new(
        image,
        utilde.values.iter().enumerate().map(|(k, _)| uprime.values[k] - image.y(k / image.nx)).collect(),
    )?;

    let mut round_trip: f64 = 0.0;
    for i in 0..s.nx {
        let col = Column { field: u, i };
        for k in 0..nz {
            round_trip = round_trip.max((col.eval(uprime.at(i, k)).0 - image.y(k)).abs());
        }
    }
    let (mut id_s, mut id_z): (f64, f64) = (0.0, 0.0);
    for i in 1..s.nx - 1 {
        let col = Column { field: u, i };
        for k in 1..nz - 1 {
            let y = uprime.at(i, k);
            let us = (uprime.at(i + 1, k) - uprime.at(i - 1, k)) / (2.0 * s.h);
            let uz = (uprime.at(i, k + 1) - uprime.at(i, k - 1)) / (2.0 * s.h);
            let uy = col.eval(y).1;
            let ux = column_dx(u, i, y);
            id_s = id_s.max((ux + uy * us).abs());
            id_z = id_z.max((uy * uz - 1.0).abs());
        }
    }
    Ok(HodographResult {
        uprime,
        utilde,
        margin,
        report: HodographReport {
            margin,
            z_range: (z0, image.y(nz - 1)),
            round_trip,
            identity_s: id_s,
            identity_z: id_z,
            h: s.h,
        },
    })
}

/// [`classical_hodograph`] of `u / sqrt(lambda)`, the normalization that
/// turns a phase with free boundary gradient `sqrt(lambda)` into a unit one.
pub fn classical_hodograph_scaled(u: &ScalarField, lambda: f64) -> Result<HodographResult> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("phase constant {lambda} must be positive")));
    }
    let k = lambda.sqrt().recip();
    classical_hodograph(&u.map(|v| v * k))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyCheck {
    /// `integral of |grad u|^2 + 1` over the strip `z0 <= u <= z1`.
    pub lhs: f64,
    /// `integral of 2 F(grad u~) + 2` over the image rectangle.
    pub rhs: f64,
    pub defect: f64,
}

/// Compares the one-phase energy on the strip with the hodograph energy on
/// its image. The strip integral is done column by column in `y` with a
/// 4-point Gauss rule per grid cell and trapezoid in `x`; the image
/// integral by the cell midpoint rule.
pub fn hodograph_energy_check(u: &ScalarField, res: &HodographResult) -> Result<EnergyCheck> {
    let s = u.spec;
    let image = res.uprime.spec;
    if image.nx != s.nx || (image.x0 - s.x0).abs() > 1e-12 || (image.h - s.h).abs() > 1e-15 {
        return Err(Error::Shape("hodograph result does not belong to this field".into()));
    }
    let rule = quad::gauss_legendre(4);
    let mut lhs = 0.0;
    for i in 0..s.nx {
        let col = Column { field: u, i };
        let ya = res.uprime.at(i, 0);
        let yb = res.uprime.at(i, image.ny - 1);
        let density = |y: f64| {
            let uy = col.eval(y).1;
            let ux = column_dx(u, i, y);
            ux * ux + uy * uy + 1.0
        };
        let mut col_int = 0.0;
        let mut a = ya;
        while a < yb {
            let cell = ((a - s.y0) / s.h + 1e-12).floor();
            let b = (s.y0 + (cell + 1.0) * s.h).min(yb);
            col_int += quad::fixed(&density, a, b, &rule);
            a = b;
        }
        let w = if i == 0 || i == s.nx - 1 { 0.5 } else { 1.0 };
        lhs += w * col_int * s.h;
    }
    let fnl = Nonlinearity::hodograph();
    let mut rhs = 0.0;
    let h = image.h;
    for k in 0..image.ny - 1 {
        for i in 0..image.nx - 1 {
            let (g, _) = crate::grid::cell_gradient(res.utilde.corners(i, k), h);
            rhs += (2.0 * fnl.value(g) + 2.0) * h * h;
        }
    }
    Ok(EnergyCheck { lhs, rhs, defect: (lhs - rhs).abs() / lhs.abs() })
}

/// Discrete Euler-Lagrange residual of `int F(grad w)`: at each interior
/// node, `-sum over cells of DF(grad_c w) . int_c grad phi` divided by
/// `h^2`, which approximates `div DF(grad w)`. Returns the maximum.
pub fn lagrangian_residual(w: &ScalarField, fnl: &Nonlinearity) -> f64 {
    let s = w.spec;
    let h = s.h;
    let flux = |i: usize, j: usize| fnl.grad(crate::grid::cell_gradient(w.corners(i, j), h).0);
    let mut worst: f64 = 0.0;
    for j in 1..s.ny - 1 {
        for i in 1..s.nx - 1 {
            let ll = flux(i - 1, j - 1);
            let lr = flux(i, j - 1);
            let ul = flux(i - 1, j);
            let ur = flux(i, j);
            let r = 0.5 * h * ((ll[0] + ll[1]) + (-lr[0] + lr[1]) + (ul[0] - ul[1]) - (ur[0] + ur[1]));
            worst = worst.max(r.abs() / (h * h));
        }
    }
    worst
}

/// `U` with `dU = d_y u dx - d_x u dy`, `U(0, 0) = 0`, integrated by the
/// trapezoid rule along the row `y = 0` and then vertically. The grid must
/// have a node at the origin.
pub fn harmonic_conjugate(u: &ScalarField) -> Result<ScalarField> {
    let s = u.spec;
    let i0 = s.node_at_x(0.0).ok_or_else(|| Error::InvalidArgument("no grid column at x = 0".into()))?;
    let j0 = s.slit_row().ok_or_else(|| Error::InvalidArgument("no grid row at y = 0".into()))?;
    let (gx, gy) = gradient(u)?;
    let mut out = vec![0.0; s.len()];
    let half = 0.5 * s.h;
    for i in i0 + 1..s.nx {
        out[s.index(i, j0)] = out[s.index(i - 1, j0)] + half * (gy.at(i - 1, j0) + gy.at(i, j0));
    }
    for i in (0..i0).rev() {
        out[s.index(i, j0)] = out[s.index(i + 1, j0)] - half * (gy.at(i + 1, j0) + gy.at(i, j0));
    }
    for i in 0..s.nx {
        for j in j0 + 1..s.ny {
            out[s.index(i, j)] = out[s.index(i, j - 1)] - half * (gx.at(i, j - 1) + gx.at(i, j));
        }
        for j in (0..j0).rev() {
            out[s.index(i, j)] = out[s.index(i, j + 1)] + half * (gx.at(i, j + 1) + gx.at(i, j));
        }
    }
    ScalarField::new(s, out)
}

/// Largest `|loop integral of dU|` over the boundaries of the given 2x2
/// cell blocks (lower-left node indices), trapezoid rule on the nodes.
pub fn loop_defect(u: &ScalarField, corners: &[(usize, usize)]) -> Result<f64> {
    let s = u.spec;
    let (gx, gy) = gradient(u)?;
    let half = 0.5 * s.h;
    let mut worst: f64 = 0.0;
    for &(i, j) in corners {
        if i + 2 >= s.nx || j + 2 >= s.ny {
            return Err(Error::InvalidArgument(format!("loop at ({i}, {j}) leaves the grid")));
        }
        let mut total = 0.0;
        for k in 0..2 {
            total += half * (gy.at(i + k, j) + gy.at(i + k + 1, j));
            total -= half * (gx.at(i + 2, j + k) + gx.at(i + 2, j + k + 1));
            total -= half * (gy.at(i + 2 - k, j + 2) + gy.at(i + 1 - k, j + 2));
            total += half * (gx.at(i, j + 2 - k) + gx.at(i, j + 1 - k));
        }
        worst = worst.max(total.abs());
    }
    Ok(worst)
}

/// Nodes where the path-integrated conjugate cannot be trusted: the
/// gradient stencil of some node on the path from the origin (along the
/// row `y = 0`, then vertically) touches a masked node. Dilated by one node
/// so that bicubic stencils stay clear.
fn conjugate_blocked(s: GridSpec, mask: &[bool]) -> Result<Vec<bool>> {
    let i0 = s.node_at_x(0.0).ok_or_else(|| Error::InvalidArgument("no grid column at x = 0".into()))?;
    let j0 = s.slit_row().ok_or_else(|| Error::InvalidArgument("no grid row at y = 0".into()))?;
    let dirty = |i: usize, j: usize| {
        let k = s.index(i, j);
        mask[k]
            || (i > 0 && mask[k - 1])
            || (i + 1 < s.nx && mask[k + 1])
            || (j > 0 && mask[k - s.nx])
            || (j + 1 < s.ny && mask[k + s.nx])
    };
    let mut bad = vec![false; s.len()];
    let mut row = vec![false; s.nx];
    row[i0] = dirty(i0, j0);
    for i in i0 + 1..s.nx {
        row[i] = row[i - 1] || dirty(i, j0);
    }
    for i in (0..i0).rev() {
        row[i] = row[i + 1] || dirty(i, j0);
    }
    for i in 0..s.nx {
        bad[s.index(i, j0)] = row[i];
        let mut up = row[i];
        for j in j0 + 1..s.ny {
            up = up || dirty(i, j);
            bad[s.index(i, j)] = up;
        }
        let mut down = row[i];
        for j in (0..j0).rev() {
            down = down || dirty(i, j);
            bad[s.index(i, j)] = down;
        }
    }
    let mut out = bad.clone();
    for j in 0..s.ny {
        for i in 0..s.nx {
            if bad[s.index(i, j)] {
                for (di, dj) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                    let (a, b) = (i as isize + di, j as isize + dj);
                    if a >= 0 && b >= 0 && (a as usize) < s.nx && (b as usize) < s.ny {
                        out[s.index(a as usize, b as usize)] = true;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `P = -i (Q + i) / (Q - i)`.
pub fn mobius(q: Complex64) -> Complex64 {
    -I * (q + I) / (q - I)
}

/// Inverse of [`mobius`]: `Q = (1 + i P) / (P + i)`.
pub fn mobius_inverse(p: Complex64) -> Complex64 {
    (1.0 + I * p) / (p + I)
}

/// Poles of the Mobius map closer than this are masked.
pub const POLE_GUARD: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct ConformalReport {
    /// `max |d_x U - d_y u| + |d_y U + d_x u|` at interior nodes.
    pub cauchy_riemann: f64,
    /// `max |f' - d_x' v / d_y' v|` at `(eta(x), 0)`.
    pub slope_identity: f64,
    /// `max |eta' - 1 / d_y' v|` at `(eta(x), 0)`.
    pub eta_prime_identity: f64,
    /// `max ||grad u| |grad v| - 1|` on the image grid.
    pub gradient_product: f64,
    /// `max ||Q| - 1|` on the image row `y' = 0`.
    pub q_modulus: f64,
    /// `max |Im P|` on the image row `y' = 0`.
    pub im_p_boundary: f64,
    /// `max |U(x, f(x)) - eta(x)|`.
    pub eta_error: f64,
    pub image_half_width: f64,
    pub samples: usize,
    pub masked: usize,
    pub pole_masked: usize,
}

#[derive(Debug, Clone)]
pub struct ConformalHodograph {
    pub conjugate: ScalarField,
    /// Image grid `[-a, a]^2` in `(x', y')`.
    pub big_v: ScalarField,
    pub v: ScalarField,
    pub mask: Vec<bool>,
    pub q: Vec<Complex64>,
    pub p: Vec<Complex64>,
    /// `(x, U(x, f(x)), eta(x))`.
    pub eta: Vec<[f64; 3]>,
    pub report: ConformalReport,
}

/// Builds `U`, inverts `T = (U, u)` by Newton on the bicubic interpolants
/// onto a square image grid, and checks the boundary identities. `u` must
/// be harmonic on the whole grid (the extension across the free boundary),
/// vanish on the graph of `f`, and have a node at the origin. `mask` marks
/// input nodes to exclude from the checks.
pub fn conformal_hodograph(u: &ScalarField, f: &AnalyticCurve, mask: Option<&[bool]>) -> Result<ConformalHodograph> {
    let s = u.spec;
    if let Some(m) = mask {
        if m.len() != s.len() {
            return Err(Error::Shape("mask length".into()));
        }
    }
    let big_u = harmonic_conjugate(u)?;
    let blocked = match mask {
        Some(m) => conjugate_blocked(s, m)?,
        None => vec![false; s.len()],
    };
    let masked_in = |k: usize| blocked[k];
    let (ux, uy) = gradient(u)?;
    let (bx, by) = gradient(&big_u)?;
    let mut cauchy_riemann: f64 = 0.0;
    for j in 1..s.ny - 1 {
        for i in 1..s.nx - 1 {
            let k = s.index(i, j);
            if [k, k - 1, k + 1, k - s.nx, k + s.nx].iter().any(|&m| masked_in(m)) {
                continue;
            }
            cauchy_riemann =
                cauchy_riemann.max((bx.values[k] - uy.values[k]).abs() + (by.values[k] + ux.values[k]).abs());
        }
    }

    // Largest square image grid inside T(edge of the unmasked input).
    let mut d = f64::INFINITY;
    for k in 0..s.len() {
        let (i, j) = (k % s.nx, k / s.nx);
        let edge = i == 0 || j == 0 || i == s.nx - 1 || j == s.ny - 1;
        let m = &blocked;
        let near_mask = m[k]
            || (i > 0 && m[k - 1])
            || (i + 1 < s.nx && m[k + 1])
            || (j > 0 && m[k - s.nx])
            || (j + 1 < s.ny && m[k + s.nx]);
        if (edge || near_mask) && !masked_in(k) {
            d = d.min(big_u.values[k].hypot(u.values[k]));
        }
    }
    let half = 0.95 * d / 2f64.sqrt();
    let n = (half / s.h).floor() as usize;
    if n < 2 {
        return Err(Error::DegenerateGrid("image of the grid is too small".into()));
    }
    let image = GridSpec::new(2 * n + 1, 2 * n + 1, -(n as f64) * s.h, -(n as f64) * s.h, s.h)?;

    let forward = |p: [f64; 2]| -> Option<([f64; 2], [f64; 4])> {
        let (a, ga) = big_u.sample_cubic(p[0], p[1])?;
        let (b, gb) = u.sample_cubic(p[0], p[1])?;
        Some(([a, b], [ga[0], ga[1], gb[0], gb[1]]))
    };
    let invert = |w: [f64; 2], start: [f64; 2]| -> Option<[f64; 2]> {
        let mut p = start;
        for _ in 0..50 {
            let (val, j) = forward(p)?;
            let r = [val[0] - w[0], val[1] - w[1]];
            let det = j[0] * j[3] - j[1] * j[2];
            if det.abs() < 1e-12 {
                return None;
            }
            let dx = (j[3] * r[0] - j[1] * r[1]) / det;
            let dy = (-j[2] * r[0] + j[0] * r[1]) / det;
            p = [p[0] - dx, p[1] - dy];
            if dx.hypot(dy) < 1e-13 {
                return Some(p);
            }
        }
        None
    };
    let mut vv = vec![0.0; image.len()];
    let mut v = vec![0.0; image.len()];
    let mut mask_out = vec![false; image.len()];
    for j in 0..image.ny {
        let mut start: Option<[f64; 2]> = None;
        for i in 0..image.nx {
            let k = image.index(i, j);
            let w = [image.x(i), image.y(j)];
            let hit = start.and_then(|st| invert(w, st)).or_else(|| invert(w, w));
            let ok = hit.and_then(|p| s.locate(p[0], p[1]).map(|(ci, cj, _, _)| (p, ci, cj)));
            match ok {
                Some((p, ci, cj)) => {
                    vv[k] = p[0];
                    v[k] = p[1];
                    let b = s.index(ci, cj);
                    let cell_masked = blocked[b] || blocked[b + 1] || blocked[b + s.nx] || blocked[b + s.nx + 1];
                    mask_out[k] = cell_masked;
                    start = Some(p);
                }
                None => {
                    mask_out[k] = true;
                    start = None;
                }
            }
        }
    }
    let big_v = ScalarField::new(image, vv)?;
    let v = ScalarField::new(image, v)?;
    let (vx, vy) = gradient(&v)?;
    let interior = |k: usize| {
        let (i, j) = (k % image.nx, k / image.nx);
        i > 0 && j > 0 && i + 1 < image.nx && j + 1 < image.ny
    };
    let stencil_ok = |k: usize| {
        interior(k)
            && !mask_out[k]
            && !mask_out[k - 1]
            && !mask_out[k + 1]
            && !mask_out[k - image.nx]
            && !mask_out[k + image.nx]
    };

    let mut gradient_product: f64 = 0.0;
    let mut q = vec![Complex64::new(0.0, 0.0); image.len()];
    let mut p = vec![Complex64::new(0.0, 0.0); image.len()];
    let mut pole_masked = 0;
    let j_axis = image.slit_row().expect("image grid is symmetric");
    let (mut q_modulus, mut im_p_boundary): (f64, f64) = (0.0, 0.0);
    for k in 0..image.len() {
        q[k] = Complex64::new(vx.values[k], -vy.values[k]);
        if (q[k] - I).norm() < POLE_GUARD {
            pole_masked += 1;
            continue;
        }
        p[k] = mobius(q[k]);
        if !stencil_ok(k) {
            continue;
        }
        let (_, gu) = u.sample_cubic(big_v.values[k], v.values[k]).expect("preimage inside the grid");
        gradient_product = gradient_product.max((gu[0].hypot(gu[1]) * q[k].norm() - 1.0).abs());
        if k / image.nx == j_axis {
            q_modulus = q_modulus.max((q[k].norm() - 1.0).abs());
            im_p_boundary = im_p_boundary.max(p[k].im.abs());
        }
    }

    // Boundary identities at grid abscissae whose eta stays well inside the image.
    let mut eta = Vec::new();
    let (mut slope_identity, mut eta_prime_identity, mut eta_error): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let lim = image.x_max() - 2.0 * image.h;
    for i in 0..s.nx {
        let x = s.x(i);
        if x.abs() >= f.rho() {
            continue;
        }
        let Some((xe, _)) = big_u.sample_cubic(x, f.value(x)) else { continue };
        if xe.abs() > lim {
            continue;
        }
        let Some((_, ci, cj)) = image.locate(xe, 0.0).map(|c| (c, c.0, c.1)) else { continue };
        let b = image.index(ci, cj);
        if [b, b + 1, b + image.nx, b + image.nx + 1].iter().any(|&k| !stencil_ok(k)) {
            continue;
        }
        let dvx = vx.sample_cubic(xe, 0.0).map(|r| r.0).unwrap_or(f64::NAN);
        let dvy = vy.sample_cubic(xe, 0.0).map(|r| r.0).unwrap_or(f64::NAN);
        let exact = arclength(f, x)?;
        let fp = f.derivative(x);
        slope_identity = slope_identity.max((fp - dvx / dvy).abs());
        eta_prime_identity = eta_prime_identity.max((fp.hypot(1.0) - 1.0 / dvy).abs());
        eta_error = eta_error.max((xe - exact).abs());
        eta.push([x, xe, exact]);
    }
    if eta.is_empty() {
        return Err(Error::DegenerateGrid("no boundary samples inside the image grid".into()));
    }
    let masked = mask_out.iter().filter(|&&m| m).count();
    let report = ConformalReport {
        cauchy_riemann,
        slope_identity,
        eta_prime_identity,
        gradient_product,
        q_modulus,
        im_p_boundary,
        eta_error,
        image_half_width: image.x_max(),
        samples: eta.len(),
        masked,
        pole_masked,
    };
    Ok(ConformalHodograph { conjugate: big_u, big_v, v, mask: mask_out, q, p, eta, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn strip(n: usize) -> GridSpec {
        GridSpec::half_square(n)
    }

    #[test]
    fn linear_fields_invert_exactly() {
        let u = ScalarField::from_fn(strip(16), |_, y| y);
        let r = classical_hodograph(&u).unwrap();
        assert!(r.utilde.max_abs() < 1e-13);
        let u2 = ScalarField::from_fn(strip(16), |_, y| 2.0 * y);
        let r2 = classical_hodograph(&u2).unwrap();
        for k in 0..r2.uprime.spec.len() {
            let z = r2.uprime.spec.y(k / r2.uprime.spec.nx);
            assert!((r2.uprime.values[k] - z / 2.0).abs() < 1e-13);
            assert!((r2.utilde.values[k] + z / 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn perturbed_harmonic_matches_scalar_root_finding() {
        let eps = 0.1;
        let g = |x: f64, y: f64| y + eps * (x * x - y * y) / 2.0;
        let n = 64;
        let u = ScalarField::from_fn(strip(n), g);
        let r = classical_hodograph(&u).unwrap();
        let h = 1.0 / n as f64;
        // closed form of the root of y - eps y^2 / 2 = z - eps x^2 / 2
        let mut worst: f64 = 0.0;
        for k in 0..r.uprime.spec.len() {
            let (s, z) = (r.uprime.spec.x(k % r.uprime.spec.nx), r.uprime.spec.y(k / r.uprime.spec.nx));
            let c = z - eps * s * s / 2.0;
            let y = (1.0 - (1.0 - 2.0 * eps * c).sqrt()) / eps;
            worst = worst.max((r.uprime.values[k] - y).abs());
        }
        // quadratics are reproduced by the column interpolant
        assert!(worst < 1e-10, "{worst}");
        assert!(r.report.round_trip < 1e-12);
        assert!(r.report.identity_s < 10.0 * h * h && r.report.identity_z < 10.0 * h * h, "{:?}", r.report);
    }

    #[test]
    fn non_monotone_columns_are_rejected() {
        let u = ScalarField::from_fn(strip(8), |_, y| (y - 0.5).powi(2));
        assert!(matches!(classical_hodograph(&u), Err(Error::NonInvertible(_))));
    }

    #[test]
    fn energy_identity_converges() {
        let eps = 0.1;
        let mut defects = Vec::new();
        for n in [32, 64] {
            let u = ScalarField::from_fn(strip(n), |x, y| y + eps * (x * x - y * y) / 2.0);
            let r = classical_hodograph(&u).unwrap();
            defects.push(hodograph_energy_check(&u, &r).unwrap().defect);
        }
        assert!(defects[1] < 1e-3);
        assert!(defects[0] / defects[1] > 3.0, "{defects:?}");
        let flat = ScalarField::from_fn(strip(16), |_, y| y);
        let r = classical_hodograph(&flat).unwrap();
        let e = hodograph_energy_check(&flat, &r).unwrap();
        assert!(e.defect < 1e-13);
    }

    #[test]
    fn hodograph_of_harmonic_is_critical() {
        let eps = 0.2;
        let fnl = Nonlinearity::hodograph();
        let mut res = Vec::new();
        for n in [32, 64] {
            let u = ScalarField::from_fn(strip(n), |x, y| y * (1.0 + eps * x));
            let r = classical_hodograph(&u).unwrap();
            res.push(lagrangian_residual(&r.utilde, &fnl));
        }
        assert!(res[0] / res[1] > 3.0, "{res:?}");
        // a non-critical field of the same size is far from critical
        let w = ScalarField::from_fn(strip(64), |x, y| 0.1 * (x * x + y * y));
        assert!(lagrangian_residual(&w, &fnl) > 100.0 * res[1]);
    }

    #[test]
    fn conjugates_of_exact_forms() {
        let spec = GridSpec::new(21, 21, -1.0, -1.0, 0.1).unwrap();
        let u = ScalarField::from_fn(spec, |_, y| y);
        let cu = harmonic_conjugate(&u).unwrap();
        assert!(cu.values.iter().enumerate().all(|(k, v)| (v - spec.x(k % 21)).abs() < 1e-13));
        let u = ScalarField::from_fn(spec, |x, y| x * y);
        let cu = harmonic_conjugate(&u).unwrap();
        for k in 0..spec.len() {
            let (x, y) = (spec.x(k % 21), spec.y(k / 21));
            assert!((cu.values[k] - (x * x - y * y) / 2.0).abs() < 1e-12);
        }
        // twice gives -u
        let back = harmonic_conjugate(&cu).unwrap();
        assert!(back.values.iter().zip(&u.values).all(|(b, a)| (b + a).abs() < 1e-12));
    }

    #[test]
    fn conjugate_of_half_power() {
        // u = Im z^{3/2} on the upper half plane, U = Re z^{3/2}
        let n = 128;
        let spec = GridSpec::half_square(n);
        let pw = |x: f64, y: f64| Complex64::new(x, y).powf(1.5);
        let u = ScalarField::from_fn(spec, |x, y| pw(x, y).im);
        let cu = harmonic_conjugate(&u).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..spec.len() {
            let (x, y) = (spec.x(k % spec.nx), spec.y(k / spec.nx));
            if x.hypot(y) > 0.2 {
                worst = worst.max((cu.values[k] - pw(x, y).re).abs());
            }
        }
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn loops_close_on_harmonic_fields() {
        let spec = GridSpec::new(41, 41, -1.0, -1.0, 0.05).unwrap();
        let u = ScalarField::from_fn(spec, |x, y| x * x - y * y + 0.3 * x * y);
        assert!(loop_defect(&u, &[(3, 4), (20, 20), (37, 1)]).unwrap() < 1e-12);
    }

    #[test]
    fn mobius_round_trip() {
        for q in [Complex64::new(0.3, -0.2), Complex64::new(-1.0, 0.5), Complex64::new(0.0, -1.0)] {
            assert!((mobius_inverse(mobius(q)) - q).norm() < 1e-12);
        }
        assert_eq!(mobius(-I), Complex64::new(0.0, 0.0));
        // |Q| = 1 gives real P
        let q = Complex64::from_polar(1.0, -0.4);
        assert!(mobius(q).im.abs() < 1e-15);
    }

    #[test]
    fn flat_conformal_hodograph() {
        let spec = GridSpec::new(33, 33, -0.5, -0.5, 1.0 / 32.0).unwrap();
        let u = ScalarField::from_fn(spec, |_, y| y);
        let c = conformal_hodograph(&u, &AnalyticCurve::flat(), None).unwrap();
        for k in 0..c.v.spec.len() {
            let (x, y) = (c.v.spec.x(k % c.v.spec.nx), c.v.spec.y(k / c.v.spec.nx));
            assert!((c.v.values[k] - y).abs() < 1e-12 && (c.big_v.values[k] - x).abs() < 1e-12);
            assert!((c.q[k] + I).norm() < 1e-10 && c.p[k].norm() < 1e-10);
        }
        assert!(c.report.eta_error < 1e-12 && c.report.cauchy_riemann < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn mobius_inverts_away_from_the_pole(re in -3.0f64..3.0, im in -3.0f64..3.0) {
            let q = Complex64::new(re, im);
            proptest::prop_assume!((q - I).norm() > 1e-2);
            proptest::prop_assert!((mobius_inverse(mobius(q)) - q).norm() < 1e-9 * (1.0 + q.norm_sqr()));
        }

        // affine data with positive slope in y goes through the transform
        // exactly: u' is affine again and u~ recovers it
        #[test]
        fn affine_fields_round_trip(a in -0.15f64..0.15, b in 1.0f64..2.0) {
            let u = ScalarField::from_fn(strip(16), |x, y| a * x + b * y);
            let res = classical_hodograph(&u).unwrap();
            proptest::prop_assert!(res.report.round_trip < 1e-10, "{:?}", res.report);
        }
    }
}
