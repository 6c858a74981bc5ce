//! Quasiconformal straightening of a det-normalized coefficient field.
//!
//! For `M` symmetric with `det M = 1` the coefficient
//! `mu = (m22 - m11 - 2 i m12) / (m11 + m22 + 2)` (and `nu = 0`) makes every
//! solution of `f_zbar = mu f_z` satisfy `Df^T Df = J M^{-1}`, so that
//! `div(M grad u) = 0` turns into `Laplace(u o f^{-1}) = 0`.
//!
//! The Beltrami equation is solved on a periodic grid by the Neumann series
//! `g <- mu (1 + S g) + nu conj(1 + S g)` for `g = f_zbar`, with the Beurling
//! transform `S` and the Cauchy transform `C` applied as Fourier multipliers.
//! With `zeta = xi1 + i xi2` for the frequency `xi` of `exp(i xi . x)`:
//!
//! ```text
//! S: conj(zeta) / zeta        C: -2 i / zeta        (both 0 at xi = 0)
//! ```

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::frequency::power_fit;
use crate::grid::{GridSpec, MatrixField, ScalarField};

/// Result of [`normalize_det`].
#[derive(Debug, Clone)]
pub struct NormalizedMatrix {
    pub matrix: MatrixField,
    pub det_min: f64,
    pub det_max: f64,
    /// `det A` varies by more than `1e-12` relative. The rescaled field then
    /// defines a different equation from `A`.
    pub det_varies: bool,
}

/// `M = A / sqrt(det A)` pointwise.
pub fn normalize_det(a: &MatrixField) -> Result<NormalizedMatrix> {
    let n = a.spec.len();
    let (mut a11, mut a12, mut a22) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let (det_min, det_max) = a.det_range();
    if !(det_min > 0.0) {
        return Err(Error::Ellipticity(format!("determinant {det_min} is not positive")));
    }
    for k in 0..n {
        let [p, q, r] = a.entry(k);
        let s = (p * r - q * q).sqrt();
        a11.push(p / s);
        a12.push(q / s);
        a22.push(r / s);
    }
    let matrix = MatrixField::new(a.spec, a11, a12, a22)?;
    Ok(NormalizedMatrix { matrix, det_min, det_max, det_varies: det_max - det_min > 1e-12 * det_max })
}

/// Complex coefficients `(mu, nu)` sampled on a grid.
#[derive(Debug, Clone)]
pub struct BeltramiPair {
    pub spec: GridSpec,
    pub mu: Vec<Complex64>,
    pub nu: Vec<Complex64>,
    /// `sup |mu| + |nu|`.
    pub k_ell: f64,
}

impl BeltramiPair {
    pub fn new(spec: GridSpec, mu: Vec<Complex64>, nu: Vec<Complex64>) -> Result<Self> {
        if mu.len() != spec.len() || nu.len() != spec.len() {
            return Err(Error::Shape("coefficient arrays do not match the grid".into()));
        }
        let k_ell = mu.iter().zip(&nu).map(|(a, b)| a.norm() + b.norm()).fold(0.0, f64::max);
        if !k_ell.is_finite() {
            return Err(Error::InvalidArgument("non-finite Beltrami coefficient".into()));
        }
        Ok(Self { spec, mu, nu, k_ell })
    }

    pub fn zero(spec: GridSpec) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); spec.len()];
        Self { spec, mu: z.clone(), nu: z, k_ell: 0.0 }
    }

    pub fn from_fn(spec: GridSpec, f: impl Fn(f64, f64) -> (Complex64, Complex64)) -> Result<Self> {
        let mut mu = Vec::with_capacity(spec.len());
        let mut nu = Vec::with_capacity(spec.len());
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                let (a, b) = f(spec.x(i), spec.y(j));
                mu.push(a);
                nu.push(b);
            }
        }
        Self::new(spec, mu, nu)
    }

    /// Bilinear interpolation clamped to the grid.
    pub fn sample_clamped(&self, x: f64, y: f64) -> (Complex64, Complex64) {
        let s = &self.spec;
        let fx = ((x - s.x0) / s.h).clamp(0.0, (s.nx - 1) as f64);
        let fy = ((y - s.y0) / s.h).clamp(0.0, (s.ny - 1) as f64);
        let i = (fx.floor() as usize).min(s.nx - 2);
        let j = (fy.floor() as usize).min(s.ny - 2);
        let (a, b) = (fx - i as f64, fy - j as f64);
        let k = s.index(i, j);
        let w = [(1.0 - a) * (1.0 - b), a * (1.0 - b), (1.0 - a) * b, a * b];
        let ks = [k, k + 1, k + s.nx, k + s.nx + 1];
        let mut m = Complex64::new(0.0, 0.0);
        let mut n = Complex64::new(0.0, 0.0);
        for (wk, &kk) in w.iter().zip(&ks) {
            m += self.mu[kk] * wk;
            n += self.nu[kk] * wk;
        }
        (m, n)
    }
}

/// Beltrami coefficients of a det-normalized matrix field, in the gauge
/// `nu = 0`.
pub fn beltrami_from_matrix(m: &MatrixField) -> Result<BeltramiPair> {
    let n = m.spec.len();
    let mut mu = Vec::with_capacity(n);
    for k in 0..n {
        let [a, b, c] = m.entry(k);
        let det = a * c - b * b;
        if (det - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!("det M = {det} at index {k}; normalize first")));
        }
        if !(a > 0.0 && c > 0.0) {
            return Err(Error::Ellipticity(format!("matrix at index {k} is not positive definite")));
        }
        mu.push(Complex64::new(c - a, -2.0 * b) / (a + c + 2.0));
    }
    let pair = BeltramiPair::new(m.spec, mu, vec![Complex64::new(0.0, 0.0); n])?;
    if pair.k_ell >= 1.0 {
        return Err(Error::Ellipticity(format!("k = {} is not below 1", pair.k_ell)));
    }
    Ok(pair)
}

/// Det-normalized matrix `M` with `Df^T Df = J M^{-1}` for the linear
/// solution with `f_z = 1`, or `None` when `|mu| + |nu| >= 1`. Inverts
/// [`beltrami_from_matrix`].
pub fn matrix_from_beltrami(mu: Complex64, nu: Complex64) -> Option<[f64; 3]> {
    if mu.norm() + nu.norm() >= 1.0 {
        return None;
    }
    let fz = Complex64::new(1.0, 0.0);
    let fzb = mu + nu;
    // f_x = f_z + f_zbar, f_y = i (f_z - f_zbar)
    let (d11, d21) = ((fz + fzb).re, (fz + fzb).im);
    let (d12, d22) = ((fzb - fz).im, (fz - fzb).re);
    let j = d11 * d22 - d12 * d21;
    let g11 = (d11 * d11 + d21 * d21) / j;
    let g12 = (d11 * d12 + d21 * d22) / j;
    let g22 = (d12 * d12 + d22 * d22) / j;
    Some([g22, -g12, g11])
}

/// Extend coefficients from the upper half to the whole plane:
/// `conj(mu(conj z))` below the axis, the real part on it, zero outside
/// the unit disk.
pub fn reflect_coefficients(p: &BeltramiPair) -> Result<BeltramiPair> {
    let s = p.spec;
    if s.y0 < -1e-12 * s.h {
        return Err(Error::InvalidArgument("coefficients must be given on the upper half-plane".into()));
    }
    let on_axis = s.y0.abs() <= 1e-12 * s.h;
    let below = if on_axis { s.ny - 1 } else { s.ny };
    let ny = below + s.ny;
    let spec = GridSpec { nx: s.nx, ny, x0: s.x0, y0: -s.y_max(), h: s.h };
    let mut mu = Vec::with_capacity(spec.len());
    let mut nu = Vec::with_capacity(spec.len());
    for j in 0..ny {
        let (src, lower) = if j < below { (s.ny - 1 - j, true) } else { (j - below, false) };
        let axis = on_axis && src == 0;
        for i in 0..s.nx {
            let (x, y) = (spec.x(i), spec.y(j));
            let k = s.index(i, src);
            let (m, n) = if x * x + y * y >= 1.0 {
                (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0))
            } else if axis {
                (Complex64::new(p.mu[k].re, 0.0), Complex64::new(p.nu[k].re, 0.0))
            } else if lower {
                (p.mu[k].conj(), p.nu[k].conj())
            } else {
                (p.mu[k], p.nu[k])
            };
            mu.push(m);
            nu.push(n);
        }
    }
    BeltramiPair::new(spec, mu, nu)
}

/// Periodic grid parameters for [`solve_beltrami_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeltramiOptions {
    /// Output grid points per axis.
    pub n: usize,
    /// Output window `[-half_width, half_width)^2`.
    pub half_width: f64,
    /// The periodic grid is `padding` times larger in each direction.
    pub padding: usize,
}

impl Default for BeltramiOptions {
    fn default() -> Self {
        Self { n: 512, half_width: 2.0, padding: 2 }
    }
}

/// Normalized solution `f(0) = 0`, `f(1) = 1` sampled on the output window.
#[derive(Debug, Clone)]
pub struct QuasiconformalMap {
    pub spec: GridSpec,
    pub values: Vec<Complex64>,
    pub report: BeltramiReport,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct BeltramiReport {
    pub k_ell: f64,
    /// `(1 + k) / (1 - k)`.
    pub distortion: f64,
    pub iterations: usize,
    pub converged: bool,
    /// L2 norms of successive changes of `g`.
    pub increments: Vec<f64>,
    /// Largest ratio of successive increments above the rounding floor.
    pub contraction_rate: f64,
    pub residual_f0: f64,
    pub residual_f1: f64,
    /// `max |f(conj z) - conj f(z)|` over the window.
    pub symmetry_defect: f64,
    /// Share of nodes in `B_0.9` with positive discrete Jacobian.
    pub jacobian_positive: f64,
    /// Fit `min_{|z| = r} |f(z)| ~ c r^delta` on `r = 2^-7 .. 2^-2`.
    pub delta_est: f64,
    pub delta_c: f64,
}

struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl Fft2 {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        Self { n, fwd, inv, scratch: vec![Complex64::new(0.0, 0.0); n * n] }
    }

    fn transform(&mut self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let plan = if inverse { &self.inv } else { &self.fwd };
        plan.process(data);
        transpose(data, &mut self.scratch, n);
        plan.process(&mut self.scratch);
        transpose(&self.scratch, data, n);
        if inverse {
            let s = 1.0 / (n * n) as f64;
            data.iter_mut().for_each(|v| *v *= s);
        }
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    const B: usize = 32;
    for jb in (0..n).step_by(B) {
        for ib in (0..n).step_by(B) {
            for j in jb..(jb + B).min(n) {
                for i in ib..(ib + B).min(n) {
                    dst[i * n + j] = src[j * n + i];
                }
            }
        }
    }
}

/// Frequency `2 pi k / (n h)` of FFT bin `k`.
fn frequency(k: usize, n: usize, h: f64) -> f64 {
    let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
    2.0 * std::f64::consts::PI * kk / (n as f64 * h)
}

/// Multiplier table; Nyquist bins are zeroed so that the operators commute
/// with the reflection `z -> conj z`.
fn multiplier(n: usize, h: f64, f: impl Fn(Complex64) -> Complex64) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    for j in 0..n {
        if j == n / 2 {
            continue;
        }
        let xi2 = frequency(j, n, h);
        for i in 0..n {
            if i == n / 2 {
                continue;
            }
            let zeta = Complex64::new(frequency(i, n, h), xi2);
            if zeta.norm_sqr() > 0.0 {
                out[j * n + i] = f(zeta);
            }
        }
    }
    out
}

/// Beurling transform of a periodic field on an `n x n` grid of spacing `h`;
/// an isometry on mean-zero fields without Nyquist content.
pub fn beurling(values: &[Complex64], n: usize, h: f64) -> Vec<Complex64> {
    let mut fft = Fft2::new(n);
    let sym = multiplier(n, h, |z| z.conj() / z);
    let mut d = values.to_vec();
    fft.transform(&mut d, false);
    d.iter_mut().zip(&sym).for_each(|(v, s)| *v *= s);
    fft.transform(&mut d, true);
    d
}

/// [`solve_beltrami_with`] on the default `512 x 512` window `[-2, 2)^2`.
pub fn solve_beltrami(p: &BeltramiPair, tol: f64, max_iter: usize) -> Result<QuasiconformalMap> {
    solve_beltrami_with(p, tol, max_iter, &BeltramiOptions::default())
}

/// Fixed-point solution of `f_zbar = mu f_z + nu conj(f_z)`, `f - z`
/// periodic, normalized to `f(0) = 0`, `f(1) = 1`. Coefficients are
/// sampled bilinearly from `p` inside its grid and set to zero outside.
pub fn solve_beltrami_with(
    p: &BeltramiPair,
    tol: f64,
    max_iter: usize,
    opts: &BeltramiOptions,
) -> Result<QuasiconformalMap> {
    if p.k_ell >= 1.0 {
        return Err(Error::Ellipticity(format!("k = {} is not below 1", p.k_ell)));
    }
    if !(tol > 0.0) || opts.n < 8 || opts.padding < 1 || !(opts.half_width > 1.0) {
        return Err(Error::InvalidArgument("invalid Beltrami solver options".into()));
    }
    let h = 2.0 * opts.half_width / opts.n as f64;
    let one = (1.0 / h).round();
    if (one * h - 1.0).abs() > 1e-12 || !opts.n.is_multiple_of(2) {
        return Err(Error::InvalidArgument("grid must contain the nodes 0 and 1".into()));
    }
    let n = opts.n * opts.padding;
    let lo = -(n as f64) * h / 2.0;
    let ps = &p.spec;
    let inside =
        |x: f64, y: f64| x >= ps.x0 - 1e-12 && x <= ps.x_max() + 1e-12 && y >= ps.y0 - 1e-12 && y <= ps.y_max() + 1e-12;
    let zero = Complex64::new(0.0, 0.0);
    let mut mu = vec![zero; n * n];
    let mut nu = vec![zero; n * n];
    for j in 0..n {
        let y = lo + j as f64 * h;
        for i in 0..n {
            let x = lo + i as f64 * h;
            if inside(x, y) {
                let (a, b) = p.sample_clamped(x, y);
                mu[j * n + i] = a;
                nu[j * n + i] = b;
            }
        }
    }
    let mut fft = Fft2::new(n);
    let s_sym = multiplier(n, h, |z| z.conj() / z);
    let c_sym = multiplier(n, h, |z| Complex64::new(0.0, -2.0) / z);
    let has_nu = nu.iter().any(|v| v.norm_sqr() > 0.0);

    let mut report =
        BeltramiReport { k_ell: p.k_ell, distortion: (1.0 + p.k_ell) / (1.0 - p.k_ell), ..Default::default() };
    let mut g = vec![zero; n * n];
    let mut work = vec![zero; n * n];
    let area = (h * h).sqrt();
    for it in 1..=max_iter {
        work.copy_from_slice(&g);
        fft.transform(&mut work, false);
        work.iter_mut().zip(&s_sym).for_each(|(v, s)| *v *= s);
        fft.transform(&mut work, true);
        let mut inc = 0.0;
        for k in 0..n * n {
            let fz = Complex64::new(1.0, 0.0) + work[k];
            let mut new = mu[k] * fz;
            if has_nu {
                new += nu[k] * fz.conj();
            }
            inc += (new - g[k]).norm_sqr();
            g[k] = new;
        }
        let inc = inc.sqrt() * area;
        report.increments.push(inc);
        report.iterations = it;
        if inc <= tol {
            report.converged = true;
            break;
        }
    }
    report.contraction_rate =
        report.increments.windows(2).filter(|w| w[0] > 1e-11 && w[1] > 1e-11).map(|w| w[1] / w[0]).fold(0.0, f64::max);

    // f = z + m zbar + C[g - m]
    let mean = g.iter().sum::<Complex64>() / (n * n) as f64;
    work.iter_mut().zip(&g).for_each(|(w, v)| *w = v - mean);
    fft.transform(&mut work, false);
    work.iter_mut().zip(&c_sym).for_each(|(v, s)| *v *= s);
    fft.transform(&mut work, true);
    let z_at = |i: usize, j: usize| Complex64::new(lo + i as f64 * h, lo + j as f64 * h);
    for j in 0..n {
        for i in 0..n {
            let z = z_at(i, j);
            work[j * n + i] += z + mean * z.conj();
        }
    }
    let i0 = n / 2;
    let i1 = i0 + one as usize;
    let f0 = work[i0 * n + i0];
    let f1 = work[i0 * n + i1];
    let scale = f1 - f0;
    if scale.norm() < 1e-12 {
        return Err(Error::NonInvertible("f(1) = f(0)".into()));
    }
    let off = (n - opts.n) / 2;
    let spec = GridSpec::new(opts.n, opts.n, -opts.half_width, -opts.half_width, h)?;
    let mut values = Vec::with_capacity(spec.len());
    for j in 0..opts.n {
        for i in 0..opts.n {
            values.push((work[(j + off) * n + i + off] - f0) / scale);
        }
    }
    let mut map = QuasiconformalMap { spec, values, report };
    map.finish_report();
    Ok(map)
}

impl QuasiconformalMap {
    /// Identity map on the given window.
    pub fn identity(spec: GridSpec) -> Self {
        let mut values = Vec::with_capacity(spec.len());
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                values.push(Complex64::new(spec.x(i), spec.y(j)));
            }
        }
        let mut m =
            Self { spec, values, report: BeltramiReport { distortion: 1.0, converged: true, ..Default::default() } };
        m.finish_report();
        m
    }

    fn finish_report(&mut self) {
        let s = self.spec;
        let f0 = self.eval(Complex64::new(0.0, 0.0));
        let f1 = self.eval(Complex64::new(1.0, 0.0));
        self.report.residual_f0 = f0.map_or(f64::NAN, |v| v.norm());
        self.report.residual_f1 = f1.map_or(f64::NAN, |v| (v - 1.0).norm());
        // node (i, j) mirrors to (i, 2 j0 - j) about the row y = 0
        let j0 = (-s.y0 / s.h).round() as isize;
        let mut sym = 0.0_f64;
        for j in 0..s.ny as isize {
            let jm = 2 * j0 - j;
            if jm < 0 || jm >= s.ny as isize {
                continue;
            }
            for i in 0..s.nx {
                let a = self.values[s.index(i, j as usize)];
                let b = self.values[s.index(i, jm as usize)];
                sym = sym.max((b - a.conj()).norm());
            }
        }
        self.report.symmetry_defect = sym;
        let (mut pos, mut tot) = (0usize, 0usize);
        for j in 1..s.ny - 1 {
            for i in 1..s.nx - 1 {
                let (x, y) = (s.x(i), s.y(j));
                if x * x + y * y >= 0.81 {
                    continue;
                }
                let fx = (self.values[s.index(i + 1, j)] - self.values[s.index(i - 1, j)]) / (2.0 * s.h);
                let fy = (self.values[s.index(i, j + 1)] - self.values[s.index(i, j - 1)]) / (2.0 * s.h);
                tot += 1;
                if fx.re * fy.im - fx.im * fy.re > 0.0 {
                    pos += 1;
                }
            }
        }
        self.report.jacobian_positive = if tot > 0 { pos as f64 / tot as f64 } else { f64::NAN };
        let radii: Vec<f64> = (2..=7).rev().map(|k| 0.5f64.powi(k)).collect();
        let mins: Vec<f64> = radii
            .iter()
            .map(|&r| {
                (0..256)
                    .filter_map(|t| {
                        let th = 2.0 * std::f64::consts::PI * t as f64 / 256.0;
                        self.eval(Complex64::from_polar(r, th)).map(|v| v.norm())
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        if mins.iter().all(|&m| m > 0.0 && m.is_finite()) {
            let (c, d) = power_fit(&radii, &mins);
            self.report.delta_est = d;
            self.report.delta_c = c;
        } else {
            self.report.delta_est = f64::NAN;
            self.report.delta_c = f64::NAN;
        }
    }

    fn locate(&self, z: Complex64) -> Option<(usize, usize, f64, f64)> {
        self.spec.locate(z.re, z.im)
    }

    /// Bilinear interpolation of `f`.
    pub fn eval(&self, z: Complex64) -> Option<Complex64> {
        let (i, j, a, b) = self.locate(z)?;
        let s = &self.spec;
        let k = s.index(i, j);
        let v = &self.values;
        Some(
            v[k] * ((1.0 - a) * (1.0 - b))
                + v[k + 1] * (a * (1.0 - b))
                + v[k + s.nx] * ((1.0 - a) * b)
                + v[k + s.nx + 1] * (a * b),
        )
    }

    /// Value and the real Jacobian `[[dRe/dx, dRe/dy], [dIm/dx, dIm/dy]]`
    /// of the bilinear interpolant.
    fn eval_jac(&self, z: Complex64) -> Option<(Complex64, [[f64; 2]; 2])> {
        let (i, j, a, b) = self.locate(z)?;
        let s = &self.spec;
        let k = s.index(i, j);
        let v = &self.values;
        let (v00, v10, v01, v11) = (v[k], v[k + 1], v[k + s.nx], v[k + s.nx + 1]);
        let val = v00 * ((1.0 - a) * (1.0 - b)) + v10 * (a * (1.0 - b)) + v01 * ((1.0 - a) * b) + v11 * (a * b);
        let dx = ((v10 - v00) * (1.0 - b) + (v11 - v01) * b) / s.h;
        let dy = ((v01 - v00) * (1.0 - a) + (v11 - v10) * a) / s.h;
        Some((val, [[dx.re, dy.re], [dx.im, dy.im]]))
    }

    /// Solve `f(z) = w` by Newton from `start`: step tolerance `1e-10`,
    /// at most 50 steps.
    pub fn invert(&self, w: Complex64, start: Complex64) -> Result<Complex64> {
        let mut z = start;
        for _ in 0..50 {
            let (v, j) = self.eval_jac(z).ok_or_else(|| Error::Newton(format!("iterate {z} left the grid")))?;
            let r = v - w;
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if !(det.abs() > 1e-300) {
                return Err(Error::Newton(format!("singular Jacobian at {z}")));
            }
            let dx = (j[1][1] * r.re - j[0][1] * r.im) / det;
            let dy = (-j[1][0] * r.re + j[0][0] * r.im) / det;
            z -= Complex64::new(dx, dy);
            if dx.hypot(dy) <= 1e-10 {
                return Ok(z);
            }
        }
        Err(Error::Newton(format!("no convergence for target {w}")))
    }
}

/// `h = u o f^{-1}` on the grid of `u`, with the mask of nodes where the
/// preimage was found inside the upper half of the unit disk.
#[derive(Debug, Clone)]
pub struct Pullback {
    pub field: ScalarField,
    pub mask: Vec<bool>,
    pub masked: usize,
}

/// Compose `u` with the inverse of `f`. Nodes whose Newton inversion fails,
/// or whose preimage falls outside the closed upper unit half-disk, are
/// masked (value zero).
pub fn pullback(u: &ScalarField, f: &QuasiconformalMap) -> Result<Pullback> {
    let s = u.spec;
    let mut values = vec![0.0; s.len()];
    let mut mask = vec![false; s.len()];
    let tol = 1e-9;
    for j in 0..s.ny {
        let mut guess: Option<Complex64> = None;
        for i in 0..s.nx {
            let w = Complex64::new(s.x(i), s.y(j));
            let k = s.index(i, j);
            let attempt = guess.and_then(|g| f.invert(w, g).ok()).or_else(|| f.invert(w, w).ok());
            let Some(z) = attempt else {
                guess = None;
                continue;
            };
            guess = Some(z);
            let z = if z.im.abs() <= tol { Complex64::new(z.re, 0.0) } else { z };
            if z.im < 0.0 || z.norm() > 1.0 + tol {
                continue;
            }
            if let Some(v) = u.sample(z.re, z.im.max(0.0)) {
                values[k] = v;
                mask[k] = true;
            }
        }
    }
    let masked = mask.iter().filter(|m| !**m).count();
    Ok(Pullback { field: ScalarField { spec: s, values }, mask, masked })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matrix_round_trip(l in 0.2f64..5.0, th in 0.0f64..std::f64::consts::PI) {
            let (c, s) = (th.cos(), th.sin());
            let (l1, l2) = (l, 1.0 / l);
            let m = [c * c * l1 + s * s * l2, c * s * (l1 - l2), s * s * l1 + c * c * l2];
            let spec = GridSpec::new(3, 3, 0.0, 0.0, 1.0).unwrap();
            let mf = MatrixField::from_fn(spec, |_, _| m).unwrap();
            let p = beltrami_from_matrix(&mf).unwrap();
            let back = matrix_from_beltrami(p.mu[0], p.nu[0]).unwrap();
            for k in 0..3 {
                prop_assert!((back[k] - m[k]).abs() <= 1e-10 * l.max(1.0 / l));
            }
            prop_assert!(p.k_ell <= (l1 - l2).abs() / (l1 + l2) + 1e-15);
        }
    }

    #[test]
    fn normalize_examples() {
        let spec = GridSpec::half_square(4).cells();
        let four = MatrixField::from_fn(spec, |_, _| [4.0, 0.0, 4.0]).unwrap();
        let m = normalize_det(&four).unwrap();
        assert!(m.matrix.a11.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!(!m.det_varies);
        let d = MatrixField::from_fn(spec, |_, _| [2.0, 0.0, 0.5]).unwrap();
        assert_eq!(normalize_det(&d).unwrap().matrix, d);
        let var = MatrixField::from_fn(spec, |x, _| [1.0 + x * x, 0.0, 1.0]).unwrap();
        assert!(normalize_det(&var).unwrap().det_varies);
    }

    #[test]
    fn diagonal_matrix_coefficient() {
        let spec = GridSpec::half_square(4).cells();
        let m = MatrixField::from_fn(spec, |_, _| [2.0, 0.0, 0.5]).unwrap();
        let p = beltrami_from_matrix(&m).unwrap();
        assert!((p.mu[0] - Complex64::new(-1.0 / 3.0, 0.0)).norm() < 1e-15);
        // the linear map (x / sqrt 2, sqrt 2 y) has f_zbar / f_z = mu
        let (a, b) = ((0.5f64.sqrt() + 2f64.sqrt()) / 2.0, (0.5f64.sqrt() - 2f64.sqrt()) / 2.0);
        assert!((b / a - p.mu[0].re).abs() < 1e-15);
        assert!(p.k_ell <= (2.0 - 0.5) / (2.0 + 0.5));
    }

    #[test]
    fn reflection_examples() {
        let spec = GridSpec::new(9, 5, -1.0, 0.0, 0.25).unwrap();
        let p = BeltramiPair::from_fn(spec, |_, _| (Complex64::new(0.0, 0.3), Complex64::new(0.0, 0.0))).unwrap();
        let r = reflect_coefficients(&p).unwrap();
        assert_eq!(r.spec.ny, 9);
        let s = r.spec;
        let lower = r.mu[s.index(4, 2)];
        let upper = r.mu[s.index(4, 6)];
        assert_eq!(lower, Complex64::new(0.0, -0.3));
        assert_eq!(upper, Complex64::new(0.0, 0.3));
        assert_eq!(r.mu[s.index(4, 4)], Complex64::new(0.0, 0.0));
        assert_eq!(r.mu[s.index(0, 4)], Complex64::new(0.0, 0.0));
        assert!((r.k_ell - 0.3).abs() < 1e-15);
    }

    #[test]
    fn beurling_is_an_isometry_on_mean_zero_fields() {
        let n = 64;
        let h = 4.0 / n as f64;
        let mut v = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                let (x, y) = (i as f64 * h, j as f64 * h);
                let (a, b) = (std::f64::consts::PI * x / 2.0, std::f64::consts::PI * y / 2.0);
                v.push(Complex64::new((3.0 * a).sin() * (b).cos() + 0.3, (a + 2.0 * b).cos() * (5.0 * b).sin()));
            }
        }
        let m = v.iter().sum::<Complex64>() / (n * n) as f64;
        v.iter_mut().for_each(|z| *z -= m);
        let s = beurling(&v, n, h);
        let e0: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        let e1: f64 = s.iter().map(|z| z.norm_sqr()).sum();
        assert!((e0 - e1).abs() <= 1e-10 * e0);
    }

    #[test]
    fn zero_coefficients_give_identity() {
        let spec = GridSpec::new(9, 5, -1.0, 0.0, 0.25).unwrap();
        let p = reflect_coefficients(&BeltramiPair::zero(spec)).unwrap();
        let opts = BeltramiOptions { n: 64, half_width: 2.0, padding: 1 };
        let f = solve_beltrami_with(&p, 1e-12, 10, &opts).unwrap();
        let id = QuasiconformalMap::identity(f.spec);
        let err = f.values.iter().zip(&id.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
        assert!(f.report.converged);
    }

    #[test]
    fn inversion_of_identity() {
        let spec = GridSpec::new(65, 65, -2.0, -2.0, 1.0 / 16.0).unwrap();
        let id = QuasiconformalMap::identity(spec);
        let w = Complex64::new(0.3, 0.7);
        assert!((id.invert(w, Complex64::new(0.0, 0.0)).unwrap() - w).norm() < 1e-12);
        let u = ScalarField::from_fn(GridSpec::half_square(16), |x, y| x * y + y);
        let pb = pullback(&u, &id).unwrap();
        for k in 0..u.values.len() {
            if pb.mask[k] {
                assert!((pb.field.values[k] - u.values[k]).abs() < 1e-9);
            }
        }
    }
}
