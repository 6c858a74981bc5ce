//! One-phase solutions with a prescribed analytic free boundary.
//!
//! Given `f` with `f(0) = f'(0) = 0` the pipeline computes the arclength
//! `eta`, the pair `(alpha, beta)` on the unit circle with
//! `f' = alpha / beta` and `eta' = 1 / beta` along the curve, extends
//! `Q = alpha - i beta` holomorphically, integrates `G' = i Q` and inverts
//! `S = (Re G, Im G)`. The second component of `S^{-1}` vanishes exactly on
//! the graph of `f` and has unit gradient there.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};
use crate::quad;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Largest admissible tail of the truncated series on the working disk.
pub const TAIL_LIMIT: f64 = 1e-10;
pub const DEFAULT_TAYLOR_DEGREE: usize = 24;
/// Newton steps in `x` below this are accepted.
const NEWTON_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Flat,
    Catenary,
    Parabola(f64),
    Polynomial(Vec<f64>),
}

/// Analytic graph `y = f(x)` through the origin with horizontal tangent.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticCurve {
    shape: Shape,
    name: String,
    rho: f64,
}

impl AnalyticCurve {
    pub fn flat() -> Self {
        Self { shape: Shape::Flat, name: "flat".into(), rho: 1.0 }
    }

    /// `cosh x - 1` on `|x| < asinh 1`, where `|f'| <= 1`.
    pub fn catenary() -> Self {
        Self { shape: Shape::Catenary, name: "catenary".into(), rho: 1f64.asinh() }
    }

    /// `eps x^2`.
    pub fn parabola(eps: f64) -> Result<Self> {
        if !eps.is_finite() {
            return Err(Error::InvalidArgument(format!("parabola coefficient {eps}")));
        }
        let rho = if eps == 0.0 { 1.0 } else { (0.5 / eps.abs()).min(1.0) };
        Ok(Self { shape: Shape::Parabola(eps), name: format!("parabola:{eps}"), rho })
    }

    /// `sum c_k x^k`; requires `c_0 = c_1 = 0`. The validity radius is the
    /// largest `r <= 1` with `|f'| <= 1` on `[-r, r]`.
    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coefficient".into()));
        }
        if coeffs.first().is_some_and(|c| *c != 0.0) || coeffs.get(1).is_some_and(|c| *c != 0.0) {
            return Err(Error::InvalidArgument("curve must satisfy f(0) = f'(0) = 0".into()));
        }
        let mut curve = Self { shape: Shape::Polynomial(coeffs), name: "coefficients".into(), rho: 1.0 };
        let steps = 2000;
        for k in 1..=steps {
            let x = k as f64 / steps as f64;
            if curve.derivative(x).abs() > 1.0 || curve.derivative(-x).abs() > 1.0 {
                curve.rho = (k - 1) as f64 / steps as f64;
                break;
            }
        }
        if curve.rho <= 0.0 {
            return Err(Error::InvalidArgument("|f'| exceeds 1 arbitrarily close to 0".into()));
        }
        Ok(curve)
    }

    /// Whitespace or comma separated coefficients `c_0 c_1 ...`; `#` starts
    /// a comment.
    pub fn parse_coefficients(text: &str) -> Result<Self> {
        let mut coeffs = Vec::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("");
            for tok in line.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
                coeffs.push(crate::io::parse_real(tok).map_err(|_| Error::Parse(format!("bad coefficient {tok:?}")))?);
            }
        }
        if coeffs.is_empty() {
            return Err(Error::Parse("no coefficients".into()));
        }
        Self::polynomial(coeffs)
    }

    /// `flat`, `catenary`, `parabola` (`eps = 0.1`), `parabola:<eps>`, or a
    /// path to a coefficient file.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "flat" => Ok(Self::flat()),
            "catenary" => Ok(Self::catenary()),
            "parabola" => Self::parabola(0.1),
            _ => {
                if let Some(eps) = name.strip_prefix("parabola:") {
                    let eps = crate::io::parse_real(eps).map_err(|_| Error::Parse(format!("bad curve {name:?}")))?;
                    return Self::parabola(eps);
                }
                let path = Path::new(name);
                if path.is_file() {
                    let mut c = Self::parse_coefficients(&std::fs::read_to_string(path)?)?;
                    c.name = name.to_string();
                    return Ok(c);
                }
                Err(Error::InvalidArgument(format!("unknown curve {name:?}")))
            }
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn value(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Flat => 0.0,
            Shape::Catenary => x.cosh() - 1.0,
            Shape::Parabola(e) => e * x * x,
            Shape::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ck| acc * x + ck),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Flat => 0.0,
            Shape::Catenary => x.sinh(),
            Shape::Parabola(e) => 2.0 * e * x,
            Shape::Polynomial(c) => {
                c.iter().enumerate().skip(1).rev().fold(0.0, |acc, (k, &ck)| acc * x + k as f64 * ck)
            }
        }
    }

    /// Taylor coefficients of `f` about 0 up to `degree`.
    pub fn taylor(&self, degree: usize) -> Vec<f64> {
        let mut out = vec![0.0; degree + 1];
        match &self.shape {
            Shape::Flat => {}
            Shape::Catenary => {
                let mut fact = 1.0;
                for (k, slot) in out.iter_mut().enumerate().skip(1) {
                    fact *= k as f64;
                    if k % 2 == 0 {
                        *slot = 1.0 / fact;
                    }
                }
            }
            Shape::Parabola(e) => {
                if degree >= 2 {
                    out[2] = *e;
                }
            }
            Shape::Polynomial(c) => {
                for (slot, &ck) in out.iter_mut().zip(c) {
                    *slot = ck;
                }
            }
        }
        out
    }

    fn check(&self, x: f64) -> Result<()> {
        if !(x.abs() < self.rho) {
            return Err(Error::RadiusTooLarge { radius: x.abs(), max: self.rho });
        }
        Ok(())
    }
}

/// `eta(x) = integral from 0 to x of sqrt(1 + f'^2)`.
pub fn arclength(f: &AnalyticCurve, x: f64) -> Result<f64> {
    f.check(x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    let g = |t: f64| f.derivative(t).hypot(1.0);
    Ok(quad::adaptive(g, 0.0, x, 1e-13 * x.abs().max(1e-3)))
}

/// Samplers of `alpha` and `beta` on the arclength range of a curve.
#[derive(Debug, Clone)]
pub struct CircleCoefficients {
    curve: AnalyticCurve,
    /// `eta(-rho')` and `eta(rho')` for `rho'` slightly inside the validity radius.
    pub s_range: (f64, f64),
}

pub fn coefficients_alpha_beta(f: &AnalyticCurve) -> Result<CircleCoefficients> {
    let r = f.rho * (1.0 - 1e-9);
    Ok(CircleCoefficients { curve: f.clone(), s_range: (arclength(f, -r)?, arclength(f, r)?) })
}

impl CircleCoefficients {
    pub fn curve(&self) -> &AnalyticCurve {
        &self.curve
    }

    /// Largest symmetric interval `[-s, s]` inside the arclength range.
    pub fn symmetric_range(&self) -> f64 {
        (-self.s_range.0).min(self.s_range.1)
    }

    /// `eta^{-1}(s)` by Newton from `x = s`.
    pub fn inverse_arclength(&self, s: f64) -> Result<f64> {
        if !(s > self.s_range.0 && s < self.s_range.1) {
            return Err(Error::RadiusTooLarge { radius: s.abs(), max: self.symmetric_range() });
        }
        let f = &self.curve;
        let mut x = s.clamp(-f.rho * 0.999, f.rho * 0.999);
        for _ in 0..60 {
            let step = (arclength(f, x)? - s) / f.derivative(x).hypot(1.0);
            let next = x - step;
            x = if next.abs() < f.rho { next } else { 0.5 * (x + f.rho.copysign(next)) };
            if step.abs() <= NEWTON_TOL {
                return Ok(x);
            }
        }
        Err(Error::Newton(format!("arclength inversion at s = {s} did not converge")))
    }

    /// `(alpha(s), beta(s)) = (f'(x), 1) / sqrt(1 + f'(x)^2)` with `x = eta^{-1}(s)`.
    pub fn alpha_beta(&self, s: f64) -> Result<(f64, f64)> {
        let x = self.inverse_arclength(s)?;
        let d = self.curve.derivative(x);
        let n = d.hypot(1.0);
        Ok((d / n, 1.0 / n))
    }

    /// `max |alpha^2 + beta^2 - 1|` over `samples` points of the symmetric range.
    pub fn circle_defect(&self, samples: usize) -> Result<f64> {
        let r = self.symmetric_range() * 0.999;
        let mut worst: f64 = 0.0;
        for k in 0..samples {
            let s = -r + 2.0 * r * k as f64 / (samples - 1).max(1) as f64;
            let (a, b) = self.alpha_beta(s)?;
            worst = worst.max((a * a + b * b - 1.0).abs());
        }
        Ok(worst)
    }
}

/// Truncated power series `sum a_k z^k` with its working disk.
#[derive(Debug, Clone, Serialize)]
pub struct HolomorphicSeries {
    #[serde(serialize_with = "ser_complex")]
    pub coeffs: Vec<Complex64>,
    pub radius: f64,
    pub convergence_radius: f64,
    /// Bound on `sum over k > degree of |a_k| radius^k`.
    pub tail: f64,
}

fn ser_complex<S: serde::Serializer>(v: &[Complex64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for c in v {
        seq.serialize_element(&[c.re, c.im])?;
    }
    seq.end()
}

impl HolomorphicSeries {
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    pub fn derivative(&self) -> HolomorphicSeries {
        let coeffs = if self.coeffs.len() <= 1 {
            vec![Complex64::new(0.0, 0.0)]
        } else {
            self.coeffs.iter().enumerate().skip(1).map(|(k, &c)| c * k as f64).collect()
        };
        HolomorphicSeries { coeffs, ..self.clone() }
    }

    /// Primitive vanishing at 0.
    pub fn primitive(&self) -> HolomorphicSeries {
        let mut coeffs = vec![Complex64::new(0.0, 0.0)];
        coeffs.extend(self.coeffs.iter().enumerate().map(|(k, &c)| c / (k + 1) as f64));
        HolomorphicSeries { coeffs, ..self.clone() }
    }

    pub fn scale(&self, c: Complex64) -> HolomorphicSeries {
        HolomorphicSeries { coeffs: self.coeffs.iter().map(|&a| a * c).collect(), ..self.clone() }
    }
}

/// Taylor coefficients of `Q = alpha - i beta` about 0 from a Chebyshev
/// interpolant on the whole symmetric arclength range.
#[derive(Debug, Clone)]
pub struct TaylorFit {
    pub coeffs: Vec<Complex64>,
    pub fit_radius: f64,
}

const CHEBYSHEV_NODES: usize = 128;

pub fn taylor_fit(ab: &CircleCoefficients) -> Result<TaylorFit> {
    let r = ab.symmetric_range() * 0.999;
    let m = CHEBYSHEV_NODES;
    let mut samples = Vec::with_capacity(m);
    for k in 0..m {
        let theta = PI * (k as f64 + 0.5) / m as f64;
        let (a, b) = ab.alpha_beta(r * theta.cos())?;
        samples.push((theta, Complex64::new(a, -b)));
    }
    let mut cheb = vec![Complex64::new(0.0, 0.0); m];
    for (j, c) in cheb.iter_mut().enumerate() {
        // cos(j (2k + 1) pi / 2m) with the angle reduced exactly.
        let sum: Complex64 = samples
            .iter()
            .enumerate()
            .map(|(k, &(_, q))| q * (PI * ((j * (2 * k + 1)) % (4 * m)) as f64 / (2 * m) as f64).cos())
            .sum();
        *c = sum * (2.0 / m as f64);
    }
    cheb[0] *= 0.5;
    let top = cheb.iter().fold(0.0_f64, |acc, c| acc.max(c.norm()));
    let last = cheb.iter().rposition(|c| c.norm() > 1e-15 * top).unwrap_or(0);
    cheb.truncate(last + 1);

    // Monomials in t = z / r.
    let m = cheb.len();
    let mut b = vec![Complex64::new(0.0, 0.0); m];
    let mut t_prev = vec![0.0; m + 1];
    let mut t_cur = vec![0.0; m + 1];
    t_prev[0] = 1.0;
    if m > 1 {
        t_cur[1] = 1.0;
    }
    b[0] = cheb[0];
    for (j, &cj) in cheb.iter().enumerate().skip(1) {
        if j >= 2 {
            let mut next = vec![0.0; m + 1];
            for k in 0..=j {
                if k >= 1 {
                    next[k] += 2.0 * t_cur[k - 1];
                }
                next[k] -= t_prev[k];
            }
            t_prev = std::mem::replace(&mut t_cur, next);
        }
        for k in 0..=j {
            b[k] += cj * t_cur[k];
        }
    }
    let coeffs = b
        .iter()
        .enumerate()
        .map(|(k, &c)| if c.norm() <= 1e-14 * top { Complex64::new(0.0, 0.0) } else { c / r.powi(k as i32) })
        .collect();
    Ok(TaylorFit { coeffs, fit_radius: r })
}

impl TaylorFit {
    /// Root-test estimate from the coefficients of degree `degree/2 ..= degree`.
    pub fn convergence_radius(&self, degree: usize) -> f64 {
        let pts: Vec<(f64, f64)> = (degree / 2..=degree.min(self.coeffs.len().saturating_sub(1)))
            .filter(|&k| self.coeffs[k].norm() > 0.0)
            .map(|k| (k as f64, self.coeffs[k].norm().ln()))
            .collect();
        if pts.len() < 3 {
            return f64::INFINITY;
        }
        let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let s = crate::frequency::slope(&x, &y);
        if s < 0.0 {
            (-s).exp()
        } else {
            self.fit_radius
        }
    }

    /// Series truncated at `degree` on the disk of the given radius. The
    /// tail bound is the larger of the fitted higher coefficients and the
    /// geometric ratio estimate.
    pub fn truncate(&self, degree: usize, radius: f64) -> HolomorphicSeries {
        let mut coeffs: Vec<Complex64> = self.coeffs.iter().take(degree + 1).copied().collect();
        coeffs.resize(degree + 1, Complex64::new(0.0, 0.0));
        let convergence_radius = self.convergence_radius(degree);
        let q = radius / convergence_radius;
        let ratio_tail = if q >= 1.0 {
            f64::INFINITY
        } else {
            let lead = (degree.saturating_sub(3)..=degree)
                .map(|k| coeffs[k].norm() * radius.powi(k as i32) * q.powi((degree - k) as i32))
                .fold(0.0, f64::max);
            lead * q / (1.0 - q)
        };
        let direct: f64 =
            self.coeffs.iter().enumerate().skip(degree + 1).map(|(k, c)| c.norm() * radius.powi(k as i32)).sum();
        HolomorphicSeries { coeffs, radius, convergence_radius, tail: ratio_tail.max(direct) }
    }
}

/// Holomorphic extension of `Q` truncated at `degree` on the disk of the
/// given radius, which must lie inside the arclength range.
pub fn extend_q(ab: &CircleCoefficients, degree: usize, radius: f64) -> Result<HolomorphicSeries> {
    let fit = taylor_fit(ab)?;
    checked_series(&fit, degree, radius)
}

fn checked_series(fit: &TaylorFit, degree: usize, radius: f64) -> Result<HolomorphicSeries> {
    if !(radius > 0.0 && radius <= fit.fit_radius) {
        return Err(Error::RadiusTooLarge { radius, max: fit.fit_radius });
    }
    let series = fit.truncate(degree, radius);
    if series.tail > TAIL_LIMIT {
        return Err(Error::TailBound { tail: series.tail, limit: TAIL_LIMIT });
    }
    let mut worst: f64 = 0.0;
    for k in 0..=100 {
        let s = radius * (-1.0 + 2.0 * k as f64 / 100.0);
        worst = worst.max((series.eval(Complex64::new(s, 0.0)).norm() - 1.0).abs());
    }
    if worst > 1e-8 {
        return Err(Error::TailBound { tail: worst, limit: 1e-8 });
    }
    Ok(series)
}

/// [`extend_q`] on the largest radius `<= min(range, convergence / 2)`
/// whose tail bound passes, shrinking by 5% per attempt.
pub fn extend_q_auto(ab: &CircleCoefficients, degree: usize) -> Result<HolomorphicSeries> {
    let fit = taylor_fit(ab)?;
    let mut r = fit.fit_radius.min(0.5 * fit.convergence_radius(degree));
    for _ in 0..100 {
        match checked_series(&fit, degree, r) {
            Ok(s) => return Ok(s),
            Err(Error::TailBound { .. }) => r *= 0.95,
            Err(e) => return Err(e),
        }
    }
    Err(Error::TailBound { tail: f64::INFINITY, limit: TAIL_LIMIT })
}

/// `G` with `G' = i Q`, `G(0) = 0`. `V = Re G` and `v = Im G` satisfy
/// `grad v = (alpha, beta)` and `grad V = (beta, -alpha)`.
pub fn primitive_map(q: &HolomorphicSeries) -> HolomorphicSeries {
    q.scale(I).primitive()
}

/// `V` and `v` sampled on the square inscribed in the working disk with
/// `n` cells per side.
pub fn integrate_forms(q: &HolomorphicSeries, n: usize) -> Result<(ScalarField, ScalarField)> {
    let n = n + n % 2;
    let a = q.radius / 2f64.sqrt();
    let spec = GridSpec::new(n + 1, n + 1, -a, -a, 2.0 * a / n as f64)?;
    let g = primitive_map(q);
    let vals: Vec<Complex64> =
        (0..spec.len()).map(|k| g.eval(Complex64::new(spec.x(k % spec.nx), spec.y(k / spec.nx)))).collect();
    Ok((
        ScalarField::new(spec, vals.iter().map(|c| c.re).collect())?,
        ScalarField::new(spec, vals.iter().map(|c| c.im).collect())?,
    ))
}

/// Largest deviation of fourth-order difference gradients of `V`, `v` from
/// `(beta, -alpha)`, `(alpha, beta)` at the given points.
pub fn form_defect(q: &HolomorphicSeries, points: &[Complex64]) -> f64 {
    let g = primitive_map(q);
    let d = 1e-3;
    let diff = |z: Complex64, e: Complex64| {
        (g.eval(z - 2.0 * e) - 8.0 * g.eval(z - e) + 8.0 * g.eval(z + e) - g.eval(z + 2.0 * e)) / (12.0 * d)
    };
    let mut worst: f64 = 0.0;
    for &z in points {
        let qz = q.eval(z);
        let (alpha, beta) = (qz.re, -qz.im);
        let gx = diff(z, Complex64::new(d, 0.0));
        let gy = diff(z, Complex64::new(0.0, d));
        worst = worst
            .max((gx.re - beta).abs())
            .max((gy.re + alpha).abs())
            .max((gx.im - alpha).abs())
            .max((gy.im - beta).abs());
    }
    worst
}

/// The conformal map `S = G` and its inverse by Newton.
#[derive(Debug, Clone)]
pub struct ConformalPair {
    pub g: HolomorphicSeries,
    pub dg: HolomorphicSeries,
}

impl ConformalPair {
    pub fn new(q: &HolomorphicSeries) -> Self {
        Self { g: primitive_map(q), dg: q.scale(I) }
    }

    pub fn forward(&self, z: Complex64) -> Complex64 {
        self.g.eval(z)
    }

    /// `T(w) = U + i u` with `G(T(w)) = w`.
    pub fn inverse(&self, w: Complex64, start: Complex64) -> Result<Complex64> {
        let mut z = start;
        for _ in 0..60 {
            let d = self.dg.eval(z);
            if d.norm() < 1e-8 {
                return Err(Error::Newton(format!("vanishing derivative at {z}")));
            }
            let step = (self.g.eval(z) - w) / d;
            z -= step;
            if !z.is_finite() || z.norm() > 2.0 * self.g.convergence_radius.min(1e6) {
                break;
            }
            if step.norm() <= 1e-15 * (1.0 + z.norm()) {
                return Ok(z);
            }
        }
        Err(Error::Newton(format!("inverse of the primitive map at {w} did not converge")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstructorOptions {
    /// Half-width of the square `[-a, a]^2` on which `u` is produced.
    pub extent: f64,
    /// Cells per side (rounded up to even so the origin is a node).
    pub n: usize,
    pub taylor_degree: usize,
    /// Working disk radius; chosen adaptively when absent.
    pub radius: Option<f64>,
    /// Number of sample points on the graph for the residual bundle.
    pub samples: usize,
}

impl Default for ConstructorOptions {
    fn default() -> Self {
        Self { extent: 0.3, n: 128, taylor_degree: DEFAULT_TAYLOR_DEGREE, radius: None, samples: 201 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstructionReport {
    pub curve: String,
    pub extent: f64,
    pub h: f64,
    pub taylor_degree: usize,
    pub working_radius: f64,
    pub convergence_radius: f64,
    pub tail: f64,
    pub circle_defect: f64,
    pub q_origin_defect: f64,
    pub q_modulus_defect: f64,
    pub form_defect: f64,
    /// `grad S(0, 0)` as `[[a, b], [c, d]]`, row-major.
    pub jacobian_origin: [f64; 4],
    pub composition_defect: f64,
    /// Fourth-order cross-stencil Laplacian of `u` on nodes whose stencil
    /// lies in `{u > 0}`.
    pub laplacian_residual: f64,
    /// `max |u(x, f(x))|`.
    pub boundary_residual: f64,
    /// `max ||grad u(x, f(x))| - 1|`.
    pub gradient_residual: f64,
    /// `max |g - f|` for the recovered zero level `g`.
    pub geometry_error: f64,
    /// Geometric decay ratio of the Chebyshev coefficients of `g`.
    pub g_decay_ratio: f64,
    pub masked: usize,
}

/// Output of [`construct`]. `u_harmonic` is the inverse-map component on
/// the whole square; `u` is its positive part.
#[derive(Debug, Clone)]
pub struct Construction {
    pub curve: AnalyticCurve,
    pub series: HolomorphicSeries,
    pub conjugate: ScalarField,
    pub u_harmonic: ScalarField,
    pub u: ScalarField,
    /// Nodes whose preimage leaves the working disk or where Newton failed.
    pub mask: Vec<bool>,
    pub big_v: ScalarField,
    pub v: ScalarField,
    /// `(x, g(x), f(x))`.
    pub boundary: Vec<[f64; 3]>,
    pub report: ConstructionReport,
}

/// Full pipeline from a curve to the one-phase solution on `[-a, a]^2`.
pub fn construct(f: &AnalyticCurve, opts: &ConstructorOptions) -> Result<Construction> {
    if !(opts.extent > 0.0 && opts.extent < f.rho) {
        return Err(Error::RadiusTooLarge { radius: opts.extent, max: f.rho });
    }
    if opts.n < 4 || opts.samples < 2 {
        return Err(Error::InvalidArgument("need at least 4 cells and 2 samples".into()));
    }
    let ab = coefficients_alpha_beta(f)?;
    let circle_defect = ab.circle_defect(1000)?;
    let q = match opts.radius {
        Some(r) => extend_q(&ab, opts.taylor_degree, r)?,
        None => extend_q_auto(&ab, opts.taylor_degree)?,
    };
    let (big_v, v) = integrate_forms(&q, opts.n)?;
    invert_to_solution(f, &q, big_v, v, opts, circle_defect)
}

fn invert_to_solution(
    f: &AnalyticCurve,
    q: &HolomorphicSeries,
    big_v: ScalarField,
    v: ScalarField,
    opts: &ConstructorOptions,
    circle_defect: f64,
) -> Result<Construction> {
    let r = q.radius;
    check_jacobian(q)?;
    let pair = ConformalPair::new(q);

    let n = opts.n + opts.n % 2;
    let a = opts.extent;
    let spec = GridSpec::new(n + 1, n + 1, -a, -a, 2.0 * a / n as f64)?;
    let mut big_u = vec![0.0; spec.len()];
    let mut uh = vec![0.0; spec.len()];
    let mut mask = vec![false; spec.len()];
    for j in 0..spec.ny {
        let mut start: Option<Complex64> = None;
        for i in 0..spec.nx {
            let k = spec.index(i, j);
            let w = Complex64::new(spec.x(i), spec.y(j));
            let z = pair.inverse(w, start.unwrap_or(w)).or_else(|_| pair.inverse(w, w));
            match z {
                Ok(z) => {
                    big_u[k] = z.re;
                    uh[k] = z.im;
                    mask[k] = z.norm() > r;
                    start = Some(z);
                }
                Err(_) => {
                    mask[k] = true;
                    start = None;
                }
            }
        }
    }
    fill_masked(&spec, &mut big_u, &mask);
    fill_masked(&spec, &mut uh, &mask);
    let conjugate = ScalarField::new(spec, big_u)?;
    let u_harmonic = ScalarField::new(spec, uh)?;
    let u = u_harmonic.map(|x| x.max(0.0));
    let masked = mask.iter().filter(|&&m| m).count();

    let h = spec.h;
    let mut laplacian_residual: f64 = 0.0;
    for j in 2..spec.ny - 2 {
        for i in 2..spec.nx - 2 {
            let ks = [
                spec.index(i, j),
                spec.index(i - 1, j),
                spec.index(i + 1, j),
                spec.index(i, j - 1),
                spec.index(i, j + 1),
                spec.index(i - 2, j),
                spec.index(i + 2, j),
                spec.index(i, j - 2),
                spec.index(i, j + 2),
            ];
            if ks.iter().any(|&k| mask[k] || u.values[k] <= 0.0) {
                continue;
            }
            let w = |k: usize| u.values[ks[k]];
            let lap = (16.0 * (w(1) + w(2) + w(3) + w(4)) - (w(5) + w(6) + w(7) + w(8)) - 60.0 * w(0)) / (12.0 * h * h);
            laplacian_residual = laplacian_residual.max(lap.abs());
        }
    }

    let point_u = |x: f64, y: f64| -> Result<f64> {
        let w = Complex64::new(x, y);
        Ok(pair.inverse(w, w)?.im)
    };
    let mut boundary_residual: f64 = 0.0;
    let mut gradient_residual: f64 = 0.0;
    let mut geometry_error: f64 = 0.0;
    let mut boundary = Vec::with_capacity(opts.samples);
    let d = 1e-5;
    for k in 0..opts.samples {
        let x = -a + 2.0 * a * k as f64 / (opts.samples - 1) as f64;
        let y = f.value(x);
        boundary_residual = boundary_residual.max(point_u(x, y)?.abs());
        let ux = (point_u(x + d, y)? - point_u(x - d, y)?) / (2.0 * d);
        let uy = (point_u(x, y + d)? - point_u(x, y - d)?) / (2.0 * d);
        gradient_residual = gradient_residual.max((ux.hypot(uy) - 1.0).abs());
        let g = zero_level(&pair, x, y)?;
        geometry_error = geometry_error.max((g - y).abs());
        boundary.push([x, g, y]);
    }
    let g_decay_ratio = chebyshev_decay(&boundary, a);

    let q_origin_defect = (q.eval(Complex64::new(0.0, 0.0)) + I).norm();
    let mut q_modulus_defect: f64 = 0.0;
    for k in 0..=200 {
        let s = r * (-1.0 + k as f64 / 100.0);
        q_modulus_defect = q_modulus_defect.max((q.eval(Complex64::new(s, 0.0)).norm() - 1.0).abs());
    }
    let disk: Vec<Complex64> = (1..=8)
        .flat_map(|i| (0..16).map(move |t| Complex64::from_polar(r * i as f64 / 9.0, 2.0 * PI * t as f64 / 16.0)))
        .chain(std::iter::once(Complex64::new(0.0, 0.0)))
        .collect();
    let form = form_defect(q, &disk);
    let mut composition_defect: f64 = 0.0;
    for &z in &disk {
        let w = pair.forward(z);
        let back = pair.inverse(w, w)?;
        composition_defect = composition_defect.max((back - z).norm());
    }
    let g0 = pair.dg.eval(Complex64::new(0.0, 0.0));

    let report = ConstructionReport {
        curve: f.name().to_string(),
        extent: a,
        h,
        taylor_degree: q.degree(),
        working_radius: r,
        convergence_radius: q.convergence_radius,
        tail: q.tail,
        circle_defect,
        q_origin_defect,
        q_modulus_defect,
        form_defect: form,
        jacobian_origin: [g0.re, -g0.im, g0.im, g0.re],
        composition_defect,
        laplacian_residual,
        boundary_residual,
        gradient_residual,
        geometry_error,
        g_decay_ratio,
        masked,
    };
    Ok(Construction { curve: f.clone(), series: q.clone(), conjugate, u_harmonic, u, mask, big_v, v, boundary, report })
}

fn check_jacobian(q: &HolomorphicSeries) -> Result<()> {
    let floor = 0.1;
    let mut ok_radius = q.radius;
    for i in (1..=32).rev() {
        let rr = q.radius * i as f64 / 32.0;
        let low = (0..64)
            .map(|t| q.eval(Complex64::from_polar(rr, 2.0 * PI * t as f64 / 64.0)).norm())
            .fold(f64::INFINITY, f64::min);
        if low < floor {
            ok_radius = q.radius * (i - 1) as f64 / 32.0;
        }
    }
    if ok_radius < q.radius {
        return Err(Error::JacobianDegenerate { suggested: ok_radius });
    }
    Ok(())
}

/// Masked entries take the value of the nearest unmasked node in the same
/// row, or 0 if the row is fully masked.
fn fill_masked(spec: &GridSpec, values: &mut [f64], mask: &[bool]) {
    for j in 0..spec.ny {
        let row = j * spec.nx..(j + 1) * spec.nx;
        let good: Vec<usize> = row.clone().filter(|&k| !mask[k]).collect();
        if good.is_empty() {
            values[row].iter_mut().for_each(|v| *v = 0.0);
            continue;
        }
        for k in row {
            if mask[k] {
                let near = *good.iter().min_by_key(|&&g| g.abs_diff(k)).unwrap();
                values[k] = values[near];
            }
        }
    }
}

/// Zero of `y -> Im T(x + i y)` by Newton from `y0`.
fn zero_level(pair: &ConformalPair, x: f64, y0: f64) -> Result<f64> {
    let mut y = y0;
    let mut start = Complex64::new(x, y);
    for _ in 0..60 {
        let w = Complex64::new(x, y);
        let z = pair.inverse(w, start)?;
        // d/dy Im T = Re(1 / G'(z)).
        let dy = (1.0 / pair.dg.eval(z)).re;
        if dy.abs() < 1e-12 {
            break;
        }
        let step = z.im / dy;
        y -= step;
        start = z;
        if step.abs() <= 1e-15 {
            return Ok(y);
        }
    }
    Err(Error::Newton(format!("zero level at x = {x} did not converge")))
}

/// Geometric decay ratio of the Chebyshev coefficients of `g` sampled at
/// equispaced points, fitted on the coefficients above the rounding floor.
fn chebyshev_decay(boundary: &[[f64; 3]], a: f64) -> f64 {
    let m = 24usize;
    let nodes: Vec<f64> = (0..m).map(|k| (PI * (k as f64 + 0.5) / m as f64).cos()).collect();
    let vals: Vec<f64> = nodes.iter().map(|&t| nearest_cubic(boundary, a * t)).collect();
    let coeffs: Vec<f64> = (0..m)
        .map(|j| {
            let s: f64 = nodes.iter().zip(&vals).map(|(&t, &v)| v * (j as f64 * t.acos()).cos()).sum();
            2.0 * s / m as f64
        })
        .collect();
    let top = coeffs.iter().fold(0.0_f64, |acc, c| acc.max(c.abs()));
    if top == 0.0 {
        return 0.0;
    }
    let pts: Vec<(f64, f64)> = coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| c.abs() > 1e-12 * top)
        .map(|(j, c)| (j as f64, c.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    crate::frequency::slope(&x, &y).exp()
}

/// Cubic Lagrange interpolation of `g` through the four samples around `x`.
fn nearest_cubic(boundary: &[[f64; 3]], x: f64) -> f64 {
    let n = boundary.len();
    let k = boundary.partition_point(|p| p[0] < x).clamp(2, n - 2) - 2;
    let k = k.min(n - 4);
    let pts = &boundary[k..k + 4];
    let mut s = 0.0;
    for i in 0..4 {
        let mut w = 1.0;
        for j in 0..4 {
            if i != j {
                w *= (x - pts[j][0]) / (pts[i][0] - pts[j][0]);
            }
        }
        s += w * pts[i][1];
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arclength_examples() {
        let flat = AnalyticCurve::flat();
        assert!((arclength(&flat, 0.4).unwrap() - 0.4).abs() < 1e-14);
        let cat = AnalyticCurve::catenary();
        let e = arclength(&cat, 0.3).unwrap();
        assert!((e - 0.3f64.sinh()).abs() < 1e-12);
        assert!((e - 0.30452).abs() < 1e-5);
        assert!((arclength(&cat, -0.3).unwrap() + e).abs() < 1e-14);
        assert!(matches!(arclength(&cat, 0.9), Err(Error::RadiusTooLarge { .. })));
    }

    #[test]
    fn alpha_beta_of_catenary() {
        let ab = coefficients_alpha_beta(&AnalyticCurve::catenary()).unwrap();
        for s in [-0.7, -0.2, 0.0, 0.35, 0.9] {
            let (a, b) = ab.alpha_beta(s).unwrap();
            let n = (1.0f64 + s * s).sqrt();
            assert!((a - s / n).abs() < 1e-11, "{s}");
            assert!((b - 1.0 / n).abs() < 1e-11, "{s}");
        }
        assert!(ab.circle_defect(1000).unwrap() < 1e-10);
        let flat = coefficients_alpha_beta(&AnalyticCurve::flat()).unwrap();
        assert_eq!(flat.alpha_beta(0.5).unwrap(), (0.0, 1.0));
    }

    /// Taylor coefficients of `(z - i) / sqrt(1 + z^2)`.
    fn catenary_q(n: usize) -> Vec<Complex64> {
        let mut inv_sqrt = vec![0.0; n + 1];
        let mut c = 1.0;
        for k in 0..=n / 2 {
            inv_sqrt[2 * k] = c;
            c *= -(2.0 * k as f64 + 1.0) / (2.0 * k as f64 + 2.0);
        }
        (0..=n)
            .map(|k| {
                let prev = if k >= 1 { inv_sqrt[k - 1] } else { 0.0 };
                Complex64::new(prev, -inv_sqrt[k])
            })
            .collect()
    }

    #[test]
    fn catenary_series_matches_closed_form() {
        let ab = coefficients_alpha_beta(&AnalyticCurve::catenary()).unwrap();
        let q = extend_q_auto(&ab, 24).unwrap();
        assert!(q.tail <= TAIL_LIMIT);
        assert!(q.radius > 0.3 && q.radius <= 0.5, "{}", q.radius);
        assert!((q.convergence_radius - 1.0).abs() < 0.2, "{}", q.convergence_radius);
        let exact = catenary_q(24);
        for (k, (a, e)) in q.coeffs.iter().zip(&exact).enumerate() {
            assert!((a - e).norm() * q.radius.powi(k as i32) < 1e-9, "{k}: {a} vs {e}");
            // alternating real / imaginary pattern
            if k % 2 == 0 {
                assert!(a.re.abs() * q.radius.powi(k as i32) < 1e-10, "{k} {a}");
            } else {
                assert!(a.im.abs() * q.radius.powi(k as i32) < 1e-10, "{k} {a}");
            }
        }
    }

    #[test]
    fn flat_series_is_constant() {
        let ab = coefficients_alpha_beta(&AnalyticCurve::flat()).unwrap();
        let q = extend_q_auto(&ab, 24).unwrap();
        assert!((q.coeffs[0] + I).norm() < 1e-15);
        assert!(q.coeffs[1..].iter().all(|c| c.norm() < 1e-14));
        let (vv, v) = integrate_forms(&q, 16).unwrap();
        for k in 0..v.spec.len() {
            let (x, y) = (v.spec.x(k % v.spec.nx), v.spec.y(k / v.spec.nx));
            assert!((v.values[k] - y).abs() < 1e-14 && (vv.values[k] - x).abs() < 1e-14);
        }
    }

    #[test]
    fn explicit_radius_beyond_tail_fails() {
        let ab = coefficients_alpha_beta(&AnalyticCurve::catenary()).unwrap();
        assert!(matches!(extend_q(&ab, 24, 0.8), Err(Error::TailBound { .. })));
        assert!(matches!(extend_q(&ab, 24, 1.5), Err(Error::RadiusTooLarge { .. })));
    }

    #[test]
    fn flat_construction_is_half_plane_solution() {
        let opts = ConstructorOptions { n: 32, samples: 11, ..Default::default() };
        let c = construct(&AnalyticCurve::flat(), &opts).unwrap();
        for k in 0..c.u.spec.len() {
            let y = c.u.spec.y(k / c.u.spec.nx);
            assert!((c.u.values[k] - y.max(0.0)).abs() < 1e-10);
        }
        assert_eq!(c.report.masked, 0);
        assert!(c.report.geometry_error < 1e-12);
        assert_eq!(c.report.jacobian_origin, [1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn parabola_round_trip_geometry() {
        let opts = ConstructorOptions { extent: 0.2, n: 32, samples: 41, ..Default::default() };
        let c = construct(&AnalyticCurve::parabola(0.1).unwrap(), &opts).unwrap();
        assert!(c.report.geometry_error < 1e-6, "{}", c.report.geometry_error);
        assert!(c.report.g_decay_ratio < 1.0);
    }

    #[test]
    fn coefficient_files() {
        let c = AnalyticCurve::parse_coefficients("# parabola\n0 0 0.25\n").unwrap();
        assert!((c.value(0.5) - 0.0625).abs() < 1e-15);
        assert!((c.rho() - 1.0).abs() < 1e-12);
        assert!(AnalyticCurve::parse_coefficients("0 0.1 1").is_err());
        assert!(AnalyticCurve::parse_coefficients("").is_err());
        let steep = AnalyticCurve::parse_coefficients("0, 0, 1").unwrap();
        assert!((steep.rho() - 0.5).abs() < 1e-3);
    }
}
