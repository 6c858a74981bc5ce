//! Thin obstacle and two-membrane solvers on the upper half-disk.
//!
//! The discretization is the bilinear finite element method on the uniform
//! grid with cell-wise constant coefficients. The element matrix of a cell
//! with corners ordered `00, 10, 01, 11` is
//!
//! ```text
//! K_e = (a s s^T + b (s t^T + t s^T) + c t t^T) / 4 + kappa p p^T
//! s = (-1, 1, -1, 1), t = (-1, -1, 1, 1), p = (1, -1, -1, 1)
//! ```
//!
//! so that `u^T K_e u = h^2 A g.g + kappa d^2` with `g` the mean gradient of
//! the cell and `d` its hourglass amplitude. `kappa = (a + c) / 12` is the
//! exact bilinear element; `kappa = 1/6` matches the two-membrane energy.
//!
//! Nodes strictly inside the unit disk and off the grid edge are unknowns;
//! those on the slit row carry the constraint `w >= obstacle`. All other
//! nodes keep the values of the boundary field.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{cell_gradient, GridSpec, MatrixField, ScalarField};
use crate::nonlinearity::Nonlinearity;
use crate::quad::gauss_legendre;

const SIG: [f64; 4] = [-1.0, 1.0, -1.0, 1.0];
const TAU: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];
const PI4: [f64; 4] = [1.0, -1.0, -1.0, 1.0];
/// Corner offsets `(di, dj)` in element order.
const CORNER: [(usize, usize); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];

/// Weight of the hourglass mode in the element matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stabilization {
    /// `(a11 + a22) / 12`: exact integration of the bilinear element.
    #[default]
    Consistent,
    /// `1/6` regardless of the coefficients.
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Node {
    Fixed,
    Interior,
    Slit,
}

/// Classification of the nodes of a half-square grid.
#[derive(Debug, Clone)]
struct Layout {
    spec: GridSpec,
    kind: Vec<Node>,
    /// Unknown nodes in sweep order.
    free: Vec<usize>,
    /// Cells with at least one unknown corner (lower-left node index).
    active: Vec<usize>,
}

impl Layout {
    fn new(spec: GridSpec, radius: f64) -> Result<Self> {
        if spec.slit_row() != Some(0) {
            return Err(Error::DegenerateGrid("the slit y = 0 must be the bottom grid row".into()));
        }
        let r2 = radius * radius * (1.0 - 1e-12);
        let mut kind = vec![Node::Fixed; spec.len()];
        let mut free = Vec::new();
        for j in 0..spec.ny - 1 {
            for i in 1..spec.nx - 1 {
                let (x, y) = (spec.x(i), spec.y(j));
                if x * x + y * y < r2 {
                    let k = spec.index(i, j);
                    kind[k] = if j == 0 { Node::Slit } else { Node::Interior };
                    free.push(k);
                }
            }
        }
        if free.is_empty() {
            return Err(Error::DegenerateGrid("no unknown nodes inside the disk".into()));
        }
        let mut active = Vec::new();
        for j in 0..spec.ny - 1 {
            for i in 0..spec.nx - 1 {
                let k = spec.index(i, j);
                if CORNER.iter().any(|&(di, dj)| kind[k + di + dj * spec.nx] != Node::Fixed) {
                    active.push(k);
                }
            }
        }
        Ok(Self { spec, kind, free, active })
    }

    /// Cells around unknown node `k` as `(lower-left index, corner position)`;
    /// slit nodes have no cells below.
    #[inline]
    fn cells_of(&self, k: usize) -> ([(usize, usize); 4], usize) {
        let nx = self.spec.nx;
        if k < nx {
            ([(k - 1, 1), (k, 0), (0, 0), (0, 0)], 2)
        } else {
            ([(k - 1, 1), (k, 0), (k - nx - 1, 3), (k - nx, 2)], 4)
        }
    }

    #[inline]
    fn corners(&self, w: &[f64], c: usize) -> [f64; 4] {
        let nx = self.spec.nx;
        [w[c], w[c + 1], w[c + nx], w[c + nx + 1]]
    }
}

/// Variable-coefficient thin obstacle problem on the upper half-disk.
#[derive(Debug, Clone)]
pub struct ObstacleProblem {
    pub spec: GridSpec,
    /// Coefficients on the cell grid `spec.cells()`.
    pub coefficients: MatrixField,
    /// Only the values at non-unknown nodes are used.
    pub boundary: ScalarField,
    /// Lower bound along the slit row, one value per column.
    pub obstacle: Vec<f64>,
    /// Relaxation parameter in `(0, 2)`.
    pub omega: f64,
    pub stabilization: Stabilization,
    /// Radius of the half-disk.
    pub radius: f64,
    /// Optional starting iterate; unknown nodes start from zero otherwise.
    pub initial: Option<ScalarField>,
}

impl ObstacleProblem {
    pub fn new(coefficients: MatrixField, boundary: ScalarField) -> Result<Self> {
        let spec = boundary.spec;
        if !coefficients.spec.same_shape(&spec.cells()) {
            return Err(Error::Shape("coefficients must live on the cell grid of the boundary field".into()));
        }
        Layout::new(spec, 1.0)?;
        Ok(Self {
            spec,
            coefficients,
            boundary,
            obstacle: vec![0.0; spec.nx],
            omega: 1.0,
            stabilization: Stabilization::Consistent,
            radius: 1.0,
            initial: None,
        })
    }

    /// `A = I`.
    pub fn laplacian(boundary: ScalarField) -> Result<Self> {
        Self::new(MatrixField::identity(boundary.spec.cells()), boundary)
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    pub fn with_stabilization(mut self, s: Stabilization) -> Self {
        self.stabilization = s;
        self
    }

    pub fn with_initial(mut self, w: ScalarField) -> Self {
        self.initial = Some(w);
        self
    }

    /// Drop the constraint along the slit (natural boundary condition).
    pub fn unconstrained(mut self) -> Self {
        self.obstacle = vec![f64::NEG_INFINITY; self.spec.nx];
        self
    }
}

/// Over-relaxation close to optimal for the Laplacian on the unit half-disk.
pub fn suggested_omega(spec: &GridSpec) -> f64 {
    2.0 / (1.0 + 0.8 * std::f64::consts::PI * spec.h)
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SolverReport {
    pub iterations: usize,
    /// Largest equation residual at unknown nodes off the contact set.
    pub residual: f64,
    /// Largest complementarity defect on the slit.
    pub defect: f64,
    /// Discrete Dirichlet energy of the result.
    pub energy: f64,
    pub converged: bool,
    /// Sweeps whose energy exceeded the previous one beyond rounding.
    pub energy_increases: usize,
}

/// Nine-point stencil per node, offsets `(di + 1) + 3 (dj + 1)`.
fn assemble(p: &ObstacleProblem, lay: &Layout) -> Result<Vec<[f64; 9]>> {
    let spec = lay.spec;
    let nx = spec.nx;
    let mut st = vec![[0.0; 9]; spec.len()];
    for &c in &lay.active {
        let (ci, cj) = (c % nx, c / nx);
        let ck = p.coefficients.spec.index(ci, cj);
        let [a, b, cc] = p.coefficients.entry(ck);
        let kappa = match p.stabilization {
            Stabilization::Consistent => (a + cc) / 12.0,
            Stabilization::Reference => 1.0 / 6.0,
        };
        for (ra, &(ai, aj)) in CORNER.iter().enumerate() {
            let node = c + ai + aj * nx;
            if lay.kind[node] == Node::Fixed {
                continue;
            }
            for (rb, &(bi, bj)) in CORNER.iter().enumerate() {
                let ke = 0.25
                    * (a * SIG[ra] * SIG[rb] + b * (SIG[ra] * TAU[rb] + TAU[ra] * SIG[rb]) + cc * TAU[ra] * TAU[rb])
                    + kappa * PI4[ra] * PI4[rb];
                let off = (bi as isize - ai as isize + 1) + 3 * (bj as isize - aj as isize + 1);
                st[node][off as usize] += ke;
            }
        }
    }
    for &k in &lay.free {
        if !(st[k][4] > 0.0) {
            return Err(Error::Ellipticity(format!("non-positive diagonal at node {k}")));
        }
    }
    Ok(st)
}

#[inline]
fn apply(st: &[f64; 9], w: &[f64], k: usize, nx: usize) -> f64 {
    let t = k + nx - 1;
    let mid = st[3] * w[k - 1] + st[4] * w[k] + st[5] * w[k + 1] + st[6] * w[t] + st[7] * w[t + 1] + st[8] * w[t + 2];
    if k < nx {
        return mid;
    }
    let b = k - nx - 1;
    mid + st[0] * w[b] + st[1] * w[b + 1] + st[2] * w[b + 2]
}

fn obstacle_energy(p: &ObstacleProblem, lay: &Layout, w: &[f64]) -> f64 {
    let h = lay.spec.h;
    let nx = lay.spec.nx;
    let mut e = 0.0;
    for &c in &lay.active {
        let ck = p.coefficients.spec.index(c % nx, c / nx);
        let [a, b, cc] = p.coefficients.entry(ck);
        let kappa = match p.stabilization {
            Stabilization::Consistent => (a + cc) / 12.0,
            Stabilization::Reference => 1.0 / 6.0,
        };
        let (g, d) = cell_gradient(lay.corners(w, c), h);
        e += h * h * (a * g[0] * g[0] + 2.0 * b * g[0] * g[1] + cc * g[1] * g[1]) + kappa * d * d;
    }
    e
}

fn obstacle_residuals(lay: &Layout, st: &[[f64; 9]], w: &[f64], obst: &[f64]) -> (f64, f64) {
    let nx = lay.spec.nx;
    let (mut res, mut def) = (0.0_f64, 0.0_f64);
    for &k in &lay.free {
        let r = apply(&st[k], w, k, nx) / st[k][4];
        match lay.kind[k] {
            Node::Slit if obst[k].is_finite() => {
                def = def.max((w[k] - obst[k]).min(r).abs());
                if w[k] > obst[k] {
                    res = res.max(r.abs());
                }
            }
            _ => res = res.max(r.abs()),
        }
    }
    (res, def)
}

fn initial_values(
    spec: &GridSpec,
    boundary: &ScalarField,
    initial: Option<&ScalarField>,
    lay: &Layout,
) -> Result<Vec<f64>> {
    let mut w = boundary.values.clone();
    for &k in &lay.free {
        w[k] = match initial {
            Some(f) => {
                let (i, j) = (k % spec.nx, k / spec.nx);
                f.sample(spec.x(i), spec.y(j))
                    .ok_or_else(|| Error::Shape("initial iterate does not cover the domain".into()))?
            }
            None => 0.0,
        };
    }
    Ok(w)
}

/// Projected SOR for the thin obstacle problem.
///
/// Sweeps run lexicographically; the update at a slit node is
/// `max(obstacle, w + omega (w_gs - w))`. Iteration stops when the equation
/// residual and the complementarity defect, both measured as
/// `(K w)_i / K_ii`, drop below `tol`.
pub fn solve_thin_obstacle(p: &ObstacleProblem, tol: f64, max_iter: usize) -> Result<(ScalarField, SolverReport)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")));
    }
    if !(p.omega > 0.0 && p.omega < 2.0) {
        return Err(Error::InvalidArgument(format!("relaxation {} outside (0, 2)", p.omega)));
    }
    if !p.boundary.spec.same_shape(&p.spec) || p.obstacle.len() != p.spec.nx {
        return Err(Error::Shape("boundary field or obstacle does not match the grid".into()));
    }
    if p.coefficients.lambda <= 0.0 {
        return Err(Error::Ellipticity("coefficient field is not elliptic".into()));
    }
    let lay = Layout::new(p.spec, p.radius)?;
    let st = assemble(p, &lay)?;
    let nx = p.spec.nx;
    // obstacle per node, -inf off the slit
    let mut obst = vec![f64::NEG_INFINITY; p.spec.len()];
    for &k in &lay.free {
        if lay.kind[k] == Node::Slit {
            obst[k] = p.obstacle[k % nx];
        }
    }
    let mut w = initial_values(&p.spec, &p.boundary, p.initial.as_ref(), &lay)?;
    for &k in &lay.free {
        w[k] = w[k].max(obst[k]);
    }
    let omega = p.omega;
    let mut report = SolverReport::default();
    let mut energy = obstacle_energy(p, &lay, &w);
    for it in 1..=max_iter {
        let mut change = 0.0_f64;
        for &k in &lay.free {
            let s = &st[k];
            let r = apply(s, &w, k, nx) / s[4];
            let old = w[k];
            let new = (old - omega * r).max(obst[k]);
            let step = if obst[k].is_finite() { (old - obst[k]).min(r).abs() } else { r.abs() };
            change = change.max(step);
            w[k] = new;
        }
        let e = obstacle_energy(p, &lay, &w);
        if e > energy + 1e-13 * energy.abs().max(1e-300) {
            report.energy_increases += 1;
        }
        energy = e;
        report.iterations = it;
        if change <= tol {
            let (res, def) = obstacle_residuals(&lay, &st, &w, &obst);
            if res <= tol && def <= tol {
                report.converged = true;
                break;
            }
        }
    }
    let (res, def) = obstacle_residuals(&lay, &st, &w, &obst);
    report.residual = res;
    report.defect = def;
    report.energy = energy;
    Ok((ScalarField { spec: p.spec, values: w }, report))
}

/// Discrete Dirichlet energy `sum over active cells of u^T K_e u`.
pub fn discrete_energy(p: &ObstacleProblem, w: &ScalarField) -> Result<f64> {
    let lay = Layout::new(p.spec, p.radius)?;
    Ok(obstacle_energy(p, &lay, &w.values))
}

/// Equation residual and complementarity defect of an arbitrary iterate.
pub fn obstacle_residual(p: &ObstacleProblem, w: &ScalarField) -> Result<(f64, f64)> {
    let lay = Layout::new(p.spec, p.radius)?;
    let st = assemble(p, &lay)?;
    let mut obst = vec![f64::NEG_INFINITY; p.spec.len()];
    for &k in &lay.free {
        if lay.kind[k] == Node::Slit {
            obst[k] = p.obstacle[k % p.spec.nx];
        }
    }
    Ok(obstacle_residuals(&lay, &st, &w.values, &obst))
}

/// Discrete conormal flux `e2 . A grad w` along the slit, `-(K w)_i / h`;
/// zero off the unknown slit nodes.
pub fn slit_flux(p: &ObstacleProblem, w: &ScalarField) -> Result<Vec<f64>> {
    let lay = Layout::new(p.spec, p.radius)?;
    let st = assemble(p, &lay)?;
    let nx = p.spec.nx;
    Ok((0..nx)
        .map(|i| if lay.kind[i] == Node::Slit { -apply(&st[i], &w.values, i, nx) / p.spec.h } else { 0.0 })
        .collect())
}

/// Mean gradients of the bilinear interpolant on the cell grid.
pub fn cell_gradients(u: &ScalarField) -> (ScalarField, ScalarField) {
    let s = u.spec;
    let cs = s.cells();
    let mut gx = Vec::with_capacity(cs.len());
    let mut gy = Vec::with_capacity(cs.len());
    for j in 0..cs.ny {
        for i in 0..cs.nx {
            let (g, _) = cell_gradient(u.corners(i, j), s.h);
            gx.push(g[0]);
            gy.push(g[1]);
        }
    }
    (ScalarField { spec: cs, values: gx }, ScalarField { spec: cs, values: gy })
}

/// Matrix of the difference equation between two membranes:
/// `M(p, q) = integral over [0, 1] of D2F(q + t (p - q)) dt` at every node,
/// with `p = (gu.0, gu.1)` and `q = (gv.0, gv.1)`, by 16-point Gauss.
pub fn assemble_membrane_matrix(
    fnl: &Nonlinearity,
    gu: (&ScalarField, &ScalarField),
    gv: (&ScalarField, &ScalarField),
) -> Result<MatrixField> {
    let spec = gu.0.spec;
    for f in [gu.1, gv.0, gv.1] {
        if !f.spec.same_shape(&spec) {
            return Err(Error::Shape("gradient components live on different grids".into()));
        }
    }
    let rule = gauss_legendre(16);
    let n = spec.len();
    let (mut a11, mut a12, mut a22) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for k in 0..n {
        let p = [gu.0.values[k], gu.1.values[k]];
        let q = [gv.0.values[k], gv.1.values[k]];
        fnl.check(p)?;
        fnl.check(q)?;
        let m = fnl.segment_hessian(p, q, &rule);
        a11.push(m[0]);
        a12.push(m[1]);
        a22.push(m[2]);
    }
    MatrixField::new(spec, a11, a12, a22)
}

/// Two membranes `u >= v` on the slit, each minimizing
/// `sum over cells of h^2 F(g) + d^2 / 12`.
#[derive(Debug, Clone)]
pub struct TwoMembraneProblem {
    pub nonlinearity: Nonlinearity,
    pub bu: ScalarField,
    pub bv: ScalarField,
    pub omega: f64,
    pub radius: f64,
    /// Optional starting pair, sampled bilinearly onto the grid.
    pub initial: Option<(ScalarField, ScalarField)>,
}

impl TwoMembraneProblem {
    pub fn new(nonlinearity: Nonlinearity, bu: ScalarField, bv: ScalarField) -> Result<Self> {
        if !bu.spec.same_shape(&bv.spec) {
            return Err(Error::Shape("boundary traces live on different grids".into()));
        }
        Layout::new(bu.spec, 1.0)?;
        let omega = suggested_omega(&bu.spec);
        Ok(Self { nonlinearity, bu, bv, omega, radius: 1.0, initial: None })
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    pub fn with_initial(mut self, u: ScalarField, v: ScalarField) -> Self {
        self.initial = Some((u, v));
        self
    }
}

/// Energy gradient and diagonal Hessian of one membrane at node `k`.
#[inline]
fn local_grad_hess(fnl: &Nonlinearity, lay: &Layout, w: &[f64], k: usize) -> (f64, f64) {
    let h = lay.spec.h;
    let (mut g, mut hd) = (0.0, 0.0);
    let (cells, n) = lay.cells_of(k);
    for &(c, a) in &cells[..n] {
        let (gc, d) = cell_gradient(lay.corners(w, c), h);
        let df = fnl.grad(gc);
        let d2 = fnl.hess(gc);
        let (s, t) = (SIG[a], TAU[a]);
        g += 0.5 * h * (df[0] * s + df[1] * t) + d * PI4[a] / 6.0;
        hd += 0.25 * (d2[0] * s * s + 2.0 * d2[1] * s * t + d2[2] * t * t) + 1.0 / 6.0;
    }
    (g, hd)
}

fn membrane_energy(fnl: &Nonlinearity, lay: &Layout, w: &[f64]) -> f64 {
    let h = lay.spec.h;
    lay.active
        .iter()
        .map(|&c| {
            let (g, d) = cell_gradient(lay.corners(w, c), h);
            h * h * fnl.value(g) + d * d / 12.0
        })
        .sum()
}

fn max_cell_gradient(lay: &Layout, w: &[f64]) -> f64 {
    let h = lay.spec.h;
    lay.active
        .iter()
        .map(|&c| {
            let (g, _) = cell_gradient(lay.corners(w, c), h);
            g[0].hypot(g[1])
        })
        .fold(0.0, f64::max)
}

/// Residual of the Euler-Lagrange equations and the contact conditions:
/// unknown nodes off the slit and separated slit nodes need both gradients
/// zero; contact nodes need `g_u + g_v = 0` and `g_u >= 0`.
fn membrane_residuals(fnl: &Nonlinearity, lay: &Layout, u: &[f64], v: &[f64]) -> (f64, f64) {
    let (mut res, mut def) = (0.0_f64, 0.0_f64);
    for &k in &lay.free {
        let (gu, hu) = local_grad_hess(fnl, lay, u, k);
        let (gv, hv) = local_grad_hess(fnl, lay, v, k);
        if lay.kind[k] == Node::Slit {
            let gap = u[k] - v[k];
            // complementarity for the difference: gap >= 0, g_u >= 0, gap * g_u = 0
            def = def.max(gap.min(gu / hu).abs());
            if gap > 0.0 {
                res = res.max((gu / hu).abs()).max((gv / hv).abs());
            } else {
                res = res.max(((gu + gv) / (hu + hv)).abs());
            }
        } else {
            res = res.max((gu / hu).abs()).max((gv / hv).abs());
        }
    }
    (res, def)
}

#[allow(clippy::too_many_arguments)]
fn two_membrane_sweeps(
    fnl: &Nonlinearity,
    lay: &Layout,
    u: &mut [f64],
    v: &mut [f64],
    omega: f64,
    tol: f64,
    max_iter: usize,
    check_ball: bool,
    report: &mut SolverReport,
) -> Result<()> {
    let mut energy = membrane_energy(fnl, lay, u) + membrane_energy(fnl, lay, v);
    for it in 1..=max_iter {
        let mut change = 0.0_f64;
        for &k in &lay.free {
            let (gu, hu) = local_grad_hess(fnl, lay, u, k);
            let (gv, hv) = local_grad_hess(fnl, lay, v, k);
            let us = u[k] - omega * gu / hu;
            let vs = v[k] - omega * gv / hv;
            if lay.kind[k] == Node::Slit {
                let gap = u[k] - v[k];
                let step = if gap > 0.0 {
                    (gu / hu).abs().max((gv / hv).abs())
                } else {
                    ((gu + gv) / (hu + hv)).abs().max((-gu / hu).max(0.0))
                };
                change = change.max(step);
                if us >= vs {
                    u[k] = us;
                    v[k] = vs;
                } else {
                    let c = (hu * us + hv * vs) / (hu + hv);
                    u[k] = c;
                    v[k] = c;
                }
            } else {
                change = change.max((gu / hu).abs()).max((gv / hv).abs());
                u[k] = us;
                v[k] = vs;
            }
        }
        report.iterations += 1;
        if check_ball {
            let gmax = max_cell_gradient(lay, u).max(max_cell_gradient(lay, v));
            if gmax > fnl.radius() {
                return Err(Error::GradientOutOfRange { norm: gmax, radius: fnl.radius() });
            }
        }
        let e = membrane_energy(fnl, lay, u) + membrane_energy(fnl, lay, v);
        if e > energy + 1e-13 * energy.abs().max(1e-300) {
            report.energy_increases += 1;
        }
        energy = e;
        if !change.is_finite() {
            return Err(Error::InvalidArgument(format!("iteration diverged at sweep {it}")));
        }
        if change <= tol {
            let (res, def) = membrane_residuals(fnl, lay, u, v);
            if res <= tol && def <= tol {
                report.converged = true;
                break;
            }
        }
    }
    report.energy = energy;
    Ok(())
}

/// Nonlinear projected SOR for the two-membrane system.
///
/// Each node update is one relaxed Newton step per membrane; at slit nodes
/// where the updated pair would cross, both take the Hessian-weighted mean.
/// Without an initial pair, the quadratic problem is solved first to
/// provide one.
pub fn solve_two_membrane(
    p: &TwoMembraneProblem,
    tol: f64,
    max_iter: usize,
) -> Result<(ScalarField, ScalarField, SolverReport)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")));
    }
    if !(p.omega > 0.0 && p.omega < 2.0) {
        return Err(Error::InvalidArgument(format!("relaxation {} outside (0, 2)", p.omega)));
    }
    let spec = p.bu.spec;
    let lay = Layout::new(spec, p.radius)?;
    let fnl = &p.nonlinearity;
    let mut report = SolverReport::default();
    let (mut u, mut v) = match &p.initial {
        Some((iu, iv)) => {
            (initial_values(&spec, &p.bu, Some(iu), &lay)?, initial_values(&spec, &p.bv, Some(iv), &lay)?)
        }
        None => {
            let mut u = initial_values(&spec, &p.bu, None, &lay)?;
            let mut v = initial_values(&spec, &p.bv, None, &lay)?;
            let quad = Nonlinearity::quadratic();
            if *fnl != quad {
                two_membrane_sweeps(&quad, &lay, &mut u, &mut v, p.omega, tol, max_iter, false, &mut report)?;
                report.converged = false;
                report.energy_increases = 0;
            }
            (u, v)
        }
    };
    for &k in &lay.free {
        if lay.kind[k] == Node::Slit && u[k] < v[k] {
            let c = 0.5 * (u[k] + v[k]);
            u[k] = c;
            v[k] = c;
        }
    }
    if max_cell_gradient(&lay, &u).max(max_cell_gradient(&lay, &v)) > fnl.radius() && *fnl != Nonlinearity::quadratic()
    {
        let gmax = max_cell_gradient(&lay, &u).max(max_cell_gradient(&lay, &v));
        return Err(Error::GradientOutOfRange { norm: gmax, radius: fnl.radius() });
    }
    let check = *fnl != Nonlinearity::quadratic();
    two_membrane_sweeps(fnl, &lay, &mut u, &mut v, p.omega, tol, max_iter, check, &mut report)?;
    let (res, def) = membrane_residuals(fnl, &lay, &u, &v);
    report.residual = res;
    report.defect = def;
    Ok((ScalarField { spec, values: u }, ScalarField { spec, values: v }, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::contact_intervals;

    fn re32(x: f64, y: f64) -> f64 {
        let r = x.hypot(y);
        r.powf(1.5) * (1.5 * y.atan2(x)).cos()
    }

    #[test]
    fn zero_data_gives_zero() {
        let spec = GridSpec::half_square(16);
        let p = ObstacleProblem::laplacian(ScalarField::zeros(spec)).unwrap();
        let (w, rep) = solve_thin_obstacle(&p, 1e-12, 10).unwrap();
        assert!(rep.converged);
        assert!(w.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn downward_linear_data_is_reproduced() {
        // -y vanishes on the slit with nonpositive flux, so it is the solution
        let spec = GridSpec::half_square(32);
        let exact = ScalarField::from_fn(spec, |_, y| -y);
        let p = ObstacleProblem::laplacian(exact.clone()).unwrap().with_omega(suggested_omega(&spec));
        let (w, rep) = solve_thin_obstacle(&p, 1e-12, 5000).unwrap();
        assert!(rep.converged, "{rep:?}");
        for (a, b) in w.values.iter().zip(&exact.values) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(contact_intervals(&w, 1e-8).is_empty());
    }

    #[test]
    fn upward_linear_data_lifts_off_the_slit() {
        let spec = GridSpec::half_square(32);
        let p = ObstacleProblem::laplacian(ScalarField::from_fn(spec, |_, y| y))
            .unwrap()
            .with_omega(suggested_omega(&spec));
        let (w, rep) = solve_thin_obstacle(&p, 1e-12, 5000).unwrap();
        assert!(rep.converged, "{rep:?}");
        let iv = contact_intervals(&w, 1e-8);
        assert_eq!(iv.intervals, vec![(-1.0, 1.0)]);
        let lin = ObstacleProblem::laplacian(ScalarField::from_fn(spec, |_, y| y)).unwrap();
        let e_lin = discrete_energy(&lin, &ScalarField::from_fn(spec, |_, y| y)).unwrap();
        assert!(rep.energy < e_lin);
    }

    #[test]
    fn model_solution_small_grid() {
        let spec = GridSpec::half_square(32);
        let data = ScalarField::from_fn(spec, re32);
        let p = ObstacleProblem::laplacian(data.clone()).unwrap().with_omega(suggested_omega(&spec));
        let (w, rep) = solve_thin_obstacle(&p, 1e-10, 10000).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.energy_increases, 0);
        let err = w.values.iter().zip(&data.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 0.05, "err={err}");
        let flux = slit_flux(&p, &w).unwrap();
        for (i, &q) in flux.iter().enumerate() {
            if spec.x(i) < -0.1 && spec.x(i) > -0.9 {
                assert!(q <= 1e-8);
            }
        }
    }

    #[test]
    fn consistent_and_reference_agree_for_identity() {
        let spec = GridSpec::half_square(8);
        let data = ScalarField::from_fn(spec, re32);
        let a = ObstacleProblem::laplacian(data.clone()).unwrap();
        let b = a.clone().with_stabilization(Stabilization::Reference);
        let (wa, _) = solve_thin_obstacle(&a, 1e-12, 5000).unwrap();
        let (wb, _) = solve_thin_obstacle(&b, 1e-12, 5000).unwrap();
        assert_eq!(wa.values, wb.values);
    }

    #[test]
    fn invalid_options_rejected() {
        let spec = GridSpec::half_square(8);
        let p = ObstacleProblem::laplacian(ScalarField::zeros(spec)).unwrap();
        assert!(solve_thin_obstacle(&p.clone().with_omega(2.0), 1e-8, 10).is_err());
        assert!(solve_thin_obstacle(&p, 0.0, 10).is_err());
        let bad = GridSpec::new(9, 9, -1.0, -0.5, 0.25).unwrap();
        assert!(ObstacleProblem::laplacian(ScalarField::zeros(bad)).is_err());
    }

    #[test]
    fn membrane_matrix_at_rest_is_identity() {
        let spec = GridSpec::half_square(4).cells();
        let z = ScalarField::zeros(spec);
        for kind in [Nonlinearity::quadratic(), Nonlinearity::hodograph()] {
            let m = assemble_membrane_matrix(&kind, (&z, &z), (&z, &z)).unwrap();
            assert!(m.a11.iter().chain(&m.a22).all(|&v| (v - 1.0).abs() < 1e-15));
            assert!(m.a12.iter().all(|&v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn membrane_matrix_rejects_large_gradients() {
        let spec = GridSpec::half_square(4).cells();
        let z = ScalarField::zeros(spec);
        let big = ScalarField::from_fn(spec, |_, _| 0.6);
        assert!(matches!(
            assemble_membrane_matrix(&Nonlinearity::hodograph(), (&big, &z), (&z, &z)),
            Err(Error::GradientOutOfRange { .. })
        ));
    }

    #[test]
    fn equal_traces_stay_in_contact() {
        let spec = GridSpec::half_square(16);
        let b = ScalarField::from_fn(spec, |x, y| 0.05 * x + 0.1 * y);
        let p = TwoMembraneProblem::new(Nonlinearity::hodograph(), b.clone(), b).unwrap();
        let (u, v, rep) = solve_two_membrane(&p, 1e-11, 20000).unwrap();
        assert!(rep.converged, "{rep:?}");
        let slit = u.slit_values().unwrap();
        let slit_v = v.slit_values().unwrap();
        assert!(slit.iter().zip(&slit_v).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}
