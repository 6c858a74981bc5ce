//! Browser bindings for a few of the solvers. Each entry point runs one
//! computation and hands back flat arrays the page can draw directly.

use branchlab::constructor::{construct, AnalyticCurve, ConstructorOptions};
use branchlab::grid::{contact_intervals, ScalarField};
use branchlab::scenario::{frequency_report, model_power, solve_model};
use wasm_bindgen::prelude::*;

fn js_err(e: branchlab::error::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// A field on a uniform grid, row-major with the bottom row first.
#[wasm_bindgen]
pub struct Field {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl From<&ScalarField> for Field {
    fn from(f: &ScalarField) -> Self {
        Self { nx: f.spec.nx, ny: f.spec.ny, values: f.values.clone() }
    }
}

#[wasm_bindgen]
impl Field {
    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }
}

#[wasm_bindgen]
pub struct ObstacleRun {
    field: Field,
    sup_error: f64,
    iterations: usize,
    intervals: Vec<f64>,
}

#[wasm_bindgen]
impl ObstacleRun {
    pub fn field(&self) -> Field {
        Field { nx: self.field.nx, ny: self.field.ny, values: self.field.values.clone() }
    }

    pub fn sup_error(&self) -> f64 {
        self.sup_error
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Non-contact intervals on the slit as `[a0, b0, a1, b1, ...]`.
    pub fn intervals(&self) -> Vec<f64> {
        self.intervals.clone()
    }
}

/// Thin obstacle solve on the upper half-square with data `Re z^exponent`.
#[wasm_bindgen]
pub fn thin_obstacle(n: usize, exponent: f64) -> Result<ObstacleRun, JsValue> {
    let (w, exact, rep) = solve_model(n, exponent, 1e-10).map_err(js_err)?;
    let sup_error = w.values.iter().zip(&exact.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let intervals = contact_intervals(&w, 1e-8).intervals.iter().flat_map(|&(a, b)| [a, b]).collect();
    Ok(ObstacleRun { field: Field::from(&w), sup_error, iterations: rep.iterations, intervals })
}

#[wasm_bindgen]
pub struct FrequencyRun {
    radii: Vec<f64>,
    n: Vec<f64>,
    w: Vec<f64>,
    l: f64,
    m: u32,
    mismatch: f64,
}

#[wasm_bindgen]
impl FrequencyRun {
    pub fn radii(&self) -> Vec<f64> {
        self.radii.clone()
    }

    pub fn frequency(&self) -> Vec<f64> {
        self.n.clone()
    }

    pub fn weiss(&self) -> Vec<f64> {
        self.w.clone()
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn mismatch(&self) -> f64 {
        self.mismatch
    }
}

/// Frequency profile of the thin obstacle solution with data `Re z^exponent`.
/// With `exact` set the data itself is profiled and no solve is done.
#[wasm_bindgen]
pub fn frequency(n: usize, exponent: f64, k: f64, exact: bool) -> Result<FrequencyRun, JsValue> {
    let w = if exact {
        ScalarField::from_fn(branchlab::grid::GridSpec::half_square(n), model_power(exponent))
    } else {
        solve_model(n, exponent, 1e-10).map_err(js_err)?.0
    };
    let (p, _) = frequency_report(&w, k, 4.0).map_err(js_err)?;
    Ok(FrequencyRun { radii: p.radii, n: p.n, w: p.w, l: p.l, m: p.m, mismatch: p.mismatch })
}

#[wasm_bindgen]
pub struct BoundaryRun {
    field: Field,
    extent: f64,
    boundary: Vec<f64>,
    residuals: Vec<f64>,
}

#[wasm_bindgen]
impl BoundaryRun {
    /// `u` on `[-extent, extent]^2`, zero where the map could not be inverted.
    pub fn field(&self) -> Field {
        Field { nx: self.field.nx, ny: self.field.ny, values: self.field.values.clone() }
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    /// Recovered free boundary as `[x0, g0, f0, x1, g1, f1, ...]`.
    pub fn boundary(&self) -> Vec<f64> {
        self.boundary.clone()
    }

    /// Laplacian, boundary, gradient and geometry residuals.
    pub fn residuals(&self) -> Vec<f64> {
        self.residuals.clone()
    }
}

/// One-phase solution whose free boundary is the graph of `curve`, either a
/// name (`flat`, `catenary`, `parabola`) or whitespace separated Taylor
/// coefficients.
#[wasm_bindgen]
pub fn extend_boundary(curve: &str, n: usize, extent: f64) -> Result<BoundaryRun, JsValue> {
    let numeric = curve.trim_start().starts_with(|c: char| c.is_ascii_digit() || "+-.".contains(c));
    let f = if numeric { AnalyticCurve::parse_coefficients(curve) } else { AnalyticCurve::from_name(curve) }
        .map_err(js_err)?;
    let opts = ConstructorOptions { extent, n, ..ConstructorOptions::default() };
    let c = construct(&f, &opts).map_err(js_err)?;
    let mut values = c.u.values.clone();
    for (v, &m) in values.iter_mut().zip(&c.mask) {
        if m {
            *v = 0.0;
        }
    }
    let r = &c.report;
    Ok(BoundaryRun {
        field: Field { nx: c.u.spec.nx, ny: c.u.spec.ny, values },
        extent,
        boundary: c.boundary.iter().flatten().copied().collect(),
        residuals: vec![r.laplacian_residual, r.boundary_residual, r.gradient_residual, r.geometry_error],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obstacle_run_has_one_interval() {
        let r = thin_obstacle(32, 1.5).unwrap();
        assert_eq!(r.field().values().len(), r.field().nx() * r.field().ny());
        assert_eq!(r.intervals().len(), 2);
        assert!(r.sup_error() < 0.05);
    }

    #[test]
    fn exact_profile_classifies_three_halves() {
        let r = frequency(64, 1.5, 1.5, true).unwrap();
        assert_eq!(r.m(), 1);
        assert_eq!(r.radii().len(), r.frequency().len());
    }

    #[test]
    fn catenary_boundary_is_recovered() {
        let r = extend_boundary("catenary", 32, 0.3).unwrap();
        assert_eq!(r.boundary().len() % 3, 0);
        assert!(r.residuals()[3] < 1e-6);
    }
}
