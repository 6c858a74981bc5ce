//! Reproducible experiments driven by flat `key = value` configs. Each run
//! writes its fields and tables into one directory together with a
//! `summary.json` listing every criterion with its value and limit.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::beltrami::{beltrami_from_matrix, normalize_det, pullback, reflect_coefficients, solve_beltrami};
use crate::constructor::{construct, AnalyticCurve, Construction, ConstructorOptions};
use crate::error::{Error, Result};
use crate::frequency::{
    decay_bounds, frequency_profile, max_decrease, radii_for, thin_obstacle_residual, FrequencyProfile, WeissConstants,
};
use crate::grid::{contact_intervals, contact_intervals_within, GridSpec, IntervalSet, ScalarField};
use crate::hodograph::{
    classical_hodograph_scaled, conformal_hodograph, hodograph_energy_check, lagrangian_residual, loop_defect,
};
use crate::io::{csv_string, to_json, write_complex_field, write_field, Config};
use crate::nonlinearity::{Lagrangian, Nonlinearity};
use crate::obstacle::{
    assemble_membrane_matrix, solve_thin_obstacle, solve_two_membrane, suggested_omega, ObstacleProblem,
    TwoMembraneProblem,
};

pub const KINDS: [&str; 6] = [
    "model-recovery",
    "straighten",
    "two-membrane-refinement",
    "frequency-scan",
    "construct-boundary",
    "two-phase-hodograph",
];

pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub name: String,
    pub value: Option<f64>,
    /// `<=`, `>=` or `==`.
    pub relation: String,
    pub limit: f64,
    pub pass: bool,
}

impl Criterion {
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self::new(name, value, "<=", limit, value <= limit)
    }

    pub fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Self::new(name, value, ">=", limit, value >= limit)
    }

    pub fn equals(name: &str, value: f64, target: f64) -> Self {
        Self::new(name, value, "==", target, value == target)
    }

    fn new(name: &str, value: f64, relation: &str, limit: f64, pass: bool) -> Self {
        let value = value.is_finite().then_some(value);
        Self { name: name.to_string(), value, relation: relation.to_string(), limit, pass }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub kind: String,
    pub seed: u64,
    /// The mathematical statements the run exercises.
    pub anchors: Vec<String>,
    pub parameters: BTreeMap<String, String>,
    pub criteria: Vec<Criterion>,
    pub metrics: BTreeMap<String, Value>,
    /// Files written next to the summary, relative to the run directory.
    pub artifacts: Vec<String>,
    pub pass: bool,
}

struct Run<'a> {
    dir: &'a Path,
    summary: Summary,
}

impl Run<'_> {
    fn metric(&mut self, key: &str, v: impl Serialize) -> Result<()> {
        self.summary.metrics.insert(key.to_string(), serde_json::to_value(v)?);
        Ok(())
    }

    fn criterion(&mut self, c: Criterion) {
        self.summary.criteria.push(c);
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.summary.artifacts.push(name.to_string());
        self.dir.join(name)
    }

    fn field(&mut self, name: &str, f: &ScalarField) -> Result<()> {
        let p = self.path(name);
        write_field(p, f)
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let p = self.path(name);
        Ok(fs::write(p, body)?)
    }
}

/// Grid size from `n`, or from `h` as `1/n`.
fn grid_n(cfg: &Config, default: usize) -> Result<usize> {
    match cfg.get("h") {
        Some(_) => {
            let h = cfg.f64_or("h", 0.0)?;
            if !(h > 0.0 && h <= 0.5) {
                return Err(Error::Config(format!("h = {h} must lie in (0, 1/2]")));
            }
            Ok((1.0 / h).round() as usize)
        }
        None => cfg.usize_or("n", default),
    }
}

fn flag(cfg: &Config, key: &str, default: bool) -> Result<bool> {
    match cfg.get(key) {
        None => Ok(default),
        Some("true" | "yes" | "1") => Ok(true),
        Some("false" | "no" | "0") => Ok(false),
        Some(v) => Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

/// `Re z^p` in polar form, zero at the origin.
pub fn model_power(p: f64) -> impl Fn(f64, f64) -> f64 {
    move |x: f64, y: f64| {
        let r = x.hypot(y);
        if r == 0.0 {
            0.0
        } else {
            r.powf(p) * (p * y.atan2(x)).cos()
        }
    }
}

/// Exponent of a named model datum: `re32` is `Re z^{3/2}`, `re72` is
/// `Re z^{7/2}`.
pub fn model_exponent(name: &str) -> Result<f64> {
    match name {
        "re32" => Ok(1.5),
        "re72" => Ok(3.5),
        other => Err(Error::Config(format!("unknown model datum {other:?}; expected re32 or re72"))),
    }
}

/// Executes the scenario described by `cfg`, writing into `dir`.
pub fn run(cfg: &Config, dir: &Path) -> Result<Summary> {
    let kind = cfg.require("kind")?.to_string();
    if !KINDS.contains(&kind.as_str()) {
        return Err(Error::Config(format!("unknown kind {kind:?}; expected one of {}", KINDS.join(", "))));
    }
    fs::create_dir_all(dir)?;
    let seed = cfg.u64_or("seed", 0)?;
    let parameters = cfg.keys().map(|k| (k.to_string(), cfg.get(k).unwrap_or("").to_string())).collect();
    let mut run = Run {
        dir,
        summary: Summary {
            kind: kind.clone(),
            seed,
            anchors: Vec::new(),
            parameters,
            criteria: Vec::new(),
            metrics: BTreeMap::new(),
            artifacts: Vec::new(),
            pass: false,
        },
    };
    run.text("config.txt", &cfg.to_text())?;
    match kind.as_str() {
        "model-recovery" => model_recovery(cfg, &mut run)?,
        "straighten" => straighten(cfg, &mut run)?,
        "two-membrane-refinement" => two_membrane_refinement(cfg, &mut run)?,
        "frequency-scan" => frequency_scan(cfg, &mut run)?,
        "construct-boundary" => construct_boundary(cfg, &mut run, seed)?,
        "two-phase-hodograph" => two_phase_hodograph(cfg, &mut run)?,
        _ => unreachable!("kind validated above"),
    }
    let mut summary = run.summary;
    summary.pass = summary.criteria.iter().all(|c| c.pass);
    summary.artifacts.push(SUMMARY_FILE.to_string());
    fs::write(dir.join(SUMMARY_FILE), to_json(&summary)? + "\n")?;
    Ok(summary)
}

fn sup_error(a: &ScalarField, b: &ScalarField) -> f64 {
    a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Harmonic thin obstacle solve with model data on the upper half-disk.
pub fn solve_model(
    n: usize,
    exponent: f64,
    tol: f64,
) -> Result<(ScalarField, ScalarField, crate::obstacle::SolverReport)> {
    let spec = GridSpec::half_square(n);
    let exact = ScalarField::from_fn(spec, model_power(exponent));
    let p = ObstacleProblem::laplacian(exact.clone())?.with_omega(suggested_omega(&spec));
    let (w, rep) = solve_thin_obstacle(&p, tol, 200_000)?;
    Ok((w, exact, rep))
}

fn model_recovery(cfg: &Config, run: &mut Run) -> Result<()> {
    run.summary.anchors = vec![
        "harmonic thin obstacle problem with the homogeneous solution Re z^{3/2}".into(),
        "non-contact set of the model solution is the half-line x > 0".into(),
    ];
    let n = grid_n(cfg, 128)?;
    let tol = cfg.f64_or("tol", 1e-10)?;
    let contact_tol = cfg.f64_or("contact_tol", 1e-8)?;
    let (w, exact, rep) = solve_model(n, 1.5, tol)?;
    let err = sup_error(&w, &exact);
    let iv = contact_intervals(&w, contact_tol);
    run.field("u.fld", &w)?;
    run.field("exact.fld", &exact)?;
    run.metric("h", 1.0 / n as f64)?;
    run.metric("sup_error", err)?;
    run.metric("intervals", &iv.intervals)?;
    run.metric("solver", &rep)?;
    run.criterion(Criterion::at_most("sup_error", err, cfg.f64_or("max_error", 0.02)?));
    run.criterion(Criterion::equals("interval_count", iv.len() as f64, 1.0));
    let left = iv.intervals.first().map_or(f64::INFINITY, |iv| iv.0.abs());
    run.criterion(Criterion::at_most("left_endpoint_offset", left, 0.05));
    if flag(cfg, "refine", false)? {
        let (w2, exact2, _) = solve_model(2 * n, 1.5, tol)?;
        let err2 = sup_error(&w2, &exact2);
        run.metric("sup_error_refined", err2)?;
        run.criterion(Criterion::at_least("refinement_ratio", err / err2, 1.3));
    }
    Ok(())
}

/// Per-radius table, the classification and the decay bounds for `w`.
pub fn frequency_report(w: &ScalarField, k: f64, k0: f64) -> Result<(FrequencyProfile, Value)> {
    let c = WeissConstants::new(2, k, k0)?;
    let radii = radii_for(&w.spec)?;
    let prof = frequency_profile(w, &c, &radii)?;
    let bounds = decay_bounds(w, prof.l, &radii, crate::frequency::DEFAULT_RATIO_BOUND)?;
    let summary = json!({
        "l": prof.l,
        "m": prof.m,
        "mismatch": prof.mismatch,
        "gamma_est": prof.gamma_est,
        "C_upper": bounds.c_upper,
        "eta_lower": bounds.eta_lower,
    });
    Ok((prof, summary))
}

fn frequency_scan(cfg: &Config, run: &mut Run) -> Result<()> {
    run.summary.anchors = vec![
        "Almgren frequency limit l = 2m - 1/2 at branch points".into(),
        "monotonicity of the truncated frequency and of the Weiss energy".into(),
    ];
    let w = match cfg.get("field") {
        Some(path) => crate::io::read_field(path)?,
        None => {
            let exponent = model_exponent(cfg.str_or("data", "re32"))?;
            let n = grid_n(cfg, 128)?;
            let (w, _, _) = solve_model(n, exponent, cfg.f64_or("tol", 1e-11)?)?;
            run.field("u.fld", &w)?;
            w
        }
    };
    let (prof, fsum) = frequency_report(&w, cfg.f64_or("k", 1.5)?, cfg.f64_or("k0", 4.0)?)?;
    run.text("profile.csv", &csv_string(&FrequencyProfile::COLUMNS, &prof.rows()))?;
    run.text("frequency.json", &(to_json(&fsum)? + "\n"))?;
    for key in ["l", "m", "mismatch", "gamma_est", "C_upper", "eta_lower"] {
        run.metric(key, &fsum[key])?;
    }
    run.metric("infinite_order", prof.infinite_order)?;
    run.criterion(Criterion::at_most("mismatch", prof.mismatch, cfg.f64_or("max_mismatch", 0.02)?));
    run.metric("ntrunc_positive_denominator", prof.ntrunc_valid.iter().filter(|v| **v).count())?;
    run.criterion(Criterion::at_most("ntrunc_decrease", max_decrease(&prof.ntrunc), 1e-3));
    if let Some(m) = cfg.get("expect_m") {
        let m: u32 = m.parse().map_err(|_| Error::Config(format!("expect_m: not a count: {m:?}")))?;
        run.criterion(Criterion::equals("m", prof.m as f64, m as f64));
    }
    Ok(())
}

/// Manufactured smooth gradient pair whose membrane matrix drives the
/// straightening scenario.
pub fn manufactured_coefficients(spec: &GridSpec) -> Result<crate::grid::MatrixField> {
    let cs = spec.cells();
    let gux = ScalarField::from_fn(cs, |x, _| 0.2 * (PI * x).sin());
    let guy = ScalarField::from_fn(cs, |_, y| -0.4 + 0.05 * y);
    let gvx = ScalarField::from_fn(cs, |x, y| 0.1 * x * y);
    let gvy = ScalarField::from_fn(cs, |x, _| -0.3 - 0.1 * x * x);
    assemble_membrane_matrix(&Nonlinearity::hodograph(), (&gux, &guy), (&gvx, &gvy))
}

pub struct Straightened {
    pub u: ScalarField,
    pub pullback: crate::beltrami::Pullback,
    pub map: crate::beltrami::QuasiconformalMap,
    pub residual: crate::frequency::ThinObstacleResidual,
    pub original: IntervalSet,
    pub pulled: IntervalSet,
}

/// Variable-coefficient thin obstacle solve, straightening map and
/// pullback, with the weak residual of the pullback at bump radius `s`.
pub fn straighten_pipeline(n: usize, s: f64) -> Result<Straightened> {
    let spec = GridSpec::half_square(n);
    let norm = normalize_det(&manufactured_coefficients(&spec)?)?;
    let data = ScalarField::from_fn(spec, model_power(1.5));
    let p = ObstacleProblem::new(norm.matrix.clone(), data)?.with_omega(suggested_omega(&spec));
    let (u, _) = solve_thin_obstacle(&p, 1e-11, 200_000)?;
    let pair = reflect_coefficients(&beltrami_from_matrix(&norm.matrix)?)?;
    let map = solve_beltrami(&pair, 1e-12, 200)?;
    let pb = pullback(&u, &map)?;
    let residual = thin_obstacle_residual(&pb.field, Some(&pb.mask), 1.0, s, 1e-9)?;
    let original = contact_intervals(&u, 1e-9);
    let valid: Vec<f64> = (0..spec.nx).filter(|&i| pb.mask[i]).map(|i| spec.x(i)).collect();
    let pulled = match (valid.first(), valid.last()) {
        (Some(&a), Some(&b)) => contact_intervals_within(&pb.field, 1e-9, a, b),
        _ => IntervalSet::default(),
    };
    Ok(Straightened { u, pullback: pb, map, residual, original, pulled })
}

fn straighten(cfg: &Config, run: &mut Run) -> Result<()> {
    run.summary.anchors = vec![
        "quasiconformal straightening of a divergence-form operator via a Beltrami equation".into(),
        "the pullback u o f^{-1} solves the harmonic thin obstacle problem".into(),
    ];
    let n = grid_n(cfg, 128)?;
    let st = straighten_pipeline(n, cfg.f64_or("bump_radius", 0.1)?)?;
    run.field("u.fld", &st.u)?;
    run.field("pullback.fld", &st.pullback.field)?;
    let prefix = run.dir.join("map");
    write_complex_field(&prefix, st.map.spec, &st.map.values)?;
    run.summary.artifacts.push("map_re.fld".into());
    run.summary.artifacts.push("map_im.fld".into());
    run.metric("residual", &st.residual)?;
    run.metric("beltrami", &st.map.report)?;
    run.metric("intervals_original", &st.original.intervals)?;
    run.metric("intervals_pullback", &st.pulled.intervals)?;
    run.metric("masked", st.pullback.masked)?;
    run.criterion(Criterion::at_most("pullback_residual", st.residual.worst, cfg.f64_or("max_residual", 5e-3)?));
    run.criterion(Criterion::equals("interval_count_change", st.pulled.len() as f64 - st.original.len() as f64, 0.0));
    Ok(())
}

/// Two-membrane solve with difference data `eps Re z^{3/2}` on top of a
/// smooth common trace; returns `u - v`.
pub fn two_membrane_difference(
    n: usize,
    fnl: Nonlinearity,
    eps: f64,
    tol: f64,
) -> Result<(ScalarField, crate::obstacle::SolverReport)> {
    let spec = GridSpec::half_square(n);
    // the y-slope on the slit makes dF/dp_y vanish there for the hodograph
    // Lagrangian, so the free slit meets the Dirichlet sides without a corner
    // singularity
    let c = 1.01f64.sqrt() - 1.0;
    let base = move |x: f64, y: f64| 0.1 * x + c * y + 0.1 * y * y;
    let m = model_power(1.5);
    let bv = ScalarField::from_fn(spec, base);
    let bu = ScalarField::from_fn(spec, |x, y| base(x, y) + eps * m(x, y));
    let p = TwoMembraneProblem::new(fnl, bu, bv)?;
    let (u, v, rep) = solve_two_membrane(&p, tol, 400_000)?;
    let w = ScalarField::new(spec, u.values.iter().zip(&v.values).map(|(a, b)| a - b).collect())?;
    Ok((w, rep))
}

fn two_membrane_refinement(cfg: &Config, run: &mut Run) -> Result<()> {
    run.summary.anchors = vec!["finitely many contact intervals for the nonlinear thin two-membrane problem".into()];
    let grids = cfg.usize_list_or("grids", &[64, 128, 256])?;
    let kind: Lagrangian = cfg.str_or("lagrangian", "hodograph").parse()?;
    let fnl = Nonlinearity::new(kind, cfg.f64_or("validity_radius", Nonlinearity::DEFAULT_RADIUS)?)?;
    let eps = cfg.f64_or("eps", 0.01)?;
    let tol = cfg.f64_or("tol", 1e-10)?;
    let mut counts = Vec::new();
    let mut all = Vec::new();
    for &n in &grids {
        let (w, rep) = two_membrane_difference(n, fnl, eps, tol)?;
        let iv = contact_intervals(&w, cfg.f64_or("contact_tol", 1e-12)?);
        run.field(&format!("difference_{n}.fld"), &w)?;
        counts.push(iv.len());
        all.push(json!({ "n": n, "intervals": iv.intervals, "solver": rep }));
    }
    run.metric("counts", &counts)?;
    run.metric("meshes", &all)?;
    let spread = counts.iter().max().copied().unwrap_or(0) as f64 - counts.iter().min().copied().unwrap_or(0) as f64;
    run.criterion(Criterion::equals("interval_count_spread", spread, 0.0));
    run.criterion(Criterion::at_least("interval_count", counts.iter().min().copied().unwrap_or(0) as f64, 1.0));
    Ok(())
}

/// Writes `U`, `u`, `V`, `v`, the recovered boundary and the residual
/// report under `prefix`, plus `uh`, the harmonic extension of `u`, and
/// `mask` with 1 at nodes outside the working disk. Returns the file names
/// written.
pub fn write_construction(c: &Construction, prefix: &Path) -> Result<Vec<String>> {
    let stem = prefix.file_name().and_then(|s| s.to_str()).unwrap_or("").to_string();
    let join = |suffix: &str| -> (PathBuf, String) {
        let name = format!("{stem}{suffix}");
        (prefix.with_file_name(&name), name)
    };
    let mut names = Vec::new();
    let mask = ScalarField::new(c.u_harmonic.spec, c.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect())?;
    let fields = [
        ("U.fld", &c.conjugate),
        ("u.fld", &c.u),
        ("uh.fld", &c.u_harmonic),
        ("mask.fld", &mask),
        ("V.fld", &c.big_v),
        ("v.fld", &c.v),
    ];
    for (suffix, f) in fields {
        let (p, name) = join(suffix);
        write_field(p, f)?;
        names.push(name);
    }
    let rows: Vec<Vec<f64>> = c.boundary.iter().map(|r| r.to_vec()).collect();
    let (p, name) = join("boundary.csv");
    fs::write(p, csv_string(&["x", "g", "f"], &rows))?;
    names.push(name);
    let (p, name) = join("report.json");
    fs::write(p, to_json(&c.report)? + "\n")?;
    names.push(name);
    Ok(names)
}

fn construct_boundary(cfg: &Config, run: &mut Run, seed: u64) -> Result<()> {
    run.summary.anchors = vec![
        "every analytic graph is the free boundary of a one-phase solution".into(),
        "conformal hodograph identities f' = v_x'/v_y', eta' = 1/v_y', |grad u| |grad v| = 1".into(),
    ];
    let curve = AnalyticCurve::from_name(cfg.str_or("curve", "catenary"))?;
    let opts = ConstructorOptions {
        extent: cfg.f64_or("extent", 0.3)?,
        n: grid_n(cfg, 128)?,
        taylor_degree: cfg.usize_or("taylor_degree", crate::constructor::DEFAULT_TAYLOR_DEGREE)?,
        radius: cfg.get("radius").map(|_| cfg.f64_or("radius", 0.0)).transpose()?,
        samples: cfg.usize_or("samples", 201)?,
    };
    let c = construct(&curve, &opts)?;
    let names = write_construction(&c, &run.dir.join("construction_"))?;
    run.summary.artifacts.extend(names);
    let r = &c.report;
    run.metric("construction", r)?;
    let tol = cfg.f64_or("tolerance", 1e-4)?;
    run.criterion(Criterion::at_most("laplacian_residual", r.laplacian_residual, tol));
    run.criterion(Criterion::at_most("boundary_residual", r.boundary_residual, tol));
    run.criterion(Criterion::at_most("gradient_residual", r.gradient_residual, tol));
    run.criterion(Criterion::at_most("geometry_error", r.geometry_error, cfg.f64_or("geometry_tolerance", 1e-6)?));

    // Path independence of the conjugate on random 2x2 loops clear of the mask.
    let s = c.u_harmonic.spec;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut loops = Vec::new();
    let mut attempts = 0;
    while loops.len() < 32 && attempts < 10_000 {
        attempts += 1;
        let i = rng.gen_range(1..s.nx - 4);
        let j = rng.gen_range(1..s.ny - 4);
        let clear = (i - 1..i + 4).all(|a| (j - 1..j + 4).all(|b| !c.mask[s.index(a, b)]));
        if clear {
            loops.push((i, j));
        }
    }
    let ld = loop_defect(&c.u_harmonic, &loops)?;
    run.metric("loop_defect", ld)?;
    run.metric("loops", loops.len())?;

    if flag(cfg, "hodograph", true)? {
        let ch = conformal_hodograph(&c.u_harmonic, &curve, Some(&c.mask))?;
        let id_tol = cfg.f64_or("identity_tolerance", 1e-3)?;
        run.metric("conformal", &ch.report)?;
        let rows: Vec<Vec<f64>> = ch.eta.iter().map(|r| r.to_vec()).collect();
        run.text("eta.csv", &csv_string(&["x", "eta", "arclength"], &rows))?;
        let rep = &ch.report;
        run.criterion(Criterion::at_most("slope_identity", rep.slope_identity, id_tol));
        run.criterion(Criterion::at_most("eta_prime_identity", rep.eta_prime_identity, id_tol));
        run.criterion(Criterion::at_most("gradient_product", rep.gradient_product, id_tol));
        run.criterion(Criterion::at_most("im_p_boundary", rep.im_p_boundary, id_tol));
        run.criterion(Criterion::at_most("q_modulus", rep.q_modulus, id_tol));
        run.criterion(Criterion::at_most("eta_error", rep.eta_error, cfg.f64_or("eta_tolerance", 1e-4)?));
    }
    Ok(())
}

fn two_phase_hodograph(cfg: &Config, run: &mut Run) -> Result<()> {
    run.summary.anchors = vec![
        "two-phase reduction: each phase rescaled by sqrt(Lambda) and hodographed".into(),
        "hodograph of a harmonic function is critical for F = |p|^2 / (2 (1 + p_y))".into(),
    ];
    let lu = cfg.f64_or("lambda_u", f64::NAN)?;
    let lv = cfg.f64_or("lambda_v", f64::NAN)?;
    if !(lv > 0.0 && lu >= lv && lu.is_finite()) {
        return Err(Error::Config(format!("need lambda_u >= lambda_v > 0, got lambda_u = {lu}, lambda_v = {lv}")));
    }
    let n = grid_n(cfg, 128)?;
    let eps = cfg.f64_or("eps", 0.1)?;
    let h = 1.0 / n as f64;
    let spec = GridSpec::half_square(n);
    let fnl = Nonlinearity::hodograph();
    let id_tol = 10.0 * h * h;
    for (name, lambda) in [("u", lu), ("v", lv)] {
        // Each phase, written in its own upper half-plane, has free boundary
        // gradient sqrt(lambda).
        let phase = ScalarField::from_fn(spec, |x, y| lambda.sqrt() * y * (1.0 + eps * x));
        let res = classical_hodograph_scaled(&phase, lambda)?;
        let scaled = phase.map(|v| v / lambda.sqrt());
        let energy = hodograph_energy_check(&scaled, &res)?;
        let lag = lagrangian_residual(&res.utilde, &fnl);
        run.field(&format!("utilde_{name}.fld"), &res.utilde)?;
        run.metric(&format!("hodograph_{name}"), &res.report)?;
        run.metric(&format!("energy_{name}"), energy)?;
        run.metric(&format!("lagrangian_residual_{name}"), lag)?;
        run.criterion(Criterion::at_least(&format!("margin_{name}"), res.margin, f64::MIN_POSITIVE));
        run.criterion(Criterion::at_most(&format!("identity_z_{name}"), res.report.identity_z, id_tol));
        run.criterion(Criterion::at_most(&format!("identity_s_{name}"), res.report.identity_s, id_tol));
        run.criterion(Criterion::at_most(&format!("energy_defect_{name}"), energy.defect, 1e-3));
    }
    Ok(())
}

fn fmt_value(v: Option<f64>) -> String {
    v.map_or_else(|| "non-finite".to_string(), crate::io::fmt_f64)
}

/// Human-readable table of a completed run. Reads `summary.json` and never
/// recomputes anything.
pub fn report(dir: &Path) -> Result<String> {
    let path = dir.join(SUMMARY_FILE);
    if !path.is_file() {
        let empty = fs::read_dir(dir).map(|mut d| d.next().is_none()).unwrap_or(true);
        let why = if empty { "directory is empty or missing" } else { "no summary.json" };
        return Err(Error::InvalidArgument(format!("{}: {why}", dir.display())));
    }
    let summary: Summary = serde_json::from_str(&fs::read_to_string(&path)?)?;
    let mut out = String::new();
    let verdict = if summary.pass { "PASS" } else { "FAIL" };
    let _ = writeln!(out, "{} (seed {}): {verdict}", summary.kind, summary.seed);
    for a in &summary.anchors {
        let _ = writeln!(out, "  anchor: {a}");
    }
    let width = summary.criteria.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &summary.criteria {
        let _ = writeln!(
            out,
            "  [{}] {:width$}  {} {} {}",
            if c.pass { "pass" } else { "FAIL" },
            c.name,
            fmt_value(c.value),
            c.relation,
            crate::io::fmt_f64(c.limit),
        );
    }
    let m = &summary.metrics;
    let num = |k: &str| m.get(k).and_then(Value::as_f64).map_or("?".to_string(), crate::io::fmt_f64);
    match summary.kind.as_str() {
        "model-recovery" => {
            let _ = writeln!(out, "  sup-error {}", num("sup_error"));
            if let Some(Value::Array(iv)) = m.get("intervals") {
                for v in iv {
                    let end = |k: usize| v.get(k).and_then(Value::as_f64).map_or("?".to_string(), crate::io::fmt_f64);
                    let _ = writeln!(out, "  non-contact interval ({}, {})", end(0), end(1));
                }
            }
        }
        "frequency-scan" => {
            let mm = m.get("m").map_or("?".to_string(), Value::to_string);
            let _ = writeln!(out, "  l {}  m {mm}  mismatch {}", num("l"), num("mismatch"));
        }
        "two-membrane-refinement" => {
            if let Some(c) = m.get("counts") {
                let _ = writeln!(out, "  interval counts {c}");
            }
        }
        _ => {}
    }
    for a in summary.artifacts.iter().filter(|a| a.ends_with(".csv")) {
        let _ = writeln!(out, "  csv: {}", dir.join(a).display());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_powers() {
        let f = model_power(1.5);
        assert!((f(1.0, 0.0) - 1.0).abs() < 1e-15);
        assert!(f(-1.0, 0.0).abs() < 1e-15);
        assert_eq!(f(0.0, 0.0), 0.0);
        assert!(model_exponent("re72").unwrap() == 3.5 && model_exponent("x").is_err());
    }

    #[test]
    fn criteria_relations() {
        assert!(Criterion::at_most("a", 1.0, 1.0).pass);
        assert!(!Criterion::at_least("a", 0.5, 1.0).pass);
        assert!(!Criterion::at_most("a", f64::NAN, 1.0).pass);
        assert_eq!(Criterion::at_most("a", f64::NAN, 1.0).value, None);
        assert!(Criterion::equals("a", 2.0, 2.0).pass);
    }

    #[test]
    fn grid_from_h_or_n() {
        assert_eq!(grid_n(&Config::parse("h = 1/64").unwrap(), 8).unwrap(), 64);
        assert_eq!(grid_n(&Config::parse("n = 32").unwrap(), 8).unwrap(), 32);
        assert_eq!(grid_n(&Config::default(), 8).unwrap(), 8);
        assert!(grid_n(&Config::parse("h = 2").unwrap(), 8).is_err());
    }

    #[test]
    fn two_phase_constants_are_validated() {
        let dir = tempfile::tempdir().unwrap();
        for text in [
            "kind = two-phase-hodograph\nlambda_u = 1\nlambda_v = 2",
            "kind = two-phase-hodograph\nlambda_u = 1\nlambda_v = 0",
        ] {
            let cfg = Config::parse(text).unwrap();
            assert!(matches!(run(&cfg, dir.path()), Err(Error::Config(_))));
        }
    }

    #[test]
    fn unknown_kind_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = Config::parse("kind = nonsense").unwrap();
        assert!(matches!(run(&cfg, dir.path()), Err(Error::Config(_))));
    }

    #[test]
    fn report_needs_a_summary() {
        let dir = tempfile::tempdir().unwrap();
        assert!(report(dir.path()).is_err());
        assert!(report(&dir.path().join("missing")).is_err());
    }
}
