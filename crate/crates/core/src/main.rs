use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use branchlab::beltrami::{
    beltrami_from_matrix, reflect_coefficients, solve_beltrami_with, BeltramiOptions, BeltramiPair,
};
use branchlab::constructor::{construct, AnalyticCurve, ConstructorOptions, DEFAULT_TAYLOR_DEGREE};
use branchlab::frequency::FrequencyProfile;
use branchlab::grid::{contact_intervals, GridSpec, MatrixField, ScalarField};
use branchlab::hodograph::{classical_hodograph_scaled, conformal_hodograph, hodograph_energy_check};
use branchlab::io::{
    csv_string, fmt_f64, read_complex_field, read_field, to_json, write_complex_field, write_field, Config,
};
use branchlab::nonlinearity::{Lagrangian, Nonlinearity};
use branchlab::obstacle::{solve_thin_obstacle, solve_two_membrane, ObstacleProblem, TwoMembraneProblem};
use branchlab::scenario::{self, model_exponent, model_power};
use branchlab::{Error, Result};

#[derive(Parser)]
#[command(name = "branchlab", version, about = "Thin obstacle, two-membrane and one-phase free boundary numerics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Thin obstacle problem on the upper half-disk with zero obstacle on the slit.
    SolveThinObstacle {
        /// Boundary data as a `.fld` file on a half-square grid.
        #[arg(long, conflicts_with = "model")]
        boundary: Option<PathBuf>,
        /// Model boundary data `re32` or `re72` on a grid with spacing `1/n`.
        #[arg(long)]
        model: Option<String>,
        #[arg(long, default_value_t = 128)]
        n: usize,
        /// Coefficients as `<prefix>_a11.fld`, `_a12.fld`, `_a22.fld` on the cell grid.
        #[arg(long)]
        coefficients: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 200_000)]
        max_iter: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Nonlinear thin two-membrane problem `u >= v` on the slit.
    TwoMembrane {
        #[arg(long, requires = "bv")]
        bu: Option<PathBuf>,
        #[arg(long)]
        bv: Option<PathBuf>,
        /// Without `--bu`/`--bv`: difference data `eps Re z^{3/2}` on a smooth trace.
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        #[arg(long, default_value_t = 128)]
        n: usize,
        /// quadratic, hodograph or cosh.
        #[arg(long, default_value = "hodograph")]
        lagrangian: String,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 400_000)]
        max_iter: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Normalized solution of `f_zbar = mu f_z + nu conj(f_z)`.
    Beltrami {
        /// `mu` as `<prefix>_re.fld` and `<prefix>_im.fld`.
        #[arg(long, conflicts_with = "coefficients")]
        mu: Option<PathBuf>,
        /// `nu` in the same layout; zero when absent.
        #[arg(long, requires = "mu")]
        nu: Option<PathBuf>,
        /// Coefficient matrix prefix; the half-plane pair is reflected across the slit.
        #[arg(long)]
        coefficients: Option<PathBuf>,
        #[arg(long, default_value_t = 512)]
        n: usize,
        #[arg(long, default_value_t = 2.0)]
        half_width: f64,
        #[arg(long, default_value_t = 2)]
        padding: usize,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long, default_value_t = 200)]
        max_iter: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Frequency and Weiss profile of a field around the origin.
    Frequency {
        #[arg(long)]
        field: PathBuf,
        #[arg(long, default_value_t = 1.5)]
        k: f64,
        #[arg(long, default_value_t = 4.0)]
        k0: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classical hodograph of a field increasing in `y`, or the conformal
    /// hodograph of a one-phase solution with `--curve`.
    Hodograph {
        #[arg(long)]
        field: PathBuf,
        /// Free boundary gradient squared; the field is divided by its root.
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// Conformal hodograph against this free boundary graph.
        #[arg(long)]
        curve: Option<String>,
        /// Nodes to exclude from the conformal hodograph, nonzero = masked.
        #[arg(long, requires = "curve")]
        mask: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// One-phase solution whose free boundary is a given analytic graph.
    ExtendBoundary {
        /// flat, catenary, parabola[:eps] or a coefficient file.
        #[arg(long)]
        curve: String,
        /// Working disk radius; chosen adaptively when absent.
        #[arg(long)]
        radius: Option<f64>,
        /// Half-width of the output square.
        #[arg(long, default_value_t = 0.3)]
        extent: f64,
        #[arg(long, default_value_t = 128)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_TAYLOR_DEGREE)]
        degree: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run scenario configs; exits 1 when a criterion fails.
    Run {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Output directory for a single config; by default each config
        /// writes next to itself, named after the file without extension.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run independent configs concurrently.
        #[arg(long)]
        parallel: bool,
    },
    /// Summarize a completed run directory.
    Report { dir: PathBuf },
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_json(prefix: &Path, value: &impl serde::Serialize) -> Result<()> {
    std::fs::write(with_suffix(prefix, ".json"), to_json(value)? + "\n")?;
    Ok(())
}

fn ensure_parent(prefix: &Path) -> Result<()> {
    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn read_matrix(prefix: &Path) -> Result<MatrixField> {
    let a11 = read_field(with_suffix(prefix, "_a11.fld"))?;
    let a12 = read_field(with_suffix(prefix, "_a12.fld"))?;
    let a22 = read_field(with_suffix(prefix, "_a22.fld"))?;
    if !a11.spec.same_shape(&a12.spec) || !a11.spec.same_shape(&a22.spec) {
        return Err(Error::Shape("coefficient entries live on different grids".into()));
    }
    MatrixField::new(a11.spec, a11.values, a12.values, a22.values)
}

fn execute(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::SolveThinObstacle { boundary, model, n, coefficients, tol, max_iter, out } => {
            let data = match (boundary, model) {
                (Some(path), _) => read_field(path)?,
                (None, Some(m)) => ScalarField::from_fn(GridSpec::half_square(n), model_power(model_exponent(&m)?)),
                (None, None) => return Err(Error::InvalidArgument("give --boundary or --model".into())),
            };
            let p = match coefficients {
                Some(prefix) => ObstacleProblem::new(read_matrix(&prefix)?, data)?,
                None => ObstacleProblem::laplacian(data)?,
            };
            let omega = branchlab::obstacle::suggested_omega(&p.spec);
            let p = p.with_omega(omega);
            let (w, rep) = solve_thin_obstacle(&p, tol, max_iter)?;
            ensure_parent(&out)?;
            write_field(with_suffix(&out, ".fld"), &w)?;
            let iv = contact_intervals(&w, 1e-9);
            write_json(&out, &json!({ "solver": rep, "intervals": iv.intervals }))?;
            println!("iterations {} converged {} intervals {}", rep.iterations, rep.converged, iv.len());
        }
        Command::TwoMembrane { bu, bv, eps, n, lagrangian, tol, max_iter, out } => {
            let kind: Lagrangian = lagrangian.parse()?;
            let fnl = Nonlinearity::new(kind, Nonlinearity::DEFAULT_RADIUS)?;
            ensure_parent(&out)?;
            let (w, rep) = match (bu, bv) {
                (Some(a), Some(b)) => {
                    let p = TwoMembraneProblem::new(fnl, read_field(a)?, read_field(b)?)?;
                    let (u, v, rep) = solve_two_membrane(&p, tol, max_iter)?;
                    write_field(with_suffix(&out, "_u.fld"), &u)?;
                    write_field(with_suffix(&out, "_v.fld"), &v)?;
                    let w = ScalarField::new(u.spec, u.values.iter().zip(&v.values).map(|(a, b)| a - b).collect())?;
                    (w, rep)
                }
                _ => scenario::two_membrane_difference(n, fnl, eps, tol)?,
            };
            write_field(with_suffix(&out, "_difference.fld"), &w)?;
            let iv = contact_intervals(&w, 1e-12);
            write_json(&out, &json!({ "solver": rep, "intervals": iv.intervals }))?;
            println!("iterations {} converged {} intervals {}", rep.iterations, rep.converged, iv.len());
        }
        Command::Beltrami { mu, nu, coefficients, n, half_width, padding, tol, max_iter, out } => {
            let pair = match (mu, coefficients) {
                (Some(mu), _) => {
                    let (spec, mu) = read_complex_field(mu)?;
                    let nu = match nu {
                        Some(p) => {
                            let (s2, nu) = read_complex_field(p)?;
                            if !s2.same_shape(&spec) {
                                return Err(Error::Shape("mu and nu live on different grids".into()));
                            }
                            nu
                        }
                        None => vec![num_complex::Complex64::new(0.0, 0.0); spec.len()],
                    };
                    BeltramiPair::new(spec, mu, nu)?
                }
                (None, Some(prefix)) => reflect_coefficients(&beltrami_from_matrix(&read_matrix(&prefix)?)?)?,
                (None, None) => return Err(Error::InvalidArgument("give --mu or --coefficients".into())),
            };
            let f = solve_beltrami_with(&pair, tol, max_iter, &BeltramiOptions { n, half_width, padding })?;
            ensure_parent(&out)?;
            write_complex_field(&out, f.spec, &f.values)?;
            write_json(&out, &f.report)?;
            println!(
                "iterations {} converged {} k {}",
                f.report.iterations,
                f.report.converged,
                fmt_f64(f.report.k_ell)
            );
        }
        Command::Frequency { field, k, k0, out } => {
            let w = read_field(field)?;
            let (prof, summary) = scenario::frequency_report(&w, k, k0)?;
            ensure_parent(&out)?;
            std::fs::write(with_suffix(&out, ".csv"), csv_string(&FrequencyProfile::COLUMNS, &prof.rows()))?;
            write_json(&out, &summary)?;
            println!("l {} m {} mismatch {}", fmt_f64(prof.l), prof.m, fmt_f64(prof.mismatch));
        }
        Command::Hodograph { field, lambda, curve, mask, out } => {
            let u = read_field(field)?;
            ensure_parent(&out)?;
            match curve {
                None => {
                    let res = classical_hodograph_scaled(&u, lambda)?;
                    let scaled = u.map(|v| v / lambda.sqrt());
                    let energy = hodograph_energy_check(&scaled, &res)?;
                    write_field(with_suffix(&out, "_uprime.fld"), &res.uprime)?;
                    write_field(with_suffix(&out, "_utilde.fld"), &res.utilde)?;
                    write_json(&out, &json!({ "hodograph": res.report, "energy": energy }))?;
                    println!(
                        "margin {} round trip {} energy defect {}",
                        fmt_f64(res.margin),
                        fmt_f64(res.report.round_trip),
                        fmt_f64(energy.defect)
                    );
                }
                Some(name) => {
                    let f = AnalyticCurve::from_name(&name)?;
                    let mask = match mask {
                        Some(p) => {
                            let m = read_field(p)?;
                            if !m.spec.same_shape(&u.spec) {
                                return Err(Error::Shape("mask and field live on different grids".into()));
                            }
                            Some(m.values.iter().map(|&v| v != 0.0).collect::<Vec<bool>>())
                        }
                        None => None,
                    };
                    let ch = conformal_hodograph(&u, &f, mask.as_deref())?;
                    write_field(with_suffix(&out, "_U.fld"), &ch.conjugate)?;
                    write_field(with_suffix(&out, "_V.fld"), &ch.big_v)?;
                    write_field(with_suffix(&out, "_v.fld"), &ch.v)?;
                    write_complex_field(with_suffix(&out, "_Q"), ch.v.spec, &ch.q)?;
                    write_complex_field(with_suffix(&out, "_P"), ch.v.spec, &ch.p)?;
                    let rows: Vec<Vec<f64>> = ch.eta.iter().map(|r| r.to_vec()).collect();
                    std::fs::write(with_suffix(&out, "_eta.csv"), csv_string(&["x", "eta", "arclength"], &rows))?;
                    write_json(&out, &ch.report)?;
                    println!("eta error {} Im P {}", fmt_f64(ch.report.eta_error), fmt_f64(ch.report.im_p_boundary));
                }
            }
        }
        Command::ExtendBoundary { curve, radius, extent, n, degree, out } => {
            let f = AnalyticCurve::from_name(&curve)?;
            let opts = ConstructorOptions { extent, n, taylor_degree: degree, radius, ..ConstructorOptions::default() };
            let c = construct(&f, &opts)?;
            ensure_parent(&out)?;
            let names = scenario::write_construction(&c, &with_suffix(&out, "_"))?;
            println!("working radius {} wrote {}", fmt_f64(c.report.working_radius), names.join(" "));
        }
        Command::Run { configs, out, parallel } => {
            if out.is_some() && configs.len() > 1 {
                return Err(Error::InvalidArgument("--out needs a single config".into()));
            }
            let jobs: Vec<(Config, PathBuf)> = configs
                .iter()
                .map(|c| Ok((Config::load(c)?, out.clone().unwrap_or_else(|| c.with_extension("")))))
                .collect::<Result<_>>()?;
            let mut dirs: Vec<&PathBuf> = jobs.iter().map(|(_, d)| d).collect();
            dirs.sort();
            dirs.dedup();
            if dirs.len() != jobs.len() {
                return Err(Error::InvalidArgument("two configs share an output directory".into()));
            }
            let results: Vec<Result<scenario::Summary>> = if parallel {
                std::thread::scope(|s| {
                    let handles: Vec<_> = jobs.iter().map(|(c, d)| s.spawn(move || scenario::run(c, d))).collect();
                    handles.into_iter().map(|h| h.join().expect("scenario thread panicked")).collect()
                })
            } else {
                jobs.iter().map(|(c, d)| scenario::run(c, d)).collect()
            };
            let mut pass = true;
            for ((_, dir), r) in jobs.iter().zip(results) {
                pass &= r?.pass;
                if jobs.len() > 1 {
                    println!("== {}", dir.display());
                }
                print!("{}", scenario::report(dir)?);
            }
            if !pass {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Report { dir } => print!("{}", scenario::report(&dir)?),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
