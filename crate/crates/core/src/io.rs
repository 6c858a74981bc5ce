//! Text formats: `.fld` fields, key = value configs, CSV tables and JSON
//! with 17 significant digits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};

/// Decimal rendering with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serialize a field in the `.fld` layout: header `nx ny x0 y0 h`, then one
/// line per grid row starting from the bottom.
pub fn field_to_string(f: &ScalarField) -> String {
    let s = &f.spec;
    let mut out = String::with_capacity(s.len() * 24 + 64);
    let _ = writeln!(out, "{} {} {} {} {}", s.nx, s.ny, fmt_f64(s.x0), fmt_f64(s.y0), fmt_f64(s.h));
    for j in 0..s.ny {
        for i in 0..s.nx {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(&fmt_f64(f.at(i, j)));
        }
        out.push('\n');
    }
    out
}

pub fn parse_field(text: &str) -> Result<ScalarField> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("empty field file".into()))?;
    let hs: Vec<&str> = header.split_whitespace().collect();
    if hs.len() != 5 {
        return Err(Error::Parse(format!("header needs 5 entries, found {}", hs.len())));
    }
    let nx: usize = hs[0].parse().map_err(|_| Error::Parse(format!("bad nx {:?}", hs[0])))?;
    let ny: usize = hs[1].parse().map_err(|_| Error::Parse(format!("bad ny {:?}", hs[1])))?;
    let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad number {s:?}")));
    let spec = GridSpec::new(nx, ny, num(hs[2])?, num(hs[3])?, num(hs[4])?)?;
    let mut values = Vec::with_capacity(spec.len());
    for (row, line) in lines.enumerate() {
        if row >= ny {
            return Err(Error::Parse(format!("more than {ny} data rows")));
        }
        let before = values.len();
        for tok in line.split_whitespace() {
            values.push(num(tok)?);
        }
        if values.len() - before != nx {
            return Err(Error::Parse(format!("row {row} has {} values, expected {nx}", values.len() - before)));
        }
    }
    if values.len() != spec.len() {
        return Err(Error::Parse(format!("expected {ny} data rows, found {}", values.len() / nx)));
    }
    ScalarField::new(spec, values)
}

pub fn write_field(path: impl AsRef<Path>, f: &ScalarField) -> Result<()> {
    fs::write(path, field_to_string(f))?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<ScalarField> {
    parse_field(&fs::read_to_string(path)?)
}

fn suffixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

/// Write a complex field as `<prefix>_re.fld` and `<prefix>_im.fld`.
pub fn write_complex_field(prefix: impl AsRef<Path>, spec: GridSpec, values: &[Complex64]) -> Result<()> {
    let prefix = prefix.as_ref();
    let re = ScalarField::new(spec, values.iter().map(|c| c.re).collect())?;
    let im = ScalarField::new(spec, values.iter().map(|c| c.im).collect())?;
    write_field(suffixed(prefix, "_re.fld"), &re)?;
    write_field(suffixed(prefix, "_im.fld"), &im)
}

pub fn read_complex_field(prefix: impl AsRef<Path>) -> Result<(GridSpec, Vec<Complex64>)> {
    let prefix = prefix.as_ref();
    let re = read_field(suffixed(prefix, "_re.fld"))?;
    let im = read_field(suffixed(prefix, "_im.fld"))?;
    if !re.spec.same_shape(&im.spec) {
        return Err(Error::Shape("real and imaginary parts have different grids".into()));
    }
    let values = re.values.iter().zip(&im.values).map(|(&a, &b)| Complex64::new(a, b)).collect();
    Ok((re.spec, values))
}

/// Flat `key = value` configuration. `#` starts a comment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) =
                line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", n + 1)));
            }
            if entries.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {k:?}", n + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::Config(format!("missing key {key:?}")))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => parse_real(v).map_err(|_| Error::Config(format!("{key}: not a number: {v:?}"))),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| Error::Config(format!("{key}: not a count: {v:?}"))),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| Error::Config(format!("{key}: not an integer: {v:?}"))),
        }
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.get(key).unwrap_or(default)
    }

    /// Comma separated list of counts.
    pub fn usize_list_or(&self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|t| t.trim().parse().map_err(|_| Error::Config(format!("{key}: bad entry {t:?}"))))
                .collect(),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Real number, also accepting a fraction `p/q` such as `1/128`.
pub fn parse_real(s: &str) -> std::result::Result<f64, std::num::ParseFloatError> {
    match s.split_once('/') {
        Some((p, q)) => Ok(p.trim().parse::<f64>()? / q.trim().parse::<f64>()?),
        None => s.trim().parse(),
    }
}

/// CSV with a header row; all numbers at 17 significant digits.
pub fn csv_string(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

struct SigDigits;

impl serde_json::ser::Formatter for SigDigits {
    fn write_f64<W: ?Sized + std::io::Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        if value.is_finite() {
            write!(writer, "{}", fmt_f64(value))
        } else {
            writer.write_all(b"null")
        }
    }
}

/// Pretty-ish JSON with every float at 17 significant digits.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigits);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}
