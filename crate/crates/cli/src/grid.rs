//! Hyperparameter sweep grids.
//!
//! Each axis is written `name=values` where `values` is one of
//! - `lo..hi`      one point per decade from `lo` up to `hi`
//! - `lo..hi:n`    `n` log-spaced points including both ends
//! - `a,b,c`       an explicit list (a single number is a one-point axis)

use crate::CliError;

pub const AXES: [&str; 4] = ["alpha", "beta", "gamma", "lambda"];

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub name: String,
    pub values: Vec<f64>,
}

fn number(s: &str) -> Result<f64, CliError> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid number {s:?} in sweep")))?;
    if !v.is_finite() {
        return Err(CliError::Usage(format!("non-finite value {s:?} in sweep")));
    }
    Ok(v)
}

fn decades(lo: f64, hi: f64) -> Vec<f64> {
    let e0 = lo.log10();
    let whole = (e0 - e0.round()).abs() < 1e-12;
    let mut out = Vec::new();
    for k in 0.. {
        // exact powers of ten stay exact; anything else scales by 10^k
        let v = if whole { 10f64.powi(e0.round() as i32 + k) } else { lo * 10f64.powi(k) };
        if v > hi * (1.0 + 1e-9) {
            break;
        }
        out.push(v);
    }
    out
}

fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| match i {
            0 => lo,
            _ if i == n - 1 => hi,
            _ => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

pub fn parse_values(spec: &str) -> Result<Vec<f64>, CliError> {
    if let Some((lo, rest)) = spec.split_once("..") {
        let (hi, n) = match rest.split_once(':') {
            Some((hi, n)) => {
                let n: usize = n
                    .trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("invalid point count {n:?} in sweep")))?;
                if n == 0 {
                    return Err(CliError::Usage("sweep point count must be positive".into()));
                }
                (hi, Some(n))
            }
            None => (rest, None),
        };
        let (lo, hi) = (number(lo)?, number(hi)?);
        if lo <= 0.0 || hi < lo {
            return Err(CliError::Usage(format!("log range needs 0 < lo <= hi, got {lo}..{hi}")));
        }
        return Ok(match n {
            Some(n) => log_spaced(lo, hi, n),
            None => decades(lo, hi),
        });
    }
    let values = spec.split(',').map(number).collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(CliError::Usage("empty sweep axis".into()));
    }
    Ok(values)
}

pub fn parse_axis(spec: &str) -> Result<Axis, CliError> {
    let (name, values) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("sweep axis must look like name=values, got {spec:?}")))?;
    let name = name.trim().to_ascii_lowercase();
    if !AXES.contains(&name.as_str()) {
        return Err(CliError::Usage(format!("cannot sweep {name:?}; expected one of {}", AXES.join(", "))));
    }
    Ok(Axis { name, values: parse_values(values)? })
}

pub fn parse_axes(specs: &[String]) -> Result<Vec<Axis>, CliError> {
    let mut axes: Vec<Axis> = Vec::new();
    for s in specs {
        let axis = parse_axis(s)?;
        if axes.iter().any(|a| a.name == axis.name) {
            return Err(CliError::Usage(format!("sweep axis {} given twice", axis.name)));
        }
        axes.push(axis);
    }
    Ok(axes)
}

/// Cartesian product, first axis slowest.
pub fn cells(axes: &[Axis]) -> Vec<Vec<(String, f64)>> {
    let mut out = vec![Vec::new()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |&v| {
                    let mut cell = prefix.clone();
                    cell.push((axis.name.clone(), v));
                    cell
                })
            })
            .collect();
    }
    out
}
