//! Parameter grids given on the command line.

use qigeom::{Error, Result};

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::domain(format!("'{s}' is not a number")))
}

fn parts(spec: &str) -> Result<(f64, f64, &str)> {
    let p: Vec<&str> = spec.split(':').collect();
    if p.len() != 3 {
        return Err(Error::domain(format!("grid '{spec}' must be lo:hi:x")));
    }
    let (lo, hi) = (parse_f64(p[0])?, parse_f64(p[1])?);
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::domain(format!(
            "grid '{spec}' needs finite lo <= hi"
        )));
    }
    Ok((lo, hi, p[2]))
}

/// Rounds away the float noise of lo + k*step so that grid points such as 0 or -1 are hit exactly.
fn tidy(x: f64) -> f64 {
    let r = (x * 1e12).round() / 1e12;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// `lo:hi:step`, endpoints included.
pub fn step_grid(spec: &str) -> Result<Vec<f64>> {
    let (lo, hi, step) = parts(spec)?;
    let step = parse_f64(step)?;
    if !(step > 0.0) {
        return Err(Error::domain(format!(
            "grid '{spec}' needs a positive step"
        )));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    if n > 1_000_000 {
        return Err(Error::domain(format!("grid '{spec}' is too large")));
    }
    Ok((0..=n).map(|k| tidy(lo + k as f64 * step)).collect())
}

/// `lo:hi:n`, n evenly spaced points including both ends.
pub fn count_grid(spec: &str) -> Result<(f64, f64, usize)> {
    let (lo, hi, n) = parts(spec)?;
    let n: usize = n
        .trim()
        .parse()
        .map_err(|_| Error::domain(format!("grid '{spec}' needs an integer count")))?;
    if n == 0 {
        return Err(Error::domain(format!(
            "grid '{spec}' needs at least one point"
        )));
    }
    Ok((lo, hi, n))
}

pub fn points(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// A comma-separated list or a `lo:hi:step` grid.
pub fn values(spec: &str) -> Result<Vec<f64>> {
    if spec.contains(':') {
        step_grid(spec)
    } else {
        spec.split(',').map(parse_f64).collect()
    }
}
