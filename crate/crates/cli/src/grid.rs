//! Parsers for the grid flags.

use anyhow::{bail, Context, Result};

/// `a,b,c` or inclusive `start:stop:step`.
pub fn parse_db_grid(spec: &str) -> Result<Vec<f64>> {
    let spec = spec.trim();
    if spec.is_empty() {
        bail!("noise grid is empty");
    }
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            bail!("range grid must be start:stop:step, got `{spec}`");
        }
        let num = |s: &str| s.trim().parse::<f64>().with_context(|| format!("bad number `{s}` in grid"));
        let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step != 0.0 && step.is_finite() && start.is_finite() && stop.is_finite()) {
            bail!("range grid needs finite bounds and a nonzero step");
        }
        let count = ((stop - start) / step + 1e-9).floor();
        if count < 0.0 {
            bail!("step {step} never reaches {stop} from {start}");
        }
        if count > 1e6 {
            bail!("grid has more than a million points");
        }
        // multiply rather than accumulate so points are exact for integer steps
        return Ok((0..=count as usize).map(|k| start + k as f64 * step).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad number `{s}` in grid")))
        .collect()
}

/// Comma-separated cells; each cell is one count for all classes or
/// `classes` counts joined by `/`.
pub fn parse_n_grid(spec: &str, classes: usize) -> Result<Vec<Vec<usize>>> {
    if spec.trim().is_empty() {
        bail!("n grid is empty");
    }
    spec.split(',')
        .map(|cell| {
            let counts = cell
                .split('/')
                .map(|s| s.trim().parse::<usize>().with_context(|| format!("bad count `{s}` in n grid")))
                .collect::<Result<Vec<_>>>()?;
            match counts.len() {
                1 => Ok(vec![counts[0]; classes]),
                n if n == classes => Ok(counts),
                n => bail!("cell `{cell}` has {n} counts for {classes} classes"),
            }
        })
        .collect()
}
