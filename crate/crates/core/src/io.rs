//! On-disk formats shared by the CLI and tests.
//!
//! pool.csv starts with one `# key=value …` header line carrying the basis
//! and stream metadata, followed by one row per point: the d coordinates
//! and then the weight, as decimal text with 17 significant digits (exact
//! f64 round trip). design.csv lists selected candidate-row indices,
//! 1-based, one per line, in pivot order.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::basis::{BasisSpec, Family};
use crate::design::Design;
use crate::error::{Error, Result};
use crate::harness::fmt_g17;
use crate::sampling::{RngStream, SamplePool, SamplingStrategy};
use crate::solvers::SparseSolution;

pub fn write_pool_csv(path: &Path, spec: &BasisSpec, pool: &SamplePool) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!(
        "# family={} d={} p={} strategy={} seed={} stream={}\n",
        spec.family(),
        spec.dim(),
        spec.order(),
        pool.strategy,
        pool.stream.seed,
        pool.stream.stream
    ));
    for i in 0..pool.len() {
        for j in 0..spec.dim() {
            out.push_str(&fmt_g17(pool.points[(i, j)]));
            out.push(',');
        }
        out.push_str(&fmt_g17(pool.weights[i]));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_pool_csv(path: &Path) -> Result<(BasisSpec, SamplePool)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty pool file".into()))?;
    let header = header
        .strip_prefix('#')
        .ok_or_else(|| Error::Parse("pool file missing `# …` metadata header".into()))?;

    let mut family: Option<Family> = None;
    let mut d: Option<usize> = None;
    let mut p: Option<usize> = None;
    let mut strategy: Option<SamplingStrategy> = None;
    let mut seed: u64 = 0;
    let mut stream: u64 = 0;
    for field in header.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("bad header field `{field}`")))?;
        match key {
            "family" => family = Some(value.parse()?),
            "d" => d = Some(parse_num(value)?),
            "p" => p = Some(parse_num(value)?),
            "strategy" => strategy = Some(value.parse()?),
            "seed" => seed = parse_num(value)?,
            "stream" => stream = parse_num(value)?,
            _ => return Err(Error::Parse(format!("unknown header key `{key}`"))),
        }
    }
    let family = family.ok_or_else(|| Error::Parse("header missing family".into()))?;
    let d = d.ok_or_else(|| Error::Parse("header missing d".into()))?;
    let p = p.ok_or_else(|| Error::Parse("header missing p".into()))?;
    let strategy = strategy.ok_or_else(|| Error::Parse("header missing strategy".into()))?;
    let spec = BasisSpec::new(family, d, p)?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))
            })
            .collect::<Result<_>>()?;
        if values.len() != d + 1 {
            return Err(Error::Parse(format!(
                "line {}: expected {} values, found {}",
                lineno + 2,
                d + 1,
                values.len()
            )));
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::Empty("pool file has no data rows".into()));
    }
    let m = rows.len();
    let points = DMatrix::from_fn(m, d, |i, j| rows[i][j]);
    let weights = DVector::from_fn(m, |i, _| rows[i][d]);
    Ok((
        spec,
        SamplePool {
            points,
            weights,
            strategy,
            stream: RngStream::new(seed, stream),
            mcmc: None,
        },
    ))
}

fn parse_num<T: std::str::FromStr>(value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| Error::Parse(format!("`{value}`: {e}")))
}

/// Selected row indices, 1-based, in pivot order, one per line.
pub fn write_design_csv(path: &Path, design: &Design) -> Result<()> {
    let mut out = String::new();
    for &idx in design.indices() {
        out.push_str(&format!("{}\n", idx + 1));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Sparse index/value pairs of one fitted coefficient vector.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolutionFile {
    pub method: String,
    pub model: String,
    pub k_used: usize,
    pub n_model_evals: usize,
    /// 0-based basis-column indices, ascending.
    pub support: Vec<usize>,
    pub coeffs: Vec<CoeffEntry>,
    pub residual_history: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoeffEntry {
    pub index: usize,
    pub value: f64,
}

impl SolutionFile {
    pub fn from_solution(method: &str, model: &str, sol: &SparseSolution) -> Self {
        SolutionFile {
            method: method.to_string(),
            model: model.to_string(),
            k_used: sol.k_used,
            n_model_evals: sol.n_model_evals,
            support: sol.support.clone(),
            coeffs: sol
                .support
                .iter()
                .map(|&i| CoeffEntry {
                    index: i,
                    value: sol.coeffs[i],
                })
                .collect(),
            residual_history: sol.residual_history.clone(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Parse(format!("solution serialization: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("solution file: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{sample_pool, SamplingStrategy};

    #[test]
    fn pool_round_trip_is_bit_exact() {
        let dir = std::env::temp_dir().join(format!("dpce-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let spec = BasisSpec::new(Family::Hermite, 3, 4).unwrap();
        let pool = sample_pool(
            &spec,
            SamplingStrategy::CoherenceOptimal,
            50,
            RngStream::new(9, 1),
        )
        .unwrap();
        let path = dir.join("pool.csv");
        write_pool_csv(&path, &spec, &pool).unwrap();
        let (spec2, pool2) = read_pool_csv(&path).unwrap();
        assert_eq!(spec, spec2);
        assert_eq!(pool.points, pool2.points);
        assert_eq!(pool.weights, pool2.weights);
        assert_eq!(pool.strategy, pool2.strategy);
        assert_eq!(pool.stream, pool2.stream);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn design_csv_is_one_based() {
        let dir = std::env::temp_dir().join(format!("dpce-io-d-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let design = Design::new(vec![4, 0, 2], 5).unwrap();
        let path = dir.join("design.csv");
        write_design_csv(&path, &design).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "5\n1\n3\n");
        std::fs::remove_dir_all(&dir).ok();
    }
}
