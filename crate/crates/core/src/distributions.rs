//! Source measures, ground-truth transport maps and sample I/O.
//!
//! Every multivariate measure here has independent coordinates, and every
//! map acts coordinatewise, so the maps are gradients of separable convex
//! potentials and hence the optimal transport maps onto their images.

use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::seed::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    StdNormal,
    StudentT6,
    Uniform01,
}

impl SourceKind {
    pub fn name(self) -> &'static str {
        match self {
            SourceKind::StdNormal => "std_normal",
            SourceKind::StudentT6 => "student_t6",
            SourceKind::Uniform01 => "uniform01",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    /// Coordinatewise source CDF; the target is uniform on `(0, 1)ᵈ`.
    RankFunction,
    /// `3z + 5` per coordinate.
    Linear,
    /// `sign(z)·z²` per coordinate.
    SignedQuadratic,
}

impl MapKind {
    pub fn name(self) -> &'static str {
        match self {
            MapKind::RankFunction => "rank_function",
            MapKind::Linear => "linear",
            MapKind::SignedQuadratic => "signed_quadratic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionSpec {
    pub kind: SourceKind,
    pub dim: usize,
}

impl DistributionSpec {
    pub fn new(kind: SourceKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("distribution dimension must be at least 1".into()));
        }
        Ok(Self { kind, dim })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub kind: MapKind,
    pub dim: usize,
}

impl MapSpec {
    pub fn new(kind: MapKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("map dimension must be at least 1".into()));
        }
        Ok(Self { kind, dim })
    }
}

/// `Φ(z)` through `erfc`, accurate to a few ulps over the whole line.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// CDF of Student's t with 6 degrees of freedom, from the closed form for
/// even degrees of freedom: with `x = t/√(6+t²)` and `u = 1 − x² = 6/(6+t²)`,
/// `F(t) = ½ + (x/2)(1 + u/2 + 3u²/8)`.
pub fn student_t6_cdf(t: f64) -> f64 {
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let s = 6.0 + t * t;
    let x = t / s.sqrt();
    let u = 6.0 / s;
    0.5 + 0.5 * x * (1.0 + u * (0.5 + 0.375 * u))
}

/// Univariate CDF of a source kind. Uniform sources are not supported: the
/// rank map of a uniform measure onto itself is the identity and is excluded
/// from the experiment grid.
pub fn cdf(kind: SourceKind, z: f64) -> Result<f64> {
    match kind {
        SourceKind::StdNormal => Ok(normal_cdf(z)),
        SourceKind::StudentT6 => Ok(student_t6_cdf(z)),
        SourceKind::Uniform01 => Err(Error::UnsupportedCombination(
            "CDF rank map requires a normal or t(6) source".into(),
        )),
    }
}

fn draw(kind: SourceKind, r: &mut impl Rng) -> f64 {
    match kind {
        SourceKind::StdNormal => r.sample(StandardNormal),
        SourceKind::StudentT6 => {
            let z: f64 = r.sample(StandardNormal);
            let chi2: f64 = (0..6)
                .map(|_| {
                    let g: f64 = r.sample(StandardNormal);
                    g * g
                })
                .sum();
            z / (chi2 / 6.0).sqrt()
        }
        SourceKind::Uniform01 => r.sample(Open01),
    }
}

/// `count` i.i.d. rows from `spec`, one row per sample.
pub fn sample(spec: &DistributionSpec, count: usize, rng_seed: u64) -> Array2<f64> {
    let mut r = rng(rng_seed);
    let data: Vec<f64> = (0..count * spec.dim).map(|_| draw(spec.kind, &mut r)).collect();
    Array2::from_shape_vec((count, spec.dim), data).expect("shape matches data length")
}

fn check_map(map: &MapSpec, source: &DistributionSpec) -> Result<()> {
    if map.dim != source.dim {
        return Err(Error::DimensionMismatch {
            expected: source.dim,
            got: map.dim,
        });
    }
    if map.kind == MapKind::RankFunction && source.kind == SourceKind::Uniform01 {
        return Err(Error::UnsupportedCombination(
            "rank function map with a uniform source".into(),
        ));
    }
    Ok(())
}

#[inline]
fn map_coord(kind: MapKind, source: SourceKind, z: f64) -> f64 {
    match kind {
        MapKind::RankFunction => match source {
            SourceKind::StdNormal => normal_cdf(z),
            _ => student_t6_cdf(z),
        },
        MapKind::Linear => 3.0 * z + 5.0,
        MapKind::SignedQuadratic => z.signum() * z * z,
    }
}

/// Applies the map to `x` in place without validation; callers check the
/// combination once with [`true_map`] or [`validate_pair`].
pub fn apply_map_in_place(map: &MapSpec, source: &DistributionSpec, x: &mut [f64]) {
    for v in x {
        *v = map_coord(map.kind, source.kind, *v);
    }
}

pub fn validate_pair(map: &MapSpec, source: &DistributionSpec) -> Result<()> {
    check_map(map, source)
}

/// Ground-truth transport map `∇φ₀(x)`.
pub fn true_map(map: &MapSpec, source: &DistributionSpec, x: &[f64]) -> Result<Vec<f64>> {
    check_map(map, source)?;
    if x.len() != map.dim {
        return Err(Error::DimensionMismatch {
            expected: map.dim,
            got: x.len(),
        });
    }
    let mut out = x.to_vec();
    apply_map_in_place(map, source, &mut out);
    Ok(out)
}

/// Samples from `(∇φ₀)#P`: fresh source draws pushed through the map.
pub fn pushforward_sample(
    map: &MapSpec,
    source: &DistributionSpec,
    count: usize,
    rng_seed: u64,
) -> Result<Array2<f64>> {
    check_map(map, source)?;
    let mut s = sample(source, count, rng_seed);
    for mut row in s.rows_mut() {
        apply_map_in_place(map, source, row.as_slice_mut().expect("standard layout"));
    }
    Ok(s)
}

/// Writes one sample per line, coordinates in order, no header. Values use
/// the shortest representation that parses back to the same `f64`.
pub fn write_samples_csv(path: impl AsRef<Path>, samples: &Array2<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for row in samples.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples_csv(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut data = Vec::new();
    let mut dim = None;
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        match dim {
            None => dim = Some(rec.len()),
            Some(d) if d != rec.len() => {
                return Err(Error::DimensionMismatch { expected: d, got: rec.len() });
            }
            _ => {}
        }
        for field in rec.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("not a number in sample file: {field:?}")))?;
            data.push(v);
        }
        rows += 1;
    }
    let dim = dim.ok_or_else(|| Error::InvalidConfig("empty sample file".into()))?;
    Ok(Array2::from_shape_vec((rows, dim), data).expect("rows have equal length"))
}
