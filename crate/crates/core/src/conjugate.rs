//! Approximate convex conjugates.
//!
//! `φ*(y) = sup_x ⟨x, y⟩ − φ(x)` is approached by fixed-step gradient descent
//! on `x ↦ φ(x) − ⟨x, y⟩` starting from the origin. With a finite radius every
//! iterate is projected back onto `B(0, radius)`, which computes the sieve
//! conjugate `sup_{‖x‖ ≤ radius} ⟨x, y⟩ − φ(x)`.
//!
//! The reported value is always evaluated at the final iterate, a feasible
//! point, so it never exceeds the true supremum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::optim::gd_step_in_place;
use crate::potential::Potential;
use crate::{Error, Result};

/// Rows per lockstep group in [`solve_conjugate_many`]. Fixed, so results do
/// not depend on the thread count.
pub const LOCKSTEP_ROWS: usize = 32;

/// Iterate norm beyond which the unconstrained solve is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConjugateConfig {
    pub steps: usize,
    pub step_size: f64,
    /// `None` is the unconstrained conjugate.
    pub radius: Option<f64>,
    /// Starting point; the origin when absent.
    #[serde(default)]
    pub init_point: Option<Vec<f64>>,
}

impl ConjugateConfig {
    /// 500 steps of size 0.001, unconstrained.
    pub fn paper_default() -> Self {
        Self {
            steps: 500,
            step_size: 1e-3,
            radius: None,
            init_point: None,
        }
    }

    pub fn with_radius(mut self, radius: Option<f64>) -> Self {
        self.radius = radius;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidConfig("conjugate steps must be at least 1".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "conjugate step size must be positive, got {}",
                self.step_size
            )));
        }
        if let Some(r) = self.radius {
            if !(r > 0.0) {
                return Err(Error::InvalidConfig(format!("radius must be positive, got {r}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateResult {
    /// `⟨argmax, y⟩ − φ(argmax)`.
    pub value: f64,
    /// Final iterate.
    pub argmax: Vec<f64>,
    /// Objective `⟨x, y⟩ − φ(x)` at the starting point and at the final iterate.
    pub objective_trace: (f64, f64),
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Rescales onto the sphere when `‖x‖ > radius`. The rounded result can
/// land an ulp outside, so it is nudged inward until its computed norm is at
/// most `radius`; that makes the projection idempotent in floating point.
pub fn project_ball_in_place(x: &mut [f64], radius: f64) {
    let mut n = norm(x);
    if n > radius {
        let s = radius / n;
        x.iter_mut().for_each(|v| *v *= s);
        n = norm(x);
        while n > radius {
            x.iter_mut().for_each(|v| *v *= 1.0 - f64::EPSILON);
            n = norm(x);
        }
    }
}

/// Euclidean projection onto `B(0, radius)`.
pub fn project_ball(x: &[f64], radius: f64) -> Vec<f64> {
    let mut out = x.to_vec();
    project_ball_in_place(&mut out, radius);
    out
}

pub fn solve_conjugate<P: Potential>(phi: &P, y: &[f64], cfg: &ConjugateConfig) -> Result<ConjugateResult> {
    if y.len() != phi.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: phi.input_dim(),
            got: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("conjugate target y".into()));
    }
    cfg.validate()?;
    let x0 = match &cfg.init_point {
        Some(p) if p.len() != y.len() => {
            return Err(Error::DimensionMismatch {
                expected: y.len(),
                got: p.len(),
            })
        }
        Some(p) => p.clone(),
        None => vec![0.0; y.len()],
    };
    let mut ws = phi.workspace();
    solve_conjugate_from(phi, y, cfg, x0, &mut ws)
}

/// Hot-path solve from `x0` with caller-provided scratch space; `cfg` is
/// assumed valid and `cfg.init_point` is ignored.
pub fn solve_conjugate_from<P: Potential>(
    phi: &P,
    y: &[f64],
    cfg: &ConjugateConfig,
    x0: Vec<f64>,
    ws: &mut P::Workspace,
) -> Result<ConjugateResult> {
    let mut out = solve_conjugate_batch(phi, y, cfg, x0, ws)?;
    Ok(out.pop().expect("one target"))
}

/// Runs the solves for every row of `ys` (row-major) in lockstep, starting
/// from the matching rows of `starts`. Each row's iterates are exactly those
/// of a solve on its own.
pub fn solve_conjugate_batch<P: Potential>(
    phi: &P,
    ys: &[f64],
    cfg: &ConjugateConfig,
    mut xs: Vec<f64>,
    ws: &mut P::Workspace,
) -> Result<Vec<ConjugateResult>> {
    let d = phi.input_dim();
    let n = ys.len() / d;
    debug_assert_eq!(xs.len(), ys.len());
    if let Some(r) = cfg.radius {
        xs.chunks_exact_mut(d).for_each(|x| project_ball_in_place(x, r));
    }
    let mut values = vec![0.0; n];
    let mut grads = vec![0.0; n * d];
    let mut first = vec![f64::NAN; n];
    for step in 1..=cfg.steps {
        phi.eval_with_grad_batch(&xs, ws, &mut values, &mut grads);
        let rows = xs.chunks_exact_mut(d).zip(grads.chunks_exact_mut(d)).zip(ys.chunks_exact(d));
        for (p, ((x, g), y)) in rows.enumerate() {
            if step == 1 {
                first[p] = dot(x, y) - values[p];
            }
            for (gi, yi) in g.iter_mut().zip(y) {
                *gi -= yi;
            }
            gd_step_in_place(x, g, cfg.step_size);
            match cfg.radius {
                Some(r) => project_ball_in_place(x, r),
                None => {
                    if norm(x) > DIVERGENCE_NORM {
                        return Err(Error::SolverDiverged { step });
                    }
                }
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::SolverDiverged { step });
            }
        }
    }
    phi.eval_with_grad_batch(&xs, ws, &mut values, &mut grads);
    let mut out = Vec::with_capacity(n);
    for (p, (x, y)) in xs.chunks_exact(d).zip(ys.chunks_exact(d)).enumerate() {
        let value = dot(x, y) - values[p];
        if !value.is_finite() {
            return Err(Error::SolverDiverged { step: cfg.steps });
        }
        out.push(ConjugateResult {
            value,
            argmax: x.to_vec(),
            objective_trace: (first[p], value),
        });
    }
    Ok(out)
}

/// [`solve_conjugate_batch`] over groups of [`LOCKSTEP_ROWS`] rows, groups in
/// parallel. On failure the error of the first failing group is returned.
pub fn solve_conjugate_many<P: Potential>(
    phi: &P,
    ys: &[f64],
    cfg: &ConjugateConfig,
    starts: &[f64],
) -> Result<Vec<ConjugateResult>> {
    let d = phi.input_dim();
    let chunk = LOCKSTEP_ROWS * d;
    let groups: Vec<Result<Vec<ConjugateResult>>> = ys
        .par_chunks(chunk)
        .zip(starts.par_chunks(chunk))
        .map_init(
            || phi.workspace(),
            |ws, (y, x0)| solve_conjugate_batch(phi, y, cfg, x0.to_vec(), ws),
        )
        .collect();
    let mut out = Vec::with_capacity(ys.len() / d);
    for g in groups {
        out.extend(g?);
    }
    Ok(out)
}

/// Brute-force `max ⟨x, y⟩ − φ(x)` over the points of a uniform grid with
/// `resolution` nodes per axis on `[−radius, radius]ᵈ` that lie in the ball.
pub fn grid_conjugate_oracle<P: Potential>(phi: &P, y: &[f64], radius: f64, resolution: usize) -> Result<f64> {
    let d = phi.input_dim();
    if d > 3 {
        return Err(Error::UnsupportedDimension(d));
    }
    if y.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: y.len() });
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidConfig(format!("grid oracle needs a finite radius, got {radius}")));
    }
    if resolution < 2 {
        return Err(Error::InvalidConfig("grid resolution must be at least 2".into()));
    }
    let h = 2.0 * radius / (resolution - 1) as f64;
    let node = |i: usize| -radius + h * i as f64;
    let mut ws = phi.workspace();
    let mut best = f64::NEG_INFINITY;
    let mut x = vec![0.0; d];
    let mut idx = vec![0usize; d];
    loop {
        for (xi, &i) in x.iter_mut().zip(&idx) {
            *xi = node(i);
        }
        if norm(&x) <= radius * (1.0 + 1e-12) {
            let v = dot(&x, y) - phi.eval(&x, &mut ws);
            if v > best {
                best = v;
            }
        }
        // odometer increment over the d axes
        let mut axis = 0;
        loop {
            if axis == d {
                return Ok(best);
            }
            idx[axis] += 1;
            if idx[axis] < resolution {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
}
