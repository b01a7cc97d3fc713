//! Mini-batch minimization of the empirical semi-dual objective.
//!
//! Each step draws a mini-batch from both samples, solves the (sieve)
//! conjugate for every Y in the batch, and moves the parameters along the
//! gradient of
//!
//! ```text
//! L(θ) = (1/m) Σ φ_θ(Xᵢ) + (1/M) Σ [⟨x*ⱼ, Yⱼ⟩ − φ_θ(x*ⱼ)]
//! ```
//!
//! with the maximizers `x*ⱼ` held fixed (envelope rule), so
//! `∇_θ L = mean ∂φ/∂θ(Xᵢ) − mean ∂φ/∂θ(x*ⱼ)`.
//!
//! Conjugate solves within a batch run on the rayon pool; every reduction is
//! done afterwards in index order, so results do not depend on thread count.

use std::time::Instant;

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::conjugate::{solve_conjugate_many, ConjugateConfig};
use crate::icnn::{IcnnArch, IcnnParams};
use crate::optim::{AdamHyper, AdamState};
use crate::potential::TrainablePotential;
use crate::seed::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Conjugate over all of `ℝᵈ`.
    Original,
    /// Conjugate over `B(0, Mₙ)`, `Mₙ = maxᵢ ‖Xᵢ‖₂`.
    Sieve,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Original => "original",
            Estimator::Sieve => "sieve",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_x: usize,
    pub batch_y: usize,
    pub estimator: Estimator,
    /// Inner solver settings; the radius is overwritten from the estimator.
    pub conjugate: ConjugateConfig,
    pub adam: AdamHyper,
    pub shuffle_seed: u64,
    /// Start each conjugate solve from the previous epoch's maximizer for
    /// the same Y instead of the origin.
    #[serde(default)]
    pub warm_start: bool,
    /// Print `epoch,mean_loss` lines to stderr.
    #[serde(default)]
    pub verbose: bool,
}

impl TrainConfig {
    /// 500 epochs, batches of 50, 500 inner steps, learning rates 0.001.
    pub fn paper(estimator: Estimator) -> Self {
        Self {
            epochs: 500,
            batch_x: 50,
            batch_y: 50,
            estimator,
            conjugate: ConjugateConfig::paper_default(),
            adam: AdamHyper::default(),
            shuffle_seed: 0,
            warm_start: false,
            verbose: false,
        }
    }

    /// Reduced budget: 100 epochs and 100 inner steps.
    pub fn fast(estimator: Estimator) -> Self {
        let mut cfg = Self::paper(estimator);
        cfg.epochs = 100;
        cfg.conjugate.steps = 100;
        cfg
    }

    pub fn validate(&self, n: usize, big_n: usize) -> Result<()> {
        if self.batch_x == 0 || self.batch_y == 0 {
            return Err(Error::InvalidConfig("batch sizes must be at least 1".into()));
        }
        if self.batch_x > n {
            return Err(Error::InvalidConfig(format!(
                "batch_x = {} exceeds the {n} source samples",
                self.batch_x
            )));
        }
        if self.batch_y > big_n {
            return Err(Error::InvalidConfig(format!(
                "batch_y = {} exceeds the {big_n} target samples",
                self.batch_y
            )));
        }
        self.conjugate.validate()?;
        self.adam.validate()
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport<P> {
    pub final_params: P,
    pub per_epoch_loss: Vec<f64>,
    pub wall_time_seconds: f64,
    /// Radius used by the conjugate solver (`None` when unconstrained).
    pub radius: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchLoss<G> {
    pub loss: f64,
    pub grads: G,
}

/// `maxᵢ ‖Xᵢ‖₂`.
pub fn max_row_norm(x: ArrayView2<'_, f64>) -> f64 {
    x.rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

fn rows_of(a: ArrayView2<'_, f64>) -> Vec<&[f64]> {
    let d = a.ncols().max(1);
    a.to_slice()
        .expect("sample matrices must be in standard layout")
        .chunks(d)
        .collect()
}

/// Loss and envelope-rule gradient on one pair of mini-batches. The conjugate
/// solves start from `cfg.init_point` (the origin when absent).
pub fn semi_dual_batch_loss<P: TrainablePotential>(
    phi: &P,
    batch_x: ArrayView2<'_, f64>,
    batch_y: ArrayView2<'_, f64>,
    cfg: &ConjugateConfig,
) -> Result<BatchLoss<P::Gradient>> {
    let d = phi.input_dim();
    for (what, b) in [("batch_x", &batch_x), ("batch_y", &batch_y)] {
        if b.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: b.ncols() });
        }
        if b.nrows() == 0 {
            return Err(Error::InvalidConfig(format!("{what} is empty")));
        }
    }
    cfg.validate()?;
    let batch_x = batch_x.as_standard_layout();
    let batch_y = batch_y.as_standard_layout();
    let xs = rows_of(batch_x.view());
    let ys = rows_of(batch_y.view());
    let start = cfg.init_point.clone().unwrap_or_else(|| vec![0.0; d]);
    if start.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: start.len() });
    }
    let starts = vec![start; ys.len()];
    let (loss, _) = batch_step(phi, &xs, &ys, cfg, &starts)?;
    Ok(loss)
}

/// Shared core of [`semi_dual_batch_loss`] and [`train_potential`]; also
/// returns the maximizers for warm starts.
fn batch_step<P: TrainablePotential>(
    phi: &P,
    xs: &[&[f64]],
    ys: &[&[f64]],
    cfg: &ConjugateConfig,
    starts: &[Vec<f64>],
) -> Result<(BatchLoss<P::Gradient>, Vec<Vec<f64>>)> {
    let flat_y: Vec<f64> = ys.concat();
    let flat_start: Vec<f64> = starts.concat();
    let solved = solve_conjugate_many(phi, &flat_y, cfg, &flat_start)?;

    let mut ws = phi.workspace();
    let mut grads = phi.zero_gradient();
    let wx = 1.0 / xs.len() as f64;
    let wy = 1.0 / ys.len() as f64;
    let mut sum_x = 0.0;
    for x in xs {
        sum_x += phi.eval(x, &mut ws);
        phi.accumulate_param_grad(x, wx, &mut ws, &mut grads);
    }
    let mut sum_y = 0.0;
    for r in &solved {
        sum_y += r.value;
        phi.accumulate_param_grad(&r.argmax, -wy, &mut ws, &mut grads);
    }
    let loss = sum_x * wx + sum_y * wy;
    let argmaxes = solved.into_iter().map(|r| r.argmax).collect();
    Ok((BatchLoss { loss, grads }, argmaxes))
}

fn check_samples(name: &str, s: ArrayView2<'_, f64>, d: usize) -> Result<()> {
    if s.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, got: s.ncols() });
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput(format!("{name} contains NaN or infinite values")));
    }
    Ok(())
}

/// Trains `init` on the samples; `observer` sees `(epoch, mean_loss, params)`
/// after every epoch.
pub fn train_potential_with<P, F>(
    init: P,
    x_samples: ArrayView2<'_, f64>,
    y_samples: ArrayView2<'_, f64>,
    cfg: &TrainConfig,
    mut observer: F,
) -> Result<TrainReport<P>>
where
    P: TrainablePotential,
    F: FnMut(usize, f64, &P),
{
    let started = Instant::now();
    let d = init.input_dim();
    check_samples("x_samples", x_samples, d)?;
    check_samples("y_samples", y_samples, d)?;
    let n = x_samples.nrows();
    let big_n = y_samples.nrows();
    cfg.validate(n, big_n)?;

    let x_samples = x_samples.as_standard_layout();
    let y_samples = y_samples.as_standard_layout();
    let radius = match cfg.estimator {
        Estimator::Original => None,
        Estimator::Sieve => Some(max_row_norm(x_samples.view())),
    };
    let conj = ConjugateConfig {
        radius,
        init_point: None,
        ..cfg.conjugate.clone()
    };
    if let Some(r) = radius {
        if !(r > 0.0) {
            return Err(Error::InvalidConfig("sieve radius is zero: all X samples are at the origin".into()));
        }
    }
    let origin = cfg.conjugate.init_point.clone().unwrap_or_else(|| vec![0.0; d]);
    if origin.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: origin.len() });
    }

    let mut params = init;
    let mut adam = AdamState::new(&params, cfg.adam);
    let mut shuffler = rng(cfg.shuffle_seed);
    let mut idx_x: Vec<usize> = (0..n).collect();
    let mut idx_y: Vec<usize> = (0..big_n).collect();
    let mut warm: Vec<Vec<f64>> = vec![origin.clone(); big_n];
    let mut per_epoch_loss = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        idx_x.shuffle(&mut shuffler);
        idx_y.shuffle(&mut shuffler);
        let mut total = 0.0;
        let mut batches = 0usize;
        for (bx, by) in idx_x.chunks(cfg.batch_x).zip(idx_y.chunks(cfg.batch_y)) {
            let xb = x_samples.select(Axis(0), bx);
            let yb = y_samples.select(Axis(0), by);
            let xs = rows_of(xb.view());
            let ys = rows_of(yb.view());
            let starts: Vec<Vec<f64>> = if cfg.warm_start {
                by.iter().map(|&j| warm[j].clone()).collect()
            } else {
                vec![origin.clone(); by.len()]
            };
            let (batch, argmaxes) = batch_step(&params, &xs, &ys, &conj, &starts)?;
            if !batch.loss.is_finite() {
                return Err(Error::NonFiniteInput(format!("batch loss at epoch {epoch}")));
            }
            if cfg.warm_start {
                for (&j, a) in by.iter().zip(argmaxes) {
                    warm[j] = a;
                }
            }
            adam.step(&mut params, &batch.grads)?;
            params.project();
            total += batch.loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        if cfg.verbose {
            eprintln!("{epoch},{mean}");
        }
        observer(epoch, mean, &params);
        per_epoch_loss.push(mean);
    }

    Ok(TrainReport {
        final_params: params,
        per_epoch_loss,
        wall_time_seconds: started.elapsed().as_secs_f64(),
        radius,
    })
}

pub fn train_potential<P: TrainablePotential>(
    init: P,
    x_samples: ArrayView2<'_, f64>,
    y_samples: ArrayView2<'_, f64>,
    cfg: &TrainConfig,
) -> Result<TrainReport<P>> {
    train_potential_with(init, x_samples, y_samples, cfg, |_, _, _| {})
}

/// Trains a freshly initialized network (`IcnnParams::init(arch, seed)`).
pub fn train(
    x_samples: ArrayView2<'_, f64>,
    y_samples: ArrayView2<'_, f64>,
    arch: IcnnArch,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainReport<IcnnParams>> {
    if arch.input_dim() != x_samples.ncols() {
        return Err(Error::DimensionMismatch {
            expected: arch.input_dim(),
            got: x_samples.ncols(),
        });
    }
    train_potential(IcnnParams::init(arch, seed), x_samples, y_samples, cfg)
}
