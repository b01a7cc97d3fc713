//! Monte-Carlo evaluation and the repeated-experiment harness.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conjugate::{solve_conjugate_many, ConjugateConfig};
use crate::distributions::{
    apply_map_in_place, pushforward_sample, sample, validate_pair, DistributionSpec, MapKind, MapSpec,
    SourceKind,
};
use crate::icnn::{IcnnArch, IcnnParams};
use crate::potential::Potential;
use crate::seed::{derive_seed, splitmix64, Stream};
use crate::trainer::{train_potential, Estimator, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// 500 epochs, 500 inner steps.
    Paper,
    /// 100 epochs, 100 inner steps.
    Fast,
}

impl Profile {
    pub fn train_config(self, estimator: Estimator) -> TrainConfig {
        match self {
            Profile::Paper => TrainConfig::paper(estimator),
            Profile::Fast => TrainConfig::fast(estimator),
        }
    }
}

/// Default Monte-Carlo evaluation size: 10⁵ up to three dimensions, 10⁴ above.
pub fn default_eval_samples(dim: usize) -> usize {
    if dim <= 3 {
        100_000
    } else {
        10_000
    }
}

/// One cell of the simulation grid.
///
/// `train.shuffle_seed` is ignored by [`run_experiment`]; each repetition
/// derives its own shuffle seed from `base_seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub source: SourceKind,
    pub map: MapKind,
    pub estimator: Estimator,
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub repetitions: usize,
    pub eval_samples: usize,
    pub base_seed: u64,
    pub profile: Profile,
    pub arch: IcnnArch,
    pub train: TrainConfig,
    /// Abort on the first failed repetition. When false, failures are listed
    /// in the report and excluded from the aggregates.
    pub fail_fast: bool,
}

impl ExperimentConfig {
    /// Paper architecture, 20 repetitions, default evaluation size, training
    /// settings from `profile`.
    pub fn new(
        dim: usize,
        source: SourceKind,
        map: MapKind,
        estimator: Estimator,
        n: usize,
        big_n: usize,
        profile: Profile,
    ) -> Result<Self> {
        let cfg = Self {
            dim,
            source,
            map,
            estimator,
            n,
            big_n,
            repetitions: 20,
            eval_samples: default_eval_samples(dim),
            base_seed: 0,
            profile,
            arch: IcnnArch::paper_default(dim.max(1))?,
            train: profile.train_config(estimator),
            fail_fast: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn source_spec(&self) -> DistributionSpec {
        DistributionSpec {
            kind: self.source,
            dim: self.dim,
        }
    }

    pub fn map_spec(&self) -> MapSpec {
        MapSpec {
            kind: self.map,
            dim: self.dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidConfig("dim must be at least 1".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidConfig("repetitions must be at least 1".into()));
        }
        if self.eval_samples < 100 {
            return Err(Error::InvalidConfig(format!(
                "eval_samples must be at least 100, got {}",
                self.eval_samples
            )));
        }
        if self.arch.input_dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: self.arch.input_dim(),
            });
        }
        if self.train.estimator != self.estimator {
            return Err(Error::InvalidConfig("train.estimator disagrees with estimator".into()));
        }
        validate_pair(&self.map_spec(), &self.source_spec())?;
        self.train.validate(self.n, self.big_n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRepetition {
    pub rep: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Losses of the successful repetitions, ordered by repetition index.
    pub per_rep_loss: Vec<f64>,
    /// Repetition index of each entry of `per_rep_loss`.
    pub reps: Vec<usize>,
    pub per_rep_wall_time_seconds: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (`n − 1` denominator); zero for one repetition.
    pub sd: f64,
    pub failed: Vec<FailedRepetition>,
    pub config_echo: ExperimentConfig,
    pub total_wall_time_seconds: f64,
}

/// Mean and sample standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// `(1/M) Σⱼ ‖∇φ(Zⱼ) − ∇φ₀(Zⱼ)‖²` over `eval_samples` fresh draws from the
/// source.
pub fn l2_loss<P: Potential>(
    phi: &P,
    map: &MapSpec,
    source: &DistributionSpec,
    eval_samples: usize,
    rng_seed: u64,
) -> Result<f64> {
    validate_pair(map, source)?;
    if phi.input_dim() != source.dim {
        return Err(Error::DimensionMismatch {
            expected: source.dim,
            got: phi.input_dim(),
        });
    }
    if eval_samples == 0 {
        return Err(Error::InvalidConfig("eval_samples must be positive".into()));
    }
    let z = sample(source, eval_samples, rng_seed);
    let mut ws = phi.workspace();
    let mut grad = vec![0.0; source.dim];
    let mut truth = vec![0.0; source.dim];
    let mut total = 0.0;
    for row in z.rows() {
        let x = row.as_slice().expect("standard layout");
        phi.eval_with_grad(x, &mut ws, &mut grad);
        truth.copy_from_slice(x);
        apply_map_in_place(map, source, &mut truth);
        total += grad.iter().zip(&truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / eval_samples as f64)
}

/// Monte-Carlo estimate of `S(φ) = Pφ + Qφ*` with fresh samples from the
/// source and from its pushforward; `φ*` is approximated by the solver.
pub fn semi_dual_objective_mc<P: Potential>(
    phi: &P,
    source: &DistributionSpec,
    map: &MapSpec,
    mc_samples: usize,
    cfg: &ConjugateConfig,
    rng_seed: u64,
) -> Result<f64> {
    if mc_samples < 100 {
        return Err(Error::InvalidConfig(format!(
            "mc_samples must be at least 100, got {mc_samples}"
        )));
    }
    if phi.input_dim() != source.dim {
        return Err(Error::DimensionMismatch {
            expected: source.dim,
            got: phi.input_dim(),
        });
    }
    cfg.validate()?;
    let x = sample(source, mc_samples, rng_seed);
    let y = pushforward_sample(map, source, mc_samples, splitmix64(rng_seed))?;
    let mut ws = phi.workspace();
    let px: f64 = x
        .rows()
        .into_iter()
        .map(|r| phi.eval(r.as_slice().unwrap(), &mut ws))
        .sum::<f64>()
        / mc_samples as f64;
    let start = cfg.init_point.clone().unwrap_or_else(|| vec![0.0; source.dim]);
    let flat_y = y.as_slice().expect("standard layout");
    let starts = start.repeat(mc_samples);
    let conj = solve_conjugate_many(phi, flat_y, cfg, &starts)?;
    let qy = conj.iter().map(|r| r.value).sum::<f64>() / mc_samples as f64;
    Ok(px + qy)
}

/// Tail class used to normalize the Poincaré-type diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TailClass {
    /// `Var ≲ g · log₊(1/√g)^{2/θ}`.
    SubWeibull { theta: f64 },
    /// `Var ≲ max(g, g^{c/(c+2)})`.
    Polynomial { c: f64 },
    /// `Var ≲ g` (compact support).
    Bounded,
}

impl TailClass {
    /// Normal sources are sub-Weibull with `θ = 2`. For t(6), moments of
    /// order `4 + c` must be finite for networks with bounded gradients,
    /// which requires `c < 2`; `c = 1` is used.
    pub fn for_source(kind: SourceKind) -> Self {
        match kind {
            SourceKind::StdNormal => TailClass::SubWeibull { theta: 2.0 },
            SourceKind::StudentT6 => TailClass::Polynomial { c: 1.0 },
            SourceKind::Uniform01 => TailClass::Bounded,
        }
    }

    /// Right-hand side of the inequality as a function of
    /// `g = ‖∇φ₁ − ∇φ₂‖²_{L²(P)}`. The logarithmic factor is offset by one so
    /// the normalizer stays positive when `g ≥ 1`.
    pub fn normalizer(self, g: f64) -> f64 {
        match self {
            TailClass::SubWeibull { theta } => {
                let log_plus = (1.0 / g.sqrt()).ln().max(0.0);
                g * (1.0 + log_plus).powf(2.0 / theta)
            }
            TailClass::Polynomial { c } => g.max(g.powf(c / (c + 2.0))),
            TailClass::Bounded => g,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoincareDiagnostic {
    pub variance: f64,
    pub grad_l2_sq: f64,
    pub ratio: f64,
}

pub fn poincare_diagnostic<P: Potential>(
    phi1: &P,
    phi2: &P,
    source: &DistributionSpec,
    mc_samples: usize,
    rng_seed: u64,
) -> Result<PoincareDiagnostic> {
    poincare_diagnostic_with(phi1, phi2, source, TailClass::for_source(source.kind), mc_samples, rng_seed)
}

/// Estimates `Var_P(φ₁ − φ₂)`, `‖∇φ₁ − ∇φ₂‖²_{L²(P)}` and their ratio after
/// normalization by `tail`.
pub fn poincare_diagnostic_with<P: Potential>(
    phi1: &P,
    phi2: &P,
    source: &DistributionSpec,
    tail: TailClass,
    mc_samples: usize,
    rng_seed: u64,
) -> Result<PoincareDiagnostic> {
    for phi in [phi1, phi2] {
        if phi.input_dim() != source.dim {
            return Err(Error::DimensionMismatch {
                expected: source.dim,
                got: phi.input_dim(),
            });
        }
    }
    if mc_samples < 2 {
        return Err(Error::InvalidConfig("mc_samples must be at least 2".into()));
    }
    let x = sample(source, mc_samples, rng_seed);
    let (mut ws1, mut ws2) = (phi1.workspace(), phi2.workspace());
    let mut g1 = vec![0.0; source.dim];
    let mut g2 = vec![0.0; source.dim];
    let mut diffs = Vec::with_capacity(mc_samples);
    let mut grad_sq = 0.0;
    for row in x.rows() {
        let xi = row.as_slice().unwrap();
        let v1 = phi1.eval_with_grad(xi, &mut ws1, &mut g1);
        let v2 = phi2.eval_with_grad(xi, &mut ws2, &mut g2);
        diffs.push(v1 - v2);
        grad_sq += g1.iter().zip(&g2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    let m = mc_samples as f64;
    let grad_l2_sq = grad_sq / m;
    let mean = diffs.iter().sum::<f64>() / m;
    let variance = diffs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
    let ratio = if grad_l2_sq == 0.0 {
        let tol = 1e-18 * (1.0 + mean * mean);
        if variance <= tol {
            0.0
        } else {
            return Err(Error::Degenerate(format!(
                "gradients agree but the variance of the difference is {variance:e}"
            )));
        }
    } else {
        variance / tail.normalizer(grad_l2_sq)
    };
    Ok(PoincareDiagnostic {
        variance,
        grad_l2_sq,
        ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepetitionOutcome {
    pub rep: usize,
    pub l2_loss: f64,
    pub wall_time_seconds: f64,
}

/// Trains and evaluates repetition `rep` of `cfg`.
pub fn run_repetition(cfg: &ExperimentConfig, rep: usize) -> Result<RepetitionOutcome> {
    let started = Instant::now();
    let source = cfg.source_spec();
    let map = cfg.map_spec();
    let x = sample(&source, cfg.n, derive_seed(cfg.base_seed, rep, Stream::SourceSample));
    let y = pushforward_sample(&map, &source, cfg.big_n, derive_seed(cfg.base_seed, rep, Stream::TargetSample))?;
    let mut train_cfg = cfg.train.clone();
    train_cfg.shuffle_seed = derive_seed(cfg.base_seed, rep, Stream::Shuffle);
    let init = IcnnParams::init(cfg.arch, derive_seed(cfg.base_seed, rep, Stream::Init));
    let report = train_potential(init, x.view(), y.view(), &train_cfg)?;
    let l2 = l2_loss(
        &report.final_params,
        &map,
        &source,
        cfg.eval_samples,
        derive_seed(cfg.base_seed, rep, Stream::Eval),
    )?;
    Ok(RepetitionOutcome {
        rep,
        l2_loss: l2,
        wall_time_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Runs every repetition (concurrently on the current rayon pool) and
/// aggregates in repetition order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let started = Instant::now();
    let outcomes: Vec<Result<RepetitionOutcome>> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| run_repetition(cfg, rep))
        .collect();
    let mut per_rep_loss = Vec::new();
    let mut reps = Vec::new();
    let mut times = Vec::new();
    let mut failed = Vec::new();
    let mut first_error = None;
    for (rep, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(o) => {
                per_rep_loss.push(o.l2_loss);
                reps.push(o.rep);
                times.push(o.wall_time_seconds);
            }
            Err(e) if cfg.fail_fast => {
                return Err(Error::Repetition {
                    rep,
                    source: Box::new(e),
                })
            }
            Err(e) => {
                failed.push(FailedRepetition {
                    rep,
                    error: e.to_string(),
                });
                first_error.get_or_insert((rep, e));
            }
        }
    }
    // With no successful repetition there is nothing to aggregate.
    if per_rep_loss.is_empty() {
        let (rep, e) = first_error.expect("at least one repetition ran");
        return Err(Error::Repetition {
            rep,
            source: Box::new(e),
        });
    }
    let (mean, sd) = mean_sd(&per_rep_loss);
    Ok(EvalReport {
        per_rep_loss,
        reps,
        per_rep_wall_time_seconds: times,
        mean,
        sd,
        failed,
        config_echo: cfg.clone(),
        total_wall_time_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Header of the per-repetition results file.
pub const RESULTS_HEADER: &str = "dim,source,map,estimator,n,N,rep,l2_loss,wall_time_s";

/// Seventeen significant digits in scientific notation; parses back to the
/// identical `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// One row per successful repetition. With `record_timing` false the
/// `wall_time_s` column is written as zero, making the file a pure function
/// of the configuration.
pub fn write_results_csv(mut out: impl Write, report: &EvalReport, record_timing: bool) -> Result<()> {
    let c = &report.config_echo;
    writeln!(out, "{RESULTS_HEADER}")?;
    for ((rep, loss), t) in report
        .reps
        .iter()
        .zip(&report.per_rep_loss)
        .zip(&report.per_rep_wall_time_seconds)
    {
        let t = if record_timing { *t } else { 0.0 };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            c.dim,
            c.source.name(),
            c.map.name(),
            c.estimator.name(),
            c.n,
            c.big_n,
            rep,
            format_f64(*loss),
            format_f64(t)
        )?;
    }
    Ok(())
}

/// A parsed row of a results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dim: usize,
    pub source: String,
    pub map: String,
    pub estimator: String,
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub rep: usize,
    pub l2_loss: f64,
    pub wall_time_s: f64,
}

pub fn read_results_csv(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != RESULTS_HEADER {
        return Err(Error::InvalidConfig(format!(
            "unexpected results header {:?}",
            header.join(",")
        )));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Summary document written next to the results file.
pub fn write_summary_json(out: impl Write, report: &EvalReport) -> Result<()> {
    serde_json::to_writer_pretty(out, report)?;
    Ok(())
}

pub fn read_summary_json(path: impl AsRef<Path>) -> Result<EvalReport> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
