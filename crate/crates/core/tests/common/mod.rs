//! Oracles shared by the integration tests and the acceptance suite.
//!
//! Each `check_*` function returns `Err` with a readable reason on failure so
//! the acceptance runner can report it, and the plain tests can `unwrap()`.

#![allow(dead_code)]

use ndarray::Array2;
use otmap::conjugate::{grid_conjugate_oracle, project_ball, solve_conjugate, ConjugateConfig};
use otmap::distributions::{cdf, normal_cdf, pushforward_sample, sample, student_t6_cdf};
use otmap::eval::l2_loss;
use otmap::icnn::{IcnnArch, IcnnParams};
use otmap::optim::{AdamHyper, AdamState};
use otmap::trainer::semi_dual_batch_loss;
use otmap::potential::{ParamTensors, Potential, TrainablePotential};
use otmap::{DistributionSpec, MapKind, MapSpec, QuadraticPotential, SourceKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<(), String>;

pub const CONVEXITY_SLACK: f64 = 1e-9;
pub const FD_STEP: f64 = 1e-4;
pub const FD_REL_TOL: f64 = 1e-5;
/// Denominator floor for relative errors of entries that are essentially zero.
pub const FD_FLOOR: f64 = 1e-4;
pub const ADAM_TRACE_TOL: f64 = 1e-12;
pub const CDF_QUAD_TOL: f64 = 1e-8;
pub const KS_THRESHOLD: f64 = 0.02;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random feasible network with a random shape and ELU parameter.
pub fn random_net(r: &mut ChaCha8Rng, max_dim: usize) -> IcnnParams {
    let alpha = r.random_range(0.2..=1.0);
    random_net_with_alpha(r, max_dim, alpha)
}

/// ELU is continuously differentiable only for `α = 1`; with `α < 1` its
/// derivative jumps at zero, so gradient checks use this variant.
pub fn random_smooth_net(r: &mut ChaCha8Rng, max_dim: usize) -> IcnnParams {
    random_net_with_alpha(r, max_dim, 1.0)
}

fn random_net_with_alpha(r: &mut ChaCha8Rng, max_dim: usize, alpha: f64) -> IcnnParams {
    let d = r.random_range(1..=max_dim);
    let depth = r.random_range(2..=4);
    let width = r.random_range(1..=8);
    IcnnParams::init(IcnnArch::new(d, depth, width, alpha).unwrap(), r.random())
}

pub fn random_point(r: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| r.random_range(-scale..=scale)).collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FD_FLOOR)
}

pub fn value(phi: &impl Potential, x: &[f64]) -> f64 {
    let mut ws = phi.workspace();
    phi.eval(x, &mut ws)
}

pub fn check_convexity(triples: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    for i in 0..triples {
        let p = random_net(&mut r, 3);
        let d = p.arch().input_dim();
        let x1 = random_point(&mut r, d, 3.0);
        let x2 = random_point(&mut r, d, 3.0);
        let lam: f64 = r.random_range(0.0..=1.0);
        let mid: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
        let (f1, f2, fm) = (value(&p, &x1), value(&p, &x2), value(&p, &mid));
        let bound = lam * f1 + (1.0 - lam) * f2 + CONVEXITY_SLACK * (1.0 + f1.abs() + f2.abs());
        if fm > bound {
            return Err(format!("triple {i}: φ(mid) = {fm} exceeds chord {bound}"));
        }
    }
    Ok(())
}

pub fn check_input_gradients(cases: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    for case in 0..cases {
        let p = random_smooth_net(&mut r, 3);
        let d = p.arch().input_dim();
        let x = random_point(&mut r, d, 2.0);
        let g = p.grad_input(&x).unwrap();
        for j in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += FD_STEP;
            xm[j] -= FD_STEP;
            let fd = (value(&p, &xp) - value(&p, &xm)) / (2.0 * FD_STEP);
            let e = rel_err(g[j], fd);
            if e > FD_REL_TOL {
                return Err(format!("case {case}, coordinate {j}: analytic {} vs fd {fd} (rel {e:e})", g[j]));
            }
        }
    }
    Ok(())
}

pub fn check_param_gradients(cases: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    for case in 0..cases {
        let p = random_smooth_net(&mut r, 3);
        let d = p.arch().input_dim();
        let x = random_point(&mut r, d, 2.0);
        let g = p.grad_params(&x, 1.0).unwrap();
        let analytic: Vec<(String, Vec<f64>)> = g.tensors().into_iter().map(|(n, t)| (n, t.to_vec())).collect();
        for (t, (name, grad)) in analytic.iter().enumerate() {
            for (k, &gk) in grad.iter().enumerate() {
                let mut plus = p.clone();
                let mut minus = p.clone();
                plus.tensors_mut()[t].1[k] += FD_STEP;
                minus.tensors_mut()[t].1[k] -= FD_STEP;
                let fd = (value(&plus, &x) - value(&minus, &x)) / (2.0 * FD_STEP);
                let e = rel_err(gk, fd);
                if e > FD_REL_TOL {
                    return Err(format!("case {case}, {name}[{k}]: analytic {gk} vs fd {fd} (rel {e:e})"));
                }
            }
        }
    }
    Ok(())
}

/// A converged projected solve against the brute-force grid on `[−2, 2]²`.
pub fn check_conjugate_vs_grid() -> Check {
    let arch = IcnnArch::paper_default(2).unwrap();
    let p = IcnnParams::init(arch, 0);
    let y = [0.5, -0.3];
    let radius = 2.0;
    let resolution = 401;
    let cfg = ConjugateConfig {
        steps: 20_000,
        step_size: 0.01,
        radius: Some(radius),
        init_point: None,
    };
    let solved = solve_conjugate(&p, &y, &cfg).map_err(|e| e.to_string())?;
    let oracle = grid_conjugate_oracle(&p, &y, radius, resolution).map_err(|e| e.to_string())?;
    let slack = grid_slack(&p, &y, radius, resolution);
    if solved.value < oracle - 1e-3 {
        return Err(format!("solver {} below oracle {oracle} − 1e-3", solved.value));
    }
    if solved.value > oracle + slack {
        return Err(format!("solver {} above oracle {oracle} + slack {slack}", solved.value));
    }
    Ok(())
}

/// Lipschitz bound on how far the grid maximum can sit below the true
/// supremum: every ball point is within `h·√d/2` of a node, and the
/// objective's Lipschitz constant is at most `‖y‖ + max ‖∇φ‖` on the box.
pub fn grid_slack(p: &IcnnParams, y: &[f64], radius: f64, resolution: usize) -> f64 {
    let d = y.len();
    let h = 2.0 * radius / (resolution - 1) as f64;
    let mut lip: f64 = 0.0;
    let mut ws = p.workspace();
    let mut g = vec![0.0; d];
    let coarse = 41;
    let mut idx = vec![0usize; d];
    loop {
        let x: Vec<f64> = idx
            .iter()
            .map(|&i| -radius + 2.0 * radius * i as f64 / (coarse - 1) as f64)
            .collect();
        p.eval_with_grad(&x, &mut ws, &mut g);
        lip = lip.max(g.iter().map(|v| v * v).sum::<f64>().sqrt());
        let mut k = 0;
        while k < d {
            idx[k] += 1;
            if idx[k] < coarse {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == d {
            break;
        }
    }
    let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    // Double the sampled gradient bound to cover points between samples.
    (ynorm + 2.0 * lip) * h * (d as f64).sqrt() / 2.0
}

pub fn check_project_ball(cases: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    for case in 0..cases {
        let d = r.random_range(1..=5);
        let x = random_point(&mut r, d, 10.0);
        let radius = r.random_range(0.1..=8.0);
        let once = project_ball(&x, radius);
        let twice = project_ball(&once, radius);
        let norm = once.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > radius * (1.0 + 1e-12) {
            return Err(format!("case {case}: projected norm {norm} exceeds radius {radius}"));
        }
        if once != twice {
            return Err(format!("case {case}: projection not idempotent"));
        }
    }
    Ok(())
}

/// Two Adam steps from θ = 1 with constant gradient 0.5, against the
/// recursion written out by hand.
pub fn check_adam_trace() -> Check {
    let mut params = QuadraticPotential::new(1.0, vec![0.0]);
    let mut state = AdamState::new(&params, AdamHyper::default());
    let mut gq = params.zero_gradient();
    gq.scale = 0.5;
    state.step(&mut params, &gq).map_err(|e| e.to_string())?;
    state.step(&mut params, &gq).map_err(|e| e.to_string())?;

    let (b1, b2, eps, lr, gv) = (0.9_f64, 0.999_f64, 1e-8_f64, 1e-3_f64, 0.5_f64);
    let m1 = (1.0 - b1) * gv;
    let v1 = (1.0 - b2) * gv * gv;
    let t1 = 1.0 - lr * (m1 / (1.0 - b1)) / ((v1 / (1.0 - b2)).sqrt() + eps);
    let m2 = b1 * m1 + (1.0 - b1) * gv;
    let v2 = b2 * v1 + (1.0 - b2) * gv * gv;
    let t2 = t1 - lr * (m2 / (1.0 - b1 * b1)) / ((v2 / (1.0 - b2 * b2)).sqrt() + eps);
    if (params.scale - t2).abs() > ADAM_TRACE_TOL {
        return Err(format!("two-step trace {} vs hand value {t2}", params.scale));
    }
    Ok(())
}

pub fn sample_variance(x: &Array2<f64>) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
}

pub fn check_sampler_moments() -> Check {
    let normal = sample(&DistributionSpec::new(SourceKind::StdNormal, 1).unwrap(), 100_000, 11);
    let t6 = sample(&DistributionSpec::new(SourceKind::StudentT6, 1).unwrap(), 100_000, 12);
    let (vn, vt) = (sample_variance(&normal), sample_variance(&t6));
    if (vn - 1.0).abs() > 0.03 {
        return Err(format!("normal sample variance {vn}"));
    }
    if (vt - 1.5).abs() > 0.1 {
        return Err(format!("t(6) sample variance {vt}"));
    }
    Ok(())
}

/// Adaptive Simpson quadrature.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
            + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 50)
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `Γ(7/2) / (√(6π) Γ(3)) · (1 + t²/6)^{−7/2}`.
pub fn t6_pdf(t: f64) -> f64 {
    let c = 15.0 / (16.0 * 6.0_f64.sqrt());
    c * (1.0 + t * t / 6.0).powf(-3.5)
}

/// CDF by symmetry about zero plus quadrature of the density on `[0, z]`.
pub fn quadrature_cdf(pdf: &dyn Fn(f64) -> f64, z: f64) -> f64 {
    0.5 + integrate(pdf, 0.0, z, 1e-14)
}

pub fn check_cdfs() -> Check {
    for &z in &[-3.0, -1.96, -0.5, 0.0, 0.7, 1.96, 2.0, 4.0] {
        let qn = quadrature_cdf(&normal_pdf, z);
        let qt = quadrature_cdf(&t6_pdf, z);
        if (normal_cdf(z) - qn).abs() > CDF_QUAD_TOL {
            return Err(format!("normal CDF at {z}: {} vs quadrature {qn}", normal_cdf(z)));
        }
        if (student_t6_cdf(z) - qt).abs() > CDF_QUAD_TOL {
            return Err(format!("t6 CDF at {z}: {} vs quadrature {qt}", student_t6_cdf(z)));
        }
        for kind in [SourceKind::StdNormal, SourceKind::StudentT6] {
            let s = cdf(kind, z).unwrap() + cdf(kind, -z).unwrap();
            if (s - 1.0).abs() > 1e-15 {
                return Err(format!("{kind:?} CDF symmetry at {z}: F(z) + F(−z) = {s}"));
            }
        }
    }
    Ok(())
}

/// Kolmogorov–Smirnov distance between a sample and U(0, 1).
pub fn ks_uniform(mut u: Vec<f64>) -> f64 {
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    u.iter()
        .enumerate()
        .map(|(i, &v)| ((i + 1) as f64 / n - v).max(v - i as f64 / n))
        .fold(0.0, f64::max)
}

pub fn check_pit_ks() -> Check {
    for (kind, seed) in [(SourceKind::StdNormal, 21), (SourceKind::StudentT6, 22)] {
        let spec = DistributionSpec::new(kind, 1).unwrap();
        let map = MapSpec::new(MapKind::RankFunction, 1).unwrap();
        let u = pushforward_sample(&map, &spec, 10_000, seed).map_err(|e| e.to_string())?;
        let d = ks_uniform(u.iter().copied().collect());
        if d >= KS_THRESHOLD {
            return Err(format!("{kind:?}: KS distance {d}"));
        }
    }
    Ok(())
}

/// `∇(3/2‖x‖² + ⟨5·1, x⟩) = 3x + 5` is the linear ground-truth map itself.
pub fn check_l2_self_comparison() -> Check {
    let source = DistributionSpec::new(SourceKind::StdNormal, 2).unwrap();
    let map = MapSpec::new(MapKind::Linear, 2).unwrap();
    let exact = QuadraticPotential::new(3.0, vec![5.0, 5.0]);
    let loss = l2_loss(&exact, &map, &source, 10_000, 3).map_err(|e| e.to_string())?;
    if loss > 1e-20 {
        return Err(format!("self-comparison loss {loss:e}"));
    }
    Ok(())
}

/// Inner solver tight enough that the envelope rule is exact to rounding
/// on quadratics: the iteration contracts by `|1 − ηθ|` per step.
fn tight_solver() -> ConjugateConfig {
    ConjugateConfig {
        steps: 400,
        step_size: 0.25,
        radius: None,
        init_point: None,
    }
}

pub const ENVELOPE_QUADRATIC_TOL: f64 = 1e-10;
pub const ENVELOPE_FD_REL_TOL: f64 = 1e-3;

/// For `φ_θ = θ/2‖x‖²`, `φ*_θ(y) = ‖y‖²/(2θ)`, so the exact loss derivative is
/// `mean ½‖x‖² − mean ‖y‖²/(2θ²)`; the envelope formula must reproduce it.
pub fn check_quadratic_envelope() -> Check {
    let theta = 1.7;
    let phi = QuadraticPotential::new(theta, vec![0.0, 0.0]);
    let mut r = rng(31);
    let bx = Array2::from_shape_fn((7, 2), |_| rand::Rng::random_range(&mut r, -2.0..2.0));
    let by = Array2::from_shape_fn((9, 2), |_| rand::Rng::random_range(&mut r, -2.0..2.0));
    let got = semi_dual_batch_loss(&phi, bx.view(), by.view(), &tight_solver()).map_err(|e| e.to_string())?;
    let sq = |a: &Array2<f64>| a.rows().into_iter().map(|v| v.dot(&v)).collect::<Vec<f64>>();
    let (sx, sy) = (sq(&bx), sq(&by));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let grad = 0.5 * mean(&sx) - mean(&sy) / (2.0 * theta * theta);
    let loss = 0.5 * theta * mean(&sx) + mean(&sy) / (2.0 * theta);
    if (got.grads.scale - grad).abs() > ENVELOPE_QUADRATIC_TOL {
        return Err(format!("envelope gradient {} vs analytic {grad}", got.grads.scale));
    }
    if (got.loss - loss).abs() > ENVELOPE_QUADRATIC_TOL {
        return Err(format!("loss {} vs analytic {loss}", got.loss));
    }
    Ok(())
}

/// Full-batch loss gradient of a d = 1 network against central differences
/// of the loss, re-solving every conjugate from the same cold start.
pub fn check_envelope_fd() -> Check {
    let arch = IcnnArch::new(1, 3, 6, 1.0).unwrap();
    let phi = IcnnParams::init(arch, 13);
    let mut ws = phi.workspace();
    let mut g = [0.0];
    let xs: Vec<f64> = (0..20).map(|i| -1.5 + 3.0 * i as f64 / 19.0).collect();
    // Targets inside the range of φ' keep every supremum attained.
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| {
            phi.eval_with_grad(&[0.8 * x], &mut ws, &mut g);
            g[0]
        })
        .collect();
    let bx = Array2::from_shape_vec((xs.len(), 1), xs).unwrap();
    let by = Array2::from_shape_vec((ys.len(), 1), ys).unwrap();
    let cfg = ConjugateConfig {
        steps: 20_000,
        step_size: 0.05,
        radius: Some(3.0),
        init_point: None,
    };
    let loss_at = |p: &IcnnParams| semi_dual_batch_loss(p, bx.view(), by.view(), &cfg).map(|b| b.loss);
    let analytic = semi_dual_batch_loss(&phi, bx.view(), by.view(), &cfg).map_err(|e| e.to_string())?;
    let scale = analytic
        .grads
        .tensors()
        .iter()
        .flat_map(|(_, t)| t.iter())
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let h = 1e-5;
    for (t, (name, grad)) in analytic.grads.tensors().iter().enumerate() {
        for (k, &gk) in grad.iter().enumerate() {
            let mut plus = phi.clone();
            let mut minus = phi.clone();
            plus.tensors_mut()[t].1[k] += h;
            minus.tensors_mut()[t].1[k] -= h;
            let fd = (loss_at(&plus).map_err(|e| e.to_string())? - loss_at(&minus).map_err(|e| e.to_string())?)
                / (2.0 * h);
            let err = (gk - fd).abs() / gk.abs().max(fd.abs()).max(1e-2 * scale);
            if err > ENVELOPE_FD_REL_TOL {
                return Err(format!("{name}[{k}]: envelope {gk} vs fd {fd} (rel {err:e})"));
            }
        }
    }
    Ok(())
}


pub const POINCARE_MAX_CHANGE: f64 = 0.10;

/// Largest normalized ratio over `pairs` random network pairs at two Monte
/// Carlo sizes; returns the two maxima.
pub fn poincare_maxima(pairs: usize, small: usize, large: usize) -> Result<(f64, f64), String> {
    use otmap::eval::poincare_diagnostic;
    let source = DistributionSpec::new(SourceKind::StdNormal, 1).unwrap();
    let arch = IcnnArch::paper_default(1).unwrap();
    let (mut max_small, mut max_large) = (0.0_f64, 0.0_f64);
    for i in 0..pairs as u64 {
        let p1 = IcnnParams::init(arch, 2 * i);
        let p2 = IcnnParams::init(arch, 2 * i + 1);
        let a = poincare_diagnostic(&p1, &p2, &source, small, 1000 + i).map_err(|e| e.to_string())?;
        let b = poincare_diagnostic(&p1, &p2, &source, large, 1000 + i).map_err(|e| e.to_string())?;
        if !(a.ratio.is_finite() && b.ratio.is_finite()) {
            return Err(format!("pair {i}: non-finite ratio"));
        }
        max_small = max_small.max(a.ratio);
        max_large = max_large.max(b.ratio);
    }
    Ok((max_small, max_large))
}

pub fn check_poincare_stability(pairs: usize) -> Check {
    let (a, b) = poincare_maxima(pairs, 50_000, 100_000)?;
    let change = (b - a).abs() / a.max(b);
    if change >= POINCARE_MAX_CHANGE {
        return Err(format!("max ratio {a} at 5e4 samples vs {b} at 1e5 (change {change:.3})"));
    }
    Ok(())
}

/// Largest normalized ratio over `pairs` random network pairs drawn against
/// `source`; errors if any ratio is non-finite.
pub fn poincare_maxima_for(source: SourceKind, pairs: usize, samples: usize) -> Result<f64, String> {
    use otmap::eval::poincare_diagnostic;
    let spec = DistributionSpec::new(source, 1).unwrap();
    let arch = IcnnArch::paper_default(1).unwrap();
    let mut max = 0.0_f64;
    for i in 0..pairs as u64 {
        let p1 = IcnnParams::init(arch, 2 * i);
        let p2 = IcnnParams::init(arch, 2 * i + 1);
        let d = poincare_diagnostic(&p1, &p2, &spec, samples, 1000 + i).map_err(|e| e.to_string())?;
        if !d.ratio.is_finite() {
            return Err(format!("pair {i}: non-finite ratio against {}", source.name()));
        }
        max = max.max(d.ratio);
    }
    Ok(max)
}
