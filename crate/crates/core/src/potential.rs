//! Interfaces shared by the network potential and the reference quadratic family.
//!
//! The conjugate solver and evaluation code only need values and input
//! gradients ([`Potential`]). Training additionally needs parameter gradients
//! and a feasibility projection ([`TrainablePotential`]). The `eval*` and
//! `accumulate_*` methods are hot-path entry points: they do not check input
//! dimensions beyond `debug_assert!`.

/// Named, flat views of every trainable tensor, in a fixed order.
///
/// Two values are congruent when they yield the same number of tensors with
/// the same lengths in the same order.
pub trait ParamTensors {
    fn tensors(&self) -> Vec<(String, &[f64])>;
    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

pub trait Potential: Sync {
    /// Scratch buffers reused across evaluations.
    type Workspace: Send;

    fn input_dim(&self) -> usize;

    fn workspace(&self) -> Self::Workspace;

    fn eval(&self, x: &[f64], ws: &mut Self::Workspace) -> f64;

    /// Returns `φ(x)` and writes `∇ₓφ(x)` into `grad`.
    fn eval_with_grad(&self, x: &[f64], ws: &mut Self::Workspace, grad: &mut [f64]) -> f64;

    /// Values and input gradients at `values.len()` points stored row-major
    /// in `xs`; gradients go row-major into `grads`. Each point's result must
    /// not depend on which other points share the batch.
    fn eval_with_grad_batch(
        &self,
        xs: &[f64],
        ws: &mut Self::Workspace,
        values: &mut [f64],
        grads: &mut [f64],
    ) {
        let d = self.input_dim();
        for ((x, g), v) in xs.chunks_exact(d).zip(grads.chunks_exact_mut(d)).zip(values) {
            *v = self.eval_with_grad(x, ws, g);
        }
    }
}

pub trait TrainablePotential: Potential + ParamTensors + Clone + Send {
    type Gradient: ParamTensors + Clone + Send;

    fn zero_gradient(&self) -> Self::Gradient;

    /// `acc += scale · ∂φ(x)/∂θ`.
    fn accumulate_param_grad(
        &self,
        x: &[f64],
        scale: f64,
        ws: &mut Self::Workspace,
        acc: &mut Self::Gradient,
    );

    /// Restore parameter constraints after an unconstrained optimizer step.
    fn project(&mut self);
}

/// `φ(x) = scale/2 · ‖x‖² + ⟨shift, x⟩` with only `scale` trainable.
///
/// Its gradient `scale·x + shift` is affine, so every transport map of the
/// form `a·x + b` with `a > 0` has an exact potential in this family. Used as
/// a reference model in tests and for self-comparison checks.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticPotential {
    pub scale: f64,
    pub shift: Vec<f64>,
}

impl QuadraticPotential {
    pub fn new(scale: f64, shift: Vec<f64>) -> Self {
        Self { scale, shift }
    }

    /// `½‖x‖²`, the self-conjugate potential.
    pub fn half_square_norm(dim: usize) -> Self {
        Self::new(1.0, vec![0.0; dim])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticGradient {
    pub scale: f64,
}

impl ParamTensors for QuadraticPotential {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        vec![("scale".to_string(), std::slice::from_ref(&self.scale))]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        vec![("scale".to_string(), std::slice::from_mut(&mut self.scale))]
    }
}

impl ParamTensors for QuadraticGradient {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        vec![("scale".to_string(), std::slice::from_ref(&self.scale))]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        vec![("scale".to_string(), std::slice::from_mut(&mut self.scale))]
    }
}

impl Potential for QuadraticPotential {
    type Workspace = ();

    fn input_dim(&self) -> usize {
        self.shift.len()
    }

    fn workspace(&self) {}

    fn eval(&self, x: &[f64], _ws: &mut ()) -> f64 {
        let sq: f64 = x.iter().map(|v| v * v).sum();
        let lin: f64 = x.iter().zip(&self.shift).map(|(a, b)| a * b).sum();
        0.5 * self.scale * sq + lin
    }

    fn eval_with_grad(&self, x: &[f64], ws: &mut (), grad: &mut [f64]) -> f64 {
        for ((g, xi), b) in grad.iter_mut().zip(x).zip(&self.shift) {
            *g = self.scale * xi + b;
        }
        self.eval(x, ws)
    }
}

impl TrainablePotential for QuadraticPotential {
    type Gradient = QuadraticGradient;

    fn zero_gradient(&self) -> QuadraticGradient {
        QuadraticGradient { scale: 0.0 }
    }

    fn accumulate_param_grad(&self, x: &[f64], scale: f64, _ws: &mut (), acc: &mut QuadraticGradient) {
        let sq: f64 = x.iter().map(|v| v * v).sum();
        acc.scale += scale * 0.5 * sq;
    }

    fn project(&mut self) {}
}
