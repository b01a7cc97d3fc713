//! Input-convex neural network potentials.
//!
//! A network with `K` layers evaluates
//!
//! ```text
//! z₁ = W₁x + b₁
//! zₖ = Aₖ s(zₖ₋₁) + Wₖx + bₖ        k = 2, …, K−1
//! φ(x) = A_K s(z_{K−1}) + W_K x + b_K
//! ```
//!
//! where `s` is the ELU activation and every entry of every `Aₖ` (`k ≥ 2`) is
//! nonnegative. A convex nondecreasing activation composed through
//! nonnegative weights keeps `φ` convex in `x`. `W₁` is unconstrained.
//!
//! Gradients with respect to the input and to every parameter are computed
//! by hand-written reverse accumulation through this fixed recursion.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::potential::{ParamTensors, Potential, TrainablePotential};
use crate::{Error, Result};

/// Version tag written into serialized models.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawArch", into = "RawArch")]
pub struct IcnnArch {
    input_dim: usize,
    depth: usize,
    width: usize,
    activation_alpha: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArch {
    input_dim: usize,
    depth: usize,
    width: usize,
    activation_alpha: f64,
}

impl TryFrom<RawArch> for IcnnArch {
    type Error = Error;

    fn try_from(raw: RawArch) -> Result<Self> {
        IcnnArch::new(raw.input_dim, raw.depth, raw.width, raw.activation_alpha)
    }
}

impl From<IcnnArch> for RawArch {
    fn from(a: IcnnArch) -> Self {
        RawArch {
            input_dim: a.input_dim,
            depth: a.depth,
            width: a.width,
            activation_alpha: a.activation_alpha,
        }
    }
}

impl IcnnArch {
    /// `activation_alpha` must lie in `(0, 1]`: for larger values ELU has a
    /// concave kink at zero and the network is no longer convex.
    pub fn new(input_dim: usize, depth: usize, width: usize, activation_alpha: f64) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidArch("input_dim must be at least 1".into()));
        }
        if depth < 2 {
            return Err(Error::InvalidArch(format!("depth must be at least 2, got {depth}")));
        }
        if width == 0 {
            return Err(Error::InvalidArch("width must be at least 1".into()));
        }
        if !(activation_alpha > 0.0 && activation_alpha <= 1.0) {
            return Err(Error::InvalidArch(format!(
                "activation_alpha must be in (0, 1], got {activation_alpha}"
            )));
        }
        Ok(Self {
            input_dim,
            depth,
            width,
            activation_alpha,
        })
    }

    /// Three layers, fifteen hidden units, ELU with `α = 1`.
    pub fn paper_default(input_dim: usize) -> Result<Self> {
        Self::new(input_dim, 3, 15, 1.0)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn activation_alpha(&self) -> f64 {
        self.activation_alpha
    }

    /// Output size of layer `k` (zero-based).
    fn layer_out(&self, k: usize) -> usize {
        if k + 1 == self.depth {
            1
        } else {
            self.width
        }
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn check(&self, rows: usize, cols: usize, what: &str) -> Result<()> {
        if self.rows != rows || self.cols != cols || self.data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{what}: expected {rows}x{cols}, found {}x{} with {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(())
    }
}

/// One layer: skip map `W` from the input, optional nonnegative map `A` from
/// the previous hidden state (absent on the first layer), and bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    skip: Matrix,
    nonneg: Option<Matrix>,
    bias: Vec<f64>,
}

impl Layer {
    pub fn skip(&self) -> &Matrix {
        &self.skip
    }

    pub fn skip_mut(&mut self) -> &mut Matrix {
        &mut self.skip
    }

    pub fn nonneg(&self) -> Option<&Matrix> {
        self.nonneg.as_ref()
    }

    pub fn nonneg_mut(&mut self) -> Option<&mut Matrix> {
        self.nonneg.as_mut()
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    fn zeros(arch: &IcnnArch, k: usize) -> Self {
        let out = arch.layer_out(k);
        Self {
            skip: Matrix::zeros(out, arch.input_dim),
            nonneg: (k > 0).then(|| Matrix::zeros(out, arch.width)),
            bias: vec![0.0; out],
        }
    }

    fn tensors(&self, k: usize) -> Vec<(String, &[f64])> {
        let mut v = vec![(format!("layers[{k}].skip"), self.skip.as_slice())];
        if let Some(a) = &self.nonneg {
            v.push((format!("layers[{k}].nonneg"), a.as_slice()));
        }
        v.push((format!("layers[{k}].bias"), self.bias.as_slice()));
        v
    }

    fn tensors_mut(&mut self, k: usize) -> Vec<(String, &mut [f64])> {
        let mut v = vec![(format!("layers[{k}].skip"), self.skip.as_mut_slice())];
        if let Some(a) = &mut self.nonneg {
            v.push((format!("layers[{k}].nonneg"), a.as_mut_slice()));
        }
        v.push((format!("layers[{k}].bias"), self.bias.as_mut_slice()));
        v
    }
}

/// Full parameter set of an input-convex network.
#[derive(Debug, Clone, PartialEq)]
pub struct IcnnParams {
    arch: IcnnArch,
    layers: Vec<Layer>,
}

/// `∂φ/∂θ`, shaped like the owning [`IcnnParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient {
    layers: Vec<Layer>,
}

impl ParamGradient {
    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Entrywise `self += other`.
    pub fn add_assign(&mut self, other: &ParamGradient) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.1.iter_mut().zip(b.1) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

#[inline]
fn elu(z: f64, alpha: f64) -> (f64, f64) {
    // Branch-free: the sign of z is close to random across a batch, so a
    // branch mispredicts often and costs more than the extra exp.
    let e = z.min(0.0).exp();
    let pos = z > 0.0;
    (
        if pos { z } else { alpha * (e - 1.0) },
        if pos { 1.0 } else { alpha * e },
    )
}

/// Scratch buffers for one evaluation: per hidden layer, the activations,
/// activation derivatives and backpropagated deltas.
#[derive(Debug, Clone)]
pub struct IcnnWorkspace {
    act: Vec<Vec<f64>>,
    dact: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
    batch: BatchBuffers,
}

/// Batched scratch, laid out unit-major: entry `(unit, point)` of a layer
/// sits at `unit * n + point`, so the inner loops run over points.
#[derive(Debug, Clone, Default)]
struct BatchBuffers {
    xt: Vec<f64>,
    act: Vec<f64>,
    dact: Vec<f64>,
    delta: Vec<f64>,
    gt: Vec<f64>,
}

impl BatchBuffers {
    fn fit(&mut self, arch: &IcnnArch, n: usize) {
        let h = (arch.depth - 1) * arch.width * n;
        let xd = arch.input_dim * n;
        for (buf, len) in [
            (&mut self.xt, xd),
            (&mut self.act, h),
            (&mut self.dact, h),
            (&mut self.delta, h),
            (&mut self.gt, xd),
        ] {
            buf.resize(len, 0.0);
        }
    }
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (u, v) in y.iter_mut().zip(x) {
        *u += a * v;
    }
}

impl IcnnParams {
    /// Network with every weight and bias zero (`φ ≡ 0`).
    pub fn zeros(arch: IcnnArch) -> Self {
        let layers = (0..arch.depth).map(|k| Layer::zeros(&arch, k)).collect();
        Self { arch, layers }
    }

    /// Seeded initialization. Skip weights and biases are uniform on
    /// `[−1/√d, 1/√d]`; nonnegative weights are uniform on `[0, 2/√width]`
    /// so the network starts feasible.
    pub fn init(arch: IcnnArch, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Self::zeros(arch);
        let s_in = 1.0 / (arch.input_dim as f64).sqrt();
        let s_hidden = 1.0 / (arch.width as f64).sqrt();
        for layer in &mut params.layers {
            for v in layer.skip.as_mut_slice() {
                *v = rng.random_range(-s_in..=s_in);
            }
            if let Some(a) = &mut layer.nonneg {
                for v in a.as_mut_slice() {
                    *v = rng.random_range(0.0..=2.0 * s_hidden);
                }
            }
            for v in &mut layer.bias {
                *v = rng.random_range(-s_in..=s_in);
            }
        }
        params
    }

    pub fn arch(&self) -> &IcnnArch {
        &self.arch
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access to layer contents. Shapes cannot change through this
    /// handle; nonnegativity is the caller's responsibility.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arch.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.arch.input_dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("network input".into()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let mut ws = self.workspace();
        Ok(self.eval(x, &mut ws))
    }

    pub fn grad_input(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut ws = self.workspace();
        let mut g = vec![0.0; x.len()];
        self.eval_with_grad(x, &mut ws, &mut g);
        Ok(g)
    }

    /// `scale · ∂φ(x)/∂θ`.
    pub fn grad_params(&self, x: &[f64], scale: f64) -> Result<ParamGradient> {
        self.check_input(x)?;
        let mut ws = self.workspace();
        let mut acc = self.zero_gradient();
        self.accumulate_param_grad(x, scale, &mut ws, &mut acc);
        Ok(acc)
    }

    /// Copy with every nonnegative-weight entry clamped to `max(entry, 0)`.
    pub fn project_nonneg(&self) -> IcnnParams {
        let mut p = self.clone();
        p.project();
        p
    }

    pub fn is_feasible(&self) -> bool {
        self.layers
            .iter()
            .filter_map(|l| l.nonneg.as_ref())
            .all(|a| a.as_slice().iter().all(|&v| v >= 0.0))
    }

    /// Forward pass storing activations; returns `φ(x)`.
    fn forward_into(&self, x: &[f64], ws: &mut IcnnWorkspace) -> f64 {
        let alpha = self.arch.activation_alpha;
        let hidden = self.arch.depth - 1;
        for k in 0..hidden {
            let layer = &self.layers[k];
            let (done, rest) = ws.act.split_at_mut(k);
            let act = &mut rest[0];
            let dact = &mut ws.dact[k];
            for r in 0..self.arch.width {
                let mut z = layer.bias[r] + dot(layer.skip.row(r), x);
                if let Some(a) = &layer.nonneg {
                    z += dot(a.row(r), &done[k - 1]);
                }
                let (s, ds) = elu(z, alpha);
                act[r] = s;
                dact[r] = ds;
            }
        }
        let last = &self.layers[hidden];
        let a = last.nonneg.as_ref().expect("output layer has a nonnegative map");
        last.bias[0] + dot(last.skip.row(0), x) + dot(a.row(0), &ws.act[hidden - 1])
    }

    /// Backpropagates a unit output sensitivity into `ws.delta`
    /// (`delta[k] = ∂φ/∂zₖ`). Requires a preceding `forward_into`.
    fn backward_deltas(&self, ws: &mut IcnnWorkspace) {
        let hidden = self.arch.depth - 1;
        let a_out = self.layers[hidden].nonneg.as_ref().unwrap();
        for r in 0..self.arch.width {
            ws.delta[hidden - 1][r] = a_out.get(0, r) * ws.dact[hidden - 1][r];
        }
        for k in (1..hidden).rev() {
            let a = self.layers[k].nonneg.as_ref().unwrap();
            let (lower, upper) = ws.delta.split_at_mut(k);
            let below = &mut lower[k - 1];
            below.iter_mut().for_each(|v| *v = 0.0);
            for (r, &d) in upper[0].iter().enumerate() {
                for (b, &w) in below.iter_mut().zip(a.row(r)) {
                    *b += w * d;
                }
            }
            for (b, &ds) in below.iter_mut().zip(&ws.dact[k - 1]) {
                *b *= ds;
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        file.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four independent partial sums; a single running sum is latency-bound.
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (u, v) in (&mut ca).zip(&mut cb) {
        acc[0] += u[0] * v[0];
        acc[1] += u[1] * v[1];
        acc[2] += u[2] * v[2];
        acc[3] += u[3] * v[3];
    }
    let mut tail = 0.0;
    for (u, v) in ca.remainder().iter().zip(cb.remainder()) {
        tail += u * v;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

impl Potential for IcnnParams {
    type Workspace = IcnnWorkspace;

    fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    fn workspace(&self) -> IcnnWorkspace {
        let h = self.arch.depth - 1;
        let w = self.arch.width;
        IcnnWorkspace {
            act: vec![vec![0.0; w]; h],
            dact: vec![vec![0.0; w]; h],
            delta: vec![vec![0.0; w]; h],
            batch: BatchBuffers::default(),
        }
    }

    fn eval(&self, x: &[f64], ws: &mut IcnnWorkspace) -> f64 {
        debug_assert_eq!(x.len(), self.arch.input_dim);
        self.forward_into(x, ws)
    }

    fn eval_with_grad(&self, x: &[f64], ws: &mut IcnnWorkspace, grad: &mut [f64]) -> f64 {
        debug_assert_eq!(x.len(), self.arch.input_dim);
        let value = self.forward_into(x, ws);
        self.backward_deltas(ws);
        grad.copy_from_slice(self.layers[self.arch.depth - 1].skip.row(0));
        for (k, delta) in ws.delta.iter().enumerate() {
            let skip = &self.layers[k].skip;
            for (r, &d) in delta.iter().enumerate() {
                for (g, &w) in grad.iter_mut().zip(skip.row(r)) {
                    *g += w * d;
                }
            }
        }
        value
    }

    fn eval_with_grad_batch(
        &self,
        xs: &[f64],
        ws: &mut IcnnWorkspace,
        values: &mut [f64],
        grads: &mut [f64],
    ) {
        let n = values.len();
        let d = self.arch.input_dim;
        let w = self.arch.width;
        let hidden = self.arch.depth - 1;
        let alpha = self.arch.activation_alpha;
        debug_assert_eq!(xs.len(), n * d);
        debug_assert_eq!(grads.len(), n * d);
        let b = &mut ws.batch;
        b.fit(&self.arch, n);
        for (p, row) in xs.chunks_exact(d).enumerate() {
            for (j, &v) in row.iter().enumerate() {
                b.xt[j * n + p] = v;
            }
        }

        // Forward. Each point's pre-activation accumulates bias, skip terms in
        // input order, then hidden terms in unit order, independent of `n`.
        for k in 0..hidden {
            let layer = &self.layers[k];
            let (done, rest) = b.act.split_at_mut(k * w * n);
            let prev = &done[done.len().saturating_sub(w * n)..];
            let act = &mut rest[..w * n];
            for r in 0..w {
                let z = &mut act[r * n..(r + 1) * n];
                z.fill(layer.bias[r]);
                for (j, &wj) in layer.skip.row(r).iter().enumerate() {
                    axpy(z, wj, &b.xt[j * n..(j + 1) * n]);
                }
                if let Some(a) = &layer.nonneg {
                    for (c, &ac) in a.row(r).iter().enumerate() {
                        axpy(z, ac, &prev[c * n..(c + 1) * n]);
                    }
                }
            }
            let dact = &mut b.dact[k * w * n..(k + 1) * w * n];
            for (zv, dv) in act.iter_mut().zip(dact.iter_mut()) {
                let (s, ds) = elu(*zv, alpha);
                *zv = s;
                *dv = ds;
            }
        }
        let last = &self.layers[hidden];
        let a_out = last.nonneg.as_ref().expect("output layer has a nonnegative map");
        let top = &b.act[(hidden - 1) * w * n..hidden * w * n];
        values.fill(last.bias[0]);
        for (j, &wj) in last.skip.row(0).iter().enumerate() {
            axpy(values, wj, &b.xt[j * n..(j + 1) * n]);
        }
        for (c, &ac) in a_out.row(0).iter().enumerate() {
            axpy(values, ac, &top[c * n..(c + 1) * n]);
        }

        // Backward: delta[k](r, p) = ∂φ(x_p)/∂z_k(r).
        {
            let base = (hidden - 1) * w * n;
            for (r, &ar) in a_out.row(0).iter().enumerate() {
                let o = base + r * n;
                for p in 0..n {
                    b.delta[o + p] = ar * b.dact[o + p];
                }
            }
        }
        for k in (1..hidden).rev() {
            let a = self.layers[k].nonneg.as_ref().unwrap();
            let (lower, upper) = b.delta.split_at_mut(k * w * n);
            let below = &mut lower[(k - 1) * w * n..];
            let above = &upper[..w * n];
            below.fill(0.0);
            for r in 0..w {
                let dr = &above[r * n..(r + 1) * n];
                for (c, &ac) in a.row(r).iter().enumerate() {
                    axpy(&mut below[c * n..(c + 1) * n], ac, dr);
                }
            }
            for (v, &ds) in below.iter_mut().zip(&b.dact[(k - 1) * w * n..k * w * n]) {
                *v *= ds;
            }
        }

        for (j, &wj) in last.skip.row(0).iter().enumerate() {
            b.gt[j * n..(j + 1) * n].fill(wj);
        }
        for k in 0..hidden {
            let skip = &self.layers[k].skip;
            let delta = &b.delta[k * w * n..(k + 1) * w * n];
            for r in 0..w {
                let dr = &delta[r * n..(r + 1) * n];
                for (j, &wj) in skip.row(r).iter().enumerate() {
                    axpy(&mut b.gt[j * n..(j + 1) * n], wj, dr);
                }
            }
        }
        for (p, row) in grads.chunks_exact_mut(d).enumerate() {
            for (j, g) in row.iter_mut().enumerate() {
                *g = b.gt[j * n + p];
            }
        }
    }
}

impl TrainablePotential for IcnnParams {
    type Gradient = ParamGradient;

    fn zero_gradient(&self) -> ParamGradient {
        ParamGradient {
            layers: (0..self.arch.depth).map(|k| Layer::zeros(&self.arch, k)).collect(),
        }
    }

    fn accumulate_param_grad(
        &self,
        x: &[f64],
        scale: f64,
        ws: &mut IcnnWorkspace,
        acc: &mut ParamGradient,
    ) {
        debug_assert_eq!(x.len(), self.arch.input_dim);
        self.forward_into(x, ws);
        self.backward_deltas(ws);
        let hidden = self.arch.depth - 1;
        let d = self.arch.input_dim;
        let w = self.arch.width;

        let out = &mut acc.layers[hidden];
        out.bias[0] += scale;
        for (g, &xi) in out.skip.as_mut_slice().iter_mut().zip(x) {
            *g += scale * xi;
        }
        let a = out.nonneg.as_mut().unwrap().as_mut_slice();
        for (g, &s) in a.iter_mut().zip(&ws.act[hidden - 1]) {
            *g += scale * s;
        }

        for k in 0..hidden {
            let layer = &mut acc.layers[k];
            for r in 0..w {
                let sd = scale * ws.delta[k][r];
                layer.bias[r] += sd;
                for (g, &xi) in layer.skip.as_mut_slice()[r * d..(r + 1) * d].iter_mut().zip(x) {
                    *g += sd * xi;
                }
                if let Some(a) = &mut layer.nonneg {
                    for (g, &s) in a.as_mut_slice()[r * w..(r + 1) * w]
                        .iter_mut()
                        .zip(&ws.act[k - 1])
                    {
                        *g += sd * s;
                    }
                }
            }
        }
    }

    fn project(&mut self) {
        for a in self.layers.iter_mut().filter_map(|l| l.nonneg.as_mut()) {
            for v in a.as_mut_slice() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
    }
}

impl ParamTensors for IcnnParams {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        self.layers.iter().enumerate().flat_map(|(k, l)| l.tensors(k)).collect()
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(k, l)| l.tensors_mut(k))
            .collect()
    }
}

impl ParamTensors for ParamGradient {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        self.layers.iter().enumerate().flat_map(|(k, l)| l.tensors(k)).collect()
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(k, l)| l.tensors_mut(k))
            .collect()
    }
}

/// On-disk model document. Field order: `format_version`, `arch`, then
/// `layers` from first to output, each with `skip`, `nonneg`, `bias`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    arch: IcnnArch,
    layers: Vec<Layer>,
}

impl From<&IcnnParams> for ModelFile {
    fn from(p: &IcnnParams) -> Self {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            arch: p.arch,
            layers: p.layers.clone(),
        }
    }
}

impl TryFrom<ModelFile> for IcnnParams {
    type Error = Error;

    fn try_from(file: ModelFile) -> Result<Self> {
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported model format version {}",
                file.format_version
            )));
        }
        let arch = file.arch;
        if file.layers.len() != arch.depth {
            return Err(Error::ShapeMismatch(format!(
                "expected {} layers, found {}",
                arch.depth,
                file.layers.len()
            )));
        }
        for (k, layer) in file.layers.iter().enumerate() {
            let out = arch.layer_out(k);
            layer.skip.check(out, arch.input_dim, &format!("layers[{k}].skip"))?;
            match (&layer.nonneg, k) {
                (None, 0) => {}
                (Some(a), k) if k > 0 => a.check(out, arch.width, &format!("layers[{k}].nonneg"))?,
                _ => {
                    return Err(Error::ShapeMismatch(format!(
                        "layers[{k}].nonneg must be {} for this layer",
                        if k == 0 { "null" } else { "present" }
                    )))
                }
            }
            if layer.bias.len() != out {
                return Err(Error::ShapeMismatch(format!(
                    "layers[{k}].bias: expected {out} entries, found {}",
                    layer.bias.len()
                )));
            }
        }
        let params = IcnnParams {
            arch,
            layers: file.layers,
        };
        if !params.all_finite() {
            return Err(Error::NonFiniteInput("model parameters".into()));
        }
        Ok(params)
    }
}
