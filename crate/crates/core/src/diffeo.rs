//! Learned diffeomorphism from state space to a sub-dynamics embedding.
//!
//! The map is a stack of affine coupling layers. Each layer keeps a subset
//! of coordinates and scales/shifts the rest by functions of the kept ones;
//! those functions are linear read-outs of frozen random Fourier features.
//! With the map `psi` learned, the stable field in state space is
//! `x' = J_psi(x)^-1 (psi(x*) - psi(x))`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::DiffeoError;

/// Format tag written to and required from serialized models.
pub const FORMAT_TAG: &str = "diffeo-v1";

#[derive(Clone, Debug, PartialEq)]
pub struct FourierFeatureNet {
    /// `D_f x n`, frozen.
    pub frequencies: DMatrix<f64>,
    /// Length `D_f`, frozen, in `[0, 2 pi)`.
    pub phases: DVector<f64>,
    /// `out x D_f`, trained.
    pub out_weights: DMatrix<f64>,
    pub bandwidth: f64,
}

impl FourierFeatureNet {
    /// Frequencies drawn from `N(0, 1/bandwidth^2)`; weights start at zero.
    pub fn new<R: Rng>(input: usize, output: usize, features: usize, bandwidth: f64, rng: &mut R) -> Self {
        let frequencies = DMatrix::from_fn(features, input, |_, _| {
            let z: f64 = StandardNormal.sample(rng);
            z / bandwidth
        });
        let phases = DVector::from_fn(features, |_, _| rng.random_range(0.0..std::f64::consts::TAU));
        Self {
            frequencies,
            phases,
            out_weights: DMatrix::zeros(output, features),
            bandwidth,
        }
    }

    pub fn features(&self) -> usize {
        self.phases.len()
    }

    fn norm(&self) -> f64 {
        (2.0 / self.features() as f64).sqrt()
    }

    /// Pre-activations `W x + b`.
    fn pre(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.frequencies * x + &self.phases
    }

    /// `phi(x) = sqrt(2/D) cos(W x + b)`.
    pub fn feature_map(&self, x: &DVector<f64>) -> DVector<f64> {
        let c = self.norm();
        self.pre(x).map(|z| c * z.cos())
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.out_weights * self.feature_map(x)
    }

    /// `d eval / d x`, `out x n`.
    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let c = self.norm();
        let dphi = self.pre(x).map(|z| -c * z.sin());
        let mut scaled = self.frequencies.clone();
        for (mut row, d) in scaled.row_iter_mut().zip(dphi.iter()) {
            row *= *d;
        }
        &self.out_weights * scaled
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingLayer {
    /// Coordinates passed through unchanged, sorted.
    pub pass_mask: Vec<usize>,
    /// The complement of `pass_mask`, sorted.
    pub transform: Vec<usize>,
    pub scale_net: FourierFeatureNet,
    pub translate_net: FourierFeatureNet,
}

/// Per-layer quantities kept for the backward pass.
struct LayerTrace {
    input: Vec<f64>,
    exp_s: Vec<f64>,
    phi_s: Vec<f64>,
    dphi_s: Vec<f64>,
    phi_t: Vec<f64>,
    dphi_t: Vec<f64>,
}

/// Reusable buffers for one worker's forward and backward passes.
struct Scratch {
    y: Vec<f64>,
    g: Vec<f64>,
    mix_s: Vec<f64>,
    mix_t: Vec<f64>,
    traces: Vec<LayerTrace>,
}

impl Scratch {
    fn new(stack: &CouplingStack) -> Self {
        let d = stack.dim;
        let nf = stack.layers.iter().map(|l| l.scale_net.features()).max().unwrap_or(0);
        let traces = stack
            .layers
            .iter()
            .map(|l| {
                let f = l.scale_net.features();
                LayerTrace {
                    input: vec![0.0; d],
                    exp_s: vec![0.0; l.transform.len()],
                    phi_s: vec![0.0; f],
                    dphi_s: vec![0.0; f],
                    phi_t: vec![0.0; f],
                    dphi_t: vec![0.0; f],
                }
            })
            .collect();
        Self {
            y: vec![0.0; d],
            g: vec![0.0; d],
            mix_s: vec![0.0; nf],
            mix_t: vec![0.0; nf],
            traces,
        }
    }
}

impl CouplingLayer {
    pub fn new<R: Rng>(dim: usize, pass_mask: Vec<usize>, features: usize, bandwidth: f64, rng: &mut R) -> Self {
        let transform: Vec<usize> = (0..dim).filter(|i| !pass_mask.contains(i)).collect();
        let n = pass_mask.len();
        let m = transform.len();
        Self {
            scale_net: FourierFeatureNet::new(n, m, features, bandwidth, rng),
            translate_net: FourierFeatureNet::new(n, m, features, bandwidth, rng),
            pass_mask,
            transform,
        }
    }

    fn dim(&self) -> usize {
        self.pass_mask.len() + self.transform.len()
    }

    fn pass_part(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.pass_mask.len(), self.pass_mask.iter().map(|&i| x[i]))
    }

    /// `s(x_pass)` and `t(x_pass)`.
    pub fn scale_shift(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let xp = self.pass_part(x);
        (self.scale_net.eval(&xp), self.translate_net.eval(&xp))
    }

    pub fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        let (s, t) = self.scale_shift(x);
        let mut y = x.clone();
        for (k, &i) in self.transform.iter().enumerate() {
            y[i] = x[i] * s[k].exp() + t[k];
        }
        y
    }

    pub fn inverse(&self, y: &DVector<f64>) -> DVector<f64> {
        let (s, t) = self.scale_shift(y);
        let mut x = y.clone();
        for (k, &i) in self.transform.iter().enumerate() {
            x[i] = (y[i] - t[k]) * (-s[k]).exp();
        }
        x
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim();
        let xp = self.pass_part(x);
        let s = self.scale_net.eval(&xp);
        let js = self.scale_net.jacobian(&xp);
        let jt = self.translate_net.jacobian(&xp);
        let mut j = DMatrix::identity(d, d);
        for (k, &i) in self.transform.iter().enumerate() {
            let es = s[k].exp();
            j[(i, i)] = es;
            for (c, &p) in self.pass_mask.iter().enumerate() {
                j[(i, p)] = x[i] * es * js[(k, c)] + jt[(k, c)];
            }
        }
        j
    }
}

/// Gradients of the loss with respect to every layer's read-out weights.
#[derive(Clone, Debug)]
struct Gradient {
    scale: Vec<DMatrix<f64>>,
    translate: Vec<DMatrix<f64>>,
}

impl Gradient {
    fn zeros(stack: &CouplingStack) -> Self {
        Self {
            scale: stack.layers.iter().map(|l| l.scale_net.out_weights.map(|_| 0.0)).collect(),
            translate: stack.layers.iter().map(|l| l.translate_net.out_weights.map(|_| 0.0)).collect(),
        }
    }

    fn add(&mut self, other: &Gradient) {
        for (a, b) in self.scale.iter_mut().zip(&other.scale) {
            *a += b;
        }
        for (a, b) in self.translate.iter_mut().zip(&other.translate) {
            *a += b;
        }
    }

    fn scale_by(&mut self, k: f64) {
        self.scale.iter_mut().for_each(|m| *m *= k);
        self.translate.iter_mut().for_each(|m| *m *= k);
    }
}

/// Construction parameters for a [`CouplingStack`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackConfig {
    pub layers: usize,
    pub features: usize,
    pub bandwidth: f64,
    pub seed: u64,
}

impl StackConfig {
    /// 10 layers of 200 features with bandwidth `0.45 * diameter`.
    pub fn for_diameter(diameter: f64, seed: u64) -> Self {
        Self {
            layers: 10,
            features: 200,
            bandwidth: 0.45 * diameter.max(1e-12),
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingStack {
    pub layers: Vec<CouplingLayer>,
    pub dim: usize,
}

impl CouplingStack {
    /// Even layers pass the first `d/2` coordinates, odd layers the rest.
    pub fn new(dim: usize, config: &StackConfig) -> Result<Self, DiffeoError> {
        if dim < 2 {
            return Err(DiffeoError::DimensionTooSmall(dim));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let half = dim / 2;
        let layers = (0..config.layers)
            .map(|l| {
                let mask: Vec<usize> = if l % 2 == 0 { (0..half).collect() } else { (half..dim).collect() };
                CouplingLayer::new(dim, mask, config.features, config.bandwidth, &mut rng)
            })
            .collect();
        Ok(Self { layers, dim })
    }

    fn check(&self, x: &DVector<f64>) -> Result<(), DiffeoError> {
        if x.len() != self.dim {
            return Err(DiffeoError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &DVector<f64>) -> Result<DVector<f64>, DiffeoError> {
        self.check(x)?;
        let mut y = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            y = layer.forward(&y);
            if y.iter().any(|v| !v.is_finite()) {
                return Err(DiffeoError::NonFinite(l));
            }
        }
        Ok(y)
    }

    pub fn inverse(&self, u: &DVector<f64>) -> Result<DVector<f64>, DiffeoError> {
        self.check(u)?;
        let mut x = u.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            x = layer.inverse(&x);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(DiffeoError::NonFinite(l));
            }
        }
        Ok(x)
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>, DiffeoError> {
        self.check(x)?;
        let mut j = DMatrix::identity(self.dim, self.dim);
        let mut y = x.clone();
        for layer in &self.layers {
            j = layer.jacobian(&y) * j;
            y = layer.forward(&y);
        }
        Ok(j)
    }

    /// Loss `mean ||u - psi(x)||^2` and, optionally, its gradient.
    ///
    /// Samples are processed in fixed chunks whose partial sums are added in
    /// chunk order, so the result does not depend on the thread count.
    fn loss_and_gradient(&self, pairs: &[(DVector<f64>, DVector<f64>)], with_grad: bool) -> (f64, Option<Gradient>) {
        const CHUNK: usize = 32;
        let partial: Vec<(f64, Option<Gradient>)> = pairs
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut scratch = Scratch::new(self);
                let mut grad = with_grad.then(|| Gradient::zeros(self));
                let mut loss = 0.0;
                for (x, target) in chunk {
                    loss += self.sample_loss(x.as_slice(), target.as_slice(), grad.as_mut(), &mut scratch);
                }
                (loss, grad)
            })
            .collect();
        let n = pairs.len() as f64;
        let mut loss = 0.0;
        let mut grad = with_grad.then(|| Gradient::zeros(self));
        for (l, g) in &partial {
            loss += l;
            if let (Some(acc), Some(g)) = (grad.as_mut(), g) {
                acc.add(g);
            }
        }
        if let Some(g) = grad.as_mut() {
            g.scale_by(1.0 / n);
        }
        (loss / n, grad)
    }

    /// Squared error of one pair; adds its gradient into `grad` when given.
    fn sample_loss(&self, x: &[f64], target: &[f64], grad: Option<&mut Gradient>, sc: &mut Scratch) -> f64 {
        let d = self.dim;
        sc.y.copy_from_slice(x);
        for (l, layer) in self.layers.iter().enumerate() {
            let tr = &mut sc.traces[l];
            tr.input.copy_from_slice(&sc.y);
            let c = layer.scale_net.norm();
            for (net, phi, dphi) in [
                (&layer.scale_net, &mut tr.phi_s, &mut tr.dphi_s),
                (&layer.translate_net, &mut tr.phi_t, &mut tr.dphi_t),
            ] {
                let nf = net.features();
                let freq = net.frequencies.as_slice();
                let phases = net.phases.as_slice();
                for k in 0..nf {
                    let mut z = phases[k];
                    for (col, &p) in layer.pass_mask.iter().enumerate() {
                        z += freq[k + col * nf] * sc.y[p];
                    }
                    let (sn, cs) = z.sin_cos();
                    phi[k] = c * cs;
                    dphi[k] = -c * sn;
                }
            }
            let m = layer.transform.len();
            let nf = layer.scale_net.features();
            let ws = layer.scale_net.out_weights.as_slice();
            let wt = layer.translate_net.out_weights.as_slice();
            for (j, &i) in layer.transform.iter().enumerate() {
                let (mut s, mut t) = (0.0, 0.0);
                for k in 0..nf {
                    s += ws[j + k * m] * tr.phi_s[k];
                    t += wt[j + k * m] * tr.phi_t[k];
                }
                tr.exp_s[j] = s.exp();
                sc.y[i] = tr.input[i] * tr.exp_s[j] + t;
            }
        }
        let mut loss = 0.0;
        for i in 0..d {
            let r = sc.y[i] - target[i];
            sc.g[i] = 2.0 * r;
            loss += r * r;
        }
        let Some(grad) = grad else {
            return loss;
        };
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let tr = &sc.traces[l];
            let m = layer.transform.len();
            let nf = layer.scale_net.features();
            let ws = layer.scale_net.out_weights.as_slice();
            let wt = layer.translate_net.out_weights.as_slice();
            let gsm = grad.scale[l].as_mut_slice();
            let gtm = grad.translate[l].as_mut_slice();
            sc.mix_s.iter_mut().for_each(|v| *v = 0.0);
            sc.mix_t.iter_mut().for_each(|v| *v = 0.0);
            for (j, &i) in layer.transform.iter().enumerate() {
                let gt = sc.g[i];
                let gs = gt * tr.input[i] * tr.exp_s[j];
                for k in 0..nf {
                    gsm[j + k * m] += gs * tr.phi_s[k];
                    gtm[j + k * m] += gt * tr.phi_t[k];
                    sc.mix_s[k] += ws[j + k * m] * gs;
                    sc.mix_t[k] += wt[j + k * m] * gt;
                }
                sc.g[i] = gt * tr.exp_s[j];
            }
            // Back through s and t into the pass coordinates.
            let fs = layer.scale_net.frequencies.as_slice();
            let ft = layer.translate_net.frequencies.as_slice();
            for (col, &p) in layer.pass_mask.iter().enumerate() {
                let mut acc = 0.0;
                for k in 0..nf {
                    acc += fs[k + col * nf] * sc.mix_s[k] * tr.dphi_s[k]
                        + ft[k + col * nf] * sc.mix_t[k] * tr.dphi_t[k];
                }
                sc.g[p] += acc;
            }
        }
        loss
    }

    fn apply(&mut self, grad: &Gradient, rate: f64) {
        for (layer, (gs, gt)) in self.layers.iter_mut().zip(grad.scale.iter().zip(&grad.translate)) {
            layer.scale_net.out_weights -= gs * rate;
            layer.translate_net.out_weights -= gt * rate;
        }
    }

    /// Mean squared error over `pairs`.
    pub fn loss(&self, pairs: &[(DVector<f64>, DVector<f64>)]) -> f64 {
        self.loss_and_gradient(pairs, false).0
    }

    /// Flattened gradient of [`Self::loss`]: for each layer, the scale
    /// weights then the translate weights, column-major.
    pub fn loss_gradient(&self, pairs: &[(DVector<f64>, DVector<f64>)]) -> Vec<f64> {
        let (_, g) = self.loss_and_gradient(pairs, true);
        let g = g.expect("gradient requested");
        g.scale
            .iter()
            .zip(&g.translate)
            .flat_map(|(s, t)| s.iter().chain(t.iter()).copied().collect::<Vec<_>>())
            .collect()
    }

    /// Trainable weights in the order of [`Self::loss_gradient`].
    pub fn weights_mut(&mut self) -> Vec<&mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                l.scale_net
                    .out_weights
                    .iter_mut()
                    .chain(l.translate_net.out_weights.iter_mut())
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&StackDocument::from(self)).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DiffeoError> {
        let doc: StackDocument =
            serde_json::from_str(text).map_err(|e| DiffeoError::Format(e.to_string()))?;
        doc.into_stack()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Size of the fixed, evenly strided subset of pairs used as the batch;
    /// `None` uses every pair.
    pub batch: Option<usize>,
    /// Rate multiplier after an accepted step.
    pub growth: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 1000,
            batch: None,
            growth: 1.05,
        }
    }
}

/// Full-batch gradient descent on the read-out weights. A step that would
/// raise the loss is rejected and the rate halved, so the returned history
/// (loss before each epoch's step, then the final loss) never increases.
pub fn train(
    stack: &mut CouplingStack,
    pairs: &[(DVector<f64>, DVector<f64>)],
    config: &TrainConfig,
) -> Result<Vec<f64>, DiffeoError> {
    if pairs.is_empty() {
        return Err(DiffeoError::EmptyTrainingSet);
    }
    for (x, u) in pairs {
        stack.check(x)?;
        stack.check(u)?;
    }
    let subset: Vec<(DVector<f64>, DVector<f64>)>;
    let batch = match config.batch {
        Some(b) if b > 0 && b < pairs.len() => {
            let stride = pairs.len() as f64 / b as f64;
            subset = (0..b).map(|i| pairs[(i as f64 * stride) as usize].clone()).collect();
            &subset[..]
        }
        _ => pairs,
    };
    let mut rate = config.learning_rate;
    let (mut loss, mut grad) = stack.loss_and_gradient(batch, true);
    if !loss.is_finite() {
        return Err(DiffeoError::NonFiniteLoss(0));
    }
    let mut history = Vec::with_capacity(config.epochs + 1);
    for epoch in 0..config.epochs {
        history.push(loss);
        let g = grad.take().expect("gradient present");
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = stack.clone();
            trial.apply(&g, rate);
            let (l, gr) = trial.loss_and_gradient(batch, true);
            if l.is_finite() && l <= loss {
                *stack = trial;
                loss = l;
                grad = gr;
                rate *= config.growth;
                accepted = true;
                break;
            }
            rate *= 0.5;
        }
        if !accepted {
            if !loss.is_finite() {
                return Err(DiffeoError::NonFiniteLoss(epoch));
            }
            // No descent possible at any tried rate: converged.
            break;
        }
    }
    history.push(loss);
    Ok(history)
}

/// Solves `J_psi(x) v = psi(x*) - psi(x)`.
pub fn reconstruct_field(stack: &CouplingStack, x: &DVector<f64>, x_star: &DVector<f64>) -> Result<DVector<f64>, DiffeoError> {
    let rhs = stack.forward(x_star)? - stack.forward(x)?;
    let j = stack.jacobian(x)?;
    let v = j.lu().solve(&rhs).ok_or(DiffeoError::SingularJacobian)?;
    if v.iter().any(|c| !c.is_finite()) {
        return Err(DiffeoError::SingularJacobian);
    }
    Ok(v)
}

/// `0.5 |psi(x*) - psi(x)|^2`.
pub fn lyapunov_potential(stack: &CouplingStack, x: &DVector<f64>, x_star: &DVector<f64>) -> Result<f64, DiffeoError> {
    Ok(0.5 * (stack.forward(x_star)? - stack.forward(x)?).norm_squared())
}

/// RK4 integration of the reconstructed field; returns every recorded state.
pub fn integrate_field(
    stack: &CouplingStack,
    x0: &DVector<f64>,
    x_star: &DVector<f64>,
    dt: f64,
    steps: usize,
) -> Result<Vec<DVector<f64>>, DiffeoError> {
    let f = |x: &DVector<f64>| reconstruct_field(stack, x, x_star);
    let mut x = x0.clone();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x.clone());
    for _ in 0..steps {
        let k1 = f(&x)?;
        let k2 = f(&(&x + &k1 * (dt / 2.0)))?;
        let k3 = f(&(&x + &k2 * (dt / 2.0)))?;
        let k4 = f(&(&x + &k3 * dt))?;
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        out.push(x.clone());
    }
    Ok(out)
}

/// Affine map `u -> A (u - src_mean) + dst_mean` fitted by least squares,
/// so that mapped embedding rows best match the paired positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetNormalization {
    pub src_mean: Vec<f64>,
    pub dst_mean: Vec<f64>,
    /// Row-major `d x d`.
    pub matrix: Vec<f64>,
}

impl TargetNormalization {
    pub fn fit(embedding: &[DVector<f64>], positions: &[DVector<f64>]) -> Result<Self, DiffeoError> {
        if embedding.is_empty() || embedding.len() != positions.len() {
            return Err(DiffeoError::EmptyTrainingSet);
        }
        let d = positions[0].len();
        if embedding[0].len() != d {
            return Err(DiffeoError::DimensionMismatch {
                expected: d,
                got: embedding[0].len(),
            });
        }
        let n = embedding.len() as f64;
        let mean = |rows: &[DVector<f64>]| rows.iter().fold(DVector::zeros(d), |acc, r| acc + r) / n;
        let (mu, mx) = (mean(embedding), mean(positions));
        let mut uu = DMatrix::zeros(d, d);
        let mut xu = DMatrix::zeros(d, d);
        for (u, x) in embedding.iter().zip(positions) {
            let du = u - &mu;
            let dx = x - &mx;
            uu += &du * du.transpose();
            xu += &dx * du.transpose();
        }
        let inv = uu.try_inverse().ok_or(DiffeoError::SingularJacobian)?;
        let a = xu * inv;
        if a.iter().any(|v| !v.is_finite()) {
            return Err(DiffeoError::SingularJacobian);
        }
        Ok(Self {
            src_mean: mu.as_slice().to_vec(),
            dst_mean: mx.as_slice().to_vec(),
            matrix: (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| a[(i, j)]).collect(),
        })
    }

    pub fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        let d = self.dst_mean.len();
        DVector::from_fn(d, |i, _| {
            self.dst_mean[i]
                + (0..d)
                    .map(|j| self.matrix[i * d + j] * (u[j] - self.src_mean[j]))
                    .sum::<f64>()
        })
    }
}

#[derive(Serialize, Deserialize)]
struct NetDocument {
    bandwidth: f64,
    frequencies: Vec<Vec<f64>>,
    phases: Vec<f64>,
    out_weights: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct LayerDocument {
    pass_mask: Vec<usize>,
    scale: NetDocument,
    translate: NetDocument,
}

#[derive(Serialize, Deserialize)]
struct StackDocument {
    format: String,
    dim: usize,
    layers: Vec<LayerDocument>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(rows: &[Vec<f64>], ncols: usize) -> Result<DMatrix<f64>, DiffeoError> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(DiffeoError::Format("ragged matrix".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl From<&FourierFeatureNet> for NetDocument {
    fn from(n: &FourierFeatureNet) -> Self {
        Self {
            bandwidth: n.bandwidth,
            frequencies: rows(&n.frequencies),
            phases: n.phases.iter().copied().collect(),
            out_weights: rows(&n.out_weights),
        }
    }
}

impl NetDocument {
    fn into_net(self, input: usize, output: usize) -> Result<FourierFeatureNet, DiffeoError> {
        let d = self.phases.len();
        let frequencies = matrix(&self.frequencies, input)?;
        let out_weights = matrix(&self.out_weights, d)?;
        if frequencies.nrows() != d || out_weights.nrows() != output {
            return Err(DiffeoError::Format("network shape".into()));
        }
        Ok(FourierFeatureNet {
            frequencies,
            phases: DVector::from_vec(self.phases),
            out_weights,
            bandwidth: self.bandwidth,
        })
    }
}

impl From<&CouplingStack> for StackDocument {
    fn from(s: &CouplingStack) -> Self {
        Self {
            format: FORMAT_TAG.into(),
            dim: s.dim,
            layers: s
                .layers
                .iter()
                .map(|l| LayerDocument {
                    pass_mask: l.pass_mask.clone(),
                    scale: (&l.scale_net).into(),
                    translate: (&l.translate_net).into(),
                })
                .collect(),
        }
    }
}

impl StackDocument {
    fn into_stack(self) -> Result<CouplingStack, DiffeoError> {
        if self.format != FORMAT_TAG {
            return Err(DiffeoError::Format(format!("unknown format tag {:?}", self.format)));
        }
        let dim = self.dim;
        let layers = self
            .layers
            .into_iter()
            .map(|l| {
                if l.pass_mask.is_empty() || l.pass_mask.len() >= dim || l.pass_mask.iter().any(|&i| i >= dim) {
                    return Err(DiffeoError::Format("invalid mask".into()));
                }
                let transform: Vec<usize> = (0..dim).filter(|i| !l.pass_mask.contains(i)).collect();
                let (n, m) = (l.pass_mask.len(), transform.len());
                Ok(CouplingLayer {
                    scale_net: l.scale.into_net(n, m)?,
                    translate_net: l.translate.into_net(n, m)?,
                    pass_mask: l.pass_mask,
                    transform,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(CouplingStack { layers, dim })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_stack(seed: u64, weight_scale: f64) -> CouplingStack {
        let cfg = StackConfig {
            layers: 4,
            features: 16,
            bandwidth: 1.5,
            seed,
        };
        let mut s = CouplingStack::new(2, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for w in s.weights_mut() {
            *w = rng.random_range(-weight_scale..weight_scale);
        }
        s
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn zero_weights_are_identity() {
        let s = CouplingStack::new(3, &StackConfig::for_diameter(2.0, 1)).unwrap();
        let x = v(&[0.3, -1.0, 2.0]);
        assert_eq!(s.forward(&x).unwrap(), x);
        assert_eq!(s.inverse(&x).unwrap(), x);
        assert_eq!(s.jacobian(&x).unwrap(), DMatrix::identity(3, 3));
    }

    /// A net whose first read-out equals `value` everywhere: set a zero
    /// frequency with phase 0 so the feature is the constant sqrt(2/D).
    fn constant_net(value: f64, features: usize) -> FourierFeatureNet {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut n = FourierFeatureNet::new(1, 1, features, 1.0, &mut rng);
        n.frequencies.row_mut(0).fill(0.0);
        n.phases[0] = 0.0;
        n.out_weights[(0, 0)] = value / (2.0 / features as f64).sqrt();
        n
    }

    #[test]
    fn constant_shift_and_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut layer = CouplingLayer::new(2, vec![0], 4, 1.0, &mut rng);
        layer.translate_net = constant_net(3.0, 4);
        let y = layer.forward(&v(&[1.0, 2.0]));
        assert!((y[0] - 1.0).abs() < 1e-15 && (y[1] - 5.0).abs() < 1e-12);

        let mut layer = CouplingLayer::new(2, vec![0], 4, 1.0, &mut rng);
        layer.scale_net = constant_net(2f64.ln(), 4);
        let x = layer.inverse(&v(&[1.0, 4.0]));
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-12);
        let det = layer.jacobian(&v(&[0.4, 0.1])).determinant();
        assert!((det - 2.0).abs() < 1e-12);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for seed in 0..5 {
            let s = small_stack(seed, 0.3);
            let x = v(&[0.2 * seed as f64 - 0.4, 0.7]);
            let j = s.jacobian(&x).unwrap();
            let h = 1e-5;
            for c in 0..2 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[c] += h;
                xm[c] -= h;
                let fd = (s.forward(&xp).unwrap() - s.forward(&xm).unwrap()) / (2.0 * h);
                for r in 0..2 {
                    let err = (fd[r] - j[(r, c)]).abs() / j[(r, c)].abs().max(1.0);
                    assert!(err < 1e-4, "seed {seed}: {err}");
                }
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut s = small_stack(3, 0.2);
        let pairs: Vec<_> = (0..6)
            .map(|i| {
                let x = v(&[i as f64 * 0.3 - 0.8, (i as f64).sin()]);
                let u = v(&[x[0] * 1.5, x[1] - 0.2 * x[0]]);
                (x, u)
            })
            .collect();
        let g = s.loss_gradient(&pairs);
        let h = 1e-6;
        let n = g.len();
        for idx in (0..n).step_by(7) {
            let orig = *s.weights_mut()[idx];
            *s.weights_mut()[idx] = orig + h;
            let lp = s.loss(&pairs);
            *s.weights_mut()[idx] = orig - h;
            let lm = s.loss(&pairs);
            *s.weights_mut()[idx] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let err = (fd - g[idx]).abs() / g[idx].abs().max(1e-3);
            assert!(err < 1e-4, "weight {idx}: fd {fd} vs {}", g[idx]);
        }
    }

    #[test]
    fn identity_targets_keep_zero_loss() {
        let mut s = CouplingStack::new(2, &StackConfig::for_diameter(1.0, 2)).unwrap();
        let pairs: Vec<_> = (0..5).map(|i| (v(&[i as f64, 1.0]), v(&[i as f64, 1.0]))).collect();
        let cfg = TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        };
        let hist = train(&mut s, &pairs, &cfg).unwrap();
        assert!(hist.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn training_reduces_a_smooth_warp() {
        let pairs: Vec<_> = (0..40)
            .map(|i| {
                let t = i as f64 / 40.0 * std::f64::consts::TAU;
                let x = v(&[t.cos() * (1.0 + 0.2 * i as f64 / 40.0), t.sin()]);
                let u = v(&[x[0] + 0.3 * x[1] * x[1], x[1] + 0.2 * x[0]]);
                (x, u)
            })
            .collect();
        let mut s = CouplingStack::new(2, &StackConfig::for_diameter(2.4, 5)).unwrap();
        let hist = train(&mut s, &pairs, &TrainConfig { epochs: 300, ..TrainConfig::default() }).unwrap();
        assert!(hist.windows(2).all(|w| w[1] <= w[0]));
        assert!(hist.last().unwrap() < &(0.1 * hist[0]), "{} -> {}", hist[0], hist.last().unwrap());
    }

    #[test]
    fn identity_field_is_linear() {
        let s = CouplingStack::new(2, &StackConfig::for_diameter(1.0, 0)).unwrap();
        let x = v(&[1.0, -2.0]);
        let xs = v(&[0.5, 0.5]);
        assert!((reconstruct_field(&s, &x, &xs).unwrap() - (&xs - &x)).norm() < 1e-15);
        assert_eq!(reconstruct_field(&s, &xs, &xs).unwrap().norm(), 0.0);
        assert_eq!(lyapunov_potential(&s, &xs, &xs).unwrap(), 0.0);
        let off = v(&[3.5, 4.5]);
        assert!((lyapunov_potential(&s, &off, &xs).unwrap() - 12.5).abs() < 1e-12);
    }

    #[test]
    fn learned_field_converges_with_decreasing_potential() {
        let s = small_stack(9, 0.15);
        let xs = v(&[0.1, -0.2]);
        let path = integrate_field(&s, &v(&[1.0, 0.8]), &xs, 1e-2, 1200).unwrap();
        let pot: Vec<f64> = path.iter().map(|x| lyapunov_potential(&s, x, &xs).unwrap()).collect();
        assert!(pot.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        assert!((path.last().unwrap() - &xs).norm() < 1e-2);
    }

    #[test]
    fn json_round_trip() {
        let s = small_stack(4, 0.3);
        let back = CouplingStack::from_json(&s.to_json()).unwrap();
        let x = v(&[0.3, 0.9]);
        assert_eq!(s.forward(&x).unwrap(), back.forward(&x).unwrap());
        assert!(CouplingStack::from_json(&s.to_json().replace(FORMAT_TAG, "diffeo-v0")).is_err());
    }

    proptest! {
        #[test]
        fn inverse_undoes_forward(a in -6.0..6.0f64, b in -6.0..6.0f64, seed in 0u64..20) {
            let s = small_stack(seed, 0.3);
            let x = v(&[a, b]);
            let back = s.inverse(&s.forward(&x).unwrap()).unwrap();
            prop_assert!((back - x).amax() < 1e-10);
        }
    }

    #[test]
    fn normalization_recovers_affine_map() {
        let xs: Vec<DVector<f64>> = (0..20)
            .map(|i| DVector::from_vec(vec![(i as f64 * 0.7).sin(), (i as f64 * 0.3).cos() + 0.1 * i as f64]))
            .collect();
        // u = B x + c with a reflection, so x = B^-1 (u - c).
        let us: Vec<DVector<f64>> = xs
            .iter()
            .map(|x| DVector::from_vec(vec![-2.0 * x[1] + 1.0, 0.5 * x[0] - 3.0]))
            .collect();
        let n = TargetNormalization::fit(&us, &xs).unwrap();
        for (u, x) in us.iter().zip(&xs) {
            assert!((n.apply(u) - x).norm() < 1e-10);
        }
    }
}
