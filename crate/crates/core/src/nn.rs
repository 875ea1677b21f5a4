//! From-scratch fully connected Q-network.
//!
//! Batched forward/backward passes over flat row-major `f64` buffers with
//! GEMM kernels, mean-squared-error loss restricted to the taken action's
//! output, Adam with bias correction, a central-finite-difference gradient
//! checker, and a versioned text checkpoint format.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::to_json_f17;

/// Hidden layer widths of the Q-network.
pub const HIDDEN_DIMS: [usize; 3] = [256, 512, 256];

/// Layer dimensions for a Q-network with the standard hidden stack.
pub fn q_network_dims(n_input: usize, n_output: usize) -> Vec<usize> {
    let mut dims = Vec::with_capacity(HIDDEN_DIMS.len() + 2);
    dims.push(n_input);
    dims.extend_from_slice(&HIDDEN_DIMS);
    dims.push(n_output);
    dims
}

/// Dense network parameters. `weights[l]` is row-major `(dims[l+1], dims[l])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpParams {
    pub fn n_input(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn n_output(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    fn check_shapes(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(Error::DimensionMismatch("network needs at least one layer".into()));
        }
        if self.weights.len() != self.n_layers() || self.biases.len() != self.n_layers() {
            return Err(Error::DimensionMismatch("layer count mismatch".into()));
        }
        for l in 0..self.n_layers() {
            let (fan_in, fan_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            if self.weights[l].len() != fan_in * fan_out || self.biases[l].len() != fan_out {
                return Err(Error::DimensionMismatch(format!("layer {l} shape mismatch")));
            }
        }
        Ok(())
    }
}

/// He-uniform initialization scaled by fan-in; biases start at zero.
pub fn mlp_init<R: Rng>(dims: &[usize], rng: &mut R) -> Result<MlpParams> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::DimensionMismatch(format!("invalid layer dims {dims:?}")));
    }
    let mut weights = Vec::with_capacity(dims.len() - 1);
    let mut biases = Vec::with_capacity(dims.len() - 1);
    for l in 0..dims.len() - 1 {
        let (fan_in, fan_out) = (dims[l], dims[l + 1]);
        let bound = (6.0 / fan_in as f64).sqrt();
        let w: Vec<f64> = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
        weights.push(w);
        biases.push(vec![0.0; fan_out]);
    }
    Ok(MlpParams { layer_dims: dims.to_vec(), weights, biases })
}

/// Per-layer activation buffers reused across forward passes.
#[derive(Debug, Clone, Default)]
pub struct Scratch {
    acts: Vec<Vec<f64>>,
    batch: usize,
}

impl Scratch {
    fn prepare(&mut self, params: &MlpParams, batch: usize) {
        let n_layers = params.n_layers();
        self.acts.resize(n_layers, Vec::new());
        for (l, buf) in self.acts.iter_mut().enumerate() {
            buf.resize(batch * params.layer_dims[l + 1], 0.0);
        }
        self.batch = batch;
    }

    /// Output of the last forward pass, `(batch, n_output)` row-major.
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("forward pass before output access")
    }
}

fn gemm_xwt(batch: usize, fan_in: usize, fan_out: usize, x: &[f64], w: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), batch * fan_in);
    debug_assert_eq!(w.len(), fan_out * fan_in);
    debug_assert_eq!(y.len(), batch * fan_out);
    unsafe {
        matrixmultiply::dgemm(
            batch,
            fan_in,
            fan_out,
            1.0,
            x.as_ptr(),
            fan_in as isize,
            1,
            w.as_ptr(),
            1,
            fan_in as isize,
            0.0,
            y.as_mut_ptr(),
            fan_out as isize,
            1,
        );
    }
}

/// Batched forward pass: three ReLU hidden layers, linear output.
///
/// `inputs` is `(batch, n_input)` row-major; the output lives in `scratch`.
pub fn mlp_forward_into(params: &MlpParams, inputs: &[f64], batch: usize, scratch: &mut Scratch) -> Result<()> {
    if inputs.len() != batch * params.n_input() {
        return Err(Error::DimensionMismatch(format!(
            "input width {} does not match n_input {} x batch {batch}",
            inputs.len(),
            params.n_input()
        )));
    }
    scratch.prepare(params, batch);
    let n_layers = params.n_layers();
    for l in 0..n_layers {
        let (fan_in, fan_out) = (params.layer_dims[l], params.layer_dims[l + 1]);
        let (before, rest) = scratch.acts.split_at_mut(l);
        let x: &[f64] = if l == 0 { inputs } else { &before[l - 1] };
        let y = &mut rest[0];
        gemm_xwt(batch, fan_in, fan_out, x, &params.weights[l], y);
        let b = &params.biases[l];
        let relu = l + 1 < n_layers;
        for row in y.chunks_exact_mut(fan_out) {
            for (v, &bias) in row.iter_mut().zip(b) {
                *v += bias;
                if relu && *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
    }
    Ok(())
}

/// Convenience allocating forward pass returning `(batch, n_output)`.
pub fn mlp_forward(params: &MlpParams, inputs: &[f64], batch: usize) -> Result<Vec<f64>> {
    let mut scratch = Scratch::default();
    mlp_forward_into(params, inputs, batch, &mut scratch)?;
    Ok(scratch.output().to_vec())
}

/// Parameter gradients, same shapes as [`MlpParams`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub d_weights: Vec<Vec<f64>>,
    pub d_biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self {
            d_weights: params.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            d_biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }
}

/// Backward scratch: upstream gradients per layer, reused across steps.
#[derive(Debug, Clone, Default)]
pub struct BackpropScratch {
    d_acts: Vec<Vec<f64>>,
}

/// Masked Q-regression loss and its gradients.
///
///
/// Loss is `(1/B) sum_l (target_l - q(s_l)[a_l])^2`; only the taken action's
/// output receives error, all other output slots backpropagate zero.
#[allow(clippy::too_many_arguments)]
pub fn mlp_backward(
    params: &MlpParams,
    inputs: &[f64],
    batch: usize,
    actions: &[usize],
    targets: &[f64],
    scratch: &mut Scratch,
    bscratch: &mut BackpropScratch,
    grads: &mut Gradients,
) -> Result<f64> {
    if actions.len() != batch || targets.len() != batch {
        return Err(Error::DimensionMismatch("batch shapes inconsistent".into()));
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("target".into()));
    }
    mlp_forward_into(params, inputs, batch, scratch)?;

    let n_layers = params.n_layers();
    let n_out = params.n_output();
    bscratch.d_acts.resize(n_layers, Vec::new());
    for (l, buf) in bscratch.d_acts.iter_mut().enumerate() {
        buf.clear();
        buf.resize(batch * params.layer_dims[l + 1], 0.0);
    }

    // Output-layer error: 2/B * (q - y) on the selected slots.
    let q_out = scratch.acts.last().unwrap();
    let d_out = bscratch.d_acts.last_mut().unwrap();
    let mut loss = 0.0;
    let inv_b = 1.0 / batch as f64;
    for (row, (&a, &y)) in actions.iter().zip(targets).enumerate() {
        if a >= n_out {
            return Err(Error::DimensionMismatch(format!("action index {a} out of {n_out}")));
        }
        let q = q_out[row * n_out + a];
        let err = q - y;
        loss += err * err * inv_b;
        d_out[row * n_out + a] = 2.0 * err * inv_b;
    }

    for l in (0..n_layers).rev() {
        let (fan_in, fan_out) = (params.layer_dims[l], params.layer_dims[l + 1]);
        // ReLU mask for hidden layers (the output layer is linear).
        if l + 1 < n_layers {
            let act = &scratch.acts[l];
            let d = &mut bscratch.d_acts[l];
            for (dv, &av) in d.iter_mut().zip(act) {
                if av <= 0.0 {
                    *dv = 0.0;
                }
            }
        }
        let dz = &bscratch.d_acts[l];
        let x: &[f64] = if l == 0 { inputs } else { &scratch.acts[l - 1] };

        // dW (out, in) = dZ^T (out, B) . X (B, in)
        let dw = &mut grads.d_weights[l];
        unsafe {
            matrixmultiply::dgemm(
                fan_out,
                batch,
                fan_in,
                1.0,
                dz.as_ptr(),
                1,
                fan_out as isize,
                x.as_ptr(),
                fan_in as isize,
                1,
                0.0,
                dw.as_mut_ptr(),
                fan_in as isize,
                1,
            );
        }
        let db = &mut grads.d_biases[l];
        db.iter_mut().for_each(|v| *v = 0.0);
        for row in dz.chunks_exact(fan_out) {
            for (acc, &v) in db.iter_mut().zip(row) {
                *acc += v;
            }
        }
        if l > 0 {
            // dX (B, in) = dZ (B, out) . W (out, in)
            let (before, rest) = bscratch.d_acts.split_at_mut(l);
            let dx = &mut before[l - 1];
            let dz = &rest[0];
            unsafe {
                matrixmultiply::dgemm(
                    batch,
                    fan_out,
                    fan_in,
                    1.0,
                    dz.as_ptr(),
                    fan_out as isize,
                    1,
                    params.weights[l].as_ptr(),
                    fan_in as isize,
                    1,
                    0.0,
                    dx.as_mut_ptr(),
                    fan_in as isize,
                    1,
                );
            }
        }
    }
    Ok(loss)
}

/// Allocating wrapper around [`mlp_backward`].
pub fn mlp_backward_alloc(
    params: &MlpParams,
    inputs: &[f64],
    batch: usize,
    actions: &[usize],
    targets: &[f64],
) -> Result<(Gradients, f64)> {
    let mut scratch = Scratch::default();
    let mut bscratch = BackpropScratch::default();
    let mut grads = Gradients::zeros_like(params);
    let loss = mlp_backward(params, inputs, batch, actions, targets, &mut scratch, &mut bscratch, &mut grads)?;
    Ok((grads, loss))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { lr: 1e-5, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam moments, kept in the same shapes as the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment_w: Vec<Vec<f64>>,
    pub second_moment_w: Vec<Vec<f64>>,
    pub first_moment_b: Vec<Vec<f64>>,
    pub second_moment_b: Vec<Vec<f64>>,
    pub step_count: u64,
    pub hyper: AdamHyper,
}

impl AdamState {
    pub fn new(params: &MlpParams, hyper: AdamHyper) -> Self {
        Self {
            first_moment_w: params.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            second_moment_w: params.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            first_moment_b: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            second_moment_b: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            step_count: 0,
            hyper,
        }
    }
}

fn adam_update(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], h: &AdamHyper, bc1: f64, bc2: f64) {
    for i in 0..p.len() {
        m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
        v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        p[i] -= h.lr * m_hat / (v_hat.sqrt() + h.eps);
    }
}

/// One Adam step with bias correction; increments the step counter.
pub fn adam_step(params: &mut MlpParams, grads: &Gradients, state: &mut AdamState) {
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.hyper.beta1.powi(t);
    let bc2 = 1.0 - state.hyper.beta2.powi(t);
    let h = state.hyper;
    for l in 0..params.n_layers() {
        adam_update(
            &mut params.weights[l],
            &grads.d_weights[l],
            &mut state.first_moment_w[l],
            &mut state.second_moment_w[l],
            &h,
            bc1,
            bc2,
        );
        adam_update(
            &mut params.biases[l],
            &grads.d_biases[l],
            &mut state.first_moment_b[l],
            &mut state.second_moment_b[l],
            &h,
            bc1,
            bc2,
        );
    }
}

/// Central finite-difference gradient check on every parameter.
///
/// Returns the maximum relative error with denominator
/// `max(|analytic|, |numeric|, 1e-8)`. Meant for small networks.
pub fn grad_check(params: &MlpParams, inputs: &[f64], batch: usize, actions: &[usize], targets: &[f64]) -> Result<f64> {
    const H: f64 = 1e-5;
    let (grads, _) = mlp_backward_alloc(params, inputs, batch, actions, targets)?;
    let mut p = params.clone();
    let mut max_rel = 0.0f64;

    let loss_of = |p: &MlpParams| -> Result<f64> {
        let q = mlp_forward(p, inputs, batch)?;
        let n_out = p.n_output();
        let mut loss = 0.0;
        for (row, (&a, &y)) in actions.iter().zip(targets).enumerate() {
            let err = q[row * n_out + a] - y;
            loss += err * err;
        }
        Ok(loss / batch as f64)
    };

    for l in 0..p.n_layers() {
        for idx in 0..p.weights[l].len() {
            let orig = p.weights[l][idx];
            p.weights[l][idx] = orig + H;
            let up = loss_of(&p)?;
            p.weights[l][idx] = orig - H;
            let down = loss_of(&p)?;
            p.weights[l][idx] = orig;
            let numeric = (up - down) / (2.0 * H);
            let analytic = grads.d_weights[l][idx];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            max_rel = max_rel.max(rel);
        }
        for idx in 0..p.biases[l].len() {
            let orig = p.biases[l][idx];
            p.biases[l][idx] = orig + H;
            let up = loss_of(&p)?;
            p.biases[l][idx] = orig - H;
            let down = loss_of(&p)?;
            p.biases[l][idx] = orig;
            let numeric = (up - down) / (2.0 * H);
            let analytic = grads.d_biases[l][idx];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            max_rel = max_rel.max(rel);
        }
    }
    Ok(max_rel)
}

// --- Checkpoints ------------------------------------------------------------

pub const CHECKPOINT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub layer_dims: Vec<usize>,
    pub episodes: u64,
    pub env_config_hash: u64,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: String,
    params: MlpParams,
    adam: AdamState,
    metadata: CheckpointMeta,
}

pub fn write_checkpoint<W: Write>(
    params: &MlpParams,
    adam: &AdamState,
    meta: &CheckpointMeta,
    mut writer: W,
) -> Result<()> {
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION.to_string(),
        params: params.clone(),
        adam: adam.clone(),
        metadata: meta.clone(),
    };
    let bytes = to_json_f17(&file)?;
    writer.write_all(&bytes)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut reader: R) -> Result<(MlpParams, AdamState, CheckpointMeta)> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let file: CheckpointFile = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch { found: file.version, expected: CHECKPOINT_VERSION.to_string() });
    }
    file.params.check_shapes()?;
    if file.metadata.layer_dims != file.params.layer_dims {
        return Err(Error::DimensionMismatch("metadata layer_dims disagree with parameters".into()));
    }
    Ok((file.params, file.adam, file.metadata))
}

pub fn write_checkpoint_to_path<P: AsRef<Path>>(
    params: &MlpParams,
    adam: &AdamState,
    meta: &CheckpointMeta,
    path: P,
) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_checkpoint(params, adam, meta, std::io::BufWriter::new(f))
}

pub fn read_checkpoint_from_path<P: AsRef<Path>>(path: P) -> Result<(MlpParams, AdamState, CheckpointMeta)> {
    let f = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(f))
}
