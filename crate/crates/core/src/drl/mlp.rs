//! Dense feed-forward networks with batched forward and reverse passes.
//!
//! Parameters live in one flat buffer, layer by layer: the weight matrix
//! (`out × in`, row-major) followed by the bias vector. Hidden layers use
//! ReLU; each output unit carries its own activation.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{validation, Result};
use crate::numerics::RngStream;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    Linear,
    Sigmoid,
    /// `scale · sigmoid(z)`.
    ScaledSigmoid(f64),
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
            Activation::Sigmoid => sigmoid(z),
            Activation::ScaledSigmoid(s) => s * sigmoid(z),
        }
    }

    /// Derivative with respect to the pre-activation.
    #[inline]
    fn grad(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::ScaledSigmoid(k) => {
                let s = sigmoid(z);
                k * s * (1.0 - s)
            }
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpNet {
    widths: Vec<usize>,
    params: Vec<f64>,
    offsets: Vec<usize>,
    output_acts: Vec<Activation>,
}

/// Cached activations from a batched forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    batch: usize,
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of each layer.
    pre: Vec<Vec<f64>>,
}

impl Forward {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("at least the input")
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

fn layout(widths: &[usize]) -> (Vec<usize>, usize) {
    let mut offsets = Vec::with_capacity(widths.len());
    let mut total = 0;
    for w in widths.windows(2) {
        offsets.push(total);
        total += w[0] * w[1] + w[1];
    }
    (offsets, total)
}

impl MlpNet {
    /// All-zero parameters.
    pub fn zeros(widths: &[usize], output_acts: Vec<Activation>) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(validation(format!("invalid layer widths {widths:?}")));
        }
        if output_acts.len() != *widths.last().unwrap() {
            return Err(validation(format!(
                "{} output activations for {} outputs",
                output_acts.len(),
                widths.last().unwrap()
            )));
        }
        let (offsets, total) = layout(widths);
        Ok(MlpNet {
            widths: widths.to_vec(),
            params: vec![0.0; total],
            offsets,
            output_acts,
        })
    }

    /// He-uniform hidden layers, final layer uniform in ±3e-3, zero biases.
    pub fn new(widths: &[usize], output_acts: Vec<Activation>, rng: &mut RngStream) -> Result<Self> {
        let mut net = MlpNet::zeros(widths, output_acts)?;
        let layers = net.layers();
        for l in 0..layers {
            let (fan_in, fan_out) = (net.widths[l], net.widths[l + 1]);
            let bound = if l + 1 == layers {
                3e-3
            } else {
                (6.0 / fan_in as f64).sqrt()
            };
            let off = net.offsets[l];
            for p in &mut net.params[off..off + fan_in * fan_out] {
                *p = (2.0 * rng.uniform() - 1.0) * bound;
            }
        }
        Ok(net)
    }

    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn output_acts(&self) -> &[Activation] {
        &self.output_acts
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn weights(&self, l: usize) -> &[f64] {
        let off = self.offsets[l];
        &self.params[off..off + self.widths[l] * self.widths[l + 1]]
    }

    fn bias(&self, l: usize) -> &[f64] {
        let off = self.offsets[l] + self.widths[l] * self.widths[l + 1];
        &self.params[off..off + self.widths[l + 1]]
    }

    fn act_for(&self, l: usize, unit: usize) -> Activation {
        if l + 1 == self.layers() {
            self.output_acts[unit]
        } else {
            Activation::Relu
        }
    }

    pub fn same_architecture(&self, other: &MlpNet) -> bool {
        self.widths == other.widths && self.output_acts == other.output_acts
    }

    /// Single-sample forward pass.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_batch(x, 1)?.acts.pop().unwrap())
    }

    /// Forward pass over `batch` row-major samples.
    pub fn forward_batch(&self, x: &[f64], batch: usize) -> Result<Forward> {
        if batch == 0 || x.len() != batch * self.input_dim() {
            return Err(validation(format!(
                "input length {} does not match batch {batch} x width {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut acts = Vec::with_capacity(self.widths.len());
        let mut pre = Vec::with_capacity(self.layers());
        acts.push(x.to_vec());
        for l in 0..self.layers() {
            let (din, dout) = (self.widths[l], self.widths[l + 1]);
            let bias = self.bias(l);
            let mut z = Vec::with_capacity(batch * dout);
            for _ in 0..batch {
                z.extend_from_slice(bias);
            }
            let input = &acts[l];
            // z (batch×dout) += input (batch×din) · Wᵀ (din×dout)
            unsafe {
                matrixmultiply::dgemm(
                    batch,
                    din,
                    dout,
                    1.0,
                    input.as_ptr(),
                    din as isize,
                    1,
                    self.weights(l).as_ptr(),
                    1,
                    din as isize,
                    1.0,
                    z.as_mut_ptr(),
                    dout as isize,
                    1,
                );
            }
            let a: Vec<f64> = z
                .iter()
                .enumerate()
                .map(|(i, &v)| self.act_for(l, i % dout).apply(v))
                .collect();
            pre.push(z);
            acts.push(a);
        }
        Ok(Forward { batch, acts, pre })
    }

    /// Reverse pass. `upstream` is `∂L/∂output` (batch × out). Parameter
    /// gradients are accumulated into `grads` when given; the input gradient
    /// (batch × in) is returned when requested.
    pub fn backward(
        &self,
        fwd: &Forward,
        upstream: &[f64],
        mut grads: Option<&mut [f64]>,
        want_input_grad: bool,
    ) -> Result<Option<Vec<f64>>> {
        let batch = fwd.batch;
        if upstream.len() != batch * self.output_dim() || fwd.acts.len() != self.widths.len() {
            return Err(validation("backward: upstream shape mismatch"));
        }
        if let Some(g) = grads.as_deref() {
            if g.len() != self.params.len() {
                return Err(validation("backward: gradient buffer has wrong length"));
            }
        }
        let last = self.layers() - 1;
        let dout = self.output_dim();
        let mut delta: Vec<f64> = upstream
            .iter()
            .zip(&fwd.pre[last])
            .enumerate()
            .map(|(i, (&u, &z))| u * self.output_acts[i % dout].grad(z))
            .collect();

        for l in (0..self.layers()).rev() {
            let (din, dout) = (self.widths[l], self.widths[l + 1]);
            let input = &fwd.acts[l];
            if let Some(g) = grads.as_deref_mut() {
                let off = self.offsets[l];
                let (gw, gb) = g[off..off + din * dout + dout].split_at_mut(din * dout);
                // gW (dout×din) += δᵀ (dout×batch) · input (batch×din)
                unsafe {
                    matrixmultiply::dgemm(
                        dout,
                        batch,
                        din,
                        1.0,
                        delta.as_ptr(),
                        1,
                        dout as isize,
                        input.as_ptr(),
                        din as isize,
                        1,
                        1.0,
                        gw.as_mut_ptr(),
                        din as isize,
                        1,
                    );
                }
                for row in delta.chunks_exact(dout) {
                    for (b, d) in gb.iter_mut().zip(row) {
                        *b += d;
                    }
                }
            }
            if l == 0 && !want_input_grad {
                return Ok(None);
            }
            // δ_prev (batch×din) = δ (batch×dout) · W (dout×din)
            let mut prev = vec![0.0; batch * din];
            unsafe {
                matrixmultiply::dgemm(
                    batch,
                    dout,
                    din,
                    1.0,
                    delta.as_ptr(),
                    dout as isize,
                    1,
                    self.weights(l).as_ptr(),
                    din as isize,
                    1,
                    0.0,
                    prev.as_mut_ptr(),
                    din as isize,
                    1,
                );
            }
            if l == 0 {
                return Ok(Some(prev));
            }
            for (p, &z) in prev.iter_mut().zip(&fwd.pre[l - 1]) {
                if z <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
        unreachable!("loop returns at layer 0")
    }

    /// Write the checkpoint: one text line of layer widths, then every
    /// parameter as a little-endian f64.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        let header: Vec<String> = self.widths.iter().map(|w| w.to_string()).collect();
        writeln!(out, "{}", header.join(" "))?;
        for p in &self.params {
            out.write_all(&p.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    /// Load a checkpoint into a network of the same widths.
    pub fn load_into(&mut self, path: &Path) -> Result<()> {
        let (widths, params) = read_checkpoint(path)?;
        if widths != self.widths {
            return Err(validation(format!(
                "checkpoint widths {widths:?} do not match network {:?}",
                self.widths
            )));
        }
        self.params = params;
        Ok(())
    }
}

/// Parse a checkpoint into `(widths, params)`.
pub fn read_checkpoint(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let widths = header
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| validation(format!("bad checkpoint header token `{t}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if widths.len() < 2 {
        return Err(validation("checkpoint header lists fewer than two widths"));
    }
    let (_, total) = layout(&widths);
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != total * 8 {
        return Err(validation(format!(
            "checkpoint holds {} bytes, expected {}",
            bytes.len(),
            total * 8
        )));
    }
    let params = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((widths, params))
}

/// `target ← tau·online + (1 − tau)·target`, parameter-wise.
pub fn soft_update(target: &mut MlpNet, online: &MlpNet, tau: f64) -> Result<()> {
    if !target.same_architecture(online) {
        return Err(validation("soft_update: architectures differ"));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(validation(format!("tau {tau} outside [0, 1]")));
    }
    for (t, &o) in target.params.iter_mut().zip(&online.params) {
        *t = tau * o + (1.0 - tau) * *t;
    }
    Ok(())
}
