use super::{add_bias_rows, Mode};
use crate::autodiff::{Real, Result, Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn uniform_tensor<T: Real>(shape: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let numel: usize = shape.iter().product();
    let data = (0..numel)
        .map(|_| T::from_f64(rng.gen_range(-bound..bound)))
        .collect();
    Tensor::from_vec(shape, data).expect("init shape")
}

/// Plain affine layer, weights [out x in], bias [out].
#[derive(Debug, Clone)]
pub struct Linear<T: Real = f32> {
    pub w: Tensor<T>,
    pub b: Tensor<T>,
}

pub struct BoundLinear {
    pub w: Var,
    pub b: Var,
}

impl<T: Real> Linear<T> {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        Self {
            w: uniform_tensor(&[out_dim, in_dim], bound, rng),
            b: uniform_tensor(&[out_dim], bound, rng),
        }
    }

    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> BoundLinear {
        BoundLinear {
            w: bind_one(tape, &self.w, trainable),
            b: bind_one(tape, &self.b, trainable),
        }
    }

    pub fn tensors(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        out.push((format!("{prefix}.w"), self.w.clone()));
        out.push((format!("{prefix}.b"), self.b.clone()));
    }

    pub fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        out.push((format!("{prefix}.w"), &mut self.w));
        out.push((format!("{prefix}.b"), &mut self.b));
    }
}

impl BoundLinear {
    /// x [rows x in] -> [rows x out]
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let rows = tape.value(x).shape()[0];
        let wt = tape.transpose(self.w)?;
        let y = tape.matmul(x, wt)?;
        add_bias_rows(tape, y, self.b, rows)
    }

    pub fn vars(&self, out: &mut Vec<Var>) {
        out.push(self.w);
        out.push(self.b);
    }
}

pub(super) fn bind_one<T: Real>(tape: &mut Tape<T>, t: &Tensor<T>, trainable: bool) -> Var {
    if trainable {
        tape.leaf(t.clone())
    } else {
        tape.constant(t.clone())
    }
}

/// Linear layer with a deterministic and a noisy stream.
///
/// Training adds factorized Gaussian noise resampled per forward call;
/// evaluation contributes exactly b + Wx.
#[derive(Debug, Clone)]
pub struct NoisyLinear<T: Real = f32> {
    pub w: Tensor<T>,
    pub b: Tensor<T>,
    pub w_noisy: Tensor<T>,
    pub b_noisy: Tensor<T>,
}

pub struct BoundNoisyLinear {
    pub w: Var,
    pub b: Var,
    pub w_noisy: Var,
    pub b_noisy: Var,
}

impl<T: Real> NoisyLinear<T> {
    pub fn new(in_dim: usize, out_dim: usize, sigma0: f64, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let sigma = T::from_f64(sigma0 / (in_dim as f64).sqrt());
        Self {
            w: uniform_tensor(&[out_dim, in_dim], bound, rng),
            b: uniform_tensor(&[out_dim], bound, rng),
            w_noisy: Tensor::full(&[out_dim, in_dim], sigma),
            b_noisy: Tensor::full(&[out_dim], sigma),
        }
    }

    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> BoundNoisyLinear {
        BoundNoisyLinear {
            w: bind_one(tape, &self.w, trainable),
            b: bind_one(tape, &self.b, trainable),
            w_noisy: bind_one(tape, &self.w_noisy, trainable),
            b_noisy: bind_one(tape, &self.b_noisy, trainable),
        }
    }

    pub fn tensors(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        out.push((format!("{prefix}.w"), self.w.clone()));
        out.push((format!("{prefix}.b"), self.b.clone()));
        out.push((format!("{prefix}.w_noisy"), self.w_noisy.clone()));
        out.push((format!("{prefix}.b_noisy"), self.b_noisy.clone()));
    }

    pub fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        out.push((format!("{prefix}.w"), &mut self.w));
        out.push((format!("{prefix}.b"), &mut self.b));
        out.push((format!("{prefix}.w_noisy"), &mut self.w_noisy));
        out.push((format!("{prefix}.b_noisy"), &mut self.b_noisy));
    }
}

/// f(x) = sgn(x) * sqrt(|x|), the factorized-noise shaping function.
fn shape_noise(x: f64) -> f64 {
    x.signum() * x.abs().sqrt()
}

impl BoundNoisyLinear {
    /// x [rows x in] -> [rows x out]
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, x: Var, mode: &mut Mode) -> Result<Var> {
        let rows = tape.value(x).shape()[0];
        let (out_dim, in_dim) = {
            let s = tape.value(self.w).shape();
            (s[0], s[1])
        };
        let (w_eff, b_eff) = match mode.rng() {
            None => (self.w, self.b),
            Some(rng) => {
                let eps_in: Vec<f64> = (0..in_dim)
                    .map(|_| shape_noise(rng.sample(StandardNormal)))
                    .collect();
                let eps_out: Vec<f64> = (0..out_dim)
                    .map(|_| shape_noise(rng.sample(StandardNormal)))
                    .collect();
                let mut eps_w = Vec::with_capacity(out_dim * in_dim);
                for &o in &eps_out {
                    for &i in &eps_in {
                        eps_w.push(T::from_f64(o * i));
                    }
                }
                let eps_w = tape.constant(Tensor::from_vec(&[out_dim, in_dim], eps_w)?);
                let eps_b = tape.constant(Tensor::from_vec(
                    &[out_dim],
                    eps_out.iter().map(|&v| T::from_f64(v)).collect(),
                )?);
                let wn = tape.mul(self.w_noisy, eps_w)?;
                let bn = tape.mul(self.b_noisy, eps_b)?;
                (tape.add(self.w, wn)?, tape.add(self.b, bn)?)
            }
        };
        let wt = tape.transpose(w_eff)?;
        let y = tape.matmul(x, wt)?;
        add_bias_rows(tape, y, b_eff, rows)
    }

    pub fn vars(&self, out: &mut Vec<Var>) {
        out.push(self.w);
        out.push(self.b);
        out.push(self.w_noisy);
        out.push(self.b_noisy);
    }
}

/// Two-layer ReLU MLP used for the per-node embedding.
#[derive(Debug, Clone)]
pub struct Mlp<T: Real = f32> {
    pub l1: Linear<T>,
    pub l2: Linear<T>,
}

pub struct BoundMlp {
    pub l1: BoundLinear,
    pub l2: BoundLinear,
}

impl<T: Real> Mlp<T> {
    pub fn new(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            l1: Linear::new(in_dim, hidden, rng),
            l2: Linear::new(hidden, out_dim, rng),
        }
    }

    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> BoundMlp {
        BoundMlp {
            l1: self.l1.bind(tape, trainable),
            l2: self.l2.bind(tape, trainable),
        }
    }

    pub fn tensors(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        self.l1.tensors(&format!("{prefix}.l1"), out);
        self.l2.tensors(&format!("{prefix}.l2"), out);
    }

    pub fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.l1.tensors_mut(&format!("{prefix}.l1"), out);
        self.l2.tensors_mut(&format!("{prefix}.l2"), out);
    }
}

impl BoundMlp {
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let h = self.l1.forward(tape, x)?;
        let h = tape.relu(h);
        let y = self.l2.forward(tape, h)?;
        Ok(tape.relu(y))
    }

    pub fn vars(&self, out: &mut Vec<Var>) {
        self.l1.vars(out);
        self.l2.vars(out);
    }
}

/// Dueling stream: noisy(in -> hidden) -> ReLU -> noisy(hidden -> out).
#[derive(Debug, Clone)]
pub struct NoisyMlp<T: Real = f32> {
    pub l1: NoisyLinear<T>,
    pub l2: NoisyLinear<T>,
}

pub struct BoundNoisyMlp {
    pub l1: BoundNoisyLinear,
    pub l2: BoundNoisyLinear,
}

impl<T: Real> NoisyMlp<T> {
    pub fn new(
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        sigma0: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            l1: NoisyLinear::new(in_dim, hidden, sigma0, rng),
            l2: NoisyLinear::new(hidden, out_dim, sigma0, rng),
        }
    }

    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> BoundNoisyMlp {
        BoundNoisyMlp {
            l1: self.l1.bind(tape, trainable),
            l2: self.l2.bind(tape, trainable),
        }
    }

    pub fn tensors(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        self.l1.tensors(&format!("{prefix}.l1"), out);
        self.l2.tensors(&format!("{prefix}.l2"), out);
    }

    pub fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.l1.tensors_mut(&format!("{prefix}.l1"), out);
        self.l2.tensors_mut(&format!("{prefix}.l2"), out);
    }
}

impl BoundNoisyMlp {
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, x: Var, mode: &mut Mode) -> Result<Var> {
        let h = self.l1.forward(tape, x, mode)?;
        let h = tape.relu(h);
        self.l2.forward(tape, h, mode)
    }

    pub fn vars(&self, out: &mut Vec<Var>) {
        self.l1.vars(out);
        self.l2.vars(out);
    }
}

/// Strided conv encoder: four 3x3 stride-2 ReLU blocks (8, 16, 32, 64
/// channels), global average pool, then a linear projection to z.
#[derive(Debug, Clone)]
pub struct ConvEncoder<T: Real = f32> {
    pub kernels: Vec<Tensor<T>>,
    pub biases: Vec<Tensor<T>>,
    pub proj: Linear<T>,
}

pub struct BoundConvEncoder {
    pub kernels: Vec<Var>,
    pub biases: Vec<Var>,
    pub proj: BoundLinear,
}

pub const CONV_CHANNELS: [usize; 4] = [8, 16, 32, 64];

impl<T: Real> ConvEncoder<T> {
    pub fn new(in_channels: usize, z_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut kernels = Vec::new();
        let mut biases = Vec::new();
        let mut prev = in_channels;
        for &ch in &CONV_CHANNELS {
            let fan_in = prev * 9;
            let bound = 1.0 / (fan_in as f64).sqrt();
            kernels.push(uniform_tensor(&[ch, prev, 3, 3], bound, rng));
            biases.push(uniform_tensor(&[ch], bound, rng));
            prev = ch;
        }
        Self {
            kernels,
            biases,
            proj: Linear::new(prev, z_dim, rng),
        }
    }

    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> BoundConvEncoder {
        BoundConvEncoder {
            kernels: self
                .kernels
                .iter()
                .map(|k| bind_one(tape, k, trainable))
                .collect(),
            biases: self
                .biases
                .iter()
                .map(|b| bind_one(tape, b, trainable))
                .collect(),
            proj: self.proj.bind(tape, trainable),
        }
    }

    pub fn tensors(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        for (i, (k, b)) in self.kernels.iter().zip(&self.biases).enumerate() {
            out.push((format!("{prefix}.block{i}.kernels"), k.clone()));
            out.push((format!("{prefix}.block{i}.bias"), b.clone()));
        }
        self.proj.tensors(&format!("{prefix}.proj"), out);
    }

    pub fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        for (i, (k, b)) in self.kernels.iter_mut().zip(&mut self.biases).enumerate() {
            out.push((format!("{prefix}.block{i}.kernels"), k));
            out.push((format!("{prefix}.block{i}.bias"), b));
        }
        self.proj.tensors_mut(&format!("{prefix}.proj"), out);
    }
}

impl BoundConvEncoder {
    /// x [C x H x W] -> z [1 x Z]
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let mut h = x;
        for (k, b) in self.kernels.iter().zip(&self.biases) {
            h = tape.conv2d(h, *k, *b, 2, 1)?;
            h = tape.relu(h);
        }
        let pooled = tape.global_avg_pool(h)?;
        let c = tape.value(pooled).numel();
        let row = tape.reshape(pooled, &[1, c])?;
        self.proj.forward(tape, row)
    }

    pub fn vars(&self, out: &mut Vec<Var>) {
        for (&k, &b) in self.kernels.iter().zip(&self.biases) {
            out.push(k);
            out.push(b);
        }
        self.proj.vars(out);
    }
}
