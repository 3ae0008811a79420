use super::layers::bind_one;
use crate::autodiff::{Real, Result, Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Multi-head merge rule: concatenation for hidden layers, averaging for
/// the final one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Merge {
    Concat,
    Average,
}

/// One attention head: shared transform [F_out x F_in] and attention
/// vector [2 x F_out] (source row, destination row).
#[derive(Debug, Clone)]
pub struct GatHead<T: Real = f32> {
    pub w: Tensor<T>,
    pub attn: Tensor<T>,
}

pub struct BoundGatHead {
    pub w: Var,
    pub attn: Var,
}

/// Graph attention layer over a fully-masked adjacency.
#[derive(Debug, Clone)]
pub struct GatLayer<T: Real = f32> {
    pub heads: Vec<GatHead<T>>,
    pub merge: Merge,
    /// LeakyReLU slope for attention scores; 0 selects plain ReLU.
    pub score_slope: f64,
}

pub struct BoundGatLayer {
    pub heads: Vec<BoundGatHead>,
    pub merge: Merge,
    pub score_slope: f64,
}

impl<T: Real> GatLayer<T> {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        heads: usize,
        merge: Merge,
        score_slope: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let attn_bound = 1.0 / (out_dim as f64).sqrt();
        let heads = (0..heads)
            .map(|_| {
                let wdata = (0..out_dim * in_dim)
                    .map(|_| T::from_f64(rng.gen_range(-bound..bound)))
                    .collect();
                let adata = (0..2 * out_dim)
                    .map(|_| T::from_f64(rng.gen_range(-attn_bound..attn_bound)))
                    .collect();
                GatHead {
                    w: Tensor::from_vec(&[out_dim, in_dim], wdata).expect("gat w"),
                    attn: Tensor::from_vec(&[2, out_dim], adata).expect("gat attn"),
                }
            })
            .collect();
        Self {
            heads,
            merge,
            score_slope,
        }
    }

    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> BoundGatLayer {
        BoundGatLayer {
            heads: self
                .heads
                .iter()
                .map(|h| BoundGatHead {
                    w: bind_one(tape, &h.w, trainable),
                    attn: bind_one(tape, &h.attn, trainable),
                })
                .collect(),
            merge: self.merge,
            score_slope: self.score_slope,
        }
    }

    pub fn tensors(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        for (i, h) in self.heads.iter().enumerate() {
            out.push((format!("{prefix}.head{i}.w"), h.w.clone()));
            out.push((format!("{prefix}.head{i}.attn"), h.attn.clone()));
        }
    }

    pub fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        for (i, h) in self.heads.iter_mut().enumerate() {
            out.push((format!("{prefix}.head{i}.w"), &mut h.w));
            out.push((format!("{prefix}.head{i}.attn"), &mut h.attn));
        }
    }
}

impl BoundGatLayer {
    /// h [N x F_in] with a row-wise adjacency mask (true = j is a neighbor
    /// of k, self-loops included) -> merged features plus the per-head
    /// attention matrices.
    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        h: Var,
        adjacency: &[bool],
    ) -> Result<(Var, Vec<Tensor<T>>)> {
        let n = tape.value(h).shape()[0];
        let mut outputs = Vec::with_capacity(self.heads.len());
        let mut attentions = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let wt = tape.transpose(head.w)?;
            let wh = tape.matmul(h, wt)?; // [N x F]
            // score(k, j) = act(a_src . Wh_k + a_dst . Wh_j), built as an
            // outer sum of the two projections
            let at = tape.transpose(head.attn)?; // [F x 2]
            let proj = tape.matmul(wh, at)?; // [N x 2]
            let projt = tape.transpose(proj)?; // [2 x N]
            let src = tape.select_row(projt, 0)?;
            let dst = tape.select_row(projt, 1)?;
            let src_col = tape.reshape(src, &[n, 1])?;
            let dst_row = tape.reshape(dst, &[1, n])?;
            let ones_row = tape.constant(Tensor::full(&[1, n], T::one()));
            let ones_col = tape.constant(Tensor::full(&[n, 1], T::one()));
            let lhs = tape.matmul(src_col, ones_row)?;
            let rhs = tape.matmul(ones_col, dst_row)?;
            let raw = tape.add(lhs, rhs)?;
            let scores = if self.score_slope == 0.0 {
                tape.relu(raw)
            } else {
                tape.leaky_relu(raw, T::from_f64(self.score_slope))
            };
            let alpha = tape.softmax_rows(scores, adjacency)?;
            attentions.push(tape.value(alpha).clone());
            let agg = tape.matmul(alpha, wh)?;
            outputs.push(tape.relu(agg));
        }
        let merged = match self.merge {
            Merge::Concat => tape.concat(&outputs, 1)?,
            Merge::Average => {
                let mut acc = outputs[0];
                for &o in &outputs[1..] {
                    acc = tape.add(acc, o)?;
                }
                tape.scale(acc, T::from_f64(1.0 / self.heads.len() as f64))
            }
        };
        Ok((merged, attentions))
    }

    pub fn vars(&self, out: &mut Vec<Var>) {
        for h in &self.heads {
            out.push(h.w);
            out.push(h.attn);
        }
    }
}

/// Graph convolution layer: fixed aggregation weights, shared transform.
#[derive(Debug, Clone)]
pub struct GcnLayer<T: Real = f32> {
    pub w: Tensor<T>,
}

pub struct BoundGcnLayer {
    pub w: Var,
}

impl<T: Real> GcnLayer<T> {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let data = (0..out_dim * in_dim)
            .map(|_| T::from_f64(rng.gen_range(-bound..bound)))
            .collect();
        Self {
            w: Tensor::from_vec(&[out_dim, in_dim], data).expect("gcn w"),
        }
    }

    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> BoundGcnLayer {
        BoundGcnLayer {
            w: bind_one(tape, &self.w, trainable),
        }
    }

    pub fn tensors(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        out.push((format!("{prefix}.w"), self.w.clone()));
    }

    pub fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        out.push((format!("{prefix}.w"), &mut self.w));
    }
}

impl BoundGcnLayer {
    /// h [N x F_in], weights [N x N] row-stochastic -> relu(A H W^T)
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, h: Var, weights: Var) -> Result<Var> {
        let mixed = tape.matmul(weights, h)?;
        let wt = tape.transpose(self.w)?;
        let y = tape.matmul(mixed, wt)?;
        Ok(tape.relu(y))
    }

    pub fn vars(&self, out: &mut Vec<Var>) {
        out.push(self.w);
    }
}

/// Row-normalized aggregation weights for the GCN ablations.
///
/// `uniform` gives every neighbor (self included) weight 1/N; distance mode
/// weights node j within row k proportional to 1/(1 + d_kj).
pub fn gcn_weights<T: Real>(distances: Option<&[f32]>, n: usize) -> Tensor<T> {
    let mut data = vec![T::zero(); n * n];
    match distances {
        None => {
            let w = T::from_f64(1.0 / n as f64);
            for v in &mut data {
                *v = w;
            }
        }
        Some(d) => {
            for k in 0..n {
                let mut row = vec![0.0f64; n];
                let mut total = 0.0;
                for j in 0..n {
                    let v = 1.0 / (1.0 + d[k * n + j] as f64);
                    row[j] = v;
                    total += v;
                }
                for j in 0..n {
                    data[k * n + j] = T::from_f64(row[j] / total);
                }
            }
        }
    }
    Tensor::from_vec(&[n, n], data).expect("gcn weights")
}
