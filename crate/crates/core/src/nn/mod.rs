//! Neural layers and the dueling Q-network assembly.
//!
//! Everything is generic over the tensor element so the finite-difference
//! oracle can drive the exact same code at `f64`; production runs at `f32`.

pub mod checkpoint;
pub mod fdcheck;
mod gat;
mod layers;
mod qnet;
#[cfg(test)]
mod tests;

pub use fdcheck::fd_check_qnet;
pub use gat::{gcn_weights, GatLayer, GcnLayer, Merge};
pub use layers::{ConvEncoder, Linear, Mlp, NoisyLinear, NoisyMlp};
pub use qnet::{bev_to_tensor, dueling_combine, nodes_to_tensor, AttentionRecord, BoundQNet, ForwardOut, GraphStage, QNetwork};

use crate::autodiff::{AutodiffError, Real, Tape, Tensor, Var};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::sim::{ACTION_SPEEDS_KMH, N_ACTIONS};

#[derive(Debug, Error)]
pub enum NnError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("observation has no nodes")]
    EmptyNodeSet,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("unknown network kind `{0}`")]
    UnknownKind(String),
}

pub type Result<V> = std::result::Result<V, NnError>;

/// Network family selector: the full attention model or one of the
/// ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetKind {
    /// Two-layer graph attention over the scene graph.
    DqGat,
    /// Two-layer graph convolution, uniform neighbor weights.
    GcnUniform,
    /// Two-layer graph convolution, weights proportional to 1/(1+d),
    /// row-normalized.
    GcnDistance,
    /// No graph branch: conv features feed the dueling heads directly,
    /// with speed-encoded vehicle intensities in the BEV.
    DenseBev,
}

impl NetKind {
    pub fn wants_speed_encoded_bev(self) -> bool {
        matches!(self, NetKind::DenseBev)
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "dqgat" => Ok(NetKind::DqGat),
            "gcn_uniform" => Ok(NetKind::GcnUniform),
            "gcn_distance" => Ok(NetKind::GcnDistance),
            "dense_bev" => Ok(NetKind::DenseBev),
            other => Err(NnError::UnknownKind(other.to_string())),
        }
    }
}

/// Layer dimensions of the Q-network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub kind: NetKind,
    /// Conv-encoder output width (z).
    pub z_dim: usize,
    /// Node-MLP embedding width (e_k).
    pub node_embed_dim: usize,
    /// Per-head graph feature width.
    pub graph_feature_dim: usize,
    /// Attention heads per graph layer.
    pub graph_heads: usize,
    /// Hidden width of each dueling stream.
    pub head_hidden_dim: usize,
    /// Use LeakyReLU(0.2) instead of ReLU for attention scores.
    pub leaky_relu_scores: bool,
    /// Noise-scale initializer sigma_0 of the noisy layers.
    pub noisy_sigma0: f64,
}

impl NetConfig {
    /// Desk-scale defaults: Z=64, E=32, F=64, S=4.
    pub fn desk(kind: NetKind) -> Self {
        Self {
            kind,
            z_dim: 64,
            node_embed_dim: 32,
            graph_feature_dim: 64,
            graph_heads: 4,
            head_hidden_dim: 64,
            leaky_relu_scores: false,
            noisy_sigma0: 0.5,
        }
    }

    /// Full-scale dimensions: Z=512, E=128, F=256, S=4.
    pub fn full_scale(kind: NetKind) -> Self {
        Self {
            z_dim: 512,
            node_embed_dim: 128,
            graph_feature_dim: 256,
            ..Self::desk(kind)
        }
    }

    /// Tiny configuration for gradient checks: Z=8, E=8, F=8, S=2.
    pub fn tiny(kind: NetKind) -> Self {
        Self {
            kind,
            z_dim: 8,
            node_embed_dim: 8,
            graph_feature_dim: 8,
            graph_heads: 2,
            head_hidden_dim: 8,
            leaky_relu_scores: false,
            noisy_sigma0: 0.5,
        }
    }

    /// Width of the per-node mixed vector g_k = [e_k || z].
    pub fn mixed_dim(&self) -> usize {
        self.node_embed_dim + self.z_dim
    }

    /// Input width of the dueling heads.
    pub fn head_input_dim(&self) -> usize {
        match self.kind {
            NetKind::DenseBev => self.z_dim,
            _ => self.graph_feature_dim,
        }
    }

    /// Stable 64-bit hash of the configuration, embedded in checkpoints.
    pub fn hash(&self) -> u64 {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}

/// Forward-pass mode. Training resamples the factorized noise of every
/// noisy layer from the supplied generator; evaluation zeroes it.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

impl Mode<'_> {
    fn rng(&mut self) -> Option<&mut ChaCha8Rng> {
        match self {
            Mode::Eval => None,
            Mode::Train(rng) => Some(rng),
        }
    }
}

/// Broadcast a bias vector [n] over `rows` rows via an explicit ones
/// expansion, returning y + bias per row.
fn add_bias_rows<T: Real>(
    tape: &mut Tape<T>,
    y: Var,
    bias: Var,
    rows: usize,
) -> crate::autodiff::Result<Var> {
    let n = tape.value(bias).numel();
    let b2 = tape.reshape(bias, &[1, n])?;
    let ones = tape.constant(Tensor::full(&[rows, 1], T::one()));
    let expanded = tape.matmul(ones, b2)?;
    tape.add(y, expanded)
}

/// Repeat a row vector [1 x n] over `rows` rows.
fn repeat_rows<T: Real>(
    tape: &mut Tape<T>,
    row: Var,
    rows: usize,
) -> crate::autodiff::Result<Var> {
    let ones = tape.constant(Tensor::full(&[rows, 1], T::one()));
    tape.matmul(ones, row)
}
