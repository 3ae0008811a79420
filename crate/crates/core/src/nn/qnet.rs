use super::gat::{gcn_weights, BoundGatLayer, BoundGcnLayer, GatLayer, GcnLayer, Merge};
use super::layers::{BoundConvEncoder, BoundMlp, BoundNoisyMlp, ConvEncoder, Mlp, NoisyMlp};
use super::{repeat_rows, Mode, NetConfig, NetKind, NnError, Result, N_ACTIONS};
use crate::autodiff::{Real, Tape, Tensor, Var};
use crate::obs::{SceneObservation, NODE_FEATURE_DIM};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Graph branch of the network; the dense-BEV ablation has none.
#[derive(Debug, Clone)]
pub enum GraphStage<T: Real = f32> {
    Gat(Vec<GatLayer<T>>),
    Gcn(Vec<GcnLayer<T>>),
    Dense,
}

enum BoundGraphStage {
    Gat(Vec<BoundGatLayer>),
    Gcn(Vec<BoundGcnLayer>),
    Dense,
}

/// The full Q-network: conv encoder, node embedding, graph branch, and the
/// two dueling noisy streams.
#[derive(Debug, Clone)]
pub struct QNetwork<T: Real = f32> {
    pub config: NetConfig,
    pub encoder: ConvEncoder<T>,
    pub node_mlp: Mlp<T>,
    pub stage: GraphStage<T>,
    pub value_head: NoisyMlp<T>,
    pub advantage_head: NoisyMlp<T>,
}

/// Tape-bound mirror of [`QNetwork`]; lives for one forward/backward pass.
pub struct BoundQNet {
    encoder: BoundConvEncoder,
    node_mlp: BoundMlp,
    stage: BoundGraphStage,
    value_head: BoundNoisyMlp,
    advantage_head: BoundNoisyMlp,
    kind: NetKind,
    mixed_dim: usize,
}

/// Attention matrices captured during a forward pass, one entry per graph
/// layer holding one [N x N] matrix per head.
pub type AttentionRecord = Vec<Vec<Tensor<f32>>>;

/// Result of a Q-network forward pass.
pub struct ForwardOut<T: Real = f32> {
    /// Q-values, shape [N_ACTIONS].
    pub q: Var,
    /// State value V(s), scalar.
    pub value: Var,
    /// The BEV input leaf (tracked when `track_input` was set), for
    /// saliency gradients.
    pub bev_input: Var,
    /// Per-layer, per-head attention matrices (empty for non-GAT stages).
    pub attention: Vec<Vec<Tensor<T>>>,
}

impl<T: Real> QNetwork<T> {
    /// Build a network of the given family. Layer dimensions come from the
    /// config; weights are drawn deterministically from the seed.
    pub fn new(config: NetConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = config.graph_feature_dim;
        let s = config.graph_heads;
        let mixed = config.mixed_dim();
        let slope = if config.leaky_relu_scores { 0.2 } else { 0.0 };
        let encoder = ConvEncoder::new(3, config.z_dim, &mut rng);
        let node_mlp = Mlp::new(
            NODE_FEATURE_DIM,
            config.node_embed_dim,
            config.node_embed_dim,
            &mut rng,
        );
        let stage = match config.kind {
            NetKind::DqGat => GraphStage::Gat(vec![
                GatLayer::new(mixed, f, s, Merge::Concat, slope, &mut rng),
                GatLayer::new(s * f, f, s, Merge::Average, slope, &mut rng),
            ]),
            NetKind::GcnUniform | NetKind::GcnDistance => GraphStage::Gcn(vec![
                GcnLayer::new(mixed, s * f, &mut rng),
                GcnLayer::new(s * f, f, &mut rng),
            ]),
            NetKind::DenseBev => GraphStage::Dense,
        };
        let head_in = config.head_input_dim();
        let hh = config.head_hidden_dim;
        let value_head = NoisyMlp::new(head_in, hh, 1, config.noisy_sigma0, &mut rng);
        let advantage_head = NoisyMlp::new(head_in, hh, N_ACTIONS, config.noisy_sigma0, &mut rng);
        Self {
            config,
            encoder,
            node_mlp,
            stage,
            value_head,
            advantage_head,
        }
    }

    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> BoundQNet {
        BoundQNet {
            encoder: self.encoder.bind(tape, trainable),
            node_mlp: self.node_mlp.bind(tape, trainable),
            stage: match &self.stage {
                GraphStage::Gat(layers) => {
                    BoundGraphStage::Gat(layers.iter().map(|l| l.bind(tape, trainable)).collect())
                }
                GraphStage::Gcn(layers) => {
                    BoundGraphStage::Gcn(layers.iter().map(|l| l.bind(tape, trainable)).collect())
                }
                GraphStage::Dense => BoundGraphStage::Dense,
            },
            value_head: self.value_head.bind(tape, trainable),
            advantage_head: self.advantage_head.bind(tape, trainable),
            kind: self.config.kind,
            mixed_dim: self.config.mixed_dim(),
        }
    }

    /// Named parameter snapshot in registry order.
    pub fn tensors(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        self.encoder.tensors("encoder", &mut out);
        self.node_mlp.tensors("node_mlp", &mut out);
        match &self.stage {
            GraphStage::Gat(layers) => {
                for (i, l) in layers.iter().enumerate() {
                    l.tensors(&format!("gat{i}"), &mut out);
                }
            }
            GraphStage::Gcn(layers) => {
                for (i, l) in layers.iter().enumerate() {
                    l.tensors(&format!("gcn{i}"), &mut out);
                }
            }
            GraphStage::Dense => {}
        }
        self.value_head.tensors("value", &mut out);
        self.advantage_head.tensors("advantage", &mut out);
        out
    }

    /// Mutable parameter references in the same order as [`Self::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        self.encoder.tensors_mut("encoder", &mut out);
        self.node_mlp.tensors_mut("node_mlp", &mut out);
        match &mut self.stage {
            GraphStage::Gat(layers) => {
                for (i, l) in layers.iter_mut().enumerate() {
                    l.tensors_mut(&format!("gat{i}"), &mut out);
                }
            }
            GraphStage::Gcn(layers) => {
                for (i, l) in layers.iter_mut().enumerate() {
                    l.tensors_mut(&format!("gcn{i}"), &mut out);
                }
            }
            GraphStage::Dense => {}
        }
        self.value_head.tensors_mut("value", &mut out);
        self.advantage_head.tensors_mut("advantage", &mut out);
        out
    }

    /// Element-type conversion for the 64-bit gradient-check path.
    pub fn cast<U: Real>(&self) -> QNetwork<U> {
        let mut target: QNetwork<U> = QNetwork::new(self.config, 0);
        let source = self.tensors();
        for ((_, dst), (_, src)) in target.tensors_mut().into_iter().zip(&source) {
            *dst = src.cast();
        }
        target
    }
}

/// Convert BEV bytes to a [C x H x W] tensor with values in [0, 1].
pub fn bev_to_tensor<T: Real>(obs: &SceneObservation) -> Tensor<T> {
    let shape = obs.bev.shape();
    let data = obs
        .bev
        .data
        .iter()
        .map(|&v| T::from_f64(v as f64 / 255.0))
        .collect();
    Tensor::from_vec(&shape, data).expect("bev tensor")
}

/// Convert node features to an [N x NODE_FEATURE_DIM] tensor.
pub fn nodes_to_tensor<T: Real>(obs: &SceneObservation) -> Tensor<T> {
    let n = obs.nodes.len();
    let data = obs
        .nodes
        .features()
        .iter()
        .map(|&v| T::from_f64(v as f64))
        .collect();
    Tensor::from_vec(&[n, NODE_FEATURE_DIM], data).expect("node tensor")
}

/// Q(s, a) = V(s) + (A(s, a) - mean_a A(s, a)).
pub fn dueling_combine<T: Real>(tape: &mut Tape<T>, value: Var, advantage: Var) -> Result<Var> {
    let mean_a = tape.mean(advantage);
    let centered = tape.sub(advantage, mean_a)?;
    Ok(tape.add(centered, value)?)
}

impl BoundQNet {
    fn graph_forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        mixed: Var,
        obs: &SceneObservation,
    ) -> Result<(Var, Vec<Vec<Tensor<T>>>)> {
        let n = obs.nodes.len();
        match &self.stage {
            BoundGraphStage::Gat(layers) => {
                // fully connected over the region of interest, self-loops included
                let adjacency = vec![true; n * n];
                let mut h = mixed;
                let mut attention = Vec::with_capacity(layers.len());
                for layer in layers {
                    let (next, attn) = layer.forward(tape, h, &adjacency)?;
                    attention.push(attn);
                    h = next;
                }
                Ok((h, attention))
            }
            BoundGraphStage::Gcn(layers) => {
                let weights = match self.kind {
                    NetKind::GcnUniform => gcn_weights::<T>(None, n),
                    NetKind::GcnDistance => {
                        let mut d = vec![0f32; n * n];
                        for k in 0..n {
                            for j in 0..n {
                                d[k * n + j] = obs.nodes.pair_distance(k, j);
                            }
                        }
                        gcn_weights::<T>(Some(&d), n)
                    }
                    _ => unreachable!("gcn stage implies gcn kind"),
                };
                let wvar = tape.constant(weights);
                let mut h = mixed;
                for layer in layers {
                    h = layer.forward(tape, h, wvar)?;
                }
                Ok((h, Vec::new()))
            }
            BoundGraphStage::Dense => unreachable!("dense stage has no graph branch"),
        }
    }

    /// Full forward pass over one observation. The ego node is row 0.
    pub fn q_forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        obs: &SceneObservation,
        mode: &mut Mode,
        track_input: bool,
    ) -> Result<ForwardOut<T>> {
        if obs.nodes.len() == 0 {
            return Err(NnError::EmptyNodeSet);
        }
        let n = obs.nodes.len();
        let bev = bev_to_tensor::<T>(obs);
        let bev_input = if track_input {
            tape.leaf(bev)
        } else {
            tape.constant(bev)
        };
        let z = self.encoder.forward(tape, bev_input)?; // [1 x Z]

        let (ego_features, attention) = match self.kind {
            NetKind::DenseBev => (z, Vec::new()),
            _ => {
                let nodes = tape.constant(nodes_to_tensor::<T>(obs));
                let embedded = self.node_mlp.forward(tape, nodes)?; // [N x E]
                let z_rows = repeat_rows(tape, z, n)?; // same z for every node
                let mixed = tape.concat(&[embedded, z_rows], 1)?; // g_k = [e_k || z]
                debug_assert_eq!(tape.value(mixed).shape()[1], self.mixed_dim);
                let (hidden, attention) = self.graph_forward(tape, mixed, obs)?;
                let ego = tape.select_row(hidden, 0)?;
                let f = tape.value(ego).numel();
                (tape.reshape(ego, &[1, f])?, attention)
            }
        };

        let v = self.value_head.forward(tape, ego_features, mode)?; // [1 x 1]
        let a = self.advantage_head.forward(tape, ego_features, mode)?; // [1 x |A|]
        let v_flat = tape.reshape(v, &[1])?;
        let a_flat = tape.reshape(a, &[N_ACTIONS])?;
        let q = dueling_combine(tape, v_flat, a_flat)?;
        Ok(ForwardOut {
            q,
            value: v_flat,
            bev_input,
            attention,
        })
    }

    /// Tape handles of every bound parameter, in [`QNetwork::tensors`] order.
    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.encoder.vars(&mut out);
        self.node_mlp.vars(&mut out);
        match &self.stage {
            BoundGraphStage::Gat(layers) => {
                for l in layers {
                    l.vars(&mut out);
                }
            }
            BoundGraphStage::Gcn(layers) => {
                for l in layers {
                    l.vars(&mut out);
                }
            }
            BoundGraphStage::Dense => {}
        }
        self.value_head.vars(&mut out);
        self.advantage_head.vars(&mut out);
        out
    }
}
