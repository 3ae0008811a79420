//! Graph-attention deep Q-learning for interactive driving.
//!
//! The crate is organized around the data flow of the system:
//!
//! - [`autodiff`]: dense tensors with reverse-mode differentiation,
//!   covering exactly the operation set the Q-network needs.
//! - [`nn`]: neural layers (noisy linear, conv encoder, graph attention)
//!   and the dueling Q-network assembly, plus ablation variants.
//! - [`sim`]: deterministic 2D traffic world with six scenario families,
//!   kinematic bicycle vehicles, and IDM background traffic.
//! - [`obs`]: ego-anchored BEV raster and per-vehicle node features.
//! - [`rl`]: prioritized replay, double-Q targets, Adam training, and the
//!   asynchronous actor/learner loop.
//! - [`agents`]: deployable policies (learned, rule-based FSM-TTC, trivial).
//! - [`eval`]: benchmark harness, metrics, saliency/attention introspection,
//!   and replay rendering.

pub mod agents;
pub mod autodiff;
pub mod eval;
pub mod nn;
pub mod obs;
pub mod rl;
pub mod sim;

pub use autodiff::{Tape, Tensor, Var};
