//! Finite-difference verification of the full Q-network composite.
//!
//! Used by the test suites; kept in the library so benchmarks and the
//! acceptance gate can share it. The probe evaluates sum(Q) as the scalar
//! and compares reverse-mode parameter gradients against central
//! differences at f64.

use super::qnet::QNetwork;
use super::Mode;
use crate::autodiff::Tape;
use crate::obs::SceneObservation;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn forward_sum_q(net: &QNetwork<f64>, obs: &SceneObservation) -> f64 {
    let mut tape: Tape<f64> = Tape::new();
    let bound = net.bind(&mut tape, false);
    let out = bound
        .q_forward(&mut tape, obs, &mut Mode::Eval, false)
        .expect("forward");
    let loss = tape.sum(out.q);
    tape.value(loss).item()
}

/// Maximum relative error between reverse-mode and central-difference
/// gradients over `probes` randomly chosen parameter coordinates.
pub fn fd_check_qnet(
    net: &QNetwork<f64>,
    obs: &SceneObservation,
    probes: usize,
    h: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    // reverse-mode gradients
    let mut tape: Tape<f64> = Tape::new();
    let bound = net.bind(&mut tape, true);
    let out = bound
        .q_forward(&mut tape, obs, &mut Mode::Eval, false)
        .expect("forward");
    let loss = tape.sum(out.q);
    tape.backward(loss).expect("backward");
    let vars = bound.vars();
    let grads: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| {
            tape.grad(v)
                .map(|g| g.data().to_vec())
                .unwrap_or_else(|| vec![0.0; tape.value(v).numel()])
        })
        .collect();

    let mut work = net.clone();
    let n_tensors = grads.len();
    let mut max_rel = 0.0f64;
    for _ in 0..probes {
        let ti = rng.gen_range(0..n_tensors);
        let numel = grads[ti].len();
        let ci = rng.gen_range(0..numel);
        let orig = work.tensors_mut()[ti].1.data()[ci];
        let fd = crate::autodiff::gradcheck::guarded_central_diff(
            |x| {
                work.tensors_mut()[ti].1.data_mut()[ci] = x;
                forward_sum_q(&work, obs)
            },
            orig,
            h,
        );
        work.tensors_mut()[ti].1.data_mut()[ci] = orig;
        let Some(fd) = fd else { continue };
        let ad = grads[ti][ci];
        let rel = (ad - fd).abs() / ad.abs().max(fd.abs()).max(1e-6);
        if rel > max_rel {
            max_rel = rel;
        }
    }
    max_rel
}
