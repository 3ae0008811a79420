//! Central finite-difference oracle for gradient verification.
//!
//! The oracle only ever evaluates forward passes: it rebuilds the tape with
//! perturbed leaf values and compares the quotient against the gradient the
//! reverse sweep produced. It runs at `f64` so the difference quotient itself
//! stays well below the tolerances being checked.

use super::{Result, Tape, Tensor, Var};
use rand::Rng;

/// Outcome of one gradient check.
#[derive(Debug, Clone)]
pub struct GradReport {
    pub max_rel_err: f64,
    pub checked: usize,
}

impl GradReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs()).max(1e-6);
    (a - b).abs() / denom
}

/// Central difference with a kink guard: piecewise-linear activations make
/// the quotient meaningless when [x-h, x+h] straddles a kink, so the
/// estimate is accepted only when halving h reproduces it. Returns `None`
/// for probes that sit essentially on a kink (where no derivative exists).
pub fn guarded_central_diff(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> Option<f64> {
    let quotient = |f: &mut dyn FnMut(f64) -> f64, h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    let mut h = h;
    for _ in 0..3 {
        let fd1 = quotient(&mut f, h);
        let fd2 = quotient(&mut f, h / 2.0);
        if rel_err(fd1, fd2) < 1e-3 {
            return Some(fd2);
        }
        h /= 16.0;
    }
    None
}

/// Compare reverse-mode gradients of `build` against central differences.
///
/// `build` must construct the scalar loss from the given leaves and be a pure
/// function of their values. When `probes_per_leaf` is `Some(p)`, only `p`
/// randomly chosen coordinates of each leaf are probed; otherwise every
/// coordinate is.
pub fn check_gradients<F>(
    leaves: &[Tensor<f64>],
    build: F,
    h: f64,
    probes_per_leaf: Option<usize>,
    rng: &mut impl Rng,
) -> Result<GradReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |tensors: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        Ok(tape.value(loss).item())
    };

    // Reverse-mode gradients once.
    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    tape.backward(loss)?;
    let ad_grads: Vec<Tensor<f64>> = vars
        .iter()
        .map(|&v| {
            tape.grad(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape()))
        })
        .collect();

    let mut work: Vec<Tensor<f64>> = leaves.to_vec();
    let mut max_rel_err: f64 = 0.0;
    let mut checked = 0;
    for li in 0..leaves.len() {
        let numel = leaves[li].numel();
        let coords: Vec<usize> = match probes_per_leaf {
            Some(p) if p < numel => (0..p).map(|_| rng.gen_range(0..numel)).collect(),
            _ => (0..numel).collect(),
        };
        for ci in coords {
            let orig = work[li].data()[ci];
            let mut probe_err: Option<crate::autodiff::AutodiffError> = None;
            let fd = guarded_central_diff(
                |x| {
                    work[li].data_mut()[ci] = x;
                    match eval(&work) {
                        Ok(v) => v,
                        Err(e) => {
                            probe_err = Some(e);
                            f64::NAN
                        }
                    }
                },
                orig,
                h,
            );
            work[li].data_mut()[ci] = orig;
            if let Some(e) = probe_err {
                return Err(e);
            }
            let Some(fd) = fd else { continue };
            let ad = ad_grads[li].data()[ci];
            max_rel_err = max_rel_err.max(rel_err(ad, fd));
            checked += 1;
        }
    }
    Ok(GradReport {
        max_rel_err,
        checked,
    })
}
