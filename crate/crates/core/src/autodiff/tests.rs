use super::gradcheck::check_gradients;
use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn t32(shape: &[usize], data: &[f32]) -> Tensor<f32> {
    Tensor::from_vec(shape, data.to_vec()).unwrap()
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let numel: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..numel).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn matmul_identity_and_inner_product() {
    let mut tape: Tape<f32> = Tape::new();
    let eye = tape.constant(Tensor::eye(2));
    let a = tape.constant(t32(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let out = tape.matmul(eye, a).unwrap();
    assert_eq!(tape.value(out).data(), &[1.0, 2.0, 3.0, 4.0]);

    let row = tape.constant(t32(&[1, 2], &[1.0, 2.0]));
    let col = tape.constant(t32(&[2, 1], &[3.0, 4.0]));
    let dot = tape.matmul(row, col).unwrap();
    assert_eq!(tape.value(dot).data(), &[11.0]);
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let mut tape: Tape<f32> = Tape::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[2, 3]));
    let err = tape.matmul(a, b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("[2, 3]"), "unexpected message: {msg}");
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = random_tensor(&[3, 4], &mut rng);
    let b = random_tensor(&[4, 2], &mut rng);
    let report = check_gradients(
        &[a, b],
        |tape, vars| {
            let prod = tape.matmul(vars[0], vars[1])?;
            Ok(tape.sum(prod))
        },
        1e-3,
        None,
        &mut rng,
    )
    .unwrap();
    assert!(report.passes(1e-4), "max rel err {}", report.max_rel_err);
}

#[test]
fn relu_and_add_identities() {
    let mut tape: Tape<f32> = Tape::new();
    let x = tape.constant(t32(&[3], &[-1.0, 0.0, 2.0]));
    let y = tape.relu(x);
    assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);

    let zero = tape.constant(Tensor::scalar(0.0));
    let same = tape.add(x, zero).unwrap();
    assert_eq!(tape.value(same).data(), tape.value(x).data());
}

#[test]
fn square_gradient_at_three_is_six() {
    let mut tape: Tape<f32> = Tape::new();
    let x = tape.leaf(Tensor::scalar(3.0));
    let sq = tape.mul(x, x).unwrap();
    let loss = tape.sum(sq);
    tape.backward(loss).unwrap();
    assert_eq!(tape.grad(x).unwrap().data(), &[6.0]);
}

#[test]
fn log_rejects_non_positive_input() {
    let mut tape: Tape<f32> = Tape::new();
    let x = tape.constant(t32(&[2], &[1.0, -0.5]));
    assert!(matches!(
        tape.log(x),
        Err(AutodiffError::LogDomain { .. })
    ));
}

#[test]
fn softmax_rows_symmetry_and_mask() {
    let mut tape: Tape<f32> = Tape::new();
    for c in [-3.0f32, 0.0, 7.5] {
        let x = tape.constant(t32(&[1, 3], &[c, c, c]));
        let y = tape.softmax_rows(x, &[true, true, true]).unwrap();
        for &v in tape.value(y).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-6);
        }
    }
    let x = tape.constant(t32(&[1, 2], &[0.0, 0.0]));
    let y = tape.softmax_rows(x, &[true, false]).unwrap();
    assert_eq!(tape.value(y).data(), &[1.0, 0.0]);
}

#[test]
fn softmax_rows_matches_direct_formula() {
    // brute-force exp-normalize oracle
    let row = [1.0f64, 2.0, 3.0];
    let denom: f64 = row.iter().map(|v| v.exp()).sum();
    let expect: Vec<f64> = row.iter().map(|v| v.exp() / denom).collect();

    let mut tape: Tape<f64> = Tape::new();
    let x = tape.constant(Tensor::from_vec(&[1, 3], row.to_vec()).unwrap());
    let y = tape.softmax_rows(x, &[true, true, true]).unwrap();
    for (got, want) in tape.value(y).data().iter().zip(&expect) {
        assert!((got - want).abs() < 1e-6);
    }
}

#[test]
fn softmax_rows_fully_masked_row_errors() {
    let mut tape: Tape<f32> = Tape::new();
    let x = tape.constant(Tensor::zeros(&[2, 2]));
    let err = tape
        .softmax_rows(x, &[true, true, false, false])
        .unwrap_err();
    assert_eq!(err, AutodiffError::FullyMaskedRow { row: 1 });
}

#[test]
fn concat_single_input_and_basic() {
    let mut tape: Tape<f32> = Tape::new();
    let a = tape.constant(t32(&[2], &[5.0, 6.0]));
    let only = tape.concat(&[a], 0).unwrap();
    assert_eq!(tape.value(only).data(), &[5.0, 6.0]);

    let b = tape.constant(t32(&[1], &[3.0]));
    let c = tape.constant(t32(&[2], &[1.0, 2.0]));
    let cat = tape.concat(&[c, b], 0).unwrap();
    assert_eq!(tape.value(cat).data(), &[1.0, 2.0, 3.0]);
}

#[test]
fn concat_backward_routes_slices() {
    let mut tape: Tape<f32> = Tape::new();
    let x = tape.leaf(t32(&[2], &[1.0, 2.0]));
    let y = tape.leaf(t32(&[3], &[3.0, 4.0, 5.0]));
    let cat = tape.concat(&[x, y], 0).unwrap();
    let loss = tape.sum(cat);
    tape.backward(loss).unwrap();
    assert_eq!(tape.grad(x).unwrap().data(), &[1.0, 1.0]);
    assert_eq!(tape.grad(y).unwrap().data(), &[1.0, 1.0, 1.0]);
}

#[test]
fn conv2d_one_by_one_identity_and_zero_input() {
    let mut tape: Tape<f32> = Tape::new();
    let x = tape.constant(t32(&[1, 2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    let k = tape.constant(t32(&[1, 1, 1, 1], &[1.0]));
    let b = tape.constant(t32(&[1], &[0.0]));
    let y = tape.conv2d(x, k, b, 1, 0).unwrap();
    assert_eq!(tape.value(y).shape(), &[1, 2, 3]);
    assert_eq!(tape.value(y).data(), tape.value(x).data());

    let z = tape.constant(Tensor::zeros(&[2, 4, 4]));
    let k2 = tape.constant(t32(&[1, 2, 3, 3], &[0.5; 18]));
    let y2 = tape.conv2d(z, k2, b, 1, 1).unwrap();
    assert!(tape.value(y2).data().iter().all(|&v| v == 0.0));
}

#[test]
fn conv2d_kernel_larger_than_padded_input_errors() {
    let mut tape: Tape<f32> = Tape::new();
    let x = tape.constant(Tensor::zeros(&[1, 2, 2]));
    let k = tape.constant(Tensor::zeros(&[1, 1, 5, 5]));
    let b = tape.constant(Tensor::zeros(&[1]));
    assert!(matches!(
        tape.conv2d(x, k, b, 1, 1),
        Err(AutodiffError::KernelTooLarge { .. })
    ));
}

#[test]
fn conv2d_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random_tensor(&[3, 8, 8], &mut rng);
    let k = random_tensor(&[4, 3, 3, 3], &mut rng);
    let b = random_tensor(&[4], &mut rng);
    let report = check_gradients(
        &[x, k, b],
        |tape, vars| {
            let y = tape.conv2d(vars[0], vars[1], vars[2], 2, 1)?;
            let y = tape.relu(y);
            Ok(tape.sum(y))
        },
        1e-3,
        Some(60),
        &mut rng,
    )
    .unwrap();
    assert!(report.passes(1e-3), "max rel err {}", report.max_rel_err);
}

#[test]
fn backward_of_sum_gives_ones_and_accumulates() {
    let mut tape: Tape<f32> = Tape::new();
    let x = tape.leaf(t32(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let loss = tape.sum(x);
    tape.backward(loss).unwrap();
    assert_eq!(tape.grad(x).unwrap().data(), &[1.0; 4]);
    tape.backward(loss).unwrap();
    assert_eq!(tape.grad(x).unwrap().data(), &[2.0; 4]);
}

#[test]
fn backward_with_no_tracked_inputs_writes_nothing() {
    let mut tape: Tape<f32> = Tape::new();
    let x = tape.constant(t32(&[2], &[1.0, 2.0]));
    let loss = tape.sum(x);
    tape.backward(loss).unwrap();
    assert!(tape.grad(x).is_none());
    assert!(tape.grad(loss).is_none());
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut tape: Tape<f32> = Tape::new();
    let x = tape.leaf(t32(&[2], &[1.0, 2.0]));
    assert!(matches!(
        tape.backward(x),
        Err(AutodiffError::NonScalarLoss { .. })
    ));
}

#[test]
fn mlp_composite_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let w1 = random_tensor(&[5, 4], &mut rng);
    let b1 = random_tensor(&[5], &mut rng);
    let w2 = random_tensor(&[2, 5], &mut rng);
    let x = random_tensor(&[4, 1], &mut rng);
    let report = check_gradients(
        &[w1, b1, w2, x],
        |tape, vars| {
            let h = tape.matmul(vars[0], vars[3])?;
            let b = tape.reshape(vars[1], &[5, 1])?;
            let h = tape.add(h, b)?;
            let h = tape.relu(h);
            let o = tape.matmul(vars[2], h)?;
            let sq = tape.mul(o, o)?;
            Ok(tape.mean(sq))
        },
        1e-3,
        None,
        &mut rng,
    )
    .unwrap();
    assert!(report.passes(1e-4), "max rel err {}", report.max_rel_err);
}

#[test]
fn every_differentiable_op_passes_random_gradient_checks() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..100 {
        let n = rng.gen_range(1..4usize);
        let m = rng.gen_range(1..4usize);
        let a = random_tensor(&[n, m], &mut rng);
        let b = random_tensor(&[n, m], &mut rng);
        let c = random_tensor(&[m, n], &mut rng);
        let mask: Vec<bool> = {
            let mut v: Vec<bool> = (0..n * m).map(|_| rng.gen_bool(0.7)).collect();
            for r in 0..n {
                v[r * m] = true; // keep every row alive
            }
            v
        };
        let report = check_gradients(
            &[a, b, c],
            |tape, vars| {
                let sum = tape.add(vars[0], vars[1])?;
                let diff = tape.sub(vars[0], vars[1])?;
                let prod = tape.mul(sum, diff)?;
                let soft = tape.softmax_rows(prod, &mask)?;
                let lin = tape.matmul(soft, vars[2])?;
                let lin = tape.leaky_relu(lin, 0.2);
                let e = tape.exp(lin);
                let cat = tape.concat(&[soft, e], 1)?;
                let t = tape.transpose(cat)?;
                let neg = tape.neg(t);
                let sc = tape.scale(neg, -0.37);
                Ok(tape.mean(sc))
            },
            1e-3,
            None,
            &mut rng,
        )
        .unwrap();
        assert!(
            report.passes(1e-4),
            "trial {trial}: max rel err {}",
            report.max_rel_err
        );
    }
}

#[test]
fn forward_replay_is_deterministic() {
    let run = |seed: u64| -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape: Tape<f32> = Tape::new();
        let data: Vec<f32> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = tape.leaf(Tensor::from_vec(&[3, 4], data).unwrap());
        let w: Vec<f32> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = tape.leaf(Tensor::from_vec(&[4, 2], w).unwrap());
        let y = tape.matmul(x, w).unwrap();
        let y = tape.relu(y);
        tape.value(y).data().to_vec()
    };
    assert_eq!(run(5), run(5));
}
