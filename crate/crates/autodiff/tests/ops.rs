use proptest::prelude::*;
use prosody_autodiff::{grad_check, Checkpoint, Tape, Tensor, Var, DEFAULT_STEP};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Fixed random readout so every output coordinate matters.
fn readout(t: &mut Tape, x: Var, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = t.value(x).shape().to_vec();
    let w = random(&mut rng, &shape);
    t.weighted_sum(x, w)
}

fn check(params: &[Tensor], f: impl Fn(&mut Tape, &[Var]) -> Var) {
    let report = grad_check(f, params, DEFAULT_STEP, 1e-4).unwrap();
    assert!(report.passed(), "{report:?}");
}

#[test]
fn every_op_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = random(&mut rng, &[3, 4]);
    let b = random(&mut rng, &[4, 2]);
    let bt = random(&mut rng, &[2, 4]);
    let same = random(&mut rng, &[3, 4]);
    let row = random(&mut rng, &[4]);
    let gain = random(&mut rng, &[4]);

    check(&[a.clone(), b.clone()], |t, v| {
        let y = t.matmul(v[0], v[1]);
        readout(t, y, 1)
    });
    check(&[a.clone(), bt.clone()], |t, v| {
        let y = t.matmul_nt(v[0], v[1]);
        readout(t, y, 2)
    });
    check(&[a.clone(), same.clone()], |t, v| {
        let s = t.add(v[0], v[1]);
        let d = t.sub(s, v[1]);
        let d = t.sub(d, v[1]);
        readout(t, d, 3)
    });
    check(&[a.clone(), row.clone()], |t, v| {
        let y = t.add_row(v[0], v[1]);
        let y = t.scale(y, -1.7);
        let y = t.add_scalar(y, 0.3);
        readout(t, y, 4)
    });
    check(&[a.clone()], |t, v| {
        let y = t.softmax_rows(v[0]);
        readout(t, y, 5)
    });
    check(&[a.clone(), gain.clone(), row.clone()], |t, v| {
        let y = t.layer_norm(v[0], v[1], v[2], 1e-5);
        readout(t, y, 6)
    });
    check(&[a.clone()], |t, v| {
        let y = t.embed(v[0], &[2, 0, 2, 1]);
        readout(t, y, 7)
    });
    check(&[a.clone(), same.clone()], |t, v| {
        let l = t.slice_cols(v[0], 1, 3);
        let r = t.slice_rows(v[1], 1, 3);
        let r = t.transpose(r);
        let r = t.slice_rows(r, 0, 3);
        let c = t.concat_cols(&[l, r, v[0]]);
        readout(t, c, 8)
    });
    check(&[a.clone()], |t, v| {
        let y = t.row_diff(v[0], &[(0, 1), (0, 2), (1, 2), (2, 2)]);
        let s = t.sum(y);
        let w = readout(t, y, 9);
        t.add(s, w)
    });
    let mask = random(&mut rng, &[3, 4]);
    check(&[a], move |t, v| {
        let y = t.mul_const(v[0], mask.clone());
        readout(t, y, 10)
    });
}

#[test]
fn relu_grad_check_away_from_kinks() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut x = random(&mut rng, &[4, 5]);
    for v in x.data_mut() {
        if v.abs() < 1e-3 {
            *v += 0.01;
        }
    }
    check(&[x], |t, v| {
        let y = t.relu(v[0]);
        readout(t, y, 12)
    });
}

#[test]
fn two_layer_relu_network() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random(&mut rng, &[6, 4]);
    let w1 = random(&mut rng, &[8, 4]);
    let b1 = random(&mut rng, &[8]);
    let w2 = random(&mut rng, &[3, 8]);
    let b2 = random(&mut rng, &[3]);
    let report = grad_check(
        |t, v| {
            let h = t.matmul_nt(v[0], v[1]);
            let h = t.add_row(h, v[2]);
            let h = t.relu(h);
            let o = t.matmul_nt(h, v[3]);
            let o = t.add_row(o, v[4]);
            readout(t, o, 13)
        },
        &[x, w1, b1, w2, b2],
        DEFAULT_STEP,
        1e-4,
    )
    .unwrap();
    assert!(report.passed(), "{report:?}");
    assert_eq!(report.per_param.len(), 5);
}

#[test]
fn attention_block_shape_graph() {
    // softmax(Q K^T / sqrt(d)) V composed from primitive ops
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random(&mut rng, &[5, 4]);
    let wq = random(&mut rng, &[4, 4]);
    let wk = random(&mut rng, &[4, 4]);
    let wv = random(&mut rng, &[4, 4]);
    check(&[x, wq, wk, wv], |t, v| {
        let q = t.matmul_nt(v[0], v[1]);
        let k = t.matmul_nt(v[0], v[2]);
        let val = t.matmul_nt(v[0], v[3]);
        let s = t.matmul_nt(q, k);
        let s = t.scale(s, 0.5);
        let a = t.softmax_rows(s);
        let o = t.matmul(a, val);
        readout(t, o, 14)
    });
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(vals in prop::collection::vec(-30.0f64..30.0, 12)) {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::matrix(3, 4, vals));
        let y = t.softmax_rows(x);
        for r in 0..3 {
            let s: f64 = t.value(y).row(r).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_rows_have_zero_mean(vals in prop::collection::vec(-50.0f64..50.0, 16)) {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::matrix(2, 8, vals));
        let g = t.leaf(Tensor::full(&[8], 1.0));
        let b = t.leaf(Tensor::zeros(&[8]));
        let y = t.layer_norm(x, g, b, 1e-5);
        for r in 0..2 {
            let mean: f64 = t.value(y).row(r).iter().sum::<f64>() / 8.0;
            prop_assert!(mean.abs() < 1e-10);
        }
    }

    #[test]
    fn checkpoint_round_trip(
        manifest in "[a-z_]{1,8} = [0-9.]{1,6}",
        tensors in prop::collection::vec(
            (1usize..4, 1usize..4, "[a-z.]{1,10}", -1e6f64..1e6),
            0..4,
        ),
    ) {
        let ck = Checkpoint {
            manifest,
            tensors: tensors
                .into_iter()
                .map(|(r, c, name, v)| {
                    let data = (0..r * c).map(|k| v / (k as f64 + 1.0)).collect();
                    (name, Tensor::matrix(r, c, data))
                })
                .collect(),
        };
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(back, ck);
    }
}
