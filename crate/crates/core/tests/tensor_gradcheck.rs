//! Finite-difference oracles for the differentiation engine.
//!
//! Every primitive's analytic gradient is compared against a central
//! difference with `h = 1e-5` at random points kept away from kinks and
//! other non-differentiable loci, then the chain rule is checked on a fused
//! expression against its step-by-step tape.

use std::rc::Rc;

use dhypr_core::tensor::{SparseMatrix, Tape, Tensor, TensorId};

const H: f64 = 1e-5;

/// Deterministic xorshift stream mapped to (-1, 1).
struct Stream(u64);

impl Stream {
    fn new(seed: u64) -> Self {
        Stream(seed.wrapping_mul(0x9E3779B97F4A7C15) | 1)
    }

    fn next(&mut self) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0 >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }

    fn vec(&mut self, len: usize, scale: f64, offset: f64) -> Vec<f64> {
        (0..len).map(|_| self.next() * scale + offset).collect()
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs());
    if denom < 1e-9 {
        0.0
    } else {
        (a - b).abs() / denom
    }
}

/// Runs `f` to a scalar loss and checks every input coordinate's analytic
/// gradient against central differences.
fn gradcheck<F>(name: &str, inputs: &[(usize, usize, Vec<f64>)], tol: f64, f: F)
where
    F: Fn(&mut Tape, &[TensorId]) -> TensorId,
{
    let build = |data: &[Vec<f64>]| -> (Tape, Vec<TensorId>, TensorId) {
        let mut tape = Tape::new();
        let ids: Vec<TensorId> = inputs
            .iter()
            .zip(data)
            .map(|(&(r, c, _), d)| tape.leaf(Tensor::new(r, c, d.clone()).unwrap().with_grad()))
            .collect();
        let loss = f(&mut tape, &ids);
        (tape, ids, loss)
    };

    let base: Vec<Vec<f64>> = inputs.iter().map(|(_, _, d)| d.clone()).collect();
    let (tape, ids, loss) = build(&base);
    assert_eq!(tape.value(loss).shape(), (1, 1), "{name}: loss must be scalar");
    let grads = tape.backward(loss).unwrap();

    for (k, id) in ids.iter().enumerate() {
        let analytic = grads.get_or_zero(*id);
        for e in 0..base[k].len() {
            let mut plus = base.clone();
            plus[k][e] += H;
            let (tp, _, lp) = build(&plus);
            let mut minus = base.clone();
            minus[k][e] -= H;
            let (tm, _, lm) = build(&minus);
            let numeric = (tp.value(lp).data[0] - tm.value(lm).data[0]) / (2.0 * H);
            let a = analytic.data[e];
            assert!(
                rel_err(a, numeric) < tol,
                "{name}: input {k} entry {e}: analytic {a} vs numeric {numeric}"
            );
        }
    }
}

/// A weighted sum with fixed coefficients keeps every output coordinate
/// visible in the scalar loss.
fn spread_sum(tape: &mut Tape, x: TensorId) -> TensorId {
    let t = tape.value(x);
    let (r, c) = t.shape();
    let coef: Vec<f64> = (0..r * c).map(|i| 0.3 + 0.1 * (i % 7) as f64).collect();
    let w = tape.constant(Tensor::new(r, c, coef).unwrap());
    let prod = tape.mul(x, w).unwrap();
    tape.sum(prod).unwrap()
}

#[test]
fn elementwise_binary_ops_match_finite_differences() {
    let mut s = Stream::new(1);
    let a = s.vec(12, 0.8, 0.0);
    let b = s.vec(12, 0.8, 1.6); // keep divisors away from zero
    for (name, op) in [
        ("add", 0usize),
        ("sub", 1),
        ("mul", 2),
        ("div", 3),
    ] {
        gradcheck(
            name,
            &[(3, 4, a.clone()), (3, 4, b.clone())],
            1e-6,
            move |tape, ids| {
                let out = match op {
                    0 => tape.add(ids[0], ids[1]).unwrap(),
                    1 => tape.sub(ids[0], ids[1]).unwrap(),
                    2 => tape.mul(ids[0], ids[1]).unwrap(),
                    _ => tape.div(ids[0], ids[1]).unwrap(),
                };
                spread_sum(tape, out)
            },
        );
    }
}

#[test]
fn broadcast_shapes_match_finite_differences() {
    let mut s = Stream::new(2);
    let a = s.vec(12, 0.8, 0.0);
    let col = s.vec(3, 0.5, 1.5);
    let row = s.vec(4, 0.5, 1.5);
    let scalar = vec![1.3];
    gradcheck(
        "mul vs column",
        &[(3, 4, a.clone()), (3, 1, col)],
        1e-6,
        |tape, ids| {
            let out = tape.mul(ids[0], ids[1]).unwrap();
            spread_sum(tape, out)
        },
    );
    gradcheck(
        "div vs row",
        &[(3, 4, a.clone()), (1, 4, row)],
        1e-6,
        |tape, ids| {
            let out = tape.div(ids[0], ids[1]).unwrap();
            spread_sum(tape, out)
        },
    );
    gradcheck(
        "add vs scalar",
        &[(3, 4, a), (1, 1, scalar)],
        1e-6,
        |tape, ids| {
            let out = tape.add(ids[0], ids[1]).unwrap();
            spread_sum(tape, out)
        },
    );
}

type UnaryCase = (&'static str, Box<dyn Fn(&mut Tape, TensorId) -> TensorId>, Vec<f64>);

#[test]
fn unary_ops_match_finite_differences() {
    let mut s = Stream::new(3);
    // domains: atanh needs |x| < 1, log/sqrt need x > 0; all away from kinks
    let smooth = s.vec(10, 0.6, 0.0);
    let positive = s.vec(10, 0.4, 1.2);
    let cases: Vec<UnaryCase> = vec![
        ("tanh", Box::new(|t: &mut Tape, x| t.tanh(x).unwrap()), smooth.clone()),
        ("atanh", Box::new(|t: &mut Tape, x| t.atanh(x).unwrap()), smooth.clone()),
        ("exp", Box::new(|t: &mut Tape, x| t.exp(x).unwrap()), smooth.clone()),
        ("log", Box::new(|t: &mut Tape, x| t.log(x).unwrap()), positive.clone()),
        ("sqrt", Box::new(|t: &mut Tape, x| t.sqrt(x).unwrap()), positive.clone()),
        ("sigmoid", Box::new(|t: &mut Tape, x| t.sigmoid(x).unwrap()), smooth.clone()),
        ("softplus", Box::new(|t: &mut Tape, x| t.softplus(x).unwrap()), smooth.clone()),
        ("neg", Box::new(|t: &mut Tape, x| t.neg(x).unwrap()), smooth.clone()),
        (
            "add_scalar",
            Box::new(|t: &mut Tape, x| t.add_scalar(x, 0.7).unwrap()),
            smooth.clone(),
        ),
        (
            "mul_scalar",
            Box::new(|t: &mut Tape, x| t.mul_scalar(x, -1.4).unwrap()),
            smooth.clone(),
        ),
        (
            "relu away from kink",
            Box::new(|t: &mut Tape, x| t.relu(x).unwrap()),
            s.vec(10, 0.4, 1.0),
        ),
        (
            "clamp strictly inside",
            Box::new(|t: &mut Tape, x| t.clamp(x, -2.0, 2.0).unwrap()),
            smooth.clone(),
        ),
    ];
    for (name, op, data) in cases {
        gradcheck(name, &[(2, 5, data)], 1e-6, move |tape, ids| {
            let out = op(tape, ids[0]);
            spread_sum(tape, out)
        });
    }
}

#[test]
fn tanh_gradient_at_fixed_point_matches() {
    // d/dx tanh at 0.3 against the central difference
    gradcheck("tanh@0.3", &[(1, 1, vec![0.3])], 1e-7, |tape, ids| {
        tape.tanh(ids[0]).unwrap()
    });
}

#[test]
fn clamp_gradient_is_zero_outside_interval() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::new(1, 3, vec![-3.0, 0.5, 4.0]).unwrap().with_grad());
    let c = tape.clamp(x, -1.0, 1.0).unwrap();
    let loss = tape.sum(c).unwrap();
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.get_or_zero(x).data, vec![0.0, 1.0, 0.0]);
}

#[test]
fn matmul_and_reductions_match_finite_differences() {
    let mut s = Stream::new(4);
    let a = s.vec(6, 0.9, 0.0);
    let b = s.vec(8, 0.9, 0.0);
    gradcheck(
        "matmul",
        &[(3, 2, a.clone()), (2, 4, b)],
        1e-6,
        |tape, ids| {
            let out = tape.matmul(ids[0], ids[1]).unwrap();
            spread_sum(tape, out)
        },
    );
    for (name, which) in [("sum", 0usize), ("mean", 1), ("row_sum", 2), ("l2_norm_rows", 3)] {
        gradcheck(name, &[(3, 2, a.clone())], 1e-6, move |tape, ids| {
            let out = match which {
                0 => tape.sum(ids[0]).unwrap(),
                1 => tape.mean(ids[0]).unwrap(),
                2 => tape.row_sum(ids[0]).unwrap(),
                _ => tape.l2_norm_rows(ids[0]).unwrap(),
            };
            spread_sum(tape, out)
        });
    }
}

#[test]
fn gather_concat_softmax_match_finite_differences() {
    let mut s = Stream::new(5);
    let a = s.vec(8, 0.9, 0.0);
    let b = s.vec(6, 0.9, 0.0);
    gradcheck(
        "gather_rows with repeats",
        &[(4, 2, a.clone())],
        1e-6,
        |tape, ids| {
            let out = tape
                .gather_rows(ids[0], Rc::new(vec![2, 0, 2, 3]))
                .unwrap();
            spread_sum(tape, out)
        },
    );
    gradcheck(
        "concat_cols",
        &[(3, 2, s.vec(6, 0.9, 0.0)), (3, 2, b)],
        1e-6,
        |tape, ids| {
            let out = tape.concat_cols(ids[0], ids[1]).unwrap();
            spread_sum(tape, out)
        },
    );
    gradcheck("log_softmax_rows", &[(2, 4, a)], 1e-6, |tape, ids| {
        let out = tape.log_softmax_rows(ids[0]).unwrap();
        spread_sum(tape, out)
    });
}

#[test]
fn sparse_matmul_matches_finite_differences() {
    let sparse = Rc::new(
        SparseMatrix::from_rows(
            3,
            vec![
                vec![(0, 0.5), (1, 0.5)],
                vec![(1, 1.0)],
                vec![(0, 0.2), (2, 0.8)],
            ],
        )
        .unwrap(),
    );
    let mut s = Stream::new(6);
    let x = s.vec(6, 0.9, 0.0);
    gradcheck("sparse_matmul", &[(3, 2, x)], 1e-6, move |tape, ids| {
        let out = tape.sparse_matmul(Rc::clone(&sparse), ids[0]).unwrap();
        spread_sum(tape, out)
    });
}

#[test]
fn chain_rule_fused_equals_stepwise() {
    // sigmoid(a·b + tanh(a)) summed: fused on one tape vs manual chaining
    // of intermediate gradients on separate tapes.
    let mut s = Stream::new(7);
    let a_data = s.vec(4, 0.7, 0.0);
    let b_data = s.vec(4, 0.7, 0.5);

    let mut tape = Tape::new();
    let a = tape.leaf(Tensor::new(2, 2, a_data.clone()).unwrap().with_grad());
    let b = tape.leaf(Tensor::new(2, 2, b_data.clone()).unwrap().with_grad());
    let ab = tape.mul(a, b).unwrap();
    let ta = tape.tanh(a).unwrap();
    let inner = tape.add(ab, ta).unwrap();
    let sg = tape.sigmoid(inner).unwrap();
    let loss = tape.sum(sg).unwrap();
    let grads = tape.backward(loss).unwrap();
    let fused_a = grads.get_or_zero(a);
    let fused_b = grads.get_or_zero(b);

    // stepwise: dL/dinner from a second tape, then apply the chain by hand
    let mut t2 = Tape::new();
    let inner_leaf = {
        let inner_vals = tape.value(inner).clone();
        t2.leaf(Tensor::new(2, 2, inner_vals.data).unwrap().with_grad())
    };
    let sg2 = t2.sigmoid(inner_leaf).unwrap();
    let loss2 = t2.sum(sg2).unwrap();
    let g2 = t2.backward(loss2).unwrap();
    let d_inner = g2.get_or_zero(inner_leaf);

    for e in 0..4 {
        let expect_a = d_inner.data[e] * (b_data[e] + (1.0 - tape.value(ta).data[e].powi(2)));
        let expect_b = d_inner.data[e] * a_data[e];
        assert!(rel_err(fused_a.data[e], expect_a) < 1e-12);
        assert!(rel_err(fused_b.data[e], expect_b) < 1e-12);
    }
}

#[test]
fn off_path_leaves_get_zero_gradient() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::new(2, 1, vec![1.0, 2.0]).unwrap().with_grad());
    let y = tape.leaf(Tensor::new(2, 1, vec![3.0, 4.0]).unwrap().with_grad());
    let loss = tape.sum(x).unwrap();
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.get_or_zero(x).data, vec![1.0, 1.0]);
    assert!(grads.get(y).is_none());
    assert_eq!(grads.get_or_zero(y).data, vec![0.0, 0.0]);
}

#[test]
fn half_norm_squared_gradient_is_input() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::new(1, 3, vec![0.5, -1.5, 2.0]).unwrap().with_grad());
    let sq = tape.mul(x, x).unwrap();
    let s = tape.sum(sq).unwrap();
    let loss = tape.mul_scalar(s, 0.5).unwrap();
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.get_or_zero(x).data, vec![0.5, -1.5, 2.0]);
}

#[test]
fn non_scalar_loss_rejected() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::new(2, 2, vec![1.0; 4]).unwrap().with_grad());
    assert!(tape.backward(x).is_err());
}

#[test]
fn non_finite_forward_reports_operation() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(1, 1, vec![-1.0]).unwrap());
    match tape.log(x) {
        Err(dhypr_core::Error::NonFinite { op }) => assert_eq!(op, "log"),
        other => panic!("expected NonFinite, got {other:?}"),
    }
}
