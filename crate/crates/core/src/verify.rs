//! Self-verification: a named gradient-check suite covering every
//! differentiable operation and the full model, reusable from the
//! command line and from acceptance tests.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::error::Result;
use crate::gradcheck::finite_diff_check;
use crate::model::forward_on_tape;
use crate::params::{init_params, ModelParams};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// One named check and the max relative error it produced.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: String,
    pub max_rel_err: f64,
}

impl CheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let numel: usize = shape.iter().product();
    Tensor {
        shape,
        data: (0..numel)
            .map(|_| {
                // keep magnitudes away from zero so ReLU kinks stay clear of
                // the finite-difference step
                let v: f64 = rng.random_range(-1.0..1.0);
                v + 0.25 * v.signum()
            })
            .collect(),
    }
}

/// Gradient-checks sum(square(build(inputs))) for an arbitrary tape program.
fn check_op(
    h: f64,
    inputs: &[Tensor],
    build: impl Fn(&mut Tape, &[Var]) -> Result<Var>,
) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = build(&mut tape, &vars)?;
    let sq = tape.square(out);
    let loss = tape.sum_all(sq);
    tape.backward(loss)?;
    let grads: Vec<Tensor> = vars
        .iter()
        .map(|&v| {
            tape.grad(v)
                .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape.clone()))
        })
        .collect();
    finite_diff_check(inputs, &grads, h, |p| {
        let mut t = Tape::new();
        let vs: Vec<Var> = p.iter().map(|x| t.constant(x.clone())).collect();
        let out = build(&mut t, &vs)?;
        let sq = t.square(out);
        let l = t.sum_all(sq);
        Ok(t.value(l).data[0])
    })
}

/// Gradient-checks the full model: sum(square(forward(x))) against central
/// differences over every parameter. Parameters are jittered away from
/// exact zero so zero-padded pre-activations do not sit on the ReLU kink.
pub fn model_check(cfg: &ModelConfig, seed: u64, h: f64) -> Result<f64> {
    let mut params = init_params(cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
    for (_, t) in params.flatten_mut() {
        for v in &mut t.data {
            *v += rng.random_range(0.02..0.1)
                * if rng.random_range(0.0..1.0) < 0.5 { -1.0 } else { 1.0 };
        }
    }
    let x = rand_tensor(&mut rng, vec![cfg.variables, cfg.lookback]);
    model_check_at(cfg, &params, &x, h)
}

fn model_check_at(
    cfg: &ModelConfig,
    params: &ModelParams<Tensor>,
    x: &Tensor,
    h: f64,
) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = params.map(&mut |t| tape.leaf(t.clone(), true));
    let xv = tape.constant(x.clone());
    let out = forward_on_tape(&mut tape, xv, &bound, cfg, &mut None)?;
    let sq = tape.square(out);
    let loss = tape.sum_all(sq);
    tape.backward(loss)?;
    let flat: Vec<Tensor> = params.flatten().into_iter().map(|(_, t)| t.clone()).collect();
    let grads: Vec<Tensor> = bound
        .flatten()
        .into_iter()
        .map(|(_, v)| {
            tape.grad(*v)
                .unwrap_or_else(|| Tensor::zeros(tape.value(*v).shape.clone()))
        })
        .collect();
    finite_diff_check(&flat, &grads, h, |vals| {
        let p = params.with_flat(vals)?;
        let mut t = Tape::new();
        let b = p.map(&mut |ten| t.constant(ten.clone()));
        let xv = t.constant(x.clone());
        let out = forward_on_tape(&mut t, xv, &b, cfg, &mut None)?;
        let sq = t.square(out);
        let l = t.sum_all(sq);
        Ok(t.value(l).data[0])
    })
}

/// Runs the full named suite: one check per differentiable operation, then
/// the composed model on `cfg`. Returns one report per check.
pub fn gradient_suite(cfg: &ModelConfig, h: f64) -> Result<Vec<CheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut reports = Vec::new();
    let push = |name: &str, err: f64, reports: &mut Vec<CheckReport>| {
        reports.push(CheckReport { name: name.to_string(), max_rel_err: err });
    };

    let a34 = rand_tensor(&mut rng, vec![3, 4]);
    let b42 = rand_tensor(&mut rng, vec![4, 2]);
    push("matmul", check_op(h, &[a34.clone(), b42], |t, v| t.matmul(v[0], v[1]))?, &mut reports);

    let p = rand_tensor(&mut rng, vec![3, 5]);
    let q = rand_tensor(&mut rng, vec![3, 5]);
    push("add", check_op(h, &[p.clone(), q.clone()], |t, v| t.add(v[0], v[1]))?, &mut reports);
    push("sub", check_op(h, &[p.clone(), q.clone()], |t, v| t.sub(v[0], v[1]))?, &mut reports);
    push("hadamard", check_op(h, &[p.clone(), q], |t, v| t.hadamard(v[0], v[1]))?, &mut reports);
    push("relu", check_op(h, &[p.clone()], |t, v| Ok(t.relu(v[0])))?, &mut reports);
    push("scale", check_op(h, &[p.clone()], |t, v| Ok(t.scale(v[0], -1.7)))?, &mut reports);
    push("softmax_rows", check_op(h, &[p.clone()], |t, v| t.softmax_rows(v[0]))?, &mut reports);

    let gain = rand_tensor(&mut rng, vec![5]);
    let bias = rand_tensor(&mut rng, vec![5]);
    push(
        "layer_norm_rows",
        check_op(h, &[p.clone(), gain, bias], |t, v| t.layer_norm_rows(v[0], v[1], v[2], 1e-8))?,
        &mut reports,
    );

    let x = rand_tensor(&mut rng, vec![3, 10]);
    let w = rand_tensor(&mut rng, vec![2, 3, 3]);
    let cb = rand_tensor(&mut rng, vec![2]);
    push(
        "causal_dilated_conv1d",
        check_op(h, &[x.clone(), w.clone(), cb.clone()], |t, v| {
            t.causal_dilated_conv1d(v[0], v[1], v[2], 2)
        })?,
        &mut reports,
    );
    let xc = rand_tensor(&mut rng, vec![3, 6]);
    let wc = rand_tensor(&mut rng, vec![2, 3, 3]);
    push(
        "circular_conv1d",
        check_op(h, &[xc.clone(), wc.clone(), cb.clone()], |t, v| {
            t.circular_conv1d(v[0], v[1], v[2], false)
        })?,
        &mut reports,
    );
    push(
        "circular_conv1d_zero_pad",
        check_op(h, &[xc, wc, cb], |t, v| t.circular_conv1d(v[0], v[1], v[2], true))?,
        &mut reports,
    );

    let c1 = rand_tensor(&mut rng, vec![3, 2]);
    let c2 = rand_tensor(&mut rng, vec![3, 4]);
    let rb = rand_tensor(&mut rng, vec![3]);
    push(
        "concat_transpose_row_bias",
        check_op(h, &[c1, c2, rb], |t, v| {
            let c = t.concat_cols(v[0], v[1])?;
            let ct = t.transpose(c)?;
            t.add_row_bias(ct, v[2])
        })?,
        &mut reports,
    );

    let y = rand_tensor(&mut rng, vec![3, 4]);
    let yh = rand_tensor(&mut rng, vec![3, 4]);
    push("mse_loss", check_op(h, &[y.clone(), yh], |t, v| t.mse_loss(v[0], v[1]))?, &mut reports);
    push(
        "square_mean",
        check_op(h, &[y.clone()], |t, v| {
            let s = t.square(v[0]);
            Ok(t.mean_all(s))
        })?,
        &mut reports,
    );
    push("sum_all", check_op(h, &[y], |t, v| Ok(t.sum_all(v[0])))?, &mut reports);

    push("full_model", model_check(cfg, 17, h)?, &mut reports);
    Ok(reports)
}
