//! Sequence-guided mask attention: Q/K/V projections, n iterated mask blocks
//! gating the value representation, masked scaled dot-product attention, and
//! the residual add + norm. Tokens index variables, not time steps.

use crate::config::MaskSource;
use crate::error::{Error, Result};
use crate::params::{AttnParams, MaskParams};
use crate::tape::{Tape, Var};

pub const LN_EPS: f64 = 1e-8;

/// Iterated mask blocks producing V_n from V. The gate for every block is
/// derived from the same source tensor via that block's own two-layer MLP;
/// block 1 consumes the layer-normed V, later blocks consume the previous
/// block's output. Each block output is ReLU(LayerNorm((input ⊙ gate)·W_i)).
pub fn seq_mask(tape: &mut Tape, v: Var, source: Var, p: &MaskParams<Var>) -> Result<Var> {
    if p.blocks.is_empty() {
        return Err(Error::config("seq_mask requires at least one mask block"));
    }
    let mut cur = tape.layer_norm_rows(v, p.ln_emb.gain, p.ln_emb.bias, LN_EPS)?;
    for block in &p.blocks {
        let hidden = tape.affine(source, block.mlp3.w, block.mlp3.b)?;
        let hidden = tape.relu(hidden);
        let gate = tape.affine(hidden, block.mlp4.w, block.mlp4.b)?;
        let gated = tape.hadamard(cur, gate)?;
        let mixed = tape.matmul(gated, block.w)?;
        let normed = tape.layer_norm_rows(mixed, block.ln_hid.gain, block.ln_hid.bias, LN_EPS)?;
        cur = tape.relu(normed);
    }
    Ok(cur)
}

fn attention_core(tape: &mut Tape, x: Var, ap: &AttnParams<Var>, values: Var) -> Result<Var> {
    let f = tape.value(x).shape[1];
    let q = tape.matmul(x, ap.w_q)?;
    let k = tape.matmul(x, ap.w_k)?;
    let kt = tape.transpose(k)?;
    let scores = tape.matmul(q, kt)?;
    let scaled = tape.scale(scores, 1.0 / (f as f64).sqrt());
    let weights = tape.softmax_rows(scaled)?;
    let o = tape.matmul(weights, values)?;
    let res = tape.add(o, x)?;
    tape.layer_norm_rows(res, ap.ln.gain, ap.ln.bias, LN_EPS)
}

fn check_square_proj(tape: &Tape, x: Var, ap: &AttnParams<Var>) -> Result<usize> {
    let f = tape.value(x).shape[1];
    let wv = &tape.value(ap.w_v).shape;
    if wv != &vec![f, f] {
        return Err(Error::config(format!(
            "attention requires d_k == F = {f} (the residual O + x forces it), \
             got projection shape {wv:?}"
        )));
    }
    Ok(f)
}

/// Attention with the value path gated by the mask blocks:
/// LayerNorm(softmax(QKᵀ/√d_k)·V_n + x).
pub fn masked_attention(
    tape: &mut Tape,
    x: Var,
    ap: &AttnParams<Var>,
    mp: &MaskParams<Var>,
    mask_source: MaskSource,
) -> Result<Var> {
    check_square_proj(tape, x, ap)?;
    let v = tape.matmul(x, ap.w_v)?;
    let source = match mask_source {
        MaskSource::Value => v,
        MaskSource::Stcn => x,
    };
    let vn = seq_mask(tape, v, source, mp)?;
    attention_core(tape, x, ap, vn)
}

/// Plain scaled dot-product attention (mask blocks bypassed); the
/// component-replacement ablation of the mask mechanism.
pub fn full_attention(tape: &mut Tape, x: Var, ap: &AttnParams<Var>) -> Result<Var> {
    check_square_proj(tape, x, ap)?;
    let v = tape.matmul(x, ap.w_v)?;
    attention_core(tape, x, ap, v)
}
