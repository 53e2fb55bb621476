//! Sequence and Temporal Convolutional Network: a causal temporal branch and
//! a cross-variable branch, each followed by an affine map, concatenated into
//! an M x F embedding.

use crate::config::{ModelConfig, ScnPadding};
use crate::error::{Error, Result};
use crate::params::{ScnParams, StcnParams, TcnParams};
use crate::tape::{Tape, Var};

/// Temporal branch: stacked causal dilated convolution layers, each
/// conv -> ReLU -> conv -> ReLU plus an identity residual. Channel count is
/// preserved, so the output shape equals the input shape.
pub fn tcn_forward(tape: &mut Tape, x: Var, p: &TcnParams<Var>) -> Result<Var> {
    let channels = tape.value(x).shape[0];
    let mut h = x;
    for layer in &p.layers {
        let w_out = tape.value(layer.conv1.w).shape[0];
        if w_out != channels {
            return Err(Error::config(format!(
                "tcn layer must preserve the channel count {channels}, got {w_out}"
            )));
        }
        let c1 = tape.causal_dilated_conv1d(h, layer.conv1.w, layer.conv1.b, layer.dilation)?;
        let a1 = tape.relu(c1);
        let c2 = tape.causal_dilated_conv1d(a1, layer.conv2.w, layer.conv2.b, layer.dilation)?;
        let a2 = tape.relu(c2);
        h = tape.add(h, a2)?;
    }
    Ok(h)
}

/// Cross-variable branch. Input is the transposed window (L_in channels over
/// a length-M variable axis); each layer chains three circular convolution
/// blocks, each conv -> ReLU. Output is d_s x M.
pub fn scn_forward(
    tape: &mut Tape,
    x_t: Var,
    p: &ScnParams<Var>,
    padding: ScnPadding,
) -> Result<Var> {
    let m = tape.value(x_t).shape[1];
    let mut h = x_t;
    for layer in &p.layers {
        if layer.kernel > m {
            return Err(Error::config(format!(
                "scn kernel width {} exceeds variable count {m}; \
                 set the kernel width between sequences to 1 for univariate data",
                layer.kernel
            )));
        }
        for block in &layer.blocks {
            let c = tape.circular_conv1d(h, block.w, block.b, padding == ScnPadding::Zero)?;
            h = tape.relu(c);
        }
    }
    Ok(h)
}

/// Full STCN: columns 0..F/2 of the output are the temporal branch, columns
/// F/2..F the sequence branch.
pub fn stcn_forward(
    tape: &mut Tape,
    x: Var,
    p: &StcnParams<Var>,
    cfg: &ModelConfig,
) -> Result<Var> {
    if cfg.embed % 2 != 0 {
        return Err(Error::config(format!("embed must be even, got {}", cfg.embed)));
    }
    let t = tcn_forward(tape, x, &p.tcn)?;
    let branch1 = tape.affine(t, p.mlp1.w, p.mlp1.b)?;

    let xt = tape.transpose(x)?;
    let s = scn_forward(tape, xt, &p.scn, cfg.scn_padding)?;
    let st = tape.transpose(s)?;
    let branch2 = tape.affine(st, p.mlp2.w, p.mlp2.b)?;

    tape.concat_cols(branch1, branch2)
}
