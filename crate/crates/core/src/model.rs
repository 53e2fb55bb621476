//! Full sTransformer: stacked blocks (STCN -> masked attention -> FFN with
//! residual add + norm) and the projection head, plus the ablation variants,
//! dropout, and checkpoint serialization.

use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{AblationVariant, ModelConfig};
use crate::data::Normalizer;
use crate::error::{Error, Result};
use crate::params::{BlockParams, Embedding, FfnCore, ModelParams};
use crate::seqmask::{full_attention, masked_attention, LN_EPS};
use crate::stcn::stcn_forward;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub use crate::params::{init_params, param_count};

/// Seeded dropout masks for one training forward. `None` disables dropout
/// (evaluation, gradient checks, rate 0).
pub struct DropoutCtx {
    pub rate: f64,
    pub rng: ChaCha8Rng,
}

impl DropoutCtx {
    pub fn new(rate: f64, seed: u64) -> Option<Self> {
        if rate > 0.0 {
            Some(DropoutCtx {
                rate,
                rng: ChaCha8Rng::seed_from_u64(seed),
            })
        } else {
            None
        }
    }
}

fn dropout(tape: &mut Tape, h: Var, ctx: &mut Option<DropoutCtx>) -> Result<Var> {
    let Some(ctx) = ctx else { return Ok(h) };
    let shape = tape.value(h).shape.clone();
    let keep = 1.0 - ctx.rate;
    let numel: usize = shape.iter().product();
    let data: Vec<f64> = (0..numel)
        .map(|_| {
            if ctx.rng.random_range(0.0..1.0) < keep {
                1.0 / keep
            } else {
                0.0
            }
        })
        .collect();
    let mask = tape.constant(Tensor { shape, data });
    tape.hadamard(h, mask)
}

fn ffn(tape: &mut Tape, x: Var, p: &FfnCore<Var>) -> Result<Var> {
    let h = tape.affine(x, p.mlp5.w, p.mlp5.b)?;
    let h = tape.relu(h);
    tape.affine(h, p.mlp6.w, p.mlp6.b)
}

fn check_finite(tape: &Tape, v: Var, block: usize, sublayer: &str) -> Result<()> {
    if tape.value(v).all_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!(
            "non-finite activation in block {block}, sublayer {sublayer}"
        )))
    }
}

fn block_forward(
    tape: &mut Tape,
    h_in: Var,
    block: &BlockParams<Var>,
    cfg: &ModelConfig,
    block_idx: usize,
    drop: &mut Option<DropoutCtx>,
) -> Result<Var> {
    let h = match &block.embed {
        Embedding::Stcn(s) => stcn_forward(tape, h_in, s, cfg)?,
        Embedding::Plain(a) => tape.affine(h_in, a.w, a.b)?,
        Embedding::AffineFfn { embed, ffn: f } => {
            let e = tape.affine(h_in, embed.w, embed.b)?;
            ffn(tape, e, f)?
        }
    };
    check_finite(tape, h, block_idx, "embedding")?;
    let h = dropout(tape, h, drop)?;

    let a = match cfg.variant {
        AblationVariant::NoAttention => {
            tape.layer_norm_rows(h, block.attn.ln.gain, block.attn.ln.bias, LN_EPS)?
        }
        AblationVariant::FullAttention => full_attention(tape, h, &block.attn)?,
        _ => {
            let mask = block.mask.as_ref().ok_or_else(|| {
                Error::config("variant requires mask-block parameters, none present")
            })?;
            masked_attention(tape, h, &block.attn, mask, cfg.mask_source)?
        }
    };
    check_finite(tape, a, block_idx, "attention")?;
    let a = dropout(tape, a, drop)?;

    let f = ffn(tape, a, &block.ffn)?;
    let res = tape.add(f, a)?;
    let o = tape.layer_norm_rows(res, block.ffn_ln.gain, block.ffn_ln.bias, LN_EPS)?;
    check_finite(tape, o, block_idx, "ffn")?;
    Ok(o)
}

/// Forward pass mapping an M x T window to an M x K forecast on the tape.
pub fn forward_on_tape(
    tape: &mut Tape,
    x: Var,
    bound: &ModelParams<Var>,
    cfg: &ModelConfig,
    drop: &mut Option<DropoutCtx>,
) -> Result<Var> {
    let xs = tape.value(x).shape.clone();
    if xs != vec![cfg.variables, cfg.lookback] {
        return Err(Error::Dimension {
            op: "forward",
            lhs: vec![cfg.variables, cfg.lookback],
            rhs: xs,
        });
    }
    if !tape.value(x).all_finite() {
        return Err(Error::Numeric("non-finite model input".to_string()));
    }
    let mut h = x;
    for (bi, block) in bound.blocks.iter().enumerate() {
        h = block_forward(tape, h, block, cfg, bi, drop)?;
    }
    tape.affine(h, bound.head.w, bound.head.b)
}

/// Evaluation forward: builds a fresh tape, returns the M x K forecast.
pub fn forward(x: &Tensor, params: &ModelParams<Tensor>, cfg: &ModelConfig) -> Result<Tensor> {
    let mut tape = Tape::new();
    let bound = params.map(&mut |t| tape.constant(t.clone()));
    let xv = tape.constant(x.clone());
    let out = forward_on_tape(&mut tape, xv, &bound, cfg, &mut None)?;
    Ok(tape.value(out).clone())
}

/// Forward on a raw (unnormalized) window: normalize, predict, de-normalize.
pub fn predict_window(
    x_raw: &Tensor,
    params: &ModelParams<Tensor>,
    cfg: &ModelConfig,
    normalizer: &Normalizer,
) -> Result<Tensor> {
    let x = normalizer.transform(x_raw)?;
    let y = forward(&x, params, cfg)?;
    normalizer.inverse(&y)
}

// ── checkpoint ───────────────────────────────────────────────────────

pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned container: config echo plus flat named parameter arrays.
/// JSON with exact shortest-round-trip float rendering, so write-then-read
/// is bit-exact.
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: ModelConfig,
    pub params: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new(cfg: &ModelConfig, params: &ModelParams<Tensor>) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: cfg.clone(),
            params: params
                .flatten()
                .into_iter()
                .map(|(n, t)| (n, t.clone()))
                .collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)
            .map_err(|e| Error::Numeric(format!("checkpoint serialization failed: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| {
            Error::parse(path.display().to_string(), format!("corrupt checkpoint: {e}"))
        })?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::parse(
                path.display().to_string(),
                format!(
                    "checkpoint version mismatch: expected {CHECKPOINT_VERSION}, found {}",
                    ck.version
                ),
            ));
        }
        Ok(ck)
    }

    /// Rebuilds the parameter tree, validating names and shapes.
    pub fn into_params(self) -> Result<(ModelConfig, ModelParams<Tensor>)> {
        let mut params = init_params(&self.config, self.config.seed)?;
        let mut stored: std::collections::HashMap<String, Tensor> =
            self.params.into_iter().collect();
        for (name, slot) in params.flatten_mut() {
            let t = stored.remove(&name).ok_or_else(|| {
                Error::parse("checkpoint", format!("missing parameter `{name}`"))
            })?;
            if t.shape != slot.shape {
                return Err(Error::Dimension {
                    op: "checkpoint::into_params",
                    lhs: slot.shape.clone(),
                    rhs: t.shape,
                });
            }
            *slot = t;
        }
        if let Some(extra) = stored.keys().next() {
            return Err(Error::parse(
                "checkpoint",
                format!("unknown parameter `{extra}`"),
            ));
        }
        Ok((self.config, params))
    }
}
