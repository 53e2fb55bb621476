//! Parameter containers for every sublayer, generic over the storage type:
//! `ModelParams<Tensor>` holds trained weights, `ModelParams<Var>` holds the
//! same tree bound onto a tape for one forward/backward pass.
//!
//! `visit` fixes the canonical traversal order used by checkpoints, the
//! optimizer state and gradient collection; `map` reproduces that order.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{AblationVariant, ModelConfig};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Affine<T> {
    pub w: T,
    pub b: T,
}

#[derive(Debug, Clone)]
pub struct Conv<T> {
    pub w: T,
    pub b: T,
}

#[derive(Debug, Clone)]
pub struct LayerNormParams<T> {
    pub gain: T,
    pub bias: T,
}

#[derive(Debug, Clone)]
pub struct TcnLayer<T> {
    pub conv1: Conv<T>,
    pub conv2: Conv<T>,
    pub dilation: usize,
}

#[derive(Debug, Clone)]
pub struct TcnParams<T> {
    pub layers: Vec<TcnLayer<T>>,
}

/// One SCN layer: three chained circular convolution blocks of one kernel width.
#[derive(Debug, Clone)]
pub struct ScnLayer<T> {
    pub blocks: Vec<Conv<T>>,
    pub kernel: usize,
}

#[derive(Debug, Clone)]
pub struct ScnParams<T> {
    pub layers: Vec<ScnLayer<T>>,
}

#[derive(Debug, Clone)]
pub struct StcnParams<T> {
    pub tcn: TcnParams<T>,
    pub scn: ScnParams<T>,
    pub mlp1: Affine<T>,
    pub mlp2: Affine<T>,
}

#[derive(Debug, Clone)]
pub struct AttnParams<T> {
    pub w_q: T,
    pub w_k: T,
    pub w_v: T,
    pub ln: LayerNormParams<T>,
}

#[derive(Debug, Clone)]
pub struct MaskBlock<T> {
    pub w: T,
    pub mlp3: Affine<T>,
    pub mlp4: Affine<T>,
    pub ln_hid: LayerNormParams<T>,
}

#[derive(Debug, Clone)]
pub struct MaskParams<T> {
    pub ln_emb: LayerNormParams<T>,
    pub blocks: Vec<MaskBlock<T>>,
}

#[derive(Debug, Clone)]
pub struct FfnCore<T> {
    pub mlp5: Affine<T>,
    pub mlp6: Affine<T>,
}

/// The temporal component at the front of a block.
#[derive(Debug, Clone)]
pub enum Embedding<T> {
    Stcn(StcnParams<T>),
    Plain(Affine<T>),
    AffineFfn { embed: Affine<T>, ffn: FfnCore<T> },
}

#[derive(Debug, Clone)]
pub struct BlockParams<T> {
    pub embed: Embedding<T>,
    pub attn: AttnParams<T>,
    pub mask: Option<MaskParams<T>>,
    pub ffn: FfnCore<T>,
    pub ffn_ln: LayerNormParams<T>,
}

#[derive(Debug, Clone)]
pub struct ModelParams<T> {
    pub blocks: Vec<BlockParams<T>>,
    pub head: Affine<T>,
}

// ── traversal ────────────────────────────────────────────────────────

macro_rules! pair_visitors {
    ($ty:ident, $a:ident, $an:literal, $b:ident, $bn:literal) => {
        impl<T> $ty<T> {
            pub fn visit<'a>(&'a self, name: &str, f: &mut impl FnMut(String, &'a T)) {
                f(format!("{name}.{}", $an), &self.$a);
                f(format!("{name}.{}", $bn), &self.$b);
            }
            pub fn visit_mut<'a>(&'a mut self, name: &str, f: &mut impl FnMut(String, &'a mut T)) {
                f(format!("{name}.{}", $an), &mut self.$a);
                f(format!("{name}.{}", $bn), &mut self.$b);
            }
        }
    };
}

pair_visitors!(Affine, w, "w", b, "b");
pair_visitors!(Conv, w, "w", b, "b");
pair_visitors!(LayerNormParams, gain, "gain", bias, "bias");

impl<T> ModelParams<T> {
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(String, &'a T)) {
        for (bi, block) in self.blocks.iter().enumerate() {
            let p = format!("block{bi}");
            match &block.embed {
                Embedding::Stcn(s) => {
                    for (li, layer) in s.tcn.layers.iter().enumerate() {
                        layer.conv1.visit(&format!("{p}.tcn{li}.conv1"), f);
                        layer.conv2.visit(&format!("{p}.tcn{li}.conv2"), f);
                    }
                    for (li, layer) in s.scn.layers.iter().enumerate() {
                        for (ci, c) in layer.blocks.iter().enumerate() {
                            c.visit(&format!("{p}.scn{li}.conv{ci}"), f);
                        }
                    }
                    s.mlp1.visit(&format!("{p}.mlp1"), f);
                    s.mlp2.visit(&format!("{p}.mlp2"), f);
                }
                Embedding::Plain(a) => a.visit(&format!("{p}.embed"), f),
                Embedding::AffineFfn { embed, ffn } => {
                    embed.visit(&format!("{p}.embed"), f);
                    ffn.mlp5.visit(&format!("{p}.embed_ffn.mlp_in"), f);
                    ffn.mlp6.visit(&format!("{p}.embed_ffn.mlp_out"), f);
                }
            }
            f(format!("{p}.attn.w_q"), &block.attn.w_q);
            f(format!("{p}.attn.w_k"), &block.attn.w_k);
            f(format!("{p}.attn.w_v"), &block.attn.w_v);
            block.attn.ln.visit(&format!("{p}.attn.ln"), f);
            if let Some(mask) = &block.mask {
                mask.ln_emb.visit(&format!("{p}.mask.ln_emb"), f);
                for (mi, mb) in mask.blocks.iter().enumerate() {
                    f(format!("{p}.mask{mi}.w"), &mb.w);
                    mb.mlp3.visit(&format!("{p}.mask{mi}.mlp3"), f);
                    mb.mlp4.visit(&format!("{p}.mask{mi}.mlp4"), f);
                    mb.ln_hid.visit(&format!("{p}.mask{mi}.ln_hid"), f);
                }
            }
            block.ffn.mlp5.visit(&format!("{p}.ffn.mlp5"), f);
            block.ffn.mlp6.visit(&format!("{p}.ffn.mlp6"), f);
            block.ffn_ln.visit(&format!("{p}.ffn_ln"), f);
        }
        self.head.visit("head", f);
    }

    pub fn visit_mut<'a>(&'a mut self, f: &mut impl FnMut(String, &'a mut T)) {
        for (bi, block) in self.blocks.iter_mut().enumerate() {
            let p = format!("block{bi}");
            match &mut block.embed {
                Embedding::Stcn(s) => {
                    for (li, layer) in s.tcn.layers.iter_mut().enumerate() {
                        layer.conv1.visit_mut(&format!("{p}.tcn{li}.conv1"), f);
                        layer.conv2.visit_mut(&format!("{p}.tcn{li}.conv2"), f);
                    }
                    for (li, layer) in s.scn.layers.iter_mut().enumerate() {
                        for (ci, c) in layer.blocks.iter_mut().enumerate() {
                            c.visit_mut(&format!("{p}.scn{li}.conv{ci}"), f);
                        }
                    }
                    s.mlp1.visit_mut(&format!("{p}.mlp1"), f);
                    s.mlp2.visit_mut(&format!("{p}.mlp2"), f);
                }
                Embedding::Plain(a) => a.visit_mut(&format!("{p}.embed"), f),
                Embedding::AffineFfn { embed, ffn } => {
                    embed.visit_mut(&format!("{p}.embed"), f);
                    ffn.mlp5.visit_mut(&format!("{p}.embed_ffn.mlp_in"), f);
                    ffn.mlp6.visit_mut(&format!("{p}.embed_ffn.mlp_out"), f);
                }
            }
            f(format!("{p}.attn.w_q"), &mut block.attn.w_q);
            f(format!("{p}.attn.w_k"), &mut block.attn.w_k);
            f(format!("{p}.attn.w_v"), &mut block.attn.w_v);
            block.attn.ln.visit_mut(&format!("{p}.attn.ln"), f);
            if let Some(mask) = &mut block.mask {
                mask.ln_emb.visit_mut(&format!("{p}.mask.ln_emb"), f);
                for (mi, mb) in mask.blocks.iter_mut().enumerate() {
                    f(format!("{p}.mask{mi}.w"), &mut mb.w);
                    mb.mlp3.visit_mut(&format!("{p}.mask{mi}.mlp3"), f);
                    mb.mlp4.visit_mut(&format!("{p}.mask{mi}.mlp4"), f);
                    mb.ln_hid.visit_mut(&format!("{p}.mask{mi}.ln_hid"), f);
                }
            }
            block.ffn.mlp5.visit_mut(&format!("{p}.ffn.mlp5"), f);
            block.ffn.mlp6.visit_mut(&format!("{p}.ffn.mlp6"), f);
            block.ffn_ln.visit_mut(&format!("{p}.ffn_ln"), f);
        }
        self.head.visit_mut("head", f);
    }

    /// Same traversal order as `visit`, producing a parallel tree.
    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> ModelParams<U> {
        let map_affine = |a: &Affine<T>, f: &mut dyn FnMut(&T) -> U| Affine {
            w: f(&a.w),
            b: f(&a.b),
        };
        let map_conv = |c: &Conv<T>, f: &mut dyn FnMut(&T) -> U| Conv {
            w: f(&c.w),
            b: f(&c.b),
        };
        let map_ln = |l: &LayerNormParams<T>, f: &mut dyn FnMut(&T) -> U| LayerNormParams {
            gain: f(&l.gain),
            bias: f(&l.bias),
        };
        ModelParams {
            blocks: self
                .blocks
                .iter()
                .map(|block| BlockParams {
                    embed: match &block.embed {
                        Embedding::Stcn(s) => Embedding::Stcn(StcnParams {
                            tcn: TcnParams {
                                layers: s
                                    .tcn
                                    .layers
                                    .iter()
                                    .map(|l| TcnLayer {
                                        conv1: map_conv(&l.conv1, f),
                                        conv2: map_conv(&l.conv2, f),
                                        dilation: l.dilation,
                                    })
                                    .collect(),
                            },
                            scn: ScnParams {
                                layers: s
                                    .scn
                                    .layers
                                    .iter()
                                    .map(|l| ScnLayer {
                                        blocks: l.blocks.iter().map(|c| map_conv(c, f)).collect(),
                                        kernel: l.kernel,
                                    })
                                    .collect(),
                            },
                            mlp1: map_affine(&s.mlp1, f),
                            mlp2: map_affine(&s.mlp2, f),
                        }),
                        Embedding::Plain(a) => Embedding::Plain(map_affine(a, f)),
                        Embedding::AffineFfn { embed, ffn } => Embedding::AffineFfn {
                            embed: map_affine(embed, f),
                            ffn: FfnCore {
                                mlp5: map_affine(&ffn.mlp5, f),
                                mlp6: map_affine(&ffn.mlp6, f),
                            },
                        },
                    },
                    attn: AttnParams {
                        w_q: f(&block.attn.w_q),
                        w_k: f(&block.attn.w_k),
                        w_v: f(&block.attn.w_v),
                        ln: map_ln(&block.attn.ln, f),
                    },
                    mask: block.mask.as_ref().map(|mask| MaskParams {
                        ln_emb: map_ln(&mask.ln_emb, f),
                        blocks: mask
                            .blocks
                            .iter()
                            .map(|mb| MaskBlock {
                                w: f(&mb.w),
                                mlp3: map_affine(&mb.mlp3, f),
                                mlp4: map_affine(&mb.mlp4, f),
                                ln_hid: map_ln(&mb.ln_hid, f),
                            })
                            .collect(),
                    }),
                    ffn: FfnCore {
                        mlp5: map_affine(&block.ffn.mlp5, f),
                        mlp6: map_affine(&block.ffn.mlp6, f),
                    },
                    ffn_ln: map_ln(&block.ffn_ln, f),
                })
                .collect(),
            head: map_affine(&self.head, f),
        }
    }

    pub fn flatten(&self) -> Vec<(String, &T)> {
        let mut out = Vec::new();
        self.visit(&mut |name, t| out.push((name, t)));
        out
    }

    pub fn flatten_mut(&mut self) -> Vec<(String, &mut T)> {
        let mut out = Vec::new();
        self.visit_mut(&mut |name, t| out.push((name, t)));
        out
    }
}

impl<T: Clone> ModelParams<T> {
    /// Rebuilds the tree from values given in canonical traversal order;
    /// the inverse of `flatten` for a tree of this shape.
    pub fn with_flat(&self, values: &[T]) -> crate::error::Result<ModelParams<T>> {
        let expect = self.flatten().len();
        if values.len() != expect {
            return Err(crate::error::Error::usage(format!(
                "with_flat: expected {expect} values, got {}",
                values.len()
            )));
        }
        let mut it = values.iter();
        Ok(self.map(&mut |_| it.next().unwrap().clone()))
    }
}

impl ModelParams<Tensor> {
    pub fn count(&self) -> usize {
        self.flatten().iter().map(|(_, t)| t.numel()).sum()
    }
}

// ── initialization ───────────────────────────────────────────────────

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn uniform(&mut self, shape: Vec<usize>, fan_in: usize) -> Tensor {
        let bound = (1.0 / fan_in as f64).sqrt();
        let numel: usize = shape.iter().product();
        let data = (0..numel)
            .map(|_| self.rng.random_range(-bound..bound))
            .collect();
        Tensor { shape, data }
    }

    fn affine(&mut self, d_in: usize, d_out: usize) -> Affine<Tensor> {
        Affine {
            w: self.uniform(vec![d_in, d_out], d_in),
            b: Tensor::zeros(vec![d_out]),
        }
    }

    fn conv(&mut self, c_out: usize, c_in: usize, k: usize) -> Conv<Tensor> {
        Conv {
            w: self.uniform(vec![c_out, c_in, k], c_in * k),
            b: Tensor::zeros(vec![c_out]),
        }
    }

    fn layer_norm(&mut self, width: usize) -> LayerNormParams<Tensor> {
        LayerNormParams {
            gain: Tensor::full(vec![width], 1.0),
            bias: Tensor::zeros(vec![width]),
        }
    }
}

fn init_stcn(init: &mut Init, cfg: &ModelConfig, l_in: usize) -> StcnParams<Tensor> {
    let m = cfg.variables;
    let tcn = TcnParams {
        layers: (0..cfg.tcn_layers)
            .map(|l| TcnLayer {
                conv1: init.conv(m, m, cfg.tcn_kernel),
                conv2: init.conv(m, m, cfg.tcn_kernel),
                dilation: 1 << l,
            })
            .collect(),
    };
    let d_s = cfg.scn_channels;
    let scn = ScnParams {
        layers: cfg
            .scn_kernels_clamped()
            .iter()
            .enumerate()
            .map(|(li, &k)| {
                let c_in0 = if li == 0 { l_in } else { d_s };
                ScnLayer {
                    blocks: vec![
                        init.conv(d_s, c_in0, k),
                        init.conv(d_s, d_s, k),
                        init.conv(d_s, d_s, k),
                    ],
                    kernel: k,
                }
            })
            .collect(),
    };
    StcnParams {
        tcn,
        scn,
        mlp1: init.affine(l_in, cfg.embed / 2),
        mlp2: init.affine(d_s, cfg.embed / 2),
    }
}

fn init_mask(init: &mut Init, cfg: &ModelConfig) -> MaskParams<Tensor> {
    let f = cfg.embed;
    let d_a = cfg.d_a();
    MaskParams {
        ln_emb: init.layer_norm(f),
        blocks: (0..cfg.mask_blocks)
            .map(|_| MaskBlock {
                w: init.uniform(vec![f, f], f),
                mlp3: init.affine(f, d_a),
                mlp4: init.affine(d_a, f),
                ln_hid: init.layer_norm(f),
            })
            .collect(),
    }
}

/// Seeded deterministic initialization: weights uniform in ±sqrt(1/fan_in),
/// biases zero, layer-norm gain 1 / bias 0.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> crate::error::Result<ModelParams<Tensor>> {
    cfg.validate()?;
    let mut init = Init {
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let f = cfg.embed;
    let d_ff = cfg.d_ff();
    let blocks = (0..cfg.blocks)
        .map(|bi| {
            let l_in = cfg.block_input_width(bi);
            let embed = match cfg.variant {
                AblationVariant::NoStcn => Embedding::Plain(init.affine(l_in, f)),
                AblationVariant::FfnForStcn => Embedding::AffineFfn {
                    embed: init.affine(l_in, f),
                    ffn: FfnCore {
                        mlp5: init.affine(f, d_ff),
                        mlp6: init.affine(d_ff, f),
                    },
                },
                _ => Embedding::Stcn(init_stcn(&mut init, cfg, l_in)),
            };
            let mask = match cfg.variant {
                AblationVariant::FullAttention => None,
                _ => Some(init_mask(&mut init, cfg)),
            };
            BlockParams {
                embed,
                attn: AttnParams {
                    w_q: init.uniform(vec![f, f], f),
                    w_k: init.uniform(vec![f, f], f),
                    w_v: init.uniform(vec![f, f], f),
                    ln: init.layer_norm(f),
                },
                mask,
                ffn: FfnCore {
                    mlp5: init.affine(f, d_ff),
                    mlp6: init.affine(d_ff, f),
                },
                ffn_ln: init.layer_norm(f),
            }
        })
        .collect();
    Ok(ModelParams {
        blocks,
        head: init.affine(f, cfg.horizon),
    })
}

/// Parameter count as a pure function of the configuration.
pub fn param_count(cfg: &ModelConfig) -> crate::error::Result<usize> {
    Ok(init_params(cfg, 0)?.count())
}
